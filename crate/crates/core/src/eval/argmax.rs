//! Brute-force reference for the beam decoder: score every enumerated
//! program that executes and keep the best.

use std::collections::BTreeMap;

use crate::decoder::{actions_for_query, sequence_logprob, span_text, Action, Scorer, MAX_SPAN_LEN};
use crate::error::Result;
use crate::exec::{execute, ExecConfig};
use crate::sql::{enumerate_programs, Query};
use crate::table::{Example, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct Argmax {
    pub query: Query,
    pub logprob: f64,
    pub actions: Vec<Action>,
    /// Programs enumerated, and how many of them executed.
    pub enumerated: usize,
    pub error_free: usize,
}

/// Distinct question spans (by text) mapped to every span producing them.
pub fn literal_pool(question: &[String]) -> BTreeMap<String, Vec<(usize, usize)>> {
    let mut pool: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for start in 0..question.len() {
        for end in start + 1..=question.len().min(start + MAX_SPAN_LEN) {
            pool.entry(span_text(question, start, end)).or_default().push((start, end));
        }
    }
    pool
}

/// Highest-scoring error-free program, maximizing over every span choice
/// for each literal. Ties go to the smaller action path. `None` when no
/// enumerated program both executes and has positive probability.
pub fn exhaustive_argmax<S: Scorer>(
    scorer: &S,
    example: &Example,
    table: &Table,
    exec: &ExecConfig,
    max_conds: usize,
) -> Result<Option<Argmax>> {
    let pool = literal_pool(&example.question);
    let literals: Vec<String> = pool.keys().cloned().collect();
    let mut best: Option<(f64, Vec<Action>, Query)> = None;
    let (mut enumerated, mut error_free) = (0, 0);

    for q in enumerate_programs(table, &literals, max_conds) {
        enumerated += 1;
        if !execute(&q, table, exec).is_ok() {
            continue;
        }
        error_free += 1;
        // odometer over the span choices of each condition
        let choices: Vec<&Vec<(usize, usize)>> = q.conds.iter().map(|c| &pool[&c.value]).collect();
        let mut idx = vec![0usize; choices.len()];
        loop {
            let mut i = 0;
            let path = actions_for_query(&q, |_| {
                let s = choices[i][idx[i]];
                i += 1;
                Some(s)
            })
            .expect("every literal has a span");
            if let Some(lp) = sequence_logprob(scorer, example, table, &path)? {
                let better = match &best {
                    None => true,
                    Some((b, bp, _)) => lp > *b || (lp == *b && path < *bp),
                };
                if better {
                    best = Some((lp, path, q.clone()));
                }
            }
            let Some(pos) = (0..idx.len()).rev().find(|&p| idx[p] + 1 < choices[p].len()) else {
                break;
            };
            idx[pos] += 1;
            idx[pos + 1..].iter_mut().for_each(|x| *x = 0);
        }
    }
    Ok(best.map(|(logprob, actions, query)| Argmax {
        query,
        logprob,
        actions,
        enumerated,
        error_free,
    }))
}
