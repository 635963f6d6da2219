use std::cmp::Ordering;
use std::collections::HashSet;

use super::{
    Action, DecodeResult, EgConfig, Fallback, ProgramBuilder, PrunedCounts, Reached, Scorer, SketchScorer,
    Stage, DISTRIBUTION_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::exec::{check_partial, execute, ExecOutcome, Failure};
use crate::sql::{PartialProgram, Query};
use crate::table::{Example, Table};

struct Hyp<St> {
    actions: Vec<Action>,
    state: St,
    builder: ProgramBuilder,
    logprob: f64,
}

/// A scored expansion that has not been materialized yet.
struct Expansion {
    parent: usize,
    action: Option<Action>,
    logprob: f64,
}

fn path_cmp<St>(beam: &[Hyp<St>], a: &Expansion, b: &Expansion) -> Ordering {
    let pa = beam[a.parent].actions.iter().chain(a.action.as_ref());
    let pb = beam[b.parent].actions.iter().chain(b.action.as_ref());
    pa.cmp(pb)
}

/// Higher log probability first; equal scores break ties on the action
/// sequence.
fn rank<St>(beam: &[Hyp<St>], a: &Expansion, b: &Expansion) -> Ordering {
    b.logprob
        .total_cmp(&a.logprob)
        .then_with(|| path_cmp(beam, a, b))
}

fn validate(
    dist: &[(Action, f64)],
    builder: &ProgramBuilder,
    columns: usize,
    question_len: usize,
) -> Result<()> {
    let pos = builder.position();
    let mut seen = HashSet::with_capacity(dist.len());
    let mut total = 0.0;
    for (a, p) in dist {
        if !builder.grammar().is_legal(pos, a, columns, question_len) {
            return Err(Error::ScorerViolation(format!(
                "action `{a}` is not legal at position {}",
                pos.tag()
            )));
        }
        if !seen.insert(*a) {
            return Err(Error::ScorerViolation(format!("action `{a}` listed twice")));
        }
        if !p.is_finite() || *p < 0.0 {
            return Err(Error::ScorerViolation(format!("action `{a}` has probability {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(Error::ScorerViolation(format!(
            "distribution at position {} sums to {total}",
            pos.tag()
        )));
    }
    Ok(())
}

fn checkpoint(builder: &ProgramBuilder, reached: Reached, cfg: &EgConfig, table: &Table) -> Option<Failure> {
    let stages = &cfg.stages;
    if reached.sel_head && stages.contains(Stage::AfterSelHead) {
        let head = match builder.partial()? {
            PartialProgram::SelHead { agg, sel } | PartialProgram::WithConds { agg, sel, .. } => {
                PartialProgram::SelHead { agg, sel }
            }
        };
        if let Err(f) = check_partial(&head, table, &cfg.exec) {
            return Some(f);
        }
    }
    if reached.condition && stages.contains(Stage::AfterEachCondition) {
        if let Err(f) = check_partial(&builder.partial()?, table, &cfg.exec) {
            return Some(f);
        }
    }
    if reached.done && stages.contains(Stage::Final) {
        if let ExecOutcome::Failure(f) = execute(&builder.query()?, table, &cfg.exec) {
            return Some(f);
        }
    }
    None
}

/// Beam search over the scorer's action grammar, removing entries whose
/// partial program fails at an active checkpoint.
///
/// Each step scores every expansion of the live entries (finished entries
/// compete unchanged), keeps the best `beam_width * expansion_factor`,
/// runs the checkpoint on the newly extended ones in rank order and retains
/// the first `beam_width` survivors. Search stops once every retained entry
/// is complete; the best of them is returned. If the beam empties, the
/// fallback policy decides.
pub fn eg_beam_decode<S: Scorer>(
    scorer: &S,
    example: &Example,
    table: &Table,
    cfg: &EgConfig,
) -> Result<DecodeResult> {
    let k = cfg.beam_width.max(1);
    let pool = if cfg.eg_enabled() {
        k * cfg.expansion_factor.max(1)
    } else {
        k
    };
    let columns = table.arity();
    let question = &example.question;

    let mut beam = vec![Hyp {
        actions: Vec::new(),
        state: scorer.init(example, table)?,
        builder: ProgramBuilder::new(scorer.grammar().clone()),
        logprob: 0.0,
    }];
    let mut pruned = PrunedCounts::default();
    let mut best_erroneous: Option<Hyp<S::State>> = None;

    while beam.iter().any(|h| !h.builder.is_done()) {
        let mut expansions = Vec::new();
        for (i, h) in beam.iter().enumerate() {
            if h.builder.is_done() {
                expansions.push(Expansion {
                    parent: i,
                    action: None,
                    logprob: h.logprob,
                });
                continue;
            }
            let dist = scorer.step(&h.state)?;
            validate(&dist, &h.builder, columns, question.len())?;
            for (a, p) in dist {
                if p > 0.0 {
                    expansions.push(Expansion {
                        parent: i,
                        action: Some(a),
                        logprob: h.logprob + p.ln(),
                    });
                }
            }
        }
        expansions.sort_by(|a, b| rank(&beam, a, b));
        expansions.truncate(pool);

        let mut next: Vec<Hyp<S::State>> = Vec::with_capacity(k);
        for e in &expansions {
            if next.len() == k {
                break;
            }
            let parent = &beam[e.parent];
            let Some(action) = e.action else {
                next.push(Hyp {
                    actions: parent.actions.clone(),
                    state: parent.state.clone(),
                    builder: parent.builder.clone(),
                    logprob: parent.logprob,
                });
                continue;
            };
            let mut builder = parent.builder.clone();
            let reached = builder.apply(&action, question);
            let mut actions = parent.actions.clone();
            actions.push(action);
            if let Some(failure) = checkpoint(&builder, reached, cfg, table) {
                pruned.record(failure.kind);
                let better = best_erroneous.as_ref().is_none_or(|b| {
                    e.logprob > b.logprob || (e.logprob == b.logprob && actions < b.actions)
                });
                if builder.is_done() && better {
                    best_erroneous = Some(Hyp {
                        state: parent.state.clone(),
                        actions,
                        builder,
                        logprob: e.logprob,
                    });
                }
                continue;
            }
            next.push(Hyp {
                state: scorer.advance(&parent.state, &action),
                actions,
                builder,
                logprob: e.logprob,
            });
        }
        beam = next;
        if beam.is_empty() {
            break;
        }
    }

    if let Some(best) = beam.into_iter().next() {
        return Ok(DecodeResult {
            program: best.builder.query(),
            logprob: best.logprob,
            actions: best.actions,
            pruned_counts: pruned,
            used_fallback: false,
            backtrack_count: 0,
        });
    }
    match cfg.fallback {
        Fallback::Abstain => Ok(DecodeResult::abstain(pruned)),
        Fallback::BestErroneous => {
            let (program, logprob, actions) = match best_erroneous {
                Some(h) => (h.builder.query(), h.logprob, h.actions),
                // nothing was completed: fall back to the unguided search
                None => {
                    let plain = eg_beam_decode(scorer, example, table, &EgConfig::unguided(k))?;
                    (plain.program, plain.logprob, plain.actions)
                }
            };
            Ok(DecodeResult {
                program,
                logprob,
                actions,
                pruned_counts: pruned,
                used_fallback: true,
                backtrack_count: 0,
            })
        }
    }
}

/// Log probability the scorer assigns to an action path, or `None` when
/// some action on it has zero probability.
pub fn sequence_logprob<S: Scorer>(
    scorer: &S,
    example: &Example,
    table: &Table,
    actions: &[Action],
) -> Result<Option<f64>> {
    let mut state = scorer.init(example, table)?;
    let mut builder = ProgramBuilder::new(scorer.grammar().clone());
    let mut total = 0.0;
    for a in actions {
        let dist = scorer.step(&state)?;
        validate(&dist, &builder, table.arity(), example.question.len())?;
        let Some(&(_, p)) = dist.iter().find(|(b, _)| b == a) else {
            return Ok(None);
        };
        if p <= 0.0 {
            return Ok(None);
        }
        total += p.ln();
        builder.apply(a, &example.question);
        state = scorer.advance(&state, a);
    }
    Ok(Some(total))
}

/// Two-stage decoding: fill the best sketch under execution guidance and
/// move to the next sketch when no filling survives.
pub fn decode_with_sketch_backtracking<S: SketchScorer>(
    scorer: &S,
    example: &Example,
    table: &Table,
    cfg: &EgConfig,
) -> Result<DecodeResult> {
    let sketches = scorer.sketch_rank(example, table)?;
    let limit = if cfg.sketch_backtracking {
        sketches.len()
    } else {
        sketches.len().min(1)
    };
    let inner = EgConfig {
        fallback: Fallback::Abstain,
        ..cfg.clone()
    };
    let mut pruned = PrunedCounts::default();
    for (i, (sketch, sketch_lp)) in sketches.iter().take(limit).enumerate() {
        let r = eg_beam_decode(&scorer.fine(sketch), example, table, &inner)?;
        pruned.merge(&r.pruned_counts);
        if r.program.is_some() {
            return Ok(DecodeResult {
                logprob: sketch_lp + r.logprob,
                pruned_counts: pruned,
                used_fallback: false,
                backtrack_count: i,
                ..r
            });
        }
    }

    let mut out = match (cfg.fallback, sketches.first()) {
        (Fallback::BestErroneous, Some((sketch, sketch_lp))) => {
            let r = eg_beam_decode(&scorer.fine(sketch), example, table, cfg)?;
            DecodeResult {
                logprob: sketch_lp + r.logprob,
                pruned_counts: pruned,
                ..r
            }
        }
        _ => DecodeResult::abstain(pruned),
    };
    out.used_fallback = true;
    out.backtrack_count = limit.saturating_sub(1);
    Ok(out)
}

/// Picks the most probable candidate that executes without error.
/// `candidates` must be sorted by descending log probability. With
/// guidance disabled the first candidate is returned as is.
pub fn rerank_joint_candidates(candidates: &[(Query, f64)], table: &Table, cfg: &EgConfig) -> DecodeResult {
    let mut pruned = PrunedCounts::default();
    let found = |q: &Query, logprob: f64, pruned: PrunedCounts, used_fallback: bool| DecodeResult {
        program: Some(q.clone()),
        logprob,
        actions: Vec::new(),
        pruned_counts: pruned,
        used_fallback,
        backtrack_count: 0,
    };
    if !cfg.eg_enabled() {
        return match candidates.first() {
            Some((q, lp)) => found(q, *lp, pruned, false),
            None => DecodeResult::abstain(pruned),
        };
    }
    for (q, lp) in candidates {
        match execute(q, table, &cfg.exec) {
            ExecOutcome::ResultSet(_) => return found(q, *lp, pruned, false),
            ExecOutcome::Failure(f) => pruned.record(f.kind),
        }
    }
    match (cfg.fallback, candidates.first()) {
        (Fallback::BestErroneous, Some((q, lp))) => found(q, *lp, pruned, true),
        _ => DecodeResult::abstain(pruned),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{actions_for_query, find_span, Stages};
    use crate::fixtures::{haugar_example, haugar_script, matches_table, roster_example, roster_script, roster_table};
    use crate::scorers::{OracleLogitScorer, OracleScript};
    use crate::sql::{to_text, AggregateFn, Comparator, Condition};

    fn cfg(k: usize) -> EgConfig {
        EgConfig {
            beam_width: k,
            ..EgConfig::default()
        }
    }

    fn haugar() -> OracleLogitScorer {
        OracleLogitScorer::from_scripts(vec![haugar_script()]).unwrap()
    }

    #[test]
    fn guided_beam_prunes_type_error_and_empty_output() {
        let (t, e) = (matches_table(), haugar_example());
        let r = eg_beam_decode(&haugar(), &e, &t, &cfg(4)).unwrap();
        assert_eq!(to_text(r.program.as_ref().unwrap(), &t), "SELECT COUNT opponent WHERE opponent = 'Haugar'");
        assert_eq!(r.pruned_counts, PrunedCounts { parse_error: 0, type_error: 1, empty_output: 1 });
        assert!(!r.used_fallback);
        assert!((r.logprob - (0.9f64 * 0.4 * 0.6).ln()).abs() < 1e-12);
    }

    #[test]
    fn unguided_greedy_keeps_the_type_error() {
        let (t, e) = (matches_table(), haugar_example());
        let r = eg_beam_decode(&haugar(), &e, &t, &EgConfig::unguided(1)).unwrap();
        assert_eq!(to_text(r.program.as_ref().unwrap(), &t), "SELECT COUNT opponent WHERE opponent > 'Haugar'");
        assert_eq!(r.pruned_counts.total(), 0);
    }

    #[test]
    fn final_only_filters_after_completion() {
        let (t, e) = (matches_table(), haugar_example());
        let c = EgConfig {
            stages: "final".parse().unwrap(),
            ..cfg(4)
        };
        let r = eg_beam_decode(&haugar(), &e, &t, &c).unwrap();
        assert_eq!(r.program, e.gold);
    }

    #[test]
    fn delta_script_returns_gold_for_any_width() {
        let (t, e) = (matches_table(), haugar_example());
        let path = actions_for_query(e.gold.as_ref().unwrap(), |v| find_span(&e.question, v)).unwrap();
        let s = OracleLogitScorer::from_scripts(vec![OracleScript::delta("haugar", &path)]).unwrap();
        for k in 1..=5 {
            let r = eg_beam_decode(&s, &e, &t, &cfg(k)).unwrap();
            assert_eq!(r.program, e.gold);
            assert_eq!(r.pruned_counts.total(), 0);
            assert_eq!(r.actions, path);
        }
    }

    #[test]
    fn empty_beam_follows_fallback() {
        let (t, e) = (matches_table(), haugar_example());
        let path = [
            Action::PickAgg(AggregateFn::Sum),
            Action::PickColumn(0),
            Action::EndConditions,
        ];
        let s = OracleLogitScorer::from_scripts(vec![OracleScript::delta("haugar", &path)]).unwrap();
        let abstain = EgConfig {
            fallback: Fallback::Abstain,
            ..cfg(3)
        };
        let r = eg_beam_decode(&s, &e, &t, &abstain).unwrap();
        assert_eq!(r.program, None);
        assert!(r.used_fallback);
        assert_eq!(r.pruned_counts.type_error, 1);
        let r = eg_beam_decode(&s, &e, &t, &cfg(3)).unwrap();
        assert_eq!(r.program, Some(Query::new(AggregateFn::Sum, 0, vec![])));
        assert!(r.used_fallback);
    }

    #[test]
    fn illegal_scripted_action_is_a_violation() {
        let (t, e) = (matches_table(), haugar_example());
        let path = [Action::PickAgg(AggregateFn::None), Action::PickColumn(7)];
        let s = OracleLogitScorer::from_scripts(vec![OracleScript::delta("haugar", &path)]).unwrap();
        assert!(matches!(eg_beam_decode(&s, &e, &t, &cfg(2)), Err(Error::ScorerViolation(_))));
    }

    #[test]
    fn overconstrained_sketch_is_abandoned() {
        let (t, e) = (roster_table(), roster_example());
        let s = OracleLogitScorer::from_scripts(vec![roster_script()]).unwrap();
        let r = decode_with_sketch_backtracking(&s, &e, &t, &cfg(5)).unwrap();
        assert_eq!(r.backtrack_count, 1);
        assert_eq!(r.program, e.gold);
        assert!(r.pruned_counts.empty_output >= 1);
        assert!(!r.used_fallback);
    }

    #[test]
    fn without_backtracking_the_fallback_decides() {
        let (t, e) = (roster_table(), roster_example());
        let s = OracleLogitScorer::from_scripts(vec![roster_script()]).unwrap();
        let c = EgConfig {
            sketch_backtracking: false,
            fallback: Fallback::Abstain,
            ..cfg(5)
        };
        let r = decode_with_sketch_backtracking(&s, &e, &t, &c).unwrap();
        assert_eq!(r.program, None);
        assert!(r.used_fallback);
        assert_eq!(r.backtrack_count, 0);
        let c = EgConfig {
            sketch_backtracking: false,
            ..cfg(5)
        };
        let r = decode_with_sketch_backtracking(&s, &e, &t, &c).unwrap();
        assert_eq!(r.program.unwrap().conds.len(), 3);
    }

    #[test]
    fn rerank_skips_erroneous_candidates() {
        let t = matches_table();
        let bad = Query::new(AggregateFn::Sum, 0, vec![]);
        let ok = Query::new(AggregateFn::Count, 0, vec![Condition::new(0, Comparator::Eq, "brann")]);
        let r = rerank_joint_candidates(&[(bad.clone(), -0.1), (ok.clone(), -0.5)], &t, &cfg(5));
        assert_eq!(r.program, Some(ok.clone()));
        assert_eq!(r.pruned_counts.type_error, 1);
        let r = rerank_joint_candidates(&[(ok.clone(), -0.1), (bad.clone(), -0.5)], &t, &cfg(5));
        assert_eq!(r.program, Some(ok));
        let r = rerank_joint_candidates(&[(bad.clone(), -0.1)], &t, &cfg(5));
        assert_eq!(r.program, Some(bad.clone()));
        assert!(r.used_fallback);
        let r = rerank_joint_candidates(&[(bad.clone(), -0.1)], &t, &EgConfig::unguided(5));
        assert_eq!(r.program, Some(bad));
        assert!(!r.used_fallback);
    }

    #[test]
    fn sequence_logprob_matches_script() {
        let (t, e) = (matches_table(), haugar_example());
        let path = actions_for_query(e.gold.as_ref().unwrap(), |v| find_span(&e.question, v)).unwrap();
        let lp = sequence_logprob(&haugar(), &e, &t, &path).unwrap().unwrap();
        assert!((lp - (0.9f64 * 0.4 * 0.6).ln()).abs() < 1e-12);
        let off = [Action::PickAgg(AggregateFn::Max)];
        assert_eq!(sequence_logprob(&haugar(), &e, &t, &off).unwrap(), None);
    }

    #[test]
    fn stage_sets_parse() {
        let s: Stages = "selhead,final".parse().unwrap();
        assert!(s.contains(Stage::Final) && !s.contains(Stage::AfterEachCondition));
        assert!("selhead,bogus".parse::<Stages>().is_err());
        assert_eq!(Stages::all().to_string(), "selhead,cond,final");
    }
}
