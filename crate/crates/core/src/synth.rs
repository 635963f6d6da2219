//! Seeded synthetic corpora with scripted scorer faults.
//!
//! Each example gets a random table, a gold query whose result is
//! non-empty, a templated question that contains every condition value as
//! a token span, and a step-indexed oracle script. Clean scripts put most
//! mass on the gold action with small distractors. A faulty script moves
//! most of one step's mass onto one or more fault actions, each of which
//! makes the program fail when combined with the gold remainder.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{actions_for_query, find_span, spans, Action, Grammar, Position};
use crate::error::Result;
use crate::exec::{check_partial, ExecConfig};
use crate::scorers::{write_scripts, OracleLogitScorer, OracleScript, ScriptStep};
use crate::sql::{AggregateFn, Comparator, Condition, PartialProgram, Query};
use crate::table::{write_examples, write_tables, Cell, ColumnSchema, ColumnType, Example, Table, TableCatalog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    WrongColumn,
    WrongComparator,
    WrongValue,
    IncompatibleAggregate,
}

impl FaultKind {
    pub const ALL: [FaultKind; 4] = [
        FaultKind::WrongColumn,
        FaultKind::WrongComparator,
        FaultKind::WrongValue,
        FaultKind::IncompatibleAggregate,
    ];

    pub fn is_condition_fault(self) -> bool {
        self != FaultKind::IncompatibleAggregate
    }
}

/// Relative weights of the fault kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultMix {
    pub wrong_column: f64,
    pub wrong_comparator: f64,
    pub wrong_value: f64,
    pub incompatible_aggregate: f64,
}

impl Default for FaultMix {
    fn default() -> Self {
        FaultMix {
            wrong_column: 0.35,
            wrong_comparator: 0.2,
            wrong_value: 0.35,
            incompatible_aggregate: 0.1,
        }
    }
}

impl FaultMix {
    fn weight(&self, k: FaultKind) -> f64 {
        match k {
            FaultKind::WrongColumn => self.wrong_column,
            FaultKind::WrongComparator => self.wrong_comparator,
            FaultKind::WrongValue => self.wrong_value,
            FaultKind::IncompatibleAggregate => self.incompatible_aggregate,
        }
    }

    pub fn condition_share(&self) -> f64 {
        let total: f64 = FaultKind::ALL.iter().map(|&k| self.weight(k)).sum();
        FaultKind::ALL
            .iter()
            .filter(|k| k.is_condition_fault())
            .map(|&k| self.weight(k))
            .sum::<f64>()
            / total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_examples: usize,
    pub num_tables: usize,
    pub seed: u64,
    /// Probability that an example's script carries a fault.
    pub fault_rate: f64,
    pub mix: FaultMix,
    /// Most fault actions placed on one step.
    pub max_fault_actions: usize,
    pub max_conds: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_examples: 500,
            num_tables: 40,
            seed: 7,
            fault_rate: 0.35,
            mix: FaultMix::default(),
            max_fault_actions: 4,
            max_conds: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub tables: Vec<Table>,
    pub examples: Vec<Example>,
    pub scripts: Vec<OracleScript>,
    /// Fault actually injected per example.
    pub faults: Vec<Option<FaultKind>>,
}

impl SynthCorpus {
    pub fn catalog(&self) -> TableCatalog {
        self.tables.iter().cloned().collect()
    }

    pub fn scorer(&self) -> Result<OracleLogitScorer> {
        OracleLogitScorer::from_scripts(self.scripts.clone())
    }

    /// Writes `tables.jsonl`, `examples.jsonl` and `scripts.jsonl`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
        write_tables(dir.join("tables.jsonl"), &self.tables)?;
        write_examples(dir.join("examples.jsonl"), &self.examples)?;
        write_scripts(dir.join("scripts.jsonl"), &self.scripts)
    }
}

const TEXT_COLUMNS: &[&str] = &[
    "opponent", "venue", "team", "player", "city", "country", "position", "school", "result", "coach",
    "nationality", "club",
];
const REAL_COLUMNS: &[&str] = &[
    "points", "year", "attendance", "round", "goals", "rank", "games", "wins", "losses", "score",
];
const TEXT_VALUES: &[&str] = &[
    "Haugar", "Rosenborg", "Brann", "Molde", "Viking", "Lyn", "Stabaek", "Moss", "Bodo", "Tromso", "Hamar",
    "Skien", "Arendal", "Harstad", "Narvik", "Alta", "Kongsberg", "Drammen", "Larvik", "Halden", "Sandnes",
    "Gjovik", "Elverum", "Steinkjer", "Levanger", "Namsos", "Florø", "Voss", "Egersund", "Risør",
];

fn agg_phrase(a: AggregateFn) -> &'static [&'static str] {
    match a {
        AggregateFn::None => &["what", "is", "the"],
        AggregateFn::Max => &["what", "is", "the", "highest"],
        AggregateFn::Min => &["what", "is", "the", "lowest"],
        AggregateFn::Count => &["how", "many"],
        AggregateFn::Sum => &["what", "is", "the", "total"],
        AggregateFn::Avg => &["what", "is", "the", "average"],
    }
}

fn op_phrase(op: Comparator) -> &'static [&'static str] {
    match op {
        Comparator::Eq => &["is"],
        Comparator::Gt => &["is", "more", "than"],
        Comparator::Lt => &["is", "less", "than"],
    }
}

fn real_literal(v: f64) -> String {
    format!("{v}")
}

fn random_table(rng: &mut ChaCha8Rng, id: usize) -> Table {
    let arity = rng.gen_range(3..=6);
    let n_real = rng.gen_range(1..arity);
    let mut names: Vec<(&str, ColumnType)> = Vec::new();
    let mut text: Vec<&str> = TEXT_COLUMNS.to_vec();
    let mut real: Vec<&str> = REAL_COLUMNS.to_vec();
    text.shuffle(rng);
    real.shuffle(rng);
    names.push((text[0], ColumnType::Text));
    for name in real.iter().take(n_real) {
        names.push((name, ColumnType::Real));
    }
    for name in text.iter().skip(1).take(arity - 1 - n_real) {
        names.push((name, ColumnType::Text));
    }
    names[1..].shuffle(rng);
    let rows = rng.gen_range(6..=12);
    let columns: Vec<ColumnSchema> = names.iter().map(|(n, t)| ColumnSchema::new(*n, *t)).collect();
    let data = (0..rows)
        .map(|_| {
            columns
                .iter()
                .map(|c| match c.ctype {
                    ColumnType::Text => Cell::Text(TEXT_VALUES.choose(rng).unwrap().to_string()),
                    ColumnType::Real => Cell::Real(rng.gen_range(1..100) as f64),
                })
                .collect()
        })
        .collect();
    Table::new(format!("t{id}"), columns, data).expect("generated table is valid")
}

fn random_gold(rng: &mut ChaCha8Rng, table: &Table, max_conds: usize) -> Query {
    let arity = table.arity();
    let row = &table.rows()[rng.gen_range(0..table.num_rows())];
    let sel = rng.gen_range(0..arity);
    let agg = match table.columns()[sel].ctype {
        ColumnType::Real => *AggregateFn::ALL.choose(rng).unwrap(),
        ColumnType::Text => *[
            AggregateFn::None,
            AggregateFn::None,
            AggregateFn::Count,
            AggregateFn::Max,
            AggregateFn::Min,
        ]
        .choose(rng)
        .unwrap(),
    };
    let mut others: Vec<usize> = (0..arity).filter(|&c| c != sel).collect();
    others.shuffle(rng);
    let n = *[0, 1, 1, 1, 2, 2, 3].choose(rng).unwrap();
    let n = n.min(max_conds).min(others.len());
    let conds = others[..n]
        .iter()
        .map(|&c| match &row[c] {
            Cell::Text(s) => Condition::new(c, Comparator::Eq, s.clone()),
            Cell::Real(v) => {
                let op = *[Comparator::Eq, Comparator::Eq, Comparator::Gt, Comparator::Lt]
                    .choose(rng)
                    .unwrap();
                let d = rng.gen_range(1..=3) as f64;
                let value = match op {
                    Comparator::Eq => *v,
                    Comparator::Gt => v - d,
                    Comparator::Lt => v + d,
                };
                Condition::new(c, op, real_literal(value))
            }
        })
        .collect();
    Query::new(agg, sel, conds)
}

fn question_for(q: &Query, table: &Table) -> Vec<String> {
    let mut out: Vec<String> = agg_phrase(q.agg).iter().map(|s| s.to_string()).collect();
    out.push(table.columns()[q.sel].name.clone());
    for (i, c) in q.conds.iter().enumerate() {
        out.push(if i == 0 { "when" } else { "and" }.to_string());
        out.push(table.columns()[c.column].name.clone());
        out.extend(op_phrase(c.op).iter().map(|s| s.to_string()));
        out.extend(c.value.split_whitespace().map(String::from));
    }
    out
}

/// Distribution with `gold` at `mass` and the rest spread over up to two
/// distractors drawn from `alternatives`.
fn clean_step(rng: &mut ChaCha8Rng, gold: Action, alternatives: &[Action], mass: f64) -> Vec<(Action, f64)> {
    let mut pool: Vec<Action> = alternatives.iter().copied().filter(|a| *a != gold).collect();
    if pool.is_empty() {
        return vec![(gold, 1.0)];
    }
    pool.shuffle(rng);
    let n = rng.gen_range(1..=2.min(pool.len()));
    let rest = 1.0 - mass;
    let mut out = vec![(gold, mass)];
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.0)).collect();
    let total: f64 = weights.iter().sum();
    out.extend(pool[..n].iter().zip(&weights).map(|(a, w)| (*a, rest * w / total)));
    out
}

/// Distribution where each fault outranks the gold action.
fn fault_step(rng: &mut ChaCha8Rng, gold: Action, faults: &[Action]) -> Vec<(Action, f64)> {
    let gold_mass = rng.gen_range(0.06..0.14);
    let each = (1.0 - gold_mass) / faults.len() as f64;
    let mut out = vec![(gold, gold_mass)];
    out.extend(faults.iter().map(|a| (*a, each)));
    out
}

fn fails(p: &PartialProgram, table: &Table) -> bool {
    check_partial(p, table, &ExecConfig::default()).is_err()
}

fn with_cond(gold: &Query, j: usize, cond: Condition) -> PartialProgram {
    let mut conds = gold.conds[..j].to_vec();
    conds.push(cond);
    PartialProgram::WithConds {
        agg: gold.agg,
        sel: gold.sel,
        conds,
    }
}

/// Step index and erroneous replacement actions for one fault kind.
fn fault_candidates(kind: FaultKind, gold: &Query, table: &Table, question: &[String]) -> Vec<(usize, Vec<Action>)> {
    let mut out = Vec::new();
    let cond_step = |j: usize| 2 + 3 * j;
    match kind {
        FaultKind::WrongColumn => {
            for (j, c) in gold.conds.iter().enumerate() {
                let bad: Vec<Action> = (0..table.arity())
                    .filter(|&col| col != c.column)
                    .filter(|&col| fails(&with_cond(gold, j, Condition { column: col, ..c.clone() }), table))
                    .map(Action::PickColumn)
                    .collect();
                out.push((cond_step(j), bad));
            }
        }
        FaultKind::WrongComparator => {
            for (j, c) in gold.conds.iter().enumerate() {
                let bad: Vec<Action> = Comparator::ALL
                    .into_iter()
                    .filter(|&op| op != c.op)
                    .filter(|&op| fails(&with_cond(gold, j, Condition { op, ..c.clone() }), table))
                    .map(Action::PickOp)
                    .collect();
                out.push((cond_step(j) + 1, bad));
            }
        }
        FaultKind::WrongValue => {
            for (j, c) in gold.conds.iter().enumerate() {
                let bad: Vec<Action> = spans(question.len())
                    .filter(|a| matches!(a, Action::PickValueSpan { start, end } if end - start <= 2))
                    .filter(|a| {
                        let Action::PickValueSpan { start, end } = *a else { unreachable!() };
                        let value = question[start..end].join(" ");
                        !crate::sql::literals_equal(&value, &c.value, table.columns()[c.column].ctype)
                            && fails(&with_cond(gold, j, Condition { value, ..c.clone() }), table)
                    })
                    .collect();
                out.push((cond_step(j) + 2, bad));
            }
        }
        FaultKind::IncompatibleAggregate => {
            let head = |agg, sel| PartialProgram::SelHead { agg, sel };
            let bad_aggs: Vec<Action> = AggregateFn::ALL
                .into_iter()
                .filter(|&a| a != gold.agg && fails(&head(a, gold.sel), table))
                .map(Action::PickAgg)
                .collect();
            out.push((0, bad_aggs));
            let bad_sels: Vec<Action> = (0..table.arity())
                .filter(|&c| c != gold.sel && fails(&head(gold.agg, c), table))
                .map(Action::PickColumn)
                .collect();
            out.push((1, bad_sels));
        }
    }
    out.retain(|(_, v)| !v.is_empty());
    out
}

fn position_of(step: usize) -> Position {
    match step {
        0 => Position::Agg,
        1 => Position::SelColumn,
        n => match (n - 2) % 3 {
            0 => Position::CondColumn((n - 2) / 3),
            1 => Position::CondOp((n - 2) / 3),
            _ => Position::CondValue((n - 2) / 3),
        },
    }
}

fn pick_kind(rng: &mut ChaCha8Rng, mix: &FaultMix, allowed: &[FaultKind]) -> Option<FaultKind> {
    allowed
        .choose_weighted(rng, |&k| mix.weight(k))
        .ok()
        .copied()
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tables: Vec<Table> = (0..cfg.num_tables.max(1)).map(|i| random_table(&mut rng, i)).collect();
    let grammar = Grammar::full(cfg.max_conds);
    let mut examples = Vec::with_capacity(cfg.num_examples);
    let mut scripts = Vec::with_capacity(cfg.num_examples);
    let mut faults = Vec::with_capacity(cfg.num_examples);

    for i in 0..cfg.num_examples {
        let table = &tables[rng.gen_range(0..tables.len())];
        let gold = random_gold(&mut rng, table, cfg.max_conds);
        let question = question_for(&gold, table);
        let path = actions_for_query(&gold, |v| find_span(&question, v)).expect("values are question spans");
        let id = format!("ex{i:04}");

        let mut fault: Option<(FaultKind, usize, Vec<Action>)> = None;
        if rng.gen_bool(cfg.fault_rate) {
            let mut allowed: Vec<FaultKind> = FaultKind::ALL.to_vec();
            while let Some(kind) = pick_kind(&mut rng, &cfg.mix, &allowed) {
                let cands = fault_candidates(kind, &gold, table, &question);
                if let Some((step, actions)) = cands.choose(&mut rng) {
                    let mut actions = actions.clone();
                    actions.shuffle(&mut rng);
                    let n = rng.gen_range(1..=cfg.max_fault_actions.max(1)).min(actions.len());
                    actions.truncate(n);
                    fault = Some((kind, *step, actions));
                    break;
                }
                allowed.retain(|&k| k != kind);
            }
        }

        let steps = path
            .iter()
            .enumerate()
            .map(|(s, &a)| {
                let pos = position_of(s);
                let dist = match &fault {
                    Some((_, step, bad)) if *step == s => fault_step(&mut rng, a, bad),
                    _ => {
                        // the final boundary always closes the query
                        let alternatives = if a == Action::EndConditions {
                            Vec::new()
                        } else {
                            grammar
                                .legal_actions(pos, table.arity(), question.len())
                                .into_iter()
                                .filter(|x| *x != Action::EndConditions)
                                .collect()
                        };
                        let mass = rng.gen_range(0.75..0.95);
                        clean_step(&mut rng, a, &alternatives, mass)
                    }
                };
                ScriptStep {
                    position: pos.tag().to_string(),
                    after: None,
                    actions: dist,
                }
            })
            .collect();

        scripts.push(OracleScript {
            example_id: id.clone(),
            steps,
            uniform_default: false,
            sketches: None,
        });
        faults.push(fault.map(|(k, _, _)| k));
        examples.push(Example {
            id,
            question,
            table_id: table.id().to_string(),
            gold: Some(gold),
        });
    }
    SynthCorpus {
        tables,
        examples,
        scripts,
        faults,
    }
}

/// A tiny scripted case for comparing beam search against exhaustive
/// enumeration.
#[derive(Debug, Clone)]
pub struct OracleCase {
    pub table: Table,
    pub example: Example,
    pub script: OracleScript,
    pub max_conds: usize,
}

impl OracleCase {
    pub fn scorer(&self) -> Result<OracleLogitScorer> {
        Ok(OracleLogitScorer::from_scripts(vec![self.script.clone()])?.with_max_conds(self.max_conds))
    }
}

const TINY_WORDS: &[&str] = &["red", "blue", "green"];

/// `n` cases with at most three columns, ten rows, a two-token question
/// (so three literal spans) and two conditions. Every step distribution is
/// a random full distribution over the legal actions.
pub fn oracle_cases(seed: u64, n: usize) -> Vec<OracleCase> {
    const MAX_CONDS: usize = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let arity = rng.gen_range(1..=3);
            let columns: Vec<ColumnSchema> = (0..arity)
                .map(|c| {
                    let ty = if rng.gen_bool(0.5) { ColumnType::Text } else { ColumnType::Real };
                    ColumnSchema::new(format!("c{c}"), ty)
                })
                .collect();
            let rows = rng.gen_range(1..=10);
            let data = (0..rows)
                .map(|_| {
                    columns
                        .iter()
                        .map(|c| match c.ctype {
                            ColumnType::Text => Cell::Text(TINY_WORDS.choose(&mut rng).unwrap().to_string()),
                            ColumnType::Real => Cell::Real(rng.gen_range(1..=3) as f64),
                        })
                        .collect()
                })
                .collect();
            let table = Table::new(format!("tiny{i}"), columns, data).expect("generated table is valid");
            // literals come from the table's own cells so that conditions can match
            let question: Vec<String> = (0..2)
                .map(|_| {
                    let row = &table.rows()[rng.gen_range(0..table.num_rows())];
                    row[rng.gen_range(0..arity)].to_string()
                })
                .collect();
            let grammar = Grammar::full(MAX_CONDS);
            let steps = (0..2 + 3 * MAX_CONDS)
                .map(|s| {
                    let pos = position_of(s);
                    let actions = grammar.legal_actions(pos, arity, question.len());
                    // cubed draws give peaked distributions; stopping early is
                    // damped so that conditioned programs compete
                    let weights: Vec<f64> = actions
                        .iter()
                        .map(|a| {
                            let w = rng.gen_range(0.1f64..1.0).powi(3);
                            if *a == Action::EndConditions { w * 0.2 } else { w }
                        })
                        .collect();
                    let total: f64 = weights.iter().sum();
                    ScriptStep {
                        position: pos.tag().to_string(),
                        after: None,
                        actions: actions.into_iter().zip(weights).map(|(a, w)| (a, w / total)).collect(),
                    }
                })
                .collect();
            let id = format!("tiny{i}");
            OracleCase {
                example: Example {
                    id: id.clone(),
                    question,
                    table_id: table.id().to_string(),
                    gold: None,
                },
                script: OracleScript {
                    example_id: id,
                    steps,
                    uniform_default: false,
                    sketches: None,
                },
                table,
                max_conds: MAX_CONDS,
            }
        })
        .collect()
}
