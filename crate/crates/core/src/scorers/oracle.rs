//! Replays scripted per-step action distributions.
//!
//! A script is keyed by example id. Each step record gives the distribution
//! at one decoding step of the full grammar; records are applied by step
//! index, except those with an `after` prefix, which apply only once the
//! decoder has taken exactly that action sequence. This is the plug-in
//! point for any external model: dump its distributions, replay them here.
//!
//! The same script also serves as a two-stage scorer. Sketch probabilities
//! come from an explicit `sketches` list when present, otherwise they are
//! the marginal probability of each comparator skeleton under the
//! step-indexed records.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decoder::{Action, Grammar, Position, Scorer, SketchScorer, DISTRIBUTION_TOLERANCE};
use crate::error::{Error, Result};
use crate::sql::{Comparator, Sketch, DEFAULT_MAX_CONDS};
use crate::table::{write_lines, Example, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptStep {
    /// Required when the record is keyed by `after`; otherwise it must match
    /// the step index.
    pub position: String,
    pub after: Option<Vec<Action>>,
    pub actions: Vec<(Action, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleScript {
    pub example_id: String,
    pub steps: Vec<ScriptStep>,
    /// Unscripted positions get a uniform distribution instead of an error.
    pub uniform_default: bool,
    pub sketches: Option<Vec<(Sketch, f64)>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StepRecord {
    position: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    after: Option<Vec<String>>,
    actions: Vec<(String, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScriptRecord {
    example_id: String,
    steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sketches: Option<Vec<(String, f64)>>,
}

/// Static position of a full-grammar action sequence.
fn full_position(history: &[Action]) -> Position {
    match history.len() {
        0 => Position::Agg,
        1 => Position::SelColumn,
        _ if history.last() == Some(&Action::EndConditions) => Position::Done,
        n => {
            let i = n - 2;
            match i % 3 {
                0 => Position::CondColumn(i / 3),
                1 => Position::CondOp(i / 3),
                _ => Position::CondValue(i / 3),
            }
        }
    }
}

fn kind_fits(pos: Position, a: &Action) -> bool {
    matches!(
        (pos, a),
        (Position::Agg, Action::PickAgg(_))
            | (Position::SelColumn, Action::PickColumn(_))
            | (Position::CondColumn(_), Action::PickColumn(_) | Action::EndConditions)
            | (Position::CondOp(_), Action::PickOp(_))
            | (Position::CondValue(_), Action::PickValueSpan { .. })
    )
}

fn check_mass(example_id: &str, step: usize, dist: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for p in dist {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::Distribution {
                example_id: example_id.to_string(),
                step,
                message: format!("probability {p} is negative or not finite"),
            });
        }
        total += p;
    }
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(Error::Distribution {
            example_id: example_id.to_string(),
            step,
            message: format!("probabilities sum to {total}"),
        });
    }
    Ok(())
}

impl OracleScript {
    fn validate(&self) -> std::result::Result<(), Error> {
        let id = &self.example_id;
        let mut indexed = 0;
        for (i, step) in self.steps.iter().enumerate() {
            let pos = match &step.after {
                Some(prefix) => full_position(prefix),
                None => {
                    indexed += 1;
                    static_position(indexed - 1)
                }
            };
            if pos.tag() != step.position {
                return Err(Error::Distribution {
                    example_id: id.clone(),
                    step: i,
                    message: format!("position `{}` does not match expected `{}`", step.position, pos.tag()),
                });
            }
            let mut seen = std::collections::HashSet::new();
            for (a, _) in &step.actions {
                if !kind_fits(pos, a) {
                    return Err(Error::Distribution {
                        example_id: id.clone(),
                        step: i,
                        message: format!("action `{a}` cannot appear at position `{}`", pos.tag()),
                    });
                }
                if !seen.insert(*a) {
                    return Err(Error::Distribution {
                        example_id: id.clone(),
                        step: i,
                        message: format!("action `{a}` listed twice"),
                    });
                }
            }
            check_mass(id, i, step.actions.iter().map(|(_, p)| *p))?;
        }
        if let Some(sk) = &self.sketches {
            check_mass(id, self.steps.len(), sk.iter().map(|(_, p)| *p))?;
        }
        Ok(())
    }
}

/// Position of the `i`-th step-indexed record.
fn static_position(i: usize) -> Position {
    match i {
        0 => Position::Agg,
        1 => Position::SelColumn,
        n => match (n - 2) % 3 {
            0 => Position::CondColumn((n - 2) / 3),
            1 => Position::CondOp((n - 2) / 3),
            _ => Position::CondValue((n - 2) / 3),
        },
    }
}

#[derive(Debug)]
struct CompiledScript {
    indexed: Vec<Vec<(Action, f64)>>,
    by_prefix: HashMap<Vec<Action>, Vec<(Action, f64)>>,
    uniform_default: bool,
    sketches: Option<Vec<(Sketch, f64)>>,
}

#[derive(Debug)]
pub struct OracleLogitScorer {
    scripts: HashMap<String, CompiledScript>,
    max_conds: usize,
    grammar: Grammar,
}

#[derive(Debug, Clone)]
pub struct OracleState {
    script: Arc<str>,
    /// Full-grammar action history, including comparators implied by a
    /// sketch.
    history: Vec<Action>,
    columns: usize,
    question_len: usize,
    done: bool,
}

impl OracleLogitScorer {
    pub fn from_scripts(scripts: Vec<OracleScript>) -> Result<Self> {
        let mut map = HashMap::with_capacity(scripts.len());
        for s in scripts {
            s.validate()?;
            let mut compiled = CompiledScript {
                indexed: Vec::new(),
                by_prefix: HashMap::new(),
                uniform_default: s.uniform_default,
                sketches: s.sketches,
            };
            for step in s.steps {
                match step.after {
                    Some(prefix) => {
                        compiled.by_prefix.insert(prefix, step.actions);
                    }
                    None => compiled.indexed.push(step.actions),
                }
            }
            if map.insert(s.example_id.clone(), compiled).is_some() {
                return Err(Error::Distribution {
                    example_id: s.example_id,
                    step: 0,
                    message: "duplicate script for example".into(),
                });
            }
        }
        Ok(OracleLogitScorer {
            scripts: map,
            max_conds: DEFAULT_MAX_CONDS,
            grammar: Grammar::full(DEFAULT_MAX_CONDS),
        })
    }

    pub fn with_max_conds(mut self, max_conds: usize) -> Self {
        self.max_conds = max_conds;
        self.grammar = Grammar::full(max_conds);
        self
    }

    pub fn max_conds(&self) -> usize {
        self.max_conds
    }

    pub fn len(&self) -> usize {
        self.scripts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scripts.is_empty()
    }

    /// Distribution at a full-grammar history.
    fn distribution(&self, state: &OracleState) -> Result<Vec<(Action, f64)>> {
        let pos = full_position(&state.history);
        if let Position::CondColumn(j) = pos {
            if j >= self.max_conds {
                return Ok(vec![(Action::EndConditions, 1.0)]);
            }
        }
        let script = &self.scripts[&*state.script];
        let scripted = script
            .by_prefix
            .get(&state.history)
            .or_else(|| script.indexed.get(state.history.len()));
        match scripted {
            Some(d) => Ok(d.iter().filter(|(_, p)| *p > 0.0).copied().collect()),
            None if script.uniform_default => {
                let legal = self.grammar.legal_actions(pos, state.columns, state.question_len);
                let p = 1.0 / legal.len() as f64;
                Ok(legal.into_iter().map(|a| (a, p)).collect())
            }
            None => Err(Error::ScorerViolation(format!(
                "script `{}` has no distribution for step {} ({})",
                state.script,
                state.history.len(),
                pos.tag()
            ))),
        }
    }

    /// Marginal probability of each comparator skeleton under the
    /// step-indexed records.
    fn marginal_sketches(&self, state: &OracleState) -> Result<Vec<(Sketch, f64)>> {
        let mut out = Vec::new();
        // (ops so far, probability, history with placeholder slots)
        let mut frontier = vec![(Vec::<Comparator>::new(), 1.0_f64, state.history.clone())];
        while let Some((ops, p, history)) = frontier.pop() {
            let at = OracleState {
                history: history.clone(),
                ..state.clone()
            };
            let dist = self.distribution(&at)?;
            let end: f64 = dist
                .iter()
                .filter(|(a, _)| *a == Action::EndConditions)
                .map(|(_, p)| p)
                .sum();
            let cont: f64 = dist
                .iter()
                .filter(|(a, _)| matches!(a, Action::PickColumn(_)))
                .map(|(_, p)| p)
                .sum();
            if end > 0.0 {
                out.push((Sketch::new(ops.clone()), p * end));
            }
            if cont <= 0.0 {
                continue;
            }
            let mut h = history.clone();
            h.push(Action::PickColumn(0));
            let op_dist = self.distribution(&OracleState {
                history: h.clone(),
                ..state.clone()
            })?;
            for (a, q) in op_dist {
                let Action::PickOp(op) = a else { continue };
                let mut h2 = h.clone();
                h2.push(a);
                h2.push(Action::PickValueSpan { start: 0, end: 1 });
                let mut ops2 = ops.clone();
                ops2.push(op);
                frontier.push((ops2, p * cont * q, h2));
            }
        }
        Ok(out)
    }
}

pub fn load_oracle_scorer(path: impl AsRef<Path>) -> Result<OracleLogitScorer> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut scripts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ScriptRecord = serde_json::from_str(line)
            .map_err(|e| Error::format(path, i + 1, format!("malformed script record: {e}")))?;
        scripts.push(
            OracleScript::from_record(record).map_err(|msg| Error::format(path, i + 1, msg))?,
        );
    }
    OracleLogitScorer::from_scripts(scripts)
}

pub fn write_scripts<'a>(path: impl AsRef<Path>, scripts: impl IntoIterator<Item = &'a OracleScript>) -> Result<()> {
    write_lines(path.as_ref(), scripts.into_iter().map(OracleScript::to_json_line))
}

fn parse_actions(encoded: &[String]) -> std::result::Result<Vec<Action>, String> {
    encoded.iter().map(|s| s.parse()).collect()
}

impl OracleScript {
    fn from_record(r: ScriptRecord) -> std::result::Result<Self, String> {
        let uniform_default = match r.default.as_deref() {
            None | Some("none") => false,
            Some("uniform") => true,
            Some(other) => return Err(format!("unknown default `{other}`")),
        };
        let steps = r
            .steps
            .into_iter()
            .map(|s| {
                Ok(ScriptStep {
                    position: s.position,
                    after: s.after.as_deref().map(parse_actions).transpose()?,
                    actions: s
                        .actions
                        .into_iter()
                        .map(|(a, p)| Ok((a.parse::<Action>()?, p)))
                        .collect::<std::result::Result<_, String>>()?,
                })
            })
            .collect::<std::result::Result<_, String>>()?;
        let sketches = r
            .sketches
            .map(|v| {
                v.into_iter()
                    .map(|(code, p)| {
                        Sketch::from_code(&code)
                            .map(|s| (s, p))
                            .ok_or_else(|| format!("invalid sketch `{code}`"))
                    })
                    .collect::<std::result::Result<Vec<_>, String>>()
            })
            .transpose()?;
        Ok(OracleScript {
            example_id: r.example_id,
            steps,
            uniform_default,
            sketches,
        })
    }

    pub fn to_json_line(&self) -> String {
        let record = ScriptRecord {
            example_id: self.example_id.clone(),
            steps: self
                .steps
                .iter()
                .map(|s| StepRecord {
                    position: s.position.clone(),
                    after: s.after.as_ref().map(|v| v.iter().map(Action::to_string).collect()),
                    actions: s.actions.iter().map(|(a, p)| (a.to_string(), *p)).collect(),
                })
                .collect(),
            default: self.uniform_default.then(|| "uniform".to_string()),
            sketches: self
                .sketches
                .as_ref()
                .map(|v| v.iter().map(|(s, p)| (s.code(), *p)).collect()),
        };
        serde_json::to_string(&record).expect("script record serializes")
    }

    /// Script that puts all mass on one action path.
    pub fn delta(example_id: impl Into<String>, actions: &[Action]) -> Self {
        OracleScript {
            example_id: example_id.into(),
            steps: actions
                .iter()
                .enumerate()
                .map(|(i, a)| ScriptStep {
                    position: static_position(i).tag().to_string(),
                    after: None,
                    actions: vec![(*a, 1.0)],
                })
                .collect(),
            uniform_default: false,
            sketches: None,
        }
    }
}

impl Scorer for OracleLogitScorer {
    type State = OracleState;

    fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    fn init(&self, example: &Example, table: &Table) -> Result<OracleState> {
        let (key, _) = self.scripts.get_key_value(example.id.as_str()).ok_or_else(|| {
            Error::ScorerViolation(format!("no script for example `{}`", example.id))
        })?;
        Ok(OracleState {
            script: Arc::from(key.as_str()),
            history: Vec::new(),
            columns: table.arity(),
            question_len: example.question.len(),
            done: false,
        })
    }

    fn step(&self, state: &OracleState) -> Result<Vec<(Action, f64)>> {
        self.distribution(state)
    }

    fn advance(&self, state: &OracleState, action: &Action) -> OracleState {
        let mut next = state.clone();
        next.history.push(*action);
        next.done = *action == Action::EndConditions;
        next
    }
}

/// Fine stage of the script for a fixed sketch.
#[derive(Debug)]
pub struct OracleFine<'a> {
    scorer: &'a OracleLogitScorer,
    sketch: Sketch,
    grammar: Grammar,
}

impl Scorer for OracleFine<'_> {
    type State = OracleState;

    fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    fn init(&self, example: &Example, table: &Table) -> Result<OracleState> {
        self.scorer.init(example, table)
    }

    fn step(&self, state: &OracleState) -> Result<Vec<(Action, f64)>> {
        let dist = self.scorer.distribution(state)?;
        match full_position(&state.history) {
            Position::CondColumn(_) => {
                let cols: Vec<_> = dist
                    .into_iter()
                    .filter(|(a, _)| matches!(a, Action::PickColumn(_)))
                    .collect();
                let mass: f64 = cols.iter().map(|(_, p)| p).sum();
                if mass > 0.0 {
                    Ok(cols.into_iter().map(|(a, p)| (a, p / mass)).collect())
                } else {
                    let p = 1.0 / state.columns as f64;
                    Ok((0..state.columns).map(|c| (Action::PickColumn(c), p)).collect())
                }
            }
            _ => Ok(dist),
        }
    }

    fn advance(&self, state: &OracleState, action: &Action) -> OracleState {
        let mut next = state.clone();
        match (full_position(&state.history), action) {
            (Position::CondColumn(j), Action::PickColumn(_)) => {
                next.history.push(*action);
                next.history.push(Action::PickOp(self.sketch.ops[j]));
            }
            (Position::CondValue(j), _) => {
                next.history.push(*action);
                if j + 1 == self.sketch.len() {
                    next.history.push(Action::EndConditions);
                    next.done = true;
                }
            }
            (Position::SelColumn, _) => {
                next.history.push(*action);
                if self.sketch.is_empty() {
                    next.history.push(Action::EndConditions);
                    next.done = true;
                }
            }
            _ => next.history.push(*action),
        }
        next
    }
}

impl SketchScorer for OracleLogitScorer {
    type Fine<'a> = OracleFine<'a>;

    fn sketch_rank(&self, example: &Example, table: &Table) -> Result<Vec<(Sketch, f64)>> {
        let state = self.init(example, table)?;
        let script = &self.scripts[&*state.script];
        let mut ranked: Vec<(Sketch, f64)> = match &script.sketches {
            Some(list) => list.clone(),
            None => {
                // skeleton probabilities start after the aggregate and column
                let mut head = state.clone();
                head.history = vec![Action::PickAgg(crate::sql::AggregateFn::None), Action::PickColumn(0)];
                self.marginal_sketches(&head)?
            }
        };
        ranked.retain(|(s, p)| *p > 0.0 && s.len() <= self.max_conds);
        let mut ranked: Vec<(Sketch, f64)> = ranked.into_iter().map(|(s, p)| (s, p.ln())).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(ranked)
    }

    fn fine<'a>(&'a self, sketch: &Sketch) -> OracleFine<'a> {
        OracleFine {
            scorer: self,
            sketch: sketch.clone(),
            grammar: Grammar::Sketch(sketch.clone()),
        }
    }
}
