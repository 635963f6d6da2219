//! Execution-guided beam search.
//!
//! The decoder is generic over any [`Scorer`]: a model that, given its own
//! opaque state, returns a distribution over the actions legal at the
//! current grammar position. At configured checkpoints the partial program
//! of every beam entry is executed and entries that fail are dropped.

mod beam;
mod grammar;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::{ErrorKind, ExecConfig};
use crate::sql::{Query, Sketch};
use crate::table::{Example, Table};

pub use beam::{eg_beam_decode, decode_with_sketch_backtracking, rerank_joint_candidates, sequence_logprob};
pub use grammar::{
    actions_for_query, find_span, span_text, spans, Action, Grammar, Position, ProgramBuilder, Reached,
    MAX_SPAN_LEN,
};

/// Tolerance on the total mass of a step distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

/// An autoregressive model over typed actions.
pub trait Scorer {
    type State: Clone;

    fn grammar(&self) -> &Grammar;

    fn init(&self, example: &Example, table: &Table) -> Result<Self::State>;

    /// Distribution over legal actions at the state's position. Entries
    /// must be distinct, non-negative and sum to one.
    fn step(&self, state: &Self::State) -> Result<Vec<(Action, f64)>>;

    fn advance(&self, state: &Self::State, action: &Action) -> Self::State;
}

/// A two-stage model: a ranked list of sketches, then a fine-stage scorer
/// that fills a chosen sketch's slots.
pub trait SketchScorer {
    type Fine<'a>: Scorer
    where
        Self: 'a;

    /// All candidate sketches with their log probabilities, best first.
    fn sketch_rank(&self, example: &Example, table: &Table) -> Result<Vec<(Sketch, f64)>>;

    fn fine<'a>(&'a self, sketch: &Sketch) -> Self::Fine<'a>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    AfterSelHead,
    AfterEachCondition,
    Final,
}

impl Stage {
    pub fn code(self) -> &'static str {
        match self {
            Stage::AfterSelHead => "selhead",
            Stage::AfterEachCondition => "cond",
            Stage::Final => "final",
        }
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "selhead" => Ok(Stage::AfterSelHead),
            "cond" => Ok(Stage::AfterEachCondition),
            "final" => Ok(Stage::Final),
            other => Err(format!("unknown stage `{other}` (expected selhead, cond or final)")),
        }
    }
}

/// Set of active checkpoints. Empty means plain beam search.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Stages(BTreeSet<Stage>);

impl Stages {
    pub fn none() -> Self {
        Stages(BTreeSet::new())
    }

    pub fn all() -> Self {
        [Stage::AfterSelHead, Stage::AfterEachCondition, Stage::Final]
            .into_iter()
            .collect()
    }

    pub fn contains(&self, s: Stage) -> bool {
        self.0.contains(&s)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn without(&self, s: Stage) -> Self {
        let mut out = self.clone();
        out.0.remove(&s);
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = Stage> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<Stage> for Stages {
    fn from_iter<I: IntoIterator<Item = Stage>>(iter: I) -> Self {
        Stages(iter.into_iter().collect())
    }
}

impl FromStr for Stages {
    type Err = String;

    /// Comma-separated stage codes; an empty string is the empty set.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Stages {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let codes: Vec<_> = self.iter().map(Stage::code).collect();
        f.write_str(&codes.join(","))
    }
}

/// What to return when every candidate failed its checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fallback {
    BestErroneous,
    Abstain,
}

impl fmt::Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fallback::BestErroneous => "best-erroneous",
            Fallback::Abstain => "abstain",
        })
    }
}

impl FromStr for Fallback {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "best-erroneous" => Ok(Fallback::BestErroneous),
            "abstain" => Ok(Fallback::Abstain),
            other => Err(format!("unknown fallback `{other}` (expected best-erroneous or abstain)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EgConfig {
    pub beam_width: usize,
    pub stages: Stages,
    pub fallback: Fallback,
    pub exec: ExecConfig,
    /// Candidates expanded per step before pruning, as a multiple of the
    /// beam width. Pruned entries are replaced from this pool.
    pub expansion_factor: usize,
    /// Whether two-stage decoding may move on to lower-ranked sketches.
    pub sketch_backtracking: bool,
}

impl Default for EgConfig {
    fn default() -> Self {
        EgConfig {
            beam_width: 5,
            stages: Stages::all(),
            fallback: Fallback::BestErroneous,
            exec: ExecConfig::default(),
            expansion_factor: 2,
            sketch_backtracking: true,
        }
    }
}

impl EgConfig {
    pub fn unguided(beam_width: usize) -> Self {
        EgConfig {
            beam_width,
            stages: Stages::none(),
            sketch_backtracking: false,
            ..EgConfig::default()
        }
    }

    pub fn eg_enabled(&self) -> bool {
        !self.stages.is_empty()
    }
}

/// Number of beam entries removed per failure kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrunedCounts {
    pub parse_error: usize,
    pub type_error: usize,
    pub empty_output: usize,
}

impl PrunedCounts {
    pub fn record(&mut self, kind: ErrorKind) {
        match kind {
            ErrorKind::ParseError => self.parse_error += 1,
            ErrorKind::TypeError => self.type_error += 1,
            ErrorKind::EmptyOutput => self.empty_output += 1,
        }
    }

    pub fn get(&self, kind: ErrorKind) -> usize {
        match kind {
            ErrorKind::ParseError => self.parse_error,
            ErrorKind::TypeError => self.type_error,
            ErrorKind::EmptyOutput => self.empty_output,
        }
    }

    pub fn total(&self) -> usize {
        self.parse_error + self.type_error + self.empty_output
    }

    pub fn merge(&mut self, other: &PrunedCounts) {
        self.parse_error += other.parse_error;
        self.type_error += other.type_error;
        self.empty_output += other.empty_output;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// `None` when the decoder abstained.
    pub program: Option<Query>,
    /// Log probability of `program`; negative infinity when abstaining.
    pub logprob: f64,
    /// Action path of `program` (fine-stage actions for two-stage models).
    pub actions: Vec<Action>,
    pub pruned_counts: PrunedCounts,
    /// Set when no candidate survived and the fallback policy decided the
    /// output.
    pub used_fallback: bool,
    pub backtrack_count: usize,
}

impl DecodeResult {
    pub(crate) fn abstain(pruned_counts: PrunedCounts) -> Self {
        DecodeResult {
            program: None,
            logprob: f64::NEG_INFINITY,
            actions: Vec::new(),
            pruned_counts,
            used_fallback: true,
            backtrack_count: 0,
        }
    }
}
