use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decoder::{
    decode_with_sketch_backtracking, eg_beam_decode, rerank_joint_candidates, DecodeResult, EgConfig, PrunedCounts,
};
use crate::error::{Error, Result};
use crate::scorers::{load_oracle_scorer, template_candidates, OracleLogitScorer, SketchScorerModel, TemplateScorerModel};
use crate::table::{Example, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorerKind {
    Oracle,
    Template,
    Sketch,
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorerKind::Oracle => "oracle",
            ScorerKind::Template => "template",
            ScorerKind::Sketch => "sketch",
        })
    }
}

impl FromStr for ScorerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(ScorerKind::Oracle),
            "template" => Ok(ScorerKind::Template),
            "sketch" => Ok(ScorerKind::Sketch),
            other => Err(format!("unknown scorer `{other}` (expected oracle, template or sketch)")),
        }
    }
}

/// A loaded scorer together with the decoding strategy that fits it:
/// staged beam search for oracle scripts, candidate reranking for the
/// template model and sketch backtracking for the two-stage model.
#[derive(Debug)]
pub enum Model {
    Oracle(OracleLogitScorer),
    Template(TemplateScorerModel),
    Sketch(SketchScorerModel),
}

impl Model {
    pub fn load(kind: ScorerKind, path: impl AsRef<Path>) -> Result<Self> {
        Ok(match kind {
            ScorerKind::Oracle => Model::Oracle(load_oracle_scorer(path)?),
            ScorerKind::Template => Model::Template(TemplateScorerModel::load(path)?),
            ScorerKind::Sketch => Model::Sketch(SketchScorerModel::load(path)?),
        })
    }

    pub fn kind(&self) -> ScorerKind {
        match self {
            Model::Oracle(_) => ScorerKind::Oracle,
            Model::Template(_) => ScorerKind::Template,
            Model::Sketch(_) => ScorerKind::Sketch,
        }
    }

    /// Decodes one example. A template model with no candidate at all
    /// abstains instead of failing.
    pub fn decode(&self, example: &Example, table: &Table, cfg: &EgConfig) -> Result<DecodeResult> {
        match self {
            Model::Oracle(s) => eg_beam_decode(s, example, table, cfg),
            Model::Template(m) => match template_candidates(m, example, table, cfg.beam_width) {
                Ok(cands) => Ok(rerank_joint_candidates(&cands, table, cfg)),
                Err(Error::NoViableCandidate(_)) => Ok(DecodeResult {
                    program: None,
                    logprob: f64::NEG_INFINITY,
                    actions: Vec::new(),
                    pruned_counts: PrunedCounts::default(),
                    used_fallback: true,
                    backtrack_count: 0,
                }),
                Err(e) => Err(e),
            },
            Model::Sketch(m) => decode_with_sketch_backtracking(m, example, table, cfg),
        }
    }
}
