//! Accuracy metrics, per-example records and the ablation matrix.

mod argmax;
mod model;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{DecodeResult, EgConfig, PrunedCounts, Stage, Stages};
use crate::error::Result;
use crate::exec::{execute, results_equal, ErrorKind, ExecOutcome};
use crate::sql::{canonical_equal, to_text};
use crate::table::{Example, Table, TableCatalog};

pub use argmax::{exhaustive_argmax, literal_pool, Argmax};
pub use model::{Model, ScorerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Correct,
    /// Executes, but the result differs from gold's.
    Wrong,
    ExecError,
    Abstain,
    /// No gold query; excluded from every rate.
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub gold: Option<String>,
    pub predicted: Option<String>,
    pub gold_outcome: Option<String>,
    pub predicted_outcome: Option<String>,
    pub predicted_error: Option<ErrorKind>,
    pub status: Status,
    pub syntactic_match: bool,
    /// Gold itself fails under the active execution flags.
    pub gold_failed: bool,
    pub pruned_counts: PrunedCounts,
    pub backtrack_count: usize,
    pub used_fallback: bool,
    /// Decoder error, if decoding did not finish.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub beam_width: usize,
    pub stages: String,
    pub fallback: String,
    pub expansion_factor: usize,
    pub sketch_backtracking: bool,
    pub empty_output_check: bool,
    pub count_empty_is_empty: bool,
}

impl From<&EgConfig> for ConfigEcho {
    fn from(cfg: &EgConfig) -> Self {
        ConfigEcho {
            beam_width: cfg.beam_width,
            stages: cfg.stages.to_string(),
            fallback: cfg.fallback.to_string(),
            expansion_factor: cfg.expansion_factor,
            sketch_backtracking: cfg.sketch_backtracking,
            empty_output_check: cfg.exec.empty_output_check,
            count_empty_is_empty: cfg.exec.count_empty_is_empty,
        }
    }
}

/// Prediction failures by kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub parse_error: usize,
    pub type_error: usize,
    pub empty_output: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub label: String,
    pub config: ConfigEcho,
    pub num_examples: usize,
    /// Examples with gold; every rate is a fraction of this number.
    pub num_labeled: usize,
    pub acc_syn: f64,
    pub acc_ex: f64,
    pub exec_error_rate: f64,
    pub abstain_rate: f64,
    pub wrong_rate: f64,
    pub errors_by_kind: ErrorBreakdown,
    pub gold_failures: usize,
    pub decode_errors: usize,
    pub pruned_totals: PrunedCounts,
    pub records: Vec<Record>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn count(&self, status: Status) -> usize {
        self.records.iter().filter(|r| r.status == status).count()
    }
}

fn render(outcome: &ExecOutcome) -> String {
    match outcome {
        ExecOutcome::ResultSet(cells) => {
            let cells: Vec<String> = cells.iter().map(ToString::to_string).collect();
            format!("[{}]", cells.join(", "))
        }
        ExecOutcome::Failure(f) => f.to_string(),
    }
}

fn record(example: &Example, table: &Table, decoded: Result<DecodeResult>, cfg: &EgConfig) -> Record {
    let (result, error) = match decoded {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let predicted = result.as_ref().and_then(|r| r.program.as_ref());
    let pred_outcome = predicted.map(|q| execute(q, table, &cfg.exec));
    let gold_outcome = example.gold.as_ref().map(|g| execute(g, table, &cfg.exec));

    let status = match (&example.gold, &pred_outcome) {
        (None, _) => Status::Unlabeled,
        (Some(_), None) => Status::Abstain,
        (Some(_), Some(ExecOutcome::Failure(_))) => Status::ExecError,
        (Some(_), Some(p)) => {
            if gold_outcome.as_ref().is_some_and(|g| results_equal(g, p)) {
                Status::Correct
            } else {
                Status::Wrong
            }
        }
    };
    Record {
        id: example.id.clone(),
        gold: example.gold.as_ref().map(|g| to_text(g, table)),
        predicted: predicted.map(|q| to_text(q, table)),
        gold_outcome: gold_outcome.as_ref().map(render),
        predicted_outcome: pred_outcome.as_ref().map(render),
        predicted_error: pred_outcome.as_ref().and_then(ExecOutcome::error_kind),
        status,
        syntactic_match: match (&example.gold, predicted) {
            (Some(g), Some(p)) => canonical_equal(g, p, table),
            _ => false,
        },
        gold_failed: gold_outcome.as_ref().is_some_and(|g| !g.is_ok()),
        pruned_counts: result.as_ref().map(|r| r.pruned_counts).unwrap_or_default(),
        backtrack_count: result.as_ref().map_or(0, |r| r.backtrack_count),
        used_fallback: result.as_ref().is_some_and(|r| r.used_fallback),
        error,
    }
}

/// Decodes every example (in parallel, merged in input order) and scores
/// the predictions. Decoder errors are recorded as abstentions. Examples
/// whose table is missing from `catalog` are recorded the same way.
pub fn evaluate<F>(decode: F, dataset: &[Example], catalog: &TableCatalog, cfg: &EgConfig) -> Report
where
    F: Fn(&Example, &Table) -> Result<DecodeResult> + Sync,
{
    let records: Vec<Record> = dataset
        .par_iter()
        .map(|ex| match catalog.table(&ex.table_id) {
            Ok(table) => record(ex, table, decode(ex, table), cfg),
            Err(e) => Record {
                id: ex.id.clone(),
                gold: None,
                predicted: None,
                gold_outcome: None,
                predicted_outcome: None,
                predicted_error: None,
                status: if ex.gold.is_some() { Status::Abstain } else { Status::Unlabeled },
                syntactic_match: false,
                gold_failed: false,
                pruned_counts: PrunedCounts::default(),
                backtrack_count: 0,
                used_fallback: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    summarize(String::new(), cfg, records)
}

fn summarize(label: String, cfg: &EgConfig, records: Vec<Record>) -> Report {
    let labeled: Vec<&Record> = records.iter().filter(|r| r.status != Status::Unlabeled).collect();
    let n = labeled.len();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let count = |s: Status| labeled.iter().filter(|r| r.status == s).count();

    let mut errors = ErrorBreakdown::default();
    let mut pruned = PrunedCounts::default();
    for r in &records {
        pruned.merge(&r.pruned_counts);
        if r.status == Status::ExecError {
            match r.predicted_error {
                Some(ErrorKind::ParseError) => errors.parse_error += 1,
                Some(ErrorKind::TypeError) => errors.type_error += 1,
                Some(ErrorKind::EmptyOutput) => errors.empty_output += 1,
                None => {}
            }
        }
    }
    Report {
        label,
        config: ConfigEcho::from(cfg),
        num_examples: records.len(),
        num_labeled: n,
        acc_syn: frac(labeled.iter().filter(|r| r.syntactic_match).count()),
        acc_ex: frac(count(Status::Correct)),
        exec_error_rate: frac(count(Status::ExecError)),
        abstain_rate: frac(count(Status::Abstain)),
        wrong_rate: frac(count(Status::Wrong)),
        errors_by_kind: errors,
        gold_failures: labeled.iter().filter(|r| r.gold_failed).count(),
        decode_errors: records.iter().filter(|r| r.error.is_some()).count(),
        pruned_totals: pruned,
        records,
    }
}

pub const LABEL_FULL: &str = "full EG";
pub const LABEL_NO_AGG: &str = "No Aggregation execution";
pub const LABEL_NO_COND: &str = "No Condition execution";
pub const LABEL_NO_BACKTRACK: &str = "No Sketch backtracking";
pub const LABEL_OFF: &str = "EG off";

/// The five ablation configurations derived from `base`, in report order.
pub fn ablation_configs(base: &EgConfig) -> Vec<(&'static str, EgConfig)> {
    let full = EgConfig {
        stages: Stages::all(),
        sketch_backtracking: true,
        ..base.clone()
    };
    vec![
        (LABEL_FULL, full.clone()),
        (
            LABEL_NO_AGG,
            EgConfig {
                stages: full.stages.without(Stage::AfterSelHead),
                ..full.clone()
            },
        ),
        (
            LABEL_NO_COND,
            EgConfig {
                stages: full.stages.without(Stage::AfterEachCondition),
                ..full.clone()
            },
        ),
        (
            LABEL_NO_BACKTRACK,
            EgConfig {
                sketch_backtracking: false,
                ..full.clone()
            },
        ),
        (
            LABEL_OFF,
            EgConfig {
                stages: Stages::none(),
                sketch_backtracking: false,
                ..full
            },
        ),
    ]
}

/// Evaluates `model` under every ablation configuration. For models
/// without sketches the backtracking row matches the full row.
pub fn run_ablations(model: &Model, dataset: &[Example], catalog: &TableCatalog, base: &EgConfig) -> Vec<Report> {
    ablation_configs(base)
        .into_iter()
        .map(|(label, cfg)| {
            let mut r = evaluate(|ex, t| model.decode(ex, t, &cfg), dataset, catalog, &cfg);
            r.label = label.to_string();
            r
        })
        .collect()
}

/// Aligned plain-text summary, one row per report.
pub fn summary_table(reports: &[Report]) -> String {
    let width = reports
        .iter()
        .map(|r| r.label.chars().count())
        .chain(["Configuration".len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>7}  {:>7}  {:>10}  {:>7}",
        "Configuration", "Acc_syn", "Acc_ex", "Exec error", "Abstain"
    );
    for r in reports {
        let pct = |x: f64| format!("{:.1}", 100.0 * x);
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>7}  {:>10}  {:>7}",
            r.label,
            pct(r.acc_syn),
            pct(r.acc_ex),
            pct(r.exec_error_rate),
            pct(r.abstain_rate)
        );
    }
    out
}
