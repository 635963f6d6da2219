//! Execution-guided decoding for single-table text-to-SQL.
//!
//! Partial programs are executed against the table while decoding, and
//! candidates that fail to parse, mistype an operator, or select nothing
//! are removed from the beam.

pub mod cli;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod exec;
pub mod fixtures;
pub mod scorers;
pub mod sql;
pub mod synth;
pub mod table;

pub use decoder::{
    decode_with_sketch_backtracking, eg_beam_decode, rerank_joint_candidates, DecodeResult, EgConfig, Fallback,
    Scorer, SketchScorer, Stage, Stages,
};
pub use error::{Error, Result};
pub use exec::{execute, ExecConfig, ExecOutcome, ErrorKind};
pub use sql::{parse, to_text, AggregateFn, Comparator, Condition, Query};
pub use table::{load_examples, load_tables, Example, Table, TableCatalog};
