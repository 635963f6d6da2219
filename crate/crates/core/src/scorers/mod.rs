//! Scorers that drive the decoder: a script replayer for externally
//! produced distributions, and two small trainable models that only look at
//! the question and the table schema.

mod features;
mod loglinear;
mod oracle;
mod sketch;
mod template;

pub use loglinear::{LogLinear, TrainingInstance, Hyper};
pub use oracle::{load_oracle_scorer, write_scripts, OracleFine, OracleLogitScorer, OracleScript, OracleState, ScriptStep};
pub use sketch::{FineScorer, FineState, SketchScorerModel};
pub use template::{extract_templates, template_candidates, Template, TemplateScorerModel};
