//! Command-line front end. Every subcommand is a thin binding over the
//! library; errors map to exit codes via [`Error::exit_code`].

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::decoder::{EgConfig, Fallback, Stages};
use crate::error::{Error, Result};
use crate::eval::{evaluate, exhaustive_argmax, run_ablations, summary_table, ConfigEcho, Model, ScorerKind};
use crate::exec::ExecConfig;
use crate::scorers::{Hyper, SketchScorerModel, TemplateScorerModel};
use crate::sql::{to_text, DEFAULT_MAX_CONDS};
use crate::synth::{generate, SynthConfig};
use crate::table::{load_examples, load_tables, write_lines, Example, TableCatalog};

#[derive(Debug, Parser)]
#[command(name = "egsql", version, about = "Execution-guided decoding for single-table text-to-SQL")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load tables and examples and report the first problem.
    Validate(DataArgs),
    /// Write one predicted query (or ABSTAIN) per example.
    Decode(RunArgs),
    /// Score predictions against gold and write a report.
    Eval(RunArgs),
    /// Evaluate the five ablation configurations.
    Ablate(RunArgs),
    /// Train a template or sketch model.
    Train(TrainArgs),
    /// Exhaustive argmax over enumerated error-free programs.
    Oracle(OracleArgs),
    /// Write a seeded fault-injected corpus with oracle scripts.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub tables: PathBuf,
    #[arg(long)]
    pub examples: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "oracle")]
    pub scorer: ScorerKind,
    /// Oracle script file or trained model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub beam_width: u64,
    #[arg(long, value_enum, default_value = "on")]
    pub eg: Switch,
    #[arg(long, default_value = "selhead,cond,final")]
    pub eg_stages: Stages,
    #[arg(long, default_value = "best-erroneous")]
    pub fallback: Fallback,
    #[arg(long, value_enum, default_value = "on")]
    pub empty_output_check: Switch,
    #[arg(long, value_enum, default_value = "on")]
    pub count_empty_is_empty: Switch,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub expansion_factor: u64,
    #[arg(long, value_enum, default_value = "on")]
    pub sketch_backtracking: Switch,
    /// Condition cap for oracle scripts.
    #[arg(long, default_value_t = DEFAULT_MAX_CONDS)]
    pub max_conds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn eg_config(&self) -> EgConfig {
        let on = self.eg.on();
        EgConfig {
            beam_width: self.beam_width as usize,
            stages: if on { self.eg_stages.clone() } else { Stages::none() },
            fallback: self.fallback,
            exec: ExecConfig {
                empty_output_check: self.empty_output_check.on(),
                count_empty_is_empty: self.count_empty_is_empty.on(),
            },
            expansion_factor: self.expansion_factor as usize,
            sketch_backtracking: on && self.sketch_backtracking.on(),
        }
    }

    fn load(&self) -> Result<(TableCatalog, Vec<Example>, Model)> {
        require(&[&self.data.tables, &self.data.examples, &self.model])?;
        let (catalog, examples) = load_data(&self.data)?;
        let model = match Model::load(self.scorer, &self.model)? {
            Model::Oracle(s) => Model::Oracle(s.with_max_conds(self.max_conds)),
            m => m,
        };
        Ok((catalog, examples, model))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainKind {
    Template,
    Sketch,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub kind: TrainKind,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 2)]
    pub ngram_order: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Oracle script file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub max_conds: usize,
    #[arg(long, value_enum, default_value = "on")]
    pub empty_output_check: Switch,
    #[arg(long, value_enum, default_value = "on")]
    pub count_empty_is_empty: Switch,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    pub num_examples: usize,
    #[arg(long, default_value_t = 40)]
    pub num_tables: usize,
    #[arg(long, default_value_t = 0.35)]
    pub fault_rate: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn require(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(Error::io(*p, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
    }
    Ok(())
}

fn load_data(data: &DataArgs) -> Result<(TableCatalog, Vec<Example>)> {
    require(&[&data.tables, &data.examples])?;
    let catalog = load_tables(&data.tables)?;
    let examples = load_examples(&data.examples, &catalog)?;
    Ok((catalog, examples))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tables: String,
    examples: String,
    scorer: String,
    model: String,
    max_conds: usize,
    seed: u64,
    config: ConfigEcho,
    num_examples: usize,
    abstained: usize,
    used_fallback: usize,
}

/// Sibling path `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn cmd_validate(args: &DataArgs) -> Result<()> {
    let (catalog, examples) = load_data(args)?;
    let labeled = examples.iter().filter(|e| e.gold.is_some()).count();
    println!("{} tables, {} examples ({labeled} with gold)", catalog.len(), examples.len());
    Ok(())
}

fn cmd_decode(args: &RunArgs) -> Result<()> {
    let (catalog, examples, model) = args.load()?;
    let cfg = args.eg_config();
    let mut lines = Vec::with_capacity(examples.len());
    let (mut abstained, mut fallback) = (0, 0);
    for ex in &examples {
        let table = catalog.table(&ex.table_id)?;
        let r = model.decode(ex, table, &cfg)?;
        fallback += usize::from(r.used_fallback);
        match &r.program {
            Some(q) => lines.push(to_text(q, table)),
            None => {
                abstained += 1;
                lines.push("ABSTAIN".to_string());
            }
        }
    }
    let mut text = lines.join("\n");
    text.push('\n');
    let manifest = Manifest {
        command: "decode",
        tables: args.data.tables.display().to_string(),
        examples: args.data.examples.display().to_string(),
        scorer: args.scorer.to_string(),
        model: args.model.display().to_string(),
        max_conds: args.max_conds,
        seed: args.seed,
        config: ConfigEcho::from(&cfg),
        num_examples: examples.len(),
        abstained,
        used_fallback: fallback,
    };
    let manifest = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    match &args.out {
        Some(out) => {
            emit(Some(out), &text)?;
            emit(Some(&manifest_path(out)), &manifest)
        }
        None => {
            print!("{text}");
            eprint!("{manifest}");
            Ok(())
        }
    }
}

fn cmd_eval(args: &RunArgs) -> Result<()> {
    let (catalog, examples, model) = args.load()?;
    let cfg = args.eg_config();
    let mut report = evaluate(|ex, t| model.decode(ex, t, &cfg), &examples, &catalog, &cfg);
    report.label = if cfg.eg_enabled() { "EG" } else { "EG off" }.to_string();
    emit(args.out.as_deref(), &report.to_json())?;
    if args.out.is_some() {
        print!("{}", summary_table(std::slice::from_ref(&report)));
    }
    Ok(())
}

fn cmd_ablate(args: &RunArgs) -> Result<()> {
    let (catalog, examples, model) = args.load()?;
    let reports = run_ablations(&model, &examples, &catalog, &args.eg_config());
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n";
    emit(args.out.as_deref(), &json)?;
    if args.out.is_some() {
        print!("{}", summary_table(&reports));
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let (catalog, examples) = load_data(&args.data)?;
    let hyper = Hyper {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        ngram_order: args.ngram_order,
    };
    match args.kind {
        TrainKind::Template => TemplateScorerModel::train(&examples, &catalog, &hyper)?.save(&args.out),
        TrainKind::Sketch => SketchScorerModel::train(&examples, &catalog, &hyper)?.save(&args.out),
    }
}

#[derive(Serialize)]
struct OracleLine {
    example_id: String,
    argmax: Option<String>,
    logprob: Option<f64>,
    enumerated: usize,
    error_free: usize,
}

fn cmd_oracle(args: &OracleArgs) -> Result<()> {
    require(&[&args.model])?;
    let (catalog, examples) = load_data(&args.data)?;
    let scorer = crate::scorers::load_oracle_scorer(&args.model)?.with_max_conds(args.max_conds);
    let exec = ExecConfig {
        empty_output_check: args.empty_output_check.on(),
        count_empty_is_empty: args.count_empty_is_empty.on(),
    };
    let mut lines = Vec::new();
    for ex in &examples {
        let table = catalog.table(&ex.table_id)?;
        let best = exhaustive_argmax(&scorer, ex, table, &exec, args.max_conds)?;
        let line = OracleLine {
            example_id: ex.id.clone(),
            argmax: best.as_ref().map(|b| to_text(&b.query, table)),
            logprob: best.as_ref().map(|b| b.logprob),
            enumerated: best.as_ref().map_or(0, |b| b.enumerated),
            error_free: best.as_ref().map_or(0, |b| b.error_free),
        };
        lines.push(serde_json::to_string(&line).expect("line serializes"));
    }
    match &args.out {
        Some(p) => write_lines(p, lines.into_iter()),
        None => {
            lines.iter().for_each(|l| println!("{l}"));
            Ok(())
        }
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let corpus = generate(&SynthConfig {
        num_examples: args.num_examples,
        num_tables: args.num_tables,
        seed: args.seed,
        fault_rate: args.fault_rate.clamp(0.0, 1.0),
        ..SynthConfig::default()
    });
    corpus.write(&args.out)?;
    println!(
        "{} tables, {} examples written to {}",
        corpus.tables.len(),
        corpus.examples.len(),
        args.out.display()
    );
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Train(a) => cmd_train(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Parses the process arguments and runs the command; returns the exit
/// code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
