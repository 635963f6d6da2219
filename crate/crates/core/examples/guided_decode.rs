//! The two-path scenario: plain beam search returns a program that fails,
//! execution guidance prunes it and the empty-result alternative.

use egsql::decoder::{eg_beam_decode, EgConfig};
use egsql::fixtures::{haugar_example, haugar_script, matches_table};
use egsql::scorers::OracleLogitScorer;
use egsql::to_text;

fn main() -> egsql::Result<()> {
    let scorer = OracleLogitScorer::from_scripts(vec![haugar_script()])?;
    let example = haugar_example();
    let table = matches_table();
    println!("question: {}", example.question.join(" "));

    for (name, cfg) in [("beam search", EgConfig::unguided(1)), ("guided", EgConfig::default())] {
        let r = eg_beam_decode(&scorer, &example, &table, &cfg)?;
        let text = r.program.as_ref().map_or("ABSTAIN".to_string(), |q| to_text(q, &table));
        println!(
            "{name:>12}: {text}  (p = {:.3}, pruned: {} type, {} empty)",
            r.logprob.exp(),
            r.pruned_counts.type_error,
            r.pruned_counts.empty_output
        );
    }

    // checking only the finished program reproduces post-hoc filtering
    let post_hoc = EgConfig {
        stages: "final".parse().expect("valid stage list"),
        ..EgConfig::default()
    };
    let r = eg_beam_decode(&scorer, &example, &table, &post_hoc)?;
    println!("  final only: {}", to_text(r.program.as_ref().expect("a program survives"), &table));
    Ok(())
}
