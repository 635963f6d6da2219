//! Two-stage decoding where every filling of the best sketch selects no
//! rows, so the decoder falls back to the next sketch.

use egsql::decoder::{decode_with_sketch_backtracking, EgConfig, SketchScorer};
use egsql::fixtures::{roster_example, roster_script, roster_table};
use egsql::scorers::OracleLogitScorer;
use egsql::to_text;

fn main() -> egsql::Result<()> {
    let scorer = OracleLogitScorer::from_scripts(vec![roster_script()])?;
    let example = roster_example();
    let table = roster_table();
    println!("question: {}", example.question.join(" "));
    for (sketch, lp) in scorer.sketch_rank(&example, &table)? {
        println!("  sketch {sketch}  p = {:.2}", lp.exp());
    }

    for backtrack in [false, true] {
        let cfg = EgConfig {
            sketch_backtracking: backtrack,
            fallback: egsql::Fallback::Abstain,
            ..EgConfig::default()
        };
        let r = decode_with_sketch_backtracking(&scorer, &example, &table, &cfg)?;
        println!(
            "backtracking {backtrack:>5}: {}  (backtracks {}, pruned {})",
            r.program.as_ref().map_or("ABSTAIN".to_string(), |q| to_text(q, &table)),
            r.backtrack_count,
            r.pruned_counts.total()
        );
    }
    Ok(())
}
