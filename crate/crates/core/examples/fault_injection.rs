//! Generates the seeded fault-injected corpus and prints the ablation
//! table for the oracle scorer at beam widths 3 and 5.

use egsql::eval::{run_ablations, summary_table, Model};
use egsql::synth::{generate, SynthConfig};
use egsql::{EgConfig, Fallback};

fn main() -> egsql::Result<()> {
    let corpus = generate(&SynthConfig::default());
    let faulty = corpus.faults.iter().filter(|f| f.is_some()).count();
    println!("{} examples, {faulty} with an injected fault", corpus.examples.len());

    let model = Model::Oracle(corpus.scorer()?);
    let catalog = corpus.catalog();
    for k in [3, 5] {
        let base = EgConfig {
            beam_width: k,
            fallback: Fallback::Abstain,
            ..EgConfig::default()
        };
        let reports = run_ablations(&model, &corpus.examples, &catalog, &base);
        println!("\nbeam width {k}");
        print!("{}", summary_table(&reports));
    }
    Ok(())
}
