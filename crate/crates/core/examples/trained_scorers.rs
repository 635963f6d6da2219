//! Trains the template and sketch models on a clean synthetic corpus and
//! compares guided and unguided decoding on held-out questions.

use egsql::eval::{evaluate, summary_table, Model};
use egsql::scorers::{Hyper, SketchScorerModel, TemplateScorerModel};
use egsql::synth::{generate, SynthConfig};
use egsql::EgConfig;

fn main() -> egsql::Result<()> {
    let corpus = generate(&SynthConfig {
        num_examples: 400,
        fault_rate: 0.0,
        seed: 21,
        ..SynthConfig::default()
    });
    let catalog = corpus.catalog();
    let (train, test) = corpus.examples.split_at(300);
    let hyper = Hyper::default();

    let models = [
        ("template", Model::Template(TemplateScorerModel::train(train, &catalog, &hyper)?)),
        ("sketch", Model::Sketch(SketchScorerModel::train(train, &catalog, &hyper)?)),
    ];
    let mut reports = Vec::new();
    for (name, model) in &models {
        for (mode, cfg) in [("EG", EgConfig::default()), ("EG off", EgConfig::unguided(5))] {
            let mut r = evaluate(|ex, t| model.decode(ex, t, &cfg), test, &catalog, &cfg);
            r.label = format!("{name} {mode}");
            reports.push(r);
        }
    }
    print!("{}", summary_table(&reports));
    Ok(())
}
