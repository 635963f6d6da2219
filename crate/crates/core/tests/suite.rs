use egsql::decoder::{eg_beam_decode, EgConfig, Fallback, Stages};
use egsql::exec::execute;
use egsql::synth::{generate, SynthConfig};

fn corpus() -> egsql::synth::SynthCorpus {
    generate(&SynthConfig {
        num_examples: 300,
        seed: 11,
        ..SynthConfig::default()
    })
}

fn erroneous_outputs(stages: &str, k: usize) -> usize {
    let c = corpus();
    let (catalog, scorer) = (c.catalog(), c.scorer().unwrap());
    let cfg = EgConfig {
        beam_width: k,
        stages: stages.parse::<Stages>().unwrap(),
        fallback: Fallback::BestErroneous,
        ..EgConfig::default()
    };
    c.examples
        .iter()
        .filter(|e| {
            let t = catalog.table(&e.table_id).unwrap();
            let r = eg_beam_decode(&scorer, e, t, &cfg).unwrap();
            r.program.is_some_and(|q| !execute(&q, t, &cfg.exec).is_ok())
        })
        .count()
}

#[test]
fn condition_checks_never_add_erroneous_outputs() {
    for k in [1, 3, 5] {
        let final_only = erroneous_outputs("final", k);
        let with_cond = erroneous_outputs("cond,final", k);
        assert!(with_cond <= final_only, "k={k}: {with_cond} > {final_only}");
    }
}

#[test]
fn guided_beam_keeps_an_error_free_unguided_top() {
    let c = corpus();
    let (catalog, scorer) = (c.catalog(), c.scorer().unwrap());
    let mut eligible = 0;
    let mut worse = 0;
    for e in &c.examples {
        let t = catalog.table(&e.table_id).unwrap();
        let off = eg_beam_decode(&scorer, e, t, &EgConfig::unguided(5)).unwrap();
        let Some(q) = &off.program else { continue };
        if !execute(q, t, &EgConfig::default().exec).is_ok() {
            continue;
        }
        eligible += 1;
        let on = eg_beam_decode(&scorer, e, t, &EgConfig::default()).unwrap();
        if on.program.is_none() || on.logprob < off.logprob - 1e-12 {
            worse += 1;
        }
    }
    // not a theorem for width-limited beams, but it holds on this suite
    assert!(eligible > 100);
    assert_eq!(worse, 0, "{worse} of {eligible}");
}
