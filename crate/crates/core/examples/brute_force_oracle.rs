//! Cross-checks the beam decoder against exhaustive enumeration on tiny
//! random cases.

use egsql::decoder::{eg_beam_decode, EgConfig, Fallback};
use egsql::eval::exhaustive_argmax;
use egsql::synth::oracle_cases;
use egsql::to_text;

fn main() -> egsql::Result<()> {
    let mut agree = 0;
    let cases = oracle_cases(1, 20);
    for case in &cases {
        let scorer = case.scorer()?;
        let cfg = EgConfig {
            beam_width: 20_000,
            fallback: Fallback::Abstain,
            ..EgConfig::default()
        };
        let beam = eg_beam_decode(&scorer, &case.example, &case.table, &cfg)?;
        let best = exhaustive_argmax(&scorer, &case.example, &case.table, &cfg.exec, case.max_conds)?;
        let show = |q: Option<&egsql::Query>| q.map_or("ABSTAIN".to_string(), |q| to_text(q, &case.table));
        let same = beam.program.as_ref() == best.as_ref().map(|b| &b.query);
        agree += usize::from(same);
        println!(
            "{:>7} {:<50} {}",
            case.example.id,
            show(beam.program.as_ref()),
            match &best {
                Some(b) => format!("{} of {} programs execute", b.error_free, b.enumerated),
                None => "nothing executes".to_string(),
            }
        );
    }
    println!("\nbeam matches enumeration on {agree} of {} cases", cases.len());
    Ok(())
}
