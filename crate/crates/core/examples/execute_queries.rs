//! Parses query text against a table, executes it and prints either the
//! result set or the failure kind.

use egsql::exec::{execute, ExecConfig};
use egsql::fixtures::matches_table;
use egsql::{parse, to_text};

fn main() -> egsql::Result<()> {
    let table = matches_table();
    let cfg = ExecConfig::default();
    let queries = [
        "SELECT COUNT opponent WHERE opponent = 'Haugar'",
        "SELECT opponent WHERE points > 0",
        "SELECT AVG points",
        "SELECT SUM opponent",
        "SELECT COUNT opponent WHERE opponent > 'Haugar'",
        "SELECT COUNT opponent WHERE opponent = 'UEFA'",
    ];
    for text in queries {
        let q = parse(text, &table)?;
        assert_eq!(parse(&to_text(&q, &table), &table)?, q);
        println!("{text}\n    -> {:?}", execute(&q, &table, &cfg));
    }

    let lenient = ExecConfig {
        empty_output_check: true,
        count_empty_is_empty: false,
    };
    let q = parse("SELECT COUNT opponent WHERE opponent = 'UEFA'", &table)?;
    println!("\nwith COUNT over no rows allowed: {:?}", execute(&q, &table, &lenient));

    match parse("SELECT MEDIAN points", &table) {
        Ok(_) => unreachable!(),
        Err(e) => println!("parse error: {e}"),
    }
    Ok(())
}
