//! Small hand-built scenarios used by the examples and tests.

use crate::decoder::Action;
use crate::scorers::{OracleScript, ScriptStep};
use crate::sql::{AggregateFn, Comparator, Condition, Query, Sketch};
use crate::table::{Cell, ColumnSchema, ColumnType, Example, Table};

fn text(s: &str) -> Cell {
    Cell::Text(s.to_string())
}

fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn step(position: &str, after: Option<Vec<Action>>, actions: Vec<(Action, f64)>) -> ScriptStep {
    ScriptStep {
        position: position.to_string(),
        after,
        actions,
    }
}

fn span(start: usize) -> Action {
    Action::PickValueSpan { start, end: start + 1 }
}

/// Match results of one club: `opponent`, `result`, `points`.
pub fn matches_table() -> Table {
    Table::new(
        "matches",
        vec![
            ColumnSchema::new("opponent", ColumnType::Text),
            ColumnSchema::new("result", ColumnType::Text),
            ColumnSchema::new("points", ColumnType::Real),
        ],
        vec![
            vec![text("Haugar"), text("1:2"), Cell::Real(0.0)],
            vec![text("Rosenborg"), text("3:0"), Cell::Real(3.0)],
            vec![text("Brann"), text("2:2"), Cell::Real(1.0)],
        ],
    )
    .expect("fixture table is valid")
}

/// "how many games against Haugar in the UEFA cup ended 1:2", answered by
/// `SELECT COUNT opponent WHERE opponent = 'Haugar'`.
pub fn haugar_example() -> Example {
    Example {
        id: "haugar".into(),
        question: tokens("how many games against Haugar in the UEFA cup ended 1:2"),
        table_id: "matches".into(),
        gold: Some(Query::new(
            AggregateFn::Count,
            0,
            vec![Condition::new(0, Comparator::Eq, "Haugar")],
        )),
    }
}

/// Scripted distributions for [`haugar_example`]. The most likely
/// condition is `opponent > Haugar` (type error); below it come
/// `opponent = Haugar`, `opponent = UEFA` (empty result) and
/// `result = 1:2`.
pub fn haugar_script() -> OracleScript {
    let head = vec![Action::PickAgg(AggregateFn::Count), Action::PickColumn(0)];
    let with = |rest: &[Action]| {
        let mut v = head.clone();
        v.extend_from_slice(rest);
        Some(v)
    };
    let eq = Action::PickOp(Comparator::Eq);
    let gt = Action::PickOp(Comparator::Gt);
    let (opp, res) = (Action::PickColumn(0), Action::PickColumn(1));
    OracleScript {
        example_id: "haugar".into(),
        steps: vec![
            step("agg", None, vec![(head[0], 1.0)]),
            step("sel", None, vec![(head[1], 1.0)]),
            step("cond_col", None, vec![(opp, 0.9), (res, 0.1)]),
            step("cond_op", with(&[opp]), vec![(gt, 0.6), (eq, 0.4)]),
            step("cond_op", with(&[res]), vec![(eq, 1.0)]),
            step("cond_val", with(&[opp, gt]), vec![(span(4), 1.0)]),
            step("cond_val", with(&[opp, eq]), vec![(span(4), 0.6), (span(7), 0.4)]),
            step("cond_val", with(&[res, eq]), vec![(span(10), 1.0)]),
            step("cond_col", with(&[opp, gt, span(4)]), vec![(Action::EndConditions, 1.0)]),
            step("cond_col", with(&[opp, eq, span(4)]), vec![(Action::EndConditions, 1.0)]),
            step("cond_col", with(&[opp, eq, span(7)]), vec![(Action::EndConditions, 1.0)]),
            step("cond_col", with(&[res, eq, span(10)]), vec![(Action::EndConditions, 1.0)]),
        ],
        uniform_default: false,
        sketches: None,
    }
}

/// Basketball roster: `player`, `team`, `position`, `year`.
pub fn roster_table() -> Table {
    Table::new(
        "roster",
        vec![
            ColumnSchema::new("player", ColumnType::Text),
            ColumnSchema::new("team", ColumnType::Text),
            ColumnSchema::new("position", ColumnType::Text),
            ColumnSchema::new("year", ColumnType::Real),
        ],
        vec![
            vec![text("Smith"), text("Lakers"), text("guard"), Cell::Real(2010.0)],
            vec![text("Jones"), text("Lakers"), text("center"), Cell::Real(2011.0)],
            vec![text("Brown"), text("Celtics"), text("guard"), Cell::Real(2011.0)],
        ],
    )
    .expect("fixture table is valid")
}

/// "which lakers guard played in 2011": no row satisfies all three
/// mentioned constraints, the gold keeps two of them.
pub fn roster_example() -> Example {
    Example {
        id: "roster".into(),
        question: tokens("which lakers guard played in 2011"),
        table_id: "roster".into(),
        gold: Some(Query::new(
            AggregateFn::None,
            0,
            vec![
                Condition::new(1, Comparator::Eq, "lakers"),
                Condition::new(2, Comparator::Eq, "guard"),
            ],
        )),
    }
}

/// Ranks the three-condition sketch first; every filling it allows is
/// empty on [`roster_table`].
pub fn roster_script() -> OracleScript {
    let eq = Action::PickOp(Comparator::Eq);
    let (lakers, guard, year) = (span(1), span(2), span(5));
    OracleScript {
        example_id: "roster".into(),
        steps: vec![
            step("agg", None, vec![(Action::PickAgg(AggregateFn::None), 1.0)]),
            step("sel", None, vec![(Action::PickColumn(0), 1.0)]),
            step("cond_col", None, vec![(Action::PickColumn(1), 1.0)]),
            step("cond_op", None, vec![(eq, 1.0)]),
            step("cond_val", None, vec![(lakers, 0.8), (guard, 0.2)]),
            step("cond_col", None, vec![(Action::PickColumn(2), 0.6), (Action::EndConditions, 0.4)]),
            step("cond_op", None, vec![(eq, 1.0)]),
            step("cond_val", None, vec![(guard, 0.9), (lakers, 0.1)]),
            step("cond_col", None, vec![(Action::PickColumn(3), 0.5), (Action::EndConditions, 0.5)]),
            step("cond_op", None, vec![(eq, 1.0)]),
            step("cond_val", None, vec![(year, 1.0)]),
            step("cond_col", None, vec![(Action::EndConditions, 1.0)]),
        ],
        uniform_default: false,
        sketches: Some(vec![
            (Sketch::new(vec![Comparator::Eq; 3]), 0.6),
            (Sketch::new(vec![Comparator::Eq; 2]), 0.4),
        ]),
    }
}
