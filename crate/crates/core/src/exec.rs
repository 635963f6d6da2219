//! Execution of full and partial programs over a single table.
//!
//! Failures are values, never panics: a program either produces a result
//! multiset or fails with one of three kinds. Parse errors only arise when
//! executing surface text; the typed AST can fail with a type error or an
//! empty output.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sql::{parse, AggregateFn, Comparator, Condition, PartialProgram, Query};
use crate::table::{normalize_text, parse_real, Cell, ColumnType, Table};

/// Relative tolerance when comparing real values in result sets.
pub const RESULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    ParseError,
    TypeError,
    EmptyOutput,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 3] = [ErrorKind::ParseError, ErrorKind::TypeError, ErrorKind::EmptyOutput];
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::ParseError => "parse-error",
            ErrorKind::TypeError => "type-error",
            ErrorKind::EmptyOutput => "empty-output",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub kind: ErrorKind,
    pub detail: String,
}

impl Failure {
    fn type_error(detail: String) -> Self {
        Failure {
            kind: ErrorKind::TypeError,
            detail,
        }
    }

    fn empty(detail: impl Into<String>) -> Self {
        Failure {
            kind: ErrorKind::EmptyOutput,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExecOutcome {
    ResultSet(Vec<Cell>),
    Failure(Failure),
}

impl ExecOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, ExecOutcome::ResultSet(_))
    }

    pub fn failure(&self) -> Option<&Failure> {
        match self {
            ExecOutcome::Failure(f) => Some(f),
            ExecOutcome::ResultSet(_) => None,
        }
    }

    pub fn error_kind(&self) -> Option<ErrorKind> {
        self.failure().map(|f| f.kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecConfig {
    /// Treat a program whose filter selects no rows as failed.
    pub empty_output_check: bool,
    /// Whether `COUNT` over no rows counts as empty output (otherwise it
    /// yields `0`). Only consulted when `empty_output_check` is on.
    pub count_empty_is_empty: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            empty_output_check: true,
            count_empty_is_empty: true,
        }
    }
}

impl ExecConfig {
    fn empty_is_failure(&self, agg: AggregateFn) -> bool {
        self.empty_output_check && (agg != AggregateFn::Count || self.count_empty_is_empty)
    }
}

fn column_name(table: &Table, col: usize) -> &str {
    table.column(col).map_or("?", |c| c.name.as_str())
}

pub fn typecheck_agg(agg: AggregateFn, sel: usize, table: &Table) -> Result<(), Failure> {
    let col = table
        .column(sel)
        .ok_or_else(|| Failure::type_error(format!("column index {sel} out of range")))?;
    match (agg, col.ctype) {
        (AggregateFn::Sum | AggregateFn::Avg, ColumnType::Text) => Err(Failure::type_error(format!(
            "{agg} over text column `{}`",
            col.name
        ))),
        _ => Ok(()),
    }
}

pub fn typecheck_condition(cond: &Condition, table: &Table) -> Result<(), Failure> {
    let col = table.column(cond.column).ok_or_else(|| {
        Failure::type_error(format!("condition column index {} out of range", cond.column))
    })?;
    match col.ctype {
        ColumnType::Text if cond.op != Comparator::Eq => Err(Failure::type_error(format!(
            "`{}` on text column `{}`",
            cond.op, col.name
        ))),
        ColumnType::Real if parse_real(&cond.value).is_none() => Err(Failure::type_error(format!(
            "non-numeric literal '{}' compared with real column `{}`",
            cond.value, col.name
        ))),
        _ => Ok(()),
    }
}

fn matches(cell: &Cell, op: Comparator, value: &str) -> bool {
    match cell {
        Cell::Text(s) => op == Comparator::Eq && normalize_text(s) == normalize_text(value),
        Cell::Real(v) => {
            let Some(lit) = parse_real(value) else {
                return false;
            };
            match op {
                Comparator::Eq => *v == lit,
                Comparator::Gt => *v > lit,
                Comparator::Lt => *v < lit,
            }
        }
    }
}

/// Indices of rows satisfying every condition. All conditions are type
/// checked before any row is read.
pub fn execute_filter(table: &Table, conds: &[Condition]) -> Result<Vec<usize>, Failure> {
    for c in conds {
        typecheck_condition(c, table)?;
    }
    Ok(table
        .rows()
        .iter()
        .enumerate()
        .filter(|(_, row)| conds.iter().all(|c| matches(&row[c.column], c.op, &c.value)))
        .map(|(i, _)| i)
        .collect())
}

fn text_order(a: &str, b: &str) -> Ordering {
    normalize_text(a).cmp(&normalize_text(b))
}

/// Extreme value of a column; the first occurrence wins ties.
fn extreme<'a>(cells: impl Iterator<Item = &'a Cell>, want: Ordering) -> Option<Cell> {
    let mut best: Option<&Cell> = None;
    for c in cells {
        best = match best {
            None => Some(c),
            Some(b) => {
                let ord = match (c, b) {
                    (Cell::Real(x), Cell::Real(y)) => x.partial_cmp(y).unwrap_or(Ordering::Equal),
                    (Cell::Text(x), Cell::Text(y)) => text_order(x, y),
                    _ => Ordering::Equal,
                };
                if ord == want {
                    Some(c)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.cloned()
}

fn aggregate(agg: AggregateFn, table: &Table, sel: usize, rows: &[usize]) -> Vec<Cell> {
    let cells = || rows.iter().map(|&r| &table.rows()[r][sel]);
    let reals = || cells().filter_map(Cell::as_real);
    match agg {
        AggregateFn::None => cells().cloned().collect(),
        AggregateFn::Count => vec![Cell::Real(rows.len() as f64)],
        AggregateFn::Max => extreme(cells(), Ordering::Greater).into_iter().collect(),
        AggregateFn::Min => extreme(cells(), Ordering::Less).into_iter().collect(),
        // over no rows these have no value; the result set is left empty
        AggregateFn::Sum if rows.is_empty() => vec![],
        AggregateFn::Avg if rows.is_empty() => vec![],
        AggregateFn::Sum => vec![Cell::Real(reals().sum())],
        AggregateFn::Avg => vec![Cell::Real(reals().sum::<f64>() / rows.len() as f64)],
    }
}

pub fn execute(q: &Query, table: &Table, cfg: &ExecConfig) -> ExecOutcome {
    if let Err(f) = typecheck_agg(q.agg, q.sel, table) {
        return ExecOutcome::Failure(f);
    }
    let rows = match execute_filter(table, &q.conds) {
        Ok(rows) => rows,
        Err(f) => return ExecOutcome::Failure(f),
    };
    if rows.is_empty() && cfg.empty_is_failure(q.agg) {
        return ExecOutcome::Failure(Failure::empty(if q.conds.is_empty() {
            "table has no rows".to_string()
        } else {
            "conditions select no rows".to_string()
        }));
    }
    ExecOutcome::ResultSet(aggregate(q.agg, table, q.sel, &rows))
}

/// Parses and executes surface text; syntax errors become `ParseError`
/// failures.
pub fn execute_text(text: &str, table: &Table, cfg: &ExecConfig) -> ExecOutcome {
    match parse(text, table) {
        Ok(q) => execute(&q, table, cfg),
        Err(e) => ExecOutcome::Failure(Failure {
            kind: ErrorKind::ParseError,
            detail: e.to_string(),
        }),
    }
}

/// Executability check for a decoding checkpoint.
///
/// A failure here implies the same failure kind for every extension of `p`
/// under the same config: type errors are local to a component, and adding
/// conditions can only shrink the surviving row set.
pub fn check_partial(p: &PartialProgram, table: &Table, cfg: &ExecConfig) -> Result<(), Failure> {
    typecheck_agg(p.agg(), p.sel(), table)?;
    let PartialProgram::WithConds { agg, conds, .. } = p else {
        return Ok(());
    };
    for c in conds {
        typecheck_condition(c, table)?;
    }
    if cfg.empty_is_failure(*agg) && execute_filter(table, conds)?.is_empty() {
        return Err(Failure::empty(format!(
            "conditions {} select no rows",
            conds
                .iter()
                .map(|c| format!("{} {} '{}'", column_name(table, c.column), c.op, c.value))
                .collect::<Vec<_>>()
                .join(" AND ")
        )));
    }
    Ok(())
}

fn reals_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= RESULT_TOLERANCE * a.abs().max(b.abs())
}

fn cell_cmp(a: &Cell, b: &Cell) -> Ordering {
    match (a, b) {
        (Cell::Real(x), Cell::Real(y)) => x.partial_cmp(y).unwrap_or(Ordering::Equal),
        (Cell::Text(x), Cell::Text(y)) => text_order(x, y),
        (Cell::Real(_), Cell::Text(_)) => Ordering::Less,
        (Cell::Text(_), Cell::Real(_)) => Ordering::Greater,
    }
}

fn cells_equal(a: &Cell, b: &Cell) -> bool {
    match (a, b) {
        (Cell::Real(x), Cell::Real(y)) => reals_close(*x, *y),
        (Cell::Text(x), Cell::Text(y)) => normalize_text(x) == normalize_text(y),
        // a numeric text cell against a real value
        (Cell::Text(t), Cell::Real(v)) | (Cell::Real(v), Cell::Text(t)) => {
            parse_real(t).is_some_and(|x| reals_close(x, *v))
        }
    }
}

/// Multiset equality of two result sets. Failures never compare equal.
pub fn results_equal(a: &ExecOutcome, b: &ExecOutcome) -> bool {
    let (ExecOutcome::ResultSet(x), ExecOutcome::ResultSet(y)) = (a, b) else {
        return false;
    };
    if x.len() != y.len() {
        return false;
    }
    let normalize = |cells: &[Cell]| {
        let mut v: Vec<Cell> = cells
            .iter()
            .map(|c| match c {
                Cell::Text(t) => parse_real(t).map_or_else(|| c.clone(), Cell::Real),
                Cell::Real(_) => c.clone(),
            })
            .collect();
        v.sort_by(cell_cmp);
        v
    };
    normalize(x)
        .iter()
        .zip(normalize(y).iter())
        .all(|(p, q)| cells_equal(p, q))
}
