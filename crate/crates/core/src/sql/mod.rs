//! AST for the single-table dialect `SELECT [agg] col [WHERE col op value [AND ...]]`,
//! its executable prefixes, and the comparator-only sketches used by
//! two-stage decoders.

mod enumerate;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::table::{normalize_text, parse_real, ColumnType, Table};

pub use enumerate::{enumerate_programs, ProgramEnumerator};
pub use parser::{parse, to_text, ParseError};

/// Condition cap used when nothing else is configured.
pub const DEFAULT_MAX_CONDS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AggregateFn {
    None,
    Max,
    Min,
    Count,
    Sum,
    Avg,
}

impl AggregateFn {
    pub const ALL: [AggregateFn; 6] = [
        AggregateFn::None,
        AggregateFn::Max,
        AggregateFn::Min,
        AggregateFn::Count,
        AggregateFn::Sum,
        AggregateFn::Avg,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Surface keyword; `None` has no keyword.
    pub fn keyword(self) -> Option<&'static str> {
        match self {
            AggregateFn::None => None,
            AggregateFn::Max => Some("MAX"),
            AggregateFn::Min => Some("MIN"),
            AggregateFn::Count => Some("COUNT"),
            AggregateFn::Sum => Some("SUM"),
            AggregateFn::Avg => Some("AVG"),
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.keyword().is_some_and(|k| k.eq_ignore_ascii_case(word)))
    }
}

impl fmt::Display for AggregateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword().unwrap_or("NONE"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Comparator {
    Eq,
    Gt,
    Lt,
}

impl Comparator {
    pub const ALL: [Comparator; 3] = [Comparator::Eq, Comparator::Gt, Comparator::Lt];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Gt => ">",
            Comparator::Lt => "<",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.symbol() == s)
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Condition {
    pub column: usize,
    pub op: Comparator,
    /// Raw literal; interpreted per column type at execution.
    pub value: String,
}

impl Condition {
    pub fn new(column: usize, op: Comparator, value: impl Into<String>) -> Self {
        Condition {
            column,
            op,
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Query {
    pub agg: AggregateFn,
    pub sel: usize,
    pub conds: Vec<Condition>,
}

impl Query {
    pub fn new(agg: AggregateFn, sel: usize, conds: Vec<Condition>) -> Self {
        Query { agg, sel, conds }
    }

    /// Checks every column index against the table.
    pub fn validate(&self, table: &Table) -> Result<(), String> {
        let arity = table.arity();
        if self.sel >= arity {
            return Err(format!(
                "select column {} out of range for {arity} columns",
                self.sel
            ));
        }
        for (i, c) in self.conds.iter().enumerate() {
            if c.column >= arity {
                return Err(format!(
                    "condition {i} column {} out of range for {arity} columns",
                    c.column
                ));
            }
        }
        Ok(())
    }

    pub fn sketch(&self) -> Sketch {
        Sketch::new(self.conds.iter().map(|c| c.op).collect())
    }

    /// The executable prefixes of this query, shortest first. The last
    /// element covers every condition.
    pub fn prefixes(&self) -> Vec<PartialProgram> {
        let mut out = vec![PartialProgram::SelHead {
            agg: self.agg,
            sel: self.sel,
        }];
        for n in 1..=self.conds.len() {
            out.push(PartialProgram::WithConds {
                agg: self.agg,
                sel: self.sel,
                conds: self.conds[..n].to_vec(),
            });
        }
        out
    }
}

/// Executable prefix of a query: the aggregate and selected column are
/// always present, followed by zero or more complete conditions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PartialProgram {
    SelHead {
        agg: AggregateFn,
        sel: usize,
    },
    WithConds {
        agg: AggregateFn,
        sel: usize,
        conds: Vec<Condition>,
    },
}

impl PartialProgram {
    pub fn agg(&self) -> AggregateFn {
        match self {
            PartialProgram::SelHead { agg, .. } | PartialProgram::WithConds { agg, .. } => *agg,
        }
    }

    pub fn sel(&self) -> usize {
        match self {
            PartialProgram::SelHead { sel, .. } | PartialProgram::WithConds { sel, .. } => *sel,
        }
    }

    pub fn conds(&self) -> &[Condition] {
        match self {
            PartialProgram::SelHead { .. } => &[],
            PartialProgram::WithConds { conds, .. } => conds,
        }
    }

    /// The shortest query this prefix extends to.
    pub fn to_query(&self) -> Query {
        Query::new(self.agg(), self.sel(), self.conds().to_vec())
    }
}

/// Comparator skeleton of a WHERE clause.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Sketch {
    pub ops: Vec<Comparator>,
}

impl Sketch {
    pub fn new(ops: Vec<Comparator>) -> Self {
        Sketch { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Compact form used in model files: comparator symbols joined by
    /// commas, empty for no conditions.
    pub fn code(&self) -> String {
        self.ops
            .iter()
            .map(|o| o.symbol())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn from_code(s: &str) -> Option<Self> {
        if s.is_empty() {
            return Some(Sketch::default());
        }
        s.split(',')
            .map(Comparator::from_symbol)
            .collect::<Option<Vec<_>>>()
            .map(Sketch::new)
    }
}

impl fmt::Display for Sketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("WHERE")?;
        for op in &self.ops {
            write!(f, " {op}")?;
        }
        Ok(())
    }
}

/// Compares two literals as they would be compared against a column of the
/// given type: numerically for real columns (when both parse), otherwise
/// case-insensitively after trimming.
pub fn literals_equal(a: &str, b: &str, ctype: ColumnType) -> bool {
    if ctype == ColumnType::Real {
        if let (Some(x), Some(y)) = (parse_real(a), parse_real(b)) {
            return x == y;
        }
    }
    normalize_text(a) == normalize_text(b)
}

/// Exact-match comparison: same aggregate, same selected column and the
/// same conditions in the same order, with literals normalized by the type
/// of the column they constrain.
pub fn canonical_equal(a: &Query, b: &Query, table: &Table) -> bool {
    a.agg == b.agg
        && a.sel == b.sel
        && a.conds.len() == b.conds.len()
        && a.conds.iter().zip(&b.conds).all(|(x, y)| {
            x.column == y.column
                && x.op == y.op
                && match table.column(x.column) {
                    Some(col) => literals_equal(&x.value, &y.value, col.ctype),
                    None => x.value == y.value,
                }
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::ColumnSchema;

    fn table() -> Table {
        Table::new(
            "t",
            vec![
                ColumnSchema::new("opponent", ColumnType::Text),
                ColumnSchema::new("points", ColumnType::Real),
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn codes_round_trip() {
        for a in AggregateFn::ALL {
            assert_eq!(AggregateFn::from_code(a.code()), Some(a));
        }
        for c in Comparator::ALL {
            assert_eq!(Comparator::from_code(c.code()), Some(c));
            assert_eq!(Comparator::from_symbol(c.symbol()), Some(c));
        }
        assert_eq!(AggregateFn::from_code(6), None);
        assert_eq!(AggregateFn::Count.code(), 3);
    }

    #[test]
    fn canonical_equal_cases() {
        let t = table();
        let q = Query::new(
            AggregateFn::Count,
            0,
            vec![
                Condition::new(0, Comparator::Eq, "Haugar"),
                Condition::new(1, Comparator::Gt, "3"),
            ],
        );
        assert!(canonical_equal(&q, &q, &t));

        let mut swapped = q.clone();
        swapped.conds.reverse();
        assert!(!canonical_equal(&q, &swapped, &t));

        let mut agg = q.clone();
        agg.agg = AggregateFn::Max;
        assert!(!canonical_equal(&q, &agg, &t));

        let mut norm = q.clone();
        norm.conds[0].value = " haugar".into();
        norm.conds[1].value = "3.0".into();
        assert!(canonical_equal(&q, &norm, &t));
    }

    #[test]
    fn prefixes_are_nested() {
        let q = Query::new(
            AggregateFn::None,
            1,
            vec![
                Condition::new(0, Comparator::Eq, "a"),
                Condition::new(1, Comparator::Lt, "2"),
            ],
        );
        let p = q.prefixes();
        assert_eq!(p.len(), 3);
        assert!(matches!(p[0], PartialProgram::SelHead { sel: 1, .. }));
        assert_eq!(p[2].to_query(), q);
        assert_eq!(p[1].conds().len(), 1);
    }

    #[test]
    fn sketch_codes() {
        let s = Sketch::new(vec![Comparator::Eq, Comparator::Gt]);
        assert_eq!(s.code(), "=,>");
        assert_eq!(Sketch::from_code("=,>"), Some(s.clone()));
        assert_eq!(Sketch::from_code(""), Some(Sketch::default()));
        assert_eq!(Sketch::from_code("=,!"), None);
        assert_eq!(s.to_string(), "WHERE = >");
    }
}
