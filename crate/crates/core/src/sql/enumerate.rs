use super::{AggregateFn, Comparator, Condition, Query};
use crate::table::Table;

/// Every query over `table` with conditions drawn from
/// columns x comparators x `literal_pool`, at most `max_conds` of them.
///
/// Order: aggregate code, then selected column, then condition count, then
/// the condition sequence in odometer order over (column, comparator,
/// literal index).
pub fn enumerate_programs(
    table: &Table,
    literal_pool: &[String],
    max_conds: usize,
) -> ProgramEnumerator {
    ProgramEnumerator::new(table.arity(), literal_pool.to_vec(), max_conds)
}

#[derive(Debug, Clone)]
pub struct ProgramEnumerator {
    columns: usize,
    pool: Vec<String>,
    max_conds: usize,
    agg: usize,
    sel: usize,
    /// Current condition sequence as atom indices; `None` once exhausted.
    digits: Option<Vec<usize>>,
}

impl ProgramEnumerator {
    fn new(columns: usize, pool: Vec<String>, max_conds: usize) -> Self {
        let digits = (columns > 0).then(Vec::new);
        ProgramEnumerator {
            columns,
            pool,
            max_conds,
            agg: 0,
            sel: 0,
            digits,
        }
    }

    fn atoms(&self) -> usize {
        self.columns * Comparator::ALL.len() * self.pool.len()
    }

    fn atom(&self, a: usize) -> Condition {
        let lits = self.pool.len();
        let ops = Comparator::ALL.len();
        Condition {
            column: a / (ops * lits),
            op: Comparator::ALL[(a / lits) % ops],
            value: self.pool[a % lits].clone(),
        }
    }

    /// Moves `digits` to the next sequence, rolling over into the next
    /// (agg, sel) head when the sequences are exhausted.
    fn bump(&mut self) {
        let atoms = self.atoms();
        let Some(digits) = self.digits.as_mut() else {
            return;
        };
        let mut i = digits.len();
        while i > 0 {
            i -= 1;
            digits[i] += 1;
            if digits[i] < atoms {
                return;
            }
            digits[i] = 0;
        }
        // every sequence of this length has been produced
        if digits.len() < self.max_conds && atoms > 0 {
            digits.push(0);
            digits.iter_mut().for_each(|d| *d = 0);
            return;
        }
        digits.clear();
        self.sel += 1;
        if self.sel == self.columns {
            self.sel = 0;
            self.agg += 1;
            if self.agg == AggregateFn::ALL.len() {
                self.digits = None;
            }
        }
    }
}

impl Iterator for ProgramEnumerator {
    type Item = Query;

    fn next(&mut self) -> Option<Query> {
        let digits = self.digits.as_ref()?;
        let q = Query {
            agg: AggregateFn::ALL[self.agg],
            sel: self.sel,
            conds: digits.iter().map(|&a| self.atom(a)).collect(),
        };
        self.bump();
        Some(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ColumnSchema, ColumnType};
    use std::collections::HashSet;

    fn table(cols: usize) -> Table {
        Table::new(
            "t",
            (0..cols)
                .map(|i| ColumnSchema::new(format!("c{i}"), ColumnType::Text))
                .collect(),
            vec![],
        )
        .unwrap()
    }

    /// Closed form: 6·C·Σ_{j=0..m} (3·C·L)^j.
    fn expected_count(c: usize, l: usize, m: usize) -> usize {
        let atoms = 3 * c * l;
        6 * c * (0..=m).map(|j| atoms.pow(j as u32)).sum::<usize>()
    }

    #[test]
    fn single_column_no_conditions() {
        let qs: Vec<_> = enumerate_programs(&table(1), &[], 0).collect();
        assert_eq!(qs.len(), 6);
        assert!(qs.iter().all(|q| q.conds.is_empty() && q.sel == 0));
    }

    #[test]
    fn two_columns_one_literal_one_condition() {
        let pool = vec!["x".to_string()];
        let qs: Vec<_> = enumerate_programs(&table(2), &pool, 1).collect();
        assert_eq!(qs.len(), 84);
        assert_eq!(qs.len(), expected_count(2, 1, 1));
    }

    #[test]
    fn counts_match_closed_form_without_duplicates() {
        for c in 0..=3 {
            for l in 0..=2 {
                for m in 0..=2 {
                    let pool: Vec<String> = (0..l).map(|i| format!("v{i}")).collect();
                    let qs: Vec<_> = enumerate_programs(&table(c), &pool, m).collect();
                    assert_eq!(qs.len(), expected_count(c, l, m), "c={c} l={l} m={m}");
                    let unique: HashSet<_> = qs.iter().collect();
                    assert_eq!(unique.len(), qs.len());
                    assert!(qs.iter().all(|q| q.conds.len() <= m));
                }
            }
        }
    }

    #[test]
    fn order_is_deterministic() {
        let pool = vec!["a".to_string(), "b".to_string()];
        let a: Vec<_> = enumerate_programs(&table(2), &pool, 2).collect();
        let b: Vec<_> = enumerate_programs(&table(2), &pool, 2).collect();
        assert_eq!(a, b);
        assert_eq!(a[0], Query::new(AggregateFn::None, 0, vec![]));
        assert_eq!(a[1].conds, vec![Condition::new(0, Comparator::Eq, "a")]);
    }
}
