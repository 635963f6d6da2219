//! Single-table storage and the line-delimited interchange formats for
//! tables and question/query examples.
//!
//! Tables are immutable once loaded. Column names are matched after
//! trimming and case-folding, but the stored name keeps its original form.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::sql::{AggregateFn, Comparator, Condition, Query};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Real,
}

impl ColumnType {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Text => "text",
            ColumnType::Real => "real",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "text" => Some(ColumnType::Text),
            "real" => Some(ColumnType::Real),
            _ => None,
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub name: String,
    pub ctype: ColumnType,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, ctype: ColumnType) -> Self {
        ColumnSchema {
            name: name.into(),
            ctype,
        }
    }
}

/// A single table cell, or a value in a result set.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Real(f64),
}

impl Cell {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Cell::Real(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            Cell::Real(_) => None,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            // Cells are finite by construction.
            Cell::Real(v) => serde_json::Number::from_f64(*v)
                .map(Value::Number)
                .unwrap_or(Value::Null),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Text(s) => f.write_str(s),
            Cell::Real(v) => write!(f, "{v}"),
        }
    }
}

/// Canonical form used to compare column names.
pub fn canonical_name(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Canonical form used to compare text cells and text literals.
pub fn normalize_text(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Parses a finite decimal number. Surrounding whitespace is ignored.
pub fn parse_real(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    // `f64::from_str` accepts "inf" and "nan"; both are rejected below.
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    id: String,
    columns: Vec<ColumnSchema>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(
        id: impl Into<String>,
        columns: Vec<ColumnSchema>,
        rows: Vec<Vec<Cell>>,
    ) -> Result<Self> {
        let id = id.into();
        let mut seen = BTreeMap::new();
        for (i, col) in columns.iter().enumerate() {
            let key = canonical_name(&col.name);
            if key.is_empty() {
                return Err(Error::InvalidTable(format!(
                    "table `{id}`: column {i} has an empty name"
                )));
            }
            if let Some(prev) = seen.insert(key, i) {
                return Err(Error::InvalidTable(format!(
                    "table `{id}`: duplicate column name `{}` (columns {prev} and {i})",
                    col.name
                )));
            }
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::InvalidTable(format!(
                    "table `{id}`: row {r} has {} cells, expected {}",
                    row.len(),
                    columns.len()
                )));
            }
            for (c, (cell, col)) in row.iter().zip(&columns).enumerate() {
                let ok = match (cell, col.ctype) {
                    (Cell::Text(_), ColumnType::Text) => true,
                    (Cell::Real(v), ColumnType::Real) => v.is_finite(),
                    _ => false,
                };
                if !ok {
                    return Err(Error::InvalidTable(format!(
                        "table `{id}`: row {r} column {c} (`{}`): cell {cell:?} does not match type {}",
                        col.name, col.ctype
                    )));
                }
            }
        }
        Ok(Table { id, columns, rows })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn columns(&self) -> &[ColumnSchema] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> Option<&ColumnSchema> {
        self.columns.get(index)
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Resolves a column name under the canonicalization rule.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        let key = canonical_name(name);
        self.columns
            .iter()
            .position(|c| canonical_name(&c.name) == key)
    }

    /// Same table with different row contents. Used to check that scorers
    /// only ever look at the schema.
    pub fn with_rows(&self, rows: Vec<Vec<Cell>>) -> Result<Table> {
        Table::new(self.id.clone(), self.columns.clone(), rows)
    }

    pub fn to_record(&self) -> TableRecord {
        TableRecord {
            id: self.id.clone(),
            header: self.columns.iter().map(|c| c.name.clone()).collect(),
            types: self
                .columns
                .iter()
                .map(|c| c.ctype.as_str().to_string())
                .collect(),
            rows: self
                .rows
                .iter()
                .map(|row| row.iter().map(Cell::to_json).collect())
                .collect(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("table record serializes")
    }
}

/// On-disk table record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRecord {
    pub id: String,
    pub header: Vec<String>,
    pub types: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl TableRecord {
    /// Converts and validates. Errors are plain messages; the loader adds
    /// the file position.
    pub fn into_table(self) -> std::result::Result<Table, String> {
        if self.header.len() != self.types.len() {
            return Err(format!(
                "header has {} names but types has {} entries",
                self.header.len(),
                self.types.len()
            ));
        }
        let mut columns = Vec::with_capacity(self.header.len());
        for (name, ty) in self.header.into_iter().zip(&self.types) {
            let ctype = ColumnType::from_code(ty)
                .ok_or_else(|| format!("column `{name}`: unknown type `{ty}`"))?;
            columns.push(ColumnSchema { name, ctype });
        }
        let mut rows = Vec::with_capacity(self.rows.len());
        for (r, raw) in self.rows.into_iter().enumerate() {
            if raw.len() != columns.len() {
                return Err(format!(
                    "row {r} has {} cells, expected {}",
                    raw.len(),
                    columns.len()
                ));
            }
            let mut row = Vec::with_capacity(raw.len());
            for (c, (value, col)) in raw.into_iter().zip(&columns).enumerate() {
                let cell = match (col.ctype, &value) {
                    (ColumnType::Text, Value::String(s)) => Cell::Text(s.clone()),
                    (ColumnType::Real, Value::Number(n)) => match n.as_f64() {
                        Some(v) if v.is_finite() => Cell::Real(v),
                        _ => return Err(bad_cell(r, c, &col.name, &value, col.ctype)),
                    },
                    (ColumnType::Real, Value::String(s)) => match parse_real(s) {
                        Some(v) => Cell::Real(v),
                        None => return Err(bad_cell(r, c, &col.name, &value, col.ctype)),
                    },
                    _ => return Err(bad_cell(r, c, &col.name, &value, col.ctype)),
                };
                row.push(cell);
            }
            rows.push(row);
        }
        Table::new(self.id, columns, rows).map_err(|e| match e {
            Error::InvalidTable(msg) => msg,
            other => other.to_string(),
        })
    }
}

fn bad_cell(row: usize, col: usize, name: &str, value: &Value, ctype: ColumnType) -> String {
    format!("row {row} column {col} (`{name}`): cell {value} is not a valid {ctype} value")
}

#[derive(Debug, Clone, Default)]
pub struct TableCatalog {
    tables: BTreeMap<String, Table>,
}

impl TableCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a table; fails on a duplicate id.
    pub fn insert(&mut self, table: Table) -> Result<()> {
        if self.tables.contains_key(table.id()) {
            return Err(Error::InvalidTable(format!(
                "duplicate table id `{}`",
                table.id()
            )));
        }
        self.tables.insert(table.id().to_string(), table);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Table> {
        self.tables.get(id)
    }

    pub fn table(&self, id: &str) -> Result<&Table> {
        self.get(id).ok_or_else(|| Error::UnknownTable {
            table_id: id.to_string(),
            line: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Table> {
        self.tables.values()
    }
}

impl FromIterator<Table> for TableCatalog {
    /// Panics on duplicate ids; use [`TableCatalog::insert`] for checked
    /// construction.
    fn from_iter<I: IntoIterator<Item = Table>>(iter: I) -> Self {
        let mut catalog = TableCatalog::new();
        for t in iter {
            catalog.insert(t).expect("duplicate table id");
        }
        catalog
    }
}

/// A natural-language question over one table, optionally labelled with
/// its gold query.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub question: Vec<String>,
    pub table_id: String,
    pub gold: Option<Query>,
}

impl Example {
    pub fn to_record(&self) -> ExampleRecord {
        ExampleRecord {
            id: Some(self.id.clone()),
            question: self.question.clone(),
            table_id: self.table_id.clone(),
            sql: self.gold.as_ref().map(|q| SqlRecord {
                agg: q.agg.code(),
                sel: q.sel,
                conds: q
                    .conds
                    .iter()
                    .map(|c| (c.column, c.op.code(), Value::String(c.value.clone())))
                    .collect(),
            }),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("example record serializes")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub question: Vec<String>,
    pub table_id: String,
    #[serde(default)]
    pub sql: Option<SqlRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqlRecord {
    pub agg: u8,
    pub sel: usize,
    pub conds: Vec<(usize, u8, Value)>,
}

impl SqlRecord {
    fn into_query(self) -> std::result::Result<Query, String> {
        let agg = AggregateFn::from_code(self.agg)
            .ok_or_else(|| format!("aggregate code {} out of range 0-5", self.agg))?;
        let mut conds = Vec::with_capacity(self.conds.len());
        for (column, op, value) in self.conds {
            let op = Comparator::from_code(op)
                .ok_or_else(|| format!("operator code {op} out of range 0-2"))?;
            let value = match value {
                Value::String(s) => s,
                Value::Number(n) => n.to_string(),
                other => return Err(format!("condition value {other} is not a string")),
            };
            conds.push(Condition { column, op, value });
        }
        Ok(Query {
            agg,
            sel: self.sel,
            conds,
        })
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

pub fn load_tables(path: impl AsRef<Path>) -> Result<TableCatalog> {
    let path = path.as_ref();
    let mut catalog = TableCatalog::new();
    for (line, text) in read_lines(path)? {
        let record: TableRecord = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, line, format!("malformed table record: {e}")))?;
        let table = record
            .into_table()
            .map_err(|msg| Error::format(path, line, msg))?;
        if catalog.get(table.id()).is_some() {
            return Err(Error::format(
                path,
                line,
                format!("duplicate table id `{}`", table.id()),
            ));
        }
        catalog.insert(table)?;
    }
    Ok(catalog)
}

/// Loads examples. Records without an `id` are named by their 0-based
/// record index.
pub fn load_examples(path: impl AsRef<Path>, catalog: &TableCatalog) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (index, (line, text)) in read_lines(path)?.into_iter().enumerate() {
        let record: ExampleRecord = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, line, format!("malformed example record: {e}")))?;
        if record.question.is_empty() {
            return Err(Error::format(path, line, "question has no tokens"));
        }
        let table = catalog
            .get(&record.table_id)
            .ok_or_else(|| Error::UnknownTable {
                table_id: record.table_id.clone(),
                line,
            })?;
        let gold = match record.sql {
            None => None,
            Some(sql) => {
                let q = sql
                    .into_query()
                    .map_err(|msg| Error::format(path, line, msg))?;
                q.validate(table)
                    .map_err(|message| Error::InvalidGold { line, message })?;
                Some(q)
            }
        };
        out.push(Example {
            id: record.id.unwrap_or_else(|| index.to_string()),
            question: record.question,
            table_id: record.table_id,
            gold,
        });
    }
    Ok(out)
}

pub fn write_tables<'a>(
    path: impl AsRef<Path>,
    tables: impl IntoIterator<Item = &'a Table>,
) -> Result<()> {
    write_lines(path.as_ref(), tables.into_iter().map(Table::to_json_line))
}

pub fn write_examples<'a>(
    path: impl AsRef<Path>,
    examples: impl IntoIterator<Item = &'a Example>,
) -> Result<()> {
    write_lines(path.as_ref(), examples.into_iter().map(Example::to_json_line))
}

pub(crate) fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut buf = Vec::new();
    for line in lines {
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const T1: &str = r#"{"id":"t1","header":["opponent"],"types":["text"],"rows":[["Haugar"]]}"#;

    #[test]
    fn loads_single_table() {
        let f = tmp(T1);
        let cat = load_tables(f.path()).unwrap();
        assert_eq!(cat.len(), 1);
        let t = cat.table("t1").unwrap();
        assert_eq!(t.columns()[0], ColumnSchema::new("opponent", ColumnType::Text));
        assert_eq!(t.rows()[0][0], Cell::Text("Haugar".into()));
    }

    #[test]
    fn empty_file_is_empty_catalog() {
        let f = tmp("");
        assert!(load_tables(f.path()).unwrap().is_empty());
    }

    #[test]
    fn bad_real_cell_names_row_and_column() {
        let f = tmp(r#"{"id":"t","header":["pts"],"types":["real"],"rows":[["1"],["abc"]]}"#);
        let err = load_tables(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Format { line: 1, .. }), "{msg}");
        assert!(msg.contains("row 1") && msg.contains("`pts`"), "{msg}");
    }

    #[test]
    fn mixed_types_in_text_column_rejected() {
        let f = tmp(r#"{"id":"t","header":["a"],"types":["text"],"rows":[["x"],[3]]}"#);
        assert!(matches!(load_tables(f.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn arity_mismatch_rejected() {
        let f = tmp(r#"{"id":"t","header":["a","b"],"types":["text","text"],"rows":[["x"]]}"#);
        assert!(matches!(load_tables(f.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn duplicate_column_after_canonicalization_rejected() {
        let f = tmp(r#"{"id":"t","header":["Team"," team "],"types":["text","text"],"rows":[]}"#);
        let err = load_tables(f.path()).unwrap_err();
        assert!(err.to_string().contains("duplicate column"), "{err}");
    }

    #[test]
    fn duplicate_table_id_reports_second_line() {
        let f = tmp(&format!("{T1}\n{T1}\n"));
        assert!(matches!(
            load_tables(f.path()),
            Err(Error::Format { line: 2, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_tables("/nonexistent/tables.jsonl"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn column_lookup_is_case_and_space_insensitive() {
        let t = Table::new(
            "t",
            vec![ColumnSchema::new("Home Team", ColumnType::Text)],
            vec![],
        )
        .unwrap();
        assert_eq!(t.column_index("  home team "), Some(0));
        assert_eq!(t.column_index("away team"), None);
        assert_eq!(t.columns()[0].name, "Home Team");
    }

    #[test]
    fn loads_examples_and_resolves_tables() {
        let tables = tmp(T1);
        let cat = load_tables(tables.path()).unwrap();
        let ex = tmp(concat!(
            r#"{"question":["how","many","games","were","played","against","Haugar"],"#,
            r#""table_id":"t1","sql":{"agg":3,"sel":0,"conds":[[0,0,"Haugar"]]}}"#
        ));
        let examples = load_examples(ex.path(), &cat).unwrap();
        assert_eq!(examples.len(), 1);
        let gold = examples[0].gold.as_ref().unwrap();
        assert_eq!(gold.agg, AggregateFn::Count);
        assert_eq!(gold.conds[0].value, "Haugar");
        assert_eq!(examples[0].id, "0");
    }

    #[test]
    fn unknown_table_and_bad_gold() {
        let cat = load_tables(tmp(T1).path()).unwrap();
        let ex = tmp(r#"{"question":["q"],"table_id":"nope","sql":null}"#);
        assert!(matches!(
            load_examples(ex.path(), &cat),
            Err(Error::UnknownTable { line: 1, .. })
        ));
        let ex = tmp(r#"{"question":["q"],"table_id":"t1","sql":{"agg":0,"sel":4,"conds":[]}}"#);
        assert!(matches!(
            load_examples(ex.path(), &cat),
            Err(Error::InvalidGold { .. })
        ));
        let ex = tmp(r#"{"question":["q"],"table_id":"t1","sql":{"agg":9,"sel":0,"conds":[]}}"#);
        assert!(matches!(
            load_examples(ex.path(), &cat),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn empty_examples_file() {
        let cat = TableCatalog::new();
        assert!(load_examples(tmp("").path(), &cat).unwrap().is_empty());
    }

    #[test]
    fn numeric_condition_value_is_kept_as_text() {
        let cat = load_tables(
            tmp(r#"{"id":"t","header":["pts"],"types":["real"],"rows":[[3]]}"#).path(),
        )
        .unwrap();
        let ex = tmp(r#"{"question":["q"],"table_id":"t","sql":{"agg":0,"sel":0,"conds":[[0,1,2.5]]}}"#);
        let examples = load_examples(ex.path(), &cat).unwrap();
        assert_eq!(examples[0].gold.as_ref().unwrap().conds[0].value, "2.5");
    }
}
