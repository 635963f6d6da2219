//! Surface syntax.
//!
//! ```text
//! query   := SELECT [agg] column [WHERE cond (AND cond)*]
//! cond    := column op literal
//! column  := '[' name ']' | word+
//! literal := '\'' text '\'' | word+
//! ```
//!
//! Inside brackets `]]` stands for `]`; inside quotes `''` stands for `'`.
//! The serializer brackets any column name that would not read back as the
//! same bare word sequence, and always quotes literals.

use std::fmt;

use thiserror::Error;

use super::{AggregateFn, Comparator, Condition, Query};
use crate::table::Table;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    /// Byte offset into the input.
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at {}: {}", self.position, self.message)
    }
}

const RESERVED: [&str; 4] = ["SELECT", "FROM", "WHERE", "AND"];
const SPECIAL: &[char] = &['[', ']', '\'', '=', '<', '>'];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Bracketed(String),
    Quoted(String),
    Op(Comparator),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    pos: usize,
}

fn err(position: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        position,
        message: message.into(),
    }
}

fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(word))
}

/// Reads a delimited run ending at `close`, where a doubled `close` is an
/// escaped literal character. Returns the content and the byte offset just
/// past the closing delimiter.
fn delimited(input: &str, start: usize, close: char, what: &str) -> Result<(String, usize), ParseError> {
    let mut out = String::new();
    let mut chars = input[start + 1..].char_indices().peekable();
    while let Some((i, ch)) = chars.next() {
        if ch == close {
            if let Some(&(_, next)) = chars.peek() {
                if next == close {
                    out.push(close);
                    chars.next();
                    continue;
                }
            }
            return Ok((out, start + 1 + i + ch.len_utf8()));
        }
        out.push(ch);
    }
    Err(err(start, format!("unterminated {what}")))
}

fn tokenize(input: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut toks = Vec::new();
    let mut i = 0;
    while i < input.len() {
        let ch = input[i..].chars().next().expect("in bounds");
        if ch.is_whitespace() {
            i += ch.len_utf8();
            continue;
        }
        match ch {
            '\'' => {
                let (s, end) = delimited(input, i, '\'', "quoted literal")?;
                toks.push(Spanned { tok: Tok::Quoted(s), pos: i });
                i = end;
            }
            '[' => {
                let (s, end) = delimited(input, i, ']', "bracketed column name")?;
                toks.push(Spanned { tok: Tok::Bracketed(s), pos: i });
                i = end;
            }
            ']' => return Err(err(i, "unexpected `]`")),
            '=' | '<' | '>' => {
                let op = Comparator::from_symbol(&ch.to_string()).expect("comparator symbol");
                toks.push(Spanned { tok: Tok::Op(op), pos: i });
                i += 1;
            }
            _ => {
                let end = input[i..]
                    .find(|c: char| c.is_whitespace() || SPECIAL.contains(&c))
                    .map_or(input.len(), |off| i + off);
                toks.push(Spanned {
                    tok: Tok::Word(input[i..end].to_string()),
                    pos: i,
                });
                i = end;
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    at: usize,
    end: usize,
    table: &'a Table,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.at)
    }

    fn pos(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Spanned { tok: Tok::Word(w), .. }) if w.eq_ignore_ascii_case(kw))
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.peek_keyword(kw) {
            self.at += 1;
            Ok(())
        } else {
            Err(err(self.pos(), format!("expected {kw}, found {}", self.describe())))
        }
    }

    fn describe(&self) -> String {
        match self.peek() {
            None => "end of input".to_string(),
            Some(t) => match &t.tok {
                Tok::Word(w) if is_reserved(w) => format!("keyword {}", w.to_uppercase()),
                Tok::Word(w) => format!("`{w}`"),
                Tok::Bracketed(s) => format!("[{s}]"),
                Tok::Quoted(s) => format!("'{s}'"),
                Tok::Op(op) => format!("`{op}`"),
            },
        }
    }

    /// Consumes a bracketed name or a run of non-reserved bare words.
    /// Returns the name text and where it started.
    fn column_text(&mut self) -> Result<(String, usize), ParseError> {
        let pos = self.pos();
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Bracketed(s)) => {
                let s = s.clone();
                self.at += 1;
                Ok((s, pos))
            }
            Some(Tok::Word(w)) if !is_reserved(w) => {
                let mut words = Vec::new();
                while let Some(Spanned { tok: Tok::Word(w), .. }) = self.peek() {
                    if is_reserved(w) {
                        break;
                    }
                    words.push(w.clone());
                    self.at += 1;
                }
                Ok((words.join(" "), pos))
            }
            _ => Err(err(pos, format!("expected column name, found {}", self.describe()))),
        }
    }

    fn resolve(&self, name: &str, pos: usize) -> Result<usize, ParseError> {
        self.table
            .column_index(name)
            .ok_or_else(|| err(pos, format!("unknown column `{name}` in table `{}`", self.table.id())))
    }

    fn head(&mut self) -> Result<(AggregateFn, usize), ParseError> {
        let start = self.at;
        if let Some(Spanned { tok: Tok::Word(w), .. }) = self.peek() {
            if let Some(agg) = AggregateFn::from_keyword(w) {
                // `COUNT x` is an aggregate unless `COUNT x` is itself a
                // column name; a lone `COUNT` is a column.
                self.at += 1;
                let followed = matches!(self.peek(), Some(Spanned { tok: Tok::Word(w), .. }) if !is_reserved(w))
                    || matches!(self.peek(), Some(Spanned { tok: Tok::Bracketed(_), .. }));
                if followed {
                    let (name, pos) = self.column_text()?;
                    if let Some(sel) = self.table.column_index(&name) {
                        return Ok((agg, sel));
                    }
                    self.at = start;
                    let (full, _) = self.column_text()?;
                    return match self.table.column_index(&full) {
                        Some(sel) => Ok((AggregateFn::None, sel)),
                        None => Err(err(pos, format!("unknown column `{name}` in table `{}`", self.table.id()))),
                    };
                }
                self.at = start;
            }
        }
        let (name, pos) = self.column_text()?;
        Ok((AggregateFn::None, self.resolve(&name, pos)?))
    }

    fn condition(&mut self) -> Result<Condition, ParseError> {
        let (name, pos) = self.column_text()?;
        let column = self.resolve(&name, pos)?;
        let op = match self.peek() {
            Some(Spanned { tok: Tok::Op(op), .. }) => *op,
            _ => {
                return Err(err(
                    self.pos(),
                    format!("dangling condition: expected comparator after `{name}`, found {}", self.describe()),
                ))
            }
        };
        self.at += 1;
        let value = match self.peek().map(|t| &t.tok) {
            Some(Tok::Quoted(s)) => {
                let s = s.clone();
                self.at += 1;
                s
            }
            Some(Tok::Word(w)) if !is_reserved(w) => {
                let mut words = Vec::new();
                while let Some(Spanned { tok: Tok::Word(w), .. }) = self.peek() {
                    if is_reserved(w) {
                        break;
                    }
                    words.push(w.clone());
                    self.at += 1;
                }
                words.join(" ")
            }
            _ => {
                return Err(err(
                    self.pos(),
                    format!("dangling condition: expected literal after `{op}`, found {}", self.describe()),
                ))
            }
        };
        Ok(Condition { column, op, value })
    }

    fn query(&mut self) -> Result<Query, ParseError> {
        self.expect_keyword("SELECT")?;
        let (agg, sel) = self.head()?;
        let mut conds = Vec::new();
        if self.peek_keyword("WHERE") {
            self.at += 1;
            conds.push(self.condition()?);
            while self.peek_keyword("AND") {
                self.at += 1;
                conds.push(self.condition()?);
            }
        }
        if self.peek().is_some() {
            return Err(err(self.pos(), format!("unexpected {}", self.describe())));
        }
        Ok(Query { agg, sel, conds })
    }
}

/// Parses the surface syntax, resolving column names against `table`.
pub fn parse(text: &str, table: &Table) -> Result<Query, ParseError> {
    let toks = tokenize(text)?;
    Parser {
        toks,
        at: 0,
        end: text.len(),
        table,
    }
    .query()
}

fn needs_brackets(name: &str) -> bool {
    name.is_empty()
        || name.chars().any(|c| c.is_whitespace() || SPECIAL.contains(&c))
        || is_reserved(name)
        || AggregateFn::from_keyword(name).is_some()
}

fn push_column(out: &mut String, name: &str) {
    if needs_brackets(name) {
        out.push('[');
        out.push_str(&name.replace(']', "]]"));
        out.push(']');
    } else {
        out.push_str(name);
    }
}

/// Canonical surface form. `q` must be valid against `table`.
pub fn to_text(q: &Query, table: &Table) -> String {
    let name = |i: usize| {
        table
            .column(i)
            .map(|c| c.name.as_str())
            .expect("query column index valid for table")
    };
    let mut out = String::from("SELECT ");
    if let Some(kw) = q.agg.keyword() {
        out.push_str(kw);
        out.push(' ');
    }
    push_column(&mut out, name(q.sel));
    for (i, c) in q.conds.iter().enumerate() {
        out.push_str(if i == 0 { " WHERE " } else { " AND " });
        push_column(&mut out, name(c.column));
        out.push(' ');
        out.push_str(c.op.symbol());
        out.push_str(" '");
        out.push_str(&c.value.replace('\'', "''"));
        out.push('\'');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ColumnSchema, ColumnType};

    fn fig1() -> Table {
        Table::new(
            "t1",
            vec![
                ColumnSchema::new("opponent", ColumnType::Text),
                ColumnSchema::new("Home Team", ColumnType::Text),
                ColumnSchema::new("count", ColumnType::Real),
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn parses_count_query() {
        let q = parse("SELECT COUNT opponent WHERE opponent = 'Haugar'", &fig1()).unwrap();
        assert_eq!(
            q,
            Query::new(
                AggregateFn::Count,
                0,
                vec![Condition::new(0, Comparator::Eq, "Haugar")]
            )
        );
        assert_eq!(to_text(&q, &fig1()), "SELECT COUNT opponent WHERE opponent = 'Haugar'");
    }

    #[test]
    fn parses_plain_select() {
        let q = parse("SELECT opponent", &fig1()).unwrap();
        assert_eq!(q, Query::new(AggregateFn::None, 0, vec![]));
        assert_eq!(to_text(&q, &fig1()), "SELECT opponent");
    }

    #[test]
    fn rejects_keywords_in_column_position() {
        let e = parse("SELECT FROM WHERE", &fig1()).unwrap_err();
        assert_eq!(e.position, 7);
    }

    #[test]
    fn error_cases_report_positions() {
        let t = fig1();
        assert_eq!(parse("SELEKT opponent", &t).unwrap_err().position, 0);
        let e = parse("SELECT nobody", &t).unwrap_err();
        assert!(e.message.contains("unknown column"), "{e}");
        let e = parse("SELECT opponent WHERE opponent", &t).unwrap_err();
        assert!(e.message.contains("dangling"), "{e}");
        let e = parse("SELECT opponent WHERE opponent =", &t).unwrap_err();
        assert!(e.message.contains("dangling"), "{e}");
        let e = parse("SELECT opponent WHERE", &t).unwrap_err();
        assert_eq!(e.position, 21);
        let e = parse("SELECT opponent WHERE opponent = 'Hau", &t).unwrap_err();
        assert!(e.message.contains("unterminated"), "{e}");
        assert_eq!(e.position, 33);
    }

    #[test]
    fn multi_word_and_keyword_names() {
        let t = fig1();
        let q = parse("select max home team where home team = 'a b'", &t).unwrap();
        assert_eq!(q.agg, AggregateFn::Max);
        assert_eq!(q.sel, 1);
        assert_eq!(to_text(&q, &t), "SELECT MAX [Home Team] WHERE [Home Team] = 'a b'");

        // a lone aggregate keyword is a column name
        let q = parse("SELECT count", &t).unwrap();
        assert_eq!(q, Query::new(AggregateFn::None, 2, vec![]));
        assert_eq!(to_text(&q, &t), "SELECT [count]");
        let q = parse("SELECT SUM [count] WHERE [count] > 3", &t).unwrap();
        assert_eq!(q.agg, AggregateFn::Sum);
        assert_eq!(q.conds[0].value, "3");
    }

    #[test]
    fn escapes_round_trip() {
        let t = Table::new(
            "t",
            vec![ColumnSchema::new("a]b's", ColumnType::Text)],
            vec![],
        )
        .unwrap();
        let q = Query::new(
            AggregateFn::None,
            0,
            vec![Condition::new(0, Comparator::Eq, "it's  here")],
        );
        let text = to_text(&q, &t);
        assert_eq!(text, "SELECT [a]]b's] WHERE [a]]b's] = 'it''s  here'");
        assert_eq!(parse(&text, &t).unwrap(), q);
    }

    #[test]
    fn conditions_keep_order() {
        let t = fig1();
        let q = Query::new(
            AggregateFn::None,
            0,
            vec![
                Condition::new(2, Comparator::Gt, "1"),
                Condition::new(0, Comparator::Eq, "x"),
            ],
        );
        assert_eq!(
            to_text(&q, &t),
            "SELECT opponent WHERE [count] > '1' AND opponent = 'x'"
        );
    }
}
