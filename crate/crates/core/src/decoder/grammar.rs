//! Typed decoding actions and the statically determined grammar positions
//! they are legal at.

use std::fmt;
use std::str::FromStr;

use crate::sql::{AggregateFn, Comparator, Condition, PartialProgram, Query, Sketch};

/// Longest question span a value slot may copy.
pub const MAX_SPAN_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    PickAgg(AggregateFn),
    PickColumn(usize),
    PickOp(Comparator),
    /// Question tokens `start..end`.
    PickValueSpan { start: usize, end: usize },
    EndConditions,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::PickAgg(a) => write!(f, "agg:{a}"),
            Action::PickColumn(c) => write!(f, "col:{c}"),
            Action::PickOp(op) => write!(f, "op:{op}"),
            Action::PickValueSpan { start, end } => write!(f, "span:{start}:{end}"),
            Action::EndConditions => f.write_str("end"),
        }
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("invalid action encoding `{s}`");
        if s == "end" {
            return Ok(Action::EndConditions);
        }
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "agg" if rest == "NONE" => Ok(Action::PickAgg(AggregateFn::None)),
            "agg" => AggregateFn::from_keyword(rest)
                .filter(|_| rest.chars().all(|c| c.is_ascii_uppercase()))
                .map(Action::PickAgg)
                .ok_or_else(bad),
            "col" => rest.parse().map(Action::PickColumn).map_err(|_| bad()),
            "op" => Comparator::from_symbol(rest).map(Action::PickOp).ok_or_else(bad),
            "span" => {
                let (a, b) = rest.split_once(':').ok_or_else(bad)?;
                let start = a.parse().map_err(|_| bad())?;
                let end = b.parse().map_err(|_| bad())?;
                Ok(Action::PickValueSpan { start, end })
            }
            _ => Err(bad()),
        }
    }
}

/// Where the decoder is in the query. Condition slots carry their index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Position {
    Agg,
    SelColumn,
    CondColumn(usize),
    CondOp(usize),
    CondValue(usize),
    Done,
}

impl Position {
    pub fn tag(self) -> &'static str {
        match self {
            Position::Agg => "agg",
            Position::SelColumn => "sel",
            Position::CondColumn(_) => "cond_col",
            Position::CondOp(_) => "cond_op",
            Position::CondValue(_) => "cond_val",
            Position::Done => "done",
        }
    }
}

/// Which action sequences are well formed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Grammar {
    /// `agg sel (col op span)* end` with at most `max_conds` conditions.
    Full { max_conds: usize },
    /// `agg sel (col span)^n` with comparators fixed by the sketch.
    Sketch(Sketch),
}

impl Grammar {
    pub fn full(max_conds: usize) -> Self {
        Grammar::Full { max_conds }
    }

    /// Legal actions at `pos` in a canonical order.
    pub fn legal_actions(&self, pos: Position, columns: usize, question_len: usize) -> Vec<Action> {
        match pos {
            Position::Agg => AggregateFn::ALL.into_iter().map(Action::PickAgg).collect(),
            Position::SelColumn => (0..columns).map(Action::PickColumn).collect(),
            Position::CondColumn(j) => match self {
                Grammar::Full { max_conds } if j >= *max_conds => vec![Action::EndConditions],
                Grammar::Full { .. } => (0..columns)
                    .map(Action::PickColumn)
                    .chain(std::iter::once(Action::EndConditions))
                    .collect(),
                Grammar::Sketch(_) => (0..columns).map(Action::PickColumn).collect(),
            },
            Position::CondOp(_) => Comparator::ALL.into_iter().map(Action::PickOp).collect(),
            Position::CondValue(_) => spans(question_len).collect(),
            Position::Done => vec![],
        }
    }

    pub fn is_legal(&self, pos: Position, action: &Action, columns: usize, question_len: usize) -> bool {
        match (pos, action) {
            (Position::Agg, Action::PickAgg(_)) => true,
            (Position::SelColumn, Action::PickColumn(c)) => *c < columns,
            (Position::CondColumn(j), Action::PickColumn(c)) => match self {
                Grammar::Full { max_conds } => j < *max_conds && *c < columns,
                Grammar::Sketch(_) => *c < columns,
            },
            (Position::CondColumn(_), Action::EndConditions) => matches!(self, Grammar::Full { .. }),
            (Position::CondOp(_), Action::PickOp(_)) => matches!(self, Grammar::Full { .. }),
            (Position::CondValue(_), Action::PickValueSpan { start, end }) => {
                start < end && *end <= question_len && end - start <= MAX_SPAN_LEN
            }
            _ => false,
        }
    }
}

/// Every value span of a question of `len` tokens, ordered by start then end.
pub fn spans(len: usize) -> impl Iterator<Item = Action> {
    (0..len).flat_map(move |start| {
        (start + 1..=len.min(start + MAX_SPAN_LEN)).map(move |end| Action::PickValueSpan { start, end })
    })
}

pub fn span_text(question: &[String], start: usize, end: usize) -> String {
    question[start..end].join(" ")
}

/// Checkpoints a single action can complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Reached {
    pub sel_head: bool,
    pub condition: bool,
    pub done: bool,
}

/// The program assembled so far by an action sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProgramBuilder {
    grammar: Grammar,
    agg: Option<AggregateFn>,
    sel: Option<usize>,
    conds: Vec<Condition>,
    pending_col: Option<usize>,
    pending_op: Option<Comparator>,
    done: bool,
}

impl ProgramBuilder {
    pub fn new(grammar: Grammar) -> Self {
        ProgramBuilder {
            grammar,
            agg: None,
            sel: None,
            conds: Vec::new(),
            pending_col: None,
            pending_op: None,
            done: false,
        }
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    pub fn position(&self) -> Position {
        if self.done {
            return Position::Done;
        }
        let j = self.conds.len();
        match (self.agg, self.sel, self.pending_col, self.pending_op) {
            (None, _, _, _) => Position::Agg,
            (Some(_), None, _, _) => Position::SelColumn,
            (_, _, None, _) => Position::CondColumn(j),
            (_, _, Some(_), None) => Position::CondOp(j),
            (_, _, Some(_), Some(_)) => Position::CondValue(j),
        }
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Applies a legal action. Legality is the caller's responsibility.
    pub fn apply(&mut self, action: &Action, question: &[String]) -> Reached {
        let mut reached = Reached::default();
        match *action {
            Action::PickAgg(a) => self.agg = Some(a),
            Action::PickColumn(c) if self.sel.is_none() => {
                self.sel = Some(c);
                reached.sel_head = true;
                if matches!(&self.grammar, Grammar::Sketch(s) if s.is_empty()) {
                    self.done = true;
                    reached.done = true;
                }
            }
            Action::PickColumn(c) => {
                self.pending_col = Some(c);
                if let Grammar::Sketch(s) = &self.grammar {
                    self.pending_op = s.ops.get(self.conds.len()).copied();
                }
            }
            Action::PickOp(op) => self.pending_op = Some(op),
            Action::PickValueSpan { start, end } => {
                let column = self.pending_col.take().expect("value follows a column");
                let op = self.pending_op.take().expect("value follows a comparator");
                self.conds.push(Condition {
                    column,
                    op,
                    value: span_text(question, start, end),
                });
                reached.condition = true;
                if matches!(&self.grammar, Grammar::Sketch(s) if s.len() == self.conds.len()) {
                    self.done = true;
                    reached.done = true;
                }
            }
            Action::EndConditions => {
                self.done = true;
                reached.done = true;
            }
        }
        reached
    }

    /// The executable prefix built so far, if the head is complete.
    pub fn partial(&self) -> Option<PartialProgram> {
        let (agg, sel) = (self.agg?, self.sel?);
        Some(if self.conds.is_empty() {
            PartialProgram::SelHead { agg, sel }
        } else {
            PartialProgram::WithConds {
                agg,
                sel,
                conds: self.conds.clone(),
            }
        })
    }

    pub fn query(&self) -> Option<Query> {
        self.partial().map(|p| p.to_query())
    }
}

/// Action path that builds `q` under the full grammar, using `span` to
/// pick a question span for each literal. Returns `None` when a literal has
/// no span.
pub fn actions_for_query(
    q: &Query,
    mut span: impl FnMut(&str) -> Option<(usize, usize)>,
) -> Option<Vec<Action>> {
    let mut out = vec![Action::PickAgg(q.agg), Action::PickColumn(q.sel)];
    for c in &q.conds {
        let (start, end) = span(&c.value)?;
        out.push(Action::PickColumn(c.column));
        out.push(Action::PickOp(c.op));
        out.push(Action::PickValueSpan { start, end });
    }
    out.push(Action::EndConditions);
    Some(out)
}

/// First span of `question` whose text equals `value` after trimming and
/// case-folding.
pub fn find_span(question: &[String], value: &str) -> Option<(usize, usize)> {
    let want: Vec<String> = value.split_whitespace().map(str::to_lowercase).collect();
    if want.is_empty() || want.len() > MAX_SPAN_LEN || want.len() > question.len() {
        return None;
    }
    (0..=question.len() - want.len())
        .find(|&s| {
            question[s..s + want.len()]
                .iter()
                .zip(&want)
                .all(|(q, w)| q.to_lowercase() == *w)
        })
        .map(|s| (s, s + want.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(words: &str) -> Vec<String> {
        words.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn action_encoding_round_trips() {
        let all = [
            Action::PickAgg(AggregateFn::None),
            Action::PickAgg(AggregateFn::Count),
            Action::PickColumn(12),
            Action::PickOp(Comparator::Lt),
            Action::PickValueSpan { start: 2, end: 4 },
            Action::EndConditions,
        ];
        for a in all {
            assert_eq!(a.to_string().parse::<Action>(), Ok(a));
        }
        assert!("agg:count".parse::<Action>().is_err());
        assert!("span:1".parse::<Action>().is_err());
        assert!("op:!=".parse::<Action>().is_err());
    }

    #[test]
    fn full_grammar_positions() {
        let question = q("games against Haugar");
        let mut b = ProgramBuilder::new(Grammar::full(1));
        assert_eq!(b.position(), Position::Agg);
        b.apply(&Action::PickAgg(AggregateFn::Count), &question);
        assert_eq!(b.position(), Position::SelColumn);
        assert!(b.apply(&Action::PickColumn(0), &question).sel_head);
        assert_eq!(b.position(), Position::CondColumn(0));
        b.apply(&Action::PickColumn(0), &question);
        assert_eq!(b.position(), Position::CondOp(0));
        b.apply(&Action::PickOp(Comparator::Eq), &question);
        assert_eq!(b.position(), Position::CondValue(0));
        let r = b.apply(&Action::PickValueSpan { start: 2, end: 3 }, &question);
        assert!(r.condition && !r.done);
        assert_eq!(b.position(), Position::CondColumn(1));
        assert_eq!(
            Grammar::full(1).legal_actions(b.position(), 3, 3),
            vec![Action::EndConditions]
        );
        assert!(b.apply(&Action::EndConditions, &question).done);
        assert_eq!(b.position(), Position::Done);
        let query = b.query().unwrap();
        assert_eq!(query.conds, vec![Condition::new(0, Comparator::Eq, "Haugar")]);
    }

    #[test]
    fn sketch_grammar_fixes_ops() {
        let question = q("a b c");
        let sk = Sketch::new(vec![Comparator::Gt]);
        let mut b = ProgramBuilder::new(Grammar::Sketch(sk));
        b.apply(&Action::PickAgg(AggregateFn::None), &question);
        b.apply(&Action::PickColumn(1), &question);
        b.apply(&Action::PickColumn(0), &question);
        assert_eq!(b.position(), Position::CondValue(0));
        let r = b.apply(&Action::PickValueSpan { start: 0, end: 2 }, &question);
        assert!(r.condition && r.done);
        assert_eq!(b.query().unwrap().conds, vec![Condition::new(0, Comparator::Gt, "a b")]);

        let mut empty = ProgramBuilder::new(Grammar::Sketch(Sketch::default()));
        empty.apply(&Action::PickAgg(AggregateFn::Max), &question);
        let r = empty.apply(&Action::PickColumn(0), &question);
        assert!(r.sel_head && r.done);
    }

    #[test]
    fn span_counts_respect_cap() {
        assert_eq!(spans(3).count(), 6);
        assert_eq!(spans(10).count(), (0..10).map(|s| (10 - s).min(MAX_SPAN_LEN)).sum::<usize>());
        let g = Grammar::full(2);
        assert!(!g.is_legal(Position::CondValue(0), &Action::PickValueSpan { start: 0, end: 9 }, 2, 10));
        assert!(g.is_legal(Position::CondValue(0), &Action::PickValueSpan { start: 1, end: 9 }, 2, 10));
    }

    #[test]
    fn finds_spans_case_insensitively() {
        let question = q("how many games against Haugar");
        assert_eq!(find_span(&question, "haugar"), Some((4, 5)));
        assert_eq!(find_span(&question, "games against"), Some((2, 4)));
        assert_eq!(find_span(&question, "UEFA"), None);
    }
}
