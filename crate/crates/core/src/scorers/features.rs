//! Question and schema features shared by the trainable scorers. Nothing
//! here reads row contents.

use std::collections::HashSet;

use crate::sql::AggregateFn;
use crate::table::{parse_real, ColumnType, Table};

use super::loglinear::FeatureVec;

/// Tokens after this many positions before a value span count as its
/// left context.
const LEFT_WINDOW: usize = 4;

fn name_tokens(name: &str) -> Vec<String> {
    name.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub(crate) fn feat(name: impl Into<String>) -> (String, f64) {
    (name.into(), 1.0)
}

/// A question read against a table schema.
#[derive(Debug, Clone)]
pub(crate) struct Context {
    pub tokens: Vec<String>,
    pub types: Vec<ColumnType>,
    col_tokens: Vec<Vec<String>>,
    /// Per column, every `[start, end)` where its full name occurs.
    mentions: Vec<Vec<(usize, usize)>>,
    header_words: HashSet<String>,
    mention_order: Vec<usize>,
}

impl Context {
    pub fn new(question: &[String], table: &Table) -> Self {
        let tokens: Vec<String> = question.iter().map(|t| t.to_lowercase()).collect();
        let col_tokens: Vec<Vec<String>> = table.columns().iter().map(|c| name_tokens(&c.name)).collect();
        let mentions: Vec<Vec<(usize, usize)>> = col_tokens
            .iter()
            .map(|name| {
                if name.is_empty() || name.len() > tokens.len() {
                    return Vec::new();
                }
                (0..=tokens.len() - name.len())
                    .filter(|&s| tokens[s..s + name.len()] == name[..])
                    .map(|s| (s, s + name.len()))
                    .collect()
            })
            .collect();
        let mut mention_order: Vec<usize> = (0..col_tokens.len()).filter(|&c| !mentions[c].is_empty()).collect();
        mention_order.sort_by_key(|&c| (mentions[c][0].0, std::cmp::Reverse(mentions[c][0].1), c));
        Context {
            header_words: col_tokens.iter().flatten().cloned().collect(),
            types: table.columns().iter().map(|c| c.ctype).collect(),
            tokens,
            col_tokens,
            mentions,
            mention_order,
        }
    }

    pub fn num_columns(&self) -> usize {
        self.types.len()
    }

    /// Distinct name tokens of column `c` present in the question.
    pub fn overlap(&self, c: usize) -> usize {
        let q: HashSet<&str> = self.tokens.iter().map(String::as_str).collect();
        let name: HashSet<&str> = self.col_tokens[c].iter().map(String::as_str).collect();
        name.iter().filter(|t| q.contains(*t)).count()
    }

    pub fn mentioned(&self, c: usize) -> bool {
        !self.mentions[c].is_empty()
    }

    /// Rank of column `c` among mentioned columns, by first mention.
    pub fn mention_rank(&self, c: usize) -> Option<usize> {
        self.mention_order.iter().position(|&x| x == c)
    }

    /// Rank of `c` among mentioned columns other than `skip`.
    pub fn mention_rank_without(&self, c: usize, skip: usize) -> Option<usize> {
        self.mention_order
            .iter()
            .filter(|&&x| x != skip)
            .position(|&x| x == c)
    }

    /// Whether a mention of column `c` ends shortly before `start`.
    pub fn mentioned_before(&self, c: usize, start: usize) -> bool {
        self.mentions[c]
            .iter()
            .any(|&(_, e)| e <= start && start - e < LEFT_WINDOW)
    }

    pub fn is_numeric(&self, i: usize) -> bool {
        parse_real(&self.tokens[i]).is_some()
    }

    pub fn in_header(&self, i: usize) -> bool {
        self.header_words.contains(&self.tokens[i])
    }

    pub fn token_or(&self, i: isize, edge: &'static str) -> &str {
        if i < 0 || i as usize >= self.tokens.len() {
            edge
        } else {
            &self.tokens[i as usize]
        }
    }

    pub fn ngrams(&self, order: usize) -> Vec<String> {
        let mut out = Vec::new();
        for n in 1..=order.max(1) {
            for w in self.tokens.windows(n) {
                out.push(w.join(" "));
            }
        }
        out
    }
}

/// Features for a question-level class: n-grams, counts of numbers and of
/// mentioned columns, and a bias, each conjoined with `class`.
pub(crate) fn question_class_feats(ctx: &Context, order: usize, class: &str) -> FeatureVec {
    let mut f: FeatureVec = ctx.ngrams(order).into_iter().map(|g| feat(format!("{class}|g={g}"))).collect();
    let nums = (0..ctx.tokens.len()).filter(|&i| ctx.is_numeric(i)).count().min(4);
    let mentions = (0..ctx.num_columns()).filter(|&c| ctx.mentioned(c)).count().min(5);
    f.push(feat(format!("{class}|nums={nums}")));
    f.push(feat(format!("{class}|mentions={mentions}")));
    f.push(feat(format!("{class}|bias")));
    f
}

pub(crate) fn agg_feats(ctx: &Context, order: usize, agg: AggregateFn) -> FeatureVec {
    question_class_feats(ctx, order, &format!("agg={agg}"))
}

/// Select-column features; `agg` is conjoined with the column type when
/// known.
pub(crate) fn sel_feats(ctx: &Context, c: usize, agg: Option<AggregateFn>, prefix: &str) -> FeatureVec {
    let ty = ctx.types[c].as_str();
    let mut f = vec![(format!("{prefix}|ov"), ctx.overlap(c) as f64)];
    if ctx.mentioned(c) {
        f.push(feat(format!("{prefix}|full")));
    }
    if ctx.mention_rank(c) == Some(0) {
        f.push(feat(format!("{prefix}|first")));
    }
    if let Some(a) = agg {
        f.push(feat(format!("{prefix}|type={ty}|agg={a}")));
    }
    for w in &ctx.tokens {
        f.push(feat(format!("{prefix}|type={ty}|w={w}")));
    }
    f
}

/// Features for tagging token `i` as part of a value slot.
pub(crate) fn tag_feats(ctx: &Context, i: usize) -> FeatureVec {
    let i_s = i as isize;
    let mut f = vec![
        feat(format!("tag|w={}", ctx.tokens[i])),
        feat(format!("tag|prev={}", ctx.token_or(i_s - 1, "<s>"))),
        feat(format!("tag|next={}", ctx.token_or(i_s + 1, "</s>"))),
        feat("tag|bias"),
    ];
    if ctx.is_numeric(i) {
        f.push(feat("tag|num"));
    }
    if ctx.in_header(i) {
        f.push(feat("tag|hdr"));
    }
    f
}

/// Features for filling a condition on column `c` with value span
/// `start..end`.
pub(crate) fn cond_col_feats(ctx: &Context, c: usize, start: usize, end: usize, prefix: &str) -> FeatureVec {
    let numeric = (start..end).all(|i| ctx.is_numeric(i));
    let kind = if numeric { "num" } else { "txt" };
    let mut f = vec![
        (format!("{prefix}|ov"), ctx.overlap(c) as f64),
        feat(format!("{prefix}|{kind}&{}", ctx.types[c].as_str())),
    ];
    if ctx.mentioned_before(c, start) {
        f.push(feat(format!("{prefix}|left")));
    }
    f
}
