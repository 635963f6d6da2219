//! Template classification plus independent slot filling.
//!
//! A template is the comparator skeleton of a query. Decoding picks the
//! top-k templates and the top-k slot assignments independently and ranks
//! their combinations by joint probability; aggregate, select column,
//! value spans (from a per-token tagger) and condition columns are slots.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{agg_feats, cond_col_feats, question_class_feats, sel_feats, tag_feats, Context};
use super::loglinear::{FeatureVec, Hyper, LogLinear, TrainingInstance};
use crate::decoder::find_span;
use crate::error::{Error, Result};
use crate::sql::{AggregateFn, Comparator, Condition, Query, Sketch};
use crate::table::{Example, Table, TableCatalog};

pub(crate) const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Template {
    pub cond_count: usize,
    pub ops: Vec<Comparator>,
}

impl Template {
    pub fn of(q: &Query) -> Self {
        Template {
            cond_count: q.conds.len(),
            ops: q.conds.iter().map(|c| c.op).collect(),
        }
    }

    pub fn sketch(&self) -> Sketch {
        Sketch::new(self.ops.clone())
    }

    fn class(&self) -> String {
        format!("tpl={}:{}", self.cond_count, self.sketch().code())
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SELECT agg col {}", self.sketch())
    }
}

/// Distinct templates of the gold queries, most frequent first; ties keep
/// the smaller template first. Examples without gold are skipped.
pub fn extract_templates(train: &[Example]) -> Result<Vec<Template>> {
    let mut counts: BTreeMap<Template, usize> = BTreeMap::new();
    for q in train.iter().filter_map(|e| e.gold.as_ref()) {
        *counts.entry(Template::of(q)).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let mut out: Vec<(Template, usize)> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out.into_iter().map(|(t, _)| t).collect())
}

/// Gold examples paired with their tables and the token span of every
/// condition value. Conditions whose value is not a question span are
/// left out of span-level training.
pub(crate) struct Labeled<'a> {
    pub gold: &'a Query,
    pub ctx: Context,
    pub spans: Vec<Option<(usize, usize)>>,
}

pub(crate) fn labeled<'a>(train: &'a [Example], catalog: &'a TableCatalog) -> Result<Vec<Labeled<'a>>> {
    let mut out = Vec::new();
    for e in train {
        let Some(gold) = e.gold.as_ref() else { continue };
        let table = catalog.table(&e.table_id)?;
        let ctx = Context::new(&e.question, table);
        let spans = gold.conds.iter().map(|c| find_span(&e.question, &c.value)).collect();
        out.push(Labeled {
            gold,
            ctx,
            spans,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyTraining);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateScorerModel {
    pub version: u32,
    pub hyper: Hyper,
    pub templates: Vec<Template>,
    pub template_clf: LogLinear,
    pub agg_clf: LogLinear,
    pub sel_clf: LogLinear,
    pub tagger: LogLinear,
    pub cond_col_clf: LogLinear,
}

fn template_cands(ctx: &Context, templates: &[Template], order: usize) -> Vec<FeatureVec> {
    templates
        .iter()
        .map(|t| question_class_feats(ctx, order, &t.class()))
        .collect()
}

fn agg_cands(ctx: &Context, order: usize) -> Vec<FeatureVec> {
    AggregateFn::ALL.iter().map(|&a| agg_feats(ctx, order, a)).collect()
}

fn sel_cands(ctx: &Context) -> Vec<FeatureVec> {
    (0..ctx.num_columns()).map(|c| sel_feats(ctx, c, None, "sel")).collect()
}

/// Tagging token `i` "in" versus the featureless "out" reference class.
fn tag_cands(ctx: &Context, i: usize) -> Vec<FeatureVec> {
    vec![Vec::new(), tag_feats(ctx, i)]
}

fn cond_col_cands(ctx: &Context, start: usize, end: usize) -> Vec<FeatureVec> {
    (0..ctx.num_columns())
        .map(|c| cond_col_feats(ctx, c, start, end, "cc"))
        .collect()
}

impl TemplateScorerModel {
    pub fn untrained(templates: Vec<Template>, hyper: Hyper) -> Self {
        TemplateScorerModel {
            version: MODEL_VERSION,
            hyper,
            templates,
            template_clf: LogLinear::new(),
            agg_clf: LogLinear::new(),
            sel_clf: LogLinear::new(),
            tagger: LogLinear::new(),
            cond_col_clf: LogLinear::new(),
        }
    }

    pub fn train(train: &[Example], catalog: &TableCatalog, hyper: &Hyper) -> Result<Self> {
        let templates = extract_templates(train)?;
        let data = labeled(train, catalog)?;
        let mut model = TemplateScorerModel::untrained(templates, *hyper);
        let order = hyper.ngram_order;

        let mut tpl = Vec::new();
        let mut agg = Vec::new();
        let mut sel = Vec::new();
        let mut tag = Vec::new();
        let mut col = Vec::new();
        for d in &data {
            let t = Template::of(d.gold);
            let gold_t = model.templates.iter().position(|x| *x == t).expect("inventory covers training");
            tpl.push(TrainingInstance {
                candidates: template_cands(&d.ctx, &model.templates, order),
                gold: gold_t,
            });
            agg.push(TrainingInstance {
                candidates: agg_cands(&d.ctx, order),
                gold: d.gold.agg as usize,
            });
            sel.push(TrainingInstance {
                candidates: sel_cands(&d.ctx),
                gold: d.gold.sel,
            });
            // tagging is only trained when every value was located
            if d.spans.iter().all(Option::is_some) {
                let inside: HashSet<usize> = d.spans.iter().flatten().flat_map(|&(s, e)| s..e).collect();
                for i in 0..d.ctx.tokens.len() {
                    tag.push(TrainingInstance {
                        candidates: tag_cands(&d.ctx, i),
                        gold: usize::from(inside.contains(&i)),
                    });
                }
            }
            for (c, span) in d.gold.conds.iter().zip(&d.spans) {
                if let Some((s, e)) = *span {
                    col.push(TrainingInstance {
                        candidates: cond_col_cands(&d.ctx, s, e),
                        gold: c.column,
                    });
                }
            }
        }
        model.template_clf.train(&tpl, hyper)?;
        model.agg_clf.train(&agg, hyper)?;
        model.sel_clf.train(&sel, hyper)?;
        if !tag.is_empty() {
            model.tagger.train(&tag, hyper)?;
        }
        if !col.is_empty() {
            model.cond_col_clf.train(&col, hyper)?;
        }
        Ok(model)
    }

    /// Templates with log probabilities, best first.
    pub fn rank_templates(&self, example: &Example, table: &Table) -> Vec<(Template, f64)> {
        let ctx = Context::new(&example.question, table);
        let lp = self
            .template_clf
            .log_probs(&template_cands(&ctx, &self.templates, self.hyper.ngram_order));
        let mut out: Vec<(Template, f64)> = self.templates.iter().cloned().zip(lp).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_model(path.as_ref(), "template", self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = load_model(path.as_ref(), "template")?;
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile<T> {
    kind: String,
    version: u32,
    model: T,
}

pub(crate) fn save_model<T: Serialize>(path: &Path, kind: &str, model: &T) -> Result<()> {
    let file = ModelFile {
        kind: kind.to_string(),
        version: MODEL_VERSION,
        model,
    };
    let text = serde_json::to_string_pretty(&file).expect("model serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn load_model<T: for<'de> Deserialize<'de>>(path: &Path, kind: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile<T> =
        serde_json::from_str(&text).map_err(|e| Error::format(path, 0, format!("malformed model file: {e}")))?;
    if file.kind != kind {
        return Err(Error::format(path, 0, format!("expected a {kind} model, found `{}`", file.kind)));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::format(path, 0, format!("unsupported model version {}", file.version)));
    }
    Ok(file.model)
}

/// Top `k` combinations of one choice per list by summed score. Each list
/// must be sorted best first; ties keep enumeration order.
pub(crate) fn kbest_product<T: Clone>(lists: &[Vec<(T, f64)>], k: usize) -> Vec<(Vec<T>, f64)> {
    let mut acc: Vec<(Vec<T>, f64)> = vec![(Vec::new(), 0.0)];
    for list in lists {
        let mut next: Vec<(Vec<T>, f64)> = Vec::with_capacity(acc.len() * list.len());
        for (prefix, s) in &acc {
            for (x, t) in list.iter().take(k) {
                let mut v = prefix.clone();
                v.push(x.clone());
                next.push((v, s + t));
            }
        }
        next.sort_by(|a, b| b.1.total_cmp(&a.1));
        next.truncate(k);
        acc = next;
    }
    acc
}

fn sorted<T>(mut v: Vec<(T, f64)>) -> Vec<(T, f64)> {
    v.sort_by(|a, b| b.1.total_cmp(&a.1));
    v
}

/// Maximal runs of tagged tokens, left to right.
fn runs(tags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &t) in tags.iter().chain(std::iter::once(&false)).enumerate() {
        match (t, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// A filled slot list: value spans with their columns.
type Slots = Vec<((usize, usize), usize)>;

/// Joint-probability candidates: top-k templates crossed with the top-k
/// slot assignments, sorted best first and truncated to `k`. When the
/// tagger marks more spans than a template has slots, the leftmost spans
/// are used.
pub fn template_candidates(
    model: &TemplateScorerModel,
    example: &Example,
    table: &Table,
    k: usize,
) -> Result<Vec<(Query, f64)>> {
    let k = k.max(1);
    let ctx = Context::new(&example.question, table);
    let order = model.hyper.ngram_order;
    let templates: Vec<(Template, f64)> = model.rank_templates(example, table).into_iter().take(k).collect();
    let aggs = sorted(
        AggregateFn::ALL
            .into_iter()
            .zip(model.agg_clf.log_probs(&agg_cands(&ctx, order)))
            .collect(),
    );
    let sels = sorted((0..table.arity()).zip(model.sel_clf.log_probs(&sel_cands(&ctx))).collect());
    let token_lists: Vec<Vec<(bool, f64)>> = (0..ctx.tokens.len())
        .map(|i| {
            let lp = model.tagger.log_probs(&tag_cands(&ctx, i));
            sorted(vec![(false, lp[0]), (true, lp[1])])
        })
        .collect();
    let taggings = kbest_product(&token_lists, k);

    // slot lists per condition count, shared across templates
    let mut slot_lists: BTreeMap<usize, Vec<(Slots, f64)>> = BTreeMap::new();
    for (t, _) in &templates {
        slot_lists.entry(t.cond_count).or_insert_with(|| {
            let mut all: Vec<(Slots, f64)> = Vec::new();
            for (tags, tag_lp) in &taggings {
                let spans = runs(tags);
                if spans.len() < t.cond_count {
                    continue;
                }
                let col_lists: Vec<Vec<(usize, f64)>> = spans[..t.cond_count]
                    .iter()
                    .map(|&(s, e)| {
                        let lp = model.cond_col_clf.log_probs(&cond_col_cands(&ctx, s, e));
                        sorted((0..table.arity()).zip(lp).collect())
                    })
                    .collect();
                for (cols, col_lp) in kbest_product(&col_lists, k) {
                    let slots = spans[..t.cond_count].iter().copied().zip(cols).collect();
                    all.push((slots, tag_lp + col_lp));
                }
            }
            all.sort_by(|a, b| b.1.total_cmp(&a.1));
            all.truncate(k);
            all
        });
    }

    let mut joint: Vec<(Query, f64)> = Vec::new();
    for (t, t_lp) in &templates {
        let slots = &slot_lists[&t.cond_count];
        if slots.is_empty() {
            continue;
        }
        for (agg, a_lp) in aggs.iter().take(k) {
            for (sel, s_lp) in sels.iter().take(k) {
                for (fill, f_lp) in slots {
                    let conds = fill
                        .iter()
                        .zip(&t.ops)
                        .map(|(&((s, e), col), &op)| Condition::new(col, op, example.question[s..e].join(" ")))
                        .collect();
                    joint.push((Query::new(*agg, *sel, conds), t_lp + a_lp + s_lp + f_lp));
                }
            }
        }
    }
    joint.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut seen = HashSet::new();
    joint.retain(|(q, _)| seen.insert(q.clone()));
    joint.truncate(k);
    if joint.is_empty() {
        return Err(Error::NoViableCandidate(format!(
            "no tagging of example `{}` has enough spans for its top templates",
            example.id
        )));
    }
    Ok(joint)
}
