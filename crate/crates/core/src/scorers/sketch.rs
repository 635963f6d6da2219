//! Two-stage model: a sketch classifier picks the comparator skeleton, then
//! a fine-stage scorer fills aggregate, columns and value spans.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::features::{cond_col_feats, feat, question_class_feats, sel_feats, Context};
use super::loglinear::{FeatureVec, Hyper, LogLinear, TrainingInstance};
use super::template::{extract_templates, labeled, load_model, save_model, MODEL_VERSION};
use crate::decoder::{Action, Grammar, Position, Scorer, SketchScorer};
use crate::error::Result;
use crate::sql::{AggregateFn, Sketch};
use crate::table::{Example, Table, TableCatalog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchScorerModel {
    pub version: u32,
    pub hyper: Hyper,
    pub sketches: Vec<Sketch>,
    pub sketch_clf: LogLinear,
    pub fine: LogLinear,
}

fn sketch_cands(ctx: &Context, sketches: &[Sketch], order: usize) -> Vec<FeatureVec> {
    sketches
        .iter()
        .map(|s| question_class_feats(ctx, order, &format!("sk={}", s.code())))
        .collect()
}

#[derive(Debug, Clone)]
pub struct FineState {
    ctx: Arc<Context>,
    position: Position,
    agg: Option<AggregateFn>,
    sel: Option<usize>,
    cols: Vec<usize>,
    spans: Vec<(usize, usize)>,
    question_len: usize,
}

/// Fine-stage scorer for one sketch: `agg sel (col span)^n`.
#[derive(Debug)]
pub struct FineScorer<'a> {
    model: &'a SketchScorerModel,
    sketch: Sketch,
    grammar: Grammar,
}

impl<'a> FineScorer<'a> {
    pub fn new(model: &'a SketchScorerModel, sketch: &Sketch) -> Self {
        FineScorer {
            model,
            sketch: sketch.clone(),
            grammar: Grammar::Sketch(sketch.clone()),
        }
    }

    fn features(&self, st: &FineState, action: &Action) -> FeatureVec {
        let ctx = &st.ctx;
        match (st.position, *action) {
            (Position::Agg, Action::PickAgg(a)) => {
                question_class_feats(ctx, self.model.hyper.ngram_order, &format!("fagg={a}"))
            }
            (Position::SelColumn, Action::PickColumn(c)) => sel_feats(ctx, c, st.agg, "fsel"),
            (Position::CondColumn(j), Action::PickColumn(c)) => {
                let op = self.sketch.ops[j];
                let ty = ctx.types[c].as_str();
                let mut f = vec![
                    (String::from("fcol|ov"), ctx.overlap(c) as f64),
                    feat(format!("fcol|type={ty}|op={op}")),
                ];
                if st.cols.contains(&c) {
                    f.push(feat("fcol|used"));
                }
                if st.sel == Some(c) {
                    f.push(feat("fcol|is_sel"));
                }
                if ctx.mentioned(c) {
                    f.push(feat("fcol|mentioned"));
                }
                if st.sel.is_some_and(|s| ctx.mention_rank_without(c, s) == Some(j)) {
                    f.push(feat("fcol|rank"));
                }
                f
            }
            (Position::CondValue(j), Action::PickValueSpan { start, end }) => {
                let op = self.sketch.ops[j];
                let c = st.cols[j];
                let mut f = cond_col_feats(ctx, c, start, end, "fval");
                f.push(feat(format!("fval|len={}", (end - start).min(4))));
                f.push(feat(format!("fval|op={op}|prev={}", ctx.token_or(start as isize - 1, "<s>"))));
                f.push(feat(format!("fval|next={}", ctx.token_or(end as isize, "</s>"))));
                if (start..end).any(|i| ctx.in_header(i)) {
                    f.push(feat("fval|hdr"));
                }
                if st.spans.iter().any(|&(s, e)| s < end && start < e) {
                    f.push(feat("fval|overlap"));
                }
                f
            }
            _ => Vec::new(),
        }
    }

    fn candidates(&self, st: &FineState) -> (Vec<Action>, Vec<FeatureVec>) {
        let actions = self
            .grammar
            .legal_actions(st.position, st.ctx.num_columns(), st.question_len);
        let feats = actions.iter().map(|a| self.features(st, a)).collect();
        (actions, feats)
    }

    fn start(&self, ctx: Arc<Context>) -> FineState {
        FineState {
            question_len: ctx.tokens.len(),
            ctx,
            position: Position::Agg,
            agg: None,
            sel: None,
            cols: Vec::new(),
            spans: Vec::new(),
        }
    }
}

impl Scorer for FineScorer<'_> {
    type State = FineState;

    fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    fn init(&self, example: &Example, table: &Table) -> Result<FineState> {
        Ok(self.start(Arc::new(Context::new(&example.question, table))))
    }

    fn step(&self, state: &FineState) -> Result<Vec<(Action, f64)>> {
        let (actions, feats) = self.candidates(state);
        Ok(actions.into_iter().zip(self.model.fine.probs(&feats)).collect())
    }

    fn advance(&self, state: &FineState, action: &Action) -> FineState {
        let mut next = state.clone();
        let n = self.sketch.len();
        next.position = match (state.position, *action) {
            (Position::Agg, Action::PickAgg(a)) => {
                next.agg = Some(a);
                Position::SelColumn
            }
            (Position::SelColumn, Action::PickColumn(c)) => {
                next.sel = Some(c);
                if n == 0 {
                    Position::Done
                } else {
                    Position::CondColumn(0)
                }
            }
            (Position::CondColumn(j), Action::PickColumn(c)) => {
                next.cols.push(c);
                Position::CondValue(j)
            }
            (Position::CondValue(j), Action::PickValueSpan { start, end }) => {
                next.spans.push((start, end));
                if j + 1 == n {
                    Position::Done
                } else {
                    Position::CondColumn(j + 1)
                }
            }
            (pos, _) => pos,
        };
        next
    }
}

impl SketchScorer for SketchScorerModel {
    type Fine<'a> = FineScorer<'a>;

    fn sketch_rank(&self, example: &Example, table: &Table) -> Result<Vec<(Sketch, f64)>> {
        let ctx = Context::new(&example.question, table);
        let lp = self
            .sketch_clf
            .log_probs(&sketch_cands(&ctx, &self.sketches, self.hyper.ngram_order));
        let mut out: Vec<(Sketch, f64)> = self.sketches.iter().cloned().zip(lp).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }

    fn fine<'a>(&'a self, sketch: &Sketch) -> FineScorer<'a> {
        FineScorer::new(self, sketch)
    }
}

impl SketchScorerModel {
    pub fn untrained(sketches: Vec<Sketch>, hyper: Hyper) -> Self {
        SketchScorerModel {
            version: MODEL_VERSION,
            hyper,
            sketches,
            sketch_clf: LogLinear::new(),
            fine: LogLinear::new(),
        }
    }

    /// Trains the sketch classifier on every gold example and the fine
    /// stage, with teacher forcing, on examples whose values are all
    /// question spans.
    pub fn train(train: &[Example], catalog: &TableCatalog, hyper: &Hyper) -> Result<Self> {
        let sketches: Vec<Sketch> = extract_templates(train)?.iter().map(|t| t.sketch()).collect();
        let data = labeled(train, catalog)?;
        let mut model = SketchScorerModel::untrained(sketches, *hyper);

        let mut coarse = Vec::new();
        for d in &data {
            let gold = d.gold.sketch();
            coarse.push(TrainingInstance {
                candidates: sketch_cands(&d.ctx, &model.sketches, hyper.ngram_order),
                gold: model.sketches.iter().position(|s| *s == gold).expect("inventory covers training"),
            });
        }
        model.sketch_clf.train(&coarse, hyper)?;

        let mut fine_data = Vec::new();
        for d in &data {
            let Some(spans) = d.spans.iter().copied().collect::<Option<Vec<_>>>() else {
                continue;
            };
            let mut path = vec![Action::PickAgg(d.gold.agg), Action::PickColumn(d.gold.sel)];
            for (c, (s, e)) in d.gold.conds.iter().zip(spans) {
                path.push(Action::PickColumn(c.column));
                path.push(Action::PickValueSpan { start: s, end: e });
            }
            let fine = FineScorer::new(&model, &d.gold.sketch());
            let mut st = fine.start(Arc::new(d.ctx.clone()));
            for a in &path {
                let (actions, feats) = fine.candidates(&st);
                let Some(gold) = actions.iter().position(|x| x == a) else {
                    break;
                };
                fine_data.push(TrainingInstance {
                    candidates: feats,
                    gold,
                });
                st = fine.advance(&st, a);
            }
        }
        if !fine_data.is_empty() {
            let mut fine = LogLinear::new();
            fine.train(&fine_data, hyper)?;
            model.fine = fine;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_model(path.as_ref(), "sketch", self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_model(path.as_ref(), "sketch")
    }
}
