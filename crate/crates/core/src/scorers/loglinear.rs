//! Multinomial log-linear classifier over sparse named features.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse feature vector; repeated names add up.
pub type FeatureVec = Vec<(String, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub epochs: usize,
    pub learning_rate: f64,
    pub ngram_order: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            epochs: 20,
            learning_rate: 1.0,
            ngram_order: 2,
        }
    }
}

/// One classification decision: candidate feature vectors and the index of
/// the correct one.
#[derive(Debug, Clone)]
pub struct TrainingInstance {
    pub candidates: Vec<FeatureVec>,
    pub gold: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogLinear {
    weights: BTreeMap<String, f64>,
}

/// Halvings tried before giving up on an epoch's step.
const MAX_BACKTRACKS: usize = 30;

fn log_softmax(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
    for s in scores {
        *s -= z;
    }
}

impl LogLinear {
    pub fn new() -> Self {
        LogLinear::default()
    }

    pub fn weight(&self, feature: &str) -> f64 {
        self.weights.get(feature).copied().unwrap_or(0.0)
    }

    pub fn set_weight(&mut self, feature: impl Into<String>, w: f64) {
        let feature = feature.into();
        if w == 0.0 {
            self.weights.remove(&feature);
        } else {
            self.weights.insert(feature, w);
        }
    }

    pub fn num_weights(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, f: &FeatureVec) -> f64 {
        f.iter().map(|(name, v)| self.weight(name) * v).sum()
    }

    /// Normalized log probabilities of the candidates.
    pub fn log_probs(&self, candidates: &[FeatureVec]) -> Vec<f64> {
        let mut scores: Vec<f64> = candidates.iter().map(|f| self.score(f)).collect();
        log_softmax(&mut scores);
        scores
    }

    pub fn probs(&self, candidates: &[FeatureVec]) -> Vec<f64> {
        let lp = self.log_probs(candidates);
        let mut p: Vec<f64> = lp.into_iter().map(f64::exp).collect();
        let total: f64 = p.iter().sum();
        for x in &mut p {
            *x /= total;
        }
        p
    }

    /// Average negative log likelihood of the gold candidates.
    pub fn loss(&self, data: &[TrainingInstance]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let total: f64 = data.iter().map(|d| -self.log_probs(&d.candidates)[d.gold]).sum();
        total / data.len() as f64
    }

    /// Full-batch gradient ascent on the average log likelihood. The step
    /// is halved until the loss does not increase, so the returned
    /// per-epoch losses (before each update, then the final one) are
    /// non-increasing.
    pub fn train(&mut self, data: &[TrainingInstance], hyper: &Hyper) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::EmptyTraining);
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut names: Vec<&str> = Vec::new();
        let mut dense: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(data.len());
        let mut any_active = false;
        for d in data {
            let cands = d
                .candidates
                .iter()
                .map(|f| {
                    f.iter()
                        .map(|(name, v)| {
                            any_active |= *v != 0.0;
                            let next = names.len();
                            let i = *index.entry(name.as_str()).or_insert(next);
                            if i == next {
                                names.push(name.as_str());
                            }
                            (i, *v)
                        })
                        .collect()
                })
                .collect();
            dense.push(cands);
        }
        if !any_active {
            return Err(Error::DegenerateFeatures);
        }
        let golds: Vec<usize> = data.iter().map(|d| d.gold).collect();
        let mut w: Vec<f64> = names.iter().map(|n| self.weight(n)).collect();
        let n = data.len() as f64;

        let eval = |w: &[f64], grad: Option<&mut Vec<f64>>| -> f64 {
            let mut loss = 0.0;
            let mut g = grad;
            if let Some(g) = g.as_deref_mut() {
                g.iter_mut().for_each(|x| *x = 0.0);
            }
            for (cands, &gold) in dense.iter().zip(&golds) {
                let mut scores: Vec<f64> = cands
                    .iter()
                    .map(|f| f.iter().map(|&(i, v)| w[i] * v).sum())
                    .collect();
                log_softmax(&mut scores);
                loss -= scores[gold];
                if let Some(g) = g.as_deref_mut() {
                    for &(i, v) in &cands[gold] {
                        g[i] += v / n;
                    }
                    for (f, lp) in cands.iter().zip(&scores) {
                        let p = lp.exp();
                        for &(i, v) in f {
                            g[i] -= p * v / n;
                        }
                    }
                }
            }
            loss / n
        };

        let mut grad = vec![0.0; w.len()];
        let mut losses = Vec::with_capacity(hyper.epochs + 1);
        let mut loss = eval(&w, Some(&mut grad));
        for _ in 0..hyper.epochs {
            losses.push(loss);
            let mut step = hyper.learning_rate;
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACKS {
                if step == 0.0 {
                    break;
                }
                let trial: Vec<f64> = w.iter().zip(&grad).map(|(x, g)| x + step * g).collect();
                let trial_loss = eval(&trial, None);
                if trial_loss <= loss {
                    w = trial;
                    accepted = true;
                    break;
                }
                step /= 2.0;
            }
            if !accepted {
                break;
            }
            loss = eval(&w, Some(&mut grad));
        }
        losses.push(loss);
        for (name, v) in names.iter().zip(w) {
            self.set_weight(*name, v);
        }
        Ok(losses)
    }
}
