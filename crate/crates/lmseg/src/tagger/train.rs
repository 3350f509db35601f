//! Tagger training: per-example stochastic gradient descent on mean
//! per-token cross-entropy, with exact backpropagation through time,
//! gradient clipping at a fixed norm, and early stopping on held-out EOS-F1.
//!
//! The recipe is deliberately the simplest fully deterministic one: fixed
//! iteration order, seeded uniform initialization, plain SGD with a constant
//! learning rate. Identical inputs and seed give bit-identical loss curves.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::corpus::{Tag, TrainingExample};
use crate::scalar::Scalar;

use super::{
    Hyperparams, Params, StepCache, TaggerError, TaggerModel, Vocabulary, EOS_CLASS, PAD_ID,
};

/// Analytic gradients for one example. The embedding gradient is sparse:
/// only rows of consumed tokens appear.
#[derive(Debug, Clone)]
pub struct Grads<S: Scalar> {
    pub emb_rows: HashMap<usize, Array1<S>>,
    pub wz: Array2<S>,
    pub uz: Array2<S>,
    pub bz: Array1<S>,
    pub wr: Array2<S>,
    pub ur: Array2<S>,
    pub br: Array1<S>,
    pub wc: Array2<S>,
    pub uc: Array2<S>,
    pub bc: Array1<S>,
    pub out_w: Array2<S>,
    pub out_b: Array1<S>,
}

impl<S: Scalar> Grads<S> {
    fn zeros(hp: &Hyperparams) -> Self {
        let (e, h) = (hp.embed_dim, hp.hidden_dim);
        Grads {
            emb_rows: HashMap::new(),
            wz: Array2::zeros((h, e)),
            uz: Array2::zeros((h, h)),
            bz: Array1::zeros(h),
            wr: Array2::zeros((h, e)),
            ur: Array2::zeros((h, h)),
            br: Array1::zeros(h),
            wc: Array2::zeros((h, e)),
            uc: Array2::zeros((h, h)),
            bc: Array1::zeros(h),
            out_w: Array2::zeros((super::NUM_TAGS, h)),
            out_b: Array1::zeros(super::NUM_TAGS),
        }
    }

    fn sq_norm(&self) -> f64 {
        let mut s = 0.0f64;
        let acc2 = |s: &mut f64, a: &Array2<S>| {
            *s += a.iter().map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>()
        };
        let acc1 = |s: &mut f64, a: &Array1<S>| {
            *s += a.iter().map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>()
        };
        for row in self.emb_rows.values() {
            acc1(&mut s, row);
        }
        acc2(&mut s, &self.wz);
        acc2(&mut s, &self.uz);
        acc1(&mut s, &self.bz);
        acc2(&mut s, &self.wr);
        acc2(&mut s, &self.ur);
        acc1(&mut s, &self.br);
        acc2(&mut s, &self.wc);
        acc2(&mut s, &self.uc);
        acc1(&mut s, &self.bc);
        acc2(&mut s, &self.out_w);
        acc1(&mut s, &self.out_b);
        s
    }

    fn scale(&mut self, f: S) {
        for row in self.emb_rows.values_mut() {
            *row *= f;
        }
        self.wz *= f;
        self.uz *= f;
        self.bz *= f;
        self.wr *= f;
        self.ur *= f;
        self.br *= f;
        self.wc *= f;
        self.uc *= f;
        self.bc *= f;
        self.out_w *= f;
        self.out_b *= f;
    }
}

/// Input token ids plus the per-step training target (None = no loss at
/// this step).
pub fn training_sequence(
    ex: &TrainingExample,
    vocab: &Vocabulary,
    lookahead: bool,
) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut ids: Vec<usize> = ex.tokens.iter().map(|t| vocab.id(t)).collect();
    let class = |t: &Tag| match t {
        Tag::O => 0usize,
        Tag::Eos => EOS_CLASS,
    };
    if lookahead {
        // Output at step t tags token t-1; a trailing PAD step forces out
        // the final token's tag, matching flush semantics at inference.
        ids.push(PAD_ID);
        let mut targets = vec![None];
        targets.extend(ex.tags.iter().map(|t| Some(class(t))));
        (ids, targets)
    } else {
        let targets = ex.tags.iter().map(|t| Some(class(t))).collect();
        (ids, targets)
    }
}

/// Mean cross-entropy loss and analytic gradients for one sequence.
pub fn loss_and_grads<S: Scalar>(
    model: &TaggerModel<S>,
    ids: &[usize],
    targets: &[Option<usize>],
) -> (f64, Grads<S>) {
    assert_eq!(ids.len(), targets.len());
    let caches = model.forward(ids);
    let counted = targets.iter().flatten().count().max(1);
    let scale = S::c(1.0 / counted as f64);

    let mut loss = 0.0f64;
    let mut grads = Grads::zeros(&model.hp);
    let p = &model.params;
    let h_dim = model.hp.hidden_dim;

    // dh carried backward across steps.
    let mut dh: Array1<S> = Array1::zeros(h_dim);
    for t in (0..caches.len()).rev() {
        let cache: &StepCache<S> = &caches[t];
        if let Some(target) = targets[t] {
            let pt = cache.probs[target].to_f64().unwrap();
            loss -= pt.max(f64::MIN_POSITIVE).ln() / counted as f64;
            let mut dlogits = cache.probs.clone();
            dlogits[target] = dlogits[target] - S::one();
            dlogits *= scale;
            grads.out_w = grads.out_w + outer(&dlogits, &cache.h);
            grads.out_b = grads.out_b + &dlogits;
            dh = dh + p.out_w.t().dot(&dlogits);
        }

        let one = Array1::<S>::ones(h_dim);
        let dz = &dh * &(&cache.c - &cache.h_prev);
        let da_z = &dz * &cache.z * (&one - &cache.z);
        let dc = &dh * &cache.z;
        let da_c = &dc * &(&one - &(&cache.c * &cache.c));
        let uc_t_dac = p.uc.t().dot(&da_c);
        let dr = &uc_t_dac * &cache.h_prev;
        let da_r = &dr * &cache.r * (&one - &cache.r);

        let x = p.embedding.row(cache.token_id).to_owned();
        let rh = &cache.r * &cache.h_prev;
        grads.wz = grads.wz + outer(&da_z, &x);
        grads.uz = grads.uz + outer(&da_z, &cache.h_prev);
        grads.bz = grads.bz + &da_z;
        grads.wr = grads.wr + outer(&da_r, &x);
        grads.ur = grads.ur + outer(&da_r, &cache.h_prev);
        grads.br = grads.br + &da_r;
        grads.wc = grads.wc + outer(&da_c, &x);
        grads.uc = grads.uc + outer(&da_c, &rh);
        grads.bc = grads.bc + &da_c;

        let dx = p.wz.t().dot(&da_z) + p.wr.t().dot(&da_r) + p.wc.t().dot(&da_c);
        let entry = grads
            .emb_rows
            .entry(cache.token_id)
            .or_insert_with(|| Array1::zeros(model.hp.embed_dim));
        *entry = entry.clone() + dx;

        dh = &dh * &(&one - &cache.z) + p.uz.t().dot(&da_z) + p.ur.t().dot(&da_r)
            + &uc_t_dac * &cache.r;
    }
    (loss, grads)
}

fn outer<S: Scalar>(a: &Array1<S>, b: &Array1<S>) -> Array2<S> {
    let (m, n) = (a.len(), b.len());
    Array2::from_shape_fn((m, n), |(i, j)| a[i] * b[j])
}

fn apply_sgd<S: Scalar>(params: &mut Params<S>, grads: &Grads<S>, lr: S) {
    for (&row, g) in &grads.emb_rows {
        let mut r = params.embedding.row_mut(row);
        r -= &g.mapv(|v| v * lr);
    }
    params.wz = &params.wz - &grads.wz.mapv(|v| v * lr);
    params.uz = &params.uz - &grads.uz.mapv(|v| v * lr);
    params.bz = &params.bz - &grads.bz.mapv(|v| v * lr);
    params.wr = &params.wr - &grads.wr.mapv(|v| v * lr);
    params.ur = &params.ur - &grads.ur.mapv(|v| v * lr);
    params.br = &params.br - &grads.br.mapv(|v| v * lr);
    params.wc = &params.wc - &grads.wc.mapv(|v| v * lr);
    params.uc = &params.uc - &grads.uc.mapv(|v| v * lr);
    params.bc = &params.bc - &grads.bc.mapv(|v| v * lr);
    params.out_w = &params.out_w - &grads.out_w.mapv(|v| v * lr);
    params.out_b = &params.out_b - &grads.out_b.mapv(|v| v * lr);
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub holdout_accuracy: Option<f64>,
    pub holdout_eos_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    pub stopped_early: bool,
}

impl TrainLog {
    /// Write the log as CSV (epoch, loss, accuracies).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "epoch,train_loss,train_accuracy,holdout_accuracy,holdout_eos_f1"
        )?;
        for e in &self.epochs {
            writeln!(
                w,
                "{},{},{},{},{}",
                e.epoch,
                e.train_loss,
                e.train_accuracy,
                e.holdout_accuracy.map_or(String::new(), |v| v.to_string()),
                e.holdout_eos_f1.map_or(String::new(), |v| v.to_string()),
            )?;
        }
        Ok(())
    }
}

/// Tag accuracy and EOS precision/recall/F1 of a model over examples.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalStats {
    pub tag_accuracy: f64,
    pub eos_precision: f64,
    pub eos_recall: f64,
    pub eos_f1: f64,
}

/// Evaluate argmax tag decisions against gold tags.
pub fn evaluate<S: Scalar>(model: &TaggerModel<S>, examples: &[TrainingExample]) -> EvalStats {
    let (mut correct, mut total) = (0usize, 0usize);
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for ex in examples {
        let (ids, targets) = training_sequence(ex, &model.vocab, model.lookahead_mode);
        let caches = model.forward(&ids);
        for (cache, target) in caches.iter().zip(&targets) {
            let Some(target) = target else { continue };
            let pred = if cache.probs[EOS_CLASS] > cache.probs[0] {
                EOS_CLASS
            } else {
                0
            };
            total += 1;
            if pred == *target {
                correct += 1;
            }
            match (pred == EOS_CLASS, *target == EOS_CLASS) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    EvalStats {
        tag_accuracy: if total == 0 { 1.0 } else { correct as f64 / total as f64 },
        eos_precision: precision,
        eos_recall: recall,
        eos_f1: f1,
    }
}

/// Train a tagger. Deterministic given the seed: fixed iteration order,
/// seeded initialization, no shuffling.
///
/// Every 10th example is held out for early stopping (none if the corpus is
/// too small); training stops at `max_epochs` or when held-out EOS-F1 has
/// not improved for `patience` epochs, and the best-F1 parameters are kept.
pub fn train<S: Scalar>(
    examples: &[TrainingExample],
    vocab: &Vocabulary,
    hp: &Hyperparams,
    lookahead: bool,
    seed: u64,
) -> Result<(TaggerModel<S>, TrainLog), TaggerError> {
    hp.validate()?;
    if examples.is_empty() {
        return Err(TaggerError::EmptyCorpus);
    }
    for (i, ex) in examples.iter().enumerate() {
        if ex.tokens.len() != ex.tags.len() || ex.tokens.is_empty() {
            return Err(TaggerError::DimensionMismatch {
                index: i,
                tokens: ex.tokens.len(),
                tags: ex.tags.len(),
            });
        }
    }

    let use_holdout = examples.len() >= 20;
    let mut train_set = Vec::new();
    let mut holdout = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        if use_holdout && i % 10 == 9 {
            holdout.push(ex.clone());
        } else {
            train_set.push(ex.clone());
        }
    }
    // A holdout with no eos positions cannot measure EOS-F1 (it would pin
    // early stopping to the first epoch), so fold it back into training.
    if !holdout.iter().any(|ex| ex.tags.contains(&Tag::Eos)) {
        train_set.extend(holdout.drain(..));
    }

    let mut model: TaggerModel<S> = TaggerModel::new(vocab.clone(), hp.clone(), lookahead, seed);
    let sequences: Vec<(Vec<usize>, Vec<Option<usize>>)> = train_set
        .iter()
        .map(|ex| training_sequence(ex, vocab, lookahead))
        .collect();

    let lr = S::c(hp.learning_rate);
    let mut log = TrainLog::default();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_params: Option<Params<S>> = None;
    let mut epochs_since_best = 0usize;

    for epoch in 0..hp.max_epochs {
        let mut epoch_loss = 0.0f64;
        for (i, (ids, targets)) in sequences.iter().enumerate() {
            let (loss, mut grads) = loss_and_grads(&model, ids, targets);
            if !loss.is_finite() {
                return Err(TaggerError::NonFiniteLoss { epoch, example: i });
            }
            epoch_loss += loss;
            let norm = grads.sq_norm().sqrt();
            if norm > hp.clip_norm {
                grads.scale(S::c(hp.clip_norm / norm));
            }
            apply_sgd(&mut model.params, &grads, lr);
        }
        epoch_loss /= sequences.len() as f64;

        let train_stats = evaluate(&model, &train_set);
        let holdout_stats = if holdout.is_empty() {
            None
        } else {
            Some(evaluate(&model, &holdout))
        };
        log.epochs.push(EpochStats {
            epoch,
            train_loss: epoch_loss,
            train_accuracy: train_stats.tag_accuracy,
            holdout_accuracy: holdout_stats.map(|s| s.tag_accuracy),
            holdout_eos_f1: holdout_stats.map(|s| s.eos_f1),
        });

        if let Some(hs) = holdout_stats {
            if hs.eos_f1 > best_f1 {
                best_f1 = hs.eos_f1;
                best_params = Some(model.params.clone());
                epochs_since_best = 0;
            } else {
                epochs_since_best += 1;
                if epochs_since_best >= hp.patience {
                    log.stopped_early = true;
                    break;
                }
            }
        }
    }

    if let Some(p) = best_params {
        model.params = p;
    }
    if !model.params.all_finite() {
        return Err(TaggerError::NonFiniteLoss {
            epoch: log.epochs.len(),
            example: 0,
        });
    }
    Ok((model, log))
}
