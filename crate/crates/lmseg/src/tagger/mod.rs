//! The LM-EOS model: a single-layer gated recurrent (GRU) sequence tagger
//! over word tokens, emitting per-token end-of-segment probabilities.
//!
//! Two inference modes share one parameterization:
//!
//! - no look-ahead: the output at step `t` tags token `t`;
//! - look-ahead: the output at step `t` tags token `t-1`, so every tag
//!   decision sees one word of right context. The final token's tag is
//!   forced out by feeding PAD as the missing successor (see
//!   [`stream`]'s `flush`).
//!
//! Desk-scale defaults (hidden 64, embedding 32, vocabulary 5000) train in
//! minutes on a laptop; larger values are plain configuration.

pub mod io;
pub mod stream;
pub mod train;
mod vocab;

pub use stream::{EosPrediction, TaggerState};
pub use train::{train, evaluate, EpochStats, TrainLog};
pub use vocab::{build_vocab, Vocabulary, OOV_ID, PAD_ID};

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;

/// Output classes: index 0 = `O`, index 1 = `eos`.
pub const NUM_TAGS: usize = 2;
pub const EOS_CLASS: usize = 1;

#[derive(Debug, Error, PartialEq)]
pub enum TaggerError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("example {index}: {tokens} tokens but {tags} tags")]
    DimensionMismatch {
        index: usize,
        tokens: usize,
        tags: usize,
    },
    #[error("non-finite loss at epoch {epoch}, example {example}")]
    NonFiniteLoss { epoch: usize, example: usize },
    #[error("stream state does not belong to this model")]
    UnknownState,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
}

/// Training and architecture configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Early-stopping patience on held-out EOS-F1.
    pub patience: usize,
    pub clip_norm: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            embed_dim: 32,
            hidden_dim: 64,
            learning_rate: 0.1,
            max_epochs: 200,
            patience: 5,
            clip_norm: 5.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), TaggerError> {
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(TaggerError::InvalidHyperparams(
                "dimensions must be positive".into(),
            ));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(TaggerError::InvalidHyperparams(
                "learning rate must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// All trainable tensors. Matrix shapes: input weights are
/// `hidden x embed`, recurrent weights `hidden x hidden`, the output
/// projection `NUM_TAGS x hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<S: Scalar> {
    pub embedding: Array2<S>, // vocab x embed
    pub wz: Array2<S>,
    pub uz: Array2<S>,
    pub bz: Array1<S>,
    pub wr: Array2<S>,
    pub ur: Array2<S>,
    pub br: Array1<S>,
    pub wc: Array2<S>,
    pub uc: Array2<S>,
    pub bc: Array1<S>,
    pub out_w: Array2<S>, // NUM_TAGS x hidden
    pub out_b: Array1<S>,
}

impl<S: Scalar> Params<S> {
    /// Uniform(-0.1, 0.1) initialization from a seeded generator.
    pub fn init(vocab_size: usize, hp: &Hyperparams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new(-0.1f64, 0.1f64);
        let mut draw = |rows: usize, cols: usize| -> Array2<S> {
            Array2::from_shape_fn((rows, cols), |_| S::c(dist.sample(&mut rng)))
        };
        let (e, h) = (hp.embed_dim, hp.hidden_dim);
        let embedding = draw(vocab_size, e);
        let wz = draw(h, e);
        let uz = draw(h, h);
        let wr = draw(h, e);
        let ur = draw(h, h);
        let wc = draw(h, e);
        let uc = draw(h, h);
        let out_w = draw(NUM_TAGS, h);
        Params {
            embedding,
            wz,
            uz,
            bz: Array1::zeros(h),
            wr,
            ur,
            br: Array1::zeros(h),
            wc,
            uc,
            bc: Array1::zeros(h),
            out_w,
            out_b: Array1::zeros(NUM_TAGS),
        }
    }

    pub fn all_finite(&self) -> bool {
        let mats = [
            &self.embedding,
            &self.wz,
            &self.uz,
            &self.wr,
            &self.ur,
            &self.wc,
            &self.uc,
            &self.out_w,
        ];
        let vecs = [&self.bz, &self.br, &self.bc, &self.out_b];
        mats.iter().all(|m| m.iter().all(|v| v.is_finite()))
            && vecs.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// A trained (or freshly initialized) end-of-segment tagger.
///
/// Immutable after training/loading; safe to share across concurrent
/// streams. Each [`TaggerState`] is single-owner.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel<S: Scalar> {
    pub vocab: Vocabulary,
    pub hp: Hyperparams,
    pub lookahead_mode: bool,
    pub rng_seed: u64,
    pub params: Params<S>,
    fingerprint: u64,
}

/// Per-step forward cache, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache<S: Scalar> {
    pub token_id: usize,
    pub h_prev: Array1<S>,
    pub z: Array1<S>,
    pub r: Array1<S>,
    pub c: Array1<S>,
    pub h: Array1<S>,
    /// Softmax over {O, eos}.
    pub probs: Array1<S>,
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

impl<S: Scalar> TaggerModel<S> {
    pub fn new(vocab: Vocabulary, hp: Hyperparams, lookahead_mode: bool, seed: u64) -> Self {
        let params = Params::init(vocab.size(), &hp, seed);
        Self::from_parts(vocab, hp, lookahead_mode, seed, params)
    }

    pub fn from_parts(
        vocab: Vocabulary,
        hp: Hyperparams,
        lookahead_mode: bool,
        seed: u64,
        params: Params<S>,
    ) -> Self {
        let fingerprint = fingerprint(&vocab, &hp, lookahead_mode, seed);
        TaggerModel {
            vocab,
            hp,
            lookahead_mode,
            rng_seed: seed,
            params,
            fingerprint,
        }
    }

    pub(crate) fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// One recurrent step: consume `token_id`, producing the next hidden
    /// state and the tag distribution at this step.
    pub(crate) fn step(&self, h_prev: &Array1<S>, token_id: usize) -> StepCache<S> {
        let p = &self.params;
        let x = p.embedding.row(token_id);
        let z = (p.wz.dot(&x) + p.uz.dot(h_prev) + &p.bz).mapv(sigmoid);
        let r = (p.wr.dot(&x) + p.ur.dot(h_prev) + &p.br).mapv(sigmoid);
        let rh = &r * h_prev;
        let c = (p.wc.dot(&x) + p.uc.dot(&rh) + &p.bc).mapv(|v| v.tanh());
        let h = (Array1::ones(h_prev.len()) - &z) * h_prev + &z * &c;
        let logits = p.out_w.dot(&h) + &p.out_b;
        let probs = softmax(&logits);
        StepCache {
            token_id,
            h_prev: h_prev.clone(),
            z,
            r,
            c,
            h,
            probs,
        }
    }

    /// Full forward pass over a token-id sequence.
    pub(crate) fn forward(&self, token_ids: &[usize]) -> Vec<StepCache<S>> {
        let mut h = Array1::zeros(self.hp.hidden_dim);
        let mut caches = Vec::with_capacity(token_ids.len());
        for &id in token_ids {
            let cache = self.step(&h, id);
            h = cache.h.clone();
            caches.push(cache);
        }
        caches
    }

    /// Per-step class distributions `[p_other, p_eos]` over a token
    /// sequence, without the look-ahead shift. Mostly useful for inspecting
    /// the raw softmax outputs.
    pub fn class_distributions(&self, tokens: &[String]) -> Vec<[f64; 2]> {
        let ids: Vec<usize> = tokens.iter().map(|t| self.vocab.id(t)).collect();
        self.forward(&ids)
            .iter()
            .map(|c| {
                [
                    c.probs[0].to_f64().unwrap(),
                    c.probs[EOS_CLASS].to_f64().unwrap(),
                ]
            })
            .collect()
    }

    /// Convert to `f32` precision (the on-disk representation).
    pub fn to_f32(&self) -> TaggerModel<f32> {
        let cast2 = |a: &Array2<S>| a.mapv(|v| v.to_f32().unwrap());
        let cast1 = |a: &Array1<S>| a.mapv(|v| v.to_f32().unwrap());
        let p = &self.params;
        TaggerModel::from_parts(
            self.vocab.clone(),
            self.hp.clone(),
            self.lookahead_mode,
            self.rng_seed,
            Params {
                embedding: cast2(&p.embedding),
                wz: cast2(&p.wz),
                uz: cast2(&p.uz),
                bz: cast1(&p.bz),
                wr: cast2(&p.wr),
                ur: cast2(&p.ur),
                br: cast1(&p.br),
                wc: cast2(&p.wc),
                uc: cast2(&p.uc),
                bc: cast1(&p.bc),
                out_w: cast2(&p.out_w),
                out_b: cast1(&p.out_b),
            },
        )
    }
}

fn fingerprint(vocab: &Vocabulary, hp: &Hyperparams, lookahead: bool, seed: u64) -> u64 {
    let mut h = DefaultHasher::new();
    vocab.size().hash(&mut h);
    for t in vocab.tokens() {
        t.hash(&mut h);
    }
    hp.embed_dim.hash(&mut h);
    hp.hidden_dim.hash(&mut h);
    lookahead.hash(&mut h);
    seed.hash(&mut h);
    h.finish()
}

/// Numerically stable softmax.
pub(crate) fn softmax<S: Scalar>(logits: &Array1<S>) -> Array1<S> {
    let max = logits.iter().cloned().fold(S::neg_infinity(), S::max);
    let exps = logits.mapv(|v| (v - max).exp());
    let sum: S = exps.iter().cloned().sum();
    exps / sum
}
