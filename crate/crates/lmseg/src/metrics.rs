//! Segmentation scoring: boundary extraction, precision/recall/F0.5, gain
//! reporting, and edit-distance alignment for hypothesis/reference token
//! mismatches.
//!
//! Boundary matching is exact inter-token index equality. The stream-end
//! boundary is excluded from scoring: hypothesis and reference always agree
//! there, so counting it would inflate every score uniformly.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

/// Internal segment boundaries of one stream: the index `i` means a boundary
/// between token `i` and token `i+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySet {
    pub indices: BTreeSet<usize>,
    pub total_tokens: usize,
}

impl BoundarySet {
    pub fn new(indices: impl IntoIterator<Item = usize>, total_tokens: usize) -> Self {
        let indices: BTreeSet<usize> = indices.into_iter().collect();
        assert!(
            indices.iter().all(|&i| i + 1 < total_tokens),
            "boundary indices must be internal (less than total_tokens - 1)"
        );
        BoundarySet {
            indices,
            total_tokens,
        }
    }
}

/// Precision, recall, and F-beta (beta = 0.5) over matched boundaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentationReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
    pub beta: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("hypothesis tokens do not match reference tokens at position {0}")]
    TokenMismatch(usize),
    #[error("hypothesis has {hyp} tokens but reference has {reference}")]
    LengthMismatch { hyp: usize, reference: usize },
    #[error("baseline F-score is zero; relative gain undefined")]
    ZeroBaseline,
}

/// Extract the internal boundary set from segments given as token lists.
///
/// The concatenated segment tokens must equal `reference_tokens` exactly;
/// otherwise run [`align_tokens`] first and project.
pub fn boundaries_from_segments(
    segments: &[Vec<String>],
    reference_tokens: &[String],
) -> Result<BoundarySet, MetricsError> {
    let mut pos = 0usize;
    let mut indices = BTreeSet::new();
    for (si, seg) in segments.iter().enumerate() {
        for tok in seg {
            if pos >= reference_tokens.len() || reference_tokens[pos] != *tok {
                return Err(MetricsError::TokenMismatch(pos));
            }
            pos += 1;
        }
        if si + 1 < segments.len() {
            indices.insert(pos - 1);
        }
    }
    if pos != reference_tokens.len() {
        return Err(MetricsError::LengthMismatch {
            hyp: pos,
            reference: reference_tokens.len(),
        });
    }
    Ok(BoundarySet {
        indices,
        total_tokens: reference_tokens.len(),
    })
}

/// F-beta with beta = 0.5: precision weighted twice as heavily as recall.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

/// Score a hypothesis boundary set against a reference.
///
/// Precision and recall default to 1.0 when their denominator is zero (no
/// predicted / no reference boundaries).
pub fn score(hyp: &BoundarySet, reference: &BoundarySet) -> Result<SegmentationReport, MetricsError> {
    if hyp.total_tokens != reference.total_tokens {
        return Err(MetricsError::LengthMismatch {
            hyp: hyp.total_tokens,
            reference: reference.total_tokens,
        });
    }
    let tp = hyp.indices.intersection(&reference.indices).count();
    let fp = hyp.indices.len() - tp;
    let fn_ = reference.indices.len() - tp;
    let precision = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    Ok(SegmentationReport {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision,
        recall,
        f_beta: f_beta(precision, recall, 0.5),
        beta: 0.5,
    })
}

/// Relative gain of `f_new` over `f_base`, in percent.
pub fn relative_gain(f_new: f64, f_base: f64) -> Result<f64, MetricsError> {
    if f_base <= 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(100.0 * (f_new - f_base) / f_base)
}

/// One step of a token alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignOp {
    /// hyp[i] == ref[j]
    Match,
    /// hyp[i] aligned to ref[j], tokens differ
    Substitution,
    /// ref[j] has no hypothesis token
    Deletion,
    /// hyp[i] has no reference token
    Insertion,
}

/// Minimum-edit-distance alignment between hypothesis and reference tokens.
#[derive(Debug, Clone)]
pub struct TokenAlignment {
    pub distance: usize,
    pub ops: Vec<AlignOp>,
    /// For each hypothesis position, the reference position it aligns to
    /// (None for insertions).
    pub hyp_to_ref: Vec<Option<usize>>,
    pub ref_len: usize,
}

/// Align two token sequences with unit substitution/insertion/deletion costs.
///
/// Ties are broken deterministically, preferring match > substitution >
/// deletion > insertion, applied left to right.
pub fn align_tokens(hyp: &[String], reference: &[String]) -> TokenAlignment {
    let m = hyp.len();
    let n = reference.len();
    // dp[i][j] = cost of aligning hyp[i..] with reference[j..].
    let mut dp = vec![vec![0usize; n + 1]; m + 1];
    for i in (0..=m).rev() {
        for j in (0..=n).rev() {
            dp[i][j] = if i == m {
                n - j
            } else if j == n {
                m - i
            } else {
                let sub = dp[i + 1][j + 1] + usize::from(hyp[i] != reference[j]);
                let del = dp[i][j + 1] + 1;
                let ins = dp[i + 1][j] + 1;
                sub.min(del).min(ins)
            };
        }
    }
    // Forward walk with the stated tie-break.
    let mut ops = Vec::new();
    let mut hyp_to_ref = vec![None; m];
    let (mut i, mut j) = (0usize, 0usize);
    while i < m || j < n {
        let cost = dp[i][j];
        if i < m && j < n && hyp[i] == reference[j] && dp[i + 1][j + 1] == cost {
            ops.push(AlignOp::Match);
            hyp_to_ref[i] = Some(j);
            i += 1;
            j += 1;
        } else if i < m && j < n && dp[i + 1][j + 1] + 1 == cost {
            ops.push(AlignOp::Substitution);
            hyp_to_ref[i] = Some(j);
            i += 1;
            j += 1;
        } else if j < n && dp[i][j + 1] + 1 == cost {
            ops.push(AlignOp::Deletion);
            j += 1;
        } else {
            ops.push(AlignOp::Insertion);
            i += 1;
        }
    }
    TokenAlignment {
        distance: dp[0][0],
        ops,
        hyp_to_ref,
        ref_len: n,
    }
}

impl TokenAlignment {
    /// Project hypothesis boundary indices onto reference positions.
    ///
    /// A boundary after hypothesis token `i` lands after the last reference
    /// token aligned at or before `i`. Boundaries before any aligned token,
    /// or landing at the reference stream end, are dropped.
    pub fn project_boundaries(&self, hyp_boundaries: &BoundarySet) -> BoundarySet {
        let mut indices = BTreeSet::new();
        for &b in &hyp_boundaries.indices {
            let mapped = (0..=b.min(self.hyp_to_ref.len().saturating_sub(1)))
                .rev()
                .find_map(|i| self.hyp_to_ref[i]);
            if let Some(r) = mapped {
                if r + 1 < self.ref_len {
                    indices.insert(r);
                }
            }
        }
        BoundarySet {
            indices,
            total_tokens: self.ref_len,
        }
    }
}
