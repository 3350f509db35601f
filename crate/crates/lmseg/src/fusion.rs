//! Hybrid segmentation: silence-timeout candidates gated by the tagger.
//!
//! Policies:
//!
//! - V1: every TIMEOUT candidate becomes a boundary.
//! - V2: a TIMEOUT candidate becomes a boundary iff the tagger's p_eos for
//!   the boundary token is at least the threshold; the probability used is
//!   the one emitted when the token was consumed (the recurrent state is
//!   causal, so recomputing at candidate time would not change it).
//! - V3: at a TIMEOUT candidate the segmenter waits up to
//!   `lookahead_wait_ms` for the next word; if it arrives, the delayed
//!   look-ahead probability is used, otherwise a speculative flush (PAD as
//!   successor) supplies it.
//!
//! The tagger can only veto candidates, never create boundaries. A gap of
//! at least `hard_timeout_ms` always segments, whatever the tagger says:
//! unbounded segments are unacceptable in streaming recognition. Stream end
//! always emits the final segment.

use serde::Serialize;
use thiserror::Error;

use crate::endpoint::{self, CandidateKind, EndpointCandidate, EndpointError, WordEvent};
use crate::scalar::Scalar;
use crate::tagger::{TaggerModel, TaggerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    V1,
    V2,
    V3,
}

impl std::str::FromStr for PolicyMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "v1" => Ok(PolicyMode::V1),
            "v2" => Ok(PolicyMode::V2),
            "v3" => Ok(PolicyMode::V3),
            other => Err(format!("unknown mode '{other}' (expected v1, v2 or v3)")),
        }
    }
}

/// Segmentation policy configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub mode: PolicyMode,
    pub silence_threshold_ms: u64,
    pub hard_timeout_ms: u64,
    /// Boundary acceptance threshold on p_eos; ties accept (>=).
    pub lm_threshold: f64,
    /// V3 only. Defaults to `hard_timeout_ms - silence_threshold_ms`
    /// (wait as long as the hard cap allows).
    pub lookahead_wait_ms: Option<u64>,
}

impl Policy {
    pub fn new(mode: PolicyMode) -> Self {
        Policy {
            mode,
            silence_threshold_ms: 500,
            hard_timeout_ms: 2000,
            lm_threshold: 0.5,
            lookahead_wait_ms: None,
        }
    }

    pub fn effective_lookahead_wait(&self) -> u64 {
        self.lookahead_wait_ms
            .unwrap_or(self.hard_timeout_ms - self.silence_threshold_ms)
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if self.silence_threshold_ms == 0 || self.silence_threshold_ms > self.hard_timeout_ms {
            return Err(FusionError::InvalidPolicy(
                "require 0 < silence_threshold_ms <= hard_timeout_ms".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.lm_threshold) {
            return Err(FusionError::InvalidPolicy(
                "lm_threshold must be in [0, 1]".into(),
            ));
        }
        if self.effective_lookahead_wait() > self.hard_timeout_ms - self.silence_threshold_ms {
            return Err(FusionError::InvalidPolicy(
                "lookahead_wait_ms must not exceed hard_timeout_ms - silence_threshold_ms".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryDecision {
    VadOnly,
    LmConfirmed,
    HardTimeout,
    StreamEnd,
}

/// A contiguous span of word events, with how and when its end was decided.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub tokens: Vec<WordEvent>,
    /// Global index of the last token in this segment.
    pub boundary_index: usize,
    pub decision: BoundaryDecision,
    pub p_eos_at_boundary: Option<f64>,
    /// Decision time minus the end of the last token.
    pub decision_latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Boundary,
    Vetoed,
    AlreadySegmented,
}

/// One trace entry per endpoint candidate examined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub candidate: EndpointCandidate,
    pub p_eos: Option<f64>,
    pub verdict: Verdict,
    pub decision: Option<BoundaryDecision>,
    pub decided_at_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmenterTrace {
    pub entries: Vec<TraceEntry>,
}

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("policy mode requires a tagger model (pass --model)")]
    ModelRequired,
    #[error("model look-ahead mode does not match the policy (v2 needs a no-look-ahead model, v3 a look-ahead model)")]
    ModelModeMismatch,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error("tagger error: {0}")]
    Tagger(#[from] crate::tagger::TaggerError),
}

/// Incremental tagger bookkeeping for one stream: consumes word tokens in
/// order and records the probability available for each token index.
struct LmGate<'a, S: Scalar> {
    model: &'a TaggerModel<S>,
    state: TaggerState<S>,
    consumed: usize,
    /// p_eos by token index, as of when it became available.
    p_by_index: Vec<Option<f64>>,
}

impl<'a, S: Scalar> LmGate<'a, S> {
    fn new(model: &'a TaggerModel<S>, stream_len: usize) -> Self {
        LmGate {
            model,
            state: model.begin_stream(),
            consumed: 0,
            p_by_index: vec![None; stream_len],
        }
    }

    fn consume_until(&mut self, index: usize, stream: &[WordEvent]) -> Result<(), FusionError> {
        while self.consumed <= index {
            let word = &stream[self.consumed].word;
            if let Some(pred) = self.model.consume(&mut self.state, word)? {
                self.p_by_index[pred.token_index] = Some(pred.p_eos);
            }
            self.consumed += 1;
        }
        Ok(())
    }

    fn flush_peek(&self) -> Result<Option<f64>, FusionError> {
        Ok(self.model.flush_peek(&self.state)?.map(|p| p.p_eos))
    }
}

/// Run one policy over a word-event stream.
pub fn segment<S: Scalar>(
    stream: &[WordEvent],
    policy: &Policy,
    model: Option<&TaggerModel<S>>,
) -> Result<(Vec<Segment>, SegmenterTrace), FusionError> {
    policy.validate()?;
    let model = match policy.mode {
        PolicyMode::V1 => None,
        PolicyMode::V2 | PolicyMode::V3 => {
            let m = model.ok_or(FusionError::ModelRequired)?;
            let want_lookahead = policy.mode == PolicyMode::V3;
            if m.lookahead_mode != want_lookahead {
                return Err(FusionError::ModelModeMismatch);
            }
            Some(m)
        }
    };

    let candidates = endpoint::detect_candidates(
        stream,
        policy.silence_threshold_ms,
        policy.hard_timeout_ms,
    )?;

    let mut gate = model.map(|m| LmGate::new(m, stream.len()));
    let mut segments: Vec<Segment> = Vec::new();
    let mut trace = SegmenterTrace::default();
    let mut seg_start = 0usize;
    // p examined at the TIMEOUT candidate, reused by a later HARD_TIMEOUT
    // override at the same gap.
    let mut examined_p: Vec<Option<f64>> = vec![None; stream.len()];

    let emit = |segments: &mut Vec<Segment>,
                    seg_start: &mut usize,
                    idx: usize,
                    decision: BoundaryDecision,
                    p: Option<f64>,
                    latency: u64| {
        segments.push(Segment {
            tokens: stream[*seg_start..=idx].to_vec(),
            boundary_index: idx,
            decision,
            p_eos_at_boundary: p,
            decision_latency_ms: latency,
        });
        *seg_start = idx + 1;
    };

    for cand in candidates {
        let idx = cand.after_token_index;
        let already = idx < seg_start;
        match cand.kind {
            CandidateKind::Timeout => {
                if already {
                    // Cannot happen (one TIMEOUT per gap), kept for trace
                    // completeness.
                    trace.entries.push(TraceEntry {
                        candidate: cand.clone(),
                        p_eos: None,
                        verdict: Verdict::AlreadySegmented,
                        decision: None,
                        decided_at_ms: cand.fired_at_ms,
                    });
                    continue;
                }
                match policy.mode {
                    PolicyMode::V1 => {
                        emit(
                            &mut segments,
                            &mut seg_start,
                            idx,
                            BoundaryDecision::VadOnly,
                            None,
                            policy.silence_threshold_ms,
                        );
                        trace.entries.push(TraceEntry {
                            candidate: cand,
                            p_eos: None,
                            verdict: Verdict::Boundary,
                            decision: Some(BoundaryDecision::VadOnly),
                            decided_at_ms: stream[idx].end_ms + policy.silence_threshold_ms,
                        });
                    }
                    PolicyMode::V2 => {
                        let gate = gate.as_mut().expect("model checked");
                        gate.consume_until(idx, stream)?;
                        let p = gate.p_by_index[idx].expect("consumed token has p");
                        examined_p[idx] = Some(p);
                        let accept = p >= policy.lm_threshold;
                        let decided_at = cand.fired_at_ms;
                        if accept {
                            emit(
                                &mut segments,
                                &mut seg_start,
                                idx,
                                BoundaryDecision::LmConfirmed,
                                Some(p),
                                policy.silence_threshold_ms,
                            );
                        }
                        trace.entries.push(TraceEntry {
                            candidate: cand,
                            p_eos: Some(p),
                            verdict: if accept { Verdict::Boundary } else { Verdict::Vetoed },
                            decision: accept.then_some(BoundaryDecision::LmConfirmed),
                            decided_at_ms: decided_at,
                        });
                    }
                    PolicyMode::V3 => {
                        let gate = gate.as_mut().expect("model checked");
                        gate.consume_until(idx, stream)?;
                        let wait = policy.effective_lookahead_wait();
                        let deadline = cand.fired_at_ms + wait;
                        // The next word exists (TIMEOUT implies a gap) and
                        // becomes available when its decoding ends.
                        let next_available = stream[idx + 1].end_ms;
                        let (p, decided_at, latency) = if next_available <= deadline {
                            gate.consume_until(idx + 1, stream)?;
                            let p = gate.p_by_index[idx].expect("look-ahead p");
                            (p, next_available, next_available - stream[idx].end_ms)
                        } else {
                            let p = gate.flush_peek()?.expect("pending token");
                            (p, deadline, policy.silence_threshold_ms + wait)
                        };
                        examined_p[idx] = Some(p);
                        let accept = p >= policy.lm_threshold;
                        if accept {
                            emit(
                                &mut segments,
                                &mut seg_start,
                                idx,
                                BoundaryDecision::LmConfirmed,
                                Some(p),
                                latency,
                            );
                        }
                        trace.entries.push(TraceEntry {
                            candidate: cand,
                            p_eos: Some(p),
                            verdict: if accept { Verdict::Boundary } else { Verdict::Vetoed },
                            decision: accept.then_some(BoundaryDecision::LmConfirmed),
                            decided_at_ms: decided_at,
                        });
                    }
                }
            }
            CandidateKind::HardTimeout => {
                if already {
                    trace.entries.push(TraceEntry {
                        candidate: cand,
                        p_eos: None,
                        verdict: Verdict::AlreadySegmented,
                        decision: None,
                        decided_at_ms: 0,
                    });
                    continue;
                }
                // The tagger vetoed at this gap; the hard cap overrides.
                let p = examined_p[idx];
                emit(
                    &mut segments,
                    &mut seg_start,
                    idx,
                    BoundaryDecision::HardTimeout,
                    p,
                    policy.hard_timeout_ms,
                );
                trace.entries.push(TraceEntry {
                    candidate: cand.clone(),
                    p_eos: p,
                    verdict: Verdict::Boundary,
                    decision: Some(BoundaryDecision::HardTimeout),
                    decided_at_ms: cand.fired_at_ms,
                });
            }
            CandidateKind::StreamEnd => {
                if already {
                    trace.entries.push(TraceEntry {
                        candidate: cand,
                        p_eos: None,
                        verdict: Verdict::AlreadySegmented,
                        decision: None,
                        decided_at_ms: 0,
                    });
                    continue;
                }
                emit(
                    &mut segments,
                    &mut seg_start,
                    idx,
                    BoundaryDecision::StreamEnd,
                    None,
                    0,
                );
                trace.entries.push(TraceEntry {
                    candidate: cand.clone(),
                    p_eos: None,
                    verdict: Verdict::Boundary,
                    decision: Some(BoundaryDecision::StreamEnd),
                    decided_at_ms: cand.fired_at_ms,
                });
            }
        }
    }

    Ok((segments, trace))
}

/// Run several policies over identical copies of one stream.
pub fn compare_policies<S: Scalar>(
    stream: &[WordEvent],
    policies: &[Policy],
    model_v2: Option<&TaggerModel<S>>,
    model_v3: Option<&TaggerModel<S>>,
) -> Result<Vec<(PolicyMode, Vec<Segment>)>, FusionError> {
    let mut out = Vec::new();
    for policy in policies {
        let model = match policy.mode {
            PolicyMode::V1 => None,
            PolicyMode::V2 => model_v2,
            PolicyMode::V3 => model_v3,
        };
        let (segments, _) = segment(stream, policy, model)?;
        out.push((policy.mode, segments));
    }
    Ok(out)
}

/// Internal boundary indices of a segmentation (stream-end excluded).
pub fn boundary_indices(segments: &[Segment]) -> Vec<usize> {
    if segments.is_empty() {
        return Vec::new();
    }
    segments[..segments.len() - 1]
        .iter()
        .map(|s| s.boundary_index)
        .collect()
}
