//! Incremental inference over one token stream.
//!
//! In no-look-ahead mode, `consume` returns the prediction for the token
//! just consumed. In look-ahead mode, `consume` returns the prediction for
//! the previous token (the output is trained with a one-word delay) and the
//! newest token stays pending; `flush` forces the pending prediction out by
//! feeding PAD as the missing successor. Flush quality is degraded relative
//! to a real successor word, so the fusion layer prefers the timeout path
//! when it can.

use ndarray::Array1;

use crate::scalar::Scalar;

use super::{TaggerError, TaggerModel, EOS_CLASS, PAD_ID};

/// End-of-segment probability for one token position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EosPrediction {
    /// Position (0-based) of the token whose tag is predicted.
    pub token_index: usize,
    pub p_eos: f64,
}

/// Hidden state of one in-progress stream. Single-owner; cheap to clone for
/// speculative queries.
#[derive(Debug, Clone)]
pub struct TaggerState<S: Scalar> {
    hidden: Array1<S>,
    pub tokens_consumed: usize,
    /// Token index whose prediction has not been emitted yet (look-ahead
    /// mode only).
    pub pending_token: Option<usize>,
    flushed: bool,
    fingerprint: u64,
}

impl<S: Scalar> TaggerModel<S> {
    /// Fresh zero-initialized state for one stream.
    pub fn begin_stream(&self) -> TaggerState<S> {
        TaggerState {
            hidden: Array1::zeros(self.hp.hidden_dim),
            tokens_consumed: 0,
            pending_token: None,
            flushed: false,
            fingerprint: self.fingerprint(),
        }
    }

    fn check_state(&self, state: &TaggerState<S>) -> Result<(), TaggerError> {
        if state.fingerprint != self.fingerprint() || state.hidden.len() != self.hp.hidden_dim {
            return Err(TaggerError::UnknownState);
        }
        Ok(())
    }

    /// Feed one token. Returns the newly available prediction, if any.
    pub fn consume(
        &self,
        state: &mut TaggerState<S>,
        token: &str,
    ) -> Result<Option<EosPrediction>, TaggerError> {
        self.check_state(state)?;
        let id = self.vocab.id(token);
        let cache = self.step(&state.hidden, id);
        state.hidden = cache.h;
        state.tokens_consumed += 1;
        state.flushed = false;
        let p_eos = cache.probs[EOS_CLASS].to_f64().unwrap();
        if self.lookahead_mode {
            state.pending_token = Some(state.tokens_consumed - 1);
            if state.tokens_consumed == 1 {
                // The step-0 output has no delayed target; nothing to emit.
                Ok(None)
            } else {
                Ok(Some(EosPrediction {
                    token_index: state.tokens_consumed - 2,
                    p_eos,
                }))
            }
        } else {
            Ok(Some(EosPrediction {
                token_index: state.tokens_consumed - 1,
                p_eos,
            }))
        }
    }

    /// Force out the pending prediction at end of stream (look-ahead mode).
    /// Idempotent: a second flush returns nothing.
    pub fn flush(&self, state: &mut TaggerState<S>) -> Result<Option<EosPrediction>, TaggerError> {
        self.check_state(state)?;
        if !self.lookahead_mode || state.flushed {
            return Ok(None);
        }
        let Some(pending) = state.pending_token.take() else {
            return Ok(None);
        };
        let cache = self.step(&state.hidden, PAD_ID);
        state.hidden = cache.h;
        state.flushed = true;
        Ok(Some(EosPrediction {
            token_index: pending,
            p_eos: cache.probs[EOS_CLASS].to_f64().unwrap(),
        }))
    }

    /// Speculative flush on a copy of the state: what would the pending
    /// token's prediction be if the stream ended now? Does not advance the
    /// real state.
    pub fn flush_peek(&self, state: &TaggerState<S>) -> Result<Option<EosPrediction>, TaggerError> {
        let mut copy = state.clone();
        self.flush(&mut copy)
    }

    /// Predictions for a whole token sequence, one per token, in order.
    /// Equivalent to streaming every token through `consume` then `flush`.
    pub fn predict_sequence(&self, tokens: &[String]) -> Vec<EosPrediction> {
        let mut state = self.begin_stream();
        let mut out = Vec::with_capacity(tokens.len());
        for t in tokens {
            if let Some(p) = self.consume(&mut state, t).expect("fresh state") {
                out.push(p);
            }
        }
        if let Some(p) = self.flush(&mut state).expect("fresh state") {
            out.push(p);
        }
        out
    }
}
