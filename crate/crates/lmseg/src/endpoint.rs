//! Acoustic-side endpointing: silence-gap candidate detection over a
//! timestamped word-event stream, plus a real-time replayer for latency
//! experiments.
//!
//! Raw acoustic features are out of scope; the acoustic evidence surfaces as
//! word timings and inter-word silence. A model-based VAD could plug in
//! behind the same [`EndpointCandidate`] interface.

use std::io::BufRead;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A decoded word with start/end timestamps in milliseconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordEvent {
    pub word: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Timeout,
    HardTimeout,
    StreamEnd,
}

/// A proposed segment boundary after a token, with the silence evidence and
/// the stream time at which the proposal fires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EndpointCandidate {
    /// Boundary sits between this token and the next (or at stream end).
    pub after_token_index: usize,
    pub silence_ms: u64,
    pub fired_at_ms: u64,
    pub kind: CandidateKind,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EndpointError {
    #[error("word events out of order at index {0}")]
    UnsortedStream(usize),
    #[error("overlapping word events at index {0}")]
    OverlappingEvents(usize),
    #[error("word event at index {0} has start_ms >= end_ms")]
    InvalidEvent(usize),
}

/// Check ordering and non-overlap invariants of a word-event stream.
pub fn validate_stream(stream: &[WordEvent]) -> Result<(), EndpointError> {
    for (i, w) in stream.iter().enumerate() {
        if w.start_ms >= w.end_ms {
            return Err(EndpointError::InvalidEvent(i));
        }
        if i > 0 {
            if w.start_ms < stream[i - 1].start_ms {
                return Err(EndpointError::UnsortedStream(i));
            }
            if w.start_ms < stream[i - 1].end_ms {
                return Err(EndpointError::OverlappingEvents(i));
            }
        }
    }
    Ok(())
}

/// Scan inter-word gaps and emit boundary candidates.
///
/// A TIMEOUT candidate fires after token `i` iff the gap to token `i+1` is
/// at least `silence_threshold_ms`, at time `end_ms(i) + threshold`. A gap of
/// at least `hard_timeout_ms` additionally yields a HARD_TIMEOUT candidate at
/// `end_ms(i) + hard_timeout_ms` (the fusion layer's veto override). One
/// STREAM_END candidate fires after the final token. Leading silence never
/// produces a candidate.
pub fn detect_candidates(
    stream: &[WordEvent],
    silence_threshold_ms: u64,
    hard_timeout_ms: u64,
) -> Result<Vec<EndpointCandidate>, EndpointError> {
    assert!(
        silence_threshold_ms > 0 && silence_threshold_ms <= hard_timeout_ms,
        "0 < silence_threshold_ms <= hard_timeout_ms"
    );
    validate_stream(stream)?;
    let mut out = Vec::new();
    for i in 0..stream.len().saturating_sub(1) {
        let gap = stream[i + 1].start_ms - stream[i].end_ms;
        if gap >= silence_threshold_ms {
            out.push(EndpointCandidate {
                after_token_index: i,
                silence_ms: gap,
                fired_at_ms: stream[i].end_ms + silence_threshold_ms,
                kind: CandidateKind::Timeout,
            });
        }
        if gap >= hard_timeout_ms {
            out.push(EndpointCandidate {
                after_token_index: i,
                silence_ms: gap,
                fired_at_ms: stream[i].end_ms + hard_timeout_ms,
                kind: CandidateKind::HardTimeout,
            });
        }
    }
    if let Some(last) = stream.last() {
        out.push(EndpointCandidate {
            after_token_index: stream.len() - 1,
            silence_ms: 0,
            fired_at_ms: last.end_ms,
            kind: CandidateKind::StreamEnd,
        });
    }
    Ok(out)
}

/// Replay a word-event stream in (scaled) real time.
///
/// Delivers events in order with inter-event delays divided by
/// `speed_factor`; `f64::INFINITY` degenerates to instantaneous iteration.
pub fn replay(
    stream: Vec<WordEvent>,
    speed_factor: f64,
) -> impl Iterator<Item = WordEvent> {
    assert!(speed_factor > 0.0, "speed_factor must be positive");
    let origin = Instant::now();
    stream.into_iter().map(move |event| {
        if speed_factor.is_finite() {
            let due = Duration::from_secs_f64(event.end_ms as f64 / 1000.0 / speed_factor);
            let elapsed = origin.elapsed();
            if due > elapsed {
                std::thread::sleep(due - elapsed);
            }
        }
        event
    })
}

/// Parse a word-event file: JSON Lines `{"word","start_ms","end_ms"}` or CSV
/// with a `word,start_ms,end_ms` header.
pub fn read_word_events<R: BufRead>(r: R, csv_format: bool) -> anyhow::Result<Vec<WordEvent>> {
    let mut out = Vec::new();
    if csv_format {
        let mut rdr = csv::Reader::from_reader(r);
        for rec in rdr.deserialize() {
            let ev: WordEvent = rec?;
            out.push(ev);
        }
    } else {
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ev: WordEvent = serde_json::from_str(&line)
                .map_err(|e| anyhow::anyhow!("line {}: {}", lineno + 1, e))?;
            out.push(ev);
        }
    }
    validate_stream(&out).map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(word: &str, start: u64, end: u64) -> WordEvent {
        WordEvent {
            word: word.into(),
            start_ms: start,
            end_ms: end,
        }
    }

    #[test]
    fn timeout_fires_on_long_gap() {
        let stream = vec![ev("a", 0, 300), ev("b", 900, 1200)];
        let cands = detect_candidates(&stream, 500, 2000).unwrap();
        assert_eq!(cands.len(), 2);
        assert_eq!(cands[0].kind, CandidateKind::Timeout);
        assert_eq!(cands[0].after_token_index, 0);
        assert_eq!(cands[0].silence_ms, 600);
        assert_eq!(cands[0].fired_at_ms, 800);
        assert_eq!(cands[1].kind, CandidateKind::StreamEnd);
    }

    #[test]
    fn no_timeout_below_threshold() {
        let stream = vec![ev("a", 0, 300), ev("b", 600, 900)];
        let cands = detect_candidates(&stream, 500, 2000).unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].kind, CandidateKind::StreamEnd);
        assert_eq!(cands[0].after_token_index, 1);
    }

    #[test]
    fn hard_timeout_on_very_long_gap() {
        let stream = vec![ev("a", 0, 300), ev("b", 3000, 3300)];
        let cands = detect_candidates(&stream, 500, 2000).unwrap();
        assert_eq!(cands.len(), 3);
        assert_eq!(cands[0].kind, CandidateKind::Timeout);
        assert_eq!(cands[0].fired_at_ms, 800);
        assert_eq!(cands[1].kind, CandidateKind::HardTimeout);
        assert_eq!(cands[1].fired_at_ms, 2300);
    }

    #[test]
    fn scripted_gaps_match_brute_force() {
        // 10 words, scripted gaps.
        let gaps = [100u64, 600, 200, 700, 50, 500, 499, 501, 0];
        let mut stream = Vec::new();
        let mut t = 0u64;
        for (i, g) in std::iter::once(&0u64).chain(gaps.iter()).enumerate() {
            t += g;
            stream.push(ev(&format!("w{i}"), t, t + 250));
            t += 250;
        }
        let cands = detect_candidates(&stream, 500, 2000).unwrap();
        let got: Vec<usize> = cands
            .iter()
            .filter(|c| c.kind == CandidateKind::Timeout)
            .map(|c| c.after_token_index)
            .collect();
        let want: Vec<usize> = gaps
            .iter()
            .enumerate()
            .filter(|(_, g)| **g >= 500)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn errors_on_bad_streams() {
        let unsorted = vec![ev("a", 500, 600), ev("b", 0, 100)];
        assert_eq!(
            detect_candidates(&unsorted, 500, 2000),
            Err(EndpointError::UnsortedStream(1))
        );
        let overlapping = vec![ev("a", 0, 600), ev("b", 300, 900)];
        assert_eq!(
            detect_candidates(&overlapping, 500, 2000),
            Err(EndpointError::OverlappingEvents(1))
        );
    }

    #[test]
    fn fired_at_non_decreasing() {
        let stream = vec![
            ev("a", 0, 300),
            ev("b", 3000, 3300),
            ev("c", 3900, 4100),
            ev("d", 4200, 4400),
        ];
        let cands = detect_candidates(&stream, 500, 2000).unwrap();
        for pair in cands.windows(2) {
            assert!(pair[0].fired_at_ms <= pair[1].fired_at_ms);
        }
    }

    #[test]
    fn replay_instantaneous_at_infinite_speed() {
        let stream = vec![ev("a", 0, 300), ev("b", 900, 1200), ev("c", 1300, 1500)];
        let got: Vec<WordEvent> = replay(stream.clone(), f64::INFINITY).collect();
        assert_eq!(got, stream);
    }

    #[test]
    fn replay_empty_completes() {
        assert_eq!(replay(Vec::new(), 1.0).count(), 0);
    }

    #[test]
    fn replay_paces_delivery() {
        // Delivery within +-20ms of scripted times, at 10x to keep it quick.
        let stream = vec![ev("a", 0, 50), ev("b", 300, 400), ev("c", 900, 1000)];
        let start = Instant::now();
        let mut arrivals = Vec::new();
        for ev in replay(stream.clone(), 10.0) {
            arrivals.push((ev.end_ms, start.elapsed().as_millis() as i64));
        }
        for (end_ms, arrived) in arrivals {
            let scripted = end_ms as i64 / 10;
            assert!(
                (arrived - scripted).abs() <= 20,
                "word ending {end_ms}ms arrived at {arrived}ms (scripted {scripted}ms)"
            );
        }
    }

    #[test]
    fn parse_csv_and_jsonl() {
        let csv_data = "word,start_ms,end_ms\nhello,0,300\nworld,400,700\n";
        let got = read_word_events(csv_data.as_bytes(), true).unwrap();
        assert_eq!(got, vec![ev("hello", 0, 300), ev("world", 400, 700)]);

        let jsonl = "{\"word\":\"hello\",\"start_ms\":0,\"end_ms\":300}\n\
                     {\"word\":\"world\",\"start_ms\":400,\"end_ms\":700}\n";
        let got = read_word_events(jsonl.as_bytes(), false).unwrap();
        assert_eq!(got, vec![ev("hello", 0, 300), ev("world", 400, 700)]);
    }
}
