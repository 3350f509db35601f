//! Shared generators for the integration suites: a small sentence grammar
//! with genuinely ambiguous segment ends, plus timed word-stream synthesis.
#![allow(dead_code)] // not every suite uses every generator

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use lmseg::corpus::{generate_examples, RawDocument, TrainingExample};
use lmseg::endpoint::WordEvent;

const CITIES: &[&str] = &["seattle", "boston", "paris", "london"];
const COUNTS: &[&str] = &["five", "ten", "twenty"];

/// One random sentence. Several templates have an optional trailing word, so
/// a left-context-only model cannot always tell whether the sentence is over;
/// the successor word disambiguates.
pub fn random_sentence(rng: &mut ChaCha8Rng) -> Vec<String> {
    let template = rng.gen_range(0..5u32);
    let words: Vec<&str> = match template {
        0 => {
            let mut w = vec!["wake", "me", "up", "at", "noon"];
            if rng.gen_bool(0.5) {
                w.push("tomorrow");
            }
            w
        }
        1 => {
            let mut w = vec!["what", "is", "the", "weather", "in"];
            w.push(CITIES[rng.gen_range(0..CITIES.len())]);
            w
        }
        2 => {
            let mut w = vec!["please", "play", "some", "music"];
            if rng.gen_bool(0.5) {
                w.push("now");
            }
            w
        }
        3 => {
            let mut w = vec!["set", "a", "timer", "for"];
            w.push(COUNTS[rng.gen_range(0..COUNTS.len())]);
            w.push("minutes");
            w
        }
        _ => vec!["i'm", "new", "in", "town"],
    };
    words.into_iter().map(|w| w.to_string()).collect()
}

/// Written form of a sentence: leading capital, terminal period. The
/// splitter needs the capital to recognize the next sentence start.
fn written_form(words: &[String]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        let upper = first.to_uppercase();
        s.replace_range(..1, &upper);
    }
    format!("{s}.")
}

/// One random sentence with no optional trailing word: every full sequence
/// has exactly one consistent label at each position, so a tagger can in
/// principle fit the corpus perfectly.
pub fn unambiguous_sentence(rng: &mut ChaCha8Rng) -> Vec<String> {
    let template = rng.gen_range(0..5u32);
    let words: Vec<&str> = match template {
        0 => vec!["wake", "me", "up", "at", "noon", "tomorrow"],
        1 => {
            let mut w = vec!["what", "is", "the", "weather", "in"];
            w.push(CITIES[rng.gen_range(0..CITIES.len())]);
            w
        }
        2 => {
            let mut w = vec!["how", "is", "the", "weather", "in"];
            w.push(CITIES[rng.gen_range(0..CITIES.len())]);
            w
        }
        3 => {
            let mut w = vec!["set", "a", "timer", "for"];
            w.push(COUNTS[rng.gen_range(0..COUNTS.len())]);
            w.push("minutes");
            w
        }
        _ => vec!["i'm", "new", "in", "town"],
    };
    words.into_iter().map(|w| w.to_string()).collect()
}

/// Documents built only from unambiguous sentences.
pub fn unambiguous_documents(rng: &mut ChaCha8Rng, sentences: usize) -> Vec<RawDocument> {
    let text: String = (0..sentences)
        .map(|_| written_form(&unambiguous_sentence(rng)))
        .collect::<Vec<_>>()
        .join(" ");
    vec![RawDocument {
        doc_id: "unambiguous".into(),
        text,
    }]
}

/// Raw-text documents (terminal periods restored) for the training corpus,
/// feedable to the data factory.
pub fn random_documents(rng: &mut ChaCha8Rng, sentences: usize) -> Vec<RawDocument> {
    // A handful of sentences per document so look-ahead pairs exist.
    let mut docs = Vec::new();
    let mut remaining = sentences;
    let mut id = 0usize;
    while remaining > 0 {
        let n = rng.gen_range(3..=6usize).min(remaining);
        let text: String = (0..n)
            .map(|_| written_form(&random_sentence(rng)))
            .collect::<Vec<_>>()
            .join(" ");
        docs.push(RawDocument {
            doc_id: format!("doc{id}"),
            text,
        });
        id += 1;
        remaining -= n;
    }
    docs
}

/// Training examples produced by the data factory over a random corpus.
pub fn random_examples(seed: u64, sentences: usize, lookahead: bool) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs = random_documents(&mut rng, sentences);
    let (examples, _) = generate_examples(&docs, lookahead);
    examples
}

/// A timed benchmark stream plus its reference (internal) boundaries.
#[derive(Debug, Clone)]
pub struct BenchStream {
    pub words: Vec<WordEvent>,
    pub boundaries: Vec<usize>,
}

pub const WORD_MS: u64 = 250;
pub const GAP_MS: u64 = 50;
pub const PAUSE_MS: u64 = 600;

/// Build one stream of `n_sentences` sentences. A pause of `PAUSE_MS` is
/// injected at true sentence ends with probability 0.9 and at one random
/// mid-sentence position per sentence with probability 0.3; all other gaps
/// are `GAP_MS`.
pub fn bench_stream(rng: &mut ChaCha8Rng, n_sentences: usize) -> BenchStream {
    let mut words = Vec::new();
    let mut boundaries = Vec::new();
    let mut t = 0u64;
    for s in 0..n_sentences {
        let sentence = random_sentence(rng);
        let pause_inside = if sentence.len() > 2 && rng.gen_bool(0.3) {
            // Position k pauses after token k (never the last token).
            Some(rng.gen_range(0..sentence.len() - 1))
        } else {
            None
        };
        for (i, w) in sentence.iter().enumerate() {
            words.push(WordEvent {
                word: w.clone(),
                start_ms: t,
                end_ms: t + WORD_MS,
            });
            t += WORD_MS;
            let last_in_sentence = i + 1 == sentence.len();
            let gap = if last_in_sentence {
                if rng.gen_bool(0.9) {
                    PAUSE_MS
                } else {
                    GAP_MS
                }
            } else if pause_inside == Some(i) {
                PAUSE_MS
            } else {
                GAP_MS
            };
            t += gap;
        }
        if s + 1 < n_sentences {
            boundaries.push(words.len() - 1);
        }
    }
    BenchStream { words, boundaries }
}

/// A fully random word stream (irregular timings) for law/property checks.
pub fn random_stream(rng: &mut ChaCha8Rng) -> Vec<WordEvent> {
    let n = rng.gen_range(1..=20usize);
    let vocab = [
        "wake", "me", "up", "at", "noon", "tomorrow", "what", "is", "the", "weather", "in",
        "seattle", "please", "play", "some", "music", "now", "town",
    ];
    let mut t = rng.gen_range(0..500u64);
    let mut words = Vec::with_capacity(n);
    for _ in 0..n {
        let dur = rng.gen_range(50..=400u64);
        words.push(WordEvent {
            word: vocab[rng.gen_range(0..vocab.len())].to_string(),
            start_ms: t,
            end_ms: t + dur,
        });
        t += dur + rng.gen_range(0..=3000u64);
    }
    words
}
