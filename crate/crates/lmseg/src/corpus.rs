//! Training-data factory for the end-of-segment tagger.
//!
//! Raw text goes through four stages: sentence splitting, punctuation
//! filtering, spoken-form normalization, and example generation. Every
//! retained sentence yields a FULL example (all `O` tags plus a final `eos`)
//! and, unless it has a single token, a TRUNCATED counter-example (last word
//! deleted, all `O`). In look-ahead mode each sentence with a successor in
//! the same document additionally yields a LOOKAHEAD example: the first word
//! of the next sentence is appended and the `eos` tag sits one position
//! before the end.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

/// One input document: an opaque id plus free-form text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    pub text: String,
}

/// Terminal punctuation of a retained sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    Period,
    Question,
}

/// A filtered, normalized sentence: lowercase spoken-form tokens only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub terminal: Terminal,
    pub doc_id: String,
    pub index_in_doc: usize,
}

/// Per-token tag: `O` (not a segment end) or `eos`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tag {
    #[serde(rename = "O")]
    O,
    #[serde(rename = "eos")]
    Eos,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => write!(f, "O"),
            Tag::Eos => write!(f, "eos"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    Truncated,
    Lookahead,
}

/// A token sequence with aligned tags, ready for tagger training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
    pub variant: Variant,
}

impl TrainingExample {
    /// Space-joined token string, as printed in stats and fixtures.
    pub fn input_string(&self) -> String {
        self.tokens.join(" ")
    }

    /// Space-joined tag string, e.g. `"O O O eos"`.
    pub fn tag_string(&self) -> String {
        self.tags
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Why a raw sentence was rejected by the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rejection {
    BadTerminal,
    ForbiddenPunct,
    EmptyAfterNormalization,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::BadTerminal => write!(f, "bad_terminal"),
            Rejection::ForbiddenPunct => write!(f, "forbidden_punct"),
            Rejection::EmptyAfterNormalization => write!(f, "empty_after_normalization"),
        }
    }
}

/// Counters emitted by [`generate_examples`].
#[derive(Debug, Clone, Default, Serialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub sentences_kept: usize,
    pub rejected_bad_terminal: usize,
    pub rejected_forbidden_punct: usize,
    pub rejected_empty: usize,
    pub full_examples: usize,
    pub truncated_examples: usize,
    pub lookahead_examples: usize,
}

impl CorpusStats {
    fn record_rejection(&mut self, r: Rejection) {
        match r {
            Rejection::BadTerminal => self.rejected_bad_terminal += 1,
            Rejection::ForbiddenPunct => self.rejected_forbidden_punct += 1,
            Rejection::EmptyAfterNormalization => self.rejected_empty += 1,
        }
    }
}

// Words before a '.' that do not end a sentence. Single letters are treated
// as initials and handled separately.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "etc", "no", "fig", "inc", "ltd",
    "co", "mt", "approx",
];

fn is_abbreviation(word: &str) -> bool {
    let w = word.to_lowercase();
    w.len() == 1 && w.chars().all(|c| c.is_alphabetic())
        || ABBREVIATIONS.contains(&w.as_str())
}

/// Split a document into raw sentence strings.
///
/// A boundary is placed after `.`, `?` or `!` when followed by whitespace and
/// an uppercase letter or digit (or end of text), unless the preceding word
/// is a known abbreviation or a single-letter initial. Only pieces ending in
/// `.` or `?` are retained; `!`-terminated pieces and trailing fragments are
/// dropped.
pub fn split_sentences(doc: &RawDocument) -> Vec<String> {
    let chars: Vec<char> = doc.text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0usize;

    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        if c == '.' || c == '?' || c == '!' {
            // Abbreviation check only applies mid-text; a terminator at the
            // very end of the document always flushes.
            let at_end = i + 1 >= chars.len();
            if c == '.' && !at_end {
                let mut j = i;
                while j > 0 && chars[j - 1].is_alphabetic() {
                    j -= 1;
                }
                let word: String = chars[j..i].iter().collect();
                if !word.is_empty() && is_abbreviation(&word) {
                    i += 1;
                    continue;
                }
            }
            // Look ahead: end of text, or whitespace then uppercase/digit.
            let mut j = i + 1;
            let boundary = if at_end {
                true
            } else if chars[j].is_whitespace() {
                while j < chars.len() && chars[j].is_whitespace() {
                    j += 1;
                }
                j >= chars.len() || chars[j].is_uppercase() || chars[j].is_ascii_digit()
            } else {
                false
            };
            if boundary {
                let piece: String = chars[start..=i].iter().collect();
                let piece = piece.trim();
                if piece.ends_with('.') || piece.ends_with('?') {
                    out.push(piece.to_string());
                }
                start = j;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    out
}

fn is_allowed_char(c: char) -> bool {
    c.is_alphanumeric()
        || c.is_whitespace()
        || matches!(c, '.' | ',' | '?' | '\'' | '\u{2019}')
}

/// Filter one raw sentence and normalize it to spoken form.
///
/// Accepts iff the final character is `.` or `?` and every non-alphanumeric,
/// non-whitespace character is one of `. , ? '` (apostrophes survive inside
/// contractions).
pub fn filter_sentence(
    raw: &str,
    doc_id: &str,
    index_in_doc: usize,
) -> Result<Sentence, Rejection> {
    let trimmed = raw.trim();
    let terminal = match trimmed.chars().last() {
        Some('.') => Terminal::Period,
        Some('?') => Terminal::Question,
        _ => return Err(Rejection::BadTerminal),
    };
    if trimmed.chars().any(|c| !is_allowed_char(c)) {
        return Err(Rejection::ForbiddenPunct);
    }
    let tokens = normalize_spoken(trimmed);
    if tokens.is_empty() {
        return Err(Rejection::EmptyAfterNormalization);
    }
    Ok(Sentence {
        tokens,
        terminal,
        doc_id: doc_id.to_string(),
        index_in_doc,
    })
}

/// Lowercase, strip punctuation, expand integers 0-9999 to words.
///
/// Idempotent: normalizing its own output yields the same tokens. Digit
/// strings longer than four characters are kept as-is.
pub fn normalize_spoken(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let cleaned: String = s
        .chars()
        .map(|c| match c {
            '\u{2019}' => '\'',
            '.' | ',' | '?' => ' ',
            _ => c,
        })
        .collect();
    for raw_tok in cleaned.split_whitespace() {
        let tok: String = raw_tok.to_lowercase();
        let tok = tok.trim_matches('\'');
        if tok.is_empty() {
            continue;
        }
        if tok.len() <= 4 && tok.chars().all(|c| c.is_ascii_digit()) {
            let n: u32 = tok.parse().expect("checked digits");
            expand_number(n, &mut out);
        } else {
            out.push(tok.to_string());
        }
    }
    out
}

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// Spell out an integer in 0..=9999 as cardinal word tokens.
pub fn expand_number(n: u32, out: &mut Vec<String>) {
    assert!(n <= 9999, "expand_number handles 0..=9999");
    if n == 0 {
        out.push("zero".to_string());
        return;
    }
    let mut rest = n;
    if rest >= 1000 {
        out.push(ONES[(rest / 1000) as usize].to_string());
        out.push("thousand".to_string());
        rest %= 1000;
    }
    if rest >= 100 {
        out.push(ONES[(rest / 100) as usize].to_string());
        out.push("hundred".to_string());
        rest %= 100;
    }
    if rest >= 20 {
        out.push(TENS[(rest / 10) as usize].to_string());
        rest %= 10;
        if rest > 0 {
            out.push(ONES[rest as usize].to_string());
        }
    } else if rest > 0 {
        out.push(ONES[rest as usize].to_string());
    }
}

/// FULL example (tags `O...O eos`) plus, for sentences with more than one
/// token, the TRUNCATED counter-example (last word deleted, all `O`).
pub fn make_v2_examples(s: &Sentence) -> (TrainingExample, Option<TrainingExample>) {
    let n = s.tokens.len();
    let mut tags = vec![Tag::O; n];
    tags[n - 1] = Tag::Eos;
    let full = TrainingExample {
        tokens: s.tokens.clone(),
        tags,
        variant: Variant::Full,
    };
    let truncated = if n > 1 {
        Some(TrainingExample {
            tokens: s.tokens[..n - 1].to_vec(),
            tags: vec![Tag::O; n - 1],
            variant: Variant::Truncated,
        })
    } else {
        None
    };
    (full, truncated)
}

/// LOOKAHEAD example: the sentence plus the first word of its successor,
/// `eos` one position before the end. Document-final sentences yield none.
pub fn make_v3_examples(s: &Sentence, next: Option<&Sentence>) -> Vec<TrainingExample> {
    let Some(next) = next else {
        return Vec::new();
    };
    let mut tokens = s.tokens.clone();
    tokens.push(next.tokens[0].clone());
    let n = tokens.len();
    let mut tags = vec![Tag::O; n];
    tags[n - 2] = Tag::Eos;
    vec![TrainingExample {
        tokens,
        tags,
        variant: Variant::Lookahead,
    }]
}

/// Split, filter, and normalize one document into retained sentences,
/// counting rejections into `stats`.
pub fn process_document(doc: &RawDocument, stats: &mut CorpusStats) -> Vec<Sentence> {
    let mut sentences = Vec::new();
    for (idx, raw) in split_sentences(doc).iter().enumerate() {
        match filter_sentence(raw, &doc_id_of(doc), idx) {
            Ok(s) => sentences.push(s),
            Err(r) => stats.record_rejection(r),
        }
    }
    stats.sentences_kept += sentences.len();
    sentences
}

fn doc_id_of(doc: &RawDocument) -> String {
    doc.doc_id.clone()
}

/// Run the whole factory over a set of documents. Output order is
/// deterministic: documents in input order, sentences in document order,
/// FULL then TRUNCATED then LOOKAHEAD per sentence.
pub fn generate_examples(
    docs: &[RawDocument],
    lookahead: bool,
) -> (Vec<TrainingExample>, CorpusStats) {
    let mut stats = CorpusStats {
        documents: docs.len(),
        ..Default::default()
    };
    let mut examples = Vec::new();
    for doc in docs {
        let sentences = process_document(doc, &mut stats);
        for (i, s) in sentences.iter().enumerate() {
            let (full, truncated) = make_v2_examples(s);
            stats.full_examples += 1;
            examples.push(full);
            if let Some(t) = truncated {
                stats.truncated_examples += 1;
                examples.push(t);
            }
            if lookahead {
                for la in make_v3_examples(s, sentences.get(i + 1)) {
                    stats.lookahead_examples += 1;
                    examples.push(la);
                }
            }
        }
    }
    (examples, stats)
}

/// Write examples as JSON Lines.
pub fn write_examples<W: Write>(
    mut w: W,
    examples: &[TrainingExample],
) -> std::io::Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Read examples from JSON Lines, skipping blank lines.
pub fn read_examples<R: BufRead>(r: R) -> anyhow::Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: TrainingExample = serde_json::from_str(&line)
            .map_err(|e| anyhow::anyhow!("line {}: {}", lineno + 1, e))?;
        out.push(ex);
    }
    Ok(out)
}

/// Token frequency over a set of examples, for vocabulary construction.
pub fn token_frequencies(examples: &[TrainingExample]) -> BTreeMap<String, u64> {
    let mut freq = BTreeMap::new();
    for ex in examples {
        for t in &ex.tokens {
            *freq.entry(t.clone()).or_insert(0) += 1;
        }
    }
    freq
}
