use std::collections::HashMap;

use crate::corpus::TrainingExample;

use super::TaggerError;

pub const PAD_ID: usize = 0;
pub const OOV_ID: usize = 1;

/// Token-to-id map with reserved PAD (0) and OOV (1) slots. Ids are dense;
/// unseen tokens map to OOV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    tokens: Vec<String>, // ids 2.. in order
    max_size: usize,
    min_frequency: u64,
}

impl Vocabulary {
    /// Total size including PAD and OOV.
    pub fn size(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn min_frequency(&self) -> u64 {
        self.min_frequency
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(OOV_ID)
    }

    /// Non-reserved tokens, in id order (id 2 first).
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Rebuild from a token list in id order (deserialization path).
    pub fn from_tokens(tokens: Vec<String>, max_size: usize, min_frequency: u64) -> Self {
        let token_to_id = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + 2))
            .collect();
        Vocabulary {
            token_to_id,
            tokens,
            max_size,
            min_frequency,
        }
    }
}

/// Build a vocabulary from training examples: most-frequent tokens first,
/// ties broken lexicographically, tokens below `min_frequency` excluded,
/// capped at `max_size` total ids (including PAD and OOV).
pub fn build_vocab(
    examples: &[TrainingExample],
    max_size: usize,
    min_frequency: u64,
) -> Result<Vocabulary, TaggerError> {
    if examples.is_empty() {
        return Err(TaggerError::EmptyCorpus);
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for ex in examples {
        for t in &ex.tokens {
            *freq.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = freq
        .into_iter()
        .filter(|(_, f)| *f >= min_frequency)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size.saturating_sub(2));
    let tokens: Vec<String> = ranked.into_iter().map(|(t, _)| t.to_string()).collect();
    Ok(Vocabulary::from_tokens(tokens, max_size, min_frequency))
}
