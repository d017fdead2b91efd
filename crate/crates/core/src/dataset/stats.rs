use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::sample::GrexSample;
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordFrequency {
    pub word: String,
    pub count: usize,
    /// `count / total tokens`
    pub frequency: f64,
}

/// Word histogram over expressions, most frequent first (ties broken
/// alphabetically).
pub fn vocab_stats<'a>(expressions: impl IntoIterator<Item = &'a str>) -> Vec<WordFrequency> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut total = 0usize;
    for text in expressions {
        for tok in tokenize(text) {
            *counts.entry(tok).or_default() += 1;
            total += 1;
        }
    }
    let mut out: Vec<WordFrequency> = counts
        .into_iter()
        .map(|(word, count)| WordFrequency {
            word,
            count,
            frequency: count as f64 / total as f64,
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.word.cmp(&b.word)));
    out
}

pub fn sample_vocab_stats(samples: &[GrexSample]) -> Vec<WordFrequency> {
    vocab_stats(samples.iter().map(|s| s.expression.as_str()))
}
