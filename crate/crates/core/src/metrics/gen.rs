//! GREG metrics: METEOR and CIDEr over tokenized expressions.
//!
//! METEOR aligns unigrams by exact match, then by stem, scores
//! `F_mean = 10PR / (R + 9P)` with fragmentation penalty
//! `0.5 * (chunks / matches)^3`, and keeps the best reference. There is no
//! synonym stage.
//!
//! CIDEr is the base formulation (no length penalty): TF-IDF vectors per
//! n-gram order 1..=4 with document frequency counted over reference sets,
//! cosine similarity averaged over an item's references, uniform 1/4 weight
//! per order, scaled by 10. An order whose candidate or reference vector has
//! zero norm contributes 0.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::dataset::SampleKind;
use crate::error::MetricError;
use crate::text::tokenize;

pub const MAX_NGRAM: usize = 4;
pub const CIDER_SCALE: f64 = 10.0;

const METEOR_ALPHA: f64 = 0.9;
const METEOR_GAMMA: f64 = 0.5;
const METEOR_BETA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionPair {
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl CaptionPair {
    pub fn from_text(candidate: &str, references: &[&str]) -> Self {
        Self {
            candidate: tokenize(candidate),
            references: references.iter().map(|r| tokenize(r)).collect(),
        }
    }
}

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

pub fn stem(word: &str) -> String {
    stemmer().stem(word).into_owned()
}

/// Unigram alignment: candidate index -> reference index.
fn align(candidate: &[String], reference: &[String]) -> Vec<Option<usize>> {
    let mut cand_map: Vec<Option<usize>> = vec![None; candidate.len()];
    let mut ref_used = vec![false; reference.len()];
    let cand_stems: Vec<String> = candidate.iter().map(|w| stem(w)).collect();
    let ref_stems: Vec<String> = reference.iter().map(|w| stem(w)).collect();

    let stages: [&dyn Fn(usize, usize) -> bool; 2] = [
        &|i, j| candidate[i] == reference[j],
        &|i, j| cand_stems[i] == ref_stems[j],
    ];
    for same in stages {
        for i in 0..candidate.len() {
            if cand_map[i].is_some() {
                continue;
            }
            // Prefer the reference slot that extends the previous chunk.
            let follow = i
                .checked_sub(1)
                .and_then(|p| cand_map[p])
                .map(|j| j + 1)
                .filter(|&j| j < reference.len() && !ref_used[j] && same(i, j));
            let pick = follow.or_else(|| (0..reference.len()).find(|&j| !ref_used[j] && same(i, j)));
            if let Some(j) = pick {
                cand_map[i] = Some(j);
                ref_used[j] = true;
            }
        }
    }
    cand_map
}

fn count_chunks(alignment: &[Option<usize>]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<usize> = None;
    for a in alignment {
        match (*a, prev) {
            (Some(j), Some(p)) if j == p + 1 => {}
            (Some(_), _) => chunks += 1,
            (None, _) => {}
        }
        prev = *a;
    }
    chunks
}

/// METEOR against a single reference.
pub fn meteor_single(candidate: &[String], reference: &[String]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let alignment = align(candidate, reference);
    let matches = alignment.iter().filter(|a| a.is_some()).count();
    if matches == 0 {
        return 0.0;
    }
    let chunks = count_chunks(&alignment);
    let p = matches as f64 / candidate.len() as f64;
    let r = matches as f64 / reference.len() as f64;
    let f_mean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let penalty = METEOR_GAMMA * (chunks as f64 / matches as f64).powf(METEOR_BETA);
    f_mean * (1.0 - penalty)
}

/// Best METEOR over the pair's references.
pub fn meteor(pair: &CaptionPair) -> f64 {
    pair.references
        .iter()
        .map(|r| meteor_single(&pair.candidate, r))
        .fold(0.0, f64::max)
}

type NGram = Vec<String>;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<NGram, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.to_vec()).or_default() += 1;
        }
    }
    out
}

/// Sparse TF-IDF vector for one n-gram order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NGramVector {
    pub n: usize,
    pub weights: HashMap<NGram, f64>,
}

impl NGramVector {
    pub fn norm(&self) -> f64 {
        self.weights.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let dot: f64 = self
            .weights
            .iter()
            .filter_map(|(g, w)| other.weights.get(g).map(|v| w * v))
            .sum();
        dot / (na * nb)
    }
}

/// Document frequencies over a corpus of reference sets.
#[derive(Debug, Clone)]
pub struct CiderScorer {
    num_docs: usize,
    doc_freq: [HashMap<NGram, usize>; MAX_NGRAM],
}

impl CiderScorer {
    pub fn new(reference_sets: &[Vec<Vec<String>>]) -> Result<Self, MetricError> {
        if reference_sets.len() < 2 {
            return Err(MetricError::CorpusTooSmall(reference_sets.len()));
        }
        let mut doc_freq: [HashMap<NGram, usize>; MAX_NGRAM] = Default::default();
        for refs in reference_sets {
            for (n, df) in doc_freq.iter_mut().enumerate() {
                let mut grams: Vec<NGram> = refs.iter().flat_map(|r| ngram_counts(r, n + 1).into_keys()).collect();
                grams.sort();
                grams.dedup();
                for g in grams {
                    *df.entry(g).or_default() += 1;
                }
            }
        }
        Ok(Self {
            num_docs: reference_sets.len(),
            doc_freq,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn vector(&self, tokens: &[String], n: usize) -> NGramVector {
        let counts = ngram_counts(tokens, n);
        let total: usize = counts.values().sum();
        let weights = counts
            .into_iter()
            .map(|(g, c)| {
                let df = self.doc_freq[n - 1].get(&g).copied().unwrap_or(0).max(1);
                let idf = (self.num_docs as f64 / df as f64).ln();
                (g, c as f64 / total as f64 * idf)
            })
            .collect();
        NGramVector { n, weights }
    }

    /// CIDEr of one candidate against its references.
    pub fn score(&self, candidate: &[String], references: &[Vec<String>]) -> f64 {
        if references.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for n in 1..=MAX_NGRAM {
            let c = self.vector(candidate, n);
            let sim: f64 = references.iter().map(|r| c.cosine(&self.vector(r, n))).sum();
            total += sim / references.len() as f64;
        }
        CIDER_SCALE * total / MAX_NGRAM as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiderResult {
    pub per_candidate: Vec<f64>,
    pub mean: f64,
}

/// CIDEr for each candidate, with IDF taken over `reference_sets`
/// (item `i`'s references are `reference_sets[i]`).
pub fn cider(candidates: &[Vec<String>], reference_sets: &[Vec<Vec<String>>]) -> Result<CiderResult, MetricError> {
    let scorer = CiderScorer::new(reference_sets)?;
    let per_candidate: Vec<f64> = candidates
        .iter()
        .zip(reference_sets)
        .map(|(c, refs)| scorer.score(c, refs))
        .collect();
    let mean = if per_candidate.is_empty() {
        0.0
    } else {
        per_candidate.iter().sum::<f64>() / per_candidate.len() as f64
    };
    Ok(CiderResult { per_candidate, mean })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GregItem {
    pub pair: CaptionPair,
    pub kind: SampleKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GenScores {
    pub meteor: f64,
    pub cider: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GregReport {
    pub single_target: GenScores,
    pub multi_target: GenScores,
    pub overall: GenScores,
    pub per_item: Vec<(f64, f64)>,
}

/// Subset means of METEOR and CIDEr. No items gives an all-zero report.
pub fn evaluate_greg(items: &[GregItem]) -> Result<GregReport, MetricError> {
    if items.is_empty() {
        return Ok(GregReport {
            single_target: GenScores::default(),
            multi_target: GenScores::default(),
            overall: GenScores::default(),
            per_item: Vec::new(),
        });
    }
    let refs: Vec<Vec<Vec<String>>> = items.iter().map(|i| i.pair.references.clone()).collect();
    let scorer = CiderScorer::new(&refs)?;
    let per_item: Vec<(f64, f64)> = items
        .par_iter()
        .map(|i| (meteor(&i.pair), scorer.score(&i.pair.candidate, &i.pair.references)))
        .collect();
    let subset = |keep: &dyn Fn(SampleKind) -> bool| {
        let chosen: Vec<&(f64, f64)> = items.iter().zip(&per_item).filter(|(i, _)| keep(i.kind)).map(|(_, s)| s).collect();
        if chosen.is_empty() {
            return GenScores::default();
        }
        let n = chosen.len() as f64;
        GenScores {
            meteor: chosen.iter().map(|s| s.0).sum::<f64>() / n,
            cider: chosen.iter().map(|s| s.1).sum::<f64>() / n,
            count: chosen.len(),
        }
    };
    Ok(GregReport {
        single_target: subset(&|k| k == SampleKind::SingleTarget),
        multi_target: subset(&|k| k == SampleKind::MultiTarget),
        overall: subset(&|_| true),
        per_item,
    })
}
