//! Caption-quality metrics.
//!
//! Both metrics tokenize by lowercasing and splitting on whitespace —
//! punctuation is kept attached to words, matching the hand-computed values
//! the tests pin. `cider_d` is the consensus n-gram metric with document
//! frequencies taken from the evaluation corpus itself, which is why it
//! refuses to score fewer than two candidates. `meteor_lite` is a
//! simplified alignment score: exact then stemmed unigram matching with a
//! fragmentation penalty, no synonym stage.

use std::collections::HashMap;

use crate::stem::stem;

use super::MetricsError;

const MAX_N: usize = 4;
const SIGMA: f64 = 6.0;

type Gram = Vec<String>;

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<Gram, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

struct TfIdf {
    vecs: Vec<HashMap<Gram, f64>>,
    norms: Vec<f64>,
    len: usize,
}

fn tfidf(tokens: &[String], df: &[HashMap<Gram, usize>], log_n: f64) -> TfIdf {
    let mut vecs = Vec::with_capacity(MAX_N);
    let mut norms = Vec::with_capacity(MAX_N);
    for n in 1..=MAX_N {
        let vec: HashMap<Gram, f64> = ngram_counts(tokens, n)
            .into_iter()
            .map(|(gram, count)| {
                let freq = df[n - 1].get(&gram).copied().unwrap_or(0) as f64;
                let weight = count as f64 * (log_n - freq.max(1.0).ln());
                (gram, weight)
            })
            .collect();
        norms.push(vec.values().map(|x| x * x).sum::<f64>().sqrt());
        vecs.push(vec);
    }
    TfIdf {
        vecs,
        norms,
        len: tokens.len(),
    }
}

/// Per-candidate consensus scores. `references[i]` are the reference
/// captions for `candidates[i]`; document frequencies are computed over the
/// per-video unions of reference n-grams, so the corpus must hold at least
/// two candidates for the idf weights to be meaningful.
pub fn cider_d_scores(
    candidates: &[String],
    references: &[Vec<String>],
) -> Result<Vec<f64>, MetricsError> {
    if candidates.len() < 2 {
        return Err(MetricsError::TooFewCandidates(candidates.len()));
    }
    if candidates.len() != references.len() {
        return Err(MetricsError::MisalignedReferences);
    }
    if let Some(index) = references.iter().position(Vec::is_empty) {
        return Err(MetricsError::NoReferences { index });
    }

    let mut df: Vec<HashMap<Gram, usize>> = vec![HashMap::new(); MAX_N];
    for refs in references {
        for n in 1..=MAX_N {
            let mut seen: Vec<Gram> = refs
                .iter()
                .flat_map(|r| ngram_counts(&tokens(r), n).into_keys())
                .collect();
            seen.sort();
            seen.dedup();
            for gram in seen {
                *df[n - 1].entry(gram).or_insert(0) += 1;
            }
        }
    }
    let log_n = (candidates.len() as f64).ln();

    let mut scores = Vec::with_capacity(candidates.len());
    for (cand, refs) in candidates.iter().zip(references) {
        let c = tfidf(&tokens(cand), &df, log_n);
        let mut acc = [0.0; MAX_N];
        for r in refs {
            let r = tfidf(&tokens(r), &df, log_n);
            let delta = c.len as f64 - r.len as f64;
            let penalty = (-(delta * delta) / (2.0 * SIGMA * SIGMA)).exp();
            for (k, slot) in acc.iter_mut().enumerate() {
                let mut val = 0.0;
                for (gram, x) in &c.vecs[k] {
                    let y = r.vecs[k].get(gram).copied().unwrap_or(0.0);
                    val += x.min(y) * y;
                }
                if c.norms[k] > 0.0 && r.norms[k] > 0.0 {
                    val /= c.norms[k] * r.norms[k];
                }
                *slot += val * penalty;
            }
        }
        scores.push(acc.iter().sum::<f64>() / MAX_N as f64 / refs.len() as f64 * 10.0);
    }
    Ok(scores)
}

/// Corpus consensus score: the mean of [`cider_d_scores`].
pub fn cider_d(candidates: &[String], references: &[Vec<String>]) -> Result<f64, MetricsError> {
    let scores = cider_d_scores(candidates, references)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Simplified alignment score for one candidate/reference pair in [0, 1].
///
/// Matching runs in two passes over candidate tokens in order — exact first,
/// then stemmed — each greedily taking the leftmost unused reference token.
/// The fragmentation penalty counts chunks over matches in candidate order,
/// where a chunk breaks only when the matched reference index is not the
/// successor of the previous one (gaps in the candidate alone do not break a
/// chunk). Returns 0 when either side is empty or nothing matches.
pub fn meteor_lite(candidate: &str, reference: &str) -> f64 {
    let c = tokens(candidate);
    let r = tokens(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut matched: Vec<Option<usize>> = vec![None; c.len()];
    let mut used = vec![false; r.len()];
    for (i, w) in c.iter().enumerate() {
        if let Some(j) = r.iter().enumerate().position(|(j, v)| !used[j] && v == w) {
            matched[i] = Some(j);
            used[j] = true;
        }
    }
    for (i, w) in c.iter().enumerate() {
        if matched[i].is_some() {
            continue;
        }
        let w_stem = stem(w);
        if let Some(j) = r
            .iter()
            .enumerate()
            .position(|(j, v)| !used[j] && stem(v) == w_stem)
        {
            matched[i] = Some(j);
            used[j] = true;
        }
    }
    let m = matched.iter().flatten().count();
    if m == 0 {
        return 0.0;
    }
    let precision = m as f64 / c.len() as f64;
    let recall = m as f64 / r.len() as f64;
    let fmean = precision * recall / (0.9 * precision + 0.1 * recall);
    let mut chunks = 0usize;
    let mut prev: Option<usize> = None;
    for j in matched.iter().flatten() {
        if prev != Some(j.wrapping_sub(1)) {
            chunks += 1;
        }
        prev = Some(*j);
    }
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    fmean * (1.0 - penalty)
}
