//! Phrase-similarity providers for the recall metric.
//!
//! The builtin provider is a Jaccard index over stemmed content tokens —
//! cheap, deterministic, and good enough for near-paraphrase phrases. An
//! HTTP provider can swap in a learned scorer without touching the metric:
//! it POSTs `{"a": ..., "b": ...}` and expects `{"score": ...}` back.

use std::collections::HashSet;
use std::time::Duration;

use serde::Deserialize;

use crate::stem::content_tokens;

use super::MetricsError;

/// Jaccard similarity of the stemmed content-token sets of two phrases, in
/// `[0, 1]`. Phrases whose content tokens are both empty (stop words only)
/// count as identical.
pub fn default_phrase_similarity(a: &str, b: &str) -> f64 {
    let sa: HashSet<String> = content_tokens(a).into_iter().collect();
    let sb: HashSet<String> = content_tokens(b).into_iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Where phrase-similarity scores come from: the builtin Jaccard index
/// (`builtin:jaccard`) or an HTTP endpoint given by its URL.
#[derive(Debug, Clone)]
pub enum SimilarityProvider {
    Jaccard,
    Http {
        endpoint: String,
        client: reqwest::blocking::Client,
    },
}

impl SimilarityProvider {
    /// Parses a provider spec: `builtin:jaccard`, or an `http://`/`https://`
    /// URL of a scoring endpoint.
    pub fn parse(source: &str) -> Result<Self, MetricsError> {
        if source == "builtin:jaccard" {
            return Ok(SimilarityProvider::Jaccard);
        }
        if source.starts_with("http://") || source.starts_with("https://") {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(10))
                .build()
                .map_err(|err| MetricsError::Similarity(err.to_string()))?;
            return Ok(SimilarityProvider::Http {
                endpoint: source.to_string(),
                client,
            });
        }
        Err(MetricsError::UnknownProvider(source.to_string()))
    }

    /// The spec string echoed into reports.
    pub fn name(&self) -> String {
        match self {
            SimilarityProvider::Jaccard => "builtin:jaccard".to_string(),
            SimilarityProvider::Http { endpoint, .. } => endpoint.clone(),
        }
    }

    pub fn score(&self, a: &str, b: &str) -> Result<f64, MetricsError> {
        match self {
            SimilarityProvider::Jaccard => Ok(default_phrase_similarity(a, b)),
            SimilarityProvider::Http { endpoint, client } => {
                #[derive(Deserialize)]
                struct ScoreResponse {
                    score: f64,
                }
                let response = client
                    .post(endpoint)
                    .json(&serde_json::json!({ "a": a, "b": b }))
                    .send()
                    .map_err(|err| MetricsError::Similarity(err.to_string()))?;
                let status = response.status();
                if !status.is_success() {
                    return Err(MetricsError::Similarity(format!(
                        "endpoint returned HTTP {}",
                        status.as_u16()
                    )));
                }
                let parsed: ScoreResponse = response
                    .json()
                    .map_err(|err| MetricsError::Similarity(err.to_string()))?;
                if !parsed.score.is_finite() {
                    return Err(MetricsError::Similarity(format!(
                        "endpoint returned non-finite score {}",
                        parsed.score
                    )));
                }
                Ok(parsed.score)
            }
        }
    }
}
