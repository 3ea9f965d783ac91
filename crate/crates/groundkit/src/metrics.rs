//! Evaluation metrics for grounded video captioning: caption quality
//! (consensus n-gram and alignment scores), grounding accuracy and recall,
//! the entity F1 family, single-tube mean spatial IoU, and the temporal
//! objectness threshold sweep.
//!
//! All video-level metrics are computed per video and averaged. Videos with
//! no ground-truth boxes are excluded from grounding means rather than
//! scored 0 or 1 — scoring them would either punish honest abstention or
//! reward silence; the exclusion is listed in every report.

pub mod caption;
pub mod grounding;
pub mod similarity;

pub use caption::{cider_d, cider_d_scores, meteor_lite};
pub use grounding::{
    ap50_video, ap50_video_with, f1_entities, grounding_recall, msiou, threshold_sweep,
    ApOptions, F1Scores, PerVideoScores, SweepRow,
};
pub use similarity::{default_phrase_similarity, SimilarityProvider};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::GroundedVideoRecord;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least two candidates for consensus scoring, got {0}")]
    TooFewCandidates(usize),
    #[error("candidates and references are misaligned")]
    MisalignedReferences,
    #[error("candidate {index} has no references")]
    NoReferences { index: usize },
    #[error("prediction and ground-truth records do not align: {0}")]
    ClipMismatch(String),
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("thresholds must be sorted ascending")]
    UnsortedThresholds,
    #[error("clip {clip_id}: prediction frame {frame_index} out of range ({num_frames} frames)")]
    FrameOutOfRange {
        clip_id: String,
        frame_index: u32,
        num_frames: u32,
    },
    #[error("clip {clip_id}: single-tube metric needs exactly one ground-truth track, found {found}")]
    MultiTubeGt { clip_id: String, found: usize },
    #[error("no ground-truth instances to evaluate")]
    EmptyGt,
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("unknown similarity provider {0:?} (expected builtin:jaccard or an http(s) endpoint)")]
    UnknownProvider(String),
    #[error("similarity provider failure: {0}")]
    Similarity(String),
}

/// Pairs predictions with ground truth by `clip_id`. Every ground-truth clip
/// must have exactly one prediction and vice versa; order follows the
/// ground-truth list.
pub fn align_by_clip<'a>(
    preds: &'a [GroundedVideoRecord],
    gts: &'a [GroundedVideoRecord],
) -> Result<Vec<(&'a GroundedVideoRecord, &'a GroundedVideoRecord)>, MetricsError> {
    let mut by_clip: HashMap<&str, &GroundedVideoRecord> = HashMap::new();
    for pred in preds {
        if by_clip.insert(&pred.clip_id, pred).is_some() {
            return Err(MetricsError::ClipMismatch(format!(
                "duplicate prediction for clip {:?}",
                pred.clip_id
            )));
        }
    }
    let mut pairs = Vec::with_capacity(gts.len());
    for gt in gts {
        let pred = by_clip.remove(gt.clip_id.as_str()).ok_or_else(|| {
            MetricsError::ClipMismatch(format!("no prediction for clip {:?}", gt.clip_id))
        })?;
        pairs.push((pred, gt));
    }
    if let Some(extra) = by_clip.keys().min() {
        return Err(MetricsError::ClipMismatch(format!(
            "prediction for unknown clip {extra:?}"
        )));
    }
    Ok(pairs)
}

/// The selectable metrics of an evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Cider,
    Meteor,
    Ap50,
    Recall,
    F1,
    Msiou,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::Cider,
        MetricKind::Meteor,
        MetricKind::Ap50,
        MetricKind::Recall,
        MetricKind::F1,
        MetricKind::Msiou,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Cider => "cider",
            MetricKind::Meteor => "meteor",
            MetricKind::Ap50 => "ap50",
            MetricKind::Recall => "recall",
            MetricKind::F1 => "f1",
            MetricKind::Msiou => "msiou",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, MetricsError> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| MetricsError::UnknownMetric(s.to_string()))
    }
}

/// Settings of one evaluation run.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub metrics: Vec<MetricKind>,
    pub iou_thresh: f64,
    pub sim_thresh: f64,
    /// When set, AP matching additionally requires case-folded phrase
    /// equality (localization-only by default).
    pub phrase_aware_ap: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            metrics: MetricKind::ALL.to_vec(),
            iou_thresh: 0.5,
            sim_thresh: 0.5,
            phrase_aware_ap: false,
        }
    }
}

/// Configuration echo embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub iou_thresh: f64,
    pub sim_thresh: f64,
    pub similarity: String,
    pub metrics: Vec<String>,
    /// Protocol choices a reader must know to interpret the numbers.
    pub notes: Vec<String>,
}

/// A full evaluation: corpus-level scalars, per-video score tables, the
/// configuration echo, and the clips excluded from grounding means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ReportConfig,
    pub corpus: BTreeMap<String, f64>,
    pub per_video: BTreeMap<String, BTreeMap<String, f64>>,
    pub excluded_zero_gt: Vec<String>,
}

/// Computes the requested metrics over aligned prediction/ground-truth
/// records and assembles the report.
pub fn evaluate(
    preds: &[GroundedVideoRecord],
    gts: &[GroundedVideoRecord],
    provider: &SimilarityProvider,
    options: &EvalOptions,
) -> Result<EvalReport, MetricsError> {
    let pairs = align_by_clip(preds, gts)?;
    let mut corpus = BTreeMap::new();
    let mut per_video: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut excluded: Vec<String> = Vec::new();

    fn record_scores(
        per_video: &mut BTreeMap<String, BTreeMap<String, f64>>,
        excluded: &mut Vec<String>,
        name: &str,
        scores: &PerVideoScores,
    ) {
        for (clip_id, score) in &scores.videos {
            match score {
                Some(s) => {
                    per_video
                        .entry(clip_id.clone())
                        .or_default()
                        .insert(name.to_string(), *s);
                }
                None => {
                    if !excluded.contains(clip_id) {
                        excluded.push(clip_id.clone());
                    }
                }
            }
        }
    }

    for metric in &options.metrics {
        match metric {
            MetricKind::Cider => {
                let candidates: Vec<String> =
                    pairs.iter().map(|(p, _)| p.caption.clone()).collect();
                let references: Vec<Vec<String>> =
                    pairs.iter().map(|(_, g)| vec![g.caption.clone()]).collect();
                let scores = cider_d_scores(&candidates, &references)?;
                for ((_, gt), score) in pairs.iter().zip(&scores) {
                    per_video
                        .entry(gt.clip_id.clone())
                        .or_default()
                        .insert("cider_d".to_string(), *score);
                }
                corpus.insert(
                    "cider_d".to_string(),
                    scores.iter().sum::<f64>() / scores.len() as f64,
                );
            }
            MetricKind::Meteor => {
                let mut sum = 0.0;
                for (pred, gt) in &pairs {
                    let score = meteor_lite(&pred.caption, &gt.caption);
                    sum += score;
                    per_video
                        .entry(gt.clip_id.clone())
                        .or_default()
                        .insert("meteor_lite".to_string(), score);
                }
                if !pairs.is_empty() {
                    corpus.insert("meteor_lite".to_string(), sum / pairs.len() as f64);
                }
            }
            MetricKind::Ap50 => {
                let ap_options = ApOptions {
                    iou_thresh: options.iou_thresh,
                    phrase_aware: options.phrase_aware_ap,
                };
                let scores = ap50_video_with(preds, gts, &ap_options)?;
                record_scores(&mut per_video, &mut excluded, "ap50", &scores);
                corpus.insert("ap50".to_string(), scores.mean);
            }
            MetricKind::Recall => {
                let sim = |a: &str, b: &str| provider.score(a, b);
                let scores = grounding_recall(
                    preds,
                    gts,
                    options.iou_thresh,
                    options.sim_thresh,
                    &sim,
                )?;
                record_scores(&mut per_video, &mut excluded, "recall", &scores);
                corpus.insert("recall".to_string(), scores.mean);
            }
            MetricKind::F1 => {
                let scores = f1_entities(preds, gts)?;
                corpus.insert("f1_all".to_string(), scores.f1_all);
                corpus.insert("f1_all_per_sent".to_string(), scores.f1_all_per_sent);
                corpus.insert("f1_loc".to_string(), scores.f1_loc);
                corpus.insert("f1_loc_per_sent".to_string(), scores.f1_loc_per_sent);
            }
            MetricKind::Msiou => {
                let scores = msiou(preds, gts)?;
                record_scores(&mut per_video, &mut excluded, "msiou", &scores);
                corpus.insert("msiou".to_string(), scores.mean);
            }
        }
    }

    excluded.sort();
    Ok(EvalReport {
        config: ReportConfig {
            iou_thresh: options.iou_thresh,
            sim_thresh: options.sim_thresh,
            similarity: provider.name(),
            metrics: options.metrics.iter().map(|m| m.name().to_string()).collect(),
            notes: vec![
                "ap50 ranks predictions by box score, ties broken by track id then frame; \
                 videos without ground-truth boxes are excluded from grounding means"
                    .to_string(),
                "meteor_lite is a simplified alignment metric: exact plus stemmed unigram \
                 matching, no synonym stage"
                    .to_string(),
            ],
        },
        corpus,
        per_video,
        excluded_zero_gt: excluded,
    })
}
