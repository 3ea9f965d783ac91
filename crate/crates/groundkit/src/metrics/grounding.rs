//! Grounding metrics over aligned prediction/ground-truth records.
//!
//! All of these treat a record's tracks as a bag of per-frame box
//! *instances*: one instance per track entry, carrying the frame index, the
//! box, the track's phrase text, and (for ranking) the entry score. Videos
//! whose ground truth has no instances are excluded from means rather than
//! scored, and callers receive the excluded clip ids.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, tube_siou};
use crate::prep::raw_to_record;
use crate::types::{BoundingBox, GroundedVideoRecord, RawPrediction, Track};

use super::{align_by_clip, MetricsError};

/// Per-video scores plus their mean. `None` marks a video excluded for
/// having no ground-truth instances; the mean runs over the rest (0 when
/// every video is excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct PerVideoScores {
    pub videos: Vec<(String, Option<f64>)>,
    pub mean: f64,
}

impl PerVideoScores {
    fn collect(videos: Vec<(String, Option<f64>)>) -> Self {
        let included: Vec<f64> = videos.iter().filter_map(|(_, s)| *s).collect();
        let mean = if included.is_empty() {
            0.0
        } else {
            included.iter().sum::<f64>() / included.len() as f64
        };
        PerVideoScores { videos, mean }
    }
}

/// Settings for [`ap50_video_with`].
#[derive(Debug, Clone, Copy)]
pub struct ApOptions {
    /// Overlap a prediction must reach to match a ground-truth box.
    pub iou_thresh: f64,
    /// When set, a match additionally requires case-folded phrase equality;
    /// by default matching is localization-only.
    pub phrase_aware: bool,
}

impl Default for ApOptions {
    fn default() -> Self {
        ApOptions {
            iou_thresh: 0.5,
            phrase_aware: false,
        }
    }
}

#[derive(Clone)]
struct Instance {
    frame_index: u32,
    bbox: BoundingBox,
    phrase: String,
    score: f64,
    phrase_id: u32,
}

fn phrase_texts(record: &GroundedVideoRecord) -> HashMap<u32, &str> {
    record
        .phrases
        .iter()
        .map(|span| (span.id, span.text.as_str()))
        .collect()
}

/// One instance per track entry. Phrases are case-folded for the
/// equality-based metrics; entries without a score rank as 1.0.
fn instances(record: &GroundedVideoRecord) -> Vec<Instance> {
    let texts = phrase_texts(record);
    let mut out = Vec::new();
    for track in &record.tracks {
        let phrase = texts
            .get(&track.phrase_id)
            .map(|t| t.to_lowercase())
            .unwrap_or_default();
        for entry in &track.entries {
            out.push(Instance {
                frame_index: entry.frame_index,
                bbox: entry.bbox,
                phrase: phrase.clone(),
                score: entry.score.unwrap_or(1.0),
                phrase_id: track.phrase_id,
            });
        }
    }
    out
}

fn check_threshold(value: f64) -> Result<(), MetricsError> {
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(MetricsError::InvalidThreshold(value));
    }
    Ok(())
}

/// Video-level average precision at the default 0.5 overlap,
/// localization-only.
pub fn ap50_video(
    preds: &[GroundedVideoRecord],
    gts: &[GroundedVideoRecord],
) -> Result<PerVideoScores, MetricsError> {
    ap50_video_with(preds, gts, &ApOptions::default())
}

/// Video-level average precision.
///
/// Per video, prediction instances are ranked by score (descending, ties by
/// track id then frame index), then greedily matched: each prediction takes
/// the highest-IoU unmatched ground-truth box on its frame, counting as a
/// true positive when that IoU reaches the threshold. AP integrates the
/// precision envelope over all recall steps (all-point interpolation).
pub fn ap50_video_with(
    preds: &[GroundedVideoRecord],
    gts: &[GroundedVideoRecord],
    options: &ApOptions,
) -> Result<PerVideoScores, MetricsError> {
    check_threshold(options.iou_thresh)?;
    let pairs = align_by_clip(preds, gts)?;
    let mut videos = Vec::with_capacity(pairs.len());
    for (pred, gt) in pairs {
        videos.push((gt.clip_id.clone(), ap_one_video(pred, gt, options)?));
    }
    Ok(PerVideoScores::collect(videos))
}

fn ap_one_video(
    pred: &GroundedVideoRecord,
    gt: &GroundedVideoRecord,
    options: &ApOptions,
) -> Result<Option<f64>, MetricsError> {
    let mut gt_by_frame: HashMap<u32, Vec<(Instance, bool)>> = HashMap::new();
    let mut total_gt = 0usize;
    for inst in instances(gt) {
        gt_by_frame
            .entry(inst.frame_index)
            .or_default()
            .push((inst, false));
        total_gt += 1;
    }
    if total_gt == 0 {
        return Ok(None);
    }

    let mut ranked = instances(pred);
    for inst in &ranked {
        if inst.frame_index >= gt.num_frames {
            return Err(MetricsError::FrameOutOfRange {
                clip_id: gt.clip_id.clone(),
                frame_index: inst.frame_index,
                num_frames: gt.num_frames,
            });
        }
    }
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.phrase_id.cmp(&b.phrase_id))
            .then(a.frame_index.cmp(&b.frame_index))
    });

    let mut points: Vec<(f64, f64)> = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (rank, inst) in ranked.iter().enumerate() {
        if let Some(candidates) = gt_by_frame.get_mut(&inst.frame_index) {
            let mut best: Option<(usize, f64)> = None;
            for (idx, (gt_inst, matched)) in candidates.iter().enumerate() {
                if *matched || (options.phrase_aware && gt_inst.phrase != inst.phrase) {
                    continue;
                }
                let overlap = iou(&inst.bbox, &gt_inst.bbox);
                if best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((idx, overlap));
                }
            }
            if let Some((idx, overlap)) = best {
                if overlap >= options.iou_thresh {
                    candidates[idx].1 = true;
                    tp += 1;
                }
            }
        }
        points.push((
            tp as f64 / total_gt as f64,
            tp as f64 / (rank + 1) as f64,
        ));
    }

    // Right-max precision envelope, then sum precision over recall steps.
    let mut envelope = vec![0.0; points.len()];
    let mut max_precision = 0.0f64;
    for (i, (_, precision)) in points.iter().enumerate().rev() {
        max_precision = max_precision.max(*precision);
        envelope[i] = max_precision;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, (recall, _)) in points.iter().enumerate() {
        ap += (recall - prev_recall) * envelope[i];
        prev_recall = *recall;
    }
    Ok(Some(ap))
}

/// Fraction of ground-truth instances matched by a prediction with IoU and
/// phrase similarity both at or above their thresholds.
///
/// Candidate pairs live on the same frame; they are sorted by IoU
/// (descending, ties by ground-truth then prediction index) and matched
/// greedily one-to-one. Similarity calls are cached per phrase pair.
pub fn grounding_recall(
    preds: &[GroundedVideoRecord],
    gts: &[GroundedVideoRecord],
    iou_thresh: f64,
    sim_thresh: f64,
    similarity: &dyn Fn(&str, &str) -> Result<f64, MetricsError>,
) -> Result<PerVideoScores, MetricsError> {
    check_threshold(iou_thresh)?;
    check_threshold(sim_thresh)?;
    let pairs = align_by_clip(preds, gts)?;
    let mut sim_cache: HashMap<(String, String), f64> = HashMap::new();
    let mut videos = Vec::with_capacity(pairs.len());
    for (pred, gt) in pairs {
        let gt_insts = instances(gt);
        if gt_insts.is_empty() {
            videos.push((gt.clip_id.clone(), None));
            continue;
        }
        let pred_insts = instances(pred);
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (gi, g) in gt_insts.iter().enumerate() {
            for (pi, p) in pred_insts.iter().enumerate() {
                if p.frame_index != g.frame_index {
                    continue;
                }
                let overlap = iou(&p.bbox, &g.bbox);
                if overlap < iou_thresh {
                    continue;
                }
                let key = (p.phrase.clone(), g.phrase.clone());
                let sim = match sim_cache.get(&key) {
                    Some(s) => *s,
                    None => {
                        let s = similarity(&p.phrase, &g.phrase)?;
                        sim_cache.insert(key, s);
                        s
                    }
                };
                if sim < sim_thresh {
                    continue;
                }
                candidates.push((overlap, gi, pi));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut gt_used = vec![false; gt_insts.len()];
        let mut pred_used = vec![false; pred_insts.len()];
        let mut matched = 0usize;
        for (_, gi, pi) in candidates {
            if gt_used[gi] || pred_used[pi] {
                continue;
            }
            gt_used[gi] = true;
            pred_used[pi] = true;
            matched += 1;
        }
        videos.push((
            gt.clip_id.clone(),
            Some(matched as f64 / gt_insts.len() as f64),
        ));
    }
    Ok(PerVideoScores::collect(videos))
}

/// The entity F1 family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Scores {
    /// Phrase-aware F1, averaged over ground-truth categories.
    pub f1_all: f64,
    /// Phrase-aware F1, averaged per video.
    pub f1_all_per_sent: f64,
    /// Localization-only F1, averaged over ground-truth categories.
    pub f1_loc: f64,
    /// Localization-only F1, averaged per video.
    pub f1_loc_per_sent: f64,
}

#[derive(Default)]
struct CategoryStats {
    gt_total: usize,
    pred_total: usize,
    tp_pred: usize,
    tp_gt: usize,
}

fn category_f1(stats: &HashMap<String, CategoryStats>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for stat in stats.values() {
        if stat.gt_total == 0 {
            continue;
        }
        let precision = if stat.pred_total == 0 {
            0.0
        } else {
            stat.tp_pred as f64 / stat.pred_total as f64
        };
        let recall = stat.tp_gt as f64 / stat.gt_total as f64;
        sum += if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Matches prediction to ground-truth instances one-to-one within each
/// frame (IoU strictly above 0.5, sorted by IoU descending) and returns the
/// matched `(pred_idx, gt_idx)` pairs. `phrase_aware` additionally requires
/// case-folded phrase equality.
fn match_instances(
    pred_insts: &[Instance],
    gt_insts: &[Instance],
    phrase_aware: bool,
) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (gi, g) in gt_insts.iter().enumerate() {
        for (pi, p) in pred_insts.iter().enumerate() {
            if p.frame_index != g.frame_index {
                continue;
            }
            if phrase_aware && p.phrase != g.phrase {
                continue;
            }
            let overlap = iou(&p.bbox, &g.bbox);
            if overlap > 0.5 {
                candidates.push((overlap, gi, pi));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut gt_used = vec![false; gt_insts.len()];
    let mut pred_used = vec![false; pred_insts.len()];
    let mut pairs = Vec::new();
    for (_, gi, pi) in candidates {
        if gt_used[gi] || pred_used[pi] {
            continue;
        }
        gt_used[gi] = true;
        pred_used[pi] = true;
        pairs.push((pi, gi));
    }
    pairs
}

/// Entity-level F1 over box instances, phrase-aware (`f1_all`) and
/// localization-only (`f1_loc`), each averaged over ground-truth categories
/// and per video.
///
/// Categories are case-folded ground-truth phrase texts; category means run
/// over categories that appear in the ground truth. In localization-only
/// mode a matched prediction's category bookkeeping follows the
/// ground-truth instance it matched (its own phrase is irrelevant);
/// unmatched predictions count against their own phrase. Videos without
/// ground-truth instances are skipped by the per-video means, and an
/// entirely empty ground truth is an error.
pub fn f1_entities(
    preds: &[GroundedVideoRecord],
    gts: &[GroundedVideoRecord],
) -> Result<F1Scores, MetricsError> {
    let pairs = align_by_clip(preds, gts)?;
    let mut all_stats: HashMap<String, CategoryStats> = HashMap::new();
    let mut loc_stats: HashMap<String, CategoryStats> = HashMap::new();
    let mut all_sent = Vec::new();
    let mut loc_sent = Vec::new();

    for (pred, gt) in &pairs {
        let gt_insts = instances(gt);
        let pred_insts = instances(pred);
        for inst in &gt_insts {
            all_stats.entry(inst.phrase.clone()).or_default().gt_total += 1;
            loc_stats.entry(inst.phrase.clone()).or_default().gt_total += 1;
        }

        let all_pairs = match_instances(&pred_insts, &gt_insts, true);
        for inst in &pred_insts {
            all_stats
                .entry(inst.phrase.clone())
                .or_default()
                .pred_total += 1;
        }
        for (pi, _) in &all_pairs {
            let stat = all_stats.entry(pred_insts[*pi].phrase.clone()).or_default();
            stat.tp_pred += 1;
            stat.tp_gt += 1;
        }

        let loc_pairs = match_instances(&pred_insts, &gt_insts, false);
        let mut pred_matched = vec![false; pred_insts.len()];
        for (pi, gi) in &loc_pairs {
            pred_matched[*pi] = true;
            let stat = loc_stats.entry(gt_insts[*gi].phrase.clone()).or_default();
            stat.pred_total += 1;
            stat.tp_pred += 1;
            stat.tp_gt += 1;
        }
        for (pi, inst) in pred_insts.iter().enumerate() {
            if !pred_matched[pi] {
                loc_stats
                    .entry(inst.phrase.clone())
                    .or_default()
                    .pred_total += 1;
            }
        }

        if !gt_insts.is_empty() {
            let denom = (pred_insts.len() + gt_insts.len()) as f64;
            all_sent.push(2.0 * all_pairs.len() as f64 / denom);
            loc_sent.push(2.0 * loc_pairs.len() as f64 / denom);
        }
    }

    if all_sent.is_empty() {
        return Err(MetricsError::EmptyGt);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(F1Scores {
        f1_all: category_f1(&all_stats),
        f1_all_per_sent: mean(&all_sent),
        f1_loc: category_f1(&loc_stats),
        f1_loc_per_sent: mean(&loc_sent),
    })
}

/// Mean spatio-temporal IoU for single-tube benchmarks.
///
/// Every ground-truth record must carry exactly one track; the prediction
/// contributes its track with the same phrase id (no track scores 0). The
/// per-video score is the tube IoU over the ground-truth track's frame set;
/// videos whose single track has no boxes are excluded.
pub fn msiou(
    preds: &[GroundedVideoRecord],
    gts: &[GroundedVideoRecord],
) -> Result<PerVideoScores, MetricsError> {
    let pairs = align_by_clip(preds, gts)?;
    let mut videos = Vec::with_capacity(pairs.len());
    for (pred, gt) in pairs {
        if gt.tracks.len() != 1 {
            return Err(MetricsError::MultiTubeGt {
                clip_id: gt.clip_id.clone(),
                found: gt.tracks.len(),
            });
        }
        let gt_track = &gt.tracks[0];
        let frames: Vec<u32> = gt_track.entries.iter().map(|e| e.frame_index).collect();
        if frames.is_empty() {
            videos.push((gt.clip_id.clone(), None));
            continue;
        }
        let empty = Track {
            phrase_id: gt_track.phrase_id,
            entries: Vec::new(),
        };
        let pred_track = pred
            .tracks
            .iter()
            .find(|t| t.phrase_id == gt_track.phrase_id)
            .unwrap_or(&empty);
        let score = tube_siou(pred_track, gt_track, &frames)
            .map_err(|_| MetricsError::EmptyGt)?;
        videos.push((gt.clip_id.clone(), Some(score)));
    }
    Ok(PerVideoScores::collect(videos))
}

/// One row of an objectness threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub ap50: f64,
    pub recall: f64,
    pub boxes_emitted: u64,
}

/// Evaluates raw predictions at several objectness thresholds.
///
/// `metas` supply the caption and phrase table for each raw clip (their
/// tracks are ignored). At each threshold the surviving boxes form a
/// prediction corpus scored for AP and recall against `gts`, plus the total
/// box count. AP is computed with entry scores stripped — the sweep asks
/// how good the *kept set* is, and reusing the very scores that did the
/// keeping would make rankings at different thresholds incomparable.
pub fn threshold_sweep(
    raws: &[RawPrediction],
    metas: &[GroundedVideoRecord],
    gts: &[GroundedVideoRecord],
    thresholds: &[f64],
    iou_thresh: f64,
    sim_thresh: f64,
    similarity: &dyn Fn(&str, &str) -> Result<f64, MetricsError>,
) -> Result<Vec<SweepRow>, MetricsError> {
    for window in thresholds.windows(2) {
        if window[0] > window[1] {
            return Err(MetricsError::UnsortedThresholds);
        }
    }
    for &tau in thresholds {
        check_threshold(tau)?;
    }
    let mut meta_by_clip: HashMap<&str, &GroundedVideoRecord> = HashMap::new();
    for meta in metas {
        if meta_by_clip.insert(&meta.clip_id, meta).is_some() {
            return Err(MetricsError::ClipMismatch(format!(
                "duplicate metadata for clip {:?}",
                meta.clip_id
            )));
        }
    }
    if metas.len() != raws.len() {
        return Err(MetricsError::ClipMismatch(format!(
            "{} raw predictions but {} metadata records",
            raws.len(),
            metas.len()
        )));
    }

    let mut rows = Vec::with_capacity(thresholds.len());
    for &tau in thresholds {
        let mut records = Vec::with_capacity(raws.len());
        let mut boxes_emitted = 0u64;
        for raw in raws {
            let meta = meta_by_clip.get(raw.clip_id.as_str()).ok_or_else(|| {
                MetricsError::ClipMismatch(format!("no metadata for clip {:?}", raw.clip_id))
            })?;
            let record = raw_to_record(raw, meta, tau)
                .map_err(|err| MetricsError::ClipMismatch(err.to_string()))?;
            boxes_emitted += record
                .tracks
                .iter()
                .map(|t| t.entries.len() as u64)
                .sum::<u64>();
            records.push(record);
        }
        let mut stripped = records.clone();
        for record in &mut stripped {
            for track in &mut record.tracks {
                for entry in &mut track.entries {
                    entry.score = None;
                }
            }
        }
        let ap50 = ap50_video(&stripped, gts)?.mean;
        let recall = grounding_recall(&records, gts, iou_thresh, sim_thresh, similarity)?.mean;
        rows.push(SweepRow {
            threshold: tau,
            ap50,
            recall,
            boxes_emitted,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::similarity::default_phrase_similarity;
    use crate::metrics::tests::{bb, rec};
    use crate::types::{RawFrame, RawObject};

    fn jaccard(a: &str, b: &str) -> Result<f64, MetricsError> {
        Ok(default_phrase_similarity(a, b))
    }

    #[test]
    fn ap_is_one_for_perfect_predictions() {
        let gt = vec![rec(
            "v",
            4,
            &["a cat", "a dog"],
            &[
                (0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None), (1, bb(0.1, 0.1, 0.2, 0.2), None)]),
                (1, vec![(2, bb(0.5, 0.5, 0.3, 0.3), None)]),
            ],
        )];
        let scores = ap50_video(&gt, &gt).unwrap();
        assert_eq!(scores.mean, 1.0);
        assert_eq!(scores.videos, vec![("v".to_string(), Some(1.0))]);
    }

    #[test]
    fn ap_is_zero_for_empty_predictions() {
        let gt = vec![rec(
            "v",
            4,
            &["a cat"],
            &[(0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None)])],
        )];
        let pred = vec![rec("v", 4, &["a cat"], &[])];
        let scores = ap50_video(&pred, &gt).unwrap();
        assert_eq!(scores.mean, 0.0);
        assert_eq!(scores.videos[0].1, Some(0.0));
    }

    #[test]
    fn ap_matches_hand_computed_half() {
        // Two ground-truth boxes on one frame; one exact prediction at
        // score 0.9 and one disjoint at 0.8. Precision/recall points are
        // (0.5, 1.0) then (0.5, 0.5), so AP = 0.5.
        let gt = vec![rec(
            "v",
            2,
            &["a cat", "a dog"],
            &[
                (0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None)]),
                (1, vec![(0, bb(0.6, 0.6, 0.2, 0.2), None)]),
            ],
        )];
        let pred = vec![rec(
            "v",
            2,
            &["a cat", "a dog"],
            &[
                (0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), Some(0.9))]),
                (1, vec![(0, bb(0.3, 0.8, 0.1, 0.1), Some(0.8))]),
            ],
        )];
        let scores = ap50_video(&pred, &gt).unwrap();
        assert!((scores.mean - 0.5).abs() < 1e-9);
    }

    #[test]
    fn ap_ranking_follows_scores() {
        // Same boxes, different score order: when the false positive
        // outranks the true positive, AP drops from 1.0 to 0.5.
        let gt = vec![rec(
            "v",
            2,
            &["a cat"],
            &[(0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None)])],
        )];
        let mk = |good_score: f64, bad_score: f64| {
            vec![rec(
                "v",
                2,
                &["a cat", "a dog"],
                &[
                    (0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), Some(good_score))]),
                    (1, vec![(0, bb(0.6, 0.6, 0.2, 0.2), Some(bad_score))]),
                ],
            )]
        };
        let good_first = ap50_video(&mk(0.9, 0.8), &gt).unwrap().mean;
        let bad_first = ap50_video(&mk(0.8, 0.9), &gt).unwrap().mean;
        assert!((good_first - 1.0).abs() < 1e-9);
        assert!((bad_first - 0.5).abs() < 1e-9);
    }

    #[test]
    fn ap_does_not_double_count_one_ground_truth_box() {
        // Two identical predictions of the first box and none of the
        // second: the duplicate is a false positive, AP = 0.5.
        let gt = vec![rec(
            "v",
            2,
            &["a cat", "a dog"],
            &[
                (0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None)]),
                (1, vec![(0, bb(0.6, 0.6, 0.2, 0.2), None)]),
            ],
        )];
        let pred = vec![rec(
            "v",
            2,
            &["a cat", "also a cat"],
            &[
                (0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), Some(0.9))]),
                (1, vec![(0, bb(0.1, 0.1, 0.2, 0.2), Some(0.8))]),
            ],
        )];
        let scores = ap50_video(&pred, &gt).unwrap();
        assert!((scores.mean - 0.5).abs() < 1e-9);
    }

    #[test]
    fn ap_excludes_videos_without_ground_truth_boxes() {
        let gts = vec![
            rec("a", 2, &["a cat"], &[(0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None)])]),
            rec("b", 2, &["a cat"], &[]),
        ];
        let preds = vec![
            rec("a", 2, &["a cat"], &[(0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None)])]),
            rec("b", 2, &["a cat"], &[]),
        ];
        let scores = ap50_video(&preds, &gts).unwrap();
        assert_eq!(scores.videos[1], ("b".to_string(), None));
        assert_eq!(scores.mean, 1.0);
    }

    #[test]
    fn ap_rejects_out_of_range_frames() {
        let gt = vec![rec(
            "v",
            2,
            &["a cat"],
            &[(0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None)])],
        )];
        let pred = vec![rec(
            "v",
            2,
            &["a cat"],
            &[(0, vec![(2, bb(0.1, 0.1, 0.2, 0.2), None)])],
        )];
        assert!(matches!(
            ap50_video(&pred, &gt),
            Err(MetricsError::FrameOutOfRange {
                frame_index: 2,
                num_frames: 2,
                ..
            })
        ));
    }

    #[test]
    fn phrase_aware_ap_requires_matching_text() {
        let gt = vec![rec(
            "v",
            2,
            &["a cat"],
            &[(0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None)])],
        )];
        let pred = vec![rec(
            "v",
            2,
            &["A CAT"],
            &[(0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None)])],
        )];
        let wrong = vec![rec(
            "v",
            2,
            &["a dog"],
            &[(0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None)])],
        )];
        let aware = ApOptions {
            phrase_aware: true,
            ..ApOptions::default()
        };
        assert_eq!(ap50_video_with(&pred, &gt, &aware).unwrap().mean, 1.0);
        assert_eq!(ap50_video_with(&wrong, &gt, &aware).unwrap().mean, 0.0);
        assert_eq!(ap50_video(&wrong, &gt).unwrap().mean, 1.0);
    }

    #[test]
    fn recall_is_one_for_perfect_predictions() {
        let gt = vec![rec(
            "v",
            4,
            &["a cat", "a dog"],
            &[
                (0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None), (1, bb(0.15, 0.1, 0.2, 0.2), None)]),
                (1, vec![(2, bb(0.5, 0.5, 0.3, 0.3), None)]),
            ],
        )];
        let scores = grounding_recall(&gt, &gt, 0.5, 0.5, &jaccard).unwrap();
        assert_eq!(scores.mean, 1.0);
    }

    #[test]
    fn recall_requires_similar_phrases() {
        let gt = vec![rec(
            "v",
            2,
            &["a cat"],
            &[(0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None)])],
        )];
        let pred = vec![rec(
            "v",
            2,
            &["a rock"],
            &[(0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None)])],
        )];
        let scores = grounding_recall(&pred, &gt, 0.5, 0.5, &jaccard).unwrap();
        assert_eq!(scores.mean, 0.0);
    }

    #[test]
    fn recall_counts_matched_fraction() {
        let gt = vec![rec(
            "v",
            4,
            &["a cat"],
            &[(
                0,
                (0..4)
                    .map(|f| (f, bb(0.1, 0.1, 0.2, 0.2), None))
                    .collect(),
            )],
        )];
        let pred = vec![rec(
            "v",
            4,
            &["a cat"],
            &[(
                0,
                (0..2)
                    .map(|f| (f, bb(0.1, 0.1, 0.2, 0.2), None))
                    .collect(),
            )],
        )];
        let scores = grounding_recall(&pred, &gt, 0.5, 0.5, &jaccard).unwrap();
        assert_eq!(scores.mean, 0.5);
    }

    #[test]
    fn recall_rejects_bad_thresholds() {
        let gt = vec![rec("v", 2, &["a cat"], &[])];
        assert!(matches!(
            grounding_recall(&gt, &gt, 1.5, 0.5, &jaccard),
            Err(MetricsError::InvalidThreshold(_))
        ));
        assert!(matches!(
            grounding_recall(&gt, &gt, 0.5, -0.1, &jaccard),
            Err(MetricsError::InvalidThreshold(_))
        ));
    }

    fn two_category_gt() -> Vec<GroundedVideoRecord> {
        vec![rec(
            "v",
            4,
            &["a cat", "a dog"],
            &[
                (0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None), (1, bb(0.1, 0.1, 0.2, 0.2), None)]),
                (1, vec![(2, bb(0.5, 0.5, 0.3, 0.3), None)]),
            ],
        )]
    }

    #[test]
    fn f1_perfect_predictions_score_one() {
        let gt = two_category_gt();
        let scores = f1_entities(&gt, &gt).unwrap();
        assert_eq!(scores.f1_all, 1.0);
        assert_eq!(scores.f1_all_per_sent, 1.0);
        assert_eq!(scores.f1_loc, 1.0);
        assert_eq!(scores.f1_loc_per_sent, 1.0);
    }

    #[test]
    fn f1_perfect_boxes_wrong_phrases() {
        let gt = two_category_gt();
        let pred = vec![rec(
            "v",
            4,
            &["a rock", "a cloud"],
            &[
                (0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None), (1, bb(0.1, 0.1, 0.2, 0.2), None)]),
                (1, vec![(2, bb(0.5, 0.5, 0.3, 0.3), None)]),
            ],
        )];
        let scores = f1_entities(&pred, &gt).unwrap();
        assert_eq!(scores.f1_all, 0.0);
        assert_eq!(scores.f1_all_per_sent, 0.0);
        assert_eq!(scores.f1_loc, 1.0);
        assert_eq!(scores.f1_loc_per_sent, 1.0);
    }

    #[test]
    fn f1_missed_category_halves_the_mean() {
        let gt = two_category_gt();
        let pred = vec![rec(
            "v",
            4,
            &["a cat"],
            &[(0, vec![(0, bb(0.1, 0.1, 0.2, 0.2), None), (1, bb(0.1, 0.1, 0.2, 0.2), None)])],
        )];
        let scores = f1_entities(&pred, &gt).unwrap();
        assert!((scores.f1_all - 0.5).abs() < 1e-9);
        assert!((scores.f1_loc - 0.5).abs() < 1e-9);
    }

    #[test]
    fn f1_requires_some_ground_truth() {
        let gt = vec![rec("v", 2, &["a cat"], &[])];
        assert!(matches!(
            f1_entities(&gt, &gt),
            Err(MetricsError::EmptyGt)
        ));
    }

    #[test]
    fn msiou_scores_tube_overlap() {
        let b = bb(0.2, 0.2, 0.4, 0.4);
        let gt = vec![rec(
            "v",
            8,
            &["a cat"],
            &[(0, (0..8).map(|f| (f, b, None)).collect())],
        )];
        let half = vec![rec(
            "v",
            8,
            &["a cat"],
            &[(0, (0..4).map(|f| (f, b, None)).collect())],
        )];
        let none = vec![rec("v", 8, &["a cat"], &[])];
        assert_eq!(msiou(&gt, &gt).unwrap().mean, 1.0);
        assert_eq!(msiou(&half, &gt).unwrap().mean, 0.5);
        assert_eq!(msiou(&none, &gt).unwrap().mean, 0.0);
    }

    #[test]
    fn msiou_rejects_multi_tube_ground_truth() {
        let gt = two_category_gt();
        assert!(matches!(
            msiou(&gt, &gt),
            Err(MetricsError::MultiTubeGt { found: 2, .. })
        ));
    }

    /// One video; ground truth is a cat tube over frames 0..4. The raw
    /// prediction holds a disjoint "a rock" object whose objectness rises
    /// with the frame index and an exact "a cat" object that loses its last
    /// frame at threshold 0.5.
    fn sweep_fixture() -> (Vec<RawPrediction>, Vec<GroundedVideoRecord>, Vec<GroundedVideoRecord>) {
        let cat = bb(0.1, 0.1, 0.2, 0.2);
        let rock = bb(0.6, 0.6, 0.2, 0.2);
        let gt = rec(
            "v",
            4,
            &["a cat"],
            &[(0, (0..4).map(|f| (f, cat, None)).collect())],
        );
        let raw = RawPrediction {
            clip_id: "v".to_string(),
            num_frames: 4,
            objects: vec![
                RawObject {
                    phrase_id: 0,
                    frames: [0.05, 0.15, 0.25, 0.35]
                        .iter()
                        .map(|&objectness| RawFrame { bbox: rock, objectness })
                        .collect(),
                },
                RawObject {
                    phrase_id: 1,
                    frames: [0.9, 0.9, 0.9, 0.45]
                        .iter()
                        .map(|&objectness| RawFrame { bbox: cat, objectness })
                        .collect(),
                },
            ],
        };
        let meta = rec("v", 4, &["a rock", "a cat"], &[]);
        (vec![raw], vec![meta], vec![gt])
    }

    #[test]
    fn sweep_matches_hand_computed_fixture() {
        let (raws, metas, gts) = sweep_fixture();
        let thresholds = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
        let rows = threshold_sweep(&raws, &metas, &gts, &thresholds, 0.5, 0.5, &jaccard).unwrap();
        let emitted: Vec<u64> = rows.iter().map(|r| r.boxes_emitted).collect();
        assert_eq!(emitted, vec![8, 7, 6, 5, 4, 3]);
        assert!((rows[0].ap50 - 0.5).abs() < 1e-9);
        assert!((rows[5].ap50 - 0.75).abs() < 1e-9);
        assert!((rows[0].recall - 1.0).abs() < 1e-9);
        assert!((rows[5].recall - 0.75).abs() < 1e-9);
    }

    #[test]
    fn sweep_emits_every_box_at_threshold_zero() {
        let (raws, metas, gts) = sweep_fixture();
        let rows = threshold_sweep(&raws, &metas, &gts, &[0.0], 0.5, 0.5, &jaccard).unwrap();
        let total: u64 = raws
            .iter()
            .flat_map(|r| r.objects.iter())
            .map(|o| o.frames.len() as u64)
            .sum();
        assert_eq!(rows[0].boxes_emitted, total);
    }

    #[test]
    fn sweep_rejects_unsorted_or_invalid_thresholds() {
        let (raws, metas, gts) = sweep_fixture();
        assert!(matches!(
            threshold_sweep(&raws, &metas, &gts, &[0.5, 0.1], 0.5, 0.5, &jaccard),
            Err(MetricsError::UnsortedThresholds)
        ));
        assert!(matches!(
            threshold_sweep(&raws, &metas, &gts, &[0.5, 1.1], 0.5, 0.5, &jaccard),
            Err(MetricsError::InvalidThreshold(_))
        ));
    }

    #[test]
    fn sweep_requires_metadata_for_every_clip() {
        let (raws, _, gts) = sweep_fixture();
        let wrong_meta = vec![rec("other", 4, &["a cat"], &[])];
        assert!(matches!(
            threshold_sweep(&raws, &wrong_meta, &gts, &[0.0], 0.5, 0.5, &jaccard),
            Err(MetricsError::ClipMismatch(_))
        ));
    }
}
