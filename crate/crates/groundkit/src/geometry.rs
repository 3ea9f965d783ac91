//! Box overlap measures and the training reference losses.
//!
//! All geometry runs on normalized [`BoundingBox`] fractions, so values are
//! resolution-independent. [`giou`] extends IoU with the usual enclosing-box
//! penalty and ranges over `(-1, 1]`; [`tube_siou`] lifts per-frame IoU to a
//! track by averaging over an explicit frame set with missing boxes scored
//! as 0.
//!
//! [`reference_losses`] reproduces the training objective on one clip: a
//! gIoU term and an L1 term averaged over *visible* (frame, object) pairs —
//! frames where the ground truth actually has a box — plus a binary
//! cross-entropy term that supervises the objectness scores against the
//! presence mask over *all* (frame, object) pairs. Perturbing predictions
//! on invisible frames therefore cannot change the two box terms at all, a
//! property the test suite checks bit-for-bit.

use std::collections::{BTreeMap, BTreeSet};

use crate::types::{BoundingBox, GroundedVideoRecord, LossWeights, RawPrediction, Track};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the log in
/// the cross-entropy term, so an objectness of exactly 0 or 1 stays finite.
pub const BCE_EPS: f64 = 1e-7;

/// Intersection-over-union of two valid boxes, in `[0, 1]`. The ratio is
/// clamped at 1 so identical boxes score exactly 1 despite the right edge
/// `x + w` rounding differently than the width.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2().min(b.x2()) - a.x.max(b.x)).max(0.0);
    let ih = (a.y2().min(b.y2()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).min(1.0)
}

/// Generalized IoU: `iou - (C - union) / C` where `C` is the area of the
/// smallest box enclosing both. Equal to IoU when the boxes touch or
/// overlap tightly; tends to -1 as the boxes separate.
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2().min(b.x2()) - a.x.max(b.x)).max(0.0);
    let ih = (a.y2().min(b.y2()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    let cw = a.x2().max(b.x2()) - a.x.min(b.x);
    let ch = a.y2().max(b.y2()) - a.y.min(b.y);
    let enclosing = cw * ch;
    if union <= 0.0 || enclosing <= 0.0 {
        return 0.0;
    }
    (inter / union - (enclosing - union) / enclosing).clamp(-1.0, 1.0)
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("empty frame set")]
    EmptyFrameSet,
}

/// Spatio-temporal IoU of two tracks over an explicit frame set: the mean
/// of per-frame IoU, where a frame on which either track has no box scores
/// 0. Duplicate frames in `frames` are ignored.
pub fn tube_siou(pred: &Track, gt: &Track, frames: &[u32]) -> Result<f64, GeometryError> {
    let set: BTreeSet<u32> = frames.iter().copied().collect();
    if set.is_empty() {
        return Err(GeometryError::EmptyFrameSet);
    }
    let by_frame = |t: &Track| -> BTreeMap<u32, BoundingBox> {
        t.entries.iter().map(|e| (e.frame_index, e.bbox)).collect()
    };
    let (p, g) = (by_frame(pred), by_frame(gt));
    let sum: f64 = set
        .iter()
        .map(|f| match (p.get(f), g.get(f)) {
            (Some(a), Some(b)) => iou(a, b),
            _ => 0.0,
        })
        .sum();
    Ok(sum / set.len() as f64)
}

/// The four loss components and their weighted total. `total` is always
/// exactly `lambda_lm*l_lm + lambda_giou*l_giou + lambda_l1*l_l1 +
/// lambda_tobj*l_tobj`, evaluated left to right, so recomputing that
/// expression from the components reproduces `total` bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_lm: f64,
    pub l_giou: f64,
    pub l_l1: f64,
    pub l_tobj: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Assemble a breakdown from its components, computing the weighted
    /// total in the canonical expression order.
    pub fn compose(l_lm: f64, l_giou: f64, l_l1: f64, l_tobj: f64, w: &LossWeights) -> Self {
        let total =
            w.lambda_lm * l_lm + w.lambda_giou * l_giou + w.lambda_l1 * l_l1 + w.lambda_tobj * l_tobj;
        LossBreakdown {
            l_lm,
            l_giou,
            l_l1,
            l_tobj,
            total,
        }
    }
}

#[derive(Debug, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("clip mismatch: pred {pred:?} vs gt {gt:?}")]
    ClipMismatch { pred: String, gt: String },
    #[error("frame count mismatch: pred {pred} vs gt {gt}")]
    FrameCountMismatch { pred: u32, gt: u32 },
    #[error("phrase sets differ: pred has {pred:?}, gt has {gt:?}")]
    PhraseMismatch { pred: Vec<u32>, gt: Vec<u32> },
    #[error("object for phrase {phrase_id} has {got} frame slots, expected {expected}")]
    SlotCount {
        phrase_id: u32,
        got: usize,
        expected: u32,
    },
    #[error("invalid box for phrase {phrase_id} at frame {frame}: {reason}")]
    InvalidBox {
        phrase_id: u32,
        frame: u32,
        reason: String,
    },
    #[error("objectness {value} for phrase {phrase_id} at frame {frame} outside [0, 1]")]
    InvalidObjectness {
        phrase_id: u32,
        frame: u32,
        value: f64,
    },
}

/// Reference losses of one dense prediction against its ground truth.
///
/// `pred` and `gt` must agree on clip id, frame count, and the set of
/// `phrase_id`s; every object must have exactly `num_frames` slots with
/// valid boxes and objectness in `[0, 1]`.
///
/// * `l_giou` — mean of `1 - giou(pred, gt)` over visible pairs,
/// * `l_l1`   — mean of `|dx| + |dy| + |dw| + |dh|` over visible pairs,
/// * `l_tobj` — mean binary cross-entropy between objectness and the
///   presence mask over all `num_frames x num_objects` pairs,
/// * `l_lm`   — taken from the `l_lm` argument (the language-model loss is
///   computed by the captioning stack, not from boxes); 0 when `None`.
///
/// Degenerate means (no visible pairs, or no objects) are 0. Objects are
/// processed in ascending `phrase_id` order so sums are deterministic.
pub fn reference_losses(
    pred: &RawPrediction,
    gt: &GroundedVideoRecord,
    weights: &LossWeights,
    l_lm: Option<f64>,
) -> Result<LossBreakdown, LossError> {
    if pred.clip_id != gt.clip_id {
        return Err(LossError::ClipMismatch {
            pred: pred.clip_id.clone(),
            gt: gt.clip_id.clone(),
        });
    }
    if pred.num_frames != gt.num_frames {
        return Err(LossError::FrameCountMismatch {
            pred: pred.num_frames,
            gt: gt.num_frames,
        });
    }
    let mut pred_ids: Vec<u32> = pred.objects.iter().map(|o| o.phrase_id).collect();
    pred_ids.sort_unstable();
    let mut gt_ids: Vec<u32> = gt.tracks.iter().map(|t| t.phrase_id).collect();
    gt_ids.sort_unstable();
    if pred_ids != gt_ids || pred_ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(LossError::PhraseMismatch {
            pred: pred_ids,
            gt: gt_ids,
        });
    }

    let mut objects: Vec<_> = pred.objects.iter().collect();
    objects.sort_unstable_by_key(|o| o.phrase_id);

    let mut giou_sum = 0.0;
    let mut l1_sum = 0.0;
    let mut visible = 0usize;
    let mut bce_sum = 0.0;
    let mut all = 0usize;

    for obj in objects {
        if obj.frames.len() != pred.num_frames as usize {
            return Err(LossError::SlotCount {
                phrase_id: obj.phrase_id,
                got: obj.frames.len(),
                expected: pred.num_frames,
            });
        }
        let track = gt
            .tracks
            .iter()
            .find(|t| t.phrase_id == obj.phrase_id)
            .expect("phrase sets already checked equal");
        let gt_boxes: BTreeMap<u32, BoundingBox> =
            track.entries.iter().map(|e| (e.frame_index, e.bbox)).collect();

        for (t, slot) in obj.frames.iter().enumerate() {
            let frame = t as u32;
            if let Some(reason) = slot.bbox.validity_error() {
                return Err(LossError::InvalidBox {
                    phrase_id: obj.phrase_id,
                    frame,
                    reason,
                });
            }
            if !(slot.objectness.is_finite() && (0.0..=1.0).contains(&slot.objectness)) {
                return Err(LossError::InvalidObjectness {
                    phrase_id: obj.phrase_id,
                    frame,
                    value: slot.objectness,
                });
            }
            let gt_box = gt_boxes.get(&frame);
            if let Some(g) = gt_box {
                giou_sum += 1.0 - giou(&slot.bbox, g);
                l1_sum += (slot.bbox.x - g.x).abs()
                    + (slot.bbox.y - g.y).abs()
                    + (slot.bbox.w - g.w).abs()
                    + (slot.bbox.h - g.h).abs();
                visible += 1;
            }
            let p = slot.objectness.clamp(BCE_EPS, 1.0 - BCE_EPS);
            let m = if gt_box.is_some() { 1.0 } else { 0.0 };
            bce_sum += -(m * p.ln() + (1.0 - m) * (1.0 - p).ln());
            all += 1;
        }
    }

    let l_giou = if visible > 0 { giou_sum / visible as f64 } else { 0.0 };
    let l_l1 = if visible > 0 { l1_sum / visible as f64 } else { 0.0 };
    let l_tobj = if all > 0 { bce_sum / all as f64 } else { 0.0 };
    Ok(LossBreakdown::compose(
        l_lm.unwrap_or(0.0),
        l_giou,
        l_l1,
        l_tobj,
        weights,
    ))
}
