//! Frame-sampling policies, inference post-processing, and dataset
//! statistics.
//!
//! Sampling splits a video into `t` contiguous segments with boundaries
//! `floor(i·N/t)`, which covers all `N` frames with segment sizes differing
//! by at most one. Evaluation uses each segment's center frame so runs are
//! reproducible without any seed; training draws one uniform frame per
//! segment and is deterministic given a seed.
//!
//! Post-processing turns dense per-frame model output into tracks by
//! keeping exactly the boxes whose temporal objectness reaches the
//! threshold (boxes at the threshold are kept). Kept boxes carry their
//! objectness as the box score.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{GroundedVideoRecord, RawPrediction, Track, TrackEntry};

/// Whether frame sampling draws randomly (training) or deterministically
/// picks segment centers (evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Train,
    Test,
}

#[derive(Debug, Error, PartialEq)]
pub enum PrepError {
    #[error("cannot sample {t} frames from a {num_frames}-frame video")]
    TooFewFrames { num_frames: u32, t: u32 },
    #[error("segment count must be positive")]
    ZeroSegments,
    #[error("no records supplied")]
    EmptyDataset,
    #[error("record {clip_id} has a nonfinite or nonpositive fps")]
    BadFps { clip_id: String },
    #[error("raw prediction and metadata disagree: {0}")]
    MetaMismatch(String),
}

/// Samples `t` strictly increasing frame indices from a `num_frames`-frame
/// video, one per contiguous segment. `Test` mode returns segment centers
/// and ignores the seed; `Train` mode draws uniformly within each segment,
/// deterministically when a seed is given.
pub fn sample_frames(
    num_frames: u32,
    t: u32,
    mode: SamplingMode,
    seed: Option<u64>,
) -> Result<Vec<u32>, PrepError> {
    if t == 0 {
        return Err(PrepError::ZeroSegments);
    }
    if num_frames < t {
        return Err(PrepError::TooFewFrames { num_frames, t });
    }
    let boundary = |i: u32| -> u32 { (u64::from(i) * u64::from(num_frames) / u64::from(t)) as u32 };
    let mut rng: Option<Box<dyn RngCore>> = match mode {
        SamplingMode::Test => None,
        SamplingMode::Train => Some(match seed {
            Some(s) => Box::new(ChaCha8Rng::seed_from_u64(s)),
            None => Box::new(rand::rng()),
        }),
    };
    let mut indices = Vec::with_capacity(t as usize);
    for i in 0..t {
        let (lo, hi) = (boundary(i), boundary(i + 1));
        indices.push(match &mut rng {
            None => (lo + hi - 1) / 2,
            Some(rng) => rng.random_range(lo..hi),
        });
    }
    Ok(indices)
}

/// Converts dense raw model output into tracks, keeping each box iff its
/// objectness is at least `tau`. Kept boxes carry their objectness as the
/// box score; objects with no kept frame yield no track.
pub fn apply_objectness_threshold(raw: &RawPrediction, tau: f64) -> Vec<Track> {
    raw.objects
        .iter()
        .filter_map(|object| {
            let entries: Vec<TrackEntry> = object
                .frames
                .iter()
                .enumerate()
                .filter(|(_, frame)| frame.objectness >= tau)
                .map(|(i, frame)| TrackEntry {
                    frame_index: i as u32,
                    bbox: frame.bbox,
                    score: Some(frame.objectness),
                })
                .collect();
            (!entries.is_empty()).then_some(Track {
                phrase_id: object.phrase_id,
                entries,
            })
        })
        .collect()
}

/// Builds a complete prediction record by thresholding `raw` and grafting
/// the surviving tracks onto `meta`, which supplies the caption, phrase
/// table, and video metadata for the same clip (typically the
/// annotation-stage output). The clip ids and frame counts must agree.
pub fn raw_to_record(
    raw: &RawPrediction,
    meta: &GroundedVideoRecord,
    tau: f64,
) -> Result<GroundedVideoRecord, PrepError> {
    if raw.clip_id != meta.clip_id {
        return Err(PrepError::MetaMismatch(format!(
            "clip {:?} vs {:?}",
            raw.clip_id, meta.clip_id
        )));
    }
    if raw.num_frames != meta.num_frames {
        return Err(PrepError::MetaMismatch(format!(
            "clip {:?} has {} frames in the raw prediction but {} in the metadata",
            raw.clip_id, raw.num_frames, meta.num_frames
        )));
    }
    let mut record = meta.clone();
    record.tracks = apply_objectness_threshold(raw, tau);
    Ok(record)
}

/// Corpus-level summary statistics of a set of grounded video records.
/// Box sizes are denormalized to pixels via each record's width/height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub avg_frames_per_video: f64,
    pub avg_duration_s: f64,
    pub avg_instances_per_video: f64,
    pub total_instances: u64,
    pub avg_box_w_px: f64,
    pub avg_box_h_px: f64,
    pub avg_tube_length_frames: f64,
    pub avg_caption_length_words: f64,
}

/// Computes [`DatasetStats`] over the records. An instance is one box entry
/// of one track; tube length is the entry count of a track; caption length
/// is the whitespace-token count.
pub fn dataset_stats(records: &[GroundedVideoRecord]) -> Result<DatasetStats, PrepError> {
    if records.is_empty() {
        return Err(PrepError::EmptyDataset);
    }
    let n = records.len() as f64;
    let mut frames_sum = 0.0;
    let mut duration_sum = 0.0;
    let mut caption_words_sum = 0.0;
    let mut total_instances: u64 = 0;
    let mut total_tracks: u64 = 0;
    let mut box_w_sum = 0.0;
    let mut box_h_sum = 0.0;
    for record in records {
        if !record.fps.is_finite() || record.fps <= 0.0 {
            return Err(PrepError::BadFps {
                clip_id: record.clip_id.clone(),
            });
        }
        frames_sum += f64::from(record.num_frames);
        duration_sum += f64::from(record.num_frames) / record.fps;
        caption_words_sum += record.caption.split_whitespace().count() as f64;
        for track in &record.tracks {
            total_tracks += 1;
            total_instances += track.entries.len() as u64;
            for entry in &track.entries {
                box_w_sum += entry.bbox.w * f64::from(record.width);
                box_h_sum += entry.bbox.h * f64::from(record.height);
            }
        }
    }
    let per_instance = |sum: f64| {
        if total_instances == 0 {
            0.0
        } else {
            sum / total_instances as f64
        }
    };
    Ok(DatasetStats {
        avg_frames_per_video: frames_sum / n,
        avg_duration_s: duration_sum / n,
        avg_instances_per_video: total_instances as f64 / n,
        total_instances,
        avg_box_w_px: per_instance(box_w_sum),
        avg_box_h_px: per_instance(box_h_sum),
        avg_tube_length_frames: if total_tracks == 0 {
            0.0
        } else {
            total_instances as f64 / total_tracks as f64
        },
        avg_caption_length_words: caption_words_sum / n,
    })
}
