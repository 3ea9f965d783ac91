//! The two LLM stages of the automatic annotation method: video-level
//! caption aggregation and temporally consistent phrase classification,
//! composed over ingested frame-level annotations.
//!
//! Per clip the pipeline (1) reduces each frame caption to SVO triplets,
//! (2) asks the LLM for one tagged video-level caption, (3) classifies every
//! frame-level phrase against the caption's tagged phrases (the None class
//! absorbs phrases grounded in no video-level phrase), and (4) assembles the
//! classified boxes into per-phrase tracks. Every output box is bit-equal to
//! an input frame box — the pipeline relabels detections, it never invents
//! or adjusts geometry (beyond the documented minimum-side clamp applied at
//! ingestion).
//!
//! Failure policy: transport-level LLM failures (network, timeout, exhausted
//! retries, unexpected HTTP status) abort the whole run, since continuing
//! would silently drop clips on infrastructure problems. Semantic failures —
//! malformed responses, captions with no tagged phrase — consume the
//! configured retries and then send the clip to the rejects list, so noisy
//! model output degrades visibly rather than fatally. A classification that
//! names a string outside the category list is retried, then degrades to the
//! None class with a logged warning.
//!
//! Classification is cached per unique frame-phrase string within a clip:
//! repeated detections of "a spoon" across frames ask the LLM once.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::iou;
use crate::llm::{ChatClient, LlmError};
use crate::prompts::{build_stage2_prompt, build_stage3_prompt, PromptError};
use crate::svo::{extract_svo, SvoTriplet};
use crate::tagparse::{parse_llm_dict, parse_tagged_caption};
use crate::types::{
    validate_frame, validate_record, BoundingBox, FrameAnnotation, GroundedVideoRecord,
    PhraseSpan, Track, TrackEntry,
};

/// Knobs of the annotation pipeline. Defaults: 2 retries for malformed
/// responses, 4 in-flight LLM calls, deterministic decoding, and the video
/// metadata (fps 5, 455×256) recorded on output records when the source
/// frames carry none.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Retries after the first attempt when a response is malformed.
    pub max_retries: u32,
    /// Upper bound on concurrently processed clips (and therefore on
    /// in-flight LLM requests, since each clip issues one call at a time).
    pub max_concurrency: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Minimum box side enforced at ingestion; degenerate zero-area
    /// detections are widened to this.
    pub min_box_side: f64,
    /// Frame rate recorded on output records.
    pub fps: f64,
    /// Pixel dimensions recorded on output records.
    pub width: u32,
    pub height: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_retries: 2,
            max_concurrency: 4,
            temperature: 0.0,
            max_tokens: 512,
            min_box_side: 1e-4,
            fps: 5.0,
            width: 455,
            height: 256,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no frames supplied")]
    NoFrames,
    #[error("frames span multiple clips: {0:?} and {1:?}")]
    MixedClips(String, String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("malformed response after {attempts} attempts: {reason}")]
    MalformedResponse { attempts: u32, reason: String },
    #[error("assignment references no input frame box: {0}")]
    DanglingAssignment(String),
    #[error("duplicate caption record for clip {0:?}")]
    DuplicateCaption(String),
}

/// True for failures that indicate broken infrastructure rather than a
/// noisy response; these abort a run instead of rejecting one clip.
fn is_transport(err: &LlmError) -> bool {
    matches!(
        err,
        LlmError::Transport(_)
            | LlmError::Timeout { .. }
            | LlmError::RateLimited { .. }
            | LlmError::ServerError { .. }
            | LlmError::HttpStatus { .. }
            | LlmError::InvalidPrompt(_)
    )
}

/// One classified frame-level detection: which video-level phrase (if any)
/// the frame phrase was assigned to, and the exact source box.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseAssignment {
    pub frame_index: u32,
    pub frame_phrase: String,
    /// A video-level phrase text, or `None` for the None class.
    pub assigned: Option<String>,
    pub source_box: BoundingBox,
}

/// A clip the pipeline could not annotate, with a human-readable reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub clip_id: String,
    pub reason: String,
}

/// Result of a pipeline run: one record per successfully annotated clip (in
/// input clip order) plus the rejected clips with reasons.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub records: Vec<GroundedVideoRecord>,
    pub rejects: Vec<Reject>,
}

/// Groups a flat frame stream by clip, preserving first-appearance clip
/// order, and sorts each clip's frames by frame index.
pub fn group_frames_by_clip(frames: Vec<FrameAnnotation>) -> Vec<(String, Vec<FrameAnnotation>)> {
    let mut order: Vec<String> = Vec::new();
    let mut by_clip: HashMap<String, Vec<FrameAnnotation>> = HashMap::new();
    for frame in frames {
        match by_clip.entry(frame.clip_id.clone()) {
            Entry::Vacant(slot) => {
                order.push(frame.clip_id.clone());
                slot.insert(vec![frame]);
            }
            Entry::Occupied(mut slot) => slot.get_mut().push(frame),
        }
    }
    order
        .into_iter()
        .map(|clip_id| {
            let mut frames = by_clip.remove(&clip_id).expect("grouped above");
            frames.sort_by_key(|f| f.frame_index);
            (clip_id, frames)
        })
        .collect()
}

/// Aggregates one clip's frame captions into a tagged video-level caption:
/// extracts SVO triplets per frame and defers to
/// [`aggregate_caption_from_triplets`].
pub fn aggregate_captions(
    frames: &[FrameAnnotation],
    llm: &dyn ChatClient,
    config: &PipelineConfig,
) -> Result<(String, Vec<PhraseSpan>), PipelineError> {
    if frames.is_empty() {
        return Err(PipelineError::NoFrames);
    }
    if let Some(other) = frames.iter().find(|f| f.clip_id != frames[0].clip_id) {
        return Err(PipelineError::MixedClips(
            frames[0].clip_id.clone(),
            other.clip_id.clone(),
        ));
    }
    let frame_triplets: Vec<Vec<SvoTriplet>> = frames
        .iter()
        .map(|f| extract_svo(&f.caption, None))
        .collect();
    aggregate_caption_from_triplets(&frame_triplets, llm, config)
}

/// Asks the LLM for a video-level caption over per-frame triplets and parses
/// the tagged result. Malformed responses (bad dict, bad tags, zero tagged
/// phrases) are retried with the same prompt up to `config.max_retries`
/// times, then reported; transport failures surface immediately.
pub fn aggregate_caption_from_triplets(
    frame_triplets: &[Vec<SvoTriplet>],
    llm: &dyn ChatClient,
    config: &PipelineConfig,
) -> Result<(String, Vec<PhraseSpan>), PipelineError> {
    let mut prompt = build_stage2_prompt(frame_triplets)?;
    prompt.temperature = config.temperature;
    prompt.max_tokens = config.max_tokens;
    let attempts = config.max_retries + 1;
    let mut last_reason = String::new();
    for _ in 0..attempts {
        let response = match llm.complete(&prompt) {
            Ok(r) => r,
            Err(e) if is_transport(&e) => return Err(e.into()),
            Err(e) => {
                last_reason = e.to_string();
                continue;
            }
        };
        match parse_stage2_response(&response) {
            Ok((caption, spans)) if !spans.is_empty() => return Ok((caption, spans)),
            Ok(_) => last_reason = "caption has no tagged phrase".to_string(),
            Err(reason) => last_reason = reason,
        }
    }
    Err(PipelineError::MalformedResponse {
        attempts,
        reason: last_reason,
    })
}

fn parse_stage2_response(response: &str) -> Result<(String, Vec<PhraseSpan>), String> {
    let caption = parse_llm_dict(response, "CAPTION")
        .map_err(|e| e.to_string())?
        .ok_or_else(|| "CAPTION carries the None sentinel".to_string())?;
    parse_tagged_caption(&caption).map_err(|e| e.to_string())
}

/// Classifies one frame-level phrase against the video-level phrases.
/// Returns `None` for the None class. A response naming a string outside
/// `video_phrases` is malformed: it is retried, then degrades to `None`
/// with a logged warning. Only transport failures are errors.
pub fn classify_phrase(
    frame_phrase: &str,
    video_phrases: &[String],
    llm: &dyn ChatClient,
    config: &PipelineConfig,
) -> Result<Option<String>, PipelineError> {
    let mut prompt = build_stage3_prompt(frame_phrase, video_phrases)?;
    prompt.temperature = config.temperature;
    prompt.max_tokens = config.max_tokens;
    let attempts = config.max_retries + 1;
    let mut last_reason = String::new();
    for _ in 0..attempts {
        let response = match llm.complete(&prompt) {
            Ok(r) => r,
            Err(e) if is_transport(&e) => return Err(e.into()),
            Err(e) => {
                last_reason = e.to_string();
                continue;
            }
        };
        match parse_llm_dict(&response, "CATEGORY") {
            Ok(None) => return Ok(None),
            Ok(Some(value)) => {
                if video_phrases.contains(&value) {
                    return Ok(Some(value));
                }
                last_reason = format!("category {value:?} is not a video-level phrase");
            }
            Err(e) => last_reason = e.to_string(),
        }
    }
    log::warn!(
        "phrase {frame_phrase:?} degraded to the None class after {attempts} attempts: \
         {last_reason}"
    );
    Ok(None)
}

/// Builds one track per video-level phrase from classified assignments.
///
/// Every assignment must reference a real (frame, phrase, box) from `frames`
/// bit-exactly, and assigned phrases must be span texts. Within a track at
/// most one box survives per frame: of the candidates, the one with the
/// highest IoU against the track's box in the nearest earlier frame wins,
/// falling back to largest area when the track has no earlier entry. When
/// several spans share one text, the earliest span carries the track.
pub fn assemble_tracks(
    frames: &[FrameAnnotation],
    assignments: &[PhraseAssignment],
    spans: &[PhraseSpan],
) -> Result<Vec<Track>, PipelineError> {
    let by_frame: HashMap<u32, &FrameAnnotation> =
        frames.iter().map(|f| (f.frame_index, f)).collect();
    for a in assignments {
        let frame = by_frame.get(&a.frame_index).ok_or_else(|| {
            PipelineError::DanglingAssignment(format!("no frame {}", a.frame_index))
        })?;
        let exists = frame.phrase_boxes.iter().any(|pb| {
            pb.text == a.frame_phrase && pb.bbox.to_bits() == a.source_box.to_bits()
        });
        if !exists {
            return Err(PipelineError::DanglingAssignment(format!(
                "frame {} has no box for phrase {:?}",
                a.frame_index, a.frame_phrase
            )));
        }
        if let Some(assigned) = &a.assigned {
            if !spans.iter().any(|s| &s.text == assigned) {
                return Err(PipelineError::DanglingAssignment(format!(
                    "assigned phrase {assigned:?} is not a video-level phrase"
                )));
            }
        }
    }

    let mut tracks = Vec::new();
    let mut claimed_texts: Vec<&str> = Vec::new();
    for span in spans {
        if claimed_texts.contains(&span.text.as_str()) {
            continue;
        }
        claimed_texts.push(&span.text);
        let mut per_frame: BTreeMap<u32, Vec<BoundingBox>> = BTreeMap::new();
        for a in assignments {
            if a.assigned.as_deref() == Some(span.text.as_str()) {
                per_frame.entry(a.frame_index).or_default().push(a.source_box);
            }
        }
        let mut entries: Vec<TrackEntry> = Vec::new();
        for (frame_index, candidates) in per_frame {
            let bbox = match entries.last() {
                Some(prev) => pick_by(&candidates, |b| iou(b, &prev.bbox)),
                None => pick_by(&candidates, BoundingBox::area),
            };
            entries.push(TrackEntry {
                frame_index,
                bbox,
                score: None,
            });
        }
        if !entries.is_empty() {
            tracks.push(Track {
                phrase_id: span.id,
                entries,
            });
        }
    }
    Ok(tracks)
}

/// Deterministically picks the candidate maximizing `key`, breaking exact
/// ties by larger area and then by coordinate bits.
fn pick_by(candidates: &[BoundingBox], key: impl Fn(&BoundingBox) -> f64) -> BoundingBox {
    *candidates
        .iter()
        .max_by(|a, b| {
            (key(a), a.area(), a.to_bits())
                .partial_cmp(&(key(b), b.area(), b.to_bits()))
                .expect("finite box metrics")
        })
        .expect("at least one candidate per frame")
}

enum ClipOutcome {
    Record(Box<GroundedVideoRecord>),
    Reject(String),
}

/// Shared scaffold of the pipeline entry points: processes clips with a
/// bounded worker pool, keeping output in input clip order. Only the first
/// `Err` from `per_clip` (a transport-level failure) aborts the run.
fn run_clips<F>(
    clips: &[(String, Vec<FrameAnnotation>)],
    max_concurrency: usize,
    per_clip: F,
) -> Result<PipelineOutput, PipelineError>
where
    F: Fn(&str, &[FrameAnnotation]) -> Result<ClipOutcome, PipelineError> + Sync,
{
    let outcomes: Vec<OnceLock<ClipOutcome>> = clips.iter().map(|_| OnceLock::new()).collect();
    let fatal: OnceLock<PipelineError> = OnceLock::new();
    let next = AtomicUsize::new(0);
    let workers = max_concurrency.max(1).min(clips.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if fatal.get().is_some() {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= clips.len() {
                    break;
                }
                let (clip_id, frames) = &clips[i];
                match per_clip(clip_id, frames) {
                    Ok(outcome) => {
                        let _ = outcomes[i].set(outcome);
                    }
                    Err(e) => {
                        let _ = fatal.set(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = fatal.into_inner() {
        return Err(e);
    }
    let mut output = PipelineOutput {
        records: Vec::new(),
        rejects: Vec::new(),
    };
    for ((clip_id, _), outcome) in clips.iter().zip(outcomes) {
        match outcome.into_inner().expect("every clip processed") {
            ClipOutcome::Record(record) => output.records.push(*record),
            ClipOutcome::Reject(reason) => output.rejects.push(Reject {
                clip_id: clip_id.clone(),
                reason,
            }),
        }
    }
    Ok(output)
}

/// Runs the full pipeline over clips (as produced by
/// [`group_frames_by_clip`]), processing up to `config.max_concurrency`
/// clips in parallel. Output records keep input clip order; clips whose
/// annotation fails semantically land in the rejects list. Only transport
/// failures abort the run.
pub fn run_pipeline(
    clips: &[(String, Vec<FrameAnnotation>)],
    llm: &dyn ChatClient,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    run_clips(clips, config.max_concurrency, |clip_id, frames| {
        process_clip(clip_id, frames, llm, config)
    })
}

/// Runs caption aggregation alone over clips: each output record carries the
/// video-level caption, phrase table, and video metadata but no tracks.
/// Persist the records and feed them to [`run_association`] to ground the
/// phrases later. Rejects and concurrency behave as in [`run_pipeline`].
pub fn run_aggregation(
    clips: &[(String, Vec<FrameAnnotation>)],
    llm: &dyn ChatClient,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    run_clips(clips, config.max_concurrency, |clip_id, frames| {
        let frames = match ingest_frames(frames, config) {
            Ok(frames) => frames,
            Err(reason) => return Ok(ClipOutcome::Reject(reason)),
        };
        let (caption, spans) = match aggregate_captions(&frames, llm, config) {
            Ok(result) => result,
            Err(PipelineError::Llm(e)) => return Err(PipelineError::Llm(e)),
            Err(semantic) => return Ok(ClipOutcome::Reject(semantic.to_string())),
        };
        Ok(finalize(caption_record(clip_id, &frames, caption, spans, config)))
    })
}

/// Runs phrase classification and track assembly alone, grounding existing
/// video-level captions (track-less records, typically [`run_aggregation`]
/// output) with the clips' frame detections. Clips without a caption record
/// and caption records without frames are rejected, not dropped; tracks
/// already present on a caption record are discarded and rebuilt.
pub fn run_association(
    clips: &[(String, Vec<FrameAnnotation>)],
    captions: &[GroundedVideoRecord],
    llm: &dyn ChatClient,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let mut by_clip: HashMap<&str, &GroundedVideoRecord> = HashMap::new();
    for record in captions {
        if by_clip.insert(record.clip_id.as_str(), record).is_some() {
            return Err(PipelineError::DuplicateCaption(record.clip_id.clone()));
        }
    }
    let mut output = run_clips(clips, config.max_concurrency, |clip_id, frames| {
        let Some(meta) = by_clip.get(clip_id) else {
            return Ok(ClipOutcome::Reject("no caption record for clip".to_string()));
        };
        let frames = match ingest_frames(frames, config) {
            Ok(frames) => frames,
            Err(reason) => return Ok(ClipOutcome::Reject(reason)),
        };
        let meta = GroundedVideoRecord {
            tracks: Vec::new(),
            ..(*meta).clone()
        };
        ground_with_meta(&frames, meta, llm, config)
    })?;
    let with_frames: std::collections::HashSet<&str> =
        clips.iter().map(|(clip_id, _)| clip_id.as_str()).collect();
    for record in captions {
        if !with_frames.contains(record.clip_id.as_str()) {
            output.rejects.push(Reject {
                clip_id: record.clip_id.clone(),
                reason: "caption record has no frames".to_string(),
            });
        }
    }
    Ok(output)
}

/// Validates one clip's frames and applies the ingestion clamp (degenerate
/// boxes are widened to the minimum side so later geometry never divides by
/// a zero area). `Err` carries a per-clip rejection reason.
fn ingest_frames(
    frames: &[FrameAnnotation],
    config: &PipelineConfig,
) -> Result<Vec<FrameAnnotation>, String> {
    if frames.is_empty() {
        return Err("no frames".to_string());
    }
    let violations: Vec<String> = frames
        .iter()
        .flat_map(validate_frame)
        .map(|v| v.to_string())
        .collect();
    if !violations.is_empty() {
        return Err(format!("invalid frames: {}", violations.join("; ")));
    }
    Ok(frames
        .iter()
        .map(|f| {
            let mut f = f.clone();
            for pb in &mut f.phrase_boxes {
                pb.bbox = pb.bbox.clamp_min_side(config.min_box_side);
            }
            f
        })
        .collect())
}

/// A track-less record holding one clip's caption, phrase table, and video
/// metadata (frame count from the frames, the rest from the config).
fn caption_record(
    clip_id: &str,
    frames: &[FrameAnnotation],
    caption: String,
    spans: Vec<PhraseSpan>,
    config: &PipelineConfig,
) -> GroundedVideoRecord {
    let num_frames = frames.iter().map(|f| f.frame_index).max().unwrap_or(0) + 1;
    GroundedVideoRecord {
        clip_id: clip_id.to_string(),
        num_frames,
        fps: config.fps,
        width: config.width,
        height: config.height,
        caption,
        phrases: spans,
        tracks: Vec::new(),
    }
}

/// Classifies every frame-level phrase against `meta`'s phrase texts (one
/// LLM call per unique phrase string), assembles tracks, and validates the
/// completed record. `Err` only for transport failures.
fn ground_with_meta(
    frames: &[FrameAnnotation],
    meta: GroundedVideoRecord,
    llm: &dyn ChatClient,
    config: &PipelineConfig,
) -> Result<ClipOutcome, PipelineError> {
    let mut video_phrases: Vec<String> = Vec::new();
    for span in &meta.phrases {
        if !video_phrases.contains(&span.text) {
            video_phrases.push(span.text.clone());
        }
    }

    let mut cache: HashMap<String, Option<String>> = HashMap::new();
    let mut assignments = Vec::new();
    for frame in frames {
        for pb in &frame.phrase_boxes {
            let assigned = match cache.entry(pb.text.clone()) {
                Entry::Occupied(slot) => slot.get().clone(),
                Entry::Vacant(slot) => {
                    let result = classify_phrase(&pb.text, &video_phrases, llm, config)?;
                    slot.insert(result.clone());
                    result
                }
            };
            assignments.push(PhraseAssignment {
                frame_index: frame.frame_index,
                frame_phrase: pb.text.clone(),
                assigned,
                source_box: pb.bbox,
            });
        }
    }

    let tracks = assemble_tracks(frames, &assignments, &meta.phrases)?;
    Ok(finalize(GroundedVideoRecord { tracks, ..meta }))
}

/// Final gate of every pipeline entry point: a record that fails validation
/// becomes a rejection, never output.
fn finalize(record: GroundedVideoRecord) -> ClipOutcome {
    let violations = validate_record(&record);
    if violations.is_empty() {
        ClipOutcome::Record(Box::new(record))
    } else {
        let reasons: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        ClipOutcome::Reject(format!(
            "assembled record is invalid: {}",
            reasons.join("; ")
        ))
    }
}

/// Annotates one clip. `Err` only for failures that must abort the run.
fn process_clip(
    clip_id: &str,
    frames: &[FrameAnnotation],
    llm: &dyn ChatClient,
    config: &PipelineConfig,
) -> Result<ClipOutcome, PipelineError> {
    let frames = match ingest_frames(frames, config) {
        Ok(frames) => frames,
        Err(reason) => return Ok(ClipOutcome::Reject(reason)),
    };
    let (caption, spans) = match aggregate_captions(&frames, llm, config) {
        Ok(result) => result,
        Err(PipelineError::Llm(e)) => return Err(PipelineError::Llm(e)),
        Err(semantic) => return Ok(ClipOutcome::Reject(semantic.to_string())),
    };
    let meta = caption_record(clip_id, &frames, caption, spans, config);
    ground_with_meta(&frames, meta, llm, config)
}
