//! Core record model for grounded video captions.
//!
//! The unit of data is a [`GroundedVideoRecord`]: one clip, one video-level
//! caption, a set of [`PhraseSpan`]s into that caption, and one box
//! [`Track`] per grounded span. Presence is encoded structurally — a phrase
//! is visible in frame `t` exactly when its track contains an entry with
//! `frame_index == t` — so occluded or out-of-frame stretches are simply
//! missing entries.
//!
//! All invariants are checked by [`validate_record`], which returns a list
//! of [`Violation`]s instead of failing fast; callers that want an
//! everything-or-nothing gate (e.g. [`crate::jsonl::save_records`]) treat a
//! non-empty list as an error.

use serde::{Deserialize, Serialize};

/// Tolerance for the `x + w <= 1` / `y + h <= 1` edge checks, so boxes that
/// touch the right/bottom frame edge survive a round-trip through decimal
/// serialization.
pub const EDGE_EPS: f64 = 1e-6;

/// Axis-aligned box as fractions of the frame: `[x, y, w, h]` with `(x, y)`
/// the top-left corner. Serializes as a bare 4-element JSON array.
///
/// A box is valid when all fields are finite, `0 <= x, y <= 1`, `w > 0`,
/// `h > 0`, and `x + w`, `y + h` do not exceed `1` by more than [`EDGE_EPS`].
/// Zero-width and zero-height boxes are invalid; upstream sources that emit
/// degenerate boxes should clamp them first (see
/// [`BoundingBox::clamp_min_side`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", from = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BoundingBox { x, y, w, h }
    }

    /// Right edge (`x + w`).
    pub fn x2(&self) -> f64 {
        self.x + self.w
    }

    /// Bottom edge (`y + h`).
    pub fn y2(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// First violated validity rule, if any, as a short description.
    pub fn validity_error(&self) -> Option<String> {
        let BoundingBox { x, y, w, h } = *self;
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Some("non-finite coordinate".into());
        }
        if !(0.0..=1.0).contains(&x) {
            return Some(format!("x = {x} outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&y) {
            return Some(format!("y = {y} outside [0, 1]"));
        }
        if w <= 0.0 {
            return Some(format!("w = {w} not positive"));
        }
        if h <= 0.0 {
            return Some(format!("h = {h} not positive"));
        }
        if x + w > 1.0 + EDGE_EPS {
            return Some(format!("x + w = {} exceeds 1", x + w));
        }
        if y + h > 1.0 + EDGE_EPS {
            return Some(format!("y + h = {} exceeds 1", y + h));
        }
        None
    }

    pub fn is_valid(&self) -> bool {
        self.validity_error().is_none()
    }

    /// Grow degenerate sides up to `min_side`, nudging the origin left/up if
    /// the grown box would spill past the frame edge. Used at pipeline
    /// ingestion so point annotations survive validation.
    pub fn clamp_min_side(&self, min_side: f64) -> BoundingBox {
        let mut b = *self;
        if b.w < min_side {
            b.w = min_side;
            b.x = b.x.min(1.0 - min_side).max(0.0);
        }
        if b.h < min_side {
            b.h = min_side;
            b.y = b.y.min(1.0 - min_side).max(0.0);
        }
        b
    }

    /// Exact bit pattern of the four coordinates; lets tests assert that a
    /// box was carried through a pipeline without any arithmetic applied.
    pub fn to_bits(&self) -> [u64; 4] {
        [
            self.x.to_bits(),
            self.y.to_bits(),
            self.w.to_bits(),
            self.h.to_bits(),
        ]
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> [f64; 4] {
        [b.x, b.y, b.w, b.h]
    }
}

impl From<[f64; 4]> for BoundingBox {
    fn from(a: [f64; 4]) -> BoundingBox {
        BoundingBox::new(a[0], a[1], a[2], a[3])
    }
}

/// A noun phrase of the video-level caption, located by byte offsets into
/// the clean (tag-free) caption text. `caption[char_start..char_end]` must
/// equal `text` exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseSpan {
    pub id: u32,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

/// One frame of a track: the phrase is visible in `frame_index` at `box`.
/// `score` is an optional confidence in `[0, 1]`; ground-truth annotations
/// leave it absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub frame_index: u32,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// The box track grounding one phrase. Entries are sorted by strictly
/// increasing `frame_index`; frames without an entry mean the object is not
/// visible there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub phrase_id: u32,
    #[serde(rename = "boxes")]
    pub entries: Vec<TrackEntry>,
}

/// A phrase/box pair inside a single-frame annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseBox {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

/// One captioned frame with localized noun phrases — the raw material the
/// annotation pipeline consumes (frame-level captions from an image
/// grounding model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub clip_id: String,
    pub frame_index: u32,
    pub timestamp_s: f64,
    pub caption: String,
    #[serde(rename = "phrases")]
    pub phrase_boxes: Vec<PhraseBox>,
}

/// A fully grounded clip: video-level caption, phrase spans, box tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedVideoRecord {
    pub clip_id: String,
    pub num_frames: u32,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub caption: String,
    pub phrases: Vec<PhraseSpan>,
    pub tracks: Vec<Track>,
}

/// Model output before objectness thresholding: for every object query, one
/// box and one objectness score per frame (dense `num_frames` slots).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPrediction {
    pub clip_id: String,
    pub num_frames: u32,
    pub objects: Vec<RawObject>,
}

/// One object query of a [`RawPrediction`]; `frames` has exactly
/// `num_frames` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObject {
    pub phrase_id: u32,
    pub frames: Vec<RawFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFrame {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub objectness: f64,
}

/// Weights of the training reference loss
/// `total = lambda_lm*l_lm + lambda_giou*l_giou + lambda_l1*l_l1 + lambda_tobj*l_tobj`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_lm: f64,
    pub lambda_giou: f64,
    pub lambda_l1: f64,
    pub lambda_tobj: f64,
}

impl Default for LossWeights {
    /// The reference configuration: `(1, 2, 2, 2)`.
    fn default() -> Self {
        LossWeights {
            lambda_lm: 1.0,
            lambda_giou: 2.0,
            lambda_l1: 2.0,
            lambda_tobj: 2.0,
        }
    }
}

/// One violated invariant found by validation: which clip, which field
/// (dotted path with indices, e.g. `tracks[0].boxes[2].box`), and the rule
/// that failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub clip_id: String,
    pub field: String,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}: {}", self.clip_id, self.field, self.rule)
    }
}

fn push(out: &mut Vec<Violation>, clip_id: &str, field: String, rule: impl Into<String>) {
    out.push(Violation {
        clip_id: clip_id.to_string(),
        field,
        rule: rule.into(),
    });
}

fn check_box(out: &mut Vec<Violation>, clip_id: &str, field: String, b: &BoundingBox) {
    if let Some(err) = b.validity_error() {
        push(out, clip_id, field, err);
    }
}

/// Check every invariant of a [`GroundedVideoRecord`] and report all
/// violations (an empty vector means the record is well-formed):
///
/// * `num_frames > 0`, `fps` finite and positive, `width`/`height` nonzero;
/// * every box valid (see [`BoundingBox::validity_error`]);
/// * spans: `char_start < char_end`, offsets on byte boundaries of the
///   caption with `caption[char_start..char_end] == text`, unique ids,
///   sorted by `char_start` and non-overlapping;
/// * tracks: `phrase_id` references an existing span, at most one track per
///   phrase, strictly increasing `frame_index` all below `num_frames`,
///   scores (when present) finite in `[0, 1]`.
pub fn validate_record(record: &GroundedVideoRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let id = record.clip_id.as_str();

    if record.clip_id.is_empty() {
        push(&mut out, id, "clip_id".into(), "empty clip_id");
    }
    if record.num_frames == 0 {
        push(&mut out, id, "num_frames".into(), "num_frames must be > 0");
    }
    if !(record.fps.is_finite() && record.fps > 0.0) {
        push(
            &mut out,
            id,
            "fps".into(),
            format!("fps = {} not positive", record.fps),
        );
    }
    if record.width == 0 {
        push(&mut out, id, "width".into(), "width must be > 0");
    }
    if record.height == 0 {
        push(&mut out, id, "height".into(), "height must be > 0");
    }

    let caption = record.caption.as_str();
    let mut seen_ids = std::collections::HashSet::new();
    for (i, span) in record.phrases.iter().enumerate() {
        let field = |name: &str| format!("phrases[{i}].{name}");
        if !seen_ids.insert(span.id) {
            push(&mut out, id, field("id"), format!("duplicate id {}", span.id));
        }
        if span.char_start >= span.char_end {
            push(
                &mut out,
                id,
                field("char_end"),
                format!("inverted span [{}, {})", span.char_start, span.char_end),
            );
        } else if span.char_end > caption.len()
            || !caption.is_char_boundary(span.char_start)
            || !caption.is_char_boundary(span.char_end)
        {
            push(
                &mut out,
                id,
                field("char_end"),
                format!(
                    "span [{}, {}) outside caption of {} bytes",
                    span.char_start,
                    span.char_end,
                    caption.len()
                ),
            );
        } else if caption[span.char_start..span.char_end] != span.text {
            push(
                &mut out,
                id,
                field("text"),
                format!(
                    "text {:?} does not match caption slice {:?}",
                    span.text,
                    &caption[span.char_start..span.char_end]
                ),
            );
        }
        if i > 0 {
            let prev = &record.phrases[i - 1];
            if span.char_start < prev.char_start {
                push(&mut out, id, field("char_start"), "spans not sorted by char_start");
            } else if span.char_start < prev.char_end {
                push(
                    &mut out,
                    id,
                    field("char_start"),
                    format!("overlaps previous span ending at {}", prev.char_end),
                );
            }
        }
    }

    let mut seen_tracks = std::collections::HashSet::new();
    for (ti, track) in record.tracks.iter().enumerate() {
        if !record.phrases.iter().any(|p| p.id == track.phrase_id) {
            push(
                &mut out,
                id,
                format!("tracks[{ti}].phrase_id"),
                format!("dangling phrase_id {}", track.phrase_id),
            );
        }
        if !seen_tracks.insert(track.phrase_id) {
            push(
                &mut out,
                id,
                format!("tracks[{ti}].phrase_id"),
                format!("more than one track for phrase_id {}", track.phrase_id),
            );
        }
        for (ei, entry) in track.entries.iter().enumerate() {
            if entry.frame_index >= record.num_frames {
                push(
                    &mut out,
                    id,
                    format!("tracks[{ti}].boxes[{ei}].frame_index"),
                    format!(
                        "frame_index {} out of range (num_frames {})",
                        entry.frame_index, record.num_frames
                    ),
                );
            }
            if ei > 0 && entry.frame_index <= track.entries[ei - 1].frame_index {
                push(
                    &mut out,
                    id,
                    format!("tracks[{ti}].boxes[{ei}].frame_index"),
                    "frame_index not strictly increasing",
                );
            }
            check_box(
                &mut out,
                id,
                format!("tracks[{ti}].boxes[{ei}].box"),
                &entry.bbox,
            );
            if let Some(s) = entry.score {
                if !(s.is_finite() && (0.0..=1.0).contains(&s)) {
                    push(
                        &mut out,
                        id,
                        format!("tracks[{ti}].boxes[{ei}].score"),
                        format!("score = {s} outside [0, 1]"),
                    );
                }
            }
        }
    }
    out
}

/// Ingestion checks for a single frame annotation: nonempty clip id and
/// phrase texts, valid boxes. Used by the pipeline before aggregation.
pub fn validate_frame(frame: &FrameAnnotation) -> Vec<Violation> {
    let mut out = Vec::new();
    let id = frame.clip_id.as_str();
    if frame.clip_id.is_empty() {
        push(&mut out, id, "clip_id".into(), "empty clip_id");
    }
    if !frame.timestamp_s.is_finite() || frame.timestamp_s < 0.0 {
        push(
            &mut out,
            id,
            "timestamp_s".into(),
            format!("timestamp_s = {} not a non-negative time", frame.timestamp_s),
        );
    }
    for (i, pb) in frame.phrase_boxes.iter().enumerate() {
        if pb.text.trim().is_empty() {
            push(&mut out, id, format!("phrases[{i}].text"), "empty phrase text");
        }
        check_box(&mut out, id, format!("phrases[{i}].box"), &pb.bbox);
    }
    out
}

/// Structural checks for a raw dense prediction: positive `num_frames`,
/// exactly `num_frames` slots per object, unique `phrase_id`s, finite
/// objectness in `[0, 1]`, valid boxes.
pub fn validate_raw(raw: &RawPrediction) -> Vec<Violation> {
    let mut out = Vec::new();
    let id = raw.clip_id.as_str();
    if raw.num_frames == 0 {
        push(&mut out, id, "num_frames".into(), "num_frames must be > 0");
    }
    let mut seen = std::collections::HashSet::new();
    for (oi, obj) in raw.objects.iter().enumerate() {
        if !seen.insert(obj.phrase_id) {
            push(
                &mut out,
                id,
                format!("objects[{oi}].phrase_id"),
                format!("duplicate phrase_id {}", obj.phrase_id),
            );
        }
        if obj.frames.len() != raw.num_frames as usize {
            push(
                &mut out,
                id,
                format!("objects[{oi}].frames"),
                format!(
                    "expected {} frame slots, found {}",
                    raw.num_frames,
                    obj.frames.len()
                ),
            );
        }
        for (fi, f) in obj.frames.iter().enumerate() {
            if !(f.objectness.is_finite() && (0.0..=1.0).contains(&f.objectness)) {
                push(
                    &mut out,
                    id,
                    format!("objects[{oi}].frames[{fi}].objectness"),
                    format!("objectness = {} outside [0, 1]", f.objectness),
                );
            }
            check_box(&mut out, id, format!("objects[{oi}].frames[{fi}].box"), &f.bbox);
        }
    }
    out
}
