//! Toolkit for grounded video captioning datasets.
//!
//! A *grounded video caption* is a single video-level sentence in which some
//! noun phrases are marked as referring to visible objects, and every marked
//! phrase is backed by a track of per-frame bounding boxes. This crate covers
//! the data lifecycle around that representation:
//!
//! * [`types`] / [`jsonl`] — the record model (captions, phrase spans, box
//!   tracks) with validation and line-delimited JSON I/O,
//! * [`tagparse`] — the `<p>…</p>` tagged-caption wire format used when
//!   talking to language models,
//! * [`geometry`] — box overlap measures and the training reference losses,
//! * [`svo`], [`prompts`], [`pipeline`] — the two-stage LLM annotation
//!   pipeline that turns per-frame captions into grounded video records,
//! * [`llm`] — a chat-completions client (HTTP) and a deterministic mock,
//! * [`metrics`] — captioning and grounding evaluation (CIDEr-D, METEOR-lite,
//!   video AP50, grounding recall, entity F1, mean spatio-temporal IoU,
//!   objectness threshold sweeps),
//! * [`prep`] — frame sampling, objectness thresholding, corpus statistics.
//!
//! Boxes are stored as `[x, y, w, h]` fractions of the frame; a phrase is
//! "present" in a frame exactly when its track has an entry for that frame,
//! so occlusion needs no extra flag. See the `book/` directory for a guided
//! tour; every code block in the book compiles and runs as a doc-test of this
//! crate.

pub mod geometry;
pub mod jsonl;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod prep;
pub mod prompts;
pub mod stem;
pub mod svo;
pub mod tagparse;
pub mod types;

pub use types::{
    BoundingBox, FrameAnnotation, GroundedVideoRecord, LossWeights, PhraseBox, PhraseSpan,
    RawFrame, RawObject, RawPrediction, Track, TrackEntry, Violation,
};

#[cfg(doctest)]
mod book {
    //! Compiles every code block in the mdBook guide as a doc-test so the
    //! book cannot drift from the library.
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $path))]
            mod $name {}
        };
    }
    #[doc = include_str!("../../../README.md")]
    mod readme {}

    chapter!(introduction, "introduction.md");
    chapter!(data_model, "data-model.md");
    chapter!(tagged_captions, "tagged-captions.md");
    chapter!(geometry_and_losses, "geometry-and-losses.md");
    chapter!(annotation_pipeline, "annotation-pipeline.md");
    chapter!(evaluation, "evaluation.md");
    chapter!(preparation, "preparation.md");
}
