//! Frozen prompt templates for the two LLM stages of the annotation
//! pipeline.
//!
//! The caption-aggregation prompt carries the system instructions, two
//! worked input/output pairs, and the new per-frame SVO block; the
//! phrase-classification prompt carries its system instructions, five
//! worked pairs, and the new input/categories pair. Both builders are pure:
//! identical input yields byte-identical prompts, which makes annotation
//! runs reproducible and lets tests pin the exact wire content.
//!
//! The in-context examples are stored as structured data and serialized
//! through the same [`render_svo_frames`] path as real inputs, so the format
//! of the examples and of the new input can never drift apart.

use thiserror::Error;

use crate::llm::{ChatMessage, ChatPrompt};
use crate::svo::{render_svo_frames, SvoTriplet};

/// System instructions for video-level caption aggregation.
pub const STAGE2_SYSTEM: &str = "\
Generate a dynamic, video-level description based on frame-level inputs. The inputs include actions performed in individual frames in the form of Subject-Verb-Object (SVO) triplets along with prepositions and prepositional objects. The SVO triplets describe how actions are performed and how objects interact. Your output should be a concise narrative in 1 sentence, focusing on the most salient actions depicted across the frames. Enclose the exact text of relevant objects within <p></p> tags.

Input format:
[['subject': 'subject_text', 'verb': 'action_text', 'object': 'object_text', 'prepositions_objects': [('preposition', 'prepositional_object')],],]

Output format:
A Python dictionary with a key `CAPTION', and as a value a dynamic description of the video content.

Infer motion from static descriptions. E.g. `image shows a person holding a spoon and a bowl' implies `person is stirring food in a bowl'. Enclose the human and the most frequent object that is used to perform the action within <p></p> tags. If there is no human, enclose the two most frequent objects within <p></p> tags.";

/// System instructions for frame-phrase classification.
pub const STAGE3_SYSTEM: &str = "\
You are tasked with classifying humans and objects to a set of given categories.

Input format:
Human/Object (string), set of categories (lists of strings).

Output format:
A Python dictionary with a key `CATEGORY', and as a value the predicted category of the human/object.

Use `None' if the human/object doesn`t belong to any of the categories. DO NEVER classify a human as the object category and vice versa.";

/// Assistant turn completing the first aggregation example.
pub const STAGE2_RESPONSE_1: &str =
    "{'CAPTION': '<p>A person</p> is stirring <p>food in a bowl</p> using a spoon'}";

/// Assistant turn completing the second aggregation example.
pub const STAGE2_RESPONSE_2: &str =
    "{'CAPTION': '<p>A woman</p> is cutting <p>an object</p> using a craft cutter'}";

fn t(subject: &str, verb: &str, object: Option<&str>) -> SvoTriplet {
    SvoTriplet::new(subject, verb, object)
}

/// Per-frame triplets of the first worked aggregation example: eleven frames
/// of a person stirring food in a bowl.
pub fn stage2_example_1() -> Vec<Vec<SvoTriplet>> {
    let holding_frame = || {
        vec![
            t("person", "holding", Some("spoon")),
            t("spoon", "is", Some("bowl")),
        ]
    };
    vec![
        vec![t("image", "shows", Some("cup")), t("bowl", "is", None)],
        holding_frame(),
        vec![t("image", "shows", Some("spoon")).with_prep("inside", "bowl")],
        vec![
            t("person", "seen", None),
            t("person", "holding", Some("spoon")),
            t("spoon", "used", None),
            t("spoon", "stir", Some("food")).with_prep("in", "bowl"),
        ],
        holding_frame(),
        holding_frame(),
        holding_frame(),
        vec![t("image", "shows", Some("spoon")).with_prep("in", "bowl")],
        vec![
            t("image", "shows", Some("bottle")),
            t("bottle", "positioned", None).with_prep("beside", "bowl"),
        ],
        vec![
            t("image", "shows", Some("bottle")),
            t("bottle", "positioned", None).with_prep("beside", "cup"),
        ],
        vec![
            t("image", "shows", Some("bottle")),
            t("image", "placed", None).with_prep("on", "counter"),
            t("bottle", "positioned", None).with_prep("beside", "bowl"),
        ],
    ]
}

/// Per-frame triplets of the second worked aggregation example: ten frames
/// of a woman cutting with craft tools.
pub fn stage2_example_2() -> Vec<Vec<SvoTriplet>> {
    vec![
        vec![t("hand", "using", Some("cutting board"))],
        vec![
            t("woman", "using", Some("cutting board")),
            t("woman", "make", Some("craft project")),
        ],
        vec![
            t("child", "using", Some("craft cutter")),
            t("child", "cut", Some("object")),
        ],
        vec![
            t("child", "using", Some("craft cutter")),
            t("child", "cut", Some("paper")),
        ],
        vec![
            t("woman", "using", Some("craft cutter")),
            t("woman", "cut", Some("object")),
        ],
        vec![
            t("woman", "using", Some("scissors pair")),
            t("woman", "cut", Some("piece")).with_prep("of", "paper"),
        ],
        vec![
            t("hand", "using", Some("scissors pair")),
            t("hand", "cut", Some("piece")).with_prep("of", "paper"),
        ],
        vec![
            t("woman", "using", Some("scissors pair")),
            t("woman", "cut", Some("piece")).with_prep("of", "paper"),
        ],
        vec![
            t("woman", "using", Some("craft cutter")),
            t("woman", "cut", Some("object")),
        ],
        vec![
            t("woman", "using", Some("craft cutter")),
            t("woman", "cut", Some("plate")),
        ],
    ]
}

/// The five worked classification pairs as (input, categories, answer);
/// the answer "None" denotes the None class.
pub fn stage3_examples() -> Vec<(&'static str, Vec<&'static str>, &'static str)> {
    vec![
        ("person", vec!["a woman", "her hair"], "a woman"),
        ("table", vec!["a person", "a bowl"], "None"),
        (
            "a piece of food on a plate",
            vec!["a woman", "a meal"],
            "a meal",
        ),
        ("a hand", vec!["a person", "food on a plate"], "a person"),
        (
            "a man in a white shirt and black apron is also present",
            vec!["a person", "food"],
            "a person",
        ),
    ]
}

/// Prompt construction failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("caption aggregation needs at least one frame with a triplet")]
    NoTriplets,
    #[error("classification needs a non-empty category list")]
    NoCategories,
}

/// Builds the caption-aggregation prompt around the serialized per-frame
/// triplets. Errors when no frame contributed a triplet.
pub fn build_stage2_prompt(frame_triplets: &[Vec<SvoTriplet>]) -> Result<ChatPrompt, PromptError> {
    if frame_triplets.iter().all(|frame| frame.is_empty()) {
        return Err(PromptError::NoTriplets);
    }
    let mut messages = vec![ChatMessage::system(STAGE2_SYSTEM)];
    for (input, response) in [
        (stage2_example_1(), STAGE2_RESPONSE_1),
        (stage2_example_2(), STAGE2_RESPONSE_2),
    ] {
        messages.push(ChatMessage::user(render_stage2_user(&input)));
        messages.push(ChatMessage::assistant(response));
    }
    messages.push(ChatMessage::user(render_stage2_user(frame_triplets)));
    Ok(ChatPrompt::new(messages))
}

/// Builds the classification prompt for one frame phrase against the
/// video-level phrases. Errors on an empty category list.
pub fn build_stage3_prompt(
    frame_phrase: &str,
    video_phrases: &[String],
) -> Result<ChatPrompt, PromptError> {
    if video_phrases.is_empty() {
        return Err(PromptError::NoCategories);
    }
    let mut messages = vec![ChatMessage::system(STAGE3_SYSTEM)];
    for (phrase, categories, answer) in stage3_examples() {
        messages.push(ChatMessage::user(render_stage3_user(phrase, &categories)));
        messages.push(ChatMessage::assistant(format!("{{'CATEGORY': '{answer}'}}")));
    }
    messages.push(ChatMessage::user(render_stage3_user(
        frame_phrase,
        video_phrases,
    )));
    Ok(ChatPrompt::new(messages))
}

fn render_stage2_user(frames: &[Vec<SvoTriplet>]) -> String {
    format!("SVO: {}", render_svo_frames(frames))
}

fn render_stage3_user<S: AsRef<str>>(phrase: &str, categories: &[S]) -> String {
    let rendered: Vec<String> = categories
        .iter()
        .map(|c| format!("'{}'", c.as_ref()))
        .collect();
    format!("Input: '{phrase}'\nCategories: [{}]", rendered.join(", "))
}
