//! Deterministic offline chat backend.
//!
//! The mock reproduces the worked caption-aggregation and phrase-
//! classification example pairs exactly, so the full annotation pipeline can
//! run end to end with no network. It is a test fixture with deliberately
//! simple, documented heuristics — not a claim about language-model
//! behavior.
//!
//! Prompt recognition is shape-based: a final user turn starting with
//! `SVO: ` is a caption-aggregation request, one starting with `Input: ` is
//! a classification request, and anything else is an unrecognized-prompt
//! error.
//!
//! Caption aggregation picks the most frequent human subject (falling back
//! to the most frequent subject overall), the most frequent dynamic verb
//! (static scene verbs like "is"/"shows"/"holding" only win when nothing
//! dynamic exists), that verb's most frequent object with its most frequent
//! adposition, and an instrument (object of a "using" clause, else the
//! non-human subject performing the chosen verb). Classification picks the
//! category with the highest stemmed-token overlap, never crossing the
//! human/object boundary, with person-words bridging to the first human
//! category and a small synonym table bridging e.g. "liquid" → "a beverage";
//! everything else lands in the None class.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;
use std::sync::OnceLock;

use crate::stem::{content_tokens, stem, tokenize};
use crate::svo::{self, parse_svo_frames, verb_base, SvoTriplet};

use super::{ChatClient, ChatPrompt, LlmError};

/// Person-denoting nouns (compared by stem, so plurals match too).
const HUMAN_WORDS: &[&str] = &[
    "person", "people", "woman", "women", "man", "men", "child", "children", "kid", "boy",
    "girl", "lady", "guy", "baby", "hand", "chef", "cook", "worker", "barber", "hairdresser",
    "human", "adult", "toddler", "infant", "player", "instructor", "teacher", "student",
    "nurse", "doctor", "customer", "couple",
];

/// Verb forms describing static scene composition rather than an action;
/// the caption should be built around a dynamic verb whenever one exists.
const STATIC_VERBS: &[&str] = &[
    "is", "are", "was", "were", "am", "be", "been", "being", "shows", "show", "showing",
    "shown", "showed", "sees", "see", "seeing", "seen", "saw", "holds", "hold", "holding",
    "held", "uses", "use", "using", "used", "positioned", "position", "positions",
    "positioning", "placed", "place", "places", "placing", "appears", "appear", "appearing",
    "appeared", "stands", "stand", "standing", "stood", "sits", "sit", "sitting", "sat",
    "seems", "seem", "seemed", "has", "have", "had", "having", "contains", "contain",
    "containing", "contained", "depicts", "depict", "depicting", "depicted", "remains",
    "remain", "remaining", "remained", "located", "locate", "lies", "lie", "lying",
    "features", "feature", "featuring", "featured", "present", "visible", "seated",
    "situated", "displayed", "displays", "display",
];

/// Inflections of "use"/"utilize"; their objects are instruments.
const USE_FORMS: &[&str] = &[
    "use", "uses", "using", "used", "utilize", "utilizes", "utilizing", "utilized",
];

/// Nouns that take no indefinite article.
const MASS_NOUNS: &[&str] = &[
    "food", "water", "paper", "rice", "soup", "dough", "bread", "butter", "cheese", "sauce",
    "sugar", "salt", "flour", "milk", "cream", "juice", "oil", "tea", "coffee", "batter",
    "mixture", "hair", "grass", "wood", "metal", "glue", "fabric", "yarn", "icing",
    "frosting", "chocolate", "garlic", "pasta", "content", "liquid", "clothing", "makeup",
    "equipment", "meat", "laundry",
];

/// Stemmed token groups treated as mutually classifiable.
const SYNONYM_GROUPS: &[&[&str]] = &[
    &["food", "meal", "dish", "snack", "cuisine", "ingredient"],
    &["beverage", "drink", "liquid", "juice", "smoothie", "glass"],
    &["object", "item", "thing", "tool"],
];

fn human_stems() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| HUMAN_WORDS.iter().map(|w| stem(w)).collect())
}

/// True when any token of `text` names a person.
fn is_human_phrase(text: &str) -> bool {
    tokenize(text)
        .iter()
        .any(|t| human_stems().contains(&stem(t)))
}

/// Counts keys, remembering first-appearance order so ties resolve to the
/// earliest key — which keeps every selection below deterministic.
struct FrequencyTable<K: Eq + Hash> {
    counts: HashMap<K, (usize, usize)>,
    seen: usize,
}

impl<K: Eq + Hash> FrequencyTable<K> {
    fn new() -> Self {
        FrequencyTable {
            counts: HashMap::new(),
            seen: 0,
        }
    }

    fn add(&mut self, key: K) {
        let next = self.seen;
        self.counts.entry(key).or_insert((0, next)).0 += 1;
        self.seen += 1;
    }

    fn best(&self) -> Option<&K> {
        self.best_where(|_| true)
    }

    fn best_where(&self, pred: impl Fn(&K) -> bool) -> Option<&K> {
        self.counts
            .iter()
            .filter(|(k, _)| pred(k))
            .max_by_key(|(_, &(count, first))| (count, std::cmp::Reverse(first)))
            .map(|(k, _)| k)
    }
}

/// Offline [`ChatClient`] understanding the two annotation prompt shapes.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockChatClient;

impl MockChatClient {
    pub fn new() -> Self {
        MockChatClient
    }
}

impl ChatClient for MockChatClient {
    fn complete(&self, prompt: &ChatPrompt) -> Result<String, LlmError> {
        prompt.validate()?;
        let last = prompt
            .last_user()
            .expect("validated prompts end on a user turn");
        if let Some(svo) = last.strip_prefix("SVO: ") {
            stage2_response(svo)
        } else if last.starts_with("Input: ") {
            stage3_response(last)
        } else {
            Err(LlmError::UnrecognizedPrompt)
        }
    }
}

fn stage2_response(svo_block: &str) -> Result<String, LlmError> {
    let frames = parse_svo_frames(svo_block).ok_or(LlmError::UnrecognizedPrompt)?;
    let triplets: Vec<&SvoTriplet> = frames.iter().flatten().collect();
    if triplets.is_empty() {
        return Err(LlmError::UnrecognizedPrompt);
    }

    let mut subjects = FrequencyTable::new();
    for t in &triplets {
        subjects.add(t.subject.clone());
    }
    let subject = subjects
        .best_where(|s| is_human_phrase(s))
        .or_else(|| subjects.best())
        .expect("at least one triplet")
        .clone();

    let mut dynamic = FrequencyTable::new();
    let mut all_verbs = FrequencyTable::new();
    for t in &triplets {
        let key = verb_base(&t.verb);
        if !STATIC_VERBS.contains(&t.verb.as_str()) && !STATIC_VERBS.contains(&key.as_str()) {
            dynamic.add(key.clone());
        }
        all_verbs.add(key);
    }
    let verb_key = dynamic
        .best()
        .or_else(|| all_verbs.best())
        .expect("at least one triplet")
        .clone();

    let chosen: Vec<&SvoTriplet> = triplets
        .iter()
        .copied()
        .filter(|t| verb_base(&t.verb) == verb_key)
        .collect();

    let object = pick_object(&chosen, &triplets, &subjects, &subject)
        .unwrap_or_else(|| subject.clone());

    let mut preps = FrequencyTable::new();
    for t in &chosen {
        if t.object.as_deref() == Some(object.as_str()) {
            for (p, po) in &t.preps {
                preps.add((p.clone(), po.clone()));
            }
        }
    }
    let mut object_phrase = noun_phrase(&object);
    if let Some((p, po)) = preps.best() {
        object_phrase = format!("{object_phrase} {p} {}", noun_phrase(po));
    }

    let instrument = pick_instrument(&triplets, &chosen, &subject)
        .filter(|i| *i != object);

    let mut caption = format!(
        "<p>{}</p> is {} <p>{object_phrase}</p>",
        capitalize_first(&noun_phrase(&subject)),
        render_gerund(&verb_key),
    );
    if let Some(instr) = instrument {
        caption.push_str(&format!(" using {}", noun_phrase(&instr)));
    }
    Ok(format!("{{'CAPTION': '{caption}'}}"))
}

/// Most frequent object of the chosen verb, widening to any object, then any
/// prepositional object, then a second subject when the input is degenerate.
fn pick_object(
    chosen: &[&SvoTriplet],
    all: &[&SvoTriplet],
    subjects: &FrequencyTable<String>,
    subject: &str,
) -> Option<String> {
    for pool in [chosen, all] {
        let mut objects = FrequencyTable::new();
        for t in pool {
            if let Some(o) = &t.object {
                objects.add(o.clone());
            }
        }
        if let Some(o) = objects.best() {
            return Some(o.clone());
        }
    }
    let mut pobjs = FrequencyTable::new();
    for t in all {
        for (_, po) in &t.preps {
            pobjs.add(po.clone());
        }
    }
    if let Some(po) = pobjs.best() {
        return Some(po.clone());
    }
    subjects.best_where(|s| s != subject).cloned()
}

/// Object of a "using" clause when present, else the non-human subject that
/// performs the chosen verb (e.g. the spoon in "spoon stirs food").
fn pick_instrument(
    all: &[&SvoTriplet],
    chosen: &[&SvoTriplet],
    subject: &str,
) -> Option<String> {
    let mut instruments = FrequencyTable::new();
    for t in all {
        if USE_FORMS.contains(&t.verb.as_str()) {
            if let Some(o) = &t.object {
                instruments.add(o.clone());
            }
        }
    }
    if let Some(i) = instruments.best() {
        return Some(i.clone());
    }
    let mut fallback = FrequencyTable::new();
    for t in chosen {
        if t.subject != subject && !is_human_phrase(&t.subject) {
            fallback.add(t.subject.clone());
        }
    }
    fallback.best().cloned()
}

fn render_gerund(verb_key: &str) -> String {
    match verb_key {
        "is" | "are" | "was" | "were" | "am" | "be" | "been" => "being".to_string(),
        "has" | "have" | "had" => "having".to_string(),
        "seen" | "saw" => "seeing".to_string(),
        "shown" | "showed" => "showing".to_string(),
        "used" => "using".to_string(),
        "held" => "holding".to_string(),
        _ => svo::gerund(verb_key),
    }
}

/// Renders a noun with its indefinite article; mass nouns and plurals take
/// none, vowel-initial nouns take "an". Multiword nouns key on their first
/// word.
fn noun_phrase(noun: &str) -> String {
    let head = noun
        .split_whitespace()
        .next()
        .unwrap_or(noun)
        .to_lowercase();
    if MASS_NOUNS.contains(&head.as_str()) || is_plural(&head) {
        noun.to_string()
    } else if head.starts_with(['a', 'e', 'i', 'o', 'u']) {
        format!("an {noun}")
    } else {
        format!("a {noun}")
    }
}

fn is_plural(word: &str) -> bool {
    matches!(word, "people" | "men" | "women" | "children")
        || (word.ends_with('s') && stem(word) != word)
}

fn capitalize_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

fn stage3_response(text: &str) -> Result<String, LlmError> {
    let (phrase, categories) =
        parse_classification_input(text).ok_or(LlmError::UnrecognizedPrompt)?;
    let value = classify(&phrase, &categories).unwrap_or_else(|| "None".to_string());
    Ok(format!("{{'CATEGORY': '{value}'}}"))
}

/// Parses `Input: '…'\nCategories: ['…', '…']`. Splitting on the exact
/// `', '` separator keeps category texts containing lone apostrophes intact.
fn parse_classification_input(text: &str) -> Option<(String, Vec<String>)> {
    let (first, second) = text.split_once('\n')?;
    let phrase = first
        .strip_prefix("Input: ")?
        .trim()
        .strip_prefix('\'')?
        .strip_suffix('\'')?;
    let inner = second
        .strip_prefix("Categories: ")?
        .trim()
        .strip_prefix("['")?
        .strip_suffix("']")?;
    let categories = inner.split("', '").map(str::to_string).collect();
    Some((phrase.to_string(), categories))
}

fn classify(phrase: &str, categories: &[String]) -> Option<String> {
    let phrase_tokens: HashSet<String> = content_tokens(phrase).into_iter().collect();
    let phrase_is_human = is_human_phrase(phrase);
    let candidates: Vec<&String> = categories
        .iter()
        .filter(|c| is_human_phrase(c) == phrase_is_human)
        .collect();

    let mut best: Option<(&String, usize)> = None;
    for c in &candidates {
        let cat_tokens: HashSet<String> = content_tokens(c).into_iter().collect();
        let overlap = cat_tokens.intersection(&phrase_tokens).count();
        if overlap > best.map_or(0, |(_, n)| n) {
            best = Some((c, overlap));
        }
    }
    if let Some((c, _)) = best {
        return Some((*c).clone());
    }
    if phrase_is_human {
        if let Some(c) = candidates.first() {
            return Some((*c).clone());
        }
    }
    for c in &candidates {
        let cat_tokens: HashSet<String> = content_tokens(c).into_iter().collect();
        let bridged = SYNONYM_GROUPS.iter().any(|group| {
            group.iter().any(|g| phrase_tokens.contains(*g))
                && group.iter().any(|g| cat_tokens.contains(*g))
        });
        if bridged {
            return Some((*c).clone());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::{
        build_stage2_prompt, build_stage3_prompt, stage2_example_1, stage2_example_2,
        stage3_examples, STAGE2_RESPONSE_1, STAGE2_RESPONSE_2,
    };

    fn complete(prompt: &ChatPrompt) -> String {
        MockChatClient::new().complete(prompt).unwrap()
    }

    #[test]
    fn reproduces_first_aggregation_example() {
        let prompt = build_stage2_prompt(&stage2_example_1()).unwrap();
        assert_eq!(complete(&prompt), STAGE2_RESPONSE_1);
    }

    #[test]
    fn reproduces_second_aggregation_example() {
        let prompt = build_stage2_prompt(&stage2_example_2()).unwrap();
        assert_eq!(complete(&prompt), STAGE2_RESPONSE_2);
    }

    #[test]
    fn reproduces_all_five_classification_examples() {
        for (phrase, categories, answer) in stage3_examples() {
            let categories: Vec<String> = categories.iter().map(|c| c.to_string()).collect();
            let prompt = build_stage3_prompt(phrase, &categories).unwrap();
            assert_eq!(
                complete(&prompt),
                format!("{{'CATEGORY': '{answer}'}}"),
                "input {phrase:?}"
            );
        }
    }

    #[test]
    fn classification_matches_by_token_overlap() {
        assert_eq!(
            classify("a green beverage", &["a person".into(), "a beverage".into()]),
            Some("a beverage".to_string())
        );
    }

    #[test]
    fn classification_bridges_synonym_groups() {
        assert_eq!(
            classify(
                "a glass of green liquid",
                &["a person".into(), "a beverage".into()]
            ),
            Some("a beverage".to_string())
        );
    }

    #[test]
    fn classification_never_crosses_the_human_object_boundary() {
        // "table" shares no tokens with "a bowl" and must not fall back to
        // the human category.
        assert_eq!(classify("table", &["a person".into(), "a bowl".into()]), None);
        // A human phrase bridges to the human category rather than an
        // object category, even one with a deceptively similar surface.
        assert_eq!(
            classify("a man", &["a mango".into(), "a person".into()]),
            Some("a person".to_string())
        );
    }

    #[test]
    fn overlap_ties_resolve_to_the_first_listed_category() {
        assert_eq!(
            classify("red food", &["food on a plate".into(), "food in a bowl".into()]),
            Some("food on a plate".to_string())
        );
    }

    #[test]
    fn unrecognized_prompts_are_rejected() {
        let prompt = ChatPrompt::new(vec![
            super::super::ChatMessage::system("s"),
            super::super::ChatMessage::user("What is the weather?"),
        ]);
        assert!(matches!(
            MockChatClient::new().complete(&prompt),
            Err(LlmError::UnrecognizedPrompt)
        ));
    }

    #[test]
    fn degenerate_static_only_input_still_yields_a_caption() {
        let frames = vec![vec![SvoTriplet::new("bowl", "is", None)]];
        let prompt = build_stage2_prompt(&frames).unwrap();
        let response = complete(&prompt);
        assert!(response.starts_with("{'CAPTION': '"));
        assert!(response.contains("<p>"));
    }

    #[test]
    fn articles_respect_mass_nouns_vowels_and_plurals() {
        assert_eq!(noun_phrase("food"), "food");
        assert_eq!(noun_phrase("object"), "an object");
        assert_eq!(noun_phrase("craft cutter"), "a craft cutter");
        assert_eq!(noun_phrase("scissors"), "scissors");
    }
}
