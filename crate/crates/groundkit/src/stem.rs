//! Small text utilities shared by the metrics and the deterministic mock:
//! a lowercasing tokenizer, a stop-word list, and a light suffix-stripping
//! stemmer.
//!
//! The stemmer is deliberately simple — plural `-s`/`-es`/`-ies`, `-ing`,
//! `-ed`, with doubled-consonant repair — because its only job is to let
//! near-identical noun phrases and verb forms match each other (`cats` ~
//! `cat`, `stirred` ~ `stir`, `berries` ~ `berry`). It is not a
//! linguistically complete stemmer and must stay in sync with the frozen
//! metric oracles in the test suite; change it only together with them.

/// Closed-class words dropped by [`content_tokens`]: articles, common
/// prepositions, copulas, possessives, and contraction fragments.
pub const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "of", "on", "in", "at", "with", "by", "for", "to", "from", "and", "or",
    "is", "are", "was", "were", "be", "been", "being", "it", "its", "his", "her", "their",
    "this", "that", "s", "t", "d", "ll", "re", "ve",
];

/// Lowercase and split on non-alphanumeric characters, dropping empties.
/// `"A person's hand"` tokenizes to `["a", "person", "s", "hand"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn undouble(mut w: String) -> String {
    let bytes = w.as_bytes();
    if bytes.len() >= 2 {
        let last = bytes[bytes.len() - 1];
        if last == bytes[bytes.len() - 2] && !b"aeiou".contains(&last) {
            w.pop();
        }
    }
    w
}

/// Light stem of a lowercase token.
pub fn stem(word: &str) -> String {
    let mut w = word.to_string();
    if w.len() > 4 && w.ends_with("ies") {
        w.truncate(w.len() - 3);
        w.push('y');
        return w;
    }
    if ["ches", "shes", "xes", "zes", "ses"]
        .iter()
        .any(|suf| w.len() > suf.len() && w.ends_with(suf))
    {
        w.truncate(w.len() - 2);
    } else if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is")
    {
        w.truncate(w.len() - 1);
    }
    if w.len() >= 5 && w.ends_with("ing") {
        w.truncate(w.len() - 3);
        w = undouble(w);
    } else if w.len() >= 4 && w.ends_with("ed") {
        w.truncate(w.len() - 2);
        w = undouble(w);
    }
    w
}

/// Stemmed, stop-word-free tokens of a phrase — the representation used for
/// phrase similarity and the mock's category matching.
pub fn content_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !STOP_WORDS.contains(&t.as_str()))
        .map(|t| stem(&t))
        .collect()
}
