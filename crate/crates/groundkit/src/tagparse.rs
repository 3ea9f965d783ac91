//! The tagged-caption wire format used when exchanging captions with a
//! language model, and the tolerant extractor for single-key pseudo-dict
//! responses.
//!
//! A tagged caption marks grounded noun phrases inline:
//!
//! ```text
//! <p>A man</p><DET> opens <p>a box</p><DET>
//! ```
//!
//! `<p>…</p>` delimits a phrase; an optional `<DET>` marker may follow a
//! closing tag (downstream consumers use it as a "box available" hint) and
//! never becomes part of any phrase. [`parse_tagged_caption`] strips all
//! markers, normalizes whitespace, and returns the clean caption together
//! with byte-offset [`PhraseSpan`]s; [`render_tagged_caption`] is its
//! inverse.
//!
//! Tags act as token boundaries: a span produced by parsing always covers
//! whole whitespace-delimited tokens of the clean caption, and rendering
//! rejects spans that do not (such a caption could not reparse to the same
//! offsets). For whitespace-normalized captions and token-aligned spans,
//! `parse(render(caption, spans, det)) == (caption, spans)` holds exactly.

use crate::types::PhraseSpan;

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum TagParseError {
    #[error("unbalanced tags: {0}")]
    Unbalanced(&'static str),
    #[error("nested <p> tag")]
    Nested,
    #[error("empty phrase between <p> and </p>")]
    EmptyPhrase,
    #[error("span [{start}, {end}) does not match the caption (expected {expected:?})")]
    SpanMismatch {
        start: usize,
        end: usize,
        expected: String,
    },
    #[error("spans overlap at byte {0}")]
    Overlap(usize),
    #[error("span [{start}, {end}) is not aligned to token boundaries")]
    NotTokenAligned { start: usize, end: usize },
    #[error("key {0:?} not found in response")]
    KeyNotFound(String),
    #[error("malformed dict value for key {0:?}")]
    MalformedValue(String),
}

enum Event<'a> {
    Text(&'a str),
    Open,
    Close,
}

/// Split `text` into text chunks and tag events, dropping `<DET>` markers.
fn lex(text: &str) -> Vec<Event<'_>> {
    let mut events = Vec::new();
    let mut rest = text;
    loop {
        let next = [("<p>", 0u8), ("</p>", 1), ("<DET>", 2)]
            .iter()
            .filter_map(|(pat, kind)| rest.find(pat).map(|pos| (pos, pat.len(), *kind)))
            .min_by_key(|(pos, _, _)| *pos);
        match next {
            Some((pos, len, kind)) => {
                if pos > 0 {
                    events.push(Event::Text(&rest[..pos]));
                }
                match kind {
                    0 => events.push(Event::Open),
                    1 => events.push(Event::Close),
                    _ => {} // <DET> is a marker only, never content
                }
                rest = &rest[pos + len..];
            }
            None => {
                if !rest.is_empty() {
                    events.push(Event::Text(rest));
                }
                return events;
            }
        }
    }
}

/// Parse a tagged caption into its clean text and phrase spans.
///
/// The clean caption has all markers removed and whitespace normalized
/// (single spaces, no leading/trailing). Spans carry byte offsets into the
/// clean caption, ids numbered `0..n` left to right, and
/// `clean[char_start..char_end] == text` by construction.
///
/// Errors on a `</p>` with no open tag, an unclosed `<p>`, a `<p>` inside
/// another phrase, or a phrase containing no tokens.
pub fn parse_tagged_caption(text: &str) -> Result<(String, Vec<PhraseSpan>), TagParseError> {
    let mut clean = String::new();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    // None: outside a phrase. Some(None): inside, no token seen yet.
    // Some(Some(start)): inside, span began at byte `start`.
    let mut open: Option<Option<usize>> = None;

    for event in lex(text) {
        match event {
            Event::Open => {
                if open.is_some() {
                    return Err(TagParseError::Nested);
                }
                open = Some(None);
            }
            Event::Close => match open.take() {
                None => return Err(TagParseError::Unbalanced("</p> without <p>")),
                Some(None) => return Err(TagParseError::EmptyPhrase),
                Some(Some(start)) => spans.push((start, clean.len())),
            },
            Event::Text(chunk) => {
                for word in chunk.split_whitespace() {
                    if !clean.is_empty() {
                        clean.push(' ');
                    }
                    let at = clean.len();
                    clean.push_str(word);
                    if let Some(slot @ None) = open.as_mut() {
                        *slot = Some(at);
                    }
                }
            }
        }
    }
    if open.is_some() {
        return Err(TagParseError::Unbalanced("<p> without </p>"));
    }

    let spans = spans
        .into_iter()
        .enumerate()
        .map(|(i, (start, end))| PhraseSpan {
            id: i as u32,
            text: clean[start..end].to_string(),
            char_start: start,
            char_end: end,
        })
        .collect();
    Ok((clean, spans))
}

fn is_token_aligned(caption: &str, start: usize, end: usize) -> bool {
    let before = start == 0
        || caption[..start]
            .chars()
            .next_back()
            .is_some_and(char::is_whitespace);
    let after = end == caption.len()
        || caption[end..].chars().next().is_some_and(char::is_whitespace);
    before && after
}

/// Render a clean caption with its spans back into tagged form. With
/// `emit_det` every `</p>` is immediately followed by `<DET>`.
///
/// Spans are emitted in `char_start` order. Errors when a span does not
/// match the caption slice, overlaps another span, or does not sit on token
/// boundaries (see the module docs for why the latter is rejected).
pub fn render_tagged_caption(
    caption: &str,
    spans: &[PhraseSpan],
    emit_det: bool,
) -> Result<String, TagParseError> {
    let mut ordered: Vec<&PhraseSpan> = spans.iter().collect();
    ordered.sort_by_key(|s| s.char_start);

    let mut out = String::with_capacity(caption.len() + spans.len() * 12);
    let mut cursor = 0usize;
    for span in ordered {
        let (start, end) = (span.char_start, span.char_end);
        if start >= end
            || end > caption.len()
            || !caption.is_char_boundary(start)
            || !caption.is_char_boundary(end)
            || caption[start..end] != span.text
        {
            return Err(TagParseError::SpanMismatch {
                start,
                end,
                expected: caption
                    .get(start..end)
                    .map(str::to_string)
                    .unwrap_or_default(),
            });
        }
        if start < cursor {
            return Err(TagParseError::Overlap(start));
        }
        if !is_token_aligned(caption, start, end) {
            return Err(TagParseError::NotTokenAligned { start, end });
        }
        out.push_str(&caption[cursor..start]);
        out.push_str("<p>");
        out.push_str(&span.text);
        out.push_str("</p>");
        if emit_det {
            out.push_str("<DET>");
        }
        cursor = end;
    }
    out.push_str(&caption[cursor..]);
    Ok(out)
}

/// Extract the string value of `key` from a single-quoted (or
/// double-quoted) pseudo-dict anywhere in `text`, tolerating surrounding
/// prose and code fences:
///
/// ```text
/// Sure! {'CAPTION': '<p>A man</p> slices <p>an onion</p>'} hope this helps
/// ```
///
/// Values may contain apostrophes (`{'CATEGORY': 'person's hand'}`): the
/// value ends at the longest candidate closing quote, where a candidate is
/// a quote whose next non-space character is `}` or `,`, scanning up to the
/// first candidate that closes the dict. No unescaping is performed.
///
/// Returns `Ok(None)` when `key` is `"CATEGORY"` and the value is the
/// literal `None` (the "belongs to no category" sentinel); `Ok(Some(_))`
/// otherwise.
pub fn parse_llm_dict(text: &str, key: &str) -> Result<Option<String>, TagParseError> {
    let bytes = text.as_bytes();
    let key_at = ["'", "\""]
        .iter()
        .filter_map(|q| text.find(&format!("{q}{key}{q}")).map(|p| p + key.len() + 2))
        .min()
        .ok_or_else(|| TagParseError::KeyNotFound(key.to_string()))?;

    let mut i = key_at;
    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    if i >= bytes.len() || bytes[i] != b':' {
        return Err(TagParseError::MalformedValue(key.to_string()));
    }
    i += 1;
    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    if i >= bytes.len() || (bytes[i] != b'\'' && bytes[i] != b'"') {
        return Err(TagParseError::MalformedValue(key.to_string()));
    }
    let quote = bytes[i];
    let open = i;

    let mut close = None;
    let mut j = open + 1;
    while j < bytes.len() {
        if bytes[j] == quote {
            let mut k = j + 1;
            while k < bytes.len() && bytes[k].is_ascii_whitespace() {
                k += 1;
            }
            if k < bytes.len() && (bytes[k] == b'}' || bytes[k] == b',') {
                close = Some(j);
                if bytes[k] == b'}' {
                    break; // the dict ends here; stop extending the match
                }
            }
        }
        j += 1;
    }
    let close = close.ok_or_else(|| TagParseError::MalformedValue(key.to_string()))?;
    let value = text[open + 1..close].to_string();
    if key == "CATEGORY" && value == "None" {
        return Ok(None);
    }
    Ok(Some(value))
}
