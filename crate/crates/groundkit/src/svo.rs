//! Subject–verb–object triplet extraction from frame-level captions, plus
//! the serialized triplet format used in Stage-2 prompts.
//!
//! Frame captions from an image grounding model are short declaratives
//! ("A person is holding a spoon in a bowl"). [`extract_svo`] reduces each
//! sentence to triplets with optional preposition/object pairs, which is
//! all the caption aggregation stage feeds the language model.
//!
//! Callers with a real POS tagger can pass `(token, tag)` pairs; otherwise
//! a built-in heuristic tagger is used (closed-class stop lists, an
//! inflected action-verb lexicon, and `-ing`/`-ed`/`-s` suffix rules). The
//! heuristic never invents structure: a sentence in which no verb can be
//! identified yields zero triplets.

use std::collections::HashSet;
use std::sync::OnceLock;

/// One extracted clause: subject, verb, optional direct object, and any
/// (preposition, prepositional-object) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SvoTriplet {
    pub subject: String,
    pub verb: String,
    pub object: Option<String>,
    pub preps: Vec<(String, String)>,
}

impl SvoTriplet {
    pub fn new(subject: &str, verb: &str, object: Option<&str>) -> Self {
        SvoTriplet {
            subject: subject.into(),
            verb: verb.into(),
            object: object.map(str::to_string),
            preps: Vec::new(),
        }
    }

    pub fn with_prep(mut self, prep: &str, pobj: &str) -> Self {
        self.preps.push((prep.into(), pobj.into()));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Det,
    Noun,
    Verb,
    Aux,
    Adp,
    Pron,
    Conj,
    Other,
}

const DETERMINERS: &[&str] = &["a", "an", "the", "this", "that", "these", "those"];
const ADPOSITIONS: &[&str] = &[
    "in", "on", "at", "of", "with", "by", "for", "from", "to", "into", "onto", "inside",
    "beside", "under", "over", "near", "behind", "above", "below", "toward", "towards",
    "around", "between", "against", "along", "across", "during", "upon", "without", "beneath",
];
const PRONOUNS: &[&str] = &[
    "he", "she", "it", "they", "i", "we", "you", "his", "her", "its", "their", "them", "him",
    "someone", "something", "anyone", "who", "which", "what",
];
const CONJUNCTIONS: &[&str] = &["and", "or", "but", "then", "while"];
const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "am", "be", "been", "being", "has", "have", "had", "do",
    "does", "did", "will", "would", "shall", "should", "can", "could", "may", "might", "must",
];

/// Base forms of common instructional-video action verbs; inflections are
/// generated (see [`verb_forms`]).
const VERB_BASES: &[&str] = &[
    "hold", "use", "show", "see", "make", "cut", "stir", "place", "put", "position", "pour",
    "mix", "stand", "sit", "wear", "appear", "look", "point", "reach", "move", "turn", "open",
    "close", "cook", "prepare", "remove", "add", "fill", "empty", "lift", "lower", "push",
    "pull", "grab", "pick", "press", "roll", "spread", "wipe", "clean", "wash", "chop",
    "slice", "dice", "peel", "grate", "whisk", "knead", "bake", "fry", "grill", "boil",
    "simmer", "serve", "eat", "drink", "taste", "measure", "weigh", "attach", "fold", "hang",
    "carry", "drop", "throw", "catch", "draw", "paint", "brush", "apply", "scrub", "rinse",
    "dry", "soak", "trim", "shape", "build", "assemble", "install", "repair", "fix", "adjust",
    "demonstrate", "work", "play", "walk", "run", "talk", "speak", "write", "read", "smile",
];

const IRREGULAR_FORMS: &[&str] = &[
    "held", "saw", "seen", "made", "stood", "sat", "wore", "worn", "ate", "eaten", "drank",
    "drunk", "threw", "thrown", "drew", "drawn", "hung", "shown", "took", "taken", "gave",
    "given", "got", "brought", "kept", "wrote", "written", "broke", "broken", "stuck", "ran",
    "spoke", "spoken",
];

/// Strip a third-person `-s` from a verb form (`stirs` → `stir`,
/// `slices` → `slice`, `carries` → `carry`). Leaves other forms alone.
pub fn verb_base(verb: &str) -> String {
    if verb.len() > 4 && verb.ends_with("ies") {
        let mut w = verb[..verb.len() - 3].to_string();
        w.push('y');
        return w;
    }
    for suf in ["ches", "shes", "sses", "xes", "zes"] {
        if verb.len() > suf.len() && verb.ends_with(suf) {
            return verb[..verb.len() - 2].to_string();
        }
    }
    if verb.len() > 3 && verb.ends_with('s') && !verb.ends_with("ss") && !verb.ends_with("us") {
        return verb[..verb.len() - 1].to_string();
    }
    verb.to_string()
}

fn is_vowel(c: u8) -> bool {
    b"aeiou".contains(&c)
}

/// Present participle of a base verb: `stir` → `stirring`, `slice` →
/// `slicing`, `show` → `showing`. Already-`-ing` forms pass through.
pub fn gerund(base: &str) -> String {
    let b = base.as_bytes();
    if base.ends_with("ing") {
        return base.to_string();
    }
    if base.ends_with('e') && !base.ends_with("ee") && base.len() > 2 {
        return format!("{}ing", &base[..base.len() - 1]);
    }
    // Short single-vowel stems ending vowel+consonant double the final
    // consonant (stir/stirring, cut/cutting); stems with more vowels do not
    // (open, pour, simmer), and w/x/y never double.
    let vowel_count = b.iter().filter(|&&c| is_vowel(c)).count();
    if base.len() >= 3
        && base.len() <= 4
        && vowel_count == 1
        && !is_vowel(b[b.len() - 1])
        && !b"wxy".contains(&b[b.len() - 1])
        && is_vowel(b[b.len() - 2])
    {
        return format!("{}{}ing", base, b[b.len() - 1] as char);
    }
    format!("{base}ing")
}

fn past(base: &str) -> String {
    let b = base.as_bytes();
    if base.ends_with('e') {
        return format!("{base}d");
    }
    if base.len() > 2 && base.ends_with('y') && !is_vowel(b[b.len() - 2]) {
        return format!("{}ied", &base[..base.len() - 1]);
    }
    if base.len() >= 3
        && base.len() <= 4
        && !is_vowel(b[b.len() - 1])
        && !b"wxy".contains(&b[b.len() - 1])
        && is_vowel(b[b.len() - 2])
        && !is_vowel(b[b.len() - 3])
    {
        return format!("{}{}ed", base, b[b.len() - 1] as char);
    }
    format!("{base}ed")
}

fn third_person(base: &str) -> String {
    let b = base.as_bytes();
    for suf in ["s", "x", "z", "ch", "sh"] {
        if base.ends_with(suf) {
            return format!("{base}es");
        }
    }
    if base.len() > 1 && base.ends_with('y') && !is_vowel(b[b.len() - 2]) {
        return format!("{}ies", &base[..base.len() - 1]);
    }
    format!("{base}s")
}

/// All recognized verb forms (bases, inflections, irregulars).
fn verb_forms() -> &'static HashSet<String> {
    static FORMS: OnceLock<HashSet<String>> = OnceLock::new();
    FORMS.get_or_init(|| {
        let mut set = HashSet::new();
        for base in VERB_BASES {
            set.insert(base.to_string());
            set.insert(third_person(base));
            set.insert(gerund(base));
            set.insert(past(base));
        }
        for form in IRREGULAR_FORMS {
            set.insert(form.to_string());
        }
        set
    })
}

fn heuristic_tag(word: &str) -> Tag {
    if DETERMINERS.contains(&word) {
        Tag::Det
    } else if ADPOSITIONS.contains(&word) {
        Tag::Adp
    } else if PRONOUNS.contains(&word) {
        Tag::Pron
    } else if CONJUNCTIONS.contains(&word) {
        Tag::Conj
    } else if AUXILIARIES.contains(&word) {
        Tag::Aux
    } else if verb_forms().contains(word)
        || (word.len() >= 5 && word.ends_with("ing"))
        || (word.len() >= 4 && word.ends_with("ed"))
        || (word.len() > 3
            && word.ends_with('s')
            && verb_forms().contains(verb_base(word).as_str()))
    {
        Tag::Verb
    } else if word.len() >= 4 && word.ends_with("ly") {
        Tag::Other // adverbs never join a noun phrase
    } else {
        Tag::Noun
    }
}

fn normalize_provided_tag(tag: &str) -> Tag {
    let t = tag.to_ascii_uppercase();
    if t.starts_with("NN") || t == "NOUN" || t == "PROPN" || t.starts_with("JJ") || t == "ADJ" {
        Tag::Noun
    } else if t == "AUX" || t == "MD" {
        Tag::Aux
    } else if t.starts_with("VB") || t == "VERB" {
        Tag::Verb
    } else if t == "IN" || t == "ADP" || t == "PREP" || t == "PART" || t == "RP" {
        Tag::Adp
    } else if t == "DT" || t == "DET" {
        Tag::Det
    } else if t.starts_with("PRP") || t == "PRON" {
        Tag::Pron
    } else if t == "CC" || t == "CCONJ" || t == "SCONJ" || t == "CONJ" {
        Tag::Conj
    } else if t.starts_with("RB") || t == "ADV" || t == "UH" || t == "INTJ" {
        Tag::Other
    } else {
        Tag::Noun
    }
}

fn clean_token(raw: &str) -> Option<String> {
    let t = raw
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    if t.is_empty() {
        return None;
    }
    Some(t.strip_suffix("'s").map(str::to_string).unwrap_or(t))
}

/// `-ing` forms squeezed between a determiner/noun and a noun are compound
/// modifiers ("a cutting board"), not predicates — but only when the noun
/// follows directly; "a person holding a spoon" keeps its verb.
fn retag_ing_modifiers(tokens: &[String], tags: &mut [Tag]) {
    for i in 0..tokens.len() {
        if tags[i] == Tag::Verb
            && tokens[i].ends_with("ing")
            && i + 1 < tokens.len()
            && tags[i + 1] == Tag::Noun
            && i > 0
            && matches!(tags[i - 1], Tag::Det | Tag::Noun)
        {
            tags[i] = Tag::Noun;
        }
    }
}

/// Extract SVO triplets from one caption.
///
/// When `pos_tags` is given it must cover the caption's tokens in order as
/// `(token, tag)` pairs (Penn or UD tag names are both accepted) and the
/// built-in tagger is bypassed. Sentences with no identifiable verb
/// contribute nothing.
pub fn extract_svo(caption: &str, pos_tags: Option<&[(String, String)]>) -> Vec<SvoTriplet> {
    if let Some(tagged) = pos_tags {
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        for (word, tag) in tagged {
            if let Some(t) = clean_token(word) {
                tokens.push(t);
                tags.push(normalize_provided_tag(tag));
            }
        }
        return extract_from_tokens(&tokens, &tags);
    }

    let mut out = Vec::new();
    for sentence in caption.split(['.', '!', '?', ';']) {
        let mut subject: Option<String> = None;
        for segment in sentence.split(',') {
            let mut tokens = Vec::new();
            let mut tags = Vec::new();
            for raw in segment.split_whitespace() {
                if let Some(t) = clean_token(raw) {
                    tags.push(heuristic_tag(&t));
                    tokens.push(t);
                }
            }
            retag_ing_modifiers(&tokens, &mut tags);
            let (triplets, seg_subject) = extract_segment(&tokens, &tags, subject.clone());
            out.extend(triplets);
            if seg_subject.is_some() {
                subject = seg_subject;
            }
        }
    }
    out
}

fn extract_from_tokens(tokens: &[String], tags: &[Tag]) -> Vec<SvoTriplet> {
    let (triplets, _) = extract_segment(tokens, tags, None);
    triplets
}

/// Collect the noun run starting at `i` (skipping leading determiners);
/// returns the joined phrase and the index just past it.
fn noun_run(tokens: &[String], tags: &[Tag], mut i: usize) -> (Option<String>, usize) {
    while i < tokens.len() && tags[i] == Tag::Det {
        i += 1;
    }
    let start = i;
    while i < tokens.len() && tags[i] == Tag::Noun {
        i += 1;
    }
    if i == start {
        (None, i)
    } else {
        (Some(tokens[start..i].join(" ")), i)
    }
}

fn extract_segment(
    tokens: &[String],
    tags: &[Tag],
    inherited_subject: Option<String>,
) -> (Vec<SvoTriplet>, Option<String>) {
    // Locate the first verb group and the subject before it.
    let mut i = 0;
    let mut subject = None;
    while i < tokens.len() && !matches!(tags[i], Tag::Verb | Tag::Aux) {
        i += 1;
    }
    if i >= tokens.len() {
        return (Vec::new(), None);
    }
    // Walk back over the noun run that ends right before the group.
    let s_end = i;
    let mut s_start = s_end;
    while s_start > 0 && tags[s_start - 1] == Tag::Noun {
        s_start -= 1;
    }
    if s_start < s_end {
        subject = Some(tokens[s_start..s_end].join(" "));
    }
    let subject = match subject.or(inherited_subject) {
        Some(s) => s,
        None => return (Vec::new(), None), // never fabricate a subject
    };

    let mut triplets = Vec::new();
    let mut current: Option<SvoTriplet> = None;
    let mut last_noun: Option<String> = None;
    while i < tokens.len() {
        match tags[i] {
            Tag::Verb | Tag::Aux => {
                // Consume the whole group; the head is its last true verb,
                // or the last auxiliary for copula-only clauses.
                if let Some(t) = current.take() {
                    triplets.push(t);
                }
                let start = i;
                while i < tokens.len() && matches!(tags[i], Tag::Verb | Tag::Aux) {
                    i += 1;
                }
                let head = tokens[start..i]
                    .iter()
                    .zip(&tags[start..i])
                    .rev()
                    .find(|(_, t)| **t == Tag::Verb)
                    .map(|(w, _)| w.clone())
                    .unwrap_or_else(|| tokens[i - 1].clone());
                // A participle attaching directly to a noun takes that noun
                // as its subject ("...shows a person holding a spoon").
                let subj = if start > 0 && tags[start - 1] == Tag::Noun {
                    last_noun.clone().unwrap_or_else(|| subject.clone())
                } else {
                    subject.clone()
                };
                current = Some(SvoTriplet::new(&subj, &head, None));
            }
            Tag::Adp => {
                let adp = tokens[i].clone();
                // "to <verb>" chains a new predicate onto the same subject
                // ("a spoon is used to stir food").
                if adp == "to" && i + 1 < tokens.len() && matches!(tags[i + 1], Tag::Verb) {
                    i += 1;
                    continue;
                }
                let (pobj, next) = noun_run(tokens, tags, i + 1);
                i = next.max(i + 1);
                if let Some(p) = pobj {
                    last_noun = Some(p.clone());
                    if let Some(t) = current.as_mut() {
                        t.preps.push((adp, p));
                    }
                }
            }
            Tag::Det | Tag::Noun => {
                let (run, next) = noun_run(tokens, tags, i);
                i = next.max(i + 1);
                if let Some(r) = run {
                    last_noun = Some(r.clone());
                    match current.as_mut() {
                        Some(t) if t.object.is_none() && t.preps.is_empty() => {
                            t.object = Some(r);
                        }
                        Some(t) => {
                            // "holding a spoon and a bowl": each further
                            // noun run becomes a sibling triplet.
                            let extra = SvoTriplet::new(&t.subject, &t.verb, Some(&r));
                            triplets.push(current.take().unwrap());
                            current = Some(extra);
                        }
                        None => {}
                    }
                }
            }
            Tag::Conj | Tag::Pron | Tag::Other => {
                i += 1;
            }
        }
    }
    if let Some(t) = current.take() {
        triplets.push(t);
    }
    (triplets, Some(subject))
}

/// Serialize per-frame triplets into the Stage-2 prompt input block: one
/// frame per line, each a list of `['subject', 'verb', 'object',
/// ('prep', 'pobj')]` entries with absent objects simply omitted.
pub fn render_svo_frames(frames: &[Vec<SvoTriplet>]) -> String {
    let lines: Vec<String> = frames
        .iter()
        .map(|triplets| {
            let items: Vec<String> = triplets.iter().map(render_triplet).collect();
            format!("[{}]", items.join(", "))
        })
        .collect();
    format!("[{}]", lines.join(",\n"))
}

fn render_triplet(t: &SvoTriplet) -> String {
    let mut parts = vec![format!("'{}'", t.subject), format!("'{}'", t.verb)];
    if let Some(o) = &t.object {
        parts.push(format!("'{o}'"));
    }
    for (p, o) in &t.preps {
        parts.push(format!("('{p}', '{o}')"));
    }
    format!("[{}]", parts.join(", "))
}

/// Parse the serialized Stage-2 input block back into per-frame triplets.
/// Returns `None` on any structural mismatch. Inverse of
/// [`render_svo_frames`] for values produced by it.
pub fn parse_svo_frames(text: &str) -> Option<Vec<Vec<SvoTriplet>>> {
    #[derive(Debug)]
    enum Item {
        Str(String),
        Tuple(String, String),
        List(Vec<Item>),
    }

    fn skip_ws(b: &[u8], i: &mut usize) {
        while *i < b.len() && (b[*i] as char).is_whitespace() {
            *i += 1;
        }
    }

    fn parse_str(text: &str, b: &[u8], i: &mut usize) -> Option<String> {
        if b.get(*i) != Some(&b'\'') {
            return None;
        }
        let start = *i + 1;
        let mut j = start;
        while j < b.len() && b[j] != b'\'' {
            j += 1;
        }
        if j >= b.len() {
            return None;
        }
        *i = j + 1;
        Some(text[start..j].to_string())
    }

    fn parse_item(text: &str, b: &[u8], i: &mut usize) -> Option<Item> {
        skip_ws(b, i);
        match b.get(*i)? {
            b'[' => {
                *i += 1;
                let mut items = Vec::new();
                loop {
                    skip_ws(b, i);
                    if b.get(*i) == Some(&b']') {
                        *i += 1;
                        return Some(Item::List(items));
                    }
                    items.push(parse_item(text, b, i)?);
                    skip_ws(b, i);
                    if b.get(*i) == Some(&b',') {
                        *i += 1;
                    }
                }
            }
            b'(' => {
                *i += 1;
                skip_ws(b, i);
                let a = parse_str(text, b, i)?;
                skip_ws(b, i);
                if b.get(*i) != Some(&b',') {
                    return None;
                }
                *i += 1;
                skip_ws(b, i);
                let c = parse_str(text, b, i)?;
                skip_ws(b, i);
                if b.get(*i) != Some(&b')') {
                    return None;
                }
                *i += 1;
                Some(Item::Tuple(a, c))
            }
            b'\'' => parse_str(text, b, i).map(Item::Str),
            _ => None,
        }
    }

    let b = text.as_bytes();
    let mut i = 0;
    let top = parse_item(text, b, &mut i)?;
    skip_ws(b, &mut i);
    if i != b.len() {
        return None;
    }

    let Item::List(frames) = top else { return None };
    let mut out = Vec::new();
    for frame in frames {
        let Item::List(triplets) = frame else {
            return None;
        };
        let mut frame_out = Vec::new();
        for trip in triplets {
            let Item::List(parts) = trip else {
                return None;
            };
            let mut strings = Vec::new();
            let mut preps = Vec::new();
            for part in parts {
                match part {
                    Item::Str(s) => {
                        if !preps.is_empty() {
                            return None; // strings after tuples
                        }
                        strings.push(s);
                    }
                    Item::Tuple(p, o) => preps.push((p, o)),
                    Item::List(_) => return None,
                }
            }
            if strings.len() < 2 || strings.len() > 3 {
                return None;
            }
            frame_out.push(SvoTriplet {
                subject: strings[0].clone(),
                verb: strings[1].clone(),
                object: strings.get(2).cloned(),
                preps,
            });
        }
        out.push(frame_out);
    }
    Some(out)
}
