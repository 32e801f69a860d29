//! CoNLL column corpora, tagging schemes and vocabularies.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use unicode_properties::{GeneralCategory, UnicodeGeneralCategory};

use crate::error::{Error, Result};

/// Replaces every Unicode decimal digit with `'0'`.
pub fn normalize_digits(s: &str) -> String {
    s.chars().map(|c| if c.general_category() == GeneralCategory::DecimalNumber { '0' } else { c }).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// The surface with digits zeroed, or the surface itself when
    /// normalization is off for the corpus.
    pub normalized: String,
    pub gold_tag: Option<String>,
}

impl Token {
    pub fn new(surface: &str, normalize: bool, gold_tag: Option<&str>) -> Self {
        Token {
            surface: surface.to_string(),
            normalized: if normalize { normalize_digits(surface) } else { surface.to_string() },
            gold_tag: gold_tag.map(str::to_string),
        }
    }
}

/// A non-empty sequence of tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Domain("a sentence needs at least one token".into()));
        }
        Ok(Sentence { tokens })
    }

    /// Untagged sentence from surfaces.
    pub fn from_words(words: &[&str], normalize: bool) -> Result<Self> {
        Sentence::new(words.iter().map(|w| Token::new(w, normalize, None)).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Gold tags, if every token has one.
    pub fn gold_tags(&self) -> Option<Vec<&str>> {
        self.tokens.iter().map(|t| t.gold_tag.as_deref()).collect()
    }

    pub fn with_tags(&self, tags: Vec<String>) -> Result<Sentence> {
        if tags.len() != self.len() {
            return Err(Error::Usage(format!("{} tags for {} tokens", tags.len(), self.len())));
        }
        let tokens = self.tokens.iter().zip(tags).map(|(t, tag)| Token { gold_tag: Some(tag), ..t.clone() }).collect();
        Ok(Sentence { tokens })
    }

    /// Gold chunks read under `scheme`; an untagged sentence has none.
    pub fn gold_chunks(&self, scheme: TagScheme) -> Result<Vec<LabeledChunk>> {
        match self.gold_tags() {
            Some(tags) => tags_to_chunks(&tags, scheme),
            None => Ok(Vec::new()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TagScheme {
    Iob1,
    Iob2,
    Iobes,
}

impl FromStr for TagScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iob1" | "iob" => Ok(TagScheme::Iob1),
            "iob2" | "bio" => Ok(TagScheme::Iob2),
            "iobes" | "bioes" | "bilou" => Ok(TagScheme::Iobes),
            other => Err(Error::Usage(format!("unknown tag scheme {other:?}"))),
        }
    }
}

impl fmt::Display for TagScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagScheme::Iob1 => "iob1",
            TagScheme::Iob2 => "iob2",
            TagScheme::Iobes => "iobes",
        })
    }
}

/// Inclusive token span `[start, end]` with an entity type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledChunk {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl LabeledChunk {
    pub fn new(start: usize, end: usize, label: &str) -> Self {
        LabeledChunk { start, end, label: label.to_string() }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Prefix {
    O,
    B,
    I,
    E,
    S,
}

fn split_tag(tag: &str) -> Option<(Prefix, &str)> {
    if tag == "O" {
        return Some((Prefix::O, ""));
    }
    let (p, label) = tag.split_once('-')?;
    if label.is_empty() {
        return None;
    }
    let prefix = match p {
        "B" => Prefix::B,
        "I" => Prefix::I,
        "E" => Prefix::E,
        "S" => Prefix::S,
        _ => return None,
    };
    Some((prefix, label))
}

fn invalid(index: usize, message: String) -> Error {
    Error::Validation { index, message }
}

/// Checks `tags` against the grammar of `scheme`.
pub fn validate<S: AsRef<str>>(tags: &[S], scheme: TagScheme) -> Result<()> {
    let mut prev: Option<(Prefix, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let (p, label) = split_tag(tag).ok_or_else(|| invalid(i, format!("malformed tag {tag:?}")))?;
        let continues = |allowed: &[Prefix]| matches!(prev, Some((q, l)) if l == label && allowed.contains(&q));
        match scheme {
            TagScheme::Iob1 | TagScheme::Iob2 if matches!(p, Prefix::E | Prefix::S) => {
                return Err(invalid(i, format!("{tag} is not part of {scheme}")));
            }
            TagScheme::Iob2 if p == Prefix::I && !continues(&[Prefix::B, Prefix::I]) => {
                return Err(invalid(i, format!("{tag} does not continue a {label} chunk")));
            }
            TagScheme::Iob1 if p == Prefix::B && !continues(&[Prefix::B, Prefix::I]) => {
                return Err(invalid(i, format!("{tag} does not follow a {label} chunk")));
            }
            TagScheme::Iobes => {
                let open = matches!(prev, Some((Prefix::B | Prefix::I, _)));
                if open && !continues(&[Prefix::B, Prefix::I]) {
                    return Err(invalid(i, format!("{tag} interrupts an open chunk")));
                }
                if open && !matches!(p, Prefix::I | Prefix::E) {
                    return Err(invalid(i, format!("{tag} interrupts an open chunk")));
                }
                if !open && matches!(p, Prefix::I | Prefix::E) {
                    return Err(invalid(i, format!("{tag} has no opening B-{label}")));
                }
            }
            _ => {}
        }
        prev = Some((p, label));
    }
    if scheme == TagScheme::Iobes {
        if let Some((Prefix::B | Prefix::I, label)) = prev {
            return Err(invalid(tags.len() - 1, format!("{label} chunk is never closed")));
        }
    }
    Ok(())
}

/// Chunks of a sequence valid under `scheme`.
pub fn tags_to_chunks<S: AsRef<str>>(tags: &[S], scheme: TagScheme) -> Result<Vec<LabeledChunk>> {
    validate(tags, scheme)?;
    Ok(tags_to_chunks_lenient(tags))
}

/// conlleval-style reading that accepts any sequence: an `I-`/`E-` tag that
/// does not continue an open chunk of its type starts a new one, and
/// malformed tags read as `O`.
pub fn tags_to_chunks_lenient<S: AsRef<str>>(tags: &[S]) -> Vec<LabeledChunk> {
    let mut chunks = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    let close = |open: &mut Option<(usize, &str)>, end: usize, chunks: &mut Vec<LabeledChunk>| {
        if let Some((start, label)) = open.take() {
            chunks.push(LabeledChunk::new(start, end, label));
        }
    };
    for (i, tag) in tags.iter().enumerate() {
        let (p, label) = split_tag(tag.as_ref()).unwrap_or((Prefix::O, ""));
        match p {
            Prefix::O => close(&mut open, i.wrapping_sub(1), &mut chunks),
            Prefix::B | Prefix::S => {
                close(&mut open, i.wrapping_sub(1), &mut chunks);
                open = Some((i, label));
            }
            Prefix::I | Prefix::E => {
                if !matches!(open, Some((_, l)) if l == label) {
                    close(&mut open, i.wrapping_sub(1), &mut chunks);
                    open = Some((i, label));
                }
            }
        }
        if matches!(p, Prefix::S | Prefix::E) {
            close(&mut open, i, &mut chunks);
        }
    }
    close(&mut open, tags.len().wrapping_sub(1), &mut chunks);
    chunks
}

/// Chunks must be sorted, non-overlapping and inside `[0, len)`.
pub fn validate_chunks(chunks: &[LabeledChunk], len: usize) -> Result<()> {
    let mut next_free = 0;
    for c in chunks {
        if c.start > c.end || c.end >= len {
            return Err(Error::Chunks(format!("chunk {}..={} out of range for length {len}", c.start, c.end)));
        }
        if c.start < next_free {
            return Err(Error::Chunks(format!("chunk {}..={} overlaps or is out of order", c.start, c.end)));
        }
        if c.label.is_empty() {
            return Err(Error::Chunks(format!("chunk {}..={} has an empty label", c.start, c.end)));
        }
        next_free = c.end + 1;
    }
    Ok(())
}

pub fn chunks_to_tags(chunks: &[LabeledChunk], len: usize, scheme: TagScheme) -> Result<Vec<String>> {
    validate_chunks(chunks, len)?;
    let mut tags: Vec<String> = (0..len).map(|_| "O".to_string()).collect();
    let mut prev: Option<&LabeledChunk> = None;
    for c in chunks {
        let l = &c.label;
        match scheme {
            TagScheme::Iob2 => {
                tags[c.start] = format!("B-{l}");
                for t in &mut tags[c.start + 1..=c.end] {
                    *t = format!("I-{l}");
                }
            }
            TagScheme::Iob1 => {
                let adjacent = matches!(prev, Some(p) if p.end + 1 == c.start && p.label == c.label);
                for t in &mut tags[c.start..=c.end] {
                    *t = format!("I-{l}");
                }
                if adjacent {
                    tags[c.start] = format!("B-{l}");
                }
            }
            TagScheme::Iobes => {
                if c.start == c.end {
                    tags[c.start] = format!("S-{l}");
                } else {
                    tags[c.start] = format!("B-{l}");
                    for t in &mut tags[c.start + 1..c.end] {
                        *t = format!("I-{l}");
                    }
                    tags[c.end] = format!("E-{l}");
                }
            }
        }
        prev = Some(c);
    }
    Ok(tags)
}

/// Re-encodes a valid sequence, preserving its chunks exactly.
pub fn convert_scheme<S: AsRef<str>>(tags: &[S], from: TagScheme, to: TagScheme) -> Result<Vec<String>> {
    let chunks = tags_to_chunks(tags, from)?;
    chunks_to_tags(&chunks, tags.len(), to)
}

/// Which whitespace-separated column holds the tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Column {
    Last,
    At(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConllOptions {
    pub token_column: usize,
    /// `None` reads untagged text.
    pub tag_column: Option<Column>,
    pub normalize_digits: bool,
}

impl Default for ConllOptions {
    fn default() -> Self {
        ConllOptions { token_column: 0, tag_column: Some(Column::Last), normalize_digits: true }
    }
}

/// Parses whitespace-separated columns; blank lines end sentences and
/// `-DOCSTART-` lines are dropped.
pub fn parse_conll(text: &str, options: &ConllOptions) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            if !current.is_empty() {
                sentences.push(Sentence { tokens: core::mem::take(&mut current) });
            }
            continue;
        }
        if cols[0].starts_with("-DOCSTART-") {
            continue;
        }
        let line_no = i + 1;
        let need = match options.tag_column {
            Some(Column::At(c)) => options.token_column.max(c) + 1,
            _ => options.token_column + 1,
        };
        if cols.len() < need {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least {need} columns, found {}", cols.len()),
            });
        }
        let tag = match options.tag_column {
            None => None,
            Some(Column::Last) => {
                if cols.len() < 2 {
                    return Err(Error::Parse { line: line_no, message: "missing tag column".into() });
                }
                Some(cols[cols.len() - 1])
            }
            Some(Column::At(c)) => Some(cols[c]),
        };
        current.push(Token::new(cols[options.token_column], options.normalize_digits, tag));
    }
    if !current.is_empty() {
        sentences.push(Sentence { tokens: current });
    }
    Ok(sentences)
}

/// One `surface tag` line per token (just `surface` when untagged), a blank
/// line after every sentence.
pub fn write_conll(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for t in &s.tokens {
            out.push_str(&t.surface);
            if let Some(tag) = &t.gold_tag {
                out.push(' ');
                out.push_str(tag);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub const UNK_WORD: &str = "<UNK>";
pub const UNK_CHAR: char = '\u{FFFD}';

/// Word, character and tag inventories with training frequencies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    word_ids: BTreeMap<String, usize>,
    chars: Vec<char>,
    char_ids: BTreeMap<char, usize>,
    tags: Vec<String>,
    tag_ids: BTreeMap<String, usize>,
    counts: BTreeMap<String, usize>,
    singletons: BTreeSet<String>,
}

/// Counts normalized surfaces; words rarer than `min_word_freq` map to UNK.
pub fn build_vocab(sentences: &[Sentence], min_word_freq: usize) -> Result<Vocabulary> {
    if sentences.is_empty() {
        return Err(Error::Usage("cannot build a vocabulary from no sentences".into()));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut chars = BTreeSet::new();
    let mut tags = BTreeSet::new();
    for t in sentences.iter().flat_map(|s| &s.tokens) {
        *counts.entry(t.normalized.clone()).or_default() += 1;
        chars.extend(t.normalized.chars());
        if let Some(tag) = &t.gold_tag {
            tags.insert(tag.clone());
        }
    }
    let mut ranked: Vec<(&String, &usize)> = counts.iter().filter(|(_, c)| **c >= min_word_freq.max(1)).collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let words = ranked.into_iter().map(|(w, _)| w.clone()).collect();
    let chars = chars.into_iter().collect();
    Vocabulary::from_parts(words, chars, tags.into_iter().collect(), counts)
}

impl Vocabulary {
    /// Assembles a vocabulary; UNK entries are added in front.
    pub fn from_parts(
        words: Vec<String>,
        chars: Vec<char>,
        tags: Vec<String>,
        counts: BTreeMap<String, usize>,
    ) -> Result<Self> {
        let mut all_words = Vec::with_capacity(words.len() + 1);
        all_words.push(UNK_WORD.to_string());
        all_words.extend(words.into_iter().filter(|w| w != UNK_WORD));
        let mut all_chars = Vec::with_capacity(chars.len() + 1);
        all_chars.push(UNK_CHAR);
        all_chars.extend(chars.into_iter().filter(|c| *c != UNK_CHAR));
        let mut tags = tags;
        tags.sort_by(|a, b| (a != "O").cmp(&(b != "O")).then_with(|| a.cmp(b)));
        tags.dedup();

        let word_ids = index(&all_words)?;
        let char_ids = index(&all_chars)?;
        let tag_ids = index(&tags)?;
        let singletons = counts.iter().filter(|(_, c)| **c == 1).map(|(w, _)| w.clone()).collect();
        Ok(Vocabulary { words: all_words, word_ids, chars: all_chars, char_ids, tags, tag_ids, counts, singletons })
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn unk_word(&self) -> usize {
        0
    }

    pub fn unk_char(&self) -> usize {
        0
    }

    /// Id of a normalized surface, UNK when unseen.
    pub fn word_id(&self, word: &str) -> usize {
        self.word_ids.get(word).copied().unwrap_or(0)
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.word_ids.contains_key(word)
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_ids.get(&c).copied().unwrap_or(0)
    }

    pub fn tag_id(&self, tag: &str) -> Option<usize> {
        self.tag_ids.get(tag).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn counts(&self) -> &BTreeMap<String, usize> {
        &self.counts
    }

    pub fn frequency(&self, word: &str) -> usize {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn is_singleton(&self, word: &str) -> bool {
        self.singletons.contains(word)
    }

    pub fn singletons(&self) -> &BTreeSet<String> {
        &self.singletons
    }

    /// Entity types mentioned by the tag inventory, sorted.
    pub fn labels(&self) -> Vec<String> {
        let set: BTreeSet<&str> =
            self.tags.iter().filter_map(|t| split_tag(t)).map(|(_, l)| l).filter(|l| !l.is_empty()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Adds words (with zero training count) that were not already present.
    pub fn extend_words<I: IntoIterator<Item = String>>(&mut self, words: I) {
        for w in words {
            if !self.word_ids.contains_key(&w) {
                self.word_ids.insert(w.clone(), self.words.len());
                self.words.push(w);
            }
        }
    }
}

fn index<T: Ord + Clone + fmt::Debug>(items: &[T]) -> Result<BTreeMap<T, usize>> {
    let mut map = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        if map.insert(item.clone(), i).is_some() {
            return Err(Error::Usage(format!("duplicate vocabulary entry {item:?}")));
        }
    }
    Ok(map)
}
