//! Per-token input vectors: a character BiLSTM summary concatenated with a
//! word lookup embedding, then a dropout mask.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;

use crate::corpus::{Sentence, Token, Vocabulary};
use crate::error::{Error, Result};
use crate::mathcore::{NodeId, ParamId, ParamStore, Shape, Tape, Tensor};
use crate::rnn::{BiLstm, LstmOptions};
use crate::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordRepConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    /// Hidden size of each character LSTM direction.
    pub char_hidden: usize,
    pub use_char: bool,
    pub dropout: f64,
    /// Chance that a training singleton is looked up as UNK.
    pub singleton_unk: f64,
    pub lstm: LstmOptions,
}

impl Default for WordRepConfig {
    fn default() -> Self {
        WordRepConfig {
            word_dim: 100,
            char_dim: 25,
            char_hidden: 25,
            use_char: true,
            dropout: 0.5,
            singleton_unk: 0.5,
            lstm: LstmOptions::default(),
        }
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)` at training
/// time so evaluation uses activations unchanged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutPolicy {
    rate: f64,
}

impl DropoutPolicy {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Usage(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(DropoutPolicy { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// A fresh mask, or `None` when nothing would be dropped.
    pub fn mask(&self, len: usize, rng: &mut Rng) -> Option<Vec<f64>> {
        if self.rate == 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.rate);
        Some((0..len).map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep }).collect())
    }

    pub fn apply(&self, tape: &mut Tape, x: NodeId, mode: Mode, rng: &mut Rng) -> Result<NodeId> {
        if mode == Mode::Eval {
            return Ok(x);
        }
        match self.mask(tape.value(x).len(), rng) {
            Some(m) => tape.mask(x, m),
            None => Ok(x),
        }
    }
}

/// `|V| × d_word` lookup table; row 0 is UNK.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordEmbeddingTable {
    pub param: ParamId,
    pub dim: usize,
}

/// `|C| × d_char` lookup table; row 0 is the unknown character.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharEmbeddingTable {
    pub param: ParamId,
    pub dim: usize,
}

/// Forward and backward character LSTMs whose final states are concatenated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharWordComposer {
    pub bilstm: BiLstm,
}

impl CharWordComposer {
    pub fn output_dim(&self) -> usize {
        self.bilstm.output_dim()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordRepresenter {
    pub config: WordRepConfig,
    pub words: WordEmbeddingTable,
    pub chars: Option<(CharEmbeddingTable, CharWordComposer)>,
    pub dropout: DropoutPolicy,
}

impl WordRepresenter {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, vocab: &Vocabulary, config: WordRepConfig) -> Result<Self> {
        if config.word_dim == 0 {
            return Err(Error::Usage("word dimension must be positive".into()));
        }
        if !(0.0..=1.0).contains(&config.singleton_unk) {
            return Err(Error::Usage(format!("singleton UNK probability {} outside [0, 1]", config.singleton_unk)));
        }
        let dropout = DropoutPolicy::new(config.dropout)?;
        let param = store.add_uniform("word.embeddings", Shape::Matrix(vocab.num_words(), config.word_dim), rng)?;
        let words = WordEmbeddingTable { param, dim: config.word_dim };
        let chars = if config.use_char {
            if config.char_dim == 0 {
                return Err(Error::Usage("character dimension must be positive".into()));
            }
            let param = store.add_uniform("char.embeddings", Shape::Matrix(vocab.num_chars(), config.char_dim), rng)?;
            let bilstm = BiLstm::new(store, rng, "char.lstm", config.char_dim, config.char_hidden, config.lstm)?;
            Some((CharEmbeddingTable { param, dim: config.char_dim }, CharWordComposer { bilstm }))
        } else {
            None
        };
        Ok(WordRepresenter { config, words, chars, dropout })
    }

    /// Width of every token embedding.
    pub fn output_dim(&self) -> usize {
        self.words.dim + self.chars.as_ref().map_or(0, |(_, c)| c.output_dim())
    }

    /// Lookup row for `token`; training singletons fall back to UNK at random.
    pub fn word_id(&self, vocab: &Vocabulary, token: &Token, mode: Mode, rng: &mut Rng) -> usize {
        let word = &token.normalized;
        if mode == Mode::Train && vocab.is_singleton(word) && rng.random::<f64>() < self.config.singleton_unk {
            return vocab.unk_word();
        }
        vocab.word_id(word)
    }

    /// Character summary of `word`, `2 · char_hidden` wide.
    pub fn char_compose(&self, tape: &mut Tape, store: &ParamStore, vocab: &Vocabulary, word: &str) -> Result<NodeId> {
        let Some((table, composer)) = &self.chars else {
            return Err(Error::Usage("character model is disabled".into()));
        };
        if word.is_empty() {
            return Err(Error::Domain("cannot compose an empty word".into()));
        }
        let xs = word.chars().map(|c| tape.lookup(store, table.param, vocab.char_id(c))).collect::<Result<Vec<_>>>()?;
        composer.bilstm.summarize(tape, store, &xs)
    }

    pub fn token_embedding(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        vocab: &Vocabulary,
        token: &Token,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<NodeId> {
        let id = self.word_id(vocab, token, mode, rng);
        let word = tape.lookup(store, self.words.param, id)?;
        let full = if self.chars.is_some() {
            let chars = self.char_compose(tape, store, vocab, &token.normalized)?;
            tape.concat(&[chars, word])?
        } else {
            word
        };
        self.dropout.apply(tape, full, mode, rng)
    }

    pub fn embed_sentence(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        vocab: &Vocabulary,
        sentence: &Sentence,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Vec<NodeId>> {
        sentence.tokens().iter().map(|t| self.token_embedding(tape, store, vocab, t, mode, rng)).collect()
    }
}

/// Vectors read from a whitespace-separated text embedding file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

/// Reads `word v1 … vd` lines, with an optional `count dim` header line.
///
/// Only words accepted by `keep` are retained; every line is still checked
/// for its dimension. Line numbers in errors are 1-based.
pub fn parse_embeddings<I, S, F>(lines: I, expected_dim: usize, keep: F) -> Result<EmbeddingFile>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
    F: Fn(&str) -> bool,
{
    let mut file = EmbeddingFile { dim: expected_dim, vectors: BTreeMap::new() };
    for (i, line) in lines.into_iter().enumerate() {
        let line_no = i + 1;
        let line = line.as_ref();
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if i == 0 && rest.len() == 1 {
            if let (Ok(_), Ok(dim)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                if dim != expected_dim {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("dimension mismatch: file declares {dim}, table expects {expected_dim}"),
                    });
                }
                continue;
            }
        }
        if rest.len() != expected_dim {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {expected_dim} values, found {}", rest.len()),
            });
        }
        if !keep(word) {
            continue;
        }
        let values = rest
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Parse { line: line_no, message: format!("malformed value {v:?}") })
            })
            .collect::<Result<Vec<_>>>()?;
        file.vectors.entry(word.to_string()).or_insert(values);
    }
    Ok(file)
}

/// Words whose vectors could matter for `vocab`: exact and lowercased forms.
pub fn lookup_keys(vocab: &Vocabulary) -> BTreeSet<String> {
    vocab.words().iter().flat_map(|w| [w.clone(), w.to_lowercase()]).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PretrainedReport {
    pub exact: usize,
    pub lowercased: usize,
    /// Vocabulary ids left at their random initialization.
    pub random: Vec<usize>,
}

/// Copies file vectors into the word table: exact match first, then the
/// lowercased word. Other rows keep their random initialization and stay
/// trainable like the rest.
pub fn load_pretrained(
    table: &WordEmbeddingTable,
    store: &mut ParamStore,
    vocab: &Vocabulary,
    file: &EmbeddingFile,
) -> Result<PretrainedReport> {
    if file.dim != table.dim {
        return Err(Error::Shape {
            op: "load_pretrained",
            detail: format!("file vectors are {}-dimensional, table rows {}", file.dim, table.dim),
        });
    }
    let mut report = PretrainedReport::default();
    let matrix = store.get_mut(table.param);
    for (id, word) in vocab.words().iter().enumerate() {
        let found = if let Some(v) = file.vectors.get(word) {
            report.exact += 1;
            Some(v)
        } else if let Some(v) = file.vectors.get(&word.to_lowercase()) {
            report.lowercased += 1;
            Some(v)
        } else {
            None
        };
        match found {
            Some(v) => matrix.row_mut(id).copy_from_slice(v),
            None => report.random.push(id),
        }
    }
    Ok(report)
}

/// The eval-mode embedding as plain values, for inspection.
pub fn embedding_values(
    rep: &WordRepresenter,
    store: &ParamStore,
    vocab: &Vocabulary,
    token: &Token,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let mut rng = <Rng as rand::SeedableRng>::seed_from_u64(0);
    let node = rep.token_embedding(&mut tape, store, vocab, token, Mode::Eval, &mut rng)?;
    Ok(tape.value(node).clone())
}
