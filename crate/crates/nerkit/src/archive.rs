//! Single-file model archive.
//!
//! All integers are little-endian; strings are a `u32` byte length followed
//! by UTF-8.
//!
//! ```text
//! magic      8 bytes  "NERKITMA"
//! version    u32      1
//! model      u8       1 = lstm-crf, 2 = stack-lstm
//! config     string   `key = value` lines
//! words      u32 n, then n strings      (id order, UNK first)
//! chars      u32 n, then n u32 scalars  (id order, UNK first)
//! tags       u32 n, then n strings
//! counts     u32 n, then n × (string, u64)
//! params     u32 n, then n × (name string, u8 rank, rank × u64 dims, f64 values)
//! ```

use std::collections::BTreeMap;

use nerkit_core::chunker::StackLstmChunker;
use nerkit_core::corpus::{chunks_to_tags, LabeledChunk, Sentence, TagScheme, Vocabulary};
use nerkit_core::crf::CrfTagger;
use nerkit_core::mathcore::{ParamStore, Shape, Tensor};
use nerkit_core::training::SequenceModel;
use nerkit_core::Rng;
use rand::SeedableRng;

use crate::config::{ModelKind, RunConfig, MODEL_KEYS};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NERKITMA";
pub const VERSION: u32 = 1;

/// Either trained labeler.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Crf(CrfTagger),
    Chunker(StackLstmChunker),
}

impl Model {
    /// Fresh model for `config`, initialized from `seed`.
    pub fn new(config: &RunConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        let mut rng = Rng::seed_from_u64(seed);
        Ok(match config.model {
            ModelKind::LstmCrf => Model::Crf(CrfTagger::new(config.crf_config(), vocab, &mut rng)?),
            ModelKind::StackLstm => Model::Chunker(StackLstmChunker::new(config.chunker_config(), vocab, &mut rng)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Crf(_) => ModelKind::LstmCrf,
            Model::Chunker(_) => ModelKind::StackLstm,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            Model::Crf(m) => &m.vocab,
            Model::Chunker(m) => &m.vocab,
        }
    }

    pub fn scheme(&self) -> TagScheme {
        match self {
            Model::Crf(m) => m.config.scheme,
            Model::Chunker(m) => m.config.scheme,
        }
    }

    pub fn as_model(&self) -> &dyn SequenceModel {
        match self {
            Model::Crf(m) => m,
            Model::Chunker(m) => m,
        }
    }

    pub fn as_model_mut(&mut self) -> &mut dyn SequenceModel {
        match self {
            Model::Crf(m) => m,
            Model::Chunker(m) => m,
        }
    }

    pub fn predict_chunks(&self, sentence: &Sentence) -> Result<Vec<LabeledChunk>> {
        Ok(self.as_model().predict(sentence)?)
    }

    /// Predicted tags, always valid in the model's scheme.
    pub fn predict_tags(&self, sentence: &Sentence) -> Result<Vec<String>> {
        let chunks = self.predict_chunks(sentence)?;
        Ok(chunks_to_tags(&chunks, sentence.len(), self.scheme())?)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Archive(format!("count {v} does not fit in 32 bits")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len())?;
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Archive(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        let at = self.pos;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Archive(format!("invalid UTF-8 at byte {at}")))
    }

    fn usize64(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Archive(format!("dimension {v} too large")))
    }
}

fn store_of(model: &Model) -> &ParamStore {
    model.as_model().store()
}

/// Serializes `model` with the model-defining keys of `config`.
pub fn to_bytes(model: &Model, config: &RunConfig) -> Result<Vec<u8>> {
    if config.model != model.kind() {
        return Err(Error::Archive(format!("config says {}, model is {}", config.model, model.kind())));
    }
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    w.u8(match model.kind() {
        ModelKind::LstmCrf => 1,
        ModelKind::StackLstm => 2,
    });
    w.str(&config.to_text(MODEL_KEYS))?;
    let vocab = model.vocab();
    w.u32(vocab.words().len())?;
    for word in vocab.words() {
        w.str(word)?;
    }
    w.u32(vocab.chars().len())?;
    for c in vocab.chars() {
        w.0.extend_from_slice(&u32::from(*c).to_le_bytes());
    }
    w.u32(vocab.tags().len())?;
    for t in vocab.tags() {
        w.str(t)?;
    }
    w.u32(vocab.counts().len())?;
    for (word, count) in vocab.counts() {
        w.str(word)?;
        w.u64(*count as u64);
    }
    let store = store_of(model);
    w.u32(store.len())?;
    for (_, p) in store.iter() {
        w.str(&p.name)?;
        match p.value.shape() {
            Shape::Vector(n) => {
                w.u8(1);
                w.u64(n as u64);
            }
            Shape::Matrix(r, c) => {
                w.u8(2);
                w.u64(r as u64);
                w.u64(c as u64);
            }
        }
        for v in p.value.values() {
            w.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(w.0)
}

/// Rebuilds the model and the stored part of its configuration.
pub fn from_bytes(bytes: &[u8]) -> Result<(RunConfig, Model)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Archive("not a model archive (bad magic)".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Archive(format!("unsupported version {version}")));
    }
    let kind = match r.u8()? {
        1 => ModelKind::LstmCrf,
        2 => ModelKind::StackLstm,
        t => return Err(Error::Archive(format!("unknown model type {t}"))),
    };
    let config = RunConfig::from_text(&r.str()?).map_err(|e| Error::Archive(format!("stored config: {e}")))?;
    if config.model != kind {
        return Err(Error::Archive(format!("model type {kind} does not match stored config ({})", config.model)));
    }
    let words = (0..r.u32()?).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let chars = (0..r.u32()?)
        .map(|_| {
            let v = u32::try_from(r.u32()?).expect("read as u32");
            char::from_u32(v).ok_or_else(|| Error::Archive(format!("invalid character U+{v:X}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let tags = (0..r.u32()?).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let mut counts = BTreeMap::new();
    for _ in 0..r.u32()? {
        let word = r.str()?;
        counts.insert(word, r.usize64()?);
    }
    let vocab = Vocabulary::from_parts(words, chars, tags, counts)?;
    let mut model = Model::new(&config, vocab, 0)?;
    let n = r.u32()?;
    let store = model.as_model_mut().store_mut();
    if n != store.len() {
        return Err(Error::Archive(format!("archive holds {n} parameters, model has {}", store.len())));
    }
    for _ in 0..n {
        let name = r.str()?;
        let shape = match r.u8()? {
            1 => Shape::Vector(r.usize64()?),
            2 => Shape::Matrix(r.usize64()?, r.usize64()?),
            k => return Err(Error::Archive(format!("parameter {name}: unknown rank tag {k}"))),
        };
        let values = (0..shape.len()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let tensor = Tensor::new(shape, values).map_err(|e| Error::Archive(format!("parameter {name}: {e}")))?;
        store.assign(&name, tensor).map_err(|e| Error::Archive(format!("parameter {name}: {e}")))?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Archive(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((config, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_corpus;
    use nerkit_core::corpus::build_vocab;

    fn small(kind: ModelKind) -> (RunConfig, Model, Vec<Sentence>) {
        let config = RunConfig::from_text(&format!(
            "model = {kind}\nword_dim = 5\nchar_dim = 3\nchar_hidden = 2\nhidden_dim = 3\nprojection_dim = 3\n\
             stack_hidden = 3\naction_dim = 2\ncompose_hidden = 2\ncompose_dim = 3\nstate_hidden = 3\n"
        ))
        .unwrap();
        let sentences = generate_corpus(5, 1, TagScheme::Iobes);
        let vocab = build_vocab(&sentences, 1).unwrap();
        let model = Model::new(&config, vocab, 4).unwrap();
        (config, model, sentences)
    }

    #[test]
    fn round_trip_both_models() {
        for kind in [ModelKind::LstmCrf, ModelKind::StackLstm] {
            let (config, model, sentences) = small(kind);
            let bytes = to_bytes(&model, &config).unwrap();
            let (stored, back) = from_bytes(&bytes).unwrap();
            assert_eq!(back, model);
            assert_eq!(stored.model, kind);
            assert_eq!(to_bytes(&back, &stored).unwrap(), bytes);
            for s in &sentences {
                assert_eq!(back.predict_tags(s).unwrap(), model.predict_tags(s).unwrap());
            }
        }
    }

    #[test]
    fn corrupt_archives_are_rejected() {
        let (config, model, _) = small(ModelKind::LstmCrf);
        let bytes = to_bytes(&model, &config).unwrap();
        assert!(matches!(from_bytes(b"nonsense"), Err(Error::Archive(_))));
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Archive(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(from_bytes(&extra), Err(Error::Archive(_))));
        let mut wrong_type = bytes.clone();
        wrong_type[12] = 2;
        assert!(matches!(from_bytes(&wrong_type), Err(Error::Archive(_))));
        let mismatched = RunConfig { model: ModelKind::StackLstm, ..config };
        assert!(matches!(to_bytes(&model, &mismatched), Err(Error::Archive(_))));
    }
}
