//! BiLSTM-CRF tagger.
//!
//! Emission scores `P` (`n × k`) come from a BiLSTM over the token
//! embeddings, one tanh hidden layer and a linear projection. Transition
//! scores `A` (`(k+2) × (k+2)`) add a start row and an end column. A tag
//! sequence `y` scores
//!
//! ```text
//! s(X, y) = Σ_{i=0..n} A[y_i, y_{i+1}] + Σ_{i=1..n} P[i, y_i],   y_0 = start, y_{n+1} = end
//! ```
//!
//! Training minimizes `log Σ_ỹ exp s(X, ỹ) - s(X, y)` over all `k^n`
//! sequences, scheme-invalid ones included; decoding is Viterbi.

#![allow(clippy::needless_range_loop)]

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{tags_to_chunks_lenient, LabeledChunk, Sentence, TagScheme, Vocabulary};
use crate::error::{shape_err, Error, Result};
use crate::mathcore::{logsumexp, Function, NodeId, ParamId, ParamStore, Shape, Tape, Tensor};
use crate::rnn::BiLstm;
use crate::training::SequenceModel;
use crate::wordrep::{Mode, WordRepConfig, WordRepresenter};
use crate::Rng;

/// Checks `P` is `n × k` and `A` is `(k+2) × (k+2)`; returns `(n, k)`.
fn dims(emissions: &Tensor, transitions: &Tensor) -> Result<(usize, usize)> {
    let Shape::Matrix(n, k) = emissions.shape() else {
        return Err(shape_err("crf", format!("emissions {} are not a matrix", emissions.shape())));
    };
    if transitions.shape() != Shape::Matrix(k + 2, k + 2) {
        return Err(shape_err("crf", format!("transitions {} for {k} tags", transitions.shape())));
    }
    Ok((n, k))
}

/// `s(X, y)`: the `n + 1` transition terms summed first, then the `n` emissions.
pub fn sequence_score(emissions: &Tensor, transitions: &Tensor, tags: &[usize]) -> Result<f64> {
    let (n, k) = dims(emissions, transitions)?;
    if tags.len() != n {
        return Err(Error::Domain(format!("{} tags for {n} positions", tags.len())));
    }
    if let Some(bad) = tags.iter().find(|t| **t >= k) {
        return Err(Error::Domain(format!("tag index {bad} out of range for {k} tags")));
    }
    let (start, end) = (k, k + 1);
    let mut path = Vec::with_capacity(n + 2);
    path.push(start);
    path.extend_from_slice(tags);
    path.push(end);
    let trans: f64 = path.windows(2).map(|w| transitions.get(w[0], w[1])).sum();
    let emit: f64 = tags.iter().enumerate().map(|(i, &t)| emissions.get(i, t)).sum();
    Ok(trans + emit)
}

/// Forward log-scores `alpha[i][j]`: all prefixes ending in tag `j` at `i`.
fn forward_scores(emissions: &Tensor, transitions: &Tensor, n: usize, k: usize) -> Vec<Vec<f64>> {
    let mut alpha = vec![vec![0.0; k]; n];
    for j in 0..k {
        alpha[0][j] = transitions.get(k, j) + emissions.get(0, j);
    }
    let mut buf = vec![0.0; k];
    for i in 1..n {
        for j in 0..k {
            for (p, b) in buf.iter_mut().enumerate() {
                *b = alpha[i - 1][p] + transitions.get(p, j);
            }
            alpha[i][j] = logsumexp(&buf).expect("k > 0") + emissions.get(i, j);
        }
    }
    alpha
}

/// Backward log-scores `beta[i][j]`: all suffixes after tag `j` at `i`.
fn backward_scores(emissions: &Tensor, transitions: &Tensor, n: usize, k: usize) -> Vec<Vec<f64>> {
    let mut beta = vec![vec![0.0; k]; n];
    for j in 0..k {
        beta[n - 1][j] = transitions.get(j, k + 1);
    }
    let mut buf = vec![0.0; k];
    for i in (0..n - 1).rev() {
        for j in 0..k {
            for (q, b) in buf.iter_mut().enumerate() {
                *b = transitions.get(j, q) + emissions.get(i + 1, q) + beta[i + 1][q];
            }
            beta[i][j] = logsumexp(&buf).expect("k > 0");
        }
    }
    beta
}

fn check_nonempty(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("empty sentence".into()));
    }
    Ok(())
}

/// `log Σ_ỹ exp s(X, ỹ)` by the forward recursion, `O(n k²)`.
pub fn log_partition(emissions: &Tensor, transitions: &Tensor) -> Result<f64> {
    let (n, k) = dims(emissions, transitions)?;
    check_nonempty(n)?;
    let alpha = forward_scores(emissions, transitions, n, k);
    let last: Vec<f64> = (0..k).map(|j| alpha[n - 1][j] + transitions.get(j, k + 1)).collect();
    logsumexp(&last)
}

/// `-log p(gold | X)`.
pub fn nll(emissions: &Tensor, transitions: &Tensor, gold: &[usize]) -> Result<f64> {
    Ok(log_partition(emissions, transitions)? - sequence_score(emissions, transitions, gold)?)
}

/// Highest-scoring sequence and its score. Ties go to the lowest tag index,
/// both in backpointers and in the final choice.
pub fn viterbi_decode(emissions: &Tensor, transitions: &Tensor) -> Result<(Vec<usize>, f64)> {
    let (n, k) = dims(emissions, transitions)?;
    check_nonempty(n)?;
    let mut delta: Vec<f64> = (0..k).map(|j| transitions.get(k, j) + emissions.get(0, j)).collect();
    let mut back = vec![vec![0usize; k]; n];
    for i in 1..n {
        let mut next = vec![0.0; k];
        for j in 0..k {
            let mut best = (0, f64::NEG_INFINITY);
            for (p, d) in delta.iter().enumerate() {
                let s = d + transitions.get(p, j);
                if s > best.1 {
                    best = (p, s);
                }
            }
            back[i][j] = best.0;
            next[j] = best.1 + emissions.get(i, j);
        }
        delta = next;
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (j, d) in delta.iter().enumerate() {
        let s = d + transitions.get(j, k + 1);
        if s > best.1 {
            best = (j, s);
        }
    }
    let mut path = vec![best.0; n];
    for i in (1..n).rev() {
        path[i - 1] = back[i][path[i]];
    }
    // Rescore along the path so the value is the same sum `sequence_score` gives.
    let score = sequence_score(emissions, transitions, &path)?;
    Ok((path, score))
}

/// Largest `k^n` that [`marginal_check`] will enumerate.
pub const ENUMERATION_LIMIT: usize = 1_000_000;

/// `Σ_y p(y | X)` by explicit enumeration; 1 up to rounding.
pub fn marginal_check(emissions: &Tensor, transitions: &Tensor) -> Result<f64> {
    let (n, k) = dims(emissions, transitions)?;
    check_nonempty(n)?;
    let total = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(k).filter(|t| *t <= ENUMERATION_LIMIT));
    let Some(total) = total else {
        return Err(Error::Domain(format!("{k}^{n} sequences exceed the enumeration limit")));
    };
    let z = log_partition(emissions, transitions)?;
    let mut tags = vec![0usize; n];
    let mut sum = 0.0;
    for mut code in 0..total {
        for t in tags.iter_mut() {
            *t = code % k;
            code /= k;
        }
        sum += libm::exp(sequence_score(emissions, transitions, &tags)? - z);
    }
    Ok(sum)
}

/// Node marginals `μ[i][j]` and expected transition counts (start row and
/// end column included) under the CRF distribution.
pub fn expected_counts(emissions: &Tensor, transitions: &Tensor) -> Result<(Vec<Vec<f64>>, Tensor)> {
    let (n, k) = dims(emissions, transitions)?;
    check_nonempty(n)?;
    let alpha = forward_scores(emissions, transitions, n, k);
    let beta = backward_scores(emissions, transitions, n, k);
    let z = log_partition(emissions, transitions)?;
    let unary: Vec<Vec<f64>> =
        (0..n).map(|i| (0..k).map(|j| libm::exp(alpha[i][j] + beta[i][j] - z)).collect()).collect();
    let mut pair = Tensor::zeros(Shape::Matrix(k + 2, k + 2));
    for j in 0..k {
        pair.set(k, j, unary[0][j]);
        pair.set(j, k + 1, unary[n - 1][j]);
    }
    for i in 0..n - 1 {
        for p in 0..k {
            for q in 0..k {
                let lp = alpha[i][p] + transitions.get(p, q) + emissions.get(i + 1, q) + beta[i + 1][q] - z;
                let v = pair.get(p, q) + libm::exp(lp);
                pair.set(p, q, v);
            }
        }
    }
    Ok((unary, pair))
}

/// Sentence negative log-likelihood as a tape operation on `[P, A]`.
///
/// The gradient is the marginal minus the gold indicator, for emissions and
/// transitions alike.
pub struct CrfNll {
    gold: Vec<usize>,
}

impl CrfNll {
    pub fn new(gold: Vec<usize>) -> Self {
        CrfNll { gold }
    }

    pub fn record(self, tape: &mut Tape, emissions: NodeId, transitions: NodeId) -> Result<NodeId> {
        tape.custom(Box::new(self), &[emissions, transitions])
    }
}

impl Function for CrfNll {
    fn name(&self) -> &'static str {
        "crf_nll"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        Ok(Tensor::scalar(nll(inputs[0], inputs[1], &self.gold)?))
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Vec<f64>> {
        let (p, a) = (inputs[0], inputs[1]);
        let k = p.cols();
        let (unary, pair) = expected_counts(p, a).expect("validated in forward");
        let mut dp: Vec<f64> = unary.concat();
        let mut da = pair.into_values();
        let width = k + 2;
        let mut prev = k;
        for (i, &t) in self.gold.iter().enumerate() {
            dp[i * k + t] -= 1.0;
            da[prev * width + t] -= 1.0;
            prev = t;
        }
        da[prev * width + k + 1] -= 1.0;
        for v in dp.iter_mut().chain(da.iter_mut()) {
            *v *= grad[0];
        }
        vec![dp, da]
    }
}

/// Tag inventory for `labels` under `scheme`: `O` first, then per label the
/// scheme's prefixes in `B I E S` order.
pub fn tag_set(labels: &[String], scheme: TagScheme) -> Vec<String> {
    let prefixes: &[&str] = match scheme {
        TagScheme::Iob1 | TagScheme::Iob2 => &["B", "I"],
        TagScheme::Iobes => &["B", "I", "E", "S"],
    };
    let mut tags = vec!["O".to_string()];
    for l in labels {
        for p in prefixes {
            tags.push(format!("{p}-{l}"));
        }
    }
    tags
}

/// Additive mask on `A` forbidding scheme-invalid bigrams, start and end
/// included: 0 where allowed, `-inf` elsewhere.
pub fn transition_mask(tags: &[String], scheme: TagScheme) -> Tensor {
    let k = tags.len();
    let mut mask = Tensor::zeros(Shape::Matrix(k + 2, k + 2));
    let parts: Vec<(char, &str)> = tags
        .iter()
        .map(|t| match t.split_once('-') {
            Some((p, l)) => (p.chars().next().unwrap_or('O'), l),
            None => ('O', ""),
        })
        .collect();
    // `None` stands for the start or end symbol.
    let allowed = |from: Option<(char, &str)>, to: Option<(char, &str)>| -> bool {
        let open = matches!(from, Some(('B' | 'I', _)));
        let continues = |to_label: &str| matches!(from, Some((_, l)) if l == to_label);
        match (scheme, to) {
            (TagScheme::Iobes, Some((p, l))) => match p {
                'I' | 'E' => open && continues(l),
                _ => !open,
            },
            (TagScheme::Iobes, None) => !open,
            (TagScheme::Iob2, Some(('I', l))) => matches!(from, Some(('B' | 'I', _))) && continues(l),
            (TagScheme::Iob1, Some(('B', l))) => matches!(from, Some(('B' | 'I', _))) && continues(l),
            _ => true,
        }
    };
    for i in 0..k + 2 {
        for j in 0..k + 2 {
            let from = if i == k {
                None
            } else if i == k + 1 {
                continue;
            } else {
                Some(parts[i])
            };
            let to = if j == k + 1 {
                None
            } else if j == k {
                continue;
            } else {
                Some(parts[j])
            };
            if !allowed(from, to) {
                mask.set(i, j, f64::NEG_INFINITY);
            }
        }
    }
    mask
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrfTaggerConfig {
    pub word: WordRepConfig,
    /// Hidden size of each BiLSTM direction.
    pub hidden_dim: usize,
    /// Width of the tanh layer between the BiLSTM and the tag scores.
    pub projection_dim: usize,
    pub scheme: TagScheme,
    /// Forbid scheme-invalid transitions at decode time.
    pub constrained_decoding: bool,
}

impl Default for CrfTaggerConfig {
    fn default() -> Self {
        CrfTaggerConfig {
            word: WordRepConfig::default(),
            hidden_dim: 100,
            projection_dim: 100,
            scheme: TagScheme::Iobes,
            constrained_decoding: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrfTagger {
    pub config: CrfTaggerConfig,
    pub vocab: Vocabulary,
    pub tags: Vec<String>,
    pub store: ParamStore,
    pub wordrep: WordRepresenter,
    pub bilstm: BiLstm,
    pub hidden_w: ParamId,
    pub hidden_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub transitions: ParamId,
}

impl CrfTagger {
    pub fn new(config: CrfTaggerConfig, vocab: Vocabulary, rng: &mut Rng) -> Result<Self> {
        let tags = tag_set(&vocab.labels(), config.scheme);
        let k = tags.len();
        let mut store = ParamStore::new();
        let wordrep = WordRepresenter::new(&mut store, rng, &vocab, config.word.clone())?;
        let bilstm =
            BiLstm::new(&mut store, rng, "crf.lstm", wordrep.output_dim(), config.hidden_dim, config.word.lstm)?;
        let c = bilstm.output_dim();
        let hidden_w = store.add_uniform("crf.hidden.w", Shape::Matrix(config.projection_dim, c), rng)?;
        let hidden_b = store.add_zeros("crf.hidden.b", Shape::Vector(config.projection_dim))?;
        let out_w = store.add_uniform("crf.out.w", Shape::Matrix(k, config.projection_dim), rng)?;
        let out_b = store.add_zeros("crf.out.b", Shape::Vector(k))?;
        let transitions = store.add_zeros("crf.transitions", Shape::Matrix(k + 2, k + 2))?;
        Ok(CrfTagger { config, vocab, tags, store, wordrep, bilstm, hidden_w, hidden_b, out_w, out_b, transitions })
    }

    pub fn num_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn tag_index(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    /// Emission matrix `P` (`n × k`) as a tape node.
    pub fn emissions(&self, tape: &mut Tape, sentence: &Sentence, mode: Mode, rng: &mut Rng) -> Result<NodeId> {
        let store = &self.store;
        let xs = self.wordrep.embed_sentence(tape, store, &self.vocab, sentence, mode, rng)?;
        let contexts = self.bilstm.encode(tape, store, &xs)?;
        let (hw, hb) = (tape.param(store, self.hidden_w), tape.param(store, self.hidden_b));
        let (ow, ob) = (tape.param(store, self.out_w), tape.param(store, self.out_b));
        let rows = contexts
            .into_iter()
            .map(|c| {
                let h = tape.matvec(hw, c)?;
                let h = tape.add(h, hb)?;
                let h = tape.tanh(h)?;
                let s = tape.matvec(ow, h)?;
                tape.add(s, ob)
            })
            .collect::<Result<Vec<_>>>()?;
        tape.stack_rows(&rows)
    }

    /// Gold tag indices of a tagged sentence.
    pub fn gold_indices(&self, sentence: &Sentence) -> Result<Vec<usize>> {
        let tags = sentence.gold_tags().ok_or_else(|| Error::Usage("sentence has no gold tags".into()))?;
        tags.iter()
            .map(|t| self.tag_index(t).ok_or_else(|| Error::Usage(format!("tag {t:?} is not in the model's tag set"))))
            .collect()
    }

    pub fn loss(&self, tape: &mut Tape, sentence: &Sentence, mode: Mode, rng: &mut Rng) -> Result<NodeId> {
        let gold = self.gold_indices(sentence)?;
        let p = self.emissions(tape, sentence, mode, rng)?;
        let a = tape.param(&self.store, self.transitions);
        CrfNll::new(gold).record(tape, p, a)
    }

    /// Viterbi path in eval mode.
    pub fn decode(&self, sentence: &Sentence) -> Result<(Vec<usize>, f64)> {
        let mut tape = Tape::new();
        let mut rng = <Rng as rand::SeedableRng>::seed_from_u64(0);
        let p = self.emissions(&mut tape, sentence, Mode::Eval, &mut rng)?;
        let a = self.store.get(self.transitions);
        if self.config.constrained_decoding {
            let mask = transition_mask(&self.tags, self.config.scheme);
            let vals = a.values().iter().zip(mask.values()).map(|(x, m)| x + m).collect();
            let masked = Tensor::matrix(a.rows(), a.cols(), vals)?;
            viterbi_decode(tape.value(p), &masked)
        } else {
            viterbi_decode(tape.value(p), a)
        }
    }

    pub fn predict_tags(&self, sentence: &Sentence) -> Result<Vec<String>> {
        Ok(self.decode(sentence)?.0.into_iter().map(|t| self.tags[t].clone()).collect())
    }

    /// Chunks of the decoded tags, read leniently since the unconstrained
    /// decoder can produce scheme-invalid sequences.
    pub fn predict_chunks(&self, sentence: &Sentence) -> Result<Vec<LabeledChunk>> {
        Ok(tags_to_chunks_lenient(&self.predict_tags(sentence)?))
    }
}

impl SequenceModel for CrfTagger {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn loss(&self, tape: &mut Tape, sentence: &Sentence, mode: Mode, rng: &mut Rng) -> Result<NodeId> {
        CrfTagger::loss(self, tape, sentence, mode, rng)
    }

    fn predict(&self, sentence: &Sentence) -> Result<Vec<LabeledChunk>> {
        self.predict_chunks(sentence)
    }

    fn gold_chunks(&self, sentence: &Sentence) -> Result<Vec<LabeledChunk>> {
        sentence.gold_chunks(self.config.scheme)
    }
}
