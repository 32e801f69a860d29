//! Transition-based chunker scored by Stack-LSTMs.
//!
//! The parser state is summarized by four LSTMs: one over the output stack
//! (composed chunks and outside words), one over the stack of pending words,
//! one over the buffer (loaded right to left so it pops in sentence order)
//! and one over the history of actions. Their top outputs are concatenated,
//! passed through a ReLU layer and scored against the action inventory with
//! invalid actions masked out. Decoding is greedy.

mod stack;
mod system;

pub use stack::{StackContents, StackLstm};
pub use system::{Action, ActionDisplay, OutputItem, TransitionState, TransitionSystem};

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;

use crate::corpus::{chunks_to_tags, LabeledChunk, Sentence, TagScheme, Vocabulary};
use crate::error::{Error, Result};
use crate::mathcore::{masked_softmax, MaskedNll, NodeId, ParamId, ParamStore, Shape, Tape};
use crate::rnn::LstmCell;
use crate::training::SequenceModel;
use crate::wordrep::{Mode, WordRepConfig, WordRepresenter};
use crate::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ChunkerConfig {
    pub word: WordRepConfig,
    /// Hidden size of every stack LSTM and of the action-history LSTM.
    pub stack_hidden: usize,
    pub stack_layers: usize,
    pub action_dim: usize,
    /// Hidden size of each direction of the chunk composer.
    pub compose_hidden: usize,
    /// Width of a composed chunk.
    pub compose_dim: usize,
    /// Width of the ReLU layer over the concatenated summaries.
    pub state_hidden: usize,
    /// Scheme used to read gold tags and to write predictions.
    pub scheme: TagScheme,
}

impl Default for ChunkerConfig {
    fn default() -> Self {
        ChunkerConfig {
            word: WordRepConfig { dropout: 0.2, ..WordRepConfig::default() },
            stack_hidden: 100,
            stack_layers: 2,
            action_dim: 16,
            compose_hidden: 20,
            compose_dim: 20,
            state_hidden: 100,
            scheme: TagScheme::Iobes,
        }
    }
}

/// `g(u, …, v, r_y)`: a forward LSTM over `r_y, u, …, v` and a backward one
/// over `r_y, v, …, u`, final outputs concatenated and squashed to
/// `compose_dim`. Row `labels` of `labels` is the null label used by OUT.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkComposer {
    pub labels: ParamId,
    pub forward: LstmCell,
    pub backward: LstmCell,
    pub w: ParamId,
    pub b: ParamId,
    pub null_label: usize,
}

impl ChunkComposer {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        num_labels: usize,
        input_dim: usize,
        config: &ChunkerConfig,
    ) -> Result<Self> {
        let opts = config.word.lstm;
        let labels = store.add_uniform("chunker.compose.labels", Shape::Matrix(num_labels + 1, input_dim), rng)?;
        let forward = LstmCell::new(store, rng, "chunker.compose.fwd", input_dim, config.compose_hidden, opts)?;
        let backward = LstmCell::new(store, rng, "chunker.compose.bwd", input_dim, config.compose_hidden, opts)?;
        let w = store.add_uniform(
            "chunker.compose.w",
            Shape::Matrix(config.compose_dim, 2 * config.compose_hidden),
            rng,
        )?;
        let b = store.add_zeros("chunker.compose.b", Shape::Vector(config.compose_dim))?;
        Ok(ChunkComposer { labels, forward, backward, w, b, null_label: num_labels })
    }

    /// `label` indexes the label table; `None` is the null label.
    pub fn compose(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        words: &[NodeId],
        label: Option<usize>,
    ) -> Result<NodeId> {
        if words.is_empty() {
            return Err(Error::Domain("cannot compose an empty chunk".into()));
        }
        let r = tape.lookup(store, self.labels, label.unwrap_or(self.null_label))?;
        let mut f = self.forward.initial_state(tape);
        f = self.forward.step(tape, store, r, &f)?;
        for &x in words {
            f = self.forward.step(tape, store, x, &f)?;
        }
        let mut b = self.backward.initial_state(tape);
        b = self.backward.step(tape, store, r, &b)?;
        for &x in words.iter().rev() {
            b = self.backward.step(tape, store, x, &b)?;
        }
        let both = tape.concat(&[f.h, b.h])?;
        let (w, bias) = (tape.param(store, self.w), tape.param(store, self.b));
        let z = tape.matvec(w, both)?;
        let z = tape.add(z, bias)?;
        tape.tanh(z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StackLstmChunker {
    pub config: ChunkerConfig,
    pub vocab: Vocabulary,
    pub system: TransitionSystem,
    pub store: ParamStore,
    pub wordrep: WordRepresenter,
    pub output: StackLstm,
    pub stack: StackLstm,
    pub buffer: StackLstm,
    pub history: StackLstm,
    pub actions: ParamId,
    pub composer: ChunkComposer,
    pub state_w: ParamId,
    pub state_b: ParamId,
    pub action_w: ParamId,
    pub action_b: ParamId,
}

/// Neural and symbolic state of one parse in progress.
struct Parse {
    state: TransitionState,
    words: Vec<NodeId>,
    output: StackContents,
    stack: StackContents,
    buffer: StackContents,
    history: StackContents,
}

impl StackLstmChunker {
    pub fn new(config: ChunkerConfig, vocab: Vocabulary, rng: &mut Rng) -> Result<Self> {
        let system = TransitionSystem::new(vocab.labels());
        let mut store = ParamStore::new();
        let wordrep = WordRepresenter::new(&mut store, rng, &vocab, config.word.clone())?;
        let wdim = wordrep.output_dim();
        let (h, layers, opts) = (config.stack_hidden, config.stack_layers, config.word.lstm);
        let output = StackLstm::new(&mut store, rng, "chunker.output", config.compose_dim, h, layers, opts)?;
        let stack = StackLstm::new(&mut store, rng, "chunker.stack", wdim, h, layers, opts)?;
        let buffer = StackLstm::new(&mut store, rng, "chunker.buffer", wdim, h, layers, opts)?;
        let history = StackLstm::new(&mut store, rng, "chunker.history", config.action_dim, h, layers, opts)?;
        let na = system.num_actions();
        let actions = store.add_uniform("chunker.actions", Shape::Matrix(na, config.action_dim), rng)?;
        let composer = ChunkComposer::new(&mut store, rng, system.labels().len(), wdim, &config)?;
        let state_w = store.add_uniform("chunker.state.w", Shape::Matrix(config.state_hidden, 4 * h), rng)?;
        let state_b = store.add_zeros("chunker.state.b", Shape::Vector(config.state_hidden))?;
        let action_w = store.add_uniform("chunker.action.w", Shape::Matrix(na, config.state_hidden), rng)?;
        let action_b = store.add_zeros("chunker.action.b", Shape::Vector(na))?;
        Ok(StackLstmChunker {
            config,
            vocab,
            system,
            store,
            wordrep,
            output,
            stack,
            buffer,
            history,
            actions,
            composer,
            state_w,
            state_b,
            action_w,
            action_b,
        })
    }

    fn start(&self, tape: &mut Tape, sentence: &Sentence, mode: Mode, rng: &mut Rng) -> Result<Parse> {
        let words = self.wordrep.embed_sentence(tape, &self.store, &self.vocab, sentence, mode, rng)?;
        let mut buffer = StackContents::default();
        for &w in words.iter().rev() {
            self.buffer.push(tape, &self.store, &mut buffer, w)?;
        }
        Ok(Parse {
            state: TransitionState::new(words.len()),
            words,
            output: StackContents::default(),
            stack: StackContents::default(),
            buffer,
            history: StackContents::default(),
        })
    }

    fn logits(&self, tape: &mut Tape, parse: &Parse) -> Result<NodeId> {
        let s = &self.store;
        let parts = [
            self.output.summary(tape, &parse.output),
            self.stack.summary(tape, &parse.stack),
            self.buffer.summary(tape, &parse.buffer),
            self.history.summary(tape, &parse.history),
        ];
        let x = tape.concat(&parts)?;
        let (w1, b1) = (tape.param(s, self.state_w), tape.param(s, self.state_b));
        let (w2, b2) = (tape.param(s, self.action_w), tape.param(s, self.action_b));
        let h = tape.matvec(w1, x)?;
        let h = tape.add(h, b1)?;
        let h = tape.relu(h)?;
        let z = tape.matvec(w2, h)?;
        tape.add(z, b2)
    }

    fn apply(&self, tape: &mut Tape, parse: &mut Parse, action: Action) -> Result<()> {
        let s = &self.store;
        let pending: Vec<usize> = parse.state.stack().to_vec();
        let next = parse.state.buffer().start;
        self.system.apply(&mut parse.state, action)?;
        match action {
            Action::Shift => {
                self.buffer.pop(&mut parse.buffer)?;
                self.stack.push(tape, s, &mut parse.stack, parse.words[next])?;
            }
            Action::Out => {
                self.buffer.pop(&mut parse.buffer)?;
                let g = self.composer.compose(tape, s, &[parse.words[next]], None)?;
                self.output.push(tape, s, &mut parse.output, g)?;
            }
            Action::Reduce(label) => {
                for _ in &pending {
                    self.stack.pop(&mut parse.stack)?;
                }
                let words: Vec<NodeId> = pending.iter().map(|&i| parse.words[i]).collect();
                let g = self.composer.compose(tape, s, &words, Some(label))?;
                self.output.push(tape, s, &mut parse.output, g)?;
            }
        }
        let a = tape.lookup(s, self.actions, self.system.action_index(action))?;
        self.history.push(tape, s, &mut parse.history, a)
    }

    /// Reference actions for a tagged sentence.
    pub fn oracle(&self, sentence: &Sentence) -> Result<Vec<Action>> {
        if sentence.gold_tags().is_none() {
            return Err(Error::Usage("sentence has no gold tags".into()));
        }
        let chunks = sentence.gold_chunks(self.config.scheme)?;
        self.system.oracle_actions(sentence.len(), &chunks)
    }

    /// `Σ_t -log p(a_t | state_t)` over the oracle actions of `gold`.
    pub fn loss_for_actions(
        &self,
        tape: &mut Tape,
        sentence: &Sentence,
        gold: &[Action],
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<NodeId> {
        let mut parse = self.start(tape, sentence, mode, rng)?;
        let mut steps = Vec::with_capacity(gold.len());
        for &a in gold {
            let logits = self.logits(tape, &parse)?;
            let valid = self.system.valid_mask(&parse.state);
            let target = self.system.action_index(a);
            if !valid[target] {
                return Err(Error::Transition(alloc::format!("{} is not allowed here", self.system.display(a))));
            }
            steps.push(MaskedNll::new(valid, target)?.record(tape, logits)?);
            self.apply(tape, &mut parse, a)?;
        }
        if !parse.state.is_terminal() {
            return Err(Error::Transition("action sequence stops before the parse is complete".into()));
        }
        tape.sum(&steps)
    }

    pub fn loss(&self, tape: &mut Tape, sentence: &Sentence, mode: Mode, rng: &mut Rng) -> Result<NodeId> {
        let gold = self.oracle(sentence)?;
        self.loss_for_actions(tape, sentence, &gold, mode, rng)
    }

    /// Probabilities over the inventory after `prefix`, invalid actions at 0.
    pub fn action_distribution(&self, sentence: &Sentence, prefix: &[Action]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from_u64(0);
        let mut parse = self.start(&mut tape, sentence, Mode::Eval, &mut rng)?;
        for &a in prefix {
            self.apply(&mut tape, &mut parse, a)?;
        }
        if parse.state.is_terminal() {
            return Err(Error::Domain("no action follows a terminal state".into()));
        }
        let logits = self.logits(&mut tape, &parse)?;
        masked_softmax(tape.value(logits).values(), &self.system.valid_mask(&parse.state))
    }

    /// Highest-scoring valid action at every step, ties to inventory order.
    pub fn greedy_decode(&self, sentence: &Sentence) -> Result<(Vec<Action>, Vec<LabeledChunk>)> {
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from_u64(0);
        let mut parse = self.start(&mut tape, sentence, Mode::Eval, &mut rng)?;
        while !parse.state.is_terminal() {
            let logits = self.logits(&mut tape, &parse)?;
            let valid = self.system.valid_mask(&parse.state);
            let scores = tape.value(logits).values();
            let mut best: Option<(usize, f64)> = None;
            for (i, (&s, &ok)) in scores.iter().zip(&valid).enumerate() {
                if ok && best.is_none_or(|(_, b)| s > b) {
                    best = Some((i, s));
                }
            }
            let (i, _) = best.expect("a non-terminal state has a valid action");
            self.apply(&mut tape, &mut parse, self.system.action_at(i))?;
        }
        Ok((parse.state.history().to_vec(), parse.state.emitted().to_vec()))
    }

    pub fn predict_tags(&self, sentence: &Sentence) -> Result<Vec<String>> {
        let (_, chunks) = self.greedy_decode(sentence)?;
        chunks_to_tags(&chunks, sentence.len(), self.config.scheme)
    }
}

impl SequenceModel for StackLstmChunker {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn loss(&self, tape: &mut Tape, sentence: &Sentence, mode: Mode, rng: &mut Rng) -> Result<NodeId> {
        StackLstmChunker::loss(self, tape, sentence, mode, rng)
    }

    fn predict(&self, sentence: &Sentence) -> Result<Vec<LabeledChunk>> {
        Ok(self.greedy_decode(sentence)?.1)
    }

    fn gold_chunks(&self, sentence: &Sentence) -> Result<Vec<LabeledChunk>> {
        sentence.gold_chunks(self.config.scheme)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, parse_conll, validate_chunks, ConllOptions};
    use crate::mathcore::{check_gradients, Selection, Tensor};
    use crate::training::{train_step, SgdConfig};
    use crate::Rng;
    use alloc::vec;
    use rand::Rng as _;

    const TEXT: &str = "Mark B-PER\nWatney E-PER\nvisited O\nMars S-LOC\n\nthe O\nrover O\nsaw O\nMars S-LOC\n\n";

    fn small(seed: u64) -> (StackLstmChunker, Vec<Sentence>) {
        let sentences = parse_conll(TEXT, &ConllOptions::default()).unwrap();
        let vocab = build_vocab(&sentences, 1).unwrap();
        let config = ChunkerConfig {
            word: WordRepConfig {
                word_dim: 4,
                char_dim: 3,
                char_hidden: 2,
                dropout: 0.0,
                singleton_unk: 0.0,
                ..WordRepConfig::default()
            },
            stack_hidden: 3,
            stack_layers: 2,
            action_dim: 2,
            compose_hidden: 2,
            compose_dim: 3,
            state_hidden: 4,
            scheme: TagScheme::Iobes,
        };
        (StackLstmChunker::new(config, vocab, &mut Rng::seed_from_u64(seed)).unwrap(), sentences)
    }

    #[test]
    fn oracle_for_tagged_sentence() {
        let (m, sentences) = small(1);
        let names: Vec<String> =
            m.oracle(&sentences[0]).unwrap().iter().map(|a| alloc::format!("{}", m.system.display(*a))).collect();
        assert_eq!(names, ["SHIFT", "SHIFT", "REDUCE(PER)", "OUT", "SHIFT", "REDUCE(LOC)"]);
    }

    #[test]
    fn distribution_is_masked_and_normalized() {
        let (m, sentences) = small(2);
        let one = Sentence::from_words(&["Mars"], true).unwrap();
        let p = m.action_distribution(&one, &[]).unwrap();
        assert_eq!(p.len(), 4);
        assert!(p[2] == 0.0 && p[3] == 0.0);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        let p = m.action_distribution(&sentences[0], &[Action::Shift, Action::Shift]).unwrap();
        assert_eq!(p[1], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(matches!(m.action_distribution(&one, &[Action::Out]), Err(Error::Domain(_))));
    }

    #[test]
    fn composed_width_is_constant() {
        let (m, _) = small(3);
        let mut tape = Tape::new();
        let mut rng = Rng::seed_from_u64(9);
        let dim = m.wordrep.output_dim();
        for len in 1..=6 {
            let words: Vec<NodeId> = (0..len)
                .map(|_| tape.input(Tensor::vector((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())))
                .collect();
            let g = m.composer.compose(&mut tape, &m.store, &words, Some(0)).unwrap();
            assert_eq!(tape.value(g).len(), 3);
        }
        assert!(m.composer.compose(&mut tape, &m.store, &[], None).is_err());
    }

    #[test]
    fn untrained_decode_is_well_formed() {
        let (m, _) = small(4);
        let mut rng = Rng::seed_from_u64(5);
        let words = ["Mark", "Watney", "visited", "Mars", "the", "rover", "zzz"];
        for _ in 0..20 {
            let n = rng.random_range(1..=10);
            let w: Vec<&str> = (0..n).map(|_| words[rng.random_range(0..words.len())]).collect();
            let s = Sentence::from_words(&w, true).unwrap();
            let (actions, chunks) = m.greedy_decode(&s).unwrap();
            assert!(actions.len() >= n && actions.len() <= 2 * n);
            validate_chunks(&chunks, n).unwrap();
            crate::corpus::validate(&m.predict_tags(&s).unwrap(), TagScheme::Iobes).unwrap();
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let (m, sentences) = small(seed);
            let mut store = m.store.clone();
            let report = check_gradients(&mut store, 1e-5, Selection::Sample { per_param: 3, seed }, |s, tape| {
                let mut model = m.clone();
                model.store = s.clone();
                model.loss(tape, &sentences[0], Mode::Eval, &mut Rng::seed_from_u64(0))
            })
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn loss_decreases_and_overfits() {
        let (mut m, sentences) = small(6);
        let config = SgdConfig { learning_rate: 0.1, ..SgdConfig::default() };
        let mut rng = Rng::seed_from_u64(0);
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let loss = train_step(&mut m, &sentences[0], &config, &mut rng).unwrap();
            assert!(loss >= 0.0);
            assert!(loss < last, "{loss} >= {last}");
            last = loss;
        }
        for _ in 0..200 {
            for s in &sentences {
                train_step(&mut m, s, &config, &mut rng).unwrap();
            }
        }
        for s in &sentences {
            assert_eq!(m.predict(s).unwrap(), s.gold_chunks(TagScheme::Iobes).unwrap());
        }
    }

    #[test]
    fn out_of_inventory_gold_label_is_rejected() {
        let (m, _) = small(1);
        let s = Sentence::from_words(&["x"], true).unwrap().with_tags(vec!["S-MISC".into()]).unwrap();
        assert!(matches!(m.oracle(&s), Err(Error::Chunks(_))));
    }
}
