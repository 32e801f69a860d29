//! The SHIFT / OUT / REDUCE(y) transition system, without any scoring.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::corpus::{validate_chunks, LabeledChunk};
use crate::error::{Error, Result};

/// `Reduce` holds an index into [`TransitionSystem::labels`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Shift,
    Out,
    Reduce(usize),
}

/// What sits on the output stack.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OutputItem {
    Word(usize),
    Chunk(LabeledChunk),
}

impl OutputItem {
    pub fn num_words(&self) -> usize {
        match self {
            OutputItem::Word(_) => 1,
            OutputItem::Chunk(c) => c.len(),
        }
    }
}

/// Symbolic parser configuration over word positions `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionState {
    n: usize,
    /// Position of the next buffer word; the buffer is `next..n`.
    next: usize,
    stack: Vec<usize>,
    output: Vec<OutputItem>,
    emitted: Vec<LabeledChunk>,
    history: Vec<Action>,
}

impl TransitionState {
    pub fn new(n: usize) -> Self {
        TransitionState { n, next: 0, stack: Vec::new(), output: Vec::new(), emitted: Vec::new(), history: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn buffer(&self) -> core::ops::Range<usize> {
        self.next..self.n
    }

    pub fn stack(&self) -> &[usize] {
        &self.stack
    }

    pub fn output(&self) -> &[OutputItem] {
        &self.output
    }

    pub fn emitted(&self) -> &[LabeledChunk] {
        &self.emitted
    }

    pub fn history(&self) -> &[Action] {
        &self.history
    }

    pub fn is_terminal(&self) -> bool {
        self.stack.is_empty() && self.next == self.n
    }

    pub fn output_words(&self) -> usize {
        self.output.iter().map(OutputItem::num_words).sum()
    }
}

/// The action inventory for a fixed label set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionSystem {
    labels: Vec<String>,
}

impl TransitionSystem {
    /// `labels` are sorted so the inventory order is fixed.
    pub fn new(mut labels: Vec<String>) -> Self {
        labels.sort();
        labels.dedup();
        TransitionSystem { labels }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn num_actions(&self) -> usize {
        2 + self.labels.len()
    }

    /// `SHIFT, OUT, REDUCE(l_0), REDUCE(l_1), ...`
    pub fn inventory(&self) -> Vec<Action> {
        let mut out = vec![Action::Shift, Action::Out];
        out.extend((0..self.labels.len()).map(Action::Reduce));
        out
    }

    pub fn action_index(&self, action: Action) -> usize {
        match action {
            Action::Shift => 0,
            Action::Out => 1,
            Action::Reduce(l) => 2 + l,
        }
    }

    pub fn action_at(&self, index: usize) -> Action {
        match index {
            0 => Action::Shift,
            1 => Action::Out,
            i => Action::Reduce(i - 2),
        }
    }

    pub fn display(&self, action: Action) -> ActionDisplay<'_> {
        ActionDisplay { system: self, action }
    }

    /// OUT needs an empty stack, so a pending chunk is never interleaved
    /// with outside words.
    pub fn is_valid(&self, state: &TransitionState, action: Action) -> bool {
        let buffer = state.next < state.n;
        match action {
            Action::Shift => buffer,
            Action::Out => buffer && state.stack.is_empty(),
            Action::Reduce(l) => l < self.labels.len() && !state.stack.is_empty(),
        }
    }

    /// Validity mask over the inventory.
    pub fn valid_mask(&self, state: &TransitionState) -> Vec<bool> {
        self.inventory().into_iter().map(|a| self.is_valid(state, a)).collect()
    }

    pub fn valid_actions(&self, state: &TransitionState) -> Vec<Action> {
        self.inventory().into_iter().filter(|a| self.is_valid(state, *a)).collect()
    }

    pub fn apply(&self, state: &mut TransitionState, action: Action) -> Result<()> {
        if !self.is_valid(state, action) {
            return Err(Error::Transition(format!(
                "{} is not allowed with {} stacked and {} buffered words",
                self.display(action),
                state.stack.len(),
                state.n - state.next
            )));
        }
        match action {
            Action::Shift => {
                state.stack.push(state.next);
                state.next += 1;
            }
            Action::Out => {
                state.output.push(OutputItem::Word(state.next));
                state.next += 1;
            }
            Action::Reduce(l) => {
                let start = state.stack[0];
                let end = *state.stack.last().expect("non-empty stack");
                let chunk = LabeledChunk::new(start, end, &self.labels[l]);
                state.stack.clear();
                state.output.push(OutputItem::Chunk(chunk.clone()));
                state.emitted.push(chunk);
            }
        }
        state.history.push(action);
        Ok(())
    }

    /// Reference actions that rebuild `chunks` over `n` words.
    pub fn oracle_actions(&self, n: usize, chunks: &[LabeledChunk]) -> Result<Vec<Action>> {
        validate_chunks(chunks, n)?;
        let mut actions = Vec::with_capacity(2 * n);
        let mut i = 0;
        for c in chunks {
            let label = self
                .label_index(&c.label)
                .ok_or_else(|| Error::Chunks(format!("label {:?} is not in the transition inventory", c.label)))?;
            actions.extend(core::iter::repeat_n(Action::Out, c.start - i));
            actions.extend(core::iter::repeat_n(Action::Shift, c.len()));
            actions.push(Action::Reduce(label));
            i = c.end + 1;
        }
        actions.extend(core::iter::repeat_n(Action::Out, n - i));
        Ok(actions)
    }

    /// Applies `actions` from the initial state.
    pub fn replay(&self, n: usize, actions: &[Action]) -> Result<TransitionState> {
        let mut state = TransitionState::new(n);
        for a in actions {
            self.apply(&mut state, *a)?;
        }
        Ok(state)
    }
}

pub struct ActionDisplay<'a> {
    system: &'a TransitionSystem,
    action: Action,
}

impl fmt::Display for ActionDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.action {
            Action::Shift => f.write_str("SHIFT"),
            Action::Out => f.write_str("OUT"),
            Action::Reduce(l) => match self.system.labels.get(l) {
                Some(label) => write!(f, "REDUCE({label})"),
                None => write!(f, "REDUCE(#{l})"),
            },
        }
    }
}
