//! Multi-layer LSTM with a stack pointer.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mathcore::{NodeId, ParamStore, Tape};
use crate::rnn::{LstmCell, LstmOptions, LstmState};
use crate::Rng;

/// Parameters of a stacked LSTM used as a stack: pushing runs one step from
/// the state under the top element, popping moves the pointer back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackLstm {
    pub layers: Vec<LstmCell>,
}

/// Per-element layer states of one stack instance; element `i` was computed
/// from element `i - 1`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StackContents {
    states: Vec<Vec<LstmState>>,
}

impl StackContents {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

impl StackLstm {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
        options: LstmOptions,
    ) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::Usage(format!("{prefix}: a stack LSTM needs at least one layer")));
        }
        let layers = (0..num_layers)
            .map(|l| {
                let din = if l == 0 { input_dim } else { hidden_dim };
                LstmCell::new(store, rng, &format!("{prefix}.l{l}"), din, hidden_dim, options)
            })
            .collect::<Result<_>>()?;
        Ok(StackLstm { layers })
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].hidden_dim
    }

    pub fn push(&self, tape: &mut Tape, store: &ParamStore, stack: &mut StackContents, x: NodeId) -> Result<()> {
        let mut input = x;
        let mut next = Vec::with_capacity(self.layers.len());
        for (l, cell) in self.layers.iter().enumerate() {
            let prev = match stack.states.last() {
                Some(top) => top[l],
                None => cell.initial_state(tape),
            };
            let s = cell.step(tape, store, input, &prev)?;
            input = s.h;
            next.push(s);
        }
        stack.states.push(next);
        Ok(())
    }

    pub fn pop(&self, stack: &mut StackContents) -> Result<()> {
        stack.states.pop().map(|_| ()).ok_or_else(|| Error::Transition("pop from an empty stack".into()))
    }

    /// Top-layer output of the top element; zeros for an empty stack.
    pub fn summary(&self, tape: &mut Tape, stack: &StackContents) -> NodeId {
        match stack.states.last() {
            Some(top) => top[top.len() - 1].h,
            None => tape.zeros(self.hidden_dim()),
        }
    }
}
