//! Coupled input/forget gate LSTM with peepholes, and a bidirectional encoder.
//!
//! ```text
//! i_t = σ(W_xi x_t + W_hi h_{t-1} + W_ci ⊙ c_{t-1} + b_i)
//! c_t = (1 - i_t) ⊙ c_{t-1} + i_t ⊙ tanh(W_xc x_t + W_hc h_{t-1} + b_c)
//! o_t = σ(W_xo x_t + W_ho h_{t-1} + W_co ⊙ c_t + b_o)
//! h_t = o_t ⊙ tanh(c_t)
//! ```

use alloc::format;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::mathcore::{NodeId, ParamId, ParamStore, Shape, Tape};
use crate::Rng;

/// How the cell-state terms of the input and output gates are parameterized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Peephole {
    /// `W_ci`, `W_co` are `d_h` vectors applied element-wise.
    #[default]
    Diagonal,
    /// `W_ci`, `W_co` are full `d_h × d_h` matrices.
    Full,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LstmOptions {
    pub peephole: Peephole,
    /// Draw biases like weights instead of starting them at zero.
    pub random_bias: bool,
}

/// Parameter handles of one LSTM cell. There are no forget-gate weights:
/// the cell keeps `1 - i_t` of its previous state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub peephole: Peephole,
    pub w_xi: ParamId,
    pub w_hi: ParamId,
    pub w_ci: ParamId,
    pub b_i: ParamId,
    pub w_xc: ParamId,
    pub w_hc: ParamId,
    pub b_c: ParamId,
    pub w_xo: ParamId,
    pub w_ho: ParamId,
    pub w_co: ParamId,
    pub b_o: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

impl LstmCell {
    /// Registers the cell's parameters under `prefix.*`.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        options: LstmOptions,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Usage(format!("{prefix}: LSTM dimensions must be positive")));
        }
        let x = Shape::Matrix(hidden_dim, input_dim);
        let h = Shape::Matrix(hidden_dim, hidden_dim);
        let peep = match options.peephole {
            Peephole::Diagonal => Shape::Vector(hidden_dim),
            Peephole::Full => h,
        };
        let bias = Shape::Vector(hidden_dim);
        let mut weight = |name: &str, shape: Shape| store.add_uniform(&format!("{prefix}.{name}"), shape, rng);
        let (w_xi, w_hi, w_ci) = (weight("w_xi", x)?, weight("w_hi", h)?, weight("w_ci", peep)?);
        let (w_xc, w_hc) = (weight("w_xc", x)?, weight("w_hc", h)?);
        let (w_xo, w_ho, w_co) = (weight("w_xo", x)?, weight("w_ho", h)?, weight("w_co", peep)?);
        let mut b = |name: &str| {
            let name = format!("{prefix}.{name}");
            if options.random_bias {
                store.add_uniform(&name, bias, rng)
            } else {
                store.add_zeros(&name, bias)
            }
        };
        let (b_i, b_c, b_o) = (b("b_i")?, b("b_c")?, b("b_o")?);
        Ok(LstmCell {
            input_dim,
            hidden_dim,
            peephole: options.peephole,
            w_xi,
            w_hi,
            w_ci,
            b_i,
            w_xc,
            w_hc,
            b_c,
            w_xo,
            w_ho,
            w_co,
            b_o,
        })
    }

    pub fn params(&self) -> [ParamId; 11] {
        [
            self.w_xi, self.w_hi, self.w_ci, self.b_i, self.w_xc, self.w_hc, self.b_c, self.w_xo, self.w_ho, self.w_co,
            self.b_o,
        ]
    }

    /// `h_0 = c_0 = 0`.
    pub fn initial_state(&self, tape: &mut Tape) -> LstmState {
        let h = tape.zeros(self.hidden_dim);
        let c = tape.zeros(self.hidden_dim);
        LstmState { h, c }
    }

    fn peep(&self, tape: &mut Tape, w: NodeId, c: NodeId) -> Result<NodeId> {
        match self.peephole {
            Peephole::Diagonal => tape.hadamard(w, c),
            Peephole::Full => tape.matvec(w, c),
        }
    }

    pub fn step(&self, tape: &mut Tape, store: &ParamStore, x: NodeId, prev: &LstmState) -> Result<LstmState> {
        let got = tape.value(x).shape();
        if got != Shape::Vector(self.input_dim) {
            return Err(shape_err("lstm_step", format!("input {got}, cell expects [{}]", self.input_dim)));
        }
        let p = |tape: &mut Tape, id| tape.param(store, id);

        let (w_xi, w_hi, w_ci, b_i) = (p(tape, self.w_xi), p(tape, self.w_hi), p(tape, self.w_ci), p(tape, self.b_i));
        let xi = tape.matvec(w_xi, x)?;
        let hi = tape.matvec(w_hi, prev.h)?;
        let ci = self.peep(tape, w_ci, prev.c)?;
        let pre_i = tape.sum(&[xi, hi, ci, b_i])?;
        let i = tape.sigmoid(pre_i)?;

        let (w_xc, w_hc, b_c) = (p(tape, self.w_xc), p(tape, self.w_hc), p(tape, self.b_c));
        let xc = tape.matvec(w_xc, x)?;
        let hc = tape.matvec(w_hc, prev.h)?;
        let pre_c = tape.sum(&[xc, hc, b_c])?;
        let candidate = tape.tanh(pre_c)?;
        let keep = tape.one_minus(i)?;
        let kept = tape.hadamard(keep, prev.c)?;
        let written = tape.hadamard(i, candidate)?;
        let c = tape.add(kept, written)?;

        let (w_xo, w_ho, w_co, b_o) = (p(tape, self.w_xo), p(tape, self.w_ho), p(tape, self.w_co), p(tape, self.b_o));
        let xo = tape.matvec(w_xo, x)?;
        let ho = tape.matvec(w_ho, prev.h)?;
        let co = self.peep(tape, w_co, c)?;
        let pre_o = tape.sum(&[xo, ho, co, b_o])?;
        let o = tape.sigmoid(pre_o)?;

        let squashed = tape.tanh(c)?;
        let h = tape.hadamard(o, squashed)?;
        Ok(LstmState { h, c })
    }

    /// Runs the cell over `xs` from the zero state, returning every state.
    pub fn run(&self, tape: &mut Tape, store: &ParamStore, xs: &[NodeId]) -> Result<Vec<LstmState>> {
        let mut state = self.initial_state(tape);
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            state = self.step(tape, store, x, &state)?;
            out.push(state);
        }
        Ok(out)
    }
}

/// Two independent cells reading a sequence in opposite directions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

impl BiLstm {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        options: LstmOptions,
    ) -> Result<Self> {
        let forward = LstmCell::new(store, rng, &format!("{prefix}.fwd"), input_dim, hidden_dim, options)?;
        let backward = LstmCell::new(store, rng, &format!("{prefix}.bwd"), input_dim, hidden_dim, options)?;
        Ok(BiLstm { forward, backward })
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden_dim + self.backward.hidden_dim
    }

    /// The same network with the roles of its two cells exchanged.
    pub fn swapped(&self) -> BiLstm {
        BiLstm { forward: self.backward.clone(), backward: self.forward.clone() }
    }

    fn directions(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        xs: &[NodeId],
    ) -> Result<(Vec<LstmState>, Vec<LstmState>)> {
        if xs.is_empty() {
            return Err(Error::Domain("bidirectional LSTM over an empty sequence".into()));
        }
        let fwd = self.forward.run(tape, store, xs)?;
        let reversed: Vec<NodeId> = xs.iter().rev().copied().collect();
        let mut bwd = self.backward.run(tape, store, &reversed)?;
        bwd.reverse();
        Ok((fwd, bwd))
    }

    /// Position `t` gets `[h→_t ; h←_t]`: the forward state after `x_1..x_t`
    /// and the backward state after `x_n..x_t`.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, xs: &[NodeId]) -> Result<Vec<NodeId>> {
        let (fwd, bwd) = self.directions(tape, store, xs)?;
        fwd.iter().zip(&bwd).map(|(f, b)| tape.concat(&[f.h, b.h])).collect()
    }

    /// Final states of both directions: `[h→_n ; h←_1]`.
    pub fn summarize(&self, tape: &mut Tape, store: &ParamStore, xs: &[NodeId]) -> Result<NodeId> {
        let (fwd, bwd) = self.directions(tape, store, xs)?;
        tape.concat(&[fwd[fwd.len() - 1].h, bwd[0].h])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::{check_gradients, Selection, Tensor};
    use crate::Rng;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng};

    fn cell(store: &mut ParamStore, seed: u64, din: usize, dh: usize, options: LstmOptions) -> LstmCell {
        LstmCell::new(store, &mut Rng::seed_from_u64(seed), "cell", din, dh, options).unwrap()
    }

    fn zero_all(store: &mut ParamStore) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.get_mut(id).values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn zero_parameters_from_zero_state() {
        let mut store = ParamStore::new();
        let c = cell(&mut store, 0, 3, 2, LstmOptions::default());
        zero_all(&mut store);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![0.7, -1.0, 2.0]));
        let s0 = c.initial_state(&mut tape);
        let s1 = c.step(&mut tape, &store, x, &s0).unwrap();
        assert_eq!(tape.value(s1.c).values(), &[0.0, 0.0]);
        assert_eq!(tape.value(s1.h).values(), &[0.0, 0.0]);
    }

    #[test]
    fn zero_parameters_decay_the_cell() {
        let mut store = ParamStore::new();
        let c = cell(&mut store, 0, 1, 1, LstmOptions::default());
        zero_all(&mut store);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![5.0]));
        let h = tape.zeros(1);
        let c0 = tape.input(Tensor::vector(vec![1.0]));
        let s1 = c.step(&mut tape, &store, x, &LstmState { h, c: c0 }).unwrap();
        assert_eq!(tape.value(s1.c).values(), &[0.5]);
        let expected = 0.5 * 0.5f64.tanh();
        assert!((tape.value(s1.h).item() - expected).abs() < 1e-15);
        assert!((expected - 0.23106).abs() < 1e-5);
    }

    #[test]
    fn full_peephole_variant_has_matrix_parameters() {
        let mut store = ParamStore::new();
        let options = LstmOptions { peephole: Peephole::Full, random_bias: true };
        let c = cell(&mut store, 1, 2, 3, options);
        assert_eq!(store.get(c.w_ci).shape(), Shape::Matrix(3, 3));
        assert!(store.get(c.b_i).values().iter().any(|v| *v != 0.0));
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![0.1, 0.2]));
        let s0 = c.initial_state(&mut tape);
        c.step(&mut tape, &store, x, &s0).unwrap();
    }

    #[test]
    fn step_rejects_wrong_input() {
        let mut store = ParamStore::new();
        let c = cell(&mut store, 0, 3, 2, LstmOptions::default());
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
        let s0 = c.initial_state(&mut tape);
        assert!(matches!(c.step(&mut tape, &store, x, &s0), Err(Error::Shape { .. })));
        let bi = BiLstm::new(&mut store, &mut Rng::seed_from_u64(0), "bi", 2, 2, LstmOptions::default()).unwrap();
        assert!(matches!(bi.encode(&mut tape, &store, &[]), Err(Error::Domain(_))));
    }

    fn random_inputs(tape: &mut Tape, rng: &mut Rng, n: usize, d: usize) -> Vec<NodeId> {
        (0..n).map(|_| tape.input(Tensor::vector((0..d).map(|_| rng.random_range(-2.0..2.0)).collect()))).collect()
    }

    #[test]
    fn three_steps_match_finite_differences() {
        for (seed, peephole) in [(0, Peephole::Diagonal), (1, Peephole::Full), (2, Peephole::Diagonal)] {
            let mut store = ParamStore::new();
            let c = cell(&mut store, seed, 3, 4, LstmOptions { peephole, random_bias: true });
            let xs: Vec<Vec<f64>> = {
                let mut rng = Rng::seed_from_u64(seed + 100);
                (0..3).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
            };
            let report = check_gradients(&mut store, 1e-5, Selection::All, |s, tape| {
                let inputs: Vec<NodeId> = xs.iter().map(|x| tape.input(Tensor::vector(x.clone()))).collect();
                let states = c.run(tape, s, &inputs)?;
                let last = states[2];
                let both = tape.concat(&[last.h, last.c])?;
                let w = tape.input(Tensor::vector(vec![0.3, -1.2, 0.8, 0.5, 1.1, -0.4, 0.2, 0.9]));
                let weighted = tape.hadamard(both, w)?;
                tape.sum_all(weighted)
            })
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn bilstm_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let bi = BiLstm::new(&mut store, &mut Rng::seed_from_u64(4), "bi", 3, 2, LstmOptions::default()).unwrap();
        let report = check_gradients(&mut store, 1e-5, Selection::All, |s, tape| {
            let mut rng = Rng::seed_from_u64(77);
            let xs = random_inputs(tape, &mut rng, 4, 3);
            let out = bi.encode(tape, s, &xs)?;
            let stacked = tape.stack_rows(&out)?;
            let lse = tape.logsumexp(stacked)?;
            Ok(lse)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn encode_shape_contract() {
        let mut store = ParamStore::new();
        let bi = BiLstm::new(&mut store, &mut Rng::seed_from_u64(5), "bi", 4, 3, LstmOptions::default()).unwrap();
        let mut tape = Tape::new();
        let xs = random_inputs(&mut tape, &mut Rng::seed_from_u64(6), 7, 4);
        let out = bi.encode(&mut tape, &store, &xs).unwrap();
        assert_eq!(out.len(), 7);
        assert!(out.iter().all(|o| tape.value(*o).len() == 6));
        assert_eq!(bi.output_dim(), 6);
    }

    #[test]
    fn palindrome_with_tied_directions_has_equal_halves_in_the_middle() {
        let mut store = ParamStore::new();
        let bi = BiLstm::new(&mut store, &mut Rng::seed_from_u64(8), "bi", 3, 4, LstmOptions::default()).unwrap();
        for (f, b) in bi.forward.params().into_iter().zip(bi.backward.params()) {
            let v = store.get(f).clone();
            *store.get_mut(b) = v;
        }
        let mut tape = Tape::new();
        let half = random_inputs(&mut tape, &mut Rng::seed_from_u64(9), 3, 3);
        let xs = [half[0], half[1], half[2], half[1], half[0]];
        let out = bi.encode(&mut tape, &store, &xs).unwrap();
        let mid = tape.value(out[2]).values();
        assert_eq!(&mid[..4], &mid[4..]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn reversal_with_swapped_cells_mirrors_output(seed in 0u64..10_000, n in 1usize..6) {
            let mut store = ParamStore::new();
            let bi = BiLstm::new(&mut store, &mut Rng::seed_from_u64(seed), "bi", 3, 2, LstmOptions::default()).unwrap();
            let mut tape = Tape::new();
            let xs = random_inputs(&mut tape, &mut Rng::seed_from_u64(seed + 1), n, 3);
            let out = bi.encode(&mut tape, &store, &xs).unwrap();
            let rev: Vec<NodeId> = xs.iter().rev().copied().collect();
            let out_rev = bi.swapped().encode(&mut tape, &store, &rev).unwrap();
            for t in 0..n {
                let a = tape.value(out[t]).values();
                let b = tape.value(out_rev[n - 1 - t]).values();
                prop_assert_eq!(&a[..2], &b[2..]);
                prop_assert_eq!(&a[2..], &b[..2]);
            }
        }

        #[test]
        fn hidden_state_is_bounded(seed in 0u64..10_000) {
            let mut store = ParamStore::new();
            let c = cell(&mut store, seed, 2, 3, LstmOptions { random_bias: true, ..LstmOptions::default() });
            let mut tape = Tape::new();
            let xs = random_inputs(&mut tape, &mut Rng::seed_from_u64(seed), 6, 2);
            let mut state = c.initial_state(&mut tape);
            for x in xs {
                let next = c.step(&mut tape, &store, x, &state).unwrap();
                let prev_c = tape.value(state.c).values().to_vec();
                for (k, v) in tape.value(next.c).values().iter().enumerate() {
                    prop_assert!(v.abs() <= prev_c[k].abs().max(1.0) + 1e-15);
                }
                prop_assert!(tape.value(next.h).values().iter().all(|h| h.abs() < 1.0));
                let again = c.step(&mut tape, &store, x, &state).unwrap();
                prop_assert_eq!(tape.value(again.h), tape.value(next.h));
                state = next;
            }
        }
    }
}
