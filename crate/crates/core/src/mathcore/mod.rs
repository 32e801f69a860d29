//! Dense rank-1/rank-2 tensors and a tape for reverse-mode differentiation.
//!
//! A [`Tape`] records every forward operation together with the indices of
//! its operands. [`Tape::backward`] replays the record in reverse, summing
//! contributions, so a parameter used at every timestep collects the sum of
//! its per-step gradients. Parameters live in a [`ParamStore`] outside the
//! tape; a fresh tape per training example gives fresh gradient buffers.

mod gradcheck;
mod params;
mod tape;
mod tensor;

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

pub use gradcheck::{check_gradients, GradCheckReport, Selection};
pub use params::{uniform_fan_in, ParamId, ParamStore, Parameter};
pub use tape::{Function, Gradients, NodeId, ParamGrad, Tape};
pub use tensor::{logsumexp, matvec, sigmoid, Shape, Tensor};

use crate::error::{shape_err, Error, Result};

/// Softmax restricted to `valid` entries; invalid entries get probability 0.
pub fn masked_softmax(logits: &[f64], valid: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != valid.len() {
        return Err(shape_err("masked_softmax", format!("{} logits, {} mask entries", logits.len(), valid.len())));
    }
    let max = logits.iter().zip(valid).filter(|(_, v)| **v).map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Domain("softmax over an empty support".into()));
    }
    let mut p: Vec<f64> = logits.iter().zip(valid).map(|(l, v)| if *v { libm::exp(l - max) } else { 0.0 }).collect();
    let z: f64 = p.iter().sum();
    for x in &mut p {
        *x /= z;
    }
    Ok(p)
}

/// `-log softmax(logits)[target]` with the softmax restricted to `valid`.
pub struct MaskedNll {
    valid: Vec<bool>,
    target: usize,
}

impl MaskedNll {
    pub fn new(valid: Vec<bool>, target: usize) -> Result<Self> {
        if !valid.get(target).copied().unwrap_or(false) {
            return Err(Error::Domain(format!("target {target} is masked out")));
        }
        Ok(MaskedNll { valid, target })
    }

    /// Records the loss on `tape` for the vector node `logits`.
    pub fn record(self, tape: &mut Tape, logits: NodeId) -> Result<NodeId> {
        tape.custom(Box::new(self), &[logits])
    }
}

impl Function for MaskedNll {
    fn name(&self) -> &'static str {
        "masked_nll"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let logits = inputs[0].values();
        let p = masked_softmax(logits, &self.valid)?;
        Ok(Tensor::scalar(-libm::log(p[self.target])))
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Vec<f64>> {
        let mut p = masked_softmax(inputs[0].values(), &self.valid).expect("checked in forward");
        p[self.target] -= 1.0;
        for x in &mut p {
            *x *= grad[0];
        }
        vec![p]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng};

    #[test]
    fn elementwise_examples() {
        let mut tape = Tape::new();
        let z = tape.input(Tensor::scalar(0.0));
        let s = tape.sigmoid(z).unwrap();
        let t = tape.tanh(z).unwrap();
        assert_eq!(tape.value(s).item(), 0.5);
        assert_eq!(tape.value(t).item(), 0.0);
        let a = tape.input(Tensor::vector(vec![2.0, 3.0]));
        let b = tape.input(Tensor::vector(vec![4.0, 5.0]));
        let h = tape.hadamard(a, b).unwrap();
        assert_eq!(tape.value(h).values(), &[8.0, 15.0]);
        let c = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.value(c).values(), &[2.0, 3.0, 4.0, 5.0]);
        let three = tape.input(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(matches!(tape.add(a, three), Err(Error::Shape { .. })));
        assert!(tape.hadamard(a, three).is_err());
    }

    #[test]
    fn linear_derivative() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![3.0])).unwrap();
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![2.0]));
        let wn = tape.param(&store, w);
        let prod = tape.hadamard(wn, x).unwrap();
        let loss = tape.sum_all(prod).unwrap();
        assert_eq!(tape.value(loss).item(), 6.0);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.dense(&store, w), vec![2.0]);
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut store = ParamStore::new();
        let pre = store.add("pre", Tensor::scalar(0.0)).unwrap();
        let c = 3.0;
        let mut tape = Tape::new();
        let p = tape.param(&store, pre);
        let s = tape.sigmoid(p).unwrap();
        let cn = tape.input(Tensor::scalar(c));
        let loss = tape.hadamard(s, cn).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.dense(&store, pre), vec![0.25 * c]);
    }

    #[test]
    fn foreign_loss_is_rejected() {
        let mut other = Tape::new();
        let x = other.input(Tensor::scalar(1.0));
        let tape = Tape::new();
        assert!(matches!(tape.backward(x), Err(Error::Usage(_))));
        let mut t2 = Tape::new();
        let v = t2.input(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(t2.backward(v), Err(Error::Usage(_))));
    }

    #[test]
    fn shared_parameter_gradients_add_up() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![1.5])).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&store, w);
        let b = tape.param(&store, w);
        let prod = tape.hadamard(a, b).unwrap();
        let grads = tape.backward(prod).unwrap();
        assert_eq!(grads.dense(&store, w), vec![3.0]);
    }

    #[test]
    fn lookup_gradients_are_sparse() {
        let mut store = ParamStore::new();
        let table =
            store.add("emb", Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let r1 = tape.lookup(&store, table, 1).unwrap();
        let r1b = tape.lookup(&store, table, 1).unwrap();
        let s = tape.add(r1, r1b).unwrap();
        let loss = tape.sum_all(s).unwrap();
        let grads = tape.backward(loss).unwrap();
        match grads.get(table).unwrap() {
            ParamGrad::Rows(rows) => {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[&1], vec![2.0, 2.0]);
            }
            other => panic!("expected sparse rows, got {other:?}"),
        }
        assert_eq!(grads.dense(&store, table), vec![0.0, 0.0, 2.0, 2.0, 0.0, 0.0]);
        assert!(tape.lookup(&store, table, 3).is_err());
    }

    #[test]
    fn masked_nll_matches_definition() {
        let logits = [1.0, 2.0, 0.5];
        let valid = vec![true, false, true];
        let p = masked_softmax(&logits, &valid).unwrap();
        assert_eq!(p[1], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let mut tape = Tape::new();
        let l = tape.input(Tensor::vector(logits.to_vec()));
        let loss = MaskedNll::new(valid.clone(), 0).unwrap().record(&mut tape, l).unwrap();
        assert!((tape.value(loss).item() + p[0].ln()).abs() < 1e-12);
        assert!(MaskedNll::new(valid, 1).is_err());
    }

    /// Three stacked layers, every op type on the path, checked against
    /// central differences.
    fn three_layer_store(seed: u64) -> (ParamStore, Vec<f64>) {
        let mut rng = Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        store.add_uniform("w1", Shape::Matrix(5, 4), &mut rng).unwrap();
        store.add_uniform("b1", Shape::Vector(5), &mut rng).unwrap();
        store.add_uniform("w2", Shape::Matrix(4, 5), &mut rng).unwrap();
        store.add_uniform("w3", Shape::Matrix(3, 8), &mut rng).unwrap();
        store.add_uniform("emb", Shape::Matrix(3, 4), &mut rng).unwrap();
        let x = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        (store, x)
    }

    fn three_layer_loss(store: &ParamStore, tape: &mut Tape, x: &[f64]) -> Result<NodeId> {
        let ids: Vec<ParamId> = ["w1", "b1", "w2", "w3", "emb"].iter().map(|n| store.id(n).unwrap()).collect();
        let xin = tape.input(Tensor::vector(x.to_vec()));
        let e = tape.lookup(store, ids[4], 2)?;
        let xin = tape.hadamard(xin, e)?;
        let w1 = tape.param(store, ids[0]);
        let b1 = tape.param(store, ids[1]);
        let h1 = tape.matvec(w1, xin)?;
        let h1 = tape.add(h1, b1)?;
        let h1 = tape.tanh(h1)?;
        let w2 = tape.param(store, ids[2]);
        let h2 = tape.matvec(w2, h1)?;
        let h2 = tape.sigmoid(h2)?;
        let g = tape.one_minus(h2)?;
        let both = tape.concat(&[h2, g])?;
        let w3 = tape.param(store, ids[3]);
        let out = tape.matvec(w3, both)?;
        let out = tape.mask(out, vec![1.0, 2.0, 0.5])?;
        tape.logsumexp(out)
    }

    #[test]
    fn three_layer_composition_matches_finite_differences() {
        for seed in 0..5 {
            let (mut store, x) = three_layer_store(seed);
            let report = check_gradients(&mut store, 1e-5, Selection::All, |s, t| three_layer_loss(s, t, &x)).unwrap();
            assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");
            assert_eq!(report.checked, 20 + 5 + 20 + 24 + 12);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let (store, x) = three_layer_store(9);
        let mut t1 = Tape::new();
        let mut t2 = Tape::new();
        let a = three_layer_loss(&store, &mut t1, &x).unwrap();
        let b = three_layer_loss(&store, &mut t2, &x).unwrap();
        assert_eq!(t1.value(a).item().to_bits(), t2.value(b).item().to_bits());
    }

    proptest! {
        #[test]
        fn logsumexp_bounds(xs in proptest::collection::vec(-700.0f64..700.0, 1..20)) {
            let lse = logsumexp(&xs).unwrap();
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lse >= max);
            prop_assert!(lse <= max + (xs.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn forward_values_stay_finite(seed in 0u64..1000) {
            let (store, x) = three_layer_store(seed);
            let mut tape = Tape::new();
            let loss = three_layer_loss(&store, &mut tape, &x).unwrap();
            prop_assert!(tape.value(loss).is_finite());
        }
    }
}
