use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU32, Ordering};

use super::params::{ParamId, ParamStore};
use super::tensor::{self, sigmoid, Shape, Tensor};
use crate::error::{shape_err, Error, Result};

static NEXT_TAPE: AtomicU32 = AtomicU32::new(0);

/// A value recorded on a particular [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId {
    tape: u32,
    index: u32,
}

/// A differentiable operation defined outside the tape's built-in set.
///
/// `backward` receives the upstream gradient of the output and returns one
/// gradient per input, each as long as that input's value.
pub trait Function {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &[f64]) -> Vec<Vec<f64>>;
}

enum Op {
    Input,
    Param(ParamId),
    Lookup(ParamId, usize),
    MatVec(usize, usize),
    Add(usize, usize),
    AddN(Vec<usize>),
    Hadamard(usize, usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    OneMinus(usize),
    Mask(usize, Vec<f64>),
    Concat(Vec<usize>),
    StackRows(Vec<usize>),
    Pick(usize, usize),
    SumAll(usize),
    LogSumExp(usize),
    Custom(Box<dyn Function>, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only record of a forward computation, replayed in reverse by
/// [`Tape::backward`].
pub struct Tape {
    id: u32,
    nodes: Vec<Node>,
    params: BTreeMap<ParamId, usize>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed), nodes: Vec::new(), params: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn index(&self, id: NodeId) -> Result<usize> {
        if id.tape != self.id || id.index as usize >= self.nodes.len() {
            return Err(Error::Usage("node does not belong to this tape".into()));
        }
        Ok(id.index as usize)
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let index = self.nodes.len() as u32;
        self.nodes.push(Node { value, op });
        NodeId { tape: self.id, index }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let i = self.index(id).expect("node from another tape");
        &self.nodes[i].value
    }

    /// Records a constant.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn zeros(&mut self, n: usize) -> NodeId {
        self.input(Tensor::zeros(Shape::Vector(n)))
    }

    /// Brings a whole parameter onto the tape; repeated calls share one node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&i) = self.params.get(&id) {
            return NodeId { tape: self.id, index: i as u32 };
        }
        let node = self.push(store.get(id).clone(), Op::Param(id));
        self.params.insert(id, node.index as usize);
        node
    }

    /// Row `row` of a matrix parameter; gradients stay sparse.
    pub fn lookup(&mut self, store: &ParamStore, id: ParamId, row: usize) -> Result<NodeId> {
        let table = store.get(id);
        let Shape::Matrix(rows, _) = table.shape() else {
            return Err(shape_err("lookup", format!("parameter {} is not a matrix", store.name(id))));
        };
        if row >= rows {
            return Err(Error::Domain(format!("row {row} out of range for {} with {rows} rows", store.name(id))));
        }
        let value = Tensor::vector(table.row(row).to_vec());
        Ok(self.push(value, Op::Lookup(id, row)))
    }

    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let (a, b) = (self.index(m)?, self.index(v)?);
        let value = tensor::matvec(&self.nodes[a].value, &self.nodes[b].value)?;
        Ok(self.push(value, Op::MatVec(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: usize, b: usize) -> Result<()> {
        let (sa, sb) = (self.nodes[a].value.shape(), self.nodes[b].value.shape());
        if sa != sb {
            return Err(shape_err(op, format!("{sa} vs {sb}")));
        }
        Ok(())
    }

    fn zip_map(&self, a: usize, b: usize, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (&self.nodes[a].value, &self.nodes[b].value);
        let values = x.values().iter().zip(y.values()).map(|(p, q)| f(*p, *q)).collect();
        Tensor::new(x.shape(), values).expect("same shape")
    }

    fn map(&self, a: usize, f: impl Fn(f64) -> f64) -> Tensor {
        let x = &self.nodes[a].value;
        Tensor::new(x.shape(), x.values().iter().map(|v| f(*v)).collect()).expect("same shape")
    }

    pub fn add(&mut self, x: NodeId, y: NodeId) -> Result<NodeId> {
        let (a, b) = (self.index(x)?, self.index(y)?);
        self.same_shape("add", a, b)?;
        let value = self.zip_map(a, b, |p, q| p + q);
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Sum of several equally shaped nodes.
    pub fn sum(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let idx = xs.iter().map(|&x| self.index(x)).collect::<Result<Vec<_>>>()?;
        let (&first, rest) = idx.split_first().ok_or_else(|| Error::Domain("sum of no nodes".into()))?;
        let mut value = self.nodes[first].value.clone();
        for &i in rest {
            self.same_shape("sum", first, i)?;
            for (acc, v) in value.values_mut().iter_mut().zip(self.nodes[i].value.values()) {
                *acc += v;
            }
        }
        Ok(self.push(value, Op::AddN(idx)))
    }

    pub fn hadamard(&mut self, x: NodeId, y: NodeId) -> Result<NodeId> {
        let (a, b) = (self.index(x)?, self.index(y)?);
        self.same_shape("hadamard", a, b)?;
        let value = self.zip_map(a, b, |p, q| p * q);
        Ok(self.push(value, Op::Hadamard(a, b)))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let a = self.index(x)?;
        let value = self.map(a, sigmoid);
        Ok(self.push(value, Op::Sigmoid(a)))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        let a = self.index(x)?;
        let value = self.map(a, libm::tanh);
        Ok(self.push(value, Op::Tanh(a)))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let a = self.index(x)?;
        let value = self.map(a, |v| v.max(0.0));
        Ok(self.push(value, Op::Relu(a)))
    }

    /// `1 - x`, element-wise.
    pub fn one_minus(&mut self, x: NodeId) -> Result<NodeId> {
        let a = self.index(x)?;
        let value = self.map(a, |v| 1.0 - v);
        Ok(self.push(value, Op::OneMinus(a)))
    }

    /// Element-wise product with a constant vector (dropout masks).
    pub fn mask(&mut self, x: NodeId, mask: Vec<f64>) -> Result<NodeId> {
        let a = self.index(x)?;
        let v = &self.nodes[a].value;
        if v.len() != mask.len() {
            return Err(shape_err("mask", format!("{} vs mask of {}", v.shape(), mask.len())));
        }
        let values = v.values().iter().zip(&mask).map(|(p, m)| p * m).collect();
        let value = Tensor::new(v.shape(), values)?;
        Ok(self.push(value, Op::Mask(a, mask)))
    }

    /// Concatenation of vectors.
    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let idx = xs.iter().map(|&x| self.index(x)).collect::<Result<Vec<_>>>()?;
        if idx.is_empty() {
            return Err(Error::Domain("concat of no nodes".into()));
        }
        let mut values = Vec::new();
        for &i in &idx {
            let v = &self.nodes[i].value;
            if !matches!(v.shape(), Shape::Vector(_)) {
                return Err(shape_err("concat", format!("operand {} is not a vector", v.shape())));
            }
            values.extend_from_slice(v.values());
        }
        Ok(self.push(Tensor::vector(values), Op::Concat(idx)))
    }

    /// Stacks equally long vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let idx = xs.iter().map(|&x| self.index(x)).collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| self.nodes[i].value.values().to_vec()).collect();
        if rows.is_empty() {
            return Err(Error::Domain("stack_rows of no nodes".into()));
        }
        let value = Tensor::from_rows(&rows)?;
        Ok(self.push(value, Op::StackRows(idx)))
    }

    /// Element `i` as a scalar.
    pub fn pick(&mut self, x: NodeId, i: usize) -> Result<NodeId> {
        let a = self.index(x)?;
        let v = &self.nodes[a].value;
        if i >= v.len() {
            return Err(Error::Domain(format!("pick index {i} out of range for {}", v.shape())));
        }
        let value = Tensor::scalar(v.values()[i]);
        Ok(self.push(value, Op::Pick(a, i)))
    }

    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let a = self.index(x)?;
        let value = Tensor::scalar(self.nodes[a].value.values().iter().sum());
        Ok(self.push(value, Op::SumAll(a)))
    }

    pub fn logsumexp(&mut self, x: NodeId) -> Result<NodeId> {
        let a = self.index(x)?;
        let value = Tensor::scalar(tensor::logsumexp(self.nodes[a].value.values())?);
        Ok(self.push(value, Op::LogSumExp(a)))
    }

    pub fn custom(&mut self, f: Box<dyn Function>, xs: &[NodeId]) -> Result<NodeId> {
        let idx = xs.iter().map(|&x| self.index(x)).collect::<Result<Vec<_>>>()?;
        let inputs: Vec<&Tensor> = idx.iter().map(|&i| &self.nodes[i].value).collect();
        let value = f.forward(&inputs)?;
        Ok(self.push(value, Op::Custom(f, idx)))
    }

    /// Reverse sweep from a scalar `loss`, returning parameter gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let root = self.index(loss)?;
        if self.nodes[root].value.len() != 1 {
            return Err(Error::Usage(format!("backward needs a scalar loss, got {}", self.nodes[root].value.shape())));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=root).map(|_| None).collect();
        grads[root] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.add_dense(*id, &g),
                Op::Lookup(id, row) => out.add_row(*id, *row, &g),
                Op::MatVec(m, v) => {
                    let mat = &self.nodes[*m].value;
                    let vec_in = self.nodes[*v].value.values();
                    let cols = mat.cols();
                    let gm = slot(&mut grads, *m, mat.len());
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            for (dst, x) in gm[r * cols..(r + 1) * cols].iter_mut().zip(vec_in) {
                                *dst += gr * x;
                            }
                        }
                    }
                    let gv = slot(&mut grads, *v, cols);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            for (dst, w) in gv.iter_mut().zip(mat.row(r)) {
                                *dst += gr * w;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(slot(&mut grads, *a, g.len()), &g);
                    add_into(slot(&mut grads, *b, g.len()), &g);
                }
                Op::AddN(xs) => {
                    for x in xs {
                        add_into(slot(&mut grads, *x, g.len()), &g);
                    }
                }
                Op::Hadamard(a, b) => {
                    let (va, vb) = (self.nodes[*a].value.values(), self.nodes[*b].value.values());
                    for (dst, (gi, y)) in slot(&mut grads, *a, g.len()).iter_mut().zip(g.iter().zip(vb)) {
                        *dst += gi * y;
                    }
                    for (dst, (gi, x)) in slot(&mut grads, *b, g.len()).iter_mut().zip(g.iter().zip(va)) {
                        *dst += gi * x;
                    }
                }
                Op::Sigmoid(a) => {
                    let y = node.value.values();
                    for (dst, (gi, s)) in slot(&mut grads, *a, g.len()).iter_mut().zip(g.iter().zip(y)) {
                        *dst += gi * s * (1.0 - s);
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.values();
                    for (dst, (gi, t)) in slot(&mut grads, *a, g.len()).iter_mut().zip(g.iter().zip(y)) {
                        *dst += gi * (1.0 - t * t);
                    }
                }
                Op::Relu(a) => {
                    let x = self.nodes[*a].value.values();
                    for (dst, (gi, v)) in slot(&mut grads, *a, g.len()).iter_mut().zip(g.iter().zip(x)) {
                        if *v > 0.0 {
                            *dst += gi;
                        }
                    }
                }
                Op::OneMinus(a) => {
                    for (dst, gi) in slot(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *dst -= gi;
                    }
                }
                Op::Mask(a, mask) => {
                    for (dst, (gi, m)) in slot(&mut grads, *a, g.len()).iter_mut().zip(g.iter().zip(mask)) {
                        *dst += gi * m;
                    }
                }
                Op::Concat(xs) | Op::StackRows(xs) => {
                    let mut offset = 0;
                    for x in xs {
                        let n = self.nodes[*x].value.len();
                        add_into(slot(&mut grads, *x, n), &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::Pick(a, k) => {
                    let n = self.nodes[*a].value.len();
                    slot(&mut grads, *a, n)[*k] += g[0];
                }
                Op::SumAll(a) => {
                    let n = self.nodes[*a].value.len();
                    for dst in slot(&mut grads, *a, n).iter_mut() {
                        *dst += g[0];
                    }
                }
                Op::LogSumExp(a) => {
                    let x = self.nodes[*a].value.values();
                    let lse = node.value.item();
                    for (dst, v) in slot(&mut grads, *a, x.len()).iter_mut().zip(x) {
                        *dst += g[0] * libm::exp(v - lse);
                    }
                }
                Op::Custom(f, xs) => {
                    let inputs: Vec<&Tensor> = xs.iter().map(|&x| &self.nodes[x].value).collect();
                    let local = f.backward(&inputs, &node.value, &g);
                    debug_assert_eq!(local.len(), xs.len(), "{} returned wrong arity", f.name());
                    for (x, gx) in xs.iter().zip(local) {
                        add_into(slot(&mut grads, *x, gx.len()), &gx);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], i: usize, len: usize) -> &mut Vec<f64> {
    grads[i].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Gradient of one parameter: dense, or a set of touched rows for lookups.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamGrad {
    Dense(Vec<f64>),
    Rows(BTreeMap<usize, Vec<f64>>),
}

/// Per-parameter gradients produced by one backward sweep.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    entries: BTreeMap<ParamId, ParamGrad>,
}

impl Gradients {
    fn add_dense(&mut self, id: ParamId, g: &[f64]) {
        match self.entries.get_mut(&id) {
            None => {
                self.entries.insert(id, ParamGrad::Dense(g.to_vec()));
            }
            Some(ParamGrad::Dense(d)) => add_into(d, g),
            Some(ParamGrad::Rows(rows)) => {
                let mut d = g.to_vec();
                let width = rows.values().next().map_or(0, Vec::len);
                for (r, v) in rows.iter() {
                    add_into(&mut d[r * width..(r + 1) * width], v);
                }
                self.entries.insert(id, ParamGrad::Dense(d));
            }
        }
    }

    fn add_row(&mut self, id: ParamId, row: usize, g: &[f64]) {
        match self.entries.entry(id).or_insert_with(|| ParamGrad::Rows(BTreeMap::new())) {
            ParamGrad::Dense(d) => {
                let w = g.len();
                add_into(&mut d[row * w..(row + 1) * w], g);
            }
            ParamGrad::Rows(rows) => {
                add_into(rows.entry(row).or_insert_with(|| vec![0.0; g.len()]), g);
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&ParamGrad> {
        self.entries.get(&id)
    }

    pub fn insert(&mut self, id: ParamId, grad: ParamGrad) {
        self.entries.insert(id, grad);
    }

    /// Dense copy of the gradient of `id`, zeros if untouched.
    pub fn dense(&self, store: &ParamStore, id: ParamId) -> Vec<f64> {
        let shape = store.get(id).shape();
        let mut d = vec![0.0; shape.len()];
        match self.entries.get(&id) {
            None => {}
            Some(ParamGrad::Dense(g)) => d.copy_from_slice(g),
            Some(ParamGrad::Rows(rows)) => {
                let w = shape.fan_in();
                for (r, v) in rows {
                    d[r * w..(r + 1) * w].copy_from_slice(v);
                }
            }
        }
        d
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamGrad)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.entries.values().flat_map(|g| -> Box<dyn Iterator<Item = &f64>> {
            match g {
                ParamGrad::Dense(d) => Box::new(d.iter()),
                ParamGrad::Rows(rows) => Box::new(rows.values().flatten()),
            }
        })
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.entries.values_mut().flat_map(|g| -> Box<dyn Iterator<Item = &mut f64>> {
            match g {
                ParamGrad::Dense(d) => Box::new(d.iter_mut()),
                ParamGrad::Rows(rows) => Box::new(rows.values_mut().flatten()),
            }
        })
    }

    /// Global L2 norm over every parameter.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values().map(|v| v * v).sum())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}
