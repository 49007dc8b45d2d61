//! Define-by-run reverse-mode differentiation over batched matrices.
//!
//! Every node on a [`Tape`] holds a `rows × cols` value; rows are batch
//! entries. Parameters enter as leaves tagged with their owning
//! [`ParamStore`], so after [`Tape::backward`] the gradients can be routed
//! back into the store with [`Gradients::write_into`].

use std::collections::HashMap;

use num_complex::Complex64;

use super::params::StoreId;
use super::{Activation, Matrix, ParamStore};
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]` inside logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamKey {
    pub store: StoreId,
    pub layer: usize,
    pub bias: bool,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    /// `x · Wᵀ + b`
    Affine { x: Var, w: Var, b: Var },
    Activate { x: Var, act: Activation },
    Concat(Vec<Var>),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Matrix),
    /// Row `i` is read as interleaved complex pairs and multiplied by `gains[i]`.
    ComplexGain(Var, Vec<Complex64>),
    /// Each row rescaled to squared norm `target`; keeps the pre-scale norms.
    NormalizeRows { x: Var, target: f64, norms: Vec<f64> },
    HalfSumSquares(Var),
    Sum(Var),
    /// Mean over rows of Σ_j −[t ln p + (1 − t) ln(1 − p)].
    BinaryCrossEntropy { p: Var, targets: Matrix },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamKey, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Constant => false,
            Op::Param => true,
            Op::Affine { x, w, b } => self.ng(*x) || self.ng(*w) || self.ng(*b),
            Op::Activate { x, .. }
            | Op::Scale(x, _)
            | Op::MulConst(x, _)
            | Op::ComplexGain(x, _)
            | Op::NormalizeRows { x, .. }
            | Op::HalfSumSquares(x)
            | Op::Sum(x)
            | Op::BinaryCrossEntropy { p: x, .. } => self.ng(*x),
            Op::Concat(parts) => parts.iter().any(|p| self.ng(*p)),
            Op::Add(a, b) | Op::Sub(a, b) => self.ng(*a) || self.ng(*b),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// A constant copy of `v`'s current value; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    /// Leaf for the weight (or bias) of `layer` in `store`, registered once per tape.
    pub fn param(&mut self, store: &ParamStore, layer: usize, bias: bool) -> Var {
        let key = ParamKey {
            store: store.id(),
            layer,
            bias,
        };
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let l = &store.layers()[layer];
        let value = if bias {
            l.bias.value.clone()
        } else {
            l.weight.value.clone()
        };
        let v = self.push(value, Op::Param);
        self.params.insert(key, v);
        v
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.cols() {
            return Err(Error::shape("affine input", wv.cols(), xv.cols()));
        }
        if bv.shape() != (1, wv.rows()) {
            return Err(Error::shape("affine bias", wv.rows(), bv.cols()));
        }
        let mut out = xv.matmul_transposed(wv);
        let bias = bv.as_slice();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bias) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::Affine { x, w, b }))
    }

    pub fn activate(&mut self, x: Var, act: Activation) -> Var {
        let mut out = self.value(x).clone();
        if act != Activation::Linear {
            for r in 0..out.rows() {
                act.apply_in_place(out.row_mut(r));
            }
        }
        self.push(out, Op::Activate { x, act })
    }

    /// `activation(W·x + b)` for one layer of `store`, applied to every row of `x`.
    pub fn dense_forward(&mut self, store: &ParamStore, layer: usize, x: Var) -> Result<Var> {
        let l = store.layers().get(layer).ok_or_else(|| {
            Error::Contract(format!("{} has no layer {layer}", store.name()))
        })?;
        let width = self.value(x).cols();
        if width != l.input_dim() {
            return Err(Error::shape(
                format!("{} layer {layer}", store.name()),
                l.input_dim(),
                width,
            ));
        }
        let act = l.activation;
        let w = self.param(store, layer, false);
        let b = self.param(store, layer, true);
        let z = self.affine(x, w, b)?;
        Ok(self.activate(z, act))
    }

    /// Runs every layer of `store` in order.
    pub fn forward(&mut self, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for layer in 0..store.layers().len() {
            h = self.dense_forward(store, layer, h)?;
        }
        Ok(h)
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|p| self.value(*p).rows())
            .ok_or_else(|| Error::Contract("concat of nothing".into()))?;
        for p in parts {
            if self.value(*p).rows() != rows {
                return Err(Error::shape("concat rows", rows, self.value(*p).rows()));
            }
        }
        let values: Vec<&Matrix> = parts.iter().map(|p| self.value(*p)).collect();
        let out = Matrix::hcat(&values);
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(what, format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let mut out = self.value(a).clone();
        out.scaled_add_assign(-1.0, self.value(b));
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|v| v * factor);
        self.push(out, Op::Scale(a, factor))
    }

    /// Element-wise product with a constant of the same shape.
    pub fn mul_const(&mut self, a: Var, factor: Matrix) -> Result<Var> {
        let av = self.value(a);
        if av.shape() != factor.shape() {
            return Err(Error::shape(
                "mul_const",
                format!("{:?}", av.shape()),
                format!("{:?}", factor.shape()),
            ));
        }
        let data = av
            .as_slice()
            .iter()
            .zip(factor.as_slice())
            .map(|(x, f)| x * f)
            .collect();
        let out = Matrix::from_vec(av.rows(), av.cols(), data);
        Ok(self.push(out, Op::MulConst(a, factor)))
    }

    /// Multiplies each row, viewed as `cols/2` complex symbols, by that row's gain.
    pub fn complex_gain(&mut self, x: Var, gains: &[Complex64]) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != gains.len() {
            return Err(Error::shape("complex_gain rows", gains.len(), xv.rows()));
        }
        if xv.cols() % 2 != 0 {
            return Err(Error::shape("complex_gain width", "even", xv.cols()));
        }
        let mut out = xv.clone();
        for (r, h) in gains.iter().enumerate() {
            for pair in out.row_mut(r).chunks_exact_mut(2) {
                let (re, im) = (pair[0], pair[1]);
                pair[0] = h.re * re - h.im * im;
                pair[1] = h.re * im + h.im * re;
            }
        }
        Ok(self.push(out, Op::ComplexGain(x, gains.to_vec())))
    }

    /// Scales every row to squared norm `target`. Rows with norm below
    /// 1e-12 are rejected.
    pub fn normalize_rows(&mut self, x: Var, target: f64) -> Result<Var> {
        let xv = self.value(x);
        let mut out = xv.clone();
        let mut norms = Vec::with_capacity(xv.rows());
        let scale_to = target.sqrt();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                return Err(Error::DegenerateSignal { norm });
            }
            let s = scale_to / norm;
            row.iter_mut().for_each(|v| *v *= s);
            norms.push(norm);
        }
        Ok(self.push(out, Op::NormalizeRows { x, target, norms }))
    }

    /// ½ Σ x² as a 1×1 node.
    pub fn half_sum_squares(&mut self, x: Var) -> Var {
        let out = Matrix::scalar(0.5 * self.value(x).sum_squares());
        self.push(out, Op::HalfSumSquares(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Matrix::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x))
    }

    /// Mean over rows of the component-summed binary cross-entropy between
    /// probabilities `p` and constant `targets`.
    pub fn binary_cross_entropy(&mut self, p: Var, targets: &Matrix) -> Result<Var> {
        let pv = self.value(p);
        if pv.shape() != targets.shape() {
            return Err(Error::shape(
                "cross-entropy targets",
                format!("{:?}", pv.shape()),
                format!("{:?}", targets.shape()),
            ));
        }
        if pv.rows() == 0 {
            return Err(Error::Contract("cross-entropy over an empty batch".into()));
        }
        let total: f64 = pv
            .as_slice()
            .iter()
            .zip(targets.as_slice())
            .map(|(&p, &t)| bce_term(p, t))
            .sum();
        let out = Matrix::scalar(total / pv.rows() as f64);
        Ok(self.push(
            out,
            Op::BinaryCrossEntropy {
                p,
                targets: targets.clone(),
            },
        ))
    }

    /// ½‖θ‖² over every layer of `store`, taped so its gradient is `θ`.
    pub fn l2_penalty(&mut self, store: &ParamStore) -> Result<Var> {
        let mut total: Option<Var> = None;
        for layer in 0..store.layers().len() {
            for bias in [false, true] {
                let p = self.param(store, layer, bias);
                let sq = self.half_sum_squares(p);
                total = Some(match total {
                    None => sq,
                    Some(t) => self.add(t, sq)?,
                });
            }
        }
        total.ok_or_else(|| Error::Contract("penalty of an empty store".into()))
    }

    /// Reverse sweep from the scalar node `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_shape = self.value(output).shape();
        if out_shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got {out_shape:?}"
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Constant => {}
                Op::Param => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Affine { x, w, b } => {
                    let xv = self.value(*x);
                    if self.ng(*x) {
                        let dx = g.matmul(self.value(*w));
                        accumulate(&mut grads, *x, dx);
                    }
                    if self.ng(*w) {
                        let wv = self.value(*w);
                        let mut dw = Matrix::zeros(wv.rows(), wv.cols());
                        dw.add_transposed_product(1.0, &g, xv);
                        accumulate(&mut grads, *w, dw);
                    }
                    if self.ng(*b) {
                        let mut db = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (d, v) in db.as_mut_slice().iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Activate { x, act } => {
                    let input = self.value(*x);
                    let mut dx = Matrix::zeros(input.rows(), input.cols());
                    for r in 0..input.rows() {
                        act.vjp(input.row(r), node.value.row(r), g.row(r), dx.row_mut(r));
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        if self.ng(*p) {
                            accumulate(&mut grads, *p, g.columns(start, start + w));
                        }
                        start += w;
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.ng(*b) {
                        accumulate(&mut grads, *b, g.map(|v| -v));
                    }
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Scale(a, f) => accumulate(&mut grads, *a, g.map(|v| v * f)),
                Op::MulConst(a, factor) => {
                    let data = g
                        .as_slice()
                        .iter()
                        .zip(factor.as_slice())
                        .map(|(g, f)| g * f)
                        .collect();
                    accumulate(&mut grads, *a, Matrix::from_vec(g.rows(), g.cols(), data));
                }
                Op::ComplexGain(x, gains) => {
                    // y = h·x  ⇒  ∂L/∂x = conj(h)·∂L/∂y in the interleaved real view
                    let mut dx = g;
                    for (r, h) in gains.iter().enumerate() {
                        for pair in dx.row_mut(r).chunks_exact_mut(2) {
                            let (gr, gi) = (pair[0], pair[1]);
                            pair[0] = h.re * gr + h.im * gi;
                            pair[1] = -h.im * gr + h.re * gi;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::NormalizeRows { x, target, norms } => {
                    // y = c·x/‖x‖  ⇒  dx = (c/‖x‖)·(g − u(u·g)),  u = x/‖x‖
                    let c = target.sqrt();
                    let input = self.value(*x);
                    let mut dx = Matrix::zeros(input.rows(), input.cols());
                    for r in 0..input.rows() {
                        let norm = norms[r];
                        let xr = input.row(r);
                        let gr = g.row(r);
                        let ug: f64 = xr.iter().zip(gr).map(|(x, g)| x * g).sum::<f64>() / norm;
                        for (d, (xi, gi)) in dx.row_mut(r).iter_mut().zip(xr.iter().zip(gr)) {
                            *d = c / norm * (gi - xi / norm * ug);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::HalfSumSquares(x) => {
                    let s = g.item();
                    accumulate(&mut grads, *x, self.value(*x).map(|v| v * s));
                }
                Op::Sum(x) => {
                    let s = g.item();
                    let (r, c) = self.value(*x).shape();
                    accumulate(&mut grads, *x, Matrix::filled(r, c, s));
                }
                Op::BinaryCrossEntropy { p, targets } => {
                    let pv = self.value(*p);
                    let s = g.item() / pv.rows() as f64;
                    let data = pv
                        .as_slice()
                        .iter()
                        .zip(targets.as_slice())
                        .map(|(&p, &t)| s * bce_slope(p, t))
                        .collect();
                    accumulate(&mut grads, *p, Matrix::from_vec(pv.rows(), pv.cols(), data));
                }
            }
        }

        let params = self
            .params
            .iter()
            .filter_map(|(k, v)| grads.get_mut(v.0).and_then(Option::take).map(|g| (*k, g)))
            .collect();
        Ok(Gradients { grads, params })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

#[inline]
pub(crate) fn bce_term(p: f64, t: f64) -> f64 {
    let p = clamp_prob(p);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

#[inline]
fn bce_slope(p: f64, t: f64) -> f64 {
    let p = clamp_prob(p);
    -t / p + (1.0 - t) / (1.0 - p)
}

/// Result of a reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    params: Vec<(ParamKey, Matrix)>,
}

impl Gradients {
    /// Gradient with respect to a non-parameter node, if it influenced the output.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Overwrites `store`'s gradient slots: parameters that reached the
    /// output get their gradient, all others get exactly zero.
    pub fn write_into(&self, store: &mut ParamStore) {
        store.zero_grads();
        let id = store.id();
        for (key, g) in &self.params {
            if key.store != id {
                continue;
            }
            let layer = &mut store.layers_mut()[key.layer];
            let slot = if key.bias {
                &mut layer.bias
            } else {
                &mut layer.weight
            };
            slot.grad.add_assign(g);
        }
    }
}
