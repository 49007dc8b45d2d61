use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::{Activation, Matrix};
use crate::error::{Error, Result};

/// Identity of a parameter store on a [`Tape`](super::Tape). Clones share it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StoreId(u64);

impl StoreId {
    fn fresh() -> Self {
        static NEXT: AtomicU64 = AtomicU64::new(1);
        StoreId(NEXT.fetch_add(1, Ordering::Relaxed))
    }
}

/// One trainable tensor together with its gradient and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Slot {
    pub value: Matrix,
    pub grad: Matrix,
    pub m: Matrix,
    pub v: Matrix,
}

impl Slot {
    fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Matrix::zeros(r, c),
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
        }
    }
}

/// A dense layer `activation(W·x + b)`; `W` is `out × in`, `b` is `1 × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Slot,
    pub bias: Slot,
    pub activation: Activation,
}

impl Dense {
    pub fn input_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.rows()
    }

    fn slots(&self) -> [&Slot; 2] {
        [&self.weight, &self.bias]
    }

    fn slots_mut(&mut self) -> [&mut Slot; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Width and nonlinearity of one layer in a [`LayerSpec`] list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub output: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub const fn new(output: usize, activation: Activation) -> Self {
        Self { output, activation }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// The weights of one feed-forward network plus gradient and optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    id: StoreId,
    name: String,
    layers: Vec<Dense>,
    step: u64,
}

impl ParamStore {
    /// Builds a network with Xavier-uniform weights and zero biases.
    pub fn xavier<R: Rng + ?Sized>(
        name: impl Into<String>,
        input: usize,
        layers: &[LayerSpec],
        rng: &mut R,
    ) -> Result<Self> {
        let mut prev = input;
        let mut built = Vec::with_capacity(layers.len());
        for layer in layers {
            let weight = xavier_init((layer.output, prev), rng)?;
            built.push(Dense {
                weight: Slot::new(weight),
                bias: Slot::new(Matrix::zeros(1, layer.output)),
                activation: layer.activation,
            });
            prev = layer.output;
        }
        Self::from_layers(name, built)
    }

    /// Builds a store from explicit `(weight, bias, activation)` triples.
    pub fn from_parts(
        name: impl Into<String>,
        parts: Vec<(Matrix, Vec<f64>, Activation)>,
    ) -> Result<Self> {
        let layers = parts
            .into_iter()
            .map(|(w, b, activation)| Dense {
                weight: Slot::new(w),
                bias: Slot::new(Matrix::row_vector(b)),
                activation,
            })
            .collect();
        Self::from_layers(name, layers)
    }

    fn from_layers(name: impl Into<String>, layers: Vec<Dense>) -> Result<Self> {
        let name = name.into();
        if layers.is_empty() {
            return Err(Error::Config(format!("network {name} has no layers")));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(
                    format!("{name} layer {}", i + 1),
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.value.shape() != (1, l.output_dim()) {
                return Err(Error::shape(
                    format!("{name} layer {i} bias"),
                    l.output_dim(),
                    l.bias.value.cols(),
                ));
            }
        }
        Ok(Self {
            id: StoreId::fresh(),
            name,
            layers,
            step: 0,
        })
    }

    pub fn id(&self) -> StoreId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Layer widths and activations, for layout checks.
    pub fn layout(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| LayerSpec::new(l.output_dim(), l.activation))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.value.len() + l.bias.value.len())
            .sum()
    }

    /// All parameter values flattened layer by layer (weights then bias).
    pub fn flat_values(&self) -> Vec<f64> {
        self.flatten(|s| &s.value)
    }

    /// All gradients in the same order as [`flat_values`](Self::flat_values).
    pub fn flat_grads(&self) -> Vec<f64> {
        self.flatten(|s| &s.grad)
    }

    fn flatten(&self, pick: impl Fn(&Slot) -> &Matrix) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            for s in l.slots() {
                out.extend_from_slice(pick(s).as_slice());
            }
        }
        out
    }

    /// Mutable access to the flat parameter coordinate `index`.
    pub fn value_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            for s in l.slots_mut() {
                if index < s.value.len() {
                    return &mut s.value.as_mut_slice()[index];
                }
                index -= s.value.len();
            }
        }
        panic!("parameter index out of range");
    }

    pub fn zero_grads(&mut self) {
        for l in &mut self.layers {
            for s in l.slots_mut() {
                s.grad.fill(0.0);
            }
        }
    }

    /// One Adam update with bias correction using the current gradients.
    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for l in &mut self.layers {
            for s in l.slots_mut() {
                let value = s.value.as_mut_slice();
                let grad = s.grad.as_slice();
                let m = s.m.as_mut_slice();
                let v = s.v.as_mut_slice();
                for i in 0..value.len() {
                    let g = grad[i];
                    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    value[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
                }
            }
        }
    }

    /// ½‖θ‖² over every weight and bias.
    pub fn l2_penalty(&self) -> f64 {
        0.5 * self
            .layers
            .iter()
            .flat_map(|l| l.slots())
            .map(|s| s.value.sum_squares())
            .sum::<f64>()
    }

    /// Order-sensitive fingerprint of the parameter values, used to check
    /// that a training step left a store untouched.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for v in self.flat_values() {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Xavier-uniform weight matrix of shape `(out, in)`: entries drawn from
/// `U(−a, a)` with `a = √(6 / (in + out))`.
pub fn xavier_init<R: Rng + ?Sized>(shape: (usize, usize), rng: &mut R) -> Result<Matrix> {
    let (out, inp) = shape;
    if out == 0 || inp == 0 {
        return Err(Error::Config(format!(
            "xavier_init needs non-zero dimensions, got ({out}, {inp})"
        )));
    }
    let bound = (6.0 / (inp + out) as f64).sqrt();
    let data = (0..out * inp)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Ok(Matrix::from_vec(out, inp, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(w: f64) -> ParamStore {
        ParamStore::from_parts(
            "t",
            vec![(Matrix::from_vec(1, 1, vec![w]), vec![0.0], Activation::Linear)],
        )
        .unwrap()
    }

    #[test]
    fn xavier_bound_for_1x5() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = xavier_init((1, 5), &mut rng).unwrap();
        assert!(w.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn xavier_variance() {
        // Var U(−a, a) = a²/3 = 2 / (in + out)
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut samples = Vec::new();
        while samples.len() < 100_000 {
            samples.extend(xavier_init((64, 128), &mut rng).unwrap().into_vec());
        }
        samples.truncate(100_000);
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = 2.0 / 192.0;
        assert_abs_diff_eq!(expected, 0.010417, epsilon = 1e-6);
        assert!((var - expected).abs() < 0.1 * expected, "var {var}");
    }

    #[test]
    fn xavier_rejects_zero_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(xavier_init((0, 3), &mut rng), Err(Error::Config(_))));
        assert!(matches!(xavier_init((3, 0), &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn biases_start_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = ParamStore::xavier(
            "n",
            9,
            &[
                LayerSpec::new(17, Activation::Relu),
                LayerSpec::new(4, Activation::Linear),
            ],
            &mut rng,
        )
        .unwrap();
        for l in s.layers() {
            assert!(l.bias.value.as_slice().iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut s = single(0.0);
        s.layers_mut()[0].weight.grad.as_mut_slice()[0] = 1.0;
        s.adam_step(&AdamConfig::default());
        // m̂ = g, v̂ = g², update = lr · g / (|g| + ε)
        let w = s.layers()[0].weight.value.item();
        assert!((w + 0.001).abs() < 1e-8, "{w}");
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn adam_with_zero_grad_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = ParamStore::xavier(
            "n",
            3,
            &[LayerSpec::new(4, Activation::Tanh)],
            &mut rng,
        )
        .unwrap();
        let before = s.flat_values();
        s.adam_step(&AdamConfig::default());
        s.adam_step(&AdamConfig::default());
        assert_eq!(before, s.flat_values());
        assert_eq!(s.step_count(), 2);
    }

    #[test]
    fn adam_is_deterministic() {
        let mut a = single(0.3);
        let mut b = a.clone();
        for s in [&mut a, &mut b] {
            s.layers_mut()[0].weight.grad.as_mut_slice()[0] = -0.7;
            s.layers_mut()[0].bias.grad.as_mut_slice()[0] = 0.2;
            s.adam_step(&AdamConfig::default());
        }
        assert_eq!(a, b);
    }

    #[test]
    fn l2_penalty_values() {
        assert_eq!(single(0.0).l2_penalty(), 0.0);
        assert_eq!(single(2.0).l2_penalty(), 2.0);
        let a = single(1.5);
        let b = single(-0.5);
        let joined = ParamStore::from_parts(
            "j",
            vec![
                (Matrix::from_vec(1, 1, vec![1.5]), vec![0.0], Activation::Linear),
                (Matrix::from_vec(1, 1, vec![-0.5]), vec![0.0], Activation::Linear),
            ],
        )
        .unwrap();
        assert_eq!(joined.l2_penalty(), a.l2_penalty() + b.l2_penalty());
    }

    #[test]
    fn mismatched_layers_rejected() {
        let r = ParamStore::from_parts(
            "bad",
            vec![
                (Matrix::zeros(3, 2), vec![0.0; 3], Activation::Relu),
                (Matrix::zeros(1, 4), vec![0.0], Activation::Linear),
            ],
        );
        assert!(matches!(r, Err(Error::Shape { .. })));
    }
}
