//! Messages, transmitter and receiver networks, noise calibration and BLER.
//!
//! Complex baseband signals are carried as interleaved real pairs
//! `(Re₁, Im₁, …, Reₙ, Imₙ)`. The transmitter output is normalized so that
//! the average power per complex channel use is one, i.e. `‖x‖² = n`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, Matrix, ParamStore, Tape, Var};

/// A message index together with its one-hot encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    index: usize,
    onehot: Vec<f64>,
}

impl Message {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn onehot(&self) -> &[f64] {
        &self.onehot
    }

    pub fn alphabet(&self) -> usize {
        self.onehot.len()
    }
}

pub fn encode_one_hot(m: usize, alphabet: usize) -> Result<Message> {
    if m >= alphabet {
        return Err(Error::Domain(format!(
            "message index {m} outside alphabet of size {alphabet}"
        )));
    }
    let mut onehot = vec![0.0; alphabet];
    onehot[m] = 1.0;
    Ok(Message { index: m, onehot })
}

/// One-hot rows for a batch of message indices.
pub fn one_hot_batch(indices: &[usize], alphabet: usize) -> Result<Matrix> {
    let mut out = Matrix::zeros(indices.len(), alphabet);
    for (r, &m) in indices.iter().enumerate() {
        if m >= alphabet {
            return Err(Error::Domain(format!(
                "message index {m} outside alphabet of size {alphabet}"
            )));
        }
        out.set(r, m, 1.0);
    }
    Ok(out)
}

/// `n` complex channel symbols stored as `2n` interleaved reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal(Vec<f64>);

impl Signal {
    pub fn new(re_im: Vec<f64>) -> Result<Self> {
        if re_im.is_empty() || re_im.len() % 2 != 0 {
            return Err(Error::shape("signal", "non-zero even length", re_im.len()));
        }
        Ok(Self(re_im))
    }

    /// Number of complex channel uses.
    pub fn channel_uses(&self) -> usize {
        self.0.len() / 2
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn energy(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

/// Scales `v` (length `2n`) to `‖x‖² = n`.
pub fn normalize_power(v: &[f64]) -> Result<Signal> {
    if v.is_empty() || v.len() % 2 != 0 {
        return Err(Error::shape("signal", "non-zero even length", v.len()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::DegenerateSignal { norm });
    }
    let s = ((v.len() / 2) as f64).sqrt() / norm;
    Signal::new(v.iter().map(|x| x * s).collect())
}

/// A softmax output over the message alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Checks the simplex invariant (entries in `[0,1]`, sum within 1e-9 of 1).
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let total: f64 = p.iter().sum();
        if p.is_empty() || p.iter().any(|v| !(0.0..=1.0).contains(v)) || (total - 1.0).abs() > 1e-9
        {
            return Err(Error::Domain(format!("not a probability vector: {p:?}")));
        }
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn decide(&self) -> usize {
        decide(&self.0)
    }
}

/// Index of the largest probability; ties go to the lowest index.
pub fn decide(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Noise variance per complex channel use for a given `Eb/N0` in dB:
/// `δ² = n / (2 · 10^(EbN0/10) · log₂ M)`. Each real component carries `δ²/2`.
pub fn ebn0_to_noise_var(ebn0_db: f64, alphabet: usize, channel_uses: usize) -> f64 {
    let ebn0 = 10f64.powf(ebn0_db / 10.0);
    let bits = (alphabet as f64).log2();
    channel_uses as f64 / (2.0 * ebn0 * bits)
}

/// Fraction of positions where the decision differs from the truth.
pub fn bler(decisions: &[usize], truths: &[usize]) -> Result<f64> {
    if decisions.len() != truths.len() {
        return Err(Error::Contract(format!(
            "bler over {} decisions and {} truths",
            decisions.len(),
            truths.len()
        )));
    }
    if decisions.is_empty() {
        return Err(Error::Contract("bler over an empty set".into()));
    }
    let errors = decisions.iter().zip(truths).filter(|(d, t)| d != t).count();
    Ok(errors as f64 / decisions.len() as f64)
}

/// Link parameters shared by every training scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkConfig {
    /// Alphabet size `M`.
    pub alphabet: usize,
    /// Complex channel uses `n` per message.
    pub channel_uses: usize,
    pub ebn0_db: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub pilot: bool,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            alphabet: 16,
            channel_uses: 7,
            ebn0_db: 3.0,
            batch_size: 320,
            lambda: 0.01,
            pilot: false,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphabet < 2 {
            return Err(Error::Config(format!("M must be at least 2, got {}", self.alphabet)));
        }
        if self.channel_uses == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !self.ebn0_db.is_finite() {
            return Err(Error::Config("Eb/N0 must be finite".into()));
        }
        Ok(())
    }

    pub fn noise_var(&self) -> f64 {
        ebn0_to_noise_var(self.ebn0_db, self.alphabet, self.channel_uses)
    }

    /// Width of one received frame: `2n`, or `4n` with a pilot block in front.
    pub fn frame_width(&self) -> usize {
        if self.pilot {
            4 * self.channel_uses
        } else {
            2 * self.channel_uses
        }
    }
}

/// `M → 2M (ReLU) → 2n (linear)`, followed by power normalization.
pub fn transmitter_layout(alphabet: usize, channel_uses: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(2 * alphabet, Activation::Relu),
        LayerSpec::new(2 * channel_uses, Activation::Linear),
    ]
}

/// `d → 4M (ReLU) → M (softmax)`.
pub fn receiver_layout(alphabet: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(4 * alphabet, Activation::Relu),
        LayerSpec::new(alphabet, Activation::Softmax),
    ]
}

fn check_layout(params: &ParamStore, input: usize, layout: &[LayerSpec]) -> Result<()> {
    if params.input_dim() != input || params.layout() != layout {
        return Err(Error::shape(
            format!("{} layout", params.name()),
            format!("{input} -> {layout:?}"),
            format!("{} -> {:?}", params.input_dim(), params.layout()),
        ));
    }
    Ok(())
}

/// The transmitter network `one-hot → x ∈ ℂⁿ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transmitter {
    pub params: ParamStore,
    alphabet: usize,
    channel_uses: usize,
}

impl Transmitter {
    pub fn new<R: Rng + ?Sized>(alphabet: usize, channel_uses: usize, rng: &mut R) -> Result<Self> {
        let params = ParamStore::xavier(
            "transmitter",
            alphabet,
            &transmitter_layout(alphabet, channel_uses),
            rng,
        )?;
        Ok(Self {
            params,
            alphabet,
            channel_uses,
        })
    }

    pub fn from_params(params: ParamStore, alphabet: usize, channel_uses: usize) -> Result<Self> {
        check_layout(&params, alphabet, &transmitter_layout(alphabet, channel_uses))?;
        Ok(Self {
            params,
            alphabet,
            channel_uses,
        })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn channel_uses(&self) -> usize {
        self.channel_uses
    }

    /// Taped forward pass on a batch of one-hot rows, power-normalized per row.
    pub fn forward(&self, tape: &mut Tape, onehots: Var) -> Result<Var> {
        let raw = tape.forward(&self.params, onehots)?;
        tape.normalize_rows(raw, self.channel_uses as f64)
    }

    pub fn transmit(&self, msg: &Message) -> Result<Signal> {
        if msg.alphabet() != self.alphabet {
            return Err(Error::shape("transmit message", self.alphabet, msg.alphabet()));
        }
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::row_vector(msg.onehot().to_vec()));
        let y = self.forward(&mut tape, x)?;
        Signal::new(tape.value(y).as_slice().to_vec())
    }

    /// Untaped transmit of many messages; one signal per row.
    pub fn transmit_batch(&self, indices: &[usize]) -> Result<Matrix> {
        let mut tape = Tape::new();
        let x = tape.constant(one_hot_batch(indices, self.alphabet)?);
        let y = self.forward(&mut tape, x)?;
        Ok(tape.value(y).clone())
    }
}

/// The receiver network `received frame → probability vector`.
#[derive(Clone, Debug, PartialEq)]
pub struct Receiver {
    pub params: ParamStore,
    alphabet: usize,
}

impl Receiver {
    pub fn new<R: Rng + ?Sized>(alphabet: usize, input: usize, rng: &mut R) -> Result<Self> {
        let params = ParamStore::xavier("receiver", input, &receiver_layout(alphabet), rng)?;
        Ok(Self { params, alphabet })
    }

    pub fn from_params(params: ParamStore, alphabet: usize) -> Result<Self> {
        check_layout(&params, params.input_dim(), &receiver_layout(alphabet))?;
        Ok(Self { params, alphabet })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    pub fn forward(&self, tape: &mut Tape, frames: Var) -> Result<Var> {
        tape.forward(&self.params, frames)
    }

    pub fn receive(&self, y: &[f64]) -> Result<ProbVector> {
        let p = self.receive_batch(&Matrix::row_vector(y.to_vec()))?;
        ProbVector::new(p.into_vec())
    }

    /// Untaped receive of many frames; one probability vector per row.
    pub fn receive_batch(&self, frames: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let y = tape.constant(frames.clone());
        let p = self.forward(&mut tape, y)?;
        Ok(tape.value(p).clone())
    }

    /// Decisions for every row of `frames`.
    pub fn decide_batch(&self, frames: &Matrix) -> Result<Vec<usize>> {
        let p = self.receive_batch(frames)?;
        Ok((0..p.rows()).map(|r| decide(p.row(r))).collect())
    }
}
