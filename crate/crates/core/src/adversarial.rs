//! Channel surrogate: a generator that imitates the received signal, a
//! discriminator that scores real against generated frames, and the losses
//! that train them.
//!
//! In residual mode the generator network learns `ỹ − x` and a skip
//! connection adds the transmitted signal back: `ỹ = x + f(x, side, z)`.

use rand::Rng;

use crate::channels::gaussian_noise;
use crate::comms::LinkConfig;
use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, Matrix, ParamStore, Tape, Var};

/// `ELU 8M → Tanh 8M → Linear 2n`.
pub fn generator_layout(alphabet: usize, channel_uses: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(8 * alphabet, Activation::Elu),
        LayerSpec::new(8 * alphabet, Activation::Tanh),
        LayerSpec::new(2 * channel_uses, Activation::Linear),
    ]
}

/// `ELU 2M → ELU 2M → Sigmoid 1`.
pub fn discriminator_layout(alphabet: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(2 * alphabet, Activation::Elu),
        LayerSpec::new(2 * alphabet, Activation::Elu),
        LayerSpec::new(1, Activation::Sigmoid),
    ]
}

/// Which gradient routes through a residual generator stay on the tape.
/// The two partial modes split the transmitter gradient into its
/// network-body and skip-connection terms, which sum to the full gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradientPath {
    #[default]
    Full,
    /// Skip connection carries the value of `x` but no gradient.
    BodyOnly,
    /// Network output carries its value but no gradient.
    SkipOnly,
}

/// A batch of generator inputs: `conditional` rows are the transmitted
/// signal `x` (2n), optionally followed by the received pilot (2n).
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorInput {
    pub conditional: Matrix,
    pub z: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub params: ParamStore,
    residual: bool,
    channel_uses: usize,
    conditional_dim: usize,
    latent_dim: usize,
}

impl Generator {
    /// Default-layout generator for `link`; the latent width is `2n`.
    pub fn new<R: Rng + ?Sized>(link: &LinkConfig, residual: bool, rng: &mut R) -> Result<Self> {
        let n = link.channel_uses;
        Self::with_layout(
            link.frame_width(),
            2 * n,
            n,
            &generator_layout(link.alphabet, n),
            residual,
            rng,
        )
    }

    /// A generator with an arbitrary hidden stack; the last layer must output `2n`.
    pub fn with_layout<R: Rng + ?Sized>(
        conditional_dim: usize,
        latent_dim: usize,
        channel_uses: usize,
        layout: &[LayerSpec],
        residual: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if conditional_dim < 2 * channel_uses {
            return Err(Error::shape(
                "generator conditional width",
                format!(">= {}", 2 * channel_uses),
                conditional_dim,
            ));
        }
        let params = ParamStore::xavier("generator", conditional_dim + latent_dim, layout, rng)?;
        if params.output_dim() != 2 * channel_uses {
            return Err(Error::shape(
                "generator output",
                2 * channel_uses,
                params.output_dim(),
            ));
        }
        Ok(Self {
            params,
            residual,
            channel_uses,
            conditional_dim,
            latent_dim,
        })
    }

    pub fn is_residual(&self) -> bool {
        self.residual
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn conditional_dim(&self) -> usize {
        self.conditional_dim
    }

    pub fn sample_latent<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Matrix {
        // variance 1 per entry
        gaussian_noise(rows, self.latent_dim, 2.0, rng)
    }

    /// Network output `f(concat(x, side, z))` without the skip connection.
    pub fn body(&self, tape: &mut Tape, x: Var, side: Option<Var>, z: Var) -> Result<Var> {
        let mut parts = vec![x];
        parts.extend(side);
        parts.push(z);
        let input = tape.concat(&parts)?;
        let width = tape.value(input).cols();
        if width != self.params.input_dim() {
            return Err(Error::shape("generator input", self.params.input_dim(), width));
        }
        tape.forward(&self.params, input)
    }

    /// Generated received signal `ỹ` (2n per row).
    pub fn forward(&self, tape: &mut Tape, x: Var, side: Option<Var>, z: Var) -> Result<Var> {
        self.forward_with(tape, x, side, z, GradientPath::Full)
    }

    pub fn forward_with(
        &self,
        tape: &mut Tape,
        x: Var,
        side: Option<Var>,
        z: Var,
        path: GradientPath,
    ) -> Result<Var> {
        let xw = tape.value(x).cols();
        if xw != 2 * self.channel_uses {
            return Err(Error::shape("generator signal input", 2 * self.channel_uses, xw));
        }
        if !self.residual {
            return self.body(tape, x, side, z);
        }
        match path {
            GradientPath::Full => {
                let body = self.body(tape, x, side, z)?;
                tape.add(x, body)
            }
            GradientPath::BodyOnly => {
                let body = self.body(tape, x, side, z)?;
                let skip = tape.detach(x);
                tape.add(skip, body)
            }
            GradientPath::SkipOnly => {
                let xd = tape.detach(x);
                let body = self.body(tape, xd, side, z)?;
                let body = tape.detach(body);
                tape.add(x, body)
            }
        }
    }

    /// Untaped generation for a batch of inputs.
    pub fn generate(&self, gin: &GeneratorInput) -> Result<Matrix> {
        let two_n = 2 * self.channel_uses;
        if gin.conditional.cols() != self.conditional_dim {
            return Err(Error::shape(
                "generator conditional",
                self.conditional_dim,
                gin.conditional.cols(),
            ));
        }
        if gin.z.cols() != self.latent_dim || gin.z.rows() != gin.conditional.rows() {
            return Err(Error::shape(
                "generator latent",
                format!("{}x{}", gin.conditional.rows(), self.latent_dim),
                format!("{}x{}", gin.z.rows(), gin.z.cols()),
            ));
        }
        let mut tape = Tape::new();
        let x = tape.constant(gin.conditional.columns(0, two_n));
        let side = (self.conditional_dim > two_n)
            .then(|| tape.constant(gin.conditional.columns(two_n, self.conditional_dim)));
        let z = tape.constant(gin.z.clone());
        let y = self.forward(&mut tape, x, side, z)?;
        Ok(tape.value(y).clone())
    }
}

/// `ỹ = f_G(concat(conditional, z))` for a conventional generator.
pub fn generator_forward(pair: &AdversarialPair, gin: &GeneratorInput) -> Result<Matrix> {
    if pair.generator.residual {
        return Err(Error::Contract(
            "generator_forward called on a residual generator".into(),
        ));
    }
    pair.generator.generate(gin)
}

/// `ỹ = x + f_G^R(concat(conditional, z))` for a residual generator.
pub fn residual_generator_forward(pair: &AdversarialPair, gin: &GeneratorInput) -> Result<Matrix> {
    if !pair.generator.residual {
        return Err(Error::Contract(
            "residual_generator_forward called on a conventional generator".into(),
        ));
    }
    pair.generator.generate(gin)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub params: ParamStore,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(alphabet: usize, input: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            params: ParamStore::xavier(
                "discriminator",
                input,
                &discriminator_layout(alphabet),
                rng,
            )?,
        })
    }

    /// Scores in `(0, 1)`, one row per candidate frame.
    pub fn forward(&self, tape: &mut Tape, frames: Var) -> Result<Var> {
        tape.forward(&self.params, frames)
    }

    pub fn score(&self, frames: &Matrix) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let f = tape.constant(frames.clone());
        let d = self.forward(&mut tape, f)?;
        Ok(tape.value(d).as_slice().to_vec())
    }
}

/// Generator and discriminator trained together.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialPair {
    pub generator: Generator,
    pub discriminator: Discriminator,
}

impl AdversarialPair {
    pub fn new<R: Rng + ?Sized>(link: &LinkConfig, residual: bool, rng: &mut R) -> Result<Self> {
        let generator = Generator::new(link, residual, rng)?;
        let discriminator = Discriminator::new(link.alphabet, link.frame_width(), rng)?;
        Ok(Self {
            generator,
            discriminator,
        })
    }

    pub fn residual(&self) -> bool {
        self.generator.residual
    }

    pub fn discriminator_forward(&self, candidate: &[f64]) -> Result<f64> {
        Ok(self
            .discriminator
            .score(&Matrix::row_vector(candidate.to_vec()))?[0])
    }
}

/// Mean over the batch of `−ln D(y) − ln(1 − D(ỹ))`.
pub fn discriminator_loss(tape: &mut Tape, d_real: Var, d_fake: Var) -> Result<Var> {
    let (rr, rf) = (tape.value(d_real).rows(), tape.value(d_fake).rows());
    if rr != rf {
        return Err(Error::shape("discriminator batches", rr, rf));
    }
    let ones = Matrix::filled(rr, 1, 1.0);
    let zeros = Matrix::zeros(rf, 1);
    let real = tape.binary_cross_entropy(d_real, &ones)?;
    let fake = tape.binary_cross_entropy(d_fake, &zeros)?;
    tape.add(real, fake)
}

/// Mean over the batch of `−ln D(ỹ)`.
pub fn generator_loss(tape: &mut Tape, d_fake: Var) -> Result<Var> {
    let ones = Matrix::filled(tape.value(d_fake).rows(), 1, 1.0);
    tape.binary_cross_entropy(d_fake, &ones)
}

/// `base + λ·½‖θ‖²` over the one store being trained.
pub fn regularized_loss(tape: &mut Tape, base: Var, store: &ParamStore, lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(base);
    }
    let penalty = tape.l2_penalty(store)?;
    let scaled = tape.scale(penalty, lambda);
    tape.add(base, scaled)
}
