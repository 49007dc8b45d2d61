//! Training schemes for the transmitter/receiver pair.
//!
//! Every scheme trains the receiver on real received frames. They differ in
//! how the transmitter gets its gradient:
//!
//! - `optimal`: through the true channel, which is assumed known.
//! - `gan`: through a conventional generator trained as a channel surrogate.
//! - `ra-gan`: through a residual generator, with an ℓ₂ weight penalty on
//!   every network.
//! - `rl`: a Gaussian-perturbation policy-gradient estimate that needs only
//!   per-sample losses fed back from the receiver.
//!
//! Within one inner iteration the networks are stepped once each in the
//! order discriminator, generator, receiver, transmitter; every step changes
//! exactly one parameter store.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;

use crate::adversarial::{
    discriminator_loss, generator_loss, regularized_loss, AdversarialPair, Generator,
    GradientPath,
};
use crate::channels::{apply_gains, gaussian_noise, pilot_symbols, ChannelModel, Split};
use crate::comms::{decide, ebn0_to_noise_var, one_hot_batch, LinkConfig, Receiver, Transmitter};
use crate::error::{Error, Result};
use crate::nn::{bce_term, AdamConfig, Matrix, ParamStore, Tape, Var};
use crate::seed::{names, Streams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Optimal,
    Gan,
    RaGan,
    Rl,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Optimal, Scheme::Gan, Scheme::RaGan, Scheme::Rl];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Optimal => "optimal",
            Scheme::Gan => "gan",
            Scheme::RaGan => "ra-gan",
            Scheme::Rl => "rl",
        }
    }

    pub fn uses_adversary(self) -> bool {
        matches!(self, Scheme::Gan | Scheme::RaGan)
    }

    pub fn residual(self) -> bool {
        self == Scheme::RaGan
    }

    /// Penalty weight actually applied: only the residual scheme is regularized.
    pub fn effective_lambda(self, lambda: f64) -> f64 {
        if self == Scheme::RaGan {
            lambda
        } else {
            0.0
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "optimal" => Ok(Scheme::Optimal),
            "gan" => Ok(Scheme::Gan),
            "ra-gan" | "ragan" | "ra_gan" => Ok(Scheme::RaGan),
            "rl" => Ok(Scheme::Rl),
            other => Err(Error::Config(format!("unknown scheme {other:?}"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub link: LinkConfig,
    pub scheme: Scheme,
    pub epochs: usize,
    /// Training messages per epoch; `⌊n_train / B⌋` inner iterations.
    pub n_train: usize,
    pub lr: f64,
    /// Exploration standard deviation of the `rl` scheme, in `(0, 1)`.
    pub rl_sigma: f64,
    /// Messages used for the per-epoch validation BLER.
    pub valid_n: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            link: LinkConfig::default(),
            scheme: Scheme::RaGan,
            epochs: 50,
            n_train: 10_000,
            lr: 1e-3,
            rl_sigma: 0.15,
            valid_n: 10_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        if self.n_train < self.link.batch_size {
            return Err(Error::Config(format!(
                "n_train ({}) must be at least the batch size ({})",
                self.n_train, self.link.batch_size
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(self.rl_sigma > 0.0 && self.rl_sigma < 1.0) {
            return Err(Error::Config(format!(
                "rl_sigma must lie in (0, 1), got {}",
                self.rl_sigma
            )));
        }
        if self.valid_n == 0 {
            return Err(Error::Config("valid_n must be at least 1".into()));
        }
        Ok(())
    }

    pub fn inner_iterations(&self) -> usize {
        self.n_train / self.link.batch_size
    }

    pub fn lambda(&self) -> f64 {
        self.scheme.effective_lambda(self.link.lambda)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::with_lr(self.lr)
    }
}

/// Losses of one optimizer step: `hat = tilde + penalty`, `penalty = λ·Ω(θ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLoss {
    pub tilde: f64,
    pub penalty: f64,
    pub hat: f64,
}

/// Per-epoch means of the step losses and the validation BLER.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_hat_r: f64,
    pub loss_hat_t: f64,
    pub loss_tilde_r: f64,
    pub loss_tilde_t: f64,
    pub loss_hat_g: Option<f64>,
    pub loss_hat_d: Option<f64>,
    pub penalty_r: f64,
    pub penalty_t: f64,
    pub penalty_g: Option<f64>,
    pub penalty_d: Option<f64>,
    pub bler: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub scheme: Scheme,
    pub inner_iterations: usize,
    pub epochs: Vec<EpochRecord>,
    pub wall_time: Duration,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub transmitter: Transmitter,
    pub receiver: Receiver,
    pub adversary: Option<AdversarialPair>,
    pub report: TrainReport,
}

/// The data of one inner iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub messages: Vec<usize>,
    pub onehots: Matrix,
    pub gains: Vec<Complex64>,
    /// Noise added to the data block, `B × 2n`.
    pub noise: Matrix,
    /// Received pilot block `h·xp + w`, present when pilots are on.
    pub pilot_rx: Option<Matrix>,
    /// Generator latent input.
    pub latent: Matrix,
}

impl Batch {
    /// Draws gains, noise and (if enabled) received pilots for `messages`.
    #[allow(clippy::too_many_arguments)]
    pub fn draw<R: Rng + ?Sized, L: Rng + ?Sized>(
        link: &LinkConfig,
        channel: &ChannelModel,
        split: Split,
        noise_var: f64,
        messages: Vec<usize>,
        latent_dim: usize,
        channel_rng: &mut R,
        latent_rng: &mut L,
    ) -> Result<Self> {
        let b = messages.len();
        let two_n = 2 * link.channel_uses;
        let onehots = one_hot_batch(&messages, link.alphabet)?;
        let gains = channel.sample_gains(b, split, channel_rng)?;
        let noise = gaussian_noise(b, two_n, noise_var, channel_rng);
        let pilot_rx = if link.pilot {
            let xp = Matrix::from_rows(&vec![pilot_symbols(link.channel_uses).into_vec(); b]);
            let mut yp = apply_gains(&xp, &gains);
            yp.add_assign(&gaussian_noise(b, two_n, noise_var, channel_rng));
            Some(yp)
        } else {
            None
        };
        let latent = gaussian_noise(b, latent_dim, 2.0, latent_rng);
        Ok(Self {
            messages,
            onehots,
            gains,
            noise,
            pilot_rx,
            latent,
        })
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Receiver input for transmitted signals `x`: `h·x + w`, preceded by
    /// the received pilot when pilots are on.
    pub fn real_frames(&self, x: &Matrix) -> Matrix {
        let mut y = apply_gains(x, &self.gains);
        y.add_assign(&self.noise);
        self.frame(y)
    }

    fn frame(&self, data: Matrix) -> Matrix {
        match &self.pilot_rx {
            Some(yp) => Matrix::hcat(&[yp, &data]),
            None => data,
        }
    }

    fn frame_on_tape(&self, tape: &mut Tape, data: Var) -> Result<Var> {
        match &self.pilot_rx {
            Some(yp) => {
                let yp = tape.constant(yp.clone());
                tape.concat(&[yp, data])
            }
            None => Ok(data),
        }
    }
}

/// Mean over the batch of `−Σ_j [(1ₘ)_j ln p_j + (1 − (1ₘ)_j) ln(1 − p_j)]`.
pub fn ce_loss(tape: &mut Tape, probs: Var, targets: &Matrix) -> Result<Var> {
    tape.binary_cross_entropy(probs, targets)
}

/// Per-row cross-entropy values of probabilities against one-hot targets.
pub fn per_sample_ce(probs: &Matrix, targets: &Matrix) -> Vec<f64> {
    (0..probs.rows())
        .map(|r| {
            probs
                .row(r)
                .iter()
                .zip(targets.row(r))
                .map(|(&p, &t)| bce_term(p, t))
                .sum()
        })
        .collect()
}

/// Adds `λ·Ω(θ)` to `base`, back-propagates, and writes the gradient into `store`.
fn finish_step(tape: &mut Tape, base: Var, store: &mut ParamStore, lambda: f64) -> Result<StepLoss> {
    let total = regularized_loss(tape, base, store, lambda)?;
    let tilde = tape.value(base).item();
    let hat = tape.value(total).item();
    let penalty = lambda * store.l2_penalty();
    tape.backward(total)?.write_into(store);
    Ok(StepLoss {
        tilde,
        penalty,
        hat,
    })
}

/// Gradient of the regularized receiver loss on real frames, written into `rx`.
pub fn receiver_gradient(
    rx: &mut Receiver,
    frames: &Matrix,
    targets: &Matrix,
    lambda: f64,
) -> Result<StepLoss> {
    let mut tape = Tape::new();
    let y = tape.constant(frames.clone());
    let p = rx.forward(&mut tape, y)?;
    let ce = ce_loss(&mut tape, p, targets)?;
    finish_step(&mut tape, ce, &mut rx.params, lambda)
}

/// One Adam step of the receiver on real received frames.
pub fn receiver_step(
    rx: &mut Receiver,
    frames: &Matrix,
    targets: &Matrix,
    lambda: f64,
    adam: &AdamConfig,
) -> Result<StepLoss> {
    let loss = receiver_gradient(rx, frames, targets, lambda)?;
    rx.params.adam_step(adam);
    Ok(loss)
}

/// Transmitter gradient through the true channel: gains act as constant
/// multipliers and the drawn noise as an additive constant.
pub fn transmitter_gradient_optimal(
    tx: &mut Transmitter,
    rx: &Receiver,
    batch: &Batch,
    lambda: f64,
) -> Result<StepLoss> {
    let mut tape = Tape::new();
    let onehots = tape.constant(batch.onehots.clone());
    let x = tx.forward(&mut tape, onehots)?;
    let hx = tape.complex_gain(x, &batch.gains)?;
    let w = tape.constant(batch.noise.clone());
    let y = tape.add(hx, w)?;
    let frame = batch.frame_on_tape(&mut tape, y)?;
    let p = rx.forward(&mut tape, frame)?;
    let ce = ce_loss(&mut tape, p, &batch.onehots)?;
    finish_step(&mut tape, ce, &mut tx.params, lambda)
}

pub fn transmitter_step_optimal(
    tx: &mut Transmitter,
    rx: &Receiver,
    batch: &Batch,
    lambda: f64,
    adam: &AdamConfig,
) -> Result<StepLoss> {
    let loss = transmitter_gradient_optimal(tx, rx, batch, lambda)?;
    tx.params.adam_step(adam);
    Ok(loss)
}

/// Transmitter gradient through the frozen generator and receiver. With a
/// residual generator, `path` selects the body term, the skip term, or both.
pub fn transmitter_gradient_surrogate(
    tx: &mut Transmitter,
    generator: &Generator,
    rx: &Receiver,
    batch: &Batch,
    lambda: f64,
    path: GradientPath,
) -> Result<StepLoss> {
    let mut tape = Tape::new();
    let onehots = tape.constant(batch.onehots.clone());
    let x = tx.forward(&mut tape, onehots)?;
    let side = batch.pilot_rx.as_ref().map(|yp| tape.constant(yp.clone()));
    let z = tape.constant(batch.latent.clone());
    let fake = generator.forward_with(&mut tape, x, side, z, path)?;
    let frame = batch.frame_on_tape(&mut tape, fake)?;
    let p = rx.forward(&mut tape, frame)?;
    let ce = ce_loss(&mut tape, p, &batch.onehots)?;
    finish_step(&mut tape, ce, &mut tx.params, lambda)
}

pub fn transmitter_step_surrogate(
    tx: &mut Transmitter,
    generator: &Generator,
    rx: &Receiver,
    batch: &Batch,
    lambda: f64,
    adam: &AdamConfig,
) -> Result<StepLoss> {
    let loss =
        transmitter_gradient_surrogate(tx, generator, rx, batch, lambda, GradientPath::Full)?;
    tx.params.adam_step(adam);
    Ok(loss)
}

/// Surrogate transmitter gradient split into the generator-body and
/// skip-connection terms (flattened over `θT`, unregularized).
#[derive(Clone, Debug, PartialEq)]
pub struct PathGradients {
    pub full: Vec<f64>,
    pub body: Vec<f64>,
    pub skip: Vec<f64>,
}

pub fn surrogate_gradient_paths(
    tx: &Transmitter,
    generator: &Generator,
    rx: &Receiver,
    batch: &Batch,
) -> Result<PathGradients> {
    let grad = |path| -> Result<Vec<f64>> {
        let mut t = tx.clone();
        transmitter_gradient_surrogate(&mut t, generator, rx, batch, 0.0, path)?;
        Ok(t.params.flat_grads())
    };
    Ok(PathGradients {
        full: grad(GradientPath::Full)?,
        body: grad(GradientPath::BodyOnly)?,
        skip: grad(GradientPath::SkipOnly)?,
    })
}

/// Losses of the discriminator and generator steps of one iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GanLoss {
    pub discriminator: StepLoss,
    pub generator: StepLoss,
}

/// Generated frames for transmitted signals `x` (untaped).
pub fn fake_frames(generator: &Generator, x: &Matrix, batch: &Batch) -> Result<Matrix> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let side = batch.pilot_rx.as_ref().map(|yp| tape.constant(yp.clone()));
    let z = tape.constant(batch.latent.clone());
    let fake = generator.forward(&mut tape, xv, side, z)?;
    Ok(batch.frame(tape.value(fake).clone()))
}

/// Gradient of the regularized discriminator loss on (real, generated) frames.
pub fn discriminator_gradient(
    pair: &mut AdversarialPair,
    real: &Matrix,
    fake: &Matrix,
    lambda: f64,
) -> Result<StepLoss> {
    if fake.shape() != real.shape() {
        return Err(Error::shape(
            "real/fake batches",
            format!("{:?}", real.shape()),
            format!("{:?}", fake.shape()),
        ));
    }
    let mut tape = Tape::new();
    let r = tape.constant(real.clone());
    let f = tape.constant(fake.clone());
    let dr = pair.discriminator.forward(&mut tape, r)?;
    let df = pair.discriminator.forward(&mut tape, f)?;
    let loss = discriminator_loss(&mut tape, dr, df)?;
    finish_step(&mut tape, loss, &mut pair.discriminator.params, lambda)
}

/// Gradient of the regularized generator loss against the current discriminator.
pub fn generator_gradient(
    pair: &mut AdversarialPair,
    x: &Matrix,
    batch: &Batch,
    lambda: f64,
) -> Result<StepLoss> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let side = batch.pilot_rx.as_ref().map(|yp| tape.constant(yp.clone()));
    let z = tape.constant(batch.latent.clone());
    let fake = pair.generator.forward(&mut tape, xv, side, z)?;
    let frame = batch.frame_on_tape(&mut tape, fake)?;
    let df = pair.discriminator.forward(&mut tape, frame)?;
    let loss = generator_loss(&mut tape, df)?;
    finish_step(&mut tape, loss, &mut pair.generator.params, lambda)
}

/// One discriminator step on (real, generated) frames, then one generator
/// step against the updated discriminator.
pub fn gan_steps(
    pair: &mut AdversarialPair,
    real: &Matrix,
    x: &Matrix,
    batch: &Batch,
    lambda: f64,
    adam: &AdamConfig,
) -> Result<GanLoss> {
    let fake = fake_frames(&pair.generator, x, batch)?;
    let discriminator = discriminator_gradient(pair, real, &fake, lambda)?;
    pair.discriminator.params.adam_step(adam);
    let generator = generator_gradient(pair, x, batch, lambda)?;
    pair.generator.params.adam_step(adam);
    Ok(GanLoss {
        discriminator,
        generator,
    })
}

/// Policy-gradient transmitter gradient. The transmitter explores with
/// `x̃ = √(1−σ²)·x + σ·w`, `w` having variance ½ per real component, the
/// perturbed signal goes through the real channel, and the receiver feeds
/// back per-sample losses `l_i`. The estimate is
/// `(1/B) Σ (l_i − l̄) ∇θ ln π(x̃_i | x_i)` with
/// `∇ₓ ln π = (2√(1−σ²)/σ)·w`.
pub fn transmitter_gradient_rl(
    tx: &mut Transmitter,
    rx: &Receiver,
    batch: &Batch,
    sigma: f64,
    exploration: &Matrix,
    lambda: f64,
) -> Result<StepLoss> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Config(format!("rl_sigma must lie in (0, 1), got {sigma}")));
    }
    let keep = (1.0 - sigma * sigma).sqrt();
    let mut tape = Tape::new();
    let onehots = tape.constant(batch.onehots.clone());
    let x = tx.forward(&mut tape, onehots)?;
    let xv = tape.value(x).clone();
    if exploration.shape() != xv.shape() {
        return Err(Error::shape(
            "exploration noise",
            format!("{:?}", xv.shape()),
            format!("{:?}", exploration.shape()),
        ));
    }
    let mut perturbed = xv.map(|v| keep * v);
    perturbed.scaled_add_assign(sigma, exploration);

    let probs = rx.receive_batch(&batch.real_frames(&perturbed))?;
    let losses = per_sample_ce(&probs, &batch.onehots);
    let b = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / b;

    let score_scale = 2.0 * keep / sigma;
    let mut weights = exploration.clone();
    for (r, l) in losses.iter().enumerate() {
        let c = (l - mean) / b * score_scale;
        weights.row_mut(r).iter_mut().for_each(|w| *w *= c);
    }
    let weighted = tape.mul_const(x, weights)?;
    let surrogate = tape.sum(weighted);

    let total = regularized_loss(&mut tape, surrogate, &tx.params, lambda)?;
    tape.backward(total)?.write_into(&mut tx.params);
    let penalty = lambda * tx.params.l2_penalty();
    Ok(StepLoss {
        tilde: mean,
        penalty,
        hat: mean + penalty,
    })
}

pub fn transmitter_step_rl(
    tx: &mut Transmitter,
    rx: &Receiver,
    batch: &Batch,
    sigma: f64,
    exploration: &Matrix,
    lambda: f64,
    adam: &AdamConfig,
) -> Result<StepLoss> {
    let loss = transmitter_gradient_rl(tx, rx, batch, sigma, exploration, lambda)?;
    tx.params.adam_step(adam);
    Ok(loss)
}

/// Exploration noise for the `rl` scheme: variance ½ per real component.
pub fn exploration_noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    gaussian_noise(rows, cols, 1.0, rng)
}

const EVAL_CHUNK: usize = 10_000;

/// Monte-Carlo BLER of the trained pair at `ebn0_db` over `trials` random messages.
pub fn evaluate_bler<R: Rng + ?Sized>(
    tx: &Transmitter,
    rx: &Receiver,
    channel: &ChannelModel,
    link: &LinkConfig,
    ebn0_db: f64,
    trials: usize,
    split: Split,
    rng: &mut R,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Contract("BLER over zero trials".into()));
    }
    let noise_var = ebn0_to_noise_var(ebn0_db, link.alphabet, link.channel_uses);
    let mut errors = 0usize;
    let mut done = 0usize;
    while done < trials {
        let b = EVAL_CHUNK.min(trials - done);
        let messages: Vec<usize> = (0..b).map(|_| rng.random_range(0..link.alphabet)).collect();
        let batch = Batch::draw(link, channel, split, noise_var, messages, 0, rng, &mut NoLatent)?;
        let x = tx.transmit_batch(&batch.messages)?;
        let probs = rx.receive_batch(&batch.real_frames(&x))?;
        errors += (0..b)
            .filter(|&r| decide(probs.row(r)) != batch.messages[r])
            .count();
        done += b;
    }
    Ok(errors as f64 / trials as f64)
}

/// Rng stand-in for zero-width latent draws; never called.
struct NoLatent;

impl rand::RngCore for NoLatent {
    fn next_u32(&mut self) -> u32 {
        unreachable!("no latent draws requested")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("no latent draws requested")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("no latent draws requested")
    }
}

fn check_finite(loss: &StepLoss, what: &str, epoch: usize, iteration: usize) -> Result<()> {
    if loss.hat.is_finite() && loss.tilde.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: what.to_string(),
            epoch,
            iteration,
        })
    }
}

#[derive(Default)]
struct EpochSums {
    r: StepLoss,
    t: StepLoss,
    g: StepLoss,
    d: StepLoss,
}

impl EpochSums {
    fn add(slot: &mut StepLoss, l: &StepLoss) {
        slot.tilde += l.tilde;
        slot.penalty += l.penalty;
        slot.hat += l.hat;
    }
}

/// The networks of one run, initialized from the `init` stream.
pub struct Networks {
    pub transmitter: Transmitter,
    pub receiver: Receiver,
    pub adversary: Option<AdversarialPair>,
}

impl Networks {
    pub fn init(cfg: &TrainConfig, streams: &Streams) -> Result<Self> {
        let link = &cfg.link;
        let mut rng = streams.stream(names::INIT);
        let transmitter = Transmitter::new(link.alphabet, link.channel_uses, &mut rng)?;
        let receiver = Receiver::new(link.alphabet, link.frame_width(), &mut rng)?;
        let adversary = if cfg.scheme.uses_adversary() {
            Some(AdversarialPair::new(link, cfg.scheme.residual(), &mut rng)?)
        } else {
            None
        };
        Ok(Self {
            transmitter,
            receiver,
            adversary,
        })
    }
}

/// Runs `cfg.epochs` epochs of the configured scheme. Each epoch makes
/// `⌊n_train / B⌋` passes; each pass draws `B` messages from the fixed
/// training set, transmits them, draws `B` channel realizations, forms the
/// real (and, with an adversary, generated) frames, then steps the
/// networks in the order D, G, R, T.
pub fn train(cfg: &TrainConfig, channel: &ChannelModel, streams: &Streams) -> Result<TrainOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let link = &cfg.link;
    let lambda = cfg.lambda();
    let adam = cfg.adam();
    let noise_var = link.noise_var();
    let b = link.batch_size;
    let iterations = cfg.inner_iterations();

    let Networks {
        transmitter: mut tx,
        receiver: mut rx,
        adversary: mut pair,
    } = Networks::init(cfg, streams)?;

    let mut message_rng = streams.stream(names::MESSAGES);
    let mut channel_rng = streams.stream(names::CHANNEL);
    let mut latent_rng = streams.stream(names::LATENT);
    let mut explore_rng = streams.stream(names::RL_EXPLORE);
    let mut valid_rng = streams.stream("validation");

    let train_set: Vec<usize> = (0..cfg.n_train)
        .map(|_| message_rng.random_range(0..link.alphabet))
        .collect();
    let latent_dim = pair.as_ref().map_or(0, |p| p.generator.latent_dim());

    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut sums = EpochSums::default();
        for it in 0..iterations {
            let messages = train_set[it * b..(it + 1) * b].to_vec();
            let batch = if latent_dim > 0 {
                Batch::draw(
                    link,
                    channel,
                    Split::Train,
                    noise_var,
                    messages,
                    latent_dim,
                    &mut channel_rng,
                    &mut latent_rng,
                )?
            } else {
                Batch::draw(
                    link,
                    channel,
                    Split::Train,
                    noise_var,
                    messages,
                    0,
                    &mut channel_rng,
                    &mut NoLatent,
                )?
            };
            let x = tx.transmit_batch(&batch.messages)?;
            let real = batch.real_frames(&x);

            if let Some(pair) = pair.as_mut() {
                let gan = gan_steps(pair, &real, &x, &batch, lambda, &adam)?;
                check_finite(&gan.discriminator, "discriminator loss", epoch, it)?;
                check_finite(&gan.generator, "generator loss", epoch, it)?;
                EpochSums::add(&mut sums.d, &gan.discriminator);
                EpochSums::add(&mut sums.g, &gan.generator);
            }

            let r = receiver_step(&mut rx, &real, &batch.onehots, lambda, &adam)?;
            check_finite(&r, "receiver loss", epoch, it)?;
            EpochSums::add(&mut sums.r, &r);

            let t = match cfg.scheme {
                Scheme::Optimal => transmitter_step_optimal(&mut tx, &rx, &batch, lambda, &adam)?,
                Scheme::Gan | Scheme::RaGan => {
                    let g = &pair.as_ref().expect("adversarial scheme has a pair").generator;
                    transmitter_step_surrogate(&mut tx, g, &rx, &batch, lambda, &adam)?
                }
                Scheme::Rl => {
                    let w = exploration_noise(b, 2 * link.channel_uses, &mut explore_rng);
                    transmitter_step_rl(&mut tx, &rx, &batch, cfg.rl_sigma, &w, lambda, &adam)?
                }
            };
            check_finite(&t, "transmitter loss", epoch, it)?;
            EpochSums::add(&mut sums.t, &t);
        }

        let bler = evaluate_bler(
            &tx,
            &rx,
            channel,
            link,
            link.ebn0_db,
            cfg.valid_n,
            Split::Valid,
            &mut valid_rng,
        )?;
        let k = iterations.max(1) as f64;
        let adv = pair.is_some();
        let opt = |v: f64| adv.then_some(v / k);
        records.push(EpochRecord {
            epoch,
            loss_hat_r: sums.r.hat / k,
            loss_hat_t: sums.t.hat / k,
            loss_tilde_r: sums.r.tilde / k,
            loss_tilde_t: sums.t.tilde / k,
            loss_hat_g: opt(sums.g.hat),
            loss_hat_d: opt(sums.d.hat),
            penalty_r: sums.r.penalty / k,
            penalty_t: sums.t.penalty / k,
            penalty_g: opt(sums.g.penalty),
            penalty_d: opt(sums.d.penalty),
            bler,
        });
    }

    Ok(TrainOutcome {
        transmitter: tx,
        receiver: rx,
        adversary: pair,
        report: TrainReport {
            scheme: cfg.scheme,
            inner_iterations: iterations,
            epochs: records,
            wall_time: started.elapsed(),
        },
    })
}
