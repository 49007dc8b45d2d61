//! Channel realizations: AWGN, Rayleigh block fading with a pilot block, and
//! scalar gains loaded from channel-coefficient files.
//!
//! Noise of variance `δ²` per complex channel use is drawn as `δ²/2` per real
//! component. Block fading applies one complex gain to all `n` uses of a message.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::comms::Signal;
use crate::error::{Error, LoadError, Result};
use crate::nn::Matrix;

/// Gain and noise level applied to one message.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelRealization {
    pub h: Complex64,
    pub noise_var: f64,
}

impl ChannelRealization {
    pub fn awgn(noise_var: f64) -> Self {
        Self {
            h: Complex64::new(1.0, 0.0),
            noise_var,
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `rows × cols` matrix of i.i.d. `N(0, noise_var/2)` entries.
pub fn gaussian_noise<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    noise_var: f64,
    rng: &mut R,
) -> Matrix {
    let sd = (noise_var / 2.0).sqrt();
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| sd * gaussian(rng)).collect())
}

/// `y = x + w`.
pub fn awgn_apply<R: Rng + ?Sized>(x: &Signal, noise_var: f64, rng: &mut R) -> Vec<f64> {
    fading_apply(x, &ChannelRealization::awgn(noise_var), rng)
}

/// A draw of `h ~ CN(0, 1)`.
pub fn rayleigh_sample<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let sd = 0.5f64.sqrt();
    Complex64::new(sd * gaussian(rng), sd * gaussian(rng))
}

/// `y = h·x + w` for one block.
pub fn fading_apply<R: Rng + ?Sized>(
    x: &Signal,
    real: &ChannelRealization,
    rng: &mut R,
) -> Vec<f64> {
    let sd = (real.noise_var / 2.0).sqrt();
    let mut y = x.as_slice().to_vec();
    rotate_in_place(&mut y, real.h);
    if real.noise_var > 0.0 {
        y.iter_mut().for_each(|v| *v += sd * gaussian(rng));
    }
    y
}

fn rotate_in_place(v: &mut [f64], h: Complex64) {
    for pair in v.chunks_exact_mut(2) {
        let s = h * Complex64::new(pair[0], pair[1]);
        pair[0] = s.re;
        pair[1] = s.im;
    }
}

/// Row `i` of `x` multiplied by `gains[i]`.
pub fn apply_gains(x: &Matrix, gains: &[Complex64]) -> Matrix {
    assert_eq!(x.rows(), gains.len());
    let mut out = x.clone();
    for (r, h) in gains.iter().enumerate() {
        rotate_in_place(out.row_mut(r), *h);
    }
    out
}

/// The known pilot block: `n` symbols of `1 + 0j` (unit power per use).
pub fn pilot_symbols(channel_uses: usize) -> Signal {
    let mut v = vec![0.0; 2 * channel_uses];
    v.iter_mut().step_by(2).for_each(|re| *re = 1.0);
    Signal::new(v).expect("pilot block is non-empty")
}

/// Received pilot block followed by the received data block.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotFrame {
    pub xp: Signal,
    pub yp: Vec<f64>,
    pub y: Vec<f64>,
}

impl PilotFrame {
    /// `concat(yp, y)`, the receiver input.
    pub fn frame(&self) -> Vec<f64> {
        let mut f = self.yp.clone();
        f.extend_from_slice(&self.y);
        f
    }
}

/// Sends the pilot block and then `x` through the same gain with independent noise.
pub fn make_pilot_frame<R: Rng + ?Sized>(
    x: &Signal,
    real: &ChannelRealization,
    rng: &mut R,
) -> PilotFrame {
    let xp = pilot_symbols(x.channel_uses());
    let yp = fading_apply(&xp, real, rng);
    let y = fading_apply(x, real, rng);
    PilotFrame { xp, yp, y }
}

/// Which part of a [`ChannelDataset`] to draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
}

/// Scalar channel gains read from a file, normalized to unit mean power.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelDataset {
    samples: Vec<Complex64>,
    source: PathBuf,
    normalization_factor: f64,
    train_len: usize,
}

impl ChannelDataset {
    /// Builds a dataset from raw gains; the first 80% of rows form the
    /// training split.
    pub fn from_samples(raw: Vec<Complex64>, source: impl Into<PathBuf>) -> Result<Self, LoadError> {
        let source = source.into();
        if raw.is_empty() {
            return Err(LoadError::Empty { path: source });
        }
        let mean_power = raw.iter().map(|h| h.norm_sqr()).sum::<f64>() / raw.len() as f64;
        if !(mean_power > 0.0) || !mean_power.is_finite() {
            return Err(LoadError::ZeroPower { path: source });
        }
        let factor = mean_power.sqrt();
        let samples = raw.into_iter().map(|h| h / factor).collect::<Vec<_>>();
        let train_len = samples.len() * 8 / 10;
        Ok(Self {
            samples,
            source,
            normalization_factor: factor,
            train_len,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn source(&self) -> &Path {
        &self.source
    }

    /// Amplitude the raw gains were divided by.
    pub fn normalization_factor(&self) -> f64 {
        self.normalization_factor
    }

    pub fn split(&self, split: Split) -> &[Complex64] {
        match split {
            Split::Train => &self.samples[..self.train_len],
            Split::Valid => &self.samples[self.train_len..],
        }
    }
}

/// Reads `re,im` lines; blank lines and lines starting with `#` are skipped.
pub fn dataset_load(path: impl AsRef<Path>) -> Result<ChannelDataset, LoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    dataset_parse(&text, path)
}

pub fn dataset_parse(text: &str, path: impl AsRef<Path>) -> Result<ChannelDataset, LoadError> {
    let path = path.as_ref();
    let mut raw = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let malformed = || LoadError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            text: line.to_string(),
        };
        let (re, im) = trimmed.split_once(',').ok_or_else(malformed)?;
        let re: f64 = re.trim().parse().map_err(|_| malformed())?;
        let im: f64 = im.trim().parse().map_err(|_| malformed())?;
        if !re.is_finite() || !im.is_finite() {
            return Err(malformed());
        }
        raw.push(Complex64::new(re, im));
    }
    ChannelDataset::from_samples(raw, path)
}

/// Serializes gains in the format [`dataset_load`] reads, lossless for `f64`.
pub fn dataset_to_text(samples: &[Complex64]) -> String {
    let mut out = String::from("# re,im\n");
    for h in samples {
        let _ = writeln!(out, "{:e},{:e}", h.re, h.im);
    }
    out
}

/// `batch` realizations drawn uniformly with replacement from one split.
pub fn dataset_sample_batch<R: Rng + ?Sized>(
    ds: &ChannelDataset,
    batch: usize,
    split: Split,
    noise_var: f64,
    rng: &mut R,
) -> Result<Vec<ChannelRealization>> {
    let pool = ds.split(split);
    if pool.is_empty() {
        return Err(Error::Contract(format!("{split:?} split of dataset is empty")));
    }
    Ok((0..batch)
        .map(|_| ChannelRealization {
            h: pool[rng.random_range(0..pool.len())],
            noise_var,
        })
        .collect())
}

/// Stand-in for ray-traced channels: each user sees `paths` discrete paths
/// with random delays, phases and exponentially decaying powers; the gain
/// on subcarrier `s` is `Σ_k a_k · exp(j(φ_k − 2π s τ_k))`. Rows are ordered
/// user-major.
pub fn synthetic_multipath<R: Rng + ?Sized>(
    users: usize,
    subcarriers: usize,
    paths: usize,
    rng: &mut R,
) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(users * subcarriers);
    for _ in 0..users {
        let taps: Vec<(f64, f64, f64)> = (0..paths)
            .map(|k| {
                let power: f64 = Exp1.sample(rng);
                let amp = (power * (-(k as f64) * 0.7).exp()).sqrt();
                let delay = rng.random_range(0.0..1.0) / subcarriers as f64 * 8.0;
                let phase = rng.random_range(0.0..2.0 * PI);
                (amp, delay, phase)
            })
            .collect();
        for s in 0..subcarriers {
            let h = taps
                .iter()
                .map(|&(a, tau, phi)| Complex64::from_polar(a, phi - 2.0 * PI * s as f64 * tau))
                .sum();
            out.push(h);
        }
    }
    out
}

/// Where per-message gains come from.
#[derive(Clone, Debug)]
pub enum ChannelModel {
    Awgn,
    Rayleigh,
    Dataset(Arc<ChannelDataset>),
}

impl ChannelModel {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelModel::Awgn => "awgn",
            ChannelModel::Rayleigh => "rayleigh",
            ChannelModel::Dataset(_) => "dataset",
        }
    }

    pub fn sample_gains<R: Rng + ?Sized>(
        &self,
        batch: usize,
        split: Split,
        rng: &mut R,
    ) -> Result<Vec<Complex64>> {
        Ok(match self {
            ChannelModel::Awgn => vec![Complex64::new(1.0, 0.0); batch],
            ChannelModel::Rayleigh => (0..batch).map(|_| rayleigh_sample(rng)).collect(),
            ChannelModel::Dataset(ds) => dataset_sample_batch(ds, batch, split, 0.0, rng)?
                .into_iter()
                .map(|r| r.h)
                .collect(),
        })
    }
}
