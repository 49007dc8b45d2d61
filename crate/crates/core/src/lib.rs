//! End-to-end learned communication links trained without a differentiable
//! channel.
//!
//! A transmitter network maps one-hot messages to `n` complex channel
//! symbols and a receiver network maps received frames back to message
//! probabilities. When the channel is unknown, the transmitter is trained
//! through a learned channel surrogate (conventional or residual GAN
//! generator) or by a policy-gradient estimate; a known-channel scheme
//! provides the reference.
//!
//! Modules, bottom-up:
//! - [`nn`]: matrices, dense layers, the reverse-mode tape, Adam, Xavier.
//! - [`comms`]: messages, transmitter/receiver, Eb/N0 calibration, BLER.
//! - [`channels`]: AWGN, Rayleigh with pilots, channel-coefficient files.
//! - [`adversarial`]: generators, discriminator and GAN losses.
//! - [`training`]: the four training schemes and BLER evaluation.
//! - [`seed`]: named reproducible random streams.

pub mod adversarial;
pub mod channels;
pub mod comms;
pub mod error;
pub mod nn;
pub mod seed;
pub mod training;

pub use adversarial::{AdversarialPair, Discriminator, Generator, GeneratorInput, GradientPath};
pub use channels::{ChannelDataset, ChannelModel, ChannelRealization, Split};
pub use comms::{LinkConfig, Message, ProbVector, Receiver, Signal, Transmitter};
pub use error::{Error, LoadError, Result};
pub use nn::{Activation, AdamConfig, Matrix, ParamStore, Tape};
pub use seed::{seed_everything, Streams};
pub use training::{Scheme, TrainConfig, TrainOutcome, TrainReport};
