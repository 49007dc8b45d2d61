//! Dense feed-forward networks with tape-based reverse-mode gradients.

mod activation;
mod matrix;
mod params;
mod tape;

pub use activation::{activation_apply, Activation};
pub use matrix::Matrix;
pub use params::{xavier_init, AdamConfig, Dense, LayerSpec, ParamStore, Slot, StoreId};
pub use tape::{Gradients, ParamKey, Tape, Var, PROB_FLOOR};

pub(crate) use tape::bce_term; // per-sample losses in training
