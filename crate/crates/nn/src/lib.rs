//! Minimal dense neural-network toolkit.
//!
//! Everything runs on 64-bit floats through a small reverse-mode tape
//! ([`tape::Tape`]) whose operation set is exactly what the fusion network and
//! the imputation model need: dense layers, multi-head attention, layer/batch
//! normalization, dropout, the two losses, and an AdamW optimizer with a
//! reduce-on-plateau scheduler. Analytic gradients for every op are verified
//! against central finite differences by [`gradcheck::grad_check`].

pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod matrix;
pub mod optim;
pub mod param;
pub mod tape;

pub use error::{NnError, Result};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{BatchNorm1d, Linear, LayerNorm, MultiHeadAttention, TrainCtx};
pub use matrix::Matrix;
pub use optim::{AdamWConfig, PlateauScheduler};
pub use param::{BufferId, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
