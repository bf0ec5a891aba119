//! Knowledge distillation for lightweight CSI-feedback autoencoders.
//!
//! The crate covers the whole pipeline: synthetic cluster-model CSI
//! ([`channel`]), a small reverse-mode differentiation engine ([`autodiff`]),
//! declarative teacher/student networks ([`models`]), the vanilla and
//! distillation training regimes ([`training`]) and FLOPs, NMSE and timing
//! analysis ([`analysis`]). [`experiments`] ties them into the multi-seed
//! suite that produces the report tables.

mod binio;
pub mod error;

pub mod autodiff;
pub mod channel;
pub mod models;
pub mod analysis;
pub mod training;
pub mod experiments;

pub use error::{Error, Result};
