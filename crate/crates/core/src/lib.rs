//! Task-parameterized Gaussian process policies learned from demonstrations.
//!
//! Demonstrations are aligned in time ([`preprocess`]), compressed into
//! replicate statistics ([`domain`]), and fitted with a heteroscedastic GP
//! over mixed real, integer and categorical task variables ([`kernels`],
//! [`gp`]). Inference cost depends on the number of unique inputs rather than
//! the number of samples ([`replication`]). Fitted policies can be bent
//! through via-points ([`modulation`]).

pub mod domain;
pub mod error;
pub mod evaluate;
pub mod gp;
pub mod hyperopt;
pub mod kernels;
pub mod modulation;
pub mod pipeline;
pub mod preprocess;
pub mod replication;
pub mod synthetic;

pub use error::{Error, Result};
