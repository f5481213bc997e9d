//! Successful symbol transmission rate (SSTR) of grant-free massive access
//! with a massive-MIMO base station.
//!
//! * [`analytic`] closed-form asymptotic SSTR and its mean approximation;
//! * [`amp`] approximate message passing for activity detection;
//! * [`simulator`] end-to-end Monte-Carlo of a coherence interval;
//! * [`optimizer`] access-parameter, pilot-length and joint maximisation.

pub mod amp;
pub mod analytic;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{Beamformer, SystemConfig, TauMode};
