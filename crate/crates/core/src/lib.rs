//! Time-reversal MIMO over Rayleigh-fading channels with pinholes.
//!
//! * [`channel`] — configuration, frequency grid and block-fading channel draws
//! * [`timereversal`] — received signal synthesis and its closed-form mean
//! * [`moments`] — closed-form moments and the exact Wick-pairing oracle
//! * [`stability`] — Monte Carlo normalized variance and scaling regressions
//! * [`infotheory`] — SINR, information rate and power tradeoffs
//! * [`config`] / [`run`] — experiment files and orchestration behind the CLI

pub mod channel;
pub mod config;
pub mod error;
pub mod infotheory;
pub mod moments;
pub mod rng;
pub mod run;
pub mod stability;
pub mod timereversal;

pub use error::{Error, Result, Violation};
