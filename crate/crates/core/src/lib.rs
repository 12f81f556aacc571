//! Competition-aware market-share forecasting.
//!
//! Products in one category compete for a shared weekly total `s(t)`. Each
//! product receives a positive competitiveness weight from a small neural
//! network `φ` of its lagged market share and covariates, and predicted shares
//! follow from one shared normalization `α · w_i / (1 + Σ_j w_j)`.
//!
//! The crate covers the whole loop: panel ingestion and scalers ([`data`]), a
//! Poisson generative simulator ([`simulator`]), the weight network and its
//! gradients ([`neuralnet`]), the concurrent layer ([`concurrent`]), training
//! and model selection ([`trainer`]), baselines ([`baselines`]), rolling
//! evaluation and partial dependence ([`evaluation`]), and empirical checks of
//! the contraction and concentration conditions ([`theory`]).

pub mod baselines;
pub mod cli;
pub mod concurrent;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod neuralnet;
pub mod poisson;
pub mod rng;
pub mod simulator;
pub mod theory;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
