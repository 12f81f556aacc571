//! Excess test risk of the empirical risk minimizer as the training length grows.
//!
//! Run with `cargo run --release --example risk_decay -- [replicas]`.

use std::sync::Arc;

use concnet::data::Scaler;
use concnet::neuralnet::WeightNet;
use concnet::simulator::{CovariateProcess, GenerativeSpec, InitialDistribution};
use concnet::theory::{risk_decay_experiment, DecayEstimator, RiskDecayConfig};

fn main() -> concnet::Result<()> {
    let replicas = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let spec = GenerativeSpec {
        phi: Arc::new(WeightNet::affine_softplus(&[0.3, 1.0], -0.5)?),
        scaler: Scaler::constant(100.0, 2)?,
        covariates: CovariateProcess::IidUniform { lo: 0.0, hi: 1.0, p: 1 },
        d: 10,
        n: 2,
        init: InitialDistribution::Zeros,
        seed: 2024,
    };
    let config = RiskDecayConfig {
        n_grid: vec![100, 400, 1600],
        replicas,
        test_len: 4000,
        seed: 7,
        estimator: DecayEstimator::default_erm(200, 1e-3),
    };
    let start = std::time::Instant::now();
    let report = risk_decay_experiment(&spec, &config)?;
    for row in &report.rows {
        println!("n = {:5}  excess = {:.6} ± {:.6}  (oracle risk {:.4})", row.n, row.mean_excess, row.se_excess, row.oracle_risk);
    }
    println!("log-log slope = {:.3}  ({:.1?})", report.slope, start.elapsed());
    Ok(())
}
