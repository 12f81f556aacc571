//! Simulates a small competitive panel and writes it in the ingestion format.
//!
//! ```text
//! cargo run --example simulate_panel -- panel.csv
//! ```
//!
//! Without an argument the CSV goes to stdout. A per-week summary of the
//! simulated market goes to stderr either way.

use std::sync::Arc;

use concnet::data::{market_shares, write_panel, Scaler};
use concnet::neuralnet::WeightNet;
use concnet::simulator::{simulate, CovariateProcess, GenerativeSpec, InitialDistribution};

fn main() -> concnet::Result<()> {
    let (d, n) = (6, 30);
    let spec = GenerativeSpec {
        phi: Arc::new(WeightNet::affine_softplus(&[2.0, 1.0], -0.5)?),
        scaler: Scaler::constant(500.0, n)?,
        covariates: CovariateProcess::IidUniform { lo: 0.0, hi: 1.0, p: 1 },
        d,
        n,
        init: InitialDistribution::PoissonAt(40.0),
        seed: 3,
    };
    let sim = simulate(&spec)?;
    let shares = market_shares(&sim.panel, &spec.scaler)?;

    for t in (0..n).step_by(5) {
        let sold: u64 = (0..d).map(|i| sim.panel.sales(i, t)).sum();
        let share: f64 = (0..d).map(|i| shares.get(i, t)).sum();
        let leader = (0..d).max_by_key(|&i| sim.panel.sales(i, t)).unwrap_or(0);
        eprintln!(
            "week {t:>2}: {sold:>4} units, products hold {:.1}% of the market, leader {}",
            100.0 * share,
            sim.panel.product_ids()[leader]
        );
    }

    match std::env::args().nth(1) {
        Some(path) => write_panel(&sim.panel, Some(&spec.scaler), std::fs::File::create(path)?),
        None => write_panel(&sim.panel, Some(&spec.scaler), std::io::stdout().lock()),
    }
}
