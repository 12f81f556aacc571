//! Fits a concurrent model, then compares its partial dependence on the
//! lagged share with the true weight function averaged the same way.

use std::sync::Arc;

use concnet::concurrent::LossKind;
use concnet::data::{market_shares, split, Scaler, SplitSpec};
use concnet::evaluation::partial_dependence;
use concnet::features::{build_batches, FeatureSpec};
use concnet::neuralnet::{Architecture, WeightNet};
use concnet::simulator::{simulate, CovariateProcess, GenerativeSpec, InitialDistribution};
use concnet::trainer::{fit_variant, TrainConfig, TrainData, Variant};

fn main() -> concnet::Result<()> {
    let (d, n) = (20, 260);
    let phi_star = WeightNet::affine_softplus(&[4.0, 1.0], -1.0)?;
    let scaler = Scaler::constant(1000.0, n)?;
    let spec = GenerativeSpec {
        phi: Arc::new(phi_star.clone()),
        scaler: scaler.clone(),
        covariates: CovariateProcess::IidUniform { lo: 0.0, hi: 1.0, p: 1 },
        d,
        n,
        init: InitialDistribution::PoissonAt(50.0),
        seed: 4,
    };
    let sim = simulate(&spec)?;
    let shares = market_shares(&sim.panel, &scaler)?;
    let views = split(&sim.panel, SplitSpec::trailing(n, 26, 52)?)?;
    let features = FeatureSpec::for_panel(&sim.panel, 1, 1)?;
    let data = TrainData::build(&sim.panel, &shares, &scaler, &features, &views)?;
    let config = TrainConfig {
        variant: Variant::Concurrent,
        loss: LossKind::Poisson,
        seed: 2,
        ..TrainConfig::default()
    };
    let (model, _) = fit_variant(&Architecture::new(features.input_dim(), vec![8])?, &features, &data, &config)?;

    let s = scaler.values();
    let train = build_batches(&sim.panel, &shares, s, &features, views.train.clone());
    let test = build_batches(&sim.panel, &shares, s, &features, views.test.clone());
    let fitted = partial_dependence(model.net(), &features, &train, &test, "share_lag1")?;
    let truth = partial_dependence(&phi_star, &features, &train, &test, "share_lag1")?;

    // φ is identified only up to a common factor, so compare shapes.
    let norm = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| x / mean).collect::<Vec<_>>()
    };
    let f = norm(&fitted.points.iter().map(|p| p.avg_weight).collect::<Vec<_>>());
    let t = norm(&truth.points.iter().map(|p| p.avg_weight).collect::<Vec<_>>());
    println!("{:>10} {:>10} {:>10}", "share", "fitted", "true");
    for k in (0..f.len()).step_by((f.len() / 10).max(1)) {
        println!("{:>10.4} {:>10.3} {:>10.3}", fitted.points[k].bin_value, f[k], t[k]);
    }
    Ok(())
}
