//! Trains the three model variants on one simulated panel at a four-week
//! horizon and prints their validation and test MAPE.

use std::sync::Arc;

use concnet::concurrent::LossKind;
use concnet::data::{market_shares, split, Scaler, SplitSpec};
use concnet::evaluation::rolling_evaluate;
use concnet::features::FeatureSpec;
use concnet::neuralnet::{Architecture, WeightNet};
use concnet::simulator::{simulate, CovariateProcess, GenerativeSpec, InitialDistribution};
use concnet::trainer::{fit_variant, TrainConfig, TrainData, Variant};

fn main() -> concnet::Result<()> {
    let (d, n, h) = (15, 200, 4);
    let scaler = Scaler::constant(800.0, n)?;
    let spec = GenerativeSpec {
        phi: Arc::new(WeightNet::affine_softplus(&[3.0, 1.5], -1.0)?),
        scaler: scaler.clone(),
        covariates: CovariateProcess::IidUniform { lo: 0.0, hi: 1.0, p: 1 },
        d,
        n,
        init: InitialDistribution::PoissonAt(40.0),
        seed: 21,
    };
    let sim = simulate(&spec)?;
    let shares = market_shares(&sim.panel, &scaler)?;
    let views = split(&sim.panel, SplitSpec::trailing(n, 26, 40)?)?;
    let features = FeatureSpec::for_panel(&sim.panel, h, 1)?;
    let data = TrainData::build(&sim.panel, &shares, &scaler, &features, &views)?;
    let arch = Architecture::new(features.input_dim(), vec![16])?;

    for (variant, loss) in [
        (Variant::FeedForwardDirect, LossKind::L1),
        (Variant::Concurrent, LossKind::L1),
        (Variant::Concurrent, LossKind::Poisson),
        (Variant::ConcurrentPretrained, LossKind::L1),
    ] {
        let config = TrainConfig {
            variant,
            loss,
            epochs: 150,
            seed: 8,
            ..TrainConfig::default()
        };
        let (model, report) = fit_variant(&arch, &features, &data, &config)?;
        let test = rolling_evaluate(&model, &sim.panel, &shares, views.test.clone())?;
        println!(
            "{variant:?} / {loss:?}: valid {:.2}, test {:.2} (epoch {}, {:.1?}){}",
            report.best_valid_mape(),
            test.mape,
            report.selected_epoch,
            report.wall_time,
            if test.zero_prediction { " [predicts zero]" } else { "" }
        );
    }
    Ok(())
}
