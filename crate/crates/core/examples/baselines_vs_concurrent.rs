//! Simulates a panel from a known weight function, fits the concurrent model
//! with the Poisson loss and compares it with the true-φ predictor and the
//! last-value / moving-average baselines on the same test weeks.

use std::sync::Arc;

use concnet::baselines::{BaselineKind, BaselineModel, MA_WINDOW_GRID};
use concnet::concurrent::{ConcurrentModel, LossKind, ShareModel};
use concnet::data::{market_shares, split, Scaler, SplitSpec};
use concnet::evaluation::{rolling_evaluate, select_ma_window};
use concnet::features::FeatureSpec;
use concnet::neuralnet::WeightNet;
use concnet::simulator::{simulate, CovariateProcess, GenerativeSpec, InitialDistribution};
use concnet::trainer::{default_grid, select_model, TrainConfig, TrainData, Variant};

fn main() -> concnet::Result<()> {
    let (d, n) = (20, 260);
    let phi_star = WeightNet::affine_softplus(&[2.0, 1.0], -0.5)?;
    let scaler = Scaler::constant(1000.0, n)?;
    let spec = GenerativeSpec {
        phi: Arc::new(phi_star.clone()),
        scaler: scaler.clone(),
        covariates: CovariateProcess::IidUniform { lo: 0.0, hi: 1.0, p: 1 },
        d,
        n,
        init: InitialDistribution::PoissonAt(50.0),
        seed: 11,
    };
    let sim = simulate(&spec)?;
    let shares = market_shares(&sim.panel, &scaler)?;
    let views = split(&sim.panel, SplitSpec { train_end: 182, valid_end: 208, test_end: 260 })?;
    let features = FeatureSpec::for_panel(&sim.panel, 1, 1)?;
    let data = TrainData::build(&sim.panel, &shares, &scaler, &features, &views)?;

    let config = TrainConfig {
        loss: LossKind::Poisson,
        variant: Variant::Concurrent,
        seed: 5,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let selection = select_model(&default_grid(features.input_dim()), &features, &data, &config)?;
    println!(
        "selected {:?} at epoch {} in {:.1?}",
        selection.model.net().architecture().hidden,
        selection.report.selected_epoch,
        start.elapsed()
    );

    let oracle = ShareModel::Concurrent(ConcurrentModel::new(phi_star, 1.0, features.clone())?);
    let lv = BaselineModel::new(BaselineKind::LastValue, 1)?;
    let (ma, _) = select_ma_window(&sim.panel, &shares, 1, views.valid.clone(), &MA_WINDOW_GRID)?;

    let test = views.test.clone();
    for (name, report) in [
        ("P-Conc-NN", rolling_evaluate(&selection.model, &sim.panel, &shares, test.clone())?),
        ("oracle", rolling_evaluate(&oracle, &sim.panel, &shares, test.clone())?),
        ("LV", rolling_evaluate(&lv, &sim.panel, &shares, test.clone())?),
        (&ma.name(), rolling_evaluate(&ma, &sim.panel, &shares, test.clone())?),
    ] {
        println!("{name:>10}  test MAPE {:.3}", report.mape);
    }
    Ok(())
}
