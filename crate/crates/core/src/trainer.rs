//! Empirical risk minimization over per-week batches, the four estimator
//! variants, and model selection over an architecture grid.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concurrent::{default_alpha, ConcurrentModel, DirectModel, LossKind, LossWeighting, ShareModel};
use crate::data::{PanelDataset, Scaler, ShareMatrix, SplitViews};
use crate::error::{Error, Result};
use crate::evaluation::{mape, predicts_zero};
use crate::features::{build_batches, FeatureSpec, WeekBatch};
use crate::neuralnet::{init_params, Architecture, Normalizer};
use crate::rng::{child_seed, substream, tag};

/// Mean `Σ w` below which transferred weights count as "too small".
pub const SMALL_TRANSFER_WEIGHT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `ŷ_i = φ(features_i)` with no shared normalization (FF-NN).
    FeedForwardDirect,
    /// Concurrent layer trained from a fresh initialization (L1-/P-Conc-NN).
    Concurrent,
    /// Concurrent layer initialized from a trained FF-NN (L1-Pre-Conc-NN).
    ConcurrentPretrained,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "feed_forward_direct" | "ff_nn" | "ffnn" | "direct" => Ok(Variant::FeedForwardDirect),
            "concurrent" | "conc_nn" => Ok(Variant::Concurrent),
            "concurrent_pretrained" | "pre_conc_nn" | "pretrained" => Ok(Variant::ConcurrentPretrained),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (feed_forward_direct|concurrent|concurrent_pretrained)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerKind {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { lr } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }
}

/// Optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        Self {
            kind,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                self.steps += 1;
                let c1 = 1.0 - beta1.powi(self.steps);
                let c2 = 1.0 - beta2.powi(self.steps);
                for k in 0..params.len() {
                    let g = grad[k];
                    self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g;
                    self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[k] / c1;
                    let v_hat = self.v[k] / c2;
                    params[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub variant: Variant,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub seed: u64,
    pub early_stop_patience: usize,
    pub weighting: LossWeighting,
    /// `None` applies the horizon policy of [`default_alpha`].
    pub alpha: Option<f64>,
    /// Refit the input normalizer on the training inputs before the first epoch.
    pub fit_normalizer: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Poisson,
            variant: Variant::Concurrent,
            optimizer: OptimizerKind::default(),
            epochs: 200,
            seed: 0,
            early_stop_patience: 10,
            weighting: LossWeighting::Unweighted,
            alpha: None,
            fit_normalizer: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidTrainConfig("epochs must be at least 1".into()));
        }
        let lr = self.optimizer.lr();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidTrainConfig(format!("learning rate must be positive, got {lr}")));
        }
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::InvalidTrainConfig(format!("alpha must lie in (0, 1], got {alpha}")));
            }
        }
        Ok(())
    }

    pub fn alpha_for(&self, horizon: usize) -> f64 {
        self.alpha.unwrap_or_else(|| default_alpha(horizon))
    }
}

/// Per-run training record. Equality ignores `wall_time`.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    /// Mean loss per prediction for each completed epoch.
    pub train_loss: Vec<f64>,
    pub valid_mape: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub selected_epoch: usize,
    pub wall_time: Duration,
    pub zero_prediction: bool,
    /// Predictions that hit the Poisson log clamp over the whole run.
    pub clamped: usize,
    pub small_transfer_weights: bool,
}

impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.train_loss == other.train_loss
            && self.valid_mape == other.valid_mape
            && self.selected_epoch == other.selected_epoch
            && self.zero_prediction == other.zero_prediction
            && self.clamped == other.clamped
            && self.small_transfer_weights == other.small_transfer_weights
    }
}

impl TrainReport {
    pub fn best_valid_mape(&self) -> f64 {
        self.valid_mape[self.selected_epoch - 1]
    }
}

/// Training and validation week batches.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub train: Vec<WeekBatch>,
    pub valid: Vec<WeekBatch>,
}

impl TrainData {
    pub fn build(
        panel: &PanelDataset,
        shares: &ShareMatrix,
        scaler: &Scaler,
        features: &FeatureSpec,
        views: &SplitViews,
    ) -> Result<Self> {
        let need = features.horizon + features.lag_count;
        if views.train.len() < need {
            return Err(Error::InsufficientHistory(format!(
                "training period has {} weeks, horizon + lags need {need}",
                views.train.len()
            )));
        }
        let s = scaler.values();
        Ok(Self {
            train: build_batches(panel, shares, s, features, views.train.clone()),
            valid: build_batches(panel, shares, s, features, views.valid.clone()),
        })
    }
}

fn predictions_and_actuals(model: &ShareModel, batches: &[WeekBatch]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut preds = Vec::new();
    let mut actuals = Vec::new();
    for b in batches {
        preds.extend(model.predict(b)?);
        actuals.extend_from_slice(&b.targets);
    }
    Ok((preds, actuals))
}


/// MAPE of `model` on `batches`.
pub fn batches_mape(model: &ShareModel, batches: &[WeekBatch]) -> Result<f64> {
    let (preds, actuals) = predictions_and_actuals(model, batches)?;
    mape(&preds, &actuals)
}

/// Minimizes the summed week-batch loss; keeps the best-validation epoch.
pub fn train(model: ShareModel, data: &TrainData, config: &TrainConfig) -> Result<(ShareModel, TrainReport)> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::InsufficientHistory("no training week has an active product".into()));
    }
    if data.valid.is_empty() {
        return Err(Error::InsufficientHistory("no validation week has an active product".into()));
    }
    let start = Instant::now();
    let mut model = model;
    if config.fit_normalizer {
        let dim = model.net().architecture().input_dim;
        let normalizer = Normalizer::fit(dim, data.train.iter().flat_map(|b| b.inputs.iter().map(Vec::as_slice)));
        model.net_mut().set_normalizer(normalizer)?;
    }
    let n_predictions: usize = data.train.iter().map(WeekBatch::len).sum();
    let mut optimizer = Optimizer::new(config.optimizer, model.net().param_count());
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    let mut train_loss = Vec::new();
    let mut valid_mape = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut clamped = 0;
    for epoch in 1..=config.epochs {
        let mut rng = substream(config.seed, &[tag::SHUFFLE, epoch as u64]);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &k in &order {
            let grad = model.batch_gradient(&data.train[k], config.loss, config.weighting)?;
            if !grad.loss.is_finite() || grad.params.iter().any(|g| !g.is_finite()) {
                return Err(Error::DivergedLoss { epoch });
            }
            total += grad.loss;
            clamped += grad.clamped;
            optimizer.step(model.net_mut().params_mut(), &grad.params);
        }
        let epoch_loss = total / n_predictions as f64;
        if !epoch_loss.is_finite() || model.net().params().iter().any(|p| !p.is_finite()) {
            return Err(Error::DivergedLoss { epoch });
        }
        train_loss.push(epoch_loss);
        let score = batches_mape(&model, &data.valid)?;
        valid_mape.push(score);
        let improved = best.as_ref().is_none_or(|(b, _, _)| score < *b);
        if improved {
            best = Some((score, epoch, model.net().params().to_vec()));
        } else if epoch - best.as_ref().map_or(0, |b| b.1) >= config.early_stop_patience.max(1) {
            break;
        }
    }

    let (_, selected_epoch, params) = best.expect("at least one epoch ran");
    model.net_mut().params_mut().copy_from_slice(&params);
    let (preds, actuals) = predictions_and_actuals(&model, &data.valid)?;
    let report = TrainReport {
        train_loss,
        valid_mape,
        selected_epoch,
        wall_time: start.elapsed(),
        zero_prediction: predicts_zero(&preds, &actuals),
        clamped,
        small_transfer_weights: false,
    };
    Ok((model, report))
}

/// Copies a trained FF-NN into the weight function of a concurrent model.
pub fn pretrain_transfer(ffnn: &DirectModel, target: &ConcurrentModel) -> Result<ConcurrentModel> {
    if ffnn.net.architecture() != target.phi.architecture() {
        return Err(Error::ArchitectureMismatch(format!(
            "FF-NN {:?} vs target {:?}",
            ffnn.net.architecture(),
            target.phi.architecture()
        )));
    }
    ConcurrentModel::new(ffnn.net.clone(), target.alpha, target.features.clone())
}

/// Mean `Σ_i w_i` over the given weeks.
pub fn mean_weight_mass(model: &ConcurrentModel, batches: &[WeekBatch]) -> Result<f64> {
    if batches.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for b in batches {
        total += model.weights(b)?.iter().sum::<f64>();
    }
    Ok(total / batches.len() as f64)
}

/// Trains one candidate architecture as the configured variant.
pub fn fit_variant(
    arch: &Architecture,
    features: &FeatureSpec,
    data: &TrainData,
    config: &TrainConfig,
) -> Result<(ShareModel, TrainReport)> {
    if arch.input_dim != features.input_dim() {
        return Err(Error::ArchitectureMismatch(format!(
            "architecture takes {} inputs, features provide {}",
            arch.input_dim,
            features.input_dim()
        )));
    }
    let net = init_params(arch, child_seed(config.seed, &[tag::PARAMS]))?;
    let alpha = config.alpha_for(features.horizon);
    match config.variant {
        Variant::FeedForwardDirect => train(ShareModel::Direct(DirectModel::new(net, features.clone())?), data, config),
        Variant::Concurrent => train(
            ShareModel::Concurrent(ConcurrentModel::new(net, alpha, features.clone())?),
            data,
            config,
        ),
        Variant::ConcurrentPretrained => {
            let ff_config = TrainConfig {
                loss: LossKind::L1,
                variant: Variant::FeedForwardDirect,
                ..config.clone()
            };
            let (ff, ff_report) = train(ShareModel::Direct(DirectModel::new(net.clone(), features.clone())?), data, &ff_config)?;
            let ShareModel::Direct(ff) = ff else {
                unreachable!("direct model in, direct model out")
            };
            let target = ConcurrentModel::new(net, alpha, features.clone())?;
            transfer_and_finetune(&ff, &ff_report, &target, data, config)
        }
    }
}

/// Transfers a trained FF-NN into `target`, fine-tunes it under the shared
/// normalization, and carries the FF-NN's zero-prediction flag forward.
pub fn transfer_and_finetune(
    ff: &DirectModel,
    ff_report: &TrainReport,
    target: &ConcurrentModel,
    data: &TrainData,
    config: &TrainConfig,
) -> Result<(ShareModel, TrainReport)> {
    let transferred = pretrain_transfer(ff, target)?;
    let small = mean_weight_mass(&transferred, &data.train)? < SMALL_TRANSFER_WEIGHT;
    let tune_config = TrainConfig {
        fit_normalizer: false,
        ..config.clone()
    };
    let (model, mut report) = train(ShareModel::Concurrent(transferred), data, &tune_config)?;
    report.zero_prediction |= ff_report.zero_prediction;
    report.small_transfer_weights = small;
    report.wall_time += ff_report.wall_time;
    Ok((model, report))
}

/// Ten architectures: no hidden layer, then 1–3 hidden layers of width 8, 16 or 32.
pub fn default_grid(input_dim: usize) -> Vec<Architecture> {
    let mut grid = vec![Architecture { input_dim, hidden: vec![] }];
    for depth in 1..=3 {
        for width in [8, 16, 32] {
            grid.push(Architecture {
                input_dim,
                hidden: vec![width; depth],
            });
        }
    }
    grid
}

/// Lexicographic ranking: non-zero-prediction first, then validation MAPE,
/// parameter count and grid position.
fn rank_key(report: &TrainReport, model: &ShareModel, index: usize) -> (bool, ordered_mape::Mape, usize, usize) {
    (
        report.zero_prediction,
        ordered_mape::Mape(report.best_valid_mape()),
        model.net().param_count(),
        index,
    )
}

mod ordered_mape {
    /// Total order on finite MAPE values (NaN sorts last).
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Mape(pub f64);

    impl Eq for Mape {}

    impl PartialOrd for Mape {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    impl Ord for Mape {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}

#[derive(Debug, Clone)]
pub struct CandidateOutcome {
    pub index: usize,
    pub architecture: Architecture,
    pub result: std::result::Result<TrainReport, String>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub model: ShareModel,
    pub report: TrainReport,
    pub index: usize,
    pub candidates: Vec<CandidateOutcome>,
}

/// Trains every candidate (in parallel) and keeps the lowest validation MAPE.
///
/// Zero-prediction candidates rank after all others; ties go to fewer
/// parameters, then grid order.
pub fn select_model(
    grid: &[Architecture],
    features: &FeatureSpec,
    data: &TrainData,
    config: &TrainConfig,
) -> Result<Selection> {
    if grid.is_empty() {
        return Err(Error::InvalidTrainConfig("architecture grid is empty".into()));
    }
    if grid.len() > 10 {
        return Err(Error::InvalidTrainConfig(format!("grid has {} candidates (at most 10)", grid.len())));
    }
    config.validate()?;
    let runs: Vec<Result<(ShareModel, TrainReport)>> = grid
        .par_iter()
        .enumerate()
        .map(|(index, arch)| {
            let candidate_config = TrainConfig {
                seed: child_seed(config.seed, &[tag::CANDIDATE, index as u64]),
                ..config.clone()
            };
            fit_variant(arch, features, data, &candidate_config)
        })
        .collect();

    let mut candidates = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, ShareModel, TrainReport)> = None;
    for (index, (arch, run)) in grid.iter().zip(runs).enumerate() {
        match run {
            Ok((model, report)) => {
                candidates.push(CandidateOutcome {
                    index,
                    architecture: arch.clone(),
                    result: Ok(report.clone()),
                });
                let better = match &best {
                    None => true,
                    Some((best_index, best_model, best_report)) => {
                        rank_key(&report, &model, index) < rank_key(best_report, best_model, *best_index)
                    }
                };
                if better {
                    best = Some((index, model, report));
                }
            }
            Err(err) if err.class() == crate::ErrorClass::Numerical => {
                log::warn!("candidate {index} ({:?}) failed: {err}", arch.hidden);
                candidates.push(CandidateOutcome {
                    index,
                    architecture: arch.clone(),
                    result: Err(err.to_string()),
                });
            }
            Err(err) => return Err(err),
        }
    }
    let (index, model, report) = best.ok_or(Error::AllCandidatesDiverged)?;
    Ok(Selection {
        model,
        report,
        index,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{market_shares, split, SplitSpec};
    use crate::neuralnet::WeightNet;
    use crate::simulator::{simulate, AnalyticWeight, CovariateProcess, GenerativeSpec, InitialDistribution};
    use std::sync::Arc;

    fn synthetic(phi: AnalyticWeight, d: usize, n: usize, seed: u64) -> (TrainData, FeatureSpec) {
        let scaler = Scaler::constant(1000.0, n).unwrap();
        let spec = GenerativeSpec {
            phi: Arc::new(phi),
            scaler: scaler.clone(),
            covariates: CovariateProcess::IidUniform { lo: 0.0, hi: 1.0, p: 1 },
            d,
            n,
            init: InitialDistribution::PoissonAt(50.0),
            seed,
        };
        let sim = simulate(&spec).unwrap();
        let shares = market_shares(&sim.panel, &scaler).unwrap();
        let views = split(&sim.panel, SplitSpec::trailing(n, n / 5, n / 5).unwrap()).unwrap();
        let features = FeatureSpec::for_panel(&sim.panel, 1, 1).unwrap();
        (TrainData::build(&sim.panel, &shares, &scaler, &features, &views).unwrap(), features)
    }

    fn quick_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            early_stop_patience: epochs,
            optimizer: OptimizerKind::Adam { lr: 1e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8 },
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_step_is_identity() {
        for kind in [OptimizerKind::Sgd { lr: 0.0 }, OptimizerKind::Adam { lr: 0.0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }] {
            let mut params = vec![0.5, -1.0, 3.0];
            let mut opt = Optimizer::new(kind, 3);
            opt.step(&mut params, &[1.0, 2.0, -3.0]);
            assert_eq!(params, vec![0.5, -1.0, 3.0]);
        }
    }

    #[test]
    fn config_invariants() {
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { optimizer: OptimizerKind::Sgd { lr: 0.0 }, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
        assert_eq!(default_grid(3).len(), 10);
        assert!(default_grid(3).iter().all(|a| a.validate().is_ok()));
    }

    #[test]
    fn loss_decreases_on_constant_weight_data() {
        let (data, features) = synthetic(AnalyticWeight::Constant(1.0), 8, 60, 1);
        let arch = Architecture::new(features.input_dim(), vec![]).unwrap();
        let net = init_params(&arch, 5).unwrap();
        let model = ShareModel::Concurrent(ConcurrentModel::new(net, 1.0, features).unwrap());
        let (_, report) = train(model, &data, &quick_config(5)).unwrap();
        assert_eq!(report.train_loss.len(), 5);
        for w in report.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", report.train_loss);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (data, features) = synthetic(AnalyticWeight::SoftplusAffine { coeffs: vec![2.0, 1.0], bias: -0.5 }, 6, 50, 2);
        let arch = Architecture::new(features.input_dim(), vec![4]).unwrap();
        let cfg = quick_config(4);
        let a = fit_variant(&arch, &features, &data, &cfg).unwrap();
        let b = fit_variant(&arch, &features, &data, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn insufficient_history() {
        let (mut data, features) = synthetic(AnalyticWeight::Constant(1.0), 3, 30, 3);
        data.train.clear();
        let net = init_params(&Architecture::new(features.input_dim(), vec![]).unwrap(), 1).unwrap();
        let model = ShareModel::Concurrent(ConcurrentModel::new(net, 1.0, features).unwrap());
        assert!(matches!(train(model, &data, &quick_config(1)), Err(Error::InsufficientHistory(_))));
    }

    #[test]
    fn selection_rules() {
        let (data, features) = synthetic(AnalyticWeight::Constant(1.0), 5, 50, 4);
        let arch = Architecture::new(features.input_dim(), vec![]).unwrap();
        let cfg = quick_config(3);
        let one = select_model(std::slice::from_ref(&arch), &features, &data, &cfg).unwrap();
        assert_eq!(one.index, 0);
        let two = select_model(&[arch.clone(), arch.clone()], &features, &data, &cfg).unwrap();
        let scores: Vec<f64> = two.candidates.iter().map(|c| c.result.as_ref().unwrap().best_valid_mape()).collect();
        let expected = if scores[1] < scores[0] { 1 } else { 0 };
        assert_eq!(two.index, expected);
        assert!(select_model(&[], &features, &data, &cfg).is_err());
    }

    #[test]
    fn zero_flag_ranks_last() {
        let (data, features) = synthetic(AnalyticWeight::Constant(1.0), 5, 50, 5);
        let model = ShareModel::Direct(
            DirectModel::new(WeightNet::constant(Architecture::new(features.input_dim(), vec![]).unwrap(), 1e-9).unwrap(), features).unwrap(),
        );
        let (preds, actuals) = predictions_and_actuals(&model, &data.valid).unwrap();
        assert!(predicts_zero(&preds, &actuals));
    }

    #[test]
    fn transfer_copies_and_checks_shape() {
        let features = FeatureSpec::new(1, 1, vec!["a".into()]).unwrap();
        let arch = Architecture::new(2, vec![4]).unwrap();
        let ff = DirectModel::new(init_params(&arch, 1).unwrap(), features.clone()).unwrap();
        let target = ConcurrentModel::new(init_params(&arch, 2).unwrap(), 1.0, features.clone()).unwrap();
        let moved = pretrain_transfer(&ff, &target).unwrap();
        for x in [[0.1, 0.4], [0.5, -2.0]] {
            assert_eq!(moved.phi.forward(&x).unwrap(), ff.net.forward(&x).unwrap());
        }
        let other = ConcurrentModel::new(init_params(&Architecture::new(2, vec![5]).unwrap(), 2).unwrap(), 1.0, features).unwrap();
        assert!(matches!(pretrain_transfer(&ff, &other), Err(Error::ArchitectureMismatch(_))));
    }

    #[test]
    fn pretrained_variant_propagates_zero_flag() {
        let (data, features) = synthetic(AnalyticWeight::Constant(1.0), 5, 50, 6);
        let arch = Architecture::new(features.input_dim(), vec![]).unwrap();
        let ff = DirectModel::new(WeightNet::constant(arch.clone(), 1e-9).unwrap(), features.clone()).unwrap();
        let ff_report = TrainReport {
            train_loss: vec![0.0],
            valid_mape: vec![100.0],
            selected_epoch: 1,
            wall_time: Duration::ZERO,
            zero_prediction: true,
            clamped: 0,
            small_transfer_weights: false,
        };
        let target = ConcurrentModel::new(init_params(&arch, 1).unwrap(), 1.0, features.clone()).unwrap();
        let cfg = TrainConfig { optimizer: OptimizerKind::Sgd { lr: 1e-9 }, ..quick_config(1) };
        let (_, report) = transfer_and_finetune(&ff, &ff_report, &target, &data, &cfg).unwrap();
        assert!(report.zero_prediction);
        assert!(report.small_transfer_weights);

        let cfg = TrainConfig { variant: Variant::ConcurrentPretrained, ..quick_config(2) };
        let (model, report) = fit_variant(&arch, &features, &data, &cfg).unwrap();
        assert!(matches!(model, ShareModel::Concurrent(_)));
        assert!(!report.zero_prediction);
    }
}
