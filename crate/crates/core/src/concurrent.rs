//! The concurrent layer: per-product weights from `φ`, shared normalization
//! `ŷ_i = α · w_i / (1 + Σ_j w_j)`, losses, and gradients through the shared
//! denominator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSpec, WeekBatch};
use crate::neuralnet::{parse_token, WeightNet};

/// Lower clamp on predictions inside the Poisson log term.
pub const POISSON_CLAMP: f64 = 1e-12;
pub const MODEL_FORMAT_TAG: &str = "concnet-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Default scale factor: 1 up to two months ahead, 0.8 beyond.
pub fn default_alpha(horizon: usize) -> f64 {
    if horizon <= 8 {
        1.0
    } else {
        0.8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    L1,
    Poisson,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(LossKind::L1),
            "poisson" => Ok(LossKind::Poisson),
            other => Err(Error::Config(format!("unknown loss `{other}` (l1|poisson)"))),
        }
    }
}

/// Optional per-week weighting of the share-level loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    #[default]
    Unweighted,
    /// Multiply week `t`'s loss by `s(t)`.
    ByScale,
}

/// `ŷ − y·ln ŷ`.
pub fn poisson_loss(y: f64, yhat: f64) -> Result<f64> {
    if !(yhat > 0.0) {
        return Err(Error::NonPositivePrediction(yhat));
    }
    Ok(yhat - y * yhat.ln())
}

pub fn l1_loss(y: f64, yhat: f64) -> f64 {
    (y - yhat).abs()
}

/// Loss value and `∂L/∂ŷ`, with the Poisson clamp counted in `clamped`.
fn loss_and_slope(kind: LossKind, y: f64, yhat: f64, clamped: &mut usize) -> Result<(f64, f64)> {
    match kind {
        LossKind::L1 => {
            let diff = yhat - y;
            let slope = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            Ok((diff.abs(), slope))
        }
        LossKind::Poisson => {
            if yhat.is_nan() || yhat < 0.0 {
                return Err(Error::NonPositivePrediction(yhat));
            }
            if yhat < POISSON_CLAMP {
                *clamped += 1;
                Ok((yhat - y * POISSON_CLAMP.ln(), 1.0))
            } else {
                Ok((yhat - y * yhat.ln(), 1.0 - y / yhat))
            }
        }
    }
}

/// Loss and parameter gradient for one week.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub loss: f64,
    pub params: Vec<f64>,
    /// Number of predictions that hit the Poisson clamp.
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcurrentModel {
    pub phi: WeightNet,
    pub alpha: f64,
    pub features: FeatureSpec,
}

impl ConcurrentModel {
    pub fn new(phi: WeightNet, alpha: f64, features: FeatureSpec) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if phi.architecture().input_dim != features.input_dim() {
            return Err(Error::ArchitectureMismatch(format!(
                "net takes {} inputs, features provide {}",
                phi.architecture().input_dim,
                features.input_dim()
            )));
        }
        Ok(Self { phi, alpha, features })
    }

    pub fn horizon(&self) -> usize {
        self.features.horizon
    }

    pub fn weights(&self, batch: &WeekBatch) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        batch.inputs.iter().map(|x| self.phi.forward(x)).collect()
    }
}

/// Shared normalization of a weight vector.
pub fn normalize(weights: &[f64], alpha: f64) -> Vec<f64> {
    let denom = 1.0 + weights.iter().sum::<f64>();
    weights.iter().map(|w| alpha * w / denom).collect()
}

pub fn predict_shares(model: &ConcurrentModel, batch: &WeekBatch) -> Result<Vec<f64>> {
    Ok(normalize(&model.weights(batch)?, model.alpha))
}

pub fn batch_gradient(
    model: &ConcurrentModel,
    batch: &WeekBatch,
    loss: LossKind,
    weighting: LossWeighting,
) -> Result<BatchGradient> {
    let weights = model.weights(batch)?;
    let denom = 1.0 + weights.iter().sum::<f64>();
    let alpha = model.alpha;
    let factor = week_factor(batch, weighting);

    let mut clamped = 0;
    let mut total = 0.0;
    let mut slopes = Vec::with_capacity(weights.len());
    for (w, &y) in weights.iter().zip(&batch.targets) {
        let (l, g) = loss_and_slope(loss, y, alpha * w / denom, &mut clamped)?;
        total += factor * l;
        slopes.push(factor * g);
    }

    // ∂ŷ_i/∂w_j = α(δ_ij / D − w_i / D²)
    let coupling: f64 = slopes.iter().zip(&weights).map(|(g, w)| g * w).sum::<f64>() / (denom * denom);
    let mut params = vec![0.0; model.phi.param_count()];
    for (input, g) in batch.inputs.iter().zip(&slopes) {
        let upstream = alpha * (g / denom - coupling);
        if upstream != 0.0 {
            model.phi.backward_into(input, upstream, &mut params);
        }
    }
    Ok(BatchGradient {
        loss: total,
        params,
        clamped,
    })
}

/// Loss of one week without the gradient.
pub fn batch_loss(model: &ConcurrentModel, batch: &WeekBatch, loss: LossKind, weighting: LossWeighting) -> Result<f64> {
    let preds = predict_shares(model, batch)?;
    sum_loss(&preds, batch, loss, weighting)
}

fn week_factor(batch: &WeekBatch, weighting: LossWeighting) -> f64 {
    match weighting {
        LossWeighting::Unweighted => 1.0,
        LossWeighting::ByScale => batch.scale,
    }
}

fn sum_loss(preds: &[f64], batch: &WeekBatch, loss: LossKind, weighting: LossWeighting) -> Result<f64> {
    let factor = week_factor(batch, weighting);
    let mut clamped = 0;
    preds
        .iter()
        .zip(&batch.targets)
        .map(|(&p, &y)| loss_and_slope(loss, y, p, &mut clamped).map(|(l, _)| factor * l))
        .sum()
}

/// Classical feed-forward model: `ŷ_i = φ(features_i)` with no shared normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectModel {
    pub net: WeightNet,
    pub features: FeatureSpec,
}

impl DirectModel {
    pub fn new(net: WeightNet, features: FeatureSpec) -> Result<Self> {
        if net.architecture().input_dim != features.input_dim() {
            return Err(Error::ArchitectureMismatch(format!(
                "net takes {} inputs, features provide {}",
                net.architecture().input_dim,
                features.input_dim()
            )));
        }
        Ok(Self { net, features })
    }

    pub fn predict(&self, batch: &WeekBatch) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        batch.inputs.iter().map(|x| self.net.forward(x)).collect()
    }

    pub fn batch_gradient(&self, batch: &WeekBatch, loss: LossKind, weighting: LossWeighting) -> Result<BatchGradient> {
        let preds = self.predict(batch)?;
        let factor = week_factor(batch, weighting);
        let mut clamped = 0;
        let mut total = 0.0;
        let mut params = vec![0.0; self.net.param_count()];
        for ((input, &p), &y) in batch.inputs.iter().zip(&preds).zip(&batch.targets) {
            let (l, g) = loss_and_slope(loss, y, p, &mut clamped)?;
            total += factor * l;
            if g != 0.0 {
                self.net.backward_into(input, factor * g, &mut params);
            }
        }
        Ok(BatchGradient {
            loss: total,
            params,
            clamped,
        })
    }

    pub fn batch_loss(&self, batch: &WeekBatch, loss: LossKind, weighting: LossWeighting) -> Result<f64> {
        sum_loss(&self.predict(batch)?, batch, loss, weighting)
    }
}

/// A trained share model of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum ShareModel {
    Concurrent(ConcurrentModel),
    Direct(DirectModel),
}

impl ShareModel {
    pub fn net(&self) -> &WeightNet {
        match self {
            ShareModel::Concurrent(m) => &m.phi,
            ShareModel::Direct(m) => &m.net,
        }
    }

    pub fn net_mut(&mut self) -> &mut WeightNet {
        match self {
            ShareModel::Concurrent(m) => &mut m.phi,
            ShareModel::Direct(m) => &mut m.net,
        }
    }

    pub fn features(&self) -> &FeatureSpec {
        match self {
            ShareModel::Concurrent(m) => &m.features,
            ShareModel::Direct(m) => &m.features,
        }
    }

    pub fn predict(&self, batch: &WeekBatch) -> Result<Vec<f64>> {
        match self {
            ShareModel::Concurrent(m) => predict_shares(m, batch),
            ShareModel::Direct(m) => m.predict(batch),
        }
    }

    pub fn batch_gradient(&self, batch: &WeekBatch, loss: LossKind, weighting: LossWeighting) -> Result<BatchGradient> {
        match self {
            ShareModel::Concurrent(m) => batch_gradient(m, batch, loss, weighting),
            ShareModel::Direct(m) => m.batch_gradient(batch, loss, weighting),
        }
    }

    pub fn batch_loss(&self, batch: &WeekBatch, loss: LossKind, weighting: LossWeighting) -> Result<f64> {
        match self {
            ShareModel::Concurrent(m) => batch_loss(m, batch, loss, weighting),
            ShareModel::Direct(m) => m.batch_loss(batch, loss, weighting),
        }
    }

    /// Model file: a short header followed by the weight-network block.
    pub fn to_text(&self) -> String {
        let f = self.features();
        let (kind, alpha) = match self {
            ShareModel::Concurrent(m) => ("concurrent", m.alpha),
            ShareModel::Direct(_) => ("direct", 1.0),
        };
        let mut out = format!("{MODEL_FORMAT_TAG} {MODEL_FORMAT_VERSION}\n");
        out.push_str(&format!("kind {kind}\n"));
        out.push_str(&format!("alpha {alpha:?}\n"));
        out.push_str(&format!("horizon {}\n", f.horizon));
        out.push_str(&format!("lag_count {}\n", f.lag_count));
        out.push_str("covariates");
        for name in &f.covariate_names {
            out.push(' ');
            out.push_str(name);
        }
        out.push('\n');
        out.push_str(&self.net().to_text());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let mut head = header.split_whitespace();
        if head.next() != Some(MODEL_FORMAT_TAG) {
            return Err(Error::ModelFormat(format!("bad header `{header}`")));
        }
        let version: u32 = parse_token(head.next(), "version")?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let mut kind = None;
        let mut alpha = None;
        let mut horizon = None;
        let mut lag_count = None;
        let mut covariates = None;
        let mut rest = String::new();
        for line in lines.by_ref() {
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("kind") => kind = tokens.next().map(str::to_string),
                Some("alpha") => alpha = Some(parse_token::<f64>(tokens.next(), "alpha")?),
                Some("horizon") => horizon = Some(parse_token::<usize>(tokens.next(), "horizon")?),
                Some("lag_count") => lag_count = Some(parse_token::<usize>(tokens.next(), "lag_count")?),
                Some("covariates") => covariates = Some(tokens.map(str::to_string).collect::<Vec<_>>()),
                Some(_) => {
                    rest.push_str(line);
                    rest.push('\n');
                    break;
                }
                None => {}
            }
        }
        for line in lines {
            rest.push_str(line);
            rest.push('\n');
        }
        let missing = |k: &str| Error::ModelFormat(format!("missing `{k}`"));
        let features = FeatureSpec::new(
            horizon.ok_or_else(|| missing("horizon"))?,
            lag_count.ok_or_else(|| missing("lag_count"))?,
            covariates.ok_or_else(|| missing("covariates"))?,
        )?;
        let net = WeightNet::from_text(&rest)?;
        match kind.as_deref() {
            Some("concurrent") => Ok(ShareModel::Concurrent(ConcurrentModel::new(
                net,
                alpha.ok_or_else(|| missing("alpha"))?,
                features,
            )?)),
            Some("direct") => Ok(ShareModel::Direct(DirectModel::new(net, features)?)),
            other => Err(Error::ModelFormat(format!("unknown model kind {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::{init_params, softplus_inverse, Architecture};
    use proptest::prelude::*;

    fn batch_of(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> WeekBatch {
        WeekBatch {
            week: 0,
            products: (0..inputs.len()).collect(),
            inputs,
            targets,
            scale: 100.0,
        }
    }

    fn constant_model(value: f64, alpha: f64) -> ConcurrentModel {
        let f = FeatureSpec::new(1, 1, vec![]).unwrap();
        let net = WeightNet::constant(Architecture::new(1, vec![]).unwrap(), value).unwrap();
        ConcurrentModel::new(net, alpha, f).unwrap()
    }

    #[test]
    fn equal_weight_examples() {
        let m = constant_model(1.0, 1.0);
        let preds = predict_shares(&m, &batch_of(vec![vec![0.1]; 4], vec![0.0; 4])).unwrap();
        preds.iter().for_each(|p| assert!((p - 0.2).abs() < 1e-12));

        let m = constant_model(3.0, 1.0);
        let preds = predict_shares(&m, &batch_of(vec![vec![0.1]], vec![0.0])).unwrap();
        assert!((preds[0] - 0.75).abs() < 1e-12);

        let m = constant_model(1.0, 0.8);
        let preds = predict_shares(&m, &batch_of(vec![vec![0.1]; 2], vec![0.0; 2])).unwrap();
        preds.iter().for_each(|p| assert!((p - 0.8 / 3.0).abs() < 1e-12));

        assert!(matches!(predict_shares(&m, &batch_of(vec![], vec![])), Err(Error::EmptyBatch)));
    }

    #[test]
    fn loss_examples() {
        assert_eq!(poisson_loss(0.0, 1.0).unwrap(), 1.0);
        assert!((poisson_loss(2.0, 2.0).unwrap() - 0.613_705_638_880_109_4).abs() < 1e-12);
        assert!(matches!(poisson_loss(1.0, 0.0), Err(Error::NonPositivePrediction(_))));
        // minimizer at yhat = y
        let y = 0.37;
        let at = poisson_loss(y, y).unwrap();
        assert!(poisson_loss(y, y * 1.01).unwrap() > at);
        assert!(poisson_loss(y, y * 0.99).unwrap() > at);
        assert_eq!(l1_loss(0.3, 0.3), 0.0);
        assert!((l1_loss(0.3, 0.1) - 0.2).abs() < 1e-15);
        assert_eq!(l1_loss(0.1, 0.7), l1_loss(0.7, 0.1));
    }

    #[test]
    fn alpha_policy_and_bounds() {
        assert_eq!(default_alpha(4), 1.0);
        assert_eq!(default_alpha(8), 1.0);
        assert_eq!(default_alpha(12), 0.8);
        let f = FeatureSpec::new(1, 1, vec![]).unwrap();
        let net = WeightNet::constant(Architecture::new(1, vec![]).unwrap(), 1.0).unwrap();
        assert!(ConcurrentModel::new(net.clone(), 0.0, f.clone()).is_err());
        assert!(ConcurrentModel::new(net, 1.2, f).is_err());
    }

    #[test]
    fn single_product_chain_rule() {
        // ŷ = w/(1+w), w = softplus(a·x + b); L1 with y above ŷ → dL/db = -σ(b)/(1+w)², dL/da = x·dL/db.
        let m = constant_model(2.0, 1.0);
        let g = batch_gradient(&m, &batch_of(vec![vec![0.5]], vec![0.9]), LossKind::L1, LossWeighting::Unweighted).unwrap();
        let b = softplus_inverse(2.0);
        let expected = -crate::neuralnet::sigmoid(b) / 9.0;
        assert!((g.params[1] - expected).abs() < 1e-12);
        assert!((g.params[0] - 0.5 * expected).abs() < 1e-12);
    }

    #[test]
    fn perfect_l1_predictions_have_zero_gradient() {
        let m = constant_model(1.0, 1.0);
        let b = batch_of(vec![vec![0.1]; 3], vec![0.25; 3]);
        let g = batch_gradient(&m, &b, LossKind::L1, LossWeighting::Unweighted).unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
        assert_eq!(g.loss, 0.0);
    }

    #[test]
    fn clamp_is_reported() {
        let m = constant_model(1e-300, 1.0);
        let b = batch_of(vec![vec![0.0]], vec![0.5]);
        let g = batch_gradient(&m, &b, LossKind::Poisson, LossWeighting::Unweighted).unwrap();
        assert_eq!(g.clamped, 1);
        assert!(g.loss.is_finite());
    }

    fn fd_check(model: &ConcurrentModel, batch: &WeekBatch, loss: LossKind, weighting: LossWeighting) -> f64 {
        let g = batch_gradient(model, batch, loss, weighting).unwrap();
        let mut probe = model.clone();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for k in 0..g.params.len() {
            let orig = probe.phi.params()[k];
            probe.phi.params_mut()[k] = orig + h;
            let up = batch_loss(&probe, batch, loss, weighting).unwrap();
            probe.phi.params_mut()[k] = orig - h;
            let down = batch_loss(&probe, batch, loss, weighting).unwrap();
            probe.phi.params_mut()[k] = orig;
            worst = worst.max(crate::neuralnet::relative_error(g.params[k], (up - down) / (2.0 * h)));
        }
        worst
    }

    #[test]
    fn five_product_batch_matches_finite_differences() {
        let f = FeatureSpec::new(1, 1, vec!["a".into(), "b".into()]).unwrap();
        let net = init_params(&Architecture::new(3, vec![6]).unwrap(), 21).unwrap();
        let m = ConcurrentModel::new(net, 0.9, f).unwrap();
        let inputs: Vec<Vec<f64>> = (0..5).map(|k| vec![0.05 * k as f64, 0.3 - 0.1 * k as f64, 1.0 + 0.2 * k as f64]).collect();
        let b = batch_of(inputs, vec![0.11, 0.02, 0.3, 0.07, 0.15]);
        assert!(fd_check(&m, &b, LossKind::Poisson, LossWeighting::Unweighted) < 1e-4);
        assert!(fd_check(&m, &b, LossKind::Poisson, LossWeighting::ByScale) < 1e-4);
        assert!(fd_check(&m, &b, LossKind::L1, LossWeighting::Unweighted) < 1e-4);
    }

    #[test]
    fn model_file_round_trip() {
        let f = FeatureSpec::new(4, 2, vec!["price".into()]).unwrap();
        let net = init_params(&Architecture::new(3, vec![5]).unwrap(), 3).unwrap();
        let m = ShareModel::Concurrent(ConcurrentModel::new(net.clone(), 0.8, f.clone()).unwrap());
        assert_eq!(ShareModel::from_text(&m.to_text()).unwrap(), m);
        let d = ShareModel::Direct(DirectModel::new(net, f).unwrap());
        assert_eq!(ShareModel::from_text(&d.to_text()).unwrap(), d);
        assert!(ShareModel::from_text("concnet-model 9\n").is_err());
    }

    proptest! {
        #[test]
        fn shares_positive_and_below_alpha(
            ws in proptest::collection::vec(1e-6f64..50.0, 1..12),
            alpha in 0.05f64..=1.0,
        ) {
            let preds = normalize(&ws, alpha);
            prop_assert!(preds.iter().all(|&p| p > 0.0));
            prop_assert!(preds.iter().sum::<f64>() < alpha);
        }

        #[test]
        fn common_scaling_preserves_ranking(
            ws in proptest::collection::vec(1e-3f64..10.0, 2..8),
            c in 0.01f64..100.0,
        ) {
            let a = normalize(&ws, 1.0);
            let scaled: Vec<f64> = ws.iter().map(|w| w * c).collect();
            let b = normalize(&scaled, 1.0);
            for i in 0..ws.len() {
                for j in 0..ws.len() {
                    if a[i] < a[j] { prop_assert!(b[i] <= b[j]); }
                }
            }
        }

        #[test]
        fn shrinking_one_weight_cannibalizes(
            ws in proptest::collection::vec(0.1f64..5.0, 2..8),
            shrink in 0.0f64..0.99,
        ) {
            let before = normalize(&ws, 1.0);
            let mut smaller = ws.clone();
            smaller[0] *= shrink;
            let after = normalize(&smaller, 1.0);
            prop_assert!(after[0] < before[0]);
            for k in 1..ws.len() { prop_assert!(after[k] > before[k]); }
        }
    }
}
