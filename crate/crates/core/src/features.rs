//! Per-week batches of lagged shares and covariates.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::{PanelDataset, ShareMatrix};
use crate::error::{Error, Result};

/// Which inputs feed `φ`: `lag_count` lagged shares starting `horizon` weeks
/// back, then the covariates of the target week.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub horizon: usize,
    pub lag_count: usize,
    pub covariate_names: Vec<String>,
}

impl FeatureSpec {
    pub fn new(horizon: usize, lag_count: usize, covariate_names: Vec<String>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if lag_count == 0 {
            return Err(Error::Config("lag count must be at least 1".into()));
        }
        Ok(Self {
            horizon,
            lag_count,
            covariate_names,
        })
    }

    pub fn for_panel(panel: &PanelDataset, horizon: usize, lag_count: usize) -> Result<Self> {
        Self::new(horizon, lag_count, panel.covariate_names().to_vec())
    }

    pub fn input_dim(&self) -> usize {
        self.lag_count + self.covariate_names.len()
    }

    /// `share_lag1` is the share `horizon` weeks back, `share_lag2` one week earlier, ...
    pub fn names(&self) -> Vec<String> {
        (1..=self.lag_count)
            .map(|k| format!("share_lag{k}"))
            .chain(self.covariate_names.iter().cloned())
            .collect()
    }

    pub fn index_of(&self, feature: &str) -> Result<usize> {
        self.names()
            .iter()
            .position(|n| n == feature)
            .ok_or_else(|| Error::UnknownFeature(feature.to_string()))
    }

    /// First week index with a complete lag window.
    pub fn first_week(&self) -> usize {
        self.horizon + self.lag_count - 1
    }
}

/// All active products of one target week.
#[derive(Debug, Clone, PartialEq)]
pub struct WeekBatch {
    pub week: usize,
    /// Panel indices of the active products.
    pub products: Vec<usize>,
    /// Per active product: `[lagged shares..., covariates...]`.
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// `s(t)` of the target week, used by the optional loss weighting.
    pub scale: f64,
}

impl WeekBatch {
    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn lagged_shares(&self, k: usize, lag_count: usize) -> &[f64] {
        &self.inputs[k][..lag_count]
    }

    pub fn covariates(&self, k: usize, lag_count: usize) -> &[f64] {
        &self.inputs[k][lag_count..]
    }
}

/// Whether product `i` has a lag observation for target week `t`.
///
/// A product enters week `t` only if it is offered at `t` and was launched
/// no later than `t − h`; products launching inside `(t − h, t]` are skipped.
pub fn is_active(panel: &PanelDataset, product: usize, week: usize, horizon: usize) -> bool {
    week >= horizon
        && panel.is_available(product, week)
        && panel
            .launch_week(product)
            .is_some_and(|launch| launch + horizon <= week)
}

/// Input vector of product `i` for target week `t` (lags read weeks `≤ t − h`).
pub fn product_input(
    panel: &PanelDataset,
    shares: &ShareMatrix,
    spec: &FeatureSpec,
    product: usize,
    week: usize,
) -> Vec<f64> {
    let mut input = Vec::with_capacity(spec.input_dim());
    let newest = week - spec.horizon;
    input.extend((0..spec.lag_count).map(|j| shares.get(product, newest - j)));
    input.extend_from_slice(panel.covariates(product, week));
    input
}

pub fn build_batch(
    panel: &PanelDataset,
    shares: &ShareMatrix,
    scale: &[f64],
    spec: &FeatureSpec,
    week: usize,
) -> Option<WeekBatch> {
    if week < spec.first_week() {
        return None;
    }
    let products: Vec<usize> = (0..panel.d())
        .filter(|&i| is_active(panel, i, week, spec.horizon))
        .collect();
    if products.is_empty() {
        return None;
    }
    let inputs = products
        .iter()
        .map(|&i| product_input(panel, shares, spec, i, week))
        .collect();
    let targets = products.iter().map(|&i| shares.get(i, week)).collect();
    Some(WeekBatch {
        week,
        products,
        inputs,
        targets,
        scale: scale[week],
    })
}

/// Batches for every week of `weeks` that has a full lag window and at least one active product.
pub fn build_batches(
    panel: &PanelDataset,
    shares: &ShareMatrix,
    scale: &[f64],
    spec: &FeatureSpec,
    weeks: Range<usize>,
) -> Vec<WeekBatch> {
    weeks
        .filter_map(|t| build_batch(panel, shares, scale, spec, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel() -> (PanelDataset, ShareMatrix) {
        // B launches at week 3.
        let n = 8;
        let sales = vec![(1..=n as u64).collect(), vec![0, 0, 0, 4, 4, 4, 4, 4]];
        let avail = vec![vec![true; n], (0..n).map(|t| t >= 3).collect()];
        let covs = vec![(0..n).map(|t| vec![t as f64]).collect(); 2];
        let p = PanelDataset::new(vec!["A".into(), "B".into()], (0..n as i64).collect(), vec!["price".into()], sales, covs, avail).unwrap();
        let y = ShareMatrix::from_rows((0..2).map(|i| (0..n).map(|t| p.sales(i, t) as f64 / 10.0).collect()).collect());
        (p, y)
    }

    #[test]
    fn names_and_dims() {
        let spec = FeatureSpec::new(4, 2, vec!["price".into(), "margin".into()]).unwrap();
        assert_eq!(spec.names(), vec!["share_lag1", "share_lag2", "price", "margin"]);
        assert_eq!(spec.input_dim(), 4);
        assert_eq!(spec.index_of("margin").unwrap(), 3);
        assert!(matches!(spec.index_of("colour"), Err(Error::UnknownFeature(_))));
        assert!(FeatureSpec::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn lags_and_launch_rule() {
        let (p, y) = panel();
        let spec = FeatureSpec::for_panel(&p, 2, 1).unwrap();
        let scale = vec![10.0; 8];
        let b = build_batch(&p, &y, &scale, &spec, 4).unwrap();
        // B launched at 3 > 4 - 2, so it is skipped.
        assert_eq!(b.products, vec![0]);
        assert_eq!(b.inputs[0], vec![0.3, 4.0]);
        assert_eq!(b.targets, vec![0.5]);
        let b = build_batch(&p, &y, &scale, &spec, 5).unwrap();
        assert_eq!(b.products, vec![0, 1]);
        assert_eq!(b.lagged_shares(1, 1), &[0.4]);
        assert_eq!(b.covariates(1, 1), &[5.0]);
        assert!(build_batch(&p, &y, &scale, &spec, 1).is_none());
    }

    #[test]
    fn lag_window_reads_before_view_start() {
        let (p, y) = panel();
        let spec = FeatureSpec::for_panel(&p, 4, 1).unwrap();
        let batches = build_batches(&p, &y, &[10.0; 8], &spec, 6..8);
        assert_eq!(batches[0].week, 6);
        assert_eq!(batches[0].inputs[0][0], y.get(0, 2));
    }
}
