//! Rolling out-of-sample evaluation, MAPE, partial dependence and CSV output.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;

use crate::baselines::{rescale_to_total, BaselineModel};
use crate::concurrent::ShareModel;
use crate::data::{PanelDataset, ShareMatrix};
use crate::error::{Error, Result};
use crate::features::{is_active, FeatureSpec, WeekBatch};
use crate::neuralnet::WeightNet;

/// Predictions below this fraction of the mean actual count as "predicts zero".
pub const ZERO_PREDICTION_RATIO: f64 = 1e-3;

/// Number of equal-frequency bins of a partial-dependence curve.
pub const PDP_BINS: usize = 100;

/// `100 · Σ|ŷ − y| / Σ y`.
pub fn mape(preds: &[f64], actuals: &[f64]) -> Result<f64> {
    if preds.len() != actuals.len() {
        return Err(Error::LengthMismatch {
            expected: actuals.len(),
            got: preds.len(),
        });
    }
    let total: f64 = actuals.iter().sum();
    if total == 0.0 {
        return Err(Error::ZeroActualTotal);
    }
    let abs: f64 = preds.iter().zip(actuals).map(|(p, y)| (p - y).abs()).sum();
    Ok(100.0 * abs / total)
}

/// True when every prediction sits below `ZERO_PREDICTION_RATIO` times the mean actual.
pub fn predicts_zero(preds: &[f64], actuals: &[f64]) -> bool {
    if actuals.is_empty() {
        return false;
    }
    let mean = actuals.iter().sum::<f64>() / actuals.len() as f64;
    preds.iter().all(|&p| p < ZERO_PREDICTION_RATIO * mean)
}

/// Read-only view of the panel as known when forecasting week `t` at horizon `h`.
///
/// Shares are visible only up to `t − h`; availability and covariates are
/// exogenous and visible up to `t`. Every share read is logged so callers can
/// confirm nothing past the cutoff was touched.
pub struct History<'a> {
    panel: &'a PanelDataset,
    shares: &'a ShareMatrix,
    target: usize,
    cutoff: usize,
    newest_read: Cell<Option<usize>>,
}

impl<'a> History<'a> {
    pub fn new(panel: &'a PanelDataset, shares: &'a ShareMatrix, target: usize, horizon: usize) -> Result<Self> {
        let cutoff = target
            .checked_sub(horizon)
            .ok_or(Error::HorizonExceedsHistory { horizon, week: target })?;
        Ok(Self {
            panel,
            shares,
            target,
            cutoff,
            newest_read: Cell::new(None),
        })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Share of `product` at `week`; NaN (and a logged violation) past the cutoff.
    pub fn share(&self, product: usize, week: usize) -> f64 {
        let newest = self.newest_read.get().map_or(week, |w| w.max(week));
        self.newest_read.set(Some(newest));
        if week > self.cutoff {
            f64::NAN
        } else {
            self.shares.get(product, week)
        }
    }

    pub fn is_available(&self, product: usize, week: usize) -> bool {
        week <= self.target && self.panel.is_available(product, week)
    }

    pub fn covariates(&self, product: usize) -> &'a [f64] {
        self.panel.covariates(product, self.target)
    }

    /// Latest share week read so far.
    pub fn newest_read(&self) -> Option<usize> {
        self.newest_read.get()
    }
}

/// Anything that produces one week of share forecasts from a [`History`].
pub trait Forecaster {
    fn name(&self) -> String;
    fn horizon(&self) -> usize;

    /// First week index the forecaster can handle.
    fn first_week(&self) -> usize {
        self.horizon()
    }

    fn predict_week(&self, history: &History<'_>, products: &[usize]) -> Result<Vec<f64>>;
}

impl Forecaster for ShareModel {
    fn name(&self) -> String {
        match self {
            ShareModel::Concurrent(_) => "Conc-NN".into(),
            ShareModel::Direct(_) => "FF-NN".into(),
        }
    }

    fn horizon(&self) -> usize {
        self.features().horizon
    }

    fn first_week(&self) -> usize {
        self.features().first_week()
    }

    fn predict_week(&self, history: &History<'_>, products: &[usize]) -> Result<Vec<f64>> {
        let batch = history_batch(self.features(), history, products);
        self.predict(&batch)
    }
}

fn history_batch(spec: &FeatureSpec, history: &History<'_>, products: &[usize]) -> WeekBatch {
    let newest = history.cutoff();
    let inputs = products
        .iter()
        .map(|&i| {
            let mut x: Vec<f64> = (0..spec.lag_count).map(|j| history.share(i, newest - j)).collect();
            x.extend_from_slice(history.covariates(i));
            x
        })
        .collect();
    WeekBatch {
        week: history.target(),
        products: products.to_vec(),
        inputs,
        targets: vec![0.0; products.len()],
        scale: 1.0,
    }
}

impl Forecaster for BaselineModel {
    fn name(&self) -> String {
        BaselineModel::name(self)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict_week(&self, history: &History<'_>, products: &[usize]) -> Result<Vec<f64>> {
        products
            .iter()
            .map(|&i| {
                self.predict_with(
                    |s| history.is_available(i, s),
                    |s| history.share(i, s),
                    history.target(),
                )
            })
            .collect()
    }
}

/// Wraps a forecaster so each week's predictions sum to `target_total`.
#[derive(Debug, Clone)]
pub struct RescaledForecaster<F> {
    pub inner: F,
    pub target_total: f64,
}

impl<F: Forecaster> Forecaster for RescaledForecaster<F> {
    fn name(&self) -> String {
        format!("S-{}", self.inner.name())
    }

    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn first_week(&self) -> usize {
        self.inner.first_week()
    }

    fn predict_week(&self, history: &History<'_>, products: &[usize]) -> Result<Vec<f64>> {
        let raw = self.inner.predict_week(history, products)?;
        Ok(rescale_to_total(&raw, self.target_total).shares)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub product: usize,
    pub product_id: String,
    pub week_index: usize,
    pub week: i64,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub model: String,
    pub horizon: usize,
    pub records: Vec<PredictionRecord>,
    pub mape: f64,
    pub zero_prediction: bool,
    /// Smallest gap between a target week and the newest share read for it.
    pub min_read_lag: Option<usize>,
}

impl EvaluationReport {
    pub fn predictions(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.predicted).collect()
    }

    pub fn actuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.actual).collect()
    }
}

/// Forecasts every active cell of `weeks`, each from data up to `t − h` only.
pub fn rolling_evaluate<F: Forecaster + ?Sized>(
    forecaster: &F,
    panel: &PanelDataset,
    shares: &ShareMatrix,
    weeks: Range<usize>,
) -> Result<EvaluationReport> {
    let h = forecaster.horizon();
    if weeks.start < forecaster.first_week() {
        return Err(Error::InsufficientHistory(format!(
            "{} needs weeks from index {}, evaluation starts at {}",
            forecaster.name(),
            forecaster.first_week(),
            weeks.start
        )));
    }
    if weeks.end > panel.n() {
        return Err(Error::InvalidSplit(format!(
            "evaluation window ends at {} but the panel has {} weeks",
            weeks.end,
            panel.n()
        )));
    }
    let mut records = Vec::new();
    let mut min_read_lag: Option<usize> = None;
    for t in weeks {
        let products: Vec<usize> = (0..panel.d()).filter(|&i| is_active(panel, i, t, h)).collect();
        if products.is_empty() {
            continue;
        }
        let history = History::new(panel, shares, t, h)?;
        let preds = forecaster.predict_week(&history, &products)?;
        if let Some(read) = history.newest_read() {
            if read > history.cutoff() {
                return Err(Error::LookAhead { week: t, read });
            }
            let lag = t - read;
            min_read_lag = Some(min_read_lag.map_or(lag, |m| m.min(lag)));
        }
        for (&i, &p) in products.iter().zip(&preds) {
            records.push(PredictionRecord {
                product: i,
                product_id: panel.product_ids()[i].clone(),
                week_index: t,
                week: panel.weeks()[t],
                actual: shares.get(i, t),
                predicted: p,
            });
        }
    }
    let preds: Vec<f64> = records.iter().map(|r| r.predicted).collect();
    let actuals: Vec<f64> = records.iter().map(|r| r.actual).collect();
    Ok(EvaluationReport {
        model: forecaster.name(),
        horizon: h,
        mape: mape(&preds, &actuals)?,
        zero_prediction: predicts_zero(&preds, &actuals),
        records,
        min_read_lag,
    })
}

/// Picks the moving-average window with the lowest validation MAPE; ties go to the shorter window.
pub fn select_ma_window(
    panel: &PanelDataset,
    shares: &ShareMatrix,
    horizon: usize,
    valid: Range<usize>,
    grid: &[usize],
) -> Result<(BaselineModel, f64)> {
    let mut best: Option<(BaselineModel, f64)> = None;
    for &window in grid {
        let model = BaselineModel::new(crate::baselines::BaselineKind::MovingAverage { window }, horizon)?;
        let score = rolling_evaluate(&model, panel, shares, valid.clone())?.mape;
        if best.as_ref().is_none_or(|(_, b)| score < *b) {
            best = Some((model, score));
        }
    }
    best.ok_or_else(|| Error::Config("empty moving-average window grid".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdpPoint {
    pub bin_value: f64,
    pub avg_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialDependence {
    pub feature: String,
    pub points: Vec<PdpPoint>,
    /// Fewer distinct training values than bins: one point per distinct value.
    pub degenerate: bool,
}

/// Bin representatives: the mean of each equal-frequency bin of `values`.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> (Vec<f64>, bool) {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < bins {
        return (distinct, true);
    }
    let n = sorted.len();
    let reps = (0..bins)
        .map(|b| {
            let chunk = &sorted[b * n / bins..(b + 1) * n / bins];
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    (reps, false)
}

/// Average `φ` over the test inputs with `feature` pinned to each training bin value.
pub fn partial_dependence(
    phi: &WeightNet,
    spec: &FeatureSpec,
    train: &[WeekBatch],
    test: &[WeekBatch],
    feature: &str,
) -> Result<PartialDependence> {
    let column = spec.index_of(feature)?;
    let train_values: Vec<f64> = train.iter().flat_map(|b| b.inputs.iter().map(|x| x[column])).collect();
    let test_inputs: Vec<&Vec<f64>> = test.iter().flat_map(|b| b.inputs.iter()).collect();
    if train_values.is_empty() || test_inputs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if train_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let (reps, degenerate) = equal_frequency_bins(&train_values, PDP_BINS);
    let points = reps
        .par_iter()
        .map(|&v| {
            let mut x = vec![0.0; spec.input_dim()];
            let mut sum = 0.0;
            for input in &test_inputs {
                x.copy_from_slice(input);
                x[column] = v;
                sum += phi.forward(&x)?;
            }
            Ok(PdpPoint {
                bin_value: v,
                avg_weight: sum / test_inputs.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PartialDependence {
        feature: feature.to_string(),
        points,
        degenerate,
    })
}

pub fn write_predictions<W: Write>(reports: &[EvaluationReport], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["product_id", "week", "actual_share", "predicted_share", "model"])?;
    for report in reports {
        for r in &report.records {
            w.write_record([
                r.product_id.clone(),
                r.week.to_string(),
                r.actual.to_string(),
                r.predicted.to_string(),
                report.model.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per model, one column per horizon; `*` marks a model that predicts zero.
pub fn write_mape_summary<W: Write>(reports: &[EvaluationReport], sink: W) -> Result<()> {
    let mut horizons: Vec<usize> = reports.iter().map(|r| r.horizon).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut rows: BTreeMap<&str, BTreeMap<usize, &EvaluationReport>> = BTreeMap::new();
    for r in reports {
        rows.entry(&r.model).or_default().insert(r.horizon, r);
    }
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["model".to_string()];
    header.extend(horizons.iter().map(|h| format!("h{h}")));
    w.write_record(&header)?;
    for (model, cells) in rows {
        let mut row = vec![model.to_string()];
        for h in &horizons {
            row.push(match cells.get(h) {
                Some(r) if r.zero_prediction => "*".into(),
                Some(r) => format!("{:.3}", r.mape),
                None => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pdp<W: Write>(curve: &PartialDependence, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["bin_value", "avg_weight"])?;
    for p in &curve.points {
        w.write_record([p.bin_value.to_string(), p.avg_weight.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::BaselineKind;
    use crate::concurrent::ConcurrentModel;
    use crate::features::build_batches;
    use crate::neuralnet::{softplus, Architecture};

    #[test]
    fn mape_examples() {
        assert!((mape(&[0.1, 0.2], &[0.1, 0.4]).unwrap() - 40.0).abs() < 1e-12);
        assert_eq!(mape(&[0.3, 0.5], &[0.3, 0.5]).unwrap(), 0.0);
        assert!(matches!(mape(&[0.1], &[0.0]), Err(Error::ZeroActualTotal)));
        assert!(matches!(mape(&[0.1], &[0.1, 0.2]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn zero_flag() {
        assert!(predicts_zero(&[1e-6, 0.0], &[0.2, 0.3]));
        assert!(!predicts_zero(&[1e-6, 0.1], &[0.2, 0.3]));
    }

    fn panel(d: usize, n: usize) -> (PanelDataset, ShareMatrix) {
        let sales: Vec<Vec<u64>> = (0..d).map(|i| (0..n).map(|t| (3 + i * 2 + t % 5) as u64).collect()).collect();
        let covs = (0..d).map(|i| (0..n).map(|t| vec![(i * 7 + t * 3) as f64 % 11.0 / 10.0]).collect()).collect();
        let ids = (0..d).map(|i| format!("P{i}")).collect();
        let p = PanelDataset::new(ids, (0..n as i64).collect(), vec!["theta1".into()], sales, covs, vec![vec![true; n]; d]).unwrap();
        let totals = p.totals();
        let y = ShareMatrix::from_rows((0..d).map(|i| (0..n).map(|t| p.sales(i, t) as f64 / totals[t]).collect()).collect());
        (p, y)
    }

    #[test]
    fn baseline_forecaster_matches_direct_calls() {
        let (p, y) = panel(3, 20);
        let ma = BaselineModel::new(BaselineKind::MovingAverage { window: 4 }, 3).unwrap();
        let rep = rolling_evaluate(&ma, &p, &y, 10..20).unwrap();
        assert_eq!(rep.records.len(), 30);
        for r in &rep.records {
            let direct = crate::baselines::moving_average(&y, &p, 3, 4, r.product, r.week_index).unwrap();
            assert_eq!(r.predicted, direct);
        }
        assert_eq!(rep.min_read_lag, Some(3));
    }

    #[test]
    fn model_reads_nothing_past_cutoff() {
        let (p, y) = panel(3, 30);
        for h in [1, 4, 8] {
            let spec = FeatureSpec::for_panel(&p, h, 2).unwrap();
            let arch = Architecture::new(spec.input_dim(), vec![4]).unwrap();
            let net = crate::neuralnet::init_params(&arch, 3).unwrap();
            let model = ShareModel::Concurrent(ConcurrentModel::new(net, 1.0, spec.clone()).unwrap());
            let rep = rolling_evaluate(&model, &p, &y, 20..30).unwrap();
            assert!(rep.min_read_lag.unwrap() >= h);
            // rolling forecasts agree with batches built from the full panel
            let batches = build_batches(&p, &y, &vec![1.0; 30], &spec, 20..30);
            let from_batches: Vec<f64> = batches.iter().flat_map(|b| model.predict(b).unwrap()).collect();
            assert_eq!(rep.predictions(), from_batches);
            assert!(matches!(rolling_evaluate(&model, &p, &y, 0..30), Err(Error::InsufficientHistory(_))));
        }
    }

    struct Peeker;

    impl Forecaster for Peeker {
        fn name(&self) -> String {
            "peek".into()
        }
        fn horizon(&self) -> usize {
            2
        }
        fn predict_week(&self, history: &History<'_>, products: &[usize]) -> Result<Vec<f64>> {
            Ok(products.iter().map(|&i| history.share(i, history.target())).collect())
        }
    }

    #[test]
    fn look_ahead_is_rejected() {
        let (p, y) = panel(2, 10);
        assert!(matches!(rolling_evaluate(&Peeker, &p, &y, 4..10), Err(Error::LookAhead { week: 4, read: 4 })));
    }

    #[test]
    fn rescaled_weeks_sum_to_target() {
        let (p, y) = panel(4, 16);
        let lv = RescaledForecaster {
            inner: BaselineModel::new(BaselineKind::LastValue, 2).unwrap(),
            target_total: 1.0,
        };
        let rep = rolling_evaluate(&lv, &p, &y, 4..16).unwrap();
        assert_eq!(rep.model, "S-LV");
        for t in 4..16 {
            let s: f64 = rep.records.iter().filter(|r| r.week_index == t).map(|r| r.predicted).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_frequency_bins_cover_sorted_chunks() {
        let values: Vec<f64> = (0..1000).rev().map(|v| v as f64).collect();
        let (reps, degenerate) = equal_frequency_bins(&values, 100);
        assert!(!degenerate);
        assert_eq!(reps.len(), 100);
        assert_eq!(reps[0], 4.5);
        assert_eq!(reps[99], 994.5);
        let (reps, degenerate) = equal_frequency_bins(&[0.0, 1.0, 1.0, 0.0], 100);
        assert!(degenerate);
        assert_eq!(reps, vec![0.0, 1.0]);
    }

    #[test]
    fn pdp_of_single_feature_net_is_that_function() {
        let (p, y) = panel(5, 40);
        let spec = FeatureSpec::for_panel(&p, 1, 1).unwrap();
        // φ depends only on share_lag1 through softplus(x)
        let phi = WeightNet::affine_softplus(&[1.0, 0.0], 0.0).unwrap();
        let train = build_batches(&p, &y, &vec![1.0; 40], &spec, 1..30);
        let test = build_batches(&p, &y, &vec![1.0; 40], &spec, 30..40);
        let curve = partial_dependence(&phi, &spec, &train, &test, "share_lag1").unwrap();
        for pt in &curve.points {
            assert!((pt.avg_weight - softplus(pt.bin_value)).abs() < 1e-12);
        }
        let flat = partial_dependence(&phi, &spec, &train, &test, "theta1").unwrap();
        assert!(flat.degenerate);
        assert!(matches!(partial_dependence(&phi, &spec, &train, &test, "price"), Err(Error::UnknownFeature(_))));
    }

    #[test]
    fn summary_marks_zero_models() {
        let mk = |model: &str, h, mape, zero| EvaluationReport {
            model: model.into(),
            horizon: h,
            records: vec![],
            mape,
            zero_prediction: zero,
            min_read_lag: None,
        };
        let mut out = Vec::new();
        write_mape_summary(&[mk("LV", 4, 12.0, false), mk("LV", 8, 14.5, false), mk("FFNN", 4, 99.9, true)], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "model,h4,h8\nFFNN,*,\nLV,12.000,14.500\n");
    }
}
