//! Weekly panel ingestion, the category-total scaler `s(t)`, market shares and
//! date-based splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to computed scaler values.
pub const DEFAULT_SCALER_FLOOR: f64 = 1.0;

/// Dense `d × n` panel of weekly sales, covariates and availability.
///
/// A product that has no row for a week is "not offered" that week: its sales
/// are 0 and its covariates are filled with 0.0 (never read by the models).
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    product_ids: Vec<String>,
    weeks: Vec<i64>,
    covariate_names: Vec<String>,
    sales: Vec<Vec<u64>>,
    covariates: Vec<Vec<Vec<f64>>>,
    available: Vec<Vec<bool>>,
    oracle_scaler: Option<Vec<f64>>,
}

impl PanelDataset {
    /// Builds a panel from dense arrays, checking every invariant.
    pub fn new(
        product_ids: Vec<String>,
        weeks: Vec<i64>,
        covariate_names: Vec<String>,
        sales: Vec<Vec<u64>>,
        covariates: Vec<Vec<Vec<f64>>>,
        available: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let d = product_ids.len();
        let n = weeks.len();
        let p = covariate_names.len();
        if d == 0 || n == 0 {
            return Err(Error::EmptyFile);
        }
        if weeks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSplit("weeks must be strictly increasing".into()));
        }
        check_len(sales.len(), d)?;
        check_len(covariates.len(), d)?;
        check_len(available.len(), d)?;
        for i in 0..d {
            check_len(sales[i].len(), n)?;
            check_len(covariates[i].len(), n)?;
            check_len(available[i].len(), n)?;
            for t in 0..n {
                check_len(covariates[i][t].len(), p)?;
                if !available[i][t] && sales[i][t] != 0 {
                    return Err(Error::Malformed {
                        row: t,
                        column: product_ids[i].clone(),
                        reason: "sales recorded for an unavailable product".into(),
                    });
                }
                if available[i][t] && covariates[i][t].iter().any(|c| !c.is_finite()) {
                    return Err(Error::Malformed {
                        row: t,
                        column: product_ids[i].clone(),
                        reason: "non-finite covariate".into(),
                    });
                }
            }
        }
        Ok(Self {
            product_ids,
            weeks,
            covariate_names,
            sales,
            covariates,
            available,
            oracle_scaler: None,
        })
    }

    /// Attaches per-week oracle totals (the `s_oracle` column).
    pub fn with_oracle_scaler(mut self, values: Vec<f64>) -> Result<Self> {
        check_len(values.len(), self.n())?;
        self.oracle_scaler = Some(values);
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.product_ids.len()
    }

    pub fn n(&self) -> usize {
        self.weeks.len()
    }

    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn product_ids(&self) -> &[String] {
        &self.product_ids
    }

    pub fn weeks(&self) -> &[i64] {
        &self.weeks
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn sales(&self, product: usize, week: usize) -> u64 {
        self.sales[product][week]
    }

    pub fn covariates(&self, product: usize, week: usize) -> &[f64] {
        &self.covariates[product][week]
    }

    pub fn is_available(&self, product: usize, week: usize) -> bool {
        self.available[product][week]
    }

    pub fn oracle_scaler(&self) -> Option<&[f64]> {
        self.oracle_scaler.as_deref()
    }

    /// Column sums `Σ_i x_{i,t}`.
    pub fn totals(&self) -> Vec<f64> {
        (0..self.n())
            .map(|t| self.sales.iter().map(|row| row[t] as f64).sum())
            .collect()
    }

    /// First week index at which the product is offered.
    pub fn launch_week(&self, product: usize) -> Option<usize> {
        self.available[product].iter().position(|&a| a)
    }
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

/// Column names used when reading a panel CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub product_id: String,
    pub week: String,
    pub sales: String,
    pub covariates: Vec<String>,
    /// Read when present; its absence is not an error.
    pub oracle: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            product_id: "product_id".into(),
            week: "week".into(),
            sales: "sales".into(),
            covariates: Vec::new(),
            oracle: "s_oracle".into(),
        }
    }
}

/// Parses a week cell: an integer index, or an ISO date mapped to a week number.
pub fn parse_week(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Some(v);
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .map(|d| i64::from(d.num_days_from_ce()).div_euclid(7))
}

pub fn load_panel(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<PanelDataset> {
    let file = std::fs::File::open(path)?;
    read_panel(file, schema)
}

struct Row {
    sales: u64,
    covariates: Vec<f64>,
}

/// Reads a panel from any CSV source (header row required).
pub fn read_panel<R: Read>(source: R, schema: &ColumnSchema) -> Result<PanelDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = column(&schema.product_id)?;
    let week_col = column(&schema.week)?;
    let sales_col = column(&schema.sales)?;
    let cov_cols = schema
        .covariates
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let oracle_col = headers.iter().position(|h| h == schema.oracle);

    let mut cells: HashMap<(String, i64), Row> = HashMap::new();
    let mut products: Vec<String> = Vec::new();
    let mut seen_products: HashMap<String, usize> = HashMap::new();
    let mut weeks: BTreeSet<i64> = BTreeSet::new();
    let mut oracle: BTreeMap<i64, f64> = BTreeMap::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 2; // 1-based, after header
        let field = |col: usize| record.get(col).unwrap_or("");
        let product = field(id_col).to_string();
        let week_raw = field(week_col);
        let week = parse_week(week_raw).ok_or_else(|| Error::Malformed {
            row,
            column: schema.week.clone(),
            reason: format!("cannot parse week `{week_raw}`"),
        })?;
        let sales_raw = field(sales_col);
        let sales = parse_sales(sales_raw, &product, week).map_err(|e| match e {
            Error::Malformed { reason, .. } => Error::Malformed {
                row,
                column: schema.sales.clone(),
                reason,
            },
            other => other,
        })?;
        let covariates = cov_cols
            .iter()
            .zip(&schema.covariates)
            .map(|(&col, name)| {
                let raw = field(col);
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Malformed {
                        row,
                        column: name.clone(),
                        reason: format!("cannot parse covariate `{raw}`"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(col) = oracle_col {
            let raw = field(col);
            if !raw.is_empty() {
                let value = raw.parse::<f64>().map_err(|_| Error::Malformed {
                    row,
                    column: schema.oracle.clone(),
                    reason: format!("cannot parse oracle total `{raw}`"),
                })?;
                if let Some(prev) = oracle.insert(week, value) {
                    if prev != value {
                        return Err(Error::Malformed {
                            row,
                            column: schema.oracle.clone(),
                            reason: format!("inconsistent oracle totals for week {week}"),
                        });
                    }
                }
            }
        }

        if !seen_products.contains_key(&product) {
            seen_products.insert(product.clone(), products.len());
            products.push(product.clone());
        }
        weeks.insert(week);
        let key = (product.clone(), week);
        match cells.get(&key) {
            Some(existing) if existing.sales != sales || existing.covariates != covariates => {
                return Err(Error::ConflictingDuplicate { product, week });
            }
            Some(_) => {}
            None => {
                cells.insert(key, Row { sales, covariates });
            }
        }
    }

    if cells.is_empty() {
        return Err(Error::EmptyFile);
    }

    let weeks: Vec<i64> = weeks.into_iter().collect();
    let week_pos: HashMap<i64, usize> = weeks.iter().enumerate().map(|(k, &w)| (w, k)).collect();
    let (d, n, p) = (products.len(), weeks.len(), schema.covariates.len());
    let mut sales = vec![vec![0u64; n]; d];
    let mut covs = vec![vec![vec![0.0; p]; n]; d];
    let mut available = vec![vec![false; n]; d];
    for ((product, week), row) in cells {
        let i = seen_products[&product];
        let t = week_pos[&week];
        sales[i][t] = row.sales;
        covs[i][t] = row.covariates;
        available[i][t] = true;
    }
    let panel = PanelDataset::new(
        products,
        weeks.clone(),
        schema.covariates.clone(),
        sales,
        covs,
        available,
    )?;
    if oracle_col.is_some() && !oracle.is_empty() {
        let values = weeks
            .iter()
            .map(|w| oracle.get(w).copied().unwrap_or(f64::NAN))
            .collect();
        panel.with_oracle_scaler(values)
    } else {
        Ok(panel)
    }
}

fn parse_sales(raw: &str, product: &str, week: i64) -> Result<u64> {
    if let Ok(v) = raw.parse::<i64>() {
        return if v < 0 {
            Err(Error::NegativeSales {
                product: product.to_string(),
                week,
                value: raw.to_string(),
            })
        } else {
            Ok(v as u64)
        };
    }
    // Accept integral decimals such as "12.0".
    match raw.parse::<f64>() {
        Ok(v) if v < 0.0 => Err(Error::NegativeSales {
            product: product.to_string(),
            week,
            value: raw.to_string(),
        }),
        Ok(v) if v.fract() == 0.0 && v.is_finite() => Ok(v as u64),
        _ => Err(Error::Malformed {
            row: 0,
            column: String::new(),
            reason: format!("sales `{raw}` is not a non-negative integer"),
        }),
    }
}

/// Writes a panel in the ingestion format. Unavailable cells are omitted.
pub fn write_panel<W: Write>(panel: &PanelDataset, oracle: Option<&Scaler>, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["product_id".to_string(), "week".into(), "sales".into()];
    header.extend(panel.covariate_names().iter().cloned());
    if oracle.is_some() {
        header.push("s_oracle".into());
    }
    writer.write_record(&header)?;
    for t in 0..panel.n() {
        for i in 0..panel.d() {
            if !panel.is_available(i, t) {
                continue;
            }
            let mut record = vec![
                panel.product_ids()[i].clone(),
                panel.weeks()[t].to_string(),
                panel.sales(i, t).to_string(),
            ];
            record.extend(panel.covariates(i, t).iter().map(|c| c.to_string()));
            if let Some(s) = oracle {
                record.push(s.values()[t].to_string());
            }
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalerMethod {
    Oracle,
    TrailingMovingAverage { window: usize },
    TotalActual,
}

impl Default for ScalerMethod {
    fn default() -> Self {
        ScalerMethod::TrailingMovingAverage { window: 8 }
    }
}

/// Strictly positive per-week estimate `s(t)` of the category total.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    values: Vec<f64>,
    method: ScalerMethod,
}

impl Scaler {
    /// Wraps user-supplied values (the oracle route).
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyFile);
        }
        for (index, &value) in values.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveOracleValue { index, value });
            }
        }
        Ok(Self {
            values,
            method: ScalerMethod::Oracle,
        })
    }

    pub fn constant(value: f64, n: usize) -> Result<Self> {
        Self::from_values(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn method(&self) -> ScalerMethod {
        self.method
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `τ_s = max_t s(t+1)/s(t)`; 1.0 for a single week.
    pub fn ratio_bound(&self) -> f64 {
        if self.values.len() < 2 {
            return 1.0;
        }
        self.values
            .windows(2)
            .map(|w| w[1] / w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `R = max_t s(t)`.
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn compute_scaler(data: &PanelDataset, method: ScalerMethod, floor: f64) -> Result<Scaler> {
    if !(floor > 0.0) {
        return Err(Error::Config(format!("scaler floor must be positive, got {floor}")));
    }
    let totals = data.totals();
    let values = match method {
        ScalerMethod::Oracle => {
            let oracle = data
                .oracle_scaler()
                .ok_or_else(|| Error::MissingColumn("s_oracle".into()))?;
            return Scaler::from_values(oracle.to_vec());
        }
        ScalerMethod::TotalActual => totals.iter().map(|&v| v.max(floor)).collect(),
        ScalerMethod::TrailingMovingAverage { window } => {
            if window == 0 {
                return Err(Error::Config("moving-average window must be at least 1".into()));
            }
            if window > totals.len() {
                return Err(Error::WindowTooLarge {
                    window,
                    weeks: totals.len(),
                });
            }
            trailing_means(&totals, window)
                .into_iter()
                .map(|v| v.max(floor))
                .collect()
        }
    };
    Ok(Scaler { values, method })
}

/// Mean of the previous `window` totals; week 0 has no past and uses its own total.
fn trailing_means(totals: &[f64], window: usize) -> Vec<f64> {
    (0..totals.len())
        .map(|t| {
            if t == 0 {
                totals[0]
            } else {
                let past = &totals[t.saturating_sub(window)..t];
                past.iter().sum::<f64>() / past.len() as f64
            }
        })
        .collect()
}

/// `y_{i,t} = x_{i,t} / s(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareMatrix {
    shares: Vec<Vec<f64>>,
}

impl ShareMatrix {
    pub fn from_rows(shares: Vec<Vec<f64>>) -> Self {
        Self { shares }
    }

    pub fn get(&self, product: usize, week: usize) -> f64 {
        self.shares[product][week]
    }

    pub fn row(&self, product: usize) -> &[f64] {
        &self.shares[product]
    }

    pub fn d(&self) -> usize {
        self.shares.len()
    }

    pub fn n(&self) -> usize {
        self.shares.first().map_or(0, Vec::len)
    }
}

pub fn market_shares(data: &PanelDataset, scaler: &Scaler) -> Result<ShareMatrix> {
    check_len(scaler.len(), data.n())?;
    let s = scaler.values();
    let shares = (0..data.d())
        .map(|i| (0..data.n()).map(|t| data.sales(i, t) as f64 / s[t]).collect())
        .collect();
    Ok(ShareMatrix { shares })
}

/// Exclusive end positions (week indices into the panel) of the three periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: usize,
    pub valid_end: usize,
    pub test_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitViews {
    pub train: Range<usize>,
    pub valid: Range<usize>,
    pub test: Range<usize>,
}

impl SplitSpec {
    /// Training up to `n - test_len - valid_len`, then validation, then test.
    pub fn trailing(n: usize, valid_len: usize, test_len: usize) -> Result<Self> {
        let train_end = n
            .checked_sub(valid_len + test_len)
            .ok_or_else(|| Error::InvalidSplit(format!("{n} weeks cannot hold the requested periods")))?;
        Ok(Self {
            train_end,
            valid_end: train_end + valid_len,
            test_end: n,
        })
    }
}

/// Contiguous, non-overlapping train/valid/test week ranges covering `[0, test_end)`.
///
/// Lagged features for a view may read shares before the view's start.
pub fn split(data: &PanelDataset, spec: SplitSpec) -> Result<SplitViews> {
    let SplitSpec {
        train_end,
        valid_end,
        test_end,
    } = spec;
    if train_end == 0 || train_end >= valid_end || valid_end >= test_end || test_end > data.n() {
        return Err(Error::InvalidSplit(format!(
            "need 0 < train_end < valid_end < test_end <= {}, got {train_end}/{valid_end}/{test_end}",
            data.n()
        )));
    }
    Ok(SplitViews {
        train: 0..train_end,
        valid: train_end..valid_end,
        test: valid_end..test_end,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn panel_from_totals(totals: &[u64]) -> PanelDataset {
        let n = totals.len();
        PanelDataset::new(
            vec!["A".into()],
            (0..n as i64).collect(),
            vec![],
            vec![totals.to_vec()],
            vec![vec![vec![]; n]],
            vec![vec![true; n]],
        )
        .unwrap()
    }

    fn read(csv: &str, covs: &[&str]) -> Result<PanelDataset> {
        let schema = ColumnSchema {
            covariates: covs.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        };
        read_panel(csv.as_bytes(), &schema)
    }

    #[test]
    fn full_panel() {
        let csv = "product_id,week,sales,price\nA,1,3,10.5\nB,1,4,9\nA,2,5,10\nB,2,0,9\nA,3,1,11\nB,3,2,8\n";
        let p = read(csv, &["price"]).unwrap();
        assert_eq!((p.d(), p.n(), p.p()), (2, 3, 1));
        assert!((0..2).all(|i| (0..3).all(|t| p.is_available(i, t))));
        assert_eq!(p.sales(0, 1), 5);
        assert_eq!(p.covariates(0, 0), &[10.5]);
    }

    #[test]
    fn missing_row_is_unavailable() {
        let csv = "product_id,week,sales\nA,1,3\nB,1,4\nA,2,5\nA,3,1\nB,3,2\n";
        let p = read(csv, &[]).unwrap();
        assert!(!p.is_available(1, 1));
        assert_eq!(p.sales(1, 1), 0);
        assert_eq!(p.launch_week(1), Some(0));
    }

    #[test]
    fn conflicting_duplicate() {
        let csv = "product_id,week,sales\nA,1,3\nA,1,5\n";
        assert!(matches!(read(csv, &[]), Err(Error::ConflictingDuplicate { .. })));
        // identical duplicates collapse
        let csv = "product_id,week,sales\nA,1,3\nA,1,3\n";
        assert_eq!(read(csv, &[]).unwrap().n(), 1);
    }

    #[test]
    fn ingestion_errors() {
        assert!(matches!(
            read("product_id,week\nA,1\n", &[]),
            Err(Error::MissingColumn(c)) if c == "sales"
        ));
        assert!(matches!(read("product_id,week,sales\nA,1,-2\n", &[]), Err(Error::NegativeSales { .. })));
        assert!(matches!(read("product_id,week,sales\n", &[]), Err(Error::EmptyFile)));
        assert!(matches!(
            read("product_id,week,sales\nA,1,2\n", &["price"]),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn iso_dates_map_to_week_numbers() {
        let csv = "product_id,week,sales\nA,2020-01-06,1\nA,2020-01-13,2\n";
        let p = read(csv, &[]).unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.weeks()[1] - p.weeks()[0], 1);
    }

    #[test]
    fn oracle_column() {
        let csv = "product_id,week,sales,s_oracle\nA,1,3,10\nB,1,4,10\nA,2,5,12\n";
        let p = read(csv, &[]).unwrap();
        let s = compute_scaler(&p, ScalerMethod::Oracle, 1.0).unwrap();
        assert_eq!(s.values(), &[10.0, 12.0]);
        let bad = "product_id,week,sales,s_oracle\nA,1,3,0\n";
        let p = read(bad, &[]).unwrap();
        assert!(matches!(
            compute_scaler(&p, ScalerMethod::Oracle, 1.0),
            Err(Error::NonPositiveOracleValue { index: 0, .. })
        ));
    }

    #[test]
    fn scaler_methods() {
        let p = panel_from_totals(&[10, 20, 30]);
        let s = compute_scaler(&p, ScalerMethod::TotalActual, 1.0).unwrap();
        assert_eq!(s.values(), &[10.0, 20.0, 30.0]);
        let s = compute_scaler(&p, ScalerMethod::TrailingMovingAverage { window: 2 }, 1.0).unwrap();
        assert_eq!(s.values(), &[10.0, 10.0, 15.0]);
        assert!(matches!(
            compute_scaler(&p, ScalerMethod::TrailingMovingAverage { window: 4 }, 1.0),
            Err(Error::WindowTooLarge { .. })
        ));
        let p = panel_from_totals(&[0, 5]);
        let s = compute_scaler(&p, ScalerMethod::TotalActual, 1.0).unwrap();
        assert_eq!(s.values(), &[1.0, 5.0]);
        assert_eq!(s.ratio_bound(), 5.0);
    }

    #[test]
    fn share_examples() {
        let p = panel_from_totals(&[5, 0]);
        let s = Scaler::from_values(vec![100.0, 7.0]).unwrap();
        let y = market_shares(&p, &s).unwrap();
        assert_eq!(y.get(0, 0), 0.05);
        assert_eq!(y.get(0, 1), 0.0);
        let short = Scaler::from_values(vec![1.0]).unwrap();
        assert!(matches!(market_shares(&p, &short), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn split_sizes_and_errors() {
        let p = panel_from_totals(&vec![1; 208]);
        let v = split(&p, SplitSpec { train_end: 156, valid_end: 182, test_end: 208 }).unwrap();
        assert_eq!((v.train.len(), v.valid.len(), v.test.len()), (156, 26, 26));
        assert_eq!(SplitSpec::trailing(208, 26, 26).unwrap().train_end, 156);
        for bad in [(182, 182, 208), (190, 182, 208), (156, 182, 209)] {
            let spec = SplitSpec { train_end: bad.0, valid_end: bad.1, test_end: bad.2 };
            assert!(matches!(split(&p, spec), Err(Error::InvalidSplit(_))));
        }
    }

    #[test]
    fn csv_round_trip() {
        let csv = "product_id,week,sales,price\nA,1,3,10.5\nB,1,4,9\nA,2,5,10\n";
        let p = read(csv, &["price"]).unwrap();
        let mut out = Vec::new();
        write_panel(&p, None, &mut out).unwrap();
        let q = read(std::str::from_utf8(&out).unwrap(), &["price"]).unwrap();
        assert_eq!(p, q);
    }

    proptest! {
        #[test]
        fn shares_times_scaler_recover_sales(
            rows in proptest::collection::vec(proptest::collection::vec(0u64..10_000, 6), 1..5),
            scale in proptest::collection::vec(0.5f64..5_000.0, 6),
        ) {
            let d = rows.len();
            let p = PanelDataset::new(
                (0..d).map(|i| i.to_string()).collect(),
                (0..6).collect(),
                vec![],
                rows.clone(),
                vec![vec![vec![]; 6]; d],
                vec![vec![true; 6]; d],
            ).unwrap();
            let s = Scaler::from_values(scale.clone()).unwrap();
            let y = market_shares(&p, &s).unwrap();
            for i in 0..d {
                for t in 0..6 {
                    let back = y.get(i, t) * scale[t];
                    let x = rows[i][t] as f64;
                    prop_assert!((back - x).abs() <= 1e-12 * x.max(1.0));
                }
            }
            let totals = compute_scaler(&p, ScalerMethod::TotalActual, 1.0).unwrap();
            for (t, &v) in totals.values().iter().enumerate() {
                let col: f64 = rows.iter().map(|r| r[t] as f64).sum();
                if col >= 1.0 { prop_assert_eq!(v, col); }
            }
        }

        #[test]
        fn split_partitions_weeks(n in 3usize..300, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let train_end = 1 + ((n - 2) as f64 * a.min(b)) as usize;
            let valid_end = (train_end + 1 + ((n - 1 - train_end) as f64 * a.max(b)) as usize).min(n - 1);
            prop_assume!(train_end < valid_end);
            let p = panel_from_totals(&vec![1; n]);
            let v = split(&p, SplitSpec { train_end, valid_end, test_end: n }).unwrap();
            prop_assert_eq!(v.train.start, 0);
            prop_assert_eq!(v.train.end, v.valid.start);
            prop_assert_eq!(v.valid.end, v.test.start);
            prop_assert_eq!(v.test.end, n);
        }
    }
}
