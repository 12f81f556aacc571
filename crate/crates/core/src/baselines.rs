//! Reference predictors: last value, moving average, and the rescaling
//! wrapper that forces a week's predictions to a target total.

use serde::{Deserialize, Serialize};

use crate::data::{PanelDataset, ShareMatrix};
use crate::error::{Error, Result};

/// Moving-average windows tried on the validation period.
pub const MA_WINDOW_GRID: [usize; 6] = [1, 2, 4, 8, 13, 26];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    LastValue,
    MovingAverage { window: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub horizon: usize,
}

impl BaselineModel {
    pub fn new(kind: BaselineKind, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if let BaselineKind::MovingAverage { window: 0 } = kind {
            return Err(Error::Config("moving-average window must be at least 1".into()));
        }
        Ok(Self { kind, horizon })
    }

    pub fn name(&self) -> String {
        match self.kind {
            BaselineKind::LastValue => "LV".into(),
            BaselineKind::MovingAverage { window } => format!("MA({window})"),
        }
    }

    /// Prediction for one cell, reading shares through `share_at`.
    pub fn predict_with(
        &self,
        available: impl Fn(usize) -> bool,
        share_at: impl Fn(usize) -> f64,
        week: usize,
    ) -> Result<f64> {
        let newest = week
            .checked_sub(self.horizon)
            .ok_or(Error::HorizonExceedsHistory {
                horizon: self.horizon,
                week,
            })?;
        let window = match self.kind {
            BaselineKind::LastValue => 1,
            BaselineKind::MovingAverage { window } => window,
        };
        let mut taken = 0;
        let mut sum = 0.0;
        for s in (0..=newest).rev() {
            if taken == window {
                break;
            }
            if available(s) {
                sum += share_at(s);
                taken += 1;
            }
        }
        Ok(if taken == 0 { 0.0 } else { sum / taken as f64 })
    }

    pub fn predict(&self, shares: &ShareMatrix, panel: &PanelDataset, product: usize, week: usize) -> Result<f64> {
        self.predict_with(|s| panel.is_available(product, s), |s| shares.get(product, s), week)
    }
}

/// `ŷ_{i,t} = y_{i,t−h}`, falling back to the most recent available share, else 0.
pub fn last_value(shares: &ShareMatrix, panel: &PanelDataset, horizon: usize, product: usize, week: usize) -> Result<f64> {
    BaselineModel::new(BaselineKind::LastValue, horizon)?.predict(shares, panel, product, week)
}

/// Mean share over the `window` most recent available weeks `≤ t − h`.
pub fn moving_average(
    shares: &ShareMatrix,
    panel: &PanelDataset,
    horizon: usize,
    window: usize,
    product: usize,
    week: usize,
) -> Result<f64> {
    BaselineModel::new(BaselineKind::MovingAverage { window }, horizon)?.predict(shares, panel, product, week)
}

/// Rescaled predictions plus a flag raised when the input summed to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Rescaled {
    pub shares: Vec<f64>,
    pub degenerate: bool,
}

/// Multiplies every prediction by `target_total / Σ preds`; identity when the sum is 0.
pub fn rescale_to_total(preds: &[f64], target_total: f64) -> Rescaled {
    let sum: f64 = preds.iter().sum();
    if sum > 0.0 {
        let factor = target_total / sum;
        Rescaled {
            shares: preds.iter().map(|p| p * factor).collect(),
            degenerate: false,
        }
    } else {
        Rescaled {
            shares: preds.to_vec(),
            degenerate: true,
        }
    }
}
