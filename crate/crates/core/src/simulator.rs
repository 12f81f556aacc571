//! Synthetic panels from the generative model.
//!
//! For `t > 0`:
//!
//! ```text
//! w_{i,t} = φ(x_{i,t-1} / s(t-1), θ_{i,t})
//! λ_{i,t} = s(t) · w_{i,t} / (1 + Σ_j w_{j,t})
//! x_{i,t} ~ Poisson(λ_{i,t})
//! ```
//!
//! Noise for cell `(i, t)` comes from its own substream of the root seed.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;

use crate::data::{PanelDataset, Scaler};
use crate::error::{Error, Result};
use crate::neuralnet::{softplus, WeightNet};
use crate::poisson;
use crate::rng::{substream, tag};

/// Anything that can play the role of `φ`.
pub trait WeightFunction: Send + Sync {
    fn weight(&self, input: &[f64]) -> Result<f64>;
}

impl WeightFunction for WeightNet {
    fn weight(&self, input: &[f64]) -> Result<f64> {
        self.forward(input)
    }
}

/// Closed-form weight functions.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticWeight {
    Constant(f64),
    /// `softplus(coeffs · input + bias)`.
    SoftplusAffine { coeffs: Vec<f64>, bias: f64 },
    /// `slope · input[0] + intercept`, clamped at 0 from below.
    Linear { slope: f64, intercept: f64 },
}

impl WeightFunction for AnalyticWeight {
    fn weight(&self, input: &[f64]) -> Result<f64> {
        Ok(match self {
            AnalyticWeight::Constant(c) => *c,
            AnalyticWeight::SoftplusAffine { coeffs, bias } => {
                softplus(bias + coeffs.iter().zip(input).map(|(a, x)| a * x).sum::<f64>())
            }
            AnalyticWeight::Linear { slope, intercept } => (slope * input[0] + intercept).max(0.0),
        })
    }
}

/// Adapter for plain closures.
pub struct FnWeight<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Send + Sync> WeightFunction for FnWeight<F> {
    fn weight(&self, input: &[f64]) -> Result<f64> {
        Ok((self.0)(input))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateProcess {
    /// The same covariate vector for every product and week.
    Constant(Vec<f64>),
    /// Independent `U(lo, hi)` draws per product, week and feature.
    IidUniform { lo: f64, hi: f64, p: usize },
    /// Per-product random walk from 0 with `U(-step, step)` increments.
    RandomWalk { step: f64, p: usize },
}

impl CovariateProcess {
    pub fn dim(&self) -> usize {
        match self {
            CovariateProcess::Constant(v) => v.len(),
            CovariateProcess::IidUniform { p, .. } | CovariateProcess::RandomWalk { p, .. } => *p,
        }
    }

    /// `d × n × p` covariate array.
    pub fn generate(&self, d: usize, n: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
        match self {
            CovariateProcess::Constant(v) => vec![vec![v.clone(); n]; d],
            CovariateProcess::IidUniform { lo, hi, p } => (0..d)
                .map(|i| {
                    (0..n)
                        .map(|t| {
                            let mut rng = substream(seed, &[tag::COVARIATE, i as u64, t as u64]);
                            (0..*p).map(|_| rng.gen_range(*lo..*hi)).collect()
                        })
                        .collect()
                })
                .collect(),
            CovariateProcess::RandomWalk { step, p } => (0..d)
                .map(|i| {
                    let mut level = vec![0.0; *p];
                    (0..n)
                        .map(|t| {
                            if t > 0 {
                                let mut rng = substream(seed, &[tag::COVARIATE, i as u64, t as u64]);
                                for v in level.iter_mut() {
                                    *v += rng.gen_range(-*step..*step);
                                }
                            }
                            level.clone()
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDistribution {
    Zeros,
    PoissonAt(f64),
}

#[derive(Clone)]
pub struct GenerativeSpec {
    pub phi: Arc<dyn WeightFunction>,
    pub scaler: Scaler,
    pub covariates: CovariateProcess,
    pub d: usize,
    pub n: usize,
    pub init: InitialDistribution,
    pub seed: u64,
}

impl std::fmt::Debug for GenerativeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GenerativeSpec")
            .field("scaler", &self.scaler)
            .field("covariates", &self.covariates)
            .field("d", &self.d)
            .field("n", &self.n)
            .field("init", &self.init)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl GenerativeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidSpec("d must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidSpec("n must be at least 2".into()));
        }
        if self.scaler.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: self.scaler.len(),
            });
        }
        if let InitialDistribution::PoissonAt(rate) = self.init {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::InvalidSpec(format!("initial rate {rate} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Same spec with another seed (used for independent replicas).
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub panel: PanelDataset,
    /// `d × n` true intensities; row `t = 0` holds the initial rate.
    pub lambdas: Vec<Vec<f64>>,
    /// `d × n` true weights; column `t = 0` is 0 (no lag exists).
    pub weights: Vec<Vec<f64>>,
}

/// Builds the φ input `[x / s_prev, θ...]`.
pub fn phi_input(x_prev: u64, s_prev: f64, theta: &[f64]) -> Vec<f64> {
    let mut input = Vec::with_capacity(theta.len() + 1);
    input.push(x_prev as f64 / s_prev);
    input.extend_from_slice(theta);
    input
}

/// Weights and intensities of one transition, before any noise.
pub fn transition<T: AsRef<[f64]>>(
    x_prev: &[u64],
    theta: &[T],
    s_prev: f64,
    s_cur: f64,
    phi: &dyn WeightFunction,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(s_prev > 0.0 && s_cur > 0.0) {
        return Err(Error::InvalidSpec("scaler values must be positive".into()));
    }
    if theta.len() != x_prev.len() {
        return Err(Error::LengthMismatch {
            expected: x_prev.len(),
            got: theta.len(),
        });
    }
    let weights = x_prev
        .iter()
        .zip(theta)
        .map(|(&x, th)| {
            let w = phi.weight(&phi_input(x, s_prev, th.as_ref()))?;
            if w.is_finite() && w >= 0.0 {
                Ok(w)
            } else {
                Err(Error::NegativeWeightFromPhi { value: w })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let denom = 1.0 + weights.iter().sum::<f64>();
    let lambdas = weights.iter().map(|w| s_cur * w / denom).collect();
    Ok((weights, lambdas))
}

/// One application of the transition `F_t` with fresh Poisson noise.
pub fn step<T: AsRef<[f64]>, R: Rng + ?Sized>(
    x_prev: &[u64],
    theta: &[T],
    s_prev: f64,
    s_cur: f64,
    phi: &dyn WeightFunction,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let (_, lambdas) = transition(x_prev, theta, s_prev, s_cur, phi)?;
    Ok(lambdas.iter().map(|&l| poisson::sample(l, rng)).collect())
}

pub fn simulate(spec: &GenerativeSpec) -> Result<SimulatedPanel> {
    spec.validate()?;
    let (d, n) = (spec.d, spec.n);
    let s = spec.scaler.values();
    let covariates = spec.covariates.generate(d, n, spec.seed);
    let mut sales = vec![vec![0u64; n]; d];
    let mut lambdas = vec![vec![0.0; n]; d];
    let mut weights = vec![vec![0.0; n]; d];

    if let InitialDistribution::PoissonAt(rate) = spec.init {
        for i in 0..d {
            let mut rng = substream(spec.seed, &[tag::INIT, i as u64]);
            sales[i][0] = poisson::sample(rate, &mut rng);
            lambdas[i][0] = rate;
        }
    }

    let mut x_prev: Vec<u64> = (0..d).map(|i| sales[i][0]).collect();
    for t in 1..n {
        let theta: Vec<&[f64]> = (0..d).map(|i| covariates[i][t].as_slice()).collect();
        let (w, lam) = transition(&x_prev, &theta, s[t - 1], s[t], spec.phi.as_ref())?;
        for i in 0..d {
            let mut rng = substream(spec.seed, &[tag::CELL, i as u64, t as u64]);
            let x = poisson::sample(lam[i], &mut rng);
            sales[i][t] = x;
            x_prev[i] = x;
            lambdas[i][t] = lam[i];
            weights[i][t] = w[i];
        }
    }

    let p = spec.covariates.dim();
    let panel = PanelDataset::new(
        (0..d).map(|i| format!("P{:03}", i + 1)).collect(),
        (0..n as i64).collect(),
        (0..p).map(|k| format!("theta{}", k + 1)).collect(),
        sales,
        covariates,
        vec![vec![true; n]; d],
    )?
    .with_oracle_scaler(s.to_vec())?;
    Ok(SimulatedPanel {
        panel,
        lambdas,
        weights,
    })
}

/// Sidecar CSV `product_id, week, lambda, weight` of the true intensities.
pub fn write_truth<W: Write>(sim: &SimulatedPanel, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["product_id", "week", "lambda", "weight"])?;
    let panel = &sim.panel;
    for t in 0..panel.n() {
        for i in 0..panel.d() {
            writer.write_record([
                panel.product_ids()[i].clone(),
                panel.weeks()[t].to_string(),
                sim.lambdas[i][t].to_string(),
                sim.weights[i][t].to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}
