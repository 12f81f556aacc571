//! Empirical checks of the stability and concentration conditions behind the
//! risk bound: Lipschitz and contraction estimates, Bernstein constants, the
//! bound itself, Poisson moment bounds and an excess-risk decay experiment.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concurrent::{ConcurrentModel, LossKind, ShareModel};
use crate::data::{market_shares, Scaler};
use crate::error::{Error, Result};
use crate::features::{build_batches, FeatureSpec};
use crate::neuralnet::{init_params, Architecture, WeightNet};
use crate::poisson;
use crate::rng::{child_seed, substream, tag};
use crate::simulator::{simulate, transition, GenerativeSpec, InitialDistribution, WeightFunction};
use crate::trainer::{train, OptimizerKind, TrainConfig, TrainData, Variant};

/// Sampled and certified bounds on `sup |∂φ/∂x|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    pub sampled: f64,
    pub certified: f64,
}

/// Max `|∂φ/∂x|` over a grid of `x` values crossed with covariate samples.
///
/// The network input is `[x, θ...]`; `x` is always column 0.
pub fn estimate_lipschitz(
    phi: &WeightNet,
    x_range: (f64, f64),
    theta_samples: &[Vec<f64>],
    grid: usize,
) -> Result<LipschitzEstimate> {
    if theta_samples.is_empty() {
        return Err(Error::EmptyThetaSamples);
    }
    if grid < 2 {
        return Err(Error::Config(format!("Lipschitz grid needs at least 2 points, got {grid}")));
    }
    let dim = phi.architecture().input_dim;
    let mut sampled: f64 = 0.0;
    let mut input = vec![0.0; dim];
    for theta in theta_samples {
        if theta.len() + 1 != dim {
            return Err(Error::LengthMismatch {
                expected: dim - 1,
                got: theta.len(),
            });
        }
        input[1..].copy_from_slice(theta);
        for g in 0..grid {
            input[0] = x_range.0 + (x_range.1 - x_range.0) * g as f64 / (grid - 1) as f64;
            let grad = phi.backward(&input, 1.0)?;
            sampled = sampled.max(grad.input[0].abs());
        }
    }
    Ok(LipschitzEstimate {
        sampled,
        certified: phi.lipschitz_bound(0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionCheck {
    pub tau: f64,
    pub tau_s: f64,
    pub rho: f64,
    pub pass: bool,
}

/// `ρ = 3·τ_s·τ`, passing iff `ρ < 1`.
pub fn contraction_from(tau: f64, scaler: &Scaler) -> ContractionCheck {
    let tau_s = scaler.ratio_bound();
    let rho = 3.0 * tau_s * tau;
    ContractionCheck {
        tau,
        tau_s,
        rho,
        pass: rho < 1.0,
    }
}

/// Contraction check with `τ` taken from the certified Lipschitz bound of `phi`.
pub fn contraction_check(phi: &WeightNet, scaler: &Scaler) -> ContractionCheck {
    contraction_from(phi.lipschitz_bound(0), scaler)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairContraction {
    pub ratio: f64,
    /// Monte-Carlo standard error of `ratio`.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionEstimate {
    pub pairs: Vec<PairContraction>,
    /// Pair with the largest estimated ratio.
    pub worst: PairContraction,
}

impl ContractionEstimate {
    /// Whether the worst pair stays within `rho + 3σ`.
    pub fn within(&self, rho: f64) -> bool {
        self.worst.ratio <= rho + 3.0 * self.worst.sigma
    }
}

/// Monte-Carlo estimate of `E‖F_t(X,ε) − F_t(X′,ε)‖₁ / ‖X − X′‖₁` at week 1.
///
/// Both chains share one Poisson process per product (thinning coupling), so
/// the difference reflects only the change in intensities.
pub fn empirical_contraction(
    spec: &GenerativeSpec,
    pairs: &[(Vec<u64>, Vec<u64>)],
    replicas: usize,
) -> Result<ContractionEstimate> {
    spec.validate()?;
    if replicas < 100 {
        return Err(Error::Config(format!("empirical contraction needs at least 100 replicas, got {replicas}")));
    }
    let s = spec.scaler.values();
    let covariates = spec.covariates.generate(spec.d, spec.n, spec.seed);
    let theta: Vec<&[f64]> = covariates.iter().map(|row| row[1].as_slice()).collect();
    let mut out = Vec::with_capacity(pairs.len());
    for (k, (x, x2)) in pairs.iter().enumerate() {
        if x.len() != spec.d || x2.len() != spec.d {
            return Err(Error::LengthMismatch {
                expected: spec.d,
                got: x.len().min(x2.len()),
            });
        }
        let dist: f64 = x.iter().zip(x2).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum();
        if dist == 0.0 {
            return Err(Error::IdenticalStates(k));
        }
        let (_, la) = transition(x, &theta, s[0], s[1], spec.phi.as_ref())?;
        let (_, lb) = transition(x2, &theta, s[0], s[1], spec.phi.as_ref())?;
        let ratios: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = substream(spec.seed, &[tag::COUPLING, k as u64, r as u64]);
                let diff: u64 = la
                    .iter()
                    .zip(&lb)
                    .map(|(&a, &b)| {
                        let (ya, yb) = poisson::sample_coupled(a, b, &mut rng);
                        ya.abs_diff(yb)
                    })
                    .sum();
                diff as f64 / dist
            })
            .collect();
        let (mean, sd) = mean_sd(&ratios);
        out.push(PairContraction {
            ratio: mean,
            sigma: sd / (replicas as f64).sqrt(),
        });
    }
    let worst = *out
        .iter()
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .ok_or_else(|| Error::Config("no state pairs given".into()))?;
    Ok(ContractionEstimate { pairs: out, worst })
}

/// Random state pairs with counts in `0..=max_count`, guaranteed distinct.
pub fn random_state_pairs(d: usize, count: usize, max_count: u64, seed: u64) -> Vec<(Vec<u64>, Vec<u64>)> {
    (0..count)
        .map(|k| {
            let mut rng = substream(seed, &[tag::STATE, k as u64]);
            let x: Vec<u64> = (0..d).map(|_| rng.gen_range(0..=max_count)).collect();
            let mut y: Vec<u64> = (0..d).map(|_| rng.gen_range(0..=max_count)).collect();
            if x == y {
                y[0] = if y[0] == 0 { 1 } else { y[0] - 1 };
            }
            (x, y)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinConstants {
    /// Upper bound `R` on the scaler.
    pub r: f64,
    pub m: f64,
    pub v1: f64,
    pub v2: f64,
}

/// `M = d·max(1, e·R)`, `V₁ = V₂ = 4M²`.
pub fn bernstein_constants(d: usize, scaler: &Scaler) -> BernsteinConstants {
    let r = scaler.max_value();
    let m = d as f64 * (std::f64::consts::E * r).max(1.0);
    let v = 4.0 * m * m;
    BernsteinConstants { r, m, v1: v, v2: v }
}

/// Geometric sum `(1 − ρ^t)/(1 − ρ)`.
pub fn k_geometric(rho: f64, t: usize) -> f64 {
    if rho == 1.0 {
        t as f64
    } else {
        (1.0 - rho.powi(t as i32)) / (1.0 - rho)
    }
}

/// Which logarithm multiplies the concentration terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogVariant {
    /// `log(2/δ)`, matching the two-sided union bound.
    #[default]
    TwoOverDelta,
    /// `log(1/δ)`.
    OneOverDelta,
}

impl LogVariant {
    pub fn log_term(self, delta: f64) -> f64 {
        match self {
            LogVariant::TwoOverDelta => (2.0 / delta).ln(),
            LogVariant::OneOverDelta => (1.0 / delta).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub n: usize,
    pub delta: f64,
    pub tau: f64,
    pub rho: f64,
    pub m: f64,
    pub v1: f64,
    pub v2: f64,
}

/// `(1+τ)(√(2V₂L)/√n + √(2V₁L)/n + 2·M·K_{n−1}(ρ)·L/n)` with `L` the chosen log term.
pub fn generalization_bound(inputs: &BoundInputs, variant: LogVariant) -> Result<f64> {
    let BoundInputs { n, delta, tau, rho, m, v1, v2 } = *inputs;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::RhoOutOfRange(rho));
    }
    if n < 2 {
        return Err(Error::Config(format!("bound needs n >= 2, got {n}")));
    }
    let l = variant.log_term(delta);
    let nf = n as f64;
    let k = k_geometric(rho, n - 1);
    Ok((1.0 + tau) * ((2.0 * v2 * l).sqrt() / nf.sqrt() + (2.0 * v1 * l).sqrt() / nf + 2.0 * m * k * l / nf))
}

/// Stirling numbers of the second kind `S(k, j)` for `k, j ≤ k_max`.
fn stirling2(k_max: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; k_max + 1]; k_max + 1];
    s[0][0] = 1.0;
    for k in 1..=k_max {
        for j in 1..=k {
            s[k][j] = j as f64 * s[k - 1][j] + s[k - 1][j - 1];
        }
    }
    s
}

/// Exact `E[X^k]` for `X ~ Poisson(λ)` (Touchard polynomial).
pub fn touchard_moment(lambda: f64, k: usize) -> f64 {
    let s = stirling2(k);
    (0..=k).map(|j| s[k][j] * lambda.powi(j as i32)).sum()
}

/// `k!·max(1, λe)^k`.
pub fn moment_bound(lambda: f64, k: usize) -> f64 {
    let factorial: f64 = (1..=k).map(|j| j as f64).product();
    factorial * (lambda * std::f64::consts::E).max(1.0).powi(k as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRow {
    pub lambda: f64,
    pub k: usize,
    pub exact: f64,
    pub mc: f64,
    pub mc_sigma: f64,
    pub bound: f64,
    /// `bound − exact`; non-negative when the bound holds.
    pub margin: f64,
    pub bound_ok: bool,
    /// MC estimate within 4σ of the exact moment.
    pub mc_ok: bool,
}

const MOMENT_CHUNK: usize = 4096;

/// Moment table for one `λ`: exact, Monte-Carlo and bound for `k = 1..=k_max`.
pub fn poisson_moment_check(lambda: f64, k_max: usize, samples: usize, seed: u64) -> Result<Vec<MomentRow>> {
    if k_max == 0 {
        return Err(Error::Config("k_max must be at least 1".into()));
    }
    if samples < 10_000 {
        return Err(Error::Config(format!("moment check needs at least 10000 samples, got {samples}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    let chunks = samples.div_ceil(MOMENT_CHUNK);
    let draws: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = substream(seed, &[tag::MOMENT, lambda.to_bits(), c as u64]);
            let len = MOMENT_CHUNK.min(samples - c * MOMENT_CHUNK);
            (0..len).map(move |_| poisson::sample(lambda, &mut rng) as f64).collect::<Vec<_>>()
        })
        .collect();
    Ok((1..=k_max)
        .map(|k| {
            let powers: Vec<f64> = draws.iter().map(|x| x.powi(k as i32)).collect();
            let (mc, sd) = mean_sd(&powers);
            let mc_sigma = sd / (samples as f64).sqrt();
            let exact = touchard_moment(lambda, k);
            let bound = moment_bound(lambda, k);
            MomentRow {
                lambda,
                k,
                exact,
                mc,
                mc_sigma,
                bound,
                margin: bound - exact,
                bound_ok: exact <= bound && mc <= bound,
                mc_ok: (mc - exact).abs() <= 4.0 * mc_sigma,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersionMoment {
    pub k: usize,
    pub estimate: f64,
    /// `k!/2 · V · M^{k−2}`.
    pub bound: f64,
}

/// Moments of `E_{Y′}‖Y − Y′‖₁` for independent Poisson vectors `Y, Y′` with rates `lambdas`.
///
/// With the one-step rates this estimates the `H` dispersion moments; with the
/// initial rates it estimates the `G` moments of the first observation.
pub fn dispersion_moments(
    lambdas: &[f64],
    k_max: usize,
    outer: usize,
    inner: usize,
    constants: &BernsteinConstants,
    seed: u64,
) -> Vec<DispersionMoment> {
    let inner_draws: Vec<Vec<u64>> = {
        let mut rng = substream(seed, &[tag::MOMENT, 0]);
        (0..inner)
            .map(|_| lambdas.iter().map(|&l| poisson::sample(l, &mut rng)).collect())
            .collect()
    };
    let h: Vec<f64> = (0..outer)
        .into_par_iter()
        .map(|o| {
            let mut rng = substream(seed, &[tag::MOMENT, 1, o as u64]);
            let y: Vec<u64> = lambdas.iter().map(|&l| poisson::sample(l, &mut rng)).collect();
            let total: u64 = inner_draws
                .iter()
                .map(|y2| y.iter().zip(y2).map(|(a, b)| a.abs_diff(*b)).sum::<u64>())
                .sum();
            total as f64 / inner.max(1) as f64
        })
        .collect();
    (2..=k_max.max(2))
        .map(|k| {
            let factorial: f64 = (1..=k).map(|j| j as f64).product();
            DispersionMoment {
                k,
                estimate: h.iter().map(|v| v.powi(k as i32)).sum::<f64>() / h.len().max(1) as f64,
                bound: factorial / 2.0 * constants.v2 * constants.m.powi(k as i32 - 2),
            }
        })
        .collect()
}

/// One-step intensities from state `x` at week 1 of `spec`.
pub fn one_step_rates(spec: &GenerativeSpec, x: &[u64]) -> Result<Vec<f64>> {
    let s = spec.scaler.values();
    let covariates = spec.covariates.generate(spec.d, spec.n, spec.seed);
    let theta: Vec<&[f64]> = covariates.iter().map(|row| row[1].as_slice()).collect();
    Ok(transition(x, &theta, s[0], s[1], spec.phi.as_ref())?.1)
}

/// Rates of the first observation under `init`.
pub fn initial_rates(d: usize, init: InitialDistribution) -> Vec<f64> {
    match init {
        InitialDistribution::Zeros => vec![0.0; d],
        InitialDistribution::PoissonAt(rate) => vec![rate; d],
    }
}

/// How the risk-decay experiment produces its estimate of `φ`.
#[derive(Debug, Clone, PartialEq)]
pub enum DecayEstimator {
    /// Empirical risk minimizer over networks of the given hidden widths.
    Erm { hidden: Vec<usize>, train: TrainConfig },
    /// Uses the true weight function; excess risk is identically 0.
    Oracle,
}

impl DecayEstimator {
    /// ERM over zero-hidden-layer nets with L1 loss and Adam.
    pub fn default_erm(epochs: usize, lr: f64) -> Self {
        DecayEstimator::Erm {
            hidden: vec![],
            train: TrainConfig {
                loss: LossKind::L1,
                variant: Variant::Concurrent,
                optimizer: OptimizerKind::Adam {
                    lr,
                    beta1: 0.9,
                    beta2: 0.999,
                    eps: 1e-8,
                },
                epochs,
                alpha: Some(1.0),
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskDecayConfig {
    pub n_grid: Vec<usize>,
    pub replicas: usize,
    /// Length of the held-out trajectory on which risks are measured.
    pub test_len: usize,
    pub seed: u64,
    pub estimator: DecayEstimator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRow {
    pub n: usize,
    pub mean_excess: f64,
    pub se_excess: f64,
    pub oracle_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskDecayReport {
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of `ln(mean excess)` on `ln n`; NaN if any mean excess is `≤ 0`.
    pub slope: f64,
    /// Per-replica excess risks, `rows × replicas`.
    pub excess: Vec<Vec<f64>>,
}

/// `(1/(n−1)) Σ_{t≥1} ‖x_t − λ_t(φ)‖₁` along a simulated trajectory.
pub fn trajectory_risk(
    sales: &[Vec<u64>],
    covariates: &[Vec<Vec<f64>>],
    scale: &[f64],
    phi: &dyn WeightFunction,
) -> Result<f64> {
    let d = sales.len();
    let n = scale.len();
    let mut total = 0.0;
    for t in 1..n {
        let x_prev: Vec<u64> = (0..d).map(|i| sales[i][t - 1]).collect();
        let theta: Vec<&[f64]> = (0..d).map(|i| covariates[i][t].as_slice()).collect();
        let (_, lam) = transition(&x_prev, &theta, scale[t - 1], scale[t], phi)?;
        total += (0..d).map(|i| (sales[i][t] as f64 - lam[i]).abs()).sum::<f64>();
    }
    Ok(total / (n - 1) as f64)
}

struct Trajectory {
    sales: Vec<Vec<u64>>,
    covariates: Vec<Vec<Vec<f64>>>,
    scale: Vec<f64>,
}

fn simulate_trajectory(spec: &GenerativeSpec, n: usize, seed: u64) -> Result<(Trajectory, crate::simulator::SimulatedPanel)> {
    let scale = spec.scaler.values()[0];
    if spec.scaler.values().iter().any(|&v| v != scale) {
        return Err(Error::InvalidSpec("risk-decay experiment needs a constant scaler".into()));
    }
    let run = GenerativeSpec {
        n,
        scaler: Scaler::constant(scale, n)?,
        seed,
        ..spec.clone()
    };
    let sim = simulate(&run)?;
    let p = &sim.panel;
    let traj = Trajectory {
        sales: (0..p.d()).map(|i| (0..n).map(|t| p.sales(i, t)).collect()).collect(),
        covariates: (0..p.d()).map(|i| (0..n).map(|t| p.covariates(i, t).to_vec()).collect()).collect(),
        scale: vec![scale; n],
    };
    Ok((traj, sim))
}

fn fit_erm(sim: &crate::simulator::SimulatedPanel, hidden: &[usize], config: &TrainConfig, seed: u64) -> Result<WeightNet> {
    let panel = &sim.panel;
    let scaler = Scaler::from_values(panel.oracle_scaler().expect("simulated panels carry s").to_vec())?;
    let shares = market_shares(panel, &scaler)?;
    let features = FeatureSpec::for_panel(panel, 1, 1)?;
    let batches = build_batches(panel, &shares, scaler.values(), &features, 1..panel.n());
    let data = TrainData {
        train: batches.clone(),
        valid: batches,
    };
    let arch = Architecture::new(features.input_dim(), hidden.to_vec())?;
    let net = init_params(&arch, seed)?;
    let model = ShareModel::Concurrent(ConcurrentModel::new(net, 1.0, features)?);
    let config = TrainConfig { seed, ..config.clone() };
    let (model, _) = train(model, &data, &config)?;
    Ok(model.net().clone())
}

/// Excess test risk `R(φ̂) − R(φ*)` of the estimator for each training length.
pub fn risk_decay_experiment(spec: &GenerativeSpec, config: &RiskDecayConfig) -> Result<RiskDecayReport> {
    if config.n_grid.len() < 3 || config.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("n_grid must be increasing with at least 3 points".into()));
    }
    if config.replicas == 0 || config.test_len < 2 {
        return Err(Error::Config("risk decay needs replicas >= 1 and test_len >= 2".into()));
    }
    let (test, _) = simulate_trajectory(spec, config.test_len, child_seed(config.seed, &[tag::REPLICA, u64::MAX]))?;
    let oracle_risk = trajectory_risk(&test.sales, &test.covariates, &test.scale, spec.phi.as_ref())?;

    let jobs: Vec<(usize, usize)> = (0..config.n_grid.len())
        .flat_map(|g| (0..config.replicas).map(move |r| (g, r)))
        .collect();
    let excess: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, r)| {
            let n = config.n_grid[g];
            let seed = child_seed(config.seed, &[tag::REPLICA, n as u64, r as u64]);
            match &config.estimator {
                DecayEstimator::Oracle => Ok(0.0),
                DecayEstimator::Erm { hidden, train } => {
                    let (_, sim) = simulate_trajectory(spec, n, seed)?;
                    let phi = fit_erm(&sim, hidden, train, seed).map_err(|e| match e {
                        Error::DivergedLoss { .. } => Error::TrainingDiverged { n, replica: r },
                        other => other,
                    })?;
                    let risk = trajectory_risk(&test.sales, &test.covariates, &test.scale, &phi)?;
                    Ok(risk - oracle_risk)
                }
            }
        })
        .collect::<Result<Vec<f64>>>()?;

    let excess: Vec<Vec<f64>> = excess.chunks(config.replicas).map(<[f64]>::to_vec).collect();
    let rows: Vec<DecayRow> = config
        .n_grid
        .iter()
        .zip(&excess)
        .map(|(&n, e)| {
            let (mean, sd) = mean_sd(e);
            DecayRow {
                n,
                mean_excess: mean,
                se_excess: sd / (e.len() as f64).sqrt(),
                oracle_risk,
            }
        })
        .collect();
    let slope = if rows.iter().all(|r| r.mean_excess > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.mean_excess.ln()).collect();
        ols_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    Ok(RiskDecayReport { rows, slope, excess })
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Everything `check-theory` reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub lipschitz: LipschitzEstimate,
    pub contraction: ContractionCheck,
    pub empirical: Option<ContractionEstimate>,
    pub constants: BernsteinConstants,
    pub n: usize,
    pub delta: f64,
    pub log_variant: LogVariant,
    pub k: f64,
    /// `None` when `ρ ≥ 1` and the bound does not apply.
    pub bound_value: Option<f64>,
    pub moments: Vec<MomentRow>,
    pub h_moments: Vec<DispersionMoment>,
    pub g_moments: Vec<DispersionMoment>,
    pub decay: Option<RiskDecayReport>,
}

impl TheoryReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let c = &self.contraction;
        let b = &self.constants;
        let _ = writeln!(out, "tau_sampled = {}", self.lipschitz.sampled);
        let _ = writeln!(out, "tau = {}", c.tau);
        let _ = writeln!(out, "tau_s = {}", c.tau_s);
        let _ = writeln!(out, "rho = {}", c.rho);
        let _ = writeln!(out, "contraction_pass = {}", c.pass);
        if let Some(e) = &self.empirical {
            let _ = writeln!(out, "empirical_ratio = {} (sigma {}, within band: {})", e.worst.ratio, e.worst.sigma, e.within(c.rho));
        }
        let _ = writeln!(out, "R = {}", b.r);
        let _ = writeln!(out, "M = {}", b.m);
        let _ = writeln!(out, "V1 = {}", b.v1);
        let _ = writeln!(out, "V2 = {}", b.v2);
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "delta = {}", self.delta);
        let _ = writeln!(out, "log_variant = {:?}", self.log_variant);
        let _ = writeln!(out, "K = {}", self.k);
        match self.bound_value {
            Some(v) => {
                let _ = writeln!(out, "bound_value = {v}");
            }
            None => {
                let _ = writeln!(out, "bound_value = n/a (rho >= 1)");
            }
        }
        let moments_ok = self.moments.iter().all(|m| m.bound_ok && m.mc_ok);
        let _ = writeln!(out, "moment_check_pass = {moments_ok}");
        for h in &self.h_moments {
            let _ = writeln!(out, "H_moment k={} estimate={} bound={}", h.k, h.estimate, h.bound);
        }
        for g in &self.g_moments {
            let _ = writeln!(out, "G_moment k={} estimate={} bound={}", g.k, g.estimate, g.bound);
        }
        if let Some(d) = &self.decay {
            let _ = writeln!(out, "decay_slope = {}", d.slope);
        }
        out
    }
}

pub fn write_moment_table<W: Write>(rows: &[MomentRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["lambda", "k", "exact", "mc", "mc_sigma", "bound", "margin", "bound_ok", "mc_ok"])?;
    for r in rows {
        w.write_record([
            r.lambda.to_string(),
            r.k.to_string(),
            r.exact.to_string(),
            r.mc.to_string(),
            r.mc_sigma.to_string(),
            r.bound.to_string(),
            r.margin.to_string(),
            r.bound_ok.to_string(),
            r.mc_ok.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_decay_table<W: Write>(report: &RiskDecayReport, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["n", "mean_excess", "se_excess", "oracle_risk"])?;
    for r in &report.rows {
        w.write_record([
            r.n.to_string(),
            r.mean_excess.to_string(),
            r.se_excess.to_string(),
            r.oracle_risk.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::CovariateProcess;
    use std::sync::Arc;

    fn spec(phi: WeightNet, d: usize, n: usize, s: f64) -> GenerativeSpec {
        GenerativeSpec {
            phi: Arc::new(phi),
            scaler: Scaler::constant(s, n).unwrap(),
            covariates: CovariateProcess::IidUniform { lo: 0.0, hi: 1.0, p: 1 },
            d,
            n,
            init: InitialDistribution::Zeros,
            seed: 17,
        }
    }

    #[test]
    fn lipschitz_examples() {
        let thetas: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64 / 4.0]).collect();
        // pre-activation ≫ 0 everywhere: softplus' ≈ 1
        let net = WeightNet::affine_softplus(&[-1.5, 0.0], 40.0).unwrap();
        let est = estimate_lipschitz(&net, (0.0, 1.0), &thetas, 11).unwrap();
        assert!((est.sampled - 1.5).abs() < 1e-12);
        assert!(est.certified >= est.sampled);
        let flat = WeightNet::affine_softplus(&[0.0, 1.0], 0.0).unwrap();
        assert_eq!(estimate_lipschitz(&flat, (0.0, 1.0), &thetas, 5).unwrap().sampled, 0.0);
        assert!(matches!(estimate_lipschitz(&net, (0.0, 1.0), &[], 5), Err(Error::EmptyThetaSamples)));
    }

    #[test]
    fn certified_bound_dominates_samples_for_deep_nets() {
        let arch = Architecture::new(2, vec![8, 4]).unwrap();
        let thetas: Vec<Vec<f64>> = (0..7).map(|k| vec![k as f64 - 3.0]).collect();
        for seed in 0..20 {
            let net = init_params(&arch, seed).unwrap();
            let est = estimate_lipschitz(&net, (-2.0, 2.0), &thetas, 50).unwrap();
            assert!(est.certified >= est.sampled - 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn contraction_arithmetic() {
        let flat = Scaler::constant(100.0, 10).unwrap();
        let c = contraction_from(0.2, &flat);
        assert!((c.rho - 0.6).abs() < 1e-15 && c.pass && c.tau_s == 1.0);
        let c = contraction_from(0.4, &flat);
        assert!((c.rho - 1.2).abs() < 1e-15 && !c.pass);
        let doubling = Scaler::from_values((0..6).map(|t| 2f64.powi(t)).collect()).unwrap();
        let c = contraction_from(0.2, &doubling);
        assert!((c.rho - 1.2).abs() < 1e-15 && !c.pass);
        let net = WeightNet::affine_softplus(&[0.2, 1.0], 0.0).unwrap();
        assert_eq!(contraction_check(&net, &flat).rho, 3.0 * 0.2);
    }

    #[test]
    fn empirical_contraction_examples() {
        let s = spec(WeightNet::constant(Architecture::new(2, vec![]).unwrap(), 0.7).unwrap(), 4, 5, 200.0);
        let pairs = random_state_pairs(4, 3, 200, 1);
        let est = empirical_contraction(&s, &pairs, 200).unwrap();
        assert_eq!(est.worst.ratio, 0.0);
        let same = vec![(vec![1, 2, 3, 4], vec![1, 2, 3, 4])];
        assert!(matches!(empirical_contraction(&s, &same, 200), Err(Error::IdenticalStates(0))));
        assert!(empirical_contraction(&s, &pairs, 50).is_err());

        let s = spec(WeightNet::affine_softplus(&[0.2, 1.0], -0.5).unwrap(), 6, 5, 500.0);
        let pairs = random_state_pairs(6, 4, 500, 2);
        let est = empirical_contraction(&s, &pairs, 2000).unwrap();
        assert!(est.within(0.6), "{:?}", est.worst);
    }

    #[test]
    fn bernstein_examples() {
        let c = bernstein_constants(1, &Scaler::constant(1.0 / std::f64::consts::E, 3).unwrap());
        assert!((c.m - 1.0).abs() < 1e-12 && (c.v1 - 4.0).abs() < 1e-12);
        let c = bernstein_constants(10, &Scaler::constant(100.0, 3).unwrap());
        assert!((c.m - 2718.281828459045).abs() < 1e-9);
        assert!((c.v2 / 2.9556e7 - 1.0).abs() < 1e-3);
        let c20 = bernstein_constants(20, &Scaler::constant(100.0, 3).unwrap());
        assert!((c20.m - 2.0 * c.m).abs() < 1e-9);
    }

    #[test]
    fn bound_examples() {
        assert!((k_geometric(0.5, 3) - 1.75).abs() < 1e-15);
        let base = BoundInputs {
            n: 4,
            delta: (-1.0f64).exp(),
            tau: 0.0,
            rho: 0.0,
            m: 1.0,
            v1: 1.0,
            v2: 1.0,
        };
        let v = generalization_bound(&base, LogVariant::OneOverDelta).unwrap();
        assert!((v - (2f64.sqrt() / 2.0 + 2f64.sqrt() / 4.0 + 0.5)).abs() < 1e-12);
        assert!((v - 1.56066).abs() < 1e-5);
        let two = generalization_bound(&base, LogVariant::default()).unwrap();
        assert!(two > v);
        assert!(matches!(generalization_bound(&BoundInputs { delta: 1.5, ..base }, LogVariant::default()), Err(Error::InvalidDelta(_))));
        assert!(matches!(generalization_bound(&BoundInputs { rho: 1.0, ..base }, LogVariant::default()), Err(Error::RhoOutOfRange(_))));
    }

    #[test]
    fn bound_first_term_scales_by_root_two() {
        // V₁ = M = 0 isolates the √n term
        let b = |n| generalization_bound(&BoundInputs { n, delta: 0.05, tau: 0.3, rho: 0.5, m: 0.0, v1: 0.0, v2: 9.0 }, LogVariant::default()).unwrap();
        assert!((b(100) / b(200) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bound_monotonicity() {
        let base = BoundInputs { n: 50, delta: 0.1, tau: 0.2, rho: 0.6, m: 3.0, v1: 4.0, v2: 5.0 };
        let at = |i: BoundInputs| generalization_bound(&i, LogVariant::default()).unwrap();
        let b0 = at(base);
        for n in [51, 100, 1000] {
            assert!(at(BoundInputs { n, ..base }) < b0);
        }
        assert!(at(BoundInputs { delta: 0.01, ..base }) > b0);
        assert!(at(BoundInputs { v1: 8.0, ..base }) > b0);
        assert!(at(BoundInputs { v2: 8.0, ..base }) > b0);
        assert!(at(BoundInputs { m: 6.0, ..base }) > b0);
    }

    #[test]
    fn touchard_values() {
        assert_eq!(touchard_moment(1.0, 2), 2.0);
        assert_eq!(touchard_moment(1.0, 3), 5.0);
        // Bell numbers
        assert_eq!(touchard_moment(1.0, 6), 203.0);
        assert_eq!(touchard_moment(0.0, 4), 0.0);
        let l: f64 = 2.5;
        assert!((touchard_moment(l, 3) - (l.powi(3) + 3.0 * l * l + l)).abs() < 1e-12);
        assert!((moment_bound(1.0, 2) - 14.7781121978613).abs() < 1e-9);
        assert!((moment_bound(1.0, 3) - 120.51322153912).abs() < 1e-8);
    }

    #[test]
    fn moment_check_passes_and_degenerates_at_zero() {
        let rows = poisson_moment_check(1.0, 4, 20_000, 5).unwrap();
        assert!(rows.iter().all(|r| r.bound_ok && r.mc_ok), "{rows:?}");
        let zero = poisson_moment_check(0.0, 4, 10_000, 5).unwrap();
        assert!(zero.iter().all(|r| r.mc == 0.0 && r.exact == 0.0 && r.bound_ok && r.mc_ok));
        assert!(poisson_moment_check(1.0, 4, 100, 5).is_err());
    }

    #[test]
    fn dispersion_moments_respect_bound() {
        let c = bernstein_constants(3, &Scaler::constant(10.0, 2).unwrap());
        let rows = dispersion_moments(&[2.0, 3.0, 5.0], 4, 500, 200, &c, 9);
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.estimate > 0.0 && r.estimate <= r.bound));
        let zeros = dispersion_moments(&initial_rates(3, InitialDistribution::Zeros), 3, 50, 20, &c, 9);
        assert!(zeros.iter().all(|r| r.estimate == 0.0));
    }

    #[test]
    fn oracle_estimator_has_zero_excess() {
        let s = spec(WeightNet::affine_softplus(&[0.3, 1.0], -0.5).unwrap(), 3, 10, 100.0);
        let cfg = RiskDecayConfig {
            n_grid: vec![20, 40, 80],
            replicas: 2,
            test_len: 50,
            seed: 3,
            estimator: DecayEstimator::Oracle,
        };
        let rep = risk_decay_experiment(&s, &cfg).unwrap();
        assert!(rep.rows.iter().all(|r| r.mean_excess == 0.0));
        assert!(rep.slope.is_nan());
    }

    #[test]
    fn erm_decay_is_deterministic() {
        let s = spec(WeightNet::affine_softplus(&[0.3, 1.0], -0.5).unwrap(), 3, 10, 100.0);
        let cfg = RiskDecayConfig {
            n_grid: vec![20, 30, 40],
            replicas: 1,
            test_len: 60,
            seed: 4,
            estimator: DecayEstimator::default_erm(5, 1e-2),
        };
        let a = risk_decay_experiment(&s, &cfg).unwrap();
        let b = risk_decay_experiment(&s, &cfg).unwrap();
        assert_eq!(a.excess, b.excess);
        assert!(a.rows.iter().all(|r| r.mean_excess.is_finite()));
    }
}
