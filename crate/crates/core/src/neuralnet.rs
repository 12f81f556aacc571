//! Feed-forward weight network `φ`: ReLU hidden layers, a Softplus output,
//! exact reverse-mode gradients and a finite-difference checker.
//!
//! Parameters live in one flat vector. For each layer, in order from input to
//! output, the weight matrix is stored row-major (`out × in`) followed by the
//! `out` biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, tag};

pub const MAX_HIDDEN_LAYERS: usize = 4;
pub const MAX_LAYER_WIDTH: usize = 32;
pub const FORMAT_TAG: &str = "concnet-weightnet";
pub const FORMAT_VERSION: u32 = 1;

/// Numerically stable `ln(1 + e^z)`, floored at the smallest positive normal
/// so the output stays strictly positive where `e^z` underflows.
pub fn softplus(z: f64) -> f64 {
    (z.max(0.0) + (-z.abs()).exp().ln_1p()).max(f64::MIN_POSITIVE)
}

/// Derivative of Softplus (the logistic function).
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `softplus⁻¹(y) = ln(e^y − 1)` for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        let arch = Self { input_dim, hidden };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArchitecture("input dimension must be positive".into()));
        }
        if self.hidden.len() > MAX_HIDDEN_LAYERS {
            return Err(Error::InvalidArchitecture(format!(
                "{} hidden layers (at most {MAX_HIDDEN_LAYERS})",
                self.hidden.len()
            )));
        }
        if let Some(&w) = self.hidden.iter().find(|&&w| w == 0 || w > MAX_LAYER_WIDTH) {
            return Err(Error::InvalidArchitecture(format!(
                "layer width {w} outside 1..={MAX_LAYER_WIDTH}"
            )));
        }
        Ok(())
    }

    /// Layer sizes from input to the single output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden);
        dims.push(1);
        dims
    }

    pub fn param_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Per-feature affine map `(x − mean) / scale` applied before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Column mean and standard deviation; constant columns get scale 1.
    pub fn fit<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut count = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sum_sq = vec![0.0; dim];
        for row in rows {
            count += 1;
            for (k, &v) in row.iter().enumerate() {
                sum[k] += v;
                sum_sq[k] += v * v;
            }
        }
        if count == 0 {
            return Self::identity(dim);
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let scale = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let sd = (sq / n - m * m).max(0.0).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            input
                .iter()
                .zip(self.mean.iter().zip(&self.scale))
                .map(|(x, (m, s))| (x - m) / s),
        );
    }
}

/// Parameter gradient plus the gradient with respect to the raw inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightNet {
    arch: Architecture,
    params: Vec<f64>,
    normalizer: Normalizer,
}

/// Activations recorded during a forward pass.
struct Trace {
    /// `acts[0]` is the normalized input, `acts[l]` the post-ReLU output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of every layer, including the output.
    pre: Vec<Vec<f64>>,
}

impl WeightNet {
    pub fn from_parts(arch: Architecture, params: Vec<f64>, normalizer: Normalizer) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::InvalidArchitecture(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if normalizer.mean.len() != arch.input_dim
            || normalizer.scale.len() != arch.input_dim
            || normalizer.scale.iter().any(|s| !(*s > 0.0) || !s.is_finite())
        {
            return Err(Error::InvalidArchitecture("normalizer shape or scale invalid".into()));
        }
        Ok(Self {
            arch,
            params,
            normalizer,
        })
    }

    /// Zero-hidden-layer net `softplus(coeffs · x + bias)` with the identity normalizer.
    pub fn affine_softplus(coeffs: &[f64], bias: f64) -> Result<Self> {
        let arch = Architecture::new(coeffs.len(), vec![])?;
        let mut params = coeffs.to_vec();
        params.push(bias);
        Self::from_parts(arch, params, Normalizer::identity(coeffs.len()))
    }

    /// Net returning `value > 0` for every input.
    pub fn constant(arch: Architecture, value: f64) -> Result<Self> {
        let mut params = vec![0.0; arch.param_count()];
        *params.last_mut().expect("at least the output bias") = softplus_inverse(value);
        let dim = arch.input_dim;
        Self::from_parts(arch, params, Normalizer::identity(dim))
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) -> Result<()> {
        if normalizer.mean.len() != self.arch.input_dim
            || normalizer.scale.len() != self.arch.input_dim
            || normalizer.scale.iter().any(|s| !(*s > 0.0))
        {
            return Err(Error::InvalidArchitecture("normalizer shape or scale invalid".into()));
        }
        self.normalizer = normalizer;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// `(offset of weights, in, out)` for each layer.
    fn layers(&self) -> Vec<(usize, usize, usize)> {
        let mut offset = 0;
        self.arch
            .dims()
            .windows(2)
            .map(|w| {
                let layer = (offset, w[0], w[1]);
                offset += w[0] * w[1] + w[1];
                layer
            })
            .collect()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.arch.input_dim {
            return Err(Error::LengthMismatch {
                expected: self.arch.input_dim,
                got: input.len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    fn trace(&self, input: &[f64]) -> Trace {
        let layers = self.layers();
        let mut acts = Vec::with_capacity(layers.len());
        let mut pre = Vec::with_capacity(layers.len());
        let mut x = Vec::with_capacity(input.len());
        self.normalizer.apply(input, &mut x);
        acts.push(x);
        for (l, &(off, fan_in, fan_out)) in layers.iter().enumerate() {
            let x = &acts[l];
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let z: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    b[o] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
                })
                .collect();
            if l + 1 < layers.len() {
                acts.push(z.iter().map(|&v| v.max(0.0)).collect());
            }
            pre.push(z);
        }
        Trace { acts, pre }
    }

    /// `φ(input) = softplus(...)`, always `> 0` for finite inputs.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        self.check_input(input)?;
        Ok(self.forward_unchecked(input))
    }

    pub(crate) fn forward_unchecked(&self, input: &[f64]) -> f64 {
        let trace = self.trace(input);
        softplus(trace.pre.last().expect("output layer")[0])
    }

    /// Reverse-mode gradient of `upstream · φ(input)`. ReLU'(0) is taken as 0.
    pub fn backward(&self, input: &[f64], upstream: f64) -> Result<Gradient> {
        self.check_input(input)?;
        let mut params = vec![0.0; self.params.len()];
        let input_grad = self.backward_into(input, upstream, &mut params);
        Ok(Gradient {
            params,
            input: input_grad,
        })
    }

    /// Accumulates the parameter gradient into `acc`; returns the input gradient.
    pub(crate) fn backward_into(&self, input: &[f64], upstream: f64, acc: &mut [f64]) -> Vec<f64> {
        let trace = self.trace(input);
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut delta = vec![upstream * sigmoid(trace.pre[last][0])];
        for l in (0..layers.len()).rev() {
            let (off, fan_in, fan_out) = layers[l];
            let x = &trace.acts[l];
            for o in 0..fan_out {
                let g = delta[o];
                if g == 0.0 {
                    continue;
                }
                let row = off + o * fan_in;
                for (k, &xv) in x.iter().enumerate() {
                    acc[row + k] += g * xv;
                }
                acc[off + fan_in * fan_out + o] += g;
            }
            let w = &self.params[off..off + fan_in * fan_out];
            let mut next = vec![0.0; fan_in];
            for o in 0..fan_out {
                let g = delta[o];
                if g == 0.0 {
                    continue;
                }
                for (k, nv) in next.iter_mut().enumerate() {
                    *nv += g * w[o * fan_in + k];
                }
            }
            if l > 0 {
                for (k, nv) in next.iter_mut().enumerate() {
                    if trace.pre[l - 1][k] <= 0.0 {
                        *nv = 0.0;
                    }
                }
            }
            delta = next;
        }
        delta
            .iter()
            .zip(&self.normalizer.scale)
            .map(|(g, s)| g / s)
            .collect()
    }

    /// Smallest |pre-activation| over hidden units (∞ without hidden layers).
    pub fn min_hidden_preactivation(&self, input: &[f64]) -> f64 {
        let trace = self.trace(input);
        let hidden = trace.pre.len() - 1;
        trace.pre[..hidden]
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }

    /// Upper bound on `|∂φ/∂input[feature]|` from the product of per-layer
    /// operator 1-norms (ReLU and Softplus are 1-Lipschitz).
    pub fn lipschitz_norm_product(&self, feature: usize) -> f64 {
        let layers = self.layers();
        let mut bound = 1.0 / self.normalizer.scale[feature];
        for (l, &(off, fan_in, fan_out)) in layers.iter().enumerate() {
            let w = &self.params[off..off + fan_in * fan_out];
            let norm = if l == 0 {
                // only the column of the chosen feature moves
                (0..fan_out).map(|o| w[o * fan_in + feature].abs()).sum::<f64>()
            } else {
                (0..fan_in)
                    .map(|k| (0..fan_out).map(|o| w[o * fan_in + k].abs()).sum::<f64>())
                    .fold(0.0, f64::max)
            };
            bound *= norm;
        }
        bound
    }

    /// Tighter certified bound propagating entry-wise absolute weights.
    pub fn lipschitz_abs_path(&self, feature: usize) -> f64 {
        let layers = self.layers();
        let (off, fan_in, fan_out) = layers[0];
        let mut v: Vec<f64> = (0..fan_out)
            .map(|o| self.params[off + o * fan_in + feature].abs() / self.normalizer.scale[feature])
            .collect();
        for &(off, fan_in, fan_out) in &layers[1..] {
            v = (0..fan_out)
                .map(|o| {
                    (0..fan_in)
                        .map(|k| self.params[off + o * fan_in + k].abs() * v[k])
                        .sum()
                })
                .collect();
        }
        v[0]
    }

    /// Certified `sup |∂φ/∂input[feature]|`: the smaller of the two bounds.
    pub fn lipschitz_bound(&self, feature: usize) -> f64 {
        self.lipschitz_norm_product(feature)
            .min(self.lipschitz_abs_path(feature))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{FORMAT_TAG} {FORMAT_VERSION}\n"));
        out.push_str(&format!("input_dim {}\n", self.arch.input_dim));
        out.push_str(&format!("hidden{}\n", join_prefixed(&self.arch.hidden)));
        out.push_str(&format!("norm_mean{}\n", join_prefixed(&self.normalizer.mean)));
        out.push_str(&format!("norm_scale{}\n", join_prefixed(&self.normalizer.scale)));
        out.push_str(&format!("params{}\n", join_prefixed(&self.params)));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::ModelFormat("empty file".into()))?;
        let mut head = header.split_whitespace();
        if head.next() != Some(FORMAT_TAG) {
            return Err(Error::ModelFormat(format!("bad header `{header}`")));
        }
        let version: u32 = parse_token(head.next(), "version")?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let mut input_dim = None;
        let mut hidden = None;
        let mut mean = None;
        let mut scale = None;
        let mut params = None;
        for line in lines {
            let mut tokens = line.split_whitespace();
            let key = tokens.next().unwrap_or_default();
            let rest: Vec<&str> = tokens.collect();
            match key {
                "input_dim" => input_dim = Some(parse_token(rest.first().copied(), key)?),
                "hidden" => hidden = Some(parse_list::<usize>(&rest, key)?),
                "norm_mean" => mean = Some(parse_list::<f64>(&rest, key)?),
                "norm_scale" => scale = Some(parse_list::<f64>(&rest, key)?),
                "params" => params = Some(parse_list::<f64>(&rest, key)?),
                other => return Err(Error::ModelFormat(format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| Error::ModelFormat(format!("missing `{k}`"));
        let arch = Architecture::new(
            input_dim.ok_or_else(|| missing("input_dim"))?,
            hidden.ok_or_else(|| missing("hidden"))?,
        )?;
        let normalizer = Normalizer {
            mean: mean.ok_or_else(|| missing("norm_mean"))?,
            scale: scale.ok_or_else(|| missing("norm_scale"))?,
        };
        Self::from_parts(arch, params.ok_or_else(|| missing("params"))?, normalizer)
            .map_err(|e| Error::ModelFormat(e.to_string()))
    }
}

fn join_prefixed<T: std::fmt::Debug>(values: &[T]) -> String {
    values.iter().map(|v| format!(" {v:?}")).collect()
}

pub(crate) fn parse_token<T: std::str::FromStr>(token: Option<&str>, key: &str) -> Result<T> {
    token
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::ModelFormat(format!("bad value for `{key}`")))
}

fn parse_list<T: std::str::FromStr>(tokens: &[&str], key: &str) -> Result<Vec<T>> {
    tokens.iter().map(|t| parse_token(Some(t), key)).collect()
}

/// He-uniform weights for ReLU layers, Glorot-uniform for the output layer,
/// zero biases except the output bias, which starts at softplus⁻¹(1).
pub fn init_params(arch: &Architecture, seed: u64) -> Result<WeightNet> {
    arch.validate()?;
    let mut rng = substream(seed, &[tag::PARAMS]);
    let dims = arch.dims();
    let mut params = Vec::with_capacity(arch.param_count());
    let n_layers = dims.len() - 1;
    for (l, w) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let limit = if l + 1 < n_layers {
            (6.0 / fan_in as f64).sqrt()
        } else {
            (6.0 / (fan_in + fan_out) as f64).sqrt()
        };
        params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)));
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    *params.last_mut().expect("output bias") = softplus_inverse(1.0);
    WeightNet::from_parts(arch.clone(), params, Normalizer::identity(arch.input_dim))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckVerdict {
    Pass,
    Fail,
    /// Mismatch at an input where a hidden pre-activation sits within the
    /// perturbation reach of the ReLU kink.
    KinkProximity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub max_rel_error: f64,
    /// Index of the worst coordinate; parameters first, then inputs.
    pub worst_index: usize,
    pub near_kink: bool,
    pub verdict: CheckVerdict,
}

impl GradientCheckReport {
    pub fn passed(&self) -> bool {
        self.verdict == CheckVerdict::Pass
    }
}

/// Relative error with an absolute floor of 1e-8 on the denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `backward` with central differences on every parameter and input.
pub fn check_gradient(net: &WeightNet, input: &[f64], step: f64, tolerance: f64) -> Result<GradientCheckReport> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let analytic = net.backward(input, 1.0)?;
    let mut probe = net.clone();
    let mut numeric = Vec::with_capacity(net.param_count() + input.len());
    for k in 0..net.param_count() {
        let orig = probe.params[k];
        probe.params[k] = orig + step;
        let up = probe.forward_unchecked(input);
        probe.params[k] = orig - step;
        let down = probe.forward_unchecked(input);
        probe.params[k] = orig;
        numeric.push((up - down) / (2.0 * step));
    }
    let mut x = input.to_vec();
    for k in 0..input.len() {
        let orig = x[k];
        x[k] = orig + step;
        let up = net.forward_unchecked(&x);
        x[k] = orig - step;
        let down = net.forward_unchecked(&x);
        x[k] = orig;
        numeric.push((up - down) / (2.0 * step));
    }
    let (worst_index, max_rel_error) = analytic
        .params
        .iter()
        .chain(&analytic.input)
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .enumerate()
        .fold((0, 0.0), |best, (k, e)| if e > best.1 { (k, e) } else { best });
    let reach = step * 100.0 * (1.0 + input.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let near_kink = net.min_hidden_preactivation(input) <= reach;
    let verdict = if max_rel_error < tolerance {
        CheckVerdict::Pass
    } else if near_kink {
        CheckVerdict::KinkProximity
    } else {
        CheckVerdict::Fail
    };
    Ok(GradientCheckReport {
        max_rel_error,
        worst_index,
        near_kink,
        verdict,
    })
}
