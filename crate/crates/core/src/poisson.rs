//! Poisson sampling.
//!
//! Small intensities (λ < 30) use Knuth's multiplication method; larger ones use
//! Hörmann's PTRS transformed rejection with squeeze. Both consume only uniforms
//! from the caller's stream, so a fixed seed and a fixed λ sequence always give
//! the same draws.

use rand::Rng;

/// Switch point between the two samplers.
pub const PTRS_THRESHOLD: f64 = 30.0;

/// Draws one Poisson(λ) variate. `lambda` must be finite and non-negative.
pub fn sample<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    debug_assert!(lambda.is_finite() && lambda >= 0.0);
    if lambda <= 0.0 {
        0
    } else if lambda < PTRS_THRESHOLD {
        knuth(lambda, rng)
    } else {
        ptrs(lambda, rng)
    }
}

fn knuth<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let limit = (-lambda).exp();
    let mut k = 0u64;
    let mut p: f64 = rng.gen();
    while p > limit {
        k += 1;
        p *= rng.gen::<f64>();
    }
    k
}

fn ptrs<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// ln(k!): exact summation below 32, Stirling series above.
pub fn ln_factorial(k: u64) -> f64 {
    if k < 32 {
        (2..=k).map(|j| (j as f64).ln()).sum()
    } else {
        let x = k as f64 + 1.0;
        // ln Γ(x) with three correction terms.
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5))
    }
}

/// Coupled pair `(Y(λa), Y(λb))` sharing one unit-rate Poisson process.
///
/// Points of a Poisson(max λ) process carry uniform marks; a chain with
/// intensity λ keeps the points whose mark falls below λ / max λ. Each
/// marginal is exactly Poisson and `E|Ya − Yb| = |λa − λb|`.
pub fn sample_coupled<R: Rng + ?Sized>(lambda_a: f64, lambda_b: f64, rng: &mut R) -> (u64, u64) {
    let top = lambda_a.max(lambda_b);
    if top <= 0.0 {
        return (0, 0);
    }
    let points = sample(top, rng);
    let (cut_a, cut_b) = (lambda_a / top, lambda_b / top);
    let mut ya = 0;
    let mut yb = 0;
    for _ in 0..points {
        let mark: f64 = rng.gen();
        ya += (mark < cut_a) as u64;
        yb += (mark < cut_b) as u64;
    }
    (ya, yb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn moments(lambda: f64, draws: usize, seed: u64) -> (f64, f64) {
        let mut rng = substream(seed, &[]);
        let xs: Vec<f64> = (0..draws).map(|_| sample(lambda, &mut rng) as f64).collect();
        let mean = xs.iter().sum::<f64>() / draws as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        (mean, var)
    }

    #[test]
    fn zero_rate_is_zero() {
        let mut rng = substream(1, &[]);
        assert!((0..100).all(|_| sample(0.0, &mut rng) == 0));
    }

    #[test]
    fn mean_and_variance_both_regimes() {
        for &lambda in &[0.3, 4.0, 29.9, 30.0, 75.0, 2500.0] {
            let draws = 40_000;
            let (mean, var) = moments(lambda, draws, 11);
            let se = (lambda / draws as f64).sqrt();
            assert!((mean - lambda).abs() < 5.0 * se, "λ={lambda}: mean {mean}");
            assert!((var / lambda - 1.0).abs() < 0.05, "λ={lambda}: dispersion {}", var / lambda);
        }
    }

    #[test]
    fn ptrs_matches_pmf_near_mode() {
        // Empirical frequency of k=λ against the exact pmf.
        let lambda = 40.0;
        let draws = 200_000;
        let mut rng = substream(3, &[]);
        let hits = (0..draws).filter(|_| sample(lambda, &mut rng) == 40).count() as f64;
        let p = (-lambda + 40.0 * lambda.ln() - ln_factorial(40)).exp();
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((hits / draws as f64 - p).abs() < 5.0 * se);
    }

    #[test]
    fn ln_factorial_branches_agree() {
        let exact: f64 = (2..=40u64).map(|j| (j as f64).ln()).sum();
        assert!((ln_factorial(40) - exact).abs() < 1e-10);
        assert_eq!(ln_factorial(0), 0.0);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn coupled_marginals_and_distance() {
        let mut rng = substream(5, &[]);
        let reps = 50_000;
        let (mut sa, mut sb, mut dist) = (0.0, 0.0, 0.0);
        for _ in 0..reps {
            let (a, b) = sample_coupled(12.0, 9.0, &mut rng);
            sa += a as f64;
            sb += b as f64;
            dist += (a as f64 - b as f64).abs();
            assert!(b <= a);
        }
        let n = reps as f64;
        assert!((sa / n - 12.0).abs() < 0.1);
        assert!((sb / n - 9.0).abs() < 0.1);
        assert!((dist / n - 3.0).abs() < 0.05);
    }
}
