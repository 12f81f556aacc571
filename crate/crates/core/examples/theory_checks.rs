//! Contraction, concentration constants, the generalization bound and the
//! Poisson moment bounds for a small generative model.

use std::sync::Arc;

use concnet::data::Scaler;
use concnet::neuralnet::WeightNet;
use concnet::simulator::{CovariateProcess, GenerativeSpec, InitialDistribution};
use concnet::theory::{
    bernstein_constants, contraction_check, empirical_contraction, poisson_moment_check, random_state_pairs,
    generalization_bound, BoundInputs, LogVariant,
};

fn main() -> concnet::Result<()> {
    let (d, n) = (10, 500);
    let phi = WeightNet::affine_softplus(&[0.2, 1.0], -0.5)?;
    let spec = GenerativeSpec {
        phi: Arc::new(phi.clone()),
        scaler: Scaler::constant(1000.0, n)?,
        covariates: CovariateProcess::IidUniform { lo: 0.0, hi: 1.0, p: 1 },
        d,
        n,
        init: InitialDistribution::PoissonAt(100.0),
        seed: 9,
    };

    let c = contraction_check(&phi, &spec.scaler);
    println!("tau {:.4}, tau_s {:.3}, rho {:.4} ({})", c.tau, c.tau_s, c.rho, if c.pass { "contracting" } else { "not contracting" });

    let pairs = random_state_pairs(d, 8, 1000, 1);
    let empirical = empirical_contraction(&spec, &pairs, 10_000)?;
    println!("worst coupled ratio {:.4} (+/- {:.4})", empirical.worst.ratio, empirical.worst.sigma);

    let k = bernstein_constants(d, &spec.scaler);
    println!("M {:.1}, V1 = V2 = {:.1}", k.m, k.v1);
    for variant in [LogVariant::TwoOverDelta, LogVariant::OneOverDelta] {
        let bound = generalization_bound(
            &BoundInputs { n, delta: 0.05, tau: c.tau, rho: c.rho, m: k.m, v1: k.v1, v2: k.v2 },
            variant,
        )?;
        println!("bound at n = {n}, delta = 0.05 ({variant:?}): {bound:.3}");
    }

    println!("{:>6} {:>3} {:>12} {:>12} {:>12}", "lambda", "k", "exact", "monte carlo", "bound");
    for lambda in [0.5, 5.0] {
        for row in poisson_moment_check(lambda, 4, 100_000, 2)? {
            println!("{:>6} {:>3} {:>12.3} {:>12.3} {:>12.3}", row.lambda, row.k, row.exact, row.mc, row.bound);
        }
    }
    Ok(())
}
