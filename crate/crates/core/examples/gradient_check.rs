//! Finite-difference check of the weight network's backward pass on a few
//! random architectures and inputs.

use concnet::neuralnet::{check_gradient, init_params, Architecture};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> concnet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for hidden in [vec![], vec![8], vec![16, 8], vec![8, 8, 8]] {
        let arch = Architecture::new(3, hidden.clone())?;
        let net = init_params(&arch, rng.gen())?;
        let mut worst = 0.0_f64;
        let mut kinks = 0;
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let report = check_gradient(&net, &x, 1e-5, 1e-4)?;
            if report.near_kink {
                kinks += 1;
            } else {
                worst = worst.max(report.max_rel_error);
            }
        }
        println!(
            "hidden {hidden:?}: {} params, max relative error {worst:.2e}, {kinks} inputs skipped near a ReLU kink",
            net.param_count()
        );
    }
    Ok(())
}
