//! One analysis step with each update on a small ensemble observed through a
//! cubic map.
//!
//! ```bash
//! cargo run --release --example analysis_updates
//! ```

use ensemble_da::filter::{cg_update, inflate, ns_update, vanilla_update, LocalizationMatrix};
use ensemble_da::metrics::{ensemble_crps, rmse};
use ensemble_da::observation::{NoiseDistribution, ObservationMap, ObservationModel};
use ensemble_da::Ensemble;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn run_example() -> ensemble_da::Result<Vec<(String, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, d) = (60, 8);
    let truth: Vec<f64> = (0..d).map(|k| 1.5 * ((k as f64) * 0.7).sin()).collect();
    let members = DMatrix::from_fn(n, d, |_, k| {
        let z: f64 = StandardNormal.sample(&mut rng);
        truth[k] + 0.4 + 0.6 * z
    });
    let forecast = Ensemble::new(members)?;
    let loc = LocalizationMatrix::gaussian(d, 2.0)?;

    let cubic = ObservationModel::new(ObservationMap::Cubic, NoiseDistribution::Gaussian { mean: 0.0, std: 0.5 })?;

    // vanilla: observations of the truth, identity map
    let inflated = inflate(&forecast, 1.02)?;
    let obs = DMatrix::from_fn(n, d, |_, k| {
        let z: f64 = StandardNormal.sample(&mut rng);
        truth[k] + 0.5 * z
    });
    let vanilla = vanilla_update(&inflated, &obs, &vec![0.25; d], 0.0)?;

    // cg and ns: the cubic map applied to each member, compared with one reference
    let reference = cubic.observe(&truth, &mut rng);
    let perturbed = cubic.perturbed_forecast_observations(&inflated, &mut rng);
    let cg = cg_update(&inflated, &perturbed, &reference, Some(&loc), 0.0)?;
    let perturbed = cubic.perturbed_forecast_observations(&forecast, &mut rng);
    let ns = ns_update(&forecast, &perturbed, &reference, Some(&loc), 1.02, 0.0)?;

    let mut out = vec![("forecast".to_string(), rmse(&forecast, &truth))];
    println!("{:>10}  {:>7}  {:>7}", "", "RMSE", "CRPS");
    println!("{:>10}  {:7.4}  {:7.4}", "forecast", rmse(&forecast, &truth), ensemble_crps(&forecast, &truth));
    for (name, ens) in [("vanilla", &vanilla), ("cg", &cg), ("ns", &ns)] {
        println!("{name:>10}  {:7.4}  {:7.4}", rmse(ens, &truth), ensemble_crps(ens, &truth));
        out.push((name.to_string(), rmse(ens, &truth)));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> ensemble_da::Result<()> {
    run_example().map(|_| ())
}
