//! Observation operators: a deterministic element-wise map followed by
//! additive iid noise in every dimension.
//!
//! Random draws are consumed member-major, dimension-minor, so a given stream
//! always produces the same observations regardless of how the caller batches
//! them.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseDistribution {
    /// No perturbation; observations equal the mapped state.
    None,
    Gaussian { mean: f64, std: f64 },
    Exponential { mean: f64 },
    /// Equal-weight mixture of `N(-mode_offset, component_std^2)` and `N(+mode_offset, component_std^2)`.
    Bimodal { mode_offset: f64, component_std: f64 },
    /// Generalized Pareto with MATLAB `gprnd` parameter names `k`, `sigma`, `theta`.
    #[serde(rename = "pareto")]
    GeneralizedPareto { shape: f64, scale: f64, location: f64 },
}

impl NoiseDistribution {
    pub fn standard_gaussian() -> Self {
        NoiseDistribution::Gaussian { mean: 0.0, std: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        let ok = match *self {
            NoiseDistribution::None => true,
            NoiseDistribution::Gaussian { mean, std } => finite(mean) && finite(std) && std > 0.0,
            NoiseDistribution::Exponential { mean } => finite(mean) && mean > 0.0,
            NoiseDistribution::Bimodal {
                mode_offset,
                component_std,
            } => finite(mode_offset) && finite(component_std) && component_std > 0.0,
            NoiseDistribution::GeneralizedPareto { shape, scale, location } => {
                finite(shape) && finite(scale) && finite(location) && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid noise parameters: {self:?}")))
        }
    }

    /// Short label used in summary tables.
    pub fn label(&self) -> &'static str {
        match self {
            NoiseDistribution::None => "none",
            NoiseDistribution::Gaussian { .. } => "gaussian",
            NoiseDistribution::Exponential { .. } => "exponential",
            NoiseDistribution::Bimodal { .. } => "bimodal",
            NoiseDistribution::GeneralizedPareto { .. } => "pareto",
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, NoiseDistribution::None | NoiseDistribution::Gaussian { .. })
    }

    /// Variance of the distribution, if finite.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            NoiseDistribution::None => Some(0.0),
            NoiseDistribution::Gaussian { std, .. } => Some(std * std),
            NoiseDistribution::Exponential { mean } => Some(mean * mean),
            NoiseDistribution::Bimodal {
                mode_offset,
                component_std,
            } => Some(mode_offset * mode_offset + component_std * component_std),
            NoiseDistribution::GeneralizedPareto { shape, scale, .. } => {
                (shape < 0.5).then(|| scale * scale / ((1.0 - shape).powi(2) * (1.0 - 2.0 * shape)))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseDistribution::None => 0.0,
            NoiseDistribution::Gaussian { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
            NoiseDistribution::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }
            NoiseDistribution::Bimodal {
                mode_offset,
                component_std,
            } => {
                let centre = if rng.gen::<bool>() { mode_offset } else { -mode_offset };
                let z: f64 = StandardNormal.sample(rng);
                centre + component_std * z
            }
            NoiseDistribution::GeneralizedPareto { shape, scale, location } => loop {
                let u: f64 = rng.gen();
                // the quantile is unbounded at u = 1
                if u < 1.0 {
                    break pareto_quantile(shape, scale, location, u);
                }
            },
        }
    }
}

/// Quantile of the generalized Pareto distribution at `u` in `[0, 1)`.
pub fn pareto_quantile(shape: f64, scale: f64, location: f64, u: f64) -> f64 {
    if shape == 0.0 {
        location - scale * (-u).ln_1p()
    } else {
        location + scale * ((-u).ln_1p() * -shape).exp_m1() / shape
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMap {
    #[serde(alias = "linear_identity")]
    Linear,
    Cubic,
}

impl ObservationMap {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            ObservationMap::Linear => x,
            ObservationMap::Cubic => x * x * x,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ObservationMap::Linear => "linear",
            ObservationMap::Cubic => "cubic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    pub map: ObservationMap,
    pub noise: NoiseDistribution,
}

impl ObservationModel {
    pub fn new(map: ObservationMap, noise: NoiseDistribution) -> Result<Self> {
        noise.validate()?;
        Ok(Self { map, noise })
    }

    pub fn observe<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Vec<f64> {
        state
            .iter()
            .map(|&x| self.map.apply(x) + self.noise.sample(rng))
            .collect()
    }

    /// Row `j` is an independent observation of member `j`.
    pub fn perturbed_forecast_observations<R: Rng + ?Sized>(&self, ensemble: &Ensemble, rng: &mut R) -> DMatrix<f64> {
        let x = ensemble.matrix();
        let (n, d) = x.shape();
        let mut out = DMatrix::zeros(n, d);
        for j in 0..n {
            for k in 0..d {
                out[(j, k)] = self.map.apply(x[(j, k)]) + self.noise.sample(rng);
            }
        }
        out
    }
}

/// Observations gathered at one assimilation time.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub time: f64,
    pub reference: Vec<f64>,
    pub perturbed_forecast: DMatrix<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const PARETO: NoiseDistribution = NoiseDistribution::GeneralizedPareto {
        shape: 0.5,
        scale: 1.0,
        location: 2.0,
    };

    fn moments(xs: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let skew = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n / var.powf(1.5);
        (mean, var, skew)
    }

    #[test]
    fn pareto_quantile_values() {
        assert_eq!(pareto_quantile(0.5, 1.0, 2.0, 0.0), 2.0);
        // 2 + ((0.25)^-0.5 - 1) / 0.5 = 2 + 2
        assert!((pareto_quantile(0.5, 1.0, 2.0, 0.75) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn pareto_samples_never_fall_below_location() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert!((0..100_000).all(|_| PARETO.sample(&mut rng) >= 2.0));
    }

    #[test]
    fn exponential_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = NoiseDistribution::Exponential { mean: 1.0 };
        let xs: Vec<f64> = (0..1_000_000).map(|_| noise.sample(&mut rng)).collect();
        let (mean, _, _) = moments(&xs);
        assert!((0.99..=1.01).contains(&mean), "mean {mean}");
    }

    #[test]
    fn bimodal_is_symmetric_with_modes_at_plus_minus_five() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let noise = NoiseDistribution::Bimodal {
            mode_offset: 5.0,
            component_std: 1.0,
        };
        let xs: Vec<f64> = (0..1_000_000).map(|_| noise.sample(&mut rng)).collect();
        let (mean, var, skew) = moments(&xs);
        assert!((-0.02..=0.02).contains(&mean), "mean {mean}");
        assert!((var - 26.0).abs() < 0.2, "var {var}");
        assert!(skew.abs() < 0.01, "skew {skew}");

        // histogram with unit bins: peaks at the bins containing -5 and 5, trough at 0
        let mut bins = [0usize; 20];
        for x in &xs {
            let b = (x + 10.0).floor();
            if (0.0..20.0).contains(&b) {
                bins[b as usize] += 1;
            }
        }
        let count = |centre: f64| bins[(centre + 10.0).floor() as usize];
        assert!(count(-4.5) > 10 * count(0.5));
        assert!(count(5.5) > 10 * count(0.5));
        let left_peak = (0..10).max_by_key(|&i| bins[i]).unwrap() as f64 - 10.0;
        let right_peak = (10..20).max_by_key(|&i| bins[i]).unwrap() as f64 - 10.0;
        assert!(left_peak == -6.0 || left_peak == -5.0);
        assert!(right_peak == 4.0 || right_peak == 5.0);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(NoiseDistribution::Gaussian { mean: 0.0, std: 0.0 }.validate().is_err());
        assert!(NoiseDistribution::Exponential { mean: -1.0 }.validate().is_err());
        assert!(NoiseDistribution::GeneralizedPareto {
            shape: 0.5,
            scale: 0.0,
            location: 0.0
        }
        .validate()
        .is_err());
        assert!(ObservationModel::new(ObservationMap::Cubic, NoiseDistribution::Bimodal {
            mode_offset: 5.0,
            component_std: -1.0
        })
        .is_err());
    }

    #[test]
    fn noiseless_observation_is_the_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cubic = ObservationModel::new(ObservationMap::Cubic, NoiseDistribution::None).unwrap();
        assert_eq!(cubic.observe(&[2.0; 5], &mut rng), vec![8.0; 5]);
        let linear = ObservationModel::new(ObservationMap::Linear, NoiseDistribution::None).unwrap();
        let x = [1.5, -2.0, 3.25, 0.0];
        assert_eq!(linear.observe(&x, &mut rng), x.to_vec());
    }

    #[test]
    fn cubic_observation_noise_has_unit_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = ObservationModel::new(ObservationMap::Cubic, NoiseDistribution::standard_gaussian()).unwrap();
        let x = [1.3, -0.7, 2.0];
        let draws: Vec<Vec<f64>> = (0..100_000).map(|_| model.observe(&x, &mut rng)).collect();
        for k in 0..x.len() {
            let resid: Vec<f64> = draws.iter().map(|y| y[k] - x[k].powi(3)).collect();
            let (_, var, _) = moments(&resid);
            assert!((0.99..=1.01).contains(&var.sqrt()), "dim {k}: std {}", var.sqrt());
        }
    }

    #[test]
    fn noiseless_forecast_observations_map_each_member() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ens = Ensemble::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, -2.0]]).unwrap();
        let linear = ObservationModel::new(ObservationMap::Linear, NoiseDistribution::None).unwrap();
        assert_eq!(&linear.perturbed_forecast_observations(&ens, &mut rng), ens.matrix());
        let cubic = ObservationModel::new(ObservationMap::Cubic, NoiseDistribution::None).unwrap();
        assert_eq!(
            cubic.perturbed_forecast_observations(&ens, &mut rng),
            ens.matrix().map(|v| v * v * v)
        );
    }

    #[test]
    fn forecast_observation_covariance_equals_state_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 200_000;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| { let z: f64 = StandardNormal.sample(&mut rng); vec![2.0 * z] })
            .collect();
        let ens = Ensemble::from_rows(&rows).unwrap();
        let model = ObservationModel::new(ObservationMap::Linear, NoiseDistribution::standard_gaussian()).unwrap();
        let y = model.perturbed_forecast_observations(&ens, &mut rng);
        let x = ens.column(0);
        let mx = x.iter().sum::<f64>() / n as f64;
        let my = y.column(0).sum() / n as f64;
        let cov = x.iter().zip(y.column(0).iter()).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n as f64 - 1.0);
        let var = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((cov - var).abs() / var < 0.02, "cov {cov} var {var}");
    }

    #[test]
    fn same_seed_same_observations() {
        let model = ObservationModel::new(ObservationMap::Cubic, PARETO).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0];
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            (0..10).map(|_| model.observe(&x, &mut rng)).collect()
        };
        let b: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            (0..10).map(|_| model.observe(&x, &mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn noise_config_round_trips_through_toml() {
        let text = "kind = \"pareto\"\nshape = 0.5\nscale = 1.0\nlocation = 2.0\n";
        let parsed: NoiseDistribution = toml::from_str(text).unwrap();
        assert_eq!(parsed, PARETO);
        let bad = "kind = \"gaussian\"\nmean = 0.0\nstd = 1.0\nextra = 3\n";
        assert!(toml::from_str::<NoiseDistribution>(bad).is_err());
    }
}
