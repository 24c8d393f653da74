//! Ensemble analysis updates and the forecast/analysis cycle.
//!
//! Three variants share the same machinery:
//!
//! * **vanilla**: the stochastic EnKF with identity observation matrix,
//!   `x_a = x_f + P (P + R)^-1 (y_j - x_f)` where `y_j = T + e_j`.
//! * **cg**: the conditional-Gaussian update with localization,
//!   `x_a = x_f + (L o C_xy)(L o C_y)^-1 (y - y_j)` where `y_j = N(x_f)`.
//! * **ns**: the conditional-Gaussian update applied in a per-dimension
//!   normal-score latent space, followed by the inverse transform.

use std::fmt;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use crate::ensemble::Ensemble;
use crate::ensemble::column_means;
use crate::error::{Error, Result};
use crate::metrics::{self, CycleMetrics, MetricSeries};
use crate::model::{Lorenz96, Rk4Workspace, StateVector, Trajectory};
use crate::observation::{ObservationMap, ObservationModel};
use crate::parallel;
use crate::transform::{BandwidthRule, NormalScoreMap};

/// Relative diagonal jitter tried, in order, when a Cholesky factorization fails.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Ensemble-mean RMSE above which a cycle counts towards divergence.
pub const DIVERGENCE_RMSE: f64 = 1e3;

/// Consecutive cycles above [`DIVERGENCE_RMSE`] that declare divergence.
pub const DIVERGENCE_PATIENCE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterVariant {
    Vanilla,
    Cg,
    Ns,
}

impl FilterVariant {
    pub const ALL: [FilterVariant; 3] = [FilterVariant::Cg, FilterVariant::Ns, FilterVariant::Vanilla];

    pub fn label(&self) -> &'static str {
        match self {
            FilterVariant::Vanilla => "V-EnKF",
            FilterVariant::Cg => "CG-EnKF",
            FilterVariant::Ns => "NS-EnKF",
        }
    }

    /// Row order used in summary tables.
    pub fn table_rank(&self) -> usize {
        match self {
            FilterVariant::Cg => 0,
            FilterVariant::Ns => 1,
            FilterVariant::Vanilla => 2,
        }
    }
}

impl fmt::Display for FilterVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterVariant::Vanilla => "vanilla",
            FilterVariant::Cg => "cg",
            FilterVariant::Ns => "ns",
        })
    }
}

impl std::str::FromStr for FilterVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" | "v-enkf" | "enkf" => Ok(FilterVariant::Vanilla),
            "cg" | "cg-enkf" => Ok(FilterVariant::Cg),
            "ns" | "ns-enkf" => Ok(FilterVariant::Ns),
            other => Err(Error::Config(format!("unknown filter variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub variant: FilterVariant,
    pub ensemble_size: usize,
    /// Multiplicative inflation of forecast anomalies, `>= 1`.
    pub inflation: f64,
    pub localization_radius: f64,
    /// Diagonal of `R` used by the vanilla update (same variance in every dimension).
    pub obs_error_variance: f64,
    /// Absolute diagonal regularization added before every SPD solve.
    pub jitter: f64,
    /// Assimilate every `obs_interval` model steps.
    pub obs_interval: usize,
    /// Permit the vanilla update with a nonlinear map or non-Gaussian noise.
    pub allow_misspecified: bool,
}

impl FilterConfig {
    pub fn new(variant: FilterVariant) -> Self {
        Self {
            variant,
            ensemble_size: 100,
            inflation: if variant == FilterVariant::Ns { 1.05 } else { 1.0 },
            localization_radius: 1.0,
            obs_error_variance: 1.0,
            jitter: 0.0,
            obs_interval: 1,
            allow_misspecified: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "ensemble_size must be at least 2, got {}",
                self.ensemble_size
            )));
        }
        if !(self.inflation >= 1.0 && self.inflation.is_finite()) {
            return Err(Error::InvalidParameter(format!("inflation must be >= 1, got {}", self.inflation)));
        }
        if !(self.localization_radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "localization_radius must be positive, got {}",
                self.localization_radius
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::InvalidParameter(format!("jitter must be >= 0, got {}", self.jitter)));
        }
        if self.obs_interval == 0 {
            return Err(Error::InvalidParameter("obs_interval must be at least 1".into()));
        }
        if self.variant == FilterVariant::Vanilla && !(self.obs_error_variance > 0.0 && self.obs_error_variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "obs_error_variance must be positive for the vanilla filter, got {}",
                self.obs_error_variance
            )));
        }
        Ok(())
    }

    /// Checks that the variant is meaningful for `obs`.
    pub fn validate_for(&self, obs: &ObservationModel) -> Result<()> {
        self.validate()?;
        if self.variant == FilterVariant::Vanilla
            && !self.allow_misspecified
            && (obs.map != ObservationMap::Linear || !obs.noise.is_gaussian())
        {
            return Err(Error::Config(format!(
                "the vanilla filter assumes linear observations with Gaussian noise (got {} map, {} noise); \
                 pass --allow-misspecified to run it anyway",
                obs.map.label(),
                obs.noise.label()
            )));
        }
        Ok(())
    }
}

/// Distance-based damping of sample covariances on a cyclic domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationMatrix {
    entries: DMatrix<f64>,
}

impl LocalizationMatrix {
    /// `C_ij = exp(-(d_ij / radius)^2 / 2)` with cyclic distance `d_ij = min(|i-j|, d - |i-j|)`.
    pub fn gaussian(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("localization dimension must be positive".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("localization radius must be positive, got {radius}")));
        }
        let entries = DMatrix::from_fn(dim, dim, |i, j| {
            let gap = i.abs_diff(j);
            let dist = gap.min(dim - gap) as f64;
            (-0.5 * (dist / radius).powi(2)).exp()
        });
        Ok(Self { entries })
    }

    /// No localization.
    pub fn ones(dim: usize) -> Self {
        Self {
            entries: DMatrix::from_element(dim, dim, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    fn apply(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        self.entries.component_mul(cov)
    }
}

/// Cross-covariance of the rows of `a` (n by p) and `b` (n by q), normalized by `n - 1`.
pub fn sample_cov(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "sample_cov needs the same number of rows");
    let n = a.nrows();
    assert!(n >= 2, "sample_cov needs at least two rows");
    let da = anomalies(a);
    let db = anomalies(b);
    da.tr_mul(&db) / (n as f64 - 1.0)
}

fn anomalies(m: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(m);
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, k| m[(i, k)] - means[k])
}

fn inflate_rows(rows: &DMatrix<f64>, r: f64) -> DMatrix<f64> {
    if r == 1.0 {
        return rows.clone();
    }
    let means = column_means(rows);
    DMatrix::from_fn(rows.nrows(), rows.ncols(), |i, k| means[k] + r * (rows[(i, k)] - means[k]))
}

/// Scales every member's deviation from the ensemble mean by `r`.
pub fn inflate(ensemble: &Ensemble, r: f64) -> Result<Ensemble> {
    if !(r >= 1.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("inflation must be >= 1, got {r}")));
    }
    Ok(Ensemble::from_matrix_unchecked(inflate_rows(ensemble.matrix(), r)))
}

/// Cholesky factor of `m + jitter*I`, escalating through [`JITTER_LADDER`].
fn factor_spd(m: &DMatrix<f64>, jitter: f64) -> Result<Cholesky<f64, Dyn>> {
    let d = m.nrows();
    let mean_diag = m.diagonal().sum() / d as f64;
    let scale = if mean_diag > 0.0 && mean_diag.is_finite() { mean_diag } else { 1.0 };
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularInnovationCovariance);
    }
    for rel in JITTER_LADDER {
        let mut reg = m.clone();
        let add = jitter + rel * scale;
        if add > 0.0 {
            for i in 0..d {
                reg[(i, i)] += add;
            }
        }
        if let Some(chol) = Cholesky::new(reg) {
            return Ok(chol);
        }
    }
    Err(Error::SingularInnovationCovariance)
}

/// Rows of the result are `gain * innovations_j` with `gain = cross * cov^-1`.
fn apply_gain(cross: &DMatrix<f64>, cov: &DMatrix<f64>, innovations: &DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>> {
    let chol = factor_spd(cov, jitter)?;
    // cov^-1 * D^T, one column per member
    let weights = chol.solve(&innovations.transpose());
    Ok((cross * weights).transpose())
}

fn check_shapes(forecast: &DMatrix<f64>, obs: &DMatrix<f64>) -> Result<()> {
    if forecast.shape() != obs.shape() {
        return Err(Error::InvalidDimension(format!(
            "observation ensemble is {:?} but forecast is {:?}",
            obs.shape(),
            forecast.shape()
        )));
    }
    Ok(())
}

/// Stochastic EnKF analysis with `H = I` and diagonal `R`.
///
/// `obs_ensemble` row `j` is the perturbed observation `y_j` paired with member `j`.
pub fn vanilla_update(forecast: &Ensemble, obs_ensemble: &DMatrix<f64>, obs_error_variance: &[f64], jitter: f64) -> Result<Ensemble> {
    let x = forecast.matrix();
    check_shapes(x, obs_ensemble)?;
    if obs_error_variance.len() != forecast.dim() {
        return Err(Error::InvalidDimension(format!(
            "R has {} entries for a {}-dimensional state",
            obs_error_variance.len(),
            forecast.dim()
        )));
    }
    if obs_error_variance.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter("R entries must be positive".into()));
    }
    let p = sample_cov(x, x);
    let mut innovation_cov = p.clone();
    for (i, r) in obs_error_variance.iter().enumerate() {
        innovation_cov[(i, i)] += r;
    }
    let innovations = obs_ensemble - x;
    let increments = apply_gain(&p, &innovation_cov, &innovations, jitter)?;
    Ok(Ensemble::from_matrix_unchecked(x + increments))
}

fn cg_update_rows(
    x: &DMatrix<f64>,
    obs_ensemble: &DMatrix<f64>,
    reference: &[f64],
    localization: Option<&LocalizationMatrix>,
    jitter: f64,
) -> Result<DMatrix<f64>> {
    check_shapes(x, obs_ensemble)?;
    let (n, d) = x.shape();
    if reference.len() != d {
        return Err(Error::InvalidDimension(format!(
            "reference observation has {} entries for a {d}-dimensional state",
            reference.len()
        )));
    }
    if let Some(l) = localization {
        if l.dim() != d {
            return Err(Error::InvalidDimension(format!(
                "localization matrix is {0}x{0} for a {d}-dimensional state",
                l.dim()
            )));
        }
    }
    let innovations = DMatrix::from_fn(n, d, |j, k| reference[k] - obs_ensemble[(j, k)]);
    if innovations.iter().all(|&v| v == 0.0) {
        return Ok(x.clone());
    }
    let mut cross = sample_cov(x, obs_ensemble);
    let mut cov = sample_cov(obs_ensemble, obs_ensemble);
    if let Some(l) = localization {
        cross = l.apply(&cross);
        cov = l.apply(&cov);
    }
    let increments = apply_gain(&cross, &cov, &innovations, jitter)?;
    Ok(x + increments)
}

/// Conditional-Gaussian analysis `x_j + (L o C_xy)(L o C_y)^-1 (y - y_j)`.
///
/// With `localization = None` the covariances are used as they are.
pub fn cg_update(
    forecast: &Ensemble,
    obs_ensemble: &DMatrix<f64>,
    reference: &[f64],
    localization: Option<&LocalizationMatrix>,
    jitter: f64,
) -> Result<Ensemble> {
    cg_update_rows(forecast.matrix(), obs_ensemble, reference, localization, jitter).map(Ensemble::from_matrix_unchecked)
}

/// Normal-score analysis given already-drawn observations.
///
/// Fits `Psi_x` on the forecast and `Psi_y` on the pooled `{y_j} + {y}`, inflates
/// the latent forecast about its latent mean, applies the localized
/// conditional-Gaussian update in latent space and maps the result back.
pub fn ns_update(
    forecast: &Ensemble,
    obs_ensemble: &DMatrix<f64>,
    reference: &[f64],
    localization: Option<&LocalizationMatrix>,
    inflation: f64,
    jitter: f64,
) -> Result<Ensemble> {
    let x = forecast.matrix();
    check_shapes(x, obs_ensemble)?;
    let (n, d) = x.shape();
    if reference.len() != d {
        return Err(Error::InvalidDimension(format!(
            "reference observation has {} entries for a {d}-dimensional state",
            reference.len()
        )));
    }

    let state_map = NormalScoreMap::fit_columns(x, BandwidthRule::Silverman)?;
    let pooled: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let mut col: Vec<f64> = obs_ensemble.column(k).iter().copied().collect();
            col.push(reference[k]);
            col
        })
        .collect();
    let obs_map = NormalScoreMap::fit(&pooled, BandwidthRule::Silverman)?;

    let latent_x = inflate_rows(&state_map.forward_rows(x), inflation);
    let latent_obs = obs_map.forward_rows(obs_ensemble);
    let latent_ref = obs_map.forward(reference);
    debug_assert_eq!(latent_obs.nrows(), n);

    let latent_analysis = cg_update_rows(&latent_x, &latent_obs, &latent_ref, localization, jitter)?;
    Ok(Ensemble::from_matrix_unchecked(state_map.inverse_rows(&latent_analysis)))
}

/// One complete NS-EnKF analysis: draws `y = N(truth)` and `y_j = N(x_j)`, then [`ns_update`].
pub fn ns_enkf_step<R: Rng + ?Sized>(
    forecast: &Ensemble,
    obs_model: &ObservationModel,
    truth: &StateVector,
    cfg: &FilterConfig,
    rng: &mut R,
) -> Result<Ensemble> {
    let localization = LocalizationMatrix::gaussian(forecast.dim(), cfg.localization_radius)?;
    let reference = obs_model.observe(truth.as_slice(), rng);
    let obs = obs_model.perturbed_forecast_observations(forecast, rng);
    ns_update(forecast, &obs, &reference, Some(&localization), cfg.inflation, cfg.jitter)
}

/// Random streams consumed by the cycle loop.
///
/// The reference observation of the truth and the per-member observation noise
/// come from separate streams so that changing one does not shift the other.
#[derive(Debug, Clone)]
pub struct ObservationStreams<R> {
    pub reference: R,
    pub members: R,
}

/// Everything recorded by [`run_filter`].
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub forecast_means: Vec<Vec<f64>>,
    pub analysis_means: Vec<Vec<f64>>,
    pub metrics: MetricSeries,
    pub final_ensemble: Ensemble,
}

impl FilterRun {
    pub fn cycles(&self) -> usize {
        self.metrics.cycles.len()
    }
}

struct CycleState {
    ensemble: DMatrix<f64>,
    forecast_means: Vec<Vec<f64>>,
    analysis_means: Vec<Vec<f64>>,
    cycles: Vec<CycleMetrics>,
    started: Instant,
}

impl CycleState {
    fn finish(self) -> FilterRun {
        FilterRun {
            forecast_means: self.forecast_means,
            analysis_means: self.analysis_means,
            metrics: MetricSeries::new(self.cycles, self.started.elapsed().as_secs_f64()),
            final_ensemble: Ensemble::from_matrix_unchecked(self.ensemble),
        }
    }

    fn diverged(self, cycle: usize) -> Error {
        Error::Diverged {
            cycle,
            run: Box::new(self.finish()),
        }
    }
}

/// Runs the forecast/analysis cycle over `truth`.
///
/// `truth.state(0)` is the time of `initial`; cycle `k` propagates every member
/// from `truth.times()[k]` to `truth.times()[k + 1]`, records forecast metrics,
/// then (on assimilation cycles) inflates and applies the variant's update.
/// Non-finite members, a failed solve, or an ensemble-mean RMSE above
/// [`DIVERGENCE_RMSE`] for [`DIVERGENCE_PATIENCE`] consecutive cycles end the
/// run with [`Error::Diverged`], which carries the cycles recorded so far.
pub fn run_filter<R: Rng>(
    truth: &Trajectory,
    model: &Lorenz96,
    cfg: &FilterConfig,
    obs_model: &ObservationModel,
    initial: &Ensemble,
    streams: &mut ObservationStreams<R>,
) -> Result<FilterRun> {
    cfg.validate_for(obs_model)?;
    if truth.len() < 2 {
        return Err(Error::InvalidParameter("truth must cover at least one cycle".into()));
    }
    let d = truth.dim();
    if initial.dim() != d {
        return Err(Error::InvalidDimension(format!(
            "initial ensemble has dimension {} but truth has {d}",
            initial.dim()
        )));
    }
    let n = initial.size();
    let localization = LocalizationMatrix::gaussian(d, cfg.localization_radius)?;
    let obs_error = vec![cfg.obs_error_variance; d];
    let n_cycles = truth.len() - 1;

    let mut state = CycleState {
        ensemble: initial.matrix().clone(),
        forecast_means: Vec::with_capacity(n_cycles),
        analysis_means: Vec::with_capacity(n_cycles),
        cycles: Vec::with_capacity(n_cycles),
        started: Instant::now(),
    };
    let mut over_threshold = 0usize;

    for cycle in 0..n_cycles {
        let dt = truth.times()[cycle + 1] - truth.times()[cycle];
        let target = truth.state(cycle + 1);

        // forecast
        let ens = &state.ensemble;
        let propagated = parallel::map_range(n, |j| {
            let mut x: Vec<f64> = ens.row(j).iter().copied().collect();
            let mut work = Rk4Workspace::default();
            model.rk4_in_place(&mut x, dt, &mut work).then_some(x)
        });
        let Some(rows) = propagated.into_iter().collect::<Option<Vec<_>>>() else {
            return Err(state.diverged(cycle));
        };
        let forecast = Ensemble::from_matrix_unchecked(DMatrix::from_fn(n, d, |j, k| rows[j][k]));

        // analysis
        let analysis = if cycle % cfg.obs_interval == 0 {
            let updated = match cfg.variant {
                FilterVariant::Vanilla => {
                    let inflated = inflate(&forecast, cfg.inflation)?;
                    let obs = DMatrix::from_fn(n, d, |_, _| 0.0);
                    let obs = fill_rows(obs, |_| obs_model.observe(target.as_slice(), &mut streams.members));
                    vanilla_update(&inflated, &obs, &obs_error, cfg.jitter)
                }
                FilterVariant::Cg => {
                    let inflated = inflate(&forecast, cfg.inflation)?;
                    let reference = obs_model.observe(target.as_slice(), &mut streams.reference);
                    let obs = obs_model.perturbed_forecast_observations(&inflated, &mut streams.members);
                    cg_update(&inflated, &obs, &reference, Some(&localization), cfg.jitter)
                }
                FilterVariant::Ns => {
                    let reference = obs_model.observe(target.as_slice(), &mut streams.reference);
                    let obs = obs_model.perturbed_forecast_observations(&forecast, &mut streams.members);
                    ns_update(&forecast, &obs, &reference, Some(&localization), cfg.inflation, cfg.jitter)
                }
            };
            match updated {
                Ok(a) if a.is_finite() => a,
                Ok(_) | Err(Error::SingularInnovationCovariance) => return Err(state.diverged(cycle)),
                Err(e) => return Err(e),
            }
        } else {
            forecast.clone()
        };

        let fmean = forecast.mean();
        let amean = analysis.mean();
        let armse = metrics::rmse_of_mean(&amean, target.as_slice());
        if armse > DIVERGENCE_RMSE {
            over_threshold += 1;
            if over_threshold >= DIVERGENCE_PATIENCE {
                return Err(state.diverged(cycle));
            }
        } else {
            over_threshold = 0;
        }

        state.cycles.push(CycleMetrics {
            cycle,
            time: truth.times()[cycle + 1],
            frmse: metrics::rmse_of_mean(&fmean, target.as_slice()),
            armse,
            fcrps: metrics::ensemble_crps(&forecast, target.as_slice()),
            acrps: metrics::ensemble_crps(&analysis, target.as_slice()),
        });
        state.forecast_means.push(fmean);
        state.analysis_means.push(amean);
        state.ensemble = analysis.into_matrix();
    }

    Ok(state.finish())
}

fn fill_rows(mut m: DMatrix<f64>, mut row: impl FnMut(usize) -> Vec<f64>) -> DMatrix<f64> {
    for j in 0..m.nrows() {
        let values = row(j);
        for (k, v) in values.into_iter().enumerate() {
            m[(j, k)] = v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::NoiseDistribution;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn localization_entries() {
        let l = LocalizationMatrix::gaussian(40, 1.0).unwrap();
        for i in 0..40 {
            assert_eq!(l.get(i, i), 1.0);
        }
        // dimensions 1 and 40 are neighbours on the ring
        assert!((l.get(0, 39) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((l.get(0, 39) - 0.60653).abs() < 1e-5);
        assert_eq!(l.get(3, 17), l.get(17, 3));
        let wide = LocalizationMatrix::gaussian(40, 1e6).unwrap();
        assert!(wide.entries().iter().all(|&c| c >= 1.0 - 1e-6));
        assert!(LocalizationMatrix::gaussian(5, 0.0).is_err());
    }

    #[test]
    fn localization_depends_only_on_cyclic_distance() {
        let l = LocalizationMatrix::gaussian(12, 2.5).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(l.get(i, j), l.get((i + 5) % 12, (j + 5) % 12));
            }
        }
    }

    #[test]
    fn inflation_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ens = Ensemble::new(gaussian_rows(&mut rng, 30, 4, 2.0)).unwrap();
        assert_eq!(inflate(&ens, 1.0).unwrap(), ens);
        let inflated = inflate(&ens, 1.05).unwrap();
        for (a, b) in ens.mean().iter().zip(inflated.mean()) {
            assert!((a - b).abs() < 1e-14);
        }
        let std = |e: &Ensemble, k: usize| sample_cov(e.matrix(), e.matrix())[(k, k)].sqrt();
        for k in 0..4 {
            assert!((std(&inflated, k) / std(&ens, k) - 1.05).abs() < 1e-12);
        }
        assert!(inflate(&ens, 0.9).is_err());
    }

    #[test]
    fn sample_cov_cases() {
        let constant = DMatrix::from_element(5, 3, 2.5);
        assert_eq!(sample_cov(&constant, &constant), DMatrix::zeros(3, 3));
        let a = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        assert_eq!(sample_cov(&a, &a)[(0, 0)], 2.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian_rows(&mut rng, 10, 3, 1.0);
        let y = gaussian_rows(&mut rng, 10, 2, 1.0);
        assert!(max_abs_diff(&sample_cov(&x, &y), &sample_cov(&y, &x).transpose()) < 1e-15);
    }

    #[test]
    fn vanilla_huge_r_leaves_forecast_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ens = Ensemble::new(gaussian_rows(&mut rng, 20, 3, 1.0)).unwrap();
        let obs = gaussian_rows(&mut rng, 20, 3, 1.0);
        let out = vanilla_update(&ens, &obs, &[1e12; 3], 0.0).unwrap();
        assert!(max_abs_diff(out.matrix(), ens.matrix()) <= 1e-6 * 5.0);
    }

    #[test]
    fn vanilla_scalar_matches_hand_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian_rows(&mut rng, 7, 1, 1.5);
        let y = gaussian_rows(&mut rng, 7, 1, 1.0);
        let r = 0.49;
        let out = vanilla_update(&Ensemble::new(x.clone()).unwrap(), &y, &[r], 0.0).unwrap();
        let vals: Vec<f64> = x.iter().copied().collect();
        let mean = vals.iter().sum::<f64>() / 7.0;
        let p = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        for j in 0..7 {
            let expected = x[j] + p / (p + r) * (y[j] - x[j]);
            assert!((out.matrix()[j] - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn vanilla_analysis_contracts_spread_on_average() {
        let mut ratio = 0.0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ens = Ensemble::new(gaussian_rows(&mut rng, 30, 3, 1.0)).unwrap();
            let obs = gaussian_rows(&mut rng, 30, 3, 1.0);
            let out = vanilla_update(&ens, &obs, &[1.0; 3], 0.0).unwrap();
            let tr = |e: &Ensemble| sample_cov(e.matrix(), e.matrix()).trace();
            ratio += tr(&out) / tr(&ens);
        }
        assert!(ratio / 100.0 < 1.0, "mean trace ratio {}", ratio / 100.0);
    }

    #[test]
    fn cg_scalar_matches_hand_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gaussian_rows(&mut rng, 9, 1, 2.0);
        let noise = gaussian_rows(&mut rng, 9, 1, 0.5);
        let y = x.map(|v| v * v * v) + noise;
        let reference = [1.7];
        let out = cg_update(&Ensemble::new(x.clone()).unwrap(), &y, &reference, None, 0.0).unwrap();
        let c_xy = sample_cov(&x, &y)[(0, 0)];
        let c_y = sample_cov(&y, &y)[(0, 0)];
        for j in 0..9 {
            let expected = x[j] + c_xy / c_y * (reference[0] - y[j]);
            assert!((out.matrix()[j] - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_innovation_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ens = Ensemble::new(gaussian_rows(&mut rng, 12, 5, 1.0)).unwrap();
        let reference = vec![0.3, -1.0, 2.0, 0.0, 5.0];
        let obs = DMatrix::from_fn(12, 5, |_, k| reference[k]);
        let l = LocalizationMatrix::gaussian(5, 1.0).unwrap();
        assert_eq!(cg_update(&ens, &obs, &reference, Some(&l), 0.0).unwrap(), ens);

        let ns = ns_update(&ens, &obs, &reference, Some(&l), 1.0, 0.0).unwrap();
        assert!(max_abs_diff(ns.matrix(), ens.matrix()) <= 1e-5);

        // vanilla pairs y_j with x_j, so zero innovation means y_j == x_j
        let v = vanilla_update(&ens, ens.matrix(), &[1.0; 5], 0.0).unwrap();
        assert_eq!(v, ens);
    }

    #[test]
    fn all_ones_localization_is_bitwise_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ens = Ensemble::new(gaussian_rows(&mut rng, 15, 4, 1.0)).unwrap();
        let obs = ens.matrix() + gaussian_rows(&mut rng, 15, 4, 0.3);
        let reference = [0.1, 0.2, -0.3, 0.4];
        let plain = cg_update(&ens, &obs, &reference, None, 0.0).unwrap();
        let ones = cg_update(&ens, &obs, &reference, Some(&LocalizationMatrix::ones(4)), 0.0).unwrap();
        assert_eq!(plain, ones);
    }

    #[test]
    fn updates_are_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (n, d) = (25, 6);
        let ens = Ensemble::new(gaussian_rows(&mut rng, n, d, 1.0) + DMatrix::from_element(n, d, 3.0)).unwrap();
        let obs = ens.matrix().map(|v| v * v * v) + gaussian_rows(&mut rng, n, d, 1.0);
        let reference: Vec<f64> = (0..d).map(|k| 27.0 + k as f64).collect();
        let l = LocalizationMatrix::gaussian(d, 1.0).unwrap();

        let perm: Vec<usize> = (0..n).map(|j| (j * 7 + 3) % n).collect();
        let permute = |m: &DMatrix<f64>| DMatrix::from_fn(n, d, |j, k| m[(perm[j], k)]);
        let pens = Ensemble::new(permute(ens.matrix())).unwrap();
        let pobs = permute(&obs);

        let cg = cg_update(&ens, &obs, &reference, Some(&l), 0.0).unwrap();
        let pcg = cg_update(&pens, &pobs, &reference, Some(&l), 0.0).unwrap();
        assert!(max_abs_diff(&permute(cg.matrix()), pcg.matrix()) < 1e-9);

        let ns = ns_update(&ens, &obs, &reference, Some(&l), 1.05, 0.0).unwrap();
        let pns = ns_update(&pens, &pobs, &reference, Some(&l), 1.05, 0.0).unwrap();
        assert!(max_abs_diff(&permute(ns.matrix()), pns.matrix()) < 1e-9);

        let lin = ens.matrix() + gaussian_rows(&mut rng, n, d, 1.0);
        let v = vanilla_update(&ens, &lin, &vec![1.0; d], 0.0).unwrap();
        let pv = vanilla_update(&pens, &permute(&lin), &vec![1.0; d], 0.0).unwrap();
        assert!(max_abs_diff(&permute(v.matrix()), pv.matrix()) < 1e-9);
    }

    #[test]
    fn cg_approaches_vanilla_for_large_ensembles() {
        // independent noise for both filters; only sampling error separates them
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, d) = (2000, 3);
        let r: f64 = 0.01;
        let truth = [0.5, -0.2, 1.0];
        let ens = Ensemble::new(gaussian_rows(&mut rng, n, d, 1.0)).unwrap();
        let eps = gaussian_rows(&mut rng, n, d, r.sqrt());
        let vanilla_obs = DMatrix::from_fn(n, d, |j, k| truth[k] + eps[(j, k)]);
        let cg_obs = ens.matrix() - &eps;
        let v = vanilla_update(&ens, &vanilla_obs, &[r; 3], 0.0).unwrap();
        let c = cg_update(&ens, &cg_obs, &truth, None, 0.0).unwrap();
        let diff = (v.matrix() - c.matrix()).norm() / ((n * d) as f64).sqrt();
        assert!(diff <= 1e-2, "rms member difference {diff}");
    }

    #[test]
    fn singular_covariance_after_ladder_is_reported() {
        let nan = DMatrix::from_element(2, 2, f64::NAN);
        assert!(matches!(factor_spd(&nan, 0.0), Err(Error::SingularInnovationCovariance)));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(factor_spd(&indefinite, 0.0), Err(Error::SingularInnovationCovariance)));
        // rank-deficient but PSD is rescued by jitter
        let rank_one = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(factor_spd(&rank_one, 0.0).is_ok());
    }

    #[test]
    fn ns_transform_is_transparent_for_gaussian_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (n, d) = (400, 4);
        let truth = StateVector::new(vec![0.4, -0.3, 0.8, 0.1]).unwrap();
        let ens = Ensemble::new(gaussian_rows(&mut rng, n, d, 1.0)).unwrap();
        let model = ObservationModel::new(ObservationMap::Linear, NoiseDistribution::standard_gaussian()).unwrap();
        let reference = model.observe(truth.as_slice(), &mut rng);
        let obs = model.perturbed_forecast_observations(&ens, &mut rng);
        let l = LocalizationMatrix::ones(d);
        let cg = cg_update(&ens, &obs, &reference, Some(&l), 0.0).unwrap();
        let ns = ns_update(&ens, &obs, &reference, Some(&l), 1.0, 0.0).unwrap();
        let err_cg = metrics::rmse(&cg, truth.as_slice());
        let err_ns = metrics::rmse(&ns, truth.as_slice());
        assert!((err_cg - err_ns).abs() <= 0.05 * err_cg.max(0.1), "cg {err_cg} ns {err_ns}");
    }

    #[test]
    fn ns_step_under_pareto_noise_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, d) = (100, 10);
        let truth = StateVector::new((0..d).map(|k| k as f64 - 4.0).collect()).unwrap();
        let spread = 3.0;
        let forecast = Ensemble::new(
            gaussian_rows(&mut rng, n, d, spread) + DMatrix::from_fn(n, d, |_, k| truth.as_slice()[k]),
        )
        .unwrap();
        let model = ObservationModel::new(
            ObservationMap::Linear,
            NoiseDistribution::GeneralizedPareto {
                shape: 0.5,
                scale: 1.0,
                location: 2.0,
            },
        )
        .unwrap();
        let cfg = FilterConfig::new(FilterVariant::Ns);
        let out = ns_enkf_step(&forecast, &model, &truth, &cfg, &mut rng).unwrap();
        assert!(out.is_finite());
        for k in 0..d {
            let col = forecast.column(k);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min) - 10.0 * spread;
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 10.0 * spread;
            assert!(out.column(k).iter().all(|&v| v >= lo && v <= hi));
        }
    }

    #[test]
    fn vanilla_config_rejects_nonlinear_models_unless_allowed() {
        let cubic = ObservationModel::new(ObservationMap::Cubic, NoiseDistribution::standard_gaussian()).unwrap();
        let mut cfg = FilterConfig::new(FilterVariant::Vanilla);
        assert!(matches!(cfg.validate_for(&cubic), Err(Error::Config(_))));
        cfg.allow_misspecified = true;
        assert!(cfg.validate_for(&cubic).is_ok());
        let expo = ObservationModel::new(ObservationMap::Linear, NoiseDistribution::Exponential { mean: 1.0 }).unwrap();
        assert!(FilterConfig::new(FilterVariant::Vanilla).validate_for(&expo).is_err());
        assert!(FilterConfig::new(FilterVariant::Cg).validate_for(&cubic).is_ok());
    }

    #[test]
    fn variant_names_parse() {
        assert_eq!("cg".parse::<FilterVariant>().unwrap(), FilterVariant::Cg);
        assert_eq!("NS-EnKF".parse::<FilterVariant>().unwrap(), FilterVariant::Ns);
        assert!("sf".parse::<FilterVariant>().is_err());
    }
}
