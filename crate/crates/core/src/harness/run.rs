use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::filter::{run_filter, ObservationStreams};
use crate::harness::config::ExperimentConfig;
use crate::metrics::{MetricSeries, Summary};
use crate::model::{Lorenz96, StateVector, Trajectory};

/// Substream ids. Each consumer of randomness owns one stream of the
/// experiment seed, so adding draws to one never shifts another.
pub const STREAM_INITIAL_ENSEMBLE: u64 = 1;
pub const STREAM_REFERENCE_OBSERVATIONS: u64 = 2;
pub const STREAM_MEMBER_OBSERVATIONS: u64 = 3;

/// Perturbation added to the first component of the fixed point `F` to start the truth.
pub const TRUTH_PERTURBATION: f64 = 0.01;

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Stopped at this 0-based cycle; that many cycles were recorded.
    Diverged(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub series: MetricSeries,
    pub status: RunStatus,
    pub seed: u64,
    pub version: String,
}

impl RunReport {
    /// Column means over every recorded cycle.
    pub fn summary(&self) -> Result<Summary> {
        self.series.summary()
    }

    /// Column means over `output.window` when set (clipped to the recorded
    /// cycles), otherwise over the whole run.
    pub fn window_summary(&self) -> Result<Summary> {
        match self.config.output.window {
            Some([start, end]) => self.series.summary_window(start..end.min(self.series.cycles.len())),
            None => self.summary(),
        }
    }

    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Integrates the spin-up and the assimilation window. The returned trajectory
/// starts at the first analysis time's predecessor, `n_cycles + 1` states long.
pub fn generate_truth(cfg: &ExperimentConfig) -> Result<Trajectory> {
    let s = &cfg.system;
    let model = Lorenz96::new(s.forcing)?;
    let x0 = StateVector::perturbed_fixed_point(s.dimension, s.forcing, TRUTH_PERTURBATION)?;
    let spin_up = s.spin_up_steps();
    let full = model.generate_truth(&x0, s.dt, spin_up + s.n_cycles)?;
    Ok(full.tail_from(spin_up))
}

/// Truth at the first state plus iid `N(offset, spread^2)` per member and dimension.
pub fn initial_ensemble(cfg: &ExperimentConfig, start: &StateVector) -> Result<Ensemble> {
    let mut rng = substream(cfg.seed, STREAM_INITIAL_ENSEMBLE);
    let init = cfg.initial_ensemble;
    let x = start.as_slice();
    let n = cfg.filter.ensemble_size;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push(
            x.iter()
                .map(|&v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + init.offset + init.spread * z
                })
                .collect::<Vec<f64>>(),
        );
    }
    Ensemble::from_rows(&rows)
}

/// Runs one twin experiment. Divergence is reported in the status rather than
/// as an error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let truth = generate_truth(cfg)?;
    let initial = initial_ensemble(cfg, truth.state(0))?;
    let model = Lorenz96::new(cfg.system.forcing)?;
    let mut streams = ObservationStreams {
        reference: substream(cfg.seed, STREAM_REFERENCE_OBSERVATIONS),
        members: substream(cfg.seed, STREAM_MEMBER_OBSERVATIONS),
    };
    let (series, status) = match run_filter(&truth, &model, &cfg.filter, &cfg.observation, &initial, &mut streams) {
        Ok(run) => (run.metrics, RunStatus::Completed),
        Err(Error::Diverged { cycle, run }) => {
            log::info!("{} {} seed {} diverged at cycle {cycle}", cfg.name, cfg.filter.variant, cfg.seed);
            (run.metrics, RunStatus::Diverged(cycle))
        }
        Err(e) => return Err(e),
    };
    Ok(RunReport {
        config: cfg.clone(),
        series,
        status,
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}
