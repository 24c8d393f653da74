//! Experiment configuration: named presets and a TOML document format.
//!
//! Every key is optional except the filter variant. A document may name a
//! `preset` as its starting point; any key it sets then overrides the preset.
//!
//! ```toml
//! seed = 7
//! preset = "long-run-exponential"
//!
//! [system]
//! n_cycles = 1000
//!
//! [filter]
//! variant = "ns"
//! inflation = 1.05
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{FilterConfig, FilterVariant};
use crate::model::{DEFAULT_FORCING, MIN_DIMENSION};
use crate::observation::{NoiseDistribution, ObservationMap, ObservationModel};

pub const DEFAULT_DIMENSION: usize = 40;
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_SPIN_UP_SECONDS: f64 = 9.0;
pub const DEFAULT_SEED: u64 = 0;

/// Presets baked into the library, in table order.
pub const PRESETS: [&str; 8] = [
    "cubic-sf-comparison",
    "linear-sf-comparison",
    "long-run",
    "long-run-linear",
    "long-run-exponential",
    "long-run-bimodal",
    "long-run-cubic",
    "long-run-pareto",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub dimension: usize,
    pub forcing: f64,
    pub dt: f64,
    /// Model time integrated from the perturbed fixed point before the first cycle.
    pub spin_up_seconds: f64,
    /// Filter steps; each advances the model by `dt`.
    pub n_cycles: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
            forcing: DEFAULT_FORCING,
            dt: DEFAULT_DT,
            spin_up_seconds: DEFAULT_SPIN_UP_SECONDS,
            n_cycles: 100,
        }
    }
}

impl SystemConfig {
    pub fn spin_up_steps(&self) -> usize {
        (self.spin_up_seconds / self.dt).round() as usize
    }
}

/// Members start at the truth plus iid `N(offset, spread^2)` per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialEnsembleConfig {
    pub offset: f64,
    pub spread: f64,
}

impl Default for InitialEnsembleConfig {
    fn default() -> Self {
        Self {
            offset: 0.0,
            spread: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub csv_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
    /// Half-open cycle range summarized in addition to the full run.
    pub window: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Preset name, or `custom`.
    pub name: String,
    pub seed: u64,
    pub system: SystemConfig,
    pub observation: ObservationModel,
    pub filter: FilterConfig,
    pub initial_ensemble: InitialEnsembleConfig,
    pub output: OutputConfig,
}

struct PresetSpec {
    n_cycles: usize,
    map: ObservationMap,
    noise: NoiseDistribution,
}

/// Inflation of the CG and NS presets. Without it the long CG runs collapse
/// their spread and lose the truth within a few hundred cycles.
pub const PRESET_INFLATION: f64 = 1.05;

fn preset_spec(name: &str) -> Option<PresetSpec> {
    let gaussian = NoiseDistribution::standard_gaussian();
    let long = |map, noise| PresetSpec {
        n_cycles: 5500,
        map,
        noise,
    };
    Some(match name {
        "cubic-sf-comparison" => PresetSpec {
            n_cycles: 100,
            map: ObservationMap::Cubic,
            noise: gaussian,
        },
        "linear-sf-comparison" => PresetSpec {
            n_cycles: 100,
            map: ObservationMap::Linear,
            noise: gaussian,
        },
        "long-run" | "long-run-linear" => long(ObservationMap::Linear, gaussian),
        "long-run-exponential" => long(ObservationMap::Linear, NoiseDistribution::Exponential { mean: 1.0 }),
        "long-run-bimodal" => long(
            ObservationMap::Linear,
            NoiseDistribution::Bimodal {
                mode_offset: 5.0,
                component_std: 1.0,
            },
        ),
        "long-run-cubic" => long(ObservationMap::Cubic, gaussian),
        "long-run-pareto" => long(
            ObservationMap::Linear,
            NoiseDistribution::GeneralizedPareto {
                shape: 0.5,
                scale: 1.0,
                location: 2.0,
            },
        ),
        _ => return None,
    })
}

impl ExperimentConfig {
    /// Built-in experiment with the per-variant inflation it was run with.
    pub fn preset(name: &str, variant: FilterVariant) -> Result<Self> {
        let spec = preset_spec(name).ok_or_else(|| {
            Error::Config(format!("unknown preset `{name}` (known: {})", PRESETS.join(", ")))
        })?;
        let mut filter = FilterConfig::new(variant);
        filter.inflation = match variant {
            FilterVariant::Vanilla => 1.0,
            FilterVariant::Cg | FilterVariant::Ns => PRESET_INFLATION,
        };
        Ok(Self {
            name: name.to_string(),
            seed: DEFAULT_SEED,
            system: SystemConfig {
                n_cycles: spec.n_cycles,
                ..SystemConfig::default()
            },
            observation: ObservationModel::new(spec.map, spec.noise)?,
            filter,
            initial_ensemble: InitialEnsembleConfig::default(),
            output: OutputConfig::default(),
        })
    }

    /// Defaults without a preset: linear map, standard Gaussian noise.
    pub fn custom(variant: FilterVariant) -> Self {
        Self {
            name: "custom".to_string(),
            seed: DEFAULT_SEED,
            system: SystemConfig::default(),
            observation: ObservationModel {
                map: ObservationMap::Linear,
                noise: NoiseDistribution::standard_gaussian(),
            },
            filter: FilterConfig::new(variant),
            initial_ensemble: InitialEnsembleConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_cycles(mut self, n_cycles: usize) -> Self {
        self.system.n_cycles = n_cycles;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        if s.dimension < MIN_DIMENSION {
            return Err(Error::Config(format!(
                "system.dimension must be at least {MIN_DIMENSION}, got {}",
                s.dimension
            )));
        }
        if !s.forcing.is_finite() {
            return Err(Error::Config("system.forcing must be finite".into()));
        }
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return Err(Error::Config(format!("system.dt must be positive, got {}", s.dt)));
        }
        if !(s.spin_up_seconds >= 0.0 && s.spin_up_seconds.is_finite()) {
            return Err(Error::Config(format!(
                "system.spin_up_seconds must be non-negative, got {}",
                s.spin_up_seconds
            )));
        }
        if s.n_cycles == 0 {
            return Err(Error::Config("system.n_cycles must be at least 1".into()));
        }
        let init = &self.initial_ensemble;
        if !(init.offset.is_finite() && init.spread.is_finite() && init.spread >= 0.0) {
            return Err(Error::Config(format!("invalid initial_ensemble: {init:?}")));
        }
        if let Some([start, end]) = self.output.window {
            if start >= end || end > s.n_cycles {
                return Err(Error::Config(format!(
                    "output.window [{start}, {end}) must be non-empty and within {} cycles",
                    s.n_cycles
                )));
            }
        }
        self.observation.noise.validate().map_err(as_config)?;
        self.filter.validate_for(&self.observation).map_err(as_config)
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidParameter(msg) | Error::InvalidDimension(msg) => Error::Config(msg),
        other => other,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub observation: ObservationSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub initial_ensemble: InitialEnsembleSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub dimension: Option<usize>,
    pub forcing: Option<f64>,
    pub dt: Option<f64>,
    pub spin_up_seconds: Option<f64>,
    pub n_cycles: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    pub map: Option<ObservationMap>,
    pub noise: Option<NoiseDistribution>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub variant: Option<FilterVariant>,
    pub ensemble_size: Option<usize>,
    pub inflation: Option<f64>,
    pub localization_radius: Option<f64>,
    pub obs_error_variance: Option<f64>,
    pub jitter: Option<f64>,
    pub obs_interval: Option<usize>,
    pub allow_misspecified: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialEnsembleSection {
    pub offset: Option<f64>,
    pub spread: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub csv_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
    pub window: Option<[usize; 2]>,
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().trim().to_string()))
    }

    /// Applies the document on top of its preset (or the plain defaults).
    /// `variant` takes precedence over the document's `filter.variant`.
    pub fn resolve(&self, variant: Option<FilterVariant>) -> Result<ExperimentConfig> {
        let variant = variant.or(self.filter.variant).ok_or(Error::MissingField("variant"))?;
        let mut cfg = match &self.preset {
            Some(name) => ExperimentConfig::preset(name, variant)?,
            None => ExperimentConfig::custom(variant),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }

        let s = &self.system;
        set(&mut cfg.system.dimension, s.dimension);
        set(&mut cfg.system.forcing, s.forcing);
        set(&mut cfg.system.dt, s.dt);
        set(&mut cfg.system.spin_up_seconds, s.spin_up_seconds);
        set(&mut cfg.system.n_cycles, s.n_cycles);

        set(&mut cfg.observation.map, self.observation.map);
        set(&mut cfg.observation.noise, self.observation.noise);

        let f = &self.filter;
        set(&mut cfg.filter.ensemble_size, f.ensemble_size);
        set(&mut cfg.filter.inflation, f.inflation);
        set(&mut cfg.filter.localization_radius, f.localization_radius);
        set(&mut cfg.filter.obs_error_variance, f.obs_error_variance);
        set(&mut cfg.filter.jitter, f.jitter);
        set(&mut cfg.filter.obs_interval, f.obs_interval);
        set(&mut cfg.filter.allow_misspecified, f.allow_misspecified);

        set(&mut cfg.initial_ensemble.offset, self.initial_ensemble.offset);
        set(&mut cfg.initial_ensemble.spread, self.initial_ensemble.spread);

        let o = &self.output;
        if o.csv_path.is_some() {
            cfg.output.csv_path = o.csv_path.clone();
        }
        if o.summary_path.is_some() {
            cfg.output.summary_path = o.summary_path.clone();
        }
        if o.window.is_some() {
            cfg.output.window = o.window;
        }
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg = ConfigDocument::parse(text)?.resolve(None)?;
    cfg.validate()?;
    Ok(cfg)
}
