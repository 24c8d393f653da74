use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ensemble_da::filter::FilterVariant;
use ensemble_da::harness::output::emit_trajectory;
use ensemble_da::harness::{emit_csv, emit_summary, generate_truth, run_experiment, write_summary};
use ensemble_da::harness::{ConfigDocument, ExperimentConfig, RunReport, RunStatus};
use ensemble_da::{parallel, Error};

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "ensemble-da", version, about = "Lorenz-96 twin experiments with stochastic, conditional-Gaussian and normal-score EnKFs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Command {
    /// Write the truth trajectory of the assimilation window.
    Truth,
    /// Run a single experiment.
    Run,
    /// Sweep the presets and write summary tables.
    Bench,
}

#[derive(Args)]
struct Opts {
    /// TOML experiment document.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in preset; overrides the document's `preset`.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = ["vanilla", "cg", "ns"])]
    variant: Option<String>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Allow the vanilla update with non-Gaussian noise or a nonlinear map.
    #[arg(long, global = true)]
    allow_misspecified: bool,
    /// Override the number of filter steps.
    #[arg(long, global = true, value_name = "N")]
    cycles: Option<usize>,
}

impl Opts {
    fn variant(&self) -> Option<FilterVariant> {
        self.variant.as_deref().map(|v| v.parse().expect("validated by clap"))
    }

    fn document(&self) -> Result<ConfigDocument, Error> {
        let mut doc = match &self.config {
            Some(path) => ConfigDocument::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?,
            None => ConfigDocument::default(),
        };
        if self.preset.is_some() {
            doc.preset = self.preset.clone();
        }
        Ok(doc)
    }

    fn apply(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig, Error> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(n) = self.cycles {
            cfg.system.n_cycles = n;
        }
        if self.allow_misspecified {
            cfg.filter.allow_misspecified = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn experiment(&self, default_variant: Option<FilterVariant>) -> Result<ExperimentConfig, Error> {
        let cfg = self.document()?.resolve(self.variant().or(default_variant))?;
        self.apply(cfg)
    }
}

fn stem(cfg: &ExperimentConfig) -> String {
    format!("{}-{}-seed{}", cfg.name, cfg.filter.variant, cfg.seed)
}

fn truth(opts: &Opts) -> Result<u8, Error> {
    // the trajectory does not depend on the filter
    let cfg = opts.experiment(Some(FilterVariant::Cg))?;
    let path = opts.out.join(format!("{}-truth.csv", cfg.name));
    emit_trajectory(&generate_truth(&cfg)?, &path)?;
    println!("{}", path.display());
    Ok(0)
}

fn run(opts: &Opts) -> Result<u8, Error> {
    let cfg = opts.experiment(None)?;
    let report = run_experiment(&cfg)?;
    let csv = cfg.output.csv_path.clone().unwrap_or_else(|| opts.out.join(format!("{}.csv", stem(&cfg))));
    emit_csv(&report, &csv)?;
    let summary = cfg
        .output
        .summary_path
        .clone()
        .unwrap_or_else(|| opts.out.join(format!("{}-summary.txt", stem(&cfg))));
    write_summary(std::slice::from_ref(&report), &summary)?;
    print!("{}", emit_summary(std::slice::from_ref(&report)));
    println!("metrics: {}", csv.display());
    Ok(match report.status {
        RunStatus::Completed => 0,
        RunStatus::Diverged(_) => EXIT_DIVERGED,
    })
}

/// Preset families and the variants each was run with. Vanilla is included
/// for non-Gaussian noise, which needs `allow_misspecified`.
const SHORT_RUNS: [(&str, &[FilterVariant]); 2] = [
    ("cubic-sf-comparison", &[FilterVariant::Cg, FilterVariant::Ns]),
    ("linear-sf-comparison", &[FilterVariant::Cg, FilterVariant::Ns]),
];

const LONG_RUNS: [(&str, &[FilterVariant]); 5] = [
    ("long-run-linear", &FilterVariant::ALL),
    ("long-run-exponential", &FilterVariant::ALL),
    ("long-run-bimodal", &FilterVariant::ALL),
    ("long-run-cubic", &[FilterVariant::Cg, FilterVariant::Ns]),
    ("long-run-pareto", &FilterVariant::ALL),
];

fn bench(opts: &Opts) -> Result<u8, Error> {
    let doc = opts.document()?;
    let select = |family: &[(&str, &[FilterVariant])]| -> Result<Vec<ExperimentConfig>, Error> {
        let mut out = Vec::new();
        for &(name, variants) in family {
            if opts.preset.as_deref().is_some_and(|p| p != name) {
                continue;
            }
            for &variant in variants {
                if opts.variant().is_some_and(|v| v != variant) {
                    continue;
                }
                let mut d = doc.clone();
                d.preset = Some(name.to_string());
                let mut cfg = d.resolve(Some(variant))?;
                cfg.filter.allow_misspecified |= variant == FilterVariant::Vanilla;
                out.push(opts.apply(cfg)?);
            }
        }
        Ok(out)
    };
    let families = [("short-runs", select(&SHORT_RUNS)?), ("long-runs", select(&LONG_RUNS)?)];
    if families.iter().all(|(_, cfgs)| cfgs.is_empty()) {
        return Err(Error::Config("no preset selected for bench".into()));
    }

    for (family, cfgs) in families.iter().filter(|(_, c)| !c.is_empty()) {
        let results = parallel::map_range(cfgs.len(), |i| run_experiment(&cfgs[i]));
        let reports = results.into_iter().collect::<Result<Vec<RunReport>, Error>>()?;
        for r in &reports {
            emit_csv(r, &opts.out.join(format!("{}.csv", stem(&r.config))))?;
        }
        let path = opts.out.join(format!("{family}-summary.txt"));
        write_summary(&reports, &path)?;
        println!("{}", emit_summary(&reports));
        println!("summary: {}", path.display());
    }
    Ok(0)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Truth => truth(&cli.opts),
        Command::Run => run(&cli.opts),
        Command::Bench => bench(&cli.opts),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
