//! Describe an experiment in TOML, run it, and write the per-cycle CSV.
//!
//! ```bash
//! cargo run --release --example custom_config
//! ```

use ensemble_da::harness::{emit_csv, parse_config, parse_csv, run_experiment};

const DOCUMENT: &str = r#"
seed = 17

[system]
dimension = 12
n_cycles = 40
spin_up_seconds = 2.0

[observation]
map = "linear"
noise = { kind = "bimodal", mode_offset = 2.0, component_std = 0.5 }

[filter]
variant = "ns"
ensemble_size = 40
localization_radius = 2.0
inflation = 1.02

[initial_ensemble]
offset = 0.5
spread = 1.0

[output]
window = [10, 40]
"#;

pub fn run_example() -> ensemble_da::Result<usize> {
    let cfg = parse_config(DOCUMENT)?;
    let report = run_experiment(&cfg)?;
    let all = report.summary()?;
    let tail = report.window_summary()?;
    println!("ARMSE over all cycles {:.4}, over cycles 10..40 {:.4}", all.armse, tail.armse);

    let path = std::env::temp_dir().join(format!("ensemble-da-custom-{}.csv", std::process::id()));
    emit_csv(&report, &path)?;
    let text = std::fs::read_to_string(&path).map_err(|e| ensemble_da::Error::io(&path, e))?;
    let rows = parse_csv(&text)?;
    assert_eq!(rows, report.series.cycles);
    println!("wrote {} rows to {}", rows.len(), path.display());
    let _ = std::fs::remove_file(&path);
    Ok(rows.len())
}

#[allow(dead_code)]
fn main() -> ensemble_da::Result<()> {
    run_example().map(|_| ())
}
