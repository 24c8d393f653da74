//! Twin experiment with cubic observations: CG-EnKF and NS-EnKF side by side.
//!
//! ```bash
//! cargo run --release --example cubic_twin_experiment
//! ```

use ensemble_da::filter::FilterVariant;
use ensemble_da::harness::{emit_summary, run_experiment, ExperimentConfig, RunReport};

pub fn run_example() -> ensemble_da::Result<Vec<RunReport>> {
    let mut reports = Vec::new();
    for variant in [FilterVariant::Ns, FilterVariant::Cg] {
        // the full preset runs 100 cycles; 25 keeps the example quick
        let cfg = ExperimentConfig::preset("cubic-sf-comparison", variant)?
            .with_seed(1)
            .with_cycles(25);
        reports.push(run_experiment(&cfg)?);
    }
    print!("{}", emit_summary(&reports));
    Ok(reports)
}

#[allow(dead_code)]
fn main() -> ensemble_da::Result<()> {
    run_example().map(|_| ())
}
