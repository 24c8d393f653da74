//! Spin up a 40-variable Lorenz-96 truth and write the assimilation window to CSV.
//!
//! ```bash
//! cargo run --release --example lorenz96_truth
//! ```

use ensemble_da::model::{Lorenz96, StateVector};
use ensemble_da::harness::output::trajectory_csv;

pub fn run_example() -> ensemble_da::Result<String> {
    let model = Lorenz96::default();
    let x0 = StateVector::perturbed_fixed_point(40, model.forcing, 0.01)?;

    // 9 s of spin-up, then one second at dt = 0.01
    let full = model.generate_truth(&x0, 0.01, 1000)?;
    let window = full.tail_from(900);
    let first = window.state(0).as_slice();
    println!(
        "t = {:.2}: x1 = {:.4}, x20 = {:.4}, x40 = {:.4}",
        window.times()[0],
        first[0],
        first[19],
        first[39]
    );

    let energy = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / (2.0 * x.len() as f64);
    println!(
        "mean energy over the window: {:.3}",
        window.states().iter().map(|s| energy(s.as_slice())).sum::<f64>() / window.len() as f64
    );

    let csv = trajectory_csv(&window);
    println!("{} rows, header `{}`", csv.lines().count() - 1, &csv[..csv.find(',').unwrap_or(0) + 3]);
    Ok(csv)
}

#[allow(dead_code)]
fn main() -> ensemble_da::Result<()> {
    run_example().map(|_| ())
}
