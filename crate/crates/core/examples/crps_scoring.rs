//! Score ensembles with RMSE of the mean and CRPS.
//!
//! ```bash
//! cargo run --release --example crps_scoring
//! ```

use ensemble_da::metrics::{crps, summarize, CycleMetrics};

pub fn run_example() -> ensemble_da::Result<f64> {
    let truth = 0.5;
    let cases: [(&str, Vec<f64>); 4] = [
        ("point at truth", vec![0.5]),
        ("point off by 2", vec![2.5]),
        ("sharp, centred", vec![0.4, 0.5, 0.6]),
        ("wide, centred", vec![-2.0, -1.0, 0.5, 2.0, 3.0]),
    ];
    for (name, members) in &cases {
        println!("{name:>15}: CRPS {:.4}", crps(members, truth));
    }

    // members {0, 1} against 0.5: the CDF is 1/2 on [0, 1), so the integral is 1/4
    let two = crps(&[0.0, 1.0], 0.5);
    println!("two-member check: {two}");

    let cycles: Vec<CycleMetrics> = (0..4)
        .map(|i| CycleMetrics {
            cycle: i,
            time: 0.01 * (i + 1) as f64,
            frmse: 0.3 + 0.1 * i as f64,
            armse: 0.2 + 0.1 * i as f64,
            fcrps: 0.15,
            acrps: 0.1,
        })
        .collect();
    let s = summarize(&cycles, 0..4)?;
    println!("summary over {} cycles: FRMSE {:.3}, ARMSE {:.3}", s.cycles, s.frmse, s.armse);
    Ok(two)
}

#[allow(dead_code)]
fn main() -> ensemble_da::Result<()> {
    run_example().map(|_| ())
}
