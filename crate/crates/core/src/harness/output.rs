//! Per-cycle CSV files and summary tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::run::{RunReport, RunStatus};
use crate::metrics::CycleMetrics;
use crate::model::Trajectory;
use crate::observation::{NoiseDistribution, ObservationMap};

pub const CSV_HEADER: &str = "cycle,time,frmse,armse,fcrps,acrps";

const SUMMARY_COLUMNS: [&str; 8] = [
    "Observation",
    "Experiment",
    "Mean FCRPS",
    "Mean ACRPS",
    "FRMSE",
    "ARMSE",
    "Inflation",
    "Time (s)",
];

/// 17 significant digits: parsing a cell gives back the exact `f64`.
fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_string(cycles: &[CycleMetrics]) -> String {
    let mut out = String::with_capacity(32 + cycles.len() * 128);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for c in cycles {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.cycle,
            real(c.time),
            real(c.frmse),
            real(c.armse),
            real(c.fcrps),
            real(c.acrps)
        );
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<CycleMetrics>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config(format!("metrics csv must start with `{CSV_HEADER}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Config(format!("metrics csv line {}: `{line}`", i + 2));
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 6 {
                return Err(bad());
            }
            let num = |k: usize| cells[k].parse::<f64>().map_err(|_| bad());
            Ok(CycleMetrics {
                cycle: cells[0].parse().map_err(|_| bad())?,
                time: num(1)?,
                frmse: num(2)?,
                armse: num(3)?,
                fcrps: num(4)?,
                acrps: num(5)?,
            })
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the per-cycle metrics of `report` to `path`.
pub fn emit_csv(report: &RunReport, path: &Path) -> Result<()> {
    write_file(path, &csv_string(&report.series.cycles))
}

/// `time,x1,...,xd`, one row per state.
pub fn trajectory_csv(truth: &Trajectory) -> String {
    let mut out = String::from("time");
    for k in 1..=truth.dim() {
        let _ = write!(out, ",x{k}");
    }
    out.push('\n');
    for (t, x) in truth.times().iter().zip(truth.states()) {
        out.push_str(&real(*t));
        for v in x.as_slice() {
            out.push(',');
            out.push_str(&real(*v));
        }
        out.push('\n');
    }
    out
}

pub fn emit_trajectory(truth: &Trajectory, path: &Path) -> Result<()> {
    write_file(path, &trajectory_csv(truth))
}

/// Table label of an observation model, e.g. `Cubic` or `Pareto`.
pub fn observation_label(map: ObservationMap, noise: &NoiseDistribution) -> String {
    let cap = |s: &str| {
        let mut c = s.chars();
        c.next().map(|f| f.to_uppercase().chain(c).collect::<String>()).unwrap_or_default()
    };
    match (map, noise.is_gaussian()) {
        (_, true) => cap(map.label()),
        (ObservationMap::Linear, false) => cap(noise.label()),
        (ObservationMap::Cubic, false) => format!("{}/{}", cap(map.label()), cap(noise.label())),
    }
}

fn summary_rows(reports: &[RunReport]) -> Vec<[String; 8]> {
    // group by observation in order of first appearance, then table rank
    let mut groups: Vec<String> = Vec::new();
    let mut keyed: Vec<(usize, usize, usize, &RunReport)> = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let label = observation_label(r.config.observation.map, &r.config.observation.noise);
        let g = groups.iter().position(|l| *l == label).unwrap_or_else(|| {
            groups.push(label);
            groups.len() - 1
        });
        keyed.push((g, r.config.filter.variant.table_rank(), i, r));
    }
    keyed.sort_by_key(|&(g, rank, i, _)| (g, rank, i));

    keyed
        .into_iter()
        .map(|(g, _, _, r)| {
            let metrics = match (r.status, r.window_summary()) {
                (RunStatus::Completed, Ok(s)) => [s.fcrps, s.acrps, s.frmse, s.armse].map(|v| format!("{v:.4}")),
                (RunStatus::Diverged(k), _) => std::array::from_fn(|_| format!("diverged@{k}")),
                (RunStatus::Completed, Err(_)) => std::array::from_fn(|_| "n/a".to_string()),
            };
            let [fcrps, acrps, frmse, armse] = metrics;
            [
                groups[g].clone(),
                r.config.filter.variant.label().to_string(),
                fcrps,
                acrps,
                frmse,
                armse,
                format!("{}", r.config.filter.inflation),
                format!("{:.3}", r.series.wallclock),
            ]
        })
        .collect()
}

/// Aligned plain-text table, one row per report.
///
/// Rows are grouped by observation model; within a group they follow
/// CG-EnKF, NS-EnKF, V-EnKF.
pub fn emit_summary(reports: &[RunReport]) -> String {
    let rows = summary_rows(reports);
    let mut widths = SUMMARY_COLUMNS.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(k, (c, w))| if k < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(padded.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut out, &SUMMARY_COLUMNS);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &rows {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

/// Machine-readable twin of [`emit_summary`].
pub fn summary_csv(reports: &[RunReport]) -> String {
    let mut out = SUMMARY_COLUMNS.join(",");
    out.push('\n');
    for row in summary_rows(reports) {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Writes the text table to `path` and the CSV twin next to it with a `.csv` extension.
pub fn write_summary(reports: &[RunReport], path: &Path) -> Result<PathBuf> {
    write_file(path, &emit_summary(reports))?;
    let twin = path.with_extension("csv");
    write_file(&twin, &summary_csv(reports))?;
    Ok(twin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::FilterVariant;
    use crate::harness::config::ExperimentConfig;
    use crate::metrics::MetricSeries;

    fn cycle(i: usize, v: f64) -> CycleMetrics {
        CycleMetrics {
            cycle: i,
            time: 9.0 + 0.01 * (i + 1) as f64,
            frmse: v,
            armse: v / 3.0,
            fcrps: v.sqrt(),
            acrps: 1e-17 * v,
        }
    }

    fn report(preset: &str, variant: FilterVariant, cycles: usize, status: RunStatus) -> RunReport {
        RunReport {
            config: ExperimentConfig::preset(preset, variant).unwrap(),
            series: MetricSeries::new((0..cycles).map(|i| cycle(i, 0.1 * i as f64 + 0.3)).collect(), 1.25),
            status,
            seed: 0,
            version: "test".into(),
        }
    }

    #[test]
    fn csv_layout() {
        let one = csv_string(&[cycle(0, 0.5)]);
        assert_eq!(one.lines().count(), 2);
        assert!(one.starts_with("cycle,time,frmse,armse,fcrps,acrps\n"));
        assert!(one.ends_with('\n') && !one.contains('\r'));
        let r = report("cubic-sf-comparison", FilterVariant::Cg, 7, RunStatus::Diverged(7));
        assert_eq!(csv_string(&r.series.cycles).lines().count(), 8);
    }

    #[test]
    fn csv_parses_back_exactly() {
        let cycles: Vec<_> = (0..20).map(|i| cycle(i, 1.0 / (i as f64 + 3.0))).collect();
        assert_eq!(parse_csv(&csv_string(&cycles)).unwrap(), cycles);
        assert!(parse_csv("cycle,time\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n0,1,2\n")).is_err());
    }

    #[test]
    fn emit_csv_reports_path_on_failure() {
        let dir = std::env::temp_dir().join("ensemble-da-no-such-parent-file");
        fs::write(&dir, "").unwrap();
        let r = report("cubic-sf-comparison", FilterVariant::Cg, 2, RunStatus::Completed);
        let err = emit_csv(&r, &dir.join("out.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        fs::remove_file(&dir).unwrap();
    }

    #[test]
    fn single_report_gives_one_data_row() {
        let r = report("cubic-sf-comparison", FilterVariant::Cg, 3, RunStatus::Completed);
        let text = emit_summary(std::slice::from_ref(&r));
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().contains("Mean FCRPS"));
        assert!(text.contains("CG-EnKF") && text.contains("Cubic"));
        assert_eq!(summary_csv(&[r]).lines().count(), 2);
    }

    #[test]
    fn diverged_rows_are_marked() {
        let r = report("long-run-pareto", FilterVariant::Vanilla, 12, RunStatus::Diverged(12));
        let csv = summary_csv(&[r]);
        let row = csv.lines().nth(1).unwrap();
        assert_eq!(row.matches("diverged@12").count(), 4);
        assert!(row.starts_with("Pareto,V-EnKF,"));
    }

    #[test]
    fn rows_follow_table_order() {
        let reports = vec![
            report("long-run-exponential", FilterVariant::Vanilla, 3, RunStatus::Completed),
            report("cubic-sf-comparison", FilterVariant::Ns, 3, RunStatus::Completed),
            report("long-run-exponential", FilterVariant::Cg, 3, RunStatus::Completed),
            report("cubic-sf-comparison", FilterVariant::Cg, 3, RunStatus::Completed),
            report("long-run-exponential", FilterVariant::Ns, 3, RunStatus::Completed),
        ];
        let labels: Vec<String> = summary_csv(&reports)
            .lines()
            .skip(1)
            .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(" "))
            .collect();
        assert_eq!(
            labels,
            [
                "Exponential CG-EnKF",
                "Exponential NS-EnKF",
                "Exponential V-EnKF",
                "Cubic CG-EnKF",
                "Cubic NS-EnKF"
            ]
        );
    }

    #[test]
    fn summary_uses_the_configured_window() {
        let mut r = report("cubic-sf-comparison", FilterVariant::Cg, 10, RunStatus::Completed);
        r.config.output.window = Some([5, 10]);
        let expected = r.series.summary_window(5..10).unwrap();
        let row = summary_csv(&[r]).lines().nth(1).unwrap().to_string();
        assert!(row.contains(&format!("{:.4}", expected.frmse)));
    }

    #[test]
    fn observation_labels() {
        let g = NoiseDistribution::standard_gaussian();
        assert_eq!(observation_label(ObservationMap::Linear, &g), "Linear");
        assert_eq!(observation_label(ObservationMap::Cubic, &g), "Cubic");
        let e = NoiseDistribution::Exponential { mean: 1.0 };
        assert_eq!(observation_label(ObservationMap::Linear, &e), "Exponential");
        assert_eq!(observation_label(ObservationMap::Cubic, &e), "Cubic/Exponential");
    }

    #[test]
    fn trajectory_csv_has_one_column_per_dimension() {
        let x = crate::model::StateVector::perturbed_fixed_point(4, 8.0, 0.01).unwrap();
        let t = crate::model::Lorenz96::default().generate_truth(&x, 0.01, 3).unwrap();
        let text = trajectory_csv(&t);
        assert_eq!(text.lines().next().unwrap(), "time,x1,x2,x3,x4");
        assert_eq!(text.lines().count(), 5);
    }
}
