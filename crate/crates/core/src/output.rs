//! CSV, manifest and gnuplot writers.
//!
//! Every CSV has a header row; floats are written with 17 significant digits
//! so they read back bit-exact. Column order is part of the public format.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::adiabatic::{ConditionStatus, PiRun};
use crate::config::RunConfig;
use crate::ensemble::EnsembleSummary;
use crate::error::{Error, Result};
use crate::filtering::{DensitySnapshot, FilteredTrajectory};
use crate::sde::CrosscheckReport;
use crate::spectrum::{overlap, TransitionRow, WellModel};

/// Occupation columns written for the slowly varying well by default.
pub const PI_COLUMNS: usize = 8;

/// Version string recorded in manifests.
pub fn version() -> String {
    match option_env!("QRELAX_GIT_DESCRIBE") {
        Some(g) if !g.is_empty() => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        _ => env!("CARGO_PKG_VERSION").to_string(),
    }
}

pub fn float(x: f64) -> String {
    // adding zero folds -0 into +0
    format!("{:.16e}", x + 0.0)
}

/// Conversion from dimensionless results to the model's units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scale {
    pub time: f64,
    pub energy: f64,
}

impl Scale {
    pub fn of(model: &WellModel) -> Self {
        Scale {
            time: model.time_to_units(1.0),
            energy: model.energy_to_units(1.0),
        }
    }

    pub fn identity() -> Self {
        Scale {
            time: 1.0,
            energy: 1.0,
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_csv<S: AsRef<str>>(
    path: &Path,
    header: &[S],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header.iter().map(|h| h.as_ref()))
        .map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `m, energy, probability, overlap`.
pub fn write_transition_table(
    path: &Path,
    n: usize,
    row: &TransitionRow,
    model: &WellModel,
) -> Result<()> {
    let energies = model.energies();
    let scale = Scale::of(model);
    write_csv(
        path,
        &["m", "energy", "probability", "overlap"],
        row.probs.iter().enumerate().map(|(i, &p)| {
            vec![
                (i + 1).to_string(),
                float(energies[i] * scale.energy),
                float(p),
                float(overlap(n, i + 1, model.alpha)),
            ]
        }),
    )
}

/// `t, B, xi, H, V, W`, then `P_1..P_N` when `posterior` is set. `B`, `xi`
/// and `W` stay dimensionless.
pub fn write_trajectory(
    path: &Path,
    traj: &FilteredTrajectory,
    scale: Scale,
    posterior: bool,
) -> Result<()> {
    let mut header: Vec<String> = ["t", "B", "xi", "H", "V", "W"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if posterior {
        header.extend((1..=traj.posterior[0].len()).map(|m| format!("P_{m}")));
    }
    let rows = (0..traj.times().len()).map(|k| {
        let mut r = vec![
            float(traj.times()[k] * scale.time),
            float(traj.b_path[k]),
            float(traj.xi_path[k]),
            float(traj.h_path[k] * scale.energy),
            float(traj.v_path[k] * scale.energy * scale.energy),
            float(traj.w_path[k]),
        ];
        if posterior {
            r.extend(traj.posterior[k].iter().map(|&p| float(p)));
        }
        r
    });
    write_csv(path, &header, rows)
}

/// Writes `mean_h.csv`, `mean_v.csv`, `frequencies.csv` and, if recorded,
/// `density.csv` (long format `t, x, value`) into `dir`.
pub fn write_ensemble(
    dir: &Path,
    summary: &EnsembleSummary,
    row: &TransitionRow,
    scale: Scale,
) -> Result<Vec<PathBuf>> {
    let t = &summary.checkpoint_times;
    let mut written = Vec::new();

    let p = dir.join("mean_h.csv");
    write_csv(
        &p,
        &["t", "mean_H", "se_H"],
        (0..t.len()).map(|k| {
            vec![
                float(t[k] * scale.time),
                float(summary.mean_h[k] * scale.energy),
                float(summary.se_h[k] * scale.energy),
            ]
        }),
    )?;
    written.push(p);

    let e2 = scale.energy * scale.energy;
    let p = dir.join("mean_v.csv");
    write_csv(
        &p,
        &["t", "mean_V", "se_V"],
        (0..t.len()).map(|k| {
            vec![
                float(t[k] * scale.time),
                float(summary.mean_v[k] * e2),
                float(summary.se_v[k] * e2),
            ]
        }),
    )?;
    written.push(p);

    let p = dir.join("frequencies.csv");
    let freq = summary.terminal_frequency();
    write_csv(
        &p,
        &[
            "m",
            "probability",
            "count",
            "frequency",
            "terminal_level_count",
        ],
        (0..freq.len()).map(|i| {
            vec![
                (i + 1).to_string(),
                float(row.probs[i]),
                summary.outcome_counts[i].to_string(),
                float(freq[i]),
                summary.terminal_level_counts[i].to_string(),
            ]
        }),
    )?;
    written.push(p);

    if let Some(surface) = &summary.density {
        let p = dir.join("density.csv");
        write_csv(
            &p,
            &["t", "x", "value"],
            surface
                .times
                .iter()
                .zip(&surface.values)
                .flat_map(|(&tk, vals)| {
                    surface
                        .x_grid
                        .iter()
                        .zip(vals)
                        .map(move |(&x, &v)| vec![float(tk * scale.time), float(x), float(v)])
                }),
        )?;
        written.push(p);
    }
    Ok(written)
}

/// Long format `t, x, value`.
pub fn write_density_series(
    path: &Path,
    snapshots: &[DensitySnapshot],
    scale: Scale,
) -> Result<()> {
    write_csv(
        path,
        &["t", "x", "value"],
        snapshots.iter().flat_map(|s| {
            s.x_grid
                .iter()
                .zip(&s.values)
                .map(move |(&x, &v)| vec![float(s.time * scale.time), float(x), float(v)])
        }),
    )
}

/// One line of the relaxation report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelaxRow {
    pub j: usize,
    pub tau_r: f64,
    pub tau_r_closed_form: f64,
    pub median: Option<f64>,
    pub p95: Option<f64>,
    pub fraction_relaxed_by_tau: f64,
    pub censored: usize,
}

fn opt(x: Option<f64>, s: f64) -> String {
    x.map_or_else(|| "inf".to_string(), |v| float(v * s))
}

/// `j, tau_R, tau_R_closed_form, median, p95, fraction_relaxed_by_tau,
/// censored_count`; censored quantiles are written as `inf`.
pub fn write_relaxation(path: &Path, rows: &[RelaxRow], scale: Scale) -> Result<()> {
    write_csv(
        path,
        &[
            "j",
            "tau_R",
            "tau_R_closed_form",
            "median",
            "p95",
            "fraction_relaxed_by_tau",
            "censored_count",
        ],
        rows.iter().map(|r| {
            vec![
                r.j.to_string(),
                float(r.tau_r * scale.time),
                float(r.tau_r_closed_form * scale.time),
                opt(r.median, scale.time),
                opt(r.p95, scale.time),
                float(r.fraction_relaxed_by_tau),
                r.censored.to_string(),
            ]
        }),
    )
}

/// `t, L, Pi_1..Pi_k, H, V, condition_lhs, condition_rhs, holds` with
/// `k = min(columns, N)`; `holds` is `true`, `false` or `reduced`.
pub fn write_pi_run(path: &Path, run: &PiRun, columns: usize) -> Result<()> {
    let k = columns.min(run.pi[0].len());
    let mut header = vec!["t".to_string(), "L".to_string()];
    header.extend((1..=k).map(|i| format!("Pi_{i}")));
    header.extend(["H", "V", "condition_lhs", "condition_rhs", "holds"].map(String::from));
    write_csv(
        path,
        &header,
        (0..run.times.len()).map(|i| {
            let c = run.conditions[i];
            let mut r = vec![float(run.times[i]), float(run.widths[i])];
            r.extend(run.pi[i][..k].iter().map(|&p| float(p)));
            r.extend([float(run.h[i]), float(run.v[i]), float(c.lhs), float(c.rhs)]);
            r.push(
                match c.status {
                    ConditionStatus::Holds => "true",
                    ConditionStatus::Fails => "false",
                    ConditionStatus::Reduced => "reduced",
                }
                .to_string(),
            );
            r
        }),
    )
}

/// `dt, mean_max_error, geometric_mean_error, agreement_fraction`.
pub fn write_crosscheck(path: &Path, report: &CrosscheckReport) -> Result<()> {
    let geo = report.geometric_mean_error();
    let agree = report.agreement_fraction();
    write_csv(
        path,
        &[
            "dt",
            "mean_max_error",
            "geometric_mean_error",
            "agreement_fraction",
        ],
        (0..report.dts.len()).map(|i| {
            vec![
                float(report.dts[i]),
                float(report.mean_max_error[i]),
                float(geo[i]),
                float(agree[i]),
            ]
        }),
    )
}

/// JSON manifest with everything needed to repeat the run.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    results: Value,
) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    let doc = json!({
        "tool": "qrelax",
        "version": version(),
        "command": command,
        "seed": config.seed,
        "config": config,
        "results": results,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}

/// A gnuplot script plotting columns of `csv_name` (1-based indices) against
/// column 1.
pub fn write_gnuplot(
    path: &Path,
    csv_name: &str,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[(usize, &str)],
    logx: bool,
) -> Result<()> {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str(&format!(
        "set title '{title}'\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\n"
    ));
    if logx {
        s.push_str("set logscale x\n");
    }
    let plots: Vec<String> = series
        .iter()
        .map(|(col, name)| {
            format!("'{csv_name}' every ::1 using 1:{col} with lines title '{name}'")
        })
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s.push_str("pause -1\n");
    fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for &x in &[std::f64::consts::PI, 1.0 / 3.0, 6.02214076e23, -1e-300, 0.0] {
            let s = float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn transition_table_rows() {
        let dir = tempfile::tempdir().unwrap();
        let model = WellModel::dimensionless(2.5, 16).unwrap();
        let row = TransitionRow::for_quench(1, 2.5, 16).unwrap();
        let p = dir.path().join("t.csv");
        write_transition_table(&p, 1, &row, &model).unwrap();
        let mut r = csv::Reader::from_path(&p).unwrap();
        let recs: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(recs.len(), 16);
        assert_eq!(&recs[4][0], "5");
        assert_eq!(recs[4][2].parse::<f64>().unwrap(), 0.0);
    }
}
