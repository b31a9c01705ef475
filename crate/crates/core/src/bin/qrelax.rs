use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use qrelax::adiabatic::{self, ConditionStatus, TimeDependentWell};
use qrelax::config::{RunConfig, SEED_ENV};
use qrelax::ensemble::{self, EnsembleOptions};
use qrelax::filtering::{self, DensityBasis, OutcomeMode, Prior, TimeGrid};
use qrelax::output::{self, RelaxRow, Scale};
use qrelax::relaxation::{self, RelaxQuery, RelaxationStats};
use qrelax::spectrum::{self, TransitionRow, UnitMode};
use qrelax::{sde, validate, Error, Result};

/// Energy-driven state reduction in a suddenly expanded square well.
#[derive(Parser)]
#[command(name = "qrelax", version, about)]
struct Cli {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    flags: Flags,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Transition table of the quench and its conservation residual.
    Spectrum,
    /// One filtered trajectory.
    Trajectory,
    /// Monte Carlo ensemble with martingale and frequency checks.
    Ensemble,
    /// Position density of one trajectory at the checkpoint times.
    Density,
    /// Analytic and empirical relaxation times.
    RelaxTime,
    /// Occupation process in a slowly expanding well.
    Adiabatic,
    /// Invariant suite; nonzero exit on any failure.
    Validate,
    /// Filtering against Euler–Maruyama convergence study.
    Crosscheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Trajectory => "trajectory",
            Command::Ensemble => "ensemble",
            Command::Density => "density",
            Command::RelaxTime => "relax-time",
            Command::Adiabatic => "adiabatic",
            Command::Validate => "validate",
            Command::Crosscheck => "crosscheck",
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Every field of the run configuration as an optional flag.
#[derive(clap::Args, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
struct Flags {
    /// Expansion factor of the well (>= 1).
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    /// Level occupied before the expansion.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    /// Reduction-rate parameter.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    /// Basis truncation.
    #[arg(long, visible_alias = "N", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    truncation: Option<usize>,
    /// Ensemble size.
    #[arg(long, visible_alias = "M", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    runs: Option<usize>,
    /// RNG seed; falls back to QRELAX_SEED, then 0.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Particle mass in physical mode.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mass: Option<f64>,
    /// Initial well width in physical mode.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<f64>,
    /// `dimensionless` or `physical`.
    #[arg(long, global = true, value_parser = parse_unit_mode)]
    #[serde(skip_serializing_if = "Option::is_none")]
    unit_mode: Option<UnitMode>,
    /// Horizon; defaults to ten relaxation times.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_end: Option<f64>,
    /// Intervals of the uniform time grid.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    /// Condition every run on this level.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome: Option<usize>,
    /// Finest Euler–Maruyama step of `crosscheck`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    /// Worker threads (0 = automatic).
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Position grid points for densities.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    density_points: Option<usize>,
    /// Also write every ensemble trajectory.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "is_false")]
    keep_paths: bool,
    /// Competitors count as suppressed below exp(-lambda).
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    /// Confidence of the relaxation-time bound.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
    /// Energy band for measured relaxation times.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tol_energy: Option<f64>,
    /// Relative expansion speed for `adiabatic`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    /// Start the occupation process in this level.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eigenstate: Option<usize>,
    /// Paths in the cross-check study.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    paths: Option<usize>,
    /// Add posterior columns to trajectory files.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "is_false")]
    posterior: bool,
    /// Write gnuplot scripts next to the CSV files.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "is_false")]
    plots: bool,
    /// Smaller, faster validation run.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "is_false")]
    quick: bool,
}

fn parse_unit_mode(s: &str) -> std::result::Result<UnitMode, String> {
    match s {
        "dimensionless" => Ok(UnitMode::Dimensionless),
        "physical" => Ok(UnitMode::Physical),
        _ => Err(format!("expected 'dimensionless' or 'physical', got '{s}'")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = match serde_json::to_value(&cli.flags) {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let config = match RunConfig::resolve(cli.config.as_deref(), overrides, env_seed.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qrelax: {e}");
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command, &config) {
        Ok(code) => code,
        Err(e @ Error::InvalidConfig { .. }) => {
            eprintln!("qrelax: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("qrelax: {} failed: {e}", cli.command.name());
            ExitCode::from(1)
        }
    }
}

fn out_dir(config: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&config.out).map_err(|e| Error::InvalidConfig {
        field: "out".into(),
        constraint: format!("cannot create {}: {e}", config.out.display()),
    })?;
    Ok(&config.out)
}

fn dispatch(command: Command, config: &RunConfig) -> Result<ExitCode> {
    // further pools are sized by the ensemble module itself
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build_global();
    let dir = out_dir(config)?;
    let results = match command {
        Command::Spectrum => spectrum_cmd(config, dir)?,
        Command::Trajectory => trajectory_cmd(config, dir)?,
        Command::Ensemble => ensemble_cmd(config, dir)?,
        Command::Density => density_cmd(config, dir)?,
        Command::RelaxTime => relax_cmd(config, dir)?,
        Command::Adiabatic => adiabatic_cmd(config, dir)?,
        Command::Crosscheck => crosscheck_cmd(config, dir)?,
        Command::Validate => {
            let checks = validate::run(config.quick, config.threads, config.seed);
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            let ok = checks.iter().all(|c| c.passed);
            output::write_manifest(dir, command.name(), config, json!({ "checks": checks }))?;
            return Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            });
        }
    };
    output::write_manifest(dir, command.name(), config, results)?;
    Ok(ExitCode::SUCCESS)
}

/// Horizon of a run: `--t-end` if given, else ten relaxation times.
fn horizon(config: &RunConfig, prior: &Prior) -> Result<f64> {
    match config.scaled_t_end()? {
        Some(t) => Ok(t),
        None => Ok(10.0
            * ensemble::relaxation_horizon(
                prior,
                config.alpha,
                config.scaled_sigma()?,
                config.outcome_mode(),
            )?),
    }
}

fn plot(
    config: &RunConfig,
    dir: &Path,
    name: &str,
    csv: &str,
    ylabel: &str,
    series: &[(usize, &str)],
    logx: bool,
) -> Result<()> {
    if config.plots {
        output::write_gnuplot(
            &dir.join(name),
            csv,
            name.trim_end_matches(".gp"),
            "t",
            ylabel,
            series,
            logx,
        )?;
    }
    Ok(())
}

fn spectrum_cmd(config: &RunConfig, dir: &Path) -> Result<Value> {
    let model = config.model()?;
    let row = TransitionRow::for_quench(config.n, config.alpha, config.truncation)?;
    let residual = spectrum::conservation_residual(config.n, config.alpha, config.truncation)?;
    output::write_transition_table(&dir.join("spectrum.csv"), config.n, &row, &model)?;
    if config.plots {
        output::write_gnuplot(
            &dir.join("spectrum.gp"),
            "spectrum.csv",
            "transition probabilities",
            "m",
            "probability",
            &[(3, "pi_nm")],
            false,
        )?;
    }
    println!("partial sum       {}", output::float(row.partial_sum()));
    println!("relative residual {}", output::float(residual));
    Ok(json!({ "partial_sum": row.partial_sum(), "relative_residual": residual }))
}

fn trajectory_cmd(config: &RunConfig, dir: &Path) -> Result<Value> {
    let model = config.model()?;
    let prior = Prior::for_model(config.n, &model)?;
    let t_end = horizon(config, &prior)?;
    let sde = config.sde_config(TimeGrid::uniform(t_end, config.steps)?)?;
    let traj = filtering::simulate_trajectory(&prior, &sde, 0)?;
    output::write_trajectory(
        &dir.join("trajectory.csv"),
        &traj,
        Scale::of(&model),
        config.posterior,
    )?;
    plot(
        config,
        dir,
        "trajectory.gp",
        "trajectory.csv",
        "H",
        &[(4, "H")],
        false,
    )?;
    let h_end = *traj.h_path.last().unwrap();
    println!(
        "outcome {}  H(t_end) = {}",
        traj.outcome,
        output::float(h_end * Scale::of(&model).energy)
    );
    Ok(json!({ "outcome": traj.outcome, "t_end": t_end, "h_end": h_end }))
}

fn ensemble_cmd(config: &RunConfig, dir: &Path) -> Result<Value> {
    let model = config.model()?;
    let prior = Prior::for_model(config.n, &model)?;
    let tau = horizon(config, &prior)? / 10.0;
    let sde = config.sde_config(ensemble::default_checkpoints(tau)?)?;
    let opts = EnsembleOptions {
        threads: config.threads,
        density_points: config.density_points,
        keep_paths: config.keep_paths,
    };
    let summary = ensemble::run_ensemble(&model, config.n, &sde, config.runs, &opts)?;
    let row = TransitionRow::for_quench(config.n, config.alpha, config.truncation)?;
    let scale = Scale::of(&model);
    output::write_ensemble(dir, &summary, &row, scale)?;
    if config.keep_paths {
        let paths = dir.join("paths");
        fs::create_dir_all(&paths)?;
        for (i, tr) in summary.paths.iter().enumerate() {
            output::write_trajectory(
                &paths.join(format!("trajectory_{i:06}.csv")),
                tr,
                scale,
                config.posterior,
            )?;
        }
    }
    plot(
        config,
        dir,
        "mean_h.gp",
        "mean_h.csv",
        "mean H",
        &[(2, "mean H")],
        true,
    )?;
    plot(
        config,
        dir,
        "mean_v.gp",
        "mean_v.csv",
        "mean V",
        &[(2, "mean V")],
        true,
    )?;

    let mut results = json!({ "runs": summary.runs, "tau": tau });
    if summary.mode() == OutcomeMode::Sample {
        let m = ensemble::martingale_test(&summary)?;
        let v = ensemble::supermartingale_test(&summary)?;
        let f = ensemble::terminal_frequency_test(&summary, &row)?;
        println!(
            "martingale       max |z| = {:.3}  {}",
            m.max_abs_z,
            verdict(m.passed)
        );
        println!(
            "supermartingale  margin  = {:.3e}  {}",
            v.worst_margin,
            verdict(v.passed)
        );
        println!(
            "frequencies      max |z| = {:.3}  chi2 p = {:.3}  {}",
            f.max_abs_z,
            f.p_value,
            verdict(f.passed)
        );
        results["martingale"] = json!(m);
        results["supermartingale"] = json!(v);
        results["frequencies"] = json!(f);
    } else {
        let h = *summary.mean_h.last().unwrap();
        println!("terminal mean H = {}", output::float(h * scale.energy));
        results["terminal_mean_h"] = json!(h);
    }
    Ok(results)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn density_cmd(config: &RunConfig, dir: &Path) -> Result<Value> {
    let model = config.model()?;
    let prior = Prior::for_model(config.n, &model)?;
    let tau = horizon(config, &prior)? / 10.0;
    let sde = config.sde_config(ensemble::default_checkpoints(tau)?)?;
    let traj = filtering::simulate_trajectory(&prior, &sde, 0)?;
    let basis = DensityBasis::uniform(config.density_points.unwrap_or(256), &model)?;
    let mut snaps = Vec::with_capacity(traj.times().len());
    for (&t, &b) in traj.times().iter().zip(&traj.b_path) {
        let psi = filtering::wavefunction(traj.outcome, b, t, sde.sigma, &prior)?;
        snaps.push(basis.evaluate(&psi)?);
    }
    output::write_density_series(&dir.join("density.csv"), &snaps, Scale::of(&model))?;
    let worst = snaps
        .iter()
        .map(|s| (s.integral() - 1.0).abs())
        .fold(0.0, f64::max);
    println!("outcome {}  max |integral - 1| = {worst:.3e}", traj.outcome);
    Ok(json!({ "outcome": traj.outcome, "max_normalisation_error": worst }))
}

fn relax_cmd(config: &RunConfig, dir: &Path) -> Result<Value> {
    let model = config.model()?;
    let prior = Prior::for_model(config.n, &model)?;
    let sigma = config.scaled_sigma()?;
    let scale = Scale::of(&model);
    let levels: Vec<usize> = match config.outcome {
        Some(j) => vec![j],
        None => (1..=config.truncation)
            .filter(|&j| prior.probs[j - 1] > 0.0)
            .take(5)
            .collect(),
    };
    let mut rows = Vec::new();
    for j in levels {
        let query = RelaxQuery::new(config.alpha, sigma, j, config.lambda, config.confidence)?;
        let tau = relaxation::tau_r(&query)?;
        let t_end = match config.scaled_t_end()? {
            Some(t) => t,
            None => 10.0 * if tau > 0.0 { tau } else { 1.0 },
        };
        let sde = filtering::SdeConfig::new(
            sigma,
            TimeGrid::uniform(t_end, config.steps)?,
            config.seed,
            OutcomeMode::Forced(j),
        )?;
        let e_j = prior.energies[j - 1];
        let tol = model.energy_from_units(config.tol_energy);
        let times: Vec<Option<f64>> = (0..config.runs as u64)
            .into_par_iter()
            .map(|i| {
                let tr = filtering::simulate_trajectory(&prior, &sde, i)?;
                Ok(relaxation::relaxation_time(
                    tr.times(),
                    &tr.h_path,
                    e_j,
                    tol,
                ))
            })
            .collect::<Result<_>>()?;
        let stats = RelaxationStats::from_times(times, tau);
        println!(
            "j = {j}  tau_R = {}  median = {}  censored = {}",
            output::float(tau * scale.time),
            stats
                .median
                .map_or("inf".into(), |m| output::float(m * scale.time)),
            stats.censored
        );
        rows.push(RelaxRow {
            j,
            tau_r: tau,
            tau_r_closed_form: relaxation::tau_r_closed_form(config.alpha, j, sigma),
            median: stats.median,
            p95: stats.p95,
            fraction_relaxed_by_tau: stats.fraction_relaxed_by_tau,
            censored: stats.censored,
        });
    }
    output::write_relaxation(&dir.join("relax_time.csv"), &rows, scale)?;
    Ok(json!({ "levels": rows }))
}

fn adiabatic_cmd(config: &RunConfig, dir: &Path) -> Result<Value> {
    let model = config.model()?;
    let prior = Prior::for_model(config.n, &model)?;
    let sigma = config.scaled_sigma()?;
    let well = TimeDependentWell::new(config.alpha, config.rate, config.truncation)?;
    let pi0 = match config.eigenstate {
        Some(k) => {
            let mut p = vec![0.0; config.truncation];
            p[k - 1] = 1.0;
            p
        }
        None => prior.probs.clone(),
    };
    let t_end = horizon(config, &prior)?;
    let grid = TimeGrid::uniform(t_end, config.steps)?;
    // Euler-Maruyama on the occupations is unbiased only while this is small
    let resolution = step_resolution(&pi0, &well, sigma, t_end / config.steps as f64);
    if resolution > 0.5 {
        let needed = (config.steps as f64 * (resolution / 0.5).powi(2)).ceil();
        eprintln!(
            "adiabatic: sigma |E_k - H| sqrt(dt) reaches {resolution:.3}; clamping will bias the occupations (about {needed:.0} steps or fewer levels needed)"
        );
    }
    let run = adiabatic::run_pi_process(&well, &pi0, sigma, &grid, config.seed, 0)?;
    output::write_pi_run(&dir.join("adiabatic.csv"), &run, output::PI_COLUMNS)?;
    plot(
        config,
        dir,
        "adiabatic.gp",
        "adiabatic.csv",
        "Pi",
        &[(3, "Pi_1"), (4, "Pi_2"), (5, "Pi_3")],
        false,
    )?;
    let holds = run
        .conditions
        .iter()
        .filter(|c| c.status == ConditionStatus::Holds)
        .count();
    let fails = run
        .conditions
        .iter()
        .filter(|c| c.status == ConditionStatus::Fails)
        .count();
    let critical = adiabatic::critical_rate(&pi0, config.alpha, 0.0, sigma).ok();
    let ens = adiabatic::pi_ensemble(&well, &pi0, sigma, &grid, config.runs, config.seed)?;
    println!(
        "condition holds on {holds}, fails on {fails} of {} points",
        run.times.len()
    );
    if let Some(v) = critical {
        println!("critical rate at t = 0: {}", output::float(v));
    }
    println!(
        "occupation martingale: max |z| = {:.3} over {} runs",
        ens.max_abs_z(),
        ens.runs
    );
    Ok(json!({
        "clamp_events": run.clamp_events,
        "condition_holds": holds,
        "condition_fails": fails,
        "critical_rate": critical,
        "martingale_max_abs_z": ens.max_abs_z(),
        "ensemble_clamp_events": ens.clamp_events,
        "step_resolution": resolution,
    }))
}

/// `σ max |E_k − H| √dt` over occupied levels at `t = 0`.
fn step_resolution(pi0: &[f64], well: &TimeDependentWell, sigma: f64, dt: f64) -> f64 {
    let e = adiabatic::instantaneous_spectrum(0.0, well);
    let h: f64 = pi0.iter().zip(&e).map(|(p, x)| p * x).sum();
    let spread = pi0
        .iter()
        .zip(&e)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, x)| (x - h).abs())
        .fold(0.0, f64::max);
    sigma * spread * dt.sqrt()
}

/// Largest truncation at which the coarsest integrator step stays stable.
const CROSSCHECK_MAX_LEVELS: usize = 6;

fn crosscheck_cmd(config: &RunConfig, dir: &Path) -> Result<Value> {
    let levels = config.truncation.min(CROSSCHECK_MAX_LEVELS);
    if levels < config.truncation {
        eprintln!(
            "crosscheck: truncation reduced to {levels} levels to keep Euler–Maruyama stable"
        );
    }
    let model = spectrum::WellModel::dimensionless(config.alpha, levels)?;
    let prior = Prior::for_model(config.n, &model)?;
    let t_end = config.scaled_t_end()?.unwrap_or(2.0);
    let ladder = [256, 64, 16, 4, 1];
    let fine_steps = match config.dt {
        // finest integrator step; the grid must split into the coarsest steps
        Some(dt) => {
            let dt = config.model()?.time_from_units(dt);
            ((t_end / dt / 256.0).round().max(1.0) as usize) * 256
        }
        None if config.quick => 1 << 14,
        None => 1 << 18,
    };
    let report = sde::crosscheck(
        &prior,
        config.scaled_sigma()?,
        t_end,
        fine_steps,
        &ladder,
        config.paths,
        config.seed,
    )?;
    output::write_crosscheck(&dir.join("crosscheck.csv"), &report)?;
    let order = report.fitted_order();
    println!(
        "fitted strong order {order:.3}  error ratio per dt/4 {:.3}",
        4f64.powf(order)
    );
    Ok(json!({
        "levels": levels,
        "fitted_order": order,
        "ratio_per_quarter_step": 4f64.powf(order),
        "geometric_mean_error": report.geometric_mean_error(),
        "dts": report.dts,
    }))
}
