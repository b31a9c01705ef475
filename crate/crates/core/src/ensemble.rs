//! Monte Carlo ensembles of filtered trajectories and the statistical checks
//! run on them.
//!
//! Trajectories are generated in fixed-size chunks; chunks run in parallel
//! and are reduced in index order, so a summary depends only on the seed and
//! the configuration, never on the worker count.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use crate::error::{Error, Result};
use crate::filtering::{
    self, DensityBasis, FilteredTrajectory, OutcomeMode, Prior, SdeConfig, TimeGrid,
};
use crate::numeric::{geometric_checkpoints, CompensatedSum, Moments};
use crate::relaxation::{tau_r, RelaxQuery};
use crate::spectrum::{TransitionRow, WellModel};

const CHUNK: usize = 64;

/// Number of positive checkpoint times in the default grid.
pub const CHECKPOINTS: usize = 64;

/// Levels with prior weight below this are ignored when choosing a horizon.
const NEGLIGIBLE_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnsembleOptions {
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    /// Points of a uniform grid on the expanded well for the mean density.
    pub density_points: Option<usize>,
    pub keep_paths: bool,
}

/// Mean density on `x_grid × times`; `values[k][i]` is the value at
/// `times[k]`, `x_grid[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensitySurface {
    pub x_grid: Vec<f64>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl DensitySurface {
    /// Trapezoid integral over `x` at each time.
    pub fn integrals(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|row| crate::numeric::trapezoid(&self.x_grid, row))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub runs: usize,
    pub initial_level: usize,
    pub config: SdeConfig,
    /// Expected energy of the truncated initial state.
    pub initial_energy: f64,
    pub checkpoint_times: Vec<f64>,
    pub mean_h: Vec<f64>,
    pub se_h: Vec<f64>,
    pub mean_v: Vec<f64>,
    pub se_v: Vec<f64>,
    /// Mean and standard error of the per-path increment
    /// `V(t_{k+1}) − V(t_k)`.
    pub mean_dv: Vec<f64>,
    pub se_dv: Vec<f64>,
    /// Number of runs conditioned on each level.
    pub outcome_counts: Vec<usize>,
    /// Number of runs whose final energy is nearest each level.
    pub terminal_level_counts: Vec<usize>,
    pub density: Option<DensitySurface>,
    pub paths: Vec<FilteredTrajectory>,
}

impl EnsembleSummary {
    pub fn mode(&self) -> OutcomeMode {
        self.config.outcome_mode
    }

    pub fn seed(&self) -> u64 {
        self.config.rng_seed
    }

    pub fn terminal_frequency(&self) -> Vec<f64> {
        self.outcome_counts
            .iter()
            .map(|&c| c as f64 / self.runs as f64)
            .collect()
    }
}

/// Relaxation time governing a run: `τ_R(j)` for a forced level with prior
/// weight, `τ_R` of the nearest weighted level for a forced level without
/// weight, and the largest `τ_R` over the weighted levels when sampling.
/// Falls back to 1 when every candidate is 0 (`α = 1`).
pub fn relaxation_horizon(prior: &Prior, alpha: f64, sigma: f64, mode: OutcomeMode) -> Result<f64> {
    let tau = |j: usize| tau_r(&RelaxQuery::standard(alpha, sigma, j));
    let t = match mode {
        OutcomeMode::Forced(j) => {
            let j = if prior.probs.get(j - 1).copied().unwrap_or(0.0) > 0.0 {
                j
            } else {
                nearest_weighted_level(prior, j)?
            };
            tau(j)?
        }
        OutcomeMode::Sample => {
            let mut worst: f64 = 0.0;
            for (i, &p) in prior.probs.iter().enumerate() {
                if p > NEGLIGIBLE_WEIGHT {
                    worst = worst.max(tau(i + 1)?);
                }
            }
            worst
        }
    };
    Ok(if t > 0.0 { t } else { 1.0 })
}

/// Level with positive prior weight whose energy is closest to `E_j`; ties
/// go to the lower level.
pub fn nearest_weighted_level(prior: &Prior, j: usize) -> Result<usize> {
    let e_j = *prior
        .energies
        .get(j.wrapping_sub(1))
        .ok_or_else(|| Error::Domain(format!("level {j} outside truncation")))?;
    prior
        .probs
        .iter()
        .zip(&prior.energies)
        .enumerate()
        .filter(|(_, (&p, _))| p > 0.0)
        .min_by(|a, b| {
            let da = (a.1 .1 - e_j).abs();
            let db = (b.1 .1 - e_j).abs();
            da.partial_cmp(&db).unwrap().then(a.0.cmp(&b.0))
        })
        .map(|(i, _)| i + 1)
        .ok_or(Error::EmptyRow)
}

/// Time `0` plus [`CHECKPOINTS`] geometric times from `τ/100` to `10τ`.
pub fn default_checkpoints(tau: f64) -> Result<TimeGrid> {
    TimeGrid::new(geometric_checkpoints(tau / 100.0, 10.0 * tau, CHECKPOINTS))
}

#[derive(Clone)]
struct Accumulator {
    h: Moments,
    v: Moments,
    dv: Moments,
    outcomes: Vec<usize>,
    terminal: Vec<usize>,
    density: Vec<CompensatedSum>,
    paths: Vec<FilteredTrajectory>,
}

impl Accumulator {
    fn new(points: usize, levels: usize, density_len: usize) -> Self {
        Accumulator {
            h: Moments::new(points),
            v: Moments::new(points),
            dv: Moments::new(points.saturating_sub(1)),
            outcomes: vec![0; levels],
            terminal: vec![0; levels],
            density: vec![CompensatedSum::default(); density_len],
            paths: Vec::new(),
        }
    }

    fn merge(&mut self, other: Accumulator) {
        self.h.merge(&other.h);
        self.v.merge(&other.v);
        self.dv.merge(&other.dv);
        self.outcomes
            .iter_mut()
            .zip(&other.outcomes)
            .for_each(|(x, y)| *x += y);
        self.terminal
            .iter_mut()
            .zip(&other.terminal)
            .for_each(|(x, y)| *x += y);
        self.density
            .iter_mut()
            .zip(&other.density)
            .for_each(|(x, y)| x.merge(y));
        self.paths.extend(other.paths);
    }
}

/// Run `runs` trajectories from level `n` of the unexpanded well on the grid
/// of `config`. The outcome mode of `config` selects sampled or conditioned
/// runs; trajectory `i` draws from RNG stream `i`.
pub fn run_ensemble(
    model: &WellModel,
    n: usize,
    config: &SdeConfig,
    runs: usize,
    options: &EnsembleOptions,
) -> Result<EnsembleSummary> {
    if runs == 0 {
        return Err(Error::config("runs", "must be >= 1"));
    }
    let prior = Prior::for_model(n, model)?;
    let grid = &config.time_grid;
    let basis = match options.density_points {
        Some(p) => Some(DensityBasis::uniform(p, model)?),
        None => None,
    };
    let points = grid.len();
    let levels = prior.len();
    let width = basis.as_ref().map_or(0, |b| b.x_grid().len());

    let run_chunk = |c: usize| -> Result<Accumulator> {
        let mut acc = Accumulator::new(points, levels, points * width);
        for i in c * CHUNK..((c + 1) * CHUNK).min(runs) {
            let traj = filtering::simulate_trajectory(&prior, config, i as u64)?;
            acc.h.push(traj.h_path.iter().copied());
            acc.v.push(traj.v_path.iter().copied());
            acc.dv.push(traj.v_path.windows(2).map(|w| w[1] - w[0]));
            acc.outcomes[traj.outcome - 1] += 1;
            acc.terminal[prior.nearest_level(traj.h_path[points - 1]) - 1] += 1;
            if let Some(basis) = &basis {
                for (k, (&t, &b)) in grid.times().iter().zip(&traj.b_path).enumerate() {
                    let state = filtering::wavefunction(traj.outcome, b, t, config.sigma, &prior)?;
                    let snap = basis.evaluate(&state)?;
                    for (slot, &val) in acc.density[k * width..(k + 1) * width]
                        .iter_mut()
                        .zip(&snap.values)
                    {
                        slot.add(val);
                    }
                }
            }
            if options.keep_paths {
                acc.paths.push(traj);
            }
        }
        Ok(acc)
    };

    let chunks = runs.div_ceil(CHUNK);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads)
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    let parts: Vec<Result<Accumulator>> =
        pool.install(|| (0..chunks).into_par_iter().map(run_chunk).collect());

    let mut total = Accumulator::new(points, levels, points * width);
    for part in parts {
        total.merge(part?);
    }

    let (mean_h, se_h) = total.h.mean_and_se();
    let (mean_v, se_v) = total.v.mean_and_se();
    let (mean_dv, se_dv) = total.dv.mean_and_se();
    let density = basis.map(|b| DensitySurface {
        x_grid: b.x_grid().to_vec(),
        times: grid.times().to_vec(),
        values: total
            .density
            .chunks(width)
            .map(|row| row.iter().map(|s| s.value() / runs as f64).collect())
            .collect(),
    });
    Ok(EnsembleSummary {
        runs,
        initial_level: n,
        config: config.clone(),
        initial_energy: prior.initial_energy(),
        checkpoint_times: grid.times().to_vec(),
        mean_h,
        se_h,
        mean_v,
        se_v,
        mean_dv,
        se_dv,
        outcome_counts: total.outcomes,
        terminal_level_counts: total.terminal,
        density,
        paths: total.paths,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyReport {
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
    /// `(f − π)/√(π(1 − π)/M)` per level; infinite when a level with no
    /// weight is hit.
    pub z_scores: Vec<f64>,
    /// Largest `|z|` over the levels with `Mπ ≥ 5`.
    pub max_abs_z: f64,
    /// Levels with zero weight that were nevertheless observed.
    pub impossible_hits: usize,
    /// Pooled count and expectation over the sparse levels (`0 < Mπ < 5`).
    pub tail_count: usize,
    pub tail_expected: f64,
    /// Smaller one-sided exact binomial tail probability of the pooled count.
    pub tail_p_value: f64,
    /// Chi-square over the levels with `Mπ ≥ 5`.
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    pub passed: bool,
}

/// One-sided probability matching a 3σ normal band.
const THREE_SIGMA_TAIL: f64 = 1.349_898_031_630_094_6e-3;

/// Compare sampled terminal frequencies with a transition row.
///
/// Levels expected at least five times get a binomial z-score each; the
/// sparse remainder is pooled into one cell tested with the exact binomial
/// distribution, since a single hit on a level of weight `≪ 1/M` would
/// otherwise read as a many-sigma excursion.
pub fn terminal_frequency_test(
    summary: &EnsembleSummary,
    row: &TransitionRow,
) -> Result<FrequencyReport> {
    if summary.mode() != OutcomeMode::Sample {
        return Err(Error::WrongMode(
            "terminal frequencies need sampled outcomes".into(),
        ));
    }
    if row.probs.len() != summary.outcome_counts.len() {
        return Err(Error::GridMismatch(format!(
            "row has {} levels, summary has {}",
            row.probs.len(),
            summary.outcome_counts.len()
        )));
    }
    let m = summary.runs as f64;
    let observed = summary.terminal_frequency();
    let mut z_scores = Vec::with_capacity(observed.len());
    let (mut chi, mut cells, mut max_abs_z) = (0.0, 0usize, 0.0f64);
    let (mut impossible_hits, mut tail_count, mut tail_prob) = (0usize, 0usize, 0.0);
    for ((&f, &p), &count) in observed.iter().zip(&row.probs).zip(&summary.outcome_counts) {
        let z = if p <= 0.0 || p >= 1.0 {
            if f == p {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (f - p) / (p * (1.0 - p) / m).sqrt()
        };
        z_scores.push(z);
        if p <= 0.0 {
            impossible_hits += count;
        } else if m * p >= 5.0 {
            chi += (f - p) * (f - p) * m / p;
            cells += 1;
            max_abs_z = max_abs_z.max(z.abs());
        } else {
            tail_count += count;
            tail_prob += p;
        }
    }
    let tail_p_value = if tail_prob > 0.0 {
        let b = Binomial::new(tail_prob.min(1.0), summary.runs as u64)
            .map_err(|e| Error::Domain(e.to_string()))?;
        let k = tail_count as u64;
        let upper = if k == 0 { 1.0 } else { b.sf(k - 1) };
        upper.min(b.cdf(k))
    } else {
        1.0
    };
    let dof = cells.saturating_sub(1);
    let p_value = if dof > 0 {
        ChiSquared::new(dof as f64)
            .map(|d| d.sf(chi))
            .unwrap_or(f64::NAN)
    } else {
        1.0
    };
    Ok(FrequencyReport {
        observed,
        expected: row.probs.clone(),
        passed: max_abs_z < 3.0 && impossible_hits == 0 && tail_p_value >= THREE_SIGMA_TAIL,
        z_scores,
        max_abs_z,
        impossible_hits,
        tail_count,
        tail_expected: m * tail_prob,
        tail_p_value,
        chi_square: chi,
        dof,
        p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub reference: f64,
    /// One entry per checkpoint; `None` where the standard error is zero and
    /// the checkpoint was skipped.
    pub z_scores: Vec<Option<f64>>,
    pub max_abs_z: f64,
    pub passed: bool,
}

/// `z = (mean H − H_0)/se` at every checkpoint, with `H_0` the expected
/// energy of the truncated initial state. Deterministic checkpoints must
/// match exactly.
pub fn martingale_test(summary: &EnsembleSummary) -> Result<MartingaleReport> {
    let report = martingale_test_against(summary, summary.initial_energy)?;
    let exact = summary
        .mean_h
        .iter()
        .zip(&summary.se_h)
        .filter(|(_, &se)| se == 0.0)
        .all(|(&h, _)| (h - summary.initial_energy).abs() <= 1e-12 * summary.initial_energy.abs());
    Ok(MartingaleReport {
        passed: report.passed && exact,
        ..report
    })
}

/// `z = (mean H − reference)/se` over the checkpoints with positive standard
/// error.
pub fn martingale_test_against(
    summary: &EnsembleSummary,
    reference: f64,
) -> Result<MartingaleReport> {
    if summary.mode() != OutcomeMode::Sample {
        return Err(Error::WrongMode(
            "the conditioned energy process is not a martingale".into(),
        ));
    }
    let z_scores: Vec<Option<f64>> = summary
        .mean_h
        .iter()
        .zip(&summary.se_h)
        .map(|(&h, &se)| (se > 0.0).then(|| (h - reference) / se))
        .collect();
    let max_abs_z = z_scores
        .iter()
        .flatten()
        .fold(0.0f64, |a, z| a.max(z.abs()));
    Ok(MartingaleReport {
        reference,
        z_scores,
        max_abs_z,
        passed: max_abs_z < 3.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupermartingaleReport {
    /// Mean per-path increment of `V` between consecutive checkpoints.
    pub increments: Vec<f64>,
    /// Allowed rise per step: one standard error of that mean increment.
    pub slack: Vec<f64>,
    /// Smallest `slack − increment`; negative on failure.
    pub worst_margin: f64,
    pub passed: bool,
}

/// Mean variance non-increasing across checkpoints up to one standard error
/// per step. The error is that of the paired increment, the quantity under
/// test, rather than of either level.
pub fn supermartingale_test(summary: &EnsembleSummary) -> Result<SupermartingaleReport> {
    if summary.mode() != OutcomeMode::Sample {
        return Err(Error::WrongMode(
            "supermartingale test needs sampled outcomes".into(),
        ));
    }
    let increments = summary.mean_dv.clone();
    let slack = summary.se_dv.clone();
    let worst_margin = increments
        .iter()
        .zip(&slack)
        .map(|(d, s)| s - d)
        .fold(f64::INFINITY, f64::min);
    Ok(SupermartingaleReport {
        increments,
        slack,
        worst_margin,
        passed: worst_margin >= 0.0,
    })
}

/// The mean density surface, if the ensemble recorded one.
pub fn mean_density_surface(summary: &EnsembleSummary) -> Result<&DensitySurface> {
    summary
        .density
        .as_ref()
        .ok_or_else(|| Error::config("density_points", "ensemble was run without a density grid"))
}
