//! Euler–Maruyama integration of the energy-driven stochastic Schrödinger
//! equation in the expanded-well eigenbasis:
//!
//! `da_m = (−iE_m − ⅛σ²(E_m − H)²) a_m dt + ½σ(E_m − H) a_m dW`.
//!
//! The Hamiltonian is diagonal here, so each amplitude couples to the others
//! only through `H`. This route shares nothing with [`crate::filtering`]
//! except the prior, which makes it an independent check of the closed form.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{self, Prior, SdeConfig, StateVector, TimeGrid};
use crate::numeric;
use crate::rng;

/// Tolerance on `|ψ|² − 1` accepted by [`drift_diffusion`].
pub const NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub renormalise_each_step: bool,
    pub sigma: f64,
    pub truncation: usize,
}

impl IntegratorConfig {
    pub fn new(dt: f64, sigma: f64, truncation: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config("dt", format!("must be > 0, got {dt}")));
        }
        if truncation < 2 {
            return Err(Error::config("truncation", "must be >= 2"));
        }
        if !(sigma >= 0.0) {
            return Err(Error::config("sigma", "must be >= 0"));
        }
        Ok(IntegratorConfig {
            dt,
            scheme: Scheme::EulerMaruyama,
            renormalise_each_step: true,
            sigma,
            truncation,
        })
    }

    pub fn without_renormalisation(mut self) -> Self {
        self.renormalise_each_step = false;
        self
    }
}

/// Coefficients of the SDE at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftDiffusion {
    pub drift: Vec<Complex64>,
    pub diffusion: Vec<Complex64>,
    pub energy: f64,
    pub variance: f64,
}

/// `(H, V)` of a possibly unnormalised state, as ratios over `⟨ψ|ψ⟩`.
pub fn moments(state: &StateVector, energies: &[f64]) -> (f64, f64) {
    let norm = state.norm_sqr();
    let h = state
        .amplitudes
        .iter()
        .zip(energies)
        .map(|(a, e)| a.norm_sqr() * e)
        .sum::<f64>()
        / norm;
    let v = state
        .amplitudes
        .iter()
        .zip(energies)
        .map(|(a, e)| a.norm_sqr() * (e - h) * (e - h))
        .sum::<f64>()
        / norm;
    (h, v)
}

/// Third central moment `β = ⟨(Ĥ − H)³⟩`.
pub fn third_moment(state: &StateVector, energies: &[f64]) -> f64 {
    filtering::energy_third_moment(&normalised_probs(state), energies)
}

fn normalised_probs(state: &StateVector) -> Vec<f64> {
    let norm = state.norm_sqr();
    state
        .amplitudes
        .iter()
        .map(|a| a.norm_sqr() / norm)
        .collect()
}

fn coefficients(state: &StateVector, energies: &[f64], sigma: f64) -> DriftDiffusion {
    let (h, v) = moments(state, energies);
    let i = Complex64::new(0.0, 1.0);
    let mut drift = Vec::with_capacity(energies.len());
    let mut diffusion = Vec::with_capacity(energies.len());
    for (a, &e) in state.amplitudes.iter().zip(energies) {
        let d = e - h;
        drift.push((-i * e - 0.125 * sigma * sigma * d * d) * a);
        diffusion.push(0.5 * sigma * d * a);
    }
    DriftDiffusion {
        drift,
        diffusion,
        energy: h,
        variance: v,
    }
}

/// Drift and diffusion vectors, with `H` and `V`, at a normalised state.
pub fn drift_diffusion(
    state: &StateVector,
    energies: &[f64],
    sigma: f64,
) -> Result<DriftDiffusion> {
    let n = state.norm_sqr();
    if (n - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalised(n));
    }
    if state.amplitudes.len() != energies.len() {
        return Err(Error::GridMismatch(
            "state and spectrum sizes differ".into(),
        ));
    }
    Ok(coefficients(state, energies, sigma))
}

/// One Euler–Maruyama step with Wiener increment `dw`.
pub fn step(
    state: &StateVector,
    dw: f64,
    energies: &[f64],
    config: &IntegratorConfig,
) -> StateVector {
    let c = coefficients(state, energies, config.sigma);
    let amplitudes = state
        .amplitudes
        .iter()
        .zip(c.drift.iter().zip(&c.diffusion))
        .map(|(a, (f, g))| a + f * config.dt + g * dw)
        .collect();
    let mut next = StateVector {
        amplitudes,
        time: state.time + config.dt,
    };
    if config.renormalise_each_step {
        next.normalise();
    }
    next
}

/// Interpolate a Wiener path sampled every `h` down to spacing `h / factor`
/// with Brownian bridges; the original samples are kept exactly.
pub fn refine_brownian<R: Rng + ?Sized>(
    values: &[f64],
    h: f64,
    factor: usize,
    rng: &mut R,
) -> Vec<f64> {
    assert!(factor >= 1);
    if factor == 1 || values.len() < 2 {
        return values.to_vec();
    }
    let dt = h / factor as f64;
    let mut out = Vec::with_capacity((values.len() - 1) * factor + 1);
    out.push(values[0]);
    for w in values.windows(2) {
        let mut cur = w[0];
        for i in 0..factor - 1 {
            let remaining = h - i as f64 * dt;
            let mean = cur + (w[1] - cur) * dt / remaining;
            let var = dt * (remaining - dt) / remaining;
            let z: f64 = rng.sample(StandardNormal);
            cur = mean + var.sqrt() * z;
            out.push(cur);
        }
        out.push(w[1]);
    }
    out
}

/// Integrate from `psi0` driven by the Wiener path `w_values` on `w_grid`.
///
/// The grid must be uniform. When `config.dt` is a whole multiple of the grid
/// spacing the path is subsampled; when it divides the spacing the path is
/// refined with Brownian bridges drawn from `bridge_seed`. Returns the state
/// at every integrator step, starting with `psi0`.
pub fn integrate_with_noise(
    psi0: &StateVector,
    w_grid: &TimeGrid,
    w_values: &[f64],
    energies: &[f64],
    config: &IntegratorConfig,
    bridge_seed: u64,
) -> Result<Vec<StateVector>> {
    if w_values.len() != w_grid.len() {
        return Err(Error::GridMismatch(
            "noise path and grid lengths differ".into(),
        ));
    }
    if psi0.amplitudes.len() != energies.len() {
        return Err(Error::GridMismatch(
            "state and spectrum sizes differ".into(),
        ));
    }
    let noise = if w_grid.len() == 1 {
        vec![w_values[0]]
    } else {
        let h = w_grid
            .uniform_step()
            .ok_or_else(|| Error::GridMismatch("noise grid is not uniform".into()))?;
        let ratio = config.dt / h;
        if ratio >= 1.0 - 1e-9 {
            let k = ratio.round() as usize;
            if (ratio - k as f64).abs() > 1e-6 * ratio || !(w_grid.len() - 1).is_multiple_of(k) {
                return Err(Error::GridMismatch(format!(
                    "dt = {} is not a whole multiple of the noise spacing {h} dividing the horizon",
                    config.dt
                )));
            }
            w_values.iter().step_by(k).copied().collect()
        } else {
            let inv = 1.0 / ratio;
            let k = inv.round() as usize;
            if (inv - k as f64).abs() > 1e-6 * inv {
                return Err(Error::GridMismatch(format!(
                    "dt = {} does not divide the noise spacing {h}",
                    config.dt
                )));
            }
            let mut r = rng::stream(bridge_seed, rng::AUX_STREAM_BASE);
            refine_brownian(w_values, h, k, &mut r)
        }
    };
    let mut states = Vec::with_capacity(noise.len());
    let mut psi = psi0.clone();
    psi.time = w_grid.times()[0];
    states.push(psi.clone());
    for w in noise.windows(2) {
        psi = step(&psi, w[1] - w[0], energies, config);
        states.push(psi.clone());
    }
    Ok(states)
}

/// `H` along a sequence of states.
pub fn energy_path(states: &[StateVector], energies: &[f64]) -> Vec<f64> {
    states.iter().map(|s| moments(s, energies).0).collect()
}

/// Outcome of a filtering-versus-integrator convergence study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckReport {
    pub fine_dt: f64,
    /// Integrator step sizes, coarsest first.
    pub dts: Vec<f64>,
    /// `max_t |H_EM − H_exact|` per step size (outer) and path (inner).
    pub max_errors: Vec<Vec<f64>>,
    /// Mean over paths of the max error, per step size.
    pub mean_max_error: Vec<f64>,
    /// Whether the integrator ends nearest the same level as the exact path,
    /// per step size and path.
    pub terminal_agreement: Vec<Vec<bool>>,
}

impl CrosscheckReport {
    /// Ratio of consecutive mean errors (coarse / fine).
    pub fn error_ratios(&self) -> Vec<f64> {
        self.mean_max_error
            .windows(2)
            .map(|w| w[0] / w[1])
            .collect()
    }

    /// Geometric mean over paths of the max error, per step size. Less
    /// sensitive than the arithmetic mean to the odd path that lingers near
    /// a level crossing.
    pub fn geometric_mean_error(&self) -> Vec<f64> {
        self.max_errors
            .iter()
            .map(|e| {
                (e.iter().map(|x| x.max(f64::MIN_POSITIVE).ln()).sum::<f64>() / e.len() as f64)
                    .exp()
            })
            .collect()
    }

    /// Least-squares slope of `ln(geometric error)` against `ln dt`: the
    /// observed strong order.
    pub fn fitted_order(&self) -> f64 {
        let x: Vec<f64> = self.dts.iter().map(|d| d.ln()).collect();
        let y: Vec<f64> = self.geometric_mean_error().iter().map(|e| e.ln()).collect();
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        sxy / sxx
    }

    /// Fraction of paths whose terminal level matches, per step size.
    pub fn agreement_fraction(&self) -> Vec<f64> {
        self.terminal_agreement
            .iter()
            .map(|a| a.iter().filter(|&&b| b).count() as f64 / a.len() as f64)
            .collect()
    }
}

/// Run `paths` exact trajectories on a fine uniform grid, extract their
/// innovations paths, and re-integrate each with Euler–Maruyama at
/// `fine_dt · coarsening[i]`. Coarsening factors must divide `fine_steps`.
pub fn crosscheck(
    prior: &Prior,
    sigma: f64,
    t_end: f64,
    fine_steps: usize,
    coarsening: &[usize],
    paths: usize,
    seed: u64,
) -> Result<CrosscheckReport> {
    let grid = TimeGrid::uniform(t_end, fine_steps)?;
    let fine_dt = t_end / fine_steps as f64;
    let config = SdeConfig::new(sigma, grid.clone(), seed, filtering::OutcomeMode::Sample)?;
    let mut max_errors = vec![Vec::with_capacity(paths); coarsening.len()];
    let mut agreement = vec![Vec::with_capacity(paths); coarsening.len()];
    for p in 0..paths as u64 {
        let traj = filtering::simulate_trajectory(prior, &config, p)?;
        let psi0 = StateVector::from_prior(prior);
        for (ci, &k) in coarsening.iter().enumerate() {
            let ic = IntegratorConfig::new(fine_dt * k as f64, sigma, prior.len())?;
            let states =
                integrate_with_noise(&psi0, &grid, &traj.w_path, &prior.energies, &ic, seed)?;
            let h_em = energy_path(&states, &prior.energies);
            let err = h_em
                .iter()
                .zip(traj.h_path.iter().step_by(k))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            max_errors[ci].push(err);
            let em_level = prior.nearest_level(*h_em.last().unwrap());
            let exact_level = prior.nearest_level(*traj.h_path.last().unwrap());
            agreement[ci].push(em_level == exact_level);
        }
    }
    let mean_max_error = max_errors
        .iter()
        .map(|e| e.iter().sum::<f64>() / e.len() as f64)
        .collect();
    Ok(CrosscheckReport {
        fine_dt,
        dts: coarsening.iter().map(|&k| fine_dt * k as f64).collect(),
        max_errors,
        mean_max_error,
        terminal_agreement: agreement,
    })
}

/// Cumulative `∫ H dt` along an integrator path, for diagnostics.
pub fn energy_integral(times: &[f64], h: &[f64]) -> Vec<f64> {
    numeric::cumulative_trapezoid(times, h)
}
