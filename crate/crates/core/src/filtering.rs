//! Exact solution of the energy-driven reduction dynamics by nonlinear
//! filtering.
//!
//! The terminal energy `H` is a random variable taking the value `E_m` with
//! probability `π_m`. Observing the information process `ξ_t = σtH + B_t`
//! and conditioning on it gives the posterior over levels, the energy and
//! variance processes, the wave function and the position density, all as
//! closed-form functions of `(ξ_t, t)`. Every weighted sum over levels is
//! evaluated in log space with the largest exponent subtracted first.

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{cumulative_trapezoid, softmax};
use crate::rng;
use crate::spectrum::{eigenfunction_unchecked, TransitionRow, WellModel};

/// Strictly increasing time grid starting at exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.first() != Some(&0.0) {
            return Err(Error::config("time_grid", "must start at exactly 0"));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("time_grid", "must be finite"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("time_grid", "must be strictly increasing"));
        }
        Ok(TimeGrid(times))
    }

    /// `steps + 1` equally spaced points on `[0, t_end]`.
    pub fn uniform(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || steps == 0 {
            return Err(Error::config(
                "time_grid",
                "needs t_end > 0 and at least one step",
            ));
        }
        let h = t_end / steps as f64;
        let mut v: Vec<f64> = (0..=steps).map(|k| k as f64 * h).collect();
        v[steps] = t_end;
        Self::new(v)
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn end(&self) -> f64 {
        *self.0.last().unwrap()
    }

    /// Uniform spacing of the grid, if it has one (relative tolerance 1e-9).
    pub fn uniform_step(&self) -> Option<f64> {
        if self.0.len() < 2 {
            return None;
        }
        let h = self.end() / (self.0.len() - 1) as f64;
        let ok = self
            .0
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
        ok.then_some(h)
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TimeGrid::new(v)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.0
    }
}

/// How the terminal level of a trajectory is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeMode {
    /// Drawn from the prior row.
    Sample,
    /// Fixed by the caller (1-based level index); may have zero prior weight.
    Forced(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub sigma: f64,
    pub time_grid: TimeGrid,
    pub rng_seed: u64,
    pub outcome_mode: OutcomeMode,
}

impl SdeConfig {
    pub fn new(
        sigma: f64,
        time_grid: TimeGrid,
        rng_seed: u64,
        outcome_mode: OutcomeMode,
    ) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::config("sigma", format!("must be > 0, got {sigma}")));
        }
        if let OutcomeMode::Forced(0) = outcome_mode {
            return Err(Error::config("outcome", "forced level index starts at 1"));
        }
        Ok(SdeConfig {
            sigma,
            time_grid,
            rng_seed,
            outcome_mode,
        })
    }
}

/// Prior over terminal levels: the transition row normalised over the
/// truncation, with the energies it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// Signed amplitudes, normalised so that their squares are `probs`.
    pub amplitudes: Vec<f64>,
    pub energies: Vec<f64>,
    /// `1 - Σ π_m` of the raw row before normalisation.
    pub deficit: f64,
}

impl Prior {
    pub fn new(row: &TransitionRow, energies: &[f64]) -> Result<Self> {
        if row.probs.len() != energies.len() {
            return Err(Error::GridMismatch(format!(
                "row has {} entries, spectrum has {}",
                row.probs.len(),
                energies.len()
            )));
        }
        let total = row.partial_sum();
        if !(total > 0.0) {
            return Err(Error::EmptyRow);
        }
        let probs: Vec<f64> = row.probs.iter().map(|p| p / total).collect();
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        let scale = total.sqrt();
        let amplitudes = row.amplitudes.iter().map(|a| a / scale).collect();
        Ok(Prior {
            probs,
            log_probs,
            amplitudes,
            energies: energies.to_vec(),
            deficit: row.deficit(),
        })
    }

    /// Prior for the quench of level `n` described by `model`.
    pub fn for_model(n: usize, model: &WellModel) -> Result<Self> {
        let row = TransitionRow::for_quench(n, model.alpha, model.truncation)?;
        Self::new(&row, &model.energies())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn initial_energy(&self) -> f64 {
        energy_expectation(&self.probs, &self.energies)
    }

    pub fn initial_variance(&self) -> f64 {
        energy_variance(&self.probs, &self.energies)
    }

    /// Level index (1-based) whose energy is closest to `e`.
    pub fn nearest_level(&self, e: f64) -> usize {
        let mut best = 0;
        for (i, &ei) in self.energies.iter().enumerate() {
            if (ei - e).abs() < (self.energies[best] - e).abs() {
                best = i;
            }
        }
        best + 1
    }

    fn energy_of(&self, j: usize) -> Result<f64> {
        self.energies
            .get(j.wrapping_sub(1))
            .copied()
            .ok_or_else(|| {
                Error::Domain(format!("level {j} outside truncation 1..={}", self.len()))
            })
    }
}

/// Draw a terminal level (1-based) with probability `π_j / Σ π_m`.
pub fn sample_outcome<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> Result<usize> {
    if !row.iter().any(|&p| p > 0.0) {
        return Err(Error::EmptyRow);
    }
    let dist = WeightedIndex::new(row).map_err(|_| Error::EmptyRow)?;
    Ok(dist.sample(rng) + 1)
}

/// Brownian motion sampled exactly on the grid.
pub fn sample_brownian<R: Rng + ?Sized>(grid: &TimeGrid, rng: &mut R) -> Vec<f64> {
    let t = grid.times();
    let mut path = Vec::with_capacity(t.len());
    path.push(0.0);
    let mut b = 0.0;
    for w in t.windows(2) {
        let z: f64 = rng.sample(StandardNormal);
        b += z * (w[1] - w[0]).sqrt();
        path.push(b);
    }
    path
}

/// `ξ_t = σ E_j t + B_t` on the grid.
pub fn information_process(e_j: f64, sigma: f64, b_path: &[f64], grid: &TimeGrid) -> Vec<f64> {
    grid.times()
        .iter()
        .zip(b_path)
        .map(|(&t, &b)| sigma * e_j * t + b)
        .collect()
}

fn xi_log_weights(xi: f64, t: f64, sigma: f64, prior: &Prior) -> Vec<f64> {
    prior
        .log_probs
        .iter()
        .zip(&prior.energies)
        .map(|(&lp, &e)| lp + sigma * e * xi - 0.5 * sigma * sigma * e * e * t)
        .collect()
}

/// Posterior `P(H = E_m | ξ_t)`.
pub fn posterior(xi: f64, t: f64, sigma: f64, prior: &Prior) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("t = {t} must be >= 0")));
    }
    Ok(softmax(&xi_log_weights(xi, t, sigma, prior)))
}

/// `Σ P_m E_m`.
pub fn energy_expectation(post: &[f64], energies: &[f64]) -> f64 {
    post.iter().zip(energies).map(|(p, e)| p * e).sum()
}

/// `Σ P_m (E_m − H)²`.
pub fn energy_variance(post: &[f64], energies: &[f64]) -> f64 {
    let h = energy_expectation(post, energies);
    post.iter()
        .zip(energies)
        .map(|(p, e)| p * (e - h) * (e - h))
        .sum()
}

/// `Σ P_m (E_m − H)³`.
pub fn energy_third_moment(post: &[f64], energies: &[f64]) -> f64 {
    let h = energy_expectation(post, energies);
    post.iter()
        .zip(energies)
        .map(|(p, e)| p * (e - h).powi(3))
        .sum()
}

/// `ln π_m + ln M_mj` with `M_mj = exp(σω_mj B − ½σ²ω_mj² t)`, `ω_mj = E_m − E_j`.
pub fn conditioned_log_weights(
    j: usize,
    b: f64,
    t: f64,
    sigma: f64,
    prior: &Prior,
) -> Result<Vec<f64>> {
    let e_j = prior.energy_of(j)?;
    Ok(prior
        .log_probs
        .iter()
        .zip(&prior.energies)
        .map(|(&lp, &e)| {
            let w = e - e_j;
            lp + sigma * w * b - 0.5 * sigma * sigma * w * w * t
        })
        .collect())
}

/// Posterior along a path conditioned on `H = E_j`.
pub fn conditioned_posterior(
    j: usize,
    b: f64,
    t: f64,
    sigma: f64,
    prior: &Prior,
) -> Result<Vec<f64>> {
    Ok(softmax(&conditioned_log_weights(j, b, t, sigma, prior)?))
}

/// `H_t^j` on the grid, given the Brownian path of the information process.
pub fn conditional_energy_path(
    j: usize,
    b_path: &[f64],
    grid: &TimeGrid,
    sigma: f64,
    prior: &Prior,
) -> Result<Vec<f64>> {
    grid.times()
        .iter()
        .zip(b_path)
        .map(|(&t, &b)| {
            Ok(energy_expectation(
                &conditioned_posterior(j, b, t, sigma, prior)?,
                &prior.energies,
            ))
        })
        .collect()
}

/// `V_t^j` on the grid.
pub fn variance_path(
    j: usize,
    b_path: &[f64],
    grid: &TimeGrid,
    sigma: f64,
    prior: &Prior,
) -> Result<Vec<f64>> {
    grid.times()
        .iter()
        .zip(b_path)
        .map(|(&t, &b)| {
            Ok(energy_variance(
                &conditioned_posterior(j, b, t, sigma, prior)?,
                &prior.energies,
            ))
        })
        .collect()
}

/// Innovations `W_t = ξ_t − σ∫₀ᵗ H_s ds`, with the integral by trapezoid.
pub fn innovations_path(
    xi_path: &[f64],
    h_path: &[f64],
    sigma: f64,
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    let n = grid.len();
    if xi_path.len() != n || h_path.len() != n {
        return Err(Error::GridMismatch(format!(
            "grid has {n} points, xi has {}, H has {}",
            xi_path.len(),
            h_path.len()
        )));
    }
    let integral = cumulative_trapezoid(grid.times(), h_path);
    Ok(xi_path
        .iter()
        .zip(&integral)
        .map(|(&xi, &i)| xi - sigma * i)
        .collect())
}

/// Amplitudes over the expanded-well eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
}

impl StateVector {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn normalise(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            for a in &mut self.amplitudes {
                *a /= n;
            }
        }
    }

    /// Eigenstate `j` (1-based) of an `n`-level basis.
    pub fn eigenstate(j: usize, n: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); n];
        amplitudes[j - 1] = Complex64::new(1.0, 0.0);
        StateVector {
            amplitudes,
            time: 0.0,
        }
    }

    /// The post-quench state at `t = 0`.
    pub fn from_prior(prior: &Prior) -> Self {
        StateVector {
            amplitudes: prior
                .amplitudes
                .iter()
                .map(|&a| Complex64::new(a, 0.0))
                .collect(),
            time: 0.0,
        }
    }
}

fn state_from_log_weights(log_w: &[f64], t: f64, prior: &Prior) -> StateVector {
    let probs = softmax(log_w);
    let amplitudes = probs
        .iter()
        .zip(&prior.amplitudes)
        .zip(&prior.energies)
        .map(|((&p, &a0), &e)| {
            let modulus = p.sqrt();
            let signed = if a0 < 0.0 { -modulus } else { modulus };
            Complex64::from_polar(signed, -e * t)
        })
        .collect();
    StateVector {
        amplitudes,
        time: t,
    }
}

/// The wave function at `(ξ_t, t)`.
pub fn wavefunction_from_xi(xi: f64, t: f64, sigma: f64, prior: &Prior) -> StateVector {
    state_from_log_weights(&xi_log_weights(xi, t, sigma, prior), t, prior)
}

/// The wave function on a path conditioned on `H = E_j`, at Brownian value `b`.
pub fn wavefunction(j: usize, b: f64, t: f64, sigma: f64, prior: &Prior) -> Result<StateVector> {
    Ok(state_from_log_weights(
        &conditioned_log_weights(j, b, t, sigma, prior)?,
        t,
        prior,
    ))
}

/// Position density `ρ_t(x)` on a grid over the expanded well.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySnapshot {
    pub x_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensitySnapshot {
    pub fn integral(&self) -> f64 {
        crate::numeric::trapezoid(&self.x_grid, &self.values)
    }
}

/// Table of `χ_m(x)` for a fixed position grid, reused across snapshots.
#[derive(Debug, Clone)]
pub struct DensityBasis {
    x_grid: Vec<f64>,
    truncation: usize,
    // row-major: [x][m]
    table: Vec<f64>,
}

impl DensityBasis {
    pub fn new(x_grid: Vec<f64>, model: &WellModel) -> Result<Self> {
        let width = model.expanded_width();
        if let Some(x) = x_grid.iter().find(|x| !(0.0..=width).contains(*x)) {
            return Err(Error::Domain(format!(
                "x = {x} outside the well [0, {width}]"
            )));
        }
        let n = model.truncation;
        let mut table = Vec::with_capacity(x_grid.len() * n);
        for &x in &x_grid {
            for m in 1..=n {
                table.push(eigenfunction_unchecked(m, x, width));
            }
        }
        Ok(DensityBasis {
            x_grid,
            truncation: n,
            table,
        })
    }

    /// Uniform grid of `points` positions over `[0, αL]`.
    pub fn uniform(points: usize, model: &WellModel) -> Result<Self> {
        Self::new(
            crate::numeric::linspace(0.0, model.expanded_width(), points),
            model,
        )
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.x_grid
    }

    /// `ρ(x) = (Σ Re a_m χ_m)² + (Σ Im a_m χ_m)²`, the cosine and sine parts
    /// of the phase factors summed separately.
    pub fn evaluate(&self, state: &StateVector) -> Result<DensitySnapshot> {
        if state.amplitudes.len() != self.truncation {
            return Err(Error::GridMismatch(format!(
                "state has {} levels, basis has {}",
                state.amplitudes.len(),
                self.truncation
            )));
        }
        let values = self
            .table
            .chunks_exact(self.truncation)
            .map(|row| {
                let (mut c, mut s) = (0.0, 0.0);
                for (chi, a) in row.iter().zip(&state.amplitudes) {
                    c += a.re * chi;
                    s += a.im * chi;
                }
                c * c + s * s
            })
            .collect();
        Ok(DensitySnapshot {
            x_grid: self.x_grid.clone(),
            values,
            time: state.time,
        })
    }
}

/// Density of `state` on `x_grid`; positions must lie in `[0, αL]`.
pub fn density(state: &StateVector, x_grid: &[f64], model: &WellModel) -> Result<DensitySnapshot> {
    DensityBasis::new(x_grid.to_vec(), model)?.evaluate(state)
}

/// One realisation of the filtered dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredTrajectory {
    pub sigma: f64,
    pub time_grid: TimeGrid,
    /// Level (1-based) the run is conditioned on.
    pub outcome: usize,
    pub b_path: Vec<f64>,
    pub xi_path: Vec<f64>,
    pub posterior: Vec<Vec<f64>>,
    pub h_path: Vec<f64>,
    pub v_path: Vec<f64>,
    pub w_path: Vec<f64>,
}

impl FilteredTrajectory {
    pub fn times(&self) -> &[f64] {
        self.time_grid.times()
    }
}

/// Choose the outcome and Brownian path for stream `index` and build the trajectory.
pub fn simulate_trajectory(
    prior: &Prior,
    config: &SdeConfig,
    index: u64,
) -> Result<FilteredTrajectory> {
    let mut rng = rng::stream(config.rng_seed, index);
    let outcome = match config.outcome_mode {
        OutcomeMode::Sample => sample_outcome(&prior.probs, &mut rng)?,
        OutcomeMode::Forced(j) => {
            prior.energy_of(j)?;
            j
        }
    };
    let b_path = sample_brownian(&config.time_grid, &mut rng);
    trajectory_from_brownian(prior, config.sigma, &config.time_grid, outcome, b_path)
}

/// Build the trajectory for a given outcome and Brownian path.
pub fn trajectory_from_brownian(
    prior: &Prior,
    sigma: f64,
    grid: &TimeGrid,
    outcome: usize,
    b_path: Vec<f64>,
) -> Result<FilteredTrajectory> {
    if b_path.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "grid has {} points, Brownian path has {}",
            grid.len(),
            b_path.len()
        )));
    }
    let e_j = prior.energy_of(outcome)?;
    let xi_path = information_process(e_j, sigma, &b_path, grid);
    let mut posterior = Vec::with_capacity(grid.len());
    let mut h_path = Vec::with_capacity(grid.len());
    let mut v_path = Vec::with_capacity(grid.len());
    for (&t, &b) in grid.times().iter().zip(&b_path) {
        let p = conditioned_posterior(outcome, b, t, sigma, prior)?;
        h_path.push(energy_expectation(&p, &prior.energies));
        v_path.push(energy_variance(&p, &prior.energies));
        posterior.push(p);
    }
    let w_path = innovations_path(&xi_path, &h_path, sigma, grid)?;
    Ok(FilteredTrajectory {
        sigma,
        time_grid: grid.clone(),
        outcome,
        b_path,
        xi_path,
        posterior,
        h_path,
        v_path,
        w_path,
    })
}

/// Mean-reverting representation of `H^j`:
/// `E_j + (H_0 − E_j)e^{−σ²∫V} + σ∫e^{−σ²∫_u^t V}V_u dB_u`.
///
/// The `ds` integrals use the trapezoid rule; the `dB` integral uses the
/// left-point (Itô) sum.
pub fn ou_reconstruction(traj: &FilteredTrajectory, e_j: f64) -> Vec<f64> {
    let s2 = traj.sigma * traj.sigma;
    let t = traj.times();
    let int_v = cumulative_trapezoid(t, &traj.v_path);
    let h0 = traj.h_path[0];
    let mut out = Vec::with_capacity(t.len());
    // running Σ e^{σ²I(u_k)} V(u_k) ΔB_k, kept relative to e^{σ²I(t)}
    let mut acc = 0.0;
    out.push(h0);
    for k in 1..t.len() {
        let db = traj.b_path[k] - traj.b_path[k - 1];
        let decay = (-s2 * (int_v[k] - int_v[k - 1])).exp();
        acc = (acc + traj.v_path[k - 1] * db) * decay;
        out.push(e_j + (h0 - e_j) * (-s2 * int_v[k]).exp() + traj.sigma * acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn two_level() -> Prior {
        let row = TransitionRow::from_probs(vec![0.5, 0.5]).unwrap();
        Prior::new(&row, &[0.0, 1.0]).unwrap()
    }

    fn quench_prior(n: usize) -> (WellModel, Prior) {
        let model = WellModel::dimensionless(2.5, n).unwrap();
        let prior = Prior::for_model(1, &model).unwrap();
        (model, prior)
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(vec![0.0, 1.0, 2.0]).is_ok());
        assert!(TimeGrid::new(vec![0.1, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![]).is_err());
        assert_eq!(
            TimeGrid::uniform(1.0, 4).unwrap().uniform_step(),
            Some(0.25)
        );
        assert!(SdeConfig::new(
            0.0,
            TimeGrid::new(vec![0.0]).unwrap(),
            1,
            OutcomeMode::Sample
        )
        .is_err());
    }

    #[test]
    fn deterministic_row_always_samples_first() {
        let mut rng = rng::stream(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_outcome(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 1);
        }
        assert_eq!(sample_outcome(&[0.0, 0.0], &mut rng), Err(Error::EmptyRow));
    }

    #[test]
    fn symmetric_row_frequencies() {
        let mut rng = rng::stream(2, 0);
        let draws = 100_000;
        let ones = (0..draws)
            .filter(|_| sample_outcome(&[0.5, 0.5], &mut rng).unwrap() == 1)
            .count() as f64;
        let se = (0.25f64 / draws as f64).sqrt();
        assert!((ones / draws as f64 - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn quench_row_frequency_of_first_excited_level() {
        let (_, prior) = quench_prior(50);
        let mut rng = rng::stream(3, 0);
        let draws = 100_000;
        let mut counts = vec![0usize; 50];
        for _ in 0..draws {
            counts[sample_outcome(&prior.probs, &mut rng).unwrap() - 1] += 1;
        }
        let p = prior.probs[1];
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((counts[1] as f64 / draws as f64 - p).abs() < 3.0 * se);
        assert!((p - 0.43).abs() < 0.01);
        assert_eq!(counts[4], 0);
    }

    #[test]
    fn brownian_on_single_point_grid() {
        let g = TimeGrid::new(vec![0.0]).unwrap();
        assert_eq!(sample_brownian(&g, &mut rng::stream(0, 0)), vec![0.0]);
    }

    #[test]
    fn information_process_limits() {
        let g = TimeGrid::uniform(2.0, 4).unwrap();
        let zero = vec![0.0; 5];
        let xi = information_process(3.0, 0.5, &zero, &g);
        for (x, t) in xi.iter().zip(g.times()) {
            assert!((x - 1.5 * t).abs() < 1e-15);
        }
        assert_eq!(xi[0], 0.0);
        let b = vec![0.0, 0.3, -0.2, 0.1, 0.7];
        assert_eq!(information_process(3.0, 0.0, &b, &g), b);
    }

    #[test]
    fn posterior_examples() {
        let (_, prior) = quench_prior(50);
        let p0 = posterior(0.0, 0.0, 1.0, &prior).unwrap();
        for (a, b) in p0.iter().zip(&prior.probs) {
            assert!((a - b).abs() < 1e-15);
        }
        let two = two_level();
        for &t in &[0.1, 1.0, 7.0] {
            for &xi in &[-2.0, 0.0, 0.3, 5.0] {
                let p = posterior(xi, t, 1.0, &two).unwrap();
                let oracle = 1.0 / (1.0 + (-xi + t / 2.0).exp());
                assert!((p[1] - oracle).abs() < 1e-14);
            }
            let p = posterior(t / 2.0, t, 1.0, &two).unwrap();
            assert!((p[1] - 0.5).abs() < 1e-15);
        }
        let flat = Prior::new(
            &TransitionRow::from_probs(vec![0.2, 0.3, 0.5]).unwrap(),
            &[4.0, 4.0, 4.0],
        )
        .unwrap();
        let p = posterior(12.0, 3.0, 2.0, &flat).unwrap();
        for (a, b) in p.iter().zip(&flat.probs) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(posterior(0.0, -1.0, 1.0, &flat).is_err());
    }

    #[test]
    fn posterior_survives_large_exponents() {
        let (_, prior) = quench_prior(50);
        let p = posterior(3.0e3, 50.0, 1.0, &prior).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_expectation_examples() {
        let (_, prior) = quench_prior(50);
        let h0 = prior.initial_energy();
        assert!((h0 - PI * PI).abs() / (PI * PI) < 0.05);
        let e = &prior.energies;
        let mut concentrated = vec![0.0; 50];
        concentrated[2] = 1.0;
        assert_eq!(energy_expectation(&concentrated, e), e[2]);
        assert_eq!(energy_variance(&concentrated, e), 0.0);
        assert_eq!(energy_expectation(&[0.5, 0.5], &[0.0, 1.0]), 0.5);
    }

    #[test]
    fn unit_alpha_energy_is_frozen() {
        let model = WellModel::dimensionless(1.0, 20).unwrap();
        let prior = Prior::for_model(1, &model).unwrap();
        let g = TimeGrid::uniform(5.0, 50).unwrap();
        let b = sample_brownian(&g, &mut rng::stream(9, 0));
        let h = conditional_energy_path(1, &b, &g, 1.0, &prior).unwrap();
        assert!(h.iter().all(|&x| x == prior.energies[0]));
    }

    #[test]
    fn variance_at_start_matches_moments() {
        let (_, prior) = quench_prior(50);
        let m1: f64 = prior
            .probs
            .iter()
            .zip(&prior.energies)
            .map(|(p, e)| p * e)
            .sum();
        let m2: f64 = prior
            .probs
            .iter()
            .zip(&prior.energies)
            .map(|(p, e)| p * e * e)
            .sum();
        let g = TimeGrid::new(vec![0.0]).unwrap();
        let v = variance_path(2, &[0.0], &g, 1.0, &prior).unwrap();
        assert!((v[0] - (m2 - m1 * m1)).abs() < 1e-9 * m2);
    }

    #[test]
    fn innovations_equal_brownian_for_eigenstate_prior() {
        let row = TransitionRow::from_probs(vec![0.0, 1.0, 0.0]).unwrap();
        let prior = Prior::new(&row, &[1.0, 4.0, 9.0]).unwrap();
        let g = TimeGrid::uniform(3.0, 300).unwrap();
        let config = SdeConfig::new(0.7, g, 5, OutcomeMode::Sample).unwrap();
        let traj = simulate_trajectory(&prior, &config, 0).unwrap();
        assert_eq!(traj.outcome, 2);
        for (w, b) in traj.w_path.iter().zip(&traj.b_path) {
            assert!((w - b).abs() < 1e-12);
        }
        let single = TimeGrid::new(vec![0.0]).unwrap();
        assert_eq!(
            innovations_path(&[0.0], &[4.0], 1.0, &single).unwrap(),
            vec![0.0]
        );
        assert!(innovations_path(&[0.0, 1.0], &[4.0], 1.0, &single).is_err());
    }

    #[test]
    fn unitary_limit_keeps_moduli() {
        let (_, prior) = quench_prior(20);
        for &t in &[0.0, 0.5, 3.0] {
            let psi = wavefunction_from_xi(0.0, t, 0.0, &prior);
            for (a, p) in psi.amplitudes.iter().zip(&prior.probs) {
                assert!((a.norm() - p.sqrt()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn amplitudes_square_to_posterior() {
        let (_, prior) = quench_prior(50);
        let g = TimeGrid::uniform(4.0, 200).unwrap();
        for idx in 0..5 {
            let config = SdeConfig::new(1.0, g.clone(), 11, OutcomeMode::Sample).unwrap();
            let traj = simulate_trajectory(&prior, &config, idx).unwrap();
            for (k, (&t, &b)) in g.times().iter().zip(&traj.b_path).enumerate() {
                let psi = wavefunction(traj.outcome, b, t, 1.0, &prior).unwrap();
                assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
                for (a, p) in psi.amplitudes.iter().zip(&traj.posterior[k]) {
                    assert!((a.norm_sqr() - p).abs() < 1e-12);
                }
                let from_xi = wavefunction_from_xi(traj.xi_path[k], t, 1.0, &prior);
                for (a, p) in from_xi.amplitudes.iter().zip(&traj.posterior[k]) {
                    assert!((a.norm_sqr() - p).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let (model, prior) = quench_prior(50);
        let basis = DensityBasis::uniform(512, &model).unwrap();
        for &(b, t) in &[(0.0, 0.0), (0.4, 0.1), (-1.0, 0.7), (2.0, 5.0)] {
            let psi = wavefunction(2, b, t, 1.0, &prior).unwrap();
            let rho = basis.evaluate(&psi).unwrap();
            assert!(rho.values.iter().all(|&v| v >= 0.0));
            assert!((rho.integral() - 1.0).abs() < 1e-6);
        }
        assert!(density(&StateVector::from_prior(&prior), &[-0.1], &model).is_err());
        assert!(density(&StateVector::from_prior(&prior), &[2.6], &model).is_err());
    }

    #[test]
    fn late_density_is_terminal_eigenfunction() {
        let (model, prior) = quench_prior(50);
        let g = TimeGrid::uniform(20.0, 400).unwrap();
        let config = SdeConfig::new(1.0, g, 21, OutcomeMode::Forced(2)).unwrap();
        let traj = simulate_trajectory(&prior, &config, 0).unwrap();
        let k = traj.b_path.len() - 1;
        let psi = wavefunction(2, traj.b_path[k], 20.0, 1.0, &prior).unwrap();
        let xs = crate::numeric::linspace(0.0, 2.5, 101);
        let rho = density(&psi, &xs, &model).unwrap();
        for (x, v) in xs.iter().zip(&rho.values) {
            let chi = eigenfunction_unchecked(2, *x, 2.5);
            assert!((v - chi * chi).abs() < 1e-6);
        }
    }

    #[test]
    fn forced_zero_weight_level_falls_to_nearest() {
        let (_, prior) = quench_prior(50);
        assert_eq!(prior.probs[4], 0.0);
        let g = TimeGrid::uniform(40.0, 200).unwrap();
        let config = SdeConfig::new(1.0, g, 8, OutcomeMode::Forced(5)).unwrap();
        let traj = simulate_trajectory(&prior, &config, 0).unwrap();
        let h_end = *traj.h_path.last().unwrap();
        assert!((h_end - prior.energies[3]).abs() < 1e-6, "{h_end}");
        assert_eq!(prior.nearest_level(h_end), 4);
    }
}
