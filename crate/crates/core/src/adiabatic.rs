//! Slowly varying wells.
//!
//! Everything here lives in the instantaneous eigenbasis of a well whose
//! width follows a schedule `L(t)`, with the basis-rotation couplings
//! `⟨χ_j|∂_tχ_k⟩` neglected. In that approximation the occupation
//! probabilities `Π^k = |a_k|²` obey `dΠ^k = σ(E_k(t) − H_t)Π^k dW`: they are
//! martingales and every eigenstate is a fixed point.
//!
//! The staircase routines drop the approximation in the other direction: the
//! schedule becomes a sequence of small sudden expansions with reduction in
//! between, which is exact for the staircase itself.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::TimeGrid;
use crate::numeric::Moments;
use crate::rng;
use crate::spectrum::overlap;

/// A width schedule `t ↦ L(t)`.
pub trait WidthSchedule: Sync {
    fn width(&self, t: f64) -> f64;

    /// `dL/dt`; central difference with step `h` unless overridden.
    fn width_rate(&self, t: f64, h: f64) -> f64 {
        (self.width(t + h) - self.width(t - h)) / (2.0 * h)
    }
}

/// Linearly expanding well `L(t) = L0(1 + vt)`, with energies in units of
/// `ε` for the reference width 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeDependentWell {
    pub l0: f64,
    pub rate: f64,
    pub truncation: usize,
}

impl TimeDependentWell {
    pub fn new(l0: f64, rate: f64, truncation: usize) -> Result<Self> {
        if !(l0 > 0.0 && l0.is_finite()) {
            return Err(Error::config("l0", "must be finite and > 0"));
        }
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::config("rate", "must be finite and >= 0"));
        }
        if truncation == 0 {
            return Err(Error::config("truncation", "must be >= 1"));
        }
        Ok(TimeDependentWell {
            l0,
            rate,
            truncation,
        })
    }

    /// `Ė_k = −2vE_k/(1 + vt)`.
    pub fn energy_rates(&self, t: f64) -> Vec<f64> {
        let s = -2.0 * self.rate / (1.0 + self.rate * t);
        instantaneous_spectrum(t, self)
            .into_iter()
            .map(|e| s * e)
            .collect()
    }
}

impl WidthSchedule for TimeDependentWell {
    fn width(&self, t: f64) -> f64 {
        self.l0 * (1.0 + self.rate * t)
    }

    fn width_rate(&self, _t: f64, _h: f64) -> f64 {
        self.l0 * self.rate
    }
}

/// `E_k(t) = π²k²/L(t)²` for `k = 1..N`.
pub fn instantaneous_spectrum(t: f64, well: &TimeDependentWell) -> Vec<f64> {
    spectrum_for_width(well.width(t), well.truncation)
}

fn spectrum_for_width(width: f64, truncation: usize) -> Vec<f64> {
    let s = PI * PI / (width * width);
    (1..=truncation).map(|k| s * (k * k) as f64).collect()
}

/// Energy rates for an arbitrary schedule, by central differences of the
/// spectrum with step `dt/10`.
pub fn energy_rates_numeric<S: WidthSchedule + ?Sized>(
    schedule: &S,
    t: f64,
    dt: f64,
    truncation: usize,
) -> Vec<f64> {
    let h = dt / 10.0;
    let hi = spectrum_for_width(schedule.width(t + h), truncation);
    let lo = spectrum_for_width(schedule.width(t - h), truncation);
    hi.iter()
        .zip(&lo)
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect()
}

fn weighted_mean(p: &[f64], x: &[f64]) -> f64 {
    p.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn weighted_var(p: &[f64], x: &[f64]) -> f64 {
    let m = weighted_mean(p, x);
    p.iter()
        .zip(x)
        .map(|(a, b)| a * (b - m) * (b - m))
        .sum::<f64>()
        .max(0.0)
}

fn weighted_cov(p: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (weighted_mean(p, x), weighted_mean(p, y));
    p.iter()
        .zip(x)
        .zip(y)
        .map(|((a, b), c)| a * (b - mx) * (c - my))
        .sum()
}

/// Result of one [`pi_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct PiStep {
    pub pi: Vec<f64>,
    /// Components that went negative and were set to zero.
    pub clamped: usize,
}

/// Euler–Maruyama step `Π^k += σ(E_k − H)Π^k dW`, `H = Σ E_k Π^k`, with
/// negative components clamped to zero and the result renormalised.
pub fn pi_step(pi: &[f64], dw: f64, energies: &[f64], sigma: f64) -> PiStep {
    let h = weighted_mean(pi, energies);
    let mut clamped = 0;
    let mut next: Vec<f64> = pi
        .iter()
        .zip(energies)
        .map(|(&p, &e)| {
            let q = p + sigma * (e - h) * p * dw;
            if q < 0.0 {
                clamped += 1;
                0.0
            } else {
                q
            }
        })
        .collect();
    let s: f64 = next.iter().sum();
    if s > 0.0 {
        next.iter_mut().for_each(|q| *q /= s);
    }
    PiStep { pi: next, clamped }
}

/// `dH = Ḣ dt + σV dW` with `Ḣ = Σ p_k (E_k(t+dt) − E_k(t))/dt`.
pub fn drifted_energy_increment(
    probs: &[f64],
    energies_now: &[f64],
    energies_next: &[f64],
    dt: f64,
    sigma: f64,
    dw: f64,
) -> f64 {
    let h_dot: f64 = probs
        .iter()
        .zip(energies_now.iter().zip(energies_next))
        .map(|(p, (a, b))| p * (b - a) / dt)
        .sum();
    h_dot * dt + sigma * weighted_var(probs, energies_now) * dw
}

/// Extra variance drift `2 Cov(Ĥ, ∂_tĤ) = 2(Σ p_k E_k Ė_k − H Ḣ)`.
pub fn variance_covariance_drift(probs: &[f64], energies: &[f64], rates: &[f64]) -> f64 {
    2.0 * weighted_cov(probs, energies, rates)
}

/// Correlation of `Ĥ` and `∂_tĤ` in the state, clamped to `[−1, 1]`;
/// `None` when either spread vanishes.
pub fn correlation(probs: &[f64], energies: &[f64], rates: &[f64]) -> Option<f64> {
    let sh = weighted_var(probs, energies).sqrt();
    let sd = weighted_var(probs, rates).sqrt();
    if sh == 0.0 || sd == 0.0 {
        return None;
    }
    Some((weighted_cov(probs, energies, rates) / (sh * sd)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionStatus {
    Holds,
    Fails,
    /// The state is an eigenstate; there is no variance left to reduce.
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionCheck {
    /// `ΔḢ / ΔH`.
    pub lhs: f64,
    /// `½σ²(ΔH)²`.
    pub rhs: f64,
    pub status: ConditionStatus,
}

/// Sufficient condition `ΔḢ/ΔH < ½σ²(ΔH)²` for the variance to remain a
/// supermartingale under a moving Hamiltonian.
pub fn supermartingale_condition(
    probs: &[f64],
    energies: &[f64],
    rates: &[f64],
    sigma: f64,
) -> ConditionCheck {
    let v = weighted_var(probs, energies);
    let scale = energies.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    if v <= 1e-28 * scale * scale {
        return ConditionCheck {
            lhs: 0.0,
            rhs: 0.0,
            status: ConditionStatus::Reduced,
        };
    }
    let dh = v.sqrt();
    let lhs = weighted_var(probs, rates).sqrt() / dh;
    let rhs = 0.5 * sigma * sigma * v;
    ConditionCheck {
        lhs,
        rhs,
        status: if lhs < rhs {
            ConditionStatus::Holds
        } else {
            ConditionStatus::Fails
        },
    }
}

fn condition_at_rate(
    probs: &[f64],
    l0: f64,
    t: f64,
    rate: f64,
    sigma: f64,
) -> Result<ConditionCheck> {
    let well = TimeDependentWell::new(l0, rate, probs.len())?;
    Ok(supermartingale_condition(
        probs,
        &instantaneous_spectrum(t, &well),
        &well.energy_rates(t),
        sigma,
    ))
}

/// Expansion rate at which the condition switches from holding to failing
/// for the linear schedule, occupations `probs` and time `t`, by bisection
/// to relative precision `1e-12`.
pub fn critical_rate(probs: &[f64], l0: f64, t: f64, sigma: f64) -> Result<f64> {
    let holds = |v: f64| -> Result<bool> {
        Ok(match condition_at_rate(probs, l0, t, v, sigma)?.status {
            ConditionStatus::Holds => true,
            ConditionStatus::Fails => false,
            ConditionStatus::Reduced => {
                return Err(Error::Domain(
                    "state is an eigenstate; the condition never fails".into(),
                ))
            }
        })
    };
    if !holds(0.0)? {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut expansions = 0;
    while holds(hi)? {
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Domain("condition holds for every rate".into()));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One realisation of the occupation process on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PiRun {
    pub times: Vec<f64>,
    pub widths: Vec<f64>,
    /// `pi[t][k]`.
    pub pi: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub v: Vec<f64>,
    pub conditions: Vec<ConditionCheck>,
    pub clamp_events: usize,
}

fn grid_step(grid: &TimeGrid) -> Result<f64> {
    grid.uniform_step()
        .ok_or_else(|| Error::GridMismatch("the occupation process needs a uniform grid".into()))
}

/// Integrate the occupation process from `pi0` with noise from stream
/// `index` of `seed`.
pub fn run_pi_process(
    well: &TimeDependentWell,
    pi0: &[f64],
    sigma: f64,
    grid: &TimeGrid,
    seed: u64,
    index: u64,
) -> Result<PiRun> {
    if pi0.len() != well.truncation {
        return Err(Error::GridMismatch(format!(
            "initial occupations have {} entries, truncation is {}",
            pi0.len(),
            well.truncation
        )));
    }
    let total: f64 = pi0.iter().sum();
    if pi0.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalised(total));
    }
    let dt = grid_step(grid)?;
    let sqrt_dt = dt.sqrt();
    let mut rng = rng::stream(seed, index);
    let n = grid.len();
    let mut run = PiRun {
        times: grid.times().to_vec(),
        widths: Vec::with_capacity(n),
        pi: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        conditions: Vec::with_capacity(n),
        clamp_events: 0,
    };
    let mut pi = pi0.to_vec();
    for (k, &t) in grid.times().iter().enumerate() {
        let e = instantaneous_spectrum(t, well);
        run.widths.push(well.width(t));
        run.h.push(weighted_mean(&pi, &e));
        run.v.push(weighted_var(&pi, &e));
        run.conditions.push(supermartingale_condition(
            &pi,
            &e,
            &well.energy_rates(t),
            sigma,
        ));
        if k + 1 < n {
            let z: f64 = rng.sample(StandardNormal);
            let step = pi_step(&pi, z * sqrt_dt, &e, sigma);
            run.clamp_events += step.clamped;
            run.pi.push(std::mem::replace(&mut pi, step.pi));
        }
    }
    run.pi.push(pi);
    Ok(run)
}

/// Grid points (besides `t = 0`) at which [`PiEnsemble::max_abs_z`] tests
/// the occupation means.
pub const PI_CHECKPOINTS: usize = 20;

/// Ensemble mean and standard error of each `Π^k` over time.
#[derive(Debug, Clone, PartialEq)]
pub struct PiEnsemble {
    pub runs: usize,
    pub times: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub clamp_events: usize,
}

impl PiEnsemble {
    /// Indices of [`PI_CHECKPOINTS`] evenly spaced grid points after `t = 0`.
    pub fn checkpoint_indices(&self) -> Vec<usize> {
        let last = self.times.len() - 1;
        let k = PI_CHECKPOINTS.min(last);
        (1..=k).map(|i| (i * last + k / 2) / k).collect()
    }

    /// Levels with `runs · Π^k(0) ≥ 5`. A sparser level's sample mean is
    /// set by a handful of runs that end there, so its z-score is not normal.
    pub fn populated_levels(&self) -> Vec<usize> {
        let m = self.runs as f64;
        (0..self.mean[0].len())
            .filter(|&k| m * self.mean[0][k] >= 5.0)
            .collect()
    }

    /// Largest `|mean Π^k(t) − Π^k(0)| / se` over the checkpoints and the
    /// populated levels with positive standard error.
    pub fn max_abs_z(&self) -> f64 {
        let start = &self.mean[0];
        let levels = self.populated_levels();
        let mut worst: f64 = 0.0;
        for i in self.checkpoint_indices() {
            for &k in &levels {
                let (m, s) = (self.mean[i][k], self.se[i][k]);
                if s > 0.0 {
                    worst = worst.max(((m - start[k]) / s).abs());
                }
            }
        }
        worst
    }
}

pub fn pi_ensemble(
    well: &TimeDependentWell,
    pi0: &[f64],
    sigma: f64,
    grid: &TimeGrid,
    runs: usize,
    seed: u64,
) -> Result<PiEnsemble> {
    if runs == 0 {
        return Err(Error::config("runs", "must be >= 1"));
    }
    let n = grid.len();
    let k = pi0.len();
    let parts: Vec<Result<(Moments, usize)>> = (0..runs)
        .collect::<Vec<_>>()
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = Moments::new(n * k);
            let mut clamps = 0;
            for &i in chunk {
                let run = run_pi_process(well, pi0, sigma, grid, seed, i as u64)?;
                clamps += run.clamp_events;
                acc.push(run.pi.iter().flatten().copied());
            }
            Ok((acc, clamps))
        })
        .collect();
    let mut acc = Moments::new(n * k);
    let mut clamps = 0;
    for part in parts {
        let (a, c) = part?;
        acc.merge(&a);
        clamps += c;
    }
    let (mean, se) = acc.mean_and_se();
    Ok(PiEnsemble {
        runs,
        times: grid.times().to_vec(),
        mean: mean.chunks(k).map(<[f64]>::to_vec).collect(),
        se: se.chunks(k).map(<[f64]>::to_vec).collect(),
        clamp_events: clamps,
    })
}

/// A linear expansion from width 1 to `1 + ε` at rate `v`, replaced by
/// sudden steps every `step_dt` with free reduction in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Staircase {
    pub eps: f64,
    pub rate: f64,
    pub step_dt: f64,
    pub sigma: f64,
    pub truncation: usize,
}

impl Staircase {
    pub fn new(eps: f64, rate: f64, step_dt: f64, sigma: f64, truncation: usize) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::config("eps", "must be > 0"));
        }
        if !(rate > 0.0) {
            return Err(Error::config("rate", "must be > 0"));
        }
        if !(step_dt > 0.0) {
            return Err(Error::config("step_dt", "must be > 0"));
        }
        if !(sigma > 0.0) {
            return Err(Error::config("sigma", "must be > 0"));
        }
        if truncation < 2 {
            return Err(Error::config("truncation", "must be >= 2"));
        }
        Ok(Staircase {
            eps,
            rate,
            step_dt,
            sigma,
            truncation,
        })
    }

    /// Number of steps, at least one.
    pub fn steps(&self) -> usize {
        ((self.eps / self.rate / self.step_dt).round() as usize).max(1)
    }

    /// `(width ratio, width after the step)` for each step.
    fn ladder(&self) -> Vec<(f64, f64)> {
        let k = self.steps();
        (1..=k)
            .map(|i| {
                let before = 1.0 + self.eps * (i - 1) as f64 / k as f64;
                let after = 1.0 + self.eps * i as f64 / k as f64;
                (after / before, after)
            })
            .collect()
    }

    fn overlap_matrix(&self, ratio: f64) -> Vec<Vec<f64>> {
        let n = self.truncation;
        (1..=n)
            .map(|i| (1..=n).map(|j| overlap(i, j, ratio)).collect())
            .collect()
    }

    /// Ensemble-averaged ground-state occupation at the end of the schedule.
    ///
    /// The mean density matrix evolves linearly: each step maps it to `CᵀρC`
    /// and reduction damps `ρ_mn` by `exp(−⅛σ²(E_m − E_n)²Δt)` while
    /// rotating its phase.
    pub fn mean_ground_probability(&self) -> f64 {
        let n = self.truncation;
        let mut rho = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        rho[0][0] = Complex64::new(1.0, 0.0);
        let s2 = self.sigma * self.sigma;
        for (ratio, width) in self.ladder() {
            let c = self.overlap_matrix(ratio);
            let mut tmp = vec![vec![Complex64::new(0.0, 0.0); n]; n];
            for a in 0..n {
                for b in 0..n {
                    tmp[a][b] = (0..n).map(|k| rho[a][k] * c[k][b]).sum();
                }
            }
            for a in 0..n {
                for b in 0..n {
                    rho[a][b] = (0..n).map(|k| c[k][a] * tmp[k][b]).sum();
                }
            }
            let trace: f64 = (0..n).map(|k| rho[k][k].re).sum();
            let e = spectrum_for_width(width, n);
            for a in 0..n {
                for b in 0..n {
                    let w = e[a] - e[b];
                    let damp = (-0.125 * s2 * w * w * self.step_dt).exp();
                    rho[a][b] *= Complex64::from_polar(damp / trace, -w * self.step_dt);
                }
            }
        }
        rho[0][0].re
    }

    /// One stochastic realisation; returns the final occupations.
    pub fn sample_occupations<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let n = self.truncation;
        let mut a = vec![Complex64::new(0.0, 0.0); n];
        a[0] = Complex64::new(1.0, 0.0);
        let dt = self.step_dt;
        for (ratio, width) in self.ladder() {
            let c = self.overlap_matrix(ratio);
            let b: Vec<Complex64> = (0..n)
                .map(|m| (0..n).map(|k| a[k] * c[k][m]).sum())
                .collect();
            let e = spectrum_for_width(width, n);
            let probs: Vec<f64> = b.iter().map(|z| z.norm_sqr()).collect();
            let j = WeightedIndex::new(&probs)
                .map_err(|_| Error::EmptyRow)?
                .sample(rng);
            let z: f64 = rng.sample(StandardNormal);
            let xi = self.sigma * e[j] * dt + z * dt.sqrt();
            let log_w: Vec<f64> = e
                .iter()
                .map(|&em| {
                    0.5 * (self.sigma * em * xi - 0.5 * self.sigma * self.sigma * em * em * dt)
                })
                .collect();
            let top = log_w
                .iter()
                .zip(&probs)
                .filter(|(_, &p)| p > 0.0)
                .map(|(w, _)| *w)
                .fold(f64::NEG_INFINITY, f64::max);
            for m in 0..n {
                a[m] = b[m] * Complex64::from_polar((log_w[m] - top).exp(), -e[m] * dt);
            }
            let norm = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            a.iter_mut().for_each(|z| *z /= norm);
        }
        Ok(a.iter().map(|z| z.norm_sqr()).collect())
    }
}

/// Monte Carlo estimate of the final ground-state occupation: the mean and
/// standard error of `Π¹`, and the fraction of runs whose sampled final
/// level is the ground state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StaircaseEstimate {
    pub mean_ground: f64,
    pub se_ground: f64,
    pub ground_fraction: f64,
}

pub fn staircase_ground_state(
    stairs: &Staircase,
    runs: usize,
    seed: u64,
) -> Result<StaircaseEstimate> {
    if runs == 0 {
        return Err(Error::config("runs", "must be >= 1"));
    }
    let draws: Vec<Result<(f64, bool)>> = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i);
            let occ = stairs.sample_occupations(&mut rng)?;
            let level = WeightedIndex::new(&occ)
                .map_err(|_| Error::EmptyRow)?
                .sample(&mut rng);
            Ok((occ[0], level == 0))
        })
        .collect();
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut hits = 0usize;
    for d in draws {
        let (p, hit) = d?;
        sum += p;
        sum2 += p * p;
        hits += hit as usize;
    }
    let m = runs as f64;
    let mean = sum / m;
    let var = if runs > 1 {
        ((sum2 / m - mean * mean) * m / (m - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(StaircaseEstimate {
        mean_ground: mean,
        se_ground: (var / m).sqrt(),
        ground_fraction: hits as f64 / m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_follows_width() {
        let well = TimeDependentWell::new(1.0, 0.5, 4).unwrap();
        assert!((instantaneous_spectrum(0.0, &well)[0] - PI * PI).abs() < 1e-12);
        let e0 = instantaneous_spectrum(0.0, &well);
        let e2 = instantaneous_spectrum(2.0, &well);
        for k in 0..4 {
            assert!((e2[k] - e0[k] / 4.0).abs() < 1e-12);
        }
        let frozen = TimeDependentWell::new(1.0, 0.0, 4).unwrap();
        assert_eq!(
            instantaneous_spectrum(0.0, &frozen),
            instantaneous_spectrum(7.0, &frozen)
        );
        assert!(TimeDependentWell::new(1.0, -0.1, 4).is_err());
    }

    #[test]
    fn analytic_rates_match_differences() {
        let well = TimeDependentWell::new(1.3, 0.7, 6).unwrap();
        let exact = well.energy_rates(0.4);
        let numeric = energy_rates_numeric(&well, 0.4, 1e-3, 6);
        for (a, b) in exact.iter().zip(&numeric) {
            assert!((a - b).abs() < 1e-6 * a.abs());
            assert!(*a < 0.0);
        }
    }

    #[test]
    fn pi_step_fixed_point_and_two_level() {
        let e = [1.0, 4.0, 9.0];
        let step = pi_step(&[0.0, 1.0, 0.0], 0.37, &e, 2.0);
        assert_eq!(step.pi, vec![0.0, 1.0, 0.0]);
        let dw = 1e-4;
        let step = pi_step(&[0.5, 0.5], dw, &[0.0, 1.0], 1.0);
        assert!((step.pi[0] - 0.5 + dw / 4.0).abs() < 1e-15);
        assert!((step.pi.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pi_step_clamps() {
        let step = pi_step(&[0.5, 0.5], 10.0, &[0.0, 1.0], 1.0);
        assert_eq!(step.clamped, 1);
        assert_eq!(step.pi, vec![0.0, 1.0]);
    }

    #[test]
    fn energy_increment_cases() {
        let e = [1.0, 4.0];
        assert!(
            (drifted_energy_increment(&[0.5, 0.5], &e, &e, 0.1, 1.0, 0.2) - 0.2 * 2.25).abs()
                < 1e-12
        );
        let next = [0.9, 3.6];
        let d = drifted_energy_increment(&[0.0, 1.0], &e, &next, 0.1, 1.0, 5.0);
        assert!((d + 0.4).abs() < 1e-12);
        assert!(drifted_energy_increment(&[0.3, 0.7], &e, &next, 0.1, 1.0, 0.0) < 0.0);
    }

    #[test]
    fn covariance_drift_cases() {
        let d = variance_covariance_drift(&[0.5, 0.5], &[0.0, 1.0], &[0.0, -1.0]);
        assert!((d + 0.5).abs() < 1e-15);
        assert_eq!(
            variance_covariance_drift(&[0.5, 0.5], &[0.0, 1.0], &[0.0, 0.0]),
            0.0
        );
        assert_eq!(
            variance_covariance_drift(&[1.0, 0.0], &[2.0, 5.0], &[-1.0, -3.0]),
            0.0
        );
        assert_eq!(
            correlation(&[0.5, 0.5], &[0.0, 1.0], &[0.0, -1.0]),
            Some(-1.0)
        );
    }

    #[test]
    fn condition_cases() {
        let e = [1.0, 4.0];
        let c = supermartingale_condition(&[0.5, 0.5], &e, &[0.0, 0.0], 1.0);
        assert_eq!(c.status, ConditionStatus::Holds);
        assert_eq!(c.lhs, 0.0);
        let c = supermartingale_condition(&[1.0, 0.0], &e, &[-1.0, -2.0], 1.0);
        assert_eq!(c.status, ConditionStatus::Reduced);
    }

    #[test]
    fn bisected_threshold_matches_closed_form() {
        // at t = 0 the linear schedule gives ΔḢ/ΔH = 2v, so v* = σ²V/4
        let probs = [0.2, 0.5, 0.3];
        let e = spectrum_for_width(1.0, 3);
        let v = weighted_var(&probs, &e);
        let crit = critical_rate(&probs, 1.0, 0.0, 0.8).unwrap();
        assert!((crit - 0.64 * v / 4.0).abs() < 1e-9 * crit);
        let below = condition_at_rate(&probs, 1.0, 0.0, crit * 0.99, 0.8).unwrap();
        let above = condition_at_rate(&probs, 1.0, 0.0, crit * 1.01, 0.8).unwrap();
        assert_eq!(below.status, ConditionStatus::Holds);
        assert_eq!(above.status, ConditionStatus::Fails);
    }

    #[test]
    fn eigenstate_persists() {
        let well = TimeDependentWell::new(1.0, 0.3, 5).unwrap();
        let grid = TimeGrid::uniform(2.0, 400).unwrap();
        let run = run_pi_process(&well, &[1.0, 0.0, 0.0, 0.0, 0.0], 1.0, &grid, 4, 0).unwrap();
        assert!(run.pi.iter().all(|p| p[0] == 1.0));
        assert_eq!(run.clamp_events, 0);
        assert!(run
            .conditions
            .iter()
            .all(|c| c.status == ConditionStatus::Reduced));
    }

    #[test]
    fn density_matrix_and_sampling_agree() {
        let stairs = Staircase::new(0.5, 2.0, 0.01, 1.0, 8).unwrap();
        let exact = stairs.mean_ground_probability();
        let mc = staircase_ground_state(&stairs, 400, 11).unwrap();
        assert!(
            (mc.mean_ground - exact).abs() < 3.0 * mc.se_ground.max(1e-3),
            "{exact} {mc:?}"
        );
    }

    #[test]
    fn slower_schedules_keep_the_ground_state() {
        let p: Vec<f64> = [2.0, 0.2, 0.02]
            .iter()
            .map(|&v| {
                Staircase::new(0.5, v, 0.01, 1.0, 8)
                    .unwrap()
                    .mean_ground_probability()
            })
            .collect();
        assert!(p[0] < p[1] && p[1] < p[2], "{p:?}");
        assert!(1.0 - p[2] < 1e-3);
    }

    #[test]
    fn occupation_means_are_constant() {
        let well = TimeDependentWell::new(2.5, 0.1, 3).unwrap();
        let grid = TimeGrid::uniform(0.5, 2000).unwrap();
        let ens = pi_ensemble(&well, &[0.3, 0.5, 0.2], 1.0, &grid, 400, 9).unwrap();
        assert_eq!(ens.checkpoint_indices().len(), PI_CHECKPOINTS);
        assert_eq!(*ens.checkpoint_indices().last().unwrap(), 2000);
        assert_eq!(ens.populated_levels(), vec![0, 1, 2]);
        assert!(ens.max_abs_z() < 3.5, "{}", ens.max_abs_z());
    }
}
