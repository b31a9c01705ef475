//! Self-check suite run by `qrelax validate`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::adiabatic::{self, ConditionStatus, TimeDependentWell};
use crate::ensemble::{self, EnsembleOptions};
use crate::error::Result;
use crate::filtering::{self, DensityBasis, OutcomeMode, Prior, SdeConfig, StateVector, TimeGrid};
use crate::relaxation::{self, RelaxQuery};
use crate::sde;
use crate::spectrum::{self, TransitionRow, WellModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn guarded(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((ok, detail)) => check(name, ok, detail),
        Err(e) => check(name, false, format!("error: {e}")),
    }
}

/// Run the suite. `quick` shrinks ensembles and skips the integrator study.
pub fn run(quick: bool, threads: usize, seed: u64) -> Vec<Check> {
    let runs = if quick { 400 } else { 2000 };
    let mut out = Vec::new();

    out.push(guarded("transition row", || {
        let p2 = spectrum::transition_probability(1, 2, 2.5)?;
        let p5 = spectrum::transition_probability(1, 5, 2.5)?;
        Ok((
            (p2 - 0.43).abs() < 0.005 && p5 == 0.0,
            format!("pi_12 = {p2:.6}, pi_15 = {p5:e}"),
        ))
    }));

    out.push(guarded("conservation", || {
        let mut worst: f64 = 0.0;
        for n in 1..=3 {
            for &a in &[1.3, 2.0, 2.5] {
                worst = worst.max(spectrum::conservation_residual(n, a, 10_000)?.abs());
            }
        }
        Ok((worst < 1e-3, format!("max relative residual {worst:.3e}")))
    }));

    out.push(guarded("small perturbation", || {
        let mut worst: f64 = 0.0;
        for &e in &[1e-2, 1e-3] {
            for m in 2..=5 {
                let exact = spectrum::transition_probability(1, m, 1.0 + e)?;
                let approx = spectrum::small_perturbation_probability(m, e)?;
                worst = worst.max((exact - approx).abs() / approx / e);
            }
        }
        Ok((
            worst < 5.0,
            format!("max relative error / eps = {worst:.3}"),
        ))
    }));

    out.push(guarded("normal quantile round trip", || {
        let mut worst: f64 = 0.0;
        for i in 1..200 {
            let p = i as f64 / 200.0;
            worst =
                worst.max((relaxation::normal_cdf(relaxation::inverse_normal_cdf(p)?) - p).abs());
        }
        Ok((worst < 1e-9, format!("max error {worst:.2e}")))
    }));

    out.push(guarded("time bound round trip", || {
        let t = relaxation::time_bound(10.0, 1.0, 1.0, 0.95)?;
        let p = relaxation::prob_decay(10.0, t, 1.0, 1.0)?;
        Ok(((p - 0.95).abs() < 1e-9, format!("t = {t:.6}, P = {p:.12}")))
    }));

    out.push(guarded("frozen well relaxes instantly", || {
        let t = relaxation::tau_r(&RelaxQuery::standard(1.0, 1.0, 3))?;
        Ok((t == 0.0, format!("tau_R = {t}")))
    }));

    out.push(guarded("posterior amplitude identity", || {
        let model = WellModel::dimensionless(2.5, 50)?;
        let prior = Prior::for_model(1, &model)?;
        let grid = TimeGrid::uniform(5.0, 500)?;
        let config = SdeConfig::new(1.0, grid.clone(), seed, OutcomeMode::Sample)?;
        let mut worst: f64 = 0.0;
        for i in 0..20 {
            let tr = filtering::simulate_trajectory(&prior, &config, i)?;
            for (k, &t) in grid.times().iter().enumerate().step_by(25) {
                let psi = filtering::wavefunction(tr.outcome, tr.b_path[k], t, 1.0, &prior)?;
                for (a, p) in psi.probabilities().iter().zip(&tr.posterior[k]) {
                    worst = worst.max((a - p).abs());
                }
            }
        }
        Ok((worst < 1e-12, format!("max |a|^2 - P = {worst:.2e}")))
    }));

    out.push(guarded("density normalisation", || {
        let model = WellModel::dimensionless(2.5, 50)?;
        let prior = Prior::for_model(1, &model)?;
        let basis = DensityBasis::uniform(512, &model)?;
        let snap = basis.evaluate(&StateVector::from_prior(&prior))?;
        let i = snap.integral();
        Ok(((i - 1.0).abs() < 1e-6, format!("integral {i:.9}")))
    }));

    out.push(guarded("ensemble martingale", || {
        let model = WellModel::dimensionless(2.5, 50)?;
        let prior = Prior::for_model(1, &model)?;
        let tau = ensemble::relaxation_horizon(&prior, 2.5, 1.0, OutcomeMode::Sample)?;
        let config = SdeConfig::new(
            1.0,
            ensemble::default_checkpoints(tau)?,
            seed,
            OutcomeMode::Sample,
        )?;
        let opts = EnsembleOptions {
            threads,
            ..Default::default()
        };
        let s = ensemble::run_ensemble(&model, 1, &config, runs, &opts)?;
        let m = ensemble::martingale_test(&s)?;
        let v = ensemble::supermartingale_test(&s)?;
        let f = ensemble::terminal_frequency_test(&s, &TransitionRow::for_quench(1, 2.5, 50)?)?;
        Ok((
            m.passed && v.passed && f.passed,
            format!(
                "M = {runs}: max |z_H| = {:.2}, V margin = {:.3e}, max |z_freq| = {:.2}",
                m.max_abs_z, v.worst_margin, f.max_abs_z
            ),
        ))
    }));

    out.push(guarded("eigenstate occupation fixed point", || {
        let well = TimeDependentWell::new(2.5, 0.2, 8)?;
        let grid = TimeGrid::uniform(2.0, 2000)?;
        let mut pi0 = vec![0.0; 8];
        pi0[1] = 1.0;
        let run = adiabatic::run_pi_process(&well, &pi0, 1.0, &grid, seed, 0)?;
        let ok = run.pi.iter().all(|p| p == &pi0)
            && run
                .conditions
                .iter()
                .all(|c| c.status == ConditionStatus::Reduced);
        Ok((
            ok,
            format!("{} steps, {} clamps", grid.len() - 1, run.clamp_events),
        ))
    }));

    out.push(guarded("expansion threshold", || {
        let probs = [0.25, 0.5, 0.25];
        let crit = adiabatic::critical_rate(&probs, 1.0, 0.0, 1.0)?;
        let e: Vec<f64> = (1..=3).map(|k| PI * PI * (k * k) as f64).collect();
        let mean: f64 = probs.iter().zip(&e).map(|(p, x)| p * x).sum();
        let var: f64 = probs
            .iter()
            .zip(&e)
            .map(|(p, x)| p * (x - mean).powi(2))
            .sum();
        let rel = (crit - var / 4.0).abs() / crit;
        Ok((
            rel < 1e-9,
            format!("critical rate {crit:.6}, closed form {:.6}", var / 4.0),
        ))
    }));

    if !quick {
        out.push(guarded("integrator convergence", || {
            let model = WellModel::dimensionless(2.5, 6)?;
            let prior = Prior::for_model(1, &model)?;
            let r = sde::crosscheck(&prior, 1.0, 2.0, 1 << 18, &[256, 64, 16, 4, 1], 10, seed)?;
            let ratio = 4f64.powf(r.fitted_order());
            Ok((
                (1.5..=2.7).contains(&ratio),
                format!(
                    "fitted order {:.3}, error ratio per dt/4 {ratio:.3}",
                    r.fitted_order()
                ),
            ))
        }));
    }
    out
}
