//! Relaxation timescales.
//!
//! On a path conditioned on terminal level `j`, the competing levels are
//! weighted by `M_mj = exp(σω_mj B_t − ½σ²ω_mj² t)`. Since `B_t ~ N(0, t)`,
//! the probability that `M_mj < e^{−λ}` is a normal CDF in `√t`, which gives
//! a closed-form time after which that event has a chosen confidence.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::filtering::{FilteredTrajectory, Prior};

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse of [`normal_cdf`]: Acklam's rational approximation followed by one
/// Halley step against the erfc-based CDF.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability {p} must lie in (0, 1)")));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x -= u / (1.0 + 0.5 * x * u);
    Ok(x)
}

/// Parameters of a relaxation-time query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxQuery {
    pub alpha: f64,
    pub sigma: f64,
    /// Terminal level (1-based).
    pub terminal: usize,
    /// Decay threshold: competing weights must fall below `e^{−λ}`.
    pub lambda: f64,
    /// Confidence level in (0, 1).
    pub confidence: f64,
}

impl RelaxQuery {
    pub fn new(
        alpha: f64,
        sigma: f64,
        terminal: usize,
        lambda: f64,
        confidence: f64,
    ) -> Result<Self> {
        if !(alpha >= 1.0) {
            return Err(Error::config("alpha", "must be >= 1"));
        }
        if !(sigma > 0.0) {
            return Err(Error::config("sigma", "must be > 0"));
        }
        if terminal < 1 {
            return Err(Error::config("terminal", "level index starts at 1"));
        }
        if !(lambda > 0.0) {
            return Err(Error::config("lambda", "must be > 0"));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::config("confidence", "must lie in (0, 1)"));
        }
        Ok(RelaxQuery {
            alpha,
            sigma,
            terminal,
            lambda,
            confidence,
        })
    }

    /// λ = 10 at 95 % confidence.
    pub fn standard(alpha: f64, sigma: f64, terminal: usize) -> Self {
        RelaxQuery {
            alpha,
            sigma,
            terminal,
            lambda: 10.0,
            confidence: 0.95,
        }
    }
}

/// `P(M_mj < e^{−λ}) = N(½σ|ω|√t − λ/(σ|ω|√t))`.
pub fn prob_decay(lambda: f64, t: f64, sigma: f64, omega: f64) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::DegenerateLevels);
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t = {t} must be > 0")));
    }
    let x = sigma * omega.abs() * t.sqrt();
    Ok(normal_cdf(0.5 * x - lambda / x))
}

/// Smallest `t` with `prob_decay(λ, t, σ, ω) ≥ p`:
/// `√t = (2N⁻¹(p) + √(4N⁻¹(p)² + 8λ)) / (2σ|ω|)`.
pub fn time_bound(lambda: f64, sigma: f64, omega: f64, p: f64) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::DegenerateLevels);
    }
    let z = inverse_normal_cdf(p)?;
    let disc = 4.0 * z * z + 8.0 * lambda;
    if disc < 0.0 {
        return Err(Error::NotReal(format!(
            "discriminant 4z² + 8λ = {disc} < 0"
        )));
    }
    let root = (2.0 * z + disc.sqrt()) / (2.0 * sigma * omega.abs());
    if root < 0.0 {
        return Err(Error::NotReal(format!("bound √t = {root} is negative")));
    }
    Ok(root * root)
}

/// [`time_bound`] for the prior-weighted factor `π_m M_mj`, i.e. with λ
/// replaced by `λ + ln π_m`.
pub fn time_bound_weighted(
    lambda: f64,
    prior_prob: f64,
    sigma: f64,
    omega: f64,
    p: f64,
) -> Result<f64> {
    time_bound(lambda + prior_prob.ln(), sigma, omega, p)
}

fn gap(alpha: f64, m: usize, j: usize) -> f64 {
    let (m, j) = (m as f64, j as f64);
    PI * PI * (m * m - j * j) / (alpha * alpha)
}

/// Relaxation time for terminal level `j`: the largest [`time_bound`] over
/// the neighbouring levels `j − 1` and `j + 1`, whose gaps are the smallest.
/// Returns 0 for `α = 1`, where no competing level has weight.
pub fn tau_r(query: &RelaxQuery) -> Result<f64> {
    if query.alpha == 1.0 {
        return Ok(0.0);
    }
    let j = query.terminal;
    let mut worst = time_bound(
        query.lambda,
        query.sigma,
        gap(query.alpha, j + 1, j),
        query.confidence,
    )?;
    if j > 1 {
        worst = worst.max(time_bound(
            query.lambda,
            query.sigma,
            gap(query.alpha, j - 1, j),
            query.confidence,
        )?);
    }
    Ok(worst)
}

/// [`time_bound`] against the upper neighbour `j + 1` only.
pub fn tau_r_upper(query: &RelaxQuery) -> Result<f64> {
    if query.alpha == 1.0 {
        return Ok(0.0);
    }
    let j = query.terminal;
    time_bound(
        query.lambda,
        query.sigma,
        gap(query.alpha, j + 1, j),
        query.confidence,
    )
}

/// Rounded closed form `40α⁴ / (π⁴σ²(2j+1)²)` for λ = 10 at 95 % confidence,
/// measured against the upper neighbour.
pub fn tau_r_closed_form(alpha: f64, terminal: usize, sigma: f64) -> f64 {
    if alpha == 1.0 {
        return 0.0;
    }
    let k = (2 * terminal + 1) as f64;
    40.0 * alpha.powi(4) / (PI.powi(4) * sigma * sigma * k * k)
}

/// Smallest perturbation `ε` for which [`tau_r_small`] is real.
pub fn min_viable_perturbation(lambda: f64, p: f64) -> Result<f64> {
    let z = inverse_normal_cdf(p)?;
    Ok(0.75 * (-(2.0 * lambda + z * z) / 4.0).exp())
}

/// Relaxation time into the ground state after a small expansion `α = 1 + ε`:
/// `(N⁻¹(p) + √(2λ + 4ln(4ε/3) + N⁻¹(p)²))² / (σ²ω₂₁²)`.
pub fn tau_r_small(eps: f64, sigma: f64, lambda: f64, p: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("perturbation {eps} must be > 0")));
    }
    let z = inverse_normal_cdf(p)?;
    let radicand = 2.0 * lambda + 4.0 * (4.0 * eps / 3.0).ln() + z * z;
    if radicand < 0.0 {
        let eps_min = min_viable_perturbation(lambda, p)?;
        return Err(Error::NotReal(format!(
            "radicand {radicand:.6} < 0; need perturbation >= {eps_min:.6e} for lambda = {lambda}, p = {p}"
        )));
    }
    let omega = gap(1.0 + eps, 2, 1);
    let root = z + radicand.sqrt();
    Ok(root * root / (sigma * sigma * omega * omega))
}

/// `ln max_{m≠j} M_mj` over the levels in the prior.
pub fn log_max_competing_decay(j: usize, b: f64, t: f64, sigma: f64, prior: &Prior) -> f64 {
    let e_j = prior.energies[j - 1];
    prior
        .energies
        .iter()
        .enumerate()
        .filter(|(i, _)| i + 1 != j)
        .map(|(_, &e)| {
            let w = e - e_j;
            sigma * w * b - 0.5 * sigma * sigma * w * w * t
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Summary of measured relaxation times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxationStats {
    /// Per trajectory; `None` when the run never settles on the grid.
    pub times: Vec<Option<f64>>,
    pub median: Option<f64>,
    pub p95: Option<f64>,
    /// Fraction of runs relaxed no later than the analytic time.
    pub fraction_relaxed_by_tau: f64,
    pub censored: usize,
}

/// First grid time after which `|H − E_j| < tol` for the rest of the path.
pub fn relaxation_time(times: &[f64], h_path: &[f64], e_j: f64, tol: f64) -> Option<f64> {
    match h_path.iter().rposition(|h| (h - e_j).abs() >= tol) {
        None => Some(times[0]),
        Some(k) if k + 1 < times.len() => Some(times[k + 1]),
        Some(_) => None,
    }
}

fn quantile(sorted: &[f64], total: usize, q: f64) -> Option<f64> {
    // nearest-rank on the full sample; censored runs sort past every finite time
    if total == 0 {
        return None;
    }
    let rank = ((q * total as f64).ceil() as usize).clamp(1, total);
    sorted.get(rank - 1).copied()
}

impl RelaxationStats {
    /// Summarise per-run relaxation times; censored runs rank above every
    /// finite time, so a quantile that lands on them is `None`.
    pub fn from_times(times: Vec<Option<f64>>, analytic_tau: f64) -> Self {
        let mut finite: Vec<f64> = times.iter().flatten().copied().collect();
        finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let total = times.len();
        let censored = total - finite.len();
        let relaxed = finite.iter().filter(|&&t| t <= analytic_tau).count();
        RelaxationStats {
            median: quantile(&finite, total, 0.5),
            p95: quantile(&finite, total, 0.95),
            fraction_relaxed_by_tau: if total == 0 {
                0.0
            } else {
                relaxed as f64 / total as f64
            },
            censored,
            times,
        }
    }
}

/// Relaxation times of conditioned trajectories with a sustained energy band.
pub fn empirical_relaxation_time(
    trajectories: &[FilteredTrajectory],
    prior: &Prior,
    tol_energy: f64,
    analytic_tau: f64,
) -> RelaxationStats {
    let times = trajectories
        .iter()
        .map(|tr| {
            relaxation_time(
                tr.times(),
                &tr.h_path,
                prior.energies[tr.outcome - 1],
                tol_energy,
            )
        })
        .collect();
    RelaxationStats::from_times(times, analytic_tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.65) - 0.9505).abs() < 1e-4);
        assert!((normal_cdf(-1.65) - 0.0495).abs() < 1e-4);
        assert!((normal_cdf(-1.65) + normal_cdf(1.65) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_round_trip() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = inverse_normal_cdf(p).unwrap();
            assert!((normal_cdf(x) - p).abs() < 1e-12, "p={p}");
        }
        for &p in &[1e-10, 1e-6, 0.01, 0.99, 1.0 - 1e-8] {
            let x = inverse_normal_cdf(p).unwrap();
            assert!(((normal_cdf(x) - p) / p.min(1.0 - p)).abs() < 1e-8, "p={p}");
        }
        assert_eq!(inverse_normal_cdf(0.5).unwrap(), 0.0);
        assert!(inverse_normal_cdf(0.0).is_err());
        assert!(inverse_normal_cdf(1.0).is_err());
    }

    #[test]
    fn decay_probability_properties() {
        // λ = 0 and a vanishing argument give N(0)
        assert!((prob_decay(0.0, 1e-30, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-12);
        let mut last = 0.0;
        for k in 1..200 {
            let p = prob_decay(10.0, 0.1 * k as f64, 1.0, 2.0).unwrap();
            assert!(p > last);
            last = p;
        }
        assert_eq!(
            prob_decay(3.0, 2.0, 0.7, 5.0).unwrap(),
            prob_decay(3.0, 2.0, 0.7, -5.0).unwrap()
        );
        assert_eq!(prob_decay(3.0, 2.0, 0.7, 0.0), Err(Error::DegenerateLevels));
    }

    #[test]
    fn time_bound_examples() {
        // √t = (2z + √(4z² + 80))/2 with z = N⁻¹(0.95)
        let z = inverse_normal_cdf(0.95).unwrap();
        let t = time_bound(10.0, 1.0, 1.0, 0.95).unwrap();
        let expected = ((2.0 * z + (4.0 * z * z + 80.0).sqrt()) / 2.0).powi(2);
        assert!((t - expected).abs() < 1e-12);
        assert!((t - 41.08).abs() < 0.01, "{t}");
        assert!((prob_decay(10.0, t, 1.0, 1.0).unwrap() - 0.95).abs() < 1e-9);
        let half = time_bound(10.0, 1.0, 1.0, 0.5).unwrap();
        assert!((half.sqrt() - 80f64.sqrt() / 2.0).abs() < 1e-12);
        let doubled = time_bound(10.0, 2.0, 1.0, 0.95).unwrap();
        assert!((doubled.sqrt() - 0.5 * t.sqrt()).abs() < 1e-12);
        assert!(matches!(
            time_bound_weighted(1.0, 1e-6, 1.0, 1.0, 0.3),
            Err(Error::NotReal(_))
        ));
    }

    #[test]
    fn rounded_quantile_form_of_time_bound() {
        // with the rounded 1.65 the bound reads (3.3 + √(3.3² + 8λ)) / (2σ|ω|)
        let p = normal_cdf(1.65);
        let t = time_bound(10.0, 1.0, 2.0, p).unwrap();
        let rounded = ((3.3 + (3.3f64 * 3.3 + 80.0).sqrt()) / 4.0).powi(2);
        assert!((t - rounded).abs() < 1e-10);
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(tau_r_closed_form(1.0, 2, 1.0), 0.0);
        let t = tau_r_closed_form(2.5, 2, 1.0);
        assert!((t - 0.6416).abs() < 1e-3, "{t}");
        assert!(tau_r_closed_form(2.5, 3, 1.0) < t);
        let q = RelaxQuery::standard(1.0, 1.0, 3);
        assert_eq!(tau_r(&q).unwrap(), 0.0);
    }

    #[test]
    fn canonical_route_agrees_with_closed_form() {
        for j in 1..=6 {
            let q = RelaxQuery::standard(2.5, 1.0, j);
            let exact = tau_r_upper(&q).unwrap();
            let rounded = tau_r_closed_form(2.5, j, 1.0);
            assert!((exact - rounded).abs() / exact < 0.15);
            assert!(tau_r(&q).unwrap() >= exact);
        }
    }

    #[test]
    fn small_perturbation_timescale() {
        let z = inverse_normal_cdf(0.95).unwrap();
        let t = tau_r_small(0.1, 1.0, 10.0, 0.95).unwrap();
        let rad = 20.0 + 4.0 * (0.4f64 / 3.0).ln() + z * z;
        assert!((rad - 14.66).abs() < 0.05);
        let omega = 3.0 * PI * PI / 1.21;
        assert!((t - (z + rad.sqrt()).powi(2) / (omega * omega)).abs() < 1e-12);

        let err = tau_r_small(1e-4, 1.0, 10.0, 0.95).unwrap_err();
        assert!(matches!(err, Error::NotReal(ref msg) if msg.contains("need perturbation")));

        let eps0 = min_viable_perturbation(10.0, 0.95).unwrap();
        let boundary = tau_r_small(eps0 * (1.0 + 1e-12), 1.0, 10.0, 0.95).unwrap();
        let w = gap(1.0 + eps0, 2, 1);
        assert!((boundary - z * z / (w * w)).abs() < 1e-4 * boundary);
        assert!(tau_r_small(eps0 * 0.999, 1.0, 10.0, 0.95).is_err());
    }

    #[test]
    fn relaxation_time_scan() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(
            relaxation_time(&t, &[5.0, 5.0, 5.0, 5.0, 5.0], 5.0, 0.1),
            Some(0.0)
        );
        assert_eq!(
            relaxation_time(&t, &[9.0, 5.0, 6.0, 5.01, 5.0], 5.0, 0.1),
            Some(3.0)
        );
        assert_eq!(
            relaxation_time(&t, &[9.0, 5.0, 5.0, 5.0, 7.0], 5.0, 0.1),
            None
        );
    }
}
