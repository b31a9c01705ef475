//! Closed-form spectral data of the infinite square well before and after a
//! sudden expansion of its width from `L` to `αL`.
//!
//! Energies are dimensionless (units of `ε = ħ²/2μL²`) unless a model in
//! [`UnitMode::Physical`] converts them at the boundary.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant in J·s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;

/// Relative tolerance under which `m = αn` is treated as an exact resonance.
pub const RESONANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnitMode {
    /// ħ = 1, energies in ε, times in ħ/ε.
    #[default]
    Dimensionless,
    /// SI units at the boundary: mass in kg, lengths in m, energies in J, times in s.
    Physical,
}

/// Static definition of the quench problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellModel {
    pub mass: f64,
    pub width: f64,
    pub alpha: f64,
    pub truncation: usize,
    pub unit_mode: UnitMode,
}

impl WellModel {
    pub fn new(
        mass: f64,
        width: f64,
        alpha: f64,
        truncation: usize,
        unit_mode: UnitMode,
    ) -> Result<Self> {
        let model = WellModel {
            mass,
            width,
            alpha,
            truncation,
            unit_mode,
        };
        model.validate()?;
        Ok(model)
    }

    /// Unit-mass, unit-width model in dimensionless units.
    pub fn dimensionless(alpha: f64, truncation: usize) -> Result<Self> {
        Self::new(1.0, 1.0, alpha, truncation, UnitMode::Dimensionless)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 1.0) || !self.alpha.is_finite() {
            return Err(Error::config(
                "alpha",
                format!("must be a finite value >= 1, got {}", self.alpha),
            ));
        }
        if self.truncation < 2 {
            return Err(Error::config(
                "truncation",
                format!("must be >= 2, got {}", self.truncation),
            ));
        }
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(Error::config(
                "mass",
                format!("must be > 0, got {}", self.mass),
            ));
        }
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::config(
                "width",
                format!("must be > 0, got {}", self.width),
            ));
        }
        Ok(())
    }

    fn hbar(&self) -> f64 {
        match self.unit_mode {
            UnitMode::Dimensionless => 1.0,
            UnitMode::Physical => HBAR_SI,
        }
    }

    /// The characteristic energy `ε = ħ²/2μL²` in the model's units.
    ///
    /// In dimensionless mode this is 1 by construction.
    pub fn epsilon(&self) -> f64 {
        match self.unit_mode {
            UnitMode::Dimensionless => 1.0,
            UnitMode::Physical => HBAR_SI * HBAR_SI / (2.0 * self.mass * self.width * self.width),
        }
    }

    /// Time unit `ħ/ε`; with unit volatility this equals `1/(σ²ε²)`.
    pub fn time_unit(&self) -> f64 {
        self.hbar() / self.epsilon()
    }

    pub fn energy_to_units(&self, e: f64) -> f64 {
        e * self.epsilon()
    }

    pub fn energy_from_units(&self, e: f64) -> f64 {
        e / self.epsilon()
    }

    pub fn time_to_units(&self, t: f64) -> f64 {
        t * self.time_unit()
    }

    pub fn time_from_units(&self, t: f64) -> f64 {
        t / self.time_unit()
    }

    /// Dimensionless volatility expressed in the model's units; `[σ] = Energy⁻¹ Time⁻¹ᐟ²`.
    pub fn sigma_to_units(&self, sigma: f64) -> f64 {
        sigma / (self.epsilon() * self.time_unit().sqrt())
    }

    pub fn sigma_from_units(&self, sigma: f64) -> f64 {
        sigma * self.epsilon() * self.time_unit().sqrt()
    }

    /// Post-expansion energies `E_1..E_N` in units of ε.
    pub fn energies(&self) -> Vec<f64> {
        (1..=self.truncation)
            .map(|m| dimensionless_post_energy(m, self.alpha))
            .collect()
    }

    pub fn expanded_width(&self) -> f64 {
        self.alpha * self.width
    }
}

fn check_index(name: &str, k: usize) -> Result<()> {
    if k < 1 {
        return Err(Error::Domain(format!("{name} must be >= 1")));
    }
    Ok(())
}

pub(crate) fn dimensionless_post_energy(m: usize, alpha: f64) -> f64 {
    let m = m as f64;
    PI * PI * m * m / (alpha * alpha)
}

/// `ε_n = π²ħ²n²/2μL²`, energy of the n-th level of the original well.
pub fn pre_expansion_energy(n: usize, model: &WellModel) -> Result<f64> {
    check_index("n", n)?;
    let n = n as f64;
    Ok(model.energy_to_units(PI * PI * n * n))
}

/// `E_m = π²ħ²m²/2μα²L²`, energy of the m-th level of the expanded well.
pub fn post_expansion_energy(m: usize, model: &WellModel) -> Result<f64> {
    check_index("m", m)?;
    Ok(model.energy_to_units(dimensionless_post_energy(m, model.alpha)))
}

/// `√(2/w)·sin(mπx/w)` on `[0, w]`.
pub fn eigenfunction_value(m: usize, x: f64, width: f64) -> Result<f64> {
    check_index("m", m)?;
    if !(0.0..=width).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, {width}]")));
    }
    Ok(eigenfunction_unchecked(m, x, width))
}

#[inline]
pub(crate) fn eigenfunction_unchecked(m: usize, x: f64, width: f64) -> f64 {
    (2.0 / width).sqrt() * (m as f64 * PI * x / width).sin()
}

/// `sin(πq)` with the argument reduced to `[-½, ½]` first, so that integer
/// `q` gives exactly zero.
fn sin_pi(q: f64) -> f64 {
    let k = q.round();
    let r = q - k;
    let s = (PI * r).sin();
    if (k as i64) % 2 == 0 {
        s
    } else {
        -s
    }
}

fn is_resonant(n: usize, m: usize, alpha: f64) -> bool {
    let an = alpha * n as f64;
    let m = m as f64;
    (m - an).abs() < RESONANCE_TOL * m.max(an)
}

/// Signed overlap `∫₀^L φ_n χ_m dx` between the n-th level of the width-L
/// well and the m-th level of the width-αL well.
pub fn overlap(n: usize, m: usize, alpha: f64) -> f64 {
    assert!(n >= 1 && m >= 1, "level indices start at 1");
    if is_resonant(n, m, alpha) {
        return alpha.powf(-0.5);
    }
    let nf = n as f64;
    let mf = m as f64;
    let parity = if n % 2 == 1 { 1.0 } else { -1.0 };
    2.0 * alpha.powf(1.5) * nf * parity * sin_pi(mf / alpha)
        / (PI * (alpha * alpha * nf * nf - mf * mf))
}

/// Transition probability `π_nm` from level n of the original well to level m
/// of the expanded well.
pub fn transition_probability(n: usize, m: usize, alpha: f64) -> Result<f64> {
    check_index("n", n)?;
    check_index("m", m)?;
    if !(alpha >= 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} must be >= 1")));
    }
    if is_resonant(n, m, alpha) {
        return Ok(1.0 / alpha);
    }
    let nf = n as f64;
    let mf = m as f64;
    let s = sin_pi(mf / alpha);
    let d = mf * mf - alpha * alpha * nf * nf;
    Ok(4.0 * alpha.powi(3) * nf * nf * s * s / (PI * PI * d * d))
}

/// The truncated row `π_n1..π_nN`, not renormalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub initial_index: usize,
    pub probs: Vec<f64>,
    /// Signed amplitudes whose squares are `probs`.
    pub amplitudes: Vec<f64>,
}

impl TransitionRow {
    /// Row for the quench of eigenstate `n` by factor `alpha`, truncated at `truncation`.
    pub fn for_quench(n: usize, alpha: f64, truncation: usize) -> Result<Self> {
        check_index("n", n)?;
        if truncation < 1 {
            return Err(Error::config("truncation", "must be >= 1"));
        }
        let mut probs = Vec::with_capacity(truncation);
        let mut amplitudes = Vec::with_capacity(truncation);
        for m in 1..=truncation {
            probs.push(transition_probability(n, m, alpha)?);
            amplitudes.push(overlap(n, m, alpha));
        }
        Ok(TransitionRow {
            initial_index: n,
            probs,
            amplitudes,
        })
    }

    /// Row supplied directly as probabilities; amplitudes are the positive roots.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(0.0..=1.0 + 1e-12).contains(p)) {
            return Err(Error::Domain("row entries must lie in [0, 1]".into()));
        }
        let amplitudes = probs.iter().map(|p| p.sqrt()).collect();
        Ok(TransitionRow {
            initial_index: 0,
            probs,
            amplitudes,
        })
    }

    pub fn truncation(&self) -> usize {
        self.probs.len()
    }

    pub fn partial_sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probability mass lost to the truncation, `1 - Σ π_m`.
    pub fn deficit(&self) -> f64 {
        1.0 - self.partial_sum()
    }
}

/// `|Σ_{m≤N} π_nm E_m − ε_n| / ε_n`: how far the truncated row is from
/// conserving the expected energy.
pub fn conservation_residual(n: usize, alpha: f64, truncation: usize) -> Result<f64> {
    check_index("n", n)?;
    if truncation < 1 {
        return Err(Error::config("truncation", "must be >= 1"));
    }
    let mut acc = 0.0;
    // Sum from the tail so the small terms are not swamped.
    for m in (1..=truncation).rev() {
        acc += transition_probability(n, m, alpha)? * dimensionless_post_energy(m, alpha);
    }
    let eps_n = PI * PI * (n * n) as f64;
    Ok((acc - eps_n).abs() / eps_n)
}

/// Leading-order transition probability out of the ground state for a small
/// expansion `α = 1 + ε`: `4m²ε²/(m²−1)²` for `m ≥ 2`.
///
/// For `m = 1` the complement `1 − (π²/3 + ¼)ε²` is returned, which is
/// `1 − Σ_{m≥2} 4m²ε²/(m²−1)²` summed in closed form.
pub fn small_perturbation_probability(m: usize, eps: f64) -> Result<f64> {
    check_index("m", m)?;
    if !(eps >= 0.0) {
        return Err(Error::Domain(format!("perturbation {eps} must be >= 0")));
    }
    if m == 1 {
        return Ok(1.0 - (PI * PI / 3.0 + 0.25) * eps * eps);
    }
    let m2 = (m * m) as f64;
    Ok(4.0 * m2 * eps * eps / ((m2 - 1.0) * (m2 - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_energies() {
        let model = WellModel::dimensionless(2.5, 50).unwrap();
        assert!((pre_expansion_energy(1, &model).unwrap() - PI * PI).abs() < 1e-12);
        assert!((pre_expansion_energy(2, &model).unwrap() - 4.0 * PI * PI).abs() < 1e-12);
        assert!((pre_expansion_energy(3, &model).unwrap() - 9.0 * PI * PI).abs() < 1e-12);
        assert!((post_expansion_energy(3, &model).unwrap() - 1.44 * PI * PI).abs() < 1e-12);
        assert!((post_expansion_energy(5, &model).unwrap() - 4.0 * PI * PI).abs() < 1e-12);
        let unit = WellModel::dimensionless(1.0, 2).unwrap();
        assert!((post_expansion_energy(1, &unit).unwrap() - PI * PI).abs() < 1e-12);
        assert!(pre_expansion_energy(0, &model).is_err());
        assert!(post_expansion_energy(0, &model).is_err());
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(WellModel::dimensionless(0.5, 50).is_err());
        assert!(WellModel::dimensionless(2.0, 1).is_err());
        assert!(WellModel::new(0.0, 1.0, 2.0, 10, UnitMode::Physical).is_err());
        assert!(WellModel::new(1.0, -1.0, 2.0, 10, UnitMode::Physical).is_err());
        assert!(WellModel::dimensionless(f64::NAN, 10).is_err());
    }

    #[test]
    fn physical_units_round_trip() {
        // electron in a 1 nm well
        let model = WellModel::new(9.109_383_7e-31, 1e-9, 2.5, 50, UnitMode::Physical).unwrap();
        let eps = model.epsilon();
        assert!((eps - HBAR_SI * HBAR_SI / (2.0 * 9.109_383_7e-31 * 1e-18)).abs() / eps < 1e-15);
        let e1 = pre_expansion_energy(1, &model).unwrap();
        assert!((model.energy_from_units(e1) - PI * PI).abs() < 1e-12);
        for x in [0.3, 7.0, 123.4] {
            assert!((model.time_from_units(model.time_to_units(x)) - x).abs() < 1e-12 * x);
            assert!((model.sigma_from_units(model.sigma_to_units(x)) - x).abs() < 1e-12 * x);
        }
        // σ_model² ε_model² · t_model is dimensionless time
        let s = model.sigma_to_units(1.0);
        let t = model.time_to_units(1.0);
        assert!((s * s * eps * eps * t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenfunction_endpoints_and_peak() {
        let w = 2.5;
        assert!((eigenfunction_value(1, w / 2.0, w).unwrap() - (2.0 / w).sqrt()).abs() < 1e-15);
        assert!(eigenfunction_value(2, w / 2.0, w).unwrap().abs() < 1e-15);
        assert!(eigenfunction_value(3, 0.0, w).unwrap().abs() < 1e-15);
        assert!(eigenfunction_value(3, w, w).unwrap().abs() < 1e-14);
        assert!(eigenfunction_value(1, -0.1, w).is_err());
        assert!(eigenfunction_value(1, w + 1e-9, w).is_err());
    }

    #[test]
    fn reference_transition_values() {
        assert_eq!(transition_probability(1, 5, 2.5).unwrap(), 0.0);
        let p12 = transition_probability(1, 2, 2.5).unwrap();
        assert!((p12 - 0.43).abs() < 0.005, "{p12}");
        assert!((transition_probability(1, 2, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(transition_probability(1, 1, 1.0).unwrap(), 1.0);
        assert!(transition_probability(1, 1, 0.9).is_err());
        assert!(transition_probability(0, 1, 2.0).is_err());
    }

    #[test]
    fn overlap_squares_to_probability() {
        for &alpha in &[1.0, 1.3, 2.0, 2.5, 3.7] {
            for n in 1..=4 {
                for m in 1..=30 {
                    let c = overlap(n, m, alpha);
                    let p = transition_probability(n, m, alpha).unwrap();
                    assert!((c * c - p).abs() < 1e-14, "n={n} m={m} a={alpha}");
                }
            }
        }
    }

    #[test]
    fn resonance_is_continuous() {
        for (n, m) in [(1usize, 2usize), (1, 3), (2, 5), (3, 4)] {
            let a0 = m as f64 / n as f64;
            for a in [a0 - 1e-6, a0 + 1e-6] {
                let p = transition_probability(n, m, a).unwrap();
                assert!((p - 1.0 / a).abs() < 1e-4, "n={n} m={m} alpha={a} p={p}");
            }
        }
    }

    #[test]
    fn identity_quench_row() {
        let row = TransitionRow::for_quench(1, 1.0, 20).unwrap();
        assert_eq!(row.probs[0], 1.0);
        assert!(row.probs[1..].iter().all(|&p| p == 0.0));
        assert_eq!(conservation_residual(1, 1.0, 1).unwrap(), 0.0);
        assert_eq!(conservation_residual(1, 1.0, 100).unwrap(), 0.0);
    }

    #[test]
    fn conservation_examples() {
        assert!(conservation_residual(1, 2.5, 10_000).unwrap() < 1e-3);
        assert!(conservation_residual(2, 2.5, 10_000).unwrap() < 1e-3);
        let r100 = conservation_residual(1, 2.5, 100).unwrap();
        let r1000 = conservation_residual(1, 2.5, 1000).unwrap();
        assert!(r1000 < r100);
    }

    #[test]
    fn row_partial_sums_grow() {
        let mut last = 0.0;
        for n_trunc in [5usize, 10, 20, 50, 100] {
            let s = TransitionRow::for_quench(1, 2.5, n_trunc)
                .unwrap()
                .partial_sum();
            assert!(s >= last - 1e-15 && s <= 1.0 + 1e-12);
            last = s;
        }
    }

    #[test]
    fn small_perturbation_examples() {
        let p2 = small_perturbation_probability(2, 0.01).unwrap();
        assert!((p2 - 16.0 / 9.0 * 1e-4).abs() < 1e-18);
        let p3 = small_perturbation_probability(3, 0.01).unwrap();
        assert!((p3 - 5.625e-5).abs() < 1e-18);
        assert_eq!(small_perturbation_probability(2, 0.0).unwrap(), 0.0);
        assert_eq!(small_perturbation_probability(1, 0.0).unwrap(), 1.0);
        assert!(small_perturbation_probability(0, 0.1).is_err());
        assert!(small_perturbation_probability(2, -0.1).is_err());
    }

    #[test]
    fn ground_complement_matches_series() {
        let direct: f64 = (2..200_000u64)
            .map(|m| {
                let m2 = (m * m) as f64;
                4.0 * m2 / ((m2 - 1.0) * (m2 - 1.0))
            })
            .sum();
        assert!((direct - (PI * PI / 3.0 + 0.25)).abs() < 1e-4);
    }
}
