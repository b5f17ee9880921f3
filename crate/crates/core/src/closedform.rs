//! Analytic fidelity decay for the limiting dynamical regimes.

use std::f64::consts::TAU;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::NoiseRates;
use crate::qstate::{check_qubits, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicalRegime {
    Localized,
    Superposition,
    Diffusive,
    SemiLocalized,
}

impl DynamicalRegime {
    pub const ALL: [DynamicalRegime; 4] = [
        DynamicalRegime::Localized,
        DynamicalRegime::Superposition,
        DynamicalRegime::Diffusive,
        DynamicalRegime::SemiLocalized,
    ];
}

impl std::str::FromStr for DynamicalRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "localized" => DynamicalRegime::Localized,
            "superposition" => DynamicalRegime::Superposition,
            "diffusive" => DynamicalRegime::Diffusive,
            "semi-localized" => DynamicalRegime::SemiLocalized,
            other => return Err(Error::param("regime", format!("unknown regime `{other}`"))),
        })
    }
}

/// Per-qubit initial decay rate.
pub fn rate_single(regime: DynamicalRegime, rates: &NoiseRates) -> f64 {
    let NoiseRates { nu1, nu2 } = *rates;
    match regime {
        DynamicalRegime::Localized => nu1 / 2.0,
        DynamicalRegime::Superposition => (nu1 + nu2) / 4.0,
        DynamicalRegime::Diffusive => nu1 / 2.0 + nu2 / 4.0,
        DynamicalRegime::SemiLocalized => nu1 / 2.0 + nu2 / 8.0,
    }
}

fn floor(n: usize) -> f64 {
    0.5f64.powi(n as i32)
}

/// Basis-state average under pure relaxation: `((1 + e^{-nu1 t}) / 2)^n`.
pub fn f_localized(n: usize, nu1: f64, t: f64) -> f64 {
    ((1.0 + (-nu1 * t).exp()) / 2.0).powi(n as i32)
}

/// Uniform superposition: `((1 + e^{-(nu1+nu2) t / 2}) / 2)^n`.
pub fn f_superposition(n: usize, rates: &NoiseRates, t: f64) -> f64 {
    ((1.0 + (-(rates.nu1 + rates.nu2) * t / 2.0).exp()) / 2.0).powi(n as i32)
}

/// Phase-averaged random entangled state.
pub fn f_diffusive(n: usize, rates: &NoiseRates, t: f64) -> f64 {
    let e = (-rates.nu1 * t).exp();
    let c = (-(rates.nu1 + rates.nu2) * t / 2.0).exp();
    let q = 0.25f64.powi(n as i32);
    // (1+e+2c)^n - (1+e)^n loses digits for small t; expand as a sum instead
    let a = 1.0 + e;
    let mut diff = 0.0;
    let mut binom = 1.0;
    for j in 1..=n {
        binom *= (n - j + 1) as f64 / j as f64;
        diff += binom * a.powi((n - j) as i32) * (2.0 * c).powi(j as i32);
    }
    q * diff + floor(n)
}

/// Explicit double sum over superposed (`k`) and excited (`l`) qubits;
/// reference form of [`f_diffusive`].
pub fn f_diffusive_sum(n: usize, rates: &NoiseRates, t: f64) -> f64 {
    let binom = |a: usize, b: usize| -> f64 { (0..b).fold(1.0, |acc, i| acc * (a - i) as f64 / (i + 1) as f64) };
    let c = (-(rates.nu1 + rates.nu2) * t / 2.0).exp();
    let e = (-rates.nu1 * t).exp();
    let mut sum = 0.0;
    for k in 1..=n {
        let inner: f64 = (0..=n - k).map(|l| e.powi(l as i32) * binom(n - k, l)).sum();
        sum += c.powi(k as i32) * binom(n, k) * 2f64.powi(k as i32) * inner;
    }
    floor(n) + 0.25f64.powi(n as i32) * sum
}

/// Half localized, half diffusive: `sqrt(f_loc f_dif)`.
pub fn f_semi_localized(n: usize, rates: &NoiseRates, t: f64) -> f64 {
    (f_localized(n, rates.nu1, t) * f_diffusive(n, rates, t)).sqrt()
}

pub fn f_regime(regime: DynamicalRegime, n: usize, rates: &NoiseRates, t: f64) -> f64 {
    match regime {
        DynamicalRegime::Localized => f_localized(n, rates.nu1, t),
        DynamicalRegime::Superposition => f_superposition(n, rates, t),
        DynamicalRegime::Diffusive => f_diffusive(n, rates, t),
        DynamicalRegime::SemiLocalized => f_semi_localized(n, rates, t),
    }
}

/// Exact `df/dt` at `t = 0`. Equals `-n rate_single` for the product-form
/// regimes; the diffusive forms carry an extra `n nu1 / 2^{n+1}` from the
/// trace-preserving diagonal (halved for semi-localized).
pub fn initial_slope(regime: DynamicalRegime, n: usize, rates: &NoiseRates) -> f64 {
    let nf = n as f64;
    let corr = nf * rates.nu1 * floor(n) / 2.0;
    match regime {
        DynamicalRegime::Localized | DynamicalRegime::Superposition => -nf * rate_single(regime, rates),
        DynamicalRegime::Diffusive => -nf * rate_single(regime, rates) + corr,
        DynamicalRegime::SemiLocalized => -nf * rate_single(regime, rates) + corr / 2.0,
    }
}

/// Elementwise `sigma o rho*` for two qubits in a random-phase state with
/// phase combination `phi1 + phi2 - phi3`. The element sum is the fidelity.
pub fn fid_matrix_2q(phases: (f64, f64, f64), rates: &NoiseRates, t: f64) -> Array2<C64> {
    let (p1, p2, p3) = phases;
    let ph = C64::from_polar(1.0, p1 + p2 - p3);
    let e = (-rates.nu1 * t).exp();
    let c = (-(rates.nu1 + rates.nu2) * t / 2.0).exp();
    let d = c * e;
    let one = C64::new(1.0, 0.0);
    let r = |x: f64| C64::new(x, 0.0);
    let edge = (one + ph) * c - ph * d;
    let mut m = Array2::<C64>::zeros((4, 4));
    m[[0, 0]] = r(4.0 - 4.0 * e + e * e);
    m[[1, 1]] = r(2.0 * e - e * e);
    m[[2, 2]] = r(2.0 * e - e * e);
    m[[3, 3]] = r(e * e);
    m[[0, 1]] = edge;
    m[[0, 2]] = edge;
    m[[0, 3]] = r(c * c);
    // both qubits are superposed between |01> and |10>
    m[[1, 2]] = r(c * c);
    m[[1, 3]] = r(d);
    m[[2, 3]] = r(d);
    for i in 0..4 {
        for j in 0..i {
            m[[i, j]] = m[[j, i]].conj();
        }
    }
    m.mapv(|z| z / 16.0)
}

/// Uniform-modulus state with i.i.d. uniform phases and `phi_0 = 0`.
pub fn random_phase_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<StateVector> {
    let dim = check_qubits(n)?;
    let amp = 1.0 / (dim as f64).sqrt();
    let amps = Array1::from_shape_fn(dim, |i| if i == 0 { C64::new(amp, 0.0) } else { C64::from_polar(amp, rng.random::<f64>() * TAU) });
    Ok(StateVector::from_raw(n, amps))
}

/// Qubit layout for gate-based fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateLayout {
    Serial,
    Parallel { n_eff: usize },
}

/// Gate-based Lindblad model: `M` two-qubit gates per map step. Serial:
/// `f_L(1/M, 2)^{M t}`; parallel: depth `D = 2M/n_eff`, `f_L(1/D, n_eff)^{D t}`;
/// both mapped affinely onto the mixed floor `1/2^n`.
pub fn f_gate_based(t: f64, n: usize, m: f64, rates: &NoiseRates, regime: DynamicalRegime, layout: GateLayout) -> Result<f64> {
    if !(m >= 1.0) {
        return Err(Error::param("M", format!("must be >= 1, got {m}")));
    }
    let (width, depth) = match layout {
        GateLayout::Serial => (2, m),
        GateLayout::Parallel { n_eff } => {
            if n_eff < 2 || n_eff > n {
                return Err(Error::param("n_eff", format!("must satisfy 2 <= n_eff <= n = {n}, got {n_eff}")));
            }
            (n_eff, 2.0 * m / n_eff as f64)
        }
    };
    let per_layer = f_regime(regime, width, rates, 1.0 / depth);
    let fl = floor(n);
    Ok(per_layer.powf(depth * t) * (1.0 - fl) + fl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn r(nu1: f64, nu2: f64) -> NoiseRates {
        NoiseRates::new(nu1, nu2).unwrap()
    }

    #[test]
    fn rate_examples() {
        let x = r(0.1, 0.2);
        assert_abs_diff_eq!(rate_single(DynamicalRegime::Diffusive, &x), 0.10, epsilon = 1e-15);
        assert_abs_diff_eq!(rate_single(DynamicalRegime::Localized, &x), 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(rate_single(DynamicalRegime::SemiLocalized, &x), 0.075, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(f_localized(3, 0.1, 0.0), 1.0);
        assert_abs_diff_eq!(f_localized(1, 2f64.ln(), 1.0), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(f_localized(3, 0.1, 2.0), 0.7520, epsilon = 1e-4);
        assert_eq!(f_superposition(2, &NoiseRates::zero(), 5.0), 1.0);
        assert_abs_diff_eq!(f_superposition(1, &r(2f64.ln(), 0.0), 2.0), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(f_diffusive(2, &r(0.1, 0.2), 1.0), 0.845082, epsilon = 1e-6);
        assert_abs_diff_eq!(f_diffusive(4, &r(0.1, 0.2), 1e4), 1.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn superposition_matches_master_equation() {
        use crate::lindblad::{evolve_master, DecaySchedule, Integrator};
        use crate::qstate::StateVector;
        let amp = C64::new(0.5, 0.0);
        let plus = StateVector::new(2, ndarray::Array1::from_elem(4, amp)).unwrap();
        let sched = DecaySchedule::decay_only(2, 1.0, vec![0, 1]).unwrap();
        let out = evolve_master(&plus.to_density(), &sched, &r(0.1, 0.2), Integrator::Rk4).unwrap();
        let f = crate::qstate::fidelity_pure(&plus, &out).unwrap();
        assert_abs_diff_eq!(f_superposition(2, &r(0.1, 0.2), 1.0), f, epsilon = 1e-9);
        assert_abs_diff_eq!(f, 0.865559, epsilon = 1e-6);
    }

    #[test]
    fn sum_form_matches() {
        for n in 1..=6 {
            for &(a, b) in &[(0.1, 0.2), (0.0, 1.0), (1.3, 0.05)] {
                for &t in &[0.0, 0.3, 1.0, 4.0] {
                    assert_abs_diff_eq!(f_diffusive_sum(n, &r(a, b), t), f_diffusive(n, &r(a, b), t), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn two_qubit_matrix_limits() {
        let x = r(0.1, 0.2);
        for t in [0.0, 0.7, 3.0] {
            let m = fid_matrix_2q((0.0, 0.0, 0.0), &x, t);
            assert_abs_diff_eq!(m.sum().re, f_superposition(2, &x, t), epsilon = 1e-12);
            assert!(m.sum().im.abs() < 1e-15);
        }
        let m = fid_matrix_2q((1.0, 2.0, 0.5), &x, 0.0);
        assert_abs_diff_eq!(m.sum().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn slopes_match() {
        let x = r(0.1, 0.2);
        let h = 1e-6;
        for regime in DynamicalRegime::ALL {
            for n in 1..=6 {
                let num = (f_regime(regime, n, &x, h) - f_regime(regime, n, &x, -h)) / (2.0 * h);
                let exact = initial_slope(regime, n, &x);
                assert!((num - exact).abs() <= 1e-6 * exact.abs(), "{regime:?} n={n}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn gate_based_limits() {
        let x = r(0.1, 0.2);
        for regime in DynamicalRegime::ALL {
            assert_eq!(f_gate_based(3.0, 3, 33.0, &NoiseRates::zero(), regime, GateLayout::Serial).unwrap(), 1.0);
        }
        for regime in [DynamicalRegime::Localized, DynamicalRegime::Superposition] {
            for t in [0.5, 2.0, 5.0] {
                let f = f_gate_based(t, 3, 1e4, &x, regime, GateLayout::Serial).unwrap();
                let approx = (-2.0 * rate_single(regime, &x) * t).exp() * 0.875 + 0.125;
                assert!((f - approx).abs() < 1e-4);
            }
        }
        assert!(f_gate_based(1.0, 3, 33.0, &x, DynamicalRegime::Diffusive, GateLayout::Parallel { n_eff: 4 }).is_err());
        assert!(f_gate_based(1.0, 3, 0.5, &x, DynamicalRegime::Diffusive, GateLayout::Serial).is_err());
    }

    #[test]
    fn serial_parallel_same_rate() {
        let x = r(0.1, 0.2);
        for n_eff in [2usize, 3, 4, 6] {
            let s = 2.0 / n_eff as f64;
            let scaled = r(x.nu1 * s, x.nu2 * s);
            for t in [0.5, 1.0, 3.0] {
                for regime in [DynamicalRegime::Localized, DynamicalRegime::Superposition] {
                    let a = f_gate_based(t, 6, 33.0, &x, regime, GateLayout::Serial).unwrap();
                    let b = f_gate_based(t, 6, 33.0, &scaled, regime, GateLayout::Parallel { n_eff }).unwrap();
                    assert_abs_diff_eq!(a, b, epsilon = 1e-12);
                }
                // the gain term depends on gate width, so only the per-width slopes agree
                let fl = floor(6);
                let rate = |f: f64| -((f - fl) / (1.0 - fl)).ln() / t;
                for regime in [DynamicalRegime::Diffusive, DynamicalRegime::SemiLocalized] {
                    let a = f_gate_based(t, 6, 1e3, &x, regime, GateLayout::Serial).unwrap();
                    let b = f_gate_based(t, 6, 1e3, &scaled, regime, GateLayout::Parallel { n_eff }).unwrap();
                    let ra = -initial_slope(regime, 2, &x);
                    let rb = -initial_slope(regime, n_eff, &scaled);
                    assert!((rate(a) - ra).abs() / ra < 1e-3, "{regime:?} serial t={t}");
                    assert!((rate(b) - rb).abs() / rb < 1e-3, "{regime:?} n_eff={n_eff} t={t}");
                }
            }
        }
    }
}
