//! Noiseless quantum sawtooth map dynamics and localization estimates.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{conjugate_diagonal, DftKind, DftPlan};
use crate::qstate::{check_qubits, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

/// Map constants. `hbar = 2 pi L / N`, `K = hbar k`, `beta = 2 pi / N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QsmParams {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: u32,
    pub k: f64,
}

impl QsmParams {
    pub fn new(n: usize, l: u32, k: f64) -> Result<Self> {
        let p = Self { n, l, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_qubits(self.n)?;
        if self.l % 2 == 0 {
            return Err(Error::param("L", format!("must be a positive odd integer, got {}", self.l)));
        }
        if !self.k.is_finite() {
            return Err(Error::param("k", "must be finite"));
        }
        Ok(())
    }

    pub fn with_k(&self, k: f64) -> Self {
        Self { k, ..*self }
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn hbar(&self) -> f64 {
        2.0 * PI * self.l as f64 / self.dim() as f64
    }

    pub fn big_k(&self) -> f64 {
        self.hbar() * self.k
    }

    pub fn beta(&self) -> f64 {
        2.0 * PI / self.dim() as f64
    }
}

/// Kinetic phases `exp(-i hbar (p' - N/2)^2 / 2)`.
pub fn kinetic_phases(params: &QsmParams) -> Array1<C64> {
    let dim = params.dim();
    let hbar = params.hbar();
    let half = (dim / 2) as f64;
    Array1::from_shape_fn(dim, |p| {
        let x = p as f64 - half;
        C64::from_polar(1.0, -hbar * x * x / 2.0)
    })
}

/// Potential phases `exp(+i k beta^2 (q' - N/2)^2 / 2)` for kick strength `k`.
pub fn potential_phases(params: &QsmParams, k: f64) -> Array1<C64> {
    let dim = params.dim();
    let b2 = params.beta().powi(2);
    let half = (dim / 2) as f64;
    Array1::from_shape_fn(dim, |q| {
        let x = q as f64 - half;
        C64::from_polar(1.0, k * b2 * x * x / 2.0)
    })
}

/// One factor of the map step, applied instantaneously.
#[derive(Debug, Clone, PartialEq)]
pub enum Substep {
    Dft(DftKind),
    Phase(Array1<C64>),
}

impl Substep {
    pub fn adjoint(&self) -> Substep {
        match self {
            Substep::Dft(kind) => Substep::Dft(kind.adjoint()),
            Substep::Phase(d) => Substep::Phase(d.mapv(|z| z.conj())),
        }
    }

    pub fn apply_state(&self, plan: &DftPlan, psi: &mut [C64]) {
        match self {
            Substep::Dft(kind) => plan.apply(psi, *kind),
            Substep::Phase(d) => {
                for (x, p) in psi.iter_mut().zip(d.iter()) {
                    *x *= p;
                }
            }
        }
    }

    pub fn conjugate(&self, plan: &DftPlan, rho: &mut Array2<C64>) {
        match self {
            Substep::Dft(kind) => plan.conjugate(rho, *kind),
            Substep::Phase(d) => conjugate_diagonal(rho, d),
        }
    }

    /// Dense matrix of this factor.
    pub fn matrix(&self, plan: &DftPlan) -> Array2<C64> {
        match self {
            Substep::Dft(kind) => plan.matrix(*kind),
            Substep::Phase(d) => Array2::from_diag(d),
        }
    }
}

/// The four factors in application order: `F`, `D_pot`, `F^{-1}`, `D_kin`
/// forward; the adjoints in reverse order backward.
pub fn substeps_with_k(params: &QsmParams, k: f64, direction: Direction) -> [Substep; 4] {
    let pot = Substep::Phase(potential_phases(params, k));
    let kin = Substep::Phase(kinetic_phases(params));
    let fwd = [Substep::Dft(DftKind::Forward), pot, Substep::Dft(DftKind::Inverse), kin];
    match direction {
        Direction::Forward => fwd,
        Direction::Backward => {
            let [a, b, c, d] = fwd;
            [d.adjoint(), c.adjoint(), b.adjoint(), a.adjoint()]
        }
    }
}

pub fn substeps(params: &QsmParams, direction: Direction) -> [Substep; 4] {
    substeps_with_k(params, params.k, direction)
}

/// Dense one-step propagator `U = D_kin F^{-1} D_pot F` (or `U^dagger`).
pub fn build_step_operator(params: &QsmParams, direction: Direction) -> Result<Array2<C64>> {
    params.validate()?;
    let plan = DftPlan::new(params.dim());
    let mut u = Array2::<C64>::eye(params.dim());
    for s in substeps(params, direction).iter() {
        u = s.matrix(&plan).dot(&u);
    }
    Ok(u)
}

/// FFT-based stepper for repeated application of the map.
#[derive(Debug, Clone)]
pub struct Stepper {
    plan: DftPlan,
    steps: [Substep; 4],
}

impl Stepper {
    pub fn new(params: &QsmParams, direction: Direction) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            plan: DftPlan::new(params.dim()),
            steps: substeps(params, direction),
        })
    }

    pub fn apply(&self, psi: &mut [C64]) {
        for s in &self.steps {
            s.apply_state(&self.plan, psi);
        }
    }
}

/// Apply `steps` map iterations in `direction`.
pub fn evolve(state: &StateVector, params: &QsmParams, steps: usize, direction: Direction) -> Result<StateVector> {
    if state.n() != params.n {
        return Err(Error::Dimension {
            expected: params.dim(),
            found: state.dim(),
        });
    }
    let stepper = Stepper::new(params, direction)?;
    let mut amps = state.amplitudes().to_vec();
    for _ in 0..steps {
        stepper.apply(&mut amps);
    }
    Ok(StateVector::from_raw(state.n(), Array1::from(amps)))
}

/// Classical diffusion coefficient `D_K`.
pub fn diffusion_coefficient(big_k: f64) -> Result<f64> {
    if !(big_k > 0.0) {
        return Err(Error::param("K", format!("must be positive, got {big_k}")));
    }
    Ok(if big_k >= 1.0 {
        PI * PI / 3.0 * big_k * big_k
    } else {
        3.3 * big_k.powf(2.5)
    })
}

/// `l = D_K / hbar^2`.
pub fn localization_length(params: &QsmParams) -> Result<f64> {
    if !(params.k > 0.0) {
        return Err(Error::param("k", format!("must be positive, got {}", params.k)));
    }
    Ok(diffusion_coefficient(params.big_k())? / params.hbar().powi(2))
}

/// Kick strength at which the most localized dynamics occurs.
pub fn k_loc(dim: usize, l: u32) -> f64 {
    let nn = dim as f64;
    (0.66 * nn.sqrt()).max(0.50 * nn.powf(0.6) * (l as f64).powf(-0.2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeScales {
    pub tau_e: f64,
    pub tau_h: f64,
    pub lambda_in: f64,
}

/// Ehrenfest estimate `ln N / lambda` and Heisenberg estimate `l`.
pub fn time_scales(params: &QsmParams, lambda_in: f64) -> Result<TimeScales> {
    if !(lambda_in > 0.0) {
        return Err(Error::param("lambda", format!("must be positive, got {lambda_in}")));
    }
    Ok(TimeScales {
        tau_e: (params.dim() as f64).ln() / lambda_in,
        tau_h: localization_length(params)?,
        lambda_in,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::basis_state;
    use approx::assert_abs_diff_eq;

    fn max_abs(a: &Array2<C64>) -> f64 {
        a.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn rejects_even_l() {
        assert!(QsmParams::new(3, 2, 1.0).is_err());
        assert!(QsmParams::new(3, 3, 1.0).is_ok());
    }

    #[test]
    fn unitary_and_adjoint() {
        let p = QsmParams::new(3, 1, 4.55).unwrap();
        let u = build_step_operator(&p, Direction::Forward).unwrap();
        let v = build_step_operator(&p, Direction::Backward).unwrap();
        let eye = Array2::<C64>::eye(8);
        assert!(max_abs(&(v.dot(&u) - &eye)) < 1e-12);
        assert!(max_abs(&(crate::kernels::adjoint(&u) - &v)) < 1e-14);
    }

    #[test]
    fn k_zero_is_diagonal() {
        let p = QsmParams::new(3, 1, 0.0).unwrap();
        let u = build_step_operator(&p, Direction::Forward).unwrap();
        for ((i, j), z) in u.indexed_iter() {
            if i == j {
                assert_abs_diff_eq!(z.norm(), 1.0, epsilon = 1e-12);
            } else {
                assert!(z.norm() < 1e-12, "({i},{j}) = {z}");
            }
        }
    }

    #[test]
    fn fft_path_matches_dense() {
        let p = QsmParams::new(4, 3, 2.7).unwrap();
        let u = build_step_operator(&p, Direction::Forward).unwrap();
        let psi = basis_state(4, 3).unwrap();
        let fast = evolve(&psi, &p, 1, Direction::Forward).unwrap();
        let slow = u.dot(psi.amplitudes());
        for (a, b) in fast.amplitudes().iter().zip(slow.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_steps_is_identity() {
        let p = QsmParams::new(3, 1, 1.0).unwrap();
        let psi = basis_state(3, 1).unwrap();
        assert_eq!(evolve(&psi, &p, 0, Direction::Forward).unwrap(), psi);
    }

    #[test]
    fn diffusion_branches() {
        assert_abs_diff_eq!(diffusion_coefficient(2.0).unwrap(), 13.159472534785811, epsilon = 1e-12);
        assert_abs_diff_eq!(diffusion_coefficient(0.5).unwrap(), 0.5833630944789018, epsilon = 1e-12);
        let lo = diffusion_coefficient(1.0 - 1e-12).unwrap();
        let hi = diffusion_coefficient(1.0).unwrap();
        assert!((lo - hi).abs() / hi < 0.01);
        assert!(diffusion_coefficient(0.0).is_err());
    }

    #[test]
    fn localization_examples() {
        let small = localization_length(&QsmParams::new(3, 1, 0.1).unwrap()).unwrap();
        assert!((small - 9.2e-3).abs() < 2e-4, "{small}");
        let big = localization_length(&QsmParams::new(3, 1, 4.55).unwrap()).unwrap();
        assert!((big - 68.0).abs() < 1.0, "{big}");
        let doubled = localization_length(&QsmParams::new(3, 1, 9.1).unwrap()).unwrap();
        assert_abs_diff_eq!(doubled / big, 4.0, epsilon = 1e-12);
        assert!(localization_length(&QsmParams::new(3, 1, 0.0).unwrap()).is_err());
    }

    #[test]
    fn k_loc_examples() {
        assert!((k_loc(8, 1) - 1.87).abs() < 0.01);
        assert!((k_loc(64, 1) - 6.06).abs() < 0.01);
        assert_abs_diff_eq!(k_loc(8, 1_000_001), 0.66 * 8f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn ehrenfest_time() {
        let p = QsmParams::new(3, 1, 4.55).unwrap();
        let ts = time_scales(&p, 2.08).unwrap();
        assert!((ts.tau_e - 1.0).abs() < 0.01);
        assert_eq!(ts.tau_h, localization_length(&p).unwrap());
        assert!(time_scales(&p, 0.0).is_err());
    }
}
