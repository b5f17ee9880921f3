//! State vectors, density matrices and fidelity primitives.
//!
//! Basis convention: the momentum eigenstate `|p>` with `-N/2 <= p < N/2`
//! lives at computational index `p' = p + N/2`, and qubit `j` carries bit
//! `2^j` of `p'` (little-endian). With `n = 3`, `p = -2` is index 2, i.e.
//! the bitstring `|010>`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm tolerance for state vectors.
pub const NORM_TOL: f64 = 1e-10;
/// Tolerance for density-matrix trace, Hermiticity and positivity.
pub const DENSITY_TOL: f64 = 1e-9;

/// Largest supported register; dense `N x N` matrices beyond this are impractical.
pub const MAX_QUBITS: usize = 14;

pub(crate) fn check_qubits(n: usize) -> Result<usize> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::param("n", format!("qubit count must be in 1..={MAX_QUBITS}, got {n}")));
    }
    Ok(1usize << n)
}

/// Index `p' = p + N/2` of momentum `p` on `n` qubits.
pub fn momentum_to_index(n: usize, p: i64) -> Result<usize> {
    let dim = check_qubits(n)? as i64;
    let (lo, hi) = (-dim / 2, dim / 2);
    if p < lo || p >= hi {
        return Err(Error::MomentumRange { value: p, lo, hi });
    }
    Ok((p - lo) as usize)
}

/// Inverse of [`momentum_to_index`].
pub fn index_to_momentum(n: usize, index: usize) -> i64 {
    index as i64 - (1i64 << n) / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amplitudes: Array1<C64>,
}

impl StateVector {
    /// Builds a state from `2^n` amplitudes, rejecting wrong length or norm.
    pub fn new(n: usize, amplitudes: Array1<C64>) -> Result<Self> {
        let dim = check_qubits(n)?;
        if amplitudes.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: amplitudes.len(),
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::param("amplitudes", format!("squared norm {norm} differs from 1")));
        }
        Ok(Self { n, amplitudes })
    }

    pub(crate) fn from_raw(n: usize, amplitudes: Array1<C64>) -> Self {
        debug_assert_eq!(amplitudes.len(), 1 << n);
        Self { n, amplitudes }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Array1<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Probability of each computational index.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Probability of momentum `p`.
    pub fn momentum_probability(&self, p: i64) -> Result<f64> {
        let idx = momentum_to_index(self.n, p)?;
        Ok(self.amplitudes[idx].norm_sqr())
    }

    /// Inverse participation ratio `sum_p P_p^2`.
    pub fn inverse_participation(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr().powi(2)).sum()
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// The projector `|psi><psi|`.
    pub fn to_density(&self) -> DensityMatrix {
        let dim = self.dim();
        let a = &self.amplitudes;
        let elements = Array2::from_shape_fn((dim, dim), |(i, j)| a[i] * a[j].conj());
        DensityMatrix::from_raw(self.n, elements)
    }
}

/// Momentum eigenstate `|p>`.
pub fn basis_state(n: usize, p: i64) -> Result<StateVector> {
    let idx = momentum_to_index(n, p)?;
    let mut amplitudes = Array1::zeros(1 << n);
    amplitudes[idx] = C64::new(1.0, 0.0);
    Ok(StateVector { n, amplitudes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    elements: Array2<C64>,
}

impl DensityMatrix {
    /// Validating constructor; fails when any density invariant is violated.
    pub fn new(n: usize, elements: Array2<C64>) -> Result<Self> {
        let dim = check_qubits(n)?;
        if elements.dim() != (dim, dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: elements.nrows(),
            });
        }
        let report = validate_density(&elements);
        if !report.is_valid() {
            return Err(Error::InvalidDensity(report.to_string()));
        }
        Ok(Self { n, elements })
    }

    pub(crate) fn from_raw(n: usize, elements: Array2<C64>) -> Self {
        debug_assert_eq!(elements.nrows(), 1 << n);
        Self { n, elements }
    }

    /// Uniformly mixed state `I/N`.
    pub fn maximally_mixed(n: usize) -> Result<Self> {
        let dim = check_qubits(n)?;
        let w = C64::new(1.0 / dim as f64, 0.0);
        let elements = Array2::from_diag(&Array1::from_elem(dim, w));
        Ok(Self { n, elements })
    }

    pub fn from_diagonal(n: usize, diag: &[f64]) -> Result<Self> {
        let elements = Array2::from_diag(&Array1::from_iter(diag.iter().map(|&d| C64::new(d, 0.0))));
        Self::new(n, elements)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn elements(&self) -> &Array2<C64> {
        &self.elements
    }

    pub fn into_elements(self) -> Array2<C64> {
        self.elements
    }

    pub fn trace(&self) -> C64 {
        self.elements.diag().sum()
    }

    pub fn report(&self) -> DensityReport {
        validate_density(&self.elements)
    }
}

/// `<psi|sigma|psi> = sum_ij sigma_ij rho*_ij` for `rho = |psi><psi|`.
pub fn fidelity_pure(psi: &StateVector, sigma: &DensityMatrix) -> Result<f64> {
    if psi.dim() != sigma.dim() {
        return Err(Error::Dimension {
            expected: psi.dim(),
            found: sigma.dim(),
        });
    }
    Ok(pure_overlap(psi.amplitudes.as_slice().unwrap(), &sigma.elements))
}

pub(crate) fn pure_overlap(psi: &[C64], sigma: &Array2<C64>) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for (i, row) in sigma.outer_iter().enumerate() {
        let mut r = C64::new(0.0, 0.0);
        for (j, s) in row.iter().enumerate() {
            r += s * psi[j];
        }
        acc += psi[i].conj() * r;
    }
    acc.re
}

/// Frobenius inner product `Re sum_ij conj(a_ij) b_ij`.
pub(crate) fn hs_inner(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn to_nalgebra(m: &Array2<C64>) -> DMatrix<C64> {
    let (r, c) = m.dim();
    DMatrix::from_fn(r, c, |i, j| m[[i, j]])
}

/// Eigendecomposition of the Hermitian part of `m`; eigenvalues ascending.
fn hermitian_eigen(m: &Array2<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let a = to_nalgebra(m);
    let herm = (&a + a.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut pairs: Vec<(f64, usize)> = eig.eigenvalues.iter().copied().zip(0..).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let vals = pairs.iter().map(|p| p.0).collect();
    let vecs = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| eig.eigenvectors[(i, pairs[j].1)]);
    (vals, vecs)
}

/// Matrix square root with eigenvalues clamped at zero.
fn psd_sqrt(m: &Array2<C64>) -> DMatrix<C64> {
    let (vals, vecs) = hermitian_eigen(m);
    let d = vals.len();
    let mut scaled = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        for i in 0..d {
            scaled[(i, j)] *= s;
        }
    }
    &scaled * vecs.adjoint()
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`.
pub fn fidelity_uhlmann(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    for m in [rho, sigma] {
        let min = hermitian_eigen(&m.elements).0[0];
        if min < -DENSITY_TOL {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
    }
    let sr = psd_sqrt(&rho.elements);
    let inner = &sr * to_nalgebra(&sigma.elements) * &sr;
    let inner = Array2::from_shape_fn((rho.dim(), rho.dim()), |(i, j)| inner[(i, j)]);
    let (vals, _) = hermitian_eigen(&inner);
    let tr: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok(tr * tr)
}

/// Diagnostics for the density-matrix invariants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityReport {
    pub trace_deviation: f64,
    pub hermiticity_deviation: f64,
    pub min_eigenvalue: f64,
}

impl DensityReport {
    pub fn trace_ok(&self) -> bool {
        self.trace_deviation <= DENSITY_TOL
    }

    pub fn hermitian_ok(&self) -> bool {
        self.hermiticity_deviation <= DENSITY_TOL
    }

    pub fn positive_ok(&self) -> bool {
        self.min_eigenvalue >= -DENSITY_TOL
    }

    pub fn is_valid(&self) -> bool {
        self.trace_ok() && self.hermitian_ok() && self.positive_ok()
    }
}

impl std::fmt::Display for DensityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "trace deviation {:e}{}, hermiticity deviation {:e}{}, min eigenvalue {:e}{}",
            self.trace_deviation,
            if self.trace_ok() { "" } else { " (VIOLATED)" },
            self.hermiticity_deviation,
            if self.hermitian_ok() { "" } else { " (VIOLATED)" },
            self.min_eigenvalue,
            if self.positive_ok() { "" } else { " (VIOLATED)" },
        )
    }
}

/// Report-only check of trace, Hermiticity and positivity of a square matrix.
pub fn validate_density(sigma: &Array2<C64>) -> DensityReport {
    let trace: C64 = sigma.diag().sum();
    let trace_deviation = (trace - C64::new(1.0, 0.0)).norm();
    let mut hermiticity_deviation: f64 = 0.0;
    let d = sigma.nrows();
    for i in 0..d {
        for j in i..d {
            hermiticity_deviation = hermiticity_deviation.max((sigma[[i, j]] - sigma[[j, i]].conj()).norm());
        }
    }
    let min_eigenvalue = if d == 0 { 0.0 } else { hermitian_eigen(sigma).0[0] };
    DensityReport {
        trace_deviation,
        hermiticity_deviation,
        min_eigenvalue,
    }
}

/// Which momentum eigenstates an echo experiment averages over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcSet {
    /// All `N` basis states.
    All,
    /// All basis states except `p = 0` and `p = -N/2`.
    ExcludeSymmetric,
    Explicit(Vec<i64>),
}

impl IcSet {
    pub fn momenta(&self, n: usize) -> Result<Vec<i64>> {
        let dim = check_qubits(n)? as i64;
        let all = -dim / 2..dim / 2;
        let out: Vec<i64> = match self {
            IcSet::All => all.collect(),
            IcSet::ExcludeSymmetric => all.filter(|&p| p != 0 && p != -dim / 2).collect(),
            IcSet::Explicit(ps) => {
                for &p in ps {
                    momentum_to_index(n, p)?;
                }
                ps.clone()
            }
        };
        if out.is_empty() {
            return Err(Error::param("ic_set", "no initial conditions selected"));
        }
        Ok(out)
    }
}

/// Provenance carried by every fidelity series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub engine: String,
    pub n: usize,
    pub params: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    pub initial_conditions: Vec<i64>,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

/// Mean fidelity with standard error over a strictly increasing time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelitySeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub meta: SeriesMeta,
}

impl FidelitySeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, stderr: Vec<f64>, meta: SeriesMeta) -> Result<Self> {
        if values.len() != times.len() {
            return Err(Error::Dimension {
                expected: times.len(),
                found: values.len(),
            });
        }
        if stderr.len() != times.len() {
            return Err(Error::Dimension {
                expected: times.len(),
                found: stderr.len(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("times", "must be strictly increasing"));
        }
        if stderr.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::param("stderr", "must be non-negative"));
        }
        Ok(Self {
            times,
            values,
            stderr,
            meta,
        })
    }

    /// Series without uncertainty, e.g. from a closed form.
    pub fn exact(times: Vec<f64>, values: Vec<f64>, meta: SeriesMeta) -> Result<Self> {
        let stderr = vec![0.0; times.len()];
        Self::new(times, values, stderr, meta)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Fully mixed floor `1/2^n`.
    pub fn floor(&self) -> f64 {
        0.5f64.powi(self.meta.n as i32)
    }

    /// Points with `lo <= t <= hi`.
    pub fn window(&self, lo: f64, hi: f64) -> FidelitySeries {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.times[i] >= lo && self.times[i] <= hi).collect();
        FidelitySeries {
            times: keep.iter().map(|&i| self.times[i]).collect(),
            values: keep.iter().map(|&i| self.values[i]).collect(),
            stderr: keep.iter().map(|&i| self.stderr[i]).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn value_at(&self, t: f64) -> Option<f64> {
        self.times.iter().position(|&x| x == t).map(|i| self.values[i])
    }

    /// Whether every value lies in `[0, 1 + 3 stderr]` (with round-off slack).
    pub fn values_in_range(&self) -> bool {
        self.values
            .iter()
            .zip(&self.stderr)
            .all(|(v, s)| *v >= -DENSITY_TOL && *v <= 1.0 + 3.0 * s + DENSITY_TOL)
    }
}

/// Mean and standard error of a sample.
pub(crate) fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}
