//! Low-level dense kernels shared by the engines: DFT conjugation,
//! diagonal phases, local gate application and single-qubit decay channels.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

pub type Mat2 = [[C64; 2]; 2];
pub type Mat4 = [[C64; 4]; 4];

/// Which unitary DFT to apply. `Forward` is `F` with kernel `w^{jk}/sqrt(N)`,
/// `w = exp(+2 pi i / N)`; `Inverse` is `F^{-1} = F^dagger`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DftKind {
    Forward,
    Inverse,
}

impl DftKind {
    pub fn adjoint(self) -> Self {
        match self {
            DftKind::Forward => DftKind::Inverse,
            DftKind::Inverse => DftKind::Forward,
        }
    }
}

#[derive(Clone)]
pub struct DftPlan {
    dim: usize,
    // rustfft's "inverse" uses exp(+2 pi i jk / N), i.e. our F
    plus: Arc<dyn Fft<f64>>,
    minus: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl fmt::Debug for DftPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DftPlan").field("dim", &self.dim).finish()
    }
}

impl DftPlan {
    pub fn new(dim: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dim,
            plus: planner.plan_fft_inverse(dim),
            minus: planner.plan_fft_forward(dim),
            scale: 1.0 / (dim as f64).sqrt(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn fft(&self, kind: DftKind) -> &Arc<dyn Fft<f64>> {
        match kind {
            DftKind::Forward => &self.plus,
            DftKind::Inverse => &self.minus,
        }
    }

    /// In-place unitary DFT on every contiguous chunk of length `dim`.
    pub fn apply(&self, buf: &mut [C64], kind: DftKind) {
        self.fft(kind).process(buf);
        for x in buf.iter_mut() {
            *x *= self.scale;
        }
    }

    /// `rho -> G rho G^dagger`. The DFT matrix is symmetric, so the right
    /// factor is `G^{-1}` acting on rows.
    pub fn conjugate(&self, rho: &mut Array2<C64>, kind: DftKind) {
        let rows = rho.as_slice_mut().expect("standard layout");
        self.apply(rows, kind.adjoint());
        let mut t = rho.t().as_standard_layout().into_owned();
        self.apply(t.as_slice_mut().unwrap(), kind);
        rho.assign(&t.t());
    }

    /// Dense matrix of `F` or `F^{-1}`.
    pub fn matrix(&self, kind: DftKind) -> Array2<C64> {
        let mut m = Array2::<C64>::eye(self.dim);
        // columns are images of basis vectors; rows of the transpose are contiguous
        self.apply(m.as_slice_mut().unwrap(), kind);
        m.reversed_axes().as_standard_layout().into_owned()
    }
}

/// `rho_ab *= d_a conj(d_b)`.
pub fn conjugate_diagonal(rho: &mut Array2<C64>, d: &Array1<C64>) {
    for (a, mut row) in rho.axis_iter_mut(Axis(0)).enumerate() {
        let da = d[a];
        for (x, db) in row.iter_mut().zip(d.iter()) {
            *x *= da * db.conj();
        }
    }
}

/// `rho -> U rho U^dagger` for a dense `U`.
pub fn conjugate_dense(rho: &mut Array2<C64>, u: &Array2<C64>) {
    let tmp = u.dot(&*rho);
    let adj = u.t().mapv(|z| z.conj());
    rho.assign(&tmp.dot(&adj));
}

pub fn adjoint(u: &Array2<C64>) -> Array2<C64> {
    u.t().mapv(|z| z.conj())
}

/// Apply a 2x2 matrix to qubit `q` of a state vector.
pub fn apply_1q_vec(psi: &mut [C64], q: usize, u: &Mat2) {
    let e = 1usize << q;
    for i in (0..psi.len()).filter(|i| i & e == 0) {
        let (x0, x1) = (psi[i], psi[i | e]);
        psi[i] = u[0][0] * x0 + u[0][1] * x1;
        psi[i | e] = u[1][0] * x0 + u[1][1] * x1;
    }
}

/// Apply a 4x4 matrix to qubits `(q0, q1)` of a state vector; `q0` is the
/// low bit of the local 2-qubit index.
pub fn apply_2q_vec(psi: &mut [C64], q0: usize, q1: usize, u: &Mat4) {
    let (e0, e1) = (1usize << q0, 1usize << q1);
    for i in 0..psi.len() {
        if i & (e0 | e1) != 0 {
            continue;
        }
        let idx = [i, i | e0, i | e1, i | e0 | e1];
        let x = idx.map(|k| psi[k]);
        for (r, &k) in idx.iter().enumerate() {
            psi[k] = u[r][0] * x[0] + u[r][1] * x[1] + u[r][2] * x[2] + u[r][3] * x[3];
        }
    }
}

fn conj2(u: &Mat2) -> Mat2 {
    [[u[0][0].conj(), u[0][1].conj()], [u[1][0].conj(), u[1][1].conj()]]
}

fn conj4(u: &Mat4) -> Mat4 {
    let mut out = *u;
    for row in out.iter_mut() {
        for z in row.iter_mut() {
            *z = z.conj();
        }
    }
    out
}

/// `rho -> U rho U^dagger` for `U` acting on qubit `q`.
pub fn conjugate_1q(rho: &mut Array2<C64>, q: usize, u: &Mat2) {
    let uc = conj2(u);
    // right action on each row: (rho U^dagger)_{a,.} = conj(U) applied to row a
    for mut row in rho.axis_iter_mut(Axis(0)) {
        apply_1q_vec(row.as_slice_mut().unwrap(), q, &uc);
    }
    left_1q(rho, q, u);
}

fn left_1q(rho: &mut Array2<C64>, q: usize, u: &Mat2) {
    let e = 1usize << q;
    let dim = rho.nrows();
    for a in 0..dim {
        if a & e != 0 {
            continue;
        }
        for b in 0..dim {
            let (x0, x1) = (rho[[a, b]], rho[[a | e, b]]);
            rho[[a, b]] = u[0][0] * x0 + u[0][1] * x1;
            rho[[a | e, b]] = u[1][0] * x0 + u[1][1] * x1;
        }
    }
}

/// `rho -> U rho U^dagger` for `U` acting on qubits `(q0, q1)`.
pub fn conjugate_2q(rho: &mut Array2<C64>, q0: usize, q1: usize, u: &Mat4) {
    let uc = conj4(u);
    for mut row in rho.axis_iter_mut(Axis(0)) {
        apply_2q_vec(row.as_slice_mut().unwrap(), q0, q1, &uc);
    }
    let (e0, e1) = (1usize << q0, 1usize << q1);
    let dim = rho.nrows();
    for a in 0..dim {
        if a & (e0 | e1) != 0 {
            continue;
        }
        let idx = [a, a | e0, a | e1, a | e0 | e1];
        for b in 0..dim {
            let x = idx.map(|k| rho[[k, b]]);
            for (r, &k) in idx.iter().enumerate() {
                rho[[k, b]] = u[r][0] * x[0] + u[r][1] * x[1] + u[r][2] * x[2] + u[r][3] * x[3];
            }
        }
    }
}

/// `rho -> sum_i K_i rho K_i^dagger` on qubit `q`.
pub fn apply_kraus_1q(rho: &mut Array2<C64>, q: usize, kraus: &[Mat2]) {
    let mut acc = Array2::<C64>::zeros(rho.raw_dim());
    for k in kraus {
        let mut term = rho.clone();
        conjugate_1q(&mut term, q, k);
        acc += &term;
    }
    rho.assign(&acc);
}

/// Single-qubit relaxation channel in closed form: excited population
/// scaled by `1 - gamma` (the rest flows to ground), coherences by `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFactors {
    pub gamma: f64,
    pub coherence: f64,
}

impl DecayFactors {
    /// Lindblad solution after duration `d` at rates `(nu1, nu2)`.
    pub fn lindblad(nu1: f64, nu2: f64, d: f64) -> Self {
        Self {
            gamma: -(-nu1 * d).exp_m1(),
            coherence: (-(nu1 + nu2) * d / 2.0).exp(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.gamma == 0.0 && self.coherence == 1.0
    }
}

/// Apply the closed-form channel to every qubit in `mask`.
pub fn decay_exact(rho: &mut Array2<C64>, mask: usize, f: DecayFactors) {
    decay_exact_impl(rho, mask, f, false);
}

/// Heisenberg-picture dual of [`decay_exact`].
pub fn decay_exact_dual(x: &mut Array2<C64>, mask: usize, f: DecayFactors) {
    decay_exact_impl(x, mask, f, true);
}

fn decay_exact_impl(rho: &mut Array2<C64>, mask: usize, f: DecayFactors, dual: bool) {
    if f.is_identity() {
        return;
    }
    let dim = rho.nrows();
    let (g, c) = (f.gamma, f.coherence);
    let data = rho.as_slice_mut().unwrap();
    let mut m = mask;
    while m != 0 {
        let j = m.trailing_zeros();
        m &= m - 1;
        let e = 1usize << j;
        for a in (0..dim).filter(|a| a & e == 0) {
            let r0 = a * dim;
            let r1 = (a | e) * dim;
            for b in (0..dim).filter(|b| b & e == 0) {
                let (i00, i11) = (r0 + b, r1 + (b | e));
                if dual {
                    data[i11] = data[i00] * g + data[i11] * (1.0 - g);
                } else {
                    data[i00] += data[i11] * g;
                    data[i11] *= 1.0 - g;
                }
                data[r0 + (b | e)] *= c;
                data[r1 + b] *= c;
            }
        }
    }
}

/// Lindblad dissipator `L(rho)` (or its dual) for relaxation `nu1` and pure
/// dephasing `nu2` on the qubits in `mask`, written into `out`.
pub fn dissipator(rho: &Array2<C64>, out: &mut Array2<C64>, mask: usize, nu1: f64, nu2: f64, dual: bool) {
    let dim = rho.nrows();
    let src = rho.as_slice().unwrap();
    let dst = out.as_slice_mut().unwrap();
    let h1 = 0.5 * nu1;
    let h2 = 0.5 * nu2;
    for a in 0..dim {
        let am = a & mask;
        let ca = am.count_ones() as f64;
        for b in 0..dim {
            let bm = b & mask;
            let loss = h1 * (ca + bm.count_ones() as f64) + h2 * ((am ^ bm).count_ones() as f64);
            let mut v = -loss * src[a * dim + b];
            if nu1 != 0.0 {
                // gain from (a|e, b|e) when both bits clear, or its dual
                let both = if dual { am & bm } else { mask & !(a | b) };
                let mut w = both;
                while w != 0 {
                    let e = w & w.wrapping_neg();
                    w &= w - 1;
                    let (sa, sb) = if dual { (a ^ e, b ^ e) } else { (a | e, b | e) };
                    v += nu1 * src[sa * dim + sb];
                }
            }
            dst[a * dim + b] = v;
        }
    }
}

/// Largest decay rate of the dissipator (spectral bound used for step sizes).
pub fn dissipator_bound(mask: usize, nu1: f64, nu2: f64) -> f64 {
    mask.count_ones() as f64 * (nu1 + 0.5 * nu2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn naive_dft(dim: usize, sign: f64) -> Array2<C64> {
        let s = 1.0 / (dim as f64).sqrt();
        Array2::from_shape_fn((dim, dim), |(j, k)| C64::from_polar(s, sign * 2.0 * PI * (j * k) as f64 / dim as f64))
    }

    fn random_matrix(dim: usize, seed: u64) -> Array2<C64> {
        let mut x = seed;
        Array2::from_shape_fn((dim, dim), |_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = (x >> 11) as f64 / (1u64 << 53) as f64;
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = (x >> 11) as f64 / (1u64 << 53) as f64;
            C64::new(a - 0.5, b - 0.5)
        })
    }

    fn max_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn dft_matrix_convention() {
        for dim in [2, 8, 16] {
            let plan = DftPlan::new(dim);
            assert!(max_diff(&plan.matrix(DftKind::Forward), &naive_dft(dim, 1.0)) < 1e-13);
            assert!(max_diff(&plan.matrix(DftKind::Inverse), &naive_dft(dim, -1.0)) < 1e-13);
        }
    }

    #[test]
    fn dft_conjugation_matches_dense() {
        let dim = 8;
        let plan = DftPlan::new(dim);
        let rho = random_matrix(dim, 3);
        for kind in [DftKind::Forward, DftKind::Inverse] {
            let mut fast = rho.clone();
            plan.conjugate(&mut fast, kind);
            let mut slow = rho.clone();
            conjugate_dense(&mut slow, &plan.matrix(kind));
            assert!(max_diff(&fast, &slow) < 1e-13);
        }
    }

    #[test]
    fn local_gates_match_kron() {
        let dim = 8;
        let rho = random_matrix(dim, 5);
        let u: Mat2 = [[C64::new(0.6, 0.0), C64::new(0.0, 0.8)], [C64::new(0.0, 0.8), C64::new(0.6, 0.0)]];
        for q in 0..3 {
            let full = Array2::from_shape_fn((dim, dim), |(a, b)| {
                if (a ^ b) & !(1 << q) != 0 {
                    C64::new(0.0, 0.0)
                } else {
                    u[(a >> q) & 1][(b >> q) & 1]
                }
            });
            let mut fast = rho.clone();
            conjugate_1q(&mut fast, q, &u);
            let mut slow = rho.clone();
            conjugate_dense(&mut slow, &full);
            assert!(max_diff(&fast, &slow) < 1e-14);
        }
        // CNOT with control 2, target 0 as a 4x4 on (q0=2, q1=0)
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let mut cx: Mat4 = [[zero; 4]; 4];
        cx[0][0] = one;
        cx[2][2] = one;
        cx[1][3] = one;
        cx[3][1] = one;
        let full = Array2::from_shape_fn((dim, dim), |(a, b)| {
            let img = if b & 4 != 0 { b ^ 1 } else { b };
            if a == img {
                one
            } else {
                zero
            }
        });
        let mut fast = rho.clone();
        conjugate_2q(&mut fast, 2, 0, &cx);
        let mut slow = rho.clone();
        conjugate_dense(&mut slow, &full);
        assert!(max_diff(&fast, &slow) < 1e-14);
    }

    #[test]
    fn exact_decay_single_qubit() {
        let mut rho = Array2::from_elem((2, 2), C64::new(0.5, 0.0));
        let f = DecayFactors::lindblad(0.3, 0.2, 1.5);
        decay_exact(&mut rho, 1, f);
        let e1 = (-0.45f64).exp();
        assert_abs_diff_eq!(rho[[1, 1]].re, 0.5 * e1, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[[0, 0]].re, 1.0 - 0.5 * e1, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[[0, 1]].re, 0.5 * (-0.375f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn duals_are_adjoint() {
        // <Y, E(rho)> == <E*(Y), rho> for both the exact channel and the generator
        let dim = 8;
        let rho = random_matrix(dim, 11);
        let y = random_matrix(dim, 12);
        let inner = |a: &Array2<C64>, b: &Array2<C64>| -> C64 { a.iter().zip(b.iter()).map(|(x, z)| x.conj() * z).sum() };
        let f = DecayFactors::lindblad(0.2, 0.7, 0.4);
        let mut er = rho.clone();
        decay_exact(&mut er, 0b101, f);
        let mut ey = y.clone();
        decay_exact_dual(&mut ey, 0b101, f);
        assert!((inner(&y, &er) - inner(&ey, &rho)).norm() < 1e-13);

        let mut lr = Array2::zeros((dim, dim));
        dissipator(&rho, &mut lr, 0b111, 0.2, 0.7, false);
        let mut ly = Array2::zeros((dim, dim));
        dissipator(&y, &mut ly, 0b111, 0.2, 0.7, true);
        assert!((inner(&y, &lr) - inner(&ly, &rho)).norm() < 1e-13);
    }

    #[test]
    fn dissipator_preserves_trace() {
        let rho = random_matrix(8, 21);
        let mut out = Array2::zeros((8, 8));
        dissipator(&rho, &mut out, 0b110, 0.4, 0.9, false);
        assert!(out.diag().sum().norm() < 1e-14);
    }
}
