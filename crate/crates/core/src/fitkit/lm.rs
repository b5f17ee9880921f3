//! Bound-constrained Levenberg-Marquardt with a numeric Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const MAX_ITER: usize = 300;

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub x: Vec<f64>,
    pub rss: f64,
    pub residuals: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn rss(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn jacobian<F>(f: &F, x: &[f64], r0: &[f64], lower: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let m = r0.len();
    let p = x.len();
    let mut j = DMatrix::zeros(m, p);
    for c in 0..p {
        let h = 1e-6 * x[c].abs().max(1e-4);
        let mut xp = x.to_vec();
        xp[c] += h;
        let rp = f(&xp)?;
        if x[c] - h >= lower[c] {
            let mut xm = x.to_vec();
            xm[c] -= h;
            let rm = f(&xm)?;
            for i in 0..m {
                j[(i, c)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        } else {
            for i in 0..m {
                j[(i, c)] = (rp[i] - r0[i]) / h;
            }
        }
    }
    Ok(j)
}

/// Minimise `|f(x)|^2` subject to `x >= lower`, projecting each trial step.
pub(crate) fn minimize<F>(f: &F, x0: &[f64], lower: &[f64]) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let p = x0.len();
    let mut x: Vec<f64> = x0.iter().zip(lower).map(|(v, l)| v.max(*l)).collect();
    let mut r = f(&x)?;
    let mut cur = rss(&r);
    let mut j = jacobian(f, &x, &r, lower)?;
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        if cur == 0.0 {
            converged = true;
            break;
        }
        let jt = j.transpose();
        let a = &jt * &j;
        let g = &jt * DVector::from_column_slice(&r);
        let dmax = (0..p).map(|i| a[(i, i)]).fold(0.0, f64::max);
        if dmax == 0.0 {
            converged = true;
            break;
        }
        // parameters pinned at their bound with an outward gradient stay fixed
        let free: Vec<usize> = (0..p).filter(|&i| x[i] > lower[i] || g[i] < 0.0).collect();
        if free.is_empty() {
            converged = true;
            break;
        }
        let q = free.len();
        let mut accepted = false;
        while lambda < 1e20 {
            let mut m = DMatrix::from_fn(q, q, |r, c| a[(free[r], free[c])]);
            for (r, &i) in free.iter().enumerate() {
                m[(r, r)] += lambda * a[(i, i)].max(1e-12 * dmax);
            }
            let rhs = DVector::from_fn(q, |r, _| -g[free[r]]);
            let Some(sub) = m.lu().solve(&rhs) else {
                lambda *= 4.0;
                continue;
            };
            let mut delta = vec![0.0; p];
            for (r, &i) in free.iter().enumerate() {
                delta[i] = sub[r];
            }
            let xn: Vec<f64> = (0..p).map(|i| (x[i] + delta[i]).max(lower[i])).collect();
            let moved = (0..p).all(|i| (xn[i] - x[i]).abs() <= 1e-14 * (x[i].abs() + 1e-12));
            if moved {
                converged = true;
                break;
            }
            let rn = f(&xn)?;
            let nr = rss(&rn);
            if nr < cur {
                let small = (0..p).all(|i| (xn[i] - x[i]).abs() <= 1e-12 * (x[i].abs() + 1e-10));
                let rel = (cur - nr) / cur;
                x = xn;
                r = rn;
                cur = nr;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                if small || rel < 1e-15 {
                    converged = true;
                }
                break;
            }
            lambda *= 2.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // no descent direction left at any damping
            converged = true;
            break;
        }
        j = jacobian(f, &x, &r, lower)?;
    }
    if converged {
        j = jacobian(f, &x, &r, lower)?;
    }
    Ok(LmOutcome { x, rss: cur, residuals: r, jacobian: j, iterations, converged })
}

/// Per-parameter standard errors from `s^2 (J^T J)^{-1}`.
pub(crate) fn standard_errors(out: &LmOutcome) -> Vec<f64> {
    let m = out.residuals.len();
    let p = out.x.len();
    let dof = m.saturating_sub(p).max(1) as f64;
    let s2 = out.rss / dof;
    let a = out.jacobian.transpose() * &out.jacobian;
    match a.try_inverse() {
        Some(inv) => (0..p).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect(),
        None => vec![f64::INFINITY; p],
    }
}

/// Run from every start, keep the lowest residual; ties go to the earliest start.
pub(crate) fn multistart<F>(f: &F, starts: &[Vec<f64>], lower: &[f64]) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    use rayon::prelude::*;
    let runs: Vec<Result<LmOutcome>> = starts.par_iter().map(|s| minimize(f, s, lower)).collect();
    let mut best: Option<LmOutcome> = None;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok(o) => {
                if best.as_ref().map_or(true, |b| o.rss < b.rss) {
                    best = Some(o);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) if b.converged => Ok(b),
        (Some(b), _) => Err(Error::NoConvergence { iterations: b.iterations, rss: b.rss }),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::Precondition("no starting points".into())),
    }
}
