//! Parameter recovery from fidelity-decay data.

mod lm;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::circuitgen::Topology;
use crate::closedform::{f_gate_based, DynamicalRegime, GateLayout};
use crate::error::{Error, Result};
use crate::krausgate::{echo_kraus, GateNoiseConfig, KrausEchoOptions};
use crate::lindblad::{echo_lindblad, DecayMode, EchoOptions, Integrator, NoiseRates};
use crate::qstate::{FidelitySeries, IcSet};
use crate::sawtooth::QsmParams;

/// Two-qubit gates per map step in the reference hardware compilation.
pub const REFERENCE_CNOTS_PER_STEP: f64 = 33.0;
/// Wall-clock duration of one map step on that hardware, in seconds.
pub const REFERENCE_T_STEP: f64 = 33.0 * 350e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub stderr: BTreeMap<String, f64>,
    pub residual: f64,
    pub window: (f64, f64),
    pub seed: Option<u64>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    pub fn param_stderr(&self, name: &str) -> Option<f64> {
        self.stderr.get(name).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit results are always serializable")
    }
}

fn rms(r: &[f64]) -> f64 {
    (r.iter().map(|v| v * v).sum::<f64>() / r.len().max(1) as f64).sqrt()
}

struct LinearFit {
    slope: f64,
    intercept: f64,
    se_slope: f64,
    se_intercept: f64,
    rms: f64,
}

fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let s2 = res.iter().map(|r| r * r).sum::<f64>() / dof;
    LinearFit {
        slope,
        intercept,
        se_slope: (s2 / sxx).sqrt(),
        se_intercept: (s2 * (1.0 / m + mx * mx / sxx)).sqrt(),
        rms: rms(&res),
    }
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    linear_fit(x, y).slope
}

/// Fit `f = e^{-gamma t} (f0 - 2^-n) + 2^-n` with `gamma >= 0`.
pub fn fit_exp_plateau(series: &FidelitySeries, n: usize) -> Result<FitResult> {
    if series.len() < 3 {
        return Err(Error::Precondition(format!("need at least 3 points, got {}", series.len())));
    }
    let fl = 0.5f64.powi(n as i32);
    let spread = series.values.iter().map(|v| (v - fl).abs()).fold(0.0, f64::max);
    if spread < 1e-12 {
        return Err(Error::DegenerateSeries("series sits at the 1/2^n floor".into()));
    }
    let t = &series.times;
    let y = &series.values;
    let resid = |x: &[f64]| -> Result<Vec<f64>> {
        Ok(t.iter().zip(y).map(|(ti, yi)| (-x[0] * ti).exp() * (x[1] - fl) + fl - yi).collect())
    };
    let span = t[t.len() - 1] - t[0];
    let above: Vec<(f64, f64)> = t.iter().zip(y).filter(|(_, v)| **v > fl).map(|(a, b)| (*a, (b - fl).ln())).collect();
    let g0 = if above.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = above.into_iter().unzip();
        (-linear_slope(&xs, &ys)).max(0.0)
    } else {
        1.0 / span
    };
    let f00 = (y[0] - fl) * (g0 * t[0]).exp() + fl;
    let starts = vec![vec![g0, f00], vec![1.0 / span, y[0]], vec![10.0 / span, y[0]]];
    let out = lm::multistart(&resid, &starts, &[0.0, f64::NEG_INFINITY])?;
    let se = lm::standard_errors(&out);
    Ok(FitResult {
        model: "exp-plateau".into(),
        params: BTreeMap::from([("gamma".into(), out.x[0]), ("f0".into(), out.x[1])]),
        stderr: BTreeMap::from([("gamma".into(), se[0]), ("f0".into(), se[1])]),
        residual: rms(&out.residuals),
        window: (t[0], t[t.len() - 1]),
        seed: series.meta.seed,
    })
}

/// Per-gate error from `f1 = (f0 - 2^-n)(1 - eps)^m + 2^-n`.
pub fn extract_cnot_error(f0: f64, f1: f64, n: usize, m_cnot: f64) -> Result<f64> {
    let fl = 0.5f64.powi(n as i32);
    if !(fl < f1 && f1 <= f0 && f0 <= 1.0) {
        return Err(Error::Precondition(format!("need 2^-n < f1 <= f0 <= 1, got f0 = {f0}, f1 = {f1}, 2^-n = {fl}")));
    }
    if !(m_cnot > 0.0) {
        return Err(Error::param("M_cnot", format!("must be positive, got {m_cnot}")));
    }
    Ok(1.0 - ((f1 - fl) / (f0 - fl)).powf(1.0 / m_cnot))
}

/// Fidelity after `m_cnot` gates of error `eps`.
pub fn cnot_forward(f0: f64, eps: f64, n: usize, m_cnot: f64) -> f64 {
    let fl = 0.5f64.powi(n as i32);
    (f0 - fl) * (1.0 - eps).powf(m_cnot) + fl
}

/// `(T1, T2) = (T_step / nu1, 2 T_step / (nu1 + nu2))`; `T1` is infinite without relaxation.
pub fn rates_to_physical(nu1: f64, nu2: f64, t_step: f64) -> Result<(f64, f64)> {
    if !(nu1 >= 0.0 && nu2 >= 0.0) {
        return Err(Error::param("rates", format!("must be non-negative, got nu1 = {nu1}, nu2 = {nu2}")));
    }
    if !(nu1 + nu2 > 0.0) {
        return Err(Error::param("rates", "nu1 + nu2 must be positive"));
    }
    if !(t_step > 0.0) {
        return Err(Error::param("T_step", format!("must be positive, got {t_step}")));
    }
    let t1 = if nu1 == 0.0 { f64::INFINITY } else { t_step / nu1 };
    Ok((t1, 2.0 * t_step / (nu1 + nu2)))
}

/// Inverse of [`rates_to_physical`].
pub fn physical_to_rates(t1: f64, t2: f64, t_step: f64) -> Result<NoiseRates> {
    if !(t1 > 0.0 && t2 > 0.0 && t_step > 0.0) {
        return Err(Error::param("times", "T1, T2 and T_step must be positive"));
    }
    let nu1 = t_step / t1;
    NoiseRates::new(nu1, 2.0 * t_step / t2 - nu1)
}

/// Forward model shared by both regimes of a rate fit.
#[derive(Debug, Clone, PartialEq)]
pub enum RateModel {
    /// Serial gate-based closed form with `cnots_per_step` gates per map step.
    GateBasedSerial { cnots_per_step: f64 },
    /// Lindblad echo simulation at the two kick strengths.
    LindbladSim { localized: QsmParams, diffusive: QsmParams, mode: DecayMode },
    /// Compiled-circuit Kraus simulation; rates map to times through `t_step`.
    KrausSim { localized: QsmParams, diffusive: QsmParams, t_step: f64, topology: Topology },
}

impl RateModel {
    pub fn id(&self) -> &'static str {
        match self {
            RateModel::GateBasedSerial { .. } => "gate-based-serial",
            RateModel::LindbladSim { .. } => "lindblad-sim",
            RateModel::KrausSim { .. } => "kraus-sim",
        }
    }

    pub fn gate_based() -> Self {
        RateModel::GateBasedSerial { cnots_per_step: REFERENCE_CNOTS_PER_STEP }
    }

    /// Predicted `(localized, diffusive)` curves on integer forward-back times.
    fn predict(&self, n: usize, times: &[f64], ics: &IcSet, rates: &NoiseRates) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            RateModel::GateBasedSerial { cnots_per_step } => {
                let curve = |regime| -> Result<Vec<f64>> {
                    // a forward-back round trip decoheres for two map steps
                    times.iter().map(|&t| f_gate_based(2.0 * t, n, *cnots_per_step, rates, regime, GateLayout::Serial)).collect()
                };
                Ok((curve(DynamicalRegime::SemiLocalized)?, curve(DynamicalRegime::Diffusive)?))
            }
            RateModel::LindbladSim { localized, diffusive, mode } => {
                let t_max = integer_horizon(times)?;
                let opts = EchoOptions { mode: *mode, integrator: Integrator::Exact };
                let a = echo_lindblad(localized, rates, t_max, ics, opts)?;
                let b = echo_lindblad(diffusive, rates, t_max, ics, opts)?;
                Ok((sample(&a, times), sample(&b, times)))
            }
            RateModel::KrausSim { localized, diffusive, t_step, topology } => {
                let t_max = integer_horizon(times)?;
                let cfg = if rates.is_zero() {
                    GateNoiseConfig::noiseless()
                } else {
                    let (t1, t2) = rates_to_physical(rates.nu1, rates.nu2, *t_step)?;
                    let mut c = GateNoiseConfig::noiseless();
                    c.t1 = t1;
                    c.t2 = t2;
                    c
                };
                let opts = KrausEchoOptions { topology: *topology, optimize: false };
                let a = echo_kraus(localized, &cfg, t_max, ics, opts)?;
                let b = echo_kraus(diffusive, &cfg, t_max, ics, opts)?;
                Ok((sample(&a, times), sample(&b, times)))
            }
        }
    }
}

fn integer_horizon(times: &[f64]) -> Result<usize> {
    for &t in times {
        if t < 0.0 || t.fract() != 0.0 {
            return Err(Error::Precondition(format!("simulator-backed fits need integer times, got {t}")));
        }
    }
    Ok(times.iter().fold(0.0, |a: f64, b| a.max(*b)).max(1.0) as usize)
}

fn sample(s: &FidelitySeries, times: &[f64]) -> Vec<f64> {
    times.iter().map(|&t| s.values[t as usize]).collect()
}

/// The 5x5 logarithmic grid over `[1e-3, 10]^2` used as starting points.
pub fn start_grid() -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..5).map(|i| 10f64.powf(-3.0 + i as f64)).collect();
    let mut out = Vec::with_capacity(25);
    for &a in &axis {
        for &b in &axis {
            out.push(vec![a, b]);
        }
    }
    out
}

/// Joint fit of `(nu1, nu2)` to a localized and a diffusive echo series.
///
/// The localized series is modelled with the semi-localized rate, the
/// diffusive one with the diffusive rate.
pub fn fit_rates(localized: &FidelitySeries, diffusive: &FidelitySeries, model: &RateModel) -> Result<FitResult> {
    if localized.times != diffusive.times {
        return Err(Error::Precondition("both series must share a time grid".into()));
    }
    if localized.meta.n != diffusive.meta.n {
        return Err(Error::Precondition("both series must have the same qubit count".into()));
    }
    if localized.len() < 2 {
        return Err(Error::Precondition("need at least 2 points per series".into()));
    }
    let n = localized.meta.n;
    let times = &localized.times;
    let ics = if localized.meta.initial_conditions.is_empty() {
        IcSet::All
    } else {
        IcSet::Explicit(localized.meta.initial_conditions.clone())
    };
    let resid = |x: &[f64]| -> Result<Vec<f64>> {
        let rates = NoiseRates { nu1: x[0], nu2: x[1] };
        let (a, b) = model.predict(n, times, &ics, &rates)?;
        let mut r: Vec<f64> = a.iter().zip(&localized.values).map(|(p, o)| p - o).collect();
        r.extend(b.iter().zip(&diffusive.values).map(|(p, o)| p - o));
        Ok(r)
    };
    let out = lm::multistart(&resid, &start_grid(), &[0.0, 0.0])?;
    let se = lm::standard_errors(&out);
    Ok(FitResult {
        model: model.id().into(),
        params: BTreeMap::from([("nu1".into(), out.x[0]), ("nu2".into(), out.x[1])]),
        stderr: BTreeMap::from([("nu1".into(), se[0]), ("nu2".into(), se[1])]),
        residual: rms(&out.residuals),
        window: (times[0], times[times.len() - 1]),
        seed: localized.meta.seed,
    })
}

/// Power-law fit `f - 2^-n = A t^b` on `[lo, hi]`, with the quadratic
/// coefficient of the log-log curve reported as `curvature`.
pub fn fit_algebraic(series: &FidelitySeries, window: (f64, f64)) -> Result<FitResult> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::param("window", format!("need 0 < lo < hi, got [{lo}, {hi}]")));
    }
    let w = series.window(lo, hi);
    if w.len() < 2 {
        return Err(Error::param("window", format!("needs at least two points in [{lo}, {hi}]")));
    }
    let fl = series.floor();
    let mut xs = Vec::with_capacity(w.len());
    let mut ys = Vec::with_capacity(w.len());
    for (&t, &v) in w.times.iter().zip(&w.values) {
        let d = v - fl;
        if !(d > 0.0) {
            return Err(Error::NonPositiveLog { t, value: d });
        }
        xs.push(t.ln());
        ys.push(d.ln());
    }
    let lf = linear_fit(&xs, &ys);
    let prefactor = lf.intercept.exp();
    let mut params = BTreeMap::from([("exponent".into(), lf.slope), ("prefactor".into(), prefactor)]);
    if xs.len() >= 3 {
        params.insert("curvature".into(), quadratic_coefficient(&xs, &ys));
    }
    Ok(FitResult {
        model: "algebraic".into(),
        params,
        stderr: BTreeMap::from([("exponent".into(), lf.se_slope), ("prefactor".into(), prefactor * lf.se_intercept)]),
        residual: lf.rms,
        window,
        seed: series.meta.seed,
    })
}

fn quadratic_coefficient(x: &[f64], y: &[f64]) -> f64 {
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let a = nalgebra::DMatrix::from_fn(x.len(), 3, |i, j| (x[i] - mx).powi(j as i32));
    let b = nalgebra::DVector::from_column_slice(y);
    let ata = a.transpose() * &a;
    match ata.lu().solve(&(a.transpose() * b)) {
        Some(c) => c[2],
        None => f64::NAN,
    }
}

/// Replace each value by a binomial estimate from `shots` per initial
/// condition, averaged over `ics` conditions.
pub fn apply_shot_noise<R: Rng + ?Sized>(series: &FidelitySeries, shots: u64, ics: usize, rng: &mut R) -> Result<FidelitySeries> {
    if shots == 0 || ics == 0 {
        return Err(Error::param("shots", "shots and ics must be positive"));
    }
    let total = (shots * ics as u64) as f64;
    let mut values = Vec::with_capacity(series.len());
    let mut stderr = Vec::with_capacity(series.len());
    for &v in &series.values {
        let p = v.clamp(0.0, 1.0);
        let dist = Binomial::new(shots, p).map_err(|e| Error::param("probability", e.to_string()))?;
        let hits: u64 = (0..ics).map(|_| dist.sample(rng)).sum();
        let est = hits as f64 / total;
        values.push(est);
        stderr.push((est * (1.0 - est) / total).sqrt());
    }
    FidelitySeries::new(series.times.clone(), values, stderr, series.meta.clone())
}
