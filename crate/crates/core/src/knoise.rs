//! Stochastic kick-strength noise: pure-state Monte Carlo and its
//! combination with Lindblad decay.

use ndarray::Array1;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{DftKind, DftPlan};
use crate::lindblad::{projector, Channel, DecayEngine, DecayMode, DecaySchedule, Integrator, NoiseRates};
use crate::qstate::{hs_inner, mean_stderr, momentum_to_index, FidelitySeries, IcSet, SeriesMeta};
use crate::rng::normal_at;
use crate::sawtooth::{kinetic_phases, potential_phases, Direction, QsmParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamNoiseConfig {
    pub sigma: f64,
    pub realizations: usize,
    pub seed: u64,
    pub exclude_symmetric_ics: bool,
}

impl ParamNoiseConfig {
    pub fn new(sigma: f64, realizations: usize, seed: u64) -> Result<Self> {
        let c = Self { sigma, realizations, seed, exclude_symmetric_ics: true };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be finite and >= 0, got {}", self.sigma)));
        }
        if self.realizations == 0 {
            return Err(Error::param("realizations", "must be >= 1"));
        }
        Ok(())
    }

    pub fn ic_set(&self) -> IcSet {
        if self.exclude_symmetric_ics {
            IcSet::ExcludeSymmetric
        } else {
            IcSet::All
        }
    }
}

/// `k + dk` with `dk ~ N(0, sigma^2)`.
pub fn sample_kick<R: Rng + ?Sized>(k: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return k;
    }
    let z: f64 = rng.sample(StandardNormal);
    k + sigma * z
}

/// Kick used at map step `step` of a realization.
pub fn kick_at(k: f64, cfg: &ParamNoiseConfig, realization: usize, direction: Direction, step: usize) -> f64 {
    if cfg.sigma == 0.0 {
        return k;
    }
    k + cfg.sigma * normal_at(cfg.seed, realization as u64, direction, step as u64)
}

/// Per-realization curves averaged over initial conditions, reduced in a
/// fixed order so results do not depend on scheduling.
fn reduce_realizations(per_real: &[Vec<f64>], meta: SeriesMeta) -> Result<FidelitySeries> {
    let len = per_real[0].len();
    let mut values = Vec::with_capacity(len);
    let mut stderr = Vec::with_capacity(len);
    for t in 0..len {
        let col: Vec<f64> = per_real.iter().map(|c| c[t]).collect();
        let (m, s) = mean_stderr(&col);
        values.push(m);
        stderr.push(s);
    }
    FidelitySeries::new((0..len).map(|t| t as f64).collect(), values, stderr, meta)
}

fn negative_fraction(params: &QsmParams, cfg: &ParamNoiseConfig, t_max: usize) -> f64 {
    let mut neg = 0usize;
    for r in 0..cfg.realizations {
        for d in [Direction::Forward, Direction::Backward] {
            neg += (0..t_max).filter(|&s| kick_at(params.k, cfg, r, d, s) < 0.0).count();
        }
    }
    neg as f64 / (2 * t_max * cfg.realizations) as f64
}

fn base_meta(engine: &str, params: &QsmParams, cfg: &ParamNoiseConfig, ics: Vec<i64>, t_max: usize) -> SeriesMeta {
    let mut meta = SeriesMeta {
        engine: engine.into(),
        n: params.n,
        seed: Some(cfg.seed),
        initial_conditions: ics,
        ..Default::default()
    };
    meta.params.insert("L".into(), params.l as f64);
    meta.params.insert("k".into(), params.k);
    meta.params.insert("sigma".into(), cfg.sigma);
    meta.params.insert("realizations".into(), cfg.realizations as f64);
    meta.params.insert("negative_kick_fraction".into(), negative_fraction(params, cfg, t_max));
    meta
}

/// Echo under independent per-step kick noise in each direction.
///
/// The overlap `<psi|B^t F^t|psi>` equals `<B^{t dagger} psi|F^t psi>`, and the
/// adjoint of a backward run is a forward run with its own kicks, so both
/// sides are propagated forward once and every `t` is read off in passing.
pub fn echo_param_noise(params: &QsmParams, cfg: &ParamNoiseConfig, t_max: usize) -> Result<FidelitySeries> {
    echo_param_noise_ics(params, cfg, t_max, &cfg.ic_set())
}

pub fn echo_param_noise_ics(params: &QsmParams, cfg: &ParamNoiseConfig, t_max: usize, ic_set: &IcSet) -> Result<FidelitySeries> {
    params.validate()?;
    cfg.validate()?;
    if t_max < 1 {
        return Err(Error::param("t_max", "must be >= 1"));
    }
    let ics = ic_set.momenta(params.n)?;
    let dim = params.dim();
    let plan = DftPlan::new(dim);
    let kin = kinetic_phases(params);
    let idx: Vec<usize> = ics.iter().map(|&p| momentum_to_index(params.n, p)).collect::<Result<_>>()?;
    let step = |psi: &mut [C64], pot: &Array1<C64>| {
        plan.apply(psi, DftKind::Forward);
        for (x, p) in psi.iter_mut().zip(pot) {
            *x *= p;
        }
        plan.apply(psi, DftKind::Inverse);
        for (x, p) in psi.iter_mut().zip(&kin) {
            *x *= p;
        }
    };
    let per_real: Vec<Vec<f64>> = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| {
            let mut psi: Vec<Vec<C64>> = idx.iter().map(|&i| unit(dim, i)).collect();
            let mut phi = psi.clone();
            let mut sums = vec![0.0; t_max + 1];
            sums[0] = 1.0;
            for s in 0..t_max {
                let pf = potential_phases(params, kick_at(params.k, cfg, r, Direction::Forward, s));
                let pb = potential_phases(params, kick_at(params.k, cfg, r, Direction::Backward, s));
                let mut acc = 0.0;
                for (a, b) in psi.iter_mut().zip(phi.iter_mut()) {
                    step(a, &pf);
                    step(b, &pb);
                    let ov: C64 = a.iter().zip(b.iter()).map(|(x, y)| y.conj() * x).sum();
                    acc += ov.norm_sqr();
                }
                sums[s + 1] = acc / idx.len() as f64;
            }
            sums
        })
        .collect();
    let meta = base_meta("param-noise", params, cfg, ics, t_max);
    reduce_realizations(&per_real, meta)
}

fn unit(dim: usize, i: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[i] = C64::new(1.0, 0.0);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedOptions {
    pub mode: DecayMode,
    pub integrator: Integrator,
}

impl Default for CombinedOptions {
    fn default() -> Self {
        Self { mode: DecayMode::ContinuousAllQubits, integrator: Integrator::Exact }
    }
}

/// Density-matrix echo with per-step sampled kicks and Lindblad decay.
pub fn echo_combined(params: &QsmParams, cfg: &ParamNoiseConfig, rates: &NoiseRates, t_max: usize, opts: CombinedOptions) -> Result<FidelitySeries> {
    params.validate()?;
    cfg.validate()?;
    rates.validate()?;
    if t_max < 1 {
        return Err(Error::param("t_max", "must be >= 1"));
    }
    let ics = cfg.ic_set().momenta(params.n)?;
    let dim = params.dim();
    let plan = DftPlan::new(dim);
    let idx: Vec<usize> = ics.iter().map(|&p| momentum_to_index(params.n, p)).collect::<Result<_>>()?;
    let per_real: Vec<Vec<f64>> = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut fwd = Vec::with_capacity(t_max);
            let mut bwd = Vec::with_capacity(t_max);
            for s in 0..t_max {
                let kf = kick_at(params.k, cfg, r, Direction::Forward, s);
                let kb = kick_at(params.k, cfg, r, Direction::Backward, s);
                fwd.push(Channel::new(&DecaySchedule::map_step(params, kf, Direction::Forward, opts.mode)?, plan.clone()));
                bwd.push(Channel::new(&DecaySchedule::map_step(params, kb, Direction::Backward, opts.mode)?, plan.clone()));
            }
            let mut engine = DecayEngine::new(dim, *rates, opts.integrator);
            let mut sums = vec![0.0; t_max + 1];
            sums[0] = 1.0;
            for &i in &idx {
                let mut rho = projector(dim, i);
                let mut y = rho.clone();
                for s in 0..t_max {
                    fwd[s].apply(&mut rho, &mut engine)?;
                    // the backward step nearest the readout is drawn first
                    bwd[s].apply_dual(&mut y, &mut engine)?;
                    sums[s + 1] += hs_inner(&y, &rho) / idx.len() as f64;
                }
            }
            Ok(sums)
        })
        .collect::<Result<_>>()?;
    let mut meta = base_meta("combined", params, cfg, ics, t_max);
    meta.params.insert("nu1".into(), rates.nu1);
    meta.params.insert("nu2".into(), rates.nu2);
    meta.notes.insert("mode".into(), format!("{:?}", opts.mode));
    meta.notes.insert("integrator".into(), format!("{:?}", opts.integrator));
    reduce_realizations(&per_real, meta)
}

/// Decay rate from the least-squares slope of `ln(f - 1/2^n)` over `[lo, hi]`.
pub fn fgr_rate(series: &FidelitySeries, window: (f64, f64)) -> Result<f64> {
    let w = series.window(window.0, window.1);
    if w.len() < 2 {
        return Err(Error::param("window", format!("needs at least two points in [{}, {}]", window.0, window.1)));
    }
    let fl = series.floor();
    let mut ys = Vec::with_capacity(w.len());
    for (&t, &v) in w.times.iter().zip(&w.values) {
        let d = v - fl;
        if !(d > 0.0) {
            return Err(Error::NonPositiveLog { t, value: d });
        }
        ys.push(d.ln());
    }
    Ok(-crate::fitkit::linear_slope(&w.times, &ys))
}
