//! Master-equation engine: instantaneous unitaries interleaved with
//! single-qubit relaxation and pure-dephasing intervals.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{adjoint, conjugate_dense, decay_exact, decay_exact_dual, dissipator, dissipator_bound, DecayFactors, DftPlan};
use crate::qstate::{check_qubits, hs_inner, mean_stderr, momentum_to_index, DensityMatrix, FidelitySeries, IcSet, SeriesMeta};
use crate::sawtooth::{substeps_with_k, Direction, QsmParams, Substep};

/// Dimensionless decay rates per map step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRates {
    pub nu1: f64,
    pub nu2: f64,
}

impl NoiseRates {
    pub fn new(nu1: f64, nu2: f64) -> Result<Self> {
        let r = Self { nu1, nu2 };
        r.validate()?;
        Ok(r)
    }

    pub fn zero() -> Self {
        Self { nu1: 0.0, nu2: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu1 >= 0.0 && self.nu1.is_finite()) {
            return Err(Error::param("nu1", format!("must be finite and >= 0, got {}", self.nu1)));
        }
        if !(self.nu2 >= 0.0 && self.nu2.is_finite()) {
            return Err(Error::param("nu2", format!("must be finite and >= 0, got {}", self.nu2)));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.nu1 == 0.0 && self.nu2 == 0.0
    }

    /// `(T1, T2)` in map steps: `1/T1 = nu1`, `1/T2 = nu1/2 + nu2/2`.
    pub fn relaxation_times(&self) -> (f64, f64) {
        (1.0 / self.nu1, 2.0 / (self.nu1 + self.nu2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollapseKind {
    Relaxation,
    Dephasing,
}

/// Weighted collapse operator `sqrt(nu) L` acting on one qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseOp {
    pub qubit: usize,
    pub kind: CollapseKind,
    pub weight: f64,
    n: usize,
}

impl CollapseOp {
    /// Embedded `N x N` matrix including the weight.
    pub fn dense(&self) -> Array2<C64> {
        let dim = 1usize << self.n;
        let e = 1usize << self.qubit;
        let mut m = Array2::zeros((dim, dim));
        for x in (0..dim).filter(|x| x & e != 0) {
            match self.kind {
                CollapseKind::Relaxation => m[[x ^ e, x]] = C64::new(self.weight, 0.0),
                CollapseKind::Dephasing => m[[x, x]] = C64::new(self.weight, 0.0),
            }
        }
        m
    }
}

/// Relaxation `|0><1|` and excited-projector dephasing on each active qubit;
/// zero-weight operators are omitted.
pub fn collapse_ops(n: usize, rates: &NoiseRates, active: &[usize]) -> Result<Vec<CollapseOp>> {
    check_qubits(n)?;
    rates.validate()?;
    let mut out = Vec::new();
    for &q in active {
        if q >= n {
            return Err(Error::param("active_qubits", format!("qubit {q} out of range for n={n}")));
        }
        for (kind, nu) in [(CollapseKind::Relaxation, rates.nu1), (CollapseKind::Dephasing, rates.nu2)] {
            if nu > 0.0 {
                out.push(CollapseOp { qubit: q, kind, weight: nu.sqrt(), n });
            }
        }
    }
    Ok(out)
}

/// Unitary applied instantaneously at the start of a segment.
#[derive(Debug, Clone, PartialEq)]
pub enum Propagator {
    Dense(Array2<C64>),
    Factor(Substep),
}

impl Propagator {
    fn conjugate(&self, plan: &DftPlan, rho: &mut Array2<C64>) {
        match self {
            Propagator::Dense(u) => conjugate_dense(rho, u),
            Propagator::Factor(s) => s.conjugate(plan, rho),
        }
    }

    fn adjoint(&self) -> Propagator {
        match self {
            Propagator::Dense(u) => Propagator::Dense(adjoint(u)),
            Propagator::Factor(s) => Propagator::Factor(s.adjoint()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub unitary: Option<Propagator>,
    pub duration: f64,
    pub active: Vec<usize>,
}

impl Segment {
    fn mask(&self) -> usize {
        self.active.iter().fold(0, |m, &q| m | (1 << q))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecaySchedule {
    pub n: usize,
    pub segments: Vec<Segment>,
}

/// Which qubits decay during the substeps of a map step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMode {
    ContinuousAllQubits,
    /// Substep `i` decays only the adjacent pair `(i mod (n-1), i mod (n-1) + 1)`.
    AlternatingPairs,
}

impl DecayMode {
    pub fn active(self, n: usize, substep: usize) -> Vec<usize> {
        match self {
            DecayMode::ContinuousAllQubits => (0..n).collect(),
            DecayMode::AlternatingPairs if n < 2 => vec![0],
            DecayMode::AlternatingPairs => {
                let a = substep % (n - 1);
                vec![a, a + 1]
            }
        }
    }

    /// Average number of simultaneously decaying qubits.
    pub fn n_eff(self, n: usize) -> usize {
        match self {
            DecayMode::ContinuousAllQubits => n,
            DecayMode::AlternatingPairs => n.min(2),
        }
    }
}

impl DecaySchedule {
    pub fn new(n: usize, segments: Vec<Segment>) -> Result<Self> {
        check_qubits(n)?;
        let dim = 1usize << n;
        for s in &segments {
            if !(s.duration >= 0.0 && s.duration.is_finite()) {
                return Err(Error::param("duration", format!("must be finite and >= 0, got {}", s.duration)));
            }
            if let Some(q) = s.active.iter().find(|&&q| q >= n) {
                return Err(Error::param("active_qubits", format!("qubit {q} out of range for n={n}")));
            }
            if let Some(Propagator::Dense(u)) = &s.unitary {
                if u.dim() != (dim, dim) {
                    return Err(Error::Dimension { expected: dim, found: u.nrows() });
                }
            }
        }
        Ok(Self { n, segments })
    }

    /// Decay only, on the given qubits.
    pub fn decay_only(n: usize, duration: f64, active: Vec<usize>) -> Result<Self> {
        Self::new(n, vec![Segment { unitary: None, duration, active }])
    }

    /// One map step: each of the four factors followed by a quarter step of decay.
    /// At `k = 0` the potential is the identity and the `F`, `F^{-1}` pair
    /// around it cancels, so only the kinetic factor is applied.
    pub fn map_step(params: &QsmParams, k: f64, direction: Direction, mode: DecayMode) -> Result<Self> {
        params.validate()?;
        let kinetic = match direction {
            Direction::Forward => 3,
            Direction::Backward => 0,
        };
        let segments = substeps_with_k(params, k, direction)
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let skip = k == 0.0 && i != kinetic;
                Segment {
                    unitary: (!skip).then_some(Propagator::Factor(s)),
                    duration: 0.25,
                    active: mode.active(params.n, i),
                }
            })
            .collect();
        Self::new(params.n, segments)
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Fixed-step fourth-order Taylor/Runge-Kutta with a Richardson check.
    #[default]
    Rk4,
    /// Closed-form composition of the per-qubit channels.
    Exact,
}

/// Largest RK4 step, in map steps.
pub const MAX_STEP: f64 = 1.0 / 64.0;
/// Richardson error bound on the first step of every segment.
pub const RICHARDSON_TOL: f64 = 1e-9;

/// Applies decay intervals to a density matrix (or its dual).
#[derive(Debug, Clone)]
pub(crate) struct DecayEngine {
    rates: NoiseRates,
    integrator: Integrator,
    scratch: Array2<C64>,
    acc: Array2<C64>,
}

impl DecayEngine {
    pub(crate) fn new(dim: usize, rates: NoiseRates, integrator: Integrator) -> Self {
        Self {
            rates,
            integrator,
            scratch: Array2::zeros((dim, dim)),
            acc: Array2::zeros((dim, dim)),
        }
    }

    /// `y <- sum_{j<=4} (hL)^j / j! y` evaluated by Horner's rule, which is
    /// exactly classical RK4 for a linear autonomous system.
    fn taylor4(&mut self, y: &mut Array2<C64>, mask: usize, h: f64, dual: bool) {
        let NoiseRates { nu1, nu2 } = self.rates;
        self.acc.assign(y);
        for j in (1..=4).rev() {
            dissipator(&self.acc, &mut self.scratch, mask, nu1, nu2, dual);
            let c = h / j as f64;
            ndarray::Zip::from(&mut self.acc).and(&*y).and(&self.scratch).for_each(|a, &y0, &l| *a = y0 + l * c);
        }
        y.assign(&self.acc);
    }

    pub(crate) fn run(&mut self, y: &mut Array2<C64>, mask: usize, duration: f64, dual: bool) -> Result<()> {
        if duration == 0.0 || mask == 0 || self.rates.is_zero() {
            return Ok(());
        }
        match self.integrator {
            Integrator::Exact => {
                let f = DecayFactors::lindblad(self.rates.nu1, self.rates.nu2, duration);
                if dual {
                    decay_exact_dual(y, mask, f);
                } else {
                    decay_exact(y, mask, f);
                }
            }
            Integrator::Rk4 => {
                let bound = dissipator_bound(mask, self.rates.nu1, self.rates.nu2);
                let hmax = MAX_STEP.min(0.25 / bound);
                let steps = (duration / hmax).ceil().max(1.0) as usize;
                let h = duration / steps as f64;
                // Richardson: one step of h against two of h/2
                let mut coarse = y.clone();
                self.taylor4(&mut coarse, mask, h, dual);
                self.taylor4(y, mask, h / 2.0, dual);
                self.taylor4(y, mask, h / 2.0, dual);
                let scale = y.iter().map(|z| z.norm()).fold(1e-300, f64::max);
                let err = coarse.iter().zip(y.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / 15.0 / scale;
                if err > RICHARDSON_TOL {
                    return Err(Error::Integrator { achieved: err, tolerance: RICHARDSON_TOL });
                }
                for _ in 1..steps {
                    self.taylor4(y, mask, h, dual);
                }
            }
        }
        Ok(())
    }
}

/// A fixed schedule bound to its FFT plan and integrator.
#[derive(Debug, Clone)]
pub(crate) struct Channel {
    plan: DftPlan,
    segments: Vec<(Option<Propagator>, usize, f64)>,
    adjoints: Vec<Option<Propagator>>,
}

impl Channel {
    pub(crate) fn new(schedule: &DecaySchedule, plan: DftPlan) -> Self {
        let segments: Vec<_> = schedule.segments.iter().map(|s| (s.unitary.clone(), s.mask(), s.duration)).collect();
        let adjoints = segments.iter().map(|s| s.0.as_ref().map(Propagator::adjoint)).collect();
        Self { plan, segments, adjoints }
    }

    pub(crate) fn apply(&self, rho: &mut Array2<C64>, engine: &mut DecayEngine) -> Result<()> {
        for (u, mask, d) in &self.segments {
            if let Some(u) = u {
                u.conjugate(&self.plan, rho);
            }
            engine.run(rho, *mask, *d, false)?;
        }
        Ok(())
    }

    /// Heisenberg-picture adjoint of [`Channel::apply`].
    pub(crate) fn apply_dual(&self, x: &mut Array2<C64>, engine: &mut DecayEngine) -> Result<()> {
        for ((_, mask, d), adj) in self.segments.iter().zip(&self.adjoints).rev() {
            engine.run(x, *mask, *d, true)?;
            if let Some(a) = adj {
                a.conjugate(&self.plan, x);
            }
        }
        Ok(())
    }
}

/// Evolve a density matrix through the schedule.
pub fn evolve_master(dm: &DensityMatrix, schedule: &DecaySchedule, rates: &NoiseRates, integrator: Integrator) -> Result<DensityMatrix> {
    if dm.n() != schedule.n {
        return Err(Error::Dimension { expected: 1 << schedule.n, found: dm.dim() });
    }
    rates.validate()?;
    let channel = Channel::new(schedule, DftPlan::new(dm.dim()));
    let mut engine = DecayEngine::new(dm.dim(), *rates, integrator);
    let mut rho = dm.elements().clone();
    channel.apply(&mut rho, &mut engine)?;
    Ok(DensityMatrix::from_raw(dm.n(), rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoOptions {
    pub mode: DecayMode,
    pub integrator: Integrator,
}

impl Default for EchoOptions {
    fn default() -> Self {
        Self { mode: DecayMode::ContinuousAllQubits, integrator: Integrator::Rk4 }
    }
}

pub(crate) fn projector(dim: usize, idx: usize) -> Array2<C64> {
    let mut p = Array2::zeros((dim, dim));
    p[[idx, idx]] = C64::new(1.0, 0.0);
    p
}

/// Echo fidelity `f(t) = Tr[P B^t(F^t(P))]` for `t = 0..=t_max`, computed as
/// `<(B*)^t(P), F^t(P)>` so each time costs one forward and one dual step.
pub(crate) fn echo_one(fwd: &Channel, bwd: &Channel, dim: usize, idx: usize, t_max: usize, engine: &mut DecayEngine) -> Result<Vec<f64>> {
    let mut rho = projector(dim, idx);
    let mut y = rho.clone();
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(1.0);
    for _ in 0..t_max {
        fwd.apply(&mut rho, engine)?;
        bwd.apply_dual(&mut y, engine)?;
        out.push(hs_inner(&y, &rho));
    }
    Ok(out)
}

/// Average rows of per-initial-condition curves into a series.
pub(crate) fn reduce_curves(curves: &[Vec<f64>], meta: SeriesMeta) -> Result<FidelitySeries> {
    let len = curves[0].len();
    let mut values = Vec::with_capacity(len);
    let mut stderr = Vec::with_capacity(len);
    for t in 0..len {
        let col: Vec<f64> = curves.iter().map(|c| c[t]).collect();
        let (m, s) = mean_stderr(&col);
        values.push(m);
        stderr.push(s);
    }
    FidelitySeries::new((0..len).map(|t| t as f64).collect(), values, stderr, meta)
}

/// Loschmidt echo under continuous decay, averaged over `ic_set`.
pub fn echo_lindblad(params: &QsmParams, rates: &NoiseRates, t_max: usize, ic_set: &IcSet, opts: EchoOptions) -> Result<FidelitySeries> {
    if t_max < 1 {
        return Err(Error::param("t_max", "must be >= 1"));
    }
    rates.validate()?;
    let ics = ic_set.momenta(params.n)?;
    let plan = DftPlan::new(params.dim());
    let fwd = Channel::new(&DecaySchedule::map_step(params, params.k, Direction::Forward, opts.mode)?, plan.clone());
    let bwd = Channel::new(&DecaySchedule::map_step(params, params.k, Direction::Backward, opts.mode)?, plan);
    let dim = params.dim();
    let curves = ics
        .par_iter()
        .map(|&p| {
            let mut engine = DecayEngine::new(dim, *rates, opts.integrator);
            echo_one(&fwd, &bwd, dim, momentum_to_index(params.n, p)?, t_max, &mut engine)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = SeriesMeta {
        engine: "lindblad".into(),
        n: params.n,
        seed: None,
        initial_conditions: ics,
        ..Default::default()
    };
    meta.params.insert("L".into(), params.l as f64);
    meta.params.insert("k".into(), params.k);
    meta.params.insert("nu1".into(), rates.nu1);
    meta.params.insert("nu2".into(), rates.nu2);
    meta.params.insert("n_eff".into(), opts.mode.n_eff(params.n) as f64);
    meta.notes.insert("mode".into(), format!("{:?}", opts.mode));
    meta.notes.insert("integrator".into(), format!("{:?}", opts.integrator));
    meta.notes.insert("time_axis".into(), "forward-and-back map steps".into());
    reduce_curves(&curves, meta)
}
