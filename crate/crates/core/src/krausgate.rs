//! Gate-based noisy circuit simulation with thermal-relaxation Kraus
//! channels on the qubits each gate targets.

use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuitgen::{lower_native, peephole, qsm_circuit, route, Circuit, Gate, GateKind, GateMatrix, Topology};
use crate::error::{Error, Result};
use crate::kernels::{conjugate_1q, conjugate_2q, Mat2};
use crate::lindblad::{projector, reduce_curves};
use crate::qstate::{hs_inner, momentum_to_index, DensityMatrix, FidelitySeries, IcSet, SeriesMeta};
use crate::sawtooth::{Direction, QsmParams};

pub const TWO_QUBIT_DURATION: f64 = 350e-9;
pub const SINGLE_QUBIT_DURATION: f64 = 35e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateNoiseConfig {
    /// Relaxation time in seconds; `f64::INFINITY` disables relaxation.
    pub t1: f64,
    /// Total dephasing time in seconds.
    pub t2: f64,
    /// Physical duration per gate kind, in seconds.
    pub durations: BTreeMap<GateKind, f64>,
}

pub fn default_durations() -> BTreeMap<GateKind, f64> {
    use GateKind::*;
    let mut d = BTreeMap::new();
    for k in [Cnot, CP, Swap] {
        d.insert(k, TWO_QUBIT_DURATION);
    }
    for k in [H, Sx, X] {
        d.insert(k, SINGLE_QUBIT_DURATION);
    }
    // virtual Z rotations
    d.insert(Rz, 0.0);
    d.insert(P, 0.0);
    d
}

impl GateNoiseConfig {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        let c = Self { t1, t2, durations: default_durations() };
        c.validate()?;
        Ok(c)
    }

    pub fn noiseless() -> Self {
        Self { t1: f64::INFINITY, t2: f64::INFINITY, durations: default_durations() }
    }

    pub fn validate(&self) -> Result<()> {
        check_times(self.t1, self.t2)?;
        if let Some((k, d)) = self.durations.iter().find(|(_, d)| !(**d >= 0.0 && d.is_finite())) {
            return Err(Error::param("durations", format!("{} duration must be finite and >= 0, got {d}", k.name())));
        }
        Ok(())
    }

    pub fn duration(&self, kind: GateKind) -> f64 {
        self.durations.get(&kind).copied().unwrap_or(0.0)
    }
}

fn check_times(t1: f64, t2: f64) -> Result<()> {
    if !(t1 > 0.0) {
        return Err(Error::param("T1", format!("must be positive, got {t1}")));
    }
    if !(t2 > 0.0) {
        return Err(Error::param("T2", format!("must be positive, got {t2}")));
    }
    if t2 > 2.0 * t1 {
        return Err(Error::Physicality { t2, two_t1: 2.0 * t1 });
    }
    Ok(())
}

/// Kraus set for relaxation over duration `d`: excited population scales
/// by `e^{-d/T1}` and coherences by `e^{-d/T2}`.
pub fn thermal_kraus(t1: f64, t2: f64, d: f64) -> Result<Vec<Mat2>> {
    check_times(t1, t2)?;
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::param("duration", format!("must be finite and >= 0, got {d}")));
    }
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let gamma = -(-d / t1).exp_m1();
    let c = (-d / t2).exp();
    let rest = (1.0 - gamma - c * c).max(0.0);
    let mut ops = vec![[[one, z], [z, C64::new(c, 0.0)]]];
    if gamma > 0.0 {
        ops.push([[z, C64::new(gamma.sqrt(), 0.0)], [z, z]]);
    }
    if rest > 0.0 {
        ops.push([[z, z], [z, C64::new(rest.sqrt(), 0.0)]]);
    }
    Ok(ops)
}

fn dagger(k: &Mat2) -> Mat2 {
    [[k[0][0].conj(), k[1][0].conj()], [k[0][1].conj(), k[1][1].conj()]]
}

/// `sum_i K_i rho K_i^dagger`, or the dual `sum_i K_i^dagger X K_i`.
fn apply_channel(rho: &mut Array2<C64>, q: usize, kraus: &[Mat2], dual: bool) {
    if kraus.len() == 1 && kraus[0][1][1] == C64::new(1.0, 0.0) {
        return;
    }
    let mut acc = Array2::<C64>::zeros(rho.raw_dim());
    for k in kraus {
        let mut term = rho.clone();
        let m = if dual { dagger(k) } else { *k };
        conjugate_1q(&mut term, q, &m);
        acc += &term;
    }
    rho.assign(&acc);
}

/// A circuit with per-gate matrices and noise channels resolved.
#[derive(Debug, Clone)]
struct NoisyCircuit {
    ops: Vec<(Gate, GateMatrix, Vec<Mat2>)>,
}

impl NoisyCircuit {
    fn new(circuit: &Circuit, cfg: &GateNoiseConfig) -> Result<Self> {
        let mut cache: BTreeMap<GateKind, Vec<Mat2>> = BTreeMap::new();
        let mut ops = Vec::with_capacity(circuit.len());
        for g in &circuit.gates {
            let kraus = match cache.get(&g.kind) {
                Some(k) => k.clone(),
                None => {
                    let k = thermal_kraus(cfg.t1, cfg.t2, cfg.duration(g.kind))?;
                    cache.insert(g.kind, k.clone());
                    k
                }
            };
            ops.push((*g, g.matrix(), kraus));
        }
        Ok(Self { ops })
    }

    fn apply(&self, rho: &mut Array2<C64>) {
        for (g, m, kraus) in &self.ops {
            match m {
                GateMatrix::One(u) => conjugate_1q(rho, g.qubits[0], u),
                GateMatrix::Two(u) => conjugate_2q(rho, g.qubits[0], g.qubits[1], u),
            }
            for &q in g.support() {
                apply_channel(rho, q, kraus, false);
            }
        }
    }

    fn apply_dual(&self, x: &mut Array2<C64>) {
        for (g, m, kraus) in self.ops.iter().rev() {
            for &q in g.support().iter().rev() {
                apply_channel(x, q, kraus, true);
            }
            match m {
                GateMatrix::One(u) => conjugate_1q(x, g.qubits[0], &dagger(u)),
                GateMatrix::Two(u) => {
                    let mut d = *u;
                    for (i, row) in d.iter_mut().enumerate() {
                        for (j, z) in row.iter_mut().enumerate() {
                            *z = u[j][i].conj();
                        }
                    }
                    conjugate_2q(x, g.qubits[0], g.qubits[1], &d)
                }
            }
        }
    }
}

/// Each gate, then a relaxation channel on every qubit it targets.
pub fn run_noisy_circuit(circuit: &Circuit, cfg: &GateNoiseConfig, dm0: &DensityMatrix) -> Result<DensityMatrix> {
    cfg.validate()?;
    if dm0.n() != circuit.n {
        return Err(Error::Dimension { expected: 1 << circuit.n, found: dm0.dim() });
    }
    circuit.validate()?;
    let noisy = NoisyCircuit::new(circuit, cfg)?;
    let mut rho = dm0.elements().clone();
    noisy.apply(&mut rho);
    Ok(DensityMatrix::from_raw(dm0.n(), rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KrausEchoOptions {
    pub topology: Topology,
    pub optimize: bool,
}

impl Default for KrausEchoOptions {
    fn default() -> Self {
        Self { topology: Topology::Linear, optimize: false }
    }
}

/// Routed and lowered (optionally optimized) circuit for one map step.
pub fn compiled_step(params: &QsmParams, direction: Direction, opts: KrausEchoOptions) -> Result<Circuit> {
    let c = lower_native(&route(&qsm_circuit(params, direction)?, opts.topology));
    Ok(if opts.optimize { peephole(&c) } else { c })
}

/// Echo of compiled forward and backward steps under gate-based relaxation.
pub fn echo_kraus(params: &QsmParams, cfg: &GateNoiseConfig, t_max: usize, ic_set: &IcSet, opts: KrausEchoOptions) -> Result<FidelitySeries> {
    if t_max < 1 {
        return Err(Error::param("t_max", "must be >= 1"));
    }
    cfg.validate()?;
    let ics = ic_set.momenta(params.n)?;
    let fwd_c = compiled_step(params, Direction::Forward, opts)?;
    let bwd_c = compiled_step(params, Direction::Backward, opts)?;
    let fwd = NoisyCircuit::new(&fwd_c, cfg)?;
    let bwd = NoisyCircuit::new(&bwd_c, cfg)?;
    let dim = params.dim();
    let curves: Vec<Vec<f64>> = ics
        .par_iter()
        .map(|&p| {
            let idx = momentum_to_index(params.n, p)?;
            let mut rho = projector(dim, idx);
            let mut y = rho.clone();
            let mut out = vec![1.0];
            for _ in 0..t_max {
                fwd.apply(&mut rho);
                bwd.apply_dual(&mut y);
                out.push(hs_inner(&y, &rho));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut meta = SeriesMeta {
        engine: "kraus".into(),
        n: params.n,
        initial_conditions: ics,
        ..Default::default()
    };
    meta.params.insert("L".into(), params.l as f64);
    meta.params.insert("k".into(), params.k);
    meta.params.insert("T1_s".into(), cfg.t1);
    meta.params.insert("T2_s".into(), cfg.t2);
    meta.params.insert("cnots_per_step".into(), crate::circuitgen::gate_counts(&fwd_c).cnot as f64);
    meta.notes.insert("topology".into(), opts.topology.to_string());
    meta.notes.insert("optimized".into(), opts.optimize.to_string());
    reduce_curves(&curves, meta)
}
