//! Gate-level representation of the map: builder, lowering, routing,
//! peephole optimization and dense reconstruction.

mod build;
mod passes;

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{apply_1q_vec, apply_2q_vec, Mat2, Mat4};

pub use build::{echo_circuit, qsm_circuit, repeat_steps};
pub use passes::{lower_native, peephole, route};

/// Largest register for which [`to_unitary`] builds a dense matrix.
pub const UNITARY_QUBIT_LIMIT: usize = 10;

/// Reduce a phase to `(-pi, pi]`.
pub fn canonical_phase(phi: f64) -> f64 {
    if phi > -PI && phi <= PI {
        return phi;
    }
    let r = phi.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    H,
    P,
    CP,
    Swap,
    Cnot,
    Rz,
    Sx,
    X,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::P => "P",
            GateKind::CP => "CP",
            GateKind::Swap => "SWAP",
            GateKind::Cnot => "CNOT",
            GateKind::Rz => "RZ",
            GateKind::Sx => "SX",
            GateKind::X => "X",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::CP | GateKind::Swap | GateKind::Cnot => 2,
            _ => 1,
        }
    }

    pub fn has_phase(self) -> bool {
        matches!(self, GateKind::P | GateKind::CP | GateKind::Rz)
    }

    pub fn is_native(self) -> bool {
        matches!(self, GateKind::Cnot | GateKind::Rz | GateKind::Sx | GateKind::X)
    }
}

impl FromStr for GateKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "H" => GateKind::H,
            "P" => GateKind::P,
            "CP" => GateKind::CP,
            "SWAP" => GateKind::Swap,
            "CNOT" | "CX" => GateKind::Cnot,
            "RZ" => GateKind::Rz,
            "SX" => GateKind::Sx,
            "X" => GateKind::X,
            other => return Err(format!("unknown gate kind `{other}`")),
        })
    }
}

/// A gate on one or two qubits. For `CNOT` the first qubit is the control.
/// `P`, `CP` and `RZ` carry a phase in `(-pi, pi]`; other kinds carry 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: [usize; 2],
    pub phase: f64,
}

impl Gate {
    fn one(kind: GateKind, q: usize) -> Self {
        Self { kind, qubits: [q, q], phase: 0.0 }
    }

    fn two(kind: GateKind, a: usize, b: usize) -> Self {
        assert_ne!(a, b, "two-qubit gate needs distinct qubits");
        Self { kind, qubits: [a, b], phase: 0.0 }
    }

    pub fn h(q: usize) -> Self {
        Self::one(GateKind::H, q)
    }

    pub fn sx(q: usize) -> Self {
        Self::one(GateKind::Sx, q)
    }

    pub fn x(q: usize) -> Self {
        Self::one(GateKind::X, q)
    }

    pub fn p(q: usize, phi: f64) -> Self {
        Self { phase: canonical_phase(phi), ..Self::one(GateKind::P, q) }
    }

    pub fn rz(q: usize, phi: f64) -> Self {
        Self { phase: canonical_phase(phi), ..Self::one(GateKind::Rz, q) }
    }

    pub fn cp(a: usize, b: usize, phi: f64) -> Self {
        Self { phase: canonical_phase(phi), ..Self::two(GateKind::CP, a, b) }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self::two(GateKind::Cnot, control, target)
    }

    pub fn swap(a: usize, b: usize) -> Self {
        Self::two(GateKind::Swap, a, b)
    }

    pub fn arity(&self) -> usize {
        self.kind.arity()
    }

    /// Qubits acted on, without duplicates.
    pub fn support(&self) -> &[usize] {
        &self.qubits[..self.arity()]
    }

    pub fn touches(&self, q: usize) -> bool {
        self.support().contains(&q)
    }

    pub fn overlaps(&self, other: &Gate) -> bool {
        self.support().iter().any(|&q| other.touches(q))
    }

    /// Same gate with its qubits renamed through `map`.
    pub fn relabel(&self, map: impl Fn(usize) -> usize) -> Self {
        let mut g = *self;
        g.qubits = [map(self.qubits[0]), map(self.qubits[1])];
        g
    }

    /// Adjoint gate, up to global phase. `SX^dagger` has no native form and
    /// is returned as the pair `X, SX`.
    pub fn adjoint(&self) -> Vec<Gate> {
        match self.kind {
            GateKind::P | GateKind::CP | GateKind::Rz => vec![Gate {
                phase: canonical_phase(-self.phase),
                ..*self
            }],
            GateKind::Sx => vec![Gate::x(self.qubits[0]), Gate::sx(self.qubits[0])],
            _ => vec![*self],
        }
    }

    /// Local matrix; for two-qubit gates `qubits[0]` is the low bit.
    pub fn matrix(&self) -> GateMatrix {
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        let e = |phi: f64| C64::from_polar(1.0, phi);
        match self.kind {
            GateKind::H => {
                let h = C64::new(FRAC_1_SQRT_2, 0.0);
                GateMatrix::One([[h, h], [h, -h]])
            }
            GateKind::P => GateMatrix::One([[o, z], [z, e(self.phase)]]),
            GateKind::Rz => GateMatrix::One([[e(-self.phase / 2.0), z], [z, e(self.phase / 2.0)]]),
            GateKind::Sx => {
                let a = C64::new(0.5, 0.5);
                let b = C64::new(0.5, -0.5);
                GateMatrix::One([[a, b], [b, a]])
            }
            GateKind::X => GateMatrix::One([[z, o], [o, z]]),
            GateKind::CP => {
                let mut m = [[z; 4]; 4];
                m[0][0] = o;
                m[1][1] = o;
                m[2][2] = o;
                m[3][3] = e(self.phase);
                GateMatrix::Two(m)
            }
            GateKind::Cnot => {
                let mut m = [[z; 4]; 4];
                m[0][0] = o;
                m[2][2] = o;
                m[1][3] = o;
                m[3][1] = o;
                GateMatrix::Two(m)
            }
            GateKind::Swap => {
                let mut m = [[z; 4]; 4];
                m[0][0] = o;
                m[3][3] = o;
                m[1][2] = o;
                m[2][1] = o;
                GateMatrix::Two(m)
            }
        }
    }

    /// Apply to a state vector in place.
    pub fn apply(&self, psi: &mut [C64]) {
        match self.matrix() {
            GateMatrix::One(m) => apply_1q_vec(psi, self.qubits[0], &m),
            GateMatrix::Two(m) => apply_2q_vec(psi, self.qubits[0], self.qubits[1], &m),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind.name(), self.qubits[0])?;
        if self.arity() == 2 {
            write!(f, ",{}", self.qubits[1])?;
        }
        if self.kind.has_phase() {
            write!(f, ",{:?}", self.phase)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMatrix {
    One(Mat2),
    Two(Mat4),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    AllToAll,
    Linear,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::AllToAll => "all-to-all",
            Topology::Linear => "linear",
        })
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-to-all" => Ok(Topology::AllToAll),
            "linear" => Ok(Topology::Linear),
            other => Err(Error::param("topology", format!("expected `all-to-all` or `linear`, got `{other}`"))),
        }
    }
}

/// Ordered gate list with barrier positions. A barrier at `i` sits
/// between gates `i - 1` and `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n: usize,
    pub gates: Vec<Gate>,
    pub topology: Topology,
    pub barriers: Vec<usize>,
}

impl Circuit {
    pub fn new(n: usize, topology: Topology) -> Self {
        Self { n, gates: Vec::new(), topology, barriers: Vec::new() }
    }

    pub fn push(&mut self, g: Gate) {
        debug_assert!(g.support().iter().all(|&q| q < self.n));
        self.gates.push(g);
    }

    pub fn barrier(&mut self) {
        let at = self.gates.len();
        if self.barriers.last() != Some(&at) {
            self.barriers.push(at);
        }
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Gate lists between consecutive barriers.
    pub fn segments(&self) -> Vec<&[Gate]> {
        let mut out = Vec::with_capacity(self.barriers.len() + 1);
        let mut start = 0;
        for &b in &self.barriers {
            out.push(&self.gates[start..b]);
            start = b;
        }
        out.push(&self.gates[start..]);
        out
    }

    /// Rebuild from segments, placing a barrier between each pair.
    pub fn from_segments(n: usize, topology: Topology, segments: Vec<Vec<Gate>>) -> Self {
        let mut c = Circuit::new(n, topology);
        let count = segments.len();
        for (i, seg) in segments.into_iter().enumerate() {
            c.gates.extend(seg);
            if i + 1 < count {
                c.barriers.push(c.gates.len());
            }
        }
        c
    }

    /// Apply a segment-wise gate rewrite, keeping barriers.
    pub(crate) fn map_segments(&self, topology: Topology, f: impl Fn(&[Gate]) -> Vec<Gate>) -> Circuit {
        let segs = self.segments().into_iter().map(f).collect();
        Circuit::from_segments(self.n, topology, segs)
    }

    /// Adjoint circuit (reversed list of adjoint gates).
    pub fn adjoint(&self) -> Circuit {
        let segs: Vec<Vec<Gate>> = self
            .segments()
            .into_iter()
            .rev()
            .map(|s| s.iter().rev().flat_map(|g| g.adjoint()).collect())
            .collect();
        Circuit::from_segments(self.n, self.topology, segs)
    }

    /// `self` followed by a barrier and `other`.
    pub fn then(&self, other: &Circuit) -> Circuit {
        let mut segs: Vec<Vec<Gate>> = self.segments().into_iter().map(|s| s.to_vec()).collect();
        segs.extend(other.segments().into_iter().map(|s| s.to_vec()));
        Circuit::from_segments(self.n, self.topology, segs)
    }

    /// Structural check: indices in range and adjacency for linear topology.
    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.gates.iter().enumerate() {
            if g.support().iter().any(|&q| q >= self.n) {
                return Err(Error::Precondition(format!("gate {i} ({g}) addresses a qubit >= {}", self.n)));
            }
            if !g.phase.is_finite() {
                return Err(Error::Precondition(format!("gate {i} has a non-finite phase")));
            }
            if self.topology == Topology::Linear && g.arity() == 2 && g.qubits[0].abs_diff(g.qubits[1]) != 1 {
                return Err(Error::Precondition(format!("gate {i} ({g}) is not nearest-neighbour")));
            }
        }
        Ok(())
    }

    /// Line-oriented text form.
    pub fn to_text(&self) -> String {
        let mut s = format!("n={} topology={}\n", self.n, self.topology);
        let mut b = self.barriers.iter().peekable();
        for (i, g) in self.gates.iter().enumerate() {
            while b.next_if(|&&x| x == i).is_some() {
                s.push_str("BARRIER\n");
            }
            s.push_str(&g.to_string());
            s.push('\n');
        }
        for _ in b {
            s.push_str("BARRIER\n");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Circuit> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
        let perr = |line: usize, message: String| Error::Parse { line: line + 1, message };
        let mut n = None;
        let mut topology = None;
        for tok in header.split_whitespace() {
            match tok.split_once('=') {
                Some(("n", v)) => n = Some(v.parse::<usize>().map_err(|e| perr(hl, format!("bad qubit count: {e}")))?),
                Some(("topology", v)) => topology = Some(v.parse::<Topology>().map_err(|e| perr(hl, e.to_string()))?),
                _ => return Err(perr(hl, format!("unexpected header token `{tok}`"))),
            }
        }
        let n = n.ok_or_else(|| perr(hl, "header lacks n=".into()))?;
        let mut c = Circuit::new(n, topology.ok_or_else(|| perr(hl, "header lacks topology=".into()))?);
        for (ln, line) in lines {
            let line = line.trim();
            if line == "BARRIER" {
                c.barriers.push(c.gates.len());
                continue;
            }
            let (kind, args) = line.split_once(' ').ok_or_else(|| perr(ln, format!("expected `KIND args`, got `{line}`")))?;
            let kind: GateKind = kind.parse().map_err(|e| perr(ln, e))?;
            let args: Vec<&str> = args.split(',').map(str::trim).collect();
            let want = kind.arity() + usize::from(kind.has_phase());
            if args.len() != want {
                return Err(perr(ln, format!("{} takes {want} arguments, got {}", kind.name(), args.len())));
            }
            let mut qs = [0usize; 2];
            for (i, a) in args[..kind.arity()].iter().enumerate() {
                qs[i] = a.parse().map_err(|e| perr(ln, format!("bad qubit `{a}`: {e}")))?;
                if qs[i] >= n {
                    return Err(perr(ln, format!("qubit {} out of range for n={n}", qs[i])));
                }
            }
            if kind.arity() == 1 {
                qs[1] = qs[0];
            } else if qs[0] == qs[1] {
                return Err(perr(ln, "two-qubit gate on a single qubit".into()));
            }
            let phase = if kind.has_phase() {
                let v: f64 = args[kind.arity()].parse().map_err(|e| perr(ln, format!("bad phase: {e}")))?;
                if !v.is_finite() {
                    return Err(perr(ln, "phase must be finite".into()));
                }
                v
            } else {
                0.0
            };
            c.gates.push(Gate { kind, qubits: qs, phase });
        }
        Ok(c)
    }
}

/// Gate census of a circuit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCensus {
    pub h: usize,
    pub p: usize,
    pub cp: usize,
    pub swap: usize,
    pub cnot: usize,
    pub rz: usize,
    pub sx: usize,
    pub x: usize,
    pub total: usize,
    pub two_qubit_depth: usize,
}

impl GateCensus {
    /// CNOTs needed once every `CP` and `SWAP` is lowered.
    pub fn cnot_cost(&self) -> usize {
        self.cnot + 2 * self.cp + 3 * self.swap
    }

    pub fn two_qubit(&self) -> usize {
        self.cp + self.swap + self.cnot
    }
}

pub fn gate_counts(circuit: &Circuit) -> GateCensus {
    let mut c = GateCensus::default();
    let mut level = vec![0usize; circuit.n];
    for g in &circuit.gates {
        match g.kind {
            GateKind::H => c.h += 1,
            GateKind::P => c.p += 1,
            GateKind::CP => c.cp += 1,
            GateKind::Swap => c.swap += 1,
            GateKind::Cnot => c.cnot += 1,
            GateKind::Rz => c.rz += 1,
            GateKind::Sx => c.sx += 1,
            GateKind::X => c.x += 1,
        }
        if g.arity() == 2 {
            let [a, b] = g.qubits;
            let l = level[a].max(level[b]) + 1;
            level[a] = l;
            level[b] = l;
        }
    }
    c.total = circuit.gates.len();
    c.two_qubit_depth = level.into_iter().max().unwrap_or(0);
    c
}

/// Dense unitary: product of gate matrices in list order.
pub fn to_unitary(circuit: &Circuit) -> Result<Array2<C64>> {
    if circuit.n > UNITARY_QUBIT_LIMIT {
        return Err(Error::TooManyQubits { n: circuit.n, limit: UNITARY_QUBIT_LIMIT });
    }
    let dim = 1usize << circuit.n;
    // row r of `cols` holds column r of the unitary
    let mut cols = Array2::<C64>::eye(dim);
    for mut col in cols.rows_mut() {
        let psi = col.as_slice_mut().unwrap();
        for g in &circuit.gates {
            g.apply(psi);
        }
    }
    Ok(cols.reversed_axes().as_standard_layout().into_owned())
}

/// Whether `U = alpha V` for some unit `alpha`, within `tol` elementwise.
pub fn equiv_global_phase(u: &Array2<C64>, v: &Array2<C64>, tol: f64) -> bool {
    if u.dim() != v.dim() {
        return false;
    }
    let Some((idx, _)) = v.indexed_iter().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())) else {
        return true;
    };
    if v[idx].norm() == 0.0 {
        return u.iter().all(|z| z.norm() <= tol);
    }
    let ratio = u[idx] / v[idx];
    if ratio.norm() == 0.0 {
        return false;
    }
    let alpha = ratio / ratio.norm();
    u.iter().zip(v.iter()).all(|(a, b)| (a - alpha * b).norm() <= tol)
}
