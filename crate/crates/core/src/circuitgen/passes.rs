use std::f64::consts::FRAC_PI_2;

use super::{canonical_phase, Circuit, Gate, GateKind, Topology};

/// Rewrite into `{CNOT, RZ, SX, X}`; equal up to global phase.
pub fn lower_native(circuit: &Circuit) -> Circuit {
    circuit.map_segments(circuit.topology, |seg| {
        let mut out = Vec::with_capacity(seg.len() * 3);
        for g in seg {
            let [a, b] = g.qubits;
            match g.kind {
                GateKind::H => out.extend([Gate::rz(a, FRAC_PI_2), Gate::sx(a), Gate::rz(a, FRAC_PI_2)]),
                GateKind::P => out.push(Gate::rz(a, g.phase)),
                GateKind::CP => out.extend([
                    Gate::rz(b, g.phase / 2.0),
                    Gate::cnot(a, b),
                    Gate::rz(b, -g.phase / 2.0),
                    Gate::cnot(a, b),
                    Gate::rz(a, g.phase / 2.0),
                ]),
                GateKind::Swap => out.extend([Gate::cnot(a, b), Gate::cnot(b, a), Gate::cnot(a, b)]),
                _ => out.push(*g),
            }
        }
        out
    })
}

/// Map onto the requested coupling. On a line, a two-qubit gate spanning
/// distance `d > 1` is wrapped in a chain of `d - 1` swaps that is undone
/// afterwards, so qubit identities are unchanged at the end.
pub fn route(circuit: &Circuit, topology: Topology) -> Circuit {
    if topology == Topology::AllToAll {
        let mut c = circuit.clone();
        c.topology = topology;
        return c;
    }
    circuit.map_segments(topology, |seg| {
        let mut out = Vec::with_capacity(seg.len());
        for g in seg {
            let [a, b] = g.qubits;
            if g.arity() == 1 || a.abs_diff(b) == 1 {
                out.push(*g);
                continue;
            }
            let (lo, hi) = (a.min(b), a.max(b));
            let chain: Vec<Gate> = (lo..hi - 1).map(|q| Gate::swap(q, q + 1)).collect();
            out.extend(chain.iter().copied());
            out.push(g.relabel(|q| if q == lo { hi - 1 } else { q }));
            out.extend(chain.iter().rev().copied());
        }
        out
    })
}

/// Action of a gate on one of its qubits, for commutation checks.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Axis {
    Z,
    X,
    Other,
}

fn axis_on(g: &Gate, q: usize) -> Axis {
    match g.kind {
        GateKind::Rz | GateKind::P | GateKind::CP => Axis::Z,
        GateKind::X | GateKind::Sx => Axis::X,
        GateKind::Cnot if g.qubits[0] == q => Axis::Z,
        GateKind::Cnot => Axis::X,
        GateKind::H | GateKind::Swap => Axis::Other,
    }
}

/// Sufficient condition for `gh = hg`: on every shared qubit both gates are
/// diagonal in the same (Z or X) basis.
fn commutes(g: &Gate, h: &Gate) -> bool {
    g.support().iter().filter(|&&q| h.touches(q)).all(|&q| {
        let (x, y) = (axis_on(g, q), axis_on(h, q));
        x == y && x != Axis::Other
    })
}

fn same_pair(g: &Gate, h: &Gate) -> bool {
    g.qubits == h.qubits || g.qubits == [h.qubits[1], h.qubits[0]]
}

/// Replacement for the adjacent pair `(g, h)` (in time order), if any.
fn rewrite(g: &Gate, h: &Gate) -> Option<Vec<Gate>> {
    use GateKind::*;
    let merged = |kind: GateKind, phi: f64| {
        let phase = canonical_phase(phi);
        if phase == 0.0 {
            vec![]
        } else {
            vec![Gate { kind, qubits: h.qubits, phase }]
        }
    };
    match (g.kind, h.kind) {
        (Cnot, Cnot) if g.qubits == h.qubits => Some(vec![]),
        (H, H) | (X, X) if g.qubits == h.qubits => Some(vec![]),
        (Sx, Sx) if g.qubits == h.qubits => Some(vec![Gate::x(g.qubits[0])]),
        (Swap, Swap) if same_pair(g, h) => Some(vec![]),
        (Rz, Rz) | (Rz, P) | (P, Rz) if g.qubits[0] == h.qubits[0] => Some(merged(Rz, g.phase + h.phase)),
        (P, P) if g.qubits[0] == h.qubits[0] => Some(merged(P, g.phase + h.phase)),
        (CP, CP) if same_pair(g, h) => Some(merged(CP, g.phase + h.phase)),
        (Swap, Cnot) if same_pair(g, h) => {
            let [c, t] = h.qubits;
            Some(vec![Gate::cnot(c, t), Gate::cnot(t, c)])
        }
        (Cnot, Swap) if same_pair(g, h) => {
            let [c, t] = g.qubits;
            Some(vec![Gate::cnot(t, c), Gate::cnot(c, t)])
        }
        _ => None,
    }
}

fn is_null(g: &Gate) -> bool {
    g.kind.has_phase() && g.phase == 0.0
}

/// One sweep; returns true if anything changed.
fn sweep(gates: &mut Vec<Gate>) -> bool {
    let before = gates.len();
    gates.retain(|g| !is_null(g));
    let mut changed = gates.len() != before;
    let mut i = 0;
    while i < gates.len() {
        let mut hit = None;
        for j in i + 1..gates.len() {
            if !gates[i].overlaps(&gates[j]) {
                continue;
            }
            if let Some(rep) = rewrite(&gates[i], &gates[j]) {
                hit = Some((j, rep));
                break;
            }
            if !commutes(&gates[i], &gates[j]) {
                break;
            }
        }
        if let Some((j, rep)) = hit {
            // gate i commutes with everything up to j, so the pair collapses at j
            gates.splice(j..=j, rep);
            gates.remove(i);
            changed = true;
        } else {
            i += 1;
        }
    }
    changed
}

/// Deterministic local simplification to a fixpoint, per barrier segment.
pub fn peephole(circuit: &Circuit) -> Circuit {
    circuit.map_segments(circuit.topology, |seg| {
        let mut gates = seg.to_vec();
        while sweep(&mut gates) {}
        gates
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuitgen::{equiv_global_phase, gate_counts, qsm_circuit, to_unitary};
    use crate::sawtooth::{build_step_operator, Direction, QsmParams};
    use ndarray::Array2;

    fn circuit(n: usize, gates: Vec<Gate>) -> Circuit {
        Circuit::from_segments(n, Topology::AllToAll, vec![gates])
    }

    fn equivalent(a: &Circuit, b: &Circuit) -> bool {
        equiv_global_phase(&to_unitary(a).unwrap(), &to_unitary(b).unwrap(), 1e-10)
    }

    #[test]
    fn lower_single_gates() {
        let h = circuit(1, vec![Gate::h(0)]);
        let lh = lower_native(&h);
        assert_eq!(lh.gates.iter().map(|g| g.kind).collect::<Vec<_>>(), vec![GateKind::Rz, GateKind::Sx, GateKind::Rz]);
        assert!(equiv_global_phase(&to_unitary(&lh).unwrap(), &to_unitary(&h).unwrap(), 1e-12));
        for phi in [0.3, -2.9, std::f64::consts::PI] {
            let cp = circuit(2, vec![Gate::cp(1, 0, phi)]);
            let l = lower_native(&cp);
            let c = gate_counts(&l);
            assert_eq!((c.cnot, c.rz), (2, 3));
            assert!(equivalent(&cp, &l));
        }
        let sw = circuit(3, vec![Gate::swap(0, 2)]);
        let l = lower_native(&sw);
        assert_eq!(gate_counts(&l).cnot, 3);
        assert!(equivalent(&sw, &l));
    }

    #[test]
    fn lowered_qsm_counts() {
        let p = QsmParams::new(3, 1, 4.55).unwrap();
        let c = qsm_circuit(&p, Direction::Forward).unwrap();
        let low = lower_native(&c);
        assert!(low.gates.iter().all(|g| g.kind.is_native()));
        assert_eq!(gate_counts(&low).cnot, 24);
        let lin = lower_native(&route(&c, Topology::Linear));
        assert_eq!(gate_counts(&lin).cnot, 48);
        lin.validate().unwrap();
        let dense = build_step_operator(&p, Direction::Forward).unwrap();
        assert!(equiv_global_phase(&to_unitary(&lin).unwrap(), &dense, 1e-10));
        let p2 = QsmParams::new(2, 1, 4.55).unwrap();
        assert_eq!(gate_counts(&lower_native(&qsm_circuit(&p2, Direction::Forward).unwrap())).cnot, 8);
    }

    #[test]
    fn route_cp_pattern() {
        let c = circuit(3, vec![Gate::cp(0, 2, 0.4)]);
        let r = route(&c, Topology::Linear);
        assert_eq!(r.gates, vec![Gate::swap(0, 1), Gate::cp(1, 2, 0.4), Gate::swap(0, 1)]);
        assert!(equivalent(&c, &r));
        let adj = circuit(3, vec![Gate::cp(0, 1, 0.4), Gate::cnot(2, 1)]);
        assert_eq!(route(&adj, Topology::Linear).gates, adj.gates);
    }

    #[test]
    fn route_long_range() {
        let c = circuit(5, vec![Gate::cnot(4, 0), Gate::cp(1, 4, 0.2), Gate::h(2)]);
        let r = route(&c, Topology::Linear);
        r.validate().unwrap();
        assert!(equivalent(&c, &r));
    }

    #[test]
    fn peephole_basics() {
        let c = circuit(2, vec![Gate::cnot(0, 1), Gate::cnot(0, 1)]);
        assert!(peephole(&c).is_empty());
        let c = circuit(1, vec![Gate::rz(0, 0.3), Gate::rz(0, -0.3)]);
        assert!(peephole(&c).is_empty());
        // RZ on a control commutes through the CNOT
        let c = circuit(2, vec![Gate::rz(0, 0.3), Gate::cnot(0, 1), Gate::rz(0, 0.2)]);
        let o = peephole(&c);
        assert_eq!(o.len(), 2);
        assert!(equivalent(&c, &o));
        let c = circuit(2, vec![Gate::swap(0, 1), Gate::cnot(0, 1)]);
        let o = peephole(&c);
        assert_eq!(gate_counts(&o).cnot, 2);
        assert!(equivalent(&c, &o));
        let c = circuit(2, vec![Gate::cnot(1, 0), Gate::swap(0, 1)]);
        let o = peephole(&c);
        assert_eq!(o.gates, vec![Gate::cnot(0, 1), Gate::cnot(1, 0)]);
        assert!(equivalent(&c, &o));
    }

    #[test]
    fn peephole_keeps_small_cp() {
        let c = circuit(2, vec![Gate::cp(0, 1, 1e-9)]);
        assert_eq!(peephole(&c).gates, c.gates);
    }

    #[test]
    fn peephole_respects_barriers() {
        let mut c = Circuit::new(2, Topology::AllToAll);
        c.push(Gate::cnot(0, 1));
        c.barrier();
        c.push(Gate::cnot(0, 1));
        let o = peephole(&c);
        assert_eq!(o, c);
    }

    #[test]
    fn peephole_qsm() {
        let p = QsmParams::new(3, 1, 4.55).unwrap();
        let c = qsm_circuit(&p, Direction::Forward).unwrap();
        for low in [lower_native(&c), lower_native(&route(&c, Topology::Linear))] {
            let o = peephole(&low);
            assert!(gate_counts(&o).cnot <= gate_counts(&low).cnot);
            assert!(equivalent(&low, &o));
            assert_eq!(peephole(&o), o);
        }
        let o = peephole(&c);
        assert!(equivalent(&c, &o));
        assert!(gate_counts(&o).cnot_cost() <= gate_counts(&c).cnot_cost());
    }

    #[test]
    fn echo_circuit_counts() {
        let p = QsmParams::new(3, 1, 4.55).unwrap();
        let c = crate::circuitgen::echo_circuit(&p, 1).unwrap();
        let lin = lower_native(&route(&c, Topology::Linear));
        assert_eq!(gate_counts(&lin).cnot, 96);
        assert!(equiv_global_phase(&to_unitary(&lin).unwrap(), &Array2::eye(8), 1e-10));
    }
}
