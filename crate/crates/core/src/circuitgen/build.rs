use super::{Circuit, Gate, Topology};
use crate::error::Result;
use crate::sawtooth::{Direction, QsmParams};

/// QFT with the final swaps omitted: qubit `j` ends up holding output bit `n-1-j`.
fn qft_no_swaps(n: usize, out: &mut Vec<Gate>) {
    for j in (0..n).rev() {
        out.push(Gate::h(j));
        for m in 0..j {
            out.push(Gate::cp(m, j, std::f64::consts::PI / (1u64 << (j - m)) as f64));
        }
    }
}

/// Gates of `exp(i sum_x theta(x) |x><x|)` for `theta(x) = a/2 (x - N/2)^2`,
/// dropping the constant term. Logical qubit `j` is placed on `place(j)`.
fn quadratic_phase(n: usize, a: f64, place: impl Fn(usize) -> usize, out: &mut Vec<Gate>) {
    let dim = (1u64 << n) as f64;
    for j in 0..n {
        let pj = 2f64.powi(j as i32);
        out.push(Gate::p(place(j), a * (pj * pj / 2.0 - dim * pj / 2.0)));
    }
    for j1 in 0..n {
        for j2 in j1 + 1..n {
            out.push(Gate::cp(place(j1), place(j2), a * 2f64.powi((j1 + j2) as i32)));
        }
    }
}

/// One map step as QFT, potential kick on reversed labels, inverse QFT and
/// kinetic phase. The QFT swaps cancel against the relabeling.
pub fn qsm_circuit(params: &QsmParams, direction: Direction) -> Result<Circuit> {
    params.validate()?;
    let n = params.n;
    let mut gates = Vec::new();
    qft_no_swaps(n, &mut gates);
    quadratic_phase(n, params.k * params.beta().powi(2), |j| n - 1 - j, &mut gates);
    let mut qft = Vec::new();
    qft_no_swaps(n, &mut qft);
    gates.extend(qft.iter().rev().flat_map(|g| g.adjoint()));
    quadratic_phase(n, -params.hbar(), |j| j, &mut gates);
    let c = Circuit::from_segments(n, Topology::AllToAll, vec![gates]);
    Ok(match direction {
        Direction::Forward => c,
        Direction::Backward => c.adjoint(),
    })
}

/// `steps` map iterations separated by barriers.
pub fn repeat_steps(params: &QsmParams, direction: Direction, steps: usize) -> Result<Circuit> {
    let one = qsm_circuit(params, direction)?;
    let segs = (0..steps).map(|_| one.gates.clone()).collect();
    Ok(Circuit::from_segments(params.n, Topology::AllToAll, segs))
}

/// `t` forward steps followed by `t` backward steps.
pub fn echo_circuit(params: &QsmParams, t: usize) -> Result<Circuit> {
    let fwd = repeat_steps(params, Direction::Forward, t)?;
    let bwd = repeat_steps(params, Direction::Backward, t)?;
    Ok(fwd.then(&bwd))
}
