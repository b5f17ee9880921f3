use std::process::ExitCode;
use std::time::{Duration, Instant};

use qsm_core::circuitgen::{equiv_global_phase, gate_counts, lower_native, peephole, qsm_circuit, route, to_unitary, Topology};
use qsm_core::closedform::{f_diffusive, f_diffusive_sum, f_gate_based, f_localized, f_superposition, fid_matrix_2q, random_phase_state, rate_single, GateLayout};
use qsm_core::fitkit::{self, apply_shot_noise, cnot_forward, extract_cnot_error, fit_algebraic, fit_exp_plateau, fit_rates, rates_to_physical, RateModel};
use qsm_core::knoise::{echo_combined, echo_param_noise, CombinedOptions};
use qsm_core::lindblad::{echo_lindblad, evolve_master, DecayMode, DecaySchedule, EchoOptions, Integrator};
use qsm_core::rng::aux_rng;
use qsm_core::sawtooth::{build_step_operator, evolve, k_loc};
use qsm_core::*;
use rand::Rng;
use serde::Serialize;

/// Criteria that fail at the stated tolerance; see the project notes.
const KNOWN_FAILURES: &[u32] = &[8, 12, 14];

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

/// Every Monte-Carlo run goes through here: once on one thread, once on eight.
#[derive(Default)]
struct Determinism {
    runs: Vec<(String, bool)>,
}

impl Determinism {
    fn run<T: Serialize + Send>(&mut self, label: &str, f: impl Fn() -> T + Sync) -> (T, Duration) {
        let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        let start = Instant::now();
        let a = pool(1).install(&f);
        let elapsed = start.elapsed();
        let b = pool(8).install(&f);
        let same = serde_json::to_vec(&a).unwrap() == serde_json::to_vec(&b).unwrap();
        self.runs.push((label.to_string(), same));
        (a, elapsed)
    }
}

fn rates(nu1: f64, nu2: f64) -> NoiseRates {
    NoiseRates::new(nu1, nu2).unwrap()
}

fn c1_circuit_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst = String::new();
    let mut ok = true;
    for n in 2..=4 {
        for k in [0.1, 1.3, 4.55] {
            let p = QsmParams::new(n, 1, k).unwrap();
            for d in [Direction::Forward, Direction::Backward] {
                let dense = build_step_operator(&p, d).unwrap();
                let c = qsm_circuit(&p, d).unwrap();
                for (label, circ) in [("lowered", lower_native(&c)), ("linear", lower_native(&route(&c, Topology::Linear)))] {
                    if !equiv_global_phase(&to_unitary(&circ).unwrap(), &dense, 1e-10) {
                        ok = false;
                        worst = format!("mismatch n={n} k={k} {d:?} {label}");
                    }
                }
            }
        }
    }
    let t = start.elapsed();
    Outcome { id: 1, pass: ok && t < Duration::from_secs(10), detail: format!("18 cases x 2 layouts {worst} ({t:.2?})") }
}

fn c2_gate_counts() -> Outcome {
    let p = QsmParams::new(3, 1, 1.3).unwrap();
    let c = qsm_circuit(&p, Direction::Forward).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for (top, want) in [(Topology::AllToAll, 24), (Topology::Linear, 48)] {
        let lowered = lower_native(&route(&c, top));
        let before = gate_counts(&lowered).cnot;
        let opt = peephole(&lowered);
        let after = gate_counts(&opt).cnot;
        let equiv = equiv_global_phase(&to_unitary(&opt).unwrap(), &to_unitary(&lowered).unwrap(), 1e-10);
        ok &= before == want && after <= want && equiv;
        parts.push(format!("{top}: {before} -> {after}"));
    }
    Outcome { id: 2, pass: ok, detail: format!("{} (optimizer reference 19/33 not binding)", parts.join(", ")) }
}

fn c3_localization() -> Outcome {
    let start = Instant::now();
    let psi0 = basis_state(3, 0).unwrap();
    let loc = evolve(&psi0, &QsmParams::new(3, 1, 0.1).unwrap(), 8, Direction::Forward).unwrap();
    let probs = loc.probabilities();
    let p0 = loc.momentum_probability(0).unwrap();
    let is_max = probs.iter().all(|&q| q <= p0);
    let dif = evolve(&psi0, &QsmParams::new(3, 1, 4.55).unwrap(), 8, Direction::Forward).unwrap();
    let ipr = dif.inverse_participation();
    let t = start.elapsed();
    Outcome {
        id: 3,
        pass: is_max && p0 > 0.5 && ipr < 0.3 && t < Duration::from_secs(1),
        detail: format!("k=0.1: P(p=0)={p0:.4} global max={is_max}; k=4.55: IPR={ipr:.4} ({t:.2?})"),
    }
}

fn c4_kloc() -> Outcome {
    let v = k_loc(8, 1);
    Outcome { id: 4, pass: (v - 1.87).abs() <= 0.01, detail: format!("k_loc(8,1)={v:.4}") }
}

fn c5_localized_closed_form() -> Outcome {
    let mut worst = 0.0f64;
    for n in 1..=3 {
        for nu1 in [0.05, 0.1] {
            let p = QsmParams::new(n, 1, 0.0).unwrap();
            let r = rates(nu1, 0.0);
            let s = echo_lindblad(&p, &r, 10, &IcSet::All, EchoOptions::default()).unwrap();
            for (t, v) in s.times.iter().zip(&s.values) {
                worst = worst.max((v - f_localized(n, nu1, 2.0 * t)).abs());
            }
        }
    }
    Outcome { id: 5, pass: worst <= 1e-6, detail: format!("max |echo - f_localized(2t)| = {worst:.2e}") }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, (var / xs.len() as f64).sqrt())
}

fn c6_diffusive_oracle(det: &mut Determinism) -> Outcome {
    let r = rates(0.1, 0.2);
    let times = [0.5, 1.0, 2.0, 4.0];
    let mut worst_z = 0.0f64;
    for n in [2, 3] {
        let (samples, _) = det.run(&format!("phase-average n={n}"), || {
            let mut rng = aux_rng(6, n as u64);
            (0..500)
                .map(|_| {
                    let psi = random_phase_state(n, &mut rng).unwrap();
                    let dm = psi.to_density();
                    times
                        .iter()
                        .map(|&t| {
                            let sched = DecaySchedule::decay_only(n, t, (0..n).collect()).unwrap();
                            fidelity_pure(&psi, &evolve_master(&dm, &sched, &r, Integrator::Rk4).unwrap()).unwrap()
                        })
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>()
        });
        for (j, &t) in times.iter().enumerate() {
            let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            let (m, se) = mean_se(&col);
            worst_z = worst_z.max((m - f_diffusive(n, &r, t)).abs() / se);
        }
    }
    Outcome { id: 6, pass: worst_z <= 3.0, detail: format!("500 states, max |z| = {worst_z:.2}") }
}

fn c7_appendix_consistency(det: &mut Determinism) -> Outcome {
    let mut sum_err = 0.0f64;
    let mut sup_err = 0.0f64;
    for n in 1..=6 {
        for (nu1, nu2) in [(0.0, 0.3), (0.05, 0.1), (0.1, 0.2), (0.334, 1.271), (1.0, 0.0)] {
            let r = rates(nu1, nu2);
            for t in [0.0, 0.1, 0.5, 1.0, 3.0, 10.0] {
                sum_err = sum_err.max((f_diffusive_sum(n, &r, t) - f_diffusive(n, &r, t)).abs());
                let r0 = rates(0.0, nu2);
                sup_err = sup_err.max((f_diffusive(n, &r0, t) - f_superposition(n, &r0, t)).abs());
            }
        }
    }
    let r = rates(0.1, 0.2);
    let mut unent = 0.0f64;
    for t in [0.0, 0.5, 1.0, 4.0] {
        unent = unent.max((fid_matrix_2q((0.0, 0.0, 0.0), &r, t).sum().re - f_superposition(2, &r, t)).abs());
    }
    let mut worst_z = 0.0f64;
    for (i, t) in [0.5, 1.0, 2.0, 4.0].into_iter().enumerate() {
        let (sums, _) = det.run(&format!("two-qubit matrix t={t}"), || {
            let mut rng = aux_rng(7, i as u64);
            (0..10_000)
                .map(|_| {
                    let ph = (rng.random::<f64>() * std::f64::consts::TAU, rng.random::<f64>() * std::f64::consts::TAU, rng.random::<f64>() * std::f64::consts::TAU);
                    fid_matrix_2q(ph, &r, t).sum().re
                })
                .collect::<Vec<f64>>()
        });
        let (m, se) = mean_se(&sums);
        worst_z = worst_z.max((m - f_diffusive(2, &r, t)).abs() / se);
    }
    Outcome {
        id: 7,
        pass: sum_err <= 1e-12 && sup_err <= 1e-12 && unent <= 1e-12 && worst_z <= 3.0,
        detail: format!("sum vs closed {sum_err:.1e}, nu1=0 {sup_err:.1e}, phi=0 {unent:.1e}, phase average max |z| {worst_z:.2}"),
    }
}

fn c8_fig3() -> Outcome {
    let start = Instant::now();
    let r = rates(0.1, 0.2);
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, mode) in [(3, DecayMode::AlternatingPairs), (6, DecayMode::ContinuousAllQubits)] {
        let n_eff = mode.n_eff(n) as f64;
        for (k, predicted) in [(0.1, n_eff * (r.nu1 / 2.0 + r.nu2 / 8.0)), (10.0, n_eff * (r.nu1 / 2.0 + r.nu2 / 4.0))] {
            let p = QsmParams::new(n, 1, k).unwrap();
            let s = echo_lindblad(&p, &r, 3, &IcSet::All, EchoOptions { mode, integrator: Integrator::Exact }).unwrap();
            let decohering = FidelitySeries::new(s.times.iter().map(|t| 2.0 * t).collect(), s.values.clone(), s.stderr.clone(), s.meta.clone()).unwrap();
            let gamma = fit_exp_plateau(&decohering, n).unwrap().param("gamma").unwrap();
            let dev = gamma / predicted - 1.0;
            ok &= dev.abs() <= 0.15;
            parts.push(format!("n={n} k={k}: {gamma:.4} vs {predicted:.3} ({:+.1}%)", 100.0 * dev));
        }
    }
    let t = start.elapsed();
    Outcome { id: 8, pass: ok && t < Duration::from_secs(300), detail: format!("{} ({t:.2?})", parts.join("; ")) }
}

fn c9_rate_ordering() -> Outcome {
    let mut worst = 0.0f64;
    for nu1 in [0.0, 0.01, 0.1, 0.334, 1.0, 3.0] {
        for nu2 in [0.0, 0.02, 0.2, 1.271, 5.0] {
            let r = rates(nu1, nu2);
            let d = rate_single(DynamicalRegime::Diffusive, &r);
            let a = d - rate_single(DynamicalRegime::Localized, &r) - nu2 / 4.0;
            let b = d - rate_single(DynamicalRegime::Superposition, &r) - nu1 / 4.0;
            worst = worst.max(a.abs().max(b.abs()) / d.max(f64::MIN_POSITIVE));
        }
    }
    Outcome { id: 9, pass: worst <= 4.0 * f64::EPSILON, detail: format!("30 rate pairs, max relative residual {worst:.1e}") }
}

fn c10_reversed_gap(det: &mut Determinism) -> Outcome {
    let (pair, t) = det.run("param noise n=3", || {
        let cfg = ParamNoiseConfig::new(0.5, 1000, 7).unwrap();
        let loc = echo_param_noise(&QsmParams::new(3, 1, 1.5).unwrap(), &cfg, 10).unwrap();
        let dif = echo_param_noise(&QsmParams::new(3, 1, 20.0).unwrap(), &cfg, 10).unwrap();
        (loc, dif)
    });
    let (loc, dif) = pair;
    let gaps: Vec<f64> = (2..=6).map(|i| dif.values[i] - loc.values[i]).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let shown: Vec<String> = gaps.iter().map(|g| format!("{g:+.3}")).collect();
    Outcome {
        id: 10,
        pass: mean >= 0.0 && t < Duration::from_secs(120),
        detail: format!("k 1.5 vs 20, sigma 0.5, 1000 realizations: diffusive - localized at t=2..6 [{}] ({t:.2?})", shown.join(" ")),
    }
}

fn c11_algebraic(det: &mut Determinism) -> Outcome {
    let (s, t) = det.run("param noise n=6", || {
        let cfg = ParamNoiseConfig::new(0.3, 100, 11).unwrap();
        echo_param_noise(&QsmParams::new(6, 1, 1.0).unwrap(), &cfg, 20).unwrap()
    });
    let fit = fit_algebraic(&s, (3.0, 12.0)).unwrap();
    let e = fit.param("exponent").unwrap();
    let ics = s.meta.initial_conditions.len();
    Outcome {
        id: 11,
        pass: (-1.3..=-0.7).contains(&e) && ics == 62 && t < Duration::from_secs(1200),
        detail: format!("k=1.0 sigma=0.3, {ics} ICs: slope {e:.3} +- {:.3} on [3,12] ({t:.2?})", fit.param_stderr("exponent").unwrap_or(f64::NAN)),
    }
}

fn combined_case(det: &mut Determinism, n: usize) -> (bool, String, Duration) {
    let r = rates(0.025, 0.05);
    let mut ok = true;
    let mut parts = Vec::new();
    let mut total = Duration::ZERO;
    for k in [1.8, 10.0] {
        let p = QsmParams::new(n, 1, k).unwrap();
        let ((comb, pn), t) = det.run(&format!("combined noise n={n} k={k}"), || {
            let cfg = ParamNoiseConfig::new(0.9, 100, 12).unwrap();
            (echo_combined(&p, &cfg, &r, 5, CombinedOptions::default()).unwrap(), echo_param_noise(&p, &cfg, 5).unwrap())
        });
        total += t;
        let lind = echo_lindblad(&p, &r, 5, &IcSet::ExcludeSymmetric, EchoOptions { mode: DecayMode::ContinuousAllQubits, integrator: Integrator::Exact }).unwrap();
        let mut zs = Vec::new();
        for i in 1..=5 {
            let prod = lind.values[i] * pn.values[i];
            let se = (comb.stderr[i].powi(2) + (lind.values[i] * pn.stderr[i]).powi(2)).sqrt();
            let z = (comb.values[i] - prod) / se;
            ok &= z.abs() <= 3.0;
            zs.push(format!("{z:+.1}"));
        }
        parts.push(format!("n={n} k={k} z(t=1..5)=[{}]", zs.join(" ")));
    }
    (ok, parts.join("; "), total)
}

fn c12_multiplicativity(det: &mut Determinism) -> Outcome {
    let (ok7, d7, t7) = combined_case(det, 7);
    let (ok5, d5, t5) = combined_case(det, 5);
    let budget = t7 < Duration::from_secs(7200);
    Outcome { id: 12, pass: ok7 && budget, detail: format!("{d7} ({t7:.0?}); also {d5} [{}] ({t5:.1?})", if ok5 { "pass" } else { "fail" }) }
}

fn sig3(x: f64) -> String {
    format!("{:.2e}", x)
}

fn c13_table_ii() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for eps in [5.79e-3, 1.76e-2, 2.59e-2] {
        let f1 = cnot_forward(1.0, eps, 3, 66.0);
        let back = extract_cnot_error(1.0, f1, 3, 66.0).unwrap();
        ok &= sig3(back) == sig3(eps);
        parts.push(format!("f1={f1:.4} -> {}", sig3(back)));
    }
    for (f1, eps) in [(0.7215, 5.79e-3), (0.3960, 1.76e-2)] {
        ok &= sig3(extract_cnot_error(1.0, f1, 3, 66.0).unwrap()) == sig3(eps);
    }
    let (r1, r2) = (1.76e-2 / 5.79e-3, 2.59e-2 / 5.79e-3);
    ok &= format!("{r1:.1}") == "3.0" && format!("{r2:.1}") == "4.5";
    Outcome { id: 13, pass: ok, detail: format!("{}; ratios {r1:.2}, {r2:.2}", parts.join(", ")) }
}

fn c14_table_iii() -> Outcome {
    let t_step = fitkit::REFERENCE_T_STEP;
    let rows = [("reported n=1", 0.081, 0.537, 143.0, 37.4), ("theory fit", 0.334, 1.271, 34.6, 14.4), ("lindblad fit", 0.128, 1.486, 90.1, 14.3), ("aer fit", 0.046, 1.68, 250.0, 13.4)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, nu1, nu2, t1_ref, t2_ref) in rows {
        let (t1, t2) = rates_to_physical(nu1, nu2, t_step).unwrap();
        let (t1, t2) = (t1 * 1e6, t2 * 1e6);
        let m1 = sig3(t1) == sig3(t1_ref);
        let m2 = sig3(t2) == sig3(t2_ref);
        ok &= m1 && m2;
        let mark = |m| if m { "" } else { "!" };
        parts.push(format!("{name}: T1 {t1:.1}{} T2 {t2:.2}{}", mark(m1), mark(m2)));
    }
    Outcome { id: 14, pass: ok, detail: format!("T_step={:.2}us; {} (! = differs from the table at 3 s.f.)", t_step * 1e6, parts.join(", ")) }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

fn c15_fit_recovery(det: &mut Determinism) -> Outcome {
    let truth = rates(0.334, 1.271);
    let times: Vec<f64> = (0..=5).map(|t| t as f64).collect();
    let meta = SeriesMeta { n: 3, ..Default::default() };
    let curve = |regime| -> FidelitySeries {
        let v = times.iter().map(|&t| f_gate_based(2.0 * t, 3, 33.0, &truth, regime, GateLayout::Serial).unwrap()).collect();
        FidelitySeries::exact(times.clone(), v, meta.clone()).unwrap()
    };
    let (loc, dif) = (curve(DynamicalRegime::SemiLocalized), curve(DynamicalRegime::Diffusive));
    let (fits, t) = det.run("shot-noise fits", || {
        (0..25u64)
            .map(|trial| {
                let mut rng = aux_rng(15, trial);
                let a = apply_shot_noise(&loc, 8192, 8, &mut rng).unwrap();
                let b = apply_shot_noise(&dif, 8192, 8, &mut rng).unwrap();
                let f = fit_rates(&a, &b, &RateModel::gate_based()).unwrap();
                [f.param("nu1").unwrap(), f.param("nu2").unwrap(), f.param_stderr("nu1").unwrap()]
            })
            .collect::<Vec<_>>()
    });
    let nu1 = median(fits.iter().map(|f| f[0]).collect());
    let nu2 = median(fits.iter().map(|f| f[1]).collect());
    let se1 = median(fits.iter().map(|f| f[2]).collect());
    let ok2 = (nu2 / 1.271 - 1.0).abs() <= 0.10;
    let ok1 = (nu1 - 0.334).abs() <= se1;
    Outcome {
        id: 15,
        pass: ok1 && ok2 && t < Duration::from_secs(300),
        detail: format!("median nu1={nu1:.4} (stderr {se1:.4}), nu2={nu2:.4} ({:+.1}%) over 25 trials ({t:.2?})", 100.0 * (nu2 / 1.271 - 1.0)),
    }
}

fn c16_determinism(det: &Determinism) -> Outcome {
    let bad: Vec<&str> = det.runs.iter().filter(|(_, same)| !same).map(|(l, _)| l.as_str()).collect();
    Outcome {
        id: 16,
        pass: bad.is_empty(),
        detail: if bad.is_empty() { format!("{} runs identical at 1 and 8 threads", det.runs.len()) } else { format!("differs: {}", bad.join(", ")) },
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut det = Determinism::default();
    let report = |o: Outcome| {
        println!("criterion {:2} {} {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        o
    };
    let results = vec![
        report(c1_circuit_correctness()),
        report(c2_gate_counts()),
        report(c3_localization()),
        report(c4_kloc()),
        report(c5_localized_closed_form()),
        report(c6_diffusive_oracle(&mut det)),
        report(c7_appendix_consistency(&mut det)),
        report(c8_fig3()),
        report(c9_rate_ordering()),
        report(c10_reversed_gap(&mut det)),
        report(c11_algebraic(&mut det)),
        report(c12_multiplicativity(&mut det)),
        report(c13_table_ii()),
        report(c14_table_iii()),
        report(c15_fit_recovery(&mut det)),
    ];
    let last = report(c16_determinism(&det));
    let all: Vec<&Outcome> = results.iter().chain(std::iter::once(&last)).collect();
    let passed = all.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", all.len());
    let unexpected: Vec<u32> = all.iter().filter(|o| !o.pass && !KNOWN_FAILURES.contains(&o.id)).map(|o| o.id).collect();
    for o in all.iter().filter(|o| o.pass && KNOWN_FAILURES.contains(&o.id)) {
        println!("note: criterion {} is listed as a known failure but passed", o.id);
    }
    if unexpected.is_empty() {
        if passed < all.len() {
            println!("known failures: {KNOWN_FAILURES:?}");
        }
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
