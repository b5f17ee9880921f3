use std::fmt;
use std::path::{Path, PathBuf};

use qsm_core::circuitgen::{gate_counts, lower_native, peephole, qsm_circuit, route, GateCensus, Topology};
use qsm_core::closedform::{f_regime, DynamicalRegime};
use qsm_core::fitkit::{self, RateModel, REFERENCE_T_STEP};
use qsm_core::knoise::{echo_combined, echo_param_noise_ics, CombinedOptions, ParamNoiseConfig};
use qsm_core::krausgate::{echo_kraus, GateNoiseConfig, KrausEchoOptions};
use qsm_core::lindblad::{echo_lindblad, DecayMode, EchoOptions, Integrator, NoiseRates};
use qsm_core::sawtooth::evolve;
use qsm_core::{basis_state, Direction, FidelitySeries, IcSet, QsmParams, SeriesMeta};
use serde::Serialize;

use crate::config::{Command, ConfigError, RawConfig};
use crate::output::{read_series, write_report, write_table, Format, Provenance, Table};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<qsm_core::Error> for CliError {
    fn from(e: qsm_core::Error) -> Self {
        use qsm_core::Error as E;
        match e {
            E::MomentumRange { .. } | E::InvalidParameter { .. } | E::Physicality { .. } | E::TooManyQubits { .. } | E::Parse { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Numerical(format!("writing output: {e}"))
}

pub struct RunOptions {
    pub out: PathBuf,
    pub format: Format,
}

struct Ctx<'a> {
    cfg: &'a RawConfig,
    opts: &'a RunOptions,
    prov: Provenance,
    written: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn series(&mut self, stem: &str, s: &FidelitySeries, unit: &str) -> Result<(), CliError> {
        let paths = write_table(&self.opts.out, stem, &Table::from_series(s, unit), Some(&s.meta), &self.prov, self.opts.format).map_err(io_err)?;
        self.written.extend(paths);
        Ok(())
    }

    fn table(&mut self, stem: &str, t: &Table) -> Result<(), CliError> {
        let paths = write_table(&self.opts.out, stem, t, None, &self.prov, self.opts.format).map_err(io_err)?;
        self.written.extend(paths);
        Ok(())
    }

    fn report<T: Serialize>(&mut self, stem: &str, r: &T) -> Result<(), CliError> {
        let p = write_report(&self.opts.out, stem, r, &self.prov).map_err(io_err)?;
        self.written.push(p);
        Ok(())
    }
}

const FB_UNIT: &str = "map steps, forward-back";

fn params_list(cfg: &RawConfig) -> Result<Vec<QsmParams>, CliError> {
    let n: usize = cfg.require("params", "n")?;
    let l: u32 = cfg.optional("params", "L", 1)?;
    let ks: Vec<f64> = cfg.list("params", "k")?;
    if ks.is_empty() {
        return Err(cfg.invalid("params", "k", "needs at least one value").into());
    }
    ks.into_iter()
        .map(|k| QsmParams::new(n, l, k).map_err(|e| cfg.invalid("params", "k", e.to_string()).into()))
        .collect()
}

fn ic_set(cfg: &RawConfig) -> Result<IcSet, CliError> {
    match cfg.get("", "ic").unwrap_or("all") {
        "all" => Ok(IcSet::All),
        "exclude-symmetric" => Ok(IcSet::ExcludeSymmetric),
        _ => Ok(IcSet::Explicit(cfg.list("", "ic")?)),
    }
}

fn rates(cfg: &RawConfig) -> Result<NoiseRates, CliError> {
    let nu1: f64 = cfg.require("lindblad", "nu1")?;
    let nu2: f64 = cfg.optional("lindblad", "nu2", 0.0)?;
    NoiseRates::new(nu1, nu2).map_err(|e| cfg.invalid("lindblad", "nu1", e.to_string()).into())
}

fn decay_mode(cfg: &RawConfig) -> Result<DecayMode, CliError> {
    match cfg.get("lindblad", "mode").unwrap_or("continuous-all-qubits") {
        "continuous-all-qubits" | "continuous" => Ok(DecayMode::ContinuousAllQubits),
        "alternating-pairs" => Ok(DecayMode::AlternatingPairs),
        other => Err(cfg.invalid("lindblad", "mode", format!("unknown mode `{other}`")).into()),
    }
}

fn integrator(cfg: &RawConfig, default: Integrator) -> Result<Integrator, CliError> {
    match cfg.get("lindblad", "integrator") {
        None => Ok(default),
        Some("rk4") => Ok(Integrator::Rk4),
        Some("exact") => Ok(Integrator::Exact),
        Some(other) => Err(cfg.invalid("lindblad", "integrator", format!("unknown integrator `{other}`")).into()),
    }
}

fn topology(cfg: &RawConfig, section: &str) -> Result<Topology, CliError> {
    Ok(cfg.optional(section, "topology", Topology::Linear)?)
}

fn param_noise(cfg: &RawConfig, seed: u64, ics: &IcSet) -> Result<ParamNoiseConfig, CliError> {
    let sigma: f64 = cfg.require("param_noise", "sigma")?;
    let realizations: usize = cfg.require("param_noise", "realizations")?;
    let mut p = ParamNoiseConfig::new(sigma, realizations, seed).map_err(|e| cfg.invalid("param_noise", "sigma", e.to_string()))?;
    p.exclude_symmetric_ics = matches!(ics, IcSet::ExcludeSymmetric);
    Ok(p)
}

fn stem(cmd: Command, p: &QsmParams) -> String {
    format!("{cmd}_n{}_k{}", p.n, p.k)
}

#[derive(Serialize)]
struct CircuitReport {
    n: usize,
    k: f64,
    topology: String,
    optimized: bool,
    cnot_before_opt: usize,
    cnot_after_opt: usize,
    census_before: GateCensus,
    census_after: GateCensus,
}

#[derive(Serialize)]
struct FitReport {
    fit: fitkit::FitResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    physical: Option<PhysicalTimes>,
}

#[derive(Serialize)]
struct PhysicalTimes {
    t_step_s: f64,
    t1_s: f64,
    t2_s: f64,
}

#[derive(Serialize)]
struct ScalarReport {
    quantity: &'static str,
    value: f64,
    inputs: std::collections::BTreeMap<&'static str, f64>,
}

pub fn run(cfg: &RawConfig, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let cmd: Command = cfg.require("", "command")?;
    let seed: Option<u64> = match cfg.get("", "seed") {
        Some(_) => Some(cfg.require("", "seed")?),
        None => None,
    };
    let mut ctx = Ctx { cfg, opts, prov: Provenance::new(cmd.to_string(), seed, cfg.echo()), written: Vec::new() };
    match cmd {
        Command::Evolve => run_evolve(&mut ctx)?,
        Command::EchoLindblad => {
            let t_max: usize = cfg.require("", "t_max")?;
            let r = rates(cfg)?;
            let eo = EchoOptions { mode: decay_mode(cfg)?, integrator: integrator(cfg, Integrator::Rk4)? };
            let ics = ic_set(cfg)?;
            for p in params_list(cfg)? {
                let s = echo_lindblad(&p, &r, t_max, &ics, eo)?;
                ctx.series(&stem(cmd, &p), &s, FB_UNIT)?;
            }
        }
        Command::EchoKraus => {
            let t_max: usize = cfg.require("", "t_max")?;
            let t1: f64 = cfg.require("kraus", "t1")?;
            let t2: f64 = cfg.require("kraus", "t2")?;
            let mut gc = GateNoiseConfig::new(t1, t2).map_err(|e| cfg.invalid("kraus", "t2", e.to_string()))?;
            if cfg.get("kraus", "cnot_duration").is_some() {
                let d: f64 = cfg.require("kraus", "cnot_duration")?;
                gc.durations.insert(qsm_core::circuitgen::GateKind::Cnot, d);
            }
            if cfg.get("kraus", "sx_duration").is_some() {
                let d: f64 = cfg.require("kraus", "sx_duration")?;
                gc.durations.insert(qsm_core::circuitgen::GateKind::Sx, d);
                gc.durations.insert(qsm_core::circuitgen::GateKind::X, d);
            }
            gc.validate()?;
            let ko = KrausEchoOptions { topology: topology(cfg, "kraus")?, optimize: cfg.optional("kraus", "optimize", false)? };
            let ics = ic_set(cfg)?;
            for p in params_list(cfg)? {
                let s = echo_kraus(&p, &gc, t_max, &ics, ko)?;
                ctx.series(&stem(cmd, &p), &s, FB_UNIT)?;
            }
        }
        Command::EchoParam => {
            let t_max: usize = cfg.require("", "t_max")?;
            let ics = match cfg.get("", "ic") {
                None => IcSet::ExcludeSymmetric,
                Some(_) => ic_set(cfg)?,
            };
            let pn = param_noise(cfg, seed.unwrap_or(0), &ics)?;
            for p in params_list(cfg)? {
                let s = echo_param_noise_ics(&p, &pn, t_max, &ics)?;
                ctx.series(&stem(cmd, &p), &s, FB_UNIT)?;
            }
        }
        Command::EchoCombined => {
            let t_max: usize = cfg.require("", "t_max")?;
            let ics = match cfg.get("", "ic") {
                None => IcSet::ExcludeSymmetric,
                Some(_) => ic_set(cfg)?,
            };
            if matches!(ics, IcSet::Explicit(_)) {
                return Err(cfg.invalid("", "ic", "echo-combined supports `all` or `exclude-symmetric`").into());
            }
            let pn = param_noise(cfg, seed.unwrap_or(0), &ics)?;
            let r = rates(cfg)?;
            let co = CombinedOptions { mode: decay_mode(cfg)?, integrator: integrator(cfg, Integrator::Exact)? };
            for p in params_list(cfg)? {
                let s = echo_combined(&p, &pn, &r, t_max, co)?;
                ctx.series(&stem(cmd, &p), &s, FB_UNIT)?;
            }
        }
        Command::Circuit => {
            let top = topology(cfg, "circuit")?;
            let optimize: bool = cfg.optional("circuit", "optimize", true)?;
            let emit: bool = cfg.optional("circuit", "emit_text", false)?;
            for p in params_list(cfg)? {
                let lowered = lower_native(&route(&qsm_circuit(&p, Direction::Forward)?, top));
                let before = gate_counts(&lowered);
                let fin = if optimize { peephole(&lowered) } else { lowered.clone() };
                let after = gate_counts(&fin);
                let report = CircuitReport {
                    n: p.n,
                    k: p.k,
                    topology: top.to_string(),
                    optimized: optimize,
                    cnot_before_opt: before.cnot,
                    cnot_after_opt: after.cnot,
                    census_before: before,
                    census_after: after,
                };
                let st = format!("circuit_n{}_k{}_{}", p.n, p.k, top);
                ctx.report(&st, &report)?;
                if emit {
                    let path = opts.out.join(format!("{st}.qc"));
                    std::fs::write(&path, fin.to_text()).map_err(io_err)?;
                    ctx.written.push(path);
                }
            }
        }
        Command::Theory => run_theory(&mut ctx)?,
        Command::Fit => run_fit(&mut ctx)?,
    }
    Ok(ctx.written)
}

fn run_evolve(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let t_max: usize = cfg.require("", "t_max")?;
    let p0: i64 = cfg.optional("evolve", "p0", 0)?;
    let direction = match cfg.get("evolve", "direction").unwrap_or("forward") {
        "forward" => Direction::Forward,
        "backward" => Direction::Backward,
        other => return Err(cfg.invalid("evolve", "direction", format!("unknown direction `{other}`")).into()),
    };
    for p in params_list(cfg)? {
        let mut psi = basis_state(p.n, p0).map_err(|e| cfg.invalid("evolve", "p0", e.to_string()))?;
        let mut rows = Vec::new();
        let half = (p.dim() / 2) as i64;
        for t in 0..=t_max {
            if t > 0 {
                psi = evolve(&psi, &p, 1, direction)?;
            }
            let ipr = psi.inverse_participation();
            for (i, prob) in psi.probabilities().into_iter().enumerate() {
                rows.push(vec![t as f64, (i as i64 - half) as f64, prob, ipr]);
            }
        }
        let table = Table {
            columns: vec![
                ("t".into(), "map steps".into()),
                ("p".into(), "momentum index".into()),
                ("probability".into(), "dimensionless".into()),
                ("ipr".into(), "dimensionless".into()),
            ],
            rows,
        };
        ctx.table(&format!("evolve_n{}_k{}_p{}", p.n, p.k, p0), &table)?;
    }
    Ok(())
}

fn run_theory(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let n: usize = cfg.require("params", "n")?;
    let r = rates(cfg)?;
    let t_max: f64 = cfg.require("", "t_max")?;
    let dt: f64 = cfg.optional("theory", "dt", 0.1)?;
    if !(dt > 0.0 && t_max > 0.0) {
        return Err(cfg.invalid("theory", "dt", "t_max and dt must be positive").into());
    }
    let regimes: Vec<DynamicalRegime> = cfg.list("theory", "regime")?;
    let steps = (t_max / dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    for regime in regimes {
        let values: Vec<f64> = times.iter().map(|&t| f_regime(regime, n, &r, t)).collect();
        let mut meta = SeriesMeta { engine: "closed-form".into(), n, ..Default::default() };
        meta.params.insert("nu1".into(), r.nu1);
        meta.params.insert("nu2".into(), r.nu2);
        meta.notes.insert("regime".into(), format!("{regime:?}"));
        let s = FidelitySeries::exact(times.clone(), values, meta)?;
        let name = format!("theory_n{n}_{}", cfg_regime_name(regime));
        ctx.series(&name, &s, "map steps, decohering time")?;
    }
    Ok(())
}

fn cfg_regime_name(r: DynamicalRegime) -> &'static str {
    match r {
        DynamicalRegime::Localized => "localized",
        DynamicalRegime::Superposition => "superposition",
        DynamicalRegime::Diffusive => "diffusive",
        DynamicalRegime::SemiLocalized => "semi-localized",
    }
}

fn input_path(cfg: &RawConfig, key: &str) -> Result<PathBuf, CliError> {
    let p: String = cfg.require("fit", key)?;
    Ok(PathBuf::from(p))
}

fn load(cfg: &RawConfig, key: &str, n: usize) -> Result<FidelitySeries, CliError> {
    let path = input_path(cfg, key)?;
    read_series(Path::new(&path), n).map_err(|m| cfg.invalid("fit", key, m).into())
}

fn run_fit(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let kind: String = cfg.require("fit", "kind")?;
    match kind.as_str() {
        "exp-plateau" => {
            let n: usize = cfg.require("fit", "n")?;
            let mut s = load(cfg, "input", n)?;
            if cfg.get("fit", "window").is_some() {
                let bounds: Vec<f64> = cfg.list("fit", "window")?;
                if bounds.len() != 2 {
                    return Err(cfg.invalid("fit", "window", "expected `lo, hi`").into());
                }
                s = s.window(bounds[0], bounds[1]);
            }
            let fit = fitkit::fit_exp_plateau(&s, n)?;
            ctx.report("fit_exp_plateau", &FitReport { fit, physical: None })?;
        }
        "algebraic" => {
            let n: usize = cfg.require("fit", "n")?;
            let s = load(cfg, "input", n)?;
            let bounds: Vec<f64> = cfg.list("fit", "window")?;
            if bounds.len() != 2 {
                return Err(cfg.invalid("fit", "window", "expected `lo, hi`").into());
            }
            let fit = fitkit::fit_algebraic(&s, (bounds[0], bounds[1]))?;
            ctx.report("fit_algebraic", &FitReport { fit, physical: None })?;
        }
        "rates" => {
            let n: usize = cfg.require("fit", "n")?;
            let loc = load(cfg, "localized", n)?;
            let dif = load(cfg, "diffusive", n)?;
            let model = match cfg.get("fit", "model").unwrap_or("gate-based-serial") {
                "gate-based-serial" => RateModel::GateBasedSerial { cnots_per_step: cfg.optional("fit", "cnots_per_step", fitkit::REFERENCE_CNOTS_PER_STEP)? },
                "lindblad-sim" => RateModel::LindbladSim {
                    localized: sim_params(cfg, n, "k_localized")?,
                    diffusive: sim_params(cfg, n, "k_diffusive")?,
                    mode: match cfg.get("fit", "mode").unwrap_or("alternating-pairs") {
                        "alternating-pairs" => DecayMode::AlternatingPairs,
                        "continuous-all-qubits" | "continuous" => DecayMode::ContinuousAllQubits,
                        other => return Err(cfg.invalid("fit", "mode", format!("unknown mode `{other}`")).into()),
                    },
                },
                "kraus-sim" => RateModel::KrausSim {
                    localized: sim_params(cfg, n, "k_localized")?,
                    diffusive: sim_params(cfg, n, "k_diffusive")?,
                    t_step: cfg.optional("fit", "t_step", REFERENCE_T_STEP)?,
                    topology: topology(cfg, "fit")?,
                },
                other => return Err(cfg.invalid("fit", "model", format!("unknown model `{other}`")).into()),
            };
            let fit = fitkit::fit_rates(&loc, &dif, &model)?;
            let t_step: f64 = cfg.optional("fit", "t_step", REFERENCE_T_STEP)?;
            let (nu1, nu2) = (fit.params["nu1"], fit.params["nu2"]);
            let physical = fitkit::rates_to_physical(nu1, nu2, t_step).ok().map(|(t1, t2)| PhysicalTimes { t_step_s: t_step, t1_s: t1, t2_s: t2 });
            ctx.report("fit_rates", &FitReport { fit, physical })?;
        }
        "cnot-error" => {
            let n: usize = cfg.require("fit", "n")?;
            let f0: f64 = cfg.require("fit", "f0")?;
            let f1: f64 = cfg.require("fit", "f1")?;
            let m: f64 = cfg.optional("fit", "m_cnot", 2.0 * fitkit::REFERENCE_CNOTS_PER_STEP)?;
            let eps = fitkit::extract_cnot_error(f0, f1, n, m).map_err(|e| cfg.invalid("fit", "f1", e.to_string()))?;
            let inputs = [("n", n as f64), ("f0", f0), ("f1", f1), ("m_cnot", m)].into_iter().collect();
            ctx.report("fit_cnot_error", &ScalarReport { quantity: "error_per_cnot", value: eps, inputs })?;
        }
        other => return Err(cfg.invalid("fit", "kind", format!("unknown fit kind `{other}`")).into()),
    }
    Ok(())
}

fn sim_params(cfg: &RawConfig, n: usize, key: &str) -> Result<QsmParams, CliError> {
    let k: f64 = cfg.require("fit", key)?;
    let l: u32 = cfg.optional("params", "L", 1)?;
    QsmParams::new(n, l, k).map_err(|e| cfg.invalid("fit", key, e.to_string()).into())
}
