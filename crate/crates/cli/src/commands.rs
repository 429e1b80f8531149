use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use augsync::cases;
use augsync::detectability::{
    assess_detectability, check_nondegeneracy, verify_lemma1, DetectabilityVerdict, NonDegeneracyOptions,
    NonDegeneracyReport,
};
use augsync::equilibrium::{
    parameter_grid, solve_equilibrium, tangent_plane_field, trace_continuum, EquilibriumPoint, NewtonOptions, Pin,
};
use augsync::io::{
    build_system, parse_case, parse_case_str, parse_devices, parse_devices_str, parse_matrix_str, read_matrix,
    read_state, read_trajectory, write_matrix, write_state, write_trajectory_string,
};
use augsync::model::{DeviceRegistry, PowerSystem, SystemState};
use augsync::roa::{
    certify_type1, fit_p, integrator_relaxation, krasovskii_value, sample_box, theorem4_verdict, CombinedVerdict,
    KrasovskiiV, RoaCertificate, RoaVerdict, SamplerConfig,
};
use augsync::simulate::{check_property1, check_property2, integrate, DomainBox, EquilibriumProbe, Property1Report};
use augsync::Error;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::RunConfig;
use crate::report::{emit, render, Inputs, NamedState, Report, SCHEMA_VERSION};
use crate::{Cli, Command, RoaAction};

/// 1 for analysis outcomes, 2 for bad input.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NewtonDivergence { .. }
                | Error::ContinuationDiverged { .. }
                | Error::RankDeficientWithoutPin { .. }
                | Error::Infeasible { .. }
                | Error::SingularAlgebraicJacobian { .. }
                | Error::RankDeficiency { .. }
                | Error::ClaimUnavailable(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

struct Ctx {
    system: PowerSystem,
    cfg: RunConfig,
    inputs: Inputs,
    out: Option<PathBuf>,
    seed: u64,
}

impl Ctx {
    fn report<T: Serialize>(&self, command: &str, result: T) -> Result<()> {
        let r = Report {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            inputs: self.inputs.clone(),
            seed: self.seed,
            result,
        };
        emit(&render(&r)?, self.out.as_deref().or(self.cfg.outputs.report.as_deref()))
    }

    fn csv(&self, text: &str) -> Result<()> {
        emit(text, self.out.as_deref().or(self.cfg.outputs.csv.as_deref()))
    }

    fn domain(&self) -> DomainBox {
        self.cfg.domain.clone().unwrap_or_else(|| DomainBox::default_for(&self.system))
    }

    fn sampler(&self) -> SamplerConfig {
        SamplerConfig { seed: self.seed, domain: Some(self.domain()), ..self.cfg.sampler.clone() }
    }

    fn named(&self, s: &SystemState) -> NamedState {
        let (theta, v) = self.system.network().voltages(s.z.as_slice());
        NamedState { names: self.system.state_names(), x: s.x.iter().copied().collect(), theta, v }
    }
}

fn load(cli: &Cli) -> Result<Ctx> {
    let g = &cli.global;
    let mut cfg = RunConfig::load(g.config.as_deref())?;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring threads")?;
    }
    let case = match &g.case {
        Some(p) => parse_case(p)?,
        None => parse_case_str(cases::CASE9)?,
    };
    let devices = match &g.devices {
        Some(p) => parse_devices(p)?,
        None => parse_devices_str(cases::NINE_BUS_DEVICES)?,
    };
    let system = build_system(&case, &devices, &DeviceRegistry::builtin())?;
    if let Some(d) = &cfg.domain {
        d.validate(&system)?;
    }
    let seed = g.seed.unwrap_or(cfg.sampler.seed);
    cfg.sampler.seed = seed;
    let show = |p: &Option<PathBuf>, bundled: &str| p.as_ref().map_or(bundled.to_string(), |p| p.display().to_string());
    let inputs = Inputs { case: show(&g.case, "bundled:case9"), devices: show(&g.devices, "bundled:nine_bus_devices") };
    Ok(Ctx { system, cfg, inputs, out: g.out.clone(), seed })
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let ctx = load(&cli)?;
    match cli.command {
        Command::Equilibrium { pin, state_out } => equilibrium(&ctx, pin.as_deref(), state_out.as_deref()),
        Command::Continuum { param, range } => continuum(&ctx, &param, &range),
        Command::Simulate { from, t_end, p, report } => simulate(&ctx, &from, t_end, p.as_deref(), report.as_deref()),
        Command::Detectability { trajectory } => detectability(&ctx, trajectory.as_deref()),
        Command::Roa { action: RoaAction::FitP { p_out, pin } } => fit(&ctx, p_out.as_deref(), pin.as_deref()),
        Command::Roa { action: RoaAction::Certify { p, level, pin } } => {
            certify(&ctx, p.as_deref(), level, pin.as_deref())
        }
        Command::Verdict { p, level, pin } => verdict(&ctx, p.as_deref(), level, pin.as_deref()),
        Command::Field { plane, grid, extent, pin } => field(&ctx, &plane, grid, extent, pin.as_deref()),
    }
}

/// Parses `name=value`.
pub fn parse_pin(system: &PowerSystem, text: &str) -> Result<Pin> {
    let (name, value) = text.split_once('=').ok_or_else(|| anyhow!("pin must look like name=value, got `{text}`"))?;
    let value: f64 = value.trim().parse().with_context(|| format!("pin value `{value}`"))?;
    Ok(Pin::by_name(system, name.trim(), value)?)
}

/// Equilibrium from flat start. Without an explicit pin, a system with an integrator state
/// gets `zeta=0`, since its equilibria are not isolated.
fn reference_equilibrium(system: &PowerSystem, pin: Option<&str>) -> Result<EquilibriumPoint> {
    let pin = match pin {
        Some(p) => Some(parse_pin(system, p)?),
        None => system.find_state("zeta").map(|index| Pin { index, value: 0.0 }),
    };
    Ok(solve_equilibrium(system, &system.flat_start(), pin, NewtonOptions::default())?)
}

/// Matrix file, or one of the bundled matrices.
pub fn load_p(spec: &str) -> Result<DMatrix<f64>> {
    Ok(match spec {
        "bundled:fitted" => parse_matrix_str(cases::P_FITTED)?,
        "bundled:reference" => parse_matrix_str(cases::P_REFERENCE)?,
        path => read_matrix(path)?,
    })
}

/// Short column names: the device's own state name, with the bus id appended when the name
/// is a single letter or occurs on more than one device (zeta, omega1, delta2, Eq_prime, P3).
pub fn short_names(system: &PowerSystem) -> Vec<String> {
    let mut count: HashMap<&str, usize> = HashMap::new();
    for d in system.devices() {
        for s in d.device.state_names() {
            *count.entry(s).or_default() += 1;
        }
    }
    system
        .devices()
        .iter()
        .flat_map(|d| {
            let count = &count;
            d.device.state_names().into_iter().map(move |s| {
                if s.len() == 1 || count[s] > 1 {
                    format!("{s}{}", d.bus)
                } else {
                    s.to_string()
                }
            })
        })
        .collect()
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct EquilibriumResult {
    state: NamedState,
    f_residual: f64,
    g_residual: f64,
    spectrum: Vec<(f64, f64)>,
}

fn equilibrium(ctx: &Ctx, pin: Option<&str>, state_out: Option<&Path>) -> Result<ExitCode> {
    let pin = pin.map(|p| parse_pin(&ctx.system, p)).transpose()?;
    let eq = solve_equilibrium(&ctx.system, &ctx.system.flat_start(), pin, NewtonOptions::default())?;
    if let Some(path) = state_out {
        write_state(path, &ctx.system, &eq.state)?;
    }
    ctx.report(
        "equilibrium",
        EquilibriumResult {
            state: ctx.named(&eq.state),
            f_residual: eq.f_residual,
            g_residual: eq.g_residual,
            spectrum: eq.spectrum.clone(),
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn parse_range(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        bail!("range must look like lo:hi:step, got `{text}`");
    }
    let p = |s: &str| s.trim().parse::<f64>().with_context(|| format!("range entry `{s}`"));
    Ok((p(parts[0])?, p(parts[1])?, p(parts[2])?))
}

fn continuum(ctx: &Ctx, param: &str, range: &str) -> Result<ExitCode> {
    let (lo, hi, step) = parse_range(range)?;
    let values = parameter_grid(lo, hi, step)?;
    let sys = &ctx.system;
    let index = sys.find_state(param).ok_or_else(|| anyhow!("no state named `{param}`"))?;
    let mid = values[values.len() / 2];
    let start = solve_equilibrium(sys, &sys.flat_start(), Some(Pin { index, value: mid }), NewtonOptions::default())?;
    let trace = trace_continuum(sys, &start, param, &values)?;
    let names = short_names(sys);
    // speeds are zero on every equilibrium and are left out
    let cols: Vec<usize> = (0..sys.n())
        .filter(|&i| i != index && !sys.state_names()[i].ends_with(".omega"))
        .collect();
    let mut header = vec![names[index].clone()];
    header.extend(cols.iter().map(|&i| names[i].clone()));
    header.push("mean_theta".into());
    header.push("mean_V".into());
    let mut text = header.join(",");
    text.push('\n');
    for s in &trace.samples {
        let mut row = vec![num(s.parameter)];
        row.extend(cols.iter().map(|&i| num(s.point.state.x[i])));
        row.push(num(s.mean_theta));
        row.push(num(s.mean_v));
        text.push_str(&row.join(","));
        text.push('\n');
    }
    ctx.csv(&text)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SimulationSummary {
    termination: String,
    steps: usize,
    property1: Property1Report,
    property2_holds: bool,
    trailing_max_f: f64,
    equilibrium_distance: Option<f64>,
    lemma1_max_residual: Option<f64>,
}

fn simulate(ctx: &Ctx, from: &Path, t_end: Option<f64>, p: Option<&str>, report: Option<&Path>) -> Result<ExitCode> {
    let sys = &ctx.system;
    let initial = read_state(from, sys)?;
    let domain = ctx.domain();
    if !domain.contains(&initial) {
        return Err(Error::InvalidParameter {
            kind: "initial state".into(),
            name: "from".into(),
            reason: "initial state lies outside the domain box".into(),
        }
        .into());
    }
    let mut icfg = ctx.cfg.integrator.clone();
    if let Some(t) = t_end {
        icfg.t_end = t;
    }
    icfg.g_tol = ctx.cfg.thresholds.g;
    let mut traj = integrate(sys, &initial, &icfg, &domain)?;
    if let Some(spec) = p {
        let pm = load_p(spec)?;
        traj.attach_v(|s| krasovskii_value(sys, &pm, s));
    }
    ctx.csv(&write_trajectory_string(sys, &traj)?)?;
    if let Some(path) = report {
        let t = &ctx.cfg.thresholds;
        let property1 = check_property1(&traj, t.zdot, None, Some(&domain))?;
        let p2 = check_property2(&traj, sys, t.f, EquilibriumProbe { window: None, dist_tol: t.equilibrium_distance })?;
        let summary = SimulationSummary {
            termination: traj.termination.as_str().into(),
            steps: traj.len(),
            property1,
            property2_holds: p2.holds,
            trailing_max_f: p2.trailing_max_f,
            equilibrium_distance: p2.distance,
            lemma1_max_residual: verify_lemma1(sys, &traj).ok(),
        };
        let r = Report {
            schema_version: SCHEMA_VERSION,
            command: "simulate".into(),
            inputs: ctx.inputs.clone(),
            seed: ctx.seed,
            result: summary,
        };
        emit(&render(&r)?, Some(path))?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct DetectabilityResult {
    detectability: DetectabilityVerdict,
    nondegeneracy: Option<NonDegeneracyReport>,
    lemma1_max_residual: Option<f64>,
}

fn detectability(ctx: &Ctx, trajectory: Option<&Path>) -> Result<ExitCode> {
    let sys = &ctx.system;
    let detect = assess_detectability(sys)?;
    let (nondegeneracy, lemma1) = match trajectory {
        Some(path) => {
            let traj = read_trajectory(path, sys)?;
            let opts = NonDegeneracyOptions { rank_tol: ctx.cfg.thresholds.rank, ..NonDegeneracyOptions::default() };
            (Some(check_nondegeneracy(sys, &traj, opts)), verify_lemma1(sys, &traj).ok())
        }
        None => (None, None),
    };
    ctx.report(
        "detectability",
        DetectabilityResult { detectability: detect, nondegeneracy, lemma1_max_residual: lemma1 },
    )?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct FitReport {
    feasible: bool,
    objective: f64,
    iterations: usize,
    n_samples: usize,
    half_width: f64,
    p: Option<Vec<Vec<f64>>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn fit(ctx: &Ctx, p_out: Option<&Path>, pin: Option<&str>) -> Result<ExitCode> {
    let sys = &ctx.system;
    let fc = &ctx.cfg.fit;
    let center = reference_equilibrium(sys, pin)?;
    let sampler = SamplerConfig { n_samples: fc.samples, seed: fc.seed, ..ctx.sampler() };
    let samples = sample_box(sys, &center.state, &vec![fc.half_width; sys.n()], &sampler)?;
    let a = integrator_relaxation(sys);
    let (report, code) = match fit_p(sys, &samples, &a, fc.options) {
        Ok(r) => {
            if let Some(path) = p_out {
                write_matrix(path, &r.p)?;
            }
            let rep = FitReport {
                feasible: true,
                objective: r.objective,
                iterations: r.iterations,
                n_samples: samples.len(),
                half_width: fc.half_width,
                p: Some(rows(&r.p)),
            };
            (rep, ExitCode::SUCCESS)
        }
        Err(Error::Infeasible { iterations, best }) => {
            let rep = FitReport {
                feasible: false,
                objective: best,
                iterations,
                n_samples: samples.len(),
                half_width: fc.half_width,
                p: None,
            };
            (rep, ExitCode::from(1))
        }
        Err(e) => return Err(e.into()),
    };
    ctx.report("roa fit-p", report)?;
    Ok(code)
}

fn run_certificate(ctx: &Ctx, p: Option<&str>, level: Option<f64>, pin: Option<&str>) -> Result<RoaCertificate> {
    let sys = &ctx.system;
    let pm = load_p(p.unwrap_or(&ctx.cfg.roa.p))?;
    if pm.shape() != (sys.n(), sys.n()) {
        bail!(Error::Dimension(format!("P is {}x{}, system has n = {}", pm.nrows(), pm.ncols(), sys.n())));
    }
    let v = KrasovskiiV::new(pm, integrator_relaxation(sys))?;
    let reference = reference_equilibrium(sys, pin)?;
    Ok(certify_type1(sys, &v, level.unwrap_or(ctx.cfg.roa.level), &reference.state, &ctx.sampler())?)
}

fn certify(ctx: &Ctx, p: Option<&str>, level: Option<f64>, pin: Option<&str>) -> Result<ExitCode> {
    let cert = run_certificate(ctx, p, level, pin)?;
    let code = if cert.verdict == RoaVerdict::Refuted { ExitCode::from(1) } else { ExitCode::SUCCESS };
    ctx.report("roa certify", cert)?;
    Ok(code)
}

#[derive(Serialize)]
struct VerdictResult {
    certificate: RoaCertificate,
    detectability: DetectabilityVerdict,
    combined: Option<CombinedVerdict>,
    reason: Option<String>,
}

fn verdict(ctx: &Ctx, p: Option<&str>, level: Option<f64>, pin: Option<&str>) -> Result<ExitCode> {
    let certificate = run_certificate(ctx, p, level, pin)?;
    let detect = assess_detectability(&ctx.system)?;
    let (combined, reason) = match theorem4_verdict(&certificate, &detect) {
        Ok(c) => (Some(c), None),
        Err(e @ Error::ClaimUnavailable(_)) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let code = if combined.is_some() { ExitCode::SUCCESS } else { ExitCode::from(1) };
    ctx.report("verdict", VerdictResult { certificate, detectability: detect, combined, reason })?;
    Ok(code)
}

/// The 9-bus plane: s₁ = (1,0,1,0,1,1,1,1)/√6 and s₂ = (0,1,0,1,0,0,0,0)/√2.
pub fn nine_bus_plane() -> (DVector<f64>, DVector<f64>) {
    let s1 = DVector::from_column_slice(&[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0]) / 6f64.sqrt();
    let s2 = DVector::from_column_slice(&[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]) / 2f64.sqrt();
    (s1, s2)
}

fn field(ctx: &Ctx, plane: &str, grid: usize, extent: f64, pin: Option<&str>) -> Result<ExitCode> {
    if grid < 2 || !(extent > 0.0) {
        bail!(Error::InvalidParameter {
            kind: "field".into(),
            name: "grid".into(),
            reason: "need grid >= 2 and extent > 0".into(),
        });
    }
    let (s1, s2) = if plane == "s1,s2" {
        nine_bus_plane()
    } else {
        let m = read_matrix(plane)?;
        if m.nrows() != 2 {
            bail!(Error::Dimension(format!("plane file needs two rows, found {}", m.nrows())));
        }
        (m.row(0).transpose(), m.row(1).transpose())
    };
    let at = reference_equilibrium(&ctx.system, pin)?;
    let axis: Vec<f64> = (0..grid).map(|k| -extent + 2.0 * extent * k as f64 / (grid - 1) as f64).collect();
    let samples = tangent_plane_field(&ctx.system, &at, &s1, &s2, &axis, &axis)?;
    let mut text = String::from("a,b,f_s1,f_s2\n");
    for s in samples {
        let (fa, fb) = s.value.map_or((String::new(), String::new()), |(u, v)| (num(u), num(v)));
        text.push_str(&format!("{},{},{fa},{fb}\n", num(s.a), num(s.b)));
    }
    ctx.csv(&text)?;
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_bus_short_names() {
        let sys = cases::nine_bus();
        assert_eq!(short_names(&sys), ["zeta", "omega1", "delta1", "omega2", "delta2", "Eq_prime", "P3", "Q3"]);
    }

    #[test]
    fn plane_is_orthonormal() {
        let (s1, s2) = nine_bus_plane();
        assert!((s1.norm() - 1.0).abs() < 1e-15);
        assert!((s2.norm() - 1.0).abs() < 1e-15);
        assert_eq!(s1.dot(&s2), 0.0);
    }

    #[test]
    fn pin_syntax() {
        let sys = cases::nine_bus();
        let p = parse_pin(&sys, "zeta=0.05").unwrap();
        assert_eq!((p.index, p.value), (0, 0.05));
        assert!(parse_pin(&sys, "zeta").is_err());
        assert!(parse_pin(&sys, "nope=1").is_err());
    }

    #[test]
    fn range_syntax() {
        assert_eq!(parse_range("-0.1:0.1:0.01").unwrap(), (-0.1, 0.1, 0.01));
        assert!(parse_range("0:1").is_err());
    }

    #[test]
    fn input_errors_map_to_two() {
        let e: anyhow::Error = Error::Parse { line: 1, column: 1, message: "x".into() }.into();
        assert_eq!(exit_code_for(&e), 2);
        let e: anyhow::Error = Error::Infeasible { iterations: 1, best: 0.0 }.into();
        assert_eq!(exit_code_for(&e), 1);
        assert_eq!(exit_code_for(&anyhow!("plain")), 2);
    }
}
