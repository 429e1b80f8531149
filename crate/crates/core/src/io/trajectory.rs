//! Trajectory CSV.
//!
//! One row per sample: `t`, every x entry under its `kind.bus.state` name, `theta_<bus>` and
//! `V_<bus>` for every bus with a z slot, then `zdot_norm`, `f_norm`, an optional `V` column,
//! `det_sign` and `det_logabs`. A leading `# termination=<tag>` comment records why the run
//! stopped. A state file uses the same layout with a single row.

use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{PowerSystem, SystemState};
use crate::simulate::{IntegrationStats, Termination, Trajectory};

fn header(system: &PowerSystem, with_v: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(system.state_names());
    for bus in system.z_buses() {
        h.push(format!("theta_{bus}"));
        h.push(format!("V_{bus}"));
    }
    h.push("zdot_norm".into());
    h.push("f_norm".into());
    if with_v {
        h.push("V_value".into());
    }
    h.push("det_sign".into());
    h.push("det_logabs".into());
    h
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { line, column: 0, message: e.to_string() }
}

pub fn write_trajectory_string(system: &PowerSystem, traj: &Trajectory) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(system, traj.v_value.is_some())).map_err(csv_error)?;
    for k in 0..traj.len() {
        let s = &traj.states[k];
        let mut row = vec![num(traj.times[k])];
        row.extend(s.x.iter().chain(s.z.iter()).map(|v| num(*v)));
        row.push(num(traj.zdot_norm[k]));
        row.push(num(traj.f_norm[k]));
        if let Some(v) = &traj.v_value {
            row.push(num(v[k]));
        }
        row.push(num(traj.det_sign[k]));
        row.push(num(traj.det_logabs[k]));
        w.write_record(&row).map_err(csv_error)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?)
        .map_err(|e| Error::Io(e.to_string()))?;
    Ok(format!("# termination={}\n{body}", traj.termination.as_str()))
}

pub fn write_trajectory(path: impl AsRef<Path>, system: &PowerSystem, traj: &Trajectory) -> Result<()> {
    std::fs::write(path, write_trajectory_string(system, traj)?)?;
    Ok(())
}

pub fn read_trajectory_str(src: &str, system: &PowerSystem) -> Result<Trajectory> {
    let mut termination = Termination::ReachedTEnd;
    let mut skipped = 0;
    for line in src.lines() {
        let Some(rest) = line.strip_prefix('#') else { break };
        skipped += 1;
        if let Some(tag) = rest.trim().strip_prefix("termination=") {
            termination = Termination::parse(tag.trim()).ok_or_else(|| Error::Parse {
                line: skipped,
                column: 1,
                message: format!("unknown termination `{}`", tag.trim()),
            })?;
        }
    }
    let body: String = src.lines().skip(skipped).map(|l| format!("{l}\n")).collect();
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let cols: Vec<String> = r.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let with_v = cols.iter().any(|c| c == "V_value");
    let expected = header(system, with_v);
    if cols != expected {
        return Err(Error::Parse {
            line: skipped + 1,
            column: 1,
            message: format!("header does not match the system; expected {}", expected.join(",")),
        });
    }
    let (n, m) = (system.n(), system.m());
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        zdot_norm: Vec::new(),
        f_norm: Vec::new(),
        det_sign: Vec::new(),
        det_logabs: Vec::new(),
        v_value: with_v.then(Vec::new),
        termination,
        stats: IntegrationStats::default(),
    };
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = skipped + k + 2;
        let vals = rec
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.trim().parse::<f64>().map_err(|e| Error::Parse { line, column: c + 1, message: e.to_string() })
            })
            .collect::<Result<Vec<f64>>>()?;
        traj.times.push(vals[0]);
        traj.states.push(SystemState::new(
            DVector::from_column_slice(&vals[1..1 + n]),
            DVector::from_column_slice(&vals[1 + n..1 + n + m]),
        ));
        let mut c = 1 + n + m;
        traj.zdot_norm.push(vals[c]);
        traj.f_norm.push(vals[c + 1]);
        c += 2;
        if let Some(v) = traj.v_value.as_mut() {
            v.push(vals[c]);
            c += 1;
        }
        traj.det_sign.push(vals[c]);
        traj.det_logabs.push(vals[c + 1]);
    }
    Ok(traj)
}

pub fn read_trajectory(path: impl AsRef<Path>, system: &PowerSystem) -> Result<Trajectory> {
    read_trajectory_str(&std::fs::read_to_string(path)?, system)
}

/// Writes one state in trajectory layout at t = 0.
pub fn write_state(path: impl AsRef<Path>, system: &PowerSystem, state: &SystemState) -> Result<()> {
    let traj = Trajectory::constant(system, state, &[0.0])?;
    write_trajectory(path, system, &traj)
}

/// First row of a trajectory-layout file.
pub fn read_state(path: impl AsRef<Path>, system: &PowerSystem) -> Result<SystemState> {
    read_trajectory(path, system)?
        .states
        .into_iter()
        .next()
        .ok_or_else(|| Error::Parse { line: 2, column: 1, message: "state file has no rows".into() })
}
