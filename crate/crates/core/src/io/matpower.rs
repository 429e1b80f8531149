//! Reader for the subset of the MATPOWER case format used here.
//!
//! Grammar (comments start at `%` and run to end of line):
//!
//! ```text
//! case    := { stmt }
//! stmt    := "function" ... EOL
//!          | "mpc." name "=" scalar ";"
//!          | "mpc." name "=" "[" { row } "]" ";"
//! row     := number { [","] number } (";" | EOL)
//! ```
//!
//! Only `baseMVA`, `bus`, `branch` and `gen` are interpreted. Other matrices are skipped.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use log::warn;

use crate::error::{Error, Result};
use crate::model::device::{ConstPqLoad, Device};
use crate::model::network::{build_admittance, Branch, Bus, BusKind, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct CaseBus {
    pub id: usize,
    pub bus_type: u8,
    /// MW / MVAr as written in the file.
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub vm: f64,
    pub va_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseBranch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub ratio: f64,
    pub angle_deg: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseGen {
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub vg: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseFile {
    pub base_mva: f64,
    pub buses: Vec<CaseBus>,
    pub branches: Vec<CaseBranch>,
    pub gens: Vec<CaseGen>,
}

type Row = (usize, Vec<f64>);

enum Value {
    Scalar(f64),
    Matrix(Vec<Row>),
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn parse_number(tok: &str, line: usize, column: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Parse {
        line,
        column,
        message: format!("expected a number, found `{tok}`"),
    })
}

/// Splits `text` into numeric tokens with their 1-based columns. `offset` is the column of
/// the first character of `text`.
fn numbers(text: &str, line: usize, offset: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut start = None;
    let flush = |s: usize, e: usize, out: &mut Vec<f64>| -> Result<()> {
        out.push(parse_number(&text[s..e], line, offset + s)?);
        Ok(())
    };
    for (i, ch) in text.char_indices() {
        let sep = ch.is_whitespace() || ch == ',';
        match (start, sep) {
            (None, false) => start = Some(i),
            (Some(s), true) => {
                flush(s, i, &mut out)?;
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        flush(s, text.len(), &mut out)?;
    }
    Ok(out)
}

struct OpenMatrix {
    name: String,
    rows: Vec<Row>,
    cur: Vec<f64>,
    cur_line: usize,
}

impl OpenMatrix {
    /// Consumes one line of matrix body starting at column `col`. Returns true once `]` is seen.
    fn feed(&mut self, text: &str, line: usize, col: usize) -> Result<bool> {
        let (body, closed) = match text.find(']') {
            Some(p) => (&text[..p], true),
            None => (text, false),
        };
        let mut c = col;
        for seg in body.split_inclusive(';') {
            if self.cur.is_empty() {
                self.cur_line = line;
            }
            self.cur.extend(numbers(seg.trim_end_matches(';'), line, c)?);
            c += seg.len();
            if seg.ends_with(';') {
                self.end_row();
            }
        }
        // a newline also terminates a row
        self.end_row();
        Ok(closed)
    }

    fn end_row(&mut self) {
        if !self.cur.is_empty() {
            self.rows.push((self.cur_line, std::mem::take(&mut self.cur)));
        }
    }
}

fn parse_statements(src: &str) -> Result<BTreeMap<String, Value>> {
    let mut values = BTreeMap::new();
    let mut open: Option<OpenMatrix> = None;
    for (k, raw) in src.lines().enumerate() {
        let line_no = k + 1;
        let line = strip_comment(raw);
        if let Some(mut m) = open.take() {
            if m.feed(line, line_no, 1)? {
                values.insert(m.name, Value::Matrix(m.rows));
            } else {
                open = Some(m);
            }
            continue;
        }
        let t = line.trim();
        if t.is_empty() || t.starts_with("function") {
            continue;
        }
        let indent = line.len() - line.trim_start().len();
        let Some(rest) = t.strip_prefix("mpc.") else {
            return Err(Error::Parse {
                line: line_no,
                column: indent + 1,
                message: format!("unexpected statement `{t}`"),
            });
        };
        let Some(eq) = rest.find('=') else {
            return Err(Error::Parse { line: line_no, column: indent + 1, message: "expected `=`".into() });
        };
        let name = rest[..eq].trim().to_string();
        let after_eq = indent + 4 + eq + 1;
        let rhs_raw = &line[after_eq..];
        let rhs = rhs_raw.trim_start();
        let rhs_col = after_eq + (rhs_raw.len() - rhs.len()) + 1;
        if let Some(body) = rhs.strip_prefix('[') {
            let mut m = OpenMatrix { name, rows: Vec::new(), cur: Vec::new(), cur_line: line_no };
            if m.feed(body, line_no, rhs_col + 1)? {
                values.insert(m.name, Value::Matrix(m.rows));
            } else {
                open = Some(m);
            }
        } else {
            let v = rhs.trim_end().trim_end_matches(';').trim_end();
            if v.starts_with('\'') || v.starts_with('"') {
                continue;
            }
            values.insert(name, Value::Scalar(parse_number(v, line_no, rhs_col)?));
        }
    }
    if let Some(m) = open {
        return Err(Error::Parse {
            line: src.lines().count(),
            column: 1,
            message: format!("matrix `{}` is not closed", m.name),
        });
    }
    Ok(values)
}

fn matrix<'a>(values: &'a BTreeMap<String, Value>, name: &str, min_cols: usize) -> Result<&'a [Row]> {
    match values.get(name) {
        Some(Value::Matrix(rows)) => {
            for (line, r) in rows {
                if r.len() < min_cols {
                    return Err(Error::Parse {
                        line: *line,
                        column: 1,
                        message: format!("`{name}` row has {} columns, need at least {min_cols}", r.len()),
                    });
                }
            }
            Ok(rows)
        }
        Some(Value::Scalar(_)) => Err(Error::Parse { line: 0, column: 0, message: format!("`{name}` must be a matrix") }),
        None => Err(Error::MissingSection(name.into())),
    }
}

fn as_id(v: f64, line: usize, what: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::Parse { line, column: 1, message: format!("invalid {what} `{v}`") })
    }
}

pub fn parse_case_str(src: &str) -> Result<CaseFile> {
    let values = parse_statements(src)?;
    for name in values.keys() {
        if !matches!(name.as_str(), "baseMVA" | "bus" | "branch" | "gen" | "version" | "gencost" | "areas") {
            warn!("ignoring case section `{name}`");
        }
    }
    let bus_rows = matrix(&values, "bus", 9)?;
    let branch_rows = matrix(&values, "branch", 4)?;
    let base_mva = match values.get("baseMVA") {
        Some(Value::Scalar(v)) => *v,
        _ => return Err(Error::MissingSection("baseMVA".into())),
    };
    let buses = bus_rows
        .iter()
        .map(|(line, r)| {
            Ok(CaseBus {
                id: as_id(r[0], *line, "bus id")?,
                bus_type: r[1] as u8,
                pd: r[2],
                qd: r[3],
                gs: r[4],
                bs: r[5],
                vm: r[7],
                va_deg: r[8],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let branches = branch_rows
        .iter()
        .map(|(line, r)| {
            Ok(CaseBranch {
                from: as_id(r[0], *line, "bus id")?,
                to: as_id(r[1], *line, "bus id")?,
                r: r[2],
                x: r[3],
                b: r.get(4).copied().unwrap_or(0.0),
                ratio: r.get(8).copied().unwrap_or(0.0),
                angle_deg: r.get(9).copied().unwrap_or(0.0),
                in_service: r.get(10).copied().unwrap_or(1.0) != 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gens = match values.get("gen") {
        Some(_) => matrix(&values, "gen", 6)?
            .iter()
            .map(|(line, r)| {
                Ok(CaseGen {
                    bus: as_id(r[0], *line, "bus id")?,
                    pg: r[1],
                    qg: r[2],
                    vg: r[5],
                    in_service: r.get(7).copied().unwrap_or(1.0) != 0.0,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(CaseFile { base_mva, buses, branches, gens })
}

pub fn parse_case(path: impl AsRef<Path>) -> Result<CaseFile> {
    parse_case_str(&std::fs::read_to_string(path)?)
}

impl CaseFile {
    /// Builds the network in per unit on `base_mva`. Bus shunts enter the admittance diagonal.
    pub fn network(&self) -> Result<Network> {
        let mut buses: Vec<Bus> = self.buses.iter().map(|b| Bus { id: b.id, kind: BusKind::Passive }).collect();
        buses.sort_by_key(|b| b.id);
        let mut branches = Vec::new();
        for br in self.branches.iter().filter(|b| b.in_service) {
            if (br.ratio != 0.0 && br.ratio != 1.0) || br.angle_deg != 0.0 {
                return Err(Error::Structural(format!(
                    "branch {}-{}: off-nominal transformers are not supported",
                    br.from, br.to
                )));
            }
            branches.push(Branch::from_impedance(br.from, br.to, br.r, br.x, br.b));
        }
        let mut y = build_admittance(&branches, buses.len())?;
        for b in &self.buses {
            if b.gs != 0.0 || b.bs != 0.0 {
                y.add_shunt(b.id, b.gs / self.base_mva, b.bs / self.base_mva)?;
            }
        }
        Network::new(buses, branches, y)
    }

    /// Constant-PQ loads for every bus with nonzero demand, in per unit.
    pub fn loads(&self) -> Result<Vec<(usize, Arc<dyn Device>)>> {
        self.buses
            .iter()
            .filter(|b| b.pd != 0.0 || b.qd != 0.0)
            .map(|b| {
                let load: Arc<dyn Device> =
                    Arc::new(ConstPqLoad::new(b.pd / self.base_mva, b.qd / self.base_mva)?);
                Ok((b.id, load))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASE9: &str = include_str!("../../data/case9.m");

    #[test]
    fn bundled_case9_counts() {
        let c = parse_case_str(CASE9).unwrap();
        assert_eq!(c.buses.len(), 9);
        assert_eq!(c.branches.len(), 9);
        assert_eq!(c.gens.len(), 3);
        assert_eq!(c.base_mva, 100.0);
        assert_eq!(c.branches[7].x, 0.161);
    }

    #[test]
    fn empty_file_is_missing_sections() {
        assert!(matches!(parse_case_str(""), Err(Error::MissingSection(_))));
    }

    #[test]
    fn bad_number_reports_location() {
        let src = "mpc.baseMVA = 100;\nmpc.bus = [\n 1 3 0 0 0 0 1 1 0;\n 2 1 x0 0 0 0 1 1 0;\n];\nmpc.branch = [1 2 0 0.1];\n";
        match parse_case_str(src) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(column, 6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rows_without_semicolons() {
        let src = "mpc.baseMVA = 10;\nmpc.bus = [\n1 1 0 0 0 0 1 1 0\n2 1 5 1 0 0 1 1 0\n];\nmpc.branch = [1 2 0 0.1 0];\n";
        let c = parse_case_str(src).unwrap();
        assert_eq!(c.buses.len(), 2);
        assert_eq!(c.branches.len(), 1);
        let loads = c.loads().unwrap();
        assert_eq!(loads.len(), 1);
        assert_eq!(loads[0].0, 2);
    }

    #[test]
    fn unclosed_matrix() {
        assert!(matches!(
            parse_case_str("mpc.baseMVA = 1;\nmpc.bus = [\n1 1 0 0 0 0 1 1 0;\n"),
            Err(Error::Parse { .. })
        ));
    }
}
