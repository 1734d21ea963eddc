//! CSV and JSON file formats.
//!
//! Reals are written with Rust's shortest round-trip formatting, so reading a
//! file back reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use switchstrat_core::diagnostics::ParamSummary;
use switchstrat_core::km::KmCurve;
use switchstrat_core::ppc::PppvReport;
use switchstrat_core::sampler::{ChainDraws, Draw, Draws, Snapshot};
use switchstrat_core::trial::LatentTruth;
use switchstrat_core::{Arm, Dataset, Param, PatientRecord, SwitchStatus, Theta};

use crate::error::{AppError, DataError, Result};

pub const DATASET_HEADER: [&str; 7] = ["id", "z", "c", "s_tilde", "s_event", "y_tilde", "y_event"];
pub const TRUTH_HEADER: [&str; 4] = ["id", "s0", "y0", "y1"];
pub const CURVE_HEADER: [&str; 7] = ["estimand", "s", "y", "kappa", "q025", "median", "q975"];
pub const KM_HEADER: [&str; 4] = ["t", "survival", "at_risk", "events"];

fn real(x: f64) -> String {
    format!("{x}")
}

fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Creates `path` (and its parent directories) and fills it through `fill`.
pub fn write_file(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = BufWriter::new(file);
    fill(&mut w).and_then(|_| w.flush()).map_err(|e| AppError::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| AppError::io(path, e))?;
    Ok(s)
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> std::result::Result<(), DataError> {
    if found.iter().map(str::trim).eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(DataError::Header {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        })
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes())
}

/// Parses a trial CSV. Rows keep their order. A treated unit's `s_tilde` is
/// ignored when `s_event` is 0; a control's may be left empty when no switch
/// was observed and is then taken to be `c`.
pub fn parse_dataset(text: &str, c_max: f64) -> std::result::Result<Dataset, DataError> {
    let mut rdr = reader(text);
    check_header(rdr.headers().map_err(|e| DataError::Other(e.to_string()))?, &DATASET_HEADER)?;
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| DataError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| DataError::MalformedRow { line, reason };
        if row.len() != DATASET_HEADER.len() {
            return Err(bad(format!("expected 7 fields, found {}", row.len())));
        }
        let field = |i: usize| row[i].trim();
        let num = |i: usize| -> std::result::Result<f64, DataError> {
            field(i).parse::<f64>().map_err(|e| bad(format!("{}: {e}", DATASET_HEADER[i])))
        };
        let bit = |i: usize| -> std::result::Result<bool, DataError> {
            match field(i) {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(bad(format!("{} must be 0 or 1, found `{other}`", DATASET_HEADER[i]))),
            }
        };
        let id: u64 = field(0).parse().map_err(|e| bad(format!("id: {e}")))?;
        let arm = match field(1) {
            "0" => Arm::Control,
            "1" => Arm::Treated,
            other => return Err(bad(format!("z must be 0 or 1, found `{other}`"))),
        };
        let c = num(2)?;
        let s_event = bit(4)?;
        let y_tilde = num(5)?;
        let y_event = bit(6)?;
        let s_tilde = match (arm, field(3).is_empty()) {
            (Arm::Treated, _) if s_event => {
                return Err(DataError::InvariantViolation {
                    id,
                    description: "treated unit cannot have an observed switch".into(),
                })
            }
            (Arm::Treated, _) => None,
            (Arm::Control, true) if s_event => return Err(bad("s_tilde is required when s_event = 1".into())),
            (Arm::Control, true) => Some(c),
            (Arm::Control, false) => Some(num(3)?),
        };
        let rec = PatientRecord { id, arm, c, s_tilde, s_event, y_tilde, y_event };
        rec.validate()?;
        records.push(rec);
    }
    Ok(Dataset::new(records, c_max)?)
}

/// Reads a trial CSV from disk. Without `c_max` the largest censoring time is used.
pub fn read_dataset(path: &Path, c_max: Option<f64>) -> Result<Dataset> {
    let text = read_to_string(path)?;
    let data_err = |source| AppError::Data { path: path.to_path_buf(), source };
    let c_max = match c_max {
        Some(v) => v,
        None => {
            // A first pass for the bound only; rows are validated below.
            let mut rdr = reader(&text);
            let mut m: f64 = 0.0;
            for row in rdr.records().flatten() {
                if let Some(c) = row.get(2).and_then(|s| s.trim().parse::<f64>().ok()) {
                    m = m.max(c);
                }
            }
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    parse_dataset(&text, c_max).map_err(data_err)
}

pub fn write_dataset(w: &mut dyn Write, data: &Dataset) -> std::io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(DATASET_HEADER).map_err(csv_err)?;
    for r in data.records() {
        out.write_record([
            r.id.to_string(),
            r.arm.z().to_string(),
            real(r.c),
            opt_real(r.s_tilde),
            flag(r.s_event).into(),
            real(r.y_tilde),
            flag(r.y_event).into(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_truth(w: &mut dyn Write, truth: &[LatentTruth]) -> std::io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(TRUTH_HEADER).map_err(csv_err)?;
    for t in truth {
        out.write_record([t.id.to_string(), opt_real(t.s0.time()), real(t.y0), real(t.y1)]).map_err(csv_err)?;
    }
    out.flush()
}

pub fn parse_truth(text: &str) -> std::result::Result<Vec<LatentTruth>, DataError> {
    let mut rdr = reader(text);
    check_header(rdr.headers().map_err(|e| DataError::Other(e.to_string()))?, &TRUTH_HEADER)?;
    rdr.records()
        .map(|row| {
            let row = row.map_err(|e| DataError::Other(e.to_string()))?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |reason: String| DataError::MalformedRow { line, reason };
            let num = |i: usize| row.get(i).unwrap_or("").trim().parse::<f64>().map_err(|e| bad(format!("{}: {e}", TRUTH_HEADER[i])));
            let s0 = match row.get(1).unwrap_or("").trim() {
                "" => SwitchStatus::NonSwitcher,
                _ => SwitchStatus::SwitchAt(num(1)?),
            };
            Ok(LatentTruth {
                id: row.get(0).unwrap_or("").trim().parse().map_err(|e| bad(format!("id: {e}")))?,
                s0,
                y0: num(2)?,
                y1: num(3)?,
            })
        })
        .collect()
}

pub fn draws_header() -> Vec<&'static str> {
    let mut h = vec!["chain", "iter"];
    h.extend(Param::ALL.iter().map(|p| p.name()));
    h.extend(Snapshot::NAMES);
    h
}

pub fn write_draws(w: &mut dyn Write, draws: &Draws) -> std::io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(draws_header()).map_err(csv_err)?;
    for c in &draws.chains {
        for d in &c.draws {
            let mut row = vec![c.chain.to_string(), d.iter.to_string()];
            row.extend(d.theta.values().iter().map(|&v| real(v)));
            row.extend(d.snapshot.values().iter().map(|&v| real(v)));
            out.write_record(&row).map_err(csv_err)?;
        }
    }
    out.flush()
}

/// Reads a draws file back; acceptance counters are not part of the format.
pub fn parse_draws(text: &str, kappa: f64) -> std::result::Result<Draws, DataError> {
    let mut rdr = reader(text);
    let header = draws_header();
    check_header(rdr.headers().map_err(|e| DataError::Other(e.to_string()))?, &header)?;
    let mut chains: Vec<ChainDraws> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| DataError::Other(e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| DataError::MalformedRow { line, reason };
        let int = |i: usize| row[i].trim().parse::<usize>().map_err(|e| bad(format!("{}: {e}", header[i])));
        let (chain, iter) = (int(0)?, int(1)?);
        let mut values = [0.0; 12];
        for (k, v) in values.iter_mut().enumerate() {
            *v = row[2 + k].trim().parse().map_err(|e| bad(format!("{}: {e}", header[2 + k])))?;
        }
        let theta = Theta::from_values(values, kappa);
        let draw = Draw { iter, theta, snapshot: Snapshot::of(&theta) };
        match chains.last_mut() {
            Some(c) if c.chain == chain => c.draws.push(draw),
            _ => chains.push(ChainDraws { chain, draws: vec![draw], acceptance: Default::default(), scales: [f64::NAN; 11] }),
        }
    }
    Ok(Draws { kappa, chains })
}

pub fn read_draws(path: &Path, kappa: f64) -> Result<Draws> {
    parse_draws(&read_to_string(path)?, kappa).map_err(|source| AppError::Data { path: path.to_path_buf(), source })
}

/// One row of a curves file.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub estimand: String,
    pub s: Option<f64>,
    pub y: Option<f64>,
    /// Empty for the intention-to-treat model, which has no κ.
    pub kappa: Option<f64>,
    /// `None` when every draw left the value undefined.
    pub q025: Option<f64>,
    pub median: Option<f64>,
    pub q975: Option<f64>,
}

pub fn write_curves(w: &mut dyn Write, rows: &[CurveRow]) -> std::io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(CURVE_HEADER).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.estimand.clone(),
            opt_real(r.s),
            opt_real(r.y),
            opt_real(r.kappa),
            opt_real(r.q025),
            opt_real(r.median),
            opt_real(r.q975),
        ])
        .map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_km(w: &mut dyn Write, curve: &KmCurve) -> std::io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(KM_HEADER).map_err(csv_err)?;
    for i in 0..curve.times().len() {
        out.write_record([
            real(curve.times()[i]),
            real(curve.survival()[i]),
            curve.at_risk()[i].to_string(),
            curve.events()[i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_param_table(w: &mut dyn Write, table: &[(Param, ParamSummary)]) -> std::io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["param", "mean", "sd", "q025", "q25", "q50", "q75", "q975", "rhat"]).map_err(csv_err)?;
    for (p, s) in table {
        out.write_record([
            p.name().to_string(),
            real(s.mean),
            real(s.sd),
            real(s.q025),
            real(s.q25),
            real(s.q50),
            real(s.q75),
            real(s.q975),
            opt_real(s.rhat),
        ])
        .map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_pppv_rows(w: &mut dyn Write, report: &PppvReport) -> std::io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["discrepancy", "group", "pppv", "n_used", "n_excluded"]).map_err(csv_err)?;
    for r in &report.rows {
        out.write_record([
            r.discrepancy.clone(),
            r.group.clone(),
            opt_real(r.pppv),
            r.n_used.to_string(),
            r.n_excluded.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_pppv_km(w: &mut dyn Write, report: &PppvReport) -> std::io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["t", "group", "pppv"]).map_err(csv_err)?;
    for (group, curve) in &report.km {
        for (t, p) in report.t_grid.iter().zip(curve) {
            out.write_record([real(*t), group.clone(), real(*p)]).map_err(csv_err)?;
        }
    }
    out.flush()
}

pub fn write_json<T: serde::Serialize>(w: &mut dyn Write, value: &T) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
    w.write_all(b"\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contract_rows() {
        let head = "id,z,c,s_tilde,s_event,y_tilde,y_event\n";
        let ds = parse_dataset(&format!("{head}1,0,3.0,1.24,1,2.10,1\n2,1,2.5,,0,2.5,0\n"), 3.0).unwrap();
        let r = ds.records();
        assert_eq!((r[0].arm, r[0].s_tilde, r[0].s_event, r[0].y_tilde), (Arm::Control, Some(1.24), true, 2.10));
        assert_eq!((r[1].arm, r[1].s_tilde, r[1].y_event), (Arm::Treated, None, false));
        let err = parse_dataset(&format!("{head}3,1,2.5,1.0,1,2.0,1\n"), 3.0).unwrap_err();
        assert!(matches!(err, DataError::InvariantViolation { id: 3, .. }), "{err}");
        let err = parse_dataset(&format!("{head}1,0,3.0,1.24,1,2.10,1\n4,0,2.0,2.0,0,x,1\n"), 3.0).unwrap_err();
        assert!(matches!(err, DataError::MalformedRow { line: 3, .. }), "{err}");
        let err = parse_dataset(&format!("{head}5,0,2.0,2.0,0,2.5,1\n"), 3.0).unwrap_err();
        assert!(matches!(err, DataError::InvariantViolation { id: 5, .. }));
        assert!(matches!(parse_dataset("a,b\n", 3.0), Err(DataError::Header { .. })));
    }
}
