//! `losses.csv` and `bler.csv`.
//!
//! Floats are written with 17 significant digits (`{:.16e}`) so reading a
//! file back reproduces the in-memory values bit for bit. Absent values
//! (generator/discriminator columns of non-adversarial schemes) are empty
//! fields.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ragan_core::training::EpochRecord;

pub const LOSSES_HEADER: [&str; 12] = [
    "epoch",
    "loss_hat_r",
    "loss_hat_t",
    "loss_tilde_r",
    "loss_tilde_t",
    "loss_hat_g",
    "loss_hat_d",
    "penalty_r",
    "penalty_t",
    "penalty_g",
    "penalty_d",
    "bler",
];

pub const BLER_HEADER: [&str; 5] = ["ebn0_db", "bler", "trials", "scheme", "seed"];

#[derive(Clone, Debug, PartialEq)]
pub struct BlerPoint {
    pub ebn0_db: f64,
    pub bler: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlerCurve {
    pub scheme: String,
    pub seed: u64,
    pub points: Vec<BlerPoint>,
}

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::new(io::ErrorKind::InvalidData, format!("{other:?}")),
    }
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Writes rows to a sibling temp file, then renames it into place.
fn write_atomic(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> io::Result<()> {
    let tmp = path.with_extension("csv.partial");
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(&tmp)
            .map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)
}

pub fn losses_rows(records: &[EpochRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                fmt_float(r.loss_hat_r),
                fmt_float(r.loss_hat_t),
                fmt_float(r.loss_tilde_r),
                fmt_float(r.loss_tilde_t),
                fmt_opt(r.loss_hat_g),
                fmt_opt(r.loss_hat_d),
                fmt_float(r.penalty_r),
                fmt_float(r.penalty_t),
                fmt_opt(r.penalty_g),
                fmt_opt(r.penalty_d),
                fmt_float(r.bler),
            ]
        })
        .collect()
}

pub fn write_losses(path: &Path, records: &[EpochRecord]) -> io::Result<()> {
    write_atomic(path, &LOSSES_HEADER, losses_rows(records))
}

/// Rows are sorted ascending by Eb/N0.
pub fn write_bler(path: &Path, curve: &BlerCurve) -> io::Result<()> {
    let mut points = curve.points.clone();
    points.sort_by(|a, b| a.ebn0_db.total_cmp(&b.ebn0_db));
    let rows = points
        .iter()
        .map(|p| {
            vec![
                fmt_float(p.ebn0_db),
                fmt_float(p.bler),
                p.trials.to_string(),
                curve.scheme.clone(),
                curve.seed.to_string(),
            ]
        })
        .collect();
    write_atomic(path, &BLER_HEADER, rows)
}

fn open(path: &Path, header: &[&str]) -> io::Result<csv::Reader<fs::File>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let found: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if found != header {
        return Err(bad(format!("{}: unexpected header {found:?}", path.display())));
    }
    Ok(r)
}

fn float(field: &str) -> io::Result<f64> {
    field.parse().map_err(|_| bad(format!("not a number: {field:?}")))
}

fn opt_float(field: &str) -> io::Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        float(field).map(Some)
    }
}

pub fn read_losses(path: &Path) -> io::Result<Vec<EpochRecord>> {
    let mut out = Vec::new();
    for rec in open(path, &LOSSES_HEADER)?.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| float(&rec[i]);
        let o = |i: usize| opt_float(&rec[i]);
        out.push(EpochRecord {
            epoch: rec[0].parse().map_err(|_| bad("bad epoch"))?,
            loss_hat_r: f(1)?,
            loss_hat_t: f(2)?,
            loss_tilde_r: f(3)?,
            loss_tilde_t: f(4)?,
            loss_hat_g: o(5)?,
            loss_hat_d: o(6)?,
            penalty_r: f(7)?,
            penalty_t: f(8)?,
            penalty_g: o(9)?,
            penalty_d: o(10)?,
            bler: f(11)?,
        });
    }
    Ok(out)
}

pub fn read_bler(path: &Path) -> io::Result<BlerCurve> {
    let mut curve = BlerCurve {
        scheme: String::new(),
        seed: 0,
        points: Vec::new(),
    };
    for rec in open(path, &BLER_HEADER)?.records() {
        let rec = rec.map_err(csv_err)?;
        curve.points.push(BlerPoint {
            ebn0_db: float(&rec[0])?,
            bler: float(&rec[1])?,
            trials: rec[2].parse().map_err(|_| bad("bad trials"))?,
        });
        curve.scheme = rec[3].to_string();
        curve.seed = rec[4].parse().map_err(|_| bad("bad seed"))?;
    }
    Ok(curve)
}

pub fn losses_path(dir: &Path) -> PathBuf {
    dir.join("losses.csv")
}

pub fn bler_path(dir: &Path) -> PathBuf {
    dir.join("bler.csv")
}
