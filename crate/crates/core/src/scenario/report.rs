use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::runner::{CompareRow, DsaRun, SeedRow, SweepRow};
use super::ScenarioError;
use crate::protocol::TRACE_HEADER;

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ScenarioError + '_ {
    move |e| ScenarioError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ScenarioError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| ScenarioError::Io {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn row_fields(r: &SweepRow) -> [String; 4] {
    [
        r.spectral_distance.to_string(),
        r.psr.to_string(),
        r.prr.to_string(),
        r.dropped_sensing.to_string(),
    ]
}

/// `spectral_distance_hz,psr,prr,dropped_sensing`, header only when empty.
pub fn write_rows<W: Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["spectral_distance_hz", "psr", "prr", "dropped_sensing"])?;
    for r in rows {
        w.write_record(row_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_seed_rows<W: Write>(rows: &[SeedRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seed",
        "pu_offset_hz",
        "spectral_distance_hz",
        "psr",
        "prr",
        "dropped_sensing",
    ])?;
    for r in rows {
        let [d, psr, prr, dropped] = row_fields(&r.row);
        w.write_record([r.seed.to_string(), r.pu_offset.to_string(), d, psr, prr, dropped])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_compare<W: Write>(rows: &[CompareRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["spectral_distance_hz", "static_psr", "dsa_psr", "improvement"])?;
    for r in rows {
        w.write_record([
            r.spectral_distance.to_string(),
            r.static_psr.to_string(),
            r.dsa_psr.to_string(),
            r.improvement().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Every rendezvous trace of a DSA sweep, prefixed with seed and PU offset.
pub fn write_dsa_traces<W: Write>(runs: &[DsaRun], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["seed", "pu_offset_hz"];
    header.extend(TRACE_HEADER);
    w.write_record(&header)?;
    for run in runs {
        let (seed, off) = (run.seed.to_string(), run.pu_offset.to_string());
        for rec in &run.trace {
            let mut fields = vec![seed.clone(), off.clone()];
            fields.extend(rec.fields());
            w.write_record(&fields)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes with `f` into `dir/name`, returning the path.
pub fn emit<F>(dir: &Path, name: &str, f: F) -> Result<PathBuf, ScenarioError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), csv::Error>,
{
    let path = dir.join(name);
    let mut out = create(&path)?;
    f(&mut out).map_err(csv_err(&path))?;
    out.flush().map_err(|e| ScenarioError::Io {
        path: path.clone(),
        message: e.to_string(),
    })?;
    Ok(path)
}

pub fn format_table(rows: &[SweepRow]) -> String {
    let mut s = String::from("distance_mhz     psr     prr  dropped\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:>12.1} {:>7.3} {:>7.3} {:>8.1}",
            r.spectral_distance / 1e6,
            r.psr,
            r.prr,
            r.dropped_sensing
        );
    }
    s
}

pub fn format_compare(rows: &[CompareRow]) -> String {
    let mut s = String::from("distance_mhz  static     dsa  improvement\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:>12.1} {:>7.3} {:>7.3} {:>12.3}",
            r.spectral_distance / 1e6,
            r.static_psr,
            r.dsa_psr,
            r.improvement()
        );
    }
    s
}
