//! CSV, plot data and events files.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::sim::{SimResult, Summary, SweepPoint};

pub const STEP_FILE: &str = "steps.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const EVENTS_FILE: &str = "events.log";

pub const STEP_HEADER: [&str; 10] = [
    "t_s",
    "bs_id",
    "mode",
    "load",
    "power_w",
    "ap_id",
    "utilization",
    "ap_power_w",
    "offloads_uc",
    "offloads_nc",
];

pub const SUMMARY_HEADER: [&str; 5] = [
    "sweep_value",
    "savings_pct_mean",
    "savings_pct_std",
    "ss_share",
    "pd_share",
];

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// One row per base station and one per access point at every step; the
/// columns of the other element kind are left empty.
pub fn write_steps<W: Write>(result: &SimResult, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STEP_HEADER).map_err(csv_err)?;
    for s in &result.steps {
        let t = s.t_s.to_string();
        let uc = s.offloads_uc.to_string();
        let nc = s.offloads_nc.to_string();
        for b in &s.bs {
            w.write_record([
                t.as_str(),
                &b.bs.0.to_string(),
                b.mode.as_str(),
                &b.load.to_string(),
                &b.power_w.to_string(),
                "",
                "",
                "",
                &uc,
                &nc,
            ])
            .map_err(csv_err)?;
        }
        for a in &s.aps {
            w.write_record([
                t.as_str(),
                "",
                "",
                "",
                "",
                &a.ap.0.to_string(),
                &a.utilization.to_string(),
                &a.power_w.to_string(),
                &uc,
                &nc,
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()
}

fn summary_row(value: Option<f64>, mean: f64, std: f64, ss: f64, pd: f64) -> [String; 5] {
    [
        value.map(|v| v.to_string()).unwrap_or_default(),
        mean.to_string(),
        std.to_string(),
        ss.to_string(),
        pd.to_string(),
    ]
}

/// Single-run summary; the sweep value column is empty.
pub fn write_run_summary<W: Write>(summary: &Summary, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    w.write_record(summary_row(
        None,
        summary.savings_pct,
        0.0,
        summary.ss_share,
        summary.pd_share,
    ))
    .map_err(csv_err)?;
    w.flush()
}

pub fn write_sweep_summary<W: Write>(points: &[SweepPoint], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for p in points {
        w.write_record(summary_row(
            Some(p.value),
            p.savings_pct_mean,
            p.savings_pct_std,
            p.ss_share,
            p.pd_share,
        ))
        .map_err(csv_err)?;
    }
    w.flush()
}

/// Two whitespace-separated columns: sweep value and mean savings.
pub fn write_plotdata<W: Write>(points: &[SweepPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "# value savings_pct")?;
    for p in points {
        writeln!(out, "{} {}", p.value, p.savings_pct_mean)?;
    }
    Ok(())
}

/// Writes `<dir>/<label>.dat` and returns its path.
pub fn emit_plotdata(dir: &Path, label: &str, points: &[SweepPoint]) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{label}.dat"));
    write_plotdata(points, BufWriter::new(File::create(&path)?))?;
    Ok(path)
}

/// Step CSV, summary CSV and events file of a single run.
pub fn write_run(dir: &Path, result: &SimResult) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_steps(result, BufWriter::new(File::create(dir.join(STEP_FILE))?))?;
    write_run_summary(
        &result.summary,
        BufWriter::new(File::create(dir.join(SUMMARY_FILE))?),
    )?;
    let mut ev = BufWriter::new(File::create(dir.join(EVENTS_FILE))?);
    result.events.write_to(&mut ev)?;
    ev.flush()
}
