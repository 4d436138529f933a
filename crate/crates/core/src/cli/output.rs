//! Result files. Every file carries the hash of the config that produced it.

use std::fs;
use std::path::{Path, PathBuf};

use super::run::{FitPceRow, JacobianRow, RunOutput, SweepCell, Twin};
use crate::error::{Error, Result};

pub const MARKER: &str = ".gnmk-config";

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Create `dir` if needed and claim it for `hash`; a directory already holding results
/// of another config is rejected.
pub fn claim_dir(dir: &Path, hash: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let marker = dir.join(MARKER);
    if marker.exists() {
        let existing = fs::read_to_string(&marker)?;
        if existing.trim() != hash {
            return Err(Error::config(
                dir.display().to_string(),
                format!("directory holds results of config {}", existing.trim()),
            ));
        }
    } else {
        fs::write(&marker, format!("{hash}\n"))?;
    }
    Ok(())
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn component_header(prefixes: &[&str], d: usize) -> Vec<String> {
    prefixes
        .iter()
        .flat_map(|p| (0..d).map(move |i| format!("{p}_{i}")))
        .collect()
}

/// `truth.csv` (time, truth_i) and `measurement.csv` (component, value, noise_var).
pub fn write_twin(dir: &Path, twin: &Twin, hash: &str) -> Result<Vec<PathBuf>> {
    let truth_path = dir.join("truth.csv");
    let mut w = writer(&truth_path)?;
    let mut header = vec!["time".to_string()];
    header.extend(component_header(&["truth"], 3));
    header.push("config_hash".into());
    w.write_record(&header).map_err(csv_err)?;
    for (t, x) in twin.times.iter().zip(&twin.truth) {
        let mut rec = vec![num(*t)];
        rec.extend(x.iter().map(|v| num(*v)));
        rec.push(hash.into());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;

    let meas_path = dir.join("measurement.csv");
    let mut w = writer(&meas_path)?;
    w.write_record(["component", "value", "noise_var", "config_hash"])
        .map_err(csv_err)?;
    for ((c, v), n) in twin
        .observed
        .iter()
        .zip(&twin.measurement)
        .zip(&twin.noise_var)
    {
        w.write_record([c.to_string(), num(*v), num(*n), hash.into()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(vec![truth_path, meas_path])
}

/// `trajectory.csv`, `summary.json` and one `posteriors/t<time>.pce` per smoother step.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<Vec<PathBuf>> {
    let s = &out.summary;
    let hash = &s.config_hash;
    let traj = dir.join("trajectory.csv");
    let mut w = writer(&traj)?;
    let mut header = vec!["time".to_string()];
    header.extend(component_header(&["truth", "mean", "var", "p01", "p99"], 3));
    header.push("config_hash".into());
    w.write_record(&header).map_err(csv_err)?;
    for r in &s.reports {
        let mut rec = vec![num(r.time)];
        for v in [&r.truth, &r.mean, &r.variance, &r.p01, &r.p99] {
            rec.extend(v.iter().map(|x| num(*x)));
        }
        rec.push(hash.clone());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;

    let summary = dir.join("summary.json");
    fs::write(
        &summary,
        serde_json::to_string_pretty(s).map_err(|e| Error::Io(e.into()))?,
    )?;

    let pdir = dir.join("posteriors");
    fs::create_dir_all(&pdir)?;
    let mut files = vec![traj, summary];
    for (t, x) in &out.posteriors {
        let p = pdir.join(format!("t{t}.pce"));
        fs::write(
            &p,
            format!("# config_hash {hash}\n# time {t:?}\n{}", x.to_text()),
        )?;
        files.push(p);
    }
    Ok(files)
}

pub fn write_fit_pce(dir: &Path, rows: &[FitPceRow], hash: &str) -> Result<PathBuf> {
    let path = dir.join("fit_pce.csv");
    let mut w = writer(&path)?;
    w.write_record([
        "policy",
        "time",
        "component",
        "rmse",
        "rel_rmse",
        "config_hash",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.policy.name().to_string(),
            num(r.time),
            r.component.to_string(),
            num(r.rmse),
            num(r.rel_rmse),
            hash.into(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_jacobian(dir: &Path, rows: &[JacobianRow], hash: &str) -> Result<PathBuf> {
    let path = dir.join("jacobian.csv");
    let mut w = writer(&path)?;
    w.write_record([
        "time",
        "window",
        "projection_rel_err",
        "bayes_rel_err",
        "config_hash",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            num(r.time),
            num(r.window),
            num(r.projection),
            num(r.bayes),
            hash.into(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(path)
}

/// One row per cell, report time and component.
pub fn write_sweep(dir: &Path, cells: &[SweepCell], hash: &str) -> Result<PathBuf> {
    let path = dir.join("sweep.csv");
    let mut w = writer(&path)?;
    w.write_record([
        "delta_tau",
        "noise_coef",
        "smoother",
        "time",
        "component",
        "truth",
        "mean",
        "var",
        "p01",
        "p99",
        "config_hash",
    ])
    .map_err(csv_err)?;
    for c in cells {
        for r in &c.summary.reports {
            for i in 0..r.truth.len() {
                w.write_record([
                    num(c.delta_tau),
                    num(c.noise_coef),
                    c.smoother.name().to_string(),
                    num(r.time),
                    i.to_string(),
                    num(r.truth[i]),
                    num(r.mean[i]),
                    num(r.variance[i]),
                    num(r.p01[i]),
                    num(r.p99[i]),
                    hash.into(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(path)
}
