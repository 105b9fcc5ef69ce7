//! Learning-curve aggregation and the on-disk result layout.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Per-episode statistics across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    /// Sample standard deviation over `sqrt(runs)`; zero for a single run.
    pub stderr: Vec<f64>,
}

/// Mean and standard error at every episode. All curves must have the same
/// length.
pub fn aggregate(curves: &[Vec<f64>]) -> Result<Aggregate> {
    let first = curves
        .first()
        .ok_or_else(|| Error::contract("aggregate needs at least one run"))?;
    if let Some((i, c)) = curves.iter().enumerate().find(|(_, c)| c.len() != first.len()) {
        return Err(Error::contract(format!(
            "run {i} has {} episodes, run 0 has {}",
            c.len(),
            first.len()
        )));
    }
    let k = curves.len() as f64;
    let mut mean = Vec::with_capacity(first.len());
    let mut stderr = Vec::with_capacity(first.len());
    for e in 0..first.len() {
        let m = curves.iter().map(|c| c[e]).sum::<f64>() / k;
        let se = if curves.len() > 1 {
            let var = curves.iter().map(|c| (c[e] - m).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        stderr.push(se);
    }
    Ok(Aggregate { mean, stderr })
}

/// Trailing moving average; early episodes average what is available.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Min-max rescaling to `[0, 1]`; constant curves map to 0.
pub fn normalise(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Writes `contents` to `path` through a temporary file and a rename, so a
/// reader never sees a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

pub fn run_file(dir: &Path, run: usize) -> PathBuf {
    dir.join(format!("run-{run}.csv"))
}

pub fn run_csv(utilities: &[f64]) -> String {
    let mut s = String::from("episode,utility\n");
    for (e, u) in utilities.iter().enumerate() {
        let _ = writeln!(s, "{e},{u}");
    }
    s
}

/// Reads the utility column of a run CSV.
pub fn read_run_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    if lines.next() != Some("episode,utility") {
        return Err(Error::config(format!("{}: missing episode,utility header", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            line.split_once(',')
                .and_then(|(_, u)| u.parse().ok())
                .ok_or_else(|| Error::config(format!("{}: bad row {}", path.display(), i + 2)))
        })
        .collect()
}

pub fn aggregate_csv(agg: &Aggregate, window: usize) -> String {
    let smoothed = smooth(&agg.mean, window);
    let normalised = normalise(&agg.mean);
    let mut s = String::from("episode,mean,stderr,smoothed_mean,normalised_mean\n");
    for e in 0..agg.mean.len() {
        let _ = writeln!(s, "{e},{},{},{},{}", agg.mean[e], agg.stderr[e], smoothed[e], normalised[e]);
    }
    s
}

/// Aggregates run CSV files into `aggregate.csv` contents.
pub fn aggregate_files(paths: &[PathBuf], window: usize) -> Result<String> {
    let curves = paths.iter().map(|p| read_run_csv(p)).collect::<Result<Vec<_>>>()?;
    Ok(aggregate_csv(&aggregate(&curves)?, window))
}

/// A gnuplot script drawing the smoothed mean with a standard-error band.
pub fn gnuplot_script(title: &str, aggregate_path: &str, png: &str) -> String {
    format!(
        "set terminal pngcairo size 900,560\n\
         set output '{png}'\n\
         set datafile separator ','\n\
         set key autotitle columnhead bottom right\n\
         set title '{title}'\n\
         set xlabel 'episode'\n\
         set ylabel 'utility'\n\
         plot '{aggregate_path}' using 1:($2-$3):($2+$3) with filledcurves fs transparent solid 0.2 notitle, \\\n\
         \x20    '' using 1:4 with lines lw 2 title 'mean (smoothed)'\n"
    )
}
