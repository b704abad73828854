//! Scaling benchmark: runs a task at several row counts in both modes and
//! reports whether decomposed cost stays flat while traditional cost grows
//! linearly.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use serde::Serialize;

use crate::data::synthetic_rows;
use crate::runner::{run_local, Mode, RunSpec, Task};

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub task: String,
    pub mode: String,
    /// Rows per party.
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub bytes_sent: u64,
    pub rounds: u64,
    pub wall_time: f64,
    pub peak_ring_elements: u64,
}

pub const CSV_HEADER: &str = "task,mode,n,d,m,bytes_sent,rounds,wall_time,peak_ring_elements";

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.6},{}",
            r.task, r.mode, r.n, r.d, r.m, r.bytes_sent, r.rounds, r.wall_time,
            r.peak_ring_elements
        )
        .unwrap();
    }
    out
}

pub fn write_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    std::fs::write(path, rows_to_csv(rows))?;
    Ok(())
}

/// Runs one (task, mode, n) cell and reports party 0's metrics.
pub fn run_cell(task: Task, mode: Mode, n: usize, d: usize, m: usize, seed: u64) -> Result<BenchRow> {
    let mut spec = RunSpec::new(task, mode);
    spec.seed = seed;
    spec.cfg.max_total_rows = (n * m).next_power_of_two().max(2) as u64;
    let data: Vec<_> = (0..m)
        .map(|p| synthetic_rows(seed.wrapping_add(p as u64), n, d, spec.cfg.max_abs))
        .collect();
    let runs = run_local(&spec, &data)?;
    let metrics = &runs[0].metrics;
    Ok(BenchRow {
        task: task.name().into(),
        mode: mode.name().into(),
        n,
        d,
        m,
        bytes_sent: metrics.bytes_sent,
        rounds: metrics.rounds,
        wall_time: metrics.wall_time,
        peak_ring_elements: metrics.peak_ring_elements,
    })
}

pub fn run_grid(
    tasks: &[Task],
    modes: &[Mode],
    ns: &[usize],
    d: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &task in tasks {
        for &mode in modes {
            for &n in ns {
                rows.push(run_cell(task, mode, n, d, m, seed)?);
            }
        }
    }
    Ok(rows)
}

/// Ordinary least squares of y on x: (slope, intercept, r_squared).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Human-readable verdict per (task, mode) group: constancy for decomposed
/// runs, fitted slope and R^2 for traditional ones.
pub fn summarize(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let mut groups: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.task.clone(), r.mode.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (task, mode) in groups {
        let cells: Vec<&BenchRow> = rows
            .iter()
            .filter(|r| r.task == task && r.mode == mode)
            .collect();
        if mode == "decomposed" {
            let constant = cells
                .windows(2)
                .all(|w| w[0].bytes_sent == w[1].bytes_sent && w[0].rounds == w[1].rounds);
            let verdict = if constant { "constant" } else { "NOT constant" };
            writeln!(
                out,
                "{task}/{mode}: bytes_sent={} rounds={} across n: {verdict}",
                cells[0].bytes_sent, cells[0].rounds
            )
            .unwrap();
        } else {
            let xs: Vec<f64> = cells.iter().map(|r| r.n as f64).collect();
            let ys: Vec<f64> = cells.iter().map(|r| r.bytes_sent as f64).collect();
            let (slope, _, r2) = linear_fit(&xs, &ys);
            writeln!(
                out,
                "{task}/{mode}: bytes_sent slope={slope:.1} bytes/row, R^2={r2:.4}"
            )
            .unwrap();
        }
    }
    out
}

/// Parses an `a:b:step` range (inclusive); a single number means one cell.
pub fn parse_range(s: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [one] => Ok(vec![one.parse()?]),
        [a, b] => {
            let (a, b): (usize, usize) = (a.parse()?, b.parse()?);
            anyhow::ensure!(a <= b, "empty range {s}");
            Ok((a..=b).collect())
        }
        [a, b, step] => {
            let (a, b, step): (usize, usize, usize) = (a.parse()?, b.parse()?, step.parse()?);
            anyhow::ensure!(step > 0 && a <= b, "bad range {s}");
            Ok((a..=b).step_by(step).collect())
        }
        _ => anyhow::bail!("bad range {s}, expected start:end:step"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exact_line() {
        let xs = [50.0, 100.0, 150.0, 200.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 7.0).collect();
        let (slope, intercept, r2) = linear_fit(&xs, &ys);
        assert!((slope - 3.0).abs() < 1e-9);
        assert!((intercept - 7.0).abs() < 1e-9);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_flat_line_has_zero_slope() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [5.0, 5.0, 5.0];
        let (slope, _, r2) = linear_fit(&xs, &ys);
        assert_eq!(slope, 0.0);
        assert_eq!(r2, 1.0);
    }

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("100:800:100").unwrap().len(), 8);
        assert_eq!(parse_range("50").unwrap(), vec![50]);
        assert_eq!(parse_range("3:5").unwrap(), vec![3, 4, 5]);
        assert!(parse_range("5:1").is_err());
    }

    #[test]
    fn csv_columns_are_stable() {
        let row = BenchRow {
            task: "pca".into(),
            mode: "decomposed".into(),
            n: 100,
            d: 6,
            m: 2,
            bytes_sent: 1000,
            rounds: 10,
            wall_time: 0.125,
            peak_ring_elements: 99,
        };
        let csv = rows_to_csv(&[row]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "pca,decomposed,100,6,2,1000,10,0.125000,99");
    }
}
