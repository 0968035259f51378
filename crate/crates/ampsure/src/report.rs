//! Metrics CSV, histogram TSV and the summary table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ampsure_core::metrics::ResidualHistogram;

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = [
    "image_id",
    "method",
    "rate",
    "psnr_db",
    "runtime_s",
    "sigma_hat_final",
    "sigma_true_final",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub image_id: String,
    pub method: String,
    pub rate: f64,
    pub psnr_db: f64,
    /// Left empty in the CSV when timing is off.
    pub runtime_s: Option<f64>,
    pub sigma_hat_final: f64,
    pub sigma_true_final: Option<f64>,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

/// Rows sorted by `(image_id, method)` with fixed decimals, so identical
/// runs without timing produce identical bytes.
pub fn metrics_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.image_id, &a.method).cmp(&(&b.image_id, &b.method)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in sorted {
        w.write_record([
            r.image_id.clone(),
            r.method.clone(),
            format!("{:.4}", r.rate),
            format!("{:.4}", r.psnr_db),
            opt(r.runtime_s, 4),
            format!("{:.4}", r.sigma_hat_final),
            opt(r.sigma_true_final, 4),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Format(format!("CSV buffer: {e}")))
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    fs::write(path, metrics_csv(rows)?).map_err(Error::io(path))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::Format(format!("{}: unexpected CSV header", path.display())));
    }
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Format(format!("{}: bad {what} {s:?}", path.display())))
    };
    let maybe = |s: &str, what: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s, what).map(Some)
        }
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(MetricsRow {
            image_id: rec[0].to_string(),
            method: rec[1].to_string(),
            rate: num(&rec[2], "rate")?,
            psnr_db: num(&rec[3], "psnr_db")?,
            runtime_s: maybe(&rec[4], "runtime_s")?,
            sigma_hat_final: num(&rec[5], "sigma_hat_final")?,
            sigma_true_final: maybe(&rec[6], "sigma_true_final")?,
        });
    }
    Ok(rows)
}

/// Two columns: bin center and density.
pub fn histogram_tsv(h: &ResidualHistogram) -> String {
    let mut out = String::from("bin_center\tdensity\n");
    for (e, d) in h.bin_edges.windows(2).zip(&h.densities) {
        let _ = writeln!(out, "{:.6}\t{:.8}", 0.5 * (e[0] + e[1]), d);
    }
    out
}

/// Average PSNR and runtime per method and sampling rate, laid out as
/// `Method | Training Time | (PSNR, Time) per rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub rates: Vec<f64>,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub training_time: Option<String>,
    /// One `(mean PSNR, mean runtime)` per rate; `None` where the method
    /// was not run.
    pub cells: Vec<Option<(f64, Option<f64>)>>,
}

fn rate_key(r: f64) -> i64 {
    (r * 1e4).round() as i64
}

pub fn summarize(rows: &[MetricsRow], training_times: &BTreeMap<String, String>) -> SummaryTable {
    let rates: BTreeSet<i64> = rows.iter().map(|r| rate_key(r.rate)).collect();
    let rates: Vec<i64> = rates.into_iter().collect();
    let mut groups: BTreeMap<&str, BTreeMap<i64, Vec<&MetricsRow>>> = BTreeMap::new();
    for r in rows {
        groups
            .entry(&r.method)
            .or_default()
            .entry(rate_key(r.rate))
            .or_default()
            .push(r);
    }
    let rows = groups
        .into_iter()
        .map(|(method, by_rate)| SummaryRow {
            method: method.to_string(),
            training_time: training_times.get(method).cloned(),
            cells: rates
                .iter()
                .map(|k| {
                    by_rate.get(k).map(|rs| {
                        let n = rs.len() as f64;
                        let psnr = rs.iter().map(|r| r.psnr_db).sum::<f64>() / n;
                        let times: Option<Vec<f64>> = rs.iter().map(|r| r.runtime_s).collect();
                        (psnr, times.map(|t| t.iter().sum::<f64>() / n))
                    })
                })
                .collect(),
        })
        .collect();
    SummaryTable {
        rates: rates.into_iter().map(|k| k as f64 / 1e4).collect(),
        rows,
    }
}

impl SummaryTable {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["method".to_string(), "training_time".to_string()];
        for r in &self.rates {
            let pct = format!("{}", (r * 1e4).round() / 1e2);
            h.push(format!("psnr_{pct}%"));
            h.push(format!("time_{pct}%"));
        }
        h
    }

    fn cells(&self, row: &SummaryRow) -> Vec<String> {
        let mut out = vec![row.method.clone(), row.training_time.clone().unwrap_or_else(|| "N/A".into())];
        for c in &row.cells {
            match c {
                Some((p, t)) => {
                    out.push(format!("{p:.2}"));
                    out.push(t.map(|t| format!("{t:.2}")).unwrap_or_else(|| "-".into()));
                }
                None => out.extend(["-".to_string(), "-".to_string()]),
            }
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = self.header().join("\t");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&self.cells(r).join("\t"));
            out.push('\n');
        }
        out
    }

    /// Aligned text for the terminal.
    pub fn render(&self) -> String {
        let mut lines = vec![self.header()];
        lines.extend(self.rows.iter().map(|r| self.cells(r)));
        let cols = lines[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, method: &str, rate: f64, psnr: f64) -> MetricsRow {
        MetricsRow {
            image_id: id.into(),
            method: method.into(),
            rate,
            psnr_db: psnr,
            runtime_s: Some(1.0),
            sigma_hat_final: 2.0,
            sigma_true_final: None,
        }
    }

    #[test]
    fn csv_sorted_and_exact_header() {
        let rows = [row("b", "x", 0.25, 30.0), row("a", "y", 0.25, 31.0), row("a", "x", 0.25, 32.0)];
        let text = String::from_utf8(metrics_csv(&rows).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "image_id,method,rate,psnr_db,runtime_s,sigma_hat_final,sigma_true_final");
        assert!(lines[1].starts_with("a,x,") && lines[2].starts_with("a,y,") && lines[3].starts_with("b,x,"));
        assert!(lines[1].ends_with(",2.0000,"));
    }

    #[test]
    fn summary_layout() {
        let rows = [row("a", "m", 0.05, 20.0), row("b", "m", 0.05, 22.0), row("a", "m", 0.25, 30.0)];
        let t = summarize(&rows, &BTreeMap::new());
        assert_eq!(t.header(), ["method", "training_time", "psnr_5%", "time_5%", "psnr_25%", "time_25%"]);
        assert_eq!(t.rows[0].cells[0], Some((21.0, Some(1.0))));
        assert!(t.to_tsv().contains("m\tN/A\t21.00\t1.00\t30.00\t1.00"));
    }
}
