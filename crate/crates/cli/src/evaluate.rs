//! Estimate and label tables, and the evaluation report.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rrforge_core::metrics::EvalReport;
use serde::{Deserialize, Serialize};

use crate::corpus::subject_of;

pub const ESTIMATE_HEADER: &str = "segment_id,rr_est,quality,method";
pub const LABEL_HEADER: &str = "segment_id,rr_ref,confidence";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub segment_id: String,
    /// Missing when the method could not produce an estimate.
    pub rr_est: Option<f64>,
    pub quality: f64,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub segment_id: String,
    pub rr_ref: f64,
    pub confidence: f64,
}

fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_table<T: for<'de> Deserialize<'de>>(path: &Path, header: &str) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let got: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if got.join(",") != header {
        bail!("{}: expected columns {header}, found {}", path.display(), got.join(","));
    }
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().with_context(|| format!("parsing {}", path.display()))
}

pub fn write_estimates(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    if rows.is_empty() {
        std::fs::write(path, format!("{ESTIMATE_HEADER}\n"))?;
        return Ok(());
    }
    write_table(path, rows)
}

pub fn read_estimates(path: &Path) -> Result<Vec<EstimateRow>> {
    read_table(path, ESTIMATE_HEADER)
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<()> {
    if rows.is_empty() {
        std::fs::write(path, format!("{LABEL_HEADER}\n"))?;
        return Ok(());
    }
    write_table(path, rows)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    read_table(path, LABEL_HEADER)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    #[serde(flatten)]
    pub metrics: EvalReport,
    /// Rows without an estimate.
    pub unavailable: usize,
    /// Rows without a reference label.
    pub unlabelled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub seed: u64,
    pub methods: Vec<MethodReport>,
}

/// Paired values of one method, in estimate order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pairs {
    pub ids: Vec<String>,
    pub est: Vec<f64>,
    pub reference: Vec<f64>,
    pub unavailable: usize,
    pub unlabelled: usize,
}

pub fn pair_by_method(estimates: &[EstimateRow], labels: &[LabelRow]) -> BTreeMap<String, Pairs> {
    let refs: BTreeMap<&str, f64> = labels.iter().map(|l| (l.segment_id.as_str(), l.rr_ref)).collect();
    let mut out: BTreeMap<String, Pairs> = BTreeMap::new();
    for e in estimates {
        let p = out.entry(e.method.clone()).or_default();
        match (e.rr_est, refs.get(e.segment_id.as_str())) {
            (None, _) => p.unavailable += 1,
            (Some(_), None) => p.unlabelled += 1,
            (Some(est), Some(&r)) => {
                p.ids.push(e.segment_id.clone());
                p.est.push(est);
                p.reference.push(r);
            }
        }
    }
    out
}

/// One report per method, in method-name order. `param_counts` attaches
/// model sizes by method name.
pub fn evaluate(estimates: &[EstimateRow], labels: &[LabelRow], param_counts: &BTreeMap<String, u64>) -> Result<Vec<MethodReport>> {
    let mut out = Vec::new();
    for (method, p) in pair_by_method(estimates, labels) {
        if p.est.len() < 2 {
            bail!("method {method}: fewer than two labelled estimates to evaluate");
        }
        let subjects: Vec<String> = p.ids.iter().map(|id| subject_of(id).to_string()).collect();
        let mut metrics = EvalReport::compute(&method, &p.est, &p.reference, &subjects)?;
        metrics.param_count = param_counts.get(&method).copied();
        out.push(MethodReport { metrics, unavailable: p.unavailable, unlabelled: p.unlabelled });
    }
    if out.is_empty() {
        bail!("no estimates to evaluate");
    }
    Ok(out)
}

pub fn write_per_subject(path: &Path, reports: &[MethodReport]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "method,subject,n,mae,rmse")?;
    for r in reports {
        for s in &r.metrics.per_subject {
            writeln!(w, "{},{},{},{},{}", r.metrics.method, s.subject, s.n, s.mae, s.rmse)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Box-plot and Bland-Altman scatter data for external plotting.
pub fn write_plot_data(dir: &Path, estimates: &[EstimateRow], labels: &[LabelRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut bx = BufWriter::new(File::create(dir.join("abs_error.csv"))?);
    let mut ba = BufWriter::new(File::create(dir.join("bland_altman.csv"))?);
    writeln!(bx, "method,segment_id,abs_error")?;
    writeln!(ba, "method,segment_id,mean,difference")?;
    for (method, p) in pair_by_method(estimates, labels) {
        for ((id, e), r) in p.ids.iter().zip(&p.est).zip(&p.reference) {
            writeln!(bx, "{method},{id},{}", (e - r).abs())?;
            writeln!(ba, "{method},{id},{},{}", (e + r) / 2.0, e - r)?;
        }
    }
    bx.flush()?;
    ba.flush()?;
    Ok(())
}
