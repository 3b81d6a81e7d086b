use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentOutput;
use crate::error::Result;
use crate::semantics::FitReport;

/// One method on one drop at one sweep point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultsRow {
    pub experiment: String,
    pub method: String,
    pub sweep_variable: String,
    pub sweep_value: String,
    pub drop_seed: u64,
    pub total_qoe: f64,
    pub total_sr_ksuts: f64,
    pub served_sem_single: usize,
    pub served_sem_bimodal: usize,
    pub served_conv_single: usize,
    pub served_conv_bimodal: usize,
    pub power_mw: f64,
    pub swaps: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub experiment: String,
    pub sweep_variable: String,
    pub sweep_value: String,
    pub drop_seed: u64,
    pub swap_index: u64,
    pub total_qoe: f64,
    pub searches: u64,
}

/// Mean and sample standard deviation over drops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub method: String,
    pub sweep_variable: String,
    pub sweep_value: String,
    pub drops: usize,
    pub total_qoe_mean: f64,
    pub total_qoe_std: f64,
    pub total_sr_ksuts_mean: f64,
    pub total_sr_ksuts_std: f64,
    pub served_sem_single_mean: f64,
    pub served_sem_bimodal_mean: f64,
    pub served_conv_single_mean: f64,
    pub served_conv_bimodal_mean: f64,
    pub power_mw_mean: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups by (experiment, sweep value, method) in first-seen order.
pub fn summarize(rows: &[ResultsRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String, String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String, String), Vec<&ResultsRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.experiment.clone(), r.sweep_variable.clone(), r.sweep_value.clone(), r.method.clone());
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let col = |f: fn(&ResultsRow) -> f64| mean_std(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (qm, qs) = col(|r| r.total_qoe);
            let (sm, ss) = col(|r| r.total_sr_ksuts);
            SummaryRow {
                experiment: key.0,
                sweep_variable: key.1,
                sweep_value: key.2,
                method: key.3,
                drops: g.len(),
                total_qoe_mean: qm,
                total_qoe_std: qs,
                total_sr_ksuts_mean: sm,
                total_sr_ksuts_std: ss,
                served_sem_single_mean: col(|r| r.served_sem_single as f64).0,
                served_sem_bimodal_mean: col(|r| r.served_sem_bimodal as f64).0,
                served_conv_single_mean: col(|r| r.served_conv_single as f64).0,
                served_conv_bimodal_mean: col(|r| r.served_conv_bimodal as f64).0,
                power_mw_mean: col(|r| r.power_mw).0,
            }
        })
        .collect()
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_csv<W: Write>(rows: &[ResultsRow], out: W) -> Result<()> {
    write_rows(rows, out)
}

pub fn read_results_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultsRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Writes `results.csv`, `summary.csv`, and `trace.csv` or `fit.csv`
/// when present. Returns the paths written.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if !out.rows.is_empty() {
        let p = dir.join("results.csv");
        write_results_csv(&out.rows, fs::File::create(&p)?)?;
        written.push(p);
        let p = dir.join("summary.csv");
        write_rows(&summarize(&out.rows), fs::File::create(&p)?)?;
        written.push(p);
    }
    if !out.traces.is_empty() {
        let p = dir.join("trace.csv");
        write_rows(&out.traces, fs::File::create(&p)?)?;
        written.push(p);
    }
    if !out.fit.is_empty() {
        let p = dir.join("fit.csv");
        FitReport::write_csv(&out.fit, fs::File::create(&p)?)?;
        written.push(p);
    }
    Ok(written)
}
