use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::{CoverageReport, CovarianceCheck, MeanVarCheck, PredictionSummary};

pub const REPORT_SCHEMA: &str = "nowcast-report/1";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn level_tag(level: f64) -> String {
    format!("{level}")
}

impl PredictionSummary {
    /// One row per time: `kind,quantity,t,observed_prefix,degenerate,mean,median`
    /// then `lower_<level>,upper_<level>` per level.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["kind", "quantity", "t", "observed_prefix", "degenerate", "mean", "median"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for &l in &self.levels {
            header.push(format!("lower_{}", level_tag(l)));
            header.push(format!("upper_{}", level_tag(l)));
        }
        w.write_record(&header)?;
        let quantity = match self.quantity {
            super::Quantity::Reported => "reported",
            super::Quantity::True => "true",
        };
        for i in 0..self.len() {
            let mut rec = vec![
                self.kind.name().to_string(),
                quantity.to_string(),
                self.times[i].to_string(),
                self.observed_prefix[i].to_string(),
                self.degenerate[i].to_string(),
                self.mean[i].to_string(),
                self.median[i].to_string(),
            ];
            for l in 0..self.levels.len() {
                rec.push(self.lower[l][i].to_string());
                rec.push(self.upper[l][i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(Path::new("<csv>"), e))?;
        Ok(())
    }

    /// `draw,t,value` in draw order.
    pub fn write_draws_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["draw", "t", "value"])?;
        for (g, d) in self.draws.iter().enumerate() {
            for (t, v) in self.times.iter().zip(d) {
                w.write_record([g.to_string(), t.to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(Path::new("<csv>"), e))?;
        Ok(())
    }
}

/// The checking statistics of one fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PpcReport {
    pub covariance: Option<CovarianceCheck>,
    pub mean_var: Option<MeanVarCheck>,
    pub coverage: Vec<CoverageReport>,
}

impl PpcReport {
    /// Writes the tidy CSV files into `dir`; returns their paths.
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        if let Some(c) = &self.covariance {
            let path = dir.join("ppc_covariance.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["statistic", "draw", "value"])?;
            for (name, vals) in [
                ("bias_z", &c.bias_z),
                ("log_mse_z", &c.log_mse_z),
                ("bias_p", &c.bias_p),
                ("log_mse_p", &c.log_mse_p),
            ] {
                for (g, v) in vals.iter().enumerate() {
                    w.write_record([name.to_string(), g.to_string(), v.to_string()])?;
                }
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        if let Some(m) = &self.mean_var {
            let path = dir.join("ppc_mean_var.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["statistic", "draw", "value"])?;
            w.write_record(["mean", "observed", &m.observed_mean.to_string()])?;
            w.write_record(["var", "observed", &m.observed_var.to_string()])?;
            for (name, vals) in [("mean", &m.mean_draws), ("var", &m.var_draws)] {
                for (g, v) in vals.iter().enumerate() {
                    w.write_record([name.to_string(), g.to_string(), v.to_string()])?;
                }
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);

            let path = dir.join("ppc_sorted.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["rank", "observed", "mean", "lower", "upper"])?;
            for i in 0..m.sorted_observed.len() {
                w.write_record([
                    (i + 1).to_string(),
                    m.sorted_observed[i].to_string(),
                    m.sorted_mean[i].to_string(),
                    m.sorted_lower[i].to_string(),
                    m.sorted_upper[i].to_string(),
                ])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        if !self.coverage.is_empty() {
            let path = dir.join("ppc_coverage.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            w.write_record(["check", "level", "delay", "coverage", "cells"])?;
            for c in &self.coverage {
                let check = if c.multinomial_limit { "multinomial" } else { "fitted" };
                for (d, (v, n)) in c.per_delay.iter().zip(&c.cells_per_delay).enumerate() {
                    w.write_record([
                        check.to_string(),
                        c.level.to_string(),
                        (d + 1).to_string(),
                        v.to_string(),
                        n.to_string(),
                    ])?;
                }
                let n: usize = c.cells_per_delay.iter().sum();
                w.write_record([check.to_string(), c.level.to_string(), "all".into(), c.overall.to_string(), n.to_string()])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

#[derive(Serialize)]
struct Index<'a> {
    schema: &'a str,
    command: &'a str,
    files: Vec<String>,
    summary: &'a serde_json::Value,
}

/// Writes the compact JSON index of a run's outputs.
pub fn write_json_index(path: &Path, command: &str, files: &[PathBuf], summary: &serde_json::Value) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new(""));
    let index = Index {
        schema: REPORT_SCHEMA,
        command,
        files: files
            .iter()
            .map(|f| f.strip_prefix(dir).unwrap_or(f).display().to_string())
            .collect(),
        summary,
    };
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &index)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
