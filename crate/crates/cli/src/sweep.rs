//! Parameter sweeps: one run per value, summarised as a convergence table.

use rayon::prelude::*;
use serde::Serialize;

use riccati_core::{Error as CoreError, C64};

use crate::config::{build, ModelKind, RunConfig};
use crate::error::CliError;
use crate::output::num;
use crate::run::{execute, Execution};

/// Parameters a sweep may vary.
pub const PARAMETERS: &[&str] = &["dt", "t", "n", "half_width", "det2_stride", "seed"];

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: &'static str,
    pub exit_code: i32,
    pub fredholm_residual: Option<f64>,
    pub oracle_error: Option<f64>,
    pub pde_residual: Option<f64>,
    /// Relative distance between this run's final field and the next run's.
    pub diff_to_next: Option<f64>,
    /// `log(eᵢ/eᵢ₊₁)/log(vᵢ/vᵢ₊₁)` from consecutive differences (dt sweeps only).
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalBracket {
    pub last_ok: Option<f64>,
    pub first_failed: f64,
    /// Pole time located by the denominator scan, when that is what stopped the run.
    pub t_critical: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub parameter: String,
    pub config: RunConfig,
    pub rows: Vec<SweepRow>,
    pub critical_bracket: Option<CriticalBracket>,
}

pub fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| CliError::Config(format!("bad sweep value {s:?}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Config("sweep value list is empty".into()));
    }
    Ok(values)
}

fn integer(v: f64, name: &str) -> Result<usize, CliError> {
    if v.fract() != 0.0 || v < 0.0 || v > usize::MAX as f64 {
        return Err(CliError::Config(format!("`{name}` needs a non-negative integer, got {v}")));
    }
    Ok(v as usize)
}

/// `cfg` (resolved) with `parameter` set to `value`.
pub fn with_parameter(cfg: &RunConfig, parameter: &str, value: f64) -> Result<RunConfig, CliError> {
    let mut c = cfg.clone();
    let times = c.times.as_mut().expect("resolved config");
    match parameter {
        "dt" => times.dt = value,
        "t" => {
            times.t_final = value;
            times.query = None;
        }
        "n" | "half_width" => {
            let g = c
                .grid
                .as_mut()
                .ok_or_else(|| CliError::Config(format!("`{parameter}` needs a grid model")))?;
            match parameter {
                "n" => g.n = integer(value, "n")?,
                _ => g.half_width = value,
            }
        }
        "det2_stride" => c.det2_stride = integer(value, "det2_stride")?,
        "seed" => match c.matrix.as_mut() {
            Some(m) => m.seed = integer(value, "seed")? as u64,
            None => return Err(CliError::Config("`seed` applies to the matrix model".into())),
        },
        other => {
            return Err(CliError::Config(format!(
                "unknown sweep parameter {other:?}; expected one of {PARAMETERS:?}"
            )))
        }
    }
    Ok(c)
}

fn relative_distance(a: &[C64], b: &[C64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    Some(if den == 0.0 { num } else { num / den })
}

/// Validates every value's configuration, then runs them all.
pub fn sweep(cfg: &RunConfig, parameter: &str, values: &[f64]) -> Result<SweepSummary, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep value list is empty".into()));
    }
    let configs = values
        .iter()
        .map(|&v| {
            let c = with_parameter(cfg, parameter, v)?;
            let built = build(&c)?;
            Ok((c, built))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let runs: Vec<Execution> = configs.par_iter().map(|(c, b)| execute(c, b)).collect();
    if let Some(e) = runs.iter().find_map(|r| r.error.as_ref().filter(|e| e.exit_code() == 2)) {
        return Err(CliError::Config(e.to_string()));
    }

    let mut rows: Vec<SweepRow> = runs
        .iter()
        .zip(values)
        .map(|(r, &value)| {
            let last = r.report.queries.last();
            SweepRow {
                value,
                status: r.report.status,
                exit_code: r.exit_code(),
                fredholm_residual: last.and_then(|q| q.fredholm_residual),
                oracle_error: last.and_then(|q| q.oracle_error),
                pde_residual: last.and_then(|q| q.pde_residual),
                diff_to_next: None,
                observed_order: None,
            }
        })
        .collect();
    let comparable = !matches!(parameter, "n" | "half_width" | "seed");
    if comparable {
        for i in 0..runs.len().saturating_sub(1) {
            let both_ok = runs[i].error.is_none() && runs[i + 1].error.is_none();
            if both_ok {
                rows[i].diff_to_next = relative_distance(&runs[i].final_field, &runs[i + 1].final_field);
            }
        }
    }
    if parameter == "dt" {
        for i in 0..rows.len().saturating_sub(2) {
            if let (Some(e0), Some(e1)) = (rows[i].diff_to_next, rows[i + 1].diff_to_next) {
                let ratio = values[i] / values[i + 1];
                if e0 > 0.0 && e1 > 0.0 && ratio > 0.0 && ratio != 1.0 {
                    rows[i].observed_order = Some((e0 / e1).ln() / ratio.ln());
                }
            }
        }
    }
    let critical_bracket = if parameter == "t" && cfg.model == ModelKind::Conv {
        runs.iter().position(|r| r.error.is_some()).map(|i| CriticalBracket {
            last_ok: i.checked_sub(1).map(|j| values[j]),
            first_failed: values[i],
            t_critical: match &runs[i].error {
                Some(CliError::Solver(CoreError::PoleCrossing { t_critical, .. })) => Some(*t_critical),
                _ => None,
            },
        })
    } else {
        None
    };
    Ok(SweepSummary {
        parameter: parameter.to_string(),
        config: cfg.clone(),
        rows,
        critical_bracket,
    })
}

pub fn sweep_csv(summary: &SweepSummary) -> String {
    let mut out = String::from(
        "value,status,exit_code,fredholm_residual,oracle_error,pde_residual,diff_to_next,observed_order\n",
    );
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    for r in &summary.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            num(r.value),
            r.status,
            r.exit_code,
            opt(r.fredholm_residual),
            opt(r.oracle_error),
            opt(r.pde_residual),
            opt(r.diff_to_next),
            opt(r.observed_order),
        ));
    }
    out
}
