//! Executes a validated configuration and collects its artifacts in memory.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use riccati_core::flow::{pde_residual, solve_at, Coupling, Det2Sample, FlowConfig, FlowState};
use riccati_core::matrix_riccati::{integrate_frame, integrate_riccati_direct, project, BlockSystem};
use riccati_core::models::{
    burgers_cole_hopf, burgers_fields, burgers_residual, conv_closed_form, conv_pole_scan,
    BurgersModel, ConvModel, CorrModel,
};
use riccati_core::oracle::{direct_burgers, direct_conv, direct_corr, ConvOracleOptions};
use riccati_core::{hs_norm, Field1D, Kernel2D, C64};

use crate::config::{Built, RunConfig};
use crate::error::CliError;
use crate::output::{field_csv, kernel_csv, matrix_csv, time_tag, Table};

/// Step of the central time difference behind `pde_residual`.
pub const RESIDUAL_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct QueryReport {
    pub t: f64,
    pub fredholm_residual: Option<f64>,
    /// `[Re, Im]`.
    pub det2: Option<[f64; 2]>,
    pub qprime_hs: Option<f64>,
    pub boundary_mass: Option<f64>,
    pub oracle_error: Option<f64>,
    pub pde_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub path: &'static str,
    pub status: &'static str,
    pub error: Option<String>,
    pub queries: Vec<QueryReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryTiming {
    pub t: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub queries: Vec<QueryTiming>,
}

/// Everything a run produced, written or not.
pub struct Execution {
    pub report: RunReport,
    /// `(file name, contents)`, excluding `report.json` and `timings.json`.
    pub files: Vec<(String, String)>,
    pub timings: Timings,
    /// Solution samples at the last completed query time.
    pub final_field: Vec<C64>,
    pub error: Option<CliError>,
}

impl Execution {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, CliError::exit_code)
    }
}

#[derive(Default)]
struct Sink {
    queries: Vec<QueryReport>,
    files: Vec<(String, String)>,
    timings: Vec<QueryTiming>,
    trace: Vec<Det2Sample>,
    final_field: Vec<C64>,
}

impl Sink {
    fn file(&mut self, name: String, contents: String) {
        self.files.push((name, contents));
    }

    fn trace_csv(&mut self) {
        if self.trace.is_empty() {
            return;
        }
        let mut trace = std::mem::take(&mut self.trace);
        trace.sort_by(|a, b| a.t.total_cmp(&b.t));
        trace.dedup_by(|a, b| a.t == b.t);
        let mut table = Table::new(&["t", "det2_re", "det2_im", "qprime_hs"]);
        for s in &trace {
            table.row(&[s.t, s.det2.re, s.det2.im, s.qprime_hs]);
        }
        self.file("plotdata_det2.csv".into(), table.into_string());
    }
}

fn path_label(cfg: &RunConfig) -> &'static str {
    match cfg.model {
        crate::config::ModelKind::Matrix => "frame",
        crate::config::ModelKind::Burgers => "closed_form",
        _ if cfg.general_path => "general",
        _ => "fast",
    }
}

/// Runs every query time. Configuration errors surface before any output exists.
pub fn execute(cfg: &RunConfig, built: &Built) -> Execution {
    let start = Instant::now();
    let mut sink = Sink::default();
    let mut result = match built {
        Built::Conv(m) => run_conv(cfg, m, &mut sink),
        Built::Corr(m) => run_corr(cfg, m, &mut sink),
        Built::Burgers(m) => run_burgers(cfg, m, &mut sink),
        Built::Matrix { sys, g0 } => run_matrix(cfg, sys, g0, &mut sink),
    };
    if result.is_ok() && cfg.oracle {
        let tolerance = cfg.tolerance();
        for q in &sink.queries {
            if let Some(error) = q.oracle_error {
                if !(error <= tolerance) {
                    result = Err(CliError::OracleDisagreement {
                        t: q.t,
                        error,
                        tolerance,
                    });
                    break;
                }
            }
        }
    }
    sink.trace_csv();
    let error = result.err();
    let status = error.as_ref().map_or("ok", CliError::status);
    Execution {
        report: RunReport {
            config: cfg.clone(),
            path: path_label(cfg),
            status,
            error: error.as_ref().map(ToString::to_string),
            queries: sink.queries,
        },
        files: sink.files,
        timings: Timings {
            total_seconds: start.elapsed().as_secs_f64(),
            queries: sink.timings,
        },
        final_field: sink.final_field,
        error,
    }
}

fn det2_pair(z: C64) -> Option<[f64; 2]> {
    Some([z.re, z.im])
}

/// Fills the relation diagnostics of a solved flow state.
fn flow_diagnostics(q: &mut QueryReport, state: &FlowState) {
    if let Some(rel) = &state.relation {
        q.fredholm_residual = Some(rel.residual);
        q.det2 = det2_pair(rel.det2);
    }
    q.qprime_hs = Some(hs_norm(&state.qprime));
}

fn run_conv(cfg: &RunConfig, m: &ConvModel, sink: &mut Sink) -> Result<(), CliError> {
    let grid = m.grid().clone();
    let times = cfg.times();
    let base = FlowConfig::new(grid.clone(), m.d.clone(), Coupling::One, times.t_final)
        .with_dt(times.dt)
        .with_det2_stride(cfg.det2_stride);
    let g0 = Kernel2D::circulant(&m.g0);
    let solve = |t: f64| {
        conv_pole_scan(m, t)?;
        solve_at(&FlowConfig { t_final: t, ..base.clone() }, &g0, cfg.general_path)
    };
    let origin = grid.origin_index();
    for t in cfg.query_times() {
        let clock = Instant::now();
        let state = solve(t)?;
        let g = state.g.clone().expect("relation solved");
        let slice = g.column(origin);
        let mut q = QueryReport {
            t,
            boundary_mass: Some(grid.boundary_mass(&slice.values)),
            ..Default::default()
        };
        flow_diagnostics(&mut q, &state);
        q.pde_residual = residual(t, |s| Ok(solve(s)?.g.expect("relation solved")), |prev, next, h| {
            pde_residual(prev, &g, next, h, &base, t)
        });
        let oracle = if cfg.oracle {
            let o = direct_conv(&m.d, &m.g0, t, times.dt, ConvOracleOptions::default())?;
            q.oracle_error = Some(slice.relative_l2_error(&o));
            Some(o)
        } else {
            None
        };
        let closed = conv_closed_form(m, t)?;
        let tag = time_tag(t);
        sink.file(format!("g_t{tag}.csv"), field_csv(&slice));
        let mut header = vec!["x", "g_re", "g_im", "closed_re", "closed_im"];
        if oracle.is_some() {
            header.extend(["oracle_re", "oracle_im"]);
        }
        let mut plot = Table::new(&header);
        for (i, x) in grid.points().iter().enumerate() {
            let (v, c) = (slice.values[i], closed.values[i]);
            let mut row = vec![*x, v.re, v.im, c.re, c.im];
            if let Some(o) = &oracle {
                row.extend([o.values[i].re, o.values[i].im]);
            }
            plot.row(&row);
        }
        sink.file(format!("plotdata_t{tag}.csv"), plot.into_string());
        sink.trace.extend(state.det2_trace);
        sink.final_field = slice.values;
        sink.queries.push(q);
        sink.timings.push(QueryTiming {
            t,
            seconds: clock.elapsed().as_secs_f64(),
        });
    }
    Ok(())
}

fn run_corr(cfg: &RunConfig, m: &CorrModel, sink: &mut Sink) -> Result<(), CliError> {
    let grid = m.grid().clone();
    let times = cfg.times();
    let base = m
        .flow_config(times.t_final)?
        .with_dt(times.dt)
        .with_det2_stride(cfg.det2_stride);
    let solve = |t: f64| solve_at(&FlowConfig { t_final: t, ..base.clone() }, &m.g0, cfg.general_path);
    let origin = grid.origin_index();
    for t in cfg.query_times() {
        let clock = Instant::now();
        let state = solve(t)?;
        let g = state.g.clone().expect("relation solved");
        let slice = g.column(origin);
        let mut q = QueryReport {
            t,
            boundary_mass: Some(grid.boundary_mass(&slice.values)),
            ..Default::default()
        };
        flow_diagnostics(&mut q, &state);
        q.pde_residual = residual(t, |s| Ok(solve(s)?.g.expect("relation solved")), |prev, next, h| {
            pde_residual(prev, &g, next, h, &base, t)
        });
        let oracle = if cfg.oracle {
            let o = direct_corr(&m.d, &m.b, &m.g0, t, times.dt)?;
            q.oracle_error = Some(g.relative_hs_error(&o)?);
            Some(o.column(origin))
        } else {
            None
        };
        let tag = time_tag(t);
        sink.file(format!("g_t{tag}.csv"), kernel_csv(&g));
        let mut header = vec!["x", "g_re", "g_im"];
        if oracle.is_some() {
            header.extend(["oracle_re", "oracle_im"]);
        }
        let mut plot = Table::new(&header);
        for (i, x) in grid.points().iter().enumerate() {
            let v = slice.values[i];
            let mut row = vec![*x, v.re, v.im];
            if let Some(o) = &oracle {
                row.extend([o.values[i].re, o.values[i].im]);
            }
            plot.row(&row);
        }
        sink.file(format!("plotdata_t{tag}_y0.csv"), plot.into_string());
        sink.trace.extend(state.det2_trace);
        sink.final_field = g.values().iter().copied().collect();
        sink.queries.push(q);
        sink.timings.push(QueryTiming {
            t,
            seconds: clock.elapsed().as_secs_f64(),
        });
    }
    Ok(())
}

/// Central-difference certificate at `t`, or `None` when `t` is too close to
/// the origin or a neighbouring solve fails.
fn residual<K>(
    t: f64,
    solve: impl Fn(f64) -> Result<K, riccati_core::Error>,
    check: impl Fn(&K, &K, f64) -> Result<f64, riccati_core::Error>,
) -> Option<f64> {
    let h = RESIDUAL_STEP;
    if t < h {
        return None;
    }
    let prev = solve(t - h).ok()?;
    let next = solve(t + h).ok()?;
    check(&prev, &next, h).ok()
}

fn relative_l2(num: &[C64], den: &[C64]) -> f64 {
    let n: f64 = num.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let d: f64 = den.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    n / d.max(1.0)
}

fn run_burgers(cfg: &RunConfig, m: &BurgersModel, sink: &mut Sink) -> Result<(), CliError> {
    let grid = m.q0.grid.clone();
    let times = cfg.times();
    let u0 = burgers_cole_hopf(m, 0.0)?;
    for t in cfg.query_times() {
        let clock = Instant::now();
        let f = burgers_fields(m, t)?;
        let u = f.g.map(|v| -2.0 * v);
        let mismatch: Vec<C64> = f
            .p
            .values
            .iter()
            .zip(&f.g.values)
            .zip(&f.q.values)
            .map(|((p, g), q)| p - g * q)
            .collect();
        let mut q = QueryReport {
            t,
            fredholm_residual: Some(relative_l2(&mismatch, &f.p.values)),
            boundary_mass: Some(grid.boundary_mass(&u.values)),
            ..Default::default()
        };
        if t >= RESIDUAL_STEP {
            q.pde_residual = burgers_residual(m, t, RESIDUAL_STEP).ok();
        }
        let oracle: Option<Field1D> = if cfg.oracle {
            let o = direct_burgers(&u0, t, times.dt)?;
            q.oracle_error = Some(u.relative_l2_error(&o));
            Some(o)
        } else {
            None
        };
        let tag = time_tag(t);
        sink.file(format!("g_t{tag}.csv"), field_csv(&f.g));
        let mut header = vec!["x", "q", "g", "u"];
        if oracle.is_some() {
            header.push("u_oracle");
        }
        let mut plot = Table::new(&header);
        for (i, x) in grid.points().iter().enumerate() {
            let mut row = vec![*x, f.q.values[i].re, f.g.values[i].re, u.values[i].re];
            if let Some(o) = &oracle {
                row.push(o.values[i].re);
            }
            plot.row(&row);
        }
        sink.file(format!("plotdata_t{tag}.csv"), plot.into_string());
        sink.final_field = f.g.values;
        sink.queries.push(q);
        sink.timings.push(QueryTiming {
            t,
            seconds: clock.elapsed().as_secs_f64(),
        });
    }
    Ok(())
}

/// Index of `t` on the uniform step grid `j·h`.
fn step_index(t: f64, h: f64) -> Result<usize, CliError> {
    if t == 0.0 {
        return Ok(0);
    }
    let j = (t / h).round();
    if (j * h - t).abs() > 1e-9 * t.max(1.0) {
        return Err(CliError::Config(format!(
            "query time {t} is not a multiple of the step {h}"
        )));
    }
    Ok(j as usize)
}

fn run_matrix(
    cfg: &RunConfig,
    sys: &BlockSystem,
    g0: &DMatrix<C64>,
    sink: &mut Sink,
) -> Result<(), CliError> {
    let times = cfg.times();
    let (steps, h) = if times.t_final == 0.0 {
        (0, times.dt)
    } else {
        let s = ((times.t_final / times.dt) - 1e-9).ceil().max(1.0) as usize;
        (s, times.t_final / s as f64)
    };
    let query = cfg.query_times();
    let indices = query
        .iter()
        .map(|&t| step_index(t, h))
        .collect::<Result<Vec<_>, _>>()?;
    // One step past the horizon feeds the central difference at t_final.
    let clock = Instant::now();
    let frames = integrate_frame(sys, g0, (steps + 1) as f64 * h, h)?;
    let direct = if cfg.oracle {
        Some(integrate_riccati_direct(sys, g0, steps as f64 * h, h)?)
    } else {
        None
    };
    let integrate_seconds = clock.elapsed().as_secs_f64();

    let k = sys.k();
    let id = DMatrix::<C64>::identity(k, k);
    for (s, frame) in frames.iter().enumerate().take(steps + 1) {
        if s % cfg.det2_stride == 0 || s == steps {
            let qp = &frame.q - &id;
            let det2 = frame.q.determinant() * (-qp.trace()).exp();
            sink.trace.push(Det2Sample {
                t: frame.t,
                det2,
                qprime_hs: qp.norm(),
            });
        }
    }
    for (n_q, (&t, &j)) in query.iter().zip(&indices).enumerate() {
        let clock = Instant::now();
        let frame = &frames[j];
        let proj = project(frame)?;
        let g = proj.state.g;
        let qp = &frame.q - &id;
        let mut q = QueryReport {
            t,
            fredholm_residual: Some((&g * &frame.q - &frame.p).norm() / frame.p.norm().max(1.0)),
            det2: det2_pair(frame.q.determinant() * (-qp.trace()).exp()),
            qprime_hs: Some(qp.norm()),
            ..Default::default()
        };
        if j >= 1 {
            if let (Ok(prev), Ok(next)) = (project(&frames[j - 1]), project(&frames[j + 1])) {
                let bl = sys.blocks(t)?;
                let rhs = &bl.c + &bl.d * &g - &g * (&bl.a + &bl.b * &g);
                let fd = (next.state.g - prev.state.g) * C64::new(0.5 / h, 0.0);
                let den = rhs.norm();
                let num = (fd - &rhs).norm();
                q.pde_residual = Some(if den == 0.0 { num } else { num / den });
            }
        }
        if let Some(direct) = &direct {
            let gd = &direct[j].g;
            q.oracle_error = Some((&g - gd).norm() / gd.norm().max(1.0));
        }
        sink.file(format!("g_t{}.csv", time_tag(t)), matrix_csv(&g));
        sink.final_field = g.iter().copied().collect();
        sink.queries.push(q);
        let mut seconds = clock.elapsed().as_secs_f64();
        if n_q == 0 {
            seconds += integrate_seconds;
        }
        sink.timings.push(QueryTiming { t, seconds });
    }
    Ok(())
}
