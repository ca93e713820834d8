//! Run configuration: JSON schema, per-model defaults and validation.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use riccati_core::matrix_riccati::BlockSystem;
use riccati_core::models::{gaussian_density, BurgersModel, ConvModel, CorrModel};
use riccati_core::{Field1D, Grid1D, Kernel2D, SpectralSymbol, C64};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Matrix,
    Conv,
    Corr,
    Burgers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub half_width: f64,
    pub n: usize,
}

/// Initial data `g₀`, one- or two-argument depending on the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `A e^{−((x−c)/w)²}`; as a kernel `A e^{−((x−c)² + y²)/w²}`.
    Gaussian {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// `A sech(x/w)` (profiles only).
    Sech {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
    },
    /// `A sech(x+y) sech(y)` (kernels only).
    SechProduct {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `A cos(2π m x / 2L)`, a single grid mode pair (profiles only).
    SingleMode { amplitude: f64, mode: i64 },
    /// Raw samples on the grid.
    Csv { path: PathBuf },
}

/// The coupling function `b(x)` of the correlation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingSpec {
    GaussianDensity {
        sigma: f64,
        #[serde(default)]
        center: f64,
    },
    Constant { value: f64 },
    Csv { path: PathBuf },
}

/// The positive heat-equation profile `q₀` of the Burgers model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeatSpec {
    /// `1 + ε e^{−πx²}`.
    Bump { eps: f64 },
    Constant { value: f64 },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitBlocks {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub g0: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    /// Rows of `Q` (and columns of `G`).
    pub k: usize,
    /// Rows of `P` (and of `G`).
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of the random block and `G₀` entries.
    #[serde(default = "half")]
    pub scale: f64,
    /// Explicit real blocks; when present `seed` and `scale` are ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<ExplicitBlocks>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimesSpec {
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Times at which outputs are written; defaults to `[t_final]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Coefficients of `1, ∂ₓ, ∂ₓ², …`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<CouplingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<HeatSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<TimesSpec>,
    #[serde(default)]
    pub oracle: bool,
    #[serde(default)]
    pub general_path: bool,
    #[serde(default = "one_usize")]
    pub det2_stride: usize,
    /// Largest accepted oracle error before the run reports disagreement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn one_usize() -> usize {
    1
}

fn default_dt() -> f64 {
    1e-3
}

impl RunConfig {
    /// A configuration holding only the model id; [`RunConfig::resolve`] fills in the preset.
    pub fn for_model(model: ModelKind) -> Self {
        Self {
            model,
            grid: None,
            symbol: None,
            g0: None,
            b: None,
            q0: None,
            matrix: None,
            times: None,
            oracle: false,
            general_path: false,
            det2_stride: 1,
            oracle_tolerance: None,
            output_dir: None,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fills every unset field with the model's preset value.
    pub fn resolve(mut self) -> Self {
        use ModelKind::*;
        let (grid, t_final, tol) = match self.model {
            Conv => (Some((20.0, 512)), 1.0, 1e-3),
            Corr => (Some((10.0, 256)), 2.0, 1e-2),
            Burgers => (Some((10.0, 256)), 1.0, 1e-4),
            Matrix => (None, 1.0, 1e-6),
        };
        if let (None, Some((half_width, n))) = (&self.grid, grid) {
            self.grid = Some(GridSpec { half_width, n });
        }
        if matches!(self.model, Conv | Corr) && self.symbol.is_none() {
            self.symbol = Some(vec![1.0, 0.0, 1.0]);
        }
        match self.model {
            Conv if self.g0.is_none() => {
                self.g0 = Some(InitialSpec::Gaussian {
                    amplitude: 1.0,
                    width: 1.0,
                    center: 0.0,
                })
            }
            Corr => {
                if self.g0.is_none() {
                    self.g0 = Some(InitialSpec::SechProduct { amplitude: 1.0 });
                }
                if self.b.is_none() {
                    self.b = Some(CouplingSpec::GaussianDensity {
                        sigma: 0.01,
                        center: 0.0,
                    });
                }
            }
            Burgers if self.q0.is_none() => self.q0 = Some(HeatSpec::Bump { eps: 0.1 }),
            Matrix if self.matrix.is_none() => {
                self.matrix = Some(MatrixSpec {
                    k: 2,
                    m: 2,
                    seed: 0,
                    scale: 0.5,
                    blocks: None,
                })
            }
            _ => {}
        }
        if self.times.is_none() {
            self.times = Some(TimesSpec {
                t_final,
                dt: default_dt(),
                query: None,
            });
        }
        if self.oracle_tolerance.is_none() {
            self.oracle_tolerance = Some(tol);
        }
        self
    }

    pub fn times(&self) -> &TimesSpec {
        self.times.as_ref().expect("resolved config")
    }

    pub fn query_times(&self) -> Vec<f64> {
        let t = self.times();
        t.query.clone().unwrap_or_else(|| vec![t.t_final])
    }

    pub fn tolerance(&self) -> f64 {
        self.oracle_tolerance.expect("resolved config")
    }
}

/// A validated configuration with its numerical objects built.
pub enum Built {
    Conv(ConvModel),
    Corr(CorrModel),
    Burgers(BurgersModel),
    Matrix { sys: BlockSystem, g0: DMatrix<C64> },
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn forbid<T>(field: &Option<T>, name: &str, model: ModelKind) -> Result<(), CliError> {
    if field.is_some() {
        return Err(invalid(format!("`{name}` does not apply to the {model:?} model")));
    }
    Ok(())
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| invalid(format!("{}: bad number {f:?}: {e}", path.display())))
                })
                .collect()
        })
        .collect()
}

fn csv_profile(path: &Path, grid: &Grid1D) -> Result<Field1D, CliError> {
    let rows = read_csv_rows(path)?;
    if rows.len() != grid.n() {
        return Err(invalid(format!(
            "{}: expected {} rows, found {}",
            path.display(),
            grid.n(),
            rows.len()
        )));
    }
    let values = rows
        .iter()
        .map(|r| match r.as_slice() {
            [re] => Ok(C64::new(*re, 0.0)),
            [re, im] => Ok(C64::new(*re, *im)),
            _ => Err(invalid(format!("{}: rows must hold re[,im]", path.display()))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Field1D::new(grid.clone(), values).map_err(|e| invalid(e.to_string()))
}

fn csv_kernel(path: &Path, grid: &Grid1D) -> Result<Kernel2D, CliError> {
    let rows = read_csv_rows(path)?;
    let n = grid.n();
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(invalid(format!("{}: expected {n} rows of {n} values", path.display())));
    }
    let m = DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j], 0.0));
    Kernel2D::new(grid.clone(), m).map_err(|e| invalid(e.to_string()))
}

fn finite(x: f64, name: &str) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(format!("`{name}` must be finite")))
    }
}

fn profile(spec: &InitialSpec, grid: &Grid1D) -> Result<Field1D, CliError> {
    Ok(match *spec {
        InitialSpec::Gaussian {
            amplitude,
            width,
            center,
        } => {
            if !(width > 0.0) {
                return Err(invalid("gaussian width must be positive"));
            }
            Field1D::from_fn(grid, |x| amplitude * (-((x - center) / width).powi(2)).exp())
        }
        InitialSpec::Sech { amplitude, width } => {
            if !(width > 0.0) {
                return Err(invalid("sech width must be positive"));
            }
            Field1D::from_fn(grid, |x| amplitude / (x / width).cosh())
        }
        InitialSpec::SingleMode { amplitude, mode } => {
            let k = mode as f64 * grid.dk();
            Field1D::from_fn(grid, |x| amplitude * (2.0 * std::f64::consts::PI * k * x).cos())
        }
        InitialSpec::SechProduct { .. } => {
            return Err(invalid("the sech_product family is two-argument; use it with corr"))
        }
        InitialSpec::Csv { ref path } => csv_profile(path, grid)?,
    })
}

fn kernel(spec: &InitialSpec, grid: &Grid1D) -> Result<Kernel2D, CliError> {
    Ok(match *spec {
        InitialSpec::Gaussian {
            amplitude,
            width,
            center,
        } => {
            if !(width > 0.0) {
                return Err(invalid("gaussian width must be positive"));
            }
            Kernel2D::from_fn(grid, |x, y| {
                amplitude * (-((x - center).powi(2) + y * y) / (width * width)).exp()
            })
        }
        InitialSpec::SechProduct { amplitude } => {
            Kernel2D::from_fn(grid, |x, y| amplitude / ((x + y).cosh() * y.cosh()))
        }
        InitialSpec::Csv { ref path } => csv_kernel(path, grid)?,
        _ => return Err(invalid("this g0 family is one-argument; use it with conv")),
    })
}

fn dense(rows: &[Vec<f64>], r: usize, c: usize, name: &str) -> Result<DMatrix<C64>, CliError> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(invalid(format!("block {name} must be {r}x{c}")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0)))
}

fn random_block(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<C64> {
    DMatrix::from_fn(r, c, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        C64::new(scale * v, 0.0)
    })
}

/// Validates a resolved configuration and builds its model. Performs no output.
pub fn build(cfg: &RunConfig) -> Result<Built, CliError> {
    let times = cfg.times();
    finite(times.t_final, "t_final")?;
    if times.t_final < 0.0 {
        return Err(invalid("`t_final` must be non-negative"));
    }
    if !(times.dt.is_finite() && times.dt > 0.0) {
        return Err(invalid("`dt` must be positive"));
    }
    let query = cfg.query_times();
    if query.is_empty() {
        return Err(invalid("`query` must not be empty"));
    }
    if query.iter().any(|&t| !(t.is_finite() && t >= 0.0 && t <= times.t_final)) {
        return Err(invalid("query times must lie in [0, t_final]"));
    }
    if cfg.det2_stride == 0 {
        return Err(invalid("`det2_stride` must be at least 1"));
    }
    if !(cfg.tolerance() > 0.0) {
        return Err(invalid("`oracle_tolerance` must be positive"));
    }
    let grid = match &cfg.grid {
        Some(g) if cfg.model != ModelKind::Matrix => {
            Some(Grid1D::new(g.half_width, g.n).map_err(|e| invalid(e.to_string()))?)
        }
        _ => None,
    };
    let symbol = match &cfg.symbol {
        Some(c) => {
            let s = SpectralSymbol::new(c.clone()).map_err(|e| invalid(e.to_string()))?;
            if let Some(grid) = &grid {
                let adm = s.admissibility(grid);
                if !adm.admissible {
                    return Err(invalid(format!(
                        "symbol is not diffusive or dispersive on this grid (max Re = {:.3e})",
                        adm.max_real_part
                    )));
                }
            }
            Some(s)
        }
        None => None,
    };
    let model = cfg.model;
    match model {
        ModelKind::Conv => {
            forbid(&cfg.b, "b", model)?;
            forbid(&cfg.q0, "q0", model)?;
            forbid(&cfg.matrix, "matrix", model)?;
            let grid = grid.expect("resolved grid");
            let g0 = profile(cfg.g0.as_ref().expect("resolved g0"), &grid)?;
            Ok(Built::Conv(ConvModel::new(symbol.expect("resolved symbol"), g0)))
        }
        ModelKind::Corr => {
            forbid(&cfg.q0, "q0", model)?;
            forbid(&cfg.matrix, "matrix", model)?;
            let grid = grid.expect("resolved grid");
            let g0 = kernel(cfg.g0.as_ref().expect("resolved g0"), &grid)?;
            let b = match cfg.b.as_ref().expect("resolved b") {
                CouplingSpec::GaussianDensity { sigma, center } => {
                    if !(*sigma > 0.0) {
                        return Err(invalid("`sigma` must be positive"));
                    }
                    let base = gaussian_density(&grid, *sigma);
                    if *center == 0.0 {
                        base
                    } else {
                        let c = *center;
                        let s = *sigma;
                        let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
                        Field1D::from_fn(&grid, |x| norm * (-(x - c).powi(2) / (2.0 * s * s)).exp())
                    }
                }
                CouplingSpec::Constant { value } => {
                    let v = finite(*value, "b.value")?;
                    Field1D::from_fn(&grid, |_| v)
                }
                CouplingSpec::Csv { path } => csv_profile(path, &grid)?,
            };
            CorrModel::new(symbol.expect("resolved symbol"), b, g0)
                .map(Built::Corr)
                .map_err(|e| invalid(e.to_string()))
        }
        ModelKind::Burgers => {
            forbid(&cfg.g0, "g0", model)?;
            forbid(&cfg.b, "b", model)?;
            forbid(&cfg.matrix, "matrix", model)?;
            forbid(&cfg.symbol, "symbol", model)?;
            let grid = grid.expect("resolved grid");
            let q0 = match cfg.q0.as_ref().expect("resolved q0") {
                HeatSpec::Bump { eps } => {
                    let e = finite(*eps, "q0.eps")?;
                    Field1D::from_fn(&grid, |x| 1.0 + e * (-std::f64::consts::PI * x * x).exp())
                }
                HeatSpec::Constant { value } => {
                    let v = finite(*value, "q0.value")?;
                    Field1D::from_fn(&grid, |_| v)
                }
                HeatSpec::Csv { path } => csv_profile(path, &grid)?,
            };
            BurgersModel::new(q0)
                .map(Built::Burgers)
                .map_err(|e| invalid(e.to_string()))
        }
        ModelKind::Matrix => {
            forbid(&cfg.grid, "grid", model)?;
            forbid(&cfg.symbol, "symbol", model)?;
            forbid(&cfg.g0, "g0", model)?;
            forbid(&cfg.b, "b", model)?;
            forbid(&cfg.q0, "q0", model)?;
            let spec = cfg.matrix.as_ref().expect("resolved matrix");
            let (k, m) = (spec.k, spec.m);
            if k == 0 || m == 0 {
                return Err(invalid("matrix dimensions k and m must be positive"));
            }
            let (a, b, c, d, g0) = match &spec.blocks {
                Some(bl) => (
                    dense(&bl.a, k, k, "a")?,
                    dense(&bl.b, k, m, "b")?,
                    dense(&bl.c, m, k, "c")?,
                    dense(&bl.d, m, m, "d")?,
                    dense(&bl.g0, m, k, "g0")?,
                ),
                None => {
                    if !(spec.scale.is_finite() && spec.scale >= 0.0) {
                        return Err(invalid("matrix scale must be non-negative"));
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                    let s = spec.scale;
                    (
                        random_block(&mut rng, k, k, s),
                        random_block(&mut rng, k, m, s),
                        random_block(&mut rng, m, k, s),
                        random_block(&mut rng, m, m, s),
                        random_block(&mut rng, m, k, s),
                    )
                }
            };
            if [&a, &b, &c, &d, &g0]
                .iter()
                .any(|x| x.iter().any(|v| !v.re.is_finite()))
            {
                return Err(invalid("matrix blocks must be finite"));
            }
            let sys = BlockSystem::constant(a, b, c, d).map_err(|e| invalid(e.to_string()))?;
            Ok(Built::Matrix { sys, g0 })
        }
    }
}
