//! JSON run configuration.
//!
//! ```json
//! {
//!   "model": { "alpha": 2.5, "bc": "dbc" },
//!   "profile": { "kind": "constant", "value": 1.0 },
//!   "grid": { "n_cells": 400 },
//!   "scheme": { "kind": "upwind", "cfl": 0.9, "t_end": 20.0, "output_stride": 100 },
//!   "initial": { "kind": "bump", "center": 0.5, "width": 0.5, "height": 1.0, "family": "both" },
//!   "output": { "dir": "out" },
//!   "tolerances": { "steady": 1e-8, "t_max": 200.0 }
//! }
//! ```
//!
//! Every section except `model` is optional and falls back to the defaults
//! shown above.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_state_csv;
use crate::model::{BoundaryCondition, FieldState, Grid, ModelParams, ProfileSpec, SpeedProfile};
use crate::simulator::{cosine_bump, MarchConfig, Scheme, SchemeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    #[serde(default)]
    pub epsilon: Option<f64>,
    pub bc: BoundaryCondition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_cells: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n_cells: 400 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default = "default_scheme")]
    pub kind: Scheme,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
}

fn default_scheme() -> Scheme {
    Scheme::Upwind
}
fn default_cfl() -> f64 {
    0.9
}
fn default_t_end() -> f64 {
    20.0
}
fn default_stride() -> usize {
    100
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            kind: default_scheme(),
            cfl: default_cfl(),
            t_end: default_t_end(),
            output_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    U,
    V,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    Constant {
        u: f64,
        v: f64,
    },
    /// Cosine bump `height · cos²(π (x − center) / width)`.
    Bump {
        center: f64,
        width: f64,
        height: f64,
        #[serde(default = "default_family")]
        family: Family,
    },
    /// CSV with columns `x,u,v` at the cell centres.
    FromFile {
        path: PathBuf,
    },
    /// Independent uniform samples per cell (periodic runs only).
    Random {
        low: f64,
        high: f64,
        seed: u64,
    },
}

fn default_family() -> Family {
    Family::Both
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Bump {
            center: 0.5,
            width: 0.5,
            height: 1.0,
            family: Family::Both,
        }
    }
}

/// Extrapolated boundary values above this fraction of the maximum violate
/// the zero-inflow conditions.
const INFLOW_TOLERANCE: f64 = 1e-3;

impl InitialSpec {
    /// Samples the initial state; relative paths resolve against `base`.
    pub fn build(&self, grid: &Grid, bc: BoundaryCondition, base: &Path) -> Result<FieldState> {
        let n = grid.n_cells();
        let state = match self {
            InitialSpec::Constant { u, v } => {
                if bc == BoundaryCondition::Dbc && (*u != 0.0 || *v != 0.0) {
                    return Err(Error::Config(
                        "initial: nonzero constant data violate u(0) = v(1) = 0".into(),
                    ));
                }
                FieldState::new(0.0, vec![*u; n], vec![*v; n])
            }
            InitialSpec::Bump {
                center,
                width,
                height,
                family,
            } => {
                if !(*width > 0.0 && *height >= 0.0) {
                    return Err(Error::Config(
                        "initial: bump needs width > 0 and height >= 0".into(),
                    ));
                }
                let bump = |x: f64| {
                    let s = (x - center) / width;
                    if s.abs() < 0.5 {
                        height * (std::f64::consts::PI * s).cos().powi(2)
                    } else {
                        0.0
                    }
                };
                let has_u = *family != Family::V;
                let has_v = *family != Family::U;
                if bc == BoundaryCondition::Dbc
                    && ((has_u && bump(0.0) > 0.0) || (has_v && bump(1.0) > 0.0))
                {
                    return Err(Error::Config(
                        "initial: bump does not vanish at the inflow boundaries".into(),
                    ));
                }
                let b = cosine_bump(grid, *center, *width, *height);
                let zero = vec![0.0; n];
                FieldState::new(
                    0.0,
                    if has_u { b.clone() } else { zero.clone() },
                    if has_v { b } else { zero },
                )
            }
            InitialSpec::FromFile { path } => {
                let path = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                let state = read_state_csv(&path)?;
                if state.len() != n {
                    return Err(Error::Config(format!(
                        "initial: {} has {} rows, grid has {n} cells",
                        path.display(),
                        state.len()
                    )));
                }
                if bc == BoundaryCondition::Dbc && n >= 2 {
                    let scale = state.sup_norm().max(f64::MIN_POSITIVE);
                    let u0 = 1.5 * state.u[0] - 0.5 * state.u[1];
                    let v1 = 1.5 * state.v[n - 1] - 0.5 * state.v[n - 2];
                    if u0 > INFLOW_TOLERANCE * scale || v1 > INFLOW_TOLERANCE * scale {
                        return Err(Error::Config(format!(
                            "initial: {} violates u(0) = v(1) = 0 (extrapolated {u0:e}, {v1:e})",
                            path.display()
                        )));
                    }
                }
                state
            }
            InitialSpec::Random { low, high, seed } => {
                if bc == BoundaryCondition::Dbc {
                    return Err(Error::Config(
                        "initial: random data cannot satisfy u(0) = v(1) = 0; use a bump".into(),
                    ));
                }
                if !(*low >= 0.0 && high > low) {
                    return Err(Error::Config(
                        "initial: random needs 0 <= low < high".into(),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let u = (0..n).map(|_| rng.gen_range(*low..*high)).collect();
                let v = (0..n).map(|_| rng.gen_range(*low..*high)).collect();
                FieldState::new(0.0, u, v)
            }
        };
        state.validate(grid)?;
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_steady")]
    pub steady: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
}

fn default_steady() -> f64 {
    1e-8
}
fn default_t_max() -> f64 {
    200.0
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            steady: default_steady(),
            t_max: default_t_max(),
        }
    }
}

fn default_profile() -> ProfileSpec {
    ProfileSpec::constant(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default = "default_profile")]
    pub profile: ProfileSpec,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Everything a command needs, validated.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub params: ModelParams,
    pub grid: Grid,
    pub profile: SpeedProfile,
    pub init: FieldState,
}

impl RunConfig {
    /// Parses JSON; syntax and schema errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn params(&self) -> Result<ModelParams> {
        let params = ModelParams::new(self.model.alpha, self.model.bc)?;
        match self.model.epsilon {
            Some(eps) => params.with_epsilon(eps),
            None => Ok(params),
        }
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig::new(self.scheme.kind, self.scheme.t_end)
            .with_cfl(self.scheme.cfl)
            .with_stride(self.scheme.output_stride)
    }

    pub fn march_config(&self) -> MarchConfig {
        let mut config = MarchConfig::new(self.scheme.kind)
            .with_tolerance(self.tolerances.steady)
            .with_t_max(self.tolerances.t_max);
        config.cfl = self.scheme.cfl;
        config
    }

    /// Validates every section and samples the initial state.
    pub fn prepare(&self, base: &Path) -> Result<Prepared> {
        let params = self.params()?;
        let grid = Grid::new(self.grid.n_cells)?;
        let profile = SpeedProfile::for_grid(self.profile.clone(), &grid)?;
        if params.bc.is_periodic() {
            profile.check_periodic()?;
        }
        self.scheme_config().validate()?;
        if !(self.tolerances.steady > 0.0 && self.tolerances.t_max > 0.0) {
            return Err(Error::Config(
                "tolerances: steady and t_max must be > 0".into(),
            ));
        }
        let init = self.initial.build(&grid, params.bc, base)?;
        Ok(Prepared {
            params,
            grid,
            profile,
            init,
        })
    }
}

/// Runs over a list of `α` values sharing one base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub alphas: Vec<f64>,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let sweep: SweepConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if sweep.alphas.is_empty() {
            return Err(Error::Config("sweep: alphas must not be empty".into()));
        }
        Ok(sweep)
    }
}
