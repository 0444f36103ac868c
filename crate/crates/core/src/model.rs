//! Parameters, lateral-flow speed profiles, the uniform cell grid and the
//! change of variables to constant transport speed.
//!
//! The transformed coordinate is `X(x) = C ∫_0^x dξ / c(ξ)` with the
//! harmonic-mean speed `1/C = ∫_0^1 dx / c(x)`. Densities transform as
//! `c u = C U`, so that in `(X, U, V)` both families move with the constant
//! speed `C` and the reaction term picks up the weight `β = C / c`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of quadrature sub-intervals used to tabulate `X(x)`.
pub const DEFAULT_QUADRATURE_RESOLUTION: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    /// Ring-shaped lamellipodium, `u(0)=u(1)`, `v(0)=v(1)`.
    Pbc,
    /// Zero lateral inflow, `u(0)=0`, `v(1)=0`.
    Dbc,
}

impl BoundaryCondition {
    pub fn is_periodic(self) -> bool {
        matches!(self, BoundaryCondition::Pbc)
    }
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::Pbc => f.write_str("pbc"),
            BoundaryCondition::Dbc => f.write_str("dbc"),
        }
    }
}

/// Raw biophysical rates before scaling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionalParams {
    pub kappa_br: f64,
    pub kappa_cap: f64,
    pub c_rec: f64,
    pub a0: f64,
    pub length: f64,
    /// Lateral flow speed in length/time, as a function of the
    /// dimensionless position `x ∈ [0,1]`.
    pub c_dim: ProfileSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Ratio of branching to capping rate.
    pub alpha: f64,
    /// Arp2/3 time-scale ratio; only used by the full three-field system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub bc: BoundaryCondition,
}

impl ModelParams {
    pub fn new(alpha: f64, bc: BoundaryCondition) -> Result<Self> {
        let params = Self {
            alpha,
            epsilon: None,
            bc,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.epsilon = Some(epsilon);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Parameter(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if let Some(eps) = self.epsilon {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::Parameter(format!("epsilon must be > 0, got {eps}")));
            }
        }
        Ok(())
    }
}

/// Scales raw rates into `(α, ε)` and the dimensionless speed profile
/// `c_dim / (L κ_cap)`.
pub fn nondimensionalize(
    dim: &DimensionalParams,
    bc: BoundaryCondition,
) -> Result<(ModelParams, SpeedProfile)> {
    let fields = [
        ("kappa_br", dim.kappa_br),
        ("kappa_cap", dim.kappa_cap),
        ("c_rec", dim.c_rec),
        ("a0", dim.a0),
        ("length", dim.length),
    ];
    for (name, value) in fields {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Parameter(format!(
                "{name} must be strictly positive, got {value}"
            )));
        }
    }
    let alpha = dim.kappa_br / dim.kappa_cap;
    let epsilon = dim.kappa_cap * dim.a0 / dim.c_rec;
    let params = ModelParams {
        alpha,
        epsilon: Some(epsilon),
        bc,
    };
    let scale = 1.0 / (dim.length * dim.kappa_cap);
    let profile = SpeedProfile::new(dim.c_dim.scaled(scale), DEFAULT_QUADRATURE_RESOLUTION)?;
    Ok((params, profile))
}

/// Description of a lateral flow speed on `[0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProfileSpec {
    Constant {
        value: f64,
    },
    /// `c(x) = c0 + amplitude · cos(2π · frequency · x)`
    Cosine {
        c0: f64,
        amplitude: f64,
        frequency: u32,
    },
    /// Piecewise linear through `(x[i], c[i])`, `x` strictly increasing
    /// from 0 to 1.
    Tabulated {
        x: Vec<f64>,
        c: Vec<f64>,
    },
}

impl ProfileSpec {
    pub fn constant(value: f64) -> Self {
        ProfileSpec::Constant { value }
    }

    pub fn cosine(c0: f64, amplitude: f64, frequency: u32) -> Self {
        ProfileSpec::Cosine {
            c0,
            amplitude,
            frequency,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            ProfileSpec::Constant { value } => ProfileSpec::Constant {
                value: value * factor,
            },
            ProfileSpec::Cosine {
                c0,
                amplitude,
                frequency,
            } => ProfileSpec::Cosine {
                c0: c0 * factor,
                amplitude: amplitude * factor,
                frequency: *frequency,
            },
            ProfileSpec::Tabulated { x, c } => ProfileSpec::Tabulated {
                x: x.clone(),
                c: c.iter().map(|ci| ci * factor).collect(),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ProfileSpec::Constant { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(Error::Profile(format!(
                        "constant speed must be > 0, got {value}"
                    )));
                }
            }
            ProfileSpec::Cosine { c0, amplitude, .. } => {
                if !(c0.is_finite() && amplitude.is_finite()) || c0 - amplitude.abs() <= 0.0 {
                    return Err(Error::Profile(format!(
                        "cosine speed {c0} ± {amplitude} is not bounded away from zero"
                    )));
                }
            }
            ProfileSpec::Tabulated { x, c } => {
                if x.len() != c.len() || x.len() < 2 {
                    return Err(Error::Profile(
                        "tabulated profile needs >= 2 samples and equal x/c lengths".into(),
                    ));
                }
                if x[0] != 0.0 || x[x.len() - 1] != 1.0 {
                    return Err(Error::Profile(
                        "tabulated profile must span exactly [0, 1]".into(),
                    ));
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Profile(
                        "tabulated x must be strictly increasing".into(),
                    ));
                }
                // piecewise linear interpolation never undershoots the smallest sample
                if let Some(bad) = c.iter().find(|ci| !(ci.is_finite() && **ci > 0.0)) {
                    return Err(Error::Profile(format!(
                        "tabulated speed must be > 0 everywhere, found {bad}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ProfileSpec::Constant { value } => *value,
            ProfileSpec::Cosine {
                c0,
                amplitude,
                frequency,
            } => c0 + amplitude * (2.0 * PI * *frequency as f64 * x).cos(),
            ProfileSpec::Tabulated { x: xs, c } => {
                let x = x.clamp(0.0, 1.0);
                let k = xs.partition_point(|&xi| xi <= x).clamp(1, xs.len() - 1);
                let (x0, x1) = (xs[k - 1], xs[k]);
                let w = (x - x0) / (x1 - x0);
                c[k - 1] * (1.0 - w) + c[k] * w
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ProfileSpec::Constant { .. } => 0.0,
            ProfileSpec::Cosine {
                amplitude,
                frequency,
                ..
            } => {
                let k = 2.0 * PI * *frequency as f64;
                -amplitude * k * (k * x).sin()
            }
            ProfileSpec::Tabulated { x: xs, c } => {
                let x = x.clamp(0.0, 1.0);
                let k = xs.partition_point(|&xi| xi <= x).clamp(1, xs.len() - 1);
                (c[k] - c[k - 1]) / (xs[k] - xs[k - 1])
            }
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match self {
            ProfileSpec::Constant { value } => (*value, *value),
            ProfileSpec::Cosine {
                c0,
                amplitude,
                frequency,
            } => {
                if *frequency == 0 {
                    (c0 + amplitude, c0 + amplitude)
                } else {
                    (c0 - amplitude.abs(), c0 + amplitude.abs())
                }
            }
            ProfileSpec::Tabulated { c, .. } => c
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &ci| {
                    (lo.min(ci), hi.max(ci))
                }),
        }
    }

    pub fn is_periodic(&self) -> bool {
        match self {
            ProfileSpec::Constant { .. } | ProfileSpec::Cosine { .. } => true,
            ProfileSpec::Tabulated { c, .. } => {
                let (first, last) = (c[0], c[c.len() - 1]);
                (first - last).abs() <= 1e-12 * first.abs().max(1.0)
            }
        }
    }
}

/// A validated speed profile with its harmonic mean and the tabulated
/// coordinate map `x ↦ X`.
///
/// `X` is stored at `resolution + 1` equispaced nodes together with its exact
/// slope `C / c(x)`; evaluation between nodes uses cubic Hermite
/// interpolation, inversion uses bisection on the table followed by a
/// safeguarded Newton iteration inside the bracketing segment.
#[derive(Debug, Clone)]
pub struct SpeedProfile {
    spec: ProfileSpec,
    c_min: f64,
    c_max: f64,
    big_c: f64,
    table: Vec<f64>,
    slopes: Vec<f64>,
}

impl SpeedProfile {
    pub fn new(spec: ProfileSpec, resolution: usize) -> Result<Self> {
        spec.validate()?;
        if resolution < 2 {
            return Err(Error::Profile("quadrature resolution must be >= 2".into()));
        }
        let (c_min, c_max) = spec.bounds();
        let h = 1.0 / resolution as f64;
        let node = |k: usize| k as f64 * h;
        let mut inv = Vec::with_capacity(resolution + 1);
        for k in 0..=resolution {
            let c = spec.eval(node(k));
            if !(c > 0.0) {
                return Err(Error::Profile(format!(
                    "speed must be positive, c({}) = {c}",
                    node(k)
                )));
            }
            inv.push(1.0 / c);
        }
        // cumulative composite Simpson, one midpoint per sub-interval
        let mut cumulative = Vec::with_capacity(resolution + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for k in 0..resolution {
            let mid = spec.eval(node(k) + 0.5 * h);
            if !(mid > 0.0) {
                return Err(Error::Profile(format!(
                    "speed must be positive, c({}) = {mid}",
                    node(k) + 0.5 * h
                )));
            }
            acc += h / 6.0 * (inv[k] + 4.0 / mid + inv[k + 1]);
            cumulative.push(acc);
        }
        let total = acc;
        let big_c = 1.0 / total;
        let table: Vec<f64> = cumulative.iter().map(|s| s / total).collect();
        let slopes: Vec<f64> = inv.iter().map(|i| i * big_c).collect();
        Ok(Self {
            spec,
            c_min,
            c_max,
            big_c,
            table,
            slopes,
        })
    }

    /// Profile with the default quadrature resolution, at least four times
    /// finer than `grid`.
    pub fn for_grid(spec: ProfileSpec, grid: &Grid) -> Result<Self> {
        Self::new(spec, DEFAULT_QUADRATURE_RESOLUTION.max(4 * grid.n_cells()))
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(ProfileSpec::constant(value), DEFAULT_QUADRATURE_RESOLUTION)
    }

    pub fn spec(&self) -> &ProfileSpec {
        &self.spec
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.spec.eval(x)
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// Harmonic-mean speed.
    pub fn big_c(&self) -> f64 {
        self.big_c
    }

    pub fn beta(&self, x: f64) -> f64 {
        self.big_c / self.eval(x)
    }

    pub fn is_constant(&self) -> bool {
        self.c_min == self.c_max
    }

    pub fn resolution(&self) -> usize {
        self.table.len() - 1
    }

    pub fn x_to_big_x(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let n = self.resolution();
        let h = 1.0 / n as f64;
        let k = ((x * n as f64) as usize).min(n - 1);
        let s = (x - k as f64 * h) / h;
        self.hermite(k, s)
    }

    fn hermite(&self, k: usize, s: f64) -> f64 {
        let h = 1.0 / self.resolution() as f64;
        let (y0, y1) = (self.table[k], self.table[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1
    }

    fn hermite_slope(&self, k: usize, s: f64) -> f64 {
        let h = 1.0 / self.resolution() as f64;
        let (y0, y1) = (self.table[k], self.table[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let s2 = s * s;
        ((6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * m1)
            / h
    }

    /// Inverse of [`SpeedProfile::x_to_big_x`].
    pub fn big_x_to_x(&self, big_x: f64) -> f64 {
        if big_x <= 0.0 {
            return 0.0;
        }
        if big_x >= 1.0 {
            return 1.0;
        }
        let n = self.resolution();
        let h = 1.0 / n as f64;
        let k = self.table.partition_point(|&t| t <= big_x).clamp(1, n) - 1;
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let span = self.table[k + 1] - self.table[k];
        let mut s = if span > 0.0 {
            ((big_x - self.table[k]) / span).clamp(0.0, 1.0)
        } else {
            0.5
        };
        for _ in 0..60 {
            let f = self.hermite(k, s) - big_x;
            if f.abs() < 1e-16 {
                break;
            }
            if f > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let d = self.hermite_slope(k, s) * h;
            let mut next = if d > 0.0 { s - f / d } else { 0.5 * (lo + hi) };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - s).abs() < 1e-17 {
                s = next;
                break;
            }
            s = next;
        }
        (k as f64 + s) * h
    }

    pub fn check_periodic(&self) -> Result<()> {
        if self.spec.is_periodic() {
            Ok(())
        } else {
            Err(Error::Profile(
                "periodic boundary conditions need c(0) = c(1)".into(),
            ))
        }
    }
}

/// Uniform cell-centred grid on `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n_cells: usize,
}

impl Grid {
    pub const MIN_CELLS: usize = 8;

    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < Self::MIN_CELLS {
            return Err(Error::Config(format!(
                "grid needs at least {} cells, got {n_cells}",
                Self::MIN_CELLS
            )));
        }
        Ok(Self { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n_cells as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    /// Position of the interface between cell `i - 1` and cell `i`.
    pub fn face(&self, i: usize) -> f64 {
        i as f64 / self.n_cells as f64
    }
}

/// Cell averages of both families (and optionally Arp2/3) at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Option<Vec<f64>>,
}

impl FieldState {
    pub fn new(t: f64, u: Vec<f64>, v: Vec<f64>) -> Self {
        Self { t, u, v, a: None }
    }

    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.n_cells();
        Self::new(0.0, vec![0.0; n], vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let n = grid.n_cells();
        if self.u.len() != n || self.v.len() != n {
            return Err(Error::Config(format!(
                "state has {} / {} cells, grid has {n}",
                self.u.len(),
                self.v.len()
            )));
        }
        if self
            .u
            .iter()
            .chain(self.v.iter())
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::Domain("densities must be finite and >= 0".into()));
        }
        if let Some(a) = &self.a {
            if a.len() != n {
                return Err(Error::Config("Arp2/3 field has wrong length".into()));
            }
            if a.iter().any(|ai| !(*ai > 0.0 && *ai <= 1.0)) {
                return Err(Error::Domain("Arp2/3 density must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.u
            .iter()
            .chain(self.v.iter())
            .fold(0.0_f64, |m, w| m.max(w.abs()))
    }

    pub fn sup_distance(&self, other: &FieldState) -> f64 {
        let du = self.u.iter().zip(&other.u).map(|(a, b)| (a - b).abs());
        let dv = self.v.iter().zip(&other.v).map(|(a, b)| (a - b).abs());
        du.chain(dv).fold(0.0, f64::max)
    }
}

/// Linear interpolation of cell-centred samples at `pos ∈ [0,1]`.
///
/// Periodic data wrap around; otherwise the two outermost cells are
/// extrapolated linearly to the boundary (clamped at zero).
pub fn interpolate_cells(values: &[f64], pos: f64, periodic: bool) -> f64 {
    let n = values.len();
    let s = pos * n as f64 - 0.5;
    if periodic {
        let fl = s.floor();
        let w = s - fl;
        let i0 = (fl as i64).rem_euclid(n as i64) as usize;
        let i1 = (i0 + 1) % n;
        return values[i0] * (1.0 - w) + values[i1] * w;
    }
    let (i0, w) = if s < 0.0 {
        (0, s)
    } else if s >= (n - 1) as f64 {
        (n - 2, s - (n - 2) as f64)
    } else {
        let fl = s.floor();
        (fl as usize, s - fl)
    };
    (values[i0] * (1.0 - w) + values[i0 + 1] * w).max(0.0)
}

/// Densities `U, V` sampled at the uniform cell centres of the `X` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedState {
    pub t: f64,
    pub big_u: Vec<f64>,
    pub big_v: Vec<f64>,
}

/// Maps `(u, v)` on the physical grid to `(U, V)` on the uniform `X` grid
/// with the same number of cells, `U(X(x)) = c(x) u(x) / C`.
pub fn transform_state(
    state: &FieldState,
    profile: &SpeedProfile,
    bc: BoundaryCondition,
) -> TransformedState {
    let n = state.len();
    let periodic = bc.is_periodic();
    let mut big_u = Vec::with_capacity(n);
    let mut big_v = Vec::with_capacity(n);
    for j in 0..n {
        let big_x = (j as f64 + 0.5) / n as f64;
        let x = profile.big_x_to_x(big_x);
        let weight = profile.eval(x) / profile.big_c();
        big_u.push(weight * interpolate_cells(&state.u, x, periodic));
        big_v.push(weight * interpolate_cells(&state.v, x, periodic));
    }
    TransformedState {
        t: state.t,
        big_u,
        big_v,
    }
}

/// Inverse of [`transform_state`], `u(x) = C U(X(x)) / c(x)`.
pub fn inverse_transform(
    state: &TransformedState,
    profile: &SpeedProfile,
    bc: BoundaryCondition,
) -> FieldState {
    let n = state.big_u.len();
    let periodic = bc.is_periodic();
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let x = (i as f64 + 0.5) / n as f64;
        let big_x = profile.x_to_big_x(x);
        let weight = profile.big_c() / profile.eval(x);
        u.push(weight * interpolate_cells(&state.big_u, big_x, periodic));
        v.push(weight * interpolate_cells(&state.big_v, big_x, periodic));
    }
    FieldState::new(state.t, u, v)
}
