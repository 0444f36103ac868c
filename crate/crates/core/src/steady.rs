//! Nontrivial steady states: the bifurcation from zero and its normal form,
//! the explicit periodic branch and its perturbation for almost constant
//! speed, and phase-plane shooting under zero-inflow boundary conditions.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BoundaryCondition, Grid, ProfileSpec, SpeedProfile};
use crate::numerics::{adaptive_simpson, bisect, bisect_relative, simpson};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyMethod {
    Constant,
    Perturbative,
    Shooting,
    TimeMarch,
}

impl std::fmt::Display for SteadyMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SteadyMethod::Constant => "constant",
            SteadyMethod::Perturbative => "perturbative",
            SteadyMethod::Shooting => "shooting",
            SteadyMethod::TimeMarch => "time-march",
        })
    }
}

/// A stationary pair `(ū, v̄)` at the cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyProfile {
    pub x: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub v_bar: Vec<f64>,
    pub alpha: f64,
    pub bc: BoundaryCondition,
    pub method: SteadyMethod,
    /// Sup norm of the discrete stationary operator applied to the profile.
    pub residual: f64,
    /// First-integral level of the shooting solution.
    pub energy: Option<f64>,
    /// `(m, M)` bounding `ū, v̄` (periodic) or `ū/x, v̄/(1−x)` (zero inflow)
    /// when all interior values are positive.
    pub bounds: Option<(f64, f64)>,
}

impl SteadyProfile {
    pub fn new(
        u_bar: Vec<f64>,
        v_bar: Vec<f64>,
        alpha: f64,
        bc: BoundaryCondition,
        method: SteadyMethod,
        residual: f64,
    ) -> Self {
        let n = u_bar.len();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for i in 0..n {
            let (a, b) = match bc {
                BoundaryCondition::Pbc => (u_bar[i], v_bar[i]),
                BoundaryCondition::Dbc => (u_bar[i] / x[i], v_bar[i] / (1.0 - x[i])),
            };
            lo = lo.min(a).min(b);
            hi = hi.max(a).max(b);
        }
        let bounds = (lo > 0.0).then_some((lo, hi));
        Self {
            x,
            u_bar,
            v_bar,
            alpha,
            bc,
            method,
            residual,
            energy: None,
            bounds,
        }
    }

    pub fn len(&self) -> usize {
        self.u_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_bar.is_empty()
    }

    pub fn sup_distance(&self, other: &SteadyProfile) -> f64 {
        let du = self
            .u_bar
            .iter()
            .zip(&other.u_bar)
            .map(|(a, b)| (a - b).abs());
        let dv = self
            .v_bar
            .iter()
            .zip(&other.v_bar)
            .map(|(a, b)| (a - b).abs());
        du.chain(dv).fold(0.0, f64::max)
    }
}

/// Sup norm of the second-order centred stationary operator
/// `∓∂x(c w) + reaction` applied to `(u, v)`.
///
/// Ghost cells use odd reflection at inflow boundaries (`u(0) = 0`,
/// `v(1) = 0`) and linear extrapolation at outflow boundaries.
pub fn stationary_residual_centered<C>(
    u: &[f64],
    v: &[f64],
    alpha: f64,
    bc: BoundaryCondition,
    speed: C,
) -> f64
where
    C: Fn(f64) -> f64,
{
    let n = u.len();
    let dx = 1.0 / n as f64;
    let x = |i: isize| (i as f64 + 0.5) * dx;
    let ghost = |w: &[f64], i: isize, odd_left: bool, odd_right: bool| -> f64 {
        if (0..n as isize).contains(&i) {
            return w[i as usize];
        }
        match bc {
            BoundaryCondition::Pbc => w[i.rem_euclid(n as isize) as usize],
            BoundaryCondition::Dbc if i < 0 => {
                if odd_left {
                    -w[0]
                } else {
                    2.0 * w[0] - w[1]
                }
            }
            BoundaryCondition::Dbc => {
                if odd_right {
                    -w[n - 1]
                } else {
                    2.0 * w[n - 1] - w[n - 2]
                }
            }
        }
    };
    let mut worst = 0.0_f64;
    for i in 0..n as isize {
        let flux_u = |k: isize| speed(x(k)) * ghost(u, k, true, false);
        let flux_v = |k: isize| speed(x(k)) * ghost(v, k, false, true);
        let (ui, vi) = (u[i as usize], v[i as usize]);
        let denom = 1.0 + ui + vi;
        let ru = -(flux_u(i + 1) - flux_u(i - 1)) / (2.0 * dx) + alpha * vi / denom - ui;
        let rv = (flux_v(i + 1) - flux_v(i - 1)) / (2.0 * dx) + alpha * ui / denom - vi;
        worst = worst.max(ru.abs()).max(rv.abs());
    }
    worst
}

/// Bifurcation point of the nontrivial branch from the zero state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BifurcationData {
    pub bc: BoundaryCondition,
    /// Harmonic-mean speed.
    pub big_c: f64,
    /// Smallest positive root of `C b + tan b = 0` (zero inflow only).
    pub b0: Option<f64>,
    pub alpha0: f64,
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
}

/// `b0` and `α0 = 1/|cos b0|`; `α0 = 1` for periodic conditions.
///
/// The root is bracketed on `(π/2, π)` through `g(b) = C b cos b + sin b`,
/// which has the same roots as `C b + tan b` there but no pole.
pub fn bifurcation_value(bc: BoundaryCondition, big_c: f64) -> Result<BifurcationData> {
    if !(big_c > 0.0 && big_c.is_finite()) {
        return Err(Error::Parameter(format!("C must be > 0, got {big_c}")));
    }
    let (b0, alpha0) = match bc {
        BoundaryCondition::Pbc => (None, 1.0),
        BoundaryCondition::Dbc => {
            let g = |b: f64| big_c * b * b.cos() + b.sin();
            let b0 = bisect(g, FRAC_PI_2, PI, 1e-12)?;
            (Some(b0), 1.0 / b0.cos().abs())
        }
    };
    Ok(BifurcationData {
        bc,
        big_c,
        b0,
        alpha0,
        kappa1: None,
        kappa2: None,
    })
}

impl BifurcationData {
    /// Null eigenfunction `(Ũ, Ṽ)` of the linearisation at `α0`, evaluated at
    /// the transformed coordinate `X`.
    pub fn eigen_pair(&self, big_x: f64) -> (f64, f64) {
        match self.b0 {
            None => (1.0, 1.0),
            Some(b) => ((b * big_x).sin(), (b * (1.0 - big_x)).sin()),
        }
    }
}

/// `(Ũ, Ṽ)` sampled at the cell centres of the uniform `X` grid.
pub fn null_eigenfunction(bif: &BifurcationData, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    grid.centers()
        .into_iter()
        .map(|x| bif.eigen_pair(x))
        .unzip()
}

/// Normal-form coefficients `κ1, κ2` by composite Simpson in `X`.
pub fn normal_form_coefficients(
    bif: &BifurcationData,
    profile: &SpeedProfile,
    panels: usize,
) -> (f64, f64) {
    let beta = |big_x: f64| profile.beta(profile.big_x_to_x(big_x));
    let squares = |big_x: f64| {
        let (u, v) = bif.eigen_pair(big_x);
        u * u + v * v
    };
    let cross = simpson(
        |big_x| {
            let (u, v) = bif.eigen_pair(big_x);
            u * v
        },
        0.0,
        1.0,
        panels,
    );
    let kappa1 = simpson(squares, 0.0, 1.0, panels) / (2.0 * cross);
    let weighted = simpson(
        |big_x| {
            let (u, v) = bif.eigen_pair(big_x);
            beta(big_x) * (u + v) * (u * u + v * v)
        },
        0.0,
        1.0,
        panels,
    );
    let kappa2 = bif.alpha0 * weighted / (2.0 * cross);
    (kappa1, kappa2)
}

/// Bifurcation value together with its normal-form coefficients.
pub fn bifurcation_analysis(
    bc: BoundaryCondition,
    profile: &SpeedProfile,
) -> Result<BifurcationData> {
    let mut bif = bifurcation_value(bc, profile.big_c())?;
    let (k1, k2) = normal_form_coefficients(&bif, profile, 2048);
    bif.kappa1 = Some(k1);
    bif.kappa2 = Some(k2);
    Ok(bif)
}

/// Derivative of the bifurcating branch with respect to `α` at `α0`,
/// `(κ1 C / (κ2 c(x))) (Ũ, Ṽ)(X(x))`, at the physical cell centres.
pub fn branch_slope(
    bif: &BifurcationData,
    profile: &SpeedProfile,
    grid: &Grid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (k1, k2) = match (bif.kappa1, bif.kappa2) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let (a, b) = normal_form_coefficients(bif, profile, 2048);
            (a, b)
        }
    };
    if !(k1 > 0.0 && k2 > 0.0) {
        return Err(Error::Numerical(format!(
            "normal-form coefficients must be positive, got {k1}, {k2}"
        )));
    }
    Ok(grid
        .centers()
        .into_iter()
        .map(|x| {
            let scale = k1 * profile.big_c() / (k2 * profile.eval(x));
            let (u, v) = bif.eigen_pair(profile.x_to_big_x(x));
            (scale * u, scale * v)
        })
        .unzip())
}

/// The explicit homogeneous branch `ū = v̄ = (α − 1)/2` for constant speed
/// and periodic conditions.
pub fn pbc_constant_steady(alpha: f64, grid: &Grid) -> Result<SteadyProfile> {
    if !(alpha > 1.0) {
        return Err(Error::Domain(format!(
            "no nontrivial constant steady state for alpha = {alpha} <= 1"
        )));
    }
    let level = 0.5 * (alpha - 1.0);
    let n = grid.n_cells();
    let u = vec![level; n];
    let residual = stationary_residual_centered(&u, &u, alpha, BoundaryCondition::Pbc, |_| 1.0);
    Ok(SteadyProfile::new(
        u.clone(),
        u,
        alpha,
        BoundaryCondition::Pbc,
        SteadyMethod::Constant,
        residual,
    ))
}

/// Real 2×2 matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Mat2([f64; 4]);

impl Mat2 {
    const IDENTITY: Mat2 = Mat2([1.0, 0.0, 0.0, 1.0]);

    fn scale(self, s: f64) -> Mat2 {
        Mat2(self.0.map(|a| a * s))
    }

    fn add(self, o: Mat2) -> Mat2 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = o.0;
        Mat2([a + e, b + f, c + g, d + h])
    }

    fn mul(self, o: Mat2) -> Mat2 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = o.0;
        Mat2([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }

    fn apply(self, w: [f64; 2]) -> [f64; 2] {
        let [a, b, c, d] = self.0;
        [a * w[0] + b * w[1], c * w[0] + d * w[1]]
    }

    fn det(self) -> f64 {
        let [a, b, c, d] = self.0;
        a * d - b * c
    }

    fn inverse(self) -> Option<Mat2> {
        let det = self.det();
        if det.abs() < 1e-300 || !det.is_finite() {
            return None;
        }
        let [a, b, c, d] = self.0;
        Some(Mat2([d / det, -b / det, -c / det, a / det]))
    }

    /// `e^{t A}` for a trace-free `A`, where `A² = −det(A) I`.
    fn expm_traceless(self, t: f64) -> Mat2 {
        let lambda2 = -self.det();
        let (even, odd) = if lambda2 > 1e-30 {
            let l = lambda2.sqrt();
            ((l * t).cosh(), (l * t).sinh() / l)
        } else if lambda2 < -1e-30 {
            let w = (-lambda2).sqrt();
            ((w * t).cos(), (w * t).sin() / w)
        } else {
            // nilpotent (Jordan) case
            (1.0, t)
        };
        Mat2::IDENTITY.scale(even).add(self.scale(odd))
    }

    /// Truncated Taylor series with scaling and squaring.
    fn expm_series(self, t: f64) -> Mat2 {
        let a = self.scale(t);
        let norm = a.0.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let squarings = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as i32
        } else {
            0
        };
        let a = a.scale(0.5f64.powi(squarings));
        let mut term = Mat2::IDENTITY;
        let mut sum = Mat2::IDENTITY;
        for k in 1..20 {
            term = term.mul(a).scale(1.0 / k as f64);
            sum = sum.add(term);
        }
        for _ in 0..squarings {
            sum = sum.mul(sum);
        }
        sum
    }

    fn expm(self, t: f64) -> Mat2 {
        let [a, _, _, d] = self.0;
        if (a + d).abs() <= 1e-14 * (a.abs() + d.abs()).max(1e-300) {
            self.expm_traceless(t)
        } else {
            self.expm_series(t)
        }
    }
}

/// Linearisation matrix of the periodic almost-constant-speed problem.
fn perturbation_matrix(alpha: f64, c0: f64) -> Mat2 {
    Mat2([
        1.0 - 3.0 * alpha,
        alpha + 1.0,
        -alpha - 1.0,
        3.0 * alpha - 1.0,
    ])
    .scale(1.0 / (2.0 * c0 * alpha))
}

/// First-order correction `(u1, v1)` at the points `xs` for the periodic
/// problem with `c = c0 + ε c1`; `dc1` is `c1'`.
///
/// Solves `w' − M w = h`, `h = −c1'/(2 c0) (1, 1)`, on periodic functions:
/// `w(x) = e^{Mx} ((e^{−M} − I)^{−1} J(1) + J(x))` with
/// `J(x) = ∫_0^x e^{−My} h(y) dy` by cumulative Simpson.
pub fn perturbation_first_order<D>(
    alpha: f64,
    c0: f64,
    dc1: D,
    xs: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)>
where
    D: Fn(f64) -> f64,
{
    if !(alpha > 1.0) {
        return Err(Error::Domain(format!(
            "perturbation matrix is singular for alpha = {alpha} <= 1"
        )));
    }
    if !(c0 > 0.0) {
        return Err(Error::Parameter(format!("c0 must be > 0, got {c0}")));
    }
    let m = perturbation_matrix(alpha, c0);
    let source = |y: f64| {
        let h = -dc1(y) / (2.0 * c0);
        m.expm(-y).apply([h, h])
    };
    // cumulative integral on a fine uniform table, then linear lookup between
    // Simpson nodes (the nodes include every requested point when xs are
    // cell centres of a grid dividing the table)
    let resolution = 8192usize;
    let step = 1.0 / resolution as f64;
    let mut cumulative = Vec::with_capacity(resolution + 1);
    let mut acc = [0.0, 0.0];
    cumulative.push(acc);
    let mut prev = source(0.0);
    for k in 0..resolution {
        let a = k as f64 * step;
        let mid = source(a + 0.5 * step);
        let next = source(a + step);
        for c in 0..2 {
            acc[c] += step / 6.0 * (prev[c] + 4.0 * mid[c] + next[c]);
        }
        cumulative.push(acc);
        prev = next;
    }
    let integral_at = |x: f64| -> [f64; 2] {
        let s = x * resolution as f64;
        let k = (s.floor() as usize).min(resolution - 1);
        let a = k as f64 * step;
        // finish the partial interval with its own Simpson rule
        let (fa, fb) = (source(a), source(x));
        let fm = source(0.5 * (a + x));
        let w = x - a;
        [
            cumulative[k][0] + w / 6.0 * (fa[0] + 4.0 * fm[0] + fb[0]),
            cumulative[k][1] + w / 6.0 * (fa[1] + 4.0 * fm[1] + fb[1]),
        ]
    };
    let total = cumulative[resolution];
    let inverse = m
        .expm(-1.0)
        .add(Mat2::IDENTITY.scale(-1.0))
        .inverse()
        .ok_or_else(|| Error::Numerical("e^{-M} - I is not invertible".into()))?;
    let offset = inverse.apply(total);
    let mut u1 = Vec::with_capacity(xs.len());
    let mut v1 = Vec::with_capacity(xs.len());
    for &x in xs {
        let j = integral_at(x);
        let w = m.expm(x).apply([offset[0] + j[0], offset[1] + j[1]]);
        u1.push(w[0]);
        v1.push(w[1]);
    }
    Ok((u1, v1))
}

/// Perturbative periodic steady state `(α−1)(1/2 + ε u1, 1/2 + ε v1)` for
/// `c = c0 + ε c1`.
pub fn pbc_perturbative_steady<C, D>(
    alpha: f64,
    c0: f64,
    c1: C,
    dc1: D,
    eps_c: f64,
    grid: &Grid,
) -> Result<SteadyProfile>
where
    C: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let xs = grid.centers();
    let (u1, v1) = perturbation_first_order(alpha, c0, dc1, &xs)?;
    let u: Vec<f64> = u1
        .iter()
        .map(|w| (alpha - 1.0) * (0.5 + eps_c * w))
        .collect();
    let v: Vec<f64> = v1
        .iter()
        .map(|w| (alpha - 1.0) * (0.5 + eps_c * w))
        .collect();
    let residual = stationary_residual_centered(&u, &v, alpha, BoundaryCondition::Pbc, |x| {
        c0 + eps_c * c1(x)
    });
    Ok(SteadyProfile::new(
        u,
        v,
        alpha,
        BoundaryCondition::Pbc,
        SteadyMethod::Perturbative,
        residual,
    ))
}

/// Perturbative periodic steady state for an arbitrary profile, split as
/// `c = c0 + (c − c0)` with `c0` the mean speed.
pub fn pbc_perturbative_for_spec(
    alpha: f64,
    spec: &ProfileSpec,
    grid: &Grid,
) -> Result<SteadyProfile> {
    if !spec.is_periodic() {
        return Err(Error::Profile(
            "perturbative branch needs a periodic profile".into(),
        ));
    }
    let c0 = simpson(|x| spec.eval(x), 0.0, 1.0, 4096);
    pbc_perturbative_steady(
        alpha,
        c0,
        |x| spec.eval(x) - c0,
        |x| spec.derivative(x),
        1.0,
        grid,
    )
}

/// `M(z) = 1 − ln(1+z)/z`, accurate for small `z`.
fn log_defect(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        z * (0.5 - z * (1.0 / 3.0 - z * (0.25 - z * (0.2 - z / 6.0))))
    } else {
        1.0 - z.ln_1p() / z
    }
}

/// First integral `E(p, α) = −p² + 4αp − 4α(α+1) ln(1 + p/(α+1))`.
pub fn energy_e(p: f64, alpha: f64) -> Result<f64> {
    let a1 = alpha + 1.0;
    if !(p > -a1) {
        return Err(Error::Domain(format!(
            "E(p, alpha) needs p > -(alpha + 1), got p = {p}"
        )));
    }
    // 4αp − 4α(α+1) ln(1 + z) = 4αp (1 − ln(1+z)/z) with z = p/(α+1)
    Ok(-p * p + 4.0 * alpha * p * log_defect(p / a1))
}

/// Separatrix level `E*(α) = E(α − 1, α)`.
pub fn energy_star(alpha: f64) -> f64 {
    energy_e(alpha - 1.0, alpha).unwrap_or(f64::NAN)
}

/// Turning points `p0 < p1` of the shooting orbit at level `e0`:
/// `e0 = E(p0) + p0²` and `e0 = E(p1)`.
pub fn turning_points(e0: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 1.0) {
        return Err(Error::Domain(format!(
            "turning points need alpha > 1, got {alpha}"
        )));
    }
    let e_star = energy_star(alpha);
    if !(e0 > 0.0 && e0 < e_star) {
        return Err(Error::Domain(format!(
            "energy level {e0} outside (0, E* = {e_star})"
        )));
    }
    let e = |p: f64| energy_e(p, alpha).unwrap_or(f64::NAN);
    let p1 = bisect_relative(|p| e(p) - e0, 0.0, alpha - 1.0, 1e-13)?;
    let p0 = bisect_relative(|p| e(p) + p * p - e0, 0.0, p1, 1e-13)?;
    Ok((p0, p1))
}

/// Closed form of the shooting integral at `E0 = 0`.
pub fn shooting_integral_at_zero(alpha: f64, c: f64) -> f64 {
    c / (alpha * alpha - 1.0).sqrt() * (FRAC_PI_2 - ((alpha - 1.0) / (2.0 * alpha)).sqrt().asin())
}

/// Length (in `x`) of the orbit from `p + q = 0` to `q = 0` at level `e0`.
///
/// Uses `p = p1 − s²` so the square-root singularity at `p1` turns into a
/// smooth integrand; `(E(p1) − E(p))/s²` is evaluated in closed form.
pub fn shooting_integral(e0: f64, alpha: f64, c: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::Domain(format!(
            "shooting needs alpha > 1, got {alpha}"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::Parameter(format!("speed must be > 0, got {c}")));
    }
    let e_star = energy_star(alpha);
    if e0 >= e_star {
        return Err(Error::Domain(format!(
            "E0 = {e0} >= E* = {e_star}: the orbit reaches q = 0 only in infinite time"
        )));
    }
    if e0 < 0.0 {
        return Err(Error::Domain(format!("E0 must be >= 0, got {e0}")));
    }
    if e0 == 0.0 {
        return Ok(shooting_integral_at_zero(alpha, c));
    }
    let (p0, p1) = turning_points(e0, alpha)?;
    let a1 = alpha + 1.0;
    let integrand = |s: f64| {
        let s2 = s * s;
        let p = p1 - s2;
        let shifted = a1 + p;
        let slope = 4.0 * alpha * p / shifted - p1 - p
            + 4.0 * alpha * a1 / shifted * log_defect(s2 / shifted);
        2.0 / ((1.0 + alpha / (1.0 + p)) * slope.max(0.0).sqrt())
    };
    let upper = (p1 - p0).sqrt();
    Ok(c * adaptive_simpson(&integrand, 0.0, upper, 1e-12, 0.0)?)
}

/// Parameters of a shooting orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootingState {
    pub alpha: f64,
    pub c: f64,
    pub e0: f64,
    pub p0: f64,
    pub p1: f64,
    pub e_star: f64,
}

/// Outcome of [`dbc_shooting_steady`].
#[derive(Debug, Clone)]
pub struct ShootingSolution {
    pub state: ShootingState,
    pub profile: SteadyProfile,
    /// `q` at `x = 1/2`, zero for an exact hit.
    pub q_half: f64,
    /// Largest deviation of `q² + E(p)` from `E0` along the integration.
    pub drift: f64,
    pub steps: usize,
}

fn pq_rhs(p: f64, q: f64, alpha: f64, c: f64) -> (f64, f64) {
    let b = alpha / (1.0 + p);
    (-q * (1.0 + b) / c, p * (b - 1.0) / c)
}

/// Nontrivial zero-inflow steady state for constant speed `c`, symmetric
/// about `x = 1/2`.
pub fn dbc_shooting_steady(alpha: f64, c: f64, grid: &Grid, tol: f64) -> Result<ShootingSolution> {
    if !(c > 0.0) {
        return Err(Error::Parameter(format!("speed must be > 0, got {c}")));
    }
    let bif = bifurcation_value(BoundaryCondition::Dbc, c)?;
    if !(alpha > bif.alpha0) {
        return Err(Error::Domain(format!(
            "no nontrivial steady state for alpha = {alpha} <= alpha0 = {}",
            bif.alpha0
        )));
    }
    let e_star = energy_star(alpha);
    let target = |e0: f64| shooting_integral(e0, alpha, c).map(|i| i - 0.5);
    if target(0.0)? >= 0.0 {
        return Err(Error::Numerical(format!(
            "I(0, {alpha}) >= 1/2 although alpha > alpha0"
        )));
    }
    let mut upper = None;
    for k in 1..=14 {
        let e = e_star * (1.0 - 10f64.powi(-k));
        if target(e)? > 0.0 {
            upper = Some(e);
            break;
        }
    }
    let upper = upper.ok_or_else(|| {
        Error::Numerical(format!(
            "could not bracket I(E0) = 1/2 below E* = {e_star} for alpha = {alpha}"
        ))
    })?;
    let mut failure = None;
    let e0 = bisect_relative(
        |e| match target(e) {
            Ok(v) => v,
            Err(err) => {
                failure = Some(err);
                f64::NAN
            }
        },
        0.0,
        upper,
        1e-13,
    )?;
    if let Some(err) = failure {
        return Err(err);
    }
    let (p0, p1) = turning_points(e0, alpha)?;

    // RK4 on [0, 1/2] with every cell centre on the step lattice
    let n = grid.n_cells();
    let per_half_cell = 10_000usize.div_ceil(n).max(1);
    let h = 1.0 / (2 * n * per_half_cell) as f64;
    let steps = n * per_half_cell;
    let energy = |p: f64, q: f64| q * q + energy_e(p, alpha).unwrap_or(f64::NAN);
    let (mut p, mut q) = (p0, -p0);
    let mut drift = (energy(p, q) - e0).abs();
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(n / 2 + 1);
    for k in 1..=steps {
        let (k1p, k1q) = pq_rhs(p, q, alpha, c);
        let (k2p, k2q) = pq_rhs(p + 0.5 * h * k1p, q + 0.5 * h * k1q, alpha, c);
        let (k3p, k3q) = pq_rhs(p + 0.5 * h * k2p, q + 0.5 * h * k2q, alpha, c);
        let (k4p, k4q) = pq_rhs(p + h * k3p, q + h * k3q, alpha, c);
        p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        drift = drift.max((energy(p, q) - e0).abs());
        if k % per_half_cell == 0 && (k / per_half_cell) % 2 == 1 {
            samples.push((p, q));
        }
    }
    let q_half = q;
    if q_half.abs() > tol {
        return Err(Error::Numerical(format!(
            "shooting missed q(1/2) = 0 by {q_half:e} (E0 = {e0}, tol {tol:e})"
        )));
    }
    if drift > tol {
        return Err(Error::Numerical(format!(
            "first integral drifted by {drift:e} (tol {tol:e})"
        )));
    }
    // cells left of 1/2 come from the samples, the rest by p(x) = p(1−x),
    // q(x) = −q(1−x)
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    for i in 0..n {
        let (pi, qi) = if 2 * i < n {
            samples[i]
        } else {
            let (pm, qm) = samples[n - 1 - i];
            (pm, -qm)
        };
        u[i] = 0.5 * (pi + qi);
        v[i] = 0.5 * (pi - qi);
    }
    let residual = stationary_residual_centered(&u, &v, alpha, BoundaryCondition::Dbc, |_| c);
    let mut profile = SteadyProfile::new(
        u,
        v,
        alpha,
        BoundaryCondition::Dbc,
        SteadyMethod::Shooting,
        residual,
    );
    profile.energy = Some(e0);
    Ok(ShootingSolution {
        state: ShootingState {
            alpha,
            c,
            e0,
            p0,
            p1,
            e_star,
        },
        profile,
        q_half,
        drift,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_bifurcation_is_at_one() {
        let bif = bifurcation_value(BoundaryCondition::Pbc, 1.3).unwrap();
        assert_eq!(bif.alpha0, 1.0);
        assert_eq!(bif.eigen_pair(0.3), (1.0, 1.0));
    }

    #[test]
    fn dirichlet_bifurcation_root() {
        let bif = bifurcation_value(BoundaryCondition::Dbc, 1.0).unwrap();
        let b0 = bif.b0.unwrap();
        assert!(b0 > FRAC_PI_2 && b0 < PI);
        assert!((b0 + b0.tan()).abs() < 1e-9);
        // independent high-precision root of b cos b + sin b
        assert!((b0 - 2.028_757_838_110_434).abs() < 1e-11);
        assert!((bif.alpha0 - 2.261_826_334_114_652).abs() < 1e-10);
        assert!((bif.alpha0 - 1.0 / b0.cos().abs()).abs() < 1e-15);
    }

    #[test]
    fn slow_flow_limit() {
        let bif = bifurcation_value(BoundaryCondition::Dbc, 1e-6).unwrap();
        assert!((bif.b0.unwrap() - PI).abs() < 1e-4);
        assert!((bif.alpha0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn single_sign_change_of_g() {
        for &c in &[0.1, 1.0, 3.0] {
            let g = |b: f64| c * b * b.cos() + b.sin();
            let mut changes = 0;
            let mut prev = g(FRAC_PI_2);
            for k in 1..=10_000 {
                let b = FRAC_PI_2 + FRAC_PI_2 * k as f64 / 10_000.0;
                let cur = g(b);
                if cur.signum() != prev.signum() {
                    changes += 1;
                }
                prev = cur;
            }
            assert_eq!(changes, 1);
        }
    }

    #[test]
    fn eigenfunction_boundary_zeros_and_discrete_residual() {
        let bif = bifurcation_value(BoundaryCondition::Dbc, 1.0).unwrap();
        assert_eq!(bif.eigen_pair(0.0).0, 0.0);
        assert!(bif.eigen_pair(1.0).1.abs() < 1e-15);
        let residual = |n: usize| {
            let grid = Grid::new(n).unwrap();
            let (u, v) = null_eigenfunction(&bif, &grid);
            let dx = grid.dx();
            let mut worst = 0.0_f64;
            for i in 1..n - 1 {
                let du = (u[i + 1] - u[i - 1]) / (2.0 * dx);
                let dv = (v[i + 1] - v[i - 1]) / (2.0 * dx);
                let l1 = bif.alpha0 * v[i] - u[i] - bif.big_c * du;
                let l2 = bif.alpha0 * u[i] - v[i] + bif.big_c * dv;
                worst = worst.max(l1.abs()).max(l2.abs());
            }
            worst
        };
        let ratio = residual(100) / residual(200);
        assert!(ratio > 3.8 && ratio < 4.2, "{ratio}");
    }

    #[test]
    fn periodic_normal_form() {
        let profile = SpeedProfile::constant(1.0).unwrap();
        let bif = bifurcation_analysis(BoundaryCondition::Pbc, &profile).unwrap();
        assert!((bif.kappa1.unwrap() - 1.0).abs() < 1e-12);
        assert!((bif.kappa2.unwrap() - 2.0).abs() < 1e-12);
        let grid = Grid::new(16).unwrap();
        let (su, sv) = branch_slope(&bif, &profile, &grid).unwrap();
        assert!(su.iter().chain(&sv).all(|s| (s - 0.5).abs() < 1e-12));
    }

    #[test]
    fn normal_form_coefficients_are_positive_and_converged() {
        let specs = [
            ProfileSpec::constant(1.0),
            ProfileSpec::constant(0.4),
            ProfileSpec::cosine(1.0, 0.075, 1),
            ProfileSpec::cosine(2.0, 0.5, 3),
        ];
        for spec in specs {
            let profile = SpeedProfile::new(spec, 4096).unwrap();
            for bc in [BoundaryCondition::Pbc, BoundaryCondition::Dbc] {
                let bif = bifurcation_value(bc, profile.big_c()).unwrap();
                let (a1, a2) = normal_form_coefficients(&bif, &profile, 1024);
                let (b1, b2) = normal_form_coefficients(&bif, &profile, 2048);
                assert!(a1 > 0.0 && a2 > 0.0);
                assert!((a1 - b1).abs() < 1e-8 && (a2 - b2).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn dirichlet_slope_vanishes_at_inflow() {
        let profile = SpeedProfile::constant(1.0).unwrap();
        let bif = bifurcation_analysis(BoundaryCondition::Dbc, &profile).unwrap();
        let grid = Grid::new(200).unwrap();
        let (su, sv) = branch_slope(&bif, &profile, &grid).unwrap();
        assert!(su[0] < 0.02 * su[100] && sv[199] < 0.02 * sv[100]);
        assert!(su[0] > 0.0 && sv[199] > 0.0);
    }

    #[test]
    fn constant_branch_values() {
        let grid = Grid::new(8).unwrap();
        let s = pbc_constant_steady(3.0, &grid).unwrap();
        assert!(s.u_bar.iter().all(|u| *u == 1.0));
        assert_eq!(s.residual, 0.0);
        let s = pbc_constant_steady(10.0, &grid).unwrap();
        assert!(s.v_bar.iter().all(|v| *v == 4.5));
        let near = pbc_constant_steady(1.0 + 1e-12, &grid).unwrap();
        assert!(near.u_bar[0] < 1e-12);
        assert!(pbc_constant_steady(1.0, &grid).is_err());
    }

    #[test]
    fn matrix_exponential_routes_agree() {
        for &alpha in &[1.5, 3.0, 10.0] {
            let m = perturbation_matrix(alpha, 1.0);
            for &t in &[-1.0, 0.3, 1.0] {
                let a = m.expm_traceless(t);
                let b = m.expm_series(t);
                for k in 0..4 {
                    assert!((a.0[k] - b.0[k]).abs() < 1e-12 * (1.0 + b.0[k].abs()));
                }
            }
        }
        let nil = Mat2([0.0, 1.0, 0.0, 0.0]);
        assert_eq!(nil.expm(2.0), Mat2([1.0, 2.0, 0.0, 1.0]));
    }

    /// Closed-form first-order correction for `c = 1 + (3ε/4) cos 2πx`,
    /// derived independently by undetermined coefficients.
    fn cosine_correction(alpha: f64, x: f64) -> (f64, f64) {
        let denom = 8.0 * (alpha - 1.0 + 2.0 * PI * PI * alpha);
        let (c, s) = ((2.0 * PI * x).cos(), (2.0 * PI * x).sin());
        let u1 = -3.0 * PI * (2.0 * alpha * PI * c - (alpha - 1.0) * s) / denom;
        let v1 = -3.0 * PI * (2.0 * alpha * PI * c + (alpha - 1.0) * s) / denom;
        (u1, v1)
    }

    #[test]
    fn first_order_correction_matches_closed_form() {
        let xs: Vec<f64> = (0..50).map(|k| (k as f64 + 0.5) / 50.0).collect();
        for &alpha in &[1.5, 10.0, 40.0] {
            let (u1, v1) = perturbation_first_order(
                alpha,
                1.0,
                |x| -0.75 * 2.0 * PI * (2.0 * PI * x).sin(),
                &xs,
            )
            .unwrap();
            for (k, &x) in xs.iter().enumerate() {
                let (eu, ev) = cosine_correction(alpha, x);
                assert!((u1[k] - eu).abs() < 1e-10, "alpha {alpha} x {x}");
                assert!((v1[k] - ev).abs() < 1e-10);
            }
        }
        assert!(perturbation_first_order(1.0, 1.0, |_| 0.0, &xs).is_err());
    }

    #[test]
    fn zero_amplitude_gives_constant_branch() {
        let grid = Grid::new(32).unwrap();
        let s = pbc_perturbative_steady(
            4.0,
            1.0,
            |x| (2.0 * PI * x).cos(),
            |x| -2.0 * PI * (2.0 * PI * x).sin(),
            0.0,
            &grid,
        )
        .unwrap();
        assert!(s
            .u_bar
            .iter()
            .chain(&s.v_bar)
            .all(|w| (w - 1.5).abs() < 1e-15));
    }

    #[test]
    fn energy_values() {
        assert_eq!(energy_e(0.0, 2.7).unwrap(), 0.0);
        assert!(energy_star(1.0).abs() < 1e-15);
        let closed = 7.0 - 24.0 * (4.0f64 / 3.0).ln();
        assert!((energy_star(2.0) - closed).abs() < 1e-13);
        assert!((energy_star(2.0) - 0.0956).abs() < 1e-4);
        // direct evaluation of the defining formula
        let direct = |p: f64, a: f64| {
            -p * p + 4.0 * a * p - 4.0 * a * (a + 1.0) * (1.0 + p / (a + 1.0)).ln()
        };
        for &p in &[0.01, 0.3, 1.0, 5.0] {
            assert!((energy_e(p, 2.0).unwrap() - direct(p, 2.0)).abs() < 1e-12);
        }
        assert!(energy_e(-3.5, 2.0).is_err());
        let mut prev = 0.0;
        for k in 1..100 {
            let e = energy_e(k as f64 / 100.0 * 1.5, 2.5).unwrap();
            assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn turning_point_limits() {
        let alpha = 2.5;
        let e0 = 1e-10;
        let (p0, p1) = turning_points(e0, alpha).unwrap();
        let r0 = p0 / e0.sqrt();
        let r1 = p1 / e0.sqrt();
        assert!((r0 - ((alpha + 1.0) / (2.0 * alpha)).sqrt()).abs() < 1e-4);
        assert!((r1 - ((alpha + 1.0) / (alpha - 1.0)).sqrt()).abs() < 1e-4);
        let es = energy_star(alpha);
        let (_, p1) = turning_points(es * (1.0 - 1e-12), alpha).unwrap();
        assert!((p1 - (alpha - 1.0)).abs() < 1e-4);
        let mut last = (0.0, 0.0);
        for k in 1..50 {
            let (a, b) = turning_points(es * k as f64 / 50.0, alpha).unwrap();
            assert!(a < b && a > last.0 && b > last.1);
            last = (a, b);
        }
        assert!(turning_points(0.0, alpha).is_err());
        assert!(turning_points(es, alpha).is_err());
    }

    #[test]
    fn shooting_integral_values() {
        let bif = bifurcation_value(BoundaryCondition::Dbc, 1.0).unwrap();
        assert!((shooting_integral(0.0, bif.alpha0, 1.0).unwrap() - 0.5).abs() < 1e-10);
        let closed = (FRAC_PI_2 - 0.5f64.asin()) / 3f64.sqrt();
        assert!((shooting_integral(0.0, 2.0, 1.0).unwrap() - closed).abs() < 1e-15);
        assert!((closed - 0.6046).abs() < 1e-4);
        // I(E0) − I(0) = O(√E0)
        let d1 = shooting_integral(1e-8, 2.0, 1.0).unwrap() - closed;
        let d2 = shooting_integral(1e-10, 2.0, 1.0).unwrap() - closed;
        assert!(d1.abs() < 1e-3 && d2.abs() < 1e-4, "{d1} {d2}");
        assert!((d1 / d2 - 10.0).abs() < 0.5, "{}", d1 / d2);
        let es = energy_star(2.5);
        let near = shooting_integral(0.999 * es, 2.5, 1.0).unwrap();
        assert!(near > 5.0 * shooting_integral(0.0, 2.5, 1.0).unwrap());
        assert!(shooting_integral(es, 2.5, 1.0).is_err());
    }

    #[test]
    fn shooting_integral_is_increasing() {
        for &alpha in &[2.3, 2.5, 4.0] {
            let es = energy_star(alpha);
            let mut prev = shooting_integral(0.0, alpha, 1.0).unwrap();
            for k in 1..40 {
                let cur = shooting_integral(es * k as f64 / 40.0, alpha, 1.0).unwrap();
                assert!(cur > prev, "alpha {alpha} k {k}");
                prev = cur;
            }
        }
    }

    #[test]
    fn shooting_steady_state() {
        let grid = Grid::new(200).unwrap();
        let sol = dbc_shooting_steady(2.5, 1.0, &grid, 1e-8).unwrap();
        assert!(sol.drift < 1e-8);
        assert!(sol.q_half.abs() < 1e-8);
        let prof = &sol.profile;
        for i in 0..200 {
            assert!((prof.u_bar[i] - prof.v_bar[199 - i]).abs() < 1e-14);
        }
        assert!(prof.bounds.is_some());
        assert!(prof.residual < 1e-3, "{}", prof.residual);
        assert!(dbc_shooting_steady(2.0, 1.0, &grid, 1e-8).is_err());
    }
}
