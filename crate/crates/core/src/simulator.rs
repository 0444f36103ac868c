//! Time integration of the two-family transport system
//!
//! ```text
//!   ∂t u + ∂x(c u) = α v / (1 + u + v) − u
//!   ∂t v − ∂x(c v) = α u / (1 + u + v) − v
//! ```
//!
//! with two independent discretisations: a conservative first-order upwind
//! finite-volume scheme on the physical grid, and a characteristics scheme on
//! the uniform `X` grid where transport is an exact index shift.

use serde::{Deserialize, Serialize};

use crate::diagnostics::lyapunov_h;
use crate::error::{Error, Result};
use crate::model::{
    inverse_transform, transform_state, BoundaryCondition, FieldState, Grid, ModelParams,
    SpeedProfile, TransformedState,
};
use crate::steady::{SteadyMethod, SteadyProfile};

/// Undershoots below this are counted as scheme faults before clamping.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-13;
/// A run fails once more than this many faults were clamped.
pub const MAX_CLAMPS: usize = 10;
/// `sup(u, v)` below this counts as extinction.
pub const DECAY_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Upwind,
    Characteristics,
}

fn default_cfl() -> f64 {
    0.9
}

fn default_stride() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_end: f64,
    /// Steps between recorded states.
    #[serde(default = "default_stride")]
    pub output_stride: usize,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, t_end: f64) -> Self {
        Self {
            scheme,
            cfl: default_cfl(),
            t_end,
            output_stride: default_stride(),
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.output_stride = stride;
        self
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl = cfl;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!(
                "cfl must lie in (0, 1], got {}",
                self.cfl
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!(
                "t_end must be > 0, got {}",
                self.t_end
            )));
        }
        if self.output_stride == 0 {
            return Err(Error::Config("output_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Explicit transport time step `cfl · dx / c_max`.
pub fn cfl_dt(grid: &Grid, profile: &SpeedProfile, cfl: f64) -> Result<f64> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::Config(format!("cfl must lie in (0, 1], got {cfl}")));
    }
    Ok(cfl * grid.dx() / profile.c_max())
}

/// Grid-aligned step of the characteristics scheme, `dX / C`.
pub fn characteristic_dt(n_cells: usize, profile: &SpeedProfile) -> f64 {
    1.0 / (n_cells as f64 * profile.big_c())
}

/// Upwind flux divergence and reaction terms with cached face speeds.
#[derive(Debug, Clone)]
pub(crate) struct UpwindOperator {
    dx: f64,
    c_face: Vec<f64>,
    alpha: f64,
    bc: BoundaryCondition,
}

impl UpwindOperator {
    pub(crate) fn new(params: &ModelParams, profile: &SpeedProfile, n: usize) -> Self {
        let c_face = (0..=n).map(|i| profile.eval(i as f64 / n as f64)).collect();
        Self {
            dx: 1.0 / n as f64,
            c_face,
            alpha: params.alpha,
            bc: params.bc,
        }
    }

    fn n(&self) -> usize {
        self.c_face.len() - 1
    }

    /// Fills `du`, `dv` with `−∂x(c u)` and `+∂x(c v)` respectively.
    fn transport(&self, u: &[f64], v: &[f64], du: &mut [f64], dv: &mut [f64]) {
        let n = self.n();
        let c = &self.c_face;
        // u moves right: the flux through face i carries u[i-1]
        let inflow_u = match self.bc {
            BoundaryCondition::Pbc => c[0] * u[n - 1],
            BoundaryCondition::Dbc => 0.0,
        };
        // v moves left: the flux through face i carries v[i]
        let inflow_v = match self.bc {
            BoundaryCondition::Pbc => c[n] * v[0],
            BoundaryCondition::Dbc => 0.0,
        };
        for i in 0..n {
            let f_in = if i == 0 { inflow_u } else { c[i] * u[i - 1] };
            let f_out = c[i + 1] * u[i];
            du[i] = (f_in - f_out) / self.dx;
            let g_in = if i == n - 1 {
                inflow_v
            } else {
                c[i + 1] * v[i + 1]
            };
            let g_out = c[i] * v[i];
            dv[i] = (g_in - g_out) / self.dx;
        }
    }

    /// Sup norm of the discrete stationary operator.
    pub(crate) fn residual(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.n();
        let mut du = vec![0.0; n];
        let mut dv = vec![0.0; n];
        self.transport(u, v, &mut du, &mut dv);
        let mut worst = 0.0_f64;
        for i in 0..n {
            let denom = 1.0 + u[i] + v[i];
            let ru = du[i] + self.alpha * v[i] / denom - u[i];
            let rv = dv[i] + self.alpha * u[i] / denom - v[i];
            worst = worst.max(ru.abs()).max(rv.abs());
        }
        worst
    }

    /// Explicit transport and branching; capping is taken at the new time
    /// level, which keeps the update nonnegative for `dt c / dx ≤ 1`.
    fn step_into(&self, u: &[f64], v: &[f64], dt: f64, out_u: &mut [f64], out_v: &mut [f64]) {
        self.transport(u, v, out_u, out_v);
        let damp = 1.0 / (1.0 + dt);
        for i in 0..self.n() {
            let denom = 1.0 + u[i] + v[i];
            let bu = self.alpha * v[i] / denom;
            let bv = self.alpha * u[i] / denom;
            out_u[i] = (u[i] + dt * (out_u[i] + bu)) * damp;
            out_v[i] = (v[i] + dt * (out_v[i] + bv)) * damp;
        }
    }

    /// Same as [`UpwindOperator::step_into`] with the branching factor
    /// `α a` taken from a relaxed Arp2/3 field.
    fn step_full_into(
        &self,
        u: &[f64],
        v: &[f64],
        a: &[f64],
        dt: f64,
        out_u: &mut [f64],
        out_v: &mut [f64],
    ) {
        self.transport(u, v, out_u, out_v);
        let damp = 1.0 / (1.0 + dt);
        for i in 0..self.n() {
            let bu = self.alpha * a[i] * v[i];
            let bv = self.alpha * a[i] * u[i];
            out_u[i] = (u[i] + dt * (out_u[i] + bu)) * damp;
            out_v[i] = (v[i] + dt * (out_v[i] + bv)) * damp;
        }
    }

    fn check_cfl(&self, dt: f64) -> Result<()> {
        let c_max = self.c_face.iter().cloned().fold(0.0, f64::max);
        let courant = dt * c_max / self.dx;
        if !(dt > 0.0) || courant > 1.0 + 1e-12 {
            return Err(Error::Integration(format!(
                "time step {dt} violates the CFL bound (Courant number {courant})"
            )));
        }
        Ok(())
    }
}

/// Clamps negative entries to zero; returns how many were below
/// `−NEGATIVITY_TOLERANCE`.
fn clamp_negative(values: &mut [f64]) -> usize {
    let mut faults = 0;
    for w in values.iter_mut() {
        if *w < 0.0 {
            if *w < -NEGATIVITY_TOLERANCE {
                faults += 1;
            }
            *w = 0.0;
        }
    }
    faults
}

/// One step of the upwind scheme.
pub fn step_upwind(
    state: &FieldState,
    params: &ModelParams,
    profile: &SpeedProfile,
    dt: f64,
) -> Result<FieldState> {
    let n = state.len();
    let op = UpwindOperator::new(params, profile, n);
    op.check_cfl(dt)?;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    op.step_into(&state.u, &state.v, dt, &mut u, &mut v);
    let faults = clamp_negative(&mut u) + clamp_negative(&mut v);
    if faults > 0 {
        return Err(Error::Integration(format!(
            "upwind step produced {faults} negative values"
        )));
    }
    Ok(FieldState::new(state.t + dt, u, v))
}

/// Sup norm of the upwind stationary operator applied to `(u, v)`.
pub fn stationary_residual_upwind(
    u: &[f64],
    v: &[f64],
    params: &ModelParams,
    profile: &SpeedProfile,
) -> f64 {
    UpwindOperator::new(params, profile, u.len()).residual(u, v)
}

/// Characteristics scheme on the `X` grid.
///
/// Along each characteristic `U' = R_U − U`; the step integrates this exactly
/// for a reaction term that is linear in time between the foot point and the
/// arrival point, with a predictor for the arrival value.
#[derive(Debug, Clone)]
pub(crate) struct CharacteristicsOperator {
    beta: Vec<f64>,
    beta_left: f64,
    beta_right: f64,
    alpha: f64,
    bc: BoundaryCondition,
    dt: f64,
    full: ExpWeights,
    half: ExpWeights,
}

/// Weights of `∫_0^τ e^{s−τ} R(s) ds` for `R` linear in `s`.
#[derive(Debug, Clone, Copy)]
struct ExpWeights {
    decay: f64,
    start: f64,
    end: f64,
}

impl ExpWeights {
    fn new(tau: f64) -> Self {
        let decay = (-tau).exp();
        let one_minus = -(-tau).exp_m1();
        let end = 1.0 - one_minus / tau;
        Self {
            decay,
            start: one_minus - end,
            end,
        }
    }

    fn one_minus_decay(&self) -> f64 {
        self.start + self.end
    }
}

impl CharacteristicsOperator {
    pub(crate) fn new(params: &ModelParams, profile: &SpeedProfile, n: usize) -> Self {
        let beta = (0..n)
            .map(|j| profile.beta(profile.big_x_to_x((j as f64 + 0.5) / n as f64)))
            .collect();
        let dt = characteristic_dt(n, profile);
        Self {
            beta,
            beta_left: profile.beta(0.0),
            beta_right: profile.beta(1.0),
            alpha: params.alpha,
            bc: params.bc,
            dt,
            full: ExpWeights::new(dt),
            half: ExpWeights::new(0.5 * dt),
        }
    }

    pub(crate) fn dt(&self) -> f64 {
        self.dt
    }

    fn rates(&self, big_u: f64, big_v: f64, beta: f64) -> (f64, f64) {
        let denom = 1.0 + beta * (big_u + big_v);
        (self.alpha * big_v / denom, self.alpha * big_u / denom)
    }

    fn step_into(&self, big_u: &[f64], big_v: &[f64], out_u: &mut [f64], out_v: &mut [f64]) {
        let n = big_u.len();
        let w = self.full;
        let h = self.half;
        let old: Vec<(f64, f64)> = (0..n)
            .map(|j| self.rates(big_u[j], big_v[j], self.beta[j]))
            .collect();
        // predictor along each characteristic
        let mut pred_u = vec![0.0; n];
        let mut pred_v = vec![0.0; n];
        let periodic = self.bc.is_periodic();
        let boundary_u = if periodic {
            0.0
        } else {
            // U = 0 enters at X = 0; V there is extrapolated from the interior
            let vb = (1.5 * big_v[0] - 0.5 * big_v[1]).max(0.0);
            self.rates(0.0, vb, self.beta_left).0
        };
        let boundary_v = if periodic {
            0.0
        } else {
            let ub = (1.5 * big_u[n - 1] - 0.5 * big_u[n - 2]).max(0.0);
            self.rates(ub, 0.0, self.beta_right).1
        };
        for j in 0..n {
            pred_u[j] = if j > 0 || periodic {
                let k = if j == 0 { n - 1 } else { j - 1 };
                w.decay * big_u[k] + w.one_minus_decay() * old[k].0
            } else {
                h.one_minus_decay() * boundary_u
            };
            pred_v[j] = if j + 1 < n || periodic {
                let k = if j + 1 == n { 0 } else { j + 1 };
                w.decay * big_v[k] + w.one_minus_decay() * old[k].1
            } else {
                h.one_minus_decay() * boundary_v
            };
        }
        for j in 0..n {
            let (ru_new, rv_new) = self.rates(pred_u[j], pred_v[j], self.beta[j]);
            out_u[j] = if j > 0 || periodic {
                let k = if j == 0 { n - 1 } else { j - 1 };
                w.decay * big_u[k] + w.start * old[k].0 + w.end * ru_new
            } else {
                h.start * boundary_u + h.end * ru_new
            };
            out_v[j] = if j + 1 < n || periodic {
                let k = if j + 1 == n { 0 } else { j + 1 };
                w.decay * big_v[k] + w.start * old[k].1 + w.end * rv_new
            } else {
                h.start * boundary_v + h.end * rv_new
            };
        }
    }
}

/// One step of the characteristics scheme in transformed variables.
///
/// `dt` must equal `dX / C` so that characteristics connect cell centres.
pub fn step_characteristics(
    state: &TransformedState,
    params: &ModelParams,
    profile: &SpeedProfile,
    dt: f64,
) -> Result<TransformedState> {
    let n = state.big_u.len();
    let op = CharacteristicsOperator::new(params, profile, n);
    if (dt - op.dt()).abs() > 1e-12 * op.dt() {
        return Err(Error::Config(format!(
            "characteristics step needs dt = dX/C = {}, got {dt}",
            op.dt()
        )));
    }
    let mut big_u = vec![0.0; n];
    let mut big_v = vec![0.0; n];
    op.step_into(&state.big_u, &state.big_v, &mut big_u, &mut big_v);
    clamp_negative(&mut big_u);
    clamp_negative(&mut big_v);
    Ok(TransformedState {
        t: state.t + op.dt(),
        big_u,
        big_v,
    })
}

/// Per-record summary of a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateDiagnostics {
    pub t: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub l2_u: f64,
    pub l2_v: f64,
    pub min_u: f64,
    pub min_v: f64,
    pub max_u: f64,
    pub max_v: f64,
    /// Lyapunov functional against the attached steady reference.
    pub lyapunov: Option<f64>,
    pub bound_ok: bool,
}

/// A-priori bounds `(c_max/c_min) max{max u0, α}` and the `v` analogue.
pub fn a_priori_bounds(init: &FieldState, alpha: f64, profile: &SpeedProfile) -> (f64, f64) {
    let ratio = profile.c_max() / profile.c_min();
    let max_u = init.u.iter().cloned().fold(0.0, f64::max);
    let max_v = init.v.iter().cloned().fold(0.0, f64::max);
    (ratio * max_u.max(alpha), ratio * max_v.max(alpha))
}

pub(crate) fn within_bound(values: &[f64], bound: f64) -> bool {
    let slack = 1e-9 * bound.max(1.0);
    values
        .iter()
        .all(|w| *w >= -NEGATIVITY_TOLERANCE && *w <= bound + slack)
}

impl StateDiagnostics {
    pub fn of(
        state: &FieldState,
        bounds: (f64, f64),
        profile: &SpeedProfile,
        reference: Option<&SteadyProfile>,
    ) -> Result<Self> {
        let n = state.len();
        let dx = 1.0 / n as f64;
        let fold = |w: &[f64]| {
            let mass: f64 = w.iter().sum::<f64>() * dx;
            let l2 = (w.iter().map(|x| x * x).sum::<f64>() * dx).sqrt();
            let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (mass, l2, min, max)
        };
        let (mass_u, l2_u, min_u, max_u) = fold(&state.u);
        let (mass_v, l2_v, min_v, max_v) = fold(&state.v);
        let lyapunov = match reference {
            Some(steady) => Some(lyapunov_h(state, steady, profile)?),
            None => None,
        };
        Ok(Self {
            t: state.t,
            mass_u,
            mass_v,
            l2_u,
            l2_v,
            min_u,
            min_v,
            max_u,
            max_v,
            lyapunov,
            bound_ok: within_bound(&state.u, bounds.0) && within_bound(&state.v, bounds.1),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<FieldState>,
    pub diagnostics: Vec<StateDiagnostics>,
    pub dt: f64,
    pub steps: usize,
    /// Negative undershoots beyond tolerance that were clamped.
    pub clamped: usize,
    /// Steps at which the a-priori bound failed.
    pub bound_violations: usize,
    pub bounds: (f64, f64),
}

impl Trajectory {
    pub fn last(&self) -> &FieldState {
        self.records
            .last()
            .expect("trajectory always holds the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }
}

/// Either integrator behind a common interface.
enum Integrator<'a> {
    Upwind {
        op: UpwindOperator,
        state: FieldState,
        scratch: FieldState,
        dt: f64,
    },
    Characteristics {
        op: CharacteristicsOperator,
        state: TransformedState,
        scratch: TransformedState,
        profile: &'a SpeedProfile,
        bc: BoundaryCondition,
    },
}

impl<'a> Integrator<'a> {
    fn new(
        init: &FieldState,
        params: &ModelParams,
        profile: &'a SpeedProfile,
        scheme: Scheme,
        cfl: f64,
    ) -> Result<Self> {
        let n = init.len();
        let grid = Grid::new(n)?;
        Ok(match scheme {
            Scheme::Upwind => {
                let dt = cfl_dt(&grid, profile, cfl)?;
                let op = UpwindOperator::new(params, profile, n);
                op.check_cfl(dt)?;
                Integrator::Upwind {
                    op,
                    state: init.clone(),
                    scratch: init.clone(),
                    dt,
                }
            }
            Scheme::Characteristics => {
                let state = transform_state(init, profile, params.bc);
                Integrator::Characteristics {
                    op: CharacteristicsOperator::new(params, profile, n),
                    scratch: state.clone(),
                    state,
                    profile,
                    bc: params.bc,
                }
            }
        })
    }

    fn dt(&self) -> f64 {
        match self {
            Integrator::Upwind { dt, .. } => *dt,
            Integrator::Characteristics { op, .. } => op.dt(),
        }
    }

    fn time(&self) -> f64 {
        match self {
            Integrator::Upwind { state, .. } => state.t,
            Integrator::Characteristics { state, .. } => state.t,
        }
    }

    /// Advances one step of at most `max_dt` (upwind) or exactly `dX/C`.
    fn advance(&mut self, max_dt: f64) -> usize {
        match self {
            Integrator::Upwind {
                op,
                state,
                scratch,
                dt,
            } => {
                let h = dt.min(max_dt);
                op.step_into(&state.u, &state.v, h, &mut scratch.u, &mut scratch.v);
                scratch.t = state.t + h;
                let faults = clamp_negative(&mut scratch.u) + clamp_negative(&mut scratch.v);
                std::mem::swap(state, scratch);
                faults
            }
            Integrator::Characteristics {
                op, state, scratch, ..
            } => {
                op.step_into(
                    &state.big_u,
                    &state.big_v,
                    &mut scratch.big_u,
                    &mut scratch.big_v,
                );
                scratch.t = state.t + op.dt();
                let faults =
                    clamp_negative(&mut scratch.big_u) + clamp_negative(&mut scratch.big_v);
                std::mem::swap(state, scratch);
                faults
            }
        }
    }

    fn physical(&self) -> FieldState {
        match self {
            Integrator::Upwind { state, .. } => state.clone(),
            Integrator::Characteristics {
                state, profile, bc, ..
            } => inverse_transform(state, profile, *bc),
        }
    }

    fn bound_ok(&self, bounds: (f64, f64)) -> bool {
        match self {
            Integrator::Upwind { state, .. } => {
                within_bound(&state.u, bounds.0) && within_bound(&state.v, bounds.1)
            }
            // checked on the physical records
            Integrator::Characteristics { .. } => true,
        }
    }

    /// Fixed-point residual of the scheme at the current state.
    fn residual(&self) -> f64 {
        match self {
            Integrator::Upwind { op, state, .. } => op.residual(&state.u, &state.v),
            Integrator::Characteristics { op, state, .. } => {
                let n = state.big_u.len();
                let mut u = vec![0.0; n];
                let mut v = vec![0.0; n];
                op.step_into(&state.big_u, &state.big_v, &mut u, &mut v);
                let du = u.iter().zip(&state.big_u).map(|(a, b)| (a - b).abs());
                let dv = v.iter().zip(&state.big_v).map(|(a, b)| (a - b).abs());
                du.chain(dv).fold(0.0, f64::max) / op.dt()
            }
        }
    }
}

fn check_init(init: &FieldState, params: &ModelParams, profile: &SpeedProfile) -> Result<()> {
    params.validate()?;
    let grid = Grid::new(init.len())?;
    init.validate(&grid)?;
    if params.bc.is_periodic() {
        profile.check_periodic()?;
    }
    Ok(())
}

/// Integrates the reduced system up to `config.t_end`.
pub fn simulate(
    init: &FieldState,
    params: &ModelParams,
    profile: &SpeedProfile,
    config: &SchemeConfig,
) -> Result<Trajectory> {
    simulate_with_reference(init, params, profile, config, None)
}

/// Like [`simulate`], additionally recording the Lyapunov functional
/// relative to `reference`.
pub fn simulate_with_reference(
    init: &FieldState,
    params: &ModelParams,
    profile: &SpeedProfile,
    config: &SchemeConfig,
    reference: Option<&SteadyProfile>,
) -> Result<Trajectory> {
    config.validate()?;
    check_init(init, params, profile)?;
    let bounds = a_priori_bounds(init, params.alpha, profile);
    let mut integrator = Integrator::new(init, params, profile, config.scheme, config.cfl)?;
    let dt = integrator.dt();
    let t0 = init.t;
    let t_end = t0 + config.t_end;

    let mut records = vec![init.clone()];
    let mut diagnostics = vec![StateDiagnostics::of(init, bounds, profile, reference)?];
    let mut steps = 0;
    let mut clamped = 0;
    let mut bound_violations = 0;
    while integrator.time() < t_end - 1e-12 * dt.max(1.0) {
        clamped += integrator.advance(t_end - integrator.time());
        steps += 1;
        if clamped > MAX_CLAMPS {
            return Err(Error::Integration(format!(
                "positivity fault: {clamped} negative undershoots by t = {}",
                integrator.time()
            )));
        }
        if !integrator.bound_ok(bounds) {
            bound_violations += 1;
        }
        let last = integrator.time() >= t_end - 1e-12 * dt.max(1.0);
        if steps % config.output_stride == 0 || last {
            let state = integrator.physical();
            let diag = StateDiagnostics::of(&state, bounds, profile, reference)?;
            if !diag.bound_ok {
                bound_violations += 1;
            }
            records.push(state);
            diagnostics.push(diag);
        }
    }
    Ok(Trajectory {
        records,
        diagnostics,
        dt,
        steps,
        clamped,
        bound_violations,
        bounds,
    })
}

/// Integrates the three-field system with Arp2/3 relaxation
/// `ε ∂t a = 1 − a (1 + u + v)` (upwind transport only).
///
/// The `a` equation is linear in `a` for frozen `(u, v)` and is integrated
/// exactly over each step, so `a` stays in `(0, 1]` for any `ε > 0`.
pub fn simulate_full_arp23(
    init: &FieldState,
    params: &ModelParams,
    profile: &SpeedProfile,
    config: &SchemeConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let epsilon = params
        .epsilon
        .ok_or_else(|| Error::Config("full Arp2/3 system needs epsilon".into()))?;
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be > 0, got {epsilon}")));
    }
    if config.scheme != Scheme::Upwind {
        return Err(Error::Config(
            "the full Arp2/3 system is integrated with the upwind scheme only".into(),
        ));
    }
    check_init(init, params, profile)?;
    if init.a.is_none() {
        return Err(Error::Config(
            "full Arp2/3 system needs an initial a field".into(),
        ));
    }
    let n = init.len();
    let grid = Grid::new(n)?;
    let dt = cfl_dt(&grid, profile, config.cfl)?;
    let op = UpwindOperator::new(params, profile, n);
    let bounds = a_priori_bounds(init, params.alpha, profile);

    let mut state = init.clone();
    let mut next = init.clone();
    let mut records = vec![init.clone()];
    let mut diagnostics = vec![StateDiagnostics::of(init, bounds, profile, None)?];
    let t_end = init.t + config.t_end;
    let mut steps = 0;
    let mut clamped = 0;
    let mut bound_violations = 0;
    while state.t < t_end - 1e-12 {
        let h = dt.min(t_end - state.t);
        let a_old = state.a.as_ref().expect("checked above");
        let a_new: Vec<f64> = (0..n)
            .map(|i| {
                let load = 1.0 + state.u[i] + state.v[i];
                let a_inf = 1.0 / load;
                a_inf + (a_old[i] - a_inf) * (-load * h / epsilon).exp()
            })
            .collect();
        op.step_full_into(&state.u, &state.v, &a_new, h, &mut next.u, &mut next.v);
        clamped += clamp_negative(&mut next.u) + clamp_negative(&mut next.v);
        if clamped > MAX_CLAMPS {
            return Err(Error::Integration("positivity fault in full system".into()));
        }
        next.a = Some(a_new);
        next.t = state.t + h;
        std::mem::swap(&mut state, &mut next);
        steps += 1;
        if !(within_bound(&state.u, bounds.0) && within_bound(&state.v, bounds.1)) {
            bound_violations += 1;
        }
        if steps % config.output_stride == 0 || state.t >= t_end - 1e-12 {
            diagnostics.push(StateDiagnostics::of(&state, bounds, profile, None)?);
            records.push(state.clone());
        }
    }
    Ok(Trajectory {
        records,
        diagnostics,
        dt,
        steps,
        clamped,
        bound_violations,
        bounds,
    })
}

fn default_window() -> f64 {
    1.0
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_t_max() -> f64 {
    200.0
}

/// Settings for [`march_to_steady`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarchConfig {
    pub scheme: Scheme,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Bound on `sup |state(t+Δ) − state(t)| / Δ`, relative to the sup of the
    /// state once that drops below one (slow decay is not convergence).
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Check window `Δ`.
    #[serde(default = "default_window")]
    pub window: f64,
}

impl MarchConfig {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            cfl: default_cfl(),
            tolerance: default_tolerance(),
            t_max: default_t_max(),
            window: default_window(),
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }
}

#[derive(Debug, Clone)]
pub enum MarchOutcome {
    Converged(SteadyProfile),
    DecayedToZero {
        t: f64,
    },
    NotConverged {
        t: f64,
        rate: f64,
        state: FieldState,
    },
}

impl MarchOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            MarchOutcome::Converged(_) => "converged",
            MarchOutcome::DecayedToZero { .. } => "decayed",
            MarchOutcome::NotConverged { .. } => "not-converged",
        }
    }

    pub fn steady(self) -> Option<SteadyProfile> {
        match self {
            MarchOutcome::Converged(s) => Some(s),
            _ => None,
        }
    }
}

/// Runs the flow until it stops changing, decays, or `t_max` passes.
pub fn march_to_steady(
    init: &FieldState,
    params: &ModelParams,
    profile: &SpeedProfile,
    config: &MarchConfig,
) -> Result<MarchOutcome> {
    if !(config.tolerance > 0.0) {
        return Err(Error::Config("steady tolerance must be > 0".into()));
    }
    if !(config.window > 0.0 && config.t_max > 0.0) {
        return Err(Error::Config("window and t_max must be > 0".into()));
    }
    check_init(init, params, profile)?;
    let mut integrator = Integrator::new(init, params, profile, config.scheme, config.cfl)?;
    let dt = integrator.dt();
    let window_steps = ((config.window / dt).round() as usize).max(1);
    let t_stop = init.t + config.t_max;
    let mut clamped = 0;
    let mut previous = integrator.physical();
    loop {
        for _ in 0..window_steps {
            clamped += integrator.advance(f64::INFINITY);
        }
        if clamped > MAX_CLAMPS {
            return Err(Error::Integration(format!(
                "positivity fault: {clamped} negative undershoots while marching"
            )));
        }
        let current = integrator.physical();
        let elapsed = current.t - previous.t;
        let rate = current.sup_distance(&previous) / elapsed;
        if current.sup_norm() < DECAY_THRESHOLD {
            return Ok(MarchOutcome::DecayedToZero { t: current.t });
        }
        if rate < config.tolerance * current.sup_norm().min(1.0) {
            let residual = integrator.residual();
            let profile_out = SteadyProfile::new(
                current.u,
                current.v,
                params.alpha,
                params.bc,
                SteadyMethod::TimeMarch,
                residual,
            );
            return Ok(MarchOutcome::Converged(profile_out));
        }
        if current.t >= t_stop {
            return Ok(MarchOutcome::NotConverged {
                t: current.t,
                rate,
                state: current,
            });
        }
        previous = current;
    }
}

/// Smooth `C¹` bump `height · cos²(π (x − center) / width)` on
/// `|x − center| < width / 2`, sampled at cell centres.
pub fn cosine_bump(grid: &Grid, center: f64, width: f64, height: f64) -> Vec<f64> {
    grid.centers()
        .into_iter()
        .map(|x| {
            let s = (x - center) / width;
            if s.abs() < 0.5 {
                height * (std::f64::consts::PI * s).cos().powi(2)
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProfileSpec;
    use std::f64::consts::PI;

    fn unit() -> SpeedProfile {
        SpeedProfile::constant(1.0).unwrap()
    }

    #[test]
    fn cfl_step_formula() {
        let g = Grid::new(100).unwrap();
        assert!((cfl_dt(&g, &unit(), 1.0).unwrap() - 0.01).abs() < 1e-15);
        let two = SpeedProfile::constant(2.0).unwrap();
        assert!((cfl_dt(&g, &two, 0.5).unwrap() - 0.0025).abs() < 1e-15);
        let cos = SpeedProfile::new(ProfileSpec::cosine(1.0, 0.075, 1), 1024).unwrap();
        let g = Grid::new(400).unwrap();
        assert!((cfl_dt(&g, &cos, 0.9).unwrap() - 0.9 / (400.0 * 1.075)).abs() < 1e-15);
        assert!(cfl_dt(&g, &cos, 0.0).is_err());
        assert!(cfl_dt(&g, &cos, 1.1).is_err());
    }

    #[test]
    fn upwind_rejects_cfl_violation() {
        let g = Grid::new(50).unwrap();
        let s = FieldState::zeros(&g);
        let p = ModelParams::new(1.0, BoundaryCondition::Pbc).unwrap();
        assert!(matches!(
            step_upwind(&s, &p, &unit(), 0.03),
            Err(Error::Integration(_))
        ));
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let g = Grid::new(64).unwrap();
        let p = ModelParams::new(3.0, BoundaryCondition::Dbc).unwrap();
        let mut s = FieldState::zeros(&g);
        for _ in 0..10 {
            s = step_upwind(&s, &p, &unit(), 0.01).unwrap();
        }
        assert_eq!(s.sup_norm(), 0.0);
    }

    #[test]
    fn constant_state_is_stationary_for_both_schemes() {
        let g = Grid::new(100).unwrap();
        let p = ModelParams::new(3.0, BoundaryCondition::Pbc).unwrap();
        let s = FieldState::new(0.0, vec![1.0; 100], vec![1.0; 100]);
        let next = step_upwind(&s, &p, &unit(), 0.01).unwrap();
        assert!(next.sup_distance(&s) < 1e-12);
        let ts = transform_state(&s, &unit(), p.bc);
        let dt = characteristic_dt(100, &unit());
        let mut t = ts.clone();
        for _ in 0..100 {
            t = step_characteristics(&t, &p, &unit(), dt).unwrap();
        }
        let dev = t
            .big_u
            .iter()
            .chain(&t.big_v)
            .map(|w| (w - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-10, "{dev}");
        let _ = g;
    }

    #[test]
    fn characteristics_pure_transport_is_exact_shift() {
        let n = 40;
        let p = ModelParams::new(0.0, BoundaryCondition::Pbc).unwrap();
        let u: Vec<f64> = (0..n).map(|j| (j as f64 * 0.37).sin().abs()).collect();
        let v: Vec<f64> = (0..n).map(|j| (j as f64 * 0.11).cos().abs()).collect();
        let ts = TransformedState {
            t: 0.0,
            big_u: u.clone(),
            big_v: v.clone(),
        };
        let dt = characteristic_dt(n, &unit());
        let next = step_characteristics(&ts, &p, &unit(), dt).unwrap();
        let decay = (-dt).exp();
        for j in 0..n {
            let shifted_u = u[(j + n - 1) % n] * decay;
            let shifted_v = v[(j + 1) % n] * decay;
            assert!((next.big_u[j] - shifted_u).abs() < 1e-15);
            assert!((next.big_v[j] - shifted_v).abs() < 1e-15);
        }
        assert!(step_characteristics(&ts, &p, &unit(), 0.5 * dt).is_err());
    }

    fn transport_error(n: usize) -> f64 {
        let g = Grid::new(n).unwrap();
        let p = ModelParams::new(0.0, BoundaryCondition::Pbc).unwrap();
        let u0 = cosine_bump(&g, 0.5, 0.4, 1.0);
        let init = FieldState::new(0.0, u0.clone(), vec![0.0; n]);
        let traj = simulate(&init, &p, &unit(), &SchemeConfig::new(Scheme::Upwind, 1.0)).unwrap();
        let last = traj.last();
        assert!((last.t - 1.0).abs() < 1e-12);
        // after one period the exact solution is e^{-1} u0
        last.u
            .iter()
            .zip(&u0)
            .map(|(a, b)| (a - (-1.0f64).exp() * b).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn upwind_transport_converges_at_first_order() {
        let (e1, e2) = (transport_error(200), transport_error(400));
        assert!(e2 < e1);
        let order = (e1 / e2).log2();
        assert!(order > 0.7 && order < 1.3, "order {order}");
    }

    #[test]
    fn full_system_relaxes_arp23_without_filaments() {
        let g = Grid::new(16).unwrap();
        let eps = 0.1;
        let p = ModelParams::new(2.0, BoundaryCondition::Pbc)
            .unwrap()
            .with_epsilon(eps)
            .unwrap();
        let mut init = FieldState::zeros(&g);
        init.a = Some(vec![0.5; 16]);
        let traj = simulate_full_arp23(
            &init,
            &p,
            &unit(),
            &SchemeConfig::new(Scheme::Upwind, 0.5).with_stride(1),
        )
        .unwrap();
        for rec in &traj.records {
            let a = rec.a.as_ref().unwrap()[3];
            let exact = 1.0 - 0.5 * (-rec.t / eps).exp();
            assert!((a - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn full_system_requires_epsilon() {
        let g = Grid::new(16).unwrap();
        let p = ModelParams::new(2.0, BoundaryCondition::Pbc).unwrap();
        let mut init = FieldState::zeros(&g);
        init.a = Some(vec![1.0; 16]);
        let cfg = SchemeConfig::new(Scheme::Upwind, 1.0);
        assert!(matches!(
            simulate_full_arp23(&init, &p, &unit(), &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn march_finds_constant_pbc_state() {
        let g = Grid::new(64).unwrap();
        let p = ModelParams::new(3.0, BoundaryCondition::Pbc).unwrap();
        let u: Vec<f64> = g
            .centers()
            .iter()
            .map(|x| 0.5 + 0.3 * (2.0 * PI * x).sin())
            .collect();
        let init = FieldState::new(0.0, u, vec![0.7; 64]);
        let out = march_to_steady(&init, &p, &unit(), &MarchConfig::new(Scheme::Upwind)).unwrap();
        let steady = out.steady().expect("converged");
        for (a, b) in steady.u_bar.iter().zip(&steady.v_bar) {
            assert!((a - 1.0).abs() < 1e-6 && (b - 1.0).abs() < 1e-6);
        }
        assert!(steady.residual < 1e-6);
    }

    #[test]
    fn march_reports_not_converged() {
        let g = Grid::new(32).unwrap();
        let p = ModelParams::new(3.0, BoundaryCondition::Pbc).unwrap();
        let init = FieldState::new(0.0, cosine_bump(&g, 0.5, 0.3, 1.0), vec![0.0; 32]);
        let cfg = MarchConfig::new(Scheme::Upwind).with_t_max(2.0);
        assert_eq!(
            march_to_steady(&init, &p, &unit(), &cfg).unwrap().label(),
            "not-converged"
        );
    }
}
