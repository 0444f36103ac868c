//! Browser bindings: a live simulation, steady profiles and the
//! bifurcation point.

use wasm_bindgen::prelude::*;

use actin_edge::model::{BoundaryCondition, FieldState, Grid, ModelParams, ProfileSpec, SpeedProfile};
use actin_edge::simulator::{cfl_dt, cosine_bump, step_upwind};
use actin_edge::steady::{
    bifurcation_analysis, dbc_shooting_steady, pbc_perturbative_for_spec,
};

fn js(err: actin_edge::Error) -> JsError {
    JsError::new(&err.to_string())
}

fn boundary(periodic: bool) -> BoundaryCondition {
    if periodic {
        BoundaryCondition::Pbc
    } else {
        BoundaryCondition::Dbc
    }
}

/// `c(x) = 1 + (3 eps / 4) cos(2 pi x)` for periodic runs, `c = 1` otherwise.
fn speed(periodic: bool, eps: f64, grid: &Grid) -> Result<(ProfileSpec, SpeedProfile), JsError> {
    let spec = if periodic && eps != 0.0 {
        ProfileSpec::cosine(1.0, 0.75 * eps, 1)
    } else {
        ProfileSpec::constant(1.0)
    };
    let profile = SpeedProfile::for_grid(spec.clone(), grid).map_err(js)?;
    Ok((spec, profile))
}

/// Upwind integration that the page advances frame by frame.
#[wasm_bindgen]
pub struct Simulation {
    state: FieldState,
    params: ModelParams,
    profile: SpeedProfile,
    dt: f64,
}

#[wasm_bindgen]
impl Simulation {
    #[wasm_bindgen(constructor)]
    pub fn new(alpha: f64, periodic: bool, eps: f64, n_cells: usize) -> Result<Simulation, JsError> {
        let grid = Grid::new(n_cells).map_err(js)?;
        let params = ModelParams::new(alpha, boundary(periodic)).map_err(js)?;
        let (_, profile) = speed(periodic, eps, &grid)?;
        let dt = cfl_dt(&grid, &profile, 0.9).map_err(js)?;
        let state = FieldState::new(
            0.0,
            cosine_bump(&grid, 0.35, 0.3, 1.0),
            cosine_bump(&grid, 0.65, 0.3, 0.5),
        );
        Ok(Simulation {
            state,
            params,
            profile,
            dt,
        })
    }

    /// Adds a bump of height `height` to both families at `center`.
    pub fn perturb(&mut self, center: f64, height: f64) -> Result<(), JsError> {
        let grid = Grid::new(self.state.len()).map_err(js)?;
        let bump = cosine_bump(&grid, center, 0.15, height);
        let inflow = !self.params.bc.is_periodic();
        let n = bump.len();
        for (i, b) in bump.into_iter().enumerate() {
            self.state.u[i] = (self.state.u[i] + b).max(0.0);
            self.state.v[i] = (self.state.v[i] + b).max(0.0);
            if inflow && i == 0 {
                self.state.u[i] = 0.0;
            }
            if inflow && i == n - 1 {
                self.state.v[i] = 0.0;
            }
        }
        Ok(())
    }

    /// Integrates for `duration` time units.
    pub fn advance(&mut self, duration: f64) -> Result<(), JsError> {
        let t_end = self.state.t + duration;
        while self.state.t < t_end - 1e-12 {
            let dt = self.dt.min(t_end - self.state.t);
            self.state = step_upwind(&self.state, &self.params, &self.profile, dt).map_err(js)?;
        }
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn u(&self) -> Vec<f64> {
        self.state.u.clone()
    }

    pub fn v(&self) -> Vec<f64> {
        self.state.v.clone()
    }
}

/// Steady profile `[u_bar..., v_bar...]`: shooting for zero inflow,
/// first-order perturbation of the constant branch for periodic runs.
#[wasm_bindgen]
pub fn steady_profile(alpha: f64, periodic: bool, eps: f64, n_cells: usize) -> Result<Vec<f64>, JsError> {
    let grid = Grid::new(n_cells).map_err(js)?;
    let profile = if periodic {
        let (spec, _) = speed(true, eps, &grid)?;
        pbc_perturbative_for_spec(alpha, &spec, &grid).map_err(js)?
    } else {
        dbc_shooting_steady(alpha, 1.0, &grid, 1e-10).map_err(js)?.profile
    };
    Ok(profile.u_bar.into_iter().chain(profile.v_bar).collect())
}

/// `[alpha0, b0, kappa1, kappa2]` for zero inflow at constant speed `c`
/// (`b0` is NaN for periodic conditions).
#[wasm_bindgen]
pub fn bifurcation(periodic: bool, c: f64) -> Result<Vec<f64>, JsError> {
    let profile = SpeedProfile::constant(c).map_err(js)?;
    let bif = bifurcation_analysis(boundary(periodic), &profile).map_err(js)?;
    Ok(vec![
        bif.alpha0,
        bif.b0.unwrap_or(f64::NAN),
        bif.kappa1.unwrap_or(f64::NAN),
        bif.kappa2.unwrap_or(f64::NAN),
    ])
}
