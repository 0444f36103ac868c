//! Lyapunov functional, its dissipation identity, decay-rate estimation and
//! the monitors backed by the a-priori estimates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BoundaryCondition, FieldState, ModelParams, SpeedProfile};
use crate::simulator::{a_priori_bounds, Trajectory};
use crate::steady::{BifurcationData, SteadyProfile};

fn check_reference(state: &FieldState, steady: &SteadyProfile) -> Result<()> {
    if state.len() != steady.len() {
        return Err(Error::Config(format!(
            "state has {} cells, steady reference {}",
            state.len(),
            steady.len()
        )));
    }
    if let Some(i) = (0..steady.len()).find(|&i| !(steady.u_bar[i] > 0.0 && steady.v_bar[i] > 0.0))
    {
        return Err(Error::Domain(format!(
            "steady reference is not positive at cell {i}: ({}, {})",
            steady.u_bar[i], steady.v_bar[i]
        )));
    }
    Ok(())
}

/// `H = ½ ∫ c [(v̄/ū)(u − ū)² + (ū/v̄)(v − v̄)²] dx` by the midpoint rule.
pub fn lyapunov_h(
    state: &FieldState,
    steady: &SteadyProfile,
    profile: &SpeedProfile,
) -> Result<f64> {
    check_reference(state, steady)?;
    let n = state.len();
    let dx = 1.0 / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let (ub, vb) = (steady.u_bar[i], steady.v_bar[i]);
        let du = state.u[i] - ub;
        let dv = state.v[i] - vb;
        let c = profile.eval((i as f64 + 0.5) * dx);
        sum += c * (vb / ub * du * du + ub / vb * dv * dv);
    }
    Ok(0.5 * sum * dx)
}

/// Pointwise dissipation density.
pub fn dissipation_j(u: f64, v: f64, u_bar: f64, v_bar: f64) -> f64 {
    let hu = (u - u_bar) / u_bar;
    let hv = (v - v_bar) / v_bar;
    let load = 1.0 + u + v;
    let squares = u_bar * u_bar + v_bar * v_bar;
    hu * hu * (load * squares + 2.0 * v_bar * v_bar * u_bar)
        + hv * hv * (load * squares + 2.0 * u_bar * u_bar * v_bar)
        - 2.0 * hu * hv * (squares + u_bar * u_bar * v_bar + u_bar * v_bar * v_bar)
}

/// `dH/dt = −(α/2) ∫ c J / ((1 + u + v)(1 + ū + v̄)) dx`.
pub fn lyapunov_production(
    state: &FieldState,
    steady: &SteadyProfile,
    params: &ModelParams,
    profile: &SpeedProfile,
) -> Result<f64> {
    check_reference(state, steady)?;
    let n = state.len();
    let dx = 1.0 / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let (u, v) = (state.u[i], state.v[i]);
        let (ub, vb) = (steady.u_bar[i], steady.v_bar[i]);
        let c = profile.eval((i as f64 + 0.5) * dx);
        sum += c * dissipation_j(u, v, ub, vb) / ((1.0 + u + v) * (1.0 + ub + vb));
    }
    Ok(-0.5 * params.alpha * sum * dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub dh_dt_identity: f64,
    /// Central difference of `H` between neighbouring records (one-sided at
    /// the ends).
    pub dh_dt_fd: f64,
    pub l2_u: f64,
    pub l2_v: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub min_u: f64,
    pub min_v: f64,
    pub max_u: f64,
    pub max_v: f64,
    pub bound_ok: bool,
}

/// Lyapunov records along a trajectory.
pub fn lyapunov_series(
    trajectory: &Trajectory,
    steady: &SteadyProfile,
    params: &ModelParams,
    profile: &SpeedProfile,
) -> Result<Vec<DiagnosticsRecord>> {
    let records = &trajectory.records;
    let h: Vec<f64> = records
        .iter()
        .map(|s| lyapunov_h(s, steady, profile))
        .collect::<Result<_>>()?;
    let m = records.len();
    let mut out = Vec::with_capacity(m);
    for (k, state) in records.iter().enumerate() {
        let fd = if m < 2 {
            0.0
        } else if k == 0 {
            (h[1] - h[0]) / (records[1].t - records[0].t)
        } else if k == m - 1 {
            (h[k] - h[k - 1]) / (records[k].t - records[k - 1].t)
        } else {
            (h[k + 1] - h[k - 1]) / (records[k + 1].t - records[k - 1].t)
        };
        let d = &trajectory.diagnostics[k];
        out.push(DiagnosticsRecord {
            t: state.t,
            h: h[k],
            dh_dt_identity: lyapunov_production(state, steady, params, profile)?,
            dh_dt_fd: fd,
            l2_u: d.l2_u,
            l2_v: d.l2_v,
            mass_u: d.mass_u,
            mass_v: d.mass_v,
            min_u: d.min_u,
            min_v: d.min_v,
            max_u: d.max_u,
            max_v: d.max_v,
            bound_ok: d.bound_ok,
        });
    }
    Ok(out)
}

/// Least-squares line through `(t, ln H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLinearFit {
    pub gamma: f64,
    pub intercept: f64,
    /// RMS deviation of `ln H` from the line divided by the total drop of
    /// `ln H` over the window.
    pub residual: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Fits `H ≈ e^{b − γ t}` on the records with `t ≥ t_start` and `H` above
/// `floor`; the window ends before the first record at or below the floor.
pub fn fit_log_linear(times: &[f64], h: &[f64], t_start: f64, floor: f64) -> Result<LogLinearFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(h)
        .skip_while(|(t, _)| **t < t_start)
        .take_while(|(_, v)| **v > floor && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Numerical(format!(
            "only {} usable records in the fit window from t = {t_start}",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    let span = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
        - pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let residual = if span > 0.0 { rms / span } else { 0.0 };
    Ok(LogLinearFit {
        gamma: -slope,
        intercept,
        residual,
        window: (pts[0].0, pts[pts.len() - 1].0),
        points: pts.len(),
    })
}

/// Start of the fit window: `max(T, first time H fell below H(0)/10)`.
pub fn fit_window_start(times: &[f64], h: &[f64], threshold: f64) -> f64 {
    let h0 = h.first().copied().unwrap_or(0.0);
    let dropped = times
        .iter()
        .zip(h)
        .find(|(_, v)| **v <= 0.1 * h0)
        .map(|(t, _)| *t)
        .unwrap_or(f64::INFINITY);
    threshold.max(dropped)
}

/// Fitted and theoretical decay rates of `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    pub gamma_fit: f64,
    pub gamma_bound: f64,
    pub kappa: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub window: (f64, f64),
    pub residual: f64,
}

/// `γ = 2ακ / ((1 + 2M)² (4 + κ))`.
pub fn gamma_bound(alpha: f64, kappa: f64, big_m: f64) -> f64 {
    2.0 * alpha * kappa / ((1.0 + 2.0 * big_m).powi(2) * (4.0 + kappa))
}

/// `κ` and `M` measured over the records in `[t0, t1]`.
///
/// `κ` is the infimum of `(ū² + v̄²) w / (ū v̄)` with `w` running over both
/// `v/v̄`-type (`w = v`) and, for the mirrored case of the coercivity
/// argument, `u`-type (`w = u`) ratios, i.e. the smaller of the two.
pub fn measured_constants(
    records: &[FieldState],
    steady: &SteadyProfile,
    t0: f64,
    t1: f64,
) -> (f64, f64) {
    let n = steady.len();
    let mut kappa = f64::INFINITY;
    let mut big_m = steady
        .u_bar
        .iter()
        .chain(&steady.v_bar)
        .cloned()
        .fold(0.0, f64::max);
    for state in records.iter().filter(|s| s.t >= t0 && s.t <= t1) {
        for i in 0..n {
            let (ub, vb) = (steady.u_bar[i], steady.v_bar[i]);
            let weight = (ub * ub + vb * vb) / (ub * vb);
            kappa = kappa.min(weight * state.v[i].min(state.u[i]));
            big_m = big_m.max(state.u[i]).max(state.v[i]);
        }
    }
    (kappa, big_m)
}

/// Fits `γ` on a Lyapunov series and pairs it with the measured bound.
///
/// `floor` cuts the window off where `H` reaches the accuracy of the steady
/// reference.
pub fn fit_decay_rate(
    records: &[FieldState],
    h: &[f64],
    steady: &SteadyProfile,
    alpha: f64,
    threshold: f64,
    floor: f64,
) -> Result<RateEstimate> {
    let times: Vec<f64> = records.iter().map(|s| s.t).collect();
    let start = fit_window_start(&times, h, threshold);
    let fit = fit_log_linear(&times, h, start, floor)?;
    let (kappa, big_m) = measured_constants(records, steady, fit.window.0, fit.window.1);
    Ok(RateEstimate {
        gamma_fit: fit.gamma,
        gamma_bound: gamma_bound(alpha, kappa, big_m),
        kappa,
        big_m,
        window: fit.window,
        residual: fit.residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub bound_u: f64,
    pub bound_v: f64,
    pub min: f64,
    /// `min(bound_u − max u, bound_v − max v)`.
    pub margin: f64,
    pub ok: bool,
}

/// Checks `0 ≤ u ≤ (c_max/c_min) max{max u0, α}` and the `v` analogue.
pub fn check_bounds(
    state: &FieldState,
    init: &FieldState,
    alpha: f64,
    profile: &SpeedProfile,
) -> BoundReport {
    let (bound_u, bound_v) = a_priori_bounds(init, alpha, profile);
    let max_u = state.u.iter().cloned().fold(0.0, f64::max);
    let max_v = state.v.iter().cloned().fold(0.0, f64::max);
    let min = state
        .u
        .iter()
        .chain(&state.v)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let margin = (bound_u - max_u).min(bound_v - max_v);
    let slack = 1e-9 * bound_u.max(bound_v).max(1.0);
    BoundReport {
        bound_u,
        bound_v,
        min,
        margin,
        ok: margin >= -slack && min >= -1e-13,
    }
}

/// Time after which solutions are bounded away from zero: `2/C`.
pub fn positivity_threshold(profile: &SpeedProfile) -> f64 {
    2.0 / profile.big_c()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L2DecayReport {
    pub ok: bool,
    /// Largest `(‖u‖ + ‖v‖)(t) / (e^{(α−1)t} (‖u0‖ + ‖v0‖))`.
    pub worst_ratio: f64,
    /// Fitted exponential rate of `‖u‖ + ‖v‖`.
    pub measured_rate: f64,
}

/// Checks `‖u‖ + ‖v‖ ≤ e^{(α−1)t} (‖u0‖ + ‖v0‖)` with 5% slack.
pub fn l2_decay_check(trajectory: &Trajectory, alpha: f64) -> Result<L2DecayReport> {
    if !(alpha < 1.0) {
        return Err(Error::Domain(format!(
            "the L2 decay estimate needs alpha < 1, got {alpha}"
        )));
    }
    let d = &trajectory.diagnostics;
    let t0 = d[0].t;
    let norm0 = d[0].l2_u + d[0].l2_v;
    if norm0 == 0.0 {
        return Ok(L2DecayReport {
            ok: true,
            worst_ratio: 0.0,
            measured_rate: f64::INFINITY,
        });
    }
    let mut worst = 0.0_f64;
    for r in d {
        let bound = ((alpha - 1.0) * (r.t - t0)).exp() * norm0;
        worst = worst.max((r.l2_u + r.l2_v) / bound);
    }
    let times: Vec<f64> = d.iter().map(|r| r.t).collect();
    let norms: Vec<f64> = d.iter().map(|r| r.l2_u + r.l2_v).collect();
    let measured_rate = fit_log_linear(&times, &norms, t0, 1e-200 * norm0)
        .map(|f| f.gamma)
        .unwrap_or(f64::NAN);
    Ok(L2DecayReport {
        ok: worst <= 1.05,
        worst_ratio: worst,
        measured_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeReport {
    /// Largest envelope amplitude `a` (zero inflow) or uniform lower
    /// bound `m` (periodic).
    pub lower: f64,
    /// Smallest `M` with `u ≤ M x`, `v ≤ M (1 − x)` (zero inflow) or the
    /// uniform upper bound (periodic).
    pub upper: f64,
    pub ok: bool,
}

/// Lower and upper envelopes over the records with `t ≥ threshold`.
///
/// Zero inflow: `u ≥ a sin(b0 X(x))`, `v ≥ a sin(b0 (1 − X(x)))`,
/// `u ≤ M x`, `v ≤ M (1 − x)`. Periodic: `m ≤ u, v ≤ M`.
pub fn lower_envelope_check(
    trajectory: &Trajectory,
    bif: &BifurcationData,
    profile: &SpeedProfile,
    threshold: f64,
) -> Result<EnvelopeReport> {
    let tail: Vec<&FieldState> = trajectory
        .records
        .iter()
        .filter(|s| s.t >= threshold)
        .collect();
    if tail.is_empty() {
        return Err(Error::Config(format!(
            "trajectory ends before the positivity threshold {threshold}"
        )));
    }
    let n = tail[0].len();
    let mut lower = f64::INFINITY;
    let mut upper = 0.0_f64;
    match (bif.bc, bif.b0) {
        (BoundaryCondition::Dbc, Some(b0)) => {
            let weights: Vec<(f64, f64, f64)> = (0..n)
                .map(|i| {
                    let x = (i as f64 + 0.5) / n as f64;
                    let big_x = profile.x_to_big_x(x);
                    ((b0 * big_x).sin(), (b0 * (1.0 - big_x)).sin(), x)
                })
                .collect();
            for s in &tail {
                for (i, &(su, sv, x)) in weights.iter().enumerate() {
                    lower = lower.min(s.u[i] / su).min(s.v[i] / sv);
                    upper = upper.max(s.u[i] / x).max(s.v[i] / (1.0 - x));
                }
            }
        }
        (BoundaryCondition::Dbc, None) => {
            return Err(Error::Config("zero-inflow envelope needs b0".into()));
        }
        (BoundaryCondition::Pbc, _) => {
            for s in &tail {
                for i in 0..n {
                    lower = lower.min(s.u[i]).min(s.v[i]);
                    upper = upper.max(s.u[i]).max(s.v[i]);
                }
            }
        }
    }
    Ok(EnvelopeReport {
        lower,
        upper,
        ok: lower > 1e-10 && upper.is_finite(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady::SteadyMethod;

    fn reference(u: f64, v: f64, n: usize) -> SteadyProfile {
        SteadyProfile::new(
            vec![u; n],
            vec![v; n],
            3.0,
            BoundaryCondition::Pbc,
            SteadyMethod::Constant,
            0.0,
        )
    }

    #[test]
    fn h_of_shifted_state() {
        let profile = SpeedProfile::constant(1.0).unwrap();
        let steady = reference(1.0, 1.0, 10);
        let delta = 0.3;
        let state = FieldState::new(0.0, vec![1.0 + delta; 10], vec![1.0; 10]);
        let h = lyapunov_h(&state, &steady, &profile).unwrap();
        assert!((h - delta * delta / 2.0).abs() < 1e-15);
        let same = FieldState::new(0.0, vec![1.0; 10], vec![1.0; 10]);
        assert_eq!(lyapunov_h(&same, &steady, &profile).unwrap(), 0.0);
    }

    #[test]
    fn nonpositive_reference_rejected() {
        let profile = SpeedProfile::constant(1.0).unwrap();
        let steady = reference(0.0, 1.0, 10);
        let state = FieldState::new(0.0, vec![1.0; 10], vec![1.0; 10]);
        assert!(matches!(
            lyapunov_h(&state, &steady, &profile),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn j_vanishes_at_reference_and_is_symmetric() {
        assert_eq!(dissipation_j(1.3, 0.4, 1.3, 0.4), 0.0);
        let a = dissipation_j(0.2, 1.7, 0.9, 0.6);
        let b = dissipation_j(1.7, 0.2, 0.6, 0.9);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn exponential_fit_is_exact() {
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.1).collect();
        let h: Vec<f64> = t.iter().map(|t| (-0.7 * t).exp()).collect();
        let fit = fit_log_linear(&t, &h, 0.0, 0.0).unwrap();
        assert!((fit.gamma - 0.7).abs() < 1e-10);
        assert!(fit.residual < 1e-12);
        // the window starts where H dropped by 10x
        let start = fit_window_start(&t, &h, 0.0);
        assert!((start - 3.3).abs() < 1e-9);
    }

    #[test]
    fn fit_truncates_at_floor() {
        let t: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let h: Vec<f64> = t.iter().map(|t| (-(t.min(40.0))).exp()).collect();
        let fit = fit_log_linear(&t, &h, 0.0, 1e-15).unwrap();
        assert!(fit.window.1 < 35.0);
        assert!((fit.gamma - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gamma_bound_formula() {
        assert!((gamma_bound(3.0, 2.0, 1.0) - 2.0 * 3.0 * 2.0 / (9.0 * 6.0)).abs() < 1e-15);
    }

    #[test]
    fn positivity_thresholds() {
        assert_eq!(
            positivity_threshold(&SpeedProfile::constant(1.0).unwrap()),
            2.0
        );
        assert_eq!(
            positivity_threshold(&SpeedProfile::constant(2.0).unwrap()),
            1.0
        );
    }

    #[test]
    fn bounds_for_zero_data() {
        let profile = SpeedProfile::constant(1.0).unwrap();
        let zero = FieldState::new(0.0, vec![0.0; 8], vec![0.0; 8]);
        let report = check_bounds(&zero, &zero, 2.5, &profile);
        assert!(report.ok);
        assert_eq!(report.bound_u, 2.5);
    }
}
