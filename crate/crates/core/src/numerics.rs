//! Scalar root finding and quadrature used by the steady-state constructions.

use crate::error::{Error, Result};

/// Bisection on a sign-changing bracket, finished with one secant step when
/// it stays inside the final bracket and improves the residual.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::Numerical(format!(
            "root not bracketed on [{lo}, {hi}]: f = {fa}, {fb}"
        )));
    }
    let mut fb = fb;
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    let mid = 0.5 * (a + b);
    let secant = b - fb * (b - a) / (fb - fa);
    if secant > a.min(b) && secant < a.max(b) {
        let fs = f(secant);
        if fs.abs() < f(mid).abs() {
            return Ok(secant);
        }
    }
    Ok(mid)
}

/// Bisection with a relative tolerance on the root.
pub fn bisect_relative<F>(f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let scale = lo.abs().max(hi.abs());
    // the bracket shrinks to the root, which may be much smaller than hi
    let mut tol = rel_tol * scale;
    let mut g = f;
    let mut root = bisect(&mut g, lo, hi, tol)?;
    for _ in 0..4 {
        let wanted = rel_tol * root.abs();
        if wanted >= tol || wanted == 0.0 {
            break;
        }
        tol = wanted;
        let width = 4.0 * tol.max(1e3 * f64::EPSILON * root.abs());
        let (a, b) = ((root - width).max(lo), (root + width).min(hi));
        root = match bisect(&mut g, a, b, tol) {
            Ok(r) => r,
            Err(_) => bisect(&mut g, lo, hi, tol)?,
        };
    }
    Ok(root)
}

/// Composite Simpson rule on `panels` (even) sub-intervals.
pub fn simpson<F>(f: F, a: f64, b: f64, panels: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let m = panels + panels % 2;
    let h = (b - a) / m as f64;
    let mut sum = f(a) + f(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h);
    }
    sum * h / 3.0
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson<F>(f: &F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> Result<f64> {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if !delta.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        Ok(step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)?
            + step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)?)
    }

    // a coarse first pass fixes the absolute scale of the tolerance
    let coarse = simpson(f, a, b, 64);
    let tol = abs_tol.max(rel_tol * coarse.abs());
    let panels = 16;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let (x0, x1) = (a + k as f64 * h, a + (k + 1) as f64 * h);
        let xm = 0.5 * (x0 + x1);
        let (f0, f1, fm) = (f(x0), f(x1), f(xm));
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        total += step(f, x0, f0, x1, f1, xm, fm, whole, tol / panels as f64, 40)?;
    }
    Ok(total)
}
