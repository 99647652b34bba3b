//! Adaptive Simpson quadrature.

use std::cell::Cell;

use crate::{Error, Result};

const MAX_DEPTH: u32 = 48;
const MAX_EVALUATIONS: usize = 2_000_000;
const INITIAL_PANELS: usize = 16;

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Integrates `f` over `[a, b]` to the requested relative tolerance.
///
/// The interval is split into a few panels first so that narrow features
/// are not skipped by the first estimate. Fails with
/// [`Error::QuadratureFailure`] when the recursion depth or the evaluation
/// budget is exhausted, or the integrand is not finite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::QuadratureFailure(format!("non-finite bounds [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let count = Cell::new(0usize);
    let eval = |x: f64| -> Result<f64> {
        count.set(count.get() + 1);
        if count.get() > MAX_EVALUATIONS {
            return Err(Error::QuadratureFailure(format!("more than {MAX_EVALUATIONS} evaluations")));
        }
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::QuadratureFailure(format!("integrand is {y} at {x}")))
        }
    };

    let h = (b - a) / INITIAL_PANELS as f64;
    let mut panels = Vec::with_capacity(INITIAL_PANELS);
    let mut coarse = 0.0;
    let mut scale = 0.0;
    let mut fa = eval(a)?;
    for i in 0..INITIAL_PANELS {
        let pa = a + i as f64 * h;
        let pb = if i + 1 == INITIAL_PANELS { b } else { pa + h };
        let fm = eval(0.5 * (pa + pb))?;
        let fb = eval(pb)?;
        let whole = simpson(pa, pb, fa, fm, fb);
        coarse += whole;
        scale += simpson(pa, pb, fa.abs(), fm.abs(), fb.abs());
        panels.push(Panel { a: pa, b: pb, fa, fm, fb, whole });
        fa = fb;
    }
    if scale == 0.0 {
        return Ok(coarse);
    }
    let tol = rel_tol * scale;
    let mut total = 0.0;
    for p in panels {
        total += refine(&eval, p, tol / INITIAL_PANELS as f64, 0)?;
    }
    Ok(total)
}

fn refine<F: Fn(f64) -> Result<f64>>(f: &F, p: Panel, tol: f64, depth: u32) -> Result<f64> {
    let m = 0.5 * (p.a + p.b);
    let lm = 0.5 * (p.a + m);
    let rm = 0.5 * (m + p.b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(p.a, m, p.fa, flm, p.fm);
    let right = simpson(m, p.b, p.fm, frm, p.fb);
    let delta = left + right - p.whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_DEPTH || m <= p.a || m >= p.b {
        return Err(Error::QuadratureFailure(format!(
            "no convergence on [{:e}, {:e}] after {depth} subdivisions",
            p.a, p.b
        )));
    }
    let l = Panel {
        a: p.a,
        b: m,
        fa: p.fa,
        fm: flm,
        fb: p.fm,
        whole: left,
    };
    let r = Panel {
        a: m,
        b: p.b,
        fa: p.fm,
        fm: frm,
        fb: p.fb,
        whole: right,
    };
    Ok(refine(f, l, tol / 2.0, depth + 1)? + refine(f, r, tol / 2.0, depth + 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomials_are_exact() {
        let v = integrate(|x| 3.0 * x * x - x + 2.0, -1.0, 2.0, 1e-12).unwrap();
        assert!((v - (9.0 - 1.5 + 6.0)).abs() < 1e-12);
        assert_eq!(integrate(|x| x, 1.0, 1.0, 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn oscillatory_integrand() {
        let v = integrate(|x| (x * 10.0).sin().powi(2), 0.0, PI, 1e-10).unwrap();
        assert!((v - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn sharp_peak() {
        let e = 1e-3;
        let v = integrate(|x| e / (x * x + e * e), -1.0, 1.0, 1e-8).unwrap();
        let want = 2.0 * (1.0 / e).atan();
        assert!((v - want).abs() < 1e-6 * want);
    }

    #[test]
    fn non_finite_integrand_fails() {
        let r = integrate(|x| 1.0 / x, -1.0, 1.0, 1e-8);
        assert!(matches!(r, Err(Error::QuadratureFailure(_))));
        let r = integrate(|x| (x * 50.0).sin().abs(), 0.0, 1.0, 1e-300);
        assert!(matches!(r, Err(Error::QuadratureFailure(_))));
    }
}
