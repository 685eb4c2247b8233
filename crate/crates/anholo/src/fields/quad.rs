//! Adaptive Simpson quadrature for vector-valued integrands.
//!
//! The v-line integrals of the solution generator integrate whole jets at
//! once (each Taylor coefficient is one component), so the integrand is a
//! `Vec<f64>` and the error control is applied to the worst component.

use smallvec::smallvec;

use crate::error::{Error, Result};
use crate::fields::Coeffs;

#[derive(Clone, Copy, Debug)]
pub struct QuadTol {
    /// Relative tolerance against the running magnitude of the integral.
    pub rel: f64,
    /// Absolute floor below which differences are considered converged.
    pub abs: f64,
}

impl Default for QuadTol {
    fn default() -> Self {
        QuadTol { rel: 1e-10, abs: 1e-13 }
    }
}

const MAX_DEPTH: usize = 40;

fn simpson(fa: &[f64], fm: &[f64], fb: &[f64], h: f64) -> Coeffs {
    fa.iter()
        .zip(fm)
        .zip(fb)
        .map(|((a, m), b)| (a + 4.0 * m + b) * h / 6.0)
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: Coeffs,
    fm: Coeffs,
    fb: Coeffs,
    whole: Coeffs,
    tol: QuadTol,
    scale: f64,
    depth: usize,
) -> Result<Coeffs>
where
    F: FnMut(f64) -> Result<Coeffs>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(&fa, &flm, &fm, m - a);
    let right = simpson(&fm, &frm, &fb, b - m);
    let combined: Coeffs = left.iter().zip(&right).map(|(l, r)| l + r).collect();
    let err = combined
        .iter()
        .zip(&whole)
        .fold(0.0f64, |acc, (c, w)| acc.max((c - w).abs()))
        / 15.0;
    let budget = tol.abs.max(tol.rel * scale.max(max_abs(&combined)));
    if err <= budget || depth >= MAX_DEPTH {
        if depth >= MAX_DEPTH && err > budget * 16.0 {
            return Err(Error::Quadrature { requested: budget, achieved: err });
        }
        // Richardson tail: (16 S_half − S) / 15.
        return Ok(combined
            .iter()
            .zip(&whole)
            .map(|(c, w)| c + (c - w) / 15.0)
            .collect());
    }
    let l = recurse(f, a, m, fa, flm, fm.clone(), left, tol, scale, depth + 1)?;
    let r = recurse(f, m, b, fm, frm, fb, right, tol, scale, depth + 1)?;
    Ok(l.iter().zip(&r).map(|(x, y)| x + y).collect())
}

/// ∫ₐᵇ f(s) ds componentwise; `a > b` yields the signed integral.
pub fn integrate<F>(f: &mut F, a: f64, b: f64, tol: QuadTol) -> Result<Coeffs>
where
    F: FnMut(f64) -> Result<Coeffs>,
{
    let fa = f(a)?;
    if a == b {
        return Ok(smallvec![0.0; fa.len()]);
    }
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let fb = f(b)?;
    let whole = simpson(&fa, &fm, &fb, b - a);
    let scale = max_abs(&whole).max((b - a).abs() * max_abs(&fm));
    recurse(f, a, b, fa, fm, fb, whole, tol, scale, 0)
}
