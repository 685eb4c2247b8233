//! Central finite differences with Richardson extrapolation.
//!
//! This is the independent cross-check for the Taylor-jet evaluator and the
//! fallback for opaque (closure-backed) fields whose derivatives have no
//! symbolic representation.  Per-axis central stencils of the requested
//! order are tensor-composed for mixed partials; a single Richardson step
//! cancels the leading O(h²) error.

use crate::error::{Error, Result};
use crate::fields::jet::{midx_total, MIdx};
use crate::fields::Point;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdOptions {
    /// Base step; per-axis steps are `step * (1 + |coordinate|)`.
    pub step: f64,
    /// Apply one Richardson halving step (O(h²) → O(h⁴)).
    pub richardson: bool,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions { step: 5e-3, richardson: true }
    }
}

/// Central stencil (offsets in units of h, weights in units of h^-order).
fn stencil(order: u8) -> (&'static [f64], &'static [f64]) {
    match order {
        1 => (&[-1.0, 1.0], &[-0.5, 0.5]),
        2 => (&[-1.0, 0.0, 1.0], &[1.0, -2.0, 1.0]),
        3 => (&[-2.0, -1.0, 1.0, 2.0], &[-0.5, 1.0, -1.0, 0.5]),
        4 => (&[-2.0, -1.0, 0.0, 1.0, 2.0], &[1.0, -4.0, 6.0, -4.0, 1.0]),
        _ => unreachable!("stencil order bounded by caller"),
    }
}

fn apply<F>(f: &mut F, point: Point, idx: &MIdx, steps: &[f64; 4], axis: usize) -> Result<f64>
where
    F: FnMut(Point) -> Result<f64>,
{
    match (axis..4).find(|&k| idx[k] > 0) {
        None => f(point),
        Some(k) => {
            let (offsets, weights) = stencil(idx[k]);
            let h = steps[k];
            let mut acc = 0.0;
            for (o, w) in offsets.iter().zip(weights) {
                let mut p = point;
                p[k] += o * h;
                acc += w * apply(f, p, idx, steps, k + 1)?;
            }
            Ok(acc / h.powi(idx[k] as i32))
        }
    }
}

/// ∂^idx f at `point` by central differences.
pub fn fd_partial<F>(mut f: F, point: Point, idx: &MIdx, opts: FdOptions) -> Result<f64>
where
    F: FnMut(Point) -> Result<f64>,
{
    if midx_total(idx) == 0 {
        return f(point);
    }
    if idx.iter().any(|&o| o > 4) {
        return Err(Error::UnsupportedOrder {
            requested: *idx.iter().max().unwrap() as usize,
            max: 4,
        });
    }
    let mut steps = [0.0; 4];
    for k in 0..4 {
        steps[k] = opts.step * (1.0 + point[k].abs());
    }
    let coarse = apply(&mut f, point, idx, &steps, 0)?;
    if !opts.richardson {
        return Ok(coarse);
    }
    let halved: [f64; 4] = std::array::from_fn(|k| steps[k] * 0.5);
    let fine = apply(&mut f, point, idx, &halved, 0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}
