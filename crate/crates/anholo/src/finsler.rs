//! The Finsler side of the construction: fundamental functions, their
//! Hessians and canonical (Cartan) N-connections, Sasaki lifts to d-metrics,
//! and the four-step nonholonomic transform that rewrites a Riemannian
//! d-metric in Finsler variables.
//!
//! Conventions: the base directions are (x¹, x²) and the fiber directions
//! are y = (v, y⁴); a vertical index a pairs with the horizontal index i
//! through a = 2 + i.  Everything is real — deformed (complex) structures
//! live in [`crate::starprod`] and only meet this module through their
//! series coefficients.

use crate::dgeometry::{DMetric, NConnection};
use crate::error::{Error, Result};
use crate::fields::{Backend, MultiIndex, Params, Point, ScalarField};
use crate::solution::partials;

/// A fundamental Finsler function F(x¹, x², v, y⁴), declared positively
/// 1-homogeneous in the fiber variables.  The declaration is checked by
/// [`FinslerFunction::homogeneity_defect`], not assumed.
#[derive(Clone, Debug)]
pub struct FinslerFunction {
    pub f: ScalarField,
}

/// Sample scalings used by the homogeneity check; mixed signs and a
/// non-integer to catch accidental polynomial luck.
const LAMBDAS: [f64; 4] = [-2.0, -1.0, 0.5, 3.0];

impl FinslerFunction {
    pub fn new(f: ScalarField) -> Self {
        FinslerFunction { f }
    }

    /// The quadratic form L = F², the object all Hessian and spray formulas
    /// differentiate.
    pub fn lagrangian(&self) -> ScalarField {
        self.f.powi(2)
    }

    /// Largest violation of positive 1-homogeneity, F(x, λy) = |λ|·F(x, y),
    /// over a few scalings λ, together with the Euler identity
    /// y^a ∂F/∂y^a = F.
    pub fn homogeneity_defect(&self, point: Point, params: &Params) -> Result<f64> {
        let base = self.f.eval(point, params)?;
        let mut worst = 0.0_f64;
        for lam in LAMBDAS {
            let scaled = [point[0], point[1], lam * point[2], lam * point[3]];
            let val = self.f.eval(scaled, params)?;
            worst = worst.max((val - lam.abs() * base).abs());
        }
        let d = partials(
            &self.f,
            point,
            params,
            Backend::Dual,
            &[[0, 0, 1, 0], [0, 0, 0, 1]],
        )?;
        worst = worst.max((point[2] * d[0] + point[3] * d[1] - base).abs());
        Ok(worst)
    }
}

/// The three distinct Hessian entries ½ ∂²L/∂y^a∂y^b as fields:
/// (f₃₃, f₃₄, f₄₄).
fn hessian_fields(fin: &FinslerFunction) -> [ScalarField; 3] {
    let l = fin.lagrangian();
    [
        0.5 * l.deriv(MultiIndex::new([0, 0, 2, 0])),
        0.5 * l.deriv(MultiIndex::new([0, 0, 1, 1])),
        0.5 * l.deriv(MultiIndex::new([0, 0, 0, 2])),
    ]
}

/// Vertical Hessian f_ab = ½ ∂²F²/∂y^a∂y^b at a point, a, b ∈ {v, y⁴}.
pub fn hessian(fin: &FinslerFunction, point: Point, params: &Params) -> Result<[[f64; 2]; 2]> {
    let l = fin.lagrangian();
    let d = partials(
        &l,
        point,
        params,
        Backend::Dual,
        &[[0, 0, 2, 0], [0, 0, 1, 1], [0, 0, 0, 2]],
    )?;
    let m = [[0.5 * d[0], 0.5 * d[1]], [0.5 * d[1], 0.5 * d[2]]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
    let scale = m
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, x| acc.max(x.abs()))
        .max(1e-30);
    if det.abs() <= 1e-12 * scale * scale {
        return Err(Error::DegenerateFinsler(format!(
            "Hessian determinant {det:.3e} below tolerance at scale {scale:.3e}"
        )));
    }
    Ok(m)
}

/// Geodesic-spray coefficients G^a of L = F², built symbolically:
/// G^a = ¼ f^{ab} (∂²L/∂y^b∂x^k · y^{2+k} − ∂L/∂x^{b−2}).
fn spray_fields(fin: &FinslerFunction) -> [ScalarField; 2] {
    let l = fin.lagrangian();
    let [f33, f34, f44] = hessian_fields(fin);
    let det = &f33 * &f44 - &f34 * &f34;
    // Inverse Hessian rows, contracted below against A_i.
    let inv = [
        [&f44 / &det, -(&f34 / &det)],
        [-(&f34 / &det), &f33 / &det],
    ];
    let a = [
        l.deriv(MultiIndex::new([1, 0, 1, 0])) * ScalarField::v()
            + l.deriv(MultiIndex::new([0, 1, 1, 0])) * ScalarField::y4()
            - l.deriv(MultiIndex::new([1, 0, 0, 0])),
        l.deriv(MultiIndex::new([1, 0, 0, 1])) * ScalarField::v()
            + l.deriv(MultiIndex::new([0, 1, 0, 1])) * ScalarField::y4()
            - l.deriv(MultiIndex::new([0, 1, 0, 0])),
    ];
    [
        0.25 * (&inv[0][0] * &a[0] + &inv[0][1] * &a[1]),
        0.25 * (&inv[1][0] * &a[0] + &inv[1][1] * &a[1]),
    ]
}

/// Spray values G^a at a point; 2-homogeneous in the fiber variables.
pub fn spray(fin: &FinslerFunction, point: Point, params: &Params) -> Result<[f64; 2]> {
    hessian(fin, point, params)?; // reject degenerate data with a clear error
    let g = spray_fields(fin);
    Ok([g[0].eval(point, params)?, g[1].eval(point, params)?])
}

/// Cartan canonical N-connection ᶜN^a_i = ∂G^a/∂y^{2+i} at a point;
/// rows are the vertical label a ∈ {v, y⁴}, columns the horizontal i.
pub fn cartan_n(fin: &FinslerFunction, point: Point, params: &Params) -> Result<[[f64; 2]; 2]> {
    hessian(fin, point, params)?;
    let g = spray_fields(fin);
    let mut n = [[0.0; 2]; 2];
    for a in 0..2 {
        for i in 0..2 {
            n[a][i] = g[a].partial_with(point, MultiIndex::axis(2 + i), params, Backend::Dual)?;
        }
    }
    Ok(n)
}

/// Sasaki lift of F: the d-metric with horizontal blocks f_{ij}, vertical
/// blocks f_{ab} (equal under the a = 2 + i index rule) and the Cartan
/// N-connection.  The d-metric ansatz keeps only diagonal vertical blocks,
/// so a Finsler function with f₃₄ ≠ 0 at the probe point is refused.
pub fn sasaki_lift(fin: &FinslerFunction, probe: Point, params: &Params) -> Result<DMetric> {
    let m = hessian(fin, probe, params)?;
    let scale = m
        .iter()
        .flatten()
        .fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if m[0][1].abs() > 1e-10 * scale {
        return Err(Error::DegenerateFinsler(format!(
            "off-diagonal Hessian f₃₄ = {:.3e} not representable in the diagonal d-metric ansatz",
            m[0][1]
        )));
    }
    let [f33, _, f44] = hessian_fields(fin);
    let g = spray_fields(fin);
    let nconn = NConnection {
        w: [
            g[0].deriv(MultiIndex::axis(2)),
            g[0].deriv(MultiIndex::axis(3)),
        ],
        n: [
            g[1].deriv(MultiIndex::axis(2)),
            g[1].deriv(MultiIndex::axis(3)),
        ],
    };
    Ok(DMetric::new(
        [f33.clone(), f44.clone()],
        [f33, f44],
        nconn,
    ))
}

/// Ratio num/den with the convention that 0/0 (both below 1e−13) means the
/// two connections agree trivially and counts as 1.
fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if num.abs() < 1e-13 && den.abs() < 1e-13 {
        return Ok(1.0);
    }
    if den.abs() < 1e-13 {
        return Err(Error::DivisionByZero(format!(
            "vanishing canonical connection component {what}"
        )));
    }
    Ok(num / den)
}

/// Compatibility angle between a metric's N-coefficients and the Cartan
/// ones: Θᵢ = (ẘᵢ/ᶜwᵢ)²(n̊ᵢ/ᶜnᵢ)².  Returns (Θ₁, |Θ₁ − Θ₂|); the transform
/// may proceed only when the defect is small, since a single Θ must serve
/// both horizontal directions.
pub fn theta_compatibility(
    w_ring: [f64; 2],
    w_cartan: [f64; 2],
    n_ring: [f64; 2],
    n_cartan: [f64; 2],
) -> Result<(f64, f64)> {
    let mut th = [0.0; 2];
    for i in 0..2 {
        let rw = ratio(w_ring[i], w_cartan[i], &format!("ᶜw_{}", i + 1))?;
        let rn = ratio(n_ring[i], n_cartan[i], &format!("ᶜn_{}", i + 1))?;
        th[i] = rw * rw * rn * rn;
    }
    Ok((th[0], (th[0] - th[1]).abs()))
}

/// Vielbein components solving the step-4 quadratic relations, with signed
/// squares: `sign31`·`e31`² is the actual coefficient multiplying h₃′, so the
/// reconstruction g̊₁ = g₁ + h₃′·sign31·e31² closes for either branch.
#[derive(Clone, Copy, Debug)]
pub struct Vielbein {
    pub e31: f64,
    pub sign31: f64,
    pub e24: f64,
    pub sign24: f64,
    /// Diagonal scalings √|f_α / source block|.
    pub diag: [f64; 4],
    pub diag_sign: [f64; 4],
    /// Product of the nonzero recorded signs, branch included.
    pub sign_product: f64,
}

impl Vielbein {
    /// Rebuild the source blocks from target data; used as the step-4
    /// residual check.
    pub fn reconstruct(&self, g: [f64; 2], h: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        (
            [g[0] + h[0] * self.sign31 * self.e31 * self.e31, g[1]],
            [h[0], h[1] + g[1] * self.sign24 * self.e24 * self.e24],
        )
    }
}

fn sign_of(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Solve the step-4 relations for the off-diagonal vielbein components
///
/// ```text
/// e̊³′₁″ = ±√|(g̊₁ − g₁)/h₃′|,   e̊²′₄″ = ±√|(h̊₄ − h₄)/g₂′|,
/// ```
///
/// all other off-diagonal components zero, plus the diagonal scalings
/// ±√|f_α / (source block)|.  The untouched relations g̊₂ = g₂ and h̊₃ = h₃
/// must already hold — there is nothing left to absorb a mismatch — else
/// `NoSolution`.  The ± branch is selected by `negative_branch` and applied
/// uniformly.
pub fn vielbein_solve(
    g_ring: [f64; 2],
    h_ring: [f64; 2],
    g: [f64; 2],
    h: [f64; 2],
    f: [f64; 4],
    negative_branch: bool,
) -> Result<Vielbein> {
    let scale = g_ring
        .iter()
        .chain(&h_ring)
        .chain(&g)
        .chain(&h)
        .fold(1.0_f64, |acc, x| acc.max(x.abs()));
    if (g_ring[1] - g[1]).abs() > 1e-10 * scale {
        return Err(Error::NoSolution(format!(
            "g̊₂ = {} incompatible with g₂′ = {}",
            g_ring[1], g[1]
        )));
    }
    if (h_ring[0] - h[0]).abs() > 1e-10 * scale {
        return Err(Error::NoSolution(format!(
            "h̊₃ = {} incompatible with h₃′ = {}",
            h_ring[0], h[0]
        )));
    }
    if h[0] == 0.0 {
        return Err(Error::DivisionByZero("h₃′ in e̊³′₁″".into()));
    }
    if g[1] == 0.0 {
        return Err(Error::DivisionByZero("g₂′ in e̊²′₄″".into()));
    }
    let branch = if negative_branch { -1.0 } else { 1.0 };
    // Block differences below rounding level would be √-amplified into
    // spurious vielbein components; treat them as exact zeros.
    let clamp = |diff: f64| if diff.abs() <= 1e-12 * scale { 0.0 } else { diff };
    let q31 = clamp(g_ring[0] - g[0]) / h[0];
    let q24 = clamp(h_ring[1] - h[1]) / g[1];
    let blocks = [g_ring[0], g_ring[1], h_ring[0], h_ring[1]];
    let mut diag = [0.0; 4];
    let mut diag_sign = [0.0; 4];
    for k in 0..4 {
        if blocks[k] == 0.0 {
            return Err(Error::DivisionByZero(format!(
                "vanishing source block {} in diagonal scaling",
                k + 1
            )));
        }
        diag[k] = branch * (f[k] / blocks[k]).abs().sqrt();
        diag_sign[k] = sign_of(f[k] / blocks[k]);
    }
    let v = Vielbein {
        e31: branch * q31.abs().sqrt(),
        sign31: sign_of(q31),
        e24: branch * q24.abs().sqrt(),
        sign24: sign_of(q24),
        diag,
        diag_sign,
        sign_product: [sign_of(q31), sign_of(q24)]
            .iter()
            .chain(&diag_sign)
            .filter(|s| **s != 0.0)
            .product::<f64>()
            * branch,
    };
    Ok(v)
}

/// Everything the four-step transform produced, with one residual per step:
/// frame alignment |N̊ − ᶜN|, discarded off-diagonal Hessian |f₃₄|, the
/// Θ-compatibility defect, and the step-4 reconstruction error.
#[derive(Clone, Debug)]
pub struct TransformState {
    pub source_g: [f64; 2],
    pub source_h: [f64; 2],
    pub source_w: [f64; 2],
    pub source_n: [f64; 2],
    pub hessian: [[f64; 2]; 2],
    /// Finsler data under the a = 2 + i index rule: (f₃₃, f₄₄, f₃₃, f₄₄).
    pub f: [f64; 4],
    pub cartan_w: [f64; 2],
    pub cartan_n: [f64; 2],
    pub theta: f64,
    pub theta_defect: f64,
    pub target_g: [f64; 2],
    pub target_h: [f64; 2],
    pub vielbein: Vielbein,
    pub step_residuals: [f64; 4],
}

/// Execute the nonholonomic transform of a d-metric into Finsler variables:
/// (1) evaluate both geometries at the point, (2) extract the Finsler data
/// f_α from the Hessian, (3) fix the compatibility angle Θ and rescale the
/// target blocks, (4) solve for the vielbein.  Failures carry the step that
/// produced them.
pub fn riemann_to_finsler(
    d: &DMetric,
    fin: &FinslerFunction,
    point: Point,
    params: &Params,
    negative_branch: bool,
) -> Result<TransformState> {
    // Step 1: pointwise data on both sides.
    let source_g = [d.g[0].eval(point, params)?, d.g[1].eval(point, params)?];
    let source_h = [d.h[0].eval(point, params)?, d.h[1].eval(point, params)?];
    let source_w = [
        d.nconn.w[0].eval(point, params)?,
        d.nconn.w[1].eval(point, params)?,
    ];
    let source_n = [
        d.nconn.n[0].eval(point, params)?,
        d.nconn.n[1].eval(point, params)?,
    ];
    let hes = hessian(fin, point, params)?;
    let cn = cartan_n(fin, point, params)?;
    let cartan_w = [cn[0][0], cn[0][1]];
    let cartan_n4 = [cn[1][0], cn[1][1]];
    let align = (0..2).fold(0.0_f64, |acc, i| {
        acc.max((source_w[i] - cartan_w[i]).abs())
            .max((source_n[i] - cartan_n4[i]).abs())
    });

    // Step 2: Finsler data under the index rule.
    let f = [hes[0][0], hes[1][1], hes[0][0], hes[1][1]];

    // Step 3: one compatibility angle for both directions.
    let (theta, theta_defect) =
        theta_compatibility(source_w, cartan_w, source_n, cartan_n4)?;
    if theta_defect > 1e-8 {
        return Err(Error::NoSolution(format!(
            "step 3: compatibility defect {theta_defect:.3e} between Θ₁ and Θ₂"
        )));
    }
    if f[2] == 0.0 {
        return Err(Error::DivisionByZero("f₃′ in target blocks".into()));
    }
    let mut target_g = [0.0; 2];
    for i in 0..2 {
        let rw = ratio(source_w[i], cartan_w[i], &format!("ᶜw_{}", i + 1))?;
        target_g[i] = rw * rw * f[i] / f[2];
    }
    let target_h = [f[3] * theta, f[3]];

    // Step 4: vielbein components and their reconstruction residual.
    let vielbein = vielbein_solve(source_g, source_h, target_g, target_h, f, negative_branch)
        .map_err(|e| match e {
            Error::NoSolution(m) => Error::NoSolution(format!("step 4: {m}")),
            other => other,
        })?;
    let (rg, rh) = vielbein.reconstruct(target_g, target_h);
    let recon = (0..2).fold(0.0_f64, |acc, i| {
        acc.max((rg[i] - source_g[i]).abs())
            .max((rh[i] - source_h[i]).abs())
    });

    Ok(TransformState {
        source_g,
        source_h,
        source_w,
        source_n,
        hessian: hes,
        f,
        cartan_w,
        cartan_n: cartan_n4,
        theta,
        theta_defect,
        target_g,
        target_h,
        vielbein,
        step_residuals: [align, hes[0][1].abs(), theta_defect, recon],
    })
}
