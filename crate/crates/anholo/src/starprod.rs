//! Star products truncated at second order in the deformation parameter,
//! taken along N-elongated frames, and the deformed vielbeins and metrics
//! they induce.
//!
//! The product of two scalars is the Moyal-type series
//!
//! ```text
//! f ⋆ g = f·g + (i/2) θ^{αβ} (e_α f)(e_β g)
//!             + (1/2!)(i/2)² θ^{α₁β₁}θ^{α₂β₂} (e_{α₁}e_{α₂}f)(e_{β₁}e_{β₂}g) + O(θ³)
//! ```
//!
//! with e_α the frame derivatives of an [`NConnection`] (plain partials in
//! the holonomic case).  θ is kept as a single scale times a fixed
//! antisymmetric direction matrix, and every quantity here is a polynomial
//! in that scale with the θ³ tail dropped.  Consequences of the truncation —
//! associativity holding only through second order, reality of the deformed
//! metric order by order — are exposed as explicit defect numbers rather
//! than assumed.

use num_complex::Complex64;

use crate::dgeometry::NConnection;
use crate::error::{Error, Result};
use crate::fields::{Params, Point, ScalarField};

/// Highest power of θ that [`star`] and friends retain.
pub const MAX_STAR_ORDER: usize = 2;

/// Constant antisymmetric deformation tensor θ^{αβ} = scale · dir^{αβ}.
#[derive(Clone, Debug)]
pub struct ThetaTensor {
    dir: [[f64; 4]; 4],
    scale: f64,
}

impl ThetaTensor {
    /// Deformation of the first coordinate plane: dir^{12} = −dir^{21} = 1,
    /// everything else zero.
    pub fn canonical(scale: f64) -> Self {
        let mut dir = [[0.0; 4]; 4];
        dir[0][1] = 1.0;
        dir[1][0] = -1.0;
        ThetaTensor { dir, scale }
    }

    /// The commutative limit θ = 0.
    pub fn zero() -> Self {
        ThetaTensor::canonical(0.0)
    }

    /// General direction matrix with unit scale.  The matrix must be exactly
    /// antisymmetric.
    pub fn new(dir: [[f64; 4]; 4]) -> Result<Self> {
        for a in 0..4 {
            for b in 0..4 {
                if dir[a][b] != -dir[b][a] {
                    return Err(Error::Inadmissible(format!(
                        "deformation direction not antisymmetric at ({a}, {b})"
                    )));
                }
            }
        }
        Ok(ThetaTensor { dir, scale: 1.0 })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Full component θ^{αβ} including the scale.
    pub fn component(&self, a: usize, b: usize) -> f64 {
        self.scale * self.dir[a][b]
    }

    /// Nonzero components as (α, β, θ^{αβ}) triples; empty in the
    /// commutative limit.
    fn pairs(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        if self.scale == 0.0 {
            return out;
        }
        for a in 0..4 {
            for b in 0..4 {
                if self.dir[a][b] != 0.0 {
                    out.push((a, b, self.scale * self.dir[a][b]));
                }
            }
        }
        out
    }
}

/// A complex number expanded through second order in the deformation scale:
/// c\[0\] + c\[1\] + c\[2\], where c\[k\] carries the full θᵏ term (scale
/// included).  Arithmetic drops everything of combined order ≥ 3.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ThetaSeries {
    pub c: [Complex64; 3],
}

impl ThetaSeries {
    pub fn zero() -> Self {
        ThetaSeries::default()
    }

    pub fn from_real(x: f64) -> Self {
        let mut s = ThetaSeries::default();
        s.c[0] = Complex64::new(x, 0.0);
        s
    }

    /// Sum of the retained orders — the truncated value of the series.
    pub fn value(&self) -> Complex64 {
        self.c[0] + self.c[1] + self.c[2]
    }

    /// Order-by-order complex conjugate.
    pub fn conj(&self) -> Self {
        ThetaSeries {
            c: [self.c[0].conj(), self.c[1].conj(), self.c[2].conj()],
        }
    }

    /// Largest coefficient magnitude across the retained orders.
    pub fn max_abs(&self) -> f64 {
        self.c.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Drop every order above `order`.
    pub fn truncate(mut self, order: usize) -> Self {
        for k in order + 1..3 {
            self.c[k] = Complex64::default();
        }
        self
    }
}

impl std::ops::Add for ThetaSeries {
    type Output = ThetaSeries;
    fn add(self, rhs: ThetaSeries) -> ThetaSeries {
        ThetaSeries {
            c: [
                self.c[0] + rhs.c[0],
                self.c[1] + rhs.c[1],
                self.c[2] + rhs.c[2],
            ],
        }
    }
}

impl std::ops::Sub for ThetaSeries {
    type Output = ThetaSeries;
    fn sub(self, rhs: ThetaSeries) -> ThetaSeries {
        ThetaSeries {
            c: [
                self.c[0] - rhs.c[0],
                self.c[1] - rhs.c[1],
                self.c[2] - rhs.c[2],
            ],
        }
    }
}

impl std::ops::Mul<f64> for ThetaSeries {
    type Output = ThetaSeries;
    fn mul(self, rhs: f64) -> ThetaSeries {
        ThetaSeries {
            c: [self.c[0] * rhs, self.c[1] * rhs, self.c[2] * rhs],
        }
    }
}

impl std::ops::Mul for ThetaSeries {
    type Output = ThetaSeries;
    fn mul(self, rhs: ThetaSeries) -> ThetaSeries {
        ThetaSeries {
            c: [
                self.c[0] * rhs.c[0],
                self.c[0] * rhs.c[1] + self.c[1] * rhs.c[0],
                self.c[0] * rhs.c[2] + self.c[1] * rhs.c[1] + self.c[2] * rhs.c[0],
            ],
        }
    }
}

// ---------------------------------------------------------------------------
// Series-valued fields.  Each order is a complex field stored as a pair of
// real fields; `None` marks a structural zero so that the commutative limit
// never builds derivative trees it does not need.

fn is_zero(f: &ScalarField) -> bool {
    f.as_const() == Some(0.0)
}

fn nonzero(f: &ScalarField) -> Option<ScalarField> {
    if is_zero(f) {
        None
    } else {
        Some(f.clone())
    }
}

fn add_opt(a: Option<ScalarField>, b: Option<ScalarField>) -> Option<ScalarField> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a + b),
        (Some(a), None) => Some(a),
        (None, Some(b)) => Some(b),
        (None, None) => None,
    }
}

fn sub_opt(a: Option<ScalarField>, b: Option<ScalarField>) -> Option<ScalarField> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a - b),
        (Some(a), None) => Some(a),
        (None, Some(b)) => Some(-b),
        (None, None) => None,
    }
}

#[derive(Clone)]
struct SeriesField {
    re: [Option<ScalarField>; 3],
    im: [Option<ScalarField>; 3],
}

impl SeriesField {
    fn from_real(f: &ScalarField) -> Self {
        SeriesField {
            re: [nonzero(f), None, None],
            im: [None, None, None],
        }
    }

    fn conj(&self) -> Self {
        SeriesField {
            re: self.re.clone(),
            im: [
                self.im[0].clone().map(|f| -f),
                self.im[1].clone().map(|f| -f),
                self.im[2].clone().map(|f| -f),
            ],
        }
    }

    fn eval(&self, point: Point, params: &Params, order: usize) -> Result<ThetaSeries> {
        let mut out = ThetaSeries::zero();
        for k in 0..=order.min(MAX_STAR_ORDER) {
            let re = match &self.re[k] {
                Some(f) => f.eval(point, params)?,
                None => 0.0,
            };
            let im = match &self.im[k] {
                Some(f) => f.eval(point, params)?,
                None => 0.0,
            };
            out.c[k] = Complex64::new(re, im);
        }
        Ok(out)
    }
}

/// The order-m bidifferential without its iᵐ factor:
/// (1/m!)(1/2)ᵐ θ^{α₁β₁}⋯(e_{α₁}⋯f)(e_{β₁}⋯g), built symbolically.
fn bidiff(
    theta: &ThetaTensor,
    nconn: &NConnection,
    f: &Option<ScalarField>,
    g: &Option<ScalarField>,
    m: usize,
) -> Option<ScalarField> {
    let (f, g) = match (f, g) {
        (Some(f), Some(g)) => (f, g),
        _ => return None,
    };
    match m {
        0 => Some(f * g),
        1 => {
            let mut sum: Option<ScalarField> = None;
            for (a, b, w) in theta.pairs() {
                let term = (0.5 * w) * nconn.elongated(f, a) * nconn.elongated(g, b);
                sum = add_opt(sum, Some(term));
            }
            sum
        }
        2 => {
            // (1/2!)(1/2)² = 1/8 per double pair; the first index of each θ
            // factor differentiates f, the second differentiates g, and both
            // factors nest their derivatives in the same pair order (the
            // double sum is invariant under relabelling the two pairs).
            let pairs = theta.pairs();
            let mut sum: Option<ScalarField> = None;
            for &(a1, b1, w1) in &pairs {
                let fa = nconn.elongated(f, a1);
                let gb = nconn.elongated(g, b1);
                for &(a2, b2, w2) in &pairs {
                    let term = (0.125 * w1 * w2)
                        * nconn.elongated(&fa, a2)
                        * nconn.elongated(&gb, b2);
                    sum = add_opt(sum, Some(term));
                }
            }
            sum
        }
        _ => unreachable!("bidifferential order capped at {MAX_STAR_ORDER}"),
    }
}

/// Star product of two series-valued fields, truncated at order 2:
/// result_k = Σ_{m+p+q=k} iᵐ · B_m(a_p, b_q) with B_m real-bilinear.
fn star_series(
    a: &SeriesField,
    b: &SeriesField,
    theta: &ThetaTensor,
    nconn: &NConnection,
) -> SeriesField {
    let mut re: [Option<ScalarField>; 3] = [None, None, None];
    let mut im: [Option<ScalarField>; 3] = [None, None, None];
    for m in 0..=MAX_STAR_ORDER {
        for p in 0..=MAX_STAR_ORDER {
            for q in 0..=MAX_STAR_ORDER {
                let k = m + p + q;
                if k > MAX_STAR_ORDER {
                    continue;
                }
                // B_m on the complex pair (a_p, b_q), then a rotation by iᵐ.
                let rr = bidiff(theta, nconn, &a.re[p], &b.re[q], m);
                let ii = bidiff(theta, nconn, &a.im[p], &b.im[q], m);
                let ri = bidiff(theta, nconn, &a.re[p], &b.im[q], m);
                let ir = bidiff(theta, nconn, &a.im[p], &b.re[q], m);
                let x = sub_opt(rr, ii);
                let y = add_opt(ri, ir);
                match m {
                    0 => {
                        re[k] = add_opt(re[k].take(), x);
                        im[k] = add_opt(im[k].take(), y);
                    }
                    1 => {
                        re[k] = sub_opt(re[k].take(), y);
                        im[k] = add_opt(im[k].take(), x);
                    }
                    2 => {
                        re[k] = sub_opt(re[k].take(), x);
                        im[k] = sub_opt(im[k].take(), y);
                    }
                    _ => unreachable!(),
                }
            }
        }
    }
    SeriesField { re, im }
}

/// f ⋆ g at a point, expanded through `order` ≤ 2 in θ.
///
/// Order 0 is exactly the pointwise product; in the commutative limit the
/// higher coefficients are structural zeros, so θ = 0 reproduces f·g bit for
/// bit at every requested order.
pub fn star(
    f: &ScalarField,
    g: &ScalarField,
    theta: &ThetaTensor,
    nconn: &NConnection,
    point: Point,
    params: &Params,
    order: usize,
) -> Result<ThetaSeries> {
    if order > MAX_STAR_ORDER {
        return Err(Error::UnsupportedOrder {
            requested: order,
            max: MAX_STAR_ORDER,
        });
    }
    let s = star_series(
        &SeriesField::from_real(f),
        &SeriesField::from_real(g),
        theta,
        nconn,
    );
    s.eval(point, params, order)
}

/// Largest coefficient of (f ⋆ g) ⋆ h − f ⋆ (g ⋆ h) through second order.
///
/// For a constant θ and commuting derivatives (trivial N) the truncated
/// product is associative order by order, so this is pure rounding noise;
/// anholonomic frames make it a genuine θ²-sized obstruction.
pub fn associativity_defect(
    f: &ScalarField,
    g: &ScalarField,
    h: &ScalarField,
    theta: &ThetaTensor,
    nconn: &NConnection,
    point: Point,
    params: &Params,
) -> Result<f64> {
    let fs = SeriesField::from_real(f);
    let gs = SeriesField::from_real(g);
    let hs = SeriesField::from_real(h);
    let left = star_series(&star_series(&fs, &gs, theta, nconn), &hs, theta, nconn);
    let right = star_series(&fs, &star_series(&gs, &hs, theta, nconn), theta, nconn);
    let l = left.eval(point, params, MAX_STAR_ORDER)?;
    let r = right.eval(point, params, MAX_STAR_ORDER)?;
    Ok((l - r).max_abs())
}

/// A vielbein expanded in the deformation scale,
/// e(θ) = base + iθ·first + θ²·second per component.  Rows are labelled by
/// the coordinate index α, columns by the flat index α̲.
#[derive(Clone, Debug)]
pub struct FrameExpansion {
    pub base: [[ScalarField; 4]; 4],
    pub first: [[ScalarField; 4]; 4],
    pub second: [[ScalarField; 4]; 4],
}

fn zero_matrix() -> [[ScalarField; 4]; 4] {
    std::array::from_fn(|_| std::array::from_fn(|_| ScalarField::constant(0.0)))
}

impl FrameExpansion {
    /// An undeformed frame: corrections vanish identically.
    pub fn classical(base: [[ScalarField; 4]; 4]) -> Self {
        FrameExpansion {
            base,
            first: zero_matrix(),
            second: zero_matrix(),
        }
    }

    /// The identity vielbein.
    pub fn identity() -> Self {
        let mut base = zero_matrix();
        for a in 0..4 {
            base[a][a] = ScalarField::constant(1.0);
        }
        FrameExpansion::classical(base)
    }

    fn component(&self, a: usize, b: usize, scale: f64) -> SeriesField {
        let first = if scale == 0.0 {
            None
        } else {
            nonzero(&self.first[a][b]).map(|f| scale * f)
        };
        let second = if scale == 0.0 {
            None
        } else {
            nonzero(&self.second[a][b]).map(|f| (scale * scale) * f)
        };
        SeriesField {
            re: [nonzero(&self.base[a][b]), None, second],
            im: [None, first, None],
        }
    }
}

/// Evaluate the deformed frame at a point: each component becomes the series
/// base + iθ·first + θ²·second with the given scale.
pub fn deform_frame(
    frame: &FrameExpansion,
    theta_scale: f64,
    point: Point,
    params: &Params,
) -> Result<[[ThetaSeries; 4]; 4]> {
    let mut out = [[ThetaSeries::zero(); 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            out[a][b] = frame
                .component(a, b, theta_scale)
                .eval(point, params, MAX_STAR_ORDER)?;
        }
    }
    Ok(out)
}

/// Largest violation of the star-duality relations
/// Σ_{α̲} dual^α_{α̲} ⋆ e_β^{α̲} = δ^α_β through second order.
pub fn frame_duality(
    frame: &FrameExpansion,
    dual: &FrameExpansion,
    theta: &ThetaTensor,
    nconn: &NConnection,
    point: Point,
    params: &Params,
) -> Result<f64> {
    let scale = theta.scale();
    let mut worst = 0.0_f64;
    for a in 0..4 {
        for b in 0..4 {
            let mut s = ThetaSeries::zero();
            for c in 0..4 {
                let prod = star_series(
                    &dual.component(a, c, scale),
                    &frame.component(b, c, scale),
                    theta,
                    nconn,
                );
                s = s + prod.eval(point, params, MAX_STAR_ORDER)?;
            }
            if a == b {
                s.c[0] -= Complex64::new(1.0, 0.0);
            }
            worst = worst.max(s.max_abs());
        }
    }
    Ok(worst)
}

/// Deformed metric from a star product of vielbeins:
///
/// ```text
/// g_{αβ} = ½ η_{α̲β̲} [ e_α^{α̲} ⋆ (e_β^{β̲})† + e_β^{β̲} ⋆ (e_α^{α̲})† ]
/// ```
///
/// with † acting as complex conjugation on the series coefficients.  The
/// symmetrization is carried out explicitly, so g_{αβ} = g_{βα} holds by
/// construction at every order; for real base frames with imaginary
/// first-order corrections the result is real through θ².
pub fn metric_from_frames(
    frame: &FrameExpansion,
    eta: [[f64; 4]; 4],
    theta: &ThetaTensor,
    nconn: &NConnection,
    point: Point,
    params: &Params,
) -> Result<[[ThetaSeries; 4]; 4]> {
    let scale = theta.scale();
    let mut out = [[ThetaSeries::zero(); 4]; 4];
    for al in 0..4 {
        for be in 0..=al {
            let mut s = ThetaSeries::zero();
            for fa in 0..4 {
                for fb in 0..4 {
                    if eta[fa][fb] == 0.0 {
                        continue;
                    }
                    let lhs = star_series(
                        &frame.component(al, fa, scale),
                        &frame.component(be, fb, scale).conj(),
                        theta,
                        nconn,
                    );
                    let rhs = star_series(
                        &frame.component(be, fb, scale),
                        &frame.component(al, fa, scale).conj(),
                        theta,
                        nconn,
                    );
                    let term = lhs.eval(point, params, MAX_STAR_ORDER)?
                        + rhs.eval(point, params, MAX_STAR_ORDER)?;
                    s = s + term * (0.5 * eta[fa][fb]);
                }
            }
            out[al][be] = s;
            out[be][al] = s;
        }
    }
    Ok(out)
}
