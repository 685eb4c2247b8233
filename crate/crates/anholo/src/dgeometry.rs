//! Distinguished (2+2) metrics, N-adapted frames, and Levi-Civita curvature.
//!
//! The base chart splits as (x¹, x²) horizontal / (v, y⁴) vertical.  An
//! N-connection with coefficients N¹ᵢ = wᵢ, N²ᵢ = nᵢ defines the adapted
//! frames
//!
//! ```text
//!   eᵢ = ∂ᵢ − wᵢ ∂ᵥ − nᵢ ∂₄,      eₐ = ∂ₐ,
//!   eⁱ = dxⁱ,                      e³ = dv + wᵢ dxⁱ,   e⁴ = dy⁴ + nᵢ dxⁱ,
//! ```
//!
//! and a d-metric g = gᵢ (dxⁱ)² + h₃ (e³)² + h₄ (e⁴)² — diagonal in the
//! adapted coframe, generically off-diagonal in the coordinate basis.  This
//! module assembles the coordinate form, measures the frame anholonomy, and
//! computes the Levi-Civita connection and Einstein tensor of any coordinate
//! metric directly from its second-order jets.  The curvature path shares
//! nothing with the reduced-equation residuals in [`crate::solution`], which
//! is what makes the cross-check between the two meaningful.

use crate::error::{Error, Result};
use crate::fields::{Backend, MultiIndex, Params, Point, ScalarField};

/// N-connection coefficients: `w = (w₁, w₂)` elongate along ∂ᵥ and
/// `n = (n₁, n₂)` along ∂₄.
#[derive(Clone, Debug)]
pub struct NConnection {
    pub w: [ScalarField; 2],
    pub n: [ScalarField; 2],
}

impl NConnection {
    /// The holonomic case: all coefficients zero, frames reduce to ∂.
    pub fn trivial() -> Self {
        NConnection {
            w: [ScalarField::constant(0.0), ScalarField::constant(0.0)],
            n: [ScalarField::constant(0.0), ScalarField::constant(0.0)],
        }
    }

    /// The N-elongated derivative e_α(f) as a field.  For horizontal α this
    /// is ∂_α f − w_α f* − n_α ∂₄f; vertical directions are plain partials.
    pub fn elongated(&self, f: &ScalarField, alpha: usize) -> ScalarField {
        assert!(alpha < 4, "frame index out of range");
        if alpha < 2 {
            f.deriv(MultiIndex::axis(alpha))
                - &self.w[alpha] * f.deriv(MultiIndex::axis(2))
                - &self.n[alpha] * f.deriv(MultiIndex::axis(3))
        } else {
            f.deriv(MultiIndex::axis(alpha))
        }
    }
}

/// e_α f at a point.  Numeric counterpart of [`NConnection::elongated`].
pub fn n_elongated(
    f: &ScalarField,
    nconn: &NConnection,
    point: Point,
    alpha: usize,
    params: &Params,
) -> Result<f64> {
    assert!(alpha < 4, "frame index out of range");
    if alpha < 2 {
        let d = f.partial(point, MultiIndex::axis(alpha), params)?;
        let fv = f.partial(point, MultiIndex::axis(2), params)?;
        let f4 = f.partial(point, MultiIndex::axis(3), params)?;
        let w = nconn.w[alpha].eval(point, params)?;
        let n = nconn.n[alpha].eval(point, params)?;
        Ok(d - w * fv - n * f4)
    } else {
        f.partial(point, MultiIndex::axis(alpha), params)
    }
}

/// Anholonomy data of the N-adapted frame at a point.
#[derive(Clone, Copy, Debug)]
pub struct Anholonomy {
    /// `vertical[i][b][a]` = ∂Nᵢᵇ/∂yᵃ, the e_{b+2}-component of the bracket
    /// [e_{a+2}, eᵢ]; here i ∈ {0,1} ↔ (x¹, x²) and a, b ∈ {0,1} ↔ (v, y⁴).
    pub vertical: [[[f64; 2]; 2]; 2],
    /// `curvature[b]` = Ωᵇ₁₂ = e₂(N₁ᵇ) − e₁(N₂ᵇ) — the obstruction to the
    /// horizontal distribution being integrable.
    pub curvature: [f64; 2],
}

/// A d-metric: two horizontal coefficients g = (g₁, g₂), two vertical
/// coefficients h = (h₃, h₄), and the N-connection tying them together.
#[derive(Clone, Debug)]
pub struct DMetric {
    pub g: [ScalarField; 2],
    pub h: [ScalarField; 2],
    pub nconn: NConnection,
}

impl DMetric {
    pub fn new(g: [ScalarField; 2], h: [ScalarField; 2], nconn: NConnection) -> Self {
        DMetric { g, h, nconn }
    }

    /// Frame anholonomy coefficients at a point.
    pub fn anholonomy(&self, point: Point, params: &Params) -> Result<Anholonomy> {
        self.nconn.anholonomy(point, params)
    }

    /// Coordinate components of the metric at a point, with the block
    /// determinant g₁g₂h₃h₄ checked for degeneracy.
    pub fn assemble(&self, point: Point, params: &Params) -> Result<[[f64; 4]; 4]> {
        let g1 = self.g[0].eval(point, params)?;
        let g2 = self.g[1].eval(point, params)?;
        let h3 = self.h[0].eval(point, params)?;
        let h4 = self.h[1].eval(point, params)?;
        let w = [
            self.nconn.w[0].eval(point, params)?,
            self.nconn.w[1].eval(point, params)?,
        ];
        let n = [
            self.nconn.n[0].eval(point, params)?,
            self.nconn.n[1].eval(point, params)?,
        ];
        let scale = g1.abs().max(g2.abs()).max(h3.abs()).max(h4.abs());
        for c in [g1, g2, h3, h4] {
            if c.abs() < 1e-14 * scale.max(1.0) {
                return Err(Error::DegenerateMetric { pivot: c });
            }
        }
        let mut m = [[0.0; 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = h3 * w[i] * w[j] + h4 * n[i] * n[j];
            }
            m[i][i] += [g1, g2][i];
            m[i][2] = h3 * w[i];
            m[2][i] = m[i][2];
            m[i][3] = h4 * n[i];
            m[3][i] = m[i][3];
        }
        m[2][2] = h3;
        m[3][3] = h4;
        Ok(m)
    }

    /// The same assembly kept symbolic, for curvature work.
    pub fn coordinate_metric(&self) -> CoordinateMetric {
        let zero = ScalarField::constant(0.0);
        let mut e: [[ScalarField; 4]; 4] = std::array::from_fn(|_| {
            std::array::from_fn(|_| zero.clone())
        });
        let w = &self.nconn.w;
        let n = &self.nconn.n;
        for i in 0..2 {
            for j in i..2 {
                let mut s = &self.h[0] * &w[i] * &w[j] + &self.h[1] * &n[i] * &n[j];
                if i == j {
                    s = s + &self.g[i];
                }
                e[i][j] = s;
            }
            e[i][2] = &self.h[0] * &w[i];
            e[i][3] = &self.h[1] * &n[i];
        }
        e[2][2] = self.h[0].clone();
        e[3][3] = self.h[1].clone();
        CoordinateMetric::from_fields(e)
    }
}

impl NConnection {
    /// See [`DMetric::anholonomy`].
    pub fn anholonomy(&self, point: Point, params: &Params) -> Result<Anholonomy> {
        // Order-1 jets of all four coefficients: values plus all gradients.
        let mut val = [[0.0; 2]; 2]; // [i][b]
        let mut der = [[[0.0; 4]; 2]; 2]; // [i][b][coordinate]
        for i in 0..2 {
            for b in 0..2 {
                let f = if b == 0 { &self.w[i] } else { &self.n[i] };
                let j = f.jet(point, params, 0b1111, 1)?;
                val[i][b] = j.value();
                for (k, d) in der[i][b].iter_mut().enumerate() {
                    let mut m = [0u8; 4];
                    m[k] = 1;
                    *d = j.partial(&m).expect("order-1 axis in space");
                }
            }
        }
        let mut vertical = [[[0.0; 2]; 2]; 2];
        for i in 0..2 {
            for b in 0..2 {
                for a in 0..2 {
                    vertical[i][b][a] = der[i][b][2 + a];
                }
            }
        }
        let mut curvature = [0.0; 2];
        for b in 0..2 {
            let e2_n1 = der[0][b][1] - val[1][0] * der[0][b][2] - val[1][1] * der[0][b][3];
            let e1_n2 = der[1][b][0] - val[0][0] * der[1][b][2] - val[0][1] * der[1][b][3];
            curvature[b] = e2_n1 - e1_n2;
        }
        Ok(Anholonomy { vertical, curvature })
    }
}

/// Pairing ⟨eᵅ, e_β⟩ − δᵅ_β, maximised over α, β.  The elongations cancel
/// algebraically, so anything other than exactly zero indicates a broken
/// frame assembly.
pub fn dual_frame_check(nconn: &NConnection, point: Point, params: &Params) -> Result<f64> {
    let w = [
        nconn.w[0].eval(point, params)?,
        nconn.w[1].eval(point, params)?,
    ];
    let n = [
        nconn.n[0].eval(point, params)?,
        nconn.n[1].eval(point, params)?,
    ];
    // Rows: ∂-components of the frame vectors / coframe covectors.
    let frame = [
        [1.0, 0.0, -w[0], -n[0]],
        [0.0, 1.0, -w[1], -n[1]],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ];
    let coframe = [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [w[0], w[1], 1.0, 0.0],
        [n[0], n[1], 0.0, 1.0],
    ];
    let mut worst = 0.0f64;
    for (a, cf) in coframe.iter().enumerate() {
        for (b, fr) in frame.iter().enumerate() {
            let pair: f64 = (0..4).map(|k| cf[k] * fr[k]).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((pair - target).abs());
        }
    }
    Ok(worst)
}

/// A symmetric coordinate metric with symbolic entries.  Only the upper
/// triangle is stored; `entry(a, b)` and `eval` mirror it.
#[derive(Clone)]
pub struct CoordinateMetric {
    entries: [[ScalarField; 4]; 4],
}

impl CoordinateMetric {
    /// Build from explicit components; the lower triangle of the argument
    /// is ignored in favour of the upper one.
    pub fn from_fields(entries: [[ScalarField; 4]; 4]) -> Self {
        CoordinateMetric { entries }
    }

    pub fn entry(&self, a: usize, b: usize) -> &ScalarField {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        &self.entries[a][b]
    }

    pub fn eval(&self, point: Point, params: &Params) -> Result<[[f64; 4]; 4]> {
        let mut m = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in a..4 {
                let v = self.entries[a][b].eval(point, params)?;
                m[a][b] = v;
                m[b][a] = v;
            }
        }
        Ok(m)
    }
}

/// Value, gradient and Hessian of one metric entry.
struct Jet2 {
    val: f64,
    d1: [f64; 4],
    d2: [[f64; 4]; 4],
}

fn entry_jet2(f: &ScalarField, point: Point, params: &Params, backend: Backend) -> Result<Jet2> {
    let mut out = Jet2 { val: 0.0, d1: [0.0; 4], d2: [[0.0; 4]; 4] };
    match backend {
        Backend::Dual => {
            let j = f.jet(point, params, 0b1111, 2)?;
            out.val = j.value();
            for k in 0..4 {
                let mut m = [0u8; 4];
                m[k] = 1;
                out.d1[k] = j.partial(&m).expect("axis in order-2 space");
                for l in k..4 {
                    let mut mm = m;
                    mm[l] += 1;
                    let d = j.partial(&mm).expect("pair in order-2 space");
                    out.d2[k][l] = d;
                    out.d2[l][k] = d;
                }
            }
        }
        Backend::Fd(_) => {
            out.val = f.eval(point, params)?;
            for k in 0..4 {
                let mut m = [0u8; 4];
                m[k] = 1;
                out.d1[k] = f.partial_with(point, MultiIndex::new(m), params, backend)?;
                for l in k..4 {
                    let mut mm = m;
                    mm[l] += 1;
                    let d = f.partial_with(point, MultiIndex::new(mm), params, backend)?;
                    out.d2[k][l] = d;
                    out.d2[l][k] = d;
                }
            }
        }
    }
    Ok(out)
}

/// Gauss–Jordan inverse with partial pivoting; reports the failing pivot.
pub(crate) fn invert4(g: &[[f64; 4]; 4]) -> Result<[[f64; 4]; 4]> {
    let scale = g
        .iter()
        .flatten()
        .fold(0.0f64, |m, &x| m.max(x.abs()))
        .max(1e-300);
    let mut a = *g;
    let mut inv = [[0.0; 4]; 4];
    for (k, row) in inv.iter_mut().enumerate() {
        row[k] = 1.0;
    }
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-13 * scale {
            return Err(Error::DegenerateMetric { pivot: a[piv][col] });
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for k in 0..4 {
            a[col][k] /= d;
            inv[col][k] /= d;
        }
        for r in 0..4 {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for k in 0..4 {
                        a[r][k] -= f * a[col][k];
                        inv[r][k] -= f * inv[col][k];
                    }
                }
            }
        }
    }
    Ok(inv)
}

/// Christoffel symbols Γᵃ_{bc} of the Levi-Civita connection, indexed
/// `[a][b][c]`.
pub fn lc_connection(
    metric: &CoordinateMetric,
    point: Point,
    params: &Params,
    backend: Backend,
) -> Result<[[[f64; 4]; 4]; 4]> {
    let mut gv = [[0.0; 4]; 4];
    let mut dg = [[[0.0; 4]; 4]; 4]; // dg[c][a][b] = ∂_c g_ab
    for a in 0..4 {
        for b in a..4 {
            let j = entry_jet2(metric.entry(a, b), point, params, backend)?;
            gv[a][b] = j.val;
            gv[b][a] = j.val;
            for c in 0..4 {
                dg[c][a][b] = j.d1[c];
                dg[c][b][a] = j.d1[c];
            }
        }
    }
    let ginv = invert4(&gv)?;
    Ok(christoffel(&ginv, &dg))
}

fn christoffel(ginv: &[[f64; 4]; 4], dg: &[[[f64; 4]; 4]; 4]) -> [[[f64; 4]; 4]; 4] {
    let mut gamma = [[[0.0; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            for c in b..4 {
                let mut s = 0.0;
                for d in 0..4 {
                    s += ginv[a][d] * (dg[b][d][c] + dg[c][d][b] - dg[d][b][c]);
                }
                gamma[a][b][c] = 0.5 * s;
                gamma[a][c][b] = gamma[a][b][c];
            }
        }
    }
    gamma
}

/// Einstein tensor E_{ab} = R_{ab} − ½ g_{ab} R of a coordinate metric,
/// from second-order jets of its entries.
///
/// Curvature conventions: R_{bc} = ∂ₐΓᵃ_{bc} − ∂_cΓᵃ_{ba}
/// + Γᵃ_{al}Γˡ_{bc} − Γᵃ_{cl}Γˡ_{ba}, so a flat-slicing exponential
/// expansion with Hubble rate H satisfies E = −3H²·g.
pub fn lc_einstein(
    metric: &CoordinateMetric,
    point: Point,
    params: &Params,
    backend: Backend,
) -> Result<[[f64; 4]; 4]> {
    let mut gv = [[0.0; 4]; 4];
    let mut dg = [[[0.0; 4]; 4]; 4]; // ∂_c g_ab
    let mut ddg = [[[[0.0; 4]; 4]; 4]; 4]; // ∂_c ∂_d g_ab
    for a in 0..4 {
        for b in a..4 {
            let j = entry_jet2(metric.entry(a, b), point, params, backend)?;
            gv[a][b] = j.val;
            gv[b][a] = j.val;
            for c in 0..4 {
                dg[c][a][b] = j.d1[c];
                dg[c][b][a] = j.d1[c];
                for d in 0..4 {
                    ddg[c][d][a][b] = j.d2[c][d];
                    ddg[c][d][b][a] = j.d2[c][d];
                }
            }
        }
    }
    let ginv = invert4(&gv)?;
    let gamma = christoffel(&ginv, &dg);

    // ∂_e g^{ad} = −g^{am} (∂_e g_{mn}) g^{nd}
    let mut dginv = [[[0.0; 4]; 4]; 4];
    for e in 0..4 {
        for a in 0..4 {
            for d in 0..4 {
                let mut s = 0.0;
                for m in 0..4 {
                    for n in 0..4 {
                        s -= ginv[a][m] * dg[e][m][n] * ginv[n][d];
                    }
                }
                dginv[e][a][d] = s;
            }
        }
    }

    // ∂_e Γᵃ_{bc}
    let mut dgamma = [[[[0.0; 4]; 4]; 4]; 4];
    for e in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                for c in b..4 {
                    let mut s = 0.0;
                    for d in 0..4 {
                        s += dginv[e][a][d] * (dg[b][d][c] + dg[c][d][b] - dg[d][b][c])
                            + ginv[a][d]
                                * (ddg[e][b][d][c] + ddg[e][c][d][b] - ddg[e][d][b][c]);
                    }
                    dgamma[e][a][b][c] = 0.5 * s;
                    dgamma[e][a][c][b] = dgamma[e][a][b][c];
                }
            }
        }
    }

    let mut ricci = [[0.0; 4]; 4];
    for b in 0..4 {
        for c in b..4 {
            let mut r = 0.0;
            for a in 0..4 {
                r += dgamma[a][a][b][c] - dgamma[c][a][b][a];
                for l in 0..4 {
                    r += gamma[a][a][l] * gamma[l][b][c] - gamma[a][c][l] * gamma[l][b][a];
                }
            }
            ricci[b][c] = r;
            ricci[c][b] = r;
        }
    }
    let mut rscal = 0.0;
    for b in 0..4 {
        for c in 0..4 {
            rscal += ginv[b][c] * ricci[b][c];
        }
    }
    let mut e = [[0.0; 4]; 4];
    for b in 0..4 {
        for c in 0..4 {
            e[b][c] = ricci[b][c] - 0.5 * gv[b][c] * rscal;
        }
    }
    Ok(e)
}
