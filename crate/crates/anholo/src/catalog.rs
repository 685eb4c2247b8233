//! Named solution families: the Schwarzschild prime metric and its
//! ξ-coordinate form, noncommutative-parameter corrections (polynomial and
//! incomplete-gamma smeared), rotoid deformations with their horizon curve,
//! and solitonic distributions.
//!
//! Conventions shared by every family: coordinates (x¹, x², v, y⁴) play the
//! roles (radial, polar angle ϑ, azimuthal φ, time t); the radial chart is
//! used directly, with the ξ-reparametrization available through [`XiMap`].

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::dgeometry::{DMetric, NConnection};
use crate::error::{Error, Result};
use crate::fields::quad::{integrate, QuadTol};
use crate::fields::{Backend, Chart, FdOptions, Params, Point, ScalarField};
use crate::solution::partials;

/// Point mass plus the constants fixing the horizon radius α = 2Gμ₀/c².
#[derive(Clone, Copy, Debug)]
pub struct SchwarzschildParams {
    pub mu0: f64,
    pub grav: f64,
    pub light: f64,
}

impl SchwarzschildParams {
    /// Geometric units G = c = 1.
    pub fn new(mu0: f64) -> Self {
        SchwarzschildParams { mu0, grav: 1.0, light: 1.0 }
    }

    pub fn alpha(&self) -> f64 {
        2.0 * self.grav * self.mu0 / (self.light * self.light)
    }
}

fn exterior_chart(r_min: f64) -> Chart {
    Chart::new(
        [r_min, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
        [f64::INFINITY; 4],
    )
}

/// The prime (undeformed) metric on the exterior chart r > α:
/// g₁ = −(1−α/r)⁻¹, g₂ = −r², h₃ = −r² sin²ϑ, h₄ = 1−α/r, N = 0.
pub fn schwarzschild_prime(p: &SchwarzschildParams) -> Result<DMetric> {
    let alpha = p.alpha();
    if alpha <= 0.0 {
        return Err(Error::Inadmissible(format!("horizon radius must be positive, got {alpha}")));
    }
    let chart = exterior_chart(alpha);
    let r = ScalarField::x1();
    let lapse = 1.0 - alpha / &r;
    let g1 = (-lapse.powi(-1)).with_chart(chart);
    let g2 = -(r.powi(2));
    let h3 = -(r.powi(2)) * ScalarField::x2().sin().powi(2);
    let h4 = lapse.with_chart(chart);
    Ok(DMetric::new([g1, g2], [h3, h4], NConnection::trivial()))
}

struct XiMapInner {
    mu0: f64,
    theta: f64,
    r_range: [f64; 2],
    // ξ(r) values already integrated, keyed by r bits, so grid sweeps do
    // not repeat quadrature.
    cache: Mutex<HashMap<u64, f64>>,
}

impl XiMapInner {
    fn weight(&self, r: f64) -> f64 {
        (1.0 - 2.0 * self.mu0 / r + self.theta / (r * r)).abs().powf(-0.5)
    }
}

/// Invertible tabulation between the radial chart and the distance-like
/// coordinate ξ(r) = ∫_{r_lo}^{r} |1 − 2μ₀/s + θ/s²|^{−1/2} ds.
#[derive(Clone)]
pub struct XiMap {
    inner: Arc<XiMapInner>,
}

impl std::fmt::Debug for XiMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("XiMap")
            .field("mu0", &self.inner.mu0)
            .field("theta", &self.inner.theta)
            .field("r_range", &self.inner.r_range)
            .finish()
    }
}

impl XiMap {
    pub fn r_range(&self) -> [f64; 2] {
        self.inner.r_range
    }

    /// ξ at the upper edge of the chart (ξ = 0 at the lower edge).
    pub fn xi_max(&self) -> Result<f64> {
        self.xi_of_r(self.inner.r_range[1])
    }

    pub fn dxi_dr(&self, r: f64) -> f64 {
        self.inner.weight(r)
    }

    pub fn xi_of_r(&self, r: f64) -> Result<f64> {
        let [lo, hi] = self.inner.r_range;
        if !(lo..=hi).contains(&r) {
            return Err(Error::Domain { coord: "x1", value: r, lo, hi });
        }
        if let Some(&xi) = self.inner.cache.lock().unwrap().get(&r.to_bits()) {
            return Ok(xi);
        }
        let mut f = |s: f64| Ok(smallvec::smallvec![self.inner.weight(s)]);
        let xi = integrate(&mut f, lo, r, QuadTol::default())?[0];
        self.inner.cache.lock().unwrap().insert(r.to_bits(), xi);
        Ok(xi)
    }

    /// Newton inversion of the tabulation (dξ/dr is available in closed
    /// form), with a bisection fallback keeping iterates inside the chart.
    pub fn r_of_xi(&self, xi: f64) -> Result<f64> {
        let [lo, hi] = self.inner.r_range;
        let xi_hi = self.xi_of_r(hi)?;
        if !(0.0..=xi_hi).contains(&xi) {
            return Err(Error::Domain { coord: "x1", value: xi, lo: 0.0, hi: xi_hi });
        }
        let (mut a, mut b) = (lo, hi);
        let mut r = lo + (hi - lo) * xi / xi_hi;
        for iter in 0..80 {
            let fr = self.xi_of_r(r)? - xi;
            if fr.abs() <= 1e-13 * (1.0 + xi.abs()) {
                return Ok(r);
            }
            if fr > 0.0 {
                b = r;
            } else {
                a = r;
            }
            let step = fr / self.inner.weight(r);
            let mut next = r - step;
            if !(a..=b).contains(&next) {
                next = 0.5 * (a + b);
            }
            if (next - r).abs() <= f64::EPSILON * r.abs() && iter > 0 {
                return Ok(next);
            }
            r = next;
        }
        Err(Error::NoConvergence {
            what: "Newton inversion of the ξ(r) tabulation".into(),
            iters: 80,
            residual: (self.xi_of_r(r)? - xi).abs(),
        })
    }

    /// r(ξ) as an opaque field in x¹ = ξ (differentiated by stencils).
    pub fn r_field(&self) -> ScalarField {
        let map = self.clone();
        ScalarField::opaque(
            "r_of_xi",
            move |p: Point, _: &Params| map.r_of_xi(p[0]),
            FdOptions::default(),
        )
    }
}

/// Build the ξ-tabulation on a radial window, refusing charts on which
/// ϖ² = 1 − 2μ₀/r + θ/r² is not strictly positive (there ξ(r) loses
/// monotonicity and the inversion is meaningless).
pub fn xi_map(p: &SchwarzschildParams, theta: f64, r_range: [f64; 2]) -> Result<XiMap> {
    let [lo, hi] = r_range;
    if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
        return Err(Error::Config(format!("bad radial window [{lo}, {hi}]")));
    }
    for k in 0..=256 {
        let r = lo + (hi - lo) * k as f64 / 256.0;
        let w2 = 1.0 - 2.0 * p.mu0 / r + theta / (r * r);
        if w2 <= 0.0 {
            return Err(Error::SingularChart(format!(
                "ϖ²({r:.6}) = {w2:.3e} ≤ 0: ξ(r) is not monotone on the window"
            )));
        }
    }
    Ok(XiMap {
        inner: Arc::new(XiMapInner {
            mu0: p.mu0,
            theta,
            r_range,
            cache: Mutex::new(HashMap::new()),
        }),
    })
}

/// The deformed metric in the ξ chart: ǧ₁ = −1, ǧ₂ = −r²(ξ),
/// ȟ₃ = −r²(ξ) sin²ϑ, ȟ₄ = ϖ²(ξ) = 1 − 2μ₀/r(ξ) + θ/r²(ξ).  At θ = 0 this
/// is the Schwarzschild solution written in radial-distance form.
pub fn schwarzschild_xi(
    p: &SchwarzschildParams,
    theta: f64,
    r_range: [f64; 2],
) -> Result<DMetric> {
    let map = xi_map(p, theta, r_range)?;
    let chart = Chart::new(
        [0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
        [map.xi_max()?, f64::INFINITY, f64::INFINITY, f64::INFINITY],
    );
    let r = map.r_field().with_chart(chart);
    let g1 = ScalarField::constant(-1.0);
    let g2 = -(r.powi(2));
    let h3 = -(r.powi(2)) * ScalarField::x2().sin().powi(2);
    let h4 = 1.0 - 2.0 * p.mu0 / &r + theta * r.powi(-2);
    Ok(DMetric::new([g1, g2], [h3, h4], NConnection::trivial()))
}

/// The four θ²-correction coefficients (g̊₁, g̊₂, h̊₃, h̊₄) of the
/// holonomic noncommutative deformation, exactly as printed:
///
/// ```text
///   g̊₁ = −α(4r−3α) / 16r²(r−α)²,     g̊₂ = −(2r²−17α(r−α)) / 32r(r−α),
///   h̊₃ = −((r²+αr−α²)cosϑ − α(2r−α)) / 16r(r−α),
///   h̊₄ = −α(8r−11α) / 16r⁴.
/// ```
pub fn nc_vacuum_correction(r: f64, theta_angle: f64, alpha: f64) -> Result<[f64; 4]> {
    if r <= alpha {
        return Err(Error::Domain { coord: "x1", value: r, lo: alpha, hi: f64::INFINITY });
    }
    let d = r - alpha;
    let g1 = -alpha * (4.0 * r - 3.0 * alpha) / (16.0 * r * r * d * d);
    let g2 = -(2.0 * r * r - 17.0 * alpha * d) / (32.0 * r * d);
    let h3 = -((r * r + alpha * r - alpha * alpha) * theta_angle.cos()
        - alpha * (2.0 * r - alpha))
        / (16.0 * r * d);
    let h4 = -alpha * (8.0 * r - 11.0 * alpha) / (16.0 * r.powi(4));
    Ok([g1, g2, h3, h4])
}

/// Lower incomplete gamma γ(3/2, z), via the substitution p = q² that makes
/// the integrand analytic at the origin: γ(3/2, z) = 2∫₀^{√z} q²e^{−q²} dq.
pub fn lower_gamma_32(z: f64) -> Result<f64> {
    if z < 0.0 {
        return Err(Error::Domain { coord: "v", value: z, lo: 0.0, hi: f64::INFINITY });
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    // The integrand is below 4e−26 past q = 8; clamping keeps the adaptive
    // panels where the mass is without changing the value at tolerance.
    let top = z.sqrt().min(8.5);
    let mut f = |q: f64| Ok(smallvec::smallvec![2.0 * q * q * (-q * q).exp()]);
    Ok(integrate(&mut f, 0.0, top, QuadTol { rel: 1e-12, abs: 1e-16 })?[0])
}

/// Gamma-smeared point mass: h₄ = 1 − (4μ₀/√π r)·γ(3/2, r²/4θ) with
/// g₁ = −h₄⁻¹, g₂ = −r², h₃ = −r² sin²ϑ.  Regular at the core (h₄ → 1 as
/// r → 0) and Schwarzschild at the tail.
pub fn nc_gamma_metric(mu0: f64, theta: f64) -> Result<DMetric> {
    if theta <= 0.0 {
        return Err(Error::Inadmissible(format!(
            "gamma-smeared mass needs θ > 0, got {theta}"
        )));
    }
    let h4 = move |p: Point, _: &Params| -> Result<f64> {
        let r = p[0];
        if r <= 0.0 {
            return Err(Error::Domain { coord: "x1", value: r, lo: 0.0, hi: f64::INFINITY });
        }
        let g = lower_gamma_32(r * r / (4.0 * theta))?;
        Ok(1.0 - 4.0 * mu0 / (std::f64::consts::PI.sqrt() * r) * g)
    };
    let chart = exterior_chart(0.0);
    let h4f = ScalarField::opaque("nc_gamma_h4", h4, FdOptions::default()).with_chart(chart);
    let r = ScalarField::x1();
    let g1 = -(h4f.powi(-1));
    let g2 = -(r.powi(2));
    let h3 = -(r.powi(2)) * ScalarField::x2().sin().powi(2);
    Ok(DMetric::new([g1, g2], [h3, h4f], NConnection::trivial()))
}

/// The documented default smeared density ρ_θ(r) = e^{−r²/4θ}.  This
/// profile is an external convention (the source shape is not fixed by the
/// field equations), kept here so scenarios have a canonical choice.
pub fn gaussian_density(theta: f64) -> Result<ScalarField> {
    if theta <= 0.0 {
        return Err(Error::Inadmissible(format!("density width needs θ > 0, got {theta}")));
    }
    Ok((-(ScalarField::x1().powi(2)) / (4.0 * theta)).exp())
}

/// Diagonal stress of the anisotropic fluid modeling the smeared source:
/// returns (−p₁, −p⊥, −p⊥, ρ_θ) at radius r, with p₁ = −ρ_θ and
/// p⊥ = −ρ_θ − (r/2)∂_r ρ_θ.
pub fn nc_matter_source(rho: &ScalarField, r: f64, params: &Params) -> Result<[f64; 4]> {
    let point = [r, 0.0, 0.0, 0.0];
    let d = partials(rho, point, params, Backend::Dual, &[[0, 0, 0, 0], [1, 0, 0, 0]])?;
    let neg_perp = d[0] + 0.5 * r * d[1];
    Ok([d[0], neg_perp, neg_perp, d[0]])
}

/// Anisotropically polarized mass data: μ = μ₀ + θ̄μ₁(x¹,x²,v) and the
/// ellipse profile q₀, ω₀, φ₀.
#[derive(Clone, Debug)]
pub struct RotoidParams {
    pub mu0: f64,
    pub mu1: ScalarField,
    pub q0: ScalarField,
    pub omega0: f64,
    pub phi0: f64,
    pub thetabar: f64,
}

impl RotoidParams {
    /// Spherically symmetric defaults: μ₁ = 0, q₀ = 4μ₀² (so q₀/4μ² = 1).
    pub fn new(mu0: f64, thetabar: f64) -> Self {
        RotoidParams {
            mu0,
            mu1: ScalarField::constant(0.0),
            q0: ScalarField::constant(4.0 * mu0 * mu0),
            omega0: 1.0,
            phi0: 0.0,
            thetabar,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.thetabar) {
            return Err(Error::Inadmissible(format!(
                "rotoid parameter must satisfy 0 ≤ θ̄ < 1, got {}",
                self.thetabar
            )));
        }
        Ok(())
    }

    fn mu(&self) -> ScalarField {
        self.mu0 + ScalarField::constant(self.thetabar) * &self.mu1
    }
}

/// The rotoid generating functions (q, s, b²):
/// q = 1 − 2μ/r, s = (q₀/4μ²)·sin(ω₀φ + φ₀), b² = q + θ̄s.
pub fn rotoid_generating(
    p: &RotoidParams,
) -> Result<(ScalarField, ScalarField, ScalarField)> {
    p.validate()?;
    let mu = p.mu();
    let q = 1.0 - 2.0 * &mu / ScalarField::x1();
    let s = &p.q0 / (4.0 * mu.powi(2)) * (p.omega0 * ScalarField::v() + p.phi0).sin();
    let b2 = &q + ScalarField::constant(p.thetabar) * &s;
    Ok((q, s, b2))
}

fn rotoid_blocks(
    p: &RotoidParams,
    root_arg: &ScalarField,
    h4: ScalarField,
    s: &ScalarField,
    psi: &ScalarField,
    w: [ScalarField; 2],
    n: [ScalarField; 2],
) -> Result<DMetric> {
    if !root_arg.depends_on(2) {
        return Err(Error::DegenerateVertical(
            "vertical generating data is φ-independent: (√|·|)* ≡ 0 and the first-order \
             h₃ bracket is undefined",
        ));
    }
    let root = root_arg.abs().sqrt();
    let root_v = root.dv();
    let h3 = ScalarField::constant(-4.0)
        * root_v.powi(2)
        * (1.0 + ScalarField::constant(p.thetabar) * (s / &root).dv() / &root_v);
    let g = -(psi.exp());
    Ok(DMetric::new([g.clone(), g], [h3, h4], NConnection { w, n }))
}

/// The stationary rotoid metric: h₄ = q + θ̄s,
/// h₃ = −4[(√|q|)*]²·[1 + θ̄(1/(√|q|)*)(s/√|q|)*], horizontal block −e^ψ.
///
/// The h₃ bracket is the printed first-order form; it tracks the exact
/// vertical relation −4[(√|b²|)*]² to O(θ̄²), so residual_v is small only
/// while the s-term's φ-derivative stays well below q's.  ψ should be
/// harmonic and (w, ¹n) must satisfy the stationarity conditions — the
/// constructor does not police them, the residual evaluators do.
pub fn rotoid_metric(
    p: &RotoidParams,
    psi: &ScalarField,
    w: [ScalarField; 2],
    n: [ScalarField; 2],
) -> Result<DMetric> {
    let (q, s, b2) = rotoid_generating(p)?;
    rotoid_blocks(p, &q, b2, &s, psi, w, n)
}

/// Horizon curve of the rotoid family:
/// r₊(φ) = 2μ₀ / [1 + θ̄(q₀(r)/4μ²)·sin(ω₀φ + φ₀)], solved by fixed-point
/// iteration in r when q₀ or μ₁ has radial dependence (damping 0.5 keeps
/// that case contractive); otherwise the first step is already exact.
///
/// Fields are sampled on the equator ϑ = π/2.  For μ₁ = 0 the curve is
/// exactly the zero set of h₄ = q + θ̄s.
pub fn rotoid_horizon(phi: f64, p: &RotoidParams, params: &Params) -> Result<f64> {
    p.validate()?;
    let radial = p.q0.depends_on(0) || p.mu1.depends_on(0);
    let damping = if radial { 0.5 } else { 1.0 };
    let angle = (p.omega0 * phi + p.phi0).sin();
    let mut r = 2.0 * p.mu0;
    for _ in 0..100 {
        let point = [r, std::f64::consts::FRAC_PI_2, phi, 0.0];
        let mu = p.mu0 + p.thetabar * p.mu1.eval(point, params)?;
        let chi = p.q0.eval(point, params)? / (4.0 * mu * mu);
        let denom = 1.0 + p.thetabar * chi * angle;
        if denom <= 0.0 {
            return Err(Error::Inadmissible(format!(
                "horizon denominator {denom:.3e} ≤ 0 at φ = {phi}"
            )));
        }
        let next = (1.0 - damping) * r + damping * 2.0 * p.mu0 / denom;
        if (next - r).abs() <= 1e-14 * next.abs() {
            return Ok(next);
        }
        r = next;
    }
    Err(Error::NoConvergence {
        what: "rotoid horizon fixed point".into(),
        iters: 100,
        residual: r,
    })
}

/// Residual of the solitonic distribution equation
/// η•• + ε(η′ + 6ηη* + η***)* with • = ∂_ξ, ′ = ∂_ϑ, * = ∂_φ, expanded so a
/// single fourth-order jet serves every term.
pub fn solitonic_residual(
    eta: &ScalarField,
    eps: f64,
    point: Point,
    params: &Params,
    backend: Backend,
) -> Result<f64> {
    if eps != 1.0 && eps != -1.0 {
        return Err(Error::Inadmissible(format!("ε must be ±1, got {eps}")));
    }
    const IDXS: [[u8; 4]; 6] = [
        [0, 0, 0, 0],
        [2, 0, 0, 0],
        [0, 1, 1, 0],
        [0, 0, 1, 0],
        [0, 0, 2, 0],
        [0, 0, 4, 0],
    ];
    let d = partials(eta, point, params, backend, &IDXS)?;
    Ok(d[1] + eps * (d[2] + 6.0 * d[3] * d[3] + 6.0 * d[0] * d[4] + d[5]))
}

/// The traveling KdV profile η(ϑ, φ) = 2k² sech²(k(φ − 4k²ϑ)) — an exact
/// zero of [`solitonic_residual`] for either ε.
pub fn kdv_soliton(k: f64) -> ScalarField {
    let arg = ScalarField::constant(k) * (ScalarField::v() - 4.0 * k * k * ScalarField::x2());
    ScalarField::constant(2.0 * k * k) * arg.sech().powi(2)
}

/// The solitonically distributed rotoid: h₄ = η(q + θ̄s) with the h₃
/// bracket built on √|ηq|.  η ≡ 1 reproduces [`rotoid_metric`] exactly.
pub fn solitonic_rotoid_metric(
    eta: &ScalarField,
    p: &RotoidParams,
    psi: &ScalarField,
    w: [ScalarField; 2],
    n: [ScalarField; 2],
) -> Result<DMetric> {
    let (q, s, b2) = rotoid_generating(p)?;
    let root_arg = eta * &q;
    let h4 = eta * b2;
    rotoid_blocks(p, &root_arg, h4, &s, psi, w, n)
}

/// Stationary vertical closure for a given h₄: h₃ = ε₃e^{−2⁰φ}(h₄*)²/h₄
/// and nₖ = ¹nₖ + ²nₖ∫(h₄*)²|h₄|^{−5/2}dv, with arbitrary w (the w-equation
/// coefficients vanish identically on this family).  All four reduced
/// vertical/mixed equations hold exactly for any C² h₄ with h₄* ≠ 0.
#[allow(clippy::too_many_arguments)]
pub fn solitonic_stationary_metric(
    h4: &ScalarField,
    phi_const: f64,
    eps3: f64,
    psi: &ScalarField,
    w: [ScalarField; 2],
    n_offset: [ScalarField; 2],
    n_weight: [ScalarField; 2],
    v0: f64,
) -> Result<DMetric> {
    if eps3 != 1.0 && eps3 != -1.0 {
        return Err(Error::Inadmissible(format!("ε₃ must be ±1, got {eps3}")));
    }
    if !h4.depends_on(2) {
        return Err(Error::DegenerateVertical(
            "stationary closure needs h₄* ≠ 0: h₄ is φ-independent",
        ));
    }
    let h4v = h4.dv();
    let h3 = ScalarField::constant(eps3 * (-2.0 * phi_const).exp()) * h4v.powi(2) / h4;
    let kernel = h4v.powi(2) * h4.abs().powf(-2.5);
    let integral = kernel.integral_v(v0);
    let n = [
        &n_offset[0] + &n_weight[0] * &integral,
        &n_offset[1] + &n_weight[1] * &integral,
    ];
    let g = -(psi.exp());
    Ok(DMetric::new([g.clone(), g], [h3, h4.clone()], NConnection { w, n }))
}

/// Vertical polarization consistency: given η₄ and the undeformed pair
/// (ȟ₃, ȟ₄), the matching |η₃| = h₀²|ȟ₄/ȟ₃|·[(√|η₄|)*]², returned with the
/// sign ε₃.  A structurally constant η₄ short-circuits to (0, flagged).
pub fn eta_vertical_relation(
    eta4: &ScalarField,
    h0: f64,
    h3_ref: f64,
    h4_ref: f64,
    eps3: f64,
    point: Point,
    params: &Params,
) -> Result<(f64, bool)> {
    if h3_ref == 0.0 {
        return Err(Error::DivisionByZero("undeformed ȟ₃ vanishes".into()));
    }
    if !eta4.depends_on(2) {
        return Ok((0.0, true));
    }
    let root_v = eta4.abs().sqrt().partial(point, crate::fields::MultiIndex::axis(2), params)?;
    if root_v == 0.0 {
        return Err(Error::DegenerateVertical("η₄* = 0 at the probe point"));
    }
    let mag = h0 * h0 * (h4_ref / h3_ref).abs() * root_v * root_v;
    Ok((eps3 * mag, false))
}
