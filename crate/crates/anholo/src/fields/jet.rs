//! Truncated multivariate Taylor arithmetic.
//!
//! A `Jet` holds the Taylor coefficients of a function at a point, truncated
//! at a fixed total order over a fixed set of active coordinates.  Carrying
//! jets through an expression tree yields *exact* partial derivatives of any
//! composite expression (forward-mode automatic differentiation, nested to
//! the truncation order), free of finite-difference truncation error.
//!
//! Coefficients are stored against multi-indices β with |β| ≤ order; the
//! coefficient of a jet of f is ∂^β f / β!, so products of jets are plain
//! Cauchy products.  Analytic functions are applied by Horner evaluation of
//! their univariate Taylor expansion in the nilpotent part of the argument,
//! which is exact at the stored order.
//!
//! Index tables (the multi-index list and the product pairing) depend only
//! on (active-coordinate mask, order) and are cached globally.

use std::sync::{Arc, OnceLock};

use smallvec::smallvec;

use crate::error::{Error, Result};
use crate::fields::Coeffs;

/// Hard ceiling on the internal truncation order.  Public entry points
/// enforce the documented limit of 4 per call; internally, a derivative of a
/// derivative may push the evaluation order higher, up to this bound.
pub const MAX_ORDER: usize = 8;

/// A multi-index over the chart (x¹, x², v, y⁴).
pub type MIdx = [u8; 4];

pub fn midx_total(m: &MIdx) -> usize {
    m.iter().map(|&b| b as usize).sum()
}

pub fn midx_mask(m: &MIdx) -> u8 {
    let mut mask = 0u8;
    for (k, &b) in m.iter().enumerate() {
        if b > 0 {
            mask |= 1 << k;
        }
    }
    mask
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// β! for a multi-index.
pub fn midx_factorial(m: &MIdx) -> f64 {
    m.iter().map(|&b| factorial(b as usize)).product()
}

/// The shape of a truncation: which coordinates are active and to what
/// total order.  Holds the multi-index enumeration (graded lexicographic)
/// and the precomputed sparse pairing used by multiplication.
pub struct JetSpace {
    pub mask: u8,
    pub order: usize,
    pub idx: Vec<MIdx>,
    /// Flat rank lookup indexed by the mixed-radix digits of a multi-index
    /// (stride `order + 1` per coordinate); `u32::MAX` marks indices
    /// outside the space.  Rank queries sit inside every jet evaluation,
    /// so they must not hash.
    rank_tab: Vec<u32>,
    /// Cauchy-product pairs (a, b) grouped by destination rank:
    /// `pairs[starts[d]..starts[d + 1]]` lists the coefficient products
    /// accumulating into rank `d`, in graded-lex order of the left factor.
    /// Grouping lets `mul` keep each sum in a register, and the per-group
    /// order makes shared coefficients bitwise equal across spaces.
    pairs: Vec<(u32, u32)>,
    starts: Vec<u32>,
}

impl JetSpace {
    fn build(mask: u8, order: usize) -> Arc<JetSpace> {
        assert!(order <= MAX_ORDER, "jet order {order} above MAX_ORDER");
        let active: Vec<usize> = (0..4).filter(|k| mask & (1 << k) != 0).collect();
        // Enumerate all supported multi-indices with |β| ≤ order, graded lex.
        let mut idx: Vec<MIdx> = Vec::new();
        for deg in 0..=order {
            if deg == 0 {
                idx.push([0; 4]);
                continue;
            }
            let mut level: Vec<MIdx> = Vec::new();
            gen_level(&active, deg, 0, &mut [0; 4], &mut level);
            idx.extend(level);
        }
        let stride = order + 1;
        let mut rank_tab = vec![u32::MAX; stride * stride * stride * stride];
        for (i, m) in idx.iter().enumerate() {
            rank_tab[Self::tab_slot(m, stride)] = i as u32;
        }
        let mut space =
            JetSpace { mask, order, idx, rank_tab, pairs: Vec::new(), starts: Vec::new() };
        let mut tagged = Vec::new();
        for (a, ma) in space.idx.iter().enumerate() {
            for (b, mb) in space.idx.iter().enumerate() {
                if midx_total(ma) + midx_total(mb) <= order {
                    let sum = [
                        ma[0] + mb[0],
                        ma[1] + mb[1],
                        ma[2] + mb[2],
                        ma[3] + mb[3],
                    ];
                    tagged.push((a as u32, b as u32, space.rank(&sum).unwrap()));
                }
            }
        }
        tagged.sort_by_key(|&(.., dst)| dst);
        let mut starts = vec![0u32; space.idx.len() + 1];
        for &(.., dst) in &tagged {
            starts[dst as usize + 1] += 1;
        }
        for d in 0..space.idx.len() {
            starts[d + 1] += starts[d];
        }
        space.pairs = tagged.into_iter().map(|(a, b, _)| (a, b)).collect();
        space.starts = starts;
        Arc::new(space)
    }

    fn tab_slot(m: &MIdx, stride: usize) -> usize {
        (((m[0] as usize * stride + m[1] as usize) * stride + m[2] as usize) * stride)
            + m[3] as usize
    }

    /// Fetch (building and caching on first use) the space for a mask/order.
    pub fn get(mask: u8, order: usize) -> Arc<JetSpace> {
        static CACHE: [[OnceLock<Arc<JetSpace>>; MAX_ORDER + 1]; 16] =
            [const { [const { OnceLock::new() }; MAX_ORDER + 1] }; 16];
        CACHE[mask as usize & 0xf][order]
            .get_or_init(|| JetSpace::build(mask, order))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn rank(&self, m: &MIdx) -> Option<u32> {
        let stride = self.order + 1;
        if m.iter().any(|&b| b as usize > self.order) {
            return None;
        }
        match self.rank_tab[Self::tab_slot(m, stride)] {
            u32::MAX => None,
            r => Some(r),
        }
    }

    pub fn is_active(&self, coord: usize) -> bool {
        self.mask & (1 << coord) != 0
    }
}

fn gen_level(active: &[usize], deg: usize, pos: usize, cur: &mut MIdx, out: &mut Vec<MIdx>) {
    if pos == active.len() {
        if deg == 0 {
            out.push(*cur);
        }
        return;
    }
    if pos + 1 == active.len() {
        cur[active[pos]] = deg as u8;
        out.push(*cur);
        cur[active[pos]] = 0;
        return;
    }
    for d in (0..=deg).rev() {
        cur[active[pos]] = d as u8;
        gen_level(active, deg - d, pos + 1, cur, out);
        cur[active[pos]] = 0;
    }
}

/// Taylor coefficients of one scalar quantity in a fixed [`JetSpace`].
#[derive(Clone)]
pub struct Jet {
    pub sp: Arc<JetSpace>,
    pub c: Coeffs,
}

impl Jet {
    pub fn constant(sp: Arc<JetSpace>, value: f64) -> Jet {
        let mut c: Coeffs = smallvec![0.0; sp.len()];
        c[0] = value;
        Jet { sp, c }
    }

    /// The jet of a coordinate function: value plus unit slope if active.
    pub fn coordinate(sp: Arc<JetSpace>, coord: usize, value: f64) -> Jet {
        let mut jet = Jet::constant(sp.clone(), value);
        if sp.order >= 1 && sp.is_active(coord) {
            let mut unit: MIdx = [0; 4];
            unit[coord] = 1;
            let r = sp.rank(&unit).expect("active unit index") as usize;
            jet.c[r] = 1.0;
        }
        jet
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// The partial derivative ∂^β f encoded by this jet (coefficient × β!).
    pub fn partial(&self, m: &MIdx) -> Option<f64> {
        self.sp.rank(m).map(|r| self.c[r as usize] * midx_factorial(m))
    }

    pub fn add(&self, rhs: &Jet) -> Jet {
        debug_assert!(Arc::ptr_eq(&self.sp, &rhs.sp));
        let c = self.c.iter().zip(&rhs.c).map(|(a, b)| a + b).collect();
        Jet { sp: self.sp.clone(), c }
    }

    pub fn sub(&self, rhs: &Jet) -> Jet {
        debug_assert!(Arc::ptr_eq(&self.sp, &rhs.sp));
        let c = self.c.iter().zip(&rhs.c).map(|(a, b)| a - b).collect();
        Jet { sp: self.sp.clone(), c }
    }

    pub fn neg(&self) -> Jet {
        let c = self.c.iter().map(|a| -a).collect();
        Jet { sp: self.sp.clone(), c }
    }

    pub fn scale(&self, s: f64) -> Jet {
        let c = self.c.iter().map(|a| a * s).collect();
        Jet { sp: self.sp.clone(), c }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.c[0] += s;
        out
    }

    pub fn mul(&self, rhs: &Jet) -> Jet {
        debug_assert!(Arc::ptr_eq(&self.sp, &rhs.sp));
        let mut c: Coeffs = smallvec![0.0; self.sp.len()];
        for (d, slot) in c.iter_mut().enumerate() {
            let lo = self.sp.starts[d] as usize;
            let hi = self.sp.starts[d + 1] as usize;
            let mut acc = 0.0;
            for &(a, b) in &self.sp.pairs[lo..hi] {
                acc += self.c[a as usize] * rhs.c[b as usize];
            }
            *slot = acc;
        }
        Jet { sp: self.sp.clone(), c }
    }

    pub fn div(&self, rhs: &Jet) -> Result<Jet> {
        Ok(self.mul(&rhs.recip()?))
    }

    /// Compose with a univariate analytic function given its derivatives
    /// d⁰f..dⁿf at the value of this jet (Horner in the nilpotent part).
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let n = self.sp.order;
        debug_assert!(derivs.len() > n);
        let mut p = self.clone();
        p.c[0] = 0.0;
        let mut acc = Jet::constant(self.sp.clone(), derivs[n] / factorial(n));
        for k in (0..n).rev() {
            acc = acc.mul(&p);
            acc.c[0] += derivs[k] / factorial(k);
        }
        acc
    }

    pub fn recip(&self) -> Result<Jet> {
        let u = self.value();
        if u == 0.0 {
            return Err(Error::DivisionByZero("jet inversion".into()));
        }
        let n = self.sp.order;
        // dᵏ (1/u) = (−1)ᵏ k! / u^{k+1}
        let mut derivs = [0.0; MAX_ORDER + 1];
        let mut p = 1.0 / u;
        for (k, d) in derivs.iter_mut().enumerate().take(n + 1) {
            *d = if k % 2 == 0 { 1.0 } else { -1.0 } * factorial(k) * p;
            p /= u;
        }
        Ok(self.compose(&derivs[..=n]))
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let derivs = [e; MAX_ORDER + 1];
        self.compose(&derivs[..=self.sp.order])
    }

    pub fn ln(&self) -> Result<Jet> {
        let u = self.value();
        if u <= 0.0 {
            return Err(Error::OffBranch { func: "ln", value: u });
        }
        let n = self.sp.order;
        let mut derivs = [0.0; MAX_ORDER + 1];
        derivs[0] = u.ln();
        let mut p = 1.0 / u;
        for (k, d) in derivs.iter_mut().enumerate().take(n + 1).skip(1) {
            *d = if k % 2 == 1 { 1.0 } else { -1.0 } * factorial(k - 1) * p;
            p /= u;
        }
        Ok(self.compose(&derivs[..=n]))
    }

    pub fn sin(&self) -> Jet {
        self.sincos().0
    }

    pub fn cos(&self) -> Jet {
        self.sincos().1
    }

    fn sincos(&self) -> (Jet, Jet) {
        let u = self.value();
        let (s, c) = u.sin_cos();
        let cycle = [s, c, -s, -c];
        let n = self.sp.order;
        let mut sin_d = [0.0; MAX_ORDER + 1];
        let mut cos_d = [0.0; MAX_ORDER + 1];
        for k in 0..=n {
            sin_d[k] = cycle[k % 4];
            cos_d[k] = cycle[(k + 1) % 4];
        }
        (self.compose(&sin_d[..=n]), self.compose(&cos_d[..=n]))
    }

    pub fn sqrt(&self) -> Result<Jet> {
        self.powf(0.5)
    }

    pub fn powf(&self, r: f64) -> Result<Jet> {
        let u = self.value();
        if u <= 0.0 {
            return Err(Error::OffBranch { func: "powf", value: u });
        }
        let n = self.sp.order;
        let mut derivs = [0.0; MAX_ORDER + 1];
        let mut coef = 1.0;
        for (k, d) in derivs.iter_mut().enumerate().take(n + 1) {
            *d = coef * u.powf(r - k as f64);
            coef *= r - k as f64;
        }
        Ok(self.compose(&derivs))
    }

    pub fn powi(&self, n: i32) -> Result<Jet> {
        if n < 0 {
            return self.powi(-n)?.recip();
        }
        let mut acc = Jet::constant(self.sp.clone(), 1.0);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        Ok(acc)
    }

    /// |u| with a sign certificate: differentiable only away from u = 0.
    pub fn abs(&self) -> Result<Jet> {
        let u = self.value();
        if u > 0.0 {
            Ok(self.clone())
        } else if u < 0.0 {
            Ok(self.neg())
        } else if self.sp.order == 0 {
            Ok(Jet::constant(self.sp.clone(), 0.0))
        } else {
            Err(Error::AbsAtKink)
        }
    }

    pub fn sinh(&self) -> Jet {
        let e = self.exp();
        let em = e.recip().expect("exp is nonzero");
        e.sub(&em).scale(0.5)
    }

    pub fn cosh(&self) -> Jet {
        let e = self.exp();
        let em = e.recip().expect("exp is nonzero");
        e.add(&em).scale(0.5)
    }

    pub fn tanh(&self) -> Jet {
        self.sinh().div(&self.cosh()).expect("cosh ≥ 1")
    }

    pub fn sech(&self) -> Jet {
        self.cosh().recip().expect("cosh ≥ 1")
    }
}
