//! Expression trees behind [`ScalarField`](crate::fields::ScalarField).
//!
//! Fields are immutable DAGs of arithmetic nodes over the four coordinates
//! and named parameters.  The closed function set (+, ×, ÷, powers, exp, ln,
//! sin, cos, sech, √, | |) is exactly what the solution ansatz needs; every
//! node knows how to evaluate itself as a truncated Taylor jet, so partial
//! derivatives of any composite field are exact to rounding.
//!
//! Two nodes do real work beyond arithmetic:
//!
//! * `Deriv` evaluates its child at a higher order and shifts coefficients,
//!   so fields may embed derivatives of other fields (h₄*, φ-coefficients,
//!   Hessians) and still be differentiated again.
//! * `IntegralV` is the v-line antiderivative ∫_{v₀}^{v}.  Coefficients with
//!   a v-factor come straight from the integrand's jet; the purely
//!   horizontal coefficients are adaptive-quadrature line integrals, cached
//!   and extended incrementally per (x¹, x², y⁴, params) line so that grid
//!   sweeps in v cost one short panel per step.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::fields::fd::{fd_partial, FdOptions};
use crate::fields::jet::{
    midx_factorial, midx_mask, midx_total, Jet, JetSpace, MIdx, MAX_ORDER,
};
use crate::fields::quad::{integrate, QuadTol};
use crate::fields::{Coeffs, Params, Point};

/// Coordinate index of v in the (x¹, x², v, y⁴) chart.
pub(crate) const V: usize = 2;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum UnOp {
    Neg,
    Exp,
    Ln,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Tanh,
    Sech,
    Sqrt,
    Abs,
}

pub(crate) enum Node {
    Const(f64),
    Coord(usize),
    Param(Arc<str>),
    Un(UnOp, Arc<Node>),
    Add(Arc<Node>, Arc<Node>),
    Sub(Arc<Node>, Arc<Node>),
    Mul(Arc<Node>, Arc<Node>),
    Div(Arc<Node>, Arc<Node>),
    Powi(Arc<Node>, i32),
    Powf(Arc<Node>, f64),
    Deriv(Arc<Node>, MIdx),
    IntegralV(IntegralNode),
    Opaque(OpaqueNode),
}

impl fmt::Debug for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => write!(f, "{c}"),
            Node::Coord(k) => write!(f, "{}", crate::fields::COORD_NAMES[*k]),
            Node::Param(p) => write!(f, "{p}"),
            Node::Un(op, a) => write!(f, "{op:?}({a:?})"),
            Node::Add(a, b) => write!(f, "({a:?} + {b:?})"),
            Node::Sub(a, b) => write!(f, "({a:?} - {b:?})"),
            Node::Mul(a, b) => write!(f, "({a:?} * {b:?})"),
            Node::Div(a, b) => write!(f, "({a:?} / {b:?})"),
            Node::Powi(a, n) => write!(f, "({a:?})^{n}"),
            Node::Powf(a, r) => write!(f, "({a:?})^{r}"),
            Node::Deriv(a, m) => write!(f, "D{m:?}[{a:?}]"),
            Node::IntegralV(n) => write!(f, "IntV[{:?}; v0={}]", n.integrand, n.v0),
            Node::Opaque(o) => write!(f, "opaque<{}>", o.name),
        }
    }
}

pub(crate) struct OpaqueNode {
    pub name: String,
    pub f: Arc<dyn Fn(Point, &Params) -> Result<f64> + Send + Sync>,
    pub fd: FdOptions,
}

/// One v-line of cached cumulative integrals: ordered by v (as monotone
/// bit-mapped keys), each entry the integral of a full horizontal-jet
/// coefficient vector from v₀ to that v.  Lines are grouped per base point
/// and keyed inside the group by (horizontal mask, order), so a request in
/// a narrow space can be answered by projecting a wider line cached at the
/// same v.
type LineCache = BTreeMap<u64, (f64, Coeffs)>;

#[derive(Clone)]
struct LineKey {
    x1: u64,
    x2: u64,
    y4: u64,
    params: Arc<[(Arc<str>, u64)]>,
    /// Mix of the other fields, fixed at construction: lookups happen on
    /// every node of a verification sweep, so the map must not re-hash the
    /// parameter names each time.
    hash: u64,
}

impl LineKey {
    fn new(point: Point, params: &Params) -> LineKey {
        fn mix(mut h: u64, x: u64) -> u64 {
            h ^= x;
            h = h.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            h ^ (h >> 32)
        }
        let (fp, fp_hash) = params.fingerprint();
        let (x1, x2, y4) = (point[0].to_bits(), point[1].to_bits(), point[3].to_bits());
        let hash = mix(mix(mix(fp_hash, x1), x2), y4);
        LineKey { x1, x2, y4, params: fp, hash }
    }
}

impl PartialEq for LineKey {
    fn eq(&self, other: &Self) -> bool {
        self.hash == other.hash
            && self.x1 == other.x1
            && self.x2 == other.x2
            && self.y4 == other.y4
            && (Arc::ptr_eq(&self.params, &other.params) || self.params == other.params)
    }
}

impl Eq for LineKey {}

impl std::hash::Hash for LineKey {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        state.write_u64(self.hash);
    }
}

pub(crate) struct IntegralNode {
    pub integrand: Arc<Node>,
    pub v0: f64,
    pub tol: QuadTol,
    cache: Mutex<HashMap<LineKey, HashMap<(u8, u8), LineCache>>>,
}

impl IntegralNode {
    pub fn new(integrand: Arc<Node>, v0: f64, tol: QuadTol) -> Self {
        IntegralNode { integrand, v0, tol, cache: Mutex::new(HashMap::new()) }
    }
}

/// Total-order-preserving map from f64 to u64 (for BTreeMap keys).
fn ord_key(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

impl Node {
    pub fn as_const(&self) -> Option<f64> {
        match self {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Structural dependence on a coordinate (conservative for opaque fields).
    pub fn depends_on(&self, coord: usize) -> bool {
        match self {
            Node::Const(_) | Node::Param(_) => false,
            Node::Coord(k) => *k == coord,
            Node::Un(_, a) | Node::Powi(a, _) | Node::Powf(a, _) => a.depends_on(coord),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.depends_on(coord) || b.depends_on(coord)
            }
            Node::Deriv(a, _) => a.depends_on(coord),
            Node::IntegralV(n) => coord == V || n.integrand.depends_on(coord),
            Node::Opaque(_) => true,
        }
    }

    /// Worst-case extra truncation order the tree stacks on top of a
    /// requested jet: every `Deriv` raises the order of its subtree by the
    /// total of its multi-index.  A jet of this node at order `o` is exact
    /// as long as `o + deriv_depth() ≤ MAX_ORDER`.  Opaque fields report
    /// `MAX_ORDER` outright — their finite-difference partials cap at low
    /// order, so callers must not push them deep.
    fn deriv_depth(&self) -> usize {
        match self {
            Node::Const(_) | Node::Param(_) | Node::Coord(_) => 0,
            Node::Un(_, a) | Node::Powi(a, _) | Node::Powf(a, _) => a.deriv_depth(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.deriv_depth().max(b.deriv_depth())
            }
            Node::Deriv(a, k) => midx_total(k) + a.deriv_depth(),
            // An integral jet at order o reads its integrand at order o − 1.
            Node::IntegralV(n) => n.integrand.deriv_depth().saturating_sub(1),
            Node::Opaque(_) => MAX_ORDER,
        }
    }

    pub fn eval_jet(&self, point: Point, params: &Params, sp: &Arc<JetSpace>) -> Result<Jet> {
        match self {
            Node::Const(c) => Ok(Jet::constant(sp.clone(), *c)),
            Node::Coord(k) => Ok(Jet::coordinate(sp.clone(), *k, point[*k])),
            Node::Param(name) => {
                let v = params
                    .get(name)
                    .ok_or_else(|| Error::MissingParam(name.to_string()))?;
                Ok(Jet::constant(sp.clone(), v))
            }
            Node::Un(op, a) => {
                let j = a.eval_jet(point, params, sp)?;
                match op {
                    UnOp::Neg => Ok(j.neg()),
                    UnOp::Exp => Ok(j.exp()),
                    UnOp::Ln => j.ln(),
                    UnOp::Sin => Ok(j.sin()),
                    UnOp::Cos => Ok(j.cos()),
                    UnOp::Sinh => Ok(j.sinh()),
                    UnOp::Cosh => Ok(j.cosh()),
                    UnOp::Tanh => Ok(j.tanh()),
                    UnOp::Sech => Ok(j.sech()),
                    UnOp::Sqrt => j.sqrt(),
                    UnOp::Abs => j.abs(),
                }
            }
            Node::Add(a, b) => {
                Ok(a.eval_jet(point, params, sp)?.add(&b.eval_jet(point, params, sp)?))
            }
            Node::Sub(a, b) => {
                Ok(a.eval_jet(point, params, sp)?.sub(&b.eval_jet(point, params, sp)?))
            }
            Node::Mul(a, b) => {
                Ok(a.eval_jet(point, params, sp)?.mul(&b.eval_jet(point, params, sp)?))
            }
            Node::Div(a, b) => {
                let den = b.eval_jet(point, params, sp)?;
                if den.value() == 0.0 {
                    return Err(Error::DivisionByZero(format!("{b:?}")));
                }
                a.eval_jet(point, params, sp)?.div(&den)
            }
            Node::Powi(a, n) => a.eval_jet(point, params, sp)?.powi(*n),
            Node::Powf(a, r) => a.eval_jet(point, params, sp)?.powf(*r),
            Node::Deriv(a, k) => {
                let total = sp.order + midx_total(k);
                if total > MAX_ORDER {
                    return Err(Error::UnsupportedOrder { requested: total, max: MAX_ORDER });
                }
                let sp2 = JetSpace::get(sp.mask | midx_mask(k), total);
                let aj = a.eval_jet(point, params, &sp2)?;
                let mut out = Jet::constant(sp.clone(), 0.0);
                for (r, m) in sp.idx.iter().enumerate() {
                    let raised = [m[0] + k[0], m[1] + k[1], m[2] + k[2], m[3] + k[3]];
                    let q = sp2.rank(&raised).expect("raised multi-index present");
                    out.c[r] =
                        aj.c[q as usize] * midx_factorial(&raised) / midx_factorial(m);
                }
                Ok(out)
            }
            Node::IntegralV(n) => integral_jet(n, point, params, sp),
            Node::Opaque(o) => {
                let mut out = Jet::constant(sp.clone(), 0.0);
                for (r, m) in sp.idx.iter().enumerate() {
                    if midx_total(m) > 4 {
                        return Err(Error::UnsupportedOrder { requested: midx_total(m), max: 4 });
                    }
                    let d = fd_partial(|p| (o.f)(p, params), point, m, o.fd)?;
                    out.c[r] = d / midx_factorial(m);
                }
                Ok(out)
            }
        }
    }
}

/// Jet of F(u) = ∫_{v₀}^{v} integrand dv′ at `point`.
fn integral_jet(
    n: &IntegralNode,
    point: Point,
    params: &Params,
    sp: &Arc<JetSpace>,
) -> Result<Jet> {
    let mut out = Jet::constant(sp.clone(), 0.0);
    // Coefficients carrying a v-power are read off the integrand's jet:
    // ∂^β F = ∂^{β − e_v} integrand for β_v ≥ 1.
    if sp.is_active(V) && sp.order >= 1 {
        let isp = JetSpace::get(sp.mask, sp.order - 1);
        let ij = n.integrand.eval_jet(point, params, &isp)?;
        for (r, m) in sp.idx.iter().enumerate() {
            if m[V] >= 1 {
                let mut lowered = *m;
                lowered[V] -= 1;
                if let Some(q) = isp.rank(&lowered) {
                    out.c[r] = ij.c[q as usize] / m[V] as f64;
                }
            }
        }
    }
    // Purely horizontal coefficients are line integrals along v.  With no
    // horizontal coordinate active the space is a bare value at any order;
    // pinning it to order 0 lets requests at different orders share one
    // cached line (and keeps the integrand jets inside quadrature short).
    let hmask = sp.mask & !(1 << V);
    let horder = if hmask == 0 { 0 } else { sp.order };
    let hsp = JetSpace::get(hmask, horder);
    let hvals = line_integral(n, point, params, &hsp)?;
    for (r, m) in sp.idx.iter().enumerate() {
        if m[V] == 0 {
            let q = hsp.rank(m).expect("horizontal multi-index present");
            out.c[r] = hvals[q as usize];
        }
    }
    Ok(out)
}

/// Cumulative integral of the horizontal jet coefficients of the integrand
/// from v₀ to point[V], extended from the nearest cached value on the line.
fn line_integral(
    n: &IntegralNode,
    point: Point,
    params: &Params,
    hsp: &Arc<JetSpace>,
) -> Result<Coeffs> {
    let v = point[V];
    let key = LineKey::new(point, params);
    let k = ord_key(v);
    let space = (hsp.mask, hsp.order as u8);
    let (base_v, base) = {
        let mut cache = n.cache.lock().unwrap();
        let lines = cache.entry(key.clone()).or_default();
        if let Some((bv, vals)) = lines.get(&space).and_then(|line| line.get(&k)) {
            debug_assert_eq!(*bv, v);
            return Ok(vals.clone());
        }
        // A wider line holding this exact v answers by projection: a jet
        // coefficient is the same in every space whose mask and order admit
        // its multi-index.  Candidates are ranked narrowest-first so the
        // choice never depends on hash-map iteration order.
        let mut sup: Option<(u32, u8, u8)> = None;
        for (&(m, o), line) in lines.iter() {
            if m & hsp.mask == hsp.mask
                && o as usize >= hsp.order
                && (m, o) != space
                && line.contains_key(&k)
            {
                let cand = (m.count_ones(), m, o);
                if sup.is_none_or(|s| cand < s) {
                    sup = Some(cand);
                }
            }
        }
        if let Some((_, m, o)) = sup {
            let wide = JetSpace::get(m, o as usize);
            let vals = &lines[&(m, o)][&k].1;
            return Ok(hsp
                .idx
                .iter()
                .map(|mi| vals[wide.rank(mi).expect("index present in superspace") as usize])
                .collect());
        }
        let line = lines.entry(space).or_insert_with(|| {
            let mut line = BTreeMap::new();
            line.insert(ord_key(n.v0), (n.v0, smallvec::smallvec![0.0; hsp.len()]));
            line
        });
        let below = line.range(..k).next_back();
        let above = line.range(k..).next();
        let nearest = match (below, above) {
            (Some(b), Some(a)) => {
                if (v - b.1 .0).abs() <= (a.1 .0 - v).abs() {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("line seeded with v0"),
        };
        (nearest.1 .0, nearest.1 .1.clone())
    };
    let inc = match taylor_increment(n, point, params, hsp, base_v, v) {
        Some(inc) => inc,
        None => {
            let mut f = |s: f64| {
                let p = [point[0], point[1], s, point[3]];
                n.integrand.eval_jet(p, params, hsp).map(|j| j.c)
            };
            integrate(&mut f, base_v, v, n.tol)?
        }
    };
    let vals: Coeffs = base.iter().zip(&inc).map(|(b, i)| b + i).collect();
    let mut cache = n.cache.lock().unwrap();
    cache
        .get_mut(&key)
        .and_then(|lines| lines.get_mut(&space))
        .expect("line present")
        .insert(k, (v, vals.clone()));
    Ok(vals)
}

/// One line-cache increment by a Taylor step.
///
/// The integrand's v-jet at the midpoint of [a, b] integrates term by term
/// — one tree evaluation instead of an adaptive-quadrature cascade, and the
/// odd terms drop out by symmetry.  Only value lines (no horizontal
/// coordinate active) take this path: there the high-order jet lives in v
/// alone and costs a few evaluations' worth, while on gradient lines the
/// same truncation order spans several variables and the jet outprices the
/// quadrature it would replace.  The step is accepted only when three
/// independent checks pass, otherwise the caller falls back to quadrature:
///
/// * enough order headroom below `MAX_ORDER` to see the tail at all;
/// * the geometric tail estimate (last even term times the observed decay
///   ratio, with a safety factor) fits the quadrature error budget;
/// * the polynomial reproduces directly evaluated endpoint values, which
///   catches non-analytic behaviour inside the step — a branch kink sits
///   invisibly in midpoint coefficients but throws the prediction off by
///   orders of magnitude.
fn taylor_increment(
    n: &IntegralNode,
    point: Point,
    params: &Params,
    hsp: &Arc<JetSpace>,
    a: f64,
    b: f64,
) -> Option<Coeffs> {
    if hsp.mask != 0 {
        return None;
    }
    let spare = MAX_ORDER.saturating_sub(hsp.order + n.integrand.deriv_depth());
    if spare < 6 {
        return None;
    }
    let tsp = JetSpace::get(hsp.mask | (1 << V), hsp.order + spare);
    let h = b - a;
    let half = 0.5 * h;
    let mid = 0.5 * (a + b);
    let mj = n
        .integrand
        .eval_jet([point[0], point[1], mid, point[3]], params, &tsp)
        .ok()?;
    let fa = n
        .integrand
        .eval_jet([point[0], point[1], a, point[3]], params, hsp)
        .ok()?;
    let fb = n
        .integrand
        .eval_jet([point[0], point[1], b, point[3]], params, hsp)
        .ok()?;

    let mut inc: Coeffs = smallvec::smallvec![0.0; hsp.len()];
    let mut tail = 0.0f64;
    let mut scale = 0.0f64;
    let mut mismatch = 0.0f64;
    for (r, beta) in hsp.idx.iter().enumerate() {
        // Collect c_{β + j·e_v}: for β_v = 0 these are exactly the s-Taylor
        // coefficients of jet component β (the v-factorial splits off).
        let avail = tsp.order - midx_total(beta);
        let mut cv = [0.0f64; MAX_ORDER + 1];
        for (j, c) in cv.iter_mut().enumerate().take(avail + 1) {
            let mut m = *beta;
            m[V] = j as u8;
            *c = mj.c[tsp.rank(&m).expect("v-raised index present") as usize];
        }
        // ∫ (s−mid)^j ds over the step: 2(h/2)^{j+1}/(j+1) for even j, 0 odd.
        let mut sum = 0.0;
        let mut terms = [0.0f64; MAX_ORDER / 2 + 1];
        let mut w = 2.0 * half;
        for j in (0..=avail).step_by(2) {
            terms[j / 2] = cv[j] * w / (j + 1) as f64;
            sum += terms[j / 2];
            w *= half * half;
        }
        inc[r] = sum;
        let last = avail / 2;
        let t_last = terms[last].abs();
        let t_prev = if last >= 1 { terms[last - 1].abs() } else { 0.0 };
        let t_prev2 = if last >= 2 { terms[last - 2].abs() } else { 0.0 };
        tail = tail.max(if t_last == 0.0 {
            0.0
        } else if t_prev == 0.0 {
            t_last
        } else {
            // Decay ratio between consecutive even terms, stall-guarded by
            // the ratio one step earlier.
            let mut rho = t_last / t_prev;
            if t_prev2 > 0.0 {
                rho = rho.max(t_prev / t_prev2);
            }
            if rho >= 1.0 {
                return None;
            }
            t_last * rho
        });
        scale = scale.max(sum.abs()).max(h.abs() * cv[0].abs());
        // Horner evaluation of the full polynomial (odd terms included) at
        // both endpoints, compared against the directly evaluated jets.
        let mut pa = 0.0;
        let mut pb = 0.0;
        for j in (0..=avail).rev() {
            pa = pa * (-half) + cv[j];
            pb = pb * half + cv[j];
        }
        mismatch = mismatch.max((pa - fa.c[r]).abs()).max((pb - fb.c[r]).abs());
    }
    let budget = n.tol.abs.max(n.tol.rel * scale);
    if 4.0 * tail > budget {
        return None;
    }
    let vtol = 1e-12f64.max(256.0 * budget / h.abs().max(1e-300));
    if mismatch > vtol {
        return None;
    }
    Some(inc)
}
