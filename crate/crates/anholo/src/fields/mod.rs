//! Scalar fields on the 4-d chart (x¹, x², v, y⁴) with exact derivatives.
//!
//! A [`ScalarField`] is a symbolic expression evaluated numerically through
//! truncated Taylor-jet arithmetic: `partial` returns machine-precision
//! mixed derivatives up to total order 4 without finite differencing.  A
//! finite-difference backend is available as a cross-check (see
//! [`Backend`]).  Fields compose with the usual operators and a closed set
//! of elementary functions, can embed derivatives and v-line integrals of
//! other fields, and can wrap opaque numeric routines (differentiated by FD
//! internally).

pub(crate) mod expr;
pub(crate) mod fd;
pub(crate) mod jet;
pub(crate) mod parse;
pub(crate) mod quad;

use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use expr::{IntegralNode, Node, OpaqueNode, UnOp, V};
use jet::{midx_total, JetSpace};

pub use fd::FdOptions;
pub use parse::parse_expression;
pub use quad::QuadTol;

/// A point of the chart, ordered (x¹, x², v, y⁴).
pub type Point = [f64; 4];

/// Coefficient storage for jets and quadrature: inline up to 10 entries,
/// which covers every space the grid sweeps touch (a full second-order jet
/// in three coordinates), so the hot paths never hit the allocator.
pub(crate) type Coeffs = smallvec::SmallVec<[f64; 10]>;

/// Coordinate names in chart order.
pub const COORD_NAMES: [&str; 4] = ["x1", "x2", "v", "y4"];

/// Mixed-partial order per coordinate, e.g. `[1, 0, 2, 0]` is ∂₁∂ᵥ∂ᵥ.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MultiIndex(pub(crate) [u8; 4]);

impl MultiIndex {
    pub fn new(orders: [u8; 4]) -> Self {
        MultiIndex(orders)
    }

    /// Single derivative along coordinate `k`.
    pub fn axis(k: usize) -> Self {
        let mut m = [0u8; 4];
        m[k] = 1;
        MultiIndex(m)
    }

    pub fn total(&self) -> usize {
        midx_total(&self.0)
    }

    pub fn orders(&self) -> [u8; 4] {
        self.0
    }
}

impl From<[u8; 4]> for MultiIndex {
    fn from(orders: [u8; 4]) -> Self {
        MultiIndex(orders)
    }
}

/// Named parameter bindings, order-independent.
#[derive(Clone, Debug, Default)]
pub struct Params {
    entries: Vec<(Arc<str>, f64)>,
    /// Cached key material for value caches, invalidated by `set`.  Shared
    /// by reference because line caches build a key from it on every lookup.
    fp: OnceLock<(Arc<[(Arc<str>, u64)]>, u64)>,
}

impl PartialEq for Params {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Params {
    pub fn new() -> Self {
        Params::default()
    }

    /// Builder-style insert-or-replace.
    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: &str, value: f64) {
        match self.entries.binary_search_by(|(k, _)| k.as_ref().cmp(name)) {
            Ok(i) => self.entries[i].1 = value,
            Err(i) => self.entries.insert(i, (Arc::from(name), value)),
        }
        self.fp.take();
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .binary_search_by(|(k, _)| k.as_ref().cmp(name))
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn get_or(&self, name: &str, default: f64) -> f64 {
        self.get(name).unwrap_or(default)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_ref())
    }

    /// Bit-exact key material for value caches, with its content hash.
    pub(crate) fn fingerprint(&self) -> (Arc<[(Arc<str>, u64)]>, u64) {
        self.fp
            .get_or_init(|| {
                let fp: Arc<[(Arc<str>, u64)]> =
                    self.entries.iter().map(|(k, v)| (k.clone(), v.to_bits())).collect();
                let mut h = std::collections::hash_map::DefaultHasher::new();
                fp.hash(&mut h);
                (fp, h.finish())
            })
            .clone()
    }
}

/// Rectangular validity region; evaluation outside reports [`Error::Domain`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chart {
    pub lo: Point,
    pub hi: Point,
}

impl Chart {
    pub fn new(lo: Point, hi: Point) -> Self {
        Chart { lo, hi }
    }

    fn check(&self, p: Point) -> Result<()> {
        for k in 0..4 {
            if p[k] < self.lo[k] || p[k] > self.hi[k] {
                return Err(Error::Domain {
                    coord: COORD_NAMES[k],
                    value: p[k],
                    lo: self.lo[k],
                    hi: self.hi[k],
                });
            }
        }
        Ok(())
    }

    fn intersect(a: Option<Chart>, b: Option<Chart>) -> Option<Chart> {
        match (a, b) {
            (None, c) | (c, None) => c,
            (Some(a), Some(b)) => {
                let mut lo = a.lo;
                let mut hi = a.hi;
                for k in 0..4 {
                    lo[k] = lo[k].max(b.lo[k]);
                    hi[k] = hi[k].min(b.hi[k]);
                }
                Some(Chart { lo, hi })
            }
        }
    }
}

/// Derivative engine selection for [`ScalarField::partial_with`] and the
/// grid verifiers: `Dual` is the exact jet path, `Fd` central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Backend {
    Dual,
    Fd(FdOptions),
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Dual
    }
}

/// A scalar function of (x¹, x², v, y⁴) and named parameters.
#[derive(Clone)]
pub struct ScalarField {
    node: Arc<Node>,
    chart: Option<Chart>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.node)
    }
}

fn lift(node: Node) -> ScalarField {
    ScalarField { node: Arc::new(node), chart: None }
}

impl ScalarField {
    pub fn constant(c: f64) -> Self {
        lift(Node::Const(c))
    }

    pub fn x1() -> Self {
        lift(Node::Coord(0))
    }

    pub fn x2() -> Self {
        lift(Node::Coord(1))
    }

    pub fn v() -> Self {
        lift(Node::Coord(V))
    }

    pub fn y4() -> Self {
        lift(Node::Coord(3))
    }

    pub fn coord(k: usize) -> Self {
        assert!(k < 4, "coordinate index out of range");
        lift(Node::Coord(k))
    }

    /// A named parameter, bound at evaluation time through [`Params`].
    pub fn param(name: &str) -> Self {
        lift(Node::Param(Arc::from(name)))
    }

    /// Wrap a black-box routine; derivatives of it use central differences.
    pub fn opaque<F>(name: &str, f: F, fd: FdOptions) -> Self
    where
        F: Fn(Point, &Params) -> Result<f64> + Send + Sync + 'static,
    {
        lift(Node::Opaque(OpaqueNode { name: name.to_string(), f: Arc::new(f), fd }))
    }

    /// Restrict to a rectangular region; out-of-range evaluation errors.
    pub fn with_chart(mut self, chart: Chart) -> Self {
        self.chart = Some(chart);
        self
    }

    pub fn chart(&self) -> Option<Chart> {
        self.chart
    }

    fn unary(&self, op: UnOp) -> Self {
        ScalarField {
            node: Arc::new(Node::Un(op, self.node.clone())),
            chart: self.chart,
        }
    }

    pub fn exp(&self) -> Self {
        self.unary(UnOp::Exp)
    }

    pub fn ln(&self) -> Self {
        self.unary(UnOp::Ln)
    }

    pub fn sin(&self) -> Self {
        self.unary(UnOp::Sin)
    }

    pub fn cos(&self) -> Self {
        self.unary(UnOp::Cos)
    }

    pub fn sinh(&self) -> Self {
        self.unary(UnOp::Sinh)
    }

    pub fn cosh(&self) -> Self {
        self.unary(UnOp::Cosh)
    }

    pub fn tanh(&self) -> Self {
        self.unary(UnOp::Tanh)
    }

    pub fn sech(&self) -> Self {
        self.unary(UnOp::Sech)
    }

    pub fn sqrt(&self) -> Self {
        self.unary(UnOp::Sqrt)
    }

    pub fn abs(&self) -> Self {
        self.unary(UnOp::Abs)
    }

    pub fn powi(&self, n: i32) -> Self {
        ScalarField {
            node: Arc::new(Node::Powi(self.node.clone(), n)),
            chart: self.chart,
        }
    }

    pub fn powf(&self, r: f64) -> Self {
        ScalarField {
            node: Arc::new(Node::Powf(self.node.clone(), r)),
            chart: self.chart,
        }
    }

    /// The field ∂^idx of this one — still a field, still differentiable.
    pub fn deriv(&self, idx: MultiIndex) -> Self {
        ScalarField {
            node: Arc::new(Node::Deriv(self.node.clone(), idx.0)),
            chart: self.chart,
        }
    }

    pub fn dx1(&self) -> Self {
        self.deriv(MultiIndex::axis(0))
    }

    pub fn dx2(&self) -> Self {
        self.deriv(MultiIndex::axis(1))
    }

    pub fn dv(&self) -> Self {
        self.deriv(MultiIndex::axis(V))
    }

    pub fn dy4(&self) -> Self {
        self.deriv(MultiIndex::axis(3))
    }

    /// The running integral ∫_{v₀}^{v} of this field along the v line.
    pub fn integral_v(&self, v0: f64) -> Self {
        self.integral_v_tol(v0, QuadTol::default())
    }

    pub fn integral_v_tol(&self, v0: f64, tol: QuadTol) -> Self {
        ScalarField {
            node: Arc::new(Node::IntegralV(IntegralNode::new(self.node.clone(), v0, tol))),
            chart: self.chart,
        }
    }

    /// Constant value if the field is literally a constant node.
    pub fn as_const(&self) -> Option<f64> {
        self.node.as_const()
    }

    /// Structural dependence on coordinate `k` (conservative: may report
    /// true for expressions that cancel numerically).
    pub fn depends_on(&self, k: usize) -> bool {
        self.node.depends_on(k)
    }

    pub fn eval(&self, point: Point, params: &Params) -> Result<f64> {
        if let Some(ch) = &self.chart {
            ch.check(point)?;
        }
        self.eval_unchecked(point, params)
    }

    /// Full truncated jet over the coordinates in `mask` — the bulk
    /// accessor used by the curvature and residual assemblies.
    pub(crate) fn jet(
        &self,
        point: Point,
        params: &Params,
        mask: u8,
        order: usize,
    ) -> Result<jet::Jet> {
        if let Some(ch) = &self.chart {
            ch.check(point)?;
        }
        let sp = JetSpace::get(mask, order);
        self.node.eval_jet(point, params, &sp)
    }

    pub(crate) fn eval_unchecked(&self, point: Point, params: &Params) -> Result<f64> {
        let sp = JetSpace::get(0, 0);
        Ok(self.node.eval_jet(point, params, &sp)?.value())
    }

    /// Exact mixed partial via jet arithmetic (total order ≤ 4).
    pub fn partial(&self, point: Point, idx: MultiIndex, params: &Params) -> Result<f64> {
        self.partial_with(point, idx, params, Backend::Dual)
    }

    pub fn partial_with(
        &self,
        point: Point,
        idx: MultiIndex,
        params: &Params,
        backend: Backend,
    ) -> Result<f64> {
        if idx.total() > 4 {
            return Err(Error::UnsupportedOrder { requested: idx.total(), max: 4 });
        }
        if let Some(ch) = &self.chart {
            ch.check(point)?;
        }
        match backend {
            Backend::Dual => {
                let sp = JetSpace::get(jet::midx_mask(&idx.0), idx.total());
                let j = self.node.eval_jet(point, params, &sp)?;
                Ok(j.partial(&idx.0).expect("index active in its own space"))
            }
            Backend::Fd(opts) => {
                fd::fd_partial(|p| self.eval_unchecked(p, params), point, &idx.0, opts)
            }
        }
    }
}

macro_rules! fold_binop {
    ($name:ident, $variant:ident, $fold:expr) => {
        fn $name(a: &ScalarField, b: &ScalarField) -> ScalarField {
            let chart = Chart::intersect(a.chart, b.chart);
            if let (Some(x), Some(y)) = (a.node.as_const(), b.node.as_const()) {
                let f: fn(f64, f64) -> f64 = $fold;
                return ScalarField { node: Arc::new(Node::Const(f(x, y))), chart };
            }
            ScalarField {
                node: Arc::new(Node::$variant(a.node.clone(), b.node.clone())),
                chart,
            }
        }
    };
}

fold_binop!(add_fields, Add, |x, y| x + y);
fold_binop!(sub_fields, Sub, |x, y| x - y);
fold_binop!(mul_fields, Mul, |x, y| x * y);
fold_binop!(div_fields, Div, |x, y| x / y);

fn simplify_add(a: &ScalarField, b: &ScalarField) -> ScalarField {
    if a.as_const() == Some(0.0) && a.chart.is_none() {
        return b.clone();
    }
    if b.as_const() == Some(0.0) && b.chart.is_none() {
        return a.clone();
    }
    add_fields(a, b)
}

fn simplify_mul(a: &ScalarField, b: &ScalarField) -> ScalarField {
    if a.as_const() == Some(1.0) && a.chart.is_none() {
        return b.clone();
    }
    if b.as_const() == Some(1.0) && b.chart.is_none() {
        return a.clone();
    }
    mul_fields(a, b)
}

macro_rules! impl_ops {
    ($op:ident, $method:ident, $builder:path) => {
        impl std::ops::$op for ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: ScalarField) -> ScalarField {
                $builder(&self, &rhs)
            }
        }
        impl std::ops::$op<&ScalarField> for ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: &ScalarField) -> ScalarField {
                $builder(&self, rhs)
            }
        }
        impl std::ops::$op<ScalarField> for &ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: ScalarField) -> ScalarField {
                $builder(self, &rhs)
            }
        }
        impl std::ops::$op<&ScalarField> for &ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: &ScalarField) -> ScalarField {
                $builder(self, rhs)
            }
        }
        impl std::ops::$op<f64> for ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: f64) -> ScalarField {
                $builder(&self, &ScalarField::constant(rhs))
            }
        }
        impl std::ops::$op<f64> for &ScalarField {
            type Output = ScalarField;
            fn $method(self, rhs: f64) -> ScalarField {
                $builder(self, &ScalarField::constant(rhs))
            }
        }
        impl std::ops::$op<ScalarField> for f64 {
            type Output = ScalarField;
            fn $method(self, rhs: ScalarField) -> ScalarField {
                $builder(&ScalarField::constant(self), &rhs)
            }
        }
        impl std::ops::$op<&ScalarField> for f64 {
            type Output = ScalarField;
            fn $method(self, rhs: &ScalarField) -> ScalarField {
                $builder(&ScalarField::constant(self), rhs)
            }
        }
    };
}

impl_ops!(Add, add, simplify_add);
impl_ops!(Sub, sub, sub_fields);
impl_ops!(Mul, mul, simplify_mul);
impl_ops!(Div, div, div_fields);

impl std::ops::Neg for ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.unary(UnOp::Neg)
    }
}

impl std::ops::Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self.unary(UnOp::Neg)
    }
}

/// Plain quadrature of `f` along the v line from `v0` to `point[2]`.
pub fn integrate_v(f: &ScalarField, point: Point, v0: f64, params: &Params) -> Result<f64> {
    let mut g = |s: f64| {
        let p = [point[0], point[1], s, point[3]];
        f.eval(p, params).map(|x| smallvec::smallvec![x])
    };
    Ok(integrate(&mut g, v0, point[V], QuadTol::default())?[0])
}

use quad::integrate;
