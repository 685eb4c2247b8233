//! Grid descriptors and residual reports.

use crate::fields::Point;

/// Rectangular evaluation grid over (x¹, x², v) at a fixed y⁴ slice.  The
/// solution ansatz never depends on y⁴, so one slice is enough; the value
/// is still recorded so reported argmax points are complete chart points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub n: [usize; 3],
    pub y4: f64,
}

impl GridBox {
    /// The default verification resolution.
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        GridBox { lo, hi, n: [33, 33, 33], y4: 0.0 }
    }

    pub fn with_resolution(mut self, n: [usize; 3]) -> Self {
        self.n = n;
        self
    }

    pub fn with_y4(mut self, y4: f64) -> Self {
        self.y4 = y4;
        self
    }

    pub fn count(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    fn coord(&self, axis: usize, i: usize) -> f64 {
        if self.n[axis] <= 1 {
            return self.lo[axis];
        }
        let t = i as f64 / (self.n[axis] - 1) as f64;
        self.lo[axis] + t * (self.hi[axis] - self.lo[axis])
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Point {
        [self.coord(0, i), self.coord(1, j), self.coord(2, k), self.y4]
    }
}

/// Max/mean summary of one residual equation over a grid.
#[derive(Clone, Debug)]
pub struct EquationStats {
    pub id: &'static str,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub argmax: Point,
    pub pass: bool,
}

impl EquationStats {
    pub(crate) fn from_samples(id: &'static str, tol: f64) -> StatsAccumulator {
        StatsAccumulator {
            id,
            tol,
            max_abs: 0.0,
            sum_abs: 0.0,
            count: 0,
            argmax: [0.0; 4],
        }
    }
}

/// Fixed-order accumulator: fold samples in traversal order so the mean is
/// bit-reproducible regardless of thread scheduling.
pub(crate) struct StatsAccumulator {
    id: &'static str,
    tol: f64,
    max_abs: f64,
    sum_abs: f64,
    count: usize,
    argmax: Point,
}

impl StatsAccumulator {
    pub fn push(&mut self, value: f64, at: Point) {
        let a = value.abs();
        self.sum_abs += a;
        self.count += 1;
        if a > self.max_abs {
            self.max_abs = a;
            self.argmax = at;
        }
    }

    pub fn merge(&mut self, other: &StatsAccumulator) {
        self.sum_abs += other.sum_abs;
        self.count += other.count;
        if other.max_abs > self.max_abs {
            self.max_abs = other.max_abs;
            self.argmax = other.argmax;
        }
    }

    pub fn finish(self) -> EquationStats {
        EquationStats {
            id: self.id,
            max_abs: self.max_abs,
            mean_abs: if self.count == 0 { 0.0 } else { self.sum_abs / self.count as f64 },
            argmax: self.argmax,
            pass: self.max_abs <= self.tol,
        }
    }
}

/// Residual survey of one solution over one grid.
#[derive(Clone, Debug)]
pub struct ResidualReport {
    pub grid: GridBox,
    pub tol: f64,
    pub equations: Vec<EquationStats>,
}

impl ResidualReport {
    pub fn pass(&self) -> bool {
        self.equations.iter().all(|e| e.pass)
    }

    /// Worst `max_abs` across equations.
    pub fn worst(&self) -> f64 {
        self.equations.iter().fold(0.0f64, |m, e| m.max(e.max_abs))
    }

    pub fn equation(&self, id: &str) -> Option<&EquationStats> {
        self.equations.iter().find(|e| e.id == id)
    }

    /// Tab-separated rendering: one row per equation.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "equation\tmax_abs\tmean_abs\targmax_x1\targmax_x2\targmax_v\targmax_y4\tverdict\n",
        );
        for e in &self.equations {
            out.push_str(&format!(
                "{}\t{:.9e}\t{:.9e}\t{:.9}\t{:.9}\t{:.9}\t{:.9}\t{}\n",
                e.id,
                e.max_abs,
                e.mean_abs,
                e.argmax[0],
                e.argmax[1],
                e.argmax[2],
                e.argmax[3],
                if e.pass { "pass" } else { "fail" }
            ));
        }
        out
    }
}
