use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use super::{linear_product_integral, merged_points, Interval, MeasureError};

/// Field of grid-function values: `f64` or `Complex64`.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    fn re(self) -> f64;
    fn norm_sqr(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn re(self) -> f64 {
        self
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
}

/// Piecewise-linear function on a strictly increasing grid.
///
/// The derivative is the piecewise-constant slope per cell, so every norm and
/// pairing below is an exact integral of the interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T: Scalar = f64> {
    grid: Vec<f64>,
    values: Vec<T>,
}

impl<T: Scalar> GridFunction<T> {
    pub fn new(grid: Vec<f64>, values: Vec<T>) -> Result<Self, MeasureError> {
        if grid.len() < 2
            || grid.len() != values.len()
            || grid.iter().any(|x| !x.is_finite())
            || grid.windows(2).any(|w| !(w[0] < w[1]))
            || values.iter().any(|v| !v.is_finite())
        {
            return Err(MeasureError::BadGrid);
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` on `n` equispaced points of `[a, b]`.
    pub fn sample(a: f64, b: f64, n: usize, f: impl FnMut(f64) -> T) -> Self {
        assert!(n >= 2 && a < b);
        let grid: Vec<f64> =
            (0..n).map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect();
        Self::from_fn(grid, f)
    }

    pub fn from_fn(grid: Vec<f64>, mut f: impl FnMut(f64) -> T) -> Self {
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, values).expect("sampled grid must be valid")
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn span(&self) -> Interval {
        Interval { a: self.grid[0], b: self.grid[self.grid.len() - 1] }
    }

    pub(crate) fn check_covers(&self, j: Interval) -> Result<(), MeasureError> {
        let s = self.span();
        if j.a < s.a || j.b > s.b {
            return Err(MeasureError::OutsideGrid { a: j.a, b: j.b, lo: s.a, hi: s.b });
        }
        Ok(())
    }

    /// Linear interpolation; zero outside the grid span.
    pub fn eval(&self, x: f64) -> T {
        let n = self.grid.len();
        if x < self.grid[0] || x > self.grid[n - 1] {
            return T::zero();
        }
        let i = self.grid.partition_point(|&g| g <= x);
        if i == 0 {
            return self.values[0];
        }
        if i >= n {
            return self.values[n - 1];
        }
        let (x0, x1) = (self.grid[i - 1], self.grid[i]);
        let t = (x - x0) / (x1 - x0);
        self.values[i - 1] * (1.0 - t) + self.values[i] * t
    }

    /// Slope on each cell.
    pub fn derivative(&self) -> Vec<T> {
        self.grid.windows(2).zip(self.values.windows(2)).map(|(g, v)| (v[1] - v[0]) * (1.0 / (g[1] - g[0]))).collect()
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> GridFunction<U> {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    /// Pointwise linear combination on the union grid.
    pub fn combine(&self, other: &Self, a: T, b: T) -> Self {
        let lo = self.grid[0].min(other.grid[0]);
        let hi = self.grid[self.grid.len() - 1].max(other.grid[other.grid.len() - 1]);
        let pts = merged_points(&[&self.grid, &other.grid], lo, hi);
        let values = pts.iter().map(|&x| self.eval(x) * a + other.eval(x) * b).collect();
        GridFunction { grid: pts, values }
    }

    /// `∫_J u conj(v) dx`.
    pub fn inner(&self, other: &Self, j: Interval) -> Result<T, MeasureError> {
        self.check_covers(j)?;
        other.check_covers(j)?;
        let pts = merged_points(&[&self.grid, &other.grid], j.a, j.b);
        let mut acc = T::zero();
        let (mut ua, mut va) = (self.eval(pts[0]), other.eval(pts[0]));
        for w in pts.windows(2) {
            let (ub, vb) = (self.eval(w[1]), other.eval(w[1]));
            acc = acc + linear_product_integral(ua, ub, va, vb) * (w[1] - w[0]);
            ua = ub;
            va = vb;
        }
        Ok(acc)
    }

    /// `∫_J u' conj(v') dx`.
    pub fn derivative_inner(&self, other: &Self, j: Interval) -> Result<T, MeasureError> {
        self.check_covers(j)?;
        other.check_covers(j)?;
        let pts = merged_points(&[&self.grid, &other.grid], j.a, j.b);
        let mut acc = T::zero();
        let (mut ua, mut va) = (self.eval(pts[0]), other.eval(pts[0]));
        for w in pts.windows(2) {
            let (ub, vb) = (self.eval(w[1]), other.eval(w[1]));
            acc = acc + (ub - ua) * (vb - va).conj() * (1.0 / (w[1] - w[0]));
            ua = ub;
            va = vb;
        }
        Ok(acc)
    }

    /// `‖u‖²_{L²(J)}`.
    pub fn norm_sq(&self, j: Interval) -> Result<f64, MeasureError> {
        Ok(self.inner(self, j)?.re())
    }

    /// `‖u'‖²_{L²(J)}`.
    pub fn kinetic(&self, j: Interval) -> Result<f64, MeasureError> {
        Ok(self.derivative_inner(self, j)?.re())
    }

    fn nodes_in(&self, j: Interval, closed: bool) -> Result<Vec<f64>, MeasureError> {
        self.check_covers(j)?;
        let mut pts = merged_points(&[&self.grid], j.a, j.b);
        if !closed {
            pts.pop();
        }
        Ok(pts)
    }

    /// Exact `inf_{x ∈ [a,b]} |u(x)|²`, including interior minima of each cell.
    pub fn inf_abs_sq(&self, j: Interval) -> Result<f64, MeasureError> {
        let pts = self.nodes_in(j, true)?;
        let mut best = f64::INFINITY;
        for w in pts.windows(2) {
            let (ua, ub) = (self.eval(w[0]), self.eval(w[1]));
            best = best.min(ua.norm_sqr()).min(ub.norm_sqr());
            // |ua + t (ub - ua)|² is a convex quadratic in t
            let d = ub - ua;
            let dd = d.norm_sqr();
            if dd > 0.0 {
                let t = -(ua * d.conj()).re() / dd;
                if t > 0.0 && t < 1.0 {
                    best = best.min((ua + d * t).norm_sqr());
                }
            }
        }
        Ok(best)
    }

    /// `sup_{x ∈ [a,b]} |u(x)|²`, attained at a node by convexity.
    pub fn sup_abs_sq(&self, j: Interval) -> Result<f64, MeasureError> {
        Ok(self.nodes_in(j, true)?.iter().map(|&x| self.eval(x).norm_sqr()).fold(0.0, f64::max))
    }
}

impl GridFunction<f64> {
    /// Total variation of the interpolant over `[a, b]`.
    pub fn variation(&self, j: Interval) -> Result<f64, MeasureError> {
        let pts = self.nodes_in(j, true)?;
        Ok(pts.windows(2).map(|w| (self.eval(w[1]) - self.eval(w[0])).abs()).sum())
    }

    pub fn inf(&self, j: Interval) -> Result<f64, MeasureError> {
        Ok(self.nodes_in(j, true)?.iter().map(|&x| self.eval(x)).fold(f64::INFINITY, f64::min))
    }

    /// `|u|²` re-interpolated on the same grid.
    pub fn abs_sq(&self) -> Self {
        self.map(|v| v * v)
    }

    pub fn to_complex(&self) -> GridFunction<Complex64> {
        self.map(Complex64::from_real)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn norms_are_exact_for_linear_functions() {
        let f = GridFunction::<f64>::sample(0.0, 1.0, 2, |x| x);
        assert_abs_diff_eq!(f.norm_sq(iv(0.0, 1.0)).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.kinetic(iv(0.0, 1.0)).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.norm_sq(iv(0.25, 0.5)).unwrap(), (0.125 - 0.25f64.powi(3)) / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn inf_finds_interior_zero_crossing() {
        let f = GridFunction::<f64>::new(vec![0.0, 1.0], vec![-1.0, 3.0]).unwrap();
        assert_abs_diff_eq!(f.inf_abs_sq(iv(0.0, 1.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(f.sup_abs_sq(iv(0.0, 1.0)).unwrap(), 9.0);
        let c =
            GridFunction::<Complex64>::new(vec![0.0, 1.0], vec![Complex64::new(1.0, -1.0), Complex64::new(1.0, 1.0)])
                .unwrap();
        assert_abs_diff_eq!(c.inf_abs_sq(iv(0.0, 1.0)).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn derivative_matches_differences() {
        let f = GridFunction::<f64>::new(vec![0.0, 0.5, 2.0], vec![1.0, 2.0, -1.0]).unwrap();
        assert_eq!(f.derivative(), vec![2.0, -2.0]);
        assert_abs_diff_eq!(f.variation(iv(0.0, 2.0)).unwrap(), 4.0);
        assert_abs_diff_eq!(f.eval(1.25), 0.5);
        assert_eq!(f.eval(3.0), 0.0);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridFunction::<f64>::new(vec![0.0], vec![1.0]).is_err());
        assert!(GridFunction::<f64>::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(GridFunction::<f64>::new(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
    }
}
