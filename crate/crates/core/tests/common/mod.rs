//! Independent reference computations. Nothing here touches the Prüfer
//! solver: closed forms, power series, transfer matrices and a dense
//! finite-difference eigensolver.
#![allow(dead_code)]

use std::f64::consts::PI;

/// `Ai(x)` and `Ai'(x)` from the Maclaurin series, good to ~1e-12 for |x| <= 6.
pub fn airy(x: f64) -> (f64, f64) {
    const C1: f64 = 0.355_028_053_887_817_2;
    const C2: f64 = 0.258_819_403_792_806_8;
    let (x2, x3) = (x * x, x * x * x);
    // f = Σ t_k with t_0 = 1, g = Σ s_k with s_0 = x; f' and g' term by term
    let (mut t, mut s) = (1.0, x);
    let (mut f, mut g) = (1.0, x);
    let (mut df, mut dg) = (0.0, 1.0);
    for k in 0..200 {
        let k3 = 3.0 * k as f64;
        df += t * x2 / (k3 + 2.0);
        dg += s * x2 / (k3 + 3.0);
        t *= x3 / ((k3 + 2.0) * (k3 + 3.0));
        s *= x3 / ((k3 + 3.0) * (k3 + 4.0));
        f += t;
        g += s;
        if t.abs() < 1e-18 * f.abs().max(1.0) && s.abs() < 1e-18 * g.abs().max(1.0) {
            break;
        }
    }
    (C1 * f - C2 * g, C1 * df - C2 * dg)
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    0.5 * (a + b)
}

/// Sign changes of `f` on a fine scan of `[a, b]`, refined by bisection.
fn roots(f: impl Fn(f64) -> f64 + Copy, a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let h = (b - a) / n as f64;
    let mut x0 = a;
    let mut f0 = f(a);
    for i in 1..=n {
        let x1 = a + h * i as f64;
        let f1 = f(x1);
        if f0 == 0.0 || (f0 > 0.0) != (f1 > 0.0) {
            out.push(bisect(f, x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

/// Eigenvalues of `-u'' + |x| u` on the line: `-a'_k` (even) and `-a_k` (odd),
/// merged in ascending order.
pub fn abs_x_levels(count: usize) -> Vec<f64> {
    let even = roots(|e| airy(-e).1, 0.1, 7.0, 7000);
    let odd = roots(|e| airy(-e).0, 0.1, 7.0, 7000);
    let mut all: Vec<f64> = even.into_iter().chain(odd).collect();
    all.sort_by(f64::total_cmp);
    all.truncate(count);
    all
}

/// Ground state of a single attractive atom of weight `-alpha` on the line.
pub fn delta_ground(alpha: f64) -> f64 {
    -alpha * alpha / 4.0
}

/// `(u, u')` propagated over a free stretch of length `d` at energy `lambda`.
pub fn free_step(u: f64, du: f64, d: f64, lambda: f64) -> (f64, f64) {
    if lambda > 0.0 {
        let k = lambda.sqrt();
        let (s, c) = (k * d).sin_cos();
        (u * c + du * s / k, -u * k * s + du * c)
    } else if lambda < 0.0 {
        let k = (-lambda).sqrt();
        let (s, c) = ((k * d).sinh(), (k * d).cosh());
        (u * c + du * s / k, u * k * s + du * c)
    } else {
        (u + du * d, du)
    }
}

/// Transfer-matrix propagation of `(u, u')` through atoms `(x, w)` (sorted,
/// strictly inside `(a, b)`): free flight between atoms, `u' += w u` across.
pub fn transfer(atoms: &[(f64, f64)], a: f64, b: f64, lambda: f64, start: (f64, f64)) -> (f64, f64) {
    let (mut u, mut du) = start;
    let mut x = a;
    for &(xa, w) in atoms {
        (u, du) = free_step(u, du, xa - x, lambda);
        du += w * u;
        x = xa;
    }
    free_step(u, du, b - x, lambda)
}

/// Dirichlet finite differences on `[a, b]` with `n` interior nodes. The
/// diagonal potential term is the measure of the dual cell around each node
/// divided by `h`, so atoms on nodes enter as `w / h`.
pub struct FiniteDifference {
    pub h: f64,
    pub diag: Vec<f64>,
}

impl FiniteDifference {
    pub fn new(a: f64, b: f64, n: usize, dual_mass: impl Fn(f64, f64) -> f64) -> Self {
        let h = (b - a) / (n + 1) as f64;
        let diag = (1..=n)
            .map(|j| {
                let x = a + h * j as f64;
                2.0 / (h * h) + dual_mass(x - 0.5 * h, x + 0.5 * h) / h
            })
            .collect();
        Self { h, diag }
    }

    /// Number of eigenvalues below `lambda` by Sturm sequence (LDLᵀ pivots).
    pub fn count_below(&self, lambda: f64) -> usize {
        let off = -1.0 / (self.h * self.h);
        let mut d = 0.0;
        let mut neg = 0;
        for (j, &a) in self.diag.iter().enumerate() {
            d = if j == 0 { a - lambda } else { a - lambda - off * off / d };
            if d == 0.0 {
                d = -1e-300;
            }
            if d < 0.0 {
                neg += 1;
            }
        }
        neg
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        let off = 1.0 / (self.h * self.h);
        let lo = self.diag.iter().fold(f64::INFINITY, |m, &d| m.min(d)) - 2.0 * off;
        let hi = self.diag.iter().fold(f64::NEG_INFINITY, |m, &d| m.max(d)) + 2.0 * off;
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.count_below(m) > k {
                b = m;
            } else {
                a = m;
            }
            if b - a < 1e-13 * (1.0 + a.abs()) {
                break;
            }
        }
        0.5 * (a + b)
    }
}

/// Richardson-extrapolated finite-difference eigenvalue from `n` and `2n + 1`
/// interior nodes (so the coarse grid is nested in the fine one).
pub fn fd_eigenvalue(a: f64, b: f64, n: usize, k: usize, dual_mass: impl Fn(f64, f64) -> f64 + Copy) -> f64 {
    let coarse = FiniteDifference::new(a, b, n, dual_mass).eigenvalue(k);
    let fine = FiniteDifference::new(a, b, 2 * n + 1, dual_mass).eigenvalue(k);
    (4.0 * fine - coarse) / 3.0
}

/// Kronig–Penney extended-zone wavenumber for atoms of weight `w` with
/// period `period`: `cos(k Λ) = cos(κ Λ) + (w / 2κ) sin(κ Λ)`. The number of
/// Dirichlet states below `e` per unit length tends to `k(e) / π`.
pub fn kronig_penney_k(e: f64, w: f64, period: f64) -> f64 {
    if e <= 0.0 {
        assert!(w >= 0.0, "only repulsive combs are handled");
        return 0.0;
    }
    let kappa = e.sqrt();
    let phase = kappa * period;
    let n = (phase / PI).floor();
    let rhs = (phase.cos() + w / (2.0 * kappa) * phase.sin()).clamp(-1.0, 1.0);
    let ac = rhs.acos();
    let within = if (n as i64) % 2 == 0 { ac } else { PI - ac };
    (n * PI + within) / period
}
