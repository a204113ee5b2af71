//! The quadratic form `t[u] = ‖u'‖² + Q(u)` and the improper potential
//! energy `Q(u) = lim ∫_{-M}^{N} |u|² dq` with `M` and `N` independent.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criteria::{brinck_constant, CriteriaError};
use crate::measure::{BvPotential, GridFunction, Interval, MeasureError, Scalar};
use crate::spectral::{self, Eigenpair, SpectralError, Tolerances};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("cut grids must be non-empty, positive and strictly increasing")]
    BadCuts,
    #[error("functions must share the same grid span")]
    SpanMismatch,
    #[error("h = {0} must lie in (0, 1]")]
    BadH(f64),
    #[error("u must vanish at both ends of its grid (|u| = {0} at an end)")]
    NotCompact(f64),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Converged,
    Diverged,
    Oscillating,
}

/// Absolute and relative spread allowed over the last 3x3 block of partials.
pub const Q_ABS_TOL: f64 = 1e-9;
pub const Q_REL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormReport {
    pub kinetic: f64,
    pub norm_sq: f64,
    pub m_grid: Vec<f64>,
    pub n_grid: Vec<f64>,
    /// `potential_partial[i][j] = ∫_{[-M_i, N_j)} |u|² dq`, clipped to the domain.
    pub potential_partial: Vec<Vec<f64>>,
    pub spread: f64,
    pub last_partial: f64,
    /// `Some` only when the partials converged.
    pub q: Option<f64>,
    pub form_value: Option<f64>,
    pub membership: Membership,
    /// `‖u‖² + ‖u'‖²` is finite (always true for grid data unless it overflowed).
    pub h1_finite: bool,
}

fn check_cuts(cuts: &[f64]) -> Result<(), FormError> {
    if cuts.is_empty() || cuts.iter().any(|c| !(c.is_finite() && *c > 0.0)) || cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FormError::BadCuts);
    }
    Ok(())
}

/// `∫_{[a, x)} u conj(v) dq` over the intersection with the grid span, with
/// `u, v` extended by zero. The atom at the right end of the span counts
/// whenever `x` lies beyond it.
fn clipped_pairing<T: Scalar>(
    p: &BvPotential,
    u: &GridFunction<T>,
    v: &GridFunction<T>,
    a: f64,
    x: f64,
) -> Result<T, MeasureError> {
    let span = u.span();
    let lo = a.max(span.a).max(p.lo());
    let hi = x.min(span.b).min(p.hi());
    let mut acc = T::zero();
    if lo < hi {
        acc = p.pairing(u, v, Interval { a: lo, b: hi })?;
    }
    if x > span.b && span.b >= lo && span.b < p.hi() {
        let w = p.atom_at(span.b);
        if w != 0.0 {
            acc = acc + u.eval(span.b) * v.eval(span.b).conj() * w;
        }
    }
    Ok(acc)
}

/// Table of `∫_{[-M, N)} u conj(v) dq` built from prefix integrals.
fn partial_table<T: Scalar>(
    p: &BvPotential,
    u: &GridFunction<T>,
    v: &GridFunction<T>,
    m_grid: &[f64],
    n_grid: &[f64],
) -> Result<Vec<Vec<T>>, FormError> {
    check_cuts(m_grid)?;
    check_cuts(n_grid)?;
    let base = p.lo().min(u.span().a);
    let mut cuts: Vec<f64> = m_grid.iter().map(|m| -m).collect();
    cuts.extend_from_slice(n_grid);
    let prefix = crate::par_map(&cuts, |&x| clipped_pairing(p, u, v, base, x));
    let prefix: Vec<T> = prefix.into_iter().collect::<Result<_, _>>()?;
    let (left, right) = prefix.split_at(m_grid.len());
    Ok(left
        .iter()
        .zip(m_grid)
        .map(|(&fm, &m)| right.iter().zip(n_grid).map(|(&fn_, &n)| if n > -m { fn_ - fm } else { T::zero() }).collect())
        .collect())
}

/// Spread (largest pairwise distance) over the trailing 3x3 block.
fn block_spread<T: Scalar>(table: &[Vec<T>]) -> f64 {
    let rows = table.len();
    let cols = table[0].len();
    let block: Vec<T> =
        table[rows.saturating_sub(3)..].iter().flat_map(|r| r[cols.saturating_sub(3)..].iter().copied()).collect();
    let mut spread = 0.0f64;
    for (i, a) in block.iter().enumerate() {
        for b in &block[i + 1..] {
            spread = spread.max((*a - *b).norm_sqr().sqrt());
        }
    }
    spread
}

fn classify<T: Scalar>(table: &[Vec<T>]) -> (Membership, f64) {
    let rows = table.len();
    let cols = table[0].len();
    let last = table[rows - 1][cols - 1];
    let spread = block_spread(table);
    let tol = Q_ABS_TOL.max(Q_REL_TOL * last.norm_sqr().sqrt());
    if spread < tol {
        return (Membership::Converged, spread);
    }
    // steadily growing magnitude along the last row, last column or the
    // diagonal means divergence
    let abs = |t: T| t.norm_sqr().sqrt();
    let k = rows.min(cols);
    let last_row: Vec<f64> = table[rows - 1].iter().map(|&t| abs(t)).collect();
    let last_col: Vec<f64> = table.iter().map(|r| abs(r[cols - 1])).collect();
    let diag: Vec<f64> = (0..k).map(|i| abs(table[rows - k + i][cols - k + i])).collect();
    let growing = [last_row, last_col, diag].iter().any(|s| {
        let tail = &s[s.len().saturating_sub(3)..];
        tail.len() >= 2 && tail.windows(2).all(|w| w[1] > w[0])
    });
    (if growing { Membership::Diverged } else { Membership::Oscillating }, spread)
}

/// Potential energy of `u` with independent cuts `M` (left) and `N` (right).
pub fn potential_energy(
    p: &BvPotential,
    u: &GridFunction,
    m_grid: &[f64],
    n_grid: &[f64],
) -> Result<FormReport, FormError> {
    let table = partial_table(p, u, u, m_grid, n_grid)?;
    let (membership, spread) = classify(&table);
    let span = u.span();
    let kinetic = u.kinetic(span)?;
    let norm_sq = u.norm_sq(span)?;
    let last_partial = table[table.len() - 1][table[0].len() - 1];
    let q = (membership == Membership::Converged).then_some(last_partial);
    Ok(FormReport {
        kinetic,
        norm_sq,
        m_grid: m_grid.to_vec(),
        n_grid: n_grid.to_vec(),
        potential_partial: table,
        spread,
        last_partial,
        q,
        form_value: q.map(|q| kinetic + q),
        membership,
        h1_finite: (kinetic + norm_sq).is_finite(),
    })
}

/// Cuts reaching the domain ends: `count` points up to `-lo` and `hi`.
pub fn default_cuts(p: &BvPotential, count: usize) -> (Vec<f64>, Vec<f64>) {
    let count = count.max(1);
    let ramp = |end: f64| -> Vec<f64> {
        let end = end.max(1e-9);
        (1..=count).map(|i| end * i as f64 / count as f64).collect()
    };
    (ramp(-p.lo()), ramp(p.hi()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearValue {
    pub value: Option<Complex64>,
    pub membership: Membership,
}

/// `t[u, v] = ∫ u' conj(v') + lim ∫ u conj(v) dq`.
pub fn form_bilinear(
    p: &BvPotential,
    u: &GridFunction<Complex64>,
    v: &GridFunction<Complex64>,
    m_grid: &[f64],
    n_grid: &[f64],
) -> Result<BilinearValue, FormError> {
    if u.span() != v.span() {
        return Err(FormError::SpanMismatch);
    }
    let kinetic = u.derivative_inner(v, u.span())?;
    let table = partial_table(p, u, v, m_grid, n_grid)?;
    let (membership, _) = classify(&table);
    let last = table[table.len() - 1][table[0].len() - 1];
    Ok(BilinearValue { value: (membership == Membership::Converged).then_some(kinetic + last), membership })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighReport {
    pub k: usize,
    pub lambda: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub norm_sq: f64,
    /// `|‖u'‖² + Q(u) - λ ‖u‖²|`
    pub residual: f64,
}

/// Residual of the energy identity for a computed eigenpair.
pub fn rayleigh_residual(p: &BvPotential, window: Interval, pair: &Eigenpair) -> Result<RayleighReport, FormError> {
    let kinetic = pair.u.kinetic(window)?;
    let potential = p.energy(&pair.u, window)?;
    let norm_sq = pair.u.norm_sq(window)?;
    Ok(RayleighReport {
        k: pair.k,
        lambda: pair.lambda,
        kinetic,
        potential,
        norm_sq,
        residual: (kinetic + potential - pair.lambda * norm_sq).abs(),
    })
}

/// Sample spacing used for eigenfunctions fed to [`rayleigh_check`]. The
/// interpolant's kinetic energy is off by about `λ² h² / 12`.
pub fn rayleigh_spacing(lambda: f64) -> f64 {
    2.5e-4_f64.min(1e-3 / lambda.abs().max(1.0))
}

/// Computes the `k`-th eigenpair on `window` and its energy-identity residual.
pub fn rayleigh_check(
    p: &BvPotential,
    window: Interval,
    k: usize,
    tols: Tolerances,
) -> Result<RayleighReport, FormError> {
    let lambda = spectral::eigenvalue(p, window, k, tols)?;
    let n = (window.len() / rayleigh_spacing(lambda)).ceil() as usize + 1;
    let xs = spectral::sample_grid(p, window, n.max(101));
    let pair = spectral::eigenfunction_at(p, window, k, lambda, &xs, tols)?;
    rayleigh_residual(p, window, &pair)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundMargins {
    pub c: f64,
    pub h: f64,
    pub norm_sq: f64,
    pub kinetic: f64,
    pub q: f64,
    pub form_value: f64,
    /// `2C/h ‖u‖² + t[u] - (1 - Ch) ‖u'‖²`
    pub margin1: f64,
    /// `(1 - Ch) Q(u) + 2C/h ‖u‖² + Ch t[u]`
    pub margin2: f64,
    /// Largest magnitude among the terms, at least 1.
    pub scale: f64,
}

/// Both margins of the form lower bounds for a compactly supported `u`.
pub fn form_lower_bound_check(p: &BvPotential, u: &GridFunction, h: f64) -> Result<LowerBoundMargins, FormError> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(FormError::BadH(h));
    }
    let vals = u.values();
    let end = vals[0].abs().max(vals[vals.len() - 1].abs());
    let peak = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if end > 1e-12 * peak.max(1e-300) {
        return Err(FormError::NotCompact(end));
    }
    let c = brinck_constant(p, 1.0)?.c;
    let span = u.span();
    let window = Interval { a: span.a.max(p.lo()), b: span.b.min(p.hi()) };
    if window.a != span.a || window.b != span.b {
        return Err(MeasureError::OutsideDomain { x: span.a, lo: p.lo(), hi: p.hi() }.into());
    }
    let norm_sq = u.norm_sq(span)?;
    let kinetic = u.kinetic(span)?;
    let q = p.energy(u, span)?;
    let form_value = kinetic + q;
    let ch = c * h;
    let margin1 = 2.0 * c / h * norm_sq + form_value - (1.0 - ch) * kinetic;
    let margin2 = (1.0 - ch) * q + 2.0 * c / h * norm_sq + ch * form_value;
    let scale =
        [2.0 * c / h * norm_sq, kinetic, q.abs(), form_value.abs(), ch * kinetic].into_iter().fold(1.0, f64::max);
    Ok(LowerBoundMargins { c, h, norm_sq, kinetic, q, form_value, margin1, margin2, scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Atom;
    use std::f64::consts::PI;

    fn well(alpha: f64) -> BvPotential {
        BvPotential::uniform(-5.0, 5.0, 0.0, vec![Atom { x: 0.0, w: -alpha }]).unwrap()
    }

    fn tent(c: f64) -> GridFunction {
        GridFunction::new(vec![-1.0, 0.0, 1.0], vec![0.0, c, 0.0]).unwrap()
    }

    #[test]
    fn atom_energy_is_constant_in_cuts() {
        let p = well(1.5);
        let r = potential_energy(&p, &tent(2.0), &[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        for row in &r.potential_partial {
            for &v in row {
                assert_eq!(v, -6.0);
            }
        }
        assert_eq!(r.membership, Membership::Converged);
        assert_eq!(r.q, Some(-6.0));
        assert_eq!(r.form_value, Some(r.kinetic - 6.0));
        assert!((r.kinetic - 8.0).abs() < 1e-14);
    }

    #[test]
    fn zero_function_has_zero_energy() {
        let p = well(1.0);
        let u = GridFunction::sample(-2.0, 2.0, 11, |_| 0.0);
        let r = potential_energy(&p, &u, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.q, Some(0.0));
    }

    #[test]
    fn growing_partials_are_divergent() {
        // density x on [0, 40): the partials of u ≡ 1 grow without bound
        let knots: Vec<f64> = (0..=40).map(f64::from).collect();
        let density: Vec<f64> = (0..40).map(|i| i as f64 + 0.5).collect();
        let p = BvPotential::new((0.0, 40.0), knots, density, vec![]).unwrap();
        let u = GridFunction::sample(0.0, 40.0, 3, |_| 1.0);
        let r = potential_energy(&p, &u, &[1.0], &[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert_eq!(r.membership, Membership::Diverged);
        assert_eq!(r.q, None);
        assert_eq!(r.form_value, None);
    }

    #[test]
    fn alternating_partials_oscillate() {
        let atoms = (1..20).map(|n| Atom { x: n as f64, w: if n % 2 == 0 { 1.0 } else { -1.0 } }).collect();
        let p = BvPotential::uniform(0.0, 20.0, 0.0, atoms).unwrap();
        let u = GridFunction::sample(0.0, 20.0, 3, |_| 1.0);
        let n_grid: Vec<f64> = (10..=19).map(|n| n as f64 + 0.5).collect();
        let r = potential_energy(&p, &u, &[1.0], &n_grid).unwrap();
        assert_eq!(r.membership, Membership::Oscillating);
    }

    #[test]
    fn independent_cuts_see_one_sided_mass() {
        let atoms = vec![Atom { x: -3.0, w: 2.0 }, Atom { x: 3.0, w: -1.0 }];
        let p = BvPotential::uniform(-5.0, 5.0, 0.0, atoms).unwrap();
        let u = GridFunction::sample(-5.0, 5.0, 3, |_| 1.0);
        let r = potential_energy(&p, &u, &[2.0, 4.0], &[2.0, 4.0]).unwrap();
        assert_eq!(r.potential_partial, vec![vec![0.0, -1.0], vec![2.0, 1.0]]);
    }

    #[test]
    fn span_end_atom_counts_beyond_the_span() {
        let p = BvPotential::uniform(-5.0, 5.0, 0.0, vec![Atom { x: 1.0, w: 3.0 }]).unwrap();
        let u = GridFunction::sample(-1.0, 1.0, 3, |_| 2.0);
        let r = potential_energy(&p, &u, &[2.0], &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(r.potential_partial[0], vec![0.0, 0.0, 12.0]);
    }

    #[test]
    fn bilinear_is_kinetic_for_zero_potential() {
        let p = BvPotential::zero(-2.0, 2.0).unwrap();
        let u = GridFunction::sample(-1.0, 1.0, 41, |x| Complex64::new(1.0 - x * x, x));
        let v = GridFunction::sample(-1.0, 1.0, 41, |x| Complex64::new(x.cos(), 0.0));
        let t = form_bilinear(&p, &u, &v, &[1.0, 2.0], &[1.0, 2.0]).unwrap();
        let k = u.derivative_inner(&v, u.span()).unwrap();
        assert_eq!(t.value, Some(k));
        let w = GridFunction::sample(-1.5, 1.0, 41, |_| Complex64::new(0.0, 0.0));
        assert_eq!(form_bilinear(&p, &u, &w, &[1.0], &[1.0]), Err(FormError::SpanMismatch));
    }

    #[test]
    fn rayleigh_for_free_and_well() {
        let p = BvPotential::zero(0.0, PI).unwrap();
        let r = rayleigh_check(&p, Interval::new(0.0, PI).unwrap(), 0, Tolerances::default()).unwrap();
        assert!(r.residual < 1e-8, "{r:?}");
        let p = BvPotential::uniform(-20.0, 20.0, 0.0, vec![Atom { x: 0.0, w: -1.0 }]).unwrap();
        let r = rayleigh_check(&p, Interval::new(-20.0, 20.0).unwrap(), 0, Tolerances::default()).unwrap();
        assert!(r.residual < 1e-6, "{r:?}");
        assert!((r.potential + 0.5).abs() < 1e-6, "Q = -|u(0)|² = -κ = -1/2");
    }

    #[test]
    fn lower_bound_margins() {
        let p = BvPotential::zero(-2.0, 2.0).unwrap();
        let u = tent(1.0);
        let m = form_lower_bound_check(&p, &u, 0.5).unwrap();
        assert_eq!(m.c, 2.0);
        assert!((m.margin1 - (8.0 * m.norm_sq + m.kinetic)).abs() < 1e-12);
        assert!(m.margin2 >= 0.0);
        let p = BvPotential::uniform(-2.0, 2.0, 0.0, vec![Atom { x: 0.0, w: -2.0 }]).unwrap();
        for h in [0.1, 0.25, 0.5, 1.0] {
            let m =
                form_lower_bound_check(&p, &GridFunction::new(vec![-0.1, 0.0, 0.1], vec![0.0, 1.0, 0.0]).unwrap(), h)
                    .unwrap();
            assert!(m.margin1 >= -1e-10 && m.margin2 >= -1e-10, "{m:?}");
        }
        assert_eq!(form_lower_bound_check(&p, &u, 0.0), Err(FormError::BadH(0.0)));
        let flat = GridFunction::sample(-1.0, 1.0, 3, |_| 1.0);
        assert!(matches!(form_lower_bound_check(&p, &flat, 0.5), Err(FormError::NotCompact(_))));
    }
}
