//! Dirichlet eigenvalues on truncation windows.
//!
//! With `θ = 0` (so `u = 0`) at the left end of a window, the terminal angle
//! `θ_end(λ)` is continuous and strictly increasing in `λ`, and the `k`-th
//! Dirichlet eigenvalue is the unique solution of `θ_end(λ) = (k+1)π`. The
//! number of eigenvalues below `λ` is the number of multiples of `π` that
//! `θ_end(λ)` has strictly passed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criteria::{brinck_constant, CriteriaError};
use crate::measure::{BvPotential, GridFunction, Interval, MeasureError};
use crate::quasi_ode::{OdeError, Propagator, PrueferState};

use std::f64::consts::PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("tolerances must be positive and finite")]
    BadTolerance,
    #[error("{count} eigenvalue(s) found below the guaranteed lower bound {bound} on [{a}, {b})")]
    LowerBoundBreach { count: usize, bound: f64, a: f64, b: f64 },
    #[error("could not bracket eigenvalue {k}: upper end reached {hi} with count {count}")]
    BracketFailure { k: usize, hi: f64, count: usize },
    #[error("eigenfunction matching failed for eigenvalue {k}: {detail}")]
    Matching { k: usize, detail: String },
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol_lambda: f64,
    pub tol_ode: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tol_lambda: 1e-10, tol_ode: 1e-12 }
    }
}

impl Tolerances {
    fn check(&self) -> Result<(), SpectralError> {
        let ok = |t: f64| t > 0.0 && t.is_finite();
        if ok(self.tol_lambda) && ok(self.tol_ode) {
            Ok(())
        } else {
            Err(SpectralError::BadTolerance)
        }
    }
}

/// Slack on `θ_end / π` below which a multiple of `π` counts as not passed.
const COUNT_SLACK: f64 = 1e-9;

/// Terminal Prüfer angle on `window` started from a Dirichlet end.
pub fn winding(p: &BvPotential, window: Interval, lambda: f64, tol: f64) -> Result<f64, SpectralError> {
    let prop = Propagator::new(p, lambda, tol)?;
    let end = prop.propagate(PrueferState::dirichlet(p, window.a), window.b)?;
    Ok(end.theta)
}

fn count_from_theta(theta: f64) -> usize {
    let passed = ((theta - COUNT_SLACK) / PI).ceil() - 1.0;
    passed.max(0.0) as usize
}

/// Number of Dirichlet eigenvalues strictly below `lambda` on `window`.
pub fn count_below(p: &BvPotential, window: Interval, lambda: f64, tol: f64) -> Result<usize, SpectralError> {
    Ok(count_from_theta(winding(p, window, lambda, tol)?))
}

/// Constant `C` of the potential restricted to `window`.
pub fn window_constant(p: &BvPotential, window: Interval) -> Result<f64, SpectralError> {
    Ok(brinck_constant(&p.restrict(window)?, 1.0)?.c)
}

/// `k`-th Dirichlet eigenvalue (from 0) on `window`.
pub fn eigenvalue(p: &BvPotential, window: Interval, k: usize, tols: Tolerances) -> Result<f64, SpectralError> {
    tols.check()?;
    let c = window_constant(p, window)?;
    // zero of the shifted operator S + (2C² + 1)
    let lo = -2.0 * c * c - 1.0;
    let target = (k + 1) as f64 * PI;
    let g = |lambda: f64| winding(p, window, lambda, tols.tol_ode).map(|t| t - target);

    let g_lo = g(lo)?;
    let below = count_from_theta(g_lo + target);
    if below > 0 {
        return Err(SpectralError::LowerBoundBreach { count: below, bound: lo + 1.0, a: window.a, b: window.b });
    }
    let mut width = 1.0f64.max(lo.abs());
    let mut hi = lo + width;
    let mut g_hi = g(hi)?;
    let mut tries = 0;
    while g_hi <= 0.0 {
        tries += 1;
        if tries > 60 {
            return Err(SpectralError::BracketFailure { k, hi, count: count_from_theta(g_hi + target) });
        }
        width *= 2.0;
        hi = lo + width;
        g_hi = g(hi)?;
    }
    solve_increasing(g, lo, hi, g_lo, g_hi, tols.tol_lambda)
}

/// Root of an increasing function with `f(a) < 0 < f(b)`: false position
/// with the Illinois modification, falling back to bisection whenever the
/// bracket fails to halve.
fn solve_increasing(
    f: impl Fn(f64) -> Result<f64, SpectralError>,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    tol: f64,
) -> Result<f64, SpectralError> {
    let mut side = 0i8;
    let mut prev: Option<f64> = None;
    for iter in 0..400 {
        let width = b - a;
        if width <= tol {
            break;
        }
        let mut c = if fb != fa { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
        if !(c > a && c < b) || iter % 6 == 5 {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if let Some(p) = prev {
            if (c - p).abs() < 0.01 * tol {
                return Ok(c);
            }
        }
        prev = Some(c);
        if fc < 0.0 {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    // interpolate inside the final bracket
    Ok(if fb != fa { (b - fb * (b - a) / (fb - fa)).clamp(a, b) } else { 0.5 * (a + b) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub k: usize,
    pub lambda: f64,
    /// L²-normalized eigenfunction.
    pub u: GridFunction,
    /// Its quasi-derivative `u' - q u` with the same scaling.
    pub u_quasi: GridFunction,
    pub matching_point: f64,
    /// Relative mismatch of `(u, u^[1])` between the two sweeps at the
    /// matching point, before the right sweep was rescaled.
    pub mismatch: f64,
}

/// `n` equispaced points on the window merged with every atom inside it.
pub fn sample_grid(p: &BvPotential, window: Interval, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let mut xs: Vec<f64> = (0..n)
        .map(|i| if i + 1 == n { window.b } else { window.a + window.len() * i as f64 / (n - 1) as f64 })
        .collect();
    xs.extend(p.atoms_in(window).iter().map(|a| a.x).filter(|&x| x > window.a));
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Eigenfunction for the `k`-th eigenvalue sampled at `xs` (which must start
/// at `window.a` and end at `window.b`), built from a left sweep and a right
/// sweep joined where their combined log-amplitude is largest.
pub fn eigenfunction(
    p: &BvPotential,
    window: Interval,
    k: usize,
    xs: &[f64],
    tols: Tolerances,
) -> Result<Eigenpair, SpectralError> {
    let lambda = eigenvalue(p, window, k, tols)?;
    eigenfunction_at(p, window, k, lambda, xs, tols)
}

/// Same as [`eigenfunction`] for an already computed eigenvalue.
pub fn eigenfunction_at(
    p: &BvPotential,
    window: Interval,
    k: usize,
    lambda: f64,
    xs: &[f64],
    tols: Tolerances,
) -> Result<Eigenpair, SpectralError> {
    let n = xs.len();
    if n < 3 || xs[0] != window.a || xs[n - 1] != window.b || xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SpectralError::Matching { k, detail: "sample grid must span the window".into() });
    }
    let prop = Propagator::new(p, lambda, tols.tol_ode)?;

    let mut left = Vec::with_capacity(n);
    prop.propagate_sampled(PrueferState::dirichlet(p, window.a), window.b, xs, |_, s| left.push(*s))?;
    let rev: Vec<f64> = xs.iter().rev().copied().collect();
    let mut right = Vec::with_capacity(n);
    prop.propagate_sampled(PrueferState::dirichlet(p, window.b), window.a, &rev, |_, s| right.push(*s))?;
    right.reverse();

    let m = (1..n - 1)
        .max_by(|&i, &j| (left[i].rho + right[i].rho).total_cmp(&(left[j].rho + right[j].rho)))
        .expect("at least one interior sample");

    // global pairs (u, u^[1]) at unit amplitude
    let unit = |s: &PrueferState| {
        let (sn, cs) = s.theta.sin_cos();
        (sn, cs - s.gauge * sn)
    };
    let (lu, lv) = unit(&left[m]);
    let (ru, rv) = unit(&right[m]);
    let rr = ru * ru + rv * rv;
    let scale = (lu * ru + lv * rv) / rr;
    let mismatch = ((lu - scale * ru).powi(2) + (lv - scale * rv).powi(2)).sqrt() / (lu * lu + lv * lv).sqrt();
    if !scale.is_finite() || scale == 0.0 {
        return Err(SpectralError::Matching { k, detail: format!("degenerate scale {scale}") });
    }

    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let (s, factor) = if i <= m {
            (&left[i], (left[i].rho - left[m].rho).exp())
        } else {
            (&right[i], scale * (right[i].rho - right[m].rho).exp())
        };
        let (su, sv) = unit(s);
        u.push(factor * su);
        v.push(factor * sv);
    }
    let u = GridFunction::new(xs.to_vec(), u).map_err(SpectralError::Measure)?;
    let v = GridFunction::new(xs.to_vec(), v).map_err(SpectralError::Measure)?;
    let norm = u.norm_sq(window)?.sqrt();
    let peak = u.values().iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    let c = peak.signum() / norm;
    Ok(Eigenpair { k, lambda, u: u.scale(c), u_quasi: v.scale(c), matching_point: xs[m], mismatch })
}

/// How the truncation window grows with the parameter `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowRule {
    /// `[center - L, center + L]`
    Symmetric { center: f64 },
    /// `[origin, origin + L]`
    HalfLine { origin: f64 },
}

impl WindowRule {
    pub fn window(&self, l: f64) -> Result<Interval, MeasureError> {
        match *self {
            WindowRule::Symmetric { center } => Interval::new(center - l, center + l),
            WindowRule::HalfLine { origin } => Interval::new(origin, origin + l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    pub l_list: Vec<f64>,
    pub k_max: usize,
    pub e_ref: f64,
    pub tols: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFailure {
    pub l: f64,
    pub k: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpectrum {
    pub l: f64,
    pub window: Interval,
    /// `λ_0..λ_kmax`, `None` where the solver failed.
    pub eigenvalues: Vec<Option<f64>>,
    /// `N(E_ref)`.
    pub count_below_ref: usize,
    /// `N(E_ref) / |window|`.
    pub count_density: f64,
    /// Mean spacing of the computed levels below `E_ref`.
    pub mean_spacing: Option<f64>,
    pub brinck_c: f64,
    pub lower_bound: f64,
    pub lower_bound_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTrend {
    pub k: usize,
    pub values: Vec<Option<f64>>,
    /// Largest increase of `λ_k` between consecutive windows (should be <= 0).
    pub max_increase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanVerdict {
    /// `N(E_ref)` stabilized over the last two windows.
    DiscreteEvidence,
    /// `N(E_ref)` keeps growing roughly in proportion to the window length.
    EssentialEvidence,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub rule: WindowRule,
    pub settings: ScanSettings,
    pub windows: Vec<WindowSpectrum>,
    pub trends: Vec<LevelTrend>,
    /// Every `λ_k(L)` is non-increasing in `L` within `10 tol_lambda`.
    pub monotone_ok: bool,
    pub lower_bound_ok: bool,
    pub verdict: ScanVerdict,
    pub failures: Vec<LevelFailure>,
    /// Verdicts from finite truncations are evidence, not proof.
    pub heuristic: bool,
}

impl SpectrumReport {
    /// Rows `(k, L, λ)` for CSV output.
    pub fn rows(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for w in &self.windows {
            for (k, lam) in w.eigenvalues.iter().enumerate() {
                if let Some(l) = lam {
                    out.push((k, w.l, *l));
                }
            }
        }
        out
    }
}

/// Eigenvalues `λ_0..λ_kmax` and `N(E_ref)` on each window of a sweep.
pub fn spectrum_scan(
    p: &BvPotential,
    rule: WindowRule,
    settings: &ScanSettings,
) -> Result<SpectrumReport, SpectralError> {
    settings.tols.check()?;
    if settings.l_list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SpectralError::Measure(MeasureError::Malformed("L list must increase".into())));
    }
    let windows: Vec<Interval> = settings.l_list.iter().map(|&l| rule.window(l)).collect::<Result<_, _>>()?;
    let tols = settings.tols;

    let jobs: Vec<(usize, usize)> =
        (0..windows.len()).flat_map(|wi| (0..=settings.k_max).map(move |k| (wi, k))).collect();
    let levels = crate::par_map(&jobs, |&(wi, k)| eigenvalue(p, windows[wi], k, tols));
    let counts = crate::par_map(&windows, |&w| -> Result<(usize, f64), SpectralError> {
        Ok((count_below(p, w, settings.e_ref, tols.tol_ode)?, window_constant(p, w)?))
    });

    let mut failures = Vec::new();
    let mut out = Vec::with_capacity(windows.len());
    for (wi, &window) in windows.iter().enumerate() {
        let (count, c) = counts[wi].clone()?;
        let mut eigenvalues = Vec::with_capacity(settings.k_max + 1);
        for k in 0..=settings.k_max {
            match &levels[wi * (settings.k_max + 1) + k] {
                Ok(l) => eigenvalues.push(Some(*l)),
                Err(e) => {
                    if matches!(e, SpectralError::LowerBoundBreach { .. }) {
                        return Err(e.clone());
                    }
                    failures.push(LevelFailure { l: settings.l_list[wi], k, message: e.to_string() });
                    eigenvalues.push(None);
                }
            }
        }
        let below: Vec<f64> = eigenvalues.iter().flatten().copied().filter(|&l| l < settings.e_ref).collect();
        let mean_spacing = (below.len() >= 2).then(|| (below[below.len() - 1] - below[0]) / (below.len() - 1) as f64);
        let lower_bound = -2.0 * c * c;
        let min_eig = eigenvalues.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        out.push(WindowSpectrum {
            l: settings.l_list[wi],
            window,
            eigenvalues,
            count_below_ref: count,
            count_density: count as f64 / window.len(),
            mean_spacing,
            brinck_c: c,
            lower_bound,
            lower_bound_ok: min_eig >= lower_bound - 1e-9,
        });
    }

    let slack = 10.0 * tols.tol_lambda;
    let trends: Vec<LevelTrend> = (0..=settings.k_max)
        .map(|k| {
            let values: Vec<Option<f64>> = out.iter().map(|w| w.eigenvalues[k]).collect();
            let max_increase = values.windows(2).filter_map(|v| Some(v[1]? - v[0]?)).fold(f64::NEG_INFINITY, f64::max);
            LevelTrend { k, values, max_increase }
        })
        .collect();
    let monotone_ok = trends.iter().all(|t| t.max_increase <= slack);
    let lower_bound_ok = out.iter().all(|w| w.lower_bound_ok);
    let verdict = scan_verdict(&out);

    Ok(SpectrumReport {
        rule,
        settings: settings.clone(),
        windows: out,
        trends,
        monotone_ok,
        lower_bound_ok,
        verdict,
        failures,
        heuristic: true,
    })
}

fn scan_verdict(windows: &[WindowSpectrum]) -> ScanVerdict {
    let n = windows.len();
    if n < 2 {
        return ScanVerdict::Inconclusive;
    }
    let counts: Vec<usize> = windows.iter().map(|w| w.count_below_ref).collect();
    if counts[n - 1] == counts[n - 2] {
        return ScanVerdict::DiscreteEvidence;
    }
    let dens: Vec<f64> = windows.iter().map(|w| w.count_density).collect();
    let mean = dens.iter().sum::<f64>() / n as f64;
    let growing = counts.windows(2).all(|c| c[1] > c[0]);
    if growing && mean > 0.0 && dens.iter().all(|d| (d - mean).abs() <= 0.1 * mean) {
        ScanVerdict::EssentialEvidence
    } else {
        ScanVerdict::Inconclusive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Atom;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn free_counts_on_zero_to_pi() {
        let p = BvPotential::zero(0.0, PI).unwrap();
        let w = iv(0.0, PI);
        assert_eq!(count_below(&p, w, 5.0, 1e-12).unwrap(), 2);
        assert_eq!(count_below(&p, w, 1.0, 1e-12).unwrap(), 0);
        assert_eq!(count_below(&p, w, 1.0 + 1e-6, 1e-12).unwrap(), 1);
        assert_eq!(count_below(&p, w, -3.0, 1e-12).unwrap(), 0);
    }

    #[test]
    fn free_eigenvalues_are_squares() {
        let p = BvPotential::zero(0.0, PI).unwrap();
        for k in 0..4 {
            let l = eigenvalue(&p, iv(0.0, PI), k, Tolerances::default()).unwrap();
            assert!((l - ((k + 1) * (k + 1)) as f64).abs() < 1e-8, "k={k}: {l}");
        }
    }

    #[test]
    fn single_well_ground_state() {
        let p = BvPotential::uniform(-20.0, 20.0, 0.0, vec![Atom { x: 0.0, w: -1.0 }]).unwrap();
        let w = iv(-20.0, 20.0);
        assert_eq!(count_below(&p, w, 0.0, 1e-12).unwrap(), 1);
        let l = eigenvalue(&p, w, 0, Tolerances::default()).unwrap();
        assert!((l + 0.25).abs() < 1e-6, "{l}");
    }

    #[test]
    fn free_ground_state_is_a_sine() {
        let p = BvPotential::zero(0.0, PI).unwrap();
        let w = iv(0.0, PI);
        let xs = sample_grid(&p, w, 401);
        let e = eigenfunction(&p, w, 0, &xs, Tolerances::default()).unwrap();
        let amp = (2.0 / PI).sqrt();
        let err = xs.iter().zip(e.u.values()).map(|(x, u)| (u - amp * x.sin()).abs()).fold(0.0, f64::max);
        // the interpolant is normalized, which differs from sin by O(h²)
        assert!(err < 1e-5, "{err}");
        assert!((e.u.norm_sq(w).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(e.u.values()[0], 0.0);
        assert!(e.u.values()[xs.len() - 1].abs() < 1e-10);
    }

    #[test]
    fn well_eigenfunction_has_kink() {
        let p = BvPotential::uniform(-20.0, 20.0, 0.0, vec![Atom { x: 0.0, w: -1.0 }]).unwrap();
        let w = iv(-20.0, 20.0);
        let xs = sample_grid(&p, w, 8001);
        let e = eigenfunction(&p, w, 0, &xs, Tolerances::default()).unwrap();
        let i0 = xs.iter().position(|&x| x == 0.0).unwrap();
        let u0 = e.u.values()[i0];
        // one-sided derivatives from the quasi-derivative: u'(0±) = u^[1] + q(0±) u
        let v0 = e.u_quasi.values()[i0];
        let jump = (v0 + p.q_right(0.0) * u0) - (v0 + p.q_left(0.0) * u0);
        assert!((jump + u0).abs() < 1e-12);
        // even
        let n = xs.len();
        assert!((e.u.values()[i0 - 100] - e.u.values()[n - 1 - (i0 - 100)]).abs() < 1e-6);
    }

    #[test]
    fn free_scan_grows_like_weyl() {
        let p = BvPotential::zero(-40.0, 40.0).unwrap();
        let settings = ScanSettings {
            l_list: vec![10.0, 20.0, 40.0],
            k_max: 2,
            e_ref: 1.0,
            tols: Tolerances { tol_lambda: 1e-9, tol_ode: 1e-11 },
        };
        let r = spectrum_scan(&p, WindowRule::Symmetric { center: 0.0 }, &settings).unwrap();
        let counts: Vec<usize> = r.windows.iter().map(|w| w.count_below_ref).collect();
        let weyl: Vec<usize> = settings.l_list.iter().map(|l| (2.0 * l / PI).floor() as usize).collect();
        assert_eq!(counts, weyl);
        assert_eq!(r.verdict, ScanVerdict::EssentialEvidence);
        assert!(r.monotone_ok && r.lower_bound_ok);
        for w in &r.windows {
            let len = 2.0 * w.l;
            let exact = (PI / len).powi(2);
            assert!((w.eigenvalues[0].unwrap() - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = BvPotential::zero(0.0, 1.0).unwrap();
        let bad = Tolerances { tol_lambda: 0.0, tol_ode: 1e-12 };
        assert_eq!(eigenvalue(&p, iv(0.0, 1.0), 0, bad), Err(SpectralError::BadTolerance));
        let xs = vec![0.0, 0.5];
        assert!(eigenfunction(&p, iv(0.0, 1.0), 0, &xs, Tolerances::default()).is_err());
    }
}
