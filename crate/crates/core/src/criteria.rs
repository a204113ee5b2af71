//! The lower-boundedness constant of a measure and the window profile that
//! governs discreteness of the spectrum.
//!
//! For a window `K` from `c` to `d` the signed mass is piecewise linear in
//! `(c, d)` between breakpoints, so its supremum over all windows of length
//! at most `cap` is attained at a vertex of the arrangement: both ends at
//! breakpoints, or one end at a breakpoint and the other at distance `cap`.
//! Atoms on a window end may be in or out, which is resolved per endpoint.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::{BvPotential, Interval, MeasureError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriteriaError {
    #[error("window cap must be positive, got {0}")]
    BadCap(f64),
    #[error("Brinck constant must be at least 2, got {0}")]
    ConstantBelowTwo(f64),
    #[error("window length {h} must lie in (0, {len}]")]
    BadWindow { h: f64, len: f64 },
    #[error("need at least two window starts")]
    TooFewStarts,
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// A window together with whether atoms on its ends are counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub a: f64,
    pub b: f64,
    pub include_a: bool,
    pub include_b: bool,
}

impl Witness {
    /// Mass of the window with its endpoint convention applied.
    pub fn mass(&self, p: &BvPotential) -> f64 {
        let start = if self.include_a { p.q_left(self.a) } else { p.q_right(self.a) };
        let end = if self.include_b { p.q_right(self.b) } else { p.q_left(self.b) };
        end - start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrinckReport {
    /// `sup -∫_J dq` over windows `|J| <= cap` of every endpoint type.
    pub sup_neg: f64,
    /// Same supremum restricted to half-open windows `[a, b)`.
    pub sup_neg_half_open: f64,
    /// `max(2, sup_neg)`.
    pub c: f64,
    pub lower_bound: f64,
    pub cap: f64,
    pub witness: Witness,
}

/// Endpoint conventions admitted when maximizing window mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoints {
    HalfOpen,
    /// Every endpoint may include or exclude its atom, except that the
    /// right end `hi` of the search range is excluded unless `include_hi`.
    Any {
        include_hi: bool,
    },
}

/// `sup sign * ∫_K dq` over windows `K ⊆ [lo, hi]` of length `<= cap`.
///
/// Degenerate windows (a single point, or empty) are admitted, so the
/// result is never negative.
pub fn sup_window_mass(
    p: &BvPotential,
    range: Interval,
    cap: f64,
    sign: f64,
    endpoints: Endpoints,
) -> Result<(f64, Witness), CriteriaError> {
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(CriteriaError::BadCap(cap));
    }
    p.measure_of(range)?;
    let (lo, hi) = (range.a, range.b);

    let g_left = |x: f64| sign * p.q_left(x);
    let g_right = |x: f64| sign * p.q_right(x);
    // smallest admissible start value and largest admissible end value. A
    // half-open window can start or end just past an atom, so it reaches the
    // same values as `Any { include_hi: false }` except that a window holding
    // atoms on both ends must be strictly shorter than `cap`.
    let include_hi = match endpoints {
        Endpoints::HalfOpen => false,
        Endpoints::Any { include_hi } => include_hi,
    };
    let start_val = |x: f64| -> (f64, bool) {
        let (gl, gr) = (g_left(x), g_right(x));
        if gl <= gr {
            (gl, true)
        } else {
            (gr, false)
        }
    };
    let end_val = |x: f64| -> (f64, bool) {
        let (gl, gr) = (g_left(x), g_right(x));
        if gr > gl && (x < hi || include_hi) {
            (gr, true)
        } else {
            (gl, false)
        }
    };
    let strict = endpoints == Endpoints::HalfOpen;

    let mut best = 0.0;
    let mut witness = Witness { a: lo, b: lo, include_a: false, include_b: false };

    for atom in p.atoms() {
        let inside = lo <= atom.x && (atom.x < hi || (include_hi && atom.x <= hi));
        if inside && sign * atom.w > best {
            best = sign * atom.w;
            witness = Witness { a: atom.x, b: atom.x, include_a: true, include_b: true };
        }
    }

    let bps: Vec<f64> = {
        let mut v: Vec<f64> = p.breakpoints().into_iter().filter(|&x| lo <= x && x <= hi).collect();
        v.push(lo);
        v.push(hi);
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let end_vals: Vec<(f64, bool)> = bps.iter().map(|&x| end_val(x)).collect();

    let mut starts: Vec<f64> = bps.iter().copied().chain(bps.iter().map(|&x| x - cap).filter(|&x| x > lo)).collect();
    starts.sort_by(f64::total_cmp);
    starts.dedup();

    // monotone deque of indices into bps holding the max of end values over
    // breakpoints in (c, c + cap], or (c, c + cap) when strict
    let mut deque: VecDeque<usize> = VecDeque::new();
    let mut next = 0usize;
    for &c in &starts {
        if c >= hi {
            break;
        }
        let reach = (c + cap).min(hi);
        while next < bps.len() && (bps[next] < reach || (!strict && bps[next] == reach)) {
            while let Some(&back) = deque.back() {
                if end_vals[back].0 <= end_vals[next].0 {
                    deque.pop_back();
                } else {
                    break;
                }
            }
            deque.push_back(next);
            next += 1;
        }
        while let Some(&front) = deque.front() {
            if bps[front] <= c {
                deque.pop_front();
            } else {
                break;
            }
        }
        let (s, include_a) = start_val(c);
        let mut consider = |b: f64, (e, include_b): (f64, bool)| {
            if e - s > best {
                best = e - s;
                witness = Witness { a: c, b, include_a, include_b };
            }
        };
        if let Some(&front) = deque.front() {
            consider(bps[front], end_vals[front]);
        }
        let (e, include_b) = end_val(reach);
        if strict && include_a && include_b && reach - c >= cap {
            // both end atoms do not fit; drop one of them
            consider(reach, (g_left(reach), false));
            let gr = g_right(c);
            if e - gr > best {
                best = e - gr;
                witness = Witness { a: c, b: reach, include_a: false, include_b: true };
            }
        } else {
            consider(reach, (e, include_b));
        }
    }
    Ok((best, witness))
}

/// Computes the constant `C` of the uniform lower mass bound over windows of
/// length at most `cap`, clamped to `C >= 2`, and the resulting form bound
/// `-2C²`.
pub fn brinck_constant(p: &BvPotential, cap: f64) -> Result<BrinckReport, CriteriaError> {
    let domain = p.domain();
    let (sup_neg, witness) = sup_window_mass(p, domain, cap, -1.0, Endpoints::Any { include_hi: true })?;
    let (sup_neg_half_open, _) = sup_window_mass(p, domain, cap, -1.0, Endpoints::HalfOpen)?;
    let c = sup_neg.max(2.0);
    Ok(BrinckReport { sup_neg, sup_neg_half_open, c, lower_bound: -2.0 * c * c, cap, witness })
}

/// `-2C²`, the guaranteed lower bound of the operator.
pub fn lower_bound_estimate(c: f64) -> Result<f64, CriteriaError> {
    if !(c >= 2.0) {
        return Err(CriteriaError::ConstantBelowTwo(c));
    }
    Ok(-2.0 * c * c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolchanovProfile {
    pub h: f64,
    /// Window starts `a`, ascending.
    pub starts: Vec<f64>,
    /// `∫_[a, a+h) dq` per start.
    pub window_integrals: Vec<f64>,
    /// Distinct values of `|a|`, ascending.
    pub radii: Vec<f64>,
    /// `inf { window_integrals(a) : |a| >= radii[i] }`.
    pub running_inf: Vec<f64>,
}

impl MolchanovProfile {
    /// Running infimum at an arbitrary radius.
    pub fn running_inf_at(&self, radius: f64) -> f64 {
        let i = self.radii.partition_point(|&r| r < radius);
        self.running_inf.get(i).copied().unwrap_or(f64::INFINITY)
    }
}

/// Window masses `∫_[a, a+h) dq` over a uniform grid of starts merged with
/// every breakpoint and every breakpoint minus `h`.
pub fn molchanov_profile(p: &BvPotential, h: f64, n_starts: usize) -> Result<MolchanovProfile, CriteriaError> {
    let (lo, hi) = (p.lo(), p.hi());
    if !(h > 0.0 && h <= hi - lo) {
        return Err(CriteriaError::BadWindow { h, len: hi - lo });
    }
    if n_starts < 2 {
        return Err(CriteriaError::TooFewStarts);
    }
    let last = hi - h;
    let mut starts: Vec<f64> = (0..n_starts).map(|i| lo + (last - lo) * i as f64 / (n_starts - 1) as f64).collect();
    for b in p.breakpoints() {
        starts.push(b);
        starts.push(b - h);
    }
    starts.retain(|&a| lo <= a && a <= last);
    starts.sort_by(f64::total_cmp);
    starts.dedup();

    let window_integrals: Vec<f64> = starts.iter().map(|&a| p.q_left((a + h).min(hi)) - p.q_left(a)).collect();

    let mut by_radius: Vec<(f64, f64)> = starts.iter().zip(&window_integrals).map(|(&a, &m)| (a.abs(), m)).collect();
    by_radius.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut radii: Vec<f64> = Vec::new();
    let mut running_inf: Vec<f64> = Vec::new();
    let mut acc = f64::INFINITY;
    for &(r, m) in by_radius.iter().rev() {
        acc = acc.min(m);
        if radii.last() == Some(&r) {
            *running_inf.last_mut().unwrap() = acc;
        } else {
            radii.push(r);
            running_inf.push(acc);
        }
    }
    radii.reverse();
    running_inf.reverse();

    Ok(MolchanovProfile { h, starts, window_integrals, radii, running_inf })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    DiscreteEvidence,
    EssentialEvidence,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    /// Infimum of window masses over the middle band of radii.
    pub inner_inf: f64,
    /// Running infimum at the start of the outer band.
    pub outer_inf: f64,
    /// Range of the running infimum over radii below the outer band.
    pub spread: f64,
    /// Always true: a finite profile only gives evidence about a limit at infinity.
    pub heuristic: bool,
}

/// Reads a window profile as evidence for or against discreteness.
///
/// The outer band is the last `edge_fraction` of radii. Growth means the
/// running infimum there is positive, above the inner band, and at least
/// `growth_factor` times the inner infimum. Boundedness means the running
/// infimum stays within 10% over all radii below the outer band.
pub fn classify_discreteness(profile: &MolchanovProfile, growth_factor: f64, edge_fraction: f64) -> Classification {
    let r_max = profile.radii.last().copied().unwrap_or(0.0);
    let split = (1.0 - edge_fraction) * r_max;
    let inner_lo = edge_fraction * r_max;

    let inner_inf = profile
        .starts
        .iter()
        .zip(&profile.window_integrals)
        .filter(|(a, _)| a.abs() >= inner_lo && a.abs() < split)
        .map(|(_, &m)| m)
        .fold(f64::INFINITY, f64::min);
    let outer_inf = profile.running_inf_at(split);

    let below: Vec<f64> =
        profile.radii.iter().zip(&profile.running_inf).filter(|(r, _)| **r <= split).map(|(_, &m)| m).collect();
    let (min, max) = below.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &m| (lo.min(m), hi.max(m)));
    let spread = if below.is_empty() { 0.0 } else { max - min };
    let scale = min.abs().max(max.abs());

    let growing =
        outer_inf > 0.0 && inner_inf.is_finite() && outer_inf > inner_inf && outer_inf >= growth_factor * inner_inf;
    let bounded = spread <= 0.1 * scale || spread <= 1e-12;

    let verdict = if growing {
        Verdict::DiscreteEvidence
    } else if bounded {
        Verdict::EssentialEvidence
    } else {
        Verdict::Inconclusive
    };
    Classification { verdict, inner_inf, outer_inf, spread, heuristic: true }
}
