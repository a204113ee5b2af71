//! Prüfer propagation of the quasi-derivative system.
//!
//! With `v = u^[1] = u' - q u` the equation `-u'' + q' u = λ u` becomes the
//! first-order system
//!
//! ```text
//! u' = v + q u
//! v' = -q v - (q² + λ) u
//! ```
//!
//! whose coefficients only involve `q`, never `q'`. Both `u` and `v` are
//! continuous across atoms, so atoms need no jump conditions: integration
//! simply restarts at every breakpoint with the new one-sided value of `q`.
//!
//! In polar form `u = e^ρ sin θ`, `v = e^ρ cos θ`:
//!
//! ```text
//! θ' = (cos θ + q sin θ)² + λ sin² θ
//! ρ' = (1 - λ - q²) sin θ cos θ - q (cos² θ - sin² θ)
//! ```
//!
//! Since `q` is only defined up to a constant, the state carries a gauge `g`
//! and uses `q - g` in place of `q`. The gauge is re-based at segment
//! midpoints (never at atoms) so that `|q - g|` stays of order one; a gauge
//! change is a shear `(u, v) -> (u, v + Δg u)` which keeps `θ` in the same
//! band `[kπ, (k+1)π)`, so zero counting is unaffected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::{BvPotential, GridFunction, MeasureError, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error("non-finite Prüfer state at x = {x}")]
    NonFinite { x: f64 },
    #[error("step size underflow at x = {x}")]
    StepUnderflow { x: f64 },
    #[error("sample positions must be strictly monotone in the direction of travel")]
    NotMonotone,
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Prüfer coordinates of `(u, v)` where `v = u' - (q - gauge) u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrueferState {
    pub theta: f64,
    pub rho: f64,
    pub position: f64,
    pub gauge: f64,
}

impl PrueferState {
    /// `u = 0`, `u^[1] = 1` at `x` (a Dirichlet end).
    pub fn dirichlet(p: &BvPotential, x: f64) -> Self {
        Self::with_angle(p, x, 0.0)
    }

    /// State with angle `theta` and unit amplitude, gauged so that the
    /// represented pair is `(sin θ, cos θ) = (u, u^[1] + q(x-) u)`.
    pub fn with_angle(p: &BvPotential, x: f64, theta: f64) -> Self {
        Self { theta, rho: 0.0, position: x, gauge: p.q_left(x) }
    }

    /// State representing `(u, u^[1])` at `x`.
    pub fn from_pair(x: f64, u: f64, quasi: f64, gauge: f64) -> Self {
        let v = quasi + gauge * u;
        Self { theta: u.atan2(v), rho: 0.5 * (u * u + v * v).ln(), position: x, gauge }
    }

    pub fn u(&self) -> f64 {
        self.rho.exp() * self.theta.sin()
    }

    /// Global quasi-derivative `u^[1] = u' - q u`.
    pub fn quasi(&self) -> f64 {
        self.rho.exp() * self.theta.cos() - self.gauge * self.u()
    }

    /// One-sided classical derivative `u'(x±) = u^[1] + q(x±) u`.
    pub fn derivative(&self, p: &BvPotential, side: Side) -> f64 {
        let q = match side {
            Side::Left => p.q_left(self.position),
            Side::Right => p.q_right(self.position),
        };
        self.quasi() + q * self.u()
    }

    /// Same `(u, u^[1])` expressed in another gauge.
    pub fn regauge(&self, gauge: f64) -> Self {
        let shift = gauge - self.gauge;
        if shift == 0.0 {
            return *self;
        }
        let band = (self.theta / std::f64::consts::PI).floor();
        let phi = self.theta - band * std::f64::consts::PI;
        let (s, c) = phi.sin_cos();
        let c_new = c + shift * s;
        let phi_new = s.atan2(c_new);
        Self {
            theta: band * std::f64::consts::PI + phi_new,
            rho: self.rho + 0.5 * (s * s + c_new * c_new).ln(),
            position: self.position,
            gauge,
        }
    }
}

// Dormand–Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Steps that carry θ across a multiple of π must meet this fraction of
/// the tolerance.
const BARRIER_FACTOR: f64 = 0.1;
/// Largest `|q - gauge|` tolerated before the gauge is re-based.
const GAUGE_SLACK: f64 = 1.0;
const MAX_STEPS: usize = 50_000_000;

/// Affine `q - gauge` on one smooth piece.
#[derive(Clone, Copy)]
struct Coeff {
    q_ref: f64,
    x_ref: f64,
    slope: f64,
    lambda: f64,
}

impl Coeff {
    fn q(&self, x: f64) -> f64 {
        self.q_ref + self.slope * (x - self.x_ref)
    }

    fn rhs(&self, x: f64, theta: f64) -> [f64; 2] {
        let q = self.q(x);
        let (s, c) = theta.sin_cos();
        let a = c + q * s;
        [a * a + self.lambda * s * s, (1.0 - self.lambda - q * q) * s * c - q * (c * c - s * s)]
    }
}

/// Adaptive Prüfer integrator for a fixed potential and spectral parameter.
#[derive(Debug, Clone)]
pub struct Propagator<'a> {
    p: &'a BvPotential,
    lambda: f64,
    tol: f64,
    breakpoints: Vec<f64>,
}

impl<'a> Propagator<'a> {
    pub fn new(p: &'a BvPotential, lambda: f64, tol: f64) -> Result<Self, OdeError> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(OdeError::BadTolerance(tol));
        }
        if !lambda.is_finite() {
            return Err(OdeError::NonFinite { x: f64::NAN });
        }
        Ok(Self { p, lambda, tol, breakpoints: p.breakpoints() })
    }

    pub fn potential(&self) -> &BvPotential {
        self.p
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Carries `state` to `to`.
    pub fn propagate(&self, state: PrueferState, to: f64) -> Result<PrueferState, OdeError> {
        self.propagate_sampled(state, to, &[], |_, _| {})
    }

    /// Carries `state` to `to`, calling `visit(i, state)` at each `samples[i]`.
    /// Samples must be ordered in the direction of travel and lie between the
    /// start and `to` (inclusive).
    pub fn propagate_sampled(
        &self,
        state: PrueferState,
        to: f64,
        samples: &[f64],
        mut visit: impl FnMut(usize, &PrueferState),
    ) -> Result<PrueferState, OdeError> {
        let from = state.position;
        let dom = self.p.domain();
        for x in [from, to] {
            if !(dom.a <= x && x <= dom.b) {
                return Err(MeasureError::OutsideDomain { x, lo: dom.a, hi: dom.b }.into());
            }
        }
        let forward = to >= from;
        let dir = if forward { 1.0 } else { -1.0 };
        let ahead = |x: f64, y: f64| dir * (y - x) > 0.0;
        if samples.windows(2).any(|w| !ahead(w[0], w[1])) || samples.iter().any(|&s| ahead(to, s) || ahead(s, from)) {
            return Err(OdeError::NotMonotone);
        }

        // breakpoints strictly between from and to, in travel order
        let (lo, hi) = if forward { (from, to) } else { (to, from) };
        let i0 = self.breakpoints.partition_point(|&b| b <= lo);
        let i1 = self.breakpoints.partition_point(|&b| b < hi);
        let mut bps: Vec<f64> = self.breakpoints[i0..i1.max(i0)].to_vec();
        if !forward {
            bps.reverse();
        }

        let mut st = state;
        let mut hint = 0.05 * dir;
        let mut bi = 0usize;
        let mut si = 0usize;
        loop {
            // samples already reached
            while si < samples.len() && !ahead(st.position, samples[si]) {
                visit(si, &st);
                si += 1;
            }
            let next_bp = bps.get(bi).copied().unwrap_or(to);
            let next_sample = samples.get(si).copied().unwrap_or(to);
            let target = if ahead(next_sample, next_bp) { next_sample } else { next_bp };
            if !ahead(st.position, target) {
                break;
            }
            st = self.cross_piece(st, target, &mut hint)?;
            if bi < bps.len() && !ahead(st.position, bps[bi]) {
                bi += 1;
            }
        }
        while si < samples.len() {
            visit(si, &st);
            si += 1;
        }
        Ok(st)
    }

    /// Integrates over a piece containing no breakpoint in its interior.
    fn cross_piece(&self, st: PrueferState, target: f64, hint: &mut f64) -> Result<PrueferState, OdeError> {
        let a = st.position;
        let forward = target > a;
        let mid = 0.5 * (a + target);
        let slope = self.p.density_at(mid);
        let q_in = if forward { self.p.q_right(a) } else { self.p.q_left(a) };
        let q_of = |x: f64| q_in + slope * (x - a);

        let max_len = 0.5 / slope.abs().max(1.0);
        let n_chunks = ((target - a).abs() / max_len).ceil().max(1.0) as usize;
        let mut st = st;
        for i in 0..n_chunks {
            let c0 = st.position;
            let c1 = if i + 1 == n_chunks { target } else { a + (target - a) * (i + 1) as f64 / n_chunks as f64 };
            if (q_of(c0) - st.gauge).abs() > GAUGE_SLACK || (q_of(c1) - st.gauge).abs() > GAUGE_SLACK {
                let m = 0.5 * (c0 + c1);
                st = self.integrate(st, m, q_in, a, slope, hint)?;
                st = st.regauge(q_of(m));
            }
            st = self.integrate(st, c1, q_in, a, slope, hint)?;
        }
        Ok(st)
    }

    fn integrate(
        &self,
        st: PrueferState,
        x_end: f64,
        q_in: f64,
        x_ref: f64,
        slope: f64,
        hint: &mut f64,
    ) -> Result<PrueferState, OdeError> {
        let coeff = Coeff { q_ref: q_in - st.gauge, x_ref, slope, lambda: self.lambda };
        let span = x_end - st.position;
        if span == 0.0 {
            return Ok(st);
        }
        let dir = span.signum();
        let mut x = st.position;
        let mut y = [st.theta, st.rho];
        let mut h = if hint.signum() == dir { *hint } else { -*hint };
        let mut k1 = coeff.rhs(x, y[0]);
        let mut steps = 0usize;
        while dir * (x_end - x) > 0.0 {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(OdeError::StepUnderflow { x });
            }
            let remaining = x_end - x;
            let last = h.abs() >= remaining.abs();
            if last {
                h = remaining;
            }
            if h.abs() < 1e-14 * x.abs().max(1.0) && !last {
                return Err(OdeError::StepUnderflow { x });
            }
            let (y5, k7, err) = dopri_step(&coeff, x, y, k1, h);
            if !(y5[0].is_finite() && y5[1].is_finite() && err.is_finite()) {
                return Err(OdeError::NonFinite { x });
            }
            let mut scaled = err / self.tol;
            let crossed = (y5[0] / std::f64::consts::PI).floor() != (y[0] / std::f64::consts::PI).floor();
            if crossed {
                scaled /= BARRIER_FACTOR;
            }
            let factor = if scaled == 0.0 { 5.0 } else { (0.9 * scaled.powf(-0.2)).clamp(0.2, 5.0) };
            if scaled <= 1.0 {
                x = if last { x_end } else { x + h };
                y = y5;
                k1 = k7;
                if !last {
                    h *= factor;
                    *hint = h;
                }
            } else {
                h *= factor.min(0.9);
                if h.abs() < 1e-14 * x.abs().max(1.0) {
                    return Err(OdeError::StepUnderflow { x });
                }
            }
        }
        Ok(PrueferState { theta: y[0], rho: y[1], position: x_end, gauge: st.gauge })
    }
}

fn dopri_step(c: &Coeff, x: f64, y: [f64; 2], k1: [f64; 2], h: f64) -> ([f64; 2], [f64; 2], f64) {
    let stage = |coef: &[(f64, &[f64; 2])]| {
        let mut out = y;
        for (a, k) in coef {
            out[0] += h * a * k[0];
            out[1] += h * a * k[1];
        }
        out
    };
    let k2 = c.rhs(x + C2 * h, stage(&[(A21, &k1)])[0]);
    let k3 = c.rhs(x + C3 * h, stage(&[(A31, &k1), (A32, &k2)])[0]);
    let k4 = c.rhs(x + C4 * h, stage(&[(A41, &k1), (A42, &k2), (A43, &k3)])[0]);
    let k5 = c.rhs(x + C5 * h, stage(&[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)])[0]);
    let k6 = c.rhs(x + h, stage(&[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)])[0]);
    let y5 = stage(&[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = c.rhs(x + h, y5[0]);
    let mut err: f64 = 0.0;
    for i in 0..2 {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        err = err.max(e.abs());
    }
    (y5, k7, err)
}

/// Carries `state` (which must sit at `from`) to `to` for spectral parameter
/// `lambda` with local error tolerance `tol`.
pub fn propagate(
    p: &BvPotential,
    lambda: f64,
    from: f64,
    to: f64,
    state: PrueferState,
    tol: f64,
) -> Result<PrueferState, OdeError> {
    let state = PrueferState { position: from, ..state };
    Propagator::new(p, lambda, tol)?.propagate(state, to)
}

/// Samples the solution started at `xs[0]` with angle `theta0` (unit
/// amplitude in the local gauge) at the increasing positions `xs`.
///
/// Returns `(u, u^[1])` scaled by one common factor so that the largest
/// amplitude is of order one.
pub fn solution_at(
    p: &BvPotential,
    lambda: f64,
    theta0: f64,
    xs: &[f64],
    tol: f64,
) -> Result<(GridFunction, GridFunction), OdeError> {
    if xs.len() < 2 || xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(OdeError::NotMonotone);
    }
    let prop = Propagator::new(p, lambda, tol)?;
    let start = PrueferState::with_angle(p, xs[0], theta0);
    let mut states = Vec::with_capacity(xs.len());
    prop.propagate_sampled(start, xs[xs.len() - 1], xs, |_, s| states.push(*s))?;
    Ok(states_to_pair(xs, &states))
}

pub(crate) fn states_to_pair(xs: &[f64], states: &[PrueferState]) -> (GridFunction, GridFunction) {
    let rho_max = states.iter().map(|s| s.rho).fold(f64::NEG_INFINITY, f64::max);
    let mut u = Vec::with_capacity(states.len());
    let mut v = Vec::with_capacity(states.len());
    for s in states {
        let scaled = PrueferState { rho: s.rho - rho_max, ..*s };
        u.push(scaled.u());
        v.push(scaled.quasi());
    }
    (
        GridFunction::new(xs.to_vec(), u).expect("valid samples"),
        GridFunction::new(xs.to_vec(), v).expect("valid samples"),
    )
}
