//! Randomized checks of the mass, embedding and form inequalities on exact
//! piecewise-linear data.
//!
//! Every check returns a [`Margin`]: the slack of the inequality together
//! with the size of its dominant term. A case is a violation when the
//! normalized margin falls below `-TOLERANCE`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::criteria::{brinck_constant, sup_window_mass, CriteriaError, Endpoints};
use crate::forms::{form_lower_bound_check, FormError};
use crate::measure::{Atom, BvPotential, GridFunction, Interval, MeasureError, Scalar};

pub const TOLERANCE: f64 = 1e-10;

pub const SUITES: &[&str] = &["ganelius", "embedding", "lemma3", "corollary1", "proposition_upper", "form_bounds"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("f must be non-negative, found {0}")]
    NegativeFunction(f64),
    #[error("t = {t} must lie in (0, {len}]")]
    BadT { t: f64, len: f64 },
    #[error("h = {0} must lie in (0, 1]")]
    BadH(f64),
    #[error("interval length {0} exceeds 1")]
    TooLong(f64),
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Form(#[from] FormError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub value: f64,
    /// Magnitude of the dominant term.
    pub scale: f64,
}

impl Margin {
    fn new(value: f64, terms: &[f64]) -> Self {
        let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        Margin { value, scale }
    }

    pub fn normalized(&self) -> f64 {
        self.value / self.scale.max(1.0)
    }
}

/// `(inf f + var f) sup_K ∫_K dg - ∫_J f dg` with the sup over windows of
/// every endpoint type inside `J = [a, b)`.
pub fn check_ganelius(f: &GridFunction, g: &BvPotential, j: Interval) -> Result<Margin, LabError> {
    let inf = f.inf(Interval { a: j.a, b: j.b })?;
    if inf < 0.0 {
        return Err(LabError::NegativeFunction(inf));
    }
    let var = f.variation(j)?;
    let (sup, _) = sup_window_mass(g, j, j.len(), 1.0, Endpoints::Any { include_hi: false })?;
    let integral = g.stieltjes_integral(f, j)?;
    let bound = (inf + var) * sup;
    Ok(Margin::new(bound - integral, &[bound, integral]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMargins {
    /// `min |f|² - (‖f‖²/(2l) - l ‖f'‖²/2)`
    pub lower: Margin,
    /// `2‖f‖²/t + t ‖f'‖² - max |f|²`
    pub upper: Margin,
    /// `‖f‖²/l - inf |f|²`
    pub infimum: Margin,
}

impl EmbeddingMargins {
    pub fn worst(&self) -> f64 {
        self.lower.normalized().min(self.upper.normalized()).min(self.infimum.normalized())
    }
}

pub fn check_embedding<T: Scalar>(f: &GridFunction<T>, j: Interval, t: f64) -> Result<EmbeddingMargins, LabError> {
    let l = j.len();
    if !(t > 0.0 && t <= l) {
        return Err(LabError::BadT { t, len: l });
    }
    let norm = f.norm_sq(j)?;
    let kin = f.kinetic(j)?;
    let lo = f.inf_abs_sq(j)?;
    let hi = f.sup_abs_sq(j)?;
    let a_rhs = 0.5 * norm / l - 0.5 * l * kin;
    let b_rhs = 2.0 * norm / t + t * kin;
    Ok(EmbeddingMargins {
        lower: Margin::new(lo - a_rhs, &[lo, 0.5 * norm / l, 0.5 * l * kin]),
        upper: Margin::new(b_rhs - hi, &[b_rhs, hi]),
        infimum: Margin::new(norm / l - lo, &[norm / l, lo]),
    })
}

/// `C (2 (hl/n)⁻¹ ‖f‖² + (hl/n) ‖f'‖²)` with `n = ceil(l)`.
fn scaled_penalty<T: Scalar>(c: f64, f: &GridFunction<T>, i: Interval, h: f64) -> Result<f64, LabError> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(LabError::BadH(h));
    }
    let l = i.len();
    let n = l.ceil().max(1.0);
    let s = h * l / n;
    Ok(c * (2.0 / s * f.norm_sq(i)? + s * f.kinetic(i)?))
}

/// `∫_I |f|² dq + C (2 (hl/n)⁻¹ ‖f‖² + (hl/n) ‖f'‖²)`.
pub fn check_lemma3<T: Scalar>(p: &BvPotential, f: &GridFunction<T>, i: Interval, h: f64) -> Result<Margin, LabError> {
    let c = brinck_constant(p, 1.0)?.c;
    let penalty = scaled_penalty(c, f, i, h)?;
    let energy = p.energy(f, i)?;
    Ok(Margin::new(energy + penalty, &[energy, penalty]))
}

/// `‖u'‖² + 2C² ‖u‖² + ∫_I |u|² dq` on `I`, `|I| <= 1`.
///
/// Only guaranteed for `|I| >= 1/C`: shorter intervals can carry a whole
/// negative atom with too little `L²` mass to absorb it.
pub fn check_corollary1<T: Scalar>(p: &BvPotential, u: &GridFunction<T>, i: Interval) -> Result<Margin, LabError> {
    if i.len() > 1.0 {
        return Err(LabError::TooLong(i.len()));
    }
    let c = brinck_constant(p, 1.0)?.c;
    let kin = u.kinetic(i)?;
    let mass = 2.0 * c * c * u.norm_sq(i)?;
    let energy = p.energy(u, i)?;
    Ok(Margin::new(kin + mass + energy, &[kin, mass, energy]))
}

/// `C₁ (2 (hl/n)⁻¹ ‖u‖² + (hl/n) ‖u'‖²) - ∫_I |u|² dq` with `C₁` the constant
/// of the reflected measure.
pub fn check_proposition_upper<T: Scalar>(
    p: &BvPotential,
    u: &GridFunction<T>,
    i: Interval,
    h: f64,
) -> Result<Margin, LabError> {
    let c1 = brinck_constant(&p.negate(), 1.0)?.c;
    let penalty = scaled_penalty(c1, u, i, h)?;
    let energy = p.energy(u, i)?;
    Ok(Margin::new(penalty - energy, &[energy, penalty]))
}

/// Random potentials whose constant is at most `c_target`.
///
/// Atom weights and density values are drawn from `[-c_target, 5]`; draws
/// that break the bound are rejected, and after repeated rejections the last
/// draw is scaled down to the target. The result is always re-verified.
pub fn random_br_potential(rng: &mut impl Rng, domain: (f64, f64), c_target: f64) -> BvPotential {
    let mut last = None;
    for _ in 0..32 {
        let p = random_potential(rng, domain, -c_target, 5.0);
        let sup = brinck_constant(&p, 1.0).expect("valid potential").sup_neg;
        if sup <= c_target {
            return p;
        }
        last = Some((p, sup));
    }
    let (p, sup) = last.expect("at least one draw");
    let s = c_target / sup * (1.0 - 1e-12);
    let scaled = BvPotential::new(
        (p.lo(), p.hi()),
        p.knots().to_vec(),
        p.density_values().iter().map(|d| d * s).collect(),
        p.atoms().iter().map(|a| Atom { x: a.x, w: a.w * s }).collect(),
    )
    .expect("scaling keeps validity");
    debug_assert!(brinck_constant(&scaled, 1.0).unwrap().sup_neg <= c_target);
    scaled
}

/// Step density plus atoms with values uniform in `[w_lo, w_hi]`.
pub fn random_potential(rng: &mut impl Rng, (lo, hi): (f64, f64), w_lo: f64, w_hi: f64) -> BvPotential {
    let n_cells = rng.gen_range(1..=8);
    let mut inner: Vec<f64> = (0..n_cells - 1).map(|_| rng.gen_range(lo..hi)).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    let mut knots = vec![lo];
    knots.extend(inner.into_iter().filter(|&x| x > lo && x < hi));
    knots.push(hi);
    let density: Vec<f64> =
        (0..knots.len() - 1).map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(w_lo..w_hi) }).collect();
    let n_atoms = rng.gen_range(0..=8);
    let mut atoms: Vec<Atom> = (0..n_atoms)
        .map(|_| {
            // some atoms sit on knots
            let x = if rng.gen_bool(0.2) && knots.len() > 2 {
                knots[rng.gen_range(1..knots.len() - 1)]
            } else {
                rng.gen_range(lo..hi)
            };
            Atom { x, w: rng.gen_range(w_lo..w_hi) }
        })
        .filter(|a| a.w != 0.0 && a.x > lo)
        .collect();
    atoms.sort_by(|a, b| a.x.total_cmp(&b.x));
    atoms.dedup_by(|a, b| a.x == b.x);
    BvPotential::new((lo, hi), knots, density, atoms).expect("generated potential is valid")
}

/// Random piecewise-linear function on `[a, b]`. Half the time the grid also
/// contains the atoms of `p` inside the interval.
fn random_function(
    rng: &mut impl Rng,
    j: Interval,
    p: Option<&BvPotential>,
    complex: bool,
    nonneg: bool,
    vanish_at_ends: bool,
) -> GridFunction<Complex64> {
    let n = rng.gen_range(0..=20);
    let mut grid: Vec<f64> = (0..n).map(|_| rng.gen_range(j.a..j.b)).collect();
    if let Some(p) = p {
        if rng.gen_bool(0.5) {
            grid.extend(p.atoms_in(j).iter().map(|a| a.x));
        }
    }
    grid.push(j.a);
    grid.push(j.b);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let last = grid.len() - 1;
    let amp = if rng.gen_bool(0.2) { 10.0 } else { 2.0 };
    let values = (0..grid.len())
        .map(|i| {
            if vanish_at_ends && (i == 0 || i == last) {
                return Complex64::new(0.0, 0.0);
            }
            let re = if nonneg { rng.gen_range(0.0..amp) } else { rng.gen_range(-amp..amp) };
            let im = if complex { rng.gen_range(-amp..amp) } else { 0.0 };
            Complex64::new(re, im)
        })
        .collect();
    GridFunction::new(grid, values).expect("generated grid is valid")
}

fn random_subinterval(rng: &mut impl Rng, outer: Interval, min_len: f64, max_len: f64) -> Interval {
    let max_len = max_len.min(outer.len());
    let len = if min_len >= max_len { max_len } else { rng.gen_range(min_len..=max_len) };
    let a = if outer.len() - len > 0.0 { rng.gen_range(outer.a..=outer.b - len) } else { outer.a };
    let mut b = (a + len).min(outer.b);
    while b - a > max_len {
        b = b.next_down();
    }
    Interval { a, b }
}

fn unit_h(rng: &mut impl Rng) -> f64 {
    1.0 - rng.gen::<f64>()
}

fn real_part(f: &GridFunction<Complex64>) -> GridFunction {
    f.map(|z| z.re)
}

/// Hex digest of a list of float slices.
fn digest_floats(parts: &[&[f64]]) -> String {
    let mut h = Sha256::new();
    for part in parts {
        h.update((part.len() as u64).to_le_bytes());
        for x in *part {
            h.update(x.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn potential_floats(p: &BvPotential) -> Vec<f64> {
    let mut v = vec![p.lo(), p.hi()];
    v.extend_from_slice(p.knots());
    v.extend_from_slice(p.density_values());
    for a in p.atoms() {
        v.push(a.x);
        v.push(a.w);
    }
    v
}

fn function_floats(f: &GridFunction<Complex64>) -> Vec<f64> {
    let mut v = f.grid().to_vec();
    for z in f.values() {
        v.push(z.re);
        v.push(z.im);
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub case: u64,
    pub inputs_digest: String,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub n_cases: u64,
    pub tolerance: f64,
    pub violations: Vec<Violation>,
    /// Smallest normalized margin over all cases.
    pub worst_margin: f64,
    pub worst_case: Option<u64>,
    /// Digest of every case's inputs and margin, in case order.
    pub digest: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

struct CaseOutcome {
    margin: f64,
    inputs_digest: String,
}

fn run_case(suite: &str, rng: &mut ChaCha8Rng) -> Result<CaseOutcome, LabError> {
    let len = rng.gen_range(1.0..6.0);
    let lo = rng.gen_range(-3.0..3.0);
    let domain = Interval::new(lo, lo + len)?;
    let complex = rng.gen_bool(0.5);
    let c_target = rng.gen_range(0.5..6.0);
    match suite {
        "ganelius" => {
            // any BV g; f >= 0
            let g = random_potential(rng, (domain.a, domain.b), -5.0, 5.0);
            let j = random_subinterval(rng, domain, 0.01, len);
            let f = real_part(&random_function(rng, j, Some(&g), false, true, false));
            let m = check_ganelius(&f, &g, j)?;
            let d = digest_floats(&[&potential_floats(&g), &function_floats(&f.to_complex()), &[j.a, j.b]]);
            Ok(CaseOutcome { margin: m.normalized(), inputs_digest: d })
        }
        "embedding" => {
            let j = random_subinterval(rng, domain, 0.01, len);
            let f = random_function(rng, j, None, complex, false, false);
            let t = j.len() * unit_h(rng);
            let m = check_embedding(&f, j, t)?;
            let d = digest_floats(&[&function_floats(&f), &[j.a, j.b, t]]);
            Ok(CaseOutcome { margin: m.worst(), inputs_digest: d })
        }
        "lemma3" => {
            let p = random_br_potential(rng, (domain.a, domain.b), c_target);
            let i = random_subinterval(rng, domain, 0.01, len);
            let f = random_function(rng, i, Some(&p), complex, false, false);
            let h = unit_h(rng);
            let m = check_lemma3(&p, &f, i, h)?;
            let d = digest_floats(&[&potential_floats(&p), &function_floats(&f), &[i.a, i.b, h]]);
            Ok(CaseOutcome { margin: m.normalized(), inputs_digest: d })
        }
        "corollary1" => {
            let p = random_br_potential(rng, (domain.a, domain.b), c_target);
            let c = brinck_constant(&p, 1.0)?.c;
            // the inequality is only guaranteed for 1/C <= |I| <= 1
            let i = random_subinterval(rng, domain, 1.0 / c, 1.0);
            let f = random_function(rng, i, Some(&p), complex, false, false);
            let m = check_corollary1(&p, &f, i)?;
            let d = digest_floats(&[&potential_floats(&p), &function_floats(&f), &[i.a, i.b]]);
            Ok(CaseOutcome { margin: m.normalized(), inputs_digest: d })
        }
        "proposition_upper" => {
            let p = random_br_potential(rng, (domain.a, domain.b), c_target).negate();
            let i = random_subinterval(rng, domain, 0.01, len);
            let f = random_function(rng, i, Some(&p), complex, false, false);
            let h = unit_h(rng);
            let m = check_proposition_upper(&p, &f, i, h)?;
            let d = digest_floats(&[&potential_floats(&p), &function_floats(&f), &[i.a, i.b, h]]);
            Ok(CaseOutcome { margin: m.normalized(), inputs_digest: d })
        }
        "form_bounds" => {
            let p = random_br_potential(rng, (domain.a, domain.b), c_target);
            let c = brinck_constant(&p, 1.0)?.c;
            let support = random_subinterval(rng, domain, 0.01, len);
            let u = real_part(&random_function(rng, support, Some(&p), false, false, true));
            let h = unit_h(rng);
            let fb = form_lower_bound_check(&p, &u, h)?;
            // diagonal bound t[u] >= -2C² ‖u‖²
            let mass = 2.0 * c * c * fb.norm_sq;
            let diagonal = Margin::new(fb.form_value + mass, &[fb.kinetic, fb.q, mass]);
            // unit cell positivity with an arbitrary function
            let cell = random_subinterval(rng, domain, 1.0, 1.0);
            let v = random_function(rng, cell, Some(&p), complex, false, false);
            let positivity = check_corollary1(&p, &v, cell)?;
            let margin = [fb.margin1 / fb.scale, fb.margin2 / fb.scale, diagonal.normalized(), positivity.normalized()]
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let d = digest_floats(&[
                &potential_floats(&p),
                &function_floats(&u.to_complex()),
                &function_floats(&v),
                &[h, cell.a, cell.b],
            ]);
            Ok(CaseOutcome { margin, inputs_digest: d })
        }
        other => Err(LabError::UnknownSuite(other.to_string())),
    }
}

/// Runs `n_cases` random cases of a suite. Case `i` draws from its own
/// ChaCha stream, so reports do not depend on scheduling.
pub fn run_suite(name: &str, seed: u64, n_cases: u64) -> Result<SuiteReport, LabError> {
    if !SUITES.contains(&name) {
        return Err(LabError::UnknownSuite(name.to_string()));
    }
    let cases: Vec<u64> = (0..n_cases).collect();
    let outcomes = crate::par_map(&cases, |&i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i);
        run_case(name, &mut rng)
    });
    let mut violations = Vec::new();
    let mut worst_margin = f64::INFINITY;
    let mut worst_case = None;
    let mut hasher = Sha256::new();
    hasher.update(name.as_bytes());
    for (i, out) in outcomes.into_iter().enumerate() {
        let out = out?;
        let i = i as u64;
        hasher.update(out.inputs_digest.as_bytes());
        hasher.update(out.margin.to_le_bytes());
        if out.margin < worst_margin || out.margin.is_nan() {
            worst_margin = out.margin;
            worst_case = Some(i);
        }
        if !(out.margin >= -TOLERANCE) {
            violations.push(Violation { case: i, inputs_digest: out.inputs_digest, margin: out.margin });
        }
    }
    Ok(SuiteReport {
        suite: name.to_string(),
        seed,
        n_cases,
        tolerance: TOLERANCE,
        violations,
        worst_margin,
        worst_case,
        digest: hex::encode(hasher.finalize()),
    })
}
