//! Signed Radon measures `dq` on a bounded working domain.
//!
//! A potential is stored as a piecewise-constant density (the absolutely
//! continuous part of `q'`) plus finitely many point atoms. The primitive `q`
//! is normalized to be left-continuous with `q(lo) = 0`, so the measure of a
//! half-open interval `[a, b)` is `q(b) - q(a)` and contains an atom sitting at
//! `a` but not one sitting at `b`.

mod grid;
mod spec;

pub use grid::{GridFunction, Scalar};
pub use spec::{AlphaRule, DensitySegment, GeneratorSpec, PotentialSpec, SpecAtom};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("interval [{a}, {b}) is empty or not finite")]
    BadInterval { a: f64, b: f64 },
    #[error("position {x} lies outside the domain [{lo}, {hi}]")]
    OutsideDomain { x: f64, lo: f64, hi: f64 },
    #[error("interval [{a}, {b}) is not covered by the grid span [{lo}, {hi}]")]
    OutsideGrid { a: f64, b: f64, lo: f64, hi: f64 },
    #[error("density knots must be strictly increasing from lo to hi")]
    UnsortedKnots,
    #[error("atom at {x} must lie strictly inside the domain")]
    AtomOutsideDomain { x: f64 },
    #[error("atom at {x} has zero weight")]
    ZeroWeightAtom { x: f64 },
    #[error("atom positions must be strictly increasing")]
    UnsortedAtoms,
    #[error("grid function needs at least two strictly increasing points with finite values")]
    BadGrid,
    #[error("malformed potential spec: {0}")]
    Malformed(String),
}

/// Half-open interval `[a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self, MeasureError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(MeasureError::BadInterval { a, b });
        }
        Ok(Self { a, b })
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a <= x && x < self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub w: f64,
}

/// Which one-sided limit of `q` to take at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// The measure `dq = q'_ac dx + sum_j w_j delta(x - x_j)` on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BvPotential {
    lo: f64,
    hi: f64,
    knots: Vec<f64>,
    density: Vec<f64>,
    atoms: Vec<Atom>,
    // AC part of q at each knot, |q'_ac| primitive at each knot
    knot_q: Vec<f64>,
    knot_var: Vec<f64>,
    // partial sums of weights / |weights| over atoms[..i]
    atom_cum: Vec<f64>,
    atom_abs_cum: Vec<f64>,
}

impl BvPotential {
    pub fn new(domain: (f64, f64), knots: Vec<f64>, density: Vec<f64>, atoms: Vec<Atom>) -> Result<Self, MeasureError> {
        let (lo, hi) = domain;
        Interval::new(lo, hi)?;
        if knots.len() < 2 || density.len() + 1 != knots.len() {
            return Err(MeasureError::Malformed(format!(
                "{} knots need {} density values, got {}",
                knots.len(),
                knots.len().saturating_sub(1),
                density.len()
            )));
        }
        if knots[0] != lo || knots[knots.len() - 1] != hi || knots.windows(2).any(|k| !(k[0] < k[1])) {
            return Err(MeasureError::UnsortedKnots);
        }
        if density.iter().any(|d| !d.is_finite()) {
            return Err(MeasureError::Malformed("non-finite density".into()));
        }
        for atom in &atoms {
            if !atom.w.is_finite() || !atom.x.is_finite() {
                return Err(MeasureError::Malformed("non-finite atom".into()));
            }
            if !(lo < atom.x && atom.x < hi) {
                return Err(MeasureError::AtomOutsideDomain { x: atom.x });
            }
            if atom.w == 0.0 {
                return Err(MeasureError::ZeroWeightAtom { x: atom.x });
            }
        }
        if atoms.windows(2).any(|p| !(p[0].x < p[1].x)) {
            return Err(MeasureError::UnsortedAtoms);
        }

        let mut knot_q = Vec::with_capacity(knots.len());
        let mut knot_var = Vec::with_capacity(knots.len());
        let (mut acc, mut var) = (0.0, 0.0);
        knot_q.push(0.0);
        knot_var.push(0.0);
        for (i, d) in density.iter().enumerate() {
            let dx = knots[i + 1] - knots[i];
            acc += d * dx;
            var += d.abs() * dx;
            knot_q.push(acc);
            knot_var.push(var);
        }
        let mut atom_cum = Vec::with_capacity(atoms.len() + 1);
        let mut atom_abs_cum = Vec::with_capacity(atoms.len() + 1);
        let (mut s, mut sa) = (0.0, 0.0);
        atom_cum.push(0.0);
        atom_abs_cum.push(0.0);
        for atom in &atoms {
            s += atom.w;
            sa += atom.w.abs();
            atom_cum.push(s);
            atom_abs_cum.push(sa);
        }

        Ok(Self { lo, hi, knots, density, atoms, knot_q, knot_var, atom_cum, atom_abs_cum })
    }

    /// The zero measure on `[lo, hi]`.
    pub fn zero(lo: f64, hi: f64) -> Result<Self, MeasureError> {
        Self::new((lo, hi), vec![lo, hi], vec![0.0], Vec::new())
    }

    /// Constant density `value` on `[lo, hi]` with the given atoms.
    pub fn uniform(lo: f64, hi: f64, value: f64, atoms: Vec<Atom>) -> Result<Self, MeasureError> {
        Self::new((lo, hi), vec![lo, hi], vec![value], atoms)
    }

    pub fn build(spec: &PotentialSpec) -> Result<Self, MeasureError> {
        spec.build()
    }

    pub fn domain(&self) -> Interval {
        Interval { a: self.lo, b: self.hi }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn density_values(&self) -> &[f64] {
        &self.density
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Sorted union of density knots and atom positions, including both ends.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = Vec::with_capacity(self.knots.len() + self.atoms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.knots.len() || j < self.atoms.len() {
            let next = match (self.knots.get(i), self.atoms.get(j)) {
                (Some(&k), Some(a)) if a.x < k => {
                    j += 1;
                    a.x
                }
                (Some(&k), Some(a)) if a.x == k => {
                    i += 1;
                    j += 1;
                    k
                }
                (Some(&k), _) => {
                    i += 1;
                    k
                }
                (None, Some(a)) => {
                    j += 1;
                    a.x
                }
                (None, None) => unreachable!(),
            };
            pts.push(next);
        }
        pts
    }

    fn check_in_domain(&self, x: f64) -> Result<(), MeasureError> {
        if self.lo <= x && x <= self.hi {
            Ok(())
        } else {
            Err(MeasureError::OutsideDomain { x, lo: self.lo, hi: self.hi })
        }
    }

    fn check_interval(&self, j: Interval) -> Result<(), MeasureError> {
        self.check_in_domain(j.a)?;
        self.check_in_domain(j.b)
    }

    /// Index of the density cell containing `x` (cells are `[k_i, k_{i+1})`,
    /// the last one closed on the right).
    pub fn cell_index(&self, x: f64) -> usize {
        let idx = self.knots.partition_point(|&k| k <= x);
        idx.saturating_sub(1).min(self.density.len() - 1)
    }

    /// Value of the density `q'_ac` at `x` (right-continuous per cell).
    pub fn density_at(&self, x: f64) -> f64 {
        self.density[self.cell_index(x)]
    }

    fn ac_primitive(&self, x: f64) -> f64 {
        let i = self.cell_index(x);
        self.knot_q[i] + self.density[i] * (x - self.knots[i])
    }

    fn ac_variation(&self, x: f64) -> f64 {
        let i = self.cell_index(x);
        self.knot_var[i] + self.density[i].abs() * (x - self.knots[i])
    }

    /// Weight of the atom sitting exactly at `x`, or 0.
    pub fn atom_at(&self, x: f64) -> f64 {
        match self.atoms.binary_search_by(|a| a.x.total_cmp(&x)) {
            Ok(i) => self.atoms[i].w,
            Err(_) => 0.0,
        }
    }

    /// Left-continuous primitive without domain checks.
    pub(crate) fn q_left(&self, x: f64) -> f64 {
        let n_before = self.atoms.partition_point(|a| a.x < x);
        self.ac_primitive(x) + self.atom_cum[n_before]
    }

    pub(crate) fn q_right(&self, x: f64) -> f64 {
        let n_upto = self.atoms.partition_point(|a| a.x <= x);
        self.ac_primitive(x) + self.atom_cum[n_upto]
    }

    /// One-sided value of the primitive `q` at `x`.
    pub fn q_eval(&self, x: f64, side: Side) -> Result<f64, MeasureError> {
        self.check_in_domain(x)?;
        Ok(match side {
            Side::Left => self.q_left(x),
            Side::Right => self.q_right(x),
        })
    }

    /// `∫_[a,b) dq`.
    pub fn measure_of(&self, j: Interval) -> Result<f64, MeasureError> {
        self.check_interval(j)?;
        Ok(self.q_left(j.b) - self.q_left(j.a))
    }

    /// `Var_[a,b) q`.
    pub fn total_variation(&self, j: Interval) -> Result<f64, MeasureError> {
        self.check_interval(j)?;
        let ia = self.atoms.partition_point(|a| a.x < j.a);
        let ib = self.atoms.partition_point(|a| a.x < j.b);
        Ok(self.ac_variation(j.b) - self.ac_variation(j.a) + self.atom_abs_cum[ib] - self.atom_abs_cum[ia])
    }

    /// Adds `s` to the density everywhere; atoms are unchanged.
    pub fn shift_measure(&self, s: f64) -> Self {
        let density = self.density.iter().map(|d| d + s).collect();
        Self::new((self.lo, self.hi), self.knots.clone(), density, self.atoms.clone())
            .expect("shifting a valid potential keeps it valid")
    }

    /// The reflected measure `-dq`.
    pub fn negate(&self) -> Self {
        let density = self.density.iter().map(|d| -d).collect();
        let atoms = self.atoms.iter().map(|a| Atom { x: a.x, w: -a.w }).collect();
        Self::new((self.lo, self.hi), self.knots.clone(), density, atoms)
            .expect("negating a valid potential keeps it valid")
    }

    /// Restriction to the closed window `[a, b]`. Atoms sitting exactly on the
    /// window ends are dropped; `q` is renormalized to vanish at `a`.
    pub fn restrict(&self, window: Interval) -> Result<Self, MeasureError> {
        self.check_interval(window)?;
        let (a, b) = (window.a, window.b);
        let mut knots = vec![a];
        let mut density = vec![self.density_at(a)];
        for (i, &k) in self.knots.iter().enumerate() {
            if a < k && k < b {
                knots.push(k);
                density.push(self.density[i.min(self.density.len() - 1)]);
            }
        }
        knots.push(b);
        let atoms = self.atoms.iter().copied().filter(|at| a < at.x && at.x < b).collect();
        Self::new((a, b), knots, density, atoms)
    }

    /// `∫_J f dq` for a piecewise-linear `f`, exact.
    pub fn stieltjes_integral<T: Scalar>(&self, f: &GridFunction<T>, j: Interval) -> Result<T, MeasureError> {
        self.check_interval(j)?;
        f.check_covers(j)?;
        let pts = merged_points(&[f.grid(), &self.knots], j.a, j.b);
        let mut acc = T::zero();
        let mut fa = f.eval(pts[0]);
        for w in pts.windows(2) {
            let fb = f.eval(w[1]);
            let d = self.density_at(0.5 * (w[0] + w[1]));
            if d != 0.0 {
                acc = acc + (fa + fb) * (0.5 * d * (w[1] - w[0]));
            }
            fa = fb;
        }
        for atom in self.atoms_in(j) {
            acc = acc + f.eval(atom.x) * atom.w;
        }
        Ok(acc)
    }

    /// `∫_J u conj(v) dq`, exact for piecewise-linear `u` and `v`.
    pub fn pairing<T: Scalar>(&self, u: &GridFunction<T>, v: &GridFunction<T>, j: Interval) -> Result<T, MeasureError> {
        self.check_interval(j)?;
        u.check_covers(j)?;
        v.check_covers(j)?;
        let pts = merged_points(&[u.grid(), v.grid(), &self.knots], j.a, j.b);
        let mut acc = T::zero();
        let (mut ua, mut va) = (u.eval(pts[0]), v.eval(pts[0]));
        for w in pts.windows(2) {
            let (ub, vb) = (u.eval(w[1]), v.eval(w[1]));
            let d = self.density_at(0.5 * (w[0] + w[1]));
            if d != 0.0 {
                acc = acc + linear_product_integral(ua, ub, va, vb) * (d * (w[1] - w[0]));
            }
            ua = ub;
            va = vb;
        }
        for atom in self.atoms_in(j) {
            acc = acc + u.eval(atom.x) * v.eval(atom.x).conj() * atom.w;
        }
        Ok(acc)
    }

    /// `∫_J |u|^2 dq`.
    pub fn energy<T: Scalar>(&self, u: &GridFunction<T>, j: Interval) -> Result<f64, MeasureError> {
        Ok(self.pairing(u, u, j)?.re())
    }

    pub fn atoms_in(&self, j: Interval) -> &[Atom] {
        let ia = self.atoms.partition_point(|a| a.x < j.a);
        let ib = self.atoms.partition_point(|a| a.x < j.b);
        &self.atoms[ia..ib]
    }
}

/// Mean of `u conj(v)` over a cell where both are linear, i.e.
/// `(2 ua va* + ua vb* + ub va* + 2 ub vb*) / 6`.
pub(crate) fn linear_product_integral<T: Scalar>(ua: T, ub: T, va: T, vb: T) -> T {
    let (vac, vbc) = (va.conj(), vb.conj());
    (ua * vac * 2.0 + ua * vbc + ub * vac + ub * vbc * 2.0) * (1.0 / 6.0)
}

/// Sorted, deduplicated union of several sorted point sets clipped to `[a, b]`,
/// always starting at `a` and ending at `b`.
pub(crate) fn merged_points(sets: &[&[f64]], a: f64, b: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = Vec::new();
    pts.push(a);
    for set in sets {
        let i0 = set.partition_point(|&x| x <= a);
        let i1 = set.partition_point(|&x| x < b);
        if i0 < i1 {
            pts.extend_from_slice(&set[i0..i1]);
        }
    }
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_atom(w: f64) -> BvPotential {
        BvPotential::uniform(-1.0, 1.0, 0.0, vec![Atom { x: 0.0, w }]).unwrap()
    }

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn q_eval_jumps_by_atom_weight() {
        let p = single_atom(-1.0);
        assert_eq!(p.q_eval(0.0, Side::Left).unwrap(), 0.0);
        assert_eq!(p.q_eval(0.0, Side::Right).unwrap(), -1.0);
        let lin = BvPotential::uniform(0.0, 1.0, 1.0, vec![]).unwrap();
        assert_abs_diff_eq!(lin.q_eval(0.5, Side::Left).unwrap(), 0.5);
        assert!(p.q_eval(1.5, Side::Left).is_err());
    }

    #[test]
    fn measure_uses_half_open_windows() {
        let p = single_atom(-1.0);
        assert_eq!(p.measure_of(iv(-0.5, 0.5)).unwrap(), -1.0);
        assert_eq!(p.measure_of(iv(0.0, 0.5)).unwrap(), -1.0);
        assert_eq!(p.measure_of(iv(-0.5, 0.0)).unwrap(), 0.0);
        let q = BvPotential::uniform(0.0, 1.0, 1.0, vec![Atom { x: 0.5, w: 2.0 }]).unwrap();
        assert_abs_diff_eq!(q.measure_of(iv(0.0, 1.0)).unwrap(), 3.0);
        assert!(p.measure_of(iv(-2.0, 0.0)).is_err());
    }

    #[test]
    fn total_variation_examples() {
        assert_eq!(single_atom(-1.0).total_variation(iv(-1.0, 1.0)).unwrap(), 1.0);
        let p = BvPotential::uniform(0.0, 1.0, -2.0, vec![Atom { x: 0.5, w: 3.0 }]).unwrap();
        assert_abs_diff_eq!(p.total_variation(iv(0.0, 1.0)).unwrap(), 5.0);
        let z = BvPotential::zero(0.0, 1.0).unwrap();
        assert_eq!(z.total_variation(iv(0.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn shift_adds_length_times_s() {
        let p = single_atom(-1.0);
        assert_eq!(p.shift_measure(0.0), p);
        let z = BvPotential::zero(0.0, 1.0).unwrap().shift_measure(9.0);
        assert_abs_diff_eq!(z.measure_of(iv(0.0, 0.5)).unwrap(), 4.5);
    }

    #[test]
    fn stieltjes_of_square_against_density_and_atom() {
        let p = BvPotential::uniform(0.0, 1.0, 1.0, vec![Atom { x: 0.5, w: 2.0 }]).unwrap();
        let mut last = f64::INFINITY;
        for n in [10usize, 100, 1000] {
            let f = GridFunction::<f64>::sample(0.0, 1.0, n + 1, |x| x * x);
            let v = p.stieltjes_integral(&f, iv(0.0, 1.0)).unwrap();
            let err = (v - (1.0 / 3.0 + 0.5)).abs();
            assert!(err < last);
            last = err;
        }
        assert!(last < 1e-6);
        // exact pairing of the linear interpolant of x with itself
        let u = GridFunction::<f64>::sample(0.0, 1.0, 2, |x| x);
        assert_abs_diff_eq!(p.energy(&u, iv(0.0, 1.0)).unwrap(), 1.0 / 3.0 + 0.5, epsilon = 1e-15);
    }

    #[test]
    fn atom_contribution_is_point_evaluation() {
        let p = single_atom(-0.7);
        let u = GridFunction::<f64>::sample(-1.0, 1.0, 41, |x| 1.5 * (1.0 - x * x));
        assert_abs_diff_eq!(p.energy(&u, iv(-1.0, 1.0)).unwrap(), -0.7 * 2.25, epsilon = 1e-14);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(
            BvPotential::uniform(0.0, 1.0, 0.0, vec![Atom { x: 1.0, w: 1.0 }]),
            Err(MeasureError::AtomOutsideDomain { .. })
        ));
        assert!(matches!(
            BvPotential::uniform(0.0, 1.0, 0.0, vec![Atom { x: 0.5, w: 0.0 }]),
            Err(MeasureError::ZeroWeightAtom { .. })
        ));
        assert!(matches!(
            BvPotential::new((0.0, 1.0), vec![0.0, 0.6, 0.4, 1.0], vec![0.0; 3], vec![]),
            Err(MeasureError::UnsortedKnots)
        ));
        let two = vec![Atom { x: 0.6, w: 1.0 }, Atom { x: 0.3, w: 1.0 }];
        assert!(matches!(BvPotential::uniform(0.0, 1.0, 0.0, two), Err(MeasureError::UnsortedAtoms)));
    }

    #[test]
    fn restrict_renormalizes_and_drops_end_atoms() {
        let p = BvPotential::new(
            (0.0, 4.0),
            vec![0.0, 1.0, 4.0],
            vec![2.0, -1.0],
            vec![Atom { x: 1.0, w: 5.0 }, Atom { x: 3.0, w: -2.0 }],
        )
        .unwrap();
        let r = p.restrict(iv(0.5, 3.0)).unwrap();
        assert_eq!(r.atoms().len(), 1);
        assert_abs_diff_eq!(r.measure_of(iv(0.5, 3.0)).unwrap(), 1.0 + 5.0 - 2.0);
        assert_abs_diff_eq!(r.measure_of(iv(0.7, 2.5)).unwrap(), p.measure_of(iv(0.7, 2.5)).unwrap());
    }

    #[test]
    fn breakpoints_merge_knots_and_atoms() {
        let p = BvPotential::new(
            (0.0, 2.0),
            vec![0.0, 1.0, 2.0],
            vec![1.0, 1.0],
            vec![Atom { x: 0.5, w: 1.0 }, Atom { x: 1.0, w: 1.0 }],
        )
        .unwrap();
        assert_eq!(p.breakpoints(), vec![0.0, 0.5, 1.0, 2.0]);
    }
}
