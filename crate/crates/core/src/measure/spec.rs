//! JSON description of a potential and the built-in generators.

use serde::{Deserialize, Serialize};

use super::{Atom, BvPotential, MeasureError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySegment {
    pub from: f64,
    pub to: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecAtom {
    pub x: f64,
    pub w: f64,
}

/// How the extra weights `alpha_{2n-1}` of the alternating comb depend on `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// `alpha`
    Const,
    /// `alpha * ln(1 + n)`
    Log,
    /// `alpha / n`
    InvN,
}

impl AlphaRule {
    pub fn weight(self, alpha: f64, n: usize) -> f64 {
        let n = n as f64;
        match self {
            AlphaRule::Const => alpha,
            AlphaRule::Log => alpha * (1.0 + n).ln(),
            AlphaRule::InvN => alpha / n,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// One atom of weight `alpha` at `x0` (a well when `alpha < 0`).
    SingleDelta { x0: f64, alpha: f64 },
    /// Density `|x|` stored as its midpoint value on cells of width `cell`
    /// aligned with the origin.
    AbsX { cell: f64 },
    /// Atoms of equal `weight` at `phase + k * period`.
    PeriodicComb {
        period: f64,
        weight: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Atoms at `x_n = sqrt(n)`: weight `rho + alpha_{2n-1}` at odd indices,
    /// `-rho` at even ones.
    #[serde(alias = "delta_comb")]
    SqrtComb {
        rho: f64,
        alpha_rule: AlphaRule,
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default)]
        n_max: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub domain: [f64; 2],
    #[serde(default)]
    pub density: Vec<DensitySegment>,
    #[serde(default)]
    pub atoms: Vec<SpecAtom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
}

impl PotentialSpec {
    pub fn with_generator(lo: f64, hi: f64, generator: GeneratorSpec) -> Self {
        Self { domain: [lo, hi], density: Vec::new(), atoms: Vec::new(), generator: Some(generator) }
    }

    pub fn from_json(text: &str) -> Result<Self, MeasureError> {
        serde_json::from_str(text).map_err(|e| MeasureError::Malformed(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn build(&self) -> Result<BvPotential, MeasureError> {
        let [lo, hi] = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(MeasureError::Malformed(format!("bad domain [{lo}, {hi}]")));
        }

        let mut atoms: Vec<Atom> = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            if !(lo < a.x && a.x < hi) {
                return Err(MeasureError::AtomOutsideDomain { x: a.x });
            }
            if a.w == 0.0 {
                return Err(MeasureError::ZeroWeightAtom { x: a.x });
            }
            atoms.push(Atom { x: a.x, w: a.w });
        }
        for seg in &self.density {
            if !(seg.from < seg.to && lo <= seg.from && seg.to <= hi && seg.value.is_finite()) {
                return Err(MeasureError::Malformed(format!(
                    "density segment [{}, {}) outside the domain or empty",
                    seg.from, seg.to
                )));
            }
        }

        let (mut knots, mut values) = (vec![lo, hi], vec![0.0]);
        if let Some(generator) = &self.generator {
            generator.expand(lo, hi, &mut knots, &mut values, &mut atoms)?;
        }

        let (knots, values) = overlay_segments(knots, values, &self.density);
        let atoms = merge_atoms(atoms);
        BvPotential::new((lo, hi), knots, values, atoms)
    }
}

impl GeneratorSpec {
    fn expand(
        &self,
        lo: f64,
        hi: f64,
        knots: &mut Vec<f64>,
        values: &mut Vec<f64>,
        atoms: &mut Vec<Atom>,
    ) -> Result<(), MeasureError> {
        let bad = |msg: &str| Err(MeasureError::Malformed(msg.to_string()));
        match *self {
            GeneratorSpec::SingleDelta { x0, alpha } => {
                if !(lo < x0 && x0 < hi) {
                    return Err(MeasureError::AtomOutsideDomain { x: x0 });
                }
                if alpha == 0.0 || !alpha.is_finite() {
                    return Err(MeasureError::ZeroWeightAtom { x: x0 });
                }
                atoms.push(Atom { x: x0, w: alpha });
            }
            GeneratorSpec::AbsX { cell } => {
                if !(cell > 0.0 && cell.is_finite()) {
                    return bad("abs_x needs cell > 0");
                }
                let k0 = (lo / cell).floor() as i64 + 1;
                let k1 = (hi / cell).ceil() as i64 - 1;
                let mut ks = vec![lo];
                ks.extend((k0..=k1).map(|k| k as f64 * cell).filter(|&x| lo < x && x < hi));
                ks.push(hi);
                *values = ks.windows(2).map(|w| (0.5 * (w[0] + w[1])).abs()).collect();
                *knots = ks;
            }
            GeneratorSpec::PeriodicComb { period, weight, phase } => {
                if !(period > 0.0 && period.is_finite()) || weight == 0.0 || !weight.is_finite() {
                    return bad("periodic_comb needs period > 0 and weight != 0");
                }
                let k0 = ((lo - phase) / period).floor() as i64;
                let k1 = ((hi - phase) / period).ceil() as i64;
                atoms.extend(
                    (k0..=k1)
                        .map(|k| phase + k as f64 * period)
                        .filter(|&x| lo < x && x < hi)
                        .map(|x| Atom { x, w: weight }),
                );
            }
            GeneratorSpec::SqrtComb { rho, alpha_rule, alpha, n_max } => {
                if !(rho > 0.0 && rho.is_finite()) || !(alpha >= 0.0 && alpha.is_finite()) {
                    return bad("sqrt_comb needs rho > 0 and alpha >= 0");
                }
                let n_max = n_max.unwrap_or_else(|| (hi.max(0.0) * hi.max(0.0)).ceil() as usize);
                for n in 1..=n_max {
                    let x = (n as f64).sqrt();
                    if x >= hi {
                        break;
                    }
                    if x <= lo {
                        continue;
                    }
                    let w = if n % 2 == 1 { rho + alpha_rule.weight(alpha, n.div_ceil(2)) } else { -rho };
                    atoms.push(Atom { x, w });
                }
            }
        }
        Ok(())
    }
}

/// Adds constant-valued segments on top of a piecewise-constant density.
fn overlay_segments(knots: Vec<f64>, values: Vec<f64>, segments: &[DensitySegment]) -> (Vec<f64>, Vec<f64>) {
    if segments.is_empty() {
        return (knots, values);
    }
    let (lo, hi) = (knots[0], knots[knots.len() - 1]);
    let mut extra: Vec<f64> = segments.iter().flat_map(|s| [s.from, s.to]).collect();
    extra.sort_by(f64::total_cmp);
    let merged = super::merged_points(&[&knots, &extra], lo, hi);
    let merged_values = merged
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let i = knots.partition_point(|&k| k <= mid).saturating_sub(1).min(values.len() - 1);
            let add: f64 = segments.iter().filter(|s| s.from <= mid && mid < s.to).map(|s| s.value).sum();
            values[i] + add
        })
        .collect();
    (merged, merged_values)
}

/// Sorts atoms and sums coincident ones, dropping exact cancellations.
fn merge_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(last) if last.x == a.x => last.w += a.w,
            _ => out.push(a),
        }
    }
    out.retain(|a| a.w != 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Interval, Side};

    #[test]
    fn direct_construction_from_json() {
        let spec =
            PotentialSpec::from_json(r#"{"domain": [-1, 1], "density": [], "atoms": [{"x": 0, "w": -1}]}"#).unwrap();
        let p = spec.build().unwrap();
        assert_eq!(p.atoms(), &[Atom { x: 0.0, w: -1.0 }]);
        assert_eq!(p.density_values(), &[0.0]);
    }

    #[test]
    fn abs_x_stores_midpoint_density() {
        let spec = PotentialSpec::with_generator(-2.0, 2.0, GeneratorSpec::AbsX { cell: 0.01 });
        let p = spec.build().unwrap();
        assert_eq!(p.knots().len(), 401);
        assert!(p.knots().contains(&0.0));
        assert!((p.density_at(1.2345) - 1.235).abs() < 1e-12);
        assert!((p.density_at(-0.004) - 0.005).abs() < 1e-12);
        // q(x) approximates the primitive of |x| from -2
        let q = p.q_eval(1.0, Side::Left).unwrap();
        assert!((q - (2.0 + 0.5)).abs() < 1e-4);
    }

    #[test]
    fn sqrt_comb_alternates_weights() {
        let spec = PotentialSpec::from_json(
            r#"{"domain": [0, 10], "generator": {"name": "delta_comb",
                "params": {"rho": 1, "alpha_rule": "const", "alpha": 1}}}"#,
        )
        .unwrap();
        let p = spec.build().unwrap();
        let w: Vec<f64> = p.atoms().iter().take(4).map(|a| a.w).collect();
        assert_eq!(w, vec![2.0, -1.0, 2.0, -1.0]);
        assert_eq!(p.atoms()[0].x, 1.0);
        assert_eq!(p.atoms()[1].x, 2f64.sqrt());
        assert_eq!(p.atoms().len(), 99);

        let inv = GeneratorSpec::SqrtComb { rho: 1.0, alpha_rule: AlphaRule::InvN, alpha: 1.0, n_max: Some(6) };
        let p = PotentialSpec::with_generator(0.0, 10.0, inv).build().unwrap();
        let w: Vec<f64> = p.atoms().iter().map(|a| a.w).collect();
        assert_eq!(w, vec![2.0, -1.0, 1.5, -1.0, 1.0 + 1.0 / 3.0, -1.0]);
    }

    #[test]
    fn periodic_comb_lies_strictly_inside() {
        let g = GeneratorSpec::PeriodicComb { period: 1.0, weight: 1.0, phase: 0.5 };
        let p = PotentialSpec::with_generator(0.0, 5.0, g).build().unwrap();
        assert_eq!(p.atoms().len(), 5);
        let g = GeneratorSpec::PeriodicComb { period: 1.0, weight: 1.0, phase: 0.0 };
        let p = PotentialSpec::with_generator(0.0, 5.0, g).build().unwrap();
        assert_eq!(p.atoms().len(), 4);
    }

    #[test]
    fn explicit_segments_add_to_generated_density() {
        let mut spec = PotentialSpec::with_generator(0.0, 1.0, GeneratorSpec::AbsX { cell: 0.5 });
        spec.density.push(DensitySegment { from: 0.2, to: 0.7, value: 1.0 });
        let p = spec.build().unwrap();
        let total = p.measure_of(Interval::new(0.0, 1.0).unwrap()).unwrap();
        assert!((total - (0.25 * 0.5 + 0.75 * 0.5 + 0.5)).abs() < 1e-14);
    }

    #[test]
    fn malformed_specs_are_rejected() {
        assert!(PotentialSpec::from_json("{\"domain\": [0]}").is_err());
        let bad_atom = r#"{"domain": [0, 1], "atoms": [{"x": 2, "w": 1}]}"#;
        assert!(matches!(
            PotentialSpec::from_json(bad_atom).unwrap().build(),
            Err(MeasureError::AtomOutsideDomain { .. })
        ));
        let zero = r#"{"domain": [0, 1], "atoms": [{"x": 0.5, "w": 0}]}"#;
        assert!(matches!(PotentialSpec::from_json(zero).unwrap().build(), Err(MeasureError::ZeroWeightAtom { .. })));
        let seg = r#"{"domain": [0, 1], "density": [{"from": 0.5, "to": 0.2, "value": 1}]}"#;
        assert!(PotentialSpec::from_json(seg).unwrap().build().is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let spec = PotentialSpec::with_generator(
            0.0,
            3.0,
            GeneratorSpec::SqrtComb { rho: 3.0, alpha_rule: AlphaRule::Log, alpha: 1.0, n_max: None },
        );
        assert_eq!(PotentialSpec::from_json(&spec.to_json()).unwrap(), spec);
    }
}
