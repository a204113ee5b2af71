use num_complex::Complex64;
use proptest::prelude::*;
use qdspec::criteria::Witness;
use qdspec::forms::{form_bilinear, potential_energy};
use qdspec::lab::{check_corollary1, random_br_potential, random_potential, TOLERANCE};
use qdspec::{brinck_constant, BvPotential, GridFunction, Interval, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn potential(seed: u64) -> BvPotential {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_potential(&mut rng, (-2.0, 3.0), -4.0, 4.0)
}

fn complex_function(seed: u64, a: f64, b: f64, vanish: bool) -> GridFunction<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..25);
    GridFunction::sample(a, b, n, |x| {
        if vanish && (x == a || x == b) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
        }
    })
}

proptest! {
    #[test]
    fn mass_is_additive(seed in any::<u64>(), a in -2.0..3.0f64, t in 0.0..1.0f64, s in 0.0..1.0f64) {
        let p = potential(seed);
        let c = a + (3.0 - a) * t;
        let b = a + (c - a) * s;
        prop_assume!(a < b && b < c);
        let whole = p.measure_of(Interval::new(a, c).unwrap()).unwrap();
        let parts = p.measure_of(Interval::new(a, b).unwrap()).unwrap()
            + p.measure_of(Interval::new(b, c).unwrap()).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-12 * (1.0 + whole.abs()));
    }

    #[test]
    fn primitive_jumps_by_atom_weight(seed in any::<u64>(), x in -1.99..2.99f64) {
        let p = potential(seed);
        let mut points = vec![x];
        points.extend(p.atoms().iter().map(|a| a.x));
        for x in points {
            let jump = p.q_eval(x, Side::Right).unwrap() - p.q_eval(x, Side::Left).unwrap();
            prop_assert!((jump - p.atom_at(x)).abs() <= 1e-12 * (1.0 + jump.abs()));
        }
    }

    #[test]
    fn mass_is_bounded_by_variation(seed in any::<u64>(), a in -2.0..3.0f64, len in 0.0..5.0f64) {
        let p = potential(seed);
        let b = (a + len).min(3.0);
        prop_assume!(a < b);
        let j = Interval::new(a, b).unwrap();
        prop_assert!(p.measure_of(j).unwrap().abs() <= p.total_variation(j).unwrap() + 1e-12);
    }

    #[test]
    fn shift_adds_lebesgue_mass(seed in any::<u64>(), s in -5.0..5.0f64, a in -2.0..3.0f64, len in 0.0..5.0f64) {
        let p = potential(seed);
        let b = (a + len).min(3.0);
        prop_assume!(a < b);
        let j = Interval::new(a, b).unwrap();
        let shifted = p.shift_measure(s).measure_of(j).unwrap();
        let expected = p.measure_of(j).unwrap() + s * (b - a);
        prop_assert!((shifted - expected).abs() <= 1e-11 * (1.0 + expected.abs()));
    }

    #[test]
    fn short_windows_respect_the_constant(
        seed in any::<u64>(),
        a in -2.0..3.0f64,
        len in 0.0..=1.0f64,
        include_a: bool,
        include_b: bool,
    ) {
        let p = potential(seed);
        let b = (a + len).min(3.0);
        let report = brinck_constant(&p, 1.0).unwrap();
        let w = Witness { a, b, include_a, include_b };
        prop_assert!(w.mass(&p) >= -report.sup_neg - 1e-12);
        let half_open = Witness { a, b, include_a: true, include_b: false };
        prop_assert!(half_open.mass(&p) >= -report.sup_neg_half_open - 1e-12);
    }

    #[test]
    fn polarization_recovers_the_sesquilinear_form(su in any::<u64>(), sv in any::<u64>(), sp in any::<u64>()) {
        let p = potential(sp);
        let u = complex_function(su, -1.5, 2.5, false);
        let v = complex_function(sv, -1.5, 2.5, false);
        let cuts = [3.0, 4.0, 5.0];
        let t = |f: &GridFunction<Complex64>, g: &GridFunction<Complex64>| {
            form_bilinear(&p, f, g, &cuts, &cuts).unwrap().value.unwrap()
        };
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let diag = |c: Complex64| {
            let w = u.combine(&v, one, c);
            t(&w, &w)
        };
        let lhs = t(&u, &v) * 4.0;
        let rhs = diag(one) - diag(-one) + i * diag(i) - i * diag(-i);
        prop_assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + lhs.norm()), "{lhs} vs {rhs}");
        // conjugate symmetry
        prop_assert!((t(&u, &v) - t(&v, &u).conj()).norm() <= 1e-12 * (1.0 + lhs.norm()));
    }

    #[test]
    fn energy_scales_quadratically(seed in any::<u64>(), sp in any::<u64>(), c in -10.0..10.0f64) {
        let p = potential(sp);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = GridFunction::sample(-1.0, 2.0, 17, |_| rng.gen_range(-2.0..2.0));
        let cuts = [3.0, 4.0, 5.0];
        let q = potential_energy(&p, &u, &cuts, &cuts).unwrap().q.unwrap();
        let qc = potential_energy(&p, &u.scale(c), &cuts, &cuts).unwrap().q.unwrap();
        prop_assert!((qc - c * c * q).abs() <= 1e-12 * (1.0 + (c * c * q).abs()));
    }

    #[test]
    fn unit_cells_are_positive(seed in any::<u64>(), su in any::<u64>(), k in 0..32u32, target in 0.5..6.0f64) {
        // dyadic starts keep the cell length exactly one
        let a = -2.0 + k as f64 / 8.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_br_potential(&mut rng, (-2.0, 3.0), target);
        let cell = Interval::new(a, a + 1.0).unwrap();
        let u = complex_function(su, cell.a, cell.b, false);
        let m = check_corollary1(&p, &u, cell).unwrap();
        prop_assert!(m.normalized() >= -TOLERANCE, "{m:?}");
    }

    #[test]
    fn form_is_bounded_below(seed in any::<u64>(), su in any::<u64>(), target in 0.5..6.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_br_potential(&mut rng, (-2.0, 3.0), target);
        let c = brinck_constant(&p, 1.0).unwrap().c;
        let u = complex_function(su, -1.9, 2.9, true).map(|z| z.re);
        let cuts = [3.0, 4.0, 5.0];
        let r = potential_energy(&p, &u, &cuts, &cuts).unwrap();
        let form = r.form_value.unwrap();
        prop_assert!(form >= -2.0 * c * c * r.norm_sq - 1e-9, "{form} vs {}", -2.0 * c * c * r.norm_sq);
    }
}
