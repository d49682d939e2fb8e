use heteroclinic::analysis::psi_s;
use heteroclinic::barrier::{BarrierW, ProfileG};
use heteroclinic::energy_min::energy_with_table;
use heteroclinic::nonlocal_op::{AnalyticProfile, GridFunction, OperatorTable};
use heteroclinic::potentials::{certify_w3, check_convexity};
use heteroclinic::{Kernel, Potential};
use proptest::prelude::*;

fn kernel_strategy() -> impl Strategy<Value = Kernel> {
    prop_oneof![
        (0.05f64..0.95).prop_map(|s| Kernel::fractional_laplacian(s).unwrap()),
        (0.05f64..0.95, 1.1f64..3.0, 0.2f64..3.0).prop_map(|(s, t, r)| Kernel::piecewise_power(s, t, r).unwrap()),
        (0.05f64..0.95, 0.0f64..5.0, 1.0f64..3.0)
            .prop_map(|(s, tau, z)| Kernel::modulated(s, tau, z, 2.0, 1.0).unwrap()),
        (0.05f64..0.95, 0.2f64..3.0).prop_map(|(s, r)| Kernel::truncated(s, r).unwrap()),
    ]
}

fn grid(vals: &[f64], h: f64) -> GridFunction {
    let r = 0.5 * h * (vals.len() - 1) as f64;
    let mut g = GridFunction::from_fn(r, h, 0.0, |_| 0.0, -1.0, 1.0).unwrap();
    g.values.copy_from_slice(vals);
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kernels_are_even_and_positive(k in kernel_strategy(), x in 1e-6f64..50.0) {
        let a = k.eval(x).unwrap();
        let b = k.eval(-x).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a >= 0.0);
        let lam = k.big_lambda();
        prop_assert!(a <= lam * x.powf(-1.0 - 2.0 * k.s) * (1.0 + 1e-12));
        if x < k.r0() {
            prop_assert!(a >= k.lambda() * x.powf(-1.0 - 2.0 * k.s) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn table_weights_are_nonnegative(k in kernel_strategy(), hinv in 4u32..64) {
        let h = 1.0 / hinv as f64;
        let t = OperatorTable::new(&k, h, 200).unwrap();
        for j in 1..=200 {
            prop_assert!(t.weight(j) >= 0.0);
            prop_assert!(t.tail_sum(j) >= t.tail_sum(j + 1));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn min_max_energy_inequality(
        k in kernel_strategy(),
        u in prop::collection::vec(-1.0f64..1.0, 61),
        v in prop::collection::vec(-1.0f64..1.0, 61),
        lo in 0usize..30,
        len in 1usize..30,
    ) {
        let p = Potential::symmetric_power(2.0).unwrap();
        let h = 0.1;
        let (gu, gv) = (grid(&u, h), grid(&v, h));
        let mn: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a.min(*b)).collect();
        let mx: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a.max(*b)).collect();
        let (gmin, gmax) = (grid(&mn, h), grid(&mx, h));
        let t = OperatorTable::new(&k, h, 60).unwrap();
        let (a, b) = (gu.node(lo), gu.node(lo + len));
        let e = |g: &GridFunction| energy_with_table(&t, &p, g, a, b).unwrap().total;
        let lhs = e(&gmin) + e(&gmax);
        let rhs = e(&gu) + e(&gv);
        prop_assert!(lhs <= rhs + 1e-10 * rhs.max(1.0), "{lhs} > {rhs}");
    }

    #[test]
    fn energy_grows_with_the_interval(
        k in kernel_strategy(),
        u in prop::collection::vec(-1.0f64..1.0, 61),
        lo in 5usize..25,
        len in 1usize..25,
    ) {
        let p = Potential::asymmetric_product(2.0, 3.0, 1.0).unwrap();
        let g = grid(&u, 0.1);
        let t = OperatorTable::new(&k, 0.1, 60).unwrap();
        let inner = energy_with_table(&t, &p, &g, g.node(lo), g.node(lo + len)).unwrap();
        let outer = energy_with_table(&t, &p, &g, g.node(lo - 5), g.node(lo + len + 5)).unwrap();
        prop_assert!(inner.kinetic >= 0.0 && inner.potential >= 0.0);
        prop_assert!(inner.total <= outer.total + 1e-12);
        prop_assert!((inner.total - inner.kinetic - inner.potential).abs() <= 1e-12 * inner.total.max(1.0));
    }

    #[test]
    fn reflected_profile_has_equal_energy(
        s in 0.1f64..0.9,
        u in prop::collection::vec(-1.0f64..1.0, 41),
    ) {
        // u(x) -> -u(-x) preserves the energy of a symmetric potential on symmetric sets
        let k = Kernel::fractional_laplacian(s).unwrap();
        let p = Potential::symmetric_power(2.0).unwrap();
        let g = grid(&u, 0.1);
        let mut r = g.clone();
        for (i, x) in r.values.iter_mut().enumerate() {
            *x = -u[u.len() - 1 - i];
        }
        let t = OperatorTable::new(&k, 0.1, 40).unwrap();
        let a = energy_with_table(&t, &p, &g, -1.0, 1.0).unwrap().total;
        let b = energy_with_table(&t, &p, &r, -1.0, 1.0).unwrap().total;
        prop_assert!((a - b).abs() <= 1e-11 * a.max(1.0));
    }

    #[test]
    fn psi_is_monotone_for_small_s(s in 0.01f64..0.5, rho in 1.001f64..1e6, f in 1.0f64..10.0) {
        prop_assert!(psi_s(s, rho * f).unwrap() >= psi_s(s, rho).unwrap());
        let eps = 1e-9 * rho;
        prop_assert!((psi_s(s, rho + eps).unwrap() - psi_s(s, rho).unwrap()).abs() <= 1e-6 * psi_s(s, rho).unwrap());
    }

    #[test]
    fn barrier_is_even_and_radially_nondecreasing(
        qs in 0.2f64..1.4,
        factor in 1.0f64..4.0,
        scale in 1.0f64..50.0,
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let r = factor * 2f64.powf(5.0 / qs);
        let g = ProfileG::new(qs, r).unwrap();
        prop_assert!(g.gamma_r > 1.0 && g.gamma_r < 2.0);
        let w = BarrierW { g, beta: 24.0 * r.powf(-qs), scale };
        let big_r = w.radius();
        let (x, y) = (a.min(b) * 1.2 * big_r, a.max(b) * 1.2 * big_r);
        prop_assert_eq!(w.value(x), w.value(-x));
        prop_assert!(w.value(y) - w.value(x) >= -1e-12);
        prop_assert!(w.value(x) > -1.0 && w.value(x) <= 1.0);
    }
}

#[test]
fn convexity_bounds_hold_for_shipped_potentials() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let pots = [
        Potential::symmetric_power(2.0).unwrap(),
        Potential::symmetric_power(3.0).unwrap(),
        Potential::symmetric_power(2.5).unwrap(),
        Potential::new(
            heteroclinic::potentials::PotentialFamily::AsymmetricProduct {
                alpha: 2.0,
                gamma: 4.0,
                amplitude: 0.5,
            },
            0.1,
            None,
        )
        .unwrap(),
    ];
    for p in &pots {
        let cert = certify_w3(p, 4000).unwrap();
        assert!(cert.pass, "{}: {cert:?}", p.descriptor());
        let xi = p.xi;
        for _ in 0..500 {
            let left = rng.random_bool(0.5);
            let (mut r, mut t) = (rng.random_range(0.0..xi), rng.random_range(0.0..xi));
            if r > t {
                std::mem::swap(&mut r, &mut t);
            }
            let (r, t) = if left { (-1.0 + r, -1.0 + t) } else { (1.0 - t, 1.0 - r) };
            let rep = check_convexity(p, &cert, r, t).unwrap();
            assert!(rep.pass, "{} at ({r}, {t}): {rep:?}", p.descriptor());
        }
    }
}
