use grushin::critical_solver::{golden_max, log_slope, one_d_identity};
use grushin::fibering::{find_roots, g_function, sup_g, sup_g_closed_form, t_zero, Branch, RayData};
use grushin::functional::{energy, functional_value, Problem};
use grushin::grid::{dilate, gauge_norm_point, Cutoff};
use grushin::{GrushinOperator, ProblemSpec, TensorGrid};
use proptest::prelude::*;

fn ray_strategy() -> impl Strategy<Value = RayData> {
    (0.1f64..10.0, 0.1f64..10.0, 0.1f64..10.0, 0.0f64..0.95, 1.2f64..6.0)
        .prop_map(|(a, b, c, r, s)| RayData::new(a, b, c, r, s, 1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fibering_roots_bracket_t0(ray in ray_strategy(), frac in 0.01f64..0.99) {
        let t0 = t_zero(&ray).unwrap();
        let sup = sup_g(&ray).unwrap();
        let ray = RayData { mu: frac * sup / ray.b, ..ray };
        let rep = find_roots(&ray).unwrap();
        let plus = rep.root(Branch::Plus).unwrap();
        let minus = rep.root(Branch::Minus).unwrap();
        let mb = ray.mu * ray.b;
        prop_assert!((g_function(&ray, plus.t) - mb).abs() <= 1e-10 * mb);
        prop_assert!((g_function(&ray, minus.t) - mb).abs() <= 1e-10 * mb);
        prop_assert!(plus.t < t0 && t0 < minus.t);
        prop_assert!(plus.f_second > 0.0 && minus.f_second < 0.0);
        // both are critical points of the fibering map
        let scale = ray.a * minus.t;
        prop_assert!(ray.f_prime(plus.t).abs() < 1e-8 * scale);
        prop_assert!(ray.f_prime(minus.t).abs() < 1e-8 * scale);
    }

    #[test]
    fn sup_g_substitution_matches_closed_form(ray in ray_strategy()) {
        let a = sup_g(&ray).unwrap();
        let b = sup_g_closed_form(&ray).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs());
    }

    #[test]
    fn mu_above_sup_has_no_roots(ray in ray_strategy(), over in 1.001f64..5.0) {
        let sup = sup_g(&ray).unwrap();
        let ray = RayData { mu: over * sup / ray.b, ..ray };
        prop_assert!(find_roots(&ray).is_err());
    }

    #[test]
    fn gauge_is_homogeneous(x in -3.0f64..3.0, y in -3.0f64..3.0, t in 0.05f64..20.0, lambda in 0.0f64..3.0) {
        let z = [x, y];
        let dz = dilate(&z, 1, t, lambda).unwrap();
        let lhs = gauge_norm_point(&dz, 1, lambda);
        let rhs = t * gauge_norm_point(&z, 1, lambda);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
    }

    #[test]
    fn cutoff_is_between_zero_and_one(x in -2.0f64..2.0, y in -2.0f64..2.0, radius in 0.05f64..1.0) {
        let c = Cutoff { center: vec![0.0, 0.1], radius, n: 1, lambda: 1.0 };
        let v = c.value(&[x, y]);
        prop_assert!((0.0..=1.0).contains(&v));
        let rho = gauge_norm_point(&[x, y - 0.1], 1, 1.0);
        if rho <= radius { prop_assert_eq!(v, 1.0); }
        if rho >= 2.0 * radius { prop_assert_eq!(v, 0.0); }
    }

    #[test]
    fn one_d_identity_holds(s in 0.2f64..5.0, q in 2.5f64..10.0) {
        let r = one_d_identity(s, q).unwrap();
        prop_assert!(r.relative_error < 1e-8, "{:?}", r);
    }

    #[test]
    fn log_slope_recovers_exponent(k in -4.0f64..4.0, c in 0.1f64..10.0) {
        let x = [0.2f64, 0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|v| c * v.powf(k)).collect();
        prop_assert!((log_slope(&x, &y) - k).abs() < 1e-10);
    }

    #[test]
    fn golden_max_on_concave_quadratics(c in -5.0f64..5.0, k in 0.1f64..10.0) {
        let (t, _) = golden_max(|t| -k * (t - c) * (t - c), -10.0, 10.0, 1e-12);
        prop_assert!((t - c).abs() < 1e-5);
    }
}

fn small_problem(mu: f64) -> Problem {
    Problem::new(ProblemSpec::benchmark(mu), &[17, 17]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn operator_is_symmetric_positive(seed in 0u64..1000, lambda in 0.0f64..2.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let grid = TensorGrid::uniform(&[[-1.0, 1.0], [-1.0, 1.0]], 17, 1).unwrap();
        let op = GrushinOperator::assemble(grid, lambda).unwrap();
        let u: Vec<f64> = (0..op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (op.inner(&u, &v), op.inner(&v, &u));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!(op.energy(&u) > 0.0);
        let back = op.apply(&op.solve(&u));
        for (x, y) in back.iter().zip(&u) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn energy_along_rays_matches_fibering_map(seed in 0u64..1000, t in 0.05f64..3.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = small_problem(0.3);
        let u: Vec<f64> = (0..p.op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ray = grushin::fibering::ray_data(&p, &u);
        let tu: Vec<f64> = u.iter().map(|x| t * x).collect();
        let e = functional_value(&p, &tu);
        prop_assert!((e - ray.f(t)).abs() <= 1e-10 * e.abs().max(1.0));
        // τ(u) = t F'(t) at the scaled field
        let br = energy(&p, &tu);
        prop_assert!((br.tau - t * ray.f_prime(t)).abs() <= 1e-9 * br.tau.abs().max(1.0));
    }
}
