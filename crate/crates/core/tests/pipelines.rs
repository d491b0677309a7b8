use grushin::critical_solver::*;
use grushin::fibering::{scale_to_nehari, Branch};
use grushin::functional::{functional_value, weak_form_mismatch, NehariKind, Problem};
use grushin::nehari_solver::{check_minus_bound, thresholds, two_solutions, SolveOptions};
use grushin::{Error, ProblemSpec};
use rand::{Rng, SeedableRng};

#[test]
fn subcritical_pair_on_coarse_grid() {
    let probe = Problem::new(ProblemSpec::benchmark(0.01), &[33, 33]).unwrap();
    let th = thresholds(&probe, &SobolevOptions::default()).unwrap();
    let p = Problem::new(ProblemSpec::benchmark(0.05 * th.mu0), &[33, 33]).unwrap();
    let pair = two_solutions(&p, &SolveOptions::default()).unwrap();
    let (minus, plus) = (&pair.first, &pair.second);
    assert!(plus.energy < 0.0 && minus.energy > 0.0);
    assert_eq!(plus.nehari_class.unwrap().kind, NehariKind::Plus);
    assert_eq!(minus.nehari_class.unwrap().kind, NehariKind::Minus);
    for s in [plus, minus] {
        assert!(s.converged && s.residual < 1e-6, "{}", s.residual);
        assert!(s.min_value >= -1e-10);
    }
    assert!(pair.distinctness > 1e-2);
    // the minus solution already sits on its sheet
    let (t, _) = scale_to_nehari(&p, &minus.field, Branch::Minus).unwrap();
    assert!((t - 1.0).abs() < 1e-6, "{t}");
    let mut m = minus.clone();
    assert!(check_minus_bound(&mut m, &th));
}

fn critical_setup(nodes: [usize; 2]) -> (Problem, CriticalThresholds) {
    let probe = Problem::new(ProblemSpec::critical_benchmark(1e-3), &nodes).unwrap();
    let th0 = compute_thresholds(&probe, &SobolevOptions::default()).unwrap();
    let p = Problem::new(ProblemSpec::critical_benchmark(0.5 * th0.mu_star), &nodes).unwrap();
    let th = thresholds_from_constants(&p, th0.s_q, th0.s_p).unwrap();
    (p, th)
}

#[test]
fn critical_pipeline_on_coarse_grid() {
    let (p, mut th) = critical_setup([65, 129]);
    let sphere = check_sphere_floor(&p, &th, 100, 11);
    assert!(sphere.passed, "{sphere:?}");

    let opts = CriticalOptions {
        tol: 1e-9,
        ..Default::default()
    };
    let u_mu = local_minimize_in_ball(&p, &th, &opts).unwrap();
    assert!(u_mu.energy < 0.0);
    assert!(u_mu.norm < th.delta);
    assert!(u_mu.min_value >= -1e-10);
    assert!(u_mu.trace.windows(2).all(|w| w[1].energy <= w[0].energy));
    assert!(u_mu.trace[0].energy < 0.0);
    th.set_local_minimum(u_mu.energy, p.exponents.q_dim);

    let profile = ReferenceProfile::compute(1, 1, 1.0, &ProfileOptions::default()).unwrap();
    let fam = build_bubble_family(&p.op, &profile, &[0.0, 0.0], 0.45, &DEFAULT_EPS).unwrap();
    assert_eq!(fam.members.len(), 1);
    let mp = mountain_pass(&p, &th, &u_mu, &fam.members[0].w, &CriticalOptions::default()).unwrap();
    assert!(mp.solution.residual < 1e-5);
    assert!(mp.lower_margin >= 0.0);
    assert!(mp.upper_margin.unwrap() > 0.0, "{mp:?}");
    assert!(mp.l2_distance > 1e-2);
    assert!(mp.level > 0.0 && u_mu.energy < 0.0);
    assert!(mp.path.len() >= 64);
    assert!(mp.path.iter().all(|pt| pt.energy <= mp.level + 1e-9));

    // weak form against random smooth test fields
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let noise: Vec<f64> = (0..p.op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let phi = p.op.solve(&noise);
        let m = weak_form_mismatch(&p, &mp.solution.field, &phi);
        assert!(m < 1e-5, "{m}");
    }
}

#[test]
fn critical_errors() {
    let (p, th) = critical_setup([33, 65]);
    let above = Problem::new(ProblemSpec::critical_benchmark(2.0 * th.mu_star), &[33, 65]).unwrap();
    assert!(matches!(
        local_minimize_in_ball(&above, &th, &CriticalOptions::default()),
        Err(Error::MuAboveThreshold { .. })
    ));
    let sub = Problem::new(ProblemSpec::benchmark(0.01), &[33, 33]).unwrap();
    assert!(local_minimize_in_ball(&sub, &th, &CriticalOptions::default()).is_err());
    // a flat direction through the local minimizer has no pass
    let u_mu = local_minimize_in_ball(&p, &th, &CriticalOptions::default()).unwrap();
    let neg: Vec<f64> = u_mu.field.iter().map(|x| -x - 1e-3).collect();
    let e0 = functional_value(&p, &u_mu.field);
    assert!(e0 < 0.0);
    assert!(mountain_pass(&p, &th, &u_mu, &neg, &CriticalOptions::default()).is_err());
}

#[test]
fn sobolev_estimate_trends() {
    use grushin::{GrushinOperator, TensorGrid};
    let crit = 6.0;
    let est = |half: f64, nodes: usize| {
        let grid = TensorGrid::uniform(&[[-half, half], [-half, half]], nodes, 1).unwrap();
        let op = GrushinOperator::assemble(grid, 1.0).unwrap();
        estimate_sobolev_constants(&op, &[crit], &SobolevOptions::default())[0].clone()
    };
    // the best constant does not grow when the box grows
    let small = est(1.0, 65);
    let large = est(2.0, 129);
    assert!(small.converged && large.converged);
    assert!(large.quotient <= small.quotient * (1.0 + 1e-3), "{} {}", small.quotient, large.quotient);
    // and stays above the whole-space value (π/2)^{2/3} up to discretization
    let whole = std::f64::consts::FRAC_PI_2.powf(2.0 / 3.0);
    assert!(large.quotient > 0.95 * whole);
}
