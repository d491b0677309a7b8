//! The local minimizer `u_μ` near the origin and the mountain-pass solution
//! above it, for the critical problem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibering::Branch;
use crate::functional::{functional_value, gradient, Problem};
use crate::grid::Field;
use crate::model::Regime;
use crate::nehari_solver::{initial_field, SolveResult, TraceRecord};

use super::bubble::BubbleFamily;
use super::sobolev::{estimate_sobolev_constants, SobolevEstimate, SobolevOptions};

/// Constants of the small-ball argument around the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalThresholds {
    /// Positive root of `δ/4 = K δ^{2*-1}/2*` with `K = S_p^{2*}‖h‖_b`.
    pub delta_root: f64,
    /// Half of `delta_root`.
    pub delta: f64,
    pub mu_star: f64,
    /// `-inf I` over the ball of radius δ, bounded through the embedding
    /// constants.
    pub alpha_delta: f64,
    /// Estimated best constant of the critical embedding on the grid.
    pub s_lambda_hat: f64,
    pub s_q: SobolevEstimate,
    pub s_p: SobolevEstimate,
    pub g_norm: f64,
    pub h_norm: f64,
    /// `δ²/8`, the floor of the energy on the sphere of radius δ.
    pub sphere_floor: f64,
    /// `I(u_μ)` once the local minimizer is known.
    pub beta_hat: Option<f64>,
    /// `beta_hat + 𝒮^{Q/2}/Q`. Only certified from the critical points
    /// actually found.
    pub c_tilde_hat: Option<f64>,
}

impl CriticalThresholds {
    /// `𝒮^{Q/2}/Q`
    pub fn bubble_level(&self, q_dim: f64) -> f64 {
        self.s_lambda_hat.powf(q_dim / 2.0) / q_dim
    }

    pub fn set_local_minimum(&mut self, beta: f64, q_dim: f64) {
        self.beta_hat = Some(beta);
        self.c_tilde_hat = Some(beta + self.bubble_level(q_dim));
    }

    /// Lower bound of the energy on the sphere of radius `t` implied by the
    /// embedding constants.
    pub fn sphere_minorant(&self, p: &Problem, t: f64) -> f64 {
        let (r, crit) = (p.spec.r, p.exponents.crit);
        let k = self.s_p.constant.powf(crit) * self.h_norm;
        0.5 * t * t
            - p.mu() * self.s_q.constant.powf(1.0 + r) * self.g_norm * t.powf(1.0 + r) / (1.0 + r)
            - k * t.powf(crit) / crit
    }
}

pub fn compute_thresholds(p: &Problem, sobolev: &SobolevOptions) -> Result<CriticalThresholds> {
    let ex = p.exponents;
    let mut est = estimate_sobolev_constants(&p.op, &[ex.q, ex.crit], sobolev);
    let s_p = est.pop().expect("two estimates");
    let s_q = est.pop().expect("two estimates");
    thresholds_from_constants(p, s_q, s_p)
}

pub fn thresholds_from_constants(
    p: &Problem,
    s_q: SobolevEstimate,
    s_p: SobolevEstimate,
) -> Result<CriticalThresholds> {
    if p.spec.regime != Regime::Critical {
        return Err(Error::Precondition("thresholds need the critical regime".into()));
    }
    let (g_norm, h_norm) = (p.g_norm(), p.h_norm());
    let r = p.spec.r;
    let crit = p.exponents.crit;
    for (name, v) in [
        ("‖g‖", g_norm),
        ("‖h‖", h_norm),
        ("S_q", s_q.constant),
        ("S_p", s_p.constant),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("degenerate {name} = {v}")));
        }
    }
    let k = s_p.constant.powf(crit) * h_norm;
    let delta_root = (crit / (4.0 * k)).powf(1.0 / (crit - 2.0));
    let delta = 0.5 * delta_root;
    let mu_star = (1.0 + r) * delta.powf(1.0 - r) / (8.0 * g_norm * s_q.constant.powf(1.0 + r));
    let mut th = CriticalThresholds {
        delta_root,
        delta,
        mu_star,
        alpha_delta: 0.0,
        s_lambda_hat: s_p.quotient,
        s_q,
        s_p,
        g_norm,
        h_norm,
        sphere_floor: delta * delta / 8.0,
        beta_hat: None,
        c_tilde_hat: None,
    };
    // the minorant dips below 0 near the origin; its minimum over [0, δ]
    // bounds I below on the ball. Log-spaced samples catch small dips.
    let samples = 4096;
    let at = |i: usize| delta * 10f64.powf(-16.0 * (1.0 - i as f64 / samples as f64));
    let (mut best_i, mut best) = (0, 0.0);
    for i in 0..=samples {
        let v = th.sphere_minorant(p, at(i));
        if v < best {
            best = v;
            best_i = i;
        }
    }
    if best < 0.0 {
        let (a, b) = (at(best_i.saturating_sub(1)), at((best_i + 1).min(samples)));
        let (_, v) = golden_max(|t| -th.sphere_minorant(p, t), a, b, 1e-14);
        best = best.min(-v);
    }
    th.alpha_delta = -best;
    Ok(th)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereCheck {
    pub samples: usize,
    pub min_energy: f64,
    pub floor: f64,
    /// Smallest `I(u) - minorant(δ)` over the samples.
    pub chain_slack: f64,
    pub passed: bool,
}

/// Samples random fields on the sphere `‖u‖_λ = δ` and checks that the
/// energy stays above `δ²/8` and above the minorant built from the
/// embedding constants.
pub fn check_sphere_floor(p: &Problem, th: &CriticalThresholds, samples: usize, seed: u64) -> SphereCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vol = p.op.volume();
    let minorant = th.sphere_minorant(p, th.delta);
    let tol = 1e-10 * th.sphere_floor.max(1.0);
    let mut min_energy = f64::INFINITY;
    let mut chain_slack = f64::INFINITY;
    for k in 0..samples {
        let noise: Field = (0..p.op.len())
            .map(|_| vol * rng.gen_range(-1.0..1.0))
            .collect();
        // smooth the noise; half of the samples are made nonnegative since
        // only the positive part enters the nonlinear terms
        let mut u = p.op.solve(&noise);
        if k % 2 == 0 {
            u.iter_mut().for_each(|x| *x = x.abs());
        }
        let s = th.delta / p.op.norm(&u);
        u.iter_mut().for_each(|x| *x *= s);
        let e = functional_value(p, &u);
        min_energy = min_energy.min(e);
        chain_slack = chain_slack.min(e - minorant);
    }
    SphereCheck {
        samples,
        min_energy,
        floor: th.sphere_floor,
        chain_slack,
        passed: min_energy >= th.sphere_floor - tol && chain_slack >= -tol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    /// Initial seed norm as a fraction of δ.
    pub seed_fraction: f64,
    pub path_points: usize,
    pub distinct_tol: f64,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        CriticalOptions {
            tol: 1e-6,
            max_iter: 2000,
            armijo: 1e-4,
            seed_fraction: 1e-3,
            path_points: 64,
            distinct_tol: 1e-2,
        }
    }
}

fn check_critical(p: &Problem) -> Result<()> {
    if p.spec.regime != Regime::Critical {
        return Err(Error::Precondition("critical-regime problem required".into()));
    }
    Ok(())
}

/// Minimizes the energy over the ball `‖u‖_λ ≤ δ` by Sobolev-gradient
/// descent, rescaling radially whenever a step leaves the ball.
pub fn local_minimize_in_ball(
    p: &Problem,
    th: &CriticalThresholds,
    opts: &CriticalOptions,
) -> Result<SolveResult> {
    check_critical(p)?;
    if p.mu() >= th.mu_star {
        return Err(Error::MuAboveThreshold {
            mu: p.mu(),
            threshold: th.mu_star,
            name: "mu*".into(),
        });
    }
    let delta = th.delta;
    let project = |mut u: Field| {
        let nrm = p.op.norm(&u);
        if nrm > delta {
            let s = delta / nrm;
            u.iter_mut().for_each(|x| *x *= s);
        }
        u
    };
    let mut u = initial_field(p, Branch::Plus, 0, 0.0);
    let scale = opts.seed_fraction * delta / p.op.norm(&u);
    u.iter_mut().for_each(|x| *x *= scale);
    let mut e = functional_value(p, &u);
    // small multiples of a nonnegative field have negative energy
    for _ in 0..20 {
        if e < 0.0 {
            break;
        }
        u.iter_mut().for_each(|x| *x *= 0.1);
        e = functional_value(p, &u);
    }
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;
    while iterations < opts.max_iter {
        let g = gradient(p, &u);
        let gg = p.op.energy(&g);
        let res = gg.max(0.0).sqrt();
        trace.push(TraceRecord {
            energy: e,
            residual: res,
            tau: f64::NAN,
        });
        if res < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut alpha = 1.0;
        loop {
            let trial = project(u.iter().zip(&g).map(|(a, b)| a - alpha * b).collect());
            let et = functional_value(p, &trial);
            if et <= e - opts.armijo * alpha * gg {
                u = trial;
                e = et;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-14 {
                stalled = true;
                break;
            }
        }
        if stalled {
            break;
        }
    }
    if e >= 0.0 {
        return Err(Error::NoNegativeMinimizer(e));
    }
    let mut out = SolveResult::from_field(p, u);
    out.iterations = iterations;
    out.converged = converged;
    out.trace = trace;
    if stalled {
        out.flags.push("line search stalled".into());
    }
    if out.norm >= delta {
        out.flags.push("minimizer on the ball boundary".into());
    }
    out.require_converged()
}

/// Maximizes a unimodal `f` on `[a, b]` by golden-section search.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, rel_tol: f64) -> (f64, f64) {
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let scale = b.abs().max(a.abs()).max(f64::MIN_POSITIVE);
    for _ in 0..400 {
        if b - a <= rel_tol * scale {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Energy of `u + t w`.
fn ray_energy(p: &Problem, u: &[f64], w: &[f64], t: f64) -> f64 {
    let z: Field = u.iter().zip(w).map(|(a, b)| a + t * b).collect();
    functional_value(p, &z)
}

/// First `T` on the doubling sequence from `start` with
/// `I(u + T w) < I(u)` and `‖u + T w‖_λ > min_norm`.
fn far_endpoint(p: &Problem, u: &[f64], w: &[f64], start: f64, min_norm: f64) -> Option<f64> {
    let e0 = functional_value(p, u);
    let mut t = start;
    for _ in 0..80 {
        let z: Field = u.iter().zip(w).map(|(a, b)| a + t * b).collect();
        if functional_value(p, &z) < e0 && p.op.norm(&z) > min_norm {
            return Some(t);
        }
        t *= 2.0;
    }
    None
}

/// Maximum of `t ↦ I(u + t w)` over `(0, T]`: sampled, then refined around
/// the best sample.
fn ray_peak(p: &Problem, u: &[f64], w: &[f64], t_end: f64, samples: usize) -> (f64, f64) {
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 1..=samples {
        let t = t_end * i as f64 / samples as f64;
        let e = ray_energy(p, u, w, t);
        if e > best.1 {
            best = (t, e);
        }
    }
    let h = t_end / samples as f64;
    let (a, b) = ((best.0 - h).max(0.0), (best.0 + h).min(t_end));
    let refined = golden_max(|t| ray_energy(p, u, w, t), a, b, 1e-12);
    if refined.1 >= best.1 {
        refined
    } else {
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub theta: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MountainPass {
    pub solution: SolveResult,
    /// `c_μ`, the energy of the saddle.
    pub level: f64,
    pub t_peak: f64,
    pub t_end: f64,
    /// Final path `θ ↦ I(u_μ + θ T w)`.
    pub path: Vec<PathPoint>,
    pub l2_distance: f64,
    pub lower_bound: f64,
    pub upper_bound: Option<f64>,
    /// `level - lower_bound`, and `upper_bound - level`.
    pub lower_margin: f64,
    pub upper_margin: Option<f64>,
}

/// Mountain pass over rays from `u_μ`: the path `θ ↦ u_μ + θ T w` is
/// lowered by moving the direction `w` against the gradient at the path
/// maximum, which is re-located after each move. At convergence the
/// maximum is a critical point.
pub fn mountain_pass(
    p: &Problem,
    th: &CriticalThresholds,
    u_mu: &SolveResult,
    direction: &[f64],
    opts: &CriticalOptions,
) -> Result<MountainPass> {
    check_critical(p)?;
    let u0 = &u_mu.field;
    let e0 = u_mu.energy;
    let points = opts.path_points.max(64);
    let normalize = |w: Field| {
        let s = p.op.norm(&w);
        w.into_iter().map(|x| x / s).collect::<Field>()
    };
    let mut w = normalize(direction.to_vec());
    let min_norm = th.delta + p.op.norm(u0);
    let t_end = far_endpoint(p, u0, &w, 1.0, min_norm)
        .ok_or_else(|| Error::Precondition("no far endpoint below I(u_μ) along the bubble ray".into()))?;
    let (mut t, mut level) = ray_peak(p, u0, &w, t_end, points);
    let pass_tol = 1e-8 * level.abs().max(1.0);
    if level - e0.max(ray_energy(p, u0, &w, t_end)) < pass_tol {
        return Err(Error::NoPassDetected { max: level });
    }

    let peak_of = |w: &Field, t_guess: f64| {
        let end = far_endpoint(p, u0, w, t_guess, min_norm).unwrap_or(4.0 * t_guess);
        ray_peak(p, u0, w, end, points)
    };
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;
    loop {
        let z: Field = u0.iter().zip(&w).map(|(a, b)| a + t * b).collect();
        let g = gradient(p, &z);
        let gg = p.op.energy(&g);
        let res = gg.max(0.0).sqrt();
        trace.push(TraceRecord {
            energy: level,
            residual: res,
            tau: f64::NAN,
        });
        if res < opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter || stalled {
            break;
        }
        iterations += 1;
        let mut alpha = 1.0;
        loop {
            let wn = normalize(w.iter().zip(&g).map(|(a, b)| a - alpha * b / t).collect());
            let (tn, en) = peak_of(&wn, t);
            if en < level - opts.armijo * alpha * gg / t {
                w = wn;
                t = tn;
                level = en;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                stalled = true;
                break;
            }
        }
    }

    let field: Field = u0.iter().zip(&w).map(|(a, b)| a + t * b).collect();
    let t_end = far_endpoint(p, u0, &w, t, min_norm).unwrap_or(4.0 * t);
    let path = (0..points)
        .map(|i| {
            let theta = i as f64 / (points - 1) as f64;
            PathPoint {
                theta,
                energy: ray_energy(p, u0, &w, theta * t_end),
            }
        })
        .collect();
    let l2_distance = p.grid().l2_distance(&field, u0);
    let mut solution = SolveResult::from_field(p, field);
    solution.iterations = iterations;
    solution.converged = converged;
    solution.trace = trace;
    if stalled {
        solution.flags.push("line search stalled".into());
    }
    if l2_distance <= opts.distinct_tol {
        solution.flags.push("coincides with the local minimizer".into());
    }
    let level = solution.energy;
    let upper_bound = th.c_tilde_hat;
    let out = MountainPass {
        level,
        t_peak: t,
        t_end,
        path,
        l2_distance,
        lower_bound: th.sphere_floor,
        upper_bound,
        lower_margin: level - th.sphere_floor,
        upper_margin: upper_bound.map(|u| u - level),
        solution,
    };
    if !converged {
        return Err(Error::IterationCap {
            iterations,
            residual: out.solution.residual,
            best: Some(Box::new(out.solution)),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub eps: f64,
    pub peak: f64,
    pub t_peak: f64,
    /// `threshold - peak`; positive when the strict inequality holds.
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub beta: f64,
    pub bubble_level: f64,
    pub threshold: f64,
    pub rows: Vec<GapRow>,
    /// Margins increase as ε decreases.
    pub trend_improves: bool,
    pub t_min: f64,
    pub t_max: f64,
}

impl GapTable {
    /// Whether the inequality holds for the `k` smallest resolved ε.
    pub fn holds_for_smallest(&self, k: usize) -> bool {
        self.rows.len() >= k && self.rows[self.rows.len() - k..].iter().all(|r| r.holds)
    }
}

/// Tabulates `max_t I(u_μ + t w_ε)` against `I(u_μ) + 𝒮^{Q/2}/Q` over the
/// resolved members of a bubble family.
pub fn verify_mpl_gap(
    p: &Problem,
    th: &CriticalThresholds,
    u_mu: &SolveResult,
    family: &BubbleFamily,
) -> Result<GapTable> {
    check_critical(p)?;
    let beta = u_mu.energy;
    let bubble_level = th.bubble_level(p.exponents.q_dim);
    let threshold = beta + bubble_level;
    let u0 = &u_mu.field;
    let rows: Vec<GapRow> = std::thread::scope(|scope| {
        let handles: Vec<_> = family
            .members
            .iter()
            .map(|m| {
                scope.spawn(move || {
                    let t_end = far_endpoint(p, u0, &m.w, 1.0, 0.0).unwrap_or(1e3);
                    let (t_peak, peak) = ray_peak(p, u0, &m.w, t_end, 256);
                    GapRow {
                        eps: m.eps,
                        peak,
                        t_peak,
                        margin: threshold - peak,
                        holds: peak < threshold,
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let trend_improves = rows.windows(2).all(|w| w[1].margin >= w[0].margin);
    let t_min = rows.iter().map(|r| r.t_peak).fold(f64::INFINITY, f64::min);
    let t_max = rows.iter().map(|r| r.t_peak).fold(f64::NEG_INFINITY, f64::max);
    Ok(GapTable {
        beta,
        bubble_level,
        threshold,
        rows,
        trend_improves,
        t_min,
        t_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneDIdentity {
    pub s: f64,
    pub q_dim: f64,
    pub numeric: f64,
    pub closed_form: f64,
    pub relative_error: f64,
}

/// `max_t (𝒮t²/2 − t^{2*}/2*)` by golden section against `𝒮^{Q/2}/Q`.
pub fn one_d_identity(s: f64, q_dim: f64) -> Result<OneDIdentity> {
    if !(q_dim > 2.0) || !(s > 0.0) {
        return Err(Error::Domain(format!("need Q > 2 and 𝒮 > 0 (got {q_dim}, {s})")));
    }
    let crit = 2.0 * q_dim / (q_dim - 2.0);
    let f = |t: f64| s * t * t / 2.0 - t.powf(crit) / crit;
    let mut b = 1.0;
    while f(b) > 0.0 {
        b *= 2.0;
    }
    let (_, numeric) = golden_max(f, 0.0, b, 1e-14);
    let closed_form = s.powf(q_dim / 2.0) / q_dim;
    Ok(OneDIdentity {
        s,
        q_dim,
        numeric,
        closed_form,
        relative_error: (numeric - closed_form).abs() / closed_form,
    })
}
