//! Minimization of the energy over the two sheets of the Nehari manifold.
//!
//! Each step moves along the negative Sobolev gradient and then rescales
//! the result back onto the requested sheet with the exact fibering roots.
//! At a point of the manifold `⟨∇I(u), u⟩_λ = τ(u) = 0`, so the step is
//! tangent to the sheet to first order and the rescaling costs only a
//! second-order change of energy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::critical_solver::{estimate_sobolev_constants, SobolevEstimate, SobolevOptions};
use crate::error::{Error, Result};
use crate::fibering::{minus_norm_lower_bound, mu_zero, scale_to_nehari, Branch};
use crate::functional::{
    classify, energy, gradient, EnergyBreakdown, NehariClass, NehariKind, Problem, NEHARI_TOL,
};
use crate::grid::Field;

pub const FLAG_MU_TILDE: &str = "mu possibly above mu-tilde";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub energy: f64,
    pub residual: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    #[serde(skip)]
    pub field: Field,
    pub energy: f64,
    pub breakdown: EnergyBreakdown,
    pub residual: f64,
    pub nehari_class: Option<NehariClass>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: Option<u64>,
    pub norm: f64,
    pub min_value: f64,
    pub flags: Vec<String>,
    pub trace: Vec<TraceRecord>,
}

impl SolveResult {
    pub fn from_field(p: &Problem, field: Field) -> Self {
        let breakdown = energy(p, &field);
        let residual = p.op.norm(&gradient(p, &field));
        // Relative tolerance: solutions of small μ can have ‖u‖ ≪ 1, where the
        // default floor of the classifier would swamp τ'.
        let norm2 = p.op.energy(&field);
        let nehari_class = classify(p, &field, NEHARI_TOL * norm2.min(1.0)).ok();
        SolveResult {
            energy: breakdown.total,
            breakdown,
            residual,
            nehari_class,
            iterations: 0,
            converged: false,
            seed: None,
            norm: norm2.max(0.0).sqrt(),
            min_value: field.iter().copied().fold(f64::INFINITY, f64::min),
            flags: Vec::new(),
            trace: Vec::new(),
            field,
        }
    }

    /// Turns an unconverged result into the iteration-cap error.
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::IterationCap {
                iterations: self.iterations,
                residual: self.residual,
                best: Some(Box::new(self)),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Iterations allowed after taking `|u|`.
    pub polish_iter: usize,
    pub armijo: f64,
    pub seeds: Vec<u64>,
    /// Relative amplitude of the seeded perturbation of the initial field.
    pub noise: f64,
    pub distinct_tol: f64,
    /// Refuse to run when μ is at or above this value.
    pub mu_limit: Option<f64>,
    /// Residual below which Newton steps are attempted.
    pub newton_switch: f64,
    pub newton_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-6,
            max_iter: 5000,
            polish_iter: 10,
            armijo: 1e-4,
            seeds: vec![0, 1, 2],
            noise: 0.1,
            distinct_tol: 1e-2,
            mu_limit: None,
            newton_switch: 1e-3,
            newton_iter: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Init {
    Field(Field),
    Seed(u64),
}

/// Principal mode of `A` compressed to `{w > 0}`, by masked inverse
/// iteration. Nonnegative by the maximum principle.
fn masked_mode(p: &Problem, w: &[f64]) -> Field {
    let mask: Vec<f64> = w.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut x = mask.clone();
    for _ in 0..30 {
        let y = p.op.solve(&x.iter().zip(&mask).map(|(a, b)| a * b).collect::<Field>());
        let y: Field = y.iter().zip(&mask).map(|(a, b)| a * b).collect();
        let n = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if n == 0.0 {
            return y;
        }
        x = y.into_iter().map(|v| v / n).collect();
    }
    x
}

/// Starting field: the masked principal mode on `{h > 0}` for the minus
/// sheet or `{g > 0}` for the plus sheet, times `1 + noise·ξ` with
/// `ξ ∈ [0,1)` drawn from `seed`.
pub fn initial_field(p: &Problem, branch: Branch, seed: u64, noise: f64) -> Field {
    let w = match branch {
        Branch::Minus => &p.h,
        Branch::Plus => &p.g,
    };
    let base = masked_mode(p, w);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    base.into_iter()
        .map(|v| v * (1.0 + noise * rng.gen::<f64>()))
        .collect()
}

struct Descent {
    u: Field,
    energy: f64,
    iterations: usize,
    stalled: bool,
}

fn descend(
    p: &Problem,
    branch: Branch,
    u: Field,
    max_iter: usize,
    stop_tol: f64,
    opts: &SolveOptions,
    trace: &mut Vec<TraceRecord>,
) -> Result<Descent> {
    let mut u = u;
    let mut e = energy(p, &u);
    let mut alpha: f64 = 1.0;
    for k in 0..=max_iter {
        let g = gradient(p, &u);
        let residual = p.op.norm(&g);
        trace.push(TraceRecord {
            energy: e.total,
            residual,
            tau: e.tau,
        });
        if residual < stop_tol || k == max_iter {
            return Ok(Descent {
                u,
                energy: e.total,
                iterations: k,
                stalled: false,
            });
        }
        alpha = (2.0 * alpha).min(1.0);
        let mut last_err = None;
        loop {
            let trial: Field = u.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
            match scale_to_nehari(p, &trial, branch) {
                Ok((_, cand)) => {
                    let ec = energy(p, &cand);
                    if ec.total <= e.total - opts.armijo * alpha * residual * residual {
                        u = cand;
                        e = ec;
                        break;
                    }
                }
                Err(err) => last_err = Some(err),
            }
            alpha *= 0.5;
            if alpha < 1e-14 {
                if let Some(Error::BranchEmpty(msg)) = last_err {
                    return Err(Error::BranchEmpty(msg));
                }
                return Ok(Descent {
                    u,
                    energy: e.total,
                    iterations: k,
                    stalled: true,
                });
            }
        }
    }
    unreachable!()
}

/// Newton steps on `I'(u) = 0`, each re-projected onto the sheet. A step is
/// kept only if it lowers the residual without raising the energy, so the
/// trace stays monotone. Returns the last accepted iterate, the number of
/// steps and whether the tolerance was met.
fn newton_polish(
    p: &Problem,
    branch: Branch,
    mut u: Field,
    opts: &SolveOptions,
    trace: &mut Vec<TraceRecord>,
) -> (Field, usize, bool) {
    let mut e = energy(p, &u);
    let mut res = p.op.norm(&gradient(p, &u));
    for k in 0..opts.newton_iter {
        if res < opts.tol {
            return (u, k, true);
        }
        let step = p.newton_step(&u, 1e-10, 500);
        let mut accepted = false;
        let mut alpha = 1.0;
        for _ in 0..6 {
            let trial: Field = u.iter().zip(&step.x).map(|(a, b)| a + alpha * b).collect();
            if let Ok((_, cand)) = scale_to_nehari(p, &trial, branch) {
                let ec = energy(p, &cand);
                let rc = p.op.norm(&gradient(p, &cand));
                if rc < res && ec.total <= e.total + 1e-12 * e.total.abs().max(1.0) {
                    u = cand;
                    e = ec;
                    res = rc;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return (u, k, false);
        }
        trace.push(TraceRecord {
            energy: e.total,
            residual: res,
            tau: e.tau,
        });
    }
    (u, opts.newton_iter, res < opts.tol)
}

/// Projected Sobolev-gradient descent on one sheet of the Nehari manifold,
/// followed by `|u|`, re-projection and a short polish.
pub fn minimize_on_branch(
    p: &Problem,
    branch: Branch,
    init: Init,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    if let Some(limit) = opts.mu_limit {
        if p.mu() >= limit {
            return Err(Error::MuAboveThreshold {
                mu: p.mu(),
                threshold: limit,
                name: "mu_0".into(),
            });
        }
    }
    let (seed, u0) = match init {
        Init::Field(f) => (None, f),
        Init::Seed(s) => (Some(s), initial_field(p, branch, s, opts.noise)),
    };
    let (_, u0) = scale_to_nehari(p, &u0, branch)?;
    let mut trace = Vec::new();
    let switch = opts.tol.max(opts.newton_switch);
    let first = descend(p, branch, u0, opts.max_iter, switch, opts, &mut trace)?;
    let mut iterations = first.iterations;
    let mut stalled = first.stalled;
    let (mut u, steps, done) = newton_polish(p, branch, first.u, opts, &mut trace);
    iterations += steps;
    if !done {
        let rest = opts.max_iter.saturating_sub(iterations);
        let more = descend(p, branch, u, rest, opts.tol, opts, &mut trace)?;
        iterations += more.iterations;
        stalled |= more.stalled;
        u = more.u;
    }
    let abs: Field = u.iter().map(|v| v.abs()).collect();
    let (_, abs) = scale_to_nehari(p, &abs, branch)?;
    let polish = descend(p, branch, abs, opts.polish_iter, opts.tol, opts, &mut trace)?;
    iterations += polish.iterations;
    stalled |= polish.stalled;
    let mut out = SolveResult::from_field(p, polish.u);
    out.iterations = iterations;
    out.seed = seed;
    out.trace = trace;
    out.converged = out.residual < opts.tol;
    if stalled {
        out.flags.push("line search stalled".into());
    }
    let wanted = match branch {
        Branch::Plus => NehariKind::Plus,
        Branch::Minus => NehariKind::Minus,
    };
    if out.nehari_class.map(|c| c.kind) != Some(wanted) {
        out.flags.push(format!("class differs from requested {branch} sheet"));
    }
    debug_assert!(out.energy.is_finite() && polish.energy.is_finite());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSolutions {
    /// Minimizer over the minus sheet.
    pub first: SolveResult,
    /// Minimizer over the plus sheet (the global minimizer over the manifold).
    pub second: SolveResult,
    pub distinctness: f64,
}

/// Runs both sheets from every seed (concurrently) and keeps the lowest
/// energy of each.
pub fn two_solutions(p: &Problem, opts: &SolveOptions) -> Result<TwoSolutions> {
    let jobs: Vec<(Branch, u64)> = [Branch::Minus, Branch::Plus]
        .iter()
        .flat_map(|&b| opts.seeds.iter().map(move |&s| (b, s)))
        .collect();
    let results: Vec<(Branch, Result<SolveResult>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(b, s)| scope.spawn(move || (b, minimize_on_branch(p, b, Init::Seed(s), opts))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    let best = |branch: Branch| -> Result<SolveResult> {
        let mut best: Option<SolveResult> = None;
        let mut err = None;
        for (b, r) in &results {
            if *b != branch {
                continue;
            }
            match r {
                Ok(res) => {
                    let better = match &best {
                        None => true,
                        Some(cur) => (res.converged, -res.energy) > (cur.converged, -cur.energy),
                    };
                    if better {
                        best = Some(res.clone());
                    }
                }
                Err(e) => err = Some(e.clone()),
            }
        }
        match (best, err) {
            (Some(b), _) => Ok(b),
            (None, Some(e)) => Err(e),
            (None, None) => Err(Error::Precondition("no seeds given".into())),
        }
    };
    let first = best(Branch::Minus)?;
    let second = best(Branch::Plus)?;
    let distinctness = p.grid().l2_distance(&first.field, &second.field);
    if distinctness < opts.distinct_tol {
        return Err(Error::SolutionsCoincide(distinctness));
    }
    Ok(TwoSolutions {
        first,
        second,
        distinctness,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NehariThresholds {
    pub mu0: f64,
    pub s_q: SobolevEstimate,
    pub s_p: SobolevEstimate,
    pub g_norm: f64,
    pub h_norm: f64,
    /// `½ − 1/(s+1)`
    pub c1: f64,
    /// `(s−r)/((r+1)(s+1)) · S_q^{1+r} ‖g‖_a`
    pub c2: f64,
    /// Lower bound on `‖u‖_λ` over the minus sheet.
    pub minus_norm_bound: f64,
}

impl NehariThresholds {
    /// Coercivity minorant `c₁t² − μc₂t^{r+1}` of the energy on the manifold.
    pub fn minorant(&self, mu: f64, r: f64, norm: f64) -> f64 {
        self.c1 * norm * norm - mu * self.c2 * norm.powf(r + 1.0)
    }
}

pub fn thresholds(p: &Problem, sobolev: &SobolevOptions) -> Result<NehariThresholds> {
    let ex = p.exponents;
    let (r, s) = (p.spec.r, p.spec.s);
    let mut est = estimate_sobolev_constants(&p.op, &[ex.q, ex.p], sobolev);
    let s_p = est.pop().expect("two estimates");
    let s_q = est.pop().expect("two estimates");
    let (g_norm, h_norm) = (p.g_norm(), p.h_norm());
    let mu0 = mu_zero(r, s, s_q.constant, s_p.constant, g_norm, h_norm)?;
    Ok(NehariThresholds {
        mu0,
        c1: 0.5 - 1.0 / (s + 1.0),
        c2: (s - r) / ((r + 1.0) * (s + 1.0)) * s_q.constant.powf(1.0 + r) * g_norm,
        minus_norm_bound: minus_norm_lower_bound(r, s, s_p.constant, h_norm),
        s_q,
        s_p,
        g_norm,
        h_norm,
    })
}

/// Flags the minus-sheet solution when it violates the norm lower bound,
/// which can only happen when μ exceeds the (unknown) admissible range.
pub fn check_minus_bound(result: &mut SolveResult, th: &NehariThresholds) -> bool {
    let ok = result.norm >= th.minus_norm_bound;
    if !ok && !result.flags.iter().any(|f| f == FLAG_MU_TILDE) {
        result.flags.push(FLAG_MU_TILDE.into());
    }
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ProblemSpec, WeightProfile, WeightSpec};

    fn bench(mu: f64, nodes: usize) -> Problem {
        Problem::new(ProblemSpec::benchmark(mu), &[nodes, nodes]).unwrap()
    }

    #[test]
    fn initial_fields_are_positive_where_weights_are() {
        let p = bench(0.05, 17);
        for b in [Branch::Plus, Branch::Minus] {
            let u = initial_field(&p, b, 3, 0.1);
            assert!(u.iter().all(|&v| v > 0.0));
            assert_eq!(u, initial_field(&p, b, 3, 0.1));
            assert_ne!(u, initial_field(&p, b, 4, 0.1));
        }
    }

    #[test]
    fn both_sheets_on_coarse_grid() {
        let p = bench(0.05, 33);
        let opts = SolveOptions::default();
        let plus = minimize_on_branch(&p, Branch::Plus, Init::Seed(0), &opts).unwrap();
        let minus = minimize_on_branch(&p, Branch::Minus, Init::Seed(0), &opts).unwrap();
        assert!(plus.converged && minus.converged);
        assert!(plus.energy < 0.0 && minus.energy > 0.0);
        assert_eq!(plus.nehari_class.unwrap().kind, NehariKind::Plus);
        assert_eq!(minus.nehari_class.unwrap().kind, NehariKind::Minus);
        assert!(plus.min_value >= 0.0 && minus.min_value >= 0.0);
        for r in [&plus, &minus] {
            for w in r.trace.windows(2) {
                // the |u| step may only lower the energy
                assert!(w[1].energy <= w[0].energy + 1e-12);
            }
        }
    }

    #[test]
    fn mu_gate() {
        let p = bench(0.5, 17);
        let opts = SolveOptions {
            mu_limit: Some(0.25),
            ..SolveOptions::default()
        };
        let err = minimize_on_branch(&p, Branch::Plus, Init::Seed(0), &opts).unwrap_err();
        assert!(matches!(err, Error::MuAboveThreshold { .. }));
    }

    #[test]
    fn negative_h_leaves_minus_branch_empty() {
        let mut spec = ProblemSpec::benchmark(0.05);
        spec.h_weight = WeightSpec::constant(-1.0);
        let grid = crate::grid::TensorGrid::uniform(&spec.bounds, 17, 1).unwrap();
        let p = Problem::from_grid(spec, grid).unwrap();
        let u = p.grid().sample(|z| (1.0 - z[0] * z[0]) * (1.0 - z[1] * z[1]));
        let err = minimize_on_branch(&p, Branch::Minus, Init::Field(u), &SolveOptions::default());
        assert!(matches!(err, Err(Error::BranchEmpty(_))), "{err:?}");
    }

    #[test]
    fn sign_changing_g_with_positive_bump() {
        let mut spec = ProblemSpec::benchmark(0.05);
        spec.g_weight = WeightSpec {
            profile: WeightProfile::PiecewiseSignChanging {
                center: vec![0.3, 0.2],
                radius: 0.4,
                inside: 1.0,
                outside: -0.5,
            },
            exponent: None,
            ball: None,
        };
        let p = Problem::new(spec, &[33, 33]).unwrap();
        // the plus solution is tiny here (‖u‖ ~ 1e-5) and vanishes where g < 0,
        // so tighten the residual
        let opts = SolveOptions {
            tol: 1e-8,
            ..SolveOptions::default()
        };
        for (b, k) in [(Branch::Plus, NehariKind::Plus), (Branch::Minus, NehariKind::Minus)] {
            let r = minimize_on_branch(&p, b, Init::Seed(1), &opts).unwrap();
            assert!(r.converged, "{b} {}", r.residual);
            assert_eq!(r.nehari_class.unwrap().kind, k, "{:?} {}", r.nehari_class, r.norm);
        }
    }
}
