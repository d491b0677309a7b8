//! Subcommand implementations. Each one writes `<command>.json` plus CSV
//! tables into the configured output directory and returns a one-line
//! summary, or a [`Failure`] carrying the exit code.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use grushin::critical_solver::{
    asymptotics_experiment, build_bubble_family, check_sphere_floor, estimate_sobolev_constants,
    local_minimize_in_ball, mountain_pass, thresholds_from_constants, verify_mpl_gap,
    CriticalOptions, CriticalThresholds, ProfileOptions, ReferenceProfile, SobolevEstimate,
};
use grushin::fibering::{find_roots, g_function, ray_data, scale_to_nehari, t_zero, Branch};
use grushin::functional::Problem;
use grushin::model::{validate, Exponents};
use grushin::nehari_solver::{
    check_minus_bound, initial_field, minimize_on_branch, thresholds, two_solutions, Init,
    NehariThresholds, SolveResult,
};
use grushin::{Error, ProblemSpec, Regime};
use serde::Serialize;

use crate::config::{BranchChoice, RunConfig};
use crate::report::{write_json, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_THRESHOLD: i32 = 4;

/// Tolerance on `t⁻ = 1` when re-projecting the minus solution.
pub const REPROJECTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::CriticalExponentUndefined(_)
            | Error::Domain(_)
            | Error::Precondition(_)
            | Error::UnderResolved { .. } => EXIT_INVALID,
            Error::IterationCap { .. }
            | Error::NoNegativeMinimizer(_)
            | Error::NoPassDetected { .. }
            | Error::BranchEmpty(_)
            | Error::SolutionsCoincide(_) => EXIT_NOT_CONVERGED,
            Error::MuAboveThreshold { .. }
            | Error::ThresholdExceeded { .. }
            | Error::NoInteriorMaximum(_) => EXIT_THRESHOLD,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_IO, e.to_string())
    }
}

/// What a successful run hands back: the summary line and a few scalars
/// that `sweep` aggregates.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub summary: String,
    pub metrics: BTreeMap<&'static str, f64>,
}

/// Estimated constants embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct Constants {
    pub exponents: Exponents,
    pub s_q: SobolevEstimate,
    pub s_p: SobolevEstimate,
    /// Best constant of the critical embedding on the grid, as the minimal
    /// Rayleigh quotient.
    pub s_lambda_hat: f64,
    pub mu0: Option<f64>,
    pub mu_star: Option<f64>,
    pub delta: Option<f64>,
    pub g_norm: f64,
    pub h_norm: f64,
    /// Where the μ used by the run came from.
    pub mu_source: String,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    spec: &'a ProblemSpec,
    nodes: &'a [usize],
    constants: &'a Constants,
    result: T,
}

/// A problem at the run's μ together with its constants.
pub struct Setup {
    pub cfg: RunConfig,
    pub problem: Problem,
    pub constants: Constants,
    pub nehari: Option<NehariThresholds>,
    pub critical: Option<CriticalThresholds>,
    pub out: PathBuf,
}

fn check_spec(spec: &ProblemSpec) -> Result<(), Failure> {
    let rep = validate(spec);
    let bad: Vec<String> = rep
        .failures()
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_INVALID, bad.join("; ")))
    }
}

pub fn setup(cfg: &RunConfig) -> Result<Setup, Failure> {
    check_spec(&cfg.problem)?;
    let nodes = &cfg.grid.nodes;
    let probe = Problem::new(cfg.problem.clone(), nodes)?;
    let ex = probe.exponents;
    let sob = &cfg.solver.sobolev;
    let mut spec = cfg.problem.clone();
    let (constants, nehari, critical) = match spec.regime {
        Regime::Subcritical => {
            let th = thresholds(&probe, sob)?;
            let crit = estimate_sobolev_constants(&probe.op, &[ex.crit], sob).remove(0);
            let mu_source = match cfg.solver.mu_fraction {
                Some(f) => {
                    spec.mu = f * th.mu0;
                    format!("{f} * mu0")
                }
                None => "config".into(),
            };
            let c = Constants {
                exponents: ex,
                s_q: th.s_q.clone(),
                s_p: th.s_p.clone(),
                s_lambda_hat: crit.quotient,
                mu0: Some(th.mu0),
                mu_star: None,
                delta: None,
                g_norm: th.g_norm,
                h_norm: th.h_norm,
                mu_source,
            };
            (c, Some(th), None)
        }
        Regime::Critical => {
            let mut est = estimate_sobolev_constants(&probe.op, &[ex.q, ex.crit], sob);
            let s_p = est.pop().expect("two estimates");
            let s_q = est.pop().expect("two estimates");
            let th0 = thresholds_from_constants(&probe, s_q, s_p)?;
            let mu_source = match cfg.critical.mu_fraction {
                Some(f) => {
                    spec.mu = f * th0.mu_star;
                    format!("{f} * mu*")
                }
                None => "config".into(),
            };
            let c = Constants {
                exponents: ex,
                s_q: th0.s_q.clone(),
                s_p: th0.s_p.clone(),
                s_lambda_hat: th0.s_lambda_hat,
                mu0: None,
                mu_star: Some(th0.mu_star),
                delta: Some(th0.delta),
                g_norm: th0.g_norm,
                h_norm: th0.h_norm,
                mu_source,
            };
            (c, None, Some(th0))
        }
    };
    let problem = if spec.mu != cfg.problem.mu {
        check_spec(&spec)?;
        Problem::new(spec.clone(), nodes)?
    } else {
        probe
    };
    // α(δ) depends on μ
    let critical = match critical {
        Some(th) => Some(thresholds_from_constants(&problem, th.s_q, th.s_p)?),
        None => None,
    };
    let mut cfg = cfg.clone();
    cfg.problem = spec;
    let out = cfg.output_dir();
    fs::create_dir_all(&out)?;
    Ok(Setup {
        cfg,
        problem,
        constants,
        nehari,
        critical,
        out,
    })
}

impl Setup {
    fn write_report<T: Serialize>(&self, command: &str, result: T) -> Result<(), Failure> {
        let rep = Report {
            command,
            spec: &self.cfg.problem,
            nodes: &self.cfg.grid.nodes,
            constants: &self.constants,
            result,
        };
        write_json(&self.out.join(format!("{command}.json")), &rep)?;
        Ok(())
    }

    fn write_field(&self, name: &str, u: &[f64]) -> Result<(), Failure> {
        if self.cfg.output.fields {
            let f = fs::File::create(self.out.join(name))?;
            self.problem.grid().write_csv(u, BufWriter::new(f))?;
        }
        Ok(())
    }

    fn write_trace(&self, name: &str, res: &SolveResult) -> Result<(), Failure> {
        let mut t = Table::new(&["iteration", "energy", "residual", "tau"]);
        for (k, r) in res.trace.iter().enumerate() {
            t.row(&[k as f64, r.energy, r.residual, r.tau]);
        }
        t.write(&self.out.join(name))?;
        Ok(())
    }

    fn require_critical(&self) -> Result<&CriticalThresholds, Failure> {
        self.critical.as_ref().ok_or_else(|| {
            Failure::new(EXIT_INVALID, "this command needs regime = \"critical\"")
        })
    }
}

#[derive(Serialize)]
struct ValidateResult<'a> {
    passed: bool,
    checks: &'a grushin::ValidationReport,
}

/// Checks the hypotheses only; no constants are estimated, so the report
/// holds the spec and the checks.
pub fn validate_cmd(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let rep = validate(&cfg.problem);
    let out = cfg.output_dir();
    fs::create_dir_all(&out)?;
    #[derive(Serialize)]
    struct R<'a> {
        command: &'a str,
        spec: &'a ProblemSpec,
        nodes: &'a [usize],
        result: ValidateResult<'a>,
    }
    write_json(
        &out.join("validate.json"),
        &R {
            command: "validate",
            spec: &cfg.problem,
            nodes: &cfg.grid.nodes,
            result: ValidateResult {
                passed: rep.passed(),
                checks: &rep,
            },
        },
    )?;
    check_spec(&cfg.problem)?;
    Ok(Outcome {
        summary: format!("validate: {} checks passed", rep.checks.len()),
        ..Default::default()
    })
}

#[derive(Serialize)]
struct MinusChecks {
    reprojection_t: f64,
    reprojection_tol: f64,
    reprojection_passed: bool,
    norm: f64,
    norm_lower_bound: f64,
    norm_bound_passed: bool,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    mu: f64,
    tol: f64,
    plus: Option<&'a SolveResult>,
    minus: Option<&'a SolveResult>,
    minus_checks: Option<MinusChecks>,
    distinctness: Option<f64>,
    distinct_tol: f64,
}

fn best_on_branch(s: &Setup, branch: Branch) -> Result<SolveResult, Failure> {
    let opts = &s.cfg.solver.options;
    let mut best: Option<SolveResult> = None;
    let mut last_err = None;
    for &seed in &opts.seeds {
        match minimize_on_branch(&s.problem, branch, Init::Seed(seed), opts) {
            Ok(r) => {
                let better = best
                    .as_ref()
                    .map_or(true, |b| (r.converged, -r.energy) > (b.converged, -b.energy));
                if better {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e.into()),
        (None, None) => Err(Failure::new(EXIT_INVALID, "solver.seeds is empty")),
    }
}

pub fn solve(cfg: &RunConfig, branch: Option<BranchChoice>) -> Result<Outcome, Failure> {
    let s = setup(cfg)?;
    if s.problem.spec.regime != Regime::Subcritical {
        return Err(Failure::new(
            EXIT_INVALID,
            "solve needs regime = \"subcritical\"; use solve-critical",
        ));
    }
    let th = s.nehari.as_ref().expect("subcritical thresholds");
    let opts = &s.cfg.solver.options;
    let branch = branch.unwrap_or(s.cfg.solver.branch);
    let (plus, mut minus, distinctness) = match branch {
        BranchChoice::Both => {
            let pair = two_solutions(&s.problem, opts)?;
            (Some(pair.second), Some(pair.first), Some(pair.distinctness))
        }
        BranchChoice::Plus => (Some(best_on_branch(&s, Branch::Plus)?), None, None),
        BranchChoice::Minus => (None, Some(best_on_branch(&s, Branch::Minus)?), None),
    };
    let minus_checks = match minus.as_mut() {
        Some(m) => {
            let (t, _) = scale_to_nehari(&s.problem, &m.field, Branch::Minus)?;
            let ok = check_minus_bound(m, th);
            Some(MinusChecks {
                reprojection_t: t,
                reprojection_tol: REPROJECTION_TOL,
                reprojection_passed: (t - 1.0).abs() <= REPROJECTION_TOL,
                norm: m.norm,
                norm_lower_bound: th.minus_norm_bound,
                norm_bound_passed: ok,
            })
        }
        None => None,
    };
    s.write_report(
        "solve",
        SolveReport {
            mu: s.problem.mu(),
            tol: opts.tol,
            plus: plus.as_ref(),
            minus: minus.as_ref(),
            minus_checks,
            distinctness,
            distinct_tol: opts.distinct_tol,
        },
    )?;
    let mut metrics = BTreeMap::new();
    metrics.insert("mu", s.problem.mu());
    let mut parts = vec![format!("mu = {:.6e}", s.problem.mu())];
    for (name, res) in [("plus", &plus), ("minus", &minus)] {
        if let Some(r) = res {
            s.write_field(&format!("field_{name}.csv"), &r.field)?;
            s.write_trace(&format!("trace_{name}.csv"), r)?;
            metrics.insert(if name == "plus" { "plus_energy" } else { "minus_energy" }, r.energy);
            parts.push(format!("I({name}) = {:.6e} (residual {:.1e})", r.energy, r.residual));
        }
    }
    let summary = format!("solve: {}", parts.join(", "));
    for (name, res) in [("plus", &plus), ("minus", &minus)] {
        if let Some(r) = res {
            if !r.converged {
                return Err(Failure::new(
                    EXIT_NOT_CONVERGED,
                    format!(
                        "{name} branch stopped at residual {:.3e} above tol {:.1e} after {} iterations",
                        r.residual, opts.tol, r.iterations
                    ),
                ));
            }
        }
    }
    Ok(Outcome { summary, metrics })
}

#[derive(Serialize)]
struct FiberingResult {
    branch_field: Branch,
    report: Option<grushin::fibering::FiberingReport>,
    sup_g: Option<f64>,
    mu_b: f64,
    error: Option<String>,
}

/// Fibering map along the ray of the minus-sheet starting field.
pub fn fibering(cfg: &RunConfig, samples: usize) -> Result<Outcome, Failure> {
    let s = setup(cfg)?;
    let opts = &s.cfg.solver.options;
    let seed = opts.seeds.first().copied().unwrap_or(0);
    let u = initial_field(&s.problem, Branch::Minus, seed, opts.noise);
    let ray = ray_data(&s.problem, &u);
    let found = find_roots(&ray);
    let t0 = t_zero(&ray).ok();
    let mut t_max = t0.unwrap_or(1.0) * 3.0;
    if let Ok(rep) = &found {
        if let Some(r) = rep.root(Branch::Minus) {
            t_max = t_max.max(1.5 * r.t);
        }
    }
    let mut table = Table::new(&["t", "F", "F_prime", "G"]);
    let n = samples.max(2);
    for k in 0..n {
        let t = t_max * k as f64 / (n - 1) as f64;
        table.row(&[t, ray.f(t), ray.f_prime(t), g_function(&ray, t)]);
    }
    table.write(&s.out.join("fibering.csv"))?;
    let sup_g = t0.map(|t| g_function(&ray, t));
    let result = FiberingResult {
        branch_field: Branch::Minus,
        report: found.clone().ok(),
        sup_g,
        mu_b: ray.mu * ray.b,
        error: found.as_ref().err().map(|e| e.to_string()),
    };
    s.write_report("fibering", result)?;
    let rep = found?;
    let roots: Vec<String> = rep
        .roots
        .iter()
        .map(|r| format!("t{} = {:.6e}", r.branch, r.t))
        .collect();
    Ok(Outcome {
        summary: format!("fibering: case {:?}, {}", rep.case, roots.join(", ")),
        ..Default::default()
    })
}

pub fn sobolev(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let s = setup(cfg)?;
    #[derive(Serialize)]
    struct R {
        tol: f64,
        converged: bool,
    }
    let c = &s.constants;
    let converged = c.s_q.converged && c.s_p.converged;
    s.write_report(
        "sobolev",
        R {
            tol: s.cfg.solver.sobolev.tol,
            converged,
        },
    )?;
    let summary = format!(
        "sobolev: S_q = {:.6e}, S_p = {:.6e}, S_hat = {:.6e}",
        c.s_q.constant, c.s_p.constant, c.s_lambda_hat
    );
    if !converged {
        return Err(Failure::new(
            EXIT_NOT_CONVERGED,
            format!("Rayleigh descent did not reach tol {:.1e}", s.cfg.solver.sobolev.tol),
        ));
    }
    Ok(Outcome {
        summary,
        ..Default::default()
    })
}

fn cache_name(n: usize, m: usize, lambda: f64, o: &ProfileOptions) -> String {
    format!(
        "profile_n{n}_m{m}_lambda{lambda}_L{}_N{}_tol{:e}.json",
        o.half_length, o.nodes, o.tol
    )
}

/// Computes the reference profile, or reads it from the cache directory.
pub fn load_profile(spec: &ProblemSpec, opts: &ProfileOptions, cache: Option<&Path>) -> Result<ReferenceProfile, Failure> {
    let path = cache.map(|d| d.join(cache_name(spec.n, spec.m, spec.lambda, opts)));
    if let Some(p) = &path {
        if let Ok(text) = fs::read_to_string(p) {
            if let Ok(prof) = serde_json::from_str::<ReferenceProfile>(&text) {
                return Ok(prof);
            }
        }
    }
    let prof = ReferenceProfile::compute(spec.n, spec.m, spec.lambda, opts)?;
    if let Some(p) = &path {
        let dir = p.parent().expect("cache file has a parent");
        fs::create_dir_all(dir)?;
        // write then rename so concurrent sweep workers never read a torn file
        let tmp = dir.join(format!(".{}.{}", std::process::id(), cache_name(spec.n, spec.m, spec.lambda, opts)));
        fs::write(&tmp, serde_json::to_string(&prof).map_err(std::io::Error::other)?)?;
        fs::rename(&tmp, p)?;
    }
    Ok(prof)
}

fn profile_for(s: &Setup, cache_root: Option<&Path>) -> Result<ReferenceProfile, Failure> {
    let root = cache_root.map(Path::to_path_buf).unwrap_or_else(|| s.out.clone());
    let cache = root.join("cache");
    let cache = s.cfg.output.cache_profile.then_some(cache.as_path());
    load_profile(&s.problem.spec, &s.cfg.critical.profile, cache)
}

#[derive(Serialize)]
struct ProfileSummary {
    residual: f64,
    newton_steps: usize,
    peak: f64,
    half_length: f64,
    nodes: usize,
}

impl From<&ReferenceProfile> for ProfileSummary {
    fn from(p: &ReferenceProfile) -> Self {
        ProfileSummary {
            residual: p.residual,
            newton_steps: p.newton_steps,
            peak: p.peak(),
            half_length: p.half_length,
            nodes: p.nodes,
        }
    }
}

pub fn bubble(cfg: &RunConfig, cache_root: Option<&Path>) -> Result<Outcome, Failure> {
    let s = setup(cfg)?;
    let crit = &s.cfg.critical;
    let prof = profile_for(&s, cache_root)?;
    let family = build_bubble_family(&s.problem.op, &prof, &s.cfg.bubble_center(), crit.radius, &crit.eps)?;
    let table = asymptotics_experiment(&prof, crit.radius, &crit.eps, &crit.gammas)?;
    #[derive(Serialize)]
    struct R<'a> {
        profile: ProfileSummary,
        family: &'a grushin::critical_solver::BubbleFamily,
        asymptotics: &'a grushin::critical_solver::AsymptoticsTable,
    }
    s.write_report(
        "bubble",
        R {
            profile: (&prof).into(),
            family: &family,
            asymptotics: &table,
        },
    )?;
    let mut header = vec!["eps".to_string(), "dirichlet".into(), "critical".into(), "l2".into()];
    header.extend(table.gammas.iter().map(|g| format!("gamma_{g}")));
    header.extend(["dirichlet_deficit".into(), "critical_deficit".into()]);
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&hdr);
    for r in &table.rows {
        let mut row = vec![r.eps, r.dirichlet, r.critical, r.l2];
        row.extend(&r.gamma);
        row.extend([r.dirichlet_deficit, r.critical_deficit]);
        t.row(&row);
    }
    t.write(&s.out.join("asymptotics.csv"))?;
    if let Some(m) = family.members.last() {
        s.write_field("bubble.csv", &m.u)?;
    }
    let fits: Vec<String> = table
        .fits
        .iter()
        .map(|f| format!("{} {:.4} vs {:.4}", f.quantity, f.observed, f.predicted))
        .collect();
    Ok(Outcome {
        summary: format!(
            "bubble: {} of {} eps resolved on the grid; slopes {}",
            family.members.len(),
            crit.eps.len(),
            fits.join(", ")
        ),
        ..Default::default()
    })
}

fn local_minimum(s: &Setup, th: &CriticalThresholds) -> Result<SolveResult, Failure> {
    let opts = CriticalOptions {
        tol: s.cfg.critical.local_tol,
        ..s.cfg.critical.options.clone()
    };
    Ok(local_minimize_in_ball(&s.problem, th, &opts)?)
}

fn write_gap(s: &Setup, gap: &grushin::critical_solver::GapTable) -> Result<(), Failure> {
    let mut t = Table::new(&["eps", "peak", "t_peak", "margin", "holds"]);
    for r in &gap.rows {
        t.row(&[r.eps, r.peak, r.t_peak, r.margin, if r.holds { 1.0 } else { 0.0 }]);
    }
    t.write(&s.out.join("gap.csv"))?;
    Ok(())
}

pub fn mpl_gap(cfg: &RunConfig, cache_root: Option<&Path>) -> Result<Outcome, Failure> {
    let s = setup(cfg)?;
    let mut th = s.require_critical()?.clone();
    let u_mu = local_minimum(&s, &th)?;
    th.set_local_minimum(u_mu.energy, s.problem.exponents.q_dim);
    let crit = &s.cfg.critical;
    let prof = profile_for(&s, cache_root)?;
    let family = build_bubble_family(&s.problem.op, &prof, &s.cfg.bubble_center(), crit.radius, &crit.eps)?;
    let gap = verify_mpl_gap(&s.problem, &th, &u_mu, &family)?;
    #[derive(Serialize)]
    struct R<'a> {
        thresholds: &'a CriticalThresholds,
        local_minimum: &'a SolveResult,
        family: &'a grushin::critical_solver::BubbleFamily,
        gap: &'a grushin::critical_solver::GapTable,
    }
    s.write_report(
        "mpl-gap",
        R {
            thresholds: &th,
            local_minimum: &u_mu,
            family: &family,
            gap: &gap,
        },
    )?;
    write_gap(&s, &gap)?;
    let holding = gap.rows.iter().filter(|r| r.holds).count();
    Ok(Outcome {
        summary: format!(
            "mpl-gap: threshold {:.6e}, inequality holds for {} of {} resolved eps",
            gap.threshold,
            holding,
            gap.rows.len()
        ),
        ..Default::default()
    })
}

#[derive(Serialize)]
struct CriticalReport<'a> {
    thresholds: &'a CriticalThresholds,
    sphere: &'a grushin::critical_solver::SphereCheck,
    local_minimum: &'a SolveResult,
    local_checks: LocalChecks,
    family: &'a grushin::critical_solver::BubbleFamily,
    gap: &'a grushin::critical_solver::GapTable,
    mountain_pass: Option<&'a grushin::critical_solver::MountainPass>,
    mountain_pass_error: Option<String>,
    direction_eps: f64,
    /// Only the critical points found here certify this level.
    c_tilde_note: &'static str,
}

#[derive(Serialize)]
struct LocalChecks {
    energy_negative: bool,
    norm: f64,
    delta: f64,
    inside_ball: bool,
}

pub fn solve_critical(cfg: &RunConfig, cache_root: Option<&Path>) -> Result<Outcome, Failure> {
    let s = setup(cfg)?;
    let mut th = s.require_critical()?.clone();
    let crit = &s.cfg.critical;
    let sphere = check_sphere_floor(&s.problem, &th, crit.sphere_samples, crit.seed);
    let u_mu = local_minimum(&s, &th)?;
    th.set_local_minimum(u_mu.energy, s.problem.exponents.q_dim);
    let prof = profile_for(&s, cache_root)?;
    let family = build_bubble_family(&s.problem.op, &prof, &s.cfg.bubble_center(), crit.radius, &crit.eps)?;
    let gap = verify_mpl_gap(&s.problem, &th, &u_mu, &family)?;
    let dir = &family.members[0];
    let mp = mountain_pass(&s.problem, &th, &u_mu, &dir.w, &crit.options);
    s.write_report(
        "solve-critical",
        CriticalReport {
            thresholds: &th,
            sphere: &sphere,
            local_minimum: &u_mu,
            local_checks: LocalChecks {
                energy_negative: u_mu.energy < 0.0,
                norm: u_mu.norm,
                delta: th.delta,
                inside_ball: u_mu.norm < th.delta,
            },
            family: &family,
            gap: &gap,
            mountain_pass: mp.as_ref().ok(),
            mountain_pass_error: mp.as_ref().err().map(|e| e.to_string()),
            direction_eps: dir.eps,
            c_tilde_note: "c_tilde_hat is certified only from the critical points found in this run",
        },
    )?;
    write_gap(&s, &gap)?;
    s.write_trace("trace_local.csv", &u_mu)?;
    s.write_field("field_local.csv", &u_mu.field)?;
    let mp = mp?;
    let mut t = Table::new(&["theta", "energy"]);
    for pt in &mp.path {
        t.row(&[pt.theta, pt.energy]);
    }
    t.write(&s.out.join("path.csv"))?;
    s.write_trace("trace_mountain.csv", &mp.solution)?;
    s.write_field("field_mountain.csv", &mp.solution.field)?;
    let mut metrics = BTreeMap::new();
    metrics.insert("mu", s.problem.mu());
    metrics.insert("local_energy", u_mu.energy);
    metrics.insert("mountain_level", mp.level);
    Ok(Outcome {
        summary: format!(
            "solve-critical: I(u_mu) = {:.6e}, c_mu = {:.6e} in [{:.6e}, {}), residual {:.1e}",
            u_mu.energy,
            mp.level,
            mp.lower_bound,
            mp.upper_bound.map_or("?".into(), |u| format!("{u:.6e}")),
            mp.solution.residual
        ),
        metrics,
    })
}
