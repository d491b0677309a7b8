//! Energy functional, Sobolev gradient and Nehari classification.
//!
//! ```text
//! I(u)   = ½‖u‖² − μ/(r+1) ∫ g|u|^{r+1} − 1/(s+1) ∫ h|u|^{s+1}
//! τ(u)   = ‖u‖² − μ ∫ g|u|^{r+1} − ∫ h|u|^{s+1}                = ⟨I'(u), u⟩
//! τ'(u)u = 2‖u‖² − μ(r+1) ∫ g|u|^{r+1} − (s+1) ∫ h|u|^{s+1}
//! ```
//!
//! In the critical regime `|u|` is replaced by `u⁺` and `s+1 = 2*`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, TensorGrid};
use crate::model::{Exponents, ProblemSpec, Regime};
use crate::operator::{GrushinOperator, PowerMode};
use crate::sparse::{minres, MinresOutcome};

/// A validated spec together with its discretization.
#[derive(Debug)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub exponents: Exponents,
    pub op: GrushinOperator,
    /// g and h at the interior nodes.
    pub g: Field,
    pub h: Field,
}

impl Problem {
    pub fn new(spec: ProblemSpec, nodes: &[usize]) -> Result<Self> {
        let report = crate::model::validate(&spec);
        if let Some(bad) = report.failures().next() {
            return Err(Error::Precondition(format!("{}: {}", bad.name, bad.detail)));
        }
        let grid = TensorGrid::new(&spec.bounds, nodes, spec.n)?;
        Problem::from_grid(spec, grid)
    }

    /// Skips hypothesis validation; used for deliberately degenerate specs.
    pub fn from_grid(spec: ProblemSpec, grid: TensorGrid) -> Result<Self> {
        let exponents = spec.exponents()?;
        let g = grid.sample(|z| spec.g(z));
        let h = grid.sample(|z| spec.h(z));
        let op = GrushinOperator::assemble(grid, spec.lambda)?;
        Ok(Problem {
            spec,
            exponents,
            op,
            g,
            h,
        })
    }

    pub fn grid(&self) -> &TensorGrid {
        &self.op.grid
    }

    pub fn mode(&self) -> PowerMode {
        match self.spec.regime {
            Regime::Subcritical => PowerMode::Abs,
            Regime::Critical => PowerMode::PositivePart,
        }
    }

    pub fn mu(&self) -> f64 {
        self.spec.mu
    }

    /// `∫ g|u|^{r+1}` (or with u⁺).
    pub fn concave_integral(&self, u: &[f64]) -> f64 {
        self.op
            .weighted_power_integral(&self.g, u, self.spec.r + 1.0, self.mode())
    }

    /// `∫ h|u|^{s+1}` (or with u⁺).
    pub fn convex_integral(&self, u: &[f64]) -> f64 {
        self.op
            .weighted_power_integral(&self.h, u, self.spec.s + 1.0, self.mode())
    }

    /// `‖g‖_a` over Ω by nodal trapezoid quadrature.
    pub fn g_norm(&self) -> f64 {
        weight_norm(self.grid(), |z| self.spec.g(z), self.exponents.a)
    }

    /// `‖h‖_b` over Ω.
    pub fn h_norm(&self) -> f64 {
        weight_norm(self.grid(), |z| self.spec.h(z), self.exponents.b)
    }

    /// Nonlinear load vector `V (μ g f_r(u) + h f_s(u))` with
    /// `f_p(u) = |u|^{p-1}u` or `(u⁺)^p`.
    pub fn load(&self, u: &[f64]) -> Field {
        let v = self.op.volume();
        let (r, s, mu) = (self.spec.r, self.spec.s, self.spec.mu);
        let mode = self.mode();
        u.iter()
            .zip(self.g.iter().zip(&self.h))
            .map(|(&ui, (&gi, &hi))| v * (mu * gi * odd_power(ui, r, mode) + hi * odd_power(ui, s, mode)))
            .collect()
    }
}

impl Problem {
    /// Diagonal of the derivative of [`Problem::load`]. Nodes where the
    /// concave term is not differentiable (`u = 0` with `r < 1`) get the
    /// convex part only.
    pub fn load_derivative(&self, u: &[f64]) -> Field {
        let v = self.op.volume();
        let (r, s, mu) = (self.spec.r, self.spec.s, self.spec.mu);
        let positive_only = self.mode() == PowerMode::PositivePart;
        u.iter()
            .zip(self.g.iter().zip(&self.h))
            .map(|(&ui, (&gi, &hi))| {
                if ui == 0.0 || (positive_only && ui < 0.0) {
                    return 0.0;
                }
                let a = ui.abs();
                let concave = if r == 0.0 { 0.0 } else { mu * gi * r * a.powf(r - 1.0) };
                v * (concave + hi * s * a.powf(s - 1.0))
            })
            .collect()
    }

    /// Newton correction `δ` solving `(A − diag(load'(u))) δ = load(u) − A u`
    /// by MINRES preconditioned with `A⁻¹`.
    pub fn newton_step(&self, u: &[f64], rtol: f64, max_iter: usize) -> MinresOutcome {
        let d = self.load_derivative(u);
        let au = self.op.apply(u);
        let rhs: Field = self.load(u).iter().zip(&au).map(|(l, a)| l - a).collect();
        minres(
            |x: &[f64]| {
                let mut y = self.op.apply(x);
                y.iter_mut().zip(d.iter().zip(x)).for_each(|(yi, (di, xi))| *yi -= di * xi);
                y
            },
            |r: &[f64]| self.op.solve(r),
            &rhs,
            rtol,
            max_iter,
        )
    }
}

fn weight_norm<F: Fn(&[f64]) -> f64>(grid: &TensorGrid, f: F, a: f64) -> f64 {
    if a.is_infinite() {
        let mut best: f64 = 0.0;
        grid.for_each_node(|z, _| best = best.max(f(z).abs()));
        best
    } else {
        grid.integrate_fn(|z| f(z).abs().powf(a)).powf(1.0 / a)
    }
}

/// `|u|^{p-1}u` (odd extension) or `(u⁺)^p`.
pub fn odd_power(u: f64, p: f64, mode: PowerMode) -> f64 {
    match mode {
        PowerMode::Abs => {
            if u == 0.0 {
                0.0
            } else {
                u.signum() * u.abs().powf(p)
            }
        }
        PowerMode::PositivePart => {
            if u > 0.0 {
                u.powf(p)
            } else {
                0.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// ½‖u‖²
    pub dirichlet: f64,
    /// μ/(r+1) ∫ g|u|^{r+1}
    pub concave: f64,
    /// 1/(s+1) ∫ h|u|^{s+1}
    pub convex: f64,
    pub total: f64,
    pub tau: f64,
    /// ⟨τ'(u), u⟩
    pub tau_prime: f64,
}

pub fn energy(p: &Problem, u: &[f64]) -> EnergyBreakdown {
    let (r, s, mu) = (p.spec.r, p.spec.s, p.spec.mu);
    let a = p.op.energy(u);
    let b = p.concave_integral(u);
    let c = p.convex_integral(u);
    let dirichlet = 0.5 * a;
    let concave = mu / (r + 1.0) * b;
    let convex = c / (s + 1.0);
    EnergyBreakdown {
        dirichlet,
        concave,
        convex,
        total: dirichlet - concave - convex,
        tau: a - mu * b - c,
        tau_prime: 2.0 * a - mu * (r + 1.0) * b - (s + 1.0) * c,
    }
}

/// Total energy only.
pub fn functional_value(p: &Problem, u: &[f64]) -> f64 {
    energy(p, u).total
}

/// Sobolev gradient `u − A⁻¹ load(u)`: the representative of `I'(u)` in the
/// `‖·‖_λ` inner product.
pub fn gradient(p: &Problem, u: &[f64]) -> Field {
    let w = p.op.solve(&p.load(u));
    u.iter().zip(w).map(|(a, b)| a - b).collect()
}

/// `‖∇I(u)‖_λ`, the dual norm of `I'(u)`.
pub fn residual_norm(p: &Problem, u: &[f64]) -> f64 {
    p.op.norm(&gradient(p, u))
}

/// Relative mismatch of the weak form `uᵀAφ = ⟨load(u), φ⟩` for a test field.
pub fn weak_form_mismatch(p: &Problem, u: &[f64], phi: &[f64]) -> f64 {
    let lhs = p.op.inner(u, phi);
    let rhs: f64 = p.load(u).iter().zip(phi).map(|(a, b)| a * b).sum();
    let scale = p.op.norm(u) * p.op.norm(phi);
    (lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NehariKind {
    Plus,
    Minus,
    Zero,
    OffManifold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NehariClass {
    pub kind: NehariKind,
    pub tau: f64,
    pub tau_prime: f64,
    /// Absolute tolerance applied to τ and ⟨τ'(u),u⟩.
    pub tol: f64,
}

/// Default relative membership tolerance.
pub const NEHARI_TOL: f64 = 1e-8;

/// Classifies `u` with the absolute tolerance `tol · max(1, ‖u‖²)`.
pub fn classify(p: &Problem, u: &[f64], tol: f64) -> Result<NehariClass> {
    if u.iter().all(|&v| v == 0.0) {
        return Err(Error::Domain("Nehari manifold excludes 0".into()));
    }
    let e = energy(p, u);
    let abs_tol = tol * (2.0 * e.dirichlet).max(1.0);
    let kind = if e.tau.abs() > abs_tol {
        NehariKind::OffManifold
    } else if e.tau_prime > abs_tol {
        NehariKind::Plus
    } else if e.tau_prime < -abs_tol {
        NehariKind::Minus
    } else {
        NehariKind::Zero
    };
    Ok(NehariClass {
        kind,
        tau: e.tau,
        tau_prime: e.tau_prime,
        tol: abs_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bench(nodes: usize, mu: f64) -> Problem {
        Problem::new(ProblemSpec::benchmark(mu), &[nodes, nodes]).unwrap()
    }

    fn random_field(p: &Problem, rng: &mut ChaCha8Rng) -> Field {
        let g = p.grid();
        let (a, b, c): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
        g.sample(|z| {
            (1.0 - z[0] * z[0]) * (1.0 - z[1] * z[1]) * (a + b * z[0] + c * z[1] * z[0])
        })
        .into_iter()
        .map(|v| v + 0.01 * rng.gen_range(-1.0..1.0))
        .collect()
    }

    #[test]
    fn load_derivative_matches_differences() {
        let p = bench(17, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_field(&p, &mut rng);
        let d = p.load_derivative(&u);
        let h = 1e-6;
        for i in [10, 40, 100] {
            let mut up = u.clone();
            up[i] += h;
            let mut um = u.clone();
            um[i] -= h;
            let fd = (p.load(&up)[i] - p.load(&um)[i]) / (2.0 * h);
            assert!((fd - d[i]).abs() < 1e-5 * d[i].abs(), "{fd} {}", d[i]);
        }
    }

    #[test]
    fn zero_field() {
        let p = bench(17, 0.1);
        let z = p.grid().zeros();
        let e = energy(&p, &z);
        assert_eq!(e.total, 0.0);
        assert_eq!(e.tau, 0.0);
        assert!(gradient(&p, &z).iter().all(|&v| v == 0.0));
        assert_eq!(residual_norm(&p, &z), 0.0);
        assert!(classify(&p, &z, NEHARI_TOL).is_err());
    }

    #[test]
    fn critical_negative_field_is_pure_dirichlet() {
        let p = Problem::new(ProblemSpec::critical_benchmark(0.1), &[17, 17]).unwrap();
        let u: Field = p.grid().sample(|z| -(1.0 - z[0] * z[0]) * (0.25 - z[1] * z[1]));
        let e = energy(&p, &u);
        assert_eq!(e.concave, 0.0);
        assert_eq!(e.convex, 0.0);
        assert!(e.total > 0.0 && e.total == e.dirichlet);
    }

    #[test]
    fn quadratic_case_gradient_is_identity() {
        // h = 0 and tiny μ·g = 0: the functional is ½‖u‖², so ∇I(u) = u
        let mut spec = ProblemSpec::benchmark(1e-300);
        spec.h_weight = WeightSpec::constant(0.0);
        spec.g_weight = WeightSpec::constant(0.0);
        let grid = TensorGrid::uniform(&spec.bounds.clone(), 17, 1).unwrap();
        let p = Problem::from_grid(spec, grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_field(&p, &mut rng);
        let g = gradient(&p, &u);
        assert!(u.iter().zip(&g).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn benchmark_energy_components() {
        let p = bench(129, 0.1);
        let u = p.grid().sample(|z| (1.0 - z[0] * z[0]) * (1.0 - z[1] * z[1]));
        let e = energy(&p, &u);
        // 4-point Gauss-Legendre per unit panel, 64 panels per axis
        let gl = |f: &dyn Fn(f64, f64) -> f64| {
            let x = [-0.861136311594053, -0.339981043584856, 0.339981043584856, 0.861136311594053];
            let w = [0.347854845137454, 0.652145154862546, 0.652145154862546, 0.347854845137454];
            let panels = 64;
            let hp = 2.0 / panels as f64;
            let mut s = 0.0;
            for i in 0..panels {
                for j in 0..panels {
                    for a in 0..4 {
                        for b in 0..4 {
                            let xx = -1.0 + hp * (i as f64 + 0.5 + 0.5 * x[a]);
                            let yy = -1.0 + hp * (j as f64 + 0.5 + 0.5 * x[b]);
                            s += w[a] * w[b] * f(xx, yy);
                        }
                    }
                }
            }
            s * hp * hp / 4.0
        };
        let b = gl(&|x, y| ((1.0 - x * x) * (1.0 - y * y)).powf(1.5));
        let c = gl(&|x, y| ((1.0 - x * x) * (1.0 - y * y)).powi(4));
        assert!((p.concave_integral(&u) - b).abs() < 1e-3);
        assert!((p.convex_integral(&u) - c).abs() < 1e-3);
        let expected = 0.5 * 1024.0 / 315.0 - 0.1 / 1.5 * b - 0.25 * c;
        assert!((e.total - expected).abs() < 0.02, "{} vs {}", e.total, expected);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = bench(33, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let u = random_field(&p, &mut rng);
            let phi = random_field(&p, &mut rng);
            let eps = 1e-4;
            let up: Field = u.iter().zip(&phi).map(|(a, b)| a + eps * b).collect();
            let um: Field = u.iter().zip(&phi).map(|(a, b)| a - eps * b).collect();
            let fd = (functional_value(&p, &up) - functional_value(&p, &um)) / (2.0 * eps);
            let an = p.op.inner(&gradient(&p, &u), &phi);
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "{fd} vs {an}");
        }
    }

    #[test]
    fn random_field_is_not_critical() {
        let p = bench(33, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_field(&p, &mut rng);
        assert!(residual_norm(&p, &u) > 0.0);
        assert_eq!(classify(&p, &u, NEHARI_TOL).unwrap().kind, NehariKind::OffManifold);
    }

    #[test]
    fn weight_norms() {
        let p = bench(33, 0.1);
        let ex = p.exponents;
        assert!((p.g_norm() - 4f64.powf(1.0 / ex.a)).abs() < 1e-12);
        assert!((p.h_norm() - 4f64.powf(1.0 / ex.b)).abs() < 1e-12);
        let c = Problem::new(ProblemSpec::critical_benchmark(0.1), &[17, 17]).unwrap();
        assert_eq!(c.h_norm(), 1.0);
    }
}
