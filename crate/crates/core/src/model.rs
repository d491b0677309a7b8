//! Continuous problem description: dimensions, exponents and weights.
//!
//! The problem is
//!
//! ```text
//! -Δ_λ u = μ g |u|^{r-1} u + h |u|^{s-1} u   in Ω,   u = 0 on ∂Ω,
//! Δ_λ = Δ_x + |x|^{2λ} Δ_y,   z = (x, y) ∈ R^n × R^m.
//! ```
//!
//! Scaling is governed by the homogeneous dimension `Q = n + (1+λ)m` and
//! the critical exponent `2Q/(Q-2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::gauge_norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Subcritical,
    Critical,
}

/// A gauge ball `{ z : ρ(z - center) < radius }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// Pointwise definition of a weight function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightProfile {
    Constant {
        value: f64,
    },
    /// Sum of monomials `coeff * Π z_i^{powers_i}`.
    Polynomial {
        terms: Vec<Monomial>,
    },
    /// `inside` on the gauge ball around `center`, `outside` elsewhere.
    PiecewiseSignChanging {
        center: Vec<f64>,
        radius: f64,
        inside: f64,
        outside: f64,
    },
    /// Values on a uniform lattice spanning the box (row-major, last axis
    /// fastest), looked up at the nearest lattice node.
    Tabulated {
        nodes: Vec<usize>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    #[serde(flatten)]
    pub profile: WeightProfile,
    /// Lebesgue exponent `q` (for g) or `p` (for h). Defaults to the midpoint
    /// of the admissible interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    /// Ball on which g is bounded; required for g in the critical regime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball: Option<GaugeBall>,
}

impl WeightSpec {
    pub fn constant(value: f64) -> Self {
        WeightSpec {
            profile: WeightProfile::Constant { value },
            exponent: None,
            ball: None,
        }
    }

    /// Evaluates the weight at `z`. `bounds` is the box, needed for tabulated
    /// weights; `lambda` sets the gauge for piecewise weights.
    pub fn eval(&self, z: &[f64], n: usize, lambda: f64, bounds: &[[f64; 2]]) -> f64 {
        match &self.profile {
            WeightProfile::Constant { value } => *value,
            WeightProfile::Polynomial { terms } => terms
                .iter()
                .map(|t| {
                    t.coeff
                        * t.powers
                            .iter()
                            .zip(z)
                            .map(|(&k, &zi)| zi.powi(k as i32))
                            .product::<f64>()
                })
                .sum(),
            WeightProfile::PiecewiseSignChanging {
                center,
                radius,
                inside,
                outside,
            } => {
                let d: Vec<f64> = z.iter().zip(center).map(|(a, b)| a - b).collect();
                if gauge_norm(&d[..n], &d[n..], lambda) < *radius {
                    *inside
                } else {
                    *outside
                }
            }
            WeightProfile::Tabulated { nodes, values } => {
                let mut idx = 0usize;
                for (k, (&cnt, b)) in nodes.iter().zip(bounds).enumerate() {
                    let t = if cnt > 1 {
                        (z[k] - b[0]) / (b[1] - b[0]) * (cnt - 1) as f64
                    } else {
                        0.0
                    };
                    let i = (t.round().max(0.0) as usize).min(cnt.saturating_sub(1));
                    idx = idx * cnt + i;
                }
                values.get(idx).copied().unwrap_or(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub n: usize,
    pub m: usize,
    pub lambda: f64,
    pub r: f64,
    pub s: f64,
    pub mu: f64,
    /// Per-axis intervals; the first `n` axes are x, the remaining `m` are y.
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    pub g_weight: WeightSpec,
    pub h_weight: WeightSpec,
    pub regime: Regime,
}

/// Exponent table derived from a spec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    /// Homogeneous dimension Q.
    pub q_dim: f64,
    /// Critical exponent 2Q/(Q-2).
    pub crit: f64,
    pub q: f64,
    pub p: f64,
    /// Hölder conjugate for g: (r+1)/q + 1/a = 1.
    pub a: f64,
    /// Hölder conjugate for h: (s+1)/p + 1/b = 1. Infinite when p = s+1.
    pub b: f64,
}

/// Returns `(Q, 2Q/(Q-2))`.
pub fn homogeneous_exponents(n: usize, m: usize, lambda: f64) -> Result<(f64, f64)> {
    let q = n as f64 + (1.0 + lambda) * m as f64;
    if q <= 2.0 {
        return Err(Error::CriticalExponentUndefined(q));
    }
    Ok((q, 2.0 * q / (q - 2.0)))
}

pub fn derived_exponents(spec: &ProblemSpec) -> Result<(f64, f64)> {
    homogeneous_exponents(spec.n, spec.m, spec.lambda)
}

impl ProblemSpec {
    /// n = m = 1, λ = 1 on (-1,1)², g = h = 1, r = 1/2, s = 3.
    pub fn benchmark(mu: f64) -> Self {
        ProblemSpec {
            n: 1,
            m: 1,
            lambda: 1.0,
            r: 0.5,
            s: 3.0,
            mu,
            bounds: vec![[-1.0, 1.0], [-1.0, 1.0]],
            g_weight: WeightSpec::constant(1.0),
            h_weight: WeightSpec::constant(1.0),
            regime: Regime::Subcritical,
        }
    }

    /// Critical counterpart of the benchmark on (-1,1)×(-1/2,1/2), s = 5.
    pub fn critical_benchmark(mu: f64) -> Self {
        let mut g = WeightSpec::constant(1.0);
        g.ball = Some(GaugeBall {
            center: vec![0.5, 0.0],
            radius: 0.2,
        });
        ProblemSpec {
            n: 1,
            m: 1,
            lambda: 1.0,
            r: 0.5,
            s: 5.0,
            mu,
            bounds: vec![[-1.0, 1.0], [-0.5, 0.5]],
            g_weight: g,
            h_weight: WeightSpec::constant(1.0),
            regime: Regime::Critical,
        }
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        ProblemSpec { mu, ..self.clone() }
    }

    /// Q, 2*, and the chosen q, p with their conjugates a, b.
    pub fn exponents(&self) -> Result<Exponents> {
        let (q_dim, crit) = derived_exponents(self)?;
        let q = self
            .g_weight
            .exponent
            .unwrap_or(0.5 * (self.r + 1.0 + crit));
        let p = match self.regime {
            Regime::Critical => self.h_weight.exponent.unwrap_or(crit),
            Regime::Subcritical => self
                .h_weight
                .exponent
                .unwrap_or(0.5 * (self.s + 1.0 + crit)),
        };
        let a = q / (q - (self.r + 1.0));
        let b = if p > self.s + 1.0 {
            p / (p - (self.s + 1.0))
        } else {
            f64::INFINITY
        };
        Ok(Exponents {
            q_dim,
            crit,
            q,
            p,
            a,
            b,
        })
    }

    pub fn g(&self, z: &[f64]) -> f64 {
        self.g_weight.eval(z, self.n, self.lambda, &self.bounds)
    }

    pub fn h(&self, z: &[f64]) -> f64 {
        self.h_weight.eval(z, self.n, self.lambda, &self.bounds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<HypothesisCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(HypothesisCheck {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// Points of a closed lattice over the box used for pointwise weight checks.
fn sample_points(bounds: &[[f64; 2]]) -> Vec<Vec<f64>> {
    let per_axis = match bounds.len() {
        0..=2 => 65,
        3 => 17,
        _ => 7,
    };
    let mut pts = vec![Vec::new()];
    for b in bounds {
        let mut next = Vec::with_capacity(pts.len() * per_axis);
        for p in &pts {
            for i in 0..per_axis {
                let t = i as f64 / (per_axis - 1) as f64;
                let mut q = p.clone();
                q.push(b[0] + t * (b[1] - b[0]));
                next.push(q);
            }
        }
        pts = next;
    }
    pts
}

/// Checks every standing hypothesis; failures carry the offending value.
pub fn validate(spec: &ProblemSpec) -> ValidationReport {
    let mut rep = ValidationReport { checks: Vec::new() };
    let dim_ok = spec.n >= 1 && spec.m >= 1 && spec.bounds.len() == spec.n + spec.m;
    rep.push(
        "dimensions",
        dim_ok,
        format!(
            "n = {}, m = {}, box axes = {}",
            spec.n,
            spec.m,
            spec.bounds.len()
        ),
    );
    rep.push(
        "lambda > 0",
        spec.lambda > 0.0,
        format!("lambda = {}", spec.lambda),
    );
    rep.push("mu > 0", spec.mu > 0.0, format!("mu = {}", spec.mu));
    rep.push(
        "0 <= r < 1",
        (0.0..1.0).contains(&spec.r),
        format!("r = {}", spec.r),
    );
    rep.push("s > 1", spec.s > 1.0, format!("s = {}", spec.s));

    let (q_dim, crit) = match derived_exponents(spec) {
        Ok(v) => {
            rep.push("Q > 2", true, format!("Q = {}", v.0));
            v
        }
        Err(e) => {
            rep.push("Q > 2", false, e.to_string());
            return rep;
        }
    };
    match spec.regime {
        Regime::Subcritical => rep.push(
            "convex exponent range",
            spec.s < crit - 1.0,
            if spec.s < crit - 1.0 {
                format!("s = {} < 2*-1 = {}", spec.s, crit - 1.0)
            } else {
                format!("s < 2*-1 violated ({} >= {})", spec.s, crit - 1.0)
            },
        ),
        Regime::Critical => {
            let ok = (spec.s - (crit - 1.0)).abs() <= 1e-12 * crit;
            rep.push(
                "convex exponent range",
                ok,
                format!("critical regime needs s = 2*-1 = {} (s = {})", crit - 1.0, spec.s),
            );
        }
    }

    let boxes_ok = dim_ok && spec.bounds.iter().all(|b| b[0] < b[1]);
    rep.push("box intervals", boxes_ok, format!("{:?}", spec.bounds));
    if !boxes_ok {
        return rep;
    }
    let straddles = spec.bounds[..spec.n]
        .iter()
        .all(|b| b[0] < 0.0 && b[1] > 0.0);
    rep.push(
        "box meets x = 0",
        straddles,
        format!("x-intervals {:?}", &spec.bounds[..spec.n]),
    );

    if let Ok(ex) = spec.exponents() {
        let q_ok = ex.q > spec.r + 1.0 && ex.q < crit;
        rep.push(
            "q in (r+1, 2*)",
            q_ok,
            format!("q = {}, interval ({}, {})", ex.q, spec.r + 1.0, crit),
        );
        if spec.regime == Regime::Subcritical {
            let p_ok = ex.p > spec.s + 1.0 && ex.p < crit;
            rep.push(
                "p in (s+1, 2*)",
                p_ok,
                format!("p = {}, interval ({}, {})", ex.p, spec.s + 1.0, crit),
            );
        }
    }

    let pts = sample_points(&spec.bounds);
    let gs: Vec<f64> = pts.iter().map(|z| spec.g(z)).collect();
    let hs: Vec<f64> = pts.iter().map(|z| spec.h(z)).collect();
    let finite = gs.iter().chain(&hs).all(|v| v.is_finite());
    rep.push("weights finite", finite, String::new());
    let gmax = gs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let gmin = gs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hmax = hs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    rep.push(
        "g positive part nonzero",
        gmax > 0.0,
        format!("max g = {gmax}"),
    );
    rep.push(
        "h positive part nonzero",
        hmax > 0.0,
        format!("max h = {hmax}"),
    );
    if spec.r == 0.0 {
        rep.push(
            "g >= 0 when r = 0",
            gmin >= 0.0,
            format!("min g = {gmin}"),
        );
    }

    if spec.regime == Regime::Critical {
        rep.push(
            "g >= 0 (critical)",
            gmin >= 0.0,
            format!("min g = {gmin}"),
        );
        let h_one = hs.iter().all(|&v| v == 1.0);
        rep.push(
            "h = 1 (critical)",
            h_one,
            "the critical term carries no weight".to_string(),
        );
        match &spec.g_weight.ball {
            None => rep.push("g ball", false, "no ball supplied for g".to_string()),
            Some(ball) => {
                let (ok, detail) = ball_check(spec, ball, q_dim);
                rep.push("g ball", ok, detail);
            }
        }
    }
    rep
}

/// The doubled ball must sit inside Ω and avoid the degeneracy set x = 0.
fn ball_check(spec: &ProblemSpec, ball: &GaugeBall, _q_dim: f64) -> (bool, String) {
    if ball.center.len() != spec.dim() || ball.radius <= 0.0 {
        return (false, format!("malformed ball {:?}", ball));
    }
    let two_r = 2.0 * ball.radius;
    if let Err(e) = crate::grid::ball_inside_box(&ball.center, two_r, spec.n, spec.lambda, &spec.bounds)
    {
        return (false, e.to_string());
    }
    let x0: f64 = ball.center[..spec.n].iter().map(|v| v * v).sum::<f64>().sqrt();
    if x0 <= two_r {
        return (
            false,
            format!("ball of radius {two_r} around {:?} meets x = 0", ball.center),
        );
    }
    (
        true,
        format!("B_2R({:?}), R = {} inside the box and off x = 0", ball.center, ball.radius),
    )
}
