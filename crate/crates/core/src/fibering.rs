//! One-dimensional analysis of the fibering map `F(t) = I(tu)`.
//!
//! ```text
//! F(t)  = ½At² − μB t^{r+1}/(r+1) − C t^{s+1}/(s+1)
//! F'(t) = t^r (G(t) − μB),      G(t) = A t^{1−r} − C t^{s−r}
//! ```
//!
//! with `A = ‖u‖²`, `B = ∫g|u|^{r+1}`, `C = ∫h|u|^{s+1}`. For `C > 0` the
//! function `G` rises from 0 to a single maximum at `t₀` and then decreases
//! to `−∞`, so `G = μB` has at most two positive roots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::Problem;
use crate::grid::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Plus,
    Minus,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Plus => "plus",
            Branch::Minus => "minus",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayData {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r: f64,
    pub s: f64,
    pub mu: f64,
}

impl RayData {
    pub fn new(a: f64, b: f64, c: f64, r: f64, s: f64, mu: f64) -> Self {
        RayData { a, b, c, r, s, mu }
    }

    pub fn f(&self, t: f64) -> f64 {
        let RayData { a, b, c, r, s, mu } = *self;
        0.5 * a * t * t - mu * b * t.powf(r + 1.0) / (r + 1.0) - c * t.powf(s + 1.0) / (s + 1.0)
    }

    pub fn f_prime(&self, t: f64) -> f64 {
        let RayData { a, b, c, r, s, mu } = *self;
        a * t - mu * b * t.powf(r) - c * t.powf(s)
    }

    pub fn f_second(&self, t: f64) -> f64 {
        let RayData { a, b, c, r, s, mu } = *self;
        let concave = if r == 0.0 { 0.0 } else { mu * b * r * t.powf(r - 1.0) };
        a - concave - c * s * t.powf(s - 1.0)
    }

    /// Maximizer `t₁ = (A/C)^{1/(s−1)}` of the part of F without the g term.
    pub fn t_one(&self) -> Result<f64> {
        if self.c <= 0.0 {
            return Err(Error::NoInteriorMaximum(self.c));
        }
        Ok((self.a / self.c).powf(1.0 / (self.s - 1.0)))
    }

    /// Value at `t₁` of F without the g term; a lower bound for `sup F`
    /// whenever `B ≤ 0`.
    pub fn t_one_value(&self) -> Result<f64> {
        let s = self.s;
        self.t_one()?;
        Ok((s - 1.0) / (2.0 * (s + 1.0))
            * (self.a.powf(s + 1.0) / (self.c * self.c)).powf(1.0 / (s - 1.0)))
    }
}

pub fn g_function(ray: &RayData, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    ray.a * t.powf(1.0 - ray.r) - ray.c * t.powf(ray.s - ray.r)
}

pub fn t_zero(ray: &RayData) -> Result<f64> {
    if ray.c <= 0.0 {
        return Err(Error::NoInteriorMaximum(ray.c));
    }
    let RayData { a, c, r, s, .. } = *ray;
    Ok(((1.0 - r) * a / ((s - r) * c)).powf(1.0 / (s - 1.0)))
}

/// `G(t₀)`, evaluated by substituting `t₀` into `G`.
pub fn sup_g(ray: &RayData) -> Result<f64> {
    Ok(g_function(ray, t_zero(ray)?))
}

/// The simplified closed form of `G(t₀)`; used to cross-check [`sup_g`].
pub fn sup_g_closed_form(ray: &RayData) -> Result<f64> {
    if ray.c <= 0.0 {
        return Err(Error::NoInteriorMaximum(ray.c));
    }
    let RayData { a, c, r, s, .. } = *ray;
    let k = (1.0 - r) / (s - 1.0);
    Ok(((1.0 - r) / (s - r)).powf(k) * ((s - 1.0) / (s - r)) * a.powf((s - r) / (s - 1.0))
        / c.powf(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FiberingCase {
    /// `B ≤ 0`: a single root beyond `t₀`.
    A,
    /// `0 < μB < G(t₀)`: one root on each side of `t₀`.
    B,
    /// `C ≤ 0`: G increasing, at most one root.
    Monotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberingRoot {
    pub branch: Branch,
    pub t: f64,
    pub energy: f64,
    pub f_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberingReport {
    pub ray: RayData,
    pub t0: Option<f64>,
    pub g_at_t0: Option<f64>,
    pub case: FiberingCase,
    pub roots: Vec<FiberingRoot>,
}

impl FiberingReport {
    pub fn root(&self, branch: Branch) -> Option<&FiberingRoot> {
        self.roots.iter().find(|r| r.branch == branch)
    }
}

const ROOT_RTOL: f64 = 1e-12;

/// Root of the increasing (`rising`) or decreasing function `f` in `(lo, hi)`.
/// Bisection until the bracket is within 1e-4 relative, then secant steps
/// kept inside the bracket.
fn bracketed_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, rising: bool) -> f64 {
    let sign = if rising { 1.0 } else { -1.0 };
    let h = |t: f64| sign * f(t);
    for _ in 0..200 {
        if hi - lo <= 1e-4 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (mut f_lo, mut f_hi) = (h(lo), h(hi));
    let mut t = 0.5 * (lo + hi);
    for _ in 0..100 {
        let mut next = if f_hi != f_lo {
            hi - f_hi * (hi - lo) / (f_hi - f_lo)
        } else {
            0.5 * (lo + hi)
        };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let fv = h(next);
        let step = (next - t).abs();
        t = next;
        if fv == 0.0 {
            break;
        }
        if fv < 0.0 {
            lo = next;
            f_lo = fv;
        } else {
            hi = next;
            f_hi = fv;
        }
        if step <= ROOT_RTOL * 1e-3 * t || hi - lo <= ROOT_RTOL * 1e-3 * hi {
            break;
        }
    }
    t
}

pub fn find_roots(ray: &RayData) -> Result<FiberingReport> {
    let target = ray.mu * ray.b;
    let g = |t: f64| g_function(ray, t) - target;
    let make = |branch, t: f64| FiberingRoot {
        branch,
        t,
        energy: ray.f(t),
        f_second: ray.f_second(t),
    };
    if ray.a <= 0.0 {
        return Err(Error::Domain("ray through 0".into()));
    }
    if ray.c <= 0.0 {
        if target <= 0.0 {
            return Err(Error::BranchEmpty(
                "G increasing from 0 and mu*B <= 0, no positive root".into(),
            ));
        }
        let mut hi = 1.0;
        while g(hi) < 0.0 {
            hi *= 2.0;
        }
        let t = bracketed_root(g, 0.0, hi, true);
        return Ok(FiberingReport {
            ray: *ray,
            t0: None,
            g_at_t0: None,
            case: FiberingCase::Monotone,
            roots: vec![make(Branch::Plus, t)],
        });
    }
    let t0 = t_zero(ray)?;
    let g0 = sup_g(ray)?;
    let mut hi = 2.0 * t0;
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut roots = Vec::with_capacity(2);
    let case = if target <= 0.0 {
        FiberingCase::A
    } else if target < g0 {
        roots.push(make(Branch::Plus, bracketed_root(g, 0.0, t0, true)));
        FiberingCase::B
    } else {
        return Err(Error::ThresholdExceeded {
            mu_b: target,
            sup_g: g0,
        });
    };
    roots.push(make(Branch::Minus, bracketed_root(g, t0, hi, false)));
    Ok(FiberingReport {
        ray: *ray,
        t0: Some(t0),
        g_at_t0: Some(g0),
        case,
        roots,
    })
}

/// `μ₀ = ((s−1)/(s−r)) ((1−r)/(s−r))^{(1−r)/(s−1)} (S_p^{s+1}‖h‖_b)^{−(1−r)/(s−1)} / (S_q^{r+1}‖g‖_a)`.
pub fn mu_zero(r: f64, s: f64, sq: f64, sp: f64, g_norm: f64, h_norm: f64) -> Result<f64> {
    if !(sq > 0.0 && sp > 0.0 && g_norm > 0.0 && h_norm > 0.0) {
        return Err(Error::Domain(format!(
            "mu_0 needs positive constants and norms (S_q={sq}, S_p={sp}, |g|={g_norm}, |h|={h_norm})"
        )));
    }
    let k = (1.0 - r) / (s - 1.0);
    Ok((s - 1.0) / (s - r) * ((1.0 - r) / (s - r)).powf(k)
        * (sp.powf(s + 1.0) * h_norm).powf(-k)
        / (sq.powf(r + 1.0) * g_norm))
}

/// Lower bound on `‖u‖` for fields classified minus:
/// `((1−r)/(S_p^{s+1}(s−r)‖h‖_b))^{1/(s−1)}`.
pub fn minus_norm_lower_bound(r: f64, s: f64, sp: f64, h_norm: f64) -> f64 {
    ((1.0 - r) / (sp.powf(s + 1.0) * (s - r) * h_norm)).powf(1.0 / (s - 1.0))
}

pub fn ray_data(p: &Problem, u: &[f64]) -> RayData {
    RayData {
        a: p.op.energy(u),
        b: p.concave_integral(u),
        c: p.convex_integral(u),
        r: p.spec.r,
        s: p.spec.s,
        mu: p.spec.mu,
    }
}

/// Rescales `u` onto the requested sheet of the Nehari manifold. Returns
/// the scale factor and the scaled field.
pub fn scale_to_nehari(p: &Problem, u: &[f64], branch: Branch) -> Result<(f64, Field)> {
    let report = find_roots(&ray_data(p, u))?;
    let root = report
        .root(branch)
        .ok_or_else(|| Error::BranchEmpty(format!("no {branch} root in case {:?}", report.case)))?;
    Ok((root.t, u.iter().map(|v| root.t * v).collect()))
}
