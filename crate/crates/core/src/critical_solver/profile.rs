//! Reference extremal `v` of `-Δ_λ v = v^{2*-1}` on the whole space.
//!
//! The profile is computed on a gauge box around the origin with Dirichlet
//! data equal to the far field `ρ^{2-Q}`, which pins the dilation scale
//! (the equation is invariant under `v ↦ t^{(Q-2)/2} v(δ_t ·)`). Outside the
//! box the far field itself is used.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gauge_gradient, gauge_norm_point, TensorGrid};
use crate::model::homogeneous_exponents;
use crate::operator::GrushinOperator;
use crate::sparse::minres;

/// A radial-type profile in scaled coordinates `ξ`.
pub trait Profile: Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn lambda(&self) -> f64;
    fn value(&self, xi: &[f64]) -> f64;
    fn gradient(&self, xi: &[f64]) -> Vec<f64>;
    /// Half-extents of the region where the profile is tabulated and the
    /// number of cells per axis. Quadrature aligns with these cells.
    fn core(&self) -> (Vec<f64>, Vec<usize>);

    fn dim(&self) -> usize {
        self.n() + self.m()
    }

    fn q_dim(&self) -> f64 {
        self.n() as f64 + (1.0 + self.lambda()) * self.m() as f64
    }

    /// Distance from the origin along each axis where the profile falls to
    /// half its central value.
    fn half_widths(&self) -> Vec<f64> {
        let d = self.dim();
        let origin = vec![0.0; d];
        let target = 0.5 * self.value(&origin);
        (0..d)
            .map(|k| {
                let at = |t: f64| {
                    let mut z = origin.clone();
                    z[k] = t;
                    self.value(&z)
                };
                let mut hi = 1.0;
                while at(hi) > target && hi < 1e6 {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if at(mid) > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-12 * hi {
                        break;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileOptions {
    /// Gauge half-size of the box: x in [-L, L], y in ±L^{1+λ}/(1+λ).
    pub half_length: f64,
    /// Nodes per axis, boundary included (odd).
    pub nodes: usize,
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            half_length: 4.0,
            nodes: 129,
            tol: 1e-10,
            max_newton: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProfile {
    pub n: usize,
    pub m: usize,
    pub lambda: f64,
    pub half_length: f64,
    pub nodes: usize,
    /// Values on the full lattice (boundary included), last axis fastest.
    pub values: Vec<f64>,
    pub residual: f64,
    pub newton_steps: usize,
}

impl ReferenceProfile {
    pub fn compute(n: usize, m: usize, lambda: f64, opts: &ProfileOptions) -> Result<Self> {
        let (q, crit) = homogeneous_exponents(n, m, lambda)?;
        if opts.nodes % 2 == 0 || opts.nodes < 9 || !(opts.half_length > 0.0) {
            return Err(Error::Domain(
                "profile box needs an odd node count >= 9 and positive size".into(),
            ));
        }
        let bounds = box_bounds(n, m, lambda, opts.half_length);
        let grid = TensorGrid::uniform(&bounds, opts.nodes, n)?;
        let op = GrushinOperator::assemble(grid, lambda)?;
        let far = |z: &[f64]| gauge_norm_point(z, n, lambda).powf(2.0 - q);
        let (bl, _) = op.boundary_coupling(far);
        let vol = op.volume();
        let p = crit - 1.0;
        let k = 1.0 + lambda;
        let mut u = op
            .grid
            .sample(|z| (1.0 + gauge_norm_point(z, n, lambda).powf(2.0 * k)).powf(-(q - 2.0) / (2.0 * k)));

        let mismatch = |u: &[f64]| -> Vec<f64> {
            let au = op.apply(u);
            au.iter()
                .zip(u)
                .zip(&bl)
                .map(|((a, &ui), b)| a - vol * ui.max(0.0).powf(p) - b)
                .collect()
        };
        let norm = |f: &[f64]| {
            let s = op.solve(f);
            f.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
        };

        let mut f = mismatch(&u);
        let mut res = norm(&f);
        let mut steps = 0;
        while res > opts.tol && steps < opts.max_newton {
            steps += 1;
            let diag: Vec<f64> = u.iter().map(|&x| vol * p * x.max(0.0).powf(p - 1.0)).collect();
            let jac = |d: &[f64]| -> Vec<f64> {
                let mut out = op.apply(d);
                out.iter_mut().zip(d).zip(&diag).for_each(|((o, di), c)| *o -= c * di);
                out
            };
            let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
            let step = minres(jac, |r| op.solve(r), &rhs, 1e-10, 500).x;
            let mut alpha = 1.0;
            loop {
                let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
                let ft = mismatch(&trial);
                let rt = norm(&ft);
                if rt < (1.0 - 1e-4 * alpha) * res || alpha < 1e-3 {
                    u = trial;
                    f = ft;
                    res = rt;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if res > opts.tol {
            return Err(Error::IterationCap {
                iterations: steps,
                residual: res,
                best: None,
            });
        }

        let grid = &op.grid;
        let dim = n + m;
        let total = opts.nodes.pow(dim as u32);
        let mut values = vec![0.0; total];
        let mut z = vec![0.0; dim];
        for (flat, slot) in values.iter_mut().enumerate() {
            let mut rem = flat;
            let mut interior = 0usize;
            let mut edge = false;
            for kk in (0..dim).rev() {
                let ik = rem % opts.nodes;
                rem /= opts.nodes;
                z[kk] = bounds[kk][0] + ik as f64 * grid.h[kk];
                if ik == 0 || ik == opts.nodes - 1 {
                    edge = true;
                } else {
                    interior += (ik - 1) * grid.strides()[kk];
                }
            }
            *slot = if edge { far(&z) } else { u[interior] };
        }
        Ok(ReferenceProfile {
            n,
            m,
            lambda,
            half_length: opts.half_length,
            nodes: opts.nodes,
            values,
            residual: res,
            newton_steps: steps,
        })
    }

    fn bounds(&self) -> Vec<[f64; 2]> {
        box_bounds(self.n, self.m, self.lambda, self.half_length)
    }

    fn far_field(&self, xi: &[f64]) -> f64 {
        gauge_norm_point(xi, self.n, self.lambda).powf(2.0 - self.q_dim())
    }

    /// Cell containing `xi` with the local coordinates in [0, 1], or `None`
    /// outside the box.
    fn locate(&self, xi: &[f64]) -> Option<(Vec<usize>, Vec<f64>, Vec<f64>)> {
        let cells = self.nodes - 1;
        let yl = self.half_length.powf(1.0 + self.lambda) / (1.0 + self.lambda);
        let mut base = Vec::with_capacity(xi.len());
        let mut frac = Vec::with_capacity(xi.len());
        let mut h = Vec::with_capacity(xi.len());
        for (k, &z) in xi.iter().enumerate() {
            let half = if k < self.n { self.half_length } else { yl };
            let hk = 2.0 * half / cells as f64;
            let t = (z + half) / hk;
            if !(0.0..=cells as f64).contains(&t) {
                return None;
            }
            let i = (t.floor() as usize).min(cells - 1);
            base.push(i);
            frac.push(t - i as f64);
            h.push(hk);
        }
        Some((base, frac, h))
    }

    fn corner_value(&self, base: &[usize], corner: usize) -> f64 {
        let mut flat = 0usize;
        for (k, &b) in base.iter().enumerate() {
            flat = flat * self.nodes + b + ((corner >> k) & 1);
        }
        self.values[flat]
    }

    /// Central value `v(0)`.
    pub fn peak(&self) -> f64 {
        self.value(&vec![0.0; self.n + self.m])
    }
}

impl Profile for ReferenceProfile {
    fn n(&self) -> usize {
        self.n
    }

    fn m(&self) -> usize {
        self.m
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn value(&self, xi: &[f64]) -> f64 {
        let Some((base, frac, _)) = self.locate(xi) else {
            return self.far_field(xi);
        };
        let dim = xi.len();
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let w: f64 = (0..dim)
                .map(|k| if (corner >> k) & 1 == 1 { frac[k] } else { 1.0 - frac[k] })
                .product();
            if w != 0.0 {
                acc += w * self.corner_value(&base, corner);
            }
        }
        acc
    }

    fn gradient(&self, xi: &[f64]) -> Vec<f64> {
        let Some((base, frac, h)) = self.locate(xi) else {
            let q = self.q_dim();
            let rho = gauge_norm_point(xi, self.n, self.lambda);
            let c = (2.0 - q) * rho.powf(1.0 - q);
            return gauge_gradient(xi, self.n, self.lambda)
                .into_iter()
                .map(|g| c * g)
                .collect();
        };
        let dim = xi.len();
        let mut grad = vec![0.0; dim];
        for corner in 0..(1usize << dim) {
            let val = self.corner_value(&base, corner);
            for (k, gk) in grad.iter_mut().enumerate() {
                let mut w = 1.0;
                #[allow(clippy::needless_range_loop)]
                for j in 0..dim {
                    let bit = (corner >> j) & 1 == 1;
                    w *= if j == k {
                        if bit {
                            1.0 / h[k]
                        } else {
                            -1.0 / h[k]
                        }
                    } else if bit {
                        frac[j]
                    } else {
                        1.0 - frac[j]
                    };
                }
                *gk += w * val;
            }
        }
        grad
    }

    fn core(&self) -> (Vec<f64>, Vec<usize>) {
        let b = self.bounds();
        (b.iter().map(|iv| iv[1]).collect(), vec![self.nodes - 1; b.len()])
    }
}

fn box_bounds(n: usize, m: usize, lambda: f64, half_length: f64) -> Vec<[f64; 2]> {
    let yl = half_length.powf(1.0 + lambda) / (1.0 + lambda);
    let mut b = vec![[-half_length, half_length]; n];
    b.extend(std::iter::repeat([-yl, yl]).take(m));
    b
}
