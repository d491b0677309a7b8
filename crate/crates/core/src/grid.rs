//! Tensor-product grids, trapezoid quadrature and the gauge geometry.
//!
//! Axes `0..n` carry the x variables and axes `n..` the y variables. Interior
//! nodes are numbered row-major with the last axis running fastest; boundary
//! nodes are not stored since every [`Field`] vanishes there.

use std::io::Write;

use crate::error::{Error, Result};

/// Nodal values on the interior nodes of a [`TensorGrid`].
pub type Field = Vec<f64>;

/// `ρ(x, y) = (|x|^{2(1+λ)} + (1+λ)²|y|²)^{1/(2(1+λ))}`.
pub fn gauge_norm(x: &[f64], y: &[f64], lambda: f64) -> f64 {
    let x2: f64 = x.iter().map(|v| v * v).sum();
    let y2: f64 = y.iter().map(|v| v * v).sum();
    let k = 1.0 + lambda;
    (x2.powf(k) + k * k * y2).powf(0.5 / k)
}

/// Gauge norm of a point whose first `n` coordinates are x.
pub fn gauge_norm_point(z: &[f64], n: usize, lambda: f64) -> f64 {
    gauge_norm(&z[..n], &z[n..], lambda)
}

/// Euclidean gradient of the gauge norm; zero at the origin.
pub fn gauge_gradient(z: &[f64], n: usize, lambda: f64) -> Vec<f64> {
    let rho = gauge_norm_point(z, n, lambda);
    if rho == 0.0 {
        return vec![0.0; z.len()];
    }
    let k = 1.0 + lambda;
    let x2: f64 = z[..n].iter().map(|v| v * v).sum();
    let denom = rho.powf(2.0 * lambda + 1.0);
    let xw = x2.powf(lambda);
    z.iter()
        .enumerate()
        .map(|(i, &v)| if i < n { xw * v / denom } else { k * v / denom })
        .collect()
}

/// `δ_t(x, y) = (t x, t^{1+λ} y)`.
pub fn dilate(z: &[f64], n: usize, t: f64, lambda: f64) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("dilation factor must be positive, got {t}")));
    }
    let ty = t.powf(1.0 + lambda);
    Ok(z.iter()
        .enumerate()
        .map(|(i, &v)| if i < n { t * v } else { ty * v })
        .collect())
}

/// Checks that the gauge ball of the given radius around `center` lies
/// strictly inside the box.
pub fn ball_inside_box(
    center: &[f64],
    radius: f64,
    n: usize,
    lambda: f64,
    bounds: &[[f64; 2]],
) -> Result<()> {
    for (k, b) in bounds.iter().enumerate() {
        let ext = if k < n {
            radius
        } else {
            radius.powf(1.0 + lambda) / (1.0 + lambda)
        };
        if center[k] - ext <= b[0] || center[k] + ext >= b[1] {
            return Err(Error::Precondition(format!(
                "gauge ball of radius {radius} around {center:?} touches the boundary on axis {k}"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TensorGrid {
    /// Number of x axes.
    pub n: usize,
    pub bounds: Vec<[f64; 2]>,
    /// Node counts per axis, boundary included.
    pub nodes: Vec<usize>,
    pub h: Vec<f64>,
    interior: Vec<usize>,
    strides: Vec<usize>,
    coords: Vec<f64>,
}

impl TensorGrid {
    pub fn new(bounds: &[[f64; 2]], nodes: &[usize], n: usize) -> Result<Self> {
        if bounds.len() != nodes.len() || bounds.is_empty() || n == 0 || n >= bounds.len() {
            return Err(Error::Domain(format!(
                "grid needs matching bounds/nodes and 1 <= n < dim (got {} axes, n = {n})",
                nodes.len()
            )));
        }
        let mut h = Vec::with_capacity(nodes.len());
        for (k, (&cnt, b)) in nodes.iter().zip(bounds).enumerate() {
            if cnt < 5 {
                return Err(Error::Domain(format!(
                    "axis {k} needs at least 3 interior nodes (got {cnt} nodes)"
                )));
            }
            if !(b[0] < b[1]) {
                return Err(Error::Domain(format!("axis {k} interval {b:?} is empty")));
            }
            let hk = (b[1] - b[0]) / (cnt - 1) as f64;
            if k < n && b[0] < 0.0 && b[1] > 0.0 {
                let t = -b[0] / hk;
                if (t - t.round()).abs() > 1e-9 {
                    return Err(Error::Domain(format!(
                        "x = 0 is not a node on axis {k}; use a symmetric interval with an odd node count"
                    )));
                }
            }
            h.push(hk);
        }
        let interior: Vec<usize> = nodes.iter().map(|c| c - 2).collect();
        let dim = nodes.len();
        let mut strides = vec![1usize; dim];
        for k in (0..dim - 1).rev() {
            strides[k] = strides[k + 1] * interior[k + 1];
        }
        let len: usize = interior.iter().product();
        let mut coords = vec![0.0; len * dim];
        for i in 0..len {
            let mut rem = i;
            for k in 0..dim {
                let ik = rem / strides[k];
                rem %= strides[k];
                coords[i * dim + k] = bounds[k][0] + (ik + 1) as f64 * h[k];
            }
        }
        Ok(TensorGrid {
            n,
            bounds: bounds.to_vec(),
            nodes: nodes.to_vec(),
            h,
            interior,
            strides,
            coords,
        })
    }

    /// Square grid helper: the same node count on every axis.
    pub fn uniform(bounds: &[[f64; 2]], nodes: usize, n: usize) -> Result<Self> {
        TensorGrid::new(bounds, &vec![nodes; bounds.len()], n)
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Number of interior nodes (unknowns).
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn interior_counts(&self) -> &[usize] {
        &self.interior
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    /// Euclidean norm of the x part of node `i`.
    pub fn x_norm(&self, i: usize) -> f64 {
        self.point(i)[..self.n].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn gauge(&self, i: usize, lambda: f64) -> f64 {
        gauge_norm_point(self.point(i), self.n, lambda)
    }

    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        let mut rem = i;
        self.strides
            .iter()
            .map(|&s| {
                let v = rem / s;
                rem %= s;
                v
            })
            .collect()
    }

    pub fn zeros(&self) -> Field {
        vec![0.0; self.len()]
    }

    /// Samples `f` at the interior nodes.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Field {
        (0..self.len()).map(|i| f(self.point(i))).collect()
    }

    /// Trapezoid integral of a field (boundary values are zero).
    pub fn integrate(&self, u: &[f64]) -> f64 {
        self.cell_volume() * u.iter().sum::<f64>()
    }

    /// Visits every node of the box, boundary included, with its
    /// tensor-product trapezoid weight (in units of the cell volume).
    pub fn for_each_node<F: FnMut(&[f64], f64)>(&self, mut f: F) {
        let dim = self.dim();
        let total: usize = self.nodes.iter().product();
        let mut z = vec![0.0; dim];
        for flat in 0..total {
            let mut rem = flat;
            let mut w = 1.0;
            for k in (0..dim).rev() {
                let ik = rem % self.nodes[k];
                rem /= self.nodes[k];
                z[k] = self.bounds[k][0] + ik as f64 * self.h[k];
                if ik == 0 || ik == self.nodes[k] - 1 {
                    w *= 0.5;
                }
            }
            f(&z, w);
        }
    }

    /// Tensor-product trapezoid integral of `f` over every node of the box.
    pub fn integrate_fn<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        let mut sum = 0.0;
        self.for_each_node(|z, w| sum += w * f(z));
        sum * self.cell_volume()
    }

    /// Multilinear interpolation of a field at `z`; zero outside the box.
    pub fn interpolate(&self, u: &[f64], z: &[f64]) -> f64 {
        let dim = self.dim();
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0; dim];
        for k in 0..dim {
            let t = (z[k] - self.bounds[k][0]) / self.h[k];
            if !(t > 0.0) || t >= (self.nodes[k] - 1) as f64 {
                return 0.0;
            }
            let i = t.floor() as usize;
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = 0usize;
            let mut on_boundary = false;
            for k in 0..dim {
                let bit = (corner >> k) & 1;
                let node = base[k] + bit;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                if node == 0 || node == self.nodes[k] - 1 {
                    on_boundary = true;
                } else {
                    idx += (node - 1) * self.strides[k];
                }
            }
            if !on_boundary && w != 0.0 {
                acc += w * u[idx];
            }
        }
        acc
    }

    /// Writes one row per interior node: coordinates then value.
    pub fn write_csv<W: Write>(&self, u: &[f64], mut out: W) -> std::io::Result<()> {
        let dim = self.dim();
        let mut header: Vec<String> = (0..self.n).map(|k| format!("x{k}")).collect();
        header.extend((0..dim - self.n).map(|k| format!("y{k}")));
        header.push("value".into());
        writeln!(out, "{}", header.join(","))?;
        for (i, v) in u.iter().enumerate() {
            let mut row: Vec<String> = self.point(i).iter().map(|c| format!("{c:.12e}")).collect();
            row.push(format!("{v:.12e}"));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn l2_distance(&self, u: &[f64], v: &[f64]) -> f64 {
        (self.cell_volume() * u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sqrt()
    }
}

/// Smooth gauge cutoff: 1 on `B_R(center)`, 0 outside `B_{2R}(center)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cutoff {
    pub center: Vec<f64>,
    pub radius: f64,
    pub n: usize,
    pub lambda: f64,
}

impl Cutoff {
    /// Quintic blend with vanishing first and second derivatives at both ends.
    pub fn blend(zeta: f64) -> f64 {
        let t = zeta.clamp(0.0, 1.0);
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }

    pub fn blend_derivative(zeta: f64) -> f64 {
        if !(0.0..=1.0).contains(&zeta) {
            return 0.0;
        }
        -30.0 * zeta * zeta * (1.0 - zeta) * (1.0 - zeta)
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = z.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let rho = gauge_norm_point(&d, self.n, self.lambda);
        let db = Cutoff::blend_derivative((rho - self.radius) / self.radius) / self.radius;
        if db == 0.0 {
            return vec![0.0; z.len()];
        }
        gauge_gradient(&d, self.n, self.lambda)
            .into_iter()
            .map(|g| db * g)
            .collect()
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let d: Vec<f64> = z.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let rho = gauge_norm_point(&d, self.n, self.lambda);
        Cutoff::blend((rho - self.radius) / self.radius)
    }

    pub fn sample(&self, grid: &TensorGrid) -> Field {
        grid.sample(|z| self.value(z))
    }
}

/// Cutoff on a ball that lies inside Ω and away from x = 0.
pub fn build_cutoff(grid: &TensorGrid, center: &[f64], radius: f64, lambda: f64) -> Result<Field> {
    check_cutoff_ball(grid, center, radius, lambda)?;
    let x0: f64 = center[..grid.n].iter().map(|v| v * v).sum::<f64>().sqrt();
    if x0 <= 2.0 * radius {
        return Err(Error::Precondition(format!(
            "ball B_2R around {center:?} with R = {radius} meets x = 0"
        )));
    }
    Ok(cutoff_field(grid, center, radius, lambda))
}

/// Cutoff whose ball may be centered on x = 0; only containment in Ω is
/// checked. Used for bubbles, which concentrate on the degeneracy set.
pub fn build_cutoff_on_sigma(
    grid: &TensorGrid,
    center: &[f64],
    radius: f64,
    lambda: f64,
) -> Result<Field> {
    check_cutoff_ball(grid, center, radius, lambda)?;
    Ok(cutoff_field(grid, center, radius, lambda))
}

fn check_cutoff_ball(grid: &TensorGrid, center: &[f64], radius: f64, lambda: f64) -> Result<()> {
    if center.len() != grid.dim() || !(radius > 0.0) {
        return Err(Error::Precondition(format!(
            "cutoff needs a {}-dimensional center and positive radius",
            grid.dim()
        )));
    }
    ball_inside_box(center, 2.0 * radius, grid.n, lambda, &grid.bounds)
}

fn cutoff_field(grid: &TensorGrid, center: &[f64], radius: f64, lambda: f64) -> Field {
    Cutoff {
        center: center.to_vec(),
        radius,
        n: grid.n,
        lambda,
    }
    .sample(grid)
}
