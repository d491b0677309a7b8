//! Discrete Grushin operator and quadrature of the functionals' integrals.
//!
//! The stiffness matrix is the flux-form second difference scaled by the
//! cell volume, so that
//!
//! ```text
//! uᵀ A u ≈ ∫ |∇_x u|² + |x|^{2λ} |∇_y u|² dz,      (A u)_i / V ≈ (-Δ_λ u)(z_i).
//! ```
//!
//! The y-direction faces of a node share its x coordinate, so the weight
//! `|x|^{2λ}` is evaluated at the node and vanishes exactly on `x = 0`.

use std::io::Write;
use std::sync::OnceLock;

use crate::error::Result;
use crate::grid::{Field, TensorGrid};
use crate::sparse::{BandCholesky, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerMode {
    /// `|u|^p`
    Abs,
    /// `(u⁺)^p`
    PositivePart,
}

#[derive(Debug)]
pub struct GrushinOperator {
    pub grid: TensorGrid,
    pub lambda: f64,
    pub matrix: CsrMatrix,
    factor: BandCholesky,
    poincare: OnceLock<f64>,
}

impl GrushinOperator {
    pub fn assemble(grid: TensorGrid, lambda: f64) -> Result<Self> {
        let matrix = stiffness(&grid, lambda);
        let factor = BandCholesky::factor(&matrix, band_order(&grid))?;
        Ok(GrushinOperator {
            grid,
            lambda,
            matrix,
            factor,
            poincare: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.grid.cell_volume()
    }

    pub fn apply(&self, u: &[f64]) -> Field {
        self.matrix.mul_vec(u)
    }

    /// Pointwise approximation of `-Δ_λ u` at the interior nodes.
    pub fn nodal_apply(&self, u: &[f64]) -> Field {
        let v = self.volume();
        self.apply(u).into_iter().map(|x| x / v).collect()
    }

    /// Solves `A x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Field {
        self.factor.solve(rhs)
    }

    /// `uᵀ A u`, the discrete `‖u‖_λ²`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        self.matrix.bilinear(u, u)
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.matrix.bilinear(u, v)
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.energy(u).max(0.0).sqrt()
    }

    /// Quadrature of `w |u|^p` or `w (u⁺)^p`.
    pub fn weighted_power_integral(&self, w: &[f64], u: &[f64], p: f64, mode: PowerMode) -> f64 {
        weighted_power_integral(&self.grid, w, u, p, mode)
    }

    pub fn lp_norm(&self, u: &[f64], p: f64) -> f64 {
        lp_norm(&self.grid, u, p)
    }

    /// Coupling of interior nodes to prescribed boundary values `f`.
    /// Returns the load `b` with `b_i = Σ c_{ij} f(z_j)` over boundary
    /// neighbours `j`, and `Σ c_{ij} f(z_j)²`. With these, the stencil energy
    /// of the field extended by `f` is `uᵀAu − 2uᵀb + that sum`, and the
    /// discrete Dirichlet problem reads `Au = b + load`.
    pub fn boundary_coupling<F: Fn(&[f64]) -> f64>(&self, f: F) -> (Field, f64) {
        let grid = &self.grid;
        let vol = self.volume();
        let counts = grid.interior_counts();
        let mut total = 0.0;
        let load = (0..grid.len())
            .map(|i| {
                let idx = grid.multi_index(i);
                let wy = grid.x_norm(i).powf(2.0 * self.lambda);
                let mut acc = 0.0;
                for k in 0..grid.dim() {
                    let c = if k < grid.n { 1.0 } else { wy } / (grid.h[k] * grid.h[k]) * vol;
                    if c == 0.0 {
                        continue;
                    }
                    for (side, edge) in [(0usize, idx[k] == 0), (1, idx[k] + 1 == counts[k])] {
                        if edge {
                            let mut z = grid.point(i).to_vec();
                            z[k] = grid.bounds[k][side];
                            let v = f(&z);
                            acc += c * v;
                            total += c * v * v;
                        }
                    }
                }
                acc
            })
            .collect();
        (load, total)
    }

    /// Smallest eigenvalue of `A/V`, i.e. the best `c` in
    /// `‖u‖_λ² ≥ c ‖u‖_{L²}²`. Computed by inverse iteration on first use.
    pub fn poincare_constant(&self) -> f64 {
        *self.poincare.get_or_init(|| {
            let mut x: Field = self
                .grid
                .sample(|z| z.iter().map(|c| 1.0 + 0.1 * c).product::<f64>().abs() + 1.0);
            let mut est = f64::INFINITY;
            for _ in 0..200 {
                let y = self.solve(&x);
                let nrm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                x = y.into_iter().map(|v| v / nrm).collect();
                let next = self.energy(&x) / (self.volume() * x.iter().map(|v| v * v).sum::<f64>());
                if (est - next).abs() <= 1e-13 * next {
                    est = next;
                    break;
                }
                est = next;
            }
            est
        })
    }

    /// Coordinate-format dump: one `row col value` line per stored entry.
    pub fn write_coo<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.matrix.nrows {
            for (j, v) in self.matrix.row(i) {
                writeln!(out, "{i} {j} {v:.17e}")?;
            }
        }
        Ok(())
    }
}

pub fn weighted_power_integral(
    grid: &TensorGrid,
    w: &[f64],
    u: &[f64],
    p: f64,
    mode: PowerMode,
) -> f64 {
    let s: f64 = w
        .iter()
        .zip(u)
        .map(|(&wi, &ui)| {
            let b = match mode {
                PowerMode::Abs => ui.abs(),
                PowerMode::PositivePart => ui.max(0.0),
            };
            if b == 0.0 {
                0.0
            } else {
                wi * b.powf(p)
            }
        })
        .sum();
    grid.cell_volume() * s
}

pub fn lp_norm(grid: &TensorGrid, u: &[f64], p: f64) -> f64 {
    let s: f64 = u.iter().map(|v| v.abs().powf(p)).sum();
    (grid.cell_volume() * s).powf(1.0 / p)
}

/// Ordering that puts the longest axis slowest, which minimizes bandwidth.
fn band_order(grid: &TensorGrid) -> Vec<usize> {
    let counts = grid.interior_counts();
    let dim = counts.len();
    let mut axes: Vec<usize> = (0..dim).collect();
    axes.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut new_strides = vec![0usize; dim];
    let mut s = 1;
    for &k in axes.iter().rev() {
        new_strides[k] = s;
        s *= counts[k];
    }
    let mut perm = vec![0usize; grid.len()];
    for old in 0..grid.len() {
        let idx = grid.multi_index(old);
        let new: usize = idx.iter().zip(&new_strides).map(|(i, s)| i * s).sum();
        perm[new] = old;
    }
    perm
}

fn stiffness(grid: &TensorGrid, lambda: f64) -> CsrMatrix {
    let dim = grid.dim();
    let vol = grid.cell_volume();
    let counts = grid.interior_counts().to_vec();
    let strides = grid.strides().to_vec();
    let rows = (0..grid.len())
        .map(|i| {
            let idx = grid.multi_index(i);
            let wy = grid.x_norm(i).powf(2.0 * lambda);
            let mut row = Vec::with_capacity(2 * dim + 1);
            let mut diag = 0.0;
            for k in 0..dim {
                let c = if k < grid.n { 1.0 } else { wy } / (grid.h[k] * grid.h[k]) * vol;
                if c == 0.0 {
                    continue;
                }
                diag += 2.0 * c;
                if idx[k] > 0 {
                    row.push((i - strides[k], -c));
                }
                if idx[k] + 1 < counts[k] {
                    row.push((i + strides[k], -c));
                }
            }
            row.push((i, diag));
            row
        })
        .collect();
    CsrMatrix::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn square(nodes: usize, lambda: f64) -> GrushinOperator {
        let g = TensorGrid::uniform(&[[-1.0, 1.0], [-1.0, 1.0]], nodes, 1).unwrap();
        GrushinOperator::assemble(g, lambda).unwrap()
    }

    #[test]
    fn degenerate_rows_have_no_y_coupling() {
        let op = square(17, 1.5);
        for i in 0..op.len() {
            if op.grid.point(i)[0] == 0.0 {
                let s = op.grid.strides()[1];
                for (j, v) in op.matrix.row(i) {
                    if j != i {
                        assert!(j.abs_diff(i) != s || v == 0.0);
                    }
                }
                assert_eq!(op.matrix.row(i).count(), 3);
            }
        }
    }

    #[test]
    fn lambda_zero_is_five_point_laplacian() {
        let op = square(9, 0.0);
        let h = 0.25;
        let v = h * h;
        let i = op.len() / 2;
        assert!((op.matrix.get(i, i) - 4.0 / (h * h) * v).abs() < 1e-12);
        assert!((op.matrix.get(i, i + 1) + v / (h * h)).abs() < 1e-12);
        assert!((op.matrix.get(i, i + 7) + v / (h * h)).abs() < 1e-12);
    }

    #[test]
    fn energy_of_polynomial_bump() {
        let op = square(129, 1.0);
        let u = op.grid.sample(|z| (1.0 - z[0] * z[0]) * (1.0 - z[1] * z[1]));
        let e = op.energy(&u);
        assert!((e / (1024.0 / 315.0) - 1.0).abs() < 0.01, "{e}");
        let u3: Field = u.iter().map(|v| 3.0 * v).collect();
        assert!((op.energy(&u3) - 9.0 * e).abs() < 1e-10 * e);
        assert_eq!(op.energy(&op.grid.zeros()), 0.0);
    }

    #[test]
    fn power_integrals() {
        let op = square(129, 1.0);
        let one = vec![1.0; op.len()];
        let u = op.grid.sample(|z| (1.0 - z[0] * z[0]) * (1.0 - z[1] * z[1]));
        let i2 = op.weighted_power_integral(&one, &u, 2.0, PowerMode::Abs);
        assert!((i2 - 256.0 / 225.0).abs() < 1e-3);
        assert!((op.lp_norm(&u, 2.0) - (256.0f64 / 225.0).sqrt()).abs() < 1e-3);
        let neg: Field = u.iter().map(|v| -v).collect();
        assert_eq!(op.weighted_power_integral(&one, &neg, 1.5, PowerMode::PositivePart), 0.0);
    }

    #[test]
    fn boundary_coupling_reproduces_linear_field() {
        // u = 1 + x + 2y is discretely harmonic for λ = 0, and the extended
        // energy is its exact Dirichlet integral |∇u|² · area = 5·4
        let op = square(17, 0.0);
        let f = |z: &[f64]| 1.0 + z[0] + 2.0 * z[1];
        let u = op.grid.sample(f);
        let (b, tail) = op.boundary_coupling(f);
        let au = op.apply(&u);
        assert!(au.iter().zip(&b).all(|(a, c)| (a - c).abs() < 1e-10));
        let e = op.energy(&u) - 2.0 * u.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() + tail;
        // the stencil omits edges lying on the boundary itself
        let h = 2.0 / 16.0;
        let missing = 2.0 * 16.0 * (1.0 + 4.0) * h * h / 2.0;
        assert!((e + missing - 20.0).abs() < 1e-9, "{e}");
    }

    #[test]
    fn solve_inverts_apply() {
        let op = square(33, 1.0);
        let u = op.grid.sample(|z| (PI * z[0]).sin() * (1.0 - z[1] * z[1]) + 0.3 * z[1]);
        let back = op.solve(&op.apply(&u));
        let err = u.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn poincare_constant_matches_sine_mode_for_lambda_zero() {
        let op = square(33, 0.0);
        let h = 2.0 / 32.0;
        let mode = 4.0 / (h * h) * (PI * h / 4.0).sin().powi(2);
        assert!((op.poincare_constant() - 2.0 * mode).abs() < 1e-8);
    }
}
