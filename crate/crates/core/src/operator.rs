//! Discrete `-Δ` and gradient stencils.
//!
//! The radial operator is the finite-volume form
//!
//! ```text
//! (-Δ_h u)_i = -[A_{i+1/2} (u_{i+1}-u_i)/h_{i+1/2} - A_{i-1/2} (u_i-u_{i-1})/h_{i-1/2}] / V_i
//! ```
//!
//! with `A = m^{N-1}` at the cell faces `m` (midpoints) and
//! `V_i = (m_{i+1/2}^N - m_{i-1/2}^N)/N`. At `r = 0` there is no inner face,
//! which reproduces the ghost-node reflection row `-2N(u_1-u_0)/h²`. The
//! stencil is exact for quadratics, an M-matrix for every `N`, and symmetric
//! in the inner product weighted by `V_i`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{DiscreteField, Grid, RadialGrid};

/// Sparse square matrix (CSR) with Dirichlet rows stored as identity rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    dirichlet: Vec<bool>,
    tridiagonal: bool,
}

impl LinearOperator {
    /// Assembles from per-row `(col, value)` lists. Dirichlet rows are
    /// replaced by identity rows.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, dirichlet: Vec<bool>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut tridiagonal = true;
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            if dirichlet[i] {
                row = vec![(i, 1.0)];
            }
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            for (c, v) in merged {
                if c.abs_diff(i) > 1 {
                    tridiagonal = false;
                }
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            row_ptr,
            cols,
            vals,
            dirichlet,
            tridiagonal,
        }
    }

    pub fn len(&self) -> usize {
        self.dirichlet.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirichlet.is_empty()
    }

    pub fn is_dirichlet(&self, i: usize) -> bool {
        self.dirichlet[i]
    }

    pub fn dirichlet(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn is_tridiagonal(&self) -> bool {
        self.tridiagonal
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[s..e].iter().copied().zip(self.vals[s..e].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i, i)).collect()
    }

    /// Full product including Dirichlet (identity) rows.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Symmetry of the block coupling non-Dirichlet unknowns.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.len()).filter(|&i| !self.dirichlet[i]).all(|i| {
            self.row(i)
                .filter(|&(j, _)| j != i && !self.dirichlet[j])
                .all(|(j, v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1e-300))
        })
    }

    /// `max_i Σ_j |a_ij|`.
    pub fn norm_inf(&self) -> f64 {
        (0..self.len())
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// The three diagonals `(lower, diag, upper)`; `lower[0]` and
    /// `upper[n-1]` are zero.
    pub fn tridiagonal_bands(&self) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if !self.tridiagonal {
            return None;
        }
        let n = self.len();
        let (mut lo, mut d, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            for (j, v) in self.row(i) {
                if j + 1 == i {
                    lo[i] = v;
                } else if j == i {
                    d[i] = v;
                } else {
                    up[i] = v;
                }
            }
        }
        Some((lo, d, up))
    }

    /// Positive diagonal, nonpositive off-diagonals and weak row diagonal
    /// dominance on every row.
    pub fn is_m_matrix(&self) -> bool {
        (0..self.len()).all(|i| {
            let mut diag = 0.0;
            let mut off = 0.0;
            for (j, v) in self.row(i) {
                if j == i {
                    diag = v;
                } else if v > 0.0 {
                    return false;
                } else {
                    off -= v;
                }
            }
            diag > 0.0 && diag >= off * (1.0 - 1e-12)
        })
    }

    /// Copy with `extra(i)` entries added to every non-Dirichlet row.
    pub(crate) fn with_row_update(&self, mut extra: impl FnMut(usize) -> Vec<(usize, f64)>) -> Self {
        let rows = (0..self.len())
            .map(|i| {
                let mut r: Vec<(usize, f64)> = self.row(i).collect();
                if !self.dirichlet[i] {
                    r.extend(extra(i));
                }
                r
            })
            .collect();
        Self::from_rows(rows, self.dirichlet.clone())
    }
}

/// `(b^N - a^N)/N` without cancellation.
fn shell_measure(a: f64, b: f64, dim: usize) -> f64 {
    let sum: f64 = (0..dim)
        .map(|k| b.powi(k as i32) * a.powi((dim - 1 - k) as i32))
        .sum();
    (b - a) * sum / dim as f64
}

/// Finite-volume cell measures `V_i` of a radial grid in dimension `dim`.
pub fn radial_cell_volumes(grid: &RadialGrid, dim: usize) -> Vec<f64> {
    let r = grid.nodes();
    let n = r.len();
    let face = |i: usize| 0.5 * (r[i] + r[i + 1]);
    (0..n)
        .map(|i| {
            let inner = if i == 0 { 0.0 } else { face(i - 1) };
            let outer = if i + 1 == n { r[n - 1] } else { face(i) };
            shell_measure(inner, outer, dim)
        })
        .collect()
}

/// Discrete `-Δ` for radially symmetric functions in dimension `dim`,
/// Dirichlet row at `r = R`.
pub fn build_radial_laplacian(grid: &RadialGrid, dim: usize) -> Result<LinearOperator> {
    if dim == 0 {
        return Err(Error::Invalid("dimension must be at least 1".into()));
    }
    let r = grid.nodes();
    let n = r.len();
    let face = |i: usize| 0.5 * (r[i] + r[i + 1]);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        if i + 1 == n {
            rows.push(vec![(i, 1.0)]);
            continue;
        }
        let m_out = face(i);
        let m_in = if i == 0 { 0.0 } else { face(i - 1) };
        let vol = shell_measure(m_in, m_out, dim);
        let t_out = m_out.powi(dim as i32 - 1) / (r[i + 1] - r[i]) / vol;
        let mut row = vec![(i + 1, -t_out)];
        let mut diag = t_out;
        if i > 0 {
            let t_in = m_in.powi(dim as i32 - 1) / (r[i] - r[i - 1]) / vol;
            row.push((i - 1, -t_in));
            diag += t_in;
        }
        row.push((i, diag));
        rows.push(row);
    }
    let mut dirichlet = vec![false; n];
    dirichlet[n - 1] = true;
    Ok(LinearOperator::from_rows(rows, dirichlet))
}

fn axis_rows(x: &[f64], i: usize) -> [(isize, f64); 3] {
    let hm = x[i] - x[i - 1];
    let hp = x[i + 1] - x[i];
    let vol = 0.5 * (hm + hp);
    let (a, b) = (1.0 / (hm * vol), 1.0 / (hp * vol));
    [(-1, -a), (0, a + b), (1, -b)]
}

/// Discrete `-Δ` on any supported grid (`dim` is used by radial grids only).
pub fn build_laplacian(grid: &Grid, dim: usize) -> Result<LinearOperator> {
    match grid {
        Grid::Radial(g) => build_radial_laplacian(g, dim),
        Grid::Interval(g) => {
            let x = g.nodes();
            let n = x.len();
            let rows = (0..n)
                .map(|i| {
                    if i == 0 || i + 1 == n {
                        vec![(i, 1.0)]
                    } else {
                        axis_rows(x, i)
                            .iter()
                            .map(|&(o, v)| ((i as isize + o) as usize, v))
                            .collect()
                    }
                })
                .collect();
            Ok(LinearOperator::from_rows(rows, grid.boundary_mask()))
        }
        Grid::Rect(g) => {
            let (nx, ny) = (g.nx(), g.ny());
            let mask = grid.boundary_mask();
            let mut rows = Vec::with_capacity(nx * ny);
            for j in 0..ny {
                for i in 0..nx {
                    let k = g.index(i, j);
                    if mask[k] {
                        rows.push(vec![(k, 1.0)]);
                        continue;
                    }
                    let mut row = Vec::with_capacity(5);
                    for (o, v) in axis_rows(g.xs(), i) {
                        row.push((g.index((i as isize + o) as usize, j), v));
                    }
                    for (o, v) in axis_rows(g.ys(), j) {
                        row.push((g.index(i, (j as isize + o) as usize), v));
                    }
                    rows.push(row);
                }
            }
            Ok(LinearOperator::from_rows(rows, mask))
        }
    }
}

/// Three-point derivative weights at `at` using nodes `x`.
fn lagrange_d1(x: [f64; 3], at: f64) -> [f64; 3] {
    let [x0, x1, x2] = x;
    [
        (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2)),
        (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2)),
        (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1)),
    ]
}

/// Three-point derivative of a 1D node list at position `i`: centred at
/// interior nodes, second-order one-sided at the ends.
fn axis_d1(x: &[f64], i: usize) -> ([usize; 3], [f64; 3]) {
    let n = x.len();
    let base = if i == 0 {
        0
    } else if i + 1 == n {
        n - 3
    } else {
        i - 1
    };
    let idx = [base, base + 1, base + 2];
    (idx, lagrange_d1([x[base], x[base + 1], x[base + 2]], x[i]))
}

/// One derivative component at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct D1 {
    pub idx: [usize; 3],
    pub w: [f64; 3],
}

impl D1 {
    const ZERO: D1 = D1 {
        idx: [0, 0, 0],
        w: [0.0; 3],
    };

    pub fn apply(&self, u: &[f64]) -> f64 {
        self.w[0] * u[self.idx[0]] + self.w[1] * u[self.idx[1]] + self.w[2] * u[self.idx[2]]
    }
}

/// Per-node gradient stencils (one component for 1D/radial grids, two for
/// rectangles).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStencil {
    comps: usize,
    entries: Vec<D1>,
}

impl GradientStencil {
    pub fn new(grid: &Grid) -> Self {
        match grid {
            Grid::Radial(g) => {
                let x = g.nodes();
                let entries = (0..x.len())
                    .map(|i| {
                        if i == 0 {
                            // u'(0) = 0 by symmetry.
                            D1::ZERO
                        } else {
                            let (idx, w) = axis_d1(x, i);
                            D1 { idx, w }
                        }
                    })
                    .collect();
                Self { comps: 1, entries }
            }
            Grid::Interval(g) => {
                let x = g.nodes();
                let entries = (0..x.len())
                    .map(|i| {
                        let (idx, w) = axis_d1(x, i);
                        D1 { idx, w }
                    })
                    .collect();
                Self { comps: 1, entries }
            }
            Grid::Rect(g) => {
                let (nx, ny) = (g.nx(), g.ny());
                let mut entries = Vec::with_capacity(2 * nx * ny);
                for j in 0..ny {
                    for i in 0..nx {
                        let (ix, wx) = axis_d1(g.xs(), i);
                        entries.push(D1 {
                            idx: ix.map(|ii| g.index(ii, j)),
                            w: wx,
                        });
                        let (iy, wy) = axis_d1(g.ys(), j);
                        entries.push(D1 {
                            idx: iy.map(|jj| g.index(i, jj)),
                            w: wy,
                        });
                    }
                }
                Self { comps: 2, entries }
            }
        }
    }

    pub fn components(&self) -> usize {
        self.comps
    }

    pub fn at(&self, node: usize) -> &[D1] {
        &self.entries[node * self.comps..(node + 1) * self.comps]
    }

    /// `|∇u|²` at `node`.
    pub fn grad_sq_at(&self, u: &[f64], node: usize) -> f64 {
        self.at(node).iter().map(|d| d.apply(u).powi(2)).sum()
    }

    pub fn grad_sq(&self, u: &[f64]) -> Vec<f64> {
        (0..u.len()).map(|k| self.grad_sq_at(u, k)).collect()
    }
}

/// `|∇u|²` as a field (radial: `(u')²`, zero at `r = 0`).
pub fn discrete_gradient_sq(field: &DiscreteField) -> DiscreteField {
    let stencil = GradientStencil::new(field.grid());
    let v = stencil.grad_sq(field.values());
    DiscreteField::new(Arc::clone(field.grid()), v).expect("finite gradient of finite field")
}
