//! Linear solves with Dirichlet rows: Thomas recurrence for tridiagonal
//! operators, Jacobi-preconditioned CG (symmetric) or BiCGSTAB otherwise.
//! Nonsymmetric systems whose band fits in memory go to banded LU with
//! partial pivoting instead, which is also the fallback when CG fails.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::DiscreteField;
use crate::operator::LinearOperator;

#[derive(Debug, Clone, Copy)]
pub struct LinearSolveOptions {
    /// Relative residual target for the Krylov paths.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for LinearSolveOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolveReport {
    pub iterations: usize,
    /// `‖b - Ax‖∞`.
    pub residual: f64,
    /// `‖b - Ax‖∞ / (‖A‖∞ ‖x‖∞ + ‖b‖∞)`.
    pub backward_error: f64,
}

/// Normwise backward-error target every solve must meet.
pub const BACKWARD_ERROR_TOL: f64 = 1e-12;

/// Solves `op x = rhs` at free rows with `x = bc` at Dirichlet rows.
///
/// `bc` is indexed like the grid; only Dirichlet entries are read.
pub fn solve_linear(op: &LinearOperator, rhs: &DiscreteField, bc: &[f64]) -> Result<DiscreteField> {
    let (x, _) = solve_linear_with(op, rhs.values(), bc, LinearSolveOptions::default())?;
    DiscreteField::new(Arc::clone(rhs.grid()), x)
}

pub fn solve_linear_with(
    op: &LinearOperator,
    rhs: &[f64],
    bc: &[f64],
    opts: LinearSolveOptions,
) -> Result<(Vec<f64>, LinearSolveReport)> {
    let n = op.len();
    if rhs.len() != n || bc.len() != n {
        return Err(Error::Invalid("right-hand side does not match operator size".into()));
    }
    let b: Vec<f64> = (0..n)
        .map(|i| if op.is_dirichlet(i) { bc[i] } else { rhs[i] })
        .collect();
    let (x, iterations) = if let Some(bands) = op.tridiagonal_bands() {
        (tridiagonal(bands, &b)?, 1)
    } else {
        let symmetric = op.is_symmetric(1e-12);
        let direct = if symmetric { None } else { banded_lu(op, &b) };
        match direct {
            Some(x) => (x?, 1),
            None => {
                let krylov = if symmetric {
                    pcg(op, &b, opts)
                } else {
                    bicgstab(op, &b, opts)
                };
                match krylov {
                    Ok(found) => found,
                    Err(e) => match banded_lu(op, &b) {
                        Some(x) => (x?, 1),
                        None => return Err(e),
                    },
                }
            }
        }
    };
    let ax = op.apply(&x);
    let residual = ax.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = op.norm_inf() * xn + bn;
    let backward_error = if scale > 0.0 { residual / scale } else { 0.0 };
    if !backward_error.is_finite() || backward_error > BACKWARD_ERROR_TOL {
        return Err(Error::LinearSolve {
            iterations,
            residual,
        });
    }
    Ok((
        x,
        LinearSolveReport {
            iterations,
            residual,
            backward_error,
        },
    ))
}

/// Thomas recurrence; falls back to partial pivoting when a pivot is tiny.
pub fn tridiagonal((lo, d, up): (Vec<f64>, Vec<f64>, Vec<f64>), b: &[f64]) -> Result<Vec<f64>> {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot_ok = true;
    let mut denom = d[0];
    for i in 0..n {
        if i > 0 {
            denom = d[i] - lo[i] * c[i - 1];
        }
        let scale = d[i].abs() + lo[i].abs() + up[i].abs();
        if !(denom.abs() > 1e-14 * scale) {
            pivot_ok = false;
            break;
        }
        c[i] = up[i] / denom;
        x[i] = (b[i] - if i > 0 { lo[i] * x[i - 1] } else { 0.0 }) / denom;
    }
    if pivot_ok {
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    tridiagonal_pivoted(&lo, &d, &up, b)
}

// Gaussian elimination with partial pivoting on a tridiagonal matrix (one
// extra superdiagonal of fill).
fn tridiagonal_pivoted(lo: &[f64], d: &[f64], up: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = d.len();
    let mut dl: Vec<f64> = lo.to_vec();
    let mut dd = d.to_vec();
    let mut du = up.to_vec();
    let mut du2 = vec![0.0; n];
    let mut x = b.to_vec();
    for i in 0..n.saturating_sub(1) {
        let sub = dl[i + 1];
        if dd[i].abs() >= sub.abs() {
            if dd[i] == 0.0 {
                return Err(Error::LinearSolve {
                    iterations: i,
                    residual: f64::INFINITY,
                });
            }
            let f = sub / dd[i];
            dd[i + 1] -= f * du[i];
            x[i + 1] -= f * x[i];
            dl[i + 1] = 0.0;
        } else {
            let f = dd[i] / sub;
            dd[i] = sub;
            let t = dd[i + 1];
            dd[i + 1] = du[i] - f * t;
            du[i] = t;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] *= -f;
            }
            x.swap(i, i + 1);
            x[i + 1] -= f * x[i];
        }
    }
    if dd[n - 1] == 0.0 {
        return Err(Error::LinearSolve {
            iterations: n,
            residual: f64::INFINITY,
        });
    }
    x[n - 1] /= dd[n - 1];
    if n > 1 {
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / dd[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / dd[i];
    }
    Ok(x)
}

/// Free-row system with Dirichlet couplings moved to the right-hand side.
struct Reduced<'a> {
    op: &'a LinearOperator,
    rhs: Vec<f64>,
    inv_diag: Vec<f64>,
}

impl<'a> Reduced<'a> {
    fn new(op: &'a LinearOperator, b: &[f64]) -> Self {
        let n = op.len();
        let mut rhs = vec![0.0; n];
        let mut inv_diag = vec![0.0; n];
        for i in 0..n {
            if op.is_dirichlet(i) {
                continue;
            }
            let mut s = b[i];
            for (j, v) in op.row(i) {
                if j == i {
                    inv_diag[i] = 1.0 / v;
                } else if op.is_dirichlet(j) {
                    s -= v * b[j];
                }
            }
            rhs[i] = s;
        }
        Self { op, rhs, inv_diag }
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = if self.op.is_dirichlet(i) {
                0.0
            } else {
                self.op
                    .row(i)
                    .filter(|&(j, _)| !self.op.is_dirichlet(j))
                    .map(|(j, v)| v * x[j])
                    .sum()
            };
        }
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }

    fn finish(&self, mut x: Vec<f64>, b: &[f64]) -> Vec<f64> {
        for (i, xi) in x.iter_mut().enumerate() {
            if self.op.is_dirichlet(i) {
                *xi = b[i];
            }
        }
        x
    }
}

/// Largest band storage (entries) the LU fallback will allocate.
const BANDED_LIMIT: usize = 8_000_000;

/// Gaussian elimination with partial pivoting in band storage; `None` when
/// the band would exceed [`BANDED_LIMIT`].
fn banded_lu(op: &LinearOperator, b: &[f64]) -> Option<Result<Vec<f64>>> {
    let n = op.len();
    let (mut kl, mut ku) = (0, 0);
    for i in 0..n {
        for (j, _) in op.row(i) {
            if j < i {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
    }
    // row i holds columns i-kl ..= i+kl+ku; pivoting fills the extra kl
    let width = 2 * kl + ku + 1;
    if n.checked_mul(width)? > BANDED_LIMIT {
        return None;
    }
    let at = |i: usize, j: usize| i * width + j + kl - i;
    let mut ab = vec![0.0; n * width];
    let mut x = b.to_vec();
    // known Dirichlet values move to the right-hand side so those rows
    // stay decoupled and come back exact
    for i in 0..n {
        for (j, v) in op.row(i) {
            if op.is_dirichlet(j) && j != i {
                x[i] -= v * b[j];
            } else {
                ab[at(i, j)] = v;
            }
        }
    }
    for k in 0..n {
        let last_row = (k + kl).min(n - 1);
        let last_col = (k + kl + ku).min(n - 1);
        let p = (k..=last_row)
            .max_by(|&p, &q| ab[at(p, k)].abs().total_cmp(&ab[at(q, k)].abs()))
            .unwrap_or(k);
        if ab[at(p, k)] == 0.0 {
            return Some(Err(Error::LinearSolve {
                iterations: k,
                residual: f64::INFINITY,
            }));
        }
        if p != k {
            for j in k..=last_col {
                ab.swap(at(k, j), at(p, j));
            }
            x.swap(k, p);
        }
        let pivot = ab[at(k, k)];
        for i in k + 1..=last_row {
            let l = ab[at(i, k)] / pivot;
            if l == 0.0 {
                continue;
            }
            for j in k + 1..=last_col {
                ab[at(i, j)] -= l * ab[at(k, j)];
            }
            x[i] -= l * x[k];
        }
    }
    for i in (0..n).rev() {
        let last_col = (i + kl + ku).min(n - 1);
        let tail: f64 = (i + 1..=last_col).map(|j| ab[at(i, j)] * x[j]).sum();
        x[i] = (x[i] - tail) / ab[at(i, i)];
    }
    Some(Ok(x))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn pcg(op: &LinearOperator, b: &[f64], opts: LinearSolveOptions) -> Result<(Vec<f64>, usize)> {
    let sys = Reduced::new(op, b);
    let n = op.len();
    let bnorm = norm(&sys.rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((sys.finish(x, b), 0));
    }
    let mut r = sys.rhs.clone();
    let mut z = vec![0.0; n];
    sys.precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        sys.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolve {
                iterations: it,
                residual: norm(&r) / bnorm,
            });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if norm(&r) <= opts.rel_tol * 0.1 * bnorm {
            return Ok((sys.finish(x, b), it));
        }
        sys.precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::LinearSolve {
        iterations: opts.max_iter,
        residual: norm(&r) / bnorm,
    })
}

fn bicgstab(op: &LinearOperator, b: &[f64], opts: LinearSolveOptions) -> Result<(Vec<f64>, usize)> {
    let sys = Reduced::new(op, b);
    let n = op.len();
    let bnorm = norm(&sys.rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((sys.finish(x, b), 0));
    }
    let mut r = sys.rhs.clone();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        sys.precondition(&p, &mut y);
        sys.matvec(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        if norm(&s) <= opts.rel_tol * 0.1 * bnorm {
            for k in 0..n {
                x[k] += alpha * y[k];
            }
            return Ok((sys.finish(x, b), it));
        }
        sys.precondition(&s, &mut z);
        sys.matvec(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for k in 0..n {
            x[k] += alpha * y[k] + omega * z[k];
            r[k] = s[k] - omega * t[k];
        }
        if !omega.is_finite() || !alpha.is_finite() {
            break;
        }
        if norm(&r) <= opts.rel_tol * 0.1 * bnorm {
            return Ok((sys.finish(x, b), it));
        }
    }
    Err(Error::LinearSolve {
        iterations: opts.max_iter,
        residual: norm(&r) / bnorm,
    })
}
