//! First Dirichlet eigenpair of `-Δ_h` by inverse iteration.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{DiscreteField, Grid};
use crate::linsolve::{solve_linear_with, LinearSolveOptions};
use crate::operator::{radial_cell_volumes, GradientStencil, LinearOperator};

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub lambda1: f64,
    /// Normalized so that `max φ₁ = 1`.
    pub phi1: DiscreteField,
    /// `‖-Δ_h φ₁ - λ₁ φ₁‖∞` over free nodes.
    pub residual: f64,
    pub iterations: usize,
}

/// Quadrature weights making the discrete `-Δ` symmetric; zero at Dirichlet
/// nodes.
pub fn node_weights(grid: &Grid, dim: usize) -> Vec<f64> {
    let dual = |x: &[f64], i: usize| {
        let left = if i == 0 { 0.0 } else { 0.5 * (x[i] - x[i - 1]) };
        let right = if i + 1 == x.len() { 0.0 } else { 0.5 * (x[i + 1] - x[i]) };
        left + right
    };
    let mut w: Vec<f64> = match grid {
        Grid::Radial(g) => radial_cell_volumes(g, dim),
        Grid::Interval(g) => (0..g.nodes().len()).map(|i| dual(g.nodes(), i)).collect(),
        Grid::Rect(g) => (0..g.nx() * g.ny())
            .map(|k| dual(g.xs(), k % g.nx()) * dual(g.ys(), k / g.nx()))
            .collect(),
    };
    for (k, wk) in w.iter_mut().enumerate() {
        if grid.is_boundary(k) {
            *wk = 0.0;
        }
    }
    w
}

fn wdot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// Inverse power iteration (shift 0) with Rayleigh-quotient estimates.
///
/// Converges when successive estimates differ by less than `tol * λ`.
pub fn first_eigenpair(op: &LinearOperator, grid: &Arc<Grid>, dim: usize, tol: f64) -> Result<EigenResult> {
    const MAX_ITER: usize = 1000;
    let n = op.len();
    let weights = node_weights(grid, dim);
    let zero = vec![0.0; n];
    let mut x: Vec<f64> = (0..n).map(|i| if op.is_dirichlet(i) { 0.0 } else { 1.0 }).collect();
    let mut lambda = f64::INFINITY;
    for it in 1..=MAX_ITER {
        let (mut y, _) = solve_linear_with(op, &x, &zero, LinearSolveOptions::default())?;
        let peak = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(peak > 0.0) {
            return Err(Error::Eigen {
                iterations: it,
                msg: "iterate lost positivity".into(),
            });
        }
        y.iter_mut().for_each(|v| *v /= peak);
        let ly = op.apply(&y);
        let ly_free: Vec<f64> = (0..n).map(|i| if op.is_dirichlet(i) { 0.0 } else { ly[i] }).collect();
        let next = wdot(&weights, &y, &ly_free) / wdot(&weights, &y, &y);
        x = y;
        let done = (next - lambda).abs() < tol * next.abs();
        lambda = next;
        if done {
            if let Some(k) = (0..n).find(|&i| !op.is_dirichlet(i) && !(x[i] > 0.0)) {
                return Err(Error::Eigen {
                    iterations: it,
                    msg: format!("nonpositive eigenvector entry at node {k}"),
                });
            }
            let residual = (0..n)
                .filter(|&i| !op.is_dirichlet(i))
                .map(|i| (ly_free[i] - lambda * x[i]).abs())
                .fold(0.0, f64::max);
            return Ok(EigenResult {
                lambda1: lambda,
                phi1: DiscreteField::new(Arc::clone(grid), x)?,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::Eigen {
        iterations: MAX_ITER,
        msg: "eigenvalue estimates did not settle".into(),
    })
}

/// Richardson extrapolation of a quantity with error `C h^order`, from
/// values on a grid and one with `ratio` times smaller spacing.
pub fn richardson(coarse: f64, fine: f64, ratio: f64, order: f64) -> f64 {
    let f = ratio.powf(order);
    (f * fine - coarse) / (f - 1.0)
}

/// `(max φ², max |∇φ|²)` over all nodes.
pub fn extrema_stats(phi1: &DiscreteField) -> (f64, f64) {
    let max_sq = phi1.values().iter().map(|v| v * v).fold(0.0, f64::max);
    let stencil = GradientStencil::new(phi1.grid());
    let grad = stencil
        .grad_sq(phi1.values())
        .into_iter()
        .fold(0.0, f64::max);
    (max_sq, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{IntervalGrid, RadialGrid, RectGrid};
    use crate::operator::build_laplacian;

    fn ball(radius: f64, n: usize, dim: usize) -> EigenResult {
        let grid = Arc::new(Grid::Radial(RadialGrid::uniform(radius, n).unwrap()));
        let op = build_laplacian(&grid, dim).unwrap();
        first_eigenpair(&op, &grid, dim, 1e-13).unwrap()
    }

    #[test]
    fn interval_lambda_is_pi_squared() {
        let pi2 = std::f64::consts::PI.powi(2);
        let run = |n: usize| {
            let grid = Arc::new(Grid::Interval(IntervalGrid::uniform(0.0, 1.0, n).unwrap()));
            let op = build_laplacian(&grid, 1).unwrap();
            first_eigenpair(&op, &grid, 1, 1e-14).unwrap()
        };
        let (c, f) = (run(257), run(513));
        let lam = richardson(c.lambda1, f.lambda1, 2.0, 2.0);
        assert!((lam - pi2).abs() < 1e-6, "{lam}");
        let (m, g) = extrema_stats(&f.phi1);
        assert_eq!(m, 1.0);
        assert!((g - pi2).abs() < 1e-3, "{g}");
    }

    #[test]
    fn ball_and_disk_limits() {
        let pi2 = std::f64::consts::PI.powi(2);
        let ball3 = richardson(ball(1.0, 401, 3).lambda1, ball(1.0, 801, 3).lambda1, 2.0, 2.0);
        assert!((ball3 - pi2).abs() < 1e-5, "{ball3}");
        let disk = richardson(ball(1.0, 401, 2).lambda1, ball(1.0, 801, 2).lambda1, 2.0, 2.0);
        assert!((disk - 5.783185962946784).abs() < 1e-5, "{disk}");
    }

    #[test]
    fn positivity_and_rayleigh() {
        let e = ball(1.0, 201, 3);
        let grid = e.phi1.grid().clone();
        assert!((0..grid.len() - 1).all(|k| e.phi1.values()[k] > 0.0));
        let op = build_laplacian(&grid, 3).unwrap();
        let w = node_weights(&grid, 3);
        let lp = op.apply(e.phi1.values());
        let lp: Vec<f64> = lp.iter().enumerate().map(|(k, v)| if k + 1 == grid.len() { 0.0 } else { *v }).collect();
        let rq = wdot(&w, e.phi1.values(), &lp) / wdot(&w, e.phi1.values(), e.phi1.values());
        assert!((rq - e.lambda1).abs() <= 10.0 * e.residual.max(1e-12));
    }

    #[test]
    fn domain_monotonicity() {
        let l1 = ball(1.0, 401, 3).lambda1;
        let l2 = ball(2.0, 401, 3).lambda1;
        let l4 = ball(4.0, 401, 3).lambda1;
        assert!(l1 > l2 && l2 > l4);
        assert!((l2 * 4.0 - l1).abs() < 1e-9 * l1);
        assert!((l4 * 16.0 - l1).abs() < 1e-9 * l1);
    }

    #[test]
    fn rescaling_leaves_stats_unchanged() {
        let e = ball(1.0, 101, 3);
        let scaled = e.phi1.map(|v| 7.0 * v);
        let peak = scaled.max();
        let renorm = scaled.map(|v| v / peak);
        assert_eq!(extrema_stats(&renorm), extrema_stats(&e.phi1));
    }

    #[test]
    fn square_lambda() {
        let grid = Arc::new(Grid::Rect(RectGrid::uniform((0.0, 1.0), (0.0, 1.0), 33, 33).unwrap()));
        let op = build_laplacian(&grid, 2).unwrap();
        let e = first_eigenpair(&op, &grid, 2, 1e-12).unwrap();
        let exact = 2.0 * std::f64::consts::PI.powi(2);
        assert!((e.lambda1 - exact).abs() < 0.02 * exact);
    }
}
