//! Solver for the truncated problem
//! `-ΔU + c (U+ε)⁻¹ |∇U|² = a`, `U = 0` on the boundary.

use std::sync::Arc;

use crate::barriers::BracketPair;
use crate::error::{Error, Result};
use crate::grid::{DiscreteField, Grid};
use crate::linsolve::{solve_linear_with, LinearSolveOptions};
use crate::operator::{build_laplacian, GradientStencil, LinearOperator};
use crate::problem::{sample_field, Problem};

/// A problem sampled on a grid, with its discrete operators.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Arc<Grid>,
    pub laplacian: LinearOperator,
    pub gradient: GradientStencil,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
}

impl Discretization {
    pub fn new(problem: &Problem, grid: &Arc<Grid>) -> Result<Self> {
        Ok(Self {
            grid: Arc::clone(grid),
            laplacian: build_laplacian(grid, problem.dim)?,
            gradient: GradientStencil::new(grid),
            a: sample_field(&problem.a, grid)?.into_values(),
            c: sample_field(&problem.c, grid)?.into_values(),
        })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn is_free(&self, k: usize) -> bool {
        !self.laplacian.is_dirichlet(k)
    }

    fn check_positive(&self, u: &[f64], shift: f64) -> Result<()> {
        let worst = (0..self.len())
            .filter(|&k| self.is_free(k))
            .min_by(|&i, &j| (u[i] + shift).total_cmp(&(u[j] + shift)));
        match worst {
            Some(k) if !(u[k] + shift > 0.0) => Err(Error::Singular {
                node: k,
                value: u[k] + shift,
            }),
            _ => Ok(()),
        }
    }

    /// `-Δ_h u + c (u+shift)⁻¹ |∇_h u|² - a` at free nodes, `u - boundary`
    /// at Dirichlet nodes.
    pub fn residual_with(&self, u: &[f64], shift: f64, boundary: f64) -> Result<Vec<f64>> {
        self.check_positive(u, shift)?;
        let lu = self.laplacian.apply(u);
        Ok((0..self.len())
            .map(|k| {
                if self.is_free(k) {
                    let g = self.gradient.grad_sq_at(u, k);
                    lu[k] + self.c[k] * g / (u[k] + shift) - self.a[k]
                } else {
                    u[k] - boundary
                }
            })
            .collect())
    }

    /// Residual of the truncated form (boundary value 0).
    pub fn residual(&self, u: &[f64], epsilon: f64) -> Result<Vec<f64>> {
        self.residual_with(u, epsilon, 0.0)
    }

    /// Exact derivative of [`Self::residual`], including the first-order
    /// term from differentiating `|∇u|²`.
    pub fn jacobian(&self, u: &[f64], epsilon: f64) -> Result<LinearOperator> {
        self.check_positive(u, epsilon)?;
        Ok(self.laplacian.with_row_update(|k| {
            let inv = 1.0 / (u[k] + epsilon);
            let ck = self.c[k];
            let g = self.gradient.grad_sq_at(u, k);
            let mut extra = vec![(k, -ck * g * inv * inv)];
            for d in self.gradient.at(k) {
                let slope = d.apply(u);
                for (&j, &w) in d.idx.iter().zip(&d.w) {
                    extra.push((j, 2.0 * ck * inv * slope * w));
                }
            }
            extra
        }))
    }

    /// Magnitude of residual noise from rounding in `-Δ_h u`.
    pub fn roundoff_floor(&self, u_scale: f64) -> f64 {
        let diag = self.laplacian.diag().into_iter().fold(0.0, f64::max);
        32.0 * f64::EPSILON * diag * u_scale.max(1.0)
    }
}

/// Residual of the truncated equation for `u` on its own grid.
pub fn residual(problem: &Problem, u: &DiscreteField, epsilon: f64) -> Result<DiscreteField> {
    let disc = Discretization::new(problem, u.grid())?;
    DiscreteField::new(Arc::clone(u.grid()), disc.residual(u.values(), epsilon)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSolveOptions {
    /// Relative to `‖a‖∞ + 1`.
    pub tol_residual: f64,
    pub max_newton: usize,
    pub backtrack: f64,
    pub max_halvings: usize,
    pub picard_fallback: bool,
    pub max_picard: usize,
    pub bracket_projection: bool,
}

impl Default for TruncatedSolveOptions {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_newton: 50,
            backtrack: 0.5,
            max_halvings: 30,
            picard_fallback: true,
            max_picard: 2000,
            bracket_projection: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Newton,
    Picard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative ∞-norm residual, starting with the initial iterate.
    pub residual_history: Vec<f64>,
    /// Nodes moved back into the bracket, per accepted iterate.
    pub repairs_history: Vec<usize>,
    pub bracket_violations_repaired: usize,
    pub converged: bool,
    pub strategy: Strategy,
    pub final_residual: f64,
    /// `max(tol_residual, rounding floor)` actually used for convergence.
    pub effective_tol: f64,
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    fn project(&self, u: &mut [f64]) -> usize {
        let mut repaired = 0;
        for (k, v) in u.iter_mut().enumerate() {
            if *v < self.lower[k] {
                *v = self.lower[k];
                repaired += 1;
            } else if *v > self.upper[k] {
                *v = self.upper[k];
                repaired += 1;
            }
        }
        repaired
    }
}

/// Projected damped Newton inside the bracket, with a Picard fallback.
///
/// `start` defaults to the bracket midpoint. The returned field is `U`
/// (boundary value 0); the bracket is given for `U + ε`.
pub fn solve_truncated(
    problem: &Problem,
    grid: &Arc<Grid>,
    epsilon: f64,
    bracket: &BracketPair,
    start: Option<&DiscreteField>,
    opts: &TruncatedSolveOptions,
) -> Result<(DiscreteField, SolveReport)> {
    let disc = Discretization::new(problem, grid)?;
    solve_discrete(&disc, epsilon, bracket, start, opts)
}

/// As [`solve_truncated`] with a prebuilt discretization.
/// Picard gives up after this many sweeps without a new best residual.
const PICARD_PATIENCE: usize = 100;

pub fn solve_discrete(
    disc: &Discretization,
    epsilon: f64,
    bracket: &BracketPair,
    start: Option<&DiscreteField>,
    opts: &TruncatedSolveOptions,
) -> Result<(DiscreteField, SolveReport)> {
    if !(epsilon >= 0.0) {
        return Err(Error::Invalid("epsilon must be nonnegative".into()));
    }
    if !(opts.tol_residual > 0.0) {
        return Err(Error::Invalid("tol_residual must be positive".into()));
    }
    let n = disc.len();
    if bracket.sub.len() != n || bracket.sup.len() != n {
        return Err(Error::Invalid("bracket does not match the grid".into()));
    }
    bracket.check_order()?;
    let bounds = Bounds {
        lower: bracket.sub.values().iter().map(|v| v - bracket.epsilon).collect(),
        upper: bracket.sup.values().iter().map(|v| v - bracket.epsilon).collect(),
    };
    if epsilon == 0.0 {
        if let Some(k) = (0..n).find(|&k| disc.is_free(k) && !(bounds.lower[k] > 0.0)) {
            return Err(Error::Invalid(format!(
                "epsilon = 0 needs a lower bracket positive at every interior node (node {k})"
            )));
        }
    }

    let mut u: Vec<f64> = match start {
        Some(s) => s.values().to_vec(),
        None => (0..n).map(|k| 0.5 * (bounds.lower[k] + bounds.upper[k])).collect(),
    };
    let mut repairs_history = Vec::new();
    if opts.bracket_projection {
        repairs_history.push(bounds.project(&mut u));
    }
    for k in 0..n {
        if !disc.is_free(k) {
            u[k] = 0.0;
        }
    }

    let scale = norm_inf(&disc.a) + 1.0;
    let u_scale = norm_inf(&bounds.upper).max(norm_inf(&u));
    let effective_tol = opts.tol_residual.max(disc.roundoff_floor(u_scale) / scale);
    let mut f = disc.residual(&u, epsilon)?;
    let mut history = vec![norm_inf(&f) / scale];
    let mut iterations = 0;
    let mut strategy = Strategy::Newton;
    let lin = LinearSolveOptions::default();

    let mut stalled = false;
    while *history.last().unwrap() > effective_tol {
        if iterations >= opts.max_newton {
            stalled = true;
            break;
        }
        iterations += 1;
        let jac = disc.jacobian(&u, epsilon)?;
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let step = match solve_linear_with(&jac, &rhs, &rhs, lin) {
            Ok((s, _)) => s,
            Err(_) => {
                stalled = true;
                break;
            }
        };
        let base = norm2(&f);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut trial: Vec<f64> = u.iter().zip(&step).map(|(x, d)| x + t * d).collect();
            let repaired = if opts.bracket_projection {
                bounds.project(&mut trial)
            } else {
                0
            };
            if let Ok(ft) = disc.residual(&trial, epsilon) {
                if norm2(&ft) <= base {
                    accepted = Some((trial, ft, repaired));
                    break;
                }
            }
            t *= opts.backtrack;
        }
        match accepted {
            Some((trial, ft, repaired)) => {
                u = trial;
                f = ft;
                repairs_history.push(repaired);
                history.push(norm_inf(&f) / scale);
            }
            None => {
                stalled = true;
                break;
            }
        }
    }

    if stalled && opts.picard_fallback {
        strategy = Strategy::Picard;
        let zero = vec![0.0; n];
        let (mut best, mut since_best) = (*history.last().unwrap(), 0);
        for _ in 0..opts.max_picard {
            if *history.last().unwrap() <= effective_tol || since_best >= PICARD_PATIENCE {
                break;
            }
            iterations += 1;
            let rhs: Vec<f64> = (0..n)
                .map(|k| {
                    if disc.is_free(k) {
                        disc.a[k] - disc.c[k] * disc.gradient.grad_sq_at(&u, k) / (u[k] + epsilon)
                    } else {
                        0.0
                    }
                })
                .collect();
            let (mut next, _) = solve_linear_with(&disc.laplacian, &rhs, &zero, lin)?;
            let repaired = if opts.bracket_projection {
                bounds.project(&mut next)
            } else {
                0
            };
            u = next;
            f = disc.residual(&u, epsilon)?;
            repairs_history.push(repaired);
            let res = norm_inf(&f) / scale;
            history.push(res);
            if res < best {
                (best, since_best) = (res, 0);
            } else {
                since_best += 1;
            }
        }
    }

    let final_residual = *history.last().unwrap();
    let report = SolveReport {
        iterations,
        bracket_violations_repaired: repairs_history.iter().sum(),
        repairs_history,
        converged: final_residual <= effective_tol,
        strategy,
        final_residual,
        effective_tol,
        residual_history: history,
    };
    Ok((DiscreteField::new(Arc::clone(&disc.grid), u)?, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniquenessVerdict {
    /// All runs converged to the same field.
    Unique,
    /// All runs converged but to different fields.
    Distinct,
    /// Some run did not converge; no claim is made.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub verdict: UniquenessVerdict,
    pub solutions: Vec<DiscreteField>,
    pub reports: Vec<SolveReport>,
    /// `(i, j, ‖u_i - u_j‖∞)` for every pair.
    pub distances: Vec<(usize, usize, f64)>,
    /// `(i, j, max (u_i+ε)/(u_j+ε) - 1)` over interior nodes.
    pub alpha_max: Vec<(usize, usize, f64)>,
    pub threshold: f64,
}

/// Solves from every start and compares the limits pairwise.
pub fn verify_uniqueness(
    problem: &Problem,
    grid: &Arc<Grid>,
    epsilon: f64,
    bracket: &BracketPair,
    starts: &[DiscreteField],
    opts: &TruncatedSolveOptions,
) -> Result<UniquenessReport> {
    if starts.is_empty() {
        return Err(Error::Invalid("at least one start is required".into()));
    }
    let disc = Discretization::new(problem, grid)?;
    let mut solutions = Vec::new();
    let mut reports = Vec::new();
    for s in starts {
        let (u, rep) = solve_discrete(&disc, epsilon, bracket, Some(s), opts)?;
        solutions.push(u);
        reports.push(rep);
    }
    let tol = reports.iter().map(|r| r.effective_tol).fold(0.0, f64::max);
    let u_scale = solutions.iter().map(|u| u.norm_inf()).fold(1.0, f64::max);
    let threshold = 10.0 * tol * u_scale;
    let mut distances = Vec::new();
    let mut alpha_max = Vec::new();
    for i in 0..solutions.len() {
        for j in i + 1..solutions.len() {
            let (ui, uj) = (solutions[i].values(), solutions[j].values());
            distances.push((i, j, solutions[i].sup_diff(&solutions[j])));
            let alpha = (0..disc.len())
                .filter(|&k| disc.is_free(k))
                .map(|k| (ui[k] + epsilon) / (uj[k] + epsilon) - 1.0)
                .fold(f64::NEG_INFINITY, f64::max);
            alpha_max.push((i, j, alpha));
        }
    }
    let verdict = if reports.iter().any(|r| !r.converged) {
        UniquenessVerdict::Inconclusive
    } else if distances.iter().all(|d| d.2 <= threshold) {
        UniquenessVerdict::Unique
    } else {
        UniquenessVerdict::Distinct
    };
    Ok(UniquenessReport {
        verdict,
        solutions,
        reports,
        distances,
        alpha_max,
        threshold,
    })
}
