//! Sub/super solution bracket for the truncated problem.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::eigen::{extrema_stats, first_eigenpair, EigenResult};
use crate::error::{Error, Result};
use crate::grid::{DiscreteField, Grid};
use crate::linsolve::solve_linear;
use crate::operator::{build_laplacian, GradientStencil};
use crate::problem::{sample_field, Problem};
use crate::truncated::Discretization;

/// Deflation of the sampled `min a` and inflation of the sampled `max c`.
pub const M2_DEFLATE: f64 = 0.99;
pub const M1_INFLATE: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BracketMode {
    /// `σ₁φ₁² + ε` from the first eigenfunction.
    Eigen,
    /// `σ₁v² + ε` from the Poisson supersolution.
    Poisson,
    /// Nodal max of both lower bounds.
    Combined,
}

impl FromStr for BracketMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eigen" => Ok(Self::Eigen),
            "poisson" => Ok(Self::Poisson),
            "combined" => Ok(Self::Combined),
            _ => Err(Error::Invalid(format!("unknown bracket mode `{s}`"))),
        }
    }
}

impl fmt::Display for BracketMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Eigen => "eigen",
            Self::Poisson => "poisson",
            Self::Combined => "combined",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketPair {
    pub sub: DiscreteField,
    pub sup: DiscreteField,
    /// σ₁ of the eigen subsolution (Poisson mode: of the Poisson one).
    pub sigma1: f64,
    /// σ₁ of the Poisson subsolution when it was built.
    pub sigma1_alt: Option<f64>,
    pub epsilon: f64,
    pub m2: f64,
    pub big_m1: f64,
    pub mode: BracketMode,
    pub lambda1: Option<f64>,
}

impl BracketPair {
    /// Fails on the first node with `sub > sup`.
    pub fn check_order(&self) -> Result<()> {
        let (lo, hi) = (self.sub.values(), self.sup.values());
        match (0..lo.len()).find(|&k| !(lo[k] <= hi[k])) {
            Some(node) => Err(Error::BracketViolation {
                node,
                sub: lo[node],
                sup: hi[node],
            }),
            None => Ok(()),
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "mode = {}\nepsilon = {:.16e}\nsigma1 = {:.16e}\n",
            self.mode, self.epsilon, self.sigma1
        );
        if let Some(alt) = self.sigma1_alt {
            s += &format!("sigma1_alt = {alt:.16e}\n");
        }
        s += &format!("m2 = {:.16e}\nM1 = {:.16e}\n", self.m2, self.big_m1);
        if let Some(l) = self.lambda1 {
            s += &format!("lambda1 = {l:.16e}\n");
        }
        s
    }
}

/// Solution `v` of `-Δ_h v = a`, `v = 0` on the boundary.
pub fn poisson_supersolution(problem: &Problem, grid: &Arc<Grid>) -> Result<DiscreteField> {
    if !problem.domain.is_bounded() {
        return Err(Error::Invalid("the Poisson supersolution needs a bounded domain".into()));
    }
    let op = build_laplacian(grid, problem.dim)?;
    let a = sample_field(&problem.a, grid)?;
    solve_linear(&op, &a, &vec![0.0; grid.len()])
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} must be positive, got {v}")))
    }
}

fn require_nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} must be nonnegative, got {v}")))
    }
}

/// `min{ m₂ / (2λ₁ max φ₁² + 4M₁ max|∇φ₁|²), 1 }`.
pub fn compute_sigma1(m2: f64, lambda1: f64, max_phi1_sq: f64, big_m1: f64, max_grad_phi1_sq: f64) -> Result<f64> {
    require_positive("m2", m2)?;
    require_positive("lambda1", lambda1)?;
    require_positive("max phi1^2", max_phi1_sq)?;
    require_nonnegative("M1", big_m1)?;
    require_nonnegative("max |grad phi1|^2", max_grad_phi1_sq)?;
    let denom = 2.0 * lambda1 * max_phi1_sq + 4.0 * big_m1 * max_grad_phi1_sq;
    Ok((m2 / denom).min(1.0))
}

/// `min{ m₂ / max(2v + 4M₁|∇v|²), 1 }`, the factor for the subsolution `σ₁v² + ε`.
pub fn compute_sigma1_alt(m2: f64, v: &DiscreteField, big_m1: f64) -> Result<f64> {
    require_positive("m2", m2)?;
    require_nonnegative("M1", big_m1)?;
    let grad = GradientStencil::new(v.grid()).grad_sq(v.values());
    let denom = v
        .values()
        .iter()
        .zip(&grad)
        .map(|(v, g)| 2.0 * v + 4.0 * big_m1 * g)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(denom > 0.0) {
        return Err(Error::Invalid("degenerate Poisson supersolution (max of 2v + 4M1|grad v|^2 is not positive)".into()));
    }
    Ok((m2 / denom).min(1.0))
}

/// Builds `sub ≤ super` for the problem on `grid` with truncation `ε`.
///
/// When `min a ≤ 0` on the grid no positive σ₁ exists and the lower bound
/// degenerates to `ε`.
pub fn build_bracket(problem: &Problem, grid: &Arc<Grid>, epsilon: f64, mode: BracketMode) -> Result<BracketPair> {
    let (pair, _) = build_bracket_with_eigen(problem, grid, epsilon, mode)?;
    Ok(pair)
}

/// As [`build_bracket`], also returning the eigenpair when one was computed.
pub fn build_bracket_with_eigen(
    problem: &Problem,
    grid: &Arc<Grid>,
    epsilon: f64,
    mode: BracketMode,
) -> Result<(BracketPair, Option<EigenResult>)> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Invalid("epsilon must be nonnegative".into()));
    }
    let v = poisson_supersolution(problem, grid)?;
    let a = sample_field(&problem.a, grid)?;
    let c = sample_field(&problem.c, grid)?;
    let m2 = M2_DEFLATE * a.min();
    let big_m1 = (M1_INFLATE * c.max()).max(0.0);
    let degenerate = !(m2 > 0.0);

    let mut eig = None;
    let mut sigma1 = 0.0;
    let mut sigma1_alt = None;
    let mut eigen_sub = None;
    let mut poisson_sub = None;
    if matches!(mode, BracketMode::Eigen | BracketMode::Combined) {
        let op = build_laplacian(grid, problem.dim)?;
        let e = first_eigenpair(&op, grid, problem.dim, 1e-12)?;
        if !degenerate {
            let (max_sq, max_grad) = extrema_stats(&e.phi1);
            sigma1 = compute_sigma1(m2, e.lambda1, max_sq, big_m1, max_grad)?;
        }
        eigen_sub = Some(e.phi1.map(|p| sigma1 * p * p + epsilon));
        eig = Some(e);
    }
    if matches!(mode, BracketMode::Poisson | BracketMode::Combined) {
        let s = if degenerate { 0.0 } else { compute_sigma1_alt(m2, &v, big_m1)? };
        poisson_sub = Some(v.map(|x| s * x * x + epsilon));
        if mode == BracketMode::Poisson {
            sigma1 = s;
        }
        sigma1_alt = Some(s);
    }
    let sub = match (eigen_sub, poisson_sub) {
        (Some(e), Some(p)) => e.zip_map(&p, f64::max),
        (Some(e), None) => e,
        (None, Some(p)) => p,
        (None, None) => unreachable!(),
    };
    let pair = BracketPair {
        sub,
        sup: v.map(|x| x + epsilon),
        sigma1,
        sigma1_alt,
        epsilon,
        m2,
        big_m1,
        mode,
        lambda1: eig.as_ref().map(|e| e.lambda1),
    };
    pair.check_order()?;
    Ok((pair, eig))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// Largest residual over interior nodes.
    pub max: f64,
    /// Smallest residual over interior nodes.
    pub min: f64,
    pub argmax: usize,
    pub argmin: usize,
}

fn residual_report(disc: &Discretization, u: &DiscreteField, epsilon: f64) -> Result<ResidualReport> {
    let r = disc.residual_with(u.values(), 0.0, epsilon)?;
    let mut rep = ResidualReport {
        max: f64::NEG_INFINITY,
        min: f64::INFINITY,
        argmax: 0,
        argmin: 0,
    };
    for k in (0..r.len()).filter(|&k| disc.is_free(k)) {
        if r[k] > rep.max {
            rep.max = r[k];
            rep.argmax = k;
        }
        if r[k] < rep.min {
            rep.min = r[k];
            rep.argmin = k;
        }
    }
    Ok(rep)
}

/// `-Δ_h u̲ + c u̲⁻¹|∇_h u̲|² - a` at interior nodes; a subsolution has
/// `max ≤ 0` up to discretization slack.
pub fn verify_subsolution_residual(problem: &Problem, bracket: &BracketPair) -> Result<ResidualReport> {
    let disc = Discretization::new(problem, bracket.sub.grid())?;
    residual_report(&disc, &bracket.sub, bracket.epsilon)
}

/// Same operator applied to `ū`; a supersolution has `min ≥ 0` up to slack.
pub fn verify_supersolution_residual(problem: &Problem, bracket: &BracketPair) -> Result<ResidualReport> {
    let disc = Discretization::new(problem, bracket.sup.grid())?;
    residual_report(&disc, &bracket.sup, bracket.epsilon)
}
