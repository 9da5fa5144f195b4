//! Whole-space pipeline: ε-continuation, ball exhaustion, the radial
//! barrier `w` and decay-rate fits.

use std::sync::Arc;

use crate::barriers::{build_bracket_with_eigen, BracketMode, BracketPair};
use crate::error::{Error, Result};
use crate::grid::{DiscreteField, Grid, RadialGrid};
use crate::problem::{linear_fit, DomainSpec, Problem};
use crate::quadrature::{integrate, integrate_to_infinity, QuadOptions};
use crate::truncated::{solve_discrete, Discretization, SolveReport, TruncatedSolveOptions};

const BARRIER_QUAD: QuadOptions = QuadOptions {
    abs_tol: 0.0,
    rel_tol: 1e-12,
    max_intervals: 4000,
};

fn check_dim(dim: usize) -> Result<f64> {
    if dim <= 2 {
        return Err(Error::Invalid("the radial barrier needs dim > 2".into()));
    }
    Ok((dim - 2) as f64)
}

/// `∫₀^r f` over dyadic panels `[0,1], [1,2], [2,4], …` so that features
/// near the origin are seen however large `r` is.
fn integrate_from_zero(f: impl Fn(f64) -> f64, r: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut hi = r.min(1.0);
    while lo < r {
        total += integrate(&f, lo, hi, BARRIER_QUAD)?.value;
        lo = hi;
        hi = (2.0 * hi).min(r);
    }
    Ok(total)
}

/// `(N-2)⁻¹ [∫_r^∞ ξφ dξ + r^{2-N} ∫₀^r ξ^{N-1}φ dξ]`.
pub fn barrier_w(phi: impl Fn(f64) -> f64, dim: usize, r: f64) -> Result<f64> {
    let nm2 = check_dim(dim)?;
    if !(r >= 0.0) {
        return Err(Error::Invalid("barrier radius must be nonnegative".into()));
    }
    let tail = integrate_to_infinity(|x| x * phi(x), r, BARRIER_QUAD)?.value;
    let inner = if r > 0.0 {
        let m = integrate_from_zero(|x| x.powi(dim as i32 - 1) * phi(x), r)?;
        m * r.powi(2 - dim as i32)
    } else {
        0.0
    };
    Ok((tail + inner) / nm2)
}

/// `∫_r^∞ ξ^{1-N} ∫₀^ξ σ^{N-1}φ dσ dξ`, evaluated as written.
pub fn barrier_w_nested(phi: impl Fn(f64) -> f64, dim: usize, r: f64) -> Result<f64> {
    check_dim(dim)?;
    let inner = |xi: f64| {
        integrate_from_zero(|s| s.powi(dim as i32 - 1) * phi(s), xi).unwrap_or(f64::NAN)
    };
    Ok(integrate_to_infinity(|xi| xi.powi(1 - dim as i32) * inner(xi), r, QuadOptions::rel(1e-11))?.value)
}

/// `K = (N-2)⁻¹ ∫₀^∞ ξφ dξ`, the bound `w ≤ K`.
pub fn barrier_bound_k(phi: impl Fn(f64) -> f64, dim: usize) -> Result<f64> {
    let nm2 = check_dim(dim)?;
    match integrate_to_infinity(|x| x * phi(x), 0.0, BARRIER_QUAD) {
        Ok(q) => Ok(q.value / nm2),
        Err(_) => Err(Error::Assumption(
            "the integral of r*phi(r) over (0, inf) does not converge".into(),
        )),
    }
}

pub type Envelope = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Radial barrier built from an envelope `φ`.
#[derive(Clone)]
pub struct RadialBarrier {
    phi: Envelope,
    dim: usize,
    k: f64,
}

impl std::fmt::Debug for RadialBarrier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialBarrier")
            .field("dim", &self.dim)
            .field("k", &self.k)
            .finish_non_exhaustive()
    }
}

impl RadialBarrier {
    pub fn new(phi: Envelope, dim: usize) -> Result<Self> {
        let k = barrier_bound_k(&*phi, dim)?;
        Ok(Self { phi, dim, k })
    }

    /// Uses the problem's envelope `max_{|x|=r} a(x)`.
    pub fn from_problem(problem: &Problem) -> Result<Self> {
        let p = problem.clone();
        Self::new(Arc::new(move |r| p.phi_envelope(r).unwrap_or(f64::NAN)), problem.dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn phi(&self, r: f64) -> f64 {
        (self.phi)(r)
    }

    pub fn w(&self, r: f64) -> Result<f64> {
        barrier_w(&*self.phi, self.dim, r)
    }

    pub fn w_nested(&self, r: f64) -> Result<f64> {
        barrier_w_nested(&*self.phi, self.dim, r)
    }

    /// `w` at increasing radii `r₀ < r₁ < …`, accumulating panel integrals.
    pub fn table(&self, radii: &[f64]) -> Result<Vec<f64>> {
        if radii.is_empty() {
            return Ok(Vec::new());
        }
        if radii[0] < 0.0 || radii.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Invalid("barrier table radii must increase from r >= 0".into()));
        }
        let phi = &*self.phi;
        let n = radii.len();
        let dim = self.dim as i32;
        let mut tail = vec![0.0; n];
        tail[n - 1] = integrate_to_infinity(|x| x * phi(x), radii[n - 1], BARRIER_QUAD)?.value;
        for i in (0..n - 1).rev() {
            tail[i] = tail[i + 1] + integrate(|x| x * phi(x), radii[i], radii[i + 1], BARRIER_QUAD)?.value;
        }
        let mut inner = if radii[0] > 0.0 {
            integrate_from_zero(|x| x.powi(dim - 1) * phi(x), radii[0])?
        } else {
            0.0
        };
        let nm2 = (self.dim - 2) as f64;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 {
                inner += integrate(|x| x.powi(dim - 1) * phi(x), radii[i - 1], radii[i], BARRIER_QUAD)?.value;
            }
            let piece = if radii[i] > 0.0 { inner * radii[i].powi(2 - dim) } else { 0.0 };
            out.push((tail[i] + piece) / nm2);
        }
        Ok(out)
    }
}

/// `ε_n = start · 2^{-n}`, n = 0, 1, … while `ε_n ≥ floor`.
pub fn epsilon_schedule(start: f64, floor: f64) -> Result<Vec<f64>> {
    if !(start > 0.0 && floor > 0.0 && floor <= start) {
        return Err(Error::Invalid("need 0 < epsilon floor <= epsilon start".into()));
    }
    let mut out = Vec::new();
    let mut e = start;
    while e >= floor {
        out.push(e);
        e *= 0.5;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationOptions {
    /// Strictly decreasing, positive.
    pub schedule: Vec<f64>,
    pub tol_cauchy: f64,
    pub mode: BracketMode,
    pub solve: TruncatedSolveOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            schedule: epsilon_schedule(0.5, 0.5f64.powi(20)).unwrap(),
            tol_cauchy: 1e-6,
            mode: BracketMode::Eigen,
            solve: TruncatedSolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationStep {
    pub epsilon: f64,
    /// Sup-distance to the previous step's field.
    pub supdiff: Option<f64>,
    pub report: SolveReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuationVerdict {
    /// Two consecutive sup-diffs below tolerance.
    Cauchy,
    /// The schedule ended first.
    FloorReached,
    /// Sup-diffs failed to decrease for three consecutive steps after
    /// first starting to shrink.
    Stalled,
    /// A truncated solve did not converge.
    SolverFailed,
}

impl ContinuationVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Cauchy => "cauchy",
            Self::FloorReached => "floor-reached",
            Self::Stalled => "stalled",
            Self::SolverFailed => "solver-failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationResult {
    /// Field of the last accepted step (boundary value 0).
    pub u: DiscreteField,
    pub epsilon: f64,
    pub trace: Vec<ContinuationStep>,
    pub verdict: ContinuationVerdict,
    /// Limit bracket `σ₁φ₁² ≤ u ≤ v` (the ε = 0 bracket).
    pub bracket: BracketPair,
}

impl BracketPair {
    /// Same bracket with truncation `ε`; `self` must be the ε = 0 bracket.
    pub fn at_epsilon(&self, epsilon: f64) -> BracketPair {
        let shift = epsilon - self.epsilon;
        BracketPair {
            sub: self.sub.map(|v| v + shift),
            sup: self.sup.map(|v| v + shift),
            epsilon,
            ..self.clone()
        }
    }
}

/// Warm-started chain of truncated solves along a decreasing ε schedule.
pub fn epsilon_continuation(
    problem: &Problem,
    grid: &Arc<Grid>,
    initial: Option<&DiscreteField>,
    opts: &ContinuationOptions,
) -> Result<ContinuationResult> {
    let sched = &opts.schedule;
    if sched.is_empty() || sched.iter().any(|e| !(*e > 0.0)) || sched.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Invalid("epsilon schedule must be positive and strictly decreasing".into()));
    }
    let disc = Discretization::new(problem, grid)?;
    let (base, _) = build_bracket_with_eigen(problem, grid, 0.0, opts.mode)?;
    let mut trace: Vec<ContinuationStep> = Vec::new();
    let mut current: Option<DiscreteField> = initial.cloned();
    let mut below = 0;
    let mut rising = 0;
    let mut peaked = false;
    let mut verdict = ContinuationVerdict::FloorReached;
    let mut last_eps = sched[0];
    for &eps in sched {
        let bracket = base.at_epsilon(eps);
        let (u, report) = solve_discrete(&disc, eps, &bracket, current.as_ref(), &opts.solve)?;
        let supdiff = match (&current, trace.is_empty()) {
            (Some(prev), false) => Some(prev.sup_diff(&u)),
            _ => None,
        };
        let converged = report.converged;
        let prev_diff = trace.last().and_then(|s| s.supdiff);
        trace.push(ContinuationStep {
            epsilon: eps,
            supdiff,
            report,
        });
        current = Some(u);
        last_eps = eps;
        if !converged {
            verdict = ContinuationVerdict::SolverFailed;
            break;
        }
        if let Some(d) = supdiff {
            below = if d < opts.tol_cauchy { below + 1 } else { 0 };
            // Diffs grow while ε dominates the solution, so stalls are only
            // counted once they have started to shrink.
            if prev_diff.is_some_and(|p| d < p) {
                peaked = true;
            }
            rising = match prev_diff {
                Some(p) if peaked && d >= p => rising + 1,
                _ => 0,
            };
            if below >= 2 {
                verdict = ContinuationVerdict::Cauchy;
                break;
            }
            if rising >= 3 {
                verdict = ContinuationVerdict::Stalled;
                break;
            }
        }
    }
    Ok(ContinuationResult {
        u: current.expect("schedule is nonempty"),
        epsilon: last_eps,
        trace,
        verdict,
        bracket: base,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustOptions {
    /// Increasing ball radii; sup-diffs are measured on the first ball.
    pub radii: Vec<f64>,
    pub nodes_per_unit: usize,
    pub tol_exhaust: f64,
    /// Start each ball from the previous ball's field.
    pub warm_start: bool,
    /// Additive allowance in `u ≤ w` is `slack · h² · K`.
    pub barrier_slack: f64,
    pub continuation: ContinuationOptions,
}

/// `R₀ · 2^k`, k = 0..count.
pub fn geometric_radii(r0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| r0 * 2f64.powi(k as i32)).collect()
}

impl Default for ExhaustOptions {
    fn default() -> Self {
        Self {
            radii: geometric_radii(2.0, 9),
            nodes_per_unit: 64,
            tol_exhaust: 1e-5,
            warm_start: true,
            barrier_slack: 1.0,
            continuation: ContinuationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallSolution {
    pub radius: f64,
    pub u: DiscreteField,
    /// Barrier values at the ball's nodes.
    pub w: Vec<f64>,
    /// `min (w - u)` over the nodes.
    pub barrier_margin: f64,
    pub continuation_verdict: ContinuationVerdict,
    pub epsilon: f64,
    pub sigma1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExhaustStep {
    pub k: usize,
    pub radius: f64,
    /// Sup-distance to the previous ball on `B_{R₀}`.
    pub supdiff: Option<f64>,
    pub barrier_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExhaustVerdict {
    Cauchy,
    /// Schedule ended with the last sup-diff above tolerance.
    NotCauchy,
    /// Fewer than two balls; nothing to compare.
    Undetermined,
    /// A ball's continuation did not reach an accepted state.
    BallFailed,
}

impl ExhaustVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Cauchy => "cauchy",
            Self::NotCauchy => "not-cauchy",
            Self::Undetermined => "undetermined",
            Self::BallFailed => "ball-failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlobalSolution {
    pub dim: usize,
    pub r0: f64,
    pub balls: Vec<BallSolution>,
    pub trace: Vec<ExhaustStep>,
    pub verdict: ExhaustVerdict,
    pub barrier: RadialBarrier,
}

impl GlobalSolution {
    pub fn min_barrier_margin(&self) -> f64 {
        self.balls.iter().map(|b| b.barrier_margin).fold(f64::INFINITY, f64::min)
    }
}

/// Solves on `B_{R_k}` for each radius, zero-extending outside each ball.
pub fn exhaust(problem: &Problem, opts: &ExhaustOptions) -> Result<GlobalSolution> {
    if problem.domain != DomainSpec::WholeSpace {
        return Err(Error::Invalid("ball exhaustion needs a whole-space problem".into()));
    }
    if !problem.is_radial() {
        return Err(Error::Invalid("whole-space runs need radial coefficients".into()));
    }
    let radii = &opts.radii;
    if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Invalid("ball radii must be positive and increasing".into()));
    }
    if opts.nodes_per_unit == 0 {
        return Err(Error::Invalid("nodes per unit radius must be positive".into()));
    }
    let barrier = RadialBarrier::from_problem(problem)?;
    let r0 = radii[0];
    let mut balls: Vec<BallSolution> = Vec::new();
    let mut trace = Vec::new();
    let mut verdict = ExhaustVerdict::Undetermined;
    for (k, &radius) in radii.iter().enumerate() {
        let n = (radius * opts.nodes_per_unit as f64).round() as usize + 1;
        let grid = Arc::new(Grid::Radial(RadialGrid::uniform(radius, n)?));
        let ball_problem = Problem {
            domain: DomainSpec::Ball { radius },
            ..problem.clone()
        };
        let initial = match (opts.warm_start, balls.last()) {
            (true, Some(prev)) => Some(DiscreteField::from_fn(grid.clone(), |x| prev.u.radial_value(x[0]))?),
            _ => None,
        };
        let cont = epsilon_continuation(&ball_problem, &grid, initial.as_ref(), &opts.continuation)?;
        let h = grid.spacing();
        let slack = opts.barrier_slack * h * h * barrier.k();
        let w = barrier.table(grid.as_radial().expect("radial grid").nodes())?;
        let mut margin = f64::INFINITY;
        for (node, (&u, &wv)) in cont.u.values().iter().zip(&w).enumerate() {
            margin = margin.min(wv - u);
            if u > wv + slack {
                return Err(Error::BarrierViolation {
                    node,
                    r: grid.radius_of(node),
                    u,
                    w: wv,
                });
            }
        }
        let supdiff = balls.last().map(|prev| sup_diff_on(&prev.u, &cont.u, r0));
        trace.push(ExhaustStep {
            k,
            radius,
            supdiff,
            barrier_margin: margin,
        });
        let ok = matches!(cont.verdict, ContinuationVerdict::Cauchy | ContinuationVerdict::FloorReached);
        balls.push(BallSolution {
            radius,
            u: cont.u,
            w,
            barrier_margin: margin,
            continuation_verdict: cont.verdict,
            epsilon: cont.epsilon,
            sigma1: cont.bracket.sigma1,
        });
        if !ok {
            verdict = ExhaustVerdict::BallFailed;
            break;
        }
        if let Some(d) = supdiff {
            if d < opts.tol_exhaust {
                verdict = ExhaustVerdict::Cauchy;
                break;
            }
            verdict = ExhaustVerdict::NotCauchy;
        }
    }
    Ok(GlobalSolution {
        dim: problem.dim,
        r0,
        balls,
        trace,
        verdict,
        barrier,
    })
}

/// Sup-distance of two radial fields over nodes of `a` with `r ≤ radius`.
fn sup_diff_on(a: &DiscreteField, b: &DiscreteField, radius: f64) -> f64 {
    let grid = a.grid();
    (0..a.len())
        .filter(|&k| grid.radius_of(k) <= radius * (1.0 + 1e-12))
        .map(|k| (a.values()[k] - b.radial_value(grid.radius_of(k))).abs())
        .fold(0.0, f64::max)
}

/// Half-decade `[R/(8√10), R/8]`: Dirichlet truncation perturbs the local
/// slope by about `2(r/R)²`, at most 0.03 here.
pub fn default_decay_window(radius: f64) -> (f64, f64) {
    let hi = radius / 8.0;
    (hi / 10f64.sqrt(), hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS of the log-log fit residuals.
    pub rms: f64,
    /// `2 - μ`.
    pub predicted: f64,
    /// Whether `μ ∈ (2, N)`; the rate is only claimed when it is.
    pub admissible: bool,
    pub window: (f64, f64),
    pub points: usize,
}

const DECAY_FLOOR: f64 = 1e-14;
const MIN_FIT_POINTS: usize = 8;

fn fit_points(r: &[f64], u: &[f64], mu: f64, dim: usize, window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(0.0 < lo && lo < hi) {
        return Err(Error::FitRefused(format!("bad window [{lo}, {hi}]")));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (&r, &u) in r.iter().zip(u) {
        if r < lo || r > hi {
            continue;
        }
        if !(u > DECAY_FLOOR) {
            return Err(Error::FitRefused(format!("u = {u:e} at r = {r} is below the {DECAY_FLOOR:e} floor")));
        }
        x.push(r.ln());
        y.push(u.ln());
    }
    if x.len() < MIN_FIT_POINTS {
        return Err(Error::FitRefused(format!(
            "window [{lo}, {hi}] holds {} points, need {MIN_FIT_POINTS}",
            x.len()
        )));
    }
    let (slope, intercept, rms) = linear_fit(&x, &y);
    Ok(DecayFit {
        slope,
        intercept,
        rms,
        predicted: 2.0 - mu,
        admissible: mu > 2.0 && mu < dim as f64,
        window,
        points: x.len(),
    })
}

/// Log-log slope of the outermost ball's field over `window` (default
/// [`default_decay_window`]).
pub fn decay_fit(solution: &GlobalSolution, mu: f64, window: Option<(f64, f64)>) -> Result<DecayFit> {
    let ball = solution
        .balls
        .last()
        .ok_or_else(|| Error::FitRefused("no solved balls".into()))?;
    if ball.radius < 10.0 * solution.r0 {
        return Err(Error::FitRefused(format!(
            "outermost radius {} is less than a decade beyond {}",
            ball.radius, solution.r0
        )));
    }
    let grid = ball.u.grid();
    let r: Vec<f64> = (0..grid.len()).map(|k| grid.radius_of(k)).collect();
    let window = window.unwrap_or_else(|| default_decay_window(ball.radius));
    fit_points(&r, ball.u.values(), mu, solution.dim, window)
}

/// Log-log slope of `w` sampled at `points` log-spaced radii in `window`.
pub fn barrier_decay_fit(barrier: &RadialBarrier, mu: f64, window: (f64, f64), points: usize) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(0.0 < lo && lo < hi) || points < 2 {
        return Err(Error::FitRefused(format!("bad window [{lo}, {hi}]")));
    }
    let r: Vec<f64> = (0..points)
        .map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64))
        .collect();
    let w = r.iter().map(|&x| barrier.w(x)).collect::<Result<Vec<_>>>()?;
    fit_points(&r, &w, mu, barrier.dim(), window)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power4(r: f64) -> f64 {
        (1.0 + r).powi(-4)
    }

    // Antiderivative oracle for N = 5, φ = (1+r)^-4.
    fn w_power4(r: f64) -> f64 {
        let tail = (1.0 + 3.0 * r) / (6.0 * (1.0 + r).powi(3));
        let inner = if r == 0.0 {
            0.0
        } else {
            let s = 1.0 + r;
            let m = s - 4.0 * s.ln() - 6.0 / s + 2.0 / (s * s) - 1.0 / (3.0 * s * s * s) - (1.0 - 6.0 + 2.0 - 1.0 / 3.0);
            m / (r * r * r)
        };
        (tail + inner) / 3.0
    }

    fn log_radii(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn power_law_barrier() {
        let k = barrier_bound_k(power4, 5).unwrap();
        assert!((k - 1.0 / 18.0).abs() < 1e-12);
        let w0 = barrier_w(power4, 5, 0.0).unwrap();
        assert!((w0 - k).abs() < 1e-12);
        for r in log_radii(20, 1e-1, 1e3) {
            let w = barrier_w(power4, 5, r).unwrap();
            assert!((w - w_power4(r)).abs() < 1e-9 * k, "{r}: {w} vs {}", w_power4(r));
            assert!(w <= k * (1.0 + 1e-9));
        }
    }

    #[test]
    fn closed_and_nested_forms_agree() {
        let k = barrier_bound_k(power4, 5).unwrap();
        for r in log_radii(10, 1e-2, 1e3) {
            let a = barrier_w(power4, 5, r).unwrap();
            let b = barrier_w_nested(power4, 5, r).unwrap();
            assert!((a - b).abs() <= 1e-8 * k, "{r}: {a} {b}");
        }
    }

    #[test]
    fn compact_support_tail_is_harmonic() {
        let bump = |r: f64| if r < 1.0 { (1.0 - r * r).powi(2) } else { 0.0 };
        // ∫₀¹ σ³(1-σ²)² dσ = 1/24 for N = 4
        for r in [1.0, 2.0, 10.0, 100.0] {
            let w = barrier_w(bump, 4, r).unwrap();
            let exact = r.powi(-2) / 24.0 / 2.0;
            assert!((w - exact).abs() < 1e-10 * exact, "{r}");
            let nested = barrier_w_nested(bump, 4, r).unwrap();
            assert!((nested - exact).abs() < 1e-8 * exact);
        }
    }

    #[test]
    fn k_examples() {
        let k = barrier_bound_k(|r: f64| (-r).exp(), 3).unwrap();
        assert!((k - 1.0).abs() < 1e-10);
        let k3 = barrier_bound_k(|r: f64| 3.0 * (-r).exp(), 3).unwrap();
        assert!((k3 - 3.0).abs() < 1e-10);
        assert!(matches!(barrier_bound_k(|_| 1.0, 5), Err(Error::Assumption(_))));
        assert_eq!(barrier_w(|_| 0.0, 5, 2.0).unwrap(), 0.0);
        assert!(barrier_w(power4, 2, 1.0).is_err());
    }

    #[test]
    fn table_matches_pointwise() {
        let b = RadialBarrier::new(Arc::new(power4), 5).unwrap();
        let radii: Vec<f64> = (0..200).map(|i| i as f64 * 0.25).collect();
        let t = b.table(&radii).unwrap();
        for (r, w) in radii.iter().zip(&t) {
            assert!((w - w_power4(*r)).abs() < 1e-10 * b.k());
        }
        assert!(t.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn barrier_slope_far_field() {
        let b = RadialBarrier::new(Arc::new(power4), 5).unwrap();
        let fit = barrier_decay_fit(&b, 4.0, (1e3, 1e4), 32).unwrap();
        assert!((fit.slope + 2.0).abs() < 0.02, "{}", fit.slope);
        assert!(fit.admissible);
        let bump = RadialBarrier::new(Arc::new(|r: f64| if r < 1.0 { 1.0 - r } else { 0.0 }), 3).unwrap();
        let fit = barrier_decay_fit(&bump, 3.0, (10.0, 100.0), 16).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-9);
        assert!(!fit.admissible);
    }

    #[test]
    fn schedule_examples() {
        let s = epsilon_schedule(0.5, 1e-3).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!(*s.last().unwrap(), 0.5f64.powi(9));
        assert_eq!(ContinuationOptions::default().schedule.len(), 20);
        assert!(epsilon_schedule(1e-3, 1.0).is_err());
        assert_eq!(geometric_radii(2.0, 5), vec![2.0, 4.0, 8.0, 16.0, 32.0]);
    }

    #[test]
    fn continuation_manufactured_limit() {
        let p = Problem::from_exprs(3, "6 + 4*r^2", "1 - r^2", DomainSpec::Ball { radius: 1.0 }).unwrap();
        let grid = Arc::new(Grid::Radial(RadialGrid::uniform(1.0, 129).unwrap()));
        let res = epsilon_continuation(&p, &grid, None, &ContinuationOptions::default()).unwrap();
        assert!(matches!(res.verdict, ContinuationVerdict::Cauchy | ContinuationVerdict::FloorReached));
        let b0 = crate::barriers::build_bracket(&p, &grid, 0.0, BracketMode::Eigen).unwrap();
        let (direct, _) = crate::truncated::solve_truncated(&p, &grid, 0.0, &b0, None, &Default::default()).unwrap();
        assert!(res.u.sup_diff(&direct) <= 1e-6, "{}", res.u.sup_diff(&direct));
        for (k, u) in res.u.values().iter().enumerate() {
            assert!(res.bracket.sub.values()[k] <= *u + 1e-12);
            assert!(*u <= res.bracket.sup.values()[k] + 1e-12);
        }
        let diffs: Vec<f64> = res.trace.iter().filter_map(|s| s.supdiff).collect();
        assert!(diffs.windows(2).all(|d| d[1] <= d[0]), "{diffs:?}");
    }

    #[test]
    fn continuation_without_gradient_term() {
        let p = Problem::from_exprs(3, "6", "0", DomainSpec::Ball { radius: 1.0 }).unwrap();
        let grid = Arc::new(Grid::Radial(RadialGrid::uniform(1.0, 65).unwrap()));
        let res = epsilon_continuation(&p, &grid, None, &ContinuationOptions::default()).unwrap();
        assert_eq!(res.verdict, ContinuationVerdict::Cauchy);
        assert!(res.trace.iter().filter_map(|s| s.supdiff).all(|d| d < 1e-12));
    }

    #[test]
    fn exhaust_small_source() {
        let p = Problem::from_exprs(5, "1e-6*(1+r)^(-4)", "1/(1+r^2) + 0.1", DomainSpec::WholeSpace).unwrap();
        let opts = ExhaustOptions {
            radii: geometric_radii(2.0, 3),
            nodes_per_unit: 16,
            tol_exhaust: 0.0,
            ..Default::default()
        };
        let sol = exhaust(&p, &opts).unwrap();
        assert_eq!(sol.balls.len(), 3);
        assert!((sol.barrier.k() - 1e-6 / 18.0).abs() < 1e-15);
        for b in &sol.balls {
            assert!(b.u.max() <= sol.barrier.k());
            assert!(b.barrier_margin >= 0.0);
        }
        assert!(decay_fit(&sol, 4.0, None).is_err());
    }

    #[test]
    fn exhaust_compact_support_settles() {
        let p = Problem::from_exprs(3, "max(0, 1 - r/2)", "1", DomainSpec::WholeSpace).unwrap();
        let opts = ExhaustOptions {
            radii: geometric_radii(2.0, 4),
            nodes_per_unit: 16,
            ..Default::default()
        };
        let sol = exhaust(&p, &opts).unwrap();
        let diffs: Vec<f64> = sol.trace.iter().filter_map(|s| s.supdiff).collect();
        assert!(diffs.windows(2).all(|d| d[1] < d[0]), "{diffs:?}");
        assert!(sol.min_barrier_margin() >= 0.0);
    }

    #[test]
    fn exhaust_rejects_bounded_problems() {
        let p = Problem::from_exprs(3, "1", "1", DomainSpec::Ball { radius: 1.0 }).unwrap();
        assert!(exhaust(&p, &ExhaustOptions::default()).is_err());
    }
}
