//! Problem instances `-Δu + c(x) u⁻¹ |∇u|² = a(x)` and their hypotheses.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expr, Point};
use crate::grid::{DiscreteField, Grid, IntervalGrid, RadialGrid, RectGrid};
use crate::quadrature::{integrate_to_infinity, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Linear,
    MonotoneCubic,
}

/// Tabulated radial profile. Beyond the last knot the profile continues as
/// the power law through the last two knots (both must be positive).
#[derive(Debug, Clone, PartialEq)]
pub struct RadialTable {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    rule: Interpolation,
}

impl RadialTable {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, rule: Interpolation) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::Invalid(
                "radial table needs at least two knots and one value per knot".into(),
            ));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("table knots must be strictly increasing".into()));
        }
        if knots[0] < 0.0 || knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("table entries must be finite with r >= 0".into()));
        }
        let slopes = pchip_slopes(&knots, &values);
        Ok(Self {
            knots,
            values,
            slopes,
            rule,
        })
    }

    /// Reads whitespace-separated `r value` rows; `#` starts a comment.
    pub fn from_text(text: &str, rule: Interpolation) -> Result<Self> {
        let mut knots = Vec::new();
        let mut values = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|s| s.parse().ok()).ok_or(Error::ProblemFile {
                    line: k + 1,
                    msg: format!("expected `r value`, got `{line}`"),
                })
            };
            knots.push(parse(it.next())?);
            values.push(parse(it.next())?);
        }
        Self::new(knots, values, rule)
    }

    pub fn eval(&self, r: f64) -> f64 {
        let n = self.knots.len();
        if r <= self.knots[0] {
            return self.values[0];
        }
        if r >= self.knots[n - 1] {
            let (r0, r1) = (self.knots[n - 2], self.knots[n - 1]);
            let (v0, v1) = (self.values[n - 2], self.values[n - 1]);
            if r == r1 {
                return v1;
            }
            if v0 > 0.0 && v1 > 0.0 && r0 > 0.0 {
                let p = (v1 / v0).ln() / (r1 / r0).ln();
                return v1 * (r / r1).powf(p);
            }
            return f64::NAN;
        }
        let i = self.knots.partition_point(|&k| k <= r) - 1;
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let h = x1 - x0;
        let t = (r - x0) / h;
        match self.rule {
            Interpolation::Linear => y0 + t * (y1 - y0),
            Interpolation::MonotoneCubic => {
                let (d0, d1) = (self.slopes[i], self.slopes[i + 1]);
                let t2 = t * t;
                let t3 = t2 * t;
                (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                    + (t3 - 2.0 * t2 + t) * h * d0
                    + (-2.0 * t3 + 3.0 * t2) * y1
                    + (t3 - t2) * h * d1
            }
        }
    }
}

// Fritsch-Carlson slopes (as in PCHIP).
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Expression(Expr),
    Table(RadialTable),
}

/// A coefficient `a` or `c`, immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    name: String,
    kind: FieldKind,
}

impl CoefficientField {
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        Ok(Self {
            name: name.to_string(),
            kind: FieldKind::Expression(parse_expression(text)?),
        })
    }

    pub fn from_expr(name: &str, expr: Expr) -> Self {
        Self {
            name: name.to_string(),
            kind: FieldKind::Expression(expr),
        }
    }

    pub fn table(name: &str, table: RadialTable) -> Self {
        Self {
            name: name.to_string(),
            kind: FieldKind::Table(table),
        }
    }

    pub fn constant(name: &str, v: f64) -> Self {
        Self::from_expr(name, Expr::Num(v))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn is_radial(&self) -> bool {
        match &self.kind {
            FieldKind::Expression(e) => e.is_radial(),
            FieldKind::Table(_) => true,
        }
    }

    pub fn max_coord(&self) -> Option<usize> {
        match &self.kind {
            FieldKind::Expression(e) => e.max_coord(),
            FieldKind::Table(_) => None,
        }
    }

    fn raw(&self, p: Point<'_>) -> f64 {
        match &self.kind {
            FieldKind::Expression(e) => e.eval(p),
            FieldKind::Table(t) => t.eval(p.r),
        }
    }

    /// Evaluates at radius `r`; only valid for radially symmetric fields.
    pub fn eval_radial(&self, r: f64) -> Result<f64> {
        if !self.is_radial() {
            return Err(Error::Invalid(format!(
                "field `{}` is not radial; evaluate it at Cartesian points",
                self.name
            )));
        }
        self.finite(self.raw(Point::radial(r)), || format!("r = {r}"))
    }

    /// Evaluates at Cartesian coordinates `x`.
    pub fn eval_at(&self, x: &[f64]) -> Result<f64> {
        if let Some(k) = self.max_coord() {
            if k >= x.len() {
                return Err(Error::Invalid(format!(
                    "field `{}` references x{} but the point has {} coordinate(s)",
                    self.name,
                    k + 1,
                    x.len()
                )));
            }
        }
        self.finite(self.raw(Point::cartesian(x)), || format!("x = {x:?}"))
    }

    fn finite(&self, v: f64, loc: impl FnOnce() -> String) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                what: format!("field `{}`", self.name),
                location: loc(),
            })
        }
    }
}

impl fmt::Display for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FieldKind::Expression(e) => write!(f, "{e}"),
            FieldKind::Table(t) => write!(f, "<table, {} knots>", t.knots.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    Ball { radius: f64 },
    /// Axis-aligned box, one `(lo, hi)` pair per dimension (1 or 2).
    Rect { bounds: Vec<(f64, f64)> },
    WholeSpace,
}

impl DomainSpec {
    pub fn is_bounded(&self) -> bool {
        !matches!(self, DomainSpec::WholeSpace)
    }
}

impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainSpec::Ball { radius } => write!(f, "ball {radius}"),
            DomainSpec::Rect { bounds } => {
                write!(f, "rect")?;
                for (lo, hi) in bounds {
                    write!(f, " {lo}..{hi}")?;
                }
                Ok(())
            }
            DomainSpec::WholeSpace => write!(f, "wholespace"),
        }
    }
}

/// Sampling used for non-radial envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeSampling {
    pub points: usize,
    pub safety: f64,
}

impl Default for EnvelopeSampling {
    fn default() -> Self {
        Self {
            points: 128,
            safety: 1.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub dim: usize,
    pub a: CoefficientField,
    pub c: CoefficientField,
    pub domain: DomainSpec,
    /// Optional reference solution used only for error reporting.
    pub exact: Option<CoefficientField>,
    /// Hölder exponent of the coefficients; metadata only.
    pub holder_alpha: Option<f64>,
    pub envelope: EnvelopeSampling,
}

impl Problem {
    pub fn new(dim: usize, a: CoefficientField, c: CoefficientField, domain: DomainSpec) -> Result<Self> {
        let p = Self {
            dim,
            a,
            c,
            domain,
            exact: None,
            holder_alpha: None,
            envelope: EnvelopeSampling::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Convenience constructor from expression sources.
    pub fn from_exprs(dim: usize, a: &str, c: &str, domain: DomainSpec) -> Result<Self> {
        Self::new(
            dim,
            CoefficientField::parse("a", a)?,
            CoefficientField::parse("c", c)?,
            domain,
        )
    }

    pub fn with_exact(mut self, exact: &str) -> Result<Self> {
        self.exact = Some(CoefficientField::parse("exact", exact)?);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Invalid("dimension must be positive".into()));
        }
        match &self.domain {
            DomainSpec::WholeSpace if self.dim <= 2 => {
                return Err(Error::Invalid("whole-space mode requires dim > 2".into()))
            }
            DomainSpec::Ball { radius } if !(*radius > 0.0 && radius.is_finite()) => {
                return Err(Error::Invalid("ball radius must be positive".into()))
            }
            DomainSpec::Rect { bounds } => {
                if bounds.len() != self.dim || bounds.len() > 2 {
                    return Err(Error::Invalid(
                        "rect domains need one range per dimension (dim 1 or 2)".into(),
                    ));
                }
                if bounds.iter().any(|(lo, hi)| !(lo < hi)) {
                    return Err(Error::Invalid("rect ranges must satisfy lo < hi".into()));
                }
            }
            _ => {}
        }
        for f in [Some(&self.a), Some(&self.c), self.exact.as_ref()].into_iter().flatten() {
            if let Some(k) = f.max_coord() {
                if k >= self.dim {
                    return Err(Error::Invalid(format!(
                        "field `{}` references x{} but dim = {}",
                        f.name,
                        k + 1,
                        self.dim
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_radial(&self) -> bool {
        self.a.is_radial() && self.c.is_radial()
    }

    /// `max_{|x| = r} a(x)`: exact for radial `a`, otherwise the maximum over
    /// sampled sphere points inflated by the safety factor.
    pub fn phi_envelope(&self, r: f64) -> Result<f64> {
        if r < 0.0 {
            return Err(Error::Invalid("envelope radius must be nonnegative".into()));
        }
        if self.a.is_radial() {
            return self.a.eval_radial(r);
        }
        let mut best = f64::NEG_INFINITY;
        for dir in sphere_points(self.dim, self.envelope.points) {
            let x: Vec<f64> = dir.iter().map(|d| d * r).collect();
            best = best.max(self.a.eval_at(&x)?);
        }
        Ok(if best > 0.0 {
            best * self.envelope.safety
        } else {
            best
        })
    }

    /// Grid with `nodes` points per axis (radial for radial problems on balls).
    /// Whole-space problems have no grid of their own.
    pub fn default_grid(&self, nodes: usize) -> Result<Grid> {
        match &self.domain {
            DomainSpec::Ball { radius } if self.is_radial() => {
                Ok(Grid::Radial(RadialGrid::uniform(*radius, nodes)?))
            }
            DomainSpec::Ball { radius } if self.dim == 2 => {
                Ok(Grid::Rect(RectGrid::masked_disk(*radius, nodes)?))
            }
            DomainSpec::Ball { .. } => Err(Error::Invalid(
                "non-radial coefficients on a ball are supported in dim 2 only".into(),
            )),
            DomainSpec::Rect { bounds } if bounds.len() == 1 => {
                Ok(Grid::Interval(IntervalGrid::uniform(bounds[0].0, bounds[0].1, nodes)?))
            }
            DomainSpec::Rect { bounds } => Ok(Grid::Rect(RectGrid::uniform(bounds[0], bounds[1], nodes, nodes)?)),
            DomainSpec::WholeSpace => Err(Error::Invalid(
                "whole-space problems are solved on a sequence of balls".into(),
            )),
        }
    }

    /// Envelope as a plain closure; evaluation errors become NaN.
    pub fn envelope_fn(&self) -> impl Fn(f64) -> f64 + '_ {
        move |r| self.phi_envelope(r).unwrap_or(f64::NAN)
    }
}

/// Nodal values of `field` on `grid`.
pub fn sample_field(field: &CoefficientField, grid: &std::sync::Arc<Grid>) -> Result<DiscreteField> {
    let radial = grid.as_radial().is_some();
    DiscreteField::try_from_fn(grid.clone(), |x| {
        if radial {
            field.eval_radial(x[0])
        } else {
            field.eval_at(x)
        }
    })
}

/// Deterministic, roughly uniform unit vectors in `dim` dimensions.
pub fn sphere_points(dim: usize, m: usize) -> Vec<Vec<f64>> {
    let m = m.max(1);
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..m)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            // Fibonacci lattice.
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
                    let s = (1.0 - z * z).sqrt();
                    let t = golden * k as f64;
                    vec![s * t.cos(), s * t.sin(), z]
                })
                .collect()
        }
        _ => {
            // Axis directions plus Halton points pushed through a Box-Muller map.
            let mut out = Vec::with_capacity(m + 2 * dim);
            for i in 0..dim {
                for s in [1.0, -1.0] {
                    let mut v = vec![0.0; dim];
                    v[i] = s;
                    out.push(v);
                }
            }
            let primes = [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
            for k in 1..=m as u64 {
                let mut v: Vec<f64> = (0..dim)
                    .map(|i| {
                        let u1 = halton(k, primes[(2 * i) % primes.len()]).max(1e-12);
                        let u2 = halton(k, primes[(2 * i + 1) % primes.len()]);
                        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                    })
                    .collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                    out.push(v);
                }
            }
            out
        }
    }
}

fn halton(mut k: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while k > 0 {
        f /= base as f64;
        r += f * (k % base) as f64;
        k /= base;
    }
    r
}

// ---------------------------------------------------------------------------
// Hypothesis checking

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSampling {
    /// Radial sample count for positivity checks.
    pub radial_samples: usize,
    /// Positivity is sampled on `[0, positivity_radius]` in whole-space
    /// mode (beyond it decaying fields underflow to zero).
    pub positivity_radius: f64,
    /// The μ fit uses the decade ending here.
    pub far_radius: f64,
    /// The decade `[far_radius/10, far_radius]` is used for the μ fit.
    pub fit_points: usize,
    /// Largest RMS deviation of the log-log fit for μ to be reported.
    pub fit_residual_max: f64,
    pub quad_rel_tol: f64,
}

impl Default for CheckSampling {
    fn default() -> Self {
        Self {
            radial_samples: 400,
            positivity_radius: 100.0,
            far_radius: 1e4,
            fit_points: 64,
            fit_residual_max: 0.05,
            quad_rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityVerdict {
    pub pass: bool,
    pub worst_value: f64,
    pub worst_location: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegralVerdict {
    Finite { value: f64, abs_err: f64 },
    Divergent,
    Undetermined { value: f64, abs_err: f64 },
    /// Bounded domains do not need A3.
    NotApplicable,
}

impl IntegralVerdict {
    pub fn value(&self) -> Option<f64> {
        match self {
            IntegralVerdict::Finite { value, .. } => Some(*value),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuEstimate {
    Fitted {
        mu: f64,
        fit_rms: f64,
        admissible: bool,
    },
    /// φ decays faster than every power (or vanishes) in the fitting decade.
    SuperPolynomial,
    Unreliable {
        fit_rms: f64,
    },
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub a_positive: PositivityVerdict,
    pub c_positive: PositivityVerdict,
    pub a3_integral: IntegralVerdict,
    pub mu_estimate: MuEstimate,
    /// Smoothness cannot be checked; only evaluability and finiteness are.
    pub ac1_note: String,
}

impl AssumptionReport {
    pub fn ac2_pass(&self) -> bool {
        self.a_positive.pass && self.c_positive.pass
    }

    pub fn a3_pass(&self) -> bool {
        matches!(
            self.a3_integral,
            IntegralVerdict::Finite { .. } | IntegralVerdict::NotApplicable
        )
    }

    pub fn all_pass(&self) -> bool {
        self.ac2_pass() && self.a3_pass()
    }

    /// μ usable for the decay statement, if any.
    pub fn admissible_mu(&self, dim: usize) -> Option<f64> {
        match self.mu_estimate {
            MuEstimate::Fitted {
                mu,
                admissible: true,
                ..
            } => Some(mu),
            MuEstimate::SuperPolynomial => Some(0.5 * (2.0 + dim as f64)),
            _ => None,
        }
    }

    pub fn render(&self, dim: usize) -> String {
        let mut s = String::new();
        let pos = |p: &PositivityVerdict| {
            format!(
                "{} (min sampled {:.6e} at {:?})",
                if p.pass { "pass" } else { "FAIL" },
                p.worst_value,
                p.worst_location
            )
        };
        s += &format!("AC1 {}\n", self.ac1_note);
        s += &format!("AC2 a > 0: {}\n", pos(&self.a_positive));
        s += &format!("AC2 c > 0: {}\n", pos(&self.c_positive));
        s += &match self.a3_integral {
            IntegralVerdict::Finite { value, abs_err } => {
                format!("A3 int_0^inf r phi(r) dr = {value:.12e} (err {abs_err:.2e}): pass\n")
            }
            IntegralVerdict::Divergent => "A3 integral diverges: FAIL\n".to_string(),
            IntegralVerdict::Undetermined { value, abs_err } => format!(
                "A3 undetermined (partial {value:.6e}, err {abs_err:.2e}): FAIL\n"
            ),
            IntegralVerdict::NotApplicable => "A3 not applicable (bounded domain)\n".to_string(),
        };
        s += &match self.mu_estimate {
            MuEstimate::Fitted {
                mu,
                fit_rms,
                admissible,
            } => format!(
                "mu = {mu:.6} (fit rms {fit_rms:.2e}); mu in (2, {dim}): {}\n",
                if admissible { "yes" } else { "no" }
            ),
            MuEstimate::SuperPolynomial => {
                "mu: envelope decays faster than any power; every mu in (2, N) admissible\n"
                    .to_string()
            }
            MuEstimate::Unreliable { fit_rms } => {
                format!("mu: not reported (fit rms {fit_rms:.2e} above threshold)\n")
            }
            MuEstimate::NotApplicable => "mu: not applicable\n".to_string(),
        };
        s
    }
}

/// Least-squares line through `(x, y)`: returns (slope, intercept, rms).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

fn sample_positivity(
    problem: &Problem,
    field: &CoefficientField,
    sampling: &CheckSampling,
) -> Result<PositivityVerdict> {
    let mut worst = f64::INFINITY;
    let mut loc = Vec::new();
    let mut visit = |x: Vec<f64>, v: f64| {
        if v < worst {
            worst = v;
            loc = x;
        }
    };
    let n = sampling.radial_samples.max(2);
    match &problem.domain {
        DomainSpec::Rect { bounds } => {
            let m = if bounds.len() == 1 { n } else { (n as f64).sqrt().ceil() as usize + 1 };
            let axis = |(lo, hi): (f64, f64), k: usize| lo + (hi - lo) * k as f64 / (m - 1) as f64;
            if bounds.len() == 1 {
                for i in 0..m {
                    let x = vec![axis(bounds[0], i)];
                    let v = field.eval_at(&x)?;
                    visit(x, v);
                }
            } else {
                for i in 0..m {
                    for j in 0..m {
                        let x = vec![axis(bounds[0], i), axis(bounds[1], j)];
                        let v = field.eval_at(&x)?;
                        visit(x, v);
                    }
                }
            }
        }
        dom => {
            let radii: Vec<f64> = match dom {
                DomainSpec::Ball { radius } => {
                    (0..n).map(|k| radius * k as f64 / (n - 1) as f64).collect()
                }
                _ => {
                    // Linear near the origin, logarithmic further out.
                    let half = n / 2;
                    let mut v: Vec<f64> = (0..half).map(|k| k as f64 / half as f64).collect();
                    let lf = sampling.positivity_radius.max(1.0).ln();
                    v.extend((0..n - half).map(|k| (lf * k as f64 / (n - half - 1) as f64).exp()));
                    v
                }
            };
            for r in radii {
                if field.is_radial() {
                    let v = field.eval_radial(r)?;
                    visit(vec![r], v);
                } else {
                    for d in sphere_points(problem.dim, problem.envelope.points) {
                        let x: Vec<f64> = d.iter().map(|c| c * r).collect();
                        let v = field.eval_at(&x)?;
                        visit(x, v);
                    }
                }
            }
        }
    }
    Ok(PositivityVerdict {
        pass: worst > 0.0,
        worst_value: worst,
        worst_location: loc,
    })
}

/// Checks positivity of `a` and `c`, finiteness of `∫₀^∞ r φ(r) dr` and
/// estimates the far-field decay exponent μ of φ.
pub fn check_assumptions(problem: &Problem, sampling: &CheckSampling) -> Result<AssumptionReport> {
    problem.validate()?;
    let a_positive = sample_positivity(problem, &problem.a, sampling)?;
    let c_positive = sample_positivity(problem, &problem.c, sampling)?;
    let ac1_note = "not machine-checkable: only evaluability and finiteness verified".to_string();

    if problem.domain.is_bounded() {
        return Ok(AssumptionReport {
            a_positive,
            c_positive,
            a3_integral: IntegralVerdict::NotApplicable,
            mu_estimate: MuEstimate::NotApplicable,
            ac1_note,
        });
    }

    let mu_estimate = estimate_mu(problem, sampling)?;
    let phi = problem.envelope_fn();
    let quad = integrate_to_infinity(|r| r * phi(r), 0.0, QuadOptions::rel(sampling.quad_rel_tol));
    let power_divergent = matches!(mu_estimate, MuEstimate::Fitted { mu, .. } if mu <= 2.0);
    let a3_integral = match quad {
        Ok(q) if !power_divergent => IntegralVerdict::Finite {
            value: q.value,
            abs_err: q.abs_err,
        },
        _ if power_divergent => IntegralVerdict::Divergent,
        Ok(q) => IntegralVerdict::Undetermined {
            value: q.value,
            abs_err: q.abs_err,
        },
        Err(Error::Quadrature { value, abs_err }) => {
            if matches!(mu_estimate, MuEstimate::Unreliable { .. }) || !value.is_finite() {
                IntegralVerdict::Divergent
            } else {
                IntegralVerdict::Undetermined { value, abs_err }
            }
        }
        Err(e) => return Err(e),
    };
    Ok(AssumptionReport {
        a_positive,
        c_positive,
        a3_integral,
        mu_estimate,
        ac1_note,
    })
}

fn estimate_mu(problem: &Problem, sampling: &CheckSampling) -> Result<MuEstimate> {
    let hi = sampling.far_radius;
    let lo = hi / 10.0;
    let m = sampling.fit_points.max(4);
    let mut lx = Vec::with_capacity(m);
    let mut ly = Vec::with_capacity(m);
    let mut vanished = false;
    for k in 0..m {
        let r = lo * (hi / lo).powf(k as f64 / (m - 1) as f64);
        let v = problem.phi_envelope(r)?;
        if v <= 0.0 {
            vanished = true;
            break;
        }
        lx.push(r.ln());
        ly.push(v.ln());
    }
    if vanished {
        return Ok(MuEstimate::SuperPolynomial);
    }
    let (slope, _, rms) = linear_fit(&lx, &ly);
    if rms > sampling.fit_residual_max {
        // Steepening log-log profile: faster than any power.
        let half = m / 2;
        let (s1, _, _) = linear_fit(&lx[..half], &ly[..half]);
        let (s2, _, _) = linear_fit(&lx[half..], &ly[half..]);
        if s2 < s1 && slope < -(problem.dim as f64) {
            return Ok(MuEstimate::SuperPolynomial);
        }
        return Ok(MuEstimate::Unreliable { fit_rms: rms });
    }
    let mu = -slope;
    Ok(MuEstimate::Fitted {
        mu,
        fit_rms: rms,
        admissible: mu > 2.0 && mu < problem.dim as f64,
    })
}

// ---------------------------------------------------------------------------
// Problem files

/// Parses a problem file. `base` resolves relative `a_table`/`c_table` paths.
///
/// ```text
/// # comment
/// dim = 3
/// domain = ball 1            # or: rect 0..1 0..2 | wholespace
/// a = 6 + 4*r^2              # or: a_table = profile.txt
/// c = 1 - r^2
/// exact = 1 - r^2            # optional reference solution
/// interp = monotone_cubic    # or linear (tables only)
/// alpha = 0.5                # Hölder exponent, metadata only
/// envelope_points = 128
/// envelope_safety = 1.05
/// ```
pub fn parse_problem_file(text: &str, base: Option<&Path>) -> Result<Problem> {
    let mut dim = None;
    let mut domain = None;
    let mut a = None;
    let mut c = None;
    let mut exact = None;
    let mut alpha = None;
    let mut interp = Interpolation::MonotoneCubic;
    let mut envelope = EnvelopeSampling::default();
    let mut tables: Vec<(usize, &'static str, String)> = Vec::new();

    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let err = |msg: String| Error::ProblemFile { line: line_no, msg };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| err(format!("`{key}` expects a number, got `{v}`")))
        };
        let wrap = |e: Error| match e {
            Error::Syntax { pos, msg } => err(format!("column {}: {msg}", pos + 1)),
            other => err(other.to_string()),
        };
        match key {
            "dim" => {
                dim = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| err(format!("`dim` expects a positive integer, got `{value}`")))?,
                )
            }
            "domain" => domain = Some(parse_domain(value).map_err(err)?),
            "a" => a = Some(CoefficientField::parse("a", value).map_err(wrap)?),
            "c" => c = Some(CoefficientField::parse("c", value).map_err(wrap)?),
            "exact" => exact = Some(CoefficientField::parse("exact", value).map_err(wrap)?),
            "a_table" => tables.push((line_no, "a", value.to_string())),
            "c_table" => tables.push((line_no, "c", value.to_string())),
            "interp" => {
                interp = match value {
                    "linear" => Interpolation::Linear,
                    "monotone_cubic" | "pchip" => Interpolation::MonotoneCubic,
                    _ => return Err(err(format!("unknown interpolation `{value}`"))),
                }
            }
            "alpha" => alpha = Some(num(value)?),
            "envelope_points" => envelope.points = num(value)? as usize,
            "envelope_safety" => {
                let s = num(value)?;
                if s < 1.0 {
                    return Err(err("envelope_safety must be >= 1".into()));
                }
                envelope.safety = s;
            }
            _ => return Err(err(format!("unknown key `{key}`"))),
        }
    }

    for (line, which, path) in tables {
        let full = match base {
            Some(b) => b.join(&path),
            None => path.clone().into(),
        };
        let text = std::fs::read_to_string(&full).map_err(|e| Error::ProblemFile {
            line,
            msg: format!("cannot read table {}: {e}", full.display()),
        })?;
        let table = RadialTable::from_text(&text, interp).map_err(|e| Error::ProblemFile {
            line,
            msg: e.to_string(),
        })?;
        let field = CoefficientField::table(which, table);
        if which == "a" {
            a = Some(field);
        } else {
            c = Some(field);
        }
    }

    let missing = |what: &str| Error::ProblemFile {
        line: 0,
        msg: format!("missing `{what}`"),
    };
    let mut p = Problem {
        dim: dim.ok_or_else(|| missing("dim"))?,
        a: a.ok_or_else(|| missing("a"))?,
        c: c.ok_or_else(|| missing("c"))?,
        domain: domain.ok_or_else(|| missing("domain"))?,
        exact,
        holder_alpha: alpha,
        envelope,
    };
    p.validate().map_err(|e| Error::ProblemFile {
        line: 0,
        msg: e.to_string(),
    })?;
    p.envelope.points = p.envelope.points.max(1);
    Ok(p)
}

fn parse_domain(value: &str) -> std::result::Result<DomainSpec, String> {
    let mut it = value.split_whitespace();
    match it.next() {
        Some("ball") => {
            let r: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or("`ball` expects a radius")?;
            Ok(DomainSpec::Ball { radius: r })
        }
        Some("rect") => {
            let bounds = it
                .map(|s| {
                    let (lo, hi) = s.split_once("..").ok_or(format!("bad range `{s}`"))?;
                    let lo: f64 = lo.parse().map_err(|_| format!("bad range `{s}`"))?;
                    let hi: f64 = hi.parse().map_err(|_| format!("bad range `{s}`"))?;
                    Ok((lo, hi))
                })
                .collect::<std::result::Result<Vec<_>, String>>()?;
            if bounds.is_empty() {
                return Err("`rect` expects ranges like 0..1".into());
            }
            Ok(DomainSpec::Rect { bounds })
        }
        Some("wholespace") => Ok(DomainSpec::WholeSpace),
        _ => Err(format!("unknown domain `{value}`")),
    }
}

/// Renders a problem in the file format (tables are not re-emitted).
pub fn render_problem(p: &Problem) -> String {
    let mut s = format!("dim = {}\ndomain = {}\na = {}\nc = {}\n", p.dim, p.domain, p.a, p.c);
    if let Some(e) = &p.exact {
        s += &format!("exact = {e}\n");
    }
    s
}
