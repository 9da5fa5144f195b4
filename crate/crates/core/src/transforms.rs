//! Changes of variable between the blow-up problem `Δu = a h(u)` and the
//! singular gradient problem `-Δw + c*|∇w|²/w = a`.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{DiscreteField, Grid};
use crate::operator::build_laplacian;
use crate::problem::CoefficientField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformSpec {
    /// `h(u) = e^u`, `w = e^{-u}`.
    Exponential,
    /// `h(u) = u^δ` with δ > 1, `w = C u^{-1/C}`, `C = 1/(δ-1)`.
    Power { delta: f64 },
}

impl TransformSpec {
    pub fn power(delta: f64) -> Result<Self> {
        if !(delta > 1.0 && delta.is_finite()) {
            return Err(Error::Invalid(format!("power transform needs delta > 1, got {delta}")));
        }
        Ok(Self::Power { delta })
    }

    /// `C = 1/(δ-1)`; 1 for the exponential kind.
    pub fn big_c(&self) -> f64 {
        match self {
            Self::Exponential => 1.0,
            Self::Power { delta } => 1.0 / (delta - 1.0),
        }
    }

    /// Gradient coefficient of the transformed problem.
    pub fn c_star(&self) -> f64 {
        match self {
            Self::Exponential => 1.0,
            Self::Power { delta } => delta / (delta - 1.0),
        }
    }

    /// `h(u)`.
    pub fn h(&self, u: f64) -> f64 {
        match self {
            Self::Exponential => u.exp(),
            Self::Power { delta } => u.powf(*delta),
        }
    }
}

impl fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential => f.write_str("exponential"),
            Self::Power { delta } => write!(f, "power(delta = {delta})"),
        }
    }
}

fn require_positive(field: &DiscreteField, what: &str) -> Result<()> {
    match field.values().iter().position(|v| !(*v > 0.0)) {
        Some(k) => Err(Error::Invalid(format!(
            "{what} must be positive; node {k} holds {}",
            field.values()[k]
        ))),
        None => Ok(()),
    }
}

/// Blow-up variable `u` to gradient-problem variable `w`.
pub fn forward_map(spec: &TransformSpec, u: &DiscreteField) -> Result<DiscreteField> {
    match spec {
        TransformSpec::Exponential => DiscreteField::new(u.grid().clone(), u.values().iter().map(|v| (-v).exp()).collect()),
        TransformSpec::Power { .. } => {
            require_positive(u, "u")?;
            let c = spec.big_c();
            DiscreteField::new(u.grid().clone(), u.values().iter().map(|v| c * v.powf(-1.0 / c)).collect())
        }
    }
}

/// Inverse of [`forward_map`].
pub fn inverse_map(spec: &TransformSpec, w: &DiscreteField) -> Result<DiscreteField> {
    require_positive(w, "w")?;
    let values = match spec {
        TransformSpec::Exponential => w.values().iter().map(|v| -v.ln()).collect(),
        TransformSpec::Power { .. } => {
            let c = spec.big_c();
            w.values().iter().map(|v| (v / c).powf(-c)).collect()
        }
    };
    DiscreteField::new(w.grid().clone(), values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformResidual {
    /// `max |Δ_h u - a h(u)|` over the window.
    pub max_abs: f64,
    /// Same, divided by `max |a h(u)|` over the window.
    pub max_rel: f64,
    pub argmax: usize,
    /// Window nodes with their residuals.
    pub nodes: Vec<(usize, f64)>,
}

fn in_window(grid: &Grid, k: usize, fraction: f64) -> bool {
    if grid.is_boundary(k) {
        return false;
    }
    match grid {
        Grid::Radial(g) => grid.radius_of(k) <= (1.0 - fraction) * g.radius(),
        Grid::Interval(g) => {
            let x = g.nodes();
            let (lo, hi) = (x[0], x[x.len() - 1]);
            let margin = fraction * (hi - lo);
            x[k] >= lo + margin && x[k] <= hi - margin
        }
        Grid::Rect(g) => match g.mask_radius() {
            Some(r) => grid.radius_of(k) <= (1.0 - fraction) * r,
            None => {
                let (xs, ys) = (g.xs(), g.ys());
                let (x, y) = (xs[k % g.nx()], ys[k / g.nx()]);
                let mx = fraction * (xs[xs.len() - 1] - xs[0]);
                let my = fraction * (ys[ys.len() - 1] - ys[0]);
                x >= xs[0] + mx && x <= xs[xs.len() - 1] - mx && y >= ys[0] + my && y <= ys[ys.len() - 1] - my
            }
        },
    }
}

/// Maps `w` back to `u` and evaluates `Δ_h u - a h(u)` away from the
/// boundary, skipping nodes within `fraction` of the domain size of it.
pub fn verify_transform_residual(
    spec: &TransformSpec,
    a: &CoefficientField,
    w: &DiscreteField,
    dim: usize,
    fraction: f64,
) -> Result<TransformResidual> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Invalid("window fraction must lie in [0, 1)".into()));
    }
    let grid = w.grid();
    let mut interior = w.clone();
    for (k, v) in interior.values_mut().iter_mut().enumerate() {
        if grid.is_boundary(k) && !(*v > 0.0) {
            // the blow-up boundary itself never enters the window stencils
            *v = 1.0;
        }
    }
    let u = inverse_map(spec, &interior)?;
    let lu = build_laplacian(grid, dim)?.apply(u.values());
    let mut nodes = Vec::new();
    let (mut max_abs, mut scale, mut argmax) = (0.0f64, 0.0f64, 0);
    for k in (0..grid.len()).filter(|&k| in_window(grid, k, fraction)) {
        let ak = match grid.as_radial() {
            Some(_) => a.eval_radial(grid.radius_of(k))?,
            None => a.eval_at(&grid.coords(k))?,
        };
        let rhs = ak * spec.h(u.values()[k]);
        let res = -lu[k] - rhs;
        if res.abs() > max_abs {
            max_abs = res.abs();
            argmax = k;
        }
        scale = scale.max(rhs.abs());
        nodes.push((k, res));
    }
    if nodes.is_empty() {
        return Err(Error::Invalid("the residual window holds no nodes".into()));
    }
    Ok(TransformResidual {
        max_abs,
        max_rel: if scale > 0.0 { max_abs / scale } else { max_abs },
        argmax,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RadialGrid;
    use std::sync::Arc;

    fn radial(n: usize) -> Arc<Grid> {
        Arc::new(Grid::Radial(RadialGrid::uniform(1.0, n).unwrap()))
    }

    #[test]
    fn nodal_examples() {
        let g = radial(9);
        let u0 = DiscreteField::zeros(g.clone());
        let w = forward_map(&TransformSpec::Exponential, &u0).unwrap();
        assert!(w.values().iter().all(|&v| v == 1.0));

        let p2 = TransformSpec::power(2.0).unwrap();
        assert_eq!(p2.c_star(), 2.0);
        let four = DiscreteField::constant(g.clone(), 4.0);
        let w = forward_map(&p2, &four).unwrap();
        assert!(w.values().iter().all(|&v| v == 0.25));
        let back = inverse_map(&p2, &w).unwrap();
        assert!(back.values().iter().all(|&v| v == 4.0));

        let blow = DiscreteField::from_fn(g.clone(), |x| -(1.0 - x[0] * x[0]).ln()).unwrap_err();
        assert!(matches!(blow, Error::NonFinite { .. }));
        let u = DiscreteField::from_fn(g.clone(), |x| if x[0] < 1.0 { -(1.0 - x[0] * x[0]).ln() } else { 0.0 }).unwrap();
        let w = forward_map(&TransformSpec::Exponential, &u).unwrap();
        for k in 0..g.len() - 1 {
            let r = g.radius_of(k);
            assert!((w.values()[k] - (1.0 - r * r)).abs() < 1e-15);
        }
        assert!(forward_map(&p2, &DiscreteField::zeros(g.clone())).is_err());
        assert!(inverse_map(&TransformSpec::Exponential, &DiscreteField::zeros(g)).is_err());
        assert!(TransformSpec::power(1.0).is_err());
    }

    #[test]
    fn c_star_decreases_toward_one() {
        let cs: Vec<f64> = [1.5, 2.0, 3.0, 10.0]
            .iter()
            .map(|&d| TransformSpec::power(d).unwrap().c_star())
            .collect();
        assert_eq!(cs[0], 3.0);
        assert_eq!(cs[2], 1.5);
        assert!(cs.windows(2).all(|p| p[1] < p[0]) && cs[3] > 1.0);
    }

    #[test]
    fn exponential_residual_is_second_order() {
        let a = CoefficientField::parse("a", "6 + 4*r^2/(1 - r^2)").unwrap();
        let run = |n: usize| {
            let w = DiscreteField::from_fn(radial(n), |x| 1.0 - x[0] * x[0]).unwrap();
            verify_transform_residual(&TransformSpec::Exponential, &a, &w, 3, 0.05).unwrap().max_abs
        };
        let (e1, e2) = (run(801), run(1601));
        assert!((e1 / e2 - 4.0).abs() < 0.5, "{e1} {e2}");
    }

    #[test]
    fn wrong_delta_inflates_power_residual() {
        let a = CoefficientField::parse("a", "6 + 8*r^2/(1 - r^2)").unwrap();
        let w = DiscreteField::from_fn(radial(401), |x| 1.0 - x[0] * x[0]).unwrap();
        let good = verify_transform_residual(&TransformSpec::power(2.0).unwrap(), &a, &w, 3, 0.05).unwrap();
        let bad = verify_transform_residual(&TransformSpec::power(3.0).unwrap(), &a, &w, 3, 0.05).unwrap();
        assert!(bad.max_rel >= 10.0 * good.max_rel, "{} {}", good.max_rel, bad.max_rel);
    }

    #[test]
    fn constant_field_degenerate() {
        let a = CoefficientField::constant("a", 0.0);
        let w = DiscreteField::constant(radial(33), 0.5);
        let rep = verify_transform_residual(&TransformSpec::Exponential, &a, &w, 3, 0.05).unwrap();
        assert!(rep.max_abs < 1e-12);
    }
}
