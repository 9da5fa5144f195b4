//! Grids and nodal fields, plus the `selpde-field v1` text format.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Radial nodes `0 = r_0 < r_1 < … < r_{n-1} = R`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
}

impl RadialGrid {
    pub fn uniform(radius: f64, n: usize) -> Result<Self> {
        check_count(n)?;
        let h = radius / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        nodes[n - 1] = radius;
        Self::from_nodes(nodes)
    }

    /// Nodes clustered toward both `r = 0` and `r = R`.
    ///
    /// `strength` in `[0, 1)`; the spacing at the ends shrinks by the factor
    /// `1 - strength` relative to the uniform spacing.
    pub fn graded(radius: f64, n: usize, strength: f64) -> Result<Self> {
        check_count(n)?;
        if !(0.0..1.0).contains(&strength) {
            return Err(Error::Invalid("grading strength must lie in [0, 1)".into()));
        }
        let tau = 2.0 * std::f64::consts::PI;
        let mut nodes: Vec<f64> = (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                radius * (s - strength * (tau * s).sin() / tau)
            })
            .collect();
        nodes[0] = 0.0;
        nodes[n - 1] = radius;
        Self::from_nodes(nodes)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        check_count(nodes.len())?;
        if nodes[0] != 0.0 {
            return Err(Error::Invalid("radial grids start at r = 0".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || !nodes.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("grid nodes must be finite and strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn radius(&self) -> f64 {
        *self.nodes.last().expect("non-empty")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Interval `[lo, hi]` with Dirichlet data at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalGrid {
    nodes: Vec<f64>,
}

impl IntervalGrid {
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        check_count(n)?;
        if !(lo < hi) {
            return Err(Error::Invalid("interval needs lo < hi".into()));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
        nodes[n - 1] = hi;
        Ok(Self { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        check_count(nodes.len())?;
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("grid nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

/// Tensor grid on a rectangle, node `(i, j)` stored at `j * nx + i`.
///
/// With a mask, only nodes flagged `true` are unknowns; all others carry
/// Dirichlet data (used to embed a disk in the rectangle).
#[derive(Debug, Clone, PartialEq)]
pub struct RectGrid {
    xs: Vec<f64>,
    ys: Vec<f64>,
    mask: Option<Vec<bool>>,
    mask_radius: Option<f64>,
}

impl RectGrid {
    pub fn uniform(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        let xs = IntervalGrid::uniform(x.0, x.1, nx)?.nodes;
        let ys = IntervalGrid::uniform(y.0, y.1, ny)?.nodes;
        Ok(Self {
            xs,
            ys,
            mask: None,
            mask_radius: None,
        })
    }

    /// Square `[-R, R]²` with the disk `|x| < R` as the active region.
    pub fn masked_disk(radius: f64, n: usize) -> Result<Self> {
        let mut g = Self::uniform((-radius, radius), (-radius, radius), n, n)?;
        let mut mask = vec![false; n * n];
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let (x, y) = (g.xs[i], g.ys[j]);
                mask[j * n + i] = (x * x + y * y).sqrt() < radius * (1.0 - 1e-12);
            }
        }
        g.mask = Some(mask);
        g.mask_radius = Some(radius);
        Ok(g)
    }

    pub fn from_axes(xs: Vec<f64>, ys: Vec<f64>, mask_radius: Option<f64>) -> Result<Self> {
        check_count(xs.len())?;
        check_count(ys.len())?;
        let mut g = Self {
            xs,
            ys,
            mask: None,
            mask_radius: None,
        };
        if let Some(r) = mask_radius {
            let (nx, ny) = (g.xs.len(), g.ys.len());
            let mut mask = vec![false; nx * ny];
            for j in 1..ny - 1 {
                for i in 1..nx - 1 {
                    let (x, y) = (g.xs[i], g.ys[j]);
                    mask[j * nx + i] = (x * x + y * y).sqrt() < r * (1.0 - 1e-12);
                }
            }
            g.mask = Some(mask);
            g.mask_radius = Some(r);
        }
        Ok(g)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn ny(&self) -> usize {
        self.ys.len()
    }

    pub fn mask_radius(&self) -> Option<f64> {
        self.mask_radius
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.xs.len() + i
    }

    fn is_active(&self, i: usize, j: usize) -> bool {
        match &self.mask {
            Some(m) => m[self.index(i, j)],
            None => i > 0 && j > 0 && i + 1 < self.nx() && j + 1 < self.ny(),
        }
    }
}

fn check_count(n: usize) -> Result<()> {
    if n < 3 {
        Err(Error::Invalid("grids need at least 3 nodes per axis".into()))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Radial(RadialGrid),
    Interval(IntervalGrid),
    Rect(RectGrid),
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Radial(g) => g.nodes.len(),
            Grid::Interval(g) => g.nodes.len(),
            Grid::Rect(g) => g.nx() * g.ny(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nodes carrying Dirichlet data.
    pub fn is_boundary(&self, k: usize) -> bool {
        match self {
            Grid::Radial(g) => k + 1 == g.nodes.len(),
            Grid::Interval(g) => k == 0 || k + 1 == g.nodes.len(),
            Grid::Rect(g) => {
                let (i, j) = (k % g.nx(), k / g.nx());
                !g.is_active(i, j)
            }
        }
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|k| self.is_boundary(k)).collect()
    }

    /// Cartesian coordinates of node `k` (radial grids: the radius).
    pub fn coords(&self, k: usize) -> Vec<f64> {
        match self {
            Grid::Radial(g) => vec![g.nodes[k]],
            Grid::Interval(g) => vec![g.nodes[k]],
            Grid::Rect(g) => vec![g.xs[k % g.nx()], g.ys[k / g.nx()]],
        }
    }

    /// Distance from the origin of node `k`.
    pub fn radius_of(&self, k: usize) -> f64 {
        match self {
            Grid::Radial(g) => g.nodes[k],
            Grid::Interval(g) => g.nodes[k].abs(),
            Grid::Rect(g) => g.xs[k % g.nx()].hypot(g.ys[k / g.nx()]),
        }
    }

    /// Largest grid spacing.
    pub fn spacing(&self) -> f64 {
        let max_gap = |v: &[f64]| v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        match self {
            Grid::Radial(g) => max_gap(&g.nodes),
            Grid::Interval(g) => max_gap(&g.nodes),
            Grid::Rect(g) => max_gap(&g.xs).max(max_gap(&g.ys)),
        }
    }

    pub fn as_radial(&self) -> Option<&RadialGrid> {
        match self {
            Grid::Radial(g) => Some(g),
            _ => None,
        }
    }
}

/// Nodal values on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "field value".into(),
                location: format!("node {k}"),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<Grid>, v: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![v; n],
        }
    }

    /// Samples `f(coords)` at every node.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(&grid.coords(k))).collect();
        Self::new(grid, values)
    }

    /// Samples a fallible `f(coords)` at every node.
    pub fn try_from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> Result<f64>) -> Result<Self> {
        let values = (0..grid.len())
            .map(|k| f(&grid.coords(k)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `max_k |self_k - other_k|`.
    pub fn sup_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Linear interpolation of a radial field at radius `r`; zero outside.
    pub fn radial_value(&self, r: f64) -> f64 {
        let Grid::Radial(g) = self.grid.as_ref() else {
            return f64::NAN;
        };
        let nodes = g.nodes();
        if r >= g.radius() {
            return if r == g.radius() { self.values[nodes.len() - 1] } else { 0.0 };
        }
        let i = nodes.partition_point(|&x| x <= r).saturating_sub(1);
        let t = (r - nodes[i]) / (nodes[i + 1] - nodes[i]);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }
}

// ---------------------------------------------------------------------------
// selpde-field v1

pub const FIELD_HEADER: &str = "# selpde-field v1";

pub(crate) fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes a field; values use 17 significant digits.
pub fn write_field(field: &DiscreteField, dim: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{FIELD_HEADER}");
    let _ = writeln!(s, "dim={dim}");
    match field.grid.as_ref() {
        Grid::Radial(g) => {
            let _ = writeln!(s, "grid=radial");
            let _ = writeln!(s, "R={}", num(g.radius()));
            let _ = writeln!(s, "nodes={}", g.len());
            for (r, v) in g.nodes().iter().zip(field.values()) {
                let _ = writeln!(s, "{} {}", num(*r), num(*v));
            }
        }
        Grid::Interval(g) => {
            let n = g.nodes();
            let _ = writeln!(s, "grid=interval");
            let _ = writeln!(s, "bounds={}..{}", num(n[0]), num(n[n.len() - 1]));
            let _ = writeln!(s, "nodes={}", n.len());
            for (x, v) in n.iter().zip(field.values()) {
                let _ = writeln!(s, "{} {}", num(*x), num(*v));
            }
        }
        Grid::Rect(g) => {
            let _ = writeln!(s, "grid=rect2d");
            let _ = writeln!(
                s,
                "bounds={}..{} {}..{}",
                num(g.xs[0]),
                num(g.xs[g.nx() - 1]),
                num(g.ys[0]),
                num(g.ys[g.ny() - 1])
            );
            if let Some(r) = g.mask_radius {
                let _ = writeln!(s, "mask=disk {}", num(r));
            }
            let _ = writeln!(s, "nodes={} {}", g.nx(), g.ny());
            for k in 0..g.nx() * g.ny() {
                let _ = writeln!(
                    s,
                    "{} {} {}",
                    num(g.xs[k % g.nx()]),
                    num(g.ys[k / g.nx()]),
                    num(field.values[k])
                );
            }
        }
    }
    s
}

/// Parses a `selpde-field v1` document; returns the field and its `dim`.
pub fn read_field(text: &str) -> Result<(DiscreteField, usize)> {
    let err = |line: usize, msg: &str| Error::FieldFile {
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate().peekable();
    match lines.next() {
        Some((_, l)) if l.trim() == FIELD_HEADER => {}
        _ => return Err(err(1, "missing `# selpde-field v1` header")),
    }
    let mut dim = None;
    let mut kind = None;
    let mut mask = None;
    let mut counts: Vec<usize> = Vec::new();
    while let Some((k, l)) = lines.peek().copied() {
        let Some((key, value)) = l.split_once('=') else { break };
        lines.next();
        match key.trim() {
            "dim" => dim = value.trim().parse::<usize>().ok(),
            "grid" => kind = Some(value.trim().to_string()),
            "R" | "bounds" => {}
            "mask" => {
                let r = value
                    .trim()
                    .strip_prefix("disk")
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| err(k + 1, "bad mask"))?;
                mask = Some(r);
            }
            "nodes" => {
                counts = value
                    .split_whitespace()
                    .map(|v| v.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err(k + 1, "bad node count"))?
            }
            other => return Err(err(k + 1, &format!("unknown header key `{other}`"))),
        }
    }
    let dim = dim.ok_or_else(|| err(0, "missing dim"))?;
    let kind = kind.ok_or_else(|| err(0, "missing grid"))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, l) in lines {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let row = l
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| err(k + 1, "bad numeric row"))?;
        rows.push(row);
    }
    let total: usize = counts.iter().product();
    if counts.is_empty() || rows.len() != total {
        return Err(err(0, &format!("expected {total} rows, found {}", rows.len())));
    }
    let width = if kind == "rect2d" { 3 } else { 2 };
    if rows.iter().any(|r| r.len() != width) {
        return Err(err(0, &format!("rows must have {width} columns")));
    }
    let values: Vec<f64> = rows.iter().map(|r| r[width - 1]).collect();
    let grid = match kind.as_str() {
        "radial" => Grid::Radial(RadialGrid::from_nodes(rows.iter().map(|r| r[0]).collect())?),
        "interval" => Grid::Interval(IntervalGrid::from_nodes(rows.iter().map(|r| r[0]).collect())?),
        "rect2d" => {
            if counts.len() != 2 {
                return Err(err(0, "rect2d needs `nodes=nx ny`"));
            }
            let (nx, ny) = (counts[0], counts[1]);
            let xs = rows[..nx].iter().map(|r| r[0]).collect();
            let ys = (0..ny).map(|j| rows[j * nx][1]).collect();
            Grid::Rect(RectGrid::from_axes(xs, ys, mask)?)
        }
        other => return Err(err(0, &format!("unknown grid kind `{other}`"))),
    };
    Ok((DiscreteField::new(Arc::new(grid), values)?, dim))
}
