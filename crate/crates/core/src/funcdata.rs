//! Curves on a shared uniform grid, trapezoid quadrature, the two semi-metrics,
//! and the kernel / scaling-profile menus used by the estimator.
//!
//! Every curve carries its [`Grid`]; binary operations refuse curves whose
//! grids differ.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::numeric;

/// Uniform grid `t_min = t_0 < t_1 < ... < t_{points-1} = t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    t_min: f64,
    t_max: f64,
    points: usize,
}

impl Grid {
    pub fn new(t_min: f64, t_max: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {points}")));
        }
        if !(t_min.is_finite() && t_max.is_finite() && t_min < t_max) {
            return Err(Error::InvalidGrid(format!("bad interval [{t_min}, {t_max}]")));
        }
        Ok(Self { t_min, t_max, points })
    }

    /// Grid on [0, 1].
    pub fn unit(points: usize) -> Result<Self> {
        Self::new(0.0, 1.0, points)
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        (self.t_max - self.t_min) / (self.points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.t_max
        } else {
            self.t_min + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(|i| self.node(i))
    }

    /// Trapezoid weights `(Δ/2, Δ, ..., Δ, Δ/2)`.
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        let dt = self.spacing();
        if i == 0 || i + 1 == self.points {
            0.5 * dt
        } else {
            dt
        }
    }
}

/// Trapezoid rule for nodal `values` on `grid`. Exact for affine integrands.
pub fn quadrature(values: &[f64], grid: &Grid) -> Result<f64> {
    if values.len() != grid.points() {
        return Err(Error::LengthMismatch { expected: grid.points(), got: values.len() });
    }
    let n = values.len();
    let interior: f64 = values[1..n - 1].iter().sum();
    Ok(grid.spacing() * (interior + 0.5 * (values[0] + values[n - 1])))
}

/// A real function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    grid: Grid,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.points() {
            return Err(Error::LengthMismatch { expected: grid.points(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn constant(grid: Grid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.points()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `∫ x(t) dt` by the trapezoid rule.
    pub fn integral(&self) -> f64 {
        quadrature(&self.values, &self.grid).expect("curve length matches its grid")
    }

    /// Nodewise `a·x + b·y`.
    pub fn combine(a: f64, x: &Curve, b: f64, y: &Curve) -> Result<Curve> {
        if x.grid != y.grid {
            return Err(Error::GridMismatch);
        }
        let values = x.values.iter().zip(&y.values).map(|(u, v)| a * u + b * v).collect();
        Curve::new(x.grid, values)
    }

    /// Piecewise-linear interpolant; `None` outside `[t_min, t_max]`.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let g = &self.grid;
        if !(t >= g.t_min() && t <= g.t_max()) {
            return None;
        }
        let pos = (t - g.t_min()) / g.spacing();
        let i = (pos.floor() as usize).min(g.points() - 2);
        let frac = pos - i as f64;
        Some(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac)
    }

    /// Largest nodal slope `|x_{i+1} - x_i| / Δ`.
    pub fn lipschitz_estimate(&self) -> f64 {
        let dt = self.grid.spacing();
        self.values.windows(2).map(|w| (w[1] - w[0]).abs() / dt).fold(0.0, f64::max)
    }

    /// Smallest interval `[a, b]` of nodes outside of which the curve is zero.
    pub fn support(&self) -> Option<(f64, f64)> {
        let first = self.values.iter().position(|v| *v != 0.0)?;
        let last = self.values.iter().rposition(|v| *v != 0.0)?;
        Some((self.grid.node(first), self.grid.node(last)))
    }

    /// Reads a `t,value` CSV. The grid is inferred from the `t` column and
    /// must be uniform to a relative spacing deviation below `1e-9`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Curve> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
            return precondition(format!(
                "expected header `t,value`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ));
        }
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        for row in rdr.deserialize() {
            let (t, v): (f64, f64) = row?;
            ts.push(t);
            vs.push(v);
        }
        if ts.len() < 2 {
            return Err(Error::InvalidGrid("fewer than two rows".into()));
        }
        let grid = Grid::new(ts[0], ts[ts.len() - 1], ts.len())?;
        let dt = grid.spacing();
        for (i, w) in ts.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() / dt >= 1e-9 {
                return Err(Error::InvalidGrid(format!("non-uniform spacing at row {}", i + 1)));
            }
        }
        Curve::new(grid, vs)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Curve> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "value"])?;
        for (t, v) in self.grid.nodes().zip(&self.values) {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_csv_writer(std::fs::File::create(path)?)
    }
}

/// Semi-metric on curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SemiMetric {
    /// `|∫ (x - y)|`
    IntegralDiff,
    /// `(∫ |x - y|^p)^{1/p}`, `p ≥ 1`
    Lp { p: f64 },
}

/// `d(x, y)` under `metric`, integrals by the trapezoid rule.
pub fn distance(x: &Curve, y: &Curve, metric: SemiMetric) -> Result<f64> {
    if x.grid != y.grid {
        return Err(Error::GridMismatch);
    }
    let grid = &x.grid;
    match metric {
        SemiMetric::IntegralDiff => {
            let diff: Vec<f64> = x.values.iter().zip(&y.values).map(|(a, b)| a - b).collect();
            Ok(quadrature(&diff, grid)?.abs())
        }
        SemiMetric::Lp { p } => {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(Error::Domain { value: p, domain: "[1, inf)".into() });
            }
            let pow: Vec<f64> = x.values.iter().zip(&y.values).map(|(a, b)| (a - b).abs().powf(p)).collect();
            Ok(quadrature(&pow, grid)?.powf(1.0 / p))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    /// `K ≡ 1`
    Uniform,
    /// `K(u) = e^{-u}`
    ExpDecay,
    /// `K(u) = 2 - u`
    AffineDecreasing,
}

/// Kernel on [0, 1]: a shape times a positive scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub shape: KernelShape,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Kernel {
    pub const fn new(shape: KernelShape) -> Self {
        Self { shape, scale: 1.0 }
    }

    pub const fn uniform() -> Self {
        Self::new(KernelShape::Uniform)
    }

    pub const fn exp_decay() -> Self {
        Self::new(KernelShape::ExpDecay)
    }

    pub const fn affine_decreasing() -> Self {
        Self::new(KernelShape::AffineDecreasing)
    }

    /// `c·K`, `c > 0`.
    pub fn scaled(self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain { value: c, domain: "(0, inf)".into() });
        }
        Ok(Self { shape: self.shape, scale: self.scale * c })
    }

    pub fn is_uniform(&self) -> bool {
        self.shape == KernelShape::Uniform
    }

    /// `(K(u), K'(u))` for `u ∈ [0, 1]`.
    pub fn eval(&self, u: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain { value: u, domain: "[0, 1]".into() });
        }
        Ok((self.value(u), self.derivative(u)))
    }

    /// `K(u)` without the domain check.
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        self.scale
            * match self.shape {
                KernelShape::Uniform => 1.0,
                KernelShape::ExpDecay => (-u).exp(),
                KernelShape::AffineDecreasing => 2.0 - u,
            }
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        self.scale
            * match self.shape {
                KernelShape::Uniform => 0.0,
                KernelShape::ExpDecay => -(-u).exp(),
                KernelShape::AffineDecreasing => -1.0,
            }
    }

    pub fn at_one(&self) -> f64 {
        self.value(1.0)
    }

    /// `K₀ = inf_{[0,1]} K`.
    pub fn lower_bound(&self) -> f64 {
        // every shape is nonincreasing
        self.value(1.0)
    }

    /// Lipschitz constant on [0, 1].
    pub fn lipschitz(&self) -> f64 {
        self.scale
            * match self.shape {
                KernelShape::Uniform => 0.0,
                KernelShape::ExpDecay | KernelShape::AffineDecreasing => 1.0,
            }
    }
}

/// Limit profile `τ₀(u) = lim φ(hu)/φ(h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tau0 {
    Identity,
    PowerLaw { alpha: f64 },
}

impl Tau0 {
    pub fn power_law(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain { value: alpha, domain: "(0, inf)".into() });
        }
        Ok(Tau0::PowerLaw { alpha })
    }

    pub fn value(&self, u: f64) -> f64 {
        match *self {
            Tau0::Identity => u,
            Tau0::PowerLaw { alpha } => u.powf(alpha),
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            Tau0::Identity => 1.0,
            Tau0::PowerLaw { alpha } => alpha * u.powf(alpha - 1.0),
        }
    }

    fn inverse(&self, s: f64) -> f64 {
        match *self {
            Tau0::Identity => s,
            Tau0::PowerLaw { alpha } => s.powf(1.0 / alpha),
        }
    }

    /// `∫₀¹ τ₀'(u) f(u) du`, computed as `∫₀¹ f(τ₀⁻¹(s)) ds` so that an
    /// unbounded `τ₀'` at the origin costs nothing.
    /// Power profiles use a rule graded toward the origin, where `τ₀⁻¹` is not smooth.
    pub fn integrate_dtau(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.base_rule().iter().map(|&(s, w)| w * f(self.inverse(s))).sum()
    }

    /// Nodes `u_k` and weights of the rule behind [`integrate_dtau`](Self::integrate_dtau).
    pub fn dtau_rule(&self) -> Vec<(f64, f64)> {
        self.base_rule().iter().map(|&(s, w)| (self.inverse(s), w)).collect()
    }

    /// Quadrature rule in `u` suited to integrands carrying a factor `τ₀(u)`.
    pub fn base_rule(&self) -> &'static [(f64, f64)] {
        match self {
            Tau0::Identity => numeric::unit_rule(),
            Tau0::PowerLaw { .. } => numeric::graded_unit_rule(),
        }
    }
}
