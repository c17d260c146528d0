use crate::error::{Error, Result};
use crate::estimator::IndexFunction;
use crate::funcdata::Grid;

/// Minimum node count for v-integrals.
pub const MIN_WEIGHT_NODES: usize = 2001;

/// Relative size of the truncation tails against the peak.
const TAIL_RATIO: f64 = 1e-12;

/// The weight `w(v) = f_v(x) g(v)` on a truncated v-grid, stored as `ln w`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDensity {
    grid: Grid,
    log_w: Vec<f64>,
    mass: f64,
}

impl WeightDensity {
    /// Tabulates `ln w` on `[v_lo, v_hi]` and checks that both tails are negligible.
    pub fn from_log_fn(v_lo: f64, v_hi: f64, points: usize, log_w: impl Fn(f64) -> f64) -> Result<Self> {
        Self::build(v_lo, v_hi, points, log_w, true)
    }

    /// As [`from_log_fn`](Self::from_log_fn) for a density supported on
    /// `[v_lo, v_hi]`, where the ends need not be small.
    pub fn from_log_fn_compact(v_lo: f64, v_hi: f64, points: usize, log_w: impl Fn(f64) -> f64) -> Result<Self> {
        Self::build(v_lo, v_hi, points, log_w, false)
    }

    /// From nonnegative nodal values.
    pub fn from_values(grid: Grid, w: &[f64]) -> Result<Self> {
        if w.len() != grid.points() {
            return Err(Error::LengthMismatch { expected: grid.points(), got: w.len() });
        }
        if let Some(i) = w.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::NonFinite(i));
        }
        Self::finish(grid, w.iter().map(|x| x.ln()).collect(), true)
    }

    /// `scale · N(mean, sd²)` density on `mean ± half_width·sd`.
    pub fn gaussian(mean: f64, sd: f64, scale: f64, half_width: f64, points: usize) -> Result<Self> {
        if !(sd > 0.0 && scale > 0.0 && half_width > 0.0) {
            return Err(Error::Precondition("gaussian weight needs positive sd, scale and width".into()));
        }
        let log_norm = scale.ln() - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        Self::from_log_fn(mean - half_width * sd, mean + half_width * sd, points, |v| {
            let z = (v - mean) / sd;
            log_norm - 0.5 * z * z
        })
    }

    /// Standard normal density on `[-64, 64]` with 8001 nodes: wide enough
    /// that the tilt `e^{tv}` stays resolved for `|t| ≤ 50`.
    pub fn standard_normal() -> Self {
        Self::gaussian(0.0, 1.0, 1.0, 64.0, 8001).expect("valid standard normal weight")
    }

    fn build(v_lo: f64, v_hi: f64, points: usize, log_w: impl Fn(f64) -> f64, tails: bool) -> Result<Self> {
        let grid = Grid::new(v_lo, v_hi, points)?;
        let log_w: Vec<f64> = grid.nodes().map(log_w).collect();
        Self::finish(grid, log_w, tails)
    }

    fn finish(grid: Grid, log_w: Vec<f64>, tails: bool) -> Result<Self> {
        if grid.points() < MIN_WEIGHT_NODES {
            return Err(Error::InvalidGrid(format!(
                "weight grid needs at least {MIN_WEIGHT_NODES} nodes, got {}",
                grid.points()
            )));
        }
        if let Some(i) = log_w.iter().position(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::NonFinite(i));
        }
        let peak = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if peak == f64::NEG_INFINITY {
            return Err(Error::Precondition("weight vanishes identically".into()));
        }
        if tails {
            let limit = peak + TAIL_RATIO.ln();
            let (first, last) = (log_w[0], log_w[log_w.len() - 1]);
            if first >= limit || last >= limit {
                return Err(Error::InvalidGrid(format!(
                    "truncation tails too heavy: w(v_lo)/max = {:.3e}, w(v_hi)/max = {:.3e}",
                    (first - peak).exp(),
                    (last - peak).exp()
                )));
            }
        }
        let scaled: Vec<f64> = log_w.iter().map(|x| (x - peak).exp()).collect();
        let mass = crate::funcdata::quadrature(&scaled, &grid)? * peak.exp();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Numeric(format!("weight mass {mass} is not positive and finite")));
        }
        Ok(Self { grid, log_w, mass })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_w
    }

    /// `M = ∫ w`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Push-forward of `w dv` through `l` as `(level, ln mass)` atoms.
    ///
    /// Indicators collapse to at most two atoms whose masses integrate the
    /// linear interpolant of `w` exactly over the pieces cut by the set ends.
    pub(crate) fn atoms(&self, l: &IndexFunction) -> Vec<Atom> {
        match l {
            IndexFunction::Indicator(set) => self.indicator_atoms(|v| set.contains(v), &set.breakpoints()),
            _ => (0..self.grid.points())
                .filter(|&i| self.log_w[i] > f64::NEG_INFINITY)
                .map(|i| Atom {
                    level: l.eval(self.grid.node(i)),
                    log_mass: self.log_w[i] + self.grid.trapezoid_weight(i).ln(),
                })
                .collect(),
        }
    }

    fn indicator_atoms(&self, inside: impl Fn(f64) -> bool, breaks: &[f64]) -> Vec<Atom> {
        let peak = self.log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_w.iter().map(|x| (x - peak).exp()).collect();
        let (mut on, mut off) = (0.0, 0.0);
        for i in 0..w.len() - 1 {
            let (a, b) = (self.grid.node(i), self.grid.node(i + 1));
            let lerp = |v: f64| w[i] + (w[i + 1] - w[i]) * (v - a) / (b - a);
            let mut cuts = vec![a];
            cuts.extend(breaks.iter().copied().filter(|&c| c > a && c < b));
            cuts.push(b);
            for seg in cuts.windows(2) {
                let (p, q) = (seg[0], seg[1]);
                let piece = 0.5 * (q - p) * (lerp(p) + lerp(q));
                if inside(0.5 * (p + q)) {
                    on += piece;
                } else {
                    off += piece;
                }
            }
        }
        [(1.0, on), (0.0, off)]
            .into_iter()
            .filter(|&(_, m)| m > 0.0)
            .map(|(level, m)| Atom { level, log_mass: m.ln() + peak })
            .collect()
    }
}

/// A level of `l` carrying mass `exp(log_mass)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Atom {
    pub level: f64,
    pub log_mass: f64,
}
