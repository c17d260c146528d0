//! The l-indexed Nadaraya-Watson estimator at a curve `x`, its numerator and
//! denominator on the `1/(n·φ(h))` scale, and a Monte-Carlo estimate of the
//! finite-sample log moment generating function of that pair.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::funcdata::{distance, Curve, Kernel, SemiMetric};
use crate::numeric::log_sum_exp;
use crate::rng::stream_rng;

/// Closed interval with optional (infinite) ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
}

impl Interval {
    pub fn new(lo: Option<f64>, hi: Option<f64>) -> Result<Self> {
        if let (Some(a), Some(b)) = (lo, hi) {
            if !(a <= b) {
                return precondition(format!("interval [{a}, {b}] is empty"));
            }
        }
        if lo.is_some_and(f64::is_nan) || hi.is_some_and(f64::is_nan) {
            return precondition("NaN interval end");
        }
        Ok(Self { lo, hi })
    }

    pub fn lower(&self) -> f64 {
        self.lo.unwrap_or(f64::NEG_INFINITY)
    }

    pub fn upper(&self) -> f64 {
        self.hi.unwrap_or(f64::INFINITY)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower() <= v && v <= self.upper()
    }
}

/// Finite union of closed intervals, kept sorted and disjoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct IntervalSet(Vec<Interval>);

impl IntervalSet {
    pub fn new(mut parts: Vec<Interval>) -> Result<Self> {
        if parts.is_empty() {
            return precondition("indicator set needs at least one interval");
        }
        for p in &parts {
            Interval::new(p.lo, p.hi)?;
        }
        parts.sort_by(|a, b| a.lower().total_cmp(&b.lower()));
        let mut merged: Vec<Interval> = Vec::with_capacity(parts.len());
        for p in parts {
            match merged.last_mut() {
                Some(last) if p.lower() <= last.upper() => {
                    if p.upper() > last.upper() {
                        last.hi = p.hi;
                    }
                }
                _ => merged.push(p),
            }
        }
        Ok(Self(merged))
    }

    /// `[lo, +inf)`.
    pub fn half_line(lo: f64) -> Self {
        Self(vec![Interval { lo: Some(lo), hi: None }])
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.0
    }

    pub fn contains(&self, v: f64) -> bool {
        self.0.iter().any(|i| i.contains(v))
    }

    /// Finite interval ends in increasing order.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.0.iter().flat_map(|i| [i.lo, i.hi]).flatten().collect()
    }
}

impl<'de> Deserialize<'de> for IntervalSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let parts = Vec::<Interval>::deserialize(d)?;
        IntervalSet::new(parts).map_err(serde::de::Error::custom)
    }
}

/// Bounded Lipschitz transforms with sup-bound 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundedMap {
    Tanh,
    Sin,
    Logistic,
}

/// The map `l` applied to responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "set", rename_all = "snake_case")]
pub enum IndexFunction {
    Identity,
    Indicator(IntervalSet),
    BoundedLipschitz(BoundedMap),
}

impl IndexFunction {
    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            IndexFunction::Identity => v,
            IndexFunction::Indicator(set) => {
                if set.contains(v) {
                    1.0
                } else {
                    0.0
                }
            }
            IndexFunction::BoundedLipschitz(m) => match m {
                BoundedMap::Tanh => v.tanh(),
                BoundedMap::Sin => v.sin(),
                BoundedMap::Logistic => 1.0 / (1.0 + (-v).exp()),
            },
        }
    }

    /// `sup |l|`, `None` when unbounded.
    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            IndexFunction::Identity => None,
            IndexFunction::Indicator(_) | IndexFunction::BoundedLipschitz(_) => Some(1.0),
        }
    }
}

/// Sample of `(X_i, Y_i)` pairs on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    curves: Vec<Curve>,
    responses: Vec<f64>,
}

impl Dataset {
    pub fn new(curves: Vec<Curve>, responses: Vec<f64>) -> Result<Self> {
        if curves.is_empty() {
            return precondition("dataset must be nonempty");
        }
        if curves.len() != responses.len() {
            return Err(Error::LengthMismatch { expected: curves.len(), got: responses.len() });
        }
        let grid = curves[0].grid();
        if curves.iter().any(|c| c.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        if let Some(i) = responses.iter().position(|y| !y.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { curves, responses })
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Curve, f64)> {
        self.curves.iter().zip(self.responses.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kernel: Kernel,
    pub metric: SemiMetric,
    pub h: f64,
    pub phi_h: f64,
}

impl EstimatorConfig {
    pub fn new(kernel: Kernel, metric: SemiMetric, h: f64, phi_h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain { value: h, domain: "bandwidth in (0, inf)".into() });
        }
        if !(phi_h > 0.0 && phi_h.is_finite()) {
            return Err(Error::Domain { value: phi_h, domain: "phi(h) in (0, inf)".into() });
        }
        Ok(Self { kernel, metric, h, phi_h })
    }

    /// `Δ` for a precomputed distance: `K(d/h)` inside the unit ball, else 0.
    #[inline]
    pub fn weight(&self, d: f64) -> f64 {
        let u = d / self.h;
        if u <= 1.0 {
            self.kernel.value(u)
        } else {
            0.0
        }
    }
}

/// `(r_n1, r_n2, r_hat)` plus the number of curves inside the bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZnValue {
    pub r_n1: f64,
    pub r_n2: f64,
    pub r_hat: f64,
    pub active_count: usize,
}

/// A curve within the bandwidth: its distance to `x` and its response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance: f64,
    pub response: f64,
}

/// `K(d(x, X_i)/h)`, zero outside the unit ball.
pub fn delta(x: &Curve, xi: &Curve, cfg: &EstimatorConfig) -> Result<f64> {
    Ok(cfg.weight(distance(x, xi, cfg.metric)?))
}

/// The pair `(r_n1, r_n2)` and the ratio estimate at `x`.
pub fn z_n(x: &Curve, data: &Dataset, l: &IndexFunction, cfg: &EstimatorConfig) -> Result<ZnValue> {
    let mut neighbors = Vec::new();
    for (xi, y) in data.pairs() {
        let d = distance(x, xi, cfg.metric)?;
        if d <= cfg.h {
            neighbors.push(Neighbor { distance: d, response: y });
        }
    }
    Ok(z_n_from_neighbors(&neighbors, data.len(), l, cfg))
}

/// [`z_n`] from the neighbors of `x` in a sample of size `n`.
pub fn z_n_from_neighbors(neighbors: &[Neighbor], n: usize, l: &IndexFunction, cfg: &EstimatorConfig) -> ZnValue {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut active = 0;
    for nb in neighbors {
        if nb.distance <= cfg.h {
            let w = cfg.weight(nb.distance);
            s1 += w;
            s2 += l.eval(nb.response) * w;
            active += 1;
        }
    }
    let scale = 1.0 / (n as f64 * cfg.phi_h);
    let (r_n1, r_n2) = (s1 * scale, s2 * scale);
    let r_hat = if r_n1 != 0.0 { r_n2 / r_n1 } else { 0.0 };
    ZnValue { r_n1, r_n2, r_hat, active_count: active }
}

/// A data-generating law that can report, for a sample of size `n`, the
/// sample members lying within `h` of a curve.
///
/// Members outside the bandwidth carry zero weight, so a law may draw only
/// the neighborhood as long as the result has the same distribution as
/// filtering a full sample.
pub trait NeighborhoodSampler: Sync {
    fn sample_neighbors(
        &self,
        x: &Curve,
        n: usize,
        cfg: &EstimatorConfig,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Neighbor>>;
}

/// A fixed dataset viewed as a degenerate law.
impl NeighborhoodSampler for Dataset {
    fn sample_neighbors(
        &self,
        x: &Curve,
        n: usize,
        cfg: &EstimatorConfig,
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<Neighbor>> {
        if n != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: n });
        }
        let mut out = Vec::new();
        for (xi, y) in self.pairs() {
            let d = distance(x, xi, cfg.metric)?;
            if d <= cfg.h {
                out.push(Neighbor { distance: d, response: y });
            }
        }
        Ok(out)
    }
}

/// Monte-Carlo estimate of the scaled log-Laplace transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgfEstimate {
    /// `+inf` when the log-mean-exp overflowed.
    pub value: f64,
    pub overflow: bool,
    pub replicates: usize,
}

/// `(1/(nφ(h))) log E exp{Σ (t1 + t2 l(Y_i)) Δ_i(x)}` over `replicates`
/// independent samples of size `n`.
///
/// Replicate `r` draws from the stream `(seed, n, r)`; exponents are combined
/// by log-sum-exp in replicate order.
#[allow(clippy::too_many_arguments)]
pub fn finite_n_log_mgf(
    x: &Curve,
    law: &dyn NeighborhoodSampler,
    l: &IndexFunction,
    cfg: &EstimatorConfig,
    n: usize,
    t1: f64,
    t2: f64,
    replicates: usize,
    seed: u64,
) -> Result<MgfEstimate> {
    if replicates == 0 {
        return precondition("replicates must be at least 1");
    }
    if n == 0 {
        return precondition("sample size must be at least 1");
    }
    let exponents: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, n as u64, r as u64);
            let nbrs = law.sample_neighbors(x, n, cfg, &mut rng)?;
            Ok(nbrs.iter().map(|nb| (t1 + t2 * l.eval(nb.response)) * cfg.weight(nb.distance)).sum())
        })
        .collect::<Result<_>>()?;
    if let Some(i) = exponents.iter().position(|s: &f64| s.is_nan()) {
        return Err(Error::Numeric(format!("NaN exponent in replicate {i}")));
    }
    let log_mean = log_sum_exp(&exponents) - (replicates as f64).ln();
    let value = log_mean / (n as f64 * cfg.phi_h);
    let overflow = !value.is_finite();
    Ok(MgfEstimate { value: if overflow { f64::INFINITY } else { value }, overflow, replicates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcdata::Grid;
    use approx::assert_abs_diff_eq;

    fn grid() -> Grid {
        Grid::unit(11).unwrap()
    }

    fn flat(c: f64) -> Curve {
        Curve::constant(grid(), c).unwrap()
    }

    fn cfg(kernel: Kernel, h: f64) -> EstimatorConfig {
        EstimatorConfig::new(kernel, SemiMetric::IntegralDiff, h, 1.0).unwrap()
    }

    #[test]
    fn delta_examples() {
        let x = flat(0.0);
        let c = cfg(Kernel::affine_decreasing(), 0.5);
        assert_eq!(delta(&x, &x, &c).unwrap(), 2.0);
        let c = cfg(Kernel::uniform(), 0.5);
        assert_eq!(delta(&x, &flat(0.5), &c).unwrap(), 1.0);
        assert_eq!(delta(&x, &flat(1.0), &c).unwrap(), 0.0);
    }

    #[test]
    fn z_n_examples() {
        let x = flat(0.0);
        let c = cfg(Kernel::uniform(), 0.5);
        let far = Dataset::new(vec![flat(3.0), flat(-2.0)], vec![1.0, 2.0]).unwrap();
        let z = z_n(&x, &far, &IndexFunction::Identity, &c).unwrap();
        assert_eq!(z, ZnValue { r_n1: 0.0, r_n2: 0.0, r_hat: 0.0, active_count: 0 });

        let near = Dataset::new(vec![flat(0.1), flat(-0.2)], vec![1.0, 3.0]).unwrap();
        let z = z_n(&x, &near, &IndexFunction::Identity, &c).unwrap();
        assert_abs_diff_eq!(z.r_n1, 1.0);
        assert_abs_diff_eq!(z.r_n2, 2.0);
        assert_abs_diff_eq!(z.r_hat, 2.0);
        assert_eq!(z.active_count, 2);

        let ind = IndexFunction::Indicator(IntervalSet::half_line(2.0));
        let z = z_n(&x, &near, &ind, &c).unwrap();
        assert!((0.0..=1.0).contains(&z.r_hat));
        assert_abs_diff_eq!(z.r_hat, 0.5);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], vec![]).is_err());
        assert!(Dataset::new(vec![flat(0.0)], vec![f64::NAN]).is_err());
        let other = Curve::constant(Grid::unit(5).unwrap(), 0.0).unwrap();
        assert!(matches!(Dataset::new(vec![flat(0.0), other], vec![0.0, 1.0]), Err(Error::GridMismatch)));
    }

    #[test]
    fn interval_sets_merge() {
        let set = IntervalSet::new(vec![
            Interval::new(Some(2.0), Some(3.0)).unwrap(),
            Interval::new(Some(0.0), Some(1.0)).unwrap(),
            Interval::new(Some(0.5), Some(2.5)).unwrap(),
        ])
        .unwrap();
        assert_eq!(set.intervals().len(), 1);
        assert!(set.contains(0.0) && set.contains(3.0) && !set.contains(3.1));
        assert!(Interval::new(Some(1.0), Some(0.0)).is_err());
        let json = r#"[{"lo": 1.0}, {"hi": -1.0}]"#;
        let parsed: IntervalSet = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.breakpoints(), vec![-1.0, 1.0]);
    }

    #[test]
    fn log_mgf_of_deterministic_pair() {
        let x = flat(0.0);
        let c = EstimatorConfig::new(Kernel::exp_decay(), SemiMetric::IntegralDiff, 0.5, 0.25).unwrap();
        let data = Dataset::new(vec![flat(0.2)], vec![3.0]).unwrap();
        let (t1, t2) = (0.4, -0.3);
        let est = finite_n_log_mgf(&x, &data, &IndexFunction::Identity, &c, 1, t1, t2, 7, 11).unwrap();
        let expected = (t1 + t2 * 3.0) * (-0.4f64).exp() / 0.25;
        assert_abs_diff_eq!(est.value, expected, epsilon = 1e-12);
        assert!(!est.overflow);

        let zero = finite_n_log_mgf(&x, &data, &IndexFunction::Identity, &c, 1, 0.0, 0.0, 3, 1).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(finite_n_log_mgf(&x, &data, &IndexFunction::Identity, &c, 1, 0.0, 0.0, 0, 1).is_err());
    }
}
