//! The Gaussian functional regression model `X = Y·h + ε·l`, its small-ball
//! quantities, the bandwidth schedule and Monte-Carlo deviation ladders.
//!
//! With the semi-metric `|∫(x − y)|` a curve's distance to `x` only depends
//! on the projection `U = ∫X = Y·∫h + ε·∫l`. Ladders draw the members of a
//! sample that fall in the bandwidth windows directly: their number is
//! binomial and, given it, each `(U, Y)` follows the law conditioned on the
//! windows. This has the same distribution as filtering a full sample.

use std::io::Write;

use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{precondition, Error, Result};
use crate::estimator::{z_n_from_neighbors, Dataset, EstimatorConfig, IndexFunction, Neighbor, NeighborhoodSampler};
use crate::funcdata::{distance, quadrature, Curve, Kernel, SemiMetric, Tau0};
use crate::ratefn::{rho, RateModel, WeightDensity};
use crate::rng::stream_rng;

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959964;
/// Half-width of the weight grid in standard deviations.
const WEIGHT_HALF_WIDTH: f64 = 12.0;
const WEIGHT_NODES: usize = 4001;
/// Stream tag separating small-ball draws from sample-size streams.
const SMALL_BALL_STREAM: u64 = u64::MAX;

/// Law of the response `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum YLaw {
    Normal { mean: f64, sd: f64 },
    UniformInterval { a: f64, b: f64 },
}

impl YLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            YLaw::Normal { mean, sd } if mean.is_finite() && sd > 0.0 && sd.is_finite() => Ok(()),
            YLaw::UniformInterval { a, b } if a.is_finite() && b.is_finite() && a < b => Ok(()),
            _ => precondition(format!("invalid response law {self:?}")),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            YLaw::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            YLaw::UniformInterval { a, b } => a + (b - a) * rng.random::<f64>(),
        }
    }

    fn log_density(&self, v: f64) -> f64 {
        match *self {
            YLaw::Normal { mean, sd } => {
                let z = (v - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            YLaw::UniformInterval { a, b } => {
                if (a..=b).contains(&v) {
                    -(b - a).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(a ≤ Z ≤ b)` for standard normal `Z`, accurate in either tail.
fn std_normal_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        std_normal_cdf(-a) - std_normal_cdf(-b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    }
}

/// `X_i = Y_i·h + ε_i·l` with standard normal `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCurveModel {
    h_curve: Curve,
    l_curve: Curve,
    y_law: YLaw,
    ih: f64,
    il: f64,
}

impl LinearCurveModel {
    pub fn new(h_curve: Curve, l_curve: Curve, y_law: YLaw) -> Result<Self> {
        if h_curve.grid() != l_curve.grid() {
            return Err(Error::GridMismatch);
        }
        y_law.validate()?;
        let (ih, il) = (h_curve.integral(), l_curve.integral());
        if !(il != 0.0 && il.is_finite() && ih.is_finite()) {
            return precondition(format!("need a finite nonzero noise integral, got {il}"));
        }
        Ok(Self { h_curve, l_curve, y_law, ih, il })
    }

    pub fn h_curve(&self) -> &Curve {
        &self.h_curve
    }

    pub fn l_curve(&self) -> &Curve {
        &self.l_curve
    }

    pub fn y_law(&self) -> YLaw {
        self.y_law
    }

    /// `∫h`
    pub fn h_integral(&self) -> f64 {
        self.ih
    }

    /// `∫l`
    pub fn l_integral(&self) -> f64 {
        self.il
    }

    /// The small-ball scale `φ(u) = 2u` of the model.
    pub fn small_ball_phi(u: f64) -> f64 {
        2.0 * u
    }

    /// `n` pairs drawn from the stream `(seed, n, 0)`.
    pub fn sample_dataset(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.draw_dataset(n, seed, true)
    }

    /// As [`sample_dataset`](Self::sample_dataset) with `ε ≡ 0`, so `X_i = Y_i·h`.
    pub fn sample_dataset_noiseless(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.draw_dataset(n, seed, false)
    }

    fn draw_dataset(&self, n: usize, seed: u64, noise: bool) -> Result<Dataset> {
        if n == 0 {
            return precondition("sample size must be at least 1");
        }
        let mut rng = stream_rng(seed, n as u64, 0);
        let (curves, ys) = self.draw_curves(n, noise, &mut rng)?;
        Dataset::new(curves, ys)
    }

    fn draw_curves<R: Rng + ?Sized>(&self, n: usize, noise: bool, rng: &mut R) -> Result<(Vec<Curve>, Vec<f64>)> {
        let mut curves = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let y = self.y_law.sample(rng);
            let eps: f64 = if noise { rng.sample(StandardNormal) } else { 0.0 };
            curves.push(Curve::combine(y, &self.h_curve, eps, &self.l_curve)?);
            ys.push(y);
        }
        Ok((curves, ys))
    }

    /// Density of `∫X` given `Y = v`, evaluated at `∫x`.
    pub fn f_v_analytic(&self, x: &Curve, v: f64) -> Result<f64> {
        self.require_positive_noise()?;
        let z = (x.integral() - v * self.ih) / self.il;
        Ok(std_normal_pdf(z) / self.il)
    }

    fn require_positive_noise(&self) -> Result<()> {
        if self.il > 0.0 {
            Ok(())
        } else {
            precondition(format!("the Gaussian small-ball formula needs ∫l > 0, got {}", self.il))
        }
    }

    /// Monte-Carlo `P(|∫(x − X)| ≤ u | Y = v)` from full curves, next to `φ(u) f_v(x)`.
    pub fn small_ball_check(&self, x: &Curve, v: f64, u: f64, replicates: usize, seed: u64) -> Result<SmallBallCheck> {
        if !(u > 0.0) {
            return Err(Error::Domain { value: u, domain: "(0, inf)".into() });
        }
        if replicates == 0 {
            return precondition("replicates must be at least 1");
        }
        if x.grid() != self.h_curve.grid() {
            return Err(Error::GridMismatch);
        }
        let analytic = Self::small_ball_phi(u) * self.f_v_analytic(x, v)?;
        let grid = *x.grid();
        let hits: u64 = (0..replicates)
            .into_par_iter()
            .map_init(
                || vec![0.0; grid.points()],
                |diff, r| {
                    let mut rng = stream_rng(seed, SMALL_BALL_STREAM, r as u64);
                    let eps: f64 = rng.sample(StandardNormal);
                    for (k, d) in diff.iter_mut().enumerate() {
                        *d = x.values()[k] - (v * self.h_curve.values()[k] + eps * self.l_curve.values()[k]);
                    }
                    let dist = quadrature(diff, &grid).expect("lengths match").abs();
                    u64::from(dist <= u)
                },
            )
            .sum();
        let (wilson_low, wilson_high) = wilson_interval(hits, replicates as u64);
        Ok(SmallBallCheck {
            mc: hits as f64 / replicates as f64,
            analytic,
            hits,
            replicates,
            wilson_low,
            wilson_high,
            zero_hits: hits == 0,
        })
    }

    /// `w(v) = f_v(x0) g(v)` on a grid covering its effective support.
    pub fn weight_density(&self, x0: &Curve) -> Result<WeightDensity> {
        self.require_positive_noise()?;
        let c = x0.integral();
        let log_f = |v: f64| {
            let z = (c - v * self.ih) / self.il;
            -0.5 * z * z - self.il.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        };
        match self.y_law {
            YLaw::Normal { mean, sd } => {
                // product of two Gaussians in v
                let prec = self.ih * self.ih / (self.il * self.il) + 1.0 / (sd * sd);
                let centre = (c * self.ih / (self.il * self.il) + mean / (sd * sd)) / prec;
                let spread = prec.sqrt().recip();
                WeightDensity::from_log_fn(
                    centre - WEIGHT_HALF_WIDTH * spread,
                    centre + WEIGHT_HALF_WIDTH * spread,
                    WEIGHT_NODES,
                    |v| log_f(v) + self.y_law.log_density(v),
                )
            }
            YLaw::UniformInterval { a, b } => {
                WeightDensity::from_log_fn_compact(a, b, WEIGHT_NODES, |v| log_f(v) + self.y_law.log_density(v))
            }
        }
    }

    /// Rate model at `x0`; the model's `φ(u) = 2u` gives `τ₀(u) = u`.
    pub fn rate_model(&self, x0: &Curve, l: IndexFunction, kernel: Kernel) -> Result<RateModel> {
        RateModel::new(self.weight_density(x0)?, l, kernel, Tau0::Identity)
    }

    /// Members of an `n`-sample whose projection lies within `h` of one of
    /// `centres`, as `(∫X, Y)` pairs.
    fn projected_neighbors<R: Rng + ?Sized>(
        &self,
        centres: &[f64],
        n: usize,
        h: f64,
        rng: &mut R,
    ) -> Result<Vec<(f64, f64)>> {
        let windows = merge_windows(centres, h);
        let near = |u: f64| centres.iter().any(|c| (c - u).abs() <= h);
        match self.y_law {
            YLaw::Normal { mean, sd } => {
                let var_u = sd * sd * self.ih * self.ih + self.il * self.il;
                let (mu_u, sd_u) = (mean * self.ih, var_u.sqrt());
                let masses: Vec<f64> =
                    windows.iter().map(|&(a, b)| std_normal_mass((a - mu_u) / sd_u, (b - mu_u) / sd_u)).collect();
                let total: f64 = masses.iter().sum();
                if !(total > 0.0) {
                    return Ok(Vec::new());
                }
                let count = Binomial::new(n as u64, total.min(1.0))
                    .map_err(|e| Error::Numeric(format!("binomial draw: {e}")))?
                    .sample(rng);
                let slope = sd * sd * self.ih / var_u;
                let cond_sd = (sd * sd * self.il * self.il / var_u).sqrt();
                let mut out = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    let mut pick = rng.random::<f64>() * total;
                    let mut k = 0;
                    while k + 1 < masses.len() && pick >= masses[k] {
                        pick -= masses[k];
                        k += 1;
                    }
                    let (a, b) = windows[k];
                    let u = truncated_normal(mu_u, sd_u, a, b, rng);
                    let y = mean + slope * (u - mu_u) + cond_sd * rng.sample::<f64, _>(StandardNormal);
                    out.push((u, y));
                }
                Ok(out)
            }
            YLaw::UniformInterval { .. } => {
                let mut out = Vec::new();
                for _ in 0..n {
                    let y = self.y_law.sample(rng);
                    let eps: f64 = rng.sample(StandardNormal);
                    let u = y * self.ih + eps * self.il;
                    if near(u) {
                        out.push((u, y));
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Union of `[c − h, c + h]` as sorted disjoint intervals.
fn merge_windows(centres: &[f64], h: f64) -> Vec<(f64, f64)> {
    let mut w: Vec<(f64, f64)> = centres.iter().map(|c| (c - h, c + h)).collect();
    w.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(w.len());
    for (a, b) in w {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// `N(mu, sd²)` conditioned on `[a, b]`, by rejection from the uniform law.
fn truncated_normal<R: Rng + ?Sized>(mu: f64, sd: f64, a: f64, b: f64, rng: &mut R) -> f64 {
    let peak = mu.clamp(a, b);
    let z_peak = (peak - mu) / sd;
    loop {
        let u = a + (b - a) * rng.random::<f64>();
        let z = (u - mu) / sd;
        if rng.random::<f64>() < (-0.5 * (z * z - z_peak * z_peak)).exp() {
            return u;
        }
    }
}

impl NeighborhoodSampler for LinearCurveModel {
    fn sample_neighbors(
        &self,
        x: &Curve,
        n: usize,
        cfg: &EstimatorConfig,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Neighbor>> {
        if x.grid() != self.h_curve.grid() {
            return Err(Error::GridMismatch);
        }
        if cfg.metric == SemiMetric::IntegralDiff {
            let c = x.integral();
            return Ok(self
                .projected_neighbors(&[c], n, cfg.h, rng)?
                .into_iter()
                .map(|(u, y)| Neighbor { distance: (c - u).abs(), response: y })
                .collect());
        }
        let (curves, ys) = self.draw_curves(n, true, rng)?;
        let mut out = Vec::new();
        for (xi, y) in curves.iter().zip(ys) {
            let d = distance(x, xi, cfg.metric)?;
            if d <= cfg.h {
                out.push(Neighbor { distance: d, response: y });
            }
        }
        Ok(out)
    }
}

/// Outcome of [`LinearCurveModel::small_ball_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallBallCheck {
    pub mc: f64,
    pub analytic: f64,
    pub hits: u64,
    pub replicates: usize,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub zero_hits: bool,
}

/// `h = (ln ln n / n)^{1/α}` and `φ(h) = a h^α = a ln ln n / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bandwidth {
    pub h: f64,
    pub phi_h: f64,
}

pub fn bandwidth_schedule(n: usize, a: f64, alpha: f64) -> Result<Bandwidth> {
    if n < 16 {
        return precondition(format!("schedule needs n >= 16, got {n}"));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain { value: a, domain: "(0, inf)".into() });
    }
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::Domain { value: alpha, domain: "(1, inf)".into() });
    }
    let nf = n as f64;
    let ll = nf.ln().ln();
    Ok(Bandwidth { h: (ll / nf).powf(1.0 / alpha), phi_h: a * ll / nf })
}

/// `exp{A n φ(h)} / (n φ(h) · n h)`, which should vanish along a ladder.
pub fn phih_ratio(n: usize, a: f64, alpha: f64, big_a: f64) -> Result<f64> {
    let b = bandwidth_schedule(n, a, alpha)?;
    let nf = n as f64;
    let s = nf * b.phi_h;
    Ok((big_a * s).exp() / (s * nf * b.h))
}

/// Wilson score interval at 95%.
pub fn wilson_interval(hits: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Scale `φ(h)` used to normalize log-probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiNormalization {
    /// The model's small-ball scale `φ(h) = 2h`.
    #[default]
    Model,
    /// The schedule's `a h^α`.
    Schedule,
}

fn default_kernel() -> Kernel {
    Kernel::uniform()
}

fn default_index() -> IndexFunction {
    IndexFunction::Identity
}

/// Settings of a deviation ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderConfig {
    pub n_values: Vec<usize>,
    pub a: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// Center of the pointwise ladder.
    pub x0: Curve,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
    #[serde(default = "default_index")]
    pub l: IndexFunction,
    #[serde(default)]
    pub normalization: PhiNormalization,
}

impl LadderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return precondition("n_values must be nonempty");
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return precondition("n_values must be strictly increasing");
        }
        if self.replicates < 1000 {
            return precondition(format!("need at least 1000 replicates, got {}", self.replicates));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Domain { value: self.lambda, domain: "lambda in (0, inf)".into() });
        }
        bandwidth_schedule(self.n_values[0], self.a, self.alpha).map(|_| ())
    }

    /// `(h, φ(h))` at `n` under the configured normalization.
    pub fn bandwidth(&self, n: usize) -> Result<Bandwidth> {
        let b = bandwidth_schedule(n, self.a, self.alpha)?;
        Ok(match self.normalization {
            PhiNormalization::Model => Bandwidth { h: b.h, phi_h: LinearCurveModel::small_ball_phi(b.h) },
            PhiNormalization::Schedule => b,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFlag {
    Ok,
    /// No hits: the empirical rate is a lower bound from the Wilson upper limit.
    ZeroHits,
}

/// One rung of a deviation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub n: usize,
    pub h: f64,
    pub phi_h: f64,
    pub replicates: usize,
    pub hits: u64,
    pub p_hat: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub empirical_rate: f64,
    pub theoretical_rate: f64,
    pub flag: RecordFlag,
}

impl ExperimentRecord {
    fn new(n: usize, bw: Bandwidth, replicates: usize, hits: u64, theoretical_rate: f64) -> Self {
        let (wilson_low, wilson_high) = wilson_interval(hits, replicates as u64);
        let p_hat = hits as f64 / replicates as f64;
        let scale = n as f64 * bw.phi_h;
        let (empirical_rate, flag) = if hits == 0 {
            (-wilson_high.ln() / scale, RecordFlag::ZeroHits)
        } else {
            (-p_hat.ln() / scale, RecordFlag::Ok)
        };
        Self {
            n,
            h: bw.h,
            phi_h: bw.phi_h,
            replicates,
            hits,
            p_hat,
            wilson_low,
            wilson_high,
            empirical_rate,
            theoretical_rate,
            flag,
        }
    }
}

/// Writes records with the header
/// `n,h,phi_h,replicates,hits,p_hat,wilson_low,wilson_high,empirical_rate,theoretical_rate,flag`.
pub fn write_records_csv<W: Write>(records: &[ExperimentRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `P(|r̂(x0) − r(x0)| > λ)` along the sample sizes of `cfg`, next to `β(x0, λ)`.
pub fn ldp_ladder(
    model: &LinearCurveModel,
    rate_model: &RateModel,
    cfg: &LadderConfig,
) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let beta = rate_model.beta(rate_model.mean(), cfg.lambda)?.value.value();
    run_ladder(model, &[(&cfg.x0, rate_model)], cfg, beta)
}

/// `P(max_j |r̂(x_j) − r(x_j)| > λ)` over a finite class, next to `ρ(λ)`.
/// The center `cfg.x0` is not used.
pub fn uniform_ladder(
    model: &LinearCurveModel,
    class_grid: &[Curve],
    rate_models: &[RateModel],
    cfg: &LadderConfig,
) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    if class_grid.is_empty() {
        return precondition("class grid must be nonempty");
    }
    if class_grid.len() != rate_models.len() {
        return Err(Error::LengthMismatch { expected: class_grid.len(), got: rate_models.len() });
    }
    let pairs: Vec<(&RateModel, f64)> = rate_models.iter().map(|m| (m, m.mean())).collect();
    let rate = rho(&pairs, cfg.lambda)?.value();
    let centres: Vec<(&Curve, &RateModel)> = class_grid.iter().zip(rate_models).collect();
    run_ladder(model, &centres, cfg, rate)
}

fn run_ladder(
    model: &LinearCurveModel,
    centres: &[(&Curve, &RateModel)],
    cfg: &LadderConfig,
    theoretical_rate: f64,
) -> Result<Vec<ExperimentRecord>> {
    for (x, m) in centres {
        if x.grid() != model.h_curve.grid() {
            return Err(Error::GridMismatch);
        }
        if *m.kernel() != cfg.kernel || *m.index_function() != cfg.l {
            return precondition("rate model kernel and index function must match the ladder");
        }
    }
    let projections: Vec<f64> = centres.iter().map(|(x, _)| x.integral()).collect();
    let targets: Vec<f64> = centres.iter().map(|(_, m)| m.mean()).collect();
    let mut records = Vec::with_capacity(cfg.n_values.len());
    for &n in &cfg.n_values {
        let bw = cfg.bandwidth(n)?;
        let est = EstimatorConfig::new(cfg.kernel, SemiMetric::IntegralDiff, bw.h, bw.phi_h)?;
        let hits: u64 = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| -> Result<u64> {
                let mut rng = stream_rng(cfg.seed, n as u64, r as u64);
                let sample = model.projected_neighbors(&projections, n, bw.h, &mut rng)?;
                let mut nbrs = Vec::with_capacity(sample.len());
                for (c, target) in projections.iter().zip(&targets) {
                    nbrs.clear();
                    nbrs.extend(sample.iter().map(|&(u, y)| Neighbor { distance: (c - u).abs(), response: y }));
                    let z = z_n_from_neighbors(&nbrs, n, &cfg.l, &est);
                    if (z.r_hat - target).abs() > cfg.lambda {
                        return Ok(1);
                    }
                }
                Ok(0)
            })
            .try_reduce(|| 0u64, |a, b| Ok(a + b))?;
        records.push(ExperimentRecord::new(n, bw, cfg.replicates, hits, theoretical_rate));
    }
    Ok(records)
}
