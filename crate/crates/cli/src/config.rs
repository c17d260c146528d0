//! JSON run configuration and its translation into library objects.

use std::path::PathBuf;

use clap::ValueEnum;
use funcld::estimator::IndexFunction;
use funcld::funcdata::{Curve, Grid, Kernel, SemiMetric, Tau0};
use funcld::ratefn::WeightDensity;
use funcld::simulate::{LadderConfig, LinearCurveModel, PhiNormalization, YLaw};
use serde::{Deserialize, Serialize};

/// Half-width in standard deviations and node count of Gaussian weights.
const GAUSSIAN_HALF_WIDTH: f64 = 64.0;
const GAUSSIAN_NODES: usize = 8001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Rate-function sweeps.
    Rate,
    /// Estimator evaluation and finite-n log-Laplace transforms.
    Estimate,
    /// Pointwise deviation ladder and small-ball checks.
    Simulate,
    /// Uniform deviation ladder over a grid of centers.
    Uniform,
    /// Greedy covers and entropy diagnostics.
    Cover,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Nodes of the shared grid on [0, 1] used by analytic curve specs.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub rate: Option<RateSection>,
    #[serde(default)]
    pub estimate: Option<EstimateSection>,
    #[serde(default)]
    pub ladder: Option<LadderSection>,
    #[serde(default)]
    pub small_ball: Option<SmallBallSection>,
    #[serde(default)]
    pub cover: Option<CoverSection>,
}

fn default_grid_points() -> usize {
    101
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn uniform_kernel() -> Kernel {
    Kernel::uniform()
}

fn identity() -> IndexFunction {
    IndexFunction::Identity
}

fn identity_tau0() -> Tau0 {
    Tau0::Identity
}

fn l1_metric() -> SemiMetric {
    SemiMetric::Lp { p: 1.0 }
}

fn integral_metric() -> SemiMetric {
    SemiMetric::IntegralDiff
}

/// A curve on the shared grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Constant {
        value: f64,
    },
    Linear {
        intercept: f64,
        slope: f64,
    },
    /// Gaussian bump `height · exp{−(t − center)²/(2 width²)}`.
    Bump {
        center: f64,
        width: f64,
        #[serde(default = "one")]
        height: f64,
    },
    Values {
        values: Vec<f64>,
    },
    /// A `t,value` file.
    Csv {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Explicit weight `scale · N(mean, sd²)`.
    Gaussian {
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `X = Y·h + ε·l`, optionally with a default evaluation curve.
    LinearCurve {
        h: CurveSpec,
        l: CurveSpec,
        y_law: YLaw,
        #[serde(default)]
        x0: Option<CurveSpec>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    /// Levels (and deviation sizes) of the contraction sweep.
    pub lambda: Vec<f64>,
    /// First coordinates of the conjugate grid.
    #[serde(default)]
    pub lambda1: Vec<f64>,
    /// Ratios `λ2/λ1` of the conjugate grid.
    #[serde(default)]
    pub ratio: Vec<f64>,
    #[serde(default = "identity")]
    pub l: IndexFunction,
    #[serde(default = "uniform_kernel")]
    pub kernel: Kernel,
    #[serde(default = "identity_tau0")]
    pub tau0: Tau0,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// `n` pairs drawn from the linear curve model with the run seed.
    Simulated { n: usize },
    /// One curve file per response.
    Files { curves: Vec<PathBuf>, responses: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub data: DataSpec,
    pub points: Vec<CurveSpec>,
    pub h: f64,
    /// Defaults to `2h`.
    #[serde(default)]
    pub phi_h: Option<f64>,
    #[serde(default = "uniform_kernel")]
    pub kernel: Kernel,
    #[serde(default = "integral_metric")]
    pub metric: SemiMetric,
    #[serde(default = "identity")]
    pub l: IndexFunction,
    #[serde(default)]
    pub log_mgf: Option<MgfSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgfSection {
    pub n_values: Vec<usize>,
    pub t1: f64,
    pub t2: f64,
    pub replicates: usize,
    #[serde(default = "two")]
    pub a: f64,
    #[serde(default = "two")]
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    pub n_values: Vec<usize>,
    pub a: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub replicates: usize,
    /// Defaults to the model's `x0`.
    #[serde(default)]
    pub x0: Option<CurveSpec>,
    /// Class grid for `uniform`.
    #[serde(default)]
    pub centers: Vec<CurveSpec>,
    #[serde(default = "uniform_kernel")]
    pub kernel: Kernel,
    #[serde(default = "identity")]
    pub l: IndexFunction,
    #[serde(default)]
    pub normalization: PhiNormalization,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallBallSection {
    pub v: Vec<f64>,
    pub u: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassSpec {
    ParametricScale { x: CurveSpec, a_lo: f64, a_hi: f64, count: usize },
    Shift { x: CurveSpec, t_lo: f64, t_hi: f64, count: usize },
    Explicit { members: Vec<CurveSpec> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub n_values: Vec<usize>,
    #[serde(default = "two")]
    pub a: f64,
    #[serde(default = "two")]
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverSection {
    pub class: ClassSpec,
    pub ladder: ScheduleSpec,
    /// Strictly decreasing radii; defaults to `h(n)²` along the ladder.
    #[serde(default)]
    pub nu: Vec<f64>,
    #[serde(default = "l1_metric")]
    pub metric: SemiMetric,
    /// The constant `A` of the entropy bound.
    #[serde(default = "one")]
    pub big_a: f64,
}

/// A configuration problem, reported with exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub type ConfigResult<T> = Result<T, ConfigError>;

pub fn field<T>(field: &str, r: funcld::Result<T>) -> ConfigResult<T> {
    r.map_err(|e| ConfigError(format!("field `{field}`: {e}")))
}

pub fn require<'a, T>(value: &'a Option<T>, name: &str) -> ConfigResult<&'a T> {
    value.as_ref().ok_or_else(|| ConfigError(format!("missing field `{name}`")))
}

impl RunConfig {
    pub fn parse(text: &str) -> ConfigResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))?;
        Ok(cfg)
    }

    pub fn grid(&self) -> ConfigResult<Grid> {
        field("grid_points", Grid::unit(self.grid_points))
    }

    pub fn curve(&self, spec: &CurveSpec, name: &str) -> ConfigResult<Curve> {
        let grid = self.grid()?;
        let curve = match spec {
            CurveSpec::Constant { value } => Curve::constant(grid, *value),
            CurveSpec::Linear { intercept, slope } => Curve::from_fn(grid, |t| intercept + slope * t),
            CurveSpec::Bump { center, width, height } => {
                if !(*width > 0.0) {
                    return Err(ConfigError(format!("field `{name}.width` must be positive")));
                }
                Curve::from_fn(grid, |t| height * (-0.5 * ((t - center) / width).powi(2)).exp())
            }
            CurveSpec::Values { values } => Curve::new(grid, values.clone()),
            CurveSpec::Csv { path } => Curve::read_csv(path),
        };
        field(name, curve)
    }

    pub fn linear_curve(&self) -> ConfigResult<(LinearCurveModel, Option<Curve>)> {
        match require(&self.model, "model")? {
            ModelSpec::LinearCurve { h, l, y_law, x0 } => {
                let model = field(
                    "model",
                    LinearCurveModel::new(self.curve(h, "model.h")?, self.curve(l, "model.l")?, *y_law),
                )?;
                let x0 = x0.as_ref().map(|c| self.curve(c, "model.x0")).transpose()?;
                Ok((model, x0))
            }
            ModelSpec::Gaussian { .. } => {
                Err(ConfigError("field `model.kind`: this command needs `linear_curve`".into()))
            }
        }
    }

    pub fn seed(&self) -> ConfigResult<u64> {
        self.seed.ok_or_else(|| ConfigError("missing field `seed` (required by stochastic commands)".into()))
    }

    pub fn ladder_config(&self, x0: Curve) -> ConfigResult<LadderConfig> {
        let s = require(&self.ladder, "ladder")?;
        let cfg = LadderConfig {
            n_values: s.n_values.clone(),
            a: s.a,
            alpha: s.alpha,
            lambda: s.lambda,
            x0,
            replicates: s.replicates,
            seed: self.seed()?,
            kernel: checked_kernel(s.kernel, "ladder.kernel")?,
            l: s.l.clone(),
            normalization: s.normalization,
        };
        field("ladder", cfg.validate())?;
        Ok(cfg)
    }
}

/// Weight of an explicit Gaussian model.
pub fn gaussian_weight(mean: f64, sd: f64, scale: f64) -> ConfigResult<WeightDensity> {
    field("model", WeightDensity::gaussian(mean, sd, scale, GAUSSIAN_HALF_WIDTH, GAUSSIAN_NODES))
}

/// Rebuilds a deserialized kernel through the validating constructor.
pub fn checked_kernel(k: Kernel, name: &str) -> ConfigResult<Kernel> {
    field(name, Kernel::new(k.shape).scaled(k.scale))
}

pub fn checked_tau0(t: Tau0, name: &str) -> ConfigResult<Tau0> {
    match t {
        Tau0::Identity => Ok(t),
        Tau0::PowerLaw { alpha } => field(name, Tau0::power_law(alpha)),
    }
}
