//! Command implementations. Each writes its CSV files into the output
//! directory and returns their names.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use funcld::covering::{
    default_nu, entropy_condition, greedy_cover, parametric_scale_class, shift_class, write_entropy_csv, CoverReport,
    FunctionClassSample, LadderRung,
};
use funcld::estimator::{finite_n_log_mgf, z_n, Dataset, EstimatorConfig};
use funcld::funcdata::{Curve, SemiMetric};
use funcld::ratefn::{ExtendedReal, RateModel};
use funcld::simulate::{bandwidth_schedule, ldp_ladder, uniform_ladder, write_records_csv, LinearCurveModel};
use funcld::Error;

use crate::config::{
    checked_kernel, checked_tau0, field, gaussian_weight, require, ClassSpec, ConfigError, DataSpec, ModelSpec,
    RunConfig,
};

/// Failure of a run.
#[derive(Debug)]
pub enum RunError {
    /// Exit status 2.
    Config(ConfigError),
    /// Exit status 1.
    Runtime(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

/// Files written and per-row numeric failures.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<String>,
    pub row_errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn write(
        &mut self,
        dir: &Path,
        name: &str,
        body: impl FnOnce(&mut dyn Write) -> Result<(), RunError>,
    ) -> Result<(), RunError> {
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        body(&mut w)?;
        w.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Formats a cell; a numeric failure becomes `nan` and is logged, an
    /// inapplicable quantity stays empty.
    fn cell(&mut self, file: &str, row: usize, column: &str, value: funcld::Result<f64>) -> String {
        match value {
            Ok(v) => format!("{v:?}"),
            Err(Error::Precondition(_)) => String::new(),
            Err(e) => {
                self.row_errors.push(format!("{file} row {row} column {column}: {e}"));
                "nan".into()
            }
        }
    }
}

fn extended(v: funcld::Result<ExtendedReal>) -> funcld::Result<f64> {
    v.map(ExtendedReal::value)
}

fn rate_model(cfg: &RunConfig) -> Result<RateModel, RunError> {
    let section = require(&cfg.rate, "rate")?;
    let kernel = checked_kernel(section.kernel, "rate.kernel")?;
    let tau0 = checked_tau0(section.tau0, "rate.tau0")?;
    let weight = match cfg.model.as_ref() {
        None => gaussian_weight(0.0, 1.0, 1.0)?,
        Some(ModelSpec::Gaussian { mean, sd, scale }) => gaussian_weight(*mean, *sd, *scale)?,
        Some(ModelSpec::LinearCurve { .. }) => {
            let (model, x0) = cfg.linear_curve()?;
            let x0 = x0.ok_or_else(|| ConfigError("missing field `model.x0`".into()))?;
            field("model", model.weight_density(&x0))?
        }
    };
    Ok(field("rate", RateModel::new(weight, section.l.clone(), kernel, tau0))?)
}

pub fn rate(cfg: &RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    let section = require(&cfg.rate, "rate")?;
    if section.lambda1.is_empty() != section.ratio.is_empty() {
        return Err(ConfigError("fields `rate.lambda1` and `rate.ratio` must be given together".into()).into());
    }
    let m = rate_model(cfg)?;
    let mut out = Outcome::default();

    let mut text = String::from("lambda,gamma,gamma_prime,gamma_second,beta\n");
    for (row, &lam) in section.lambda.iter().enumerate() {
        let file = "rate_sweep.csv";
        let derivs = m.gamma_derivs(lam);
        let gamma = out.cell(file, row, "gamma", extended(m.gamma_x(lam)));
        let d1 = out.cell(file, row, "gamma_prime", derivs.as_ref().map(|d| d.0).map_err(clone_error));
        let d2 = out.cell(file, row, "gamma_second", derivs.as_ref().map(|d| d.1).map_err(clone_error));
        let beta = out.cell(file, row, "beta", extended(m.beta(m.mean(), lam).map(|b| b.value)));
        writeln!(text, "{lam:?},{gamma},{d1},{d2},{beta}").expect("string write");
    }
    out.write(dir, "rate_sweep.csv", |w| Ok(w.write_all(text.as_bytes())?))?;

    if !section.lambda1.is_empty() {
        let mut text = String::from("lambda1,lambda2,gamma_legendre,gamma_closed,abs_diff\n");
        let mut row = 0;
        for &l1 in &section.lambda1 {
            for &r in &section.ratio {
                let l2 = l1 * r;
                let file = "rate_grid.csv";
                let legendre = extended(m.gamma_legendre(l1, l2));
                let closed = extended(m.gamma_closed_uniform(l1, l2));
                let diff = match (&legendre, &closed) {
                    (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => Ok((a - b).abs()),
                    (Ok(a), Ok(b)) if a == b => Ok(0.0),
                    _ => Err(Error::Precondition("no difference".into())),
                };
                let legendre = out.cell(file, row, "gamma_legendre", legendre);
                let closed = out.cell(file, row, "gamma_closed", closed);
                let diff = out.cell(file, row, "abs_diff", diff);
                writeln!(text, "{l1:?},{l2:?},{legendre},{closed},{diff}").expect("string write");
                row += 1;
            }
        }
        out.write(dir, "rate_grid.csv", |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    Ok(out)
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::Precondition(m) => Error::Precondition(m.clone()),
        other => Error::Numeric(other.to_string()),
    }
}

pub fn estimate(cfg: &RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    let s = require(&cfg.estimate, "estimate")?;
    let kernel = checked_kernel(s.kernel, "estimate.kernel")?;
    let est = field("estimate", EstimatorConfig::new(kernel, s.metric, s.h, s.phi_h.unwrap_or(2.0 * s.h)))?;
    let points = s
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| cfg.curve(p, &format!("estimate.points[{i}]")))
        .collect::<Result<Vec<Curve>, _>>()?;
    let data = match &s.data {
        DataSpec::Simulated { n } => {
            let (model, _) = cfg.linear_curve()?;
            field("estimate.data.n", model.sample_dataset(*n, cfg.seed()?))?
        }
        DataSpec::Files { curves, responses } => {
            let curves = curves
                .iter()
                .map(|p| {
                    Curve::read_csv(p)
                        .map_err(|e| ConfigError(format!("field `estimate.data.curves` ({}): {e}", p.display())))
                })
                .collect::<Result<Vec<_>, _>>()?;
            field("estimate.data", Dataset::new(curves, responses.clone()))?
        }
    };
    let mgf_model = match &s.log_mgf {
        Some(m) => {
            if m.replicates == 0 || m.n_values.is_empty() {
                return Err(
                    ConfigError("fields `estimate.log_mgf.n_values` and `replicates` must be nonempty".into()).into()
                );
            }
            let (model, _) = cfg.linear_curve()?;
            Some((model, cfg.seed()?, m))
        }
        None => None,
    };

    let mut out = Outcome::default();
    let mut text = String::from("point,r_n1,r_n2,r_hat,active_count\n");
    for (i, x) in points.iter().enumerate() {
        let z = z_n(x, &data, &s.l, &est)?;
        writeln!(text, "{i},{:?},{:?},{:?},{}", z.r_n1, z.r_n2, z.r_hat, z.active_count).expect("string write");
    }
    out.write(dir, "estimate.csv", |w| Ok(w.write_all(text.as_bytes())?))?;

    if let Some((model, seed, m)) = mgf_model {
        let mut text = String::from("point,n,h,phi_h,t1,t2,estimate,limit,overflow,replicates\n");
        let mut row = 0;
        for (i, x) in points.iter().enumerate() {
            let limit = model.rate_model(x, s.l.clone(), kernel).and_then(|rm| rm.phi_x(m.t1, m.t2));
            let limit = out.cell("log_mgf.csv", row, "limit", limit);
            for &n in &m.n_values {
                let b = field("estimate.log_mgf", bandwidth_schedule(n, m.a, m.alpha))?;
                let mcfg = field(
                    "estimate.log_mgf",
                    EstimatorConfig::new(kernel, s.metric, b.h, LinearCurveModel::small_ball_phi(b.h)),
                )?;
                let e = finite_n_log_mgf(x, &model, &s.l, &mcfg, n, m.t1, m.t2, m.replicates, seed)?;
                writeln!(
                    text,
                    "{i},{n},{:?},{:?},{:?},{:?},{:?},{limit},{},{}",
                    mcfg.h, mcfg.phi_h, m.t1, m.t2, e.value, e.overflow, e.replicates
                )
                .expect("string write");
                row += 1;
            }
        }
        out.write(dir, "log_mgf.csv", |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    Ok(out)
}

fn ladder_x0(cfg: &RunConfig, model_x0: Option<Curve>) -> Result<Curve, RunError> {
    let s = require(&cfg.ladder, "ladder")?;
    match &s.x0 {
        Some(spec) => Ok(cfg.curve(spec, "ladder.x0")?),
        None => model_x0.ok_or_else(|| ConfigError("missing field `ladder.x0` (or `model.x0`)".into()).into()),
    }
}

pub fn simulate(cfg: &RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    let (model, model_x0) = cfg.linear_curve()?;
    let x0 = ladder_x0(cfg, model_x0)?;
    let lcfg = cfg.ladder_config(x0.clone())?;
    let rm = field("ladder", model.rate_model(&x0, lcfg.l.clone(), lcfg.kernel))?;
    let small_ball = match &cfg.small_ball {
        Some(sb) if sb.replicates == 0 || !(sb.u > 0.0) => {
            return Err(ConfigError("fields `small_ball.u` and `small_ball.replicates` must be positive".into()).into())
        }
        other => other.as_ref(),
    };

    let mut out = Outcome::default();
    let records = ldp_ladder(&model, &rm, &lcfg)?;
    out.write(dir, "ladder.csv", |w| Ok(write_records_csv(&records, w)?))?;

    if let Some(sb) = small_ball {
        let mut text = String::from("v,u,mc,analytic,ratio,hits,replicates,wilson_low,wilson_high\n");
        for (k, &v) in sb.v.iter().enumerate() {
            let c = model.small_ball_check(&x0, v, sb.u, sb.replicates, lcfg.seed.wrapping_add(k as u64))?;
            writeln!(
                text,
                "{v:?},{:?},{:?},{:?},{:?},{},{},{:?},{:?}",
                sb.u,
                c.mc,
                c.analytic,
                c.mc / c.analytic,
                c.hits,
                c.replicates,
                c.wilson_low,
                c.wilson_high
            )
            .expect("string write");
        }
        out.write(dir, "small_ball.csv", |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    Ok(out)
}

pub fn uniform(cfg: &RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    let (model, model_x0) = cfg.linear_curve()?;
    let s = require(&cfg.ladder, "ladder")?;
    if s.centers.is_empty() {
        return Err(ConfigError("missing field `ladder.centers`".into()).into());
    }
    let centres = s
        .centers
        .iter()
        .enumerate()
        .map(|(i, c)| cfg.curve(c, &format!("ladder.centers[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let x0 = match ladder_x0(cfg, model_x0) {
        Ok(x) => x,
        Err(_) => centres[0].clone(),
    };
    let lcfg = cfg.ladder_config(x0)?;
    let rms =
        centres.iter().map(|x| model.rate_model(x, lcfg.l.clone(), lcfg.kernel)).collect::<funcld::Result<Vec<_>>>();
    let rms = field("ladder.centers", rms)?;

    let mut out = Outcome::default();
    let records = uniform_ladder(&model, &centres, &rms, &lcfg)?;
    out.write(dir, "uniform_ladder.csv", |w| Ok(write_records_csv(&records, w)?))?;
    Ok(out)
}

pub fn cover(cfg: &RunConfig, dir: &Path) -> Result<Outcome, RunError> {
    let s = require(&cfg.cover, "cover")?;
    let cls: FunctionClassSample = match &s.class {
        ClassSpec::ParametricScale { x, a_lo, a_hi, count } => {
            field("cover.class", parametric_scale_class(&cfg.curve(x, "cover.class.x")?, *a_lo, *a_hi, *count))?
        }
        ClassSpec::Shift { x, t_lo, t_hi, count } => {
            field("cover.class", shift_class(&cfg.curve(x, "cover.class.x")?, *t_lo, *t_hi, *count))?
        }
        ClassSpec::Explicit { members } => {
            let members = members
                .iter()
                .enumerate()
                .map(|(i, c)| cfg.curve(c, &format!("cover.class.members[{i}]")))
                .collect::<Result<Vec<_>, _>>()?;
            field("cover.class", FunctionClassSample::explicit(members))?
        }
    };
    let ladder = s
        .ladder
        .n_values
        .iter()
        .map(|&n| bandwidth_schedule(n, s.ladder.a, s.ladder.alpha).map(|b| LadderRung::new(n, b)))
        .collect::<funcld::Result<Vec<_>>>();
    let ladder = field("cover.ladder", ladder)?;
    if ladder.is_empty() {
        return Err(ConfigError("field `cover.ladder.n_values` must be nonempty".into()).into());
    }
    let nus: Vec<f64> = if s.nu.is_empty() { ladder.iter().map(default_nu).collect() } else { s.nu.clone() };
    if nus.iter().any(|&v| !(v > 0.0)) || nus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ConfigError("field `cover.nu` must be positive and strictly decreasing".into()).into());
    }

    let mut out = Outcome::default();
    if cls.resolution_warning() {
        out.warnings.push("grid too coarse for the most compressed class member".into());
    }
    let reports =
        nus.iter().map(|&nu| greedy_cover(&cls, nu, s.metric)).collect::<funcld::Result<Vec<CoverReport>>>()?;
    for r in &reports {
        if !r.verify(&cls, s.metric)? {
            return Err(RunError::Runtime(format!("cover at nu = {} failed the coverage check", r.nu)));
        }
    }
    let rows = field("cover", entropy_condition(&reports, &ladder, s.big_a))?;
    out.write(dir, "cover.csv", |w| Ok(write_entropy_csv(&rows, w)?))?;

    let mut text = String::from("nu,n,h,phi_h,log_n_over_nphi,nu_bound,admissible\n");
    for row in &rows {
        for (k, rung) in ladder.iter().enumerate() {
            writeln!(
                text,
                "{:?},{},{:?},{:?},{:?},{:?},{}",
                row.nu,
                rung.n,
                rung.h,
                rung.phi_h,
                row.log_n_over_nphi[k],
                rung.nu_bound(s.big_a),
                row.admissible[k]
            )
            .expect("string write");
        }
    }
    out.write(dir, "entropy_detail.csv", |w| Ok(w.write_all(text.as_bytes())?))?;
    if s.metric == SemiMetric::IntegralDiff {
        out.warnings.push("the integral semi-metric can merge distinct members".into());
    }
    Ok(out)
}
