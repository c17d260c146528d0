//! Sampled curve classes, greedy covers and entropy diagnostics.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::funcdata::{distance, Curve, SemiMetric};
use crate::simulate::Bandwidth;

/// How a class sample was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassGenerator {
    ParametricScale,
    ShiftClass,
    Explicit,
}

/// A finite discretization of a curve class on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionClassSample {
    members: Vec<Curve>,
    generator: ClassGenerator,
    resolution_warning: bool,
}

impl FunctionClassSample {
    pub fn explicit(members: Vec<Curve>) -> Result<Self> {
        Self::build(members, ClassGenerator::Explicit, false)
    }

    fn build(members: Vec<Curve>, generator: ClassGenerator, resolution_warning: bool) -> Result<Self> {
        let Some(first) = members.first() else {
            return precondition("a class sample needs at least one member");
        };
        if members.iter().any(|m| m.grid() != first.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { members, generator, resolution_warning })
    }

    pub fn members(&self) -> &[Curve] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn generator(&self) -> ClassGenerator {
        self.generator
    }

    /// Set when the grid is too coarse for the most compressed member.
    pub fn resolution_warning(&self) -> bool {
        self.resolution_warning
    }
}

fn uniform_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect()
}

/// Members `a·X(a·t)` for `a` on a uniform grid of `[a_lo, a_hi]`, zero where
/// `a·t` leaves the domain of `X`.
pub fn parametric_scale_class(x: &Curve, a_lo: f64, a_hi: f64, count: usize) -> Result<FunctionClassSample> {
    if count < 2 {
        return precondition(format!("count must be at least 2, got {count}"));
    }
    if !(a_lo.is_finite() && a_hi.is_finite() && a_lo <= a_hi) {
        return precondition(format!("invalid scale interval [{a_lo}, {a_hi}]"));
    }
    let scales = uniform_points(a_lo, a_hi, count);
    if scales.iter().any(|&a| a == 0.0) {
        return precondition("the scale grid must exclude 0");
    }
    let grid = *x.grid();
    let members = scales
        .iter()
        .map(|&a| Curve::from_fn(grid, |t| x.interpolate(a * t).map_or(0.0, |v| a * v)))
        .collect::<Result<Vec<_>>>()?;
    // one cell of the most compressed member may not move more than a quarter of the range
    let amplitude = x.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let a_max = a_lo.abs().max(a_hi.abs());
    let warn = a_max * grid.spacing() * x.lipschitz_estimate() > 0.25 * amplitude;
    FunctionClassSample::build(members, ClassGenerator::ParametricScale, warn)
}

/// Members `x(· − t)` for `t` on a uniform grid of `[t_lo, t_hi]`.
pub fn shift_class(x: &Curve, t_lo: f64, t_hi: f64, count: usize) -> Result<FunctionClassSample> {
    if count < 2 {
        return precondition(format!("count must be at least 2, got {count}"));
    }
    if !(t_lo.is_finite() && t_hi.is_finite() && t_lo <= t_hi) {
        return precondition(format!("invalid shift interval [{t_lo}, {t_hi}]"));
    }
    let Some((s0, s1)) = x.support() else {
        return precondition("shift class needs a curve with nonempty support");
    };
    let grid = *x.grid();
    let slack = 1e-9 * (grid.t_max() - grid.t_min());
    if s0 + t_lo < grid.t_min() - slack || s1 + t_hi > grid.t_max() + slack {
        return precondition(format!(
            "support [{s0}, {s1}] shifted by [{t_lo}, {t_hi}] escapes [{}, {}]",
            grid.t_min(),
            grid.t_max()
        ));
    }
    let members = uniform_points(t_lo, t_hi, count)
        .iter()
        .map(|&s| Curve::from_fn(grid, |t| x.interpolate(t - s).unwrap_or(0.0)))
        .collect::<Result<Vec<_>>>()?;
    FunctionClassSample::build(members, ClassGenerator::ShiftClass, false)
}

/// Result of [`greedy_cover`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverReport {
    pub nu: f64,
    pub n_cover: usize,
    /// Member indices in selection order.
    pub centers: Vec<usize>,
    /// `ν log n_cover`
    pub nu_log_n: f64,
}

impl CoverReport {
    /// Recomputes every member's distance to the centers.
    pub fn verify(&self, cls: &FunctionClassSample, metric: SemiMetric) -> Result<bool> {
        for m in cls.members() {
            let mut covered = false;
            for &c in &self.centers {
                if distance(m, &cls.members()[c], metric)? <= self.nu {
                    covered = true;
                    break;
                }
            }
            if !covered {
                return Ok(false);
            }
        }
        Ok(!self.centers.is_empty())
    }
}

/// Pairwise distances, row-parallel.
pub fn distance_matrix(cls: &FunctionClassSample, metric: SemiMetric) -> Result<Vec<Vec<f64>>> {
    let m = cls.members();
    m.par_iter().map(|a| m.iter().map(|b| distance(a, b, metric)).collect()).collect()
}

/// Farthest-point greedy cover seeded at member 0, ties to the lowest index.
pub fn greedy_cover(cls: &FunctionClassSample, nu: f64, metric: SemiMetric) -> Result<CoverReport> {
    if !(nu > 0.0) {
        return Err(Error::Domain { value: nu, domain: "(0, inf)".into() });
    }
    let dist = distance_matrix(cls, metric)?;
    Ok(greedy_from_matrix(&dist, nu))
}

pub(crate) fn greedy_from_matrix(dist: &[Vec<f64>], nu: f64) -> CoverReport {
    let mut centers = vec![0];
    let mut gap = dist[0].clone();
    loop {
        let (far, &d) =
            gap.iter().enumerate().fold((0, &f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if d <= nu {
            break;
        }
        centers.push(far);
        for (g, &e) in gap.iter_mut().zip(&dist[far]) {
            *g = g.min(e);
        }
    }
    let n_cover = centers.len();
    CoverReport { nu, n_cover, centers, nu_log_n: nu * (n_cover as f64).ln() }
}

/// One row of [`entropy_condition`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyRow {
    pub nu: f64,
    pub n_cover: usize,
    pub nu_log_n: f64,
    /// `log n_cover / (n φ(h))` for each ladder rung.
    pub log_n_over_nphi: Vec<f64>,
    /// `ν < n h / exp{A n φ(h)}` for each ladder rung.
    pub admissible: Vec<bool>,
    /// All rungs admissible.
    pub admissible_flag: bool,
}

/// A rung `(n, h, φ(h))` of a sample-size ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderRung {
    pub n: usize,
    pub h: f64,
    pub phi_h: f64,
}

impl LadderRung {
    pub fn new(n: usize, bw: Bandwidth) -> Self {
        Self { n, h: bw.h, phi_h: bw.phi_h }
    }

    /// `n h / exp{A n φ(h)}`
    pub fn nu_bound(&self, big_a: f64) -> f64 {
        let n = self.n as f64;
        n * self.h / (big_a * n * self.phi_h).exp()
    }
}

/// Entropy diagnostics over covers at strictly decreasing radii.
pub fn entropy_condition(reports: &[CoverReport], ladder: &[LadderRung], big_a: f64) -> Result<Vec<EntropyRow>> {
    if reports.windows(2).any(|w| w[1].nu >= w[0].nu) {
        return precondition("cover radii must be strictly decreasing");
    }
    if !(big_a > 0.0) {
        return Err(Error::Domain { value: big_a, domain: "A in (0, inf)".into() });
    }
    Ok(reports
        .iter()
        .map(|r| {
            let log_n = (r.n_cover as f64).ln();
            let admissible: Vec<bool> = ladder.iter().map(|l| r.nu < l.nu_bound(big_a)).collect();
            EntropyRow {
                nu: r.nu,
                n_cover: r.n_cover,
                nu_log_n: r.nu_log_n,
                log_n_over_nphi: ladder.iter().map(|l| log_n / (l.n as f64 * l.phi_h)).collect(),
                admissible_flag: admissible.iter().all(|&a| a),
                admissible,
            }
        })
        .collect())
}

/// Default cover radius `ν(n) = h(n)²`.
pub fn default_nu(rung: &LadderRung) -> f64 {
    rung.h * rung.h
}

/// Writes `nu,n_cover,nu_log_n,admissible_flag`.
pub fn write_entropy_csv<W: Write>(rows: &[EntropyRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["nu", "n_cover", "nu_log_n", "admissible_flag"])?;
    for r in rows {
        w.write_record([
            r.nu.to_string(),
            r.n_cover.to_string(),
            r.nu_log_n.to_string(),
            r.admissible_flag.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
