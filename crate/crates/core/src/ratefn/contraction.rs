//! Rate function of the ratio estimate and the deviation rates built on it.

use serde::Serialize;

use super::{ExtendedReal, RateModel, RANGE_MARGIN};
use crate::error::{precondition, Error, Result};
use crate::numeric::{bisect_level, golden_section_min};

const LOG_LAMBDA1_BOUND: f64 = 12.0;
const CONTRACTION_TOL: f64 = 1e-10;
const RAY_POINTS: usize = 401;
const DUAL_TOL: f64 = 1e-12;

/// Minimum of `Γ(λ1, λ λ1)` over `λ1 > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contraction {
    pub value: ExtendedReal,
    /// Minimizing `λ1`; `NaN` when the value is infinite.
    pub lambda1: f64,
    /// The minimizer sits at an end of the `ln λ1` search window.
    pub at_boundary: bool,
}

/// `β(x, λ)` together with the outcome of the shape check on both rays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Beta {
    pub value: ExtendedReal,
    pub left: ExtendedReal,
    pub right: ExtendedReal,
    /// `false` when a scanned ray was not unimodal.
    pub unimodal: bool,
}

impl RateModel {
    /// `γ(λ) = inf_{λ1} Γ(λ1, λ λ1)` by golden section on `ln λ1 ∈ [−12, 12]`.
    ///
    /// Uses the closed-form conjugate for the unit uniform kernel and the
    /// numeric conjugate otherwise.
    pub fn gamma_x_contraction(&self, lam: f64) -> Result<Contraction> {
        if !self.range.contains(lam) {
            return Ok(Contraction { value: ExtendedReal::PosInfinity, lambda1: f64::NAN, at_boundary: false });
        }
        let closed = self.require_unit_uniform("").is_ok();
        let mut failure = None;
        let mut objective = |x: f64| {
            let l1 = x.exp();
            let g = if closed { self.gamma_closed_uniform(l1, lam * l1) } else { self.gamma_legendre(l1, lam * l1) };
            match g {
                Ok(v) => v.value(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            }
        };
        let (x, value) = golden_section_min(&mut objective, -LOG_LAMBDA1_BOUND, LOG_LAMBDA1_BOUND, CONTRACTION_TOL);
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(Contraction { value: value.into(), lambda1: x.exp(), at_boundary: LOG_LAMBDA1_BOUND - x.abs() < 1e-6 })
    }

    /// `γ(λ) = ∫ (1 − exp{V⁻¹(λ)(l(v) − λ)}) w dv` inside the range of `V`,
    /// `+inf` outside. Unit uniform kernel only.
    pub fn gamma_x_closed(&self, lam: f64) -> Result<ExtendedReal> {
        self.require_unit_uniform("the closed-form contraction")?;
        if !self.range.contains(lam) {
            return Ok(ExtendedReal::PosInfinity);
        }
        let s = self.v_inv(lam)?;
        let total: f64 = self.atoms.iter().map(|a| a.log_mass.exp() - (a.log_mass + s * (a.level - lam)).exp()).sum();
        Ok(ExtendedReal::Finite(total))
    }

    /// `γ(λ) = −inf_s Φ(−λ s, s)` for any kernel, `+inf` outside the range of `V`.
    ///
    /// The one-dimensional dual of the contraction: the minimizing `s` is the
    /// root of the increasing map `s ↦ (−λ, 1)·∇Φ(−λ s, s)`.
    pub fn gamma_x_dual(&self, lam: f64) -> Result<ExtendedReal> {
        if !self.range.contains(lam) {
            return Ok(ExtendedReal::PosInfinity);
        }
        // overflow only happens far out, where the slope has the sign of s
        let slope = |s: f64| match self.phi_gradient(-lam * s, s) {
            Ok(g) => g[1] - lam * g[0],
            Err(_) => s.signum() * f64::INFINITY,
        };
        let (mut lo, mut hi) = (-1.0, 1.0);
        while !(slope(lo) < 0.0) {
            lo *= 2.0;
            if lo < -1e4 {
                return Err(Error::Numeric(format!("no lower bracket for the dual at {lam}")));
            }
        }
        while !(slope(hi) >= 0.0) {
            hi *= 2.0;
            if hi > 1e4 {
                return Err(Error::Numeric(format!("no upper bracket for the dual at {lam}")));
            }
        }
        let s = bisect_level(slope, 0.0, lo, hi, DUAL_TOL);
        Ok(ExtendedReal::Finite(-self.phi_x(-lam * s, s)?))
    }

    /// `γ(λ)` by the cheapest available route.
    pub fn gamma_x(&self, lam: f64) -> Result<ExtendedReal> {
        if self.require_unit_uniform("").is_ok() {
            self.gamma_x_closed(lam)
        } else {
            self.gamma_x_dual(lam)
        }
    }

    /// `(γ'(λ), γ''(λ))` for the unit uniform kernel.
    pub fn gamma_derivs(&self, lam: f64) -> Result<(f64, f64)> {
        self.require_unit_uniform("the contraction derivatives")?;
        let s = self.v_inv(lam)?;
        let (log_z, _, var) = self.tilted_moments(s)?;
        let e = (log_z - lam * s).exp();
        Ok((s * e, (1.0 / var - s * s) * e))
    }

    /// `λ² M / (2 E l²(Z))`, the small-λ behavior of `γ` for a centered model.
    pub fn gamma_quadratic(&self, lam: f64) -> Result<f64> {
        if self.mean.abs() >= 1e-10 {
            return precondition(format!("model is not centered: E l(Z) = {}", self.mean));
        }
        Ok(lam * lam * self.mass() / (2.0 * self.second_moment()))
    }

    /// `β(x, λ) = inf{γ(r + α) : |α| ≥ λ}`.
    ///
    /// For the unit uniform kernel this is `min(γ(r − λ), γ(r + λ))`. Other
    /// kernels scan each ray at 401 points up to the edge of the range of `V`
    /// and refine the best bracket by golden section.
    pub fn beta(&self, r_true: f64, lam: f64) -> Result<Beta> {
        if !(lam > 0.0) {
            return Err(Error::Domain { value: lam, domain: "(0, inf)".into() });
        }
        if self.require_unit_uniform("").is_ok() {
            let left = self.gamma_x_closed(r_true - lam)?;
            let right = self.gamma_x_closed(r_true + lam)?;
            return Ok(Beta { value: left.min(right), left, right, unimodal: true });
        }
        let edge = 2.0 * RANGE_MARGIN;
        let (left, ok_left) = self.ray_min(r_true - lam, self.range.v0 + edge)?;
        let (right, ok_right) = self.ray_min(r_true + lam, self.range.v1 - edge)?;
        Ok(Beta { value: left.min(right), left, right, unimodal: ok_left && ok_right })
    }

    /// Minimum of `γ` on the segment from `start` toward `end`.
    fn ray_min(&self, start: f64, end: f64) -> Result<(ExtendedReal, bool)> {
        if !self.range.contains(start) {
            return Ok((ExtendedReal::PosInfinity, true));
        }
        let points: Vec<f64> =
            (0..RAY_POINTS).map(|k| start + (end - start) * k as f64 / (RAY_POINTS - 1) as f64).collect();
        let values: Vec<f64> =
            points.iter().map(|&p| self.gamma_x(p).map(ExtendedReal::value)).collect::<Result<_>>()?;
        let unimodal = is_unimodal(&values);
        let best = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap();
        let (a, b) = (points[best.saturating_sub(1)], points[(best + 1).min(RAY_POINTS - 1)]);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mut failure = None;
        let (_, refined) = golden_section_min(
            |p| match self.gamma_x(p) {
                Ok(v) => v.value(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            },
            lo,
            hi,
            1e-10,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok((refined.min(values[best]).into(), unimodal))
    }
}

/// Nonincreasing then nondecreasing, up to `1e-12`.
fn is_unimodal(values: &[f64]) -> bool {
    let mut rising = false;
    for w in values.windows(2) {
        if w[1] > w[0] + 1e-12 {
            rising = true;
        } else if rising && w[1] < w[0] - 1e-12 {
            return false;
        }
    }
    true
}

/// `ρ(λ) = min β(x, λ)` over a finite class of `(model, r(x))` pairs.
pub fn rho(class: &[(&RateModel, f64)], lam: f64) -> Result<ExtendedReal> {
    if class.is_empty() {
        return precondition("class grid must be nonempty");
    }
    let mut best = ExtendedReal::PosInfinity;
    for (model, r) in class {
        best = best.min(model.beta(*r, lam)?.value);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{gaussian_model, half_line_model};
    use super::super::*;
    use super::is_unimodal;
    use crate::funcdata::Kernel;
    use approx::assert_abs_diff_eq;

    fn gaussian_gamma(lam: f64) -> f64 {
        1.0 - (-lam * lam / 2.0).exp()
    }

    #[test]
    fn closed_contraction_examples() {
        let m = gaussian_model();
        assert_abs_diff_eq!(m.gamma_x_closed(m.mean()).unwrap().value(), 0.0, epsilon = 1e-12);
        for lam in [1.0, 2.0] {
            assert_abs_diff_eq!(m.gamma_x_closed(lam).unwrap().value(), gaussian_gamma(lam), epsilon = 1e-6);
        }
        assert_eq!(m.gamma_x_closed(m.v_range().v1 + 1.0).unwrap(), ExtendedReal::PosInfinity);
    }

    #[test]
    fn contraction_examples() {
        let m = gaussian_model();
        let c = m.gamma_x_contraction(m.mean()).unwrap();
        assert_abs_diff_eq!(c.value.value(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.lambda1, m.mass(), epsilon = 1e-6);
        let c = m.gamma_x_contraction(1.0).unwrap();
        assert_abs_diff_eq!(c.value.value(), gaussian_gamma(1.0), epsilon = 1e-6);
        assert!(!c.at_boundary);
        let c = m.gamma_x_contraction(m.v_range().v1 + 1.0).unwrap();
        assert_eq!(c.value, ExtendedReal::PosInfinity);
    }

    #[test]
    fn dual_matches_closed_and_contraction() {
        let m = gaussian_model();
        for lam in [-1.5, 0.3, 1.0] {
            let a = m.gamma_x_dual(lam).unwrap().value();
            assert_abs_diff_eq!(a, gaussian_gamma(lam), epsilon = 1e-8);
        }
        let ind = half_line_model(Kernel::exp_decay());
        for lam in [0.2, 0.5, 0.8] {
            let a = ind.gamma_x_dual(lam).unwrap().value();
            let b = ind.gamma_x_contraction(lam).unwrap().value.value();
            assert!((a - b).abs() < 1e-7, "{lam}: {a} vs {b}");
        }
    }

    #[test]
    fn derivative_examples() {
        let m = gaussian_model();
        let (g1, _) = m.gamma_derivs(m.mean()).unwrap();
        assert_abs_diff_eq!(g1, 0.0, epsilon = 1e-9);
        let (g1, g2) = m.gamma_derivs(1.0).unwrap();
        assert_abs_diff_eq!(g1, (-0.5f64).exp(), epsilon = 1e-8);
        assert_abs_diff_eq!(g2, 0.0, epsilon = 1e-7);
        let (_, g2) = m.gamma_derivs(0.0).unwrap();
        assert_abs_diff_eq!(g2, 1.0, epsilon = 1e-7);
        assert!(matches!(m.gamma_derivs(60.0), Err(Error::OutsideRange { .. })));
    }

    #[test]
    fn quadratic_examples() {
        let m = gaussian_model();
        assert_eq!(m.gamma_quadratic(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(m.gamma_quadratic(0.1).unwrap(), 0.005, epsilon = 1e-12);
        let shifted = RateModel::new(
            WeightDensity::gaussian(1.0, 1.0, 1.0, 40.0, 4001).unwrap(),
            IndexFunction::Identity,
            Kernel::uniform(),
            Tau0::Identity,
        )
        .unwrap();
        assert!(matches!(shifted.gamma_quadratic(0.1), Err(Error::Precondition(_))));
    }

    #[test]
    fn beta_examples() {
        let m = gaussian_model();
        let b = m.beta(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(b.value.value(), gaussian_gamma(1.0), epsilon = 1e-6);
        assert_abs_diff_eq!(b.left.value(), b.right.value(), epsilon = 1e-10);
        let tiny = m.beta(0.0, 1e-6).unwrap().value.value();
        assert!(tiny < 1e-11);
        let r = m.v_range();
        let far = (m.mean() - r.v0).max(r.v1 - m.mean()) + 1.0;
        assert_eq!(m.beta(m.mean(), far).unwrap().value, ExtendedReal::PosInfinity);
        assert!(m.beta(0.0, 0.0).is_err());
    }

    #[test]
    fn beta_scan_for_smooth_kernel() {
        let m = half_line_model(Kernel::exp_decay());
        let r = m.mean();
        let b = m.beta(r, 0.2).unwrap();
        assert!(b.unimodal);
        let left = m.gamma_x_dual(r - 0.2).unwrap().value();
        let right = m.gamma_x_dual(r + 0.2).unwrap().value();
        assert_abs_diff_eq!(b.value.value(), left.min(right), epsilon = 1e-9);
    }

    #[test]
    fn rho_examples() {
        let m = gaussian_model();
        let single = rho(&[(&m, 0.0)], 1.0).unwrap();
        assert_eq!(single, m.beta(0.0, 1.0).unwrap().value);
        assert_eq!(rho(&[(&m, 0.0), (&m, 0.0)], 1.0).unwrap(), single);
        assert!(rho(&[], 1.0).is_err());
    }

    #[test]
    fn unimodality_check() {
        assert!(is_unimodal(&[3.0, 2.0, 1.0, 1.0, 2.0]));
        assert!(is_unimodal(&[1.0, 2.0, 3.0]));
        assert!(!is_unimodal(&[1.0, 2.0, 1.5]));
    }
}
