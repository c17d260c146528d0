//! The limiting log-Laplace transform and its convex conjugate.

use serde::Serialize;

use super::{ExtendedReal, RateModel};
use crate::error::{Error, Result};
use crate::estimator::IndexFunction;
use crate::numeric::bisect_level;

/// Iterates beyond this norm with a still-increasing objective certify `+inf`.
const DIVERGENCE_RADIUS: f64 = 50.0;
const MAX_NEWTON_ITERATIONS: usize = 200;
/// Largest exponent accepted before a sum is treated as overflowing.
const EXP_CEILING: f64 = 700.0;
const ZETA_TOL: f64 = 1e-12;

/// `Φ`, its gradient and Hessian at one point.
#[derive(Debug, Clone, Copy)]
struct PhiJet {
    value: f64,
    grad: [f64; 2],
    /// `[∂11, ∂12, ∂22]`
    hess: [f64; 3],
}

/// Outcome of the numeric conjugate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LegendreSolution {
    pub value: ExtendedReal,
    /// Last iterate; the maximizer when the value is finite.
    pub t: [f64; 2],
    pub iterations: usize,
}

impl RateModel {
    /// `Φ(t1, t2) = ∫ w [(e^{s K(1)} − 1) − ∫₀¹ s K'(u) e^{s K(u)} τ₀(u) du] dv`,
    /// `s = t1 + t2 l(v)`. Returns `+inf` on overflow.
    pub fn phi_x(&self, t1: f64, t2: f64) -> Result<f64> {
        if self.exponent_overflows(t1, t2) {
            return Ok(f64::INFINITY);
        }
        let k1 = self.kernel.at_one();
        let rule = self.tau0.base_rule();
        let inner: Vec<(f64, f64)> = if self.kernel.lipschitz() == 0.0 {
            Vec::new()
        } else {
            rule.iter()
                .map(|&(u, w)| (w * self.kernel.derivative(u) * self.tau0.value(u), self.kernel.value(u)))
                .collect()
        };
        let mut total = 0.0;
        for a in &self.atoms {
            let s = t1 + t2 * a.level;
            let mut term = (a.log_mass + s * k1).exp() - a.log_mass.exp();
            for &(wk, k) in &inner {
                term -= s * wk * (a.log_mass + s * k).exp();
            }
            total += term;
        }
        finite_or_error(total)
    }

    /// `Φ` in the form `∫∫ τ₀'(u) (e^{s K(u)} − 1) w du dv`.
    pub fn phi_x_by_parts(&self, t1: f64, t2: f64) -> Result<f64> {
        if self.exponent_overflows(t1, t2) {
            return Ok(f64::INFINITY);
        }
        let rule: Vec<(f64, f64)> = self.tau0.dtau_rule().into_iter().map(|(u, w)| (self.kernel.value(u), w)).collect();
        let mut total = 0.0;
        for a in &self.atoms {
            let s = t1 + t2 * a.level;
            let m = a.log_mass.exp();
            total += rule.iter().map(|&(k, w)| w * ((a.log_mass + s * k).exp() - m)).sum::<f64>();
        }
        finite_or_error(total)
    }

    /// `Φ = ∫ (e^{t1 + t2 l(v)} − 1) w dv`, valid for the unit uniform kernel.
    pub fn phi_x_uniform(&self, t1: f64, t2: f64) -> Result<f64> {
        self.require_unit_uniform("the uniform-kernel form of phi")?;
        if self.exponent_overflows(t1, t2) {
            return Ok(f64::INFINITY);
        }
        let total: f64 = self.atoms.iter().map(|a| (a.log_mass + t1 + t2 * a.level).exp() - a.log_mass.exp()).sum();
        finite_or_error(total)
    }

    /// `∇Φ(t1, t2)`; `(M, ∫ l w)` at the origin.
    pub fn phi_gradient(&self, t1: f64, t2: f64) -> Result<[f64; 2]> {
        self.phi_jet(t1, t2).map(|j| j.grad).ok_or_else(|| Error::Numeric(format!("phi overflows at ({t1}, {t2})")))
    }

    fn exponent_overflows(&self, t1: f64, t2: f64) -> bool {
        let (k_hi, k_lo) = (self.kernel.value(0.0), self.kernel.at_one());
        self.atoms.iter().any(|a| {
            let s = t1 + t2 * a.level;
            a.log_mass + s * if s > 0.0 { k_hi } else { k_lo } > EXP_CEILING
        })
    }

    /// Value, gradient and Hessian from the by-parts form; `None` on overflow.
    fn phi_jet(&self, t1: f64, t2: f64) -> Option<PhiJet> {
        if self.exponent_overflows(t1, t2) {
            return None;
        }
        let rule: Vec<(f64, f64)> = if self.kernel.is_uniform() {
            vec![(self.kernel.scale, 1.0)]
        } else {
            self.tau0.dtau_rule().into_iter().map(|(u, w)| (self.kernel.value(u), w)).collect()
        };
        let mut value = 0.0;
        let mut g = [0.0; 2];
        let mut h = [0.0; 3];
        for a in &self.atoms {
            let s = t1 + t2 * a.level;
            let m = a.log_mass.exp();
            let (mut g0, mut g1, mut g2) = (0.0, 0.0, 0.0);
            for &(k, w) in &rule {
                let e = (a.log_mass + s * k).exp();
                g0 += w * (e - m);
                g1 += w * k * e;
                g2 += w * k * k * e;
            }
            let l = a.level;
            value += g0;
            g[0] += g1;
            g[1] += l * g1;
            h[0] += g2;
            h[1] += l * g2;
            h[2] += l * l * g2;
        }
        let all = [value, g[0], g[1], h[0], h[1], h[2]];
        all.iter().all(|x| x.is_finite()).then_some(PhiJet { value, grad: g, hess: h })
    }

    /// `Γ(λ1, λ2) = sup_t {λ1 t1 + λ2 t2 − Φ(t)}` by damped Newton ascent from the origin.
    pub fn gamma_legendre(&self, lam1: f64, lam2: f64) -> Result<ExtendedReal> {
        Ok(self.legendre_solve(lam1, lam2)?.value)
    }

    /// [`gamma_legendre`](Self::gamma_legendre) with the final iterate.
    pub fn legendre_solve(&self, lam1: f64, lam2: f64) -> Result<LegendreSolution> {
        let lam = [lam1, lam2];
        let objective = |t: [f64; 2]| -> Option<(f64, PhiJet)> {
            let jet = self.phi_jet(t[0], t[1])?;
            Some((lam[0] * t[0] + lam[1] * t[1] - jet.value, jet))
        };
        let mut t = [0.0, 0.0];
        let (mut q, mut jet) = objective(t).ok_or_else(|| Error::Numeric("phi overflows at the origin".into()))?;
        for iter in 0..MAX_NEWTON_ITERATIONS {
            let g = [lam[0] - jet.grad[0], lam[1] - jet.grad[1]];
            let d = newton_direction(jet.hess, g);
            let slope = g[0] * d[0] + g[1] * d[1];
            if slope <= 1e-14 * (1.0 + q.abs()) {
                return Ok(LegendreSolution { value: ExtendedReal::Finite(q), t, iterations: iter });
            }
            let mut step = 1.0;
            let mut accepted = None;
            while step > 1e-14 {
                let cand = [t[0] + step * d[0], t[1] + step * d[1]];
                if let Some((qc, jc)) = objective(cand) {
                    if qc >= q + 1e-4 * step * slope {
                        accepted = Some((cand, qc, jc));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((cand, qc, jc)) = accepted else {
                // no ascent left at machine precision
                return Ok(LegendreSolution { value: ExtendedReal::Finite(q), t, iterations: iter });
            };
            if cand[0].hypot(cand[1]) > DIVERGENCE_RADIUS && qc > q {
                return Ok(LegendreSolution { value: ExtendedReal::PosInfinity, t: cand, iterations: iter + 1 });
            }
            t = cand;
            q = qc;
            jet = jc;
        }
        Err(Error::Numeric(format!(
            "conjugate at ({lam1}, {lam2}) did not converge in {MAX_NEWTON_ITERATIONS} iterations; \
             t = ({}, {}), Q = {q}, grad = ({}, {})",
            t[0],
            t[1],
            lam[0] - jet.grad[0],
            lam[1] - jet.grad[1]
        )))
    }

    /// Closed-form conjugate for the unit uniform kernel; `+inf` unless
    /// `λ1 > 0` and `λ2/λ1` is inside the range of `V`.
    pub fn gamma_closed_uniform(&self, lam1: f64, lam2: f64) -> Result<ExtendedReal> {
        self.require_unit_uniform("the closed-form conjugate")?;
        if !(lam1 > 0.0) || !self.range.contains(lam2 / lam1) {
            return Ok(ExtendedReal::PosInfinity);
        }
        let s = self.v_inv(lam2 / lam1)?;
        let log_z = self.log_tilted_mass(s);
        Ok(ExtendedReal::Finite(lam1 * (lam1.ln() - 1.0) + lam2 * s - lam1 * log_z + self.mass()))
    }

    /// Maximizer `(ln λ1 − ln Z(s), s)`, `s = V⁻¹(λ2/λ1)`, of the uniform-kernel objective.
    pub fn stationary_point_uniform(&self, lam1: f64, lam2: f64) -> Result<(f64, f64)> {
        self.require_unit_uniform("the closed-form maximizer")?;
        if !(lam1 > 0.0) {
            return Err(Error::Domain { value: lam1, domain: "(0, inf)".into() });
        }
        let s = self.v_inv(lam2 / lam1)?;
        Ok((lam1.ln() - self.log_tilted_mass(s), s))
    }

    /// `ζ(t) = ∫₀¹ τ₀'(u) K(u) e^{t K(u)} du`.
    pub fn zeta(&self, t: f64) -> f64 {
        self.tau0.integrate_dtau(|u| {
            let k = self.kernel.value(u);
            k * (t * k).exp()
        })
    }

    /// `inf{s : ζ(s) ≥ y}` for `y > 0`.
    pub fn zeta_inv(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::Domain { value: y, domain: "(0, inf)".into() });
        }
        let (mut lo, mut hi) = (-1.0, 1.0);
        while !(self.zeta(lo) < y) {
            lo *= 2.0;
            if lo < -1e6 {
                return Err(Error::Numeric(format!("no lower bracket for zeta^-1({y})")));
            }
        }
        while !(self.zeta(hi) >= y) {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::Numeric(format!("no upper bracket for zeta^-1({y})")));
            }
        }
        Ok(bisect_level(|s| self.zeta(s), y, lo, hi, ZETA_TOL))
    }

    /// `W(A) = ∫_A w` and `W(Ā)` for an indicator index function.
    pub fn indicator_masses(&self) -> Result<(f64, f64)> {
        if !matches!(self.l, IndexFunction::Indicator(_)) {
            return Err(Error::Precondition("index function is not an indicator".into()));
        }
        let mass_at =
            |level: f64| self.atoms.iter().filter(|a| a.level == level).map(|a| a.log_mass.exp()).sum::<f64>();
        Ok((mass_at(1.0), mass_at(0.0)))
    }

    /// Conjugate for `l = 1_A`, written with `W` and `ζ⁻¹`; `+inf` unless `0 < λ2 < λ1`.
    pub fn gamma_indicator(&self, lam1: f64, lam2: f64) -> Result<ExtendedReal> {
        let (w_in, w_out) = self.indicator_masses()?;
        if w_in <= 0.0 {
            return Err(Error::Domain { value: w_in, domain: "W(A) > 0".into() });
        }
        if w_out <= 0.0 {
            return Err(Error::Domain { value: w_out, domain: "W(complement of A) > 0".into() });
        }
        if !(0.0 < lam2 && lam2 < lam1) {
            return Ok(ExtendedReal::PosInfinity);
        }
        let a = self.zeta_inv((lam1 - lam2) / w_out)?;
        let b = self.zeta_inv(lam2 / w_in)?;
        let tail = self.tau0.integrate_dtau(|u| {
            let k = self.kernel.value(u);
            w_in * (b * k).exp() + w_out * (a * k).exp()
        });
        Ok(ExtendedReal::Finite((lam1 - lam2) * a + lam2 * b + self.mass() - tail))
    }
}

fn finite_or_error(total: f64) -> Result<f64> {
    if total.is_nan() {
        Err(Error::Numeric("NaN in phi quadrature".into()))
    } else {
        Ok(total)
    }
}

/// Solves `(H + μI) d = g` for the Hessian `H` of `Φ`, raising `μ` until the
/// shifted matrix is safely positive definite.
fn newton_direction(h: [f64; 3], g: [f64; 2]) -> [f64; 2] {
    let scale = (h[0].abs() + h[2].abs()).max(1e-300);
    let mut mu = 0.0;
    loop {
        let (a, b, c) = (h[0] + mu, h[1], h[2] + mu);
        let det = a * c - b * b;
        if a > 0.0 && det > 1e-12 * scale * scale {
            return [(c * g[0] - b * g[1]) / det, (a * g[1] - b * g[0]) / det];
        }
        mu = if mu == 0.0 { 1e-10 * scale } else { mu * 10.0 };
    }
}
