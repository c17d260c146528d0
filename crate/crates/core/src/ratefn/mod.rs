//! Rate functions of the pair `(r_n1, r_n2)` and of the ratio estimate.
//!
//! Every v-integral is a sum over the push-forward atoms of the weight
//! through `l`, evaluated in log space with a max shift.

mod conjugate;
mod contraction;
mod weight;

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::IndexFunction;
use crate::funcdata::{Kernel, Tau0};
use crate::numeric::bisect_level;

pub use conjugate::LegendreSolution;
pub use contraction::{rho, Beta, Contraction};
use weight::Atom;
pub use weight::{WeightDensity, MIN_WEIGHT_NODES};

/// Tilt probed when reporting the range of `V`.
pub const RANGE_PROBE: f64 = 50.0;
/// Margin used by every in-range test.
pub const RANGE_MARGIN: f64 = 1e-6;
const INVERSE_TOL: f64 = 1e-10;
/// Tilts probed when certifying finite exponential moments.
const MOMENT_PROBE: f64 = 20.0;

/// A real number or `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum ExtendedReal {
    Finite(f64),
    PosInfinity,
}

impl ExtendedReal {
    pub fn value(self) -> f64 {
        match self {
            ExtendedReal::Finite(v) => v,
            ExtendedReal::PosInfinity => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::PosInfinity => None,
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self.value() <= other.value() {
            self
        } else {
            other
        }
    }
}

impl From<f64> for ExtendedReal {
    fn from(v: f64) -> Self {
        if v == f64::INFINITY {
            ExtendedReal::PosInfinity
        } else {
            ExtendedReal::Finite(v)
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::PosInfinity => f.write_str("inf"),
        }
    }
}

impl Serialize for ExtendedReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtendedReal::Finite(v) => s.serialize_f64(*v),
            ExtendedReal::PosInfinity => s.serialize_str("inf"),
        }
    }
}

/// `(inf V, sup V)` as probed at `t = ∓50`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VRange {
    pub v0: f64,
    pub v1: f64,
}

impl VRange {
    /// `v0 + ε < y < v1 − ε`.
    pub fn contains(&self, y: f64) -> bool {
        self.v0 + RANGE_MARGIN < y && y < self.v1 - RANGE_MARGIN
    }
}

/// Weight, index function, kernel and profile: everything the limiting
/// log moment generating function depends on.
#[derive(Debug, Clone)]
pub struct RateModel {
    weight: WeightDensity,
    l: IndexFunction,
    kernel: Kernel,
    tau0: Tau0,
    atoms: Vec<Atom>,
    range: VRange,
    mean: f64,
}

impl RateModel {
    pub fn new(weight: WeightDensity, l: IndexFunction, kernel: Kernel, tau0: Tau0) -> Result<Self> {
        let atoms = weight.atoms(&l);
        let mut model =
            Self { weight, l, kernel, tau0, atoms, range: VRange { v0: f64::NAN, v1: f64::NAN }, mean: f64::NAN };
        for k in -20..=20 {
            let t = MOMENT_PROBE * k as f64 / 20.0;
            let lz = model.log_tilted_mass(t);
            if !(lz.is_finite() && lz < f64::MAX.ln()) {
                return Err(Error::Numeric(format!("exponential moment at t = {t} is not finite")));
            }
        }
        model.mean = model.v(0.0)?;
        let range = VRange { v0: model.v(-RANGE_PROBE)?, v1: model.v(RANGE_PROBE)? };
        if !(range.v0 <= model.mean + 1e-12 && model.mean <= range.v1 + 1e-12) {
            return Err(Error::Numeric(format!(
                "V failed its monotonicity certificate: V(-T) = {}, V(0) = {}, V(T) = {}",
                range.v0, model.mean, range.v1
            )));
        }
        model.range = range;
        Ok(model)
    }

    pub fn weight(&self) -> &WeightDensity {
        &self.weight
    }

    pub fn index_function(&self) -> &IndexFunction {
        &self.l
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn tau0(&self) -> &Tau0 {
        &self.tau0
    }

    /// `M = ∫ w`.
    pub fn mass(&self) -> f64 {
        self.weight.mass()
    }

    /// `V(0) = ∫ l w / M`, the regression value at the point.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `∫ l² w / M`.
    pub fn second_moment(&self) -> f64 {
        let s: f64 = self.atoms.iter().map(|a| a.level * a.level * a.log_mass.exp()).sum();
        s / self.mass()
    }

    pub fn v_range(&self) -> VRange {
        self.range
    }

    /// `ln ∫ e^{s l} w`.
    pub fn log_tilted_mass(&self, s: f64) -> f64 {
        let max = self.atoms.iter().map(|a| a.log_mass + s * a.level).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = self.atoms.iter().map(|a| (a.log_mass + s * a.level - max).exp()).sum();
        max + sum.ln()
    }

    /// `(ln Z(s), V(s), V'(s))`: log mass, mean and variance of `l` under the tilt `e^{s l} w`.
    pub fn tilted_moments(&self, s: f64) -> Result<(f64, f64, f64)> {
        let exps: Vec<f64> = self.atoms.iter().map(|a| a.log_mass + s * a.level).collect();
        let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Domain { value: s, domain: "finite tilted mass".into() });
        }
        let p: Vec<f64> = exps.iter().map(|e| (e - max).exp()).collect();
        let total: f64 = p.iter().sum();
        let mean = p.iter().zip(&self.atoms).map(|(p, a)| p * a.level).sum::<f64>() / total;
        let var = p.iter().zip(&self.atoms).map(|(p, a)| p * (a.level - mean).powi(2)).sum::<f64>() / total;
        Ok((max + total.ln(), mean, var))
    }

    /// Tilted mean of `l`.
    pub fn v(&self, t: f64) -> Result<f64> {
        Ok(self.tilted_moments(t)?.1)
    }

    /// Tilted variance of `l`, the derivative of [`v`](Self::v).
    pub fn v_prime(&self, t: f64) -> Result<f64> {
        Ok(self.tilted_moments(t)?.2)
    }

    /// `inf{s : V(s) ≥ y}` for `y` strictly inside the probed range.
    pub fn v_inv(&self, y: f64) -> Result<f64> {
        if !self.range.contains(y) {
            return Err(Error::OutsideRange { value: y, range: self.range });
        }
        let v = |s: f64| self.v(s).unwrap_or(f64::NAN);
        let (mut lo, mut hi) = (-1.0, 1.0);
        while !(v(lo) < y) {
            lo *= 2.0;
            if lo < -1e6 {
                return Err(Error::Numeric(format!("no lower bracket for V^-1({y})")));
            }
        }
        while !(v(hi) >= y) {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::Numeric(format!("no upper bracket for V^-1({y})")));
            }
        }
        Ok(bisect_level(v, y, lo, hi, INVERSE_TOL))
    }

    fn require_unit_uniform(&self, what: &str) -> Result<()> {
        if self.kernel.is_uniform() && self.kernel.scale == 1.0 {
            Ok(())
        } else {
            Err(Error::Precondition(format!("{what} needs the unit uniform kernel")))
        }
    }
}
