//! Model abstractions: the state-space triple, importance densities and
//! bounded test functions.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SmcError};
use crate::rng::RngStream;

/// Prior, transition density and measurement density of a scalar
/// state-space model, all densities in log form.
pub trait StateSpaceModel {
    type Obs: Copy + fmt::Debug;

    fn state_dim(&self) -> usize {
        1
    }

    fn sample_prior(&self, rng: &mut RngStream) -> f64;

    /// One draw from `f(· | x_prev)`.
    fn sample_transition(&self, x_prev: f64, rng: &mut RngStream) -> f64;

    /// `ln f(x | x_prev)`; `-∞` outside the support.
    fn transition_logdensity(&self, x: f64, x_prev: f64) -> f64;

    /// `ln g(y | x)`; `-∞` where the measurement is impossible.
    fn likelihood_logdensity(&self, y: Self::Obs, x: f64) -> f64;

    /// Upper bound `c_g` on `g(y | x)` over all `x`, `y`.
    fn likelihood_bound(&self) -> f64;
}

/// Importance density `q(x | x_prev, y)`.
pub trait Proposal<M: StateSpaceModel> {
    fn propose(&self, model: &M, x_prev: f64, y: M::Obs, rng: &mut RngStream) -> f64;

    fn logdensity(&self, model: &M, x: f64, x_prev: f64, y: M::Obs) -> f64;

    /// `ln(g f / q)` at a proposed point.
    ///
    /// A point where both `f g` and `q` vanish gets weight zero. A point
    /// where only `q` vanishes is an error: the proposal does not dominate
    /// the target there.
    fn log_weight(&self, model: &M, x: f64, x_prev: f64, y: M::Obs) -> Result<f64> {
        let numerator = model.likelihood_logdensity(y, x) + model.transition_logdensity(x, x_prev);
        if numerator == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let log_q = self.logdensity(model, x, x_prev, y);
        let lw = numerator - log_q;
        if lw.is_nan() || lw == f64::INFINITY {
            return Err(SmcError::WeightNotFinite {
                index: None,
                log_weight: lw,
            });
        }
        Ok(lw)
    }
}

/// The transition density used as its own importance density. The weight
/// is the likelihood, returned without the `+ ln f - ln f` round trip.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bootstrap;

impl<M: StateSpaceModel> Proposal<M> for Bootstrap {
    fn propose(&self, model: &M, x_prev: f64, _y: M::Obs, rng: &mut RngStream) -> f64 {
        model.sample_transition(x_prev, rng)
    }

    fn logdensity(&self, model: &M, x: f64, x_prev: f64, _y: M::Obs) -> f64 {
        model.transition_logdensity(x, x_prev)
    }

    fn log_weight(&self, model: &M, x: f64, _x_prev: f64, y: M::Obs) -> Result<f64> {
        let lw = model.likelihood_logdensity(y, x);
        if lw.is_nan() || lw == f64::INFINITY {
            return Err(SmcError::WeightNotFinite {
                index: None,
                log_weight: lw,
            });
        }
        Ok(lw)
    }
}

/// Closed registry of bounded test functions.
///
/// Every function is bounded on the whole real line; on the Cox state
/// domain `[0, ∞)` they reduce to `1`, `e^{-x}`, `1{x ≤ a}` and `min(x, a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    One,
    ExpNeg,
    IndicatorLeq(f64),
    MinCap(f64),
}

impl TestFunction {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::One => 1.0,
            TestFunction::ExpNeg => (-x.max(0.0)).exp(),
            TestFunction::IndicatorLeq(a) => {
                if x <= a {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::MinCap(a) => x.clamp(-a.abs(), a.abs()),
        }
    }

    /// `‖φ‖ = sup |φ|`.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            TestFunction::One | TestFunction::ExpNeg | TestFunction::IndicatorLeq(_) => 1.0,
            TestFunction::MinCap(a) => a.abs(),
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::One => write!(f, "one"),
            TestFunction::ExpNeg => write!(f, "exp_neg"),
            TestFunction::IndicatorLeq(a) => write!(f, "indicator_leq({a})"),
            TestFunction::MinCap(a) => write!(f, "min_cap({a})"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = SmcError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || SmcError::InvalidParameter(format!("unknown test function `{s}`"));
        match s {
            "one" => return Ok(TestFunction::One),
            "exp_neg" => return Ok(TestFunction::ExpNeg),
            _ => {}
        }
        let (head, rest) = s.split_once('(').ok_or_else(bad)?;
        let arg = rest.strip_suffix(')').ok_or_else(bad)?;
        let a: f64 = arg.trim().parse().map_err(|_| bad())?;
        if !a.is_finite() {
            return Err(bad());
        }
        match head.trim() {
            "indicator_leq" => Ok(TestFunction::IndicatorLeq(a)),
            "min_cap" if a > 0.0 => Ok(TestFunction::MinCap(a)),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_registry_names() {
        assert_eq!("one".parse::<TestFunction>().unwrap(), TestFunction::One);
        assert_eq!("exp_neg".parse::<TestFunction>().unwrap(), TestFunction::ExpNeg);
        assert_eq!(
            "indicator_leq(1.5)".parse::<TestFunction>().unwrap(),
            TestFunction::IndicatorLeq(1.5)
        );
        assert_eq!("min_cap(10)".parse::<TestFunction>().unwrap(), TestFunction::MinCap(10.0));
        for bad in ["", "exp", "min_cap(0)", "min_cap(-1)", "indicator_leq(x)", "one(1)", "min_cap(3"] {
            assert!(bad.parse::<TestFunction>().is_err(), "{bad}");
        }
    }

    #[test]
    fn display_round_trips() {
        for f in [
            TestFunction::One,
            TestFunction::ExpNeg,
            TestFunction::IndicatorLeq(0.25),
            TestFunction::MinCap(3.0),
        ] {
            assert_eq!(f.name().parse::<TestFunction>().unwrap(), f);
        }
    }

    proptest! {
        #[test]
        fn eval_within_sup_norm(x in -1e6f64..1e6, a in 0.01f64..100.0) {
            for f in [TestFunction::One, TestFunction::ExpNeg, TestFunction::IndicatorLeq(a), TestFunction::MinCap(a)] {
                prop_assert!(f.eval(x).abs() <= f.sup_norm());
            }
        }
    }
}
