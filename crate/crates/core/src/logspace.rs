//! Log-domain probability arithmetic.
//!
//! Probabilities in this crate range over hundreds of orders of
//! magnitude, so every module carries them as natural logarithms.
//! [`LogProb`] wraps a value in `[-inf, 0]`; `0.0` encodes probability
//! one and `-inf` encodes probability zero. `-inf` is a legal value,
//! not an error state.
//!
//! Test tolerances are stated absolutely on the log scale (`1e-12`
//! typical) because relative error in probability space is meaningless
//! across this range.

use serde::Serialize;
use thiserror::Error;

/// A probability represented by its natural logarithm.
///
/// ```
/// use bclab::logspace::LogProb;
///
/// let half = LogProb::from_prob(0.5).unwrap();
/// // (1/2)^2000 underflows a plain double but stays exact here
/// let tiny = half.pow(2000f64.ln());
/// assert!((tiny.log() - 2000.0 * 0.5f64.ln()).abs() < 1e-9);
/// assert_eq!(tiny.prob(), 0.0);
/// ```
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct LogProb(f64);

#[derive(Debug, Error, PartialEq)]
pub enum LogspaceError {
    #[error("probability {0} is outside [0, 1]")]
    ProbOutOfRange(f64),
    #[error("log-probability {0} is not in [-inf, 0]")]
    LogOutOfRange(f64),
}

impl LogProb {
    /// Probability one.
    pub const ONE: LogProb = LogProb(0.0);
    /// Probability zero.
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);

    /// Builds from a probability `p` in `[0, 1]`.
    pub fn from_prob(p: f64) -> Result<Self, LogspaceError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(LogspaceError::ProbOutOfRange(p));
        }
        Ok(LogProb(p.ln()))
    }

    /// Builds from an already-logged value in `[-inf, 0]`.
    pub fn from_log(x: f64) -> Result<Self, LogspaceError> {
        if x.is_nan() || x > 0.0 {
            return Err(LogspaceError::LogOutOfRange(x));
        }
        Ok(LogProb(x))
    }

    /// The stored logarithm.
    pub fn log(self) -> f64 {
        self.0
    }

    /// The plain probability `e^x`; underflows to `0.0` far below
    /// `-745` as usual.
    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    /// `log(1 - e^x)`, full relative precision over the whole range.
    ///
    /// The complement of probability one is zero, so `x = 0` maps to
    /// `-inf` rather than failing.
    pub fn complement(self) -> LogProb {
        LogProb(log1mexp(self.0))
    }

    /// `log(p^m)` for `m = e^{m_log}`: the exponent scales by `e^{m_log}`.
    ///
    /// When `e^{m_log}` overflows the product saturates sign-correctly:
    /// any probability below one raised to an astronomic power is zero,
    /// while one stays one. `p^0 = 1` for every `p`, including `p = 0`.
    pub fn pow(self, m_log: f64) -> LogProb {
        debug_assert!(!m_log.is_nan());
        if self.0 == 0.0 {
            return LogProb::ONE;
        }
        let m = m_log.exp();
        if m == 0.0 {
            return LogProb::ONE;
        }
        // self.0 < 0 here, so an overflowing product lands on -inf,
        // which is the correct saturation.
        LogProb(m * self.0)
    }
}

/// `log(1 - e^x)` for `x <= 0`.
///
/// Splits at `x = -ln 2`: above it `1 - e^x` loses bits to cancellation
/// unless computed through `expm1`, below it through `ln_1p`.
pub(crate) fn log1mexp(x: f64) -> f64 {
    debug_assert!(x <= 0.0);
    if x == 0.0 {
        f64::NEG_INFINITY
    } else if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}
