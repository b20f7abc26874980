use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// A value in ℝ ∪ {+∞}.
///
/// `+∞ + finite = +∞`. Subtracting `+∞` from `+∞` panics: it only arises from
/// a bug in the caller, never from a convex-analysis identity.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub enum ExtReal {
    Finite(f64),
    PosInfinity,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    /// `0` when `inside`, `+∞` otherwise.
    pub fn indicator(inside: bool) -> Self {
        if inside {
            ExtReal::ZERO
        } else {
            ExtReal::PosInfinity
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            ExtReal::PosInfinity => None,
        }
    }

    /// Lossy conversion to `f64` (`+∞` maps to `f64::INFINITY`).
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(x) => x,
            ExtReal::PosInfinity => f64::INFINITY,
        }
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        if x == f64::INFINITY {
            ExtReal::PosInfinity
        } else {
            ExtReal::Finite(x)
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInfinity,
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: f64) -> ExtReal {
        self + ExtReal::Finite(rhs)
    }
}

impl Sub<f64> for ExtReal {
    type Output = ExtReal;
    fn sub(self, rhs: f64) -> ExtReal {
        self + ExtReal::Finite(-rhs)
    }
}

impl Sub for ExtReal {
    type Output = ExtReal;
    fn sub(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a - b),
            (ExtReal::PosInfinity, ExtReal::Finite(_)) => ExtReal::PosInfinity,
            (_, ExtReal::PosInfinity) => panic!("extended-real subtraction of +inf"),
        }
    }
}

impl std::iter::Sum for ExtReal {
    fn sum<I: Iterator<Item = ExtReal>>(iter: I) -> ExtReal {
        iter.fold(ExtReal::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::PosInfinity => write!(f, "inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        assert_eq!(ExtReal::Finite(1.0) + ExtReal::Finite(2.0), ExtReal::Finite(3.0));
        assert_eq!(ExtReal::PosInfinity + 5.0, ExtReal::PosInfinity);
        assert_eq!(ExtReal::PosInfinity - ExtReal::Finite(1e300), ExtReal::PosInfinity);
        assert!(ExtReal::Finite(1e300) < ExtReal::PosInfinity);
        assert_eq!(ExtReal::from(f64::INFINITY), ExtReal::PosInfinity);
        let total: ExtReal = [ExtReal::Finite(1.0), ExtReal::ZERO].into_iter().sum();
        assert_eq!(total, ExtReal::Finite(1.0));
    }

    #[test]
    #[should_panic(expected = "subtraction of +inf")]
    fn inf_minus_inf_panics() {
        let _ = ExtReal::PosInfinity - ExtReal::PosInfinity;
    }
}
