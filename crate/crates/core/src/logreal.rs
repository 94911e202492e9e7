//! Extended non-negative reals stored by their logarithm.
//!
//! Partition functions of the hierarchy grow doubly exponentially in the
//! number of scales, so every extensive quantity is carried as a `LogReal`
//! with explicit states for exact zero and `+inf`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogReal {
    Zero,
    /// Holds `ln(x)` for a finite positive `x`.
    Finite(f64),
    Infinite,
}

impl LogReal {
    pub const ONE: LogReal = LogReal::Finite(0.0);

    /// From `ln(x)`; `-inf` maps to zero and `+inf` to infinity.
    pub fn from_ln(l: f64) -> Self {
        debug_assert!(!l.is_nan(), "NaN logarithm");
        if l == f64::NEG_INFINITY {
            LogReal::Zero
        } else if l == f64::INFINITY || l.is_nan() {
            LogReal::Infinite
        } else {
            LogReal::Finite(l)
        }
    }

    /// From a plain non-negative value.
    pub fn from_value(x: f64) -> Self {
        debug_assert!(x >= 0.0 || x.is_nan(), "negative value {x}");
        if x == 0.0 {
            LogReal::Zero
        } else if x.is_infinite() {
            LogReal::Infinite
        } else {
            LogReal::Finite(x.ln())
        }
    }

    pub fn ln(self) -> f64 {
        match self {
            LogReal::Zero => f64::NEG_INFINITY,
            LogReal::Finite(l) => l,
            LogReal::Infinite => f64::INFINITY,
        }
    }

    /// Plain value; saturates to `+inf` on overflow and to 0 on underflow.
    pub fn value(self) -> f64 {
        self.ln().exp()
    }

    /// Plain value plus a flag telling whether the conversion overflowed.
    pub fn value_checked(self) -> (f64, bool) {
        let v = self.value();
        (v, v.is_infinite() && self != LogReal::Infinite)
    }

    pub fn is_zero(self) -> bool {
        self == LogReal::Zero
    }

    pub fn is_infinite(self) -> bool {
        self == LogReal::Infinite
    }

    pub fn is_finite(self) -> bool {
        !self.is_infinite()
    }

    /// `x^e` for a non-negative exponent; `0^0 = 1`.
    pub fn powf(self, e: f64) -> Self {
        debug_assert!(e >= 0.0);
        if e == 0.0 {
            return LogReal::ONE;
        }
        match self {
            LogReal::Zero => LogReal::Zero,
            LogReal::Infinite => LogReal::Infinite,
            LogReal::Finite(l) => LogReal::from_ln(l * e),
        }
    }

    /// `ln(1 + x)` as a `LogReal`, accurate for tiny and huge `x`.
    pub fn ln_1p(self) -> Self {
        match self {
            LogReal::Zero => LogReal::Zero,
            LogReal::Infinite => LogReal::Infinite,
            LogReal::Finite(l) => LogReal::from_ln(ln_ln1p_exp(l)),
        }
    }

    /// `e^x - 1` as a `LogReal`, accurate for tiny and huge `x`.
    pub fn exp_m1(self) -> Self {
        match self {
            LogReal::Zero => LogReal::Zero,
            LogReal::Infinite => LogReal::Infinite,
            LogReal::Finite(l) => LogReal::from_ln(ln_expm1_exp(l)),
        }
    }

    /// `x / (1 + x)`, the occupation probability attached to an effective activity.
    pub fn odds_to_probability(self) -> f64 {
        match self {
            LogReal::Zero => 0.0,
            LogReal::Infinite => 1.0,
            LogReal::Finite(l) => {
                if l > 0.0 {
                    1.0 / (1.0 + (-l).exp())
                } else {
                    let x = l.exp();
                    x / (1.0 + x)
                }
            }
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// Sum of a sequence, accumulated in the log domain.
    pub fn sum<I: IntoIterator<Item = LogReal>>(items: I) -> Self {
        items.into_iter().fold(LogReal::Zero, |a, b| a + b)
    }

    /// Product of a sequence.
    pub fn product<I: IntoIterator<Item = LogReal>>(items: I) -> Self {
        items.into_iter().fold(LogReal::ONE, |a, b| a * b)
    }
}

/// `ln(a + b)` from `ln a`, `ln b` with max extraction.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(ln(1 + e^l))`.
pub fn ln_ln1p_exp(l: f64) -> f64 {
    if l < -30.0 {
        // ln(1+x) = x(1 - x/2 + ...), so ln ln(1+x) = l + ln(1 - x/2 + x^2/3)
        let x = l.exp();
        l + (-x / 2.0 + x * x / 3.0).ln_1p()
    } else if l > 40.0 {
        // ln(1+e^l) = l + ln(1+e^-l)
        (l + (-l).exp().ln_1p()).ln()
    } else {
        l.exp().ln_1p().ln()
    }
}

/// `ln(e^(e^l) - 1)`.
pub fn ln_expm1_exp(l: f64) -> f64 {
    if l < -30.0 {
        // e^x - 1 = x(1 + x/2 + x^2/6 + ...)
        let x = l.exp();
        l + (x / 2.0 + x * x / 6.0).ln_1p()
    } else {
        let s = l.exp();
        if s > 40.0 {
            s + (-(-s).exp()).ln_1p()
        } else {
            s.exp_m1().ln()
        }
    }
}

impl Add for LogReal {
    type Output = LogReal;

    fn add(self, rhs: LogReal) -> LogReal {
        LogReal::from_ln(log_add_exp(self.ln(), rhs.ln()))
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Mul for LogReal {
    type Output = LogReal;

    /// `0 * inf = 0`, the measure-theoretic convention.
    fn mul(self, rhs: LogReal) -> LogReal {
        match (self, rhs) {
            (LogReal::Zero, _) | (_, LogReal::Zero) => LogReal::Zero,
            (LogReal::Infinite, _) | (_, LogReal::Infinite) => LogReal::Infinite,
            (LogReal::Finite(a), LogReal::Finite(b)) => LogReal::from_ln(a + b),
        }
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Div for LogReal {
    type Output = LogReal;

    /// Any fraction with an infinite denominator is zero; `x / 0` is infinite
    /// for `x > 0` and `0 / 0` is zero.
    fn div(self, rhs: LogReal) -> LogReal {
        match (self, rhs) {
            (_, LogReal::Infinite) => LogReal::Zero,
            (LogReal::Zero, _) => LogReal::Zero,
            (_, LogReal::Zero) => LogReal::Infinite,
            (LogReal::Infinite, _) => LogReal::Infinite,
            (LogReal::Finite(a), LogReal::Finite(b)) => LogReal::from_ln(a - b),
        }
    }
}

impl PartialOrd for LogReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.ln().partial_cmp(&other.ln())
    }
}

impl fmt::Display for LogReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogReal::Zero => f.write_str("0"),
            LogReal::Infinite => f.write_str("inf"),
            LogReal::Finite(l) => write!(f, "exp({l})"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LogRealRepr {
    Finite { log_value: f64 },
    State { state: String },
}

impl Serialize for LogReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let repr = match *self {
            LogReal::Zero => LogRealRepr::State { state: "zero".into() },
            LogReal::Infinite => LogRealRepr::State { state: "infinite".into() },
            LogReal::Finite(l) => LogRealRepr::Finite { log_value: l },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LogReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match LogRealRepr::deserialize(d)? {
            LogRealRepr::Finite { log_value } => Ok(LogReal::from_ln(log_value)),
            LogRealRepr::State { state } => match state.as_str() {
                "zero" => Ok(LogReal::Zero),
                "infinite" => Ok(LogReal::Infinite),
                other => Err(D::Error::custom(format!("unknown LogReal state {other:?}"))),
            },
        }
    }
}

/// Serde adapter for `f64` fields that may be infinite: JSON has no infinity,
/// so `±∞` travel as the strings `"+inf"` and `"-inf"`.
pub mod extended {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *x == f64::INFINITY {
            s.serialize_str("+inf")
        } else if *x == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "+inf" | "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(D::Error::custom(format!("expected a number or ±inf, found {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn absorbing_states() {
        let x = LogReal::from_value(3.0);
        assert_eq!(x * LogReal::Zero, LogReal::Zero);
        assert_eq!(x * LogReal::Infinite, LogReal::Infinite);
        assert_eq!(LogReal::Zero * LogReal::Infinite, LogReal::Zero);
        assert_eq!(x + LogReal::Infinite, LogReal::Infinite);
        assert_eq!(x + LogReal::Zero, x);
        assert_eq!(x / LogReal::Infinite, LogReal::Zero);
        assert_eq!(LogReal::Infinite / LogReal::Infinite, LogReal::Zero);
        assert_eq!(x / LogReal::Zero, LogReal::Infinite);
        assert_eq!(LogReal::Zero.powf(0.0), LogReal::ONE);
    }

    #[test]
    fn arithmetic_matches_plain_values() {
        let a = LogReal::from_value(2.0);
        let b = LogReal::from_value(5.0);
        assert_relative_eq!((a + b).value(), 7.0, max_relative = 1e-15);
        assert_relative_eq!((a * b).value(), 10.0, max_relative = 1e-15);
        assert_relative_eq!((a / b).value(), 0.4, max_relative = 1e-15);
        assert_relative_eq!(b.powf(2.0).value(), 25.0, max_relative = 1e-15);
        assert_relative_eq!(a.ln_1p().value(), 3f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(a.exp_m1().value(), 2f64.exp_m1(), max_relative = 1e-15);
        assert_relative_eq!(LogReal::ONE.odds_to_probability(), 0.5);
    }

    #[test]
    fn tiny_and_huge_arguments() {
        // ln(1+x) ~ x for tiny x
        let tiny = LogReal::Finite(-1000.0);
        assert_relative_eq!(tiny.ln_1p().ln(), -1000.0, max_relative = 1e-15);
        assert_relative_eq!(tiny.exp_m1().ln(), -1000.0, max_relative = 1e-15);
        let huge = LogReal::Finite(1.0e4);
        assert_relative_eq!(huge.ln_1p().ln(), 1.0e4f64.ln(), max_relative = 1e-15);
        let (v, overflow) = huge.value_checked();
        assert!(v.is_infinite() && overflow);
    }

    #[test]
    fn json_representation() {
        assert_eq!(serde_json::to_string(&LogReal::Zero).unwrap(), r#"{"state":"zero"}"#);
        assert_eq!(
            serde_json::to_string(&LogReal::Infinite).unwrap(),
            r#"{"state":"infinite"}"#
        );
        assert_eq!(serde_json::to_string(&LogReal::Finite(1.5)).unwrap(), r#"{"log_value":1.5}"#);
        let back: LogReal = serde_json::from_str(r#"{"log_value":-2.0}"#).unwrap();
        assert_eq!(back, LogReal::Finite(-2.0));
        assert!(serde_json::from_str::<LogReal>(r#"{"state":"weird"}"#).is_err());
    }

    #[test]
    fn infinite_floats_survive_json() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct Row {
            #[serde(with = "super::extended")]
            x: f64,
        }
        for x in [f64::NEG_INFINITY, -1.25, f64::INFINITY] {
            let text = serde_json::to_string(&Row { x }).unwrap();
            assert_eq!(serde_json::from_str::<Row>(&text).unwrap(), Row { x });
        }
        assert_eq!(serde_json::to_string(&Row { x: f64::INFINITY }).unwrap(), r#"{"x":"+inf"}"#);
    }

    proptest! {
        #[test]
        fn add_is_commutative_and_exact(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let x = LogReal::Finite(a);
            let y = LogReal::Finite(b);
            prop_assert_eq!((x + y).ln(), (y + x).ln());
            let direct = (a.exp() + b.exp()).ln();
            prop_assert!(((x + y).ln() - direct).abs() <= 1e-13 * direct.abs().max(1.0));
        }

        #[test]
        fn ln1p_then_expm1_round_trips(l in -600.0f64..5.0) {
            let x = LogReal::Finite(l);
            let back = x.ln_1p().exp_m1().ln();
            prop_assert!((back - l).abs() <= 1e-12 * l.abs().max(1.0));
        }
    }
}
