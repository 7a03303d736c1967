//! Exact non-negative dyadic rationals `num / 2^exp`.
//!
//! Every probability produced by enumeration is a finite sum of terms
//! `2^-|p|`, so it is representable exactly. Keeping these sums exact makes
//! parallel reduction order irrelevant and lets tests compare estimates with
//! `==` instead of tolerances. Floats only appear at display time or after an
//! explicit division.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul};

use serde::{Serialize, Serializer};

/// Largest exponent we allow. Products of three depth-36 masses stay inside.
pub const MAX_EXP: u32 = 120;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Dyadic {
    num: u128,
    exp: u32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, exp: 0 };
    pub const ONE: Dyadic = Dyadic { num: 1, exp: 0 };

    pub fn new(num: u128, exp: u32) -> Self {
        assert!(exp <= MAX_EXP, "dyadic exponent {exp} exceeds {MAX_EXP}");
        Dyadic { num, exp }.normalized()
    }

    /// `2^-k`.
    pub fn pow2_neg(k: u32) -> Self {
        Dyadic::new(1, k)
    }

    pub fn from_int(n: u64) -> Self {
        Dyadic::new(n as u128, 0)
    }

    fn normalized(mut self) -> Self {
        if self.num == 0 {
            self.exp = 0;
        } else {
            let tz = self.num.trailing_zeros().min(self.exp);
            self.num >>= tz;
            self.exp -= tz;
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    /// Numerator in lowest terms.
    pub fn numer(&self) -> u128 {
        self.num
    }

    /// Power of two in the reduced denominator.
    pub fn denom_exp(&self) -> u32 {
        self.exp
    }

    /// Reduced denominator, when it fits.
    pub fn denom(&self) -> Option<u128> {
        1u128.checked_shl(self.exp)
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 * (-(self.exp as f64)).exp2()
    }

    /// `log2` of the value; `-inf` for zero.
    pub fn log2(&self) -> f64 {
        if self.num == 0 {
            return f64::NEG_INFINITY;
        }
        (self.num as f64).log2() - self.exp as f64
    }

    fn aligned(self, exp: u32) -> u128 {
        let shift = exp - self.exp;
        let out = self.num.checked_shl(shift).unwrap_or(0);
        assert!(
            self.num == 0 || out >> shift == self.num,
            "dyadic overflow aligning to 2^-{exp}"
        );
        out
    }

    /// `self - other`, or `None` if that would be negative.
    pub fn checked_sub(&self, other: &Dyadic) -> Option<Dyadic> {
        let e = self.exp.max(other.exp);
        let num = self.aligned(e).checked_sub(other.aligned(e))?;
        Some(Dyadic { num, exp: e }.normalized())
    }

    /// Exact ratio `self / other` rounded to `f64`.
    pub fn ratio(&self, other: &Dyadic) -> f64 {
        if self == other {
            return 1.0;
        }
        let e = self.exp.max(other.exp);
        // Both sides share the scale 2^-e, so only the numerators matter.
        let (a, b) = (self.aligned(e), other.aligned(e));
        a as f64 / b as f64
    }
}

impl Add for Dyadic {
    type Output = Dyadic;

    fn add(self, rhs: Dyadic) -> Dyadic {
        if rhs.num == 0 {
            return self;
        }
        if self.num == 0 {
            return rhs;
        }
        let e = self.exp.max(rhs.exp);
        let num = self
            .aligned(e)
            .checked_add(rhs.aligned(e))
            .expect("dyadic addition overflow");
        Dyadic { num, exp: e }.normalized()
    }
}

impl AddAssign for Dyadic {
    fn add_assign(&mut self, rhs: Dyadic) {
        *self = *self + rhs;
    }
}

impl Mul for Dyadic {
    type Output = Dyadic;

    fn mul(self, rhs: Dyadic) -> Dyadic {
        if self.num == 0 || rhs.num == 0 {
            return Dyadic::ZERO;
        }
        let num = self.num.checked_mul(rhs.num).expect("dyadic product overflow");
        Dyadic::new(num, self.exp + rhs.exp)
    }
}

impl Sum for Dyadic {
    fn sum<I: Iterator<Item = Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::ZERO, |a, b| a + b)
    }
}

impl<'a> Sum<&'a Dyadic> for Dyadic {
    fn sum<I: Iterator<Item = &'a Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::ZERO, |a, b| a + *b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let e = self.exp.max(other.exp);
        self.aligned(e).cmp(&other.aligned(e))
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/2^{}", self.num, self.exp)
        }
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Serialized as `{"num": .., "den": .., "value": ..}`; `den` is a string
/// once it no longer fits in 64 bits.
impl Serialize for Dyadic {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Dyadic", 3)?;
        if self.num <= u64::MAX as u128 {
            st.serialize_field("num", &(self.num as u64))?;
        } else {
            st.serialize_field("num", &self.num.to_string())?;
        }
        if self.exp < 64 {
            st.serialize_field("den", &(1u64 << self.exp))?;
        } else {
            st.serialize_field("den", &format!("2^{}", self.exp))?;
        }
        st.serialize_field("value", &self.to_f64())?;
        st.end()
    }
}
