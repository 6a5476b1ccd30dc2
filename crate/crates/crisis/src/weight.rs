use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, ParseBigIntError};
use num_traits::{Signed, Zero};

use crate::message::{Digest, Message};

/// Number of low-order bits in every weight that come from the message hash.
///
/// One "unit" of weight is `2^TIEBREAK_BITS`; configured constants such as the
/// fixed base weight, the difficulty and the connectivity are given in units.
pub const TIEBREAK_BITS: u32 = 64;

/// Element of the weight group: arbitrary-precision integers under addition.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(BigInt);

impl Weight {
    pub fn zero() -> Self {
        Weight(BigInt::zero())
    }

    /// `n` whole units, i.e. `n · 2^TIEBREAK_BITS`.
    pub fn units(n: u64) -> Self {
        Weight(BigInt::from(n) << TIEBREAK_BITS)
    }

    pub fn from_raw(raw: impl Into<BigInt>) -> Self {
        Weight(raw.into())
    }

    pub fn raw(&self) -> &BigInt {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn abs(&self) -> Weight {
        Weight(self.0.abs())
    }

    /// Weight as a floating point number of units, for metrics only.
    pub fn as_units_f64(&self) -> f64 {
        let whole: BigInt = &self.0 >> TIEBREAK_BITS;
        let frac: BigInt = &self.0 - (&whole << TIEBREAK_BITS);
        let whole = whole.to_string().parse::<f64>().unwrap_or(f64::NAN);
        let frac = frac.to_string().parse::<f64>().unwrap_or(0.0);
        whole + frac / 2f64.powi(TIEBREAK_BITS as i32)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for Weight {
    type Err = ParseBigIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(Weight)
    }
}

impl Add for Weight {
    type Output = Weight;
    fn add(self, rhs: Weight) -> Weight {
        Weight(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a Weight> for &'a Weight {
    type Output = Weight;
    fn add(self, rhs: &'a Weight) -> Weight {
        Weight(&self.0 + &rhs.0)
    }
}

impl AddAssign<&Weight> for Weight {
    fn add_assign(&mut self, rhs: &Weight) {
        self.0 += &rhs.0;
    }
}

impl AddAssign for Weight {
    fn add_assign(&mut self, rhs: Weight) {
        self.0 += rhs.0;
    }
}

impl Sub for Weight {
    type Output = Weight;
    fn sub(self, rhs: Weight) -> Weight {
        Weight(self.0 - rhs.0)
    }
}

impl<'a> Sub<&'a Weight> for &'a Weight {
    type Output = Weight;
    fn sub(self, rhs: &'a Weight) -> Weight {
        Weight(&self.0 - &rhs.0)
    }
}

impl Neg for Weight {
    type Output = Weight;
    fn neg(self) -> Weight {
        Weight(-self.0)
    }
}

impl Mul<u64> for &Weight {
    type Output = Weight;
    fn mul(self, rhs: u64) -> Weight {
        Weight(&self.0 * rhs)
    }
}

impl Sum for Weight {
    fn sum<I: Iterator<Item = Weight>>(iter: I) -> Weight {
        iter.fold(Weight::zero(), |acc, w| acc + w)
    }
}

impl<'a> Sum<&'a Weight> for Weight {
    fn sum<I: Iterator<Item = &'a Weight>>(iter: I) -> Weight {
        iter.fold(Weight::zero(), |mut acc, w| {
            acc += w;
            acc
        })
    }
}

/// Assigns voting weight to messages.
pub trait WeightSystem: fmt::Debug + Send + Sync {
    fn weight(&self, message: &Message) -> Weight;

    /// Messages must weigh strictly more than this to be accepted.
    fn min_weight(&self) -> &Weight;
}

/// Low-order bits derived from the digest; always below one unit.
pub fn tiebreak(digest: &Digest) -> Weight {
    let bytes = digest.as_bytes();
    let mut tail = [0u8; 8];
    tail.copy_from_slice(&bytes[bytes.len() - 8..]);
    Weight(BigInt::from(u64::from_be_bytes(tail)))
}

/// Every message weighs the same configured base plus its tiebreak.
#[derive(Clone, Debug)]
pub struct FixedWeight {
    base: Weight,
    min: Weight,
}

impl FixedWeight {
    pub fn new(base_units: u64, min: Weight) -> Self {
        FixedWeight {
            base: Weight::units(base_units),
            min,
        }
    }

    pub fn base(&self) -> &Weight {
        &self.base
    }
}

impl WeightSystem for FixedWeight {
    fn weight(&self, message: &Message) -> Weight {
        &self.base + &tiebreak(message.digest())
    }

    fn min_weight(&self) -> &Weight {
        &self.min
    }
}

/// Hashcash-style: `2^(leading zero bits of the digest)` units plus tiebreak.
#[derive(Clone, Debug)]
pub struct PowWeight {
    min: Weight,
}

impl PowWeight {
    pub fn new(min: Weight) -> Self {
        PowWeight { min }
    }
}

pub fn leading_zero_bits(digest: &Digest) -> u32 {
    let mut zeros = 0;
    for byte in digest.as_bytes() {
        if *byte == 0 {
            zeros += 8;
        } else {
            zeros += byte.leading_zeros();
            break;
        }
    }
    zeros
}

impl WeightSystem for PowWeight {
    fn weight(&self, message: &Message) -> Weight {
        let digest = message.digest();
        let base = Weight(BigInt::from(1u8) << (leading_zero_bits(digest) + TIEBREAK_BITS));
        base + tiebreak(digest)
    }

    fn min_weight(&self) -> &Weight {
        &self.min
    }
}

/// Every message weighs exactly `n` units, with no tiebreak. Distinct messages
/// collide in weight, so this is for hand-built fixtures only.
#[derive(Clone, Debug)]
pub struct UnitWeight {
    units: Weight,
    min: Weight,
}

impl UnitWeight {
    pub fn new(n: u64) -> Self {
        UnitWeight {
            units: Weight::units(n),
            min: Weight::zero(),
        }
    }
}

impl WeightSystem for UnitWeight {
    fn weight(&self, _message: &Message) -> Weight {
        self.units.clone()
    }

    fn min_weight(&self) -> &Weight {
        &self.min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::{Nonce, VirtualId};

    fn msg(payload: &[u8]) -> Message {
        Message::new(Nonce::default(), VirtualId::default(), vec![], payload.to_vec()).unwrap()
    }

    #[test]
    fn fixed_weight_is_base_plus_sub_unit_tiebreak() {
        let ws = FixedWeight::new(8, Weight::zero());
        for i in 0..200u32 {
            let m = msg(&i.to_be_bytes());
            let w = ws.weight(&m);
            assert!(w >= Weight::units(8));
            assert!(w < Weight::units(9));
            assert_eq!(w, Weight::units(8) + tiebreak(m.digest()));
        }
    }

    #[test]
    fn pow_weight_without_leading_zeros_is_one_unit_plus_tiebreak() {
        let ws = PowWeight::new(Weight::zero());
        let m = (0u32..)
            .map(|i| msg(&i.to_be_bytes()))
            .find(|m| m.digest().as_bytes()[0] & 0x80 != 0)
            .unwrap();
        assert_eq!(leading_zero_bits(m.digest()), 0);
        assert_eq!(ws.weight(&m), Weight::units(1) + tiebreak(m.digest()));
    }

    #[test]
    fn pow_weight_grows_with_leading_zeros() {
        let ws = PowWeight::new(Weight::zero());
        let mut by_zeros: Vec<(u32, Weight)> = (0u32..4000)
            .map(|i| {
                let m = msg(&i.to_be_bytes());
                (leading_zero_bits(m.digest()), ws.weight(&m))
            })
            .collect();
        by_zeros.sort();
        for pair in by_zeros.windows(2) {
            if pair[0].0 < pair[1].0 {
                assert!(pair[0].1 < pair[1].1);
            }
        }
    }

    #[test]
    fn empty_sum_is_zero() {
        let empty: Vec<Weight> = vec![];
        assert_eq!(empty.iter().sum::<Weight>(), Weight::zero());
    }

    #[test]
    fn units_and_display_round_trip() {
        let w = Weight::units(3) + Weight::from_raw(17);
        assert_eq!(w.to_string().parse::<Weight>().unwrap(), w);
        assert!((Weight::units(3).as_units_f64() - 3.0).abs() < 1e-12);
    }
}
