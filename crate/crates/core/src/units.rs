//! Unit conventions.
//!
//! Energy is carried in kWh, prices in $/MWh and money in $. Inside the market,
//! order and trade quantities are fixed-point [`Quantity`] values so that partial
//! fills and residual carry-over are exact.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub, SubAssign};

/// kWh × $/MWh → $.
pub const KWH_PRICE_TO_DOLLARS: f64 = 1e-3;

/// Money value of `kwh` traded at `price_per_mwh`.
#[inline]
pub fn value_dollars(kwh: f64, price_per_mwh: f64) -> f64 {
    kwh * price_per_mwh * KWH_PRICE_TO_DOLLARS
}

/// Energy quantity in micro-kWh (1 mWh resolution).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Quantity(u64);

impl Quantity {
    pub const ZERO: Quantity = Quantity(0);
    pub const UNITS_PER_KWH: f64 = 1e6;

    pub const fn from_micro_kwh(units: u64) -> Self {
        Quantity(units)
    }

    /// Rounds down to the nearest representable quantity; negative and non-finite
    /// inputs map to zero.
    pub fn from_kwh_floor(kwh: f64) -> Self {
        if !kwh.is_finite() || kwh <= 0.0 {
            return Quantity::ZERO;
        }
        Quantity((kwh * Self::UNITS_PER_KWH).floor() as u64)
    }

    /// Nearest representable quantity.
    pub fn from_kwh(kwh: f64) -> Self {
        if !kwh.is_finite() || kwh <= 0.0 {
            return Quantity::ZERO;
        }
        Quantity((kwh * Self::UNITS_PER_KWH).round() as u64)
    }

    pub const fn micro_kwh(self) -> u64 {
        self.0
    }

    pub fn kwh(self) -> f64 {
        self.0 as f64 / Self::UNITS_PER_KWH
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add for Quantity {
    type Output = Quantity;
    fn add(self, rhs: Self) -> Self {
        Quantity(self.0 + rhs.0)
    }
}

impl AddAssign for Quantity {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl Sub for Quantity {
    type Output = Quantity;
    fn sub(self, rhs: Self) -> Self {
        Quantity(self.0 - rhs.0)
    }
}

impl SubAssign for Quantity {
    fn sub_assign(&mut self, rhs: Self) {
        self.0 -= rhs.0;
    }
}

impl Sum for Quantity {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Quantity::ZERO, Add::add)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_never_exceeds_input() {
        for kwh in [0.1, 0.3, 15.0, 199.999_999_9, 1e-7] {
            assert!(Quantity::from_kwh_floor(kwh).kwh() <= kwh);
        }
        assert_eq!(Quantity::from_kwh_floor(-3.0), Quantity::ZERO);
        assert_eq!(Quantity::from_kwh_floor(f64::NAN), Quantity::ZERO);
    }

    #[test]
    fn display_is_fixed_precision() {
        assert_eq!(Quantity::from_kwh(12.5).to_string(), "12.500000");
        assert_eq!(Quantity::from_micro_kwh(7).to_string(), "0.000007");
    }

    #[test]
    fn dollar_conversion() {
        // 10 kWh at 150 $/MWh
        assert!((value_dollars(10.0, 150.0) - 1.5).abs() < 1e-12);
    }
}
