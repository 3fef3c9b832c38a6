use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Rule mapping a matched (bid, ask) pair to a transaction price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClearingMechanism {
    /// Midpoint of bid and ask. `bid_ask_spread` is accepted as an alias.
    #[serde(alias = "bid_ask_spread")]
    Average,
    /// Executed at the seller's price.
    PayAsBid,
    /// Executed at the buyer's price.
    PayAsOffer,
    /// Equal split of the surplus. Numerically identical to `Average`.
    Nash,
    /// Surplus split in proportion to each side's distance from a reference price.
    Proportional,
}

impl FromStr for ClearingMechanism {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "average" | "bid_ask_spread" => Ok(Self::Average),
            "pay_as_bid" => Ok(Self::PayAsBid),
            "pay_as_offer" => Ok(Self::PayAsOffer),
            "nash" => Ok(Self::Nash),
            "proportional" => Ok(Self::Proportional),
            other => Err(SimError::config(
                "market.mechanism",
                format!("unknown clearing mechanism `{other}`"),
            )),
        }
    }
}

impl fmt::Display for ClearingMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Average => "average",
            Self::PayAsBid => "pay_as_bid",
            Self::PayAsOffer => "pay_as_offer",
            Self::Nash => "nash",
            Self::Proportional => "proportional",
        })
    }
}

/// Transaction price for a compatible pair (`p_buy >= p_sell`).
///
/// Proportional pricing falls back to the midpoint when `p_ref` is outside
/// `[p_sell, p_buy]` or the pair has no surplus to split.
pub fn clearing_price(mechanism: ClearingMechanism, p_buy: f64, p_sell: f64, p_ref: f64) -> f64 {
    let midpoint = (p_buy + p_sell) / 2.0;
    match mechanism {
        ClearingMechanism::Average => midpoint,
        ClearingMechanism::Nash => p_sell + (p_buy - p_sell) / 2.0,
        ClearingMechanism::PayAsBid => p_sell,
        ClearingMechanism::PayAsOffer => p_buy,
        ClearingMechanism::Proportional => {
            let buyer_share = p_buy - p_ref;
            let seller_share = p_ref - p_sell;
            let denom = buyer_share + seller_share;
            if buyer_share < 0.0 || seller_share < 0.0 || denom <= 0.0 {
                midpoint
            } else {
                p_sell + buyer_share / denom * (p_buy - p_sell)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClearingMechanism::*;

    #[test]
    fn unit_values() {
        assert_eq!(clearing_price(Average, 200.0, 100.0, 0.0), 150.0);
        assert_eq!(clearing_price(Nash, 200.0, 100.0, 0.0), 150.0);
        assert_eq!(clearing_price(PayAsBid, 200.0, 100.0, 0.0), 100.0);
        assert_eq!(clearing_price(PayAsOffer, 200.0, 100.0, 0.0), 200.0);
        assert_eq!(clearing_price(Proportional, 200.0, 100.0, 120.0), 180.0);
    }

    #[test]
    fn proportional_at_midpoint_matches_average() {
        assert_eq!(
            clearing_price(Proportional, 200.0, 100.0, 150.0),
            clearing_price(Average, 200.0, 100.0, 150.0)
        );
    }

    #[test]
    fn proportional_falls_back_outside_band() {
        assert_eq!(clearing_price(Proportional, 200.0, 100.0, 90.0), 150.0);
        assert_eq!(clearing_price(Proportional, 120.0, 120.0, 120.0), 120.0);
    }

    #[test]
    fn parsing() {
        assert_eq!("bid-ask-spread".parse::<ClearingMechanism>().unwrap(), Average);
        assert_eq!("PAY_AS_OFFER".parse::<ClearingMechanism>().unwrap(), PayAsOffer);
        assert!("vickrey".parse::<ClearingMechanism>().is_err());
    }
}
