use serde::{Deserialize, Serialize};

use super::{Order, Party, Side, Stage, Trade};
use crate::units::Quantity;

/// Running position of the distribution system operator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DsoState {
    pub energy_sold: Quantity,
    pub energy_bought: Quantity,
    /// $
    pub fee_revenue: f64,
}

impl DsoState {
    /// Net energy position, sold minus bought (kWh). Positive: net seller.
    pub fn balance(&self) -> f64 {
        (self.energy_sold.micro_kwh() as f64 - self.energy_bought.micro_kwh() as f64) / Quantity::UNITS_PER_KWH
    }
}

/// Clears every residual order against the DSO: sells at the feed-in tariff,
/// buys at the utility price.
pub fn dso_clear(unmatched: &[Order], fit: f64, utility: f64, period: usize, dso: &mut DsoState) -> Vec<Trade> {
    unmatched
        .iter()
        .filter(|o| !o.quantity.is_zero())
        .map(|o| {
            let (buyer, seller, price) = match o.side {
                Side::Sell => {
                    dso.energy_bought += o.quantity;
                    (Party::Dso, Party::Agent(o.agent), fit)
                }
                Side::Buy => {
                    dso.energy_sold += o.quantity;
                    (Party::Agent(o.agent), Party::Dso, utility)
                }
            };
            Trade {
                period,
                stage: Stage::Dso,
                buyer,
                seller,
                price,
                quantity: o.quantity,
                loss: 0.0,
                fees: Default::default(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Partner;

    fn order(agent: usize, side: Side, kwh: f64) -> Order {
        Order {
            agent,
            side,
            price: 100.0,
            quantity: Quantity::from_kwh(kwh),
            partner: Partner::None,
            reputation: 0.5,
        }
    }

    #[test]
    fn nothing_to_clear() {
        let mut dso = DsoState::default();
        assert!(dso_clear(&[], 50.0, 250.0, 0, &mut dso).is_empty());
        assert_eq!(dso.balance(), 0.0);
    }

    #[test]
    fn unmatched_sell_is_bought_at_fit() {
        let mut dso = DsoState::default();
        let trades = dso_clear(&[order(0, Side::Sell, 10.0)], 50.0, 250.0, 3, &mut dso);
        assert_eq!(trades.len(), 1);
        assert_eq!(trades[0].buyer, Party::Dso);
        assert_eq!(trades[0].price, 50.0);
        assert_eq!(dso.balance(), -10.0);
    }

    #[test]
    fn mixed_residuals_net_out() {
        let mut dso = DsoState::default();
        let trades = dso_clear(
            &[order(0, Side::Buy, 4.0), order(1, Side::Sell, 10.0)],
            50.0,
            250.0,
            0,
            &mut dso,
        );
        assert_eq!(trades[0].price, 250.0);
        assert_eq!(dso.balance(), -6.0);
    }
}
