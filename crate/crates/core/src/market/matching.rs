use std::cmp::Ordering;

use super::{clearing_price, ClearingMechanism, Order, Partner, Party, Side, Stage, Trade};
use crate::units::Quantity;

fn trade(stage: Stage, period: usize, buy: &Order, sell: &Order, price: f64, quantity: Quantity) -> Trade {
    Trade {
        period,
        stage,
        buyer: Party::Agent(buy.agent),
        seller: Party::Agent(sell.agent),
        price,
        quantity,
        loss: 0.0,
        fees: Default::default(),
    }
}

fn residual_orders(orders: &[Order], left: &[Quantity]) -> Vec<Order> {
    orders
        .iter()
        .zip(left)
        .filter(|(_, q)| !q.is_zero())
        .map(|(o, q)| Order {
            quantity: *q,
            ..o.clone()
        })
        .collect()
}

/// Stage 1: executes every buy/sell pair that named each other as preferred partner
/// and whose prices cross. Pairs are visited in ascending (buyer, seller) order;
/// partially filled orders keep their residual.
pub fn preference_match(
    orders: &[Order],
    mechanism: ClearingMechanism,
    reference_price: f64,
    period: usize,
) -> (Vec<Trade>, Vec<Order>) {
    let mut left: Vec<Quantity> = orders.iter().map(|o| o.quantity).collect();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (bi, b) in orders.iter().enumerate() {
        if b.side != Side::Buy {
            continue;
        }
        for (si, s) in orders.iter().enumerate() {
            let mutual =
                s.side == Side::Sell && b.partner == Partner::Agent(s.agent) && s.partner == Partner::Agent(b.agent);
            if mutual && b.price >= s.price {
                pairs.push((bi, si));
            }
        }
    }
    pairs.sort_by_key(|&(bi, si)| (orders[bi].agent, orders[si].agent, bi, si));

    let mut trades = Vec::new();
    for (bi, si) in pairs {
        let q = left[bi].min(left[si]);
        if q.is_zero() {
            continue;
        }
        let (b, s) = (&orders[bi], &orders[si]);
        let price = clearing_price(mechanism, b.price, s.price, reference_price);
        trades.push(trade(Stage::Preference, period, b, s, price, q));
        left[bi] -= q;
        left[si] -= q;
    }
    (trades, residual_orders(orders, &left))
}

/// Buy priority: price desc, reputation desc, agent asc.
fn buy_priority(a: &Order, b: &Order) -> Ordering {
    b.price
        .total_cmp(&a.price)
        .then(b.reputation.total_cmp(&a.reputation))
        .then(a.agent.cmp(&b.agent))
}

/// Sell priority: price asc, reputation desc, agent asc.
fn sell_priority(a: &Order, b: &Order) -> Ordering {
    a.price
        .total_cmp(&b.price)
        .then(b.reputation.total_cmp(&a.reputation))
        .then(a.agent.cmp(&b.agent))
}

/// Stage 2: double auction. Matches the head of the ranked buy and sell queues
/// while the bid meets the ask, carrying residuals forward.
pub fn price_match(
    orders: &[Order],
    mechanism: ClearingMechanism,
    reference_price: f64,
    period: usize,
) -> (Vec<Trade>, Vec<Order>) {
    let mut buys: Vec<usize> = (0..orders.len()).filter(|&i| orders[i].side == Side::Buy).collect();
    let mut sells: Vec<usize> = (0..orders.len()).filter(|&i| orders[i].side == Side::Sell).collect();
    // Index is the final key so duplicates from one agent still order totally.
    buys.sort_by(|&x, &y| buy_priority(&orders[x], &orders[y]).then(x.cmp(&y)));
    sells.sort_by(|&x, &y| sell_priority(&orders[x], &orders[y]).then(x.cmp(&y)));

    let mut left: Vec<Quantity> = orders.iter().map(|o| o.quantity).collect();
    let mut trades = Vec::new();
    let (mut bi, mut si) = (0, 0);
    while bi < buys.len() && si < sells.len() {
        let (b, s) = (buys[bi], sells[si]);
        if left[b].is_zero() {
            bi += 1;
            continue;
        }
        if left[s].is_zero() {
            si += 1;
            continue;
        }
        if orders[b].price < orders[s].price {
            break;
        }
        let q = left[b].min(left[s]);
        let price = clearing_price(mechanism, orders[b].price, orders[s].price, reference_price);
        trades.push(trade(Stage::Auction, period, &orders[b], &orders[s], price, q));
        left[b] -= q;
        left[s] -= q;
    }
    (trades, residual_orders(orders, &left))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order(agent: usize, side: Side, price: f64, kwh: f64, partner: Partner) -> Order {
        Order {
            agent,
            side,
            price,
            quantity: Quantity::from_kwh(kwh),
            partner,
            reputation: 0.5,
        }
    }

    #[test]
    fn no_mutual_preferences() {
        let orders = vec![
            order(0, Side::Buy, 200.0, 5.0, Partner::Agent(1)),
            order(1, Side::Sell, 100.0, 5.0, Partner::None),
        ];
        let (trades, rest) = preference_match(&orders, ClearingMechanism::Average, 0.0, 0);
        assert!(trades.is_empty());
        assert_eq!(rest, orders);
    }

    #[test]
    fn mutual_pair_partial_fill() {
        let orders = vec![
            order(0, Side::Buy, 200.0, 10.0, Partner::Agent(1)),
            order(1, Side::Sell, 100.0, 8.0, Partner::Agent(0)),
        ];
        let (trades, rest) = preference_match(&orders, ClearingMechanism::Average, 0.0, 0);
        assert_eq!(trades.len(), 1);
        assert_eq!(trades[0].price, 150.0);
        assert_eq!(trades[0].quantity, Quantity::from_kwh(8.0));
        assert_eq!(trades[0].stage, Stage::Preference);
        assert_eq!(rest.len(), 1);
        assert_eq!(rest[0].quantity, Quantity::from_kwh(2.0));
    }

    #[test]
    fn mutual_pair_without_price_overlap() {
        let orders = vec![
            order(0, Side::Buy, 90.0, 10.0, Partner::Agent(1)),
            order(1, Side::Sell, 100.0, 8.0, Partner::Agent(0)),
        ];
        let (trades, rest) = preference_match(&orders, ClearingMechanism::Average, 0.0, 0);
        assert!(trades.is_empty());
        assert_eq!(rest.len(), 2);
    }

    #[test]
    fn single_pair_auction() {
        let orders = vec![
            order(0, Side::Buy, 200.0, 10.0, Partner::None),
            order(1, Side::Sell, 100.0, 10.0, Partner::None),
        ];
        let (trades, rest) = price_match(&orders, ClearingMechanism::Average, 0.0, 0);
        assert_eq!(trades.len(), 1);
        assert_eq!(trades[0].price, 150.0);
        assert!(rest.is_empty());
    }

    #[test]
    fn low_bid_left_unmatched() {
        let orders = vec![
            order(0, Side::Buy, 200.0, 1.0, Partner::None),
            order(1, Side::Buy, 120.0, 1.0, Partner::None),
            order(2, Side::Sell, 150.0, 1.0, Partner::None),
        ];
        let (trades, rest) = price_match(&orders, ClearingMechanism::Average, 0.0, 0);
        assert_eq!(trades.len(), 1);
        assert_eq!(trades[0].buyer, Party::Agent(0));
        assert_eq!(trades[0].price, 175.0);
        assert_eq!(rest.len(), 1);
        assert_eq!(rest[0].agent, 1);
    }

    #[test]
    fn reputation_breaks_price_ties() {
        let mut a = order(0, Side::Buy, 200.0, 1.0, Partner::None);
        let mut b = order(1, Side::Buy, 200.0, 1.0, Partner::None);
        a.reputation = 0.2;
        b.reputation = 0.9;
        let s = order(2, Side::Sell, 100.0, 1.0, Partner::None);
        let (trades, _) = price_match(&[a, b, s], ClearingMechanism::Average, 0.0, 0);
        assert_eq!(trades[0].buyer, Party::Agent(1));
    }

    #[test]
    fn equal_everything_lowest_id_first() {
        let a = order(3, Side::Buy, 200.0, 1.0, Partner::None);
        let b = order(1, Side::Buy, 200.0, 1.0, Partner::None);
        let s = order(2, Side::Sell, 100.0, 1.0, Partner::None);
        let (trades, _) = price_match(&[a, b, s], ClearingMechanism::Average, 0.0, 0);
        assert_eq!(trades[0].buyer, Party::Agent(1));
    }
}
