use lemsim_core::{
    build_topology, clear_period, ClearingContext, ClearingMechanism, DsoState, FeeConfig, Order, Partner, Party,
    Quantity, Side, TopologyKind, Trade,
};
use proptest::prelude::*;

const N: usize = 12;

fn order() -> impl Strategy<Value = (bool, f64, u64, u8, usize, f64)> {
    (
        any::<bool>(),
        35.0f64..=280.0,
        100_000u64..50_000_000,
        0u8..10,
        0..N,
        0.0f64..=1.0,
    )
}

fn book() -> impl Strategy<Value = Vec<Order>> {
    proptest::collection::vec(order(), 0..=N).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(agent, (buy, price, micro, p, peer, reputation))| Order {
                agent,
                side: if buy { Side::Buy } else { Side::Sell },
                price,
                quantity: Quantity::from_micro_kwh(micro),
                partner: match p {
                    0..=4 => Partner::None,
                    5..=8 => Partner::Agent(peer),
                    _ => Partner::Dso,
                },
                reputation,
            })
            .collect()
    })
}

fn mechanism() -> impl Strategy<Value = ClearingMechanism> {
    prop_oneof![
        Just(ClearingMechanism::Average),
        Just(ClearingMechanism::PayAsBid),
        Just(ClearingMechanism::PayAsOffer),
        Just(ClearingMechanism::Nash),
        Just(ClearingMechanism::Proportional),
    ]
}

fn clear(orders: &[Order], mechanism: ClearingMechanism, reference: f64, balance: f64) -> (Vec<Trade>, DsoState) {
    let mut grid = build_topology(TopologyKind::Mesh, N, 1200.0).unwrap();
    let mut dso = DsoState::default();
    let ctx = ClearingContext {
        period: 3,
        mechanism,
        reference_price: reference,
        fit: 50.0,
        utility: 250.0,
        fees: FeeConfig::default(),
        grid_balance: balance,
    };
    let out = clear_period(orders, &ctx, &mut grid, &mut dso);
    let p2p: f64 = out.trades.iter().filter(|t| t.is_p2p()).map(|t| t.quantity.kwh()).sum();
    assert!((out.stats.p2p_volume - p2p).abs() < 1e-9);
    assert_eq!(out.stats.trade_count, out.trades.len());
    (out.trades, dso)
}

proptest! {
    #[test]
    fn every_order_fills_exactly(orders in book(), m in mechanism(), r in 35.0f64..280.0, b in -50.0f64..50.0) {
        let (trades, dso) = clear(&orders, m, r, b);
        for o in &orders {
            let me = Party::Agent(o.agent);
            let filled: Quantity = trades
                .iter()
                .filter(|t| if o.side == Side::Buy { t.buyer == me } else { t.seller == me })
                .map(|t| t.quantity)
                .sum();
            prop_assert_eq!(filled, o.quantity);
        }
        // The DSO's ledger matches its trades.
        let sold: Quantity = trades.iter().filter(|t| t.seller == Party::Dso).map(|t| t.quantity).sum();
        let bought: Quantity = trades.iter().filter(|t| t.buyer == Party::Dso).map(|t| t.quantity).sum();
        prop_assert_eq!((dso.energy_sold, dso.energy_bought), (sold, bought));
    }

    #[test]
    fn prices_respect_orders_and_tariffs(orders in book(), m in mechanism(), r in 35.0f64..280.0) {
        let (trades, _) = clear(&orders, m, r, 0.0);
        let price = |p: Party| orders.iter().find(|o| Party::Agent(o.agent) == p).unwrap().price;
        for t in &trades {
            prop_assert!(t.quantity > Quantity::ZERO);
            prop_assert!(t.loss >= 0.0 && t.loss <= t.quantity.kwh());
            match (t.seller, t.buyer) {
                (Party::Dso, _) => prop_assert_eq!(t.price, 250.0),
                (_, Party::Dso) => prop_assert_eq!(t.price, 50.0),
                (s, b) => prop_assert!(price(s) <= t.price && t.price <= price(b)),
            }
        }
    }

    #[test]
    fn dso_bound_orders_never_trade_peer_to_peer(orders in book()) {
        let (trades, _) = clear(&orders, ClearingMechanism::Average, 150.0, 0.0);
        for o in orders.iter().filter(|o| o.partner == Partner::Dso) {
            let me = Party::Agent(o.agent);
            prop_assert!(trades.iter().filter(|t| t.buyer == me || t.seller == me).all(|t| !t.is_p2p()));
        }
    }

    #[test]
    fn clearing_is_deterministic(orders in book(), m in mechanism()) {
        prop_assert_eq!(clear(&orders, m, 150.0, 0.0).0, clear(&orders, m, 150.0, 0.0).0);
    }
}
