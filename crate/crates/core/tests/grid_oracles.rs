#![allow(clippy::needless_range_loop)]

use lemsim_core::GridState;
use proptest::prelude::*;

/// Connected graph: a random spanning tree plus extra edges.
fn graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (2usize..=10).prop_flat_map(|n| {
        let tree = proptest::collection::vec((any::<prop::sample::Index>(), 0.5f64..5.0), n - 1);
        let extra = proptest::collection::vec((0..n, 0..n, 0.5f64..5.0), 0..n);
        (Just(n), tree, extra).prop_map(|(n, tree, extra)| {
            let mut edges: Vec<(usize, usize, f64)> = tree
                .into_iter()
                .enumerate()
                .map(|(i, (parent, len))| (parent.index(i + 1), i + 1, len))
                .collect();
            for (u, v, len) in extra {
                let dup = edges.iter().any(|&(a, b, _)| (a, b) == (u, v) || (a, b) == (v, u));
                if u != v && !dup {
                    edges.push((u, v, len));
                }
            }
            (n, edges)
        })
    })
}

fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(u, v, l) in edges {
        d[u][v] = d[u][v].min(l);
        d[v][u] = d[v][u].min(l);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

fn build(n: usize, edges: &[(usize, usize, f64)]) -> GridState {
    GridState::from_edge_list(n, edges, (0..n).collect(), None, 1000.0, 0.01, 0).unwrap()
}

fn edge_between(edges: &[(usize, usize, f64)], a: usize, b: usize) -> usize {
    edges
        .iter()
        .position(|&(u, v, _)| (u, v) == (a, b) || (u, v) == (b, a))
        .expect("consecutive path nodes share an edge")
}

proptest! {
    #[test]
    fn distances_match_floyd_warshall((n, edges) in graph()) {
        let grid = build(n, &edges);
        let fw = floyd_warshall(n, &edges);
        for i in 0..n {
            for j in 0..n {
                prop_assert!((grid.node_distance(i, j) - fw[i][j]).abs() < 1e-9);
                prop_assert_eq!(grid.electrical_distance(i, j), grid.electrical_distance(j, i));
            }
        }
    }

    #[test]
    fn routed_paths_are_shortest((n, edges) in graph()) {
        let grid = build(n, &edges);
        let fw = floyd_warshall(n, &edges);
        for i in 0..n {
            for j in 0..n {
                let nodes = grid.path_nodes(i, j);
                prop_assert_eq!(nodes.first().copied(), Some(i));
                prop_assert_eq!(nodes.last().copied(), Some(j));
                let len: f64 = nodes.windows(2).map(|w| edges[edge_between(&edges, w[0], w[1])].2).sum();
                prop_assert!((len - fw[i][j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn edge_flows_sum_trade_paths(
        (n, edges) in graph(),
        trades in proptest::collection::vec((0usize..10, 0usize..10, 0.1f64..50.0), 0..20),
    ) {
        let mut grid = build(n, &edges);
        let mut expected = vec![0.0; edges.len()];
        for &(a, b, q) in &trades {
            let (a, b) = (a % n, b % n);
            grid.apply_flow(a, b, q);
            for w in grid.path_nodes(a, b).windows(2) {
                expected[edge_between(&edges, w[0], w[1])] += q;
            }
        }
        for (e, want) in grid.edges().iter().zip(&expected) {
            prop_assert!((e.flow - want).abs() < 1e-9);
        }
        let (per_edge, avg) = grid.congestion();
        prop_assert!(per_edge.iter().all(|c| (0.0..=1.0).contains(c)));
        prop_assert!((0.0..=1.0).contains(&avg));
        grid.reset_flows();
        prop_assert!(grid.edges().iter().all(|e| e.flow == 0.0));
    }
}
