//! Distribution grid: weighted undirected graph with per-edge capacity and flow,
//! shortest-path electrical distance, transmission losses, congestion and zones.
//!
//! Feeder fixtures are edge lists with lengths in kft. Node indices follow the
//! published bus labels in this order:
//!
//! * IEEE 13: 650, 632, 633, 634, 645, 646, 671, 692, 675, 684, 611, 652, 680
//! * IEEE 34: 800, 802, 806, 808, 810, 812, 814, 850, 816, 818, 820, 822, 824,
//!   826, 828, 830, 854, 856, 852, 832, 888, 890, 858, 864, 834, 842, 844, 846,
//!   848, 860, 836, 840, 862, 838
//!
//! Zero-length devices (transformers, switches, regulators) carry a nominal
//! length of 0.1 kft (IEEE 13) or 0.01 kft (IEEE 34) so capacity allocation stays finite.

use std::collections::VecDeque;
use std::io::Read;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};

use crate::agent::{AgentId, AgentState};
use crate::error::{Result, SimError};

const IEEE13_EDGES: &str = include_str!("../fixtures/ieee13.csv");
const IEEE13_ZONES: &str = include_str!("../fixtures/ieee13_zones.csv");
const IEEE34_EDGES: &str = include_str!("../fixtures/ieee34.csv");

/// Relative tolerance when comparing path lengths for tie-breaking.
const PATH_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Mesh,
    Ring,
    Line,
    Ieee13,
    Ieee34,
}

impl std::str::FromStr for TopologyKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mesh" => Ok(TopologyKind::Mesh),
            "ring" => Ok(TopologyKind::Ring),
            "line" => Ok(TopologyKind::Line),
            "ieee13" => Ok(TopologyKind::Ieee13),
            "ieee34" => Ok(TopologyKind::Ieee34),
            other => Err(SimError::config("grid.topology", format!("unknown topology `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub length: f64,
    /// kW
    pub capacity: f64,
    /// kW, reset every period
    pub flow: f64,
}

/// Grid section of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub topology: TopologyKind,
    /// kW
    pub total_capacity: f64,
    /// Loss per unit distance.
    pub loss_factor: f64,
    pub dso_node: usize,
    /// Per-edge length override, in edge order.
    pub edge_lengths: Option<Vec<f64>>,
    /// Zone label per node; `None` puts every node in zone 0.
    pub zones: Option<Vec<usize>>,
    /// Explicit agent placement; defaults to round-robin.
    pub agent_nodes: Option<Vec<usize>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            topology: TopologyKind::Mesh,
            total_capacity: 1200.0,
            loss_factor: 0.01,
            dso_node: 0,
            edge_lengths: None,
            zones: None,
            agent_nodes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    node_count: usize,
    edges: Vec<Edge>,
    zones: Vec<usize>,
    total_capacity: f64,
    loss_factor: f64,
    agent_nodes: Vec<usize>,
    dso_node: usize,
    distances: Vec<Vec<f64>>,
    /// `next_hop[s][t]`: (next node, edge id) on the canonical s→t path.
    next_hop: Vec<Vec<Option<(usize, usize)>>>,
}

/// Edge list (with unit lengths) for a procedural topology of `n` nodes.
fn procedural_edges(kind: TopologyKind, n: usize) -> Vec<(usize, usize, f64)> {
    match kind {
        TopologyKind::Line => (0..n.saturating_sub(1)).map(|i| (i, i + 1, 1.0)).collect(),
        TopologyKind::Ring => {
            let mut e: Vec<_> = (0..n.saturating_sub(1)).map(|i| (i, i + 1, 1.0)).collect();
            if n > 2 {
                e.push((n - 1, 0, 1.0));
            }
            e
        }
        TopologyKind::Mesh => {
            // Rectangular lattice, row-major, last row possibly partial.
            let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
            let mut e = Vec::new();
            for i in 0..n {
                if (i + 1) % cols != 0 && i + 1 < n {
                    e.push((i, i + 1, 1.0));
                }
                if i + cols < n {
                    e.push((i, i + cols, 1.0));
                }
            }
            e
        }
        TopologyKind::Ieee13 | TopologyKind::Ieee34 => unreachable!("fixed feeder"),
    }
}

/// Parses an edge list CSV with columns `u,v,length`.
pub fn load_edge_list<R: Read>(reader: R) -> Result<Vec<(usize, usize, f64)>> {
    #[derive(Deserialize)]
    struct Row {
        u: usize,
        v: usize,
        length: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<Row>()
        .map(|r| {
            r.map(|r| (r.u, r.v, r.length))
                .map_err(|e| SimError::Parse(e.to_string()))
        })
        .collect()
}

/// Parses a zone CSV with columns `node,zone` into a per-node zone vector.
pub fn load_zones<R: Read>(reader: R, node_count: usize) -> Result<Vec<usize>> {
    #[derive(Deserialize)]
    struct Row {
        node: usize,
        zone: usize,
    }
    let mut zones = vec![None; node_count];
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| SimError::Parse(e.to_string()))?;
        let slot = zones
            .get_mut(row.node)
            .ok_or_else(|| SimError::Parse(format!("zone row for unknown node {}", row.node)))?;
        *slot = Some(row.zone);
    }
    zones
        .into_iter()
        .enumerate()
        .map(|(n, z)| z.ok_or_else(|| SimError::Parse(format!("node {n} has no zone"))))
        .collect()
}

/// Fixed-feeder edge list.
pub fn feeder_edges(kind: TopologyKind) -> Option<Vec<(usize, usize, f64)>> {
    let text = match kind {
        TopologyKind::Ieee13 => IEEE13_EDGES,
        TopologyKind::Ieee34 => IEEE34_EDGES,
        _ => return None,
    };
    Some(load_edge_list(text.as_bytes()).expect("bundled fixture parses"))
}

/// Two-zone split of the IEEE 13 feeder (source side / load side of 632–671).
pub fn ieee13_zones() -> Vec<usize> {
    load_zones(IEEE13_ZONES.as_bytes(), 13).expect("bundled fixture parses")
}

/// Builds a grid of the requested shape with default loss factor and a single zone.
pub fn build_topology(kind: TopologyKind, n_agents: usize, total_capacity: f64) -> Result<GridState> {
    GridState::build(
        &GridConfig {
            topology: kind,
            total_capacity,
            ..GridConfig::default()
        },
        n_agents,
    )
}

impl GridState {
    pub fn build(config: &GridConfig, n_agents: usize) -> Result<Self> {
        if n_agents < 2 {
            return Err(SimError::config("agents.count", "need at least 2 agents"));
        }
        let (node_count, mut edges) = match config.topology {
            TopologyKind::Ieee13 | TopologyKind::Ieee34 => {
                let edges = feeder_edges(config.topology).expect("fixed feeder");
                (edges.len() + 1, edges)
            }
            kind => (n_agents, procedural_edges(kind, n_agents)),
        };
        if n_agents > node_count && config.agent_nodes.is_none() {
            return Err(SimError::config(
                "agents.count",
                format!(
                    "{n_agents} agents exceed the {node_count} nodes of {:?}",
                    config.topology
                ),
            ));
        }
        if let Some(lengths) = &config.edge_lengths {
            if lengths.len() != edges.len() {
                return Err(SimError::config(
                    "grid.edge_lengths",
                    format!("expected {} lengths, got {}", edges.len(), lengths.len()),
                ));
            }
            for (e, l) in edges.iter_mut().zip(lengths) {
                e.2 = *l;
            }
        }
        let agent_nodes = match &config.agent_nodes {
            Some(nodes) => nodes.clone(),
            None => (0..n_agents).map(|i| i % node_count).collect(),
        };
        if agent_nodes.len() != n_agents {
            return Err(SimError::config("grid.agent_nodes", "one node per agent required"));
        }
        Self::from_edge_list(
            node_count,
            &edges,
            agent_nodes,
            config.zones.clone(),
            config.total_capacity,
            config.loss_factor,
            config.dso_node,
        )
    }

    /// Assembles a grid from an explicit edge list. Validates connectivity, lengths,
    /// placement and zone contiguity.
    pub fn from_edge_list(
        node_count: usize,
        edge_list: &[(usize, usize, f64)],
        agent_nodes: Vec<usize>,
        zones: Option<Vec<usize>>,
        total_capacity: f64,
        loss_factor: f64,
        dso_node: usize,
    ) -> Result<Self> {
        if !(total_capacity.is_finite() && total_capacity > 0.0) {
            return Err(SimError::config("grid.total_capacity", "must be > 0"));
        }
        if !(loss_factor.is_finite() && loss_factor >= 0.0) {
            return Err(SimError::config("grid.loss_factor", "must be >= 0"));
        }
        if dso_node >= node_count {
            return Err(SimError::config("grid.dso_node", "node out of range"));
        }
        for (i, &(u, v, len)) in edge_list.iter().enumerate() {
            if u >= node_count || v >= node_count || u == v {
                return Err(SimError::config(format!("grid.edges[{i}]"), "invalid endpoints"));
            }
            if !(len.is_finite() && len > 0.0) {
                return Err(SimError::config(format!("grid.edges[{i}]"), "length must be > 0"));
            }
        }
        if let Some(&bad) = agent_nodes.iter().find(|&&n| n >= node_count) {
            return Err(SimError::config("grid.agent_nodes", format!("node {bad} out of range")));
        }

        // Capacity inversely proportional to length, shortest edge at nominal.
        let max_admittance = edge_list.iter().map(|e| 1.0 / e.2).fold(0.0f64, f64::max);
        let edges: Vec<Edge> = edge_list
            .iter()
            .map(|&(u, v, length)| Edge {
                u,
                v,
                length,
                capacity: total_capacity * (1.0 / length) / max_admittance,
                flow: 0.0,
            })
            .collect();

        let mut graph = UnGraph::<(), f64>::with_capacity(node_count, edges.len());
        let ids: Vec<NodeIndex> = (0..node_count).map(|_| graph.add_node(())).collect();
        for e in &edges {
            graph.add_edge(ids[e.u], ids[e.v], e.length);
        }
        let mut distances: Vec<Vec<f64>> = ids
            .iter()
            .map(|&s| {
                let found = dijkstra(&graph, s, None, |e| *e.weight());
                ids.iter()
                    .map(|n| found.get(n).copied().unwrap_or(f64::INFINITY))
                    .collect()
            })
            .collect();
        if distances[0].iter().any(|d| d.is_infinite()) {
            return Err(SimError::config("grid", "graph is not connected"));
        }
        // Summation order differs by direction; mirror the upper triangle so
        // d(a, b) == d(b, a) bit for bit.
        for a in 1..node_count {
            let (upper, lower) = distances.split_at_mut(a);
            for (b, row) in upper.iter().enumerate() {
                lower[0][b] = row[a];
            }
        }

        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); node_count];
        for (id, e) in edges.iter().enumerate() {
            adjacency[e.u].push((e.v, id));
            adjacency[e.v].push((e.u, id));
        }
        for nbrs in &mut adjacency {
            nbrs.sort_by(|a, b| a.0.cmp(&b.0).then(edges[a.1].length.total_cmp(&edges[b.1].length)));
        }
        // Smallest-id neighbour on some shortest path gives the lexicographically
        // smallest node sequence.
        let next_hop = (0..node_count)
            .map(|s| {
                (0..node_count)
                    .map(|t| {
                        if s == t {
                            return None;
                        }
                        let target = distances[s][t];
                        adjacency[s].iter().copied().find(|&(v, id)| {
                            let via = edges[id].length + distances[v][t];
                            (via - target).abs() <= PATH_EPS * target.max(1.0)
                        })
                    })
                    .collect()
            })
            .collect();

        let zones = zones.unwrap_or_else(|| vec![0; node_count]);
        validate_zones(&zones, &adjacency, node_count)?;

        Ok(GridState {
            node_count,
            edges,
            zones,
            total_capacity,
            loss_factor,
            agent_nodes,
            dso_node,
            distances,
            next_hop,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn total_capacity(&self) -> f64 {
        self.total_capacity
    }

    pub fn loss_factor(&self) -> f64 {
        self.loss_factor
    }

    pub fn dso_node(&self) -> usize {
        self.dso_node
    }

    pub fn agent_node(&self, agent: AgentId) -> usize {
        self.agent_nodes[agent]
    }

    pub fn agent_nodes(&self) -> &[usize] {
        &self.agent_nodes
    }

    pub fn zone_of(&self, node: usize) -> usize {
        self.zones[node]
    }

    pub fn node_distance(&self, a: usize, b: usize) -> f64 {
        self.distances[a][b]
    }

    /// Shortest-path length between two agents' nodes.
    pub fn electrical_distance(&self, i: AgentId, j: AgentId) -> f64 {
        self.node_distance(self.agent_node(i), self.agent_node(j))
    }

    /// Largest distance between any two agents.
    pub fn max_agent_distance(&self) -> f64 {
        let nodes = &self.agent_nodes;
        nodes
            .iter()
            .flat_map(|&a| nodes.iter().map(move |&b| (a, b)))
            .map(|(a, b)| self.node_distance(a, b))
            .fold(0.0, f64::max)
    }

    /// Edge ids of the canonical shortest path between two nodes.
    pub fn path_edges(&self, from: usize, to: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut at = from;
        while at != to {
            let (next, edge) = self.next_hop[at][to].expect("connected grid");
            path.push(edge);
            at = next;
        }
        path
    }

    /// Node sequence of the canonical shortest path.
    pub fn path_nodes(&self, from: usize, to: usize) -> Vec<usize> {
        let mut nodes = vec![from];
        let mut at = from;
        while at != to {
            at = self.next_hop[at][to].expect("connected grid").0;
            nodes.push(at);
        }
        nodes
    }

    pub fn same_zone_nodes(&self, a: usize, b: usize) -> bool {
        self.zones[a] == self.zones[b]
    }

    pub fn same_zone(&self, i: AgentId, j: AgentId) -> bool {
        self.same_zone_nodes(self.agent_node(i), self.agent_node(j))
    }

    pub fn reset_flows(&mut self) {
        for e in &mut self.edges {
            e.flow = 0.0;
        }
    }

    /// Adds `quantity` kW of flow to every edge on the path between two nodes.
    pub fn apply_flow(&mut self, from: usize, to: usize, quantity: f64) {
        for id in self.path_edges(from, to) {
            self.edges[id].flow += quantity;
        }
    }

    /// Per-edge utilization clamped to [0, 1], and its average.
    pub fn congestion(&self) -> (Vec<f64>, f64) {
        let per_edge: Vec<f64> = self
            .edges
            .iter()
            .map(|e| (e.flow / e.capacity).clamp(0.0, 1.0))
            .collect();
        let avg = if per_edge.is_empty() {
            0.0
        } else {
            per_edge.iter().sum::<f64>() / per_edge.len() as f64
        };
        (per_edge, avg)
    }

    pub fn average_congestion(&self) -> f64 {
        self.congestion().1
    }
}

fn validate_zones(zones: &[usize], adjacency: &[Vec<(usize, usize)>], n: usize) -> Result<()> {
    if zones.len() != n {
        return Err(SimError::config(
            "grid.zones",
            format!("expected {n} zone labels, got {}", zones.len()),
        ));
    }
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let zone = zones[start];
        // Every node of this zone must be reachable from `start` inside the zone.
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adjacency[u] {
                if !seen[v] && zones[v] == zone {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(orphan) = (0..n).find(|&k| zones[k] == zone && !seen[k]) {
            return Err(SimError::config(
                "grid.zones",
                format!("zone {zone} is not connected (node {orphan} unreachable)"),
            ));
        }
    }
    Ok(())
}

/// Energy lost moving `quantity` over distance `distance`, never more than the quantity.
pub fn transmission_loss(distance: f64, quantity: f64, kappa: f64) -> f64 {
    (distance * quantity * kappa).min(quantity)
}

/// Σ_i (G_i − D_i + bought_i − sold_i) at period `t`.
pub fn grid_balance(agents: &[AgentState], t: usize) -> f64 {
    agents.iter().map(|a| a.energy_balance(t)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::TimeSeries;

    #[test]
    fn line_distances_add_up() {
        let g = build_topology(TopologyKind::Line, 3, 100.0).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.electrical_distance(0, 2), 2.0);
        assert_eq!(g.electrical_distance(1, 1), 0.0);
    }

    #[test]
    fn ring_tie_breaks_on_lowest_ids() {
        let g = build_topology(TopologyKind::Ring, 4, 100.0).unwrap();
        assert_eq!(g.electrical_distance(0, 2), 2.0);
        assert_eq!(g.path_nodes(0, 2), vec![0, 1, 2]);
        assert_eq!(g.path_nodes(2, 0), vec![2, 1, 0]);
    }

    #[test]
    fn mesh_is_lattice() {
        let g = build_topology(TopologyKind::Mesh, 7, 1200.0).unwrap();
        // 3 columns: 0-1-2 / 3-4-5 / 6
        assert_eq!(g.edges().len(), 8);
        assert_eq!(g.electrical_distance(0, 6), 2.0);
        assert_eq!(g.electrical_distance(2, 6), 4.0);
        assert!(g.edges().iter().all(|e| e.capacity == 1200.0));
    }

    #[test]
    fn ieee13_matches_fixture() {
        let g = build_topology(TopologyKind::Ieee13, 5, 1200.0).unwrap();
        assert_eq!(g.node_count(), 13);
        assert_eq!(g.edges().len(), 12);
        let degree_632 = g.edges().iter().filter(|e| e.u == 1 || e.v == 1).count();
        assert_eq!(degree_632, 4);
        let g34 = build_topology(TopologyKind::Ieee34, 34, 1200.0).unwrap();
        assert_eq!(g34.node_count(), 34);
        assert_eq!(g34.edges().len(), 33);
    }

    #[test]
    fn too_many_agents_for_feeder() {
        assert!(matches!(
            build_topology(TopologyKind::Ieee13, 14, 100.0),
            Err(SimError::Config { .. })
        ));
        assert!(build_topology(TopologyKind::Line, 1, 100.0).is_err());
        assert!("star".parse::<TopologyKind>().is_err());
    }

    #[test]
    fn capacity_inverse_to_length() {
        let g = GridState::from_edge_list(3, &[(0, 1, 1.0), (1, 2, 4.0)], vec![0, 2], None, 1000.0, 0.0, 0).unwrap();
        assert_eq!(g.edges()[0].capacity, 1000.0);
        assert_eq!(g.edges()[1].capacity, 250.0);
    }

    #[test]
    fn adjacent_distance_uses_edge_length() {
        let g = GridState::from_edge_list(2, &[(0, 1, 1.5)], vec![0, 1], None, 10.0, 0.0, 0).unwrap();
        assert_eq!(g.electrical_distance(0, 1), 1.5);
    }

    #[test]
    fn disconnected_graph_rejected() {
        let err = GridState::from_edge_list(3, &[(0, 1, 1.0)], vec![0, 1], None, 10.0, 0.0, 0);
        assert!(err.is_err());
    }

    #[test]
    fn loss_examples() {
        assert!((transmission_loss(2.0, 10.0, 0.01) - 0.2).abs() < 1e-12);
        assert_eq!(transmission_loss(2.0, 10.0, 0.0), 0.0);
        assert_eq!(transmission_loss(200.0, 10.0, 0.01), 10.0);
    }

    #[test]
    fn flows_and_congestion() {
        let mut g = build_topology(TopologyKind::Line, 3, 1200.0).unwrap();
        g.apply_flow(1, 1, 10.0);
        assert!(g.edges().iter().all(|e| e.flow == 0.0));
        g.apply_flow(0, 2, 10.0);
        assert!(g.edges().iter().all(|e| e.flow == 10.0));
        g.reset_flows();
        assert_eq!(g.congestion().1, 0.0);
        g.apply_flow(0, 1, 960.0);
        let (per_edge, _) = g.congestion();
        assert!((per_edge[0] - 0.8).abs() < 1e-12);

        let mut two =
            GridState::from_edge_list(3, &[(0, 1, 1.0), (1, 2, 1.0)], vec![0, 2], None, 100.0, 0.0, 0).unwrap();
        two.apply_flow(0, 1, 20.0);
        two.apply_flow(1, 2, 60.0);
        assert!((two.average_congestion() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn grid_balance_examples() {
        let mk = |g: f64, d: f64| AgentState::new(0, 0, TimeSeries::constant(1, g), TimeSeries::constant(1, d), None);
        assert_eq!(grid_balance(&[mk(5.0, 5.0), mk(3.0, 3.0)], 0), 0.0);
        let mut agents = vec![mk(10.0, 5.0), mk(0.0, 3.0)];
        assert_eq!(grid_balance(&agents, 0), 2.0);
        agents[0].energy_sold = 3.0;
        agents[1].energy_bought = 3.0;
        assert_eq!(grid_balance(&agents, 0), 2.0);
    }

    #[test]
    fn zones() {
        let g = GridState::build(
            &GridConfig {
                topology: TopologyKind::Ieee13,
                zones: Some(ieee13_zones()),
                ..GridConfig::default()
            },
            13,
        )
        .unwrap();
        assert!(g.same_zone(3, 3));
        assert!(g.same_zone(0, 5));
        assert!(!g.same_zone(0, 6));
        assert!(g.same_zone(7, 12));
        let single = build_topology(TopologyKind::Mesh, 9, 10.0).unwrap();
        assert!((0..9).all(|i| (0..9).all(|j| single.same_zone(i, j))));
    }

    #[test]
    fn disconnected_zone_rejected() {
        let cfg = GridConfig {
            topology: TopologyKind::Line,
            zones: Some(vec![0, 1, 0]),
            ..GridConfig::default()
        };
        assert!(GridState::build(&cfg, 3).is_err());
    }
}
