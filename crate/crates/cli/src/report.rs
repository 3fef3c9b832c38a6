//! Per-seed output files and summary statistics.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lemsim_core::ledger::write_ndjson;
use lemsim_core::{Episode, Party};
use serde::{Deserialize, Serialize};

/// Width of the clearing-price histogram bins ($/MWh).
pub const PRICE_BIN_WIDTH: f64 = 10.0;

/// Headline numbers for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub periods: usize,
    /// Periods with at least one P2P trade.
    pub p2p_periods: usize,
    /// Statistics over per-period P2P clearing prices.
    pub price_mean: Option<f64>,
    pub price_median: Option<f64>,
    /// Sample standard deviation; needs two priced periods.
    pub price_std: Option<f64>,
    pub p2p_volume: f64,
    pub dso_volume: f64,
    pub p2p_ratio: f64,
    pub dso_sold: f64,
    pub dso_bought: f64,
    /// DSO sold minus bought; positive means the DSO is a net seller.
    pub dso_net: f64,
    pub total_reward: f64,
    /// Σ reward over agents in the last period.
    pub final_reward: f64,
    pub mean_reward: f64,
    pub battery_ratio: f64,
    pub soc_min: Option<f64>,
    pub soc_max: Option<f64>,
    pub unmet_demand: f64,
    pub fee_total: f64,
    pub loss_total: f64,
    pub ledger_valid: bool,
    pub max_conservation_residual: f64,
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

pub fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Some((xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

pub fn summarize(ep: &Episode) -> SeedSummary {
    let mut prices: Vec<f64> = ep.steps.iter().filter_map(|s| s.stats.clearing_price).collect();
    let price_std = sample_std(&prices);
    prices.sort_by(f64::total_cmp);
    let price_mean = (!prices.is_empty()).then(|| prices.iter().sum::<f64>() / prices.len() as f64);

    // Folding from +0.0 keeps empty episodes from reporting -0.0.
    let sum = |f: &dyn Fn(&lemsim_core::StepInfo) -> f64| ep.steps.iter().map(f).fold(0.0, |a, x| a + x);
    let p2p_volume = sum(&|s| s.stats.p2p_volume);
    let dso_volume = sum(&|s| s.stats.dso_volume);
    let dso_sold = sum(&|s| s.stats.dso_sold);
    let dso_bought = sum(&|s| s.stats.dso_bought);
    let total_reward = ep.aggregate_reward();
    let agent_periods = ep.steps.iter().map(|s| s.rewards.len()).sum::<usize>();

    // Each P2P trade has two legs; a leg is battery-mediated to the extent the
    // battery supplied the sale or absorbed the purchase.
    let battery_legs = sum(&|s| {
        s.settlements
            .iter()
            .map(|r| r.p2p_sold.min(r.discharge_delivered) + r.p2p_bought.min(r.charge_input))
            .sum()
    });
    let battery_ratio = if p2p_volume > 0.0 {
        (battery_legs / (2.0 * p2p_volume)).min(1.0)
    } else {
        0.0
    };

    let socs: Vec<f64> = ep.steps.iter().flat_map(|s| s.soc.iter().flatten().copied()).collect();

    SeedSummary {
        seed: ep.seed,
        periods: ep.steps.len(),
        p2p_periods: prices.len(),
        price_mean,
        price_median: median(&prices),
        price_std,
        p2p_volume,
        dso_volume,
        p2p_ratio: if p2p_volume + dso_volume > 0.0 {
            p2p_volume / (p2p_volume + dso_volume)
        } else {
            0.0
        },
        dso_sold,
        dso_bought,
        dso_net: dso_sold - dso_bought,
        total_reward,
        final_reward: ep
            .steps
            .last()
            .map_or(0.0, |s| s.rewards.iter().map(|r| r.r_total).sum()),
        mean_reward: if agent_periods > 0 {
            total_reward / agent_periods as f64
        } else {
            0.0
        },
        battery_ratio,
        soc_min: socs.iter().copied().reduce(f64::min),
        soc_max: socs.iter().copied().reduce(f64::max),
        unmet_demand: sum(&|s| s.settlements.iter().map(|r| r.deferred).sum()),
        fee_total: sum(&|s| s.stats.fee_total),
        loss_total: sum(&|s| s.stats.loss_total),
        ledger_valid: ep.final_state.ledger().verify(),
        max_conservation_residual: ep.steps.iter().map(|s| s.balance.residual().abs()).fold(0.0, f64::max),
    }
}

fn csv_writer<'a>(buf: &'a mut Vec<u8>, timestamp: Option<&str>) -> csv::Writer<&'a mut Vec<u8>> {
    if let Some(ts) = timestamp {
        writeln!(buf, "# generated_at={ts}").expect("vec write");
    }
    csv::Writer::from_writer(buf)
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

/// Renders every output file of one seed as (relative path, bytes).
pub fn render_seed(ep: &Episode, timestamp: Option<&str>) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut files = Vec::new();

    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf, timestamp);
        w.write_record([
            "period",
            "stage",
            "buyer",
            "seller",
            "price",
            "quantity",
            "loss",
            "fee_total",
        ])?;
        for s in &ep.steps {
            for t in &s.trades {
                w.write_record([
                    t.period.to_string(),
                    t.stage.to_string(),
                    t.buyer.to_string(),
                    t.seller.to_string(),
                    fmt(t.price),
                    t.quantity.to_string(),
                    fmt(t.loss),
                    fmt(t.fees.total),
                ])?;
            }
        }
        w.flush()?;
    }
    files.push(("trades.csv".into(), buf));

    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf, timestamp);
        w.write_record([
            "period",
            "social_welfare",
            "liquidity",
            "bid_ask_spread",
            "price_volatility",
            "imbalance",
            "avg_congestion",
            "grid_balance",
            "self_consumption",
            "flexibility_utilization",
            "coordination_score",
            "coordination_convergence",
            "normalized_welfare",
            "f_coop",
            "clearing_price",
        ])?;
        for s in &ep.steps {
            let k = &s.kpis;
            let mut row = vec![s.period.to_string()];
            row.extend(
                [
                    k.social_welfare,
                    k.liquidity,
                    k.bid_ask_spread,
                    k.price_volatility,
                    k.imbalance,
                    k.avg_congestion,
                    k.grid_balance,
                    k.self_consumption,
                    k.flexibility_utilization,
                    k.coordination_score,
                    k.coordination_convergence,
                    k.normalized_welfare,
                    s.f_coop,
                ]
                .map(fmt),
            );
            row.push(opt(s.stats.clearing_price));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    files.push(("kpis.csv".into(), buf));

    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf, timestamp);
        w.write_record([
            "period",
            "agent",
            "economic",
            "grid",
            "allocation",
            "participation",
            "stability",
            "r_base",
            "f_coop",
            "f_contrib",
            "penalty_dso",
            "penalty_unmet",
            "r_total",
        ])?;
        for s in &ep.steps {
            for (agent, r) in s.rewards.iter().enumerate() {
                let mut row = vec![s.period.to_string(), agent.to_string()];
                row.extend(
                    [
                        r.economic,
                        r.grid,
                        r.allocation,
                        r.participation,
                        r.stability,
                        r.r_base,
                        r.f_coop,
                        r.f_contrib,
                        r.penalty_dso,
                        r.penalty_unmet,
                        r.r_total,
                    ]
                    .map(fmt),
                );
                w.write_record(&row)?;
            }
        }
        w.flush()?;
    }
    files.push(("rewards.csv".into(), buf));

    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf, timestamp);
        let n = ep.final_state.agents().len();
        let mut header = vec!["period".to_string()];
        header.extend((0..n).map(|i| format!("agent_{i}")));
        w.write_record(&header)?;
        for s in &ep.steps {
            let mut rec = vec![s.period.to_string()];
            rec.extend(s.soc.iter().copied().map(opt));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    files.push(("soc.csv".into(), buf));

    let mut buf = Vec::new();
    write_ndjson(ep.final_state.ledger().blocks(), &mut buf)?;
    files.push(("ledger.ndjson".into(), buf));

    files.extend(render_plot_data(ep, timestamp)?);

    let mut summary = serde_json::to_vec_pretty(&summarize(ep))?;
    summary.push(b'\n');
    files.push(("summary.json".into(), summary));
    Ok(files)
}

fn render_plot_data(ep: &Episode, timestamp: Option<&str>) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut files = Vec::new();
    let bounds = &ep.final_state.config().market;

    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf, timestamp);
        w.write_record(["bin_low", "bin_high", "trades", "volume"])?;
        let bins = ((bounds.p_max - bounds.p_min) / PRICE_BIN_WIDTH).ceil().max(1.0) as usize;
        let mut counts = vec![(0usize, 0.0f64); bins];
        for t in ep.steps.iter().flat_map(|s| s.trades.iter()).filter(|t| t.is_p2p()) {
            let i = (((t.price - bounds.p_min) / PRICE_BIN_WIDTH) as usize).min(bins - 1);
            counts[i].0 += 1;
            counts[i].1 += t.quantity.kwh();
        }
        for (i, (c, v)) in counts.iter().enumerate() {
            let lo = bounds.p_min + i as f64 * PRICE_BIN_WIDTH;
            w.write_record([
                fmt(lo),
                fmt((lo + PRICE_BIN_WIDTH).min(bounds.p_max)),
                c.to_string(),
                fmt(*v),
            ])?;
        }
        w.flush()?;
    }
    files.push(("plots/price_histogram.csv".into(), buf));

    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf, timestamp);
        w.write_record([
            "period",
            "generation",
            "demand",
            "grid_balance",
            "battery_charge",
            "battery_discharge",
            "dso_sold",
            "dso_received",
            "coordination_score",
        ])?;
        for s in &ep.steps {
            let demand: f64 = s.settlements.iter().map(|r| r.demand).sum();
            w.write_record([
                s.period.to_string(),
                fmt(s.balance.generation),
                fmt(demand),
                fmt(s.grid_balance),
                fmt(s.balance.charge_input),
                fmt(s.balance.discharge),
                fmt(s.balance.dso_sold),
                fmt(s.balance.dso_received),
                fmt(s.kpis.coordination_score),
            ])?;
        }
        w.flush()?;
    }
    files.push(("plots/grid_deviation.csv".into(), buf));

    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf, timestamp);
        w.write_record(["period", "p2p_volume", "dso_volume", "p2p_ratio"])?;
        for s in &ep.steps {
            let total = s.stats.total_volume();
            let ratio = if total > 0.0 { s.stats.p2p_volume / total } else { 0.0 };
            w.write_record([
                s.period.to_string(),
                fmt(s.stats.p2p_volume),
                fmt(s.stats.dso_volume),
                fmt(ratio),
            ])?;
        }
        w.flush()?;
    }
    files.push(("plots/p2p_ratio.csv".into(), buf));

    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf, timestamp);
        w.write_record(["seller", "buyer", "volume", "trades", "distance"])?;
        let grid = ep.final_state.grid();
        let node = |p: Party| match p {
            Party::Agent(i) => grid.agent_node(i),
            Party::Dso => grid.dso_node(),
        };
        let mut edges: std::collections::BTreeMap<(usize, usize), (Party, Party, f64, usize)> = Default::default();
        for t in ep.steps.iter().flat_map(|s| s.trades.iter()) {
            let e = edges
                .entry((t.seller.sort_key(), t.buyer.sort_key()))
                .or_insert((t.seller, t.buyer, 0.0, 0));
            e.2 += t.quantity.kwh();
            e.3 += 1;
        }
        for (seller, buyer, volume, count) in edges.into_values() {
            w.write_record([
                seller.to_string(),
                buyer.to_string(),
                fmt(volume),
                count.to_string(),
                fmt(grid.node_distance(node(seller), node(buyer))),
            ])?;
        }
        w.flush()?;
    }
    files.push(("plots/network_edges.csv".into(), buf));
    Ok(files)
}

/// Writes `files` under `dir` via a sibling temp directory and a rename, so a
/// reader never sees a partially written seed.
pub fn write_atomically(dir: &Path, files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    let parent = dir.parent().context("output directory has no parent")?;
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(
        ".{}.tmp",
        dir.file_name().context("bad output directory")?.to_string_lossy()
    ));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    for (rel, bytes) in files {
        let path = tmp.join(rel);
        fs::create_dir_all(path.parent().expect("file has parent"))?;
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir).with_context(|| format!("moving results into {}", dir.display()))?;
    Ok(())
}
