//! Multi-seed batch runs.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use lemsim_core::{run_zero_intelligence, ScenarioConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::report::{render_seed, write_atomically, SeedSummary};

/// Seed-mean of the headline numbers, written as `aggregate.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub periods: usize,
    pub mean_total_reward: f64,
    pub mean_final_reward: f64,
    /// Means over the seeds that have the statistic.
    pub mean_price_mean: Option<f64>,
    pub mean_price_median: Option<f64>,
    pub mean_price_std: Option<f64>,
    pub mean_p2p_ratio: f64,
    pub mean_dso_net: f64,
    pub mean_battery_ratio: f64,
    pub all_ledgers_valid: bool,
    pub max_conservation_residual: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| mean(v.into_iter()))
}

pub fn aggregate(scenario: &str, periods: usize, rows: &[SeedSummary]) -> Aggregate {
    Aggregate {
        scenario: scenario.to_string(),
        seeds: rows.iter().map(|r| r.seed).collect(),
        periods,
        mean_total_reward: mean(rows.iter().map(|r| r.total_reward)),
        mean_final_reward: mean(rows.iter().map(|r| r.final_reward)),
        mean_price_mean: mean_opt(rows.iter().map(|r| r.price_mean)),
        mean_price_median: mean_opt(rows.iter().map(|r| r.price_median)),
        mean_price_std: mean_opt(rows.iter().map(|r| r.price_std)),
        mean_p2p_ratio: mean(rows.iter().map(|r| r.p2p_ratio)),
        mean_dso_net: mean(rows.iter().map(|r| r.dso_net)),
        mean_battery_ratio: mean(rows.iter().map(|r| r.battery_ratio)),
        all_ledgers_valid: rows.iter().all(|r| r.ledger_valid),
        max_conservation_residual: rows.iter().map(|r| r.max_conservation_residual).fold(0.0, f64::max),
    }
}

pub fn seed_dir(out: &Path, seed: u64) -> std::path::PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Runs every seed (in parallel), writes per-seed directories plus
/// `summary.csv`, `aggregate.json` and `scenario.json` under `out`.
pub fn run_batch(config: &ScenarioConfig, seeds: &[u64], out: &Path, timestamp: Option<&str>) -> Result<Aggregate> {
    anyhow::ensure!(!seeds.is_empty(), "no seeds to run");
    config.validate().context("invalid scenario")?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut rows: Vec<SeedSummary> = seeds
        .par_iter()
        .map(|&seed| -> Result<SeedSummary> {
            let ep = run_zero_intelligence(config, seed).with_context(|| format!("seed {seed}"))?;
            let files = render_seed(&ep, timestamp)?;
            write_atomically(&seed_dir(out, seed), &files)?;
            Ok(crate::report::summarize(&ep))
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| r.seed);

    let mut buf = Vec::new();
    if let Some(ts) = timestamp {
        use std::io::Write;
        writeln!(buf, "# generated_at={ts}")?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    fs::write(out.join("summary.csv"), buf)?;

    let agg = aggregate(&config.name, config.periods, &rows);
    fs::write(out.join("aggregate.json"), serde_json::to_string_pretty(&agg)? + "\n")?;
    fs::write(out.join("scenario.json"), config.to_json_pretty() + "\n")?;
    Ok(agg)
}

/// Reads `summary.csv` from a batch directory.
pub fn read_summary(dir: &Path) -> Result<Vec<SeedSummary>> {
    let path = dir.join("summary.csv");
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<SeedSummary>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn read_aggregate(dir: &Path) -> Result<Aggregate> {
    let path = dir.join("aggregate.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
