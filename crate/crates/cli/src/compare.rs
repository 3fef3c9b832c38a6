//! Side-by-side comparison of batch directories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::report::SeedSummary;
use crate::runner::{aggregate, read_aggregate, read_summary, Aggregate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DsoRole {
    Seller,
    Buyer,
    Neutral,
}

impl DsoRole {
    pub fn from_net(net: f64) -> Self {
        if net > 0.0 {
            DsoRole::Seller
        } else if net < 0.0 {
            DsoRole::Buyer
        } else {
            DsoRole::Neutral
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            DsoRole::Seller => "seller",
            DsoRole::Buyer => "buyer",
            DsoRole::Neutral => "neutral",
        }
    }
}

/// One compared scenario against the baseline (the first directory).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub dir: String,
    pub scenario: String,
    pub seeds: usize,
    pub mean_total_reward: f64,
    pub mean_final_reward: f64,
    pub price_mean: Option<f64>,
    pub price_median: Option<f64>,
    pub price_std: Option<f64>,
    pub p2p_ratio: f64,
    pub dso_net: f64,
    pub dso_role: DsoRole,
    pub battery_ratio: f64,
    /// Gaps to the baseline (this minus baseline).
    pub reward_gap: f64,
    pub price_std_gap: Option<f64>,
    pub p2p_ratio_gap: f64,
    pub dso_net_gap: f64,
    /// Fraction of seeds with strictly higher total reward than the baseline.
    pub frac_reward_higher: f64,
    /// Fraction of seeds with strictly lower price std; a seed lacking the
    /// statistic on either side counts as not lower.
    pub frac_price_std_lower: f64,
    pub frac_p2p_ratio_higher: f64,
    pub dso_role_reversed: bool,
}

fn frac(base: &[SeedSummary], other: &[SeedSummary], pred: impl Fn(&SeedSummary, &SeedSummary) -> bool) -> f64 {
    if base.is_empty() {
        return 0.0;
    }
    base.iter().zip(other).filter(|(b, o)| pred(b, o)).count() as f64 / base.len() as f64
}

pub fn compare_rows(
    base: &[SeedSummary],
    base_agg: &Aggregate,
    dir: &str,
    other: &[SeedSummary],
    agg: &Aggregate,
) -> ComparisonRow {
    let role = DsoRole::from_net(agg.mean_dso_net);
    let base_role = DsoRole::from_net(base_agg.mean_dso_net);
    ComparisonRow {
        dir: dir.to_string(),
        scenario: agg.scenario.clone(),
        seeds: other.len(),
        mean_total_reward: agg.mean_total_reward,
        mean_final_reward: agg.mean_final_reward,
        price_mean: agg.mean_price_mean,
        price_median: agg.mean_price_median,
        price_std: agg.mean_price_std,
        p2p_ratio: agg.mean_p2p_ratio,
        dso_net: agg.mean_dso_net,
        dso_role: role,
        battery_ratio: agg.mean_battery_ratio,
        reward_gap: agg.mean_total_reward - base_agg.mean_total_reward,
        price_std_gap: agg.mean_price_std.zip(base_agg.mean_price_std).map(|(a, b)| a - b),
        p2p_ratio_gap: agg.mean_p2p_ratio - base_agg.mean_p2p_ratio,
        dso_net_gap: agg.mean_dso_net - base_agg.mean_dso_net,
        frac_reward_higher: frac(base, other, |b, o| o.total_reward > b.total_reward),
        frac_price_std_lower: frac(
            base,
            other,
            |b, o| matches!((o.price_std, b.price_std), (Some(x), Some(y)) if x < y),
        ),
        frac_p2p_ratio_higher: frac(base, other, |b, o| o.p2p_ratio > b.p2p_ratio),
        dso_role_reversed: base_role == DsoRole::Seller && role == DsoRole::Buyer,
    }
}

/// Compares every directory against the first. Seeds must match exactly.
pub fn compare_dirs(dirs: &[PathBuf]) -> Result<Vec<ComparisonRow>> {
    anyhow::ensure!(dirs.len() >= 2, "compare needs at least two report directories");
    let loaded: Vec<(String, Vec<SeedSummary>, Aggregate)> = dirs
        .iter()
        .map(|d| -> Result<_> {
            let rows = read_summary(d)?;
            // aggregate.json carries the scenario name; recompute the numbers
            // from the rows so a hand-edited summary stays consistent.
            let name = read_aggregate(d).map(|a| a.scenario).unwrap_or_default();
            let periods = rows.first().map_or(0, |r| r.periods);
            let agg = aggregate(&name, periods, &rows);
            Ok((d.display().to_string(), rows, agg))
        })
        .collect::<Result<_>>()?;

    let base_seeds: Vec<u64> = loaded[0].1.iter().map(|r| r.seed).collect();
    for (dir, rows, _) in &loaded[1..] {
        let seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
        anyhow::ensure!(
            seeds == base_seeds,
            "seed mismatch: {} has {} seeds {:?}, {} has {} seeds {:?}",
            loaded[0].0,
            base_seeds.len(),
            base_seeds,
            dir,
            seeds.len(),
            seeds
        );
    }

    let (_, base, base_agg) = &loaded[0];
    Ok(loaded
        .iter()
        .map(|(dir, rows, agg)| compare_rows(base, base_agg, dir, rows, agg))
        .collect())
}

fn num(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

pub fn render_text(rows: &[ComparisonRow]) -> String {
    let mut s = String::new();
    let width = rows.iter().map(|r| r.scenario.len()).max().unwrap_or(0).max(12);
    let line = |s: &mut String, label: &str, cells: Vec<String>| {
        let _ = write!(s, "{label:<24}");
        for c in cells {
            let _ = write!(s, " {c:>width$}");
        }
        s.push('\n');
    };
    line(&mut s, "scenario", rows.iter().map(|r| r.scenario.clone()).collect());
    line(&mut s, "seeds", rows.iter().map(|r| r.seeds.to_string()).collect());
    line(
        &mut s,
        "mean total reward",
        rows.iter().map(|r| num(Some(r.mean_total_reward))).collect(),
    );
    line(
        &mut s,
        "mean final reward",
        rows.iter().map(|r| num(Some(r.mean_final_reward))).collect(),
    );
    line(&mut s, "price mean", rows.iter().map(|r| num(r.price_mean)).collect());
    line(
        &mut s,
        "price median",
        rows.iter().map(|r| num(r.price_median)).collect(),
    );
    line(&mut s, "price std", rows.iter().map(|r| num(r.price_std)).collect());
    line(
        &mut s,
        "p2p ratio",
        rows.iter().map(|r| num(Some(r.p2p_ratio))).collect(),
    );
    line(&mut s, "dso net", rows.iter().map(|r| num(Some(r.dso_net))).collect());
    line(
        &mut s,
        "dso role",
        rows.iter().map(|r| r.dso_role.as_str().to_string()).collect(),
    );
    line(
        &mut s,
        "battery ratio",
        rows.iter().map(|r| num(Some(r.battery_ratio))).collect(),
    );
    s.push('\n');
    let base = &rows[0].scenario;
    for r in &rows[1..] {
        let _ = writeln!(s, "{} vs {}:", r.scenario, base);
        let _ = writeln!(
            s,
            "  reward gap {:+.3} (higher in {:.0}% of seeds)",
            r.reward_gap,
            100.0 * r.frac_reward_higher
        );
        let _ = writeln!(
            s,
            "  price std gap {} (lower in {:.0}% of seeds)",
            r.price_std_gap.map_or_else(|| "n/a".into(), |g| format!("{g:+.3}")),
            100.0 * r.frac_price_std_lower
        );
        let _ = writeln!(
            s,
            "  p2p ratio gap {:+.3} (higher in {:.0}% of seeds)",
            r.p2p_ratio_gap,
            100.0 * r.frac_p2p_ratio_higher
        );
        let _ = writeln!(
            s,
            "  dso net gap {:+.3}, role {}",
            r.dso_net_gap,
            if r.dso_role_reversed {
                "reversed (seller -> buyer)"
            } else {
                "not reversed"
            }
        );
    }
    s
}

pub fn write_comparison(rows: &[ComparisonRow], out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("comparison.txt"), render_text(rows))?;
    let mut w = csv::Writer::from_path(out.join("comparison.csv"))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
