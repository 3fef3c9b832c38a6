//! Scenario resolution: bundled names or files on disk.

use std::path::Path;

use anyhow::{Context, Result};
use lemsim_core::ScenarioConfig;

pub const BUNDLED: &[(&str, &str)] = &[
    ("no_battery", include_str!("../scenarios/no_battery.json")),
    ("strategic_battery", include_str!("../scenarios/strategic_battery.json")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == stem).map(|(_, text)| *text)
}

/// Loads `spec` as a file path when it exists, otherwise as a bundled scenario name.
pub fn load(spec: &str) -> Result<ScenarioConfig> {
    let path = Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return ScenarioConfig::from_json_str(&text).with_context(|| format!("in {}", path.display()));
    }
    match bundled(spec) {
        Some(text) => ScenarioConfig::from_json_str(text).with_context(|| format!("in bundled scenario `{spec}`")),
        None => anyhow::bail!(
            "no scenario file `{spec}` and no bundled scenario of that name (bundled: {})",
            BUNDLED.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
        ),
    }
}

/// Parses `N` (seeds 0..N), `a..b` (half-open range) or `a,b,c`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        anyhow::ensure!(a < b, "empty seed range `{spec}`");
        return Ok((a..b).collect());
    }
    if spec.contains(',') {
        return spec
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed `{s}`")))
            .collect();
    }
    let n: u64 = spec.parse().with_context(|| format!("bad seed spec `{spec}`"))?;
    anyhow::ensure!(n > 0, "seed count must be positive");
    Ok((0..n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse() {
        for (name, _) in BUNDLED {
            let c = load(name).unwrap();
            assert_eq!(c.name, *name);
            assert!(!c.description.is_empty());
        }
        assert!(load("no_such_scenario").is_err());
    }

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("42,").unwrap(), vec![42]);
        assert_eq!(parse_seeds("5, 7").unwrap(), vec![5, 7]);
        assert_eq!(parse_seeds("10..12").unwrap(), vec![10, 11]);
        assert!(parse_seeds("0").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
