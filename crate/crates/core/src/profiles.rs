//! Procedural generation of per-period generation, demand and DSO price series,
//! plus loading of externally supplied profiles.
//!
//! All generators are pure: the PRNG (ChaCha8, portable across platforms) is
//! created from the config's `seed`/`stream` pair on every call.

use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Mean cloud persistence in periods.
const MEAN_CLOUD_PERIODS: f64 = 3.0;
/// Irradiance is zero beyond this many widths from the peak.
const IRRADIANCE_SUPPORT_WIDTHS: f64 = 3.0;

/// One value per trading period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct TimeSeries(Vec<f64>);

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Self {
        TimeSeries(values)
    }

    pub fn zeros(periods: usize) -> Self {
        TimeSeries(vec![0.0; periods])
    }

    pub fn constant(periods: usize, value: f64) -> Self {
        TimeSeries(vec![value; periods])
    }

    pub fn period_count(&self) -> usize {
        self.0.len()
    }

    /// Value at `t`, or 0 past the end of the series.
    pub fn at(&self, t: usize) -> f64 {
        self.0.get(t).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_non_negative(&self) -> bool {
        self.0.iter().all(|v| *v >= 0.0)
    }
}

/// Shape and noise parameters for an agent's generation and demand profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub periods: usize,
    /// PV nominal capacity (kW).
    pub nominal_capacity: f64,
    pub irradiance_peak_period: f64,
    /// Standard deviation of the irradiance bump, in periods.
    pub irradiance_width: f64,
    pub noise_sigma: f64,
    pub cloud_probability: f64,
    pub cloud_depth: f64,
    /// Flat demand floor (kWh per period).
    pub demand_base: f64,
    pub demand_morning_peak: usize,
    pub demand_morning_magnitude: f64,
    pub demand_evening_peak: usize,
    pub demand_evening_magnitude: f64,
    pub demand_width: f64,
    pub smoothing_window: usize,
    pub seed: u64,
    pub stream: u64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            periods: 24,
            nominal_capacity: 60.0,
            irradiance_peak_period: 12.0,
            irradiance_width: 2.5,
            noise_sigma: 0.05,
            cloud_probability: 0.1,
            cloud_depth: 0.5,
            demand_base: 10.0,
            demand_morning_peak: 8,
            demand_morning_magnitude: 25.0,
            demand_evening_peak: 19,
            demand_evening_magnitude: 40.0,
            demand_width: 1.5,
            smoothing_window: 3,
            seed: 0,
            stream: 0,
        }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(SimError::config(field, reason))
            }
        };
        check(self.periods >= 1, "periods", "must be at least 1")?;
        check(
            self.nominal_capacity.is_finite() && self.nominal_capacity >= 0.0,
            "nominal_capacity",
            "must be finite and >= 0",
        )?;
        check(
            self.irradiance_width.is_finite() && self.irradiance_width > 0.0,
            "irradiance_width",
            "must be > 0",
        )?;
        check(
            self.noise_sigma.is_finite() && self.noise_sigma >= 0.0,
            "noise_sigma",
            "must be >= 0",
        )?;
        check(
            (0.0..=1.0).contains(&self.cloud_probability),
            "cloud_probability",
            "must lie in [0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.cloud_depth),
            "cloud_depth",
            "must lie in [0, 1]",
        )?;
        check(self.smoothing_window >= 1, "smoothing_window", "must be >= 1")?;
        check(
            self.demand_base >= 0.0 && self.demand_morning_magnitude >= 0.0 && self.demand_evening_magnitude >= 0.0,
            "demand_base",
            "demand magnitudes must be >= 0",
        )?;
        check(
            self.demand_width.is_finite() && self.demand_width > 0.0,
            "demand_width",
            "must be > 0",
        )?;
        Ok(())
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream.wrapping_mul(4).wrapping_add(salt));
        rng
    }

    fn irradiance(&self, t: usize) -> f64 {
        let offset = t as f64 - self.irradiance_peak_period;
        if offset.abs() > IRRADIANCE_SUPPORT_WIDTHS * self.irradiance_width {
            return 0.0;
        }
        gaussian(offset, self.irradiance_width)
    }
}

fn gaussian(offset: f64, width: f64) -> f64 {
    (-(offset * offset) / (2.0 * width * width)).exp()
}

/// Raw (unsmoothed) PV output: capacity × irradiance × (1 + noise + cloud), floored at 0.
pub fn generation_unsmoothed(config: &ProfileConfig) -> Result<TimeSeries> {
    config.validate()?;
    let mut rng = config.rng(0);
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| SimError::config("noise_sigma", e.to_string()))?;
    let persistence = Geometric::new(1.0 / MEAN_CLOUD_PERIODS).expect("valid probability");
    let mut cloud_left = 0u64;

    let values = (0..config.periods)
        .map(|t| {
            let eps_noise = noise.sample(&mut rng);
            if cloud_left == 0 && rng.random::<f64>() < config.cloud_probability {
                cloud_left = 1 + persistence.sample(&mut rng);
            }
            let eps_cloud = if cloud_left > 0 {
                cloud_left -= 1;
                -config.cloud_depth * rng.random::<f64>()
            } else {
                0.0
            };
            let g = config.nominal_capacity * config.irradiance(t) * (1.0 + eps_noise + eps_cloud);
            g.max(0.0)
        })
        .collect();
    Ok(TimeSeries(values))
}

/// Solar generation profile (kWh per period).
pub fn generate_generation(config: &ProfileConfig) -> Result<TimeSeries> {
    let raw = generation_unsmoothed(config)?;
    Ok(smooth(&raw, config.smoothing_window))
}

/// Bimodal household demand with morning and evening peaks (kWh per period).
pub fn generate_demand(config: &ProfileConfig) -> Result<TimeSeries> {
    config.validate()?;
    if config.demand_morning_peak >= config.periods {
        return Err(SimError::config(
            "demand_morning_peak",
            format!(
                "index {} outside {} periods",
                config.demand_morning_peak, config.periods
            ),
        ));
    }
    if config.demand_evening_peak >= config.periods {
        return Err(SimError::config(
            "demand_evening_peak",
            format!(
                "index {} outside {} periods",
                config.demand_evening_peak, config.periods
            ),
        ));
    }
    let mut rng = config.rng(1);
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| SimError::config("noise_sigma", e.to_string()))?;
    let values = (0..config.periods)
        .map(|t| {
            let morning = gaussian(t as f64 - config.demand_morning_peak as f64, config.demand_width);
            let evening = gaussian(t as f64 - config.demand_evening_peak as f64, config.demand_width);
            let shape = config.demand_base
                + config.demand_morning_magnitude * morning
                + config.demand_evening_magnitude * evening;
            (shape * (1.0 + noise.sample(&mut rng))).max(0.0)
        })
        .collect();
    Ok(smooth(&TimeSeries(values), config.smoothing_window))
}

/// DSO tariff schedule parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsoPriceConfig {
    pub periods: usize,
    /// Feed-in tariff outside peak windows ($/MWh).
    pub fit_base: f64,
    /// Utility retail price outside peak windows ($/MWh).
    pub utility_base: f64,
    pub peak_multiplier: f64,
    /// Half-open `[start, end)` period windows.
    pub peak_windows: Vec<(usize, usize)>,
}

impl Default for DsoPriceConfig {
    fn default() -> Self {
        DsoPriceConfig {
            periods: 24,
            fit_base: 50.0,
            utility_base: 250.0,
            peak_multiplier: 1.2,
            peak_windows: vec![(7, 10), (17, 21)],
        }
    }
}

impl DsoPriceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fit_base.is_finite() && self.fit_base > 0.0) {
            return Err(SimError::config("fit_base", "must be > 0"));
        }
        if !(self.utility_base.is_finite() && self.utility_base > self.fit_base) {
            return Err(SimError::config(
                "utility_base",
                "utility price must exceed the feed-in tariff",
            ));
        }
        if !(self.peak_multiplier.is_finite() && self.peak_multiplier >= 1.0) {
            return Err(SimError::config("peak_multiplier", "must be >= 1"));
        }
        for (i, (start, end)) in self.peak_windows.iter().enumerate() {
            if start > end {
                return Err(SimError::config(
                    format!("peak_windows[{i}]"),
                    "start must not exceed end",
                ));
            }
        }
        Ok(())
    }

    fn in_peak(&self, t: usize) -> bool {
        self.peak_windows.iter().any(|&(s, e)| t >= s && t < e)
    }
}

/// Feed-in tariff and utility price step functions, in that order.
pub fn generate_dso_prices(config: &DsoPriceConfig) -> Result<(TimeSeries, TimeSeries)> {
    config.validate()?;
    let (fit, utility) = (0..config.periods)
        .map(|t| {
            let m = if config.in_peak(t) { config.peak_multiplier } else { 1.0 };
            (config.fit_base * m, config.utility_base * m)
        })
        .unzip();
    Ok((TimeSeries(fit), TimeSeries(utility)))
}

/// Centered moving average; the window is truncated at the series boundaries.
pub fn smooth(series: &TimeSeries, window: usize) -> TimeSeries {
    let window = window.max(1);
    let n = series.0.len();
    let back = (window - 1) / 2;
    let fwd = window - 1 - back;
    let values = (0..n)
        .map(|t| {
            let lo = t.saturating_sub(back);
            let hi = (t + fwd).min(n.saturating_sub(1));
            let slice = &series.0[lo..=hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect();
    TimeSeries(values)
}

/// Reads a profile CSV: a header row of agent ids, then one row per period.
pub fn load_profiles_csv<R: Read>(reader: R) -> Result<Vec<(String, TimeSeries)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| SimError::Parse(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut columns = vec![Vec::new(); headers.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| SimError::Parse(e.to_string()))?;
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| SimError::Parse(format!("row {}, column {}: `{cell}` is not a number", row + 1, col)))?;
            if !v.is_finite() || v < 0.0 {
                return Err(SimError::Parse(format!(
                    "row {}, column {}: energy must be finite and >= 0",
                    row + 1,
                    col
                )));
            }
            columns[col].push(v);
        }
    }
    Ok(headers
        .into_iter()
        .zip(columns)
        .map(|(h, c)| (h, TimeSeries(c)))
        .collect())
}
