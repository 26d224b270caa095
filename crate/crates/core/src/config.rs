//! Scenario configuration, as read from the JSON config file.
//!
//! Keys mirror the struct fields exactly. Unknown keys are rejected, and
//! every field without a `#[serde(default)]` is required.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.0 + self.1)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.0 && x <= self.1
    }

    fn check(&self, field: &str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite()) {
            return Err(Error::config(field, "bounds must be finite"));
        }
        if self.0 > self.1 {
            return Err(Error::config(field, format!("empty range [{}, {}]", self.0, self.1)));
        }
        Ok(())
    }
}

/// Objective weights: latency, energy, utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            w1: 0.4,
            w2: 0.4,
            w3: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    /// Keep the explicit distance divisor in the SNR in addition to the
    /// path loss folded into the channel coefficient.
    pub distance_in_snr: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            path_loss_exponent: 2.7,
            reference_distance_m: 1.0,
            distance_in_snr: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyConfig {
    /// Use `T/R + βC/f_i` for the edge term instead of `βC/(R·f_i)`.
    pub decomposed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    /// Speed given to every synthetic (random-waypoint) user.
    pub speed_kmh: f64,
    pub slot_s: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            speed_kmh: 30.0,
            slot_s: 1.0,
        }
    }
}

fn default_server_cpu() -> f64 {
    1.0e10
}
fn default_user_cpu() -> f64 {
    1.0e9
}
fn default_dt_drift() -> f64 {
    0.02
}
fn default_candidates() -> usize {
    5
}
fn default_download_power() -> f64 {
    0.1
}
fn default_result_fraction() -> f64 {
    0.1
}
fn default_cost_per_cycle() -> f64 {
    2.0e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub area_side_km: f64,
    pub server_radius_km: f64,
    /// Servers per km².
    pub server_density: f64,
    pub user_count: usize,
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
    pub tx_power_range_w: Interval,
    pub data_size_range_bits: Interval,
    pub cycles_per_bit_range: Interval,
    pub queue_latency_s: f64,
    pub latency_min_s: f64,
    pub latency_max_s: f64,
    /// Migration cost per migrated bit (C_f).
    pub migration_fixed_cost: f64,
    /// DT-side discrepancy added to the migration cost (C̃_f).
    pub dt_migration_discrepancy: f64,
    /// Coefficient applied to `C/(f + f̃)` in the compute-energy terms.
    pub energy_per_cycle_j: f64,
    pub dt_energy_per_prediction_j: f64,
    pub comm_energy_per_bit_j: f64,
    /// Mean of the relative deviation f̃/f for servers and users.
    pub dt_error_mean: f64,
    pub weights: WeightsConfig,
    /// (λ_w, λ_s), shared by all users.
    pub qoe_weights: (f64, f64),
    pub baseline_satisfaction: f64,
    pub budget_range: Interval,
    /// Minimum task size in bits. Defaults to the lower end of the data range.
    #[serde(default)]
    pub min_task_bits: Option<f64>,
    pub seed: u64,

    #[serde(default = "default_server_cpu")]
    pub server_cpu_freq_hz: f64,
    #[serde(default = "default_user_cpu")]
    pub user_cpu_freq_hz: f64,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub latency: LatencyConfig,
    #[serde(default)]
    pub mobility: MobilityConfig,
    /// Per-step standard deviation of the random walk applied to stale
    /// DT estimates (in units of f̃/f).
    #[serde(default = "default_dt_drift")]
    pub dt_drift: f64,
    /// Number of nearest servers exposed in the state and action space.
    #[serde(default = "default_candidates")]
    pub candidate_servers: usize,
    #[serde(default = "default_download_power")]
    pub download_power_w: f64,
    /// Result size as a fraction of the offloaded input.
    #[serde(default = "default_result_fraction")]
    pub result_fraction: f64,
    #[serde(default = "default_cost_per_cycle")]
    pub cost_per_cycle: f64,
    /// Energy normalization scale. Defaults to the fully local energy of
    /// the largest possible task.
    #[serde(default)]
    pub energy_ref_j: Option<f64>,
}

impl ScenarioConfig {
    /// The full-size city configuration: 3 km square, 5 servers per km².
    pub fn city() -> Self {
        Self {
            area_side_km: 3.0,
            server_radius_km: 0.15,
            server_density: 5.0,
            user_count: 50,
            bandwidth_hz: 20.0e6,
            noise_power_w: 2.0e-12,
            tx_power_range_w: Interval(0.2, 0.6),
            // 600-800 kB, 1 kB = 8000 bits
            data_size_range_bits: Interval(4.8e6, 6.4e6),
            // 200-400 cycles per kB
            cycles_per_bit_range: Interval(0.025, 0.05),
            queue_latency_s: 0.002,
            latency_min_s: 0.150,
            latency_max_s: 0.250,
            migration_fixed_cost: 2.0e-6,
            dt_migration_discrepancy: 2.0e-7,
            energy_per_cycle_j: 200.0,
            dt_energy_per_prediction_j: 1.0e-3,
            comm_energy_per_bit_j: 1.0e-9,
            dt_error_mean: 0.5,
            weights: WeightsConfig::default(),
            qoe_weights: (0.5, 0.5),
            baseline_satisfaction: 0.1,
            budget_range: Interval(20.0, 30.0),
            min_task_bits: None,
            seed: 42,
            server_cpu_freq_hz: default_server_cpu(),
            user_cpu_freq_hz: default_user_cpu(),
            channel: ChannelConfig::default(),
            latency: LatencyConfig::default(),
            mobility: MobilityConfig::default(),
            dt_drift: default_dt_drift(),
            candidate_servers: default_candidates(),
            download_power_w: default_download_power(),
            result_fraction: default_result_fraction(),
            cost_per_cycle: default_cost_per_cycle(),
            energy_ref_j: None,
        }
    }

    /// Small 1 km² setup with 5 servers and 10 users.
    pub fn desk() -> Self {
        Self {
            area_side_km: 1.0,
            user_count: 10,
            ..Self::city()
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| {
            let msg = e.to_string();
            let field = field_from_serde_message(&msg).unwrap_or("<config>").to_string();
            Error::config(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn server_count(&self) -> usize {
        (self.server_density * self.area_side_km * self.area_side_km).round() as usize
    }

    pub fn min_task_bits(&self) -> f64 {
        self.min_task_bits.unwrap_or(self.data_size_range_bits.lo())
    }

    /// Largest possible task in CPU cycles.
    pub fn max_task_cycles(&self) -> f64 {
        self.data_size_range_bits.hi() * self.cycles_per_bit_range.hi()
    }

    pub fn energy_ref(&self) -> f64 {
        self.energy_ref_j
            .unwrap_or(self.energy_per_cycle_j * self.max_task_cycles() / self.user_cpu_freq_hz)
    }

    /// Reference cost used to normalize migration costs: C_f × largest task.
    pub fn cost_ref(&self) -> f64 {
        self.migration_fixed_cost * self.data_size_range_bits.hi()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be finite and > 0, got {v}")))
            }
        };
        let nonneg = |field: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be finite and >= 0, got {v}")))
            }
        };

        positive("area_side_km", self.area_side_km)?;
        nonneg("server_radius_km", self.server_radius_km)?;
        nonneg("server_density", self.server_density)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("noise_power_w", self.noise_power_w)?;
        self.tx_power_range_w.check("tx_power_range_w")?;
        nonneg("tx_power_range_w", self.tx_power_range_w.lo())?;
        self.data_size_range_bits.check("data_size_range_bits")?;
        positive("data_size_range_bits", self.data_size_range_bits.lo())?;
        self.cycles_per_bit_range.check("cycles_per_bit_range")?;
        positive("cycles_per_bit_range", self.cycles_per_bit_range.lo())?;
        nonneg("queue_latency_s", self.queue_latency_s)?;
        nonneg("latency_min_s", self.latency_min_s)?;
        positive("latency_max_s", self.latency_max_s)?;
        if self.latency_min_s >= self.latency_max_s {
            return Err(Error::config(
                "latency_min_s",
                format!(
                    "L_min ({}) must be < L_max ({})",
                    self.latency_min_s, self.latency_max_s
                ),
            ));
        }
        nonneg("migration_fixed_cost", self.migration_fixed_cost)?;
        nonneg("dt_migration_discrepancy", self.dt_migration_discrepancy)?;
        nonneg("energy_per_cycle_j", self.energy_per_cycle_j)?;
        nonneg("dt_energy_per_prediction_j", self.dt_energy_per_prediction_j)?;
        nonneg("comm_energy_per_bit_j", self.comm_energy_per_bit_j)?;
        if !(0.0..=0.9).contains(&self.dt_error_mean) {
            return Err(Error::config(
                "dt_error_mean",
                format!("must lie in [0, 0.9], got {}", self.dt_error_mean),
            ));
        }
        nonneg("weights.w1", self.weights.w1)?;
        nonneg("weights.w2", self.weights.w2)?;
        nonneg("weights.w3", self.weights.w3)?;
        let (lw, ls) = self.qoe_weights;
        nonneg("qoe_weights", lw)?;
        nonneg("qoe_weights", ls)?;
        if (lw + ls - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "qoe_weights",
                format!("lambda_w + lambda_s must equal 1, got {}", lw + ls),
            ));
        }
        if !(0.0..1.0).contains(&self.baseline_satisfaction) {
            return Err(Error::config(
                "baseline_satisfaction",
                format!("must lie in [0, 1), got {}", self.baseline_satisfaction),
            ));
        }
        self.budget_range.check("budget_range")?;
        positive("budget_range", self.budget_range.lo())?;
        if let Some(m) = self.min_task_bits {
            nonneg("min_task_bits", m)?;
        }
        positive("server_cpu_freq_hz", self.server_cpu_freq_hz)?;
        positive("user_cpu_freq_hz", self.user_cpu_freq_hz)?;
        positive("channel.path_loss_exponent", self.channel.path_loss_exponent)?;
        positive("channel.reference_distance_m", self.channel.reference_distance_m)?;
        nonneg("mobility.speed_kmh", self.mobility.speed_kmh)?;
        positive("mobility.slot_s", self.mobility.slot_s)?;
        nonneg("dt_drift", self.dt_drift)?;
        if self.candidate_servers == 0 {
            return Err(Error::config("candidate_servers", "must be >= 1"));
        }
        nonneg("download_power_w", self.download_power_w)?;
        nonneg("result_fraction", self.result_fraction)?;
        nonneg("cost_per_cycle", self.cost_per_cycle)?;
        if let Some(e) = self.energy_ref_j {
            positive("energy_ref_j", e)?;
        }
        Ok(())
    }
}

/// Pulls the key name out of serde's "missing field `x`" / "unknown field `x`".
fn field_from_serde_message(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(&msg[start..start + len])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn city_json() -> serde_json::Value {
        serde_json::to_value(ScenarioConfig::city()).unwrap()
    }

    #[test]
    fn city_defaults_validate() {
        ScenarioConfig::city().validate().unwrap();
        ScenarioConfig::desk().validate().unwrap();
        assert_eq!(ScenarioConfig::city().server_count(), 45);
        assert_eq!(ScenarioConfig::desk().server_count(), 5);
    }

    #[test]
    fn json_roundtrip() {
        let text = serde_json::to_string(&ScenarioConfig::city()).unwrap();
        assert_eq!(ScenarioConfig::from_json_str(&text).unwrap(), ScenarioConfig::city());
    }

    #[test]
    fn unknown_key_rejected() {
        let mut v = city_json();
        v["bogus_key"] = 1.into();
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "bogus_key"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_key_named() {
        let mut v = city_json();
        v.as_object_mut().unwrap().remove("bandwidth_hz");
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "bandwidth_hz"));
    }

    #[test]
    fn optional_sections_default() {
        let mut v = city_json();
        let obj = v.as_object_mut().unwrap();
        for k in ["channel", "latency", "mobility", "dt_drift", "min_task_bits"] {
            obj.remove(k);
        }
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        assert_eq!(cfg.channel, ChannelConfig::default());
        assert_eq!(cfg.min_task_bits(), 4.8e6);
    }

    #[test]
    fn latency_bounds_checked() {
        let mut cfg = ScenarioConfig::city();
        cfg.latency_min_s = 0.3;
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "latency_min_s"));
    }

    #[test]
    fn qoe_weights_must_sum_to_one() {
        let mut cfg = ScenarioConfig::city();
        cfg.qoe_weights = (0.6, 0.6);
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "qoe_weights"));
    }

    #[test]
    fn dt_error_mean_range() {
        let mut cfg = ScenarioConfig::city();
        cfg.dt_error_mean = 0.95;
        assert!(cfg.validate().is_err());
        cfg.dt_error_mean = 0.9;
        cfg.validate().unwrap();
    }
}
