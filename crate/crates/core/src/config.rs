//! Run configuration: a versioned TOML file with nested sections. Every
//! field has a default, so partial files work; semantic validation reports
//! the offending field path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

/// World / scenario section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub vehicle_count: usize,
    pub server_count: usize,
    pub pedestrian_count: usize,
    /// Square map side, meters.
    pub extent_m: f64,
    pub road_spacing_m: f64,
    /// Per-vehicle coverage radius range [lo, hi]; equal bounds give a
    /// homogeneous fleet.
    pub coverage_radius_m: [f64; 2],
    pub vehicle_speed_mps: [f64; 2],
    pub pedestrian_speed_mps: [f64; 2],
    pub duration_s: f64,
    /// Required fraction of the full union coverage.
    pub beta: f64,
    /// Number of offloading decisions; partitions are {0..partition_count-1}.
    pub partition_count: usize,
    pub feature_dim: usize,
    pub sigma_pos_m: f64,
    pub sigma_feat: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            vehicle_count: 50,
            server_count: 5,
            pedestrian_count: 20,
            extent_m: 160.0,
            road_spacing_m: 40.0,
            coverage_radius_m: [50.0, 50.0],
            vehicle_speed_mps: [5.0, 12.0],
            pedestrian_speed_mps: [0.8, 1.6],
            duration_s: 20.0,
            beta: 0.8,
            partition_count: 5,
            feature_dim: 32,
            sigma_pos_m: 0.3,
            sigma_feat: 0.2,
        }
    }
}

impl ScenarioConfig {
    /// Maximum partition index N (full-local processing).
    pub fn max_partition(&self) -> usize {
        self.partition_count - 1
    }
}

/// Radio link model (log-distance path loss with block shadowing).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub bandwidth_hz: f64,
    pub path_loss_exponent: f64,
    /// Linear-scale SNR at 1 m, expressed in dB.
    pub snr_ref_db: f64,
    pub shadowing_sigma_db: f64,
    /// Shadowing is redrawn per vehicle every coherence interval.
    pub coherence_s: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 100_000.0,
            path_loss_exponent: 3.0,
            snr_ref_db: 60.0,
            shadowing_sigma_db: 4.0,
            coherence_s: 0.1,
        }
    }
}

/// Synthetic stand-ins for the per-partition task-stage measurements.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementConfig {
    /// Mean onboard compute time per partition, seconds (before the
    /// hardware multiplier).
    pub onboard_mean_s: Vec<f64>,
    /// Mean uplink payload per partition, kilobits.
    pub uplink_mean_kbit: Vec<f64>,
    /// Mean edge compute time per partition, seconds.
    pub edge_mean_s: Vec<f64>,
    /// Mean map-delta downlink payload, kilobits.
    pub downlink_mean_kbit: f64,
    /// Log-space sigma of the lognormal stage distributions.
    pub sigma_log: f64,
    /// Per-vehicle hardware multiplier range (uniform).
    pub hw_mult_range: [f64; 2],
    /// Edge-server compute-speed multiplier.
    pub server_mult: f64,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            onboard_mean_s: vec![0.0, 0.08, 0.10, 0.13, 0.16],
            uplink_mean_kbit: vec![16.0, 4.0, 3.6, 0.8, 0.0],
            edge_mean_s: vec![0.13, 0.05, 0.045, 0.02, 0.0],
            downlink_mean_kbit: 1.0,
            sigma_log: 0.25,
            hw_mult_range: [0.5, 2.0],
            server_mult: 1.0,
        }
    }
}

/// Matching / global-map section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub ttl_s: f64,
    pub match_weight: f64,
    pub match_gate_m: f64,
    pub match_threshold: f64,
    pub feature_cap: usize,
    pub fusion_window_s: f64,
    pub history_cap: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        let p = crate::map::MapParams::default();
        Self {
            ttl_s: p.ttl_s,
            match_weight: p.match_weight,
            match_gate_m: p.match_gate_m,
            match_threshold: p.match_threshold,
            feature_cap: p.feature_cap,
            fusion_window_s: p.fusion_window_s,
            history_cap: p.history_cap,
        }
    }
}

impl MapConfig {
    pub fn params(&self) -> crate::map::MapParams {
        crate::map::MapParams {
            match_weight: self.match_weight,
            match_gate_m: self.match_gate_m,
            match_threshold: self.match_threshold,
            feature_cap: self.feature_cap,
            fusion_window_s: self.fusion_window_s,
            ttl_s: self.ttl_s,
            history_cap: self.history_cap,
        }
    }
}

/// Q-policy and replay section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfigToml {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay: f64,
    pub target_sync_period: u64,
    pub replay_capacity: usize,
    pub per_alpha: f64,
    pub per_beta_start: f64,
    pub per_beta_anneal_steps: u64,
    pub priority_floor: f64,
}

impl Default for PolicyConfigToml {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            gamma: 0.9,
            batch_size: 512,
            learning_rate: 0.5e-3,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.9995,
            target_sync_period: 500,
            replay_capacity: 50_000,
            per_alpha: 0.6,
            per_beta_start: 0.4,
            per_beta_anneal_steps: 20_000,
            priority_floor: 1e-3,
        }
    }
}

/// Controller section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// Central scheduling recomputation period, seconds.
    pub schedule_period_s: f64,
    /// Grid cell for scheduling-time coverage, meters.
    pub schedule_cell_m: f64,
    /// Completed tasks harvested during the regression warm-up.
    pub rm_warmup_tasks: usize,
    pub rm_ridge: f64,
    /// Vehicles start their first round spread over this window, so the
    /// fleet's rounds are not phase-locked.
    pub start_stagger_s: f64,
    /// Robustness margin the distributed prune adds to beta to absorb
    /// estimation and timing error.
    pub dhead_beta_margin: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            schedule_period_s: 1.0,
            schedule_cell_m: 2.0,
            rm_warmup_tasks: 5000,
            rm_ridge: 1e-6,
            start_stagger_s: 1.0,
            dhead_beta_margin: 0.15,
        }
    }
}

/// Metrics section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Coverage sampling interval, seconds.
    pub interval_s: f64,
    /// Grid cell for per-tick coverage metrics, meters.
    pub coverage_cell_m: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            interval_s: 0.1,
            coverage_cell_m: 5.0,
        }
    }
}

/// The whole experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub world: ScenarioConfig,
    pub radio: RadioConfig,
    pub measurement: MeasurementConfig,
    pub map: MapConfig,
    pub policy: PolicyConfigToml,
    pub control: ControlConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            world: ScenarioConfig::default(),
            radio: RadioConfig::default(),
            measurement: MeasurementConfig::default(),
            map: MapConfig::default(),
            policy: PolicyConfigToml::default(),
            control: ControlConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("offset {}..{}", s.start, s.end))
                .unwrap_or_else(|| "file".to_string());
            CoreError::config(path, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Semantic validation with field-path errors.
    pub fn validate(&self) -> Result<()> {
        fn ensure(ok: bool, path: &str, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(CoreError::config(path, msg))
            }
        }

        ensure(
            self.schema_version == SCHEMA_VERSION,
            "schema_version",
            &format!("expected {SCHEMA_VERSION}"),
        )?;

        let w = &self.world;
        ensure(w.vehicle_count > 0, "world.vehicle_count", "must be > 0")?;
        ensure(w.server_count > 0, "world.server_count", "must be > 0")?;
        ensure(w.duration_s > 0.0, "world.duration_s", "must be > 0")?;
        ensure(
            (0.0..=1.0).contains(&w.beta),
            "world.beta",
            "must be in [0, 1]",
        )?;
        ensure(w.partition_count >= 2, "world.partition_count", "need >= 2")?;
        ensure(w.extent_m > 0.0, "world.extent_m", "must be > 0")?;
        ensure(
            w.road_spacing_m > 0.0 && w.road_spacing_m <= w.extent_m,
            "world.road_spacing_m",
            "must be in (0, extent]",
        )?;
        ensure(
            w.coverage_radius_m[0] > 0.0 && w.coverage_radius_m[0] <= w.coverage_radius_m[1],
            "world.coverage_radius_m",
            "need 0 < lo <= hi",
        )?;
        ensure(
            w.vehicle_speed_mps[0] > 0.0 && w.vehicle_speed_mps[0] <= w.vehicle_speed_mps[1],
            "world.vehicle_speed_mps",
            "need 0 < lo <= hi",
        )?;
        ensure(w.feature_dim > 0, "world.feature_dim", "must be > 0")?;

        let r = &self.radio;
        ensure(r.bandwidth_hz > 0.0, "radio.bandwidth_hz", "must be > 0")?;
        ensure(r.coherence_s > 0.0, "radio.coherence_s", "must be > 0")?;
        ensure(
            r.shadowing_sigma_db >= 0.0,
            "radio.shadowing_sigma_db",
            "must be >= 0",
        )?;

        let m = &self.measurement;
        let p = w.partition_count;
        ensure(
            m.onboard_mean_s.len() == p,
            "measurement.onboard_mean_s",
            &format!("need {p} entries (one per partition)"),
        )?;
        ensure(
            m.uplink_mean_kbit.len() == p,
            "measurement.uplink_mean_kbit",
            &format!("need {p} entries"),
        )?;
        ensure(
            m.edge_mean_s.len() == p,
            "measurement.edge_mean_s",
            &format!("need {p} entries"),
        )?;
        ensure(
            m.onboard_mean_s.windows(2).all(|w| w[0] <= w[1]),
            "measurement.onboard_mean_s",
            "must be monotonically increasing in the partition",
        )?;
        ensure(
            m.uplink_mean_kbit.windows(2).all(|w| w[0] > w[1]),
            "measurement.uplink_mean_kbit",
            "must be strictly decreasing in the partition",
        )?;
        ensure(
            m.edge_mean_s.windows(2).all(|w| w[0] >= w[1]),
            "measurement.edge_mean_s",
            "must be monotonically decreasing in the partition",
        )?;
        ensure(
            m.onboard_mean_s.iter().all(|v| *v >= 0.0)
                && m.uplink_mean_kbit.iter().all(|v| *v >= 0.0)
                && m.edge_mean_s.iter().all(|v| *v >= 0.0),
            "measurement",
            "stage means must be >= 0",
        )?;
        ensure(
            m.hw_mult_range[0] > 0.0 && m.hw_mult_range[0] <= m.hw_mult_range[1],
            "measurement.hw_mult_range",
            "need 0 < lo <= hi",
        )?;
        ensure(
            m.server_mult > 0.0,
            "measurement.server_mult",
            "must be > 0",
        )?;
        ensure(m.sigma_log >= 0.0, "measurement.sigma_log", "must be >= 0")?;

        ensure(self.map.ttl_s > 0.0, "map.ttl_s", "must be > 0")?;
        ensure(self.map.feature_cap > 0, "map.feature_cap", "must be > 0")?;

        let pc = &self.policy;
        ensure(pc.batch_size > 0, "policy.batch_size", "must be > 0")?;
        ensure(
            pc.replay_capacity >= pc.batch_size,
            "policy.replay_capacity",
            "must be >= batch_size",
        )?;
        ensure(
            (0.0..1.0).contains(&pc.gamma),
            "policy.gamma",
            "must be in [0, 1)",
        )?;
        ensure(
            pc.epsilon_start >= pc.epsilon_end && pc.epsilon_end >= 0.0,
            "policy.epsilon_start",
            "need start >= end >= 0",
        )?;
        ensure(
            pc.epsilon_decay > 0.0 && pc.epsilon_decay <= 1.0,
            "policy.epsilon_decay",
            "must be in (0, 1]",
        )?;
        ensure(
            pc.target_sync_period > 0,
            "policy.target_sync_period",
            "must be > 0",
        )?;
        ensure(
            pc.priority_floor > 0.0,
            "policy.priority_floor",
            "must be > 0",
        )?;

        let c = &self.control;
        ensure(
            c.schedule_period_s > 0.0,
            "control.schedule_period_s",
            "must be > 0",
        )?;
        ensure(
            c.schedule_cell_m > 0.0,
            "control.schedule_cell_m",
            "must be > 0",
        )?;

        ensure(
            self.metrics.interval_s > 0.0,
            "metrics.interval_s",
            "must be > 0",
        )?;
        ensure(
            self.metrics.coverage_cell_m > 0.0,
            "metrics.coverage_cell_m",
            "must be > 0",
        )?;

        Ok(())
    }

    /// Policy hyperparameters for a given state encoding size.
    pub fn policy_config(&self, state_dim: usize) -> crate::rl::PolicyConfig {
        let p = &self.policy;
        crate::rl::PolicyConfig {
            state_dim,
            action_count: self.world.partition_count,
            hidden: p.hidden.clone(),
            gamma: p.gamma,
            batch_size: p.batch_size,
            learning_rate: p.learning_rate,
            epsilon_start: p.epsilon_start,
            epsilon_end: p.epsilon_end,
            epsilon_decay: p.epsilon_decay,
            target_sync_period: p.target_sync_period,
            leaky_slope: 0.01,
        }
    }

    pub fn replay(&self) -> crate::rl::PrioritizedReplay {
        let mut r = crate::rl::PrioritizedReplay::new(self.policy.replay_capacity);
        r.alpha = self.policy.per_alpha;
        r.beta_start = self.policy.per_beta_start;
        r.beta_anneal_steps = self.policy.per_beta_anneal_steps;
        r.priority_floor = self.policy.priority_floor;
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg =
            RunConfig::from_toml("schema_version = 1\n[world]\nvehicle_count = 10\n").unwrap();
        assert_eq!(cfg.world.vehicle_count, 10);
        assert_eq!(cfg.world.server_count, 5);
        assert_eq!(cfg.policy.batch_size, 512);
    }

    #[test]
    fn bad_field_reports_path() {
        let err = RunConfig::from_toml("[world]\nbeta = 1.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("world.beta"), "{msg}");
    }

    #[test]
    fn non_monotone_measurement_rejected() {
        let toml = r#"
[measurement]
uplink_mean_kbit = [16.0, 20.0, 3.6, 0.8, 0.0]
"#;
        let err = RunConfig::from_toml(toml).unwrap_err();
        assert!(err.to_string().contains("uplink_mean_kbit"));
    }

    #[test]
    fn unknown_field_rejected() {
        let err = RunConfig::from_toml("[world]\nnope = 3\n").unwrap_err();
        assert!(matches!(err, CoreError::Config { .. }));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back.world.vehicle_count, cfg.world.vehicle_count);
        assert_eq!(
            back.measurement.uplink_mean_kbit,
            cfg.measurement.uplink_mean_kbit
        );
    }
}
