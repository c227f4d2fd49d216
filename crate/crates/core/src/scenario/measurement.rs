//! Task-stage budget draws.
//!
//! Stage times and payload sizes are lognormal around configured per-partition
//! means: onboard time grows with the partition while uplink size and edge
//! time shrink, matching the pipeline cut moving toward the vehicle. The
//! numeric defaults are synthetic desk-scale stand-ins.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};

use crate::config::MeasurementConfig;
use crate::error::{CoreError, Result};

/// Per-partition stage distributions.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    pub onboard_mean_s: Vec<f64>,
    pub uplink_mean_bits: Vec<f64>,
    pub edge_mean_s: Vec<f64>,
    pub downlink_mean_bits: f64,
    pub sigma_log: f64,
}

impl MeasurementModel {
    pub fn from_config(cfg: &MeasurementConfig) -> Self {
        Self {
            onboard_mean_s: cfg.onboard_mean_s.clone(),
            uplink_mean_bits: cfg.uplink_mean_kbit.iter().map(|k| k * 1000.0).collect(),
            edge_mean_s: cfg.edge_mean_s.clone(),
            downlink_mean_bits: cfg.downlink_mean_kbit * 1000.0,
            sigma_log: cfg.sigma_log,
        }
    }

    pub fn partition_count(&self) -> usize {
        self.onboard_mean_s.len()
    }
}

/// Budgets a freshly created task starts with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageBudgets {
    pub onboard_s: f64,
    pub uplink_bits: f64,
    pub edge_s: f64,
    pub downlink_bits: f64,
}

/// Lognormal draw with the requested mean; a zero mean draws exactly zero.
fn lognormal_mean<R: Rng>(mean: f64, sigma: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if sigma == 0.0 {
        return mean;
    }
    let mu = mean.ln() - sigma * sigma / 2.0;
    LogNormal::new(mu, sigma).unwrap().sample(rng)
}

/// Draw seeded stage budgets for partition `y`. The onboard time is divided
/// by the vehicle's hardware multiplier; one draw per stage is consumed even
/// for zero-mean stages so streams stay aligned across partitions.
pub fn draw_budgets<R: Rng>(
    model: &MeasurementModel,
    y: usize,
    hw_mult: f64,
    rng: &mut R,
) -> Result<StageBudgets> {
    if y >= model.partition_count() {
        return Err(CoreError::invalid(format!(
            "partition {y} outside 0..{}",
            model.partition_count()
        )));
    }
    if !(hw_mult > 0.0) {
        return Err(CoreError::invalid("hardware multiplier must be positive"));
    }
    let onboard = lognormal_mean(model.onboard_mean_s[y], model.sigma_log, rng) / hw_mult;
    let uplink = lognormal_mean(model.uplink_mean_bits[y], model.sigma_log, rng);
    let edge = lognormal_mean(model.edge_mean_s[y], model.sigma_log, rng);
    let downlink = lognormal_mean(model.downlink_mean_bits, model.sigma_log, rng);
    Ok(StageBudgets {
        onboard_s: onboard,
        uplink_bits: uplink,
        edge_s: edge,
        downlink_bits: downlink,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MeasurementConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> MeasurementModel {
        MeasurementModel::from_config(&MeasurementConfig::default())
    }

    #[test]
    fn extreme_partitions() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = m.partition_count() - 1;

        let eo = draw_budgets(&m, 0, 1.0, &mut rng).unwrap();
        assert_eq!(eo.onboard_s, 0.0, "acquisition only");
        assert!(eo.uplink_bits > 10_000.0, "raw-frame payload");

        let lp = draw_budgets(&m, n, 1.0, &mut rng).unwrap();
        assert_eq!(lp.uplink_bits, 0.0);
        assert_eq!(lp.edge_s, 0.0);
        assert!(lp.downlink_bits > 0.0, "map-delta downlink remains");
        assert!(lp.onboard_s > 0.0);
    }

    #[test]
    fn seeded_draws_reproduce() {
        let m = model();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for y in 0..m.partition_count() {
            assert_eq!(
                draw_budgets(&m, y, 1.3, &mut a).unwrap(),
                draw_budgets(&m, y, 1.3, &mut b).unwrap()
            );
        }
    }

    #[test]
    fn hardware_multiplier_scales_onboard_only() {
        let m = model();
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let slow = draw_budgets(&m, 2, 0.5, &mut a).unwrap();
        let fast = draw_budgets(&m, 2, 2.0, &mut b).unwrap();
        assert!((slow.onboard_s / fast.onboard_s - 4.0).abs() < 1e-9);
        assert_eq!(slow.uplink_bits, fast.uplink_bits);
    }

    #[test]
    fn uplink_means_strictly_decrease_empirically() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples = 10_000;
        let mut means = Vec::new();
        for y in 0..m.partition_count() {
            let mut sum = 0.0;
            for _ in 0..samples {
                sum += draw_budgets(&m, y, 1.0, &mut rng).unwrap().uplink_bits;
            }
            means.push(sum / samples as f64);
        }
        for pair in means.windows(2) {
            assert!(pair[0] > pair[1], "uplink means {means:?}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(draw_budgets(&m, 9, 1.0, &mut rng).is_err());
        assert!(draw_budgets(&m, 0, 0.0, &mut rng).is_err());
    }
}
