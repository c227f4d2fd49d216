//! State encodings for the central and distributed agents.
//!
//! The exact coordinate layouts are fixed here and exported as a schema file
//! (ordered coordinate names) so experiments stay reproducible across
//! versions.

use std::path::Path;

use crate::error::{CoreError, Result};

/// Hardware multipliers are normalized by this bound.
pub const MULT_NORM: f64 = 2.0;
/// Previous-latency coordinate saturates at this many seconds.
pub const LATENCY_CAP_S: f64 = 2.0;

/// Per-vehicle observable status.
#[derive(Debug, Clone, Copy)]
pub struct VehicleStatus {
    /// Current channel quality, dB.
    pub snr_db: f64,
    /// Reference channel quality used for normalization, dB.
    pub snr_ref_db: f64,
    /// Onboard CPU-class compute-speed multiplier.
    pub cpu_mult: f64,
    /// Onboard GPU-class compute-speed multiplier.
    pub gpu_mult: f64,
}

/// System-wide status visible to the central controller.
#[derive(Debug, Clone, Copy)]
pub struct SystemStatus {
    /// Edge-server capability multiplier.
    pub server_mult: f64,
    pub connected: usize,
    pub queued: usize,
    pub max_vehicles: usize,
    pub bandwidth_hz: f64,
    pub reference_bandwidth_hz: f64,
}

impl VehicleStatus {
    /// Reference status: channel at the reference quality, unit multipliers.
    pub fn reference() -> Self {
        Self {
            snr_db: 60.0,
            snr_ref_db: 60.0,
            cpu_mult: 1.0,
            gpu_mult: 1.0,
        }
    }
}

impl SystemStatus {
    /// Reference status: unit server multiplier, everyone connected, half
    /// the fleet queued, bandwidth at the reference.
    pub fn reference(max_vehicles: usize) -> Self {
        Self {
            server_mult: 1.0,
            connected: max_vehicles,
            queued: max_vehicles / 2,
            max_vehicles,
            bandwidth_hz: 100_000.0,
            reference_bandwidth_hz: 100_000.0,
        }
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn vehicle_coords(v: &VehicleStatus) -> [f64; 3] {
    [
        clamp01(v.snr_db / v.snr_ref_db),
        clamp01(v.cpu_mult / MULT_NORM),
        clamp01(v.gpu_mult / MULT_NORM),
    ]
}

/// Central state: vehicle status followed by system status.
pub fn encode_state_central(v: &VehicleStatus, s: &SystemStatus) -> Vec<f64> {
    let vc = vehicle_coords(v);
    let max = s.max_vehicles.max(1) as f64;
    vec![
        vc[0],
        vc[1],
        vc[2],
        clamp01(s.server_mult / MULT_NORM),
        clamp01(s.connected as f64 / max),
        clamp01(s.queued as f64 / max),
        clamp01(s.bandwidth_hz / s.reference_bandwidth_hz),
    ]
}

pub fn central_state_dim() -> usize {
    7
}

/// Distributed state: vehicle status, one-hot previous action (with a slot
/// for "unscheduled"), and the capped previous latency.
pub fn encode_state_dist(
    v: &VehicleStatus,
    y_prev: i32,
    l_prev_s: f64,
    partition_count: usize,
) -> Result<Vec<f64>> {
    if y_prev < -1 || y_prev >= partition_count as i32 {
        return Err(CoreError::invalid(format!(
            "y_prev {y_prev} outside {{-1, 0..{}}}",
            partition_count - 1
        )));
    }
    if l_prev_s < 0.0 {
        return Err(CoreError::invalid("previous latency must be >= 0"));
    }
    let vc = vehicle_coords(v);
    let mut out = Vec::with_capacity(dist_state_dim(partition_count));
    out.extend_from_slice(&vc);
    for y in 0..partition_count as i32 {
        out.push(if y == y_prev { 1.0 } else { 0.0 });
    }
    out.push(if y_prev == -1 { 1.0 } else { 0.0 });
    out.push(clamp01(l_prev_s / LATENCY_CAP_S));
    Ok(out)
}

pub fn dist_state_dim(partition_count: usize) -> usize {
    3 + partition_count + 1 + 1
}

pub fn central_schema() -> Vec<String> {
    [
        "channel_quality",
        "cpu_mult_norm",
        "gpu_mult_norm",
        "server_mult_norm",
        "connected_frac",
        "queued_frac",
        "bandwidth_frac",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

pub fn dist_schema(partition_count: usize) -> Vec<String> {
    let mut names = vec![
        "channel_quality".to_string(),
        "cpu_mult_norm".to_string(),
        "gpu_mult_norm".to_string(),
    ];
    for y in 0..partition_count {
        names.push(format!("y_prev_is_{y}"));
    }
    names.push("y_prev_unscheduled".to_string());
    names.push("l_prev_norm".to_string());
    names
}

/// Write the ordered coordinate names, one per line.
pub fn write_schema(path: &Path, names: &[String]) -> Result<()> {
    let mut body = String::new();
    for (i, n) in names.iter().enumerate() {
        body.push_str(&format!("{i} {n}\n"));
    }
    std::fs::write(path, body)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_reference_vector() {
        let v = VehicleStatus::reference();
        let s = SystemStatus::reference(50);
        let got = encode_state_central(&v, &s);
        assert_eq!(got, vec![1.0, 0.5, 0.5, 0.5, 1.0, 0.5, 1.0]);
        assert_eq!(got.len(), central_state_dim());
        assert_eq!(central_schema().len(), got.len());
    }

    #[test]
    fn queued_count_touches_one_coordinate() {
        let v = VehicleStatus::reference();
        let mut s = SystemStatus::reference(50);
        let a = encode_state_central(&v, &s);
        s.queued *= 2;
        let b = encode_state_central(&v, &s);
        let diffs: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
        assert_eq!(diffs, vec![5]);
    }

    #[test]
    fn encoding_is_deterministic() {
        let v = VehicleStatus {
            snr_db: 31.0,
            snr_ref_db: 60.0,
            cpu_mult: 1.3,
            gpu_mult: 0.6,
        };
        let s = SystemStatus::reference(50);
        assert_eq!(encode_state_central(&v, &s), encode_state_central(&v, &s));
    }

    #[test]
    fn dist_first_offload() {
        let v = VehicleStatus::reference();
        let got = encode_state_dist(&v, -1, 0.0, 5).unwrap();
        assert_eq!(got.len(), dist_state_dim(5));
        // Unscheduled slot set, latency coordinate zero.
        assert_eq!(got[3 + 5], 1.0);
        assert_eq!(got[3 + 5 + 1], 0.0);
        assert!(got[3..8].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn dist_latency_saturates() {
        let v = VehicleStatus::reference();
        let got = encode_state_dist(&v, 2, 4.0, 5).unwrap();
        assert_eq!(*got.last().unwrap(), 1.0);
        // Exactly one one-hot coordinate among the partition slots.
        let ones: Vec<usize> = (3..8).filter(|&i| got[i] == 1.0).collect();
        assert_eq!(ones, vec![3 + 2]);
        assert_eq!(got[8], 0.0);
    }

    #[test]
    fn dist_rejects_out_of_range() {
        let v = VehicleStatus::reference();
        assert!(encode_state_dist(&v, 5, 0.0, 5).is_err());
        assert!(encode_state_dist(&v, -2, 0.0, 5).is_err());
        assert!(encode_state_dist(&v, 0, -0.1, 5).is_err());
    }

    #[test]
    fn schema_lines_match_dims() {
        assert_eq!(dist_schema(5).len(), dist_state_dim(5));
    }
}
