//! Synthetic world generation: vehicle and pedestrian trajectories on a grid
//! road network, ground-truth objects with latent features, and noisy
//! detections standing in for the perception stack.

mod measurement;

pub use measurement::{draw_budgets, MeasurementModel, StageBudgets};

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::coverage::CoverageDisk;
use crate::error::{CoreError, Result};
use crate::map::{Detection, FeatureVector, WorldPoint};
use crate::seeds;

pub const CLASS_VEHICLE: u16 = 0;
pub const CLASS_PEDESTRIAN: u16 = 1;

/// An object with a predefined path and a fixed base latent vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub id: u64,
    pub class_id: u16,
    /// Time-stamped waypoints; positions interpolate linearly between them.
    pub waypoints: Vec<(f64, WorldPoint)>,
    pub base_feature: FeatureVector,
}

impl GroundTruthObject {
    pub fn position(&self, t: f64) -> WorldPoint {
        let wps = &self.waypoints;
        debug_assert!(!wps.is_empty());
        if t <= wps[0].0 {
            return wps[0].1;
        }
        match wps.binary_search_by(|(wt, _)| wt.partial_cmp(&t).unwrap()) {
            Ok(i) => wps[i].1,
            Err(i) => {
                if i >= wps.len() {
                    return wps[wps.len() - 1].1;
                }
                let (t0, a) = wps[i - 1];
                let (t1, b) = wps[i];
                let f = (t - t0) / (t1 - t0);
                WorldPoint::new(
                    a.x + f * (b.x - a.x),
                    a.y + f * (b.y - a.y),
                    a.z + f * (b.z - a.z),
                )
            }
        }
    }
}

/// Generated world: vehicles first (object id == vehicle id), then
/// pedestrians, plus per-vehicle hardware and coverage draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub objects: Vec<GroundTruthObject>,
    pub vehicle_count: usize,
    pub radii_m: Vec<f64>,
    pub cpu_mults: Vec<f64>,
    pub gpu_mults: Vec<f64>,
    pub extent_m: f64,
    /// Base station sits at the map center.
    pub base_station: WorldPoint,
}

impl World {
    pub fn vehicle_position(&self, vehicle_id: u32, t: f64) -> WorldPoint {
        self.objects[vehicle_id as usize].position(t)
    }

    /// Effective onboard compute-speed multiplier.
    pub fn compute_mult(&self, vehicle_id: u32) -> f64 {
        0.5 * (self.cpu_mults[vehicle_id as usize] + self.gpu_mults[vehicle_id as usize])
    }

    pub fn vehicle_disk(&self, vehicle_id: u32, t: f64) -> CoverageDisk {
        CoverageDisk {
            vehicle_id,
            center: self.vehicle_position(vehicle_id, t),
            radius_m: self.radii_m[vehicle_id as usize],
        }
    }

    pub fn disks(&self, t: f64) -> Vec<CoverageDisk> {
        (0..self.vehicle_count as u32)
            .map(|v| self.vehicle_disk(v, t))
            .collect()
    }

    /// Build a world from explicit trajectories (tests and constructed
    /// scenarios).
    pub fn from_parts(
        objects: Vec<GroundTruthObject>,
        vehicle_count: usize,
        radii_m: Vec<f64>,
        extent_m: f64,
    ) -> Self {
        let n = vehicle_count;
        Self {
            objects,
            vehicle_count: n,
            radii_m,
            cpu_mults: vec![1.0; n],
            gpu_mults: vec![1.0; n],
            extent_m,
            base_station: WorldPoint::ground(extent_m / 2.0, extent_m / 2.0),
        }
    }
}

fn grid_waypoints<R: Rng>(
    extent: f64,
    spacing: f64,
    speed: f64,
    duration: f64,
    rng: &mut R,
) -> Vec<(f64, WorldPoint)> {
    let n = (extent / spacing).floor() as i64;
    let node = |i: i64, j: i64| WorldPoint::ground(i as f64 * spacing, j as f64 * spacing);
    let mut i = rng.gen_range(0..=n);
    let mut j = rng.gen_range(0..=n);
    let mut heading: Option<(i64, i64)> = None;
    let mut t = 0.0;
    let mut wps = vec![(t, node(i, j))];
    while t < duration + 5.0 {
        let mut moves: Vec<(i64, i64)> = Vec::with_capacity(4);
        for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            if (0..=n).contains(&(i + di)) && (0..=n).contains(&(j + dj)) {
                moves.push((di, dj));
            }
        }
        // Traffic mostly flows straight through intersections.
        let step = match heading {
            Some(h) if moves.contains(&h) && rng.gen_bool(0.75) => h,
            _ => moves[rng.gen_range(0..moves.len())],
        };
        heading = Some(step);
        t += spacing / speed;
        i += step.0;
        j += step.1;
        wps.push((t, node(i, j)));
    }
    wps
}

fn wander_waypoints<R: Rng>(
    extent: f64,
    speed: f64,
    duration: f64,
    rng: &mut R,
) -> Vec<(f64, WorldPoint)> {
    let mut pos = WorldPoint::ground(rng.gen_range(0.0..extent), rng.gen_range(0.0..extent));
    let mut t = 0.0;
    let mut wps = vec![(t, pos)];
    while t < duration + 5.0 {
        let target = WorldPoint::ground(rng.gen_range(0.0..extent), rng.gen_range(0.0..extent));
        let dist = pos.ground_dist(&target).max(0.1);
        t += dist / speed;
        pos = target;
        wps.push((t, pos));
    }
    wps
}

/// Generate the world for a scenario. Fully determined by (config, seed).
pub fn generate(cfg: &ScenarioConfig, seed: u64) -> Result<World> {
    let nodes_per_side = (cfg.extent_m / cfg.road_spacing_m).floor() as usize + 1;
    let node_count = nodes_per_side * nodes_per_side;
    if cfg.vehicle_count > 4 * node_count {
        return Err(CoreError::config(
            "world.extent_m",
            format!(
                "cannot place {} vehicles on a {}-node road grid",
                cfg.vehicle_count, node_count
            ),
        ));
    }

    let mut rng = seeds::rng(seed, seeds::label::WORLD);
    let mut objects = Vec::with_capacity(cfg.vehicle_count + cfg.pedestrian_count);

    for v in 0..cfg.vehicle_count {
        let speed = rng.gen_range(cfg.vehicle_speed_mps[0]..=cfg.vehicle_speed_mps[1]);
        let waypoints = grid_waypoints(
            cfg.extent_m,
            cfg.road_spacing_m,
            speed,
            cfg.duration_s,
            &mut rng,
        );
        let base_feature = FeatureVector(
            (0..cfg.feature_dim)
                .map(|_| standard_normal(&mut rng))
                .collect(),
        );
        objects.push(GroundTruthObject {
            id: v as u64,
            class_id: CLASS_VEHICLE,
            waypoints,
            base_feature,
        });
    }
    for p in 0..cfg.pedestrian_count {
        let speed = rng.gen_range(cfg.pedestrian_speed_mps[0]..=cfg.pedestrian_speed_mps[1]);
        let waypoints = wander_waypoints(cfg.extent_m, speed, cfg.duration_s, &mut rng);
        let base_feature = FeatureVector(
            (0..cfg.feature_dim)
                .map(|_| standard_normal(&mut rng))
                .collect(),
        );
        objects.push(GroundTruthObject {
            id: (cfg.vehicle_count + p) as u64,
            class_id: CLASS_PEDESTRIAN,
            waypoints,
            base_feature,
        });
    }

    let radii_m = (0..cfg.vehicle_count)
        .map(|_| rng.gen_range(cfg.coverage_radius_m[0]..=cfg.coverage_radius_m[1]))
        .collect();
    Ok(World {
        objects,
        vehicle_count: cfg.vehicle_count,
        radii_m,
        cpu_mults: vec![1.0; cfg.vehicle_count],
        gpu_mults: vec![1.0; cfg.vehicle_count],
        extent_m: cfg.extent_m,
        base_station: WorldPoint::ground(cfg.extent_m / 2.0, cfg.extent_m / 2.0),
    })
}

impl World {
    /// Draw per-vehicle hardware multipliers from the measurement stream so
    /// world geometry is unaffected by measurement reconfiguration.
    pub fn assign_hardware(&mut self, range: [f64; 2], seed: u64) {
        let mut rng = seeds::rng(seed, seeds::label::MEASUREMENT);
        for v in 0..self.vehicle_count {
            self.cpu_mults[v] = rng.gen_range(range[0]..=range[1]);
            self.gpu_mults[v] = rng.gen_range(range[0]..=range[1]);
        }
    }

    /// Export the generated world (trajectories, latents, hardware draws)
    /// to a versioned trace file for later replay.
    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Trace<'a> {
            schema_version: u32,
            world: &'a World,
        }
        let text = toml::to_string(&Trace {
            schema_version: 1,
            world: self,
        })
        .map_err(|e| CoreError::invalid(format!("world serialization failed: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<World> {
        #[derive(Deserialize)]
        struct Trace {
            schema_version: u32,
            world: World,
        }
        let text = std::fs::read_to_string(path)?;
        let trace: Trace = toml::from_str(&text)
            .map_err(|e| CoreError::config("world trace", e.message().to_string()))?;
        if trace.schema_version != 1 {
            return Err(CoreError::config("schema_version", "expected 1"));
        }
        Ok(trace.world)
    }
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    Normal::new(0.0, 1.0).unwrap().sample(rng)
}

/// Sensor-noise knobs.
#[derive(Debug, Clone, Copy)]
pub struct SenseNoise {
    pub sigma_pos_m: f64,
    pub sigma_feat: f64,
}

/// One detection per ground-truth object inside the vehicle's coverage disk
/// (the vehicle never detects itself). Positions and features carry
/// zero-mean noise; confidence is uniform in [0.5, 1].
pub fn sense<R: Rng>(
    world: &World,
    vehicle_id: u32,
    t: f64,
    noise: &SenseNoise,
    rng: &mut R,
) -> Vec<Detection> {
    let center = world.vehicle_position(vehicle_id, t);
    let radius = world.radii_m[vehicle_id as usize];
    let mut out = Vec::new();
    for obj in &world.objects {
        if obj.class_id == CLASS_VEHICLE && obj.id == vehicle_id as u64 {
            continue;
        }
        let pos = obj.position(t);
        if center.ground_dist(&pos) > radius {
            continue;
        }
        let location = WorldPoint::new(
            pos.x + noise.sigma_pos_m * maybe_normal(noise.sigma_pos_m, rng),
            pos.y + noise.sigma_pos_m * maybe_normal(noise.sigma_pos_m, rng),
            pos.z,
        );
        let feature = FeatureVector(
            obj.base_feature
                .0
                .iter()
                .map(|b| b + noise.sigma_feat * maybe_normal(noise.sigma_feat, rng))
                .collect(),
        );
        out.push(Detection {
            bbox: None,
            depth_m: None,
            class_id: obj.class_id,
            confidence: rng.gen_range(0.5..=1.0),
            feature,
            location,
            source_vehicle: vehicle_id,
            timestamp: t,
        });
    }
    out
}

/// Standard normal draw that consumes no entropy when sigma is zero, so
/// zero-noise runs stay aligned with noisy ones elsewhere.
fn maybe_normal<R: Rng>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        standard_normal(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig {
            vehicle_count: 8,
            pedestrian_count: 5,
            duration_s: 10.0,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&cfg(), 42).unwrap();
        let b = generate(&cfg(), 42).unwrap();
        for (x, y) in a.objects.iter().zip(&b.objects) {
            assert_eq!(x.waypoints, y.waypoints);
            assert_eq!(x.base_feature, y.base_feature);
        }
        assert_eq!(a.radii_m, b.radii_m);

        let c = generate(&cfg(), 43).unwrap();
        assert_ne!(a.objects[0].waypoints, c.objects[0].waypoints);
    }

    #[test]
    fn object_counts_match_config() {
        let w = generate(&cfg(), 1).unwrap();
        assert_eq!(w.objects.len(), 13);
        assert_eq!(w.vehicle_count, 8);
        assert!(w
            .objects
            .iter()
            .take(8)
            .all(|o| o.class_id == CLASS_VEHICLE));
    }

    #[test]
    fn displacement_bounded_by_speed() {
        let c = cfg();
        let w = generate(&c, 7).unwrap();
        let dt = 0.05;
        for obj in &w.objects {
            let vmax = if obj.class_id == CLASS_VEHICLE {
                c.vehicle_speed_mps[1]
            } else {
                c.pedestrian_speed_mps[1]
            };
            let mut t = 0.0;
            while t < c.duration_s {
                let a = obj.position(t);
                let b = obj.position(t + dt);
                assert!(
                    a.ground_dist(&b) <= vmax * dt + 1e-9,
                    "object {} jumped {} m in {dt} s",
                    obj.id,
                    a.ground_dist(&b)
                );
                t += dt;
            }
        }
    }

    #[test]
    fn world_trace_round_trips() {
        let w = generate(&cfg(), 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("world.toml");
        w.save(&path).unwrap();
        let back = World::load(&path).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn infeasible_extent_is_config_error() {
        let mut c = cfg();
        c.vehicle_count = 1000;
        c.extent_m = 40.0;
        c.road_spacing_m = 40.0;
        assert!(matches!(generate(&c, 1), Err(CoreError::Config { .. })));
    }

    #[test]
    fn sensing_respects_radius_and_noise() {
        let c = cfg();
        let w = generate(&c, 11).unwrap();
        let noise = SenseNoise {
            sigma_pos_m: 0.0,
            sigma_feat: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let dets = sense(&w, 0, 1.0, &noise, &mut rng);
        let center = w.vehicle_position(0, 1.0);
        for d in &dets {
            assert!(d.location.ground_dist(&center) <= w.radii_m[0] + 1e-9);
        }
        // Every in-range object except the vehicle itself is present.
        let expected = w
            .objects
            .iter()
            .filter(|o| !(o.class_id == CLASS_VEHICLE && o.id == 0))
            .filter(|o| o.position(1.0).ground_dist(&center) <= w.radii_m[0])
            .count();
        assert_eq!(dets.len(), expected);
    }

    #[test]
    fn zero_noise_detection_equals_truth() {
        let c = cfg();
        let w = generate(&c, 13).unwrap();
        let noise = SenseNoise {
            sigma_pos_m: 0.0,
            sigma_feat: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for d in sense(&w, 2, 0.5, &noise, &mut rng) {
            // Find the source object by matching features (exact at zero noise).
            let obj = w
                .objects
                .iter()
                .find(|o| o.base_feature == d.feature)
                .expect("feature identifies the object");
            let truth = obj.position(0.5);
            assert_eq!(d.location.x, truth.x);
            assert_eq!(d.location.y, truth.y);
        }
    }

    #[test]
    fn two_observers_share_base_latent() {
        let mut c = cfg();
        c.sigma_feat = 0.2;
        let w = generate(&c, 15).unwrap();
        let noise = SenseNoise {
            sigma_pos_m: 0.3,
            sigma_feat: 0.2,
        };
        // Find a pedestrian seen by two vehicles at t=0.
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        'outer: for ped in w.objects.iter().filter(|o| o.class_id == CLASS_PEDESTRIAN) {
            let pos = ped.position(0.0);
            let observers: Vec<u32> = (0..w.vehicle_count as u32)
                .filter(|&v| w.vehicle_position(v, 0.0).ground_dist(&pos) <= w.radii_m[v as usize])
                .collect();
            if observers.len() >= 2 {
                for &v in &observers[..2] {
                    let dets = sense(&w, v, 0.0, &noise, &mut rng);
                    let best = dets
                        .iter()
                        .map(|d| d.feature.dist_sq(&ped.base_feature))
                        .fold(f64::INFINITY, f64::min);
                    // Expected noise distance is dim * sigma² = 32 * 0.04.
                    assert!(best < 10.0, "noisy copy strays too far: {best}");
                }
                break 'outer;
            }
        }
    }
}
