//! Glue between simulator completions and the maps: routes each completed
//! task's detections through match → combine, expires stale objects, and
//! maintains per-vehicle local maps via sequence-numbered deltas.
//!
//! Matching always resolves against the edge-side global map; partition
//! choices only change timing, which the simulator already models.

use crate::error::{CoreError, Result};
use crate::map::{match_object, Detection, GlobalMap, MapObject, MapParams};

/// A broadcastable batch of map changes.
#[derive(Debug, Clone, PartialEq)]
pub struct MapDelta {
    /// Strictly increasing, starting at 1.
    pub seq: u64,
    /// Post-update snapshots of every changed object.
    pub updated: Vec<MapObject>,
    pub removed: Vec<u64>,
    pub origin_task: u64,
    pub time: f64,
}

impl MapDelta {
    pub fn is_empty(&self) -> bool {
        self.updated.is_empty() && self.removed.is_empty()
    }
}

/// The edge-side pipeline: global map plus the delta sequence counter.
#[derive(Debug, Clone)]
pub struct MapPipeline {
    pub global: GlobalMap,
    pub params: MapParams,
    next_seq: u64,
}

impl MapPipeline {
    pub fn new(params: MapParams) -> Self {
        Self {
            global: GlobalMap::new(params.ttl_s),
            params,
            next_seq: 1,
        }
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Ingest one completed task's detections: match each against the
    /// global map, upsert, then expire outdated objects. Returns the
    /// consolidated delta (updated objects that survived expiry, plus
    /// removals).
    pub fn ingest_completion(
        &mut self,
        task_id: u64,
        detections: &[Detection],
        now: f64,
    ) -> Result<MapDelta> {
        let mut touched: Vec<u64> = Vec::new();
        for det in detections {
            let matched = match_object(
                &det.feature,
                &det.location,
                &self.global,
                self.params.match_weight,
                self.params.match_gate_m,
                self.params.match_threshold,
            )?;
            let entry = self.global.upsert_observation(matched, det, &self.params);
            if !touched.contains(&entry.object.id) {
                touched.push(entry.object.id);
            }
        }
        let removed = self.global.expire_objects(now);
        let updated: Vec<MapObject> = touched
            .iter()
            .filter(|id| !removed.contains(id))
            .filter_map(|id| self.global.get(*id).cloned())
            .collect();
        let seq = self.next_seq;
        self.next_seq += 1;
        Ok(MapDelta {
            seq,
            updated,
            removed,
            origin_task: task_id,
            time: now,
        })
    }
}

/// A vehicle's delta-synchronized mirror of the global map.
#[derive(Debug, Clone)]
pub struct LocalMap {
    pub map: GlobalMap,
    last_seq: u64,
}

impl LocalMap {
    pub fn new(ttl_s: f64) -> Self {
        Self {
            map: GlobalMap::new(ttl_s),
            last_seq: 0,
        }
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Apply the next delta in sequence. A gap means a lost delta; the
    /// caller must resync from a full snapshot.
    pub fn apply_delta(&mut self, delta: &MapDelta) -> Result<()> {
        if delta.seq != self.last_seq + 1 {
            return Err(CoreError::SequenceGap {
                expected: self.last_seq + 1,
                got: delta.seq,
            });
        }
        for obj in &delta.updated {
            self.map.put(obj.clone());
        }
        for id in &delta.removed {
            self.map.remove(*id);
        }
        self.last_seq = delta.seq;
        Ok(())
    }

    /// Full-map snapshot recovery after a sequence gap.
    pub fn resync(&mut self, pipeline: &MapPipeline, seq: u64) {
        self.map = pipeline.global.clone();
        self.last_seq = seq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{FeatureVector, WorldPoint};

    fn det(t: f64, conf: f64, x: f64, y: f64, feature: Vec<f64>, source: u32) -> Detection {
        Detection {
            bbox: None,
            depth_m: None,
            class_id: 1,
            confidence: conf,
            feature: FeatureVector(feature),
            location: WorldPoint::ground(x, y),
            source_vehicle: source,
            timestamp: t,
        }
    }

    #[test]
    fn two_views_fuse_into_one_object() {
        let mut pipe = MapPipeline::new(MapParams::default());
        // Two vehicles see the same pedestrian in the same round with
        // noisy positions; confidences weight the fused location.
        let d1 = det(1.0, 0.9, 10.0, 0.0, vec![1.0, 2.0, 0.0, 0.0], 0);
        let d2 = det(1.02, 0.1, 10.4, 0.0, vec![1.05, 2.1, 0.0, 0.0], 1);
        let delta1 = pipe
            .ingest_completion(100, std::slice::from_ref(&d1), 1.0)
            .unwrap();
        let delta2 = pipe
            .ingest_completion(101, std::slice::from_ref(&d2), 1.02)
            .unwrap();
        assert_eq!(pipe.global.len(), 1, "one map object, not two");
        assert_eq!(delta1.updated.len(), 1);
        assert_eq!(delta2.updated.len(), 1);
        let fused = delta2.updated[0].location;
        let expected_x = (0.9 * 10.0 + 0.1 * 10.4) / 1.0;
        assert!(
            (fused.x - expected_x).abs() < 1e-12,
            "{} vs {expected_x}",
            fused.x
        );
    }

    #[test]
    fn novel_object_gets_new_id() {
        let mut pipe = MapPipeline::new(MapParams::default());
        let first = pipe
            .ingest_completion(1, &[det(0.0, 0.9, 0.0, 0.0, vec![0.0; 4], 0)], 0.0)
            .unwrap();
        // A feature far beyond the threshold forces a fresh identity.
        let second = pipe
            .ingest_completion(2, &[det(0.1, 0.9, 1.0, 0.0, vec![50.0; 4], 0)], 0.1)
            .unwrap();
        assert_eq!(first.updated[0].id, 0);
        assert_eq!(second.updated[0].id, 1);
        assert_eq!(pipe.global.len(), 2);
    }

    #[test]
    fn empty_ingest_carries_only_expirations() {
        let mut pipe = MapPipeline::new(MapParams::default());
        pipe.ingest_completion(1, &[det(0.0, 0.9, 0.0, 0.0, vec![0.0; 4], 0)], 0.0)
            .unwrap();
        let quiet = pipe.ingest_completion(2, &[], 1.0).unwrap();
        assert!(quiet.updated.is_empty() && quiet.removed.is_empty());
        let expiring = pipe.ingest_completion(3, &[], 10.0).unwrap();
        assert_eq!(expiring.removed, vec![0]);
        assert!(expiring.updated.is_empty());
    }

    #[test]
    fn delta_replay_reproduces_global_state() {
        let mut pipe = MapPipeline::new(MapParams::default());
        let mut local = LocalMap::new(pipe.params.ttl_s);
        let mut deltas = Vec::new();
        for k in 0..20 {
            let t = 0.2 * k as f64;
            let who = k % 3;
            let d = det(
                t,
                0.6 + 0.1 * (k % 4) as f64,
                (who * 30) as f64 + 0.1 * k as f64,
                5.0,
                vec![who as f64 * 10.0; 4],
                who as u32,
            );
            deltas.push(pipe.ingest_completion(k as u64, &[d], t).unwrap());
        }
        for d in &deltas {
            local.apply_delta(d).unwrap();
        }
        let global_objs: Vec<_> = pipe.global.objects().cloned().collect();
        let local_objs: Vec<_> = local.map.objects().cloned().collect();
        assert_eq!(global_objs, local_objs);
    }

    #[test]
    fn sequence_gap_requires_resync() {
        let mut pipe = MapPipeline::new(MapParams::default());
        let mut local = LocalMap::new(pipe.params.ttl_s);
        let d1 = pipe
            .ingest_completion(1, &[det(0.0, 0.9, 0.0, 0.0, vec![0.0; 4], 0)], 0.0)
            .unwrap();
        let _d2 = pipe
            .ingest_completion(2, &[det(0.1, 0.9, 0.5, 0.0, vec![0.0; 4], 1)], 0.1)
            .unwrap();
        let d3 = pipe
            .ingest_completion(3, &[det(0.2, 0.9, 1.0, 0.0, vec![0.0; 4], 0)], 0.2)
            .unwrap();
        local.apply_delta(&d1).unwrap();
        assert!(matches!(
            local.apply_delta(&d3),
            Err(CoreError::SequenceGap {
                expected: 2,
                got: 3
            })
        ));
        // Recover with a snapshot, then continue in order.
        local.resync(&pipe, d3.seq);
        assert_eq!(local.last_seq(), 3);
        let global_objs: Vec<_> = pipe.global.objects().cloned().collect();
        let local_objs: Vec<_> = local.map.objects().cloned().collect();
        assert_eq!(global_objs, local_objs);
    }

    #[test]
    fn empty_delta_advances_sequence_only() {
        let mut pipe = MapPipeline::new(MapParams::default());
        let mut local = LocalMap::new(pipe.params.ttl_s);
        let d = pipe.ingest_completion(1, &[], 0.0).unwrap();
        assert!(d.is_empty());
        local.apply_delta(&d).unwrap();
        assert_eq!(local.last_seq(), 1);
        assert!(local.map.is_empty());
    }
}
