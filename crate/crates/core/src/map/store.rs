//! The global object map: tracked objects, observation fusion, and TTL expiry.

use std::collections::{BTreeMap, VecDeque};

use super::fuse::combine_location;
use super::{Detection, FeatureVector, MapParams, WorldPoint};

/// One raw observation retained for same-round fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub timestamp: f64,
    pub confidence: f64,
    pub location: WorldPoint,
}

/// A tracked road object.
#[derive(Debug, Clone, PartialEq)]
pub struct MapObject {
    pub id: u64,
    pub class_id: u16,
    pub location: WorldPoint,
    /// Multi-view feature set, most recent last, capped.
    pub features: VecDeque<FeatureVector>,
    pub confidence: f64,
    /// Time-ordered fused locations, strictly increasing timestamps.
    pub history: Vec<(f64, WorldPoint)>,
    pub last_update: f64,
    /// Observations close enough in time to fuse with the next update.
    pub recent_obs: Vec<Observation>,
}

/// Delta entry describing one changed object.
#[derive(Debug, Clone, PartialEq)]
pub struct MapDeltaEntry {
    pub object: MapObject,
    pub created: bool,
}

/// Edge-resident registry of all active objects.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMap {
    objects: BTreeMap<u64, MapObject>,
    pub ttl_s: f64,
    next_id: u64,
}

impl GlobalMap {
    pub fn new(ttl_s: f64) -> Self {
        Self {
            objects: BTreeMap::new(),
            ttl_s,
            next_id: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&MapObject> {
        self.objects.get(&id)
    }

    pub fn objects(&self) -> impl Iterator<Item = &MapObject> {
        self.objects.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.objects.keys().copied()
    }

    /// Insert or update the object the detection was matched to.
    ///
    /// `matched` carries the existing id, or `None` for a fresh object. The
    /// feature joins the capped multi-view set, the location is refused from
    /// observations inside the fusion window, history and `last_update`
    /// advance, and the post-state is returned as a delta entry.
    pub fn upsert_observation(
        &mut self,
        matched: Option<u64>,
        det: &Detection,
        params: &MapParams,
    ) -> MapDeltaEntry {
        let (id, created) = match matched {
            Some(id) if self.objects.contains_key(&id) => (id, false),
            _ => {
                let id = self.next_id;
                self.next_id += 1;
                self.objects.insert(
                    id,
                    MapObject {
                        id,
                        class_id: det.class_id,
                        location: det.location,
                        features: VecDeque::new(),
                        confidence: det.confidence,
                        history: Vec::new(),
                        last_update: det.timestamp,
                        recent_obs: Vec::new(),
                    },
                );
                (id, true)
            }
        };

        let obj = self.objects.get_mut(&id).expect("object just ensured");

        obj.features.push_back(det.feature.clone());
        while obj.features.len() > params.feature_cap {
            obj.features.pop_front();
        }

        obj.recent_obs.push(Observation {
            timestamp: det.timestamp,
            confidence: det.confidence,
            location: det.location,
        });
        // Only observations inside the fusion window of the newest one
        // participate in the combined location; older ones already live in
        // history.
        let anchor = obj
            .recent_obs
            .iter()
            .map(|o| o.timestamp)
            .fold(f64::NEG_INFINITY, f64::max);
        obj.recent_obs
            .retain(|o| anchor - o.timestamp <= params.fusion_window_s);

        let fused: Vec<(f64, WorldPoint)> = obj
            .recent_obs
            .iter()
            .map(|o| (o.confidence, o.location))
            .collect();
        let location = combine_location(&fused).expect("window is non-empty");
        obj.location = location;
        obj.confidence = obj
            .recent_obs
            .iter()
            .map(|o| o.confidence)
            .fold(0.0, f64::max);

        match obj.history.last_mut() {
            Some((t, g)) if *t >= anchor => *g = location,
            _ => obj.history.push((anchor, location)),
        }
        let excess = obj.history.len().saturating_sub(params.history_cap);
        if excess > 0 {
            obj.history.drain(..excess);
        }
        obj.last_update = obj.last_update.max(det.timestamp);

        MapDeltaEntry {
            object: obj.clone(),
            created,
        }
    }

    /// Remove every object whose last update is strictly older than the TTL.
    /// An object updated exactly `ttl` ago is retained.
    pub fn expire_objects(&mut self, now: f64) -> Vec<u64> {
        let ttl = self.ttl_s;
        let removed: Vec<u64> = self
            .objects
            .iter()
            .filter(|(_, o)| now - o.last_update > ttl)
            .map(|(id, _)| *id)
            .collect();
        for id in &removed {
            self.objects.remove(id);
        }
        removed
    }

    /// Replace an object wholesale (delta application on mirrors).
    pub fn put(&mut self, obj: MapObject) {
        self.next_id = self.next_id.max(obj.id + 1);
        self.objects.insert(obj.id, obj);
    }

    pub fn remove(&mut self, id: u64) -> Option<MapObject> {
        self.objects.remove(&id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(t: f64, conf: f64, x: f64, y: f64) -> Detection {
        Detection {
            bbox: None,
            depth_m: None,
            class_id: 1,
            confidence: conf,
            feature: FeatureVector(vec![0.0; 4]),
            location: WorldPoint::ground(x, y),
            source_vehicle: 0,
            timestamp: t,
        }
    }

    #[test]
    fn new_id_creates_exactly_one_object() {
        let mut map = GlobalMap::new(3.0);
        let params = MapParams::default();
        let delta = map.upsert_observation(None, &det(0.0, 0.9, 1.0, 2.0), &params);
        assert!(delta.created);
        assert_eq!(map.len(), 1);
        assert_eq!(delta.object.location, WorldPoint::ground(1.0, 2.0));
        assert_eq!(delta.object.history.len(), 1);
    }

    #[test]
    fn same_round_observations_fuse() {
        let mut map = GlobalMap::new(3.0);
        let params = MapParams::default();
        let first = map.upsert_observation(None, &det(1.0, 0.9, 0.0, 0.0), &params);
        let id = first.object.id;
        let delta = map.upsert_observation(Some(id), &det(1.0, 0.1, 10.0, 0.0), &params);
        assert!(!delta.created);
        // Confidence-weighted mean of the two same-timestamp observations.
        assert!((delta.object.location.x - 1.0).abs() < 1e-12);
        // History holds one fused entry, not two.
        assert_eq!(delta.object.history.len(), 1);
    }

    #[test]
    fn identical_observation_still_emits_delta() {
        let mut map = GlobalMap::new(3.0);
        let params = MapParams::default();
        let id = map
            .upsert_observation(None, &det(0.0, 0.9, 5.0, 5.0), &params)
            .object
            .id;
        let delta = map.upsert_observation(Some(id), &det(0.5, 0.9, 5.0, 5.0), &params);
        assert_eq!(delta.object.last_update, 0.5);
    }

    #[test]
    fn feature_cap_keeps_most_recent() {
        let mut map = GlobalMap::new(3.0);
        let params = MapParams {
            feature_cap: 3,
            ..MapParams::default()
        };
        let mut id = None;
        for k in 0..5 {
            let mut d = det(k as f64, 0.9, 0.0, 0.0);
            d.feature = FeatureVector(vec![k as f64; 4]);
            let rec = map.upsert_observation(id, &d, &params);
            id = Some(rec.object.id);
        }
        let obj = map.get(id.unwrap()).unwrap();
        assert_eq!(obj.features.len(), 3);
        assert_eq!(obj.features.front().unwrap().0[0], 2.0);
        assert_eq!(obj.features.back().unwrap().0[0], 4.0);
    }

    #[test]
    fn history_timestamps_strictly_increase() {
        let mut map = GlobalMap::new(3.0);
        let params = MapParams {
            fusion_window_s: 0.1,
            ..MapParams::default()
        };
        let id = map
            .upsert_observation(None, &det(0.0, 0.9, 0.0, 0.0), &params)
            .object
            .id;
        for k in 1..10 {
            map.upsert_observation(Some(id), &det(0.3 * k as f64, 0.9, k as f64, 0.0), &params);
        }
        let obj = map.get(id).unwrap();
        for pair in obj.history.windows(2) {
            assert!(pair[1].0 > pair[0].0);
        }
    }

    #[test]
    fn expiry_boundary_is_strict() {
        let mut map = GlobalMap::new(3.0);
        let params = MapParams::default();
        let stale = map
            .upsert_observation(None, &det(0.0, 0.9, 0.0, 0.0), &params)
            .object
            .id;
        let fresh = map
            .upsert_observation(None, &det(7.0, 0.9, 1.0, 1.0), &params)
            .object
            .id;
        let exactly = map
            .upsert_observation(None, &det(7.0 - 3.0, 0.9, 2.0, 2.0), &params)
            .object
            .id;
        let before: Vec<u64> = map.ids().collect();
        let removed = map.expire_objects(7.0);
        assert_eq!(removed, vec![stale]);
        assert!(map.get(fresh).is_some());
        assert!(map.get(exactly).is_some(), "exactly ttl old is retained");
        // Removed and survivors partition the prior id set.
        let mut after: Vec<u64> = map.ids().collect();
        after.extend(&removed);
        after.sort_unstable();
        assert_eq!(after, before);
    }

    #[test]
    fn empty_map_expires_nothing() {
        let mut map = GlobalMap::new(3.0);
        assert!(map.expire_objects(100.0).is_empty());
    }
}
