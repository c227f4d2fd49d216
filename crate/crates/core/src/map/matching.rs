//! Location-aware feature matching against the global map.

use crate::error::{CoreError, Result};

use super::fuse::predict_location;
use super::{FeatureVector, GlobalMap, WorldPoint};

/// Match a detection against the map.
///
/// Candidates are objects whose predicted position lies strictly inside the
/// geo gate. The cost against a candidate is the minimum squared L2 distance
/// over its multi-view feature set plus `w` times the squared ground-plane
/// distance. The best candidate is returned when its cost is at most
/// `threshold`; otherwise `None` signals a new object. Ties break to the
/// lowest object id.
pub fn match_object(
    det_feature: &FeatureVector,
    det_location: &WorldPoint,
    map: &GlobalMap,
    w: f64,
    gate_m: f64,
    threshold: f64,
) -> Result<Option<u64>> {
    if det_feature.is_empty() {
        return Err(CoreError::invalid("detection feature vector is empty"));
    }
    let gate_sq = gate_m * gate_m;
    let mut best: Option<(f64, u64)> = None;

    for obj in map.objects() {
        let predicted = if obj.history.is_empty() {
            obj.location
        } else {
            predict_location(&obj.history).expect("non-empty history")
        };
        let geo_sq = det_location.ground_dist_sq(&predicted);
        if geo_sq >= gate_sq {
            continue;
        }
        let mut feat_sq = f64::INFINITY;
        for f in &obj.features {
            if f.len() != det_feature.len() {
                return Err(CoreError::invalid(format!(
                    "feature dimension mismatch: detection {} vs object {} ({})",
                    det_feature.len(),
                    f.len(),
                    obj.id
                )));
            }
            feat_sq = feat_sq.min(det_feature.dist_sq(f));
        }
        if !feat_sq.is_finite() {
            // Object with an empty feature set cannot be compared.
            continue;
        }
        let cost = feat_sq + w * geo_sq;
        let better = match best {
            None => true,
            Some((best_cost, best_id)) => {
                cost < best_cost || (cost == best_cost && obj.id < best_id)
            }
        };
        if better {
            best = Some((cost, obj.id));
        }
    }

    Ok(match best {
        Some((cost, id)) if cost <= threshold => Some(id),
        _ => None,
    })
}
