//! Confidence-weighted location fusion and linear trajectory prediction.

use crate::error::{CoreError, Result};

use super::WorldPoint;

/// Confidence-weighted mean of observed locations, componentwise:
/// `g = Σ P_m·g_m / Σ P_m`.
pub fn combine_location(observations: &[(f64, WorldPoint)]) -> Result<WorldPoint> {
    if observations.is_empty() {
        return Err(CoreError::invalid("combine_location needs observations"));
    }
    if observations.iter().any(|(p, _)| !(*p > 0.0)) {
        return Err(CoreError::invalid("confidences must be positive"));
    }
    let total: f64 = observations.iter().map(|(p, _)| p).sum();
    if !(total > 0.0) {
        return Err(CoreError::invalid("total confidence must be positive"));
    }
    let mut x = 0.0;
    let mut y = 0.0;
    let mut z = 0.0;
    for (p, g) in observations {
        x += p * g.x;
        y += p * g.y;
        z += p * g.z;
    }
    Ok(WorldPoint::new(x / total, y / total, z / total))
}

/// Linear one-step prediction from the two most recent history entries:
/// `g(t+1) = 2·g(t) − g(t−1)`. A single entry predicts itself.
pub fn predict_location(history: &[(f64, WorldPoint)]) -> Result<WorldPoint> {
    match history {
        [] => Err(CoreError::invalid("predict_location needs history")),
        [(_, only)] => Ok(*only),
        [.., (_, prev), (_, last)] => Ok(WorldPoint::new(
            2.0 * last.x - prev.x,
            2.0 * last.y - prev.y,
            last.z,
        )),
    }
}

/// Constant-velocity extrapolation of a history to time `t`; the velocity
/// is taken over the whole retained window so closely spaced noisy fixes do
/// not blow it up, and its magnitude is capped at `max_speed`. Equals the
/// two-point linear predictor one slot ahead on uniformly slotted
/// two-entry histories.
pub fn extrapolate_history(
    history: &[(f64, WorldPoint)],
    t: f64,
    max_speed: f64,
) -> Result<WorldPoint> {
    match history {
        [] => Err(CoreError::invalid("extrapolate_history needs history")),
        [(_, only)] => Ok(*only),
        [(t0, first), .., (t1, last)] => {
            let dt = (t1 - t0).max(1e-6);
            let mut vx = (last.x - first.x) / dt;
            let mut vy = (last.y - first.y) / dt;
            let speed = (vx * vx + vy * vy).sqrt();
            if speed > max_speed {
                let scale = max_speed / speed;
                vx *= scale;
                vy *= scale;
            }
            let ahead = (t - t1).max(0.0);
            Ok(WorldPoint::new(
                last.x + vx * ahead,
                last.y + vy * ahead,
                last.z,
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_observation_is_identity() {
        let g = WorldPoint::ground(4.0, -2.0);
        let out = combine_location(&[(0.7, g)]).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn weighted_mean_by_hand() {
        let out = combine_location(&[
            (0.9, WorldPoint::ground(0.0, 0.0)),
            (0.1, WorldPoint::ground(10.0, 0.0)),
        ])
        .unwrap();
        assert!((out.x - 1.0).abs() < 1e-12);
        assert_eq!(out.y, 0.0);
    }

    #[test]
    fn equal_confidences_average() {
        let out = combine_location(&[
            (0.5, WorldPoint::ground(0.0, 0.0)),
            (0.5, WorldPoint::ground(2.0, 0.0)),
            (0.5, WorldPoint::ground(4.0, 0.0)),
        ])
        .unwrap();
        assert!((out.x - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_and_nonpositive() {
        assert!(combine_location(&[]).is_err());
        assert!(combine_location(&[(0.0, WorldPoint::ground(1.0, 1.0))]).is_err());
        assert!(combine_location(&[(-0.5, WorldPoint::ground(1.0, 1.0))]).is_err());
    }

    #[test]
    fn output_in_convex_hull_and_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(1..6);
            let obs: Vec<(f64, WorldPoint)> = (0..n)
                .map(|_| {
                    (
                        rng.gen_range(0.05..1.0),
                        WorldPoint::ground(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)),
                    )
                })
                .collect();
            let out = combine_location(&obs).unwrap();
            let (min_x, max_x) = obs
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, g)| {
                    (lo.min(g.x), hi.max(g.x))
                });
            assert!(out.x >= min_x - 1e-9 && out.x <= max_x + 1e-9);

            let scaled: Vec<_> = obs.iter().map(|(p, g)| (3.5 * p, *g)).collect();
            let out2 = combine_location(&scaled).unwrap();
            assert!((out.x - out2.x).abs() < 1e-9 && (out.y - out2.y).abs() < 1e-9);
        }
    }

    #[test]
    fn prediction_cases() {
        let stationary = [
            (0.0, WorldPoint::ground(5.0, 5.0)),
            (1.0, WorldPoint::ground(5.0, 5.0)),
        ];
        assert_eq!(
            predict_location(&stationary).unwrap(),
            WorldPoint::ground(5.0, 5.0)
        );

        let moving = [
            (0.0, WorldPoint::ground(0.0, 0.0)),
            (1.0, WorldPoint::ground(1.0, 2.0)),
        ];
        assert_eq!(
            predict_location(&moving).unwrap(),
            WorldPoint::ground(2.0, 4.0)
        );

        let single = [(0.0, WorldPoint::ground(3.0, 3.0))];
        assert_eq!(
            predict_location(&single).unwrap(),
            WorldPoint::ground(3.0, 3.0)
        );

        assert!(predict_location(&[]).is_err());
    }
}
