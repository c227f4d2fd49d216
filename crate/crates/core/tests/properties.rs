//! Property tests over the data-plane math and replay structures.

use proptest::prelude::*;

use livemap_core::coverage::{schedule, CoverageDisk};
use livemap_core::map::{
    camera_to_pixel, combine_location, pixel_to_camera, trimmed_patch_mean, CameraIntrinsics,
    PixelBox, WorldPoint,
};
use livemap_core::rl::{PrioritizedReplay, Transition};

fn arb_box() -> impl Strategy<Value = (f64, f64)> {
    (1.0..739.0f64, 1.0..539.0f64)
}

proptest! {
    #[test]
    fn pixel_camera_round_trip((u0, v0) in arb_box(), depth in 0.5..80.0f64) {
        let intr = CameraIntrinsics::new(120.0, 741, 540).unwrap();
        let bbox = PixelBox {
            u0,
            v0,
            width: 8.0,
            height: 8.0,
            confidence: 0.9,
            class_id: 0,
        };
        let p = pixel_to_camera(&bbox, depth, &intr).unwrap();
        let (u, v, d) = camera_to_pixel(&p, &intr);
        prop_assert!((u - u0).abs() <= 1e-9 * u0.max(1.0));
        prop_assert!((v - v0).abs() <= 1e-9 * v0.max(1.0));
        prop_assert!((d - depth).abs() <= 1e-9 * depth);
    }

    #[test]
    fn combined_location_stays_in_hull_and_ignores_scale(
        obs in prop::collection::vec(((0.01..1.0f64), (-100.0..100.0f64), (-100.0..100.0f64)), 1..8),
        scale in 0.1..50.0f64,
    ) {
        let points: Vec<(f64, WorldPoint)> = obs
            .iter()
            .map(|(c, x, y)| (*c, WorldPoint::ground(*x, *y)))
            .collect();
        let out = combine_location(&points).unwrap();
        let (lo_x, hi_x) = points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), (_, g)| {
            (lo.min(g.x), hi.max(g.x))
        });
        let (lo_y, hi_y) = points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), (_, g)| {
            (lo.min(g.y), hi.max(g.y))
        });
        prop_assert!(out.x >= lo_x - 1e-9 && out.x <= hi_x + 1e-9);
        prop_assert!(out.y >= lo_y - 1e-9 && out.y <= hi_y + 1e-9);

        let scaled: Vec<(f64, WorldPoint)> =
            points.iter().map(|(c, g)| (c * scale, *g)).collect();
        let out2 = combine_location(&scaled).unwrap();
        prop_assert!((out.x - out2.x).abs() < 1e-8);
        prop_assert!((out.y - out2.y).abs() < 1e-8);
    }

    #[test]
    fn trimmed_mean_matches_brute_force(mut means in prop::collection::vec(0.1..100.0f64, 3..12)) {
        let expected = {
            let min = means.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (means.iter().sum::<f64>() - min - max) / (means.len() - 2) as f64
        };
        let got = trimmed_patch_mean(&means).unwrap();
        prop_assert!((got - expected).abs() < 1e-9);
        // Permutation invariance.
        means.reverse();
        let got2 = trimmed_patch_mean(&means).unwrap();
        prop_assert!((got - got2).abs() < 1e-12);
    }

    #[test]
    fn sum_tree_total_is_exact_under_interleaving(
        ops in prop::collection::vec((any::<bool>(), 0.001..10.0f64), 1..300),
        capacity in 1usize..64,
    ) {
        let mut replay = PrioritizedReplay::new(capacity);
        for (store, p) in ops {
            if store || replay.is_empty() {
                replay.store(Transition {
                    state: vec![0.0],
                    action: 0,
                    reward: 0.0,
                    next_state: vec![0.0],
                    done: false,
                });
            } else {
                let idx = (p * 1000.0) as usize % replay.len();
                replay.update_priority(idx, p);
            }
        }
        let rebuilt = replay.tree().rebuilt();
        prop_assert_eq!(replay.tree().total().to_bits(), rebuilt.total().to_bits());
    }

    #[test]
    fn raising_beta_never_shrinks_the_schedule(
        seed_pts in prop::collection::vec((0.0..300.0f64, 0.0..300.0f64, 25.0..75.0f64), 3..20),
    ) {
        let disks: Vec<CoverageDisk> = seed_pts
            .iter()
            .enumerate()
            .map(|(i, (x, y, r))| CoverageDisk {
                vehicle_id: i as u32,
                center: WorldPoint::ground(*x, *y),
                radius_m: *r,
            })
            .collect();
        let mut prev = 0usize;
        for beta in [0.0, 0.4, 0.8, 1.0] {
            let res = schedule(&disks, beta, 4.0).unwrap();
            let count = res.scheduled_count();
            prop_assert!(count >= prev, "beta {} shrank the schedule", beta);
            prev = count;
        }
    }
}
