//! The central and distributed controllers plus the comparison policies,
//! all behind one decision interface mapping simulator state to
//! (scheduled, partition) per vehicle.

mod regression;

pub use regression::{feature_count, rm_fit, RegressionModel, RmSample};

use rand::Rng;

use crate::coverage::{self, CoverageDisk};
use crate::error::{CoreError, Result};
use crate::map::{extrapolate_history, WorldPoint};
use crate::mapflow::LocalMap;
use crate::rl::{encode_state_central, encode_state_dist, QPolicy, SystemStatus, VehicleStatus};
use crate::scenario::CLASS_VEHICLE;

/// Pseudo vehicle-id bit for disks estimated from anonymous map objects,
/// keeping them distinct from real vehicle ids in tie-breaking.
const ESTIMATED_ID_BIT: u32 = 0x8000_0000;
/// Cap on extrapolated track speed.
const MAX_TRACK_SPEED_MPS: f64 = 25.0;

/// Per-vehicle control output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlDecision {
    pub vehicle_id: u32,
    pub scheduled: bool,
    /// Partition in {0..N} when scheduled, -1 otherwise.
    pub partition: i32,
}

impl ControlDecision {
    pub fn scheduled(vehicle_id: u32, partition: usize) -> Self {
        Self {
            vehicle_id,
            scheduled: true,
            partition: partition as i32,
        }
    }

    pub fn unscheduled(vehicle_id: u32) -> Self {
        Self {
            vehicle_id,
            scheduled: false,
            partition: -1,
        }
    }
}

/// Everything a controller may consult for one decision.
pub struct DecisionContext<'a> {
    pub vehicle_id: u32,
    pub now: f64,
    pub vehicle: VehicleStatus,
    pub system: SystemStatus,
    /// This vehicle's delta-synchronized map mirror (distributed control).
    pub local_map: Option<&'a LocalMap>,
    pub own_position: WorldPoint,
    /// The vehicle's own pose at an arbitrary recent time; it knows its own
    /// trajectory exactly. Used to recognize its mirror in the map.
    pub own_pose_at: &'a dyn Fn(f64) -> WorldPoint,
    pub own_radius: f64,
    pub y_prev: i32,
    pub l_prev_s: f64,
    pub partition_count: usize,
}

/// Central controller: periodic coverage-constrained scheduling over true
/// disks, per-request Q-policy actions for scheduled vehicles.
#[derive(Debug, Clone)]
pub struct CentralHead {
    pub beta: f64,
    pub period_s: f64,
    pub cell_m: f64,
    cached: Option<(f64, Vec<bool>)>,
}

impl CentralHead {
    pub fn new(beta: f64, period_s: f64, cell_m: f64) -> Self {
        Self {
            beta,
            period_s,
            cell_m,
            cached: None,
        }
    }

    /// Recompute the schedule when the period has elapsed. The runner calls
    /// this every tick with the current true disks.
    pub fn maybe_reschedule(&mut self, now: f64, disks: &[CoverageDisk]) -> Result<bool> {
        let due = match &self.cached {
            None => true,
            Some((at, _)) => now - at >= self.period_s - 1e-9,
        };
        if due {
            let res = coverage::schedule(disks, self.beta, self.cell_m)?;
            self.cached = Some((now, res.scheduled));
        }
        Ok(due)
    }

    pub fn is_scheduled(&self, vehicle_id: u32) -> bool {
        match &self.cached {
            Some((_, x)) => x.get(vehicle_id as usize).copied().unwrap_or(true),
            None => true,
        }
    }

    pub fn current_schedule(&self) -> Option<&[bool]> {
        self.cached.as_ref().map(|(_, x)| x.as_slice())
    }
}

/// Distributed controller: each vehicle schedules itself from its local map
/// whenever its previous pipeline completes.
#[derive(Debug, Clone)]
pub struct DHead {
    pub beta: f64,
    pub cell_m: f64,
    /// A vehicle-class object whose latest fix sits within this distance of
    /// the vehicle's own pose at the same instant is its own mirror.
    pub self_gate_m: f64,
    /// Objects not refreshed within this window are too stale to place on
    /// the graph; their vehicles cover from unknown positions.
    pub stale_cutoff_s: f64,
    /// Robustness margin added to beta in the local prune: decisions made
    /// on estimated, individually-timed graphs must overshoot the coverage
    /// constraint for the realized fleet-wide union to satisfy it.
    pub beta_margin: f64,
}

impl DHead {
    pub fn new(beta: f64, cell_m: f64) -> Self {
        Self {
            beta,
            cell_m,
            self_gate_m: 2.0,
            stale_cutoff_s: 1.0,
            beta_margin: 0.15,
        }
    }

    /// Coverage disks as this vehicle estimates them: one disk of its own
    /// radius per vehicle-class map object, centered at the object's history
    /// extrapolated to the decision instant (which equals the two-point
    /// linear predictor one slot ahead on uniformly slotted fixes). The
    /// vehicle recognizes which object is itself by comparing each object's
    /// latest fix against its own pose at that exact time, and reads its
    /// scheduling slot from that mirror; only when nothing in the map is it
    /// does it append its own true disk. Because every vehicle's mirror
    /// carries the same shared object identity, fleets with identical map
    /// replicas prune identical graphs and realize one coherent schedule.
    /// Returns the disks plus this vehicle's index among them.
    pub fn estimate_disks(&self, ctx: &DecisionContext) -> (Vec<CoverageDisk>, usize) {
        let mut disks: Vec<CoverageDisk> = Vec::new();
        let mut mirror: Option<(f64, usize)> = None;
        if let Some(local) = ctx.local_map {
            for obj in local.map.objects() {
                if obj.class_id != CLASS_VEHICLE || obj.history.is_empty() {
                    continue;
                }
                let (t_last, g_last) = *obj.history.last().expect("non-empty history");
                if ctx.now - t_last > self.stale_cutoff_s {
                    continue;
                }
                let own_then = (ctx.own_pose_at)(t_last);
                let self_dist = g_last.ground_dist(&own_then);
                if self_dist < self.self_gate_m && mirror.map_or(true, |(best, _)| self_dist < best)
                {
                    mirror = Some((self_dist, disks.len()));
                }
                let center = extrapolate_history(&obj.history, ctx.now, MAX_TRACK_SPEED_MPS)
                    .expect("non-empty history");
                disks.push(CoverageDisk {
                    vehicle_id: (obj.id as u32) | ESTIMATED_ID_BIT,
                    center,
                    radius_m: ctx.own_radius,
                });
            }
        }
        match mirror {
            Some((_, idx)) => (disks, idx),
            None => {
                disks.push(CoverageDisk {
                    vehicle_id: ctx.vehicle_id,
                    center: ctx.own_position,
                    radius_m: ctx.own_radius,
                });
                let idx = disks.len() - 1;
                (disks, idx)
            }
        }
    }

    /// Run the greedy prune over the estimated graph; returns whether this
    /// vehicle keeps itself scheduled.
    pub fn schedule_self(&self, ctx: &DecisionContext) -> Result<bool> {
        let beta = (self.beta + self.beta_margin).min(1.0);
        let (disks, self_idx) = self.estimate_disks(ctx);
        let res = coverage::schedule(&disks, beta, self.cell_m)?;
        Ok(res.scheduled[self_idx])
    }
}

/// Always offload everything to the edge.
pub fn eo() -> usize {
    0
}

/// Process everything on the vehicle.
pub fn lp(max_partition: usize) -> usize {
    max_partition
}

/// Uniformly random partition.
pub fn ro<R: Rng>(partition_count: usize, rng: &mut R) -> usize {
    rng.gen_range(0..partition_count)
}

/// Which control policy a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoKind {
    /// Central HEAD: coverage scheduling + central-state Q-policy.
    Livemap,
    /// Distributed HEAD over local maps.
    LivemapDist,
    /// Q-policy offloading with every vehicle scheduled.
    LivemapLite,
    Eo,
    Lp,
    Ro,
    Rm,
}

impl AlgoKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "livemap" => AlgoKind::Livemap,
            "livemap-dist" => AlgoKind::LivemapDist,
            "livemap-lite" => AlgoKind::LivemapLite,
            "eo" => AlgoKind::Eo,
            "lp" => AlgoKind::Lp,
            "ro" => AlgoKind::Ro,
            "rm" => AlgoKind::Rm,
            other => return Err(CoreError::UnknownAlgorithm(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AlgoKind::Livemap => "livemap",
            AlgoKind::LivemapDist => "livemap-dist",
            AlgoKind::LivemapLite => "livemap-lite",
            AlgoKind::Eo => "eo",
            AlgoKind::Lp => "lp",
            AlgoKind::Ro => "ro",
            AlgoKind::Rm => "rm",
        }
    }

    /// Whether the policy trains on / consumes the distributed encoding.
    pub fn uses_dist_encoding(&self) -> bool {
        matches!(self, AlgoKind::LivemapDist)
    }

    pub fn needs_policy(&self) -> bool {
        matches!(
            self,
            AlgoKind::Livemap | AlgoKind::LivemapDist | AlgoKind::LivemapLite
        )
    }
}

/// One decision interface over all policies.
#[derive(Debug)]
pub enum Controller {
    CentralHead(CentralHead),
    DHead(DHead),
    Lite,
    Eo,
    Lp,
    Ro,
    Rm(RegressionModel),
}

impl Controller {
    /// Decide (x, y) for a vehicle about to start its next round.
    pub fn decide<R: Rng>(
        &mut self,
        ctx: &DecisionContext,
        policy: Option<&QPolicy>,
        explore: bool,
        rng: &mut R,
    ) -> Result<ControlDecision> {
        let vid = ctx.vehicle_id;
        let max_partition = ctx.partition_count - 1;
        match self {
            Controller::CentralHead(head) => {
                if !head.is_scheduled(vid) {
                    return Ok(ControlDecision::unscheduled(vid));
                }
                let policy = policy
                    .ok_or_else(|| CoreError::invalid("central controller needs a policy"))?;
                let state = encode_state_central(&ctx.vehicle, &ctx.system);
                Ok(ControlDecision::scheduled(
                    vid,
                    policy.act(&state, explore, rng)?,
                ))
            }
            Controller::DHead(dhead) => {
                if !dhead.schedule_self(ctx)? {
                    return Ok(ControlDecision::unscheduled(vid));
                }
                let policy = policy
                    .ok_or_else(|| CoreError::invalid("distributed controller needs a policy"))?;
                let state =
                    encode_state_dist(&ctx.vehicle, ctx.y_prev, ctx.l_prev_s, ctx.partition_count)?;
                Ok(ControlDecision::scheduled(
                    vid,
                    policy.act(&state, explore, rng)?,
                ))
            }
            Controller::Lite => {
                let policy =
                    policy.ok_or_else(|| CoreError::invalid("lite controller needs a policy"))?;
                let state = encode_state_central(&ctx.vehicle, &ctx.system);
                Ok(ControlDecision::scheduled(
                    vid,
                    policy.act(&state, explore, rng)?,
                ))
            }
            Controller::Eo => Ok(ControlDecision::scheduled(vid, eo())),
            Controller::Lp => Ok(ControlDecision::scheduled(vid, lp(max_partition))),
            Controller::Ro => Ok(ControlDecision::scheduled(
                vid,
                ro(ctx.partition_count, rng),
            )),
            Controller::Rm(model) => Ok(ControlDecision::scheduled(
                vid,
                model.decide(ctx.system.connected as f64, {
                    let v = &ctx.vehicle;
                    (v.snr_db / v.snr_ref_db).clamp(0.0, 1.0)
                }),
            )),
        }
    }
}
