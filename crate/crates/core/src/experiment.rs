//! Experiment harness: builds world + simulator + controller, closes the
//! offload loop, maintains the global/local maps, trains or evaluates the
//! Q-policy, and writes the run-trace CSVs.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::control::{rm_fit, AlgoKind, CentralHead, Controller, DHead, DecisionContext, RmSample};
use crate::coverage;
use crate::error::{CoreError, Result};
use crate::map::Detection;
use crate::mapflow::{LocalMap, MapDelta, MapPipeline};
use crate::rl::{
    central_schema, central_state_dim, dist_schema, dist_state_dim, encode_state_central,
    encode_state_dist, write_schema, PrioritizedReplay, QPolicy, SystemStatus, Transition,
    VehicleStatus,
};
use crate::scenario::{draw_budgets, generate, sense, MeasurementModel, SenseNoise, World};
use crate::seeds;
use crate::simnet::{SimEvent, Simulator, StageDurations};

/// Fixed simulation step: 1 ms.
pub const DT_S: f64 = 0.001;
/// Bandwidth anchor for the state encoding.
pub const REFERENCE_BANDWIDTH_HZ: f64 = 100_000.0;

/// One completed offload in the run trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRecord {
    pub task_id: u64,
    pub vehicle_id: u32,
    pub partition: i32,
    pub submit_tick: u64,
    pub durations: StageDurations,
}

impl TaskRecord {
    pub fn latency_ticks(&self) -> u64 {
        self.durations.total()
    }
}

/// One map-delta record in the run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRecord {
    pub seq: u64,
    pub tick: u64,
    pub origin_task: u64,
    pub updated_ids: Vec<u64>,
    pub removed_ids: Vec<u64>,
}

/// One coverage sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSample {
    pub tick: u64,
    pub instant_fraction: f64,
    pub scheduled_count: usize,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub algorithm: String,
    pub beta: f64,
    pub tasks: Vec<TaskRecord>,
    pub coverage: Vec<CoverageSample>,
    pub deltas: Vec<DeltaRecord>,
    pub local_completions: u64,
}

/// Seconds string with six decimals from a tick count (1 ms ticks).
pub fn ticks_to_string(ticks: u64) -> String {
    format!("{}.{:06}", ticks / 1000, (ticks % 1000) * 1000)
}

pub fn ticks_to_seconds(ticks: u64) -> f64 {
    ticks as f64 * DT_S
}

impl RunMetrics {
    pub fn latencies_s(&self) -> Vec<f64> {
        self.tasks
            .iter()
            .map(|t| ticks_to_seconds(t.latency_ticks()))
            .collect()
    }

    pub fn mean_latency_s(&self) -> f64 {
        let l = self.latencies_s();
        if l.is_empty() {
            return f64::NAN;
        }
        l.iter().sum::<f64>() / l.len() as f64
    }

    /// Nearest-rank quantile over task latencies.
    pub fn latency_quantile(&self, q: f64) -> f64 {
        let mut l = self.latencies_s();
        if l.is_empty() {
            return f64::NAN;
        }
        l.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = (q * l.len() as f64).ceil() as usize;
        l[rank.clamp(1, l.len()) - 1]
    }

    /// Empirical CDF points (latency, cumulative probability).
    pub fn latency_cdf(&self) -> Vec<(f64, f64)> {
        let mut l = self.latencies_s();
        l.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = l.len();
        l.into_iter()
            .enumerate()
            .map(|(i, v)| (v, (i + 1) as f64 / n as f64))
            .collect()
    }

    pub fn coverage_mean(&self) -> f64 {
        if self.coverage.is_empty() {
            return f64::NAN;
        }
        self.coverage
            .iter()
            .map(|c| c.instant_fraction)
            .sum::<f64>()
            / self.coverage.len() as f64
    }

    /// Fraction of samples meeting the coverage requirement.
    pub fn fulfillment_rate(&self) -> f64 {
        if self.coverage.is_empty() {
            return f64::NAN;
        }
        self.coverage
            .iter()
            .filter(|c| c.instant_fraction >= self.beta)
            .count() as f64
            / self.coverage.len() as f64
    }
}

/// State/action pair awaiting its reward and successor state.
#[derive(Debug, Clone)]
struct PendingTransition {
    state: Vec<f64>,
    action: usize,
    reward: Option<f64>,
}

/// Closed-loop engine shared by run, train, and the regression warm-up.
pub struct Engine {
    pub cfg: RunConfig,
    pub algo: AlgoKind,
    seed: u64,
    world: World,
    pub sim: Simulator,
    pipeline: MapPipeline,
    locals: Vec<LocalMap>,
    controller: Controller,
    pub policy: Option<QPolicy>,
    pub replay: PrioritizedReplay,
    measurement: MeasurementModel,
    explore: bool,
    train: bool,
    rng_explore: ChaCha8Rng,
    // Per-vehicle decision state.
    y_prev: Vec<i32>,
    l_prev_s: Vec<f64>,
    pending: Vec<Option<PendingTransition>>,
    submit_counter: Vec<u64>,
    current_x: Vec<bool>,
    // Delta broadcast: deltas apply to every local map in ingest order once
    // their carrying task's downlink completes.
    pending_deltas: VecDeque<(u64, MapDelta)>,
    delta_ready: BTreeSet<u64>,
    /// Vehicles whose first round starts at a staggered tick.
    deferred_starts: Vec<(u64, u32)>,
    detections_by_task: HashMap<u64, Vec<Detection>>,
    chan_at_submit: HashMap<u64, f64>,
    // Outputs.
    pub records: Vec<TaskRecord>,
    pub coverage_samples: Vec<CoverageSample>,
    pub delta_records: Vec<DeltaRecord>,
    pub local_completions: u64,
    pub rm_samples: Vec<RmSample>,
    pub last_loss: f64,
    recent_latencies: VecDeque<f64>,
    log_training: bool,
}

impl Engine {
    pub fn new(
        cfg: &RunConfig,
        algo: AlgoKind,
        seed: u64,
        controller: Controller,
        policy: Option<QPolicy>,
        explore: bool,
        train: bool,
    ) -> Result<Self> {
        let mut world = generate(&cfg.world, seed)?;
        world.assign_hardware(cfg.measurement.hw_mult_range, seed);
        let sim = Simulator::new(
            &world,
            &cfg.radio,
            cfg.world.server_count,
            cfg.measurement.server_mult,
            DT_S,
            seed,
        );
        let n = cfg.world.vehicle_count;
        Ok(Self {
            cfg: cfg.clone(),
            algo,
            seed,
            sim,
            pipeline: MapPipeline::new(cfg.map.params()),
            locals: (0..n).map(|_| LocalMap::new(cfg.map.ttl_s)).collect(),
            controller,
            policy,
            replay: cfg.replay(),
            measurement: MeasurementModel::from_config(&cfg.measurement),
            explore,
            train,
            rng_explore: seeds::rng(seed, seeds::label::EXPLORATION),
            y_prev: vec![-1; n],
            l_prev_s: vec![0.0; n],
            pending: vec![None; n],
            submit_counter: vec![0; n],
            current_x: vec![true; n],
            pending_deltas: VecDeque::new(),
            delta_ready: BTreeSet::new(),
            deferred_starts: Vec::new(),
            detections_by_task: HashMap::new(),
            chan_at_submit: HashMap::new(),
            records: Vec::new(),
            coverage_samples: Vec::new(),
            delta_records: Vec::new(),
            local_completions: 0,
            rm_samples: Vec::new(),
            last_loss: f64::NAN,
            recent_latencies: VecDeque::new(),
            world,
            log_training: false,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn local_map(&self, vehicle_id: u32) -> &LocalMap {
        &self.locals[vehicle_id as usize]
    }

    pub fn global_map(&self) -> &crate::map::GlobalMap {
        &self.pipeline.global
    }

    pub fn set_training_log(&mut self, on: bool) {
        self.log_training = on;
    }

    fn vehicle_status(&self, v: u32) -> VehicleStatus {
        VehicleStatus {
            snr_db: self.sim.snr_db_now(v),
            snr_ref_db: self.cfg.radio.snr_ref_db,
            cpu_mult: self.world.cpu_mults[v as usize],
            gpu_mult: self.world.gpu_mults[v as usize],
        }
    }

    fn system_status(&self) -> SystemStatus {
        SystemStatus {
            server_mult: self.cfg.measurement.server_mult,
            connected: self.cfg.world.vehicle_count,
            queued: self.sim.edge_occupancy(),
            max_vehicles: self.cfg.world.vehicle_count,
            bandwidth_hz: self.cfg.radio.bandwidth_hz,
            reference_bandwidth_hz: REFERENCE_BANDWIDTH_HZ,
        }
    }

    /// Encode the state the policy acts on for this algorithm.
    fn encode_policy_state(&self, v: u32) -> Result<Vec<f64>> {
        if self.algo.uses_dist_encoding() {
            encode_state_dist(
                &self.vehicle_status(v),
                self.y_prev[v as usize],
                self.l_prev_s[v as usize],
                self.cfg.world.partition_count,
            )
        } else {
            Ok(encode_state_central(
                &self.vehicle_status(v),
                &self.system_status(),
            ))
        }
    }

    /// Decide and submit the next round for a vehicle.
    fn next_round(&mut self, v: u32) -> Result<()> {
        let now = self.sim.now_s();
        let world = &self.world;
        let own_pose_at = move |t: f64| world.vehicle_position(v, t);
        let ctx = DecisionContext {
            vehicle_id: v,
            now,
            vehicle: self.vehicle_status(v),
            system: self.system_status(),
            local_map: Some(&self.locals[v as usize]),
            own_position: self.world.vehicle_position(v, now),
            own_pose_at: &own_pose_at,
            own_radius: self.world.radii_m[v as usize],
            y_prev: self.y_prev[v as usize],
            l_prev_s: self.l_prev_s[v as usize],
            partition_count: self.cfg.world.partition_count,
        };
        let decision = self.controller.decide(
            &ctx,
            self.policy.as_ref(),
            self.explore,
            &mut self.rng_explore,
        )?;
        self.current_x[v as usize] = decision.scheduled;

        if decision.scheduled {
            let y = decision.partition as usize;
            // Complete the previous pending transition with this decision's
            // state, then open a new one.
            if self.algo.needs_policy() {
                let state = self.encode_policy_state(v)?;
                if let Some(prev) = self.pending[v as usize].take() {
                    if let Some(r) = prev.reward {
                        self.replay.store(Transition {
                            state: prev.state,
                            action: prev.action,
                            reward: r,
                            next_state: state.clone(),
                            done: false,
                        });
                    }
                }
                self.pending[v as usize] = Some(PendingTransition {
                    state,
                    action: y,
                    reward: None,
                });
            }

            let counter = self.submit_counter[v as usize];
            self.submit_counter[v as usize] += 1;
            let mut budget_rng =
                seeds::rng_indexed(self.seed, seeds::label::MEASUREMENT, &[v as u64, counter]);
            let budgets = draw_budgets(
                &self.measurement,
                y,
                self.world.compute_mult(v),
                &mut budget_rng,
            )?;
            let mut sense_rng =
                seeds::rng_indexed(self.seed, seeds::label::SENSE, &[v as u64, self.sim.tick()]);
            let noise = SenseNoise {
                sigma_pos_m: self.cfg.world.sigma_pos_m,
                sigma_feat: self.cfg.world.sigma_feat,
            };
            let dets = sense(&self.world, v, now, &noise, &mut sense_rng);
            let chan = {
                let vs = self.vehicle_status(v);
                (vs.snr_db / vs.snr_ref_db).clamp(0.0, 1.0)
            };
            let task_id = self.sim.submit(v, decision.partition, budgets)?;
            self.detections_by_task.insert(task_id, dets);
            self.chan_at_submit.insert(task_id, chan);
        } else {
            // Fully-local round: full pipeline onboard, nothing on the
            // network, no global-map contribution.
            let counter = self.submit_counter[v as usize];
            self.submit_counter[v as usize] += 1;
            let mut budget_rng =
                seeds::rng_indexed(self.seed, seeds::label::MEASUREMENT, &[v as u64, counter]);
            let budgets = draw_budgets(
                &self.measurement,
                self.cfg.world.max_partition(),
                self.world.compute_mult(v),
                &mut budget_rng,
            )?;
            self.sim.submit(v, -1, budgets)?;
        }
        Ok(())
    }

    /// Apply every broadcast-ready delta in ingest order.
    fn flush_broadcasts(&mut self) {
        while let Some((task_id, _)) = self.pending_deltas.front() {
            if !self.delta_ready.contains(task_id) {
                break;
            }
            let (task_id, delta) = self.pending_deltas.pop_front().unwrap();
            self.delta_ready.remove(&task_id);
            for local in &mut self.locals {
                if local.apply_delta(&delta).is_err() {
                    // Sequence gap: fall back to a full snapshot.
                    local.resync(&self.pipeline, delta.seq);
                }
            }
        }
    }

    fn handle_completion(&mut self, task: crate::simnet::OffloadTask, tick: u64) -> Result<()> {
        let v = task.vehicle_id;
        let durations = task.stage_durations().expect("completed task");
        if task.partition >= 0 {
            self.delta_ready.insert(task.id);
            self.flush_broadcasts();

            let latency_ticks = task.latency_ticks().expect("completed task");
            let latency_s = ticks_to_seconds(latency_ticks);
            self.records.push(TaskRecord {
                task_id: task.id,
                vehicle_id: v,
                partition: task.partition,
                submit_tick: task.submit_tick,
                durations,
            });
            self.recent_latencies.push_back(latency_s);
            if self.recent_latencies.len() > 200 {
                self.recent_latencies.pop_front();
            }
            self.y_prev[v as usize] = task.partition;
            self.l_prev_s[v as usize] = latency_s;
            if let Some(p) = &mut self.pending[v as usize] {
                if p.reward.is_none() {
                    p.reward = Some(-latency_s);
                }
            }
            if matches!(self.algo, AlgoKind::Ro) {
                let chan = self.chan_at_submit.get(&task.id).copied().unwrap_or(0.0);
                self.rm_samples.push(RmSample {
                    cav_count: self.cfg.world.vehicle_count as f64,
                    channel_quality: chan,
                    partition: task.partition as usize,
                    latency_s,
                });
            }
            self.chan_at_submit.remove(&task.id);
        } else {
            self.local_completions += 1;
            self.y_prev[v as usize] = -1;
            // Previous latency feeds the distributed state only after an
            // actual offload; local rounds leave it unchanged.
        }
        let _ = tick;

        self.next_round(v)?;

        if self.train && task.partition >= 0 {
            if let Some(policy) = &mut self.policy {
                if self.replay.len() >= policy.config.batch_size {
                    let loss = policy.train_step(&mut self.replay, &mut self.rng_explore)?;
                    self.last_loss = loss;
                    if self.log_training && policy.train_steps() % 100 == 0 {
                        let mean_lat = if self.recent_latencies.is_empty() {
                            f64::NAN
                        } else {
                            self.recent_latencies.iter().sum::<f64>()
                                / self.recent_latencies.len() as f64
                        };
                        println!(
                            "step {:>7}  loss {:>12.6}  rolling_mean_latency_s {:>10.6}  epsilon {:.4}",
                            policy.train_steps(),
                            loss,
                            mean_lat,
                            policy.epsilon()
                        );
                    }
                }
            }
        }
        Ok(())
    }

    /// Sample instant coverage: scheduled union over full union at the
    /// current true positions.
    fn sample_coverage(&mut self) -> Result<()> {
        let now = self.sim.now_s();
        let all = self.world.disks(now);
        let scheduled: Vec<_> = all
            .iter()
            .filter(|d| self.current_x[d.vehicle_id as usize])
            .cloned()
            .collect();
        let cell = self.cfg.metrics.coverage_cell_m;
        let full = coverage::union_area(&all, cell)?;
        let got = coverage::union_area(&scheduled, cell)?;
        let fraction = if full > 0.0 { got / full } else { 1.0 };
        self.coverage_samples.push(CoverageSample {
            tick: self.sim.tick(),
            instant_fraction: fraction,
            scheduled_count: scheduled.len(),
        });
        Ok(())
    }

    /// Kick off the fleet. First rounds are staggered over the configured
    /// window so decision instants are not phase-locked across vehicles.
    pub fn start(&mut self) -> Result<()> {
        if let Controller::CentralHead(head) = &mut self.controller {
            head.maybe_reschedule(0.0, &self.world.disks(0.0))?;
        }
        let span_ticks = (self.cfg.control.start_stagger_s / DT_S).round().max(1.0) as u64;
        for v in 0..self.cfg.world.vehicle_count as u32 {
            let tick = seeds::subseed_indexed(self.seed, seeds::label::WORLD, &[v as u64, 0x57A7])
                % span_ticks;
            if tick == 0 {
                self.next_round(v)?;
            } else {
                self.deferred_starts.push((tick, v));
            }
        }
        self.deferred_starts.sort_unstable();
        self.sample_coverage()?;
        Ok(())
    }

    /// Advance one tick, processing events and periodic work.
    pub fn step(&mut self) -> Result<()> {
        self.sim.step();
        let now = self.sim.now_s();
        while let Some(&(tick, v)) = self.deferred_starts.first() {
            if tick > self.sim.tick() {
                break;
            }
            self.deferred_starts.remove(0);
            self.next_round(v)?;
        }
        if let Controller::CentralHead(head) = &mut self.controller {
            if head.maybe_reschedule(now, &self.world.disks(now))? {
                // Scheduling changes take effect at each vehicle's next
                // round; the coverage metric tracks the fresh schedule.
                if let Some(x) = head.current_schedule() {
                    self.current_x.copy_from_slice(x);
                }
            }
        }
        for ev in self.sim.drain_events() {
            match ev {
                SimEvent::EdgeDone { tick, task_id, .. } => {
                    let dets = self.detections_by_task.remove(&task_id).unwrap_or_default();
                    let delta =
                        self.pipeline
                            .ingest_completion(task_id, &dets, tick as f64 * DT_S)?;
                    self.delta_records.push(DeltaRecord {
                        seq: delta.seq,
                        tick,
                        origin_task: task_id,
                        updated_ids: delta.updated.iter().map(|o| o.id).collect(),
                        removed_ids: delta.removed.clone(),
                    });
                    self.pending_deltas.push_back((task_id, delta));
                }
                SimEvent::Completed { tick, task } => {
                    self.handle_completion(task, tick)?;
                }
            }
        }
        let interval_ticks = (self.cfg.metrics.interval_s / DT_S).round().max(1.0) as u64;
        if self.sim.tick() % interval_ticks == 0 {
            self.sample_coverage()?;
        }
        Ok(())
    }

    /// Run for a fixed duration.
    pub fn run_for(&mut self, duration_s: f64) -> Result<()> {
        self.start()?;
        let ticks = (duration_s / DT_S).round() as u64;
        for _ in 0..ticks {
            self.step()?;
        }
        Ok(())
    }

    pub fn metrics(&self) -> RunMetrics {
        RunMetrics {
            algorithm: self.algo.name().to_string(),
            beta: self.cfg.world.beta,
            tasks: self.records.clone(),
            coverage: self.coverage_samples.clone(),
            deltas: self.delta_records.clone(),
            local_completions: self.local_completions,
        }
    }
}

fn build_controller(
    cfg: &RunConfig,
    algo: AlgoKind,
    rm: Option<crate::control::RegressionModel>,
) -> Result<Controller> {
    Ok(match algo {
        AlgoKind::Livemap => Controller::CentralHead(CentralHead::new(
            cfg.world.beta,
            cfg.control.schedule_period_s,
            cfg.control.schedule_cell_m,
        )),
        AlgoKind::LivemapDist => {
            let mut dhead = DHead::new(cfg.world.beta, cfg.control.schedule_cell_m);
            dhead.beta_margin = cfg.control.dhead_beta_margin;
            Controller::DHead(dhead)
        }
        AlgoKind::LivemapLite => Controller::Lite,
        AlgoKind::Eo => Controller::Eo,
        AlgoKind::Lp => Controller::Lp,
        AlgoKind::Ro => Controller::Ro,
        AlgoKind::Rm => Controller::Rm(
            rm.ok_or_else(|| CoreError::invalid("regression controller needs a fitted model"))?,
        ),
    })
}

fn policy_state_dim(cfg: &RunConfig, algo: AlgoKind) -> usize {
    if algo.uses_dist_encoding() {
        dist_state_dim(cfg.world.partition_count)
    } else {
        central_state_dim()
    }
}

/// Harvest regression training data from a random-offloading warm-up run.
pub fn rm_warmup(cfg: &RunConfig, seed: u64) -> Result<Vec<RmSample>> {
    let warm_seed = seeds::subseed(seed, seeds::label::WARMUP);
    let controller = build_controller(cfg, AlgoKind::Ro, None)?;
    let mut engine = Engine::new(cfg, AlgoKind::Ro, warm_seed, controller, None, false, false)?;
    engine.start()?;
    let target = cfg.control.rm_warmup_tasks;
    let max_ticks = 3_600_000u64;
    while engine.rm_samples.len() < target && engine.sim.tick() < max_ticks {
        engine.step()?;
    }
    Ok(engine.rm_samples)
}

/// Run one experiment and (optionally) write `tasks.csv`, `coverage.csv`,
/// and `summary.csv` to `out_dir`.
pub fn run(
    cfg: &RunConfig,
    algo: AlgoKind,
    seed: u64,
    out_dir: Option<&Path>,
    checkpoint: Option<&Path>,
) -> Result<RunMetrics> {
    let policy = if algo.needs_policy() {
        let dim = policy_state_dim(cfg, algo);
        let pc = cfg.policy_config(dim);
        Some(match checkpoint {
            Some(path) => QPolicy::load(path, pc)?,
            None => QPolicy::new(pc, seeds::subseed(seed, seeds::label::POLICY))?,
        })
    } else {
        None
    };

    let rm_model = if algo == AlgoKind::Rm {
        let samples = rm_warmup(cfg, seed)?;
        Some(rm_fit(
            &samples,
            cfg.world.partition_count,
            cfg.control.rm_ridge,
        )?)
    } else {
        None
    };

    let controller = build_controller(cfg, algo, rm_model)?;
    let mut engine = Engine::new(cfg, algo, seed, controller, policy, false, false)?;
    engine.run_for(cfg.world.duration_s)?;
    let metrics = engine.metrics();

    if let Some(dir) = out_dir {
        write_run_csvs(dir, &metrics)?;
    }
    Ok(metrics)
}

/// Training outcome summary.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub requested_steps: u64,
    pub completed_steps: u64,
    pub sim_seconds: f64,
    pub final_epsilon: f64,
    pub final_loss: f64,
    pub checkpoint: PathBuf,
}

/// Train the shared policy inside the simulator with epsilon-greedy
/// exploration, checkpointing to `checkpoint_out` (plus a state-schema
/// sidecar). `resume` continues the step counter from an earlier checkpoint.
pub fn train(
    cfg: &RunConfig,
    mode: AlgoKind,
    steps: u64,
    seed: u64,
    checkpoint_out: &Path,
    resume: Option<&Path>,
) -> Result<TrainReport> {
    if !matches!(mode, AlgoKind::Livemap | AlgoKind::LivemapDist) {
        return Err(CoreError::invalid(
            "training mode must be livemap (central) or livemap-dist (distributed)",
        ));
    }
    let dim = policy_state_dim(cfg, mode);
    let pc = cfg.policy_config(dim);
    let policy = match resume {
        Some(path) => QPolicy::load(path, pc)?,
        None => QPolicy::new(pc, seeds::subseed(seed, seeds::label::POLICY))?,
    };
    let start_steps = policy.train_steps();

    let controller = build_controller(cfg, mode, None)?;
    let mut engine = Engine::new(cfg, mode, seed, controller, Some(policy), true, true)?;
    engine.set_training_log(true);

    let target = start_steps + steps;
    if steps > 0 {
        engine.start()?;
        let max_ticks = 7_200_000u64;
        while engine.policy.as_ref().unwrap().train_steps() < target
            && engine.sim.tick() < max_ticks
        {
            engine.step()?;
        }
    }

    let policy = engine.policy.as_ref().unwrap();
    policy.save(checkpoint_out)?;
    let schema = if mode.uses_dist_encoding() {
        dist_schema(cfg.world.partition_count)
    } else {
        central_schema()
    };
    let schema_path = checkpoint_out.with_extension("schema.txt");
    write_schema(&schema_path, &schema)?;

    Ok(TrainReport {
        requested_steps: steps,
        completed_steps: policy.train_steps() - start_steps,
        sim_seconds: engine.sim.now_s(),
        final_epsilon: policy.epsilon(),
        final_loss: engine.last_loss,
        checkpoint: checkpoint_out.to_path_buf(),
    })
}

/// One sweep cell result.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub algorithm: String,
    pub mean_latency_s: f64,
    pub p95_latency_s: f64,
    pub fulfillment_rate: f64,
}

/// Sweepable scenario parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Vehicles,
    Bandwidth,
    Servers,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "vehicles" => SweepParam::Vehicles,
            "bandwidth" => SweepParam::Bandwidth,
            "servers" => SweepParam::Servers,
            other => {
                return Err(CoreError::invalid(format!(
                    "unknown sweep parameter `{other}` (expected vehicles|bandwidth|servers)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Vehicles => "vehicles",
            SweepParam::Bandwidth => "bandwidth",
            SweepParam::Servers => "servers",
        }
    }

    fn apply(&self, cfg: &RunConfig, value: f64) -> RunConfig {
        let mut c = cfg.clone();
        match self {
            SweepParam::Vehicles => c.world.vehicle_count = value.round() as usize,
            SweepParam::Bandwidth => c.radio.bandwidth_hz = value,
            SweepParam::Servers => c.world.server_count = value.round() as usize,
        }
        c
    }
}

/// Run every (value, algorithm) cell with aligned seeds.
pub fn sweep(
    cfg: &RunConfig,
    param: SweepParam,
    values: &[f64],
    algos: &[AlgoKind],
    seed: u64,
    checkpoint: Option<&Path>,
    out_dir: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(CoreError::invalid("sweep needs at least one value"));
    }
    let mut rows = Vec::new();
    for &value in values {
        let cell_cfg = param.apply(cfg, value);
        cell_cfg.validate()?;
        for &algo in algos {
            let metrics = run(&cell_cfg, algo, seed, None, checkpoint)?;
            rows.push(SweepRow {
                parameter: param.name().to_string(),
                value,
                algorithm: algo.name().to_string(),
                mean_latency_s: metrics.mean_latency_s(),
                p95_latency_s: metrics.latency_quantile(0.95),
                fulfillment_rate: metrics.fulfillment_rate(),
            });
        }
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut body = String::from(
            "parameter,value,algorithm,mean_latency_s,p95_latency_s,fulfillment_rate\n",
        );
        for r in &rows {
            body.push_str(&format!(
                "{},{:.6},{},{:.6},{:.6},{:.6}\n",
                r.parameter,
                r.value,
                r.algorithm,
                r.mean_latency_s,
                r.p95_latency_s,
                r.fulfillment_rate
            ));
        }
        std::fs::write(dir.join("sweep.csv"), body)?;
    }
    Ok(rows)
}

/// Write the three run-trace CSVs with fixed six-decimal formatting.
pub fn write_run_csvs(dir: &Path, metrics: &RunMetrics) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut tasks = String::from(
        "task_id,vehicle_id,partition,submit_s,onboard_s,uplink_s,queue_s,edge_s,downlink_s,latency_s\n",
    );
    for t in &metrics.tasks {
        let d = &t.durations;
        tasks.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            t.task_id,
            t.vehicle_id,
            t.partition,
            ticks_to_string(t.submit_tick),
            ticks_to_string(d.onboard),
            ticks_to_string(d.uplink),
            ticks_to_string(d.queue),
            ticks_to_string(d.edge),
            ticks_to_string(d.downlink),
            ticks_to_string(t.latency_ticks()),
        ));
    }
    std::fs::write(dir.join("tasks.csv"), tasks)?;

    let mut coverage = String::from("time_s,instant_fraction,scheduled_count\n");
    for c in &metrics.coverage {
        coverage.push_str(&format!(
            "{},{:.6},{}\n",
            ticks_to_string(c.tick),
            c.instant_fraction,
            c.scheduled_count
        ));
    }
    std::fs::write(dir.join("coverage.csv"), coverage)?;

    let mut deltas = String::from("seq,time_s,origin_task,updated_ids,removed_ids\n");
    for d in &metrics.deltas {
        let join = |ids: &[u64]| {
            ids.iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        deltas.push_str(&format!(
            "{},{},{},{},{}\n",
            d.seq,
            ticks_to_string(d.tick),
            d.origin_task,
            join(&d.updated_ids),
            join(&d.removed_ids)
        ));
    }
    std::fs::write(dir.join("deltas.csv"), deltas)?;

    let summary = format!(
        "algorithm,mean_latency_s,p50,p95,coverage_mean,fulfillment_rate\n{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
        metrics.algorithm,
        metrics.mean_latency_s(),
        metrics.latency_quantile(0.5),
        metrics.latency_quantile(0.95),
        metrics.coverage_mean(),
        metrics.fulfillment_rate(),
    );
    std::fs::write(dir.join("summary.csv"), summary)?;
    Ok(())
}


#[cfg(test)]
mod diag {
    use super::*;

    #[test]
    #[ignore]
    fn dhead_track_quality() {
        let cfg = RunConfig::default();
        let controller = build_controller(&cfg, AlgoKind::LivemapDist, None).unwrap();
        let dim = policy_state_dim(&cfg, AlgoKind::LivemapDist);
        let policy = QPolicy::new(
            cfg.policy_config(dim),
            seeds::subseed(1, seeds::label::POLICY),
        )
        .unwrap();
        let mut engine = Engine::new(
            &cfg,
            AlgoKind::LivemapDist,
            1,
            controller,
            Some(policy),
            false,
            false,
        )
        .unwrap();
        engine.start().unwrap();
        for tick in 1..=20_000u64 {
            engine.step().unwrap();
            if tick % 2000 == 0 {
                let now = engine.sim.now_s();
                // How close do extrapolated vehicle-class objects sit to any
                // true vehicle position?
                let mut errs: Vec<f64> = Vec::new();
                for obj in engine.pipeline.global.objects() {
                    if obj.class_id != crate::scenario::CLASS_VEHICLE {
                        continue;
                    }
                    let est = crate::map::extrapolate_history(&obj.history, now, 25.0).unwrap();
                    let best = (0..engine.world.vehicle_count as u32)
                        .map(|v| engine.world.vehicle_position(v, now).ground_dist(&est))
                        .fold(f64::INFINITY, f64::min);
                    errs.push(best);
                }
                errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let sched = engine.current_x.iter().filter(|x| **x).count();
                let oracle = coverage::schedule(
                    &engine.world.disks(now),
                    cfg.world.beta,
                    cfg.control.schedule_cell_m,
                )
                .unwrap();
                println!(
                    "t={now:5.1} veh_objects={:2} p50_err={:.1} p90_err={:.1} max_err={:.1} sched={sched:2} oracle={:2}",
                    errs.len(),
                    errs.get(errs.len() / 2).copied().unwrap_or(-1.0),
                    errs.get(errs.len() * 9 / 10).copied().unwrap_or(-1.0),
                    errs.last().copied().unwrap_or(-1.0),
                    oracle.scheduled_count(),
                );
            }
        }
    }
}
