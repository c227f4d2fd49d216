//! DQN agent: Q-network pair, epsilon-greedy exploration, prioritized replay
//! training, and policy sharing between the central learner and vehicle
//! agents.

mod encode;
mod replay;

pub use encode::{
    central_schema, central_state_dim, dist_schema, dist_state_dim, encode_state_central,
    encode_state_dist, write_schema, SystemStatus, VehicleStatus, LATENCY_CAP_S, MULT_NORM,
};
pub use replay::{PrioritizedReplay, SumTree, Transition};

use std::io::Read;
use std::path::Path;

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::neural::{AdamState, DenseNet, QBatch};

const CHECKPOINT_MAGIC: &[u8; 8] = b"QPOLICY1";

/// Q-policy hyperparameters.
#[derive(Debug, Clone)]
pub struct PolicyConfig {
    pub state_dim: usize,
    pub action_count: usize,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay: f64,
    pub target_sync_period: u64,
    pub leaky_slope: f64,
}

impl PolicyConfig {
    pub fn new(state_dim: usize, action_count: usize) -> Self {
        Self {
            state_dim,
            action_count,
            hidden: vec![256, 256],
            gamma: 0.9,
            batch_size: 512,
            learning_rate: 0.5e-3,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.9995,
            target_sync_period: 500,
            leaky_slope: 0.01,
        }
    }

    fn sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.state_dim);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(self.action_count);
        sizes
    }
}

/// Argmax with ties broken to the lowest index.
pub fn argmax_tie_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Online/target Q-network pair with its optimizer and exploration schedule.
#[derive(Debug, Clone)]
pub struct QPolicy {
    pub config: PolicyConfig,
    online: DenseNet,
    target: DenseNet,
    opt: AdamState,
    epsilon: f64,
    train_steps: u64,
}

impl QPolicy {
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self> {
        let online = DenseNet::new(&config.sizes(), config.leaky_slope, seed)?;
        let target = online.clone();
        let opt = AdamState::new(&online, config.learning_rate);
        Ok(Self {
            epsilon: config.epsilon_start,
            train_steps: 0,
            config,
            online,
            target,
            opt,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn online(&self) -> &DenseNet {
        &self.online
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.online.forward(state)
    }

    /// Epsilon-greedy action selection. With `explore` false this is the
    /// plain greedy argmax, ties to the lowest action index.
    pub fn act<R: Rng>(&self, state: &[f64], explore: bool, rng: &mut R) -> Result<usize> {
        if explore && rng.gen::<f64>() < self.epsilon {
            return Ok(rng.gen_range(0..self.config.action_count));
        }
        Ok(argmax_tie_lowest(&self.online.forward(state)?))
    }

    /// One DQN update from the replay buffer.
    ///
    /// Targets are `r + γ·max_a Q_target(s')` (just `r` on terminal
    /// transitions); sampled priorities are refreshed to |TD| + floor, the
    /// target net re-syncs every `target_sync_period` steps, and epsilon
    /// decays multiplicatively. Returns the batch loss.
    pub fn train_step<R: Rng>(
        &mut self,
        replay: &mut PrioritizedReplay,
        rng: &mut R,
    ) -> Result<f64> {
        let b = self.config.batch_size;
        let beta = replay.beta_at(self.train_steps);
        let (indices, weights) = replay.sample(b, beta, rng)?;

        let sd = self.config.state_dim;
        let mut states = Vec::with_capacity(b * sd);
        let mut next_states = Vec::with_capacity(b * sd);
        let mut actions = Vec::with_capacity(b);
        let mut rewards = Vec::with_capacity(b);
        let mut dones = Vec::with_capacity(b);
        for &i in &indices {
            let t = replay.get(i);
            if t.state.len() != sd || t.next_state.len() != sd {
                return Err(CoreError::invalid("transition state dimension mismatch"));
            }
            states.extend_from_slice(&t.state);
            next_states.extend_from_slice(&t.next_state);
            actions.push(t.action);
            rewards.push(t.reward);
            dones.push(t.done);
        }

        let q_next = self.target.forward_batch(&next_states, b)?;
        let a = self.config.action_count;
        let targets: Vec<f64> = (0..b)
            .map(|i| {
                if dones[i] {
                    rewards[i]
                } else {
                    let row = &q_next[i * a..(i + 1) * a];
                    rewards[i] + self.config.gamma * row.iter().cloned().fold(f64::MIN, f64::max)
                }
            })
            .collect();

        let batch = QBatch {
            states,
            actions,
            targets,
            weights,
        };
        let (grads, td) = self.online.backward_batch(&batch)?;
        let loss = {
            let b_f = batch.len() as f64;
            td.iter()
                .zip(&batch.weights)
                .map(|(e, w)| w * e * e)
                .sum::<f64>()
                / b_f
        };
        self.opt.step(&mut self.online, &grads);

        let floor = replay.priority_floor;
        for (i, e) in indices.iter().zip(&td) {
            replay.update_priority(*i, e.abs() + floor);
        }

        self.train_steps += 1;
        if self.train_steps % self.config.target_sync_period == 0 {
            self.target.copy_from(&self.online);
        }
        self.epsilon = (self.epsilon * self.config.epsilon_decay).max(self.config.epsilon_end);

        Ok(loss)
    }

    /// Checkpoint: magic, train-step counter, epsilon, then the online and
    /// target snapshots in the flat network layout.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&self.train_steps.to_le_bytes());
        out.extend_from_slice(&self.epsilon.to_le_bytes());
        let online = self.online.to_bytes();
        let target = self.target.to_bytes();
        out.extend_from_slice(&(online.len() as u64).to_le_bytes());
        out.extend_from_slice(&online);
        out.extend_from_slice(&(target.len() as u64).to_le_bytes());
        out.extend_from_slice(&target);
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path, config: PolicyConfig) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut cur = std::io::Cursor::new(bytes.as_slice());
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(CoreError::invalid("bad checkpoint magic"));
        }
        let mut u64buf = [0u8; 8];
        cur.read_exact(&mut u64buf)?;
        let train_steps = u64::from_le_bytes(u64buf);
        cur.read_exact(&mut u64buf)?;
        let epsilon = f64::from_le_bytes(u64buf);

        let read_net = |cur: &mut std::io::Cursor<&[u8]>| -> Result<DenseNet> {
            let mut len_buf = [0u8; 8];
            cur.read_exact(&mut len_buf)?;
            let len = u64::from_le_bytes(len_buf) as usize;
            let start = cur.position() as usize;
            let slice = cur
                .get_ref()
                .get(start..start + len)
                .ok_or_else(|| CoreError::invalid("truncated checkpoint"))?;
            cur.set_position((start + len) as u64);
            DenseNet::from_bytes(slice)
        };
        let online = read_net(&mut cur)?;
        let target = read_net(&mut cur)?;

        if online.sizes() != config.sizes().as_slice() {
            return Err(CoreError::invalid(format!(
                "checkpoint architecture {:?} does not match config {:?}",
                online.sizes(),
                config.sizes()
            )));
        }
        let opt = AdamState::new(&online, config.learning_rate);
        Ok(Self {
            config,
            online,
            target,
            opt,
            epsilon,
            train_steps,
        })
    }
}

/// Per-vehicle read-only snapshots of the shared policy.
#[derive(Debug, Clone)]
pub struct AgentPool {
    snapshots: Vec<DenseNet>,
}

impl AgentPool {
    pub fn new(count: usize, policy: &QPolicy) -> Self {
        Self {
            snapshots: vec![policy.online().clone(); count],
        }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn agent(&self, idx: usize) -> &DenseNet {
        &self.snapshots[idx]
    }

    pub fn greedy_action(&self, idx: usize, state: &[f64]) -> Result<usize> {
        Ok(argmax_tie_lowest(&self.snapshots[idx].forward(state)?))
    }
}

/// Copy the central online net to every vehicle agent. In-simulation this is
/// immediate and lossless; stale snapshots only arise when a sync period is
/// configured and the caller withholds syncs.
pub fn sync_shared_policy(central: &QPolicy, agents: &mut AgentPool) {
    for snap in &mut agents.snapshots {
        snap.copy_from(central.online());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> PolicyConfig {
        let mut c = PolicyConfig::new(3, 5);
        c.hidden = vec![16, 16];
        c.batch_size = 8;
        c
    }

    #[test]
    fn greedy_argmax_and_tie_rule() {
        assert_eq!(argmax_tie_lowest(&[1.0, 5.0, 2.0, 0.0, 3.0]), 1);
        assert_eq!(argmax_tie_lowest(&[2.0, 2.0, 2.0]), 0);
        // Invariant under a positive affine transform of all outputs.
        let q = [0.3, -1.2, 0.9, 0.9, 0.1];
        let t: Vec<f64> = q.iter().map(|v| 4.0 * v + 7.0).collect();
        assert_eq!(argmax_tie_lowest(&q), argmax_tie_lowest(&t));
    }

    #[test]
    fn exploration_at_epsilon_one_is_uniform() {
        let policy = QPolicy::new(tiny_config(), 7).unwrap();
        assert_eq!(policy.epsilon(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let mut counts = [0u64; 5];
        for _ in 0..n {
            counts[policy.act(&[0.1, 0.2, 0.3], true, &mut rng).unwrap()] += 1;
        }
        let p = 1.0 / 5.0;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - p).abs() < 3.0 * sigma, "freq {freq}");
        }
    }

    #[test]
    fn done_transitions_use_reward_targets() {
        // With gamma 0 every target is the reward, so training regresses the
        // chosen action's Q-value toward r.
        let mut cfg = tiny_config();
        cfg.gamma = 0.0;
        cfg.learning_rate = 5e-3;
        let mut policy = QPolicy::new(cfg, 9).unwrap();
        let mut replay = PrioritizedReplay::new(64);
        for k in 0..16 {
            replay.store(Transition {
                state: vec![0.5, -0.5, 0.1],
                action: k % 5,
                reward: -0.25,
                next_state: vec![0.5, -0.5, 0.1],
                done: k % 2 == 0,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..400 {
            policy.train_step(&mut replay, &mut rng).unwrap();
        }
        let q = policy.q_values(&[0.5, -0.5, 0.1]).unwrap();
        for v in q {
            assert!((v + 0.25).abs() < 0.05, "q {v} should approach -0.25");
        }
    }

    #[test]
    fn epsilon_monotone_to_floor() {
        let mut cfg = tiny_config();
        cfg.epsilon_decay = 0.5;
        let mut policy = QPolicy::new(cfg, 11).unwrap();
        let mut replay = PrioritizedReplay::new(64);
        for _ in 0..8 {
            replay.store(Transition {
                state: vec![0.0; 3],
                action: 0,
                reward: 0.0,
                next_state: vec![0.0; 3],
                done: false,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut last = policy.epsilon();
        for _ in 0..10 {
            policy.train_step(&mut replay, &mut rng).unwrap();
            assert!(policy.epsilon() <= last);
            last = policy.epsilon();
        }
        assert_eq!(policy.epsilon(), 0.05);
    }

    #[test]
    fn sync_propagates_snapshots() {
        let mut policy = QPolicy::new(tiny_config(), 13).unwrap();
        let mut agents = AgentPool::new(3, &policy);
        let probe = vec![0.3, 0.6, -0.2];

        // Train a little so the central policy drifts from the snapshots.
        let mut replay = PrioritizedReplay::new(64);
        for k in 0..16 {
            replay.store(Transition {
                state: probe.clone(),
                action: k % 5,
                reward: -(k as f64),
                next_state: probe.clone(),
                done: false,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            policy.train_step(&mut replay, &mut rng).unwrap();
        }

        // Stale without a sync.
        let stale = agents.agent(0).clone();
        assert_ne!(&stale, policy.online());

        sync_shared_policy(&policy, &mut agents);
        for i in 0..agents.len() {
            assert_eq!(agents.agent(i), policy.online());
            assert_eq!(
                agents.greedy_action(i, &probe).unwrap(),
                policy.act(&probe, false, &mut rng).unwrap()
            );
        }
    }

    #[test]
    fn checkpoint_round_trip_keeps_counters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.ckpt");
        let mut policy = QPolicy::new(tiny_config(), 15).unwrap();
        let mut replay = PrioritizedReplay::new(64);
        for _ in 0..8 {
            replay.store(Transition {
                state: vec![0.1; 3],
                action: 1,
                reward: -0.5,
                next_state: vec![0.1; 3],
                done: false,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..7 {
            policy.train_step(&mut replay, &mut rng).unwrap();
        }
        policy.save(&path).unwrap();
        let loaded = QPolicy::load(&path, tiny_config()).unwrap();
        assert_eq!(loaded.train_steps(), 7);
        assert_eq!(loaded.epsilon(), policy.epsilon());
        assert_eq!(loaded.online(), policy.online());

        let mut bad = tiny_config();
        bad.hidden = vec![8];
        assert!(QPolicy::load(&path, bad).is_err());
    }
}
