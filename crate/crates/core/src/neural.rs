//! Minimal dense feed-forward network engine in double precision: forward,
//! reverse-mode gradients for the weighted TD loss, an adaptive-moment
//! optimizer, and central-finite-difference verification.
//!
//! Hidden layers use the leaky rectifier; the output layer is linear.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

const SNAPSHOT_MAGIC: &[u8; 8] = b"DNETSNAP";
const SNAPSHOT_VERSION: u32 = 1;

/// Dot product with four accumulators so the reduction pipelines.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(dst: &mut [f64], scale: f64, src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

/// A dense feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    sizes: Vec<usize>,
    /// Per layer, row-major (out × in).
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    leaky_slope: f64,
}

/// One training batch for the weighted TD loss
/// `L = mean_i w_i · (Q(x_i)[a_i] − t_i)²`.
#[derive(Debug, Clone)]
pub struct QBatch {
    /// Flat row-major states, `batch × input_dim`.
    pub states: Vec<f64>,
    pub actions: Vec<usize>,
    pub targets: Vec<f64>,
    /// Importance weights.
    pub weights: Vec<f64>,
}

impl QBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn validate(&self, net: &DenseNet) -> Result<()> {
        let b = self.actions.len();
        if b == 0 {
            return Err(CoreError::invalid("batch must be non-empty"));
        }
        if self.states.len() != b * net.input_dim() {
            return Err(CoreError::invalid("batch state length mismatch"));
        }
        if self.targets.len() != b || self.weights.len() != b {
            return Err(CoreError::invalid("batch target/weight length mismatch"));
        }
        if self.actions.iter().any(|&a| a >= net.output_dim()) {
            return Err(CoreError::invalid("action index out of range"));
        }
        Ok(())
    }
}

/// Parameter gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl DenseNet {
    /// Seeded uniform initialization scaled by 1/√fan_in.
    pub fn new(sizes: &[usize], leaky_slope: f64, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(CoreError::invalid("need at least input and output sizes"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-scale..scale))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            leaky_slope,
        })
    }

    pub fn zeros(sizes: &[usize], leaky_slope: f64) -> Result<Self> {
        let mut net = Self::new(sizes, leaky_slope, 0)?;
        for w in &mut net.weights {
            w.fill(0.0);
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn layer_mut(&mut self, idx: usize) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights[idx], &mut self.biases[idx])
    }

    pub fn layer(&self, idx: usize) -> (&[f64], &[f64]) {
        (&self.weights[idx], &self.biases[idx])
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    #[inline]
    fn activate(&self, layer: usize, z: f64) -> f64 {
        let hidden = layer + 1 < self.num_layers();
        if hidden && z < 0.0 {
            self.leaky_slope * z
        } else {
            z
        }
    }

    /// Forward pass for one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(CoreError::invalid(format!(
                "input length {} != {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut cur = x.to_vec();
        for l in 0..self.num_layers() {
            let out_dim = self.sizes[l + 1];
            let in_dim = self.sizes[l];
            let mut next = vec![0.0; out_dim];
            for (o, n) in next.iter_mut().enumerate() {
                let row = &self.weights[l][o * in_dim..(o + 1) * in_dim];
                *n = self.activate(l, dot(row, &cur) + self.biases[l][o]);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Batched forward over flat row-major inputs; returns flat outputs.
    pub fn forward_batch(&self, xs: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.forward_trace(xs, batch)?.pop().unwrap())
    }

    /// Post-activation values for every layer, batch-flat. `result[l]` is the
    /// output of layer `l`.
    fn forward_trace(&self, xs: &[f64], batch: usize) -> Result<Vec<Vec<f64>>> {
        if xs.len() != batch * self.input_dim() {
            return Err(CoreError::invalid("batched input length mismatch"));
        }
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.num_layers());
        let mut cur: &[f64] = xs;
        for l in 0..self.num_layers() {
            let out_dim = self.sizes[l + 1];
            let in_dim = self.sizes[l];
            let mut out = vec![0.0; batch * out_dim];
            for b in 0..batch {
                let row_in = &cur[b * in_dim..(b + 1) * in_dim];
                let row_out = &mut out[b * out_dim..(b + 1) * out_dim];
                for (o, v) in row_out.iter_mut().enumerate() {
                    let w = &self.weights[l][o * in_dim..(o + 1) * in_dim];
                    *v = self.activate(l, dot(w, row_in) + self.biases[l][o]);
                }
            }
            acts.push(out);
            cur = acts.last().unwrap();
        }
        Ok(acts)
    }

    /// Reverse-accumulation gradients of the weighted TD loss.
    ///
    /// Only the chosen action output of each sample receives upstream
    /// gradient. Returns `(gradients, td_errors)` with signed TD errors
    /// `target − Q(x)[action]`.
    pub fn backward_batch(&self, batch: &QBatch) -> Result<(Gradients, Vec<f64>)> {
        batch.validate(self)?;
        let b = batch.len();
        let acts = self.forward_trace(&batch.states, b)?;
        let out_dim = self.output_dim();
        let outputs = acts.last().unwrap();

        let mut td = Vec::with_capacity(b);
        // dL/d(output), non-zero only at the selected action.
        let mut d_out = vec![0.0; b * out_dim];
        let inv_b = 1.0 / b as f64;
        for i in 0..b {
            let q = outputs[i * out_dim + batch.actions[i]];
            let err = batch.targets[i] - q;
            td.push(err);
            d_out[i * out_dim + batch.actions[i]] = -2.0 * batch.weights[i] * err * inv_b;
        }

        let mut grads = Gradients {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|bv| vec![0.0; bv.len()]).collect(),
        };

        let mut d_cur = d_out;
        for l in (0..self.num_layers()).rev() {
            let out_d = self.sizes[l + 1];
            let in_d = self.sizes[l];
            let layer_out = &acts[l];
            let is_output = l + 1 == self.num_layers();

            // Through the activation. The leaky rectifier's derivative can be
            // read off the post-activation sign.
            if !is_output {
                for (v, y) in d_cur.iter_mut().zip(layer_out.iter()) {
                    if *y < 0.0 {
                        *v *= self.leaky_slope;
                    }
                }
            }

            let prev: &[f64] = if l == 0 { &batch.states } else { &acts[l - 1] };
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            let mut d_prev = vec![0.0; b * in_d];
            for i in 0..b {
                let d_row = &d_cur[i * out_d..(i + 1) * out_d];
                let x_row = &prev[i * in_d..(i + 1) * in_d];
                let dp_row = &mut d_prev[i * in_d..(i + 1) * in_d];
                for (o, &g) in d_row.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    axpy(&mut gw[o * in_d..(o + 1) * in_d], g, x_row);
                    axpy(dp_row, g, &self.weights[l][o * in_d..(o + 1) * in_d]);
                }
            }
            d_cur = d_prev;
        }

        Ok((grads, td))
    }

    /// Loss value for a batch (used by the finite-difference check).
    pub fn loss(&self, batch: &QBatch) -> Result<f64> {
        batch.validate(self)?;
        let b = batch.len();
        let out = self.forward_batch(&batch.states, b)?;
        let out_dim = self.output_dim();
        let mut sum = 0.0;
        for i in 0..b {
            let q = out[i * out_dim + batch.actions[i]];
            let e = q - batch.targets[i];
            sum += batch.weights[i] * e * e;
        }
        Ok(sum / b as f64)
    }

    /// Copy parameters from another net of identical shape.
    pub fn copy_from(&mut self, other: &DenseNet) {
        assert_eq!(self.sizes, other.sizes, "architecture mismatch");
        self.weights.clone_from(&other.weights);
        self.biases.clone_from(&other.biases);
    }

    /// Serialize: magic, version, leaky slope, layer-size header, then
    /// little-endian 64-bit floats (weights then biases per layer).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.leaky_slope.to_le_bytes());
        out.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        for &s in &self.sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for l in 0..self.num_layers() {
            for v in self.weights[l].iter().chain(self.biases[l].iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = std::io::Cursor::new(bytes);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(CoreError::invalid("bad snapshot magic"));
        }
        let mut u32buf = [0u8; 4];
        cur.read_exact(&mut u32buf)?;
        if u32::from_le_bytes(u32buf) != SNAPSHOT_VERSION {
            return Err(CoreError::invalid("unsupported snapshot version"));
        }
        let mut f64buf = [0u8; 8];
        cur.read_exact(&mut f64buf)?;
        let leaky_slope = f64::from_le_bytes(f64buf);
        cur.read_exact(&mut u32buf)?;
        let n_sizes = u32::from_le_bytes(u32buf) as usize;
        if n_sizes < 2 {
            return Err(CoreError::invalid("snapshot has too few layers"));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            cur.read_exact(&mut u32buf)?;
            sizes.push(u32::from_le_bytes(u32buf) as usize);
        }
        let mut net = DenseNet::zeros(&sizes, leaky_slope)?;
        for l in 0..net.num_layers() {
            for slot in 0..net.weights[l].len() + net.biases[l].len() {
                cur.read_exact(&mut f64buf)?;
                let v = f64::from_le_bytes(f64buf);
                let wlen = net.weights[l].len();
                if slot < wlen {
                    net.weights[l][slot] = v;
                } else {
                    net.biases[l][slot - wlen] = v;
                }
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &DenseNet, learning_rate: f64) -> Self {
        let zeros_like =
            |src: &Vec<Vec<f64>>| src.iter().map(|v| vec![0.0; v.len()]).collect::<Vec<_>>();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m_w: zeros_like(&net.weights),
            v_w: zeros_like(&net.weights),
            m_b: zeros_like(&net.biases),
            v_b: zeros_like(&net.biases),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One deterministic parameter update.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for l in 0..net.num_layers() {
            Self::update(
                &mut net.weights[l],
                &grads.weights[l],
                &mut self.m_w[l],
                &mut self.v_w[l],
                self.learning_rate,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
            Self::update(
                &mut net.biases[l],
                &grads.biases[l],
                &mut self.m_b[l],
                &mut self.v_b[l],
                self.learning_rate,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn update(
        params: &mut [f64],
        grads: &[f64],
        m: &mut [f64],
        v: &mut [f64],
        lr: f64,
        b1: f64,
        b2: f64,
        eps: f64,
        bc1: f64,
        bc2: f64,
    ) {
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

fn param_slot(net: &mut DenseNet, layer: usize, bias: bool, idx: usize) -> &mut f64 {
    if bias {
        &mut net.biases[layer][idx]
    } else {
        &mut net.weights[layer][idx]
    }
}

/// Maximum relative discrepancy between `analytic` gradients and central
/// finite differences of the batch loss.
pub fn max_rel_discrepancy(
    net: &DenseNet,
    analytic: &Gradients,
    batch: &QBatch,
    epsilon: f64,
) -> Result<f64> {
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for l in 0..net.num_layers() {
        for bias in [false, true] {
            let len = if bias {
                net.biases[l].len()
            } else {
                net.weights[l].len()
            };
            for p in 0..len {
                let orig = *param_slot(&mut probe, l, bias, p);
                *param_slot(&mut probe, l, bias, p) = orig + epsilon;
                let plus = probe.loss(batch)?;
                *param_slot(&mut probe, l, bias, p) = orig - epsilon;
                let minus = probe.loss(batch)?;
                *param_slot(&mut probe, l, bias, p) = orig;
                let numeric = (plus - minus) / (2.0 * epsilon);
                let a = if bias {
                    analytic.biases[l][p]
                } else {
                    analytic.weights[l][p]
                };
                if a.abs() < 1e-12 && numeric.abs() < 1e-12 {
                    continue;
                }
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-10);
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}

/// Compare the network's own gradients against central finite differences.
pub fn grad_check(net: &DenseNet, batch: &QBatch, epsilon: f64) -> Result<f64> {
    let (grads, _) = net.backward_batch(batch)?;
    max_rel_discrepancy(net, &grads, batch, epsilon)
}
