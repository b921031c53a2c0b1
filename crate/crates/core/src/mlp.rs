//! Minimal fully connected binary classifier with manual backpropagation.
//!
//! ReLU hidden layers, sigmoid output, binary cross-entropy loss. Used as
//! a learned discriminator; deliberately small and dependency-free so the
//! gradient can be checked against finite differences.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::sigmoid;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major (n_out × n_in) weight matrix.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpNet {
    layers: Vec<Layer>,
}

/// Optimizer choice for training.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 128,
            seed: 0,
            optimizer: Optimizer::default(),
        }
    }
}

impl MlpNet {
    /// New net with the given layer widths (input first, 1 last), weights
    /// initialized uniform(−1/√fan_in, +1/√fan_in), biases zero.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidParameter(
                "need at least an input and an output width".into(),
            ));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::InvalidParameter("output width must be 1".into()));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidParameter("zero layer width".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        for win in widths.windows(2) {
            let (n_in, n_out) = (win[0], win[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            let w = (0..n_in * n_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            layers.push(Layer {
                w,
                b: vec![0.0; n_out],
                n_in,
                n_out,
            });
        }
        Ok(MlpNet { layers })
    }

    /// Standard discriminator architecture: four hidden layers of 100
    /// units, scalar sigmoid output.
    pub fn discriminator(input_dim: usize, seed: u64) -> Self {
        MlpNet::new(&[input_dim, 100, 100, 100, 100, 1], seed)
            .expect("fixed architecture is valid")
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn zeroed(widths: &[usize]) -> Result<Self> {
        let mut net = MlpNet::new(widths, 0)?;
        for layer in &mut net.layers {
            layer.w.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward_batch(std::slice::from_ref(&x.to_vec()))?[0])
    }

    /// Forward pass over a batch; returns the sigmoid output per row.
    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        for x in xs {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
        }
        let n = xs.len();
        let mut act: Vec<f64> = Vec::with_capacity(n * d);
        for x in xs {
            act.extend_from_slice(x);
        }
        let mut width = d;
        for (li, layer) in self.layers.iter().enumerate() {
            let last = li + 1 == self.layers.len();
            let mut out = vec![0.0; n * layer.n_out];
            matmul_bias(&act, n, width, layer, &mut out);
            if !last {
                out.iter_mut().for_each(|v| {
                    if *v < 0.0 {
                        *v = 0.0
                    }
                });
            }
            act = out;
            width = layer.n_out;
        }
        Ok(act.into_iter().map(sigmoid).collect())
    }

    /// Sign pattern of every hidden pre-activation over the batch. Used by
    /// the gradient check to reject finite-difference probes that step
    /// across a ReLU kink, where the central difference is meaningless.
    fn relu_pattern(&self, xs: &[Vec<f64>]) -> Result<Vec<bool>> {
        let d = self.input_dim();
        let n = xs.len();
        let mut act: Vec<f64> = Vec::with_capacity(n * d);
        for x in xs {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            act.extend_from_slice(x);
        }
        let mut pattern = Vec::new();
        let mut width = d;
        for (li, layer) in self.layers.iter().enumerate() {
            let last = li + 1 == self.layers.len();
            let mut out = vec![0.0; n * layer.n_out];
            matmul_bias(&act, n, width, layer, &mut out);
            if !last {
                pattern.extend(out.iter().map(|&v| v > 0.0));
                out.iter_mut().for_each(|v| {
                    if *v < 0.0 {
                        *v = 0.0
                    }
                });
            }
            act = out;
            width = layer.n_out;
        }
        Ok(pattern)
    }

    fn params_mut(&mut self) -> Vec<&mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Serialize to a flat parameter array with a layer-shape header.
    pub fn to_flat_json(&self) -> serde_json::Value {
        let shapes: Vec<[usize; 2]> = self.layers.iter().map(|l| [l.n_in, l.n_out]).collect();
        let params: Vec<f64> = self
            .layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).cloned())
            .collect();
        serde_json::json!({ "shapes": shapes, "params": params })
    }

    pub fn from_flat_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Flat {
            shapes: Vec<[usize; 2]>,
            params: Vec<f64>,
        }
        let flat: Flat = serde_json::from_value(v.clone())?;
        let mut layers = Vec::new();
        let mut off = 0;
        for [n_in, n_out] in flat.shapes {
            let nw = n_in * n_out;
            if off + nw + n_out > flat.params.len() {
                return Err(Error::InvalidParameter("flat param array too short".into()));
            }
            layers.push(Layer {
                w: flat.params[off..off + nw].to_vec(),
                b: flat.params[off + nw..off + nw + n_out].to_vec(),
                n_in,
                n_out,
            });
            off += nw + n_out;
        }
        if off != flat.params.len() {
            return Err(Error::InvalidParameter("flat param array too long".into()));
        }
        if layers.is_empty() {
            return Err(Error::InvalidParameter("no layers".into()));
        }
        Ok(MlpNet { layers })
    }
}

fn matmul_bias(act: &[f64], n: usize, width: usize, layer: &Layer, out: &mut [f64]) {
    debug_assert_eq!(width, layer.n_in);
    for i in 0..n {
        let row = &act[i * width..(i + 1) * width];
        let orow = &mut out[i * layer.n_out..(i + 1) * layer.n_out];
        for (j, o) in orow.iter_mut().enumerate() {
            let wrow = &layer.w[j * width..(j + 1) * width];
            // four accumulators so the dot product vectorizes; the
            // summation order is fixed, keeping outputs deterministic
            let mut acc = [0.0f64; 4];
            let chunks = width / 4;
            for c in 0..chunks {
                let k = c * 4;
                acc[0] += wrow[k] * row[k];
                acc[1] += wrow[k + 1] * row[k + 1];
                acc[2] += wrow[k + 2] * row[k + 2];
                acc[3] += wrow[k + 3] * row[k + 3];
            }
            let mut tail = layer.b[j];
            for k in chunks * 4..width {
                tail += wrow[k] * row[k];
            }
            *o = tail + ((acc[0] + acc[2]) + (acc[1] + acc[3]));
        }
    }
}

/// Mean binary cross-entropy and its gradient with respect to all
/// parameters, computed by manual backpropagation over the batch.
pub fn loss_and_grad(net: &MlpNet, xs: &[Vec<f64>], ys: &[f64]) -> Result<(f64, Vec<f64>)> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let d = net.input_dim();
    for x in xs {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
    }
    // forward, keeping pre-ReLU activations per layer
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len() + 1);
    let mut a0 = Vec::with_capacity(n * d);
    for x in xs {
        a0.extend_from_slice(x);
    }
    acts.push(a0);
    let mut width = d;
    for (li, layer) in net.layers.iter().enumerate() {
        let last = li + 1 == net.layers.len();
        let mut out = vec![0.0; n * layer.n_out];
        matmul_bias(acts.last().unwrap(), n, width, layer, &mut out);
        if !last {
            out.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v = 0.0
                }
            });
        }
        acts.push(out);
        width = layer.n_out;
    }

    let logits = acts.last().unwrap();
    let mut loss = 0.0;
    // dL/dlogit for BCE-with-sigmoid is (p - y) / n
    let mut delta: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let z = logits[i];
        let p = sigmoid(z);
        let y = ys[i];
        // log(1+e^z) computed stably
        let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        loss += softplus - y * z;
        delta.push((p - y) / n as f64);
    }
    loss /= n as f64;

    // backward
    let mut grads: Vec<Vec<f64>> = net
        .layers
        .iter()
        .map(|l| vec![0.0; l.w.len() + l.b.len()])
        .collect();
    let mut cur = delta; // n × layer.n_out of current layer
    for li in (0..net.layers.len()).rev() {
        let layer = &net.layers[li];
        let input = &acts[li];
        let n_in = layer.n_in;
        let n_out = layer.n_out;
        let g = &mut grads[li];
        for i in 0..n {
            let xrow = &input[i * n_in..(i + 1) * n_in];
            let drow = &cur[i * n_out..(i + 1) * n_out];
            for j in 0..n_out {
                let dj = drow[j];
                if dj == 0.0 {
                    continue;
                }
                let wg = &mut g[j * n_in..(j + 1) * n_in];
                for k in 0..n_in {
                    wg[k] += dj * xrow[k];
                }
                g[n_in * n_out + j] += dj;
            }
        }
        if li > 0 {
            // propagate through weights, then through the ReLU of layer li-1
            let mut prev = vec![0.0; n * n_in];
            for i in 0..n {
                let drow = &cur[i * n_out..(i + 1) * n_out];
                let prow = &mut prev[i * n_in..(i + 1) * n_in];
                for (j, &dj) in drow.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    let wrow = &layer.w[j * n_in..(j + 1) * n_in];
                    for k in 0..n_in {
                        prow[k] += dj * wrow[k];
                    }
                }
            }
            // ReLU derivative: 1 where post-activation > 0, else 0
            let post = &acts[li];
            for (p, &a) in prev.iter_mut().zip(post.iter()) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
            cur = prev;
        }
    }
    Ok((loss, grads.concat()))
}

/// Train on labeled real (1) vs fake (0) points by mini-batch gradient
/// descent. Returns the trained net and the final epoch's mean loss.
pub fn mlp_train(
    net: &MlpNet,
    real: &[Vec<f64>],
    fake: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(MlpNet, f64)> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::InvalidParameter("real and fake sets must be non-empty".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be >= 1".into()));
    }
    if !cfg.learning_rate.is_finite() || cfg.learning_rate <= 0.0 {
        return Err(Error::InvalidParameter("learning rate must be positive".into()));
    }
    let mut xs: Vec<Vec<f64>> = real.iter().chain(fake.iter()).cloned().collect();
    let mut ys: Vec<f64> = vec![1.0; real.len()];
    ys.extend(vec![0.0; fake.len()]);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = net.clone();
    let n_params = net.n_params();
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut step = 0usize;
    let batch = cfg.batch_size.max(1);
    let mut final_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        // in-place Fisher-Yates keeps xs/ys paired
        for i in (1..xs.len()).rev() {
            let j = rng.gen_range(0..=i);
            xs.swap(i, j);
            ys.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut n_batches = 0;
        for start in (0..xs.len()).step_by(batch) {
            let end = (start + batch).min(xs.len());
            let (loss, grad) = loss_and_grad(&net, &xs[start..end], &ys[start..end])?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            epoch_loss += loss;
            n_batches += 1;
            step += 1;
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in net.params_mut().into_iter().zip(&grad) {
                        *p -= cfg.learning_rate * g;
                    }
                }
                Optimizer::Adam { beta1, beta2, eps } => {
                    let bc1 = 1.0 - beta1.powi(step as i32);
                    let bc2 = 1.0 - beta2.powi(step as i32);
                    for (i, (p, g)) in net.params_mut().into_iter().zip(&grad).enumerate() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                        *p -= cfg.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                    }
                }
            }
        }
        final_loss = epoch_loss / n_batches as f64;
    }
    Ok((net, final_loss))
}

/// Compare the analytic gradient against central finite differences
/// (step 1e-5) on every parameter; returns the max relative error.
pub fn grad_check(net: &MlpNet, xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InvalidParameter("batch must be non-empty".into()));
    }
    let (_, analytic) = loss_and_grad(net, xs, ys)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for (i, &ga) in analytic.iter().enumerate() {
        let orig = *probe.params_mut()[i];
        *probe.params_mut()[i] = orig + h;
        let (lp, _) = loss_and_grad(&probe, xs, ys)?;
        let pat_plus = probe.relu_pattern(xs)?;
        *probe.params_mut()[i] = orig - h;
        let (lm, _) = loss_and_grad(&probe, xs, ys)?;
        let pat_minus = probe.relu_pattern(xs)?;
        *probe.params_mut()[i] = orig;
        // the two-sided difference straddles a ReLU kink: skip the probe
        if pat_plus != pat_minus {
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        if ga.abs() < 1e-7 && numeric.abs() < 1e-7 {
            continue;
        }
        let rel = (ga - numeric).abs() / ga.abs().max(numeric.abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}
