//! Small fully-connected network with analytic backpropagation, an Adam
//! optimizer and a plain-text checkpoint format. Hidden layers use ReLU;
//! the output layer is affine.

use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("layer sizes {found:?} do not match expected {expected:?}")]
    SizeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

/// Dense multilayer perceptron. `weights[l]` is `sizes[l+1] x sizes[l]`
/// row-major; `biases[l]` has length `sizes[l+1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Per-parameter gradient buffers shaped like an `Mlp`.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Post-activation values kept from a forward pass for backpropagation.
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[l]` for `l >= 1` is the
    /// layer output after ReLU (or the raw output for the last layer).
    activations: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-style initialization: weights ~ N(0, 2 / fan_in), biases zero.
    pub fn new(sizes: &[usize], rng: &mut ChaCha12Rng) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..sizes.len() - 1 {
            let fan_in = sizes[l];
            let dist =
                Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid He std deviation");
            weights.push(
                (0..sizes[l + 1] * fan_in)
                    .map(|_| dist.sample(rng))
                    .collect(),
            );
            biases.push(vec![0.0; sizes[l + 1]]);
        }
        Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let weights = (0..sizes.len() - 1)
            .map(|l| vec![0.0; sizes[l + 1] * sizes[l]])
            .collect();
        let biases = (0..sizes.len() - 1).map(|l| vec![0.0; sizes[l + 1]]).collect();
        Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached(input).0
    }

    pub fn forward_cached(&self, input: &[f64]) -> (Vec<f64>, ForwardCache) {
        assert_eq!(input.len(), self.input_dim(), "input dimension mismatch");
        let layers = self.weights.len();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(input.to_vec());
        for l in 0..layers {
            let n_in = self.sizes[l];
            let prev = &activations[l];
            let w = &self.weights[l];
            let mut out = self.biases[l].clone();
            for (i, out_i) in out.iter_mut().enumerate() {
                let row = &w[i * n_in..(i + 1) * n_in];
                let mut acc = 0.0;
                for (wij, xj) in row.iter().zip(prev) {
                    acc += wij * xj;
                }
                *out_i += acc;
                if l + 1 < layers && *out_i < 0.0 {
                    *out_i = 0.0;
                }
            }
            activations.push(out);
        }
        let output = activations.last().unwrap().clone();
        (output, ForwardCache { activations })
    }

    /// Exact gradients of a scalar loss given `dL/d(output)`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Gradients {
        let layers = self.weights.len();
        assert_eq!(output_grad.len(), self.output_dim());
        let mut grads = Gradients::zeros_like(self);
        let mut delta = output_grad.to_vec();
        for l in (0..layers).rev() {
            let n_out = self.sizes[l + 1];
            let n_in = self.sizes[l];
            let prev = &cache.activations[l];
            for i in 0..n_out {
                let d = delta[i];
                grads.biases[l][i] += d;
                let row = &mut grads.weights[l][i * n_in..(i + 1) * n_in];
                for (g, xj) in row.iter_mut().zip(prev) {
                    *g += d * xj;
                }
            }
            if l > 0 {
                let mut prev_delta = vec![0.0; n_in];
                let w = &self.weights[l];
                for (i, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w[i * n_in..(i + 1) * n_in];
                    for (pd, wij) in prev_delta.iter_mut().zip(row) {
                        *pd += d * wij;
                    }
                }
                // ReLU gate: units that were clamped pass no gradient
                for (pd, &a) in prev_delta.iter_mut().zip(&cache.activations[l]) {
                    if a <= 0.0 {
                        *pd = 0.0;
                    }
                }
                delta = prev_delta;
            }
        }
        grads
    }

    /// Versioned plain-text checkpoint: header, layer sizes, then one
    /// decimal value per line (weights row-major, then biases, per layer).
    pub fn write_text(&self) -> String {
        let mut out = String::from("agmec-mlp 1\n");
        out.push_str(
            &self
                .sizes
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        );
        out.push('\n');
        for l in 0..self.weights.len() {
            for v in self.weights[l].iter().chain(self.biases[l].iter()) {
                out.push_str(&format!("{v}\n"));
            }
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self, CheckpointError> {
        let malformed = |line: usize, msg: &str| CheckpointError::Malformed {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| malformed(1, "empty checkpoint"))?;
        if header.trim() != "agmec-mlp 1" {
            return Err(malformed(1, "unrecognized header"));
        }
        let (_, sizes_line) = lines
            .next()
            .ok_or_else(|| malformed(2, "missing layer sizes"))?;
        let sizes: Vec<usize> = sizes_line
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| malformed(2, &format!("bad layer size `{t}`")))
            })
            .collect::<Result<_, _>>()?;
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(malformed(2, "need at least two positive layer sizes"));
        }
        let mut net = Mlp::zeros(&sizes);
        let mut values = lines;
        let mut read_value = |slot: &mut f64| -> Result<(), CheckpointError> {
            let (i, line) = values
                .next()
                .ok_or_else(|| malformed(usize::MAX, "truncated checkpoint"))?;
            *slot = line
                .trim()
                .parse()
                .map_err(|_| malformed(i + 1, &format!("bad value `{}`", line.trim())))?;
            Ok(())
        };
        for l in 0..sizes.len() - 1 {
            for i in 0..net.weights[l].len() {
                read_value(&mut net.weights[l][i]).map_err(|e| match e {
                    CheckpointError::Malformed { line, msg } if line == usize::MAX => {
                        malformed(text.lines().count() + 1, &msg)
                    }
                    other => other,
                })?;
            }
            for i in 0..net.biases[l].len() {
                read_value(&mut net.biases[l][i]).map_err(|e| match e {
                    CheckpointError::Malformed { line, msg } if line == usize::MAX => {
                        malformed(text.lines().count() + 1, &msg)
                    }
                    other => other,
                })?;
            }
        }
        Ok(net)
    }

    /// Parse and verify the layer sizes against the caller's expectation.
    pub fn parse_text_expecting(
        text: &str,
        expected: &[usize],
    ) -> Result<Self, CheckpointError> {
        let net = Self::parse_text(text)?;
        if net.sizes != expected {
            return Err(CheckpointError::SizeMismatch {
                expected: expected.to_vec(),
                found: net.sizes,
            });
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.write_text()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path, expected: &[usize]) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_text_expecting(&text, expected)
    }
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn with_defaults(net: &Mlp) -> Self {
        Self::new(net, 1e-3, 0.9, 0.999, 1e-8)
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        };
        for l in 0..net.weights.len() {
            update(
                &mut net.weights[l],
                &grads.weights[l],
                &mut self.m.weights[l],
                &mut self.v.weights[l],
            );
            update(
                &mut net.biases[l],
                &grads.biases[l],
                &mut self.m.biases[l],
                &mut self.v.biases[l],
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = Mlp::new(&[4, 32, 32, 8], &mut stream(5, "nn", 0));
        let b = Mlp::new(&[4, 32, 32, 8], &mut stream(5, "nn", 0));
        assert_eq!(a, b);
        assert!(a.biases.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn init_variance_tracks_fan_in() {
        let net = Mlp::new(&[32, 320], &mut stream(6, "nn", 1));
        let w = &net.weights[0];
        let mean: f64 = w.iter().sum::<f64>() / w.len() as f64;
        let var: f64 = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let target = 2.0 / 32.0;
        assert!(
            (var - target).abs() < 0.2 * target,
            "variance {var} target {target}"
        );
    }

    #[test]
    fn forward_zero_weights_yields_bias() {
        let mut net = Mlp::zeros(&[3, 4, 2]);
        net.biases[1] = vec![0.5, -1.5];
        assert_eq!(net.forward(&[1.0, 2.0, 3.0]), vec![0.5, -1.5]);
    }

    #[test]
    fn forward_hand_computed() {
        // 1-1-1 chain: x -> relu(2x + 1) -> 3h - 4
        let mut net = Mlp::zeros(&[1, 1, 1]);
        net.weights[0] = vec![2.0];
        net.biases[0] = vec![1.0];
        net.weights[1] = vec![3.0];
        net.biases[1] = vec![-4.0];
        assert_eq!(net.forward(&[2.0]), vec![11.0]);
        // negative pre-activation is clamped and contributes nothing
        assert_eq!(net.forward(&[-2.0]), vec![-4.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = stream(12, "nn-fd", 0);
        for case in 0..100 {
            let sizes = [
                2 + (case % 4),
                3 + (case % 5),
                2 + (case % 3),
            ];
            let mut net = Mlp::new(&sizes, &mut rng);
            let input: Vec<f64> = (0..sizes[0]).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let coeff: Vec<f64> = (0..sizes[2]).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let loss = |net: &Mlp| -> f64 {
                net.forward(&input)
                    .iter()
                    .zip(&coeff)
                    .map(|(o, c)| o * c)
                    .sum()
            };
            let (_, cache) = net.forward_cached(&input);
            let grads = net.backward(&cache, &coeff);
            let h = 1e-5;
            let mut max_rel: f64 = 0.0;
            for l in 0..net.weights.len() {
                for i in 0..net.weights[l].len() {
                    let orig = net.weights[l][i];
                    net.weights[l][i] = orig + h;
                    let up = loss(&net);
                    net.weights[l][i] = orig - h;
                    let dn = loss(&net);
                    net.weights[l][i] = orig;
                    let fd = (up - dn) / (2.0 * h);
                    let g = grads.weights[l][i];
                    let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
                    max_rel = max_rel.max(rel);
                }
            }
            assert!(max_rel < 1e-4, "case {case}: max rel err {max_rel}");
        }
    }

    #[test]
    fn zero_output_grad_means_zero_param_grad() {
        let net = Mlp::new(&[3, 5, 2], &mut stream(3, "nn", 2));
        let (_, cache) = net.forward_cached(&[0.3, -0.2, 0.9]);
        let grads = net.backward(&cache, &[0.0, 0.0]);
        assert!(grads.weights.iter().flatten().all(|&g| g == 0.0));
        assert!(grads.biases.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn dead_relu_unit_gets_no_gradient() {
        let mut net = Mlp::zeros(&[1, 1, 1]);
        net.weights[0] = vec![1.0];
        net.biases[0] = vec![-5.0]; // dead for positive small inputs
        net.weights[1] = vec![2.0];
        let (_, cache) = net.forward_cached(&[1.0]);
        let grads = net.backward(&cache, &[1.0]);
        assert_eq!(grads.weights[0][0], 0.0);
        assert_eq!(grads.biases[0][0], 0.0);
        // downstream weight sees activation 0, so its gradient is 0 too
        assert_eq!(grads.weights[1][0], 0.0);
        assert_eq!(grads.biases[1][0], 1.0);
    }

    #[test]
    fn adam_single_step_hand_value() {
        let mut net = Mlp::zeros(&[1, 1]);
        let mut opt = Adam::with_defaults(&net);
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0][0] = 1.0;
        opt.step(&mut net, &grads);
        let expected = -1e-3 * (1.0 / (1.0 + 1e-8));
        assert!((net.weights[0][0] - expected).abs() < 1e-12);
    }

    #[test]
    fn adam_ignores_zero_gradients() {
        let mut net = Mlp::new(&[2, 3, 1], &mut stream(8, "nn", 3));
        let before = net.clone();
        let mut opt = Adam::with_defaults(&net);
        let grads = Gradients::zeros_like(&net);
        for _ in 0..10 {
            opt.step(&mut net, &grads);
        }
        assert_eq!(net, before);
    }

    #[test]
    fn adam_trajectories_are_deterministic() {
        let run = || {
            let mut net = Mlp::new(&[2, 4, 1], &mut stream(4, "nn", 4));
            let mut opt = Adam::with_defaults(&net);
            for i in 0..50 {
                let x = [f64::from(i % 7) / 7.0, 0.5];
                let (out, cache) = net.forward_cached(&x);
                let grads = net.backward(&cache, &[2.0 * (out[0] - 1.0)]);
                opt.step(&mut net, &grads);
            }
            net
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sanity_convergence_on_linear_target() {
        // one hidden unit learning y = 2x over x in [0, 1]; the seed gives
        // the unit a live (positive-weight) initialization
        let mut net = Mlp::new(&[1, 1, 1], &mut stream(2, "nn", 5));
        let mut opt = Adam::with_defaults(&net);
        let xs: Vec<f64> = (0..16).map(|i| f64::from(i) / 15.0).collect();
        let mut mse = f64::INFINITY;
        for _ in 0..5000 {
            let mut grads = Gradients::zeros_like(&net);
            mse = 0.0;
            for &x in &xs {
                let (out, cache) = net.forward_cached(&[x]);
                let err = out[0] - 2.0 * x;
                mse += err * err / xs.len() as f64;
                let g = net.backward(&cache, &[2.0 * err / xs.len() as f64]);
                grads.accumulate(&g);
            }
            opt.step(&mut net, &grads);
            if mse < 1e-4 {
                break;
            }
        }
        assert!(mse < 1e-4, "mse {mse}");
    }

    #[test]
    fn checkpoint_errors() {
        assert!(Mlp::parse_text("wrong header\n1 2\n").is_err());
        let net = Mlp::new(&[2, 3, 1], &mut stream(9, "nn", 6));
        let text = net.write_text();
        // header mismatch against expected sizes
        match Mlp::parse_text_expecting(&text, &[2, 4, 1]) {
            Err(CheckpointError::SizeMismatch { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        // truncation is an error, not a silent zero fill
        let cut: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(Mlp::parse_text(&cut).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn checkpoint_round_trip_is_value_exact(seed in 0u64..1000) {
            let net = Mlp::new(&[3, 8, 4], &mut stream(seed, "nn-rt", 0));
            let restored = Mlp::parse_text(&net.write_text()).unwrap();
            prop_assert_eq!(net, restored);
        }
    }
}
