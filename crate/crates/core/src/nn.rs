//! Fully connected networks with rectified-linear hidden layers, exact
//! batched backpropagation, Adam and Polyak target tracking.
//!
//! Parameters of all layers live in one flat vector. Layer `l` stores its
//! weight matrix row-major with shape `(n_in, n_out)` followed by its
//! `n_out` biases, so a batch of row-major inputs `X` maps to `X W + b`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Tanh,
}

impl fmt::Display for OutputActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputActivation::Identity => "identity",
            OutputActivation::Tanh => "tanh",
        })
    }
}

impl FromStr for OutputActivation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(OutputActivation::Identity),
            "tanh" => Ok(OutputActivation::Tanh),
            _ => Err(Error::Parse(format!("unknown output activation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    sizes: Vec<usize>,
    output: OutputActivation,
    params: Vec<f64>,
}

/// Per-layer activations of the last batched forward pass plus scratch
/// space for backpropagation. Reused across calls to avoid allocation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    batch: usize,
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl ForwardCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Gradients of a scalar objective with respect to parameters and input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

/// `c = alpha * a(m x k) b(k x n) + beta * c`, all strided views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: every caller passes slices sized for the given shapes and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

impl MlpNet {
    /// Network with every parameter set to zero.
    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Architecture(format!("invalid layer sizes {sizes:?}")));
        }
        let count = sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        Ok(MlpNet {
            sizes: sizes.to_vec(),
            output,
            params: vec![0.0; count],
        })
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)` per layer.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            for p in &mut net.params[offset..offset + (n_in + 1) * n_out] {
                *p = rng.random_range(-bound..=bound);
            }
            offset += (n_in + 1) * n_out;
        }
        Ok(net)
    }

    pub fn from_parts(sizes: &[usize], output: OutputActivation, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        if params.len() != net.params.len() {
            return Err(Error::Dimension {
                expected: net.params.len(),
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Architecture("non-finite parameter".into()));
        }
        net.params = params;
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

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of layer `l`'s weights within the flat parameter vector.
    fn layer_offset(&self, layer: usize) -> usize {
        self.sizes[..=layer]
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// Mutable views of layer `l`'s weights and biases.
    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let off = self.layer_offset(layer);
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let (w, rest) = self.params[off..].split_at_mut(n_in * n_out);
        (w, &mut rest[..n_out])
    }

    pub fn same_architecture(&self, other: &MlpNet) -> bool {
        self.sizes == other.sizes && self.output == other.output
    }

    /// Forward pass over `batch` row-major input rows. The output is left in
    /// `cache.output()`.
    pub fn forward_batch<'c>(&self, input: &[f64], batch: usize, cache: &'c mut ForwardCache) -> Result<&'c [f64]> {
        let n0 = self.input_dim();
        if input.len() != n0 * batch {
            return Err(Error::Dimension {
                expected: n0 * batch,
                actual: input.len(),
            });
        }
        let layers = self.num_layers();
        cache.batch = batch;
        cache.acts.resize_with(layers + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(input);

        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + (n_in + 1) * n_out];
            off += (n_in + 1) * n_out;

            let (prev, next) = cache.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let y = &mut next[0];
            y.resize(batch * n_out, 0.0);
            for row in y.chunks_exact_mut(n_out) {
                row.copy_from_slice(b);
            }
            gemm(
                batch, n_in, n_out, 1.0, x, n_in as isize, 1, w, n_out as isize, 1, 1.0, y,
                n_out as isize, 1,
            );
            if l + 1 < layers {
                for v in y.iter_mut() {
                    *v = v.max(0.0);
                }
            } else if self.output == OutputActivation::Tanh {
                for v in y.iter_mut() {
                    *v = v.tanh();
                }
            }
        }
        Ok(cache.output())
    }

    /// Backpropagates `out_grad` (d objective / d output, one row per sample)
    /// through the activations stored by the last `forward_batch` call.
    /// Parameter gradients summed over the batch are written to `param_grads`;
    /// the input gradient, if requested, to `input_grad`.
    pub fn backward_batch(
        &self,
        cache: &mut ForwardCache,
        out_grad: &[f64],
        param_grads: &mut [f64],
        input_grad: Option<&mut Vec<f64>>,
    ) -> Result<()> {
        let batch = cache.batch;
        let layers = self.num_layers();
        let n_last = self.output_dim();
        if cache.acts.len() != layers + 1 || cache.acts[0].len() != batch * self.input_dim() {
            return Err(Error::Architecture("forward cache does not belong to this network".into()));
        }
        if out_grad.len() != batch * n_last {
            return Err(Error::Dimension {
                expected: batch * n_last,
                actual: out_grad.len(),
            });
        }
        if param_grads.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                actual: param_grads.len(),
            });
        }

        let ForwardCache {
            acts,
            delta,
            delta_prev,
            ..
        } = cache;
        delta.clear();
        delta.extend_from_slice(out_grad);
        if self.output == OutputActivation::Tanh {
            for (d, y) in delta.iter_mut().zip(&acts[layers]) {
                *d *= 1.0 - y * y;
            }
        }

        let want_input = input_grad.is_some();
        let mut off = self.params.len();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            off -= (n_in + 1) * n_out;
            let x = &acts[l];
            let (gw, gb) = param_grads[off..off + (n_in + 1) * n_out].split_at_mut(n_in * n_out);

            // dW = X^T delta
            gemm(
                n_in, batch, n_out, 1.0, x, 1, n_in as isize, delta, n_out as isize, 1, 0.0, gw,
                n_out as isize, 1,
            );
            gb.fill(0.0);
            for row in delta.chunks_exact(n_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }

            if l == 0 && !want_input {
                break;
            }
            // delta_prev = delta W^T
            let w = &self.params[off..off + n_in * n_out];
            delta_prev.resize(batch * n_in, 0.0);
            gemm(
                batch, n_out, n_in, 1.0, delta, n_out as isize, 1, w, 1, n_out as isize, 0.0,
                delta_prev, n_in as isize, 1,
            );
            if l > 0 {
                for (d, a) in delta_prev.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            std::mem::swap(delta, delta_prev);
        }
        if let Some(out) = input_grad {
            out.clear();
            out.extend_from_slice(delta);
        }
        Ok(())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::new();
        Ok(self.forward_batch(input, 1, &mut cache)?.to_vec())
    }

    /// Gradients of `output . output_gradient` at `input`.
    pub fn backward(&self, input: &[f64], output_gradient: &[f64]) -> Result<Gradients> {
        if output_gradient.len() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                actual: output_gradient.len(),
            });
        }
        let mut cache = ForwardCache::new();
        self.forward_batch(input, 1, &mut cache)?;
        let mut params = vec![0.0; self.params.len()];
        let mut input_grad = Vec::new();
        self.backward_batch(&mut cache, output_gradient, &mut params, Some(&mut input_grad))?;
        Ok(Gradients {
            params,
            input: input_grad,
        })
    }

    /// `self <- tau * source + (1 - tau) * self`, parameterwise.
    pub fn soft_update(&mut self, source: &MlpNet, tau: f64) -> Result<()> {
        if !self.same_architecture(source) {
            return Err(Error::Architecture(format!(
                "soft update from {:?} into {:?}",
                source.sizes, self.sizes
            )));
        }
        if tau == 1.0 {
            self.params.copy_from_slice(&source.params);
            return Ok(());
        }
        for (t, s) in self.params.iter_mut().zip(&source.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
        Ok(())
    }

    /// Plain-text checkpoint: a header line, the layer sizes, then one line
    /// of parameters per layer in shortest round-trip notation.
    pub fn write_checkpoint<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "mlp v1 {}", self.output)?;
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        writeln!(out, "sizes {}", sizes.join(" "))?;
        let mut off = 0;
        for w in self.sizes.windows(2) {
            let n = (w[0] + 1) * w[1];
            let line: Vec<String> = self.params[off..off + n].iter().map(|p| format!("{p:?}")).collect();
            writeln!(out, "{}", line.join(" "))?;
            off += n;
        }
        Ok(())
    }

    /// Reads a network written by [`MlpNet::write_checkpoint`] from a line iterator.
    pub fn read_checkpoint<'a, I: Iterator<Item = &'a str>>(lines: &mut I) -> Result<MlpNet> {
        let bad = |m: String| Error::Checkpoint(m);
        let header = lines.next().ok_or_else(|| bad("missing network header".into()))?;
        let mut head = header.split_whitespace();
        if head.next() != Some("mlp") || head.next() != Some("v1") {
            return Err(bad(format!("unsupported network header `{header}`")));
        }
        let output: OutputActivation = head
            .next()
            .ok_or_else(|| bad("missing output activation".into()))?
            .parse()?;
        let sizes_line = lines.next().ok_or_else(|| bad("missing sizes".into()))?;
        let mut it = sizes_line.split_whitespace();
        if it.next() != Some("sizes") {
            return Err(bad(format!("expected sizes line, got `{sizes_line}`")));
        }
        let sizes = it
            .map(|s| s.parse::<usize>().map_err(|e| bad(format!("layer size `{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let line = lines.next().ok_or_else(|| bad("truncated parameters".into()))?;
            let before = params.len();
            for tok in line.split_whitespace() {
                params.push(tok.parse::<f64>().map_err(|e| bad(format!("parameter `{tok}`: {e}")))?);
            }
            if params.len() - before != (w[0] + 1) * w[1] {
                return Err(bad(format!(
                    "layer {}x{} expects {} parameters, found {}",
                    w[0],
                    w[1],
                    (w[0] + 1) * w[1],
                    params.len() - before
                )));
            }
        }
        MlpNet::from_parts(&sizes, output, params)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Descends along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension {
                expected: self.m.len(),
                actual: if params.len() != self.m.len() { params.len() } else { grads.len() },
            });
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.learning_rate;
        let eps = self.epsilon;
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
