//! Dense feed-forward networks with hand-written reverse-mode gradients and RMSprop.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// `y = f(W x + b)` with `W` stored row-major as `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
            activation,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim, activation);
        for w in &mut layer.weights {
            *w = rng.random_range(-limit..=limit);
        }
        layer
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let s: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.biases[o];
            out.push(self.activation.apply(s));
        }
    }
}

/// Output post-processing applied to a contiguous slice of the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Head {
    Linear { start: usize, width: usize },
    Softmax { start: usize, width: usize },
}

impl Head {
    pub fn range(&self) -> std::ops::Range<usize> {
        match *self {
            Head::Linear { start, width } | Head::Softmax { start, width } => start..start + width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub heads: Vec<Head>,
}

/// Per-layer inputs and outputs recorded by [`Mlp::forward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// `inputs[l]` is the input of layer `l`.
    pub inputs: Vec<Vec<f64>>,
    /// Post-activation output of the last layer, before heads.
    pub last: Vec<f64>,
    /// Network output after heads.
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|g| *g *= factor);
        }
    }

    pub fn fill_zero(&mut self) {
        self.scale(0.0);
    }

    /// Flat views in the same order as [`Mlp::param_blocks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
            .collect()
    }
}

impl Mlp {
    /// `input → hidden (tanh) … → output (linear)` followed by `heads`.
    pub fn new(input: usize, hidden: &[usize], heads: Vec<Head>, rng: &mut Rng) -> Result<Self> {
        let output = heads_width(&heads)?;
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let act = if l + 1 == n { Activation::Linear } else { Activation::Tanh };
                DenseLayer::glorot(dims[l], dims[l + 1], act, rng)
            })
            .collect();
        let mlp = Mlp { layers, heads };
        mlp.validate()?;
        Ok(mlp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::SchemaMismatch("network has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.in_dim * l.out_dim || l.biases.len() != l.out_dim {
                return Err(Error::SchemaMismatch(format!("layer {i} parameter shapes")));
            }
            if i > 0 && self.layers[i - 1].out_dim != l.in_dim {
                return Err(Error::SchemaMismatch(format!("layer {i} input width")));
            }
            if l.weights.iter().chain(&l.biases).any(|p| !p.is_finite()) {
                return Err(Error::Divergence(format!("layer {i} has non-finite parameters")));
            }
        }
        if heads_width(&self.heads)? != self.output_dim() {
            return Err(Error::SchemaMismatch("heads do not partition the output".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
            .collect()
    }

    pub fn param_blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
            .collect()
    }

    pub fn block_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|l| [format!("{prefix}layer{l}.weights"), format!("{prefix}layer{l}.biases")])
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache)?;
        Ok((cache.output.clone(), cache))
    }

    /// Forward pass reusing the buffers in `cache`.
    pub fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::SchemaMismatch(format!(
                "input has width {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericInput("network input contains NaN or infinity".into()));
        }
        cache.inputs.resize_with(self.layers.len(), Vec::new);
        cache.inputs[0].clear();
        cache.inputs[0].extend_from_slice(x);
        for l in 0..self.layers.len() {
            let (before, after) = cache.inputs.split_at_mut(l + 1);
            let out = if l + 1 < self.layers.len() {
                &mut after[0]
            } else {
                &mut cache.last
            };
            self.layers[l].forward_into(&before[l], out);
        }
        cache.output.clear();
        cache.output.extend_from_slice(&cache.last);
        for head in &self.heads {
            if let Head::Softmax { .. } = head {
                softmax_in_place(&mut cache.output[head.range()]);
            }
        }
        Ok(())
    }

    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        let mut grads = MlpGrads::zeros_like(self);
        let gx = self.backward_accumulate(cache, grad_output, &mut grads)?;
        Ok((grads, gx))
    }

    /// Adds the parameter gradients for one example to `grads` and returns the
    /// gradient with respect to the network input. `grad_output` is taken with
    /// respect to the head outputs.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
        grads: &mut MlpGrads,
    ) -> Result<Vec<f64>> {
        let stale = cache.inputs.len() != self.layers.len()
            || cache.output.len() != self.output_dim()
            || cache.last.len() != self.output_dim()
            || self.layers.iter().zip(&cache.inputs).any(|(l, x)| l.in_dim != x.len());
        if stale {
            return Err(Error::StaleCache("cache was not produced by this network".into()));
        }
        if grad_output.len() != self.output_dim() {
            return Err(Error::SchemaMismatch("output gradient width".into()));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::StaleCache("gradient buffer shape".into()));
        }
        // through the heads
        let mut g = grad_output.to_vec();
        for head in &self.heads {
            if let Head::Softmax { .. } = head {
                let r = head.range();
                let p = &cache.output[r.clone()];
                let dot: f64 = p.iter().zip(&grad_output[r.clone()]).map(|(a, b)| a * b).sum();
                for (k, gk) in g[r.clone()].iter_mut().enumerate() {
                    *gk = p[k] * (grad_output[r.start + k] - dot);
                }
            }
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let out = if l + 1 < self.layers.len() {
                &cache.inputs[l + 1]
            } else {
                &cache.last
            };
            let delta: Vec<f64> = g
                .iter()
                .zip(out)
                .map(|(gi, yi)| gi * layer.activation.derivative_from_output(*yi))
                .collect();
            let input = &cache.inputs[l];
            let lg = &mut grads.layers[l];
            let mut g_in = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                lg.biases[o] += d;
                if d == 0.0 {
                    continue;
                }
                let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                let grow = &mut lg.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for i in 0..layer.in_dim {
                    grow[i] += d * input[i];
                    g_in[i] += d * wrow[i];
                }
            }
            g = g_in;
        }
        Ok(g)
    }
}

fn heads_width(heads: &[Head]) -> Result<usize> {
    let mut next = 0;
    for h in heads {
        let r = h.range();
        if r.start != next || r.is_empty() {
            return Err(Error::SchemaMismatch("heads must be contiguous and non-empty".into()));
        }
        next = r.end;
    }
    Ok(next)
}

/// Softmax with max-logit subtraction.
pub fn softmax_in_place(xs: &mut [f64]) {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// RMSprop: `acc ← ρ acc + (1 − ρ) g²`, `p ← p − lr g / √(acc + ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmspropState {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub accumulators: Vec<Vec<f64>>,
}

impl RmspropState {
    pub fn new(learning_rate: f64, rho: f64) -> Self {
        RmspropState {
            learning_rate,
            rho,
            epsilon: 1e-8,
            accumulators: Vec::new(),
        }
    }

    /// One update over matching parameter and gradient blocks. Nothing is modified
    /// when a gradient is non-finite.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]], names: &[String]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::SchemaMismatch("parameter and gradient block counts differ".into()));
        }
        for (b, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::SchemaMismatch(format!("block {b} shape mismatch")));
            }
            if g.iter().any(|x| !x.is_finite()) {
                let name = names.get(b).cloned().unwrap_or_else(|| format!("block {b}"));
                return Err(Error::Divergence(format!("non-finite gradient in {name}")));
            }
        }
        if self.accumulators.is_empty() {
            self.accumulators = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        } else if self.accumulators.len() != grads.len()
            || self.accumulators.iter().zip(grads).any(|(a, g)| a.len() != g.len())
        {
            return Err(Error::SchemaMismatch("optimizer state does not match parameters".into()));
        }
        let (lr, rho, eps) = (self.learning_rate, self.rho, self.epsilon);
        for ((p, g), acc) in params.into_iter().zip(grads).zip(&mut self.accumulators) {
            for i in 0..p.len() {
                acc[i] = rho * acc[i] + (1.0 - rho) * g[i] * g[i];
                p[i] -= lr * g[i] / (acc[i] + eps).sqrt();
            }
        }
        Ok(())
    }
}
