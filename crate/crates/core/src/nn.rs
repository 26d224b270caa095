//! Small fully connected network with hand-written reverse-mode gradients.
//!
//! Hidden layers use ReLU, the output layer is linear. Weights are stored
//! row-major as `outputs × inputs`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "ecoedgetwin-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            biases: vec![T::zero(); outputs],
        }
    }

    /// Uniform ±sqrt(6/(fan_in + fan_out)), zero biases.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| T::lit(rng.random_range(-limit..=limit)))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            biases: vec![T::zero(); outputs],
        }
    }

    fn affine(&self, x: &[T]) -> Vec<T> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                row.iter().zip(x).fold(self.biases[o], |acc, (&w, &v)| acc + w * v)
            })
            .collect()
    }
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T> {
    pub input: Vec<T>,
    /// Pre-activation of every layer.
    pub pre: Vec<Vec<T>>,
    /// Output of every layer after its activation.
    pub post: Vec<Vec<T>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.input)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

/// Partial derivatives for every parameter, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T> {
    pub layers: Vec<LayerGrad<T>>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![T::zero(); l.weights.len()],
                    biases: vec![T::zero(); l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }

    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
    }

    pub fn scaled(mut self, k: T) -> Self {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|g| *g = *g * k);
        }
        self
    }

    pub fn add(mut self, other: &GradientSet<T>) -> Result<Self> {
        if !self.congruent(other) {
            return Err(Error::Shape("gradient sets differ in shape".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, &y)| *x = *x + y);
            a.biases.iter_mut().zip(&b.biases).for_each(|(x, &y)| *x = *x + y);
        }
        Ok(self)
    }

    fn congruent(&self, other: &GradientSet<T>) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.len() == b.weights.len() && a.biases.len() == b.biases.len()
            })
    }

    fn matches(&self, net: &Network<T>) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len()
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascent,
    Descent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network<T> {
    pub layers: Vec<Dense<T>>,
    #[serde(skip)]
    cache: Option<Trace<T>>,
}

impl<T: Scalar> Network<T> {
    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid layer dims {dims:?}")));
        }
        Ok(())
    }

    /// Glorot-uniform initialization.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_dims(dims)?;
        Ok(Self::from_layers(
            dims.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect(),
        ))
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::check_dims(dims)?;
        Ok(Self::from_layers(
            dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        ))
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Self {
        Self {
            layers,
            cache: None,
        }
    }

    /// (input, hidden..., output)
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_width()];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    pub fn params(&self) -> impl Iterator<Item = T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.cache = None;
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    /// Runs the network and records every activation.
    pub fn trace(&self, x: &[T]) -> Result<Trace<T>> {
        if x.len() != self.input_width() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_width()
            )));
        }
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let input = if k == 0 { x } else { &post[k - 1] };
            let z = layer.affine(input);
            let a = if k == last {
                z.clone()
            } else {
                z.iter().map(|&v| v.max(T::zero())).collect()
            };
            pre.push(z);
            post.push(a);
        }
        Ok(Trace {
            input: x.to_vec(),
            pre,
            post,
        })
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.trace(x)?.post.pop().unwrap_or_default())
    }

    /// Forward pass that keeps its trace for a later [`Network::backward`].
    pub fn forward_cached(&mut self, x: &[T]) -> Result<Vec<T>> {
        let trace = self.trace(x)?;
        let out = trace.output().to_vec();
        self.cache = Some(trace);
        Ok(out)
    }

    /// Gradients of ⟨upstream, forward(x)⟩ using the cached forward pass.
    pub fn backward(&self, x: &[T], upstream: &[T]) -> Result<GradientSet<T>> {
        let trace = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Lifecycle("backward called without a cached forward pass".into()))?;
        if trace.input.as_slice() != x {
            return Err(Error::Lifecycle(
                "backward input differs from the cached forward input".into(),
            ));
        }
        self.backward_trace(trace, upstream)
    }

    pub fn backward_trace(&self, trace: &Trace<T>, upstream: &[T]) -> Result<GradientSet<T>> {
        if upstream.len() != self.output_width() {
            return Err(Error::Shape(format!(
                "upstream has {} entries, network outputs {}",
                upstream.len(),
                self.output_width()
            )));
        }
        if trace.pre.len() != self.layers.len() {
            return Err(Error::Shape("trace does not belong to this network".into()));
        }
        let mut grads = GradientSet::zeros_like(self);
        let mut delta: Vec<T> = upstream.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if k != self.layers.len() - 1 {
                for (d, &z) in delta.iter_mut().zip(&trace.pre[k]) {
                    if z <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            let input = if k == 0 { &trace.input } else { &trace.post[k - 1] };
            let g = &mut grads.layers[k];
            for o in 0..layer.outputs {
                let d = delta[o];
                g.biases[o] = d;
                if d != T::zero() {
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(w, &v)| *w = d * v);
                }
            }
            if k > 0 {
                let mut next = vec![T::zero(); layer.inputs];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == T::zero() {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    next.iter_mut().zip(row).for_each(|(n, &w)| *n = *n + d * w);
                }
                delta = next;
            }
        }
        Ok(grads)
    }

    /// θ ± rate·grad in place. Refuses nonfinite gradients.
    pub fn apply_update_mut(&mut self, grads: &GradientSet<T>, rate: T, direction: Direction) -> Result<()> {
        if !(rate > T::zero()) {
            return Err(Error::Numeric(format!("learning rate must be > 0, got {rate}")));
        }
        if !grads.matches(self) {
            return Err(Error::Shape("gradient set does not match network".into()));
        }
        if !grads.is_finite() {
            return Err(Error::Numeric("nonfinite gradient, update refused".into()));
        }
        let step = match direction {
            Direction::Ascent => rate,
            Direction::Descent => -rate,
        };
        self.cache = None;
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.weights.iter_mut().zip(&g.weights).for_each(|(p, &d)| *p = *p + step * d);
            l.biases.iter_mut().zip(&g.biases).for_each(|(p, &d)| *p = *p + step * d);
        }
        Ok(())
    }

    /// Pure form of [`Network::apply_update_mut`].
    pub fn apply_update(&self, grads: &GradientSet<T>, rate: T, direction: Direction) -> Result<Self> {
        let mut next = self.clone();
        next.apply_update_mut(grads, rate, direction)?;
        Ok(next)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            layer_dims: self.layer_dims(),
            params: self
                .layers
                .iter()
                .flat_map(|l| {
                    [
                        l.weights.iter().map(|v| v.as_f64()).collect(),
                        l.biases.iter().map(|v| v.as_f64()).collect(),
                    ]
                })
                .collect(),
        }
    }

    /// Rebuilds a network from a checkpoint, which must have `expected_dims`.
    pub fn from_checkpoint(ck: &Checkpoint, expected_dims: Option<&[usize]>) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Shape(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if let Some(dims) = expected_dims {
            if dims != ck.layer_dims.as_slice() {
                return Err(Error::Shape(format!(
                    "checkpoint dims {:?}, expected {:?}",
                    ck.layer_dims, dims
                )));
            }
        }
        Self::check_dims(&ck.layer_dims)?;
        let n = ck.layer_dims.len() - 1;
        if ck.params.len() != 2 * n {
            return Err(Error::Shape(format!(
                "checkpoint has {} arrays, expected {}",
                ck.params.len(),
                2 * n
            )));
        }
        let mut layers = Vec::with_capacity(n);
        for k in 0..n {
            let (i, o) = (ck.layer_dims[k], ck.layer_dims[k + 1]);
            let (w, b) = (&ck.params[2 * k], &ck.params[2 * k + 1]);
            if w.len() != i * o || b.len() != o {
                return Err(Error::Shape(format!("layer {k} parameter count mismatch")));
            }
            layers.push(Dense {
                inputs: i,
                outputs: o,
                weights: w.iter().map(|&v| T::lit(v)).collect(),
                biases: b.iter().map(|&v| T::lit(v)).collect(),
            });
        }
        Ok(Self::from_layers(layers))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, expected_dims: Option<&[usize]>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        Self::from_checkpoint(&ck, expected_dims)
    }
}

/// On-disk parameter file: dims plus row-major weights and biases per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub layer_dims: Vec<usize>,
    pub params: Vec<Vec<f64>>,
}

/// Max-subtracted softmax.
pub fn softmax_policy<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Gradient-descent step with optional classical momentum.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub rate: T,
    pub momentum: Option<T>,
    velocity: Option<GradientSet<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(rate: T, momentum: Option<T>) -> Self {
        Self {
            rate,
            momentum,
            velocity: None,
        }
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: GradientSet<T>, direction: Direction) -> Result<()> {
        let Some(mu) = self.momentum else {
            return net.apply_update_mut(&grads, self.rate, direction);
        };
        if !grads.is_finite() {
            return Err(Error::Numeric("nonfinite gradient, update refused".into()));
        }
        let v = match self.velocity.take() {
            Some(prev) => prev.scaled(mu).add(&grads)?,
            None => grads,
        };
        net.apply_update_mut(&v, self.rate, direction)?;
        self.velocity = Some(v);
        Ok(())
    }
}
