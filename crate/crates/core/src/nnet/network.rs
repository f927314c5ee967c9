use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{affine_batch, input_grad, matvec, weight_grad};
use super::Scalar;
use crate::error::{LemError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Linear,
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(format!("unknown activation '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Softmax over `len` classes; one target index.
    Categorical,
    /// `len` independent sigmoid units; one 0/1 target per unit.
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Head {
    pub kind: HeadKind,
    pub len: usize,
}

impl Head {
    pub fn categorical(len: usize) -> Self {
        Head {
            kind: HeadKind::Categorical,
            len,
        }
    }

    pub fn bernoulli(len: usize) -> Self {
        Head {
            kind: HeadKind::Bernoulli,
            len,
        }
    }

    /// Number of target slots this head consumes.
    pub fn target_width(&self) -> usize {
        match self.kind {
            HeadKind::Categorical => 1,
            HeadKind::Bernoulli => self.len,
        }
    }
}

/// Architecture of a network: hidden widths share one activation; the output
/// layer is linear and feeds the heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub heads: Vec<Head>,
}

impl NetworkSpec {
    pub fn output_dim(&self) -> usize {
        self.heads.iter().map(|h| h.len).sum()
    }
}

/// Fully connected layer with a row-major `out × in` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Dense {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
            activation,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(LemError::InvalidNetwork("zero-width layer".into()));
        }
        if self.weights.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(LemError::InvalidNetwork(format!(
                "layer {}x{} has {} weights and {} biases",
                self.out_dim,
                self.in_dim,
                self.weights.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    fn cast<U: Scalar>(&self) -> Dense<U> {
        Dense {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weights: self.weights.iter().map(|&w| U::from_f64(w.to_f64())).collect(),
            bias: self.bias.iter().map(|&b| U::from_f64(b.to_f64())).collect(),
            activation: self.activation,
        }
    }
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn activate<T: Scalar>(act: Activation, v: &mut [T]) {
    match act {
        Activation::Linear => {}
        Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(T::zero())),
        Activation::Sigmoid => v.iter_mut().for_each(|x| *x = sigmoid(*x)),
    }
}

fn softmax_in_place<T: Scalar>(v: &mut [T]) {
    let max = v.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let max = v.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    max + v.iter().map(|&x| (x - max).exp()).sum::<T>().ln()
}

/// Reusable buffers for single-sample inference.
#[derive(Debug, Clone, Default)]
pub struct ForwardScratch<T> {
    a: Vec<T>,
    b: Vec<T>,
}

/// A mini-batch: `n` row-major inputs and `n` rows of target slots.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, T> {
    pub inputs: &'a [T],
    pub targets: &'a [u16],
}

/// Training examples stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub input_dim: usize,
    pub target_width: usize,
    pub inputs: Vec<T>,
    pub targets: Vec<u16>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(input_dim: usize, target_width: usize) -> Self {
        Dataset {
            input_dim,
            target_width,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn with_capacity(input_dim: usize, target_width: usize, n: usize) -> Self {
        Dataset {
            input_dim,
            target_width,
            inputs: Vec::with_capacity(n * input_dim),
            targets: Vec::with_capacity(n * target_width),
        }
    }

    pub fn push(&mut self, input: &[T], target: &[u16]) {
        assert_eq!(input.len(), self.input_dim);
        assert_eq!(target.len(), self.target_width);
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
    }

    pub fn len(&self) -> usize {
        self.targets.len() / self.target_width.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, i: usize) -> &[T] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[u16] {
        &self.targets[i * self.target_width..(i + 1) * self.target_width]
    }

    pub fn as_batch(&self) -> Batch<'_, T> {
        Batch {
            inputs: &self.inputs,
            targets: &self.targets,
        }
    }

    /// Copies the rows at `indices` into the given buffers.
    pub fn gather(&self, indices: &[usize], inputs: &mut Vec<T>, targets: &mut Vec<u16>) {
        inputs.clear();
        targets.clear();
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
            targets.extend_from_slice(self.target(i));
        }
    }
}

/// Parameter gradients with the same layout as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    layers: Vec<Dense<T>>,
    heads: Vec<Head>,
}

impl<T: Scalar> Network<T> {
    /// Builds a network with uniform fan-in initialization and bias 0.01.
    pub fn new(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::zeros(spec)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::from_f64(rng.random_range(-bound..bound));
            }
            layer.bias.fill(T::from_f64(0.01));
        }
        Ok(net)
    }

    /// All weights and biases zero.
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let mut layers = Vec::with_capacity(spec.hidden.len() + 1);
        let mut prev = spec.input_dim;
        for &width in &spec.hidden {
            layers.push(Dense::zeros(prev, width, spec.hidden_activation));
            prev = width;
        }
        layers.push(Dense::zeros(prev, spec.output_dim(), Activation::Linear));
        Self::from_layers(layers, spec.heads.clone())
    }

    pub fn from_layers(layers: Vec<Dense<T>>, heads: Vec<Head>) -> Result<Self> {
        if layers.is_empty() {
            return Err(LemError::InvalidNetwork("no layers".into()));
        }
        for layer in &layers {
            layer.validate()?;
        }
        for pair in layers.windows(2) {
            if pair[1].in_dim != pair[0].out_dim {
                return Err(LemError::InvalidNetwork(format!(
                    "layer chain broken: {} -> {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        if heads.is_empty() || heads.iter().any(|h| h.len == 0) {
            return Err(LemError::InvalidNetwork("empty head".into()));
        }
        let out = layers.last().expect("non-empty").out_dim;
        let total: usize = heads.iter().map(|h| h.len).sum();
        if total != out {
            return Err(LemError::InvalidNetwork(format!(
                "heads cover {total} outputs, network has {out}"
            )));
        }
        Ok(Network { layers, heads })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    /// Mutable access to parameters. Shapes must not be changed.
    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn target_width(&self) -> usize {
        self.heads.iter().map(Head::target_width).sum()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn hidden_activation(&self) -> Activation {
        if self.layers.len() > 1 {
            self.layers[0].activation
        } else {
            Activation::Linear
        }
    }

    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec {
            input_dim: self.input_dim(),
            hidden: self.layers[..self.layers.len() - 1]
                .iter()
                .map(|l| l.out_dim)
                .collect(),
            hidden_activation: self.hidden_activation(),
            heads: self.heads.clone(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self.layers.iter().map(Dense::cast).collect(),
            heads: self.heads.clone(),
        }
    }

    /// Replaces raw output logits with per-head probabilities.
    pub fn apply_heads(&self, out: &mut [T]) {
        let mut offset = 0;
        for head in &self.heads {
            let seg = &mut out[offset..offset + head.len];
            match head.kind {
                HeadKind::Categorical => softmax_in_place(seg),
                HeadKind::Bernoulli => seg.iter_mut().for_each(|x| *x = sigmoid(*x)),
            }
            offset += head.len;
        }
    }

    /// Single-sample forward pass returning concatenated head probabilities.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let mut scratch = ForwardScratch::default();
        self.forward_with(input, &mut scratch).map(<[T]>::to_vec)
    }

    pub fn forward_with<'a>(
        &self,
        input: &[T],
        scratch: &'a mut ForwardScratch<T>,
    ) -> Result<&'a [T]> {
        self.logits_with(input, scratch)?;
        let out = &mut scratch.a[..self.output_dim()];
        self.apply_heads(out);
        Ok(out)
    }

    fn logits_with(&self, input: &[T], scratch: &mut ForwardScratch<T>) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(LemError::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
                context: "network input",
            });
        }
        let ForwardScratch { a, b } = scratch;
        a.clear();
        a.extend_from_slice(input);
        for layer in &self.layers {
            b.resize(layer.out_dim, T::zero());
            matvec(&layer.weights, &layer.bias, &a[..layer.in_dim], &mut b[..layer.out_dim]);
            activate(layer.activation, &mut b[..layer.out_dim]);
            std::mem::swap(a, b);
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Batch<'_, T>) -> Result<usize> {
        let in_dim = self.input_dim();
        if batch.inputs.is_empty() || batch.inputs.len() % in_dim != 0 {
            return Err(LemError::DimensionMismatch {
                expected: in_dim,
                got: batch.inputs.len(),
                context: "batch inputs (multiple of input dim)",
            });
        }
        let n = batch.inputs.len() / in_dim;
        if batch.targets.len() != n * self.target_width() {
            return Err(LemError::DimensionMismatch {
                expected: n * self.target_width(),
                got: batch.targets.len(),
                context: "batch targets",
            });
        }
        for row in batch.targets.chunks_exact(self.target_width()) {
            let mut slot = 0;
            for head in &self.heads {
                match head.kind {
                    HeadKind::Categorical => {
                        if row[slot] as usize >= head.len {
                            return Err(LemError::InvalidTarget(format!(
                                "class {} for a {}-way head",
                                row[slot], head.len
                            )));
                        }
                    }
                    HeadKind::Bernoulli => {
                        if row[slot..slot + head.len].iter().any(|&t| t > 1) {
                            return Err(LemError::InvalidTarget(
                                "Bernoulli target must be 0 or 1".into(),
                            ));
                        }
                    }
                }
                slot += head.target_width();
            }
        }
        Ok(n)
    }

    /// Batched forward pass keeping every layer's output.
    fn forward_layers(&self, n: usize, inputs: &[T]) -> Vec<Vec<T>> {
        let mut outs: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = if i == 0 { inputs } else { &outs[i - 1] };
            let mut y = vec![T::zero(); n * layer.out_dim];
            affine_batch(n, layer.in_dim, layer.out_dim, x, &layer.weights, &layer.bias, &mut y);
            for row in y.chunks_exact_mut(layer.out_dim) {
                activate(layer.activation, row);
            }
            outs.push(y);
        }
        outs
    }

    /// Batched forward pass returning head probabilities, `n × output_dim`.
    pub fn forward_batch(&self, inputs: &[T]) -> Result<Vec<T>> {
        let in_dim = self.input_dim();
        if inputs.is_empty() || inputs.len() % in_dim != 0 {
            return Err(LemError::DimensionMismatch {
                expected: in_dim,
                got: inputs.len(),
                context: "batch inputs (multiple of input dim)",
            });
        }
        let n = inputs.len() / in_dim;
        let mut out = self.forward_layers(n, inputs).pop().expect("non-empty");
        for row in out.chunks_exact_mut(self.output_dim()) {
            self.apply_heads(row);
        }
        Ok(out)
    }

    /// Mean over samples of the summed per-head cross-entropy; logits in `z`
    /// are overwritten with `dLoss/dz` when `grad` is set.
    fn head_loss(&self, n: usize, z: &mut [T], targets: &[u16], grad: bool) -> f64 {
        let out_dim = self.output_dim();
        let tw = self.target_width();
        let inv_n = T::from_f64(1.0 / n as f64);
        let mut total = 0.0f64;
        for (row, tgt) in z.chunks_exact_mut(out_dim).zip(targets.chunks_exact(tw)) {
            let mut offset = 0;
            let mut slot = 0;
            for head in &self.heads {
                let seg = &mut row[offset..offset + head.len];
                match head.kind {
                    HeadKind::Categorical => {
                        let t = tgt[slot] as usize;
                        total += (log_sum_exp(seg) - seg[t]).to_f64();
                        if grad {
                            softmax_in_place(seg);
                            seg[t] = seg[t] - T::one();
                            seg.iter_mut().for_each(|g| *g = *g * inv_n);
                        }
                    }
                    HeadKind::Bernoulli => {
                        for (u, zu) in seg.iter_mut().enumerate() {
                            let t = T::from_f64(tgt[slot + u] as f64);
                            let v = *zu;
                            total += (v.max(T::zero()) - v * t + (-v.abs()).exp().ln_1p()).to_f64();
                            if grad {
                                *zu = (sigmoid(v) - t) * inv_n;
                            }
                        }
                    }
                }
                offset += head.len;
                slot += head.target_width();
            }
        }
        total / n as f64
    }

    pub fn loss(&self, batch: &Batch<'_, T>) -> Result<f64> {
        let n = self.check_batch(batch)?;
        let mut outs = self.forward_layers(n, batch.inputs);
        let mut z = outs.pop().expect("non-empty");
        Ok(self.head_loss(n, &mut z, batch.targets, false))
    }

    /// Loss and its gradient with respect to every weight and bias.
    pub fn loss_and_gradients(&self, batch: &Batch<'_, T>) -> Result<(f64, Gradients<T>)> {
        let n = self.check_batch(batch)?;
        let mut outs = self.forward_layers(n, batch.inputs);
        let last = self.layers.len() - 1;
        let loss = self.head_loss(n, &mut outs[last], batch.targets, true);

        let mut grads = Gradients {
            weights: self.layers.iter().map(|l| vec![T::zero(); l.weights.len()]).collect(),
            biases: self.layers.iter().map(|l| vec![T::zero(); l.out_dim]).collect(),
        };
        // outs[i] holds dLoss/d(pre-activation) of layer i once processed
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let (before, rest) = outs.split_at_mut(i);
            let dz = &rest[0];
            let x: &[T] = if i == 0 { batch.inputs } else { &before[i - 1] };
            weight_grad(n, layer.in_dim, layer.out_dim, dz, x, &mut grads.weights[i]);
            let db = &mut grads.biases[i];
            for row in dz.chunks_exact(layer.out_dim) {
                for (b, &g) in db.iter_mut().zip(row) {
                    *b += g;
                }
            }
            if i > 0 {
                let prev = &mut before[i - 1];
                let mut dx = vec![T::zero(); n * layer.in_dim];
                input_grad(n, layer.in_dim, layer.out_dim, dz, &layer.weights, &mut dx);
                let act = self.layers[i - 1].activation;
                for (a, d) in prev.iter_mut().zip(dx) {
                    *a = match act {
                        Activation::Linear => d,
                        Activation::Relu => {
                            if *a > T::zero() {
                                d
                            } else {
                                T::zero()
                            }
                        }
                        Activation::Sigmoid => d * *a * (T::one() - *a),
                    };
                }
            }
        }
        Ok((loss, grads))
    }
}
