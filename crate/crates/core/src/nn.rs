//! Small dense networks with hand-written backpropagation.
//!
//! A network is a ReLU trunk (`hidden_dims`) followed by either a linear
//! output layer or a dueling head. The dueling head splits the trunk output
//! into a scalar value stream and an advantage stream and recombines them as
//! `Q(s, a) = V(s) + A(s, a) - agg_a' A(s, a')`, where `agg` is max or mean.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::RunRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Plain,
    DuelingMax,
    DuelingMean,
}

impl Head {
    pub fn is_dueling(self) -> bool {
        !matches!(self, Head::Plain)
    }
}

/// Layer sizes and head type. Dueling heads attach both streams directly
/// to the last trunk layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub head: Head,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize, head: Head) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            head,
        }
    }

    /// 4-24-24-2 with a linear output.
    pub fn cartpole() -> Self {
        Self::new(4, vec![24, 24], 2, Head::Plain)
    }

    /// 512-256-64 trunk with mean-aggregated dueling streams.
    pub fn cartpole_large_dueling() -> Self {
        Self::new(4, vec![512, 256, 64], 2, Head::DuelingMean)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "network dimensions must all be >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// `(out_dim, in_dim)` of every affine layer in declaration order:
    /// trunk layers, then the output layer (plain) or value then advantage (dueling).
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_dims.len() + 2);
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_dims {
            shapes.push((h, fan_in));
            fan_in = h;
        }
        if self.head.is_dueling() {
            shapes.push((1, fan_in));
        }
        shapes.push((self.output_dim, fan_in));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(out, inp)| out * inp + out)
            .sum()
    }
}

/// Affine layer `y = W x + b`, `W` stored row-major as `out_dim × in_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn glorot<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..out_dim * in_dim)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.in_dim).zip(&self.bias).map(|(row, b)| {
            row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b
        }));
    }

    /// Accumulates `delta ⊗ input` into this layer, treated as a gradient buffer.
    fn accumulate(&mut self, delta: &[f64], input: &[f64]) {
        for ((row, b), &d) in self
            .weights
            .chunks_exact_mut(self.in_dim)
            .zip(self.bias.iter_mut())
            .zip(delta)
        {
            if d == 0.0 {
                continue;
            }
            for (w, &x) in row.iter_mut().zip(input) {
                *w += d * x;
            }
            *b += d;
        }
    }

    /// Adds `Wᵀ delta` into `out`.
    fn back_project(&self, delta: &[f64], out: &mut [f64]) {
        for (row, &d) in self.weights.chunks_exact(self.in_dim).zip(delta) {
            if d == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * d;
            }
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Intermediate values of one forward pass, consumed by [`Network::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input followed by each trunk layer's post-activation output.
    activations: Vec<Vec<f64>>,
    /// Trunk pre-activations.
    pre_activations: Vec<Vec<f64>>,
    value: f64,
    advantages: Vec<f64>,
    /// Advantage unit subtracted by the max head (first on ties).
    max_index: usize,
}

impl ForwardCache {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn advantages(&self) -> &[f64] {
        &self.advantages
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Dense>,
}

pub type Gradients = Network;

/// `a - mean(a)` with a second pass that removes the rounding residue of the mean.
fn centered(a: &[f64]) -> Vec<f64> {
    let n = a.len() as f64;
    let mean = a.iter().sum::<f64>() / n;
    let mut d: Vec<f64> = a.iter().map(|x| x - mean).collect();
    let residue = d.iter().sum::<f64>() / n;
    d.iter_mut().for_each(|x| *x -= residue);
    d
}

impl Network {
    /// Glorot-uniform weights and zero biases, drawn from a generator seeded by `seed`.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        Self::build_with(spec, &mut RunRng::seed_from_u64(seed))
    }

    pub fn build_with<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| Dense::glorot(out, inp, rng))
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| Dense::zeros(out, inp))
            .collect();
        Self {
            spec: spec.clone(),
            layers,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.spec)
    }

    pub fn from_layers(spec: NetworkSpec, layers: Vec<Dense>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::DimensionMismatch {
                expected: shapes.len(),
                actual: layers.len(),
            });
        }
        for (&(out, inp), layer) in shapes.iter().zip(&layers) {
            if layer.out_dim != out
                || layer.in_dim != inp
                || layer.weights.len() != out * inp
                || layer.bias.len() != out
            {
                return Err(Error::InvalidConfig(format!(
                    "layer shape {}x{} does not match expected {out}x{inp}",
                    layer.out_dim, layer.in_dim
                )));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters in declaration order, weights before biases within each layer.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Dense::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Dense::params_mut)
    }

    fn trunk_len(&self) -> usize {
        self.spec.hidden_dims.len()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(input)?;
        let trunk = self.trunk_len();
        let mut activations = Vec::with_capacity(trunk + 1);
        let mut pre_activations = Vec::with_capacity(trunk);
        activations.push(input.to_vec());
        for layer in &self.layers[..trunk] {
            let mut z = Vec::new();
            layer.apply(activations.last().expect("non-empty"), &mut z);
            let h = z.iter().map(|&v| v.max(0.0)).collect();
            pre_activations.push(z);
            activations.push(h);
        }
        let features = activations.last().expect("non-empty");

        let mut q = Vec::with_capacity(self.spec.output_dim);
        let (value, advantages, max_index) = match self.spec.head {
            Head::Plain => {
                self.layers[trunk].apply(features, &mut q);
                (0.0, Vec::new(), 0)
            }
            Head::DuelingMax | Head::DuelingMean => {
                let mut v = Vec::with_capacity(1);
                self.layers[trunk].apply(features, &mut v);
                let mut adv = Vec::with_capacity(self.spec.output_dim);
                self.layers[trunk + 1].apply(features, &mut adv);
                let max_index = crate::tabular::argmax(&adv);
                if self.spec.head == Head::DuelingMax {
                    q.extend(adv.iter().map(|a| v[0] + (a - adv[max_index])));
                } else {
                    q.extend(centered(&adv).into_iter().map(|d| v[0] + d));
                }
                (v[0], adv, max_index)
            }
        };

        Ok((
            q,
            ForwardCache {
                activations,
                pre_activations,
                value,
                advantages,
                max_index,
            },
        ))
    }

    /// Q-values for one input.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input).map(|(q, _)| q)
    }

    /// Gradient of a loss with `output_error = dL/dQ` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, output_error: &[f64]) -> Result<Gradients> {
        let mut grads = self.zeros_like();
        self.backward_into(cache, output_error, &mut grads)?;
        Ok(grads)
    }

    /// As [`Network::backward`], adding into an existing gradient buffer.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_error: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        if output_error.len() != self.spec.output_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.output_dim,
                actual: output_error.len(),
            });
        }
        if grads.spec != self.spec || cache.activations.len() != self.trunk_len() + 1 {
            return Err(Error::InvalidConfig(
                "gradient buffer or cache does not match network".into(),
            ));
        }
        let trunk = self.trunk_len();
        let features = &cache.activations[trunk];
        let mut d_features = vec![0.0; features.len()];

        match self.spec.head {
            Head::Plain => {
                grads.layers[trunk].accumulate(output_error, features);
                self.layers[trunk].back_project(output_error, &mut d_features);
            }
            Head::DuelingMax | Head::DuelingMean => {
                let d_value = [output_error.iter().sum::<f64>()];
                let mut d_adv = output_error.to_vec();
                if self.spec.head == Head::DuelingMax {
                    d_adv[cache.max_index] -= d_value[0];
                } else {
                    let share = d_value[0] / d_adv.len() as f64;
                    d_adv.iter_mut().for_each(|d| *d -= share);
                }
                grads.layers[trunk].accumulate(&d_value, features);
                grads.layers[trunk + 1].accumulate(&d_adv, features);
                self.layers[trunk].back_project(&d_value, &mut d_features);
                self.layers[trunk + 1].back_project(&d_adv, &mut d_features);
            }
        }

        let mut delta = d_features;
        for l in (0..trunk).rev() {
            for (d, &z) in delta.iter_mut().zip(&cache.pre_activations[l]) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
            grads.layers[l].accumulate(&delta, &cache.activations[l]);
            if l > 0 {
                let mut below = vec![0.0; cache.activations[l].len()];
                self.layers[l].back_project(&delta, &mut below);
                delta = below;
            }
        }
        Ok(())
    }

    /// `self ← tau·source + (1 − tau)·self`, elementwise.
    pub fn blend_from(&mut self, source: &Network, tau: f64) {
        debug_assert_eq!(self.spec, source.spec);
        for (t, &s) in self.params_mut().zip(source.params()) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }

    pub fn copy_from(&mut self, source: &Network) {
        self.clone_from(source);
    }

    pub fn scale(&mut self, factor: f64) {
        self.params_mut().for_each(|p| *p *= factor);
    }
}

/// Adaptive-moment optimizer state (β1 = 0.9, β2 = 0.999, ε = 1e-8).
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
        }
    }

    pub fn for_network(net: &Network) -> Self {
        Self::new(net.param_count())
    }

    pub fn step(&mut self, params: &mut Network, grads: &Gradients, lr: f64) -> Result<()> {
        let n = params.param_count();
        if grads.param_count() != n || self.first_moment.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: grads.param_count(),
            });
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let bias1 = 1.0 - b1.powf(self.t as f64);
        let bias2 = 1.0 - b2.powf(self.t as f64);
        for (((p, &g), m), v) in params
            .params_mut()
            .zip(grads.params())
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_heads(net: &mut Network, value: f64, adv: &[f64]) {
        // zero trunk output (no hidden layers) so the streams are pure biases
        let n = net.layers.len();
        net.layers[n - 2].weights.iter_mut().for_each(|w| *w = 0.0);
        net.layers[n - 2].bias[0] = value;
        net.layers[n - 1].weights.iter_mut().for_each(|w| *w = 0.0);
        net.layers[n - 1].bias.copy_from_slice(adv);
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(NetworkSpec::cartpole().param_count(), 770);
        assert_eq!(NetworkSpec::cartpole_large_dueling().param_count(), 150_531);
        assert_eq!(NetworkSpec::new(4, vec![], 2, Head::Plain).param_count(), 10);
        let net = Network::build(&NetworkSpec::cartpole(), 3).unwrap();
        assert_eq!(net.param_count(), 770);
    }

    #[test]
    fn build_is_seeded() {
        let spec = NetworkSpec::cartpole();
        assert_eq!(Network::build(&spec, 5).unwrap(), Network::build(&spec, 5).unwrap());
        assert_ne!(Network::build(&spec, 5).unwrap(), Network::build(&spec, 6).unwrap());
        let net = Network::build(&spec, 5).unwrap();
        for layer in net.layers() {
            let limit = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
            assert!(layer.weights.iter().all(|w| w.abs() <= limit));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn dueling_aggregation_examples() {
        let mut mean = Network::build(&NetworkSpec::new(4, vec![], 2, Head::DuelingMean), 1).unwrap();
        set_heads(&mut mean, 1.0, &[1.0, 3.0]);
        assert_eq!(mean.predict(&[0.3, -0.1, 0.2, 0.0]).unwrap(), vec![0.0, 2.0]);

        let mut max = Network::build(&NetworkSpec::new(4, vec![], 2, Head::DuelingMax), 1).unwrap();
        set_heads(&mut max, 1.0, &[1.0, 3.0]);
        assert_eq!(max.predict(&[0.3, -0.1, 0.2, 0.0]).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn zero_input_gives_zero_output_with_zero_biases() {
        let net = Network::build(&NetworkSpec::cartpole(), 9).unwrap();
        assert_eq!(net.predict(&[0.0; 4]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let net = Network::build(&NetworkSpec::cartpole(), 9).unwrap();
        assert!(matches!(
            net.forward(&[0.0; 3]),
            Err(Error::DimensionMismatch { expected: 4, actual: 3 })
        ));
        let (_, cache) = net.forward(&[0.0; 4]).unwrap();
        assert!(net.backward(&cache, &[1.0]).is_err());
    }

    #[test]
    fn zero_error_gives_zero_gradient() {
        for head in [Head::Plain, Head::DuelingMax, Head::DuelingMean] {
            let net = Network::build(&NetworkSpec::new(4, vec![8], 2, head), 2).unwrap();
            let (_, cache) = net.forward(&[0.1, 0.2, -0.3, 0.4]).unwrap();
            let g = net.backward(&cache, &[0.0, 0.0]).unwrap();
            assert!(g.params().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn zero_input_gives_zero_first_layer_weight_gradient() {
        let mut net = Network::build(&NetworkSpec::new(4, vec![8], 2, Head::Plain), 2).unwrap();
        net.layers[0].bias.iter_mut().for_each(|b| *b = 0.5);
        let (_, cache) = net.forward(&[0.0; 4]).unwrap();
        let g = net.backward(&cache, &[1.0, -2.0]).unwrap();
        assert!(g.layers()[0].weights.iter().all(|&w| w == 0.0));
        assert!(g.layers()[0].bias.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut net = Network::build(&NetworkSpec::cartpole(), 4).unwrap();
        let before = net.clone();
        let mut opt = Adam::for_network(&net);
        opt.step(&mut net, &before.zeros_like(), 1e-3).unwrap();
        assert_eq!(net, before);
        assert_eq!(opt.t, 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut net = Network::build(&NetworkSpec::new(4, vec![3], 2, Head::Plain), 4).unwrap();
        let before = net.clone();
        let mut grads = net.zeros_like();
        for (i, g) in grads.params_mut().enumerate() {
            *g = if i % 2 == 0 { 0.5 + i as f64 } else { -0.25 };
        }
        let lr = 1e-3;
        Adam::for_network(&net).step(&mut net, &grads, lr).unwrap();
        for ((new, old), g) in net.params().zip(before.params()).zip(grads.params()) {
            // m̂ = g, v̂ = g², so the step is lr·|g| / (|g| + ε)
            let expected = lr * g.abs() / (g.abs() + 1e-8);
            assert!(((old - new).abs() - expected).abs() < 1e-15);
            assert_eq!((old - new).signum(), g.signum());
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let net = Network::build(&NetworkSpec::cartpole(), 4).unwrap();
        let mut grads = net.zeros_like();
        grads.params_mut().enumerate().for_each(|(i, g)| *g = (i as f64).sin());
        let run = || {
            let mut n = net.clone();
            let mut opt = Adam::for_network(&n);
            opt.step(&mut n, &grads, 1e-3).unwrap();
            (n, opt)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn polyak_blend() {
        let spec = NetworkSpec::new(1, vec![], 1, Head::Plain);
        let mut target = Network::zeros(&spec);
        let mut online = Network::zeros(&spec);
        online.params_mut().for_each(|p| *p = 1.0);
        target.blend_from(&online, 0.1);
        assert!(target.params().all(|&p| (p - 0.1).abs() < 1e-15));
        target.blend_from(&online, 1.0);
        assert_eq!(target, online);
        target.blend_from(&online, 0.1);
        assert_eq!(target, online);
    }
}
