//! Multilayer perceptron encoder with unit-norm output.
//!
//! Hidden layers use `tanh`; the last layer is linear and its output is
//! L2-normalized, so every representation lies on the unit sphere. Forward
//! and backward passes are written out by hand, including the Jacobian of
//! the normalization, `(I - x̂x̂ᵀ) / ‖x‖`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::Rng;

/// Norms below this are treated as this value when normalizing.
const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in × fan_out`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<Layer>,
}

/// Same layout as [`EncoderParams`], holding derivatives.
pub type Gradients = EncoderParams;

/// Activations kept by [`EncoderParams::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer; `inputs[0]` is the batch itself.
    inputs: Vec<Matrix>,
    /// Unit-norm output rows.
    output: Matrix,
    /// Norm of each pre-normalization output row.
    norms: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl EncoderParams {
    /// Glorot-uniform weights, zero biases. `dims` runs from input to embedding.
    pub fn init(dims: &[usize], rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2, "encoder needs at least one layer");
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
                let mut layer = Layer::zeros(fan_in, fan_out);
                for x in layer.weights.as_mut_slice() {
                    *x = rng.uniform_range(-limit, limit);
                }
                layer
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.shape() == b.weights.shape())
    }

    /// All parameters, layer by layer, weights (row-major) before bias.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        for (p, &v) in self.iter_mut().zip(flat) {
            *p = v;
        }
    }

    fn check_input(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, encoder expects {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn affine(layer: &Layer, x: &Matrix) -> Matrix {
        let mut z = x.matmul(&layer.weights);
        for i in 0..z.rows() {
            for (zij, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                *zij += b;
            }
        }
        z
    }

    /// Unit-norm embeddings of every input row, keeping what backward needs.
    pub fn forward(&self, inputs: &Matrix) -> Result<ForwardCache> {
        self.check_input(inputs)?;
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut x = inputs.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Self::affine(layer, &x);
            if l < last {
                z.as_mut_slice().iter_mut().for_each(|v| *v = libm::tanh(*v));
            }
            layer_inputs.push(x);
            x = z;
        }
        let mut norms = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let row = x.row_mut(i);
            let n = f64::max(libm::sqrt(dot(row, row)), NORM_FLOOR);
            row.iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        Ok(ForwardCache {
            inputs: layer_inputs,
            output: x,
            norms,
        })
    }

    /// Embeddings only.
    pub fn embed(&self, inputs: &Matrix) -> Result<Matrix> {
        Ok(self.forward(inputs)?.output)
    }

    /// Parameter gradients given `upstream = dL/d(embeddings)`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<Gradients> {
        if upstream.shape() != cache.output.shape() || cache.inputs.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "upstream {:?} does not match cached output {:?}",
                upstream.shape(),
                cache.output.shape()
            )));
        }
        let n = upstream.rows();
        // Back through the normalization: (g - ŷ(ŷ·g)) / ‖z‖.
        let mut delta = Matrix::zeros(n, self.output_dim());
        for i in 0..n {
            let y = cache.output.row(i);
            let g = upstream.row(i);
            let proj = dot(y, g);
            for ((d, &gj), &yj) in delta.row_mut(i).iter_mut().zip(g).zip(y) {
                *d = (gj - yj * proj) / cache.norms[i];
            }
        }
        let mut grads = self.zeros_like();
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            grads.layers[l].weights = input.t_matmul(&delta);
            let bias = &mut grads.layers[l].bias;
            for i in 0..n {
                for (b, &d) in bias.iter_mut().zip(delta.row(i)) {
                    *b += d;
                }
            }
            if l > 0 {
                // input = tanh(previous pre-activation)
                let mut prev = delta.matmul_t(&self.layers[l].weights);
                for (p, &a) in prev.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
        Ok(grads)
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, other: &Self, s: f64) {
        assert!(self.same_shape(other));
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += s * b;
        }
    }
}

/// Adam state for the online parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: EncoderParams,
    pub second: EncoderParams,
    pub step: u64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(like: &EncoderParams) -> Self {
        Self {
            first: like.zeros_like(),
            second: like.zeros_like(),
            step: 0,
        }
    }
}

/// Online, momentum and (after the first domain) frozen encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSet {
    pub online: EncoderParams,
    pub momentum: EncoderParams,
    pub frozen: Option<EncoderParams>,
    pub optimizer: AdamState,
}

impl EncoderSet {
    /// Momentum starts as a copy of the online encoder.
    pub fn new(online: EncoderParams) -> Self {
        Self {
            momentum: online.clone(),
            optimizer: AdamState::new(&online),
            online,
            frozen: None,
        }
    }

    /// One Adam step on the online encoder, with L2 weight decay added to the
    /// gradient before the moment updates.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64, weight_decay: f64) -> Result<()> {
        if !grads.same_shape(&self.online) {
            return Err(Error::Shape("gradients do not match online encoder".into()));
        }
        let opt = &mut self.optimizer;
        opt.step += 1;
        let t = opt.step as i32;
        let bc1 = 1.0 - libm::pow(AdamState::BETA1, t as f64);
        let bc2 = 1.0 - libm::pow(AdamState::BETA2, t as f64);
        let params = self.online.iter_mut();
        let m = opt.first.iter_mut();
        let v = opt.second.iter_mut();
        for (((p, m), v), &g) in params.zip(m).zip(v).zip(grads.iter()) {
            let g = g + weight_decay * *p;
            *m = AdamState::BETA1 * *m + (1.0 - AdamState::BETA1) * g;
            *v = AdamState::BETA2 * *v + (1.0 - AdamState::BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + AdamState::EPS);
        }
        Ok(())
    }

    /// `θ_m ← α·θ_m + (1 − α)·θ`.
    pub fn ema_update(&mut self, alpha: f64) {
        debug_assert!((0.0..=1.0).contains(&alpha));
        for (m, &p) in self.momentum.iter_mut().zip(self.online.iter()) {
            *m = alpha * *m + (1.0 - alpha) * p;
        }
    }

    /// End-of-domain handoff: the momentum encoder becomes both the frozen
    /// reference and the new online starting point. Optimizer state is reset.
    pub fn snapshot_frozen(&mut self) {
        self.frozen = Some(self.momentum.clone());
        self.online = self.momentum.clone();
        self.optimizer = AdamState::new(&self.online);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;

    fn single_layer(w: Matrix, b: Vec<f64>) -> EncoderParams {
        EncoderParams {
            layers: vec![Layer { weights: w, bias: b }],
        }
    }

    #[test]
    fn identity_layer_row_normalizes() {
        let enc = single_layer(Matrix::identity(4), vec![0.0; 4]);
        let x = Matrix::from_rows(&[
            [1.0, 2.0, 2.0, 0.0],
            [0.0, 0.0, 0.0, 5.0],
            [1.0, 1.0, 1.0, 1.0],
        ]);
        let y = enc.embed(&x).unwrap();
        assert_eq!(y.shape(), (3, 4));
        let expect = Matrix::from_rows(&[
            [1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.5, 0.5, 0.5, 0.5],
        ]);
        assert!(y.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn zero_input_gives_normalized_bias() {
        let mut rng = Rng::new(3);
        let mut enc = EncoderParams::init(&[5, 3], &mut rng);
        enc.layers[0].bias = vec![3.0, 0.0, -4.0];
        let y = enc.embed(&Matrix::zeros(2, 5)).unwrap();
        for r in y.iter_rows() {
            assert!((r[0] - 0.6).abs() < 1e-15 && r[1] == 0.0 && (r[2] + 0.8).abs() < 1e-15);
        }
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let enc = EncoderParams::init(&[4, 3], &mut Rng::new(0));
        assert!(matches!(enc.forward(&Matrix::zeros(1, 5)), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Rng::new(5);
        let enc = EncoderParams::init(&[3, 4, 2], &mut rng);
        let x = Matrix::from_rows(&[[0.1, -0.3, 0.7], [1.0, 0.5, -0.2]]);
        let cache = enc.forward(&x).unwrap();
        let g = enc.backward(&cache, &Matrix::zeros(2, 2)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_dimensional_output_has_no_gradient() {
        let enc = EncoderParams::init(&[1, 1], &mut Rng::new(9));
        let x = Matrix::from_rows(&[[0.7]]);
        let cache = enc.forward(&x).unwrap();
        assert!((cache.output()[(0, 0)].abs() - 1.0).abs() < 1e-15);
        let g = enc.backward(&cache, &Matrix::from_rows(&[[1.0]])).unwrap();
        assert!(g.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn backward_shape_mismatch() {
        let enc = EncoderParams::init(&[3, 2], &mut Rng::new(1));
        let cache = enc.forward(&Matrix::zeros(2, 3)).unwrap();
        assert!(enc.backward(&cache, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn outputs_are_unit_norm() {
        let mut rng = Rng::new(11);
        let enc = EncoderParams::init(&[6, 8, 8, 4], &mut rng);
        let x = Matrix::from_vec(10, 6, (0..60).map(|_| 3.0 * rng.normal()).collect());
        for r in enc.embed(&x).unwrap().iter_rows() {
            assert!((norm(r) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_zero_gradient_no_decay_is_a_no_op() {
        let enc = EncoderParams::init(&[3, 2], &mut Rng::new(2));
        let mut set = EncoderSet::new(enc.clone());
        set.adam_step(&enc.zeros_like(), 0.1, 0.0).unwrap();
        assert_eq!(set.online, enc);
    }

    #[test]
    fn adam_first_step_matches_hand_formula() {
        let enc = EncoderParams::init(&[2, 2], &mut Rng::new(4));
        let mut grads = enc.zeros_like();
        let gflat = [0.5, -2.0, 1e-3, 0.0, 3.0, -0.25];
        grads.set_flat(&gflat);
        let mut set = EncoderSet::new(enc.clone());
        let lr = 0.01;
        set.adam_step(&grads, lr, 0.0).unwrap();
        // From zero moments: m̂ = g, v̂ = g², step = lr·g/(|g| + ε).
        for ((&p0, &p1), &g) in enc.iter().zip(set.online.iter()).zip(&gflat) {
            let expect = p0 - lr * g / (libm::sqrt(g * g) + AdamState::EPS);
            assert!((p1 - expect).abs() < 1e-15, "{p1} vs {expect}");
        }
    }

    #[test]
    fn coupled_decay_equals_gradient_of_wd_times_param() {
        let enc = EncoderParams::init(&[3, 2], &mut Rng::new(6));
        let wd = 5e-4;
        let mut a = EncoderSet::new(enc.clone());
        a.adam_step(&enc.zeros_like(), 0.01, wd).unwrap();
        let mut g = enc.clone();
        g.iter_mut().for_each(|x| *x *= wd);
        let mut b = EncoderSet::new(enc.clone());
        b.adam_step(&g, 0.01, 0.0).unwrap();
        assert_eq!(a.online, b.online);
    }

    fn scalar_set(online: f64, momentum: f64) -> EncoderSet {
        let mut set = EncoderSet::new(single_layer(Matrix::from_rows(&[[online]]), vec![0.0]));
        set.momentum.layers[0].weights[(0, 0)] = momentum;
        set
    }

    #[test]
    fn ema_scalar_cases() {
        let mut set = scalar_set(0.0, 1.0);
        set.ema_update(0.999);
        assert_eq!(set.momentum.layers[0].weights[(0, 0)], 0.999);

        let mut set = scalar_set(0.25, 1.0);
        set.ema_update(0.0);
        assert_eq!(set.momentum, set.online);

        let mut set = scalar_set(0.25, 1.0);
        set.ema_update(1.0);
        assert_eq!(set.momentum.layers[0].weights[(0, 0)], 1.0);
    }

    #[test]
    fn snapshot_copies_momentum_everywhere() {
        let mut rng = Rng::new(8);
        let mut set = EncoderSet::new(EncoderParams::init(&[3, 4, 2], &mut rng));
        set.momentum.iter_mut().for_each(|x| *x += 0.5);
        let g = set.online.clone();
        set.adam_step(&g, 0.1, 0.0).unwrap();
        set.snapshot_frozen();
        assert_eq!(set.frozen.as_ref(), Some(&set.momentum));
        assert_eq!(set.online, set.momentum);
        assert_eq!(set.optimizer.step, 0);

        let frozen = set.frozen.clone().unwrap();
        set.online.iter_mut().for_each(|x| *x = 0.0);
        set.ema_update(0.5);
        assert_eq!(set.frozen.as_ref(), Some(&frozen));
        assert_ne!(set.momentum, frozen);
    }
}
