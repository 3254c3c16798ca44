//! Dense feed-forward network conditioned on a chain step index.
//!
//! The network input is `concat(x, timestep_embed(k, n))`. All parameters live in
//! one flat `f32` buffer, laid out layer by layer as the row-major weight matrix
//! `(out, in)` followed by the bias vector `(out)`. The same layout is used by
//! [`Gradients`], the Adam moments, and the checkpoint format.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Element-wise nonlinearity applied after every hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `x * sigmoid(x)`.
    #[default]
    Silu,
    Tanh,
    Relu,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Silu => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Activation::Silu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Relu),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f32) -> f32 {
        match self {
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    fn derivative(self, z: f32) -> f32 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Sinusoidal features of `k / n`: sines first, then cosines, with angular
/// frequencies spaced geometrically from 1 to 1000.
pub fn timestep_embed(k: usize, n: usize, embed_dim: usize) -> Result<Vec<f32>> {
    if n == 0 {
        return Err(Error::invalid("timestep embedding needs n >= 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("step {k} outside 0..={n}")));
    }
    if !embed_dim.is_multiple_of(2) {
        return Err(Error::invalid(format!("embed_dim {embed_dim} is odd")));
    }
    let mut out = vec![0.0f32; embed_dim];
    fill_embedding(k as f64 / n as f64, &mut out);
    Ok(out)
}

fn frequency(i: usize, half: usize) -> f64 {
    if half <= 1 {
        1.0
    } else {
        1000f64.powf(i as f64 / (half - 1) as f64)
    }
}

fn fill_embedding(tau: f64, out: &mut [f32]) {
    let half = out.len() / 2;
    for i in 0..half {
        let phase = frequency(i, half) * tau;
        out[i] = phase.sin() as f32;
        out[half + i] = phase.cos() as f32;
    }
}

/// Gradient buffer with the same flat layout as [`Mlp::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f32>);

impl Gradients {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f32>,
    activation: Activation,
    embed_dim: usize,
}

impl Mlp {
    /// Builds a network with the given layer widths, uniform
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization for weights and biases.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        activation: Activation,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(dims, activation, embed_dim)?;
        let mut offset = 0;
        for l in 0..net.n_layers() {
            let (rows, cols) = net.layer_shape(l);
            let bound = 1.0 / (cols as f32).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("positive bound");
            let len = rows * cols + rows;
            for p in &mut net.params[offset..offset + len] {
                *p = dist.sample(rng);
            }
            offset += len;
        }
        Ok(net)
    }

    /// `depth` dense layers mapping `d + embed_dim` inputs through `depth - 1`
    /// hidden layers of width `hidden` back to `d` outputs.
    pub fn toy<R: Rng + ?Sized>(
        d: usize,
        hidden: usize,
        depth: usize,
        embed_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::invalid("network depth must be >= 1"));
        }
        let mut dims = vec![d + embed_dim];
        dims.extend(std::iter::repeat_n(hidden, depth - 1));
        dims.push(d);
        Self::new(&dims, activation, embed_dim, rng)
    }

    pub fn zeros(dims: &[usize], activation: Activation, embed_dim: usize) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        if dims.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if !embed_dim.is_multiple_of(2) {
            return Err(Error::invalid(format!("embed_dim {embed_dim} is odd")));
        }
        let d = *dims.last().unwrap();
        if dims[0] != d + embed_dim {
            return Err(Error::invalid(format!(
                "input width {} must equal data dim {d} + embed_dim {embed_dim}",
                dims[0]
            )));
        }
        let count = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![0.0; count],
            activation,
            embed_dim,
        })
    }

    /// Rebuilds a network from a flat parameter buffer.
    pub fn from_parts(
        dims: &[usize],
        activation: Activation,
        embed_dim: usize,
        params: Vec<f32>,
    ) -> Result<Self> {
        let mut net = Self::zeros(dims, activation, embed_dim)?;
        if params.len() != net.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite network weight".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// `(rows, cols)` = `(out, in)` of layer `l`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.dims[l + 1], self.dims[l])
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layer_views(&self) -> Vec<(ArrayView2<'_, f32>, &[f32])> {
        let mut out = Vec::with_capacity(self.n_layers());
        let mut offset = 0;
        for l in 0..self.n_layers() {
            let (rows, cols) = self.layer_shape(l);
            let w = ArrayView2::from_shape((rows, cols), &self.params[offset..offset + rows * cols])
                .expect("layer shape matches buffer");
            offset += rows * cols;
            let b = &self.params[offset..offset + rows];
            offset += rows;
            out.push((w, b));
        }
        out
    }

    fn network_input(&self, steps: &[usize], n: usize, x: ArrayView2<f32>) -> Result<Array2<f32>> {
        let d = self.data_dim();
        if x.ncols() != d {
            return Err(Error::invalid(format!(
                "input has {} columns, network expects {d}",
                x.ncols()
            )));
        }
        if steps.len() != x.nrows() {
            return Err(Error::invalid(format!(
                "{} step indices for {} rows",
                steps.len(),
                x.nrows()
            )));
        }
        if n == 0 {
            return Err(Error::invalid("timestep embedding needs n >= 1"));
        }
        let mut input = Array2::<f32>::zeros((x.nrows(), d + self.embed_dim));
        input.slice_mut(s![.., ..d]).assign(&x);
        for (mut row, &k) in input.rows_mut().into_iter().zip(steps) {
            if k > n {
                return Err(Error::invalid(format!("step {k} outside 0..={n}")));
            }
            let emb = row.as_slice_mut().expect("standard layout");
            fill_embedding(k as f64 / n as f64, &mut emb[d..]);
        }
        Ok(input)
    }

    /// Evaluates the network on every row of `x`, each at its own step index.
    pub fn forward(&self, steps: &[usize], n: usize, x: ArrayView2<f32>) -> Result<Array2<f32>> {
        let mut h = self.network_input(steps, n, x)?;
        let layers = self.layer_views();
        let last = layers.len() - 1;
        for (l, (w, b)) in layers.iter().enumerate() {
            let mut z = h.dot(&w.t());
            for mut row in z.rows_mut() {
                for (zi, bi) in row.iter_mut().zip(b.iter()) {
                    *zi += bi;
                }
            }
            if l < last {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            h = z;
        }
        Ok(h)
    }

    /// Evaluates every row at the same step `k`.
    pub fn forward_at(&self, k: usize, n: usize, x: ArrayView2<f32>) -> Result<Array2<f32>> {
        let steps = vec![k; x.nrows()];
        self.forward(&steps, n, x)
    }

    /// Mean squared error over batch and coordinates, with exact reverse-mode
    /// gradients.
    pub fn mse_grad(
        &self,
        steps: &[usize],
        n: usize,
        x: ArrayView2<f32>,
        target: ArrayView2<f32>,
    ) -> Result<(f64, Gradients)> {
        self.weighted_mse_grad(steps, n, x, target, None)
    }

    /// Like [`Mlp::mse_grad`], with an optional nonnegative weight per row.
    /// The loss is `sum_i w_i |y_i - t_i|^2 / (batch * d)`.
    pub fn weighted_mse_grad(
        &self,
        steps: &[usize],
        n: usize,
        x: ArrayView2<f32>,
        target: ArrayView2<f32>,
        row_weights: Option<&[f32]>,
    ) -> Result<(f64, Gradients)> {
        let batch = x.nrows();
        let d = self.data_dim();
        if batch == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if target.dim() != (batch, d) {
            return Err(Error::invalid(format!(
                "target shape {:?} does not match ({batch}, {d})",
                target.dim()
            )));
        }
        if let Some(w) = row_weights {
            if w.len() != batch {
                return Err(Error::invalid("row weight count does not match batch"));
            }
        }
        if x.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value in regression batch".into()));
        }

        let layers = self.layer_views();
        let last = layers.len() - 1;
        // Layer inputs (post-activation) and pre-activations.
        let mut inputs = Vec::with_capacity(layers.len());
        let mut pre = Vec::with_capacity(layers.len());
        let mut h = self.network_input(steps, n, x)?;
        for (l, (w, b)) in layers.iter().enumerate() {
            let mut z = h.dot(&w.t());
            for mut row in z.rows_mut() {
                for (zi, bi) in row.iter_mut().zip(b.iter()) {
                    *zi += bi;
                }
            }
            inputs.push(h);
            if l < last {
                let act = self.activation;
                h = z.mapv(|v| act.apply(v));
            } else {
                h = z.clone();
            }
            pre.push(z);
        }
        let output = h;

        let scale = 1.0 / (batch * d) as f64;
        let mut loss = 0.0f64;
        let mut delta = Array2::<f32>::zeros((batch, d));
        for i in 0..batch {
            let wi = row_weights.map_or(1.0, |w| w[i]);
            for j in 0..d {
                let r = output[[i, j]] - target[[i, j]];
                loss += wi as f64 * (r as f64) * (r as f64);
                delta[[i, j]] = (2.0 * scale) as f32 * wi * r;
            }
        }
        loss *= scale;

        let mut grads = vec![0.0f32; self.params.len()];
        let mut offsets = Vec::with_capacity(layers.len());
        let mut offset = 0;
        for l in 0..layers.len() {
            offsets.push(offset);
            let (rows, cols) = self.layer_shape(l);
            offset += rows * cols + rows;
        }
        for l in (0..layers.len()).rev() {
            let (rows, cols) = self.layer_shape(l);
            let off = offsets[l];
            let gw = delta.t().dot(&inputs[l]);
            grads[off..off + rows * cols]
                .iter_mut()
                .zip(gw.iter())
                .for_each(|(g, v)| *g = *v);
            let gb = delta.sum_axis(Axis(0));
            grads[off + rows * cols..off + rows * cols + rows]
                .iter_mut()
                .zip(gb.iter())
                .for_each(|(g, v)| *g = *v);
            if l > 0 {
                let mut next = delta.dot(&layers[l].0);
                let act = self.activation;
                next.zip_mut_with(&pre[l - 1], |dv, &z| *dv *= act.derivative(z));
                delta = next;
            }
        }
        if !loss.is_finite() {
            return Err(Error::Numeric("non-finite loss".into()));
        }
        Ok((loss, Gradients(grads)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn embedding_zero_phase() {
        assert_eq!(timestep_embed(0, 20, 4).unwrap(), vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn embedding_single_frequency_at_end() {
        let e = timestep_embed(20, 20, 2).unwrap();
        assert!((e[0] - 0.84147).abs() < 1e-5);
        assert!((e[1] - 0.54030).abs() < 1e-5);
    }

    #[test]
    fn embedding_is_deterministic() {
        let a = timestep_embed(7, 13, 16).unwrap();
        let b = timestep_embed(7, 13, 16).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn embedding_rejects_bad_arguments() {
        assert!(timestep_embed(0, 20, 3).is_err());
        assert!(timestep_embed(0, 0, 4).is_err());
        assert!(timestep_embed(21, 20, 4).is_err());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let net = Mlp::zeros(&[6, 8, 8, 2], Activation::Silu, 4).unwrap();
        let x = array![[1.0f32, -2.0], [0.5, 3.0]];
        let y = net.forward(&[0, 5], 10, x.view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_x_through() {
        // Single layer, input [x0, x1, e0, e1] -> [x0, x1].
        let mut params = vec![0.0f32; 2 * 4 + 2];
        params[0] = 1.0;
        params[4 + 1] = 1.0;
        let net = Mlp::from_parts(&[4, 2], Activation::Tanh, 2, params).unwrap();
        let x = array![[0.25f32, -7.0]];
        let y = net.forward_at(3, 10, x.view()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn shape_mismatch_is_invalid_argument() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::toy(2, 8, 3, 4, Activation::Silu, &mut rng).unwrap();
        let x = Array2::<f32>::zeros((3, 3));
        assert!(matches!(
            net.forward_at(0, 10, x.view()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn nan_input_is_numeric_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::toy(2, 8, 3, 4, Activation::Silu, &mut rng).unwrap();
        let x = array![[f32::NAN, 0.0]];
        let t = array![[0.0f32, 0.0]];
        assert!(matches!(
            net.mse_grad(&[0], 10, x.view(), t.view()),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn residual_free_target_has_zero_loss_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::toy(2, 16, 3, 4, Activation::Silu, &mut rng).unwrap();
        let x = array![[0.1f32, 0.2], [-1.0, 0.7], [2.0, -0.3]];
        let steps = [0, 4, 9];
        let y = net.forward(&steps, 10, x.view()).unwrap();
        let (loss, g) = net.mse_grad(&steps, 10, x.view(), y.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_scales_quadratically_with_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::toy(2, 16, 3, 4, Activation::Silu, &mut rng).unwrap();
        let x = array![[0.1f32, 0.2], [-1.0, 0.7]];
        let steps = [1, 2];
        let y = net.forward(&steps, 10, x.view()).unwrap();
        let offset = array![[0.5f32, -0.25], [1.0, 0.125]];
        let t1 = &y - &offset;
        let t3 = &y - &(&offset * 3.0);
        let (l1, _) = net.mse_grad(&steps, 10, x.view(), t1.view()).unwrap();
        let (l3, _) = net.mse_grad(&steps, 10, x.view(), t3.view()).unwrap();
        assert!((l3 / l1 - 9.0).abs() < 1e-4, "ratio {}", l3 / l1);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::toy(3, 32, 4, 8, Activation::Silu, &mut rng).unwrap();
        let x = Array2::from_shape_fn((17, 3), |(i, j)| (i as f32 * 0.3 - j as f32).sin());
        let a = net.forward_at(2, 20, x.view()).unwrap();
        let b = net.forward_at(2, 20, x.view()).unwrap();
        assert_eq!(a, b);
    }
}
