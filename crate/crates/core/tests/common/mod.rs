//! Shared test oracles, written against the public layout only.
#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use sblab::nn::{Activation, Mlp};
use sblab::rng;

/// Network output in f64 from a flat parameter vector laid out as
/// `W_0 (rows x cols, row-major), b_0, W_1, b_1, ...`, input `[x, embed(k/n)]`.
pub fn forward_f64(net: &Mlp, params: &[f64], k: usize, n: usize, x: &[f64]) -> Vec<f64> {
    let e = net.embed_dim();
    let half = e / 2;
    let tau = k as f64 / n as f64;
    let mut h: Vec<f64> = x.to_vec();
    for i in 0..half {
        let f = if half <= 1 { 1.0 } else { 1000f64.powf(i as f64 / (half - 1) as f64) };
        h.push((f * tau).sin());
    }
    for i in 0..half {
        let f = if half <= 1 { 1.0 } else { 1000f64.powf(i as f64 / (half - 1) as f64) };
        h.push((f * tau).cos());
    }
    let mut off = 0;
    for l in 0..net.n_layers() {
        let (rows, cols) = net.layer_shape(l);
        assert_eq!(cols, h.len());
        let mut z = vec![0.0; rows];
        for (r, zr) in z.iter_mut().enumerate() {
            let w = &params[off + r * cols..off + (r + 1) * cols];
            *zr = w.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + params[off + rows * cols + r];
        }
        off += rows * cols + rows;
        if l + 1 < net.n_layers() {
            for v in z.iter_mut() {
                *v = match net.activation() {
                    Activation::Silu => *v / (1.0 + (-*v).exp()),
                    Activation::Tanh => v.tanh(),
                    Activation::Relu => v.max(0.0),
                };
            }
        }
        h = z;
    }
    h
}

/// Mean squared error over rows and coordinates.
pub fn mse_f64(net: &Mlp, params: &[f64], steps: &[usize], n: usize, x: &Array2<f32>, t: &Array2<f32>) -> f64 {
    let d = x.ncols();
    let mut acc = 0.0;
    for (i, &k) in steps.iter().enumerate() {
        let xi: Vec<f64> = x.row(i).iter().map(|&v| v as f64).collect();
        let y = forward_f64(net, params, k, n, &xi);
        for j in 0..d {
            acc += (y[j] - t[[i, j]] as f64).powi(2);
        }
    }
    acc / (steps.len() * d) as f64
}

/// Largest relative error between the network's reverse-mode gradient and
/// central differences of [`mse_f64`] over `probes` random parameters.
/// Near-zero gradients are compared on an absolute floor of `floor`.
pub fn gradient_check(net: &Mlp, probes: usize, floor: f64, seed: u64) -> f64 {
    let mut r = rng::stream(seed, 0);
    let (b, d, n) = (8, net.data_dim(), 10);
    let x = Array2::from_shape_fn((b, d), |_| r.random_range(-2.0f32..2.0));
    let t = Array2::from_shape_fn((b, d), |_| r.random_range(-2.0f32..2.0));
    let steps: Vec<usize> = (0..b).map(|_| r.random_range(0..=n)).collect();
    let (_, grads) = net.mse_grad(&steps, n, x.view(), t.view()).unwrap();
    let base: Vec<f64> = net.params().iter().map(|&p| p as f64).collect();
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let i = r.random_range(0..base.len());
        let h = 1e-6 * (1.0 + base[i].abs());
        let mut p = base.clone();
        p[i] = base[i] + h;
        let up = mse_f64(net, &p, &steps, n, &x, &t);
        p[i] = base[i] - h;
        let down = mse_f64(net, &p, &steps, n, &x, &t);
        let fd = (up - down) / (2.0 * h);
        let an = grads.as_slice()[i] as f64;
        let rel = (an - fd).abs() / fd.abs().max(an.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}
