//! Point-wise layers on `rows x channels` feature arrays, with exact
//! backward passes.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::rng::Xorshift64Star;
use crate::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Learnable,
    /// Running statistics: serialized, never differentiated.
    Buffer,
}

/// Callback receiving `(path, shape, values, role)`.
pub type VisitFn<'a> = dyn FnMut(&str, &[usize], &[f64], ParamRole) + 'a;
pub type VisitMutFn<'a> = dyn FnMut(&str, &[usize], &mut [f64], ParamRole) + 'a;

/// Visitor over named flat parameter arrays.
pub trait Visit {
    fn visit(&self, prefix: &str, f: &mut VisitFn<'_>);
    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMutFn<'_>);
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Affine map `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform weights in `+-scale / sqrt(fan_in)`, zero bias.
    pub fn init(input: usize, output: usize, scale: f64, rng: &mut Xorshift64Star) -> Self {
        let bound = scale / (input.max(1) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((input, output), || rng.uniform(-bound, bound));
        Self {
            weight,
            bias: Array1::zeros(output),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            weight: Array2::eye(n),
            bias: Array1::zeros(n),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    /// Returns `dx` and accumulates into `grad`.
    pub fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        dy: ArrayView2<'_, f64>,
        grad: &mut Linear,
    ) -> Array2<f64> {
        grad.weight += &x.t().dot(&dy);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.t())
    }
}

impl Visit for Linear {
    fn visit(&self, prefix: &str, f: &mut VisitFn<'_>) {
        f(
            &join(prefix, "weight"),
            self.weight.shape(),
            self.weight.as_slice().unwrap(),
            ParamRole::Learnable,
        );
        f(
            &join(prefix, "bias"),
            self.bias.shape(),
            self.bias.as_slice().unwrap(),
            ParamRole::Learnable,
        );
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMutFn<'_>) {
        let shape = self.weight.shape().to_vec();
        f(
            &join(prefix, "weight"),
            &shape,
            self.weight.as_slice_mut().unwrap(),
            ParamRole::Learnable,
        );
        let shape = self.bias.shape().to_vec();
        f(
            &join(prefix, "bias"),
            &shape,
            self.bias.as_slice_mut().unwrap(),
            ParamRole::Learnable,
        );
    }
}

/// Per-channel batch normalization over all rows of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Batch statistics (biased variance), normalized output and cache.
    pub fn forward_train(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, BatchNormCache)> {
        let m = x.nrows();
        if m < 2 {
            return Err(Error::DegenerateBatch(m));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let centered = &x - &mean;
        let var = centered
            .mapv(|d| d * d)
            .mean_axis(Axis(0))
            .expect("non-empty");
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
        let normalized = centered * &inv_std;
        let y = &normalized * &self.gamma + &self.beta;
        Ok((
            y,
            BatchNormCache {
                normalized,
                inv_std,
                mean,
                var,
            },
        ))
    }

    pub fn forward_infer(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let scale = &self.gamma / &self.running_var.mapv(|v| (v + BN_EPSILON).sqrt());
        let shift = &self.beta - &(&self.running_mean * &scale);
        &x * &scale + &shift
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache,
        dy: ArrayView2<'_, f64>,
        grad: &mut BatchNorm,
    ) -> Array2<f64> {
        let m = dy.nrows() as f64;
        grad.gamma += &(&dy * &cache.normalized).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let dxhat = &dy * &self.gamma;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.normalized).sum_axis(Axis(0));
        let mut dx = &dxhat * m - &sum_dxhat - &(&cache.normalized * &sum_dxhat_xhat);
        dx *= &(&cache.inv_std / m);
        dx
    }

    pub fn update_running(&mut self, cache: &BatchNormCache) {
        self.running_mean = &self.running_mean * (1.0 - BN_MOMENTUM) + &cache.mean * BN_MOMENTUM;
        self.running_var = &self.running_var * (1.0 - BN_MOMENTUM) + &cache.var * BN_MOMENTUM;
    }
}

impl Visit for BatchNorm {
    fn visit(&self, prefix: &str, f: &mut VisitFn<'_>) {
        for (name, a, role) in [
            ("gamma", &self.gamma, ParamRole::Learnable),
            ("beta", &self.beta, ParamRole::Learnable),
            ("running_mean", &self.running_mean, ParamRole::Buffer),
            ("running_var", &self.running_var, ParamRole::Buffer),
        ] {
            f(&join(prefix, name), a.shape(), a.as_slice().unwrap(), role);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMutFn<'_>) {
        for (name, a, role) in [
            ("gamma", &mut self.gamma, ParamRole::Learnable),
            ("beta", &mut self.beta, ParamRole::Learnable),
            ("running_mean", &mut self.running_mean, ParamRole::Buffer),
            ("running_var", &mut self.running_var, ParamRole::Buffer),
        ] {
            let shape = a.shape().to_vec();
            f(&join(prefix, name), &shape, a.as_slice_mut().unwrap(), role);
        }
    }
}

pub fn relu(x: Array2<f64>) -> Array2<f64> {
    x.mapv_into(|v| v.max(0.0))
}

/// Gradient through ReLU given its output.
pub fn relu_backward(output: &Array2<f64>, dy: Array2<f64>) -> Array2<f64> {
    let mut dy = dy;
    dy.zip_mut_with(output, |d, &o| {
        if o <= 0.0 {
            *d = 0.0;
        }
    });
    dy
}

/// Mean over each image's `points` consecutive rows.
pub fn global_avg_pool(x: ArrayView2<'_, f64>, points: usize) -> Array2<f64> {
    let images = x.nrows() / points;
    let mut out = Array2::zeros((images, x.ncols()));
    for (b, mut row) in out.rows_mut().into_iter().enumerate() {
        let block = x.slice(ndarray::s![b * points..(b + 1) * points, ..]);
        row.assign(&block.mean_axis(Axis(0)).expect("points > 0"));
    }
    out
}

pub fn global_avg_pool_backward(dy: ArrayView2<'_, f64>, points: usize) -> Array2<f64> {
    let scale = 1.0 / points as f64;
    let mut dx = Array2::zeros((dy.nrows() * points, dy.ncols()));
    for (b, row) in dy.rows().into_iter().enumerate() {
        for p in 0..points {
            dx.row_mut(b * points + p).assign(&(&row * scale));
        }
    }
    dx
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax cross-entropy with max subtraction.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    lse - logits[label]
}

/// `softmax(logits) - onehot(label)`
pub fn cross_entropy_grad(logits: &[f64], label: usize) -> Vec<f64> {
    let mut g = softmax(logits);
    g[label] -= 1.0;
    g
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}
