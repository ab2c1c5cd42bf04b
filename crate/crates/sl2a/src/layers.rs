//! Standard differentiable layers: dense linear, low-rank linear, fixed
//! activations, layer normalization, and Fourier positional encoding.
//!
//! Layers operate on batches: inputs are `(rows, features)` matrices. Forward
//! caches what backward needs; backward consumes the cache, so a stale second
//! backward is rejected as a usage error.

use crate::gradcheck::Differentiable;
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::{Error, Result};

/// Weight initialization schemes for [`Linear`].
#[derive(Debug, Clone, Copy)]
pub enum LinearInit {
    /// Fan-in scaled uniform(-sqrt(6/in), sqrt(6/in)); the default for
    /// ReLU-family stacks.
    HeUniform,
    /// uniform(-1/in, 1/in), for the first layer of a sine network.
    SirenFirst,
    /// uniform(-sqrt(6/in)/omega0, sqrt(6/in)/omega0) for sine hidden layers.
    SirenHidden { omega0: f64 },
    Zeros,
}

fn init_weights(rows: usize, cols: usize, init: LinearInit, rng: &mut Rng) -> Matrix {
    let fan_in = cols as f64;
    let bound = match init {
        LinearInit::HeUniform => (6.0 / fan_in).sqrt(),
        LinearInit::SirenFirst => 1.0 / fan_in,
        LinearInit::SirenHidden { omega0 } => (6.0 / fan_in).sqrt() / omega0,
        LinearInit::Zeros => 0.0,
    };
    Matrix::from_fn(rows, cols, |_, _| if bound == 0.0 { 0.0 } else { rng.uniform(-bound, bound) })
        .expect("finite init bound")
}

/// Dense affine map `y = x W^T + b` with weights of shape `(out, in)`.
#[derive(Debug, Clone)]
pub struct Linear {
    weights: Matrix,
    bias: Vec<f64>,
    grad_weights: Matrix,
    grad_bias: Vec<f64>,
    cache: Option<Matrix>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, init: LinearInit, rng: &mut Rng) -> Result<Linear> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("linear layer dims must be > 0".into()));
        }
        Ok(Linear {
            weights: init_weights(out_dim, in_dim, init, rng),
            bias: vec![0.0; out_dim],
            grad_weights: Matrix::zeros(out_dim, in_dim),
            grad_bias: vec![0.0; out_dim],
            cache: None,
        })
    }

    /// Builds a layer from explicit weights/bias (tests, modulation-identity
    /// comparisons).
    pub fn from_parts(weights: Matrix, bias: Vec<f64>) -> Result<Linear> {
        if bias.len() != weights.rows() {
            return Err(Error::Shape(format!(
                "bias length {} vs {} output rows",
                bias.len(),
                weights.rows()
            )));
        }
        let (out_dim, in_dim) = weights.shape();
        Ok(Linear {
            weights,
            bias,
            grad_weights: Matrix::zeros(out_dim, in_dim),
            grad_bias: vec![0.0; out_dim],
            cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

impl Differentiable for Linear {
    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "linear forward: input width {} vs layer in_dim {}",
                x.cols(),
                self.in_dim()
            )));
        }
        let out = x.matmul_nt(&self.weights)?.add_row_broadcast(&self.bias)?;
        self.cache = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("linear backward without matching forward".into()))?;
        if grad_out.cols() != self.out_dim() || grad_out.rows() != x.rows() {
            return Err(Error::Shape(format!(
                "linear backward: grad shape {:?} vs output ({}, {})",
                grad_out.shape(),
                x.rows(),
                self.out_dim()
            )));
        }
        self.grad_weights = self.grad_weights.add(&grad_out.matmul_tn(&x)?)?;
        for (gb, s) in self.grad_bias.iter_mut().zip(grad_out.col_sums()) {
            *gb += s;
        }
        grad_out.matmul(&self.weights)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        f(self.weights.as_mut_slice(), self.grad_weights.as_mut_slice());
        f(&mut self.bias, &mut self.grad_bias);
    }

    fn param_count(&self) -> usize {
        self.in_dim() * self.out_dim() + self.out_dim()
    }
}

/// Factored affine map `y = x (U V)^T + b` with `U: (out, r)`, `V: (r, in)`,
/// evaluated as two thin products.
///
/// `rank` may exceed `min(in, out)`; the factorization is still well defined,
/// it just stops being a compression. Only `rank == 0` is rejected.
#[derive(Debug, Clone)]
pub struct LowRankLinear {
    u: Matrix,
    v: Matrix,
    bias: Vec<f64>,
    grad_u: Matrix,
    grad_v: Matrix,
    grad_bias: Vec<f64>,
    /// (input, input * V^T)
    cache: Option<(Matrix, Matrix)>,
}

impl LowRankLinear {
    pub fn new(in_dim: usize, out_dim: usize, rank: usize, rng: &mut Rng) -> Result<LowRankLinear> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("low-rank layer dims must be > 0".into()));
        }
        if rank == 0 {
            return Err(Error::Config("low-rank layer rank must be > 0".into()));
        }
        Ok(LowRankLinear {
            u: init_weights(out_dim, rank, LinearInit::HeUniform, rng),
            v: init_weights(rank, in_dim, LinearInit::HeUniform, rng),
            bias: vec![0.0; out_dim],
            grad_u: Matrix::zeros(out_dim, rank),
            grad_v: Matrix::zeros(rank, in_dim),
            grad_bias: vec![0.0; out_dim],
            cache: None,
        })
    }

    pub fn from_parts(u: Matrix, v: Matrix, bias: Vec<f64>) -> Result<LowRankLinear> {
        if u.cols() != v.rows() {
            return Err(Error::Shape(format!(
                "low-rank factors disagree on rank: U is {:?}, V is {:?}",
                u.shape(),
                v.shape()
            )));
        }
        if bias.len() != u.rows() {
            return Err(Error::Shape("bias length vs U rows".into()));
        }
        let (grad_u, grad_v) = (Matrix::zeros(u.rows(), u.cols()), Matrix::zeros(v.rows(), v.cols()));
        let grad_bias = vec![0.0; bias.len()];
        Ok(LowRankLinear { u, v, bias, grad_u, grad_v, grad_bias, cache: None })
    }

    pub fn in_dim(&self) -> usize {
        self.v.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.u.rows()
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    /// The dense equivalent `U V`, for oracle comparisons.
    pub fn dense_weights(&self) -> Result<Matrix> {
        self.u.matmul(&self.v)
    }
}

impl Differentiable for LowRankLinear {
    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "low-rank forward: input width {} vs in_dim {}",
                x.cols(),
                self.in_dim()
            )));
        }
        let h = x.matmul_nt(&self.v)?;
        let out = h.matmul_nt(&self.u)?.add_row_broadcast(&self.bias)?;
        self.cache = Some((x.clone(), h));
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let (x, h) = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("low-rank backward without matching forward".into()))?;
        self.grad_u = self.grad_u.add(&grad_out.matmul_tn(&h)?)?;
        let dh = grad_out.matmul(&self.u)?;
        self.grad_v = self.grad_v.add(&dh.matmul_tn(&x)?)?;
        for (gb, s) in self.grad_bias.iter_mut().zip(grad_out.col_sums()) {
            *gb += s;
        }
        dh.matmul(&self.v)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        f(self.u.as_mut_slice(), self.grad_u.as_mut_slice());
        f(self.v.as_mut_slice(), self.grad_v.as_mut_slice());
        f(&mut self.bias, &mut self.grad_bias);
    }

    fn param_count(&self) -> usize {
        self.rank() * (self.in_dim() + self.out_dim()) + self.out_dim()
    }
}

/// Fixed elementwise activations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActKind {
    Relu,
    /// sin(omega0 * x)
    Sine { omega0: f64 },
    /// exp(-(spread * x)^2)
    Gaussian { spread: f64 },
}

#[derive(Debug, Clone)]
pub struct Activation {
    kind: ActKind,
    cache: Option<Matrix>,
}

impl Activation {
    pub fn new(kind: ActKind) -> Activation {
        Activation { kind, cache: None }
    }

    pub fn kind(&self) -> ActKind {
        self.kind
    }
}

impl Differentiable for Activation {
    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let out = match self.kind {
            ActKind::Relu => x.map("relu", |v| v.max(0.0))?,
            ActKind::Sine { omega0 } => x.map("sine", |v| (omega0 * v).sin())?,
            ActKind::Gaussian { spread } => x.map("gaussian", |v| (-(spread * v).powi(2)).exp())?,
        };
        self.cache = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("activation backward without matching forward".into()))?;
        if grad_out.shape() != x.shape() {
            return Err(Error::Shape("activation backward: grad shape mismatch".into()));
        }
        let deriv = match self.kind {
            ActKind::Relu => x.map("relu'", |v| if v > 0.0 { 1.0 } else { 0.0 })?,
            ActKind::Sine { omega0 } => x.map("sine'", |v| omega0 * (omega0 * v).cos())?,
            ActKind::Gaussian { spread } => {
                x.map("gaussian'", |v| -2.0 * spread * spread * v * (-(spread * v).powi(2)).exp())?
            }
        };
        grad_out.hadamard(&deriv)
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut [f64], &mut [f64])) {}

    fn param_count(&self) -> usize {
        0
    }
}

/// Per-row standardization over features, optionally followed by a learnable
/// gain/shift. Epsilon is fixed at 1e-5.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    width: usize,
    affine: bool,
    gain: Vec<f64>,
    shift: Vec<f64>,
    grad_gain: Vec<f64>,
    grad_shift: Vec<f64>,
    /// (normalized rows, per-row 1/std)
    cache: Option<(Matrix, Vec<f64>)>,
}

pub const LAYERNORM_EPS: f64 = 1e-5;

impl LayerNorm {
    /// Layer norm with learnable gain/shift (2 * width parameters).
    pub fn new(width: usize) -> LayerNorm {
        LayerNorm {
            width,
            affine: true,
            gain: vec![1.0; width],
            shift: vec![0.0; width],
            grad_gain: vec![0.0; width],
            grad_shift: vec![0.0; width],
            cache: None,
        }
    }

    /// Pure standardization: gain/shift fixed at 1/0 and not counted as
    /// parameters.
    pub fn without_affine(width: usize) -> LayerNorm {
        LayerNorm { affine: false, ..LayerNorm::new(width) }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_affine(&self) -> bool {
        self.affine
    }
}

impl Differentiable for LayerNorm {
    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.width {
            return Err(Error::Shape(format!(
                "layernorm forward: input width {} vs {}",
                x.cols(),
                self.width
            )));
        }
        let n = self.width as f64;
        let mut normalized = Matrix::zeros(x.rows(), x.cols());
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let s = 1.0 / (var + LAYERNORM_EPS).sqrt();
            inv_std.push(s);
            for c in 0..self.width {
                normalized.set(r, c, (row[c] - mean) * s);
            }
        }
        let mut out = normalized.clone();
        if self.affine {
            for r in 0..out.rows() {
                for c in 0..self.width {
                    let v = out.get(r, c) * self.gain[c] + self.shift[c];
                    out.set(r, c, v);
                }
            }
        }
        self.cache = Some((normalized, inv_std));
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let (normalized, inv_std) = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("layernorm backward without matching forward".into()))?;
        if grad_out.shape() != normalized.shape() {
            return Err(Error::Shape("layernorm backward: grad shape mismatch".into()));
        }
        let n = self.width as f64;
        let mut grad_in = Matrix::zeros(grad_out.rows(), self.width);
        for r in 0..grad_out.rows() {
            let g = grad_out.row(r);
            let xhat = normalized.row(r);
            if self.affine {
                for c in 0..self.width {
                    self.grad_gain[c] += g[c] * xhat[c];
                    self.grad_shift[c] += g[c];
                }
            }
            // dL/dxhat = g * gain; then the standard standardization backward.
            let dxhat: Vec<f64> = (0..self.width)
                .map(|c| if self.affine { g[c] * self.gain[c] } else { g[c] })
                .collect();
            let mean_dxhat = dxhat.iter().sum::<f64>() / n;
            let mean_dxhat_xhat =
                dxhat.iter().zip(xhat).map(|(d, h)| d * h).sum::<f64>() / n;
            for c in 0..self.width {
                grad_in.set(r, c, inv_std[r] * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat));
            }
        }
        Ok(grad_in)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        if self.affine {
            f(&mut self.gain, &mut self.grad_gain);
            f(&mut self.shift, &mut self.grad_shift);
        }
    }

    fn param_count(&self) -> usize {
        if self.affine {
            2 * self.width
        } else {
            0
        }
    }
}

/// Sinusoidal positional-encoding configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FourierEncodingSpec {
    pub num_frequencies: usize,
    /// Log-scale base for the frequency ladder base^k * pi.
    pub base: f64,
    pub include_input: bool,
}

impl Default for FourierEncodingSpec {
    fn default() -> Self {
        FourierEncodingSpec { num_frequencies: 10, base: 2.0, include_input: true }
    }
}

impl FourierEncodingSpec {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        input_dim * 2 * self.num_frequencies
            + if self.include_input { input_dim } else { 0 }
    }
}

/// Fixed sinusoidal lifting: for each input dimension, `sin(base^k pi x)` and
/// `cos(base^k pi x)` for k = 0..num_frequencies-1, with the raw input
/// appended when `include_input` is set.
#[derive(Debug, Clone)]
pub struct FourierEncode {
    spec: FourierEncodingSpec,
    cache: Option<Matrix>,
}

impl FourierEncode {
    pub fn new(spec: FourierEncodingSpec) -> FourierEncode {
        FourierEncode { spec, cache: None }
    }

    pub fn spec(&self) -> &FourierEncodingSpec {
        &self.spec
    }

    fn frequency(&self, k: usize) -> f64 {
        self.spec.base.powi(k as i32) * std::f64::consts::PI
    }
}

impl Differentiable for FourierEncode {
    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let f = self.spec.num_frequencies;
        let in_dim = x.cols();
        let out_dim = self.spec.output_dim(in_dim);
        let mut out = Matrix::zeros(x.rows(), out_dim);
        for r in 0..x.rows() {
            for j in 0..in_dim {
                let v = x.get(r, j);
                for k in 0..f {
                    let w = self.frequency(k) * v;
                    out.set(r, (j * f + k) * 2, w.sin());
                    out.set(r, (j * f + k) * 2 + 1, w.cos());
                }
                if self.spec.include_input {
                    out.set(r, in_dim * 2 * f + j, v);
                }
            }
        }
        self.cache = Some(x.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("fourier backward without matching forward".into()))?;
        let f = self.spec.num_frequencies;
        let in_dim = x.cols();
        if grad_out.cols() != self.spec.output_dim(in_dim) || grad_out.rows() != x.rows() {
            return Err(Error::Shape("fourier backward: grad shape mismatch".into()));
        }
        let mut grad_in = Matrix::zeros(x.rows(), in_dim);
        for r in 0..x.rows() {
            for j in 0..in_dim {
                let v = x.get(r, j);
                let mut acc = 0.0;
                for k in 0..f {
                    let freq = self.frequency(k);
                    let w = freq * v;
                    acc += grad_out.get(r, (j * f + k) * 2) * freq * w.cos();
                    acc -= grad_out.get(r, (j * f + k) * 2 + 1) * freq * w.sin();
                }
                if self.spec.include_input {
                    acc += grad_out.get(r, in_dim * 2 * f + j);
                }
                grad_in.set(r, j, acc);
            }
        }
        Ok(grad_in)
    }

    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut [f64], &mut [f64])) {}

    fn param_count(&self) -> usize {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{gradient_check, zero_grads};

    fn random_input(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.uniform(-1.0, 1.0)).unwrap()
    }

    /// Naive per-entry affine oracle for the linear forward.
    fn naive_linear(x: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), w.rows());
        for r in 0..x.rows() {
            for o in 0..w.rows() {
                let mut s = b[o];
                for i in 0..x.cols() {
                    s += x.get(r, i) * w.get(o, i);
                }
                out.set(r, o, s);
            }
        }
        out
    }

    #[test]
    fn linear_identity_weights_pass_input_through() {
        let mut l = Linear::from_parts(Matrix::identity(4), vec![0.0; 4]).unwrap();
        let mut rng = Rng::new(3);
        let x = random_input(&mut rng, 5, 4);
        assert_eq!(l.forward(&x).unwrap(), x);
    }

    #[test]
    fn linear_zero_weights_yield_bias_rows() {
        let mut l = Linear::from_parts(Matrix::zeros(3, 2), vec![1.5, -0.5, 2.0]).unwrap();
        let x = Matrix::ones(4, 2);
        let out = l.forward(&x).unwrap();
        for r in 0..4 {
            assert_eq!(out.row(r), &[1.5, -0.5, 2.0]);
        }
    }

    #[test]
    fn linear_matches_naive_oracle() {
        let mut rng = Rng::new(5);
        let mut l = Linear::new(7, 4, LinearInit::HeUniform, &mut rng).unwrap();
        let x = random_input(&mut rng, 6, 7);
        let out = l.forward(&x).unwrap();
        let oracle = naive_linear(&x, l.weights(), l.bias());
        for (a, b) in out.as_slice().iter().zip(oracle.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_grad_passes_through_identity_weights() {
        let mut l = Linear::from_parts(Matrix::identity(3), vec![0.0; 3]).unwrap();
        let mut rng = Rng::new(8);
        let x = random_input(&mut rng, 4, 3);
        let _ = l.forward(&x).unwrap();
        let g = random_input(&mut rng, 4, 3);
        let gx = l.backward(&g).unwrap();
        assert_eq!(gx, g);
    }

    #[test]
    fn linear_zero_grad_out_gives_zero_param_grads() {
        let mut rng = Rng::new(9);
        let mut l = Linear::new(3, 2, LinearInit::HeUniform, &mut rng).unwrap();
        let x = random_input(&mut rng, 4, 3);
        let _ = l.forward(&x).unwrap();
        zero_grads(&mut l);
        let _ = l.forward(&x).unwrap();
        let _ = l.backward(&Matrix::zeros(4, 2)).unwrap();
        l.visit_params(&mut |_, g| assert!(g.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn backward_without_forward_is_usage_error() {
        let mut rng = Rng::new(1);
        let mut l = Linear::new(2, 2, LinearInit::HeUniform, &mut rng).unwrap();
        assert!(matches!(l.backward(&Matrix::zeros(1, 2)), Err(Error::Usage(_))));
    }

    #[test]
    fn cache_is_consumed_by_backward() {
        let mut rng = Rng::new(2);
        let mut l = Linear::new(2, 2, LinearInit::HeUniform, &mut rng).unwrap();
        let x = random_input(&mut rng, 3, 2);
        let _ = l.forward(&x).unwrap();
        let _ = l.backward(&Matrix::zeros(3, 2)).unwrap();
        assert!(matches!(l.backward(&Matrix::zeros(3, 2)), Err(Error::Usage(_))));
    }

    #[test]
    fn forward_after_backward_is_unchanged() {
        let mut rng = Rng::new(21);
        let mut l = Linear::new(3, 3, LinearInit::HeUniform, &mut rng).unwrap();
        let x = random_input(&mut rng, 4, 3);
        let first = l.forward(&x).unwrap();
        let _ = l.backward(&Matrix::ones(4, 3)).unwrap();
        let second = l.forward(&x).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn lowrank_full_rank_identity_v_matches_dense() {
        // V = identity makes U the dense weight matrix.
        let mut rng = Rng::new(11);
        let u = random_input(&mut rng, 3, 4);
        let mut lr = LowRankLinear::from_parts(u.clone(), Matrix::identity(4), vec![0.0; 3]).unwrap();
        let mut dense = Linear::from_parts(u, vec![0.0; 3]).unwrap();
        let x = random_input(&mut rng, 5, 4);
        let a = lr.forward(&x).unwrap();
        let b = dense.forward(&x).unwrap();
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn lowrank_matches_explicit_dense_product() {
        let mut rng = Rng::new(12);
        let mut lr = LowRankLinear::new(6, 5, 2, &mut rng).unwrap();
        let x = random_input(&mut rng, 7, 6);
        let out = lr.forward(&x).unwrap();
        let dense = naive_linear(&x, &lr.dense_weights().unwrap(), &vec![0.0; 5]);
        for (a, b) in out.as_slice().iter().zip(dense.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lowrank_param_count_formula() {
        let mut rng = Rng::new(13);
        let lr = LowRankLinear::new(256, 256, 32, &mut rng).unwrap();
        assert_eq!(lr.param_count(), 32 * (256 + 256) + 256);
        assert_eq!(lr.param_count(), 16_384 + 256);
    }

    #[test]
    fn lowrank_zero_rank_rejected() {
        let mut rng = Rng::new(14);
        assert!(matches!(LowRankLinear::new(4, 4, 0, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn activation_analytic_values() {
        let x = Matrix::from_vec(1, 2, vec![-2.0, 3.0]).unwrap();
        let mut relu = Activation::new(ActKind::Relu);
        assert_eq!(relu.forward(&x).unwrap().as_slice(), &[0.0, 3.0]);
        let g = Matrix::ones(1, 2);
        assert_eq!(relu.backward(&g).unwrap().as_slice(), &[0.0, 1.0]);

        let zero = Matrix::zeros(1, 1);
        let mut sine = Activation::new(ActKind::Sine { omega0: 30.0 });
        assert_eq!(sine.forward(&zero).unwrap().get(0, 0), 0.0);
        assert_eq!(sine.backward(&Matrix::ones(1, 1)).unwrap().get(0, 0), 30.0);

        let mut gauss = Activation::new(ActKind::Gaussian { spread: 1.0 });
        assert_eq!(gauss.forward(&zero).unwrap().get(0, 0), 1.0);
        assert_eq!(gauss.backward(&Matrix::ones(1, 1)).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn layernorm_constant_row_maps_to_shift() {
        let mut ln = LayerNorm::new(4);
        // Shift is initialized to zero; a zero-variance row standardizes to
        // zero under the epsilon guard.
        let x = Matrix::from_vec(1, 4, vec![3.0; 4]).unwrap();
        let out = ln.forward(&x).unwrap();
        for v in out.as_slice() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn layernorm_standardizes_rows() {
        let mut rng = Rng::new(15);
        let mut ln = LayerNorm::new(64);
        let x = random_input(&mut rng, 32, 64);
        let out = ln.forward(&x).unwrap();
        for r in 0..out.rows() {
            let row = out.row(r);
            let mean = row.iter().sum::<f64>() / 64.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0;
            assert!(mean.abs() < 1e-6, "row mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "row var {var}");
        }
    }

    #[test]
    fn fourier_analytic_values() {
        let spec = FourierEncodingSpec { num_frequencies: 1, base: 2.0, include_input: false };
        let mut pe = FourierEncode::new(spec);
        let zero = Matrix::zeros(1, 1);
        assert_eq!(pe.forward(&zero).unwrap().as_slice(), &[0.0, 1.0]);
        let half = Matrix::from_vec(1, 1, vec![0.5]).unwrap();
        let out = pe.forward(&half).unwrap();
        assert!((out.get(0, 0) - 1.0).abs() < 1e-15);
        assert!(out.get(0, 1).abs() < 1e-15);
    }

    #[test]
    fn fourier_output_width_formula() {
        let spec = FourierEncodingSpec { num_frequencies: 10, base: 2.0, include_input: true };
        assert_eq!(spec.output_dim(2), 42);
        let mut pe = FourierEncode::new(spec);
        let x = Matrix::zeros(3, 2);
        assert_eq!(pe.forward(&x).unwrap().cols(), 42);
    }

    #[test]
    fn all_layers_pass_gradient_check_over_seeds() {
        for seed in 0..10u64 {
            let mut rng = Rng::new(1000 + seed);
            let x = random_input(&mut rng, 4, 5);

            let mut linear = Linear::new(5, 3, LinearInit::HeUniform, &mut rng).unwrap();
            let r = gradient_check(&mut linear, &x, 1e-5, 1e-4, &mut rng).unwrap();
            assert!(r.pass, "linear seed {seed}: {}", r.worst_entry);

            let mut lowrank = LowRankLinear::new(5, 4, 2, &mut rng).unwrap();
            let r = gradient_check(&mut lowrank, &x, 1e-5, 1e-4, &mut rng).unwrap();
            assert!(r.pass, "lowrank seed {seed}: {}", r.worst_entry);

            for kind in [
                ActKind::Relu,
                ActKind::Sine { omega0: 30.0 },
                ActKind::Gaussian { spread: 10.0 },
            ] {
                let mut act = Activation::new(kind);
                let r = gradient_check(&mut act, &x, 1e-5, 1e-4, &mut rng).unwrap();
                assert!(r.pass, "{kind:?} seed {seed}: {}", r.worst_entry);
            }

            let mut ln = LayerNorm::new(5);
            let r = gradient_check(&mut ln, &x, 1e-5, 1e-4, &mut rng).unwrap();
            assert!(r.pass, "layernorm seed {seed}: {}", r.worst_entry);

            let mut pe = FourierEncode::new(FourierEncodingSpec {
                num_frequencies: 3,
                base: 2.0,
                include_input: true,
            });
            let r = gradient_check(&mut pe, &x, 1e-5, 1e-4, &mut rng).unwrap();
            assert!(r.pass, "fourier seed {seed}: {}", r.worst_entry);
        }
    }

    #[test]
    fn zero_weight_linear_zero_input_has_zero_gradients() {
        let mut rng = Rng::new(77);
        let mut l = Linear::new(3, 3, LinearInit::Zeros, &mut rng).unwrap();
        let x = Matrix::zeros(2, 3);
        let report = gradient_check(&mut l, &x, 1e-5, 1e-4, &mut rng).unwrap();
        assert!(report.pass);
        // Every input gradient is exactly zero both ways.
        let _ = l.forward(&x).unwrap();
        let gin = l.backward(&Matrix::ones(2, 3)).unwrap();
        assert!(gin.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn param_count_formulas() {
        let mut rng = Rng::new(16);
        let linear = Linear::new(7, 5, LinearInit::HeUniform, &mut rng).unwrap();
        assert_eq!(linear.param_count(), 7 * 5 + 5);
        let ln = LayerNorm::new(9);
        assert_eq!(ln.param_count(), 18);
        let ln2 = LayerNorm::without_affine(9);
        assert_eq!(ln2.param_count(), 0);
    }

    #[test]
    fn siren_hidden_preactivation_std_near_unity() {
        // Width-256 hidden layer with sine initialization: the pre-activation
        // (omega0 * linear output) should have standard deviation within
        // [0.5, 2.0] for uniform [-1, 1] inputs.
        let omega0 = 30.0;
        let mut rng = Rng::new(17);
        let mut l = Linear::new(256, 256, LinearInit::SirenHidden { omega0 }, &mut rng).unwrap();
        let x = random_input(&mut rng, 40, 256);
        let pre = l.forward(&x).unwrap().scale(omega0).unwrap();
        let mean = pre.mean();
        let var = pre.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / pre.len() as f64;
        let std = var.sqrt();
        assert!((0.5..=2.0).contains(&std), "pre-activation std {std}");
    }
}
