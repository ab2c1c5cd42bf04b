//! Chebyshev polynomial basis and the learnable-activation block.
//!
//! The block maps an n-feature input to m outputs where output j is
//! `sum_i sum_{d=1..D} a[j,i,d] * T_d(x_i)`: a grid of m*n independent
//! one-dimensional functions, each a linear combination of Chebyshev
//! polynomials of degrees 1..D (no constant term). Inputs must lie in
//! [-1, 1]; the caller normalizes with tanh upstream.
//!
//! `T_d` is evaluated by the three-term recurrence; its derivative uses
//! `dT_d/dx = d * U_{d-1}(x)` with the second-kind recurrence, which stays
//! finite on the whole closed interval.

use crate::gradcheck::Differentiable;
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::{Error, Result};

/// Tolerance for the domain check: tanh keeps |x| < 1 strictly, the slack only
/// forgives rounding at the boundary.
const DOMAIN_SLACK: f64 = 1e-12;

/// First-kind Chebyshev basis of a fixed maximum degree.
#[derive(Debug, Clone, Copy)]
pub struct ChebyshevBasis {
    degree: usize,
}

impl ChebyshevBasis {
    pub fn new(degree: usize) -> Result<ChebyshevBasis> {
        if degree == 0 {
            return Err(Error::Config("chebyshev degree must be >= 1".into()));
        }
        Ok(ChebyshevBasis { degree })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Writes T_1(x)..T_D(x) into `out` via T_{d+1} = 2x T_d - T_{d-1}.
    fn eval_scalar(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.degree);
        let mut prev = 1.0; // T_0
        let mut cur = x; // T_1
        out[0] = cur;
        for slot in out.iter_mut().skip(1) {
            let next = 2.0 * x * cur - prev;
            prev = cur;
            cur = next;
            *slot = cur;
        }
    }

    /// Writes dT_1/dx .. dT_D/dx via dT_d/dx = d * U_{d-1}(x).
    fn eval_derivative_scalar(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.degree);
        let mut prev = 1.0; // U_0
        out[0] = prev; // dT_1 = 1 * U_0
        if self.degree == 1 {
            return;
        }
        let mut cur = 2.0 * x; // U_1
        out[1] = 2.0 * cur;
        for d in 3..=self.degree {
            let next = 2.0 * x * cur - prev;
            prev = cur;
            cur = next;
            out[d - 1] = d as f64 * cur;
        }
    }

    /// Stacked basis values: entry (r, c) of `x` yields T_1..T_D at columns
    /// `c*D .. c*D+D` of row r. Inputs outside [-1, 1] (beyond rounding
    /// slack) are a domain error.
    pub fn eval(&self, x: &Matrix) -> Result<Matrix> {
        let d = self.degree;
        let mut out = Matrix::zeros(x.rows(), x.cols() * d);
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                let v = x.get(r, c);
                if v.abs() > 1.0 + DOMAIN_SLACK {
                    return Err(Error::Domain(format!(
                        "chebyshev input {v} at ({r},{c}) outside [-1, 1]"
                    )));
                }
                let v = v.clamp(-1.0, 1.0);
                let row = out.as_mut_slice();
                self.eval_scalar(v, &mut row[r * x.cols() * d + c * d..][..d]);
            }
        }
        out.ensure_finite("chebyshev_eval")?;
        Ok(out)
    }

    /// Stacked derivative values with the same layout as [`Self::eval`].
    pub fn eval_derivative(&self, x: &Matrix) -> Result<Matrix> {
        let d = self.degree;
        let mut out = Matrix::zeros(x.rows(), x.cols() * d);
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                let v = x.get(r, c);
                if v.abs() > 1.0 + DOMAIN_SLACK {
                    return Err(Error::Domain(format!(
                        "chebyshev input {v} at ({r},{c}) outside [-1, 1]"
                    )));
                }
                let v = v.clamp(-1.0, 1.0);
                let row = out.as_mut_slice();
                self.eval_derivative_scalar(v, &mut row[r * x.cols() * d + c * d..][..d]);
            }
        }
        out.ensure_finite("chebyshev_eval_derivative")?;
        Ok(out)
    }
}

/// Number of coefficients in a learnable-activation block.
pub fn la_param_count(input_dim: usize, output_dim: usize, degree: usize) -> usize {
    input_dim * output_dim * degree
}

/// The learnable-activation block: m*n independent Chebyshev-parameterized
/// scalar functions, summed over inputs per output feature.
///
/// Coefficients are stored as an `(m, n*D)` matrix; row j holds the
/// coefficients of output j with input i's degrees at columns `i*D..i*D+D`.
/// There is no bias and no degree-0 term.
#[derive(Debug, Clone)]
pub struct LaBlock {
    input_dim: usize,
    output_dim: usize,
    basis: ChebyshevBasis,
    coeffs: Matrix,
    grad_coeffs: Matrix,
    /// (input, stacked basis values)
    cache: Option<(Matrix, Matrix)>,
}

impl LaBlock {
    /// Coefficients are drawn from N(0, 1/sqrt(n*D)) so the output variance
    /// stays O(1) at any degree.
    pub fn new(input_dim: usize, output_dim: usize, degree: usize, rng: &mut Rng) -> Result<LaBlock> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::Config("la block dims must be > 0".into()));
        }
        let basis = ChebyshevBasis::new(degree)?;
        let sd = 1.0 / ((input_dim * degree) as f64).sqrt();
        let coeffs = Matrix::from_fn(output_dim, input_dim * degree, |_, _| rng.normal(0.0, sd))?;
        Ok(LaBlock {
            input_dim,
            output_dim,
            basis,
            grad_coeffs: Matrix::zeros(output_dim, input_dim * degree),
            coeffs,
            cache: None,
        })
    }

    pub fn from_coeffs(input_dim: usize, output_dim: usize, degree: usize, coeffs: Matrix) -> Result<LaBlock> {
        if coeffs.shape() != (output_dim, input_dim * degree) {
            return Err(Error::Shape(format!(
                "la coefficients shape {:?} vs ({output_dim}, {})",
                coeffs.shape(),
                input_dim * degree
            )));
        }
        Ok(LaBlock {
            input_dim,
            output_dim,
            basis: ChebyshevBasis::new(degree)?,
            grad_coeffs: Matrix::zeros(output_dim, input_dim * degree),
            coeffs,
            cache: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn coeffs(&self) -> &Matrix {
        &self.coeffs
    }
}

impl Differentiable for LaBlock {
    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim {
            return Err(Error::Shape(format!(
                "la forward: input width {} vs {}",
                x.cols(),
                self.input_dim
            )));
        }
        let basis = self.basis.eval(x)?;
        let out = basis.matmul_nt(&self.coeffs)?;
        self.cache = Some((x.clone(), basis));
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let (x, basis) = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("la backward without matching forward".into()))?;
        if grad_out.cols() != self.output_dim || grad_out.rows() != x.rows() {
            return Err(Error::Shape("la backward: grad shape mismatch".into()));
        }
        // Coefficient gradients are exactly the cached basis values weighted
        // by the output gradient.
        self.grad_coeffs = self.grad_coeffs.add(&grad_out.matmul_tn(&basis)?)?;

        // Input gradient: contract (grad_out . coeffs) with the basis
        // derivative along each input's degree block.
        let g_basis = grad_out.matmul(&self.coeffs)?;
        let d_basis = self.basis.eval_derivative(&x)?;
        let d = self.degree();
        let mut grad_in = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let grow = g_basis.row(r);
            let drow = d_basis.row(r);
            for i in 0..self.input_dim {
                let mut acc = 0.0;
                for k in i * d..(i + 1) * d {
                    acc += grow[k] * drow[k];
                }
                grad_in.set(r, i, acc);
            }
        }
        Ok(grad_in)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        f(self.coeffs.as_mut_slice(), self.grad_coeffs.as_mut_slice());
    }

    fn param_count(&self) -> usize {
        la_param_count(self.input_dim, self.output_dim, self.degree())
    }
}
