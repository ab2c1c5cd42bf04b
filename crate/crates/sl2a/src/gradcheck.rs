//! The differentiable-layer contract and a central-difference gradient checker.
//!
//! Every layer (and the assembled network) implements [`Differentiable`]:
//! `forward` caches whatever `backward` needs, `backward` consumes that cache,
//! returns the gradient with respect to the input, and accumulates parameter
//! gradients in place. [`gradient_check`] probes an implementation against
//! central finite differences of a scalar loss and is the ground truth for
//! every backward pass in the crate.

use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::{Error, Result};

/// A differentiable map with owned parameters and explicit forward/backward.
pub trait Differentiable {
    /// Computes the output for `x`, caching activations for `backward`.
    fn forward(&mut self, x: &Matrix) -> Result<Matrix>;

    /// Consumes the forward cache: accumulates parameter gradients and returns
    /// the gradient with respect to the input. Calling it twice without an
    /// intervening `forward` is a usage error.
    fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix>;

    /// Visits each (parameters, gradients) pair in a fixed order. The two
    /// slices always have equal length.
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64]));

    /// Closed-form parameter count; asserted against the visited slices in
    /// tests.
    fn param_count(&self) -> usize;
}

/// Sets all accumulated parameter gradients to zero.
pub fn zero_grads(layer: &mut dyn Differentiable) {
    layer.visit_params(&mut |_, g| g.fill(0.0));
}

/// Copies all parameters into one flat vector (visit order).
pub fn flatten_params(layer: &mut dyn Differentiable) -> Vec<f64> {
    let mut out = Vec::with_capacity(layer.param_count());
    layer.visit_params(&mut |p, _| out.extend_from_slice(p));
    out
}

/// Writes a flat vector produced by [`flatten_params`] back into the layer.
pub fn load_flat_params(layer: &mut dyn Differentiable, flat: &[f64]) -> Result<()> {
    if flat.len() != layer.param_count() {
        return Err(Error::Shape(format!(
            "flat parameter vector has {} values, layer expects {}",
            flat.len(),
            layer.param_count()
        )));
    }
    let mut offset = 0;
    layer.visit_params(&mut |p, _| {
        p.copy_from_slice(&flat[offset..offset + p.len()]);
        offset += p.len();
    });
    Ok(())
}

/// Outcome of a finite-difference check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error over all parameter and input entries.
    pub max_rel_err: f64,
    pub pass: bool,
    /// Where the worst error occurred, for diagnostics.
    pub worst_entry: String,
}

/// Relative error with an absolute floor: entries whose true magnitude sits
/// below the floor are compared absolutely, since central differences with
/// step ~1e-5 cannot resolve relative error there.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Checks analytic gradients against central finite differences.
///
/// The probe loss is `L = sum(C ⊙ layer(x))` for fixed random weights `C`, so
/// the analytic gradients are one `forward` + one `backward(C)`, and the
/// numeric ones are two forwards per perturbed entry. Both parameter and
/// input gradients are checked. Non-finite gradients are a numerical error.
pub fn gradient_check(
    layer: &mut dyn Differentiable,
    input: &Matrix,
    step: f64,
    tolerance: f64,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    if step <= 0.0 {
        return Err(Error::Config(format!("gradient_check step must be > 0, got {step}")));
    }

    let out = layer.forward(input)?;
    let probe = Matrix::from_fn(out.rows(), out.cols(), |_, _| rng.normal(0.0, 1.0))?;

    zero_grads(layer);
    // Re-run forward so the cache is fresh after the shape-probing call.
    let _ = layer.forward(input)?;
    let input_grad = layer.backward(&probe)?;
    input_grad.ensure_finite("gradient_check: analytic input gradient")?;

    let mut analytic_params = Vec::with_capacity(layer.param_count());
    layer.visit_params(&mut |_, g| analytic_params.extend_from_slice(g));
    if !analytic_params.iter().all(|g| g.is_finite()) {
        return Err(Error::Numerical("gradient_check: non-finite parameter gradient".into()));
    }

    let probe_loss = |layer: &mut dyn Differentiable, x: &Matrix| -> Result<f64> {
        let out = layer.forward(x)?;
        Ok(out
            .as_slice()
            .iter()
            .zip(probe.as_slice())
            .map(|(o, c)| o * c)
            .sum())
    };

    let mut max_rel = 0.0f64;
    let mut worst = String::from("none");
    let observe = |analytic: f64, numeric: f64, what: String, max_rel: &mut f64, worst: &mut String| {
        let e = rel_err(analytic, numeric);
        if e > *max_rel {
            *max_rel = e;
            *worst = format!("{what}: analytic {analytic:.6e} vs numeric {numeric:.6e}");
        }
    };

    // Parameters: perturb one entry at a time through the visitor.
    let param_total = analytic_params.len();
    for idx in 0..param_total {
        let mut plus = 0.0;
        let mut minus = 0.0;
        for (sign, target) in [(step, &mut plus), (-step, &mut minus)] {
            let mut cursor = 0;
            layer.visit_params(&mut |p, _| {
                if idx >= cursor && idx < cursor + p.len() {
                    p[idx - cursor] += sign;
                }
                cursor += p.len();
            });
            *target = probe_loss(layer, input)?;
            let mut cursor = 0;
            layer.visit_params(&mut |p, _| {
                if idx >= cursor && idx < cursor + p.len() {
                    p[idx - cursor] -= sign;
                }
                cursor += p.len();
            });
        }
        let numeric = (plus - minus) / (2.0 * step);
        observe(analytic_params[idx], numeric, format!("param[{idx}]"), &mut max_rel, &mut worst);
    }

    // Input entries.
    let mut x = input.clone();
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let orig = x.get(r, c);
            x.set(r, c, orig + step);
            let plus = probe_loss(layer, &x)?;
            x.set(r, c, orig - step);
            let minus = probe_loss(layer, &x)?;
            x.set(r, c, orig);
            let numeric = (plus - minus) / (2.0 * step);
            observe(
                input_grad.get(r, c),
                numeric,
                format!("input[{r},{c}]"),
                &mut max_rel,
                &mut worst,
            );
        }
    }

    Ok(GradCheckReport { max_rel_err: max_rel, pass: max_rel < tolerance, worst_entry: worst })
}
