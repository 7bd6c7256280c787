//! Finite-difference gradient verification.
//!
//! Rebuilds a scalar-loss graph from perturbed inputs and compares central
//! differences against the analytic backward pass. Run this on the f64
//! instantiation: f32 arithmetic cannot separate truncation noise from a
//! genuine gradient bug at the tolerances used here.

use ndarray::Array2;

use super::graph::{Graph, NodeId};
use super::Real;

/// Result of one finite-difference comparison.
#[derive(Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Compare analytic gradients of `build` (a closure producing a scalar loss
/// from grad-enabled inputs) against central differences with step `eps`.
/// Checks every coordinate when `probe_limit` is `None`, otherwise an evenly
/// strided subset per input.
///
/// Panics with a diagnostic if any relative error exceeds `tol`; relative
/// error uses max(|analytic|, |numeric|, 1e-8) as the denominator.
pub fn check<F, B>(
    inputs: &[Array2<F>],
    build: B,
    eps: f64,
    tol: f64,
    probe_limit: Option<usize>,
) -> GradCheckReport
where
    F: Real,
    B: Fn(&mut Graph<F>, &[NodeId]) -> NodeId,
{
    let analytic: Vec<Array2<F>> = {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|a| g.input_grad(a.clone())).collect();
        let loss = build(&mut g, &ids);
        let grads = g.backward(loss).expect("gradcheck loss must be scalar");
        ids.iter()
            .map(|&id| {
                grads
                    .of(id)
                    .cloned()
                    .unwrap_or_else(|| Array2::zeros(g.value(id).dim()))
            })
            .collect()
    };

    let forward_only = |arrays: &[Array2<F>]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = arrays.iter().map(|a| g.input_grad(a.clone())).collect();
        let loss = build(&mut g, &ids);
        g.scalar(loss).as_f64()
    };

    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for (which, input) in inputs.iter().enumerate() {
        // Components far below the tensor's gradient scale are dominated by
        // finite-difference truncation, so the denominator is floored at a
        // percent of the largest gradient in the tensor.
        let scale = analytic[which]
            .iter()
            .map(|g| g.as_f64().abs())
            .fold(0.0f64, f64::max);
        let floor = (0.01 * scale).max(1e-8);
        let len = input.len();
        let stride = match probe_limit {
            Some(limit) if len > limit => len / limit,
            _ => 1,
        };
        for flat in (0..len).step_by(stride.max(1)) {
            let cols = input.ncols();
            let idx = (flat / cols, flat % cols);
            let mut plus = inputs.to_vec();
            plus[which][idx] = plus[which][idx] + F::from_f64(eps);
            let mut minus = inputs.to_vec();
            minus[which][idx] = minus[which][idx] - F::from_f64(eps);
            let numeric = (forward_only(&plus) - forward_only(&minus)) / (2.0 * eps);
            let exact = analytic[which][idx].as_f64();
            let denom = exact.abs().max(numeric.abs()).max(floor);
            let rel = (exact - numeric).abs() / denom;
            assert!(
                rel < tol,
                "gradient mismatch at input {which} {idx:?}: analytic {exact}, numeric {numeric}, rel {rel}"
            );
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    GradCheckReport {
        checked,
        max_rel_error: max_rel,
    }
}
