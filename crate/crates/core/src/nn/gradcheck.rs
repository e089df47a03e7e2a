//! Central finite-difference verification of [`Graph::backward`].
//!
//! Runs in f64. Each parameter is nudged by `±epsilon`; when a nudge flips a
//! ReLU sign or a max-pool winner the difference straddles a kink, so the step
//! shrinks tenfold (up to a few times) until both sides sit on the same
//! linear piece as the analytic gradient.

use crate::error::Result;
use crate::nn::graph::{Graph, Mode, Params};
use crate::nn::layers::DropoutMask;
use crate::tensor::Tensor;

const FLOOR: f64 = 1e-8;
const MAX_REFINE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    /// Buffer name and element index of the worst parameter.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Parameters whose step had to shrink to avoid a kink.
    pub refined: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Checks every parameter gradient of `graph` at `params` on one batch.
///
/// With `masks`, dropout layers replay those masks (see [`Mode::Frozen`]);
/// otherwise dropout is the identity.
pub fn gradient_check(
    graph: &Graph,
    params: &Params<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    epsilon: f64,
    masks: Option<&[DropoutMask<f64>]>,
) -> Result<GradCheckReport> {
    let mode = || match masks {
        Some(m) => Mode::Frozen(m),
        None => Mode::Eval,
    };
    let analytic = graph.loss_and_grads(params, x, labels, mode())?;
    let base_pattern = analytic.trace.activation_pattern(graph);
    let grads: Vec<Vec<f64>> = analytic.grads.slices().iter().map(|s| s.to_vec()).collect();
    let names = Params::<f64>::slice_names(graph);

    let eval = |p: &Params<f64>| -> Result<(f64, u64)> {
        let trace = graph.forward(p, x, mode())?;
        let (loss, _) = graph.loss_from_trace(&trace, labels)?;
        Ok((loss, trace.activation_pattern(graph)))
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        refined: 0,
    };
    for (s, g) in grads.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let orig = work.slices()[s][i];
            let mut eps = epsilon;
            let mut numeric = 0.0;
            for attempt in 0..=MAX_REFINE {
                work.slices_mut()[s][i] = orig + eps;
                let (lp, pp) = eval(&work)?;
                work.slices_mut()[s][i] = orig - eps;
                let (lm, pm) = eval(&work)?;
                work.slices_mut()[s][i] = orig;
                numeric = (lp - lm) / (2.0 * eps);
                if (pp == base_pattern && pm == base_pattern) || attempt == MAX_REFINE {
                    if attempt > 0 {
                        report.refined += 1;
                    }
                    break;
                }
                eps /= 10.0;
            }
            let err = relative_error(a, numeric);
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((names[s].clone(), i));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
