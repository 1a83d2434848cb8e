use super::model::CnnModel;
use super::NnError;

/// Deliberate corruption of the analytic gradient, used to show the check
/// catches a broken backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradFault {
    /// Negate the gradient of the given parameter buffer.
    FlipSign { buffer: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`.
    pub max_rel_error: f64,
    /// `(buffer, index)` of the worst parameter.
    pub worst: (usize, usize),
    pub n_params: usize,
}

/// Compare back-propagated gradients of one sample's loss against central
/// differences with step `eps`, over every parameter.
pub fn grad_check(model: &CnnModel<f64>, input: &[f64], label: usize, eps: f64) -> Result<GradCheckReport, NnError> {
    run(model, input, label, eps, None)
}

pub fn grad_check_with_fault(
    model: &CnnModel<f64>,
    input: &[f64],
    label: usize,
    eps: f64,
    fault: GradFault,
) -> Result<GradCheckReport, NnError> {
    run(model, input, label, eps, Some(fault))
}

fn run(
    model: &CnnModel<f64>,
    input: &[f64],
    label: usize,
    eps: f64,
    fault: Option<GradFault>,
) -> Result<GradCheckReport, NnError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(NnError::InvalidConfig(format!("finite-difference step must be > 0, got {eps}")));
    }
    let targets = [label];
    let (_, mut analytic) = model.loss_and_grads(input, &targets)?;
    if let Some(GradFault::FlipSign { buffer }) = fault {
        let g = analytic
            .get_mut(buffer)
            .ok_or_else(|| NnError::InvalidConfig(format!("no parameter buffer {buffer}")))?;
        g.iter_mut().for_each(|v| *v = -*v);
    }

    let mut probe = model.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), n_params: 0 };
    for (bi, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let orig = probe.params()[bi][i];
            probe.params_mut()[bi][i] = orig + eps;
            let up = probe.loss(input, &targets)?;
            probe.params_mut()[bi][i] = orig - eps;
            let down = probe.loss(input, &targets)?;
            probe.params_mut()[bi][i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (bi, i);
            }
            report.n_params += 1;
        }
    }
    Ok(report)
}
