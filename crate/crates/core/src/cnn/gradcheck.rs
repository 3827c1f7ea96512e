use super::network::{backprop, cross_entropy, images_to_input, run};
use super::{ModelWeights, Scalar};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::label::Label;

/// Gradients smaller than this in both routes are compared absolutely.
const GRAD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(tensor, element)` of the worst parameter, in trainable order.
    pub worst: (usize, usize),
    pub checked: usize,
}

fn loss(model: &ModelWeights<f64>, input: &[f64], label: usize) -> f64 {
    let pass = run(model, input.to_vec(), 1, false, None);
    cross_entropy(&pass, &[label])
}

/// Compares backpropagated gradients with central finite differences of step
/// `step` for every trainable parameter, in `f64`, with inference-mode
/// batch-norm and no dropout.
pub fn gradient_check<T: Scalar>(
    model: &ModelWeights<T>,
    sample: &GrayImage,
    label: Label,
    step: f64,
) -> Result<GradCheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    model.config.validate()?;
    let mut model: ModelWeights<f64> = model.cast();
    let input = images_to_input::<f64>(&[sample], model.config.input_side)?;
    let y = label.index();

    let pass = run(&model, input.clone(), 1, false, None);
    let analytic = backprop(&model, &pass, &[y], false);

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for (t, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let original = model.trainable()[t][i];
            model.trainable_mut()[t][i] = original + step;
            let plus = loss(&model, &input, y);
            model.trainable_mut()[t][i] = original - step;
            let minus = loss(&model, &input, y);
            model.trainable_mut()[t][i] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let scale = a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            let rel = (a - numeric).abs() / scale;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = (t, i);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
