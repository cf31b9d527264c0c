//! SGD with classical momentum, decoupled into a reusable single-tensor step.

use ndarray::{Array, Dimension};

use crate::error::{Error, Result};

/// Linearly decayed learning rate: lr0·(1 − step/total_steps). `step` counts
/// completed optimizer steps, so the first update uses the full lr0 and a
/// step count equal to total_steps has decayed all the way to zero.
pub fn lr_at(step: usize, total_steps: usize, lr0: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::InvalidArgument("total_steps must be positive".into()));
    }
    if step > total_steps {
        return Err(Error::InvalidArgument(format!(
            "step {step} exceeds total_steps {total_steps}"
        )));
    }
    Ok(lr0 * (1.0 - step as f64 / total_steps as f64))
}

/// One momentum-SGD update on a single tensor:
///
///   g' = g + weight_decay·p
///   v ← momentum·v + g'
///   p ← p − lr·v
///
/// Rejects non-finite gradients so a numeric fault surfaces at the step that
/// produced it instead of poisoning every later batch.
pub fn sgd_step<D: Dimension>(
    params: &mut Array<f64, D>,
    grads: &Array<f64, D>,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    velocity: &mut Array<f64, D>,
) -> Result<()> {
    if params.raw_dim() != grads.raw_dim() || params.raw_dim() != velocity.raw_dim() {
        return Err(Error::InvalidArgument("sgd_step tensor shape mismatch".into()));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericFault("non-finite gradient in sgd_step".into()));
    }
    azip_update(params, grads, velocity, lr, momentum, weight_decay);
    Ok(())
}

fn azip_update<D: Dimension>(
    params: &mut Array<f64, D>,
    grads: &Array<f64, D>,
    velocity: &mut Array<f64, D>,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    ndarray::Zip::from(params)
        .and(grads)
        .and(velocity)
        .for_each(|p, &g, v| {
            let g = g + weight_decay * *p;
            *v = momentum * *v + g;
            *p -= lr * *v;
        });
}

/// Momentum buffers for a full model: one velocity tensor per parameter
/// tensor, all zero-initialized.
#[derive(Debug, Clone)]
pub struct SgdState {
    pub weight_velocity: Vec<ndarray::Array2<f64>>,
    pub bias_velocity: Vec<ndarray::Array1<f64>>,
    pub classifier_velocity: ndarray::Array2<f64>,
}

impl SgdState {
    pub fn for_model(backbone: &crate::model::Backbone, classifier: &crate::model::Classifier) -> Self {
        SgdState {
            weight_velocity: backbone
                .layers()
                .iter()
                .map(|l| ndarray::Array2::zeros(l.weight.raw_dim()))
                .collect(),
            bias_velocity: backbone
                .layers()
                .iter()
                .map(|l| ndarray::Array1::zeros(l.bias.raw_dim()))
                .collect(),
            classifier_velocity: ndarray::Array2::zeros(classifier.weights.raw_dim()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lr_decays_linearly_and_hits_zero_at_the_end() {
        assert_eq!(lr_at(0, 10, 0.1).unwrap(), 0.1);
        assert!((lr_at(5, 10, 0.1).unwrap() - 0.05).abs() < 1e-15);
        assert!((lr_at(9, 10, 0.1).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(lr_at(10, 10, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn lr_rejects_step_past_end() {
        let err = lr_at(11, 10, 0.1).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn sgd_matches_hand_computed_two_step_sequence() {
        // Straight-line oracle, worked by hand:
        // p=1, g=0.5 both steps, lr=0.1, momentum=0.9, wd=0.
        // step1: v=0.5,   p=1−0.05=0.95
        // step2: v=0.95,  p=0.95−0.095=0.855
        let mut p = array![1.0];
        let mut v = array![0.0];
        let g = array![0.5];
        sgd_step(&mut p, &g, 0.1, 0.9, 0.0, &mut v).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-15);
        sgd_step(&mut p, &g, 0.1, 0.9, 0.0, &mut v).unwrap();
        assert!((p[0] - 0.855).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_adds_param_times_wd_to_gradient() {
        // p=2, g=0, wd=0.5 → effective g = 1; v = 1; p = 2 − 0.1 = 1.9.
        let mut p = array![2.0];
        let mut v = array![0.0];
        sgd_step(&mut p, &array![0.0], 0.1, 0.0, 0.5, &mut v).unwrap();
        assert!((p[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_a_numeric_fault() {
        let mut p = array![1.0];
        let mut v = array![0.0];
        let err = sgd_step(&mut p, &array![f64::NAN], 0.1, 0.9, 0.0, &mut v).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert_eq!(p[0], 1.0, "params must be untouched on fault");
    }
}
