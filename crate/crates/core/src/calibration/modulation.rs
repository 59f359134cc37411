//! Cross-layer uncertainty and uncertainty-guided logit modulation.

use crate::error::{Error, Result};
use crate::tensor::{Tensor, VarianceKind};

/// Per-logit uncertainty: variance of an `L x M x Q x C` logit stack over
/// the layer axis.
pub fn quantify_uncertainty(all_layers: &Tensor) -> Result<Tensor> {
    quantify_uncertainty_with(all_layers, VarianceKind::Population)
}

pub fn quantify_uncertainty_with(all_layers: &Tensor, kind: VarianceKind) -> Result<Tensor> {
    all_layers.variance_along_first_axis_with(kind)
}

/// Certainty multiplier `1 - tanh(u)`.
pub fn certainty(u: f64) -> f64 {
    1.0 - u.tanh()
}

/// Scales each final-layer logit by `1 - tanh(u)`.
pub fn modulate_logits(final_layer: &Tensor, u: &Tensor) -> Result<Tensor> {
    if u.data().iter().any(|&v| v < 0.0) {
        return Err(Error::NegativeUncertainty);
    }
    final_layer.zip_with(u, |o, u| o * certainty(u))
}

/// Last slice of a layer stack.
pub fn final_layer(all_layers: &Tensor) -> Tensor {
    all_layers.index_first(all_layers.shape()[0] - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::REFERENCE_TOL;

    #[test]
    fn identical_layers_have_zero_uncertainty() {
        let layer = Tensor::from_fn(&[2, 3, 4], |i| (i as f64).sin()).unwrap();
        let stack = Tensor::stack(&[layer.clone(), layer.clone(), layer]).unwrap();
        assert!(quantify_uncertainty(&stack).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_layer_golden_value() {
        let stack = Tensor::new(vec![2, 1, 1, 2], vec![0.0, 5.0, 2.0, 5.0]).unwrap();
        let u = quantify_uncertainty(&stack).unwrap();
        assert_eq!(u.data(), &[1.0, 0.0]);
    }

    #[test]
    fn doubling_logits_quadruples_uncertainty() {
        let stack = Tensor::from_fn(&[3, 1, 2, 3], |i| ((i * 7) % 5) as f64 - 1.7).unwrap();
        let u = quantify_uncertainty(&stack).unwrap();
        let u2 = quantify_uncertainty(&stack.scale(2.0)).unwrap();
        for (a, b) in u.data().iter().zip(u2.data()) {
            assert!((4.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn modulation_golden_values() {
        let o = Tensor::vector(vec![2.0, -3.0]).unwrap();
        assert_eq!(modulate_logits(&o, &Tensor::zeros(&[2]).unwrap()).unwrap(), o);
        let out = modulate_logits(&o, &Tensor::vector(vec![1.0, 0.0]).unwrap()).unwrap();
        assert!((out.data()[0] - 0.476812).abs() < REFERENCE_TOL);
        let out = modulate_logits(&o, &Tensor::full(&[2], 20.0).unwrap()).unwrap();
        for (a, b) in out.data().iter().zip(o.data()) {
            assert!(a.abs() <= 1e-8 * b.abs());
        }
    }

    #[test]
    fn rejects_negative_uncertainty() {
        let o = Tensor::vector(vec![1.0]).unwrap();
        let err = modulate_logits(&o, &Tensor::vector(vec![-0.1]).unwrap()).unwrap_err();
        assert_eq!(err.to_string(), "uncertainty must be non-negative");
        assert!(modulate_logits(&o, &Tensor::zeros(&[2]).unwrap()).is_err());
    }
}
