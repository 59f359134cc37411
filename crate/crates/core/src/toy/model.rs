use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::data::SyntheticScene;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Shared `tanh` trunk followed by one linear classification head per
/// decoder layer. Layer `l` of the logit stack is head `l` applied to the
/// trunk features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    /// `H x F`
    pub trunk_w: Tensor,
    /// `H`
    pub trunk_b: Tensor,
    /// `L` matrices of `C x H`
    pub head_w: Vec<Tensor>,
    /// `L` vectors of `C`
    pub head_b: Vec<Tensor>,
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `M x Q x H` trunk outputs, flat.
    pub hidden: Vec<f64>,
    /// `L x M x Q x C` logits.
    pub stack: Tensor,
}

impl ToyModel {
    pub fn new(
        features: usize,
        hidden: usize,
        classes: usize,
        layers: usize,
        identical_heads: bool,
        seed: u64,
    ) -> Result<Self> {
        if layers < 2 {
            return Err(Error::InsufficientLayers(layers));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |rows: usize, cols: usize| -> Result<Tensor> {
            let normal = Normal::new(0.0, 1.0 / (cols as f64).sqrt()).expect("valid std");
            Tensor::from_fn(&[rows, cols], |_| normal.sample(&mut rng))
        };
        let trunk_w = init(hidden, features)?;
        let mut head_w: Vec<Tensor> = Vec::with_capacity(layers);
        for l in 0..layers {
            if identical_heads && l > 0 {
                head_w.push(head_w[0].clone());
            } else {
                head_w.push(init(classes, hidden)?);
            }
        }
        Ok(Self {
            trunk_w,
            trunk_b: Tensor::zeros(&[hidden])?,
            head_w,
            head_b: vec![Tensor::zeros(&[classes])?; layers],
        })
    }

    pub fn layers(&self) -> usize {
        self.head_w.len()
    }

    pub fn classes(&self) -> usize {
        self.head_w[0].shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.trunk_w.shape()[0]
    }

    pub fn features(&self) -> usize {
        self.trunk_w.shape()[1]
    }

    pub fn forward(&self, scenes: &[SyntheticScene]) -> Result<Forward> {
        let (h, f, c, l) = (self.hidden(), self.features(), self.classes(), self.layers());
        let queries = scenes.first().map(|s| s.features.shape()[0]).ok_or(Error::NoSamples)?;
        let rows = scenes.len() * queries;
        let mut hidden = vec![0.0; rows * h];
        for (m, scene) in scenes.iter().enumerate() {
            if scene.features.shape() != [queries, f] {
                return Err(Error::ShapeMismatch {
                    left: scene.features.shape().to_vec(),
                    right: vec![queries, f],
                });
            }
            let x = scene.features.data();
            for q in 0..queries {
                let xr = &x[q * f..(q + 1) * f];
                let out = &mut hidden[(m * queries + q) * h..(m * queries + q + 1) * h];
                for (j, o) in out.iter_mut().enumerate() {
                    let w = &self.trunk_w.data()[j * f..(j + 1) * f];
                    let z: f64 = w.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() + self.trunk_b.data()[j];
                    *o = z.tanh();
                }
            }
        }
        let mut logits = vec![0.0; l * rows * c];
        for layer in 0..l {
            let w = self.head_w[layer].data();
            let b = self.head_b[layer].data();
            for r in 0..rows {
                let hr = &hidden[r * h..(r + 1) * h];
                for k in 0..c {
                    let wk = &w[k * h..(k + 1) * h];
                    logits[(layer * rows + r) * c + k] =
                        wk.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() + b[k];
                }
            }
        }
        Ok(Forward {
            hidden,
            stack: Tensor::new(vec![l, scenes.len(), queries, c], logits)?,
        })
    }

    /// Parameter gradient given the gradient on the logit stack.
    pub fn backward(&self, scenes: &[SyntheticScene], fwd: &Forward, grad_stack: &Tensor) -> Result<ToyModel> {
        let (h, f, c, l) = (self.hidden(), self.features(), self.classes(), self.layers());
        if grad_stack.shape() != fwd.stack.shape() {
            return Err(Error::ShapeMismatch {
                left: grad_stack.shape().to_vec(),
                right: fwd.stack.shape().to_vec(),
            });
        }
        let queries = fwd.stack.shape()[2];
        let rows = scenes.len() * queries;
        let g = grad_stack.data();

        let mut head_w = vec![vec![0.0; c * h]; l];
        let mut head_b = vec![vec![0.0; c]; l];
        let mut grad_hidden = vec![0.0; rows * h];
        for layer in 0..l {
            let w = self.head_w[layer].data();
            for r in 0..rows {
                let hr = &fwd.hidden[r * h..(r + 1) * h];
                let gh = &mut grad_hidden[r * h..(r + 1) * h];
                for k in 0..c {
                    let gk = g[(layer * rows + r) * c + k];
                    if gk == 0.0 {
                        continue;
                    }
                    head_b[layer][k] += gk;
                    let dw = &mut head_w[layer][k * h..(k + 1) * h];
                    let wk = &w[k * h..(k + 1) * h];
                    for j in 0..h {
                        dw[j] += gk * hr[j];
                        gh[j] += gk * wk[j];
                    }
                }
            }
        }

        let mut trunk_w = vec![0.0; h * f];
        let mut trunk_b = vec![0.0; h];
        for (m, scene) in scenes.iter().enumerate() {
            let x = scene.features.data();
            for q in 0..queries {
                let r = m * queries + q;
                let xr = &x[q * f..(q + 1) * f];
                for j in 0..h {
                    let a = fwd.hidden[r * h + j];
                    let dz = grad_hidden[r * h + j] * (1.0 - a * a);
                    if dz == 0.0 {
                        continue;
                    }
                    trunk_b[j] += dz;
                    for (dw, &xv) in trunk_w[j * f..(j + 1) * f].iter_mut().zip(xr) {
                        *dw += dz * xv;
                    }
                }
            }
        }

        Ok(ToyModel {
            trunk_w: Tensor::new(vec![h, f], trunk_w)?,
            trunk_b: Tensor::new(vec![h], trunk_b)?,
            head_w: head_w
                .into_iter()
                .map(|d| Tensor::new(vec![c, h], d))
                .collect::<Result<_>>()?,
            head_b: head_b
                .into_iter()
                .map(|d| Tensor::new(vec![c], d))
                .collect::<Result<_>>()?,
        })
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        std::iter::once(&mut self.trunk_w)
            .chain(std::iter::once(&mut self.trunk_b))
            .chain(self.head_w.iter_mut())
            .chain(self.head_b.iter_mut())
    }

    fn params(&self) -> impl Iterator<Item = &Tensor> {
        std::iter::once(&self.trunk_w)
            .chain(std::iter::once(&self.trunk_b))
            .chain(self.head_w.iter())
            .chain(self.head_b.iter())
    }

    /// `self -= step * grad`.
    pub fn descend(&mut self, grad: &ToyModel, step: f64) -> Result<()> {
        let grads: Vec<&Tensor> = grad.params().collect();
        for (p, g) in self.params_mut().zip(grads) {
            *p = p.zip_with(g, |w, d| w - step * d)?;
        }
        Ok(())
    }

    /// All parameters in a fixed order, flattened.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params().flat_map(|t| t.data().iter().copied()).collect()
    }
}
