//! Dense row-major `f64` tensors with the handful of operations the
//! calibration kernels need.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, CompensatedSum};

/// Divisor used when reducing along the layer axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    /// Divide by `L`.
    #[default]
    Population,
    /// Divide by `L - 1`.
    Sample,
}

/// A dense tensor of `f64` values stored in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor", into = "RawTensor")]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for Tensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        Tensor::new(raw.shape, raw.data)
    }
}

impl From<Tensor> for RawTensor {
    fn from(t: Tensor) -> Self {
        RawTensor {
            shape: t.shape,
            data: t.data,
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "tensor needs at least one axis".into(),
        });
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "extents must be positive".into(),
        });
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if len != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("expected {len} elements, got {}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidShape {
                shape,
                reason: "elements must be finite".into(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    /// Builds a rank-1 tensor.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    /// Builds a tensor by evaluating `f` at every flat index.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Result<Self> {
        let len = check_shape(shape)?;
        Self::new(shape.to_vec(), (0..len).map(f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn flat_index(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                assert!(i < d, "index {i} out of bounds for extent {d}");
                acc * d + i
            })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.flat_index(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let i = self.flat_index(index);
        self.data[i] = value;
    }

    /// Contiguous slice `t[i, ...]` along the first axis, with the leading
    /// axis removed. Rank-1 tensors yield a one-element tensor.
    pub fn index_first(&self, i: usize) -> Tensor {
        assert!(i < self.shape[0], "index {i} out of bounds");
        let inner: Vec<usize> = if self.shape.len() == 1 {
            vec![1]
        } else {
            self.shape[1..].to_vec()
        };
        let stride: usize = inner.iter().product();
        Tensor {
            shape: inner,
            data: self.data[i * stride..(i + 1) * stride].to_vec(),
        }
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::InvalidShape {
            shape: vec![0],
            reason: "cannot stack zero tensors".into(),
        })?;
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for p in parts {
            ensure_same_shape(first, p)?;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor { shape, data })
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        ensure_same_shape(self, other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        numeric::sum(self.data.iter().copied())
    }

    /// Population variance along axis 0.
    pub fn variance_along_first_axis(&self) -> Result<Tensor> {
        self.variance_along_first_axis_with(VarianceKind::Population)
    }

    /// Variance along axis 0 (the decoder-layer axis of a logit stack).
    ///
    /// Uses a single Welford pass per output position.
    pub fn variance_along_first_axis_with(&self, kind: VarianceKind) -> Result<Tensor> {
        let layers = self.shape[0];
        if layers < 2 || self.shape.len() < 2 {
            return Err(Error::InsufficientLayers(layers));
        }
        let inner = self.shape[1..].to_vec();
        let stride: usize = inner.iter().product();
        let divisor = match kind {
            VarianceKind::Population => layers as f64,
            VarianceKind::Sample => (layers - 1) as f64,
        };
        let data = (0..stride)
            .map(|pos| {
                let mut mean = 0.0;
                let mut m2 = 0.0;
                for (n, l) in (0..layers).enumerate() {
                    let x = self.data[l * stride + pos];
                    let delta = x - mean;
                    mean += delta / (n + 1) as f64;
                    m2 += delta * (x - mean);
                }
                (m2 / divisor).max(0.0)
            })
            .collect();
        Ok(Tensor { shape: inner, data })
    }

    /// Mean along axis 0.
    pub fn mean_along_first_axis(&self) -> Tensor {
        let layers = self.shape[0];
        let inner: Vec<usize> = if self.shape.len() == 1 {
            vec![1]
        } else {
            self.shape[1..].to_vec()
        };
        let stride: usize = inner.iter().product();
        let data = (0..stride)
            .map(|pos| numeric::sum((0..layers).map(|l| self.data[l * stride + pos])) / layers as f64)
            .collect();
        Tensor { shape: inner, data }
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(numeric::sigmoid)
    }

    /// Softmax over the last axis, computed with max-subtraction.
    pub fn softmax_last_axis(&self) -> Tensor {
        let width = *self.shape.last().expect("tensor has at least one axis");
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(width) {
            data.extend(softmax(row));
        }
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tensor serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Tensor> {
        serde_json::from_str(s).map_err(|e| Error::Parse {
            path: "tensor".into(),
            message: e.to_string(),
        })
    }
}

fn ensure_same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    Ok(())
}

/// Softmax of a single row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let total = numeric::sum(exps.iter().copied());
    exps.into_iter().map(|e| e / total).collect()
}

/// Component-wise mean of equally sized rows.
pub fn mean_over_rows(rows: &[Tensor]) -> Result<Tensor> {
    let first = rows.first().ok_or(Error::NoPositiveQueries)?;
    let mut acc = vec![CompensatedSum::new(); first.len()];
    for row in rows {
        ensure_same_shape(first, row)?;
        for (a, &v) in acc.iter_mut().zip(&row.data) {
            a.add(v);
        }
    }
    let n = rows.len() as f64;
    Ok(Tensor {
        shape: first.shape.clone(),
        data: acc.iter().map(|a| a.value() / n).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{ALGEBRAIC_TOL, REFERENCE_TOL};

    /// Two-pass population variance, kept separate from the Welford path.
    fn two_pass_variance(xs: &[f64]) -> f64 {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64
    }

    fn stack_of(values: &[f64]) -> Tensor {
        Tensor::new(vec![values.len(), 1, 1, 1], values.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
    }

    #[test]
    fn variance_of_identical_layers_is_zero() {
        let layer = Tensor::from_fn(&[1, 2, 3], |i| i as f64 * 0.7 - 1.0).unwrap();
        let stack = Tensor::stack(&[layer.clone(), layer.clone(), layer]).unwrap();
        let u = stack.variance_along_first_axis().unwrap();
        assert_eq!(u.shape(), &[1, 2, 3]);
        assert!(u.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn variance_golden_values() {
        let two = stack_of(&[0.0, 2.0]);
        let oracle = two_pass_variance(&[0.0, 2.0]);
        assert_eq!(oracle, 1.0);
        assert!((two.variance_along_first_axis().unwrap().data()[0] - oracle).abs() < ALGEBRAIC_TOL);

        let three = stack_of(&[1.0, 2.0, 3.0]);
        let oracle = two_pass_variance(&[1.0, 2.0, 3.0]);
        assert!((oracle - 0.666667).abs() < REFERENCE_TOL);
        assert!((three.variance_along_first_axis().unwrap().data()[0] - oracle).abs() < ALGEBRAIC_TOL);
    }

    #[test]
    fn sample_variance_flag() {
        let two = stack_of(&[0.0, 2.0]);
        let u = two.variance_along_first_axis_with(VarianceKind::Sample).unwrap();
        assert!((u.data()[0] - 2.0).abs() < ALGEBRAIC_TOL);
    }

    #[test]
    fn variance_requires_two_layers() {
        let one = Tensor::zeros(&[1, 1, 2, 2]).unwrap();
        let err = one.variance_along_first_axis().unwrap_err();
        assert!(err.to_string().contains("insufficient layers for variance"));
    }

    #[test]
    fn elementwise_golden_values() {
        let t = Tensor::from_fn(&[2, 3], |i| i as f64 - 2.5).unwrap();
        let ones = Tensor::full(&[2, 3], 1.0).unwrap();
        assert_eq!(t.mul(&ones).unwrap(), t);
        assert_eq!(Tensor::vector(vec![0.0]).unwrap().map(f64::tanh).data(), &[0.0]);
        let th = Tensor::vector(vec![1.0]).unwrap().map(f64::tanh);
        assert!((th.data()[0] - 0.761594).abs() < REFERENCE_TOL);
        assert!(t.mul(&Tensor::zeros(&[3, 2]).unwrap()).is_err());
    }

    #[test]
    fn mean_over_rows_golden_values() {
        let r = Tensor::vector(vec![0.3, -1.0]).unwrap();
        assert_eq!(mean_over_rows(std::slice::from_ref(&r)).unwrap(), r);
        let m = mean_over_rows(&[
            Tensor::vector(vec![2.0, 0.0]).unwrap(),
            Tensor::vector(vec![0.0, 2.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(m.data(), &[1.0, 1.0]);
        let copies = vec![r.clone(); 7];
        let m = mean_over_rows(&copies).unwrap();
        for (a, b) in m.data().iter().zip(r.data()) {
            assert!((a - b).abs() < ALGEBRAIC_TOL);
        }
        let err = mean_over_rows(&[]).unwrap_err();
        assert_eq!(err.to_string(), "no positive queries");
    }

    #[test]
    fn sigmoid_and_softmax_golden_values() {
        let s = Tensor::vector(vec![0.0, 2.0]).unwrap().sigmoid();
        assert_eq!(s.data()[0], 0.5);
        assert!((s.data()[1] - 0.880797).abs() < REFERENCE_TOL);
        let sm = Tensor::full(&[1, 4], 3.3).unwrap().softmax_last_axis();
        for &p in sm.data() {
            assert!((p - 0.25).abs() < ALGEBRAIC_TOL);
        }
        let big = Tensor::vector(vec![1000.0, 999.0, -1000.0]).unwrap().softmax_last_axis();
        assert!(big.data().iter().all(|p| p.is_finite()));
        assert!((big.sum() - 1.0).abs() < ALGEBRAIC_TOL);
    }

    #[test]
    fn json_round_trip() {
        let t = Tensor::from_fn(&[2, 2], |i| i as f64 / 3.0).unwrap();
        assert_eq!(Tensor::from_json(&t.to_json()).unwrap(), t);
        assert!(Tensor::from_json(r#"{"shape":[2],"data":[1.0]}"#).is_err());
    }

    #[test]
    fn index_first_and_stack() {
        let t = Tensor::from_fn(&[3, 2], |i| i as f64).unwrap();
        assert_eq!(t.index_first(1).data(), &[2.0, 3.0]);
        let rows: Vec<Tensor> = (0..3).map(|i| t.index_first(i)).collect();
        assert_eq!(Tensor::stack(&rows).unwrap(), t);
    }
}
