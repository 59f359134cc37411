//! Prototype logit mixing over positive queries and the matching
//! smoothed labels.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::tensor::{mean_over_rows, Tensor};

/// Queries of one image that are assigned to ground-truth objects,
/// with the zero-based class index of each.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PositiveQuerySet {
    indices: Vec<usize>,
    classes: Vec<usize>,
}

impl PositiveQuerySet {
    pub fn new(indices: Vec<usize>, classes: Vec<usize>) -> Result<Self> {
        if indices.len() != classes.len() {
            return Err(Error::LengthMismatch {
                what: "positive query indices vs classes",
                left: indices.len(),
                right: classes.len(),
            });
        }
        let mut seen = HashSet::new();
        if !indices.iter().all(|i| seen.insert(*i)) {
            return Err(Error::InvalidArgument("positive query indices must be unique".into()));
        }
        Ok(Self { indices, classes })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Checks indices against `queries` and classes against `classes`.
    pub fn validate(&self, queries: usize, classes: usize) -> Result<()> {
        if let Some(&i) = self.indices.iter().find(|&&i| i >= queries) {
            return Err(Error::InvalidArgument(format!(
                "positive query index {i} out of range for {queries} queries"
            )));
        }
        if let Some(&c) = self.classes.iter().find(|&&c| c >= classes) {
            return Err(Error::InvalidArgument(format!(
                "class {c} out of range for {classes} classes"
            )));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// Mixes every positive-query logit row with the prototype (the mean of
/// all rows, the row itself included): `alpha * q_i + (1 - alpha) * mean`.
pub fn mix_logits(queries: &[Tensor], alpha: f64) -> Result<Vec<Tensor>> {
    check_alpha(alpha)?;
    let prototype = mean_over_rows(queries)?;
    if alpha == 1.0 || queries.len() == 1 {
        return Ok(queries.to_vec());
    }
    queries
        .iter()
        .map(|q| q.zip_with(&prototype, |a, p| alpha * a + (1.0 - alpha) * p))
        .collect()
}

/// Pulls a gradient with respect to mixed rows back to the unmixed rows.
pub fn mix_logits_backward(grad_mixed: &[Tensor], alpha: f64) -> Result<Vec<Tensor>> {
    let total = mean_over_rows(grad_mixed)?;
    grad_mixed
        .iter()
        .map(|g| g.zip_with(&total, |gi, mean| alpha * gi + (1.0 - alpha) * mean))
        .collect()
}

/// Soft class target for one positive query.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedLabel {
    weights: Tensor,
}

impl SmoothedLabel {
    pub fn one_hot(class: usize, classes: usize) -> Result<Self> {
        let mut w = Tensor::zeros(&[classes])?;
        w.set(&[class], 1.0);
        Ok(Self { weights: w })
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }
}

/// Labels that accompany [`mix_logits`]: query `i` keeps `alpha` on its
/// own class, and `1 - alpha` is split evenly across the other positive
/// queries, each share landing on that query's class. Shares landing on
/// the same class add up.
pub fn smoothed_labels(
    pqs: &PositiveQuerySet,
    alpha: f64,
    classes: usize,
) -> Result<Vec<SmoothedLabel>> {
    check_alpha(alpha)?;
    if pqs.is_empty() {
        return Err(Error::NoPositiveQueries);
    }
    if let Some(&c) = pqs.classes().iter().find(|&&c| c >= classes) {
        return Err(Error::InvalidArgument(format!(
            "class {c} out of range for {classes} classes"
        )));
    }
    let p = pqs.len();
    if p == 1 {
        return Ok(vec![SmoothedLabel::one_hot(pqs.classes()[0], classes)?]);
    }
    let share = (1.0 - alpha) / (p - 1) as f64;
    (0..p)
        .map(|i| {
            let mut w = vec![0.0; classes];
            w[pqs.classes()[i]] += alpha;
            for (j, &c) in pqs.classes().iter().enumerate() {
                if j != i {
                    w[c] += share;
                }
            }
            Ok(SmoothedLabel {
                weights: Tensor::vector(w)?,
            })
        })
        .collect()
}
