//! Post-hoc temperature scaling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{softplus, CompensatedSum};

pub const TEMPERATURE_RANGE: (f64, f64) = (0.05, 20.0);
pub const TEMPERATURE_TOL: f64 = 1e-4;

/// Link function under which the negative log-likelihood is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TemperatureLink {
    /// Multi-class softmax; the label is the true class.
    #[default]
    #[serde(rename = "softmax-NLL")]
    SoftmaxNll,
    /// Independent per-class sigmoids; the label's class is the only positive.
    #[serde(rename = "sigmoid-NLL")]
    SigmoidNll,
}

impl fmt::Display for TemperatureLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemperatureLink::SoftmaxNll => "softmax-NLL",
            TemperatureLink::SigmoidNll => "sigmoid-NLL",
        })
    }
}

impl FromStr for TemperatureLink {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "softmax-nll" | "softmax" => Ok(TemperatureLink::SoftmaxNll),
            "sigmoid-nll" | "sigmoid" => Ok(TemperatureLink::SigmoidNll),
            _ => Err(Error::InvalidArgument(format!("unknown temperature mode {s:?}"))),
        }
    }
}

fn validate(logits: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::NoSamples);
    }
    if logits.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "logit rows vs labels",
            left: logits.len(),
            right: labels.len(),
        });
    }
    for (i, (row, &y)) in logits.iter().zip(labels).enumerate() {
        if row.is_empty() || y >= row.len() {
            return Err(Error::InvalidArgument(format!(
                "row {i}: label {y} out of range for {} logits",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("row {i}: non-finite logit")));
        }
    }
    Ok(())
}

/// Mean negative log-likelihood of `logits / t`.
pub fn nll(logits: &[Vec<f64>], labels: &[usize], t: f64, link: TemperatureLink) -> f64 {
    let mut total = CompensatedSum::new();
    for (row, &y) in logits.iter().zip(labels) {
        match link {
            TemperatureLink::SoftmaxNll => {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max) / t;
                let lse = max + row.iter().map(|&v| (v / t - max).exp()).sum::<f64>().ln();
                total.add(lse - row[y] / t);
            }
            TemperatureLink::SigmoidNll => {
                for (c, &v) in row.iter().enumerate() {
                    let z = v / t;
                    total.add(if c == y { softplus(-z) } else { softplus(z) });
                }
            }
        }
    }
    total.value() / logits.len() as f64
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    (lo + hi) / 2.0
}

/// Fits the temperature minimizing the NLL of `logits / T` over
/// `T` in [0.05, 20].
pub fn fit_temperature(logits: &[Vec<f64>], labels: &[usize], link: TemperatureLink) -> Result<f64> {
    validate(logits, labels)?;
    let (lo, hi) = TEMPERATURE_RANGE;
    Ok(golden_section_min(|t| nll(logits, labels, t, link), lo, hi, TEMPERATURE_TOL))
}

/// Divides every logit by `t`.
pub fn apply_temperature(logits: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    logits
        .iter()
        .map(|row| row.iter().map(|v| v / t).collect())
        .collect()
}

/// Index of the first maximal element.
pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}
