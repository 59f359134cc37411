//! Mixes positive-query logits toward their prototype and builds the
//! matching smoothed labels.
//!
//! ```bash
//! cargo run -p detcal --example logit_mixing
//! ```

use detcal::calibration::{mix_logits, smoothed_labels, PositiveQuerySet};
use detcal::Tensor;

fn main() -> detcal::Result<()> {
    let alpha = 0.9;
    let rows = vec![
        Tensor::vector(vec![3.0, -1.0, -2.0, -2.0])?,
        Tensor::vector(vec![-1.0, 2.0, -2.0, -1.5])?,
        Tensor::vector(vec![-2.0, 2.5, -1.0, -2.0])?,
    ];
    // Queries 4, 7 and 9 matched objects of classes 0, 1 and 1.
    let pqs = PositiveQuerySet::new(vec![4, 7, 9], vec![0, 1, 1])?;

    let mixed = mix_logits(&rows, alpha)?;
    let labels = smoothed_labels(&pqs, alpha, 4)?;
    for ((q, m), l) in pqs.indices().iter().zip(&mixed).zip(&labels) {
        println!("query {q}: mixed {:?}", m.data().iter().map(|v| format!("{v:+.3}")).collect::<Vec<_>>());
        println!("          label {:?}", l.weights().data());
    }
    Ok(())
}
