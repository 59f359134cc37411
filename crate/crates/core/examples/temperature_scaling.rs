//! Fits a temperature to overconfident three-class logits and shows the
//! effect on the top-label ECE.
//!
//! ```bash
//! cargo run -p detcal --example temperature_scaling
//! ```

use detcal::calibration::temperature::{apply_temperature, argmax, fit_temperature, TemperatureLink};
use detcal::metrics::ece;
use detcal::tensor::softmax;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn top_label_ece(logits: &[Vec<f64>], labels: &[usize]) -> detcal::Result<f64> {
    let samples: Vec<(f64, bool)> = logits
        .iter()
        .zip(labels)
        .map(|(row, &y)| {
            let k = argmax(row);
            (softmax(row)[k], k == y)
        })
        .collect();
    Ok(ece(&samples, 15)?.error)
}

fn main() -> detcal::Result<()> {
    // Labels are drawn from softmax(z); the model reports 2.5 * z.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let normal = Normal::new(0.0, 1.5).expect("valid normal");
    let mut logits = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..5000 {
        let z: Vec<f64> = (0..3).map(|_| normal.sample(&mut rng)).collect();
        let p = softmax(&z);
        let u: f64 = rng.random();
        let y = p.iter().scan(0.0, |acc, &v| { *acc += v; Some(*acc) }).position(|c| u < c).unwrap_or(2);
        logits.push(z.iter().map(|v| 2.5 * v).collect::<Vec<f64>>());
        labels.push(y);
    }

    let t = fit_temperature(&logits, &labels, TemperatureLink::SoftmaxNll)?;
    let scaled = apply_temperature(&logits, t);
    println!("fitted T = {t:.4} (planted 2.5)");
    println!("ECE before: {:.4}", top_label_ece(&logits, &labels)?);
    println!("ECE after:  {:.4}", top_label_ece(&scaled, &labels)?);
    Ok(())
}
