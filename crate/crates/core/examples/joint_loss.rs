//! Evaluates the joint classification and regularizer loss on a random
//! decoder stack and checks its gradient against central differences.
//!
//! ```bash
//! cargo run -p detcal --example joint_loss
//! ```

use detcal::calibration::{joint_loss, Ablation, JointLossSettings, PositiveQuerySet, TrainConfig};
use detcal::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> detcal::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let shape = vec![3, 1, 5, 4];
    let stack = Tensor::from_fn(&shape, |_| normal.sample(&mut rng))?;
    let positives = vec![PositiveQuerySet::new(vec![0, 2, 3], vec![1, 3, 1])?];
    let settings = JointLossSettings::new(&TrainConfig::default(), Ablation::Full);

    let out = joint_loss(&stack, &positives, &settings)?;
    println!("total {:.6} = cls {:.6} + {} * reg {:.6}", out.total, out.cls, settings.lambda_reg, out.reg);

    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..stack.len() {
        let mut plus = stack.data().to_vec();
        let mut minus = stack.data().to_vec();
        plus[i] += eps;
        minus[i] -= eps;
        let fp = joint_loss(&Tensor::new(shape.clone(), plus)?, &positives, &settings)?.total;
        let fm = joint_loss(&Tensor::new(shape.clone(), minus)?, &positives, &settings)?.total;
        worst = worst.max(((fp - fm) / (2.0 * eps) - out.grad.data()[i]).abs());
    }
    println!("largest gradient discrepancy over {} entries: {worst:.2e}", stack.len());
    Ok(())
}
