//! Trains the synthetic multi-layer head in all four modes (baseline,
//! modulation only, mixing only, both) over several seeds and prints the
//! held-out D-ECE, D-UCE and accuracy of each.
//!
//! ```bash
//! cargo run --release -p detcal --example toy_ablation
//! ```

use detcal::calibration::TrainConfig;
use detcal::toy::run_ablation;

fn main() -> detcal::Result<()> {
    let cfg = TrainConfig::default();
    let seeds: Vec<u64> = (0..5).collect();
    let summary = run_ablation(&cfg, &seeds)?;

    println!("{:<10} {:>8} {:>8} {:>9}   per-seed D-ECE", "mode", "D-ECE", "D-UCE", "accuracy");
    for e in &summary.entries {
        let per_seed: Vec<String> = e.per_seed_d_ece.iter().map(|v| format!("{v:.4}")).collect();
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>9.4}   {}",
            e.mode.as_str(),
            e.d_ece,
            e.d_uce,
            e.accuracy,
            per_seed.join(" ")
        );
    }
    Ok(())
}
