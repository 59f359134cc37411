//! Cross-layer variance as uncertainty, and the logits it damps.
//!
//! ```bash
//! cargo run -p detcal --example logit_modulation
//! ```

use detcal::calibration::{certainty, modulate_logits, quantify_uncertainty};
use detcal::Tensor;

fn main() -> detcal::Result<()> {
    // Three decoder layers, one image, two queries, two classes. Query 0
    // agrees across layers; query 1 does not.
    let stack = Tensor::new(
        vec![3, 1, 2, 2],
        vec![
            2.0, -1.0, 0.5, 1.0, //
            2.1, -1.1, 2.5, -1.0, //
            1.9, -0.9, -1.5, 3.0,
        ],
    )?;
    let u = quantify_uncertainty(&stack)?;
    let last = stack.index_first(2);
    let modulated = modulate_logits(&last, &u)?;

    for q in 0..2 {
        for c in 0..2 {
            let idx = [0, q, c];
            let uu = u.get(&idx);
            println!(
                "query {q} class {c}: u = {uu:.4}  1 - tanh(u) = {:.4}  logit {:+.3} -> {:+.3}",
                certainty(uu),
                last.get(&idx),
                modulated.get(&idx)
            );
        }
    }
    Ok(())
}
