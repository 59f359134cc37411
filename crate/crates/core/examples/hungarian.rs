//! Minimum-cost bipartite assignment between queries and objects.
//!
//! ```bash
//! cargo run -p detcal --example hungarian
//! ```

use detcal::assignment::{assignment_cost, hungarian_assign};
use detcal::Tensor;

fn main() -> detcal::Result<()> {
    // Four queries, three objects.
    let cost = Tensor::new(
        vec![4, 3],
        vec![
            0.9, 0.2, 0.7, //
            0.1, 0.8, 0.6, //
            0.4, 0.3, 0.1, //
            0.5, 0.5, 0.5,
        ],
    )?;
    let pairs = hungarian_assign(&cost)?;
    for (q, o) in &pairs {
        println!("query {q} -> object {o}");
    }
    println!("total cost {:.2}", assignment_cost(&cost, &pairs));
    Ok(())
}
