//! Matches a handful of detections to ground truth and prints D-ECE with
//! its reliability table.
//!
//! ```bash
//! cargo run -p detcal --example evaluate_coco
//! ```

use detcal::geometry::{match_detections, BBox, Detection, GroundTruth, ImageId};
use detcal::metrics::{d_ece, reliability_csv_string, reliability_table};

fn det(image: i64, category: i64, b: [f64; 4], score: f64) -> Detection {
    Detection {
        image_id: ImageId::Int(image),
        category,
        bbox: BBox { x: b[0], y: b[1], w: b[2], h: b[3] },
        score,
    }
}

fn gt(image: i64, category: i64, b: [f64; 4]) -> GroundTruth {
    GroundTruth {
        image_id: ImageId::Int(image),
        category,
        bbox: BBox { x: b[0], y: b[1], w: b[2], h: b[3] },
    }
}

fn main() -> detcal::Result<()> {
    let gts = vec![
        gt(1, 1, [10.0, 10.0, 40.0, 40.0]),
        gt(1, 2, [60.0, 10.0, 20.0, 30.0]),
        gt(2, 1, [0.0, 0.0, 50.0, 50.0]),
    ];
    let dets = vec![
        det(1, 1, [12.0, 11.0, 40.0, 38.0], 0.92),
        det(1, 1, [14.0, 12.0, 36.0, 40.0], 0.81), // duplicate of the first
        det(1, 2, [61.0, 12.0, 18.0, 28.0], 0.55),
        det(1, 2, [0.0, 70.0, 20.0, 20.0], 0.47), // background
        det(2, 1, [5.0, 5.0, 50.0, 50.0], 0.73),
        det(2, 2, [0.0, 0.0, 50.0, 50.0], 0.66), // right place, wrong class
    ];

    let matched = match_detections(&dets, &gts, 0.5)?;
    for m in &matched {
        println!(
            "image {:?} class {} score {:.2} -> f = {} (IoU {:.3})",
            m.detection.image_id, m.detection.category, m.detection.score, m.f, m.iou
        );
    }

    let report = d_ece(&matched, 5, 0.0)?;
    println!("\nD-ECE over {} detections: {:.4}\n", report.total, report.error);
    print!("{}", reliability_csv_string(&reliability_table(&report)));
    Ok(())
}
