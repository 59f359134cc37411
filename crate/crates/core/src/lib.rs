//! Calibration tooling for object detectors.
//!
//! Two halves:
//!
//! * measurement: [`metrics`] computes ECE, D-ECE and D-UCE with
//!   reliability tables, fed by [`geometry::match_detections`] over COCO
//!   files read by [`coco`];
//! * train-time mechanisms: [`calibration`] holds decoder-variance
//!   uncertainty, uncertainty-guided logit modulation, prototype logit
//!   mixing with smoothed labels, focal loss and temperature scaling, all
//!   with hand-derived gradients. [`toy`] trains a small synthetic
//!   multi-layer detector head with them to compare the ablation arms.
//!
//! The `detcal` binary wraps these as subcommands (see [`cli`]).

pub mod assignment;
pub mod calibration;
pub mod cli;
pub mod coco;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod numeric;
pub mod tensor;
pub mod toy;

pub use error::{Error, Result};
pub use tensor::Tensor;
