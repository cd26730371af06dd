//! Optical-flow engines and an evaluation protocol for facial-expression
//! motion: temporal normalization, motion descriptors, linear-SVM AUC
//! scoring, cross-engine training augmentation, and a synthetic
//! ground-truth generator.

pub mod augment;
pub mod descriptors;
pub mod engines;
pub mod error;
pub mod eval;
pub mod flo;
pub mod flow;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod preprocess;
pub mod synth;

pub use error::{Error, Result};
pub use flow::{FlowField, PolarPlanes};
pub use image::{GrayImage, ImagePyramid};
