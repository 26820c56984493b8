//! Pseudo-label engine for self-training 3D oriented-box detectors.
//!
//! The crate covers the whole pseudo-labelling side of a self-training
//! loop: oriented box geometry and rotated IoU, per-object and world
//! augmentations with a curriculum intensity schedule, IoU-scored triplet
//! partitioning of raw detections, a memory bank that fuses labels across
//! rounds with ensemble matching and unmatched-box voting, detection
//! metrics, and a simulated detector that closes the loop without a
//! neural network.
//!
//! Geometry, augmentation, labelling, memory and metrics are generic over
//! [`Scalar`] (`f32` or `f64`). The aliases at the crate root pin the
//! `f64` instantiation that the simulator and file formats use.

pub mod augmentation;
pub mod error;
pub mod geometry;
pub mod io;
pub mod memory_bank;
pub mod metrics;
pub mod pseudo_label;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision point.
pub type Point3 = geometry::Point3<f64>;
/// Double-precision oriented box.
pub type Box3D = geometry::Box3<f64>;
/// Double-precision scored detection.
pub type Detection = geometry::Detection<f64>;
/// Double-precision BEV polygon.
pub type ConvexPolygon2 = geometry::ConvexPolygon2<f64>;
/// Double-precision memory-bank element.
pub type PseudoBox = pseudo_label::PseudoBox<f64>;
/// Double-precision per-scene memory.
pub type SceneMemory = memory_bank::SceneMemory<f64>;
/// Double-precision memory bank.
pub type MemoryBank = memory_bank::MemoryBank<f64>;
/// Double-precision scene.
pub type Scene = augmentation::Scene<f64>;
/// Double-precision quality report.
pub type QualityReport = metrics::QualityReport<f64>;

/// Single-precision oriented box.
pub type Box3F = geometry::Box3<f32>;
/// Single-precision scored detection.
pub type DetectionF = geometry::Detection<f32>;
