//! Feature-space hallucination monitors for image-to-image models.
//!
//! The crate scores per-sample confidence from pooled generator activations
//! (k-th nearest neighbour distance to a truncated "safe" calibration bank,
//! balanced by the feature norm), self-tunes the monitor parameters with a
//! grid search, and evaluates any confidence score by its hallucination
//! rejection preference (HRP): the area under the rejection curve normalized
//! between a random monitor (0) and a quality oracle (1).
//!
//! Numerical code is generic over [`Scalar`] (`f32` / `f64`). On-disk feature
//! dumps are always `f32`; quality tables are `f64`.

pub mod autotune;
pub mod error;
pub mod hrpeval;
pub mod matrix;
pub mod perturb;
pub mod quality;
pub mod scalar;
pub mod scorer;
pub mod tensorstore;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub use autotune::{Grid, TuneOptions, TuneResult};
pub use hrpeval::{HrpReport, MetricHrp, RejectionCurve};
pub use quality::{ImageTensor, TauResult};
pub use scorer::{Fusion, Monitor, MonitorConfig, SafeBank, VariantKind, VariantSpec};
pub use tensorstore::{Dataset, DatasetManifest, DepthRatio, FeatureDump, QualityTable, SplitAssignment};

/// Confidence values are always carried in double precision, whatever the
/// feature scalar type.
pub type Confidence = f64;

pub type Matrix32 = Matrix<f32>;
pub type Matrix64 = Matrix<f64>;
pub type SafeBank32 = SafeBank<f32>;
pub type SafeBank64 = SafeBank<f64>;
pub type Monitor32 = Monitor<f32>;
pub type Monitor64 = Monitor<f64>;
pub type Image32 = ImageTensor<f32>;
pub type Image64 = ImageTensor<f64>;
