//! Image corruptions for stress evaluation and the planted synthetic fixture.

mod corrupt;
mod synthetic;

pub use corrupt::{corrupt, corrupt_image, Corruption, CorruptionKind, CorruptionSpec};
pub use synthetic::{gen_synthetic, SyntheticFixture, SyntheticSpec, LAYER_NORM_SCALE};
