//! Heterogeneous angular spectrum propagation for ultrasound fields.
//!
//! The crate provides grid I/O, sound-speed media, spectral transforms,
//! homogeneous and heterogeneous marching, phase-corrected transmit focusing,
//! passive acoustic mapping and synthetic phantoms.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod focusing;
pub mod gridio;
pub mod medium;
pub mod pam;
pub mod phantom;
pub mod propagator;
pub mod spectral;

pub use error::{AsaError, Result};
pub use focusing::{FocalMetrics, FocusMethod, FocusPlan, FocusTarget};
pub use gridio::{ArrayGeometry, DType, Grid, GridData, Lattice, RfRecording};
pub use medium::{LambdaPlane, MediumMap};
pub use num_complex::Complex64;
pub use pam::{PamConfig, PamResult, Peak};
pub use phantom::{PhantomKind, PhantomSpec};
pub use propagator::{Direction, FieldVolume, MarchConfig, Marcher};
pub use spectral::{PlaneShape, SpectrumPlane, TransformPlan, Window2, WindowKind, WindowSpec};
