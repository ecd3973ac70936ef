//! Fisher–Rao geometry of parametric models and the second-order
//! covariance correction of score-root estimators.
//!
//! The pipeline is
//! [`model`] → [`expectation`] (score moments) → [`geometry`] (intrinsic
//! curvature) and [`immersion`] (extrinsic curvature of `θ ↦ √p_θ`) →
//! [`correction`] (the tensor `P = ½R♯ + S♯ + D` and the covariance
//! prediction `I⁻¹/n + I⁻¹PI⁻¹/n²`). [`mc_harness`] checks predictions by
//! simulation and [`singular`] handles learning rates of singular models
//! under an additive normal-crossing form.
//!
//! All numerical code is generic over [`Scalar`] (`f32`/`f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the stated
//! tolerances assume.

pub mod error;
pub mod expectation;
pub mod correction;
pub mod geometry;
pub mod immersion;
pub mod linalg;
pub mod mc_harness;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod singular;
pub mod tensor;

pub use error::{Error, Result};
pub use correction::{Analysis, CorrectionReport, NormalChart};
pub use expectation::{ExpectationEngine, MomentTable};
pub use geometry::{FdPolicy, GeometrySnapshot};
pub use immersion::ImmersionReport;
pub use mc_harness::{SimulationPlan, SimulationResult};
pub use model::{ParametricModel, SampleSpace};
pub use rng::RngStream;
pub use scalar::Scalar;
pub use singular::{NormalCrossingSpec, SingularReport};
pub use tensor::Tensor;

/// Crate version, stamped into every emitted report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Tensor64 = Tensor<f64>;
pub type MomentTable64 = MomentTable<f64>;
pub type GeometrySnapshot64 = GeometrySnapshot<f64>;
pub type ImmersionReport64 = ImmersionReport<f64>;
pub type CorrectionReport64 = CorrectionReport<f64>;
pub type NormalChart64 = NormalChart<f64>;
pub type Analysis64 = Analysis<f64>;
