//! Multi-task gradient combination, interference monitoring and a desk-scale
//! multi-task regression testbed.
//!
//! ```
//! use mtlab_core::{combiners::mgda, GradientLevel, TaskGradients};
//!
//! let g = TaskGradients::from_columns(&[[1.0, 0.0], [0.0, 1.0]], GradientLevel::Parameter)?;
//! let d = mgda(&g, 250, 1e-8)?.direction.unwrap();
//! assert!((d.values()[0] - 0.5).abs() < 1e-12);
//! # Ok::<(), mtlab_core::Error>(())
//! ```

pub mod combiners;
pub mod error;
pub mod linalg;
pub mod monitors;
pub mod toylab;
pub mod types;

pub use combiners::{combine, CombineResult, CombinerConfig, CombinerState, Family, Method};
pub use error::{Error, Result};
pub use types::{
    GradWeights, GradientLevel, GramMatrix, LossVector, SquareMatrix, TaskGradients,
    UpdateDirection, WeightConstraint,
};
