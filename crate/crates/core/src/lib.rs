//! Convexified attention classifier for capacitive touch gestures.
//!
//! Patches of a gesture are lifted with random Fourier features, attended
//! with a Euclidean simplex projection instead of softmax, and scored by a
//! weight tensor trained with projected gradient descent under a nuclear-norm
//! constraint. The crate also holds the preprocessing pipeline, a synthetic
//! gesture generator, a compact binary model format and executable checks of
//! the convexity properties.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod error;
pub mod features;
pub mod losses;
pub mod model;
pub mod numkernel;
pub mod projections;
pub mod trainer;
pub mod verify;

pub use dataio::{
    load_dataset, save_dataset, synth_generate, Dataset, GestureKind, GestureSample, NormStats,
    RawStream, SynthConfig,
};
pub use error::{CsvError, Error, FormatError, Result};
pub use features::{FrameLayout, PatchSpec, RffMap};
pub use losses::LossKind;
pub use model::{
    param_count, predict, ModelBundle, ParamCount, Precision, Prediction, WeightTensor,
};
pub use numkernel::{Mat, RngStream};
pub use projections::{nuclear_ball_project, simplex_project, SimplexVector};
pub use trainer::{kfold_evaluate, split_evaluate, train, Preset, TrainConfig, TrainReport};
