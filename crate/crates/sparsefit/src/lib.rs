//! Automated learning of transparent linear models over tabular data.
//!
//! The library turns a [`DataTable`] into a fitted, explainable regression
//! model in four stages:
//!
//! 1. **Table transforms** ([`transform`]) derive new columns: calendar
//!    fields, per-entity rolling aggregates, log-scaled targets.
//! 2. **Encoders** ([`encoder`]) map each input column to a block of numeric
//!    features, each carrying a human-readable derivation string.
//! 3. **Matrix transforms** ([`sparse`]) expand the encoded [`SparseMatrix`]
//!    with polynomial interaction features.
//! 4. **Fitting** ([`linear`]) standardizes the features and minimizes a
//!    ridge- or lasso-penalized least-squares objective with L-BFGS.
//!
//! A fitted pipeline is packaged as a [`FittedModel`]: it predicts new rows,
//! decomposes every prediction into per-feature reason codes, and serializes
//! to self-describing JSON. [`explore`] searches over unspecified pipeline
//! choices (encoders, interactions, regularization) under a time budget
//! described by a [`Blueprint`].
//!
//! All numeric kernels are generic over the scalar type via [`Scalar`];
//! concrete `f64` aliases are exported at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

pub mod blueprint;
pub mod encoder;
pub mod error;
pub mod explore;
pub mod linear;
pub mod model;
pub mod sparse;
pub mod table;
pub mod transform;

pub use blueprint::{Blueprint, EncoderChoice, Explorations, InteractionChoice, RegChoice};
pub use encoder::{Encoder, EncoderKind, EncoderParams};
pub use error::Error;
pub use explore::{explore, ExperimentRecord, SearchLog, SearchOutcome};
pub use linear::{fit_linear, FitOptions, LinearModel, Regularization};
pub use model::{
    fit_pipeline, partial_dependence, FittedModel, GridPoint, Instructions, MultiplicativeView,
    Prediction, ReasonCode,
};
pub use sparse::{interaction_transform, FeatureMeta, SparseMatrix};
pub use table::{Column, ColumnKind, DataTable, Value};
pub use transform::{apply_table_transform, TableTransform};

/// Floating-point scalar the numeric kernels are generic over.
///
/// Implemented for `f32` and `f64`; the engine-facing aliases below fix `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Default scalar type for the concrete aliases.
pub type Fx = f64;

/// [`DataTable`] over the default scalar.
pub type Table = DataTable<Fx>;
/// [`SparseMatrix`] over the default scalar.
pub type Matrix = SparseMatrix<Fx>;
/// [`LinearModel`] over the default scalar.
pub type Linear = LinearModel<Fx>;
/// [`FittedModel`] over the default scalar.
pub type Model = FittedModel<Fx>;
