//! Second-order democratic feature aggregation.
//!
//! A set of local features `x_1..x_n` is pooled into one descriptor by
//! reweighting the outer products `x_i x_i^T` so that every feature
//! contributes (close to) equally. Weights come from a dampened Sinkhorn
//! iteration on the squared Gram matrix, which never forms a `d^2` vector.
//! The crate also provides the alternatives and analysis tools around it:
//! matrix power normalization, Tensor Sketch embeddings, contribution
//! bounds, spectrum summaries and a linear one-vs-rest classifier.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod analysis;
pub mod bench;
pub mod classify;
pub mod error;
pub mod features;
pub mod io;
pub mod kernel;
pub mod pipeline;
pub mod scalar;
pub mod sinkhorn;
pub mod sketch;
pub mod spectral;

pub use aggregate::{
    aggregate_first_order, aggregate_second_order, contribution, postprocess, Descriptor, Encoder, Encoding,
    Weights,
};
pub use analysis::{contributions_vs_power, spectrum_report, verify_bounds, ContributionReport, SpectrumMethod};
pub use error::{Error, Result};
pub use features::{generate_synthetic, load_features, FeatureSet, RowPolicy, SyntheticSpec};
pub use io::MatrixFormat;
pub use kernel::{clamp_negatives, raw_kernel, second_order_kernel, KernelMatrix, Order};
pub use scalar::Scalar;
pub use sinkhorn::{solve_democratic, solve_gamma_democratic, DemocraticWeights, SinkhornConfig};
pub use sketch::{aggregate_second_order_sketched, SketchConfig, TensorSketch};
pub use spectral::{eig_sym, in_span_of_outer_products, matrix_power, newton_schulz_sqrt, SpectralDecomposition};

pub type FeatureSet64 = FeatureSet<f64>;
pub type FeatureSet32 = FeatureSet<f32>;
pub type KernelMatrix64 = KernelMatrix<f64>;
pub type DemocraticWeights64 = DemocraticWeights<f64>;
pub type Descriptor64 = Descriptor<f64>;
pub type SinkhornConfig64 = SinkhornConfig<f64>;
pub type TensorSketch64 = TensorSketch<f64>;
pub type SpectralDecomposition64 = SpectralDecomposition<f64>;
pub type ContributionReport64 = ContributionReport<f64>;
