//! Weighted first- and second-order aggregation, per-feature contributions
//! and descriptor post-processing.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::io::{self, MatrixFormat};
use crate::kernel::mirror_upper;
use crate::scalar::{dot, Scalar};
use crate::sinkhorn::DemocraticWeights;
use crate::sketch::TensorSketch;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    First,
    SecondExplicit,
    SecondSketch,
}

/// Per-feature aggregation weights.
#[derive(Clone, Copy, Debug)]
pub enum Weights<'a, T> {
    /// Every weight is one: plain sum pooling.
    Uniform,
    Given(&'a [T]),
}

impl<'a, T: Scalar> Weights<'a, T> {
    pub(crate) fn resolve(&self, n: usize) -> Result<Option<&'a [T]>> {
        match *self {
            Weights::Uniform => Ok(None),
            Weights::Given(w) if w.len() == n => Ok(Some(w)),
            Weights::Given(w) => Err(Error::LengthMismatch { expected: n, found: w.len() }),
        }
    }

    pub(crate) fn get(&self, i: usize) -> T {
        match *self {
            Weights::Uniform => T::one(),
            Weights::Given(w) => w[i],
        }
    }
}

impl<'a, T> From<&'a DemocraticWeights<T>> for Weights<'a, T> {
    fn from(w: &'a DemocraticWeights<T>) -> Self {
        Weights::Given(&w.alpha)
    }
}

/// A global image representation.
///
/// Explicit second-order descriptors keep their `d x d` layout (`side = d`)
/// and flatten row-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Descriptor<T> {
    values: Vec<T>,
    encoding: Encoding,
    normalized: bool,
    side: Option<usize>,
}

impl<T: Scalar> Descriptor<T> {
    pub fn new(values: Vec<T>, encoding: Encoding) -> Result<Self> {
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { row: 0, col });
        }
        let side = match encoding {
            Encoding::SecondExplicit => {
                let side = (values.len() as f64).sqrt().round() as usize;
                if side * side != values.len() {
                    return Err(Error::DimensionMismatch { expected: side * side, found: values.len() });
                }
                Some(side)
            }
            _ => None,
        };
        Ok(Self { values, encoding, normalized: false, side })
    }

    /// Explicit second-order descriptor from a square matrix.
    pub fn from_matrix(matrix: &Array2<T>) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(Error::DimensionMismatch { expected: r, found: c });
        }
        Self::new(matrix.iter().copied().collect(), Encoding::SecondExplicit)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `d x d` view of an explicit second-order descriptor.
    pub fn as_matrix(&self) -> Option<ArrayView2<'_, T>> {
        self.side
            .map(|d| ArrayView2::from_shape((d, d), &self.values).expect("side^2 == len"))
    }

    pub fn norm(&self) -> T {
        dot(&self.values, &self.values).sqrt()
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch { expected: self.len(), found: other.len() });
        }
        Ok(dot(&self.values, &other.values))
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Descriptor as a single-row matrix, ready for the shared file formats.
    pub fn to_row(&self) -> Array2<T> {
        Array2::from_shape_vec((1, self.len()), self.values.clone()).expect("1 x len")
    }

    pub fn save(&self, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
        io::save_matrix(path, &self.to_row(), format)
    }

    pub fn write<W: std::io::Write>(&self, writer: W, format: MatrixFormat) -> Result<()> {
        io::write_matrix(writer, &self.to_row(), format)
    }
}

/// Reads a descriptor file written by [`Descriptor::save`]. The encoding
/// is not stored on disk and must be supplied by the caller.
pub fn load_descriptor<T: Scalar>(
    path: impl AsRef<Path>,
    format: MatrixFormat,
    encoding: Encoding,
) -> Result<Descriptor<T>> {
    let m: Array2<T> = io::load_matrix(path, format)?;
    if m.nrows() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: m.nrows() });
    }
    Descriptor::new(m.into_iter().collect(), encoding)
}

/// `sum_i alpha_i x_i x_i^T` as a `d x d` matrix.
pub fn weighted_outer_sum<T: Scalar>(features: &FeatureSet<T>, weights: Weights<'_, T>) -> Result<Array2<T>> {
    let x = features.data();
    let mut a = match weights.resolve(features.n())? {
        None => x.t().dot(x),
        Some(w) => {
            let scaled = x * &Array1::from(w.to_vec()).insert_axis(ndarray::Axis(1));
            x.t().dot(&scaled)
        }
    };
    mirror_upper(&mut a);
    Ok(a)
}

/// Explicit second-order aggregate `sum_i alpha_i x_i x_i^T`.
pub fn aggregate_second_order<T: Scalar>(
    features: &FeatureSet<T>,
    weights: Weights<'_, T>,
) -> Result<Descriptor<T>> {
    Descriptor::from_matrix(&weighted_outer_sum(features, weights)?)
}

/// First-order aggregate `sum_i alpha_i x_i`.
pub fn aggregate_first_order<T: Scalar>(
    features: &FeatureSet<T>,
    weights: Weights<'_, T>,
) -> Result<Descriptor<T>> {
    weights.resolve(features.n())?;
    let mut sum = vec![T::zero(); features.d()];
    for (i, row) in features.data().rows().into_iter().enumerate() {
        let a = weights.get(i);
        sum.iter_mut().zip(row).for_each(|(s, &v)| *s += a * v);
    }
    Descriptor::new(sum, Encoding::First)
}

/// The encoder a descriptor was built with.
#[derive(Clone, Copy, Debug)]
pub enum Encoder<'a, T: Scalar> {
    First,
    SecondExplicit,
    SecondSketch(&'a TensorSketch<T>),
}

impl<T: Scalar> Encoder<'_, T> {
    pub fn encoding(&self) -> Encoding {
        match self {
            Encoder::First => Encoding::First,
            Encoder::SecondExplicit => Encoding::SecondExplicit,
            Encoder::SecondSketch(_) => Encoding::SecondSketch,
        }
    }
}

/// Contribution of feature `index`: `alpha(x) * phi(x) . xi`, with
/// `alpha(x) = 1` for uniform weights.
pub fn contribution<T: Scalar>(
    index: usize,
    features: &FeatureSet<T>,
    weights: Weights<'_, T>,
    xi: &Descriptor<T>,
    encoder: Encoder<'_, T>,
) -> Result<T> {
    if index >= features.n() {
        return Err(Error::IndexOutOfRange { index, len: features.n() });
    }
    weights.resolve(features.n())?;
    if encoder.encoding() != xi.encoding() {
        return Err(Error::EncodingMismatch { expected: encoder.encoding(), found: xi.encoding() });
    }
    let x = features.row(index);
    let x = x.as_slice().expect("feature rows are contiguous");
    let similarity = match encoder {
        Encoder::First => {
            if xi.len() != x.len() {
                return Err(Error::LengthMismatch { expected: x.len(), found: xi.len() });
            }
            dot(x, xi.values())
        }
        Encoder::SecondExplicit => {
            let m = xi.as_matrix().expect("explicit descriptors carry their side");
            if m.nrows() != x.len() {
                return Err(Error::DimensionMismatch { expected: x.len(), found: m.nrows() });
            }
            // vec(x x^T) . vec(M) = x^T M x
            m.rows()
                .into_iter()
                .zip(x)
                .map(|(row, &xi_)| xi_ * dot(row.as_slice().unwrap(), x))
                .fold(T::zero(), |a, b| a + b)
        }
        Encoder::SecondSketch(sketch) => {
            let theta = sketch.sketch_feature(x)?;
            if theta.len() != xi.len() {
                return Err(Error::LengthMismatch { expected: theta.len(), found: xi.len() });
            }
            dot(&theta, xi.values())
        }
    };
    Ok(weights.get(index) * similarity)
}

/// Element-wise signed square root followed by l2 normalization.
pub fn postprocess<T: Scalar>(descriptor: &Descriptor<T>) -> Result<Descriptor<T>> {
    let rooted: Vec<T> = descriptor
        .values
        .iter()
        .map(|&v| if v < T::zero() { -(-v).sqrt() } else { v.sqrt() })
        .collect();
    let norm = dot(&rooted, &rooted).sqrt();
    if !(norm > T::zero()) {
        return Err(Error::ZeroDescriptor);
    }
    Ok(Descriptor {
        values: rooted.into_iter().map(|v| v / norm).collect(),
        encoding: descriptor.encoding,
        normalized: true,
        side: descriptor.side,
    })
}
