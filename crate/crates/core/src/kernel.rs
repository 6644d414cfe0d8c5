//! Pairwise kernel matrices for the raw (first-order) and outer-product
//! (second-order) encoders.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::scalar::Scalar;

/// Which encoder a kernel (or a pipeline) corresponds to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Order {
    First,
    Second,
}

/// Dense symmetric `n x n` kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix<T> {
    values: Array2<T>,
    order: Order,
}

impl<T: Scalar> KernelMatrix<T> {
    /// Wraps an existing matrix, checking shape, symmetry and (for second
    /// order) non-negativity.
    pub fn from_values(values: Array2<T>, order: Order) -> Result<Self> {
        let (n, m) = values.dim();
        if n != m {
            return Err(Error::DimensionMismatch { expected: n, found: m });
        }
        let deviation = max_asymmetry(&values);
        if deviation > 1e-12 {
            return Err(Error::NotSymmetric { deviation });
        }
        if order == Order::Second {
            if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| **v < T::zero()) {
                return Err(Error::NonPositiveKernel { row, col });
            }
        }
        Ok(Self { values, order })
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn row_sums(&self) -> Vec<T> {
        self.values.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn into_values(self) -> Array2<T> {
        self.values
    }

    /// Debug dump, one kernel row per line.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        crate::io::write_matrix(writer, &self.values, crate::io::MatrixFormat::Csv)
    }
}

fn max_asymmetry<T: Scalar>(m: &Array2<T>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[[i, j]] - m[[j, i]]).abs().as_f64());
        }
    }
    worst
}

/// Copies the upper triangle onto the lower one.
pub(crate) fn mirror_upper<T: Scalar>(m: &mut Array2<T>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            m[[i, j]] = m[[j, i]];
        }
    }
}

/// Gram matrix of the raw features, `K[i][j] = x_i . x_j`.
pub fn raw_kernel<T: Scalar>(features: &FeatureSet<T>) -> KernelMatrix<T> {
    let x = features.data();
    let mut values = x.dot(&x.t());
    mirror_upper(&mut values);
    KernelMatrix { values, order: Order::First }
}

/// Kernel of the outer-product encoder, `K[i][j] = (x_i . x_j)^2`.
///
/// Obtained by squaring the raw Gram matrix entrywise, so no `d^2`
/// vector is ever formed.
pub fn second_order_kernel<T: Scalar>(features: &FeatureSet<T>) -> KernelMatrix<T> {
    let mut values = raw_kernel(features).values;
    values.mapv_inplace(|v| v * v);
    KernelMatrix { values, order: Order::Second }
}

/// Replaces negative entries by zero.
pub fn clamp_negatives<T: Scalar>(kernel: &KernelMatrix<T>) -> KernelMatrix<T> {
    KernelMatrix {
        values: kernel.values.mapv(|v| if v < T::zero() { T::zero() } else { v }),
        order: kernel.order,
    }
}
