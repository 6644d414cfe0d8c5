//! Feature sets: the ordered local descriptors of one image, plus a seeded
//! synthetic generator that mimics bursty convolutional activations.

use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, MatrixFormat};
use crate::scalar::Scalar;

/// What to do with rows whose norm falls below [`RowPolicy::min_norm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ZeroRowPolicy {
    #[default]
    Reject,
    Drop,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowPolicy {
    pub on_zero: ZeroRowPolicy,
    pub min_norm: f64,
}

impl Default for RowPolicy {
    fn default() -> Self {
        Self { on_zero: ZeroRowPolicy::Reject, min_norm: 1e-12 }
    }
}

impl RowPolicy {
    pub fn dropping() -> Self {
        Self { on_zero: ZeroRowPolicy::Drop, ..Self::default() }
    }
}

/// `n` feature vectors of dimension `d`, stored row-major (row `i` is `x_i`).
///
/// Construction validates that every entry is finite and every row has a
/// strictly positive norm, which is what guarantees a democratic solution
/// exists for the outer-product kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet<T> {
    data: Array2<T>,
    source_shape: Option<(usize, usize, usize)>,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn new(data: Array2<T>) -> Result<Self> {
        Self::with_policy(data, RowPolicy::default())
    }

    pub fn with_policy(data: Array2<T>, policy: RowPolicy) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(Error::EmptyFeatureSet);
        }
        for ((row, col), v) in data.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry { row, col });
            }
        }
        let min_sq = T::of(policy.min_norm * policy.min_norm);
        let mut keep = Vec::with_capacity(n);
        for (i, row) in data.rows().into_iter().enumerate() {
            let sq = row.iter().fold(T::zero(), |acc, &v| acc + v * v);
            if sq > min_sq && sq > T::zero() {
                keep.push(i);
            } else if policy.on_zero == ZeroRowPolicy::Reject {
                return Err(Error::ZeroRow { row: i });
            }
        }
        let data = if keep.len() == n {
            data
        } else if keep.is_empty() {
            return Err(Error::EmptyFeatureSet);
        } else {
            data.select(Axis(0), &keep)
        };
        Ok(Self { data, source_shape: None })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyFeatureSet);
        }
        let d = rows[0].len();
        let mut flat = Vec::with_capacity(n * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: row.len() });
            }
            flat.extend_from_slice(row);
        }
        let data = Array2::from_shape_vec((n, d), flat).expect("shape checked above");
        Self::new(data)
    }

    /// Records the `W x H x D` feature map the rows came from.
    pub fn with_source_shape(mut self, width: usize, height: usize, depth: usize) -> Result<Self> {
        if width * height != self.n() {
            return Err(Error::DimensionMismatch { expected: width * height, found: self.n() });
        }
        if depth != self.d() {
            return Err(Error::DimensionMismatch { expected: depth, found: self.d() });
        }
        self.source_shape = Some((width, height, depth));
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<T> {
        &self.data
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.data.row(i)
    }

    pub fn source_shape(&self) -> Option<(usize, usize, usize)> {
        self.source_shape
    }

    pub fn squared_norms(&self) -> Vec<T> {
        self.data.rows().into_iter().map(|r| r.dot(&r)).collect()
    }

    /// Reorders rows so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), found: perm.len() });
        }
        let mut seen = vec![false; self.n()];
        for &p in perm {
            if p >= self.n() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidConfig("not a permutation".into()));
            }
        }
        Ok(Self { data: self.data.select(Axis(0), perm), source_shape: None })
    }

    pub fn into_data(self) -> Array2<T> {
        self.data
    }
}

pub fn load_features<T: Scalar>(
    path: impl AsRef<Path>,
    format: MatrixFormat,
    policy: RowPolicy,
) -> Result<FeatureSet<T>> {
    FeatureSet::with_policy(io::load_matrix(path, format)?, policy)
}

pub fn save_features<T: Scalar>(
    features: &FeatureSet<T>,
    path: impl AsRef<Path>,
    format: MatrixFormat,
) -> Result<()> {
    io::save_matrix(path, features.data(), format)
}

/// Parameters for [`generate_synthetic`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    /// Fraction of rows that are near-copies of one high-energy direction.
    pub burst_fraction: f64,
    /// Fraction of rows drawn from the class subspace.
    pub signal_fraction: f64,
    /// Per-coordinate standard deviation of the additive Gaussian noise.
    pub noise_scale: f64,
    pub seed: u64,
    pub class_id: usize,
}

/// Norm of burst rows relative to unit-norm signal directions.
pub const BURST_AMPLITUDE: f64 = 4.0;
pub const SIGNAL_AMPLITUDE: f64 = 1.0;
/// Relative jitter on burst rows; keeps their cosine to the burst direction above 0.99.
pub const BURST_JITTER: f64 = 0.02;
/// Dimension of each class's signal subspace.
pub const SIGNAL_RANK: usize = 2;
const DICTIONARY_SEED: u64 = 0x5EED_D1C7;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidConfig("synthetic spec needs n >= 1 and d >= 1".into()));
        }
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if !frac_ok(self.burst_fraction) || !frac_ok(self.signal_fraction) {
            return Err(Error::InvalidConfig("fractions must lie in [0, 1]".into()));
        }
        if self.burst_fraction + self.signal_fraction > 1.0 + 1e-12 {
            return Err(Error::InvalidConfig("burst_fraction + signal_fraction exceeds 1".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidConfig("noise_scale must be finite and >= 0".into()));
        }
        let (bursts, signals) = self.counts();
        if bursts + signals < self.n && self.noise_scale == 0.0 {
            return Err(Error::InvalidConfig("noise rows would be identically zero".into()));
        }
        Ok(())
    }

    /// Number of burst rows and signal rows; the remainder is pure noise.
    pub fn counts(&self) -> (usize, usize) {
        let bursts = ((self.burst_fraction * self.n as f64).round() as usize).min(self.n);
        let signals = ((self.signal_fraction * self.n as f64).round() as usize).min(self.n - bursts);
        (bursts, signals)
    }
}

/// Orthonormal columns spanning the signal subspace of `class_id` in `R^d`.
///
/// Classes draw disjoint columns of a fixed random orthonormal basis, so
/// subspaces of distinct classes are orthogonal while `(class + 1) * SIGNAL_RANK <= d`;
/// beyond that the columns wrap around.
pub fn class_directions(d: usize, class_id: usize) -> Array2<f64> {
    let basis = fixed_basis(d);
    let rank = SIGNAL_RANK.min(d);
    let cols: Vec<usize> = (0..rank).map(|j| (class_id * rank + j) % d).collect();
    basis.select(Axis(1), &cols)
}

fn fixed_basis(d: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(DICTIONARY_SEED ^ d as u64);
    let mut basis = Array2::<f64>::zeros((d, d));
    let mut j = 0;
    while j < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for k in 0..j {
            let col = basis.column(k);
            let proj: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(col.iter()).for_each(|(x, c)| *x -= proj * c);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        basis.column_mut(j).iter_mut().zip(&v).for_each(|(b, x)| *b = x / norm);
        j += 1;
    }
    basis
}

fn unit_gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Deterministically generates a bursty feature set.
///
/// Rows are laid out as bursts, then class signal, then noise. Burst rows
/// are `BURST_AMPLITUDE * u` plus a small jitter for one random unit `u`
/// per seed; signal rows are random unit combinations of the class
/// directions plus noise; the rest is isotropic noise.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<FeatureSet<T>> {
    spec.validate()?;
    let SyntheticSpec { n, d, noise_scale, .. } = *spec;
    let (bursts, signals) = spec.counts();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let burst_dir = unit_gaussian(&mut rng, d);
    let class_dirs = class_directions(d, spec.class_id);
    let jitter = BURST_AMPLITUDE * BURST_JITTER / (d as f64).sqrt();

    let mut data = Array2::<T>::zeros((n, d));
    for (i, mut row) in data.rows_mut().into_iter().enumerate() {
        let values: Vec<f64> = if i < bursts {
            let scale = BURST_AMPLITUDE * (1.0 + 0.1 * rng.sample::<f64, _>(StandardNormal)).abs();
            burst_dir
                .iter()
                .map(|u| scale * u + jitter * rng.sample::<f64, _>(StandardNormal))
                .collect()
        } else if i < bursts + signals {
            let coeffs = unit_gaussian(&mut rng, class_dirs.ncols());
            let dir = class_dirs.dot(&ndarray::Array1::from(coeffs));
            dir.iter()
                .map(|u| SIGNAL_AMPLITUDE * u + noise_scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        } else {
            (0..d).map(|_| noise_scale * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        row.iter_mut().zip(values).for_each(|(r, v)| *r = T::of(v));
    }
    FeatureSet::new(data).map_err(|e| match e {
        Error::ZeroRow { row } => {
            Error::InvalidConfig(format!("synthetic spec produced a zero row ({row})"))
        }
        other => other,
    })
}
