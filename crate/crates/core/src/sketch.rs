//! Tensor Sketch embedding of outer products.
//!
//! `theta(x) = IFFT(FFT(CS1 x) * FFT(CS2 x))` where each count sketch
//! `CSj` scatters `x_i * s_j(i)` into bucket `h_j(i)`. Inner products of
//! sketches estimate `(x . y)^2` without bias, so weighted sums of sketches
//! approximate weighted sums of outer products in `k` dimensions.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::aggregate::{Descriptor, Encoding, Weights};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::scalar::Scalar;

pub const DEFAULT_SKETCH_DIM: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SketchConfig {
    pub k: usize,
    pub seed: u64,
}

impl Default for SketchConfig {
    fn default() -> Self {
        Self { k: DEFAULT_SKETCH_DIM, seed: 0 }
    }
}

/// Hash tables and FFT plans for one `(d, k, seed)` triple.
///
/// Descriptors are only comparable when built with the same sketch, so a
/// single instance is shared across every image of a run.
#[derive(Clone)]
pub struct TensorSketch<T: Scalar> {
    d: usize,
    cfg: SketchConfig,
    buckets: [Vec<usize>; 2],
    signs: [Vec<T>; 2],
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> fmt::Debug for TensorSketch<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TensorSketch").field("d", &self.d).field("cfg", &self.cfg).finish()
    }
}

impl<T: Scalar> TensorSketch<T> {
    pub fn new(d: usize, cfg: SketchConfig) -> Result<Self> {
        if cfg.k == 0 || d == 0 {
            return Err(Error::InvalidConfig("sketch needs k >= 1 and d >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut draw = || {
            let buckets: Vec<usize> = (0..d).map(|_| rng.random_range(0..cfg.k)).collect();
            let signs: Vec<T> =
                (0..d).map(|_| if rng.random::<bool>() { T::one() } else { -T::one() }).collect();
            (buckets, signs)
        };
        let (h1, s1) = draw();
        let (h2, s2) = draw();
        let mut planner = FftPlanner::new();
        Ok(Self {
            d,
            cfg,
            buckets: [h1, h2],
            signs: [s1, s2],
            forward: planner.plan_fft_forward(cfg.k),
            inverse: planner.plan_fft_inverse(cfg.k),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.cfg.k
    }

    pub fn config(&self) -> SketchConfig {
        self.cfg
    }

    pub fn buckets(&self, which: usize) -> &[usize] {
        &self.buckets[which]
    }

    pub fn signs(&self, which: usize) -> &[T] {
        &self.signs[which]
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: x.len() });
        }
        Ok(())
    }

    /// Count sketch `which` (0 or 1) of `x`.
    pub fn count_sketch(&self, which: usize, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        let mut out = vec![T::zero(); self.cfg.k];
        for ((&h, &s), &v) in self.buckets[which].iter().zip(&self.signs[which]).zip(x) {
            out[h] += s * v;
        }
        Ok(out)
    }

    /// `theta(x)`: circular convolution of the two count sketches.
    pub fn sketch_feature(&self, x: &[T]) -> Result<Vec<T>> {
        let to_complex = |v: Vec<T>| -> Vec<Complex<T>> {
            v.into_iter().map(|re| Complex::new(re, T::zero())).collect()
        };
        let mut a = to_complex(self.count_sketch(0, x)?);
        let mut b = to_complex(self.count_sketch(1, x)?);
        self.forward.process(&mut a);
        self.forward.process(&mut b);
        a.iter_mut().zip(&b).for_each(|(p, q)| *p *= *q);
        self.inverse.process(&mut a);
        let scale = T::of_usize(self.cfg.k);
        // The imaginary part is round-off: both inputs are real.
        Ok(a.into_iter().map(|c| c.re / scale).collect())
    }

    pub fn sketch_features(&self, features: &FeatureSet<T>) -> Result<Vec<Vec<T>>> {
        features
            .data()
            .rows()
            .into_iter()
            .map(|r| self.sketch_feature(r.as_slice().expect("contiguous rows")))
            .collect()
    }
}

/// Sketched second-order aggregate `sum_i alpha_i theta(x_i)`.
pub fn aggregate_second_order_sketched<T: Scalar>(
    features: &FeatureSet<T>,
    weights: Weights<'_, T>,
    sketch: &TensorSketch<T>,
) -> Result<Descriptor<T>> {
    weights.resolve(features.n())?;
    if features.d() != sketch.d() {
        return Err(Error::DimensionMismatch { expected: sketch.d(), found: features.d() });
    }
    let mut sum = vec![T::zero(); sketch.k()];
    for (i, row) in features.data().rows().into_iter().enumerate() {
        let theta = sketch.sketch_feature(row.as_slice().expect("contiguous rows"))?;
        let a = weights.get(i);
        sum.iter_mut().zip(theta).for_each(|(s, t)| *s += a * t);
    }
    Descriptor::new(sum, Encoding::SecondSketch)
}
