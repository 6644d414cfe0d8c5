//! Wall-clock comparison of the Sinkhorn solver against the Newton-Schulz
//! matrix square root, plus log-log scaling fits of their per-iteration cost.
//!
//! Everything here runs on the calling thread. Timings cover compute only;
//! inputs are generated before the clock starts.

use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::aggregate::{weighted_outer_sum, Weights};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::kernel::second_order_kernel;
use crate::sinkhorn::{DampedSinkhorn, SinkhornConfig};
use crate::spectral::newton_schulz_sqrt;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BenchConfig {
    pub n: usize,
    pub d: usize,
    pub sinkhorn_iters: usize,
    pub newton_iters: usize,
    /// Timed runs per measurement; one extra warm-up run is discarded.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { n: 784, d: 512, sinkhorn_iters: 10, newton_iters: 20, repeats: 5, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub n: usize,
    pub d: usize,
    /// Second-order kernel construction.
    pub kernel_secs: f64,
    /// The Sinkhorn iterations alone.
    pub sinkhorn_iterations_secs: f64,
    /// Kernel plus iterations.
    pub sinkhorn_phase_secs: f64,
    /// `d x d` covariance construction.
    pub covariance_secs: f64,
    /// The Newton-Schulz iterations alone.
    pub newton_iterations_secs: f64,
    /// Covariance plus square root.
    pub newton_phase_secs: f64,
    /// `newton_phase_secs / sinkhorn_phase_secs`.
    pub speedup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    /// `(size, seconds per iteration)`.
    pub points: Vec<(usize, f64)>,
    /// Least-squares slope of log(time) against log(size).
    pub exponent: f64,
}

pub fn random_features(n: usize, d: usize, seed: u64) -> Result<FeatureSet<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Rectified Gaussians, like post-ReLU activations, shifted off zero.
    let data = Array2::from_shape_fn((n, d), |_| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v.max(0.0) + 1e-3
    });
    FeatureSet::new(data)
}

fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let mid = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        0.5 * (samples[mid - 1] + samples[mid])
    }
}

/// Median wall time of `repeats` runs after one discarded warm-up.
pub fn time_median<R>(repeats: usize, mut f: impl FnMut() -> R) -> f64 {
    std::hint::black_box(f());
    let samples = (0..repeats.max(1))
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(f());
            start.elapsed().as_secs_f64()
        })
        .collect();
    median(samples)
}

fn check(cfg: &BenchConfig) -> Result<()> {
    if cfg.n < 2 || cfg.d < 2 {
        return Err(Error::InvalidConfig("benchmark needs n >= 2 and d >= 2".into()));
    }
    if cfg.sinkhorn_iters == 0 {
        return Err(Error::InvalidConfig("sinkhorn_iters must be positive".into()));
    }
    Ok(())
}

fn run_sinkhorn(kernel: &crate::kernel::KernelMatrix<f64>, iters: usize) -> f64 {
    let cfg = SinkhornConfig::<f64>::default().iterations(iters);
    let mut solver = DampedSinkhorn::new(kernel, &cfg).expect("benchmark kernel is valid");
    for _ in 0..iters {
        solver.step();
    }
    solver.alpha()[0]
}

pub fn time_phases(cfg: &BenchConfig) -> Result<PhaseTimings> {
    check(cfg)?;
    let fs = random_features(cfg.n, cfg.d, cfg.seed)?;
    let kernel = second_order_kernel(&fs);
    let cov = weighted_outer_sum(&fs, Weights::Uniform)?;

    let kernel_secs = time_median(cfg.repeats, || second_order_kernel(&fs));
    let sinkhorn_iterations_secs = time_median(cfg.repeats, || run_sinkhorn(&kernel, cfg.sinkhorn_iters));
    let sinkhorn_phase_secs = time_median(cfg.repeats, || {
        let k = second_order_kernel(&fs);
        run_sinkhorn(&k, cfg.sinkhorn_iters)
    });
    let covariance_secs = time_median(cfg.repeats, || weighted_outer_sum(&fs, Weights::Uniform));
    let newton_iterations_secs = time_median(cfg.repeats, || newton_schulz_sqrt(cov.view(), cfg.newton_iters));
    let newton_phase_secs = time_median(cfg.repeats, || {
        let a = weighted_outer_sum(&fs, Weights::Uniform).expect("uniform weights");
        newton_schulz_sqrt(a.view(), cfg.newton_iters)
    });
    Ok(PhaseTimings {
        n: cfg.n,
        d: cfg.d,
        kernel_secs,
        sinkhorn_iterations_secs,
        sinkhorn_phase_secs,
        covariance_secs,
        newton_iterations_secs,
        newton_phase_secs,
        speedup: newton_phase_secs / sinkhorn_phase_secs,
    })
}

/// Least-squares slope of `ln(time)` on `ln(size)`.
pub fn fit_exponent(points: &[(usize, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(s, t)| ((s as f64).ln(), t.ln())).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = logs.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Number of repetitions that keeps one timed block near `target` operations.
fn batch_size(ops_per_iter: f64, target: f64) -> usize {
    ((target / ops_per_iter).ceil() as usize).max(1)
}

/// Per-iteration Sinkhorn time across kernel sizes `ns` at fixed `d`.
pub fn sinkhorn_scaling(ns: &[usize], d: usize, repeats: usize, seed: u64) -> Result<ScalingFit> {
    if ns.len() < 2 {
        return Err(Error::InvalidConfig("scaling sweep needs at least two sizes".into()));
    }
    let mut points = Vec::with_capacity(ns.len());
    for &n in ns {
        let kernel = second_order_kernel(&random_features(n, d, seed)?);
        let iters = batch_size((n * n) as f64, 5e7);
        let secs = time_median(repeats, || run_sinkhorn(&kernel, iters));
        points.push((n, secs / iters as f64));
    }
    let exponent = fit_exponent(&points);
    Ok(ScalingFit { points, exponent })
}

/// Per-iteration Newton-Schulz time across covariance sizes `ds` at fixed `n`.
pub fn newton_scaling(ds: &[usize], n: usize, repeats: usize, seed: u64) -> Result<ScalingFit> {
    if ds.len() < 2 {
        return Err(Error::InvalidConfig("scaling sweep needs at least two sizes".into()));
    }
    let mut points = Vec::with_capacity(ds.len());
    for &d in ds {
        let fs = random_features(n, d, seed)?;
        let cov = weighted_outer_sum(&fs, Weights::Uniform)?;
        let iters = batch_size((d * d * d) as f64, 2e8);
        let secs = time_median(repeats, || newton_schulz_sqrt(cov.view(), iters));
        points.push((d, secs / iters as f64));
    }
    let exponent = fit_exponent(&points);
    Ok(ScalingFit { points, exponent })
}
