//! Dampened Sinkhorn solver for democratic and gamma-democratic weights.
//!
//! Finds `alpha > 0` with `diag(alpha) K diag(alpha) 1 = (K 1)^gamma` by the
//! fixed-point update `alpha <- alpha / sigma^tau`, where
//! `sigma = alpha * (K alpha) / (K 1)^gamma`. `gamma = 0` equalizes every
//! feature's contribution; `gamma = 1` is solved by `alpha = 1` (sum pooling).

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornConfig<T> {
    /// Damping exponent in `(0, 1]`. `tau = 1` is the undampened update,
    /// which tends to oscillate.
    pub tau: T,
    pub iterations: usize,
    /// Interpolates between democratic (`0`) and sum (`1`) pooling.
    pub gamma: T,
    /// Row sums of `K` at or below this are rejected.
    pub zero_division_epsilon: T,
}

impl<T: Scalar> Default for SinkhornConfig<T> {
    fn default() -> Self {
        Self {
            tau: T::of(0.5),
            iterations: 10,
            gamma: T::zero(),
            zero_division_epsilon: T::of(1e-12),
        }
    }
}

impl<T: Scalar> SinkhornConfig<T> {
    pub fn with_gamma(gamma: T) -> Self {
        Self { gamma, ..Self::default() }
    }

    pub fn iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn tau(mut self, tau: T) -> Self {
        self.tau = tau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > T::zero() && self.tau <= T::one()) {
            return Err(Error::InvalidConfig(format!("tau = {} outside (0, 1]", self.tau)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be positive".into()));
        }
        if !(self.gamma >= T::zero() && self.gamma <= T::one()) {
            return Err(Error::InvalidConfig(format!("gamma = {} outside [0, 1]", self.gamma)));
        }
        if !(self.zero_division_epsilon > T::zero()) {
            return Err(Error::InvalidConfig("zero_division_epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemocraticWeights<T> {
    pub alpha: Vec<T>,
    /// `max_i |alpha_i (K alpha)_i - t_i| / t_i` for the target `t = (K 1)^gamma`.
    pub residual: T,
    pub iterations_run: usize,
}

/// Stepwise form of the solver, for callers that time or inspect iterations.
#[derive(Clone, Debug)]
pub struct DampedSinkhorn<'k, T> {
    kernel: &'k Array2<T>,
    target: Array1<T>,
    alpha: Array1<T>,
    tau: T,
    iterations_run: usize,
}

impl<'k, T: Scalar> DampedSinkhorn<'k, T> {
    pub fn new(kernel: &'k KernelMatrix<T>, cfg: &SinkhornConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let values = kernel.values();
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| **v < T::zero()) {
            return Err(Error::NonPositiveKernel { row, col });
        }
        let n = values.nrows();
        let ones = Array1::from_elem(n, T::one());
        let row_sums = values.dot(&ones);
        if let Some(row) = row_sums.iter().position(|&s| !(s > cfg.zero_division_epsilon)) {
            return Err(Error::ZeroRowSum { row });
        }
        let target = if cfg.gamma == T::zero() {
            ones.clone()
        } else if cfg.gamma == T::one() {
            row_sums
        } else {
            row_sums.mapv(|s| s.powf(cfg.gamma))
        };
        Ok(Self { kernel: values, target, alpha: ones, tau: cfg.tau, iterations_run: 0 })
    }

    pub fn step(&mut self) {
        let k_alpha = self.kernel.dot(&self.alpha);
        let tau = self.tau;
        ndarray::Zip::from(&mut self.alpha)
            .and(&k_alpha)
            .and(&self.target)
            .for_each(|a, &ka, &t| {
                let sigma = *a * ka / t;
                *a /= if tau == T::one() { sigma } else { sigma.powf(tau) };
            });
        self.iterations_run += 1;
    }

    pub fn alpha(&self) -> &Array1<T> {
        &self.alpha
    }

    pub fn target(&self) -> &Array1<T> {
        &self.target
    }

    pub fn residual(&self) -> T {
        let k_alpha = self.kernel.dot(&self.alpha);
        self.alpha
            .iter()
            .zip(&k_alpha)
            .zip(&self.target)
            .map(|((&a, &ka), &t)| ((a * ka - t) / t).abs())
            .fold(T::zero(), |acc, r| if r > acc || r.is_nan() { r } else { acc })
    }

    pub fn finish(self) -> DemocraticWeights<T> {
        let residual = self.residual();
        DemocraticWeights {
            alpha: self.alpha.to_vec(),
            residual,
            iterations_run: self.iterations_run,
        }
    }
}

/// Gamma-democratic weights for a non-negative kernel.
pub fn solve_gamma_democratic<T: Scalar>(
    kernel: &KernelMatrix<T>,
    cfg: &SinkhornConfig<T>,
) -> Result<DemocraticWeights<T>> {
    let mut solver = DampedSinkhorn::new(kernel, cfg)?;
    for _ in 0..cfg.iterations {
        solver.step();
    }
    Ok(solver.finish())
}

/// Fully democratic weights (`gamma = 0`, target `1`); `cfg.gamma` is ignored.
pub fn solve_democratic<T: Scalar>(
    kernel: &KernelMatrix<T>,
    cfg: &SinkhornConfig<T>,
) -> Result<DemocraticWeights<T>> {
    let cfg = SinkhornConfig { gamma: T::zero(), ..*cfg };
    solve_gamma_democratic(kernel, &cfg)
}
