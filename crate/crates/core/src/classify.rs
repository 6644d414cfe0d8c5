//! One-vs-rest linear classifiers with an L2-regularized squared hinge loss.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Descriptors (one row per image) with class labels in `0..num_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDescriptorSet<T> {
    descriptors: Array2<T>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<T: Scalar> LabeledDescriptorSet<T> {
    /// `num_classes` is `max(label) + 1`; every class must occur.
    pub fn new(descriptors: Array2<T>, labels: Vec<usize>) -> Result<Self> {
        if descriptors.nrows() != labels.len() {
            return Err(Error::LengthMismatch { expected: descriptors.nrows(), found: labels.len() });
        }
        if labels.is_empty() || descriptors.ncols() == 0 {
            return Err(Error::EmptyFeatureSet);
        }
        let num_classes = labels.iter().max().unwrap() + 1;
        let mut counts = vec![0usize; num_classes];
        labels.iter().for_each(|&l| counts[l] += 1);
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass(empty));
        }
        Ok(Self { descriptors, labels, num_classes })
    }

    pub fn from_rows(rows: &[Vec<T>], labels: Vec<usize>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
            }
            flat.extend_from_slice(r);
        }
        Self::new(Array2::from_shape_vec((rows.len(), dim), flat).expect("checked"), labels)
    }

    pub fn descriptors(&self) -> &Array2<T> {
        &self.descriptors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.descriptors.ncols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    /// Loss weight `C` in `||w||^2 / 2 + C sum_i max(0, 1 - y_i f(x_i))^2`.
    pub reg_c: f64,
    /// Stop once the relative objective decrease falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Seeds the power iteration that estimates the initial step size.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { reg_c: 1.0, tolerance: 1e-6, max_iterations: 20_000, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearOvrModel<T> {
    /// `num_classes x dim`.
    pub weights: Array2<T>,
    pub bias: Vec<T>,
    pub iterations: Vec<usize>,
}

/// Trains one binary classifier per class (that class against the rest).
pub fn train_ovr_linear<T: Scalar>(train: &LabeledDescriptorSet<T>, cfg: &TrainConfig) -> Result<LinearOvrModel<T>> {
    if train.num_classes < 2 {
        return Err(Error::SingleClass);
    }
    if !(cfg.reg_c > 0.0) {
        return Err(Error::InvalidConfig("reg_c must be positive".into()));
    }
    let x = &train.descriptors;
    let lipschitz = T::one() + T::of(2.0 * cfg.reg_c) * augmented_top_eigenvalue(x, cfg.seed);
    let solved: Vec<(Array1<T>, T, usize)> = (0..train.num_classes)
        .into_par_iter()
        .map(|class| {
            let y: Array1<T> = train
                .labels
                .iter()
                .map(|&l| if l == class { T::one() } else { -T::one() })
                .collect();
            train_binary(x, &y, T::of(cfg.reg_c), lipschitz, cfg)
        })
        .collect();
    let dim = train.dim();
    let mut weights = Array2::zeros((train.num_classes, dim));
    let mut bias = Vec::with_capacity(train.num_classes);
    let mut iterations = Vec::with_capacity(train.num_classes);
    for (class, (w, b, it)) in solved.into_iter().enumerate() {
        weights.row_mut(class).assign(&w);
        bias.push(b);
        iterations.push(it);
    }
    Ok(LinearOvrModel { weights, bias, iterations })
}

/// Largest eigenvalue of `[X 1]^T [X 1]` by power iteration, padded by 10%.
fn augmented_top_eigenvalue<T: Scalar>(x: &Array2<T>, seed: u64) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = x.ncols() + 1;
    let mut v: Array1<T> = (0..dim).map(|_| T::of(StandardNormal.sample(&mut rng))).collect();
    let apply = |v: &Array1<T>| -> Array1<T> {
        let w = v.slice(ndarray::s![..dim - 1]);
        let b = v[dim - 1];
        let xv = x.dot(&w) + b;
        let mut out = Array1::zeros(dim);
        out.slice_mut(ndarray::s![..dim - 1]).assign(&x.t().dot(&xv));
        out[dim - 1] = xv.sum();
        out
    };
    let mut estimate = T::zero();
    for _ in 0..50 {
        let norm = v.dot(&v).sqrt();
        if !(norm > T::zero()) {
            break;
        }
        v.mapv_inplace(|e| e / norm);
        let av = apply(&v);
        estimate = v.dot(&av);
        v = av;
    }
    estimate * T::of(1.1)
}

struct Problem<'a, T> {
    x: &'a Array2<T>,
    y: &'a Array1<T>,
    c: T,
}

impl<T: Scalar> Problem<'_, T> {
    fn objective_and_gradient(&self, w: &Array1<T>, b: T) -> (T, Array1<T>, T) {
        let margins = self.x.dot(w) + b;
        let mut loss = T::zero();
        let mut coeff = Array1::zeros(self.y.len());
        for i in 0..self.y.len() {
            let slack = T::one() - self.y[i] * margins[i];
            if slack > T::zero() {
                loss += slack * slack;
                coeff[i] = -T::of(2.0) * self.c * self.y[i] * slack;
            }
        }
        let f = T::of(0.5) * w.dot(w) + self.c * loss;
        let grad_w = w + &self.x.t().dot(&coeff);
        (f, grad_w, coeff.sum())
    }

    fn objective(&self, w: &Array1<T>, b: T) -> T {
        let margins = self.x.dot(w) + b;
        let loss = margins
            .iter()
            .zip(self.y)
            .map(|(&m, &y)| (T::one() - y * m).max(T::zero()).powi(2))
            .sum::<T>();
        T::of(0.5) * w.dot(w) + self.c * loss
    }
}

/// Accelerated gradient descent with backtracking and adaptive restart.
fn train_binary<T: Scalar>(
    x: &Array2<T>,
    y: &Array1<T>,
    c: T,
    lipschitz: T,
    cfg: &TrainConfig,
) -> (Array1<T>, T, usize) {
    let problem = Problem { x, y, c };
    let dim = x.ncols();
    let mut step_l = lipschitz.max(T::epsilon());
    let (mut w, mut b) = (Array1::<T>::zeros(dim), T::zero());
    let (mut yw, mut yb) = (w.clone(), b);
    let mut f_current = problem.objective(&w, b);
    let mut momentum = T::one();
    let tol = T::of(cfg.tolerance);
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let (fy, gw, gb) = problem.objective_and_gradient(&yw, yb);
        let grad_sq = gw.dot(&gw) + gb * gb;
        let (nw, nb, f_new) = loop {
            let nw = &yw - &(&gw / step_l);
            let nb = yb - gb / step_l;
            let f_new = problem.objective(&nw, nb);
            if f_new <= fy - T::of(0.5) * grad_sq / step_l || step_l > T::of(1e30) {
                break (nw, nb, f_new);
            }
            step_l *= T::of(2.0);
        };
        if f_new > f_current {
            // Momentum overshot: restart from the last iterate.
            yw = w.clone();
            yb = b;
            momentum = T::one();
            continue;
        }
        let next_momentum = (T::one() + (T::one() + T::of(4.0) * momentum * momentum).sqrt()) * T::of(0.5);
        let beta = (momentum - T::one()) / next_momentum;
        yw = &nw + &((&nw - &w) * beta);
        yb = nb + (nb - b) * beta;
        momentum = next_momentum;
        let decrease = f_current - f_new;
        w = nw;
        b = nb;
        let converged = decrease <= tol * f_new.abs().max(T::epsilon());
        f_current = f_new;
        if converged {
            break;
        }
    }
    (w, b, iterations)
}

impl<T: Scalar> LinearOvrModel<T> {
    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn scores(&self, descriptors: &Array2<T>) -> Result<Array2<T>> {
        if descriptors.ncols() != self.weights.ncols() {
            return Err(Error::DimensionMismatch { expected: self.weights.ncols(), found: descriptors.ncols() });
        }
        let bias = Array1::from(self.bias.clone());
        Ok(descriptors.dot(&self.weights.t()) + &bias.insert_axis(Axis(0)))
    }

    /// Argmax of the per-class scores; ties go to the smaller class index.
    pub fn predict(&self, descriptors: &Array2<T>) -> Result<Vec<usize>> {
        Ok(self.scores(descriptors)?.rows().into_iter().map(argmax).collect())
    }
}

pub fn argmax<T: Scalar>(scores: ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Accuracy {
    pub mean: f64,
    /// `None` for classes absent from the evaluation labels.
    pub per_class: Vec<Option<f64>>,
}

pub fn accuracy(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<Accuracy> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), found: predicted.len() });
    }
    if truth.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    let mut hits = vec![0usize; num_classes];
    let mut totals = vec![0usize; num_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if t < num_classes {
            totals[t] += 1;
            hits[t] += (p == t) as usize;
        }
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(Accuracy {
        mean: correct as f64 / truth.len() as f64,
        per_class: hits
            .iter()
            .zip(&totals)
            .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
            .collect(),
    })
}
