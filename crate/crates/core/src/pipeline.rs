//! Feature set to global descriptor: kernel, weights, aggregation and
//! post-processing composed under one configuration.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{
    aggregate_first_order, aggregate_second_order, postprocess, weighted_outer_sum, Descriptor, Weights,
};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::kernel::{clamp_negatives, raw_kernel, second_order_kernel, Order};
use crate::scalar::Scalar;
use crate::sinkhorn::{solve_gamma_democratic, DemocraticWeights, SinkhornConfig};
use crate::sketch::{aggregate_second_order_sketched, SketchConfig, TensorSketch};
use crate::spectral::{matrix_power, newton_schulz_sqrt};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SqrtMethod {
    Eig,
    Newton,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pooling<T> {
    /// Plain sum pooling, no solver.
    Sum,
    /// Gamma-democratic weights from the Sinkhorn solver.
    Gamma(T),
    /// Sum pooling followed by the matrix power `A^p` (explicit second order only).
    Power { p: T, method: SqrtMethod, newton_iters: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EncoderKind {
    Explicit,
    Sketch(SketchConfig),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig<T> {
    pub order: Order,
    pub encoder: EncoderKind,
    pub pooling: Pooling<T>,
    /// Solver settings; `gamma` is taken from [`Pooling::Gamma`].
    pub sinkhorn: SinkhornConfig<T>,
    pub postprocess: bool,
}

impl<T: Scalar> PipelineConfig<T> {
    pub fn second_order(pooling: Pooling<T>) -> Self {
        Self {
            order: Order::Second,
            encoder: EncoderKind::Explicit,
            pooling,
            sinkhorn: SinkhornConfig::default(),
            postprocess: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.order, self.encoder, self.pooling) {
            (Order::First, EncoderKind::Sketch(_), _) => {
                Err(Error::InvalidConfig("sketching applies to second-order features only".into()))
            }
            (Order::First, _, Pooling::Power { .. }) => {
                Err(Error::InvalidConfig("matrix power needs second-order features".into()))
            }
            (_, EncoderKind::Sketch(_), Pooling::Power { .. }) => Err(Error::InvalidConfig(
                "matrix power is not a combination of outer products and cannot be sketched".into(),
            )),
            (_, _, Pooling::Power { p, method: SqrtMethod::Newton, .. }) if p != T::of(0.5) => {
                Err(Error::InvalidConfig("the Newton method only computes p = 0.5".into()))
            }
            (_, _, Pooling::Power { p, .. }) if !(p > T::zero() && p <= T::one()) => {
                Err(Error::InvalidExponent(p.as_f64()))
            }
            (_, _, Pooling::Gamma(gamma)) => SinkhornConfig { gamma, ..self.sinkhorn }.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput<T> {
    pub descriptor: Descriptor<T>,
    /// Solver output when gamma-democratic pooling ran.
    pub weights: Option<DemocraticWeights<T>>,
}

/// A configured pipeline for features of a fixed dimension.
#[derive(Clone, Debug)]
pub struct Pipeline<T: Scalar> {
    cfg: PipelineConfig<T>,
    d: usize,
    sketch: Option<TensorSketch<T>>,
}

impl<T: Scalar> Pipeline<T> {
    pub fn new(cfg: PipelineConfig<T>, d: usize) -> Result<Self> {
        cfg.validate()?;
        let sketch = match cfg.encoder {
            EncoderKind::Sketch(sc) => Some(TensorSketch::new(d, sc)?),
            EncoderKind::Explicit => None,
        };
        Ok(Self { cfg, d, sketch })
    }

    pub fn config(&self) -> &PipelineConfig<T> {
        &self.cfg
    }

    pub fn sketch(&self) -> Option<&TensorSketch<T>> {
        self.sketch.as_ref()
    }

    pub fn describe(&self, features: &FeatureSet<T>) -> Result<PipelineOutput<T>> {
        if features.d() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: features.d() });
        }
        let (descriptor, weights) = match self.cfg.pooling {
            Pooling::Power { p, method, newton_iters } => {
                let a = weighted_outer_sum(features, Weights::Uniform)?;
                let ap = match method {
                    SqrtMethod::Eig => matrix_power(a.view(), p)?,
                    SqrtMethod::Newton => newton_schulz_sqrt(a.view(), newton_iters)?,
                };
                (Descriptor::from_matrix(&ap)?, None)
            }
            Pooling::Sum => (self.aggregate(features, Weights::Uniform)?, None),
            Pooling::Gamma(gamma) => {
                let kernel = match self.cfg.order {
                    Order::First => clamp_negatives(&raw_kernel(features)),
                    Order::Second => second_order_kernel(features),
                };
                let cfg = SinkhornConfig { gamma, ..self.cfg.sinkhorn };
                let weights = solve_gamma_democratic(&kernel, &cfg)?;
                (self.aggregate(features, (&weights).into())?, Some(weights))
            }
        };
        let descriptor = if self.cfg.postprocess { postprocess(&descriptor)? } else { descriptor };
        Ok(PipelineOutput { descriptor, weights })
    }

    /// Descriptors of many feature sets, one row each, computed in parallel.
    pub fn describe_all(&self, sets: &[FeatureSet<T>]) -> Result<Array2<T>> {
        let rows = sets
            .par_iter()
            .map(|fs| self.describe(fs).map(|out| out.descriptor.into_values()))
            .collect::<Result<Vec<_>>>()?;
        let width = rows.first().map_or(0, Vec::len);
        let flat: Vec<T> = rows.into_iter().flatten().collect();
        Ok(Array2::from_shape_vec((sets.len(), width), flat).expect("descriptors share one length"))
    }

    fn aggregate(&self, features: &FeatureSet<T>, weights: Weights<'_, T>) -> Result<Descriptor<T>> {
        match (self.cfg.order, &self.sketch) {
            (Order::First, _) => aggregate_first_order(features, weights),
            (Order::Second, None) => aggregate_second_order(features, weights),
            (Order::Second, Some(sketch)) => aggregate_second_order_sketched(features, weights, sketch),
        }
    }
}
