//! Contribution statistics under matrix power normalization, their
//! spectral bounds, and spectrum summaries of the different aggregators.
//!
//! With `A = sum_i x_i x_i^T` and `rho = ||vec(A^p)||`, the contribution of
//! feature `x` is `C(x) = vec(x x^T) . vec(A^p) / rho = x^T A^p x / rho`.
//! The identities
//!
//! * `rho = (sum_i lambda_i^{2p})^{1/2}`
//! * `sum_x C(x) = (sum_i lambda_i^{1+p}) / rho`
//!
//! and the bounds
//!
//! * `M <= r_max lambda_1^p / rho`, `m >= r_min lambda_d^p / rho`
//! * `var <= (M - mu)(mu - m) <= (M - m)^2 / 4 <= r_max^2 lambda_1^{2p} / (4 rho^2)`
//!
//! hold for every feature set; [`verify_bounds`] evaluates them.

use serde::Serialize;

use crate::aggregate::{weighted_outer_sum, Weights};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::kernel::second_order_kernel;
use crate::scalar::Scalar;
use crate::sinkhorn::{solve_gamma_democratic, SinkhornConfig};
use crate::spectral::{eig_sym, SpectralDecomposition};

/// Slack below which an inequality counts as violated.
pub const BOUND_SLACK: f64 = -1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bounds<T> {
    /// `(sum_i lambda_i^{1+p}) / rho`, which must equal `sum_C`.
    pub sum_identity: T,
    pub max_upper: T,
    pub min_lower: T,
    pub var_popoviciu: T,
    pub var_bhatia_davis: T,
    pub var_spectral: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContributionReport<T> {
    pub p: T,
    /// Frobenius norm of the computed `A^p`.
    pub rho: T,
    /// `(sum_i lambda_i^{2p})^{1/2}` from the spectrum.
    pub rho_spectral: T,
    pub contributions: Vec<T>,
    pub sum_c: T,
    pub mean: T,
    pub max: T,
    pub min: T,
    /// Population variance of the contributions.
    pub variance: T,
    pub r_max: T,
    pub r_min: T,
    pub eigenvalues: Vec<T>,
    pub bounds: Bounds<T>,
}

/// Contribution report for `A^p` built from the features.
pub fn contributions_vs_power<T: Scalar>(features: &FeatureSet<T>, p: T) -> Result<ContributionReport<T>> {
    let a = weighted_outer_sum(features, Weights::Uniform)?;
    let decomp = eig_sym(a.view())?;
    report_from_decomposition(features, &decomp, p)
}

/// As [`contributions_vs_power`], reusing a decomposition of `A` so several
/// exponents can share one eigensolve.
pub fn report_from_decomposition<T: Scalar>(
    features: &FeatureSet<T>,
    decomp: &SpectralDecomposition<T>,
    p: T,
) -> Result<ContributionReport<T>> {
    if decomp.dim() != features.d() {
        return Err(Error::DimensionMismatch { expected: features.d(), found: decomp.dim() });
    }
    let ap = decomp.power(p)?;
    let rho = ap.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
    if !(rho > T::zero()) {
        return Err(Error::ZeroMatrix);
    }
    let x = features.data();
    let projected = x.dot(&ap);
    let contributions: Vec<T> = x
        .rows()
        .into_iter()
        .zip(projected.rows())
        .map(|(xi, axi)| xi.dot(&axi) / rho)
        .collect();

    let n = T::of_usize(contributions.len());
    let sum_c: T = contributions.iter().copied().sum();
    let mean = sum_c / n;
    let max = contributions.iter().copied().fold(T::neg_infinity(), T::max);
    let min = contributions.iter().copied().fold(T::infinity(), T::min);
    let variance = contributions.iter().map(|&c| (c - mean) * (c - mean)).sum::<T>() / n;
    let radii = features.squared_norms();
    let r_max = radii.iter().copied().fold(T::neg_infinity(), T::max);
    let r_min = radii.iter().copied().fold(T::infinity(), T::min);

    let pow = |l: T, e: T| if l > T::zero() { l.powf(e) } else { T::zero() };
    let lambda_1 = decomp.eigenvalues[0];
    let lambda_d = *decomp.eigenvalues.last().expect("d >= 1");
    let rho_spectral = decomp.eigenvalues.iter().map(|&l| pow(l, p + p)).sum::<T>().sqrt();
    let trace_term: T = decomp.eigenvalues.iter().map(|&l| pow(l, T::one() + p)).sum();
    let quarter = T::of(0.25);
    let max_upper = r_max * pow(lambda_1, p) / rho;
    let bounds = Bounds {
        sum_identity: trace_term / rho_spectral,
        max_upper,
        min_lower: r_min * pow(lambda_d, p) / rho,
        var_popoviciu: (max - min) * (max - min) * quarter,
        var_bhatia_davis: (max - mean) * (mean - min),
        var_spectral: max_upper * max_upper * quarter,
    };
    Ok(ContributionReport {
        p,
        rho,
        rho_spectral,
        contributions,
        sum_c,
        mean,
        max,
        min,
        variance,
        r_max,
        r_min,
        eigenvalues: decomp.eigenvalues.clone(),
        bounds,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub holds: bool,
    /// `bound - measured`, oriented so that non-negative means satisfied.
    pub slack: f64,
}

/// Evaluates the five inequalities of a report. The last two are the
/// ordering of the variance-bound chain itself.
pub fn verify_bounds<T: Scalar>(report: &ContributionReport<T>) -> Vec<BoundCheck> {
    let b = &report.bounds;
    let check = |name, slack: T| {
        let slack = slack.as_f64();
        BoundCheck { name, holds: slack >= BOUND_SLACK, slack }
    };
    vec![
        check("max_upper", b.max_upper - report.max),
        check("min_lower", report.min - b.min_lower),
        check("variance_le_bhatia_davis", b.var_bhatia_davis - report.variance),
        check("bhatia_davis_le_popoviciu", b.var_popoviciu - b.var_bhatia_davis),
        check("popoviciu_le_spectral", b.var_spectral - b.var_popoviciu),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum SpectrumMethod<T> {
    Sum,
    Power(T),
    GammaDemocratic(T),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport<T> {
    pub method: SpectrumMethod<T>,
    /// Eigenvalues of the aggregate, descending, scaled to unit l1 sum.
    pub spectrum: Vec<T>,
    /// Shannon entropy (nats) of the normalized spectrum.
    pub entropy: T,
    /// Squared coefficient of variation of the normalized spectrum.
    pub normalized_variance: T,
    /// Share of the largest eigenvalue.
    pub top_mass: T,
}

/// Normalized spectrum of the aggregate built by `method`: `A` for sum
/// pooling, `A^p` for power normalization, `sum_i alpha_i x_i x_i^T` for
/// gamma-democratic pooling (default solver settings).
pub fn spectrum_report<T: Scalar>(features: &FeatureSet<T>, method: SpectrumMethod<T>) -> Result<SpectrumReport<T>> {
    let cfg = match method {
        SpectrumMethod::GammaDemocratic(g) => SinkhornConfig::with_gamma(g),
        _ => SinkhornConfig::default(),
    };
    spectrum_report_with(features, method, &cfg)
}

pub fn spectrum_report_with<T: Scalar>(
    features: &FeatureSet<T>,
    method: SpectrumMethod<T>,
    cfg: &SinkhornConfig<T>,
) -> Result<SpectrumReport<T>> {
    let eigenvalues = match method {
        SpectrumMethod::Sum => eig_sym(weighted_outer_sum(features, Weights::Uniform)?.view())?.eigenvalues,
        SpectrumMethod::Power(p) => {
            let decomp = eig_sym(weighted_outer_sum(features, Weights::Uniform)?.view())?;
            decomp.power(p)?; // validates p
            decomp
                .eigenvalues
                .iter()
                .map(|&l| if l > T::zero() { l.powf(p) } else { T::zero() })
                .collect()
        }
        SpectrumMethod::GammaDemocratic(gamma) => {
            let cfg = SinkhornConfig { gamma, ..*cfg };
            let weights = solve_gamma_democratic(&second_order_kernel(features), &cfg)?;
            eig_sym(weighted_outer_sum(features, (&weights).into())?.view())?.eigenvalues
        }
    };
    summarize_spectrum(method, &eigenvalues)
}

/// l1-normalizes a non-negative spectrum and computes its flatness statistics.
pub fn summarize_spectrum<T: Scalar>(method: SpectrumMethod<T>, eigenvalues: &[T]) -> Result<SpectrumReport<T>> {
    let total: T = eigenvalues.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::ZeroMatrix);
    }
    let spectrum: Vec<T> = eigenvalues.iter().map(|&l| l / total).collect();
    let entropy = -spectrum
        .iter()
        .filter(|&&q| q > T::zero())
        .map(|&q| q * q.ln())
        .sum::<T>();
    let d = T::of_usize(spectrum.len());
    let normalized_variance = d * spectrum.iter().map(|&q| q * q).sum::<T>() - T::one();
    let top_mass = spectrum.iter().copied().fold(T::zero(), T::max);
    Ok(SpectrumReport { method, spectrum, entropy, normalized_variance, top_mass })
}
