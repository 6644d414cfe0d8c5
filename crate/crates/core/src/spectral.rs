//! Symmetric eigendecomposition, matrix power normalization, the coupled
//! Newton-Schulz square root, and the outer-product span test.

use ndarray::{Array1, Array2, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::kernel::{mirror_upper, second_order_kernel};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 100;

/// `A = U diag(lambda) U^T` with eigenvalues sorted descending and the
/// eigenvectors stored as the columns of `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition<T> {
    pub eigenvalues: Vec<T>,
    pub eigenvectors: Array2<T>,
}

impl<T: Scalar> SpectralDecomposition<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(f(lambda)) U^T`.
    pub fn map_spectrum(&self, f: impl Fn(T) -> T) -> Array2<T> {
        let scaled = &self.eigenvectors
            * &Array1::from_iter(self.eigenvalues.iter().map(|&l| f(l))).insert_axis(ndarray::Axis(0));
        let mut out = scaled.dot(&self.eigenvectors.t());
        mirror_upper(&mut out);
        out
    }

    pub fn reconstruct(&self) -> Array2<T> {
        self.map_spectrum(|l| l)
    }

    /// `A^p` for `p` in `(0, 1]`; zero eigenvalues stay zero.
    pub fn power(&self, p: T) -> Result<Array2<T>> {
        check_exponent(p)?;
        Ok(self.map_spectrum(|l| if l > T::zero() { l.powf(p) } else { T::zero() }))
    }
}

fn check_exponent<T: Scalar>(p: T) -> Result<()> {
    if p > T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p.as_f64()))
    }
}

fn check_square_symmetric<T: Scalar>(a: ArrayView2<'_, T>) -> Result<()> {
    let (n, m) = a.dim();
    if n != m {
        return Err(Error::DimensionMismatch { expected: n, found: m });
    }
    let scale = a.iter().fold(T::zero(), |acc, v| acc.max(v.abs())).max(T::one());
    let tol = T::of(1e-10) * scale;
    for i in 0..n {
        for j in i + 1..n {
            let dev = (a[[i, j]] - a[[j, i]]).abs();
            if dev > tol || dev.is_nan() {
                return Err(Error::NotSymmetric { deviation: dev.as_f64() });
            }
        }
    }
    if let Some(((row, col), _)) = a.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteEntry { row, col });
    }
    Ok(())
}

/// Cyclic Jacobi eigendecomposition of any symmetric matrix.
///
/// Eigenvalues are returned unmodified (possibly negative), sorted descending.
pub fn eig_symmetric<T: Scalar>(a: ArrayView2<'_, T>) -> Result<SpectralDecomposition<T>> {
    check_square_symmetric(a)?;
    let n = a.nrows();
    // Work on a symmetrized row-major copy.
    let mut m: Vec<T> = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = (a[[i, j]] + a[[j, i]]) * T::of(0.5);
        }
    }
    let mut v: Vec<T> = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let frob_sq = m.iter().fold(T::zero(), |acc, &x| acc + x * x);
    let n_t = T::of_usize(n.max(1));
    let threshold = (n_t * T::epsilon()).powi(2) * frob_sq;

    let mut converged = n <= 1 || frob_sq == T::zero();
    let mut sweep = 0;
    while !converged {
        if sweep == MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
        }
        sweep += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                // Off-diagonal already negligible relative to both diagonals.
                let small = T::of(0.01) * T::epsilon();
                if apq.abs() <= small * app.abs() && apq.abs() <= small * aqq.abs() {
                    m[p * n + q] = T::zero();
                    m[q * n + p] = T::zero();
                    continue;
                }
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = {
                    let denom = theta.abs() + (theta * theta + T::one()).sqrt();
                    if theta < T::zero() { -T::one() / denom } else { T::one() / denom }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                // A <- A J (columns p, q)
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                // A <- J^T A (rows p, q)
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = T::zero();
                m[q * n + p] = T::zero();
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[i * n + j] * m[i * n + j];
                }
            }
        }
        converged = off <= threshold;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[j * n + j].partial_cmp(&m[i * n + i]).unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues = order.iter().map(|&i| m[i * n + i]).collect();
    let eigenvectors = Array2::from_shape_fn((n, n), |(row, col)| v[row * n + order[col]]);
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

/// Eigendecomposition of a symmetric positive semi-definite matrix.
///
/// Eigenvalues at or below the round-off floor `n * eps * lambda_1` (in
/// particular, small negative ones) are set to exactly zero; anything more
/// negative than `-sqrt(eps) * lambda_1` is rejected.
pub fn eig_sym<T: Scalar>(a: ArrayView2<'_, T>) -> Result<SpectralDecomposition<T>> {
    let mut decomp = eig_symmetric(a)?;
    let top = decomp.eigenvalues.first().copied().unwrap_or(T::zero()).max(T::zero());
    let floor = T::of_usize(decomp.dim().max(1)) * T::epsilon() * top;
    let reject = -T::epsilon().sqrt() * top;
    for l in decomp.eigenvalues.iter_mut() {
        if *l < reject || (*l < T::zero() && top == T::zero()) {
            return Err(Error::NotPositiveSemidefinite { eigenvalue: l.as_f64() });
        }
        if *l <= floor {
            *l = T::zero();
        }
    }
    Ok(decomp)
}

/// `A^p = U diag(lambda^p) U^T` for symmetric PSD `A` and `p` in `(0, 1]`.
/// `p = 1` returns `A` unchanged.
pub fn matrix_power<T: Scalar>(a: ArrayView2<'_, T>, p: T) -> Result<Array2<T>> {
    check_exponent(p)?;
    if p == T::one() {
        check_square_symmetric(a)?;
        return Ok(a.to_owned());
    }
    eig_sym(a)?.power(p)
}

/// Matrix square root by the coupled Newton-Schulz iteration
/// `Y <- Y (3I - ZY) / 2`, `Z <- (3I - ZY) Z / 2`, started from
/// `Y = A / tr(A)`, `Z = I` and rescaled by `sqrt(tr(A))`.
///
/// Trace scaling puts the spectrum of a PSD input in `(0, 1]`, where the
/// iteration converges; eigenvalues that are tiny relative to the trace
/// need more iterations.
pub fn newton_schulz_sqrt<T: Scalar>(a: ArrayView2<'_, T>, iters: usize) -> Result<Array2<T>> {
    check_square_symmetric(a)?;
    let n = a.nrows();
    let trace = a.diag().sum();
    if !(trace > T::zero()) {
        return Err(Error::ZeroMatrix);
    }
    let eye = Array2::<T>::eye(n);
    let three_eye = &eye * T::of(3.0);
    let half = T::of(0.5);
    let mut y = a.mapv(|v| v / trace);
    let mut z = eye;
    for _ in 0..iters {
        let step = (&three_eye - &z.dot(&y)) * half;
        y = y.dot(&step);
        z = step.dot(&z);
    }
    let mut out = y * trace.sqrt();
    // Average the two triangles; the iterates drift from symmetry by round-off.
    for i in 0..n {
        for j in i + 1..n {
            let avg = (out[[i, j]] + out[[j, i]]) * half;
            out[[i, j]] = avg;
            out[[j, i]] = avg;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpanCheck<T> {
    pub in_span: bool,
    /// `min_c || sum_i c_i x_i x_i^T - M ||_F`.
    pub residual: T,
    pub coefficients: Vec<T>,
}

/// Least-squares test of whether `M` is a linear combination of the outer
/// products `x_i x_i^T`.
///
/// The normal equations have Gram matrix `G_ij = (x_i . x_j)^2` (the
/// second-order kernel) and right-hand side `b_i = x_i^T M x_i`; they are
/// solved by pseudo-inverse and the residual is evaluated explicitly.
pub fn in_span_of_outer_products<T: Scalar>(
    m: ArrayView2<'_, T>,
    features: &FeatureSet<T>,
    tol: T,
) -> Result<SpanCheck<T>> {
    let d = features.d();
    if m.dim() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d, found: m.nrows() });
    }
    let x = features.data();
    let gram = second_order_kernel(features).into_values();
    let mx = x.dot(&m.t());
    let rhs: Array1<T> = x.rows().into_iter().zip(mx.rows()).map(|(xi, mxi)| xi.dot(&mxi)).collect();

    let eig = eig_symmetric(gram.view())?;
    let top = eig.eigenvalues.iter().fold(T::zero(), |acc, l| acc.max(l.abs()));
    let cutoff = T::of_usize(features.n()) * T::epsilon() * top;
    let proj = eig.eigenvectors.t().dot(&rhs);
    let scaled: Array1<T> = proj
        .iter()
        .zip(&eig.eigenvalues)
        .map(|(&b, &l)| if l.abs() > cutoff { b / l } else { T::zero() })
        .collect();
    let coefficients = eig.eigenvectors.dot(&scaled);

    let weighted = x * &coefficients.clone().insert_axis(ndarray::Axis(1));
    let combo = x.t().dot(&weighted);
    let residual = (&combo - &m).iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
    let m_norm = m.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
    Ok(SpanCheck { in_span: residual <= tol * m_norm, residual, coefficients: coefficients.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn frob<T: Scalar>(m: &Array2<T>) -> T {
        m.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
    }

    fn random_psd(seed: u64, d: usize, samples: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = Array2::from_shape_fn((samples, d), |_| rng.sample::<f64, _>(StandardNormal));
        let mut a = b.t().dot(&b) / samples as f64;
        mirror_upper(&mut a);
        a
    }

    fn random_orthogonal(seed: u64, d: usize) -> Array2<f64> {
        let a = random_psd(seed, d, 3 * d);
        eig_symmetric(a.view()).unwrap().eigenvectors
    }

    fn prop6() -> Array2<f64> {
        array![[2.0, 1.0], [1.0, 1.0]]
    }

    #[test]
    fn identity_spectrum() {
        let e = eig_sym(Array2::<f64>::eye(5).view()).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0; 5]);
        assert!(frob(&(e.reconstruct() - Array2::<f64>::eye(5))) < 1e-14);
    }

    #[test]
    fn two_by_two_golden_eigenvalues() {
        let e = eig_sym(prop6().view()).unwrap();
        let s5 = 5f64.sqrt();
        assert!((e.eigenvalues[0] - (3.0 + s5) / 2.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - (3.0 - s5) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        for (seed, d) in [(1, 3), (2, 10), (3, 40)] {
            let a = random_psd(seed, d, d / 2 + 1);
            let e = eig_sym(a.view()).unwrap();
            let utu = e.eigenvectors.t().dot(&e.eigenvectors);
            assert!(frob(&(utu - Array2::<f64>::eye(d))) < 1e-8);
            assert!(frob(&(e.reconstruct() - &a)) <= 1e-8 * frob(&a));
            assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            assert!(e.eigenvalues.iter().all(|&l| l >= 0.0));
        }
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        assert!(matches!(eig_sym(array![[1.0, 2.0], [0.0, 1.0]].view()), Err(Error::NotSymmetric { .. })));
        assert!(matches!(
            eig_sym(array![[1.0, 0.0], [0.0, -1.0]].view()),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
        let e = eig_symmetric(array![[1.0, 0.0], [0.0, -1.0]].view()).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, -1.0]);
    }

    #[test]
    fn golden_square_root() {
        let z = matrix_power(prop6().view(), 0.5).unwrap();
        let expected = array![[1.3416, 0.4472], [0.4472, 0.8944]];
        for (a, b) in z.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-3, "{z}");
        }
    }

    #[test]
    fn unit_exponent_is_identity_map() {
        let a = random_psd(4, 6, 10);
        assert_eq!(matrix_power(a.view(), 1.0).unwrap(), a);
        let via_eig = eig_sym(a.view()).unwrap().power(1.0).unwrap();
        assert!(frob(&(via_eig - &a)) < 1e-10);
    }

    #[test]
    fn exponent_range_enforced() {
        let a = prop6();
        for p in [0.0, -0.5, 1.5] {
            assert!(matches!(matrix_power(a.view(), p), Err(Error::InvalidExponent(_))));
        }
    }

    #[test]
    fn square_root_squares_back() {
        for seed in 0..5 {
            let a = random_psd(seed, 12, 30);
            let z = matrix_power(a.view(), 0.5).unwrap();
            assert!(frob(&(z.dot(&z) - &a)) <= 1e-6 * frob(&a));
        }
    }

    #[test]
    fn power_commutes_and_is_orthogonally_equivariant() {
        for seed in 0..5 {
            let d = 8;
            let a = random_psd(seed, d, 5);
            let ap = matrix_power(a.view(), 0.3).unwrap();
            let comm = ap.dot(&a) - a.dot(&ap);
            assert!(frob(&comm) <= 1e-8 * frob(&a) * frob(&ap));

            let q = random_orthogonal(100 + seed, d);
            let rotated = q.dot(&a).dot(&q.t());
            let lhs = matrix_power(rotated.view(), 0.3).unwrap();
            let rhs = q.dot(&ap).dot(&q.t());
            assert!(frob(&(lhs - rhs)) <= 1e-8 * frob(&ap).max(1.0));
        }
    }

    #[test]
    fn entropy_of_power_spectrum_decreases_with_p() {
        let entropy = |ls: &[f64], p: f64| {
            let w: Vec<f64> = ls.iter().map(|&l| if l > 0.0 { l.powf(p) } else { 0.0 }).collect();
            let s: f64 = w.iter().sum();
            -w.iter().filter(|&&x| x > 0.0).map(|&x| (x / s) * (x / s).ln()).sum::<f64>()
        };
        for seed in 0..20 {
            let ls = eig_sym(random_psd(seed, 10, 7).view()).unwrap().eigenvalues;
            let hs: Vec<f64> = (1..=10).map(|i| entropy(&ls, i as f64 / 10.0)).collect();
            assert!(hs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{hs:?}");
        }
    }

    #[test]
    fn newton_on_identity() {
        let eye = Array2::<f64>::eye(4);
        // Zero iterations return A / sqrt(tr A).
        let z0 = newton_schulz_sqrt(eye.view(), 0).unwrap();
        assert!(frob(&(z0 - &eye * 0.5)) < 1e-15);
        let z = newton_schulz_sqrt(eye.view(), 20).unwrap();
        assert!(frob(&(z - &eye)) < 1e-14);
    }

    #[test]
    fn newton_matches_eigen_route() {
        let a = prop6();
        let ns = newton_schulz_sqrt(a.view(), 20).unwrap();
        let eig = matrix_power(a.view(), 0.5).unwrap();
        assert!(frob(&(ns - eig)) < 1e-5);
        assert!(matches!(newton_schulz_sqrt(Array2::<f64>::zeros((3, 3)).view(), 5), Err(Error::ZeroMatrix)));
    }

    #[test]
    fn newton_sqrt_defining_property() {
        let a = random_psd(9, 64, 128);
        let y = newton_schulz_sqrt(a.view(), 20).unwrap();
        assert!(frob(&(y.dot(&y) - &a)) / frob(&a) <= 1e-4);
    }

    #[test]
    fn span_examples() {
        let fs = FeatureSet::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let a = prop6();
        let member = in_span_of_outer_products(a.view(), &fs, 1e-9).unwrap();
        assert!(member.in_span);
        assert!(member.residual < 1e-12);
        for c in &member.coefficients {
            assert!((c - 1.0).abs() < 1e-12);
        }

        let root = matrix_power(a.view(), 0.5).unwrap();
        let check = in_span_of_outer_products(root.view(), &fs, 0.01).unwrap();
        assert!(!check.in_span);
        assert!(check.residual > 0.01 * frob(&root));

        let q = random_orthogonal(3, 4);
        let scales = [2.0, 0.5, 1.5, 3.0];
        let rows: Vec<Vec<f64>> = (0..4).map(|j| q.column(j).iter().map(|v| v * scales[j]).collect()).collect();
        let ortho = FeatureSet::from_rows(&rows).unwrap();
        let a = crate::aggregate::weighted_outer_sum(&ortho, crate::aggregate::Weights::Uniform).unwrap();
        let ap = matrix_power(a.view(), 0.37).unwrap();
        assert!(in_span_of_outer_products(ap.view(), &ortho, 1e-8).unwrap().in_span);
    }

    #[test]
    fn single_precision_eig() {
        let a = array![[2.0f32, 1.0], [1.0, 1.0]];
        let e = eig_sym(a.view()).unwrap();
        assert!((e.eigenvalues[0] - 2.618034).abs() < 1e-5);
    }
}
