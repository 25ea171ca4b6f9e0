//! Dense complex linear algebra helpers built on nalgebra.
//!
//! nalgebra provides the complex Schur form and the Hermitian eigensolver;
//! eigenvectors of a general complex matrix are recovered here from the
//! triangular Schur factor by back-substitution.

use nalgebra::{ComplexField, DMatrix, DVector, Schur, SymmetricEigen};

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{cr, Real, C};

/// Orthonormal basis (as matrix columns) of the orthogonal complement of
/// `span(vectors)` in `N^n`, with respect to `<x, y> = x^* y`.
///
/// Zero (or numerically zero) input vectors are ignored, so the result has
/// `n - rank(vectors)` columns.
pub fn orthonormal_complement<N: ComplexField + Copy>(vectors: &[DVector<N>], n: usize) -> DMatrix<N> {
    let tiny = nalgebra::convert::<f64, N::RealField>(1e-12);
    let mut spanning: Vec<DVector<N>> = Vec::new();
    for v in vectors {
        assert_eq!(v.len(), n, "vector length must match ambient dimension");
        let scale = v.norm();
        if scale <= tiny {
            continue;
        }
        let mut w = v.unscale(scale);
        reorthogonalize(&mut w, &spanning);
        let norm = w.norm();
        if norm > nalgebra::convert::<f64, N::RealField>(1e-8) {
            spanning.push(w.unscale(norm));
        }
    }
    let rank = spanning.len();

    // Visit the canonical vectors in order of how much of them survives the
    // projection, which keeps the accepted set well conditioned.
    let mut order: Vec<(usize, N::RealField)> = (0..n)
        .map(|j| {
            let mut lost = <N::RealField as Zero>::zero();
            for q in &spanning {
                lost += ComplexField::modulus_squared(q[j]);
            }
            (j, <N::RealField as One>::one() - lost)
        })
        .collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));

    let mut accepted: Vec<DVector<N>> = Vec::with_capacity(n - rank);
    let threshold = nalgebra::convert::<f64, N::RealField>(1e-6);
    for (j, _) in order {
        if accepted.len() == n - rank {
            break;
        }
        let mut w = DVector::<N>::zeros(n);
        w[j] = N::one();
        reorthogonalize(&mut w, &spanning);
        reorthogonalize(&mut w, &accepted);
        let norm = w.norm();
        if norm > threshold {
            accepted.push(w.unscale(norm));
        }
    }
    assert_eq!(accepted.len(), n - rank, "complement construction lost a direction");
    if accepted.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    DMatrix::from_columns(&accepted)
}

fn reorthogonalize<N: ComplexField + Copy>(w: &mut DVector<N>, basis: &[DVector<N>]) {
    for _ in 0..2 {
        for q in basis {
            let proj = q.dotc(w);
            w.axpy(-proj, q, N::one());
        }
    }
}

/// Hermitian part `(M + M^*)/2`.
pub fn hermitian_part<T: Real>(m: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    (m + m.adjoint()) * cr(T::lit(0.5))
}

/// Relative asymmetry `||M - M^*||_F / max(||M||_F, 1)`.
pub fn hermitian_defect<T: Real>(m: &DMatrix<C<T>>) -> T {
    let scale = m.norm().max(T::one());
    (m - m.adjoint()).norm() / scale
}

/// Ascending eigenvalues of a Hermitian matrix (the Hermitian part is used).
pub fn hermitian_eigenvalues<T: Real>(m: &DMatrix<C<T>>) -> DVector<T> {
    if m.nrows() == 0 {
        return DVector::zeros(0);
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut vals: Vec<T> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    DVector::from_vec(vals)
}

/// Largest eigenvalue of a Hermitian matrix together with a unit eigenvector.
pub fn hermitian_max_eig<T: Real>(m: &DMatrix<C<T>>) -> (T, DVector<C<T>>) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).into_owned())
}

/// Eigenvalues of a general complex matrix via the complex Schur form.
pub fn eigenvalues<T: Real>(a: &DMatrix<C<T>>) -> Result<DVector<C<T>>> {
    let (_, t) = schur(a)?;
    Ok(t.diagonal())
}

/// Largest real part among the eigenvalues of `a`.
pub fn spectral_abscissa<T: Real>(a: &DMatrix<C<T>>) -> Result<T> {
    let vals = eigenvalues(a)?;
    Ok(vals.iter().map(|z| z.re).fold(T::min_value().unwrap(), |m, x| m.max(x)))
}

/// `A = Q T Q^*`. The iteration runs on `A + σI` with `σ = ‖A‖_F` so that the
/// relative deflation test acts as an absolute one near zero eigenvalues; a
/// stalled run is retried on `U^*(A + σI)U` for a fixed unitary `U`.
fn schur<T: Real>(a: &DMatrix<C<T>>) -> Result<(DMatrix<C<T>>, DMatrix<C<T>>)> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
            context: "schur: square matrix required",
        });
    }
    let n = a.nrows();
    let sigma = cr(a.norm().max(T::lit(1e-300)));
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] += sigma;
    }
    let unshift = |(q, mut t): (DMatrix<C<T>>, DMatrix<C<T>>)| {
        for i in 0..n {
            t[(i, i)] -= sigma;
        }
        (q, t)
    };
    if let Some(s) = Schur::try_new(shifted.clone(), T::eps(), 10_000) {
        return Ok(unshift(s.unpack()));
    }
    for seed in 1..=3 {
        let g = DMatrix::<C<T>>::from_fn(n, n, |i, j| {
            let x = (i * 7 + j * 13 + seed * 31) as f64;
            C::new(T::lit((x * 0.618_033_988_75).sin()), T::lit((x * 0.414_213_562_37).cos()))
        });
        let u = g.qr().q();
        let b = u.adjoint() * &shifted * &u;
        if let Some(s) = Schur::try_new(b, T::eps() * T::lit(4.0), 10_000) {
            let (q, t) = unshift(s.unpack());
            return Ok((u * q, t));
        }
    }
    Err(Error::Numerical(format!("complex Schur iteration did not converge (n = {n})")))
}

/// `A = V diag(values) V^{-1}` for a general complex matrix.
#[derive(Clone, Debug)]
pub struct EigenDecomposition<T: Real> {
    pub values: DVector<C<T>>,
    pub vectors: DMatrix<C<T>>,
    pub inverse: DMatrix<C<T>>,
    /// Frobenius-norm condition number of the eigenvector matrix.
    pub condition: T,
}

/// Eigendecomposition from the Schur form `A = Q T Q^*`: eigenvectors of the
/// triangular factor by back-substitution, then `V = Q Y`, `V^{-1} = Y^{-1} Q^*`.
pub fn eigen_decompose<T: Real>(a: &DMatrix<C<T>>) -> Result<EigenDecomposition<T>> {
    let n = a.nrows();
    let (q, t) = schur(a)?;
    let values = t.diagonal();
    let smin = (T::eps() * t.norm()).max(T::lit(1e-30));

    let mut y = DMatrix::<C<T>>::zeros(n, n);
    for j in 0..n {
        let lambda = values[j];
        y[(j, j)] = cr(T::one());
        for i in (0..j).rev() {
            let mut s = C::new(T::zero(), T::zero());
            for l in (i + 1)..=j {
                s += t[(i, l)] * y[(l, j)];
            }
            let mut denom = t[(i, i)] - lambda;
            if ComplexField::modulus(denom) < smin {
                denom = cr(smin);
            }
            y[(i, j)] = -s / denom;
        }
        let norm = y.column(j).norm();
        y.column_mut(j).unscale_mut(norm);
    }

    let y_inv = y
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Numerical("singular triangular eigenvector factor".into()))?;
    let vectors = &q * &y;
    let inverse = y_inv * q.adjoint();
    let condition = vectors.norm() * inverse.norm();
    if !condition.is_finite() {
        return Err(Error::Numerical("non-finite eigenvector condition number".into()));
    }
    Ok(EigenDecomposition {
        values,
        vectors,
        inverse,
        condition,
    })
}
