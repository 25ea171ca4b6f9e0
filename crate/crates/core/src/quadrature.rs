//! Gauss rules and composite weights.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::scalar::Real;

/// Nodes and weights of a one-dimensional quadrature rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

/// Golub-Welsch: nodes are eigenvalues of the symmetric Jacobi matrix,
/// weights are `mass * (first eigenvector component)^2`.
fn golub_welsch<T: Real>(n: usize, off_diagonal: impl Fn(usize) -> f64, mass: f64) -> Rule<T> {
    assert!(n > 0, "quadrature rule needs at least one node");
    let mut jacobi = DMatrix::<T>::zeros(n, n);
    for i in 1..n {
        let b = T::lit(off_diagonal(i));
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(T, T)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], T::lit(mass) * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Probabilists' Gauss-Hermite rule for the standard normal measure
/// `(2π)^{-1/2} e^{-x²/2} dx` (weights sum to one).
pub fn gauss_hermite<T: Real>(n: usize) -> Rule<T> {
    golub_welsch(n, |i| (i as f64).sqrt(), 1.0)
}

/// Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> Rule<T> {
    golub_welsch(
        n,
        |i| {
            let i = i as f64;
            i / (4.0 * i * i - 1.0).sqrt()
        },
        2.0,
    )
}

impl<T: Real> Rule<T> {
    /// Maps the rule from `[-1, 1]` onto `[a, b]`.
    pub fn on_interval(&self, a: T, b: T) -> Rule<T> {
        let half = (b - a) * T::lit(0.5);
        let mid = (b + a) * T::lit(0.5);
        Rule {
            nodes: self.nodes.iter().map(|&x| mid + half * x).collect(),
            weights: self.weights.iter().map(|&w| w * half).collect(),
        }
    }
}

/// Composite Simpson weights for `n` equally spaced samples with spacing `h`.
/// An even number of intervals uses plain Simpson; an odd count closes the
/// last three intervals with the 3/8 rule. Two samples fall back to the
/// trapezoid rule.
pub fn simpson_weights<T: Real>(n: usize, h: T) -> Vec<T> {
    assert!(n >= 2, "need at least two samples");
    let mut w = vec![T::zero(); n];
    let intervals = n - 1;
    if intervals == 1 {
        w[0] = h * T::lit(0.5);
        w[1] = h * T::lit(0.5);
        return w;
    }
    let (simpson_end, tail) = if intervals % 2 == 0 {
        (intervals, false)
    } else {
        (intervals - 3, true)
    };
    let third = h / T::lit(3.0);
    let mut i = 0;
    while i < simpson_end {
        w[i] += third;
        w[i + 1] += T::lit(4.0) * third;
        w[i + 2] += third;
        i += 2;
    }
    if tail {
        let e = h * T::lit(3.0 / 8.0);
        let s = simpson_end;
        w[s] += e;
        w[s + 1] += T::lit(3.0) * e;
        w[s + 2] += T::lit(3.0) * e;
        w[s + 3] += e;
    }
    w
}
