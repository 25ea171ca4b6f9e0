//! Maxwellian-weighted Hermite discretization of velocity space.
//!
//! Basis functions are tensor products of normalized probabilists' Hermite
//! polynomials times the square root of the Maxwellian,
//!
//! ```text
//! ψ_n(ξ) = Π_i He_{n_i}(ξ_i) / sqrt(n_i!) · M(ξ)^{1/2},   M(ξ) = (2π)^{-3/2} e^{-|ξ|²/2},
//! ```
//!
//! truncated to total degree `n_1 + n_2 + n_3 ≤ D`. They are orthonormal in
//! `L²_ξ`, so coefficient vectors carry the `L²_ξ` inner product directly.
//! Multiplication by `ξ_i` acts through the three-term recurrence
//! `ξ ψ_n = sqrt(n+1) ψ_{n+1} + sqrt(n) ψ_{n-1}`.
//!
//! Indices are in graded lexicographic order: total degree first, then
//! descending lexicographic within a degree. Index 0 is `(0,0,0)` and
//! indices 1, 2, 3 are `(1,0,0)`, `(0,1,0)`, `(0,0,1)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{invalid, Error, Result};
use crate::quadrature::{gauss_hermite, Rule};
use crate::scalar::{Real, C};

/// Macroscopic coordinates of a coefficient vector together with its
/// microscopic remainder `{I - P}u`.
#[derive(Clone, Debug)]
pub struct MacroMicro<T: Real> {
    /// `a = ∫ M^{1/2} u dξ`
    pub a: C<T>,
    /// `b_i = ∫ ξ_i M^{1/2} u dξ`
    pub b: Vector3<C<T>>,
    /// `c = (1/6) ∫ (|ξ|² - 3) M^{1/2} u dξ`
    pub c: C<T>,
    pub micro: DVector<C<T>>,
}

#[derive(Clone, Debug)]
pub struct VelocityBasis<T: Real> {
    degree_cap: usize,
    index_map: Vec<[usize; 3]>,
    lookup: HashMap<[usize; 3], usize>,
    transport: [DMatrix<T>; 3],
    /// `e_a, e_{b1}, e_{b2}, e_{b3}, e_c`
    null_vectors: [DVector<T>; 5],
    projection: DMatrix<T>,
    theta: [[DVector<T>; 3]; 3],
    lambda: Option<[DVector<T>; 3]>,
    quadrature: Rule<T>,
}

/// Number of multi-indices with total degree at most `degree_cap`.
pub fn basis_dim(degree_cap: usize) -> usize {
    (degree_cap + 1) * (degree_cap + 2) * (degree_cap + 3) / 6
}

impl<T: Real> VelocityBasis<T> {
    pub fn new(degree_cap: usize) -> Result<Self> {
        if degree_cap < 2 {
            return Err(invalid(
                "degree_cap",
                format!("{degree_cap} < 2: the null space (|ξ|² M^{{1/2}}) is not representable"),
            ));
        }
        let mut index_map = Vec::with_capacity(basis_dim(degree_cap));
        for total in 0..=degree_cap {
            for n1 in (0..=total).rev() {
                for n2 in (0..=(total - n1)).rev() {
                    index_map.push([n1, n2, total - n1 - n2]);
                }
            }
        }
        let lookup: HashMap<[usize; 3], usize> = index_map.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let dim = index_map.len();

        let transport = std::array::from_fn(|axis| {
            let mut t = DMatrix::<T>::zeros(dim, dim);
            for (col, n) in index_map.iter().enumerate() {
                let mut up = *n;
                up[axis] += 1;
                if let Some(&row) = lookup.get(&up) {
                    let v = T::lit(((n[axis] + 1) as f64).sqrt());
                    t[(row, col)] = v;
                    t[(col, row)] = v;
                }
            }
            t
        });

        let unit = |n: [usize; 3], scale: f64| {
            let mut v = DVector::<T>::zeros(dim);
            v[lookup[&n]] = T::lit(scale);
            v
        };
        let inv_sqrt3 = 1.0 / 3f64.sqrt();
        let e_c = unit([2, 0, 0], inv_sqrt3) + unit([0, 2, 0], inv_sqrt3) + unit([0, 0, 2], inv_sqrt3);
        let null_vectors = [
            unit([0, 0, 0], 1.0),
            unit([1, 0, 0], 1.0),
            unit([0, 1, 0], 1.0),
            unit([0, 0, 1], 1.0),
            e_c,
        ];
        let mut projection = DMatrix::<T>::zeros(dim, dim);
        for e in &null_vectors {
            projection += e * e.transpose();
        }

        // ξ_iξ_j - δ_ij = He_1 He_1 (i ≠ j) or He_2(ξ_i) = sqrt(2) ψ_{2e_i}.
        let theta = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                if i == j {
                    let mut n = [0; 3];
                    n[i] = 2;
                    unit(n, 2f64.sqrt())
                } else {
                    let mut n = [0; 3];
                    n[i] += 1;
                    n[j] += 1;
                    unit(n, 1.0)
                }
            })
        });

        // (|ξ|² - 5) ξ_i = He_3(ξ_i) + Σ_{j≠i} He_2(ξ_j) He_1(ξ_i).
        let lambda = (degree_cap >= 3).then(|| {
            std::array::from_fn(|i| {
                let mut n = [0; 3];
                n[i] = 3;
                let mut v = unit(n, 6f64.sqrt() / 10.0);
                for j in (0..3).filter(|&j| j != i) {
                    let mut m = [0; 3];
                    m[i] = 1;
                    m[j] = 2;
                    v += unit(m, 2f64.sqrt() / 10.0);
                }
                v
            })
        });

        Ok(Self {
            degree_cap,
            index_map,
            lookup,
            transport,
            null_vectors,
            projection,
            theta,
            lambda,
            quadrature: gauss_hermite(degree_cap + 4),
        })
    }

    pub fn degree_cap(&self) -> usize {
        self.degree_cap
    }

    pub fn dim(&self) -> usize {
        self.index_map.len()
    }

    pub fn index_map(&self) -> &[[usize; 3]] {
        &self.index_map
    }

    /// Position of the multi-index `n`, if retained.
    pub fn index_of(&self, n: [usize; 3]) -> Option<usize> {
        self.lookup.get(&n).copied()
    }

    /// Matrix of multiplication by `ξ_axis` (axis in `0..3`).
    pub fn transport(&self, axis: usize) -> &DMatrix<T> {
        &self.transport[axis]
    }

    pub fn transports(&self) -> &[DMatrix<T>; 3] {
        &self.transport
    }

    /// Orthonormal null-space vectors in the order `e_a, e_b1, e_b2, e_b3, e_c`.
    pub fn null_vectors(&self) -> &[DVector<T>; 5] {
        &self.null_vectors
    }

    pub fn e_a(&self) -> &DVector<T> {
        &self.null_vectors[0]
    }

    pub fn e_b(&self, i: usize) -> &DVector<T> {
        &self.null_vectors[1 + i]
    }

    pub fn e_c(&self) -> &DVector<T> {
        &self.null_vectors[4]
    }

    /// Orthogonal projection `P` onto the collision null space.
    pub fn projection(&self) -> &DMatrix<T> {
        &self.projection
    }

    /// `I - P`.
    pub fn micro_projection(&self) -> DMatrix<T> {
        DMatrix::identity(self.dim(), self.dim()) - &self.projection
    }

    /// Tensor Gauss-Hermite rule (per axis) used for variable-coefficient Gram matrices.
    pub fn quadrature(&self) -> &Rule<T> {
        &self.quadrature
    }

    /// Row vector `r` with `a(u) = r·u`.
    pub fn a_row(&self) -> DVector<T> {
        self.e_a().clone()
    }

    pub fn b_row(&self, i: usize) -> DVector<T> {
        self.e_b(i).clone()
    }

    /// `c(u) = <e_c, u>/sqrt(6)`.
    pub fn c_row(&self) -> DVector<T> {
        self.e_c() / T::lit(6f64.sqrt())
    }

    /// Extraction vector of `Θ_ij(u) = ∫ (ξ_iξ_j - δ_ij) M^{1/2} u dξ`.
    pub fn theta_row(&self, i: usize, j: usize) -> &DVector<T> {
        &self.theta[i][j]
    }

    /// Extraction vector of `Λ_i(u) = (1/10) ∫ (|ξ|² - 5) ξ_i M^{1/2} u dξ`.
    pub fn lambda_row(&self, i: usize) -> Result<&DVector<T>> {
        self.lambda
            .as_ref()
            .map(|rows| &rows[i])
            .ok_or_else(|| invalid("degree_cap", "Λ moments need degree_cap ≥ 3"))
    }

    fn check_len(&self, len: usize, context: &'static str) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: len,
                context,
            });
        }
        Ok(())
    }

    /// Splits `u` into `(a, b, c)` and `{I - P}u`.
    pub fn project_p(&self, coeffs: &DVector<C<T>>) -> Result<MacroMicro<T>> {
        self.check_len(coeffs.len(), "project_p")?;
        let dot = |row: &DVector<T>| real_dot(row, coeffs);
        let a = dot(self.e_a());
        let b = Vector3::new(dot(self.e_b(0)), dot(self.e_b(1)), dot(self.e_b(2)));
        let c_coord = dot(self.e_c());
        let mut micro = coeffs.clone();
        for (e, coord) in self.null_vectors.iter().zip([a, b[0], b[1], b[2], c_coord]) {
            for (m, &ei) in micro.iter_mut().zip(e.iter()) {
                *m -= coord * ei;
            }
        }
        Ok(MacroMicro {
            a,
            b,
            c: c_coord / T::lit(6f64.sqrt()),
            micro,
        })
    }

    /// `Θ(u)` as a complex 3×3 matrix.
    pub fn theta_moment(&self, coeffs: &DVector<C<T>>) -> Result<nalgebra::Matrix3<C<T>>> {
        self.check_len(coeffs.len(), "theta_moment")?;
        Ok(nalgebra::Matrix3::from_fn(|i, j| real_dot(&self.theta[i][j], coeffs)))
    }

    /// `Λ(u)` as a complex 3-vector.
    pub fn lambda_moment(&self, coeffs: &DVector<C<T>>) -> Result<Vector3<C<T>>> {
        self.check_len(coeffs.len(), "lambda_moment")?;
        let rows = self
            .lambda
            .as_ref()
            .ok_or_else(|| invalid("degree_cap", "Λ moments need degree_cap ≥ 3"))?;
        Ok(Vector3::new(
            real_dot(&rows[0], coeffs),
            real_dot(&rows[1], coeffs),
            real_dot(&rows[2], coeffs),
        ))
    }

    /// Values of the normalized Hermite factors `He_n(x)/sqrt(n!)` for
    /// `n = 0..=degree_cap` at `x`.
    pub fn hermite_values(&self, x: T) -> Vec<T> {
        let mut h = vec![T::zero(); self.degree_cap + 1];
        h[0] = T::one();
        if self.degree_cap >= 1 {
            h[1] = x;
        }
        for n in 1..self.degree_cap {
            // ψ_{n+1} = (x ψ_n - sqrt(n) ψ_{n-1}) / sqrt(n+1)
            let nf = T::lit(n as f64);
            h[n + 1] = (x * h[n] - nf.sqrt() * h[n - 1]) / (nf + T::one()).sqrt();
        }
        h
    }

    /// Gram matrix `G_{mn} = ∫ w(ξ) ψ_m ψ_n dξ` of multiplication by a
    /// weight, assembled with the tensor Gauss-Hermite rule.
    pub fn weighted_gram(&self, weight: impl Fn(T, T, T) -> T) -> DMatrix<T> {
        let dim = self.dim();
        let rule = &self.quadrature;
        let tables: Vec<Vec<T>> = rule.nodes.iter().map(|&x| self.hermite_values(x)).collect();
        let mut gram = DMatrix::<T>::zeros(dim, dim);
        let mut values = DVector::<T>::zeros(dim);
        for (i1, w1) in rule.weights.iter().enumerate() {
            for (i2, w2) in rule.weights.iter().enumerate() {
                for (i3, w3) in rule.weights.iter().enumerate() {
                    let w = *w1 * *w2 * *w3 * weight(rule.nodes[i1], rule.nodes[i2], rule.nodes[i3]);
                    for (idx, n) in self.index_map.iter().enumerate() {
                        values[idx] = tables[i1][n[0]] * tables[i2][n[1]] * tables[i3][n[2]];
                    }
                    gram.ger(w, &values, &values, T::one());
                }
            }
        }
        gram
    }
}

/// `Σ_i row_i z_i` for a real row and complex vector.
pub(crate) fn real_dot<T: Real>(row: &DVector<T>, z: &DVector<C<T>>) -> C<T> {
    let mut acc = C::new(T::zero(), T::zero());
    for (r, v) in row.iter().zip(z.iter()) {
        if *r != T::zero() {
            acc += v * *r;
        }
    }
    acc
}

pub(crate) fn complexify<T: Real>(v: &DVector<T>) -> DVector<C<T>> {
    v.map(|x| C::new(x, T::zero()))
}

pub(crate) fn complexify_matrix<T: Real>(m: &DMatrix<T>) -> DMatrix<C<T>> {
    m.map(|x| C::new(x, T::zero()))
}
