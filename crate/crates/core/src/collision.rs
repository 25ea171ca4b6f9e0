//! Linearized collision operators on the Hermite basis.

use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::linalg::orthonormal_complement;
use crate::scalar::Real;
use crate::velocity_basis::VelocityBasis;

/// Hard-sphere collision frequency `ν(s) = 2π ∫ |ξ - ξ*| M(ξ*) dξ*` at `|ξ| = s`.
///
/// Closed form: `2π [ sqrt(2/π) e^{-s²/2} + (s + 1/s) erf(s/sqrt2) ]`.
pub fn collision_frequency<T: Real>(speed: T) -> Result<T> {
    let s = speed.to_f64_lossy();
    if !(s >= 0.0) || !s.is_finite() {
        return Err(invalid("speed", format!("{s} is not a finite nonnegative number")));
    }
    Ok(T::lit(nu_f64(s)))
}

fn nu_f64(s: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let c = (2.0 / std::f64::consts::PI).sqrt();
    if s < 1e-6 {
        return two_pi * c * (2.0 + s * s / 3.0);
    }
    two_pi * (c * (-0.5 * s * s).exp() + (s + 1.0 / s) * libm::erf(s / std::f64::consts::SQRT_2))
}

#[derive(Clone, Debug, PartialEq)]
pub enum CollisionKind {
    /// `L = -ν₀ (I - P)`.
    RelaxationConstNu { nu0: f64 },
    /// `L = -(I - P) N (I - P)` with `N` the Gram matrix of multiplication by `ν(|ξ|)`.
    RelaxationVariableNu,
    /// Matrix read from a text file; see [`read_matrix_file`].
    ExternalMatrix(PathBuf),
}

/// Symmetric negative semidefinite collision matrix with null space `range(P)`.
#[derive(Clone, Debug)]
pub struct CollisionOperator<T: Real> {
    pub kind: CollisionKind,
    pub matrix: DMatrix<T>,
    /// ν-weight Gram matrix `W` of the coercivity estimate.
    pub weight: DMatrix<T>,
    /// Largest `λ₀` with `-vᵀLv ≥ λ₀ vᵀWv` on `range(I - P)`.
    pub lambda0: T,
    /// Smallest eigenvalue of `-L` on `range(I - P)`.
    pub micro_gap: T,
}

impl<T: Real> CollisionOperator<T> {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `(I - P) W (I - P)`: the microscopic dissipation weight.
    pub fn micro_weight(&self, basis: &VelocityBasis<T>) -> DMatrix<T> {
        match self.kind {
            CollisionKind::RelaxationConstNu { nu0 } => basis.micro_projection() * T::lit(nu0),
            _ => {
                let q = basis.micro_projection();
                &q * &self.weight * &q
            }
        }
    }
}

pub fn build_collision<T: Real>(kind: &CollisionKind, basis: &VelocityBasis<T>) -> Result<CollisionOperator<T>> {
    let dim = basis.dim();
    let micro = basis.micro_projection();
    match kind {
        CollisionKind::RelaxationConstNu { nu0 } => {
            if !(*nu0 > 0.0) || !nu0.is_finite() {
                return Err(invalid("nu0", format!("{nu0} must be positive")));
            }
            let nu = T::lit(*nu0);
            Ok(CollisionOperator {
                kind: kind.clone(),
                matrix: -(&micro * nu),
                weight: DMatrix::identity(dim, dim) * nu,
                lambda0: T::one(),
                micro_gap: nu,
            })
        }
        CollisionKind::RelaxationVariableNu => {
            let gram = nu_gram(basis);
            let matrix = -(&micro * &gram * &micro);
            finish(kind.clone(), matrix, gram, basis)
        }
        CollisionKind::ExternalMatrix(path) => {
            let raw = read_matrix_file::<T>(path)?;
            if raw.nrows() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: raw.nrows(),
                    context: "external collision matrix",
                });
            }
            let sym = (&raw + raw.transpose()) * T::lit(0.5);
            let matrix = &micro * sym * &micro;
            finish(kind.clone(), matrix, nu_gram(basis), basis)
        }
    }
}

fn nu_gram<T: Real>(basis: &VelocityBasis<T>) -> DMatrix<T> {
    let g = basis.weighted_gram(|x, y, z| T::lit(nu_f64((x * x + y * y + z * z).sqrt().to_f64_lossy())));
    (&g + g.transpose()) * T::lit(0.5)
}

fn finish<T: Real>(
    kind: CollisionKind,
    matrix: DMatrix<T>,
    weight: DMatrix<T>,
    basis: &VelocityBasis<T>,
) -> Result<CollisionOperator<T>> {
    let q = orthonormal_complement(basis.null_vectors(), basis.dim());
    let neg = -(q.transpose() * &matrix * &q);
    let w = q.transpose() * &weight * &q;
    let micro_gap = min_eig(&neg);
    let chol = Cholesky::new(w).ok_or_else(|| Error::Numerical("ν-weight Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    // R⁻¹ (-L) R⁻ᵀ with W = R Rᵀ
    let left = l
        .solve_lower_triangular(&neg)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let pencil = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let lambda0 = min_eig(&((&pencil + pencil.transpose()) * T::lit(0.5)));
    if !(lambda0 > T::zero()) {
        return Err(invalid(
            "collision",
            format!(
                "not coercive on the microscopic subspace: λ₀ = {:e} (smallest eigenvalue of -L there: {:e})",
                lambda0.to_f64_lossy(),
                micro_gap.to_f64_lossy()
            ),
        ));
    }
    Ok(CollisionOperator {
        kind,
        matrix,
        weight,
        lambda0,
        micro_gap,
    })
}

fn min_eig<T: Real>(m: &DMatrix<T>) -> T {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b))
}

/// Reads a square real matrix.
///
/// Format: an optional run of `#` comment lines, a header line `dim=<n>`, then
/// `n*n` real numbers in row-major order separated by whitespace or commas.
pub fn read_matrix_file<T: Real>(path: &Path) -> Result<DMatrix<T>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_matrix(&text).map_err(|reason| Error::Parse {
        path: path.display().to_string(),
        reason,
    })
}

fn parse_matrix<T: Real>(text: &str) -> std::result::Result<DMatrix<T>, String> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or("empty file")?;
    let n: usize = header
        .strip_prefix("dim=")
        .ok_or_else(|| format!("expected header `dim=<n>`, found `{header}`"))?
        .trim()
        .parse()
        .map_err(|e| format!("bad dimension: {e}"))?;
    let mut entries = Vec::with_capacity(n * n);
    for line in lines {
        for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|e| format!("bad entry `{tok}`: {e}"))?;
            if !v.is_finite() {
                return Err(format!("non-finite entry `{tok}`"));
            }
            entries.push(T::lit(v));
        }
    }
    if entries.len() != n * n {
        return Err(format!("expected {} entries for dim={n}, found {}", n * n, entries.len()));
    }
    Ok(DMatrix::from_row_slice(n, n, &entries))
}

/// Writes `m` in the format accepted by [`read_matrix_file`].
pub fn write_matrix_file<T: Real>(path: &Path, m: &DMatrix<T>) -> Result<()> {
    let mut out = format!("dim={}\n", m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)].to_f64_lossy())).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Applies `-L` to `v` and checks `-vᵀLv ≥ λ₀ vᵀWv` (relative slack `tol`).
pub fn coercivity_holds<T: Real>(op: &CollisionOperator<T>, v: &DVector<T>, tol: T) -> bool {
    let lhs = -(v.transpose() * &op.matrix * v)[(0, 0)];
    let rhs = op.lambda0 * (v.transpose() * &op.weight * v)[(0, 0)];
    lhs >= rhs - tol * rhs.abs().max(T::one())
}
