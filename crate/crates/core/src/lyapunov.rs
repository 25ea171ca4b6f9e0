//! Energy and dissipation functionals as Hermitian forms on the flattened
//! mode state, the Lyapunov matrix inequality, and the constant search.
//!
//! A functional `x ↦ ℜ(ℓ₁(x) | ℓ₂(x))` built from two linear row functionals
//! `ℓ(x) = r·x` is the Hermitian matrix `(r₂* r₁ + r₁* r₂)/2`.

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::collision::CollisionOperator;
use crate::decay::phi;
use crate::error::{invalid, Error, Result};
use crate::generator::{Generator, Layout, Model};
use crate::linalg::{hermitian_defect, hermitian_eigenvalues, hermitian_max_eig, hermitian_part};
use crate::scalar::{ci, cr, Real, C};
use crate::velocity_basis::VelocityBasis;

/// Hermitian matrix `M` of the quadratic functional `x ↦ x* M x`.
#[derive(Clone, Debug)]
pub struct QuadForm<T: Real> {
    pub matrix: DMatrix<C<T>>,
    pub label: String,
}

impl<T: Real> QuadForm<T> {
    /// Rejects matrices whose relative asymmetry exceeds `1e-12` (`1e-5` in single precision).
    pub fn new(matrix: DMatrix<C<T>>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        check_hermitian(&matrix, &label)?;
        Ok(Self {
            matrix: hermitian_part(&matrix),
            label,
        })
    }

    pub fn zero(n: usize, label: impl Into<String>) -> Self {
        Self {
            matrix: DMatrix::zeros(n, n),
            label: label.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eval(&self, x: &DVector<C<T>>) -> T {
        (x.adjoint() * &self.matrix * x)[(0, 0)].re
    }

    pub fn scaled(&self, s: T, label: impl Into<String>) -> Self {
        Self {
            matrix: &self.matrix * cr(s),
            label: label.into(),
        }
    }
}

fn check_hermitian<T: Real>(m: &DMatrix<C<T>>, label: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
            context: "quadratic form must be square",
        });
    }
    let tol = T::lit(1e-12).max(T::eps() * T::lit(100.0));
    let defect = hermitian_defect(m);
    if defect > tol {
        return Err(Error::NotHermitian {
            label: label.to_string(),
            asymmetry: defect.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Complex row functional `x ↦ r·x` over the flattened state.
type Row<T> = DVector<C<T>>;

/// `ℜ(r₁x | r₂x)` as a Hermitian matrix.
fn pairing<T: Real>(r1: &Row<T>, r2: &Row<T>) -> DMatrix<C<T>> {
    let n = r1.len();
    let mut m = DMatrix::zeros(n, n);
    let half = cr(T::lit(0.5));
    for (j, a) in r1.iter().enumerate() {
        if *a == cr(T::zero()) {
            continue;
        }
        for (i, b) in r2.iter().enumerate() {
            if *b == cr(T::zero()) {
                continue;
            }
            // (r₂* r₁)_{ij} = conj(r₂_i) r₁_j
            let v = b.conj() * a * half;
            m[(i, j)] += v;
            m[(j, i)] += v.conj();
        }
    }
    m
}

struct Rows<'a, T: Real> {
    layout: Layout,
    basis: &'a VelocityBasis<T>,
}

impl<T: Real> Rows<'_, T> {
    fn embed(&self, v: &DVector<T>) -> Row<T> {
        let mut r = DVector::zeros(self.layout.len());
        for (i, x) in v.iter().enumerate() {
            r[i] = cr(*x);
        }
        r
    }

    fn a(&self) -> Row<T> {
        self.embed(&self.basis.a_row())
    }

    fn b(&self, i: usize) -> Row<T> {
        self.embed(&self.basis.b_row(i))
    }

    fn c(&self) -> Row<T> {
        self.embed(&self.basis.c_row())
    }

    fn theta_micro(&self, i: usize, j: usize) -> Row<T> {
        let micro = self.basis.micro_projection();
        self.embed(&(micro * self.basis.theta_row(i, j)))
    }

    fn lambda_micro(&self, i: usize) -> Result<Row<T>> {
        let micro = self.basis.micro_projection();
        Ok(self.embed(&(micro * self.basis.lambda_row(i)?)))
    }

    fn field(&self, offset: Option<usize>, i: usize) -> Result<Row<T>> {
        let o = offset.ok_or_else(|| invalid("model", "functional needs a model with Maxwell fields"))?;
        let mut r = DVector::zeros(self.layout.len());
        r[o + i] = cr(T::one());
        Ok(r)
    }
}

fn require_one_species(layout: Layout) -> Result<()> {
    if layout.model.species() != 1 {
        return Err(invalid("model", "the interactive functionals are defined for one-species models"));
    }
    Ok(())
}

/// `‖û‖² + |Ê|² + |B̂|²`: the identity on the flattened state.
pub fn base_form<T: Real>(layout: Layout) -> QuadForm<T> {
    QuadForm {
        matrix: DMatrix::identity(layout.len(), layout.len()),
        label: "base".into(),
    }
}

/// Natural energy of the model: [`base_form`] plus `|â|²/|k|²` (the Poisson
/// field energy) for the one-species Poisson model.
pub fn natural_form<T: Real>(k: &Vector3<T>, layout: Layout, basis: &VelocityBasis<T>) -> Result<QuadForm<T>> {
    let mut m = base_form::<T>(layout).matrix;
    if layout.model == Model::Vpb1 {
        let k2 = k.norm_squared();
        if k2 == T::zero() {
            return Err(invalid("k", "the Poisson field energy is singular at k = 0"));
        }
        let a = Rows { layout, basis }.a();
        m += pairing(&a, &a) / cr(k2);
    }
    Ok(QuadForm { matrix: m, label: "natural".into() })
}

/// Time-frequency dissipation: ν-weighted microscopic part, `|k·Ê|²`,
/// `|k|²/(1+|k|²)·(|â|²+|b̂|²+|ĉ|²)`, `|k|²/(1+|k|²)²·|Ê|²` and
/// `|k|⁴/(1+|k|²)³·|B̂|²` (field terms only when the fields are state);
/// `|â|²` for the one-species Poisson model.
pub fn dissipation_form<T: Real>(
    k: &Vector3<T>,
    layout: Layout,
    basis: &VelocityBasis<T>,
    collision: &CollisionOperator<T>,
) -> Result<QuadForm<T>> {
    if basis.degree_cap() < 3 {
        return Err(invalid("degree_cap", "dissipation form needs degree_cap ≥ 3"));
    }
    let n = layout.len();
    let dim = basis.dim();
    let mut m = DMatrix::<C<T>>::zeros(n, n);
    let w = collision.micro_weight(basis).map(cr);
    for s in 0..layout.model.species() {
        m.view_mut((s * dim, s * dim), (dim, dim)).copy_from(&w);
    }
    let k2 = k.norm_squared();
    let one = T::one();
    let macro_w = k2 / (one + k2);
    for s in 0..layout.model.species() {
        let shift = |r: Row<T>| -> Row<T> {
            let mut out = DVector::zeros(n);
            for i in 0..dim {
                out[s * dim + i] = r[i];
            }
            out
        };
        let rows = Rows { layout, basis };
        let mut macro_rows = vec![shift(rows.a()), shift(rows.c())];
        macro_rows.extend((0..3).map(|i| shift(rows.b(i))));
        for r in &macro_rows {
            m += pairing(r, r) * cr(macro_w);
        }
    }
    if layout.model == Model::Vpb1 {
        let a = Rows { layout, basis }.a();
        m += pairing(&a, &a);
    }
    if let (Some(eo), Some(bo)) = (layout.e_offset(), layout.b_offset()) {
        let mut ke = DVector::zeros(n);
        for j in 0..3 {
            ke[eo + j] = cr(k[j]);
        }
        m += pairing(&ke, &ke);
        let we = k2 / ((one + k2) * (one + k2));
        let wb = k2 * k2 / ((one + k2) * (one + k2) * (one + k2));
        for j in 0..3 {
            m[(eo + j, eo + j)] += cr(we);
            m[(bo + j, bo + j)] += cr(wb);
        }
    }
    Ok(QuadForm { matrix: m, label: "D".into() })
}

/// `1/(1+|k|²) ℜ{(ikĉ | Λ({I-P}û)) + Σ_ij(ik_i b̂_j + ik_j b̂_i - (2/3)δ_ij ik·b̂ | Θ_ij({I-P}û)) + κ₁(ikâ | b̂)}`.
pub fn interaction_form_1<T: Real>(k: &Vector3<T>, kappa1: T, layout: Layout, basis: &VelocityBasis<T>) -> Result<QuadForm<T>> {
    let (fluid, mass) = interaction_1_parts(k, layout, basis)?;
    Ok(QuadForm {
        matrix: fluid + mass * cr(kappa1),
        label: "E1".into(),
    })
}

fn interaction_1_parts<T: Real>(
    k: &Vector3<T>,
    layout: Layout,
    basis: &VelocityBasis<T>,
) -> Result<(DMatrix<C<T>>, DMatrix<C<T>>)> {
    require_one_species(layout)?;
    let n = layout.len();
    let rows = Rows { layout, basis };
    let scale = cr(T::one() / (T::one() + k.norm_squared()));
    let ik = |j: usize| ci(k[j]);
    let mut fluid = DMatrix::zeros(n, n);
    let c = rows.c();
    for l in 0..3 {
        fluid += pairing(&(&c * ik(l)), &rows.lambda_micro(l)?);
    }
    let b: Vec<Row<T>> = (0..3).map(|i| rows.b(i)).collect();
    let ik_b = (0..3).fold(DVector::zeros(n), |acc: Row<T>, m| acc + &b[m] * ik(m));
    for i in 0..3 {
        for j in 0..3 {
            let mut r = &b[j] * ik(i) + &b[i] * ik(j);
            if i == j {
                r -= &ik_b * cr(T::lit(2.0 / 3.0));
            }
            fluid += pairing(&r, &rows.theta_micro(i, j));
        }
    }
    let a = rows.a();
    let mut mass = DMatrix::zeros(n, n);
    for j in 0..3 {
        mass += pairing(&(&a * ik(j)), &b[j]);
    }
    Ok((fluid * scale, mass * scale))
}

/// `-ℜ(k×Ê | k×b̂)/(1+|k|²)² - κ₂|k|² ℜ(ik×B̂ | Ê)/(1+|k|²)³`; the zero form
/// for models without field state.
pub fn interaction_form_2<T: Real>(k: &Vector3<T>, kappa2: T, layout: Layout, basis: &VelocityBasis<T>) -> Result<QuadForm<T>> {
    let (first, second) = interaction_2_parts(k, layout, basis)?;
    Ok(QuadForm {
        matrix: first + second * cr(kappa2),
        label: "E2".into(),
    })
}

fn interaction_2_parts<T: Real>(
    k: &Vector3<T>,
    layout: Layout,
    basis: &VelocityBasis<T>,
) -> Result<(DMatrix<C<T>>, DMatrix<C<T>>)> {
    require_one_species(layout)?;
    let n = layout.len();
    if !layout.model.carries_fields() {
        return Ok((DMatrix::zeros(n, n), DMatrix::zeros(n, n)));
    }
    let rows = Rows { layout, basis };
    let e: Vec<Row<T>> = (0..3).map(|i| rows.field(layout.e_offset(), i)).collect::<Result<_>>()?;
    let bf: Vec<Row<T>> = (0..3).map(|i| rows.field(layout.b_offset(), i)).collect::<Result<_>>()?;
    let bm: Vec<Row<T>> = (0..3).map(|i| rows.b(i)).collect();
    let cross = |v: &[Row<T>], l: usize| -> Row<T> {
        // (k × v)_l
        let (p, q) = ((l + 1) % 3, (l + 2) % 3);
        &v[q] * cr(k[p]) - &v[p] * cr(k[q])
    };
    let k2 = k.norm_squared();
    let s = T::one() + k2;
    let mut first = DMatrix::zeros(n, n);
    let mut second = DMatrix::zeros(n, n);
    for l in 0..3 {
        first += pairing(&cross(&e, l), &cross(&bm, l));
        second += pairing(&(cross(&bf, l) * ci(T::one())), &e[l]);
    }
    Ok((first * cr(-T::one() / (s * s)), second * cr(-k2 / (s * s * s))))
}

/// Nested constants of the combined functional and the bounds they achieve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FunctionalCoefficients {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    /// Smallest verified dissipation constant over the grid.
    pub lambda_report: f64,
    pub equiv_lo: f64,
    pub equiv_hi: f64,
}

impl FunctionalCoefficients {
    pub fn with_kappas(kappa1: f64, kappa2: f64, kappa3: f64, kappa4: f64) -> Self {
        Self {
            kappa1,
            kappa2,
            kappa3,
            kappa4,
            lambda_report: 0.0,
            equiv_lo: 1.0,
            equiv_hi: 1.0,
        }
    }

    fn kappas(&self) -> [f64; 4] {
        [self.kappa1, self.kappa2, self.kappa3, self.kappa4]
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in ["kappa1", "kappa2", "kappa3", "kappa4"].iter().zip(self.kappas()) {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid("kappa", format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        Ok(())
    }
}

/// `M_E = M_base + κ₄ (M₁(κ₁) + κ₃ M₂(κ₂))`.
pub fn assemble_e<T: Real>(
    k: &Vector3<T>,
    coeffs: &FunctionalCoefficients,
    layout: Layout,
    basis: &VelocityBasis<T>,
) -> Result<QuadForm<T>> {
    coeffs.validate()?;
    let parts = EnergyParts::new(k, layout, basis)?;
    Ok(QuadForm {
        matrix: parts.combine(coeffs.kappas().map(T::lit)),
        label: "E".into(),
    })
}

/// `κ`-independent pieces of `M_E`: natural form (diagonal), `E1` fluid and mass parts,
/// `E2` first and second parts.
struct EnergyParts<T: Real> {
    pieces: [DMatrix<C<T>>; 5],
}

impl<T: Real> EnergyParts<T> {
    fn new(k: &Vector3<T>, layout: Layout, basis: &VelocityBasis<T>) -> Result<Self> {
        let (f1, m1) = interaction_1_parts(k, layout, basis)?;
        let (f2, m2) = interaction_2_parts(k, layout, basis)?;
        Ok(Self {
            pieces: [natural_form(k, layout, basis)?.matrix, f1, m1, f2, m2],
        })
    }

    /// `[κ₁, κ₂, κ₃, κ₄]` ↦ weights of the five pieces.
    fn weights(kappas: [T; 4]) -> [T; 5] {
        let [k1, k2, k3, k4] = kappas;
        [T::one(), k4, k4 * k1, k4 * k3, k4 * k3 * k2]
    }

    fn combine(&self, kappas: [T; 4]) -> DMatrix<C<T>> {
        let w = Self::weights(kappas);
        let mut m = self.pieces[0].clone();
        for (p, wi) in self.pieces.iter().zip(w).skip(1) {
            if wi != T::zero() {
                m += p * cr(wi);
            }
        }
        m
    }
}

/// `|k|^{2m} M`: the sum of `E((ik)^α ·)` over `|α| = m` with multinomial weights.
pub fn morder_form<T: Real>(form: &QuadForm<T>, k: &Vector3<T>, m: u32) -> QuadForm<T> {
    let s = k.norm_squared().powi(m as i32);
    form.scaled(s, format!("{}_m{}", form.label, m))
}

/// Congruence-scaled restriction of `M_E A + A* M_E` and `M_D` to the
/// constraint tangent subspace.
struct RestrictedPencil<T: Real> {
    /// `Q Z` maps scaled tangent coordinates to the full state.
    to_full: DMatrix<C<T>>,
    /// `(QZ)* · · (QZ)` applied to `A`-dependent pieces is done by [`Self::s_hat`].
    a: DMatrix<C<T>>,
    d_hat: DMatrix<C<T>>,
}

impl<T: Real> RestrictedPencil<T> {
    fn new(generator: &Generator<T>, md: &QuadForm<T>) -> Result<Self> {
        let n = generator.dim();
        if md.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: md.dim(),
                context: "dissipation form vs generator",
            });
        }
        let q = generator.tangent_basis();
        let dr = hermitian_part(&(q.adjoint() * &md.matrix * &q));
        let eig = nalgebra::SymmetricEigen::new(dr);
        let dmax = eig.eigenvalues.iter().copied().fold(T::zero(), |a, b| a.max(b));
        let cut = T::lit(1e-13) * dmax;
        let mut z = eig.eigenvectors.clone();
        for (j, d) in eig.eigenvalues.iter().enumerate() {
            if *d > cut && *d > T::zero() {
                let s = cr(T::one() / d.sqrt());
                z.column_mut(j).scale_mut(s.re);
            }
        }
        let to_full = &q * &z;
        let d_hat = hermitian_part(&(to_full.adjoint() * &md.matrix * &to_full));
        Ok(Self {
            to_full,
            a: generator.a.clone(),
            d_hat,
        })
    }

    /// Scaled `M A + A* M` for a Hermitian `M`.
    fn s_hat(&self, m: &DMatrix<C<T>>) -> DMatrix<C<T>> {
        let ma = m * &self.a;
        let s = &ma + ma.adjoint();
        hermitian_part(&(self.to_full.adjoint() * s * &self.to_full))
    }
}

/// Outcome of [`verify_lyapunov_detailed`].
#[derive(Clone, Debug)]
pub struct LyapunovVerdict<T: Real> {
    /// Largest verified `λ` (0 if infeasible at `λ = 0`).
    pub lambda: T,
    /// `-λ_max(D^{-1/2} S D^{-1/2})` when `D` is positive definite on the tangent space.
    pub lambda_direct: Option<T>,
    /// `λ_max` of the scaled `M_E A + A* M_E` (nonpositive when feasible).
    pub margin: T,
    /// Eigenvector (full state) of the leading violation at `λ = 0`, if infeasible.
    pub violation: Option<DVector<C<T>>>,
}

/// `sup{λ ≥ 0 : M_E A + A* M_E + λ M_D ⪯ 0}` on the Gauss-constraint tangent subspace.
pub fn verify_lyapunov<T: Real>(generator: &Generator<T>, me: &QuadForm<T>, md: &QuadForm<T>) -> Result<T> {
    Ok(verify_lyapunov_detailed(generator, me, md)?.lambda)
}

pub fn verify_lyapunov_detailed<T: Real>(
    generator: &Generator<T>,
    me: &QuadForm<T>,
    md: &QuadForm<T>,
) -> Result<LyapunovVerdict<T>> {
    check_hermitian(&me.matrix, &me.label)?;
    check_hermitian(&md.matrix, &md.label)?;
    if me.dim() != generator.dim() {
        return Err(Error::DimensionMismatch {
            expected: generator.dim(),
            got: me.dim(),
            context: "energy form vs generator",
        });
    }
    let pencil = RestrictedPencil::new(generator, md)?;
    let s = pencil.s_hat(&me.matrix);
    Ok(bisect(&s, &pencil))
}

fn spectral_radius<T: Real>(h: &DMatrix<C<T>>) -> T {
    let e = hermitian_eigenvalues(h);
    if e.is_empty() {
        return T::zero();
    }
    e[0].abs().max(e[e.len() - 1].abs())
}

fn bisect<T: Real>(s: &DMatrix<C<T>>, pencil: &RestrictedPencil<T>) -> LyapunovVerdict<T> {
    let tol = T::lit(1e-10) * spectral_radius(s).max(T::one());
    let top = |lambda: T| hermitian_max_eig(&(s + &pencil.d_hat * cr(lambda)));
    let (margin, v) = top(T::zero());
    let lambda_direct = direct_lambda(s, &pencil.d_hat);
    if margin > tol {
        return LyapunovVerdict {
            lambda: T::zero(),
            lambda_direct,
            margin,
            violation: Some(&pencil.to_full * v),
        };
    }
    let feasible = |lambda: T| top(lambda).0 <= tol;
    let mut lo = T::zero();
    let mut hi = T::one();
    let cap = T::lit(1e12);
    while feasible(hi) {
        lo = hi;
        hi *= T::lit(2.0);
        if hi > cap {
            return LyapunovVerdict {
                lambda: lo,
                lambda_direct,
                margin,
                violation: None,
            };
        }
    }
    // Shrink the bracket from below until the feasible side is nonzero.
    while lo == T::zero() && hi > T::lit(10.0) * tol {
        let mid = hi * T::lit(0.5);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    while lo > T::zero() && hi - lo > T::lit(1e-3) * lo {
        let mid = (lo + hi) * T::lit(0.5);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = if lo <= T::lit(10.0) * tol { T::zero() } else { lo };
    LyapunovVerdict {
        lambda,
        lambda_direct,
        margin,
        violation: None,
    }
}

/// `-λ_max(D^{-1/2} S D^{-1/2})` when the scaled `D` is (numerically) the identity.
fn direct_lambda<T: Real>(s: &DMatrix<C<T>>, d_hat: &DMatrix<C<T>>) -> Option<T> {
    let n = d_hat.nrows();
    if n == 0 {
        return None;
    }
    let defect = (d_hat - DMatrix::<C<T>>::identity(n, n)).norm() / T::lit(n as f64).sqrt();
    if defect > T::lit(1e-6) {
        return None;
    }
    Some(-hermitian_max_eig(s).0)
}

/// Options of [`tune_constants`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuneOptions {
    /// `λ` that must be feasible at every grid point.
    pub lambda_floor: f64,
    pub equiv_floor: f64,
    pub equiv_ceiling: f64,
    pub max_iterations: usize,
    /// Starting `[κ₁, κ₂, κ₃, κ₄]`.
    pub initial: [f64; 4],
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            lambda_floor: 1e-6,
            equiv_floor: 0.25,
            equiv_ceiling: 4.0,
            max_iterations: 60,
            initial: [0.1; 4],
        }
    }
}

/// Per-wave-vector verification result.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerK {
    pub k: [f64; 3],
    pub k_norm: f64,
    pub lambda: f64,
    /// `λ` from the direct generalized-eigenvalue route, when available.
    pub lambda_direct: Option<f64>,
    pub equiv_lo: f64,
    pub equiv_hi: f64,
    /// `λ / φ(|k|)`: the dissipation constant against the reference kernel.
    pub lambda_over_phi: f64,
    /// Norm of the source coupling `M_E [h,0,0]` under the `ν^{-1/2}` weight.
    pub source_coupling: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TuningReport {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    pub lambda_min: f64,
    pub equiv_lo: f64,
    pub equiv_hi: f64,
    pub iterations: usize,
    pub grid: Vec<[f64; 3]>,
    pub per_k: Vec<PerK>,
}

impl TuningReport {
    pub fn coefficients(&self) -> FunctionalCoefficients {
        FunctionalCoefficients {
            kappa1: self.kappa1,
            kappa2: self.kappa2,
            kappa3: self.kappa3,
            kappa4: self.kappa4,
            lambda_report: self.lambda_min,
            equiv_lo: self.equiv_lo,
            equiv_hi: self.equiv_hi,
        }
    }
}

/// Everything at one `k` that does not depend on the constants.
struct GridPoint<T: Real> {
    k: Vector3<T>,
    pencil: RestrictedPencil<T>,
    parts: EnergyParts<T>,
    s_parts: [DMatrix<C<T>>; 5],
    md: QuadForm<T>,
    layout: Layout,
}

impl<T: Real> GridPoint<T> {
    fn new(generator: Generator<T>, basis: &VelocityBasis<T>, collision: &CollisionOperator<T>) -> Result<Self> {
        let k = generator.k;
        let layout = generator.layout;
        let md = dissipation_form(&k, layout, basis, collision)?;
        let pencil = RestrictedPencil::new(&generator, &md)?;
        let parts = EnergyParts::new(&k, layout, basis)?;
        let s_parts = std::array::from_fn(|i| pencil.s_hat(&parts.pieces[i]));
        Ok(Self {
            k,
            pencil,
            parts,
            s_parts,
            md,
            layout,
        })
    }

    fn s_hat(&self, kappas: [T; 4]) -> DMatrix<C<T>> {
        let w = EnergyParts::<T>::weights(kappas);
        let mut s = self.s_parts[0].clone();
        for (p, wi) in self.s_parts.iter().zip(w).skip(1) {
            if wi != T::zero() {
                s += p * cr(wi);
            }
        }
        s
    }

    /// Spectral bounds of the pencil `(M_E, M_natural)`; the natural form is diagonal.
    fn equivalence(&self, kappas: [T; 4]) -> (T, T) {
        let scale = self.parts.pieces[0].diagonal().map(|d| cr(T::one() / d.re.sqrt()));
        let mut m = self.parts.combine(kappas);
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                m[(i, j)] = m[(i, j)] * scale[i] * scale[j];
            }
        }
        let e = hermitian_eigenvalues(&m);
        (e[0], e[e.len() - 1])
    }

    /// `(violation, equivalence bounds)`; feasible iff violation ≤ 0.
    fn violation(&self, kappas: [T; 4], opts: &TuneOptions) -> (T, T, T) {
        let (lo, hi) = self.equivalence(kappas);
        let s = self.s_hat(kappas);
        let tol = T::lit(1e-10) * spectral_radius(&s).max(T::one());
        let lyap = hermitian_max_eig(&(s + &self.pencil.d_hat * cr(T::lit(opts.lambda_floor)))).0 - tol;
        let penalty = (T::lit(opts.equiv_floor) - lo).max(T::zero()) + (hi - T::lit(opts.equiv_ceiling)).max(T::zero());
        let v = if penalty > T::zero() { lyap.max(T::zero()) + T::one() + penalty } else { lyap };
        (v, lo, hi)
    }

    fn per_k(&self, kappas: [T; 4], basis: &VelocityBasis<T>, collision: &CollisionOperator<T>) -> PerK {
        let s = self.s_hat(kappas);
        let verdict = bisect(&s, &self.pencil);
        let (lo, hi) = self.equivalence(kappas);
        let me = self.parts.combine(kappas);
        let kn = self.k.norm().to_f64_lossy();
        let lambda = verdict.lambda.to_f64_lossy();
        PerK {
            k: [self.k[0].to_f64_lossy(), self.k[1].to_f64_lossy(), self.k[2].to_f64_lossy()],
            k_norm: kn,
            lambda,
            lambda_direct: verdict.lambda_direct.map(|x| x.to_f64_lossy()),
            equiv_lo: lo.to_f64_lossy(),
            equiv_hi: hi.to_f64_lossy(),
            lambda_over_phi: lambda / phi(kn),
            source_coupling: source_coupling(&me, self.layout, basis, collision).to_f64_lossy(),
        }
    }
}

/// `‖M_E E_u (I-P) W^{-1/2}‖₂`, where `E_u` embeds a velocity vector as `[h,0,0]`.
fn source_coupling<T: Real>(
    me: &DMatrix<C<T>>,
    layout: Layout,
    basis: &VelocityBasis<T>,
    collision: &CollisionOperator<T>,
) -> T {
    let dim = basis.dim();
    let w = collision.micro_weight(basis);
    let eig = nalgebra::SymmetricEigen::new(w);
    let wmax = eig.eigenvalues.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let mut inv_sqrt = DMatrix::<T>::zeros(dim, dim);
    for (j, d) in eig.eigenvalues.iter().enumerate() {
        if *d > T::lit(1e-12) * wmax {
            let v = eig.eigenvectors.column(j);
            inv_sqrt += (v * v.transpose()) / d.sqrt();
        }
    }
    let block = me.columns(0, dim) * inv_sqrt.map(cr);
    let _ = layout;
    let gram = block.adjoint() * &block;
    hermitian_eigenvalues(&gram).iter().copied().fold(T::zero(), |a, b| a.max(b)).sqrt()
}

fn build_points<T, F>(
    grid: &[Vector3<T>],
    factory: &F,
    basis: &VelocityBasis<T>,
    collision: &CollisionOperator<T>,
) -> Result<Vec<GridPoint<T>>>
where
    T: Real,
    F: Fn(Vector3<T>) -> Result<Generator<T>> + Sync,
{
    if grid.is_empty() {
        return Err(invalid("k_grid", "empty wave-vector grid"));
    }
    if let Some(k) = grid.iter().find(|k| k.norm_squared() == T::zero()) {
        return Err(invalid("k_grid", format!("grid contains k = {k:?}; k = 0 is excluded")));
    }
    grid.par_iter()
        .map(|k| GridPoint::new(factory(*k)?, basis, collision))
        .collect()
}

/// Greedy logarithmic coordinate descent over `(κ₄, κ₃, κ₁, κ₂)`: each
/// iteration halves the one constant that most reduces the worst violation
/// of the Lyapunov inequality (at `λ = lambda_floor`) and of the
/// equivalence bounds over the grid.
pub fn tune_constants<T, F>(
    grid: &[Vector3<T>],
    factory: F,
    basis: &VelocityBasis<T>,
    collision: &CollisionOperator<T>,
    opts: &TuneOptions,
) -> Result<TuningReport>
where
    T: Real,
    F: Fn(Vector3<T>) -> Result<Generator<T>> + Sync,
{
    let points = build_points(grid, &factory, basis, collision)?;
    let worst = |kappas: [f64; 4]| -> (f64, usize) {
        let kt = kappas.map(T::lit);
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| (p.violation(kt, opts).0.to_f64_lossy(), i))
            .reduce(|| (f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
    };
    let mut kappas = opts.initial;
    let mut current = worst(kappas);
    let mut iterations = 0;
    // Descent order (κ₄, κ₃, κ₁, κ₂) as indices into [κ₁, κ₂, κ₃, κ₄].
    let order = [3usize, 2, 0, 1];
    while current.0 > 0.0 {
        if iterations == opts.max_iterations {
            let p = &points[current.1];
            let kt = kappas.map(T::lit);
            let s = p.s_hat(kt);
            let (_, v) = hermitian_max_eig(&(s + &p.pencil.d_hat * cr(T::lit(opts.lambda_floor))));
            let full = &p.pencil.to_full * v;
            let full = &full / cr(full.norm());
            return Err(Error::TuningExhausted {
                iterations,
                worst_k: p.k.norm().to_f64_lossy(),
                violation: current.0,
                eigenvector: full.iter().map(|z| (z.re.to_f64_lossy(), z.im.to_f64_lossy())).collect(),
            });
        }
        iterations += 1;
        let mut best: Option<([f64; 4], (f64, usize))> = None;
        for &i in &order {
            let mut cand = kappas;
            cand[i] *= 0.5;
            let w = worst(cand);
            if best.map_or(true, |(_, b)| w.0 < b.0) {
                best = Some((cand, w));
            }
        }
        let (cand, w) = best.expect("four candidates");
        kappas = cand;
        current = w;
    }
    let kt = kappas.map(T::lit);
    let per_k: Vec<PerK> = points.par_iter().map(|p| p.per_k(kt, basis, collision)).collect();
    Ok(summarize(kappas, iterations, grid, per_k))
}

fn summarize<T: Real>(kappas: [f64; 4], iterations: usize, grid: &[Vector3<T>], per_k: Vec<PerK>) -> TuningReport {
    let lambda_min = per_k.iter().map(|p| p.lambda).fold(f64::INFINITY, f64::min);
    let equiv_lo = per_k.iter().map(|p| p.equiv_lo).fold(f64::INFINITY, f64::min);
    let equiv_hi = per_k.iter().map(|p| p.equiv_hi).fold(f64::NEG_INFINITY, f64::max);
    TuningReport {
        kappa1: kappas[0],
        kappa2: kappas[1],
        kappa3: kappas[2],
        kappa4: kappas[3],
        lambda_min,
        equiv_lo,
        equiv_hi,
        iterations,
        grid: grid.iter().map(|k| [k[0].to_f64_lossy(), k[1].to_f64_lossy(), k[2].to_f64_lossy()]).collect(),
        per_k,
    }
}

/// Verifies given constants on a grid (no search). The report carries the
/// per-`k` `λ` and equivalence bounds; `lambda_min = 0` flags failure.
pub fn evaluate_constants<T, F>(
    grid: &[Vector3<T>],
    factory: F,
    basis: &VelocityBasis<T>,
    collision: &CollisionOperator<T>,
    coeffs: &FunctionalCoefficients,
) -> Result<TuningReport>
where
    T: Real,
    F: Fn(Vector3<T>) -> Result<Generator<T>> + Sync,
{
    coeffs.validate()?;
    let points = build_points(grid, &factory, basis, collision)?;
    let kt = coeffs.kappas().map(T::lit);
    let per_k: Vec<PerK> = points.par_iter().map(|p| p.per_k(kt, basis, collision)).collect();
    Ok(summarize(coeffs.kappas(), 0, grid, per_k))
}

/// The dissipation form used at one grid point (exposed for diagnostics).
pub fn grid_dissipation<T, F>(
    k: Vector3<T>,
    factory: F,
    basis: &VelocityBasis<T>,
    collision: &CollisionOperator<T>,
) -> Result<QuadForm<T>>
where
    T: Real,
    F: Fn(Vector3<T>) -> Result<Generator<T>> + Sync,
{
    Ok(GridPoint::new(factory(k)?, basis, collision)?.md)
}

/// Aligned grid `r e₁` for `count` log-spaced radii in `[lo, hi]`.
pub fn log_grid<T: Real>(lo: f64, hi: f64, count: usize) -> Result<Vec<Vector3<T>>> {
    Ok(log_radii(lo, hi, count)?
        .into_iter()
        .map(|r| Vector3::new(T::lit(r), T::zero(), T::zero()))
        .collect())
}

/// `count` log-spaced radii in `[lo, hi]` (both included).
pub fn log_radii(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi >= lo) || count == 0 || !hi.is_finite() {
        return Err(invalid("grid", format!("need 0 < lo ≤ hi and count ≥ 1, got [{lo}, {hi}] × {count}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect())
}
