//! Per-mode generators `∂_t X = A(k) X` of the linearized models.
//!
//! State layout (flattened, in this order):
//!
//! | model        | components                          |
//! |--------------|-------------------------------------|
//! | `Be`         | `û`                                 |
//! | `Vpb1`       | `û` (the field is slaved to `â`)    |
//! | `Vmb1`       | `û, Ê, B̂`                           |
//! | `Vmb2Rate`   | `û₊, û₋, Ê, B̂`                      |

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::collision::CollisionOperator;
use crate::error::{invalid, Error, Result};
use crate::linalg::orthonormal_complement;
use crate::scalar::{ci, cr, modulus, Real, C};
use crate::velocity_basis::{complexify, complexify_matrix, real_dot, VelocityBasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Model {
    Be,
    Vpb1,
    Vmb1,
    Vmb2Rate,
}

impl Model {
    pub const ALL: [Model; 4] = [Model::Be, Model::Vpb1, Model::Vmb1, Model::Vmb2Rate];

    pub fn id(self) -> &'static str {
        match self {
            Model::Be => "be",
            Model::Vpb1 => "vpb1",
            Model::Vmb1 => "vmb1",
            Model::Vmb2Rate => "vmb2-rate",
        }
    }

    pub fn species(self) -> usize {
        if self == Model::Vmb2Rate {
            2
        } else {
            1
        }
    }

    /// Whether `Ê, B̂` are part of the state vector.
    pub fn carries_fields(self) -> bool {
        matches!(self, Model::Vmb1 | Model::Vmb2Rate)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl serde::Serialize for Model {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| invalid("model", format!("unknown model `{s}` (expected be, vpb1, vmb1, vmb2-rate)")))
    }
}

#[derive(Clone, Debug)]
pub struct ModelSpec<T: Real> {
    pub model: Model,
    pub collision: Arc<CollisionOperator<T>>,
    pub notes: String,
}

impl<T: Real> ModelSpec<T> {
    pub fn new(model: Model, collision: Arc<CollisionOperator<T>>) -> Self {
        Self {
            model,
            collision,
            notes: String::new(),
        }
    }
}

/// Offsets of the state components in the flattened vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub model: Model,
    pub kinetic: usize,
}

impl Layout {
    pub fn new(model: Model, kinetic: usize) -> Self {
        Self { model, kinetic }
    }

    pub fn len(&self) -> usize {
        self.model.species() * self.kinetic + if self.model.carries_fields() { 6 } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn u_len(&self) -> usize {
        self.model.species() * self.kinetic
    }

    /// Offset of `Ê₁`, when the fields are part of the state.
    pub fn e_offset(&self) -> Option<usize> {
        self.model.carries_fields().then(|| self.u_len())
    }

    pub fn b_offset(&self) -> Option<usize> {
        self.model.carries_fields().then(|| self.u_len() + 3)
    }
}

/// State of one Fourier mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeState<T: Real> {
    /// Velocity coefficients (both species stacked for the two-species model).
    pub u_hat: DVector<C<T>>,
    pub e_hat: Option<Vector3<C<T>>>,
    pub b_hat: Option<Vector3<C<T>>>,
    pub k: Vector3<T>,
}

impl<T: Real> ModeState<T> {
    pub fn zeros(layout: Layout, k: Vector3<T>) -> Self {
        let z = Vector3::from_element(cr(T::zero()));
        Self {
            u_hat: DVector::zeros(layout.u_len()),
            e_hat: layout.model.carries_fields().then_some(z),
            b_hat: layout.model.carries_fields().then_some(z),
            k,
        }
    }

    /// Flattened state vector. A derived field (`Vpb1`) is not part of it.
    pub fn flatten(&self, layout: Layout) -> Result<DVector<C<T>>> {
        if self.u_hat.len() != layout.u_len() {
            return Err(Error::DimensionMismatch {
                expected: layout.u_len(),
                got: self.u_hat.len(),
                context: "ModeState::flatten (kinetic part)",
            });
        }
        let mut x = DVector::zeros(layout.len());
        x.rows_mut(0, layout.u_len()).copy_from(&self.u_hat);
        if let (Some(eo), Some(bo)) = (layout.e_offset(), layout.b_offset()) {
            let z = Vector3::from_element(cr(T::zero()));
            x.fixed_rows_mut::<3>(eo).copy_from(&self.e_hat.unwrap_or(z));
            x.fixed_rows_mut::<3>(bo).copy_from(&self.b_hat.unwrap_or(z));
        }
        Ok(x)
    }

    /// Inverse of [`flatten`](Self::flatten); for `Vpb1` the field is
    /// reconstructed as `Ê = -i k â / |k|²`.
    pub fn unflatten(x: &DVector<C<T>>, layout: Layout, k: Vector3<T>, basis: &VelocityBasis<T>) -> Result<Self> {
        if x.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                got: x.len(),
                context: "ModeState::unflatten",
            });
        }
        let u_hat = x.rows(0, layout.u_len()).into_owned();
        let (e_hat, b_hat) = match (layout.e_offset(), layout.b_offset()) {
            (Some(eo), Some(bo)) => (Some(x.fixed_rows::<3>(eo).into_owned()), Some(x.fixed_rows::<3>(bo).into_owned())),
            _ if layout.model == Model::Vpb1 => {
                let a = real_dot(basis.e_a(), &u_hat);
                (Some(poisson_field(&k, a)?), None)
            }
            _ => (None, None),
        };
        Ok(Self { u_hat, e_hat, b_hat, k })
    }

    /// `â` for one species, or the charge `â₊ - â₋` for two.
    pub fn charge(&self, basis: &VelocityBasis<T>) -> C<T> {
        let d = basis.dim();
        let a = real_dot(basis.e_a(), &self.u_hat.rows(0, d).into_owned());
        if self.u_hat.len() == 2 * d {
            a - real_dot(basis.e_a(), &self.u_hat.rows(d, d).into_owned())
        } else {
            a
        }
    }
}

/// `Ê = -i k â / |k|²`, the Gauss-law-consistent Poisson field.
pub fn poisson_field<T: Real>(k: &Vector3<T>, a: C<T>) -> Result<Vector3<C<T>>> {
    let k2 = k.norm_squared();
    if k2 == T::zero() {
        return Err(invalid("k", "the Poisson field is singular at k = 0"));
    }
    Ok(k.map(|kj| ci(-kj / k2) * a))
}

fn cross_matrix<T: Real>(k: &Vector3<T>) -> [[T; 3]; 3] {
    let z = T::zero();
    [[z, -k[2], k[1]], [k[2], z, -k[0]], [-k[1], k[0], z]]
}

#[derive(Clone, Debug)]
pub struct Generator<T: Real> {
    pub a: DMatrix<C<T>>,
    pub k: Vector3<T>,
    pub model: Model,
    pub layout: Layout,
    /// Row functionals `g` with `g·X` the Gauss residuals (`g·A = 0`).
    pub constraint_rows: Vec<DVector<C<T>>>,
}

impl<T: Real> Generator<T> {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Orthonormal basis (columns) of `{X : g·X = 0 for every constraint row g}`.
    pub fn tangent_basis(&self) -> DMatrix<C<T>> {
        let conj: Vec<DVector<C<T>>> = self.constraint_rows.iter().map(|g| g.map(|z| z.conj())).collect();
        orthonormal_complement(&conj, self.dim())
    }
}

/// Kinetic block `-i k·T + L`.
pub fn kinetic_block<T: Real>(k: &Vector3<T>, basis: &VelocityBasis<T>, l: &DMatrix<T>) -> DMatrix<C<T>> {
    let dim = basis.dim();
    let mut m = complexify_matrix(l);
    for axis in 0..3 {
        if k[axis] == T::zero() {
            continue;
        }
        let t = basis.transport(axis);
        for j in 0..dim {
            for i in 0..dim {
                let v = t[(i, j)];
                if v != T::zero() {
                    m[(i, j)] += ci(-k[axis] * v);
                }
            }
        }
    }
    m
}

pub fn assemble_generator<T: Real>(k: Vector3<T>, spec: &ModelSpec<T>, basis: &VelocityBasis<T>) -> Result<Generator<T>> {
    let collision = &spec.collision;
    let dim = basis.dim();
    if collision.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: collision.dim(),
            context: "collision operator vs velocity basis",
        });
    }
    if !k.iter().all(|x| x.is_finite()) {
        return Err(invalid("k", "non-finite wave vector"));
    }
    let layout = Layout::new(spec.model, dim);
    let n = layout.len();
    let mut a = DMatrix::<C<T>>::zeros(n, n);
    let mut constraint_rows = Vec::new();
    let b_idx = |i: usize| basis.index_of(unit3(i)).expect("degree_cap ≥ 2");
    let a_idx = basis.index_of([0, 0, 0]).expect("ground state retained");

    match spec.model {
        Model::Be => {
            a.copy_from(&kinetic_block(&k, basis, &collision.matrix));
        }
        Model::Vpb1 => {
            let k2 = k.norm_squared();
            if k2 == T::zero() {
                return Err(invalid("k", "VPB1 requires |k| > 0 (Poisson coupling is singular at k = 0)"));
            }
            a.copy_from(&kinetic_block(&k, basis, &collision.matrix));
            for j in 0..3 {
                a[(b_idx(j), a_idx)] += ci(-k[j] / k2);
            }
        }
        Model::Vmb1 => {
            a.view_mut((0, 0), (dim, dim)).copy_from(&kinetic_block(&k, basis, &collision.matrix));
            let eo = layout.e_offset().unwrap();
            let bo = layout.b_offset().unwrap();
            for j in 0..3 {
                a[(b_idx(j), eo + j)] = cr(T::one());
                a[(eo + j, b_idx(j))] = cr(-T::one());
            }
            fill_maxwell(&mut a, &k, eo, bo);
            constraint_rows = gauss_rows(&k, layout, basis);
        }
        Model::Vmb2Rate => {
            let l2 = two_species_collision(basis, collision);
            let mut block = complexify_matrix(&l2);
            let kin = kinetic_block(&k, basis, &DMatrix::zeros(dim, dim));
            block.view_mut((0, 0), (dim, dim)).add_assign(&kin);
            block.view_mut((dim, dim), (dim, dim)).add_assign(&kin);
            a.view_mut((0, 0), (2 * dim, 2 * dim)).copy_from(&block);
            let eo = layout.e_offset().unwrap();
            let bo = layout.b_offset().unwrap();
            for (s, sign) in [(0usize, T::one()), (1, -T::one())] {
                for j in 0..3 {
                    a[(s * dim + b_idx(j), eo + j)] = cr(sign);
                    a[(eo + j, s * dim + b_idx(j))] = cr(-sign);
                }
            }
            fill_maxwell(&mut a, &k, eo, bo);
            constraint_rows = gauss_rows(&k, layout, basis);
        }
    }
    Ok(Generator {
        a,
        k,
        model: spec.model,
        layout,
        constraint_rows,
    })
}

trait AddAssignView<T> {
    fn add_assign(&mut self, rhs: &DMatrix<T>);
}

impl<T: Real> AddAssignView<C<T>> for nalgebra::DMatrixViewMut<'_, C<T>> {
    fn add_assign(&mut self, rhs: &DMatrix<C<T>>) {
        for j in 0..rhs.ncols() {
            for i in 0..rhs.nrows() {
                self[(i, j)] += rhs[(i, j)];
            }
        }
    }
}

fn unit3(i: usize) -> [usize; 3] {
    let mut n = [0; 3];
    n[i] = 1;
    n
}

/// `∂_t Ê = i k×B̂ + …`, `∂_t B̂ = -i k×Ê`.
fn fill_maxwell<T: Real>(a: &mut DMatrix<C<T>>, k: &Vector3<T>, eo: usize, bo: usize) {
    let kx = cross_matrix(k);
    for i in 0..3 {
        for j in 0..3 {
            a[(eo + i, bo + j)] = ci(kx[i][j]);
            a[(bo + i, eo + j)] = ci(-kx[i][j]);
        }
    }
}

fn gauss_rows<T: Real>(k: &Vector3<T>, layout: Layout, basis: &VelocityBasis<T>) -> Vec<DVector<C<T>>> {
    let n = layout.len();
    let eo = layout.e_offset().unwrap();
    let bo = layout.b_offset().unwrap();
    let mut ge = DVector::zeros(n);
    let mut gb = DVector::zeros(n);
    for j in 0..3 {
        ge[eo + j] = ci(k[j]);
        gb[bo + j] = ci(k[j]);
    }
    let a_idx = basis.index_of([0, 0, 0]).unwrap();
    ge[a_idx] = cr(-T::one());
    if layout.model.species() == 2 {
        ge[layout.kinetic + a_idx] = cr(T::one());
    }
    vec![ge, gb]
}

/// Two-species collision: `diag(L, L)` plus relaxation of the inter-species
/// momentum and energy differences at the smallest microscopic rate of `L`.
/// The resulting null space is `{a₊, a₋, b₊+b₋, c₊+c₋}` (dimension 6).
pub fn two_species_collision<T: Real>(basis: &VelocityBasis<T>, collision: &CollisionOperator<T>) -> DMatrix<T> {
    let dim = basis.dim();
    let mut l2 = DMatrix::<T>::zeros(2 * dim, 2 * dim);
    l2.view_mut((0, 0), (dim, dim)).copy_from(&collision.matrix);
    l2.view_mut((dim, dim), (dim, dim)).copy_from(&collision.matrix);
    let half = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    for e in &basis.null_vectors()[1..] {
        let mut d = DVector::<T>::zeros(2 * dim);
        d.rows_mut(0, dim).copy_from(&(e * half));
        d.rows_mut(dim, dim).copy_from(&(e * -half));
        l2 -= (&d * d.transpose()) * collision.micro_gap;
    }
    l2
}

/// `(i k·Ê - charge, i k·B̂)`.
pub fn constraint_residuals<T: Real>(state: &ModeState<T>, basis: &VelocityBasis<T>) -> Result<(C<T>, C<T>)> {
    let e = state
        .e_hat
        .ok_or_else(|| invalid("state", "constraint residuals need a model with fields"))?;
    let k = &state.k;
    let kdot = |v: &Vector3<C<T>>| v[0] * k[0] + v[1] * k[1] + v[2] * k[2];
    let ge = ci(T::one()) * kdot(&e) - state.charge(basis);
    let gb = state.b_hat.map(|b| ci(T::one()) * kdot(&b)).unwrap_or(cr(T::zero()));
    Ok((ge, gb))
}

/// Projects `Ê, B̂` onto the Gauss constraint manifold, leaving `û` unchanged.
pub fn make_admissible<T: Real>(state: &ModeState<T>, basis: &VelocityBasis<T>) -> Result<ModeState<T>> {
    let mut out = state.clone();
    let Some(e) = state.e_hat else {
        return Ok(out);
    };
    let k = state.k;
    let k2 = k.norm_squared();
    let charge = state.charge(basis);
    if k2 == T::zero() {
        let scale = state.u_hat.norm().max(T::one());
        if modulus(charge) > T::lit(1e3) * T::eps() * scale {
            return Err(Error::Constraint(format!(
                "k = 0 requires zero charge, found |â| = {:e}",
                modulus(charge).to_f64_lossy()
            )));
        }
        return Ok(out);
    }
    let kc = k.map(cr);
    let (ge, _) = constraint_residuals(state, basis)?;
    out.e_hat = Some(e - kc.map(|kj| ci(-T::one()) * kj / cr(k2)) * ge);
    if let Some(b) = state.b_hat {
        let kb = b[0] * k[0] + b[1] * k[1] + b[2] * k[2];
        out.b_hat = Some(b - kc * (kb / cr(k2)));
    }
    Ok(out)
}

/// Residuals of the five Fourier moment equations of the one-species
/// models, given `X` and `∂_t X`. Returns the largest modulus per equation
/// (mass, momentum, energy, Θ, Λ).
pub fn moment_residuals<T: Real>(
    generator: &Generator<T>,
    basis: &VelocityBasis<T>,
    collision: &CollisionOperator<T>,
    x: &DVector<C<T>>,
    dx: &DVector<C<T>>,
    source: Option<&DVector<C<T>>>,
) -> Result<[T; 5]> {
    if generator.model.species() != 1 {
        return Err(invalid("model", "moment equations are one-species"));
    }
    let layout = generator.layout;
    let k = generator.k;
    let i1 = ci(T::one());
    let state = ModeState::unflatten(x, layout, k, basis)?;
    let dstate = ModeState::unflatten(dx, layout, k, basis)?;
    let u = &state.u_hat;
    let du = &dstate.u_hat;
    let field = state.e_hat.unwrap_or(Vector3::from_element(cr(T::zero())));

    let mm = basis.project_p(u)?;
    let dmm = basis.project_p(du)?;
    let micro = &mm.micro;
    let dmicro = &dmm.micro;
    let theta = basis.theta_moment(micro)?;
    let lambda = basis.lambda_moment(micro)?;
    let dtheta = basis.theta_moment(dmicro)?;
    let dlambda = basis.lambda_moment(dmicro)?;

    // ℓ̂ = -i k·ξ {I-P}û + L û (+ ĥ)
    let mut ell = complexify_matrix(&collision.matrix) * u;
    for axis in 0..3 {
        ell -= complexify_matrix(basis.transport(axis)) * micro * ci(k[axis]);
    }
    if let Some(h) = source {
        ell += h;
    }
    let theta_rhs = basis.theta_moment(&ell)?;
    let lambda_rhs = basis.lambda_moment(&ell)?;

    let kc = k.map(cr);
    let ik_b = i1 * (kc[0] * mm.b[0] + kc[1] * mm.b[1] + kc[2] * mm.b[2]);
    let ik_lambda = i1 * (kc[0] * lambda[0] + kc[1] * lambda[1] + kc[2] * lambda[2]);

    let r_mass = modulus(dmm.a + ik_b);
    let mut r_mom = T::zero();
    for j in 0..3 {
        let mut div_theta = cr(T::zero());
        for i in 0..3 {
            div_theta += i1 * kc[i] * theta[(i, j)];
        }
        let r = dmm.b[j] + i1 * kc[j] * (mm.a + mm.c * T::lit(2.0)) + div_theta - field[j];
        r_mom = r_mom.max(modulus(r));
    }
    let r_energy = modulus(dmm.c + ik_b / cr(T::lit(3.0)) + ik_lambda * cr(T::lit(5.0 / 3.0)));
    let mut r_theta = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { T::one() } else { T::zero() };
            let r = dtheta[(i, j)] + i1 * kc[i] * mm.b[j] + i1 * kc[j] * mm.b[i]
                - ik_b * cr(T::lit(2.0 / 3.0) * delta)
                - ik_lambda * cr(T::lit(10.0 / 3.0) * delta)
                - theta_rhs[(i, j)];
            r_theta = r_theta.max(modulus(r));
        }
    }
    let mut r_lambda = T::zero();
    for i in 0..3 {
        let r = dlambda[i] + i1 * kc[i] * mm.c - lambda_rhs[i];
        r_lambda = r_lambda.max(modulus(r));
    }
    Ok([r_mass, r_mom, r_energy, r_theta, r_lambda])
}

/// Embeds a microscopic velocity vector as a source term `[h, 0, 0]`.
pub fn embed_source<T: Real>(layout: Layout, h: &DVector<C<T>>) -> Result<DVector<C<T>>> {
    if h.len() != layout.u_len() {
        return Err(Error::DimensionMismatch {
            expected: layout.u_len(),
            got: h.len(),
            context: "source vector",
        });
    }
    let mut x = DVector::zeros(layout.len());
    x.rows_mut(0, h.len()).copy_from(h);
    Ok(x)
}

/// Complex null vector `e` embedded in the first species block.
pub fn embed_velocity<T: Real>(layout: Layout, v: &DVector<T>) -> DVector<C<T>> {
    let mut x = DVector::zeros(layout.len());
    x.rows_mut(0, v.len()).copy_from(&complexify(v));
    x
}
