//! Exact-in-time evolution `X(t) = exp(tA) X₀`, with and without a
//! microscopic source (Duhamel integral), and trajectory diagnostics.

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::generator::{constraint_residuals, moment_residuals, Generator, Layout, ModeState};
use crate::collision::CollisionOperator;
use crate::linalg::{eigen_decompose, EigenDecomposition};
use crate::lyapunov::QuadForm;
use crate::quadrature::gauss_legendre;
use crate::scalar::{cr, modulus, Real, C};
use crate::velocity_basis::{real_dot, VelocityBasis};

/// Eigenvector-matrix condition number above which `exp(tA)` is evaluated
/// by scaling and squaring instead of the eigendecomposition.
pub const DEFECTIVE_CONDITION: f64 = 1e8;

/// Cached evaluation of `exp(tA)`.
#[derive(Clone, Debug)]
pub struct Propagator<T: Real> {
    generator: Generator<T>,
    eig: Option<EigenDecomposition<T>>,
}

impl<T: Real> Propagator<T> {
    pub fn new(generator: Generator<T>) -> Result<Self> {
        let eig = match eigen_decompose(&generator.a) {
            Ok(e) if e.condition.to_f64_lossy() <= DEFECTIVE_CONDITION => Some(e),
            _ => None,
        };
        Ok(Self { generator, eig })
    }

    pub fn generator(&self) -> &Generator<T> {
        &self.generator
    }

    /// Whether the scaling-and-squaring fallback is in use.
    pub fn uses_fallback(&self) -> bool {
        self.eig.is_none()
    }

    /// Eigenvector condition number, when the eigendecomposition is used.
    pub fn condition(&self) -> Option<T> {
        self.eig.as_ref().map(|e| e.condition)
    }

    /// `exp(tA) x`.
    pub fn apply(&self, t: T, x: &DVector<C<T>>) -> Result<DVector<C<T>>> {
        self.apply_modal(t, &self.to_modal(x)?, x)
    }

    /// Coordinates in the eigenbasis (`V⁻¹ x`), or `x` itself for the fallback.
    fn to_modal(&self, x: &DVector<C<T>>) -> Result<DVector<C<T>>> {
        if x.len() != self.generator.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.generator.dim(),
                got: x.len(),
                context: "propagated state",
            });
        }
        Ok(match &self.eig {
            Some(e) => &e.inverse * x,
            None => x.clone(),
        })
    }

    fn apply_modal(&self, t: T, modal: &DVector<C<T>>, x: &DVector<C<T>>) -> Result<DVector<C<T>>> {
        if t == T::zero() {
            return Ok(x.clone());
        }
        match &self.eig {
            Some(e) => {
                let scaled = DVector::from_fn(modal.len(), |i, _| nalgebra::ComplexField::exp(e.values[i] * cr(t)) * modal[i]);
                Ok(&e.vectors * scaled)
            }
            None => Ok(expm(&self.generator.a, t)? * x),
        }
    }
}

fn expm<T: Real>(a: &nalgebra::DMatrix<C<T>>, t: T) -> Result<nalgebra::DMatrix<C<T>>> {
    let scaled = a * cr(t);
    let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| scaled.exp()))
        .map_err(|_| Error::Numerical("matrix exponential (scaling and squaring) failed".into()))?;
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical(format!("non-finite matrix exponential at t = {:e}", t.to_f64_lossy())));
    }
    Ok(out)
}

/// Sampled solution of one mode.
#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    /// Flattened states (see [`Layout`]).
    pub states: Vec<DVector<C<T>>>,
    pub layout: Layout,
    /// Largest norm of the macroscopic source component removed before integration.
    pub discarded_source: T,
}

impl<T: Real> Trajectory<T> {
    pub fn mode_state(&self, j: usize, generator: &Generator<T>, basis: &VelocityBasis<T>) -> Result<ModeState<T>> {
        ModeState::unflatten(&self.states[j], self.layout, generator.k, basis)
    }
}

fn check_times<T: Real>(times: &[T]) -> Result<()> {
    if times.is_empty() {
        return Err(invalid("times", "no sample times"));
    }
    if times[0] < T::zero() || !times.iter().all(|t| t.is_finite()) {
        return Err(invalid("times", "sample times must be finite and nonnegative"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("times", "sample times must be strictly increasing"));
    }
    Ok(())
}

/// `X(t_j) = exp(t_j A) X₀` from one eigendecomposition.
pub fn propagate<T: Real>(prop: &Propagator<T>, state0: &DVector<C<T>>, times: &[T]) -> Result<Trajectory<T>> {
    check_times(times)?;
    let modal = prop.to_modal(state0)?;
    let states = times
        .iter()
        .map(|&t| prop.apply_modal(t, &modal, state0))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        layout: prop.generator.layout,
        discarded_source: T::zero(),
    })
}

/// Options of [`propagate_with_source`].
#[derive(Clone, Copy, Debug)]
pub struct SourceOptions {
    /// Gauss-Legendre nodes per panel.
    pub nodes: usize,
    /// Upper bound on `‖A‖₂·(panel width)`; controls the panel count.
    pub panel_phase: f64,
    pub max_panels: usize,
}

impl Default for SourceOptions {
    fn default() -> Self {
        Self {
            nodes: 16,
            panel_phase: 4.0,
            max_panels: 100_000,
        }
    }
}

/// `X(t) = exp(tA)X₀ + ∫₀ᵗ exp((t-s)A)[h(s),0,0] ds`, integrated panel by panel
/// between consecutive sample times. `source(s)` returns the velocity part
/// `h(s)` (length of the kinetic block); its macroscopic part is removed and
/// the removed norm reported, and sources whose macroscopic part exceeds
/// `1e-10·‖h‖` are rejected.
pub fn propagate_with_source<T, F>(
    prop: &Propagator<T>,
    basis: &VelocityBasis<T>,
    state0: &DVector<C<T>>,
    source: F,
    times: &[T],
    opts: SourceOptions,
) -> Result<Trajectory<T>>
where
    T: Real,
    F: Fn(T) -> DVector<C<T>>,
{
    check_times(times)?;
    let layout = prop.generator.layout;
    let n = layout.len();
    if state0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: state0.len(),
            context: "propagated state",
        });
    }
    let anorm = crate::linalg::hermitian_eigenvalues(&(prop.generator.a.adjoint() * &prop.generator.a))
        .iter()
        .copied()
        .fold(T::zero(), |a, b| a.max(b))
        .sqrt()
        .max(T::eps());
    let rule = gauss_legendre::<T>(opts.nodes);
    let mut discarded = T::zero();
    let mut embedded = |s: T| -> Result<DVector<C<T>>> {
        let h = source(s);
        if h.len() != layout.u_len() {
            return Err(Error::DimensionMismatch {
                expected: layout.u_len(),
                got: h.len(),
                context: "source vector",
            });
        }
        let mut x = DVector::zeros(n);
        let d = basis.dim();
        let mut macro_sq = T::zero();
        for sp in 0..layout.model.species() {
            let mut block = h.rows(sp * d, d).into_owned();
            for e in basis.null_vectors() {
                let coord = real_dot(e, &block);
                macro_sq += coord.norm_sqr();
                for (b, ei) in block.iter_mut().zip(e.iter()) {
                    *b -= coord * *ei;
                }
            }
            x.rows_mut(sp * d, d).copy_from(&block);
        }
        let macro_norm = macro_sq.sqrt();
        if macro_norm > T::lit(1e-10) * h.norm() {
            return Err(Error::Constraint(format!(
                "source has a macroscopic component of norm {:e} at s = {:e} (P h must vanish)",
                macro_norm.to_f64_lossy(),
                s.to_f64_lossy()
            )));
        }
        discarded = discarded.max(macro_norm);
        Ok(x)
    };

    let mut states = Vec::with_capacity(times.len());
    let mut t_prev = T::zero();
    let mut x = state0.clone();
    for &t in times {
        let width = t - t_prev;
        if width > T::zero() {
            let panels = ((width * anorm / T::lit(opts.panel_phase)).to_f64_lossy().ceil() as usize).clamp(1, opts.max_panels);
            let mut integral = DVector::<C<T>>::zeros(n);
            let pw = width / T::lit(panels as f64);
            for p in 0..panels {
                let a = t_prev + pw * T::lit(p as f64);
                let panel = rule.on_interval(a, a + pw);
                for (s, w) in panel.nodes.iter().zip(panel.weights.iter()) {
                    let hs = embedded(*s)?;
                    integral += prop.apply(t - *s, &hs)? * cr(*w);
                }
            }
            x = prop.apply(width, &x)? + integral;
        }
        states.push(x.clone());
        t_prev = t;
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        layout,
        discarded_source: discarded,
    })
}

/// Per-sample diagnostics of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub time: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub gauss_e: f64,
    pub gauss_b: f64,
    pub norm_u: f64,
    pub norm_e: f64,
    pub norm_b: f64,
}

/// `E`, `D`, Gauss residual moduli and component norms at every sample.
/// For the Poisson model `norm_e` is the reconstructed `|Ê|`.
pub fn diagnostics<T: Real>(
    traj: &Trajectory<T>,
    generator: &Generator<T>,
    basis: &VelocityBasis<T>,
    me: &QuadForm<T>,
    md: &QuadForm<T>,
) -> Result<Vec<Diagnostics>> {
    traj.states
        .iter()
        .zip(&traj.times)
        .map(|(x, t)| {
            let s = ModeState::unflatten(x, traj.layout, generator.k, basis)?;
            let (ge, gb) = if traj.layout.model.carries_fields() {
                let (a, b) = constraint_residuals(&s, basis)?;
                (modulus(a).to_f64_lossy(), modulus(b).to_f64_lossy())
            } else {
                (0.0, 0.0)
            };
            Ok(Diagnostics {
                time: t.to_f64_lossy(),
                energy: me.eval(x).to_f64_lossy(),
                dissipation: md.eval(x).to_f64_lossy(),
                gauss_e: ge,
                gauss_b: gb,
                norm_u: s.u_hat.norm().to_f64_lossy(),
                norm_e: s.e_hat.map_or(0.0, |e| e.norm().to_f64_lossy()),
                norm_b: s.b_hat.map_or(0.0, |b| b.norm().to_f64_lossy()),
            })
        })
        .collect()
}

/// `∫_{t₁}^{t₂} x(t)* M x(t) dt` along the homogeneous flow from `x(t₁) = x1`,
/// by Gauss-Legendre on `panels` equal panels.
pub fn integrate_form<T: Real>(
    prop: &Propagator<T>,
    form: &QuadForm<T>,
    x1: &DVector<C<T>>,
    t1: T,
    t2: T,
    panels: usize,
    nodes: usize,
) -> Result<T> {
    if !(t2 >= t1) || panels == 0 {
        return Err(invalid("interval", "need t₂ ≥ t₁ and at least one panel"));
    }
    let modal = prop.to_modal(x1)?;
    let rule = gauss_legendre::<T>(nodes);
    let pw = (t2 - t1) / T::lit(panels as f64);
    let mut total = T::zero();
    for p in 0..panels {
        let a = pw * T::lit(p as f64);
        let panel = rule.on_interval(a, a + pw);
        for (s, w) in panel.nodes.iter().zip(panel.weights.iter()) {
            let xs = prop.apply_modal(*s, &modal, x1)?;
            total += *w * form.eval(&xs);
        }
    }
    Ok(total)
}

/// Coefficients of the 9-point central first-derivative stencil (order 8).
const FD8: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];

/// `∂_t X` at `t` by the 8th-order central difference of the exact flow with step `h`.
pub fn time_derivative<T: Real>(prop: &Propagator<T>, x0: &DVector<C<T>>, t: T, h: T) -> Result<DVector<C<T>>> {
    let modal = prop.to_modal(x0)?;
    let mut d = DVector::<C<T>>::zeros(x0.len());
    for (j, c) in FD8.iter().enumerate() {
        let off = h * T::lit((j + 1) as f64);
        let plus = prop.apply_modal(t + off, &modal, x0)?;
        let minus = prop.apply_modal(t - off, &modal, x0)?;
        d += (plus - minus) * cr(T::lit(*c) / h);
    }
    Ok(d)
}

/// Largest moment-equation residual (over the five equations) at each sample,
/// with `∂_t X` from [`time_derivative`] at step `0.05/‖A‖_F`.
pub fn moment_residual_series<T: Real>(
    prop: &Propagator<T>,
    basis: &VelocityBasis<T>,
    collision: &CollisionOperator<T>,
    traj: &Trajectory<T>,
    state0: &DVector<C<T>>,
) -> Result<Vec<[T; 5]>> {
    let h = T::lit(0.05) / prop.generator.a.norm().max(T::one());
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, x)| {
            let dx = time_derivative(prop, state0, t, h)?;
            moment_residuals(&prop.generator, basis, collision, x, &dx, None)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::{build_collision, CollisionKind};
    use crate::generator::{assemble_generator, make_admissible, Model, ModelSpec};
    use crate::lyapunov::base_form;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn setup(model: Model, d: usize, k: Vector3<f64>) -> (VelocityBasis<f64>, ModelSpec<f64>, Propagator<f64>) {
        let basis = VelocityBasis::new(d).unwrap();
        let op = build_collision(&CollisionKind::RelaxationConstNu { nu0: 1.0 }, &basis).unwrap();
        let spec = ModelSpec::new(model, Arc::new(op));
        let g = assemble_generator(k, &spec, &basis).unwrap();
        let p = Propagator::new(g).unwrap();
        (basis, spec, p)
    }

    fn admissible(basis: &VelocityBasis<f64>, g: &Generator<f64>, seed: u64) -> DVector<C<f64>> {
        let x = DVector::from_fn(g.dim(), |i, _| C::new(((i as u64 * 31 + seed) % 17) as f64 / 17.0 - 0.5, ((i as u64 * 7 + seed) % 13) as f64 / 13.0 - 0.5));
        let s = ModeState::unflatten(&x, g.layout, g.k, basis).unwrap();
        make_admissible(&s, basis).unwrap().flatten(g.layout).unwrap()
    }

    #[test]
    fn time_zero_is_identity() {
        let (basis, _, p) = setup(Model::Vmb1, 4, Vector3::new(1.0, 0.0, 0.0));
        let x = admissible(&basis, p.generator(), 1);
        let tr = propagate(&p, &x, &[0.0, 1.0]).unwrap();
        assert_eq!(tr.states[0], x);
    }

    #[test]
    fn be_at_rest_conserves_mass() {
        let (basis, _, p) = setup(Model::Be, 4, Vector3::zeros());
        let x = basis.e_a().map(cr);
        let tr = propagate(&p, &x, &[0.5, 10.0, 100.0]).unwrap();
        for s in &tr.states {
            assert!((s - &x).norm() < 1e-12);
        }
    }

    #[test]
    fn fallback_matches_eigen_route() {
        let (basis, _, p) = setup(Model::Vmb1, 3, Vector3::new(0.5, 0.2, 0.0));
        let x = admissible(&basis, p.generator(), 3);
        let fallback = Propagator {
            generator: p.generator().clone(),
            eig: None,
        };
        assert!(fallback.uses_fallback() && !p.uses_fallback());
        for t in [0.1, 2.0, 15.0] {
            let a = p.apply(t, &x).unwrap();
            let b = fallback.apply(t, &x).unwrap();
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn rejects_unsorted_times() {
        let (_, _, p) = setup(Model::Be, 3, Vector3::new(1.0, 0.0, 0.0));
        let x = DVector::zeros(p.generator().dim());
        assert!(propagate(&p, &x, &[1.0, 0.5]).is_err());
        assert!(propagate(&p, &x, &[]).is_err());
        assert!(propagate(&p, &DVector::zeros(3), &[1.0]).is_err());
    }

    #[test]
    fn zero_source_matches_homogeneous() {
        let (basis, _, p) = setup(Model::Vmb1, 4, Vector3::new(0.8, 0.0, 0.0));
        let x = admissible(&basis, p.generator(), 5);
        let times = [0.5, 1.0, 3.0];
        let a = propagate(&p, &x, &times).unwrap();
        let b = propagate_with_source(&p, &basis, &x, |_| DVector::zeros(basis.dim()), &times, SourceOptions::default()).unwrap();
        for (u, v) in a.states.iter().zip(&b.states) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn small_time_source_response() {
        let (basis, _, p) = setup(Model::Vmb1, 4, Vector3::new(0.8, 0.0, 0.0));
        let mut h = DVector::zeros(basis.dim());
        h[basis.index_of([1, 1, 0]).unwrap()] = cr(1.0);
        let x0 = DVector::zeros(p.generator().dim());
        let t = 1e-4;
        let tr = propagate_with_source(&p, &basis, &x0, |_| h.clone(), &[t], SourceOptions::default()).unwrap();
        let mut hx = DVector::zeros(p.generator().dim());
        hx.rows_mut(0, basis.dim()).copy_from(&h);
        let a = &p.generator().a;
        let expect = &hx * cr(t) + (a * &hx) * cr(t * t / 2.0);
        let bound = t.powi(3) * a.norm().powi(2) * hx.norm();
        assert!((&tr.states[0] - expect).norm() < bound);
    }

    #[test]
    fn macroscopic_source_rejected() {
        let (basis, _, p) = setup(Model::Vmb1, 3, Vector3::new(0.8, 0.0, 0.0));
        let h = basis.e_a().map(cr);
        let x0 = DVector::zeros(p.generator().dim());
        let r = propagate_with_source(&p, &basis, &x0, |_| h.clone(), &[1.0], SourceOptions::default());
        assert!(matches!(r, Err(Error::Constraint(_))));
    }

    #[test]
    fn energy_balance_base_form() {
        let (basis, spec, p) = setup(Model::Vmb1, 5, Vector3::new(0.6, 0.3, 0.0));
        let x = admissible(&basis, p.generator(), 9);
        let base = base_form(p.generator().layout);
        let micro = QuadForm::new(
            {
                let mut m = nalgebra::DMatrix::zeros(p.generator().dim(), p.generator().dim());
                m.view_mut((0, 0), (basis.dim(), basis.dim()))
                    .copy_from(&spec.collision.micro_weight(&basis).map(cr));
                m * cr(2.0)
            },
            "2ν(I-P)",
        )
        .unwrap();
        let (t1, t2) = (0.5, 4.0);
        let x1 = p.apply(t1, &x).unwrap();
        let x2 = p.apply(t2, &x).unwrap();
        let lhs = base.eval(&x1) - base.eval(&x2);
        let rhs = integrate_form(&p, &micro, &x1, t1, t2, 8, 20).unwrap();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs());
    }

    #[test]
    fn moment_residuals_small() {
        let (basis, spec, p) = setup(Model::Vmb1, 5, Vector3::new(0.9, 0.0, 0.0));
        let x = admissible(&basis, p.generator(), 4);
        let tr = propagate(&p, &x, &[0.0, 0.3, 2.0, 9.0]).unwrap();
        let r = moment_residual_series(&p, &basis, &spec.collision, &tr, &x).unwrap();
        let scale = x.norm();
        for row in r {
            for v in row {
                assert!(v < 1e-9 * scale, "{v}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn duhamel_is_linear(seed in 0u64..1000, amp in 0.1f64..2.0) {
            let (basis, _, p) = setup(Model::Vmb1, 3, Vector3::new(0.7, 0.0, 0.0));
            let x = admissible(&basis, p.generator(), seed);
            let micro = basis.micro_projection().map(cr);
            let h0 = &micro * DVector::from_fn(basis.dim(), |i, _| C::new(((i as u64 + seed) % 5) as f64 * amp, 0.3));
            let src = |s: f64| &h0 * cr((s * 0.7).cos());
            let times = [0.2, 1.0, 2.5];
            let both = propagate_with_source(&p, &basis, &x, src, &times, SourceOptions::default()).unwrap();
            let homo = propagate(&p, &x, &times).unwrap();
            let forced = propagate_with_source(&p, &basis, &DVector::zeros(x.len()), src, &times, SourceOptions::default()).unwrap();
            for j in 0..times.len() {
                let diff = (&both.states[j] - &homo.states[j] - &forced.states[j]).norm();
                prop_assert!(diff < 1e-10 * (1.0 + both.states[j].norm()));
            }
        }

        #[test]
        fn semigroup(t in 0.0f64..5.0, s in 0.0f64..5.0) {
            let (basis, _, p) = setup(Model::Vmb1, 3, Vector3::new(1.3, 0.0, 0.0));
            let x = admissible(&basis, p.generator(), 2);
            let direct = p.apply(t + s, &x).unwrap();
            let stepped = p.apply(s, &p.apply(t, &x).unwrap()).unwrap();
            prop_assert!((direct - stepped).norm() < 1e-10 * x.norm());
        }
    }
}
