//! Cross-module invariants: spectral decay, Lyapunov consequences along
//! trajectories, kernel bounds and Duhamel bounds.

use std::sync::Arc;

use kinedecay::collision::{build_collision, write_matrix_file, CollisionKind, CollisionOperator};
use kinedecay::decay::{phi, pointwise_bound, spectral_gap, standard_datum, RadialGrid};
use kinedecay::generator::{assemble_generator, make_admissible, Generator, Model, ModeState, ModelSpec};
use kinedecay::linalg::{hermitian_eigenvalues, spectral_abscissa};
use kinedecay::lyapunov::{
    assemble_e, dissipation_form, evaluate_constants, log_grid, log_radii, morder_form, natural_form, tune_constants,
    verify_lyapunov, FunctionalCoefficients, TuneOptions,
};
use kinedecay::propagator::{propagate, propagate_with_source, Propagator, SourceOptions};
use kinedecay::velocity_basis::VelocityBasis;
use kinedecay::C;
use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(degree: usize) -> (VelocityBasis<f64>, Arc<CollisionOperator<f64>>) {
    let basis = VelocityBasis::new(degree).unwrap();
    let col = Arc::new(build_collision(&CollisionKind::RelaxationConstNu { nu0: 1.0 }, &basis).unwrap());
    (basis, col)
}

fn random_admissible(g: &Generator<f64>, basis: &VelocityBasis<f64>, seed: u64) -> DVector<C<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = || C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let mut s = ModeState::zeros(g.layout, g.k);
    for v in s.u_hat.iter_mut() {
        *v = z();
    }
    if g.model.carries_fields() {
        s.e_hat = Some(Vector3::new(z(), z(), z()));
        s.b_hat = Some(Vector3::new(z(), z(), z()));
    }
    let x = make_admissible(&s, basis).unwrap().flatten(g.layout).unwrap();
    let n = x.norm();
    x / C::new(n, 0.0)
}

/// `min` eigenvalue of `M_D` on the tangent space, relative to the natural form.
fn form_constant(g: &Generator<f64>, basis: &VelocityBasis<f64>, col: &CollisionOperator<f64>) -> f64 {
    let md = dissipation_form(&g.k, g.layout, basis, col).unwrap();
    let nat = natural_form(&g.k, g.layout, basis).unwrap();
    let q = g.tangent_basis();
    let d = q.adjoint() * &md.matrix * &q;
    let b = q.adjoint() * &nat.matrix * &q;
    let l = b.cholesky().unwrap().l();
    let li = l.clone().try_inverse().unwrap();
    hermitian_eigenvalues(&(&li * d * li.adjoint()))[0]
}

#[test]
fn spectral_abscissa_negative_on_grid() {
    let (basis, col) = setup(6);
    for model in [Model::Vmb1, Model::Vpb1, Model::Be, Model::Vmb2Rate] {
        let spec = ModelSpec::new(model, col.clone());
        for r in log_radii(1e-2, 1e2, 9).unwrap() {
            let g = assemble_generator(Vector3::new(r, 0.3 * r, 0.0), &spec, &basis).unwrap();
            assert!(spectral_gap(&g).unwrap() > 0.0, "{model} at r = {r}");
        }
    }
}

#[test]
fn vmb1_unit_wavevector_golden() {
    let (basis, col) = setup(6);
    let spec = ModelSpec::new(Model::Vmb1, col.clone());
    let g = assemble_generator(Vector3::new(1.0, 0.0, 0.0), &spec, &basis).unwrap();
    let gap = spectral_gap(&g).unwrap();
    assert!((gap - 1.252_382_894_583_448e-1).abs() < 1e-10, "gap = {gap:.17e}");
    // The full-space abscissa is the pair of neutral constraint-violating modes.
    assert!(spectral_abscissa(&g.a).unwrap().abs() < 1e-10);
    let report = tune_constants(&[g.k], |k| assemble_generator(k, &spec, &basis), &basis, &col, &TuneOptions::default()).unwrap();
    assert!((report.lambda_min / 8.764_266_967_773_438e-4 - 1.0).abs() < 1e-6, "λ = {:.17e}", report.lambda_min);
    let direct = report.per_k[0].lambda_direct.unwrap();
    assert!((direct / report.lambda_min - 1.0).abs() < 2e-3);
}

#[test]
fn dissipation_dominates_kernel_times_energy() {
    let (basis, col) = setup(6);
    let spec = ModelSpec::new(Model::Vmb1, col.clone());
    let mut cmin = f64::INFINITY;
    for r in log_radii(1e-2, 1e3, 16).unwrap() {
        let g = assemble_generator(Vector3::new(r, 0.0, 0.0), &spec, &basis).unwrap();
        cmin = cmin.min(form_constant(&g, &basis, &col) / phi(r));
    }
    assert!(cmin > 0.0 && cmin.is_finite(), "c = {cmin}");
}

#[test]
fn regularity_loss_visible_in_ratio_only() {
    let (basis, col) = setup(6);
    let spec = ModelSpec::new(Model::Vmb1, col.clone());
    let grid = log_grid::<f64>(1e-1, 1e3, 9).unwrap();
    let report = tune_constants(&grid, |k| assemble_generator(k, &spec, &basis), &basis, &col, &TuneOptions::default()).unwrap();
    let ratios: Vec<f64> = report.per_k.iter().map(|p| p.lambda_over_phi).collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    assert!(lo > 0.0);
    // λ itself stays of unit order across the grid: the k-weights sit in M_D.
    assert!(hi / lo < 1e12, "{ratios:?}");
    assert!(report.per_k.iter().all(|p| p.lambda > 0.0));
}

#[test]
fn energy_nonincreasing_and_kernel_bound_along_trajectories() {
    let (basis, col) = setup(6);
    let coeffs = FunctionalCoefficients::with_kappas(0.1, 0.1, 0.1, 0.1);
    for model in [Model::Vmb1, Model::Vpb1, Model::Be] {
        let spec = ModelSpec::new(model, col.clone());
        for (i, r) in [0.05, 0.3, 1.0, 5.0, 30.0].into_iter().enumerate() {
            let g = assemble_generator(Vector3::new(r, 0.0, 0.0), &spec, &basis).unwrap();
            let k = g.k;
            let me = assemble_e(&k, &coeffs, g.layout, &basis).unwrap();
            let md = dissipation_form(&k, g.layout, &basis, &col).unwrap();
            let nat = natural_form(&k, g.layout, &basis).unwrap();
            let lambda = verify_lyapunov(&g, &me, &md).unwrap();
            assert!(lambda > 0.0);
            let c = form_constant(&g, &basis, &col);
            let ev = {
                let l = nat.matrix.clone().cholesky().unwrap().l().try_inverse().unwrap();
                hermitian_eigenvalues(&(&l * &me.matrix * l.adjoint()))
            };
            let (lo, hi) = (ev[0], ev[ev.len() - 1]);
            let x0 = random_admissible(&g, &basis, 100 + i as u64);
            let prop = Propagator::new(g).unwrap();
            let scale = 1.0 / phi(r).max(1e-3);
            let times: Vec<f64> = (0..=20).map(|j| j as f64 * 0.5 * scale).collect();
            let traj = propagate(&prop, &x0, &times).unwrap();
            let e: Vec<f64> = traj.states.iter().map(|x| me.eval(x)).collect();
            for w in e.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{model} r = {r}: {w:?}");
            }
            let mu = lambda * c / phi(r);
            let n0 = nat.eval(&x0).sqrt();
            for (t, x) in times.iter().zip(&traj.states) {
                // log-slope bound on E and the pointwise bound on |Û|
                assert!(me.eval(x) <= e[0] * (-(lambda * c / hi) * t).exp() * (1.0 + 1e-10) + 1e-14);
                let n = nat.eval(x).sqrt();
                assert!(n <= n0 * pointwise_bound(mu, lo, hi, r, *t) * (1.0 + 1e-10) + 1e-14);
            }
        }
    }
}

#[test]
fn vmb1_decay_at_fifty() {
    let (basis, col) = setup(6);
    let spec = ModelSpec::new(Model::Vmb1, col.clone());
    let k = Vector3::new(1.0, 0.0, 0.0);
    let report = tune_constants(&[k], |k| assemble_generator(k, &spec, &basis), &basis, &col, &TuneOptions::default()).unwrap();
    let g = assemble_generator(k, &spec, &basis).unwrap();
    let c = form_constant(&g, &basis, &col);
    let mu = report.lambda_min * c / phi(1.0);
    let x0 = random_admissible(&g, &basis, 7);
    let prop = Propagator::new(g).unwrap();
    let x = prop.apply(50.0, &x0).unwrap();
    assert!(x.norm() <= x0.norm() * pointwise_bound(mu, report.equiv_lo, report.equiv_hi, 1.0, 50.0));
}

#[test]
fn parseval_sum_nonincreasing() {
    let (basis, col) = setup(5);
    let spec = ModelSpec::new(Model::Vmb1, col.clone());
    let coeffs = FunctionalCoefficients::with_kappas(0.1, 0.1, 0.1, 0.1);
    let grid = RadialGrid::log_spaced(1e-2, 10.0, 41).unwrap();
    let times = log_radii(0.1, 1e3, 15).unwrap();
    let mut total = vec![0.0; times.len()];
    for (&r, &w) in grid.radii.iter().zip(&grid.weights) {
        let g = assemble_generator(Vector3::new(r, 0.0, 0.0), &spec, &basis).unwrap();
        let me = assemble_e(&g.k, &coeffs, g.layout, &basis).unwrap();
        let forms: Vec<_> = (0..=2).map(|m| morder_form(&me, &g.k, m)).collect();
        let x0 = standard_datum(Model::Vmb1, r, &basis).unwrap().flatten(g.layout).unwrap();
        let traj = propagate(&Propagator::new(g).unwrap(), &x0, &times).unwrap();
        for (j, x) in traj.states.iter().enumerate() {
            let e: f64 = forms.iter().map(|f| f.eval(x)).sum();
            total[j] += 4.0 * std::f64::consts::PI * w * r * r * e;
        }
    }
    for w in total.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{w:?}");
    }
    assert!(total[total.len() - 1] < total[0]);
}

#[test]
fn duhamel_linearity_and_convolution_bound() {
    let (basis, col) = setup(5);
    let spec = ModelSpec::new(Model::Vmb1, col.clone());
    let g = assemble_generator(Vector3::new(0.7, 0.2, 0.0), &spec, &basis).unwrap();
    let coeffs = FunctionalCoefficients::with_kappas(0.1, 0.1, 0.1, 0.1);
    let me = assemble_e(&g.k, &coeffs, g.layout, &basis).unwrap();
    let md = dissipation_form(&g.k, g.layout, &basis, &col).unwrap();
    let lambda = verify_lyapunov(&g, &me, &md).unwrap();
    let c = form_constant(&g, &basis, &col);
    let ev = hermitian_eigenvalues(&me.matrix);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    let r = g.k.norm();
    let x0 = random_admissible(&g, &basis, 11);
    let prop = Propagator::new(g).unwrap();

    let micro = basis.micro_projection();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let raw = DVector::<f64>::from_fn(basis.dim(), |_, _| rng.gen_range(-1.0..1.0));
    let h: DVector<C<f64>> = (&micro * raw).map(|v| C::new(v, 0.0));
    let hn = h.norm();
    let source = |s: f64| &h * C::new((0.3 * s).cos(), 0.0);
    let times = [0.5, 2.0, 10.0, 40.0];
    let opts = SourceOptions::default();
    let full = propagate_with_source(&prop, &basis, &x0, source, &times, opts).unwrap();
    let free = propagate(&prop, &x0, &times).unwrap();
    let forced = propagate_with_source(&prop, &basis, &DVector::zeros(x0.len()), source, &times, opts).unwrap();
    let mu = lambda * c / phi(r);
    for j in 0..times.len() {
        let sum = &free.states[j] + &forced.states[j];
        assert!((&full.states[j] - sum).norm() < 1e-10);
        // ‖U^{II}(t)‖ ≤ ∫₀ᵗ (hi/lo)^{1/2} e^{-(μ/2hi)φ(t-s)} ‖h‖ ds
        let rate = mu / (2.0 * hi) * phi(r);
        let bound = (hi / lo).sqrt() * hn * (1.0 - (-rate * times[j]).exp()) / rate;
        assert!(forced.states[j].norm() <= bound);
    }
}

#[test]
fn variable_frequency_tuning_feasible() {
    let basis = VelocityBasis::<f64>::new(5).unwrap();
    let col = Arc::new(build_collision(&CollisionKind::RelaxationVariableNu, &basis).unwrap());
    let spec = ModelSpec::new(Model::Vmb1, col.clone());
    let grid = log_grid::<f64>(1e-2, 1e2, 5).unwrap();
    let report = tune_constants(&grid, |k| assemble_generator(k, &spec, &basis), &basis, &col, &TuneOptions::default()).unwrap();
    assert!(report.lambda_min > 0.0);
    assert!(report.equiv_lo >= 0.25 && report.equiv_hi <= 4.0);
}

#[test]
fn external_matrix_reproduces_constant_frequency() {
    let (basis, col) = setup(4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.txt");
    write_matrix_file(&path, &col.matrix).unwrap();
    let ext = Arc::new(build_collision(&CollisionKind::ExternalMatrix(path), &basis).unwrap());
    let k = Vector3::new(0.9, 0.0, 0.4);
    let a = assemble_generator(k, &ModelSpec::new(Model::Vmb1, col.clone()), &basis).unwrap();
    let b = assemble_generator(k, &ModelSpec::new(Model::Vmb1, ext.clone()), &basis).unwrap();
    assert!((&a.a - &b.a).norm() < 1e-14);
    assert!((spectral_gap(&a).unwrap() - spectral_gap(&b).unwrap()).abs() < 1e-10);
}

#[test]
fn single_precision_pipeline() {
    let basis = VelocityBasis::<f32>::new(4).unwrap();
    let col = Arc::new(build_collision(&CollisionKind::RelaxationConstNu { nu0: 1.0 }, &basis).unwrap());
    let spec = ModelSpec::new(Model::Vmb1, col.clone());
    let grid = log_grid::<f32>(1e-1, 1e1, 3).unwrap();
    let report = tune_constants(&grid, |k| assemble_generator(k, &spec, &basis), &basis, &col, &TuneOptions::default()).unwrap();
    assert!(report.lambda_min > 0.0);
    let again = evaluate_constants(&grid, |k| assemble_generator(k, &spec, &basis), &basis, &col, &report.coefficients()).unwrap();
    assert!((again.lambda_min - report.lambda_min).abs() <= 1e-3 * report.lambda_min);
    let g = assemble_generator(Vector3::new(1.0f32, 0.0, 0.0), &spec, &basis).unwrap();
    assert!(spectral_gap(&g).unwrap() > 0.0);
}

#[test]
fn tampered_constants_fail_verification() {
    let (basis, col) = setup(5);
    let spec = ModelSpec::new(Model::Vmb1, col.clone());
    let grid = log_grid::<f64>(1e-1, 1e1, 5).unwrap();
    let bad = FunctionalCoefficients::with_kappas(0.1, 0.1, 0.1, 10.0);
    let report = evaluate_constants(&grid, |k| assemble_generator(k, &spec, &basis), &basis, &col, &bad).unwrap();
    assert!(report.lambda_min == 0.0 || report.equiv_lo < 0.25 || report.equiv_hi > 4.0);
}
