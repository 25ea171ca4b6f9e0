//! Subcommand bodies. Each writes its report files and returns a one-line summary.

use std::sync::Arc;

use kinedecay::collision::{build_collision, CollisionOperator};
use kinedecay::decay::{compare_models, kernel_fit, model_exponents, phi, DecayReport};
use kinedecay::generator::{assemble_generator, make_admissible, Generator, Model, ModeState, ModelSpec};
use kinedecay::lyapunov::{
    assemble_e, dissipation_form, evaluate_constants, natural_form, tune_constants, FunctionalCoefficients,
    TuneOptions, TuningReport,
};
use kinedecay::propagator::{diagnostics, moment_residual_series, propagate, Propagator};
use kinedecay::velocity_basis::VelocityBasis;
use kinedecay::C;
use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::{csv, float, OutDir};
use crate::CliError;

/// Relative tolerances of the trajectory residual checks in `verify`.
pub const GAUSS_TOL: f64 = 1e-10;
pub const MOMENT_TOL: f64 = 1e-8;

pub fn warn(message: &str) {
    eprintln!("{}", crate::output::to_json(&serde_json::json!({ "warning": message })));
}

struct Setup {
    basis: VelocityBasis<f64>,
    collision: Arc<CollisionOperator<f64>>,
    models: Vec<Model>,
    out: OutDir,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let models = cfg.models()?;
        let basis = VelocityBasis::new(cfg.degree_cap)?;
        let collision = Arc::new(build_collision(&cfg.collision_kind(), &basis)?);
        let out = OutDir::create(&cfg.out)?;
        Ok(Self {
            basis,
            collision,
            models,
            out,
        })
    }

    fn spec(&self, model: Model) -> ModelSpec<f64> {
        ModelSpec::new(model, self.collision.clone())
    }

    fn one_species(&self, command: &str) -> Result<(), CliError> {
        if let Some(m) = self.models.iter().find(|m| m.species() != 1) {
            return Err(CliError::Core(kinedecay::Error::InvalidArgument {
                arg: "models",
                reason: format!("`{command}` needs one-species models; `{m}` is rate-only"),
            }));
        }
        Ok(())
    }
}

fn grid(cfg: &ExperimentConfig) -> Result<Vec<Vector3<f64>>, CliError> {
    let (grid, skipped) = cfg.k_grid.vectors()?;
    if skipped > 0 {
        warn(&format!("skipped {skipped} grid point(s) with k = 0 (undamped plasma oscillation; nothing to verify)"));
    }
    Ok(grid)
}

#[derive(Serialize)]
struct TuneFile<'a> {
    model: Model,
    degree_cap: usize,
    options: &'a TuneOptions,
    #[serde(flatten)]
    report: &'a TuningReport,
}

fn tune_model(setup: &Setup, model: Model, grid: &[Vector3<f64>], opts: &TuneOptions) -> Result<TuningReport, CliError> {
    let spec = setup.spec(model);
    Ok(tune_constants(
        grid,
        |k| assemble_generator(k, &spec, &setup.basis),
        &setup.basis,
        &setup.collision,
        opts,
    )?)
}

pub fn tune(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let setup = Setup::new(cfg)?;
    setup.one_species("tune")?;
    let grid = grid(cfg)?;
    let opts = cfg.tune.options();
    let mut lines = Vec::new();
    for &model in &setup.models {
        let report = tune_model(&setup, model, &grid, &opts)?;
        setup.out.write_json(
            &format!("tune_{model}.json"),
            &TuneFile {
                model,
                degree_cap: cfg.degree_cap,
                options: &opts,
                report: &report,
            },
        )?;
        lines.push(format!(
            "{model}: kappa = ({}, {}, {}, {}), lambda_min = {}, equivalence [{}, {}]",
            float(report.kappa1),
            float(report.kappa2),
            float(report.kappa3),
            float(report.kappa4),
            float(report.lambda_min),
            float(report.equiv_lo),
            float(report.equiv_hi)
        ));
    }
    Ok(lines.join("\n"))
}

#[derive(Serialize)]
struct VerifyPerK {
    k: [f64; 3],
    k_norm: f64,
    lambda: f64,
    equiv_lo: f64,
    equiv_hi: f64,
    lambda_over_phi: f64,
    source_coupling: f64,
    gauss_max: f64,
    moment_max: f64,
}

#[derive(Serialize)]
struct VerifyFile {
    model: Model,
    degree_cap: usize,
    coefficients: FunctionalCoefficients,
    lambda_min: f64,
    equiv_lo: f64,
    equiv_hi: f64,
    gauss_tolerance: f64,
    moment_tolerance: f64,
    passed: bool,
    per_k: Vec<VerifyPerK>,
}

/// Unit-norm admissible state with seeded uniform components.
fn random_state(g: &Generator<f64>, basis: &VelocityBasis<f64>, seed: u64) -> Result<DVector<C<f64>>, CliError> {
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
    let x = make_admissible(&s, basis)?.flatten(g.layout)?;
    let n = x.norm();
    Ok(x / C::new(n, 0.0))
}

/// Largest Gauss and moment residuals along a seeded trajectory.
fn residuals(setup: &Setup, g: Generator<f64>, times: &[f64], seed: u64) -> Result<(f64, f64), CliError> {
    let x0 = random_state(&g, &setup.basis, seed)?;
    let nat = natural_form(&g.k, g.layout, &setup.basis)?;
    let prop = Propagator::new(g)?;
    let traj = propagate(&prop, &x0, times)?;
    let diag = diagnostics(&traj, prop.generator(), &setup.basis, &nat, &nat)?;
    let gauss = diag.iter().map(|d| d.gauss_e.max(d.gauss_b)).fold(0.0, f64::max);
    let moments = moment_residual_series(&prop, &setup.basis, &setup.collision, &traj, &x0)?
        .iter()
        .flat_map(|r| r.iter().copied())
        .fold(0.0, f64::max);
    Ok((gauss, moments))
}

pub fn verify(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let setup = Setup::new(cfg)?;
    setup.one_species("verify")?;
    let grid = grid(cfg)?;
    let opts = cfg.tune.options();
    let times = cfg.trajectory.times()?;
    let mut lines = Vec::new();
    let mut offending: Vec<[f64; 3]> = Vec::new();
    for &model in &setup.models {
        let spec = setup.spec(model);
        let coeffs = match cfg.kappas {
            Some([k1, k2, k3, k4]) => FunctionalCoefficients::with_kappas(k1, k2, k3, k4),
            None => tune_model(&setup, model, &grid, &opts)?.coefficients(),
        };
        let report = evaluate_constants(
            &grid,
            |k| assemble_generator(k, &spec, &setup.basis),
            &setup.basis,
            &setup.collision,
            &coeffs,
        )?;
        let res: Vec<(f64, f64)> = grid
            .par_iter()
            .enumerate()
            .map(|(i, k)| residuals(&setup, assemble_generator(*k, &spec, &setup.basis)?, &times, cfg.seed + i as u64))
            .collect::<Result<_, _>>()?;
        let per_k: Vec<VerifyPerK> = report
            .per_k
            .iter()
            .zip(&res)
            .map(|(p, &(gauss_max, moment_max))| VerifyPerK {
                k: p.k,
                k_norm: p.k_norm,
                lambda: p.lambda,
                equiv_lo: p.equiv_lo,
                equiv_hi: p.equiv_hi,
                lambda_over_phi: p.lambda_over_phi,
                source_coupling: p.source_coupling,
                gauss_max,
                moment_max,
            })
            .collect();
        let bad: Vec<[f64; 3]> = per_k
            .iter()
            .filter(|p| {
                !(p.lambda > 0.0)
                    || p.equiv_lo < opts.equiv_floor
                    || p.equiv_hi > opts.equiv_ceiling
                    || p.gauss_max > GAUSS_TOL
                    || p.moment_max > MOMENT_TOL
            })
            .map(|p| p.k)
            .collect();
        let passed = bad.is_empty();
        offending.extend(&bad);
        setup.out.write_json(
            &format!("verify_{model}.json"),
            &VerifyFile {
                model,
                degree_cap: cfg.degree_cap,
                coefficients: report.coefficients(),
                lambda_min: report.lambda_min,
                equiv_lo: report.equiv_lo,
                equiv_hi: report.equiv_hi,
                gauss_tolerance: GAUSS_TOL,
                moment_tolerance: MOMENT_TOL,
                passed,
                per_k,
            },
        )?;
        lines.push(format!(
            "{model}: lambda_min = {}, equivalence [{}, {}], {} of {} wave vectors failed",
            float(report.lambda_min),
            float(report.equiv_lo),
            float(report.equiv_hi),
            bad.len(),
            grid.len()
        ));
    }
    if offending.is_empty() {
        Ok(lines.join("\n"))
    } else {
        Err(CliError::Verification {
            message: lines.join("; "),
            offending_k: offending,
        })
    }
}

#[derive(Serialize)]
struct SpectrumSummary {
    model: Model,
    c_measured: f64,
    low_exp: f64,
    low_stderr: f64,
    high_exp: f64,
    high_stderr: f64,
    expected_low: f64,
    expected_high: f64,
}

fn rational(r: kinedecay::decay::Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn spectrum(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let setup = Setup::new(cfg)?;
    let radii = cfg.radial.points("radial")?;
    let mut summaries = Vec::new();
    for &model in &setup.models {
        let spec = setup.spec(model);
        let fit = kernel_fit(&radii, |k| assemble_generator(k, &spec, &setup.basis))?;
        let rows = fit.radii.iter().zip(&fit.gaps).map(|(&r, &g)| {
            let p = phi(r);
            vec![float(r), float(g), float(p), float(g / p)]
        });
        setup
            .out
            .write(&format!("spectrum_{model}.csv"), &csv(&["r", "gap", "phi", "gap_over_phi"], rows))?;
        let (sp, sm, _) = model_exponents(model);
        summaries.push(SpectrumSummary {
            model,
            c_measured: fit.c_measured,
            low_exp: fit.low_exp,
            low_stderr: fit.low_stderr,
            high_exp: fit.high_exp,
            high_stderr: fit.high_stderr,
            expected_low: rational(sp),
            expected_high: -rational(sm),
        });
    }
    setup.out.write_json("spectrum.json", &summaries)?;
    Ok(summaries
        .iter()
        .map(|s| {
            format!(
                "{}: c = {}, low exponent {} (expect {}), high exponent {} (expect {})",
                s.model,
                float(s.c_measured),
                float(s.low_exp),
                s.expected_low,
                float(s.high_exp),
                s.expected_high
            )
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

fn rate_lines(reports: &[DecayReport]) -> String {
    reports
        .iter()
        .map(|r| {
            format!(
                "{}: fitted {} ± {}, expected {} ({}), {}",
                r.model,
                float(r.fitted_rate),
                float(r.stderr),
                r.theoretical_exact,
                float(r.theoretical_rate),
                if r.pass { "pass" } else { "FAIL" }
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn rate_check(reports: &[DecayReport], summary: String) -> Result<String, CliError> {
    let failed: Vec<String> = reports.iter().filter(|r| !r.pass).map(|r| r.model.to_string()).collect();
    if failed.is_empty() {
        Ok(summary)
    } else {
        Err(CliError::RateMismatch { models: failed, message: summary })
    }
}

pub fn decay(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let setup = Setup::new(cfg)?;
    let reports = compare_models(&cfg.compare_config(false)?)?;
    for r in &reports {
        let rows = r.times.iter().zip(&r.norms).map(|(&t, &n)| vec![float(t), float(n)]);
        setup.out.write(&format!("decay_{}.csv", r.model), &csv(&["time", "norm"], rows))?;
    }
    setup.out.write_json("decay.json", &reports)?;
    rate_check(&reports, rate_lines(&reports))
}

pub fn compare(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let setup = Setup::new(cfg)?;
    let radii = cfg.radial.points("radial")?;
    let kernel = radii.iter().filter(|&&r| r <= 0.1).count() >= 3
        && radii.iter().filter(|&&r| r >= 10.0).count() >= 3
        && cfg.radial.max / cfg.radial.min >= 1e3;
    if !kernel {
        warn("radial grid does not reach r ≤ 0.1 and r ≥ 10 over three decades; kernel columns left empty");
    }
    let reports = compare_models(&cfg.compare_config(kernel)?)?;
    let header = [
        "model",
        "functional",
        "fitted_rate",
        "stderr",
        "theoretical_rate",
        "theoretical_exact",
        "pass",
        "kernel_low_exp",
        "kernel_high_exp",
        "kernel_c",
    ];
    let rows = reports.iter().map(|r| {
        let k = |f: fn(&kinedecay::decay::KernelFit) -> f64| r.kernel.as_ref().map(|x| float(f(x))).unwrap_or_default();
        vec![
            r.model.to_string(),
            r.functional.to_string(),
            float(r.fitted_rate),
            float(r.stderr),
            float(r.theoretical_rate),
            r.theoretical_exact.clone(),
            r.pass.to_string(),
            k(|x| x.low_exp),
            k(|x| x.high_exp),
            k(|x| x.c_measured),
        ]
    });
    setup.out.write("compare.csv", &csv(&header, rows))?;
    setup.out.write_json("compare.json", &reports)?;
    rate_check(&reports, rate_lines(&reports))
}

pub fn moments(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let setup = Setup::new(cfg)?;
    let times = cfg.trajectory.times()?;
    let [kx, ky, kz] = cfg.trajectory.k;
    let k = Vector3::new(kx, ky, kz);
    let [k1, k2, k3, k4] = cfg.kappas.unwrap_or([0.1; 4]);
    let coeffs = FunctionalCoefficients::with_kappas(k1, k2, k3, k4);
    let mut lines = Vec::new();
    for &model in &setup.models {
        let g = assemble_generator(k, &setup.spec(model), &setup.basis)?;
        let one_species = model.species() == 1;
        let me = if one_species {
            assemble_e(&k, &coeffs, g.layout, &setup.basis)?
        } else {
            natural_form(&k, g.layout, &setup.basis)?
        };
        let md = dissipation_form(&k, g.layout, &setup.basis, &setup.collision)?;
        let x0 = random_state(&g, &setup.basis, cfg.seed)?;
        let prop = Propagator::new(g)?;
        let traj = propagate(&prop, &x0, &times)?;
        let diag = diagnostics(&traj, prop.generator(), &setup.basis, &me, &md)?;
        let rows = diag.iter().map(|d| {
            [d.time, d.energy, d.dissipation, d.gauss_e, d.gauss_b, d.norm_u, d.norm_e, d.norm_b]
                .into_iter()
                .map(float)
                .collect()
        });
        setup.out.write(
            &format!("trajectory_{model}.csv"),
            &csv(&["time", "E", "D", "gaussE", "gaussB", "norm_u", "norm_E", "norm_B"], rows),
        )?;
        if !one_species {
            warn(&format!("moment equations are one-species; no moments file for {model}"));
            lines.push(format!("{model}: trajectory written"));
            continue;
        }
        let res = moment_residual_series(&prop, &setup.basis, &setup.collision, &traj, &x0)?;
        let worst = res.iter().flat_map(|r| r.iter().copied()).fold(0.0, f64::max);
        let rows = times.iter().zip(&res).map(|(&t, r)| {
            let mut row = vec![float(t)];
            row.extend(r.iter().map(|&v| float(v)));
            row
        });
        setup.out.write(
            &format!("moments_{model}.csv"),
            &csv(&["time", "mass", "momentum", "energy", "theta", "lambda"], rows),
        )?;
        lines.push(format!("{model}: max moment residual {}", float(worst)));
    }
    Ok(lines.join("\n"))
}
