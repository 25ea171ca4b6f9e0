//! Decay kernel, `L^p-L^q` rate calculus, radial `k`-space synthesis of
//! whole-space norms, exponent fitting and the cross-model comparison.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DVector, Vector3};
use num_rational::Ratio;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::collision::{build_collision, CollisionKind, CollisionOperator};
use crate::error::{invalid, Error, Result};
use crate::generator::{assemble_generator, make_admissible, Generator, Model, ModeState, ModelSpec};
use crate::linalg::spectral_abscissa;
use crate::lyapunov::log_radii;
use crate::propagator::Propagator;
use crate::quadrature::simpson_weights;
use crate::scalar::{cr, Real, C};
use crate::velocity_basis::VelocityBasis;

/// Reference kernel `r⁴/(1+r²)³`.
pub fn phi<T: Real>(r: T) -> T {
    let s = T::one() + r * r;
    let r2 = r * r;
    r2 * r2 / (s * s * s)
}

pub type Rational = Ratio<i64>;

/// Lebesgue exponent in `[1, ∞]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exponent {
    Finite(Rational),
    Infinity,
}

impl Exponent {
    pub fn int(n: i64) -> Self {
        Exponent::Finite(Rational::from_integer(n))
    }

    fn reciprocal(self) -> Rational {
        match self {
            Exponent::Finite(p) => p.recip(),
            Exponent::Infinity => Rational::zero(),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => f.write_str("inf"),
        }
    }
}

/// Exponents of the two terms of the decay estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RateExponents {
    /// `3/σ₊ (1/p - 1/q) + m/σ₊`
    pub low_freq: Rational,
    /// `σ/σ₋`
    pub high_freq: Rational,
    /// Extra derivatives on the data of the high-frequency term (beyond `m`).
    pub derivative_loss: i64,
}

/// Decay exponents for `‖∇^m U(t)‖_{Z_q}` from data in `Z_p` (low
/// frequencies) and `∇^{m+loss} U₀ ∈ Z_r` (high frequencies) for a kernel
/// `φ ~ |k|^{σ₊}` at 0 and `|k|^{-σ₋}` at ∞.
///
/// The loss is `σ` when `σ` is an integer and `r = q = 2`, and
/// `⌊σ + 3(1/r - 1/q)⌋ + 1` otherwise.
pub fn theoretical_rate(
    p: Rational,
    q: Exponent,
    r: Rational,
    m: u32,
    sigma: Rational,
    sigma_plus: Rational,
    sigma_minus: Rational,
) -> Result<RateExponents> {
    let one = Rational::one();
    let two = Rational::from_integer(2);
    if p < one || p > two {
        return Err(invalid("p", format!("{p} outside [1, 2]")));
    }
    if r < one || r > two {
        return Err(invalid("r", format!("{r} outside [1, 2]")));
    }
    if let Exponent::Finite(qv) = q {
        if qv < two {
            return Err(invalid("q", format!("{qv} outside [2, ∞]")));
        }
    }
    if sigma < Rational::zero() {
        return Err(invalid("sigma", format!("{sigma} < 0")));
    }
    if sigma_plus <= Rational::zero() || sigma_minus <= Rational::zero() {
        return Err(invalid("sigma_pm", "kernel exponents must be positive"));
    }
    let inv_q = q.reciprocal();
    let m_r = Rational::from_integer(m as i64);
    let three = Rational::from_integer(3);
    let low_freq = three / sigma_plus * (p.recip() - inv_q) + m_r / sigma_plus;
    let high_freq = sigma / sigma_minus;
    let derivative_loss = if sigma.is_integer() && r == two && q == Exponent::Finite(two) {
        sigma.to_integer()
    } else {
        (sigma + three * (r.recip() - inv_q)).floor().to_integer() + 1
    };
    Ok(RateExponents {
        low_freq,
        high_freq,
        derivative_loss,
    })
}

/// `φ ~ |k|^{σ₊}` at 0 and `|k|^{-σ₋}` at ∞ with measured constant `c`.
/// `σ₋ = 0` encodes a kernel that saturates (no regularity loss).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayKernelSpec {
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub c: f64,
}

impl DecayKernelSpec {
    /// Whether the ordering `σ₋ > σ₊ > 0` assumed by the general decay lemma holds.
    pub fn ordered(&self) -> bool {
        self.sigma_minus > self.sigma_plus && self.sigma_plus > 0.0
    }
}

/// Expected kernel exponents and the Lebesgue index of the standard datum.
pub fn model_exponents(model: Model) -> (Rational, Rational, Rational) {
    let int = Rational::from_integer;
    match model {
        Model::Be => (int(2), int(0), int(1)),
        // Ê = -ik â/|k|² behaves like data in Z_{3/2}.
        Model::Vpb1 => (int(2), int(0), Rational::new(3, 2)),
        Model::Vmb1 => (int(4), int(2), int(1)),
        Model::Vmb2Rate => (int(2), int(2), int(1)),
    }
}

/// Expected `L²` decay exponent (negative) of the standard datum.
pub fn expected_decay(model: Model) -> Rational {
    let (sp, _, p) = model_exponents(model);
    let rate = theoretical_rate(p, Exponent::int(2), Rational::from_integer(2), 0, Rational::zero(), sp, Rational::one())
        .expect("valid model exponents");
    -rate.low_freq
}

/// Log-spaced radial grid with Simpson weights for `∫ f(r) dr`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialGrid {
    pub radii: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RadialGrid {
    pub fn log_spaced(min: f64, max: f64, count: usize) -> Result<Self> {
        if count < 2 || !(max > min) {
            return Err(invalid("radial_grid", "need at least two points and max > min"));
        }
        let radii = log_radii(min, max, count)?;
        let h = (max.ln() - min.ln()) / (count - 1) as f64;
        let weights = simpson_weights::<f64>(count, h).into_iter().zip(&radii).map(|(w, r)| w * r).collect();
        Ok(Self { radii, weights })
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
}

/// `(4π ∫ r^{2+2m} |Û(r)|² dr)^{1/2}` from `|Û|²` sampled on the grid.
pub fn norm_over_kspace(abs_sq: &[f64], m: u32, grid: &RadialGrid) -> Result<f64> {
    if grid.is_empty() {
        return Err(invalid("radial_grid", "empty grid"));
    }
    if abs_sq.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: abs_sq.len(),
            context: "norm_over_kspace samples",
        });
    }
    if grid.radii.iter().any(|&r| r <= 0.0) || grid.radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("radial_grid", "radii must be positive and increasing"));
    }
    let total: f64 = abs_sq
        .iter()
        .zip(&grid.radii)
        .zip(&grid.weights)
        .map(|((u, r), w)| w * r.powi(2 + 2 * m as i32) * u)
        .sum();
    Ok((4.0 * std::f64::consts::PI * total.max(0.0)).sqrt())
}

/// Least-squares slope of `ln(value)` against `ln(1+t)` over `t ∈ [lo, hi]`, with its standard error.
pub fn fit_exponent(times: &[f64], values: &[f64], window: [f64; 2]) -> Result<(f64, f64)> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: values.len(),
            context: "fit_exponent samples",
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t >= window[0] && t <= window[1] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid("values", format!("nonpositive value {v} at t = {t}")));
            }
            xs.push((1.0 + t).ln());
            ys.push(v.ln());
        }
    }
    linear_fit(&xs, &ys)
}

/// OLS slope and its standard error; needs at least 8 points.
fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len();
    if n < 8 {
        return Err(invalid("window", format!("{n} samples in the fit window, need at least 8")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(invalid("window", "degenerate abscissae"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    Ok((slope, stderr))
}

/// `-max Re eig(A)` on the Gauss-constraint tangent subspace.
pub fn spectral_gap<T: Real>(generator: &Generator<T>) -> Result<T> {
    let abscissa = if generator.constraint_rows.is_empty() {
        spectral_abscissa(&generator.a)?
    } else {
        let q = generator.tangent_basis();
        spectral_abscissa(&(q.adjoint() * &generator.a * &q))?
    };
    Ok(-abscissa)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelFit {
    /// `min gap(r)/φ(r)` over the grid.
    pub c_measured: f64,
    /// Slope of `ln gap` against `ln r` on `r ≤ 0.1`.
    pub low_exp: f64,
    pub low_stderr: f64,
    /// Slope on `r ≥ 10`.
    pub high_exp: f64,
    pub high_stderr: f64,
    pub radii: Vec<f64>,
    pub gaps: Vec<f64>,
}

/// Fits the spectral gap of `factory(r e₁)` against `r`. The grid must span
/// at least three decades with at least three points in `r ≤ 0.1` and in `r ≥ 10`.
pub fn kernel_fit<T, F>(radii: &[f64], factory: F) -> Result<KernelFit>
where
    T: Real,
    F: Fn(Vector3<T>) -> Result<Generator<T>> + Sync,
{
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(invalid("radial_grid", "radii must be positive"));
    }
    let lo = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = radii.iter().copied().fold(0.0, f64::max);
    let n_low = radii.iter().filter(|&&r| r <= 0.1).count();
    let n_high = radii.iter().filter(|&&r| r >= 10.0).count();
    if (hi / lo).log10() < 3.0 || n_low < 3 || n_high < 3 {
        return Err(invalid(
            "radial_grid",
            format!("kernel fit needs ≥ 3 decades and ≥ 3 points in r ≤ 0.1 and r ≥ 10 (got [{lo}, {hi}], {n_low}/{n_high})"),
        ));
    }
    let gaps: Vec<f64> = radii
        .par_iter()
        .map(|&r| {
            let g = factory(Vector3::new(T::lit(r), T::zero(), T::zero()))?;
            let gap = spectral_gap(&g)?.to_f64_lossy();
            if !(gap > 0.0) {
                return Err(Error::NonDecaying { k_norm: r, abscissa: -gap });
            }
            Ok(gap)
        })
        .collect::<Result<_>>()?;
    let c_measured = radii.iter().zip(&gaps).map(|(&r, g)| g / phi(r)).fold(f64::INFINITY, f64::min);
    let select = |pred: &dyn Fn(f64) -> bool| -> (Vec<f64>, Vec<f64>) {
        radii
            .iter()
            .zip(&gaps)
            .filter(|(r, _)| pred(**r))
            .map(|(r, g)| (r.ln(), g.ln()))
            .unzip()
    };
    let (lx, ly) = select(&|r| r <= 0.1);
    let (hx, hy) = select(&|r| r >= 10.0);
    let (low_exp, low_stderr) = slope_any(&lx, &ly)?;
    let (high_exp, high_stderr) = slope_any(&hx, &hy)?;
    Ok(KernelFit {
        c_measured,
        low_exp,
        low_stderr,
        high_exp,
        high_stderr,
        radii: radii.to_vec(),
        gaps,
    })
}

/// Slope with standard error for at least three points.
fn slope_any(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() >= 8 {
        return linear_fit(xs, ys);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    Ok((slope, (ssr / (n - 2.0).max(1.0) / sxx).sqrt()))
}

/// Amplitude profile of the standard datum: 1 on `r ≤ 1`, `(2/(1+r²))²` beyond.
pub fn datum_profile(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else {
        (2.0 / (1.0 + r * r)).powi(2)
    }
}

/// Standard initial datum at `k = r e₁` (before the radial profile):
/// `û₀ = a₀ e_a + e_c + ψ_(1,1,0)`, `Ê₀ = e₂`, `B̂₀ = e₃`, then projected onto
/// the Gauss constraints. For the one-species Maxwell model `a₀ = r/sqrt(1+r²)`
/// so that the admissible field stays bounded as `r → 0`; otherwise `a₀ = 1`.
pub fn standard_datum<T: Real>(model: Model, r: T, basis: &VelocityBasis<T>) -> Result<ModeState<T>> {
    let k = Vector3::new(r, T::zero(), T::zero());
    let layout = crate::generator::Layout::new(model, basis.dim());
    let mut s = ModeState::zeros(layout, k);
    let a0 = if model == Model::Vmb1 { r / (T::one() + r * r).sqrt() } else { T::one() };
    let micro = basis.index_of([1, 1, 0]).expect("degree ≥ 2");
    for sp in 0..model.species() {
        let off = sp * basis.dim();
        for (i, e) in basis.e_a().iter().enumerate() {
            s.u_hat[off + i] += cr(*e * a0);
        }
        for (i, e) in basis.e_c().iter().enumerate() {
            s.u_hat[off + i] += cr(*e);
        }
        s.u_hat[off + micro] += cr(T::one());
    }
    if model.carries_fields() {
        let z = cr(T::zero());
        s.e_hat = Some(Vector3::new(z, cr(T::one()), z));
        s.b_hat = Some(Vector3::new(z, z, cr(T::one())));
    }
    make_admissible(&s, basis)
}

/// `|Û|² = ‖û‖² + |Ê|² + |B̂|²` (the Poisson field reconstructed from `â`).
pub fn abs_sq<T: Real>(x: &DVector<C<T>>, generator: &Generator<T>, basis: &VelocityBasis<T>) -> Result<f64> {
    let s = ModeState::unflatten(x, generator.layout, generator.k, basis)?;
    let mut total = s.u_hat.norm_squared();
    if let Some(e) = s.e_hat {
        total += e.norm_squared();
    }
    if let Some(b) = s.b_hat {
        total += b.norm_squared();
    }
    Ok(total.to_f64_lossy())
}

/// Configuration of [`compare_models`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareConfig {
    pub models: Vec<Model>,
    pub degree_cap: usize,
    #[serde(skip)]
    pub collision: CollisionKind,
    pub radial_min: f64,
    pub radial_max: f64,
    pub radial_count: usize,
    pub time_min: f64,
    pub time_max: f64,
    pub time_count: usize,
    pub window: [f64; 2],
    /// Derivative order of the synthesized norm.
    pub m: u32,
    /// Allowed deviation of the fitted exponent from the expected one.
    pub tolerance: f64,
    /// Also fit the spectral kernel (needs the grid to reach `r ≤ 0.1` and `r ≥ 10`).
    pub kernel: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            models: Model::ALL.to_vec(),
            degree_cap: 6,
            collision: CollisionKind::RelaxationConstNu { nu0: 1.0 },
            radial_min: 1e-3,
            radial_max: 30.0,
            radial_count: 400,
            time_min: 1e2,
            time_max: 1e5,
            time_count: 31,
            window: [1e2, 1e5],
            m: 0,
            tolerance: 0.05,
            kernel: true,
        }
    }
}

/// One row of the model comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub model: Model,
    /// Energy functional the model's decay is stated for.
    pub functional: &'static str,
    pub fitted_rate: f64,
    pub stderr: f64,
    pub theoretical_rate: f64,
    pub theoretical_exact: String,
    pub pass: bool,
    pub tolerance: f64,
    pub kernel: Option<KernelFit>,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
}

pub fn functional_id(model: Model) -> &'static str {
    match model {
        Model::Be => "|u|^2",
        Model::Vpb1 => "|u|^2+|a|^2/|k|^2",
        Model::Vmb1 => "|u|^2+|[E,B]|^2",
        Model::Vmb2Rate => "|u+|^2+|u-|^2+|[E,B]|^2",
    }
}

/// Fits the whole-space `L²` decay of the standard datum for every model.
pub fn compare_models(config: &CompareConfig) -> Result<Vec<DecayReport>> {
    let basis = VelocityBasis::<f64>::new(config.degree_cap)?;
    let collision = Arc::new(build_collision(&config.collision, &basis)?);
    let grid = RadialGrid::log_spaced(config.radial_min, config.radial_max, config.radial_count)?;
    let times = log_radii(config.time_min, config.time_max, config.time_count)?;
    config
        .models
        .iter()
        .map(|&model| decay_report(model, config, &basis, &collision, &grid, &times))
        .collect()
}

fn decay_report(
    model: Model,
    config: &CompareConfig,
    basis: &VelocityBasis<f64>,
    collision: &Arc<CollisionOperator<f64>>,
    grid: &RadialGrid,
    times: &[f64],
) -> Result<DecayReport> {
    let spec = ModelSpec::new(model, collision.clone());
    let per_mode: Vec<Vec<f64>> = grid
        .radii
        .par_iter()
        .map(|&r| mode_history(model, r, &spec, basis, times))
        .collect::<Result<_>>()?;
    let norms: Vec<f64> = (0..times.len())
        .map(|j| {
            let samples: Vec<f64> = per_mode.iter().map(|h| h[j]).collect();
            norm_over_kspace(&samples, config.m, grid)
        })
        .collect::<Result<_>>()?;
    let (fitted_rate, stderr) = fit_exponent(times, &norms, config.window)?;
    let expected = expected_decay(model) - Rational::new(config.m as i64, 1) / model_exponents(model).0;
    let theoretical_rate = *expected.numer() as f64 / *expected.denom() as f64;
    let kernel = if config.kernel {
        Some(kernel_fit(&grid.radii, |k| assemble_generator(k, &spec, basis))?)
    } else {
        None
    };
    Ok(DecayReport {
        model,
        functional: functional_id(model),
        fitted_rate,
        stderr,
        theoretical_rate,
        theoretical_exact: expected.to_string(),
        pass: (fitted_rate - theoretical_rate).abs() <= config.tolerance,
        tolerance: config.tolerance,
        kernel,
        times: times.to_vec(),
        norms,
    })
}

/// `|Û(t, r)|²` of the profiled standard datum at each sample time.
fn mode_history(model: Model, r: f64, spec: &ModelSpec<f64>, basis: &VelocityBasis<f64>, times: &[f64]) -> Result<Vec<f64>> {
    let g = assemble_generator(Vector3::new(r, 0.0, 0.0), spec, basis)?;
    let datum = standard_datum(model, r, basis)?;
    let x0 = datum.flatten(g.layout)? * cr(datum_profile(r));
    let prop = Propagator::new(g)?;
    let g = prop.generator();
    times
        .iter()
        .map(|&t| abs_sq(&prop.apply(t, &x0)?, g, basis))
        .collect()
}

/// Bound on `|Û(t,k)|/|Û(0,k)|` when `E' ≤ -μ φ(|k|) ‖Û‖²` and
/// `lo ‖Û‖² ≤ E ≤ hi ‖Û‖²`: `(hi/lo)^{1/2} exp(-(μ/(2 hi)) φ t)`.
/// With `M_D ⪰ c φ M_base` and a verified `λ`, `μ = λ c`.
pub fn pointwise_bound(mu: f64, equiv_lo: f64, equiv_hi: f64, r: f64, t: f64) -> f64 {
    (equiv_hi / equiv_lo).sqrt() * (-(mu / (2.0 * equiv_hi)) * phi(r) * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(0.0_f64), 0.0);
        assert_eq!(phi(1.0_f64), 0.125);
        assert!((phi(10.0_f64) / 1e-2 - 1.0).abs() < 0.1);
    }

    #[test]
    fn rate_examples() {
        let two = Exponent::int(2);
        let r = theoretical_rate(q(1, 1), two, q(2, 1), 0, q(0, 1), q(4, 1), q(2, 1)).unwrap();
        assert_eq!(r.low_freq, q(3, 8));
        let r = theoretical_rate(q(1, 1), two, q(2, 1), 0, q(0, 1), q(2, 1), q(2, 1)).unwrap();
        assert_eq!(r.low_freq, q(3, 4));
        let r = theoretical_rate(q(1, 1), two, q(2, 1), 0, q(2, 1), q(4, 1), q(2, 1)).unwrap();
        assert_eq!(r.derivative_loss, 2);
        assert_eq!(r.high_freq, q(1, 1));
        let r = theoretical_rate(q(1, 1), Exponent::Infinity, q(1, 1), 0, q(1, 2), q(4, 1), q(2, 1)).unwrap();
        assert_eq!(r.low_freq, q(3, 4));
        assert_eq!(r.derivative_loss, 4);
    }

    #[test]
    fn rate_rejects_out_of_range() {
        let two = Exponent::int(2);
        assert!(theoretical_rate(q(3, 1), two, q(2, 1), 0, q(0, 1), q(4, 1), q(2, 1)).is_err());
        assert!(theoretical_rate(q(1, 1), Exponent::int(1), q(2, 1), 0, q(0, 1), q(4, 1), q(2, 1)).is_err());
        assert!(theoretical_rate(q(1, 1), two, q(1, 2), 0, q(0, 1), q(4, 1), q(2, 1)).is_err());
        assert!(theoretical_rate(q(1, 1), two, q(2, 1), 0, q(-1, 1), q(4, 1), q(2, 1)).is_err());
        assert!(theoretical_rate(q(1, 1), two, q(2, 1), 0, q(0, 1), q(0, 1), q(2, 1)).is_err());
    }

    #[test]
    fn model_decay_exponents() {
        assert_eq!(expected_decay(Model::Be), q(-3, 4));
        assert_eq!(expected_decay(Model::Vpb1), q(-1, 4));
        assert_eq!(expected_decay(Model::Vmb1), q(-3, 8));
        assert_eq!(expected_decay(Model::Vmb2Rate), q(-3, 4));
    }

    #[test]
    fn kernel_spec_ordering() {
        assert!(DecayKernelSpec { sigma_plus: 4.0, sigma_minus: 2.0, c: 1.0 }.ordered() == false);
        assert!(DecayKernelSpec { sigma_plus: 1.0, sigma_minus: 2.0, c: 1.0 }.ordered());
    }

    #[test]
    fn synthesis_examples() {
        let grid = RadialGrid::log_spaced(0.5, 2.0, 401).unwrap();
        let zeros = vec![0.0; grid.len()];
        assert_eq!(norm_over_kspace(&zeros, 0, &grid).unwrap(), 0.0);
        let ones = vec![1.0; grid.len()];
        let n = norm_over_kspace(&ones, 0, &grid).unwrap();
        let exact = 4.0 * std::f64::consts::PI * (8.0 - 0.125) / 3.0;
        assert!((n * n - exact).abs() < 1e-6 * exact);
        let mut shell = vec![0.0; grid.len()];
        shell[100] = 3.0;
        let n = norm_over_kspace(&shell, 0, &grid).unwrap();
        let expect = 4.0 * std::f64::consts::PI * grid.weights[100] * grid.radii[100].powi(2) * 3.0;
        assert!((n * n - expect).abs() < 1e-12 * expect);
        let empty = RadialGrid { radii: vec![], weights: vec![] };
        assert!(norm_over_kspace(&[], 0, &empty).is_err());
    }

    #[test]
    fn fit_examples() {
        let times: Vec<f64> = log_radii(1e2, 1e5, 31).unwrap();
        let v: Vec<f64> = times.iter().map(|t| (1.0 + t).powf(-0.375)).collect();
        let (s, e) = fit_exponent(&times, &v, [1e2, 1e5]).unwrap();
        assert!((s + 0.375).abs() < 1e-12 && e < 1e-12);
        let v: Vec<f64> = times.iter().map(|t| 5.0 * (1.0 + t).powf(-0.75)).collect();
        let (s, _) = fit_exponent(&times, &v, [1e2, 1e5]).unwrap();
        assert!((s + 0.75).abs() < 1e-12);
        let mut bad = v.clone();
        bad[3] = 0.0;
        assert!(fit_exponent(&times, &bad, [1e2, 1e5]).is_err());
        assert!(fit_exponent(&times[..5], &v[..5], [1e2, 1e5]).is_err());
    }

    proptest! {
        #[test]
        fn noisy_fit_within_tolerance(seed in 0u64..10_000, truth in 0.1f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let times: Vec<f64> = log_radii(1e2, 1e5, 31).unwrap();
            let v: Vec<f64> = times.iter().map(|t| (1.0 + t).powf(-truth) * (1.0 + 0.01 * rng.gen_range(-1.0..1.0))).collect();
            let (s, e) = fit_exponent(&times, &v, [1e2, 1e5]).unwrap();
            prop_assert!((s + truth).abs() <= 0.02);
            prop_assert!(e >= 0.0);
        }

        #[test]
        fn rate_homogeneous_in_m(p_num in 2i64..=4, m in 0u32..5, sp in 1i64..6) {
            let p = q(p_num, 2);
            let a = theoretical_rate(p, Exponent::int(2), q(2, 1), m, q(1, 1), q(sp, 1), q(2, 1)).unwrap();
            let b = theoretical_rate(p, Exponent::int(2), q(2, 1), m + 1, q(1, 1), q(sp, 1), q(2, 1)).unwrap();
            prop_assert_eq!(b.low_freq - a.low_freq, q(1, sp));
        }
    }
}
