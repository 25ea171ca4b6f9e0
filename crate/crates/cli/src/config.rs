//! Experiment configuration: one JSON file, every field optional.

use std::path::{Path, PathBuf};

use kinedecay::collision::CollisionKind;
use kinedecay::decay::CompareConfig;
use kinedecay::generator::Model;
use kinedecay::lyapunov::{log_radii, TuneOptions};
use kinedecay::{Error, Result};
use nalgebra::Vector3;
use serde::Deserialize;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub models: Vec<String>,
    pub degree_cap: usize,
    pub collision: CollisionConfig,
    pub k_grid: KGrid,
    pub radial: GridSpec,
    pub time: GridSpec,
    pub fit_window: [f64; 2],
    pub tolerance: f64,
    pub tune: TuneConfig,
    /// `[κ₁, κ₂, κ₃, κ₄]` used by `verify` and `moments`; tuned when absent.
    pub kappas: Option<[f64; 4]>,
    pub trajectory: TrajectoryConfig,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: vec!["vmb1".into()],
            degree_cap: 6,
            collision: CollisionConfig::default(),
            k_grid: KGrid::default(),
            radial: GridSpec {
                min: 1e-3,
                max: 30.0,
                count: 400,
                spacing: Spacing::Log,
            },
            time: GridSpec {
                min: 1e2,
                max: 1e5,
                count: 31,
                spacing: Spacing::Log,
            },
            fit_window: [1e2, 1e5],
            tolerance: 0.05,
            tune: TuneConfig::default(),
            kappas: None,
            trajectory: TrajectoryConfig::default(),
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum CollisionConfig {
    Const { nu0: f64 },
    Variable,
    External { path: PathBuf },
}

impl Default for CollisionConfig {
    fn default() -> Self {
        CollisionConfig::Const { nu0: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default = "log_spacing")]
    pub spacing: Spacing,
}

fn log_spacing() -> Spacing {
    Spacing::Log
}

impl GridSpec {
    pub fn points(&self, what: &'static str) -> Result<Vec<f64>> {
        if self.count == 0 || !(self.min > 0.0) || !(self.max >= self.min) {
            return Err(invalid(what, format!("need count ≥ 1 and 0 < min ≤ max, got [{}, {}] × {}", self.min, self.max, self.count)));
        }
        match self.spacing {
            Spacing::Log => log_radii(self.min, self.max, self.count),
            Spacing::Linear if self.count == 1 => Ok(vec![self.min]),
            Spacing::Linear => {
                let h = (self.max - self.min) / (self.count - 1) as f64;
                Ok((0..self.count).map(|i| self.min + h * i as f64).collect())
            }
        }
    }
}

/// Wave vectors for `tune` and `verify`: explicit `points`, or `count`
/// log-spaced magnitudes on `[min, max]` along `e₁`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub points: Option<Vec<[f64; 3]>>,
}

impl Default for KGrid {
    fn default() -> Self {
        Self {
            min: 1e-2,
            max: 1e3,
            count: 16,
            points: None,
        }
    }
}

impl KGrid {
    /// Grid points with `k = 0` removed; the removed count is returned.
    pub fn vectors(&self) -> Result<(Vec<Vector3<f64>>, usize)> {
        let all: Vec<Vector3<f64>> = match &self.points {
            Some(p) => p.iter().map(|v| Vector3::new(v[0], v[1], v[2])).collect(),
            None => log_radii(self.min, self.max, self.count)?
                .into_iter()
                .map(|r| Vector3::new(r, 0.0, 0.0))
                .collect(),
        };
        if all.iter().any(|k| k.iter().any(|c| !c.is_finite())) {
            return Err(invalid("k_grid", "non-finite wave-vector component"));
        }
        let kept: Vec<_> = all.iter().copied().filter(|k| k.norm_squared() > 0.0).collect();
        let skipped = all.len() - kept.len();
        if kept.is_empty() {
            return Err(invalid("k_grid", "no nonzero wave vectors"));
        }
        Ok((kept, skipped))
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    pub lambda_floor: f64,
    pub equiv_floor: f64,
    pub equiv_ceiling: f64,
    pub max_iterations: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        let d = TuneOptions::default();
        Self {
            lambda_floor: d.lambda_floor,
            equiv_floor: d.equiv_floor,
            equiv_ceiling: d.equiv_ceiling,
            max_iterations: d.max_iterations,
        }
    }
}

impl TuneConfig {
    pub fn options(&self) -> TuneOptions {
        TuneOptions {
            lambda_floor: self.lambda_floor,
            equiv_floor: self.equiv_floor,
            equiv_ceiling: self.equiv_ceiling,
            max_iterations: self.max_iterations,
            ..TuneOptions::default()
        }
    }
}

/// Single-mode trajectory used by `verify` residual checks and `moments`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub k: [f64; 3],
    pub t_max: f64,
    pub count: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            k: [1.0, 0.0, 0.0],
            t_max: 50.0,
            count: 51,
        }
    }
}

impl TrajectoryConfig {
    pub fn times(&self) -> Result<Vec<f64>> {
        if self.count < 2 || !(self.t_max > 0.0) {
            return Err(invalid("trajectory", "need count ≥ 2 and t_max > 0"));
        }
        let h = self.t_max / (self.count - 1) as f64;
        Ok((0..self.count).map(|i| h * i as f64).collect())
    }
}

fn invalid(arg: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        arg,
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn models(&self) -> Result<Vec<Model>> {
        if self.models.is_empty() {
            return Err(invalid("models", "no model selected"));
        }
        self.models.iter().map(|m| m.parse()).collect()
    }

    pub fn collision_kind(&self) -> CollisionKind {
        match &self.collision {
            CollisionConfig::Const { nu0 } => CollisionKind::RelaxationConstNu { nu0: *nu0 },
            CollisionConfig::Variable => CollisionKind::RelaxationVariableNu,
            CollisionConfig::External { path } => CollisionKind::ExternalMatrix(path.clone()),
        }
    }

    pub fn compare_config(&self, kernel: bool) -> Result<CompareConfig> {
        if self.radial.spacing != Spacing::Log || self.time.spacing != Spacing::Log {
            return Err(invalid("spacing", "radial and time grids for decay fits must be log-spaced"));
        }
        Ok(CompareConfig {
            models: self.models()?,
            degree_cap: self.degree_cap,
            collision: self.collision_kind(),
            radial_min: self.radial.min,
            radial_max: self.radial.max,
            radial_count: self.radial.count,
            time_min: self.time.min,
            time_max: self.time.max,
            time_count: self.time.count,
            window: self.fit_window,
            m: 0,
            tolerance: self.tolerance,
            kernel,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.models().unwrap(), vec![Model::Vmb1]);
        assert_eq!(cfg.degree_cap, 6);
        assert_eq!(cfg.radial.count, 400);
        assert_eq!(cfg.fit_window, [1e2, 1e5]);
        assert!(matches!(cfg.collision_kind(), CollisionKind::RelaxationConstNu { nu0 } if nu0 == 1.0));
    }

    #[test]
    fn collision_variants_parse() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"collision": {"kind": "external", "path": "l.txt"}}"#).unwrap();
        assert!(matches!(cfg.collision_kind(), CollisionKind::ExternalMatrix(p) if p == Path::new("l.txt")));
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"collision": {"kind": "variable"}}"#).unwrap();
        assert!(matches!(cfg.collision_kind(), CollisionKind::RelaxationVariableNu));
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"collision": {"kind": "bgk"}}"#).is_err());
    }

    #[test]
    fn zero_wavevectors_are_dropped() {
        let g = KGrid {
            points: Some(vec![[0.0; 3], [1.0, 0.0, 0.0]]),
            ..KGrid::default()
        };
        let (kept, skipped) = g.vectors().unwrap();
        assert_eq!((kept.len(), skipped), (1, 1));
        let only_zero = KGrid {
            points: Some(vec![[0.0; 3]]),
            ..KGrid::default()
        };
        assert!(only_zero.vectors().is_err());
    }

    #[test]
    fn grid_specs() {
        let lin = GridSpec {
            min: 1.0,
            max: 3.0,
            count: 3,
            spacing: Spacing::Linear,
        };
        assert_eq!(lin.points("t").unwrap(), vec![1.0, 2.0, 3.0]);
        let bad = GridSpec { min: 0.0, ..lin };
        assert!(bad.points("t").is_err());
        let log = GridSpec {
            min: 1e-2,
            max: 1e2,
            count: 5,
            spacing: Spacing::Log,
        };
        let p = log.points("r").unwrap();
        assert!((p[2] - 1.0).abs() < 1e-12);
        let cfg = ExperimentConfig {
            time: lin,
            ..ExperimentConfig::default()
        };
        assert!(cfg.compare_config(false).is_err());
    }

    #[test]
    fn trajectory_times() {
        let t = TrajectoryConfig::default().times().unwrap();
        assert_eq!(t.len(), 51);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[50], 50.0);
    }
}
