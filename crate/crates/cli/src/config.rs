//! JSON model configuration.
//!
//! ```json
//! { "baseline": "weibull:2", "theta123": [1, 1, 1] }
//! { "baseline": "exponential", "theta": 3, "marginals": ["lfr:1.5", "lfr:1.5"],
//!   "grid": { "knots": 16, "r_min": 0.05, "r_max": 8, "wedge_margin": 0.02 },
//!   "tolerance": { "rel": 1e-6 } }
//! ```
//!
//! Relative paths inside specs resolve against the config file's directory.

use std::path::Path;

use serde::Deserialize;

use semibiv::validity::default_t_knots;
use semibiv::{
    BaselineModel, BivariateSurvival, GeneralBivariateModel, GridSpec, MarginalModel, PHBivariateModel,
    Tolerances,
};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    baseline: String,
    theta: Option<f64>,
    marginals: Option<[String; 2]>,
    theta123: Option<[f64; 3]>,
    grid: Option<RawGrid>,
    tolerance: Option<RawTolerance>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    knots: Option<usize>,
    r_min: Option<f64>,
    r_max: Option<f64>,
    wedge_margin: Option<f64>,
    /// Explicit knot positions; overrides the log-spaced layout.
    points: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerance {
    abs: Option<f64>,
    rel: Option<f64>,
    rectangle: Option<f64>,
    diagonal: Option<f64>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    /// One value sets `theta`; three comma-separated values set `theta123`.
    pub theta: Option<String>,
    pub grid_knots: Option<usize>,
    pub tol: Option<f64>,
}

pub enum Model {
    Ph(PHBivariateModel),
    General(GeneralBivariateModel),
}

impl Model {
    pub fn survival_model(&self) -> &dyn BivariateSurvival {
        match self {
            Model::Ph(m) => m,
            Model::General(m) => m,
        }
    }

    pub fn general(&self) -> GeneralBivariateModel {
        match self {
            Model::Ph(m) => m.to_general(),
            Model::General(m) => m.clone(),
        }
    }
}

pub struct ModelConfig {
    pub model: Model,
    pub grid: GridSpec,
    pub t_knots: Vec<f64>,
    pub tolerances: Tolerances,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_theta(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| usage(format!("--theta: {e}"))))
        .collect()
}

impl ModelConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let raw: RawConfig = serde_json::from_str(&text)
            .map_err(|e| usage(format!("malformed config {}: {e}", path.display())))?;
        let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_raw(raw, base_dir, overrides).map_err(|e| match e {
            CliError::Io(_) | CliError::Usage(_) => e,
            other => usage(format!("bad config {}: {other}", path.display())),
        })
    }

    fn from_raw(mut raw: RawConfig, base_dir: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        if let Some(t) = &overrides.theta {
            match parse_theta(t)?.as_slice() {
                [v] => raw.theta = Some(*v),
                [a, b, c] => raw.theta123 = Some([*a, *b, *c]),
                _ => return Err(usage("--theta takes one value or three comma-separated values")),
            }
        }
        let baseline = BaselineModel::parse_spec(&raw.baseline, base_dir)?;
        let model = match (&raw.marginals, raw.theta123) {
            (Some(_), Some(_)) => return Err(usage("config has both `marginals` and `theta123`")),
            (None, None) => return Err(usage("config needs `marginals` (with `theta`) or `theta123`")),
            (None, Some([t1, t2, t3])) => {
                if raw.theta.is_some() {
                    return Err(usage("`theta` goes with `marginals`, not `theta123`"));
                }
                Model::Ph(PHBivariateModel::new(baseline.clone(), t1, t2, t3)?)
            }
            (Some([m1, m2]), None) => {
                let theta = raw.theta.ok_or_else(|| usage("`marginals` needs `theta`"))?;
                let m1 = MarginalModel::parse_spec(m1, &baseline, base_dir)?;
                let m2 = MarginalModel::parse_spec(m2, &baseline, base_dir)?;
                Model::General(GeneralBivariateModel::new(baseline.clone(), m1, m2, theta)?)
            }
        };
        let grid = build_grid(&baseline, raw.grid.as_ref(), overrides.grid_knots)?;
        let mut tolerances = Tolerances::default();
        if let Some(t) = &raw.tolerance {
            tolerances.abs = t.abs.unwrap_or(tolerances.abs);
            tolerances.rel = t.rel.unwrap_or(tolerances.rel);
            tolerances.rectangle = t.rectangle.unwrap_or(tolerances.rectangle);
            tolerances.diagonal = t.diagonal.unwrap_or(tolerances.diagonal);
        }
        if let Some(rel) = overrides.tol {
            tolerances.rel = rel;
        }
        let t = [tolerances.abs, tolerances.rel, tolerances.rectangle, tolerances.diagonal];
        if t.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(usage("tolerances must be finite and >= 0"));
        }
        Ok(Self {
            t_knots: default_t_knots(&baseline)?,
            model,
            grid,
            tolerances,
        })
    }
}

fn build_grid(baseline: &BaselineModel, raw: Option<&RawGrid>, knots: Option<usize>) -> Result<GridSpec, CliError> {
    let margin = raw.and_then(|g| g.wedge_margin).unwrap_or(0.02);
    if let (Some(points), None) = (raw.and_then(|g| g.points.clone()), knots) {
        return Ok(GridSpec::from_knots(points, margin)?);
    }
    let count = knots.or(raw.and_then(|g| g.knots)).unwrap_or(16);
    let r_min = raw.and_then(|g| g.r_min).unwrap_or(0.05);
    let r_max = raw.and_then(|g| g.r_max).unwrap_or(8.0);
    Ok(GridSpec::log_spaced(baseline, count, r_min, r_max, margin)?)
}
