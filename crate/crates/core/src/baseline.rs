//! Baseline survival families and the semigroup they induce on the support.
//!
//! Every baseline is handled through its cumulative hazard `R₀ = -ln F̄₀`.
//! The operators
//!
//! ```text
//! x ⊕ t = R₀⁻¹(R₀(x) + R₀(t))      x ⊖ t = R₀⁻¹(R₀(x) - R₀(t))
//! ```
//!
//! reduce to addition for the exponential baseline, to the power sum
//! `(x^α + t^α)^(1/α)` for Weibull and to multiplication for Pareto. Survival
//! products are never formed directly, so large arguments do not underflow.

use std::fmt;
use std::path::Path;

use crate::error::{check_finite, Error, Result};
use crate::hazard_curve::HazardCurve;
use crate::numeric;

#[derive(Debug, Clone)]
pub enum BaselineFamily {
    /// `F̄₀(x) = e^{-x}` on `x >= 0`.
    Exponential,
    /// `F̄₀(x) = e^{-x^shape}` on `x >= 0`.
    Weibull { shape: f64 },
    /// `F̄₀(x) = 1/x` on `x >= 1`.
    Pareto,
    /// Hazard supplied by the caller; `R₀` by quadrature.
    CustomHazard(HazardCurve),
}

/// Baseline survival `F̄₀` with hazard, cumulative hazard and inverse.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    family: BaselineFamily,
}

impl fmt::Display for BaselineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            BaselineFamily::Exponential => write!(f, "exponential"),
            BaselineFamily::Weibull { shape } => write!(f, "weibull:{shape}"),
            BaselineFamily::Pareto => write!(f, "pareto"),
            BaselineFamily::CustomHazard(c) => write!(f, "custom({})", c.label()),
        }
    }
}

impl BaselineModel {
    pub fn exponential() -> Self {
        Self {
            family: BaselineFamily::Exponential,
        }
    }

    pub fn weibull(shape: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::Model(format!("Weibull shape must be > 0, got {shape}")));
        }
        Ok(Self {
            family: BaselineFamily::Weibull { shape },
        })
    }

    pub fn pareto() -> Self {
        Self {
            family: BaselineFamily::Pareto,
        }
    }

    /// Baseline defined by a hazard curve. The curve must keep a positive
    /// hazard in its tail so that `R₀ → ∞`.
    pub fn custom(curve: HazardCurve) -> Result<Self> {
        if let Some(table) = curve.table() {
            if table.last_hazard() <= 0.0 {
                return Err(Error::Model(format!(
                    "baseline hazard table {} must end with a positive hazard",
                    curve.label()
                )));
            }
        }
        Ok(Self {
            family: BaselineFamily::CustomHazard(curve),
        })
    }

    /// Parses `exponential`, `weibull:<alpha>`, `pareto` or `custom:<path>`;
    /// relative paths are resolved against `base_dir`.
    pub fn parse_spec(spec: &str, base_dir: &Path) -> Result<Self> {
        let spec = spec.trim();
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (spec, None),
        };
        match (head, arg) {
            ("exponential", None) => Ok(Self::exponential()),
            ("pareto", None) => Ok(Self::pareto()),
            ("weibull", Some(a)) => {
                let shape = a
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad Weibull shape '{a}'")))?;
                Self::weibull(shape)
            }
            ("custom", Some(p)) => Self::custom(HazardCurve::from_csv_path(&base_dir.join(p))?),
            _ => Err(Error::Parse(format!("unknown baseline '{spec}'"))),
        }
    }

    pub fn family(&self) -> &BaselineFamily {
        &self.family
    }

    /// Left endpoint `x_L` of the support, the identity element of `⊕`.
    pub fn left_endpoint(&self) -> f64 {
        match &self.family {
            BaselineFamily::Pareto => 1.0,
            BaselineFamily::CustomHazard(c) => c.start(),
            _ => 0.0,
        }
    }

    /// `R₀(x) = -ln F̄₀(x)`; zero at and below `x_L`.
    pub fn cumulative_hazard(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::Domain {
                what: "x",
                value: x,
                expected: "not NaN",
            });
        }
        let xl = self.left_endpoint();
        if x <= xl {
            return Ok(0.0);
        }
        Ok(match &self.family {
            BaselineFamily::Exponential => x,
            BaselineFamily::Weibull { shape } => x.powf(*shape),
            BaselineFamily::Pareto => x.ln(),
            BaselineFamily::CustomHazard(c) => c.cumulative(x)?,
        })
    }

    /// `R₀⁻¹(y)`, the point whose cumulative hazard is `y >= 0`.
    pub fn inverse_cumulative_hazard(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain {
                what: "cumulative hazard",
                value: y,
                expected: ">= 0",
            });
        }
        if y == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        Ok(match &self.family {
            BaselineFamily::Exponential => y,
            BaselineFamily::Weibull { shape } => y.powf(1.0 / shape),
            BaselineFamily::Pareto => y.exp(),
            BaselineFamily::CustomHazard(c) => c.inverse_cumulative(y)?,
        })
    }

    /// `F̄₀(x) = exp(-R₀(max(x, x_L)))`.
    pub fn survival(&self, x: f64) -> Result<f64> {
        check_finite("x", x)?;
        match &self.family {
            BaselineFamily::Pareto => Ok(if x <= 1.0 { 1.0 } else { 1.0 / x }),
            _ => Ok((-self.cumulative_hazard(x)?).exp()),
        }
    }

    /// `F̄₀⁻¹(s)` for `s` in `(0, 1]`; `inverse_survival(1) = x_L`.
    pub fn inverse_survival(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::Domain {
                what: "survival probability",
                value: s,
                expected: "in (0, 1]",
            });
        }
        if s == 1.0 {
            return Ok(self.left_endpoint());
        }
        match &self.family {
            BaselineFamily::Pareto => Ok(1.0 / s),
            _ => self.inverse_cumulative_hazard(-s.ln()),
        }
    }

    /// Baseline hazard `r₀(x)`. At `x_L` this is the one-sided limit, which
    /// may be `0` or `∞` for Weibull shapes other than one.
    pub fn hazard(&self, x: f64) -> Result<f64> {
        check_finite("x", x)?;
        let xl = self.left_endpoint();
        if x < xl {
            return Err(Error::Domain {
                what: "x",
                value: x,
                expected: ">= left endpoint",
            });
        }
        match &self.family {
            BaselineFamily::Exponential => Ok(1.0),
            BaselineFamily::Weibull { shape } => Ok(if x == 0.0 {
                match shape.partial_cmp(&1.0) {
                    Some(std::cmp::Ordering::Less) => f64::INFINITY,
                    Some(std::cmp::Ordering::Equal) => 1.0,
                    _ => 0.0,
                }
            } else {
                shape * x.powf(shape - 1.0)
            }),
            BaselineFamily::Pareto => Ok(1.0 / x),
            BaselineFamily::CustomHazard(c) => c.rate(x),
        }
    }

    /// Derivative `r₀'(x)`; analytic for the built-in families.
    pub fn hazard_derivative(&self, x: f64) -> Result<f64> {
        check_finite("x", x)?;
        match &self.family {
            BaselineFamily::Exponential => Ok(0.0),
            BaselineFamily::Weibull { shape } => Ok(shape * (shape - 1.0) * x.powf(shape - 2.0)),
            BaselineFamily::Pareto => Ok(-1.0 / (x * x)),
            BaselineFamily::CustomHazard(c) => c.rate_derivative(x),
        }
    }

    /// `f₀(x) = r₀(x) F̄₀(x)`.
    pub fn density(&self, x: f64) -> Result<f64> {
        let s = self.survival(x)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        Ok(self.hazard(x)? * s)
    }

    fn check_support(&self, what: &'static str, x: f64) -> Result<()> {
        check_finite(what, x)?;
        if x < self.left_endpoint() {
            return Err(Error::Domain {
                what,
                value: x,
                expected: ">= left endpoint",
            });
        }
        Ok(())
    }

    /// `x ⊕ t = F̄₀⁻¹(F̄₀(x) F̄₀(t))`.
    pub fn combine(&self, x: f64, t: f64) -> Result<f64> {
        self.check_support("x", x)?;
        self.check_support("t", t)?;
        let xl = self.left_endpoint();
        if t == xl {
            return Ok(x);
        }
        if x == xl {
            return Ok(t);
        }
        Ok(match &self.family {
            BaselineFamily::Exponential => x + t,
            BaselineFamily::Pareto => x * t,
            BaselineFamily::Weibull { shape } => {
                (x.powf(*shape) + t.powf(*shape)).powf(1.0 / shape)
            }
            BaselineFamily::CustomHazard(_) => {
                let y = self.cumulative_hazard(x)? + self.cumulative_hazard(t)?;
                self.inverse_cumulative_hazard(y)?
            }
        })
    }

    /// `x ⊖ t = F̄₀⁻¹(F̄₀(x) / F̄₀(t))` for `x >= t`; `x ⊖ x = x_L`.
    pub fn difference(&self, x: f64, t: f64) -> Result<f64> {
        self.check_support("x", x)?;
        self.check_support("t", t)?;
        if x < t {
            return Err(Error::Domain {
                what: "x - t",
                value: x - t,
                expected: "x >= t",
            });
        }
        if x == t {
            return Ok(self.left_endpoint());
        }
        Ok(match &self.family {
            BaselineFamily::Exponential => x - t,
            BaselineFamily::Pareto => x / t,
            BaselineFamily::Weibull { shape } => {
                (x.powf(*shape) - t.powf(*shape)).max(0.0).powf(1.0 / shape)
            }
            BaselineFamily::CustomHazard(_) => {
                let y = self.cumulative_hazard(x)? - self.cumulative_hazard(t)?;
                self.inverse_cumulative_hazard(y.max(0.0))?
            }
        })
    }

    /// Central-difference step policy shared by grid checks.
    pub(crate) fn step_at(&self, x: f64) -> f64 {
        numeric::central_step(x - self.left_endpoint())
    }
}
