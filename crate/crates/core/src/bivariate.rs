//! Bivariate survival functions solving the baseline functional equation.
//!
//! For a baseline `F̄₀`, marginals `F̄₁, F̄₂` and `θ > 0` the general solution is
//!
//! ```text
//! F̄(x₁, x₂) = F̄₁(x₁ ⊖ x₂) · F̄₀(x₂)^θ    x₁ >= x₂
//!           = F̄₂(x₂ ⊖ x₁) · F̄₀(x₁)^θ    x₁ <= x₂
//! ```
//!
//! evaluated in cumulative-hazard form. The proportional-hazards subclass has
//! the closed form `F̄₀(x₁)^{θ₁+θ₃} F̄₀(x₂)^{θ₂}` (and its mirror image) with a
//! closed-form absolutely continuous density.

use serde::Serialize;

use crate::baseline::BaselineModel;
use crate::error::{Error, Result};
use crate::marginals::{limit_hazard_ratio, HazardRatioLimit, MarginalModel};
use crate::numeric::{self, QuadOptions};

/// Which coordinate of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Margin {
    First,
    Second,
}

impl Margin {
    pub fn other(self) -> Self {
        match self {
            Self::First => Self::Second,
            Self::Second => Self::First,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::First => 1,
            Self::Second => 2,
        }
    }

    /// `(x_self, x_other)` from an `(x₁, x₂)` pair.
    pub fn split(self, x1: f64, x2: f64) -> (f64, f64) {
        match self {
            Self::First => (x1, x2),
            Self::Second => (x2, x1),
        }
    }

    /// Inverse of [`Margin::split`].
    pub fn join(self, own: f64, other: f64) -> (f64, f64) {
        self.split(own, other)
    }
}

/// Mixture decomposition into absolutely continuous and diagonal parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decomposition {
    pub theta: f64,
    pub u1: f64,
    pub u2: f64,
    /// Weight of the absolutely continuous part, `2 - (u₁ + u₂)/θ`.
    pub alpha: f64,
    pub singular_mass: f64,
}

impl Decomposition {
    pub fn from_limits(theta: f64, u1: f64, u2: f64) -> Self {
        let alpha = 2.0 - (u1 + u2) / theta;
        Self {
            theta,
            u1,
            u2,
            alpha,
            singular_mass: 1.0 - alpha,
        }
    }

    /// `0 <= α <= 1`.
    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.alpha)
    }

    /// Absolutely continuous mass of the wedge where `margin` is the larger
    /// coordinate, `(θ - u_i)/θ`.
    pub fn wedge_mass(&self, margin: Margin) -> f64 {
        let u = match margin {
            Margin::First => self.u1,
            Margin::Second => self.u2,
        };
        (self.theta - u) / self.theta
    }
}

/// Common interface of the general and proportional-hazards models.
pub trait BivariateSurvival: Sync {
    fn baseline(&self) -> &BaselineModel;
    fn theta(&self) -> f64;
    fn marginal(&self, margin: Margin) -> &MarginalModel;
    fn decompose(&self) -> Result<Decomposition>;

    /// `R(x₁, x₂) = -ln F̄(x₁, x₂)`. Coordinates below `x_L` are clamped.
    fn cumulative_hazard(&self, x1: f64, x2: f64) -> Result<f64> {
        general_cumulative_hazard(self.baseline(), self.theta(), |m| self.marginal(m), x1, x2)
    }

    /// `F̄(x₁, x₂)`; `+∞` in either coordinate gives `0`.
    fn survival(&self, x1: f64, x2: f64) -> Result<f64> {
        if x1.is_nan() || x2.is_nan() {
            return Err(Error::Domain {
                what: "x",
                value: f64::NAN,
                expected: "not NaN",
            });
        }
        if x1 == f64::INFINITY || x2 == f64::INFINITY {
            return Ok(0.0);
        }
        Ok((-self.cumulative_hazard(x1, x2)?).exp())
    }

    /// Absolutely continuous density `f_a`, undefined on the diagonal.
    fn ac_density(&self, x1: f64, x2: f64) -> Result<f64>;
}

fn general_cumulative_hazard<'a>(
    baseline: &BaselineModel,
    theta: f64,
    marginal: impl Fn(Margin) -> &'a MarginalModel,
    x1: f64,
    x2: f64,
) -> Result<f64> {
    let xl = baseline.left_endpoint();
    let (x1, x2) = (x1.max(xl), x2.max(xl));
    let (larger, hi, lo) = if x1 >= x2 {
        (Margin::First, x1, x2)
    } else {
        (Margin::Second, x2, x1)
    };
    let d = baseline.difference(hi, lo)?;
    Ok(marginal(larger).cumulative_hazard(d)? + theta * baseline.cumulative_hazard(lo)?)
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::Model(format!("theta must be > 0, got {theta}")))
    }
}

/// `(baseline, F̄₁, F̄₂, θ)` realizing the general solution.
#[derive(Debug, Clone)]
pub struct GeneralBivariateModel {
    baseline: BaselineModel,
    marginals: [MarginalModel; 2],
    theta: f64,
}

impl GeneralBivariateModel {
    pub fn new(
        baseline: BaselineModel,
        marginal1: MarginalModel,
        marginal2: MarginalModel,
        theta: f64,
    ) -> Result<Self> {
        check_theta(theta)?;
        for m in [&marginal1, &marginal2] {
            if (m.left_endpoint() - baseline.left_endpoint()).abs() > 1e-12 {
                return Err(Error::Model(format!(
                    "marginal {m} starts at {} but baseline {baseline} at {}",
                    m.left_endpoint(),
                    baseline.left_endpoint()
                )));
            }
        }
        Ok(Self {
            baseline,
            marginals: [marginal1, marginal2],
            theta,
        })
    }
}

impl BivariateSurvival for GeneralBivariateModel {
    fn baseline(&self) -> &BaselineModel {
        &self.baseline
    }

    fn theta(&self) -> f64 {
        self.theta
    }

    fn marginal(&self, margin: Margin) -> &MarginalModel {
        &self.marginals[margin.index() - 1]
    }

    fn decompose(&self) -> Result<Decomposition> {
        let limit = |m: Margin| match limit_hazard_ratio(self.marginal(m), &self.baseline)? {
            HazardRatioLimit::Finite(v) => Ok(v),
            HazardRatioLimit::Divergent => Err(Error::Divergent),
        };
        Ok(Decomposition::from_limits(
            self.theta,
            limit(Margin::First)?,
            limit(Margin::Second)?,
        ))
    }

    /// Mixed finite difference of the survival function divided by `α`.
    fn ac_density(&self, x1: f64, x2: f64) -> Result<f64> {
        let alpha = self.decompose()?.alpha;
        ac_density_from_mixed(self, alpha, x1, x2)
    }
}

fn ac_density_from_mixed<M: BivariateSurvival + ?Sized>(model: &M, alpha: f64, x1: f64, x2: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Err(Error::UndefinedDensity(
            "model is purely singular (alpha = 0)".into(),
        ));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Model(format!(
            "mixture weight alpha = {alpha} lies outside (0, 1]"
        )));
    }
    let mixed = mixed_partial(model, x1, x2)?;
    let scale = model.survival(x1, x2)?
        * model.theta().powi(2)
        * model.baseline().hazard(x1)?
        * model.baseline().hazard(x2)?;
    if mixed < 0.0 {
        if -mixed <= 1e-9 * scale {
            return Ok(0.0);
        }
        return Err(Error::NegativeDensity {
            x1,
            x2,
            value: mixed / alpha,
        });
    }
    Ok(mixed / alpha)
}

/// `∂²F̄/∂x₁∂x₂` by a central four-point stencil kept strictly inside the
/// wedge containing `(x₁, x₂)`.
///
/// Steps start at `ε^{1/4} max(1, |x|)` per axis and are shrunk, not
/// reflected, until the stencil neither touches the diagonal nor leaves the
/// support.
pub fn mixed_partial<M: BivariateSurvival + ?Sized>(model: &M, x1: f64, x2: f64) -> Result<f64> {
    if x1 == x2 {
        return Err(Error::UndefinedDensity("diagonal point".into()));
    }
    let xl = model.baseline().left_endpoint();
    if x1 <= xl || x2 <= xl {
        return Err(Error::Domain {
            what: "x",
            value: x1.min(x2),
            expected: "strictly above the left endpoint",
        });
    }
    let root = f64::EPSILON.sqrt().sqrt();
    let mut h1 = root * x1.abs().max(1.0);
    let mut h2 = root * x2.abs().max(1.0);
    let gap = (x1 - x2).abs();
    if h1 + h2 > 0.5 * gap {
        let shrink = 0.5 * gap / (h1 + h2);
        h1 *= shrink;
        h2 *= shrink;
    }
    h1 = h1.min(0.5 * (x1 - xl));
    h2 = h2.min(0.5 * (x2 - xl));
    let f = |a: f64, b: f64| model.survival(a, b);
    let v = f(x1 + h1, x2 + h2)? - f(x1 + h1, x2 - h2)? - f(x1 - h1, x2 + h2)? + f(x1 - h1, x2 - h2)?;
    Ok(v / (4.0 * h1 * h2))
}

/// Proportional-hazards model with parameters `θ₁, θ₂ > 0`, `θ₃ >= 0`.
///
/// Equivalently `δᵢ = θᵢ + θ₃` and `θ = θ₁ + θ₂ + θ₃`.
#[derive(Debug, Clone)]
pub struct PHBivariateModel {
    baseline: BaselineModel,
    theta1: f64,
    theta2: f64,
    theta3: f64,
    marginals: [MarginalModel; 2],
}

impl PHBivariateModel {
    pub fn new(baseline: BaselineModel, theta1: f64, theta2: f64, theta3: f64) -> Result<Self> {
        for (name, v) in [("theta1", theta1), ("theta2", theta2), ("theta3", theta3)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Model(format!("{name} must be > 0, got {v}")));
            }
        }
        Self::build(baseline, theta1, theta2, theta3)
    }

    /// From `(δ₁, δ₂, θ)` with `δᵢ < θ` and `θ <= δ₁ + δ₂ <= 2θ`.
    /// `δ₁ + δ₂ = θ` gives `θ₃ = 0`, the purely absolutely continuous boundary.
    pub fn from_deltas(baseline: BaselineModel, delta1: f64, delta2: f64, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        if !(delta1 > 0.0 && delta2 > 0.0 && delta1 < theta && delta2 < theta) {
            return Err(Error::Model(format!(
                "need 0 < delta_i < theta, got ({delta1}, {delta2}) with theta = {theta}"
            )));
        }
        let sum = delta1 + delta2;
        if !(theta <= sum && sum <= 2.0 * theta) {
            return Err(Error::Model(format!(
                "need theta <= delta1 + delta2 <= 2 theta, got {sum} with theta = {theta}"
            )));
        }
        Self::build(baseline, theta - delta2, theta - delta1, (sum - theta).max(0.0))
    }

    fn build(baseline: BaselineModel, theta1: f64, theta2: f64, theta3: f64) -> Result<Self> {
        let marginals = [
            MarginalModel::proportional_hazard(baseline.clone(), theta1 + theta3)?,
            MarginalModel::proportional_hazard(baseline.clone(), theta2 + theta3)?,
        ];
        Ok(Self {
            baseline,
            theta1,
            theta2,
            theta3,
            marginals,
        })
    }

    pub fn thetas(&self) -> (f64, f64, f64) {
        (self.theta1, self.theta2, self.theta3)
    }

    /// `(δ₁, δ₂)`.
    pub fn deltas(&self) -> (f64, f64) {
        (self.theta1 + self.theta3, self.theta2 + self.theta3)
    }

    pub fn to_general(&self) -> GeneralBivariateModel {
        GeneralBivariateModel {
            baseline: self.baseline.clone(),
            marginals: self.marginals.clone(),
            theta: self.theta(),
        }
    }
}

impl BivariateSurvival for PHBivariateModel {
    fn baseline(&self) -> &BaselineModel {
        &self.baseline
    }

    fn theta(&self) -> f64 {
        self.theta1 + self.theta2 + self.theta3
    }

    fn marginal(&self, margin: Margin) -> &MarginalModel {
        &self.marginals[margin.index() - 1]
    }

    /// `α = (θ₁ + θ₂)/θ` and singular mass `θ₃/θ`, the closed forms of
    /// `2 - (δ₁ + δ₂)/θ` and its complement.
    fn decompose(&self) -> Result<Decomposition> {
        let (d1, d2) = self.deltas();
        let theta = self.theta();
        Ok(Decomposition {
            theta,
            u1: d1,
            u2: d2,
            alpha: (self.theta1 + self.theta2) / theta,
            singular_mass: self.theta3 / theta,
        })
    }

    fn cumulative_hazard(&self, x1: f64, x2: f64) -> Result<f64> {
        let r1 = self.baseline.cumulative_hazard(x1)?;
        let r2 = self.baseline.cumulative_hazard(x2)?;
        Ok(if x1 >= x2 {
            (self.theta1 + self.theta3) * r1 + self.theta2 * r2
        } else {
            self.theta1 * r1 + (self.theta2 + self.theta3) * r2
        })
    }

    /// Closed form `θ/(2θ-δ₁-δ₂) · δ₁(θ-δ₁) f₀(x₁)f₀(x₂) F̄₀(x₁)^{δ₁-1} F̄₀(x₂)^{θ-δ₁-1}`
    /// for `x₁ > x₂`, mirrored for `x₁ < x₂`.
    fn ac_density(&self, x1: f64, x2: f64) -> Result<f64> {
        if x1 == x2 {
            return Err(Error::UndefinedDensity("diagonal point".into()));
        }
        let theta = self.theta();
        let (d1, d2) = self.deltas();
        let alpha = (2.0 * theta - d1 - d2) / theta;
        if alpha <= 0.0 {
            return Err(Error::UndefinedDensity(
                "model is purely singular (alpha = 0)".into(),
            ));
        }
        let b = &self.baseline;
        let (hi, lo, delta) = if x1 > x2 { (x1, x2, d1) } else { (x2, x1, d2) };
        let xl = b.left_endpoint();
        if lo < xl {
            return Ok(0.0);
        }
        let log_tail = -delta * b.cumulative_hazard(hi)? - (theta - delta) * b.cumulative_hazard(lo)?;
        let tail = log_tail.exp();
        if tail == 0.0 {
            return Ok(0.0);
        }
        Ok(delta * (theta - delta) * b.hazard(hi)? * b.hazard(lo)? * tail / alpha)
    }
}

/// `P(a₁ < X₁ <= b₁, a₂ < X₂ <= b₂)` by inclusion-exclusion; exactly zero
/// for a degenerate rectangle.
pub fn rectangle_probability<M: BivariateSurvival + ?Sized>(
    model: &M,
    a1: f64,
    b1: f64,
    a2: f64,
    b2: f64,
) -> Result<f64> {
    if a1 == b1 || a2 == b2 {
        return Ok(0.0);
    }
    if !(a1 < b1) || !(a2 < b2) {
        return Err(Error::Domain {
            what: "rectangle",
            value: f64::NAN,
            expected: "a1 < b1 and a2 < b2",
        });
    }
    Ok(model.survival(a1, a2)? - model.survival(b1, a2)? - model.survival(a1, b2)?
        + model.survival(b1, b2)?)
}

/// Survival of the singular (diagonal) component, `F̄₀(x)^θ`.
pub fn singular_survival<M: BivariateSurvival + ?Sized>(model: &M, x: f64) -> Result<f64> {
    let dec = model.decompose()?;
    if !(dec.singular_mass > 0.0) {
        return Err(Error::UndefinedComponent(format!(
            "singular mass is {}",
            dec.singular_mass
        )));
    }
    Ok((-model.theta() * model.baseline().cumulative_hazard(x)?).exp())
}

/// `∬ α f_a` over the wedge where `margin` is the larger coordinate.
///
/// The wedge is mapped to `(ρ, s) = (R₀(min), R₀(max) - R₀(min))` and then
/// compactified by `u = ρ/(1+ρ)`, `v = s/(1+s)`; nested adaptive
/// Gauss-Kronrod on the unit square.
pub fn wedge_mass<M: BivariateSurvival + ?Sized>(model: &M, margin: Margin, abs_tol: f64) -> Result<f64> {
    let alpha = model.decompose()?.alpha;
    let b = model.baseline();
    let mut failure: Option<Error> = None;
    let inner_opts = QuadOptions {
        abs_tol: abs_tol * 0.1,
        rel_tol: 1e-12,
        max_intervals: 400,
    };
    let outer_opts = QuadOptions {
        abs_tol,
        rel_tol: 1e-12,
        max_intervals: 400,
    };
    let value = numeric::integrate(
        |u| {
            if failure.is_some() {
                return 0.0;
            }
            let rho = u / (1.0 - u);
            let inner = numeric::integrate(
                |v| {
                    let s = v / (1.0 - v);
                    match wedge_integrand(model, b, alpha, margin, rho, s) {
                        Ok(val) => val / ((1.0 - v) * (1.0 - v)),
                        Err(e) => {
                            failure.get_or_insert(e);
                            0.0
                        }
                    }
                },
                0.0,
                1.0,
                inner_opts,
            );
            match inner {
                Ok(val) => val / ((1.0 - u) * (1.0 - u)),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        1.0,
        outer_opts,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

fn wedge_integrand<M: BivariateSurvival + ?Sized>(
    model: &M,
    b: &BaselineModel,
    alpha: f64,
    margin: Margin,
    rho: f64,
    s: f64,
) -> Result<f64> {
    let lo = b.inverse_cumulative_hazard(rho)?;
    let hi = b.inverse_cumulative_hazard(rho + s)?;
    if !lo.is_finite() || !hi.is_finite() || hi == lo {
        return Ok(0.0);
    }
    let (x1, x2) = margin.join(hi, lo);
    let density = alpha * model.ac_density(x1, x2)?;
    if density == 0.0 {
        return Ok(0.0);
    }
    Ok(density / (b.hazard(lo)? * b.hazard(hi)?))
}
