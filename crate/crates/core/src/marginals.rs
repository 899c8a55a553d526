//! Univariate marginal survival models.

use std::fmt;
use std::path::Path;

use crate::baseline::BaselineModel;
use crate::error::{check_finite, Error, Result};
use crate::hazard_curve::HazardCurve;

#[derive(Debug, Clone)]
pub enum MarginalKind {
    /// `F̄(x) = F̄₀(x)^delta`.
    ProportionalHazard { baseline: BaselineModel, delta: f64 },
    /// Linear failure rate, hazard `1 + 2 a x`, `F̄(x) = exp(-(x + a x²))`.
    LinearFailureRate { a: f64 },
    /// `F̄(x) = exp(-∫ r)` for a supplied hazard `r`.
    FromHazard(HazardCurve),
}

#[derive(Debug, Clone)]
pub struct MarginalModel {
    kind: MarginalKind,
}

impl fmt::Display for MarginalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            MarginalKind::ProportionalHazard { baseline, delta } => write!(f, "ph({baseline}, {delta})"),
            MarginalKind::LinearFailureRate { a } => write!(f, "lfr:{a}"),
            MarginalKind::FromHazard(c) => write!(f, "hazard({})", c.label()),
        }
    }
}

impl MarginalModel {
    pub fn proportional_hazard(baseline: BaselineModel, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Model(format!("PH exponent must be > 0, got {delta}")));
        }
        Ok(Self {
            kind: MarginalKind::ProportionalHazard { baseline, delta },
        })
    }

    pub fn linear_failure_rate(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Model(format!("LFR coefficient must be > 0, got {a}")));
        }
        Ok(Self {
            kind: MarginalKind::LinearFailureRate { a },
        })
    }

    pub fn from_hazard(curve: HazardCurve) -> Self {
        Self {
            kind: MarginalKind::FromHazard(curve),
        }
    }

    /// Parses `ph:<delta>`, `lfr:<a>` or `hazard:<path>`. PH marginals are
    /// taken relative to `baseline`.
    pub fn parse_spec(spec: &str, baseline: &BaselineModel, base_dir: &Path) -> Result<Self> {
        let spec = spec.trim();
        let Some((head, arg)) = spec.split_once(':') else {
            return Err(Error::Parse(format!("unknown marginal '{spec}'")));
        };
        let number = |a: &str| {
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number '{a}' in marginal '{spec}'")))
        };
        match head.trim() {
            "ph" => Self::proportional_hazard(baseline.clone(), number(arg)?),
            "lfr" => Self::linear_failure_rate(number(arg)?),
            "hazard" => Ok(Self::from_hazard(HazardCurve::from_csv_path(
                &base_dir.join(arg.trim()),
            )?)),
            _ => Err(Error::Parse(format!("unknown marginal '{spec}'"))),
        }
    }

    pub fn kind(&self) -> &MarginalKind {
        &self.kind
    }

    pub fn left_endpoint(&self) -> f64 {
        match &self.kind {
            MarginalKind::ProportionalHazard { baseline, .. } => baseline.left_endpoint(),
            MarginalKind::LinearFailureRate { .. } => 0.0,
            MarginalKind::FromHazard(c) => c.start(),
        }
    }

    /// `∫_{x_L}^x r(u) du`, zero at and below the left endpoint.
    pub fn cumulative_hazard(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::Domain {
                what: "x",
                value: x,
                expected: "not NaN",
            });
        }
        if x <= self.left_endpoint() {
            return Ok(0.0);
        }
        match &self.kind {
            MarginalKind::ProportionalHazard { baseline, delta } => {
                Ok(delta * baseline.cumulative_hazard(x)?)
            }
            MarginalKind::LinearFailureRate { a } => Ok(x + a * x * x),
            MarginalKind::FromHazard(c) => c.cumulative(x),
        }
    }

    pub fn survival(&self, x: f64) -> Result<f64> {
        check_finite("x", x)?;
        if let MarginalKind::ProportionalHazard { baseline, delta } = &self.kind {
            return Ok(baseline.survival(x)?.powf(*delta));
        }
        Ok((-self.cumulative_hazard(x)?).exp())
    }

    pub fn hazard(&self, x: f64) -> Result<f64> {
        check_finite("x", x)?;
        match &self.kind {
            MarginalKind::ProportionalHazard { baseline, delta } => Ok(delta * baseline.hazard(x)?),
            MarginalKind::LinearFailureRate { a } => Ok(1.0 + 2.0 * a * x.max(0.0)),
            MarginalKind::FromHazard(c) => c.rate(x),
        }
    }

    /// `r'(x)`: analytic for PH and LFR, central differences otherwise.
    pub fn hazard_derivative(&self, x: f64) -> Result<f64> {
        check_finite("x", x)?;
        match &self.kind {
            MarginalKind::ProportionalHazard { baseline, delta } => {
                Ok(delta * baseline.hazard_derivative(x)?)
            }
            MarginalKind::LinearFailureRate { a } => Ok(2.0 * a),
            MarginalKind::FromHazard(c) => c.rate_derivative(x),
        }
    }

    /// Whether `hazard_derivative` is exact rather than a finite difference.
    pub fn has_analytic_derivative(&self) -> bool {
        match &self.kind {
            MarginalKind::ProportionalHazard { baseline, .. } => !matches!(
                baseline.family(),
                crate::baseline::BaselineFamily::CustomHazard(_)
            ),
            MarginalKind::LinearFailureRate { .. } => true,
            MarginalKind::FromHazard(_) => false,
        }
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        let s = self.survival(x)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        Ok(self.hazard(x)? * s)
    }

    /// Qualitative tail check of `f(x) → 0`: the density must not increase
    /// over the last probes of `probes`. Only meaningful for hazard-defined
    /// marginals; closed-form kinds always decay.
    pub fn density_decays(&self, probes: &[f64]) -> Result<bool> {
        if !matches!(self.kind, MarginalKind::FromHazard(_)) {
            return Ok(true);
        }
        let tail: Vec<f64> = probes
            .iter()
            .rev()
            .take(4)
            .map(|&x| self.density(x))
            .collect::<Result<_>>()?;
        // tail is ordered from the farthest probe inward.
        Ok(tail.windows(2).all(|w| w[0] <= w[1]) && tail.first().is_some_and(|&f| f < 1e-6))
    }
}

/// Outcome of the diagonal limit `lim_{y → x_L⁺} r(y)/r₀(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HazardRatioLimit {
    Finite(f64),
    Divergent,
}

impl HazardRatioLimit {
    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(v),
            Self::Divergent => None,
        }
    }
}

/// Number of halvings of `ε` used by [`limit_hazard_ratio`].
const LIMIT_STEPS: usize = 14;
const LIMIT_EPS0: f64 = 1e-3;

/// `lim_{y → x_L⁺} r(y)/r₀(y)` sampled at `R₀(y) = ε` for
/// `ε = 1e-3, 5e-4, 2.5e-4, ...` and extrapolated.
///
/// The differences of the sampled sequence are assumed to shrink
/// geometrically with a common ratio `ρ` (power-law approach in `ε`); the
/// tail of the geometric series is added to the last value. A ratio above one
/// with growing magnitude is reported as divergence; anything else is an
/// error carrying the samples.
pub fn limit_hazard_ratio(marginal: &MarginalModel, baseline: &BaselineModel) -> Result<HazardRatioLimit> {
    if (marginal.left_endpoint() - baseline.left_endpoint()).abs() > 1e-12 {
        return Err(Error::Model(format!(
            "marginal support starts at {} but the baseline at {}",
            marginal.left_endpoint(),
            baseline.left_endpoint()
        )));
    }
    if let MarginalKind::ProportionalHazard { baseline: own, delta } = &marginal.kind {
        if same_family(own, baseline) {
            return Ok(HazardRatioLimit::Finite(*delta));
        }
    }
    let mut values = Vec::with_capacity(LIMIT_STEPS);
    let mut eps = LIMIT_EPS0;
    for _ in 0..LIMIT_STEPS {
        let y = baseline.inverse_cumulative_hazard(eps)?;
        let r0 = baseline.hazard(y)?;
        let r = marginal.hazard(y)?;
        let g = r / r0;
        if g.is_nan() {
            return Err(Error::NonConvergent { values });
        }
        if g.is_infinite() {
            return Ok(HazardRatioLimit::Divergent);
        }
        values.push(g);
        eps *= 0.5;
    }
    extrapolate(values)
}

fn same_family(a: &BaselineModel, b: &BaselineModel) -> bool {
    use crate::baseline::BaselineFamily as F;
    match (a.family(), b.family()) {
        (F::Exponential, F::Exponential) | (F::Pareto, F::Pareto) => true,
        (F::Weibull { shape: s1 }, F::Weibull { shape: s2 }) => s1 == s2,
        _ => false,
    }
}

fn extrapolate(values: Vec<f64>) -> Result<HazardRatioLimit> {
    let last = *values.last().expect("non-empty sequence");
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    if diffs.iter().all(|d| d.abs() <= 1e-13 * scale) {
        return Ok(HazardRatioLimit::Finite(last));
    }
    // Ratios over the finest half of the sequence.
    let ratios: Vec<f64> = diffs[diffs.len() / 2..]
        .windows(2)
        .filter(|w| w[0].abs() > 1e-15 * scale)
        .map(|w| w[1] / w[0])
        .collect();
    if ratios.is_empty() {
        return Ok(HazardRatioLimit::Finite(last));
    }
    let rho = *ratios.last().expect("non-empty");
    let spread = ratios.iter().map(|r| (r - rho).abs()).fold(0.0, f64::max);
    let growing = values.windows(2).rev().take(4).all(|w| w[1].abs() > w[0].abs());
    if ratios.iter().all(|&r| r > 1.05) && growing {
        return Ok(HazardRatioLimit::Divergent);
    }
    if ratios.iter().all(|&r| r > 0.0 && r < 0.95) && spread < 0.1 {
        let d_last = *diffs.last().expect("non-empty");
        return Ok(HazardRatioLimit::Finite(last + d_last * rho / (1.0 - rho)));
    }
    // Remaining drift already at round-off level counts as converged.
    if diffs.last().is_some_and(|d| d.abs() <= 1e-10 * scale) {
        return Ok(HazardRatioLimit::Finite(last));
    }
    Err(Error::NonConvergent { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lfr_examples() {
        let m = MarginalModel::linear_failure_rate(1.5).unwrap();
        assert_relative_eq!(m.survival(2.0).unwrap(), (-8f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(m.survival(2.0).unwrap(), 3.3546e-4, max_relative = 1e-4);
        assert_eq!(m.hazard(2.0).unwrap(), 7.0);
        assert_eq!(m.left_endpoint(), 0.0);
    }

    #[test]
    fn ph_over_exponential_example() {
        let m = MarginalModel::proportional_hazard(BaselineModel::exponential(), 2.0).unwrap();
        assert_relative_eq!(m.survival(3.0).unwrap(), (-6f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn ph_hazard_is_scaled_baseline_hazard() {
        for b in [
            BaselineModel::exponential(),
            BaselineModel::weibull(0.5).unwrap(),
            BaselineModel::weibull(2.0).unwrap(),
            BaselineModel::pareto(),
        ] {
            let m = MarginalModel::proportional_hazard(b.clone(), 1.7).unwrap();
            for k in 1..20 {
                let x = b.left_endpoint() + 0.37 * k as f64;
                let lhs = m.hazard(x).unwrap();
                let rhs = 1.7 * b.hazard(x).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
                assert_relative_eq!(
                    m.survival(x).unwrap(),
                    b.survival(x).unwrap().powf(1.7),
                    max_relative = 1e-15
                );
            }
        }
    }

    #[test]
    fn density_consistency_closed_forms() {
        let m = MarginalModel::linear_failure_rate(0.8).unwrap();
        for &x in &[0.1, 1.0, 2.5] {
            let f = m.density(x).unwrap();
            assert!((f - m.hazard(x).unwrap() * m.survival(x).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn from_hazard_reconstructs_survival() {
        // r(x) = 1 + 3x  ≡ LFR with a = 1.5
        let c = HazardCurve::from_fn("lfr", 0.0, vec![], |x| 1.0 + 3.0 * x).unwrap();
        let m = MarginalModel::from_hazard(c);
        let lfr = MarginalModel::linear_failure_rate(1.5).unwrap();
        for k in 1..30 {
            let x = 0.1 * k as f64;
            assert!((m.survival(x).unwrap() - lfr.survival(x).unwrap()).abs() < 1e-8);
            let f = m.density(x).unwrap();
            assert!((f - m.hazard(x).unwrap() * m.survival(x).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn parse_grammar() {
        let b = BaselineModel::exponential();
        let dir = Path::new(".");
        assert!(matches!(
            MarginalModel::parse_spec("ph:2", &b, dir).unwrap().kind(),
            MarginalKind::ProportionalHazard { delta, .. } if *delta == 2.0
        ));
        assert!(matches!(
            MarginalModel::parse_spec("lfr:1.5", &b, dir).unwrap().kind(),
            MarginalKind::LinearFailureRate { a } if *a == 1.5
        ));
        assert!(MarginalModel::parse_spec("lfr:x", &b, dir).is_err());
        assert!(MarginalModel::parse_spec("ph", &b, dir).is_err());
        assert!(MarginalModel::parse_spec("ph:0", &b, dir).is_err());
    }

    #[test]
    fn limit_ratio_examples() {
        for b in [
            BaselineModel::exponential(),
            BaselineModel::weibull(2.0).unwrap(),
            BaselineModel::pareto(),
        ] {
            let m = MarginalModel::proportional_hazard(b.clone(), 2.0).unwrap();
            assert_eq!(limit_hazard_ratio(&m, &b).unwrap(), HazardRatioLimit::Finite(2.0));
        }
        let lfr = MarginalModel::linear_failure_rate(1.5).unwrap();
        let v = limit_hazard_ratio(&lfr, &BaselineModel::exponential())
            .unwrap()
            .finite()
            .unwrap();
        assert!((v - 1.0).abs() < 1e-9, "{v}");
        assert_eq!(
            limit_hazard_ratio(&lfr, &BaselineModel::weibull(2.0).unwrap()).unwrap(),
            HazardRatioLimit::Divergent
        );
    }

    #[test]
    fn limit_ratio_through_generic_path() {
        // Hazard-defined PH marginals go through the sampled sequence.
        for (b, shape) in [
            (BaselineModel::weibull(0.5).unwrap(), 0.5),
            (BaselineModel::weibull(2.0).unwrap(), 2.0),
        ] {
            let c = HazardCurve::from_fn("ph", 0.0, vec![], move |x: f64| {
                1.3 * shape * x.powf(shape - 1.0)
            })
            .unwrap();
            let v = limit_hazard_ratio(&MarginalModel::from_hazard(c), &b).unwrap();
            assert!((v.finite().unwrap() - 1.3).abs() < 1e-6);
        }
        // PH over a different baseline family: Weibull(2) marginal vs exponential baseline → 0.
        let m = MarginalModel::proportional_hazard(BaselineModel::weibull(2.0).unwrap(), 1.0).unwrap();
        let v = limit_hazard_ratio(&m, &BaselineModel::exponential()).unwrap();
        assert!(v.finite().unwrap().abs() < 1e-6);
    }

    #[test]
    fn limit_ratio_requires_matching_support() {
        let lfr = MarginalModel::linear_failure_rate(1.0).unwrap();
        assert!(limit_hazard_ratio(&lfr, &BaselineModel::pareto()).is_err());
    }

    #[test]
    fn oscillating_sequence_is_non_convergent() {
        let values: Vec<f64> = (0..14).map(|k| if k % 2 == 0 { 1.0 } else { 2.0 }).collect();
        assert!(matches!(extrapolate(values), Err(Error::NonConvergent { .. })));
    }
}
