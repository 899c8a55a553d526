//! Grid-based validity checks.
//!
//! A check never proves validity. A `Valid` verdict means no violation was
//! found on the evaluated grid; `Invalid` always carries a witness point.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::BaselineModel;
use crate::bivariate::{BivariateSurvival, GeneralBivariateModel, Margin};
use crate::error::{Error, Result};
use crate::marginals::{limit_hazard_ratio, HazardRatioLimit, MarginalModel};
use crate::numeric::{self, QuadOptions};

/// Axis knots shared by both coordinates plus the minimum distance from the
/// diagonal, measured in cumulative-hazard units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    knots: Vec<f64>,
    wedge_margin: f64,
}

impl GridSpec {
    pub const MIN_LOG_KNOTS: usize = 8;

    /// 16 knots log-spaced over `R₀ ∈ [0.05, 8]`, wedge margin `0.02`.
    pub fn default_for(baseline: &BaselineModel) -> Result<Self> {
        Self::log_spaced(baseline, 16, 0.05, 8.0, 0.02)
    }

    /// `count` knots whose cumulative hazards are log-spaced over `[r_lo, r_hi]`.
    pub fn log_spaced(
        baseline: &BaselineModel,
        count: usize,
        r_lo: f64,
        r_hi: f64,
        wedge_margin: f64,
    ) -> Result<Self> {
        if count < Self::MIN_LOG_KNOTS {
            return Err(Error::Domain {
                what: "grid knot count",
                value: count as f64,
                expected: ">= 8",
            });
        }
        if !(r_lo > 0.0 && r_lo < r_hi && r_hi.is_finite()) {
            return Err(Error::Domain {
                what: "grid range",
                value: r_lo,
                expected: "0 < r_lo < r_hi < inf",
            });
        }
        let knots = numeric::geomspace(r_lo, r_hi, count)
            .into_iter()
            .map(|r| baseline.inverse_cumulative_hazard(r))
            .collect::<Result<Vec<_>>>()?;
        Self::from_knots(knots, wedge_margin)
    }

    /// Explicit knots. Any count is accepted here; small grids are useful for
    /// targeted checks and a single knot yields vacuous results.
    pub fn from_knots(knots: Vec<f64>, wedge_margin: f64) -> Result<Self> {
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::Domain {
                what: "grid knot",
                value: f64::NAN,
                expected: "finite",
            });
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain {
                what: "grid knots",
                value: f64::NAN,
                expected: "strictly increasing",
            });
        }
        if !(wedge_margin >= 0.0 && wedge_margin.is_finite()) {
            return Err(Error::Domain {
                what: "wedge margin",
                value: wedge_margin,
                expected: ">= 0",
            });
        }
        Ok(Self {
            knots,
            wedge_margin,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn wedge_margin(&self) -> f64 {
        self.wedge_margin
    }

    /// Knot pairs `(x_big, x_small)` inside the support whose cumulative
    /// hazards differ by at least the wedge margin, in lexicographic order.
    pub fn wedge_pairs(&self, baseline: &BaselineModel) -> Result<Vec<(f64, f64)>> {
        let xl = baseline.left_endpoint();
        let inside: Vec<(f64, f64)> = self
            .knots
            .iter()
            .filter(|&&k| k >= xl)
            .map(|&k| Ok((k, baseline.cumulative_hazard(k)?)))
            .collect::<Result<_>>()?;
        let mut pairs = Vec::new();
        for &(big, r_big) in &inside {
            for &(small, r_small) in &inside {
                if big > small && r_big - r_small >= self.wedge_margin && r_big - r_small > 0.0 {
                    pairs.push((big, small));
                }
            }
        }
        Ok(pairs)
    }
}

/// Eight `t` values with `R₀(t)` log-spaced over `[0.1, 4]`.
pub fn default_t_knots(baseline: &BaselineModel) -> Result<Vec<f64>> {
    numeric::geomspace(0.1, 4.0, 8)
        .into_iter()
        .map(|r| baseline.inverse_cumulative_hazard(r))
        .collect()
}

/// Tolerances used by the inequality checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
    /// Rectangle probabilities down to `-rectangle` count as non-negative.
    pub rectangle: f64,
    /// Maximum relative spread of the diagonal limit across diagonal points.
    pub diagonal: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            abs: 1e-8,
            rel: 1e-6,
            rectangle: 1e-9,
            diagonal: 1e-4,
        }
    }
}

impl Tolerances {
    /// `max(abs, rel * |scale|)`.
    pub fn allowance(&self, scale: f64) -> f64 {
        self.abs.max(self.rel * scale.abs())
    }

    /// Signed slack of `lhs <= rhs`; non-negative means the inequality holds.
    pub fn slack(&self, lhs: f64, rhs: f64) -> f64 {
        rhs - lhs + self.allowance(rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Valid,
    Invalid,
    Inconclusive,
}

/// Outcome of one condition at its worst grid point.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionResult {
    pub id: String,
    pub pass: bool,
    pub witness: Option<[f64; 2]>,
    /// Signed slack at the witness; negative on failure.
    pub margin: Option<f64>,
    /// Rectangle `[a1, b1, a2, b2]` for rectangle conditions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rectangle: Option<[f64; 4]>,
    pub inconclusive: bool,
    pub heuristic: bool,
    pub note: String,
}

impl ConditionResult {
    fn inconclusive(id: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            pass: false,
            witness: None,
            margin: None,
            rectangle: None,
            inconclusive: true,
            heuristic: false,
            note: note.into(),
        }
    }

    fn status(&self) -> &'static str {
        if self.inconclusive {
            "inconclusive"
        } else if self.pass {
            "pass"
        } else {
            "FAIL"
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub grid_knots: Vec<f64>,
    pub wedge_margin: Option<f64>,
    pub tolerances: Option<Tolerances>,
    pub theta: Option<f64>,
    pub u1: Option<f64>,
    pub u2: Option<f64>,
    pub alpha: Option<f64>,
    pub evaluated_points: usize,
    pub skipped_points: usize,
    pub notes: Vec<String>,
}

impl Diagnostics {
    fn for_grid(grid: &GridSpec, tol: &Tolerances, theta: f64) -> Self {
        Self {
            grid_knots: grid.knots.clone(),
            wedge_margin: Some(grid.wedge_margin),
            tolerances: Some(*tol),
            theta: Some(theta),
            ..Self::default()
        }
    }

    fn set_limits(&mut self, theta: f64, u1: Option<f64>, u2: Option<f64>) {
        self.u1 = u1;
        self.u2 = u2;
        if let (Some(a), Some(b)) = (u1, u2) {
            self.alpha = Some(2.0 - (a + b) / theta);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub summary: String,
    pub conditions: Vec<ConditionResult>,
    pub diagnostics: Diagnostics,
}

impl ValidationReport {
    pub fn new(conditions: Vec<ConditionResult>, diagnostics: Diagnostics) -> Self {
        let failed: Vec<&str> = conditions
            .iter()
            .filter(|c| !c.pass && !c.inconclusive)
            .map(|c| c.id.as_str())
            .collect();
        let open: Vec<&str> = conditions
            .iter()
            .filter(|c| c.inconclusive)
            .map(|c| c.id.as_str())
            .collect();
        let (verdict, summary) = if !failed.is_empty() {
            (Verdict::Invalid, format!("violated: {}", failed.join(", ")))
        } else if !open.is_empty() {
            (Verdict::Inconclusive, format!("inconclusive: {}", open.join(", ")))
        } else {
            (Verdict::Valid, "no violation found on grid".to_string())
        };
        Self {
            verdict,
            summary,
            conditions,
            diagnostics,
        }
    }

    pub fn condition(&self, id: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.id == id)
    }

    /// Concatenates conditions and recomputes the verdict.
    pub fn merge(self, other: ValidationReport) -> Self {
        let mut conditions = self.conditions;
        conditions.extend(other.conditions);
        let mut d = self.diagnostics;
        let o = other.diagnostics;
        if d.grid_knots.is_empty() {
            d.grid_knots = o.grid_knots;
        }
        d.wedge_margin = d.wedge_margin.or(o.wedge_margin);
        d.tolerances = d.tolerances.or(o.tolerances);
        d.theta = d.theta.or(o.theta);
        d.u1 = d.u1.or(o.u1);
        d.u2 = d.u2.or(o.u2);
        d.alpha = d.alpha.or(o.alpha);
        d.evaluated_points += o.evaluated_points;
        d.skipped_points += o.skipped_points;
        d.notes.extend(o.notes);
        Self::new(conditions, d)
    }

    /// Plain-text table, one row per condition.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "verdict: {:?} ({})", self.verdict, self.summary);
        let _ = writeln!(
            out,
            "{:<18} {:<12} {:<42} {:<19} note",
            "condition", "status", "witness", "margin"
        );
        for c in &self.conditions {
            let witness = match (c.rectangle, c.witness) {
                (Some(r), _) => format!(
                    "({}, {}]x({}, {}]",
                    fmt_num(r[0]),
                    fmt_num(r[1]),
                    fmt_num(r[2]),
                    fmt_num(r[3])
                ),
                (None, Some(w)) => format!("({}, {})", fmt_num(w[0]), fmt_num(w[1])),
                (None, None) => "-".into(),
            };
            let margin = c.margin.map_or_else(|| "-".into(), fmt_num);
            let heuristic = if c.heuristic { " [heuristic]" } else { "" };
            let _ = writeln!(
                out,
                "{:<18} {:<12} {:<42} {:<19} {}{}",
                c.id,
                c.status(),
                witness,
                margin,
                c.note,
                heuristic
            );
        }
        let d = &self.diagnostics;
        let opt = |v: Option<f64>| v.map_or_else(|| "-".into(), fmt_num);
        let _ = writeln!(
            out,
            "theta = {}, u1 = {}, u2 = {}, alpha = {}",
            opt(d.theta),
            opt(d.u1),
            opt(d.u2),
            opt(d.alpha)
        );
        let _ = writeln!(
            out,
            "grid: {} knots, wedge margin {}; points evaluated {}, skipped {}",
            d.grid_knots.len(),
            opt(d.wedge_margin),
            d.evaluated_points,
            d.skipped_points
        );
        for note in &d.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}

/// Twelve significant digits, locale independent.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        format!("{x}")
    }
}

/// One evaluated grid point of an inequality.
#[derive(Debug, Clone, Copy)]
struct PointEval {
    point: [f64; 2],
    slack: f64,
    value: f64,
}

/// Picks the smallest slack, ties broken by lexicographic point order.
fn worst_point(
    id: String,
    evals: Vec<(usize, [f64; 2], Result<PointEval>)>,
    describe: impl Fn(&PointEval) -> String,
    diagnostics: &mut Diagnostics,
) -> ConditionResult {
    let mut worst: Option<PointEval> = None;
    let mut skipped = 0;
    let total = evals.len();
    let mut first_error = None;
    for (_, point, res) in evals {
        match res {
            Ok(e) if e.slack.is_finite() => {
                let better = match &worst {
                    None => true,
                    Some(w) => {
                        e.slack < w.slack
                            || (e.slack == w.slack && lex_less(e.point, w.point))
                    }
                };
                if better {
                    worst = Some(e);
                }
            }
            Ok(e) => {
                skipped += 1;
                first_error.get_or_insert_with(|| {
                    format!("non-finite value {} at {:?}", e.value, point)
                });
            }
            Err(err) => {
                skipped += 1;
                first_error.get_or_insert_with(|| format!("{err} at {point:?}"));
            }
        }
    }
    diagnostics.evaluated_points += total - skipped;
    diagnostics.skipped_points += skipped;
    if let Some(msg) = &first_error {
        diagnostics
            .notes
            .push(format!("{id}: {skipped} point(s) skipped, first: {msg}"));
    }
    match worst {
        None if total == 0 => ConditionResult {
            id,
            pass: true,
            witness: None,
            margin: None,
            rectangle: None,
            inconclusive: false,
            heuristic: false,
            note: "no grid points (vacuous)".into(),
        },
        None => ConditionResult::inconclusive(id, "every grid point was skipped"),
        Some(w) => ConditionResult {
            note: describe(&w),
            id,
            pass: w.slack >= 0.0,
            witness: Some(w.point),
            margin: Some(w.slack),
            rectangle: None,
            inconclusive: false,
            heuristic: false,
        },
    }
}

fn lex_less(a: [f64; 2], b: [f64; 2]) -> bool {
    a[0] < b[0] || (a[0] == b[0] && a[1] < b[1])
}

/// Evaluates `f(x_own, x_other)` over the wedge pairs of `margin` in parallel.
fn eval_wedge<F>(pairs: &[(f64, f64)], margin: Margin, f: F) -> Vec<(usize, [f64; 2], Result<PointEval>)>
where
    F: Fn(f64, f64) -> Result<(f64, f64)> + Sync,
{
    pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(own, other))| {
            let (x1, x2) = margin.join(own, other);
            let point = [x1, x2];
            let res = f(own, other).map(|(value, slack)| PointEval {
                point,
                slack,
                value,
            });
            (k, point, res)
        })
        .collect()
}

/// Condition on `θ <= u₁ + u₂ <= 2θ` evaluated at `(x_L, x_L)`.
fn limit_sum_condition(
    id: &str,
    theta: f64,
    limits: [Result<HazardRatioLimit>; 2],
    xl: f64,
    tol: &Tolerances,
    diagnostics: &mut Diagnostics,
) -> ConditionResult {
    let mut values = [0.0; 2];
    for (k, lim) in limits.into_iter().enumerate() {
        match lim {
            Ok(HazardRatioLimit::Finite(v)) => values[k] = v,
            Ok(HazardRatioLimit::Divergent) | Err(Error::Divergent) => {
                diagnostics.set_limits(theta, None, None);
                return ConditionResult {
                    id: id.into(),
                    pass: false,
                    witness: Some([xl, xl]),
                    margin: None,
                    rectangle: None,
                    inconclusive: false,
                    heuristic: false,
                    note: format!("limit {} diverges, sum exceeds 2 theta", k + 1),
                };
            }
            Err(e) => {
                diagnostics.set_limits(theta, None, None);
                return ConditionResult::inconclusive(id, format!("limit {}: {e}", k + 1));
            }
        }
    }
    diagnostics.set_limits(theta, Some(values[0]), Some(values[1]));
    let sum = values[0] + values[1];
    let slack = tol.slack(theta, sum).min(tol.slack(sum, 2.0 * theta));
    ConditionResult {
        id: id.into(),
        pass: slack >= 0.0,
        witness: Some([xl, xl]),
        margin: Some(slack),
        rectangle: None,
        inconclusive: false,
        heuristic: false,
        note: format!("sum of limits {} vs theta {}", fmt_num(sum), fmt_num(theta)),
    }
}

/// Left side of the second necessary and sufficient condition,
/// `∂/∂x_o ln(-∂/∂x_i F̄_i(x_i ⊖ x_o))`, at `x_i > x_o`.
///
/// With `d = x_i ⊖ x_o` this equals
/// `[r_i(d) - r_i'(d)/r_i(d) + r₀'(d)/r₀(d)] · r₀(x_o)/r₀(d)`.
pub fn condition_ii_lhs(
    marginal: &MarginalModel,
    baseline: &BaselineModel,
    x_own: f64,
    x_other: f64,
) -> Result<f64> {
    if !(x_own > x_other) {
        return Err(Error::Domain {
            what: "x_i - x_o",
            value: x_own - x_other,
            expected: "> 0",
        });
    }
    let d = baseline.difference(x_own, x_other)?;
    let r = marginal.hazard(d)?;
    if !(r > 0.0) {
        return Err(Error::Domain {
            what: "marginal hazard",
            value: r,
            expected: "> 0 for the log-derivative",
        });
    }
    let rp = marginal.hazard_derivative(d)?;
    let r0d = baseline.hazard(d)?;
    let r0pd = baseline.hazard_derivative(d)?;
    let r0o = baseline.hazard(x_other)?;
    Ok((r - rp / r + r0pd / r0d) * r0o / r0d)
}

/// Diagonal limit estimate at the diagonal point `x`:
/// `f_i(d) |∂d/∂R₀(x_o)|` with `x_o = x`, `R₀(x_i) = R₀(x) + eps`.
fn diagonal_limit_at(marginal: &MarginalModel, baseline: &BaselineModel, x: f64, eps: f64) -> Result<f64> {
    let r = baseline.cumulative_hazard(x)?;
    let xi = baseline.inverse_cumulative_hazard(r + eps)?;
    let d = baseline.difference(xi, x)?;
    let h = baseline.step_at(x).min(1e-3 * (xi - x));
    let d_plus = baseline.difference(xi, x + h)?;
    let d_minus = baseline.difference(xi, (x - h).max(baseline.left_endpoint()))?;
    let width = x - (x - h).max(baseline.left_endpoint()) + h;
    let dd_dx = (d_plus - d_minus) / width;
    Ok(marginal.density(d)? * dd_dx.abs() / baseline.hazard(x)?)
}

fn diagonal_constancy(
    id: String,
    marginal: &MarginalModel,
    baseline: &BaselineModel,
    grid: &GridSpec,
    tol: &Tolerances,
    diagnostics: &mut Diagnostics,
) -> ConditionResult {
    const OFFSET: f64 = 1e-3;
    let xl = baseline.left_endpoint();
    let knots: Vec<f64> = grid.knots.iter().copied().filter(|&k| k > xl).collect();
    let values: Vec<(f64, Result<f64>)> = knots
        .par_iter()
        .map(|&x| (x, diagonal_limit_at(marginal, baseline, x, OFFSET)))
        .collect();
    let ok: Vec<(f64, f64)> = values
        .iter()
        .filter_map(|(x, v)| match v {
            Ok(v) if v.is_finite() => Some((*x, *v)),
            _ => None,
        })
        .collect();
    let skipped = values.len() - ok.len();
    diagnostics.evaluated_points += ok.len();
    diagnostics.skipped_points += skipped;
    if ok.is_empty() {
        return if values.is_empty() {
            ConditionResult {
                id,
                pass: true,
                witness: None,
                margin: None,
                rectangle: None,
                inconclusive: false,
                heuristic: false,
                note: "no diagonal points (vacuous)".into(),
            }
        } else {
            ConditionResult::inconclusive(id, "every diagonal point was skipped")
        };
    }
    let mean = ok.iter().map(|p| p.1).sum::<f64>() / ok.len() as f64;
    let scale = mean.abs().max(f64::MIN_POSITIVE);
    let (wx, dev) = ok
        .iter()
        .map(|&(x, v)| (x, (v - mean).abs() / scale))
        .fold((ok[0].0, -1.0), |acc, (x, d)| if d > acc.1 { (x, d) } else { acc });
    let slack = tol.diagonal - 2.0 * dev;
    let pass = slack >= 0.0;
    ConditionResult {
        id,
        pass,
        witness: Some([wx, wx]),
        margin: Some(slack),
        rectangle: None,
        inconclusive: !pass,
        heuristic: false,
        note: format!("diagonal limit mean {}, max relative deviation {}", fmt_num(mean), fmt_num(dev)),
    }
}

/// Conditions (i) and (ii) of the characterization by marginal survival
/// functions, plus the diagonal-constancy diagnostic.
pub fn check_theorem2(model: &GeneralBivariateModel, grid: &GridSpec, tol: &Tolerances) -> ValidationReport {
    let baseline = model.baseline();
    let theta = model.theta();
    let mut diagnostics = Diagnostics::for_grid(grid, tol, theta);
    let xl = baseline.left_endpoint();
    let limits = [Margin::First, Margin::Second].map(|m| limit_hazard_ratio(model.marginal(m), baseline));
    let mut conditions = vec![limit_sum_condition("thm2-i", theta, limits, xl, tol, &mut diagnostics)];
    let pairs = match grid.wedge_pairs(baseline) {
        Ok(p) => p,
        Err(e) => {
            conditions.push(ConditionResult::inconclusive("thm2-ii", e.to_string()));
            return ValidationReport::new(conditions, diagnostics);
        }
    };
    for margin in [Margin::First, Margin::Second] {
        let marginal = model.marginal(margin);
        let evals = eval_wedge(&pairs, margin, |own, other| {
            let lhs = condition_ii_lhs(marginal, baseline, own, other)?;
            let rhs = theta * baseline.hazard(other)?;
            Ok((lhs, tol.slack(lhs, rhs)))
        });
        conditions.push(worst_point(
            format!("thm2-ii-{}", margin.index()),
            evals,
            |w| format!("lhs {} vs theta r0", fmt_num(w.value)),
            &mut diagnostics,
        ));
    }
    for margin in [Margin::First, Margin::Second] {
        conditions.push(diagonal_constancy(
            format!("thm2-diag-{}", margin.index()),
            model.marginal(margin),
            baseline,
            grid,
            tol,
            &mut diagnostics,
        ));
    }
    ValidationReport::new(conditions, diagnostics)
}

/// `q = r_i(d) r₀(x_o)/r₀(d)`, the magnitude of the cross-derivative term.
fn cross_term(marginal: &MarginalModel, baseline: &BaselineModel, own: f64, other: f64) -> Result<f64> {
    let d = baseline.difference(own, other)?;
    Ok(marginal.hazard(d)? * baseline.hazard(other)? / baseline.hazard(d)?)
}

#[allow(clippy::too_many_arguments)]
fn bound_condition(
    id: String,
    marginal: &MarginalModel,
    baseline: &BaselineModel,
    theta: f64,
    margin: Margin,
    pairs: &[(f64, f64)],
    tol: &Tolerances,
    with_lower: bool,
    diagnostics: &mut Diagnostics,
) -> ConditionResult {
    let evals = eval_wedge(pairs, margin, |own, other| {
        let q = cross_term(marginal, baseline, own, other)?;
        let upper = tol.slack(q, theta * baseline.hazard(other)?);
        let slack = if with_lower { upper.min(tol.slack(0.0, q)) } else { upper };
        Ok((q, slack))
    });
    worst_point(id, evals, |w| format!("cross term {} vs [0, theta r0]", fmt_num(w.value)), diagnostics)
}

/// Tail probes for the divergence of `∫ r_i`: `R_i` at `R₀⁻¹(8·2^k)`.
fn divergence_probe(marginal: &MarginalModel, baseline: &BaselineModel, id: String) -> ConditionResult {
    const THRESHOLD: f64 = 30.0;
    let mut values = Vec::new();
    for k in 0..=10 {
        let x = match baseline.inverse_cumulative_hazard(8.0 * 2f64.powi(k)) {
            Ok(x) if x.is_finite() => x,
            _ => break,
        };
        match marginal.cumulative_hazard(x) {
            Ok(r) => values.push(r),
            Err(e) => {
                let mut c = ConditionResult::inconclusive(id, format!("tail probe failed: {e}"));
                c.heuristic = true;
                return c;
            }
        }
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let increasing = values.len() >= 2 && values.windows(2).all(|w| w[1] > w[0]);
    let pass = max > THRESHOLD && increasing;
    ConditionResult {
        id,
        pass,
        witness: None,
        margin: Some(max - THRESHOLD),
        rectangle: None,
        inconclusive: !pass,
        heuristic: true,
        note: if pass {
            format!("cumulative hazard reaches {} and keeps growing", fmt_num(max))
        } else {
            format!(
                "cumulative hazard reaches only {}{}; divergence undecided",
                fmt_num(max),
                if increasing { "" } else { " and stops growing" }
            )
        },
    }
}

/// Density-positivity expression `A(θ r₀(x_o) + B) - ∂A/∂x_o` with
/// `A = r_i(d) r₀(x_i)/r₀(d)` and `B = -r_i(d) r₀(x_o)/r₀(d)`.
fn condition_iii_value(
    marginal: &MarginalModel,
    baseline: &BaselineModel,
    theta: f64,
    own: f64,
    other: f64,
) -> Result<(f64, f64)> {
    let d = baseline.difference(own, other)?;
    let r = marginal.hazard(d)?;
    let rp = marginal.hazard_derivative(d)?;
    let r0d = baseline.hazard(d)?;
    let r0pd = baseline.hazard_derivative(d)?;
    let r0i = baseline.hazard(own)?;
    let r0o = baseline.hazard(other)?;
    let a = r * r0i / r0d;
    let b = -r * r0o / r0d;
    let da = -r0i * r0o * (rp / (r0d * r0d) - r * r0pd / (r0d * r0d * r0d));
    let first = a * (theta * r0o + b);
    Ok((first - da, first.abs() + da.abs()))
}

/// The four conditions qualifying `r₁, r₂` as marginal hazard rates over
/// `baseline` with parameter `theta`. Condition (ii) is a heuristic and can
/// only pass or be inconclusive.
pub fn check_theorem5(
    r1: &MarginalModel,
    r2: &MarginalModel,
    baseline: &BaselineModel,
    theta: f64,
    grid: &GridSpec,
    tol: &Tolerances,
) -> Result<ValidationReport> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Model(format!("theta must be > 0, got {theta}")));
    }
    let mut diagnostics = Diagnostics::for_grid(grid, tol, theta);
    let pairs = grid.wedge_pairs(baseline)?;
    let marginals = [r1, r2];
    let mut conditions = Vec::new();
    for (margin, marginal) in [Margin::First, Margin::Second].into_iter().zip(marginals) {
        conditions.push(bound_condition(
            format!("thm5-i-{}", margin.index()),
            marginal,
            baseline,
            theta,
            margin,
            &pairs,
            tol,
            true,
            &mut diagnostics,
        ));
    }
    for (margin, marginal) in [Margin::First, Margin::Second].into_iter().zip(marginals) {
        conditions.push(divergence_probe(marginal, baseline, format!("thm5-ii-{}", margin.index())));
    }
    for (margin, marginal) in [Margin::First, Margin::Second].into_iter().zip(marginals) {
        let evals = eval_wedge(&pairs, margin, |own, other| {
            let (value, scale) = condition_iii_value(marginal, baseline, theta, own, other)?;
            Ok((value, value + tol.allowance(scale)))
        });
        conditions.push(worst_point(
            format!("thm5-iii-{}", margin.index()),
            evals,
            |w| format!("density expression {}", fmt_num(w.value)),
            &mut diagnostics,
        ));
    }
    let limits = [r1, r2].map(|m| limit_hazard_ratio(m, baseline));
    conditions.push(limit_sum_condition(
        "thm5-iv",
        theta,
        limits,
        baseline.left_endpoint(),
        tol,
        &mut diagnostics,
    ));
    Ok(ValidationReport::new(conditions, diagnostics))
}

/// Upper bound `r_i(d) |∂d/∂x_o| <= θ r₀(x_o)` implied by non-negative
/// hazard-gradient components, for the model's own marginals.
pub fn check_hazard_bound<M: BivariateSurvival + ?Sized>(
    model: &M,
    grid: &GridSpec,
    tol: &Tolerances,
) -> Result<ValidationReport> {
    let baseline = model.baseline();
    let theta = model.theta();
    let mut diagnostics = Diagnostics::for_grid(grid, tol, theta);
    let pairs = grid.wedge_pairs(baseline)?;
    let conditions = [Margin::First, Margin::Second]
        .into_iter()
        .map(|m| {
            bound_condition(
                format!("hazard-bound-{}", m.index()),
                model.marginal(m),
                baseline,
                theta,
                m,
                &pairs,
                tol,
                false,
                &mut diagnostics,
            )
        })
        .collect();
    Ok(ValidationReport::new(conditions, diagnostics))
}

/// Maximum residual of an identity over grid points.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub max_residual: f64,
    /// `[x1, x2, t]` attaining the maximum.
    pub witness: Option<[f64; 3]>,
    pub evaluated: usize,
    pub skipped: usize,
}

fn residual_report(results: Vec<([f64; 3], Result<f64>)>) -> ResidualReport {
    let mut report = ResidualReport {
        max_residual: 0.0,
        witness: None,
        evaluated: 0,
        skipped: 0,
    };
    for (point, res) in results {
        match res {
            Ok(r) if r.is_finite() => {
                report.evaluated += 1;
                if report.witness.is_none() || r > report.max_residual {
                    report.max_residual = r;
                    report.witness = Some(point);
                }
            }
            _ => report.skipped += 1,
        }
    }
    report
}

fn knot_triples(grid: &GridSpec, baseline: &BaselineModel, t_knots: &[f64], off_diagonal: bool) -> Vec<[f64; 3]> {
    let xl = baseline.left_endpoint();
    let knots: Vec<f64> = grid.knots.iter().copied().filter(|&k| k >= xl).collect();
    let mut out = Vec::new();
    for &x1 in &knots {
        for &x2 in &knots {
            if off_diagonal && x1 == x2 {
                continue;
            }
            for &t in t_knots {
                out.push([x1, x2, t]);
            }
        }
    }
    out
}

/// `max |R(x₁⊕t, x₂⊕t) - R(x₁, x₂) - θ R₀(t)|` over grid × `t_knots`.
pub fn check_functional_equation<M: BivariateSurvival + ?Sized>(
    model: &M,
    grid: &GridSpec,
    t_knots: &[f64],
) -> ResidualReport {
    let b = model.baseline();
    let theta = model.theta();
    let results = knot_triples(grid, b, t_knots, false)
        .into_par_iter()
        .map(|p| {
            let [x1, x2, t] = p;
            let res = (|| {
                let shifted = model.cumulative_hazard(b.combine(x1, t)?, b.combine(x2, t)?)?;
                Ok((shifted - model.cumulative_hazard(x1, x2)? - theta * b.cumulative_hazard(t)?).abs())
            })();
            (p, res)
        })
        .collect();
    residual_report(results)
}

/// Hazard gradient `(r₁(x₁,x₂), r₂(x₁,x₂))` from the marginal hazards.
///
/// For `x_i > x_o` with `d = x_i ⊖ x_o`: `r_i = r_i(d) r₀(x_i)/r₀(d)` and
/// `r_o = -r_i(d) r₀(x_o)/r₀(d) + θ r₀(x_o)`.
pub fn hazard_gradient<M: BivariateSurvival + ?Sized>(model: &M, x1: f64, x2: f64) -> Result<(f64, f64)> {
    if x1 == x2 {
        return Err(Error::Domain {
            what: "x1 - x2",
            value: 0.0,
            expected: "off the diagonal",
        });
    }
    let b = model.baseline();
    let (big, hi, lo) = if x1 > x2 {
        (Margin::First, x1, x2)
    } else {
        (Margin::Second, x2, x1)
    };
    let d = b.difference(hi, lo)?;
    let ratio = model.marginal(big).hazard(d)? / b.hazard(d)?;
    let r_hi = ratio * b.hazard(hi)?;
    let r_lo = (model.theta() - ratio) * b.hazard(lo)?;
    Ok(if big == Margin::First { (r_hi, r_lo) } else { (r_lo, r_hi) })
}

/// Relative residual of `Σ r_i(x₁⊕t, x₂⊕t) ∂(x_i⊕t)/∂t = θ r₀(t)` over
/// off-diagonal grid points × `t_knots`.
pub fn check_hazard_gradient_identity<M: BivariateSurvival + ?Sized>(
    model: &M,
    grid: &GridSpec,
    t_knots: &[f64],
) -> ResidualReport {
    let b = model.baseline();
    let theta = model.theta();
    let results = knot_triples(grid, b, t_knots, true)
        .into_par_iter()
        .map(|p| {
            let [x1, x2, t] = p;
            let res = (|| {
                let y1 = b.combine(x1, t)?;
                let y2 = b.combine(x2, t)?;
                let (g1, g2) = hazard_gradient(model, y1, y2)?;
                let r0t = b.hazard(t)?;
                let sum = g1 * r0t / b.hazard(y1)? + g2 * r0t / b.hazard(y2)?;
                Ok((sum - theta * r0t).abs() / (theta * r0t))
            })();
            (p, res)
        })
        .collect();
    residual_report(results)
}

/// Every grid rectangle `(a₁,b₁]×(a₂,b₂]` must carry probability
/// `>= -tol.rectangle`; the most negative one is the witness.
pub fn check_two_increasing<M: BivariateSurvival + ?Sized>(
    model: &M,
    grid: &GridSpec,
    tol: &Tolerances,
) -> ValidationReport {
    let mut diagnostics = Diagnostics::for_grid(grid, tol, model.theta());
    let k = &grid.knots;
    let rows: Vec<Result<Vec<f64>>> = k
        .par_iter()
        .map(|&a| k.iter().map(|&b| model.survival(a, b)).collect())
        .collect();
    let s = match rows.into_iter().collect::<Result<Vec<_>>>() {
        Ok(s) => s,
        Err(e) => {
            let c = ConditionResult::inconclusive("two-increasing", format!("survival evaluation failed: {e}"));
            return ValidationReport::new(vec![c], diagnostics);
        }
    };
    let n = k.len();
    let mut worst: Option<(f64, [usize; 4])> = None;
    let mut count = 0;
    for i1 in 0..n {
        for j1 in i1 + 1..n {
            for i2 in 0..n {
                for j2 in i2 + 1..n {
                    count += 1;
                    let p = s[i1][i2] - s[j1][i2] - s[i1][j2] + s[j1][j2];
                    if worst.is_none_or(|(w, _)| p < w) {
                        worst = Some((p, [i1, j1, i2, j2]));
                    }
                }
            }
        }
    }
    diagnostics.evaluated_points += count;
    let condition = match worst {
        None => ConditionResult {
            id: "two-increasing".into(),
            pass: true,
            witness: None,
            margin: None,
            rectangle: None,
            inconclusive: false,
            heuristic: false,
            note: "no grid rectangles (vacuous)".into(),
        },
        Some((p, [i1, j1, i2, j2])) => {
            let slack = p + tol.rectangle;
            ConditionResult {
                id: "two-increasing".into(),
                pass: slack >= 0.0,
                witness: Some([k[i1], k[i2]]),
                margin: Some(slack),
                rectangle: Some([k[i1], k[j1], k[i2], k[j2]]),
                inconclusive: false,
                heuristic: false,
                note: format!("minimum rectangle probability {}", fmt_num(p)),
            }
        }
    };
    ValidationReport::new(vec![condition], diagnostics)
}

/// Survival rebuilt from the hazard gradient along the path
/// `(x_L, x_L) → (x₁, x_L) → (x₁, x₂)`.
///
/// Both legs are integrated in `w = R₀(u)`, where the integrand
/// `r_i / r₀` stays bounded; the second leg is split where it crosses the
/// diagonal.
pub fn reconstruct_survival_from_gradient<M: BivariateSurvival + ?Sized>(
    model: &M,
    x1: f64,
    x2: f64,
) -> Result<f64> {
    let b = model.baseline();
    let xl = b.left_endpoint();
    for x in [x1, x2] {
        if !(x >= xl && x.is_finite()) {
            return Err(Error::Domain {
                what: "x",
                value: x,
                expected: "finite and >= left endpoint",
            });
        }
    }
    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-12,
        max_intervals: 1000,
    };
    let mut failure: Option<Error> = None;
    // component `i` of the gradient at the path point, per unit of w
    let mut leg = |fixed: f64, moving_first: bool, lo: f64, hi: f64| -> Result<f64> {
        let mut integrand = |w: f64| -> f64 {
            let eval = || -> Result<f64> {
                let mut u = b.inverse_cumulative_hazard(w)?;
                if !moving_first && u == fixed {
                    u = if w < b.cumulative_hazard(fixed)? { u.next_down() } else { u.next_up() };
                }
                let (p1, p2) = if moving_first { (u, fixed) } else { (fixed, u) };
                let g = hazard_gradient(model, p1, p2)?;
                let r = if moving_first { g.0 } else { g.1 };
                Ok(r / b.hazard(u)?)
            };
            match eval() {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        };
        numeric::integrate(&mut integrand, lo, hi, opts)
    };
    let w1 = b.cumulative_hazard(x1)?;
    let w2 = b.cumulative_hazard(x2)?;
    let mut total = leg(xl, true, 0.0, w1)?;
    if w1 > 0.0 && w1 < w2 {
        total += leg(x1, false, 0.0, w1)?;
        total += leg(x1, false, w1, w2)?;
    } else {
        total += leg(x1, false, 0.0, w2)?;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((-total).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bivariate::PHBivariateModel;
    use approx::assert_relative_eq;

    fn lfr_exp() -> GeneralBivariateModel {
        let m = MarginalModel::linear_failure_rate(1.5).unwrap();
        GeneralBivariateModel::new(BaselineModel::exponential(), m.clone(), m, 3.0).unwrap()
    }

    fn ph(b: BaselineModel) -> PHBivariateModel {
        PHBivariateModel::new(b, 1.0, 1.0, 1.0).unwrap()
    }

    fn grid(b: &BaselineModel) -> GridSpec {
        GridSpec::default_for(b).unwrap()
    }

    #[test]
    fn grid_invariants() {
        let b = BaselineModel::exponential();
        let g = grid(&b);
        assert_eq!(g.knots().len(), 16);
        assert_relative_eq!(g.knots()[0], 0.05, max_relative = 1e-15);
        assert!(GridSpec::log_spaced(&b, 7, 0.05, 8.0, 0.02).is_err());
        assert!(GridSpec::from_knots(vec![1.0, 1.0], 0.0).is_err());
        assert!(GridSpec::from_knots(vec![1.0], 0.0).is_ok());
        let pairs = g.wedge_pairs(&b).unwrap();
        assert_eq!(pairs.len(), 16 * 15 / 2);
    }

    #[test]
    fn lfr_condition_ii_value() {
        let m = MarginalModel::linear_failure_rate(1.5).unwrap();
        let lhs = condition_ii_lhs(&m, &BaselineModel::exponential(), 5.0, 3.0).unwrap();
        // 1 + 2ad - 2a/(1 + 2ad) with d = 2
        assert_relative_eq!(lhs, 7.0 - 3.0 / 7.0, max_relative = 1e-14);
        assert!(lhs > 3.0);
    }

    #[test]
    fn lfr_fails_theorem2() {
        let r = check_theorem2(&lfr_exp(), &grid(&BaselineModel::exponential()), &Tolerances::default());
        assert_eq!(r.verdict, Verdict::Invalid);
        let c1 = r.condition("thm2-i").unwrap();
        assert!(!c1.pass && !c1.inconclusive);
        assert!(!r.condition("thm2-ii-1").unwrap().pass);
        assert!(!r.condition("thm2-ii-2").unwrap().pass);
        assert!((r.diagnostics.u1.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ph_passes_theorem2_on_every_baseline() {
        for b in [
            BaselineModel::exponential(),
            BaselineModel::weibull(0.5).unwrap(),
            BaselineModel::weibull(2.0).unwrap(),
            BaselineModel::pareto(),
        ] {
            let r = check_theorem2(&ph(b.clone()).to_general(), &grid(&b), &Tolerances::default());
            assert_eq!(r.verdict, Verdict::Valid, "{b}: {}", r.render_table());
            assert_eq!(r.summary, "no violation found on grid");
            assert!(r.conditions.iter().all(|c| c.margin.is_none_or(|m| m >= 0.0)));
        }
    }

    #[test]
    fn forced_quarter_deltas_fail_condition_i() {
        let b = BaselineModel::exponential();
        let m = MarginalModel::proportional_hazard(b.clone(), 0.75).unwrap();
        let g = GeneralBivariateModel::new(b.clone(), m.clone(), m, 3.0).unwrap();
        let r = check_theorem2(&g, &grid(&b), &Tolerances::default());
        assert_eq!(r.verdict, Verdict::Invalid);
        let c = r.condition("thm2-i").unwrap();
        assert!(!c.pass);
        assert_eq!(c.witness, Some([0.0, 0.0]));
    }

    #[test]
    fn bphc_weibull_passes_theorem5() {
        let b = BaselineModel::weibull(2.0).unwrap();
        let m = MarginalModel::proportional_hazard(b.clone(), 2.0).unwrap();
        let r = check_theorem5(&m, &m, &b, 3.0, &grid(&b), &Tolerances::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Valid, "{}", r.render_table());
        assert!(r.condition("thm5-ii-1").unwrap().heuristic);
    }

    #[test]
    fn lfr_fails_theorem5_bound() {
        let b = BaselineModel::exponential();
        let m = MarginalModel::linear_failure_rate(1.5).unwrap();
        let q = cross_term(&m, &b, 5.0, 3.0).unwrap();
        assert_relative_eq!(q, 7.0, max_relative = 1e-14);
        let r = check_theorem5(&m, &m, &b, 3.0, &grid(&b), &Tolerances::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Invalid);
        assert!(!r.condition("thm5-i-1").unwrap().pass);
        let bound = check_hazard_bound(&lfr_exp(), &grid(&b), &Tolerances::default()).unwrap();
        assert_eq!(bound.verdict, Verdict::Invalid);
    }

    #[test]
    fn independence_boundary_passes_theorem5() {
        let b = BaselineModel::exponential();
        let m = MarginalModel::proportional_hazard(b.clone(), 1.5).unwrap();
        let r = check_theorem5(&m, &m, &b, 3.0, &grid(&b), &Tolerances::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Valid, "{}", r.render_table());
        assert_relative_eq!(r.diagnostics.alpha.unwrap(), 1.0);
    }

    #[test]
    fn truncated_hazard_is_inconclusive() {
        let b = BaselineModel::exponential();
        let table = crate::hazard_curve::HazardTable::new(vec![0.0, 10.0, 12.0], vec![1.0, 1.0, 0.0]).unwrap();
        let curve = crate::hazard_curve::HazardCurve::from_table("truncated", table).unwrap();
        let m = MarginalModel::from_hazard(curve);
        let r = check_theorem5(&m, &m, &b, 2.0, &grid(&b), &Tolerances::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive, "{}", r.render_table());
        let c = r.condition("thm5-ii-1").unwrap();
        assert!(c.inconclusive && c.heuristic);
    }

    #[test]
    fn functional_equation_examples() {
        let w = BaselineModel::weibull(2.0).unwrap();
        let t = default_t_knots(&w).unwrap();
        assert!(check_functional_equation(&ph(w.clone()), &grid(&w), &t).max_residual < 1e-9);
        let e = BaselineModel::exponential();
        let fe = check_functional_equation(&lfr_exp(), &grid(&e), &default_t_knots(&e).unwrap());
        assert!(fe.max_residual < 1e-9, "{}", fe.max_residual);
        let zero = check_functional_equation(&ph(w.clone()).to_general(), &grid(&w), &[0.0]);
        assert_eq!(zero.max_residual, 0.0);
    }

    #[test]
    fn gradient_examples() {
        let (r1, r2) = hazard_gradient(&ph(BaselineModel::exponential()), 2.0, 1.0).unwrap();
        assert_relative_eq!(r1, 2.0, max_relative = 1e-15);
        assert_relative_eq!(r2, 1.0, max_relative = 1e-15);
        let (p1, p2) = hazard_gradient(&ph(BaselineModel::pareto()), 4.0, 2.0).unwrap();
        assert_relative_eq!(p1, 0.5, max_relative = 1e-15);
        assert_relative_eq!(p2, 0.5, max_relative = 1e-15);
        assert!(hazard_gradient(&ph(BaselineModel::pareto()), 2.0, 2.0).is_err());
    }

    #[test]
    fn gradient_identity_examples() {
        let e = BaselineModel::exponential();
        let r = check_hazard_gradient_identity(&ph(e.clone()), &grid(&e), &default_t_knots(&e).unwrap());
        assert!(r.max_residual < 1e-14);
        let w = BaselineModel::weibull(2.0).unwrap();
        let r = check_hazard_gradient_identity(&ph(w.clone()), &grid(&w), &default_t_knots(&w).unwrap());
        assert!(r.max_residual < 1e-8, "{}", r.max_residual);
    }

    #[test]
    fn two_increasing_examples() {
        let e = BaselineModel::exponential();
        let g = GridSpec::from_knots(vec![1.0, 2.0, 3.0, 5.0], 0.0).unwrap();
        let r = check_two_increasing(&lfr_exp(), &g, &Tolerances::default());
        assert_eq!(r.verdict, Verdict::Invalid);
        let c = &r.conditions[0];
        assert_eq!(c.rectangle, Some([1.0, 2.0, 3.0, 5.0]));
        assert!((c.margin.unwrap() - 1e-9 + 1.8677e-4).abs() < 1e-7);
        assert_eq!(check_two_increasing(&ph(e.clone()), &grid(&e), &Tolerances::default()).verdict, Verdict::Valid);
        let single = GridSpec::from_knots(vec![1.0], 0.0).unwrap();
        assert_eq!(check_two_increasing(&lfr_exp(), &single, &Tolerances::default()).verdict, Verdict::Valid);
    }

    #[test]
    fn reconstruction_examples() {
        let m = ph(BaselineModel::exponential());
        assert_relative_eq!(reconstruct_survival_from_gradient(&m, 1.0, 2.0).unwrap(), (-5f64).exp(), max_relative = 1e-9);
        assert_eq!(reconstruct_survival_from_gradient(&m, 0.0, 0.0).unwrap(), 1.0);
        let w = ph(BaselineModel::weibull(2.0).unwrap());
        assert_relative_eq!(reconstruct_survival_from_gradient(&w, 2.0, 1.0).unwrap(), (-9f64).exp(), max_relative = 1e-6);
        let g = lfr_exp();
        let direct = g.survival(1.0, 3.0).unwrap();
        assert_relative_eq!(reconstruct_survival_from_gradient(&g, 1.0, 3.0).unwrap(), direct, max_relative = 1e-6);
    }

    #[test]
    fn report_merge_and_json() {
        let e = BaselineModel::exponential();
        let a = check_theorem2(&lfr_exp(), &grid(&e), &Tolerances::default());
        let b = check_two_increasing(&lfr_exp(), &grid(&e), &Tolerances::default());
        let m = a.merge(b);
        assert_eq!(m.verdict, Verdict::Invalid);
        assert!(m.condition("two-increasing").is_some());
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"verdict\":\"Invalid\""));
        assert!(m.render_table().contains("thm2-ii-1"));
    }
}
