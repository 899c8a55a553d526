use std::fmt::Write as _;

use semibiv::bivariate::rectangle_probability;
use semibiv::validity::{
    check_functional_equation, check_theorem2, check_theorem5, check_two_increasing, condition_ii_lhs,
    default_t_knots, fmt_num, hazard_gradient,
};
use semibiv::{
    sample_ph, BaselineModel, BivariateSurvival, GeneralBivariateModel, GeneralSampler, GridSpec, Margin,
    MarginalModel, SampleBatch, Tolerances, ValidationReport, Verdict,
};

use crate::config::{Model, ModelConfig};
use crate::output::{csv_field, Format, Record};
use crate::{exit, CliError};

/// Rendered output plus the process exit code.
pub struct Outcome {
    pub text: String,
    pub code: u8,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self { text, code: exit::OK }
    }
}

pub fn eval(cfg: &ModelConfig, x1: f64, x2: f64, format: Format) -> Result<Outcome, CliError> {
    let m = cfg.model.survival_model();
    let survival = m.survival(x1, x2)?;
    let mut rec = Record::new().num("x1", x1).num("x2", x2).num("survival", survival);
    if x1 == x2 {
        rec = rec.opt("ac_density", None).opt("r1", None).opt("r2", None).text("note", "diagonal");
    } else {
        let (density, note) = match m.ac_density(x1, x2) {
            Ok(d) => (Some(d), String::new()),
            Err(e) => (None, e.to_string()),
        };
        let (r1, r2) = hazard_gradient(m, x1, x2)?;
        rec = rec.opt("ac_density", density).num("r1", r1).num("r2", r2).text("note", note);
    }
    Ok(Outcome::ok(rec.render(format)))
}

/// Exit 3 when the probability is negative beyond the rectangle tolerance.
pub fn rect(cfg: &ModelConfig, r: [f64; 4], format: Format) -> Result<Outcome, CliError> {
    let p = rectangle_probability(cfg.model.survival_model(), r[0], r[1], r[2], r[3])?;
    let ok = p >= -cfg.tolerances.rectangle;
    let rec = Record::new()
        .num("a1", r[0])
        .num("b1", r[1])
        .num("a2", r[2])
        .num("b2", r[3])
        .num("probability", p)
        .flag("non_negative", ok);
    Ok(Outcome {
        text: rec.render(format),
        code: if ok { exit::OK } else { exit::INVALID },
    })
}

pub fn validation_report(cfg: &ModelConfig) -> Result<ValidationReport, CliError> {
    let g = cfg.model.general();
    let b = g.baseline();
    let t2 = check_theorem2(&g, &cfg.grid, &cfg.tolerances);
    let t5 = check_theorem5(
        g.marginal(Margin::First),
        g.marginal(Margin::Second),
        b,
        g.theta(),
        &cfg.grid,
        &cfg.tolerances,
    )?;
    let two = check_two_increasing(cfg.model.survival_model(), &cfg.grid, &cfg.tolerances);
    Ok(t2.merge(t5).merge(two))
}

pub fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Valid => exit::OK,
        Verdict::Invalid => exit::INVALID,
        Verdict::Inconclusive => exit::INCONCLUSIVE,
    }
}

pub fn render_report(report: &ValidationReport, format: Format) -> Result<String, CliError> {
    Ok(match format {
        Format::Table => report.render_table(),
        Format::Json => report_json(report)?,
        Format::Csv => {
            let mut out = String::from("condition,status,witness_x1,witness_x2,a1,b1,a2,b2,margin,heuristic,note\n");
            let num = |x: Option<f64>| x.map_or_else(String::new, fmt_num);
            for c in &report.conditions {
                let status = if c.inconclusive {
                    "inconclusive"
                } else if c.pass {
                    "pass"
                } else {
                    "fail"
                };
                let w = c.witness.map_or([None, None], |w| [Some(w[0]), Some(w[1])]);
                let r = c.rectangle.map_or([None; 4], |r| r.map(Some));
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    c.id,
                    status,
                    num(w[0]),
                    num(w[1]),
                    num(r[0]),
                    num(r[1]),
                    num(r[2]),
                    num(r[3]),
                    num(c.margin),
                    c.heuristic,
                    csv_field(&c.note)
                );
            }
            out
        }
    })
}

pub fn report_json(report: &ValidationReport) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| CliError::Usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Exit 3 when the residual reaches `1e-9`.
pub fn check_fe(cfg: &ModelConfig, format: Format) -> Result<Outcome, CliError> {
    let r = check_functional_equation(cfg.model.survival_model(), &cfg.grid, &cfg.t_knots);
    let ok = r.evaluated > 0 && r.max_residual < FE_TOLERANCE;
    let w = r.witness;
    let rec = Record::new()
        .num("max_residual", r.max_residual)
        .opt("witness_x1", w.map(|w| w[0]))
        .opt("witness_x2", w.map(|w| w[1]))
        .opt("witness_t", w.map(|w| w[2]))
        .num("evaluated", r.evaluated as f64)
        .num("skipped", r.skipped as f64)
        .flag("holds", ok);
    Ok(Outcome {
        text: rec.render(format),
        code: if ok { exit::OK } else { exit::INVALID },
    })
}

const FE_TOLERANCE: f64 = 1e-9;

/// Exit 3 when `α` falls outside `[0, 1]`; the values are printed either way.
pub fn decompose(cfg: &ModelConfig, format: Format) -> Result<Outcome, CliError> {
    let d = cfg.model.survival_model().decompose()?;
    let rec = Record::new()
        .num("theta", d.theta)
        .num("u1", d.u1)
        .num("u2", d.u2)
        .num("alpha", d.alpha)
        .num("singular_mass", d.singular_mass)
        .flag("valid", d.is_valid());
    Ok(Outcome {
        text: rec.render(format),
        code: if d.is_valid() { exit::OK } else { exit::INVALID },
    })
}

pub fn sample(cfg: &ModelConfig, n: usize, seed: u64) -> Result<SampleBatch, CliError> {
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    Ok(match &cfg.model {
        Model::Ph(m) => sample_ph(m, n, seed)?,
        Model::General(m) => GeneralSampler::new(m, &cfg.grid)?.sample(n, seed)?,
    })
}

const CE_A: f64 = 1.5;
const CE_THETA: f64 = 3.0;

/// Linear-failure-rate marginals `1 + 1.5x` over an exponential baseline
/// with `θ = 3`: satisfies the functional equation yet is not a distribution.
pub fn counterexample(format: Format) -> Result<Outcome, CliError> {
    let b = BaselineModel::exponential();
    let m = MarginalModel::linear_failure_rate(CE_A)?;
    let g = GeneralBivariateModel::new(b.clone(), m.clone(), m.clone(), CE_THETA)?;

    let p = rectangle_probability(&g, 1.0, 2.0, 3.0, 5.0)?;
    let knots = GridSpec::from_knots(vec![1.0, 2.0, 3.0, 5.0], 0.0)?;
    let two = check_two_increasing(&g, &knots, &Tolerances::default());
    let witness = two.conditions.first().and_then(|c| c.rectangle);
    let lhs = condition_ii_lhs(&m, &b, 5.0, 3.0)?;
    let bound = CE_THETA * b.hazard(3.0)?;
    let d = g.decompose()?;
    let grid = GridSpec::default_for(&b)?;
    let fe = check_functional_equation(&g, &grid, &default_t_knots(&b)?);

    let reproduced = p < 0.0
        && two.verdict == Verdict::Invalid
        && lhs > bound
        && d.u1 + d.u2 < CE_THETA
        && fe.max_residual < FE_TOLERANCE;
    let witness_text = witness.map_or_else(
        || "none".to_string(),
        |r| format!("({}, {}]x({}, {}]", r[0], r[1], r[2], r[3]),
    );
    let rec = Record::new()
        .text("model", "r(x) = 1 + 1.5x for both margins, exponential baseline, theta = 3")
        .num("rectangle_probability", p)
        .text("two_increasing_witness", witness_text)
        .text("condition_ii_point", "(5, 3)")
        .num("condition_ii_lhs", lhs)
        .num("condition_ii_bound", bound)
        .num("u1_plus_u2", d.u1 + d.u2)
        .num("theta", CE_THETA)
        .num("alpha", d.alpha)
        .num("fe_max_residual", fe.max_residual)
        .flag("invalidity_reproduced", reproduced);
    Ok(Outcome {
        text: rec.render(format),
        code: if reproduced { exit::OK } else { exit::REPRODUCTION },
    })
}
