//! Independent reference formulas used as test oracles.
#![allow(dead_code)]

use semibiv::{BaselineModel, HazardCurve, HazardTable};

/// Cumulative hazard of the built-in baselines, written out directly.
pub fn r0(family: &str, shape: f64, x: f64) -> f64 {
    match family {
        "exponential" => x,
        "weibull" => x.powf(shape),
        "pareto" => x.ln(),
        _ => unreachable!(),
    }
}

/// MO-type PH survival `exp(-(θ₁+θ₃)R₀(x₁) - θ₂R₀(x₂))` for `x₁ >= x₂`, mirrored otherwise.
pub fn ph_survival(r_x1: f64, r_x2: f64, t: (f64, f64, f64)) -> f64 {
    let (t1, t2, t3) = t;
    if r_x1 >= r_x2 {
        (-(t1 + t3) * r_x1 - t2 * r_x2).exp()
    } else {
        (-t1 * r_x1 - (t2 + t3) * r_x2).exp()
    }
}

/// LFR-exponential general solution with `F̄_i(x) = exp(-x - a x²)`.
pub fn lfr_exp_survival(a: f64, theta: f64, x1: f64, x2: f64) -> f64 {
    let (hi, lo) = if x1 >= x2 { (x1, x2) } else { (x2, x1) };
    let d = hi - lo;
    (-(d + a * d * d) - theta * lo).exp()
}

/// Four-term inclusion-exclusion on a survival closure.
pub fn rectangle<F: Fn(f64, f64) -> f64>(s: F, a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
    s(a1, a2) - s(b1, a2) - s(a1, b2) + s(b1, b2)
}

/// Hazard `1 + x/2` starting at 0, from a table.
pub fn custom_linear_baseline() -> BaselineModel {
    let table = HazardTable::new(vec![0.0, 40.0], vec![1.0, 21.0]).unwrap();
    BaselineModel::custom(HazardCurve::from_table("linear", table).unwrap()).unwrap()
}

/// Same baseline through a closure, integrated numerically.
pub fn custom_smooth_baseline() -> BaselineModel {
    let curve = HazardCurve::from_fn("smooth", 0.0, vec![], |x| 1.0 + 0.5 * x.sin().powi(2) + 0.1 * x).unwrap();
    BaselineModel::custom(curve).unwrap()
}

pub fn built_in_baselines() -> Vec<(String, BaselineModel)> {
    vec![
        ("exponential".into(), BaselineModel::exponential()),
        ("weibull:0.5".into(), BaselineModel::weibull(0.5).unwrap()),
        ("weibull:1".into(), BaselineModel::weibull(1.0).unwrap()),
        ("weibull:2".into(), BaselineModel::weibull(2.0).unwrap()),
        ("pareto".into(), BaselineModel::pareto()),
    ]
}

/// Tiny deterministic generator so oracle draws do not depend on the crate.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
