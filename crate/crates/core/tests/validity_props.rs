mod common;

use proptest::prelude::*;
use semibiv::bivariate::rectangle_probability;
use semibiv::validity::{
    check_functional_equation, check_hazard_gradient_identity, check_theorem2, check_theorem5,
    check_two_increasing, default_t_knots, hazard_gradient, reconstruct_survival_from_gradient,
};
use semibiv::{
    BaselineModel, BivariateSurvival, GeneralBivariateModel, GridSpec, Margin, MarginalModel,
    PHBivariateModel, Tolerances, Verdict,
};

fn lfr_exp() -> GeneralBivariateModel {
    let m = MarginalModel::linear_failure_rate(1.5).unwrap();
    GeneralBivariateModel::new(BaselineModel::exponential(), m.clone(), m, 3.0).unwrap()
}

/// Minimum over all rectangles, traversing rectangles by corner lists
/// instead of the precomputed survival matrix.
fn brute_force_min<M: BivariateSurvival>(m: &M, knots: &[f64]) -> f64 {
    let mut lows = Vec::new();
    for (i, &a) in knots.iter().enumerate() {
        for &b in &knots[i + 1..] {
            lows.push((a, b));
        }
    }
    let mut min = f64::INFINITY;
    for &(a2, b2) in lows.iter().rev() {
        for &(a1, b1) in &lows {
            min = min.min(rectangle_probability(m, a1, b1, a2, b2).unwrap());
        }
    }
    min
}

#[test]
fn two_increasing_agrees_with_rectangle_oracle() {
    let tol = Tolerances::default();
    let e = BaselineModel::exponential();
    let grid = GridSpec::log_spaced(&e, 12, 0.05, 8.0, 0.02).unwrap();
    let ph = PHBivariateModel::new(e.clone(), 0.7, 1.3, 0.4).unwrap();
    for (verdict, min) in [
        (check_two_increasing(&lfr_exp(), &grid, &tol).verdict, brute_force_min(&lfr_exp(), grid.knots())),
        (check_two_increasing(&ph, &grid, &tol).verdict, brute_force_min(&ph, grid.knots())),
    ] {
        let expected = if min >= -tol.rectangle { Verdict::Valid } else { Verdict::Invalid };
        assert_eq!(verdict, expected, "min rectangle {min}");
    }
}

#[test]
fn counter_example_outcomes_hold_together() {
    let g = lfr_exp();
    let e = BaselineModel::exponential();
    let grid = GridSpec::default_for(&e).unwrap();
    let tol = Tolerances::default();
    let t2 = check_theorem2(&g, &grid, &tol);
    assert!(!t2.condition("thm2-i").unwrap().pass);
    assert!(!t2.condition("thm2-ii-1").unwrap().pass);
    let rect_grid = GridSpec::from_knots(vec![1.0, 2.0, 3.0, 5.0], 0.0).unwrap();
    assert_eq!(check_two_increasing(&g, &rect_grid, &tol).verdict, Verdict::Invalid);
    assert_eq!(check_two_increasing(&g, &grid, &tol).verdict, Verdict::Invalid);
    let fe = check_functional_equation(&g, &grid, &default_t_knots(&e).unwrap());
    assert!(fe.max_residual < 1e-9);
}

fn ph_strategy() -> impl Strategy<Value = (usize, f64, f64, f64)> {
    (0usize..5, 0.2f64..3.0, 0.2f64..3.0, 0.2f64..3.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ph_models_pass_every_check((k, t1, t2, t3) in ph_strategy()) {
        let b = common::built_in_baselines().swap_remove(k).1;
        let m = PHBivariateModel::new(b.clone(), t1, t2, t3).unwrap();
        let g = m.to_general();
        let grid = GridSpec::default_for(&b).unwrap();
        let tol = Tolerances::default();
        let r2 = check_theorem2(&g, &grid, &tol);
        prop_assert_eq!(r2.verdict, Verdict::Valid, "{}", r2.render_table());
        let r5 = check_theorem5(g.marginal(Margin::First), g.marginal(Margin::Second), &b, g.theta(), &grid, &tol).unwrap();
        prop_assert_eq!(r5.verdict, Verdict::Valid, "{}", r5.render_table());
        prop_assert_eq!(check_two_increasing(&m, &grid, &tol).verdict, Verdict::Valid);
        let t = default_t_knots(&b).unwrap();
        prop_assert!(check_functional_equation(&m, &grid, &t).max_residual < 1e-9);
        prop_assert!(check_functional_equation(&g, &grid, &t).max_residual < 1e-9);
    }
}

/// `-∂ ln F̄/∂x_i` by central differences on the model's own survival.
fn fd_gradient<M: BivariateSurvival>(m: &M, x1: f64, x2: f64) -> (f64, f64) {
    let h1 = 1e-6 * x1.abs().max(1e-3);
    let h2 = 1e-6 * x2.abs().max(1e-3);
    let r = |a: f64, b: f64| m.cumulative_hazard(a, b).unwrap();
    ((r(x1 + h1, x2) - r(x1 - h1, x2)) / (2.0 * h1), (r(x1, x2 + h2) - r(x1, x2 - h2)) / (2.0 * h2))
}

/// Point to (analytic gradient, finite-difference gradient).
type GradientPair = Box<dyn Fn(f64, f64) -> ((f64, f64), (f64, f64))>;

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = common::Lcg(99);
    let mut models: Vec<GradientPair> = Vec::new();
    for (_, b) in common::built_in_baselines() {
        let m = PHBivariateModel::new(b.clone(), 0.6, 1.1, 0.9).unwrap();
        models.push(Box::new(move |x1, x2| (hazard_gradient(&m, x1, x2).unwrap(), fd_gradient(&m, x1, x2))));
    }
    let g = lfr_exp();
    models.push(Box::new(move |x1, x2| (hazard_gradient(&g, x1, x2).unwrap(), fd_gradient(&g, x1, x2))));
    let bases: Vec<BaselineModel> = common::built_in_baselines()
        .into_iter()
        .map(|p| p.1)
        .chain([BaselineModel::exponential()])
        .collect();
    for (model, b) in models.iter().zip(&bases) {
        for _ in 0..100 {
            let r1 = rng.uniform(0.05, 5.0);
            let r2 = rng.uniform(0.05, 5.0);
            if (r1 - r2).abs() < 0.05 {
                continue;
            }
            let x1 = b.inverse_cumulative_hazard(r1).unwrap();
            let x2 = b.inverse_cumulative_hazard(r2).unwrap();
            let (exact, fd) = model(x1, x2);
            for (a, f) in [(exact.0, fd.0), (exact.1, fd.1)] {
                let scale = a.abs().max(f.abs()).max(1e-12);
                assert!((a - f).abs() <= 1e-5 * scale, "({x1}, {x2}): {a} vs {f}");
            }
        }
    }
}

#[test]
fn gradient_identity_on_every_baseline() {
    for (name, b) in common::built_in_baselines() {
        let m = PHBivariateModel::new(b.clone(), 0.8, 0.3, 2.1).unwrap();
        let grid = GridSpec::default_for(&b).unwrap();
        let r = check_hazard_gradient_identity(&m, &grid, &default_t_knots(&b).unwrap());
        assert!(r.max_residual < 1e-8, "{name}: {}", r.max_residual);
        assert_eq!(r.skipped, 0);
    }
}

#[test]
fn reconstruction_on_general_models() {
    let g = lfr_exp();
    for (x1, x2) in [(0.5, 0.2), (0.2, 0.5), (1.0, 3.0), (3.0, 1.0)] {
        let direct = g.survival(x1, x2).unwrap();
        let rebuilt = reconstruct_survival_from_gradient(&g, x1, x2).unwrap();
        assert!((rebuilt - direct).abs() <= 1e-6 * direct, "({x1}, {x2})");
    }
    let p = PHBivariateModel::new(BaselineModel::pareto(), 1.0, 1.0, 1.0).unwrap();
    let rebuilt = reconstruct_survival_from_gradient(&p, 4.0, 2.0).unwrap();
    assert!((rebuilt - 0.03125).abs() < 1e-6 * 0.03125);
}

#[test]
fn reports_are_reproducible() {
    let e = BaselineModel::exponential();
    let grid = GridSpec::default_for(&e).unwrap();
    let a = serde_json::to_string(&check_theorem2(&lfr_exp(), &grid, &Tolerances::default())).unwrap();
    let b = serde_json::to_string(&check_theorem2(&lfr_exp(), &grid, &Tolerances::default())).unwrap();
    assert_eq!(a, b);
}

/// `∂/∂x_o ln(-∂/∂x_i S(d(x_i, x_o)))` by nested central differences of a
/// closed-form marginal survival `s` and gap `d`.
fn condition_ii_oracle(s: impl Fn(f64) -> f64, d: impl Fn(f64, f64) -> f64, xi: f64, xo: f64) -> f64 {
    let inner = |xo: f64| {
        let h = 1e-5 * xi;
        (-(s(d(xi + h, xo)) - s(d(xi - h, xo))) / (2.0 * h)).ln()
    };
    let k = 1e-4 * xo;
    (inner(xo + k) - inner(xo - k)) / (2.0 * k)
}

#[test]
fn condition_ii_matches_definition() {
    let exp = BaselineModel::exponential();
    let lfr = MarginalModel::linear_failure_rate(1.5).unwrap();
    for (xi, xo) in [(5.0, 3.0), (2.0, 0.5), (4.0, 1.0)] {
        let want = condition_ii_oracle(|y| (-(y + 1.5 * y * y)).exp(), |a, b| a - b, xi, xo);
        let got = semibiv::validity::condition_ii_lhs(&lfr, &exp, xi, xo).unwrap();
        assert!((got - want).abs() < 1e-6 * want.abs(), "lfr ({xi},{xo}): {got} vs {want}");
    }

    let w2 = BaselineModel::weibull(2.0).unwrap();
    let ph = MarginalModel::proportional_hazard(w2.clone(), 2.0).unwrap();
    for (xi, xo) in [(2.0, 1.0), (1.5, 0.7)] {
        let want = condition_ii_oracle(|y| (-2.0 * y * y).exp(), |a, b| (a * a - b * b).sqrt(), xi, xo);
        let got = semibiv::validity::condition_ii_lhs(&ph, &w2, xi, xo).unwrap();
        assert!((got - want).abs() < 1e-6 * want.abs(), "weibull ({xi},{xo}): {got} vs {want}");
    }

    let pareto = BaselineModel::pareto();
    let ph = MarginalModel::proportional_hazard(pareto.clone(), 1.5).unwrap();
    for (xi, xo) in [(4.0, 2.0), (6.0, 1.5)] {
        let want = condition_ii_oracle(|y| y.powf(-1.5), |a, b| a / b, xi, xo);
        let got = semibiv::validity::condition_ii_lhs(&ph, &pareto, xi, xo).unwrap();
        assert!((got - want).abs() < 1e-6 * want.abs(), "pareto ({xi},{xo}): {got} vs {want}");
    }
}
