//! User-supplied hazard rates: closures or piecewise-linear tables, with a
//! cumulative hazard obtained by adaptive quadrature.
//!
//! Cumulative values are memoized at geometrically spaced knots
//! `start + (ρ^k - 1)` with `ρ = 2^(1/8)`; a query integrates only from the
//! nearest knot below. The knot cache only grows and is guarded by an
//! `RwLock`, so a curve can be shared across threads.

use std::cell::Cell;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::numeric::{self, QuadOptions};

/// Absolute tolerance of every cumulative-hazard quadrature.
pub const CUMULATIVE_ABS_TOL: f64 = 1e-10;
/// Relative tolerance on cumulative-hazard values when inverting.
pub const INVERSE_REL_TOL: f64 = 1e-12;

const KNOT_RATIO: f64 = 1.090_507_732_665_257_7; // 2^(1/8)
const MAX_KNOTS: usize = 480;

pub type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Piecewise-linear hazard table; constant extrapolation past the last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardTable {
    xs: Vec<f64>,
    hazards: Vec<f64>,
}

impl HazardTable {
    pub fn new(xs: Vec<f64>, hazards: Vec<f64>) -> Result<Self> {
        if xs.len() != hazards.len() || xs.len() < 2 {
            return Err(Error::Model(
                "hazard table needs at least two (x, hazard) rows".into(),
            ));
        }
        if xs.iter().chain(hazards.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Model("hazard table contains non-finite values".into()));
        }
        if xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Model(
                "hazard table x column must be strictly increasing".into(),
            ));
        }
        if let Some((x, h)) = xs.iter().zip(&hazards).find(|(_, &h)| h < 0.0) {
            return Err(Error::Model(format!("negative hazard {h} at x = {x}")));
        }
        Ok(Self { xs, hazards })
    }

    /// Reads a two-column `x,hazard` CSV. A non-numeric first row is a header.
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let mut xs = Vec::new();
        let mut hazards = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            if record.len() != 2 {
                return Err(Error::Parse(format!(
                    "{}: row {} has {} columns, expected 2",
                    path.display(),
                    row + 1,
                    record.len()
                )));
            }
            let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
            match parsed {
                (Ok(x), Ok(h)) => {
                    xs.push(x);
                    hazards.push(h);
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::Parse(format!(
                        "{}: row {} is not numeric",
                        path.display(),
                        row + 1
                    )))
                }
            }
        }
        Self::new(xs, hazards)
    }

    pub fn start(&self) -> f64 {
        self.xs[0]
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn last_hazard(&self) -> f64 {
        *self.hazards.last().expect("table has rows")
    }

    pub fn rate(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.hazards[0];
        }
        if x >= self.xs[n - 1] {
            return self.hazards[n - 1];
        }
        let k = self.xs.partition_point(|&k| k <= x) - 1;
        let t = (x - self.xs[k]) / (self.xs[k + 1] - self.xs[k]);
        self.hazards[k] + t * (self.hazards[k + 1] - self.hazards[k])
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

struct CurveInner {
    rate: RateFn,
    start: f64,
    breaks: Vec<f64>,
    table: Option<HazardTable>,
    label: String,
    cumulative_at_knots: RwLock<Vec<f64>>,
}

/// A hazard rate `r(x) >= 0` on `[start, ∞)` with its integral.
#[derive(Clone)]
pub struct HazardCurve {
    inner: Arc<CurveInner>,
}

impl fmt::Debug for HazardCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HazardCurve")
            .field("label", &self.inner.label)
            .field("start", &self.inner.start)
            .finish()
    }
}

impl HazardCurve {
    /// Wraps a closure. `breaks` lists kinks where quadrature should restart.
    pub fn from_fn<F>(label: impl Into<String>, start: f64, breaks: Vec<f64>, rate: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !start.is_finite() {
            return Err(Error::Model("hazard curve start must be finite".into()));
        }
        let mut breaks = breaks;
        breaks.retain(|b| b.is_finite() && *b > start);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        Ok(Self {
            inner: Arc::new(CurveInner {
                rate: Arc::new(rate),
                start,
                breaks,
                table: None,
                label: label.into(),
                cumulative_at_knots: RwLock::new(vec![0.0]),
            }),
        })
    }

    pub fn from_table(label: impl Into<String>, table: HazardTable) -> Result<Self> {
        let start = table.start();
        let breaks = table.knots().to_vec();
        let lookup = table.clone();
        let mut curve = Self::from_fn(label, start, breaks, move |x| lookup.rate(x))?;
        Arc::get_mut(&mut curve.inner)
            .expect("freshly built curve is unshared")
            .table = Some(table);
        Ok(curve)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let table = HazardTable::from_csv_path(path)?;
        Self::from_table(format!("table:{}", path.display()), table)
    }

    pub fn label(&self) -> &str {
        &self.inner.label
    }

    pub fn start(&self) -> f64 {
        self.inner.start
    }

    pub fn table(&self) -> Option<&HazardTable> {
        self.inner.table.as_ref()
    }

    /// Hazard at `x`; negative or non-finite values are a model error.
    pub fn rate(&self, x: f64) -> Result<f64> {
        let v = (self.inner.rate)(x);
        if v.is_nan() || v < 0.0 {
            return Err(Error::Model(format!(
                "hazard {} evaluates to {v} at x = {x}",
                self.inner.label
            )));
        }
        Ok(v)
    }

    /// Derivative of the hazard by finite differences (one-sided at the start).
    pub fn rate_derivative(&self, x: f64) -> Result<f64> {
        numeric::derivative(|y| self.rate(y), x, self.inner.start)
    }

    fn knot_x(&self, k: usize) -> f64 {
        self.inner.start + (KNOT_RATIO.powi(k as i32) - 1.0)
    }

    fn knot_index(&self, x: f64) -> usize {
        let offset = x - self.inner.start;
        let mut k = ((1.0 + offset).ln() / KNOT_RATIO.ln()).floor().max(0.0) as usize;
        k = k.min(MAX_KNOTS);
        while k > 0 && self.knot_x(k) > x {
            k -= 1;
        }
        while k < MAX_KNOTS && self.knot_x(k + 1) <= x {
            k += 1;
        }
        k
    }

    fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        let bad = Cell::new(None);
        let value = numeric::integrate_with_breaks(
            |x| {
                let v = (self.inner.rate)(x);
                if v.is_nan() || v < 0.0 {
                    bad.set(Some((x, v)));
                    0.0
                } else {
                    v
                }
            },
            a,
            b,
            &self.inner.breaks,
            QuadOptions::with_abs_tol(CUMULATIVE_ABS_TOL),
        )?;
        if let Some((x, v)) = bad.get() {
            return Err(Error::Model(format!(
                "hazard {} evaluates to {v} at x = {x}",
                self.inner.label
            )));
        }
        Ok(value)
    }

    /// Cumulative value at knot `k`, extending the cache as needed.
    fn knot_value(&self, k: usize) -> Result<f64> {
        {
            let cache = self.inner.cumulative_at_knots.read().expect("cache lock");
            if let Some(&v) = cache.get(k) {
                return Ok(v);
            }
        }
        let mut cache = self.inner.cumulative_at_knots.write().expect("cache lock");
        while cache.len() <= k {
            let j = cache.len();
            let next = cache[j - 1] + self.integrate(self.knot_x(j - 1), self.knot_x(j))?;
            cache.push(next);
        }
        Ok(cache[k])
    }

    /// `∫_start^x r(u) du`, zero for `x <= start`.
    pub fn cumulative(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::Domain {
                what: "x",
                value: x,
                expected: "not NaN",
            });
        }
        if x <= self.inner.start {
            return Ok(0.0);
        }
        if x == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        let k = self.knot_index(x);
        if k >= MAX_KNOTS {
            return Err(Error::Domain {
                what: "x",
                value: x,
                expected: "within the cumulative-hazard knot range",
            });
        }
        Ok(self.knot_value(k)? + self.integrate(self.knot_x(k), x)?)
    }

    /// Smallest `x` with `cumulative(x) = y`.
    pub fn inverse_cumulative(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) || !y.is_finite() {
            return Err(Error::Domain {
                what: "cumulative hazard",
                value: y,
                expected: "finite and >= 0",
            });
        }
        if y == 0.0 {
            return Ok(self.inner.start);
        }
        // Expansion search over the knot cache for the upper bracket.
        let mut k = 1;
        while self.knot_value(k)? < y {
            k += 1;
            if k >= MAX_KNOTS {
                return Err(Error::Bracket(format!(
                    "cumulative hazard of {} stays below {y}",
                    self.inner.label
                )));
            }
        }
        let lo = self.knot_x(k - 1);
        let hi = self.knot_x(k);
        let base = self.knot_value(k - 1)?;
        numeric::solve_increasing(
            |x| Ok(base + self.integrate(lo, x)? - y),
            lo,
            hi,
            INVERSE_REL_TOL * y,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn closure_cumulative_matches_closed_form() {
        // r(x) = 2x  =>  R(x) = x²
        let c = HazardCurve::from_fn("2x", 0.0, vec![], |x| 2.0 * x).unwrap();
        for &x in &[0.01, 0.5, 1.0, 3.7, 12.0, 40.0] {
            let r = c.cumulative(x).unwrap();
            assert!((r - x * x).abs() < 1e-8, "x={x} R={r}");
        }
    }

    #[test]
    fn table_interpolates_and_extrapolates_flat() {
        let t = HazardTable::new(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(t.rate(0.5), 2.0);
        assert_eq!(t.rate(1.5), 2.5);
        assert_eq!(t.rate(10.0), 2.0);
        let c = HazardCurve::from_table("t", t).unwrap();
        // 2 + 2.5 + 2*(5-2)
        assert!((c.cumulative(5.0).unwrap() - 10.5).abs() < 1e-10);
    }

    #[test]
    fn table_rejects_negative_hazard() {
        assert!(HazardTable::new(vec![0.0, 1.0], vec![1.0, -0.5]).is_err());
        assert!(HazardTable::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn closure_with_negative_values_is_a_model_error() {
        let c = HazardCurve::from_fn("bad", 0.0, vec![], |x| 1.0 - x).unwrap();
        assert!(matches!(c.cumulative(3.0), Err(Error::Model(_))));
        assert!(matches!(c.rate(2.0), Err(Error::Model(_))));
    }

    #[test]
    fn inverse_round_trips() {
        let c = HazardCurve::from_fn("1+sin/2", 0.0, vec![], |x| 1.0 + 0.5 * x.sin()).unwrap();
        for &y in &[1e-6, 0.3, 2.0, 17.0, 250.0] {
            let x = c.inverse_cumulative(y).unwrap();
            let back = c.cumulative(x).unwrap();
            assert!((back - y).abs() <= 1e-11 * y.max(1.0), "y={y} back={back}");
        }
    }

    #[test]
    fn bounded_cumulative_cannot_be_inverted_past_its_supremum() {
        let t = HazardTable::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 0.0]).unwrap();
        let c = HazardCurve::from_table("trunc", t).unwrap();
        assert!(c.inverse_cumulative(5.0).is_err());
    }

    #[test]
    fn csv_with_header_is_parsed() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x,hazard\n0,1\n1,2\n3,2").unwrap();
        let t = HazardTable::from_csv_path(f.path()).unwrap();
        assert_eq!(t.knots(), &[0.0, 1.0, 3.0]);
        assert_eq!(t.last_hazard(), 2.0);
    }

    #[test]
    fn csv_rejects_garbage_rows() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "0,1\nfoo,2").unwrap();
        assert!(matches!(HazardTable::from_csv_path(f.path()), Err(Error::Parse(_))));
    }
}
