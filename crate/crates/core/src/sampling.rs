//! Random pairs with exact ties on the diagonal.
//!
//! Work is split into fixed-size shards. Every shard owns ChaCha20 streams
//! derived from the seed and its index, so a batch depends only on
//! `(model, n, seed)` and not on the number of threads.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::BaselineModel;
use crate::bivariate::{BivariateSurvival, GeneralBivariateModel, Margin, PHBivariateModel};
use crate::error::{Error, Result};
use crate::marginals::MarginalModel;
use crate::validity::GridSpec;

pub const SHARD_SIZE: usize = 16_384;

const ENVELOPE_INFLATION: f64 = 1.2;
const SUB_BINS: usize = 8;
const MIN_ACCEPTANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBatch {
    pub pairs: Vec<(f64, f64)>,
    /// Pairs with `x1 == x2` exactly.
    pub tie_count: usize,
    pub seed: u64,
    pub n: usize,
}

impl SampleBatch {
    fn from_pairs(pairs: Vec<(f64, f64)>, seed: u64) -> Self {
        let tie_count = pairs.iter().filter(|(a, b)| a == b).count();
        Self {
            n: pairs.len(),
            pairs,
            tie_count,
            seed,
        }
    }

    pub fn tie_fraction(&self) -> f64 {
        self.tie_count as f64 / self.n as f64
    }

    /// Fraction of pairs with `X₁ > x1` and `X₂ > x2`.
    pub fn empirical_survival(&self, x1: f64, x2: f64) -> f64 {
        let hits = self.pairs.iter().filter(|(a, b)| *a > x1 && *b > x2).count();
        hits as f64 / self.n as f64
    }

    /// CSV with header `x1,x2,tied`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["x1", "x2", "tied"]).map_err(csv_err)?;
        for &(a, b) in &self.pairs {
            let tied = if a == b { "1" } else { "0" };
            w.write_record([a.to_string(), b.to_string(), tied.to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Sampler("sample size must be at least 1".into()));
    }
    Ok(())
}

/// Runs `shard(index, size)` over all shards in parallel and concatenates
/// the results in shard order.
fn sharded<F>(n: usize, seed: u64, shard: F) -> Result<SampleBatch>
where
    F: Fn(u64, usize) -> Result<Vec<(f64, f64)>> + Sync,
{
    let shards = n.div_ceil(SHARD_SIZE);
    let parts = (0..shards)
        .into_par_iter()
        .map(|k| shard(k as u64, SHARD_SIZE.min(n - k * SHARD_SIZE)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleBatch::from_pairs(parts.concat(), seed))
}

/// Latent competing-risks draw `X₁ = min(U₁, U₃)`, `X₂ = min(U₂, U₃)` with
/// `U_j = R₀⁻¹(E_j/θ_j)`.
///
/// Minima are taken on the cumulative-hazard scale before inversion, so a
/// shock from `U₃` yields bit-identical coordinates.
pub fn sample_ph(model: &PHBivariateModel, n: usize, seed: u64) -> Result<SampleBatch> {
    check_count(n)?;
    let (t1, t2, t3) = model.thetas();
    let b = model.baseline();
    sharded(n, seed, |shard, size| {
        let mut rng = stream_rng(seed, shard);
        let mut out = Vec::with_capacity(size);
        for _ in 0..size {
            let e1: f64 = Exp1.sample(&mut rng);
            let e2: f64 = Exp1.sample(&mut rng);
            let e3: f64 = Exp1.sample(&mut rng);
            let a3 = if t3 > 0.0 { e3 / t3 } else { f64::INFINITY };
            let v1 = (e1 / t1).min(a3);
            let v2 = (e2 / t2).min(a3);
            let x1 = b.inverse_cumulative_hazard(v1)?;
            let x2 = if v2 == v1 { x1 } else { b.inverse_cumulative_hazard(v2)? };
            out.push((x1, x2));
        }
        Ok(out)
    })
}

/// Unnormalized density of `v = s/(1+s)` inside one wedge, where `s` is
/// the cumulative-hazard gap between the larger and smaller coordinate.
///
/// In `(ρ, s)` coordinates the absolutely continuous part factorizes as
/// `h(s) e^{-θρ}` with `h = S(s)(q(θ - q) + q')`, `q = r_i/r₀` along the
/// marginal and `S` its survival.
#[derive(Debug, Clone)]
struct WedgeDensity {
    marginal: MarginalModel,
    baseline: BaselineModel,
    theta: f64,
}

impl WedgeDensity {
    fn at(&self, v: f64) -> Result<f64> {
        if v >= 1.0 {
            return Ok(0.0);
        }
        let s = v / (1.0 - v);
        let y = self.baseline.inverse_cumulative_hazard(s)?;
        if !y.is_finite() {
            return Ok(0.0);
        }
        let surv = self.marginal.survival(y)?;
        if surv == 0.0 {
            return Ok(0.0);
        }
        let r = self.marginal.hazard(y)?;
        let rp = self.marginal.hazard_derivative(y)?;
        let r0 = self.baseline.hazard(y)?;
        let r0p = self.baseline.hazard_derivative(y)?;
        let q = r / r0;
        let dq = (rp / r0 - q * (r0p / r0)) / r0;
        Ok(surv * (q * (self.theta - q) + dq) / ((1.0 - v) * (1.0 - v)))
    }
}

/// Piecewise-constant dominating function over `v ∈ [0, 1]`.
#[derive(Debug, Clone)]
struct Envelope {
    density: WedgeDensity,
    edges: Vec<f64>,
    heights: Vec<f64>,
    bins: WeightedIndex<f64>,
}

impl Envelope {
    fn build(density: WedgeDensity, knots_v: &[f64]) -> Result<Self> {
        let mut coarse = vec![0.0];
        coarse.extend(knots_v.iter().copied().filter(|&v| v > 0.0 && v < 1.0));
        coarse.push(1.0);
        coarse.dedup();
        let mut edges = vec![0.0];
        for w in coarse.windows(2) {
            for j in 1..=SUB_BINS {
                edges.push(w[0] + (w[1] - w[0]) * j as f64 / SUB_BINS as f64);
            }
        }
        *edges.last_mut().expect("non-empty") = 1.0;
        let mut heights = Vec::with_capacity(edges.len() - 1);
        for w in edges.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let pad = 1e-9 * (hi - lo);
            let mut top: f64 = 0.0;
            for j in 0..=8 {
                let v = (lo + (hi - lo) * j as f64 / 8.0).clamp(lo + pad, hi - pad);
                let g = density.at(v)?;
                if !g.is_finite() {
                    return Err(Error::Sampler(format!("wedge density is {g} at v = {v}")));
                }
                if g < 0.0 {
                    return Err(Error::Model(format!(
                        "wedge density is negative ({g:e}) at v = {v}; the model is not a distribution"
                    )));
                }
                top = top.max(g);
            }
            heights.push(ENVELOPE_INFLATION * top);
        }
        let areas: Vec<f64> = heights
            .iter()
            .zip(edges.windows(2))
            .map(|(h, w)| h * (w[1] - w[0]))
            .collect();
        let bins = WeightedIndex::new(&areas)
            .map_err(|e| Error::Sampler(format!("empty rejection envelope: {e}")))?;
        Ok(Self {
            density,
            edges,
            heights,
            bins,
        })
    }

    /// One accepted `s`; returns the number of proposals used alongside.
    fn draw<R: Rng>(&self, rng: &mut R) -> Result<(f64, u64)> {
        let mut tries = 0u64;
        loop {
            tries += 1;
            let k = self.bins.sample(rng);
            let (lo, hi) = (self.edges[k], self.edges[k + 1]);
            let v = lo + (hi - lo) * rng.random::<f64>();
            let u: f64 = rng.random();
            if v <= 0.0 || v >= 1.0 {
                continue;
            }
            let g = self.density.at(v)?;
            if g > self.heights[k] {
                return Err(Error::Sampler(format!(
                    "envelope violated at v = {v} ({g:e} > {:e}); refine the grid",
                    self.heights[k]
                )));
            }
            if u * self.heights[k] <= g {
                return Ok((v / (1.0 - v), tries));
            }
            if tries > 1_000_000 {
                return Err(Error::Sampler(
                    "rejection sampler made no progress; refine the grid".into(),
                ));
            }
        }
    }
}

/// Mixture sampler for a general model: diagonal draws with probability
/// `1 - α`, rejection draws from the absolutely continuous part otherwise.
#[derive(Debug, Clone)]
pub struct GeneralSampler {
    baseline: BaselineModel,
    theta: f64,
    alpha: f64,
    masses: [f64; 2],
    envelopes: [Option<Envelope>; 2],
}

impl GeneralSampler {
    /// Builds one envelope per wedge from the grid knots, mapped to `v`.
    pub fn new(model: &GeneralBivariateModel, grid: &GridSpec) -> Result<Self> {
        let dec = model.decompose()?;
        if !(dec.alpha >= -1e-12 && dec.alpha <= 1.0 + 1e-12) {
            return Err(Error::Model(format!(
                "mixture weight alpha = {} lies outside [0, 1]",
                dec.alpha
            )));
        }
        let baseline = model.baseline().clone();
        let knots_v = grid
            .knots()
            .iter()
            .filter(|&&k| k > baseline.left_endpoint())
            .map(|&k| baseline.cumulative_hazard(k).map(|s| s / (1.0 + s)))
            .collect::<Result<Vec<_>>>()?;
        let masses = [Margin::First, Margin::Second].map(|m| dec.wedge_mass(m).max(0.0));
        let mut envelopes = [None, None];
        for (slot, margin) in envelopes.iter_mut().zip([Margin::First, Margin::Second]) {
            if masses[margin.index() - 1] > 0.0 {
                let density = WedgeDensity {
                    marginal: model.marginal(margin).clone(),
                    baseline: baseline.clone(),
                    theta: model.theta(),
                };
                *slot = Some(Envelope::build(density, &knots_v)?);
            }
        }
        Ok(Self {
            baseline,
            theta: model.theta(),
            alpha: (masses[0] + masses[1]).min(1.0),
            masses,
            envelopes,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Shard `k` uses streams `3k` (branch choice), `3k+1` (diagonal draws)
    /// and `3k+2` (absolutely continuous draws).
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        check_count(n)?;
        let b = &self.baseline;
        sharded(n, seed, |shard, size| {
            let mut branch = stream_rng(seed, 3 * shard);
            let mut singular = stream_rng(seed, 3 * shard + 1);
            let mut ac = stream_rng(seed, 3 * shard + 2);
            let mut out = Vec::with_capacity(size);
            let (mut proposals, mut accepted) = (0u64, 0u64);
            for _ in 0..size {
                if branch.random::<f64>() < self.alpha {
                    let first = ac.random::<f64>() * self.alpha < self.masses[0];
                    let margin = if first { Margin::First } else { Margin::Second };
                    let envelope = self.envelopes[margin.index() - 1]
                        .as_ref()
                        .or(self.envelopes[margin.other().index() - 1].as_ref())
                        .ok_or_else(|| Error::Sampler("no wedge carries mass".into()))?;
                    let e: f64 = Exp1.sample(&mut ac);
                    let rho = e / self.theta;
                    let (s, tries) = envelope.draw(&mut ac)?;
                    proposals += tries;
                    accepted += 1;
                    let lo = b.inverse_cumulative_hazard(rho)?;
                    let hi = b.inverse_cumulative_hazard(rho + s)?;
                    out.push(margin.join(hi, lo));
                } else {
                    let e: f64 = Exp1.sample(&mut singular);
                    let t = b.inverse_cumulative_hazard(e / self.theta)?;
                    out.push((t, t));
                }
            }
            if accepted > 0 && (accepted as f64) < MIN_ACCEPTANCE * proposals as f64 {
                return Err(Error::Sampler(format!(
                    "acceptance rate {:.2e} below 0.1%; refine the grid",
                    accepted as f64 / proposals as f64
                )));
            }
            Ok(out)
        })
    }
}

/// [`GeneralSampler`] on the default grid of the model's baseline.
pub fn sample_general(model: &GeneralBivariateModel, n: usize, seed: u64) -> Result<SampleBatch> {
    check_count(n)?;
    let grid = GridSpec::default_for(model.baseline())?;
    GeneralSampler::new(model, &grid)?.sample(n, seed)
}
