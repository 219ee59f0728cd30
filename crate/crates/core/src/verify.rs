//! Independent oracles: exhaustive enumeration of the shock model, empirical
//! survival grids with binomial bands, grid comparison, random model
//! generators and the harness suite behind `geomlaw verify`.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dependence::{corr_exch_wide, corr_wide, mrti_bruteforce, mrti_exchangeable};
use crate::error::{Error, Result};
use crate::exchangeable::{a_from_p, b_from_a, ExchangeableSeq, ExchangeableSurvival, SeqRole};
use crate::extendibility::InfDivLaw;
use crate::samplers::{rng_stream, sample_batch, DeFinettiSampler, Mixing, NarrowSampler, SampleBatch, Sampler, SieveSampler, WideSampler};
use crate::shock_models::{check_lm_property, pmf, wide_from_narrow, NarrowParams, SurvivalFunction, WideParams};
use crate::subset_algebra::binomial;

/// Survival values on `{0..grid_max}^d`, first component varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalGrid {
    pub d: usize,
    pub grid_max: u64,
    pub values: Vec<f64>,
    pub error_bound: Vec<f64>,
}

impl SurvivalGrid {
    pub fn side(&self) -> usize {
        self.grid_max as usize + 1
    }

    pub fn point(&self, cell: usize) -> Vec<u64> {
        let side = self.side();
        let mut c = cell;
        (0..self.d)
            .map(|_| {
                let v = (c % side) as u64;
                c /= side;
                v
            })
            .collect()
    }

    pub fn index(&self, n: &[u64]) -> usize {
        n.iter().rev().fold(0, |acc, &v| acc * self.side() + v as usize)
    }

    pub fn get(&self, n: &[u64]) -> f64 {
        self.values[self.index(n)]
    }
}

fn cells(d: usize, grid_max: u64) -> usize {
    (grid_max as usize + 1).pow(d as u32)
}

pub fn analytic_grid<S: SurvivalFunction + ?Sized>(sf: &S, grid_max: u64) -> SurvivalGrid {
    let d = sf.dim();
    let mut grid = SurvivalGrid { d, grid_max, values: Vec::new(), error_bound: vec![0.0; cells(d, grid_max)] };
    grid.values = (0..cells(d, grid_max)).map(|c| sf.survival(&grid.point(c))).collect();
    grid
}

// In-place suffix sums along every axis of a (side)^d array.
fn suffix_sums(values: &mut [f64], d: usize, side: usize) {
    let mut stride = 1;
    for _ in 0..d {
        for i in (0..values.len()).rev() {
            if (i / stride) % side + 1 < side {
                values[i] += values[i + stride];
            }
        }
        stride *= side;
    }
}

/// Survival grid of the shock model by exact enumeration of shock outcomes.
///
/// Each shock takes a value in `{1..H}` or the lumped atom `> H`; the state is
/// the vector of capped minima. Cells on `{0..H-1}^d` are exact.
pub fn enumerate_narrow(params: &NarrowParams, horizon: u64) -> Result<SurvivalGrid> {
    let d = params.dim();
    if d > 3 || horizon > 8 || horizon == 0 {
        return Err(Error::TooLarge { reason: format!("d = {d}, H = {horizon}; supported d <= 3, 1 <= H <= 8") });
    }
    let h = horizon as usize;
    // Capped value v in {1..H+1} stored as v - 1.
    let side = h + 1;
    let states = side.pow(d as u32);
    let mut mass = vec![0.0; states];
    mass[states - 1] = 1.0;
    let decode = |s: usize| -> Vec<usize> {
        let mut c = s;
        (0..d)
            .map(|_| {
                let v = c % side;
                c /= side;
                v
            })
            .collect()
    };
    let encode = |v: &[usize]| v.iter().rev().fold(0, |acc, &x| acc * side + x);
    for (mask, &p) in params.dense().iter().enumerate().skip(1) {
        if p == 1.0 {
            continue;
        }
        // P(E = e) for e = 1..H, then P(E > H).
        let mut probs: Vec<f64> = (1..=h).map(|e| p.powi(e as i32 - 1) * (1.0 - p)).collect();
        probs.push(p.powi(h as i32));
        let mut next = vec![0.0; states];
        for (s, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let state = decode(s);
            for (e, &pe) in probs.iter().enumerate() {
                let moved: Vec<usize> = state
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| if mask & (1 << k) != 0 { v.min(e) } else { v })
                    .collect();
                next[encode(&moved)] += m * pe;
            }
        }
        mass = next;
    }
    suffix_sums(&mut mass, d, side);
    // State index v - 1 >= n covers tau > n.
    let grid_max = horizon - 1;
    let mut grid = SurvivalGrid { d, grid_max, values: Vec::new(), error_bound: vec![0.0; cells(d, grid_max)] };
    grid.values = (0..cells(d, grid_max))
        .map(|c| {
            let n: Vec<usize> = grid.point(c).iter().map(|&v| v as usize).collect();
            mass[encode(&n)]
        })
        .collect();
    Ok(grid)
}

/// Fraction of draws with every `tau_i > n_i`, with a binomial 3-sigma band per cell.
pub fn empirical_grid(batch: &SampleBatch, grid_max: u64) -> Result<SurvivalGrid> {
    if batch.n_samples == 0 {
        return Err(Error::EmptyBatch);
    }
    let d = batch.d;
    let side = grid_max as usize + 2;
    let mut counts = vec![0.0; side.pow(d as u32)];
    for row in batch.rows() {
        let idx = row.iter().rev().fold(0, |acc, &v| acc * side + (v.min(grid_max + 1) as usize - 1));
        counts[idx] += 1.0;
    }
    suffix_sums(&mut counts, d, side);
    let n = batch.n_samples as f64;
    let mut grid = SurvivalGrid { d, grid_max, values: Vec::new(), error_bound: Vec::new() };
    for c in 0..cells(d, grid_max) {
        let idx = grid.point(c).iter().rev().fold(0, |acc, &v| acc * side + v as usize);
        let f = counts[idx] / n;
        grid.values.push(f);
        grid.error_bound.push(3.0 * (f * (1.0 - f) / n).sqrt() + 1.0 / n);
    }
    Ok(grid)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridComparison {
    pub max_abs_deviation: f64,
    pub worst_cell: Vec<u64>,
    pub failing_cells: usize,
    pub pass: bool,
}

// Rounding allowance for analytic-against-analytic comparisons.
const COMPARE_FLOOR: f64 = 1e-12;

pub fn compare_grids(a: &SurvivalGrid, b: &SurvivalGrid) -> Result<GridComparison> {
    if a.d != b.d || a.grid_max != b.grid_max {
        return Err(Error::ShapeMismatch {
            reason: format!("d {} vs {}, grid_max {} vs {}", a.d, b.d, a.grid_max, b.grid_max),
        });
    }
    let mut worst = (0.0, 0usize);
    let mut failing = 0;
    for c in 0..a.values.len() {
        let dev = (a.values[c] - b.values[c]).abs();
        if dev > worst.0 {
            worst = (dev, c);
        }
        if dev > a.error_bound[c] + b.error_bound[c] + COMPARE_FLOOR {
            failing += 1;
        }
    }
    Ok(GridComparison { max_abs_deviation: worst.0, worst_cell: a.point(worst.1), failing_cells: failing, pass: failing == 0 })
}

/// Normalized uniforms, a Dirichlet(1, ..., 1) draw.
fn simplex<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Shock parameters in `[0.2, 1]`, each shock absent with probability 0.3.
pub fn random_narrow<R: Rng + ?Sized>(d: usize, rng: &mut R) -> NarrowParams {
    loop {
        let mut dense = vec![1.0; 1 << d];
        for slot in dense.iter_mut().skip(1) {
            if rng.random::<f64>() >= 0.3 {
                *slot = rng.random_range(0.2..1.0);
            }
        }
        if let Ok(p) = NarrowParams::from_dense(d, dense) {
            return p;
        }
    }
}

/// Outcome probabilities with about 30% of subsets given zero mass.
pub fn random_wide<R: Rng + ?Sized>(d: usize, rng: &mut R) -> WideParams {
    loop {
        let mut w = simplex(1 << d, rng);
        for v in w.iter_mut() {
            if rng.random::<f64>() < 0.3 {
                *v = 0.0;
            }
        }
        let s: f64 = w.iter().sum();
        if s <= 0.0 {
            continue;
        }
        if let Ok(p) = WideParams::from_dense(d, w.iter().map(|v| v / s).collect()) {
            return p;
        }
    }
}

/// Leading-1 sequence in `M_(d+1)` from a random exchangeable wide law.
pub fn random_m_beta<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        // Mass of each cardinality class, spread evenly inside the class.
        let w = simplex(d + 1, rng);
        let pt: Vec<f64> = (0..=d).map(|j| w[j] / binomial(d as u64, j as u64) as f64).collect();
        let beta: Vec<f64> = (0..=d)
            .map(|k| (0..=d - k).map(|j| binomial((d - k) as u64, j as u64) as f64 * pt[j]).sum())
            .collect();
        if beta[1] < 1.0 - 1e-9 {
            return beta;
        }
    }
}

/// Moments `E[Y^k]`, `k = 0..=d`, of a random discrete law on `[0, 1)` with at most five atoms.
pub fn random_moment_beta<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let atoms = rng.random_range(1..=5);
    let w = simplex(atoms, rng);
    let x: Vec<f64> = (0..atoms).map(|_| rng.random::<f64>()).collect();
    (0..=d).map(|k| w.iter().zip(&x).map(|(w, x)| w * x.powi(k as i32)).sum()).collect()
}

/// Most negative top-order difference of a leading-1 vector.
pub fn m_deficit(x: &[f64]) -> f64 {
    let d = x.len() - 1;
    (0..d)
        .map(|k| crate::subset_algebra::difference(x, d - k, k).expect("in range"))
        .fold(f64::INFINITY, f64::min)
}

/// Moves one entry of `beta` until some difference is at most `-1e-3`.
pub fn perturb_out_of_m<R: Rng + ?Sized>(beta: &[f64], rng: &mut R) -> Vec<f64> {
    let d = beta.len() - 1;
    let k = rng.random_range(1..=d);
    let step = if rng.random::<bool>() { 1e-3 } else { -1e-3 };
    let mut x = beta.to_vec();
    while m_deficit(&x) > -1e-3 {
        x[k] += step;
    }
    x
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub seconds: f64,
    pub detail: serde_json::Value,
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, serde_json::Value)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, serde_json::json!({ "error": e.to_string() })),
    };
    CheckResult { name: name.into(), passed, seconds: start.elapsed().as_secs_f64(), detail }
}

/// Narrow laws and their wide representations give the same grid on `{0..4}^d`.
pub fn bridge_check(models: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    timed("narrow-wide-bridge", || {
        let mut worst = 0.0f64;
        for i in 0..models {
            let p = random_narrow(2 + i % 2, rng);
            let w = wide_from_narrow(&p);
            // Round trip through validation of the dense wide parameters.
            let w = WideParams::from_dense(w.dim(), w.dense().to_vec())?;
            let c = compare_grids(&analytic_grid(&p, 4), &analytic_grid(&w, 4))?;
            worst = worst.max(c.max_abs_deviation);
        }
        Ok((worst <= 1e-12, serde_json::json!({ "models": models, "max_abs_deviation": worst })))
    })
}

pub fn exhaustive_check(models: usize, horizon: u64, rng: &mut ChaCha8Rng) -> CheckResult {
    timed("exhaustive-enumeration", || {
        let mut worst = 0.0f64;
        for i in 0..models {
            let p = random_narrow(2 + i % 2, rng);
            let e = enumerate_narrow(&p, horizon)?;
            worst = worst.max(compare_grids(&e, &analytic_grid(&p, horizon - 1))?.max_abs_deviation);
        }
        Ok((worst <= 1e-12, serde_json::json!({ "models": models, "horizon": horizon, "max_abs_deviation": worst })))
    })
}

fn pmf_cells(beta: &[f64]) -> Result<f64> {
    let sf = ExchangeableSurvival::from_raw(beta.to_vec());
    let mut min = f64::INFINITY;
    for a in 1..=6 {
        for b in 1..=6 {
            for c in 1..=6 {
                min = min.min(pmf(&sf, &[a, b, c])?.raw);
            }
        }
    }
    Ok(min)
}

/// Moment sequences give nonnegative masses on `{1..6}^3`.
pub fn pmf_sufficiency_check(count: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    timed("pmf-sufficiency", || {
        let mut min = f64::INFINITY;
        for _ in 0..count {
            let beta = random_moment_beta(3, rng);
            min = min.min(pmf_cells(&beta)?);
        }
        Ok((min >= -1e-10, serde_json::json!({ "sequences": count, "min_mass": min })))
    })
}

/// Sequences pushed out of `M_4` show a clearly negative mass on `{1..6}^3`.
pub fn pmf_necessity_check(count: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    timed("pmf-necessity", || {
        let mut misses = 0;
        let mut largest_min = f64::NEG_INFINITY;
        for _ in 0..count {
            let beta = perturb_out_of_m(&random_moment_beta(3, rng), rng);
            let min = pmf_cells(&beta)?;
            largest_min = largest_min.max(min);
            if min >= -1e-8 {
                misses += 1;
            }
        }
        Ok((misses == 0, serde_json::json!({ "sequences": count, "misses": misses, "largest_min_mass": largest_min })))
    })
}

/// `check_lm_property` on random narrow and wide laws of dimension 2 to 4.
pub fn lm_property_check(models: usize, tuples: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    timed("lm-property", || {
        let (mut narrow, mut wide) = (0.0f64, 0.0f64);
        for i in 0..models {
            let d = 2 + i % 3;
            let p = random_narrow(d, rng);
            narrow = narrow.max(check_lm_property(&p, tuples, 20, rng).max_rel_violation);
            let w = random_wide(d, rng);
            wide = wide.max(check_lm_property(&w, tuples, 20, rng).max_rel_violation);
        }
        let worst = narrow.max(wide);
        Ok((worst <= 1e-12, serde_json::json!({ "models_per_family": models, "tuples": tuples, "narrow": narrow, "wide": wide })))
    })
}

/// Ratio criterion against exhaustive conditional monotonicity, plus the two sufficient classes.
pub fn mrti_iff_check(count: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    timed("mrti-iff", || {
        let mut disagreements = 0;
        let mut positives = 0;
        for _ in 0..count {
            let beta = random_m_beta(3, rng);
            let closed = mrti_exchangeable(&ExchangeableSeq::new(SeqRole::Beta, 3, beta.clone())?)?.mrti;
            let brute = mrti_bruteforce(&ExchangeableSurvival::from_raw(beta), 3)?.mrti;
            positives += usize::from(closed);
            disagreements += usize::from(closed != brute);
        }
        let mut lm_failures = 0;
        let mut moment_failures = 0;
        for _ in 0..count {
            let p: Vec<f64> = loop {
                let p: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..=1.0)).collect();
                if p.iter().product::<f64>() < 0.999 {
                    break p;
                }
            };
            let b = b_from_a(&a_from_p(&ExchangeableSeq::new(SeqRole::P, 3, p)?)?)?;
            lm_failures += usize::from(!mrti_exchangeable(&b)?.mrti);
            let m = random_moment_beta(3, rng);
            moment_failures += usize::from(!mrti_exchangeable(&ExchangeableSeq::new(SeqRole::Beta, 3, m)?)?.mrti);
        }
        let passed = disagreements == 0 && lm_failures == 0 && moment_failures == 0;
        Ok((
            passed,
            serde_json::json!({
                "sequences": count,
                "mrti_true": positives,
                "disagreements": disagreements,
                "log_monotone_failures": lm_failures,
                "moment_failures": moment_failures,
            }),
        ))
    })
}

/// Lower bounds `-1/2` for general wide laws and `-1/d` for exchangeable ones.
pub fn corr_bounds_check(count: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    timed("correlation-bounds", || {
        let mut general = f64::INFINITY;
        let mut redraws = 0;
        for i in 0..count {
            // Constant components (hit on every trial) have no correlation; draw again.
            let c = loop {
                match corr_wide(&random_wide(2 + i % 3, rng), 1, 2) {
                    Ok(c) => break c,
                    Err(Error::DegenerateComponent { .. }) => redraws += 1,
                    Err(e) => return Err(e),
                }
            };
            general = general.min(c);
        }
        let mut worst_exch = f64::INFINITY;
        for i in 0..count {
            let d = 2 + i % 3;
            let beta = random_m_beta(d, rng);
            let c = corr_exch_wide(&ExchangeableSeq::new(SeqRole::Beta, d, beta)?)?;
            worst_exch = worst_exch.min(c + 1.0 / d as f64);
        }
        let passed = general >= -0.5 - 1e-12 && worst_exch >= -1e-12;
        Ok((passed, serde_json::json!({ "samples": count, "redraws": redraws, "min_general": general, "min_exchangeable_margin": worst_exch })))
    })
}

/// Empirical grid of a sampler against its closed form.
pub fn sampler_check(sampler: &dyn Sampler, n: usize, grid_max: u64, seed: u64, workers: usize) -> CheckResult {
    timed(&format!("sampler-{}", sampler.model()), || {
        let batch = sample_batch(sampler, n, seed, workers)?;
        let analytic = analytic_grid(sampler.closed_form().as_ref(), grid_max);
        let c = compare_grids(&analytic, &empirical_grid(&batch, grid_max)?)?;
        Ok((c.pass, serde_json::to_value(&c)?))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Quick,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

/// Runs every harness; `quick` uses fewer models and samples.
pub fn run_suite(suite: Suite, seed: u64, workers: usize) -> SuiteReport {
    let scale = match suite {
        Suite::All => 1,
        Suite::Quick => 10,
    };
    let mut rng = rng_stream(seed, 1000);
    let mut checks = vec![
        bridge_check(100 / scale, &mut rng),
        exhaustive_check(50 / scale, 8, &mut rng),
        pmf_sufficiency_check(500 / scale, &mut rng),
        pmf_necessity_check(100 / scale, &mut rng),
        lm_property_check(50 / scale, 10_000 / scale, &mut rng),
        mrti_iff_check(200 / scale, &mut rng),
        corr_bounds_check(10_000 / scale, &mut rng),
    ];
    let n = 1_000_000 / scale;
    let narrow = random_narrow(3, &mut rng);
    let samplers: Vec<Box<dyn Sampler>> = vec![
        Box::new(WideSampler::new(wide_from_narrow(&narrow))),
        Box::new(NarrowSampler::new(narrow)),
        Box::new(DeFinettiSampler::new(InfDivLaw::Gamma { shape: 2.0, rate: 3.0 }, 3).expect("valid law")),
        Box::new(SieveSampler::new(Mixing::Uniform { low: 0.0, high: 1.0 }, 3).expect("valid mixing")),
    ];
    for s in &samplers {
        checks.push(sampler_check(s.as_ref(), n, 4, seed, workers));
    }
    let passed = checks.iter().all(|c| c.passed);
    SuiteReport { suite, seed, passed, checks }
}
