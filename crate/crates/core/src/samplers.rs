//! Exact stochastic constructions of the four geometric models, seeded
//! per-worker substreams, and sample batches with provenance.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exchangeable::ExchangeableSurvival;
use crate::extendibility::{laplace_moments, InfDivLaw};
use crate::shock_models::{FillPolicy, GeneralLaw, NarrowParams, ParamDocument, SurvivalFunction, WideParams};

pub const RNG_NAME: &str = "chacha8";
const MAX_TRIALS: u64 = 1_000_000_000;

/// The generator behind every stream: seed plus worker index selects a substream.
pub fn rng_stream(seed: u64, worker: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker);
    rng
}

/// `Geo(success_prob)` on `{1, 2, ...}` by inverse CDF.
pub fn sample_geometric<R: Rng + ?Sized>(success_prob: f64, rng: &mut R) -> Result<u64> {
    if !(success_prob > 0.0 && success_prob <= 1.0) {
        return Err(Error::OutOfRange { what: "success_prob".into(), value: success_prob });
    }
    Ok(sample_geometric_unchecked(success_prob, rng))
}

pub(crate) fn sample_geometric_unchecked<R: Rng + ?Sized>(success_prob: f64, rng: &mut R) -> u64 {
    if success_prob >= 1.0 {
        return 1;
    }
    // U in (0, 1].
    let u = 1.0 - rng.random::<f64>();
    let t = (u.ln() / (-success_prob).ln_1p()).ceil();
    (t as u64).max(1)
}

/// One model that draws `d`-vectors of geometric times.
pub trait Sampler: Send + Sync {
    fn model(&self) -> &'static str;
    fn dim(&self) -> usize;
    /// Parameters as hashed into the provenance digest.
    fn describe(&self) -> serde_json::Value;
    /// The survival function the draws follow.
    fn closed_form(&self) -> Box<dyn SurvivalFunction + '_>;
    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [u64]) -> Result<()>;
}

pub struct NarrowSampler {
    params: NarrowParams,
    // (mask, success probability) for every shock that can fire.
    shocks: Vec<(u32, f64)>,
}

impl NarrowSampler {
    pub fn new(params: NarrowParams) -> Self {
        let shocks = params
            .dense()
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &p)| p < 1.0)
            .map(|(m, &p)| (m as u32, 1.0 - p))
            .collect();
        NarrowSampler { params, shocks }
    }
}

impl Sampler for NarrowSampler {
    fn model(&self) -> &'static str {
        "narrow"
    }
    fn dim(&self) -> usize {
        self.params.dim()
    }
    fn describe(&self) -> serde_json::Value {
        serde_json::to_value(GeneralLaw::Narrow(self.params.clone()).to_document()).expect("plain data")
    }
    fn closed_form(&self) -> Box<dyn SurvivalFunction + '_> {
        Box::new(&self.params)
    }
    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [u64]) -> Result<()> {
        out.fill(u64::MAX);
        for &(mask, s) in &self.shocks {
            let e = sample_geometric_unchecked(s, rng);
            for (k, slot) in out.iter_mut().enumerate() {
                if mask & (1 << k) != 0 && e < *slot {
                    *slot = e;
                }
            }
        }
        Ok(())
    }
}

pub struct WideSampler {
    params: WideParams,
    masks: Vec<u32>,
    cumulative: Vec<f64>,
}

impl WideSampler {
    pub fn new(params: WideParams) -> Self {
        let mut masks = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (m, &p) in params.dense().iter().enumerate() {
            if p > 0.0 {
                acc += p;
                masks.push(m as u32);
                cumulative.push(acc);
            }
        }
        WideSampler { params, masks, cumulative }
    }

    fn outcome(&self, rng: &mut ChaCha8Rng) -> u32 {
        let u = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.masks[i.min(self.masks.len() - 1)]
    }
}

impl Sampler for WideSampler {
    fn model(&self) -> &'static str {
        "wide"
    }
    fn dim(&self) -> usize {
        self.params.dim()
    }
    fn describe(&self) -> serde_json::Value {
        serde_json::to_value(GeneralLaw::Wide(self.params.clone()).to_document()).expect("plain data")
    }
    fn closed_form(&self) -> Box<dyn SurvivalFunction + '_> {
        Box::new(&self.params)
    }
    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [u64]) -> Result<()> {
        let d = out.len();
        let full = (1u32 << d) - 1;
        let mut seen = 0u32;
        let mut trial = 0u64;
        while seen != full {
            trial += 1;
            if trial > MAX_TRIALS {
                return Err(Error::TooLarge { reason: format!("wide sampler exceeded {MAX_TRIALS} trials") });
            }
            let fresh = self.outcome(rng) & !seen;
            for (k, slot) in out.iter_mut().enumerate() {
                if fresh & (1 << k) != 0 {
                    *slot = trial;
                }
            }
            seen |= fresh;
        }
        Ok(())
    }
}

/// Random-walk construction: `tau_k = min{n : X_1 + ... + X_n >= E_k}`.
pub struct DeFinettiSampler {
    law: InfDivLaw,
    d: usize,
}

impl DeFinettiSampler {
    pub fn new(law: InfDivLaw, d: usize) -> Result<Self> {
        law.validate()?;
        if d == 0 {
            return Err(Error::OutOfRange { what: "d".into(), value: 0.0 });
        }
        if law.prob_zero() >= 1.0 {
            return Err(Error::DegenerateAtZero);
        }
        Ok(DeFinettiSampler { law, d })
    }
}

impl Sampler for DeFinettiSampler {
    fn model(&self) -> &'static str {
        "definetti"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "law": self.law, "d": self.d })
    }
    fn closed_form(&self) -> Box<dyn SurvivalFunction + '_> {
        let b = laplace_moments(&self.law, self.d).expect("validated");
        Box::new(ExchangeableSurvival::from_raw(b.values().to_vec()))
    }
    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [u64]) -> Result<()> {
        let thresholds: Vec<f64> = (0..out.len()).map(|_| Exp1.sample(rng)).collect();
        let top = thresholds.iter().copied().fold(0.0, f64::max);
        out.fill(0);
        let mut walk = 0.0;
        let mut n = 0u64;
        while walk < top {
            n += 1;
            if n > MAX_TRIALS {
                return Err(Error::TooLarge { reason: format!("walk exceeded {MAX_TRIALS} steps") });
            }
            // An infinite increment ends the walk: every remaining threshold is crossed.
            walk += self.law.sample(rng);
            for (slot, &e) in out.iter_mut().zip(&thresholds) {
                if *slot == 0 && walk >= e {
                    *slot = n;
                }
            }
        }
        Ok(())
    }
}

/// Laws on `[0, 1]` driving the Bernoulli sieve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mixing {
    PointMass { at: f64 },
    Uniform { low: f64, high: f64 },
    /// Piecewise-linear inverse CDF through equally spaced probability levels.
    QuantileTable { quantiles: Vec<f64> },
    /// `Y = exp(-X)` for `X` drawn from `law`.
    ExpNeg { law: InfDivLaw },
}

impl Mixing {
    pub fn validate(&self) -> Result<()> {
        let unit = |what: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::OutOfRange { what: what.into(), value: v })
            }
        };
        match self {
            Mixing::PointMass { at } => unit("at", *at)?,
            Mixing::Uniform { low, high } => {
                unit("low", *low)?;
                unit("high", *high)?;
                if low > high {
                    return Err(Error::OutOfRange { what: "low".into(), value: *low });
                }
            }
            Mixing::QuantileTable { quantiles } => {
                if quantiles.len() < 2 {
                    return Err(Error::TooShort { min: 2, len: quantiles.len() });
                }
                for &q in quantiles {
                    unit("quantile", q)?;
                }
                if quantiles.windows(2).any(|w| w[0] > w[1]) {
                    return Err(Error::InvalidSequence { reason: "quantiles must be nondecreasing".into() });
                }
            }
            Mixing::ExpNeg { law } => law.validate()?,
        }
        if self.prob_below_one() <= 0.0 {
            return Err(Error::MixingDegenerateAtOne);
        }
        Ok(())
    }

    fn prob_below_one(&self) -> f64 {
        match self {
            Mixing::PointMass { at } => f64::from(*at < 1.0),
            Mixing::Uniform { low, high } => f64::from(*low < 1.0 || *high < 1.0),
            Mixing::QuantileTable { quantiles } => f64::from(quantiles[0] < 1.0),
            Mixing::ExpNeg { law } => 1.0 - law.prob_zero(),
        }
    }

    /// `E[Y^k]`.
    pub fn moment(&self, k: u32) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let kf = k as f64;
        let segment = |a: f64, b: f64| {
            if (b - a).abs() < 1e-300 {
                a.powi(k as i32)
            } else {
                (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / ((kf + 1.0) * (b - a))
            }
        };
        match self {
            Mixing::PointMass { at } => at.powi(k as i32),
            Mixing::Uniform { low, high } => segment(*low, *high),
            Mixing::QuantileTable { quantiles } => {
                let m = (quantiles.len() - 1) as f64;
                quantiles.windows(2).map(|w| segment(w[0], w[1])).sum::<f64>() / m
            }
            Mixing::ExpNeg { law } => law.laplace(kf),
        }
    }

    pub fn moments(&self, d: usize) -> Vec<f64> {
        (0..=d as u32).map(|k| self.moment(k)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Mixing::PointMass { at } => *at,
            Mixing::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            Mixing::QuantileTable { quantiles } => {
                let m = (quantiles.len() - 1) as f64;
                let u = rng.random::<f64>() * m;
                let i = (u as usize).min(quantiles.len() - 2);
                let t = u - i as f64;
                quantiles[i] + (quantiles[i + 1] - quantiles[i]) * t
            }
            Mixing::ExpNeg { law } => (-law.sample(rng)).exp(),
        }
    }
}

/// Multi-round coin drop: in round `n` each remaining player leaves with probability `1 - Y_n`.
pub struct SieveSampler {
    mixing: Mixing,
    d: usize,
}

impl SieveSampler {
    pub fn new(mixing: Mixing, d: usize) -> Result<Self> {
        mixing.validate()?;
        if d == 0 {
            return Err(Error::OutOfRange { what: "d".into(), value: 0.0 });
        }
        Ok(SieveSampler { mixing, d })
    }
}

impl Sampler for SieveSampler {
    fn model(&self) -> &'static str {
        "sieve"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "mixing": self.mixing, "d": self.d })
    }
    fn closed_form(&self) -> Box<dyn SurvivalFunction + '_> {
        Box::new(ExchangeableSurvival::from_raw(self.mixing.moments(self.d)))
    }
    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [u64]) -> Result<()> {
        out.fill(0);
        let mut remaining = out.len();
        let mut round = 0u64;
        while remaining > 0 {
            round += 1;
            if round > MAX_TRIALS {
                return Err(Error::TooLarge { reason: format!("sieve exceeded {MAX_TRIALS} rounds") });
            }
            let y = self.mixing.sample(rng);
            for slot in out.iter_mut().filter(|s| **s == 0) {
                if rng.random::<f64>() >= y {
                    *slot = round;
                    remaining -= 1;
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub params_digest: String,
    pub seed: u64,
    pub workers: u64,
    pub rng: String,
    pub d: usize,
    pub n_samples: usize,
}

/// Draws stored row-major, one `d`-vector per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub d: usize,
    pub n_samples: usize,
    pub data: Vec<u64>,
    pub provenance: Option<Provenance>,
}

impl SampleBatch {
    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.data.len() * 3 + 16);
        let header: Vec<String> = (1..=self.d).map(|k| format!("tau{k}")).collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for row in self.rows() {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                write!(s, "{v}").expect("writing to a string");
            }
            s.push('\n');
        }
        s
    }

    /// Writes the CSV to `path` and the provenance to `<path>.meta.json`.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        if let Some(p) = &self.provenance {
            let mut meta = path.as_os_str().to_owned();
            meta.push(".meta.json");
            std::fs::write(meta, serde_json::to_string_pretty(p)? + "\n")?;
        }
        Ok(())
    }
}

pub fn params_digest(params: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(params).expect("json values serialize");
    hex::encode(Sha256::digest(bytes))
}

fn draw_rows(sampler: &dyn Sampler, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    let d = sampler.dim();
    let mut data = vec![0u64; n * d];
    for row in data.chunks_exact_mut(d) {
        sampler.draw(rng, row)?;
    }
    Ok(data)
}

/// Draws `n_samples` rows on one caller-owned stream.
pub fn sample_with(sampler: &dyn Sampler, n_samples: usize, rng: &mut ChaCha8Rng) -> Result<SampleBatch> {
    let data = draw_rows(sampler, n_samples, rng)?;
    Ok(SampleBatch { d: sampler.dim(), n_samples, data, provenance: None })
}

/// Splits the batch over `workers` substreams and concatenates by worker index.
pub fn sample_batch(sampler: &dyn Sampler, n_samples: usize, seed: u64, workers: usize) -> Result<SampleBatch> {
    let workers = workers.max(1);
    let base = n_samples / workers;
    let extra = n_samples % workers;
    let parts: Vec<Result<Vec<u64>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let count = base + usize::from(w < extra);
                scope.spawn(move || draw_rows(sampler, count, &mut rng_stream(seed, w as u64)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampler thread panicked")).collect()
    });
    let mut data = Vec::with_capacity(n_samples * sampler.dim());
    for part in parts {
        data.extend(part?);
    }
    let provenance = Provenance {
        model: sampler.model().into(),
        params_digest: params_digest(&sampler.describe()),
        seed,
        workers: workers as u64,
        rng: RNG_NAME.into(),
        d: sampler.dim(),
        n_samples,
    };
    Ok(SampleBatch { d: sampler.dim(), n_samples, data, provenance: Some(provenance) })
}

pub fn sample_narrow(params: &NarrowParams, n_samples: usize, rng: &mut ChaCha8Rng) -> SampleBatch {
    sample_with(&NarrowSampler::new(params.clone()), n_samples, rng).expect("narrow draws cannot fail")
}

pub fn sample_wide(params: &WideParams, n_samples: usize, rng: &mut ChaCha8Rng) -> Result<SampleBatch> {
    sample_with(&WideSampler::new(params.clone()), n_samples, rng)
}

pub fn sample_definetti(law: &InfDivLaw, d: usize, n_samples: usize, rng: &mut ChaCha8Rng) -> Result<SampleBatch> {
    sample_with(&DeFinettiSampler::new(law.clone(), d)?, n_samples, rng)
}

pub fn sample_bernoulli_sieve(mixing: &Mixing, d: usize, n_samples: usize, rng: &mut ChaCha8Rng) -> Result<SampleBatch> {
    sample_with(&SieveSampler::new(mixing.clone(), d)?, n_samples, rng)
}

type Builder = fn(&serde_json::Value, FillPolicy) -> Result<Box<dyn Sampler>>;

/// Model name to sampler constructor, keyed as on the command line.
pub struct SamplerRegistry {
    builders: BTreeMap<&'static str, Builder>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LawDocument {
    law: InfDivLaw,
    d: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MixingDocument {
    mixing: Mixing,
    d: usize,
}

fn general(doc: &serde_json::Value, fill: FillPolicy) -> Result<GeneralLaw> {
    let doc: ParamDocument = serde_json::from_value(doc.clone())?;
    doc.validate(fill)
}

fn build_narrow(doc: &serde_json::Value, fill: FillPolicy) -> Result<Box<dyn Sampler>> {
    match general(doc, fill)? {
        GeneralLaw::Narrow(p) => Ok(Box::new(NarrowSampler::new(p))),
        GeneralLaw::Wide(_) => Err(Error::UnknownModel { name: "narrow sampler needs a narrow document".into() }),
    }
}

fn build_wide(doc: &serde_json::Value, fill: FillPolicy) -> Result<Box<dyn Sampler>> {
    match general(doc, fill)? {
        GeneralLaw::Wide(p) => Ok(Box::new(WideSampler::new(p))),
        GeneralLaw::Narrow(p) => Ok(Box::new(WideSampler::new(crate::shock_models::wide_from_narrow(&p)))),
    }
}

fn build_definetti(doc: &serde_json::Value, _: FillPolicy) -> Result<Box<dyn Sampler>> {
    let doc: LawDocument = serde_json::from_value(doc.clone())?;
    Ok(Box::new(DeFinettiSampler::new(doc.law, doc.d)?))
}

fn build_sieve(doc: &serde_json::Value, _: FillPolicy) -> Result<Box<dyn Sampler>> {
    let doc: MixingDocument = serde_json::from_value(doc.clone())?;
    Ok(Box::new(SieveSampler::new(doc.mixing, doc.d)?))
}

impl Default for SamplerRegistry {
    fn default() -> Self {
        let mut builders: BTreeMap<&'static str, Builder> = BTreeMap::new();
        builders.insert("narrow", build_narrow);
        builders.insert("wide", build_wide);
        builders.insert("definetti", build_definetti);
        builders.insert("sieve", build_sieve);
        SamplerRegistry { builders }
    }
}

impl SamplerRegistry {
    pub fn models(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.builders.keys().copied()
    }

    pub fn register(&mut self, name: &'static str, builder: Builder) {
        self.builders.insert(name, builder);
    }

    pub fn build(&self, model: &str, doc: &serde_json::Value, fill: FillPolicy) -> Result<Box<dyn Sampler>> {
        let builder = self.builders.get(model).ok_or_else(|| Error::UnknownModel { name: model.into() })?;
        builder(doc, fill)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartitionStats {
    pub k: usize,
    /// Block sizes in order of increasing time.
    pub blocks: Vec<usize>,
}

pub fn partition_stats(draw: &[u64]) -> PartitionStats {
    let mut sorted = draw.to_vec();
    sorted.sort_unstable();
    let mut blocks: Vec<usize> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        if i > 0 && sorted[i - 1] == *v {
            *blocks.last_mut().expect("nonempty") += 1;
        } else {
            blocks.push(1);
        }
    }
    PartitionStats { k: blocks.len(), blocks }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// `|value - target| <= 3 std_error`.
    pub fn within_3_sigma(&self, target: f64) -> bool {
        (self.value - target).abs() <= 3.0 * self.std_error
    }
}

fn pearson(xs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut n, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in xs {
        n += 1.0;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let cov = sxy / n - (sx / n) * (sy / n);
    let vx = sxx / n - (sx / n).powi(2);
    let vy = syy / n - (sy / n).powi(2);
    cov / (vx * vy).sqrt()
}

/// Pearson correlation of 0-based columns `i`, `j` with a batch-means standard error.
pub fn empirical_correlation(batch: &SampleBatch, i: usize, j: usize) -> Result<Estimate> {
    const BLOCKS: usize = 100;
    if batch.n_samples < 2 * BLOCKS {
        return Err(Error::EmptyBatch);
    }
    let pair = |r: &[u64]| (r[i] as f64, r[j] as f64);
    let value = pearson(batch.rows().map(pair));
    let size = batch.n_samples / BLOCKS;
    let means: Vec<f64> = (0..BLOCKS)
        .map(|b| pearson((b * size..(b + 1) * size).map(|r| pair(batch.row(r)))))
        .collect();
    let mean = means.iter().sum::<f64>() / BLOCKS as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (BLOCKS - 1) as f64;
    Ok(Estimate { value, std_error: (var / BLOCKS as f64).sqrt() })
}

/// Sample mean of 0-based column `i` with its standard error.
pub fn empirical_mean(batch: &SampleBatch, i: usize) -> Result<Estimate> {
    if batch.n_samples < 2 {
        return Err(Error::EmptyBatch);
    }
    let n = batch.n_samples as f64;
    let mean = batch.rows().map(|r| r[i] as f64).sum::<f64>() / n;
    let var = batch.rows().map(|r| (r[i] as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Estimate { value: mean, std_error: (var / n).sqrt() })
}
