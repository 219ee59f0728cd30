//! Extending exchangeable laws by one dimension, Laplace moments of laws on
//! `[0, inf]`, and the family classification of leading-1 sequences.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exchangeable::{a_from_p, beta_from_ptilde, ExchangeableSeq, SeqRole};
use crate::sequences::{classify_sequence_with_tol, SequenceClassReport};
use crate::subset_algebra::binomial;
use crate::tol;

/// Feasible values of the first entry of the added parameter row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExtensionInterval {
    pub lower: f64,
    pub upper: f64,
    pub open_lower: bool,
    pub open_upper: bool,
    pub feasible: bool,
}

impl ExtensionInterval {
    pub fn contains(&self, q: f64) -> bool {
        if !self.feasible {
            return false;
        }
        let above = if self.open_lower { q > self.lower } else { q >= self.lower - tol::VALIDATION };
        let below = if self.open_upper { q < self.upper } else { q <= self.upper + tol::VALIDATION };
        above && below
    }

    fn from_bounds(lower: f64, upper: f64, open_lower: bool, open_upper: bool) -> Self {
        let feasible = lower <= upper + tol::VALIDATION && !(lower >= upper && (open_lower || open_upper));
        let upper = if feasible { upper.max(lower) } else { upper };
        ExtensionInterval { lower, upper, open_lower, open_upper, feasible }
    }
}

// Alternating partial sums: sum_{i <= t} (-1)^(t-i) x_i, for t = 1..=d.
fn alternating_sums(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for &v in x {
        acc = v - acc;
        out.push(acc);
    }
    out
}

/// Constraint indices visited in pairs, `k = 1..=d/2` (even `d`) or `1..=(d+1)/2` (odd `d`).
fn paired_indices(d: usize) -> Vec<usize> {
    let kmax = if d.is_multiple_of(2) { d / 2 } else { (d - 1) / 2 + 1 };
    let mut ts = Vec::new();
    for k in 1..=kmax {
        if 2 * k - 1 <= d {
            ts.push(2 * k - 1);
        }
        if 2 * k <= d {
            ts.push(2 * k);
        }
    }
    ts
}

/// Interval of `q = p_(1,d+1)` such that the narrow row extends by one dimension.
pub fn extend_one_narrow(row: &ExchangeableSeq) -> Result<ExtensionInterval> {
    a_from_p(row)?;
    let ln: Vec<f64> = row.values().iter().map(|v| v.ln()).collect();
    let sums = alternating_sums(&ln);
    let bounds = |ts: &[usize]| {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, 0.0f64);
        for &t in ts {
            let l = sums[t - 1];
            if t % 2 == 1 {
                lo = lo.max(l);
            } else {
                hi = hi.min(-l);
            }
        }
        (lo, hi)
    };
    let (lo, hi) = bounds(&paired_indices(row.dim()));
    debug_assert_eq!((lo, hi), bounds(&(1..=row.dim()).collect::<Vec<_>>()));
    Ok(ExtensionInterval::from_bounds(lo.exp(), hi.exp(), lo == f64::NEG_INFINITY, false))
}

/// Interval of `q = ptilde_(1,d+1)` such that the wide row extends by one dimension.
///
/// Besides the row entries staying in `[0, 1]`, the full-set probability of the
/// extended law must stay non-negative.
pub fn extend_one_wide(row: &ExchangeableSeq) -> Result<ExtensionInterval> {
    beta_from_ptilde(row)?;
    let d = row.dim();
    let v = row.values();
    let sums = alternating_sums(v);
    let bounds = |ts: &[usize]| {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for &t in ts {
            let w = sums[t - 1];
            if t % 2 == 1 {
                lo = lo.max(w - 1.0);
                hi = hi.min(w);
            } else {
                lo = lo.max(-w);
                hi = hi.min(1.0 - w);
            }
        }
        (lo, hi)
    };
    let (mut lo, mut hi) = bounds(&paired_indices(d));
    debug_assert_eq!((lo, hi), bounds(&(1..=d).collect::<Vec<_>>()));
    let full: f64 = 1.0 - (1..=d).map(|i| binomial(d as u64, (i - 1) as u64) as f64 * v[i - 1]).sum::<f64>();
    let w = sums[d - 1];
    if d.is_multiple_of(2) {
        hi = hi.min(full - w);
    } else {
        lo = lo.max(w - full);
    }
    Ok(ExtensionInterval::from_bounds(lo, hi, false, false))
}

/// Row of the `(d+1)`-dimensional narrow law obtained from `q`.
pub fn extended_row_narrow(row: &[f64], q: f64) -> Vec<f64> {
    let mut out = vec![q];
    for &p in row {
        let last = *out.last().expect("nonempty");
        out.push(p / last);
    }
    out
}

pub fn extended_row_wide(row: &[f64], q: f64) -> Vec<f64> {
    let mut out = vec![q];
    for &p in row {
        let last = *out.last().expect("nonempty");
        out.push(p - last);
    }
    out
}

/// Rows of all lower-dimensional marginals, from dimension `d` down to 1.
pub fn triangle(row: &[f64], multiplicative: bool) -> Vec<Vec<f64>> {
    let mut rows = vec![row.to_vec()];
    while rows.last().expect("nonempty").len() > 1 {
        let r = rows.last().expect("nonempty");
        let next = r
            .windows(2)
            .map(|w| if multiplicative { w[0] * w[1] } else { w[0] + w[1] })
            .collect();
        rows.push(next);
    }
    rows
}

/// Laws on `[0, inf]` with closed-form exponential moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InfDivLaw {
    /// Point mass at `at`; `null` means infinity.
    Degenerate { at: Option<f64> },
    Gamma { shape: f64, rate: f64 },
    /// Poisson number of exponential jumps.
    CompoundPoissonExp { intensity: f64, jump_rate: f64 },
    /// Geometric on `{1, 2, ...}` with ratio `p`, finite with probability `mass`.
    GeometricKilled { p: f64, mass: f64 },
    /// Value `at` with probability `mass`, infinity otherwise.
    KilledDegenerate { at: f64, mass: f64 },
    /// Value `level` with probability `q`, zero otherwise. Not infinitely divisible.
    Bernoulli { q: f64, level: f64 },
}

fn need(cond: bool, what: &str, value: f64) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::OutOfRange { what: what.into(), value })
    }
}

impl InfDivLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InfDivLaw::Degenerate { at } => need(at.is_none_or(|x| x >= 0.0 && x.is_finite()), "at", at.unwrap_or(0.0)),
            InfDivLaw::Gamma { shape, rate } => {
                need(shape > 0.0 && shape.is_finite(), "shape", shape)?;
                need(rate > 0.0 && rate.is_finite(), "rate", rate)
            }
            InfDivLaw::CompoundPoissonExp { intensity, jump_rate } => {
                need(intensity >= 0.0 && intensity.is_finite(), "intensity", intensity)?;
                need(jump_rate > 0.0 && jump_rate.is_finite(), "jump_rate", jump_rate)
            }
            InfDivLaw::GeometricKilled { p, mass } => {
                need((0.0..1.0).contains(&p), "p", p)?;
                need(mass > 0.0 && mass <= 1.0, "mass", mass)
            }
            InfDivLaw::KilledDegenerate { at, mass } => {
                need(at >= 0.0 && at.is_finite(), "at", at)?;
                need(mass > 0.0 && mass <= 1.0, "mass", mass)
            }
            InfDivLaw::Bernoulli { q, level } => {
                need((0.0..=1.0).contains(&q), "q", q)?;
                need(level >= 0.0 && level.is_finite(), "level", level)
            }
        }
    }

    pub fn infinitely_divisible(&self) -> bool {
        !matches!(self, InfDivLaw::Bernoulli { .. })
    }

    /// `E[exp(-k X)]` with `exp(-inf) = 0`.
    pub fn laplace(&self, k: f64) -> f64 {
        if k == 0.0 {
            return 1.0;
        }
        match *self {
            InfDivLaw::Degenerate { at: Some(x) } => (-k * x).exp(),
            InfDivLaw::Degenerate { at: None } => 0.0,
            InfDivLaw::Gamma { shape, rate } => (rate / (rate + k)).powf(shape),
            InfDivLaw::CompoundPoissonExp { intensity, jump_rate } => (-intensity * k / (jump_rate + k)).exp(),
            InfDivLaw::GeometricKilled { p, mass } => mass * (1.0 - p) * (-k).exp() / (1.0 - p * (-k).exp()),
            InfDivLaw::KilledDegenerate { at, mass } => mass * (-k * at).exp(),
            InfDivLaw::Bernoulli { q, level } => (1.0 - q) + q * (-k * level).exp(),
        }
    }

    pub fn prob_zero(&self) -> f64 {
        match *self {
            InfDivLaw::Degenerate { at } => f64::from(at == Some(0.0)),
            InfDivLaw::Gamma { .. } | InfDivLaw::GeometricKilled { .. } => 0.0,
            InfDivLaw::CompoundPoissonExp { intensity, .. } => (-intensity).exp(),
            InfDivLaw::KilledDegenerate { at, mass } => if at == 0.0 { mass } else { 0.0 },
            InfDivLaw::Bernoulli { q, level } => if level == 0.0 { 1.0 } else { 1.0 - q },
        }
    }

    /// One draw; infinity is returned as `f64::INFINITY`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InfDivLaw::Degenerate { at } => at.unwrap_or(f64::INFINITY),
            InfDivLaw::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate).expect("validated").sample(rng),
            InfDivLaw::CompoundPoissonExp { intensity, jump_rate } => {
                if intensity == 0.0 {
                    return 0.0;
                }
                let n = Poisson::new(intensity).expect("validated").sample(rng) as u64;
                let jump = Exp::new(jump_rate).expect("validated");
                (0..n).map(|_| jump.sample(rng)).sum()
            }
            InfDivLaw::GeometricKilled { p, mass } => {
                if rng.random::<f64>() >= mass {
                    return f64::INFINITY;
                }
                crate::samplers::sample_geometric_unchecked(1.0 - p, rng) as f64
            }
            InfDivLaw::KilledDegenerate { at, mass } => {
                if rng.random::<f64>() < mass { at } else { f64::INFINITY }
            }
            InfDivLaw::Bernoulli { q, level } => {
                if rng.random::<f64>() < q { level } else { 0.0 }
            }
        }
    }
}

/// `(1, E[e^-X], ..., E[e^-dX])`, tagged `b` for infinitely divisible laws and `beta` otherwise.
pub fn laplace_moments(law: &InfDivLaw, d: usize) -> Result<ExchangeableSeq> {
    law.validate()?;
    let values = (0..=d).map(|k| law.laplace(k as f64)).collect();
    let role = if law.infinitely_divisible() { SeqRole::B } else { SeqRole::Beta };
    ExchangeableSeq::new(role, d, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyTag {
    #[serde(rename = "G^{W,X}")]
    WideExchangeable,
    #[serde(rename = "G^{N,X}")]
    NarrowExchangeable,
    #[serde(rename = "G^{W,E}")]
    WideExtendible,
    #[serde(rename = "G^{N,E}")]
    NarrowExtendible,
    #[serde(rename = "DEGENERATE")]
    Degenerate,
    #[serde(rename = "NOT_A_SURVIVAL")]
    NotASurvival,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyReport {
    pub family: FamilyTag,
    /// Every family the sequence belongs to.
    pub memberships: Vec<FamilyTag>,
    /// Set when the narrow extendible verdict rests on the finite power battery.
    pub heuristic: bool,
    #[serde(flatten)]
    pub report: SequenceClassReport,
}

pub fn classify_family(seq: &ExchangeableSeq) -> Result<FamilyReport> {
    classify_family_with_tol(seq, tol::MEMBERSHIP, tol::EIGEN)
}

pub fn classify_family_with_tol(seq: &ExchangeableSeq, tol: f64, eigen_tol: f64) -> Result<FamilyReport> {
    if !seq.role().has_leading_one() {
        return Err(Error::InvalidSequence { reason: "expected a b or beta sequence".into() });
    }
    let report = classify_sequence_with_tol(seq.values(), tol, eigen_tol)?;
    if seq.is_degenerate() {
        return Ok(FamilyReport { family: FamilyTag::Degenerate, memberships: vec![FamilyTag::Degenerate], heuristic: false, report });
    }
    let mut memberships = Vec::new();
    if report.in_m {
        memberships.push(FamilyTag::WideExchangeable);
    }
    if report.in_lm {
        memberships.push(FamilyTag::NarrowExchangeable);
    }
    if report.hankel_extendible && report.in_m {
        memberships.push(FamilyTag::WideExtendible);
    }
    let narrow_ext = report.in_lm && report.lm_extendible == Some(true);
    if narrow_ext {
        memberships.push(FamilyTag::NarrowExtendible);
    }
    let family = if !report.in_m {
        FamilyTag::NotASurvival
    } else if narrow_ext {
        FamilyTag::NarrowExtendible
    } else if report.in_lm {
        FamilyTag::NarrowExchangeable
    } else if report.hankel_extendible {
        FamilyTag::WideExtendible
    } else {
        FamilyTag::WideExchangeable
    };
    let heuristic = narrow_ext && !report.lm_extendible_exact;
    Ok(FamilyReport { family, memberships, heuristic, report })
}
