//! General narrow- and wide-sense laws: validation, survival functions,
//! probability masses and conversions.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subset_algebra::{check_dim, full_bits, order_stats, SubsetMask, SubsetParamMap};
use crate::tol;

/// Anything that can report `P(tau_1 > n_1, ..., tau_d > n_d)`.
pub trait SurvivalFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn survival(&self, n: &[u64]) -> f64;
}

impl<T: SurvivalFunction + ?Sized> SurvivalFunction for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn survival(&self, n: &[u64]) -> f64 {
        (**self).survival(n)
    }
}

impl<T: SurvivalFunction + ?Sized> SurvivalFunction for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn survival(&self, n: &[u64]) -> f64 {
        (**self).survival(n)
    }
}

/// Adapter turning a closure into a [`SurvivalFunction`].
pub struct FnSurvival<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[u64]) -> f64 + Send + Sync> SurvivalFunction for FnSurvival<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn survival(&self, n: &[u64]) -> f64 {
        (self.f)(n)
    }
}

// Shock parameters, one per nonempty subset.
#[derive(Clone, Debug, PartialEq)]
pub struct NarrowParams {
    dim: usize,
    p: Vec<f64>,
    ln_p: Vec<f64>,
}

impl NarrowParams {
    /// `p[mask]` for every mask; entry 0 is ignored.
    pub fn from_dense(dim: usize, mut p: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if p.len() != 1usize << dim {
            return Err(Error::DimensionMismatch { expected: 1 << dim, got: p.len() });
        }
        if dim == 0 {
            return Err(Error::InvalidSequence { reason: "dimension must be at least 1".into() });
        }
        p[0] = 1.0;
        for (mask, &v) in p.iter().enumerate().skip(1) {
            if !(0.0..=1.0).contains(&v) || v.is_nan() {
                return Err(Error::RangeViolation { mask: mask as u32, value: v });
            }
        }
        for k in 0..dim {
            let prod: f64 = (1..p.len()).filter(|m| m & (1 << k) != 0).map(|m| p[m]).product();
            if prod >= 1.0 {
                return Err(Error::DegenerateComponent { component: k + 1 });
            }
        }
        let ln_p = p.iter().map(|v| v.ln()).collect();
        Ok(NarrowParams { dim, p, ln_p })
    }

    pub fn dense(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, mask: u32) -> f64 {
        self.p[mask as usize]
    }

    pub fn to_map(&self) -> SubsetParamMap {
        SubsetParamMap::from_dense(self.dim, &self.p, true).expect("dimension already checked")
    }

    /// Success probability of the geometric marginal of 1-based component `k`.
    pub fn marginal_success(&self, k: usize) -> f64 {
        let bit = 1usize << (k - 1);
        let prod: f64 = (1..self.p.len()).filter(|m| m & bit != 0).map(|m| self.p[m]).product();
        1.0 - prod
    }
}

impl SurvivalFunction for NarrowParams {
    fn dim(&self) -> usize {
        self.dim
    }
    fn survival(&self, n: &[u64]) -> f64 {
        survival_narrow(self, n)
    }
}

pub fn validate_narrow(raw: &SubsetParamMap, dim: usize) -> Result<NarrowParams> {
    check_dim(dim)?;
    if raw.dim != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: raw.dim });
    }
    if raw.entries.contains_key(&0) {
        return Err(Error::UnexpectedKey { key: "0".into() });
    }
    let mut p = vec![1.0; 1 << dim];
    for (mask, slot) in p.iter_mut().enumerate().skip(1) {
        *slot = raw.get(mask as u32).ok_or(Error::MissingKey { mask: mask as u32 })?;
    }
    if let Some((&mask, _)) = raw.entries.iter().find(|(&m, _)| (m as usize) >= p.len()) {
        return Err(Error::UnexpectedKey { key: mask.to_string() });
    }
    NarrowParams::from_dense(dim, p)
}

/// `prod_I p_I^(max_{i in I} n_i)` evaluated in the log domain.
pub fn survival_narrow(params: &NarrowParams, n: &[u64]) -> f64 {
    assert_eq!(n.len(), params.dim, "argument length must match the dimension");
    let size = 1usize << params.dim;
    let mut max_n = vec![0u64; size];
    let mut log = 0.0;
    for mask in 1..size {
        let low = mask.trailing_zeros() as usize;
        let m = max_n[mask & (mask - 1)].max(n[low]);
        max_n[mask] = m;
        if m == 0 {
            continue;
        }
        let lp = params.ln_p[mask];
        if lp == f64::NEG_INFINITY {
            return 0.0;
        }
        log += m as f64 * lp;
    }
    log.exp()
}

// Outcome probabilities of one categorical trial, one per subset.
#[derive(Clone, Debug, PartialEq)]
pub struct WideParams {
    dim: usize,
    pt: Vec<f64>,
    // Sum of pt over all subsets of the index mask.
    below: Vec<f64>,
}

impl WideParams {
    pub fn from_dense(dim: usize, pt: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if dim == 0 {
            return Err(Error::InvalidSequence { reason: "dimension must be at least 1".into() });
        }
        if pt.len() != 1usize << dim {
            return Err(Error::DimensionMismatch { expected: 1 << dim, got: pt.len() });
        }
        for (mask, &v) in pt.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) || v.is_nan() {
                return Err(Error::RangeViolation { mask: mask as u32, value: v });
            }
        }
        let sum: f64 = pt.iter().sum();
        if (sum - 1.0).abs() > tol::VALIDATION {
            return Err(Error::SumNotOne { sum });
        }
        let pt: Vec<f64> = pt.iter().map(|v| v / sum).collect();
        for k in 0..dim {
            if !pt.iter().enumerate().any(|(m, &v)| m & (1 << k) != 0 && v > 0.0) {
                return Err(Error::DegenerateComponent { component: k + 1 });
            }
        }
        let mut below = pt.clone();
        for k in 0..dim {
            for m in 0..below.len() {
                if m & (1 << k) != 0 {
                    below[m] += below[m ^ (1 << k)];
                }
            }
        }
        Ok(WideParams { dim, pt, below })
    }

    pub fn dense(&self) -> &[f64] {
        &self.pt
    }

    pub fn get(&self, mask: u32) -> f64 {
        self.pt[mask as usize]
    }

    /// Total probability of outcomes contained in `mask`.
    pub fn mass_within(&self, mask: u32) -> f64 {
        self.below[mask as usize]
    }

    pub fn to_map(&self) -> SubsetParamMap {
        SubsetParamMap::from_dense(self.dim, &self.pt, false).expect("dimension already checked")
    }

    pub fn marginal_success(&self, k: usize) -> f64 {
        1.0 - self.below[(full_bits(self.dim) ^ (1 << (k - 1))) as usize]
    }
}

impl SurvivalFunction for WideParams {
    fn dim(&self) -> usize {
        self.dim
    }
    fn survival(&self, n: &[u64]) -> f64 {
        survival_wide(self, n)
    }
}

pub fn validate_wide(raw: &SubsetParamMap, dim: usize) -> Result<WideParams> {
    check_dim(dim)?;
    if raw.dim != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: raw.dim });
    }
    let mut pt = vec![0.0; 1 << dim];
    for (mask, slot) in pt.iter_mut().enumerate() {
        *slot = raw.get(mask as u32).ok_or(Error::MissingKey { mask: mask as u32 })?;
    }
    WideParams::from_dense(dim, pt)
}

pub fn survival_wide(params: &WideParams, n: &[u64]) -> f64 {
    assert_eq!(n.len(), params.dim, "argument length must match the dimension");
    let (_, perm) = order_stats(n);
    wide_product(params, n, &perm)
}

/// Survival with a caller-chosen ordering; `perm` must sort `n` ascending.
pub fn survival_wide_with_perm(params: &WideParams, n: &[u64], perm: &[usize]) -> Result<f64> {
    let mut seen = vec![false; n.len()];
    if perm.len() != n.len() {
        return Err(Error::DimensionMismatch { expected: n.len(), got: perm.len() });
    }
    for &i in perm {
        if i >= n.len() || seen[i] {
            return Err(Error::InvalidSequence { reason: "not a permutation".into() });
        }
        seen[i] = true;
    }
    if perm.windows(2).any(|w| n[w[0]] > n[w[1]]) {
        return Err(Error::InvalidSequence { reason: "permutation does not sort the argument".into() });
    }
    Ok(wide_product(params, n, perm))
}

fn wide_product(params: &WideParams, n: &[u64], perm: &[usize]) -> f64 {
    let mut done = 0usize;
    let mut prev = 0u64;
    let mut log = 0.0;
    for &i in perm {
        let e = n[i] - prev;
        if e > 0 {
            let base = params.below[done];
            if base <= 0.0 {
                return 0.0;
            }
            log += e as f64 * base.ln();
        }
        prev = n[i];
        done |= 1 << i;
    }
    log.exp()
}

/// Result of an inclusion-exclusion pmf evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PmfValue {
    pub value: f64,
    pub raw: f64,
    /// A small negative rounding residue was set to zero.
    pub clamped: bool,
    /// The raw mass is negative beyond rounding: a rectangle inequality fails.
    pub violation: bool,
}

/// `P(tau = n)` for `n` with all entries at least 1.
pub fn pmf<S: SurvivalFunction + ?Sized>(sf: &S, n: &[u64]) -> Result<PmfValue> {
    let d = sf.dim();
    if n.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: n.len() });
    }
    if let Some(&v) = n.iter().find(|&&v| v == 0) {
        return Err(Error::OutOfRange { what: "pmf argument".into(), value: v as f64 });
    }
    let mut arg = vec![0u64; d];
    let mut raw = 0.0;
    for s in 0..(1usize << d) {
        for i in 0..d {
            arg[i] = n[i] - 1 + u64::from(s & (1 << i) != 0);
        }
        let v = sf.survival(&arg);
        if s.count_ones() % 2 == 0 {
            raw += v;
        } else {
            raw -= v;
        }
    }
    Ok(classify_mass(raw))
}

pub(crate) fn classify_mass(raw: f64) -> PmfValue {
    if raw >= 0.0 {
        PmfValue { value: raw, raw, clamped: false, violation: false }
    } else if raw >= -tol::PMF_CLAMP {
        PmfValue { value: 0.0, raw, clamped: true, violation: false }
    } else {
        PmfValue { value: raw, raw, clamped: false, violation: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LmWitness {
    /// 1-based components sharing the elapsed time.
    pub components: Vec<usize>,
    pub elapsed: u64,
    pub n: Vec<u64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LmVerdict {
    pub holds: bool,
    pub trials: usize,
    pub max_rel_violation: f64,
    pub witness: Option<LmWitness>,
}

// Below this magnitude both sides have lost relative precision to underflow.
const UNDERFLOW_FLOOR: f64 = 1e-280;

/// Randomized check of `S(n + m 1_A) = S(m 1_A) S(n)` for `n` supported on `A`.
pub fn check_lm_property<S, R>(sf: &S, trials: usize, horizon: u64, rng: &mut R) -> LmVerdict
where
    S: SurvivalFunction + ?Sized,
    R: Rng + ?Sized,
{
    let d = sf.dim();
    let mut worst = 0.0f64;
    let mut witness = None;
    let mut shifted = vec![0u64; d];
    let mut elapsed_only = vec![0u64; d];
    let mut base = vec![0u64; d];
    for _ in 0..trials {
        let mut set = 0usize;
        while set == 0 {
            set = rng.random_range(1..(1usize << d));
        }
        let m = rng.random_range(0..=horizon);
        for i in 0..d {
            if set & (1 << i) != 0 {
                base[i] = rng.random_range(0..=horizon);
                elapsed_only[i] = m;
            } else {
                base[i] = 0;
                elapsed_only[i] = 0;
            }
            shifted[i] = base[i] + elapsed_only[i];
        }
        let lhs = sf.survival(&shifted);
        let rhs = sf.survival(&elapsed_only) * sf.survival(&base);
        let scale = lhs.abs().max(rhs.abs());
        let rel = if scale < UNDERFLOW_FLOOR { 0.0 } else { (lhs - rhs).abs() / scale };
        if rel > worst {
            worst = rel;
            witness = Some(LmWitness {
                components: (0..d).filter(|i| set & (1 << i) != 0).map(|i| i + 1).collect(),
                elapsed: m,
                n: base.clone(),
                lhs,
                rhs,
            });
        }
    }
    let holds = worst <= tol::ORACLE;
    LmVerdict { holds, trials, max_rel_violation: worst, witness: if holds { None } else { witness } }
}

/// Wide-sense parameters describing the same law as a narrow-sense one.
pub fn wide_from_narrow(params: &NarrowParams) -> WideParams {
    let d = params.dim;
    let size = 1usize << d;
    let full = size - 1;
    // Log-product over subsets of each mask, with zeros counted separately.
    let mut zeros = vec![0u32; size];
    let mut logs = vec![0.0f64; size];
    for m in 1..size {
        if params.p[m] == 0.0 {
            zeros[m] = 1;
        } else {
            logs[m] = params.ln_p[m];
        }
    }
    for k in 0..d {
        for m in 0..size {
            if m & (1 << k) != 0 {
                zeros[m] += zeros[m ^ (1 << k)];
                logs[m] += logs[m ^ (1 << k)];
            }
        }
    }
    // Survival at the 0/1 argument with ones on `s`: product over shocks meeting `s`.
    let at_indicator: Vec<f64> = (0..size)
        .map(|s| {
            let rest = full ^ s;
            if zeros[full] > zeros[rest] {
                0.0
            } else {
                (logs[full] - logs[rest]).exp()
            }
        })
        .collect();
    let mut pt = vec![0.0; size];
    for (i, slot) in pt.iter_mut().enumerate() {
        let outside = full ^ i;
        let mut acc = 0.0;
        let mut j = i;
        loop {
            let v = at_indicator[outside | j];
            if j.count_ones() % 2 == 0 {
                acc += v;
            } else {
                acc -= v;
            }
            if j == 0 {
                break;
            }
            j = (j - 1) & i;
        }
        *slot = if acc < 0.0 && acc > -tol::VALIDATION { 0.0 } else { acc.min(1.0) };
    }
    WideParams::from_dense(d, pt).expect("a narrow-sense law is always wide-sense")
}

/// Bivariate inversion of [`wide_from_narrow`], possible exactly when the correlation is non-negative.
pub fn narrow_from_wide_2d(params: &WideParams) -> Result<NarrowParams> {
    if params.dim != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: params.dim });
    }
    let (e, one, two) = (params.pt[0], params.pt[1], params.pt[2]);
    if e <= 0.0 {
        return Err(Error::NotRepresentable {
            reason: "the empty outcome has probability zero".into(),
        });
    }
    let cov = e - (e + one) * (e + two);
    if cov < -tol::VALIDATION {
        return Err(Error::NotRepresentable {
            reason: format!("negative correlation (covariance term {cov:e})"),
        });
    }
    let joint = ((e + one) * (e + two) / e).min(1.0);
    NarrowParams::from_dense(2, vec![1.0, e / (e + one), e / (e + two), joint])
}

fn compress(mask: usize, keep: &[usize]) -> usize {
    keep.iter()
        .enumerate()
        .filter(|(_, &k)| mask & (1 << k) != 0)
        .fold(0, |acc, (j, _)| acc | (1 << j))
}

/// Narrow-sense parameters of the components in `keep`, relabeled in ascending order.
pub fn marginal_narrow(params: &NarrowParams, keep: SubsetMask) -> Result<NarrowParams> {
    let kept = kept_positions(params.dim, keep)?;
    let mut p = vec![1.0; 1 << kept.len()];
    for m in 1..params.p.len() {
        let j = compress(m, &kept);
        if j != 0 {
            p[j] *= params.p[m];
        }
    }
    NarrowParams::from_dense(kept.len(), p)
}

pub fn marginal_wide(params: &WideParams, keep: SubsetMask) -> Result<WideParams> {
    let kept = kept_positions(params.dim, keep)?;
    let mut pt = vec![0.0; 1 << kept.len()];
    for (m, &v) in params.pt.iter().enumerate() {
        pt[compress(m, &kept)] += v;
    }
    WideParams::from_dense(kept.len(), pt)
}

fn kept_positions(dim: usize, keep: SubsetMask) -> Result<Vec<usize>> {
    if keep.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: keep.dim() });
    }
    if keep.is_empty() {
        return Err(Error::EmptyKeep);
    }
    Ok((0..dim).filter(|&k| keep.contains(k + 1)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Narrow,
    Wide,
}

/// JSON form: `{"family": "narrow", "d": 2, "params": {"1": 0.5, "2": 0.6, "3": 0.9}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDocument {
    pub family: Family,
    pub d: usize,
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FillPolicy {
    #[default]
    Strict,
    NarrowOnes,
    WideZeros,
}

/// A validated general law of either family.
#[derive(Clone, Debug, PartialEq)]
pub enum GeneralLaw {
    Narrow(NarrowParams),
    Wide(WideParams),
}

impl GeneralLaw {
    pub fn family(&self) -> Family {
        match self {
            GeneralLaw::Narrow(_) => Family::Narrow,
            GeneralLaw::Wide(_) => Family::Wide,
        }
    }

    pub fn to_document(&self) -> ParamDocument {
        let (map, family) = match self {
            GeneralLaw::Narrow(p) => (p.to_map(), Family::Narrow),
            GeneralLaw::Wide(p) => (p.to_map(), Family::Wide),
        };
        ParamDocument {
            family,
            d: map.dim,
            params: map.entries.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

impl SurvivalFunction for GeneralLaw {
    fn dim(&self) -> usize {
        match self {
            GeneralLaw::Narrow(p) => p.dim,
            GeneralLaw::Wide(p) => p.dim,
        }
    }
    fn survival(&self, n: &[u64]) -> f64 {
        match self {
            GeneralLaw::Narrow(p) => survival_narrow(p, n),
            GeneralLaw::Wide(p) => survival_wide(p, n),
        }
    }
}

impl ParamDocument {
    pub fn to_map(&self) -> Result<SubsetParamMap> {
        let mut map = SubsetParamMap::new(self.d)?;
        for (key, &v) in &self.params {
            let mask: u32 = key.parse().map_err(|_| Error::UnexpectedKey { key: key.clone() })?;
            map.insert(mask, v).map_err(|_| Error::UnexpectedKey { key: key.clone() })?;
        }
        Ok(map)
    }

    pub fn validate(&self, fill: FillPolicy) -> Result<GeneralLaw> {
        let mut map = self.to_map()?;
        match (fill, self.family) {
            (FillPolicy::NarrowOnes, Family::Narrow) => map.fill_narrow_ones(),
            (FillPolicy::WideZeros, Family::Wide) => map.fill_wide_zeros(),
            _ => {}
        }
        match self.family {
            Family::Narrow => validate_narrow(&map, self.d).map(GeneralLaw::Narrow),
            Family::Wide => validate_wide(&map, self.d).map(GeneralLaw::Wide),
        }
    }
}

/// Bivariate survival of the lower Frechet-Hoeffding bound with geometric marginals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerFrechet {
    pub p1: f64,
    pub p2: f64,
}

impl SurvivalFunction for LowerFrechet {
    fn dim(&self) -> usize {
        2
    }
    fn survival(&self, n: &[u64]) -> f64 {
        (self.p1.powf(n[0] as f64) + self.p2.powf(n[1] as f64) - 1.0).max(0.0)
    }
}

/// Comonotone survival with geometric marginals `P(tau_k > n) = p_k^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct UpperFrechet {
    pub p: Vec<f64>,
}

impl SurvivalFunction for UpperFrechet {
    fn dim(&self) -> usize {
        self.p.len()
    }
    fn survival(&self, n: &[u64]) -> f64 {
        self.p.iter().zip(n).map(|(p, &k)| p.powf(k as f64)).fold(1.0, f64::min)
    }
}
