//! Exchangeable laws and their five parameterizations.
//!
//! Narrow-sense: `p` (shock parameter per cardinality), `a` (singleton
//! parameter of each k-marginal) and `b` (running products of `a`, with a
//! leading 1). Wide-sense: `ptilde` (outcome probability per cardinality) and
//! `beta` (with a leading 1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shock_models::{GeneralLaw, NarrowParams, SurvivalFunction, WideParams};
use crate::subset_algebra::{binomial, difference_unchecked, order_stats};
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeqRole {
    P,
    A,
    B,
    Ptilde,
    Beta,
}

impl SeqRole {
    /// B and beta sequences carry the leading 1.
    pub fn has_leading_one(self) -> bool {
        matches!(self, SeqRole::B | SeqRole::Beta)
    }

    pub fn is_narrow(self) -> bool {
        matches!(self, SeqRole::P | SeqRole::A | SeqRole::B)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeqDocument")]
pub struct ExchangeableSeq {
    role: SeqRole,
    d: usize,
    values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SeqDocument {
    role: SeqRole,
    d: Option<usize>,
    values: Vec<f64>,
}

impl TryFrom<SeqDocument> for ExchangeableSeq {
    type Error = Error;
    fn try_from(doc: SeqDocument) -> Result<Self> {
        let d = match doc.d {
            Some(d) => d,
            None if doc.role.has_leading_one() => doc.values.len().saturating_sub(1),
            None => doc.values.len(),
        };
        ExchangeableSeq::new(doc.role, d, doc.values)
    }
}

impl ExchangeableSeq {
    pub fn new(role: SeqRole, d: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidSequence { reason: "dimension must be at least 1".into() });
        }
        let expected = if role.has_leading_one() { d + 1 } else { d };
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSequence { reason: format!("entry {i} is not finite") });
        }
        if role.has_leading_one() && (values[0] - 1.0).abs() > tol::VALIDATION {
            return Err(Error::InvalidSequence {
                reason: format!("leading entry is {}, expected 1", values[0]),
            });
        }
        match role {
            SeqRole::A => {
                if let Some(i) = values.iter().position(|&v| v <= 0.0) {
                    return Err(Error::NonPositiveEntry { index: i + 1, value: values[i] });
                }
            }
            SeqRole::B => {
                let degenerate = values[1..].iter().all(|&v| v == 0.0);
                if !degenerate {
                    if let Some(i) = values.iter().position(|&v| v <= 0.0) {
                        return Err(Error::NonPositiveEntry { index: i, value: values[i] });
                    }
                }
            }
            _ => {}
        }
        Ok(ExchangeableSeq { role, d, values })
    }

    pub fn role(&self) -> SeqRole {
        self.role
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn expect_role(&self, role: SeqRole) -> Result<()> {
        if self.role != role {
            return Err(Error::InvalidSequence {
                reason: format!("expected a {role:?} sequence, got {:?}", self.role),
            });
        }
        Ok(())
    }

    /// All-zero tail after the leading 1: the point mass at `(1, ..., 1)`.
    pub fn is_degenerate(&self) -> bool {
        self.role.has_leading_one() && self.values[1..].iter().all(|&v| v == 0.0)
    }
}

/// Output of an inversion that may leave the admissible region.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Inversion {
    pub seq: ExchangeableSeq,
    pub admissible: bool,
    /// 1-based indices of offending entries.
    pub offending: Vec<usize>,
}

pub fn a_from_p(p: &ExchangeableSeq) -> Result<ExchangeableSeq> {
    p.expect_role(SeqRole::P)?;
    let d = p.d;
    for (i, &v) in p.values.iter().enumerate() {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidSequence { reason: format!("p_{} = {v} is outside (0, 1]", i + 1) });
        }
    }
    if p.values.iter().product::<f64>() >= 1.0 {
        return Err(Error::InvalidSequence { reason: "all shock parameters equal 1".into() });
    }
    let ln_p: Vec<f64> = p.values.iter().map(|v| v.ln()).collect();
    let a = (1..=d)
        .map(|k| {
            let log: f64 = (1..=d - k + 1)
                .map(|i| binomial((d - k) as u64, (i - 1) as u64) as f64 * ln_p[i - 1])
                .sum();
            log.exp()
        })
        .collect();
    ExchangeableSeq::new(SeqRole::A, d, a)
}

pub fn p_from_a(a: &ExchangeableSeq) -> Result<Inversion> {
    a.expect_role(SeqRole::A)?;
    let d = a.d;
    let ln_a: Vec<f64> = a.values.iter().map(|v| v.ln()).collect();
    let mut p = Vec::with_capacity(d);
    let mut offending = Vec::new();
    for k in 1..=d {
        let log: f64 = (1..=k)
            .map(|i| {
                let c = binomial((k - 1) as u64, (i - 1) as u64) as f64;
                let sign = if (k - i) % 2 == 0 { 1.0 } else { -1.0 };
                sign * c * ln_a[d - i]
            })
            .sum();
        let mut v = log.exp();
        if v > 1.0 && v <= 1.0 + tol::VALIDATION {
            v = 1.0;
        }
        if !(v > 0.0 && v <= 1.0) {
            offending.push(k);
        }
        p.push(v);
    }
    let admissible = offending.is_empty() && p.iter().product::<f64>() < 1.0;
    Ok(Inversion { seq: ExchangeableSeq::new(SeqRole::P, d, p)?, admissible, offending })
}

pub fn b_from_a(a: &ExchangeableSeq) -> Result<ExchangeableSeq> {
    a.expect_role(SeqRole::A)?;
    let mut b = Vec::with_capacity(a.d + 1);
    b.push(1.0);
    let mut acc = 1.0;
    for &v in &a.values {
        acc *= v;
        b.push(acc);
    }
    ExchangeableSeq::new(SeqRole::B, a.d, b)
}

pub fn a_from_b(b: &ExchangeableSeq) -> Result<ExchangeableSeq> {
    b.expect_role(SeqRole::B)?;
    if let Some(i) = b.values.iter().position(|&v| v <= 0.0) {
        return Err(Error::NonPositiveEntry { index: i, value: b.values[i] });
    }
    let a = b.values.windows(2).map(|w| w[1] / w[0]).collect();
    ExchangeableSeq::new(SeqRole::A, b.d, a)
}

pub fn beta_from_ptilde(pt: &ExchangeableSeq) -> Result<ExchangeableSeq> {
    pt.expect_role(SeqRole::Ptilde)?;
    let d = pt.d;
    let v = &pt.values;
    if let Some(i) = v.iter().position(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidSequence { reason: format!("ptilde_{} = {} is outside [0, 1]", i + 1, v[i]) });
    }
    let weighted = |n: usize| -> f64 {
        (1..=d).map(|i| binomial(n as u64, (i - 1) as u64) as f64 * v[i - 1]).sum()
    };
    let total = weighted(d);
    if total > 1.0 + tol::VALIDATION {
        return Err(Error::InvalidSequence {
            reason: format!("outcome probabilities sum to {total} before the full set"),
        });
    }
    let miss = weighted(d - 1);
    if miss >= 1.0 {
        return Err(Error::InvalidSequence { reason: "a component is never hit".into() });
    }
    let mut beta = vec![1.0];
    for k in 1..=d {
        let s: f64 = (1..=d - k + 1)
            .map(|i| binomial((d - k) as u64, (i - 1) as u64) as f64 * v[i - 1])
            .sum();
        beta.push(s);
    }
    ExchangeableSeq::new(SeqRole::Beta, d, beta)
}

/// Output of [`ptilde_from_beta`], including the implied full-set probability.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WideInversion {
    pub seq: ExchangeableSeq,
    pub full_set: f64,
    pub admissible: bool,
    pub offending: Vec<usize>,
}

pub fn ptilde_from_beta(beta: &ExchangeableSeq) -> Result<WideInversion> {
    beta.expect_role(SeqRole::Beta)?;
    let d = beta.d;
    let x = &beta.values;
    let mut pt = Vec::with_capacity(d);
    let mut offending = Vec::new();
    for k in 1..=d {
        let v = difference_unchecked(x, k - 1, d - k + 1);
        if v < -tol::MEMBERSHIP {
            offending.push(k);
        }
        pt.push(v);
    }
    let full_set = difference_unchecked(x, d, 0);
    let admissible = offending.is_empty() && full_set >= -tol::MEMBERSHIP && x[1] < 1.0;
    Ok(WideInversion { seq: ExchangeableSeq::new(SeqRole::Ptilde, d, pt)?, full_set, admissible, offending })
}

/// `prod_k x_k^(n_(d-k+1) - n_(d-k))` for a leading-1 sequence `x`, signs allowed.
pub fn exchangeable_product(x: &[f64], n: &[u64]) -> f64 {
    let d = n.len();
    assert_eq!(x.len(), d + 1, "sequence must have d + 1 entries");
    let (sorted, _) = order_stats(n);
    let mut prev = 0u64;
    let mut acc = 1.0;
    for (j, &s) in sorted.iter().enumerate() {
        let e = s - prev;
        if e > 0 {
            let base = x[d - j];
            acc *= if e <= i32::MAX as u64 { base.powi(e as i32) } else { base.powf(e as f64) };
        }
        prev = s;
    }
    acc
}

pub fn survival_exch_narrow(b: &ExchangeableSeq, n: &[u64]) -> Result<f64> {
    b.expect_role(SeqRole::B)?;
    check_len(b, n)?;
    Ok(exchangeable_product(&b.values, n))
}

pub fn survival_exch_wide(beta: &ExchangeableSeq, n: &[u64]) -> Result<f64> {
    beta.expect_role(SeqRole::Beta)?;
    check_len(beta, n)?;
    Ok(exchangeable_product(&beta.values, n))
}

fn check_len(seq: &ExchangeableSeq, n: &[u64]) -> Result<()> {
    if n.len() != seq.d {
        return Err(Error::DimensionMismatch { expected: seq.d, got: n.len() });
    }
    Ok(())
}

/// Survival function of an exchangeable law given by a leading-1 sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ExchangeableSurvival {
    values: Vec<f64>,
}

impl ExchangeableSurvival {
    pub fn from_seq(seq: &ExchangeableSeq) -> Result<Self> {
        if !seq.role.has_leading_one() {
            return Err(Error::InvalidSequence { reason: "expected a b or beta sequence".into() });
        }
        Ok(ExchangeableSurvival { values: seq.values.clone() })
    }

    /// No class checks: the product is evaluated for any leading-1 vector.
    pub fn from_raw(values: Vec<f64>) -> Self {
        ExchangeableSurvival { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl SurvivalFunction for ExchangeableSurvival {
    fn dim(&self) -> usize {
        self.values.len() - 1
    }
    fn survival(&self, n: &[u64]) -> f64 {
        exchangeable_product(&self.values, n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExchangeabilityVerdict {
    pub exchangeable: bool,
    pub seq: Option<ExchangeableSeq>,
}

pub fn is_exchangeable(law: &GeneralLaw) -> ExchangeabilityVerdict {
    let (dense, d, skip_empty) = match law {
        GeneralLaw::Narrow(p) => (p.dense(), p.dim(), true),
        GeneralLaw::Wide(p) => (p.dense(), p.dim(), false),
    };
    let mut rep = vec![f64::NAN; d + 1];
    for (m, &v) in dense.iter().enumerate() {
        if skip_empty && m == 0 {
            continue;
        }
        let c = m.count_ones() as usize;
        if rep[c].is_nan() {
            rep[c] = v;
        } else if (rep[c] - v).abs() > tol::VALIDATION {
            return ExchangeabilityVerdict { exchangeable: false, seq: None };
        }
    }
    let seq = match law {
        GeneralLaw::Narrow(_) => ExchangeableSeq::new(SeqRole::P, d, rep[1..].to_vec()),
        GeneralLaw::Wide(_) => ExchangeableSeq::new(SeqRole::Ptilde, d, rep[..d].to_vec()),
    };
    ExchangeabilityVerdict { exchangeable: true, seq: seq.ok() }
}

/// General narrow parameters with `p_I = p_|I|`.
pub fn embed_narrow(p: &ExchangeableSeq) -> Result<NarrowParams> {
    p.expect_role(SeqRole::P)?;
    let dense = (0..1usize << p.d)
        .map(|m| if m == 0 { 1.0 } else { p.values[m.count_ones() as usize - 1] })
        .collect();
    NarrowParams::from_dense(p.d, dense)
}

/// General wide parameters with `ptilde_I = ptilde_(|I|+1)` and the full set taking the rest.
pub fn embed_wide(pt: &ExchangeableSeq) -> Result<WideParams> {
    pt.expect_role(SeqRole::Ptilde)?;
    let d = pt.d;
    let weighted: f64 = (1..=d).map(|i| binomial(d as u64, (i - 1) as u64) as f64 * pt.values[i - 1]).sum();
    let mut rest = 1.0 - weighted;
    if rest < 0.0 && rest > -tol::VALIDATION {
        rest = 0.0;
    }
    let full = (1usize << d) - 1;
    let dense = (0..=full)
        .map(|m| if m == full { rest } else { pt.values[m.count_ones() as usize] })
        .collect();
    WideParams::from_dense(d, dense)
}

/// Narrow parameters behind a b sequence, if it is narrow-representable.
pub fn p_from_b(b: &ExchangeableSeq) -> Result<Inversion> {
    p_from_a(&a_from_b(b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shock_models::{survival_narrow, survival_wide};
    use proptest::prelude::*;

    fn seq(role: SeqRole, d: usize, v: &[f64]) -> ExchangeableSeq {
        ExchangeableSeq::new(role, d, v.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], eps: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= eps)
    }

    #[test]
    fn a_from_p_examples() {
        let p = 0.3;
        let a = a_from_p(&seq(SeqRole::P, 3, &[p, 1.0, 1.0])).unwrap();
        assert!(close(a.values(), &[p, p, p], 1e-15));
        let a = a_from_p(&seq(SeqRole::P, 3, &[1.0, 1.0, p])).unwrap();
        assert!(close(a.values(), &[p, 1.0, 1.0], 1e-15));
        let b = b_from_a(&a).unwrap();
        assert!(close(b.values(), &[1.0, p, p, p], 1e-15));
        let a = a_from_p(&seq(SeqRole::P, 2, &[0.5, 0.8])).unwrap();
        assert!(close(a.values(), &[0.4, 0.5], 1e-15));
    }

    #[test]
    fn p_from_a_examples() {
        let inv = p_from_a(&seq(SeqRole::A, 2, &[0.5, 0.4])).unwrap();
        assert!(close(inv.seq.values(), &[0.4, 1.25], 1e-12));
        assert!(!inv.admissible);
        assert_eq!(inv.offending, vec![2]);
        let inv = p_from_a(&seq(SeqRole::A, 2, &[0.4, 0.5])).unwrap();
        assert!(close(inv.seq.values(), &[0.5, 0.8], 1e-12));
        assert!(inv.admissible);
    }

    #[test]
    fn b_and_a() {
        let p = 0.6;
        let b = b_from_a(&seq(SeqRole::A, 3, &[p, p, p])).unwrap();
        assert!(close(b.values(), &[1.0, p, p * p, p * p * p], 1e-15));
        let a = a_from_b(&seq(SeqRole::B, 2, &[1.0, 0.4, 0.2])).unwrap();
        assert!(close(a.values(), &[0.4, 0.5], 1e-15));
        assert!(seq(SeqRole::B, 2, &[1.0, 0.0, 0.0]).is_degenerate());
        assert!(ExchangeableSeq::new(SeqRole::B, 2, vec![1.0, 0.0, 0.3]).is_err());
    }

    #[test]
    fn beta_examples() {
        let beta = beta_from_ptilde(&seq(SeqRole::Ptilde, 2, &[0.25, 0.25])).unwrap();
        assert!(close(beta.values(), &[1.0, 0.5, 0.25], 1e-15));
        assert!(beta_from_ptilde(&seq(SeqRole::Ptilde, 3, &[1.0, 0.0, 0.0])).is_err());

        let inv = ptilde_from_beta(&seq(SeqRole::Beta, 2, &[1.0, 0.5, 0.2])).unwrap();
        assert!(close(inv.seq.values(), &[0.2, 0.3], 1e-15));
        assert!((inv.full_set - 0.2).abs() < 1e-15);
        assert!(inv.admissible);

        for d in 2..6 {
            let mut v = vec![0.0; d + 1];
            v[0] = 1.0;
            v[1] = 1.0 / d as f64;
            let inv = ptilde_from_beta(&seq(SeqRole::Beta, d, &v)).unwrap();
            assert!(inv.admissible, "d = {d}");
            assert!(inv.full_set.abs() < 1e-15);
        }

        let inv = ptilde_from_beta(&seq(SeqRole::Beta, 2, &[1.0, 0.9, 0.95])).unwrap();
        assert!(!inv.admissible);
        assert_eq!(inv.offending, vec![2]);
    }

    #[test]
    fn exchangeable_survival_examples() {
        let p: f64 = 0.7;
        let ind = seq(SeqRole::B, 3, &[1.0, p, p * p, p * p * p]);
        let como = seq(SeqRole::B, 3, &[1.0, p, p, p]);
        for n in [[0u64, 0, 0], [1, 2, 3], [4, 0, 2], [2, 2, 2]] {
            let sum: u64 = n.iter().sum();
            let max = *n.iter().max().unwrap();
            assert!((survival_exch_narrow(&ind, &n).unwrap() - p.powi(sum as i32)).abs() < 1e-15);
            assert!((survival_exch_narrow(&como, &n).unwrap() - p.powi(max as i32)).abs() < 1e-15);
        }
        let beta = seq(SeqRole::Beta, 2, &[1.0, 0.5, 0.2]);
        assert!((survival_exch_wide(&beta, &[1, 1]).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn exchangeability_detection() {
        let ind = NarrowParams::from_dense(3, vec![1.0, 0.4, 0.4, 1.0, 0.4, 1.0, 1.0, 1.0]).unwrap();
        let v = is_exchangeable(&GeneralLaw::Narrow(ind));
        assert!(v.exchangeable);
        assert_eq!(v.seq.unwrap().values(), &[0.4, 1.0, 1.0]);
        let uneven = NarrowParams::from_dense(2, vec![1.0, 0.5, 0.6, 0.9]).unwrap();
        assert!(!is_exchangeable(&GeneralLaw::Narrow(uneven)).exchangeable);
        let quarter = WideParams::from_dense(2, vec![0.25; 4]).unwrap();
        let v = is_exchangeable(&GeneralLaw::Wide(quarter));
        assert_eq!(v.seq.unwrap().values(), &[0.25, 0.25]);
    }

    #[test]
    fn json_shape() {
        let s: ExchangeableSeq = serde_json::from_str(r#"{"role":"beta","d":3,"values":[1,0.5,0.3,0.2]}"#).unwrap();
        assert_eq!(s.role(), SeqRole::Beta);
        assert_eq!(s.dim(), 3);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"role":"beta","d":3,"values":[1.0,0.5,0.3,0.2]}"#);
        assert!(serde_json::from_str::<ExchangeableSeq>(r#"{"role":"beta","d":3,"values":[1,0.5]}"#).is_err());
    }

    fn valid_p() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.05f64..=1.0, 1..=8).prop_filter("not all ones", |p| p.iter().product::<f64>() < 0.999)
    }

    fn grid(d: usize, max: u64) -> Vec<Vec<u64>> {
        let mut out = vec![vec![]];
        for _ in 0..d {
            out = out
                .into_iter()
                .flat_map(|v| (0..=max).map(move |x| { let mut w = v.clone(); w.push(x); w }))
                .collect();
        }
        out
    }

    proptest! {
        #[test]
        fn narrow_cycle_is_identity(p in valid_p()) {
            let d = p.len();
            let ps = seq(SeqRole::P, d, &p);
            let a = a_from_p(&ps).unwrap();
            let b = b_from_a(&a).unwrap();
            let a2 = a_from_b(&b).unwrap();
            let back = p_from_a(&a2).unwrap();
            prop_assert!(back.admissible);
            for (x, y) in back.seq.values().iter().zip(&p) {
                prop_assert!((x - y).abs() <= 1e-10 * y.max(1e-300));
            }
        }

        #[test]
        fn embedded_narrow_matches(p in prop::collection::vec(0.05f64..=1.0, 1..=4)) {
            prop_assume!(p.iter().product::<f64>() < 0.999);
            let d = p.len();
            let ps = seq(SeqRole::P, d, &p);
            let general = embed_narrow(&ps).unwrap();
            let b = b_from_a(&a_from_p(&ps).unwrap()).unwrap();
            for n in grid(d, 3) {
                let x = survival_narrow(&general, &n);
                let y = survival_exch_narrow(&b, &n).unwrap();
                prop_assert!((x - y).abs() <= 1e-12, "n = {:?}: {} vs {}", n, x, y);
            }
        }

        #[test]
        fn wide_round_trip(w in prop::collection::vec(0.0f64..1.0, 2..=6)) {
            let d = w.len() - 1;
            // Cardinality weights spread evenly over the subsets of each size.
            let total: f64 = w.iter().sum();
            prop_assume!(total > 1e-3);
            let pt: Vec<f64> = (1..=d).map(|k| w[k - 1] / total / binomial(d as u64, (k - 1) as u64) as f64).collect();
            let ps = seq(SeqRole::Ptilde, d, &pt);
            let Ok(beta) = beta_from_ptilde(&ps) else { return Ok(()); };
            let back = ptilde_from_beta(&beta).unwrap();
            prop_assert!(back.admissible);
            for (x, y) in back.seq.values().iter().zip(&pt) {
                prop_assert!((x - y).abs() <= 1e-14);
            }
            let general = embed_wide(&ps).unwrap();
            for n in grid(d, 2) {
                let x = survival_wide(&general, &n);
                let y = survival_exch_wide(&beta, &n).unwrap();
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn log_difference_form_of_p(p in valid_p()) {
            let d = p.len();
            let a = a_from_p(&seq(SeqRole::P, d, &p)).unwrap();
            let b = b_from_a(&a).unwrap();
            let neg_ln_a: Vec<f64> = a.values().iter().map(|v| -v.ln()).collect();
            let ln_b: Vec<f64> = b.values().iter().map(|v| v.ln()).collect();
            let inv = p_from_a(&a).unwrap();
            for k in 1..=d {
                let via_a = (-difference_unchecked(&neg_ln_a, k - 1, d - k)).exp();
                let via_b = (-difference_unchecked(&ln_b, k, d - k)).exp();
                prop_assert!((via_a - inv.seq.values()[k - 1]).abs() <= 1e-10);
                prop_assert!((via_b - inv.seq.values()[k - 1]).abs() <= 1e-10);
            }
        }
    }
}
