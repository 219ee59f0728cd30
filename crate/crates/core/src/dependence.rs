//! Pairwise correlations, Frechet-Hoeffding reference correlations and the
//! MRTI positive-dependence order.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exchangeable::{is_exchangeable, ExchangeableSeq};
use crate::sequences::check_m;
use crate::shock_models::{wide_from_narrow, GeneralLaw, NarrowParams, SurvivalFunction, WideParams};
use crate::subset_algebra::full_bits;
use crate::tol;

fn check_pair(d: usize, n: usize, m: usize) -> Result<()> {
    for k in [n, m] {
        if k == 0 || k > d {
            return Err(Error::IndexOutOfRange { what: format!("component {k} of {d}") });
        }
    }
    if n == m {
        return Err(Error::IndexEqual { index: n });
    }
    Ok(())
}

/// Correlation of 1-based components `n` and `m` of a narrow law; never negative.
pub fn corr_narrow(params: &NarrowParams, n: usize, m: usize) -> Result<f64> {
    check_pair(params.dim(), n, m)?;
    let (bn, bm) = (1usize << (n - 1), 1usize << (m - 1));
    let (mut one, mut both, mut either) = (1.0, 1.0, 1.0);
    for (mask, &p) in params.dense().iter().enumerate().skip(1) {
        let (hn, hm) = (mask & bn != 0, mask & bm != 0);
        if hn != hm {
            one *= p;
        }
        if hn && hm {
            both *= p;
        }
        if hn || hm {
            either *= p;
        }
    }
    Ok(one.sqrt() * (1.0 - both) / (1.0 - either))
}

/// Correlation of 1-based components `n` and `m` of a wide law.
pub fn corr_wide(params: &WideParams, n: usize, m: usize) -> Result<f64> {
    let d = params.dim();
    check_pair(d, n, m)?;
    let full = full_bits(d);
    let (bn, bm) = (1u32 << (n - 1), 1u32 << (m - 1));
    let sn = params.mass_within(full ^ bn);
    let sm = params.mass_within(full ^ bm);
    for (k, s) in [(n, sn), (m, sm)] {
        if s == 0.0 {
            return Err(Error::DegenerateComponent { component: k });
        }
    }
    let neither = params.mass_within(full ^ bn ^ bm);
    Ok((neither - sn * sm) / ((1.0 - neither) * (sn * sm).sqrt()))
}

/// `(beta_2 - beta_1^2) / (beta_1 (1 - beta_2))` for an exchangeable wide law.
pub fn corr_exch_wide(beta: &ExchangeableSeq) -> Result<f64> {
    let v = beta.values();
    if v.len() < 3 {
        return Err(Error::TooShort { min: 3, len: v.len() });
    }
    if v[1] == 0.0 {
        return Err(Error::DegenerateComponent { component: 1 });
    }
    Ok((v[2] - v[1] * v[1]) / (v[1] * (1.0 - v[2])))
}

/// `(a_2 - a_1) / (1 - a_1 a_2)` for an exchangeable narrow law given by its a sequence.
pub fn corr_exch_narrow(a: &ExchangeableSeq) -> Result<f64> {
    let v = a.values();
    if v.len() < 2 {
        return Err(Error::TooShort { min: 2, len: v.len() });
    }
    Ok((v[1] - v[0]) / (1.0 - v[0] * v[1]))
}

fn check_unit_open(what: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange { what: what.into(), value: p })
    }
}

// Pearson correlation from E[tau_1 tau_2] = sum over i, j >= 0 of the survival.
fn corr_from_double_sum(p1: f64, p2: f64, sum: f64) -> f64 {
    let (q1, q2) = (1.0 - p1, 1.0 - p2);
    q1 * q2 / (p1 * p2).sqrt() * (sum - 1.0 / (q1 * q2))
}

/// Correlation of geometric marginals coupled by the lower Frechet-Hoeffding bound.
pub fn corr_frechet_lower(p1: f64, p2: f64) -> Result<f64> {
    check_unit_open("p1", p1)?;
    check_unit_open("p2", p2)?;
    if p1 + p2 <= 1.0 {
        return Ok(-(p1 * p2).sqrt());
    }
    // Axes contribute geometric series; interior cells are positive only finitely often.
    let mut sum = 1.0 / (1.0 - p1) + 1.0 / (1.0 - p2) - 1.0;
    let mut x = p1;
    while x + p2 > 1.0 {
        let gap = 1.0 - x;
        let mut count = (gap.ln() / p2.ln()).ceil().max(1.0) as i32 - 1;
        while count > 0 && p2.powi(count) <= gap {
            count -= 1;
        }
        while p2.powi(count + 1) > gap {
            count += 1;
        }
        sum += count as f64 * (x - 1.0) + p2 * (1.0 - p2.powi(count)) / (1.0 - p2);
        x *= p1;
    }
    Ok(corr_from_double_sum(p1, p2, sum))
}

/// Correlation of geometric marginals coupled by the upper (comonotone) bound.
pub fn corr_frechet_upper(pn: f64, pm: f64) -> Result<f64> {
    check_unit_open("p_n", pn)?;
    check_unit_open("p_m", pm)?;
    let ratio = pn.ln() / pm.ln();
    let mut sum = 0.0;
    let mut ai = 1.0;
    for i in 0u32.. {
        let cut = (i as f64 * ratio).floor();
        let term = (cut + 1.0) * ai + pm.powf(cut + 1.0) / (1.0 - pm);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
        ai *= pn;
    }
    Ok(corr_from_double_sum(pn, pm, sum))
}

/// Wide law putting mass `2^(1-d)` on every subset containing exactly one of `n`, `m`.
pub fn separating_extreme(d: usize, n: usize, m: usize) -> Result<WideParams> {
    check_pair(d, n, m)?;
    let (bn, bm) = (1usize << (n - 1), 1usize << (m - 1));
    let w = 2f64.powi(1 - d as i32);
    let pt = (0..1usize << d).map(|s| if (s & bn != 0) != (s & bm != 0) { w } else { 0.0 }).collect();
    WideParams::from_dense(d, pt)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MrtiVerdict {
    pub mrti: bool,
    /// Smallest `k` with `x_k^2 > x_(k-1) x_(k+1)`.
    pub witness: Option<usize>,
}

/// MRTI criterion for an exchangeable law given by a leading-1 sequence.
pub fn mrti_exchangeable(seq: &ExchangeableSeq) -> Result<MrtiVerdict> {
    if !seq.role().has_leading_one() {
        return Err(Error::InvalidSequence { reason: "expected a b or beta sequence".into() });
    }
    let x = seq.values();
    if !check_m(x)?.member {
        return Err(Error::NotASurvival { reason: "sequence is not d-monotone".into() });
    }
    let witness = (1..x.len() - 1).find(|&k| x[k] * x[k] - x[k - 1] * x[k + 1] > tol::MEMBERSHIP);
    Ok(MrtiVerdict { mrti: witness.is_none(), witness })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MrtiCounterexample {
    /// 1-based components in conditioning order.
    pub order: Vec<usize>,
    /// Position in `order` of the conditioned component.
    pub target: usize,
    /// Position in `order` of the increased threshold.
    pub raised: usize,
    /// Thresholds along `order`.
    pub thresholds: Vec<u64>,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MrtiBruteVerdict {
    pub mrti: bool,
    pub counterexample: Option<MrtiCounterexample>,
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(d - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, d - 1);
            out.push(q);
        }
    }
    out
}

/// Exhaustive check of the MRTI definition on `{0..grid_max}^d`.
pub fn mrti_bruteforce<S: SurvivalFunction + ?Sized>(sf: &S, grid_max: u64) -> Result<MrtiBruteVerdict> {
    let d = sf.dim();
    if d > 4 || grid_max > 4 {
        return Err(Error::TooLarge { reason: format!("d = {d}, grid_max = {grid_max}; limits are 4 and 4") });
    }
    let side = grid_max as usize + 1;
    let cells = side.pow(d as u32);
    let mut arg = vec![0u64; d];
    let survival_along = |order: &[usize], t: &[u64], upto: usize, arg: &mut Vec<u64>| {
        arg.fill(0);
        for (pos, &c) in order.iter().enumerate().take(upto) {
            arg[c] = t[pos];
        }
        sf.survival(arg)
    };
    for order in permutations(d) {
        for target in 1..d {
            for cell in 0..cells {
                let mut t = vec![0u64; d];
                let mut c = cell;
                for slot in t.iter_mut() {
                    *slot = (c % side) as u64;
                    c /= side;
                }
                let cond = |t: &[u64], arg: &mut Vec<u64>| -> Option<f64> {
                    let den = survival_along(&order, t, target, arg);
                    if den <= 0.0 {
                        return None;
                    }
                    Some(survival_along(&order, t, target + 1, arg) / den)
                };
                let Some(before) = cond(&t, &mut arg) else { continue };
                for raised in 0..target {
                    if t[raised] >= grid_max {
                        continue;
                    }
                    let mut u = t.clone();
                    u[raised] += 1;
                    let Some(after) = cond(&u, &mut arg) else { continue };
                    if after < before - tol::MEMBERSHIP {
                        let counterexample = MrtiCounterexample {
                            order: order.iter().map(|c| c + 1).collect(),
                            target,
                            raised,
                            thresholds: t[..=target].to_vec(),
                            before,
                            after,
                        };
                        return Ok(MrtiBruteVerdict { mrti: false, counterexample: Some(counterexample) });
                    }
                }
            }
        }
    }
    Ok(MrtiBruteVerdict { mrti: true, counterexample: None })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DependenceReport {
    pub d: usize,
    pub corr: Vec<Vec<f64>>,
    /// Absent when the law is not exchangeable and too large for the exhaustive check.
    pub mrti: Option<bool>,
    pub mrti_witness: Option<usize>,
    pub mrti_counterexample: Option<MrtiCounterexample>,
    pub family_notes: Vec<String>,
}

/// Leading-1 beta sequence of an exchangeable wide law.
fn beta_of(wide: &WideParams) -> Vec<f64> {
    let d = wide.dim();
    let full = full_bits(d);
    (0..=d).map(|k| wide.mass_within(full ^ ((1u32 << k) - 1))).collect()
}

pub fn dependence_report(law: &GeneralLaw) -> Result<DependenceReport> {
    let d = law.dim();
    let mut corr = vec![vec![1.0; d]; d];
    for n in 1..=d {
        for m in n + 1..=d {
            let c = match law {
                GeneralLaw::Narrow(p) => corr_narrow(p, n, m)?,
                GeneralLaw::Wide(p) => corr_wide(p, n, m)?,
            };
            corr[n - 1][m - 1] = c;
            corr[m - 1][n - 1] = c;
        }
    }
    let mut notes = vec![match law {
        GeneralLaw::Narrow(_) => "narrow".to_string(),
        GeneralLaw::Wide(_) => "wide".to_string(),
    }];
    if matches!(law, GeneralLaw::Narrow(_)) {
        notes.push("nonnegative-correlations".into());
    }
    let exchangeable = is_exchangeable(law).exchangeable;
    let (mut mrti, mut mrti_witness, mut mrti_counterexample) = (None, None, None);
    if exchangeable {
        notes.push("exchangeable".into());
        let wide = match law {
            GeneralLaw::Narrow(p) => wide_from_narrow(p),
            GeneralLaw::Wide(p) => p.clone(),
        };
        let beta = ExchangeableSeq::new(crate::exchangeable::SeqRole::Beta, d, beta_of(&wide))?;
        let v = mrti_exchangeable(&beta)?;
        mrti = Some(v.mrti);
        mrti_witness = v.witness;
    } else if d <= 4 {
        let v = mrti_bruteforce(law, 3)?;
        mrti = Some(v.mrti);
        mrti_counterexample = v.counterexample;
    } else {
        notes.push("mrti-not-evaluated".into());
    }
    if matches!(law, GeneralLaw::Narrow(_)) && mrti == Some(true) && exchangeable {
        notes.push("narrow-exchangeable-is-mrti".into());
    }
    Ok(DependenceReport { d, corr, mrti, mrti_witness, mrti_counterexample, family_notes: notes })
}
