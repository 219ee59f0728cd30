//! Membership tests for d-monotone, d-log-monotone and d-strong-monotone
//! sequences, plus truncated Hausdorff moment tests.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::subset_algebra::difference_unchecked;
use crate::tol;

/// Why a sequence fails a class test. Indices are 0-based positions in the checked vector.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    LeadingNotOne { value: f64 },
    SecondNotBelowOne { value: f64 },
    LeadingNotBelowOne { value: f64 },
    Difference { k: usize, j: usize, value: f64 },
    NonPositive { index: usize, value: f64 },
    NegativeEigenvalue { matrix: &'static str, value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub member: bool,
    pub witness: Option<Witness>,
}

impl Verdict {
    fn pass() -> Self {
        Verdict { member: true, witness: None }
    }
    fn fail(w: Witness) -> Self {
        Verdict { member: false, witness: Some(w) }
    }
}

fn need_len(x: &[f64], min: usize) -> Result<()> {
    if x.len() < min {
        return Err(Error::TooShort { min, len: x.len() });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidSequence { reason: format!("entry {i} is not finite") });
    }
    Ok(())
}

fn need_positive(x: &[f64]) -> Result<()> {
    match x.iter().position(|&v| v <= 0.0) {
        Some(i) => Err(Error::NonPositiveEntry { index: i, value: x[i] }),
        None => Ok(()),
    }
}

// First k with the top-order difference below -tol, over the whole vector.
fn first_negative_difference(y: &[f64], tol: f64, last: usize) -> Option<Witness> {
    let d = y.len();
    (0..last).find_map(|k| {
        let j = d - 1 - k;
        let v = difference_unchecked(y, j, k);
        (v < -tol).then_some(Witness::Difference { k, j, value: v })
    })
}

/// Whether `y` is `len(y)`-monotone; the witness names the first failing difference.
pub fn is_monotone_with_tol(y: &[f64], tol: f64) -> Verdict {
    match first_negative_difference(y, tol, y.len()) {
        Some(w) => Verdict::fail(w),
        None => Verdict::pass(),
    }
}

pub fn check_m(x: &[f64]) -> Result<Verdict> {
    check_m_with_tol(x, tol::MEMBERSHIP)
}

pub fn check_m_with_tol(x: &[f64], tol: f64) -> Result<Verdict> {
    need_len(x, 2)?;
    if (x[0] - 1.0).abs() > tol {
        return Ok(Verdict::fail(Witness::LeadingNotOne { value: x[0] }));
    }
    if x[1] >= 1.0 {
        return Ok(Verdict::fail(Witness::SecondNotBelowOne { value: x[1] }));
    }
    Ok(is_monotone_with_tol(x, tol))
}

pub fn check_lm(x: &[f64]) -> Result<Verdict> {
    check_lm_with_tol(x, tol::MEMBERSHIP)
}

pub fn check_lm_with_tol(x: &[f64], tol: f64) -> Result<Verdict> {
    need_len(x, 2)?;
    need_positive(x)?;
    if (x[0] - 1.0).abs() > tol {
        return Ok(Verdict::fail(Witness::LeadingNotOne { value: x[0] }));
    }
    if x[1] >= 1.0 {
        return Ok(Verdict::fail(Witness::SecondNotBelowOne { value: x[1] }));
    }
    let ln: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    // The last entry is exempt: ln x_(d-1) >= 0 is not required.
    match first_negative_difference(&ln, tol, x.len() - 1) {
        Some(w) => Ok(Verdict::fail(w)),
        None => Ok(Verdict::pass()),
    }
}

pub fn check_sm(x: &[f64]) -> Result<Verdict> {
    check_sm_with_tol(x, tol::MEMBERSHIP)
}

pub fn check_sm_with_tol(x: &[f64], tol: f64) -> Result<Verdict> {
    need_len(x, 1)?;
    need_positive(x)?;
    if x[0] >= 1.0 {
        return Ok(Verdict::fail(Witness::LeadingNotBelowOne { value: x[0] }));
    }
    let neg_ln: Vec<f64> = x.iter().map(|v| -v.ln()).collect();
    Ok(is_monotone_with_tol(&neg_ln, tol))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HankelVerdict {
    pub extendible: bool,
    pub min_eigenvalue: f64,
    pub witness: Option<Witness>,
}

fn min_eigen(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Whether `x_0, ..., x_n` are the moments of a probability measure on `[0, 1]`.
pub fn hankel_extendible(x: &[f64]) -> Result<HankelVerdict> {
    hankel_extendible_with_tol(x, tol::EIGEN)
}

pub fn hankel_extendible_with_tol(x: &[f64], tol: f64) -> Result<HankelVerdict> {
    need_len(x, 2)?;
    if (x[0] - 1.0).abs() > tol::VALIDATION {
        return Err(Error::InvalidSequence { reason: format!("leading entry is {}, expected 1", x[0]) });
    }
    let n = x.len() - 1;
    let m = n / 2;
    let (first, second, names) = if n.is_multiple_of(2) {
        (
            DMatrix::from_fn(m + 1, m + 1, |i, j| x[i + j]),
            DMatrix::from_fn(m, m, |i, j| x[i + j + 1] - x[i + j + 2]),
            ("moments", "shifted differences"),
        )
    } else {
        (
            DMatrix::from_fn(m + 1, m + 1, |i, j| x[i + j + 1]),
            DMatrix::from_fn(m + 1, m + 1, |i, j| x[i + j] - x[i + j + 1]),
            ("shifted moments", "differences"),
        )
    };
    let e1 = min_eigen(first);
    let e2 = min_eigen(second);
    let min_eigenvalue = e1.min(e2);
    let witness = if e1 < -tol {
        Some(Witness::NegativeEigenvalue { matrix: names.0, value: e1 })
    } else if e2 < -tol {
        Some(Witness::NegativeEigenvalue { matrix: names.1, value: e2 })
    } else {
        None
    };
    Ok(HankelVerdict { extendible: witness.is_none(), min_eigenvalue, witness })
}

/// Powers applied to the sequence before each moment test.
pub fn power_grid() -> Vec<f64> {
    (-6..=6).map(|e| 2f64.powi(e)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LmExtendibleVerdict {
    pub extendible: bool,
    /// True when the battery is a characterization (at most three entries); a falsification test otherwise.
    pub exact: bool,
    pub failing_power: Option<f64>,
}

/// Moment tests on `b^r` for every power in [`power_grid`].
pub fn lm_extendible(b: &[f64]) -> Result<LmExtendibleVerdict> {
    lm_extendible_with_tol(b, tol::EIGEN)
}

pub fn lm_extendible_with_tol(b: &[f64], tol: f64) -> Result<LmExtendibleVerdict> {
    need_len(b, 2)?;
    need_positive(b)?;
    if (b[0] - 1.0).abs() > tol::VALIDATION {
        return Err(Error::InvalidSequence { reason: format!("leading entry is {}, expected 1", b[0]) });
    }
    if b[1] >= 1.0 {
        return Err(Error::InvalidSequence { reason: format!("second entry {} is not below 1", b[1]) });
    }
    let exact = b.len() <= 3;
    for r in power_grid() {
        let powered: Vec<f64> = b.iter().map(|v| v.powf(r)).collect();
        if !hankel_extendible_with_tol(&powered, tol)?.extendible {
            return Ok(LmExtendibleVerdict { extendible: false, exact, failing_power: Some(r) });
        }
    }
    Ok(LmExtendibleVerdict { extendible: true, exact, failing_power: None })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassWitnesses {
    pub m: Option<Witness>,
    pub lm: Option<Witness>,
    pub sm: Option<Witness>,
    pub hankel: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SequenceClassReport {
    pub checked: Vec<f64>,
    pub in_m: bool,
    pub in_lm: bool,
    pub in_sm: bool,
    pub hankel_extendible: bool,
    /// Absent when the sequence is not positive with a leading 1 and second entry below 1.
    pub lm_extendible: Option<bool>,
    pub lm_extendible_exact: bool,
    pub witnesses: ClassWitnesses,
}

fn verdict_or_witness(r: Result<Verdict>) -> Verdict {
    match r {
        Ok(v) => v,
        Err(Error::NonPositiveEntry { index, value }) => Verdict::fail(Witness::NonPositive { index, value }),
        Err(_) => Verdict::fail(Witness::LeadingNotOne { value: f64::NAN }),
    }
}

pub fn classify_sequence(x: &[f64]) -> Result<SequenceClassReport> {
    classify_sequence_with_tol(x, tol::MEMBERSHIP, tol::EIGEN)
}

pub fn classify_sequence_with_tol(x: &[f64], tol: f64, eigen_tol: f64) -> Result<SequenceClassReport> {
    need_len(x, 2)?;
    let m = check_m_with_tol(x, tol)?;
    let lm = verdict_or_witness(check_lm_with_tol(x, tol));
    let sm = verdict_or_witness(check_sm_with_tol(x, tol));
    debug_assert!(!lm.member || m.member, "log-monotone must imply monotone");
    let hankel = if (x[0] - 1.0).abs() <= tol::VALIDATION {
        hankel_extendible_with_tol(x, eigen_tol)?
    } else {
        HankelVerdict {
            extendible: false,
            min_eigenvalue: f64::NAN,
            witness: Some(Witness::LeadingNotOne { value: x[0] }),
        }
    };
    let lm_ext = lm_extendible_with_tol(x, eigen_tol).ok();
    Ok(SequenceClassReport {
        checked: x.to_vec(),
        in_m: m.member,
        in_lm: lm.member,
        in_sm: sm.member,
        hankel_extendible: hankel.extendible,
        lm_extendible: lm_ext.as_ref().map(|v| v.extendible),
        lm_extendible_exact: lm_ext.map(|v| v.exact).unwrap_or(false),
        witnesses: ClassWitnesses { m: m.witness, lm: lm.witness, sm: sm.witness, hankel: hankel.witness },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn monotone_examples() {
        assert!(check_m(&[1.0, 0.5, 0.2]).unwrap().member);
        let v = check_m(&[1.0, 0.9, 0.95]).unwrap();
        assert!(!v.member);
        match v.witness.unwrap() {
            Witness::Difference { k, j, value } => {
                assert_eq!((k, j), (1, 1));
                assert!((value + 0.05).abs() < 1e-15);
            }
            w => panic!("unexpected witness {w:?}"),
        }
        let p: f64 = 0.37;
        let geo: Vec<f64> = (0..6).map(|k| p.powi(k)).collect();
        assert!(check_m(&geo).unwrap().member);
        assert!(matches!(check_m(&[1.0]), Err(Error::TooShort { .. })));
    }

    #[test]
    fn log_monotone_examples() {
        let p: f64 = 0.6;
        assert!(check_lm(&[1.0, p, p * p, p * p * p]).unwrap().member);
        assert!(check_lm(&[1.0, p, p, p]).unwrap().member);
        let beta: Vec<f64> = (0..4).map(|k| 0.1 + 0.9 * (-(k as f64)).exp()).collect();
        let v = check_lm(&beta).unwrap();
        assert!(!v.member);
        match v.witness.unwrap() {
            Witness::Difference { k: 0, j: 3, value } => assert!((value + 0.06).abs() < 5e-3),
            w => panic!("unexpected witness {w:?}"),
        }
        assert!(matches!(check_lm(&[1.0, 0.0]), Err(Error::NonPositiveEntry { index: 1, .. })));
    }

    #[test]
    fn strong_monotone_examples() {
        let v = check_sm(&[0.5, 0.4]).unwrap();
        assert!(!v.member);
        match v.witness.unwrap() {
            Witness::Difference { k: 0, j: 1, value } => assert!((value - 0.8f64.ln()).abs() < 1e-12),
            w => panic!("unexpected witness {w:?}"),
        }
        assert!(check_sm(&[0.4, 0.5]).unwrap().member);
        assert!(check_sm(&[0.3; 5]).unwrap().member);
    }

    #[test]
    fn hankel_examples() {
        assert!(!hankel_extendible(&[1.0, 0.5, 0.2]).unwrap().extendible);
        assert!(hankel_extendible(&[1.0, 0.5, 0.25]).unwrap().extendible);
        for x1 in [0.0, 0.3, 0.99] {
            assert!(hankel_extendible(&[1.0, x1]).unwrap().extendible);
        }
    }

    #[test]
    fn lm_extendible_examples() {
        let v = lm_extendible(&[1.0, 0.6, 0.45]).unwrap();
        assert!(v.extendible && v.exact);
        let v = lm_extendible(&[1.0, 0.5, 0.2]).unwrap();
        assert!(!v.extendible);
        let p: f64 = 0.8;
        let v = lm_extendible(&[1.0, p, p * p, p * p * p]).unwrap();
        assert!(v.extendible && !v.exact);
    }

    #[test]
    fn report_shape() {
        let r = classify_sequence(&[1.0, 0.5, 0.2]).unwrap();
        assert!(r.in_m && !r.hankel_extendible && !r.in_lm);
        assert_eq!(r.lm_extendible, Some(false));
    }

    fn discrete_moments(atoms: &[(f64, f64)], len: usize) -> Vec<f64> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        (0..len)
            .map(|k| atoms.iter().map(|(x, w)| w / total * x.powi(k as i32)).sum::<f64>())
            .collect()
    }

    proptest! {
        #[test]
        fn log_monotone_implies_monotone(x in prop::collection::vec(0.01f64..1.0, 1..7)) {
            let mut v = vec![1.0];
            v.extend(x);
            let lm = check_lm(&v).unwrap();
            if lm.member {
                prop_assert!(check_m(&v).unwrap().member);
            }
        }

        #[test]
        fn log_monotone_strong_duality(x in prop::collection::vec(0.01f64..1.0, 1..8)) {
            let mut b = vec![1.0];
            let mut acc = 1.0;
            for r in &x {
                acc *= r;
                b.push(acc);
            }
            prop_assume!(b[1] < 1.0);
            let ratios: Vec<f64> = b.windows(2).map(|w| w[1] / w[0]).collect();
            let lm = check_lm(&b).unwrap().member;
            let sm = check_sm(&ratios).unwrap().member;
            prop_assert_eq!(lm, sm);
        }

        #[test]
        fn moment_sequences_pass(atoms in prop::collection::vec((0.0f64..1.0, 0.01f64..1.0), 1..5), len in 2usize..9) {
            let m = discrete_moments(&atoms, len);
            prop_assume!(m[1] < 1.0);
            prop_assert!(hankel_extendible(&m).unwrap().extendible);
            prop_assert!(check_m(&m).unwrap().member);
        }

        #[test]
        fn bivariate_lm_extendible_is_exact(b1 in 0.01f64..0.99, t in 0.0f64..1.0) {
            let b2 = b1 * b1 + t * (b1 - b1 * b1);
            let b = [1.0, b1, b2];
            prop_assume!(check_lm(&b).unwrap().member);
            prop_assert!(lm_extendible(&b).unwrap().extendible);
        }
    }
}
