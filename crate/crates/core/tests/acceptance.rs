//! Acceptance run: one line per criterion, non-zero exit if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use geomlaw::dependence::{corr_exch_wide, corr_wide, separating_extreme};
use geomlaw::exchangeable::{embed_wide, p_from_a, ptilde_from_beta, ExchangeableSeq, ExchangeableSurvival, SeqRole};
use geomlaw::extendibility::{laplace_moments, InfDivLaw};
use geomlaw::samplers::{empirical_correlation, rng_stream, sample_batch, sample_wide, DeFinettiSampler};
use geomlaw::sequences::{check_lm, check_sm, classify_sequence, hankel_extendible, Witness};
use geomlaw::shock_models::FnSurvival;
use geomlaw::subset_algebra::difference;
use geomlaw::verify::{
    analytic_grid, bridge_check, compare_grids, corr_bounds_check, empirical_grid, exhaustive_check, lm_property_check,
    mrti_iff_check, pmf_necessity_check, pmf_sufficiency_check, CheckResult,
};

// Fixed once; never changed to make a run pass.
const SEED: u64 = 20_240_601;

type ClosedForm = Box<dyn Fn(&[u64]) -> f64 + Send + Sync>;
type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn from_check(c: CheckResult) -> Outcome {
    outcome(c.passed, c.detail.to_string())
}

fn both(a: CheckResult, b: CheckResult) -> Outcome {
    outcome(a.passed && b.passed, format!("{}: {} | {}: {}", a.name, a.detail, b.name, b.detail))
}

fn beta(v: &[f64]) -> ExchangeableSeq {
    ExchangeableSeq::new(SeqRole::Beta, v.len() - 1, v.to_vec()).unwrap()
}

fn c1() -> Outcome {
    let start = Instant::now();
    let a = classify_sequence(&[1.0, 0.5, 0.2]).unwrap();
    let b = classify_sequence(&[1.0, 0.5, 0.25]).unwrap();
    let elapsed = start.elapsed();
    let ok = a.in_m && !a.hankel_extendible && b.hankel_extendible && elapsed < Duration::from_millis(1);
    outcome(ok, format!("in_m={} hankel={} / hankel={} in {:?}", a.in_m, a.hankel_extendible, b.hankel_extendible, elapsed))
}

fn c2() -> Outcome {
    let a = ExchangeableSeq::new(SeqRole::A, 2, vec![0.5, 0.4]).unwrap();
    let inv = p_from_a(&a).unwrap();
    let p = inv.seq.values();
    let p_ok = (p[0] - 0.4).abs() <= 1e-12 && (p[1] - 1.25).abs() <= 1e-12 && !inv.admissible;
    let sm = check_sm(a.values()).unwrap();
    let w = match sm.witness {
        Some(Witness::Difference { value, .. }) => value,
        _ => f64::NAN,
    };
    let w_ok = !sm.member && (w - (0.8f64).ln()).abs() <= 1e-12;
    outcome(p_ok && w_ok, format!("p={p:?} admissible={} sm_witness={w}", inv.admissible))
}

fn c3() -> Outcome {
    let start = Instant::now();
    let pt = ptilde_from_beta(&beta(&[1.0, 0.5, 0.2])).unwrap();
    let w = embed_wide(&pt.seq).unwrap();
    let exact = corr_wide(&w, 1, 2).unwrap();
    let batch = sample_wide(&w, 1_000_000, &mut rng_stream(SEED, 3)).unwrap();
    let est = empirical_correlation(&batch, 0, 1).unwrap();
    let elapsed = start.elapsed();
    let ok = (exact + 0.125).abs() <= 1e-12 && est.within_3_sigma(-0.125) && elapsed < Duration::from_secs(10);
    outcome(ok, format!("closed={exact} mc={:.5}+-{:.5} in {elapsed:?}", est.value, est.std_error))
}

fn c4() -> Outcome {
    let law = InfDivLaw::Bernoulli { q: 0.9, level: 1.0 };
    let b = laplace_moments(&law, 3).unwrap();
    let corr = corr_exch_wide(&b).unwrap();
    let ln: Vec<f64> = b.values().iter().map(|v| v.ln()).collect();
    let third = difference(&ln, 3, 0).unwrap();
    let lm = check_lm(b.values()).unwrap().member;
    let hankel = (1..=6).all(|d| hankel_extendible(laplace_moments(&law, d).unwrap().values()).unwrap().extendible);
    let ok = (corr - 0.1072).abs() <= 5e-4 && (third + 0.06).abs() <= 5e-3 && !lm && hankel;
    outcome(ok, format!("corr={corr:.6} third_log_difference={third:.5} lm={lm} hankel_d<=6={hankel}"))
}

fn c5() -> Outcome {
    let c = bridge_check(100, &mut rng_stream(SEED, 5));
    let fast = c.seconds < 5.0;
    outcome(c.passed && fast, format!("{} in {:.3}s", c.detail, c.seconds))
}

fn c6() -> Outcome {
    let mut rng = rng_stream(SEED, 6);
    both(pmf_sufficiency_check(500, &mut rng), pmf_necessity_check(100, &mut rng))
}

fn c7() -> Outcome {
    let start = Instant::now();
    let p: f64 = 0.6;
    let mut parts = Vec::new();
    let mut ok = true;
    let cases: Vec<(&str, InfDivLaw, ClosedForm)> = vec![
        ("gamma", InfDivLaw::Gamma { shape: 2.0, rate: 3.0 }, {
            let b = laplace_moments(&InfDivLaw::Gamma { shape: 2.0, rate: 3.0 }, 3).unwrap();
            let sf = ExchangeableSurvival::from_seq(&b).unwrap();
            Box::new(move |n: &[u64]| geomlaw::shock_models::SurvivalFunction::survival(&sf, n))
        }),
        ("degenerate", InfDivLaw::Degenerate { at: Some(-p.ln()) }, Box::new(move |n: &[u64]| p.powi(n.iter().sum::<u64>() as i32))),
        (
            "zero-or-infinity",
            InfDivLaw::KilledDegenerate { at: 0.0, mass: p },
            Box::new(move |n: &[u64]| p.powi(*n.iter().max().unwrap() as i32)),
        ),
    ];
    for (i, (name, law, f)) in cases.into_iter().enumerate() {
        let sampler = DeFinettiSampler::new(law, 3).unwrap();
        let batch = sample_batch(&sampler, 1_000_000, SEED + i as u64, 4).unwrap();
        let exact = analytic_grid(&FnSurvival { dim: 3, f }, 3);
        let c = compare_grids(&exact, &empirical_grid(&batch, 3).unwrap()).unwrap();
        ok &= c.pass;
        parts.push(format!("{name}: pass={} max_dev={:.2e} failing={}", c.pass, c.max_abs_deviation, c.failing_cells));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    outcome(ok, format!("{} in {elapsed:?}", parts.join("; ")))
}

fn c8() -> Outcome {
    from_check(lm_property_check(50, 10_000, &mut rng_stream(SEED, 8)))
}

fn c9() -> Outcome {
    from_check(mrti_iff_check(200, &mut rng_stream(SEED, 9)))
}

fn c10() -> Outcome {
    let c = corr_bounds_check(10_000, &mut rng_stream(SEED, 10));
    let mut extremes = true;
    let mut worst = 0.0f64;
    for d in 2..=4usize {
        let half = corr_wide(&separating_extreme(d, 1, 2).unwrap(), 1, 2).unwrap();
        let mut v = vec![0.0; d + 1];
        v[0] = 1.0;
        v[1] = 1.0 / d as f64;
        let exch = corr_exch_wide(&beta(&v)).unwrap();
        worst = worst.max((half + 0.5).abs()).max((exch + 1.0 / d as f64).abs());
        extremes &= (half + 0.5).abs() <= 1e-12 && (exch + 1.0 / d as f64).abs() <= 1e-12;
    }
    outcome(c.passed && extremes, format!("{} extremes_max_error={worst:.1e}", c.detail))
}

fn c11() -> Outcome {
    let c = exhaustive_check(50, 8, &mut rng_stream(SEED, 11));
    let fast = c.seconds < 30.0;
    outcome(c.passed && fast, format!("{} in {:.3}s", c.detail, c.seconds))
}

fn c12() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("narrow.json");
    std::fs::write(&params, r#"{"family":"narrow","d":3,"params":{"1":0.5,"2":0.6,"3":0.9,"4":0.7,"5":1,"6":0.8,"7":0.95}}"#).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_geomlaw"))
            .args(["sample", "--model", "narrow", "--n", "20000", "--seed", "42", "--workers", "3"])
            .arg("--params")
            .arg(&params)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let meta = std::fs::read(format!("{}.meta.json", out.display())).unwrap();
        (std::fs::read(&out).unwrap(), meta)
    };
    let (a, ma) = run("a.csv");
    let (b, mb) = run("b.csv");
    outcome(a == b && ma == mb && !a.is_empty(), format!("csv bytes {} vs {}, identical={}", a.len(), b.len(), a == b))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("moment-sequence classification of (1,1/2,1/5) and (1,1/2,1/4)", c1),
        ("a-to-p inversion leaves the narrow region", c2),
        ("negative correlation -1/8, closed form and Monte Carlo", c3),
        ("Bernoulli mixing: positive correlation, not log-monotone, extendible", c4),
        ("narrow laws equal their wide representations", c5),
        ("pmf nonnegative iff the sequence is d-monotone", c6),
        ("random-walk construction matches closed forms", c7),
        ("lack-of-memory property on random models", c8),
        ("MRTI ratio criterion agrees with brute force", c9),
        ("correlation lower bounds and their extremes", c10),
        ("exhaustive shock enumeration oracle", c11),
        ("sampling is byte-for-byte deterministic", c12),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let tag = if o.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!o.passed);
        println!("criterion {:>2} [{tag}] {name} ({:.3}s)\n    {}", i + 1, start.elapsed().as_secs_f64(), o.detail);
    }
    println!("\n{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
