//! Samplers against closed forms and against each other, N = 10^6, d = 3.

use geomlaw::dependence::separating_extreme;
use geomlaw::extendibility::InfDivLaw;
use geomlaw::samplers::{
    empirical_correlation, rng_stream, sample_batch, sample_narrow, sample_wide, DeFinettiSampler, Mixing, NarrowSampler,
    Sampler, SieveSampler, WideSampler,
};
use geomlaw::shock_models::{wide_from_narrow, FnSurvival, NarrowParams};
use geomlaw::verify::{analytic_grid, compare_grids, empirical_grid, SurvivalGrid};

const N: usize = 1_000_000;
const SEED: u64 = 777;

fn narrow3() -> NarrowParams {
    // Masks 1..7: {1}, {2}, {1,2}, {3}, {1,3}, {2,3}, {1,2,3}.
    NarrowParams::from_dense(3, vec![1.0, 0.8, 0.7, 0.9, 0.75, 0.95, 0.85, 0.9]).unwrap()
}

fn independence(p: [f64; 3]) -> NarrowParams {
    NarrowParams::from_dense(3, vec![1.0, p[0], p[1], 1.0, p[2], 1.0, 1.0, 1.0]).unwrap()
}

fn empirical(s: &dyn Sampler, seed: u64) -> SurvivalGrid {
    empirical_grid(&sample_batch(s, N, seed, 4).unwrap(), 4).unwrap()
}

fn against_closed_form(s: &dyn Sampler, seed: u64) {
    let exact = analytic_grid(s.closed_form().as_ref(), 4);
    let c = compare_grids(&exact, &empirical(s, seed)).unwrap();
    assert!(c.pass, "{}: {c:?}", s.model());
}

#[test]
fn every_sampler_matches_its_survival_function() {
    against_closed_form(&NarrowSampler::new(narrow3()), SEED);
    against_closed_form(&WideSampler::new(wide_from_narrow(&narrow3())), SEED + 1);
    against_closed_form(&DeFinettiSampler::new(InfDivLaw::Gamma { shape: 2.0, rate: 3.0 }, 3).unwrap(), SEED + 2);
    against_closed_form(&SieveSampler::new(Mixing::QuantileTable { quantiles: vec![0.0, 0.3, 0.5, 0.9] }, 3).unwrap(), SEED + 3);
}

#[test]
fn narrow_and_wide_samplers_agree() {
    let a = empirical(&NarrowSampler::new(narrow3()), SEED + 4);
    let b = empirical(&WideSampler::new(wide_from_narrow(&narrow3())), SEED + 5);
    let c = compare_grids(&a, &b).unwrap();
    assert!(c.pass, "{c:?}");
}

#[test]
fn wide_representation_of_independence() {
    let p = [0.5, 0.7, 0.8];
    let s = WideSampler::new(wide_from_narrow(&independence(p)));
    let exact = FnSurvival { dim: 3, f: move |n: &[u64]| (0..3).map(|k| p[k].powi(n[k] as i32)).product::<f64>() };
    let c = compare_grids(&analytic_grid(&exact, 4), &empirical(&s, SEED + 6)).unwrap();
    assert!(c.pass, "{c:?}");
}

#[test]
fn correlations_match_closed_forms() {
    let ind = sample_narrow(&independence([0.5, 0.6, 0.7]), N, &mut rng_stream(SEED, 7));
    let e = empirical_correlation(&ind, 0, 2).unwrap();
    assert!(e.within_3_sigma(0.0), "{e:?}");
    let half = sample_wide(&separating_extreme(3, 1, 2).unwrap(), N, &mut rng_stream(SEED, 8)).unwrap();
    let e = empirical_correlation(&half, 0, 1).unwrap();
    assert!(e.within_3_sigma(-0.5), "{e:?}");
}

#[test]
fn random_walk_draws_are_exchangeable() {
    let s = DeFinettiSampler::new(InfDivLaw::CompoundPoissonExp { intensity: 1.5, jump_rate: 2.0 }, 3).unwrap();
    let g = empirical(&s, SEED + 9);
    for c in 0..g.values.len() {
        let n = g.point(c);
        for perm in [[1, 0, 2], [2, 1, 0], [0, 2, 1]] {
            let m: Vec<u64> = perm.iter().map(|&i| n[i]).collect();
            let j = g.index(&m);
            assert!((g.values[c] - g.values[j]).abs() <= g.error_bound[c] + g.error_bound[j], "{n:?} vs {m:?}");
        }
    }
}

#[test]
fn sieve_point_mass_gives_independent_geometrics() {
    let p: f64 = 0.6;
    let s = SieveSampler::new(Mixing::PointMass { at: p }, 3).unwrap();
    let exact = FnSurvival { dim: 3, f: move |n: &[u64]| p.powi(n.iter().sum::<u64>() as i32) };
    let c = compare_grids(&analytic_grid(&exact, 4), &empirical(&s, SEED + 10)).unwrap();
    assert!(c.pass, "{c:?}");
}

#[test]
fn sieve_with_exponential_mixing_equals_random_walk() {
    let law = InfDivLaw::Gamma { shape: 2.0, rate: 3.0 };
    let sieve = empirical(&SieveSampler::new(Mixing::ExpNeg { law: law.clone() }, 3).unwrap(), SEED + 11);
    let walk = empirical(&DeFinettiSampler::new(law, 3).unwrap(), SEED + 12);
    let c = compare_grids(&sieve, &walk).unwrap();
    assert!(c.pass, "{c:?}");
}
