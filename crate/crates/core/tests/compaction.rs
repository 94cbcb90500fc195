//! The automaton against a naive re-implementation of the relocation rule,
//! plus the conservation and plateau properties.

mod common;

use common::oracle::{compare, random_grid, random_surface, NaiveGrid, NaiveOutcome};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tape_lab::compaction::{
    correct, process_batch, rasterize, simulate, simulate_observed, CellGrid, CompactionConfig,
    Eligibility, SimulationParams,
};
use tape_lab::profile::RoughnessProfile;

fn run_both(grid: &mut CellGrid, naive: &mut NaiveGrid, max_steps: usize) {
    if let Err(e) = compare(grid, naive, max_steps) {
        panic!("diverged at {e}");
    }
}

#[test]
fn random_grids_match_the_naive_rule() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let (mut g, mut n) = random_grid(&mut rng, Eligibility::Supported);
        run_both(&mut g, &mut n, 40);
    }
    for _ in 0..50 {
        let (mut g, mut n) = random_grid(&mut rng, Eligibility::AnyAir);
        run_both(&mut g, &mut n, 40);
    }
    for mode in [Eligibility::Supported, Eligibility::AnyAir] {
        for _ in 0..50 {
            let (mut g, mut n) = random_surface(&mut rng, mode);
            run_both(&mut g, &mut n, 400);
        }
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

fn column_profile(cells: &[usize], eps_z: f64) -> RoughnessProfile {
    let h = cells.iter().map(|&c| c as f64 * eps_z).collect();
    RoughnessProfile::new("cols", h, 1.0, None).unwrap()
}

#[test]
fn two_level_step_traced() {
    // [2, 2, 0, 0] cells over the 2-row base; the valleys sit directly under
    // the contact row after one descent, so the run ends at once
    let p = column_profile(&[2, 2, 0, 0], 1.0);
    let mut g = rasterize(&p, 1.0, &CompactionConfig::default()).unwrap();
    assert_eq!(g.column_heights(), vec![4, 4, 2, 2]);
    assert_eq!(g.contact_count(), 2);
    let t = g.step().unwrap_err();
    assert_eq!(t.n_c, 4);
    let s = simulate(&p, 1.0, 5, &CompactionConfig::default()).unwrap();
    assert_eq!(s.raw.values, vec![0.5, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(correct(&s.raw).unwrap().values, vec![0.5, 1.0, 1.0, 1.0, 1.0]);
}

#[test]
fn raised_half_fills_valleys_then_spreads() {
    // half the width raised by 8 cells: contact stays at one half while the
    // valleys fill, then rises
    let p = column_profile(&[8, 8, 8, 8, 0, 0, 0, 0], 1.0);
    let cfg = CompactionConfig::default();
    let s = simulate(&p, 1.0, 12, &cfg).unwrap();
    let mut naive = NaiveGrid::from_grid(&rasterize(&p, 1.0, &cfg).unwrap());
    let mut expected = vec![naive.contact_count() as f64 / 8.0];
    loop {
        match naive.step() {
            NaiveOutcome::Contact(n) => {
                expected.push(n as f64 / 8.0);
                if n == 8 {
                    break;
                }
            }
            NaiveOutcome::Terminal(n_c) => {
                let r = n_c as f64 / 8.0;
                expected.push(r - r.floor());
                break;
            }
        }
    }
    assert_eq!(s.raw.values[0], 0.5);
    assert_eq!(s.raw.values[1], 0.5);
    assert_eq!(&s.raw.values[..expected.len()], expected.as_slice());
    assert!(s.raw.values.iter().any(|&v| v > 0.5));
}

fn rough_profile(seed: u64, n: usize) -> RoughnessProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = 0.0f64;
    let heights = (0..n)
        .map(|_| {
            h = 0.8 * h + rng.gen_range(-1.0..1.0);
            h
        })
        .collect();
    RoughnessProfile::new(format!("r{seed}"), heights, 3.0, None).unwrap()
}

#[test]
fn rasterized_profiles_match_the_naive_rule() {
    for seed in 0..10 {
        let p = rough_profile(seed, 20);
        let g0 = rasterize(&p, 0.25, &CompactionConfig::default()).unwrap();
        let mut naive = NaiveGrid::from_grid(&g0);
        let mut g = g0.clone();
        run_both(&mut g, &mut naive, 200);
    }
}

#[test]
fn mass_is_conserved_and_plateau_follows_formula() {
    let cfg = CompactionConfig::default();
    for seed in 0..10 {
        let p = rough_profile(100 + seed, 120);
        let mut counts = Vec::new();
        let s = simulate_observed(&p, 0.2, 400, &cfg, |g| {
            counts.push(g.occupancy().iter().filter(|&&m| m).count());
            assert_eq!(g.material_count(), counts[counts.len() - 1]);
        })
        .unwrap();
        assert!(counts.windows(2).all(|w| w[0] == w[1]));
        assert!(s.converged);
        if let Some(t) = s.terminal {
            let r = t.n_c as f64 / t.n_w as f64;
            assert_eq!(*s.raw.values.last().unwrap(), r - r.floor());
            assert_eq!(*correct(&s.raw).unwrap().values.last().unwrap(), 1.0);
        }
    }
}

#[test]
fn batch_results_do_not_depend_on_workers() {
    let profiles: Vec<_> = (0..6).map(|s| rough_profile(s, 80)).collect();
    let params = SimulationParams {
        eps_z: 0.2,
        horizon: 200,
        ..Default::default()
    };
    let one = process_batch(&profiles, &params, 1).unwrap();
    let three = process_batch(&profiles, &params, 3).unwrap();
    assert_eq!(one, three);
}

#[test]
fn thicker_base_leaves_dic_unchanged() {
    let p = rough_profile(7, 150);
    let thin = simulate(&p, 0.1, 352, &CompactionConfig::default()).unwrap();
    let thick = simulate(
        &p,
        0.1,
        352,
        &CompactionConfig {
            base_rows: 10,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(thin.raw, thick.raw);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn raw_dic_is_bounded_and_monotone_until_the_drop(seed in 0u64..10_000, n in 8usize..60) {
        let p = rough_profile(seed, n);
        let s = simulate(&p, 0.3, 300, &CompactionConfig::default()).unwrap();
        prop_assert!(s.raw.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let end = match s.terminal {
            Some(_) => (s.steps + 1).min(s.raw.values.len()),
            None => s.raw.values.len(),
        };
        let head = &s.raw.values[..end];
        for w in head.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        if s.terminal.is_some() && end < s.raw.values.len() {
            prop_assert!(s.raw.values[end..].iter().all(|&v| Some(v) == s.raw.artifact_value));
        }
    }

    #[test]
    fn simulation_is_deterministic(seed in 0u64..1000) {
        let p = rough_profile(seed, 40);
        let a = simulate(&p, 0.2, 100, &CompactionConfig::default()).unwrap();
        let b = simulate(&p, 0.2, 100, &CompactionConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}
