//! Monte Carlo rounds against the analytic recurrence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use epp_core::dynamics::random_noise;
use epp_core::montecarlo::{self, MCConfig, MCPair};
use epp_core::noise::{BinaryNoiseModel, NoiseModel};
use epp_core::recurrence::{
    binary_step, cell, cell_parts, generate_map, step, BellDiagonalState, BinaryFlaggedState, EnsembleState,
    FlaggedEnsembleState, CELLS,
};

fn within(count: u64, total: usize, p: f64, z: f64) -> bool {
    let n = total as f64;
    let sigma = (n * p * (1.0 - p)).sqrt();
    (count as f64 - n * p).abs() <= z * sigma.max(1e-12)
}

/// Pairs drawn cell by cell from a flagged ensemble.
fn sample(state: &FlaggedEnsembleState, n: usize, rng: &mut impl Rng) -> Vec<MCPair> {
    let cells = state.cells();
    (0..n)
        .map(|_| {
            let mut u = rng.random::<f64>();
            let mut k = CELLS - 1;
            for (i, &w) in cells.iter().enumerate() {
                if u < w {
                    k = i;
                    break;
                }
                u -= w;
            }
            let (bell, flag) = cell_parts(k);
            MCPair { bell, flag }
        })
        .collect()
}

#[test]
fn one_round_matches_recurrence_on_every_cell() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 1_000_000;
    for trial in 0..10 {
        let noise = random_noise(rng.random_range(0.7..1.0), 5, trial).unwrap();
        let mut w = [0.0; CELLS];
        for x in w.iter_mut() {
            *x = rng.random::<f64>();
        }
        let s: f64 = w.iter().sum();
        let state = FlaggedEnsembleState::new(w.map(|x| x / s)).unwrap();
        let pairs = sample(&state, n, &mut rng);
        let (kept, stats) = montecarlo::round(&pairs, &noise, 1000 + trial, 1, true);

        let couples = n / 2;
        let (expected, keep) = step(&state, &generate_map(&noise)).unwrap();
        assert!(within(kept.len() as u64, couples, keep, 4.0), "trial {trial}: survivors {} vs {}", kept.len(), keep * couples as f64);
        for k in 0..CELLS {
            assert!(
                within(stats.cells[k], kept.len(), expected.cells()[k], 4.0),
                "trial {trial}, cell {k}: {} vs {}",
                stats.cells[k],
                expected.cells()[k] * kept.len() as f64
            );
        }
    }
}

#[test]
fn cross_terms_decay_for_binary_pairs() {
    let noise = BinaryNoiseModel::new(0.8575, 0.0475, 0.0475, 0.0475).unwrap();
    // Binary pairs are Φ⁺ and Ψ⁺ only.
    let initial = BellDiagonalState::from_letters([0.8, 0.0, 0.2, 0.0]).unwrap();
    let cfg = MCConfig::new(1_000_000, initial, noise.embed(), 6, 3).unwrap();
    let stats = montecarlo::run(&cfg);

    let mut analytic = BinaryFlaggedState::new(0.8, 0.0, 0.2, 0.0).unwrap();
    let mut cross = Vec::new();
    for s in &stats[1..] {
        analytic = binary_step(&analytic, &noise).unwrap();
        cross.push(analytic.a1() + analytic.b0());
        let a1 = s.cells[cell(epp_core::bellbits::BellIndex::PHI_PLUS, epp_core::bellbits::FlagPair::new(0, 1))];
        let b0 = s.cells[cell(epp_core::bellbits::BellIndex::PSI_PLUS, epp_core::bellbits::FlagPair::CLEAR)];
        assert!(within(a1 + b0, s.pairs_remaining, analytic.a1() + analytic.b0(), 4.0));
        // Only the four binary cells are ever populated.
        let binary: u64 = [0, 1, 8, 9].iter().map(|&k| s.cells[k]).sum();
        assert_eq!(binary, s.pairs_remaining as u64);
    }
    let ratios: Vec<f64> = cross.windows(2).map(|w| w[1] / w[0]).collect();
    assert!(ratios.iter().all(|&r| r < 0.8), "{ratios:?}");
}

#[test]
fn survivors_shrink_and_fluctuations_grow() {
    let noise = NoiseModel::from_p1_p2(0.96, 0.968, false).unwrap();
    let cfg = MCConfig::new(200_000, BellDiagonalState::werner(0.85).unwrap(), noise, 8, 8).unwrap();
    let stats = montecarlo::run(&cfg);
    assert!(stats.windows(2).all(|w| w[1].pairs_remaining < w[0].pairs_remaining));
    let last = stats.last().unwrap();
    assert!(last.f_cond_hat >= 0.99);
}

#[test]
fn output_is_independent_of_thread_count() {
    let noise = NoiseModel::from_p1_p2(0.96, 0.968, false).unwrap();
    let cfg = MCConfig::new(300_000, BellDiagonalState::werner(0.85).unwrap(), noise, 4, 77).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| montecarlo::run(&cfg));
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| montecarlo::run(&cfg));
    assert_eq!(one, many);
    let other_seed = MCConfig { seed: 78, ..cfg };
    assert_ne!(montecarlo::run(&other_seed), one);
}

#[test]
fn analytic_and_sampled_start_agree_with_flagged_embedding() {
    let state = FlaggedEnsembleState::werner(0.85).unwrap();
    assert_eq!(state.fidelity(), 0.85);
    let cfg = MCConfig::new(10, BellDiagonalState::werner(0.85).unwrap(), NoiseModel::identity(), 0, 1).unwrap();
    assert!(montecarlo::init_ensemble(&cfg).iter().all(|p| p.flag == epp_core::bellbits::FlagPair::CLEAR));
}
