//! Pair-level simulation of noisy rounds next to the analytic recurrence.

use epp_core::montecarlo::{self, MCConfig};
use epp_core::noise::NoiseModel;
use epp_core::recurrence::{generate_map, step, BellDiagonalState, EnsembleState, FlaggedEnsembleState};

fn main() {
    let noise = NoiseModel::from_p1_p2(0.96, 0.968, false).unwrap();
    let initial = BellDiagonalState::werner(0.85).unwrap();
    let cfg = MCConfig::new(1_000_000, initial, noise.clone(), 8, 2024).unwrap();
    let stats = montecarlo::run(&cfg);

    let map = generate_map(&noise);
    let mut s = FlaggedEnsembleState::embed(&initial);
    println!("round pairs    F_mc      F         Fcond_mc  Fcond");
    for r in &stats {
        if r.round > 0 {
            s = step(&s, &map).unwrap().0;
        }
        println!(
            "{:<5} {:<8} {:.6}  {:.6}  {:.6}  {:.6}",
            r.round,
            r.pairs_remaining,
            r.f_hat,
            s.fidelity(),
            r.f_cond_hat,
            s.conditional_fidelity()
        );
    }
}
