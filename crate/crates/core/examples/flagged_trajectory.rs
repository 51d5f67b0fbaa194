//! Noisy rounds with error flags: fidelity, conditional fidelity and
//! survival probability, then the flag-resolved final state.

use epp_core::noise::NoiseModel;
use epp_core::recurrence::{cell_name, generate_map, step, EnsembleState, FlaggedEnsembleState, CELLS};

fn main() {
    let noise = NoiseModel::from_p1_p2(0.96, 0.968, false).unwrap();
    let map = generate_map(&noise);
    let mut s = FlaggedEnsembleState::werner(0.85).unwrap();
    println!("n   F          Fcond      N");
    for n in 1..=12 {
        let (next, keep) = step(&s, &map).unwrap();
        s = next;
        println!("{n:<3} {:.8} {:.8} {keep:.6}", s.fidelity(), s.conditional_fidelity());
    }
    for k in (0..CELLS).filter(|&k| s.cells()[k] > 1e-6) {
        println!("{} {:.3e}", cell_name(k), s.cells()[k]);
    }
}
