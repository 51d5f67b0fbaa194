//! Noiseless purification of a Werner pair, step by step.

use epp_core::recurrence::{ideal_step, BellDiagonalState};

fn main() {
    let mut s = BellDiagonalState::werner(0.7).unwrap();
    println!("n  A         B         C         D");
    for n in 0..=8 {
        let [a, b, c, d] = s.letters();
        println!("{n}  {a:.7} {b:.7} {c:.7} {d:.7}");
        s = ideal_step(&s).unwrap();
    }
}
