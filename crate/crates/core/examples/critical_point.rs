//! Bisection for the noise level below which the conditional fidelity
//! no longer reaches one.

use std::time::Instant;

use epp_core::dynamics::{find_critical, CriticalOptions, NoiseFamily};

fn main() {
    let t = Instant::now();
    let r = find_critical(&NoiseFamily::BinaryUncorrelated, 0.75, 0.85, &CriticalOptions::default()).unwrap();
    println!("binary uncorrelated: f0* = {:.12} (width {:.1e}, {:.1?})", r.critical, r.width(), t.elapsed());

    let fast = CriticalOptions { halvings: 20, ..CriticalOptions::default() };
    let t = Instant::now();
    let r = find_critical(&NoiseFamily::WhiteNoise, 0.89, 0.91, &fast).unwrap();
    println!("white noise:         f0* = {:.7} (width {:.1e}, {:.1?})", r.critical, r.width(), t.elapsed());
}
