//! Conditional fidelity of one round against the next for binary pairs
//! in the intermediate regime, with the fitted curve near the fixpoint.

use epp_core::dynamics::{fit_intermediate, purification_curve};
use epp_core::noise::BinaryNoiseModel;
use epp_core::recurrence::{binary_map, BinaryFlaggedState};

fn main() {
    let map = binary_map(&BinaryNoiseModel::uncorrelated(0.76).unwrap());
    let curve = purification_curve(&map, &BinaryFlaggedState::unflagged(0.6).unwrap(), 8, 5).unwrap();
    for p in &curve {
        println!("{}  {:.8} -> {:.8}", p.n, p.fcond, p.fcond_next);
    }
    let tail: Vec<(f64, f64)> = curve.iter().filter(|p| p.n >= 3).map(|p| (p.fcond, p.fcond_next)).collect();
    match fit_intermediate(&tail) {
        Ok(fit) => println!("fit: offset {:.6} scale {:.4} onset {:.6}", fit.offset, fit.scale, fit.onset),
        Err(e) => println!("fit failed: {e}"),
    }
}
