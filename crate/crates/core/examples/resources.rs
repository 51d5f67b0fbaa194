//! Initial pairs consumed per final pair against the remaining error,
//! with a power-law fit per apparatus setting.

use epp_core::montecarlo::{loglog_fit, resource_curve, resources};
use epp_core::noise::NoiseModel;
use epp_core::recurrence::BellDiagonalState;

fn main() {
    let initial = BellDiagonalState::werner(0.85).unwrap();
    for (p1, p2) in [(0.9333, 0.9466), (0.9733, 0.9786), (0.9866, 0.9833), (0.9933, 0.9946)] {
        let noise = NoiseModel::from_p1_p2(p1, p2, false).unwrap();
        let curve = resource_curve(&noise, &initial, 1e-4, 200).unwrap();
        let pts: Vec<(f64, f64)> =
            curve.iter().filter(|p| p.epsilon <= 1e-1).map(|p| (p.epsilon, p.pairs)).collect();
        let need = resources(&noise, &initial, 1e-3, 200).unwrap();
        print!("p1={p1} p2={p2}: {} pairs for 1e-3 in {} rounds", need.pairs_required, need.rounds_used);
        match loglog_fit(&pts) {
            Ok(f) => println!(", slope {:.3}, R² {:.4} over {} rounds", f.slope, f.r_squared, f.points),
            Err(e) => println!(", {e}"),
        }
    }
}
