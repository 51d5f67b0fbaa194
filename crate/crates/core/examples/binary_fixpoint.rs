//! Binary pairs under uncorrelated flips: iterated fixpoint against the
//! closed form, and the spectral radius of the map there.

use epp_core::dynamics::{binary_fixpoint_analytic, iterate_to_fixpoint, jacobian, spectral_radius, IterationOptions};
use epp_core::noise::BinaryNoiseModel;
use epp_core::recurrence::{binary_map, BinaryFlaggedState, EnsembleState};

fn main() {
    let opts = IterationOptions::default();
    println!("f0     A0 iterated  A0 closed    F        rho(J)");
    for f0 in [0.80, 0.85, 0.90, 0.95, 0.99] {
        let map = binary_map(&BinaryNoiseModel::uncorrelated(f0).unwrap());
        let fp = iterate_to_fixpoint(&BinaryFlaggedState::unflagged(0.85).unwrap(), &map, &opts).unwrap();
        let closed = binary_fixpoint_analytic(f0).unwrap();
        let rho = spectral_radius(&jacobian(&map, fp.state.components()).unwrap()).unwrap();
        println!("{f0:.2}   {:.9}  {:.9}  {:.6} {rho:.4}", fp.state.a0(), closed.a0(), fp.state.fidelity());
    }
}
