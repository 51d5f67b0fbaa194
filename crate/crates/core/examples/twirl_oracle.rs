//! Dense-matrix check: a Werner pair survives the twirl unchanged, and the
//! bilateral CNOT circuit maps Bell products to Bell products.

use epp_core::bellbits::{bcnot, BellIndex};
use epp_core::oracle::{circuit_matrix, two_pair_vector, twirl, Circuit, DensityMatrix};
use epp_core::recurrence::BellDiagonalState;

fn main() {
    let werner = BellDiagonalState::werner(0.8).unwrap();
    let rho = DensityMatrix::bell_diagonal(&werner);
    let back = twirl(&rho);
    println!("twirled Werner 0.8: {:?}", back.letters());

    let u = circuit_matrix(Circuit::Bcnot);
    let mut worst: f64 = 0.0;
    for s in BellIndex::ALL {
        for t in BellIndex::ALL {
            let (s2, t2) = bcnot(s, t);
            let got = two_pair_vector(s, t).apply(&u);
            worst = worst.max(1.0 - got.overlap_modulus(&two_pair_vector(s2, t2)));
        }
    }
    println!("largest |1 - overlap| over 16 Bell products: {worst:.1e}");
}
