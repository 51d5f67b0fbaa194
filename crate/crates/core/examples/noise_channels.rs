//! Building two-pair noise models and reading them back.

use epp_core::bellbits::PauliIndex;
use epp_core::noise::{config_key, two_qubit_depolarizing, BinaryNoiseModel, NoiseModel};

fn show(name: &str, n: &NoiseModel) {
    let f = n.as_array();
    println!("{name:<22} f00={:.6} f0X={:.6} fXX={:.6} sum={:.3e}", f[0], f[1], f[5], f.iter().sum::<f64>() - 1.0);
}

fn main() {
    show("white 0.95", &NoiseModel::white(0.95).unwrap());
    show("p1p2 0.96 0.968", &NoiseModel::from_p1_p2(0.96, 0.968, false).unwrap());
    show("p1p2 both labs", &NoiseModel::from_p1_p2(0.96, 0.968, true).unwrap());
    show("depolarizing 0.05", &two_qubit_depolarizing(0.05).unwrap());

    let a = NoiseModel::white(0.98).unwrap();
    show("white 0.98 twice", &a.compose(&a));

    let binary = BinaryNoiseModel::new(0.8575, 0.0475, 0.0475, 0.0475).unwrap();
    show("binary embedded", &binary.embed());
    println!("single flip probability {:.4}", binary.single_flip());

    let key = config_key(PauliIndex::X, PauliIndex::Z);
    println!("config key for X on source, Z on target: {key}");
}
