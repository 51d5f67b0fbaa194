//! Fraction of random noise models ending in each regime, as a function
//! of the probability of no error.

use epp_core::dynamics::{regime_scan, IterationOptions, Regime};

fn main() {
    let opts = IterationOptions::default();
    println!("f00   high-noise intermediate security");
    for i in 0..=10 {
        let f00 = 0.5 + 0.05 * i as f64;
        let r = regime_scan(f00, 100, 7, 0.85, &opts).unwrap();
        println!(
            "{f00:.2}  {:.2}       {:.2}         {:.2}",
            r.fraction(Regime::HighNoise),
            r.fraction(Regime::Intermediate),
            r.fraction(Regime::Security)
        );
    }
}
