//! Bell-pair bookkeeping: bilateral CNOT tables, the keep rule and the
//! error-flag update.

use epp_core::bellbits::{
    bcnot, bilateral_xrot, epp_unitary, epp_with_errors, error_corrector, flag_update, keep_predicate, BellIndex,
    FlagPair, PauliIndex,
};

fn main() {
    println!("bilateral CNOT (source, target) -> (source, target)");
    for s in BellIndex::ALL {
        for t in BellIndex::ALL {
            let (s2, t2) = bcnot(s, t);
            print!("  {s}{t}->{s2}{t2}");
        }
        println!();
    }

    println!("\nx-rotation: {}", BellIndex::ALL.map(|b| format!("{b}->{}", bilateral_xrot(b))).join(" "));

    println!("\nkept outputs of the protocol unitary");
    for s in BellIndex::ALL {
        for t in BellIndex::ALL {
            let (s2, t2) = epp_unitary(s, t);
            if keep_predicate(t2) {
                println!("  {s} {t} -> source {s2}");
            }
        }
    }

    let (s, t) = epp_with_errors(BellIndex::PHI_PLUS, BellIndex::PHI_PLUS, PauliIndex::X, PauliIndex::X);
    println!("\nX on both Φ⁺ pairs before the circuit: source {s}, target {t}");
    let (cs, ct) = error_corrector(PauliIndex::X, PauliIndex::X);
    println!("equivalent errors after the circuit: {cs} on source, {ct} on target");

    println!("\nflag update (rows: target flag, columns: source flag)");
    for ft in FlagPair::ALL {
        let row: Vec<String> = FlagPair::ALL.iter().map(|&fs| flag_update(fs, ft).to_string()).collect();
        println!("  {ft}: {}", row.join(" "));
    }
}
