//! Bit-level algebra of Bell states, Pauli errors and the purification circuit.
//!
//! A Bell state is written as a (phase, amplitude) bit pair,
//! `|B_{i,j}> = (|0 j> + (-1)^i |1 !j>) / sqrt(2)`, and every operation the
//! protocol uses (Pauli errors, the bilateral x-rotation, the bilateral CNOT)
//! maps Bell states to Bell states. All identities here hold up to a global
//! phase, which is dropped.
//!
//! | bits  | Bell state | Pauli |
//! |-------|------------|-------|
//! | (0,0) | Φ⁺         | Id    |
//! | (0,1) | Ψ⁺         | σx    |
//! | (1,0) | Φ⁻         | σz    |
//! | (1,1) | Ψ⁻         | σy    |

use std::fmt;

use serde::{Deserialize, Serialize};

/// A Bell state `|B_{phase,amplitude}>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BellIndex {
    pub phase: u8,
    pub amplitude: u8,
}

/// A Pauli operator `σ_{phase_flip,amplitude_flip}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliIndex {
    pub phase_flip: u8,
    pub amplitude_flip: u8,
}

/// The two error-flag bits the lab demon attaches to every pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct FlagPair {
    pub phase_error: u8,
    pub amplitude_error: u8,
}

macro_rules! two_bit_index {
    ($ty:ident, $hi:ident, $lo:ident) => {
        impl $ty {
            pub const fn new($hi: u8, $lo: u8) -> Self {
                assert!($hi <= 1 && $lo <= 1, "bits must be 0 or 1");
                Self { $hi, $lo }
            }

            /// Packed index `2 * high + low`, in `0..4`.
            pub const fn index(self) -> usize {
                (self.$hi as usize) << 1 | self.$lo as usize
            }

            pub const fn from_index(index: usize) -> Self {
                assert!(index < 4, "two-bit index out of range");
                Self { $hi: (index >> 1) as u8, $lo: (index & 1) as u8 }
            }

            /// All four values in packed-index order.
            pub const ALL: [Self; 4] = [
                Self::from_index(0),
                Self::from_index(1),
                Self::from_index(2),
                Self::from_index(3),
            ];
        }
    };
}

two_bit_index!(BellIndex, phase, amplitude);
two_bit_index!(PauliIndex, phase_flip, amplitude_flip);
two_bit_index!(FlagPair, phase_error, amplitude_error);

impl BellIndex {
    pub const PHI_PLUS: Self = Self::new(0, 0);
    pub const PSI_PLUS: Self = Self::new(0, 1);
    pub const PHI_MINUS: Self = Self::new(1, 0);
    pub const PSI_MINUS: Self = Self::new(1, 1);

    /// Bell states in the coefficient order A, B, C, D of a Bell-diagonal
    /// state `A Φ⁺ + B Ψ⁻ + C Ψ⁺ + D Φ⁻`.
    pub const LETTER_ORDER: [Self; 4] = [Self::PHI_PLUS, Self::PSI_MINUS, Self::PSI_PLUS, Self::PHI_MINUS];

    /// Position of this state in [`BellIndex::LETTER_ORDER`].
    pub const fn letter_index(self) -> usize {
        match (self.phase, self.amplitude) {
            (0, 0) => 0,
            (1, 1) => 1,
            (0, 1) => 2,
            _ => 3,
        }
    }

    pub const fn letter(self) -> char {
        b"ABCD"[self.letter_index()] as char
    }

    pub const fn name(self) -> &'static str {
        match (self.phase, self.amplitude) {
            (0, 0) => "Phi+",
            (0, 1) => "Psi+",
            (1, 0) => "Phi-",
            _ => "Psi-",
        }
    }

    /// The flag value that is perfectly correlated with this state.
    pub const fn as_flag(self) -> FlagPair {
        FlagPair::new(self.phase, self.amplitude)
    }
}

impl PauliIndex {
    pub const ID: Self = Self::new(0, 0);
    pub const X: Self = Self::new(0, 1);
    pub const Z: Self = Self::new(1, 0);
    pub const Y: Self = Self::new(1, 1);

    pub const fn name(self) -> &'static str {
        match (self.phase_flip, self.amplitude_flip) {
            (0, 0) => "Id",
            (0, 1) => "X",
            (1, 0) => "Z",
            _ => "Y",
        }
    }

    /// Group product, ignoring phase: `σ_{p,a} σ_{p',a'} ∝ σ_{p⊕p',a⊕a'}`.
    pub const fn compose(self, other: Self) -> Self {
        Self::new(self.phase_flip ^ other.phase_flip, self.amplitude_flip ^ other.amplitude_flip)
    }
}

impl FlagPair {
    pub const CLEAR: Self = Self::new(0, 0);
}

impl fmt::Display for BellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for PauliIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for FlagPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}{})", self.phase_error, self.amplitude_error)
    }
}

/// Action of a Pauli operator (on either qubit of the pair) on a Bell state.
pub const fn pauli_on_bell(op: PauliIndex, b: BellIndex) -> BellIndex {
    BellIndex::new(b.phase ^ op.phase_flip, b.amplitude ^ op.amplitude_flip)
}

/// Alice's `U_x` together with Bob's `U_x^-1`: `(i, j) -> (i, j ⊕ i)`.
pub const fn bilateral_xrot(b: BellIndex) -> BellIndex {
    BellIndex::new(b.phase, b.amplitude ^ b.phase)
}

/// Bilateral CNOT with `src` as control pair and `tgt` as target pair.
pub const fn bcnot(src: BellIndex, tgt: BellIndex) -> (BellIndex, BellIndex) {
    (
        BellIndex::new(src.phase ^ tgt.phase, src.amplitude),
        BellIndex::new(tgt.phase, src.amplitude ^ tgt.amplitude),
    )
}

/// Unitary part of one purification step (rotation, then BCNOT).
pub const fn epp_unitary(src: BellIndex, tgt: BellIndex) -> (BellIndex, BellIndex) {
    let (i, j, i2, j2) = (src.phase, src.amplitude, tgt.phase, tgt.amplitude);
    (BellIndex::new(i ^ i2, i ^ j), BellIndex::new(i2, i2 ^ j2 ^ i ^ j))
}

/// Unitary part of one step with Pauli errors `e_src`, `e_tgt` applied to
/// Alice's qubits of the two pairs beforehand.
pub const fn epp_with_errors(
    src: BellIndex,
    tgt: BellIndex,
    e_src: PauliIndex,
    e_tgt: PauliIndex,
) -> (BellIndex, BellIndex) {
    epp_unitary(pauli_on_bell(e_src, src), pauli_on_bell(e_tgt, tgt))
}

/// Alice's and Bob's z-measurements on the target pair coincide exactly when
/// its amplitude bit is zero.
pub const fn keep_predicate(tgt_out: BellIndex) -> bool {
    tgt_out.amplitude == 0
}

/// The Pauli correction that, applied after [`epp_unitary`], undoes the
/// errors `e_src ⊗ e_tgt` applied before it.
pub const fn error_corrector(e_src: PauliIndex, e_tgt: PauliIndex) -> (PauliIndex, PauliIndex) {
    let (p, a, p2, a2) = (e_src.phase_flip, e_src.amplitude_flip, e_tgt.phase_flip, e_tgt.amplitude_flip);
    (PauliIndex::new(p ^ p2, p ^ a), PauliIndex::new(p2, p2 ^ a2 ^ p ^ a))
}

/// Record a Pauli error in a pair's flags.
pub const fn flag_flip(f: FlagPair, op: PauliIndex) -> FlagPair {
    FlagPair::new(f.phase_error ^ op.phase_flip, f.amplitude_error ^ op.amplitude_flip)
}

/// Flag of the surviving source pair, given the (already flipped) flags of
/// both parents.
///
/// This is the source half of [`error_corrector`], except that both bits are
/// reset when the target pair carries an amplitude error.
pub const fn flag_update(f_src: FlagPair, f_tgt: FlagPair) -> FlagPair {
    let (p, a, p2, a2) = (f_src.phase_error, f_src.amplitude_error, f_tgt.phase_error, f_tgt.amplitude_error);
    if p2 ^ a2 ^ p ^ a == 0 {
        FlagPair::new(p ^ p2, p ^ a)
    } else {
        FlagPair::CLEAR
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(i: u8, j: u8) -> BellIndex {
        BellIndex::new(i, j)
    }

    fn fl(i: u8, j: u8) -> FlagPair {
        FlagPair::new(i, j)
    }

    #[test]
    fn names_are_bijective() {
        assert_eq!(b(0, 0).name(), "Phi+");
        assert_eq!(b(0, 1).name(), "Psi+");
        assert_eq!(b(1, 0).name(), "Phi-");
        assert_eq!(b(1, 1).name(), "Psi-");
        assert_eq!(PauliIndex::new(0, 0).name(), "Id");
        assert_eq!(PauliIndex::new(0, 1).name(), "X");
        assert_eq!(PauliIndex::new(1, 1).name(), "Y");
        assert_eq!(PauliIndex::new(1, 0).name(), "Z");
        let mut names: Vec<_> = BellIndex::ALL.iter().map(|b| b.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 4);
        for (k, bell) in BellIndex::LETTER_ORDER.iter().enumerate() {
            assert_eq!(bell.letter_index(), k);
        }
    }

    #[test]
    fn pauli_on_bell_examples() {
        assert_eq!(pauli_on_bell(PauliIndex::X, b(0, 0)), b(0, 1));
        assert_eq!(pauli_on_bell(PauliIndex::ID, b(1, 0)), b(1, 0));
        assert_eq!(pauli_on_bell(PauliIndex::Y, b(1, 0)), b(0, 1));
    }

    #[test]
    fn pauli_on_bell_is_involution() {
        for op in PauliIndex::ALL {
            for bell in BellIndex::ALL {
                assert_eq!(pauli_on_bell(op, pauli_on_bell(op, bell)), bell);
            }
        }
    }

    #[test]
    fn xrot_and_bcnot_examples() {
        assert_eq!(bilateral_xrot(b(0, 0)), b(0, 0));
        assert_eq!(bilateral_xrot(b(1, 1)), b(1, 0));
        assert_eq!(bilateral_xrot(b(1, 0)), b(1, 1));
        assert_eq!(bcnot(b(0, 0), b(0, 0)), (b(0, 0), b(0, 0)));
        assert_eq!(bcnot(b(1, 0), b(0, 1)), (b(1, 0), b(0, 1)));
        assert_eq!(bcnot(b(1, 1), b(1, 1)), (b(0, 1), b(1, 0)));
    }

    #[test]
    fn epp_examples() {
        assert_eq!(epp_unitary(b(0, 0), b(0, 0)), (b(0, 0), b(0, 0)));
        assert_eq!(epp_unitary(b(1, 1), b(1, 1)), (b(0, 0), b(1, 0)));
        assert_eq!(epp_unitary(b(1, 0), b(1, 0)), (b(0, 1), b(1, 0)));
        // σx on Alice's half of both Φ⁺ gives Ψ⁺ Ψ⁺; the target comes out Φ⁺ and is kept
        // while the source stays flipped.
        assert_eq!(epp_with_errors(b(0, 0), b(0, 0), PauliIndex::X, PauliIndex::X), (b(0, 1), b(0, 0)));
        assert_eq!(epp_with_errors(b(1, 1), b(1, 1), PauliIndex::X, PauliIndex::X), (b(0, 1), b(1, 0)));
        for s in BellIndex::ALL {
            for t in BellIndex::ALL {
                assert_eq!(epp_with_errors(s, t, PauliIndex::ID, PauliIndex::ID), epp_unitary(s, t));
            }
        }
    }

    #[test]
    fn epp_is_rotation_then_bcnot() {
        for s in BellIndex::ALL {
            for t in BellIndex::ALL {
                assert_eq!(epp_unitary(s, t), bcnot(bilateral_xrot(s), bilateral_xrot(t)));
            }
        }
    }

    #[test]
    fn epp_with_errors_closed_form() {
        for s in BellIndex::ALL {
            for t in BellIndex::ALL {
                for e in PauliIndex::ALL {
                    for e2 in PauliIndex::ALL {
                        let (i, j, i2, j2) = (s.phase, s.amplitude, t.phase, t.amplitude);
                        let (p, a, p2, a2) = (e.phase_flip, e.amplitude_flip, e2.phase_flip, e2.amplitude_flip);
                        let expected = (b(i ^ i2 ^ p ^ p2, i ^ j ^ p ^ a), b(i2 ^ p2, i2 ^ j2 ^ i ^ j ^ p2 ^ a2 ^ p ^ a));
                        assert_eq!(epp_with_errors(s, t, e, e2), expected);
                    }
                }
            }
        }
    }

    #[test]
    fn corrector_commutes_error_past_unitary() {
        for s in BellIndex::ALL {
            for t in BellIndex::ALL {
                for e in PauliIndex::ALL {
                    for e2 in PauliIndex::ALL {
                        let (c, c2) = error_corrector(e, e2);
                        let (so, to) = epp_unitary(s, t);
                        assert_eq!(epp_with_errors(s, t, e, e2), (pauli_on_bell(c, so), pauli_on_bell(c2, to)));
                    }
                }
            }
        }
    }

    #[test]
    fn corrector_examples() {
        let s = |p, a| PauliIndex::new(p, a);
        assert_eq!(error_corrector(s(0, 0), s(0, 0)), (s(0, 0), s(0, 0)));
        assert_eq!(error_corrector(s(0, 1), s(0, 0)), (s(0, 1), s(0, 1)));
        assert_eq!(error_corrector(s(1, 0), s(1, 1)), (s(0, 1), s(1, 1)));
    }

    #[test]
    fn keep_predicate_examples() {
        assert!(keep_predicate(b(0, 0)));
        assert!(keep_predicate(b(1, 0)));
        assert!(!keep_predicate(b(0, 1)));
        assert!(!keep_predicate(b(1, 1)));
    }

    #[test]
    fn flag_flip_examples() {
        assert_eq!(flag_flip(fl(0, 0), PauliIndex::X), fl(0, 1));
        assert_eq!(flag_flip(fl(1, 1), PauliIndex::ID), fl(1, 1));
        assert_eq!(flag_flip(fl(0, 1), PauliIndex::Y), fl(1, 0));
    }

    #[test]
    fn flag_update_examples() {
        assert_eq!(flag_update(fl(0, 0), fl(1, 1)), fl(1, 0));
        assert_eq!(flag_update(fl(0, 1), fl(1, 0)), fl(1, 1));
        assert_eq!(flag_update(fl(1, 1), fl(0, 1)), fl(0, 0));
    }

    #[test]
    fn flag_update_without_phase_errors_is_and() {
        for a in 0..2 {
            for a2 in 0..2 {
                assert_eq!(flag_update(fl(0, a), fl(0, a2)), fl(0, a & a2));
            }
        }
    }

    #[test]
    fn flag_update_keeps_perfect_correlation_on_kept_pairs() {
        // A pair whose flag equals its Bell index stays that way after a kept step.
        for s in BellIndex::ALL {
            for t in BellIndex::ALL {
                let (so, to) = epp_unitary(s, t);
                if keep_predicate(to) {
                    assert_eq!(flag_update(s.as_flag(), t.as_flag()), so.as_flag());
                }
            }
        }
    }
}
