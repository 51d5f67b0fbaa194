//! Brute-force dense complex linear algebra used to cross-check the bit
//! algebra in [`crate::bellbits`] and to justify sampling twirled pairs
//! directly from Bell-diagonal weights.
//!
//! Single pairs live in `C^4` with basis `|00>, |01>, |10>, |11>` (Alice's
//! qubit first). Two pairs live in `C^16` with tensor order
//! `A1 ⊗ B1 ⊗ A2 ⊗ B2`, so A1 is the most significant bit of a basis index.
//! Nothing here is tuned for speed.

use nalgebra::{Complex, DMatrix, DVector};

use crate::bellbits::{BellIndex, PauliIndex};
use crate::recurrence::BellDiagonalState;

pub type C64 = Complex<f64>;
pub type Operator = DMatrix<C64>;

const VECTOR_NORM_TOL: f64 = 1e-12;
const DENSITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("expected a {expected}x{expected} density matrix, got {rows}x{cols}")]
    Shape { expected: usize, rows: usize, cols: usize },
    #[error("density matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("density matrix has trace {0}, expected 1")]
    Trace(f64),
    #[error("density matrix has negative eigenvalue {0:e}")]
    NotPositive(f64),
    #[error("state vector has norm {0}, expected 1")]
    Norm(f64),
}

/// A normalized pure state of one (dimension 4) or two (dimension 16) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    amplitudes: DVector<C64>,
}

impl DenseState {
    pub fn new(amplitudes: DVector<C64>) -> Result<Self, OracleError> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > VECTOR_NORM_TOL {
            return Err(OracleError::Norm(norm));
        }
        Ok(Self { amplitudes })
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn tensor(&self, other: &DenseState) -> DenseState {
        DenseState { amplitudes: self.amplitudes.kronecker(&other.amplitudes) }
    }

    pub fn apply(&self, op: &Operator) -> DenseState {
        DenseState { amplitudes: op * &self.amplitudes }
    }

    /// `|<self|other>|`, which is 1 exactly when the states agree up to a
    /// global phase.
    pub fn overlap_modulus(&self, other: &DenseState) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm()
    }

    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix { rho: &self.amplitudes * self.amplitudes.adjoint() }
    }
}

/// A validated 4x4 density matrix of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: Operator,
}

impl DensityMatrix {
    pub fn new(rho: Operator) -> Result<Self, OracleError> {
        if rho.nrows() != 4 || rho.ncols() != 4 {
            return Err(OracleError::Shape { expected: 4, rows: rho.nrows(), cols: rho.ncols() });
        }
        let herm_dev = (&rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_dev > DENSITY_TOL {
            return Err(OracleError::NotHermitian(herm_dev));
        }
        let trace = rho.trace();
        if (trace.re - 1.0).abs() > DENSITY_TOL || trace.im.abs() > DENSITY_TOL {
            return Err(OracleError::Trace(trace.re));
        }
        let min_eig = rho.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -DENSITY_TOL {
            return Err(OracleError::NotPositive(min_eig));
        }
        Ok(Self { rho })
    }

    pub fn maximally_mixed() -> Self {
        Self { rho: Operator::identity(4, 4) * C64::from(0.25) }
    }

    /// `Σ_μ p_μ |B_μ><B_μ|`.
    pub fn bell_diagonal(state: &BellDiagonalState) -> Self {
        let mut rho = Operator::zeros(4, 4);
        for bell in BellIndex::ALL {
            rho += bell_vector(bell).projector().rho * C64::from(state.get(bell));
        }
        Self { rho }
    }

    pub fn matrix(&self) -> &Operator {
        &self.rho
    }

    /// `<B|rho|B>`.
    pub fn bell_weight(&self, bell: BellIndex) -> f64 {
        let v = bell_vector(bell);
        v.amplitudes.dotc(&(&self.rho * &v.amplitudes)).re
    }
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn pauli_matrix(op: PauliIndex) -> Operator {
    let i = C64::i();
    let (o, l) = (c(0.0), c(1.0));
    match op.name() {
        "Id" => DMatrix::from_row_slice(2, 2, &[l, o, o, l]),
        "X" => DMatrix::from_row_slice(2, 2, &[o, l, l, o]),
        "Y" => DMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
        _ => DMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
    }
}

/// `(|0 j> + (-1)^i |1 !j>) / sqrt(2)`.
pub fn bell_vector(b: BellIndex) -> DenseState {
    let mut amps = DVector::from_element(4, c(0.0));
    let j = b.amplitude as usize;
    let sign = if b.phase == 0 { 1.0 } else { -1.0 };
    amps[j] = c(std::f64::consts::FRAC_1_SQRT_2);
    amps[2 | (1 - j)] = c(sign * std::f64::consts::FRAC_1_SQRT_2);
    DenseState { amplitudes: amps }
}

/// `|B_src> ⊗ |B_tgt>` in the two-pair space.
pub fn two_pair_vector(src: BellIndex, tgt: BellIndex) -> DenseState {
    bell_vector(src).tensor(&bell_vector(tgt))
}

/// Kronecker product of four single-qubit operators in order A1, B1, A2, B2.
pub fn on_qubits(a1: &Operator, b1: &Operator, a2: &Operator, b2: &Operator) -> Operator {
    a1.kronecker(b1).kronecker(a2).kronecker(b2)
}

/// Pauli errors on Alice's qubit of the source (A1) and target (A2) pairs.
pub fn alice_errors(e_src: PauliIndex, e_tgt: PauliIndex) -> Operator {
    let id = pauli_matrix(PauliIndex::ID);
    on_qubits(&pauli_matrix(e_src), &id, &pauli_matrix(e_tgt), &id)
}

/// Rotation by π/2 about x: `exp(-i π/4 σx)`.
fn x_rotation(sign: f64) -> Operator {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let s = C64::new(0.0, -sign * h);
    DMatrix::from_row_slice(2, 2, &[c(h), s, s, c(h)])
}

/// CNOT on a 4-qubit register (A1, B1, A2, B2 = qubits 0..4, qubit 0 most
/// significant) from `control` to `target`.
fn cnot(control: usize, target: usize) -> Operator {
    let mut m = Operator::zeros(16, 16);
    for col in 0..16usize {
        let cbit = (col >> (3 - control)) & 1;
        let row = if cbit == 1 { col ^ (1 << (3 - target)) } else { col };
        m[(row, col)] = c(1.0);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Circuit {
    /// Alice `U_x` on A1 and A2, Bob `U_x^-1` on B1 and B2.
    XRot,
    /// CNOT A1→A2 and B1→B2.
    Bcnot,
    /// `Bcnot · XRot`.
    Epp,
}

pub fn circuit_matrix(which: Circuit) -> Operator {
    match which {
        Circuit::XRot => {
            let (ua, ub) = (x_rotation(1.0), x_rotation(-1.0));
            on_qubits(&ua, &ub, &ua, &ub)
        }
        Circuit::Bcnot => cnot(0, 2) * cnot(1, 3),
        Circuit::Epp => circuit_matrix(Circuit::Bcnot) * circuit_matrix(Circuit::XRot),
    }
}

/// Average of `(σ_k ⊗ σ_k) rho (σ_k ⊗ σ_k)` over the four Paulis, reported as
/// Bell-diagonal weights.
pub fn twirl(rho: &DensityMatrix) -> BellDiagonalState {
    let mut avg = Operator::zeros(4, 4);
    for k in PauliIndex::ALL {
        let s = pauli_matrix(k);
        let u = s.kronecker(&s);
        avg += &u * &rho.rho * u.adjoint();
    }
    let twirled = DensityMatrix { rho: avg * c(0.25) };
    let mut weights = [0.0; 4];
    for bell in BellIndex::ALL {
        weights[bell.letter_index()] = twirled.bell_weight(bell).max(0.0);
    }
    BellDiagonalState::from_letters(weights).expect("twirl of a density matrix is a probability vector")
}
