//! Pauli-diagonal two-qubit noise channels.
//!
//! A [`NoiseModel`] holds the joint probabilities `f_{μν}` that the lab demon
//! applies `σ_μ` to Alice's qubit of the source pair and `σ_ν` to Alice's
//! qubit of the target pair before each purification step. Paulis are
//! indexed by [`PauliIndex::index`]: 0 = Id, 1 = σx, 2 = σz, 3 = σy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bellbits::PauliIndex;

/// Tolerance on the normalization of user-supplied probability vectors.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Entries this far below zero are treated as rounding noise and clamped.
pub const NEGATIVE_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NoiseError {
    #[error("probability entry {index} is negative ({value})")]
    Negative { index: usize, value: f64 },
    #[error("probability entry {index} is not finite")]
    NotFinite { index: usize },
    #[error("probabilities sum to {sum}, expected 1 within {tol:e}")]
    Normalization { sum: f64, tol: f64 },
    #[error("parameter {name} = {value} outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("noise has weight {weight:e} outside the binary {{Id, X}} x {{Id, X}} support")]
    NotBinary { weight: f64 },
}

fn validate_probabilities<const N: usize>(mut p: [f64; N], tol: f64) -> Result<[f64; N], NoiseError> {
    for (index, v) in p.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(NoiseError::NotFinite { index });
        }
        if *v < 0.0 {
            if *v < -NEGATIVE_CLAMP {
                return Err(NoiseError::Negative { index, value: *v });
            }
            *v = 0.0;
        }
    }
    let sum: f64 = p.iter().sum();
    if sum <= 0.0 || (sum - 1.0).abs() > tol {
        return Err(NoiseError::Normalization { sum, tol });
    }
    for v in p.iter_mut() {
        *v /= sum;
    }
    Ok(p)
}

fn check_unit(name: &'static str, value: f64) -> Result<(), NoiseError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(NoiseError::OutOfRange { name, value })
    }
}

/// Joint Pauli error distribution on the (source, target) qubit pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// `f[4 * μ + ν]`.
    f: [f64; 16],
}

impl NoiseModel {
    /// Validate a flat vector `f[4 * μ + ν]`; deviations from unit sum up to
    /// [`NORMALIZATION_TOL`] are renormalized away.
    pub fn general(f16: [f64; 16]) -> Result<Self, NoiseError> {
        Self::general_with_tolerance(f16, NORMALIZATION_TOL)
    }

    /// Like [`NoiseModel::general`] with a caller-chosen normalization
    /// tolerance, for probability tables printed with few significant digits.
    pub fn general_with_tolerance(f16: [f64; 16], tol: f64) -> Result<Self, NoiseError> {
        Ok(Self { f: validate_probabilities(f16, tol)? })
    }

    pub fn identity() -> Self {
        let mut f = [0.0; 16];
        f[0] = 1.0;
        Self { f }
    }

    /// Uncorrelated errors, `f_{μν} = fa_μ fb_ν`.
    pub fn product(fa: [f64; 4], fb: [f64; 4]) -> Result<Self, NoiseError> {
        let fa = validate_probabilities(fa, NORMALIZATION_TOL)?;
        let fb = validate_probabilities(fb, NORMALIZATION_TOL)?;
        let mut f = [0.0; 16];
        for mu in 0..4 {
            for nu in 0..4 {
                f[4 * mu + nu] = fa[mu] * fb[nu];
            }
        }
        Self::general(f)
    }

    /// One-qubit white noise with the same single-qubit fidelity on both
    /// qubits.
    pub fn white(f0: f64) -> Result<Self, NoiseError> {
        let w = one_qubit_white(f0)?;
        Self::product(w, w)
    }

    /// One-qubit depolarizing noise (reliability `p1`) on each qubit followed
    /// by two-qubit depolarizing noise (reliability `p2`). With `both_labs`,
    /// the parameters describe identical apparatus in both laboratories and are
    /// folded into Alice's lab by squaring the reliabilities.
    pub fn from_p1_p2(p1: f64, p2: f64, both_labs: bool) -> Result<Self, NoiseError> {
        check_unit("p1", p1)?;
        check_unit("p2", p2)?;
        let (p1, p2) = if both_labs { (p1 * p1, p2 * p2) } else { (p1, p2) };
        let one = one_qubit_depolarizing(p1)?;
        let singles = Self::product(one, one)?;
        Ok(singles.compose(&two_qubit_depolarizing(p2)?))
    }

    /// Pauli-channel convolution: first `self`, then `other`.
    pub fn compose(&self, other: &NoiseModel) -> NoiseModel {
        let mut f = [0.0; 16];
        for k1 in 0..16 {
            if self.f[k1] == 0.0 {
                continue;
            }
            for k2 in 0..16 {
                // XOR of packed indices is the componentwise XOR on both slots.
                f[k1 ^ k2] += self.f[k1] * other.f[k2];
            }
        }
        NoiseModel { f }
    }

    pub fn get(&self, mu: PauliIndex, nu: PauliIndex) -> f64 {
        self.f[4 * mu.index() + nu.index()]
    }

    pub fn as_array(&self) -> &[f64; 16] {
        &self.f
    }

    /// Error distribution on the source qubit alone.
    pub fn source_marginal(&self) -> [f64; 4] {
        let mut m = [0.0; 4];
        for (k, v) in self.f.iter().enumerate() {
            m[k / 4] += v;
        }
        m
    }

    /// Error distribution on the target qubit alone.
    pub fn target_marginal(&self) -> [f64; 4] {
        let mut m = [0.0; 4];
        for (k, v) in self.f.iter().enumerate() {
            m[k % 4] += v;
        }
        m
    }

    /// Iterate over `((μ, ν), f_{μν})` for all sixteen error pairs.
    pub fn entries(&self) -> impl Iterator<Item = ((PauliIndex, PauliIndex), f64)> + '_ {
        self.f
            .iter()
            .enumerate()
            .map(|(k, &w)| ((PauliIndex::from_index(k / 4), PauliIndex::from_index(k % 4)), w))
    }

    /// Flat key-value form, `f.<μ bits><ν bits>`.
    pub fn to_config(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        out.insert("model".to_string(), "general".to_string());
        for ((mu, nu), w) in self.entries() {
            out.insert(config_key(mu, nu), format!("{w}"));
        }
        out
    }
}

/// Config key for `f_{μν}`, e.g. `f.0001` for (Id, σx).
pub fn config_key(mu: PauliIndex, nu: PauliIndex) -> String {
    format!("f.{}{}{}{}", mu.phase_flip, mu.amplitude_flip, nu.phase_flip, nu.amplitude_flip)
}

/// `(f0, (1-f0)/3, (1-f0)/3, (1-f0)/3)`.
pub fn one_qubit_white(f0: f64) -> Result<[f64; 4], NoiseError> {
    check_unit("f0", f0)?;
    let r = (1.0 - f0) / 3.0;
    Ok([f0, r, r, r])
}

/// Depolarizing channel `ρ → p ρ + (1-p) 1/2` as Pauli weights.
pub fn one_qubit_depolarizing(p: f64) -> Result<[f64; 4], NoiseError> {
    check_unit("p1", p)?;
    let r = (1.0 - p) / 4.0;
    Ok([p + r, r, r, r])
}

/// Two-qubit depolarizing channel `ρ → p ρ + (1-p) 1/4` as Pauli weights.
pub fn two_qubit_depolarizing(p: f64) -> Result<NoiseModel, NoiseError> {
    check_unit("p2", p)?;
    let mut f = [(1.0 - p) / 16.0; 16];
    f[0] += p;
    NoiseModel::general(f)
}

/// Correlated spin-flip channel acting with `{Id, σx}` on the two qubits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryNoiseModel {
    pub f00: f64,
    pub f01: f64,
    pub f10: f64,
    pub f11: f64,
}

impl BinaryNoiseModel {
    /// `f01` flips only the target, `f10` only the source.
    pub fn new(f00: f64, f01: f64, f10: f64, f11: f64) -> Result<Self, NoiseError> {
        let [f00, f01, f10, f11] = validate_probabilities([f00, f01, f10, f11], NORMALIZATION_TOL)?;
        Ok(Self { f00, f01, f10, f11 })
    }

    /// Independent flips with probability `1 - f0` on each qubit.
    pub fn uncorrelated(f0: f64) -> Result<Self, NoiseError> {
        check_unit("f0", f0)?;
        let f1 = 1.0 - f0;
        Self::new(f0 * f0, f0 * f1, f1 * f0, f1 * f1)
    }

    pub fn noiseless() -> Self {
        Self { f00: 1.0, f01: 0.0, f10: 0.0, f11: 0.0 }
    }

    /// Probability that exactly one qubit is flipped.
    pub fn single_flip(&self) -> f64 {
        self.f01 + self.f10
    }

    pub fn embed(&self) -> NoiseModel {
        let (id, x) = (PauliIndex::ID.index(), PauliIndex::X.index());
        let mut f = [0.0; 16];
        f[4 * id + id] = self.f00;
        f[4 * id + x] = self.f01;
        f[4 * x + id] = self.f10;
        f[4 * x + x] = self.f11;
        NoiseModel { f }
    }

    /// Inverse of [`BinaryNoiseModel::embed`]; fails if `noise` puts weight on
    /// σy or σz.
    pub fn from_noise(noise: &NoiseModel) -> Result<Self, NoiseError> {
        let (id, x) = (PauliIndex::ID, PauliIndex::X);
        let inside = noise.get(id, id) + noise.get(id, x) + noise.get(x, id) + noise.get(x, x);
        if (1.0 - inside).abs() > NORMALIZATION_TOL {
            return Err(NoiseError::NotBinary { weight: 1.0 - inside });
        }
        Self::new(noise.get(id, id), noise.get(id, x), noise.get(x, id), noise.get(x, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_valid(n: &NoiseModel) {
        assert!(n.as_array().iter().all(|&v| v >= 0.0));
        assert!((n.as_array().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    /// f00 = a, f0j = fi0 = b, fij = c (i, j ≠ 0), the white-noise pattern.
    fn symmetric_table(a: f64, b: f64, c: f64) -> [f64; 16] {
        let mut f = [c; 16];
        f[0] = a;
        for k in 1..4 {
            f[k] = b;
            f[4 * k] = b;
        }
        f
    }

    #[test]
    fn general_accepts_identity_and_caption_vector() {
        assert_valid(&NoiseModel::general(NoiseModel::identity().f).unwrap());
        let table = symmetric_table(0.83981, 0.021131, 0.003712);
        let sum: f64 = table.iter().sum();
        assert!((sum - 1.0).abs() < 1e-4);
        assert!(matches!(NoiseModel::general(table), Err(NoiseError::Normalization { .. })));
        let n = NoiseModel::general_with_tolerance(table, 1e-4).unwrap();
        assert_valid(&n);
    }

    #[test]
    fn general_rejects_negative_and_zero() {
        let mut f = [0.0; 16];
        f[0] = 1.1;
        f[5] = -0.1;
        assert_eq!(NoiseModel::general(f), Err(NoiseError::Negative { index: 5, value: -0.1 }));
        assert!(matches!(NoiseModel::general([0.0; 16]), Err(NoiseError::Normalization { .. })));
        let mut g = NoiseModel::identity().f;
        g[3] = -1e-16;
        assert_valid(&NoiseModel::general(g).unwrap());
    }

    #[test]
    fn product_examples() {
        assert_eq!(NoiseModel::product([1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap(), NoiseModel::identity());
        let w = one_qubit_white(0.9).unwrap();
        let n = NoiseModel::product(w, w).unwrap();
        assert!((n.get(PauliIndex::ID, PauliIndex::ID) - 0.81).abs() < 1e-15);
        let fa = [0.7, 0.1, 0.15, 0.05];
        let fb = [0.5, 0.2, 0.2, 0.1];
        let n = NoiseModel::product(fa, fb).unwrap();
        for k in 0..4 {
            assert!((n.source_marginal()[k] - fa[k]).abs() < 1e-15);
            assert!((n.target_marginal()[k] - fb[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn white_examples() {
        assert_eq!(one_qubit_white(1.0).unwrap(), [1.0, 0.0, 0.0, 0.0]);
        let w = one_qubit_white(0.7).unwrap();
        assert!((w[0] - 0.7).abs() < 1e-15);
        for v in &w[1..] {
            assert!((v - 0.1).abs() < 1e-15);
        }
        let w = one_qubit_white(0.8983).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(one_qubit_white(1.2).is_err());
        assert!(one_qubit_white(-0.1).is_err());
    }

    #[test]
    fn compose_examples() {
        let n = NoiseModel::from_p1_p2(0.9, 0.95, false).unwrap();
        assert_eq!(NoiseModel::identity().compose(&n), n);
        let m = NoiseModel::product([0.6, 0.2, 0.1, 0.1], [0.9, 0.0, 0.05, 0.05]).unwrap();
        let (a, b) = (n.compose(&m), m.compose(&n));
        for k in 0..16 {
            assert!((a.f[k] - b.f[k]).abs() < 1e-15);
        }
        // σx with probability 1/2 on the source, twice.
        let half = NoiseModel::product([0.5, 0.5, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap();
        let twice = half.compose(&half);
        assert_eq!(twice.source_marginal(), [0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn p1_p2_examples() {
        assert_eq!(NoiseModel::from_p1_p2(1.0, 1.0, false).unwrap(), NoiseModel::identity());
        let fig3 = NoiseModel::from_p1_p2(0.92, 0.9466, false).unwrap();
        assert!((fig3.get(PauliIndex::ID, PauliIndex::ID) - 0.83981).abs() < 2e-4);
        assert!((fig3.get(PauliIndex::ID, PauliIndex::X) - 0.021131).abs() < 2e-4);
        assert!((fig3.get(PauliIndex::Y, PauliIndex::Z) - 0.003712).abs() < 2e-4);
        let fig4 = NoiseModel::from_p1_p2(0.96, 0.968, false).unwrap();
        assert!((fig4.get(PauliIndex::ID, PauliIndex::ID) - 0.91279).abs() < 2e-4);
        assert!((fig4.get(PauliIndex::ID, PauliIndex::ID) - 0.91279120).abs() < 1e-12);
        assert!((fig4.get(PauliIndex::Z, PauliIndex::ID) - 0.0113896).abs() < 1e-6);
        let both = NoiseModel::from_p1_p2(0.9592, 0.973, true).unwrap();
        assert!((both.get(PauliIndex::ID, PauliIndex::ID) - 0.83981).abs() < 2e-4);
        assert!(NoiseModel::from_p1_p2(1.1, 0.9, false).is_err());
    }

    #[test]
    fn binary_examples() {
        let n = BinaryNoiseModel::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(n.embed(), NoiseModel::identity());
        let fig2 = BinaryNoiseModel::new(0.8575, 0.0475, 0.0475, 0.0475).unwrap();
        assert!((fig2.single_flip() - 0.095).abs() < 1e-15);
        let u = BinaryNoiseModel::uncorrelated(0.9).unwrap();
        for (got, want) in [(u.f00, 0.81), (u.f01, 0.09), (u.f10, 0.09), (u.f11, 0.01)] {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(BinaryNoiseModel::new(0.5, 0.5, 0.5, -0.5).is_err());
        assert!(BinaryNoiseModel::from_noise(&NoiseModel::white(0.9).unwrap()).is_err());
    }

    fn simplex4() -> impl Strategy<Value = [f64; 4]> {
        prop::array::uniform4(0.0f64..1.0).prop_filter("nonzero", |v| v.iter().sum::<f64>() > 1e-3).prop_map(|v| {
            let s: f64 = v.iter().sum();
            [v[0] / s, v[1] / s, v[2] / s, v[3] / s]
        })
    }

    proptest! {
        #[test]
        fn p1_p2_matches_explicit_composition(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
            let n = NoiseModel::from_p1_p2(p1, p2, false).unwrap();
            let d = one_qubit_depolarizing(p1).unwrap();
            let id = [1.0, 0.0, 0.0, 0.0];
            let on_src = NoiseModel::product(d, id).unwrap();
            let on_tgt = NoiseModel::product(id, d).unwrap();
            let explicit = on_src.compose(&on_tgt).compose(&two_qubit_depolarizing(p2).unwrap());
            for k in 0..16 {
                prop_assert!((n.f[k] - explicit.f[k]).abs() < 1e-14);
            }
            assert_valid(&n);
        }

        #[test]
        fn binary_embedding_round_trips(f in simplex4()) {
            let b = BinaryNoiseModel::new(f[0], f[1], f[2], f[3]).unwrap();
            let back = BinaryNoiseModel::from_noise(&b.embed()).unwrap();
            prop_assert!((back.f00 - b.f00).abs() < 1e-15);
            prop_assert!((back.f01 - b.f01).abs() < 1e-15);
            prop_assert!((back.f10 - b.f10).abs() < 1e-15);
            prop_assert!((back.f11 - b.f11).abs() < 1e-15);
        }

        #[test]
        fn compose_stays_normalized(fa in simplex4(), fb in simplex4(), fc in simplex4()) {
            let n = NoiseModel::product(fa, fb).unwrap().compose(&NoiseModel::product(fc, fa).unwrap());
            assert_valid(&n);
        }
    }
}
