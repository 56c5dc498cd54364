//! Exact state-vector check that the CNOT form of the protocol produces a GHZ
//! state and that its measurement statistics coincide with the classical XOR
//! pipeline.
//!
//! Qubit `q` is bit `q` of a basis-state index. The protocol circuit on `n`
//! parties uses `2(n−1)` qubits ordered `[a_1, b_1, a_2, b_2, …]`, so `a_i` is
//! qubit `2(i−1)` and `b_i` is qubit `2(i−1)+1`.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{apply_xor, Basis, MatchedRound};

pub const MIN_PARTIES: usize = 2;
pub const MAX_PARTIES: usize = 8;

/// Probabilities at or below this are outside the support.
const SUPPORT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        StateVector {
            n_qubits,
            amplitudes,
        }
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::invalid(
                "amplitudes",
                format!("length {len} is not a power of two"),
            ));
        }
        Ok(StateVector {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|⟨reference|self⟩|²`.
    pub fn fidelity(&self, reference: &StateVector) -> f64 {
        if self.n_qubits != reference.n_qubits {
            return 0.0;
        }
        reference.inner(self).norm_sqr()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q < self.n_qubits {
            Ok(())
        } else {
            Err(Error::QubitIndex {
                index: q,
                n_qubits: self.n_qubits,
            })
        }
    }

    /// `|c⟩|t⟩ → |c⟩|t ⊕ c⟩`.
    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::invalid("target", "control and target must differ"));
        }
        let (c, t) = (1usize << control, 1usize << target);
        for idx in 0..self.amplitudes.len() {
            if idx & c != 0 && idx & t == 0 {
                self.amplitudes.swap(idx, idx | t);
            }
        }
        Ok(())
    }

    pub fn apply_hadamard(&mut self, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        for idx in 0..self.amplitudes.len() {
            if idx & bit == 0 {
                let a = self.amplitudes[idx];
                let b = self.amplitudes[idx | bit];
                self.amplitudes[idx] = (a + b) * FRAC_1_SQRT_2;
                self.amplitudes[idx | bit] = (a - b) * FRAC_1_SQRT_2;
            }
        }
        Ok(())
    }
}

fn check_parties(n: usize) -> Result<()> {
    if (MIN_PARTIES..=MAX_PARTIES).contains(&n) {
        Ok(())
    } else {
        Err(Error::invalid(
            "n",
            format!("{n} parties outside supported range [{MIN_PARTIES}, {MAX_PARTIES}]"),
        ))
    }
}

pub fn dealer_qubit(i: usize) -> usize {
    2 * (i - 1)
}

pub fn player_qubit(i: usize) -> usize {
    2 * (i - 1) + 1
}

/// Qubits `[a_1, b_1, …, b_{n−1}]` that carry the GHZ state.
pub fn ghz_parties(n: usize) -> Vec<usize> {
    std::iter::once(dealer_qubit(1))
        .chain((1..n).map(player_qubit))
        .collect()
}

/// `n − 1` Bell pairs `|φ⁺⟩_{a_i b_i}`.
pub fn build_bell_chain(n: usize) -> Result<StateVector> {
    check_parties(n)?;
    let pairs = n - 1;
    let n_qubits = 2 * pairs;
    let amp = Complex64::new(0.5f64.powf(pairs as f64 / 2.0), 0.0);
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
    for z in 0usize..(1 << pairs) {
        let idx = (0..pairs)
            .filter(|p| z >> p & 1 == 1)
            .fold(0usize, |acc, p| acc | 0b11 << (2 * p));
        amplitudes[idx] = amp;
    }
    Ok(StateVector {
        n_qubits,
        amplitudes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CircuitVariant {
    #[default]
    Full,
    /// Drops the dealer–player CNOTs; used as a negative control.
    SkipNonLocal,
}

#[derive(Debug, Clone)]
pub struct CircuitRun {
    pub state: StateVector,
    /// Norm after each gate, in application order.
    pub gate_norms: Vec<f64>,
}

pub fn run_ghz_circuit_with(n: usize, variant: CircuitVariant) -> Result<CircuitRun> {
    let mut state = build_bell_chain(n)?;
    let mut gate_norms = Vec::new();
    for i in 2..n {
        state.apply_cnot(dealer_qubit(1), dealer_qubit(i))?;
        gate_norms.push(state.norm());
    }
    if variant == CircuitVariant::Full {
        for i in 2..n {
            state.apply_cnot(dealer_qubit(i), player_qubit(i))?;
            gate_norms.push(state.norm());
        }
    }
    Ok(CircuitRun { state, gate_norms })
}

/// Local CNOTs `a_1 → a_i`, then non-local CNOTs `a_i → b_i`, for
/// `i = 2 … n−1`, applied to the Bell chain.
pub fn run_ghz_circuit(n: usize) -> Result<StateVector> {
    Ok(run_ghz_circuit_with(n, CircuitVariant::Full)?.state)
}

/// GHZ state on `[a_1, b_1, …, b_{n−1}]` times `|+⟩` on every `a_i`, `i ≥ 2`,
/// written out amplitude by amplitude.
pub fn ghz_reference(n: usize) -> Result<StateVector> {
    check_parties(n)?;
    let n_qubits = 2 * (n - 1);
    let ancillas: Vec<usize> = (2..n).map(dealer_qubit).collect();
    let ghz = ghz_parties(n);
    let amp = Complex64::new(
        FRAC_1_SQRT_2 * 0.5f64.powf(ancillas.len() as f64 / 2.0),
        0.0,
    );
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
    for z in [0usize, 1] {
        for s in 0usize..(1 << ancillas.len()) {
            let mut idx = 0usize;
            if z == 1 {
                for &q in &ghz {
                    idx |= 1 << q;
                }
            }
            for (bit, &q) in ancillas.iter().enumerate() {
                if s >> bit & 1 == 1 {
                    idx |= 1 << q;
                }
            }
            amplitudes[idx] = amp;
        }
    }
    Ok(StateVector {
        n_qubits,
        amplitudes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    /// One bit per listed qubit, in the order given.
    pub outcome: Vec<bool>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub basis: Basis,
    pub rows: Vec<OutcomeRow>,
}

impl CorrelationTable {
    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.probability).sum()
    }

    pub fn support(&self) -> BTreeSet<Vec<bool>> {
        self.rows
            .iter()
            .filter(|r| r.probability > SUPPORT_EPS)
            .map(|r| r.outcome.clone())
            .collect()
    }
}

/// Exact outcome distribution of measuring `parties` in `basis`, all other
/// qubits traced out. X-basis readout is a Hadamard followed by a Z readout
/// (`|+⟩ ↦ 0`, `|−⟩ ↦ 1`).
pub fn measure_statistics(
    state: &StateVector,
    basis: Basis,
    parties: &[usize],
) -> Result<CorrelationTable> {
    for &q in parties {
        state.check_qubit(q)?;
    }
    let mut rotated;
    let state = match basis {
        Basis::Z => state,
        Basis::X => {
            rotated = state.clone();
            for &q in parties {
                rotated.apply_hadamard(q)?;
            }
            &rotated
        }
    };
    let mut probs = vec![0.0f64; 1 << parties.len()];
    for (idx, amp) in state.amplitudes.iter().enumerate() {
        let outcome = parties
            .iter()
            .enumerate()
            .fold(0usize, |acc, (k, &q)| acc | (idx >> q & 1) << k);
        probs[outcome] += amp.norm_sqr();
    }
    let rows = probs
        .into_iter()
        .enumerate()
        .map(|(outcome, probability)| OutcomeRow {
            outcome: (0..parties.len()).map(|k| outcome >> k & 1 == 1).collect(),
            probability,
        })
        .collect();
    Ok(CorrelationTable { basis, rows })
}

/// Outcome tuples `(dealer key bit, player key bits…)` the classical XOR
/// pipeline can produce from noiseless pair measurements in `basis`.
pub fn classical_support(n: usize, basis: Basis) -> Result<BTreeSet<Vec<bool>>> {
    check_parties(n)?;
    let links = n - 1;
    let mut support = BTreeSet::new();
    for pattern in 0usize..(1 << links) {
        let bits: Vec<bool> = (0..links).map(|i| pattern >> i & 1 == 1).collect();
        let round = MatchedRound {
            basis,
            j: 0,
            rounds: vec![0; links],
            dealer_bits: bits.clone(),
            player_bits: bits,
        };
        let c = apply_xor(&round);
        let mut tuple = Vec::with_capacity(n);
        tuple.push(c.dealer_key_bit);
        tuple.extend(c.player_key_bits);
        support.insert(tuple);
    }
    Ok(support)
}

fn bits_as_u8(bits: &[bool]) -> Vec<u8> {
    bits.iter().map(|&b| u8::from(b)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    /// Bits of `(a_1, b_1, …, b_{n−1})`.
    pub outcome: Vec<u8>,
    pub quantum_probability: f64,
    pub classically_reachable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub n: usize,
    pub basis: Basis,
    pub fidelity: f64,
    pub support_match: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counterexample: Option<Counterexample>,
}

impl VerificationRecord {
    /// Fidelity tolerance for a passing record.
    pub const FIDELITY_TOL: f64 = 1e-10;

    pub fn passed(&self) -> bool {
        self.support_match && self.fidelity >= 1.0 - Self::FIDELITY_TOL
    }
}

/// Compares the quantum support on `(a_1, b_1, …, b_{n−1})` with the classical
/// XOR pipeline in both bases.
pub fn check_equivalence(n: usize) -> Result<Vec<VerificationRecord>> {
    check_equivalence_with(n, CircuitVariant::Full)
}

pub fn check_equivalence_with(
    n: usize,
    variant: CircuitVariant,
) -> Result<Vec<VerificationRecord>> {
    let state = run_ghz_circuit_with(n, variant)?.state;
    let fidelity = state.fidelity(&ghz_reference(n)?);
    let parties = ghz_parties(n);
    Basis::BOTH
        .into_iter()
        .map(|basis| {
            let table = measure_statistics(&state, basis, &parties)?;
            let quantum = table.support();
            let classical = classical_support(n, basis)?;
            let counterexample = quantum
                .symmetric_difference(&classical)
                .next()
                .map(|outcome| {
                    let probability = table
                        .rows
                        .iter()
                        .find(|r| &r.outcome == outcome)
                        .map_or(0.0, |r| r.probability);
                    Counterexample {
                        outcome: bits_as_u8(outcome),
                        quantum_probability: probability,
                        classically_reachable: classical.contains(outcome),
                    }
                });
            Ok(VerificationRecord {
                n,
                basis,
                fidelity,
                support_match: counterexample.is_none(),
                counterexample,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn basis_state(n_qubits: usize, idx: usize) -> StateVector {
        let mut s = StateVector::zero(n_qubits);
        s.amplitudes[0] = Complex64::new(0.0, 0.0);
        s.amplitudes[idx] = Complex64::new(1.0, 0.0);
        s
    }

    #[test]
    fn bell_chain_examples() {
        let s = build_bell_chain(2).unwrap();
        assert!((s.amplitudes[0].re - FRAC_1_SQRT_2).abs() < TOL);
        assert!((s.amplitudes[3].re - FRAC_1_SQRT_2).abs() < TOL);
        assert_eq!(s.amplitudes[1], Complex64::new(0.0, 0.0));

        let s = build_bell_chain(3).unwrap();
        let nonzero: Vec<usize> = (0..16).filter(|&i| s.amplitudes[i].norm() > 0.0).collect();
        assert_eq!(nonzero, vec![0b0000, 0b0011, 0b1100, 0b1111]);
        assert!(nonzero
            .iter()
            .all(|&i| (s.amplitudes[i].re - 0.5).abs() < TOL));

        for n in MIN_PARTIES..=MAX_PARTIES {
            assert!((build_bell_chain(n).unwrap().norm() - 1.0).abs() < 1e-10);
        }
        assert!(build_bell_chain(1).is_err());
        assert!(build_bell_chain(9).is_err());
    }

    #[test]
    fn cnot_truth_table_and_involution() {
        // control qubit 0 set: |c=1, t=0⟩ → |1, 1⟩
        let mut s = basis_state(2, 0b01);
        s.apply_cnot(0, 1).unwrap();
        assert_eq!(s, basis_state(2, 0b11));

        let original = build_bell_chain(4).unwrap();
        let mut s = original.clone();
        s.apply_hadamard(2).unwrap();
        let before = s.clone();
        s.apply_cnot(2, 5).unwrap();
        s.apply_cnot(2, 5).unwrap();
        for (a, b) in s.amplitudes().iter().zip(before.amplitudes()) {
            assert!((a - b).norm() < TOL);
        }
    }

    #[test]
    fn cnot_in_x_basis_flips_control() {
        // |+⟩_c |−⟩_t → |−⟩_c |−⟩_t
        let mut t = basis_state(2, 0b10);
        t.apply_hadamard(0).unwrap();
        t.apply_hadamard(1).unwrap();
        t.apply_cnot(0, 1).unwrap();
        let table = measure_statistics(&t, Basis::X, &[0, 1]).unwrap();
        let support = table.support();
        assert_eq!(support.len(), 1);
        assert!(support.contains(&vec![true, true]));

        // |+⟩_c |+⟩_t is unchanged
        let mut u = StateVector::zero(2);
        u.apply_hadamard(0).unwrap();
        u.apply_hadamard(1).unwrap();
        let before = u.clone();
        u.apply_cnot(0, 1).unwrap();
        assert!((u.fidelity(&before) - 1.0).abs() < TOL);
    }

    #[test]
    fn gate_index_errors() {
        let mut s = StateVector::zero(3);
        assert!(matches!(s.apply_cnot(0, 3), Err(Error::QubitIndex { .. })));
        assert!(matches!(s.apply_cnot(5, 1), Err(Error::QubitIndex { .. })));
        assert!(s.apply_cnot(1, 1).is_err());
        assert!(s.apply_hadamard(3).is_err());
        assert!(measure_statistics(&s, Basis::Z, &[4]).is_err());
    }

    #[test]
    fn circuit_examples() {
        let two = run_ghz_circuit(2).unwrap();
        assert_eq!(two, build_bell_chain(2).unwrap());
        assert!((two.fidelity(&ghz_reference(2).unwrap()) - 1.0).abs() < 1e-10);

        let three = run_ghz_circuit(3).unwrap();
        assert!((three.fidelity(&ghz_reference(3).unwrap()) - 1.0).abs() < 1e-10);
        let six = run_ghz_circuit(6).unwrap();
        assert!((six.fidelity(&ghz_reference(6).unwrap()) - 1.0).abs() < 1e-10);
        // The uncorrected Bell chain is not the GHZ reference.
        assert!(
            build_bell_chain(4)
                .unwrap()
                .fidelity(&ghz_reference(4).unwrap())
                < 0.5
        );
    }

    #[test]
    fn gate_norms_preserved() {
        for n in MIN_PARTIES..=MAX_PARTIES {
            let run = run_ghz_circuit_with(n, CircuitVariant::Full).unwrap();
            assert_eq!(run.gate_norms.len(), 2 * (n - 2));
            assert!(run.gate_norms.iter().all(|v| (v - 1.0).abs() < 1e-10));
        }
    }

    #[test]
    fn three_party_tables() {
        let state = run_ghz_circuit(3).unwrap();
        let parties = ghz_parties(3);
        let z = measure_statistics(&state, Basis::Z, &parties).unwrap();
        let support = z.support();
        assert_eq!(support.len(), 2);
        for row in &z.rows {
            let all_equal = row.outcome.iter().all(|&b| b == row.outcome[0]);
            let expected = if all_equal { 0.5 } else { 0.0 };
            assert!((row.probability - expected).abs() < TOL);
        }
        let x = measure_statistics(&state, Basis::X, &parties).unwrap();
        for row in &x.rows {
            let even = row.outcome.iter().filter(|&&b| b).count() % 2 == 0;
            let expected = if even { 0.25 } else { 0.0 };
            assert!((row.probability - expected).abs() < TOL);
        }
        assert!((x.total() - 1.0).abs() < 1e-10);

        // ancilla a_2 sits in |+⟩
        let ancilla = measure_statistics(&state, Basis::X, &[dealer_qubit(2)]).unwrap();
        assert!((ancilla.rows[0].probability - 1.0).abs() < TOL);
    }

    #[test]
    fn equivalence_holds_for_all_sizes() {
        for n in MIN_PARTIES..=MAX_PARTIES {
            for record in check_equivalence(n).unwrap() {
                assert!(record.passed(), "{record:?}");
            }
        }
    }

    #[test]
    fn classical_supports_of_three_parties() {
        let z = classical_support(3, Basis::Z).unwrap();
        assert_eq!(
            z,
            [vec![false; 3], vec![true; 3]]
                .into_iter()
                .collect::<BTreeSet<_>>()
        );
        let x = classical_support(3, Basis::X).unwrap();
        assert_eq!(x.len(), 4);
        assert!(x.iter().all(|t| t.iter().filter(|&&b| b).count() % 2 == 0));
    }

    #[test]
    fn skipping_nonlocal_gates_is_detected() {
        let records = check_equivalence_with(4, CircuitVariant::SkipNonLocal).unwrap();
        let z = records.iter().find(|r| r.basis == Basis::Z).unwrap();
        assert!(!z.support_match);
        let ce = z.counterexample.as_ref().unwrap();
        assert!(ce.quantum_probability > 0.0 && !ce.classically_reachable);
        assert!(records.iter().all(|r| r.fidelity < 0.5));
    }

    #[test]
    fn report_json_shape() {
        let records = check_equivalence(3).unwrap();
        let json = serde_json::to_value(&records[0]).unwrap();
        assert_eq!(json["n"], 3);
        assert_eq!(json["basis"], "X");
        assert_eq!(json["support_match"], true);
        assert!(json.get("counterexample").is_none());
    }
}
