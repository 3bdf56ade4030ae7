//! Dense statevector simulator.
//!
//! Amplitudes are stored in basis-index order with qubit 0 as the least
//! significant bit. Controlled operations iterate over the indices whose
//! control bits are set instead of building full matrices.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;

/// Default upper bound on register size (2^20 amplitudes, 16 MiB).
pub const DEFAULT_MAX_QUBITS: usize = 20;

/// Tolerance used when checking that a state is normalized.
pub const NORM_TOLERANCE: f64 = 1e-9;

pub type Matrix2 = [[Complex64; 2]; 2];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("{requested} qubits exceeds the simulator limit of {limit}")]
    QubitLimitExceeded { requested: usize, limit: usize },
    #[error("a register needs at least one qubit")]
    ZeroQubits,
    #[error("qubit index {index} out of range for a {num_qubits}-qubit register")]
    IndexOutOfRange { index: usize, num_qubits: usize },
    #[error("malformed {kind:?} gate: {reason}")]
    MalformedGate { kind: GateKind, reason: &'static str },
    #[error("amplitude vector of length {0} is not a power of two")]
    BadLength(usize),
    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("shots must be at least 1")]
    ZeroShots,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    U,
    H,
    X,
    Y,
    Z,
    P,
    Cnot,
    Swap,
    Permutation,
}

/// One circuit operation.
///
/// `params` holds `(θ, φ, λ)` for `U`; a phase gate stores its angle as λ.
/// `perm_table` maps the local basis index of `targets` (targets[0] is the
/// low bit) to its image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub controls: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perm_table: Option<Vec<usize>>,
}

impl Gate {
    fn single(kind: GateKind, target: usize) -> Self {
        Gate {
            kind,
            targets: vec![target],
            controls: Vec::new(),
            params: None,
            perm_table: None,
        }
    }

    pub fn h(target: usize) -> Self {
        Self::single(GateKind::H, target)
    }

    pub fn x(target: usize) -> Self {
        Self::single(GateKind::X, target)
    }

    pub fn y(target: usize) -> Self {
        Self::single(GateKind::Y, target)
    }

    pub fn z(target: usize) -> Self {
        Self::single(GateKind::Z, target)
    }

    pub fn p(lambda: f64, target: usize) -> Self {
        Gate {
            params: Some([0.0, 0.0, lambda]),
            ..Self::single(GateKind::P, target)
        }
    }

    pub fn u(theta: f64, phi: f64, lambda: f64, target: usize) -> Self {
        Gate {
            params: Some([theta, phi, lambda]),
            ..Self::single(GateKind::U, target)
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate {
            controls: vec![control],
            ..Self::single(GateKind::Cnot, target)
        }
    }

    pub fn swap(a: usize, b: usize) -> Self {
        Gate {
            kind: GateKind::Swap,
            targets: vec![a, b],
            controls: Vec::new(),
            params: None,
            perm_table: None,
        }
    }

    pub fn permutation(targets: Vec<usize>, table: Vec<usize>) -> Self {
        Gate {
            kind: GateKind::Permutation,
            targets,
            controls: Vec::new(),
            params: None,
            perm_table: Some(table),
        }
    }

    /// Adds control qubits to the gate.
    pub fn controlled_by(mut self, controls: impl IntoIterator<Item = usize>) -> Self {
        self.controls.extend(controls);
        self
    }

    /// Largest qubit index touched by the gate, if any.
    pub fn max_qubit(&self) -> Option<usize> {
        self.targets.iter().chain(&self.controls).copied().max()
    }

    /// The 2x2 matrix of a single-qubit kind; `None` for SWAP and PERMUTATION.
    pub fn matrix(&self) -> Option<Matrix2> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
        match self.kind {
            GateKind::H => Some([[s, s], [s, -s]]),
            GateKind::X | GateKind::Cnot => Some([[zero, one], [one, zero]]),
            GateKind::Y => Some([[zero, -i], [i, zero]]),
            GateKind::Z => Some([[one, zero], [zero, -one]]),
            GateKind::P => {
                let [_, _, lambda] = self.params?;
                Some([[one, zero], [zero, Complex64::from_polar(1.0, lambda)]])
            }
            GateKind::U => {
                let [theta, phi, lambda] = self.params?;
                Some(single_qubit_unitary(theta, phi, lambda))
            }
            GateKind::Swap | GateKind::Permutation => None,
        }
    }

    /// Checks structural well-formedness against a register of `num_qubits`.
    pub fn validate(&self, num_qubits: usize) -> Result<(), SimError> {
        let malformed = |reason| SimError::MalformedGate {
            kind: self.kind,
            reason,
        };
        for &q in self.targets.iter().chain(&self.controls) {
            if q >= num_qubits {
                return Err(SimError::IndexOutOfRange {
                    index: q,
                    num_qubits,
                });
            }
        }
        let mut seen = 0u64;
        for &q in self.targets.iter().chain(&self.controls) {
            if seen & (1 << q) != 0 {
                return Err(malformed("qubit used more than once"));
            }
            seen |= 1 << q;
        }
        match self.kind {
            GateKind::U | GateKind::P if self.params.is_none() => {
                return Err(malformed("missing angle parameters"))
            }
            GateKind::Cnot if self.controls.is_empty() => {
                return Err(malformed("needs a control qubit"))
            }
            _ => {}
        }
        let arity_ok = match self.kind {
            GateKind::Swap => self.targets.len() == 2,
            GateKind::Permutation => !self.targets.is_empty(),
            _ => self.targets.len() == 1,
        };
        if !arity_ok {
            return Err(malformed("wrong number of targets"));
        }
        if self.kind == GateKind::Permutation {
            let table = self
                .perm_table
                .as_ref()
                .ok_or(malformed("missing permutation table"))?;
            if table.len() != 1usize << self.targets.len() {
                return Err(malformed("permutation table size must be 2^targets"));
            }
            if !is_bijection(table) {
                return Err(malformed("permutation table is not a bijection"));
            }
        }
        Ok(())
    }
}

fn is_bijection(table: &[usize]) -> bool {
    let mut hit = vec![false; table.len()];
    for &v in table {
        match hit.get_mut(v) {
            Some(h) if !*h => *h = true,
            _ => return false,
        }
    }
    true
}

/// The general single-qubit rotation U(θ, φ, λ).
pub fn single_qubit_unitary(theta: f64, phi: f64, lambda: f64) -> Matrix2 {
    let c = libm::cos(theta / 2.0);
    let s = libm::sin(theta / 2.0);
    [
        [Complex64::new(c, 0.0), -Complex64::from_polar(s, lambda)],
        [
            Complex64::from_polar(s, phi),
            Complex64::from_polar(c, lambda + phi),
        ],
    ]
}

/// Measurement histogram. Keys list the measured qubits most significant first.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub shots: u64,
    pub counts: BTreeMap<String, u64>,
}

impl Counts {
    pub fn get(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Renders `value` as a `width`-character bitstring, most significant bit first.
pub fn to_bitstring(value: usize, width: usize) -> String {
    (0..width)
        .rev()
        .map(|b| if value >> b & 1 == 1 { '1' } else { '0' })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// |0...0> on `num_qubits` qubits.
    pub fn new(num_qubits: usize, max_qubits: usize) -> Result<Self, SimError> {
        if num_qubits == 0 {
            return Err(SimError::ZeroQubits);
        }
        if num_qubits > max_qubits {
            return Err(SimError::QubitLimitExceeded {
                requested: num_qubits,
                limit: max_qubits,
            });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector {
            num_qubits,
            amplitudes,
        })
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, SimError> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(SimError::BadLength(len));
        }
        let state = StateVector {
            num_qubits: len.trailing_zeros() as usize,
            amplitudes,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(SimError::NotNormalized(norm));
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<(), SimError> {
        gate.validate(self.num_qubits)?;
        let control_mask = gate.controls.iter().fold(0usize, |m, &c| m | 1 << c);
        match gate.kind {
            GateKind::Swap => self.apply_swap(gate.targets[0], gate.targets[1], control_mask),
            GateKind::Permutation => {
                // validate() guarantees the table is present
                let table = gate.perm_table.as_deref().unwrap_or(&[]);
                self.apply_permutation(&gate.targets, table, control_mask)
            }
            _ => {
                let m = gate.matrix().ok_or(SimError::MalformedGate {
                    kind: gate.kind,
                    reason: "missing angle parameters",
                })?;
                self.apply_single(gate.targets[0], &m, control_mask)
            }
        }
        Ok(())
    }

    fn apply_single(&mut self, target: usize, m: &Matrix2, control_mask: usize) {
        let bit = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & bit != 0 || i & control_mask != control_mask {
                continue;
            }
            let j = i | bit;
            let a = self.amplitudes[i];
            let b = self.amplitudes[j];
            self.amplitudes[i] = m[0][0] * a + m[0][1] * b;
            self.amplitudes[j] = m[1][0] * a + m[1][1] * b;
        }
    }

    fn apply_swap(&mut self, a: usize, b: usize, control_mask: usize) {
        let (abit, bbit) = (1usize << a, 1usize << b);
        for i in 0..self.amplitudes.len() {
            // visit each pair once from the |a=1, b=0> side
            if i & abit != 0 && i & bbit == 0 && i & control_mask == control_mask {
                self.amplitudes.swap(i, i ^ abit ^ bbit);
            }
        }
    }

    fn apply_permutation(&mut self, targets: &[usize], table: &[usize], control_mask: usize) {
        let target_mask = targets.iter().fold(0usize, |m, &t| m | 1 << t);
        let mut out = vec![Complex64::new(0.0, 0.0); self.amplitudes.len()];
        for (i, &amp) in self.amplitudes.iter().enumerate() {
            if i & control_mask != control_mask {
                out[i] += amp;
                continue;
            }
            let local = targets
                .iter()
                .enumerate()
                .fold(0usize, |acc, (k, &t)| acc | ((i >> t) & 1) << k);
            let image = table[local];
            let dest = targets
                .iter()
                .enumerate()
                .fold(i & !target_mask, |acc, (k, &t)| acc | ((image >> k) & 1) << t);
            out[dest] += amp;
        }
        self.amplitudes = out;
    }

    /// Outcome distribution over `qubits`; outcome bit k is `qubits[k]`.
    pub fn marginal_probabilities(&self, qubits: &[usize]) -> Result<Vec<f64>, SimError> {
        for &q in qubits {
            if q >= self.num_qubits {
                return Err(SimError::IndexOutOfRange {
                    index: q,
                    num_qubits: self.num_qubits,
                });
            }
        }
        let mut dist = vec![0.0; 1 << qubits.len()];
        for (i, amp) in self.amplitudes.iter().enumerate() {
            let outcome = qubits
                .iter()
                .enumerate()
                .fold(0usize, |acc, (k, &q)| acc | ((i >> q) & 1) << k);
            dist[outcome] += amp.norm_sqr();
        }
        Ok(dist)
    }

    /// Samples `shots` outcomes over `qubits` with a generator seeded by `seed`.
    pub fn measure(&self, qubits: &[usize], shots: u64, seed: u64) -> Result<Counts, SimError> {
        if shots == 0 {
            return Err(SimError::ZeroShots);
        }
        let dist = self.marginal_probabilities(qubits)?;
        let mut sampler = Sampler::new(&dist, seed);
        let mut tally = vec![0u64; dist.len()];
        for _ in 0..shots {
            tally[sampler.sample()] += 1;
        }
        let counts = tally
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(outcome, &n)| (to_bitstring(outcome, qubits.len()), n))
            .collect();
        Ok(Counts { shots, counts })
    }

    pub fn measure_all(&self, shots: u64, seed: u64) -> Result<Counts, SimError> {
        let all: Vec<usize> = (0..self.num_qubits).collect();
        self.measure(&all, shots, seed)
    }
}

/// Consuming form of [`StateVector::apply`].
pub fn apply_gate(mut state: StateVector, gate: &Gate) -> Result<StateVector, SimError> {
    state.apply(gate)?;
    Ok(state)
}

/// Inverse-CDF sampler driven by xoshiro256++ (seeded through SplitMix64).
struct Sampler {
    cumulative: Vec<f64>,
    last_nonzero: usize,
    rng: Xoshiro256PlusPlus,
}

impl Sampler {
    fn new(dist: &[f64], seed: u64) -> Self {
        let mut acc = 0.0;
        let cumulative = dist
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last_nonzero = dist.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Sampler {
            cumulative,
            last_nonzero,
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    fn sample(&mut self) -> usize {
        let total = self.cumulative.last().copied().unwrap_or(0.0);
        // 53 random mantissa bits -> uniform in [0, 1)
        let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.last_nonzero)
    }
}

/// Prepares |0...0>, applies every gate of `circuit` in order and returns the final state.
pub fn simulate(circuit: &Circuit, max_qubits: usize) -> Result<StateVector, SimError> {
    let mut state = StateVector::new(circuit.num_qubits, max_qubits)?;
    for gate in &circuit.gates {
        state.apply(gate)?;
    }
    Ok(state)
}

/// Simulates `circuit` and samples its measured qubits.
pub fn run_circuit(
    circuit: &Circuit,
    shots: u64,
    seed: u64,
    max_qubits: usize,
) -> Result<Counts, SimError> {
    simulate(circuit, max_qubits)?.measure(&circuit.measured_qubits, shots, seed)
}
