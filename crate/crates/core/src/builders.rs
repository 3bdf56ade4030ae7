//! Built-in circuit constructions: QRNG, Bell, Deutsch-Jozsa and Shor order finding.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::shor::{self, ShorError};
use crate::statevec::{Gate, GateKind, SimError};

fn check_limit(requested: usize, limit: usize) -> Result<(), SimError> {
    if requested == 0 {
        return Err(SimError::ZeroQubits);
    }
    if requested > limit {
        return Err(SimError::QubitLimitExceeded { requested, limit });
    }
    Ok(())
}

/// `n` qubits in equal superposition, all measured.
pub fn build_qrng_circuit(n: usize, max_qubits: usize) -> Result<Circuit, SimError> {
    check_limit(n, max_qubits)?;
    let mut c = Circuit::new(n);
    for q in 0..n {
        c.push(Gate::h(q));
    }
    c.measure_all();
    Ok(c)
}

pub fn build_bell_circuit() -> Circuit {
    let mut c = Circuit::new(2);
    c.push(Gate::h(0)).push(Gate::cnot(0, 1)).measure_all();
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DjOracle {
    Constant0,
    Constant1,
    BalancedXor,
}

impl DjOracle {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "constant0" | "constant_0" => Some(DjOracle::Constant0),
            "constant1" | "constant_1" => Some(DjOracle::Constant1),
            "balanced_xor" | "balanced" => Some(DjOracle::BalancedXor),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DjOracle::Constant0 => "constant0",
            DjOracle::Constant1 => "constant1",
            DjOracle::BalancedXor => "balanced_xor",
        }
    }
}

/// Deutsch-Jozsa over `n` input qubits (0..n) and one ancilla (qubit n).
/// Only the input register is measured.
pub fn build_dj_circuit(n: usize, oracle: DjOracle, max_qubits: usize) -> Result<Circuit, SimError> {
    if n == 0 {
        return Err(SimError::ZeroQubits);
    }
    check_limit(n + 1, max_qubits)?;
    let ancilla = n;
    let mut c = Circuit::new(n + 1);
    c.push(Gate::x(ancilla)).push(Gate::h(ancilla));
    for q in 0..n {
        c.push(Gate::h(q));
    }
    match oracle {
        DjOracle::Constant0 => {}
        DjOracle::Constant1 => {
            c.push(Gate::x(ancilla));
        }
        DjOracle::BalancedXor => {
            for q in 0..n {
                c.push(Gate::cnot(q, ancilla));
            }
        }
    }
    for q in 0..n {
        c.push(Gate::h(q));
    }
    c.measure(0..n);
    Ok(c)
}

/// Quantum Fourier transform on `qubits` (qubits[0] is the low bit):
/// |x> -> 2^{-m/2} sum_y exp(2 pi i x y / 2^m) |y>.
pub fn qft(qubits: &[usize]) -> Vec<Gate> {
    let m = qubits.len();
    let mut gates = Vec::new();
    for j in (0..m).rev() {
        gates.push(Gate::h(qubits[j]));
        for k in (0..j).rev() {
            let angle = PI / (1u64 << (j - k)) as f64;
            gates.push(Gate::p(angle, qubits[j]).controlled_by([qubits[k]]));
        }
    }
    for i in 0..m / 2 {
        gates.push(Gate::swap(qubits[i], qubits[m - 1 - i]));
    }
    gates
}

/// Inverse of a gate list built from H, SWAP, X, P and U gates.
pub fn inverse(gates: &[Gate]) -> Vec<Gate> {
    gates
        .iter()
        .rev()
        .map(|g| {
            let mut inv = g.clone();
            match g.kind {
                GateKind::P => {
                    if let Some([t, p, l]) = g.params {
                        inv.params = Some([t, p, -l]);
                    }
                }
                GateKind::U => {
                    // U(θ,φ,λ)† = U(-θ,-λ,-φ)
                    if let Some([t, p, l]) = g.params {
                        inv.params = Some([-t, -l, -p]);
                    }
                }
                GateKind::Permutation => {
                    if let Some(table) = &g.perm_table {
                        let mut back = alloc::vec![0; table.len()];
                        for (i, &v) in table.iter().enumerate() {
                            back[v] = i;
                        }
                        inv.perm_table = Some(back);
                    }
                }
                _ => {}
            }
            inv
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Shor(#[from] ShorError),
}

/// Layout of an order-finding circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShorLayout {
    pub n: u64,
    pub a: u64,
    /// Bit length of `n`; the work register size.
    pub work_bits: usize,
    pub counting_bits: usize,
}

impl ShorLayout {
    pub fn total_qubits(&self) -> usize {
        self.work_bits + self.counting_bits
    }
}

pub fn shor_layout(n: u64, a: u64) -> Result<ShorLayout, ShorError> {
    shor::validate_modulus(n)?;
    shor::validate_base(n, a)?;
    let work_bits = shor::bit_length(n);
    Ok(ShorLayout {
        n,
        a,
        work_bits,
        counting_bits: 2 * work_bits,
    })
}

/// Order finding for `a` mod `n`: counting qubits `0..2w`, work qubits
/// `2w..3w`. The controlled multiplications by `a^(2^k)` are basis
/// permutations of the work register computed classically; work values
/// `>= n` map to themselves.
pub fn build_shor_circuit(n: u64, a: u64, max_qubits: usize) -> Result<(Circuit, ShorLayout), BuildError> {
    let layout = shor_layout(n, a)?;
    check_limit(layout.total_qubits(), max_qubits)?;
    let t = layout.counting_bits;
    let w = layout.work_bits;
    let counting: Vec<usize> = (0..t).collect();
    let work: Vec<usize> = (t..t + w).collect();

    let mut c = Circuit::new(t + w);
    for &q in &counting {
        c.push(Gate::h(q));
    }
    c.push(Gate::x(work[0]));
    let mut multiplier = a % n;
    for &control in &counting {
        let table: Vec<usize> = (0..1u64 << w)
            .map(|x| if x < n { (x * multiplier % n) as usize } else { x as usize })
            .collect();
        c.push(Gate::permutation(work.clone(), table).controlled_by([control]));
        multiplier = multiplier * multiplier % n;
    }
    for g in inverse(&qft(&counting)) {
        c.push(g);
    }
    c.measure(counting);
    Ok((c, layout))
}
