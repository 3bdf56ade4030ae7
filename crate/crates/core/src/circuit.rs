use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::statevec::{Gate, SimError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CircuitError {
    #[error(transparent)]
    Gate(#[from] SimError),
    #[error("circuit measures no qubits")]
    NothingMeasured,
    #[error("qubit {0} is measured more than once")]
    DuplicateMeasurement(usize),
}

/// A concrete gate-list program over `num_qubits` qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub num_qubits: usize,
    pub gates: Vec<Gate>,
    pub measured_qubits: Vec<usize>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Circuit {
            num_qubits,
            gates: Vec::new(),
            measured_qubits: Vec::new(),
        }
    }

    pub fn push(&mut self, gate: Gate) -> &mut Self {
        self.gates.push(gate);
        self
    }

    pub fn measure_all(&mut self) -> &mut Self {
        self.measured_qubits = (0..self.num_qubits).collect();
        self
    }

    pub fn measure(&mut self, qubits: impl IntoIterator<Item = usize>) -> &mut Self {
        self.measured_qubits = qubits.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        if self.num_qubits == 0 {
            return Err(SimError::ZeroQubits.into());
        }
        for gate in &self.gates {
            gate.validate(self.num_qubits)?;
        }
        if self.measured_qubits.is_empty() {
            return Err(CircuitError::NothingMeasured);
        }
        for (i, &q) in self.measured_qubits.iter().enumerate() {
            if q >= self.num_qubits {
                return Err(SimError::IndexOutOfRange {
                    index: q,
                    num_qubits: self.num_qubits,
                }
                .into());
            }
            if self.measured_qubits[..i].contains(&q) {
                return Err(CircuitError::DuplicateMeasurement(q));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn validation() {
        let mut c = Circuit::new(2);
        c.push(Gate::h(0)).push(Gate::cnot(0, 1));
        assert_eq!(c.validate(), Err(CircuitError::NothingMeasured));
        c.measure_all();
        assert_eq!(c.validate(), Ok(()));
        c.measure(vec![0, 0]);
        assert_eq!(c.validate(), Err(CircuitError::DuplicateMeasurement(0)));
        c.measure(vec![2]);
        assert!(matches!(c.validate(), Err(CircuitError::Gate(SimError::IndexOutOfRange { .. }))));
        c.measure_all().push(Gate::x(5));
        assert!(c.validate().is_err());
    }
}
