//! Period extraction on simulated order-finding circuits, checked against
//! brute-force multiplicative orders and trial-division factorization.

use qfaas_core::builders::build_shor_circuit;
use qfaas_core::plugins::{post_process, PostContext, PostProcessor};
use qfaas_core::shor::{gcd, multiplicative_order, period_from_phase, validate_modulus};
use qfaas_core::statevec::{simulate, StateVector, DEFAULT_MAX_QUBITS};
use serde_json::json;

fn valid_pairs(max_n: u64) -> Vec<(u64, u64)> {
    (4..=max_n)
        .filter(|&n| validate_modulus(n).is_ok())
        .flat_map(|n| (2..n).filter(move |&a| gcd(a, n) == 1).map(move |a| (n, a)))
        .collect()
}

fn trial_division_pair(n: u64) -> [u64; 2] {
    let p = (2..n).find(|d| n % d == 0).unwrap();
    [p, n / p]
}

#[test]
fn only_15_and_21_are_valid_up_to_21() {
    let ns: Vec<u64> = (4..=21).filter(|&n| validate_modulus(n).is_ok()).collect();
    assert_eq!(ns, vec![15, 21]);
}

/// Exact probability mass of outcomes whose extracted period equals the true order.
fn recovery_mass(state: &StateVector, measured: &[usize], bits: usize, n: u64, a: u64) -> f64 {
    let order = multiplicative_order(a, n).unwrap();
    state
        .marginal_probabilities(measured)
        .unwrap()
        .iter()
        .enumerate()
        .filter(|(y, _)| period_from_phase(*y as u64, bits, a, n) == Some(order))
        .map(|(_, p)| p)
        .sum()
}

#[test]
fn period_recovered_in_at_least_half_the_shots() {
    let mut total_hits = 0u64;
    let mut total_shots = 0u64;
    for (n, a) in valid_pairs(21) {
        let (c, layout) = build_shor_circuit(n, a, DEFAULT_MAX_QUBITS).unwrap();
        let state = simulate(&c, DEFAULT_MAX_QUBITS).unwrap();
        let mass = recovery_mass(&state, &c.measured_qubits, layout.counting_bits, n, a);
        assert!(mass >= 0.5 - 1e-9, "N={n} a={a}: recovery probability {mass}");

        let order = multiplicative_order(a, n).unwrap();
        let counts = state.measure(&c.measured_qubits, 100, n * 1000 + a).unwrap();
        for (bits, k) in counts.iter() {
            let y = u64::from_str_radix(bits, 2).unwrap();
            if period_from_phase(y, layout.counting_bits, a, n) == Some(order) {
                total_hits += k;
            }
        }
        total_shots += 100;
    }
    let rate = total_hits as f64 / total_shots as f64;
    assert!(rate >= 0.5, "aggregate sampled recovery rate {rate}");
}

#[test]
fn factor_pairs_multiply_back() {
    for (n, a) in valid_pairs(21) {
        let (c, layout) = build_shor_circuit(n, a, DEFAULT_MAX_QUBITS).unwrap();
        let counts = simulate(&c, DEFAULT_MAX_QUBITS)
            .unwrap()
            .measure(&c.measured_qubits, 100, 5)
            .unwrap();
        let ctx = PostContext {
            input: n as i64,
            required_qubits: c.num_qubits,
            shor: Some(layout),
        };
        match post_process(PostProcessor::ShorFactors, &counts, &ctx) {
            Ok(out) => {
                assert_eq!(out.result, json!([trial_division_pair(n)]), "N={n} a={a}");
                assert_eq!(out.detail["required_qubits"], json!(c.num_qubits));
                assert_eq!(out.detail["shots"], json!(100));
            }
            // bases whose order is odd or whose half-power is -1 carry no factor
            Err(e) => {
                let r = multiplicative_order(a, n).unwrap();
                let useless = r % 2 == 1 || qfaas_core::shor::mod_pow(a, r / 2, n) == n - 1;
                assert!(useless, "N={n} a={a} failed: {e}");
            }
        }
    }
}
