use proptest::prelude::*;
use qfaas_core::backend::{
    backend_selection, Backend, BackendPreference, BackendType, Pricing, SelectionError,
};
use rust_decimal::Decimal;

fn backend_type() -> impl Strategy<Value = BackendType> {
    prop_oneof![
        Just(BackendType::InternalSimulator),
        Just(BackendType::ExternalSimulator),
        Just(BackendType::Qpu)
    ]
}

fn catalog() -> impl Strategy<Value = Vec<Backend>> {
    // names drawn from a small alphabet so duplicates-by-queue and name ties are common
    prop::collection::btree_map(
        "[a-e]{1,2}",
        (backend_type(), 1usize..40, any::<bool>(), 0usize..4),
        0..8,
    )
    .prop_map(|m| {
        m.into_iter()
            .map(|(name, (t, qubits, operational, queue))| Backend {
                name,
                provider: "p".into(),
                backend_type: t,
                qubits,
                operational,
                queue_length: queue,
                pricing: Pricing::default(),
            })
            .collect()
    })
}

fn preference() -> impl Strategy<Value = BackendPreference> {
    (
        prop::option::of(prop::collection::vec(backend_type(), 0..3)),
        prop::option::of("[a-e]{1,2}"),
    )
        .prop_map(|(types, name)| BackendPreference {
            internal: false,
            autoselect: true,
            types,
            backend_name: name,
        })
}

/// Filter, then linear scan for the smallest (queue, name).
fn brute_force(required: usize, pref: &BackendPreference, list: &[Backend]) -> Option<String> {
    let mut best: Option<&Backend> = None;
    for b in list {
        let type_ok = match &pref.types {
            None => true,
            Some(ts) => ts.iter().any(|t| *t == b.backend_type),
        };
        if b.qubits < required || !b.operational || !type_ok {
            continue;
        }
        best = match best {
            None => Some(b),
            Some(cur) if (b.queue_length, &b.name) < (cur.queue_length, &cur.name) => Some(b),
            keep => keep,
        };
    }
    best.map(|b| b.name.clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn autoselect_agrees_with_brute_force(list in catalog(), pref in preference(), required in 1usize..45) {
        let got = backend_selection(required, &pref, &[], &list);
        match brute_force(required, &pref, &list) {
            Some(name) => prop_assert_eq!(got.map(|b| b.name.clone()), Ok(name)),
            None => prop_assert_eq!(got, Err(SelectionError::NoEligibleBackend { required_qubits: required })),
        }
    }

    #[test]
    fn cost_is_linear(t1 in 0u64..1000, t2 in 0u64..1000, s1 in 0u64..1_000_000, s2 in 0u64..1_000_000,
                      task in 0u32..100_000, shot in 0u32..100_000) {
        let p = Pricing::new(Decimal::new(task as i64, 5), Decimal::new(shot as i64, 7));
        prop_assert_eq!(p.estimate(t1 + t2, s1 + s2), p.estimate(t1, s1) + p.estimate(t2, s2));
    }
}
