use proptest::prelude::*;
use qfaas_core::builders::{build_dj_circuit, build_qrng_circuit, build_shor_circuit, DjOracle};
use qfaas_core::ir::{parse_program, parse_template, render, BinOp, Dialect, Expr, GateName, Program, Stmt};
use qfaas_core::statevec::{run_circuit, DEFAULT_MAX_QUBITS};

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0i64..1_000_000).prop_map(Expr::Int),
        (0.0f64..1e6).prop_map(Expr::Float),
        prop_oneof![Just(1e-7), Just(2.5e21), Just(0.0)].prop_map(Expr::Float),
        Just(Expr::Pi),
        Just(Expr::Param("input".into())),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Rem)
        ];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner).prop_map(|(o, l, r)| Expr::Binary(o, Box::new(l), Box::new(r))),
        ]
    })
}

fn gate_stmt() -> impl Strategy<Value = Stmt> {
    let names = prop_oneof![
        Just(GateName::H),
        Just(GateName::X),
        Just(GateName::P),
        Just(GateName::U),
        Just(GateName::Cx),
        Just(GateName::Cp),
        Just(GateName::Ccx),
        Just(GateName::Swap),
    ];
    (names, prop::collection::vec(expr(), 3), prop::collection::vec(expr(), 3)).prop_map(|(name, a, q)| {
        let (na, nq) = name.arity();
        Stmt::Gate {
            name,
            angles: a[..na].to_vec(),
            qubits: q[..nq].to_vec(),
        }
    })
}

fn program() -> impl Strategy<Value = Program> {
    (
        expr(),
        prop::collection::vec(gate_stmt(), 0..8),
        prop_oneof![
            Just(Stmt::MeasureAll),
            prop::collection::vec(expr(), 1..4).prop_map(Stmt::Measure)
        ],
    )
        .prop_map(|(size, gates, measure)| {
            let qubits = Expr::Binary(BinOp::Add, Box::new(Expr::Param("input".into())), Box::new(size));
            let mut stmts = vec![Stmt::Qubits(qubits)];
            stmts.extend(gates);
            stmts.push(measure);
            Program { stmts }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn render_then_parse_is_identity(p in program()) {
        let declared = vec!["input".to_string()];
        let text = render(&p);
        let back = parse_program(&text, &declared).unwrap();
        prop_assert_eq!(back.body().collect::<Vec<_>>(), p.body().collect::<Vec<_>>());
        prop_assert_eq!(render(&back), text);
    }
}

#[test]
fn parse_render_parse_fixed_point() {
    let declared = vec!["input".to_string()];
    for src in [
        "qubits 2; h 0; cx 0,1; measure all;",
        "qubits input; h 0; measure all;",
        "qir 1;\nqubits input+1;\nu(pi/2,0,pi) input;\ncp(-pi/(2*2)) 0, 1;\nmeasure 0, 1;",
        "builtin qrng;",
        "builtin dj balanced_xor;",
        "builtin shor 7;",
    ] {
        let uses_input = src.contains("input");
        let d: &[String] = if uses_input { &declared } else { &[] };
        let first = parse_program(src, d).unwrap();
        let text = render(&first);
        let second = parse_program(&text, d).unwrap();
        assert_eq!(first.body().collect::<Vec<_>>(), second.body().collect::<Vec<_>>());
        assert_eq!(render(&second), text);
        assert!(text.starts_with("qir 1;\n"));
    }
}

#[test]
fn builder_outputs_validate_and_simulate() {
    for n in 1..=12 {
        let c = build_qrng_circuit(n, DEFAULT_MAX_QUBITS).unwrap();
        c.validate().unwrap();
        run_circuit(&c, 16, n as u64, DEFAULT_MAX_QUBITS).unwrap();
    }
    for n in 1..=11 {
        for o in [DjOracle::Constant0, DjOracle::Constant1, DjOracle::BalancedXor] {
            let c = build_dj_circuit(n, o, DEFAULT_MAX_QUBITS).unwrap();
            c.validate().unwrap();
            run_circuit(&c, 16, 0, DEFAULT_MAX_QUBITS).unwrap();
        }
    }
    for a in [2, 4, 7, 8, 11, 13, 14] {
        let (c, _) = build_shor_circuit(15, a, DEFAULT_MAX_QUBITS).unwrap();
        c.validate().unwrap();
        run_circuit(&c, 16, 0, DEFAULT_MAX_QUBITS).unwrap();
    }
}

#[test]
fn template_source_is_kept_verbatim() {
    let src = "qubits 1; x 0; measure all; // flip";
    let t = parse_template(src, Dialect::Qsharp, None, &[]).unwrap();
    assert_eq!(t.source, src);
    assert_eq!(t.dialect, Dialect::Qsharp);
}
