//! Full-matrix reference simulator used to check the statevector engine.
//!
//! Every gate is expanded to a 2^n x 2^n matrix by explicit Kronecker
//! products (qubit n-1 leftmost, qubit 0 rightmost) and the state is
//! multiplied out. Shares no code with the engine except the `Gate` type.

#![allow(dead_code)]

use num_complex::Complex64;
use qfaas_core::statevec::{single_qubit_unitary, Gate, GateKind};
use rand_core::Rng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Mat = Vec<Vec<Complex64>>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

pub fn identity(dim: usize) -> Mat {
    (0..dim)
        .map(|r| (0..dim).map(|c| if r == c { ONE } else { ZERO }).collect())
        .collect()
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ra, rb) = (a.len(), b.len());
    let mut out = vec![vec![ZERO; ra * rb]; ra * rb];
    for i in 0..ra {
        for j in 0..ra {
            for k in 0..rb {
                for l in 0..rb {
                    out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

pub fn sub(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect()
}

pub fn mat_vec(m: &Mat, v: &[Complex64]) -> Vec<Complex64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn m2(e: [[Complex64; 2]; 2]) -> Mat {
    vec![e[0].to_vec(), e[1].to_vec()]
}

fn ket_bra(r: usize, c: usize) -> Mat {
    let mut m = vec![vec![ZERO; 2]; 2];
    m[r][c] = ONE;
    m
}

/// Kronecker product of per-qubit factors, `factor(q)` for q = n-1 .. 0.
fn tensor(n: usize, factor: impl Fn(usize) -> Mat) -> Mat {
    let mut acc = vec![vec![ONE]];
    for q in (0..n).rev() {
        acc = kron(&acc, &factor(q));
    }
    acc
}

fn base_matrix(g: &Gate) -> Mat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    match g.kind {
        GateKind::H => vec![vec![c(s, 0.0), c(s, 0.0)], vec![c(s, 0.0), c(-s, 0.0)]],
        GateKind::X | GateKind::Cnot => vec![vec![ZERO, ONE], vec![ONE, ZERO]],
        GateKind::Y => vec![vec![ZERO, c(0.0, -1.0)], vec![c(0.0, 1.0), ZERO]],
        GateKind::Z => vec![vec![ONE, ZERO], vec![ZERO, c(-1.0, 0.0)]],
        GateKind::P => {
            let l = g.params.unwrap()[2];
            vec![vec![ONE, ZERO], vec![ZERO, Complex64::from_polar(1.0, l)]]
        }
        GateKind::U => {
            let [t, p, l] = g.params.unwrap();
            m2(single_qubit_unitary(t, p, l))
        }
        _ => unreachable!(),
    }
}

/// Full unitary of `g` on an n-qubit register.
pub fn gate_unitary(g: &Gate, n: usize) -> Mat {
    let p1 = ket_bra(1, 1);
    let controlled = |active: Mat| {
        // active term with controls projected on |1>, plus identity on the rest
        let proj = tensor(n, |q| if g.controls.contains(&q) { p1.clone() } else { identity(2) });
        add(&active, &sub(&identity(1 << n), &proj))
    };
    match g.kind {
        GateKind::Swap => {
            let (x, y) = (g.targets[0], g.targets[1]);
            let mut swap = vec![vec![ZERO; 1 << n]; 1 << n];
            for a in 0..2 {
                for b in 0..2 {
                    let term = tensor(n, |q| {
                        if q == x {
                            ket_bra(a, b)
                        } else if q == y {
                            ket_bra(b, a)
                        } else if g.controls.contains(&q) {
                            p1.clone()
                        } else {
                            identity(2)
                        }
                    });
                    swap = add(&swap, &term);
                }
            }
            controlled(swap)
        }
        GateKind::Permutation => permutation_unitary(g, n),
        _ => {
            let u = base_matrix(g);
            let t = g.targets[0];
            let active = tensor(n, |q| {
                if q == t {
                    u.clone()
                } else if g.controls.contains(&q) {
                    p1.clone()
                } else {
                    identity(2)
                }
            });
            controlled(active)
        }
    }
}

/// Column `src` has a single 1 at the row the permutation sends `src` to.
fn permutation_unitary(g: &Gate, n: usize) -> Mat {
    let table = g.perm_table.as_ref().unwrap();
    let dim = 1 << n;
    let mut m = vec![vec![ZERO; dim]; dim];
    for src in 0..dim {
        let bits: Vec<usize> = (0..n).map(|q| (src >> q) & 1).collect();
        let dest = if g.controls.iter().all(|&c| bits[c] == 1) {
            let mut local = 0;
            for (k, &t) in g.targets.iter().enumerate() {
                local += bits[t] << k;
            }
            let image = table[local];
            let mut out = bits.clone();
            for (k, &t) in g.targets.iter().enumerate() {
                out[t] = (image >> k) & 1;
            }
            out.iter().enumerate().map(|(q, b)| b << q).sum()
        } else {
            src
        };
        m[dest][src] = ONE;
    }
    m
}

pub fn run(gates: &[Gate], n: usize, initial: &[Complex64]) -> Vec<Complex64> {
    gates
        .iter()
        .fold(initial.to_vec(), |state, g| mat_vec(&gate_unitary(g, n), &state))
}

pub fn ground(n: usize) -> Vec<Complex64> {
    let mut v = vec![ZERO; 1 << n];
    v[0] = ONE;
    v
}

// ---------------------------------------------------------------- random circuits

pub struct Gen(Xoshiro256PlusPlus);

impl Gen {
    pub fn new(seed: u64) -> Self {
        use rand_core::SeedableRng;
        Gen(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    pub fn angle(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 4.0 * std::f64::consts::PI
            - 2.0 * std::f64::consts::PI
    }

    fn distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..n).collect();
        let mut out = Vec::new();
        for _ in 0..k {
            out.push(pool.swap_remove(self.below(pool.len())));
        }
        out
    }

    pub fn gate(&mut self, n: usize) -> Gate {
        let pick = self.below(if n >= 2 { 11 } else { 6 });
        match pick {
            0 => Gate::h(self.below(n)),
            1 => Gate::x(self.below(n)),
            2 => Gate::y(self.below(n)),
            3 => Gate::z(self.below(n)),
            4 => Gate::p(self.angle(), self.below(n)),
            5 => Gate::u(self.angle(), self.angle(), self.angle(), self.below(n)),
            6 => {
                let q = self.distinct(n, 2);
                Gate::cnot(q[0], q[1])
            }
            7 => {
                let q = self.distinct(n, 2);
                Gate::swap(q[0], q[1])
            }
            8 => {
                let q = self.distinct(n, 2);
                Gate::u(self.angle(), self.angle(), self.angle(), q[1]).controlled_by([q[0]])
            }
            9 => {
                let q = self.distinct(n, 2);
                Gate::p(self.angle(), q[1]).controlled_by([q[0]])
            }
            _ => {
                // permutation on 1-2 targets, optionally controlled
                let k = 1 + self.below(2.min(n));
                let ctl = if n > k && self.below(2) == 1 { 1 } else { 0 };
                let q = self.distinct(n, k + ctl);
                let mut table: Vec<usize> = (0..1 << k).collect();
                for i in (1..table.len()).rev() {
                    table.swap(i, self.below(i + 1));
                }
                Gate::permutation(q[..k].to_vec(), table).controlled_by(q[k..].iter().copied())
            }
        }
    }

    pub fn state(&mut self, n: usize) -> Vec<Complex64> {
        let v: Vec<Complex64> = (0..1 << n)
            .map(|_| Complex64::new(self.angle(), self.angle()))
            .collect();
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|a| a / norm).collect()
    }
}
