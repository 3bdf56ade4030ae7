//! Classical side of order finding: modulus validation, continued-fraction
//! period extraction and factor recovery.

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShorError {
    #[error("cannot factor {n}: {reason}")]
    InvalidN { n: u64, reason: &'static str },
    #[error("base {a} is not coprime with {n} or outside 1 < a < N")]
    NotCoprime { n: u64, a: u64 },
    #[error("no measured phase yields a usable even period")]
    NoPeriodFound,
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn mod_pow(base: u64, mut exp: u64, modulus: u64) -> u64 {
    if modulus == 1 {
        return 0;
    }
    let m = modulus as u128;
    let mut b = base as u128 % m;
    let mut acc = 1u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    acc as u64
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// True when `n = p^k` for a prime `p` and `k >= 2`.
pub fn is_prime_power(n: u64) -> bool {
    if n < 4 {
        return false;
    }
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            let mut m = n;
            while m % p == 0 {
                m /= p;
            }
            return m == 1;
        }
        p += 1;
    }
    false
}

pub fn bit_length(n: u64) -> usize {
    (u64::BITS - n.leading_zeros()) as usize
}

/// Checks that `n` is a composite Shor can factor: odd, above 3, not prime and not a prime power.
pub fn validate_modulus(n: u64) -> Result<(), ShorError> {
    let reason = if n <= 3 {
        "too small"
    } else if n % 2 == 0 {
        "even"
    } else if is_prime(n) {
        "prime"
    } else if is_prime_power(n) {
        "prime power"
    } else {
        return Ok(());
    };
    Err(ShorError::InvalidN { n, reason })
}

pub fn validate_base(n: u64, a: u64) -> Result<(), ShorError> {
    if a <= 1 || a >= n || gcd(a, n) != 1 {
        return Err(ShorError::NotCoprime { n, a });
    }
    Ok(())
}

/// Smallest base `a >= 2` coprime with `n`.
pub fn default_base(n: u64) -> u64 {
    (2..n).find(|&a| gcd(a, n) == 1).unwrap_or(2)
}

/// Convergents `p/q` of `num/den`, at most `max_terms` of them.
pub fn convergents(num: u64, den: u64, max_terms: usize) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    if den == 0 {
        return out;
    }
    let (mut n, mut d) = (num as u128, den as u128);
    // h_{-1}=1, h_{-2}=0, k_{-1}=0, k_{-2}=1
    let (mut h1, mut h2) = (1u128, 0u128);
    let (mut k1, mut k2) = (0u128, 1u128);
    while out.len() < max_terms && d != 0 {
        let a = n / d;
        (n, d) = (d, n % d);
        let h = a * h1 + h2;
        let k = a * k1 + k2;
        (h2, h1) = (h1, h);
        (k2, k1) = (k1, k);
        if h > u64::MAX as u128 || k > u64::MAX as u128 {
            break;
        }
        out.push((h as u64, k as u64));
    }
    out
}

/// Recovers the order of `a` mod `n` from one counting-register outcome.
///
/// Each convergent denominator `d < n` of `y / 2^bits` is tried together with
/// its multiples below `n`; the first `r` with `a^r = 1 (mod n)` wins.
pub fn period_from_phase(y: u64, counting_bits: usize, a: u64, n: u64) -> Option<u64> {
    if y == 0 {
        return None;
    }
    let q = 1u64 << counting_bits;
    for (_, d) in convergents(y, q, 2 * bit_length(n)) {
        if d == 0 || d >= n {
            continue;
        }
        let mut r = d;
        while r < n {
            if mod_pow(a, r, n) == 1 {
                return Some(r);
            }
            r += d;
        }
    }
    None
}

/// Nontrivial factor pair from an order `r`, smaller factor first.
pub fn factors_from_period(a: u64, r: u64, n: u64) -> Option<[u64; 2]> {
    if r % 2 != 0 {
        return None;
    }
    let x = mod_pow(a, r / 2, n);
    if x == n - 1 {
        return None;
    }
    [gcd(x + n - 1, n), gcd(x + 1, n)]
        .into_iter()
        .find(|&f| f > 1 && f < n)
        .map(|f| {
            let g = n / f;
            [f.min(g), f.max(g)]
        })
}

/// Brute-force multiplicative order, for checking.
pub fn multiplicative_order(a: u64, n: u64) -> Option<u64> {
    if gcd(a, n) != 1 {
        return None;
    }
    let mut x = a % n;
    for r in 1..=n {
        if x == 1 {
            return Some(r);
        }
        x = (x as u128 * a as u128 % n as u128) as u64;
    }
    None
}

/// Distinct nontrivial factor pairs over all measured outcomes, sorted.
pub fn extract_factors(
    outcomes: impl IntoIterator<Item = (u64, u64)>,
    counting_bits: usize,
    a: u64,
    n: u64,
) -> Result<Vec<[u64; 2]>, ShorError> {
    let mut pairs: Vec<[u64; 2]> = outcomes
        .into_iter()
        .filter(|&(_, count)| count > 0)
        .filter_map(|(y, _)| period_from_phase(y, counting_bits, a, n))
        .filter_map(|r| factors_from_period(a, r, n))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    if pairs.is_empty() {
        Err(ShorError::NoPeriodFound)
    } else {
        Ok(pairs)
    }
}
