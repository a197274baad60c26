//! Segmented sieve of Eratosthenes and small multiplicative helpers.

use crate::eisenstein::isqrt;

const SEGMENT: u64 = 1 << 15;

/// All primes `p <= n`, ascending.
pub fn primes_up_to(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    for_each_prime(n, |p| out.push(p));
    out
}

/// Calls `f` on every prime `p <= n` in ascending order, sieving in
/// fixed-size segments so memory stays O(sqrt n + segment).
pub fn for_each_prime(n: u64, mut f: impl FnMut(u64)) {
    if n < 2 {
        return;
    }
    let root = isqrt(n as u128) as u64;
    let base = simple_sieve(root);
    for &p in &base {
        f(p);
    }
    let mut lo = root + 1;
    let mut mark = vec![true; SEGMENT as usize];
    while lo <= n {
        let hi = (lo + SEGMENT - 1).min(n);
        let len = (hi - lo + 1) as usize;
        mark[..len].fill(true);
        for &p in &base {
            let start = (p * p).max(lo.div_ceil(p) * p);
            let mut m = start;
            while m <= hi {
                mark[(m - lo) as usize] = false;
                m += p;
            }
        }
        for (i, &is_prime) in mark[..len].iter().enumerate() {
            if is_prime {
                f(lo + i as u64);
            }
        }
        lo = hi + 1;
    }
}

fn simple_sieve(n: u64) -> Vec<u64> {
    let n = n as usize;
    if n < 2 {
        return Vec::new();
    }
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

/// Distinct prime divisors of `n`, ascending.
pub fn prime_divisors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// The real character modulo 3: `xi(n) = (n / 3)`.
pub fn xi(n: u64) -> i32 {
    match n % 3 {
        0 => 0,
        1 => 1,
        _ => -1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segmented_matches_simple() {
        for n in [0u64, 1, 2, 3, 100, 32768, 32769, 200_000] {
            assert_eq!(primes_up_to(n), simple_sieve(n), "n = {n}");
        }
    }

    #[test]
    fn prime_counts() {
        assert_eq!(primes_up_to(1_000_000).len(), 78_498);
        assert_eq!(prime_divisors(360), vec![2, 3, 5]);
        assert_eq!(prime_divisors(97), vec![97]);
    }
}
