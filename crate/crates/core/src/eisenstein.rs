//! Exact arithmetic in the Eisenstein integers Z[w], w = (-1 + sqrt(-3)) / 2.
//!
//! Elements are stored as `a + b*w` with 64-bit coordinates. Products are
//! formed in 128-bit and must fit back into 64 bits; at the conductor scales
//! this crate works with (norms well below 2^40) every intermediate does.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_prime::nt_funcs::factorize64;

use crate::error::{Error, Result};

/// An element `a + b*w` of Z[w].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct EisensteinInt {
    pub a: i64,
    pub b: i64,
}

pub const ZERO: EisensteinInt = EisensteinInt { a: 0, b: 0 };
pub const ONE: EisensteinInt = EisensteinInt { a: 1, b: 0 };
pub const OMEGA: EisensteinInt = EisensteinInt { a: 0, b: 1 };
/// The ramified prime 1 - w, of norm 3.
pub const ONE_MINUS_OMEGA: EisensteinInt = EisensteinInt { a: 1, b: -1 };

fn narrow(x: i128) -> i64 {
    i64::try_from(x).expect("Eisenstein coordinate overflowed 64 bits")
}

impl EisensteinInt {
    pub const fn new(a: i64, b: i64) -> Self {
        Self { a, b }
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0 && self.b == 0
    }

    /// `a^2 - ab + b^2`.
    pub fn norm(&self) -> u64 {
        let (a, b) = (self.a as i128, self.b as i128);
        (a * a - a * b + b * b) as u64
    }

    /// Complex conjugate: `conj(a + b*w) = (a - b) - b*w`.
    pub fn conj(&self) -> Self {
        Self::new(self.a - self.b, -self.b)
    }

    /// Position in the complex plane.
    pub fn to_complex(&self) -> (f64, f64) {
        let s = 3f64.sqrt() / 2.0;
        (self.a as f64 - 0.5 * self.b as f64, s * self.b as f64)
    }

    /// `self ≡ 1 mod 3`, i.e. `a ≡ 1` and `b ≡ 0 (mod 3)`.
    pub fn is_one_mod_three(&self) -> bool {
        self.a.rem_euclid(3) == 1 && self.b.rem_euclid(3) == 0
    }

    /// Whether the ramified prime `1 - w` divides `self`.
    pub fn divisible_by_one_minus_omega(&self) -> bool {
        (self.a + self.b).rem_euclid(3) == 0
    }

    pub fn is_unit(&self) -> bool {
        self.norm() == 1
    }

    pub fn pow(&self, mut e: u32) -> Self {
        let mut base = *self;
        let mut acc = ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }

    /// Euclidean division: `self = q*rhs + r` with `norm(r) < norm(rhs)`.
    ///
    /// The quotient rounds both coordinates of the exact field quotient to the
    /// nearest integer, ties to even.
    pub fn div_rem(&self, rhs: &Self) -> Result<(Self, Self)> {
        if rhs.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let n = rhs.norm() as i128;
        let num = mul_wide(*self, rhs.conj());
        let q = Self::new(narrow(round_half_even(num.0, n)), narrow(round_half_even(num.1, n)));
        let r = *self - q * *rhs;
        debug_assert!(r.norm() < rhs.norm());
        Ok((q, r))
    }

    /// Remainder of Euclidean division.
    pub fn rem(&self, rhs: &Self) -> Result<Self> {
        self.div_rem(rhs).map(|(_, r)| r)
    }

    /// `self / rhs` when the division is exact.
    pub fn div_exact(&self, rhs: &Self) -> Option<Self> {
        let (q, r) = self.div_rem(rhs).ok()?;
        r.is_zero().then_some(q)
    }

    pub fn divides(&self, other: &Self) -> bool {
        if self.is_zero() {
            return other.is_zero();
        }
        other.rem(self).map(|r| r.is_zero()).unwrap_or(false)
    }

    /// The six associates `u * self`, in the order `1, w, w^2, -1, -w, -w^2`.
    pub fn associates(&self) -> [(Unit, Self); 6] {
        Unit::ALL.map(|u| (u, u.to_eisenstein() * *self))
    }
}

/// `(a + b w)(c + d w)` in 128-bit coordinates.
fn mul_wide(x: EisensteinInt, y: EisensteinInt) -> (i128, i128) {
    let (a, b, c, d) = (x.a as i128, x.b as i128, y.a as i128, y.b as i128);
    (a * c - b * d, a * d + b * c - b * d)
}

/// Nearest integer to `x / n` (n > 0), ties to even.
fn round_half_even(x: i128, n: i128) -> i128 {
    let q = x.div_euclid(n);
    let r = x.rem_euclid(n);
    match (2 * r).cmp(&n) {
        Ordering::Less => q,
        Ordering::Greater => q + 1,
        Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

impl Add for EisensteinInt {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.a + rhs.a, self.b + rhs.b)
    }
}

impl Sub for EisensteinInt {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.a - rhs.a, self.b - rhs.b)
    }
}

impl Neg for EisensteinInt {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.a, -self.b)
    }
}

impl Mul for EisensteinInt {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (x, y) = mul_wide(self, rhs);
        Self::new(narrow(x), narrow(y))
    }
}

impl From<i64> for EisensteinInt {
    fn from(a: i64) -> Self {
        Self::new(a, 0)
    }
}

/// Deterministic output order: by `(norm, a, b)`.
impl Ord for EisensteinInt {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.norm(), self.a, self.b).cmp(&(other.norm(), other.a, other.b))
    }
}

impl PartialOrd for EisensteinInt {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Canonical text form `a+b*w`, e.g. `-2-3*w`.
impl fmt::Display for EisensteinInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:+}*w", self.a, self.b)
    }
}

impl FromStr for EisensteinInt {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let body = s
            .strip_suffix("*w")
            .ok_or_else(|| Error::Parse(format!("expected a+b*w, got {s:?}")))?;
        // split at the sign that starts the second coefficient
        let split = body
            .char_indices()
            .skip(1)
            .filter(|&(_, c)| c == '+' || c == '-')
            .map(|(i, _)| i)
            .last()
            .ok_or_else(|| Error::Parse(format!("expected a+b*w, got {s:?}")))?;
        let (a, b) = body.split_at(split);
        let parse = |t: &str| {
            t.parse::<i64>()
                .map_err(|e| Error::Parse(format!("{t:?} in {s:?}: {e}")))
        };
        Ok(Self::new(parse(a)?, parse(b.trim_start_matches('+'))?))
    }
}

/// A unit `±w^k` of Z[w].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Unit {
    pub negative: bool,
    pub omega_power: u8,
}

impl Unit {
    pub const ONE: Unit = Unit {
        negative: false,
        omega_power: 0,
    };

    pub const ALL: [Unit; 6] = [
        Unit {
            negative: false,
            omega_power: 0,
        },
        Unit {
            negative: false,
            omega_power: 1,
        },
        Unit {
            negative: false,
            omega_power: 2,
        },
        Unit {
            negative: true,
            omega_power: 0,
        },
        Unit {
            negative: true,
            omega_power: 1,
        },
        Unit {
            negative: true,
            omega_power: 2,
        },
    ];

    pub fn to_eisenstein(self) -> EisensteinInt {
        let w = match self.omega_power % 3 {
            0 => ONE,
            1 => OMEGA,
            _ => EisensteinInt::new(-1, -1),
        };
        if self.negative {
            -w
        } else {
            w
        }
    }

    pub fn inverse(self) -> Unit {
        Unit {
            negative: self.negative,
            omega_power: (3 - self.omega_power % 3) % 3,
        }
    }

    pub fn from_eisenstein(u: &EisensteinInt) -> Option<Unit> {
        Unit::ALL.into_iter().find(|c| c.to_eisenstein() == *u)
    }
}

/// The unique associate `u * alpha ≡ 1 (mod 3)`; returns `(u, u * alpha)`.
pub fn primary_one(alpha: &EisensteinInt) -> Result<(Unit, EisensteinInt)> {
    if alpha.divisible_by_one_minus_omega() {
        return Err(Error::NotNormalizable(alpha.to_string()));
    }
    alpha
        .associates()
        .into_iter()
        .find(|(_, x)| x.is_one_mod_three())
        .ok_or_else(|| Error::NotNormalizable(alpha.to_string()))
}

fn normalize_associate(g: &EisensteinInt) -> EisensteinInt {
    match primary_one(g) {
        Ok((_, p)) => p,
        Err(_) => g
            .associates()
            .into_iter()
            .map(|(_, x)| x)
            .min_by_key(|x| (x.a, x.b))
            .expect("six associates"),
    }
}

/// A greatest common divisor, normalized to its `≡ 1 mod 3` associate when it
/// is coprime to `1 - w`, otherwise to the lexicographically smallest associate.
pub fn gcd(alpha: &EisensteinInt, beta: &EisensteinInt) -> Result<EisensteinInt> {
    if alpha.is_zero() && beta.is_zero() {
        return Err(Error::GcdUndefined);
    }
    let (mut x, mut y) = (*alpha, *beta);
    while !y.is_zero() {
        let r = x.rem(&y)?;
        x = y;
        y = r;
    }
    Ok(normalize_associate(&x))
}

/// Complete factorization `unit * (1-w)^h * prod pi_i^e_i` with every `pi_i ≡ 1 mod 3`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factorization {
    pub unit: Unit,
    pub ramified_exponent: u32,
    pub prime_powers: Vec<(EisensteinInt, u32)>,
}

impl Factorization {
    pub fn reassemble(&self) -> EisensteinInt {
        let mut acc = self.unit.to_eisenstein() * ONE_MINUS_OMEGA.pow(self.ramified_exponent);
        for (p, e) in &self.prime_powers {
            acc = acc * p.pow(*e);
        }
        acc
    }
}

/// A primary prime of norm `p` for a rational prime `p ≡ 1 mod 3`, found by
/// searching the norm form `a^2 - ab + b^2 = p` over `a ∈ [0, ⌈2 sqrt(p/3)⌉]`.
///
/// O(sqrt p); Cornacchia's algorithm would be the replacement at larger scale.
pub fn split_prime(p: u64) -> Result<EisensteinInt> {
    if p % 3 != 1 {
        return Err(Error::Domain {
            function: "split_prime",
            detail: format!("{p} is not 1 mod 3"),
        });
    }
    let p = p as i128;
    let bound = (2.0 * (p as f64 / 3.0).sqrt()).ceil() as i128 + 1;
    for a in 0..=bound {
        // b^2 - a b + a^2 - p = 0  =>  b = (a ± sqrt(4p - 3a^2)) / 2
        let disc = 4 * p - 3 * a * a;
        if disc < 0 {
            break;
        }
        let s = isqrt(disc as u128) as i128;
        if s * s != disc || (a + s) % 2 != 0 {
            continue;
        }
        let b = (a + s) / 2;
        let pi = EisensteinInt::new(a as i64, b as i64);
        debug_assert_eq!(pi.norm() as i128, p);
        return primary_one(&pi).map(|(_, x)| x);
    }
    Err(Error::FactorizationFailed(format!("norm form search for {p}")))
}

pub(crate) fn isqrt(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// Factor a nonzero element through the rational factorization of its norm.
pub fn factor(alpha: &EisensteinInt) -> Result<Factorization> {
    if alpha.is_zero() {
        return Err(Error::Domain {
            function: "factor",
            detail: "zero has no factorization".into(),
        });
    }
    let mut rest = *alpha;
    let mut ramified_exponent = 0;
    let mut prime_powers = Vec::new();
    let mut rational: Vec<(u64, usize)> = factorize64(alpha.norm()).into_iter().collect();
    rational.sort_unstable();
    for (p, e) in rational {
        match p % 3 {
            0 => {
                for _ in 0..e {
                    rest = rest
                        .div_exact(&ONE_MINUS_OMEGA)
                        .ok_or_else(|| Error::FactorizationFailed(alpha.to_string()))?;
                }
                ramified_exponent = e as u32;
            }
            2 => {
                // inert: p divides alpha e/2 times
                let pi = EisensteinInt::from(-(p as i64));
                for _ in 0..e / 2 {
                    rest = rest
                        .div_exact(&pi)
                        .ok_or_else(|| Error::FactorizationFailed(alpha.to_string()))?;
                }
                prime_powers.push((pi, (e / 2) as u32));
            }
            _ => {
                let pi = split_prime(p)?;
                for cand in [pi, pi.conj()] {
                    let mut k = 0;
                    while let Some(q) = rest.div_exact(&cand) {
                        rest = q;
                        k += 1;
                    }
                    if k > 0 {
                        prime_powers.push((cand, k));
                    }
                }
            }
        }
    }
    let unit = Unit::from_eisenstein(&rest).ok_or_else(|| Error::FactorizationFailed(alpha.to_string()))?;
    let f = Factorization {
        unit,
        ramified_exponent,
        prime_powers,
    };
    debug_assert_eq!(f.reassemble(), *alpha);
    Ok(f)
}

/// Indicator of `alpha ≡ 1 mod 3`, square-free, and free of rational prime divisors.
pub fn nu(alpha: &EisensteinInt) -> Result<bool> {
    if !alpha.is_one_mod_three() {
        return Ok(false);
    }
    let f = factor(alpha)?;
    if f.ramified_exponent > 0 {
        return Ok(false);
    }
    let mut norms = Vec::with_capacity(f.prime_powers.len());
    for (pi, e) in &f.prime_powers {
        let n = pi.norm();
        // an inert prime p has norm p^2 and is itself a rational prime
        if *e > 1 || n % 3 != 1 || isqrt(n as u128).pow(2) == n as u128 {
            return Ok(false);
        }
        norms.push(n);
    }
    norms.sort_unstable();
    // pi and conj(pi) together would contribute the rational prime N(pi)
    Ok(norms.windows(2).all(|w| w[0] != w[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(a: i64, b: i64) -> EisensteinInt {
        EisensteinInt::new(a, b)
    }

    #[test]
    fn norm_examples() {
        assert_eq!(e(3, 1).norm(), 7);
        assert_eq!(ZERO.norm(), 0);
        assert_eq!(e(-2, -3).norm(), 7);
    }

    #[test]
    fn divmod_examples() {
        let (q, r) = e(7, 0).div_rem(&e(3, 1)).unwrap();
        assert_eq!((q, r), (e(2, -1), ZERO));
        let (q, r) = e(5, 0).div_rem(&e(2, 0)).unwrap();
        assert_eq!(r.norm(), 1);
        assert_eq!(q * e(2, 0) + r, e(5, 0));
        assert_eq!(e(1, 2).div_rem(&e(1, 2)).unwrap(), (ONE, ZERO));
        assert!(matches!(e(1, 2).div_rem(&ZERO), Err(Error::DivisionByZero)));
    }

    #[test]
    fn gcd_examples() {
        let g = gcd(&e(7, 0), &e(3, 1)).unwrap();
        assert!(e(3, 1).associates().iter().any(|(_, x)| *x == g));
        assert!(gcd(&e(2, 0), &e(3, 0)).unwrap().is_unit());
        assert_eq!(gcd(&e(3, 1), &ZERO).unwrap(), e(-2, -3));
        assert!(matches!(gcd(&ZERO, &ZERO), Err(Error::GcdUndefined)));
    }

    #[test]
    fn primary_one_examples() {
        assert_eq!(primary_one(&OMEGA).unwrap().1, ONE);
        let (u, p) = primary_one(&e(3, 1)).unwrap();
        assert_eq!(p, e(-2, -3));
        assert_eq!(u.to_eisenstein() * e(3, 1), p);
        assert!(matches!(primary_one(&ONE_MINUS_OMEGA), Err(Error::NotNormalizable(_))));
    }

    #[test]
    fn factor_examples() {
        let f = factor(&e(7, 0)).unwrap();
        assert_eq!(f.reassemble(), e(7, 0));
        let primes: Vec<_> = f.prime_powers.iter().map(|(p, _)| *p).collect();
        assert!(primes.contains(&e(-2, -3)) && primes.contains(&e(-2, -3).conj()));

        let f = factor(&e(2, 0)).unwrap();
        assert_eq!(f.prime_powers, vec![(e(-2, 0), 1)]);
        assert_eq!(
            f.unit,
            Unit {
                negative: true,
                omega_power: 0
            }
        );

        // (1-w)^2 = -3w, so -3 = w^2 (1-w)^2
        assert_eq!(ONE_MINUS_OMEGA.pow(2), e(0, -3));
        let f = factor(&e(-3, 0)).unwrap();
        assert_eq!(f.ramified_exponent, 2);
        assert!(f.prime_powers.is_empty());
        assert_eq!(
            f.unit,
            Unit {
                negative: false,
                omega_power: 2
            }
        );
    }

    #[test]
    fn norm_form_search_matches_brute_force() {
        for p in [7u64, 13, 19, 31, 37, 43, 61, 67, 73, 79, 97, 10009] {
            let pi = split_prime(p).unwrap();
            assert_eq!(pi.norm(), p);
            assert!(pi.is_one_mod_three());
        }
    }

    #[test]
    fn nu_examples() {
        assert!(nu(&e(-2, -3)).unwrap());
        assert!(!nu(&e(7, 0)).unwrap());
        assert!(nu(&e(4, 3)).unwrap());
        assert!(!nu(&e(3, 1)).unwrap()); // not 1 mod 3
        assert!(!nu(&(e(-2, -3) * e(-2, -3))).unwrap());
        assert!(nu(&(e(-2, -3) * e(4, 3))).unwrap());
    }

    #[test]
    fn text_form_round_trips() {
        for x in [e(-2, -3), e(3, 1), e(0, 0), e(-7, 12)] {
            assert_eq!(x.to_string().parse::<EisensteinInt>().unwrap(), x);
        }
        assert_eq!(e(-2, -3).to_string(), "-2-3*w");
    }

    fn small() -> impl Strategy<Value = EisensteinInt> {
        (-3000i64..3000, -3000i64..3000).prop_map(|(a, b)| e(a, b))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn norm_is_multiplicative(x in small(), y in small()) {
            prop_assert_eq!((x * y).norm(), x.norm() * y.norm());
            prop_assert_eq!(x.conj().norm(), x.norm());
        }

        #[test]
        fn divmod_contract(x in small(), y in small()) {
            prop_assume!(!y.is_zero());
            let (q, r) = x.div_rem(&y).unwrap();
            prop_assert_eq!(q * y + r, x);
            prop_assert!(r.norm() < y.norm());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2_000))]

        #[test]
        fn factor_reassembles(x in small()) {
            prop_assume!(!x.is_zero());
            let f = factor(&x).unwrap();
            prop_assert_eq!(f.reassemble(), x);
            for (p, _) in &f.prime_powers {
                prop_assert!(p.is_one_mod_three());
            }
        }

        #[test]
        fn primary_one_is_idempotent(x in small()) {
            let x = if x.divisible_by_one_minus_omega() { x + ONE } else { x };
            let (_, p) = primary_one(&x).unwrap();
            prop_assert_eq!(primary_one(&p).unwrap(), (Unit::ONE, p));
        }

        #[test]
        fn nu_is_conjugation_stable(x in small()) {
            prop_assume!(!x.is_zero());
            prop_assert_eq!(nu(&x).unwrap(), nu(&x.conj()).unwrap());
        }
    }
}
