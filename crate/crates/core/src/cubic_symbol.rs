//! The cubic residue symbol `(alpha / beta)_3`.
//!
//! Two independent routes: [`symbol_power_oracle`] evaluates Euler's criterion
//! `alpha^((N(pi)-1)/3) mod pi` for a prime denominator, and [`symbol`] runs a
//! Jacobi-style descent (reduce, strip units and `1-w`, flip by cubic
//! reciprocity) that never factors the denominator.

use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;

use crate::eisenstein::{primary_one, EisensteinInt, OMEGA, ONE, ONE_MINUS_OMEGA};
use crate::error::{Error, Result};

/// A cube root of unity `w^k`, or zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CubeRootOfUnity {
    Zero,
    /// `w^k`, `k ∈ {0, 1, 2}`.
    Power(u8),
}

pub use CubeRootOfUnity::{Power, Zero};

impl CubeRootOfUnity {
    pub const ONE: Self = Power(0);

    pub fn omega_pow(k: i64) -> Self {
        Power(k.rem_euclid(3) as u8)
    }

    pub fn conj(self) -> Self {
        match self {
            Zero => Zero,
            Power(k) => Power((3 - k) % 3),
        }
    }

    pub fn pow(self, e: u32) -> Self {
        match self {
            Zero if e == 0 => Self::ONE,
            Zero => Zero,
            Power(k) => Power(((k as u64 * e as u64) % 3) as u8),
        }
    }

    pub fn to_complex(self) -> Complex64 {
        match self {
            Zero => Complex64::new(0.0, 0.0),
            Power(0) => Complex64::new(1.0, 0.0),
            Power(1) => Complex64::new(-0.5, 0.75f64.sqrt()),
            Power(_) => Complex64::new(-0.5, -(0.75f64.sqrt())),
        }
    }

    /// `2 Re` of the value: 2 for 1, -1 for w and w^2, 0 for zero.
    pub fn twice_real(self) -> f64 {
        match self {
            Zero => 0.0,
            Power(0) => 2.0,
            Power(_) => -1.0,
        }
    }
}

impl Mul for CubeRootOfUnity {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        match (self, rhs) {
            (Power(a), Power(b)) => Power((a + b) % 3),
            _ => Zero,
        }
    }
}

impl fmt::Display for CubeRootOfUnity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Zero => "0",
            Power(0) => "1",
            Power(1) => "w",
            Power(_) => "w2",
        })
    }
}

/// `(alpha / pi)_3` by modular exponentiation in `Z[w]/(pi)`.
///
/// `pi` must be a prime coprime to 3. A composite `pi` is detected when the
/// power matches none of `1, w, w^2`.
pub fn symbol_power_oracle(alpha: &EisensteinInt, pi: &EisensteinInt) -> Result<CubeRootOfUnity> {
    if pi.is_zero() || pi.divisible_by_one_minus_omega() {
        return Err(Error::Domain {
            function: "symbol_power_oracle",
            detail: format!("modulus {pi} must be coprime to 3"),
        });
    }
    if pi.is_unit() {
        return Err(Error::NotPrime(pi.to_string()));
    }
    let base = alpha.rem(pi)?;
    if base.is_zero() {
        return Ok(Zero);
    }
    let mut e = (pi.norm() - 1) / 3;
    let mut acc = ONE;
    let mut b = base;
    while e > 0 {
        if e & 1 == 1 {
            acc = (acc * b).rem(pi)?;
        }
        b = (b * b).rem(pi)?;
        e >>= 1;
    }
    let mut w = ONE;
    for k in 0..3u8 {
        if (acc - w).rem(pi)?.is_zero() {
            return Ok(Power(k));
        }
        w = w * OMEGA;
    }
    Err(Error::NotPrime(pi.to_string()))
}

/// Writes a nonzero `x` as `u^-1 * (1-w)^h * x'` with `x' ≡ 1 mod 3`;
/// returns `(omega power of u^-1, h, x')`. The sign of `u` is irrelevant for
/// cubic symbols because `(-1/beta)_3 = 1`.
fn strip(x: EisensteinInt) -> (u8, u32, EisensteinInt) {
    let mut x = x;
    let mut h = 0;
    while x.divisible_by_one_minus_omega() {
        x = x.div_exact(&ONE_MINUS_OMEGA).expect("1-w divides by the residue test");
        h += 1;
    }
    let (u, p) = primary_one(&x).expect("coprime to 1-w after stripping");
    (u.inverse().omega_power, h, p)
}

/// `(alpha / beta)_3` for any `beta` coprime to 3, multiplicative in `beta`.
pub fn symbol(alpha: &EisensteinInt, beta: &EisensteinInt) -> Result<CubeRootOfUnity> {
    if beta.is_zero() || beta.divisible_by_one_minus_omega() {
        return Err(Error::Domain {
            function: "symbol",
            detail: format!("denominator {beta} must be coprime to 3"),
        });
    }
    let (_, mut den) = primary_one(beta)?;
    let mut num = *alpha;
    let mut exponent: i64 = 0;
    loop {
        // den ≡ 1 mod 3 throughout; the norm strictly decreases per pass
        if den.is_unit() {
            return Ok(CubeRootOfUnity::omega_pow(exponent));
        }
        let r = num.rem(&den)?;
        if r.is_zero() {
            return Ok(Zero);
        }
        let (k, h, rest) = strip(r);
        // den = 1 + 3m + 3n w
        let m = (den.a - 1) / 3;
        let n = den.b / 3;
        // (w/den) = w^(2m+2n), (1-w/den) = w^m
        exponent += k as i64 * (2 * m + 2 * n) + h as i64 * m;
        exponent = exponent.rem_euclid(3);
        // cubic reciprocity between the two primary elements
        num = den;
        den = rest;
    }
}

/// `psi_n(alpha) = (n / alpha)_3`.
pub fn psi(n: u64, alpha: &EisensteinInt) -> Result<CubeRootOfUnity> {
    if !alpha.is_one_mod_three() {
        return Err(Error::Domain {
            function: "psi",
            detail: format!("{alpha} is not 1 mod 3"),
        });
    }
    symbol(&EisensteinInt::from(n as i64), alpha)
}
