//! Prime sums `sum_{p > P} log p p^{-s}`, split by residue class mod 3.
//!
//! The primes up to `P` are summed explicitly. The remaining tail comes
//! from `-zeta'/zeta` and `-L'/L(xi)`, minus their small-prime Euler
//! factors, with the prime-power terms `p^{-ks}` (`k >= 2`) removed
//! recursively.

use num_complex::Complex64;

use crate::error::Result;
use crate::primes::primes_up_to;
use crate::special::{l_xi_log_derivative, zeta_log_derivative};

/// Tails below this are dropped.
const NEGLIGIBLE: f64 = 1e-18;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmallPrime {
    pub p: u64,
    pub log_p: f64,
    /// `xi(p)`, the character modulo 3.
    pub xi: i8,
}

#[derive(Clone, Debug)]
pub struct PrimeTails {
    cutoff: u64,
    primes: Vec<SmallPrime>,
}

impl PrimeTails {
    /// Explicit primes up to `cutoff`, which must be at least 3.
    pub fn new(cutoff: u64) -> Self {
        assert!(cutoff >= 3);
        let primes = primes_up_to(cutoff)
            .into_iter()
            .map(|p| SmallPrime {
                p,
                log_p: (p as f64).ln(),
                xi: match p % 3 {
                    0 => 0,
                    1 => 1,
                    _ => -1,
                },
            })
            .collect();
        Self { cutoff, primes }
    }

    pub fn cutoff(&self) -> u64 {
        self.cutoff
    }

    pub fn small_primes(&self) -> &[SmallPrime] {
        &self.primes
    }

    /// `sum_{p > P} log p p^{-r} ~ P^{1-r}/(r-1)` is below [`NEGLIGIBLE`]
    /// even after multiplying by `weight`.
    fn negligible(&self, s: Complex64, weight: f64) -> bool {
        let r = s.re;
        let p = self.cutoff as f64;
        r > 1.0 && weight * p.powf(1.0 - r) / (r - 1.0) < NEGLIGIBLE
    }

    /// `sum_{p > P} sum_{k >= 1} log p p^{-ks} = -zeta'/zeta(s) - sum_{p <= P} log p/(p^s - 1)`.
    fn zeta_tail(&self, s: Complex64) -> Result<Complex64> {
        let mut acc = -zeta_log_derivative(s)?;
        for sp in &self.primes {
            let x = (-s * sp.log_p).exp();
            acc -= sp.log_p * x / (1.0 - x);
        }
        Ok(acc)
    }

    /// `sum_{p > P} sum_{k >= 1} xi(p)^k log p p^{-ks}`.
    fn xi_tail(&self, s: Complex64) -> Result<Complex64> {
        let mut acc = -l_xi_log_derivative(s);
        for sp in self.primes.iter().filter(|sp| sp.xi != 0) {
            let x = (-s * sp.log_p).exp() * sp.xi as f64;
            acc -= sp.log_p * x / (1.0 - x);
        }
        Ok(acc)
    }

    /// `sum_{p > P} log p p^{-s}` for `Re s > 1`.
    pub fn log_sum(&self, s: Complex64) -> Result<Complex64> {
        if self.negligible(s, 1.0) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let mut acc = self.zeta_tail(s)?;
        let mut k = 2.0;
        while !self.negligible(s * k, 1.0) {
            acc -= self.log_sum(s * k)?;
            k += 1.0;
        }
        Ok(acc)
    }

    /// `sum_{p > P} xi(p) log p p^{-s}` for `Re s > 1`.
    pub fn log_sum_xi(&self, s: Complex64) -> Result<Complex64> {
        if self.negligible(s, 1.0) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let mut acc = self.xi_tail(s)?;
        let mut k = 2u32;
        while !self.negligible(s * k as f64, 1.0) {
            acc -= if k % 2 == 0 {
                self.log_sum(s * k as f64)?
            } else {
                self.log_sum_xi(s * k as f64)?
            };
            k += 1;
        }
        Ok(acc)
    }

    /// `sum_{p > P, p ≡ 1 mod 3} log p p^{-s}`.
    pub fn log_sum_one_mod_three(&self, s: Complex64) -> Result<Complex64> {
        Ok((self.log_sum(s)? + self.log_sum_xi(s)?) / 2.0)
    }

    /// `sum_{p > P, p ≡ 1 mod 3} 2 log p / ((p + 2)(p^w - 1))`, expanded in
    /// `p^{-1}` and `p^{-w}`.
    pub fn correction_tail(&self, w: Complex64) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut k = 1.0;
        while !self.negligible(1.0 + w * k, 2.0) {
            let mut j = 0;
            let mut coef: f64 = 2.0;
            while !self.negligible(1.0 + j as f64 + w * k, coef.abs()) {
                acc += coef * self.log_sum_one_mod_three(1.0 + j as f64 + w * k)?;
                coef *= -2.0;
                j += 1;
            }
            k += 1.0;
        }
        Ok(acc)
    }
}
