//! The family of primitive cubic characters `chi_alpha = (. / alpha)_3`,
//! indexed by square-free `alpha ≡ 1 mod 3` with no rational prime divisor.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubic_symbol::{psi, symbol, CubeRootOfUnity, Zero};
use crate::eisenstein::{factor, nu, EisensteinInt};
use crate::error::{Error, Result};
use crate::primes::prime_divisors;
use crate::special::{digamma_real, log_gamma};

/// Smallest conductor in the family.
pub const MIN_CONDUCTOR: u64 = 7;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CubicCharacter {
    pub alpha: EisensteinInt,
    pub q: u64,
    /// `(p, pi)` for each prime `pi | alpha`, `N(pi) = p`, ascending in `p`.
    pub primes: Vec<(u64, EisensteinInt)>,
}

impl CubicCharacter {
    pub fn new(alpha: EisensteinInt) -> Result<Self> {
        if !nu(&alpha)? || alpha.norm() <= 1 {
            return Err(Error::Domain {
                function: "CubicCharacter::new",
                detail: format!("{alpha} does not index a primitive cubic character"),
            });
        }
        let mut primes: Vec<(u64, EisensteinInt)> = factor(&alpha)?
            .prime_powers
            .into_iter()
            .map(|(pi, _)| (pi.norm(), pi))
            .collect();
        primes.sort_unstable_by_key(|(p, _)| *p);
        Ok(Self {
            alpha,
            q: alpha.norm(),
            primes,
        })
    }

    /// `chi_{conj alpha}`, the complex conjugate character.
    pub fn conj(&self) -> Self {
        let mut primes: Vec<_> = self.primes.iter().map(|(p, pi)| (*p, pi.conj())).collect();
        primes.sort_unstable_by_key(|(p, _)| *p);
        Self {
            alpha: self.alpha.conj(),
            q: self.q,
            primes,
        }
    }

    /// `chi(n) = (n / alpha)_3`, through the symbol descent.
    pub fn eval(&self, n: i64) -> CubeRootOfUnity {
        let r = n.rem_euclid(self.q as i64);
        symbol(&EisensteinInt::from(r), &self.alpha).expect("alpha is primary")
    }

    /// `chi(0), ..., chi(q-1)`, built prime by prime from a primitive root
    /// and combined across the prime factors of `q`.
    pub fn values(&self) -> Vec<CubeRootOfUnity> {
        let q = self.q as usize;
        let mut out = vec![CubeRootOfUnity::ONE; q];
        for (p, pi) in &self.primes {
            let p = *p as usize;
            let g = primitive_root(p as u64);
            let c = symbol(&EisensteinInt::from(g as i64), pi).expect("pi is primary");
            let mut local = vec![Zero; p];
            let mut x = 1usize;
            let mut v = CubeRootOfUnity::ONE;
            for _ in 0..p - 1 {
                local[x] = v;
                x = x * g as usize % p;
                v = v * c;
            }
            for (n, slot) in out.iter_mut().enumerate() {
                *slot = *slot * local[n % p];
            }
        }
        out
    }

    pub fn values_complex(&self) -> Vec<Complex64> {
        self.values().into_iter().map(|v| v.to_complex()).collect()
    }

    /// `tau(chi) = sum_{n mod q} chi(n) e(n/q)`.
    pub fn gauss_sum(&self) -> Complex64 {
        let q = self.q as f64;
        self.values()
            .into_iter()
            .enumerate()
            .filter(|(_, v)| *v != Zero)
            .map(|(n, v)| v.to_complex() * Complex64::from_polar(1.0, 2.0 * PI * n as f64 / q))
            .sum()
    }

    /// `epsilon(chi) = tau(chi)/sqrt(q)`, the root number of the even
    /// completion `(q/pi)^(s/2) Gamma(s/2) L(s, chi)`.
    pub fn root_number(&self) -> Complex64 {
        self.gauss_sum() / (self.q as f64).sqrt()
    }
}

/// Smallest primitive root modulo the prime `p`.
pub fn primitive_root(p: u64) -> u64 {
    if p == 2 {
        return 1;
    }
    let factors = prime_divisors(p - 1);
    (2..p)
        .find(|&g| factors.iter().all(|&f| pow_mod(g, (p - 1) / f, p) != 1))
        .expect("primes have primitive roots")
}

fn pow_mod(b: u64, mut e: u64, m: u64) -> u64 {
    let m = m as u128;
    let mut acc = 1u128;
    let mut b = b as u128 % m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc as u64
}

/// Every family member with `1 < N(alpha) <= bound`, ordered by `(norm, a, b)`.
pub fn enumerate_up_to(bound: u64) -> Vec<CubicCharacter> {
    let bf = bound as f64;
    let bmax = (4.0 * bf / 3.0).sqrt().floor() as i64 + 1;
    let mut alphas = Vec::new();
    for b in -bmax..=bmax {
        // a^2 - ab + b^2 <= bound  <=>  (a - b/2)^2 <= bound - 3b^2/4
        let r = bf - 0.75 * (b * b) as f64;
        if r < 0.0 {
            continue;
        }
        let lo = (0.5 * b as f64 - r.sqrt()).floor() as i64 - 1;
        let hi = (0.5 * b as f64 + r.sqrt()).ceil() as i64 + 1;
        for a in lo..=hi {
            let alpha = EisensteinInt::new(a, b);
            let n = alpha.norm();
            if n > 1 && n <= bound && alpha.is_one_mod_three() {
                alphas.push(alpha);
            }
        }
    }
    alphas.sort_unstable();
    alphas
        .into_par_iter()
        .filter(|alpha| nu(alpha).unwrap_or(false))
        .map(|alpha| CubicCharacter::new(alpha).expect("nu(alpha) = 1"))
        .collect()
}

/// Every family member with `1 < N(alpha) <= cutoff_multiplier * x`.
pub fn enumerate_family(x: f64, cutoff_multiplier: f64) -> Vec<CubicCharacter> {
    enumerate_up_to((cutoff_multiplier * x).floor() as u64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    /// `w(t) = exp(-t^2)`.
    #[default]
    Gaussian,
}

impl Weight {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Weight::Gaussian => (-t * t).exp(),
        }
    }

    /// Mellin transform `int_0^inf w(t) t^(s-1) dt`.
    pub fn mellin(&self, s: Complex64) -> Result<Complex64> {
        match self {
            Weight::Gaussian => Ok(log_gamma(s / 2.0)?.exp() / 2.0),
        }
    }

    /// `w'(1)/w(1)` for the Mellin transform `w`.
    pub fn mellin_log_derivative_at_one(&self) -> f64 {
        match self {
            Weight::Gaussian => digamma_real(0.5).expect("regular point") / 2.0,
        }
    }

    /// `t` beyond which `w(t) < eps * w(0)`.
    pub fn t_max(&self, eps: f64) -> f64 {
        match self {
            Weight::Gaussian => (-eps.ln()).sqrt(),
        }
    }

    /// Conductor bound for family sums at scale `x`: every dropped character
    /// has weight below `exp(-m^2)` times the weight of the smallest conductor.
    pub fn family_bound(&self, x: f64, cutoff_multiplier: f64) -> u64 {
        match self {
            Weight::Gaussian => {
                let m = cutoff_multiplier * x;
                let q0 = MIN_CONDUCTOR as f64;
                (m * m + q0 * q0).sqrt().floor() as u64
            }
        }
    }
}

/// A weighted family at scale `x`: the characters with their weights `w(q/x)`.
#[derive(Clone, Debug)]
pub struct Family {
    pub x: f64,
    pub weight: Weight,
    pub characters: Vec<CubicCharacter>,
    pub weights: Vec<f64>,
}

impl Family {
    pub fn new(x: f64, weight: Weight, cutoff_multiplier: f64) -> Self {
        let characters = enumerate_up_to(weight.family_bound(x, cutoff_multiplier));
        let weights = characters.iter().map(|c| weight.eval(c.q as f64 / x)).collect();
        Self {
            x,
            weight,
            characters,
            weights,
        }
    }

    /// `W*(x) = sum w(q/x)`.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum w(q/x) f(chi)` with a fixed-order reduction.
    pub fn weighted_sum<F>(&self, f: F) -> f64
    where
        F: Fn(&CubicCharacter) -> f64 + Sync + Send,
    {
        let terms: Vec<f64> = self.characters.par_iter().map(f).collect();
        terms.iter().zip(&self.weights).map(|(t, w)| t * w).sum()
    }

    pub fn weighted_sum_complex<F>(&self, f: F) -> Complex64
    where
        F: Fn(&CubicCharacter) -> Complex64 + Sync + Send,
    {
        let terms: Vec<Complex64> = self.characters.par_iter().map(f).collect();
        terms.iter().zip(&self.weights).map(|(t, w)| t * w).sum()
    }

    /// `sum w(q/x) psi_n(alpha)`.
    pub fn char_sum_psi(&self, n: u64) -> Complex64 {
        self.weighted_sum_complex(|c| psi(n, &c.alpha).expect("alpha is primary").to_complex())
    }

    /// `|sum w(q/x) epsilon(chi)| / W*(x)`.
    pub fn root_number_average(&self) -> f64 {
        self.weighted_sum_complex(|c| c.root_number()).norm() / self.total_weight()
    }
}

/// `W*(x)` with the default Gaussian cutoff.
pub fn total_weight(x: f64, weight: Weight) -> f64 {
    Family::new(x, weight, DEFAULT_CUTOFF_MULTIPLIER).total_weight()
}

pub const DEFAULT_CUTOFF_MULTIPLIER: f64 = 6.0;

/// Writes `a,b,q,epsilon_re,epsilon_im` rows.
pub fn write_characters_csv<W: Write>(out: W, chars: &[CubicCharacter]) -> Result<()> {
    let eps: Vec<Complex64> = chars.par_iter().map(|c| c.root_number()).collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["a", "b", "q", "epsilon_re", "epsilon_im"])?;
    for (c, e) in chars.iter().zip(eps) {
        w.write_record([
            c.alpha.a.to_string(),
            c.alpha.b.to_string(),
            c.q.to_string(),
            format!("{:.16e}", e.re),
            format!("{:.16e}", e.im),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubic_symbol::Power;
    use crate::quadrature::{integrate_half_line, QuadratureSpec};
    use crate::special::EULER_GAMMA;
    use proptest::prelude::*;

    /// Independent description of the family: q square-free with every prime
    /// factor ≡ 1 mod 3, and alpha ≡ 1 mod 3.
    fn oracle_family(bound: i64) -> Vec<(u64, i64, i64)> {
        let mut out = Vec::new();
        let r = 2 * (bound as f64).sqrt() as i64 + 2;
        for a in -r..=r {
            for b in -r..=r {
                let n = a * a - a * b + b * b;
                if n <= 1 || n > bound || (a - 1) % 3 != 0 || b % 3 != 0 {
                    continue;
                }
                let mut m = n;
                let mut ok = true;
                let mut d = 2;
                while d * d <= m {
                    if m % d == 0 {
                        m /= d;
                        if m % d == 0 || d % 3 != 1 {
                            ok = false;
                        }
                    } else {
                        d += 1;
                    }
                }
                if m > 1 && m % 3 != 1 {
                    ok = false;
                }
                if ok {
                    out.push((n as u64, a, b));
                }
            }
        }
        out.sort_unstable();
        out
    }

    #[test]
    fn family_up_to_100() {
        let fam = enumerate_family(100.0, 1.0);
        let oracle = oracle_family(100);
        assert_eq!(fam.len(), 26);
        assert_eq!(
            fam.iter().map(|c| (c.q, c.alpha.a, c.alpha.b)).collect::<Vec<_>>(),
            oracle
        );
        assert_eq!(fam[0].q, 7);
        assert_eq!(fam.iter().filter(|c| c.q == 91).count(), 4);
        for c in &fam {
            assert!(fam.iter().any(|d| d.alpha == c.alpha.conj()));
        }
        assert!(enumerate_family(1.0, 6.0).is_empty());
    }

    #[test]
    fn family_matches_oracle_to_2000() {
        let fam = enumerate_up_to(2000);
        let oracle = oracle_family(2000);
        assert_eq!(
            fam.iter().map(|c| (c.q, c.alpha.a, c.alpha.b)).collect::<Vec<_>>(),
            oracle
        );
        let mut qs: Vec<u64> = fam.iter().map(|c| c.q).collect();
        let mut cq: Vec<u64> = fam.iter().map(|c| c.conj().q).collect();
        qs.sort_unstable();
        cq.sort_unstable();
        assert_eq!(qs, cq);
    }

    #[test]
    fn value_table_matches_symbol() {
        for c in enumerate_up_to(1000) {
            let table = c.values();
            for n in 0..c.q {
                assert_eq!(table[n as usize], c.eval(n as i64), "{} n={n}", c.alpha);
            }
            assert_eq!(c.eval(-1), CubeRootOfUnity::ONE);
            let conj = c.conj().values();
            for n in 0..c.q as usize {
                assert_eq!(conj[n], table[n].conj());
            }
        }
    }

    #[test]
    fn character_axioms() {
        for c in enumerate_up_to(400) {
            let t = c.values();
            let q = c.q as usize;
            for n in 0..q {
                assert_eq!(t[n] == Zero, gcd(n as u64, c.q) > 1);
                assert!(matches!(t[n].pow(3), Power(0) | Zero));
                for m in [2usize, 5, 11] {
                    assert_eq!(t[n * m % q], t[n] * t[m % q]);
                }
            }
            assert_eq!(c.eval(1), CubeRootOfUnity::ONE);
            assert_eq!(c.eval(c.q as i64 + 5), c.eval(5));
        }
    }

    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }

    #[test]
    fn gauss_sums() {
        for c in enumerate_up_to(1000) {
            let tau = c.gauss_sum();
            assert!((tau.norm_sqr() - c.q as f64).abs() < 1e-9, "{}", c.alpha);
            let prod = tau * c.conj().gauss_sum();
            assert!((prod - Complex64::new(c.q as f64, 0.0)).norm() < 1e-9);
            assert!((c.root_number().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_weight_mellin_data() {
        let spec = QuadratureSpec::with_tol(1e-13);
        let w = Weight::Gaussian;
        let (m1, _) = integrate_half_line(|t| w.eval(t), 0.0, &spec).unwrap();
        let (d1, _) = integrate_half_line(|t| w.eval(t) * t.ln(), 0.0, &spec).unwrap();
        let closed = w.mellin(Complex64::new(1.0, 0.0)).unwrap().re;
        assert!((m1 - closed).abs() < 1e-10);
        assert!((closed - PI.sqrt() / 2.0).abs() < 1e-12);
        let ld = w.mellin_log_derivative_at_one();
        assert!((d1 / m1 - ld).abs() < 1e-10);
        assert!((ld - (-EULER_GAMMA - 2.0 * 2f64.ln()) / 2.0).abs() < 1e-12);
        let (m3, _) = integrate_half_line(|t| w.eval(t) * t * t, 0.0, &spec).unwrap();
        assert!((m3 - w.mellin(Complex64::new(3.0, 0.0)).unwrap().re).abs() < 1e-10);
    }

    #[test]
    fn total_weight_at_small_x() {
        let w1 = total_weight(1.0, Weight::Gaussian);
        assert!((w1 / (2.0 * (-49f64).exp()) - 1.0).abs() < 1e-12);
        let mut prev = 0.0;
        for x in [1.0, 5.0, 10.0, 20.0, 40.0, 80.0] {
            let w = total_weight(x, Weight::Gaussian);
            assert!(w >= prev);
            prev = w;
        }
        let fam = Family::new(30.0, Weight::Gaussian, 6.0);
        let direct: f64 = fam
            .characters
            .iter()
            .map(|c| (-(c.q as f64 / 30.0).powi(2)).exp())
            .sum();
        assert!((fam.total_weight() - direct).abs() < 1e-12);
        assert!((fam.char_sum_psi(1).re - direct).abs() < 1e-12);
    }

    #[test]
    fn csv_export() {
        let fam = enumerate_up_to(100);
        let mut buf = Vec::new();
        write_characters_csv(&mut buf, &fam).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("a,b,q,epsilon_re,epsilon_im"));
        assert_eq!(lines.count(), 26);
    }

    proptest! {
        #[test]
        fn primitive_root_generates(idx in 0usize..200) {
            let p = crate::primes::primes_up_to(2000)[idx + 1];
            let g = primitive_root(p);
            let mut x = 1u64;
            let mut seen = std::collections::HashSet::new();
            for _ in 0..p - 1 {
                seen.insert(x);
                x = x * g % p;
            }
            prop_assert_eq!(seen.len() as u64, p - 1);
        }
    }
}
