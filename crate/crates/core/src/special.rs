//! Complex digamma and log-gamma, Hurwitz/Riemann zeta by Euler–Maclaurin,
//! and the L-function of the real character modulo 3.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `B_2, B_4, ..., B_30`.
pub const BERNOULLI: [f64; 15] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
    -23749461029.0 / 870.0,
    8615841276005.0 / 14322.0,
];

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn check_pole(z: Complex64, function: &'static str) -> Result<()> {
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round() {
        return Err(Error::Pole {
            function,
            at: format!("{z}"),
        });
    }
    Ok(())
}

/// Psi(z) = Gamma'(z)/Gamma(z): upward recurrence to `Re z >= 10`, then the
/// asymptotic series.
pub fn digamma(z: Complex64) -> Result<Complex64> {
    check_pole(z, "digamma")?;
    let mut z = z;
    let mut acc = c(0.0, 0.0);
    while z.re < 10.0 {
        acc -= z.inv();
        z += 1.0;
    }
    let inv = z.inv();
    let inv2 = inv * inv;
    let mut series = c(0.0, 0.0);
    let mut pow = inv2;
    for (k, b) in BERNOULLI.iter().enumerate().take(10) {
        let n = 2.0 * (k + 1) as f64;
        series += pow * (b / n);
        pow *= inv2;
    }
    Ok(acc + z.ln() - inv * 0.5 - series)
}

/// Real digamma.
pub fn digamma_real(x: f64) -> Result<f64> {
    digamma(c(x, 0.0)).map(|z| z.re)
}

/// log Gamma(z) on the branch that is real on the positive axis and
/// continuous off the negative real axis.
pub fn log_gamma(z: Complex64) -> Result<Complex64> {
    check_pole(z, "log_gamma")?;
    let mut z = z;
    let mut acc = c(0.0, 0.0);
    while z.re < 10.0 {
        acc -= z.ln();
        z += 1.0;
    }
    let inv = z.inv();
    let inv2 = inv * inv;
    let mut series = c(0.0, 0.0);
    let mut pow = inv;
    for (k, b) in BERNOULLI.iter().enumerate().take(10) {
        let n = 2.0 * (k + 1) as f64;
        series += pow * (b / (n * (n - 1.0)));
        pow *= inv2;
    }
    Ok(acc + (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + series)
}

/// Euler–Maclaurin parameters shared by every zeta-type evaluation.
#[derive(Clone, Debug)]
pub struct EulerMaclaurin {
    /// Smallest shift `N`; the shift used is `max(min_shift, ceil(|Im s|))`.
    pub min_shift: usize,
    pub bernoulli: [f64; 15],
}

impl Default for EulerMaclaurin {
    fn default() -> Self {
        Self {
            min_shift: 15,
            bernoulli: BERNOULLI,
        }
    }
}

impl EulerMaclaurin {
    pub fn shift(&self, s: Complex64) -> usize {
        self.min_shift.max(s.im.abs().ceil() as usize)
    }

    /// Tail `sum_{k>=0} (x+k)^-s` minus the pole term `x^(1-s)/(s-1)`,
    /// without the derivative; `lx = ln x`. Also returns `x^-s`.
    pub(crate) fn tail_regular_value(&self, s: Complex64, x: f64, lx: f64) -> (Complex64, Complex64) {
        let xs = (-s * lx).exp();
        let mut val = xs * 0.5;
        let mut poly = s;
        let mut xpow = xs / x;
        let mut fact = 2.0;
        let inv_x2 = 1.0 / (x * x);
        for (j, b) in self.bernoulli.iter().enumerate() {
            let term = poly * xpow * (b / fact);
            val += term;
            if j > 1 && term.norm_sqr() < 1e-36 * val.norm_sqr() {
                break;
            }
            let j2 = 2.0 * (j + 1) as f64;
            poly = poly * (s + (j2 - 1.0)) * (s + j2);
            xpow *= inv_x2;
            fact *= (j2 + 1.0) * (j2 + 2.0);
        }
        (val, xs)
    }

    /// Tail `sum_{k>=0} (x+k)^-s` minus the pole term `x^(1-s)/(s-1)`,
    /// together with its s-derivative.
    fn tail_regular(&self, s: Complex64, x: f64) -> (Complex64, Complex64) {
        let lx = x.ln();
        let xs = (-s * lx).exp(); // x^-s
        let mut val = xs * 0.5;
        let mut der = -xs * lx * 0.5;
        // term_j = B_2j/(2j)! * P_j(s) * x^(-s-2j+1),  P_j = s(s+1)...(s+2j-2)
        let mut poly = s;
        let mut dpoly = c(1.0, 0.0);
        let mut xpow = xs / x; // x^(-s-1)
        let mut fact = 2.0; // (2j)!
        let inv_x2 = 1.0 / (x * x);
        for (j, b) in self.bernoulli.iter().enumerate() {
            let coef = b / fact;
            let term = poly * xpow * coef;
            let dterm = (dpoly - poly * lx) * xpow * coef;
            val += term;
            der += dterm;
            if term.norm() < 1e-18 * val.norm() && j > 2 {
                break;
            }
            let j2 = 2.0 * (j + 1) as f64;
            // P_{j+1} = P_j (s+2j-1)(s+2j)
            let f1 = s + (j2 - 1.0);
            let f2 = s + j2;
            let f = f1 * f2;
            dpoly = dpoly * f + poly * (f1 + f2);
            poly *= f;
            xpow *= inv_x2;
            fact *= (j2 + 1.0) * (j2 + 2.0);
        }
        (val, der)
    }
}

/// Hurwitz zeta `zeta(s, a)` and its s-derivative for `a > 0`, `s != 1`.
pub fn hurwitz_zeta_with_derivative(s: Complex64, a: f64, em: &EulerMaclaurin) -> Result<(Complex64, Complex64)> {
    if s == c(1.0, 0.0) {
        return Err(Error::Pole {
            function: "hurwitz_zeta",
            at: "s = 1".into(),
        });
    }
    if a <= 0.0 {
        return Err(Error::Domain {
            function: "hurwitz_zeta",
            detail: format!("a = {a} must be positive"),
        });
    }
    let n = em.shift(s);
    let mut val = c(0.0, 0.0);
    let mut der = c(0.0, 0.0);
    for k in 0..n {
        let lx = (k as f64 + a).ln();
        let t = (-s * lx).exp();
        val += t;
        der -= t * lx;
    }
    let x = n as f64 + a;
    let (tv, td) = em.tail_regular(s, x);
    let lx = x.ln();
    let sm1 = s - 1.0;
    let pole = (-sm1 * lx).exp() / sm1;
    val += tv + pole;
    der += td - pole * lx - pole / sm1;
    Ok((val, der))
}

pub fn hurwitz_zeta(s: Complex64, a: f64) -> Result<Complex64> {
    hurwitz_zeta_with_derivative(s, a, &EulerMaclaurin::default()).map(|(v, _)| v)
}

/// Riemann zeta for `Re s > 1`.
pub fn riemann_zeta(s: Complex64) -> Result<Complex64> {
    if s.re <= 1.0 {
        return Err(Error::Domain {
            function: "riemann_zeta",
            detail: format!("Re s = {} must exceed 1", s.re),
        });
    }
    hurwitz_zeta(s, 1.0)
}

pub fn riemann_zeta_real(s: f64) -> Result<f64> {
    riemann_zeta(c(s, 0.0)).map(|z| z.re)
}

/// `zeta'(s)/zeta(s)` for `Re s > 1`.
pub fn zeta_log_derivative(s: Complex64) -> Result<Complex64> {
    if s.re <= 1.0 {
        return Err(Error::Domain {
            function: "zeta_log_derivative",
            detail: format!("Re s = {} must exceed 1", s.re),
        });
    }
    let (v, d) = hurwitz_zeta_with_derivative(s, 1.0, &EulerMaclaurin::default())?;
    Ok(d / v)
}

/// `(e^w - 1)/w`, accurate near 0.
pub(crate) fn exprel(w: Complex64) -> Complex64 {
    if w.norm() < 1e-3 {
        let mut term = c(1.0, 0.0);
        let mut sum = c(1.0, 0.0);
        for k in 2..8 {
            term = term * w / k as f64;
            sum += term;
        }
        sum
    } else {
        (w.exp() - 1.0) / w
    }
}

/// `L(s, xi)` and its derivative for the real character `xi` modulo 3;
/// entire, so `s = 1` is allowed.
pub fn l_xi_with_derivative(s: Complex64, em: &EulerMaclaurin) -> (Complex64, Complex64) {
    // L = 3^-s (zeta(s,1/3) - zeta(s,2/3)); the pole terms of the two tails
    // combine into a regular difference.
    let n = em.shift(s);
    let mut val = c(0.0, 0.0);
    let mut der = c(0.0, 0.0);
    for k in 0..n {
        for (a, sign) in [(1.0 / 3.0, 1.0), (2.0 / 3.0, -1.0)] {
            let lx = (k as f64 + a).ln();
            let t = (-s * lx).exp() * sign;
            val += t;
            der -= t * lx;
        }
    }
    let x1 = n as f64 + 1.0 / 3.0;
    let x2 = n as f64 + 2.0 / 3.0;
    let (t1, d1) = em.tail_regular(s, x1);
    let (t2, d2) = em.tail_regular(s, x2);
    val += t1 - t2;
    der += d1 - d2;
    // (x1^u - x2^u)/(-u), u = 1 - s
    let u = c(1.0, 0.0) - s;
    let r = (x1 / x2).ln();
    let l2 = x2.ln();
    let x2u = (u * l2).exp();
    let e = exprel(u * r);
    let pole = -x2u * r * e;
    // d/ds of -(x1^u - x2^u)/u  with du/ds = -1
    let du = {
        let x1u = (u * x1.ln()).exp();
        let diff = x1u - x2u;
        let ddiff = x1u * x1.ln() - x2u * l2;
        if u.norm() < 1e-6 {
            // derivative of -x2^u r exprel(u r) in u, by a short expansion
            let h = 1e-5;
            let f = |uu: Complex64| -(uu * l2).exp() * r * exprel(uu * r);
            (f(u + h) - f(u - h)) / (2.0 * h)
        } else {
            -(ddiff * u - diff) / (u * u)
        }
    };
    val += pole;
    der -= du;
    let l3 = 3f64.ln();
    let p3 = (-s * l3).exp();
    (p3 * val, p3 * (der - val * l3))
}

pub fn l_xi(s: Complex64) -> Complex64 {
    l_xi_with_derivative(s, &EulerMaclaurin::default()).0
}

/// `L'(s, xi)/L(s, xi)`.
pub fn l_xi_log_derivative(s: Complex64) -> Complex64 {
    let (v, d) = l_xi_with_derivative(s, &EulerMaclaurin::default());
    d / v
}

/// `pi/2 - Si(x)` for `x >= 0`: the power series below 2, else the
/// continued fraction for `E_1(ix)`.
pub fn sine_integral_complement(x: f64) -> f64 {
    assert!(x >= 0.0);
    if x <= 2.0 {
        let mut term = x;
        let mut acc = x;
        let mut k = 0.0;
        while term.abs() > 1e-17 * acc.abs() {
            k += 1.0;
            term *= -x * x / ((2.0 * k) * (2.0 * k + 1.0));
            acc += term / (2.0 * k + 1.0);
        }
        return PI / 2.0 - acc;
    }
    // modified Lentz
    let tiny = 1e-300;
    let mut b = Complex64::new(1.0, x);
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = b.inv();
    let mut h = d;
    for i in 2..100_000 {
        let a = -((i - 1) as f64).powi(2);
        b += 2.0;
        d = (d * a + b).inv();
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    -(h * Complex64::new(x.cos(), -x.sin())).im
}
