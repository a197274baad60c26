//! `L(s, chi)` through Hurwitz-style Euler–Maclaurin sums, the completed
//! function on the critical line, and a zero finder checked against the
//! argument principle.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::characters::CubicCharacter;
use crate::error::{Error, Result};
use crate::special::{exprel, log_gamma, EulerMaclaurin};

/// Relative size of the imaginary part tolerated after the root-number rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-7;

/// Points per scan chunk; each chunk reseeds the `n^-it` recurrence.
const CHUNK: usize = 256;

fn cis(x: f64) -> Complex64 {
    Complex64::new(x.cos(), x.sin())
}

/// One character's L-function with its value table and root number.
#[derive(Clone, Debug)]
pub struct LFunction {
    pub chi: CubicCharacter,
    values: Vec<Complex64>,
    /// Residues `a` with `chi(a) != 0`.
    support: Vec<usize>,
    pub epsilon: Complex64,
    /// `epsilon^(-1/2)`, principal branch.
    rotation: Complex64,
    log_q: f64,
    em: EulerMaclaurin,
}

impl LFunction {
    pub fn new(chi: CubicCharacter) -> Self {
        Self::with_euler_maclaurin(chi, EulerMaclaurin::default())
    }

    pub fn with_euler_maclaurin(chi: CubicCharacter, em: EulerMaclaurin) -> Self {
        let values = chi.values_complex();
        let support = (1..values.len()).filter(|&a| values[a].norm_sqr() > 0.0).collect();
        let epsilon = chi.root_number();
        let rotation = epsilon.sqrt().inv();
        let log_q = (chi.q as f64).ln();
        Self {
            chi,
            values,
            support,
            epsilon,
            rotation,
            log_q,
            em,
        }
    }

    pub fn q(&self) -> u64 {
        self.chi.q
    }

    /// `L(s, chi) = sum_{n < Nq} chi(n) n^-s + q^-s sum_a chi(a) zeta_N(s, a/q)`,
    /// the last factor being the Euler–Maclaurin tail of the Hurwitz zeta
    /// function beyond `N = max(min_shift, ceil|Im s|)` terms.
    pub fn l_value(&self, s: Complex64) -> Complex64 {
        let q = self.q() as usize;
        let n_shift = self.em.shift(s);
        let mut direct = Complex64::new(0.0, 0.0);
        for k in 0..n_shift {
            for &a in &self.support {
                let n = (k * q + a) as f64;
                direct += self.values[a] * (-s * n.ln()).exp();
            }
        }
        direct + self.tail(s, n_shift)
    }

    fn tail(&self, s: Complex64, n_shift: usize) -> Complex64 {
        let q = self.q() as f64;
        let nf = n_shift as f64;
        let near_pole = (s - 1.0).norm() < 1e-3;
        let mut acc = Complex64::new(0.0, 0.0);
        for &a in &self.support {
            let x = nf + a as f64 / q;
            let lx = x.ln();
            let (t, xs) = self.em.tail_regular_value(s, x, lx);
            let pole = if near_pole {
                // x^(1-s)/(s-1) - N^(1-s)/(s-1); the subtracted part sums to 0
                let u = Complex64::new(1.0, 0.0) - s;
                let r = (x / nf).ln();
                -(u * nf.ln()).exp() * r * exprel(u * r)
            } else {
                xs * x / (s - 1.0)
            };
            acc += self.values[a] * (t + pole);
        }
        acc * (-s * self.log_q).exp()
    }

    /// `theta(t) = (t/2) log(q/pi) + Im log Gamma(1/4 + it/2)`.
    pub fn theta(&self, t: f64) -> f64 {
        let lg = log_gamma(Complex64::new(0.25, 0.5 * t)).expect("regular point");
        0.5 * t * (self.log_q - PI.ln()) + lg.im
    }

    /// `Lambda(1/2+it) = (q/pi)^(s/2) Gamma(s/2) L(s, chi)`.
    pub fn completed(&self, t: f64) -> Complex64 {
        let s = Complex64::new(0.5, t);
        let lg = log_gamma(s / 2.0).expect("regular point");
        (s / 2.0 * (self.log_q - PI.ln()) + lg).exp() * self.l_value(s)
    }

    fn rotated(&self, t: f64, l: Complex64) -> Complex64 {
        self.rotation * cis(self.theta(t)) * l
    }

    fn checked_real(t: f64, w: Complex64) -> Result<f64> {
        if w.im.abs() > ROTATION_TOLERANCE * w.norm().max(1.0) {
            return Err(Error::RotationResidue { t, residue: w.im });
        }
        Ok(w.re)
    }

    /// `Re[epsilon^(-1/2) Lambda(1/2+it)]` divided by the positive factor
    /// `(q/pi)^(1/4) |Gamma(1/4+it/2)|`, so it stays O(1) at any height.
    /// Fails if the rotated value is not real to [`ROTATION_TOLERANCE`].
    pub fn z_function(&self, t: f64) -> Result<f64> {
        let w = self.rotated(t, self.l_value(Complex64::new(0.5, t)));
        Self::checked_real(t, w)
    }

    fn z_unchecked(&self, t: f64) -> f64 {
        self.rotated(t, self.l_value(Complex64::new(0.5, t))).re
    }

    /// Scaled `Z` on the uniform grid `t0 + k h`, `k < count`, using the
    /// recurrence `n^-i(t+h) = n^-it n^-ih` inside chunks.
    pub fn scan(&self, t0: f64, h: f64, count: usize) -> Result<Vec<f64>> {
        let chunks: Vec<(usize, usize)> = (0..count).step_by(CHUNK).map(|i| (i, (i + CHUNK).min(count))).collect();
        let parts: Vec<Result<Vec<f64>>> = chunks
            .par_iter()
            .map(|&(i0, i1)| self.scan_chunk(t0, h, i0, i1))
            .collect();
        let mut out = Vec::with_capacity(count);
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    fn scan_chunk(&self, t0: f64, h: f64, i0: usize, i1: usize) -> Result<Vec<f64>> {
        let q = self.q() as usize;
        let ta = t0 + h * i0 as f64;
        let tb = t0 + h * (i1 - 1) as f64;
        let tmax = ta.abs().max(tb.abs());
        let n_shift = self.em.shift(Complex64::new(0.5, tmax));
        let mut terms = Vec::with_capacity(n_shift * self.support.len());
        let mut steps = Vec::with_capacity(terms.capacity());
        for k in 0..n_shift {
            for &a in &self.support {
                let n = (k * q + a) as f64;
                let ln = n.ln();
                terms.push(self.values[a] * cis(-ta * ln) / n.sqrt());
                steps.push(cis(-h * ln));
            }
        }
        let mut out = Vec::with_capacity(i1 - i0);
        for i in i0..i1 {
            let t = t0 + h * i as f64;
            let s = Complex64::new(0.5, t);
            let direct: Complex64 = terms.iter().sum();
            let l = direct + self.tail(s, n_shift);
            out.push(Self::checked_real(t, self.rotated(t, l))?);
            for (z, r) in terms.iter_mut().zip(&steps) {
                *z *= r;
            }
        }
        Ok(out)
    }

    /// `arg L(1/2+it)` continued along `Re s` from 2 (where `Re L > 0`) down to 1/2.
    pub fn arg_on_line(&self, t: f64) -> f64 {
        let eval = |sigma: f64| self.l_value(Complex64::new(sigma, t));
        let start = eval(2.0);
        let mut total = start.arg();
        let pieces = 24;
        let mut prev_sigma = 2.0;
        let mut prev = start;
        for k in 1..=pieces {
            let sigma = 2.0 - 1.5 * k as f64 / pieces as f64;
            let (delta, end) = self.arg_change(prev_sigma, prev, sigma, &eval, 0);
            total += delta;
            prev_sigma = sigma;
            prev = end;
        }
        total
    }

    fn arg_change(
        &self,
        s0: f64,
        l0: Complex64,
        s1: f64,
        eval: &impl Fn(f64) -> Complex64,
        depth: u32,
    ) -> (f64, Complex64) {
        let l1 = eval(s1);
        let d = (l1 / l0).arg();
        if d.abs() < PI / 4.0 || depth > 16 {
            return (d, l1);
        }
        let mid = 0.5 * (s0 + s1);
        let (d0, lm) = self.arg_change(s0, l0, mid, eval, depth + 1);
        let (d1, _) = self.arg_change(mid, lm, s1, eval, depth + 1);
        (d0 + d1, l1)
    }

    /// Argument-principle count of zeros with `t1 < gamma < t2` on the
    /// critical line, before rounding.
    pub fn count_between(&self, t1: f64, t2: f64) -> f64 {
        (self.theta(t2) - self.theta(t1) + self.arg_on_line(t2) - self.arg_on_line(t1)) / PI
    }

    /// Zeros of `Z` on `[-T, T]`: grid scan, Brent refinement, and a rescan
    /// at half the step (at most twice) until the count matches the argument
    /// principle.
    pub fn find_zeros(&self, height: f64, grid_step: f64, tolerance: f64) -> Result<ZeroSet> {
        let s_plus = self.arg_on_line(height) / PI;
        let s_minus = self.arg_on_line(-height) / PI;
        let count_estimate = (self.theta(height) - self.theta(-height)) / PI + s_plus - s_minus;
        let expected = count_estimate.round() as i64;
        let mut step = grid_step;
        let mut found = Vec::new();
        for refinement in 0..=2 {
            found = self.zeros_on_grid(height, step, tolerance)?;
            if found.len() as i64 == expected {
                return Ok(ZeroSet {
                    a: self.chi.alpha.a,
                    b: self.chi.alpha.b,
                    q: self.q(),
                    height,
                    grid_step,
                    final_step: step,
                    tolerance,
                    refinements: refinement,
                    ordinates: found,
                    count_estimate,
                    s_plus,
                    s_minus,
                });
            }
            step /= 2.0;
        }
        Err(Error::ZeroCountMismatch {
            character: self.chi.alpha.to_string(),
            found: found.len(),
            expected,
            height,
        })
    }

    fn zeros_on_grid(&self, height: f64, step: f64, tolerance: f64) -> Result<Vec<f64>> {
        let n = (2.0 * height / step).ceil() as usize;
        let h = 2.0 * height / n as f64;
        let grid: Vec<f64> = (0..=n).map(|k| -height + h * k as f64).collect();
        let z = self.scan(-height, h, n + 1)?;
        let brackets: Vec<(f64, f64, f64, f64)> = (0..n)
            .filter(|&k| z[k] != 0.0 && z[k].signum() != z[k + 1].signum() && z[k + 1] != 0.0)
            .map(|k| (grid[k], grid[k + 1], z[k], z[k + 1]))
            .collect();
        let mut zeros: Vec<f64> = brackets
            .par_iter()
            .map(|&(a, b, fa, fb)| brent(|t| self.z_unchecked(t), a, b, fa, fb, tolerance))
            .collect();
        zeros.extend((0..=n).filter(|&k| z[k] == 0.0).map(|k| grid[k]));
        zeros.sort_by(f64::total_cmp);
        Ok(zeros)
    }
}

/// Brent's method on a bracket with `f(a) f(b) < 0`.
pub fn brent(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, tol: f64) -> f64 {
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut qq);
            if a == c {
                p = 2.0 * xm * s;
                qq = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                qq = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                qq = -qq;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * qq - (tol1 * qq).abs()).min((e * qq).abs()) {
                e = d;
                d = p / qq;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    b
}

/// Ordinates of the zeros of one `L(s, chi)` with `|gamma| <= height`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroSet {
    pub a: i64,
    pub b: i64,
    pub q: u64,
    pub height: f64,
    pub grid_step: f64,
    /// Step of the scan that produced the list, after any refinements.
    pub final_step: f64,
    pub tolerance: f64,
    pub refinements: u32,
    pub ordinates: Vec<f64>,
    /// Argument-principle count before rounding.
    pub count_estimate: f64,
    /// `S(T) = arg L(1/2+iT)/pi` and `S(-T)`.
    pub s_plus: f64,
    pub s_minus: f64,
}

impl ZeroSet {
    pub fn expected_count(&self) -> i64 {
        self.count_estimate.round() as i64
    }
}

/// Writes `a,b,q,gamma` rows, gamma ascending within each character.
pub fn write_zeros_csv<W: Write>(out: W, sets: &[ZeroSet]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["a", "b", "q", "gamma"])?;
    for z in sets {
        for g in &z.ordinates {
            w.write_record([z.a.to_string(), z.b.to_string(), z.q.to_string(), format!("{g:.16e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Directory of zero sets keyed by `(a, b, T, grid_step, tolerance)`.
#[derive(Clone, Debug)]
pub struct ZeroCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    zeros: ZeroSet,
}

impl ZeroCache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    fn key(a: i64, b: i64, height: f64, grid_step: f64, tolerance: f64) -> String {
        format!("a={a};b={b};T={height:?};step={grid_step:?};tol={tolerance:?}")
    }

    fn path(&self, a: i64, b: i64, key: &str) -> PathBuf {
        let digest = hex::encode(Sha256::digest(key.as_bytes()));
        self.dir.join(format!("zeros_{a}_{b}_{}.json", &digest[..16]))
    }

    pub fn load(&self, a: i64, b: i64, height: f64, grid_step: f64, tolerance: f64) -> Option<ZeroSet> {
        let key = Self::key(a, b, height, grid_step, tolerance);
        let text = fs::read_to_string(self.path(a, b, &key)).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        (entry.key == key).then_some(entry.zeros)
    }

    /// Writes to a temporary file and renames it into place.
    pub fn store(&self, zeros: &ZeroSet) -> Result<()> {
        let key = Self::key(zeros.a, zeros.b, zeros.height, zeros.grid_step, zeros.tolerance);
        let path = self.path(zeros.a, zeros.b, &key);
        let entry = CacheEntry {
            key,
            zeros: zeros.clone(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(serde_json::to_string(&entry)?.as_bytes())?;
        tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }
}

/// [`LFunction::find_zeros`] through an optional cache.
pub fn find_zeros_cached(
    lf: &LFunction,
    height: f64,
    grid_step: f64,
    tolerance: f64,
    cache: Option<&ZeroCache>,
) -> Result<ZeroSet> {
    let (a, b) = (lf.chi.alpha.a, lf.chi.alpha.b);
    if let Some(hit) = cache.and_then(|c| c.load(a, b, height, grid_step, tolerance)) {
        return Ok(hit);
    }
    let zeros = lf.find_zeros(height, grid_step, tolerance)?;
    if let Some(c) = cache {
        c.store(&zeros)?;
    }
    Ok(zeros)
}
