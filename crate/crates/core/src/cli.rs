//! Orchestration behind the `cubic-density` binary: run configuration,
//! artifacts with provenance, and the self-test battery.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::characters::{enumerate_family, enumerate_up_to, write_characters_csv, Family, Weight};
use crate::cubic_symbol::{symbol, symbol_power_oracle};
use crate::density::{
    averaged_density, empirical_density_one, explicit_formula_rhs, write_density_csv, DensityReport, PhiKind,
    TailConfig, TestFunction,
};
use crate::eisenstein::{primary_one, split_prime, EisensteinInt};
use crate::error::{Error, Result};
use crate::lfunction::{find_zeros_cached, write_zeros_csv, LFunction, ZeroCache, ZeroSet};
use crate::prediction::{
    corollary_breakdown, gamma_term, product_identity_check, ratios_a, ratios_c1_geometric, ratios_c1_series, ratios_s,
    theorem_prediction, GammaForm, PredictionBreakdown, RatiosS,
};
use crate::special::{digamma_real, hurwitz_zeta_with_derivative, l_xi_with_derivative, EulerMaclaurin, EULER_GAMMA};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "CUBIC_DENSITY_THREADS";

/// Every setting of a run. The numerical fields are written into each
/// artifact; thread count and paths are not, so outputs do not depend on
/// them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "X")]
    pub x: f64,
    pub sigma: f64,
    pub phi: PhiKind,
    pub weight: Weight,
    /// Family members have `q <= sqrt((m X)^2 + 49)`; see [`Weight::family_bound`].
    pub cutoff_multiplier: f64,
    #[serde(rename = "T")]
    pub height: f64,
    pub grid_step: f64,
    pub zero_tolerance: f64,
    pub tail: TailConfig,
    /// Order `M` of the expansion in `1/L`.
    pub corollary_order: usize,
    /// Accepted `|D* - prediction| / phi_hat(0)`.
    pub comparison_bound: f64,
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    #[serde(skip_serializing)]
    pub cache: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            x: 50.0,
            sigma: 0.5,
            phi: PhiKind::Bump,
            weight: Weight::Gaussian,
            cutoff_multiplier: 4.0,
            height: 40.0,
            grid_step: 0.05,
            zero_tolerance: 1e-10,
            tail: TailConfig::default(),
            corollary_order: 4,
            comparison_bound: 0.05,
            threads: None,
            cache: None,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| {
            Err(Error::Domain {
                function: "RunConfig",
                detail,
            })
        };
        if self.phi == PhiKind::Combination {
            return bad("phi must be fejer or bump".into());
        }
        if !(self.x > 0.0 && self.sigma > 0.0 && self.height > 0.0 && self.grid_step > 0.0) {
            return bad(format!(
                "X, sigma, T and grid_step must be positive (X = {}, sigma = {}, T = {}, grid_step = {})",
                self.x, self.sigma, self.height, self.grid_step
            ));
        }
        if self.cutoff_multiplier <= 0.0 || self.corollary_order == 0 {
            return bad("cutoff_multiplier and corollary_order must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the serialized numerical settings.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn test_function(&self) -> Result<TestFunction> {
        TestFunction::new(self.phi, self.sigma)
    }

    pub fn family(&self) -> Family {
        Family::new(self.x, self.weight, self.cutoff_multiplier)
    }

    fn zero_cache(&self) -> Result<Option<ZeroCache>> {
        self.cache.as_ref().map(ZeroCache::new).transpose()
    }

    fn output(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }
}

/// Thread count: the environment variable wins over the flag.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Parse(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(flag),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub config: RunConfig,
}

impl Provenance {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            version: VERSION.to_string(),
            config_hash: config.hash(),
            config: config.clone(),
        }
    }

    fn csv_comment(&self) -> String {
        format!("# cubic-density {} config {}\n", self.version, self.config_hash)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub provenance: Provenance,
    pub report: T,
}

fn write_json<T: Serialize>(path: &Path, config: &RunConfig, report: &T) -> Result<()> {
    let artifact = Artifact {
        provenance: Provenance::new(config),
        report,
    };
    let mut text = serde_json::to_string_pretty(&artifact)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_csv(path: &Path, config: &RunConfig, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Provenance::new(config).csv_comment().into_bytes();
    body(&mut buf)?;
    let mut f = BufWriter::new(fs::File::create(path)?);
    f.write_all(&buf)?;
    f.flush()?;
    Ok(())
}

/// `chars.csv`: the family with `1 < q <= m X`.
pub fn cmd_enumerate(config: &RunConfig) -> Result<PathBuf> {
    config.validate()?;
    let chars = enumerate_family(config.x, config.cutoff_multiplier);
    let path = config.output("chars.csv")?;
    write_csv(&path, config, |buf| write_characters_csv(buf, &chars))?;
    Ok(path)
}

/// Zero sets of every family member, through the cache when configured.
/// Every failing character is reported on stderr before the first error is
/// returned.
pub fn compute_zeros(config: &RunConfig, family: &Family) -> Result<Vec<ZeroSet>> {
    let cache = config.zero_cache()?;
    let results: Vec<Result<ZeroSet>> = family
        .characters
        .par_iter()
        .map(|chi| {
            let lf = LFunction::new(chi.clone());
            find_zeros_cached(
                &lf,
                config.height,
                config.grid_step,
                config.zero_tolerance,
                cache.as_ref(),
            )
        })
        .collect();
    let mut first_error = None;
    let mut out = Vec::with_capacity(results.len());
    for (chi, r) in family.characters.iter().zip(results) {
        match r {
            Ok(z) => out.push(z),
            Err(e) => {
                eprintln!("q = {} alpha = {}: {e}", chi.q, chi.alpha);
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// `zeros.csv`.
pub fn cmd_zeros(config: &RunConfig) -> Result<PathBuf> {
    config.validate()?;
    let zeros = compute_zeros(config, &config.family())?;
    let path = config.output("zeros.csv")?;
    write_csv(&path, config, |buf| write_zeros_csv(buf, &zeros))?;
    Ok(path)
}

fn density_report(config: &RunConfig, family: &Family) -> Result<DensityReport> {
    let zeros = compute_zeros(config, family)?;
    averaged_density(family, &zeros, &config.test_function()?, &config.tail)
}

/// `density.csv` (per character) and `density.json` (the average).
pub fn cmd_density(config: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    config.validate()?;
    let report = density_report(config, &config.family())?;
    let csv_path = config.output("density.csv")?;
    write_csv(&csv_path, config, |buf| write_density_csv(buf, &report))?;
    let json_path = config.output("density.json")?;
    write_json(&json_path, config, &report)?;
    Ok((csv_path, json_path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub theorem: PredictionBreakdown,
    pub ratios: PredictionBreakdown,
    pub corollary: PredictionBreakdown,
    pub ratios_s: RatiosS,
    /// `|sum w(q/X) epsilon(chi)| / W*(X)`.
    pub root_number_average: f64,
    pub characters: usize,
    pub total_weight: f64,
}

pub fn predictions(config: &RunConfig, family: &Family) -> Result<Predictions> {
    let phi = config.test_function()?;
    let s = ratios_s(&phi, family)?;
    Ok(Predictions {
        theorem: theorem_prediction(&phi, family)?,
        ratios: s.breakdown(&phi, config.x)?,
        corollary: corollary_breakdown(&phi, config.x, config.corollary_order, config.weight)?,
        ratios_s: s,
        root_number_average: family.root_number_average(),
        characters: family.characters.len(),
        total_weight: family.total_weight(),
    })
}

/// `predict.json`.
pub fn cmd_predict(config: &RunConfig) -> Result<PathBuf> {
    config.validate()?;
    let report = predictions(config, &config.family())?;
    let path = config.output("predict.json")?;
    write_json(&path, config, &report)?;
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub empirical: DensityReport,
    pub predictions: Predictions,
    /// `D* - theorem total`.
    pub difference: f64,
    /// `|difference| / phi_hat(0)`.
    pub relative_difference: f64,
    pub within_bound: bool,
    /// Largest per-character `tail_estimate`.
    pub max_tail_estimate: f64,
}

pub fn comparison(config: &RunConfig) -> Result<Comparison> {
    config.validate()?;
    let family = config.family();
    let empirical = density_report(config, &family)?;
    let predictions = predictions(config, &family)?;
    let difference = empirical.d_star - predictions.theorem.total;
    let relative_difference = difference.abs() / config.test_function()?.phihat(0.0);
    let max_tail_estimate = empirical
        .per_character
        .iter()
        .map(|r| r.density.tail_estimate)
        .fold(0.0, f64::max);
    Ok(Comparison {
        empirical,
        predictions,
        difference,
        relative_difference,
        within_bound: relative_difference < config.comparison_bound,
        max_tail_estimate,
    })
}

/// `report.json`.
pub fn cmd_compare(config: &RunConfig) -> Result<(PathBuf, Comparison)> {
    let report = comparison(config)?;
    let path = config.output("report.json")?;
    write_json(&path, config, &report)?;
    Ok((path, report))
}

// ---------------------------------------------------------------------------
// Self-test

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

/// Settings for [`selftest`]. `bernoulli_fault` replaces `B_{2k+2}` by its
/// negative in every Euler–Maclaurin evaluation, to show that the battery
/// notices a corrupted constant. With the default shift only `k <= 3`
/// changes any result at double precision.
#[derive(Clone, Debug, Default)]
pub struct SelftestOptions {
    pub bernoulli_fault: Option<usize>,
}

fn check(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn selftest(options: &SelftestOptions) -> SelftestReport {
    let mut em = EulerMaclaurin::default();
    if let Some(k) = options.bernoulli_fault {
        em.bernoulli[k] = -em.bernoulli[k];
    }
    let c = Complex64::new;
    let mut checks = Vec::new();

    checks.push(check("cubic reciprocity against the power-residue oracle", || {
        let mut mismatches = 0;
        let mut count = 0;
        for p in crate::primes::primes_up_to(300).into_iter().filter(|p| p % 3 == 1) {
            let pi = primary_one(&split_prime(p)?)?.1;
            for a in -6..=6 {
                for b in -6..=6 {
                    let alpha = EisensteinInt::new(a, b);
                    if alpha.is_zero() || pi.divides(&alpha) {
                        continue;
                    }
                    count += 1;
                    if symbol(&alpha, &pi)? != symbol_power_oracle(&alpha, &pi)? {
                        mismatches += 1;
                    }
                }
            }
        }
        Ok((mismatches == 0, format!("{mismatches} mismatches in {count} symbols")))
    }));

    checks.push(check("family size and Gauss sums up to 300", || {
        let chars = enumerate_up_to(300);
        let small = chars.iter().filter(|ch| ch.q <= 100).count();
        let worst = chars
            .iter()
            .map(|ch| (ch.gauss_sum().norm_sqr() - ch.q as f64).abs())
            .fold(0.0, f64::max);
        Ok((
            small == 26 && worst < 1e-9,
            format!("{small} members with q <= 100; max ||tau|^2 - q| = {worst:.2e}"),
        ))
    }));

    checks.push(check("digamma at 1/4", || {
        let err = (digamma_real(0.25)? + PI / 2.0 + 3.0 * 2f64.ln() + EULER_GAMMA).abs();
        Ok((err < 1e-12, format!("error {err:.2e}")))
    }));

    let em_ref = &em;
    checks.push(check("zeta(2), zeta'(2) and L(1, xi)", || {
        let (z, dz) = hurwitz_zeta_with_derivative(c(2.0, 0.0), 1.0, em_ref)?;
        // zeta'(2) = pi^2/6 (gamma + log 2 pi - 12 log A), A the Glaisher constant
        let glaisher = 1.282_427_129_100_622_6_f64;
        let dz_ref = PI * PI / 6.0 * (EULER_GAMMA + (2.0 * PI).ln() - 12.0 * glaisher.ln());
        let (l1, _) = l_xi_with_derivative(c(1.0, 0.0), em_ref);
        let errs = [
            (z.re - PI * PI / 6.0).abs(),
            (dz.re - dz_ref).abs(),
            (l1.re - PI / (3.0 * 3f64.sqrt())).abs(),
        ];
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        Ok((worst < 1e-12, format!("max error {worst:.2e}")))
    }));

    checks.push(check(
        "zeros of L(s, chi) for q = 7 and the functional equation",
        || {
            let chi = enumerate_up_to(7).into_iter().next().expect("q = 7 is in the family");
            let lf = LFunction::with_euler_maclaurin(chi, em_ref.clone());
            let zs = lf.find_zeros(20.0, 0.05, 1e-10)?;
            let residue = lf.completed(zs.ordinates[zs.ordinates.len() / 2]).im.abs();
            Ok((
                residue < 1e-6,
                format!(
                    "{} zeros on |t| <= 20; rotation residue {residue:.1e}",
                    zs.ordinates.len()
                ),
            ))
        },
    ));

    checks.push(check("explicit formula for q = 7", || {
        let chi = enumerate_up_to(7).into_iter().next().expect("q = 7 is in the family");
        let lf = LFunction::with_euler_maclaurin(chi.clone(), em_ref.clone());
        let zs = lf.find_zeros(40.0, 0.05, 1e-10)?;
        let phi = TestFunction::smooth_bump(0.8)?;
        let d = empirical_density_one(&zs, &phi, 50.0, &TailConfig::default())?;
        let rhs = explicit_formula_rhs(&chi, &phi, 50.0)?.total;
        let err = (d.value - rhs).abs();
        Ok((
            err < 5e-3,
            format!("zero side {:.8}, arithmetic side {rhs:.8}", d.value),
        ))
    }));

    checks.push(check("dual forms of C_1 and of the gamma term", || {
        let mut worst: f64 = 0.0;
        for z in [c(0.0, 0.0), c(0.1, 0.0), c(0.1, 0.2)] {
            worst = worst.max((ratios_c1_geometric(z, 20_000)? - ratios_c1_series(z, 20_000)?).norm());
        }
        let phi = TestFunction::fejer(1.0)?;
        let g = (gamma_term(&phi, 100.0, GammaForm::Digamma)? - gamma_term(&phi, 100.0, GammaForm::Integral)?).abs();
        Ok((
            worst < 1e-12 && g < 1e-8,
            format!("C_1 {worst:.1e}, gamma term {g:.1e}"),
        ))
    }));

    checks.push(check("theorem, ratios and S_X(f) routes at X = 1000", || {
        let family = Family::new(1000.0, Weight::Gaussian, 4.0);
        let phi = TestFunction::smooth_bump(0.8)?;
        let t = theorem_prediction(&phi, &family)?.total;
        let rs = ratios_s(&phi, &family)?;
        let r = rs.breakdown(&phi, family.x)?.total;
        let s = rs.total;
        let a = ratios_a(c(0.1, 0.2), c(0.1, 0.2))?.value;
        let ok = (t - r).abs() < 1e-10 && (t - s).abs() < 1e-8 && (a - 1.0).norm() < 1e-14;
        Ok((ok, format!("theorem {t:.12}, ratios S {s:.12}")))
    }));

    checks.push(check("local product identity, r = 1, 2, 3", || {
        let mut ok = true;
        for r in 1..=3 {
            ok &= product_identity_check(r)?.passed;
        }
        Ok((ok, "degrees 1 to 3 vanish, degree 4 does not".into()))
    }));

    let passed = checks.iter().all(|c| c.passed);
    SelftestReport { checks, passed }
}
