//! I.i.d. random conductances and Monte Carlo variance studies.
//!
//! Sampling is counter based: the draw of the edge `(x, x+e_i)` is the
//! ChaCha8 output at a position fixed by `(seed, stream_index, x, i)`, so an
//! environment does not depend on traversal order or on the worker that
//! builds it.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{fit_loglog, LinearFit};
use crate::lattice::{Direction, Environment, Lattice, Topology};
use crate::rule::ScaleRule;
use crate::scheme::{build_mask, coefficients, estimate_from_correctors, Filter};
use crate::solver::{solve_corrector_set, SolveConfig};
use crate::sum::compensated_sum;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LawKind {
    /// `a` with probability `prob_a`, else `b`.
    TwoPoint { a: f64, b: f64, prob_a: f64 },
    /// Uniform on `[alpha, beta]`.
    Uniform { alpha: f64, beta: f64 },
}

/// Law of i.i.d. conductances together with the seed of the sampler.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvironmentLaw {
    pub kind: LawKind,
    pub dim: usize,
    pub seed: u64,
}

impl EnvironmentLaw {
    pub fn new(kind: LawKind, dim: usize, seed: u64) -> Result<Self> {
        let law = EnvironmentLaw { kind, dim, seed };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("dimension must be ≥ 1".into()));
        }
        let ok = match self.kind {
            LawKind::TwoPoint { a, b, prob_a } => {
                a > 0.0 && a <= b && b.is_finite() && (0.0..=1.0).contains(&prob_a)
            }
            LawKind::Uniform { alpha, beta } => alpha > 0.0 && alpha <= beta && beta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid law {}", self.kind)))
        }
    }

    /// Ellipticity bounds `(α, β)` of the support.
    pub fn bounds(&self) -> (f64, f64) {
        match self.kind {
            LawKind::TwoPoint { a, b, .. } => (a, b),
            LawKind::Uniform { alpha, beta } => (alpha, beta),
        }
    }

    /// Maps a uniform variate in `[0, 1)` to a conductance.
    fn quantile(&self, u: f64) -> f64 {
        match self.kind {
            LawKind::TwoPoint { a, b, prob_a } => {
                if u < prob_a {
                    a
                } else {
                    b
                }
            }
            LawKind::Uniform { alpha, beta } => (alpha + (beta - alpha) * u).min(beta),
        }
    }
}

impl fmt::Display for LawKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LawKind::TwoPoint { a, b, prob_a } => write!(f, "twopoint:{a}:{b}:{prob_a}"),
            LawKind::Uniform { alpha, beta } => write!(f, "uniform:{alpha}:{beta}"),
        }
    }
}

impl FromStr for LawKind {
    type Err = Error;

    /// `twopoint:a:b:p` or `uniform:alpha:beta`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("malformed law `{s}`")))
        };
        match parts.as_slice() {
            ["twopoint", a, b, p] => Ok(LawKind::TwoPoint {
                a: num(a)?,
                b: num(b)?,
                prob_a: num(p)?,
            }),
            ["uniform", a, b] => Ok(LawKind::Uniform {
                alpha: num(a)?,
                beta: num(b)?,
            }),
            _ => Err(Error::InvalidParameter(format!(
                "unknown law `{s}` (expected twopoint:a:b:p or uniform:alpha:beta)"
            ))),
        }
    }
}

/// Position of the edge `(x, x+e_i)` in the random stream. Coordinates are
/// shifted by one so that the inflow edges of a box get their own slots.
fn edge_key(lattice: &Lattice, x: &[i64], i: usize) -> u64 {
    let mut key: u64 = 0;
    for (j, &xj) in x.iter().enumerate() {
        let radix = lattice.extents()[j] as u64 + 2;
        let shifted = (xj + lattice.offset(j) + 1) as u64;
        key = key * radix + shifted;
    }
    key * lattice.dim() as u64 + i as u64
}

fn uniform_at(rng: &mut ChaCha8Rng, key: u64) -> f64 {
    // next_u64 consumes two 32-bit words
    rng.set_word_pos(2 * key as u128);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draws an environment on the given domain. `(law.seed, stream_index)`
/// determine the output completely.
pub fn sample_environment(
    law: &EnvironmentLaw,
    extents: &[usize],
    topology: Topology,
    stream_index: u64,
) -> Result<Environment> {
    law.validate()?;
    if extents.len() != law.dim {
        return Err(Error::GeometryMismatch(format!(
            "law of dimension {} sampled on {} axes",
            law.dim,
            extents.len()
        )));
    }
    let lattice = Lattice::new(extents.to_vec(), topology)?;
    let mut rng = ChaCha8Rng::seed_from_u64(law.seed);
    rng.set_stream(stream_index);
    let keyed = lattice.clone();
    Environment::from_fn(lattice, law.bounds(), |x, i| {
        law.quantile(uniform_at(&mut rng, edge_key(&keyed, x, i)))
    })
}

/// Parameters of a variance study.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub law: EnvironmentLaw,
    /// `μ` as a function of the mask half-width `L`.
    pub mu_rule: ScaleRule,
    /// Orders evaluated on the same samples.
    pub ks: Vec<usize>,
    /// Mask half-widths `L`, ascending.
    pub sizes: Vec<usize>,
    pub samples_per_size: usize,
    pub filter: Filter,
    pub xi: Direction,
    /// Torus side is `ceil(side_factor · L)`.
    pub side_factor: f64,
    pub solve: SolveConfig,
    /// Worker count; 0 uses rayon's default.
    pub threads: usize,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.law.validate()?;
        self.xi.require_unit()?;
        self.solve.validate()?;
        if self.xi.dim() != self.law.dim {
            return Err(Error::GeometryMismatch(
                "direction and law have different dimensions".into(),
            ));
        }
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "sizes must be non-empty and strictly ascending".into(),
            ));
        }
        if self.sizes[0] == 0 {
            return Err(Error::InvalidParameter("sizes must be ≥ 1".into()));
        }
        if self.samples_per_size < 2 {
            return Err(Error::InvalidParameter(
                "a variance needs at least two samples per size".into(),
            ));
        }
        if self.ks.is_empty() {
            return Err(Error::InvalidParameter("no scheme order requested".into()));
        }
        for &k in &self.ks {
            coefficients(k)?;
        }
        if !(self.side_factor >= 2.0 && self.side_factor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "side factor must be ≥ 2 so the mask fits the torus, got {}",
                self.side_factor
            )));
        }
        for &l in &self.sizes {
            let mu = self.mu_rule.eval(l as f64);
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "μ rule {} gives {mu} at L = {l}",
                    self.mu_rule
                )));
            }
        }
        Ok(())
    }

    pub fn side(&self, size: usize) -> usize {
        (self.side_factor * size as f64).ceil() as usize
    }

    pub fn stream_index(&self, size_index: usize, sample: usize) -> u64 {
        (size_index * self.samples_per_size + sample) as u64
    }

    /// `key=value` lines describing the study.
    pub fn echo(&self) -> Vec<(String, String)> {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        vec![
            ("law".into(), self.law.kind.to_string()),
            ("dim".into(), self.law.dim.to_string()),
            ("seed".into(), self.law.seed.to_string()),
            ("mu_rule".into(), self.mu_rule.to_string()),
            ("k".into(), join(&self.ks)),
            ("sizes".into(), join(&self.sizes)),
            ("samples".into(), self.samples_per_size.to_string()),
            ("filter".into(), self.filter.to_string()),
            ("xi".into(), self.xi.to_string()),
            ("side_factor".into(), self.side_factor.to_string()),
            ("tol".into(), format!("{:e}", self.solve.rel_tolerance)),
            ("threads".into(), self.threads.to_string()),
        ]
    }
}

/// One estimate `ξ·A_{μ,k,L}ξ` on one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRow {
    pub size: usize,
    pub k: usize,
    pub sample_index: usize,
    pub stream_index: u64,
    /// NaN when the sample failed.
    pub estimate: f64,
    pub residual: f64,
    pub failure: Option<String>,
}

/// Statistics of the estimates at one size and order.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeRow {
    pub size: usize,
    pub k: usize,
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Standard error of the mean.
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyResult {
    pub samples: Vec<SampleRow>,
    pub sizes: Vec<SizeRow>,
    /// Fitted slope of `log Var` against `log L`, per order.
    pub slopes: Vec<(usize, Option<LinearFit>)>,
    pub flagged: usize,
    pub threads: usize,
}

impl StudyResult {
    pub fn size_rows(&self, k: usize) -> impl Iterator<Item = &SizeRow> {
        self.sizes.iter().filter(move |r| r.k == k)
    }

    pub fn slope(&self, k: usize) -> Option<LinearFit> {
        self.slopes.iter().find(|(kk, _)| *kk == k).and_then(|(_, f)| *f)
    }
}

/// Mean and unbiased variance, summed in index order.
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, ss / (n - 1) as f64)
}

struct Job {
    size: usize,
    sample: usize,
    stream: u64,
}

fn run_sample(cfg: &StudyConfig, job: &Job) -> Vec<SampleRow> {
    let kmax = *cfg.ks.iter().max().expect("validated");
    let row = |k: usize, estimate: f64, residual: f64, failure: Option<String>| SampleRow {
        size: job.size,
        k,
        sample_index: job.sample,
        stream_index: job.stream,
        estimate,
        residual,
        failure,
    };
    let outcome = (|| -> Result<Vec<(f64, f64)>> {
        let side = cfg.side(job.size);
        let extents = vec![side; cfg.law.dim];
        let env = sample_environment(&cfg.law, &extents, Topology::Torus, job.stream)?;
        let mu = cfg.mu_rule.eval(job.size as f64);
        let mask = build_mask(cfg.filter, job.size as f64, env.lattice())?;
        let set = solve_corrector_set(&env, mu, kmax, &cfg.xi, &cfg.solve)?;
        cfg.ks
            .iter()
            .map(|&k| {
                let coeffs = coefficients(k)?;
                let sub = set.truncated(k);
                let value = estimate_from_correctors(&env, &sub, &coeffs, &mask)?;
                Ok((value, sub.max_residual()))
            })
            .collect()
    })();
    match outcome {
        Ok(values) => cfg
            .ks
            .iter()
            .zip(values)
            .map(|(&k, (v, r))| row(k, v, r, None))
            .collect(),
        Err(e) => cfg
            .ks
            .iter()
            .map(|&k| row(k, f64::NAN, f64::NAN, Some(e.to_string())))
            .collect(),
    }
}

/// Runs the estimator on `samples_per_size` independent tori per size and
/// reports per-size means and variances with fitted variance slopes.
/// Failed samples are flagged and excluded from the statistics.
pub fn variance_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let jobs: Vec<Job> = cfg
        .sizes
        .iter()
        .enumerate()
        .flat_map(|(si, &size)| {
            (0..cfg.samples_per_size).map(move |j| Job {
                size,
                sample: j,
                stream: cfg.stream_index(si, j),
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build worker pool: {e}")))?;
    let threads = pool.current_num_threads();
    // collect() keeps job order whatever the completion order
    let per_job: Vec<Vec<SampleRow>> =
        pool.install(|| jobs.par_iter().map(|job| run_sample(cfg, job)).collect());

    let flagged = per_job
        .iter()
        .filter(|rows| rows.iter().any(|r| r.failure.is_some()))
        .count();
    let mut samples = Vec::with_capacity(jobs.len() * cfg.ks.len());
    for &k in &cfg.ks {
        for rows in &per_job {
            samples.extend(rows.iter().filter(|r| r.k == k).cloned());
        }
    }

    let mut sizes = Vec::new();
    let mut slopes = Vec::new();
    for &k in &cfg.ks {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &size in &cfg.sizes {
            let values: Vec<f64> = samples
                .iter()
                .filter(|r| r.k == k && r.size == size && r.failure.is_none())
                .map(|r| r.estimate)
                .collect();
            let (mean, variance) = mean_variance(&values);
            let stderr = (variance / values.len() as f64).sqrt();
            if variance > 0.0 {
                xs.push(size as f64);
                ys.push(variance);
            }
            sizes.push(SizeRow {
                size,
                k,
                n: values.len(),
                mean,
                variance,
                stderr,
            });
        }
        let fit = if xs.len() >= 2 {
            Some(fit_loglog(&xs, &ys)?)
        } else {
            None
        };
        slopes.push((k, fit));
    }
    Ok(StudyResult {
        samples,
        sizes,
        slopes,
        flagged,
        threads,
    })
}

pub const SAMPLES_HEADER: &str = "size,k,sample_index,stream_index,estimate,residual";
pub const SUMMARY_HEADER: &str = "size,k,n,mean,variance,stderr";

fn echo_block(cfg: &StudyConfig) -> String {
    let mut s = String::new();
    for (k, v) in cfg.echo() {
        writeln!(s, "# {k}={v}").unwrap();
    }
    s
}

/// Per-sample CSV with the `#` config echo.
pub fn samples_csv(cfg: &StudyConfig, result: &StudyResult) -> String {
    let mut s = echo_block(cfg);
    writeln!(s, "{SAMPLES_HEADER}").unwrap();
    for r in &result.samples {
        writeln!(
            s,
            "{},{},{},{},{:.17e},{:.3e}",
            r.size, r.k, r.sample_index, r.stream_index, r.estimate, r.residual
        )
        .unwrap();
    }
    s
}

/// Summary CSV with the `#` config echo and the fitted slopes.
pub fn summary_csv(cfg: &StudyConfig, result: &StudyResult) -> String {
    let mut s = echo_block(cfg);
    writeln!(s, "## flagged={}", result.flagged).unwrap();
    for (k, fit) in &result.slopes {
        match fit {
            Some(f) => writeln!(
                s,
                "## variance_slope_k{k}={:.6} stderr={:.6}",
                f.slope, f.slope_stderr
            )
            .unwrap(),
            None => writeln!(s, "## variance_slope_k{k}=undefined").unwrap(),
        }
    }
    writeln!(s, "{SUMMARY_HEADER}").unwrap();
    for r in &result.sizes {
        writeln!(
            s,
            "{},{},{},{:.17e},{:.17e},{:.17e}",
            r.size, r.k, r.n, r.mean, r.variance, r.stderr
        )
        .unwrap();
    }
    s
}
