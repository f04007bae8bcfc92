//! `homog`: coefficient tables, estimates, spectral reports, convergence and
//! variance studies for higher-order homogenized-coefficient approximations.

mod config;
mod env;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use homog_core::convergence::{self, ConvergenceConfig};
use homog_core::montecarlo::{self, StudyConfig};
use homog_core::scheme::{to_f64, CSV_HEADER};
use homog_core::{
    coefficients, estimate, exact_homogenized, spectral_measure, Direction, EnvironmentLaw,
    EstimateParams, Filter, LawKind, ScaleRule, SolveConfig,
};

use crate::env::EnvSource;

#[derive(Parser, Debug)]
#[command(name = "homog", version, about, args_override_self = true)]
struct Cli {
    /// Worker threads (0: all cores). `--threads 1` is bit-reproducible.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct EnvArgs {
    /// `builtin:checkerboard4`, `homogeneous:C:NxN`, `law:KIND[:NxN]`, or a file.
    #[arg(long)]
    env: String,
    /// Seed for `law:` environments.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stream index for `law:` environments.
    #[arg(long, default_value_t = 0)]
    stream: u64,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum CoeffFormat {
    Rational,
    Decimal,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ReportFormat {
    Kv,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the coefficient tables c, a, η, ν of the order-k scheme.
    Coeffs {
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "rational")]
        format: CoeffFormat,
    },
    /// Exact ξ·A_hom ξ of a periodic cell.
    Exact {
        #[command(flatten)]
        env: EnvArgs,
        /// Direction, e.g. `1,0` (normalized).
        #[arg(long, allow_hyphen_values = true)]
        xi: Option<String>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// One estimate ξ·A_{μ,k,R,L}ξ.
    #[command(allow_negative_numbers = true)]
    Estimate {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        k: usize,
        /// Box side; a periodic cell is restricted to Q_R. Without it the
        /// environment's own domain is used.
        #[arg(long = "R")]
        r: Option<usize>,
        /// Mask half-width.
        #[arg(long = "L")]
        l: f64,
        #[arg(long, default_value = "smooth-bump")]
        filter: String,
        #[arg(long, allow_hyphen_values = true)]
        xi: Option<String>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, value_enum, default_value = "kv")]
        format: ReportFormat,
    },
    /// Spectral measure of the local drift on a periodic cell.
    Spectrum {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, allow_hyphen_values = true)]
        xi: Option<String>,
        /// Write the (λ, w) CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dirichlet-box convergence towards the exact A_hom of a periodic cell.
    Convergence {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value = "1,2")]
        k: String,
        /// Sizes R (in units, see --unit).
        #[arg(long, default_value = "24,36,54,81,122,183")]
        sizes: String,
        #[arg(long = "mu-rule", default_value = "250*R^-1.5")]
        mu_rule: String,
        /// Mask half-width as a function of R (R/6: support of side R/3).
        #[arg(long = "l-rule", default_value = "R/6")]
        l_rule: String,
        /// Lattice sites per unit of R, or `cell` for the cell period.
        #[arg(long, default_value = "cell")]
        unit: String,
        #[arg(long, default_value = "smooth-bump")]
        filter: String,
        #[arg(long, allow_hyphen_values = true)]
        xi: Option<String>,
        /// Errors at or below this are excluded from slope fits.
        #[arg(long, default_value_t = convergence::DEFAULT_FLOOR)]
        floor: f64,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo variance study on random tori.
    Variance {
        /// `twopoint:a:b:p` or `uniform:alpha:beta`.
        #[arg(long)]
        law: String,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "1")]
        k: String,
        /// Mask half-widths L.
        #[arg(long)]
        sizes: String,
        #[arg(long)]
        samples: usize,
        #[arg(long = "mu-rule", default_value = "L^-2")]
        mu_rule: String,
        /// Torus side over L.
        #[arg(long = "side-factor", default_value_t = 2.0)]
        side_factor: f64,
        #[arg(long, default_value = "smooth-bump")]
        filter: String,
        #[arg(long, allow_hyphen_values = true)]
        xi: Option<String>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Per-sample CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary CSV (stdout if absent).
        #[arg(long = "summary-out")]
        summary_out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // bad input → 2, numerical failure or I/O → 1
            let code = e
                .chain()
                .find_map(|c| match c.downcast_ref::<homog_core::Error>() {
                    Some(h) => Some(if h.is_numerical() { 1 } else { 2 }),
                    None => c.is::<Usage>().then_some(2),
                })
                .unwrap_or(1);
            ExitCode::from(code)
        }
    }
}

/// Invalid command-line input detected by the front end itself.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Usage(msg.into()).into())
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse::<T>()
        .or_else(|e| usage(format!("invalid {what} `{s}`: {e}")))
}

fn parse_list(what: &str, s: &str) -> anyhow::Result<Vec<usize>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| parse::<usize>(what, t))
        .collect()
}

fn parse_xi(s: Option<&str>, dim: usize) -> anyhow::Result<Direction> {
    match s {
        None => Ok(Direction::unit(0, dim)),
        Some(s) => {
            let comps: Vec<f64> = s
                .split([',', ';'])
                .map(|t| parse::<f64>("direction component", t))
                .collect::<anyhow::Result<_>>()?;
            if comps.len() != dim {
                return usage(format!(
                    "direction `{s}` has {} components, environment has dimension {dim}",
                    comps.len()
                ));
            }
            Ok(Direction::normalized(comps)?)
        }
    }
}

fn solve_config(tol: f64) -> anyhow::Result<SolveConfig> {
    let cfg = SolveConfig::with_tolerance(tol);
    cfg.validate()?;
    Ok(cfg)
}

fn write_output(path: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("configuring the worker pool")?;
    match cli.command {
        Command::Coeffs { k, format } => cmd_coeffs(k, format),
        Command::Exact { env, xi, tol } => {
            let cfg = solve_config(tol)?;
            let cell = EnvSource::parse(&env.env, env.seed)?.periodic_cell(env.stream)?;
            let xi = parse_xi(xi.as_deref(), cell.dim())?;
            let h = exact_homogenized(&cell, &xi, &cfg)?;
            println!("{}", h.value);
            Ok(())
        }
        Command::Estimate {
            env,
            mu,
            k,
            r,
            l,
            filter,
            xi,
            tol,
            format,
        } => {
            let cfg = solve_config(tol)?;
            let filter: Filter = parse("filter", &filter)?;
            coefficients(k)?;
            if !(mu > 0.0 && mu.is_finite()) {
                return usage(format!("μ must be positive, got {mu}"));
            }
            if let Some(r) = r {
                if l > r as f64 {
                    return usage(format!("mask half-width L = {l} exceeds R = {r}"));
                }
            }
            let source = EnvSource::parse(&env.env, env.seed)?;
            let domain = source.estimate_domain(r, env.stream)?;
            let xi = parse_xi(xi.as_deref(), domain.dim())?;
            let params = EstimateParams {
                mu,
                k,
                half_width: l,
                filter,
                xi,
            };
            let report = estimate(&domain, &params, &cfg)?;
            match format {
                ReportFormat::Kv => print!("{}", report.to_key_value()),
                ReportFormat::Csv => println!("{CSV_HEADER}\n{}", report.to_csv_row()),
            }
            Ok(())
        }
        Command::Spectrum { env, xi, out } => cmd_spectrum(&env, xi.as_deref(), out.as_ref()),
        Command::Convergence {
            env,
            k,
            sizes,
            mu_rule,
            l_rule,
            unit,
            filter,
            xi,
            floor,
            tol,
            out,
        } => {
            let unit = match unit.as_str() {
                "cell" => None,
                u => Some(parse::<usize>("unit", u)?),
            };
            let source = EnvSource::parse(&env.env, env.seed)?;
            let cell = source.periodic_cell(env.stream)?;
            let cfg = ConvergenceConfig {
                ks: parse_list("k", &k)?,
                sizes: parse_list("sizes", &sizes)?,
                mu_rule: parse::<ScaleRule>("mu rule", &mu_rule)?,
                l_rule: parse::<ScaleRule>("L rule", &l_rule)?,
                filter: parse("filter", &filter)?,
                xi: parse_xi(xi.as_deref(), cell.dim())?,
                unit,
                floor,
                solve: solve_config(tol)?,
            };
            cfg.validate()?;
            let result = convergence::convergence_study(&cell, &cfg)?;
            let mut text = env_echo(&env);
            text.push_str(&convergence::to_csv(&cfg, &result));
            write_output(out.as_ref(), &text)?;
            if out.is_some() {
                for (k, fit) in &result.slopes {
                    match fit {
                        Some(f) => println!("slope_k{k}={:.6} stderr={:.6}", f.slope, f.slope_stderr),
                        None => println!("slope_k{k}=undefined"),
                    }
                }
            }
            Ok(())
        }
        Command::Variance {
            law,
            dim,
            seed,
            k,
            sizes,
            samples,
            mu_rule,
            side_factor,
            filter,
            xi,
            tol,
            out,
            summary_out,
        } => {
            let kind: LawKind = parse("law", law.strip_prefix("law:").unwrap_or(&law))?;
            let cfg = StudyConfig {
                law: EnvironmentLaw::new(kind, dim, seed)?,
                mu_rule: parse("mu rule", &mu_rule)?,
                ks: parse_list("k", &k)?,
                sizes: parse_list("sizes", &sizes)?,
                samples_per_size: samples,
                filter: parse("filter", &filter)?,
                xi: parse_xi(xi.as_deref(), dim)?,
                side_factor,
                solve: solve_config(tol)?,
                threads: cli.threads,
            };
            cfg.validate()?;
            let result = montecarlo::variance_study(&cfg)?;
            if let Some(p) = &out {
                write_output(Some(p), &montecarlo::samples_csv(&cfg, &result))?;
            }
            write_output(summary_out.as_ref(), &montecarlo::summary_csv(&cfg, &result))?;
            if result.flagged > 0 {
                eprintln!(
                    "warning: {} of {} samples failed and were excluded",
                    result.flagged,
                    cfg.sizes.len() * cfg.samples_per_size
                );
            }
            if result.sizes.iter().any(|r| r.n < 2) {
                bail!("too many failed samples to estimate a variance");
            }
            Ok(())
        }
    }
}

fn env_echo(env: &EnvArgs) -> String {
    let mut s = format!("# env={}\n", env.env);
    if env.env.starts_with("law:") {
        writeln!(s, "# seed={}\n# stream={}", env.seed, env.stream).unwrap();
    }
    s
}

fn cmd_coeffs(k: usize, format: CoeffFormat) -> anyhow::Result<()> {
    let t = coefficients(k)?;
    let show = |r: &homog_core::Rational| match format {
        CoeffFormat::Rational => r.to_string(),
        CoeffFormat::Decimal => format!("{:e}", to_f64(r)),
    };
    let mut s = String::new();
    writeln!(s, "# k={k}").unwrap();
    for (m, c) in t.c().iter().enumerate() {
        writeln!(s, "c[{}] = {}", m + 1, show(c)).unwrap();
    }
    for (i, a) in t.a().iter().enumerate() {
        writeln!(s, "a[{i}] = {}", show(a)).unwrap();
    }
    for (i, e) in t.eta().iter().enumerate() {
        writeln!(s, "eta[{i}] = {}", show(e)).unwrap();
    }
    for (i, j, v) in t.nu_entries() {
        writeln!(s, "nu[{i}][{j}] = {}", show(v)).unwrap();
    }
    print!("{s}");
    Ok(())
}

fn cmd_spectrum(env: &EnvArgs, xi: Option<&str>, out: Option<&PathBuf>) -> anyhow::Result<()> {
    let cell = EnvSource::parse(&env.env, env.seed)?.periodic_cell(env.stream)?;
    let xi = parse_xi(xi, cell.dim())?;
    let m = spectral_measure(&cell, &xi)?;
    let corrector = exact_homogenized(&cell, &xi, &SolveConfig::default())?.value;
    let spectral = m.homogenized();

    let mut csv = env_echo(env);
    writeln!(csv, "# xi={xi}\nlambda,weight").unwrap();
    for (l, w) in m.eigenvalues.iter().zip(&m.weights) {
        writeln!(csv, "{l:.17e},{w:.17e}").unwrap();
    }
    write_output(out, &csv)?;

    let total = m.total_weight();
    println!("sites={}", cell.lattice().num_sites());
    println!("gap={:.17e}", m.gap());
    println!("weight_sum={total:.17e}");
    println!("drift_mean_square={:.17e}", m.drift_mean_square);
    println!("weight_sum_residual={:.3e}", (total - m.drift_mean_square).abs());
    println!("zero_mode_weight={:.3e}", m.zero_mode_weight);
    println!("eigen_residual={:.3e}", m.eigen_residual);
    println!("mean_xi_a_xi={:.17e}", m.mean_xi_a_xi);
    println!("ahom_spectral={spectral:.17e}");
    println!("ahom_corrector={corrector:.17e}");
    println!(
        "ahom_relative_difference={:.3e}",
        (spectral - corrector).abs() / corrector.abs()
    );
    Ok(())
}
