//! Convergence of `A_{μ,k,R,L}` towards `A_hom` for a periodic medium
//! restricted to Dirichlet boxes of growing size.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{fit_loglog, LinearFit};
use crate::lattice::{Direction, Environment, Lattice, Topology};
use crate::reference::restrict_periodic;
use crate::rule::ScaleRule;
use crate::scheme::{build_mask, coefficients, estimate_from_correctors, Filter};
use crate::solver::{exact_homogenized, solve_corrector_set, SolveConfig};

/// Errors at or below this level are solver noise and excluded from fits.
pub const DEFAULT_FLOOR: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceConfig {
    pub ks: Vec<usize>,
    /// Box sizes `R`, ascending.
    pub sizes: Vec<usize>,
    /// `μ` as a function of `R`.
    pub mu_rule: ScaleRule,
    /// `L` as a function of `R`.
    pub l_rule: ScaleRule,
    pub filter: Filter,
    pub xi: Direction,
    /// Lattice sites per unit of `R` and `L`; `None` uses the cell period
    /// along the first axis, so that `R` counts periodic cells. `μ` is used
    /// as given, in lattice units.
    pub unit: Option<usize>,
    pub floor: f64,
    pub solve: SolveConfig,
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        self.xi.require_unit()?;
        self.solve.validate()?;
        if self.ks.is_empty() {
            return Err(Error::InvalidParameter("no scheme order requested".into()));
        }
        for &k in &self.ks {
            coefficients(k)?;
        }
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "sizes must be non-empty and strictly ascending".into(),
            ));
        }
        if self.unit == Some(0) {
            return Err(Error::InvalidParameter("unit must be ≥ 1".into()));
        }
        for &r in &self.sizes {
            let mu = self.mu_rule.eval(r as f64);
            let l = self.l_rule.eval(r as f64);
            if !(mu > 0.0 && mu.is_finite()) || !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "rules give μ = {mu}, L = {l} at R = {r}"
                )));
            }
            if l > r as f64 {
                return Err(Error::InvalidParameter(format!(
                    "mask half-width L = {l} exceeds R = {r}"
                )));
            }
        }
        Ok(())
    }

    pub fn echo(&self) -> Vec<(String, String)> {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        vec![
            ("k".into(), join(&self.ks)),
            ("sizes".into(), join(&self.sizes)),
            ("mu_rule".into(), self.mu_rule.to_string()),
            ("l_rule".into(), self.l_rule.to_string()),
            ("filter".into(), self.filter.to_string()),
            ("xi".into(), self.xi.to_string()),
            (
                "unit".into(),
                self.unit.map_or("cell".to_string(), |u| u.to_string()),
            ),
            ("floor".into(), format!("{:e}", self.floor)),
            ("tol".into(), format!("{:e}", self.solve.rel_tolerance)),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub k: usize,
    pub size: usize,
    /// Lattice extent of the box.
    pub side: usize,
    pub mu: f64,
    pub half_width: f64,
    pub estimate: f64,
    pub error: f64,
    pub max_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceResult {
    /// Exact `ξ·A_hom ξ` of the cell.
    pub reference: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Slope of `log error` against `log R` over errors above the floor.
    pub slopes: Vec<(usize, Option<LinearFit>)>,
}

impl ConvergenceResult {
    pub fn slope(&self, k: usize) -> Option<LinearFit> {
        self.slopes.iter().find(|(kk, _)| *kk == k).and_then(|(_, f)| *f)
    }
}

/// Solves on `Q_R` (Dirichlet data) with the periodic extension of `cell`
/// for every `R` (side `unit·R` lattice sites, mask half-width
/// `unit·l_rule(R)`), and compares with the exact homogenized coefficient of the
/// cell. Sizes run in parallel on the current rayon pool.
pub fn convergence_study(cell: &Environment, cfg: &ConvergenceConfig) -> Result<ConvergenceResult> {
    cfg.validate()?;
    if cell.lattice().topology() != Topology::Torus {
        return Err(Error::InvalidEnvironment(
            "convergence studies need a periodic (torus) cell".into(),
        ));
    }
    let reference = exact_homogenized(cell, &cfg.xi, &cfg.solve)?.value;
    let kmax = *cfg.ks.iter().max().expect("validated");
    let unit = cfg.unit.unwrap_or(cell.lattice().extents()[0]);
    let per_size: Vec<Result<Vec<ConvergenceRow>>> = cfg
        .sizes
        .par_iter()
        .map(|&r| {
            let side = r * unit;
            let lattice = Lattice::cube_box(side, cell.dim())?;
            let env = restrict_periodic(cell, lattice)?;
            let mu = cfg.mu_rule.eval(r as f64);
            let half_width = cfg.l_rule.eval(r as f64) * unit as f64;
            let mask = build_mask(cfg.filter, half_width, env.lattice())?;
            let set = solve_corrector_set(&env, mu, kmax, &cfg.xi, &cfg.solve)?;
            cfg.ks
                .iter()
                .map(|&k| {
                    let sub = set.truncated(k);
                    let estimate = estimate_from_correctors(&env, &sub, &coefficients(k)?, &mask)?;
                    Ok(ConvergenceRow {
                        k,
                        size: r,
                        side: env.lattice().extents()[0],
                        mu,
                        half_width,
                        estimate,
                        error: (estimate - reference).abs(),
                        max_residual: sub.max_residual(),
                    })
                })
                .collect()
        })
        .collect();
    let mut by_size = Vec::with_capacity(per_size.len());
    for rows in per_size {
        by_size.push(rows?);
    }
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for &k in &cfg.ks {
        let mine: Vec<ConvergenceRow> = by_size
            .iter()
            .flatten()
            .filter(|row| row.k == k)
            .cloned()
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = mine
            .iter()
            .filter(|row| row.error > cfg.floor)
            .map(|row| (row.size as f64, row.error))
            .unzip();
        let fit = if x.len() >= 2 {
            Some(fit_loglog(&x, &y)?)
        } else {
            None
        };
        slopes.push((k, fit));
        rows.extend(mine);
    }
    Ok(ConvergenceResult {
        reference,
        rows,
        slopes,
    })
}

pub const CSV_HEADER: &str = "k,R,side,mu,L,estimate,reference,error,max_residual";

/// CSV with the `#` config echo (strip the `# ` prefix to reuse it as a
/// config file), `##` results, and one row per `(k, R)`.
pub fn to_csv(cfg: &ConvergenceConfig, result: &ConvergenceResult) -> String {
    let mut s = String::new();
    for (k, v) in cfg.echo() {
        writeln!(s, "# {k}={v}").unwrap();
    }
    writeln!(s, "## reference={:.17e}", result.reference).unwrap();
    for (k, fit) in &result.slopes {
        match fit {
            Some(f) => writeln!(
                s,
                "## slope_k{k}={:.6} stderr={:.6} points={}",
                f.slope, f.slope_stderr, f.n
            )
            .unwrap(),
            None => writeln!(s, "## slope_k{k}=undefined").unwrap(),
        }
    }
    writeln!(s, "{CSV_HEADER}").unwrap();
    for r in &result.rows {
        writeln!(
            s,
            "{},{},{},{:.17e},{},{:.17e},{:.17e},{:.6e},{:.3e}",
            r.k, r.size, r.side, r.mu, r.half_width, r.estimate, result.reference, r.error,
            r.max_residual
        )
        .unwrap();
    }
    s
}
