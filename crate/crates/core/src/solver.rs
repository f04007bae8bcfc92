//! Modified corrector equations `(μ + L) φ_μ = 𝔡` on boxes and tori, and the
//! periodic cell problem `L φ = 𝔡` for the homogenized coefficients.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{self, Direction, Environment, LatticeField, Topology, NONE};
use crate::sum::dot;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Diagonal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub rel_tolerance: f64,
    /// `None` means `50·√(#sites) + 1000`.
    pub max_iterations: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            rel_tolerance: 1e-12,
            max_iterations: None,
            preconditioner: Preconditioner::Diagonal,
        }
    }
}

impl SolveConfig {
    pub fn with_tolerance(rel_tolerance: f64) -> Self {
        SolveConfig {
            rel_tolerance,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0 && self.rel_tolerance < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "relative tolerance must lie in (0, 1), got {}",
                self.rel_tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidParameter("max_iterations must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn iteration_limit(&self, sites: usize) -> usize {
        self.max_iterations
            .unwrap_or_else(|| 50 * (sites as f64).sqrt().ceil() as usize + 1000)
    }
}

/// Iteration statistics of one solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// `‖(μ+L)u - f‖ / ‖f‖`, recomputed from scratch at the end.
    pub relative_residual: f64,
    /// True relative residual at the end of every CG cycle.
    pub residual_history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub field: LatticeField,
    pub stats: SolveStats,
}

/// Matrix-free `μ + L`: per-site neighbour tables and edge conductances.
pub(crate) struct Stencil {
    dim: usize,
    diag: Vec<f64>,
    fwd: Vec<usize>,
    bwd: Vec<usize>,
    cf: Vec<f64>,
    cb: Vec<f64>,
}

impl Stencil {
    pub(crate) fn new(env: &Environment) -> Self {
        let lat = env.lattice();
        let d = lat.dim();
        let n = lat.num_sites();
        let mut diag = vec![0.0; n];
        let mut fwd = Vec::with_capacity(n * d);
        let mut bwd = Vec::with_capacity(n * d);
        let mut cf = Vec::with_capacity(n * d);
        let mut cb = Vec::with_capacity(n * d);
        for (s, dg) in diag.iter_mut().enumerate() {
            for i in 0..d {
                let wf = env.forward_conductance(s, i);
                let wb = env.backward_conductance(s, i);
                *dg += wf + wb;
                fwd.push(lat.forward(s, i).unwrap_or(NONE));
                bwd.push(lat.backward(s, i).unwrap_or(NONE));
                cf.push(wf);
                cb.push(wb);
            }
        }
        Stencil {
            dim: d,
            diag,
            fwd,
            bwd,
            cf,
            cb,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.diag.len()
    }

    pub(crate) fn diagonal(&self, mu: f64) -> Vec<f64> {
        self.diag.iter().map(|d| d + mu).collect()
    }

    pub(crate) fn apply(&self, mu: f64, u: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (s, o) in out.iter_mut().enumerate() {
            let mut acc = (mu + self.diag[s]) * u[s];
            for k in s * d..(s + 1) * d {
                let f = self.fwd[k];
                if f != NONE {
                    acc -= self.cf[k] * u[f];
                }
                let b = self.bwd[k];
                if b != NONE {
                    acc -= self.cb[k] * u[b];
                }
            }
            *o = acc;
        }
    }
}

fn project_mean_zero(v: &mut [f64]) {
    let mean = crate::sum::compensated_sum(v.iter().copied()) / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Preconditioned CG for `(μ + L) u = f`. With `singular` set (`μ = 0` on a
/// torus), the right-hand side and all iterates are kept mean-zero.
fn conjugate_gradient(
    stencil: &Stencil,
    mu: f64,
    rhs: &[f64],
    singular: bool,
    config: &SolveConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    config.validate()?;
    let n = stencil.len();
    let max_iter = config.iteration_limit(n);
    let mut b = rhs.to_vec();
    if singular {
        project_mean_zero(&mut b);
    }
    let bnorm = dot(&b, &b).sqrt();
    let mut stats = SolveStats::default();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, stats));
    }
    let target = config.rel_tolerance * bnorm;
    let inv_diag: Vec<f64> = match config.preconditioner {
        Preconditioner::Diagonal => stencil.diagonal(mu).iter().map(|d| 1.0 / d).collect(),
        Preconditioner::None => vec![1.0; n],
    };

    let mut r = b.clone();
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut previous_true = f64::INFINITY;
    loop {
        // One CG cycle starting from the current true residual `r`.
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * di;
        }
        if singular {
            project_mean_zero(&mut z);
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while stats.iterations < max_iter {
            stencil.apply(mu, &p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                break;
            }
            let alpha = rz / pq;
            for (xi, pi) in x.iter_mut().zip(&p) {
                *xi += alpha * pi;
            }
            for (ri, qi) in r.iter_mut().zip(&q) {
                *ri -= alpha * qi;
            }
            stats.iterations += 1;
            if dot(&r, &r).sqrt() <= target {
                break;
            }
            for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
                *zi = ri * di;
            }
            if singular {
                project_mean_zero(&mut z);
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        if singular {
            project_mean_zero(&mut x);
        }
        // Replace the recursive residual by the true one.
        stencil.apply(mu, &x, &mut q);
        for ((ri, bi), qi) in r.iter_mut().zip(&b).zip(&q) {
            *ri = bi - qi;
        }
        if singular {
            project_mean_zero(&mut r);
        }
        let true_norm = dot(&r, &r).sqrt();
        stats.relative_residual = true_norm / bnorm;
        stats.residual_history.push(stats.relative_residual);
        if true_norm <= target {
            return Ok((x, stats));
        }
        if stats.iterations >= max_iter || true_norm >= previous_true {
            return Err(Error::NonConvergence {
                iterations: stats.iterations,
                residual: stats.relative_residual,
            });
        }
        previous_true = true_norm;
    }
}

/// Solves `(μ + L) u = f` for a general right-hand side.
pub fn solve_shifted(
    env: &Environment,
    mu: f64,
    rhs: &LatticeField,
    config: &SolveConfig,
) -> Result<Solution> {
    env.check_field(rhs)?;
    if !(mu >= 0.0) {
        return Err(Error::InvalidParameter(format!("μ must be ≥ 0, got {mu}")));
    }
    let singular = mu == 0.0 && env.lattice().topology() == Topology::Torus;
    let stencil = Stencil::new(env);
    let (x, stats) = conjugate_gradient(&stencil, mu, rhs.values(), singular, config)?;
    Ok(Solution {
        field: LatticeField::new(env.lattice().clone(), x)?,
        stats,
    })
}

/// The modified corrector `φ_μ`: `μ φ_μ - ∇*·A(ξ + ∇φ_μ) = 0`.
pub fn solve_modified_corrector(
    env: &Environment,
    mu: f64,
    xi: &Direction,
    config: &SolveConfig,
) -> Result<Solution> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("μ must be > 0, got {mu}")));
    }
    let drift = lattice::local_drift(env, xi)?;
    solve_shifted(env, mu, &drift, config)
}

/// The correctors `φ_{2^i μ}`, `i = 0..k-1`.
#[derive(Clone, Debug)]
pub struct CorrectorSet {
    pub mu: f64,
    pub xi: Direction,
    pub fields: Vec<LatticeField>,
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
}

impl CorrectorSet {
    pub fn k(&self) -> usize {
        self.fields.len()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// The first `k` levels (the correctors do not depend on `k`).
    pub fn truncated(&self, k: usize) -> CorrectorSet {
        let k = k.min(self.k());
        CorrectorSet {
            mu: self.mu,
            xi: self.xi.clone(),
            fields: self.fields[..k].to_vec(),
            residuals: self.residuals[..k].to_vec(),
            iterations: self.iterations[..k].to_vec(),
        }
    }
}

pub fn solve_corrector_set(
    env: &Environment,
    mu: f64,
    k: usize,
    xi: &Direction,
    config: &SolveConfig,
) -> Result<CorrectorSet> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("μ must be > 0, got {mu}")));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be ≥ 1".into()));
    }
    config.validate()?;
    let drift = lattice::local_drift(env, xi)?;
    let stencil = Stencil::new(env);
    let solved: Vec<Result<(Vec<f64>, SolveStats)>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let shift = mu * (1u64 << i) as f64;
            conjugate_gradient(&stencil, shift, drift.values(), false, config).map_err(|e| {
                Error::LevelFailure {
                    level: i,
                    source: Box::new(e),
                }
            })
        })
        .collect();
    let mut set = CorrectorSet {
        mu,
        xi: xi.clone(),
        fields: Vec::with_capacity(k),
        residuals: Vec::with_capacity(k),
        iterations: Vec::with_capacity(k),
    };
    for level in solved {
        let (x, stats) = level?;
        set.fields.push(LatticeField::new(env.lattice().clone(), x)?);
        set.residuals.push(stats.relative_residual);
        set.iterations.push(stats.iterations);
    }
    Ok(set)
}

#[derive(Clone, Debug)]
pub struct Homogenized {
    /// `ξ·A_hom ξ`.
    pub value: f64,
    pub corrector: LatticeField,
    pub stats: SolveStats,
}

/// `ξ·A_hom ξ = ⟨(ξ+∇φ)·A(ξ+∇φ)⟩` for a periodic cell, with `φ` the mean-zero
/// solution of `L φ = 𝔡` on the torus.
pub fn exact_homogenized(
    env: &Environment,
    xi: &Direction,
    config: &SolveConfig,
) -> Result<Homogenized> {
    if env.lattice().topology() != Topology::Torus {
        return Err(Error::InvalidParameter(
            "the periodic cell problem needs a torus environment".into(),
        ));
    }
    let drift = lattice::local_drift(env, xi)?;
    let sol = solve_shifted(env, 0.0, &drift, config)?;
    let value = lattice::energy_mean(env, xi, Some(&sol.field), Some(&sol.field))?;
    Ok(Homogenized {
        value,
        corrector: sol.field,
        stats: sol.stats,
    })
}
