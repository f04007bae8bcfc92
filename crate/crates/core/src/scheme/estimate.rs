use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lattice::{self, Direction, Environment, LatticeField, Topology};
use crate::solver::{solve_corrector_set, CorrectorSet, SolveConfig};

use super::coefficients::{coefficients, SchemeCoefficients};
use super::mask::{build_mask, Filter};

/// Returns the scaled combination `μ^{k-1} 𝔡_{μ,k} = Σ_i a_{k,i} φ_{2^i μ}`.
pub fn dmuk_set(correctors: &CorrectorSet, coeffs: &SchemeCoefficients) -> Result<LatticeField> {
    if correctors.k() != coeffs.k() {
        return Err(Error::InvalidParameter(format!(
            "corrector set has {} levels, coefficients are of order {}",
            correctors.k(),
            coeffs.k()
        )));
    }
    let weights = coeffs.weights();
    let first = &correctors.fields[0];
    let mut out = LatticeField::zeros(first.lattice());
    for (a, phi) in weights.a.iter().zip(&correctors.fields) {
        first.lattice().check_same(phi.lattice())?;
        for (o, v) in out.values_mut().iter_mut().zip(phi.values()) {
            *o += a * v;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateParams {
    pub mu: f64,
    pub k: usize,
    /// Mask half-width `L`.
    pub half_width: f64,
    pub filter: Filter,
    pub xi: Direction,
}

/// `ξ·A_{μ,k,R,L}ξ` and its ingredients.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub mu: f64,
    pub k: usize,
    /// Side length of the domain along the first axis.
    pub side: usize,
    pub half_width: f64,
    pub filter: Filter,
    pub xi: Direction,
    pub topology: Topology,
    pub estimate: f64,
    /// `⟨⟨(ξ+∇φ_μ)·A(ξ+∇φ_μ)⟩⟩_L`.
    pub energy_term: f64,
    /// `μ Σ_i η_{k,i} ⟨⟨φ_{2^iμ}²⟩⟩_L`.
    pub eta_term: f64,
    /// `μ Σ_{i<j} ν_{k,i,j} ⟨⟨φ_{2^iμ} φ_{2^jμ}⟩⟩_L`.
    pub nu_term: f64,
    pub max_residual: f64,
    pub mask_sum: f64,
    pub iterations: Vec<usize>,
}

pub const CSV_HEADER: &str = "mu,k,R,L,filter,xi,estimate,energy_term,eta_term,nu_term,max_residual";

impl EstimateReport {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.17e},{},{},{},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.3e}",
            self.mu,
            self.k,
            self.side,
            self.half_width,
            self.filter,
            self.xi,
            self.estimate,
            self.energy_term,
            self.eta_term,
            self.nu_term,
            self.max_residual
        )
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let iters: Vec<String> = self.iterations.iter().map(|i| i.to_string()).collect();
        writeln!(s, "mu={:.17e}", self.mu).unwrap();
        writeln!(s, "k={}", self.k).unwrap();
        writeln!(s, "R={}", self.side).unwrap();
        writeln!(s, "L={}", self.half_width).unwrap();
        writeln!(s, "topology={}", self.topology.as_str()).unwrap();
        writeln!(s, "filter={}", self.filter).unwrap();
        writeln!(s, "xi={}", self.xi).unwrap();
        writeln!(s, "estimate={:.17e}", self.estimate).unwrap();
        writeln!(s, "energy_term={:.17e}", self.energy_term).unwrap();
        writeln!(s, "eta_term={:.17e}", self.eta_term).unwrap();
        writeln!(s, "nu_term={:.17e}", self.nu_term).unwrap();
        writeln!(s, "max_residual={:.3e}", self.max_residual).unwrap();
        writeln!(s, "mask_sum={:.17e}", self.mask_sum).unwrap();
        writeln!(s, "iterations={}", iters.join(";")).unwrap();
        s
    }
}

/// The three term groups of the estimator for given correctors and mask.
pub(crate) struct Terms {
    pub energy: f64,
    pub eta: f64,
    pub nu: f64,
}

pub(crate) fn assemble(
    env: &Environment,
    correctors: &CorrectorSet,
    coeffs: &SchemeCoefficients,
    mask: &LatticeField,
) -> Result<Terms> {
    if correctors.k() < coeffs.k() {
        return Err(Error::InvalidParameter(format!(
            "order {} needs {} corrector levels, got {}",
            coeffs.k(),
            coeffs.k(),
            correctors.k()
        )));
    }
    let mu = correctors.mu;
    let w = coeffs.weights();
    let phi = &correctors.fields;
    let energy = lattice::energy_average(env, &correctors.xi, Some(&phi[0]), Some(&phi[0]), mask)?;
    let mut eta = 0.0;
    for (i, e) in w.eta.iter().enumerate() {
        if *e != 0.0 {
            eta += e * lattice::masked_product(&phi[i], &phi[i], mask)?;
        }
    }
    let mut nu = 0.0;
    for &(i, j, v) in &w.nu {
        nu += v * lattice::masked_product(&phi[i], &phi[j], mask)?;
    }
    Ok(Terms {
        energy,
        eta: mu * eta,
        nu: mu * nu,
    })
}

/// Assembles `ξ·A_{μ,k}ξ` from already computed correctors (uniform or
/// filtered mask given by the caller).
pub fn estimate_from_correctors(
    env: &Environment,
    correctors: &CorrectorSet,
    coeffs: &SchemeCoefficients,
    mask: &LatticeField,
) -> Result<f64> {
    let t = assemble(env, correctors, coeffs, mask)?;
    Ok(t.energy + t.eta + t.nu)
}

/// The estimator `ξ·A_{μ,k,R,L}ξ`: correctors on the environment's domain
/// (a Dirichlet box, or a torus for the boundary-free variant), averaged
/// with the mask of half-width `L` centred at the origin.
pub fn estimate(
    env: &Environment,
    params: &EstimateParams,
    config: &SolveConfig,
) -> Result<EstimateReport> {
    if !(params.mu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "μ must be > 0, got {}",
            params.mu
        )));
    }
    params.xi.require_unit()?;
    let lat = env.lattice();
    let side = lat.extents()[0];
    if params.half_width > side as f64 {
        return Err(Error::InvalidParameter(format!(
            "mask half-width L = {} exceeds the domain side R = {side}",
            params.half_width
        )));
    }
    let coeffs = coefficients(params.k)?;
    let mask = build_mask(params.filter, params.half_width, lat)?;
    let correctors = solve_corrector_set(env, params.mu, params.k, &params.xi, config)?;
    let terms = assemble(env, &correctors, &coeffs, &mask)?;
    Ok(EstimateReport {
        mu: params.mu,
        k: params.k,
        side,
        half_width: params.half_width,
        filter: params.filter,
        xi: params.xi.clone(),
        topology: lat.topology(),
        estimate: terms.energy + terms.eta + terms.nu,
        energy_term: terms.energy,
        eta_term: terms.eta,
        nu_term: terms.nu,
        max_residual: correctors.max_residual(),
        mask_sum: mask.sum(),
        iterations: correctors.iterations.clone(),
    })
}
