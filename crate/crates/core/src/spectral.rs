//! Dense oracle on small periodic cells.
//!
//! The operator `L` of a torus environment is assembled densely and fully
//! diagonalised. Projecting the local drift `𝔡` on the eigenvectors gives the
//! spectral measure `e_𝔡 = Σ_i w_i δ_{λ_i}`, against which every quantity of
//! the scheme is an explicit sum:
//!
//! - `ξ·A_hom ξ = ⟨ξ·Aξ⟩ - Σ w_i / λ_i`,
//! - `⟨φ_μ²⟩ = Σ w_i / (μ+λ_i)²`,
//! - `ξ·A_{μ,k}ξ = ⟨ξ·Aξ⟩ - Σ w_i P_k(μ,λ_i) / ∏_{j<k} (2^jμ+λ_i)²`,
//! - `ξ·(A_{μ,k} - A_hom)ξ = Σ w_i 2^{k(k-1)} μ^{2k} / (λ_i ∏_{j<k} (2^jμ+λ_i)²)`.
//!
//! Inner products are site averages, so `Σ w_i = ⟨𝔡²⟩`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fit::{fit_loglog, LinearFit};
use crate::lattice::{self, Direction, Environment, Topology};

/// Largest cell handled by the dense oracle.
pub const MAX_DENSE_SITES: usize = 4096;

/// Dense matrix of `μ + L` in the canonical site basis.
pub fn assemble_dense(env: &Environment, mu: f64) -> Result<DMatrix<f64>> {
    let lat = env.lattice();
    let n = lat.num_sites();
    if n > MAX_DENSE_SITES {
        return Err(Error::OversizeCell {
            sites: n,
            limit: MAX_DENSE_SITES,
        });
    }
    if !(mu >= 0.0) {
        return Err(Error::InvalidParameter(format!("μ must be ≥ 0, got {mu}")));
    }
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        m[(s, s)] += mu;
        for i in 0..lat.dim() {
            let w = env.forward_conductance(s, i);
            m[(s, s)] += w;
            match lat.forward(s, i) {
                Some(t) => {
                    m[(t, t)] += w;
                    m[(s, t)] -= w;
                    m[(t, s)] -= w;
                }
                None => {}
            }
            if lat.backward(s, i).is_none() {
                m[(s, s)] += env.backward_conductance(s, i);
            }
        }
    }
    Ok(m)
}

/// Eigenvalue/weight pairs of `L` projected on the local drift.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralMeasure {
    /// Nonzero eigenvalues `λ_1 ≤ λ_2 ≤ …`.
    pub eigenvalues: Vec<f64>,
    /// `w_i = ⟨𝔡, ψ_i⟩²` with site-average inner product.
    pub weights: Vec<f64>,
    /// Weight on the kernel (constants); vanishes since `⟨𝔡⟩ = 0`.
    pub zero_mode_weight: f64,
    /// The kernel eigenvalue as computed (≈ 0).
    pub zero_eigenvalue: f64,
    /// `⟨𝔡²⟩`.
    pub drift_mean_square: f64,
    /// `⟨ξ·Aξ⟩`.
    pub mean_xi_a_xi: f64,
    /// `max_i ‖Lψ_i - λ_iψ_i‖ / ‖L‖_F`.
    pub eigen_residual: f64,
}

impl SpectralMeasure {
    /// Spectral gap `λ_1`.
    pub fn gap(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::INFINITY)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.zero_mode_weight
    }

    /// `‖𝔡‖²_{H^{-1}} = Σ w_i / λ_i`.
    pub fn h_minus_one_norm_sq(&self) -> f64 {
        self.pairs().map(|(l, w)| w / l).sum()
    }

    /// `ξ·A_hom ξ = ⟨ξ·Aξ⟩ - Σ w_i / λ_i`.
    pub fn homogenized(&self) -> f64 {
        self.mean_xi_a_xi - self.h_minus_one_norm_sq()
    }

    /// `∫ f(λ) de_𝔡(λ)` over the nonzero spectrum.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.pairs().map(|(l, w)| w * f(l)).sum()
    }

    /// `⟨φ_s φ_t⟩` for the modified correctors with shifts `s`, `t`.
    pub fn corrector_product(&self, s: f64, t: f64) -> f64 {
        self.integrate(|l| 1.0 / ((s + l) * (t + l)))
    }

    fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.eigenvalues.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Spectral measure of `L` projected on `𝔡 = ∇*·Aξ` for a torus cell.
pub fn spectral_measure(env: &Environment, xi: &Direction) -> Result<SpectralMeasure> {
    if env.lattice().topology() != Topology::Torus {
        return Err(Error::InvalidParameter(
            "the spectral oracle needs a torus environment".into(),
        ));
    }
    let op = assemble_dense(env, 0.0)?;
    let drift = lattice::local_drift(env, xi)?;
    let n = drift.values().len();
    let norm_l = op.norm();
    let eig = SymmetricEigen::try_new(op.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let d = DVector::from_column_slice(drift.values());
    let mut eigen_residual: f64 = 0.0;
    let mut eigenvalues = Vec::with_capacity(n.saturating_sub(1));
    let mut weights = Vec::with_capacity(n.saturating_sub(1));
    let mut zero_mode_weight = 0.0;
    let mut zero_eigenvalue = 0.0;
    for (rank, &col) in order.iter().enumerate() {
        let psi = eig.eigenvectors.column(col);
        let lambda = eig.eigenvalues[col];
        let res = (&op * psi - psi * lambda).norm();
        eigen_residual = eigen_residual.max(res / norm_l.max(f64::MIN_POSITIVE));
        let w = psi.dot(&d).powi(2) / n as f64;
        if rank == 0 {
            // Connected torus: the kernel is one-dimensional (constants).
            zero_mode_weight = w;
            zero_eigenvalue = lambda;
        } else {
            eigenvalues.push(lambda);
            weights.push(w);
        }
    }
    if eigenvalues.first().is_some_and(|&l| l <= 1e-10 * norm_l) {
        return Err(Error::Eigen(
            "degenerate kernel: the cell is not connected".into(),
        ));
    }
    Ok(SpectralMeasure {
        eigenvalues,
        weights,
        zero_mode_weight,
        zero_eigenvalue,
        drift_mean_square: drift.values().iter().map(|v| v * v).sum::<f64>() / n as f64,
        mean_xi_a_xi: env.mean_xi_a_xi(xi)?,
        eigen_residual,
    })
}

/// Coefficients of `∏_{j<k} (λ + 2^j μ)²` as a polynomial in `λ`, constant
/// term first. All coefficients are positive.
fn shifted_product_coefficients(mu: f64, k: usize) -> Vec<f64> {
    let mut poly = vec![1.0];
    for j in 0..k {
        let s = mu * (1u64 << j) as f64;
        for _ in 0..2 {
            let mut next = vec![0.0; poly.len() + 1];
            for (m, c) in poly.iter().enumerate() {
                next[m] += s * c;
                next[m + 1] += c;
            }
            poly = next;
        }
    }
    poly
}

/// `P_k(μ, λ)`: the product `∏_{j<k} (2^jμ+λ)²` minus its value
/// `2^{k(k-1)} μ^{2k}` at `λ = 0`, divided by `λ`. Evaluated from the
/// expanded product so that no cancellation occurs.
pub fn p_k(mu: f64, lambda: f64, k: usize) -> f64 {
    let poly = shifted_product_coefficients(mu, k);
    poly[1..].iter().rev().fold(0.0, |acc, c| acc * lambda + c)
}

fn shifted_product(mu: f64, lambda: f64, k: usize) -> f64 {
    (0..k)
        .map(|j| {
            let f = mu * (1u64 << j) as f64 + lambda;
            f * f
        })
        .product()
}

fn check_order(mu: f64, k: usize) -> Result<()> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("μ must be > 0, got {mu}")));
    }
    if k == 0 || k > crate::scheme::MAX_ORDER {
        return Err(Error::InvalidParameter(format!("invalid order k = {k}")));
    }
    Ok(())
}

fn check_measure(measure: &SpectralMeasure) -> Result<()> {
    let tol = 1e-10 * measure.drift_mean_square.max(f64::MIN_POSITIVE);
    if let Some((l, w)) = measure
        .eigenvalues
        .iter()
        .zip(&measure.weights)
        .find(|(l, w)| !(**l > 0.0) && **w > tol)
    {
        return Err(Error::InvalidParameter(format!(
            "measure puts weight {w} on eigenvalue {l}"
        )));
    }
    Ok(())
}

/// `ξ·A_{μ,k}ξ = ⟨ξ·Aξ⟩ - Σ_i w_i P_k(μ,λ_i) / ∏_{j<k}(2^jμ+λ_i)²`.
pub fn a_mu_k_spectral(
    measure: &SpectralMeasure,
    mean_xi_a_xi: f64,
    mu: f64,
    k: usize,
) -> Result<f64> {
    check_order(mu, k)?;
    check_measure(measure)?;
    let poly = shifted_product_coefficients(mu, k);
    let mut acc = crate::sum::Neumaier::default();
    for (&l, &w) in measure.eigenvalues.iter().zip(&measure.weights) {
        if w == 0.0 {
            continue;
        }
        let pk = poly[1..].iter().rev().fold(0.0, |acc, c| acc * l + c);
        acc.add(w * pk / shifted_product(mu, l, k));
    }
    Ok(mean_xi_a_xi - acc.value())
}

/// `ξ·(A_{μ,k} - A_hom)ξ = Σ_i w_i 2^{k(k-1)} μ^{2k} / (λ_i ∏_{j<k}(2^jμ+λ_i)²)`,
/// evaluated directly so it stays accurate far below machine epsilon relative
/// to `A_hom`.
pub fn systematic_error(measure: &SpectralMeasure, mu: f64, k: usize) -> Result<f64> {
    check_order(mu, k)?;
    check_measure(measure)?;
    let lead = shifted_product(mu, 0.0, k);
    Ok(measure
        .eigenvalues
        .iter()
        .zip(&measure.weights)
        .filter(|(_, w)| **w != 0.0)
        .map(|(&l, &w)| w * lead / (l * shifted_product(mu, l, k)))
        .sum())
}

/// Upper bound `2^{k(k-1)} ‖𝔡‖²_{H^{-1}} (μ/λ_1)^{2k}` on the systematic error,
/// from `λ ≥ λ_1` on the support of the measure.
pub fn systematic_error_bound(measure: &SpectralMeasure, mu: f64, k: usize) -> f64 {
    let scale = (1u128 << (k * (k - 1)).min(127)) as f64;
    scale * measure.h_minus_one_norm_sq() * (mu / measure.gap()).powi(2 * k as i32)
}

/// Spectral gap of the unit-conductance graph Laplacian on a torus:
/// `min_{m≠0} Σ_i 2(1 - cos(2π m_i/N_i))`.
pub fn torus_laplacian_gap(extents: &[usize]) -> f64 {
    extents
        .iter()
        .filter(|&&n| n > 1)
        .map(|&n| 2.0 * (1.0 - (2.0 * std::f64::consts::PI / n as f64).cos()))
        .fold(f64::INFINITY, f64::min)
}

/// Systematic error `ξ·(A_{μ,k} - A_hom)ξ` over a grid of `μ`, with the
/// fitted log-log slope.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorCurve {
    pub k: usize,
    pub points: Vec<(f64, f64)>,
    pub slope: Option<LinearFit>,
}

pub fn systematic_error_curve(
    env: &Environment,
    xi: &Direction,
    k: usize,
    mu_grid: &[f64],
) -> Result<ErrorCurve> {
    if mu_grid.is_empty() {
        return Err(Error::InvalidParameter("empty μ grid".into()));
    }
    let measure = spectral_measure(env, xi)?;
    let points = mu_grid
        .iter()
        .map(|&mu| systematic_error(&measure, mu, k).map(|e| (mu, e)))
        .collect::<Result<Vec<_>>>()?;
    let positive: Vec<(f64, f64)> = points.iter().copied().filter(|(_, e)| *e > 0.0).collect();
    let slope = if positive.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        Some(fit_loglog(&x, &y)?)
    } else {
        None
    };
    Ok(ErrorCurve { k, points, slope })
}

/// `n` log-spaced points in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
