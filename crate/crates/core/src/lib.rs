//! Higher-order approximations of homogenized coefficients for discrete
//! elliptic operators `-∇*·A∇` on `Z^d` with periodic or i.i.d. random
//! conductances.
//!
//! The approximations `A_{μ,k}` only require modified correctors, i.e.
//! solutions of `(2^i μ + L) φ = 𝔡` for `i < k`, and have a systematic error
//! of order `μ^{2k}`. The crate is organised as:
//!
//! - [`lattice`]: geometry, conductance environments, fields and the discrete
//!   calculus (∇, ∇*, local drift, Dirichlet form, masked energy averages).
//! - [`solver`]: conjugate-gradient solves of the modified corrector equation
//!   on boxes and tori, and the exact periodic cell problem.
//! - [`scheme`]: exact rational coefficient tables, filters and masks, and
//!   the estimator `A_{μ,k,R,L}`.
//! - [`spectral`]: dense eigendecomposition oracle on small periodic cells.
//! - [`montecarlo`]: counter-based sampling of random environments and
//!   variance studies.
//! - [`convergence`]: Dirichlet-box convergence studies for periodic media.
//! - [`reference`]: built-in reference cells and periodic restrictions.

pub mod convergence;
pub mod error;
pub mod fit;
pub mod lattice;
pub mod montecarlo;
pub mod reference;
pub mod rule;
pub mod scheme;
pub mod solver;
pub mod spectral;
mod sum;

pub use error::{Error, Result};
pub use fit::{fit_loglog, LinearFit};
pub use lattice::{Direction, Environment, Lattice, LatticeField, Topology, VectorField};
pub use montecarlo::{sample_environment, variance_study, EnvironmentLaw, LawKind, StudyConfig, StudyResult};
pub use rule::ScaleRule;
pub use scheme::{
    build_mask, coefficients, dmuk_set, estimate, EstimateParams, EstimateReport, Filter,
    Rational, SchemeCoefficients,
};
pub use solver::{
    exact_homogenized, solve_corrector_set, solve_modified_corrector, CorrectorSet,
    Preconditioner, SolveConfig,
};
pub use spectral::{
    a_mu_k_spectral, spectral_measure, systematic_error, systematic_error_curve, SpectralMeasure,
};
