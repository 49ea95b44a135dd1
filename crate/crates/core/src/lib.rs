//! Tikhonov regularization of discretized Fredholm integral equations of the
//! first kind with a data-adaptive RKHS penalty.
//!
//! The pipeline runs mesh → exploration measure → regression triplet →
//! generalized spectrum → regularized solve, with L-curve selection of the
//! regularization strength. [`theory`] evaluates the small-noise mean-square
//! errors of the RKHS and `L²ρ` estimators on synthetic spectra, and
//! [`experiments`] runs the noise and mesh sweeps.

pub mod error;
pub mod experiments;
pub mod io;
pub mod lcurve;
pub mod measure;
pub mod mesh;
pub mod regularize;
pub mod rng;
pub mod spectral;
pub mod theory;
pub mod triplet;

pub use error::{Error, Result};
pub use lcurve::{build_lcurve, select_lambda, LCurve};
pub use measure::{basis_matrix, exploration_measure, l2rho_inner, ExplorationMeasure};
pub use mesh::{
    build_forward, generate_data, phi_true_catalog, DiscretizedProblem, KernelSpec, Mesh,
    PhiCatalog,
};
pub use regularize::{
    rkhs_pipeline, rkhs_solve, solve_tikhonov, unregularized_pinv, RegularizedSolution,
    RegularizerKind,
};
pub use spectral::{
    fsoi_project, gbar_matrix, generalized_eigen, projected_error, trace_identity, GbarMatrix,
    GeneralizedSpectrum,
};
pub use triplet::{assemble_triplet, loss, RegressionTriplet};
