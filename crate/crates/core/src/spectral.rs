//! Generalized eigenproblem `A V = B V Λ`, the weighted kernel `Ḡ`, and
//! projections onto the function space of identifiability (the span of the
//! eigenvectors with positive eigenvalue).

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::measure::{ExplorationMeasure, SUPPORT_TOLERANCE};
use crate::mesh::DiscretizedProblem;

#[derive(Debug, Clone)]
pub struct GeneralizedSpectrum {
    /// `λ₁ ≥ λ₂ ≥ … ≥ 0`.
    pub eigenvalues: DVector<f64>,
    /// Columns `ψ_i`; `VᵀBV = I` on the support block.
    pub eigenvectors: DMatrix<f64>,
    /// Number of eigenvalues above `rank_threshold`.
    pub rank: usize,
    pub rank_threshold: f64,
    /// Coordinates where `B` is positive.
    pub support: Vec<bool>,
}

impl GeneralizedSpectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The leading `rank` eigenvalues.
    pub fn positive_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues.as_slice()[..self.rank]
    }

    /// `V_r`, the eigenvectors spanning the FSOI.
    pub fn fsoi_basis(&self) -> DMatrix<f64> {
        self.eigenvectors.columns(0, self.rank).into_owned()
    }
}

/// Same as [`generalized_eigen_with_threshold`] without a user threshold.
pub fn generalized_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<GeneralizedSpectrum> {
    generalized_eigen_with_threshold(a, b, None)
}

/// Solves `A ψ = λ B ψ` for symmetric positive semi-definite `A` and diagonal
/// `B` by whitening: with `D = B^{-1/2}` on the support,
/// `M = D A D = W Λ Wᵀ` and `V = D W`.
///
/// Eigenvalues are sorted descending and negatives clamped to zero. Each
/// eigenvector is signed so that its largest-magnitude entry is positive.
/// Off-support coordinates get unit eigenvectors with eigenvalue zero. The
/// rank threshold is `max(λ₁ n ε, threshold)`.
pub fn generalized_eigen_with_threshold(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    threshold: Option<f64>,
) -> Result<GeneralizedSpectrum> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::Parameter(format!(
            "A is {}x{} and B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let diag: Vec<f64> = (0..n).map(|k| b[(k, k)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return Err(Error::Degenerate(
            "basis matrix has no positive entry".into(),
        ));
    }
    let support: Vec<bool> = diag.iter().map(|&d| d > SUPPORT_TOLERANCE * max).collect();
    let idx: Vec<usize> = (0..n).filter(|&k| support[k]).collect();
    let p = idx.len();
    let scale: Vec<f64> = idx.iter().map(|&k| diag[k].sqrt().recip()).collect();

    let mut m = DMatrix::from_fn(p, p, |i, j| a[(idx[i], idx[j])] * scale[i] * scale[j]);
    m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(Ordering::Equal)
    });

    let mut eigenvalues = DVector::zeros(n);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        eigenvalues[col] = eig.eigenvalues[src].max(0.0);
        let w = eig.eigenvectors.column(src);
        let pivot = w.iamax();
        let sign = if w[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (r, &k) in idx.iter().enumerate() {
            eigenvectors[(k, col)] = sign * w[r] * scale[r];
        }
    }
    for (col, k) in (p..n).zip((0..n).filter(|&k| !support[k])) {
        eigenvectors[(k, col)] = 1.0;
    }

    let lambda1 = if p > 0 { eigenvalues[0] } else { 0.0 };
    let rank_threshold = (lambda1 * n as f64 * f64::EPSILON).max(threshold.unwrap_or(0.0));
    let rank = eigenvalues
        .iter()
        .take_while(|&&l| l > rank_threshold)
        .count();
    Ok(GeneralizedSpectrum {
        eigenvalues,
        eigenvectors,
        rank,
        rank_threshold,
        support,
    })
}

/// `Ḡ(s_j, s_k)` on the support of the measure.
#[derive(Debug, Clone)]
pub struct GbarMatrix {
    pub values: DMatrix<f64>,
    /// Source indices of the rows/columns of `values`.
    pub indices: Vec<usize>,
    /// Common observation weight `Δt`, if the observation mesh is uniform.
    pub obs_weight: Option<f64>,
}

/// `G(s_j, s_k) = Σ_i K(t_i, s_j) K(t_i, s_k) μ(t_i)` divided by
/// `ρ̄(s_j) ρ̄(s_k)`, restricted to the support.
pub fn gbar_matrix(
    problem: &DiscretizedProblem,
    measure: &ExplorationMeasure,
) -> Result<GbarMatrix> {
    let indices = measure.support_indices();
    if indices.is_empty() {
        return Err(Error::Degenerate("measure has empty support".into()));
    }
    let k = problem.kernel.tabulate(&problem.source, &problem.obs)?;
    let mu = problem.obs.weights();
    let p = indices.len();
    let mut weighted = DMatrix::zeros(k.nrows(), p);
    for (c, &j) in indices.iter().enumerate() {
        for i in 0..k.nrows() {
            weighted[(i, c)] = k[(i, j)] * mu[i].sqrt() / measure.density[j];
        }
    }
    let values = weighted.tr_mul(&weighted);
    Ok(GbarMatrix {
        values,
        indices,
        obs_weight: problem.obs.uniform_weight(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub relerr: f64,
}

/// Compares `Σ_i λ_i(L_Ḡ)` with `Σ_k Ḡ(s_k, s_k) ρ(s_k)`.
///
/// `A = LᵀL` carries no observation weight, so the eigenvalues of the
/// operator are `Δt` times the generalized eigenvalues of `(A, B)`. The
/// observation mesh must therefore be uniform.
pub fn trace_identity(
    spectrum: &GeneralizedSpectrum,
    gbar: &GbarMatrix,
    measure: &ExplorationMeasure,
) -> Result<TraceIdentity> {
    let dt = gbar.obs_weight.ok_or_else(|| {
        Error::Parameter("trace identity needs a uniform observation mesh".into())
    })?;
    let lhs = dt * spectrum.eigenvalues.sum();
    let rhs: f64 = gbar
        .indices
        .iter()
        .enumerate()
        .map(|(c, &k)| gbar.values[(c, c)] * measure.weights[k])
        .sum();
    let relerr = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    Ok(TraceIdentity { lhs, rhs, relerr })
}

/// `c_i = ⟨φ, ψ_i⟩_{L²ρ}` for `i ≤ r`.
pub fn coefficients(
    phi: &DVector<f64>,
    spectrum: &GeneralizedSpectrum,
    b: &DMatrix<f64>,
) -> DVector<f64> {
    let bphi = b * phi;
    spectrum
        .eigenvectors
        .columns(0, spectrum.rank)
        .tr_mul(&bphi)
}

/// `P_H φ = Σ_{i≤r} ⟨φ, ψ_i⟩_{L²ρ} ψ_i`.
pub fn fsoi_project(
    phi: &DVector<f64>,
    spectrum: &GeneralizedSpectrum,
    b: &DMatrix<f64>,
) -> DVector<f64> {
    let c = coefficients(phi, spectrum, b);
    spectrum.eigenvectors.columns(0, spectrum.rank) * c
}

/// `‖P_H φ̂ − P_H φ_true‖²_{L²ρ}`.
pub fn projected_error(
    phi_hat: &DVector<f64>,
    phi_true: &DVector<f64>,
    spectrum: &GeneralizedSpectrum,
    b: &DMatrix<f64>,
) -> Result<f64> {
    if phi_hat.len() != spectrum.n() || phi_true.len() != spectrum.n() {
        return Err(Error::Parameter(format!(
            "estimate has length {}, truth {}, spectrum {}",
            phi_hat.len(),
            phi_true.len(),
            spectrum.n()
        )));
    }
    Ok(coefficients(&(phi_hat - phi_true), spectrum, b).norm_squared())
}
