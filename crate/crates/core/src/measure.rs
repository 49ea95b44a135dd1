//! Exploration measure and the basis matrix `B = diag(ρ)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::DiscretizedProblem;

/// Relative cutoff below which a point mass is considered off-support.
pub const SUPPORT_TOLERANCE: f64 = 1e-14;

/// Data-adaptive probability measure on the source mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationMeasure {
    /// Point masses `ρ(s_k)`, summing to one.
    pub weights: Vec<f64>,
    /// Density `dρ/dν` at each source point (`ρ(s_k) / δ_k`).
    pub density: Vec<f64>,
    /// `ρ(s_k) > τ_supp` with `τ_supp = 1e-14 · max ρ`.
    pub support: Vec<bool>,
    /// Normalizing constant `Z`.
    pub normalizer: f64,
}

impl ExplorationMeasure {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn support_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.support[k]).collect()
    }
}

/// `ρ(s_k) = δ_k Σ_i |K(t_i, s_k)| μ(t_i) / Z`.
pub fn exploration_measure(problem: &DiscretizedProblem) -> Result<ExplorationMeasure> {
    let l = &problem.forward;
    let mu = problem.obs.weights();
    let delta = problem.source.weights();
    // |K(t_i, s_k)| = |L_ik| / δ_k
    let raw_density: Vec<f64> = (0..problem.n())
        .map(|k| {
            let col = l.column(k);
            col.iter().zip(mu).map(|(v, w)| v.abs() * w).sum::<f64>() / delta[k]
        })
        .collect();
    let z: f64 = raw_density.iter().zip(delta).map(|(d, w)| d * w).sum();
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::Degenerate(
            "every kernel column vanishes on the observation mesh".into(),
        ));
    }
    let density: Vec<f64> = raw_density.iter().map(|d| d / z).collect();
    let weights: Vec<f64> = density.iter().zip(delta).map(|(d, w)| d * w).collect();
    let max = weights.iter().cloned().fold(0.0, f64::max);
    let support = weights
        .iter()
        .map(|&w| w > SUPPORT_TOLERANCE * max)
        .collect();
    Ok(ExplorationMeasure {
        weights,
        density,
        support,
        normalizer: z,
    })
}

pub fn basis_matrix(measure: &ExplorationMeasure) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(&measure.weights))
}

/// `φᵀ B ψ`.
pub fn l2rho_inner(phi: &DVector<f64>, psi: &DVector<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let n = b.nrows();
    if b.ncols() != n || phi.len() != n || psi.len() != n {
        return Err(Error::Parameter(format!(
            "inner product dimensions disagree: phi {}, psi {}, B {}x{}",
            phi.len(),
            psi.len(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(phi.dot(&(b * psi)))
}

pub fn l2rho_norm_sq(phi: &DVector<f64>, b: &DMatrix<f64>) -> Result<f64> {
    l2rho_inner(phi, phi, b)
}
