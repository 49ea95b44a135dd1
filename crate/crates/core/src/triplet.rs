//! Normal-equation triplet `(A, b, B)` and the data-fit loss.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::DiscretizedProblem;

#[derive(Debug, Clone)]
pub struct RegressionTriplet {
    /// `A = Lᵀ L`.
    pub a: DMatrix<f64>,
    /// `b = Lᵀ y`.
    pub b: DVector<f64>,
    /// Basis matrix `B = diag(ρ)`.
    pub basis: DMatrix<f64>,
    /// `‖y‖²`.
    pub y_norm_sq: f64,
}

impl RegressionTriplet {
    pub fn n(&self) -> usize {
        self.b.len()
    }
}

pub fn assemble_triplet(
    problem: &DiscretizedProblem,
    basis: &DMatrix<f64>,
) -> Result<RegressionTriplet> {
    let y = problem
        .observations
        .as_ref()
        .ok_or_else(|| Error::State("problem has no observations".into()))?;
    if basis.nrows() != problem.n() || basis.ncols() != problem.n() {
        return Err(Error::Parameter(format!(
            "basis matrix is {}x{} but the source mesh has {} points",
            basis.nrows(),
            basis.ncols(),
            problem.n()
        )));
    }
    let l = &problem.forward;
    let mut a = l.tr_mul(l);
    // exact symmetry
    for j in 0..a.ncols() {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(RegressionTriplet {
        a,
        b: l.tr_mul(y),
        basis: basis.clone(),
        y_norm_sq: y.norm_squared(),
    })
}

/// `‖y‖² − 2 bᵀφ + φᵀ A φ`, i.e. `‖y − Lφ‖²` without touching `L`.
pub fn loss(triplet: &RegressionTriplet, phi: &DVector<f64>) -> f64 {
    triplet.y_norm_sq - 2.0 * triplet.b.dot(phi) + phi.dot(&(&triplet.a * phi))
}
