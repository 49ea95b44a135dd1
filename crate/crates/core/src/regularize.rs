//! Tikhonov estimators `(A + λC)^{-1} b` for `C ∈ {I, B, C_rkhs}`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lcurve::{build_lcurve, LCurve, DEFAULT_GRID_SIZE};
use crate::spectral::{generalized_eigen, GeneralizedSpectrum};
use crate::triplet::{loss, RegressionTriplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegularizerKind {
    /// Euclidean norm of the nodal values, `C = I`.
    #[serde(rename = "l2")]
    L2,
    /// `L²ρ` norm, `C = B`.
    #[serde(rename = "L2")]
    L2Rho,
    /// Adaptive RKHS norm, `C = C_rkhs`.
    #[serde(rename = "rkhs")]
    Rkhs,
}

impl RegularizerKind {
    pub const ALL: [RegularizerKind; 3] = [
        RegularizerKind::L2,
        RegularizerKind::L2Rho,
        RegularizerKind::Rkhs,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RegularizerKind::L2 => "l2",
            RegularizerKind::L2Rho => "L2",
            RegularizerKind::Rkhs => "rkhs",
        }
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(RegularizerKind::L2),
            "L2" | "L2rho" => Ok(RegularizerKind::L2Rho),
            "rkhs" | "RKHS" => Ok(RegularizerKind::Rkhs),
            other => Err(Error::Parameter(format!("unknown regularizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegularizedSolution {
    pub phi: DVector<f64>,
    pub lambda: f64,
    /// `‖y − Lφ‖²`, clamped at zero.
    pub loss_value: f64,
    /// `φᵀ C φ`.
    pub penalty_value: f64,
    pub kind: RegularizerKind,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "lambda must be positive, got {lambda}"
        )))
    }
}

/// Solves the SPD system `m x = rhs`, falling back to LU when the Cholesky
/// factorization breaks down numerically.
fn spd_solve(m: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        let x = chol.solve(rhs);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    m.lu()
        .solve(rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Solver("shifted normal matrix is singular".into()))
}

pub fn solve_tikhonov(
    triplet: &RegressionTriplet,
    spectrum: &GeneralizedSpectrum,
    kind: RegularizerKind,
    lambda: f64,
) -> Result<RegularizedSolution> {
    check_lambda(lambda)?;
    let n = triplet.n();
    let (phi, penalty) = match kind {
        RegularizerKind::Rkhs => return rkhs_solve(triplet, spectrum, lambda),
        RegularizerKind::L2 => {
            let mut m = triplet.a.clone();
            for i in 0..n {
                m[(i, i)] += lambda;
            }
            let phi = spd_solve(m, &triplet.b)?;
            let pen = phi.norm_squared();
            (phi, pen)
        }
        RegularizerKind::L2Rho => {
            // restricted to the support: off-support rows of A + λB vanish
            let idx: Vec<usize> = (0..n).filter(|&k| spectrum.support[k]).collect();
            let p = idx.len();
            let m = DMatrix::from_fn(p, p, |i, j| {
                triplet.a[(idx[i], idx[j])] + lambda * triplet.basis[(idx[i], idx[j])]
            });
            let rhs = DVector::from_fn(p, |i, _| triplet.b[idx[i]]);
            let sub = spd_solve(m, &rhs)?;
            let mut phi = DVector::zeros(n);
            for (i, &k) in idx.iter().enumerate() {
                phi[k] = sub[i];
            }
            let pen = phi.dot(&(&triplet.basis * &phi));
            (phi, pen)
        }
    };
    Ok(RegularizedSolution {
        loss_value: loss(triplet, &phi).max(0.0),
        penalty_value: penalty.max(0.0),
        phi,
        lambda,
        kind,
    })
}

/// Transformed system with `C_* = V_r Λ_r^{1/2}`:
/// `(Λ_r² + λ I) φ̃ = Λ_r^{1/2} V_rᵀ b`, `φ = C_* φ̃`, penalty `‖φ̃‖²`.
pub fn rkhs_solve(
    triplet: &RegressionTriplet,
    spectrum: &GeneralizedSpectrum,
    lambda: f64,
) -> Result<RegularizedSolution> {
    check_lambda(lambda)?;
    let r = spectrum.rank;
    if r == 0 {
        return Err(Error::Degenerate(
            "spectrum has no positive eigenvalue".into(),
        ));
    }
    let vr = spectrum.eigenvectors.columns(0, r);
    let vtb = vr.tr_mul(&triplet.b);
    let lam = spectrum.positive_eigenvalues();
    let tilde = DVector::from_fn(r, |i, _| {
        lam[i].sqrt() * vtb[i] / (lam[i] * lam[i] + lambda)
    });
    let coef = DVector::from_fn(r, |i, _| lam[i].sqrt() * tilde[i]);
    let phi = vr * coef;
    Ok(RegularizedSolution {
        loss_value: loss(triplet, &phi).max(0.0),
        penalty_value: tilde.norm_squared(),
        phi,
        lambda,
        kind: RegularizerKind::Rkhs,
    })
}

/// Minimal-`L²ρ`-norm least squares `V_r Λ_r^{-1} V_rᵀ b`.
pub fn unregularized_pinv(
    triplet: &RegressionTriplet,
    spectrum: &GeneralizedSpectrum,
) -> DVector<f64> {
    let r = spectrum.rank;
    let vr = spectrum.eigenvectors.columns(0, r);
    let lam = spectrum.positive_eigenvalues();
    let mut c = vr.tr_mul(&triplet.b);
    for i in 0..r {
        c[i] /= lam[i];
    }
    vr * c
}

/// Output of the full adaptive-RKHS pipeline.
#[derive(Debug, Clone)]
pub struct RkhsPipelineOutput {
    pub solution: RegularizedSolution,
    pub curve: LCurve,
    pub spectrum: GeneralizedSpectrum,
}

/// Generalized eigensolve, transformed system, L-curve selection over the
/// range of `Λ`, and the estimator at the selected `λ`.
pub fn rkhs_pipeline(triplet: &RegressionTriplet) -> Result<RkhsPipelineOutput> {
    rkhs_pipeline_with_grid(triplet, DEFAULT_GRID_SIZE)
}

pub fn rkhs_pipeline_with_grid(
    triplet: &RegressionTriplet,
    grid_size: usize,
) -> Result<RkhsPipelineOutput> {
    let spectrum = generalized_eigen(&triplet.a, &triplet.basis)?;
    let (solution, curve) = select_and_solve(triplet, &spectrum, RegularizerKind::Rkhs, grid_size)?;
    Ok(RkhsPipelineOutput {
        solution,
        curve,
        spectrum,
    })
}

/// L-curve selection followed by the solve at the selected `λ`.
pub fn select_and_solve(
    triplet: &RegressionTriplet,
    spectrum: &GeneralizedSpectrum,
    kind: RegularizerKind,
    grid_size: usize,
) -> Result<(RegularizedSolution, LCurve)> {
    let curve = build_lcurve(triplet, spectrum, kind, grid_size)?;
    let solution = solve_tikhonov(triplet, spectrum, kind, curve.selected_lambda())?;
    Ok((solution, curve))
}
