//! L-curve over a log-uniform `λ` grid and maximum-curvature selection.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::regularize::{solve_tikhonov, RegularizerKind};
use crate::spectral::GeneralizedSpectrum;
use crate::triplet::RegressionTriplet;

pub const DEFAULT_GRID_SIZE: usize = 100;

#[derive(Debug, Clone)]
pub struct LCurve {
    pub kind: RegularizerKind,
    /// Strictly ascending.
    pub lambdas: Vec<f64>,
    /// `log √E(φ_λ)`.
    pub xs: Vec<f64>,
    /// `log ‖φ_λ‖_C`.
    pub ys: Vec<f64>,
    /// Raw loss values `E(φ_λ)`.
    pub losses: Vec<f64>,
    /// Raw penalty values `‖φ_λ‖²_C`.
    pub penalties: Vec<f64>,
    /// NaN at the two endpoints.
    pub curvatures: Vec<f64>,
    pub selected_index: usize,
}

impl LCurve {
    pub fn selected_lambda(&self) -> f64 {
        self.lambdas[self.selected_index]
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

/// `count` points log-uniform on `[lo, hi]`, endpoints exact.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|j| match j {
            0 => lo,
            j if j + 1 == count => hi,
            j => (a + (b - a) * j as f64 / (count - 1) as f64).exp(),
        })
        .collect()
}

/// Range of positive eigenvalues that sets the `λ` grid: `Λ` for the RKHS
/// regularizer, the eigenvalues of `A` for the other two.
pub fn lambda_range(
    triplet: &RegressionTriplet,
    spectrum: &GeneralizedSpectrum,
    kind: RegularizerKind,
) -> Result<(f64, f64)> {
    let (lo, hi) = match kind {
        RegularizerKind::Rkhs => {
            let pos = spectrum.positive_eigenvalues();
            match (pos.last(), pos.first()) {
                (Some(&lo), Some(&hi)) => (lo, hi),
                _ => return Err(Error::Degenerate("no positive eigenvalue".into())),
            }
        }
        _ => {
            let eig = SymmetricEigen::new(triplet.a.clone()).eigenvalues;
            let hi = eig.max();
            let tau = hi * triplet.n() as f64 * f64::EPSILON;
            let lo = eig
                .iter()
                .filter(|&&l| l > tau)
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if !(hi > 0.0) || !lo.is_finite() {
                return Err(Error::Degenerate("A has no positive eigenvalue".into()));
            }
            (lo, hi)
        }
    };
    Ok((lo, hi))
}

pub fn build_lcurve(
    triplet: &RegressionTriplet,
    spectrum: &GeneralizedSpectrum,
    kind: RegularizerKind,
    grid_size: usize,
) -> Result<LCurve> {
    if grid_size < 10 {
        return Err(Error::Parameter(format!(
            "L-curve grid needs at least 10 points, got {grid_size}"
        )));
    }
    let (lo, hi) = lambda_range(triplet, spectrum, kind)?;
    let lambdas = if hi > lo {
        log_grid(lo, hi, grid_size)
    } else {
        // a single positive eigenvalue: widen by a decade either side
        log_grid(lo * 0.1, hi * 10.0, grid_size)
    };
    let solved: Vec<(f64, f64)> = lambdas
        .par_iter()
        .map(|&l| {
            solve_tikhonov(triplet, spectrum, kind, l).map(|s| (s.loss_value, s.penalty_value))
        })
        .collect::<Result<_>>()?;
    let floor = (triplet.y_norm_sq * 1e-30).max(f64::MIN_POSITIVE);
    let losses: Vec<f64> = solved.iter().map(|s| s.0).collect();
    let penalties: Vec<f64> = solved.iter().map(|s| s.1).collect();
    let xs: Vec<f64> = losses.iter().map(|e| 0.5 * e.max(floor).ln()).collect();
    let ys: Vec<f64> = penalties
        .iter()
        .map(|p| 0.5 * p.max(f64::MIN_POSITIVE).ln())
        .collect();
    let us: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let curvatures = curvature(&us, &xs, &ys);
    let selected_index = argmax_curvature(&curvatures)?;
    Ok(LCurve {
        kind,
        lambdas,
        xs,
        ys,
        losses,
        penalties,
        curvatures,
        selected_index,
    })
}

/// Signed curvature `(x′y″ − y′x″) / (x′² + y′²)^{3/2}` of the parametric
/// curve `(x(u), y(u))`, with three-point derivatives on a possibly
/// non-uniform `u` grid. Endpoints are NaN.
pub fn curvature(us: &[f64], xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = us.len();
    let mut out = vec![f64::NAN; n];
    for j in 1..n.saturating_sub(1) {
        let h1 = us[j] - us[j - 1];
        let h2 = us[j + 1] - us[j];
        let d1 = |f: &[f64]| {
            (f[j + 1] * h1 * h1 - f[j - 1] * h2 * h2 + f[j] * (h2 * h2 - h1 * h1))
                / (h1 * h2 * (h1 + h2))
        };
        let d2 = |f: &[f64]| {
            2.0 * (f[j + 1] * h1 - f[j] * (h1 + h2) + f[j - 1] * h2) / (h1 * h2 * (h1 + h2))
        };
        let (xp, yp, xpp, ypp) = (d1(xs), d1(ys), d2(xs), d2(ys));
        out[j] = (xp * ypp - yp * xpp) / (xp * xp + yp * yp).powf(1.5);
    }
    out
}

/// First index of the largest finite value (smallest `λ` on ties).
fn argmax_curvature(curvatures: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &k) in curvatures.iter().enumerate() {
        if k.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| k > b) {
            best = Some((j, k));
        }
    }
    best.map(|(j, _)| j)
        .ok_or_else(|| Error::Selection("curvature is undefined at every grid point".into()))
}

/// Recomputes the curvature of `curve` and returns `(λ*, κ(λ*))`.
pub fn select_lambda(curve: &LCurve) -> Result<(f64, f64)> {
    if curve.len() < 3 {
        return Err(Error::Parameter(
            "selection needs at least 3 grid points".into(),
        ));
    }
    let us: Vec<f64> = curve.lambdas.iter().map(|l| l.ln()).collect();
    let k = curvature(&us, &curve.xs, &curve.ys);
    let j = argmax_curvature(&k)?;
    Ok((curve.lambdas[j], k[j]))
}
