//! Small-noise analysis on synthetic spectra: exact MSE series, their
//! leading-order closed forms, optimal regularization strengths, and Monte
//! Carlo cross-checks.
//!
//! A model is a sequence of eigenvalues `λ_i`, true coefficients `c_i` and a
//! noise level `σ`. With standard normal `ξ_i`, the two estimators have
//! coefficient errors
//!
//! * RKHS: `(σ λ_i^{3/2} ξ_i − λ c_i) / (λ_i² + λ)`
//! * `L²ρ`: `(σ λ_i^{1/2} ξ_i − λ c_i) / (λ_i + λ)`
//!
//! whose expected squares sum to `e_hg(λ)` and `e_l2(λ)`.

mod gamma;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

pub use gamma::gamma_fn;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

use rand::Rng;
use rand_distr::StandardNormal;

/// Hard cap on the number of explicit terms for power-law spectra.
pub const MAX_POWER_TERMS: usize = 1_000_000;

const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decay {
    /// `λ_i = e^{−θ i}`.
    Exponential,
    /// `λ_i = i^{−θ}`.
    Power,
}

impl Decay {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exponential" | "exp" => Ok(Decay::Exponential),
            "power" | "poly" => Ok(Decay::Power),
            other => Err(Error::Parameter(format!("unknown decay '{other}'"))),
        }
    }

    pub fn eigenvalue(&self, theta: f64, i: f64) -> f64 {
        match self {
            Decay::Exponential => (-theta * i).exp(),
            Decay::Power => i.powf(-theta),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientRule {
    /// `c_i² = λ_i`.
    Picard,
    /// `c_i² = M₀ λ_i`, so `sup λ_i^{-1} c_i² = M₀`.
    Bounded(f64),
    /// Given `c_i`; the eigenvalue sequence is truncated to its length.
    Explicit(Vec<f64>),
}

/// `∫_{x₀}^∞` of the summand over `λ(x) = x^{−θ}`, `c(x)² = scale · λ(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PowerTail {
    theta: f64,
    start: f64,
    scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    pub eigenvalues: Vec<f64>,
    /// `c_i`, aligned with `eigenvalues`.
    pub coefficients: Vec<f64>,
    pub sigma: f64,
    tail: Option<PowerTail>,
}

/// Default truncation target: `λ_N < σ⁴ · 1e-3` (or `1e-24` when `σ = 0`).
fn truncation_target(sigma: f64) -> f64 {
    if sigma > 0.0 {
        sigma.powi(4) * 1e-3
    } else {
        1e-24
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "sigma must be nonnegative, got {sigma}"
        )))
    }
}

impl SpectralModel {
    /// Rule-based spectrum. `terms` overrides the default truncation.
    pub fn from_rule(
        decay: Decay,
        theta: f64,
        coefficients: CoefficientRule,
        sigma: f64,
        terms: Option<usize>,
    ) -> Result<Self> {
        check_sigma(sigma)?;
        let min_theta = match decay {
            Decay::Exponential => 0.0,
            Decay::Power => 1.0,
        };
        if !(theta.is_finite() && theta > min_theta) {
            return Err(Error::Domain(format!(
                "{decay:?} decay needs theta > {min_theta}, got {theta}"
            )));
        }
        let target = truncation_target(sigma);
        let default_terms = match decay {
            Decay::Exponential => (-target.ln() / theta).ceil() as usize,
            Decay::Power => (target.powf(-1.0 / theta).ceil().min(MAX_POWER_TERMS as f64)) as usize,
        };
        let mut n = terms.unwrap_or(default_terms).max(1);
        let scale = match &coefficients {
            CoefficientRule::Picard => Some(1.0),
            CoefficientRule::Bounded(m0) => {
                if !(m0.is_finite() && *m0 >= 0.0) {
                    return Err(Error::Parameter(format!(
                        "M0 must be nonnegative, got {m0}"
                    )));
                }
                Some(*m0)
            }
            CoefficientRule::Explicit(c) => {
                if c.is_empty() {
                    return Err(Error::Parameter(
                        "explicit coefficient list is empty".into(),
                    ));
                }
                n = c.len();
                None
            }
        };
        let eigenvalues: Vec<f64> = (1..=n).map(|i| decay.eigenvalue(theta, i as f64)).collect();
        let coefficients = match coefficients {
            CoefficientRule::Explicit(c) => c,
            _ => {
                let s = scale.unwrap_or(1.0);
                eigenvalues.iter().map(|l| (s * l).sqrt()).collect()
            }
        };
        let tail = match (decay, scale) {
            (Decay::Power, Some(scale)) => Some(PowerTail {
                theta,
                start: n as f64 + 0.5,
                scale,
            }),
            _ => None,
        };
        Ok(Self {
            eigenvalues,
            coefficients,
            sigma,
            tail,
        })
    }

    pub fn exponential(theta: f64, coefficients: CoefficientRule, sigma: f64) -> Result<Self> {
        Self::from_rule(Decay::Exponential, theta, coefficients, sigma, None)
    }

    pub fn power(theta: f64, coefficients: CoefficientRule, sigma: f64) -> Result<Self> {
        Self::from_rule(Decay::Power, theta, coefficients, sigma, None)
    }

    /// A finite model; eigenvalues must be positive and nonincreasing.
    pub fn explicit(eigenvalues: Vec<f64>, coefficients: Vec<f64>, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if eigenvalues.is_empty() || eigenvalues.len() != coefficients.len() {
            return Err(Error::Parameter(format!(
                "{} eigenvalues and {} coefficients",
                eigenvalues.len(),
                coefficients.len()
            )));
        }
        if eigenvalues.iter().any(|l| !(l.is_finite() && *l > 0.0))
            || eigenvalues.windows(2).any(|w| w[1] > w[0])
        {
            return Err(Error::Parameter(
                "eigenvalues must be positive and nonincreasing".into(),
            ));
        }
        Ok(Self {
            eigenvalues,
            coefficients,
            sigma,
            tail: None,
        })
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self {
            sigma,
            ..self.clone()
        })
    }

    /// Number of explicit terms `N`.
    pub fn terms(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn has_tail(&self) -> bool {
        self.tail.is_some()
    }

    /// `Σ_i f(λ_i, c_i²)` in fixed-size chunks reduced in index order, plus the
    /// integral tail when present.
    fn sum_terms<const K: usize, F>(&self, f: F) -> [f64; K]
    where
        F: Fn(f64, f64) -> [f64; K] + Sync,
    {
        let partials: Vec<[f64; K]> = self
            .eigenvalues
            .par_chunks(CHUNK)
            .zip(self.coefficients.par_chunks(CHUNK))
            .map(|(ls, cs)| {
                let mut acc = [0.0; K];
                // smallest terms first
                for (l, c) in ls.iter().zip(cs).rev() {
                    let v = f(*l, c * c);
                    for k in 0..K {
                        acc[k] += v[k];
                    }
                }
                acc
            })
            .collect();
        let mut total = [0.0; K];
        if let Some(tail) = self.tail {
            total = tail_integral(tail, &f);
        }
        for p in partials.iter().rev() {
            for k in 0..K {
                total[k] += p[k];
            }
        }
        total
    }
}

/// Simpson's rule on `x = x₀ e^v`, `v ∈ [0, V]`, with `V` large enough that
/// the integrand has decayed by `e^{-40}` relative to its power-law envelope.
fn tail_integral<const K: usize, F>(tail: PowerTail, f: &F) -> [f64; K]
where
    F: Fn(f64, f64) -> [f64; K],
{
    let v_max = (40.0 / (tail.theta - 1.0)).clamp(20.0, 4000.0);
    let steps = {
        let s = (v_max / 0.02).ceil() as usize;
        s + s % 2
    };
    let h = v_max / steps as f64;
    let mut acc = [0.0; K];
    for j in 0..=steps {
        let x = tail.start * (j as f64 * h).exp();
        let l = x.powf(-tail.theta);
        let w = if j == 0 || j == steps {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let v = f(l, tail.scale * l);
        for k in 0..K {
            acc[k] += w * v[k] * x;
        }
    }
    acc.map(|a| a * h / 3.0)
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

/// `(e_hg(λ), e_l2(λ))`.
pub fn mse_exact(model: &SpectralModel, lambda: f64) -> Result<(f64, f64)> {
    check_lambda(lambda)?;
    let s2 = model.sigma * model.sigma;
    let l2 = lambda * lambda;
    let [hg, l2rho] = model.sum_terms(|li, c2| {
        let dh = li * li + lambda;
        let dl = li + lambda;
        [
            (s2 * li * li * li + l2 * c2) / (dh * dh),
            (s2 * li + l2 * c2) / (dl * dl),
        ]
    });
    Ok((hg, l2rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseCurve {
    pub lambda: f64,
    pub e_hg: f64,
    pub e_l2: f64,
}

pub fn mse_curve(model: &SpectralModel, lambdas: &[f64]) -> Result<Vec<MseCurve>> {
    lambdas
        .iter()
        .map(|&lambda| mse_exact(model, lambda).map(|(e_hg, e_l2)| MseCurve { lambda, e_hg, e_l2 }))
        .collect()
}

/// The series behind `e_hg = σ²A + λ²B`, `e_l2 = σ²Ã + λ²B̃` and the
/// first-order conditions `λ = −σ² A′ / (2 B₁)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesPack {
    /// `Σ (λ_i² + λ)^{-2} λ_i³`
    pub a: f64,
    /// `Σ (λ_i² + λ)^{-2} c_i²`
    pub b: f64,
    /// `−2 Σ (λ_i² + λ)^{-3} λ_i³`
    pub a_prime: f64,
    /// `Σ (λ_i² + λ)^{-3} λ_i² c_i²`
    pub b1: f64,
    /// `Σ (λ_i + λ)^{-2} λ_i`
    pub a_tilde: f64,
    /// `Σ (λ_i + λ)^{-2} c_i²`
    pub b_tilde: f64,
    /// `−2 Σ (λ_i + λ)^{-3} λ_i`
    pub a_tilde_prime: f64,
    /// `Σ (λ_i + λ)^{-3} λ_i c_i²`
    pub b1_tilde: f64,
}

pub fn series_pack(model: &SpectralModel, lambda: f64) -> Result<SeriesPack> {
    check_lambda(lambda)?;
    let v = model.sum_terms(|li, c2| {
        let dh = li * li + lambda;
        let dl = li + lambda;
        let (dh2, dl2) = (dh * dh, dl * dl);
        let (dh3, dl3) = (dh2 * dh, dl2 * dl);
        let l3 = li * li * li;
        [
            l3 / dh2,
            c2 / dh2,
            -2.0 * l3 / dh3,
            li * li * c2 / dh3,
            li / dl2,
            c2 / dl2,
            -2.0 * li / dl3,
            li * c2 / dl3,
        ]
    });
    Ok(SeriesPack {
        a: v[0],
        b: v[1],
        a_prime: v[2],
        b1: v[3],
        a_tilde: v[4],
        b_tilde: v[5],
        a_tilde_prime: v[6],
        b1_tilde: v[7],
    })
}

/// Leading-order approximations of the five series used in the small-`λ`
/// analysis. With `c_i² = λ_i`, `b_c` is `B` and `b_tilde_c` is `B̃₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormSeries {
    /// `A(λ)`
    pub a: f64,
    /// `Σ (λ_i² + λ)^{-2} λ_i`
    pub b_c: f64,
    /// `Ã(λ)`
    pub a_tilde: f64,
    /// `Ã′(λ)`
    pub a_tilde_prime: f64,
    /// `Σ (λ_i + λ)^{-3} λ_i²`
    pub b_tilde_c: f64,
}

fn check_small_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "closed forms need 0 < lambda < 1, got {lambda}"
        )))
    }
}

/// `λ_i = e^{−θ i}`.
pub fn closed_form_exponential(theta: f64, lambda: f64) -> Result<ClosedFormSeries> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::Domain(format!(
            "theta must be positive, got {theta}"
        )));
    }
    check_small_lambda(lambda)?;
    let r = lambda.sqrt();
    let at = (1.0 / r).atan();
    let q = r / (1.0 + lambda);
    let one = 1.0 + lambda;
    Ok(ClosedFormSeries {
        a: (at - q) / (2.0 * theta * r),
        b_c: (at + q) / (2.0 * theta * lambda * r),
        a_tilde: 1.0 / (theta * lambda * one),
        a_tilde_prime: -(1.0 + 2.0 * lambda) / (theta * lambda * lambda * one * one),
        b_tilde_c: 1.0 / (2.0 * theta * lambda * one * one),
    })
}

/// `C_θ(s, k, α) = Γ(γ) Γ(k − γ)` with `γ = (α − 1/θ) / (1 + s)`.
pub fn c_theta(theta: f64, s: u32, k: u32, alpha: u32) -> Result<f64> {
    let gamma = (alpha as f64 - 1.0 / theta) / (1.0 + s as f64);
    Ok(gamma_fn(gamma)? * gamma_fn(k as f64 - gamma)?)
}

/// `λ_i = i^{−θ}`, `θ > 1`.
pub fn closed_form_power(theta: f64, lambda: f64) -> Result<ClosedFormSeries> {
    if !(theta.is_finite() && theta > 1.0) {
        return Err(Error::Domain(format!(
            "power decay needs theta > 1, got {theta}"
        )));
    }
    check_small_lambda(lambda)?;
    let p = 1.0 / theta;
    let term = |scale: f64, gamma: f64, k: f64, c: f64| scale * lambda.powf(gamma - k) * c;
    let h = 1.0 / (2.0 * theta);
    Ok(ClosedFormSeries {
        a: term(h, 0.5 * (3.0 - p), 2.0, c_theta(theta, 1, 2, 3)?),
        b_c: term(h, 0.5 * (1.0 - p), 2.0, c_theta(theta, 1, 2, 1)?),
        a_tilde: term(p, 1.0 - p, 2.0, c_theta(theta, 0, 2, 1)?),
        a_tilde_prime: -term(p, 1.0 - p, 3.0, c_theta(theta, 0, 3, 1)?),
        b_tilde_c: term(h, 2.0 - p, 3.0, c_theta(theta, 0, 3, 2)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MseKind {
    /// RKHS regularizer.
    Hg,
    /// `L²ρ` regularizer.
    L2,
}

fn mse_of(model: &SpectralModel, kind: MseKind, lambda: f64) -> Result<f64> {
    let (hg, l2) = mse_exact(model, lambda)?;
    Ok(match kind {
        MseKind::Hg => hg,
        MseKind::L2 => l2,
    })
}

const GRID_PER_DECADE: f64 = 10.0;
const GOLDEN_TOL: f64 = 1e-4;

/// Minimizer of `e_hg` or `e_l2` over `λ > 0`.
///
/// A coarse log-grid scan over `[λ_N²·1e-3, λ₁·1e3]` (hg) or
/// `[λ_N·1e-3, λ₁·1e3]` (l2) brackets the minimum, golden-section search on
/// `log λ` narrows the bracket to a relative width of `1e-4`, and one step
/// of the fixed-point relation `λ = −σ²A′/(2B₁)` (or its tilde analogue) is
/// kept if it lowers the MSE. Returns 0 when `σ = 0`.
pub fn optimal_lambda(model: &SpectralModel, kind: MseKind) -> Result<f64> {
    if model.sigma == 0.0 {
        return Ok(0.0);
    }
    let l1 = model.eigenvalues[0];
    let ln = *model.eigenvalues.last().unwrap();
    let lo = match kind {
        MseKind::Hg => ln * ln * 1e-3,
        MseKind::L2 => ln * 1e-3,
    }
    .max(1e-300);
    let hi = l1 * 1e3;
    let (ulo, uhi) = (lo.ln(), hi.ln());
    let count = (((uhi - ulo) / std::f64::consts::LN_10 * GRID_PER_DECADE).ceil() as usize).max(3);
    let us: Vec<f64> = (0..=count)
        .map(|j| ulo + (uhi - ulo) * j as f64 / count as f64)
        .collect();
    let vals: Vec<f64> = us
        .iter()
        .map(|&u| mse_of(model, kind, u.exp()))
        .collect::<Result<_>>()?;
    let mut j = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[j] {
            j = i;
        }
    }
    let mut a = us[j.saturating_sub(1)];
    let mut b = us[(j + 1).min(count)];
    let f = |u: f64| mse_of(model, kind, u.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > GOLDEN_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let (mut best, mut best_val) = if fc <= fd {
        (c.exp(), fc)
    } else {
        (d.exp(), fd)
    };
    if vals[j] < best_val {
        best = us[j].exp();
        best_val = vals[j];
    }
    let sp = series_pack(model, best)?;
    let s2 = model.sigma * model.sigma;
    let polished = match kind {
        MseKind::Hg => -s2 * sp.a_prime / (2.0 * sp.b1),
        MseKind::L2 => -s2 * sp.a_tilde_prime / (2.0 * sp.b1_tilde),
    };
    if polished.is_finite() && polished > 0.0 && mse_of(model, kind, polished)? < best_val {
        best = polished;
    }
    Ok(best)
}

/// Constants of the sharp small-noise rates as stated for `c_i² = λ_i`:
/// `min e_hg ≈ C_hg σ`, `min e_l2 ≈ C_l2 σ`, `λ̃_opt ≈ C_λ σ`
/// (and `λ_opt = σ²`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpConstants {
    pub c_hg: f64,
    pub c_l2: f64,
    pub c_lambda: f64,
}

pub fn sharp_constants(theta: f64, decay: Decay) -> Result<SharpConstants> {
    match decay {
        Decay::Exponential => {
            if !(theta.is_finite() && theta > 0.0) {
                return Err(Error::Domain(format!(
                    "theta must be positive, got {theta}"
                )));
            }
            Ok(SharpConstants {
                c_hg: PI / (4.0 * theta),
                c_l2: 2.0 / theta,
                c_lambda: 1.0,
            })
        }
        Decay::Power => {
            if !(theta.is_finite() && theta > 1.0) {
                return Err(Error::Domain(format!(
                    "power decay needs theta > 1, got {theta}"
                )));
            }
            let h = 0.5 / theta;
            let c_hg = h * gamma_fn(0.5 - h)? * gamma_fn(0.5 + h)?;
            Ok(SharpConstants {
                c_hg,
                c_l2: 2.0 * c_hg,
                c_lambda: ((theta + 1.0) / (theta - 1.0)).sqrt(),
            })
        }
    }
}

/// Leading-order behaviour of the exact series for `c_i² = λ_i`, derived by
/// evaluating `e_hg(σ²)` and `e_l2(C_λ σ)` as integrals:
/// `min e ≈ C σ^κ` with `κ = 1` (exponential) or `κ = 1 − 1/θ` (power).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeadingOrder {
    pub exponent: f64,
    pub c_hg: f64,
    pub c_l2: f64,
    pub c_lambda: f64,
}

pub fn leading_order(theta: f64, decay: Decay) -> Result<LeadingOrder> {
    match decay {
        Decay::Exponential => {
            if !(theta.is_finite() && theta > 0.0) {
                return Err(Error::Domain(format!(
                    "theta must be positive, got {theta}"
                )));
            }
            Ok(LeadingOrder {
                exponent: 1.0,
                c_hg: PI / (2.0 * theta),
                c_l2: 2.0 / theta,
                c_lambda: 1.0,
            })
        }
        Decay::Power => {
            if !(theta.is_finite() && theta > 1.0) {
                return Err(Error::Domain(format!(
                    "power decay needs theta > 1, got {theta}"
                )));
            }
            let p = 1.0 / theta;
            let c_lambda = ((theta + 1.0) / (theta - 1.0)).sqrt();
            let c_hg = 0.5 * p * gamma_fn(0.5 - 0.5 * p)? * gamma_fn(0.5 + 0.5 * p)?;
            let c_l2 = p
                * gamma_fn(1.0 - p)?
                * gamma_fn(1.0 + p)?
                * (1.0 + c_lambda * c_lambda)
                * c_lambda.powf(-(1.0 + p));
            Ok(LeadingOrder {
                exponent: 1.0 - p,
                c_hg,
                c_l2,
                c_lambda,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloMse {
    pub mean_hg: f64,
    pub mean_l2: f64,
    pub stderr_hg: f64,
    pub stderr_l2: f64,
}

const MC_CHUNK: usize = 1000;

/// Sample means of the squared coefficient errors over `n_draws` draws of
/// `ξ`. Chunk `j` of 1000 draws uses seed `derive_seed(seed, j)`; an
/// integral tail, if present, enters through its expectation.
pub fn monte_carlo_mse(
    model: &SpectralModel,
    lambda: f64,
    n_draws: usize,
    seed: u64,
) -> Result<MonteCarloMse> {
    check_lambda(lambda)?;
    if n_draws < 100 {
        return Err(Error::Parameter(format!(
            "need at least 100 draws, got {n_draws}"
        )));
    }
    let sigma = model.sigma;
    let tail_mean = match model.tail {
        Some(t) => {
            let s2 = sigma * sigma;
            let l2 = lambda * lambda;
            tail_integral(t, &|li: f64, c2: f64| {
                let dh = li * li + lambda;
                let dl = li + lambda;
                [
                    (s2 * li * li * li + l2 * c2) / (dh * dh),
                    (s2 * li + l2 * c2) / (dl * dl),
                ]
            })
        }
        None => [0.0, 0.0],
    };
    let chunks = n_draws.div_ceil(MC_CHUNK);
    let draws: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng_from_seed(derive_seed(seed, j as u64));
            let count = MC_CHUNK.min(n_draws - j * MC_CHUNK);
            (0..count)
                .map(|_| {
                    let (mut hg, mut l2) = (0.0, 0.0);
                    for (&li, &ci) in model.eigenvalues.iter().zip(&model.coefficients) {
                        let xi: f64 = rng.sample(StandardNormal);
                        let eh = (sigma * li * li.sqrt() * xi - lambda * ci) / (li * li + lambda);
                        let el = (sigma * li.sqrt() * xi - lambda * ci) / (li + lambda);
                        hg += eh * eh;
                        l2 += el * el;
                    }
                    (hg + tail_mean[0], l2 + tail_mean[1])
                })
                .collect()
        })
        .collect();
    let values: Vec<(f64, f64)> = draws.into_iter().flatten().collect();
    let (m_hg, s_hg) = mean_and_stderr(values.iter().map(|v| v.0));
    let (m_l2, s_l2) = mean_and_stderr(values.iter().map(|v| v.1));
    Ok(MonteCarloMse {
        mean_hg: m_hg,
        mean_l2: m_l2,
        stderr_hg: s_hg,
        stderr_l2: s_l2,
    })
}

fn mean_and_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Which set of constants predicts the minimal MSE in [`rate_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantsSource {
    /// [`sharp_constants`], predicting `C σ`.
    Stated,
    /// [`leading_order`], predicting `C σ^κ`.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub sigma: f64,
    pub lambda_opt_hg: f64,
    pub lambda_opt_l2: f64,
    pub e_hg_min: f64,
    pub e_l2_min: f64,
    pub predicted_hg: f64,
    pub predicted_l2: f64,
}

/// Optimal `λ` and minimal MSE for `c_i² = λ_i` at each `σ`, next to the
/// predicted minimal MSE.
pub fn rate_table(
    decay: Decay,
    theta: f64,
    sigmas: &[f64],
    constants: ConstantsSource,
) -> Result<Vec<RateRow>> {
    let (exponent, c_hg, c_l2) = match constants {
        ConstantsSource::Stated => {
            let c = sharp_constants(theta, decay)?;
            (1.0, c.c_hg, c.c_l2)
        }
        ConstantsSource::Exact => {
            let c = leading_order(theta, decay)?;
            (c.exponent, c.c_hg, c.c_l2)
        }
    };
    sigmas
        .iter()
        .map(|&sigma| {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::Parameter(format!(
                    "sigma must be positive, got {sigma}"
                )));
            }
            let model =
                SpectralModel::from_rule(decay, theta, CoefficientRule::Picard, sigma, None)?;
            let lambda_opt_hg = optimal_lambda(&model, MseKind::Hg)?;
            let lambda_opt_l2 = optimal_lambda(&model, MseKind::L2)?;
            Ok(RateRow {
                sigma,
                lambda_opt_hg,
                lambda_opt_l2,
                e_hg_min: mse_of(&model, MseKind::Hg, lambda_opt_hg)?,
                e_l2_min: mse_of(&model, MseKind::L2, lambda_opt_l2)?,
                predicted_hg: c_hg * sigma.powf(exponent),
                predicted_l2: c_l2 * sigma.powf(exponent),
            })
        })
        .collect()
}
