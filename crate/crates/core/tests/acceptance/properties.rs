use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use dartr::experiments::{run_noise_sweep, ExperimentConfig};
use dartr::io::config::{Command, KernelArg, PhiArg, RunConfig};
use dartr::io::output::write_atomic;
use dartr::lcurve::{build_lcurve, select_lambda};
use dartr::measure::{basis_matrix, exploration_measure, l2rho_inner};
use dartr::mesh::{build_forward, generate_data, phi_true_catalog, KernelSpec, PhiCatalog};
use dartr::regularize::{rkhs_solve, solve_tikhonov, RegularizerKind};
use dartr::rng::derive_seed;
use dartr::spectral::{coefficients, fsoi_project, generalized_eigen, projected_error};
use dartr::theory::{
    mse_exact, optimal_lambda, series_pack, CoefficientRule, ConstantsSource, Decay, MseKind,
    SpectralModel,
};
use dartr::triplet::{assemble_triplet, loss};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use crate::common::*;
use crate::criteria::{noise_sweep, synthetic};
use crate::Outcome;

const CASES: u32 = 100;

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        max_shrink_iters: 64,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn prop<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> std::result::Result<(), TestCaseError>,
) -> std::result::Result<String, String> {
    runner(cases)
        .run(&strategy, test)
        .map(|_| format!("{cases} random instances"))
        .map_err(|e| e.to_string())
}

fn fail(msg: String) -> std::result::Result<(), TestCaseError> {
    Err(TestCaseError::fail(msg))
}

/// Problem shape `(m, n)` and seed.
fn shapes() -> impl Strategy<Value = (usize, usize, u64)> {
    (3usize..30, 2usize..20, any::<u64>())
}

fn lambda_fraction() -> impl Strategy<Value = f64> {
    (-6.0f64..0.0).prop_map(|e| 10f64.powf(e))
}

// mesh_kernel

fn forward_is_linear() -> std::result::Result<String, String> {
    prop(
        CASES,
        (shapes(), -10i32..10, 0.1f64..10.0),
        |((m, n, seed), k, c)| {
            let p = random_problem(seed, m, n);
            let KernelSpec::Tabulated(kmat) = &p.kernel else {
                unreachable!()
            };
            let l = &p.forward;
            let pow2 = 2f64.powi(k);
            let scaled =
                build_forward(&p.source, &p.obs, &KernelSpec::Tabulated(kmat * pow2)).unwrap();
            if scaled != l * pow2 {
                return fail(format!("power-of-two scale {pow2} is not exact"));
            }
            let scaled =
                build_forward(&p.source, &p.obs, &KernelSpec::Tabulated(kmat * c)).unwrap();
            let worst = scaled
                .iter()
                .zip(l.iter())
                .map(|(s, v)| (s - c * v).abs() / (c * v).abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            prop_assert!(worst <= 4.0 * f64::EPSILON, "scale {c}: relerr {worst}");
            Ok(())
        },
    )
}

fn data_is_reproducible() -> std::result::Result<String, String> {
    let p = reference_problem(KernelSpec::Exp);
    let phi = DVector::from_iterator(100, p.source.points().iter().map(|s| s * s));
    prop(CASES, (any::<u64>(), 0.0f64..2.0), |(seed, nsr)| {
        let (y1, s1) = generate_data(&p, &phi, nsr, seed).unwrap();
        let (y2, s2) = generate_data(&p, &phi, nsr, seed).unwrap();
        prop_assert!(s1.to_bits() == s2.to_bits());
        prop_assert!(y1
            .iter()
            .zip(y2.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        Ok(())
    })
}

fn noise_has_nominal_variance() -> std::result::Result<String, String> {
    let p = reference_problem(KernelSpec::Exp);
    let phi = DVector::from_iterator(100, p.source.points().iter().map(|s| s * s));
    let clean = &p.forward * &phi;
    let dt = 0.01;
    let m = p.m() as f64;
    let ratios: Vec<f64> = (0..200)
        .map(|j| {
            let (y, sigma) = generate_data(&p, &phi, 1.0, derive_seed(300, j)).unwrap();
            (y - &clean).norm_squared() / (m * sigma * sigma * dt)
        })
        .collect();
    let mean = ratios.iter().sum::<f64>() / 200.0;
    if (0.9..=1.1).contains(&mean) {
        Ok(format!("200 seeds at m=500, mean ratio {mean:.4}"))
    } else {
        Err(format!("mean ratio {mean:.4} outside [0.9, 1.1]"))
    }
}

// measure

fn rho_is_scale_invariant() -> std::result::Result<String, String> {
    prop(CASES, (shapes(), -3.0f64..3.0), |((m, n, seed), e)| {
        let c = 10f64.powf(e);
        let p = random_problem(seed, m, n);
        let KernelSpec::Tabulated(kmat) = &p.kernel else {
            unreachable!()
        };
        let q = tabulated_problem(kmat * c);
        let w1 = exploration_measure(&p).unwrap().weights;
        let w2 = exploration_measure(&q).unwrap().weights;
        for (a, b) in w1.iter().zip(&w2) {
            prop_assert!((a - b).abs() <= 1e-14 * a.abs(), "{a} vs {b} at scale {c}");
        }
        Ok(())
    })
}

fn masked_problem(m: usize, n: usize, seed: u64, mask: &[bool]) -> dartr::mesh::DiscretizedProblem {
    let mut r = rng(seed);
    let mut k = DMatrix::from_vec(m, n, normals(&mut r, m * n));
    for (j, keep) in mask.iter().enumerate().take(n) {
        if !keep {
            k.column_mut(j).fill(0.0);
        }
    }
    tabulated_problem(k)
}

fn mask_strategy() -> impl Strategy<Value = (usize, usize, u64, Vec<bool>)> {
    (3usize..20, 2usize..15, any::<u64>()).prop_flat_map(|(m, n, seed)| {
        let mask = proptest::collection::vec(any::<bool>(), n).prop_map(|mut v| {
            v[0] = true;
            v
        });
        (Just(m), Just(n), Just(seed), mask)
    })
}

fn support_matches_zero_columns() -> std::result::Result<String, String> {
    prop(CASES, mask_strategy(), |(m, n, seed, mask)| {
        let p = masked_problem(m, n, seed, &mask);
        let rho = exploration_measure(&p).unwrap();
        for k in 0..n {
            let nonzero = p.forward.column(k).iter().any(|v| *v != 0.0);
            prop_assert_eq!(rho.support[k], nonzero);
            prop_assert_eq!(rho.weights[k] == 0.0, !nonzero);
        }
        Ok(())
    })
}

fn inner_product_is_positive_on_support() -> std::result::Result<String, String> {
    prop(
        CASES,
        (mask_strategy(), any::<u64>()),
        |((m, n, seed, mask), vseed)| {
            let p = masked_problem(m, n, seed, &mask);
            let b = basis_matrix(&exploration_measure(&p).unwrap());
            let mut r = rng(vseed);
            let mut phi = DVector::from_vec(normals(&mut r, n));
            let psi = DVector::from_vec(normals(&mut r, n));
            for k in 0..n {
                if !mask[k] {
                    phi[k] = 0.0;
                }
            }
            prop_assert!(l2rho_inner(&phi, &phi, &b).unwrap() > 0.0);
            let ab = l2rho_inner(&phi, &psi, &b).unwrap();
            let ba = l2rho_inner(&psi, &phi, &b).unwrap();
            // cancellation: bound by the Cauchy-Schwarz scale, not |ab|
            let scale = (l2rho_inner(&phi, &phi, &b).unwrap()
                * l2rho_inner(&psi, &psi, &b).unwrap())
            .sqrt();
            prop_assert!((ab - ba).abs() <= 1e-14 * scale);
            Ok(())
        },
    )
}

// triplet

fn loss_matches_residual() -> std::result::Result<String, String> {
    prop(CASES, (shapes(), any::<u64>()), |((m, n, seed), vseed)| {
        let p = random_problem(seed, m, n);
        let b = basis_matrix(&exploration_measure(&p).unwrap());
        let mut r = rng(vseed);
        let y = DVector::from_vec(normals(&mut r, m));
        let phi = DVector::from_vec(normals(&mut r, n));
        let residual = (&y - &p.forward * &phi).norm_squared();
        let t = assemble_triplet(&p.with_observations(y, 1.0).unwrap(), &b).unwrap();
        let e = rel(loss(&t, &phi), residual);
        prop_assert!(e < 1e-10, "relerr {e}");
        Ok(())
    })
}

fn noiseless_b_in_range() -> std::result::Result<String, String> {
    prop(CASES, (shapes(), any::<u64>()), |((m, n, seed), vseed)| {
        let p = random_problem(seed, m, n);
        let basis = basis_matrix(&exploration_measure(&p).unwrap());
        let phi = DVector::from_vec(normals(&mut rng(vseed), n));
        let t = assemble_triplet(&p.observe(&phi, 0.0, 0).unwrap(), &basis).unwrap();
        let eig = SymmetricEigen::new(t.a.clone());
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let tau = top * n as f64 * f64::EPSILON;
        let mut pinv = DMatrix::zeros(n, n);
        for (j, mu) in eig.eigenvalues.iter().enumerate() {
            if *mu > tau {
                let u = eig.eigenvectors.column(j);
                pinv += u * u.transpose() / *mu;
            }
        }
        let e = rel_vec(&(&t.a * (pinv * &t.b)), &t.b);
        prop_assert!(e < 1e-8, "relerr {e}");
        Ok(())
    })
}

// spectral

fn spectral_direct_l2rho() -> std::result::Result<String, String> {
    prop(
        CASES,
        (shapes(), lambda_fraction(), any::<u64>()),
        |((m, n, seed), frac, nseed)| {
            let s = setup(random_problem(seed, m, n));
            let phi = DVector::from_vec(normals(&mut rng(nseed), n));
            let t =
                assemble_triplet(&s.problem.observe(&phi, 0.5, nseed).unwrap(), &s.basis).unwrap();
            let lambda = frac * s.spectrum.eigenvalues[0];
            let v = &s.spectrum.eigenvectors;
            // Vᵀ B φ^y with φ^y = B⁻¹ b on the support is Vᵀ b
            let vtb = v.tr_mul(&t.b);
            let spectral =
                v * DVector::from_fn(n, |i, _| vtb[i] / (s.spectrum.eigenvalues[i] + lambda));
            let direct = solve_tikhonov(&t, &s.spectrum, RegularizerKind::L2Rho, lambda)
                .unwrap()
                .phi;
            let e = rel_vec(&direct, &spectral);
            prop_assert!(e < 1e-8, "relerr {e} at lambda/lambda_1 = {frac}");
            Ok(())
        },
    )
}

fn spectral_rkhs() -> std::result::Result<String, String> {
    prop(
        CASES,
        (shapes(), lambda_fraction(), any::<u64>()),
        |((m, n, seed), frac, nseed)| {
            let s = setup(random_problem(seed, m, n));
            let phi = DVector::from_vec(normals(&mut rng(nseed), n));
            let t =
                assemble_triplet(&s.problem.observe(&phi, 0.5, nseed).unwrap(), &s.basis).unwrap();
            let lam = &s.spectrum.eigenvalues;
            let lambda = frac * lam[0];
            let r = s.spectrum.rank;
            let vr = s.spectrum.eigenvectors.columns(0, r);
            let vtb = vr.tr_mul(&t.b);
            let spectral =
                vr * DVector::from_fn(r, |i, _| lam[i] * vtb[i] / (lam[i] * lam[i] + lambda));
            let e = rel_vec(&rkhs_solve(&t, &s.spectrum, lambda).unwrap().phi, &spectral);
            prop_assert!(e < 1e-8, "relerr {e}");
            Ok(())
        },
    )
}

fn rkhs_norm_dominates() -> std::result::Result<String, String> {
    prop(CASES, (shapes(), any::<u64>()), |((m, n, seed), cseed)| {
        let s = setup(random_problem(seed, m, n));
        let r = s.spectrum.rank;
        let c0 = DVector::from_vec(normals(&mut rng(cseed), r));
        let phi = s.spectrum.eigenvectors.columns(0, r) * c0;
        let c = coefficients(&phi, &s.spectrum, &s.basis);
        let lam = &s.spectrum.eigenvalues;
        let hg: f64 = (0..r).map(|i| c[i] * c[i] / lam[i]).sum();
        let l2: f64 = c.norm_squared() / lam[0];
        prop_assert!(hg >= l2 * (1.0 - 1e-10), "{hg} < {l2}");
        Ok(())
    })
}

fn operator_norm_identity() -> std::result::Result<String, String> {
    prop(CASES, (shapes(), any::<u64>()), |((m, n, seed), vseed)| {
        let s = setup(random_problem(seed, m, n));
        let phi = DVector::from_vec(normals(&mut rng(vseed), n));
        let c = s.spectrum.eigenvectors.tr_mul(&(&s.basis * &phi));
        let spectral: f64 = (0..n)
            .map(|i| s.spectrum.eigenvalues[i] * c[i] * c[i])
            .sum();
        let e = rel(spectral, phi.dot(&(&s.a * &phi)));
        prop_assert!(e < 1e-8, "relerr {e}");
        Ok(())
    })
}

fn noiseless_decomposition() -> std::result::Result<String, String> {
    prop(CASES, (shapes(), any::<u64>()), |((m, n, seed), vseed)| {
        let s = setup(random_problem(seed, m, n));
        let phi = DVector::from_vec(normals(&mut rng(vseed), n));
        let t = assemble_triplet(&s.problem.observe(&phi, 0.0, 0).unwrap(), &s.basis).unwrap();
        let d = s.basis.diagonal();
        let phi_y = t.b.component_div(&d);
        let lg = (&s.a * &phi).component_div(&d);
        let e = rel_vec(&phi_y, &lg);
        prop_assert!(e < 1e-10, "relerr {e}");
        Ok(())
    })
}

// regularize

fn bias_expansion() -> std::result::Result<String, String> {
    let strategy = (2usize..10, any::<u64>(), -4.0f64..0.0, 0.0f64..0.5).prop_flat_map(
        |(n, seed, le, sigma)| {
            (
                Just(n),
                1..=n,
                Just(seed),
                Just(10f64.powf(le)),
                Just(sigma),
            )
        },
    );
    prop(CASES, strategy, |(n, r, seed, lambda, sigma)| {
        let mut g = rng(seed);
        let mut lam: Vec<f64> = (0..n)
            .map(|i| {
                if i < r {
                    10f64.powf(-1.5 * rand::Rng::random::<f64>(&mut g))
                } else {
                    0.0
                }
            })
            .collect();
        lam.sort_by(|a, b| b.total_cmp(a));
        let syn = synthetic(seed ^ 1, &lam);
        let c = normals(&mut g, n);
        let xi = normals(&mut g, r);
        let phi_true = &syn.v * DVector::from_column_slice(&c);
        let coef_y = DVector::from_fn(n, |i, _| {
            if i < r {
                lam[i] * c[i] + sigma * lam[i].sqrt() * xi[i]
            } else {
                0.0
            }
        });
        let t = dartr::triplet::RegressionTriplet {
            a: syn.a.clone(),
            b: &syn.basis * &syn.v * coef_y,
            basis: syn.basis.clone(),
            y_norm_sq: 1e6,
        };
        let spectrum = generalized_eigen(&t.a, &t.basis).unwrap();
        prop_assert_eq!(spectrum.rank, r);
        let hg = rkhs_solve(&t, &spectrum, lambda).unwrap().phi;
        let l2 = solve_tikhonov(&t, &spectrum, RegularizerKind::L2Rho, lambda)
            .unwrap()
            .phi;
        for (est, power, shift) in [(&hg, 1.5, 2), (&l2, 0.5, 1)] {
            let err = syn.v.tr_mul(&(&syn.basis * (est - &phi_true)));
            for i in 0..n {
                let expected = if i < r {
                    (sigma * lam[i].powf(power) * xi[i] - lambda * c[i])
                        / (lam[i].powi(shift) + lambda)
                } else {
                    -c[i]
                };
                let e = (err[i] - expected).abs() / expected.abs().max(1e-300);
                prop_assert!(e < 1e-8, "term {i}: {} vs {expected}", err[i]);
            }
        }
        Ok(())
    })
}

fn rkhs_stays_in_fsoi() -> std::result::Result<String, String> {
    prop(
        CASES,
        (shapes(), lambda_fraction(), any::<u64>()),
        |((m, n, seed), frac, nseed)| {
            let s = setup(random_problem(seed, m, n));
            let phi = DVector::from_vec(normals(&mut rng(nseed), n));
            let t =
                assemble_triplet(&s.problem.observe(&phi, 1.0, nseed).unwrap(), &s.basis).unwrap();
            let est = rkhs_solve(&t, &s.spectrum, frac * s.spectrum.eigenvalues[0])
                .unwrap()
                .phi;
            let rest = &est - fsoi_project(&est, &s.spectrum, &s.basis);
            let out = l2rho_inner(&rest, &rest, &s.basis).unwrap().sqrt();
            let norm = l2rho_inner(&est, &est, &s.basis).unwrap().sqrt();
            prop_assert!(out < 1e-10 * norm, "{out} vs {norm}");
            Ok(())
        },
    )
}

// lcurve

fn lcurve_scale_equivariant() -> std::result::Result<String, String> {
    let s = setup(reference_problem(KernelSpec::Exp));
    let phi = phi_true_catalog(PhiCatalog::Eig2, &s.problem.source, Some(&s.spectrum)).unwrap();
    prop(
        CASES,
        (any::<u64>(), 0.25f64..2.0, -1.0f64..1.0),
        |(seed, nsr, e)| {
            let c = 10f64.powf(e);
            let observed = s.problem.observe(&phi, nsr, seed).unwrap();
            let y = observed.observations.clone().unwrap();
            let scaled = s
                .problem
                .clone()
                .with_observations(y * c, observed.noise_sigma * c)
                .unwrap();
            let t1 = assemble_triplet(&observed, &s.basis).unwrap();
            let t2 = assemble_triplet(&scaled, &s.basis).unwrap();
            for kind in RegularizerKind::ALL {
                let a = build_lcurve(&t1, &s.spectrum, kind, 100).unwrap();
                let b = build_lcurve(&t2, &s.spectrum, kind, 100).unwrap();
                prop_assert_eq!(
                    a.selected_index,
                    b.selected_index,
                    "{} at scale {}",
                    kind,
                    c
                );
                let again = build_lcurve(&t1, &s.spectrum, kind, 100).unwrap();
                prop_assert_eq!(a.selected_index, again.selected_index);
                let (l1, k1) = select_lambda(&a).unwrap();
                let (l2, k2) = select_lambda(&a).unwrap();
                prop_assert!(l1.to_bits() == l2.to_bits() && k1.to_bits() == k2.to_bits());
            }
            Ok(())
        },
    )
}

// theory

fn random_model() -> impl Strategy<Value = SpectralModel> {
    (
        0usize..3,
        0.3f64..3.0,
        -6.0f64..-1.0,
        0.1f64..3.0,
        any::<u64>(),
    )
        .prop_map(|(which, theta, ls, m0, seed)| {
            let sigma = 10f64.powf(ls);
            match which {
                0 => {
                    SpectralModel::exponential(theta, CoefficientRule::Bounded(m0), sigma).unwrap()
                }
                1 => SpectralModel::from_rule(
                    Decay::Power,
                    1.0 + theta,
                    CoefficientRule::Picard,
                    sigma,
                    Some(2000),
                )
                .unwrap(),
                _ => {
                    let mut g = rng(seed);
                    let n = 3 + (seed % 40) as usize;
                    let mut lam: Vec<f64> = (0..n)
                        .map(|_| (-12.0 * rand::Rng::random::<f64>(&mut g)).exp())
                        .collect();
                    lam.sort_by(|a, b| b.total_cmp(a));
                    let c = normals(&mut g, n);
                    SpectralModel::explicit(lam, c, sigma).unwrap()
                }
            }
        })
}

fn mse_decomposition() -> std::result::Result<String, String> {
    prop(CASES, (random_model(), -10.0f64..0.0), |(m, le)| {
        let lambda = 10f64.powf(le);
        let sp = series_pack(&m, lambda).unwrap();
        let (hg, l2) = mse_exact(&m, lambda).unwrap();
        let s2 = m.sigma * m.sigma;
        let l = lambda * lambda;
        prop_assert!(rel(s2 * sp.a + l * sp.b, hg) < 1e-14);
        prop_assert!(rel(s2 * sp.a_tilde + l * sp.b_tilde, l2) < 1e-14);
        Ok(())
    })
}

fn noiseless_bias_monotone() -> std::result::Result<String, String> {
    prop(CASES, random_model(), |m| {
        let m = m.with_sigma(0.0).unwrap();
        let mut prev = (0.0, 0.0);
        for k in 0..=60 {
            let lambda = 10f64.powf(-12.0 + 0.2 * k as f64);
            let (hg, l2) = mse_exact(&m, lambda).unwrap();
            prop_assert!(hg >= prev.0 && l2 >= prev.1, "decrease at lambda {lambda}");
            prev = (hg, l2);
        }
        Ok(())
    })
}

fn min_hg(decay: Decay, theta: f64, sigma: f64) -> f64 {
    let m = SpectralModel::from_rule(decay, theta, CoefficientRule::Picard, sigma, None).unwrap();
    let l = optimal_lambda(&m, MseKind::Hg).unwrap();
    mse_exact(&m, l).unwrap().0
}

fn exponential_sharp_rate() -> std::result::Result<String, String> {
    let mut notes = Vec::new();
    let mut ok = true;
    for theta in [0.5, 1.0, 2.0] {
        let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&s| min_hg(Decay::Exponential, theta, s) / (PI / (4.0 * theta) * s))
            .collect();
        ok &= (0.9..=1.1).contains(&ratios[3]);
        notes.push(format!("theta {theta}: {:.4?}", ratios));
    }
    let msg = format!(
        "min e_hg/((pi/4 theta) sigma) over sigma 1e-2..1e-5, {}",
        notes.join(", ")
    );
    if ok {
        Ok(msg)
    } else {
        Err(format!("{msg}; required [0.9, 1.1] at 1e-5"))
    }
}

fn power_rate() -> std::result::Result<String, String> {
    let mut notes = Vec::new();
    let mut ok = true;
    for theta in [2.0, 3.0] {
        let c = dartr::theory::sharp_constants(theta, Decay::Power).unwrap();
        let ratio = min_hg(Decay::Power, theta, 1e-5) / (c.c_hg * 1e-5);
        ok &= (0.85..=1.15).contains(&ratio);
        notes.push(format!("theta {theta}: {ratio:.4}"));
    }
    let msg = format!("min e_hg/(C_hg sigma) at sigma 1e-5, {}", notes.join(", "));
    if ok {
        Ok(msg)
    } else {
        Err(format!("{msg}; required [0.85, 1.15]"))
    }
}

fn upper_bounds() -> std::result::Result<String, String> {
    let strategy = (0.5f64..3.0, -6.0f64..-4.0, any::<u64>(), 0.1f64..4.0);
    prop(CASES, strategy, |(theta, ls, seed, m0)| {
        let sigma = 10f64.powf(ls);
        let n = ((-(sigma.powi(4) * 1e-3).ln()) / theta).ceil() as usize;
        let mut g = rng(seed);
        let c: Vec<f64> = (1..=n)
            .map(|i| (m0 * rand::Rng::random::<f64>(&mut g) * (-theta * i as f64).exp()).sqrt())
            .collect();
        let sup = c
            .iter()
            .enumerate()
            .map(|(i, c)| c * c / (-theta * (i + 1) as f64).exp())
            .fold(0.0, f64::max);
        let m = SpectralModel::from_rule(
            Decay::Exponential,
            theta,
            CoefficientRule::Explicit(c),
            sigma,
            None,
        )
        .unwrap();
        let hg = mse_exact(&m, sigma * sigma).unwrap().0;
        let l2 = mse_exact(&m, sigma).unwrap().1;
        let bound_hg = (1.0 + sup) * PI / (4.0 * theta) * sigma * 1.2;
        let bound_l2 = (1.0 + sup) * 2.0 / theta * sigma * 1.2;
        prop_assert!(hg <= bound_hg, "e_hg {hg} > {bound_hg}");
        prop_assert!(l2 <= bound_l2, "e_l2 {l2} > {bound_l2}");
        Ok(())
    })
}

// experiments

fn aggregate_loss_ordering() -> std::result::Result<String, String> {
    let mut cells = 0;
    for phi in [PhiCatalog::Eig2, PhiCatalog::Square] {
        let sweep = noise_sweep(phi);
        for c in sweep
            .cells
            .iter()
            .filter(|c| c.kind == RegularizerKind::Rkhs)
        {
            let l2rho = sweep.cell(c.sweep_value, RegularizerKind::L2Rho).unwrap();
            if c.mean_loss < l2rho.mean_loss - l2rho.std_loss {
                return Err(format!(
                    "{} nsr {}: rkhs mean loss {:.4e} below L2rho {:.4e} - {:.4e}",
                    phi.name(),
                    c.sweep_value,
                    c.mean_loss,
                    l2rho.mean_loss,
                    l2rho.std_loss
                ));
            }
            cells += 1;
        }
    }
    Ok(format!("{cells} sweep cells"))
}

fn projected_error_is_contraction() -> std::result::Result<String, String> {
    prop(
        CASES,
        (shapes(), lambda_fraction(), any::<u64>()),
        |((m, n, seed), frac, nseed)| {
            let s = setup(random_problem(seed, m, n));
            let phi = DVector::from_vec(normals(&mut rng(nseed), n));
            let t =
                assemble_triplet(&s.problem.observe(&phi, 1.0, nseed).unwrap(), &s.basis).unwrap();
            let lambda = frac * s.spectrum.eigenvalues[0];
            for kind in RegularizerKind::ALL {
                let est = solve_tikhonov(&t, &s.spectrum, kind, lambda).unwrap().phi;
                let err = projected_error(&est, &phi, &s.spectrum, &s.basis).unwrap();
                let d = &est - &phi;
                let full = l2rho_inner(&d, &d, &s.basis).unwrap();
                prop_assert!(err <= full * (1.0 + 1e-12), "{kind}: {err} > {full}");
            }
            Ok(())
        },
    )
}

fn sweep_independent_of_schedule() -> std::result::Result<String, String> {
    let cfg = ExperimentConfig {
        n: 40,
        dt: 0.05,
        nsr_list: vec![0.5, 1.0, 2.0],
        n_sims: 6,
        grid_size: 30,
        seed: 99,
        ..ExperimentConfig::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_noise_sweep(&cfg).unwrap())
    };
    let one = run(1);
    for threads in [2, 3, 8] {
        let other = run(threads);
        let same = one.records.len() == other.records.len()
            && one.cells.iter().zip(&other.cells).all(|(a, b)| {
                a.mean_err.to_bits() == b.mean_err.to_bits()
                    && a.std_err.to_bits() == b.std_err.to_bits()
                    && a.mean_loss.to_bits() == b.mean_loss.to_bits()
            });
        if !same {
            return Err(format!("results differ between 1 and {threads} threads"));
        }
    }
    Ok("bit-identical with 1, 2, 3 and 8 worker threads".into())
}

// io_cli

fn config_strategy() -> impl Strategy<Value = RunConfig> {
    let commands = prop_oneof![
        Just(Command::Spectrum),
        Just(Command::Solve),
        Just(Command::SweepNoise),
        Just(Command::SweepMesh),
        Just(Command::Theory)
    ];
    let floats = proptest::collection::vec(-1e6f64..1e6, 1..5);
    let kinds = proptest::sample::subsequence(RegularizerKind::ALL.to_vec(), 1..=3);
    (
        commands,
        (0u8..3, "[a-z]{1,8}"),
        proptest::array::uniform4(-1e3f64..1e3),
        (
            1usize..10_000,
            any::<f64>().prop_filter("finite", |x| x.is_finite()),
        ),
        (floats.clone(), floats),
        kinds,
        (any::<u64>(), 0usize..1000, 0usize..1000, any::<bool>()),
        (0.0f64..10.0, proptest::collection::vec(1e-12f64..1.0, 1..6)),
    )
        .prop_map(
            |(
                command,
                (kernel, name),
                abcd,
                (n, dt),
                (nsr, dts),
                reg,
                (seed, sims, grid, power),
                (theta, sigmas),
            )| {
                let mut cfg = RunConfig::defaults(command);
                cfg.kernel = match kernel {
                    0 => KernelArg::Exp,
                    1 => KernelArg::Poly,
                    _ => KernelArg::File(PathBuf::from(format!("/data/{name}.csv"))),
                };
                [cfg.a, cfg.b, cfg.c, cfg.d] = abcd;
                cfg.n = n;
                cfg.dt = dt;
                cfg.nsr = nsr;
                cfg.dt_list = dts;
                cfg.reg = reg;
                cfg.phi = vec![
                    PhiArg::Catalog(PhiCatalog::Square),
                    PhiArg::File(PathBuf::from(format!("{name}.csv"))),
                ];
                cfg.seed = seed;
                cfg.sims = sims;
                cfg.grid = grid;
                cfg.out = PathBuf::from(format!("runs/{name}"));
                cfg.decay = if power {
                    Decay::Power
                } else {
                    Decay::Exponential
                };
                cfg.theta = theta;
                cfg.sigmas = sigmas;
                cfg.constants = if power {
                    ConstantsSource::Exact
                } else {
                    ConstantsSource::Stated
                };
                cfg
            },
        )
}

fn config_round_trip() -> std::result::Result<String, String> {
    prop(CASES, config_strategy(), |cfg| {
        let text = cfg.serialize();
        let parsed = RunConfig::parse(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&parsed, &cfg);
        prop_assert_eq!(parsed.serialize(), text);
        Ok(())
    })
}

fn writes_are_atomic() -> std::result::Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("table.csv");
    let a = vec![b'a'; 1 << 20];
    let b = vec![b'b'; 1 << 20];
    write_atomic(&path, &a).map_err(|e| e.to_string())?;
    let done = Arc::new(AtomicBool::new(false));
    let writer = {
        let (path, done) = (path.clone(), done.clone());
        std::thread::spawn(move || {
            for i in 0..60 {
                write_atomic(&path, if i % 2 == 0 { &b } else { &a }).unwrap();
            }
            done.store(true, Ordering::SeqCst);
        })
    };
    let mut reads = 0;
    let mut bad = 0;
    while !done.load(Ordering::SeqCst) {
        let data = fs::read(&path).map_err(|e| e.to_string())?;
        let whole = data.len() == 1 << 20
            && (data.iter().all(|c| *c == b'a') || data.iter().all(|c| *c == b'b'));
        bad += usize::from(!whole);
        reads += 1;
    }
    writer.join().map_err(|_| "writer panicked".to_string())?;
    let leftovers = fs::read_dir(dir.path()).map_err(|e| e.to_string())?.count();
    let missing_dir = write_atomic(&dir.path().join("no/such/dir.csv"), b"x").is_err();
    if bad == 0 && leftovers == 1 && missing_dir {
        Ok(format!("{reads} concurrent reads saw only complete files"))
    } else {
        Err(format!(
            "{bad} of {reads} reads saw a partial file, {leftovers} files left"
        ))
    }
}

pub fn c11_properties() -> Outcome {
    type Prop = fn() -> std::result::Result<String, String>;
    let props: [(&str, &str, Prop); 26] = [
        (
            "mesh_kernel",
            "forward assembly is linear in the kernel",
            forward_is_linear,
        ),
        (
            "mesh_kernel",
            "generate_data is reproducible",
            data_is_reproducible,
        ),
        (
            "mesh_kernel",
            "noise energy matches m sigma^2 dt",
            noise_has_nominal_variance,
        ),
        (
            "measure",
            "rho is invariant under kernel scaling",
            rho_is_scale_invariant,
        ),
        (
            "measure",
            "support equals nonzero kernel columns",
            support_matches_zero_columns,
        ),
        (
            "measure",
            "L2rho inner product is positive on the support",
            inner_product_is_positive_on_support,
        ),
        (
            "triplet",
            "triplet loss equals residual norm",
            loss_matches_residual,
        ),
        (
            "triplet",
            "noiseless b lies in the range of A",
            noiseless_b_in_range,
        ),
        (
            "spectral",
            "spectral and direct L2rho solves agree",
            spectral_direct_l2rho,
        ),
        (
            "spectral",
            "RKHS norm dominates the scaled L2rho norm",
            rkhs_norm_dominates,
        ),
        (
            "spectral",
            "phi'A phi equals sum of lambda_i c_i^2",
            operator_norm_identity,
        ),
        (
            "spectral",
            "noiseless phi^y equals the operator applied to the truth",
            noiseless_decomposition,
        ),
        (
            "regularize",
            "RKHS solve matches its spectral form",
            spectral_rkhs,
        ),
        (
            "regularize",
            "termwise bias expansion of both estimators",
            bias_expansion,
        ),
        (
            "regularize",
            "RKHS solution lies in the FSOI",
            rkhs_stays_in_fsoi,
        ),
        (
            "lcurve",
            "selection is scale-equivariant and deterministic",
            lcurve_scale_equivariant,
        ),
        ("theory", "e = sigma^2 A + lambda^2 B", mse_decomposition),
        (
            "theory",
            "noiseless MSE is nondecreasing in lambda",
            noiseless_bias_monotone,
        ),
        (
            "theory",
            "exponential sharp rate (pi/4 theta) sigma",
            exponential_sharp_rate,
        ),
        ("theory", "power-decay rate C_hg sigma", power_rate),
        ("theory", "upper bounds with finite M0", upper_bounds),
        (
            "experiments",
            "mean RKHS loss not below L2rho minus one std",
            aggregate_loss_ordering,
        ),
        (
            "experiments",
            "projected error is at most the full error",
            projected_error_is_contraction,
        ),
        (
            "experiments",
            "sweep statistics independent of scheduling",
            sweep_independent_of_schedule,
        ),
        ("io_cli", "config round trip", config_round_trip),
        ("io_cli", "atomic writes", writes_are_atomic),
    ];
    let mut failed = Vec::new();
    for (module, name, check) in props {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match &result {
            Ok(note) => println!("    ok    {module}: {name} ({note})"),
            Err(e) => {
                println!("    FAIL  {module}: {name}: {e}");
                failed.push(format!("{module}: {name}"));
            }
        }
    }
    Outcome::new(
        failed.is_empty(),
        format!(
            "{} of {} properties hold{}",
            props.len() - failed.len(),
            props.len(),
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failing: {}", failed.join(", "))
            }
        ),
    )
}
