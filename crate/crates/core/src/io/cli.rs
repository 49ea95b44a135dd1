//! Command-line entry point.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use nalgebra::{DVector, SymmetricEigen};
use serde_json::json;

use crate::error::{Error, Result};
use crate::experiments::{fit_rate, run_mesh_sweep, run_noise_sweep, SweepResult};
use crate::io::config::{read_config_file, Command, PhiArg, RunConfig, KEYS};
use crate::io::output::{
    fmt_f64, read_vector_csv, write_atomic, write_columns, write_csv, write_json, write_lcurves,
    write_sweep_records, write_sweep_summary,
};
use crate::io::svg::{emit_svg_plot, Axis, Plot, Series};
use crate::measure::{basis_matrix, exploration_measure};
use crate::mesh::phi_true_catalog;
use crate::regularize::select_and_solve;
use crate::spectral::{
    fsoi_project, gbar_matrix, generalized_eigen, projected_error, trace_identity,
};
use crate::theory::{leading_order, rate_table, sharp_constants, ConstantsSource, Decay};
use crate::triplet::assemble_triplet;

#[derive(Parser, Debug)]
#[command(
    name = "dartr",
    version,
    about = "Adaptive RKHS regularization for discretized Fredholm equations of the first kind"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Exploration measure and generalized spectrum of a problem.
    Spectrum(ProblemArgs),
    /// One noisy problem, L-curve selection, estimator per regularizer.
    Solve(ProblemArgs),
    /// Monte Carlo sweep over noise-to-signal ratios.
    SweepNoise(ProblemArgs),
    /// Monte Carlo sweep over observation steps.
    SweepMesh(ProblemArgs),
    /// Optimal-lambda rate table on synthetic spectra.
    Theory(TheoryArgs),
}

#[derive(Args, Debug)]
struct ProblemArgs {
    /// Config file of key = value lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// exp | poly | file:PATH
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    d: Option<String>,
    /// Number of source points.
    #[arg(long)]
    n: Option<String>,
    /// Observation step.
    #[arg(long)]
    dt: Option<String>,
    /// Noise-to-signal ratio, or a comma list for sweeps.
    #[arg(long)]
    nsr: Option<String>,
    /// Observation steps of the mesh sweep.
    #[arg(long)]
    dt_list: Option<String>,
    #[arg(long)]
    mesh_nsr: Option<String>,
    #[arg(long)]
    reference_dt: Option<String>,
    /// l2 | L2 | rkhs | all
    #[arg(long)]
    reg: Option<String>,
    /// eig2 | square | file:PATH
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Simulations per sweep cell.
    #[arg(long)]
    sims: Option<String>,
    /// L-curve grid size.
    #[arg(long)]
    grid: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct TheoryArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// exponential | power
    #[arg(long)]
    decay: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    /// Comma list of noise levels.
    #[arg(long)]
    sigmas: Option<String>,
    /// stated | exact
    #[arg(long)]
    constants: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl ProblemArgs {
    fn overrides(&self) -> Vec<(&'static str, &String)> {
        [
            ("kernel", &self.kernel),
            ("a", &self.a),
            ("b", &self.b),
            ("c", &self.c),
            ("d", &self.d),
            ("n", &self.n),
            ("dt", &self.dt),
            ("nsr", &self.nsr),
            ("dt_list", &self.dt_list),
            ("mesh_nsr", &self.mesh_nsr),
            ("reference_dt", &self.reference_dt),
            ("reg", &self.reg),
            ("phi", &self.phi),
            ("seed", &self.seed),
            ("sims", &self.sims),
            ("grid", &self.grid),
            ("out", &self.out),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
        .collect()
    }
}

impl TheoryArgs {
    fn overrides(&self) -> Vec<(&'static str, &String)> {
        [
            ("decay", &self.decay),
            ("theta", &self.theta),
            ("sigmas", &self.sigmas),
            ("constants", &self.constants),
            ("out", &self.out),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
        .collect()
    }
}

fn config_help() -> String {
    let mut s = String::from("Config keys (key = value, '#' comments, comma lists):\n");
    for (k, h) in KEYS {
        s.push_str(&format!("  {k:<13} {h}\n"));
    }
    s.push_str("\nDARTR_THREADS caps the worker thread count.");
    s
}

/// Defaults, then the config file, then explicit flags.
fn resolve(
    command: Command,
    config: &Option<PathBuf>,
    overrides: Vec<(&str, &String)>,
) -> Result<RunConfig> {
    let mut cfg = RunConfig::defaults(command);
    if let Some(path) = config {
        cfg.apply_text(&read_config_file(path)?)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code: 0 on success, 2 for usage or configuration errors,
/// 1 for numerical failures.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let help = config_help();
    let mut cmd = Cli::command();
    for name in ["spectrum", "solve", "sweep-noise", "sweep-mesh", "theory"] {
        cmd = cmd.mut_subcommand(name, |s| s.after_help(help.clone()));
    }
    let cli = match cmd
        .try_get_matches_from(argv)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Sub::Spectrum(a) => {
            resolve(Command::Spectrum, &a.config, a.overrides()).and_then(|c| run_spectrum(&c))
        }
        Sub::Solve(a) => {
            resolve(Command::Solve, &a.config, a.overrides()).and_then(|c| run_solve(&c))
        }
        Sub::SweepNoise(a) => {
            resolve(Command::SweepNoise, &a.config, a.overrides()).and_then(|c| run_sweep(&c))
        }
        Sub::SweepMesh(a) => {
            resolve(Command::SweepMesh, &a.config, a.overrides()).and_then(|c| run_sweep(&c))
        }
        Sub::Theory(a) => {
            resolve(Command::Theory, &a.config, a.overrides()).and_then(|c| run_theory(&c))
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}

fn write_svg(cfg: &RunConfig, name: &str, plot: &Plot) -> Result<()> {
    write_atomic(&cfg.out_path(name), emit_svg_plot(plot)?.as_bytes())
}

fn positive_axis(values: impl IntoIterator<Item = f64>) -> Axis {
    if values.into_iter().all(|v| v > 0.0) {
        Axis::Log
    } else {
        Axis::Linear
    }
}

fn run_spectrum(cfg: &RunConfig) -> Result<()> {
    let problem = cfg.problem()?;
    let measure = exploration_measure(&problem)?;
    let basis = basis_matrix(&measure);
    let a = problem.forward.tr_mul(&problem.forward);
    let spectrum = generalized_eigen(&a, &basis)?;
    let mut a_eigs: Vec<f64> = SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    a_eigs.sort_by(|x, y| y.total_cmp(x));
    let trace = gbar_matrix(&problem, &measure)
        .and_then(|g| trace_identity(&spectrum, &g, &measure))
        .ok();

    fs::create_dir_all(&cfg.out)?;
    let s = problem.source.points();
    write_columns(
        &cfg.out_path("rho.csv"),
        "s",
        s,
        &[
            ("rho".into(), measure.weights.clone()),
            ("density".into(), measure.density.clone()),
        ],
    )?;
    let rows = (0..problem.n()).map(|i| {
        vec![
            (i + 1).to_string(),
            fmt_f64(a_eigs[i]),
            fmt_f64(spectrum.eigenvalues[i]),
        ]
    });
    write_csv(
        &cfg.out_path("spectrum.csv"),
        &["index", "eigenvalue_A", "eigenvalue_AB"],
        rows,
    )?;
    let k = spectrum.rank.min(4);
    let cols: Vec<(String, Vec<f64>)> = (0..k)
        .map(|j| {
            (
                format!("psi_{}", j + 1),
                spectrum.eigenvectors.column(j).iter().copied().collect(),
            )
        })
        .collect();
    write_columns(&cfg.out_path("eigenvectors.csv"), "s", s, &cols)?;

    let positive = |v: &[f64]| -> (Vec<f64>, Vec<f64>) {
        v.iter()
            .enumerate()
            .filter(|(_, x)| **x > 0.0)
            .map(|(i, x)| ((i + 1) as f64, *x))
            .unzip()
    };
    let (ia, va) = positive(&a_eigs);
    let (ib, vb) = positive(spectrum.eigenvalues.as_slice());
    write_svg(
        cfg,
        "spectrum.svg",
        &Plot {
            title: format!("Eigenvalues, {} kernel", problem.kernel.name()),
            x_label: "index".into(),
            y_label: "eigenvalue".into(),
            x_axis: Axis::Linear,
            y_axis: Axis::Log,
            series: vec![Series::new("A", &ia, &va), Series::new("(A, B)", &ib, &vb)],
        },
    )?;
    write_svg(
        cfg,
        "rho.svg",
        &Plot {
            title: "Exploration measure density".into(),
            x_label: "s".into(),
            y_label: "density".into(),
            x_axis: Axis::Linear,
            y_axis: Axis::Linear,
            series: vec![Series::new("rho", s, &measure.density)],
        },
    )?;
    write_json(
        &cfg.out_path("summary.json"),
        &json!({
            "kernel": problem.kernel.name(),
            "n": problem.n(),
            "m": problem.m(),
            "rank": spectrum.rank,
            "rank_threshold": spectrum.rank_threshold,
            "lambda_max": spectrum.eigenvalues[0],
            "trace_lhs": trace.map(|t| t.lhs),
            "trace_rhs": trace.map(|t| t.rhs),
            "trace_relerr": trace.map(|t| t.relerr),
        }),
    )?;
    println!(
        "n = {}, m = {}, rank = {}, lambda_1 = {:.6e}{}",
        problem.n(),
        problem.m(),
        spectrum.rank,
        spectrum.eigenvalues[0],
        trace
            .map(|t| format!(", trace relerr = {:.3e}", t.relerr))
            .unwrap_or_default()
    );
    Ok(())
}

fn run_solve(cfg: &RunConfig) -> Result<()> {
    let problem = cfg.problem()?;
    let basis = basis_matrix(&exploration_measure(&problem)?);
    let a = problem.forward.tr_mul(&problem.forward);
    let spectrum = generalized_eigen(&a, &basis)?;
    let phi_arg = &cfg.phi[0];
    let phi_true = match phi_arg {
        PhiArg::Catalog(c) => phi_true_catalog(*c, &problem.source, Some(&spectrum))?,
        PhiArg::File(p) => {
            let v = read_vector_csv(p)?;
            if v.len() != problem.n() {
                return Err(Error::Config(format!(
                    "{} has {} values for {} source points",
                    p.display(),
                    v.len(),
                    problem.n()
                )));
            }
            DVector::from_vec(v)
        }
    };
    let nsr = cfg.nsr[0];
    let observed = problem.observe(&phi_true, nsr, cfg.seed)?;
    let triplet = assemble_triplet(&observed, &basis)?;

    let mut columns = vec![
        (
            "phi_true".to_string(),
            phi_true.iter().copied().collect::<Vec<_>>(),
        ),
        (
            "phi_true_projected".to_string(),
            fsoi_project(&phi_true, &spectrum, &basis)
                .iter()
                .copied()
                .collect(),
        ),
    ];
    let mut curves = Vec::new();
    let mut results = Vec::new();
    for &kind in &cfg.reg {
        let (sol, curve) = select_and_solve(&triplet, &spectrum, kind, cfg.grid)?;
        let err = projected_error(&sol.phi, &phi_true, &spectrum, &basis)?;
        println!(
            "{:<5} lambda = {:.6e}  err = {:.6e}",
            kind.name(),
            sol.lambda,
            err
        );
        results.push(json!({
            "kind": kind,
            "lambda": sol.lambda,
            "loss": sol.loss_value,
            "penalty": sol.penalty_value,
            "err": err,
            "curvature": curve.curvatures[curve.selected_index],
        }));
        columns.push((kind.name().to_string(), sol.phi.iter().copied().collect()));
        curves.push(curve);
    }

    fs::create_dir_all(&cfg.out)?;
    write_columns(
        &cfg.out_path("phi_hat.csv"),
        "s",
        problem.source.points(),
        &columns,
    )?;
    write_lcurves(&cfg.out_path("lcurve.csv"), &curves)?;
    write_svg(
        cfg,
        "lcurve.svg",
        &Plot {
            title: "L-curve".into(),
            x_label: "log residual norm".into(),
            y_label: "log penalty norm".into(),
            x_axis: Axis::Linear,
            y_axis: Axis::Linear,
            series: curves
                .iter()
                .map(|c| Series::new(c.kind.name(), &c.xs, &c.ys))
                .collect(),
        },
    )?;
    write_json(
        &cfg.out_path("summary.json"),
        &json!({
            "kernel": problem.kernel.name(),
            "n": problem.n(),
            "m": problem.m(),
            "phi": phi_arg.name(),
            "nsr": nsr,
            "sigma": observed.noise_sigma,
            "seed": cfg.seed,
            "rank": spectrum.rank,
            "results": results,
        }),
    )
}

fn sweep_json(result: &SweepResult, xs: &[f64]) -> serde_json::Value {
    let kinds: Vec<_> = result
        .cells
        .iter()
        .map(|c| c.kind)
        .fold(Vec::new(), |mut acc, k| {
            if !acc.contains(&k) {
                acc.push(k);
            }
            acc
        });
    let fits: serde_json::Map<String, serde_json::Value> = kinds
        .iter()
        .map(|k| {
            let fit = fit_rate(xs, &result.mean_errs(*k)).ok();
            (k.name().to_string(), json!(fit))
        })
        .collect();
    json!({ "sweep": result.sweep, "phi": result.phi, "cells": result.cells, "rate_fits": fits })
}

fn run_sweep(cfg: &RunConfig) -> Result<()> {
    let mesh = cfg.command == Command::SweepMesh;
    fs::create_dir_all(&cfg.out)?;
    let mut report = serde_json::Map::new();
    for phi in &cfg.phi {
        let PhiArg::Catalog(catalog) = phi else {
            return Err(Error::Config("sweeps take catalog truths".into()));
        };
        let exp = cfg.experiment(*catalog)?;
        let result = if mesh {
            run_mesh_sweep(&exp)?
        } else {
            run_noise_sweep(&exp)?
        };
        let xs = if mesh {
            exp.dt_list.clone()
        } else {
            exp.nsr_list.clone()
        };
        let name = catalog.name();
        write_sweep_summary(&cfg.out_path(&format!("{name}_summary.csv")), &result)?;
        write_sweep_records(&cfg.out_path(&format!("{name}_records.csv")), &result)?;
        let series: Vec<Series> = exp
            .kinds
            .iter()
            .map(|k| Series::new(k.name(), &xs, &result.mean_errs(*k)))
            .collect();
        let all_y = series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .collect::<Vec<_>>();
        write_svg(
            cfg,
            &format!("{name}_err.svg"),
            &Plot {
                title: format!("Mean projected error, truth {name}"),
                x_label: if mesh {
                    "observation step".into()
                } else {
                    "nsr".into()
                },
                y_label: "mean error".into(),
                x_axis: positive_axis(xs.iter().copied()),
                y_axis: positive_axis(all_y),
                series,
            },
        )?;
        for c in &result.cells {
            println!(
                "{name:<6} {}={:<8} {:<5} mean_err = {:.4e}  std = {:.4e}",
                result.sweep,
                c.sweep_value,
                c.kind.name(),
                c.mean_err,
                c.std_err
            );
        }
        report.insert(name.to_string(), sweep_json(&result, &xs));
    }
    let file = if mesh {
        "sweep_mesh.json"
    } else {
        "sweep_noise.json"
    };
    write_json(&cfg.out_path(file), &report)
}

fn run_theory(cfg: &RunConfig) -> Result<()> {
    let rows = rate_table(cfg.decay, cfg.theta, &cfg.sigmas, cfg.constants)?;
    fs::create_dir_all(&cfg.out)?;
    let header = [
        "sigma",
        "lambda_opt_hg",
        "lambda_opt_l2",
        "e_hg_min",
        "e_l2_min",
        "predicted_hg",
        "predicted_l2",
        "ratio_hg",
        "ratio_l2",
        "ratio_hg_l2",
    ];
    let values = |r: &crate::theory::RateRow| {
        [
            r.sigma,
            r.lambda_opt_hg,
            r.lambda_opt_l2,
            r.e_hg_min,
            r.e_l2_min,
            r.predicted_hg,
            r.predicted_l2,
            r.e_hg_min / r.predicted_hg,
            r.e_l2_min / r.predicted_l2,
            r.e_hg_min / r.e_l2_min,
        ]
    };
    write_csv(
        &cfg.out_path("rate_table.csv"),
        &header,
        rows.iter().map(|r| values(r).map(fmt_f64)),
    )?;
    println!("{}", header.join("  "));
    for r in &rows {
        println!("{}", values(r).map(|v| format!("{v:.6e}")).join("  "));
    }
    let sig: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    let pick = |f: fn(&crate::theory::RateRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let (ehg, el2) = (pick(|r| r.e_hg_min), pick(|r| r.e_l2_min));
    write_svg(
        cfg,
        "theory.svg",
        &Plot {
            title: format!(
                "Minimal MSE, {} decay, theta = {}",
                if cfg.decay == Decay::Power {
                    "power"
                } else {
                    "exponential"
                },
                cfg.theta
            ),
            x_label: "sigma".into(),
            y_label: "MSE".into(),
            x_axis: Axis::Log,
            y_axis: Axis::Log,
            series: vec![
                Series::new("e_hg min", &sig, &ehg),
                Series::new("e_l2 min", &sig, &el2),
                Series::new("predicted hg", &sig, &pick(|r| r.predicted_hg)),
                Series::new("predicted l2", &sig, &pick(|r| r.predicted_l2)),
            ],
        },
    )?;
    write_json(
        &cfg.out_path("theory.json"),
        &json!({
            "decay": cfg.decay,
            "theta": cfg.theta,
            "constants": if cfg.constants == ConstantsSource::Stated { "stated" } else { "exact" },
            "stated_constants": sharp_constants(cfg.theta, cfg.decay).ok(),
            "leading_order": leading_order(cfg.theta, cfg.decay).ok(),
            "slope_hg": fit_rate(&sig, &ehg).ok().map(|f| f.slope),
            "slope_l2": fit_rate(&sig, &el2).ok().map(|f| f.slope),
            "rows": rows,
        }),
    )
}
