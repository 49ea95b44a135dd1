//! Monte Carlo sweeps over the noise level and the observation mesh.
//!
//! Simulation `i` of every cell draws its noise from
//! `derive_seed(master_seed, i)`, so cells share noise realizations up to
//! scale. Statistics are population means and standard deviations, reduced
//! in simulation order.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lcurve::DEFAULT_GRID_SIZE;
use crate::measure::{basis_matrix, exploration_measure};
use crate::mesh::{phi_true_catalog, DiscretizedProblem, KernelSpec, Mesh, PhiCatalog};
use crate::regularize::{select_and_solve, RegularizerKind};
use crate::rng::derive_seed;
use crate::spectral::{generalized_eigen, projected_error, GeneralizedSpectrum};
use crate::triplet::assemble_triplet;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "DARTR_THREADS";

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    /// `(a, b, c, d)`: source interval `[a, b]`, observation interval `[c, d]`.
    pub intervals: (f64, f64, f64, f64),
    pub n: usize,
    pub dt: f64,
    pub nsr_list: Vec<f64>,
    pub dt_list: Vec<f64>,
    /// Noise level used by the mesh sweep.
    pub mesh_nsr: f64,
    /// Observation step of the reference mesh that scores the mesh sweep.
    pub reference_dt: f64,
    pub phi: PhiCatalog,
    pub n_sims: usize,
    pub seed: u64,
    pub kinds: Vec<RegularizerKind>,
    pub grid_size: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::Exp,
            intervals: (1.0, 5.0, 0.0, 5.0),
            n: 100,
            dt: 0.01,
            nsr_list: vec![0.125, 0.25, 0.5, 1.0, 2.0],
            dt_list: [1.0, 2.0, 4.0, 8.0, 16.0]
                .iter()
                .map(|f| 0.005 * f)
                .collect(),
            mesh_nsr: 1.0,
            reference_dt: 0.0005,
            phi: PhiCatalog::Eig2,
            n_sims: 100,
            seed: 0,
            kinds: RegularizerKind::ALL.to_vec(),
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let (a, b, c, d) = self.intervals;
        if !(a < b && c < d) {
            return bad(format!("invalid intervals ({a}, {b}, {c}, {d})"));
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.n_sims < 1 {
            return bad("n_sims must be at least 1".into());
        }
        if self.nsr_list.is_empty() || self.dt_list.is_empty() || self.kinds.is_empty() {
            return bad("nsr list, dt list and regularizer list must be nonempty".into());
        }
        if self
            .nsr_list
            .iter()
            .chain([&self.mesh_nsr])
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return bad("noise-to-signal ratios must be nonnegative".into());
        }
        if self
            .dt_list
            .iter()
            .chain([&self.dt, &self.reference_dt])
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return bad("observation steps must be positive".into());
        }
        if self.grid_size < 10 {
            return bad(format!(
                "grid size must be at least 10, got {}",
                self.grid_size
            ));
        }
        Ok(())
    }

    fn problem_with_step(&self, dt: f64) -> Result<DiscretizedProblem> {
        let (a, b, c, d) = self.intervals;
        let source = Mesh::right_endpoint(a, b, self.n)?;
        let obs = Mesh::with_step(c, d, dt)?;
        if let KernelSpec::Tabulated(_) = self.kernel {
            if self.dt_list.len() > 1 || dt != self.dt {
                return Err(Error::Config(
                    "a tabulated kernel is fixed to its own mesh".into(),
                ));
            }
        }
        DiscretizedProblem::new(source, obs, self.kernel.clone())
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SimRecord {
    pub sweep_value: f64,
    pub kind: RegularizerKind,
    pub sim: usize,
    pub seed: u64,
    pub sigma: f64,
    pub lambda: f64,
    pub err: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CellSummary {
    pub sweep_value: f64,
    pub kind: RegularizerKind,
    pub mean_err: f64,
    /// Population standard deviation.
    pub std_err: f64,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepResult {
    /// `"nsr"` or `"dt"`.
    pub sweep: String,
    pub phi: String,
    pub cells: Vec<CellSummary>,
    pub records: Vec<SimRecord>,
}

impl SweepResult {
    pub fn cell(&self, sweep_value: f64, kind: RegularizerKind) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.sweep_value == sweep_value && c.kind == kind)
    }

    /// Mean errors of one regularizer in sweep order.
    pub fn mean_errs(&self, kind: RegularizerKind) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| c.mean_err)
            .collect()
    }
}

/// Population mean and standard deviation (two-pass).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `f` on a pool capped by `DARTR_THREADS` when it is set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

/// Everything a simulation needs besides its noise.
struct Scene {
    problem: DiscretizedProblem,
    basis: DMatrix<f64>,
    spectrum: GeneralizedSpectrum,
}

impl Scene {
    fn new(problem: DiscretizedProblem) -> Result<Self> {
        let basis = basis_matrix(&exploration_measure(&problem)?);
        let a = problem.forward.tr_mul(&problem.forward);
        let spectrum = generalized_eigen(&a, &basis)?;
        Ok(Self {
            problem,
            basis,
            spectrum,
        })
    }
}

/// One noise draw, every regularizer, scored in the `yardstick` metric.
fn simulate(
    scene: &Scene,
    yardstick: (&GeneralizedSpectrum, &DMatrix<f64>),
    phi_true: &DVector<f64>,
    nsr: f64,
    sweep_value: f64,
    sim: usize,
    config: &ExperimentConfig,
) -> Result<Vec<SimRecord>> {
    let seed = derive_seed(config.seed, sim as u64);
    let observed = scene.problem.observe(phi_true, nsr, seed)?;
    let triplet = assemble_triplet(&observed, &scene.basis)?;
    config
        .kinds
        .iter()
        .map(|&kind| {
            let (sol, _) = select_and_solve(&triplet, &scene.spectrum, kind, config.grid_size)?;
            Ok(SimRecord {
                sweep_value,
                kind,
                sim,
                seed,
                sigma: observed.noise_sigma,
                lambda: sol.lambda,
                err: projected_error(&sol.phi, phi_true, yardstick.0, yardstick.1)?,
                loss: sol.loss_value,
            })
        })
        .collect()
}

fn summarize(
    sweep: &str,
    config: &ExperimentConfig,
    values: &[f64],
    records: Vec<SimRecord>,
) -> SweepResult {
    let mut cells = Vec::new();
    for &v in values {
        for &kind in &config.kinds {
            let cell: Vec<&SimRecord> = records
                .iter()
                .filter(|r| r.sweep_value == v && r.kind == kind)
                .collect();
            let errs: Vec<f64> = cell.iter().map(|r| r.err).collect();
            let losses: Vec<f64> = cell.iter().map(|r| r.loss).collect();
            let (mean_err, std_err) = mean_std(&errs);
            let (mean_loss, std_loss) = mean_std(&losses);
            cells.push(CellSummary {
                sweep_value: v,
                kind,
                mean_err,
                std_err,
                mean_loss,
                std_loss,
                count: cell.len(),
            });
        }
    }
    SweepResult {
        sweep: sweep.into(),
        phi: config.phi.name().into(),
        cells,
        records,
    }
}

fn run_cells(
    values: &[f64],
    config: &ExperimentConfig,
    sim: impl Fn(usize, usize) -> Result<Vec<SimRecord>> + Sync,
) -> Result<Vec<SimRecord>> {
    let jobs: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|c| (0..config.n_sims).map(move |s| (c, s)))
        .collect();
    let nested: Vec<Vec<SimRecord>> = with_thread_cap(|| {
        jobs.par_iter()
            .map(|&(c, s)| sim(c, s))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(nested.into_iter().flatten().collect())
}

/// Noise-level sweep on the base mesh; every regularizer uses L-curve
/// selection and is scored by the projected error.
pub fn run_noise_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let scene = Scene::new(config.problem_with_step(config.dt)?)?;
    let phi_true = phi_true_catalog(config.phi, &scene.problem.source, Some(&scene.spectrum))?;
    let records = run_cells(&config.nsr_list, config, |c, s| {
        let nsr = config.nsr_list[c];
        simulate(
            &scene,
            (&scene.spectrum, &scene.basis),
            &phi_true,
            nsr,
            nsr,
            s,
            config,
        )
    })?;
    Ok(summarize("nsr", config, &config.nsr_list, records))
}

/// Observation-mesh sweep at `mesh_nsr`. Errors are measured against the
/// FSOI and `L²ρ` metric of the reference mesh `reference_dt`; `ψ₂` also
/// comes from the reference spectrum.
pub fn run_mesh_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let reference = Scene::new(config.problem_with_step(config.reference_dt)?)?;
    let phi_true = phi_true_catalog(
        config.phi,
        &reference.problem.source,
        Some(&reference.spectrum),
    )?;
    let scenes: Vec<Scene> = config
        .dt_list
        .iter()
        .map(|&dt| config.problem_with_step(dt).and_then(Scene::new))
        .collect::<Result<_>>()?;
    let records = run_cells(&config.dt_list, config, |c, s| {
        simulate(
            &scenes[c],
            (&reference.spectrum, &reference.basis),
            &phi_true,
            config.mesh_nsr,
            config.dt_list[c],
            s,
            config,
        )
    })?;
    Ok(summarize("dt", config, &config.dt_list, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(x, y)`.
pub fn fit_rate_linear(xs: &[f64], ys: &[f64]) -> RateFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    RateFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

/// Power-law fit `y ≈ e^intercept · x^slope` by least squares in log-log.
pub fn fit_rate(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Parameter(format!(
            "need at least 3 paired points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain("rate fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    Ok(fit_rate_linear(&lx, &ly))
}
