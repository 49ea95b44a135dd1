//! Source/observation meshes, integral kernels and the discrete forward model
//! `y = L φ + w`.
//!
//! The forward matrix is the rectangle rule `L[i, k] = K(t_i, s_k) δ_k`, and
//! the noise has independent entries `w_i ~ N(0, σ² μ(t_i))` where `μ(t_i)`
//! is the observation weight (`Δt` on a uniform mesh).

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::standard_normals;
use crate::spectral::GeneralizedSpectrum;

/// Ascending mesh points with positive quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Mesh {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Parameter(format!(
                "mesh needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.len() != weights.len() {
            return Err(Error::Parameter(format!(
                "mesh has {} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Parameter("mesh points must be finite".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter(
                "mesh points must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Parameter("mesh weights must be positive".into()));
        }
        Ok(Self { points, weights })
    }

    /// `s_k = a + k δ` for `k = 1..=n`, `δ = (b - a) / n`, every weight `δ`.
    pub fn right_endpoint(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::Parameter(format!("need a < b, got [{a}, {b}]")));
        }
        let delta = (b - a) / n as f64;
        let points = (1..=n).map(|k| a + k as f64 * delta).collect();
        Self::new(points, vec![delta; n])
    }

    /// `t_i = c + i Δt` for `i = 1..=m` with `m = ⌊(d - c) / Δt⌋`; `t_0` is
    /// dropped so the data vector has exactly `m` entries.
    pub fn with_step(c: f64, d: f64, dt: f64) -> Result<Self> {
        if !(c.is_finite() && d.is_finite() && d > c) {
            return Err(Error::Parameter(format!("need c < d, got [{c}, {d}]")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Parameter(format!("step must be positive, got {dt}")));
        }
        let m = ((d - c) / dt + 1e-9).floor() as usize;
        let points = (1..=m).map(|i| c + i as f64 * dt).collect();
        Self::new(points, vec![dt; m])
    }

    /// Weights from spacing: `w_i = x_i - x_{i-1}`, the first point reusing
    /// the first gap.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Parameter("mesh needs at least 2 points".into()));
        }
        let mut weights = Vec::with_capacity(points.len());
        weights.push(points[1] - points[0]);
        for w in points.windows(2) {
            weights.push(w[1] - w[0]);
        }
        Self::new(points, weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The common weight if all weights agree to 1e-12 relative.
    pub fn uniform_weight(&self) -> Option<f64> {
        let w0 = self.weights[0];
        self.weights
            .iter()
            .all(|w| (w - w0).abs() <= 1e-12 * w0)
            .then_some(w0)
    }
}

/// Integral kernel `K(t, s)`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `K(t, s) = s^{-2} e^{-s t}`.
    Exp,
    /// `K(t, s) = s^{-1} |sin(s t + 1)|`.
    Poly,
    /// Values `K(t_i, s_k)` aligned to a pair of meshes (rows are `t`).
    Tabulated(DMatrix<f64>),
}

impl KernelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Exp => "exp",
            KernelSpec::Poly => "poly",
            KernelSpec::Tabulated(_) => "tabulated",
        }
    }

    /// Kernel value at grid node `(i, k)` located at `(t, s)`.
    pub fn value(&self, i: usize, k: usize, t: f64, s: f64) -> f64 {
        match self {
            KernelSpec::Exp => (-s * t).exp() / (s * s),
            KernelSpec::Poly => (s * t + 1.0).sin().abs() / s,
            KernelSpec::Tabulated(m) => m[(i, k)],
        }
    }

    /// Matrix of `K(t_i, s_k)` on the two meshes.
    pub fn tabulate(&self, source: &Mesh, obs: &Mesh) -> Result<DMatrix<f64>> {
        self.check_shape(source, obs)?;
        let (t, s) = (obs.points(), source.points());
        let mut out = DMatrix::zeros(t.len(), s.len());
        for k in 0..s.len() {
            for i in 0..t.len() {
                let v = self.value(i, k, t[i], s[k]);
                if !v.is_finite() {
                    return Err(Error::Evaluation { i, k, value: v });
                }
                out[(i, k)] = v;
            }
        }
        Ok(out)
    }

    fn check_shape(&self, source: &Mesh, obs: &Mesh) -> Result<()> {
        if let KernelSpec::Tabulated(m) = self {
            if m.nrows() != obs.len() || m.ncols() != source.len() {
                return Err(Error::Parameter(format!(
                    "tabulated kernel is {}x{} but meshes need {}x{}",
                    m.nrows(),
                    m.ncols(),
                    obs.len(),
                    source.len()
                )));
            }
        }
        Ok(())
    }
}

/// Forward matrix `L[i, k] = K(t_i, s_k) δ_k` (m × n).
pub fn build_forward(source: &Mesh, obs: &Mesh, kernel: &KernelSpec) -> Result<DMatrix<f64>> {
    let mut l = kernel.tabulate(source, obs)?;
    for (k, mut col) in l.column_iter_mut().enumerate() {
        col *= source.weights()[k];
    }
    Ok(l)
}

/// The discretized integral equation together with (optional) noisy data.
#[derive(Debug, Clone)]
pub struct DiscretizedProblem {
    pub source: Mesh,
    pub obs: Mesh,
    pub kernel: KernelSpec,
    pub forward: DMatrix<f64>,
    pub observations: Option<DVector<f64>>,
    pub noise_sigma: f64,
}

impl DiscretizedProblem {
    pub fn new(source: Mesh, obs: Mesh, kernel: KernelSpec) -> Result<Self> {
        let forward = build_forward(&source, &obs, &kernel)?;
        Ok(Self {
            source,
            obs,
            kernel,
            forward,
            observations: None,
            noise_sigma: 0.0,
        })
    }

    /// Problem on `[a, b] × [c, d]` with `n` source points and observation step `dt`.
    pub fn on_intervals(
        kernel: KernelSpec,
        (a, b, c, d): (f64, f64, f64, f64),
        n: usize,
        dt: f64,
    ) -> Result<Self> {
        Self::new(
            Mesh::right_endpoint(a, b, n)?,
            Mesh::with_step(c, d, dt)?,
            kernel,
        )
    }

    pub fn n(&self) -> usize {
        self.source.len()
    }

    pub fn m(&self) -> usize {
        self.obs.len()
    }

    pub fn with_observations(mut self, y: DVector<f64>, sigma: f64) -> Result<Self> {
        if y.len() != self.m() {
            return Err(Error::Parameter(format!(
                "observation vector has length {} but the mesh has {} points",
                y.len(),
                self.m()
            )));
        }
        self.observations = Some(y);
        self.noise_sigma = sigma;
        Ok(self)
    }

    /// Draws data for `phi_true` and stores it on a copy of the problem.
    pub fn observe(&self, phi_true: &DVector<f64>, nsr: f64, seed: u64) -> Result<Self> {
        let (y, sigma) = generate_data(self, phi_true, nsr, seed)?;
        self.clone().with_observations(y, sigma)
    }
}

/// Synthetic data `y = L φ_true + w` with `σ = ‖L φ_true‖₂ · nsr` and
/// `w_i = σ √μ(t_i) ξ_i`, `ξ` drawn from [`standard_normals`]`(seed, m)`.
pub fn generate_data(
    problem: &DiscretizedProblem,
    phi_true: &DVector<f64>,
    nsr: f64,
    seed: u64,
) -> Result<(DVector<f64>, f64)> {
    if phi_true.len() != problem.n() {
        return Err(Error::Parameter(format!(
            "phi_true has length {} but the source mesh has {} points",
            phi_true.len(),
            problem.n()
        )));
    }
    if !(nsr.is_finite() && nsr >= 0.0) {
        return Err(Error::Parameter(format!(
            "noise-to-signal ratio must be nonnegative, got {nsr}"
        )));
    }
    let clean = &problem.forward * phi_true;
    let sigma = clean.norm() * nsr;
    if sigma == 0.0 {
        return Ok((clean, 0.0));
    }
    let xi = standard_normals(seed, problem.m());
    let y = DVector::from_iterator(
        problem.m(),
        clean
            .iter()
            .zip(problem.obs.weights())
            .zip(&xi)
            .map(|((c, mu), x)| c + sigma * mu.sqrt() * x),
    );
    Ok((y, sigma))
}

/// Named true solutions used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiCatalog {
    /// Second eigenvector `ψ₂` of the generalized spectrum.
    Eig2,
    /// `φ(s) = s²`.
    Square,
}

impl PhiCatalog {
    pub fn name(&self) -> &'static str {
        match self {
            PhiCatalog::Eig2 => "eig2",
            PhiCatalog::Square => "square",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "eig2" => Ok(PhiCatalog::Eig2),
            "square" => Ok(PhiCatalog::Square),
            other => Err(Error::Parameter(format!("unknown phi '{other}'"))),
        }
    }
}

pub fn phi_true_catalog(
    name: PhiCatalog,
    source: &Mesh,
    spectrum: Option<&GeneralizedSpectrum>,
) -> Result<DVector<f64>> {
    match name {
        PhiCatalog::Square => Ok(DVector::from_iterator(
            source.len(),
            source.points().iter().map(|s| s * s),
        )),
        PhiCatalog::Eig2 => {
            let spectrum = spectrum
                .ok_or_else(|| Error::State("eig2 requires a generalized spectrum".into()))?;
            if spectrum.rank < 2 {
                return Err(Error::InsufficientRank {
                    needed: 2,
                    rank: spectrum.rank,
                });
            }
            if spectrum.eigenvectors.nrows() != source.len() {
                return Err(Error::Parameter(
                    "spectrum does not match the source mesh".into(),
                ));
            }
            Ok(spectrum.eigenvectors.column(1).into_owned())
        }
    }
}

/// Reads a tabulated kernel: header `t\s,<s values…>`, one row per `t`.
///
/// Returns `(source mesh, observation mesh, kernel)`; mesh weights come from
/// the point spacing (see [`Mesh::from_points`]).
pub fn read_tabulated_kernel<R: Read>(reader: R) -> Result<(Mesh, Mesh, KernelSpec)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 {
        return Err(Error::Parameter(
            "tabulated kernel needs at least two s columns".into(),
        ));
    }
    let parse = |field: &str, what: &str| -> Result<f64> {
        field
            .parse::<f64>()
            .map_err(|_| Error::Parameter(format!("cannot parse {what} '{field}'")))
    };
    let s: Vec<f64> = headers
        .iter()
        .skip(1)
        .map(|h| parse(h, "s value"))
        .collect::<Result<_>>()?;
    let mut t = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != s.len() + 1 {
            return Err(Error::Parameter(format!(
                "row {} has {} fields, expected {}",
                t.len() + 1,
                record.len(),
                s.len() + 1
            )));
        }
        t.push(parse(&record[0], "t value")?);
        for field in record.iter().skip(1) {
            values.push(parse(field, "kernel value")?);
        }
    }
    let matrix = DMatrix::from_row_slice(t.len(), s.len(), &values);
    Ok((
        Mesh::from_points(s)?,
        Mesh::from_points(t)?,
        KernelSpec::Tabulated(matrix),
    ))
}

pub fn read_tabulated_kernel_file(path: &Path) -> Result<(Mesh, Mesh, KernelSpec)> {
    read_tabulated_kernel(std::fs::File::open(path)?)
}
