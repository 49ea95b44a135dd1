//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; lists are comma-separated.
//! Keys match the long CLI flags with `-` replaced by `_`.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::ExperimentConfig;
use crate::lcurve::DEFAULT_GRID_SIZE;
use crate::mesh::{read_tabulated_kernel_file, DiscretizedProblem, KernelSpec, Mesh, PhiCatalog};
use crate::regularize::RegularizerKind;
use crate::theory::{ConstantsSource, Decay};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Solve,
    SweepNoise,
    SweepMesh,
    Theory,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Solve => "solve",
            Command::SweepNoise => "sweep-noise",
            Command::SweepMesh => "sweep-mesh",
            Command::Theory => "theory",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "spectrum" => Ok(Command::Spectrum),
            "solve" => Ok(Command::Solve),
            "sweep-noise" => Ok(Command::SweepNoise),
            "sweep-mesh" => Ok(Command::SweepMesh),
            "theory" => Ok(Command::Theory),
            other => Err(Error::Config(format!("unknown command '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelArg {
    Exp,
    Poly,
    /// Tabulated CSV, header `t\s,<s values>`.
    File(PathBuf),
}

impl KernelArg {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(KernelArg::Exp),
            "poly" => Ok(KernelArg::Poly),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(KernelArg::File(p.into())),
                _ => Err(Error::Config(format!("unknown kernel '{s}'"))),
            },
        }
    }

    fn render(&self) -> String {
        match self {
            KernelArg::Exp => "exp".into(),
            KernelArg::Poly => "poly".into(),
            KernelArg::File(p) => format!("file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhiArg {
    Catalog(PhiCatalog),
    /// CSV with a header and the values in the last column.
    File(PathBuf),
}

impl PhiArg {
    fn parse(s: &str) -> Result<Self> {
        match s.strip_prefix("file:") {
            Some(p) if !p.is_empty() => Ok(PhiArg::File(p.into())),
            Some(_) => Err(Error::Config("empty phi file path".into())),
            None => PhiCatalog::parse(s)
                .map(PhiArg::Catalog)
                .map_err(|_| Error::Config(format!("unknown phi '{s}'"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            PhiArg::Catalog(c) => c.name().into(),
            PhiArg::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "phi".into()),
        }
    }

    fn render(&self) -> String {
        match self {
            PhiArg::Catalog(c) => c.name().into(),
            PhiArg::File(p) => format!("file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub kernel: KernelArg,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub n: usize,
    pub dt: f64,
    pub nsr: Vec<f64>,
    pub dt_list: Vec<f64>,
    pub mesh_nsr: f64,
    pub reference_dt: f64,
    pub reg: Vec<RegularizerKind>,
    pub phi: Vec<PhiArg>,
    pub seed: u64,
    pub sims: usize,
    pub grid: usize,
    pub out: PathBuf,
    pub decay: Decay,
    pub theta: f64,
    pub sigmas: Vec<f64>,
    pub constants: ConstantsSource,
}

/// Every recognised key, in serialization order, with its help line.
pub const KEYS: [(&str, &str); 22] = [
    (
        "command",
        "spectrum | solve | sweep-noise | sweep-mesh | theory",
    ),
    (
        "kernel",
        "exp | poly | file:PATH (CSV, header t\\s,<s values>)",
    ),
    ("a", "left end of the source interval"),
    ("b", "right end of the source interval"),
    ("c", "left end of the observation interval"),
    ("d", "right end of the observation interval"),
    ("n", "number of source points"),
    ("dt", "observation step"),
    ("nsr", "noise-to-signal ratios (solve takes one)"),
    ("dt_list", "observation steps of the mesh sweep"),
    ("mesh_nsr", "noise-to-signal ratio of the mesh sweep"),
    (
        "reference_dt",
        "observation step of the mesh sweep's reference mesh",
    ),
    ("reg", "l2 | L2 | rkhs | all, or a list"),
    (
        "phi",
        "eig2 | square | file:PATH, or a list (solve takes one)",
    ),
    ("seed", "master seed"),
    ("sims", "simulations per sweep cell"),
    ("grid", "L-curve grid size"),
    ("out", "output directory"),
    ("decay", "theory: exponential | power"),
    ("theta", "theory: decay rate"),
    ("sigmas", "theory: noise levels"),
    ("constants", "theory: stated | exact prediction constants"),
];

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}' as a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}' as a count")))
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>> {
    split_list(v).map(|s| parse_f64(key, s)).collect()
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Defaults reproduce the reference setup; `solve` uses a single noise
    /// level and truth.
    pub fn defaults(command: Command) -> Self {
        let base = ExperimentConfig::default();
        let (a, b, c, d) = base.intervals;
        let single = command == Command::Solve || command == Command::Spectrum;
        Self {
            command,
            kernel: KernelArg::Exp,
            a,
            b,
            c,
            d,
            n: base.n,
            dt: base.dt,
            nsr: if single { vec![1.0] } else { base.nsr_list },
            dt_list: base.dt_list,
            mesh_nsr: base.mesh_nsr,
            reference_dt: base.reference_dt,
            reg: RegularizerKind::ALL.to_vec(),
            phi: if single {
                vec![PhiArg::Catalog(PhiCatalog::Eig2)]
            } else {
                vec![
                    PhiArg::Catalog(PhiCatalog::Eig2),
                    PhiArg::Catalog(PhiCatalog::Square),
                ]
            },
            seed: base.seed,
            sims: base.n_sims,
            grid: DEFAULT_GRID_SIZE,
            out: PathBuf::from("out"),
            decay: Decay::Exponential,
            theta: 1.0,
            sigmas: vec![1e-2, 1e-3, 1e-4],
            constants: ConstantsSource::Stated,
        }
    }

    /// Parses a whole config text; `command` defaults to `solve`.
    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_entries(text)?;
        let command = match entries.iter().find(|(k, _)| k == "command") {
            Some((_, v)) => Command::parse(v)?,
            None => Command::Solve,
        };
        let mut cfg = Self::defaults(command);
        for (k, v) in &entries {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Applies the entries of a config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_entries(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "command" => {
                let c = Command::parse(v)?;
                if c != self.command {
                    return Err(Error::Config(format!(
                        "config is for '{}' but the command is '{}'",
                        c.name(),
                        self.command.name()
                    )));
                }
            }
            "kernel" => self.kernel = KernelArg::parse(v)?,
            "a" => self.a = parse_f64(key, v)?,
            "b" => self.b = parse_f64(key, v)?,
            "c" => self.c = parse_f64(key, v)?,
            "d" => self.d = parse_f64(key, v)?,
            "n" => self.n = parse_usize(key, v)?,
            "dt" => self.dt = parse_f64(key, v)?,
            "nsr" => self.nsr = parse_f64_list(key, v)?,
            "dt_list" => self.dt_list = parse_f64_list(key, v)?,
            "mesh_nsr" => self.mesh_nsr = parse_f64(key, v)?,
            "reference_dt" => self.reference_dt = parse_f64(key, v)?,
            "reg" => {
                self.reg = if v == "all" {
                    RegularizerKind::ALL.to_vec()
                } else {
                    split_list(v)
                        .map(|s| {
                            s.parse()
                                .map_err(|_| Error::Config(format!("unknown regularizer '{s}'")))
                        })
                        .collect::<Result<_>>()?
                }
            }
            "phi" => self.phi = split_list(v).map(PhiArg::parse).collect::<Result<_>>()?,
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| Error::Config(format!("seed: cannot parse '{v}'")))?
            }
            "sims" => self.sims = parse_usize(key, v)?,
            "grid" => self.grid = parse_usize(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "decay" => {
                self.decay =
                    Decay::parse(v).map_err(|_| Error::Config(format!("unknown decay '{v}'")))?
            }
            "theta" => self.theta = parse_f64(key, v)?,
            "sigmas" => self.sigmas = parse_f64_list(key, v)?,
            "constants" => {
                self.constants = match v {
                    "stated" => ConstantsSource::Stated,
                    "exact" => ConstantsSource::Exact,
                    other => return Err(Error::Config(format!("unknown constants '{other}'"))),
                }
            }
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Text that [`RunConfig::parse`] maps back to `self`.
    pub fn serialize(&self) -> String {
        let num = |x: &f64| format!("{x:e}");
        let values = [
            self.command.name().to_string(),
            self.kernel.render(),
            num(&self.a),
            num(&self.b),
            num(&self.c),
            num(&self.d),
            self.n.to_string(),
            num(&self.dt),
            join(&self.nsr, num),
            join(&self.dt_list, num),
            num(&self.mesh_nsr),
            num(&self.reference_dt),
            join(&self.reg, |k| k.name().to_string()),
            join(&self.phi, PhiArg::render),
            self.seed.to_string(),
            self.sims.to_string(),
            self.grid.to_string(),
            self.out.display().to_string(),
            match self.decay {
                Decay::Exponential => "exponential".into(),
                Decay::Power => "power".into(),
            },
            num(&self.theta),
            join(&self.sigmas, num),
            match self.constants {
                ConstantsSource::Stated => "stated".into(),
                ConstantsSource::Exact => "exact".into(),
            },
        ];
        let mut out = String::new();
        for ((key, help), value) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "# {help}\n{key} = {value}");
        }
        out
    }

    /// Checks every numeric parameter the chosen command uses.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if self.command == Command::Theory {
            let min_theta = match self.decay {
                Decay::Exponential => 0.0,
                Decay::Power => 1.0,
            };
            if !(self.theta.is_finite() && self.theta > min_theta) {
                return bad(format!("theta must exceed {min_theta}, got {}", self.theta));
            }
            if self.sigmas.is_empty() || !self.sigmas.iter().all(|&s| positive(s)) {
                return bad("sigmas must be a nonempty list of positive numbers".into());
            }
            return Ok(());
        }
        if !matches!(self.kernel, KernelArg::File(_)) && !(self.a < self.b && self.c < self.d) {
            return bad(format!(
                "invalid intervals [{}, {}], [{}, {}]",
                self.a, self.b, self.c, self.d
            ));
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !positive(self.dt) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.grid < 10 {
            return bad(format!("grid must be at least 10, got {}", self.grid));
        }
        if self.reg.is_empty() || self.phi.is_empty() || self.nsr.is_empty() {
            return bad("reg, phi and nsr must be nonempty".into());
        }
        if !self.nsr.iter().all(|&v| nonneg(v)) {
            return bad("nsr values must be nonnegative".into());
        }
        match self.command {
            Command::Solve => {
                if self.nsr.len() != 1 || self.phi.len() != 1 {
                    return bad("solve takes exactly one nsr and one phi".into());
                }
            }
            Command::SweepNoise | Command::SweepMesh => {
                if self.sims < 1 {
                    return bad("sims must be at least 1".into());
                }
                if self.phi.iter().any(|p| matches!(p, PhiArg::File(_))) {
                    return bad("sweeps take catalog truths (eig2, square)".into());
                }
                if self.command == Command::SweepMesh {
                    if self.dt_list.is_empty()
                        || !self.dt_list.iter().all(|&v| positive(v))
                        || !positive(self.reference_dt)
                        || !nonneg(self.mesh_nsr)
                    {
                        return bad("dt_list, reference_dt and mesh_nsr must be valid".into());
                    }
                    if matches!(self.kernel, KernelArg::File(_)) {
                        return bad("the mesh sweep needs an analytic kernel".into());
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The discretized problem on the configured meshes; a tabulated kernel
    /// brings its own meshes.
    pub fn problem(&self) -> Result<DiscretizedProblem> {
        match &self.kernel {
            KernelArg::File(p) => {
                let (src, obs, k) = read_tabulated_kernel_file(p)?;
                DiscretizedProblem::new(src, obs, k)
            }
            kernel => {
                let k = if *kernel == KernelArg::Exp {
                    KernelSpec::Exp
                } else {
                    KernelSpec::Poly
                };
                let src = Mesh::right_endpoint(self.a, self.b, self.n)?;
                let obs = Mesh::with_step(self.c, self.d, self.dt)?;
                DiscretizedProblem::new(src, obs, k)
            }
        }
    }

    /// Sweep configuration for one catalog truth.
    pub fn experiment(&self, phi: PhiCatalog) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig {
            kernel: KernelSpec::Exp,
            intervals: (self.a, self.b, self.c, self.d),
            n: self.n,
            dt: self.dt,
            nsr_list: self.nsr.clone(),
            dt_list: self.dt_list.clone(),
            mesh_nsr: self.mesh_nsr,
            reference_dt: self.reference_dt,
            phi,
            n_sims: self.sims,
            seed: self.seed,
            kinds: self.reg.clone(),
            grid_size: self.grid,
        };
        match &self.kernel {
            KernelArg::Exp => {}
            KernelArg::Poly => cfg.kernel = KernelSpec::Poly,
            KernelArg::File(p) => {
                let (src, obs, k) = read_tabulated_kernel_file(p)?;
                let (delta, step) = match (src.uniform_weight(), obs.uniform_weight()) {
                    (Some(d), Some(s)) => (d, s),
                    _ => {
                        return Err(Error::Config(
                            "sweeps need a tabulated kernel on uniform meshes".into(),
                        ))
                    }
                };
                let (s, t) = (src.points(), obs.points());
                cfg.intervals = (s[0] - delta, s[s.len() - 1], t[0] - step, t[t.len() - 1]);
                cfg.n = s.len();
                cfg.dt = step;
                cfg.dt_list = vec![step];
                cfg.kernel = k;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn parse_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut seen = Vec::<String>::new();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let k = k.trim().to_string();
        if !KEYS.iter().any(|(key, _)| *key == k) {
            return Err(Error::Config(format!(
                "line {}: unknown key '{k}'",
                lineno + 1
            )));
        }
        if seen.contains(&k) {
            return Err(Error::Config(format!(
                "line {}: duplicate key '{k}'",
                lineno + 1
            )));
        }
        seen.push(k.clone());
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))
}
