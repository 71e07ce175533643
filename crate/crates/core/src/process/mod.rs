//! SDEs with constant diffusion and the grid time-stepper.

mod transforms;

pub use transforms::{builtin_transforms, Builtin, Map, TransformedProcess};

use crate::convolve::{build_gaussian_kernel, cache_kernel_transform, convolve_cdf, fft_size_for, DiffusionKernel};
use crate::error::{Error, Result};
use crate::grid::{validate_threshold, GridDistribution, Kind};
use std::fmt;
use std::sync::Arc;

pub type DriftFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Drift a(x, t) of the constant-diffusion SDE.
#[derive(Clone)]
pub enum Drift {
    Constant(f64),
    Function(DriftFn),
}

impl Drift {
    pub fn from_fn(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Drift::Function(Arc::new(f))
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            Drift::Constant(a) => *a,
            Drift::Function(f) => f(x, t),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Drift::Constant(a) => Some(*a),
            Drift::Function(_) => None,
        }
    }

    /// a(x, t) - shift(x).
    pub fn minus(&self, shift: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Drift {
        let base = self.clone();
        Drift::from_fn(move |x, t| base.eval(x, t) - shift(x))
    }
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Constant(a) => write!(f, "Constant({a})"),
            Drift::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// dX = a(X, t) dt + c dW on the open interval `domain`.
#[derive(Clone, Debug)]
pub struct ProcessSpec {
    pub drift: Drift,
    pub diffusion: f64,
    pub domain: (f64, f64),
}

impl ProcessSpec {
    pub fn new(drift: Drift, diffusion: f64) -> Result<Self> {
        if !(diffusion > 0.0) || !diffusion.is_finite() {
            return Err(Error::InvalidInput(format!("diffusion must be positive, got {diffusion}")));
        }
        if let Drift::Constant(a) = drift {
            if !a.is_finite() {
                return Err(Error::InvalidInput("drift must be finite".into()));
            }
        }
        Ok(ProcessSpec { drift, diffusion, domain: (f64::NEG_INFINITY, f64::INFINITY) })
    }

    pub fn constant(a: f64, c: f64) -> Result<Self> {
        Self::new(Drift::Constant(a), c)
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Self {
        self.domain = (lo, hi);
        self
    }

    pub fn in_domain(&self, x: f64) -> bool {
        x > self.domain.0 && x < self.domain.1
    }
}

/// Subtracts a continuous dividend yield from a log-price drift.
pub fn yield_adjust(spec: &ProcessSpec, dividend_yield: f64) -> ProcessSpec {
    let drift = match &spec.drift {
        Drift::Constant(a) => Drift::Constant(a - dividend_yield),
        other => other.minus(move |_| dividend_yield),
    };
    ProcessSpec { drift, ..spec.clone() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StepOrdering {
    /// Drift at t_{k-1}, then resample and convolve.
    DriftFirst,
    /// Convolve, then drift at t_k and resample.
    DiffusionFirst,
}

impl std::str::FromStr for StepOrdering {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drift-first" => Ok(StepOrdering::DriftFirst),
            "diffusion-first" => Ok(StepOrdering::DiffusionFirst),
            _ => Err(Error::InvalidConfig(format!("unknown ordering `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub spacing: f64,
    pub dt: f64,
    pub steps: usize,
    pub threshold: f64,
    pub ordering: StepOrdering,
    pub renormalize_each_step: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            spacing: 1e-3,
            dt: 1.0 / 365.0,
            steps: 365,
            threshold: 1e-12,
            ordering: StepOrdering::DriftFirst,
            renormalize_each_step: false,
        }
    }
}

impl SimulationConfig {
    /// `steps` equal steps covering `horizon`.
    pub fn for_horizon(horizon: f64, steps: usize, spacing: f64) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidConfig(format!("need steps > 0 and horizon > 0, got {steps}, {horizon}")));
        }
        let cfg = SimulationConfig { spacing, dt: horizon / steps as f64, steps, ..Default::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(Error::InvalidConfig(format!("spacing must be positive, got {}", self.spacing)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        validate_threshold(self.threshold)
    }
}

#[derive(Clone, Debug)]
pub enum InitialCondition {
    PointMass(f64),
    Grid(GridDistribution),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Keep {
    All,
    Terminal,
}

/// Moves every grid point to x + a(x, t) dt, leaving the CDF values alone.
pub fn drift_apply(d: &GridDistribution, spec: &ProcessSpec, t: f64, dt: f64) -> Result<GridDistribution> {
    let moved: Vec<f64> = d.positions().iter().map(|&x| x + spec.drift.eval(x, t) * dt).collect();
    if moved.iter().any(|y| !y.is_finite()) {
        return Err(Error::Domain(format!("drift is not finite on the grid at t={t}")));
    }
    if moved.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::StepSize(format!("drift map x + a(x,t)dt is not increasing at t={t}, dt={dt}")));
    }
    if !spec.in_domain(moved[0]) || !spec.in_domain(moved[moved.len() - 1]) {
        return Err(Error::Domain(format!(
            "drifted grid [{}, {}] leaves the domain ({}, {})",
            moved[0],
            moved[moved.len() - 1],
            spec.domain.0,
            spec.domain.1
        )));
    }
    GridDistribution::with_mass(moved, d.values().to_vec(), d.kind(), d.mass())
}

/// Index of the first point whose CDF value reaches half the mass.
pub(crate) fn median_index(d: &GridDistribution) -> usize {
    let half = 0.5 * d.mass();
    d.values().partition_point(|&v| v < half).min(d.len() - 1)
}

/// Resamples onto a uniform grid of `spacing` anchored at the median node,
/// so a pure translation needs no interpolation at all.
pub fn regrid(d: &GridDistribution, spacing: f64) -> Result<GridDistribution> {
    if let Some(h) = d.spacing() {
        if (h - spacing).abs() <= 1e-12 * spacing {
            return Ok(d.clone());
        }
    }
    let anchor = d.positions()[median_index(d)];
    let jlo = ((d.lo() - anchor) / spacing - 1e-9).ceil();
    let jhi = ((d.hi() - anchor) / spacing + 1e-9).floor();
    d.interpolate_to_uniform(spacing, anchor + jlo * spacing, anchor + jhi * spacing)
}

/// Performs time steps with the kernel transform cached between calls.
pub struct Stepper<'a> {
    spec: &'a ProcessSpec,
    cfg: &'a SimulationConfig,
    kernel: DiffusionKernel,
}

impl<'a> Stepper<'a> {
    pub fn new(spec: &'a ProcessSpec, cfg: &'a SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        let kernel = build_gaussian_kernel(spec.diffusion, cfg.dt, cfg.spacing, cfg.threshold)?;
        Ok(Stepper { spec, cfg, kernel })
    }

    pub fn kernel(&self) -> &DiffusionKernel {
        &self.kernel
    }

    fn convolve(&mut self, d: &GridDistribution) -> Result<GridDistribution> {
        let size = fft_size_for(d.len(), &self.kernel);
        self.kernel = cache_kernel_transform(self.kernel.clone(), size);
        convolve_cdf(d, &self.kernel)
    }

    /// Advances `d` from t_{k-1} to t_k, k counted from 1.
    pub fn step(&mut self, d: &GridDistribution, k: usize) -> Result<GridDistribution> {
        if d.kind() != Kind::Cdf {
            return Err(Error::InvalidInput("the stepper works on CDFs".into()));
        }
        let (h, dt) = (self.cfg.spacing, self.cfg.dt);
        let out = match self.cfg.ordering {
            StepOrdering::DriftFirst => {
                let t = (k as f64 - 1.0) * dt;
                let moved = regrid(&drift_apply(d, self.spec, t, dt)?, h)?;
                self.convolve(&moved)?
            }
            StepOrdering::DiffusionFirst => {
                let t = k as f64 * dt;
                let spread = self.convolve(&regrid(d, h)?)?;
                regrid(&drift_apply(&spread, self.spec, t, dt)?, h)?
            }
        };
        self.finish(out)
    }

    fn finish(&self, d: GridDistribution) -> Result<GridDistribution> {
        let mut out = d.truncate_by_threshold(self.cfg.threshold)?;
        if self.cfg.renormalize_each_step {
            let top = out.values()[out.len() - 1];
            if top > 0.0 {
                let scale = out.mass() / top;
                let vals = out.values().iter().map(|v| (v * scale).min(out.mass())).collect();
                out = GridDistribution::with_mass(out.positions().to_vec(), vals, Kind::Cdf, out.mass())?;
            }
        }
        Ok(out)
    }

    /// First step out of a point mass, written down exactly.
    pub fn first_from_point(&mut self, x0: f64) -> Result<GridDistribution> {
        if !self.spec.in_domain(x0) {
            return Err(Error::Domain(format!("initial point {x0} outside the domain")));
        }
        let (h, dt, eps) = (self.cfg.spacing, self.cfg.dt, self.cfg.threshold);
        let sd = self.spec.diffusion * dt.sqrt();
        match self.cfg.ordering {
            StepOrdering::DriftFirst => {
                let mean = x0 + self.spec.drift.eval(x0, 0.0) * dt;
                GridDistribution::gaussian_cdf(mean, sd, h, eps)
            }
            StepOrdering::DiffusionFirst => {
                let g = GridDistribution::gaussian_cdf(x0, sd, h, eps)?;
                let out = regrid(&drift_apply(&g, self.spec, dt, dt)?, h)?;
                self.finish(out)
            }
        }
    }
}

/// One step with a freshly built kernel; see [`Stepper`] for repeated use.
pub fn step(d: &GridDistribution, spec: &ProcessSpec, k: usize, cfg: &SimulationConfig) -> Result<GridDistribution> {
    Stepper::new(spec, cfg)?.step(d, k)
}

/// Runs `cfg.steps` steps. `hook` sees every distribution after its step and
/// may replace it (barriers, dividends).
pub fn simulate_with(
    initial: &InitialCondition,
    spec: &ProcessSpec,
    cfg: &SimulationConfig,
    keep: Keep,
    mut hook: impl FnMut(usize, GridDistribution) -> Result<GridDistribution>,
) -> Result<Vec<GridDistribution>> {
    cfg.validate()?;
    let mut out = Vec::new();
    let mut current = match initial {
        InitialCondition::Grid(g) => {
            if g.kind() != Kind::Cdf {
                return Err(Error::InvalidInput("initial grid must be a CDF".into()));
            }
            if cfg.steps == 0 {
                return Ok(vec![g.clone()]);
            }
            None
        }
        InitialCondition::PointMass(_) if cfg.steps == 0 => {
            return Err(Error::InvalidConfig("a point mass needs at least one step".into()));
        }
        InitialCondition::PointMass(_) => None,
    };
    let mut stepper = Stepper::new(spec, cfg)?;
    for k in 1..=cfg.steps {
        let next = match (&current, initial) {
            (Some(d), _) => stepper.step(d, k)?,
            (None, InitialCondition::PointMass(x0)) => stepper.first_from_point(*x0)?,
            (None, InitialCondition::Grid(g)) => stepper.step(g, k)?,
        };
        let next = hook(k, next)?;
        if keep == Keep::All {
            out.push(next.clone());
        }
        current = Some(next);
    }
    if keep == Keep::Terminal {
        out.push(current.expect("at least one step"));
    }
    Ok(out)
}

pub fn simulate(
    initial: &InitialCondition,
    spec: &ProcessSpec,
    cfg: &SimulationConfig,
    keep: Keep,
) -> Result<Vec<GridDistribution>> {
    simulate_with(initial, spec, cfg, keep, |_, d| Ok(d))
}

/// Terminal law of dX = a dt + c dW in one convolution with N(a T, c^2 T).
pub fn analytic_constant_coeff(
    initial: &InitialCondition,
    a: f64,
    c: f64,
    horizon: f64,
    spacing: f64,
    eps: f64,
) -> Result<GridDistribution> {
    if horizon < 0.0 || c < 0.0 {
        return Err(Error::InvalidInput("horizon and diffusion must be non-negative".into()));
    }
    match initial {
        InitialCondition::PointMass(x0) => GridDistribution::gaussian_cdf(x0 + a * horizon, c * horizon.sqrt(), spacing, eps),
        InitialCondition::Grid(g) => {
            if horizon == 0.0 || c == 0.0 {
                let shifted: Vec<f64> = g.positions().iter().map(|x| x + a * horizon).collect();
                return GridDistribution::with_mass(shifted, g.values().to_vec(), Kind::Cdf, g.mass());
            }
            let shifted: Vec<f64> = g.positions().iter().map(|x| x + a * horizon).collect();
            let moved = GridDistribution::with_mass(shifted, g.values().to_vec(), Kind::Cdf, g.mass())?;
            let uniform = regrid(&moved, spacing)?;
            let k = build_gaussian_kernel(c, horizon, spacing, eps)?;
            convolve_cdf(&uniform, &k)?.truncate_by_threshold(eps)
        }
    }
}
