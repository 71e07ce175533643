//! Stochastic volatility by mixtures: the volatility law is evolved on its
//! own grid and each price step is a weighted sum of constant-volatility steps.

use crate::convolve::{convolve_cdf, DiffusionKernel};
use crate::error::{Error, Result};
use crate::grid::{GridDistribution, Kind};
use crate::normal;
use crate::pricing::{expectation, MarketParams, PayoffProfile};
use crate::process::{drift_apply, median_index, simulate, Drift, InitialCondition, Keep, ProcessSpec, SimulationConfig};
use crate::process::{Map, TransformedProcess};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// States lighter than this are left out of a mixture step.
pub const MIN_STATE_WEIGHT: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub mu: f64,
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub rho: f64,
    pub v0: f64,
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu.is_finite()
            && self.kappa > 0.0
            && self.theta > 0.0
            && self.xi > 0.0
            && (-1.0..=1.0).contains(&self.rho)
            && self.v0 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid Heston parameters {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SabrParams {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub f0: f64,
    pub sigma0: f64,
}

impl SabrParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.alpha.is_finite()
            && (0.0..1.0).contains(&self.beta)
            && (-1.0..=1.0).contains(&self.rho)
            && self.f0 > 0.0
            && self.sigma0 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid SABR parameters {self:?}")))
        }
    }
}

/// Discrete volatility law. Each state stands for one bin of the continuous
/// law: `weights` are bin probabilities, `sigmas` the conditional means and
/// `rms` the conditional root mean squares. Mixture steps use `rms`, which
/// keeps the mixed variance exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolStateGrid {
    pub sigmas: Vec<f64>,
    pub weights: Vec<f64>,
    pub rms: Vec<f64>,
}

impl VolStateGrid {
    /// States with equal mean and rms; weights are normalised.
    pub fn new(sigmas: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let rms = sigmas.clone();
        Self::from_parts(sigmas, weights, rms)
    }

    fn from_parts(sigmas: Vec<f64>, mut weights: Vec<f64>, rms: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() || sigmas.len() != weights.len() || rms.len() != sigmas.len() {
            return Err(Error::InvalidInput("volatility states and weights must match and be non-empty".into()));
        }
        if sigmas.iter().chain(&rms).any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Domain("volatility states must be positive".into()));
        }
        if sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("volatility states must increase".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("volatility weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateDistribution("volatility weights sum to zero".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(VolStateGrid { sigmas, weights, rms })
    }

    pub fn point(sigma: f64) -> Result<Self> {
        Self::new(vec![sigma], vec![1.0])
    }

    /// Bins a volatility CDF into `n` equal-width states over its support.
    pub fn from_cdf(d: &GridDistribution, n: usize) -> Result<Self> {
        if d.kind() != Kind::Cdf || n == 0 {
            return Err(Error::InvalidInput("need a CDF and at least one state".into()));
        }
        if d.lo() <= 0.0 {
            return Err(Error::Domain(format!("volatility grid reaches {} <= 0", d.lo())));
        }
        let (x, f) = (d.positions(), d.values());
        let width = (d.hi() - d.lo()) / n as f64;
        let mut acc = vec![[0.0f64; 3]; n];
        for i in 0..x.len() - 1 {
            let mass = f[i + 1] - f[i];
            if mass <= 0.0 {
                continue;
            }
            let mid = 0.5 * (x[i] + x[i + 1]);
            let half = 0.5 * (x[i + 1] - x[i]);
            let b = (((mid - d.lo()) / width) as usize).min(n - 1);
            acc[b][0] += mass;
            acc[b][1] += mass * mid;
            // uniform mass within the cell
            acc[b][2] += mass * (mid * mid + half * half / 3.0);
        }
        Self::from_bins(&acc)
    }

    fn from_bins(acc: &[[f64; 3]]) -> Result<Self> {
        let (mut s, mut w, mut r) = (Vec::new(), Vec::new(), Vec::new());
        for b in acc.iter().filter(|b| b[0] > 0.0) {
            let mean = b[1] / b[0];
            s.push(mean);
            w.push(b[0]);
            r.push((b[2] / b[0]).max(mean * mean).sqrt());
        }
        if s.is_empty() {
            return Err(Error::DegenerateDistribution("volatility law has no mass".into()));
        }
        Self::from_parts(s, w, r)
    }

    /// Bins of a lognormal law for sigma, equal width in log sigma across
    /// the `eps` tail quantiles, with exact bin moments.
    pub fn lognormal(log_mean: f64, log_sd: f64, n: usize, eps: f64) -> Result<Self> {
        crate::grid::validate_threshold(eps)?;
        if n == 0 || !(log_sd >= 0.0) {
            return Err(Error::InvalidInput("need n > 0 and a non-negative spread".into()));
        }
        if log_sd == 0.0 {
            return Self::point(log_mean.exp());
        }
        let z = normal::tail_z(eps);
        let (m, s) = (log_mean, log_sd);
        // partial moment E[sigma^k; log sigma < u] / e^{k m + k^2 s^2 / 2}
        let part = |k: f64, u: f64| normal::cdf((u - m - k * s * s) / s);
        let scale = |k: f64| (k * m + 0.5 * k * k * s * s).exp();
        let width = 2.0 * z * s / n as f64;
        let acc: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let (a, b) = (m - z * s + i as f64 * width, m - z * s + (i + 1) as f64 * width);
                let mut out = [0.0; 3];
                for (k, o) in out.iter_mut().enumerate() {
                    let k = k as f64;
                    // the upper tail difference is taken from the right to keep precision
                    let d = if a > m + k * s * s {
                        normal::cdf(-(a - m - k * s * s) / s) - normal::cdf(-(b - m - k * s * s) / s)
                    } else {
                        part(k, b) - part(k, a)
                    };
                    *o = scale(k) * d;
                }
                out
            })
            .collect();
        Self::from_bins(&acc)
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.sigmas.iter().zip(&self.weights).map(|(s, w)| s * w).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.rms.iter().zip(&self.weights).map(|(s, w)| s * s * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.second_moment() - m * m).max(0.0)
    }
}

/// The Heston volatility sigma = sqrt(v), which has constant diffusion xi / 2.
pub fn heston_vol_process(p: &HestonParams) -> Result<TransformedProcess> {
    p.validate()?;
    let (k, th, xi) = (p.kappa, p.theta, p.xi);
    let drift = Drift::from_fn(move |s, _| k * (th - s * s) / (2.0 * s) - xi * xi / (8.0 * s));
    let spec = ProcessSpec::new(drift, 0.5 * xi)?.with_domain(0.0, f64::INFINITY);
    Ok(TransformedProcess {
        name: "heston-vol",
        forward: Arc::new(f64::sqrt),
        inverse: Arc::new(|s| s * s),
        spec,
        elasticity: None,
    })
}

/// Law of the SABR volatility at time t: log sigma_t ~ N(log sigma_0 - alpha^2 t / 2, alpha^2 t).
pub fn sabr_logvol_distribution(p: &SabrParams, t: f64, n: usize, eps: f64) -> Result<VolStateGrid> {
    p.validate()?;
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("time must be non-negative, got {t}")));
    }
    let var = p.alpha * p.alpha * t;
    if var == 0.0 {
        return VolStateGrid::point(p.sigma0);
    }
    VolStateGrid::lognormal(p.sigma0.ln() - 0.5 * var, var.sqrt(), n, eps)
}

/// SABR forward in q = F^(1-beta)/(1-beta) coordinates, or q = ln F for beta = 0.
#[derive(Clone)]
pub struct SabrTransform {
    pub beta: f64,
    pub forward: Map,
    pub inverse: Map,
    pub domain: (f64, f64),
}

impl SabrTransform {
    /// Drift of q when the volatility is `sigma`.
    pub fn drift_for_sigma(&self, sigma: f64) -> Drift {
        let b = self.beta;
        if b == 0.0 {
            Drift::Constant(-0.5 * sigma * sigma)
        } else {
            let c = -b / (1.0 - b) * 0.5 * sigma * sigma;
            Drift::from_fn(move |q, _| c / q)
        }
    }
}

pub fn sabr_q_transform(p: &SabrParams) -> Result<SabrTransform> {
    p.validate()?;
    let b = p.beta;
    Ok(if b == 0.0 {
        SabrTransform { beta: b, forward: Arc::new(f64::ln), inverse: Arc::new(f64::exp), domain: (f64::NEG_INFINITY, f64::INFINITY) }
    } else {
        let e = 1.0 - b;
        SabrTransform {
            beta: b,
            forward: Arc::new(move |f: f64| f.powf(e) / e),
            inverse: Arc::new(move |q: f64| (e * q).powf(1.0 / e)),
            domain: (0.0, f64::INFINITY),
        }
    })
}

/// Lower-triangular L with L L^T = [[1, rho], [rho, 1]].
pub fn cholesky_decorrelate(rho: f64) -> Result<[[f64; 2]; 2]> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidInput(format!("correlation must lie in [-1, 1], got {rho}")));
    }
    Ok([[1.0, 0.0], [rho, (1.0 - rho * rho).sqrt()]])
}

/// Active states with renormalised weights.
fn active(vol: &VolStateGrid) -> Result<Vec<(f64, f64)>> {
    let kept: Vec<(f64, f64)> = vol
        .rms
        .iter()
        .zip(&vol.weights)
        .filter(|(_, w)| **w >= MIN_STATE_WEIGHT)
        .map(|(s, w)| (*s, *w))
        .collect();
    let total: f64 = kept.iter().map(|(_, w)| w).sum();
    if kept.is_empty() || !(total > 0.0) {
        return Err(Error::DegenerateDistribution("every volatility state is negligible".into()));
    }
    Ok(kept.into_iter().map(|(s, w)| (s, w / total)).collect())
}

/// One drift-first step of the mixture from t_{k-1} to t_k.
///
/// When every state has a constant drift, the common mean drift is applied
/// as a translation and the remaining per-state shifts and spreads are fused
/// into one mixture kernel. Otherwise each state is drifted, resampled onto
/// a shared grid and convolved separately before the CDFs are summed.
pub fn mixture_step(
    f: &GridDistribution,
    vol: &VolStateGrid,
    drift_for_sigma: &dyn Fn(f64) -> Drift,
    domain: (f64, f64),
    k: usize,
    cfg: &SimulationConfig,
) -> Result<GridDistribution> {
    if f.kind() != Kind::Cdf {
        return Err(Error::InvalidInput("mixture steps work on CDFs".into()));
    }
    let (h, dt, eps) = (cfg.spacing, cfg.dt, cfg.threshold);
    let t = (k as f64 - 1.0) * dt;
    let states = active(vol)?;
    let drifts: Vec<Drift> = states.iter().map(|(s, _)| drift_for_sigma(*s)).collect();
    let consts: Option<Vec<f64>> = drifts.iter().map(Drift::as_constant).collect();

    if let (Some(a), true) = (consts, states.len() > 1) {
        let abar: f64 = a.iter().zip(&states).map(|(a, (_, w))| a * w).sum();
        let spec = ProcessSpec { drift: Drift::Constant(abar), diffusion: states[0].0, domain };
        let moved = crate::process::regrid(&drift_apply(f, &spec, t, dt)?, h)?;
        let parts = states
            .iter()
            .zip(&a)
            .map(|((s, w), ai)| Ok((*w, DiffusionKernel::gaussian(s * dt.sqrt(), (ai - abar) * dt, h, eps)?)))
            .collect::<Result<Vec<_>>>()?;
        let kernel = DiffusionKernel::mixture(&parts)?;
        return convolve_cdf(&moved, &kernel)?.truncate_by_threshold(eps);
    }

    let moved = states
        .iter()
        .zip(drifts)
        .map(|((s, _), drift)| drift_apply(f, &ProcessSpec { drift, diffusion: *s, domain }, t, dt))
        .collect::<Result<Vec<_>>>()?;
    let heaviest = (0..states.len()).max_by(|&i, &j| states[i].1.total_cmp(&states[j].1)).unwrap();
    let anchor = moved[heaviest].positions()[median_index(&moved[heaviest])];
    let lo = moved.iter().map(|d| d.lo()).fold(f64::INFINITY, f64::min);
    let hi = moved.iter().map(|d| d.hi()).fold(f64::NEG_INFINITY, f64::max);
    let jlo = ((lo - anchor) / h - 1e-9).ceil();
    let jhi = ((hi - anchor) / h + 1e-9).floor();
    let start = anchor + jlo * h;
    let mut pieces = Vec::with_capacity(states.len());
    for ((s, w), d) in states.iter().zip(&moved) {
        let uniform = d.interpolate_to_uniform(h, start, anchor + jhi * h)?;
        let kern = DiffusionKernel::gaussian(s * dt.sqrt(), 0.0, h, eps)?;
        pieces.push((*w, kern.first(), convolve_cdf(&uniform, &kern)?));
    }
    let first = pieces.iter().map(|p| p.1).min().unwrap();
    let len = pieces.iter().map(|p| (p.1 - first) as usize + p.2.len()).max().unwrap();
    let mass = f.mass();
    let mut values = vec![0.0; len];
    for (w, off, d) in &pieces {
        let off = (off - first) as usize;
        let v = d.values();
        for (q, out) in values.iter_mut().enumerate() {
            *out += w * if q < off {
                0.0
            } else if q - off < v.len() {
                v[q - off]
            } else {
                mass
            };
        }
    }
    let mut run = 0.0f64;
    for v in values.iter_mut() {
        *v = v.clamp(run, mass);
        run = *v;
    }
    let origin = start + first as f64 * h;
    let positions = (0..len).map(|q| origin + q as f64 * h).collect();
    GridDistribution::with_mass(positions, values, Kind::Cdf, mass)?.truncate_by_threshold(eps)
}

/// Exact first step out of a point mass: a mixture of normal CDFs.
pub fn mixture_from_point(
    x0: f64,
    vol: &VolStateGrid,
    drift_for_sigma: &dyn Fn(f64) -> Drift,
    cfg: &SimulationConfig,
) -> Result<GridDistribution> {
    let (h, dt, eps) = (cfg.spacing, cfg.dt, cfg.threshold);
    let states = active(vol)?;
    let comps: Vec<(f64, f64, f64)> = states
        .iter()
        .map(|(s, w)| (*w, x0 + drift_for_sigma(*s).eval(x0, 0.0) * dt, s * dt.sqrt()))
        .collect();
    if let Some(c) = comps.iter().find(|c| h > c.2) {
        return Err(Error::Resolution(format!("spacing {h} does not resolve standard deviation {}", c.2)));
    }
    let centre: f64 = comps.iter().map(|(w, m, _)| w * m).sum();
    let z = normal::tail_z(eps);
    let lo = comps.iter().map(|(_, m, s)| m - z * s).fold(f64::INFINITY, f64::min);
    let hi = comps.iter().map(|(_, m, s)| m + z * s).fold(f64::NEG_INFINITY, f64::max);
    let jlo = ((lo - centre) / h).floor() as i64 - 1;
    let jhi = ((hi - centre) / h).ceil() as i64 + 1;
    let positions: Vec<f64> = (jlo..=jhi).map(|j| centre + j as f64 * h).collect();
    let values = positions
        .iter()
        .map(|&x| comps.iter().map(|(w, m, s)| w * normal::cdf((x - m) / s)).sum::<f64>().min(1.0))
        .collect();
    GridDistribution::new(positions, values, Kind::Cdf)?.truncate_by_threshold(eps)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StochVolConfig {
    /// Price-grid policy; `dt * steps` is the horizon.
    pub price: SimulationConfig,
    pub vol_states: usize,
    /// Volatility-grid spacing; chosen from the vol-of-vol when `None`.
    pub vol_spacing: Option<f64>,
}

impl StochVolConfig {
    pub fn new(price: SimulationConfig) -> Self {
        StochVolConfig { price, vol_states: 64, vol_spacing: None }
    }
}

fn run_mixture(
    x0: f64,
    cfg: &SimulationConfig,
    domain: (f64, f64),
    vol_at: &mut dyn FnMut(usize) -> Result<VolStateGrid>,
    drift_for_sigma: &dyn Fn(f64) -> Drift,
) -> Result<GridDistribution> {
    cfg.validate()?;
    if cfg.steps == 0 {
        return Err(Error::InvalidConfig("a point mass needs at least one step".into()));
    }
    let mut d = mixture_from_point(x0, &vol_at(0)?, drift_for_sigma, cfg)?;
    for k in 2..=cfg.steps {
        d = mixture_step(&d, &vol_at(k - 1)?, drift_for_sigma, domain, k, cfg)?;
    }
    Ok(d)
}

/// Terminal CDF of ln S under Heston, with the price drift `mu` per unit time.
/// Correlation is not represented inside a step.
pub fn heston_terminal(p: &HestonParams, s0: f64, cfg: &StochVolConfig) -> Result<GridDistribution> {
    p.validate()?;
    if !(s0 > 0.0) {
        return Err(Error::InvalidInput(format!("spot must be positive, got {s0}")));
    }
    let pc = &cfg.price;
    pc.validate()?;
    let sig0 = p.v0.sqrt();
    let vol_proc = heston_vol_process(p)?;
    let vol_h = cfg.vol_spacing.unwrap_or(0.125 * p.xi * pc.dt.sqrt());
    let vol_cfg = SimulationConfig { spacing: vol_h, steps: pc.steps.saturating_sub(1), ..pc.clone() };
    let vols = if vol_cfg.steps > 0 {
        simulate(&InitialCondition::PointMass(sig0), &vol_proc.spec, &vol_cfg, Keep::All)?
    } else {
        Vec::new()
    };
    let n = cfg.vol_states;
    let mut vol_at = |i: usize| if i == 0 { VolStateGrid::point(sig0) } else { VolStateGrid::from_cdf(&vols[i - 1], n) };
    let mu = p.mu;
    run_mixture(s0.ln(), pc, (f64::NEG_INFINITY, f64::INFINITY), &mut vol_at, &|s| Drift::Constant(mu - 0.5 * s * s))
}

/// European price under Heston with the risk-neutral drift `r - q`.
pub fn heston_price(payoff: &PayoffProfile, p: &HestonParams, m: &MarketParams, cfg: &StochVolConfig) -> Result<f64> {
    m.validate()?;
    check_horizon(&cfg.price, m.expiry)?;
    let rn = HestonParams { mu: m.rate - m.dividend_yield, ..*p };
    let terminal = heston_terminal(&rn, m.spot, cfg)?;
    Ok(m.discount() * expectation(&terminal, |l| payoff.value(l.exp()))?)
}

fn sabr_terminal_q(p: &SabrParams, cfg: &StochVolConfig) -> Result<(GridDistribution, SabrTransform)> {
    p.validate()?;
    if p.rho != 0.0 {
        return Err(Error::InvalidInput("the SABR mixture supports rho = 0 only".into()));
    }
    let tr = sabr_q_transform(p)?;
    let pc = &cfg.price;
    let n = cfg.vol_states;
    let eps = pc.threshold;
    let mut vol_at = |i: usize| sabr_logvol_distribution(p, i as f64 * pc.dt, n, eps);
    let drift = |s: f64| tr.drift_for_sigma(s);
    let q = run_mixture((tr.forward)(p.f0), pc, tr.domain, &mut vol_at, &drift)?;
    Ok((q, tr))
}

/// Terminal CDF of the SABR forward F. Requires rho = 0.
pub fn sabr_terminal(p: &SabrParams, cfg: &StochVolConfig) -> Result<GridDistribution> {
    let (q, tr) = sabr_terminal_q(p, cfg)?;
    let inv = tr.inverse.clone();
    q.change_of_variable(move |x| inv(x))
}

/// Discounted SABR price, integrated over the q grid. `m.spot` and `m.vol`
/// are ignored in favour of `f0` and `sigma0`.
pub fn sabr_price(payoff: &PayoffProfile, p: &SabrParams, m: &MarketParams, cfg: &StochVolConfig) -> Result<f64> {
    check_horizon(&cfg.price, m.expiry)?;
    let (q, tr) = sabr_terminal_q(p, cfg)?;
    Ok(m.discount() * expectation(&q, |x| payoff.value((tr.inverse)(x)))?)
}

fn check_horizon(cfg: &SimulationConfig, expiry: f64) -> Result<()> {
    if (cfg.horizon() - expiry).abs() > 1e-9 * expiry.max(1.0) {
        return Err(Error::InvalidConfig(format!("grid horizon {} differs from expiry {expiry}", cfg.horizon())));
    }
    Ok(())
}
