//! Payoffs, discounted expectations over terminal grids, dividends, barriers.

use crate::convolve::{convolve_cdf, DiffusionKernel};
use crate::error::{Error, Result};
use crate::grid::{trapezoid, GridDistribution, Kind};
use crate::process::{builtin_transforms, simulate_with, Builtin, InitialCondition, Keep, SimulationConfig};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PayoffKind {
    Call,
    Put,
    DigitalCall,
    DigitalPut,
    PowerCall,
    PowerPut,
}

impl std::str::FromStr for PayoffKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "call" => PayoffKind::Call,
            "put" => PayoffKind::Put,
            "digital-call" => PayoffKind::DigitalCall,
            "digital-put" => PayoffKind::DigitalPut,
            "power-call" => PayoffKind::PowerCall,
            "power-put" => PayoffKind::PowerPut,
            _ => return Err(Error::InvalidInput(format!("unknown payoff `{s}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffProfile {
    pub kind: PayoffKind,
    pub strike: f64,
    /// Exponent of the power payoffs, 1 otherwise.
    pub exponent: f64,
}

impl PayoffProfile {
    pub fn new(kind: PayoffKind, strike: f64, exponent: f64) -> Result<Self> {
        if !(strike > 0.0) || !(exponent > 0.0) {
            return Err(Error::InvalidInput(format!("need strike > 0 and exponent > 0, got {strike}, {exponent}")));
        }
        Ok(PayoffProfile { kind, strike, exponent })
    }
    pub fn call(strike: f64) -> Self {
        PayoffProfile { kind: PayoffKind::Call, strike, exponent: 1.0 }
    }
    pub fn put(strike: f64) -> Self {
        PayoffProfile { kind: PayoffKind::Put, strike, exponent: 1.0 }
    }

    pub fn value(&self, s: f64) -> f64 {
        let k = self.strike;
        match self.kind {
            PayoffKind::Call => (s - k).max(0.0),
            PayoffKind::Put => (k - s).max(0.0),
            PayoffKind::DigitalCall => f64::from(u8::from(s > k)),
            PayoffKind::DigitalPut => f64::from(u8::from(s < k)),
            PayoffKind::PowerCall => (s.powf(self.exponent) - k).max(0.0),
            PayoffKind::PowerPut => (k - s.powf(self.exponent)).max(0.0),
        }
    }

    pub fn describe(&self) -> String {
        match self.kind {
            PayoffKind::PowerCall | PayoffKind::PowerPut => {
                format!("{:?} K={} alpha={}", self.kind, self.strike, self.exponent)
            }
            _ => format!("{:?} K={}", self.kind, self.strike),
        }
    }
}

pub fn payoff_values(p: &PayoffProfile, prices: &[f64]) -> Vec<f64> {
    prices.iter().map(|&s| p.value(s)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub spot: f64,
    pub rate: f64,
    pub vol: f64,
    pub expiry: f64,
    pub dividend_yield: f64,
}

impl MarketParams {
    /// `vol` may be zero so that deterministic limits can be expressed; the
    /// grid pricer itself needs a positive volatility.
    pub fn new(spot: f64, rate: f64, vol: f64, expiry: f64, dividend_yield: f64) -> Result<Self> {
        let m = MarketParams { spot, rate, vol, expiry, dividend_yield };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spot > 0.0) || !(self.expiry > 0.0) || !(self.vol >= 0.0) || !(self.dividend_yield >= 0.0) || !self.rate.is_finite() {
            return Err(Error::InvalidInput(format!("invalid market parameters {self:?}")));
        }
        Ok(())
    }

    pub fn discount(&self) -> f64 {
        (-self.rate * self.expiry).exp()
    }
}

/// E[g(X)] under a grid distribution. A CDF contributes the mass of every
/// cell at the cell midpoint; a PDF is integrated with the trapezoid rule.
pub fn expectation(d: &GridDistribution, g: impl Fn(f64) -> f64) -> Result<f64> {
    if d.total_mass() <= 0.0 {
        return Err(Error::DegenerateDistribution("distribution carries no mass".into()));
    }
    let x = d.positions();
    let v = d.values();
    Ok(match d.kind() {
        Kind::Cdf => x.windows(2).zip(v.windows(2)).map(|(xw, fw)| g(0.5 * (xw[0] + xw[1])) * (fw[1] - fw[0])).sum(),
        Kind::Pdf => {
            let y: Vec<f64> = x.iter().zip(v).map(|(&xi, &pi)| g(xi) * pi).collect();
            trapezoid(x, &y)
        }
    })
}

/// Discounted expected payoff over a log-price distribution at expiry.
pub fn price_european(terminal: &GridDistribution, p: &PayoffProfile, m: &MarketParams) -> Result<f64> {
    Ok(m.discount() * expectation(terminal, |l| p.value(l.exp()))?)
}

/// call - put - S e^{-q tau} + K e^{-r tau}; zero for consistent prices.
pub fn put_call_parity_check(call: f64, put: f64, strike: f64, m: &MarketParams) -> f64 {
    call - put - m.spot * (-m.dividend_yield * m.expiry).exp() + strike * m.discount()
}

/// Terminal log-price CDF of geometric Brownian motion under the pricing measure.
pub fn simulate_terminal(m: &MarketParams, cfg: &SimulationConfig) -> Result<GridDistribution> {
    m.validate()?;
    let proc_ = builtin_transforms(Builtin::Samuelson, m.rate, m.vol)?.with_yield(m.dividend_yield);
    let out = crate::process::simulate(&InitialCondition::PointMass(m.spot.ln()), &proc_.spec, cfg, Keep::Terminal)?;
    Ok(out.into_iter().next().expect("terminal distribution"))
}

/// Grid step configuration taking its time step from the option expiry.
pub fn config_for(m: &MarketParams, base: &SimulationConfig) -> SimulationConfig {
    SimulationConfig { dt: m.expiry / base.steps as f64, ..base.clone() }
}

/// Prices several payoffs against one simulated terminal distribution.
pub fn price_grid_many(payoffs: &[PayoffProfile], m: &MarketParams, base: &SimulationConfig) -> Result<Vec<f64>> {
    let terminal = simulate_terminal(m, &config_for(m, base))?;
    payoffs.iter().map(|p| price_european(&terminal, p, m)).collect()
}

pub fn price_grid(p: &PayoffProfile, m: &MarketParams, base: &SimulationConfig) -> Result<f64> {
    Ok(price_grid_many(std::slice::from_ref(p), m, base)?[0])
}

/// Moves a price-coordinate CDF down by `amount`. Prices that would fall to
/// or below `floor` are collected at `floor`.
pub fn apply_cash_dividend(d: &GridDistribution, amount: f64, floor: f64) -> Result<GridDistribution> {
    if d.kind() != Kind::Cdf {
        return Err(Error::InvalidInput("cash dividend expects a CDF".into()));
    }
    if !(amount >= 0.0) || !(floor > 0.0) {
        return Err(Error::InvalidInput(format!("need amount >= 0 and floor > 0, got {amount}, {floor}")));
    }
    if amount == 0.0 {
        return Ok(d.clone());
    }
    let shifted: Vec<f64> = d.positions().iter().map(|x| x - amount).collect();
    let kept = shifted.partition_point(|&x| x <= floor);
    if kept == 0 {
        return GridDistribution::with_mass(shifted, d.values().to_vec(), Kind::Cdf, d.mass());
    }
    // everything at or below the floor becomes an atom at the floor
    let atom = d.values()[kept - 1];
    let mut pos = vec![floor * (1.0 - 1e-9), floor];
    let mut vals = vec![0.0, atom];
    for i in kept..shifted.len() {
        if shifted[i] > floor {
            pos.push(shifted[i]);
            vals.push(d.values()[i]);
        }
    }
    if pos.len() < 3 {
        pos.push(floor * (1.0 + 1e-9));
        vals.push(d.mass());
    }
    GridDistribution::with_mass(pos, vals, Kind::Cdf, d.mass())
}

/// Subtracts an independent random dividend with the given density from a
/// price-coordinate CDF, i.e. convolves with the density of -D.
pub fn apply_distributional_dividend(d: &GridDistribution, density: &GridDistribution) -> Result<GridDistribution> {
    if d.kind() != Kind::Cdf {
        return Err(Error::InvalidInput("distributional dividend expects a CDF".into()));
    }
    if density.kind() != Kind::Pdf {
        return Err(Error::InvalidInput("dividend density must be a PDF".into()));
    }
    let h = density
        .spacing()
        .ok_or_else(|| Error::InvalidGrid("dividend density needs a uniform grid".into()))?;
    if !(density.total_mass() > 0.0) {
        return Err(Error::InvalidInput("dividend density has zero mass".into()));
    }
    if density.lo() < 0.0 {
        return Err(Error::Domain("dividend density has negative support".into()));
    }
    let support_top = density.positions().iter().zip(density.values()).filter(|(_, &v)| v > 0.0).map(|(&x, _)| x).fold(0.0, f64::max);
    if support_top >= d.lo() {
        return Err(Error::Domain(format!(
            "dividend support reaches {support_top} but prices start at {}",
            d.lo()
        )));
    }
    let uniform = match d.spacing() {
        Some(s) if (s - h).abs() <= 1e-12 * h => d.clone(),
        _ => d.interpolate_to_uniform(h, d.lo(), d.hi())?,
    };
    let k = DiffusionKernel::from_density(density, h, true)?;
    convolve_cdf(&uniform, &k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BarrierDirection {
    UpAndOut,
    DownAndOut,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub level: f64,
    pub direction: BarrierDirection,
    /// Step indices (1-based) at which the barrier is monitored.
    pub dates: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct BarrierOutcome {
    /// `None` when nothing survives.
    pub dist: Option<GridDistribution>,
    pub survival: f64,
    pub knocked_out: f64,
}

/// Removes the mass at or beyond `level`, given in the coordinates of `d`.
/// The rest is left unnormalised so that its mass is the survival probability.
pub fn apply_barrier(d: &GridDistribution, level: f64, direction: BarrierDirection) -> Result<BarrierOutcome> {
    if d.kind() != Kind::Cdf {
        return Err(Error::InvalidInput("barrier expects a CDF".into()));
    }
    let x = d.positions();
    let f = d.values();
    let top = f[f.len() - 1];
    let at = d.cdf_at(level)?;
    let mut vals = f.to_vec();
    // nothing beyond the barrier, or already flat there: leave untouched
    let untouched = match direction {
        BarrierDirection::UpAndOut => {
            let first_out = x.partition_point(|&p| p < level);
            first_out == x.len() || f[first_out..].iter().all(|&v| v == top)
        }
        BarrierDirection::DownAndOut => {
            let first_in = x.partition_point(|&p| p <= level);
            first_in == 0 || f[..first_in].iter().all(|&v| v == 0.0)
        }
    };
    if untouched {
        return Ok(BarrierOutcome { dist: Some(d.clone()), survival: d.mass(), knocked_out: 0.0 });
    }
    // `survival` is the mass left; `knocked` the rest of `mass`, including the
    // sub-threshold tail that truncation left off the grid
    let (survival, knocked) = match direction {
        BarrierDirection::UpAndOut => {
            let first_out = x.partition_point(|&p| p < level);
            let cut = at.min(top);
            vals[first_out..].iter_mut().for_each(|v| *v = cut);
            (cut, d.mass() - cut)
        }
        BarrierDirection::DownAndOut => {
            let first_in = x.partition_point(|&p| p <= level);
            let cut = at.max(f[0]);
            vals[..first_in].iter_mut().for_each(|v| *v = 0.0);
            vals[first_in..].iter_mut().for_each(|v| *v = (*v - cut).max(0.0));
            (d.mass() - cut, cut)
        }
    };
    if survival <= 0.0 || vals[vals.len() - 1] <= 0.0 {
        return Ok(BarrierOutcome { dist: None, survival: 0.0, knocked_out: d.mass() });
    }
    let dist = GridDistribution::with_mass(x.to_vec(), vals, Kind::Cdf, survival)?;
    Ok(BarrierOutcome { dist: Some(dist), survival, knocked_out: knocked })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum DividendKind {
    Cash(f64),
    /// Density of the dividend amount on a uniform grid.
    Distribution(Vec<f64>, Vec<f64>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DividendEvent {
    pub step: usize,
    pub kind: DividendKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicPoint {
    pub step: usize,
    pub time: f64,
    pub undiscounted: f64,
    pub discounted: f64,
}

/// E[Y(S_t)] for each monitoring date; no exercise decision is taken.
pub fn intrinsic_value_track(
    distributions: &[(usize, f64, GridDistribution)],
    p: &PayoffProfile,
    m: &MarketParams,
) -> Result<Vec<IntrinsicPoint>> {
    distributions
        .iter()
        .map(|(step, t, d)| {
            let u = expectation(d, |l| p.value(l.exp()))?;
            Ok(IntrinsicPoint { step: *step, time: *t, undiscounted: u, discounted: u * (-m.rate * t).exp() })
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct PathOptions {
    pub barriers: Vec<BarrierSpec>,
    pub dividends: Vec<DividendEvent>,
    /// Steps at which the intrinsic value is recorded.
    pub monitor: Vec<usize>,
    /// Price floor for cash dividends.
    pub price_floor: f64,
}

#[derive(Clone, Debug)]
pub struct PathResult {
    pub price: f64,
    pub survival: f64,
    /// Knocked-out mass per barrier date, in date order.
    pub knocked_out: Vec<(usize, f64)>,
    pub intrinsic: Vec<IntrinsicPoint>,
    pub terminal: Option<GridDistribution>,
}

/// Prices a payoff on geometric Brownian motion with barriers, discrete
/// dividends and intrinsic-value monitoring applied at their step indices.
pub fn price_with_events(p: &PayoffProfile, m: &MarketParams, base: &SimulationConfig, opts: &PathOptions) -> Result<PathResult> {
    m.validate()?;
    let cfg = config_for(m, base);
    for b in &opts.barriers {
        if !(b.level > 0.0) || b.dates.iter().any(|&s| s == 0 || s > cfg.steps) {
            return Err(Error::InvalidInput(format!("barrier {b:?} outside the simulation horizon")));
        }
    }
    for e in &opts.dividends {
        if e.step == 0 || e.step > cfg.steps {
            return Err(Error::InvalidInput(format!("dividend at step {} outside the horizon", e.step)));
        }
    }
    let floor = if opts.price_floor > 0.0 { opts.price_floor } else { 1e-8 * m.spot };
    let proc_ = builtin_transforms(Builtin::Samuelson, m.rate, m.vol)?.with_yield(m.dividend_yield);
    let mut knocked = Vec::new();
    let mut monitored = Vec::new();
    let mut dead = false;
    let result = simulate_with(&InitialCondition::PointMass(m.spot.ln()), &proc_.spec, &cfg, Keep::Terminal, |k, mut d| {
        for e in opts.dividends.iter().filter(|e| e.step == k) {
            let prices = d.change_of_variable(f64::exp)?;
            let paid = match &e.kind {
                DividendKind::Cash(a) => apply_cash_dividend(&prices, *a, floor)?.truncate_by_threshold(cfg.threshold)?,
                DividendKind::Distribution(x, v) => {
                    let dens = GridDistribution::new(x.clone(), v.clone(), Kind::Pdf)?;
                    apply_distributional_dividend(&prices, &dens)?.truncate_by_threshold(cfg.threshold)?
                }
            };
            d = paid.change_of_variable(f64::ln)?;
        }
        for b in opts.barriers.iter().filter(|b| b.dates.contains(&k)) {
            let out = apply_barrier(&d, b.level.ln(), b.direction)?;
            knocked.push((k, out.knocked_out));
            match out.dist {
                Some(next) => d = next,
                None => {
                    dead = true;
                    return Err(Error::DegenerateDistribution("knocked out".into()));
                }
            }
        }
        if opts.monitor.contains(&k) {
            monitored.push((k, k as f64 * cfg.dt, d.clone()));
        }
        Ok(d)
    });
    let terminal = match result {
        Ok(mut v) => v.pop(),
        Err(_) if dead => None,
        Err(e) => return Err(e),
    };
    let intrinsic = intrinsic_value_track(&monitored, p, m)?;
    Ok(match terminal {
        Some(t) => PathResult {
            price: price_european(&t, p, m)?,
            survival: t.mass(),
            knocked_out: knocked,
            intrinsic,
            terminal: Some(t),
        },
        None => PathResult { price: 0.0, survival: 0.0, knocked_out: knocked, intrinsic, terminal: None },
    })
}

/// One line of pricing output.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PriceRecord {
    pub instrument: String,
    pub price: f64,
    pub survival_probability: Option<f64>,
    pub spacing: f64,
    pub steps: usize,
    pub wall_time_s: f64,
}

impl PriceRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialises")
    }
}

/// Runs `f` and returns its value with the elapsed wall-clock seconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t0 = Instant::now();
    let v = f();
    (v, t0.elapsed().as_secs_f64())
}
