//! Bump-and-reprice sensitivities over the grid pipeline.

use crate::error::{Error, Result};
use crate::oracles::Greek;
use crate::pricing::{price_grid_many, MarketParams, PayoffProfile};
use crate::process::SimulationConfig;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FdScheme {
    Central,
    Forward,
}

/// How the spot and volatility bumps scale. Rate and expiry bumps are always absolute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BumpStyle {
    Absolute,
    Relative,
}

impl std::str::FromStr for FdScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "central" => Ok(FdScheme::Central),
            "forward" => Ok(FdScheme::Forward),
            _ => Err(Error::InvalidInput(format!("unknown difference scheme `{s}`"))),
        }
    }
}

impl std::str::FromStr for BumpStyle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(BumpStyle::Absolute),
            "relative" => Ok(BumpStyle::Relative),
            _ => Err(Error::InvalidInput(format!("unknown bump style `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreekRequest {
    pub which: BTreeSet<Greek>,
    pub fd_step: f64,
    pub scheme: FdScheme,
    pub bump: BumpStyle,
}

impl GreekRequest {
    pub fn all(fd_step: f64) -> Self {
        GreekRequest { which: Greek::ALL.into_iter().collect(), fd_step, scheme: FdScheme::Central, bump: BumpStyle::Absolute }
    }

    pub fn only(which: &[Greek], fd_step: f64) -> Self {
        GreekRequest { which: which.iter().copied().collect(), ..Self::all(fd_step) }
    }

    fn validate(&self) -> Result<()> {
        if !(self.fd_step > 0.0) || !self.fd_step.is_finite() {
            return Err(Error::InvalidInput(format!("finite-difference step must be positive, got {}", self.fd_step)));
        }
        if self.which.is_empty() {
            return Err(Error::InvalidInput("no Greeks requested".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Key([u64; 4]);

fn key(m: &MarketParams) -> Key {
    Key([m.spot.to_bits(), m.rate.to_bits(), m.vol.to_bits(), m.expiry.to_bits()])
}

/// Memoised repricing of every payoff at a bumped market.
struct Pricer<'a> {
    payoffs: &'a [PayoffProfile],
    cfg: &'a SimulationConfig,
    memo: BTreeMap<Key, Vec<f64>>,
}

impl Pricer<'_> {
    fn at(&mut self, m: MarketParams) -> Result<Vec<f64>> {
        if let Some(v) = self.memo.get(&key(&m)) {
            return Ok(v.clone());
        }
        let v = price_grid_many(self.payoffs, &m, self.cfg)?;
        self.memo.insert(key(&m), v.clone());
        Ok(v)
    }
}

fn diff(a: &[f64], b: &[f64], scale: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x - y) * scale).collect()
}

/// First and second derivative along one parameter, evaluated at `base`.
fn first(
    pr: &mut Pricer,
    base: &MarketParams,
    h: f64,
    central: bool,
    set: impl Fn(&mut MarketParams, f64),
) -> Result<Vec<f64>> {
    let bumped = |d: f64| {
        let mut m = *base;
        set(&mut m, d);
        m
    };
    if central {
        let up = pr.at(bumped(h))?;
        let dn = pr.at(bumped(-h))?;
        Ok(diff(&up, &dn, 0.5 / h))
    } else {
        let up = pr.at(bumped(h))?;
        let mid = pr.at(*base)?;
        Ok(diff(&up, &mid, 1.0 / h))
    }
}

/// Greeks for several payoffs sharing every bumped simulation.
///
/// `cfg.steps` is kept fixed across bumps; the step length follows the
/// (possibly bumped) expiry. `cfg.dt * cfg.steps` must equal the expiry.
pub fn compute_greeks_many(
    payoffs: &[PayoffProfile],
    m: &MarketParams,
    cfg: &SimulationConfig,
    req: &GreekRequest,
) -> Result<Vec<BTreeMap<Greek, f64>>> {
    req.validate()?;
    m.validate()?;
    cfg.validate()?;
    if (cfg.horizon() - m.expiry).abs() > 1e-9 * m.expiry.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "grid policy covers horizon {} but the option expires at {}",
            cfg.horizon(),
            m.expiry
        )));
    }
    let h = req.fd_step;
    let central = req.scheme == FdScheme::Central;
    let (hs, hv) = match req.bump {
        BumpStyle::Absolute => (h, h),
        BumpStyle::Relative => (h * m.spot, h * m.vol),
    };
    if hs >= m.spot || (central && hv > m.vol) {
        return Err(Error::InvalidInput("bump would leave spot or volatility non-positive".into()));
    }
    let mut pr = Pricer { payoffs, cfg, memo: BTreeMap::new() };
    let mut out = vec![BTreeMap::new(); payoffs.len()];
    let mut put = |g: Greek, v: Vec<f64>| {
        for (o, x) in out.iter_mut().zip(v) {
            o.insert(g, x);
        }
    };

    if req.which.contains(&Greek::Delta) {
        put(Greek::Delta, first(&mut pr, m, hs, central, |m, d| m.spot += d)?);
    }
    if req.which.contains(&Greek::Gamma) {
        let at = |d: f64| MarketParams { spot: m.spot + d, ..*m };
        let mid = pr.at(*m)?;
        let (a, b) = if central { (pr.at(at(hs))?, pr.at(at(-hs))?) } else { (pr.at(at(2.0 * hs))?, pr.at(at(hs))?) };
        let v = if central {
            (0..mid.len()).map(|i| (a[i] - 2.0 * mid[i] + b[i]) / (hs * hs)).collect()
        } else {
            (0..mid.len()).map(|i| (a[i] - 2.0 * b[i] + mid[i]) / (hs * hs)).collect()
        };
        put(Greek::Gamma, v);
    }
    if req.which.contains(&Greek::Rho) {
        put(Greek::Rho, first(&mut pr, m, h, central, |m, d| m.rate += d)?);
    }
    if req.which.contains(&Greek::Vega) {
        put(Greek::Vega, first(&mut pr, m, hv, central, |m, d| m.vol += d)?);
    }
    if req.which.contains(&Greek::Theta) {
        // fall back to a forward difference when the short expiry would be non-positive
        let c = central && m.expiry - h > 0.0;
        let dv = first(&mut pr, m, h, c, |m, d| m.expiry += d)?;
        put(Greek::Theta, dv.into_iter().map(|x| -x).collect());
    }
    Ok(out)
}

pub fn compute_greeks(
    p: &PayoffProfile,
    m: &MarketParams,
    cfg: &SimulationConfig,
    req: &GreekRequest,
) -> Result<BTreeMap<Greek, f64>> {
    Ok(compute_greeks_many(std::slice::from_ref(p), m, cfg, req)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::bs_greeks;

    fn setup(spacing: f64, steps: usize) -> (MarketParams, SimulationConfig) {
        let m = MarketParams::new(4.0, 0.05, 0.1, 1.0, 0.0).unwrap();
        let cfg = SimulationConfig::for_horizon(1.0, steps, spacing).unwrap();
        (m, cfg)
    }

    #[test]
    fn coarse_greeks_near_closed_form() {
        let (m, cfg) = setup(2e-4, 50);
        let got = compute_greeks(&PayoffProfile::call(4.3), &m, &cfg, &GreekRequest::all(1e-2)).unwrap();
        let want = bs_greeks(&PayoffProfile::call(4.3), &m).unwrap();
        for g in Greek::ALL {
            assert!((got[&g] - want[&g]).abs() < 2e-3, "{g:?}: {} vs {}", got[&g], want[&g]);
        }
    }

    #[test]
    fn relative_and_forward_variants() {
        let (m, cfg) = setup(2e-4, 50);
        let want = bs_greeks(&PayoffProfile::call(4.3), &m).unwrap();
        let mut req = GreekRequest::only(&[Greek::Delta, Greek::Vega], 1e-3);
        req.bump = BumpStyle::Relative;
        let got = compute_greeks(&PayoffProfile::call(4.3), &m, &cfg, &req).unwrap();
        assert!((got[&Greek::Delta] - want[&Greek::Delta]).abs() < 1e-3);
        assert!((got[&Greek::Vega] - want[&Greek::Vega]).abs() < 5e-2);
        req.scheme = FdScheme::Forward;
        req.bump = BumpStyle::Absolute;
        req.fd_step = 1e-3;
        let got = compute_greeks(&PayoffProfile::call(4.3), &m, &cfg, &req).unwrap();
        assert!((got[&Greek::Delta] - want[&Greek::Delta]).abs() < 1e-3);
    }

    #[test]
    fn theta_falls_back_to_forward_difference() {
        let m = MarketParams::new(4.0, 0.05, 0.1, 0.02, 0.0).unwrap();
        let cfg = SimulationConfig::for_horizon(0.02, 10, 2e-4).unwrap();
        let got = compute_greeks(&PayoffProfile::call(4.0), &m, &cfg, &GreekRequest::only(&[Greek::Theta], 0.05)).unwrap();
        assert!(got[&Greek::Theta].is_finite() && got[&Greek::Theta] < 0.0);
    }

    #[test]
    fn mismatched_horizon_is_config_error() {
        let (m, _) = setup(1e-3, 10);
        let cfg = SimulationConfig::for_horizon(0.5, 10, 1e-3).unwrap();
        let r = compute_greeks(&PayoffProfile::call(4.3), &m, &cfg, &GreekRequest::all(1e-3));
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn deep_itm_low_vol_limit() {
        let m = MarketParams::new(4.0, 0.05, 0.01, 1.0, 0.0).unwrap();
        let cfg = SimulationConfig::for_horizon(1.0, 20, 2e-5).unwrap();
        let g = compute_greeks(&PayoffProfile::call(3.0), &m, &cfg, &GreekRequest::only(&[Greek::Delta, Greek::Gamma], 1e-2)).unwrap();
        assert!((0.99..=1.0 + 1e-9).contains(&g[&Greek::Delta]), "{}", g[&Greek::Delta]);
        assert!(g[&Greek::Gamma].abs() < 1e-6);
    }
}
