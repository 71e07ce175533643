use super::Greek;
use crate::error::{Error, Result};
use crate::normal::{cdf as phi_cdf, pdf as phi_pdf};
use crate::pricing::{MarketParams, PayoffKind, PayoffProfile};
use std::collections::BTreeMap;

struct Terms {
    d1: f64,
    d2: f64,
    disc_r: f64,
    disc_q: f64,
    sqrt_t: f64,
}

fn terms(k: f64, m: &MarketParams) -> Terms {
    let sqrt_t = m.expiry.sqrt();
    let sd = m.vol * sqrt_t;
    let d1 = ((m.spot / k).ln() + (m.rate - m.dividend_yield + 0.5 * m.vol * m.vol) * m.expiry) / sd;
    Terms {
        d1,
        d2: d1 - sd,
        disc_r: (-m.rate * m.expiry).exp(),
        disc_q: (-m.dividend_yield * m.expiry).exp(),
        sqrt_t,
    }
}

fn vanilla(p: &PayoffProfile) -> Result<bool> {
    match p.kind {
        PayoffKind::Call => Ok(true),
        PayoffKind::Put => Ok(false),
        other => Err(Error::UnsupportedPayoff(format!("closed form covers calls and puts, not {other:?}"))),
    }
}

/// Black-Scholes price with a continuous dividend yield.
pub fn bs_price(p: &PayoffProfile, m: &MarketParams) -> Result<f64> {
    let is_call = vanilla(p)?;
    m.validate()?;
    let k = p.strike;
    let fwd_s = m.spot * (-m.dividend_yield * m.expiry).exp();
    let fwd_k = k * m.discount();
    if m.vol == 0.0 {
        let v = if is_call { fwd_s - fwd_k } else { fwd_k - fwd_s };
        return Ok(v.max(0.0));
    }
    let t = terms(k, m);
    Ok(if is_call {
        fwd_s * phi_cdf(t.d1) - fwd_k * phi_cdf(t.d2)
    } else {
        fwd_k * phi_cdf(-t.d2) - fwd_s * phi_cdf(-t.d1)
    })
}

/// Closed-form sensitivities; Theta is -dV/dtau.
pub fn bs_greeks(p: &PayoffProfile, m: &MarketParams) -> Result<BTreeMap<Greek, f64>> {
    let is_call = vanilla(p)?;
    m.validate()?;
    if m.vol == 0.0 {
        return Err(Error::InvalidInput("closed-form Greeks need a positive volatility".into()));
    }
    let (s, k, r, q, sig, tau) = (m.spot, p.strike, m.rate, m.dividend_yield, m.vol, m.expiry);
    let t = terms(k, m);
    let n1 = phi_pdf(t.d1);
    let gamma = t.disc_q * n1 / (s * sig * t.sqrt_t);
    let vega = s * t.disc_q * n1 * t.sqrt_t;
    let decay = -s * t.disc_q * n1 * sig / (2.0 * t.sqrt_t);
    let (delta, rho, theta) = if is_call {
        (
            t.disc_q * phi_cdf(t.d1),
            k * tau * t.disc_r * phi_cdf(t.d2),
            decay - r * k * t.disc_r * phi_cdf(t.d2) + q * s * t.disc_q * phi_cdf(t.d1),
        )
    } else {
        (
            -t.disc_q * phi_cdf(-t.d1),
            -k * tau * t.disc_r * phi_cdf(-t.d2),
            decay + r * k * t.disc_r * phi_cdf(-t.d2) - q * s * t.disc_q * phi_cdf(-t.d1),
        )
    };
    Ok(BTreeMap::from([
        (Greek::Delta, delta),
        (Greek::Gamma, gamma),
        (Greek::Rho, rho),
        (Greek::Theta, theta),
        (Greek::Vega, vega),
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m() -> MarketParams {
        MarketParams::new(4.0, 0.05, 0.1, 1.0, 0.0).unwrap()
    }

    #[test]
    fn reference_prices() {
        let c = bs_price(&PayoffProfile::call(4.3), &m()).unwrap();
        let p = bs_price(&PayoffProfile::put(4.3), &m()).unwrap();
        assert!((c - 0.120165592579702).abs() < 1e-14, "{c:.15}");
        assert!((p - 0.210452117932772).abs() < 1e-14, "{p:.15}");
        assert!((c - p - 4.0 + 4.3 * (-0.05f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn reference_greeks() {
        let c = bs_greeks(&PayoffProfile::call(4.3), &m()).unwrap();
        let want = [
            (Greek::Delta, 0.431244511793),
            (Greek::Gamma, 0.982506747863),
            (Greek::Rho, 1.604812454593),
            (Greek::Theta, -0.158841162559),
            (Greek::Vega, 1.572010796581),
        ];
        for (g, v) in want {
            assert!((c[&g] - v).abs() < 1e-11, "{g:?} {}", c[&g]);
        }
        let p = bs_greeks(&PayoffProfile::put(4.3), &m()).unwrap();
        assert!((p[&Greek::Delta] + 0.568755488207).abs() < 1e-11);
        assert!((p[&Greek::Rho] + 2.48547407076).abs() < 1e-10);
        assert!((p[&Greek::Theta] - 0.045673163709).abs() < 1e-11);
        assert!((c[&Greek::Delta] - p[&Greek::Delta] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_limit() {
        let mut mk = m();
        mk.vol = 0.0;
        let c = bs_price(&PayoffProfile::call(3.0), &mk).unwrap();
        assert!((c - (4.0 - 3.0 * (-0.05f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn digital_is_unsupported() {
        let d = PayoffProfile::new(PayoffKind::DigitalCall, 4.3, 1.0).unwrap();
        assert!(matches!(bs_price(&d, &m()), Err(Error::UnsupportedPayoff(_))));
    }
}
