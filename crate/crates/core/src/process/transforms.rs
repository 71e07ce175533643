//! Built-in price SDEs reduced to constant diffusion by a change of variable.

use super::{Drift, ProcessSpec};
use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

pub type Map = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A price process written in coordinates Y = g(S) where it has constant
/// diffusion.
#[derive(Clone)]
pub struct TransformedProcess {
    pub name: &'static str,
    /// S -> Y.
    pub forward: Map,
    /// Y -> S.
    pub inverse: Map,
    pub spec: ProcessSpec,
    /// S g'(S) written as a function of Y, which scales a proportional
    /// yield. `None` means the constant 1 of log coordinates.
    pub elasticity: Option<Map>,
}

impl fmt::Debug for TransformedProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransformedProcess").field("name", &self.name).field("spec", &self.spec).finish()
    }
}

impl TransformedProcess {
    /// Same process with a continuous dividend yield `q` taken out of the
    /// price drift.
    pub fn with_yield(&self, q: f64) -> TransformedProcess {
        let spec = match &self.elasticity {
            None => super::yield_adjust(&self.spec, q),
            Some(el) => {
                let el = el.clone();
                ProcessSpec { drift: self.spec.drift.minus(move |y| q * el(y)), ..self.spec.clone() }
            }
        };
        TransformedProcess { spec, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Builtin {
    /// dS = mu S dt + sigma S dW in L = ln S.
    Samuelson,
    /// dS = mu S^2 dt + sigma S dW in L = ln S.
    SquaredDrift,
    /// dS = mu dt + sigma S dW in L = ln S.
    ConstantDrift,
    /// M = S^2 with dM = (2 mu - sigma^2 / M) dt + 2 sigma dW.
    SquaredVariable,
}

impl std::str::FromStr for Builtin {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "samuelson" => Ok(Builtin::Samuelson),
            "squared-drift" => Ok(Builtin::SquaredDrift),
            "constant-drift" => Ok(Builtin::ConstantDrift),
            "squared-variable" => Ok(Builtin::SquaredVariable),
            _ => Err(Error::InvalidInput(format!("unknown process `{s}`"))),
        }
    }
}

pub fn builtin_transforms(case: Builtin, mu: f64, sigma: f64) -> Result<TransformedProcess> {
    if !(sigma > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidInput(format!("need sigma > 0 and finite mu, got {sigma}, {mu}")));
    }
    let half_var = 0.5 * sigma * sigma;
    let log: (Map, Map, Option<Map>) = (Arc::new(f64::ln), Arc::new(f64::exp), None);
    let (name, maps, drift, diffusion, domain) = match case {
        Builtin::Samuelson => ("samuelson", log, Drift::Constant(mu - half_var), sigma, (f64::NEG_INFINITY, f64::INFINITY)),
        Builtin::SquaredDrift => (
            "squared-drift",
            log,
            Drift::from_fn(move |l, _| mu * l.exp() - half_var),
            sigma,
            (f64::NEG_INFINITY, f64::INFINITY),
        ),
        Builtin::ConstantDrift => (
            "constant-drift",
            log,
            Drift::from_fn(move |l, _| mu * (-l).exp() - half_var),
            sigma,
            (f64::NEG_INFINITY, f64::INFINITY),
        ),
        Builtin::SquaredVariable => {
            let maps: (Map, Map, Option<Map>) = (Arc::new(|s| s * s), Arc::new(f64::sqrt), Some(Arc::new(|m| 2.0 * m)));
            let s2 = sigma * sigma;
            ("squared-variable", maps, Drift::from_fn(move |m, _| 2.0 * mu - s2 / m), 2.0 * sigma, (0.0, f64::INFINITY))
        }
    };
    let spec = ProcessSpec::new(drift, diffusion)?.with_domain(domain.0, domain.1);
    Ok(TransformedProcess { name, forward: maps.0, inverse: maps.1, spec, elasticity: maps.2 })
}
