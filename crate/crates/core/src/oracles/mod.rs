//! Independent reference prices: closed-form Black-Scholes and Monte Carlo.

mod bs;
mod mc;

pub use bs::{bs_greeks, bs_price};
pub use mc::{mc_price, McConfig, McResult};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Greek {
    Delta,
    Gamma,
    Rho,
    Theta,
    Vega,
}

impl Greek {
    pub const ALL: [Greek; 5] = [Greek::Delta, Greek::Gamma, Greek::Rho, Greek::Theta, Greek::Vega];
}

impl std::str::FromStr for Greek {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "delta" => Ok(Greek::Delta),
            "gamma" => Ok(Greek::Gamma),
            "rho" => Ok(Greek::Rho),
            "theta" => Ok(Greek::Theta),
            "vega" => Ok(Greek::Vega),
            _ => Err(crate::Error::InvalidInput(format!("unknown greek `{s}`"))),
        }
    }
}
