use crate::error::{Error, Result};
use crate::pricing::{MarketParams, PayoffProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub antithetic: bool,
    /// Paths per independently seeded batch.
    pub batch: usize,
}

impl McConfig {
    pub fn new(paths: usize, steps: usize, seed: u64) -> Self {
        McConfig { paths, steps, seed, antithetic: true, batch: 1 << 14 }
    }

    fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.steps == 0 || self.batch == 0 {
            return Err(Error::InvalidConfig("paths, steps and batch must be positive".into()));
        }
        if self.antithetic && (!self.paths.is_multiple_of(2) || !self.batch.is_multiple_of(2)) {
            return Err(Error::InvalidConfig("antithetic sampling needs even path and batch counts".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub price: f64,
    pub std_error: f64,
    pub paths: usize,
}

/// Monte Carlo price under geometric Brownian motion using the exact
/// lognormal step. Batch `b` draws from ChaCha8 stream `b` of `seed`, and
/// batch sums are reduced in batch order, so results depend only on the
/// configuration.
pub fn mc_price(p: &PayoffProfile, m: &MarketParams, cfg: &McConfig) -> Result<McResult> {
    cfg.validate()?;
    m.validate()?;
    let dt = m.expiry / cfg.steps as f64;
    let drift = (m.rate - m.dividend_yield - 0.5 * m.vol * m.vol) * dt;
    let vol = m.vol * dt.sqrt();
    let l0 = m.spot.ln();
    // antithetic pairs form one sample each
    let per_sample = if cfg.antithetic { 2 } else { 1 };
    let samples = cfg.paths / per_sample;
    let per_batch = cfg.batch / per_sample;
    let batches = samples.div_ceil(per_batch);
    // sums are taken around the first sample to avoid cancellation
    let mut shift = None;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for b in 0..batches {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(b as u64);
        let n = per_batch.min(samples - b * per_batch);
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let (mut up, mut dn) = (l0, l0);
            for _ in 0..cfg.steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                up += drift + vol * z;
                dn += drift - vol * z;
            }
            let y = if cfg.antithetic {
                0.5 * (p.value(up.exp()) + p.value(dn.exp()))
            } else {
                p.value(up.exp())
            };
            let d = y - *shift.get_or_insert(y);
            s1 += d;
            s2 += d * d;
        }
        sum += s1;
        sum_sq += s2;
    }
    let n = samples as f64;
    let mean_d = sum / n;
    let var = if samples > 1 { ((sum_sq - n * mean_d * mean_d) / (n - 1.0)).max(0.0) } else { 0.0 };
    let disc = m.discount();
    Ok(McResult { price: disc * (shift.unwrap_or(0.0) + mean_d), std_error: disc * (var / n).sqrt(), paths: cfg.paths })
}
