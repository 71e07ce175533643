//! Monotone piecewise cubic Hermite interpolation (Fritsch-Carlson slopes).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Pchip<'a> {
    x: &'a [f64],
    y: &'a [f64],
    d: Vec<f64>,
}

impl<'a> Pchip<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(Error::InvalidGrid(format!(
                "pchip: {} abscissae but {} ordinates",
                n,
                y.len()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidGrid("pchip needs at least two points".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        if h.iter().any(|&hk| !(hk > 0.0)) {
            return Err(Error::InvalidGrid("pchip abscissae must be strictly increasing".into()));
        }
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
            return Ok(Pchip { x, y, d });
        }
        for k in 1..n - 1 {
            let (d0, d1) = (delta[k - 1], delta[k]);
            if d0 * d1 > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
            }
        }
        d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Ok(Pchip { x, y, d })
    }

    fn segment(&self, k: usize, t: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }

    /// Evaluates inside the data hull; points outside take `below` / `above`.
    pub fn eval(&self, t: f64, below: f64, above: f64) -> f64 {
        let n = self.x.len();
        if t < self.x[0] {
            return below;
        }
        if t > self.x[n - 1] {
            return above;
        }
        let k = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        self.segment(k, t)
    }

    /// Evaluates at ascending targets with a moving cursor.
    pub fn eval_sorted(&self, ts: &[f64], below: f64, above: f64) -> Vec<f64> {
        let n = self.x.len();
        let mut k = 0usize;
        ts.iter()
            .map(|&t| {
                if t < self.x[0] {
                    return below;
                }
                if t > self.x[n - 1] {
                    return above;
                }
                while k + 2 < n && self.x[k + 1] <= t {
                    k += 1;
                }
                self.segment(k, t)
            })
            .collect()
    }
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}
