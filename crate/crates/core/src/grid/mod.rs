//! Discretised one-dimensional distributions and the operations on them.

mod csv;
mod pchip;

pub use self::csv::{from_csv_str, read_csv, to_csv_string, write_csv};
pub use self::pchip::Pchip;

use crate::error::{Error, Result};
use crate::normal;

/// Tolerance for round-off violations of monotonicity and range.
pub const ROUNDOFF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Kind {
    Cdf,
    Pdf,
}

/// Values of a CDF or PDF sampled at increasing positions.
///
/// `mass` is the total probability represented, 1 for ordinary
/// distributions and lower after a barrier has removed paths. A CDF tends to
/// `mass` on the right.
#[derive(Debug, Clone)]
pub struct GridDistribution {
    positions: Vec<f64>,
    values: Vec<f64>,
    kind: Kind,
    spacing: Option<f64>,
    mass: f64,
}

impl PartialEq for GridDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.mass == other.mass
            && self.positions == other.positions
            && self.values == other.values
    }
}

pub fn validate_threshold(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("threshold must lie in (0, 0.5), got {eps}")))
    }
}

fn detect_spacing(positions: &[f64]) -> Option<f64> {
    let n = positions.len();
    let h = (positions[n - 1] - positions[0]) / (n - 1) as f64;
    let uniform = positions
        .iter()
        .enumerate()
        .all(|(i, &x)| (x - (positions[0] + i as f64 * h)).abs() <= 1e-9 * h);
    uniform.then_some(h)
}

impl GridDistribution {
    pub fn new(positions: Vec<f64>, values: Vec<f64>, kind: Kind) -> Result<Self> {
        Self::with_mass(positions, values, kind, 1.0)
    }

    pub fn with_mass(positions: Vec<f64>, values: Vec<f64>, kind: Kind, mass: f64) -> Result<Self> {
        if positions.len() != values.len() {
            return Err(Error::InvalidGrid(format!(
                "{} positions but {} values",
                positions.len(),
                values.len()
            )));
        }
        if positions.len() < 2 {
            return Err(Error::InvalidGrid("a grid needs at least two points".into()));
        }
        if positions.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite position or value".into()));
        }
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("positions must be strictly increasing".into()));
        }
        if !(mass > 0.0 && mass <= 1.0 + ROUNDOFF_TOL) {
            return Err(Error::InvalidGrid(format!("mass must lie in (0, 1], got {mass}")));
        }
        match kind {
            Kind::Cdf => {
                if values.iter().any(|&v| v < -ROUNDOFF_TOL || v > mass + ROUNDOFF_TOL) {
                    return Err(Error::CorruptDistribution("CDF value outside [0, mass]".into()));
                }
                if values.windows(2).any(|w| w[1] < w[0] - ROUNDOFF_TOL) {
                    return Err(Error::CorruptDistribution("CDF is decreasing".into()));
                }
            }
            Kind::Pdf => {
                if values.iter().any(|&v| v < -ROUNDOFF_TOL) {
                    return Err(Error::CorruptDistribution("negative density".into()));
                }
            }
        }
        let spacing = detect_spacing(&positions);
        Ok(GridDistribution { positions, values, kind, spacing, mass })
    }

    /// Grid `start + i * spacing`.
    pub fn uniform(start: f64, spacing: f64, values: Vec<f64>, kind: Kind) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {spacing}")));
        }
        let positions = (0..values.len()).map(|i| start + i as f64 * spacing).collect();
        let mut d = Self::new(positions, values, kind)?;
        d.spacing = Some(spacing);
        Ok(d)
    }

    /// Exact normal CDF on a grid centred at `mean`, truncated at `eps`.
    pub fn gaussian_cdf(mean: f64, sd: f64, spacing: f64, eps: f64) -> Result<Self> {
        validate_threshold(eps)?;
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::InvalidInput(format!("standard deviation must be positive, got {sd}")));
        }
        if spacing > sd {
            return Err(Error::Resolution(format!(
                "spacing {spacing} does not resolve standard deviation {sd}"
            )));
        }
        let half = (normal::tail_z(eps) * sd / spacing).ceil() as i64 + 1;
        let positions: Vec<f64> = (-half..=half).map(|j| mean + j as f64 * spacing).collect();
        let values = positions.iter().map(|&x| normal::cdf((x - mean) / sd)).collect();
        let mut d = Self::new(positions, values, Kind::Cdf)?;
        d.spacing = Some(spacing);
        d.truncate_by_threshold(eps)
    }

    pub(crate) fn from_uniform_parts(start: f64, spacing: f64, values: Vec<f64>, kind: Kind, mass: f64) -> Self {
        let positions = (0..values.len()).map(|i| start + i as f64 * spacing).collect();
        GridDistribution { positions, values, kind, spacing: Some(spacing), mass }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn kind(&self) -> Kind {
        self.kind
    }
    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }
    pub fn mass(&self) -> f64 {
        self.mass
    }
    pub fn len(&self) -> usize {
        self.positions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
    pub fn lo(&self) -> f64 {
        self.positions[0]
    }
    pub fn hi(&self) -> f64 {
        self.positions[self.positions.len() - 1]
    }

    fn require(&self, kind: Kind, op: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("{op} expects a {kind:?}, got a {:?}", self.kind)))
        }
    }

    /// Checks the tail conditions a truncated CDF must satisfy.
    pub fn check_tails(&self, eps: f64) -> Result<()> {
        self.require(Kind::Cdf, "check_tails")?;
        let first = self.values[0];
        let last = self.values[self.len() - 1];
        if first > eps + ROUNDOFF_TOL || last < self.mass - eps - ROUNDOFF_TOL {
            return Err(Error::CorruptDistribution(format!(
                "tails not resolved: first {first:e}, last {last:e}, mass {}",
                self.mass
            )));
        }
        Ok(())
    }

    /// Drops leading points below `eps` and trailing points above `mass - eps`,
    /// keeping one point of each tail so the grid still brackets the bulk.
    pub fn truncate_by_threshold(&self, eps: f64) -> Result<Self> {
        validate_threshold(eps)?;
        let cum;
        let c: &[f64] = match self.kind {
            Kind::Cdf => &self.values,
            Kind::Pdf => {
                cum = cumulative_trapezoid(&self.positions, &self.values);
                &cum
            }
        };
        let total = match self.kind {
            Kind::Cdf => self.mass,
            Kind::Pdf => c[c.len() - 1],
        };
        let n = c.len();
        let start = c.iter().position(|&v| v >= eps).map_or(n, |i| i.saturating_sub(1));
        let end = c.iter().rposition(|&v| v <= total - eps).map_or(0, |j| (j + 1).min(n - 1));
        if start >= n || end < start + 2 {
            return Err(Error::DegenerateDistribution(format!(
                "fewer than three points survive truncation at {eps:e}"
            )));
        }
        Ok(self.slice(start, end + 1))
    }

    fn slice(&self, a: usize, b: usize) -> Self {
        GridDistribution {
            positions: self.positions[a..b].to_vec(),
            values: self.values[a..b].to_vec(),
            kind: self.kind,
            spacing: self.spacing,
            mass: self.mass,
        }
    }

    /// Resamples onto `lo + k * spacing` for every k with the point inside `[lo, hi]`.
    pub fn interpolate_to_uniform(&self, spacing: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(spacing > 0.0) || !(hi > lo) || spacing > hi - lo {
            return Err(Error::InvalidGrid(format!(
                "cannot place spacing {spacing} on [{lo}, {hi}]"
            )));
        }
        let count = ((hi - lo) / spacing + 1e-9).floor() as usize + 1;
        let targets: Vec<f64> = (0..count).map(|k| lo + k as f64 * spacing).collect();
        let p = Pchip::new(&self.positions, &self.values)?;
        let (below, above) = match self.kind {
            Kind::Cdf => (0.0, self.mass),
            Kind::Pdf => (0.0, 0.0),
        };
        let mut values = p.eval_sorted(&targets, below, above);
        if self.kind == Kind::Cdf {
            monotone_clamp(&mut values, self.mass);
        } else {
            values.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        Ok(GridDistribution {
            positions: targets,
            values,
            kind: self.kind,
            spacing: Some(spacing),
            mass: self.mass,
        })
    }

    /// Interpolated CDF value at `x`, 0 left of the grid and `mass` right of it.
    pub fn cdf_at(&self, x: f64) -> Result<f64> {
        self.require(Kind::Cdf, "cdf_at")?;
        let p = Pchip::new(&self.positions, &self.values)?;
        Ok(p.eval(x, 0.0, self.mass).clamp(0.0, self.mass))
    }

    /// Smallest grid position whose CDF value reaches `p * mass`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.require(Kind::Cdf, "quantile")?;
        let target = p * self.mass;
        let i = self.values.partition_point(|&v| v < target);
        if i == 0 {
            return Ok(self.positions[0]);
        }
        if i >= self.len() {
            return Ok(self.hi());
        }
        let (f0, f1) = (self.values[i - 1], self.values[i]);
        let (x0, x1) = (self.positions[i - 1], self.positions[i]);
        Ok(if f1 > f0 { x0 + (target - f0) / (f1 - f0) * (x1 - x0) } else { x1 })
    }

    /// Central differences inside, one-sided at the ends.
    pub fn cdf_to_pdf(&self) -> Result<Self> {
        self.require(Kind::Cdf, "cdf_to_pdf")?;
        if self.values.windows(2).any(|w| w[1] < w[0] - ROUNDOFF_TOL) {
            return Err(Error::CorruptDistribution("CDF decreases by more than round-off".into()));
        }
        let x = &self.positions;
        let f = &self.values;
        let n = x.len();
        let mut p = vec![0.0; n];
        p[0] = (f[1] - f[0]) / (x[1] - x[0]);
        p[n - 1] = (f[n - 1] - f[n - 2]) / (x[n - 1] - x[n - 2]);
        for i in 1..n - 1 {
            p[i] = (f[i + 1] - f[i - 1]) / (x[i + 1] - x[i - 1]);
        }
        p.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(GridDistribution { positions: x.clone(), values: p, kind: Kind::Pdf, spacing: self.spacing, mass: self.mass })
    }

    /// Cumulative trapezoid, clamped to [0, 1].
    pub fn pdf_to_cdf(&self) -> Result<Self> {
        self.require(Kind::Pdf, "pdf_to_cdf")?;
        let mut c = cumulative_trapezoid(&self.positions, &self.values);
        let last = c[c.len() - 1];
        let mass = if last < 1.0 { last.max(f64::MIN_POSITIVE) } else { 1.0 };
        monotone_clamp(&mut c, mass);
        Ok(GridDistribution { positions: self.positions.clone(), values: c, kind: Kind::Cdf, spacing: self.spacing, mass })
    }

    /// Scales a PDF to unit trapezoidal integral.
    pub fn renormalize(&self) -> Result<Self> {
        self.require(Kind::Pdf, "renormalize")?;
        let total = trapezoid(&self.positions, &self.values);
        if !(total > 0.0) {
            return Err(Error::DegenerateDistribution("density integrates to zero".into()));
        }
        let mut d = self.clone();
        d.values.iter_mut().for_each(|v| *v /= total);
        d.mass = 1.0;
        Ok(d)
    }

    /// Pushes a CDF through a strictly monotone map. A decreasing map flips the
    /// grid and complements the values.
    pub fn change_of_variable(&self, map: impl Fn(f64) -> f64) -> Result<Self> {
        self.require(Kind::Cdf, "change_of_variable")?;
        let y: Vec<f64> = self.positions.iter().map(|&x| map(x)).collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMap("map produced a non-finite value".into()));
        }
        let increasing = y.windows(2).all(|w| w[1] > w[0]);
        let decreasing = y.windows(2).all(|w| w[1] < w[0]);
        let (positions, values) = if increasing {
            (y, self.values.clone())
        } else if decreasing {
            let pos: Vec<f64> = y.into_iter().rev().collect();
            let vals: Vec<f64> = self.values.iter().rev().map(|&f| (self.mass - f).max(0.0)).collect();
            (pos, vals)
        } else {
            return Err(Error::InvalidMap("map is not strictly monotone on the grid".into()));
        };
        let spacing = detect_spacing(&positions);
        Ok(GridDistribution { positions, values, kind: Kind::Cdf, spacing, mass: self.mass })
    }

    /// Mean and variance. A CDF contributes its cell masses at cell midpoints;
    /// a PDF is integrated with the trapezoid rule.
    pub fn moments(&self) -> (f64, f64) {
        let x = &self.positions;
        let v = &self.values;
        match self.kind {
            Kind::Cdf => {
                let cells = || {
                    x.windows(2).zip(v.windows(2)).map(|(xw, fw)| (0.5 * (xw[0] + xw[1]), fw[1] - fw[0]))
                };
                let m0: f64 = cells().map(|(_, w)| w).sum();
                let mean = cells().map(|(c, w)| c * w).sum::<f64>() / m0;
                let var = cells().map(|(c, w)| w * (c - mean) * (c - mean)).sum::<f64>() / m0;
                (mean, var)
            }
            Kind::Pdf => {
                let m0 = trapezoid(x, v);
                let xv: Vec<f64> = x.iter().zip(v).map(|(a, b)| a * b).collect();
                let mean = trapezoid(x, &xv) / m0;
                let cv: Vec<f64> = x.iter().zip(v).map(|(a, b)| (a - mean) * (a - mean) * b).collect();
                (mean, trapezoid(x, &cv) / m0)
            }
        }
    }

    /// Total probability: the CDF rise across the grid, or the PDF integral.
    pub fn total_mass(&self) -> f64 {
        match self.kind {
            Kind::Cdf => self.values[self.len() - 1] - self.values[0],
            Kind::Pdf => trapezoid(&self.positions, &self.values),
        }
    }
}

/// Largest absolute CDF difference over the nodes of both grids.
pub fn sup_distance(a: &GridDistribution, b: &GridDistribution) -> Result<f64> {
    a.require(Kind::Cdf, "sup_distance")?;
    b.require(Kind::Cdf, "sup_distance")?;
    let pa = Pchip::new(&a.positions, &a.values)?;
    let pb = Pchip::new(&b.positions, &b.values)?;
    let on_a = pb.eval_sorted(&a.positions, 0.0, b.mass);
    let on_b = pa.eval_sorted(&b.positions, 0.0, a.mass);
    let d1 = a.values.iter().zip(&on_a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let d2 = b.values.iter().zip(&on_b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(d1.max(d2))
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1])).sum()
}

pub fn cumulative_trapezoid(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(0.0);
    for (xw, yw) in x.windows(2).zip(y.windows(2)) {
        acc += 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]);
        out.push(acc);
    }
    out
}

/// Clamps to [0, top] and enforces a running maximum.
pub(crate) fn monotone_clamp(values: &mut [f64], top: f64) {
    let mut run = 0.0f64;
    for v in values.iter_mut() {
        run = run.max(v.clamp(0.0, top));
        *v = run;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal(h: f64) -> GridDistribution {
        GridDistribution::gaussian_cdf(0.0, 1.0, h, 1e-12).unwrap()
    }

    #[test]
    fn truncation_extent_at_default_threshold() {
        let d = std_normal(1e-3);
        assert!((d.lo() + 7.03).abs() < 0.01, "lo {}", d.lo());
        assert!((d.hi() - 7.03).abs() < 0.01, "hi {}", d.hi());
        d.check_tails(1e-12).unwrap();
    }

    #[test]
    fn truncation_extent_at_coarse_threshold() {
        let h = 1e-4;
        let n = (8.0 / h) as usize;
        let pos: Vec<f64> = (0..=n).map(|i| -4.0 + i as f64 * h).collect();
        let vals = pos.iter().map(|&x| normal::cdf(x)).collect();
        let d = GridDistribution::new(pos, vals, Kind::Cdf).unwrap();
        let t = d.truncate_by_threshold(0.4).unwrap();
        assert!((t.lo() + 0.2533).abs() < 2e-4, "{}", t.lo());
        assert!((t.hi() - 0.2533).abs() < 2e-4, "{}", t.hi());
    }

    #[test]
    fn truncation_removes_little_mass_and_is_idempotent() {
        let d = std_normal(1e-2);
        let t = d.truncate_by_threshold(1e-8).unwrap();
        assert!(d.total_mass() - t.total_mass() <= 2e-8);
        assert_eq!(t.truncate_by_threshold(1e-8).unwrap(), t);
    }

    #[test]
    fn truncation_of_a_point_mass_is_degenerate() {
        let d = GridDistribution::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 0.0, 1.0, 1.0], Kind::Cdf).unwrap();
        assert!(matches!(d.truncate_by_threshold(1e-12), Err(Error::DegenerateDistribution(_))));
    }

    #[test]
    fn cdf_to_pdf_matches_density() {
        let d = std_normal(1e-4);
        let p = d.cdf_to_pdf().unwrap();
        let err = p
            .positions()
            .iter()
            .zip(p.values())
            .skip(1)
            .take(p.len() - 2)
            .map(|(&x, &v)| (v - normal::pdf(x)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn cdf_to_pdf_rejects_decreasing_input() {
        let d = GridDistribution {
            positions: vec![0.0, 1.0, 2.0],
            values: vec![0.0, 0.6, 0.5],
            kind: Kind::Cdf,
            spacing: Some(1.0),
            mass: 1.0,
        };
        assert!(matches!(d.cdf_to_pdf(), Err(Error::CorruptDistribution(_))));
    }

    #[test]
    fn pdf_round_trip() {
        let d = std_normal(1e-3);
        let back = d.cdf_to_pdf().unwrap().pdf_to_cdf().unwrap();
        let shift = back.values()[0] - d.values()[0];
        let err = d.values().iter().zip(back.values()).map(|(a, b)| (a - (b - shift)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn interpolation_stays_within_data_range() {
        let d = std_normal(0.05);
        let u = d.interpolate_to_uniform(0.013, d.lo() - 1.0, d.hi() + 1.0).unwrap();
        assert!(u.values().windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(u.values()[0], 0.0);
        assert_eq!(*u.values().last().unwrap(), 1.0);
        assert!(matches!(d.interpolate_to_uniform(5.0, 0.0, 1.0), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn exp_map_preserves_quantiles() {
        let d = std_normal(1e-3);
        let s = d.change_of_variable(f64::exp).unwrap();
        for i in (0..d.len()).step_by(97) {
            let p = d.values()[i];
            if p > 1e-6 && p < 1.0 - 1e-6 {
                let q = s.quantile(p / s.mass()).unwrap();
                assert!((q / d.positions()[i].exp() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decreasing_map_reverses() {
        let d = std_normal(1e-2);
        let r = d.change_of_variable(|x| -x).unwrap();
        let err = sup_distance(&d, &r).unwrap();
        assert!(err < 1e-9, "symmetric distribution should be invariant, err {err}");
        assert!(matches!(d.change_of_variable(|x| x * x), Err(Error::InvalidMap(_))));
    }

    #[test]
    fn renormalize_zero_density_fails() {
        let d = GridDistribution::new(vec![0.0, 1.0, 2.0], vec![0.0; 3], Kind::Pdf).unwrap();
        assert!(matches!(d.renormalize(), Err(Error::DegenerateDistribution(_))));
    }

    #[test]
    fn cdf_moments_carry_sheppard_term() {
        let h = 0.01;
        let d = GridDistribution::gaussian_cdf(1.5, 0.3, h, 1e-14).unwrap();
        let (m, v) = d.moments();
        assert!((m - 1.5).abs() < 1e-12);
        assert!((v - (0.09 + h * h / 12.0)).abs() < 1e-10, "var {v}");
    }
}
