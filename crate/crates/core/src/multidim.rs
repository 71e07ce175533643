//! Two-dimensional densities: drift, correlated Gaussian diffusion and marginals.
//!
//! Unlike the one-dimensional grids, the state here is a density sampled at
//! the nodes of a uniform lattice, and node value times cell area is the cell
//! probability.

use crate::convolve::{fft_chunks, next_fast_len, DiffusionKernel};
use crate::error::{Error, Result};
use crate::grid::{GridDistribution, Kind, Pchip, ROUNDOFF_TOL};
use crate::normal;
use crate::stochvol::cholesky_decorrelate;
use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

/// Largest number of nodes a grid may hold unless raised explicitly.
pub const DEFAULT_MAX_POINTS: usize = 2048 * 2048;

pub const CSV_HEADER: &str = "x1,x2,pdf";

#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    origin: (f64, f64),
    spacing: (f64, f64),
    density: Array2<f64>,
    max_points: usize,
}

fn check_size(shape: (usize, usize), limit: usize) -> Result<()> {
    let n = shape.0.saturating_mul(shape.1);
    if n > limit {
        return Err(Error::GridTooLarge(format!(
            "{}x{} grid exceeds the {limit}-point limit",
            shape.0, shape.1
        )));
    }
    Ok(())
}

/// Trapezoid weights for `n` points of spacing `h`.
fn trap_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 1 {
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
    }
    w
}

impl Grid2D {
    /// Node `(i, j)` sits at `origin + (i h1, j h2)`.
    pub fn new(origin: (f64, f64), spacing: (f64, f64), density: Array2<f64>) -> Result<Self> {
        Self::with_max_points(origin, spacing, density, DEFAULT_MAX_POINTS)
    }

    pub fn with_max_points(origin: (f64, f64), spacing: (f64, f64), mut density: Array2<f64>, max_points: usize) -> Result<Self> {
        if !(spacing.0 > 0.0 && spacing.1 > 0.0) || !origin.0.is_finite() || !origin.1.is_finite() {
            return Err(Error::InvalidGrid(format!("bad origin {origin:?} or spacing {spacing:?}")));
        }
        if density.is_empty() {
            return Err(Error::InvalidGrid("empty density".into()));
        }
        check_size(density.dim(), max_points)?;
        let peak = density.iter().cloned().fold(0.0, f64::max);
        if density.iter().any(|v| !v.is_finite() || *v < -ROUNDOFF_TOL * peak.max(1.0)) {
            return Err(Error::CorruptDistribution("density must be finite and non-negative".into()));
        }
        density.mapv_inplace(|v| v.max(0.0));
        Ok(Grid2D { origin, spacing, density, max_points })
    }

    /// Raises or lowers the node limit for grids derived from this one.
    pub fn set_max_points(&mut self, max_points: usize) -> Result<()> {
        check_size(self.shape(), max_points)?;
        self.max_points = max_points;
        Ok(())
    }

    /// All mass in the single cell around `at`.
    pub fn point_mass(at: (f64, f64), spacing: (f64, f64)) -> Result<Self> {
        let mut d = Array2::zeros((3, 3));
        d[[1, 1]] = 1.0 / (spacing.0 * spacing.1);
        Self::new((at.0 - spacing.0, at.1 - spacing.1), spacing, d)
    }

    /// Samples `f(x1, x2)` on an `n1 x n2` lattice.
    pub fn from_fn(origin: (f64, f64), spacing: (f64, f64), shape: (usize, usize), f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_size(shape, DEFAULT_MAX_POINTS)?;
        let d = Array2::from_shape_fn(shape, |(i, j)| f(origin.0 + i as f64 * spacing.0, origin.1 + j as f64 * spacing.1));
        Self::new(origin, spacing, d)
    }

    /// Bivariate normal density sampled out to the `eps` tail quantile of each
    /// marginal and renormalised.
    pub fn gaussian(mean: (f64, f64), cov: [[f64; 2]; 2], spacing: (f64, f64), eps: f64) -> Result<Self> {
        let k = Kernel2D::gaussian(cov, spacing, eps)?;
        let (f1, f2) = k.first;
        let origin = (mean.0 + f1 as f64 * spacing.0, mean.1 + f2 as f64 * spacing.1);
        Self::new(origin, spacing, k.weights)?.renormalize()
    }

    /// Product density of two uniform one-dimensional PDFs.
    pub fn product(a: &GridDistribution, b: &GridDistribution) -> Result<Self> {
        let (ha, hb) = match (a.kind(), b.kind(), a.spacing(), b.spacing()) {
            (Kind::Pdf, Kind::Pdf, Some(ha), Some(hb)) => (ha, hb),
            _ => return Err(Error::InvalidInput("product needs two uniform PDFs".into())),
        };
        let d = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a.values()[i] * b.values()[j]);
        Self::new((a.lo(), b.lo()), (ha, hb), d)
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }
    pub fn spacing(&self) -> (f64, f64) {
        self.spacing
    }
    pub fn shape(&self) -> (usize, usize) {
        self.density.dim()
    }
    pub fn density(&self) -> &Array2<f64> {
        &self.density
    }
    pub fn max_points(&self) -> usize {
        self.max_points
    }
    pub fn x1(&self) -> Vec<f64> {
        (0..self.shape().0).map(|i| self.origin.0 + i as f64 * self.spacing.0).collect()
    }
    pub fn x2(&self) -> Vec<f64> {
        (0..self.shape().1).map(|j| self.origin.1 + j as f64 * self.spacing.1).collect()
    }

    fn rebuild(&self, origin: (f64, f64), density: Array2<f64>) -> Result<Self> {
        Self::with_max_points(origin, self.spacing, density, self.max_points)
    }

    /// Double trapezoid integral of the density.
    pub fn total_mass(&self) -> f64 {
        let (n1, n2) = self.shape();
        let (w1, w2) = (trap_weights(n1, self.spacing.0), trap_weights(n2, self.spacing.1));
        self.density.outer_iter().zip(&w1).map(|(row, a)| a * row.iter().zip(&w2).map(|(v, b)| v * b).sum::<f64>()).sum()
    }

    pub fn renormalize(&self) -> Result<Self> {
        let m = self.total_mass();
        if !(m > 0.0) {
            return Err(Error::DegenerateDistribution("2-D density has no mass".into()));
        }
        self.rebuild(self.origin, &self.density / m)
    }

    /// Mean vector and covariance matrix under the trapezoid rule.
    pub fn moments(&self) -> ([f64; 2], [[f64; 2]; 2]) {
        let (n1, n2) = self.shape();
        let (w1, w2) = (trap_weights(n1, self.spacing.0), trap_weights(n2, self.spacing.1));
        let (x1, x2) = (self.x1(), self.x2());
        let mut s = [0.0f64; 6];
        for i in 0..n1 {
            for j in 0..n2 {
                let p = self.density[[i, j]] * w1[i] * w2[j];
                // centre near the origin of the grid for conditioning
                let (u, v) = (x1[i] - x1[0], x2[j] - x2[0]);
                s[0] += p;
                s[1] += p * u;
                s[2] += p * v;
                s[3] += p * u * u;
                s[4] += p * u * v;
                s[5] += p * v * v;
            }
        }
        let (mu, mv) = (s[1] / s[0], s[2] / s[0]);
        let c11 = s[3] / s[0] - mu * mu;
        let c12 = s[4] / s[0] - mu * mv;
        let c22 = s[5] / s[0] - mv * mv;
        ([x1[0] + mu, x2[0] + mv], [[c11, c12], [c12, c22]])
    }

    /// Density of one coordinate, integrating the other out with the trapezoid rule.
    pub fn marginal(&self, axis: usize) -> Result<GridDistribution> {
        let (n1, n2) = self.shape();
        let (values, start, h) = match axis {
            0 => {
                let w = trap_weights(n2, self.spacing.1);
                let v = self.density.outer_iter().map(|row| row.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
                (v, self.origin.0, self.spacing.0)
            }
            1 => {
                let w = trap_weights(n1, self.spacing.0);
                let v = self.density.axis_iter(Axis(1)).map(|col| col.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
                (v, self.origin.1, self.spacing.1)
            }
            _ => return Err(Error::InvalidInput(format!("axis must be 0 or 1, got {axis}"))),
        };
        GridDistribution::uniform(start, h, values, Kind::Pdf)
    }

    /// Drops outer rows and columns whose cumulative probability stays below
    /// `eps`, keeping one such line on each side.
    pub fn trim(&self, eps: f64) -> Result<Self> {
        crate::grid::validate_threshold(eps)?;
        let cut = |m: Vec<f64>| -> Result<(usize, usize)> {
            let total: f64 = m.iter().sum();
            let mut acc = 0.0;
            let mut lo = 0;
            for (i, v) in m.iter().enumerate() {
                acc += v;
                if acc >= eps * total {
                    lo = i.saturating_sub(1);
                    break;
                }
            }
            acc = 0.0;
            let mut hi = m.len() - 1;
            for (i, v) in m.iter().enumerate().rev() {
                acc += v;
                if acc >= eps * total {
                    hi = (i + 1).min(m.len() - 1);
                    break;
                }
            }
            if hi < lo + 2 {
                return Err(Error::DegenerateDistribution("fewer than three lines survive trimming".into()));
            }
            Ok((lo, hi))
        };
        let rows = cut(self.density.sum_axis(Axis(1)).to_vec())?;
        let cols = cut(self.density.sum_axis(Axis(0)).to_vec())?;
        let d = self.density.slice(ndarray::s![rows.0..=rows.1, cols.0..=cols.1]).to_owned();
        let origin = (self.origin.0 + rows.0 as f64 * self.spacing.0, self.origin.1 + cols.0 as f64 * self.spacing.1);
        self.rebuild(origin, d)
    }

    /// Row-major CSV with header `x1,x2,pdf`.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::with_capacity(64 * self.density.len() + 16);
        s.push_str(CSV_HEADER);
        s.push('\n');
        let (x1, x2) = (self.x1(), self.x2());
        for ((i, j), v) in self.density.indexed_iter() {
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", x1[i], x2[j], v);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Gaussian (or general) increment density on the lattice `(j1 h1, j2 h2)`
/// with `j = first + index`, normalised so the weights integrate to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2D {
    spacing: (f64, f64),
    first: (i64, i64),
    weights: Array2<f64>,
    covariance: [[f64; 2]; 2],
}

impl Kernel2D {
    /// N(0, cov) sampled on a box reaching the `eps` tail quantile of each marginal.
    pub fn gaussian(cov: [[f64; 2]; 2], spacing: (f64, f64), eps: f64) -> Result<Self> {
        crate::grid::validate_threshold(eps)?;
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if !(cov[0][0] > 0.0 && cov[1][1] > 0.0 && det > 0.0) || cov[0][1] != cov[1][0] {
            return Err(Error::InvalidKernel(format!("covariance {cov:?} is not symmetric positive definite")));
        }
        let sd = (cov[0][0].sqrt(), cov[1][1].sqrt());
        if spacing.0 > sd.0 || spacing.1 > sd.1 {
            return Err(Error::Resolution(format!("spacing {spacing:?} does not resolve standard deviations {sd:?}")));
        }
        let z = normal::tail_z(eps);
        let j1 = (z * sd.0 / spacing.0).ceil() as i64;
        let j2 = (z * sd.1 / spacing.1).ceil() as i64;
        let inv = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
        let w = Array2::from_shape_fn(((2 * j1 + 1) as usize, (2 * j2 + 1) as usize), |(a, b)| {
            let u = (a as i64 - j1) as f64 * spacing.0;
            let v = (b as i64 - j2) as f64 * spacing.1;
            (-0.5 * (inv[0][0] * u * u + 2.0 * inv[0][1] * u * v + inv[1][1] * v * v)).exp()
        });
        Self::from_weights(spacing, (-j1, -j2), w, cov)
    }

    /// Increment of `(c1 dW1, c2 dW2) dt` with correlation `rho`, built from
    /// the Cholesky factor of the correlation matrix.
    pub fn correlated(c: (f64, f64), rho: f64, dt: f64, spacing: (f64, f64), eps: f64) -> Result<Self> {
        if !(c.0 > 0.0 && c.1 > 0.0 && dt > 0.0) {
            return Err(Error::InvalidKernel("diffusions and dt must be positive".into()));
        }
        let l = cholesky_decorrelate(rho)?;
        let corr = |a: usize, b: usize| l[a][0] * l[b][0] + l[a][1] * l[b][1];
        let s = [c.0, c.1];
        let cov = [
            [s[0] * s[0] * corr(0, 0) * dt, s[0] * s[1] * corr(0, 1) * dt],
            [s[1] * s[0] * corr(1, 0) * dt, s[1] * s[1] * corr(1, 1) * dt],
        ];
        Self::gaussian(cov, spacing, eps)
    }

    pub fn delta(spacing: (f64, f64)) -> Result<Self> {
        Self::from_weights(spacing, (0, 0), Array2::ones((1, 1)), [[0.0; 2]; 2])
    }

    /// Outer product of two one-dimensional kernels.
    pub fn separable(a: &DiffusionKernel, b: &DiffusionKernel) -> Result<Self> {
        let w = Array2::from_shape_fn((a.weights().len(), b.weights().len()), |(i, j)| a.weights()[i] * b.weights()[j]);
        let cov = [[a.variance(), 0.0], [0.0, b.variance()]];
        Self::from_weights((a.spacing(), b.spacing()), (a.first(), b.first()), w, cov)
    }

    fn from_weights(spacing: (f64, f64), first: (i64, i64), mut weights: Array2<f64>, covariance: [[f64; 2]; 2]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidKernel("weights must be finite and non-negative".into()));
        }
        let total = weights.sum() * spacing.0 * spacing.1;
        if !(total > 0.0) {
            return Err(Error::InvalidKernel("kernel has zero mass".into()));
        }
        weights /= total;
        Ok(Kernel2D { spacing, first, weights, covariance })
    }

    pub fn spacing(&self) -> (f64, f64) {
        self.spacing
    }
    pub fn first(&self) -> (i64, i64) {
        self.first
    }
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }
    /// Covariance the kernel was built for.
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        self.covariance
    }
}

fn check_compatible(f: &Grid2D, k: &Kernel2D) -> Result<(usize, usize)> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !close(f.spacing.0, k.spacing.0) || !close(f.spacing.1, k.spacing.1) {
        return Err(Error::InvalidKernel(format!("kernel spacing {:?} differs from grid spacing {:?}", k.spacing, f.spacing)));
    }
    let (n1, n2) = f.shape();
    let (m1, m2) = k.weights.dim();
    let shape = (n1 + m1 - 1, n2 + m2 - 1);
    check_size(shape, f.max_points)?;
    Ok(shape)
}

fn finish_convolution(f: &Grid2D, k: &Kernel2D, out: Array2<f64>) -> Result<Grid2D> {
    let peak = out.iter().cloned().fold(0.0, f64::max);
    let min = out.iter().cloned().fold(0.0, f64::min);
    if min < -ROUNDOFF_TOL * peak.max(1.0) {
        return Err(Error::Numerical(format!("2-D convolution produced density {min:e}")));
    }
    let origin = (
        f.origin.0 + k.first.0 as f64 * f.spacing.0,
        f.origin.1 + k.first.1 as f64 * f.spacing.1,
    );
    f.rebuild(origin, out.mapv(|v| v.max(0.0)))?.renormalize()
}

/// In-place 2-D transform of a row-major `rows x cols` buffer.
fn fft2(buf: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    fft_chunks(buf, cols, inverse);
    let mut t = vec![Complex64::new(0.0, 0.0); buf.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = buf[r * cols + c];
        }
    }
    fft_chunks(&mut t, rows, inverse);
    for r in 0..rows {
        for c in 0..cols {
            buf[r * cols + c] = t[c * rows + r];
        }
    }
}

/// Linear convolution with zero padding via 2-D FFT, renormalised.
pub fn convolve_2d(f: &Grid2D, k: &Kernel2D) -> Result<Grid2D> {
    let shape = check_compatible(f, k)?;
    let (r, c) = (next_fast_len(shape.0), next_fast_len(shape.1));
    let zero = Complex64::new(0.0, 0.0);
    let mut a = vec![zero; r * c];
    let mut b = vec![zero; r * c];
    for ((i, j), v) in f.density.indexed_iter() {
        a[i * c + j].re = *v;
    }
    for ((i, j), v) in k.weights.indexed_iter() {
        b[i * c + j].re = *v;
    }
    fft2(&mut a, r, c, false);
    fft2(&mut b, r, c, false);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y);
    fft2(&mut a, r, c, true);
    let scale = f.spacing.0 * f.spacing.1 / (r * c) as f64;
    let out = Array2::from_shape_fn(shape, |(i, j)| a[i * c + j].re * scale);
    finish_convolution(f, k, out)
}

/// Same result as [`convolve_2d`] by explicit double summation.
pub fn direct_convolve_2d(f: &Grid2D, k: &Kernel2D) -> Result<Grid2D> {
    let shape = check_compatible(f, k)?;
    let area = f.spacing.0 * f.spacing.1;
    let mut out = Array2::zeros(shape);
    for ((i, j), v) in f.density.indexed_iter() {
        if *v == 0.0 {
            continue;
        }
        for ((p, q), w) in k.weights.indexed_iter() {
            out[[i + p, j + q]] += v * w * area;
        }
    }
    finish_convolution(f, k, out)
}

/// Drift of one coordinate given that coordinate and time.
pub type AxisDrift = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Drift vector given `(x1, x2, t)`.
pub type VectorDrift = Arc<dyn Fn(f64, f64, f64) -> (f64, f64) + Send + Sync>;

#[derive(Clone)]
pub enum Drift2D {
    Constant(f64, f64),
    /// Each component depends on its own coordinate only.
    Separable(AxisDrift, AxisDrift),
    General(VectorDrift),
}

impl std::fmt::Debug for Drift2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Drift2D::Constant(a, b) => write!(f, "Constant({a}, {b})"),
            Drift2D::Separable(..) => f.write_str("Separable(..)"),
            Drift2D::General(_) => f.write_str("General(..)"),
        }
    }
}

/// Moves the cell edges along one axis and re-bins each line's cumulative
/// mass onto a uniform grid anchored at the moved heaviest node.
fn resample_axis(f: &Grid2D, axis: usize, a: &AxisDrift, t: f64, dt: f64) -> Result<Grid2D> {
    let d = if axis == 0 { f.density.clone() } else { f.density.t().to_owned() };
    let (n, lines) = d.dim();
    let (x0, h) = if axis == 0 { (f.origin.0, f.spacing.0) } else { (f.origin.1, f.spacing.1) };
    let moved: Vec<f64> = (0..=n)
        .map(|k| {
            let e = x0 + (k as f64 - 0.5) * h;
            e + a(e, t) * dt
        })
        .collect();
    if moved.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("drift is not finite on axis {axis}")));
    }
    if moved.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::StepSize(format!("drift map folds along axis {axis} at t={t}")));
    }
    let line_mass = d.sum_axis(Axis(1));
    let r = (0..n).max_by(|&i, &j| line_mass[i].total_cmp(&line_mass[j])).unwrap_or(0);
    let xr = x0 + r as f64 * h;
    let ys = xr + a(xr, t) * dt;
    let jlo = ((moved[0] - ys) / h + 0.5 + 1e-9).floor() as i64;
    let jhi = ((moved[n] - ys) / h - 0.5 - 1e-9).ceil() as i64;
    let m = (jhi - jlo + 1) as usize;
    check_size((m, lines), f.max_points)?;
    let targets: Vec<f64> = (0..=m).map(|k| ys + (jlo as f64 + k as f64 - 0.5) * h).collect();
    let mut out = Array2::zeros((m, lines));
    let mut cum = vec![0.0; n + 1];
    for l in 0..lines {
        for k in 0..n {
            cum[k + 1] = cum[k] + d[[k, l]];
        }
        if cum[n] == 0.0 {
            continue;
        }
        let p = Pchip::new(&moved, &cum)?;
        let c = p.eval_sorted(&targets, 0.0, cum[n]);
        for k in 0..m {
            out[[k, l]] = (c[k + 1] - c[k]).max(0.0);
        }
    }
    let start = ys + jlo as f64 * h;
    if axis == 0 {
        f.rebuild((start, f.origin.1), out)
    } else {
        f.rebuild((f.origin.0, start), out.t().to_owned())
    }
}

/// Moves every node by its drift and spreads its mass bilinearly over the
/// four surrounding nodes of a grid anchored at the moved heaviest node.
fn deposit(f: &Grid2D, a: &VectorDrift, t: f64, dt: f64) -> Result<Grid2D> {
    let (n1, n2) = f.shape();
    let (h1, h2) = f.spacing;
    let (x1, x2) = (f.x1(), f.x2());
    let mut y = Array2::from_elem((n1, n2), (0.0, 0.0));
    for i in 0..n1 {
        for j in 0..n2 {
            let (a1, a2) = a(x1[i], x2[j], t);
            y[[i, j]] = (x1[i] + a1 * dt, x2[j] + a2 * dt);
        }
    }
    if y.iter().any(|(u, v)| !u.is_finite() || !v.is_finite()) {
        return Err(Error::Domain("drift is not finite on the grid".into()));
    }
    for i in 0..n1 {
        for j in 0..n2 {
            let (ia, ib) = if i + 1 < n1 { (i, i + 1) } else { (i - 1, i) };
            let (ja, jb) = if j + 1 < n2 { (j, j + 1) } else { (j - 1, j) };
            let d1 = (y[[ib, j]].0 - y[[ia, j]].0, y[[ib, j]].1 - y[[ia, j]].1);
            let d2 = (y[[i, jb]].0 - y[[i, ja]].0, y[[i, jb]].1 - y[[i, ja]].1);
            if d1.0 * d2.1 - d1.1 * d2.0 <= 0.0 {
                return Err(Error::StepSize(format!("drift map flips orientation near node ({i}, {j}) at t={t}")));
            }
        }
    }
    let (mut ri, mut rj) = (0, 0);
    for ((i, j), v) in f.density.indexed_iter() {
        if *v > f.density[[ri, rj]] {
            (ri, rj) = (i, j);
        }
    }
    let anchor = y[[ri, rj]];
    let snap = |u: f64| if (u - u.round()).abs() < 1e-9 { u.round() } else { u };
    let coords: Vec<(f64, f64)> = y.iter().map(|(u, v)| (snap((u - anchor.0) / h1), snap((v - anchor.1) / h2))).collect();
    let lo1 = coords.iter().map(|c| c.0.floor()).fold(f64::INFINITY, f64::min);
    let hi1 = coords.iter().map(|c| c.0.ceil()).fold(f64::NEG_INFINITY, f64::max);
    let lo2 = coords.iter().map(|c| c.1.floor()).fold(f64::INFINITY, f64::min);
    let hi2 = coords.iter().map(|c| c.1.ceil()).fold(f64::NEG_INFINITY, f64::max);
    let shape = ((hi1 - lo1) as usize + 1, (hi2 - lo2) as usize + 1);
    check_size(shape, f.max_points)?;
    let mut out = Array2::zeros(shape);
    for (c, v) in coords.iter().zip(f.density.iter()) {
        let (u, w) = (c.0 - lo1, c.1 - lo2);
        let (i0, j0) = (u.floor() as usize, w.floor() as usize);
        let (fu, fw) = (u - i0 as f64, w - j0 as f64);
        out[[i0, j0]] += v * (1.0 - fu) * (1.0 - fw);
        if fu > 0.0 {
            out[[i0 + 1, j0]] += v * fu * (1.0 - fw);
        }
        if fw > 0.0 {
            out[[i0, j0 + 1]] += v * (1.0 - fu) * fw;
        }
        if fu > 0.0 && fw > 0.0 {
            out[[i0 + 1, j0 + 1]] += v * fu * fw;
        }
    }
    f.rebuild((anchor.0 + lo1 * h1, anchor.1 + lo2 * h2), out)
}

/// Applies `x -> x + a(x, t) dt` to the density.
pub fn drift_2d(f: &Grid2D, drift: &Drift2D, t: f64, dt: f64) -> Result<Grid2D> {
    match drift {
        Drift2D::Constant(a1, a2) => f.rebuild((f.origin.0 + a1 * dt, f.origin.1 + a2 * dt), f.density.clone()),
        Drift2D::Separable(a1, a2) => resample_axis(&resample_axis(f, 0, a1, t, dt)?, 1, a2, t, dt),
        Drift2D::General(a) => deposit(f, a, t, dt),
    }
}

/// Drift-first step: drift, convolve with `k`, trim tails below `eps`, renormalise.
pub fn step_2d(f: &Grid2D, drift: &Drift2D, k: &Kernel2D, t: f64, dt: f64, eps: f64) -> Result<Grid2D> {
    let moved = drift_2d(f, drift, t, dt)?;
    convolve_2d(&moved, k)?.trim(eps)?.renormalize()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> Grid2D {
        Grid2D::gaussian((0.2, -0.1), [[0.04, 0.01], [0.01, 0.09]], (0.02, 0.03), 1e-12).unwrap()
    }

    #[test]
    fn fft_matches_direct_sum() {
        let f = small_grid();
        let k = Kernel2D::correlated((0.5, 0.3), 0.4, 0.01, (0.02, 0.03), 1e-8).unwrap();
        let a = convolve_2d(&f, &k).unwrap();
        let b = direct_convolve_2d(&f, &k).unwrap();
        assert_eq!(a.shape(), b.shape());
        let diff = (&a.density - &b.density).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-10, "{diff:e}");
    }

    #[test]
    fn delta_kernel_is_identity() {
        let f = small_grid();
        let g = convolve_2d(&f, &Kernel2D::delta(f.spacing()).unwrap()).unwrap();
        assert_eq!(g.shape(), f.shape());
        let diff = (&g.density - &f.density).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-12);
    }

    #[test]
    fn moments_of_gaussian() {
        let (m, c) = small_grid().moments();
        assert!((m[0] - 0.2).abs() < 1e-10 && (m[1] + 0.1).abs() < 1e-10);
        assert!((c[0][0] - 0.04).abs() < 1e-9 && (c[0][1] - 0.01).abs() < 1e-9 && (c[1][1] - 0.09).abs() < 1e-9);
    }

    #[test]
    fn constant_drift_translates() {
        let f = small_grid();
        let g = step_2d(&f, &Drift2D::Constant(1.0, -2.0), &Kernel2D::delta(f.spacing()).unwrap(), 0.0, 0.1, 1e-12).unwrap();
        let (a, b) = (f.moments().0, g.moments().0);
        assert!((b[0] - a[0] - 0.1).abs() < 1e-12 && (b[1] - a[1] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn separable_constant_drift_is_exact() {
        let f = small_grid();
        let sep = Drift2D::Separable(Arc::new(|_, _| 0.3), Arc::new(|_, _| -0.7));
        let a = drift_2d(&f, &sep, 0.0, 0.5).unwrap();
        let b = drift_2d(&f, &Drift2D::Constant(0.3, -0.7), 0.0, 0.5).unwrap();
        assert_eq!(a.shape(), b.shape());
        let diff = (&a.density - &b.density).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-10, "{diff:e}");
        assert!((a.origin().0 - b.origin().0).abs() < 1e-12);
    }

    #[test]
    fn general_drift_keeps_mass_and_mean() {
        let f = small_grid();
        let a: VectorDrift = Arc::new(|x, y, _| (0.1 * y, -0.2 * x));
        let g = drift_2d(&f, &Drift2D::General(a), 0.0, 0.1).unwrap();
        assert!((g.total_mass() - f.total_mass()).abs() < 1e-10);
        let (m0, m1) = (f.moments().0, g.moments().0);
        assert!((m1[0] - (m0[0] + 0.01 * m0[1])).abs() < 1e-9);
        assert!((m1[1] - (m0[1] - 0.02 * m0[0])).abs() < 1e-9);
    }

    #[test]
    fn folding_drift_is_rejected() {
        let f = small_grid();
        let a: VectorDrift = Arc::new(|x, y, _| (-20.0 * x, y));
        assert!(matches!(drift_2d(&f, &Drift2D::General(a), 0.0, 0.1), Err(Error::StepSize(_))));
        let s = Drift2D::Separable(Arc::new(|x, _| -20.0 * x), Arc::new(|_, _| 0.0));
        assert!(matches!(drift_2d(&f, &s, 0.0, 0.1), Err(Error::StepSize(_))));
    }

    #[test]
    fn size_limit() {
        let f = Grid2D::from_fn((0.0, 0.0), (1.0, 1.0), (10, 10), |_, _| 1.0).unwrap();
        let mut g = f.clone();
        assert!(g.set_max_points(50).is_err());
        g.set_max_points(100).unwrap();
        let k = Kernel2D::gaussian([[4.0, 0.0], [0.0, 4.0]], (1.0, 1.0), 1e-3).unwrap();
        assert!(matches!(convolve_2d(&g, &k), Err(Error::GridTooLarge(_))));
        assert!(Grid2D::from_fn((0.0, 0.0), (1.0, 1.0), (2049, 2048), |_, _| 1.0).is_err());
    }

    #[test]
    fn csv_layout() {
        let f = Grid2D::point_mass((0.0, 0.0), (0.5, 0.25)).unwrap();
        let s = f.to_csv_string();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 10);
        assert!(lines[2].starts_with("-5.0000000000000000e-1,0.0000000000000000e0,"));
    }

    #[test]
    fn marginal_of_product() {
        let a = GridDistribution::gaussian_cdf(0.0, 1.0, 0.05, 1e-12).unwrap().cdf_to_pdf().unwrap();
        let b = GridDistribution::gaussian_cdf(1.0, 0.5, 0.05, 1e-12).unwrap().cdf_to_pdf().unwrap();
        let g = Grid2D::product(&a, &b).unwrap();
        let m = g.marginal(0).unwrap();
        let scale = crate::grid::trapezoid(b.positions(), b.values());
        for (x, y) in m.values().iter().zip(a.values()) {
            assert!((x - y * scale).abs() < 1e-12);
        }
    }
}
