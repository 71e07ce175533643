//! Diffusion kernels and linear convolution of grid distributions.

use crate::error::{Error, Result};
use crate::grid::{validate_threshold, GridDistribution, Kind, Pchip, ROUNDOFF_TOL};
use crate::normal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Smallest 5-smooth integer not below `n`.
pub fn next_fast_len(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p5 = 1usize;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut m = p35;
            while m < n {
                m *= 2;
            }
            best = best.min(m);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

pub(crate) fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    fft_chunks(buf, buf.len(), inverse)
}

/// Transforms each consecutive chunk of length `len`.
pub(crate) fn fft_chunks(buf: &mut [Complex64], len: usize, inverse: bool) {
    let plan = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    });
    plan.process(buf);
}

/// Discrete density of an increment on the lattice `j * spacing`,
/// `j = first, first + 1, ...`, with `sum(weights) * spacing == 1`.
#[derive(Debug, Clone)]
pub struct DiffusionKernel {
    spacing: f64,
    weights: Vec<f64>,
    first: i64,
    cache: Option<Arc<(usize, Vec<Complex64>)>>,
}

impl PartialEq for DiffusionKernel {
    fn eq(&self, other: &Self) -> bool {
        self.spacing == other.spacing && self.first == other.first && self.weights == other.weights
    }
}

impl DiffusionKernel {
    /// Builds a kernel from raw lattice weights, normalising them.
    pub fn from_weights(spacing: f64, first: i64, mut weights: Vec<f64>) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidKernel(format!("spacing must be positive, got {spacing}")));
        }
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidKernel("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum::<f64>() * spacing;
        if !(total > 0.0) {
            return Err(Error::InvalidKernel("kernel has zero mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(DiffusionKernel { spacing, weights, first, cache: None })
    }

    /// Point mass at zero.
    pub fn delta(spacing: f64) -> Result<Self> {
        Self::from_weights(spacing, 0, vec![1.0])
    }

    /// N(shift, sd^2) sampled at lattice points, cut where each tail drops below `eps`.
    pub fn gaussian(sd: f64, shift: f64, spacing: f64, eps: f64) -> Result<Self> {
        validate_threshold(eps)?;
        if !(sd > 0.0) || !sd.is_finite() || !shift.is_finite() {
            return Err(Error::InvalidKernel(format!("bad gaussian parameters sd={sd}, shift={shift}")));
        }
        if spacing > sd {
            return Err(Error::Resolution(format!(
                "spacing {spacing} exceeds kernel standard deviation {sd}"
            )));
        }
        let reach = normal::tail_z(eps) * sd;
        let first = ((shift - reach) / spacing).floor() as i64;
        let last = ((shift + reach) / spacing).ceil() as i64;
        let weights = (first..=last)
            .map(|j| {
                let z = (j as f64 * spacing - shift) / sd;
                (-0.5 * z * z).exp()
            })
            .collect();
        Self::from_weights(spacing, first, weights)
    }

    /// Resamples a density given on a uniform grid onto the lattice. With
    /// `negate` the kernel describes `-X` instead of `X`.
    pub fn from_density(density: &GridDistribution, spacing: f64, negate: bool) -> Result<Self> {
        if density.kind() != Kind::Pdf {
            return Err(Error::InvalidKernel("density kernel needs a PDF".into()));
        }
        if !(density.total_mass() > 0.0) {
            return Err(Error::InvalidKernel("density has zero mass".into()));
        }
        let j0 = (density.lo() / spacing).floor() as i64;
        let j1 = (density.hi() / spacing).ceil() as i64;
        let pts: Vec<f64> = (j0..=j1).map(|j| j as f64 * spacing).collect();
        let p = Pchip::new(density.positions(), density.values())?;
        let mut w: Vec<f64> = p.eval_sorted(&pts, 0.0, 0.0).into_iter().map(|v| v.max(0.0)).collect();
        let first = if negate {
            w.reverse();
            -j1
        } else {
            j0
        };
        Self::from_weights(spacing, first, w)
    }

    /// Weighted sum of kernels sharing a spacing.
    pub fn mixture(parts: &[(f64, DiffusionKernel)]) -> Result<Self> {
        let spacing = parts.first().ok_or_else(|| Error::InvalidKernel("empty mixture".into()))?.1.spacing;
        if parts.iter().any(|(_, k)| (k.spacing - spacing).abs() > 1e-12 * spacing) {
            return Err(Error::InvalidKernel("mixture kernels disagree on spacing".into()));
        }
        let first = parts.iter().map(|(_, k)| k.first).min().unwrap();
        let last = parts.iter().map(|(_, k)| k.last()).max().unwrap();
        let mut w = vec![0.0; (last - first + 1) as usize];
        for (wt, k) in parts {
            let off = (k.first - first) as usize;
            for (i, v) in k.weights.iter().enumerate() {
                w[off + i] += wt * v;
            }
        }
        Self::from_weights(spacing, first, w)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    /// Lattice index of the first weight.
    pub fn first(&self) -> i64 {
        self.first
    }
    pub fn last(&self) -> i64 {
        self.first + self.weights.len() as i64 - 1
    }
    /// Largest lattice offset reached on either side of zero.
    pub fn half_width(&self) -> usize {
        self.first.unsigned_abs().max(self.last().unsigned_abs()) as usize
    }

    pub fn mean(&self) -> f64 {
        let h = self.spacing;
        self.lattice().map(|(u, w)| u * w * h).sum()
    }

    pub fn variance(&self) -> f64 {
        let h = self.spacing;
        let m = self.mean();
        self.lattice().map(|(u, w)| (u - m) * (u - m) * w * h).sum()
    }

    fn lattice(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.weights.iter().enumerate().map(move |(i, &w)| ((self.first + i as i64) as f64 * self.spacing, w))
    }

    fn spectrum(&self, size: usize) -> Arc<(usize, Vec<Complex64>)> {
        if let Some(c) = &self.cache {
            if c.0 == size {
                return c.clone();
            }
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        for (i, &w) in self.weights.iter().enumerate() {
            let j = (self.first + i as i64).rem_euclid(size as i64) as usize;
            buf[j].re += w * self.spacing;
        }
        fft_in_place(&mut buf, false);
        Arc::new((size, buf))
    }
}

/// Build N(0, c^2 dt) on the lattice of `spacing`.
pub fn build_gaussian_kernel(c: f64, dt: f64, spacing: f64, eps: f64) -> Result<DiffusionKernel> {
    if !(c > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidKernel(format!("need c > 0 and dt > 0, got c={c}, dt={dt}")));
    }
    DiffusionKernel::gaussian(c * dt.sqrt(), 0.0, spacing, eps)
}

/// Returns `k` with its Fourier transform at `fft_size` attached for reuse.
pub fn cache_kernel_transform(k: DiffusionKernel, fft_size: usize) -> DiffusionKernel {
    let spec = k.spectrum(fft_size);
    DiffusionKernel { cache: Some(spec), ..k }
}

/// FFT length used when convolving `n` grid points with `k`.
pub fn fft_size_for(n: usize, k: &DiffusionKernel) -> usize {
    next_fast_len(n + 2 * (k.weights.len() - 1))
}

fn check_spacing(d: &GridDistribution, k: &DiffusionKernel) -> Result<f64> {
    let h = d
        .spacing()
        .ok_or_else(|| Error::InvalidGrid("convolution needs a uniform grid".into()))?;
    if (h - k.spacing).abs() > 1e-9 * h {
        return Err(Error::InvalidGrid(format!("grid spacing {h} differs from kernel spacing {}", k.spacing)));
    }
    Ok(h)
}

/// Padded signal, the index of the first grid value inside it, and the FFT length.
fn padded(d: &GridDistribution, k: &DiffusionKernel, right_fill: f64) -> (Vec<f64>, usize) {
    let n = d.len();
    let m1 = k.weights.len() - 1;
    let size = fft_size_for(n, k);
    let extra = size - (n + 2 * m1);
    let left = m1 + extra / 2;
    let mut s = vec![0.0; size];
    s[left..left + n].copy_from_slice(d.values());
    s[left + n..].iter_mut().for_each(|v| *v = right_fill);
    (s, left)
}

fn fft_linear(signal: &[f64], k: &DiffusionKernel) -> Vec<f64> {
    let size = signal.len();
    let spec = k.spectrum(size);
    let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf, false);
    buf.iter_mut().zip(spec.1.iter()).for_each(|(a, b)| *a *= b);
    fft_in_place(&mut buf, true);
    let inv = 1.0 / size as f64;
    buf.iter().map(|c| c.re * inv).collect()
}

fn direct_linear(signal: &[f64], k: &DiffusionKernel, out_start: usize, out_len: usize) -> Vec<f64> {
    (0..out_len)
        .map(|o| {
            let p = (out_start + o) as i64;
            k.lattice_indices()
                .map(|(j, w)| signal[(p - j) as usize] * w * k.spacing)
                .sum()
        })
        .collect()
}

impl DiffusionKernel {
    fn lattice_indices(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.weights.iter().enumerate().map(move |(i, &w)| (self.first + i as i64, w))
    }
}

#[derive(Clone, Copy)]
enum Method {
    Fft,
    Direct,
}

fn convolve_impl(d: &GridDistribution, k: &DiffusionKernel, method: Method) -> Result<GridDistribution> {
    check_spacing(d, k)?;
    let h = k.spacing;
    let n = d.len();
    let out_len = n + k.weights.len() - 1;
    let start = d.lo() + k.first as f64 * h;
    match d.kind() {
        Kind::Cdf => {
            let (s, left) = padded(d, k, d.mass());
            // output point q sits at input index q + first
            let out_start = (left as i64 + k.first) as usize;
            let raw = match method {
                Method::Fft => fft_linear(&s, k)[out_start..out_start + out_len].to_vec(),
                Method::Direct => direct_linear(&s, k, out_start, out_len),
            };
            let values = settle_cdf(raw, d.mass())?;
            Ok(GridDistribution::from_uniform_parts(start, h, values, Kind::Cdf, d.mass()))
        }
        Kind::Pdf => {
            let (s, left) = padded(d, k, 0.0);
            let out_start = (left as i64 + k.first) as usize;
            let raw = match method {
                Method::Fft => fft_linear(&s, k)[out_start..out_start + out_len].to_vec(),
                Method::Direct => direct_linear(&s, k, out_start, out_len),
            };
            let min = raw.iter().cloned().fold(0.0, f64::min);
            let peak = raw.iter().cloned().fold(0.0, f64::max);
            if min < -ROUNDOFF_TOL * peak.max(1.0) {
                return Err(Error::Numerical(format!("convolution produced density {min:e}")));
            }
            let values = raw.into_iter().map(|v| v.max(0.0)).collect();
            GridDistribution::from_uniform_parts(start, h, values, Kind::Pdf, 1.0).renormalize()
        }
    }
}

/// Clamps round-off and enforces monotonicity, refusing corrections above
/// round-off size.
fn settle_cdf(mut v: Vec<f64>, mass: f64) -> Result<Vec<f64>> {
    let mut run = 0.0f64;
    let mut worst = 0.0f64;
    for x in v.iter_mut() {
        let c = x.clamp(0.0, mass).max(run);
        worst = worst.max((c - *x).abs());
        *x = c;
        run = c;
    }
    if worst > ROUNDOFF_TOL {
        return Err(Error::Numerical(format!("convolution needed a correction of {worst:e}")));
    }
    Ok(v)
}

/// Linear convolution of a CDF with the kernel. The grid is padded with 0 on
/// the left and `mass` on the right and grows by the kernel reach.
pub fn convolve_cdf(d: &GridDistribution, k: &DiffusionKernel) -> Result<GridDistribution> {
    if d.kind() != Kind::Cdf {
        return Err(Error::InvalidInput("convolve_cdf expects a CDF".into()));
    }
    convolve_impl(d, k, Method::Fft)
}

/// Linear convolution of a PDF with zero padding, renormalised to unit mass.
pub fn convolve_pdf(d: &GridDistribution, k: &DiffusionKernel) -> Result<GridDistribution> {
    if d.kind() != Kind::Pdf {
        return Err(Error::InvalidInput("convolve_pdf expects a PDF".into()));
    }
    convolve_impl(d, k, Method::Fft)
}

/// Reference O(n m) summation with the same padding rules as the FFT path.
pub fn direct_convolve(d: &GridDistribution, k: &DiffusionKernel) -> Result<GridDistribution> {
    convolve_impl(d, k, Method::Direct)
}
