//! Scalar Radon transform, filtered backprojection, and the histogram Radon
//! transform.
//!
//! `hist_radon` records, for every ray, the full distribution of values along
//! the ray instead of just the integral; taking the k-th moment of each
//! per-ray histogram recovers the Radon transform of the k-th power of the
//! field up to binning error.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::distribution::{bin_samples, moment, Histogram};
use crate::error::{Error, Result};
use crate::grid::{sample_along_ray, ScalarGrid};
use crate::ray::Ray;

/// Scalar tomographic data indexed by (theta, p), theta-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    thetas: Vec<f64>,
    ps: Vec<f64>,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn new(thetas: Vec<f64>, ps: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != thetas.len() * ps.len() {
            return Err(Error::InvalidGrid("sinogram value count mismatch".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("sinogram values must be finite".into()));
        }
        Ok(Self { thetas, ps, values })
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn ps(&self) -> &[f64] {
        &self.ps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, ti: usize, pi: usize) -> f64 {
        self.values[ti * self.ps.len() + pi]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// Uniformly spaced angles in [0, pi).
pub fn uniform_angles(n: usize) -> Vec<f64> {
    (0..n).map(|i| std::f64::consts::PI * i as f64 / n as f64).collect()
}

/// Uniformly spaced offsets spanning [-extent, extent].
pub fn uniform_offsets(n: usize, extent: f64) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| -extent + 2.0 * extent * i as f64 / (n - 1) as f64)
        .collect()
}

/// Ray quadrature step used throughout: half the grid spacing.
pub fn default_step(grid: &ScalarGrid) -> f64 {
    0.5 * grid.spacing()
}

/// Radon transform of a 2D grid: per-(theta, p) quadrature of the samples
/// along the ray, `step * sum`.
pub fn radon(grid: &ScalarGrid, thetas: &[f64], ps: &[f64]) -> Result<Sinogram> {
    if grid.ndim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: grid.ndim() });
    }
    let step = default_step(grid);
    let values: Vec<f64> = thetas
        .par_iter()
        .flat_map_iter(|&theta| {
            ps.iter().map(move |&p| (theta, p))
        })
        .map(|(theta, p)| {
            let samples = sample_along_ray(grid, &Ray::new(theta, p), step);
            step * samples.iter().map(|&(_, v)| v).sum::<f64>()
        })
        .collect();
    Sinogram::new(thetas.to_vec(), ps.to_vec(), values)
}

/// Fraction of Nyquist where the ramp filter starts its raised-cosine rolloff.
pub const RAMP_ROLLOFF: f64 = 0.8;

fn ramp_filtered(sino: &Sinogram) -> Result<Vec<Vec<f64>>> {
    let np = sino.ps.len();
    if np < 2 {
        return Err(Error::TooFew { needed: 2, got: np, what: "offsets" });
    }
    let dp = sino.ps[1] - sino.ps[0];
    for w in sino.ps.windows(2) {
        if ((w[1] - w[0]) - dp).abs() > 1e-9 * dp.abs() {
            return Err(Error::InvalidGrid("offsets must be uniformly spaced".into()));
        }
    }
    let m = (2 * np).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);

    // Band-limited ramp: the discrete impulse response of |sigma| restricted
    // to |sigma| <= pi/dp, laid out circularly, transformed back to the
    // frequency domain. Sampling |sigma_k| directly would misweight the
    // lowest frequencies and bias broad features.
    let mut kernel = vec![Complex::new(0.0, 0.0); m];
    kernel[0].re = std::f64::consts::PI / (2.0 * dp * dp);
    for j in 1..=m / 2 {
        let v = if j % 2 == 1 {
            -2.0 / (std::f64::consts::PI * (j * j) as f64 * dp * dp)
        } else {
            0.0
        };
        kernel[j].re = v;
        kernel[m - j].re = v;
    }
    fwd.process(&mut kernel);

    let sigma_nyq = std::f64::consts::PI / dp;
    let weight: Vec<f64> = (0..m)
        .map(|k| {
            let signed = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
            let sigma = 2.0 * std::f64::consts::PI * signed / (m as f64 * dp);
            let a = sigma.abs() / sigma_nyq;
            let window = if a <= RAMP_ROLLOFF {
                1.0
            } else if a <= 1.0 {
                0.5 * (1.0 + (std::f64::consts::PI * (a - RAMP_ROLLOFF) / (1.0 - RAMP_ROLLOFF)).cos())
            } else {
                0.0
            };
            kernel[k].re * dp * window / m as f64
        })
        .collect();

    let rows: Vec<Vec<f64>> = (0..sino.thetas.len())
        .into_par_iter()
        .map(|ti| {
            let mut buf = vec![Complex::new(0.0, 0.0); m];
            for (pi, c) in buf.iter_mut().take(np).enumerate() {
                c.re = sino.at(ti, pi);
            }
            fwd.process(&mut buf);
            for (c, &w) in buf.iter_mut().zip(&weight) {
                *c *= w;
            }
            inv.process(&mut buf);
            buf[..np].iter().map(|c| c.re).collect()
        })
        .collect();
    Ok(rows)
}

/// Filtered backprojection: frequency-domain ramp filter (raised-cosine
/// rolloff above [`RAMP_ROLLOFF`] of Nyquist) followed by linearly
/// interpolated backprojection onto the requested grid layout.
pub fn fbp(sino: &Sinogram, dims: &[usize; 2], origin: &[f64; 2], spacing: f64) -> Result<ScalarGrid> {
    let ntheta = sino.thetas.len();
    if ntheta < 2 {
        return Err(Error::TooFew { needed: 2, got: ntheta, what: "angles" });
    }
    let filtered = ramp_filtered(sino)?;
    let np = sino.ps.len();
    let dp = sino.ps[1] - sino.ps[0];
    let p0 = sino.ps[0];
    let scale = 0.5 / ntheta as f64;
    let (nx, ny) = (dims[0], dims[1]);
    let trig: Vec<(f64, f64)> = sino.thetas.iter().map(|&t| (t.cos(), t.sin())).collect();

    let values: Vec<f64> = (0..nx * ny)
        .into_par_iter()
        .map(|flat| {
            let i = flat / ny;
            let j = flat % ny;
            let x = origin[0] + i as f64 * spacing;
            let y = origin[1] + j as f64 * spacing;
            let mut acc = 0.0;
            for (ti, &(c, s)) in trig.iter().enumerate() {
                let p = x * c + y * s;
                let t = (p - p0) / dp;
                if t >= 0.0 && t <= (np - 1) as f64 {
                    let k = (t.floor() as usize).min(np - 2);
                    let f = t - k as f64;
                    let q = &filtered[ti];
                    acc += q[k] * (1.0 - f) + q[k + 1] * f;
                }
            }
            acc * scale
        })
        .collect();
    ScalarGrid::new(vec![nx, ny], origin.to_vec(), spacing, values)
}

/// Histogram-valued sinogram: a shared-bin histogram for every (theta, p).
#[derive(Debug, Clone)]
pub struct HistogramSinogram {
    thetas: Vec<f64>,
    ps: Vec<f64>,
    edges: Vec<f64>,
    /// (theta, p, bin), theta-major.
    mass: Vec<f64>,
    /// Total out-of-range sample counts over all rays.
    pub underflow: usize,
    pub overflow: usize,
}

impl HistogramSinogram {
    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn ps(&self) -> &[f64] {
        &self.ps
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Per-ray bin masses.
    pub fn ray_mass(&self, ti: usize, pi: usize) -> &[f64] {
        let nb = self.num_bins();
        let start = (ti * self.ps.len() + pi) * nb;
        &self.mass[start..start + nb]
    }

    /// The (theta, p) slice as a standalone histogram.
    pub fn ray_histogram(&self, ti: usize, pi: usize) -> Histogram {
        Histogram::new(self.edges.clone(), self.ray_mass(ti, pi).to_vec())
            .expect("slice masses are valid by construction")
    }
}

/// Histogram Radon transform: bin the samples of every ray of a 2D grid into
/// shared `edges`.
pub fn hist_radon(grid: &ScalarGrid, thetas: &[f64], ps: &[f64], edges: &[f64]) -> Result<HistogramSinogram> {
    if grid.ndim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: grid.ndim() });
    }
    let step = default_step(grid);
    let nb = edges.len().saturating_sub(1);
    let per_ray: Vec<(Vec<f64>, usize, usize)> = thetas
        .par_iter()
        .flat_map_iter(|&theta| ps.iter().map(move |&p| (theta, p)))
        .map(|(theta, p)| {
            let samples = sample_along_ray(grid, &Ray::new(theta, p), step);
            let b = bin_samples(&samples, step, edges)?;
            Ok((b.histogram.mass().to_vec(), b.underflow, b.overflow))
        })
        .collect::<Result<_>>()?;
    let mut mass = Vec::with_capacity(per_ray.len() * nb);
    let mut underflow = 0;
    let mut overflow = 0;
    for (m, u, o) in per_ray {
        mass.extend_from_slice(&m);
        underflow += u;
        overflow += o;
    }
    Ok(HistogramSinogram {
        thetas: thetas.to_vec(),
        ps: ps.to_vec(),
        edges: edges.to_vec(),
        mass,
        underflow,
        overflow,
    })
}

/// Per-ray k-th moments of a histogram sinogram; `k >= 1`.
pub fn moment_sinogram(hs: &HistogramSinogram, k: u32) -> Result<Sinogram> {
    if k < 1 {
        return Err(Error::ZeroMomentOrder);
    }
    let values = (0..hs.thetas.len() * hs.ps.len())
        .map(|r| {
            let h = Histogram::new(hs.edges.clone(), hs.mass[r * hs.num_bins()..(r + 1) * hs.num_bins()].to_vec())
                .expect("valid slice");
            moment(&h, k)
        })
        .collect();
    Sinogram::new(hs.thetas.clone(), hs.ps.clone(), values)
}

/// Radon transform of the unit density on the unit circle:
/// `2 / sqrt(1 - p^2)` inside `|p| < 1`, zero outside.
pub fn oracle_circle_delta(p: f64) -> Result<f64> {
    if (p.abs() - 1.0).abs() <= 1e-9 {
        return Err(Error::SingularInput(format!("|p| = 1 is the support endpoint (p = {p})")));
    }
    if p.abs() < 1.0 {
        Ok(2.0 / (1.0 - p * p).sqrt())
    } else {
        Ok(0.0)
    }
}

/// Radon plane transform of the delta line `x1 = x2 = 0`: `1/|Theta_3|`,
/// independent of the offset. `Theta` must be unit length and not normal to
/// the line.
pub fn oracle_line_delta_plane_transform(theta: &[f64; 3]) -> Result<f64> {
    let n = (theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2]).sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::NonUnitDirection(n));
    }
    if theta[2].abs() <= 1e-12 {
        return Err(Error::SingularInput("plane contains the line (Theta_3 = 0)".into()));
    }
    Ok(1.0 / theta[2].abs())
}
