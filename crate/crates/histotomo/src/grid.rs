//! Uniformly sampled scalar fields on 2D/3D axis-aligned boxes.
//!
//! A [`ScalarGrid`] stores samples at `origin + i*h` per axis, row-major with
//! the last axis fastest. Interpolation is bilinear (2D) or trilinear (3D)
//! inside the node extent and zero outside, matching the compact-support
//! assumption the transforms rely on.

use crate::error::{Error, Result};
use crate::ray::{Ray, Ray3};

/// Sanity cap on the number of stored values when reading files.
pub const MAX_GRID_VALUES: u64 = 1 << 30;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    dims: Vec<usize>,
    origin: Vec<f64>,
    spacing: f64,
    values: Vec<f64>,
}

impl ScalarGrid {
    /// Build a grid from raw parts, validating the invariants.
    pub fn new(dims: Vec<usize>, origin: Vec<f64>, spacing: f64, values: Vec<f64>) -> Result<Self> {
        let ndim = dims.len();
        if ndim != 2 && ndim != 3 {
            return Err(Error::InvalidGrid(format!("ndim must be 2 or 3, got {ndim}")));
        }
        if origin.len() != ndim {
            return Err(Error::InvalidGrid("origin length != ndim".into()));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidGrid("each axis needs at least 2 samples".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {spacing}")));
        }
        let n: usize = dims.iter().product();
        if values.len() != n {
            return Err(Error::InvalidGrid(format!(
                "value count {} != product of dims {}",
                values.len(),
                n
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index: i });
        }
        Ok(Self { dims, origin, spacing, values })
    }

    /// All-zero grid.
    pub fn zeros(dims: Vec<usize>, origin: Vec<f64>, spacing: f64) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, origin, spacing, vec![0.0; n])
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat index of a multi-index (last axis fastest).
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut flat = 0;
        for (k, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.dims[k]);
            flat = flat * self.dims[k] + i;
        }
        flat
    }

    /// Multi-index of a flat index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.ndim()];
        for k in (0..self.ndim()).rev() {
            idx[k] = flat % self.dims[k];
            flat /= self.dims[k];
        }
        idx
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let i = self.flat_index(idx);
        self.values[i] = v;
    }

    /// Physical coordinate of sample `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing
    }

    /// Physical position of a multi-index.
    pub fn position(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().enumerate().map(|(k, &i)| self.coord(k, i)).collect()
    }

    /// Node-extent bounding box: `[origin, origin + (dims-1)*h]` per axis.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let min = self.origin.clone();
        let max = self
            .origin
            .iter()
            .zip(&self.dims)
            .map(|(&o, &d)| o + (d - 1) as f64 * self.spacing)
            .collect();
        (min, max)
    }

    /// Multi-linear interpolation; zero outside the bounding box.
    pub fn interp(&self, p: &[f64]) -> f64 {
        debug_assert_eq!(p.len(), self.ndim());
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for k in 0..self.ndim() {
            let t = (p[k] - self.origin[k]) / self.spacing;
            let top = (self.dims[k] - 1) as f64;
            if t < 0.0 || t > top {
                return 0.0;
            }
            let mut i = t.floor() as usize;
            if i >= self.dims[k] - 1 {
                i = self.dims[k] - 2;
            }
            base[k] = i;
            frac[k] = t - i as f64;
        }
        match self.ndim() {
            2 => {
                let (i, j) = (base[0], base[1]);
                let (fx, fy) = (frac[0], frac[1]);
                let ny = self.dims[1];
                let v = &self.values;
                let row0 = i * ny + j;
                let row1 = (i + 1) * ny + j;
                let a = v[row0] * (1.0 - fy) + v[row0 + 1] * fy;
                let b = v[row1] * (1.0 - fy) + v[row1 + 1] * fy;
                a * (1.0 - fx) + b * fx
            }
            3 => {
                let (i, j, k) = (base[0], base[1], base[2]);
                let (fx, fy, fz) = (frac[0], frac[1], frac[2]);
                let (ny, nz) = (self.dims[1], self.dims[2]);
                let v = &self.values;
                let idx = |a: usize, b: usize, c: usize| (a * ny + b) * nz + c;
                let lerp = |u: f64, w: f64, f: f64| u * (1.0 - f) + w * f;
                let c00 = lerp(v[idx(i, j, k)], v[idx(i, j, k + 1)], fz);
                let c01 = lerp(v[idx(i, j + 1, k)], v[idx(i, j + 1, k + 1)], fz);
                let c10 = lerp(v[idx(i + 1, j, k)], v[idx(i + 1, j, k + 1)], fz);
                let c11 = lerp(v[idx(i + 1, j + 1, k)], v[idx(i + 1, j + 1, k + 1)], fz);
                lerp(lerp(c00, c01, fy), lerp(c10, c11, fy), fx)
            }
            _ => unreachable!(),
        }
    }

    /// Apply `f` to every stored value.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            dims: self.dims.clone(),
            origin: self.origin.clone(),
            spacing: self.spacing,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// True when dims, origin and spacing agree (values may differ).
    pub fn same_layout(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.spacing == other.spacing
            && self
                .origin
                .iter()
                .zip(&other.origin)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * self.spacing)
    }
}

/// Sample an analytic function on the box `[min, max]` with `dims` nodes per
/// axis. The box must be consistent with a single uniform spacing; the first
/// axis defines it and the others must agree to 1e-9 relative.
pub fn grid_from_function<F>(min: &[f64], max: &[f64], dims: &[usize], sampler: F) -> Result<ScalarGrid>
where
    F: Fn(&[f64]) -> f64,
{
    let ndim = dims.len();
    if min.len() != ndim || max.len() != ndim {
        return Err(Error::InvalidGrid("box corner length != dims length".into()));
    }
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::InvalidGrid("each axis needs at least 2 samples".into()));
    }
    let h = (max[0] - min[0]) / (dims[0] - 1) as f64;
    if !(h > 0.0) {
        return Err(Error::InvalidGrid("box must have positive extent".into()));
    }
    for k in 1..ndim {
        let hk = (max[k] - min[k]) / (dims[k] - 1) as f64;
        if (hk - h).abs() > 1e-9 * h {
            return Err(Error::InvalidGrid(format!(
                "axis {k} spacing {hk} differs from axis 0 spacing {h}"
            )));
        }
    }
    let n: usize = dims.iter().product();
    let mut values = vec![0.0; n];
    let mut idx = vec![0usize; ndim];
    let mut pos = vec![0.0f64; ndim];
    for (flat, slot) in values.iter_mut().enumerate() {
        let mut rem = flat;
        for k in (0..ndim).rev() {
            idx[k] = rem % dims[k];
            rem /= dims[k];
        }
        for k in 0..ndim {
            pos[k] = min[k] + idx[k] as f64 * h;
        }
        let v = sampler(&pos);
        if !v.is_finite() {
            return Err(Error::NonFiniteSample { index: flat });
        }
        *slot = v;
    }
    ScalarGrid::new(dims.to_vec(), min.to_vec(), h, values)
}

/// Intersection of the parametric line `p(s) = base + s*dir` with the box,
/// returned as an `s` interval, or `None` when they miss.
fn box_interval(base: &[f64], dir: &[f64], min: &[f64], max: &[f64]) -> Option<(f64, f64)> {
    let mut s0 = f64::NEG_INFINITY;
    let mut s1 = f64::INFINITY;
    for k in 0..base.len() {
        if dir[k].abs() < 1e-300 {
            if base[k] < min[k] || base[k] > max[k] {
                return None;
            }
        } else {
            let a = (min[k] - base[k]) / dir[k];
            let b = (max[k] - base[k]) / dir[k];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            s0 = s0.max(lo);
            s1 = s1.min(hi);
        }
    }
    if s0 < s1 {
        Some((s0, s1))
    } else {
        None
    }
}

fn sample_line(grid: &ScalarGrid, base: &[f64], dir: &[f64], step: f64) -> Vec<(f64, f64)> {
    assert!(step > 0.0, "step must be positive");
    let (min, max) = grid.bounding_box();
    let Some((s0, s1)) = box_interval(base, dir, &min, &max) else {
        return Vec::new();
    };
    let n = ((s1 - s0) / step).floor() as usize;
    if n == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n);
    let mut p = vec![0.0f64; base.len()];
    for i in 0..n {
        // midpoint rule over [s0, s0 + n*step]
        let s = s0 + (i as f64 + 0.5) * step;
        for k in 0..p.len() {
            p[k] = base[k] + s * dir[k];
        }
        out.push((s, grid.interp(&p)));
    }
    out
}

/// Uniform samples of a 2D grid along the line of `ray`, `(s, value)` pairs.
///
/// The line is `p*Theta + s*Theta_perp` with `Theta = (cos t, sin t)` and
/// `Theta_perp = (-sin t, cos t)`; samples cover the intersection with the
/// grid's bounding box. A ray that misses the box yields an empty list.
pub fn sample_along_ray(grid: &ScalarGrid, ray: &Ray, step: f64) -> Vec<(f64, f64)> {
    assert_eq!(grid.ndim(), 2, "sample_along_ray needs a 2D grid");
    let theta = ray.theta();
    let p = ray.p();
    let base = [p * theta.cos(), p * theta.sin()];
    let dir = [-theta.sin(), theta.cos()];
    sample_line(grid, &base, &dir, step)
}

/// Uniform samples of a 3D grid along `ray`, `(s, value)` pairs.
pub fn sample_along_ray3(grid: &ScalarGrid, ray: &Ray3, step: f64) -> Vec<(f64, f64)> {
    assert_eq!(grid.ndim(), 3, "sample_along_ray3 needs a 3D grid");
    sample_line(grid, ray.base(), ray.direction(), step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn constant_field_sampling() {
        let g = grid_from_function(&[0.0, 0.0], &[1.0, 1.0], &[4, 4], |_| 1.0).unwrap();
        assert!(g.values().iter().all(|&v| v == 1.0));
        assert_eq!(g.spacing(), 1.0 / 3.0);
    }

    #[test]
    fn fig2_cubic_value_at_zero() {
        // f(x) = (x-1)(x-3)(x-6) + 20 sampled on [0,7] with 701 nodes; f(0) = 2.
        let f = |x: f64| (x - 1.0) * (x - 3.0) * (x - 6.0) + 20.0;
        let g = grid_from_function(&[0.0, 0.0], &[7.0, 7.0], &[701, 701], |p| f(p[0])).unwrap();
        assert!((g.at(&[0, 0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn paraboloid_zero_at_origin() {
        let g = grid_from_function(&[-1.0, -1.0], &[1.0, 1.0], &[5, 5], |p| {
            p[0] * p[0] + p[1] * p[1]
        })
        .unwrap();
        assert_eq!(g.at(&[2, 2]), 0.0);
    }

    #[test]
    fn rejects_non_finite_sampler() {
        let r = grid_from_function(&[0.0, 0.0], &[1.0, 1.0], &[3, 3], |p| {
            if p[0] > 0.4 && p[1] > 0.9 {
                f64::NAN
            } else {
                0.0
            }
        });
        match r {
            Err(Error::NonFiniteSample { index }) => assert_eq!(index, 5),
            other => panic!("expected NonFiniteSample, got {other:?}"),
        }
    }

    #[test]
    fn disk_chord_sampling() {
        let g = grid_from_function(&[-1.5, -1.5], &[1.5, 1.5], &[601, 601], |p| {
            if p[0] * p[0] + p[1] * p[1] <= 1.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let samples = sample_along_ray(&g, &Ray::new(0.0, 0.0), 1e-3);
        for &(s, v) in &samples {
            if s.abs() < 0.99 {
                assert!(v > 0.5, "inside disk at s={s}: {v}");
            }
            if s.abs() > 1.01 {
                assert!(v < 0.5, "outside disk at s={s}: {v}");
            }
        }
    }

    #[test]
    fn ray_missing_box_is_empty() {
        let g = grid_from_function(&[-1.0, -1.0], &[1.0, 1.0], &[11, 11], |_| 1.0).unwrap();
        assert!(sample_along_ray(&g, &Ray::new(0.0, 5.0), 0.01).is_empty());
    }

    #[test]
    fn orientation_convention_x_field() {
        // f(x,y) = x along the line theta = pi/2, p = 0.3 (the line y = 0.3):
        // position is (-s, 0.3), so the sampled value equals -s.
        let g = grid_from_function(&[-1.0, -1.0], &[1.0, 1.0], &[201, 201], |p| p[0]).unwrap();
        let samples = sample_along_ray(&g, &Ray::new(FRAC_PI_2, 0.3), 0.05);
        assert!(!samples.is_empty());
        for &(s, v) in &samples {
            assert!((v - (-s)).abs() < 1e-9, "s={s} v={v}");
        }
        // brute-force point check of the same convention
        let theta: f64 = FRAC_PI_2;
        let (s, p) = (0.25, 0.3);
        let x = p * theta.cos() - s * theta.sin();
        assert!((x - (-s)).abs() < 1e-15);
    }

    #[test]
    fn chord_length_quadrature() {
        let g = grid_from_function(&[-1.0, -1.0], &[1.0, 1.0], &[51, 51], |_| 1.0).unwrap();
        let step = 1e-3;
        for &(theta, p, chord) in &[(0.0, 0.0, 2.0), (0.0, 0.5, 2.0), (PI / 4.0, 0.0, 2.0 * 2f64.sqrt())] {
            let samples = sample_along_ray(&g, &Ray::new(theta, p), step);
            let total: f64 = samples.iter().map(|_| step).sum();
            assert!(
                (total - chord).abs() <= 2.0 * step,
                "theta={theta} p={p}: {total} vs {chord}"
            );
        }
    }

    #[test]
    fn interp_matches_nodes_and_vanishes_outside() {
        let g = grid_from_function(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &[5, 5, 5], |p| {
            p[0] + 2.0 * p[1] + 3.0 * p[2]
        })
        .unwrap();
        assert!((g.interp(&[0.5, 0.25, 0.75]) - (0.5 + 0.5 + 2.25)).abs() < 1e-12);
        assert_eq!(g.interp(&[1.5, 0.5, 0.5]), 0.0);
        assert!((g.interp(&[1.0, 1.0, 1.0]) - 6.0).abs() < 1e-12);
    }
}
