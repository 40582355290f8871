//! Recovery of a potential velocity field from the second moment of its
//! histogram longitudinal ray transform.
//!
//! For a purely potential field `f = du`, the second moment of the per-ray
//! value distribution equals the LRT of `du (.) du`. Fitting a rank-2 field
//! to that data determines it only up to potential parts, but the Kroner
//! operator annihilates exactly those, and `K = 2 Adj(d^2 u)` inverts
//! pointwise to the Hessian up to sign wherever `det K` is nonzero. The
//! trace then feeds a Poisson solve for `u` itself, leaving one global sign
//! undetermined.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::ScalarGrid;
use crate::ray::Ray3;
use crate::sym::SymTensorField;
use crate::tensor::{kroner_rank2, RayHistogramSinogram};

/// Plain 3x3 matrix.
pub type Mat3 = [[f64; 3]; 3];

pub fn det3(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub fn trace3(a: &Mat3) -> f64 {
    a[0][0] + a[1][1] + a[2][2]
}

pub fn mat_mul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for (k, bk) in b.iter().enumerate() {
                c[i][j] += a[i][k] * bk[j];
            }
        }
    }
    c
}

/// Adjugate (transpose of the cofactor matrix): `A Adj(A) = det(A) I`.
pub fn adjugate3(a: &Mat3) -> Mat3 {
    let cof = |r1: usize, r2: usize, c1: usize, c2: usize| {
        a[r1][c1] * a[r2][c2] - a[r1][c2] * a[r2][c1]
    };
    [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ]
}

/// Pointwise inversion of `K = 2 Adj(H)`: both sign candidates
/// `+-sqrt(det K / 2) K^{-1}`, or `None` when `det K <= tau_det` (the
/// degenerate case, including negative determinants that noise can
/// produce).
pub fn hessian_from_kroner(k: &Mat3, tau_det: f64) -> Option<(Mat3, Mat3)> {
    let det = det3(k);
    if det <= tau_det {
        return None;
    }
    let scale = (0.5 * det).sqrt() / det;
    let adj = adjugate3(k);
    let mut plus = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            plus[i][j] = scale * adj[i][j];
        }
    }
    let mut minus = plus;
    for row in &mut minus {
        for v in row.iter_mut() {
            *v = -*v;
        }
    }
    Some((plus, minus))
}

/// Dirichlet Poisson problem on a 3D grid: `laplacian(u) = rhs` inside,
/// `u = boundary` on the grid boundary (only boundary entries of the
/// `boundary` grid are read).
#[derive(Debug, Clone)]
pub struct PoissonProblem {
    pub rhs: ScalarGrid,
    pub boundary: ScalarGrid,
}

impl PoissonProblem {
    pub fn new(rhs: ScalarGrid, boundary: ScalarGrid) -> Result<Self> {
        if rhs.ndim() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, got: rhs.ndim() });
        }
        if !rhs.same_layout(&boundary) {
            return Err(Error::InvalidGrid("rhs and boundary layouts differ".into()));
        }
        Ok(Self { rhs, boundary })
    }

    /// Zero Dirichlet data.
    pub fn with_zero_boundary(rhs: ScalarGrid) -> Result<Self> {
        let boundary = rhs.map(|_| 0.0);
        Self::new(rhs, boundary)
    }
}

/// Solve with the 7-point second-order stencil by conjugate gradients to a
/// relative residual of `tol`.
pub fn poisson_solve(problem: &PoissonProblem, tol: f64, max_iter: usize) -> Result<ScalarGrid> {
    let rhs = &problem.rhs;
    let (nx, ny, nz) = (rhs.dims()[0], rhs.dims()[1], rhs.dims()[2]);
    if nx < 3 || ny < 3 || nz < 3 {
        return Err(Error::TooFew { needed: 3, got: nx.min(ny).min(nz), what: "grid nodes per axis" });
    }
    let h2 = rhs.spacing() * rhs.spacing();
    let (inx, iny, inz) = (nx - 2, ny - 2, nz - 2);
    let n = inx * iny * inz;
    let iidx = |i: usize, j: usize, k: usize| (i * iny + j) * inz + k;
    let gidx = |i: usize, j: usize, k: usize| (i * ny + j) * nz + k;

    // b = -rhs + boundary contributions of -laplacian
    let bvals = problem.boundary.values();
    let mut b = vec![0.0; n];
    for i in 0..inx {
        for j in 0..iny {
            for k in 0..inz {
                let (gi, gj, gk) = (i + 1, j + 1, k + 1);
                let mut acc = -rhs.values()[gidx(gi, gj, gk)];
                if gi == 1 {
                    acc += bvals[gidx(0, gj, gk)] / h2;
                }
                if gi == nx - 2 {
                    acc += bvals[gidx(nx - 1, gj, gk)] / h2;
                }
                if gj == 1 {
                    acc += bvals[gidx(gi, 0, gk)] / h2;
                }
                if gj == ny - 2 {
                    acc += bvals[gidx(gi, ny - 1, gk)] / h2;
                }
                if gk == 1 {
                    acc += bvals[gidx(gi, gj, 0)] / h2;
                }
                if gk == nz - 2 {
                    acc += bvals[gidx(gi, gj, nz - 1)] / h2;
                }
                b[iidx(i, j, k)] = acc;
            }
        }
    }

    // A x = (6x - sum of interior neighbours) / h^2, SPD
    let apply = |x: &[f64], out: &mut [f64]| {
        out.par_iter_mut().enumerate().for_each(|(flat, o)| {
            let k = flat % inz;
            let j = (flat / inz) % iny;
            let i = flat / (inz * iny);
            let mut acc = 6.0 * x[flat];
            if i > 0 {
                acc -= x[flat - iny * inz];
            }
            if i + 1 < inx {
                acc -= x[flat + iny * inz];
            }
            if j > 0 {
                acc -= x[flat - inz];
            }
            if j + 1 < iny {
                acc -= x[flat + inz];
            }
            if k > 0 {
                acc -= x[flat - 1];
            }
            if k + 1 < inz {
                acc -= x[flat + 1];
            }
            *o = acc / h2;
        });
    };

    let dot = |a: &[f64], c: &[f64]| -> f64 { a.iter().zip(c).map(|(x, y)| x * y).sum() };
    let bnorm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rr = dot(&r, &r);
        let mut converged = false;
        for _ in 0..max_iter {
            if rr.sqrt() <= tol * bnorm {
                converged = true;
                break;
            }
            apply(&p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            for ((xv, pv), (rv, apv)) in x.iter_mut().zip(&p).zip(r.iter_mut().zip(&ap)) {
                *xv += alpha * pv;
                *rv -= alpha * apv;
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for (pv, rv) in p.iter_mut().zip(&r) {
                *pv = rv + beta * *pv;
            }
        }
        if !converged && rr.sqrt() > tol * bnorm {
            return Err(Error::NoConvergence { residual: rr.sqrt() / bnorm, iterations: max_iter });
        }
    }

    // assemble boundary + interior
    let mut out = problem.boundary.clone();
    for i in 0..inx {
        for j in 0..iny {
            for k in 0..inz {
                let v = x[iidx(i, j, k)];
                out.values_mut()[gidx(i + 1, j + 1, k + 1)] = v;
            }
        }
    }
    Ok(out)
}

/// Per-ray second moments of a histogram LRT sinogram; for `f = du` this is
/// the LRT of `du (.) du` up to binning error.
pub fn second_moment_lrt(hs: &RayHistogramSinogram) -> Result<Vec<f64>> {
    hs.moments(2)
}

/// Settings for the regularized least-squares LRT fit.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Tikhonov weight on the squared gradient of the components.
    pub lambda: f64,
    /// CG stop: relative residual of the normal equations.
    pub tol: f64,
    pub max_iter: usize,
    /// Quadrature step of the forward operator.
    pub step: f64,
}

impl FitConfig {
    pub fn for_grid(template: &ScalarGrid) -> Self {
        FitConfig {
            lambda: 1e-3,
            tol: 1e-8,
            max_iter: 200,
            step: 0.5 * template.spacing(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub iterations: usize,
    pub relative_residual: f64,
    /// Set when the ray set has fewer than 60 distinct directions; carries a
    /// crude condition estimate of the regularized normal operator.
    pub warning: Option<String>,
}

/// Minimum number of distinct ray directions below which the fit warns.
pub const MIN_FIT_DIRECTIONS: usize = 60;

struct RayGeometry {
    base: [f64; 3],
    dir: [f64; 3],
    s0: f64,
    count: usize,
    weights: [f64; 6],
}

/// Linearized LRT geometry over a fixed grid layout: sample positions and
/// per-component contraction weights per ray.
struct LrtOperator {
    dims: [usize; 3],
    origin: [f64; 3],
    spacing: f64,
    step: f64,
    rays: Vec<RayGeometry>,
}

impl LrtOperator {
    fn new(template: &ScalarGrid, rays: &[Ray3], step: f64) -> Self {
        let dims = [template.dims()[0], template.dims()[1], template.dims()[2]];
        let origin = [template.origin()[0], template.origin()[1], template.origin()[2]];
        let spacing = template.spacing();
        let (bmin, bmax) = template.bounding_box();
        let field_index = crate::sym::component_indices(2, 3);
        let geoms = rays
            .iter()
            .map(|ray| {
                let base = *ray.base();
                let dir = *ray.direction();
                let mut s0 = f64::NEG_INFINITY;
                let mut s1 = f64::INFINITY;
                let mut miss = false;
                for k in 0..3 {
                    if dir[k].abs() < 1e-300 {
                        if base[k] < bmin[k] || base[k] > bmax[k] {
                            miss = true;
                        }
                    } else {
                        let a = (bmin[k] - base[k]) / dir[k];
                        let b = (bmax[k] - base[k]) / dir[k];
                        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                        s0 = s0.max(lo);
                        s1 = s1.min(hi);
                    }
                }
                let count = if miss || s1 <= s0 {
                    0
                } else {
                    ((s1 - s0) / step).floor() as usize
                };
                let mut weights = [0.0; 6];
                for (slot, idx) in field_index.iter().enumerate() {
                    let mult = if idx[0] == idx[1] { 1.0 } else { 2.0 };
                    weights[slot] = mult * dir[idx[0]] * dir[idx[1]];
                }
                RayGeometry { base, dir, s0, count, weights }
            })
            .collect();
        LrtOperator {
            dims,
            origin,
            spacing,
            step,
            rays: geoms,
        }
    }

    fn voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    fn cell(&self, pos: &[f64; 3]) -> ([usize; 3], [f64; 3]) {
        let mut baseidx = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for k in 0..3 {
            let t = (pos[k] - self.origin[k]) / self.spacing;
            let top = (self.dims[k] - 1) as f64;
            let t = t.clamp(0.0, top);
            let mut i = t.floor() as usize;
            if i >= self.dims[k] - 1 {
                i = self.dims[k] - 2;
            }
            baseidx[k] = i;
            frac[k] = t - i as f64;
        }
        (baseidx, frac)
    }

    /// y = A x where x is comp-major flattened (6 * voxels).
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        let n = self.voxels();
        let (ny, nz) = (self.dims[1], self.dims[2]);
        out.par_iter_mut().enumerate().for_each(|(r, o)| {
            let g = &self.rays[r];
            let mut acc = 0.0;
            for i in 0..g.count {
                let s = g.s0 + (i as f64 + 0.5) * self.step;
                let pos = [
                    g.base[0] + s * g.dir[0],
                    g.base[1] + s * g.dir[1],
                    g.base[2] + s * g.dir[2],
                ];
                let (b, f) = self.cell(&pos);
                let i000 = (b[0] * ny + b[1]) * nz + b[2];
                let w = [
                    (1.0 - f[0]) * (1.0 - f[1]) * (1.0 - f[2]),
                    (1.0 - f[0]) * (1.0 - f[1]) * f[2],
                    (1.0 - f[0]) * f[1] * (1.0 - f[2]),
                    (1.0 - f[0]) * f[1] * f[2],
                    f[0] * (1.0 - f[1]) * (1.0 - f[2]),
                    f[0] * (1.0 - f[1]) * f[2],
                    f[0] * f[1] * (1.0 - f[2]),
                    f[0] * f[1] * f[2],
                ];
                let offs = [
                    i000,
                    i000 + 1,
                    i000 + nz,
                    i000 + nz + 1,
                    i000 + ny * nz,
                    i000 + ny * nz + 1,
                    i000 + ny * nz + nz,
                    i000 + ny * nz + nz + 1,
                ];
                for (slot, &cw) in g.weights.iter().enumerate() {
                    if cw == 0.0 {
                        continue;
                    }
                    let comp = &x[slot * n..(slot + 1) * n];
                    let mut v = 0.0;
                    for c in 0..8 {
                        v += w[c] * comp[offs[c]];
                    }
                    acc += cw * v;
                }
            }
            *o = acc * self.step;
        });
    }

    /// x += A^T r, deterministic chunked accumulation.
    fn adjoint(&self, r: &[f64], out: &mut [f64]) {
        let n = self.voxels();
        let (ny, nz) = (self.dims[1], self.dims[2]);
        const CHUNKS: usize = 16;
        let chunk_len = self.rays.len().div_ceil(CHUNKS);
        let partials: Vec<Vec<f64>> = (0..CHUNKS)
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; 6 * n];
                let lo = c * chunk_len;
                let hi = ((c + 1) * chunk_len).min(self.rays.len());
                for ri in lo..hi {
                    let g = &self.rays[ri];
                    let rv = r[ri] * self.step;
                    if rv == 0.0 || g.count == 0 {
                        continue;
                    }
                    for i in 0..g.count {
                        let s = g.s0 + (i as f64 + 0.5) * self.step;
                        let pos = [
                            g.base[0] + s * g.dir[0],
                            g.base[1] + s * g.dir[1],
                            g.base[2] + s * g.dir[2],
                        ];
                        let (b, f) = self.cell(&pos);
                        let i000 = (b[0] * ny + b[1]) * nz + b[2];
                        let w = [
                            (1.0 - f[0]) * (1.0 - f[1]) * (1.0 - f[2]),
                            (1.0 - f[0]) * (1.0 - f[1]) * f[2],
                            (1.0 - f[0]) * f[1] * (1.0 - f[2]),
                            (1.0 - f[0]) * f[1] * f[2],
                            f[0] * (1.0 - f[1]) * (1.0 - f[2]),
                            f[0] * (1.0 - f[1]) * f[2],
                            f[0] * f[1] * (1.0 - f[2]),
                            f[0] * f[1] * f[2],
                        ];
                        let offs = [
                            i000,
                            i000 + 1,
                            i000 + nz,
                            i000 + nz + 1,
                            i000 + ny * nz,
                            i000 + ny * nz + 1,
                            i000 + ny * nz + nz,
                            i000 + ny * nz + nz + 1,
                        ];
                        for (slot, &cw) in g.weights.iter().enumerate() {
                            if cw == 0.0 {
                                continue;
                            }
                            let comp = &mut acc[slot * n..(slot + 1) * n];
                            let rw = rv * cw;
                            for c in 0..8 {
                                comp[offs[c]] += rw * w[c];
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        for part in partials {
            for (o, v) in out.iter_mut().zip(part) {
                *o += v;
            }
        }
    }

    /// out += lambda * (L^T L) x, the graph Laplacian of each component.
    fn add_regularization(&self, lambda: f64, x: &[f64], out: &mut [f64]) {
        let n = self.voxels();
        let (nx, ny, nz) = (self.dims[0], self.dims[1], self.dims[2]);
        for slot in 0..6 {
            let comp = &x[slot * n..(slot + 1) * n];
            let dst = &mut out[slot * n..(slot + 1) * n];
            dst.par_iter_mut().enumerate().for_each(|(flat, o)| {
                let k = flat % nz;
                let j = (flat / nz) % ny;
                let i = flat / (ny * nz);
                let mut acc = 0.0;
                if i > 0 {
                    acc += comp[flat] - comp[flat - ny * nz];
                }
                if i + 1 < nx {
                    acc += comp[flat] - comp[flat + ny * nz];
                }
                if j > 0 {
                    acc += comp[flat] - comp[flat - nz];
                }
                if j + 1 < ny {
                    acc += comp[flat] - comp[flat + nz];
                }
                if k > 0 {
                    acc += comp[flat] - comp[flat - 1];
                }
                if k + 1 < nz {
                    acc += comp[flat] - comp[flat + 1];
                }
                *o += lambda * acc;
            });
        }
    }
}

/// Least-squares fit of a rank-2 symmetric field to scalar LRT data:
/// minimizes `sum_rays (lrt(g) - data)^2 + lambda |grad g|^2` by conjugate
/// gradients on the normal equations.
///
/// The potential part of the true field is invisible to the data, so only
/// quantities that annihilate potential fields (the Kroner tensor in
/// particular) are recovered reliably.
pub fn fit_rank2_from_lrt(
    data: &[f64],
    rays: &[Ray3],
    template: &ScalarGrid,
    cfg: &FitConfig,
) -> Result<(SymTensorField, FitReport)> {
    if template.ndim() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: template.ndim() });
    }
    if data.len() != rays.len() {
        return Err(Error::InvalidGrid(format!(
            "{} data values for {} rays",
            data.len(),
            rays.len()
        )));
    }
    let op = LrtOperator::new(template, rays, cfg.step);
    let n = op.voxels();
    let total = 6 * n;

    // crude direction count for the under-determination warning
    let mut dirs: Vec<[i64; 3]> = rays
        .iter()
        .map(|r| {
            let d = r.direction();
            [
                (d[0] * 1e6).round() as i64,
                (d[1] * 1e6).round() as i64,
                (d[2] * 1e6).round() as i64,
            ]
        })
        .collect();
    dirs.sort_unstable();
    dirs.dedup();
    let distinct_dirs = dirs.len();

    let normal = |x: &[f64], tmp_rays: &mut [f64], out: &mut [f64]| {
        op.forward(x, tmp_rays);
        out.iter_mut().for_each(|v| *v = 0.0);
        op.adjoint(tmp_rays, out);
        op.add_regularization(cfg.lambda, x, out);
    };

    let mut b = vec![0.0; total];
    op.adjoint(data, &mut b);
    let dot = |a: &[f64], c: &[f64]| -> f64 { a.iter().zip(c).map(|(x, y)| x * y).sum() };
    let bnorm = dot(&b, &b).sqrt();

    let mut x = vec![0.0; total];
    let mut iterations = 0;
    let mut rel = 0.0;
    if bnorm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; total];
        let mut tmp_rays = vec![0.0; rays.len()];
        let mut rr = dot(&r, &r);
        for it in 0..cfg.max_iter {
            rel = rr.sqrt() / bnorm;
            if rel <= cfg.tol {
                break;
            }
            normal(&p, &mut tmp_rays, &mut ap);
            let alpha = rr / dot(&p, &ap);
            for ((xv, pv), (rv, apv)) in x.iter_mut().zip(&p).zip(r.iter_mut().zip(&ap)) {
                *xv += alpha * pv;
                *rv -= alpha * apv;
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for (pv, rv) in p.iter_mut().zip(&r) {
                *pv = rv + beta * *pv;
            }
            iterations = it + 1;
        }
        rel = rr.sqrt() / bnorm;
    }

    let warning = if distinct_dirs < MIN_FIT_DIRECTIONS {
        // power iteration for the largest eigenvalue of the normal operator;
        // lambda bounds the smallest from below
        let mut v = vec![0.0; total];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5;
        }
        let mut tmp_rays = vec![0.0; rays.len()];
        let mut w = vec![0.0; total];
        let mut eig = 0.0;
        for _ in 0..8 {
            let nv = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|a| *a /= nv);
            normal(&v, &mut tmp_rays, &mut w);
            eig = dot(&v, &w);
            std::mem::swap(&mut v, &mut w);
        }
        Some(format!(
            "only {distinct_dirs} distinct directions (< {MIN_FIT_DIRECTIONS}); condition estimate {:.3e}",
            eig / cfg.lambda
        ))
    } else {
        None
    };

    let mut field = SymTensorField::zeros_like_grid(2, template)?;
    for slot in 0..6 {
        field
            .comp_by_slot_mut(slot)
            .values_mut()
            .copy_from_slice(&x[slot * n..(slot + 1) * n]);
    }
    Ok((
        field,
        FitReport {
            iterations,
            relative_residual: rel,
            warning,
        },
    ))
}

/// Forward LRT of a rank-2 field through the same linearized operator the
/// fit uses (handy for building synthetic data consistently).
pub fn lrt_forward(field: &SymTensorField, rays: &[Ray3], step: f64) -> Result<Vec<f64>> {
    if field.rank() != 2 || field.ndim() != 3 {
        return Err(Error::UnsupportedRank(field.rank()));
    }
    let op = LrtOperator::new(field.template(), rays, step);
    let n = op.voxels();
    let mut x = vec![0.0; 6 * n];
    for slot in 0..6 {
        x[slot * n..(slot + 1) * n].copy_from_slice(field.comp_by_slot(slot).values());
    }
    let mut out = vec![0.0; rays.len()];
    op.forward(&x, &mut out);
    Ok(out)
}

/// Pipeline settings for [`recover_potential`].
#[derive(Debug, Clone)]
pub struct DopplerConfig {
    pub fit: FitConfig,
    /// `tau_det = tau_det_factor * median(||K||_F over support)^3`.
    pub tau_det_factor: f64,
    /// Voxels with `||K||_F` below this fraction of the maximum are treated
    /// as outside the field support.
    pub support_rel_threshold: f64,
    /// Fail when degenerate voxels exceed this fraction of the support.
    pub max_degenerate_frac: f64,
    /// Binomial smoothing passes applied to the Kroner components before the
    /// pointwise inversion; `det K` is cubic in the noise, so a little
    /// denoising buys a lot of sign stability.
    pub kroner_smoothing: usize,
    pub poisson_tol: f64,
    pub poisson_max_iter: usize,
}

impl DopplerConfig {
    pub fn for_grid(template: &ScalarGrid) -> Self {
        DopplerConfig {
            fit: FitConfig::for_grid(template),
            tau_det_factor: 1e-8,
            support_rel_threshold: 0.1,
            max_degenerate_frac: 0.2,
            kroner_smoothing: 2,
            poisson_tol: 1e-10,
            poisson_max_iter: 20_000,
        }
    }
}

/// Separable 3-point binomial smoothing, `passes` sweeps per axis.
fn smooth_grid(g: &ScalarGrid, passes: usize) -> ScalarGrid {
    let mut cur = g.clone();
    let dims = g.dims().to_vec();
    for _ in 0..passes {
        for axis in 0..dims.len() {
            let stride: usize = dims[axis + 1..].iter().product();
            let n_axis = dims[axis];
            let vin = cur.values().to_vec();
            for (flat, slot) in cur.values_mut().iter_mut().enumerate() {
                let i = (flat / stride) % n_axis;
                let c = vin[flat];
                let l = if i > 0 { vin[flat - stride] } else { c };
                let r = if i + 1 < n_axis { vin[flat + stride] } else { c };
                *slot = 0.25 * l + 0.5 * c + 0.25 * r;
            }
        }
    }
    cur
}

#[derive(Debug, Clone)]
pub struct DopplerRecovery {
    /// Recovered potential, one global sign representative, zero boundary.
    pub u: ScalarGrid,
    pub fit_report: FitReport,
    /// Fraction of the support where `det K` was degenerate.
    pub degenerate_frac: f64,
    /// Per-voxel mask of degenerate support voxels.
    pub degenerate_mask: Vec<bool>,
}

fn frob_norm(m: &Mat3) -> f64 {
    let mut s = 0.0;
    for row in m {
        for v in row {
            s += v * v;
        }
    }
    s.sqrt()
}

fn mat_at(k: &SymTensorField, flat: usize) -> Mat3 {
    let g = |i: usize, j: usize| k.comp(&[i, j]).values()[flat];
    [
        [g(0, 0), g(0, 1), g(0, 2)],
        [g(1, 0), g(1, 1), g(1, 2)],
        [g(2, 0), g(2, 1), g(2, 2)],
    ]
}

fn inner(a: &Mat3, b: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

/// Recover the scalar potential `u` (up to a global sign) from the second
/// moment of the histogram LRT of `f = du`.
///
/// Steps: per-ray second moments -> regularized LRT fit of `du (.) du` ->
/// Kroner tensor -> pointwise Hessian candidates -> sign-consistent trace by
/// a flood fill in decreasing `|det K|` order -> Poisson solve with zero
/// boundary. Degenerate voxels inside the support take their trace from the
/// nearest regular voxel; more than `max_degenerate_frac` of them is an
/// error.
pub fn recover_potential(
    hs: &RayHistogramSinogram,
    template: &ScalarGrid,
    cfg: &DopplerConfig,
) -> Result<DopplerRecovery> {
    let m2 = second_moment_lrt(hs)?;
    let n = template.len();
    // numerically zero data (an atom sitting at a bin centre still leaves
    // midpoint rounding residue) recovers the zero potential outright
    let (bmin, bmax) = template.bounding_box();
    let diag: f64 = bmin
        .iter()
        .zip(&bmax)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    if m2.iter().all(|v| v.abs() <= 1e-20 * (1.0 + diag)) {
        return Ok(DopplerRecovery {
            u: template.map(|_| 0.0),
            fit_report: FitReport {
                iterations: 0,
                relative_residual: 0.0,
                warning: None,
            },
            degenerate_frac: 0.0,
            degenerate_mask: vec![false; n],
        });
    }
    let (g_fit, fit_report) = fit_rank2_from_lrt(&m2, hs.rays(), template, &cfg.fit)?;
    let k_raw = kroner_rank2(&g_fit)?;
    let k = if cfg.kroner_smoothing > 0 {
        let comps = (0..k_raw.num_components())
            .map(|s| smooth_grid(k_raw.comp_by_slot(s), cfg.kroner_smoothing))
            .collect();
        SymTensorField::from_components(2, comps)?
    } else {
        k_raw
    };

    let kmats: Vec<Mat3> = (0..n).map(|flat| mat_at(&k, flat)).collect();
    let norms: Vec<f64> = kmats.iter().map(frob_norm).collect();
    let max_norm = norms.iter().cloned().fold(0.0f64, f64::max);
    if max_norm == 0.0 {
        return Ok(DopplerRecovery {
            u: template.map(|_| 0.0),
            fit_report,
            degenerate_frac: 0.0,
            degenerate_mask: vec![false; n],
        });
    }
    let support: Vec<bool> = norms
        .iter()
        .map(|&v| v >= cfg.support_rel_threshold * max_norm)
        .collect();
    let mut support_norms: Vec<f64> = norms
        .iter()
        .zip(&support)
        .filter(|&(_, &s)| s)
        .map(|(&v, _)| v)
        .collect();
    support_norms.sort_by(|a, b| a.total_cmp(b));
    let median_norm = support_norms[support_norms.len() / 2];
    let tau_det = cfg.tau_det_factor * median_norm.powi(3);

    // pointwise Hessian candidates (positive-branch representative)
    let mut cand: Vec<Option<Mat3>> = vec![None; n];
    let mut degenerate_mask = vec![false; n];
    let mut degenerate = 0usize;
    let mut support_count = 0usize;
    for flat in 0..n {
        if !support[flat] {
            continue;
        }
        support_count += 1;
        match hessian_from_kroner(&kmats[flat], tau_det) {
            Some((plus, _)) => cand[flat] = Some(plus),
            None => {
                degenerate_mask[flat] = true;
                degenerate += 1;
            }
        }
    }
    let degenerate_frac = degenerate as f64 / support_count.max(1) as f64;
    if degenerate_frac > cfg.max_degenerate_frac {
        return Err(Error::DegenerateRegion {
            got: 100.0 * degenerate_frac,
            limit: 100.0 * cfg.max_degenerate_frac,
        });
    }

    // sign flood fill: process regular voxels in decreasing |det K|, picking
    // the sign that best matches already-assigned neighbours (matrix inner
    // product); disconnected components start positive
    let dims = template.dims().to_vec();
    let (ny, nz) = (dims[1], dims[2]);
    let neighbours = |flat: usize| {
        let k = flat % nz;
        let j = (flat / nz) % ny;
        let i = flat / (ny * nz);
        let mut nb = Vec::with_capacity(6);
        if i > 0 {
            nb.push(flat - ny * nz);
        }
        if i + 1 < dims[0] {
            nb.push(flat + ny * nz);
        }
        if j > 0 {
            nb.push(flat - nz);
        }
        if j + 1 < dims[1] {
            nb.push(flat + nz);
        }
        if k > 0 {
            nb.push(flat - 1);
        }
        if k + 1 < dims[2] {
            nb.push(flat + 1);
        }
        nb
    };
    let mut order: Vec<usize> = (0..n).filter(|&f| cand[f].is_some()).collect();
    order.sort_by(|&a, &b| {
        det3(&kmats[b])
            .abs()
            .total_cmp(&det3(&kmats[a]).abs())
            .then(a.cmp(&b))
    });
    let mut hessian: Vec<Option<Mat3>> = vec![None; n];
    for &flat in &order {
        let c = cand[flat].unwrap();
        let mut vote = 0.0;
        for nb in neighbours(flat) {
            if let Some(hn) = &hessian[nb] {
                vote += inner(&c, hn);
            }
        }
        let sign = if vote >= 0.0 { 1.0 } else { -1.0 };
        let mut h = c;
        for row in &mut h {
            for v in row.iter_mut() {
                *v *= sign;
            }
        }
        hessian[flat] = Some(h);
    }

    // rhs = trace of the Hessian; degenerate support voxels inherit the
    // nearest assigned trace (multi-source BFS)
    let mut rhs = vec![0.0; n];
    for flat in 0..n {
        if let Some(h) = &hessian[flat] {
            rhs[flat] = trace3(h);
        }
    }
    let mut frontier: std::collections::VecDeque<usize> =
        (0..n).filter(|&f| hessian[f].is_some()).collect();
    let mut filled: Vec<bool> = (0..n).map(|f| hessian[f].is_some()).collect();
    while let Some(flat) = frontier.pop_front() {
        for nb in neighbours(flat) {
            if degenerate_mask[nb] && !filled[nb] {
                rhs[nb] = rhs[flat];
                filled[nb] = true;
                frontier.push_back(nb);
            }
        }
    }

    let rhs_grid = ScalarGrid::new(dims.clone(), template.origin().to_vec(), template.spacing(), rhs)?;
    let problem = PoissonProblem::with_zero_boundary(rhs_grid)?;
    let u = poisson_solve(&problem, cfg.poisson_tol, cfg.poisson_max_iter)?;
    Ok(DopplerRecovery {
        u,
        fit_report,
        degenerate_frac,
        degenerate_mask,
    })
}

/// Relative L2 error between grids, minimized over the global sign of `got`.
pub fn min_sign_relative_l2(got: &ScalarGrid, truth: &ScalarGrid) -> f64 {
    let mut plus = 0.0;
    let mut minus = 0.0;
    let mut den = 0.0;
    for (a, b) in got.values().iter().zip(truth.values()) {
        plus += (a - b) * (a - b);
        minus += (a + b) * (a + b);
        den += b * b;
    }
    (plus.min(minus) / den.max(1e-300)).sqrt()
}
