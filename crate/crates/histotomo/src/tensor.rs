//! Symmetric tensor calculus and the ray transforms of tensor fields.
//!
//! The longitudinal ray transform (LRT) contracts the field with the ray
//! direction on every index and integrates; its null space is exactly the
//! potential fields (symmetrized derivatives of lower-rank fields), which is
//! what the Saint-Venant / Kroner operators detect. The transverse ray
//! transform (TRT) integrates the projection onto the plane normal to the
//! ray. Both come with histogram variants that record the distribution of
//! the contracted values instead of their integral.

use rayon::prelude::*;

use crate::distribution::{bin_samples, moment, Histogram};
use crate::error::{Error, Result};
use crate::fd::{derivative_axis, derivative_multiset};
use crate::grid::{sample_along_ray3, ScalarGrid};
use crate::ray::Ray3;
use crate::sym::{multiplicity, SymTensorField};

/// Symmetrized derivative, rank k to rank k+1:
/// `(du)_{i1..ik+1} = (1/(k+1)) sum_m D_{i_m} u_{i1..^i_m..ik+1}`.
///
/// Central differences in the interior, one-sided second order at the
/// boundary. Rank-4 input is unsupported (the result would exceed rank 4).
pub fn sym_d(u: &SymTensorField) -> Result<SymTensorField> {
    if u.rank() >= 4 {
        return Err(Error::UnsupportedRank(u.rank()));
    }
    let out_rank = u.rank() + 1;
    let mut out = SymTensorField::zeros_like_grid(out_rank, u.template())?;
    let weight = 1.0 / out_rank as f64;
    for slot in 0..out.num_components() {
        let idx = out.component_index_map()[slot].clone();
        let mut acc = vec![0.0; u.template().len()];
        for m in 0..out_rank {
            let mut rest = idx.clone();
            let axis = rest.remove(m);
            let d = derivative_axis(u.comp(&rest), axis, 1)?;
            for (a, v) in acc.iter_mut().zip(d.values()) {
                *a += weight * v;
            }
        }
        out.comp_by_slot_mut(slot).values_mut().copy_from_slice(&acc);
    }
    Ok(out)
}

/// Gradient of a scalar grid as a rank-1 field.
pub fn gradient(u: &ScalarGrid) -> Result<SymTensorField> {
    let mut comps = Vec::with_capacity(u.ndim());
    for axis in 0..u.ndim() {
        comps.push(derivative_axis(u, axis, 1)?);
    }
    SymTensorField::from_components(1, comps)
}

/// Tensor-valued tomographic data over an explicit ray list.
#[derive(Debug, Clone)]
pub enum TensorSinogramValues {
    /// One scalar per ray (LRT).
    Scalar(Vec<f64>),
    /// Per ray, the 2x2 symmetric transverse matrix as `[m11, m12, m22]` in
    /// the ray's deterministic transverse frame (TRT).
    Sym2(Vec<[f64; 3]>),
}

#[derive(Debug, Clone)]
pub struct TensorSinogram {
    pub rays: Vec<Ray3>,
    pub values: TensorSinogramValues,
}

impl TensorSinogram {
    pub fn scalars(&self) -> Option<&[f64]> {
        match &self.values {
            TensorSinogramValues::Scalar(v) => Some(v),
            _ => None,
        }
    }
}

fn check_field_3d(field: &SymTensorField, ranks: &[usize]) -> Result<()> {
    if field.ndim() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: field.ndim() });
    }
    if !ranks.contains(&field.rank()) {
        return Err(Error::UnsupportedRank(field.rank()));
    }
    Ok(())
}

/// Contraction weights of each stored component against `rank` copies of `xi`.
fn contraction_weights(field: &SymTensorField, xi: &[f64; 3]) -> Vec<f64> {
    field
        .component_index_map()
        .iter()
        .map(|idx| {
            let mut w = multiplicity(idx, field.ndim());
            for &i in idx {
                w *= xi[i];
            }
            w
        })
        .collect()
}

/// Values of the full contraction of the field with the ray direction at
/// uniform samples along the ray, `(s, xi.f(x+s xi)..xi)` pairs.
pub fn contracted_samples(field: &SymTensorField, ray: &Ray3, step: f64) -> Vec<(f64, f64)> {
    let weights = contraction_weights(field, ray.direction());
    let per_comp: Vec<Vec<(f64, f64)>> = field
        .components()
        .iter()
        .zip(&weights)
        .map(|(c, &w)| {
            if w == 0.0 {
                Vec::new()
            } else {
                sample_along_ray3(c, ray, step)
            }
        })
        .collect();
    // all sampled components share the same s grid
    let n = per_comp.iter().map(Vec::len).max().unwrap_or(0);
    if n == 0 {
        return Vec::new();
    }
    let reference = per_comp.iter().position(|v| v.len() == n).unwrap();
    let mut out: Vec<(f64, f64)> = per_comp[reference].iter().map(|&(s, _)| (s, 0.0)).collect();
    for (samples, &w) in per_comp.iter().zip(&weights) {
        for (slot, &(_, v)) in out.iter_mut().zip(samples) {
            slot.1 += w * v;
        }
    }
    out
}

/// Longitudinal ray transform of a rank-1 or rank-2 field in 3D:
/// quadrature of the contracted integrand per ray.
pub fn lrt(field: &SymTensorField, rays: &[Ray3], step: f64) -> Result<TensorSinogram> {
    check_field_3d(field, &[1, 2])?;
    let values: Vec<f64> = rays
        .par_iter()
        .map(|ray| {
            let samples = contracted_samples(field, ray, step);
            step * samples.iter().map(|&(_, v)| v).sum::<f64>()
        })
        .collect();
    Ok(TensorSinogram {
        rays: rays.to_vec(),
        values: TensorSinogramValues::Scalar(values),
    })
}

/// LRT of a rank-4 field (contraction with four copies of the direction);
/// the oracle side of the second-moment identities.
pub fn lrt_rank4(field: &SymTensorField, rays: &[Ray3], step: f64) -> Result<Vec<f64>> {
    check_field_3d(field, &[4])?;
    Ok(rays
        .par_iter()
        .map(|ray| {
            let samples = contracted_samples(field, ray, step);
            step * samples.iter().map(|&(_, v)| v).sum::<f64>()
        })
        .collect())
}

/// Transverse ray transform of a rank-2 field in 3D: per ray, the integrals
/// of `eta_a . f . eta_b` over the deterministic transverse frame
/// `(eta1, eta2)`, returned as `[m11, m12, m22]`.
pub fn trt(field: &SymTensorField, rays: &[Ray3], step: f64) -> Result<TensorSinogram> {
    check_field_3d(field, &[2])?;
    let index_map = field.component_index_map().to_vec();
    let values: Vec<[f64; 3]> = rays
        .par_iter()
        .map(|ray| {
            let (e1, e2) = ray.transverse_frame();
            // integrate each stored component once, then combine per pair
            let integrals: Vec<f64> = field
                .components()
                .iter()
                .map(|c| step * sample_along_ray3(c, ray, step).iter().map(|&(_, v)| v).sum::<f64>())
                .collect();
            let mut acc = [0.0; 3];
            for (slot, (a, b)) in [(&e1, &e1), (&e1, &e2), (&e2, &e2)].iter().enumerate() {
                let mut total = 0.0;
                for (idx, &int) in index_map.iter().zip(&integrals) {
                    let (i, j) = (idx[0], idx[1]);
                    let w = if i == j { a[i] * b[i] } else { a[i] * b[j] + a[j] * b[i] };
                    total += w * int;
                }
                acc[slot] = total;
            }
            acc
        })
        .collect();
    Ok(TensorSinogram {
        rays: rays.to_vec(),
        values: TensorSinogramValues::Sym2(values),
    })
}

/// Histogram sinogram over an explicit 3D ray list with shared bin edges.
#[derive(Debug, Clone)]
pub struct RayHistogramSinogram {
    rays: Vec<Ray3>,
    edges: Vec<f64>,
    /// (ray, bin), ray-major.
    mass: Vec<f64>,
    pub underflow: usize,
    pub overflow: usize,
}

impl RayHistogramSinogram {
    pub fn rays(&self) -> &[Ray3] {
        &self.rays
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

    pub fn ray_mass(&self, r: usize) -> &[f64] {
        let nb = self.num_bins();
        &self.mass[r * nb..(r + 1) * nb]
    }

    pub fn ray_histogram(&self, r: usize) -> Histogram {
        Histogram::new(self.edges.clone(), self.ray_mass(r).to_vec()).expect("valid by construction")
    }

    /// Per-ray k-th moments; `k >= 1`.
    pub fn moments(&self, k: u32) -> Result<Vec<f64>> {
        if k < 1 {
            return Err(Error::ZeroMomentOrder);
        }
        Ok((0..self.rays.len())
            .map(|r| moment(&self.ray_histogram(r), k))
            .collect())
    }
}

/// Histogram LRT: bin the contracted integrand of every ray into shared
/// `edges`. The first moment recovers [`lrt`] within half a bin width times
/// the chord length.
pub fn hlrt(field: &SymTensorField, rays: &[Ray3], step: f64, edges: &[f64]) -> Result<RayHistogramSinogram> {
    check_field_3d(field, &[1, 2])?;
    let nb = edges.len().saturating_sub(1);
    let per_ray: Vec<(Vec<f64>, usize, usize)> = rays
        .par_iter()
        .map(|ray| {
            let samples = contracted_samples(field, ray, step);
            let b = bin_samples(&samples, step, edges)?;
            Ok((b.histogram.mass().to_vec(), b.underflow, b.overflow))
        })
        .collect::<Result<_>>()?;
    let mut mass = Vec::with_capacity(per_ray.len() * nb);
    let (mut underflow, mut overflow) = (0, 0);
    for (m, u, o) in per_ray {
        mass.extend_from_slice(&m);
        underflow += u;
        overflow += o;
    }
    Ok(RayHistogramSinogram {
        rays: rays.to_vec(),
        edges: edges.to_vec(),
        mass,
        underflow,
        overflow,
    })
}

/// Saint-Venant operator of a vector field, rearranged as the curl:
/// `c_i = eps_{ijk} d_j f_k`. Vanishes exactly on gradients because the
/// difference operators commute.
pub fn saint_venant_vec(f: &SymTensorField) -> Result<SymTensorField> {
    check_field_3d(f, &[1])?;
    let template = f.template();
    let mut comps = Vec::with_capacity(3);
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let a = derivative_axis(f.comp(&[k]), j, 1)?;
        let b = derivative_axis(f.comp(&[j]), k, 1)?;
        let values = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
        comps.push(ScalarGrid::new(
            template.dims().to_vec(),
            template.origin().to_vec(),
            template.spacing(),
            values,
        )?);
    }
    SymTensorField::from_components(1, comps)
}

/// The two permutation-symbol completions `(i, k, sign)` of a fixed first
/// index `m`.
fn eps_pairs(m: usize) -> [(usize, usize, f64); 2] {
    let a = (m + 1) % 3;
    let b = (m + 2) % 3;
    [(a, b, 1.0), (b, a, -1.0)]
}

/// Rank-2 Kroner operator, the double-curl compatibility tensor of a rank-2
/// symmetric field. It annihilates potential fields, and on `f = du (.) du`
/// for a scalar `u` satisfies `K = 2 Adj(d^2 u)`.
pub fn kroner_rank2(f: &SymTensorField) -> Result<SymTensorField> {
    check_field_3d(f, &[2])?;
    let template = f.template();
    // second derivatives of each stored component, cached on demand
    let mut second: Vec<Option<ScalarGrid>> = vec![None; 6 * 9];
    let mut get_second = |i: usize, j: usize, k: usize, l: usize| -> Result<ScalarGrid> {
        let slot = f.component_slot(&[i, j]);
        let (k, l) = if k <= l { (k, l) } else { (l, k) };
        let key = slot * 9 + k * 3 + l;
        if second[key].is_none() {
            // composed first differences on purpose, also for k == l: using
            // the same per-axis operator as sym_d makes every operator pair
            // commute, so K annihilates discrete potentials exactly
            let d = derivative_axis(&derivative_axis(f.comp(&[i, j]), k, 1)?, l, 1)?;
            second[key] = Some(d);
        }
        Ok(second[key].clone().unwrap())
    };
    let mut out = SymTensorField::zeros_like_grid(2, template)?;
    for slot in 0..out.num_components() {
        let idx = out.component_index_map()[slot].clone();
        let (m, n) = (idx[0], idx[1]);
        let mut acc = vec![0.0; template.len()];
        for (i, k, s1) in eps_pairs(m) {
            for (j, l, s2) in eps_pairs(n) {
                // orientation chosen so that K(du (.) du) = +2 Adj(d^2 u)
                let d = get_second(i, j, k, l)?;
                let w = -s1 * s2;
                for (a, v) in acc.iter_mut().zip(d.values()) {
                    *a += w * v;
                }
            }
        }
        out.comp_by_slot_mut(slot).values_mut().copy_from_slice(&acc);
    }
    Ok(out)
}

/// Componentwise divergence diagnostic, `(div f)_i = sum_j d_j f_{ij}`.
/// Inspects how far a rank-2 field is from solenoidal; the full
/// potential/solenoidal split needs far-field conditions and is not
/// attempted here.
pub fn divergence_rank2(f: &SymTensorField) -> Result<SymTensorField> {
    check_field_3d(f, &[2])?;
    let template = f.template();
    let mut comps = Vec::with_capacity(3);
    for i in 0..3 {
        let mut acc = vec![0.0; template.len()];
        for j in 0..3 {
            let d = derivative_axis(f.comp(&[i, j]), j, 1)?;
            for (a, v) in acc.iter_mut().zip(d.values()) {
                *a += v;
            }
        }
        comps.push(ScalarGrid::new(
            template.dims().to_vec(),
            template.origin().to_vec(),
            template.spacing(),
            acc,
        )?);
    }
    SymTensorField::from_components(1, comps)
}

/// Symmetric outer square: rank 1 -> rank 2 with `(f (.) f)_{ij} = f_i f_j`,
/// rank 2 -> rank 4 with `(e (.) e)_{ijkl} = (e_ij e_kl + e_ik e_jl +
/// e_il e_jk) / 3`.
pub fn sym_square(f: &SymTensorField) -> Result<SymTensorField> {
    if f.rank() != 1 && f.rank() != 2 {
        return Err(Error::UnsupportedRank(f.rank()));
    }
    let out_rank = f.rank() * 2;
    let mut out = SymTensorField::zeros_like_grid(out_rank, f.template())?;
    let n = f.template().len();
    for slot in 0..out.num_components() {
        let idx = out.component_index_map()[slot].clone();
        let mut acc = vec![0.0; n];
        if f.rank() == 1 {
            let a = f.comp(&[idx[0]]).values();
            let b = f.comp(&[idx[1]]).values();
            for (x, (p, q)) in acc.iter_mut().zip(a.iter().zip(b)) {
                *x = p * q;
            }
        } else {
            let pairs = [
                ([idx[0], idx[1]], [idx[2], idx[3]]),
                ([idx[0], idx[2]], [idx[1], idx[3]]),
                ([idx[0], idx[3]], [idx[1], idx[2]]),
            ];
            for (pa, pb) in pairs {
                let a = f.comp(&pa).values();
                let b = f.comp(&pb).values();
                for (x, (p, q)) in acc.iter_mut().zip(a.iter().zip(b)) {
                    *x += p * q / 3.0;
                }
            }
        }
        out.comp_by_slot_mut(slot).values_mut().copy_from_slice(&acc);
    }
    Ok(out)
}

/// Mixed fourth derivative by per-axis composition, shared by the rank-4
/// compatibility operator.
pub fn fourth_derivative(g: &ScalarGrid, axes: &[usize; 4]) -> Result<ScalarGrid> {
    derivative_multiset(g, axes)
}
