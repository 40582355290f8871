//! Symmetric tensor fields stored as one scalar grid per independent
//! component.
//!
//! Components are indexed by sorted multi-indices (multisets over the axes),
//! so reading component `(i,j)` and `(j,i)` touches the same storage. The
//! counts are: rank 1 -> ndim, rank 2 -> ndim(ndim+1)/2, rank 4 in 3D -> 15,
//! rank 4 in 2D -> 5. Rank 0 (a plain scalar field) and rank 3 are supported
//! so that symmetrized derivatives compose.

use crate::error::{Error, Result};
use crate::grid::ScalarGrid;

/// All sorted multi-indices of length `rank` over `0..ndim`, in
/// lexicographic order.
pub fn component_indices(rank: usize, ndim: usize) -> Vec<Vec<usize>> {
    if rank == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut cur = vec![0usize; rank];
    loop {
        out.push(cur.clone());
        // next non-decreasing tuple
        let mut k = rank;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if cur[k] + 1 < ndim {
                let v = cur[k] + 1;
                for slot in cur.iter_mut().skip(k) {
                    *slot = v;
                }
                break;
            }
        }
    }
}

/// Number of index permutations that collapse onto one sorted multi-index:
/// `rank! / prod(count_axis!)`.
pub fn multiplicity(sorted_idx: &[usize], ndim: usize) -> f64 {
    let mut counts = vec![0usize; ndim];
    for &i in sorted_idx {
        counts[i] += 1;
    }
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    let mut m = fact(sorted_idx.len());
    for &c in &counts {
        m /= fact(c);
    }
    m
}

#[derive(Debug, Clone)]
pub struct SymTensorField {
    rank: usize,
    ndim: usize,
    index: Vec<Vec<usize>>,
    comps: Vec<ScalarGrid>,
}

impl SymTensorField {
    /// Zero field with the layout of `template`.
    pub fn zeros_like_grid(rank: usize, template: &ScalarGrid) -> Result<Self> {
        let ndim = template.ndim();
        Self::check_rank(rank, ndim)?;
        let index = component_indices(rank, ndim);
        let comps = index
            .iter()
            .map(|_| {
                ScalarGrid::zeros(template.dims().to_vec(), template.origin().to_vec(), template.spacing())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rank, ndim, index, comps })
    }

    /// Assemble from component grids listed in `component_indices` order.
    pub fn from_components(rank: usize, comps: Vec<ScalarGrid>) -> Result<Self> {
        if comps.is_empty() {
            return Err(Error::EmptyInput("tensor components"));
        }
        let ndim = comps[0].ndim();
        Self::check_rank(rank, ndim)?;
        let index = component_indices(rank, ndim);
        if comps.len() != index.len() {
            return Err(Error::InvalidGrid(format!(
                "rank {rank} in {ndim}D needs {} components, got {}",
                index.len(),
                comps.len()
            )));
        }
        if !comps.iter().all(|c| c.same_layout(&comps[0])) {
            return Err(Error::InvalidGrid("component grids have mismatched layout".into()));
        }
        Ok(Self { rank, ndim, index, comps })
    }

    /// Sample each component from `f(position, sorted_index)`.
    pub fn from_fn<F>(rank: usize, template: &ScalarGrid, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[usize]) -> f64,
    {
        let mut field = Self::zeros_like_grid(rank, template)?;
        let n = template.len();
        for (c, idx) in field.index.clone().into_iter().enumerate() {
            for flat in 0..n {
                let mi = template.multi_index(flat);
                let pos = template.position(&mi);
                let v = f(&pos, &idx);
                if !v.is_finite() {
                    return Err(Error::NonFiniteSample { index: flat });
                }
                field.comps[c].values_mut()[flat] = v;
            }
        }
        Ok(field)
    }

    fn check_rank(rank: usize, ndim: usize) -> Result<()> {
        if rank > 4 {
            return Err(Error::UnsupportedRank(rank));
        }
        if ndim != 2 && ndim != 3 {
            return Err(Error::DimensionMismatch { expected: 3, got: ndim });
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    pub fn num_components(&self) -> usize {
        self.comps.len()
    }

    /// Sorted multi-indices in storage order.
    pub fn component_index_map(&self) -> &[Vec<usize>] {
        &self.index
    }

    /// Storage slot for an arbitrary (unsorted) index tuple.
    pub fn component_slot(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.rank);
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        self.index
            .iter()
            .position(|c| *c == sorted)
            .expect("index within ndim range")
    }

    /// Component grid for an arbitrary index tuple (symmetry applied).
    pub fn comp(&self, idx: &[usize]) -> &ScalarGrid {
        &self.comps[self.component_slot(idx)]
    }

    pub fn comp_by_slot(&self, slot: usize) -> &ScalarGrid {
        &self.comps[slot]
    }

    pub fn comp_by_slot_mut(&mut self, slot: usize) -> &mut ScalarGrid {
        &mut self.comps[slot]
    }

    pub fn components(&self) -> &[ScalarGrid] {
        &self.comps
    }

    /// Grid layout shared by every component.
    pub fn template(&self) -> &ScalarGrid {
        &self.comps[0]
    }

    /// Full contraction with `rank` copies of `v` at a physical point,
    /// `sum_idx T_idx v_i1 ... v_ik`, via multiplicities over stored
    /// components. Rank 0 returns the interpolated scalar.
    pub fn contract_at(&self, p: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (slot, idx) in self.index.iter().enumerate() {
            let mut w = multiplicity(idx, self.ndim);
            for &i in idx {
                w *= v[i];
            }
            if w != 0.0 {
                acc += w * self.comps[slot].interp(p);
            }
        }
        acc
    }

    /// Pointwise linear combination `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        if self.rank != other.rank || self.ndim != other.ndim {
            return Err(Error::UnsupportedRank(other.rank));
        }
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| {
                let vals = a
                    .values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| x + c * y)
                    .collect();
                ScalarGrid::new(a.dims().to_vec(), a.origin().to_vec(), a.spacing(), vals)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_components(self.rank, comps)
    }

    /// Max over components of the max absolute stored value.
    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.values())
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::grid_from_function;

    #[test]
    fn component_counts() {
        assert_eq!(component_indices(1, 3).len(), 3);
        assert_eq!(component_indices(2, 3).len(), 6);
        assert_eq!(component_indices(2, 2).len(), 3);
        assert_eq!(component_indices(3, 3).len(), 10);
        assert_eq!(component_indices(4, 3).len(), 15);
        assert_eq!(component_indices(4, 2).len(), 5);
    }

    #[test]
    fn multiplicities_sum_to_full_index_space() {
        for (rank, ndim) in [(1usize, 3usize), (2, 3), (2, 2), (4, 3), (4, 2)] {
            let total: f64 = component_indices(rank, ndim)
                .iter()
                .map(|c| multiplicity(c, ndim))
                .sum();
            assert_eq!(total, (ndim as f64).powi(rank as i32));
        }
    }

    #[test]
    fn symmetric_access_shares_storage() {
        let t = grid_from_function(&[0.0; 3], &[1.0; 3], &[3, 3, 3], |_| 0.0).unwrap();
        let mut f = SymTensorField::zeros_like_grid(2, &t).unwrap();
        let slot = f.component_slot(&[2, 0]);
        f.comp_by_slot_mut(slot).values_mut()[5] = 3.5;
        assert_eq!(f.comp(&[0, 2]).values()[5], 3.5);
        assert_eq!(f.comp(&[2, 0]).values()[5], 3.5);
        // rank 4: all permutations of (0,1,2,2) hit one slot
        let mut g = SymTensorField::zeros_like_grid(4, &t).unwrap();
        let slot = g.component_slot(&[2, 1, 2, 0]);
        g.comp_by_slot_mut(slot).values_mut()[0] = -1.0;
        assert_eq!(g.comp(&[0, 2, 1, 2]).values()[0], -1.0);
        assert_eq!(g.comp(&[1, 2, 2, 0]).values()[0], -1.0);
    }

    #[test]
    fn contraction_uses_multiplicity() {
        // T = e1 (x) e2 symmetrized: T_12 = T_21 = 1/2 stored once; xi.T.xi with
        // xi = (1,1,0)/sqrt2 must give 2 * (1/2) * (1/sqrt2)^2 = 1/2.
        let t = grid_from_function(&[0.0; 3], &[1.0; 3], &[3, 3, 3], |_| 0.0).unwrap();
        let mut f = SymTensorField::zeros_like_grid(2, &t).unwrap();
        let slot = f.component_slot(&[0, 1]);
        for v in f.comp_by_slot_mut(slot).values_mut() {
            *v = 0.5;
        }
        let s = 1.0 / 2f64.sqrt();
        let got = f.contract_at(&[0.5, 0.5, 0.5], &[s, s, 0.0]);
        assert!((got - 0.5).abs() < 1e-12);
    }
}
