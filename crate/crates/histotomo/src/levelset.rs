//! Reconstruction from histogram Radon data via sub-level sets.
//!
//! The cumulative histogram of a ray up to a level equals the Radon
//! transform of the indicator of the sub-level set `{f <= y}`, so each bin
//! edge yields a classical binary tomography problem. Stacking the
//! reconstructed indicators and assembling layer-cake style recovers the
//! field itself.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::ScalarGrid;
use crate::radon::{fbp, HistogramSinogram, Sinogram};

/// Threshold applied to the backprojected indicator reconstruction.
pub const INDICATOR_THRESHOLD: f64 = 0.5;

/// Sinogram of the sub-level set at bin edge `k + 1`: per-ray cumulative
/// mass through bin `k`.
pub fn sublevel_sinogram(hs: &HistogramSinogram, k: usize) -> Result<Sinogram> {
    let nb = hs.num_bins();
    if k >= nb {
        return Err(Error::IndexOutOfRange { index: k, len: nb });
    }
    let nrays = hs.thetas().len() * hs.ps().len();
    let values = (0..nrays)
        .map(|r| {
            let m = &hs.mass()[r * nb..(r + 1) * nb];
            m[..=k].iter().sum()
        })
        .collect();
    Sinogram::new(hs.thetas().to_vec(), hs.ps().to_vec(), values)
}

/// Recover a binary set from its chord-length sinogram: filtered
/// backprojection followed by a 0.5 threshold.
pub fn reconstruct_level(
    sino: &Sinogram,
    dims: &[usize; 2],
    origin: &[f64; 2],
    spacing: f64,
) -> Result<ScalarGrid> {
    let rec = fbp(sino, dims, origin, spacing)?;
    Ok(rec.map(|v| if v >= INDICATOR_THRESHOLD { 1.0 } else { 0.0 }))
}

/// Ascending levels with a binary indicator grid per level.
#[derive(Debug, Clone)]
pub struct LevelStack {
    levels: Vec<f64>,
    grids: Vec<ScalarGrid>,
}

impl LevelStack {
    pub fn new(levels: Vec<f64>, grids: Vec<ScalarGrid>) -> Result<Self> {
        if levels.is_empty() || levels.len() != grids.len() {
            return Err(Error::EmptyInput("level stack"));
        }
        if levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidEdges("levels must be strictly increasing".into()));
        }
        if !grids.iter().all(|g| g.same_layout(&grids[0])) {
            return Err(Error::InvalidGrid("level grids have mismatched layout".into()));
        }
        Ok(Self { levels, grids })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn grids(&self) -> &[ScalarGrid] {
        &self.grids
    }

    /// Count of voxels violating the monotone nesting of sub-level sets.
    pub fn nesting_violations(&self) -> usize {
        let n = self.grids[0].len();
        let mut count = 0;
        for v in 0..n {
            let mut prev = 0.0;
            for g in &self.grids {
                let cur = g.values()[v];
                if cur < prev {
                    count += 1;
                }
                prev = cur;
            }
        }
        count
    }

    /// Enforce nesting by a cumulative OR along the level axis. Returns the
    /// number of voxel-level entries that were flipped on.
    pub fn enforce_nesting(&mut self) -> usize {
        let n = self.grids[0].len();
        let mut flipped = 0;
        for v in 0..n {
            let mut on = false;
            for g in &mut self.grids {
                if on && g.values()[v] == 0.0 {
                    g.values_mut()[v] = 1.0;
                    flipped += 1;
                }
                if g.values()[v] != 0.0 {
                    on = true;
                }
            }
        }
        flipped
    }

    /// Layer-cake assembly: `f(x) = y_min + dy * #{k : f(x) > level_k}`,
    /// with `dy` the uniform level spacing. Exact for piecewise-constant
    /// fields whose values sit midway between consecutive levels. Nesting is
    /// enforced first; the flip count is returned alongside.
    pub fn assemble(&mut self, y_min: f64) -> Result<(ScalarGrid, usize)> {
        let dy = if self.levels.len() >= 2 {
            let d = self.levels[1] - self.levels[0];
            for w in self.levels.windows(2) {
                if ((w[1] - w[0]) - d).abs() > 1e-9 * d {
                    return Err(Error::InvalidEdges("levels must be uniformly spaced".into()));
                }
            }
            d
        } else {
            2.0 * (self.levels[0] - y_min)
        };
        if !(dy > 0.0) {
            return Err(Error::InvalidEdges("level spacing must be positive".into()));
        }
        let flipped = self.enforce_nesting();
        let template = &self.grids[0];
        let mut values = vec![y_min; template.len()];
        for g in &self.grids {
            for (slot, &chi) in values.iter_mut().zip(g.values()) {
                if chi == 0.0 {
                    *slot += dy;
                }
            }
        }
        let out = ScalarGrid::new(
            template.dims().to_vec(),
            template.origin().to_vec(),
            template.spacing(),
            values,
        )?;
        Ok((out, flipped))
    }
}

/// Reconstruct the whole level stack of a histogram sinogram: one FBP +
/// threshold per bin edge, levels at `edges[1..]`.
pub fn reconstruct_stack(
    hs: &HistogramSinogram,
    dims: &[usize; 2],
    origin: &[f64; 2],
    spacing: f64,
) -> Result<LevelStack> {
    let nb = hs.num_bins();
    let grids = (0..nb)
        .into_par_iter()
        .map(|k| {
            let sino = sublevel_sinogram(hs, k)?;
            reconstruct_level(&sino, dims, origin, spacing)
        })
        .collect::<Result<Vec<_>>>()?;
    let levels = hs.edges()[1..].to_vec();
    LevelStack::new(levels, grids)
}

/// Candidate critical points of the field from the per-ray histogram
/// singularities at value `y_c`: every ray whose histogram has a prominent
/// peak in the bin containing `y_c` votes along its line (unfiltered
/// backprojection of the indicator); grid maxima above `vote_fraction` of
/// the angle count are returned as `(position, votes)`.
pub fn locate_critical_points(
    hs: &HistogramSinogram,
    y_c: f64,
    peak_threshold: f64,
    vote_fraction: f64,
    dims: &[usize; 2],
    origin: &[f64; 2],
    spacing: f64,
) -> Result<Vec<([f64; 2], f64)>> {
    let edges = hs.edges();
    let nb = hs.num_bins();
    let Some(target_bin) = crate::distribution::Histogram::new(edges.to_vec(), vec![0.0; nb])
        .expect("edges validated on construction")
        .bin_of(y_c)
    else {
        return Ok(Vec::new());
    };
    let ntheta = hs.thetas().len();
    let np = hs.ps().len();

    // per-ray vote: a detected histogram peak in or adjacent to the bin
    // containing y_c (the singular mass can straddle an edge)
    let votes: Vec<bool> = (0..ntheta * np)
        .map(|r| {
            let h = hs.ray_histogram(r / np, r % np);
            crate::distribution::critical_values(&h, peak_threshold)
                .iter()
                .any(|&y| matches!(h.bin_of(y), Some(b) if b.abs_diff(target_bin) <= 1))
        })
        .collect();

    // unfiltered backprojection of the vote indicator
    let p0 = hs.ps()[0];
    let dp = if np >= 2 { hs.ps()[1] - hs.ps()[0] } else { 1.0 };
    let trig: Vec<(f64, f64)> = hs.thetas().iter().map(|&t| (t.cos(), t.sin())).collect();
    let (nx, ny) = (dims[0], dims[1]);
    let score: Vec<f64> = (0..nx * ny)
        .into_par_iter()
        .map(|flat| {
            let x = origin[0] + (flat / ny) as f64 * spacing;
            let y = origin[1] + (flat % ny) as f64 * spacing;
            let mut acc = 0.0;
            for (ti, &(c, s)) in trig.iter().enumerate() {
                let t = ((x * c + y * s) - p0) / dp;
                if t >= -0.5 && t <= (np as f64 - 0.5) {
                    let pi = (t.round() as isize).clamp(0, np as isize - 1) as usize;
                    if votes[ti * np + pi] {
                        acc += 1.0;
                    }
                }
            }
            acc
        })
        .collect();

    let cut = vote_fraction * ntheta as f64;
    let mut maxima = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let v = score[i * ny + j];
            if v < cut {
                continue;
            }
            let mut is_max = true;
            for di in -1isize..=1 {
                for dj in -1isize..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    if ni >= 0 && nj >= 0 && (ni as usize) < nx && (nj as usize) < ny {
                        let w = score[ni as usize * ny + nj as usize];
                        if w > v || (w == v && (ni as usize, nj as usize) < (i, j)) {
                            is_max = false;
                        }
                    }
                }
            }
            if is_max {
                maxima.push((i, j, v));
            }
        }
    }
    // refine each maximum to the score-weighted centroid of its plateau
    // (connected region within 90% of the peak), which centers flat vote
    // intersections far better than the raw argmax
    let mut out: Vec<([f64; 2], f64)> = Vec::new();
    for (i0, j0, peak) in maxima {
        let floor = 0.9 * peak;
        let mut seen = vec![false; nx * ny];
        let mut queue = vec![(i0, j0)];
        seen[i0 * ny + j0] = true;
        let (mut wx, mut wy, mut wsum) = (0.0, 0.0, 0.0);
        while let Some((i, j)) = queue.pop() {
            let w = score[i * ny + j];
            wx += w * (origin[0] + i as f64 * spacing);
            wy += w * (origin[1] + j as f64 * spacing);
            wsum += w;
            for (di, dj) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if ni >= 0 && nj >= 0 && (ni as usize) < nx && (nj as usize) < ny {
                    let f = ni as usize * ny + nj as usize;
                    if !seen[f] && score[f] >= floor {
                        seen[f] = true;
                        queue.push((ni as usize, nj as usize));
                    }
                }
            }
        }
        let pos = [wx / wsum, wy / wsum];
        // plateaus produce one maximum per tie-break winner; keep one entry
        if !out
            .iter()
            .any(|(q, _)| (q[0] - pos[0]).abs() < spacing && (q[1] - pos[1]).abs() < spacing)
        {
            out.push((pos, peak));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::uniform_edges;
    use crate::grid::grid_from_function;
    use crate::radon::{hist_radon, radon, uniform_angles, uniform_offsets};

    fn radial_phantom(n: usize) -> ScalarGrid {
        // smooth compact bump, max 1 at the origin, support r < 0.8
        grid_from_function(&[-1.0, -1.0], &[1.0, 1.0], &[n, n], |p| {
            let r2 = (p[0] * p[0] + p[1] * p[1]) / 0.64;
            if r2 < 1.0 {
                (1.0 - r2) * (1.0 - r2)
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn sublevel_extremes() {
        let g = radial_phantom(101);
        let thetas = uniform_angles(8);
        let ps = uniform_offsets(33, 1.2);
        let edges = uniform_edges(-0.01, 1.01, 16);
        let hs = hist_radon(&g, &thetas, &ps, &edges).unwrap();
        // top level: every in-range value is below it, so the sinogram is the
        // full chord length of the domain box
        let top = sublevel_sinogram(&hs, 15).unwrap();
        let chords = radon(&g.map(|_| 1.0), &thetas, &ps).unwrap();
        for i in 0..top.values().len() {
            assert!(
                (top.values()[i] - chords.values()[i]).abs() <= 1e-10,
                "ray {i}: {} vs {}",
                top.values()[i],
                chords.values()[i]
            );
        }
        // index out of range
        assert!(sublevel_sinogram(&hs, 16).is_err());
    }

    #[test]
    fn sublevel_disk_complement() {
        // for the disk indicator, a level between 0 and 1 selects
        // box-minus-disk; at p = 0 the value is (box chord) - (disk chord)
        let g = grid_from_function(&[-1.5, -1.5], &[1.5, 1.5], &[601, 601], |p| {
            if p[0] * p[0] + p[1] * p[1] <= 1.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let edges = vec![-0.5, 0.5, 1.5];
        let hs = hist_radon(&g, &[0.0], &[0.0], &edges).unwrap();
        let s = sublevel_sinogram(&hs, 0).unwrap();
        assert!((s.values()[0] - (3.0 - 2.0)).abs() <= 3.0 * g.spacing(), "{}", s.values()[0]);
        // below the minimum: empty set
        let lo = hist_radon(&g, &[0.0], &[0.0], &[-3.0, -2.0, -1.5]).unwrap();
        assert_eq!(sublevel_sinogram(&lo, 1).unwrap().values()[0], 0.0);
    }

    #[test]
    fn sublevel_monotone_in_level() {
        let g = radial_phantom(101);
        let edges = uniform_edges(-0.01, 1.01, 32);
        let hs = hist_radon(&g, &uniform_angles(6), &uniform_offsets(21, 1.2), &edges).unwrap();
        for r in 0..6 * 21 {
            let (ti, pi) = (r / 21, r % 21);
            let mut prev = -1.0;
            for k in 0..32 {
                let v = sublevel_sinogram(&hs, k).unwrap().at(ti, pi);
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn reconstruct_level_dice() {
        let g = radial_phantom(129);
        let thetas = uniform_angles(180);
        let ps = uniform_offsets(256, 1.45);
        let edges = uniform_edges(-0.01, 1.01, 8);
        let hs = hist_radon(&g, &thetas, &ps, &edges).unwrap();
        for k in [2usize, 4, 6] {
            let sino = sublevel_sinogram(&hs, k).unwrap();
            let rec = reconstruct_level(&sino, &[129, 129], &[-1.0, -1.0], g.spacing()).unwrap();
            let level = edges[k + 1];
            let mut inter = 0.0;
            let mut a = 0.0;
            let mut b = 0.0;
            for flat in 0..g.len() {
                let truth = if g.values()[flat] <= level { 1.0 } else { 0.0 };
                let got = rec.values()[flat];
                inter += truth * got;
                a += truth;
                b += got;
            }
            let dice = 2.0 * inter / (a + b);
            assert!(dice >= 0.95, "level {level}: dice {dice}");
        }
    }

    #[test]
    fn reconstruct_zero_and_full() {
        let thetas = uniform_angles(8);
        let ps = uniform_offsets(32, 1.0);
        let zero = Sinogram::new(thetas.clone(), ps.clone(), vec![0.0; 8 * 32]).unwrap();
        let rec = reconstruct_level(&zero, &[33, 33], &[-1.0, -1.0], 1.0 / 16.0).unwrap();
        assert!(rec.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn assemble_two_level_exact() {
        // f in {1, 3}, one indicator at level 2: layer cake is exact
        let chi = grid_from_function(&[0.0, 0.0], &[1.0, 1.0], &[9, 9], |p| {
            if p[0] < 0.5 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let mut stack = LevelStack::new(vec![2.0], vec![chi.clone()]).unwrap();
        let (rec, flipped) = stack.assemble(1.0).unwrap();
        assert_eq!(flipped, 0);
        for flat in 0..rec.len() {
            let expect = if chi.values()[flat] == 1.0 { 1.0 } else { 3.0 };
            assert_eq!(rec.values()[flat], expect);
        }
    }

    #[test]
    fn assemble_constant_phantom() {
        let template = ScalarGrid::zeros(vec![5, 5], vec![0.0, 0.0], 0.25).unwrap();
        // constant 2.0 with levels at 1.5 and 2.5: all values exceed the
        // first level and none the second
        let below = template.map(|_| 0.0);
        let above = template.map(|_| 1.0);
        let mut stack = LevelStack::new(vec![1.5, 2.5], vec![below, above]).unwrap();
        let (rec, _) = stack.assemble(1.0).unwrap();
        assert!(rec.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn assemble_enforces_nesting() {
        let template = ScalarGrid::zeros(vec![4, 4], vec![0.0, 0.0], 1.0).unwrap();
        let ones = template.map(|_| 1.0);
        let zeros = template.clone();
        // non-nested: level 1 set, level 2 cleared
        let mut stack = LevelStack::new(vec![1.0, 2.0], vec![ones, zeros]).unwrap();
        assert!(stack.nesting_violations() > 0);
        let (rec, flipped) = stack.assemble(0.5).unwrap();
        assert_eq!(flipped, 16);
        assert!(rec.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn round_trip_smooth_phantom() {
        let g = radial_phantom(129);
        let thetas = uniform_angles(180);
        let ps = uniform_offsets(256, 1.45);
        let nlevels = 64;
        let edges = uniform_edges(-0.005, 1.005, nlevels);
        let hs = hist_radon(&g, &thetas, &ps, &edges).unwrap();
        let mut stack = reconstruct_stack(&hs, &[129, 129], &[-1.0, -1.0], g.spacing()).unwrap();
        let dy = edges[1] - edges[0];
        let (rec, _) = stack.assemble(edges[0] + 0.5 * dy).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in rec.values().iter().zip(g.values()) {
            num += (a - b) * (a - b);
            den += b * b;
        }
        let rel = (num / den).sqrt();
        assert!(rel <= 0.10, "relative L2 {rel}");
    }

    #[test]
    fn critical_point_at_bump_center() {
        let g = radial_phantom(129);
        let thetas = uniform_angles(60);
        let ps = uniform_offsets(129, 1.2);
        let edges = uniform_edges(-0.005, 1.005, 64);
        let hs = hist_radon(&g, &thetas, &ps, &edges).unwrap();
        let found = locate_critical_points(&hs, 1.0, 3.0, 0.5, &[65, 65], &[-1.0, -1.0], 2.0 / 64.0)
            .unwrap();
        assert!(!found.is_empty());
        let (pos, _) = found[0];
        let dist = (pos[0] * pos[0] + pos[1] * pos[1]).sqrt();
        assert!(dist <= 2.0 * g.spacing(), "best candidate {pos:?}");
    }

    #[test]
    fn monotone_plane_has_no_critical_points() {
        let g = grid_from_function(&[-1.0, -1.0], &[1.0, 1.0], &[65, 65], |p| {
            0.2 + 0.3 * p[0] + 0.1 * p[1]
        })
        .unwrap();
        let thetas = uniform_angles(40);
        let ps = uniform_offsets(65, 1.2);
        let edges = uniform_edges(-0.3, 0.7, 64);
        let hs = hist_radon(&g, &thetas, &ps, &edges).unwrap();
        let found =
            locate_critical_points(&hs, 0.3, 3.0, 0.5, &[33, 33], &[-1.0, -1.0], 1.0 / 16.0).unwrap();
        assert!(found.is_empty(), "{found:?}");
    }

    #[test]
    fn two_bumps_localized() {
        let g = grid_from_function(&[-1.0, -1.0], &[1.0, 1.0], &[129, 129], |p| {
            let b = |cx: f64, cy: f64, a: f64, r: f64| {
                let r2 = ((p[0] - cx) * (p[0] - cx) + (p[1] - cy) * (p[1] - cy)) / (r * r);
                if r2 < 1.0 {
                    a * (1.0 - r2) * (1.0 - r2)
                } else {
                    0.0
                }
            };
            b(-0.45, 0.0, 1.0, 0.35) + b(0.5, 0.1, 0.6, 0.3)
        })
        .unwrap();
        let thetas = uniform_angles(60);
        let ps = uniform_offsets(129, 1.2);
        let edges = uniform_edges(-0.005, 1.005, 32);
        let hs = hist_radon(&g, &thetas, &ps, &edges).unwrap();
        let spec = (&[65usize, 65], &[-1.0f64, -1.0], 2.0 / 64.0);
        let near = |found: &[([f64; 2], f64)], cx: f64, cy: f64| {
            found
                .iter()
                .any(|(p, _)| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt() <= 0.1)
        };
        let f1 = locate_critical_points(&hs, 1.0, 2.0, 0.4, spec.0, spec.1, spec.2).unwrap();
        assert!(near(&f1, -0.45, 0.0), "{f1:?}");
        let f2 = locate_critical_points(&hs, 0.6, 2.0, 0.4, spec.0, spec.1, spec.2).unwrap();
        assert!(near(&f2, 0.5, 0.1), "{f2:?}");
    }
}
