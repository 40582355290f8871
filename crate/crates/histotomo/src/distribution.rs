//! Distribution of a function with respect to Lebesgue measure.
//!
//! A [`Histogram`] stores the pushforward of length under a sampled function:
//! `mass[k]` is the length of the preimage of bin `k`, never normalized to a
//! probability. Moments of the distribution recover integrals of powers of
//! the function, and isolated critical values show up as singular bins.
//!
//! Bin convention: bins are half-open `[left, right)` with the top edge
//! included in the last bin, so a value landing exactly on an interior edge
//! counts toward the upper bin.

use crate::error::{Error, Result};

/// Bin edges plus per-bin mass in length units.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    edges: Vec<f64>,
    mass: Vec<f64>,
}

impl Histogram {
    pub fn new(edges: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        check_edges(&edges)?;
        if mass.len() + 1 != edges.len() {
            return Err(Error::InvalidEdges(format!(
                "{} masses for {} edges",
                mass.len(),
                edges.len()
            )));
        }
        if mass.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidEdges("mass must be finite and non-negative".into()));
        }
        Ok(Self { edges, mass })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn num_bins(&self) -> usize {
        self.mass.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        0.5 * (self.edges[k] + self.edges[k + 1])
    }

    /// Bin index for a value, or `None` outside `[first_edge, last_edge]`.
    /// The top edge belongs to the last bin.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        bin_of(&self.edges, v)
    }
}

/// Uniform edges, `n` bins spanning `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1 && hi > lo);
    let w = (hi - lo) / n as f64;
    (0..=n).map(|k| lo + k as f64 * w).collect()
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidEdges("need at least two edges".into()));
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidEdges("edges must be strictly increasing".into()));
    }
    Ok(())
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if v < edges[0] || v > edges[n] {
        return None;
    }
    if v == edges[n] {
        return Some(n - 1);
    }
    // binary search for the half-open bin [e_k, e_{k+1})
    let k = edges.partition_point(|&e| e <= v);
    Some(k - 1)
}

/// Histogram of weighted samples plus the out-of-range counters.
#[derive(Debug, Clone)]
pub struct Binned {
    pub histogram: Histogram,
    /// Count of samples whose value fell below the first edge.
    pub underflow: usize,
    /// Count of samples whose value fell above the last edge.
    pub overflow: usize,
}

/// Bin `(s, value)` samples into `edges`, each sample carrying mass `step`.
///
/// In-range samples conserve mass exactly: total mass is `step` times the
/// in-range count. Values outside `[edges[0], edges[n]]` accumulate in the
/// two counters instead of the histogram.
pub fn bin_samples(samples: &[(f64, f64)], step: f64, edges: &[f64]) -> Result<Binned> {
    check_edges(edges)?;
    assert!(step > 0.0, "step must be positive");
    let mut counts = vec![0usize; edges.len() - 1];
    let mut underflow = 0;
    let mut overflow = 0;
    for &(_, v) in samples {
        match bin_of(edges, v) {
            Some(k) => counts[k] += 1,
            None if v < edges[0] => underflow += 1,
            None => overflow += 1,
        }
    }
    let mass = counts.iter().map(|&c| c as f64 * step).collect();
    Ok(Binned {
        histogram: Histogram::new(edges.to_vec(), mass)?,
        underflow,
        overflow,
    })
}

/// Cumulative mass at every edge; starts at 0 and is non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeHistogram {
    edges: Vec<f64>,
    cumulative: Vec<f64>,
}

impl CumulativeHistogram {
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Differencing recovers the histogram masses exactly.
    pub fn difference(&self) -> Vec<f64> {
        self.cumulative.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Running prefix sum of the bin masses.
pub fn cumulative(h: &Histogram) -> CumulativeHistogram {
    let mut acc = 0.0;
    let mut cumulative = Vec::with_capacity(h.edges.len());
    cumulative.push(0.0);
    for &m in &h.mass {
        acc += m;
        cumulative.push(acc);
    }
    CumulativeHistogram {
        edges: h.edges.clone(),
        cumulative,
    }
}

/// k-th moment by the midpoint rule, `sum_k midpoint^k * mass`.
pub fn moment(h: &Histogram, k: u32) -> f64 {
    h.mass
        .iter()
        .enumerate()
        .map(|(i, &m)| h.midpoint(i).powi(k as i32) * m)
        .sum()
}

/// Tolerance within which a query value counts as a critical value.
pub const CRITICAL_VALUE_TOL: f64 = 1e-9;

const ROOT_SCAN_POINTS: usize = 4096;
const BISECT_TOL: f64 = 1e-12;

fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..128 {
        let m = 0.5 * (a + b);
        if b - a < BISECT_TOL {
            return m;
        }
        let fm = f(m);
        if (fa <= 0.0) == (fm <= 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Roots of `f` on `[lo, hi]` by a uniform sign-change scan and bisection.
fn scan_roots<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    let n = ROOT_SCAN_POINTS;
    let mut prev_x = lo;
    let mut prev_v = f(lo);
    if prev_v == 0.0 {
        roots.push(lo);
    }
    for i in 1..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let v = f(x);
        if v == 0.0 {
            roots.push(x);
        } else if (prev_v < 0.0) != (v < 0.0) && prev_v != 0.0 {
            roots.push(bisect(f, prev_x, x));
        }
        prev_x = x;
        prev_v = v;
    }
    roots
}

/// Evaluate the distribution density `phi_f(y) = sum over preimages of
/// 1/|f'(x)|` for a differentiable `f` on `[lo, hi]`.
///
/// Preimages are found by a sign-change scan of `f - y` at 4096 points
/// followed by bisection. `y` within [`CRITICAL_VALUE_TOL`] of a critical
/// value of `f` (the value at a root of `f'`) is rejected as singular.
pub fn analytic_distribution<F, G>(f: F, fprime: G, lo: f64, hi: f64, y: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    for xc in scan_roots(&fprime, lo, hi) {
        let yc = f(xc);
        if (y - yc).abs() <= CRITICAL_VALUE_TOL {
            return Err(Error::SingularValue {
                value: y,
                tol: CRITICAL_VALUE_TOL,
            });
        }
    }
    let shifted = |x: f64| f(x) - y;
    let mut density = 0.0;
    for x in scan_roots(&shifted, lo, hi) {
        let d = fprime(x).abs();
        if d <= CRITICAL_VALUE_TOL {
            return Err(Error::SingularValue {
                value: y,
                tol: CRITICAL_VALUE_TOL,
            });
        }
        density += 1.0 / d;
    }
    Ok(density)
}

/// Peak bins must exceed the bins this many slots away by
/// [`PEAK_PROMINENCE`]; an integrable `1/sqrt` singularity keeps that ratio
/// bounded away from 1 under bin refinement while smooth density bands do
/// not.
pub const PEAK_BACKGROUND_OFFSET: usize = 3;
pub const PEAK_PROMINENCE: f64 = 1.8;

/// Bin midpoints of prominent local maxima of a finely binned histogram:
/// candidates exceed `threshold` times the median mass, dominate their
/// neighbours, and exceed the local background ([`PEAK_BACKGROUND_OFFSET`]
/// bins away) by [`PEAK_PROMINENCE`]; runs of adjacent candidates merge into
/// their heaviest bin.
pub fn critical_values(h: &Histogram, threshold: f64) -> Vec<f64> {
    let n = h.num_bins();
    if n == 0 {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = h.mass.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[n / 2];
    let cut = median * threshold;
    let is_peak = |k: usize| {
        let m = h.mass[k];
        if m <= cut || m <= 0.0 {
            return false;
        }
        let left = if k > 0 { h.mass[k - 1] } else { 0.0 };
        let right = if k + 1 < n { h.mass[k + 1] } else { 0.0 };
        if !(m >= left && m >= right && (m > left || m > right)) {
            return false;
        }
        let d = PEAK_BACKGROUND_OFFSET;
        let bg_left = if k >= d { h.mass[k - d] } else { 0.0 };
        let bg_right = if k + d < n { h.mass[k + d] } else { 0.0 };
        m >= PEAK_PROMINENCE * bg_left.max(bg_right)
    };
    let mut out = Vec::new();
    let mut k = 0;
    while k < n {
        if is_peak(k) {
            // merge a run of adjacent peak bins, keep the heaviest
            let mut best = k;
            let mut j = k;
            while j + 1 < n && is_peak(j + 1) {
                j += 1;
                if h.mass[j] > h.mass[best] {
                    best = j;
                }
            }
            out.push(h.midpoint(best));
            k = j + 1;
        } else {
            k += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linspace_samples<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, step: f64) -> Vec<(f64, f64)> {
        let n = ((hi - lo) / step).round() as usize;
        (0..n)
            .map(|i| {
                let x = lo + i as f64 * step;
                (x, f(x))
            })
            .collect()
    }

    #[test]
    fn constant_function_is_an_atom() {
        // f = c over a segment of length L puts all mass L in c's bin
        let step = 1e-3;
        let samples = linspace_samples(|_| 2.5, 0.0, 1.7, step);
        let edges = uniform_edges(0.0, 5.0, 10);
        let b = bin_samples(&samples, step, &edges).unwrap();
        let k = b.histogram.bin_of(2.5).unwrap();
        assert!((b.histogram.mass()[k] - 1.7).abs() < 2.0 * step);
        let other: f64 = b
            .histogram
            .mass()
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, &m)| m)
            .sum();
        assert_eq!(other, 0.0);
        assert_eq!((b.underflow, b.overflow), (0, 0));
    }

    #[test]
    fn identity_pushforward_is_uniform() {
        let step = 1e-5;
        let samples = linspace_samples(|x| x, 0.0, 1.0, step);
        let edges = uniform_edges(0.0, 1.0, 10);
        let b = bin_samples(&samples, step, &edges).unwrap();
        for &m in b.histogram.mass() {
            assert!((m - 0.1).abs() < 1e-3, "{m}");
        }
    }

    #[test]
    fn square_density_near_quarter() {
        // f(x) = x^2 on [-1,1]: two preimages of 0.25 with |f'| = 1 each,
        // so the density there is 2; brute-force binning at 1e-6 resolution.
        let step = 2e-6;
        let samples = linspace_samples(|x| x * x, -1.0, 1.0, step);
        let w = 1e-3;
        let edges = vec![0.25 - w / 2.0, 0.25 + w / 2.0];
        let b = bin_samples(&samples, step, &edges).unwrap();
        let density = b.histogram.mass()[0] / w;
        assert!((density - 2.0).abs() < 0.05, "{density}");
    }

    #[test]
    fn empty_edges_rejected() {
        assert!(bin_samples(&[], 1.0, &[]).is_err());
        assert!(bin_samples(&[], 1.0, &[0.0]).is_err());
    }

    #[test]
    fn boundary_value_goes_to_upper_bin() {
        let edges = vec![0.0, 1.0, 2.0];
        let b = bin_samples(&[(0.0, 1.0)], 1.0, &edges).unwrap();
        assert_eq!(b.histogram.mass(), &[0.0, 1.0]);
        // top edge stays inside the histogram
        let b = bin_samples(&[(0.0, 2.0)], 1.0, &edges).unwrap();
        assert_eq!(b.histogram.mass(), &[0.0, 1.0]);
        assert_eq!(b.overflow, 0);
    }

    #[test]
    fn analytic_linear() {
        let d = analytic_distribution(|x| 2.0 * x, |_| 2.0, 0.0, 1.0, 1.0).unwrap();
        assert!((d - 0.5).abs() < 1e-9);
    }

    #[test]
    fn analytic_square_matches_binning() {
        let d = analytic_distribution(|x| x * x, |x| 2.0 * x, -1.0, 1.0, 0.25).unwrap();
        assert!((d - 2.0).abs() < 1e-6);
    }

    #[test]
    fn analytic_cubic_at_twenty() {
        // preimages of 20 are x = 1, 3, 6 with |f'| = 10, 6, 15: density = 1/3
        let f = |x: f64| (x - 1.0) * (x - 3.0) * (x - 6.0) + 20.0;
        let fp = |x: f64| 3.0 * x * x - 20.0 * x + 27.0;
        let d = analytic_distribution(f, fp, 0.0, 7.0, 20.0).unwrap();
        assert!((d - (1.0 / 10.0 + 1.0 / 6.0 + 1.0 / 15.0)).abs() < 1e-6);
        assert!((d - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn analytic_rejects_critical_value() {
        // critical values of the cubic: f at the roots of 3x^2 - 20x + 27
        let f = |x: f64| (x - 1.0) * (x - 3.0) * (x - 6.0) + 20.0;
        let fp = |x: f64| 3.0 * x * x - 20.0 * x + 27.0;
        let xc = (20.0 + 76f64.sqrt()) / 6.0;
        let yc = f(xc);
        assert!(matches!(
            analytic_distribution(f, fp, 0.0, 7.0, yc),
            Err(Error::SingularValue { .. })
        ));
    }

    #[test]
    fn cumulative_prefix_and_difference() {
        let h = Histogram::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]).unwrap();
        let c = cumulative(&h);
        assert_eq!(c.cumulative(), &[0.0, 1.0, 3.0, 6.0]);
        assert_eq!(c.difference(), h.mass());

        let z = Histogram::new(vec![0.0, 1.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(cumulative(&z).cumulative(), &[0.0, 0.0, 0.0]);

        let one = Histogram::new(vec![0.0, 1.0], vec![4.2]).unwrap();
        assert_eq!(cumulative(&one).cumulative(), &[0.0, 4.2]);
    }

    #[test]
    fn cumulative_inverts_within_rounding() {
        let masses: Vec<f64> = (0..1000).map(|i| ((i * 2654435761_usize) % 97) as f64 / 97.0).collect();
        let edges: Vec<f64> = (0..=1000).map(|i| i as f64).collect();
        let h = Histogram::new(edges, masses.clone()).unwrap();
        let rec = cumulative(&h).difference();
        let total: f64 = masses.iter().sum();
        for (a, b) in rec.iter().zip(&masses) {
            assert!((a - b).abs() <= 1e-12 * total);
        }
    }

    #[test]
    fn moments_of_identity() {
        let step = 1e-4;
        let samples = linspace_samples(|x| x, 0.0, 1.0, step);
        let edges = uniform_edges(0.0, 1.0, 1000);
        let h = bin_samples(&samples, step, &edges).unwrap().histogram;
        assert!((moment(&h, 1) - 0.5).abs() < 1e-3);
        assert!((moment(&h, 2) - 1.0 / 3.0).abs() < 1e-3);
        assert!((moment(&h, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moment_of_constant() {
        let step = 1e-3;
        let samples = linspace_samples(|_| 3.0, 0.0, 2.0, step);
        let edges = uniform_edges(0.0, 4.0, 64);
        let h = bin_samples(&samples, step, &edges).unwrap().histogram;
        let half_bin: f64 = 0.5 * 4.0 / 64.0;
        for k in 0..4u32 {
            let expect = 3f64.powi(k as i32) * 2.0;
            // half-bin shift of the atom bounds the midpoint-rule error
            let err_scale = 2.0 * ((3.0 + half_bin).powi(k as i32) - 3f64.powi(k as i32));
            assert!(
                (moment(&h, k) - expect).abs() <= err_scale + 1e-9,
                "k={k}: {} vs {expect}",
                moment(&h, k)
            );
        }
    }

    #[test]
    fn moment_error_halves_with_resolution() {
        // dominant error is the first-order quadrature boundary term, so
        // halving the sampling step and the bin width should halve it
        let f = |x: f64| x * x + 0.5;
        // integrals of (x^2 + 1/2)^k over [0,1]
        let exact = [0.0, 5.0 / 6.0, 47.0 / 60.0, 229.0 / 280.0];
        let run = |step: f64, bins: usize| -> Vec<f64> {
            let samples = linspace_samples(f, 0.0, 1.0, step);
            let edges = uniform_edges(0.5, 1.5, bins);
            let h = bin_samples(&samples, step, &edges).unwrap().histogram;
            (1..=3).map(|k| moment(&h, k)).collect()
        };
        let coarse = run(1e-3, 1000);
        let fine = run(5e-4, 2000);
        for k in 1..=3usize {
            let ec = (coarse[k - 1] - exact[k]).abs();
            let ef = (fine[k - 1] - exact[k]).abs();
            let ratio = ef / ec;
            assert!(
                (0.35..=0.65).contains(&ratio),
                "k={k}: errors {ec} -> {ef}, ratio {ratio}"
            );
        }
    }

    #[test]
    fn critical_values_of_fig2_cubic() {
        let f = |x: f64| (x - 1.0) * (x - 3.0) * (x - 6.0) + 20.0;
        let step = 1e-5;
        let samples = linspace_samples(f, 0.0, 7.0, step);
        let edges = uniform_edges(1.0, 45.0, 440);
        let h = bin_samples(&samples, step, &edges).unwrap().histogram;
        let found = critical_values(&h, 5.0);
        // critical points at the roots of 3x^2-20x+27, values ~24.061, ~11.791
        let x1 = (20.0 - 76f64.sqrt()) / 6.0;
        let x2 = (20.0 + 76f64.sqrt()) / 6.0;
        let (y1, y2) = (f(x1), f(x2));
        assert_eq!(found.len(), 2, "{found:?}");
        let w = 44.0 / 440.0;
        assert!(found.iter().any(|&y| (y - y1).abs() <= 2.0 * w), "{found:?} vs {y1}");
        assert!(found.iter().any(|&y| (y - y2).abs() <= 2.0 * w), "{found:?} vs {y2}");
    }

    #[test]
    fn monotone_function_has_no_critical_values() {
        let step = 1e-4;
        let samples = linspace_samples(|x| x, 0.0, 1.0, step);
        let edges = uniform_edges(0.0, 1.0, 100);
        let h = bin_samples(&samples, step, &edges).unwrap().histogram;
        assert!(critical_values(&h, 5.0).is_empty());
    }

    #[test]
    fn constant_function_is_one_atom() {
        let step = 1e-3;
        let samples = linspace_samples(|_| 0.7, 0.0, 1.0, step);
        let edges = uniform_edges(0.0, 1.0, 50);
        let h = bin_samples(&samples, step, &edges).unwrap().histogram;
        let found = critical_values(&h, 5.0);
        assert_eq!(found.len(), 1);
        assert!((found[0] - 0.7).abs() <= 1.0 / 50.0);
    }

    #[test]
    fn mass_conservation_exact() {
        let step = 0.125;
        let samples = linspace_samples(|x| x.sin(), 0.0, 10.0, step);
        let edges = uniform_edges(-1.0, 1.0, 37);
        let b = bin_samples(&samples, step, &edges).unwrap();
        assert_eq!(b.underflow + b.overflow, 0);
        let expect = step * samples.len() as f64;
        assert!((b.histogram.total_mass() - expect).abs() < 1e-12 * expect);
    }
}
