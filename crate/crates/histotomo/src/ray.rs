//! Ray parameterizations for the plane and for 3-space.

use crate::error::{Error, Result};

/// A line in the plane, `{x : x . Theta = p}` with `Theta = (cos theta, sin theta)`.
///
/// `theta` is kept in `[0, pi)`; constructing with an angle outside that range
/// reduces modulo `pi` and flips the sign of `p`, which names the same line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    theta: f64,
    p: f64,
}

impl Ray {
    pub fn new(theta: f64, p: f64) -> Self {
        let mut t = theta.rem_euclid(2.0 * std::f64::consts::PI);
        let mut p = p;
        if t >= std::f64::consts::PI {
            t -= std::f64::consts::PI;
            p = -p;
        }
        Ray { theta: t, p }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Unit normal `Theta = (cos theta, sin theta)`.
    pub fn normal(&self) -> [f64; 2] {
        [self.theta.cos(), self.theta.sin()]
    }

    /// Unit direction along the line, `Theta_perp = (-sin theta, cos theta)`.
    pub fn direction(&self) -> [f64; 2] {
        [-self.theta.sin(), self.theta.cos()]
    }
}

/// A line in 3-space through `x` with unit direction `xi`.
///
/// The parameterization is redundant: shifting `x` along `xi` names the same
/// line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray3 {
    x: [f64; 3],
    xi: [f64; 3],
}

impl Ray3 {
    /// Requires `|xi| = 1` within 1e-9.
    pub fn new(x: [f64; 3], xi: [f64; 3]) -> Result<Self> {
        let n = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::NonUnitDirection(n));
        }
        Ok(Ray3 { x, xi })
    }

    /// Normalizes `xi`; errors only on a zero vector.
    pub fn through(x: [f64; 3], xi: [f64; 3]) -> Result<Self> {
        let n = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
        if n < 1e-14 {
            return Err(Error::NonUnitDirection(n));
        }
        Ok(Ray3 {
            x,
            xi: [xi[0] / n, xi[1] / n, xi[2] / n],
        })
    }

    pub fn base(&self) -> &[f64; 3] {
        &self.x
    }

    pub fn direction(&self) -> &[f64; 3] {
        &self.xi
    }

    /// Point at parameter `s`.
    pub fn at(&self, s: f64) -> [f64; 3] {
        [
            self.x[0] + s * self.xi[0],
            self.x[1] + s * self.xi[1],
            self.x[2] + s * self.xi[2],
        ]
    }

    /// Deterministic orthonormal frame `(eta1, eta2)` of the plane normal to
    /// `xi`: Gram-Schmidt of the axis with the smallest `|xi|` component, then
    /// `eta2 = xi x eta1`.
    pub fn transverse_frame(&self) -> ([f64; 3], [f64; 3]) {
        let xi = self.xi;
        let a = xi.map(f64::abs);
        let axis = if a[0] <= a[1] && a[0] <= a[2] {
            0
        } else if a[1] <= a[2] {
            1
        } else {
            2
        };
        let mut e = [0.0; 3];
        e[axis] = 1.0;
        let dot = e[0] * xi[0] + e[1] * xi[1] + e[2] * xi[2];
        let mut eta1 = [e[0] - dot * xi[0], e[1] - dot * xi[1], e[2] - dot * xi[2]];
        let n = (eta1[0] * eta1[0] + eta1[1] * eta1[1] + eta1[2] * eta1[2]).sqrt();
        for v in &mut eta1 {
            *v /= n;
        }
        let eta2 = [
            xi[1] * eta1[2] - xi[2] * eta1[1],
            xi[2] * eta1[0] - xi[0] * eta1[2],
            xi[0] * eta1[1] - xi[1] * eta1[0],
        ];
        (eta1, eta2)
    }
}

/// `n` roughly equidistributed unit directions on the upper hemisphere
/// (Fibonacci lattice).
pub fn fibonacci_directions(n: usize) -> Vec<[f64; 3]> {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    (0..n)
        .map(|i| {
            let z = (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = 2.0 * std::f64::consts::PI * i as f64 / golden;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Parallel-beam ray bundle: for each direction, a `per_axis x per_axis`
/// grid of offsets spanning `[-extent, extent]^2` in the direction's
/// transverse frame.
pub fn parallel_ray_grid(directions: &[[f64; 3]], per_axis: usize, extent: f64) -> Vec<Ray3> {
    assert!(per_axis >= 2);
    let mut rays = Vec::with_capacity(directions.len() * per_axis * per_axis);
    for d in directions {
        let ray0 = Ray3::new([0.0; 3], *d).expect("unit direction");
        let (e1, e2) = ray0.transverse_frame();
        for a in 0..per_axis {
            for b in 0..per_axis {
                let u = -extent + 2.0 * extent * a as f64 / (per_axis - 1) as f64;
                let v = -extent + 2.0 * extent * b as f64 / (per_axis - 1) as f64;
                let base = [
                    u * e1[0] + v * e2[0],
                    u * e1[1] + v * e2[1],
                    u * e1[2] + v * e2[2],
                ];
                rays.push(Ray3 { x: base, xi: *d });
            }
        }
    }
    rays
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn theta_normalization_flips_offset() {
        let a = Ray::new(0.3, 0.7);
        let b = Ray::new(0.3 + PI, -0.7);
        assert!((a.theta() - b.theta()).abs() < 1e-15);
        assert!((a.p() - b.p()).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_unit_direction() {
        assert!(Ray3::new([0.0; 3], [1.0, 1.0, 0.0]).is_err());
        assert!(Ray3::new([0.0; 3], [0.6, 0.8, 0.0]).is_ok());
    }

    #[test]
    fn frame_is_orthonormal() {
        for xi in [
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.6, 0.8, 0.0],
            [1.0 / 3f64.sqrt(); 3],
        ] {
            let r = Ray3::new([0.0; 3], xi).unwrap();
            let (e1, e2) = r.transverse_frame();
            let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            assert!(dot(&e1, &e1).sqrt() - 1.0 < 1e-12);
            assert!(dot(&e2, &e2).sqrt() - 1.0 < 1e-12);
            assert!(dot(&e1, &e2).abs() < 1e-12);
            assert!(dot(&e1, r.direction()).abs() < 1e-12);
            assert!(dot(&e2, r.direction()).abs() < 1e-12);
        }
    }
}
