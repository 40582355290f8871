//! Finite-difference derivatives on scalar grids.
//!
//! Central stencils in the interior (second order), one-sided second-order
//! stencils at the boundary layers. Mixed derivatives are compositions of
//! per-axis operators applied in ascending axis order, so a derivative is
//! determined by its multiset of axes.

use crate::error::{Error, Result};
use crate::grid::ScalarGrid;

struct Stencil {
    margin: usize,
    central_offsets: &'static [isize],
    central: &'static [f64],
    forward: &'static [f64], // offsets 0..forward.len()
}

const D1: Stencil = Stencil {
    margin: 1,
    central_offsets: &[-1, 1],
    central: &[-0.5, 0.5],
    forward: &[-1.5, 2.0, -0.5],
};

const D2: Stencil = Stencil {
    margin: 1,
    central_offsets: &[-1, 0, 1],
    central: &[1.0, -2.0, 1.0],
    forward: &[2.0, -5.0, 4.0, -1.0],
};

const D3: Stencil = Stencil {
    margin: 2,
    central_offsets: &[-2, -1, 1, 2],
    central: &[-0.5, 1.0, -1.0, 0.5],
    forward: &[-2.5, 9.0, -12.0, 7.0, -1.5],
};

const D4: Stencil = Stencil {
    margin: 2,
    central_offsets: &[-2, -1, 0, 1, 2],
    central: &[1.0, -4.0, 6.0, -4.0, 1.0],
    forward: &[3.0, -14.0, 26.0, -24.0, 11.0, -2.0],
};

fn stencil(order: usize) -> &'static Stencil {
    match order {
        1 => &D1,
        2 => &D2,
        3 => &D3,
        4 => &D4,
        _ => panic!("derivative order {order} unsupported"),
    }
}

/// `order`-th derivative along `axis`. Requires enough samples for the
/// one-sided stencil.
pub fn derivative_axis(g: &ScalarGrid, axis: usize, order: usize) -> Result<ScalarGrid> {
    let st = stencil(order);
    let n_axis = g.dims()[axis];
    // the one-sided stencil anchored at the innermost boundary layer must fit
    let needed = st.margin + st.forward.len() - 1;
    if n_axis < needed {
        return Err(Error::TooFew {
            needed,
            got: n_axis,
            what: "grid samples along a derivative axis",
        });
    }
    let stride: usize = g.dims()[axis + 1..].iter().product();
    let scale = g.spacing().powi(order as i32).recip();
    let vin = g.values();
    let mut out = vec![0.0; vin.len()];
    // odd-order backward stencils flip sign, even-order do not
    let back_sign = if order % 2 == 0 { 1.0 } else { -1.0 };
    for (flat, slot) in out.iter_mut().enumerate() {
        let i = (flat / stride) % n_axis;
        let mut acc = 0.0;
        if i >= st.margin && i + st.margin < n_axis {
            for (k, &off) in st.central_offsets.iter().enumerate() {
                let j = (flat as isize + off * stride as isize) as usize;
                acc += st.central[k] * vin[j];
            }
        } else if i < st.margin {
            for (k, &c) in st.forward.iter().enumerate() {
                acc += c * vin[flat + k * stride];
            }
        } else {
            for (k, &c) in st.forward.iter().enumerate() {
                acc += back_sign * c * vin[flat - k * stride];
            }
        }
        *slot = acc * scale;
    }
    ScalarGrid::new(g.dims().to_vec(), g.origin().to_vec(), g.spacing(), out)
}

/// Mixed derivative given the multiset of axes to differentiate along,
/// applied per axis in ascending order with a single stencil per axis.
pub fn derivative_multiset(g: &ScalarGrid, axes: &[usize]) -> Result<ScalarGrid> {
    let mut counts = vec![0usize; g.ndim()];
    for &a in axes {
        counts[a] += 1;
    }
    let mut cur = g.clone();
    for (axis, &c) in counts.iter().enumerate() {
        if c > 0 {
            cur = derivative_axis(&cur, axis, c)?;
        }
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::grid_from_function;

    fn poly_grid() -> ScalarGrid {
        grid_from_function(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &[9, 9, 9], |p| {
            2.0 * p[0] * p[0] + 3.0 * p[0] * p[1] - p[2] * p[2] + p[1] - 4.0
        })
        .unwrap()
    }

    #[test]
    fn first_and_second_derivatives_exact_on_quadratics() {
        let g = poly_grid();
        let dx = derivative_axis(&g, 0, 1).unwrap();
        let dyy = derivative_axis(&g, 1, 2).unwrap();
        let dzz = derivative_axis(&g, 2, 2).unwrap();
        for flat in 0..g.len() {
            let mi = g.multi_index(flat);
            let p = g.position(&mi);
            assert!((dx.values()[flat] - (4.0 * p[0] + 3.0 * p[1])).abs() < 1e-10);
            assert!(dyy.values()[flat].abs() < 1e-9);
            assert!((dzz.values()[flat] + 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mixed_derivative_commutes() {
        let g = grid_from_function(&[0.0, 0.0], &[1.0, 1.0], &[17, 17], |p| {
            (2.0 * p[0]).sin() * (3.0 * p[1]).cos()
        })
        .unwrap();
        let a = derivative_axis(&derivative_axis(&g, 0, 1).unwrap(), 1, 1).unwrap();
        let b = derivative_axis(&derivative_axis(&g, 1, 1).unwrap(), 0, 1).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn third_and_fourth_derivatives_on_powers() {
        let g = grid_from_function(&[0.0, 0.0], &[2.0, 2.0], &[33, 33], |p| p[0].powi(4)).unwrap();
        let d3 = derivative_axis(&g, 0, 3).unwrap();
        let d4 = derivative_axis(&g, 0, 4).unwrap();
        for flat in 0..g.len() {
            let p = g.position(&g.multi_index(flat));
            assert!(
                (d3.values()[flat] - 24.0 * p[0]).abs() < 1e-7,
                "d3 at {p:?}: {}",
                d3.values()[flat]
            );
            assert!((d4.values()[flat] - 24.0).abs() < 1e-6);
        }
    }
}
