//! Finite-difference weights at interior nodes.
//!
//! First and second derivatives of nodal data are linear combinations of
//! neighbouring values; keeping them as explicit `(node, weight)` lists lets
//! the residual and its Jacobian share one discretisation.

use crate::error::{Error, Result};
use crate::grid::GridDomain;

pub type Weights = Vec<(usize, f64)>;

/// Derivative weights at one interior node.
#[derive(Clone, Debug)]
pub struct NodeStencil {
    pub node: usize,
    pub dx: Weights,
    pub dy: Weights,
    pub dxx: Weights,
    pub dyy: Weights,
    pub dxy: Weights,
}

impl NodeStencil {
    pub fn apply(w: &Weights, values: &[f64]) -> f64 {
        w.iter().map(|&(k, c)| c * values[k]).sum()
    }
}

/// Second-order stencils for every interior node, in `interior_nodes()` order.
pub fn interior_stencils(domain: &GridDomain) -> Result<Vec<NodeStencil>> {
    domain
        .interior_nodes()
        .iter()
        .map(|&idx| node_stencil(domain, idx))
        .collect()
}

fn node_stencil(d: &GridDomain, c: usize) -> Result<NodeStencil> {
    let (hx, hy) = (d.hx(), d.hy());
    let at = |di: isize, dj: isize| d.offset(c, di, dj).filter(|&n| d.is_active(n));
    let nb = |di: isize, dj: isize| {
        at(di, dj).ok_or_else(|| {
            let (i, j) = d.ij(c);
            Error::InvalidGrid(format!("interior node ({i}, {j}) lacks a 4-neighbour"))
        })
    };
    let (e, w, n, s) = (nb(1, 0)?, nb(-1, 0)?, nb(0, 1)?, nb(0, -1)?);

    let dx = vec![(e, 0.5 / hx), (w, -0.5 / hx)];
    let dy = vec![(n, 0.5 / hy), (s, -0.5 / hy)];
    let dxx = vec![(e, 1.0 / (hx * hx)), (c, -2.0 / (hx * hx)), (w, 1.0 / (hx * hx))];
    let dyy = vec![(n, 1.0 / (hy * hy)), (c, -2.0 / (hy * hy)), (s, 1.0 / (hy * hy))];

    let hxy = hx * hy;
    let (ne, nw, se, sw) = (at(1, 1), at(-1, 1), at(1, -1), at(-1, -1));
    let dxy = match (ne, nw, se, sw) {
        (Some(ne), Some(nw), Some(se), Some(sw)) => {
            let k = 0.25 / hxy;
            vec![(ne, k), (sw, k), (nw, -k), (se, -k)]
        }
        // seven-point forms, still second order
        (Some(ne), _, _, Some(sw)) => {
            let k = 0.5 / hxy;
            vec![
                (ne, k),
                (sw, k),
                (e, -k),
                (w, -k),
                (n, -k),
                (s, -k),
                (c, 2.0 * k),
            ]
        }
        (_, Some(nw), Some(se), _) => {
            let k = 0.5 / hxy;
            vec![
                (nw, -k),
                (se, -k),
                (e, k),
                (w, k),
                (n, k),
                (s, k),
                (c, -2.0 * k),
            ]
        }
        _ => {
            // first-order quadrant difference
            let (diag, sx, sy) = [(ne, 1.0, 1.0), (nw, -1.0, 1.0), (se, 1.0, -1.0), (sw, -1.0, -1.0)]
                .into_iter()
                .find_map(|(o, sx, sy)| o.map(|k| (k, sx, sy)))
                .ok_or_else(|| {
                    let (i, j) = d.ij(c);
                    Error::InvalidGrid(format!("interior node ({i}, {j}) has no active diagonal"))
                })?;
            let k = 1.0 / (sx * sy * hxy);
            let side_x = if sx > 0.0 { e } else { w };
            let side_y = if sy > 0.0 { n } else { s };
            vec![(diag, k), (side_x, -k), (side_y, -k), (c, k)]
        }
    };

    Ok(NodeStencil {
        node: c,
        dx,
        dy,
        dxx,
        dyy,
        dxy,
    })
}

/// First derivative along x (`axis = 0`) or y (`axis = 1`) of data known only
/// where `available` holds: centred when both sides are available, otherwise
/// one-sided second order, otherwise one-sided first order.
pub fn first_derivative_available(
    d: &GridDomain,
    c: usize,
    axis: usize,
    values: &[f64],
    available: impl Fn(usize) -> bool,
) -> Option<f64> {
    let (h, step) = if axis == 0 { (d.hx(), (1, 0)) } else { (d.hy(), (0, 1)) };
    let get = |k: isize| {
        d.offset(c, step.0 * k, step.1 * k)
            .filter(|&n| available(n))
            .map(|n| values[n])
    };
    let f0 = values[c];
    match (get(1), get(-1)) {
        (Some(fp), Some(fm)) => Some((fp - fm) / (2.0 * h)),
        (Some(fp), None) => match get(2) {
            Some(fpp) => Some((-3.0 * f0 + 4.0 * fp - fpp) / (2.0 * h)),
            None => Some((fp - f0) / h),
        },
        (None, Some(fm)) => match get(-2) {
            Some(fmm) => Some((3.0 * f0 - 4.0 * fm + fmm) / (2.0 * h)),
            None => Some((f0 - fm) / h),
        },
        (None, None) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: f64, y: f64) -> f64 {
        1.0 + 2.0 * x - y + 0.5 * x * x + 3.0 * x * y - 2.0 * y * y
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let d = GridDomain::disk(0.1, -0.2, 1.0, 0.1).unwrap();
        let vals: Vec<f64> = (0..d.len())
            .map(|k| {
                let (x, y) = d.coords(k);
                quadratic(x, y)
            })
            .collect();
        for st in interior_stencils(&d).unwrap() {
            let (x, y) = d.coords(st.node);
            assert!((NodeStencil::apply(&st.dx, &vals) - (2.0 + x + 3.0 * y)).abs() < 1e-10);
            assert!((NodeStencil::apply(&st.dy, &vals) - (-1.0 + 3.0 * x - 4.0 * y)).abs() < 1e-10);
            assert!((NodeStencil::apply(&st.dxx, &vals) - 1.0).abs() < 1e-9);
            assert!((NodeStencil::apply(&st.dyy, &vals) + 4.0).abs() < 1e-9);
            assert!((NodeStencil::apply(&st.dxy, &vals) - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn one_sided_fallback_is_second_order() {
        let d = GridDomain::rectangle(0.0, 1.0, 0.0, 1.0, 0.1).unwrap();
        let vals: Vec<f64> = (0..d.len()).map(|k| d.coords(k).0.powi(2)).collect();
        // only interior data available: leftmost interior column goes one-sided
        let c = d.index(1, 5);
        let dx = first_derivative_available(&d, c, 0, &vals, |n| d.is_interior(n)).unwrap();
        assert!((dx - 2.0 * d.coords(c).0).abs() < 1e-12);
    }
}
