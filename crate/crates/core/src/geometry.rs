//! Horizontal gradient, energies, Gauss map and PDE residuals for graphs
//! `z = u(x, y)` in the Heisenberg group.
//!
//! For `F = u - z` the horizontal gradient is `(p, q) = (u_x - y, u_y + x)`.
//! The sub-Riemannian area density is `|(p, q)|`; the Riemannian
//! approximations add `1/lambda^2` under the square root.
//!
//! Sign convention: `H_cc(u) = +div n0` with `n0 = (p, q) / |(p, q)|`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{pairwise_sum, GridDomain, GridFunction};
use crate::stencil::{first_derivative_available, interior_stencils, NodeStencil};

/// Relative factor of the default characteristic tolerance.
pub const CHAR_TOL_FACTOR: f64 = 1e-8;

/// The approximation parameter `lambda > 0`, or the sub-Riemannian limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lambda {
    Finite(f64),
    Infinity,
}

impl Lambda {
    pub fn finite(value: f64) -> Result<Self> {
        if value > 0.0 && value.is_finite() {
            Ok(Lambda::Finite(value))
        } else if value == f64::INFINITY {
            Ok(Lambda::Infinity)
        } else {
            Err(Error::InvalidParameter(format!("lambda must be > 0, got {value}")))
        }
    }

    /// `1 / lambda^2`, zero in the limit.
    pub fn eps(self) -> f64 {
        match self {
            Lambda::Finite(l) => 1.0 / (l * l),
            Lambda::Infinity => 0.0,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Lambda::Finite(l) => l,
            Lambda::Infinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::Finite(l) => write!(f, "{l}"),
            Lambda::Infinity => write!(f, "inf"),
        }
    }
}

impl Serialize for Lambda {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Lambda::Finite(l) => s.serialize_f64(*l),
            Lambda::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Lambda {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Lambda::finite(v).map_err(serde::de::Error::custom),
            Raw::Text(t) if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") => {
                Ok(Lambda::Infinity)
            }
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad lambda {t:?}"))),
        }
    }
}

/// `(p, q)` sampled at interior nodes (`NaN` elsewhere).
#[derive(Clone, Debug)]
pub struct HorizontalField {
    domain: Arc<GridDomain>,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl HorizontalField {
    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }
    pub fn p(&self) -> &[f64] {
        &self.p
    }
    pub fn q(&self) -> &[f64] {
        &self.q
    }
    pub fn at(&self, idx: usize) -> (f64, f64) {
        (self.p[idx], self.q[idx])
    }

    /// `s_lambda = sqrt(p^2 + q^2 + 1/lambda^2)`.
    pub fn norm(&self, idx: usize, lambda: Lambda) -> f64 {
        (self.p[idx].powi(2) + self.q[idx].powi(2) + lambda.eps()).sqrt()
    }

    /// Largest `|p|` or `|q|` over the interior.
    pub fn max_component(&self) -> f64 {
        self.domain
            .interior_nodes()
            .iter()
            .map(|&k| self.p[k].abs().max(self.q[k].abs()))
            .fold(0.0, f64::max)
    }

    /// `1e-8 * (1 + max|p, q|)`.
    pub fn default_char_tol(&self) -> f64 {
        CHAR_TOL_FACTOR * (1.0 + self.max_component())
    }

    /// Unit view `(p, q) / |(p, q)|`, or `None` at a characteristic node.
    pub fn unit(&self, idx: usize, tol_char: f64) -> Option<(f64, f64)> {
        let s = self.norm(idx, Lambda::Infinity);
        (s >= tol_char).then(|| (self.p[idx] / s, self.q[idx] / s))
    }
}

/// Real values on a subset of the interior nodes.
#[derive(Clone, Debug)]
pub struct MaskedField {
    domain: Arc<GridDomain>,
    values: Vec<Option<f64>>,
}

impl MaskedField {
    pub fn new(domain: Arc<GridDomain>, values: Vec<Option<f64>>) -> Self {
        Self { domain, values }
    }
    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }
    pub fn get(&self, idx: usize) -> Option<f64> {
        self.values[idx]
    }
    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    /// Defined entries as `(node, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
    }

    pub fn defined_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Max `|value|` over defined nodes accepted by `keep`.
    pub fn max_abs_where(&self, keep: impl Fn(usize) -> bool) -> f64 {
        self.iter()
            .filter(|&(k, _)| keep(k))
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs_where(|_| true)
    }
}

/// The horizontal gradient `(u_x - y, u_y + x)` with centred differences.
pub fn horizontal_gradient(u: &GridFunction) -> Result<HorizontalField> {
    let d = u.domain();
    if d.nx() < 3 || d.ny() < 3 {
        return Err(Error::GridTooSmall {
            nx: d.nx(),
            ny: d.ny(),
        });
    }
    Ok(gradient(u))
}

pub(crate) fn gradient(u: &GridFunction) -> HorizontalField {
    let d = u.domain_arc().clone();
    let vals = u.values();
    let mut p = vec![f64::NAN; d.len()];
    let mut q = vec![f64::NAN; d.len()];
    let (nx, hx, hy) = (d.nx(), d.hx(), d.hy());
    for &k in d.interior_nodes() {
        let (x, y) = d.coords(k);
        p[k] = (vals[k + 1] - vals[k - 1]) / (2.0 * hx) - y;
        q[k] = (vals[k + nx] - vals[k - nx]) / (2.0 * hy) + x;
    }
    HorizontalField { domain: d, p, q }
}

/// Quadrature of `s_lambda` over interior nodes with the domain's weights
/// (`hx * hy`, or cut-cell areas on curved regions).
///
/// With `Lambda::Infinity` this is the sub-Riemannian energy `E(u)`.
pub fn energy(u: &GridFunction, lambda: Lambda) -> f64 {
    let field = gradient(u);
    field_energy(&field, lambda)
}

pub(crate) fn field_energy(field: &HorizontalField, lambda: Lambda) -> f64 {
    let d = field.domain();
    let dens: Vec<f64> = d
        .interior_nodes()
        .iter()
        .map(|&k| field.norm(k, lambda) * d.weight(k))
        .collect();
    pairwise_sum(&dens)
}

/// Quadrature of `p^2 + q^2` over interior nodes.
pub fn energy_squared(u: &GridFunction) -> f64 {
    let field = gradient(u);
    let d = field.domain();
    let dens: Vec<f64> = d
        .interior_nodes()
        .iter()
        .map(|&k| (field.p[k].powi(2) + field.q[k].powi(2)) * d.weight(k))
        .collect();
    pairwise_sum(&dens)
}

/// Unit horizontal normal with its characteristic set.
#[derive(Clone, Debug)]
pub struct GaussMap {
    pub field: HorizontalField,
    /// `(n1, n2)` per node; `NaN` at characteristic and non-interior nodes.
    pub n1: Vec<f64>,
    pub n2: Vec<f64>,
    /// Interior nodes with `|(p, q)| < tol_char`.
    pub characteristic: Vec<bool>,
    pub tol_char: f64,
}

impl GaussMap {
    pub fn unit(&self, idx: usize) -> Option<(f64, f64)> {
        (!self.n1[idx].is_nan()).then(|| (self.n1[idx], self.n2[idx]))
    }

    pub fn characteristic_nodes(&self) -> Vec<usize> {
        self.characteristic
            .iter()
            .enumerate()
            .filter_map(|(k, &c)| c.then_some(k))
            .collect()
    }

    /// Interior node with a defined unit normal.
    pub fn is_regular(&self, idx: usize) -> bool {
        self.field.domain().is_interior(idx) && !self.characteristic[idx]
    }
}

/// The horizontal Gauss map `n0 = (p, q) / |(p, q)|`.
///
/// `tol_char = None` uses `1e-8 * (1 + max|p, q|)`.
pub fn gauss_map(u: &GridFunction, tol_char: Option<f64>) -> Result<GaussMap> {
    let field = gradient(u);
    gauss_map_of(field, tol_char)
}

pub(crate) fn gauss_map_of(field: HorizontalField, tol_char: Option<f64>) -> Result<GaussMap> {
    let tol = match tol_char {
        Some(t) if t > 0.0 => t,
        Some(t) => {
            return Err(Error::InvalidParameter(format!(
                "characteristic tolerance must be > 0, got {t}"
            )))
        }
        None => field.default_char_tol(),
    };
    let n = field.domain().len();
    let mut n1 = vec![f64::NAN; n];
    let mut n2 = vec![f64::NAN; n];
    let mut characteristic = vec![false; n];
    for &k in field.domain().interior_nodes() {
        match field.unit(k, tol) {
            Some((a, b)) => {
                n1[k] = a;
                n2[k] = b;
            }
            None => characteristic[k] = true,
        }
    }
    Ok(GaussMap {
        field,
        n1,
        n2,
        characteristic,
        tol_char: tol,
    })
}

/// `div n0` at interior, non-characteristic nodes.
///
/// Centred differences of the unit field where both neighbours carry a unit
/// normal, one-sided second-order differences otherwise.
pub fn mse_residual(u: &GridFunction, tol_char: Option<f64>) -> Result<MaskedField> {
    let gm = gauss_map(u, tol_char)?;
    Ok(divergence_of_unit(&gm))
}

pub(crate) fn divergence_of_unit(gm: &GaussMap) -> MaskedField {
    let d = gm.field.domain();
    let avail = |k: usize| gm.is_regular(k);
    let mut out = vec![None; d.len()];
    for &k in d.interior_nodes() {
        if !avail(k) {
            continue;
        }
        let a = first_derivative_available(d, k, 0, &gm.n1, avail);
        let b = first_derivative_available(d, k, 1, &gm.n2, avail);
        if let (Some(a), Some(b)) = (a, b) {
            out[k] = Some(a + b);
        }
    }
    MaskedField::new(gm.field.domain.clone(), out)
}

/// Residuals of the lambda-minimal surface equation.
#[derive(Clone, Debug)]
pub struct LambdaResidual {
    /// `u_xx (1/l^2 + q^2) - 2 u_xy p q + u_yy (1/l^2 + p^2)`.
    pub raw: MaskedField,
    /// `raw / s_lambda^3`, i.e. `div((p, q) / s_lambda)`.
    pub normalized: MaskedField,
}

/// Pointwise values of the non-divergence operator of the Riemannian
/// approximation at a finite `lambda`.
pub fn mse_lambda_residual(u: &GridFunction, lambda: f64) -> Result<LambdaResidual> {
    let eps = match Lambda::finite(lambda)? {
        Lambda::Finite(l) => 1.0 / (l * l),
        Lambda::Infinity => {
            return Err(Error::InvalidParameter(
                "mse_lambda_residual needs a finite lambda".into(),
            ))
        }
    };
    let d = u.domain_arc().clone();
    let stencils = interior_stencils(&d)?;
    let vals = u.values();
    let mut raw = vec![None; d.len()];
    let mut normalized = vec![None; d.len()];
    for st in &stencils {
        let t = msl_terms(&d, st, vals, eps);
        raw[st.node] = Some(t.value);
        normalized[st.node] = Some(t.value / t.s.powi(3));
    }
    Ok(LambdaResidual {
        raw: MaskedField::new(d.clone(), raw),
        normalized: MaskedField::new(d, normalized),
    })
}

/// Local quantities of the discretised operator at one interior node.
#[derive(Clone, Copy, Debug)]
pub(crate) struct MslTerms {
    pub p: f64,
    pub q: f64,
    pub uxx: f64,
    pub uxy: f64,
    pub uyy: f64,
    pub value: f64,
    pub s: f64,
}

pub(crate) fn msl_terms(d: &GridDomain, st: &NodeStencil, vals: &[f64], eps: f64) -> MslTerms {
    let (x, y) = d.coords(st.node);
    let p = NodeStencil::apply(&st.dx, vals) - y;
    let q = NodeStencil::apply(&st.dy, vals) + x;
    let uxx = NodeStencil::apply(&st.dxx, vals);
    let uxy = NodeStencil::apply(&st.dxy, vals);
    let uyy = NodeStencil::apply(&st.dyy, vals);
    let value = uxx * (eps + q * q) - 2.0 * uxy * p * q + uyy * (eps + p * p);
    MslTerms {
        p,
        q,
        uxx,
        uxy,
        uyy,
        value,
        s: (p * p + q * q + eps).sqrt(),
    }
}

/// Max over `samples` equispaced radii in `[r_min, r_max]` of the corkscrew
/// reduction of the cylindrical minimal surface operator for `u = v(r) + a theta`:
///
/// `|v''(r a^2 + 2 r^3 a + r^5) + v'(2a^2 + 2 r^2 a) + r^2 v'^3| / (r^3 s^3)`,
/// `s^2 = v'^2 + a^2/r^2 + 2a + r^2`.
///
/// `profile(r)` returns `(v, v', v'')`.
pub fn cylindrical_residual(
    profile: impl Fn(f64) -> Result<(f64, f64, f64)>,
    a: f64,
    r_min: f64,
    r_max: f64,
    samples: usize,
) -> Result<f64> {
    if !(r_min > 0.0 && r_max >= r_min) {
        return Err(Error::OutOfDomain(format!(
            "radial range [{r_min}, {r_max}] must lie in r > 0"
        )));
    }
    let n = samples.max(2);
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let r = r_min + (r_max - r_min) * k as f64 / (n - 1) as f64;
        let (_, vp, vpp) = profile(r)?;
        let s2 = vp * vp + a * a / (r * r) + 2.0 * a + r * r;
        if !(s2 > 0.0) || !vp.is_finite() || !vpp.is_finite() {
            return Err(Error::OutOfDomain(format!(
                "singular radius r = {r} (denominator {s2})"
            )));
        }
        let num = vpp * (r * a * a + 2.0 * r.powi(3) * a + r.powi(5))
            + vp * (2.0 * a * a + 2.0 * r * r * a)
            + r * r * vp.powi(3);
        worst = worst.max((num / (r.powi(3) * s2.powf(1.5))).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Region;
    use std::f64::consts::PI;

    fn sample(d: &Arc<GridDomain>, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        GridFunction::from_fn(d.clone(), f).unwrap()
    }

    fn node_at(d: &GridDomain, x: f64, y: f64) -> usize {
        let k = d.nearest_node(x, y);
        let (nx, ny) = d.coords(k);
        assert!((nx - x).abs() < 1e-12 && (ny - y).abs() < 1e-12);
        k
    }

    #[test]
    fn gradient_examples() {
        let d = Arc::new(GridDomain::from_predicate(41, 41, -2.0, -2.0, 0.25, 0.25, |_, _| true).unwrap());
        let f = horizontal_gradient(&sample(&d, |_, _| 0.0)).unwrap();
        let (p, q) = f.at(node_at(&d, 1.0, 2.0));
        assert!((p + 2.0).abs() < 1e-14 && (q - 1.0).abs() < 1e-14);

        let d2 = Arc::new(GridDomain::from_predicate(41, 41, 0.0, 0.0, 0.25, 0.25, |_, _| true).unwrap());
        let f = horizontal_gradient(&sample(&d2, |x, y| x * y)).unwrap();
        let (p, q) = f.at(node_at(&d2, 3.0, 5.0));
        assert!(p.abs() < 1e-13 && (q - 6.0).abs() < 1e-13);

        let f = horizontal_gradient(&sample(&d, |x, y| x * x + x * y)).unwrap();
        let (p, q) = f.at(node_at(&d, 0.5, -1.0));
        assert!((p - 1.0).abs() < 1e-13 && (q - 1.0).abs() < 1e-13);
    }

    #[test]
    fn energy_of_xy_on_unit_square_is_second_order() {
        let mut errs = Vec::new();
        for n in [16.0, 32.0, 64.0] {
            let d = Arc::new(GridDomain::rectangle(0.0, 1.0, 0.0, 1.0, 1.0 / n).unwrap());
            errs.push((energy(&sample(&d, |x, y| x * y), Lambda::Infinity) - 1.0).abs());
        }
        // the midpoint rule is exact for the linear density 2x
        assert!(errs.iter().all(|&e| e < 1e-12), "{errs:?}");
    }

    #[test]
    fn energy_of_zero_on_disk() {
        // polar oracle: int_0^1 int_0^{2 pi} r * r dtheta dr = 2 pi / 3
        let d = Arc::new(Region::unit_disk().grid(1.0 / 256.0).unwrap());
        let e = energy(&sample(&d, |_, _| 0.0), Lambda::Infinity);
        assert!((e - 2.0 * PI / 3.0).abs() < 2e-3, "{e}");
        let esq = energy_squared(&sample(&d, |_, _| 0.0));
        assert!((esq - PI / 2.0).abs() < 1e-3, "{esq}");
    }

    #[test]
    fn energy_nonincreasing_in_lambda() {
        let d = Arc::new(Region::unit_disk().grid(0.05).unwrap());
        let u = sample(&d, |x, y| (3.0 * x).sin() * y + x * x);
        let mut prev = f64::INFINITY;
        for l in [0.5, 1.0, 2.0, 10.0, 100.0, 1e4] {
            let e = energy(&u, Lambda::Finite(l));
            assert!(e <= prev);
            prev = e;
        }
        assert!(prev >= energy(&u, Lambda::Infinity));
        assert!(prev - energy(&u, Lambda::Infinity) < 1e-3);
    }

    #[test]
    fn translating_g_by_a_constant_keeps_energy() {
        let d = Arc::new(GridDomain::rectangle(-1.0, 1.0, -1.0, 1.0, 0.05).unwrap());
        let a = sample(&d, |x, y| x * y + y.sin());
        let b = sample(&d, |x, y| x * y + y.sin() + 3.5);
        assert!((energy(&a, Lambda::Infinity) - energy(&b, Lambda::Infinity)).abs() < 1e-12);
    }

    #[test]
    fn gauss_map_of_translation_invariant_graph() {
        let d = Arc::new(GridDomain::rectangle(-1.0, 1.0, -1.0, 1.0, 0.05).unwrap());
        let gm = gauss_map(&sample(&d, |x, y| x * y + y.sin()), None).unwrap();
        for &k in d.interior_nodes() {
            let (x, y) = d.coords(k);
            let sign = (2.0 * x + y.cos()).signum();
            let (a, b) = gm.unit(k).unwrap();
            assert!(a.abs() < 1e-10 && (b - sign).abs() < 1e-10);
        }
    }

    #[test]
    fn characteristic_points_of_plane_and_zero() {
        let d = Arc::new(GridDomain::from_predicate(21, 21, -3.0, -1.0, 0.25, 0.25, |_, _| true).unwrap());
        // z = 2x - y + 1: N0 = (2 - y, -1 + x) vanishes at (1, 2)
        let gm = gauss_map(&sample(&d, |x, y| 2.0 * x - y + 1.0), None).unwrap();
        assert_eq!(gm.characteristic_nodes(), vec![node_at(&d, 1.0, 2.0)]);

        let disk = Arc::new(Region::unit_disk().grid(0.1).unwrap());
        let gm = gauss_map(&sample(&disk, |_, _| 0.0), None).unwrap();
        assert_eq!(gm.characteristic_nodes(), vec![node_at(&disk, 0.0, 0.0)]);
        let res = divergence_of_unit(&gm);
        assert!(res.get(node_at(&disk, 0.0, 0.0)).is_none());
    }

    #[test]
    fn gauss_map_has_unit_norm() {
        let d = Arc::new(Region::unit_disk().grid(0.05).unwrap());
        let gm = gauss_map(&sample(&d, |x, y| x.exp() * y - x * x), None).unwrap();
        for &k in d.interior_nodes() {
            if let Some((a, b)) = gm.unit(k) {
                assert!(((a * a + b * b).sqrt() - 1.0).abs() <= 1e-12);
            }
        }
        assert!(gauss_map(&sample(&d, |_, _| 0.0), Some(0.0)).is_err());
    }

    #[test]
    fn plane_and_xy_residuals_vanish() {
        let d = Arc::new(GridDomain::rectangle(0.0, 1.0, 0.0, 1.0, 1.0 / 32.0).unwrap());
        let plane = sample(&d, |x, y| x + 2.0 * y + 3.0);
        let r = mse_lambda_residual(&plane, 3.0).unwrap();
        assert!(r.raw.max_abs() < 1e-10);
        let xy = sample(&d, |x, y| x * y);
        for l in [1.0, 10.0, 100.0] {
            assert!(mse_lambda_residual(&xy, l).unwrap().normalized.max_abs() < 1e-10);
        }
        assert!(mse_residual(&xy, None).unwrap().max_abs() < 1e-10);
        assert!(mse_lambda_residual(&xy, f64::INFINITY).is_err());
    }

    #[test]
    fn helicoid_residual_is_small_off_the_axis() {
        let mut res = Vec::new();
        for n in [32.0, 64.0] {
            let d = Arc::new(GridDomain::rectangle(0.5, 1.5, -0.5, 0.5, 1.0 / n).unwrap());
            let u = sample(&d, |x, y| 0.7 * y.atan2(x));
            res.push(mse_residual(&u, None).unwrap().max_abs());
        }
        assert!(res[0] / res[1] > 3.5, "{res:?}");
    }

    #[test]
    fn cylindrical_residual_of_helicoid() {
        let r = cylindrical_residual(|_| Ok((2.0, 0.0, 0.0)), 1.7, 0.5, 3.0, 50).unwrap();
        assert_eq!(r, 0.0);
        assert!(cylindrical_residual(|_| Ok((0.0, 0.0, 0.0)), 1.0, 0.0, 1.0, 10).is_err());
    }
}
