//! Surfaces with a prescribed horizontal Gauss map.
//!
//! Given a divergence-free unit field `V = (v1, v2)`, a solution `u` of
//! `v2 (u_x - y) - v1 (u_y + x) = 0` has `n0 = ±V`. The PDE is first order
//! and is integrated along its characteristics
//! `x' = v2, y' = -v1, u' = v2 y + v1 x` from an initial curve with data.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::families::ExampleSpec;
use crate::freefn::FreeFunction;
use crate::geometry::{divergence_of_unit, gauss_map_of, gradient, GaussMap};
use crate::grid::{GridDomain, GridFunction};
use crate::ode::Sign;

pub const UNIT_TOL: f64 = 1e-10;
pub const DIVERGENCE_TOL: f64 = 1e-8;
pub const TRANSVERSALITY_MIN: f64 = 1e-3;

type PlanarFn<T> = Arc<dyn Fn(f64, f64) -> T + Send + Sync>;

/// User-supplied field with its divergence.
#[derive(Clone)]
pub struct CustomField {
    pub field: PlanarFn<(f64, f64)>,
    pub divergence: PlanarFn<f64>,
}

impl fmt::Debug for CustomField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomField(..)")
    }
}

#[derive(Clone, Debug)]
pub enum VectorFieldSpec {
    /// `sign * (alpha, sqrt(1 - alpha^2))`.
    Constant { alpha: f64, sign: Sign },
    /// `(-y, x) / r`.
    Rotational,
    /// `(a - y, b + x) / |(a - y, b + x)|`, the Gauss map of `z = ax + by + c`.
    PlaneField { a: f64, b: f64 },
    /// `v1 = c[0] + c[1] x + c[2] y`, `v2 = d[0] + d[1] x + d[2] y`.
    Affine { v1: [f64; 3], v2: [f64; 3] },
    Custom(CustomField),
}

impl VectorFieldSpec {
    pub fn name(&self) -> &'static str {
        match self {
            VectorFieldSpec::Constant { .. } => "constant",
            VectorFieldSpec::Rotational => "rotational",
            VectorFieldSpec::PlaneField { .. } => "plane",
            VectorFieldSpec::Affine { .. } => "affine",
            VectorFieldSpec::Custom(_) => "custom",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |xs: &[f64]| {
            if xs.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::InvalidParameter("field parameters must be finite".into()))
            }
        };
        match self {
            VectorFieldSpec::Constant { alpha, .. } => {
                finite(&[*alpha])?;
                if alpha.abs() > 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "constant field needs |alpha| <= 1, got {alpha}"
                    )));
                }
                Ok(())
            }
            VectorFieldSpec::PlaneField { a, b } => finite(&[*a, *b]),
            VectorFieldSpec::Affine { v1, v2 } => {
                finite(v1)?;
                finite(v2)?;
                let div = v1[1] + v2[2];
                if div.abs() > DIVERGENCE_TOL {
                    return Err(Error::FieldInvariant(format!(
                        "divergence {div:.3e} exceeds {DIVERGENCE_TOL:.0e}"
                    )));
                }
                Ok(())
            }
            VectorFieldSpec::Rotational | VectorFieldSpec::Custom(_) => Ok(()),
        }
    }

    fn raw(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let fail = |reason: &str| Error::FieldEvaluation {
            x,
            y,
            reason: reason.into(),
        };
        match self {
            VectorFieldSpec::Constant { alpha, sign } => {
                let s = sign.value();
                Ok((s * alpha, s * (1.0 - alpha * alpha).sqrt()))
            }
            VectorFieldSpec::Rotational => {
                let r = x.hypot(y);
                if r < 1e-12 {
                    return Err(fail("rotational field is undefined at the origin"));
                }
                Ok((-y / r, x / r))
            }
            VectorFieldSpec::PlaneField { a, b } => {
                let (w1, w2) = (a - y, b + x);
                let n = w1.hypot(w2);
                if n < 1e-12 {
                    return Err(fail("plane field vanishes at (-b, a)"));
                }
                Ok((w1 / n, w2 / n))
            }
            VectorFieldSpec::Affine { v1, v2 } => Ok((
                v1[0] + v1[1] * x + v1[2] * y,
                v2[0] + v2[1] * x + v2[2] * y,
            )),
            VectorFieldSpec::Custom(c) => Ok((c.field)(x, y)),
        }
    }

    /// `V(x, y)`, with the unit-norm invariant checked.
    pub fn eval(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let (v1, v2) = self.raw(x, y)?;
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::FieldEvaluation {
                x,
                y,
                reason: "field is not finite".into(),
            });
        }
        let dev = (v1.hypot(v2) - 1.0).abs();
        if dev > UNIT_TOL {
            return Err(Error::FieldInvariant(format!(
                "|V| - 1 = {dev:.3e} at ({x}, {y})"
            )));
        }
        Ok((v1, v2))
    }

    pub fn divergence(&self, x: f64, y: f64) -> f64 {
        match self {
            VectorFieldSpec::Affine { v1, v2 } => v1[1] + v2[2],
            VectorFieldSpec::Custom(c) => (c.divergence)(x, y),
            _ => 0.0,
        }
    }

    /// Checks unit norm and zero divergence at the given points.
    pub fn check_at(&self, points: &[(f64, f64)]) -> Result<()> {
        self.validate()?;
        for &(x, y) in points {
            self.eval(x, y)?;
            let div = self.divergence(x, y);
            if !(div.abs() <= DIVERGENCE_TOL) {
                return Err(Error::FieldInvariant(format!(
                    "divergence {div:.3e} at ({x}, {y}) exceeds {DIVERGENCE_TOL:.0e}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FieldRepr {
    Constant {
        alpha: f64,
        #[serde(default)]
        sign: Sign,
    },
    Rotational,
    #[serde(alias = "plane_field")]
    Plane { a: f64, b: f64 },
    #[serde(alias = "custom")]
    Affine { v1: [f64; 3], v2: [f64; 3] },
}

impl Serialize for VectorFieldSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            VectorFieldSpec::Constant { alpha, sign } => FieldRepr::Constant {
                alpha: *alpha,
                sign: *sign,
            },
            VectorFieldSpec::Rotational => FieldRepr::Rotational,
            VectorFieldSpec::PlaneField { a, b } => FieldRepr::Plane { a: *a, b: *b },
            VectorFieldSpec::Affine { v1, v2 } => FieldRepr::Affine { v1: *v1, v2: *v2 },
            VectorFieldSpec::Custom(_) => {
                return Err(serde::ser::Error::custom("callback fields cannot be serialized"))
            }
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for VectorFieldSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match FieldRepr::deserialize(d)? {
            FieldRepr::Constant { alpha, sign } => VectorFieldSpec::Constant { alpha, sign },
            FieldRepr::Rotational => VectorFieldSpec::Rotational,
            FieldRepr::Plane { a, b } => VectorFieldSpec::PlaneField { a, b },
            FieldRepr::Affine { v1, v2 } => VectorFieldSpec::Affine { v1, v2 },
        })
    }
}

/// Data carried by the initial curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveData {
    /// `g` of the curve parameter (`y`, angle, or `t` in `[0, 1]`).
    Function { g: FreeFunction },
    /// Values of a known surface on the curve.
    Surface { example: ExampleSpec },
}

impl CurveData {
    fn value(&self, param: f64, x: f64, y: f64) -> Result<f64> {
        match self {
            CurveData::Function { g } => Ok(g.value(param)),
            CurveData::Surface { example } => example.eval(x, y),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCurve {
    VerticalLine {
        x0: f64,
        y_min: f64,
        y_max: f64,
        count: usize,
        data: CurveData,
    },
    Circle {
        #[serde(default)]
        cx: f64,
        #[serde(default)]
        cy: f64,
        radius: f64,
        theta_min: f64,
        theta_max: f64,
        count: usize,
        data: CurveData,
    },
    Segment {
        start: [f64; 2],
        end: [f64; 2],
        count: usize,
        data: CurveData,
    },
    /// Sampled points `[x, y, u]`.
    Polyline { points: Vec<[f64; 3]> },
}

/// A point of the initial curve with its data and unit tangent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub tangent: (f64, f64),
}

fn params(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::InvalidParameter(format!(
            "initial curve needs at least 2 samples, got {count}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "curve parameter range [{lo}, {hi}] is empty"
        )));
    }
    let n = (count - 1) as f64;
    Ok((0..count).map(|k| lo + (hi - lo) * k as f64 / n).collect())
}

impl InitialCurve {
    pub fn points(&self) -> Result<Vec<CurvePoint>> {
        match self {
            InitialCurve::VerticalLine {
                x0,
                y_min,
                y_max,
                count,
                data,
            } => params(*y_min, *y_max, *count)?
                .into_iter()
                .map(|y| {
                    Ok(CurvePoint {
                        x: *x0,
                        y,
                        u: data.value(y, *x0, y)?,
                        tangent: (0.0, 1.0),
                    })
                })
                .collect(),
            InitialCurve::Circle {
                cx,
                cy,
                radius,
                theta_min,
                theta_max,
                count,
                data,
            } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "circle radius must be > 0, got {radius}"
                    )));
                }
                params(*theta_min, *theta_max, *count)?
                    .into_iter()
                    .map(|t| {
                        let (x, y) = (cx + radius * t.cos(), cy + radius * t.sin());
                        Ok(CurvePoint {
                            x,
                            y,
                            u: data.value(t, x, y)?,
                            tangent: (-t.sin(), t.cos()),
                        })
                    })
                    .collect()
            }
            InitialCurve::Segment {
                start,
                end,
                count,
                data,
            } => {
                let (dx, dy) = (end[0] - start[0], end[1] - start[1]);
                let len = dx.hypot(dy);
                if !(len > 0.0) {
                    return Err(Error::InvalidParameter("segment has zero length".into()));
                }
                params(0.0, 1.0, *count)?
                    .into_iter()
                    .map(|t| {
                        let (x, y) = (start[0] + t * dx, start[1] + t * dy);
                        Ok(CurvePoint {
                            x,
                            y,
                            u: data.value(t, x, y)?,
                            tangent: (dx / len, dy / len),
                        })
                    })
                    .collect()
            }
            InitialCurve::Polyline { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidParameter(
                        "polyline needs at least 2 points".into(),
                    ));
                }
                let n = points.len();
                (0..n)
                    .map(|k| {
                        let (a, b) = (points[k.saturating_sub(1)], points[(k + 1).min(n - 1)]);
                        let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
                        let len = tx.hypot(ty);
                        if !(len > 0.0) {
                            return Err(Error::InvalidParameter(format!(
                                "polyline has repeated points near index {k}"
                            )));
                        }
                        let p = points[k];
                        Ok(CurvePoint {
                            x: p[0],
                            y: p[1],
                            u: p[2],
                            tangent: (tx / len, ty / len),
                        })
                    })
                    .collect()
            }
        }
    }
}

/// One integrated characteristic; `samples[k] = [s, x, y, u]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicCurve {
    pub origin: [f64; 3],
    pub origin_index: usize,
    pub step: f64,
    pub samples: Vec<[f64; 4]>,
}

type Rhs<'a> = dyn Fn(f64, f64) -> Result<(f64, f64)> + Sync + 'a;

fn rk4(field: &Rhs<'_>, st: [f64; 3], h: f64) -> Result<[f64; 3]> {
    let f = |s: [f64; 3]| -> Result<[f64; 3]> {
        let (v1, v2) = field(s[0], s[1])?;
        Ok([v2, -v1, v2 * s[1] + v1 * s[0]])
    };
    let add = |s: [f64; 3], k: [f64; 3], c: f64| [s[0] + c * k[0], s[1] + c * k[1], s[2] + c * k[2]];
    let k1 = f(st)?;
    let k2 = f(add(st, k1, h / 2.0))?;
    let k3 = f(add(st, k2, h / 2.0))?;
    let k4 = f(add(st, k3, h))?;
    Ok([0, 1, 2].map(|i| st[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])))
}

/// Marches from `s = 0` to `s = target`, shortening the last step.
fn march(field: &Rhs<'_>, start: [f64; 3], step: f64, target: f64) -> Result<Vec<[f64; 4]>> {
    let mut out = Vec::new();
    if target == 0.0 {
        return Ok(out);
    }
    let dir = target.signum();
    let n = (target.abs() / step - 1e-9).ceil().max(1.0) as usize;
    let mut st = start;
    for k in 1..=n {
        let s_prev = dir * step * (k - 1) as f64;
        let s = if k == n { target } else { dir * step * k as f64 };
        st = rk4(field, st, s - s_prev)?;
        out.push([s, st[0], st[1], st[2]]);
    }
    Ok(out)
}

pub(crate) fn integrate_with(
    field: &Rhs<'_>,
    start: [f64; 3],
    step: f64,
    s_min: f64,
    s_max: f64,
) -> Result<Vec<[f64; 4]>> {
    let mut back = march(field, start, step, s_min)?;
    back.reverse();
    back.push([0.0, start[0], start[1], start[2]]);
    back.extend(march(field, start, step, s_max)?);
    Ok(back)
}

/// Integrates the characteristics through every point of `curve` for
/// `s` between 0 and `length` (negative lengths run backwards).
pub fn integrate(
    field: &VectorFieldSpec,
    curve: &InitialCurve,
    step: f64,
    length: f64,
) -> Result<Vec<CharacteristicCurve>> {
    integrate_span(field, curve, step, length.min(0.0), length.max(0.0))
}

/// Integrates over `s in [s_min, s_max]` with `s_min <= 0 <= s_max`.
pub fn integrate_span(
    field: &VectorFieldSpec,
    curve: &InitialCurve,
    step: f64,
    s_min: f64,
    s_max: f64,
) -> Result<Vec<CharacteristicCurve>> {
    field.validate()?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {step}")));
    }
    if !(s_min <= 0.0 && s_max >= 0.0 && s_min.is_finite() && s_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "integration span [{s_min}, {s_max}] must contain 0"
        )));
    }
    let points = curve.points()?;
    for (index, p) in points.iter().enumerate() {
        let (v1, v2) = field.eval(p.x, p.y)?;
        let div = field.divergence(p.x, p.y);
        if !(div.abs() <= DIVERGENCE_TOL) {
            return Err(Error::FieldInvariant(format!(
                "divergence {div:.3e} at ({}, {}) exceeds {DIVERGENCE_TOL:.0e}",
                p.x, p.y
            )));
        }
        // characteristic direction against the curve normal
        let value = (v2 * -p.tangent.1 - v1 * p.tangent.0).abs();
        if value < TRANSVERSALITY_MIN {
            return Err(Error::Transversality { index, value });
        }
    }
    let rhs = |x: f64, y: f64| field.eval(x, y);
    points
        .par_iter()
        .map(|p| {
            let samples = integrate_with(&rhs, [p.x, p.y, p.u], step, s_min, s_max)?;
            let origin_index = samples.iter().position(|s| s[0] == 0.0).unwrap_or(0);
            Ok(CharacteristicCurve {
                origin: [p.x, p.y, p.u],
                origin_index,
                step,
                samples,
            })
        })
        .collect()
}

/// Curve dump: header `s,x,y,u`, one block per curve, blank-line separated.
pub fn write_curves_csv<W: Write>(curves: &[CharacteristicCurve], mut w: W) -> Result<()> {
    writeln!(w, "s,x,y,u")?;
    for (c, curve) in curves.iter().enumerate() {
        if c > 0 {
            writeln!(w)?;
        }
        for s in &curve.samples {
            writeln!(w, "{:e},{:e},{:e},{:e}", s[0], s[1], s[2], s[3])?;
        }
    }
    Ok(())
}

/// Largest `|u(s) - exact(x(s), y(s))|` over all samples.
pub fn max_sample_error(
    curves: &[CharacteristicCurve],
    exact: impl Fn(f64, f64) -> Result<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for c in curves {
        for s in &c.samples {
            worst = worst.max((s[3] - exact(s[1], s[2])?).abs());
        }
    }
    Ok(worst)
}

/// Curves interpolated onto a lattice.
#[derive(Clone, Debug)]
pub struct Resampled {
    pub domain: Arc<GridDomain>,
    /// `NaN` where not covered.
    pub values: Vec<f64>,
    pub coverage: Vec<bool>,
}

impl Resampled {
    pub fn covered_count(&self) -> usize {
        self.coverage.iter().filter(|&&c| c).count()
    }

    /// The covered part as a grid function on the restricted domain.
    pub fn to_grid_function(&self) -> Result<GridFunction> {
        let dom = Arc::new(self.domain.restricted(&self.coverage)?);
        let vals = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| if dom.is_active(k) { v } else { 0.0 })
            .collect();
        GridFunction::new(dom, vals)
    }

    pub fn max_error(&self, exact: impl Fn(f64, f64) -> Result<f64>) -> Result<f64> {
        let mut worst = 0.0f64;
        for (k, &v) in self.values.iter().enumerate() {
            if self.coverage[k] {
                let (x, y) = self.domain.coords(k);
                worst = worst.max((v - exact(x, y)?).abs());
            }
        }
        Ok(worst)
    }
}

/// Linear interpolation of the curve samples onto the active nodes of
/// `domain`.
///
/// Neighbouring curves are joined into triangles over matching samples;
/// a single curve covers only the nodes within `h / 2` of it.
pub fn resample_to_grid(curves: &[CharacteristicCurve], domain: Arc<GridDomain>) -> Result<Resampled> {
    let n = domain.len();
    let mut values = vec![f64::NAN; n];
    let mut coverage = vec![false; n];
    let (x0, y0, hx, hy) = (domain.x0(), domain.y0(), domain.hx(), domain.hy());
    let (nx, ny) = (domain.nx() as isize, domain.ny() as isize);
    let range = |lo: f64, hi: f64, o: f64, h: f64, m: isize| {
        let a = (((lo - o) / h).ceil() as isize).max(0);
        let b = (((hi - o) / h).floor() as isize).min(m - 1);
        a..=b
    };
    let mut assign = |k: usize, v: f64| {
        if domain.is_active(k) && !coverage[k] {
            coverage[k] = true;
            values[k] = v;
        }
    };
    if curves.len() == 1 {
        let reach = 0.5 * domain.h();
        for w in curves[0].samples.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b[1] - a[1], b[2] - a[2]);
            let len2 = dx * dx + dy * dy;
            for j in range(a[2].min(b[2]) - reach, a[2].max(b[2]) + reach, y0, hy, ny) {
                for i in range(a[1].min(b[1]) - reach, a[1].max(b[1]) + reach, x0, hx, nx) {
                    let (px, py) = (x0 + i as f64 * hx, y0 + j as f64 * hy);
                    let t = if len2 > 0.0 {
                        (((px - a[1]) * dx + (py - a[2]) * dy) / len2).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    let (qx, qy) = (a[1] + t * dx, a[2] + t * dy);
                    if (px - qx).hypot(py - qy) <= reach {
                        assign(j as usize * nx as usize + i as usize, a[3] + t * (b[3] - a[3]));
                    }
                }
            }
        }
    } else {
        for pair in curves.windows(2) {
            let (c0, c1) = (&pair[0].samples, &pair[1].samples);
            let m = c0.len().min(c1.len());
            for k in 0..m.saturating_sub(1) {
                let quad = [c0[k], c1[k], c1[k + 1], c0[k + 1]];
                for tri in [[quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]] {
                    let [a, b, c] = tri;
                    let det = (b[1] - a[1]) * (c[2] - a[2]) - (c[1] - a[1]) * (b[2] - a[2]);
                    let scale = (b[1] - a[1]).hypot(b[2] - a[2]) * (c[1] - a[1]).hypot(c[2] - a[2]);
                    if det.abs() <= 1e-12 * scale || scale == 0.0 {
                        continue;
                    }
                    let xs = [a[1], b[1], c[1]];
                    let ys = [a[2], b[2], c[2]];
                    let lo = |v: [f64; 3]| v[0].min(v[1]).min(v[2]);
                    let hi = |v: [f64; 3]| v[0].max(v[1]).max(v[2]);
                    for j in range(lo(ys), hi(ys), y0, hy, ny) {
                        for i in range(lo(xs), hi(xs), x0, hx, nx) {
                            let (px, py) = (x0 + i as f64 * hx, y0 + j as f64 * hy);
                            let l1 = ((px - a[1]) * (c[2] - a[2]) - (c[1] - a[1]) * (py - a[2])) / det;
                            let l2 = ((b[1] - a[1]) * (py - a[2]) - (px - a[1]) * (b[2] - a[2])) / det;
                            let l0 = 1.0 - l1 - l2;
                            let eps = -1e-12;
                            if l0 >= eps && l1 >= eps && l2 >= eps {
                                assign(
                                    j as usize * nx as usize + i as usize,
                                    l0 * a[3] + l1 * b[3] + l2 * c[3],
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    if !coverage.iter().any(|&c| c) {
        return Err(Error::EmptyCoverage);
    }
    Ok(Resampled {
        domain,
        values,
        coverage,
    })
}

/// Tolerances for [`certify`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyTolerances {
    /// Max of `|v2 p - v1 q|`.
    pub linpde: f64,
    /// Max of `|div n0|`.
    pub residual: f64,
    /// Max of `|n0 - sigma V|`.
    pub alignment: f64,
    /// Exclusion radius around the characteristic mask, in grid spacings.
    pub mask_cells: f64,
}

impl CertifyTolerances {
    /// Second-order defaults for spacing `h`.
    pub fn for_spacing(h: f64) -> Self {
        Self {
            linpde: 10.0 * h * h,
            residual: 100.0 * h * h,
            alignment: h,
            mask_cells: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub field: String,
    pub h: f64,
    pub tolerances: CertifyTolerances,
    pub evaluated_nodes: usize,
    pub characteristic_nodes: usize,
    /// Nodes next to a lattice edge across which `(p, q)` passes through 0.
    pub locus_nodes: usize,
    pub field_failures: usize,
    pub linpde_max: f64,
    pub residual_max: f64,
    pub alignment_max: f64,
    /// Edges between regular nodes where `sign(n0 . V)` changes.
    pub sign_flips: usize,
    pub sign_flips_off_mask: usize,
    pub linpde_ok: bool,
    pub residual_ok: bool,
    pub alignment_ok: bool,
    pub flips_ok: bool,
    pub passed: bool,
}

/// Does the segment from `a` to `b` pass close to the origin?
fn crosses_zero(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return false;
    }
    let t = (-(a.0 * dx + a.1 * dy) / len2).clamp(0.0, 1.0);
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    cx.hypot(cy) <= 0.1 * len2.sqrt()
}

/// Checks that `u` has Gauss map `±V`: the linear PDE, the minimal surface
/// residual and nodewise alignment, away from the characteristic mask.
///
/// The mask holds the characteristic nodes and the endpoints of lattice
/// edges across which `(p, q)` changes direction through zero. Sign flips
/// of `n0 . V` are expected only there.
pub fn certify(u: &GridFunction, field: &VectorFieldSpec, tol: CertifyTolerances) -> Result<CertifyReport> {
    field.validate()?;
    let gm: GaussMap = gauss_map_of(gradient(u), None)?;
    let d = u.domain();
    let n = d.len();
    let mut v = vec![None; n];
    let mut field_failures = 0;
    for &k in d.interior_nodes() {
        let (x, y) = d.coords(k);
        match field.eval(x, y) {
            Ok(w) => v[k] = Some(w),
            Err(_) => field_failures += 1,
        }
    }
    let sigma = |k: usize| -> Option<f64> {
        let (n1, n2) = gm.unit(k)?;
        let (v1, v2) = v[k]?;
        Some(if n1 * v1 + n2 * v2 >= 0.0 { 1.0 } else { -1.0 })
    };
    let mut seeds: Vec<usize> = gm.characteristic_nodes();
    let characteristic_nodes = seeds.len();
    let mut locus = vec![false; n];
    let mut flip_edges = Vec::new();
    for &k in d.interior_nodes() {
        for (di, dj) in [(1, 0), (0, 1)] {
            let Some(nb) = d.offset(k, di, dj).filter(|&nb| d.is_interior(nb)) else {
                continue;
            };
            if crosses_zero(gm.field.at(k), gm.field.at(nb)) {
                locus[k] = true;
                locus[nb] = true;
            }
            if let (Some(a), Some(b)) = (sigma(k), sigma(nb)) {
                if a != b {
                    flip_edges.push((k, nb));
                }
            }
        }
    }
    let locus_nodes = locus.iter().filter(|&&f| f).count();
    seeds.extend((0..n).filter(|&k| locus[k]));

    // 8-neighbourhood of the mask for flip attribution
    let near = |k: usize, mark: &[bool]| {
        (-1..=1).any(|dj| (-1..=1).any(|di| d.offset(k, di, dj).is_some_and(|m| mark[m])))
    };
    let mut mask = locus.clone();
    for (k, m) in mask.iter_mut().enumerate() {
        *m |= gm.characteristic[k];
    }
    let sign_flips = flip_edges.len();
    let sign_flips_off_mask = flip_edges
        .iter()
        .filter(|&&(a, b)| !(near(a, &mask) || near(b, &mask)))
        .count();

    let radius = tol.mask_cells * d.h();
    let mut keep: Vec<bool> = (0..n).map(|k| gm.is_regular(k) && v[k].is_some()).collect();
    let mi = (radius / d.hx()).ceil() as isize;
    let mj = (radius / d.hy()).ceil() as isize;
    for &k in &seeds {
        for dj in -mj..=mj {
            for di in -mi..=mi {
                let (ex, ey) = (di as f64 * d.hx(), dj as f64 * d.hy());
                if ex * ex + ey * ey <= radius * radius {
                    if let Some(nb) = d.offset(k, di, dj) {
                        keep[nb] = false;
                    }
                }
            }
        }
    }
    let div = divergence_of_unit(&gm);
    let (mut linpde_max, mut residual_max, mut alignment_max) = (0.0f64, 0.0f64, 0.0f64);
    let mut evaluated_nodes = 0;
    for k in (0..n).filter(|&k| keep[k]) {
        let (Some((v1, v2)), Some((n1, n2)), Some(s)) = (v[k], gm.unit(k), sigma(k)) else {
            continue;
        };
        evaluated_nodes += 1;
        let (p, q) = gm.field.at(k);
        linpde_max = linpde_max.max((v2 * p - v1 * q).abs());
        alignment_max = alignment_max.max((n1 - s * v1).hypot(n2 - s * v2));
        if let Some(r) = div.get(k) {
            residual_max = residual_max.max(r.abs());
        }
    }
    let linpde_ok = linpde_max <= tol.linpde;
    let residual_ok = residual_max <= tol.residual;
    let alignment_ok = alignment_max <= tol.alignment;
    let flips_ok = sign_flips_off_mask == 0;
    Ok(CertifyReport {
        field: field.name().into(),
        h: d.h(),
        tolerances: tol,
        evaluated_nodes,
        characteristic_nodes,
        locus_nodes,
        field_failures,
        linpde_max,
        residual_max,
        alignment_max,
        sign_flips,
        sign_flips_off_mask,
        linpde_ok,
        residual_ok,
        alignment_ok,
        flips_ok,
        passed: linpde_ok && residual_ok && alignment_ok && flips_ok && evaluated_nodes > 0,
    })
}
