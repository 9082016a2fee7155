//! Closed-form solutions of the minimal surface equation and their verifiers.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::freefn::FreeFunction;
use crate::geometry::{self, energy, energy_squared, gauss_map, GaussMap, Lambda};
use crate::grid::{GridDomain, GridFunction, Region};
use crate::ode::{cmc_profile, CorkSol, Sign};

/// A closed-form graph `z = u(x, y)`.
#[derive(Clone, Debug)]
pub enum ExampleSpec {
    /// `a x + b y + c`
    Plane { a: f64, b: f64, c: f64 },
    /// `a θ`
    Helicoid { a: f64 },
    /// `v(r) + a θ` with `v` the closed-form corkscrew profile
    Corkscrew(CorkSol),
    /// `x y + g(y)`
    TransInvariant { g: FreeFunction },
    /// `k x² + x y + g(y + k x)`, `k = α / sqrt(1 − α²)`
    ConstGaussPlus { alpha: f64, g: FreeFunction },
    /// `−(β/α) x² + x y + g(y − (β/α) x)`, `β = sqrt(1 − α²)`
    ConstGaussMinus { alpha: f64, g: FreeFunction },
    /// `g(y / x)`
    Helicoidal { g: FreeFunction },
    /// `a x²/(b + x) + b x y/(b + x) + g((y − a)/(b + x))`
    PlaneAssociated { a: f64, b: f64, g: FreeFunction },
    /// `x² + x y`
    NonUnique1,
    /// `x y + 1 − y²`
    NonUnique2,
    /// Upper half of the rotationally symmetric `H_cc = 1` surface.
    CmcEgg,
}

/// Polar angle in `(−π, π]`, cut along the negative x-axis.
pub fn polar_angle(x: f64, y: f64) -> f64 {
    y.atan2(x)
}

impl ExampleSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ExampleSpec::Plane { .. } => "plane",
            ExampleSpec::Helicoid { .. } => "helicoid",
            ExampleSpec::Corkscrew(_) => "corkscrew",
            ExampleSpec::TransInvariant { .. } => "trans_invariant",
            ExampleSpec::ConstGaussPlus { .. } => "const_gauss_plus",
            ExampleSpec::ConstGaussMinus { .. } => "const_gauss_minus",
            ExampleSpec::Helicoidal { .. } => "helicoidal",
            ExampleSpec::PlaneAssociated { .. } => "plane_associated",
            ExampleSpec::NonUnique1 => "nonunique1",
            ExampleSpec::NonUnique2 => "nonunique2",
            ExampleSpec::CmcEgg => "cmc_egg",
        }
    }

    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let finite = |vals: &[f64]| {
            if vals.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{} parameters must be finite", self.name())))
            }
        };
        match self {
            ExampleSpec::Plane { a, b, c } => finite(&[*a, *b, *c]),
            ExampleSpec::Helicoid { a } => finite(&[*a]),
            ExampleSpec::Corkscrew(cs) => CorkSol::new(cs.a, cs.b, cs.c, cs.sign).map(|_| ()),
            ExampleSpec::ConstGaussPlus { alpha, .. } => check_alpha(*alpha, false),
            ExampleSpec::ConstGaussMinus { alpha, .. } => check_alpha(*alpha, true),
            ExampleSpec::PlaneAssociated { a, b, .. } => finite(&[*a, *b]),
            _ => Ok(()),
        }
    }

    /// True when the value depends on a polar angle with a branch cut.
    pub fn is_angle_valued(&self) -> bool {
        match self {
            ExampleSpec::Helicoid { a } => *a != 0.0,
            ExampleSpec::Corkscrew(cs) => cs.a != 0.0,
            _ => false,
        }
    }

    /// Signed level function of the set where the formula is undefined:
    /// zero on the set, `<= 0` inside it for radial families, `+∞` when
    /// there is no such set.
    pub fn singular_level(&self, x: f64, y: f64) -> f64 {
        match self {
            ExampleSpec::Corkscrew(cs) => x.hypot(y) - cs.r_min(),
            ExampleSpec::Helicoidal { .. } => x,
            ExampleSpec::PlaneAssociated { b, .. } => x + b,
            ExampleSpec::CmcEgg => 2.0 - x.hypot(y),
            _ => f64::INFINITY,
        }
    }

    /// Distance to the singular set, `0` inside it.
    pub fn singular_distance(&self, x: f64, y: f64) -> f64 {
        match self {
            ExampleSpec::Helicoidal { .. } | ExampleSpec::PlaneAssociated { .. } => {
                self.singular_level(x, y).abs()
            }
            _ => self.singular_level(x, y).max(0.0),
        }
    }

    /// Distance to everything a residual stencil must stay away from: the
    /// singular set, the angle branch cut, and the singular origin of radial
    /// families.
    pub fn exclusion_distance(&self, x: f64, y: f64) -> f64 {
        let hard = self.singular_distance(x, y).max(0.0);
        let r = x.hypot(y);
        let cut = if x < 0.0 { y.abs() } else { r };
        let soft = match self {
            ExampleSpec::Helicoid { .. } => {
                if self.is_angle_valued() {
                    cut
                } else {
                    f64::INFINITY
                }
            }
            ExampleSpec::Corkscrew(_) if self.is_angle_valued() => cut,
            ExampleSpec::Helicoidal { .. } => r,
            ExampleSpec::CmcEgg => r,
            _ => f64::INFINITY,
        };
        hard.min(soft)
    }

    /// Pointwise evaluation.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if self.singular_distance(x, y) <= 0.0 {
            return Err(Error::OutOfDomain(format!(
                "{} is undefined at ({x}, {y})",
                self.name()
            )));
        }
        let v = match self {
            ExampleSpec::Plane { a, b, c } => a * x + b * y + c,
            ExampleSpec::Helicoid { a } => a * polar_angle(x, y),
            ExampleSpec::Corkscrew(cs) => cs.value(x.hypot(y))? + cs.a * polar_angle(x, y),
            ExampleSpec::TransInvariant { g } => x * y + g.value(y),
            ExampleSpec::ConstGaussPlus { alpha, g } => {
                if alpha.abs() == 1.0 {
                    -x * y + g.value(x)
                } else {
                    let k = alpha / (1.0 - alpha * alpha).sqrt();
                    k * x * x + x * y + g.value(y + k * x)
                }
            }
            ExampleSpec::ConstGaussMinus { alpha, g } => {
                if alpha.abs() == 1.0 {
                    -x * y + g.value(x)
                } else {
                    let m = (1.0 - alpha * alpha).sqrt() / alpha;
                    -m * x * x + x * y + g.value(y - m * x)
                }
            }
            ExampleSpec::Helicoidal { g } => g.value(y / x),
            ExampleSpec::PlaneAssociated { a, b, g } => {
                let d = b + x;
                a * x * x / d + b * x * y / d + g.value((y - a) / d)
            }
            ExampleSpec::NonUnique1 => x * x + x * y,
            ExampleSpec::NonUnique2 => x * y + 1.0 - y * y,
            ExampleSpec::CmcEgg => cmc_profile(x.hypot(y))?,
        };
        if !v.is_finite() {
            return Err(Error::OutOfDomain(format!(
                "{} is not finite at ({x}, {y})",
                self.name()
            )));
        }
        Ok(v)
    }

    /// `div n0` expected for an exact solution (0, or 1 for the CMC profile).
    pub fn target_curvature(&self) -> f64 {
        match self {
            ExampleSpec::CmcEgg => 1.0,
            _ => 0.0,
        }
    }

    /// A domain on which the family is smooth and its residual can be
    /// verified at the usual grid spacings.
    pub fn default_region(&self) -> Region {
        let rect = |x_min, x_max, y_min, y_max| Region::Rectangle {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        match self {
            ExampleSpec::Plane { .. } => rect(0.0, 1.0, 0.0, 1.0),
            ExampleSpec::Helicoid { .. } | ExampleSpec::Helicoidal { .. } => rect(0.5, 1.5, -0.5, 0.5),
            ExampleSpec::Corkscrew(cs) => {
                let x0 = 1.2 * cs.r_min();
                rect(x0, x0 + 1.0, -0.5, 0.5)
            }
            ExampleSpec::TransInvariant { .. } => rect(0.5, 1.5, -1.0, 1.0),
            ExampleSpec::ConstGaussPlus { .. } | ExampleSpec::ConstGaussMinus { .. } => {
                rect(-1.0, 1.0, -1.0, 1.0)
            }
            ExampleSpec::PlaneAssociated { a, b, .. } => {
                let x0 = (1.5 - b).max(0.5);
                rect(x0, x0 + 1.0, a - 0.5, a + 0.5)
            }
            ExampleSpec::NonUnique1 | ExampleSpec::NonUnique2 => Region::unit_disk(),
            ExampleSpec::CmcEgg => Region::Annulus {
                cx: 0.0,
                cy: 0.0,
                r_inner: 0.2,
                r_outer: 1.8,
            },
        }
    }

    fn free_function(&self) -> Option<&FreeFunction> {
        match self {
            ExampleSpec::TransInvariant { g }
            | ExampleSpec::ConstGaussPlus { g, .. }
            | ExampleSpec::ConstGaussMinus { g, .. }
            | ExampleSpec::Helicoidal { g }
            | ExampleSpec::PlaneAssociated { g, .. } => Some(g),
            _ => None,
        }
    }
}

fn check_alpha(alpha: f64, minus: bool) -> Result<()> {
    if !(-1.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha must lie in [-1, 1], got {alpha}")));
    }
    if minus && alpha == 0.0 {
        return Err(Error::InvalidParameter(
            "const_gauss_minus is singular at alpha = 0".into(),
        ));
    }
    Ok(())
}

/// JSON form: `{"family": "...", "params": {..}, "g": {..}, "domain": {..}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawSpec {
    family: String,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    g: Option<FreeFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<Region>,
}

/// An example together with an optional domain, as read from a spec file.
#[derive(Clone, Debug)]
pub struct ExampleDocument {
    pub spec: ExampleSpec,
    pub domain: Option<Region>,
}

impl ExampleDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let domain = raw.domain.clone();
        Ok(Self {
            spec: ExampleSpec::try_from(raw)?,
            domain,
        })
    }

    pub fn region(&self) -> Region {
        self.domain.clone().unwrap_or_else(|| self.spec.default_region())
    }
}

impl Serialize for ExampleDocument {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut raw = RawSpec::from(&self.spec);
        raw.domain = self.domain.clone();
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExampleDocument {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSpec::deserialize(d)?;
        let domain = raw.domain.clone();
        let spec = ExampleSpec::try_from(raw).map_err(serde::de::Error::custom)?;
        Ok(Self { spec, domain })
    }
}

impl Serialize for ExampleSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExampleSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ExampleSpec::try_from(RawSpec::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl From<&ExampleSpec> for RawSpec {
    fn from(spec: &ExampleSpec) -> Self {
        let params = match spec {
            ExampleSpec::Plane { a, b, c } => json!({"a": a, "b": b, "c": c}),
            ExampleSpec::Helicoid { a } => json!({ "a": a }),
            ExampleSpec::Corkscrew(cs) => json!({"a": cs.a, "b": cs.b, "c": cs.c, "sign": cs.sign}),
            ExampleSpec::ConstGaussPlus { alpha, .. } | ExampleSpec::ConstGaussMinus { alpha, .. } => {
                json!({ "alpha": alpha })
            }
            ExampleSpec::PlaneAssociated { a, b, .. } => json!({"a": a, "b": b}),
            _ => json!({}),
        };
        RawSpec {
            family: spec.name().to_string(),
            params: match params {
                Value::Object(m) => m,
                _ => Map::new(),
            },
            g: spec.free_function().cloned(),
            domain: None,
        }
    }
}

impl TryFrom<RawSpec> for ExampleSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let p = &raw.params;
        let num = |key: &str| -> Result<f64> {
            p.get(key)
                .ok_or_else(|| Error::Parse(format!("{}: missing parameter {key:?}", raw.family)))?
                .as_f64()
                .ok_or_else(|| Error::Parse(format!("{}: parameter {key:?} must be a number", raw.family)))
        };
        let num_or = |key: &str, default: f64| -> Result<f64> {
            if p.contains_key(key) {
                num(key)
            } else {
                Ok(default)
            }
        };
        let g = || -> Result<FreeFunction> {
            raw.g
                .clone()
                .ok_or_else(|| Error::Parse(format!("{}: missing free function \"g\"", raw.family)))
        };
        let family = raw.family.to_ascii_lowercase().replace('-', "_");
        let spec = match family.as_str() {
            "plane" => ExampleSpec::Plane {
                a: num("a")?,
                b: num("b")?,
                c: num_or("c", 0.0)?,
            },
            "helicoid" => ExampleSpec::Helicoid { a: num_or("a", 1.0)? },
            "corkscrew" => {
                let sign = match p.get("sign") {
                    None => Sign::Plus,
                    Some(Value::Number(n)) if n.as_f64().is_some_and(|v| v < 0.0) => Sign::Minus,
                    Some(Value::Number(_)) => Sign::Plus,
                    Some(v) => serde_json::from_value(v.clone())
                        .map_err(|e| Error::Parse(format!("corkscrew sign: {e}")))?,
                };
                ExampleSpec::Corkscrew(CorkSol::new(num("a")?, num("b")?, num_or("c", 0.0)?, sign)?)
            }
            "trans_invariant" | "translation_invariant" => ExampleSpec::TransInvariant { g: g()? },
            "const_gauss_plus" => ExampleSpec::ConstGaussPlus {
                alpha: num("alpha")?,
                g: g()?,
            },
            "const_gauss_minus" => ExampleSpec::ConstGaussMinus {
                alpha: num("alpha")?,
                g: g()?,
            },
            "helicoidal" => ExampleSpec::Helicoidal { g: g()? },
            "plane_associated" => ExampleSpec::PlaneAssociated {
                a: num("a")?,
                b: num("b")?,
                g: g()?,
            },
            "nonunique1" | "u1" => ExampleSpec::NonUnique1,
            "nonunique2" | "u2" => ExampleSpec::NonUnique2,
            "cmc_egg" | "cmcegg" => ExampleSpec::CmcEgg,
            other => return Err(Error::Parse(format!("unknown family {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Exact values of `spec` at every active node of `domain`.
///
/// Fails when the singular set of the family passes through the domain:
/// some active node is undefined, or the singular set separates two
/// neighbouring active nodes.
pub fn sample(spec: &ExampleSpec, domain: &Arc<GridDomain>) -> Result<GridFunction> {
    spec.validate()?;
    let mut values = vec![f64::NAN; domain.len()];
    let mut bad = Vec::new();
    for (idx, val) in values.iter_mut().enumerate() {
        if !domain.is_active(idx) {
            continue;
        }
        let (x, y) = domain.coords(idx);
        let level = spec.singular_level(x, y);
        let crosses = [(1, 0), (0, 1)].iter().any(|&(di, dj)| {
            domain
                .offset(idx, di, dj)
                .filter(|&nb| domain.is_active(nb))
                .is_some_and(|nb| {
                    let (xn, yn) = domain.coords(nb);
                    level * spec.singular_level(xn, yn) <= 0.0
                })
        });
        if crosses || level == 0.0 {
            bad.push((x, y));
            continue;
        }
        match spec.eval(x, y) {
            Ok(v) => *val = v,
            Err(_) => bad.push((x, y)),
        }
    }
    if !bad.is_empty() {
        let detail = match spec {
            ExampleSpec::Corkscrew(cs) => format!("b r^2 <= 1 (r <= {})", cs.r_min()),
            ExampleSpec::Helicoidal { .. } => "x = 0".into(),
            ExampleSpec::PlaneAssociated { b, .. } => format!("x = {}", -b),
            ExampleSpec::CmcEgg => "r >= 2".into(),
            _ => "undefined values".into(),
        };
        return Err(Error::SingularSet {
            family: spec.name().to_string(),
            detail,
            count: bad.len(),
            nodes: bad.into_iter().take(8).collect(),
        });
    }
    GridFunction::new(domain.clone(), values)
}

/// Knobs for [`verify`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Exclusion radius around singular, characteristic and sign-flip nodes,
    /// in units of the grid spacing.
    pub buffer: f64,
    /// Residuals below this are treated as exact when computing orders.
    pub exact_floor: f64,
    pub min_order: f64,
    /// Level-dependent residual bound `bound_const * h^2`.
    pub bound_const: f64,
    /// The surface is sampled on the region grown by this many cells and
    /// the residual is read off at nodes of the closed region, so boundary
    /// stencils never enter the reported maximum.
    pub pad_cells: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            buffer: 4.0,
            exact_floor: 1e-9,
            min_order: 1.9,
            bound_const: 1e3,
            pad_cells: 3.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelResult {
    pub h: f64,
    /// Max of `|div n0 − κ|` (with `|div n0|` in place of `div n0` when κ ≠ 0).
    pub max_residual: f64,
    pub evaluated_nodes: usize,
    pub excluded_nodes: usize,
    pub characteristic_nodes: usize,
    /// Mean of `div n0` over the evaluated nodes.
    pub mean_divergence: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub family: String,
    pub region: Region,
    pub target_curvature: f64,
    /// Sign of the mean divergence on the finest level, when a nonzero
    /// curvature is expected.
    pub observed_sign: Option<f64>,
    pub levels: Vec<LevelResult>,
    /// Observed order between consecutive levels; `None` when both residuals
    /// are below the exactness floor.
    pub orders: Vec<Option<f64>>,
    /// Smallest observed order (`+∞` when every pair is exact).
    pub min_order: f64,
    pub bound_const: f64,
    pub passed: bool,
}

/// Nodes kept for residual evaluation: regular nodes farther than `radius`
/// from the analytic exclusion set and from characteristic or sign-flip
/// nodes of the discrete Gauss map.
pub(crate) fn residual_mask(
    spec: Option<&ExampleSpec>,
    gm: &GaussMap,
    radius: f64,
) -> Vec<bool> {
    let d = gm.field.domain();
    let mut seeds = Vec::new();
    for &k in d.interior_nodes() {
        if gm.characteristic[k] {
            seeds.push(k);
            continue;
        }
        let (n1, n2) = (gm.n1[k], gm.n2[k]);
        let flips = [(1, 0), (0, 1)].iter().any(|&(di, dj)| {
            d.offset(k, di, dj)
                .and_then(|nb| gm.unit(nb))
                .is_some_and(|(m1, m2)| n1 * m1 + n2 * m2 < 0.0)
        });
        if flips {
            seeds.push(k);
        }
    }
    let mut keep: Vec<bool> = (0..d.len())
        .map(|k| {
            gm.is_regular(k)
                && spec.is_none_or(|s| {
                    let (x, y) = d.coords(k);
                    s.exclusion_distance(x, y) > radius
                })
        })
        .collect();
    let (hx, hy) = (d.hx(), d.hy());
    let mi = (radius / hx).ceil() as isize;
    let mj = (radius / hy).ceil() as isize;
    for &k in &seeds {
        for dj in -mj..=mj {
            for di in -mi..=mi {
                let (ex, ey) = (di as f64 * hx, dj as f64 * hy);
                if ex * ex + ey * ey > radius * radius {
                    continue;
                }
                if let Some(nb) = d.offset(k, di, dj) {
                    keep[nb] = false;
                }
            }
        }
    }
    keep
}

fn level_residual(spec: &ExampleSpec, region: &Region, h: f64, opts: &VerifyOptions) -> Result<LevelResult> {
    // half-cell offset puts the cell-centred nodes on the rectangle's edges
    let pad = match region {
        Region::Rectangle { .. } => (opts.pad_cells + 0.5) * h,
        _ => opts.pad_cells * h,
    };
    let domain = Arc::new(region.padded(pad).grid(h)?);
    let u = sample(spec, &domain)?;
    let gm = gauss_map(&u, None)?;
    let div = geometry::divergence_of_unit(&gm);
    let mut keep = residual_mask(Some(spec), &gm, opts.buffer * domain.h());
    let tol = 1e-9 * domain.h();
    for (k, flag) in keep.iter_mut().enumerate() {
        let (x, y) = domain.coords(k);
        *flag = *flag && region.contains(x, y, tol);
    }
    let kappa = spec.target_curvature();
    let mut worst = 0.0f64;
    let mut evaluated = 0usize;
    let mut excluded = 0usize;
    let mut divs = Vec::new();
    for &k in domain.interior_nodes() {
        let (x, y) = domain.coords(k);
        if !region.contains(x, y, tol) {
            continue;
        }
        match (keep[k], div.get(k)) {
            (true, Some(v)) => {
                evaluated += 1;
                divs.push(v);
                let r = if kappa == 0.0 { v.abs() } else { (v.abs() - kappa).abs() };
                worst = worst.max(r);
            }
            _ => excluded += 1,
        }
    }
    if evaluated == 0 {
        return Err(Error::InvalidParameter(format!(
            "no nodes left to verify at h = {h} after exclusions"
        )));
    }
    Ok(LevelResult {
        h: domain.h(),
        max_residual: worst,
        evaluated_nodes: evaluated,
        excluded_nodes: excluded,
        characteristic_nodes: gm.characteristic.iter().filter(|c| **c).count(),
        mean_divergence: crate::grid::pairwise_sum(&divs) / divs.len() as f64,
    })
}

/// Runs the residual at each spacing of `h_levels` (coarse to fine) and
/// reports the observed convergence order.
pub fn verify(
    spec: &ExampleSpec,
    region: &Region,
    h_levels: &[f64],
    opts: &VerifyOptions,
) -> Result<VerifyReport> {
    let mut hs: Vec<f64> = h_levels.to_vec();
    if hs.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        return Err(Error::InvalidParameter("grid spacings must be positive".into()));
    }
    hs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    hs.dedup();
    if hs.len() < 2 {
        return Err(Error::InvalidParameter(
            "verify needs at least two distinct refinement levels".into(),
        ));
    }
    let levels = hs
        .iter()
        .map(|&h| level_residual(spec, region, h, opts))
        .collect::<Result<Vec<_>>>()?;
    let orders: Vec<Option<f64>> = levels
        .windows(2)
        .map(|w| {
            let (c, f) = (&w[0], &w[1]);
            if c.max_residual <= opts.exact_floor && f.max_residual <= opts.exact_floor {
                None
            } else {
                Some((c.max_residual / f.max_residual).ln() / (c.h / f.h).ln())
            }
        })
        .collect();
    let min_order = orders.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
    let within_bound = levels
        .iter()
        .all(|l| l.max_residual <= opts.bound_const * l.h * l.h);
    let kappa = spec.target_curvature();
    let observed_sign = (kappa != 0.0).then(|| levels.last().unwrap().mean_divergence.signum());
    Ok(VerifyReport {
        family: spec.name().to_string(),
        region: region.clone(),
        target_curvature: kappa,
        observed_sign,
        passed: min_order >= opts.min_order && within_bound,
        levels,
        orders,
        min_order,
        bound_const: opts.bound_const,
    })
}

/// Energies of the two graphs spanning the same boundary curve over the unit disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonUniquenessReport {
    pub h: f64,
    /// Max over boundary nodes of `|u1 − u2|`.
    pub boundary_gap: f64,
    pub e1: f64,
    pub e2: f64,
    pub esq1: f64,
    pub esq2: f64,
    pub interior_nodes: usize,
}

/// `u1 = x² + xy` and `u2 = xy + 1 − y²` on a discretised unit disk.
pub fn nonuniqueness_report(domain: &Arc<GridDomain>) -> Result<NonUniquenessReport> {
    let h = domain.h();
    let off_circle = domain.boundary_nodes().iter().any(|&k| {
        let (x, y) = domain.coords(k);
        (x.hypot(y) - 1.0).abs() > 2.0 * h + 1e-12
    });
    if off_circle {
        return Err(Error::InvalidParameter(
            "non-uniqueness report needs a discretised unit disk".into(),
        ));
    }
    let u1 = sample(&ExampleSpec::NonUnique1, domain)?;
    let u2 = sample(&ExampleSpec::NonUnique2, domain)?;
    Ok(NonUniquenessReport {
        h,
        boundary_gap: u1.boundary_gap(&u2)?,
        e1: energy(&u1, Lambda::Infinity),
        e2: energy(&u2, Lambda::Infinity),
        esq1: energy_squared(&u1),
        esq2: energy_squared(&u2),
        interior_nodes: domain.interior_nodes().len(),
    })
}

/// `8√2/3`, the value of both energies on the unit disk.
pub const NONUNIQUE_ENERGY: f64 = 3.771_236_166_328_253_7;

/// `2π`, the value of both squared energies on the unit disk.
pub const NONUNIQUE_ENERGY_SQUARED: f64 = 2.0 * PI;

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    fn dom(region: Region, h: f64) -> Arc<GridDomain> {
        Arc::new(region.grid(h).unwrap())
    }

    fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Region {
        Region::Rectangle {
            x_min: x0,
            x_max: x1,
            y_min: y0,
            y_max: y1,
        }
    }

    #[test]
    fn nonunique_energy_constant() {
        assert!((NONUNIQUE_ENERGY - 8.0 * SQRT_2 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn plane_associated_recovers_plane() {
        let d = dom(rect(0.0, 1.0, -1.0, 1.0), 1.0 / 32.0);
        let p = sample(&ExampleSpec::Plane { a: 1.0, b: 1.0, c: -1.0 }, &d).unwrap();
        let q = sample(
            &ExampleSpec::PlaneAssociated { a: 1.0, b: 1.0, g: FreeFunction::Identity },
            &d,
        )
        .unwrap();
        assert!(p.max_abs_diff(&q).unwrap() <= 1e-12);
    }

    #[test]
    fn helicoidal_atan_is_helicoid() {
        let d = dom(rect(0.1, 2.0, -2.0, 2.0), 1.0 / 32.0);
        let a = sample(&ExampleSpec::Helicoidal { g: FreeFunction::Atan }, &d).unwrap();
        let b = sample(&ExampleSpec::Helicoid { a: 1.0 }, &d).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() <= 1e-12);
    }

    #[test]
    fn const_gauss_specialisations() {
        let d = dom(Region::unit_disk(), 1.0 / 32.0);
        let g = FreeFunction::Quadratic { coef: -1.0, offset: 1.0 };
        let a = sample(&ExampleSpec::ConstGaussPlus { alpha: 0.0, g }, &d).unwrap();
        let b = sample(&ExampleSpec::NonUnique2, &d).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() <= 1e-14);
        let a = sample(
            &ExampleSpec::ConstGaussPlus { alpha: FRAC_1_SQRT_2, g: FreeFunction::Zero },
            &d,
        )
        .unwrap();
        let b = sample(&ExampleSpec::NonUnique1, &d).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() <= 1e-12);
    }

    #[test]
    fn singular_domain_is_rejected() {
        let d = dom(rect(-0.5, 0.5, 0.0, 1.0), 1.0 / 16.0);
        match sample(&ExampleSpec::Helicoidal { g: FreeFunction::Atan }, &d) {
            Err(Error::SingularSet { count, .. }) => assert!(count > 0),
            other => panic!("expected singular-set error, got {other:?}"),
        }
        let cs = CorkSol::new(1.0, 1.0, 0.0, Sign::Plus).unwrap();
        assert!(sample(&ExampleSpec::Corkscrew(cs), &dom(Region::unit_disk(), 0.1)).is_err());
        assert!(sample(&ExampleSpec::CmcEgg, &dom(rect(0.0, 2.5, 0.0, 0.5), 0.1)).is_err());
    }

    #[test]
    fn const_gauss_plus_gauss_map_is_constant_up_to_sign() {
        let alpha: f64 = 0.3;
        let beta = (1.0 - alpha * alpha).sqrt();
        let g = FreeFunction::sine(2.0, 0.5);
        let spec = ExampleSpec::ConstGaussPlus { alpha, g: g.clone() };
        let d = dom(rect(-1.0, 1.0, -1.0, 1.0), 1.0 / 64.0);
        let u = sample(&spec, &d).unwrap();
        let gm = gauss_map(&u, None).unwrap();
        let k = alpha / beta;
        for &n in d.interior_nodes() {
            if let Some((n1, n2)) = gm.unit(n) {
                let (x, y) = d.coords(n);
                let s = 2.0 * x + g.derivative(y + k * x);
                if s.abs() < 0.05 {
                    continue;
                }
                // discrete gradient of g differs from g' by O(h^2)
                assert!((n1 - s.signum() * alpha).abs() < 1e-3, "{n1} at ({x},{y})");
                assert!((n2 - s.signum() * beta).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"family":"const_gauss_plus","params":{"alpha":0.5},
            "g":{"kind":"analytic-preset","preset":"sine","params":{"k":3,"amp":2,"power":2}},
            "domain":{"kind":"rectangle","x_min":0,"x_max":1,"y_min":0,"y_max":1}}"#;
        let doc = ExampleDocument::from_json(text).unwrap();
        assert!(doc.domain.is_some());
        let back = serde_json::to_string(&doc).unwrap();
        let again = ExampleDocument::from_json(&back).unwrap();
        assert_eq!(again.spec.eval(0.3, 0.2).unwrap(), doc.spec.eval(0.3, 0.2).unwrap());
        let cs = ExampleDocument::from_json(
            r#"{"family":"corkscrew","params":{"a":1,"b":1,"sign":"-"}}"#,
        )
        .unwrap();
        assert!(matches!(cs.spec, ExampleSpec::Corkscrew(CorkSol { sign: Sign::Minus, .. })));
        assert!(ExampleDocument::from_json(r#"{"family":"plane","params":{"a":1}}"#).is_err());
        assert!(ExampleDocument::from_json(r#"{"family":"catenoid"}"#).is_err());
        assert!(ExampleDocument::from_json(r#"{"family":"helicoidal"}"#).is_err());
        assert!(ExampleDocument::from_json(
            r#"{"family":"const_gauss_minus","params":{"alpha":0},"g":{"kind":"analytic-preset","preset":"zero"}}"#
        )
        .is_err());
    }

    #[test]
    fn verify_trans_invariant_sine() {
        let spec = ExampleSpec::TransInvariant { g: FreeFunction::sine(1.0, 1.0) };
        let rep = verify(&spec, &spec.default_region(), &[1.0 / 32.0, 1.0 / 64.0], &VerifyOptions::default())
            .unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.levels.iter().all(|l| l.max_residual < 1e-9));
    }

    #[test]
    fn verify_needs_two_levels() {
        let spec = ExampleSpec::NonUnique1;
        assert!(verify(&spec, &Region::unit_disk(), &[0.1], &VerifyOptions::default()).is_err());
    }

    #[test]
    fn nonuniqueness_coarse() {
        let d = dom(Region::unit_disk(), 1.0 / 64.0);
        let rep = nonuniqueness_report(&d).unwrap();
        assert!(rep.boundary_gap <= 2.0 * rep.h);
        assert!((rep.esq1 - rep.esq2).abs() < 0.05);
        let sq = dom(rect(0.0, 1.0, 0.0, 1.0), 1.0 / 16.0);
        assert!(nonuniqueness_report(&sq).is_err());
    }
}
