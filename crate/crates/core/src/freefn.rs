//! The free real function `g` carried by several solution families.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real function of one variable with its first derivative.
#[derive(Clone)]
pub enum FreeFunction {
    Zero,
    /// `g(s) = s`
    Identity,
    /// `g(s) = offset + coef * s^2`
    Quadratic { coef: f64, offset: f64 },
    /// `g(s) = amp * sin(k s)^power`, `power` in {1, 2}
    Sine { k: f64, amp: f64, power: u8 },
    /// `g(s) = atan(s)`
    Atan,
    /// `g(s) = s / sqrt(1 + s^2)`
    Algebraic,
    /// `g(s) = amp * exp(-s^2 / (2 sigma^2))`
    Gauss { amp: f64, sigma: f64 },
    Spline(CubicSpline),
    /// Analytic callback returning `(g(s), g'(s))`.
    Custom(Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>),
}

impl fmt::Debug for FreeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FreeFunction::Custom(_) => f.write_str("Custom(..)"),
            FreeFunction::Spline(s) => write!(f, "Spline({} knots)", s.knots.len()),
            other => write!(f, "{}", serde_json::to_string(&GSpec::from(other)).unwrap_or_default()),
        }
    }
}

impl FreeFunction {
    pub fn sine(k: f64, amp: f64) -> Self {
        FreeFunction::Sine { k, amp, power: 1 }
    }

    pub fn sine_squared(k: f64, amp: f64) -> Self {
        FreeFunction::Sine { k, amp, power: 2 }
    }

    pub fn square() -> Self {
        FreeFunction::Quadratic {
            coef: 1.0,
            offset: 0.0,
        }
    }

    /// `(g(s), g'(s))`
    pub fn eval(&self, s: f64) -> (f64, f64) {
        match self {
            FreeFunction::Zero => (0.0, 0.0),
            FreeFunction::Identity => (s, 1.0),
            FreeFunction::Quadratic { coef, offset } => (offset + coef * s * s, 2.0 * coef * s),
            FreeFunction::Sine { k, amp, power } => {
                let (sn, cs) = (k * s).sin_cos();
                if *power == 2 {
                    (amp * sn * sn, 2.0 * amp * k * sn * cs)
                } else {
                    (amp * sn, amp * k * cs)
                }
            }
            FreeFunction::Atan => (s.atan(), 1.0 / (1.0 + s * s)),
            FreeFunction::Algebraic => {
                let w = (1.0 + s * s).sqrt();
                (s / w, 1.0 / (w * w * w))
            }
            FreeFunction::Gauss { amp, sigma } => {
                let e = amp * (-s * s / (2.0 * sigma * sigma)).exp();
                (e, -s / (sigma * sigma) * e)
            }
            FreeFunction::Spline(sp) => sp.eval(s),
            FreeFunction::Custom(f) => f(s),
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        self.eval(s).0
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.eval(s).1
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, FreeFunction::Spline(_))
    }

    fn validate(&self) -> Result<()> {
        match self {
            FreeFunction::Sine { power, .. } if *power != 1 && *power != 2 => Err(
                Error::InvalidParameter(format!("sine power must be 1 or 2, got {power}")),
            ),
            FreeFunction::Gauss { sigma, .. } if !(*sigma > 0.0) => Err(Error::InvalidParameter(
                format!("gauss sigma must be > 0, got {sigma}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Natural cubic spline through `(knots[i], values[i])`, extended linearly.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = knots.len();
        if n < 2 || values.len() != n {
            return Err(Error::InvalidParameter(format!(
                "spline needs >= 2 knots and matching values ({} knots, {} values)",
                n,
                values.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("spline knots must increase strictly".into()));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("spline data must be finite".into()));
        }
        // tridiagonal system for the second derivatives, natural end conditions
        let mut second = vec![0.0; n];
        if n > 2 {
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for k in 0..m {
                let i = k + 1;
                let h0 = knots[i] - knots[i - 1];
                let h1 = knots[i + 1] - knots[i];
                diag[k] = 2.0 * (h0 + h1);
                upper[k] = h1;
                rhs[k] = 6.0
                    * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
            }
            for k in 1..m {
                let lower = knots[k + 1] - knots[k];
                let f = lower / diag[k - 1];
                diag[k] -= f * upper[k - 1];
                rhs[k] -= f * rhs[k - 1];
            }
            let mut sol = vec![0.0; m];
            for k in (0..m).rev() {
                let next = if k + 1 < m { upper[k] * sol[k + 1] } else { 0.0 };
                sol[k] = (rhs[k] - next) / diag[k];
            }
            second[1..n - 1].copy_from_slice(&sol);
        }
        Ok(Self {
            knots,
            values,
            second,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, s: f64) -> (f64, f64) {
        let n = self.knots.len();
        let slope = |i: usize| -> f64 {
            // derivative at a knot from the cubic on its right (or left, last knot)
            if i + 1 < n {
                let h = self.knots[i + 1] - self.knots[i];
                (self.values[i + 1] - self.values[i]) / h
                    - h * (2.0 * self.second[i] + self.second[i + 1]) / 6.0
            } else {
                let h = self.knots[i] - self.knots[i - 1];
                (self.values[i] - self.values[i - 1]) / h
                    + h * (self.second[i - 1] + 2.0 * self.second[i]) / 6.0
            }
        };
        if s <= self.knots[0] {
            let d = slope(0);
            return (self.values[0] + d * (s - self.knots[0]), d);
        }
        if s >= self.knots[n - 1] {
            let d = slope(n - 1);
            return (self.values[n - 1] + d * (s - self.knots[n - 1]), d);
        }
        let i = match self.knots.binary_search_by(|k| k.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - s) / h;
        let b = (s - self.knots[i]) / h;
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let v = a * self.values[i]
            + b * self.values[i + 1]
            + ((a.powi(3) - a) * m0 + (b.powi(3) - b) * m1) * h * h / 6.0;
        let d = (self.values[i + 1] - self.values[i]) / h
            + (-(3.0 * a * a - 1.0) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        (v, d)
    }
}

/// JSON form of a free function:
/// `{"kind": "analytic-preset", "preset": "sine", "params": {"k": 3, "amp": 2, "power": 2}}`
/// or `{"kind": "spline", "knots": [...], "values": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum GSpec {
    #[serde(rename = "analytic-preset")]
    AnalyticPreset {
        preset: String,
        #[serde(default)]
        params: serde_json::Map<String, serde_json::Value>,
    },
    #[serde(rename = "spline")]
    Spline { knots: Vec<f64>, values: Vec<f64> },
    #[serde(rename = "custom")]
    Custom,
}

fn param(params: &serde_json::Map<String, serde_json::Value>, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::Parse(format!("parameter {key:?} must be a number"))),
    }
}

impl TryFrom<GSpec> for FreeFunction {
    type Error = Error;

    fn try_from(spec: GSpec) -> Result<Self> {
        let g = match spec {
            GSpec::Spline { knots, values } => FreeFunction::Spline(CubicSpline::new(knots, values)?),
            GSpec::Custom => {
                return Err(Error::Parse("custom free functions cannot be read from JSON".into()))
            }
            GSpec::AnalyticPreset { preset, params } => match preset.as_str() {
                "zero" => FreeFunction::Zero,
                "identity" | "linear" => FreeFunction::Identity,
                "square" => FreeFunction::Quadratic {
                    coef: param(&params, "coef", 1.0)?,
                    offset: param(&params, "offset", 0.0)?,
                },
                "sine" => {
                    let power = param(&params, "power", 1.0)?;
                    FreeFunction::Sine {
                        k: param(&params, "k", 1.0)?,
                        amp: param(&params, "amp", 1.0)?,
                        power: if power == 2.0 { 2 } else if power == 1.0 { 1 } else { 0 },
                    }
                }
                "atan" => FreeFunction::Atan,
                "algebraic" => FreeFunction::Algebraic,
                "gauss" => FreeFunction::Gauss {
                    amp: param(&params, "amp", 1.0)?,
                    sigma: param(&params, "sigma", 1.0)?,
                },
                other => return Err(Error::Parse(format!("unknown preset {other:?}"))),
            },
        };
        g.validate()?;
        Ok(g)
    }
}

impl From<&FreeFunction> for GSpec {
    fn from(g: &FreeFunction) -> Self {
        let preset = |name: &str, kv: &[(&str, f64)]| GSpec::AnalyticPreset {
            preset: name.to_string(),
            params: kv
                .iter()
                .map(|(k, v)| (k.to_string(), serde_json::json!(v)))
                .collect(),
        };
        match g {
            FreeFunction::Zero => preset("zero", &[]),
            FreeFunction::Identity => preset("identity", &[]),
            FreeFunction::Quadratic { coef, offset } => {
                preset("square", &[("coef", *coef), ("offset", *offset)])
            }
            FreeFunction::Sine { k, amp, power } => {
                preset("sine", &[("k", *k), ("amp", *amp), ("power", *power as f64)])
            }
            FreeFunction::Atan => preset("atan", &[]),
            FreeFunction::Algebraic => preset("algebraic", &[]),
            FreeFunction::Gauss { amp, sigma } => preset("gauss", &[("amp", *amp), ("sigma", *sigma)]),
            FreeFunction::Spline(s) => GSpec::Spline {
                knots: s.knots.clone(),
                values: s.values.clone(),
            },
            FreeFunction::Custom(_) => GSpec::Custom,
        }
    }
}

impl Serialize for FreeFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for FreeFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        FreeFunction::try_from(GSpec::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}
