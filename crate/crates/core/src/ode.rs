//! Radial reductions: the corkscrew equation, its closed form, and the
//! rotationally symmetric `H_cc = 1` profile.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Branch sign in front of the closed-form corkscrew profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Sign {
    #[default]
    #[serde(rename = "+", alias = "plus")]
    Plus,
    #[serde(rename = "-", alias = "minus")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Closed-form corkscrew profile
/// `v(r) = ±(w/b − a·atan(1/w)) + c`, `w = sqrt(b r² − 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorkSol {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    #[serde(default)]
    pub sign: Sign,
}

impl CorkSol {
    pub fn new(a: f64, b: f64, c: f64, sign: Sign) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("corkscrew needs b > 0, got {b}")));
        }
        if !a.is_finite() || !c.is_finite() {
            return Err(Error::InvalidParameter("corkscrew parameters must be finite".into()));
        }
        Ok(Self { a, b, c, sign })
    }

    /// Smallest admissible radius, `1/sqrt(b)` (excluded).
    pub fn r_min(&self) -> f64 {
        1.0 / self.b.sqrt()
    }

    fn surd(&self, r: f64) -> Result<f64> {
        let arg = self.b * r * r - 1.0;
        if !(arg > 0.0) || !(r > 0.0) {
            return Err(Error::OutOfDomain(format!(
                "corkscrew profile needs b r^2 > 1 (b = {}, r = {r})",
                self.b
            )));
        }
        Ok(arg.sqrt())
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        let w = self.surd(r)?;
        Ok(self.sign.value() * (w / self.b - self.a * (1.0 / w).atan()) + self.c)
    }

    /// `(v, v', v'')` with analytic derivatives.
    pub fn eval(&self, r: f64) -> Result<(f64, f64, f64)> {
        let w = self.surd(r)?;
        let sg = self.sign.value();
        let v = sg * (w / self.b - self.a * (1.0 / w).atan()) + self.c;
        let num = r * r + self.a;
        let vp = sg * num / (r * w);
        let vpp = sg * (2.0 * r * r * w - num * (2.0 * self.b * r * r - 1.0) / w) / (r * r * w * w);
        Ok((v, vp, vpp))
    }

    /// `z² − 2aθz − RHS` for `z = v(r) + aθ − c`, with RHS the displayed
    /// implicit right-hand side in terms of `r` and `θ`.
    pub fn implicit_residual(&self, r: f64, theta: f64) -> Result<f64> {
        let w = self.surd(r)?;
        let (a, b) = (self.a, self.b);
        let at = (1.0 / w).atan();
        let z = self.value(r)? - self.c + a * theta;
        let rhs = r * r / b - 1.0 / (b * b) - 2.0 * a / b * at * w + a * a * at * at
            - a * a * theta * theta;
        Ok(z * z - 2.0 * a * theta * z - rhs)
    }

    /// Sample on `[r0, r1]` with `n + 1` equispaced radii.
    pub fn profile(&self, r0: f64, r1: f64, n: usize) -> Result<RadialProfile> {
        if !(r1 > r0) || n == 0 {
            return Err(Error::InvalidParameter(format!("bad profile interval [{r0}, {r1}]")));
        }
        let mut prof = RadialProfile {
            r: Vec::with_capacity(n + 1),
            v: Vec::with_capacity(n + 1),
            vp: Vec::with_capacity(n + 1),
            params: Some(*self),
        };
        for k in 0..=n {
            let r = r0 + (r1 - r0) * k as f64 / n as f64;
            let (v, vp, _) = self.eval(r)?;
            prof.push(r, v, vp);
        }
        Ok(prof)
    }
}

/// Right-hand side of the corkscrew equation `v'' = F(r, v')`.
pub fn cork_rhs(a: f64, r: f64, vp: f64) -> f64 {
    let den = r * (a * a + 2.0 * r * r * a + r.powi(4));
    -(vp * (2.0 * a * a + 2.0 * r * r * a) + r * r * vp.powi(3)) / den
}

/// Residual of the corkscrew equation in numerator form, scaled by `r³ s³`
/// where `s² = v'² + a²/r² + 2a + r²`.
pub fn cork_residual(a: f64, r: f64, vp: f64, vpp: f64) -> f64 {
    let num = vpp * (r * a * a + 2.0 * r.powi(3) * a + r.powi(5))
        + vp * (2.0 * a * a + 2.0 * r * r * a)
        + r * r * vp.powi(3);
    let s2 = vp * vp + a * a / (r * r) + 2.0 * a + r * r;
    num / (r.powi(3) * s2.powf(1.5))
}

/// Sampled `(r, v(r), v'(r))` with strictly increasing `r`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub r: Vec<f64>,
    pub v: Vec<f64>,
    pub vp: Vec<f64>,
    pub params: Option<CorkSol>,
}

impl RadialProfile {
    fn push(&mut self, r: f64, v: f64, vp: f64) {
        self.r.push(r);
        self.v.push(v);
        self.vp.push(vp);
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Max of `|v − v_ref|` over the samples.
    pub fn max_error(&self, reference: impl Fn(f64) -> Result<f64>) -> Result<f64> {
        let mut err = 0.0f64;
        for (r, v) in self.r.iter().zip(&self.v) {
            err = err.max((v - reference(*r)?).abs());
        }
        Ok(err)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,v,vp")?;
        for k in 0..self.len() {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", self.r[k], self.v[k], self.vp[k])?;
        }
        Ok(())
    }
}

/// RK4 for the corkscrew equation written as `(v, v')' = (v', F(r, v'))`.
///
/// The last step is shortened so the profile ends exactly at `r_end`.
pub fn solve_cork(a: f64, r0: f64, v0: f64, v0p: f64, r_end: f64, step: f64) -> Result<RadialProfile> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {step}")));
    }
    if !(r0 > 0.0) {
        return Err(Error::InvalidParameter(format!("r0 must be > 0, got {r0}")));
    }
    if !(r_end > r0) {
        return Err(Error::InvalidParameter(format!("need r_end > r0, got [{r0}, {r_end}]")));
    }
    if ![a, v0, v0p, r_end].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite corkscrew input".into()));
    }
    // a² + 2ar² + r⁴ = (r² + a)², zero only at r² = −a
    if a < 0.0 {
        let rs = (-a).sqrt();
        if rs >= r0 && rs <= r_end {
            return Err(Error::OutOfDomain(format!(
                "corkscrew denominator vanishes at r = {rs} inside [{r0}, {r_end}]"
            )));
        }
    }

    let n = ((r_end - r0) / step - 1e-9).ceil().max(1.0) as usize;
    let mut prof = RadialProfile::default();
    let (mut v, mut vp) = (v0, v0p);
    prof.push(r0, v, vp);
    for k in 0..n {
        let r = r0 + k as f64 * step;
        let h = if k + 1 == n { r_end - r } else { step };
        let f = |r: f64, vp: f64| cork_rhs(a, r, vp);
        let (k1v, k1p) = (vp, f(r, vp));
        let (k2v, k2p) = (vp + 0.5 * h * k1p, f(r + 0.5 * h, vp + 0.5 * h * k1p));
        let (k3v, k3p) = (vp + 0.5 * h * k2p, f(r + 0.5 * h, vp + 0.5 * h * k2p));
        let (k4v, k4p) = (vp + h * k3p, f(r + h, vp + h * k3p));
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        vp += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        if !v.is_finite() || !vp.is_finite() {
            return Err(Error::OutOfDomain(format!("corkscrew integration blew up near r = {r}")));
        }
        prof.push(if k + 1 == n { r_end } else { r + h }, v, vp);
    }
    Ok(prof)
}

/// Upper profile of the rotationally symmetric `H_cc = 1` surface,
/// `f(r) = −½ r sqrt(4 − r²) + 2 atan(r / sqrt(4 − r²))`.
pub fn cmc_profile(r: f64) -> Result<f64> {
    let w = cmc_surd(r)?;
    Ok(-0.5 * r * w + 2.0 * (r / w).atan())
}

/// `f'(r) = r² / sqrt(4 − r²)`
pub fn cmc_profile_derivative(r: f64) -> Result<f64> {
    let w = cmc_surd(r)?;
    Ok(r * r / w)
}

fn cmc_surd(r: f64) -> Result<f64> {
    if !(0.0..2.0).contains(&r) {
        return Err(Error::OutOfDomain(format!("cmc profile needs 0 <= r < 2, got {r}")));
    }
    Ok((4.0 - r * r).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    #[test]
    fn corksol_values() {
        let c = CorkSol::new(0.0, 1.0, 0.0, Sign::Plus).unwrap();
        assert!((c.value(SQRT_2).unwrap() - 1.0).abs() < 1e-15);
        assert!(c.value(1.0 + 1e-12).unwrap().abs() < 1e-5);
        assert!(c.value(1.0).is_err());
        assert!(c.value(0.5).is_err());
        assert!(CorkSol::new(0.0, 0.0, 0.0, Sign::Plus).is_err());
    }

    #[test]
    fn corksol_derivatives_match_finite_differences() {
        let c = CorkSol::new(1.3, 0.7, 0.2, Sign::Minus).unwrap();
        for r in [1.4, 2.0, 3.5] {
            let (_, vp, vpp) = c.eval(r).unwrap();
            let h = 1e-5;
            let fd1 = (c.value(r + h).unwrap() - c.value(r - h).unwrap()) / (2.0 * h);
            let fd2 = (c.eval(r + h).unwrap().1 - c.eval(r - h).unwrap().1) / (2.0 * h);
            assert!((vp - fd1).abs() < 1e-8);
            assert!((vpp - fd2).abs() < 1e-7);
        }
    }

    #[test]
    fn corksol_solves_cork_equation() {
        for &(a, b, c) in &[(0.0, 1.0, 0.0), (1.0, 1.0, 0.0), (-0.4, 2.5, 1.0), (3.0, 0.3, -2.0)] {
            for sign in [Sign::Plus, Sign::Minus] {
                let cs = CorkSol::new(a, b, c, sign).unwrap();
                let r_lo = (1.2f64 / b).sqrt();
                for k in 0..50 {
                    let r = r_lo + 0.1 * k as f64;
                    if a < 0.0 && (r * r + a).abs() < 1e-3 {
                        continue;
                    }
                    let (_, vp, vpp) = cs.eval(r).unwrap();
                    let rel = (vpp - cork_rhs(a, r, vp)).abs() / (1.0 + vpp.abs());
                    assert!(rel <= 1e-10, "a={a} b={b} r={r}: {rel}");
                }
            }
        }
    }

    #[test]
    fn implicit_form() {
        for &(a, b) in &[(0.0, 1.0), (1.0, 1.0), (0.5, 2.0)] {
            let cs = CorkSol::new(a, b, 0.0, Sign::Plus).unwrap();
            for &(r, th) in &[(1.5, 0.3), (2.2, -2.0), (3.0, 2.9)] {
                assert!(cs.implicit_residual(r, th).unwrap().abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn cork_equilibrium() {
        let p = solve_cork(0.0, 1.0, 0.7, 0.0, 3.0, 0.01).unwrap();
        assert!(p.v.iter().all(|v| *v == 0.7));
        assert!(p.vp.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cork_rejects_bad_input() {
        assert!(solve_cork(0.0, 1.0, 0.0, 1.0, 2.0, 0.0).is_err());
        assert!(solve_cork(0.0, 0.0, 0.0, 1.0, 2.0, 0.1).is_err());
        assert!(solve_cork(-2.0, 1.0, 0.0, 1.0, 2.0, 0.1).is_err());
        assert!(solve_cork(-9.0, 1.0, 0.0, 1.0, 2.0, 0.1).is_ok());
    }

    #[test]
    fn cmc_profile_values() {
        assert_eq!(cmc_profile(0.0).unwrap(), 0.0);
        assert!((cmc_profile(SQRT_2).unwrap() - (FRAC_PI_2 - 1.0)).abs() < 1e-14);
        let r3 = 3f64.sqrt();
        assert!((cmc_profile(r3).unwrap() - (2.0 * PI / 3.0 - r3 / 2.0)).abs() < 1e-14);
        assert!(cmc_profile(2.0).is_err());
        let h = 1e-6;
        for r in [0.3, 1.0, 1.7] {
            let fd = (cmc_profile(r + h).unwrap() - cmc_profile(r - h).unwrap()) / (2.0 * h);
            assert!((fd - cmc_profile_derivative(r).unwrap()).abs() < 1e-8);
        }
    }
}
