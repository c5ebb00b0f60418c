//! Scalar tempered algebra.
//!
//! `exp_t` and `log_t` deform the classical pair through the temperature `t`:
//!
//! ```text
//! exp_t(z) = [1 + (1 - t) z]_+^{1 / (1 - t)}      log_t(z) = (z^{1 - t} - 1) / (1 - t)
//! ```
//!
//! `t = 1` is an exact branch (plain `exp` / `ln`), never a limit. For `t > 1`
//! the base `1 + (1 - t) z` reaches zero at `z = 1 / (t - 1)` and `exp_t` is
//! `+inf` from there on; that value is carried as [`ExtendedReal::PosInfinity`]
//! and reciprocals map it to an exact zero.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Deformation parameter `t` together with its conjugate `t* = 1 / (2 - t)`.
///
/// Densities are recovered from tilde-space measures with the power `1 / t* = 2 - t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Temperature {
    t: f64,
    t_star: f64,
}

impl Temperature {
    pub fn new(t: f64) -> Result<Self> {
        if !t.is_finite() || !(0.0..2.0).contains(&t) {
            return Err(Error::Temperature(t));
        }
        Ok(Self {
            t,
            t_star: 1.0 / (2.0 - t),
        })
    }

    /// The classical, undeformed temperature.
    pub fn one() -> Self {
        Self { t: 1.0, t_star: 1.0 }
    }

    #[inline]
    pub fn t(&self) -> f64 {
        self.t
    }

    #[inline]
    pub fn t_star(&self) -> f64 {
        self.t_star
    }

    /// Exponent mapping a tilde-space value to its co-density, `2 - t`.
    #[inline]
    pub fn density_power(&self) -> f64 {
        2.0 - self.t
    }

    #[inline]
    pub fn is_one(&self) -> bool {
        self.t == 1.0
    }
}

impl<'de> Deserialize<'de> for Temperature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            t: f64,
        }
        let raw = Raw::deserialize(d)?;
        Temperature::new(raw.t).map_err(serde::de::Error::custom)
    }
}

/// A real number or `+inf`, as produced by `exp_t` for `t > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInfinity,
}

impl ExtendedReal {
    fn from_f64(x: f64) -> Self {
        if x == f64::INFINITY {
            ExtendedReal::PosInfinity
        } else {
            ExtendedReal::Finite(x)
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(x) => Some(x),
            ExtendedReal::PosInfinity => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtendedReal::PosInfinity)
    }

    /// `1 / self`, with `1 / +inf = 0` exactly.
    pub fn recip(self) -> f64 {
        match self {
            ExtendedReal::Finite(x) => 1.0 / x,
            ExtendedReal::PosInfinity => 0.0,
        }
    }

    /// Lossy conversion; `+inf` becomes `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtendedReal::Finite(x) => x,
            ExtendedReal::PosInfinity => f64::INFINITY,
        }
    }
}

/// The pre-clamp base `1 + (1 - t) z` of `exp_t`.
#[inline]
pub fn exp_base(z: f64, t: f64) -> f64 {
    1.0 + (1.0 - t) * z
}

/// `exp_t` for an arbitrary real deformation parameter.
pub fn exp_with(z: f64, t: f64) -> ExtendedReal {
    if t == 1.0 {
        return ExtendedReal::from_f64(z.exp());
    }
    let base = exp_base(z, t);
    if base <= 0.0 {
        return if t < 1.0 {
            ExtendedReal::Finite(0.0)
        } else {
            ExtendedReal::PosInfinity
        };
    }
    ExtendedReal::from_f64(base.powf(1.0 / (1.0 - t)))
}

/// `log_t` for an arbitrary real deformation parameter.
///
/// `z = 0` is admitted when `t < 1`, where `log_t(0) = -1 / (1 - t)`.
pub fn log_with(z: f64, t: f64) -> Result<f64> {
    if z.is_nan() || z < 0.0 {
        return Err(domain("log_t", format!("argument {z} is negative")));
    }
    if t == 1.0 {
        if z == 0.0 {
            return Err(domain("log_t", "log(0) at t = 1"));
        }
        return Ok(z.ln());
    }
    if z == 0.0 && t > 1.0 {
        return Err(domain("log_t", format!("log_t(0) diverges at t = {t}")));
    }
    Ok((z.powf(1.0 - t) - 1.0) / (1.0 - t))
}

pub fn exp_t(z: f64, temp: Temperature) -> ExtendedReal {
    exp_with(z, temp.t)
}

pub fn log_t(z: f64, temp: Temperature) -> Result<f64> {
    log_with(z, temp.t)
}

/// Tempered subtraction `a ⊖_t b = (a - b) / (1 + (1 - t) b)`.
pub fn ominus_t(a: f64, b: f64, temp: Temperature) -> Result<f64> {
    if temp.is_one() {
        return Ok(a - b);
    }
    let den = exp_base(b, temp.t);
    if den == 0.0 {
        return Err(domain(
            "ominus_t",
            format!("b = {b} is the excluded point -1/(1-t)"),
        ));
    }
    Ok((a - b) / den)
}

/// Unary tempered negation `⊖_t a = 0 ⊖_t a`.
pub fn neg_t(a: f64, temp: Temperature) -> Result<f64> {
    ominus_t(0.0, a, temp)
}

/// Tempered product `a ⊗_t b = [a^{1-t} + b^{1-t} - 1]_+^{1/(1-t)}`.
pub fn otimes_t(a: f64, b: f64, temp: Temperature) -> Result<f64> {
    if a.is_nan() || b.is_nan() || a < 0.0 || b < 0.0 {
        return Err(domain("otimes_t", format!("arguments ({a}, {b}) must be >= 0")));
    }
    if temp.is_one() {
        return Ok(a * b);
    }
    let e = 1.0 - temp.t;
    let base = a.powf(e) + b.powf(e) - 1.0;
    if base <= 0.0 {
        return Ok(0.0);
    }
    Ok(base.powf(1.0 / e))
}

/// Bregman generator `φ_t(z) = z log_t z - log_{t-1} z`, extended continuously at `z = 0`.
pub fn phi_t(z: f64, temp: Temperature) -> Result<f64> {
    if z.is_nan() || z < 0.0 {
        return Err(domain("phi_t", format!("argument {z} is negative")));
    }
    let lower = log_with(z, temp.t - 1.0)?;
    if z == 0.0 {
        return Ok(-lower);
    }
    Ok(z * log_with(z, temp.t)? - lower)
}

/// Generalized tempered relative entropy `D_t(u ‖ v)` between nonnegative vectors.
///
/// Accepts anything that iterates `&f64` with a known length (slices, ndarray views),
/// so matrices are compared entrywise.
pub fn tempered_divergence<'a, U, V>(u: U, v: V, temp: Temperature) -> Result<f64>
where
    U: IntoIterator<Item = &'a f64>,
    U::IntoIter: ExactSizeIterator,
    V: IntoIterator<Item = &'a f64>,
    V::IntoIter: ExactSizeIterator,
{
    let u = u.into_iter();
    let v = v.into_iter();
    if u.len() != v.len() {
        return Err(Error::Shape {
            expected: format!("{} entries", u.len()),
            got: format!("{} entries", v.len()),
        });
    }
    let t = temp.t;
    let mut total = 0.0;
    for (&ui, &vi) in u.zip(v) {
        if ui < 0.0 || vi < 0.0 || ui.is_nan() || vi.is_nan() {
            return Err(domain("tempered_divergence", "entries must be >= 0"));
        }
        let mut term = log_with(vi, t - 1.0)? - log_with(ui, t - 1.0)?;
        if ui > 0.0 {
            if vi == 0.0 && t >= 1.0 {
                return Err(domain(
                    "tempered_divergence",
                    "second argument vanishes on the support of the first",
                ));
            }
            term += ui * (log_with(ui, t)? - log_with(vi, t)?);
        }
        total += term;
    }
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp(t: f64) -> Temperature {
        Temperature::new(t).unwrap()
    }

    #[test]
    fn temperature_range() {
        assert!(Temperature::new(-0.1).is_err());
        assert!(Temperature::new(2.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
        let t = temp(0.5);
        assert_eq!(t.t_star(), 1.0 / 1.5);
        assert_eq!(temp(1.0), Temperature::one());
    }

    #[test]
    fn exp_t_examples() {
        for t in [0.0, 0.3, 1.0, 1.5, 1.9] {
            assert_eq!(exp_t(0.0, temp(t)), ExtendedReal::Finite(1.0));
        }
        assert_eq!(exp_t(1.0, temp(0.0)), ExtendedReal::Finite(2.0));
        assert_eq!(exp_t(-3.0, temp(0.5)), ExtendedReal::Finite(0.0));
        // t > 1: pole at z = 1/(t-1) = 2
        assert!(exp_t(2.0, temp(1.5)).is_infinite());
        assert!(exp_t(5.0, temp(1.5)).is_infinite());
        assert_eq!(exp_t(5.0, temp(1.5)).recip(), 0.0);
        assert!(exp_t(1.99, temp(1.5)).finite().unwrap() > 1e4);
    }

    #[test]
    fn log_t_examples() {
        for t in [0.0, 0.5, 1.0, 1.5] {
            assert_eq!(log_t(1.0, temp(t)).unwrap(), 0.0);
            let back = log_t(exp_t(0.7, temp(t)).finite().unwrap(), temp(t)).unwrap();
            assert!((back - 0.7).abs() < 1e-14, "t={t}: {back}");
        }
        assert_eq!(log_t(0.0, temp(0.0)).unwrap(), -1.0);
        assert!(log_t(0.0, temp(1.0)).is_err());
        assert!(log_t(0.0, temp(1.5)).is_err());
        assert!(log_t(-1.0, temp(0.5)).is_err());
    }

    #[test]
    fn ominus_examples() {
        for t in [0.0, 0.5, 1.0, 1.7] {
            assert_eq!(ominus_t(3.25, 0.0, temp(t)).unwrap(), 3.25);
        }
        assert_eq!(ominus_t(5.0, 5.0, temp(0.5)).unwrap(), 0.0);
        assert!(ominus_t(1.0, -2.0, temp(0.5)).is_err());
        assert_eq!(ominus_t(1.0, -2.0, temp(1.0)).unwrap(), 3.0);
    }

    #[test]
    fn otimes_examples() {
        for t in [0.0, 0.5, 1.0, 1.5] {
            assert!((otimes_t(0.37, 1.0, temp(t)).unwrap() - 0.37).abs() < 1e-15);
        }
        assert_eq!(otimes_t(0.5, 0.5, temp(0.0)).unwrap(), 0.0);
        assert_eq!(otimes_t(2.0, 3.0, temp(1.0)).unwrap(), 6.0);
        assert!(otimes_t(-1.0, 1.0, temp(0.5)).is_err());
    }

    #[test]
    fn phi_examples() {
        for t in [0.0, 0.5, 1.0, 1.5] {
            assert_eq!(phi_t(1.0, temp(t)).unwrap(), 0.0);
            // continuous extension at zero equals t*
            let at_zero = phi_t(0.0, temp(t)).unwrap();
            let near = phi_t(1e-12, temp(t)).unwrap();
            assert!((at_zero - temp(t).t_star()).abs() < 1e-14);
            assert!((at_zero - near).abs() < 1e-5, "t={t}");
        }
        for z in [0.1f64, 0.8, 2.5] {
            let expected = z * z.ln() - (z - 1.0);
            assert!((phi_t(z, temp(1.0)).unwrap() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_derivative_is_log_t() {
        let t = temp(0.5);
        let z = 0.8;
        let h = 1e-5;
        let fd = (phi_t(z + h, t).unwrap() - phi_t(z - h, t).unwrap()) / (2.0 * h);
        assert!((fd - log_t(z, t).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn divergence_identities() {
        let u = [0.2, 0.0, 0.5, 1.3];
        let v = [0.1, 0.4, 0.5, 0.9];
        for t in [0.0, 0.5, 1.0, 1.5] {
            assert_eq!(tempered_divergence(&u, &u, temp(t)).unwrap(), 0.0);
            assert!(tempered_divergence(&u, &v, temp(t)).unwrap() > 0.0);
        }
        let kl: f64 = u
            .iter()
            .zip(&v)
            .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() } else { 0.0 } - a + b)
            .sum();
        let d1 = tempered_divergence(&u, &v, temp(1.0)).unwrap();
        assert!((d1 - kl).abs() < 1e-14);
    }

    #[test]
    fn divergence_errors() {
        assert!(tempered_divergence(&[0.1, 0.2], &[0.1], temp(0.5)).is_err());
        assert!(tempered_divergence(&[0.1], &[0.0], temp(1.0)).is_err());
        assert!(tempered_divergence(&[0.1], &[0.0], temp(0.5)).is_ok());
        assert!(tempered_divergence(&[-0.1], &[0.2], temp(0.5)).is_err());
    }
}
