//! Parametric feature families `φ(θ)` with analytic θ-derivatives up to
//! order 3, sampled on grid measures.
//!
//! Translated families are `φ(θ)(t) = k((t − θ)/σ₀)` for a profile `k`;
//! the scale family is `φ(θ)(t) = e^{−θt}` on `θ > 0`. The Laplace profile
//! `e^{−|t|}` is deliberately absent: it is not three times differentiable.

use crate::error::{Error, Result};
use crate::measure::{inner, norm, GridMeasure, HilbertVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    GaussianTranslate,
    CauchyTranslate,
    SincTranslate,
    ExpScale,
}

impl Family {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gaussian_translate" | "gaussian" => Ok(Self::GaussianTranslate),
            "cauchy_translate" | "cauchy" => Ok(Self::CauchyTranslate),
            "sinc_translate" | "sinc" => Ok(Self::SincTranslate),
            "exp_scale" | "exp" => Ok(Self::ExpScale),
            other => Err(Error::Parse(format!("unknown dictionary family '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::GaussianTranslate => "gaussian_translate",
            Self::CauchyTranslate => "cauchy_translate",
            Self::SincTranslate => "sinc_translate",
            Self::ExpScale => "exp_scale",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DictionarySpec {
    pub family: Family,
    /// σ₀ for translated families; ignored by `ExpScale`.
    pub scale: f64,
    /// Open parameter interval Θ.
    pub theta_min: f64,
    pub theta_max: f64,
}

impl DictionarySpec {
    pub fn new(family: Family, scale: f64, theta_min: f64, theta_max: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::Invalid("scale must be positive".into()));
        }
        if !(theta_min < theta_max) {
            return Err(Error::Invalid("empty parameter interval".into()));
        }
        if family == Family::ExpScale && theta_min < 0.0 {
            return Err(Error::Invalid("exp_scale needs Θ ⊆ (0,∞)".into()));
        }
        Ok(Self {
            family,
            scale,
            theta_min,
            theta_max,
        })
    }

    pub fn translated(family: Family, scale: f64) -> Result<Self> {
        Self::new(family, scale, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta > self.theta_min && theta < self.theta_max
    }

    /// `∂_θ^i φ(θ)` evaluated at a single time point.
    pub fn point_deriv(&self, theta: f64, t: f64, i: usize) -> f64 {
        debug_assert!(i <= 3);
        match self.family {
            Family::GaussianTranslate => {
                let x = (t - theta) / self.scale;
                // ∂_θ brings a factor −1/σ₀ per order.
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * gaussian_profile_deriv(x, i) / self.scale.powi(i as i32)
            }
            Family::CauchyTranslate => {
                let x = (t - theta) / self.scale;
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * cauchy_profile_deriv(x, i) / self.scale.powi(i as i32)
            }
            Family::SincTranslate => {
                let x = (t - theta) / self.scale;
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                s * sinc_profile_deriv(x, i) / self.scale.powi(i as i32)
            }
            Family::ExpScale => (-t).powi(i as i32) * (-theta * t).exp(),
        }
    }

    pub fn feature_deriv(&self, theta: f64, i: usize, m: &GridMeasure) -> Result<HilbertVector> {
        if i > 3 {
            return Err(Error::Invalid(format!("derivative order {i} > 3")));
        }
        if !self.contains(theta) {
            return Err(Error::Domain(format!(
                "θ = {theta} outside ({}, {})",
                self.theta_min, self.theta_max
            )));
        }
        HilbertVector::from_fn(m, |t| self.point_deriv(theta, t, i))
    }
}

/// `k(t) = e^{−t²/2}`; `k^{(i)} = P_i · k` with Hermite-type polynomials.
pub fn gaussian_profile_deriv(t: f64, i: usize) -> f64 {
    let p = match i {
        0 => 1.0,
        1 => -t,
        2 => t * t - 1.0,
        3 => 3.0 * t - t * t * t,
        4 => 3.0 - 6.0 * t * t + t.powi(4),
        5 => -15.0 * t + 10.0 * t.powi(3) - t.powi(5),
        6 => -15.0 + 45.0 * t * t - 15.0 * t.powi(4) + t.powi(6),
        _ => unreachable!("profile derivative order {i}"),
    };
    p * (-0.5 * t * t).exp()
}

/// `k(t) = 1/(1 + t²)`.
fn cauchy_profile_deriv(t: f64, i: usize) -> f64 {
    let d = 1.0 + t * t;
    match i {
        0 => 1.0 / d,
        1 => -2.0 * t / (d * d),
        2 => (6.0 * t * t - 2.0) / d.powi(3),
        3 => (24.0 * t - 24.0 * t.powi(3)) / d.powi(4),
        _ => unreachable!(),
    }
}

/// `k(t) = sin(πt)/(πt)`; derivatives via `k^{(i)}(t) = π^i s^{(i)}(πt)`
/// with `s(u) = sin(u)/u`.
fn sinc_profile_deriv(t: f64, i: usize) -> f64 {
    let u = std::f64::consts::PI * t;
    std::f64::consts::PI.powi(i as i32) * sin_over_x_deriv(u, i)
}

/// `s(u) = sin(u)/u` and its first three derivatives. The quotient forms
/// cancel catastrophically near 0, so |u| < 1 switches to the power series
/// `s(u) = Σ (−1)^n u^{2n}/(2n+1)!` differentiated term by term.
fn sin_over_x_deriv(u: f64, i: usize) -> f64 {
    if u.abs() < 1.0 {
        let mut acc = 0.0;
        // (2n+1)! grows fast; 12 terms give full precision on |u| < 1.
        let mut coeff = 1.0; // (−1)^n / (2n+1)!
        for n in 0..12usize {
            let e = 2 * n as i32;
            let term = match i {
                0 => coeff * u.powi(e),
                1 => {
                    if e >= 1 {
                        coeff * e as f64 * u.powi(e - 1)
                    } else {
                        0.0
                    }
                }
                2 => {
                    if e >= 2 {
                        coeff * (e * (e - 1)) as f64 * u.powi(e - 2)
                    } else {
                        0.0
                    }
                }
                3 => {
                    if e >= 3 {
                        coeff * (e * (e - 1) * (e - 2)) as f64 * u.powi(e - 3)
                    } else {
                        0.0
                    }
                }
                _ => unreachable!(),
            };
            acc += term;
            coeff = -coeff / ((2 * n + 2) as f64 * (2 * n + 3) as f64);
        }
        acc
    } else {
        let (s, c) = u.sin_cos();
        match i {
            0 => s / u,
            1 => c / u - s / (u * u),
            2 => -s / u - 2.0 * c / (u * u) + 2.0 * s / u.powi(3),
            3 => -c / u + 3.0 * s / (u * u) + 6.0 * c / u.powi(3) - 6.0 * s / u.powi(4),
            _ => unreachable!(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegularityProbe {
    pub theta: f64,
    pub feature_norm: f64,
    pub deriv_norm: f64,
    pub gram_det: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub probes: Vec<RegularityProbe>,
    pub pass: bool,
}

/// Checks that `φ(θ)` and `∂φ(θ)` are linearly independent on the grid at
/// each probe: both norms positive and the 2×2 Gram determinant above a
/// scale-free tolerance.
pub fn check_regularity(
    d: &DictionarySpec,
    m: &GridMeasure,
    theta_probes: &[f64],
) -> Result<RegularityReport> {
    let mut probes = Vec::with_capacity(theta_probes.len());
    for &theta in theta_probes {
        let phi = d.feature_deriv(theta, 0, m)?;
        let dphi = d.feature_deriv(theta, 1, m)?;
        let n0 = norm(&phi, m)?;
        let n1 = norm(&dphi, m)?;
        let cross = inner(&phi, &dphi, m)?;
        let gram_det = n0 * n0 * n1 * n1 - cross * cross;
        let scale = n0 * n0 * n1 * n1;
        let pass = n0 > 1e-12 && n1 > 1e-12 && gram_det > 1e-12 * scale;
        probes.push(RegularityProbe {
            theta,
            feature_norm: n0,
            deriv_norm: n1,
            gram_det,
            pass,
        });
    }
    let pass = !probes.is_empty() && probes.iter().all(|p| p.pass);
    Ok(RegularityReport { probes, pass })
}
