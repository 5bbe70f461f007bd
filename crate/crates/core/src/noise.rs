//! Admissible noise models, the variance-bound check, and tail bounds for
//! suprema of the noise correlations with the dictionary.
//!
//! Every model declares a level σ and decay rate Δ_T such that
//! `Var(⟨f, w⟩_T) ≤ σ² Δ_T ‖f‖²_T` for all grid functions f.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{KernelContext, LimitConstants};
use crate::measure::{inner, norm, GridMeasure, HilbertVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SeriesKind {
    /// `ξ_k = 1` for `k < n_terms` (white noise truncated in frequency).
    TruncatedWhite,
    /// Scaled Brownian motion via its sine expansion:
    /// `ξ_k = 4c²/((2k+1)²π²)`.
    Brownian { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NoiseModel {
    /// Independent `N(0, σ²)` at every atom.
    Iid { sigma: f64 },
    /// Variance σ₁² on the diagonal, constant covariance `frac·σ₁²/T` off
    /// it (|frac| ≤ 1). The declared level σ² = 2σ₁² absorbs the
    /// correlation.
    Correlated { sigma1: f64, frac: f64 },
    /// Independent with per-atom variance `σ²·Δ_T/w_j`, making the
    /// variance bound an equality for every f.
    WeightedIid { sigma: f64 },
    /// `w = σ Σ_k √ξ_k G_k ψ_k` in the sine basis
    /// `ψ_k(t) = √2 sin((2k+1)πt/2)` over the normalized grid span.
    Series {
        kind: SeriesKind,
        n_terms: usize,
        sigma: f64,
    },
}

impl NoiseModel {
    /// The declared noise level σ of the variance bound.
    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseModel::Iid { sigma } => sigma,
            NoiseModel::Correlated { sigma1, .. } => std::f64::consts::SQRT_2 * sigma1,
            NoiseModel::WeightedIid { sigma } => sigma,
            NoiseModel::Series { sigma, .. } => sigma,
        }
    }

    /// The declared decay rate Δ_T on a given measure.
    pub fn delta_t(&self, m: &GridMeasure) -> f64 {
        let max_w = m.weights().iter().fold(0.0f64, |a, &b| a.max(b));
        let span = m.points().last().unwrap() - m.points().first().unwrap();
        match *self {
            NoiseModel::Iid { .. } | NoiseModel::Correlated { .. } | NoiseModel::WeightedIid { .. } => {
                max_w
            }
            NoiseModel::Series { kind, .. } => match kind {
                SeriesKind::TruncatedWhite => span.max(f64::MIN_POSITIVE),
                SeriesKind::Brownian { c } => {
                    span * 4.0 * c * c / (std::f64::consts::PI * std::f64::consts::PI)
                }
            },
        }
    }

    fn validate(&self, m: &GridMeasure) -> Result<()> {
        match *self {
            NoiseModel::Iid { sigma } | NoiseModel::WeightedIid { sigma } => {
                if sigma < 0.0 {
                    return Err(Error::Model("negative noise level".into()));
                }
            }
            NoiseModel::Correlated { sigma1, frac } => {
                if sigma1 < 0.0 {
                    return Err(Error::Model("negative noise level".into()));
                }
                if frac.abs() > 1.0 {
                    return Err(Error::Model("off-diagonal fraction must be in [-1, 1]".into()));
                }
                // shared-factor decomposition needs both eigenvalues ≥ 0
                let t = m.len() as f64;
                if sigma1 > 0.0 && 1.0 + (t - 1.0) * frac / t < -1e-12 {
                    return Err(Error::Model("covariance not positive semidefinite".into()));
                }
            }
            NoiseModel::Series { sigma, n_terms, kind } => {
                if sigma < 0.0 {
                    return Err(Error::Model("negative noise level".into()));
                }
                if n_terms == 0 {
                    return Err(Error::Model("series model needs at least one term".into()));
                }
                if let SeriesKind::Brownian { c } = kind {
                    if c <= 0.0 {
                        return Err(Error::Model("Brownian scale must be positive".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One realization of the noise on the grid. Deterministic given the rng
/// state.
pub fn sample(nm: &NoiseModel, m: &GridMeasure, rng: &mut impl Rng) -> Result<HilbertVector> {
    nm.validate(m)?;
    let t = m.len();
    let normal = StandardNormal;
    let values: Vec<f64> = match *nm {
        NoiseModel::Iid { sigma } => (0..t)
            .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&normal, rng))
            .collect(),
        NoiseModel::Correlated { sigma1, frac } => {
            // cov = (σ₁²−a)I + a·11ᵀ with a = frac·σ₁²/T; eigenvalues are
            // σ₁²−a (⊥ to 1) and σ₁²+(T−1)a (along 1), clipped at 0
            let a = frac * sigma1 * sigma1 / t as f64;
            let lam_perp = (sigma1 * sigma1 - a).max(0.0).sqrt();
            let lam_one = (sigma1 * sigma1 + (t as f64 - 1.0) * a).max(0.0).sqrt();
            let z: Vec<f64> = (0..t)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&normal, rng))
                .collect();
            let zbar = z.iter().sum::<f64>() / t as f64;
            z.iter()
                .map(|&zj| lam_perp * (zj - zbar) + lam_one * zbar)
                .collect()
        }
        NoiseModel::WeightedIid { sigma } => {
            let dt = nm.delta_t(m);
            m.weights()
                .iter()
                .map(|&w| {
                    sigma
                        * (dt / w).sqrt()
                        * <StandardNormal as Distribution<f64>>::sample(&normal, rng)
                })
                .collect()
        }
        NoiseModel::Series {
            kind,
            n_terms,
            sigma,
        } => {
            let n = n_terms.min(t);
            let (a, b) = (m.points()[0], *m.points().last().unwrap());
            let span = (b - a).max(f64::MIN_POSITIVE);
            let mut values = vec![0.0; t];
            for k in 0..n {
                let xi = match kind {
                    SeriesKind::TruncatedWhite => 1.0,
                    SeriesKind::Brownian { c } => {
                        let denom = (2 * k + 1) as f64 * std::f64::consts::PI;
                        4.0 * c * c / (denom * denom)
                    }
                };
                let gk: f64 = <StandardNormal as Distribution<f64>>::sample(&normal, rng);
                let amp = sigma * xi.sqrt() * gk;
                let freq = (2 * k + 1) as f64 * std::f64::consts::FRAC_PI_2;
                for (v, &tj) in values.iter_mut().zip(m.points()) {
                    let tt = (tj - a) / span;
                    *v += amp * std::f64::consts::SQRT_2 * (freq * tt).sin();
                }
            }
            values
        }
    };
    HilbertVector::new(values, m)
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceCheck {
    pub ratio: f64,
    pub allowance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceReport {
    pub sigma: f64,
    pub delta_t: f64,
    pub reps: usize,
    pub checks: Vec<VarianceCheck>,
    pub pass: bool,
}

/// Monte Carlo check of `Var(⟨f, w⟩) ≤ σ²Δ_T‖f‖²` for each test function,
/// with a one-sided 99% allowance on the empirical variance ratio.
pub fn check_variance_bound(
    nm: &NoiseModel,
    m: &GridMeasure,
    test_fns: &[HilbertVector],
    reps: usize,
    seed: u64,
) -> Result<VarianceReport> {
    if reps < 1000 {
        return Err(Error::Invalid("need at least 10³ replications".into()));
    }
    nm.validate(m)?;
    let sigma = nm.sigma();
    let dt = nm.delta_t(m);
    // one-sided 99% quantile of the χ²-scaled variance estimate
    let allowance = 1.0 + 2.33 * (2.0 / reps as f64).sqrt();
    let mut checks = Vec::with_capacity(test_fns.len());
    for (i, f) in test_fns.iter().enumerate() {
        let nf = norm(f, m)?;
        let budget = sigma * sigma * dt * nf * nf;
        let vals: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((i * reps + rep) as u64);
                let w = sample(nm, m, &mut rng)?;
                inner(f, &w, m)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps as f64 - 1.0);
        let ratio = if budget > 0.0 {
            var / budget
        } else if var == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        checks.push(VarianceCheck {
            ratio,
            allowance,
            pass: ratio <= allowance,
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(VarianceReport {
        sigma,
        delta_t: dt,
        reps,
        checks,
        pass,
    })
}

/// Analytic bound on `P(sup |X| ≥ u)` for the Gaussian suprema arising in
/// the noise-dictionary correlations:
/// `(2C₂+1) · max(σ|Θ|_𝔡 √Δ_T / u, 1) · exp(−u²/(4σ²Δ_T C₁²))`.
pub fn tail_bound(
    c1: f64,
    c2: f64,
    sigma: f64,
    delta_t: f64,
    riemannian_length: f64,
    u: f64,
) -> f64 {
    let c = 2.0 * c2 + 1.0;
    let ratio = (sigma * riemannian_length * delta_t.sqrt() / u).max(1.0);
    c * ratio * (-u * u / (4.0 * sigma * sigma * delta_t * c1 * c1)).exp()
}

/// The `(C₁, C₂)` pair for the supremum of `⟨w, ψ_i(θ)⟩` at covariant
/// order `i ∈ {0,1,2}` (gaussian-family limit constants).
pub fn tail_constants(l: &LimitConstants, order: usize) -> Result<(f64, f64)> {
    match order {
        0 => Ok((1.0, 1.0)),
        1 => Ok((1.0, (2.0 * l.l22).sqrt())),
        2 => Ok(((2.0 * l.l22).sqrt(), (2.0 * l.l3).sqrt())),
        _ => Err(Error::Invalid(format!("no tail constants for order {order}"))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExceedanceRow {
    pub u: f64,
    pub empirical: f64,
    pub bound: f64,
    pub mc_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExceedanceReport {
    pub order: usize,
    pub reps: usize,
    pub grid_points: usize,
    pub rows: Vec<ExceedanceRow>,
    pub pass: bool,
}

/// Monte Carlo estimate of `P(sup_θ |⟨w, ψ_i(θ)⟩| ≥ u)` on a u-grid,
/// compared against [`tail_bound`] (empirical value must stay under the
/// bound plus 3 Monte Carlo standard errors).
pub fn empirical_sup_exceedance(
    ctx: &KernelContext,
    nm: &NoiseModel,
    order: usize,
    u_grid: &[f64],
    reps: usize,
    seed: u64,
) -> Result<ExceedanceReport> {
    if reps < 500 {
        return Err(Error::Invalid("need at least 500 replications".into()));
    }
    let m = ctx
        .measure()
        .ok_or_else(|| Error::Unsupported("exceedance check needs a grid measure".into()))?;
    nm.validate(m)?;
    let length = ctx.metric_length()?;
    let step = (length / 2000.0).max(0.005);
    let grid = ctx.metric_grid(step)?;
    // B z = vector of ⟨w, ψ_i(θ)⟩ over the θ grid when z holds the samples
    let mut b = ctx.covariant_feature_matrix(&grid, order)?;
    for mut row in b.row_iter_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v *= m.weights()[c];
        }
    }
    let sups: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let w = sample(nm, m, &mut rng)?;
            let z = DVector::from_column_slice(w.values());
            let corr = &b * z;
            Ok(corr.iter().fold(0.0f64, |a, &v| a.max(v.abs())))
        })
        .collect::<Result<Vec<f64>>>()?;
    let l = LimitConstants::gaussian(ctx.dict().scale);
    let (c1, c2) = tail_constants(&l, order)?;
    let sigma = nm.sigma();
    let dt = nm.delta_t(m);
    let mut rows = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        let count = sups.iter().filter(|&&s| s >= u).count();
        let p = count as f64 / reps as f64;
        let se = (p * (1.0 - p) / reps as f64).sqrt().max(1.0 / reps as f64);
        let bound = if u > 0.0 {
            tail_bound(c1, c2, sigma, dt, length, u).min(1.0)
        } else {
            1.0
        };
        rows.push(ExceedanceRow {
            u,
            empirical: p,
            bound,
            mc_se: se,
            pass: p <= bound + 3.0 * se,
        });
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(ExceedanceReport {
        order,
        reps,
        grid_points: grid.len(),
        rows,
        pass,
    })
}

/// Dense covariance matrix of a model (used by tests as an oracle).
pub fn covariance_matrix(nm: &NoiseModel, m: &GridMeasure) -> Result<DMatrix<f64>> {
    nm.validate(m)?;
    let t = m.len();
    Ok(match *nm {
        NoiseModel::Iid { sigma } => DMatrix::identity(t, t) * (sigma * sigma),
        NoiseModel::Correlated { sigma1, frac } => {
            let a = frac * sigma1 * sigma1 / t as f64;
            DMatrix::from_fn(t, t, |i, j| if i == j { sigma1 * sigma1 } else { a })
        }
        NoiseModel::WeightedIid { sigma } => {
            let dt = nm.delta_t(m);
            DMatrix::from_fn(t, t, |i, j| {
                if i == j {
                    sigma * sigma * dt / m.weights()[i]
                } else {
                    0.0
                }
            })
        }
        NoiseModel::Series {
            kind,
            n_terms,
            sigma,
        } => {
            let n = n_terms.min(t);
            let (a, bspan) = (m.points()[0], *m.points().last().unwrap());
            let span = (bspan - a).max(f64::MIN_POSITIVE);
            let mut psi = DMatrix::zeros(n, t);
            for k in 0..n {
                let xi = match kind {
                    SeriesKind::TruncatedWhite => 1.0,
                    SeriesKind::Brownian { c } => {
                        let denom = (2 * k + 1) as f64 * std::f64::consts::PI;
                        4.0 * c * c / (denom * denom)
                    }
                };
                let freq = (2 * k + 1) as f64 * std::f64::consts::FRAC_PI_2;
                for (j, &tj) in m.points().iter().enumerate() {
                    let tt = (tj - a) / span;
                    psi[(k, j)] = xi.sqrt() * std::f64::consts::SQRT_2 * (freq * tt).sin();
                }
            }
            psi.transpose() * psi * (sigma * sigma)
        }
    })
}
