//! Coherence of the covariant kernel family and the minimal separation at
//! which it falls below a target level: exact computation by search over
//! candidate supports, and the analytic inversion that upper-bounds it.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::certificates::{linf_op_norm, theoretical_constants, verify_assumptions, TheoreticalConstants};
use crate::error::{Error, Result};
use crate::kernel::KernelContext;

/// Worst ℓ∞ operator-norm deviation of the covariant kernel blocks from
/// their single-spike values, over a candidate support.
pub fn coherence(ctx: &KernelContext, support: &[f64]) -> Result<f64> {
    let s = support.len();
    if s == 0 {
        return Err(Error::Invalid("empty support".into()));
    }
    let k00 = ctx.kernel_matrix(support, support, 0, 0)?;
    let k10 = ctx.kernel_matrix(support, support, 1, 0)?;
    let k01 = ctx.kernel_matrix(support, support, 0, 1)?;
    let k11 = ctx.kernel_matrix(support, support, 1, 1)?;
    let k20 = ctx.kernel_matrix(support, support, 2, 0)?;
    let k12 = ctx.kernel_matrix(support, support, 1, 2)?;
    let eye = DMatrix::<f64>::identity(s, s);
    let zero_diag = |mut m: DMatrix<f64>| {
        for i in 0..s {
            m[(i, i)] = 0.0;
        }
        m
    };
    let norms = [
        linf_op_norm(&(&eye - &k00)),
        linf_op_norm(&(&eye - &k11)),
        linf_op_norm(&(&eye + &k20)),
        linf_op_norm(&zero_diag(k10)),
        linf_op_norm(&zero_diag(k01)),
        linf_op_norm(&zero_diag(k12)),
    ];
    Ok(norms.iter().fold(0.0f64, |a, &b| a.max(b)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchStrategy {
    /// Only equispaced supports centered in the window.
    Equispaced,
    /// Equispaced plus randomized local perturbations.
    RandomRestarts { restarts: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct SeparationQuery {
    /// Coherence level to stay below.
    pub u: f64,
    /// Number of spikes.
    pub s: usize,
    pub strategy: SearchStrategy,
    /// Bisection bracket in metric-distance units.
    pub lower: f64,
    pub upper: f64,
    pub tol: f64,
}

impl SeparationQuery {
    pub fn new(u: f64, s: usize) -> Self {
        SeparationQuery {
            u,
            s,
            strategy: SearchStrategy::RandomRestarts { restarts: 32, seed: 0 },
            lower: 1e-2,
            upper: 64.0,
            tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaEstimate {
    pub u: f64,
    pub s: usize,
    /// Smallest minimal separation found with coherence ≤ u.
    pub delta: f64,
    /// Same quantity when only equispaced supports are searched.
    pub equispaced_delta: f64,
    pub coherence_at_delta: f64,
}

/// Support of `s` points equispaced at metric gap `gap`, centered in the
/// parameter window.
pub fn equispaced_support(ctx: &KernelContext, gap: f64, s: usize) -> Result<Vec<f64>> {
    let length = ctx.metric_length()?;
    let total = gap * (s as f64 - 1.0);
    let margin = ((length - total) / 2.0).max(0.0);
    let (a, _) = ctx.window();
    let g0 = ctx.g_coordinate(a)? + margin;
    (0..s)
        .map(|k| ctx.theta_from_g(g0 + gap * k as f64))
        .collect()
}

/// Worst coherence over supports with minimal metric separation exactly
/// `gap`, maximized by the chosen strategy.
fn worst_coherence(ctx: &KernelContext, gap: f64, s: usize, strategy: SearchStrategy) -> Result<f64> {
    let base = equispaced_support(ctx, gap, s)?;
    let mut best = coherence(ctx, &base)?;
    if let SearchStrategy::RandomRestarts { restarts, seed } = strategy {
        if s > 1 {
            let length = ctx.metric_length()?;
            let (a, _) = ctx.window();
            let g_a = ctx.g_coordinate(a)?;
            let vals: Vec<f64> = (0..restarts)
                .into_par_iter()
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(r as u64);
                    // random gaps in [gap, 3·gap], one pinned at the minimum
                    let mut gaps: Vec<f64> = (0..s - 1)
                        .map(|_| gap * (1.0 + 2.0 * rng.gen::<f64>()))
                        .collect();
                    let pin = rng.gen_range(0..s - 1);
                    gaps[pin] = gap;
                    let total: f64 = gaps.iter().sum();
                    if total > length {
                        return Ok(f64::NEG_INFINITY);
                    }
                    let start = g_a + rng.gen::<f64>() * (length - total);
                    let mut g = start;
                    let mut sup = Vec::with_capacity(s);
                    sup.push(ctx.theta_from_g(g)?);
                    for &d in &gaps {
                        g += d;
                        sup.push(ctx.theta_from_g(g)?);
                    }
                    coherence(ctx, &sup)
                })
                .collect::<Result<Vec<f64>>>()?;
            for v in vals {
                best = best.max(v);
            }
        }
    }
    Ok(best)
}

/// Minimal separation (in metric distance) at which the coherence over all
/// searched supports drops to the level `u`, found by bisection.
pub fn delta(ctx: &KernelContext, q: &SeparationQuery) -> Result<DeltaEstimate> {
    if q.u <= 0.0 {
        return Err(Error::Domain("coherence level must be positive".into()));
    }
    if q.s < 1 {
        return Err(Error::Invalid("need at least one spike".into()));
    }
    if q.s == 1 {
        return Ok(DeltaEstimate {
            u: q.u,
            s: 1,
            delta: 0.0,
            equispaced_delta: 0.0,
            coherence_at_delta: 0.0,
        });
    }
    let length = ctx.metric_length()?;
    let upper = q.upper.min(length / (q.s as f64 - 1.0) * 0.999);
    if upper <= q.lower {
        return Err(Error::Range("window too short for the requested support size".into()));
    }
    if worst_coherence(ctx, upper, q.s, q.strategy)? > q.u {
        return Err(Error::Range(format!(
            "coherence exceeds {} even at the widest representable gap {upper:.3}",
            q.u
        )));
    }
    let bisect = |strategy: SearchStrategy| -> Result<f64> {
        let (mut lo, mut hi) = (q.lower, upper);
        if worst_coherence(ctx, lo, q.s, strategy)? <= q.u {
            return Ok(lo);
        }
        while hi - lo > q.tol {
            let mid = 0.5 * (lo + hi);
            if worst_coherence(ctx, mid, q.s, strategy)? <= q.u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    };
    let equi = bisect(SearchStrategy::Equispaced)?;
    let d = match q.strategy {
        SearchStrategy::Equispaced => equi,
        s => bisect(s)?,
    };
    let coh = worst_coherence(ctx, d, q.s, q.strategy)?;
    Ok(DeltaEstimate {
        u: q.u,
        s: q.s,
        delta: d,
        equispaced_delta: equi,
        coherence_at_delta: coh,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PsiBound {
    /// Inversion of the s-dependent Gaussian envelope sum.
    pub finite_s: f64,
    /// The s-uniform closed form `2√π·M/u`.
    pub uniform: f64,
}

/// Analytic upper bound on the separation needed for coherence level `u`
/// with `s` spikes, assuming the kernel blocks decay under the Gaussian
/// envelope `M·e^{−t²/4}` in metric distance: inverts
/// `ψ_s(δ) = 2M ∫₀^{s/2+1} e^{−t²δ²/4} dt`.
pub fn psi_upper_bound(m_const: f64, u: f64, s: usize) -> Result<PsiBound> {
    if m_const <= 0.0 || u <= 0.0 {
        return Err(Error::Domain("envelope constant and level must be positive".into()));
    }
    if s < 1 {
        return Err(Error::Invalid("need at least one spike".into()));
    }
    let uniform = 2.0 * std::f64::consts::PI.sqrt() * m_const / u;
    // ψ_s(0) = 2M(s/2+1); above that level any separation works
    if u >= 2.0 * m_const * (s as f64 / 2.0 + 1.0) {
        return Ok(PsiBound { finite_s: 0.0, uniform });
    }
    let half = s as f64 / 2.0 + 1.0;
    let psi = |d: f64| -> f64 {
        if d == 0.0 {
            return 2.0 * m_const * half;
        }
        // substitute τ = t·d/2 so the integrand stays resolved for large d:
        // ∫₀^h e^{−t²d²/4} dt = (2/d) ∫₀^{hd/2} e^{−τ²} dτ
        let upper = (half * d / 2.0).min(8.0);
        let n = 2000;
        let h = upper / n as f64;
        let mut acc = 0.5 * (1.0 + (-upper * upper).exp());
        for k in 1..n {
            let t = k as f64 * h;
            acc += (-t * t).exp();
        }
        2.0 * m_const * (2.0 / d) * acc * h
    };
    let (mut lo, mut hi) = (0.0, uniform.max(1.0));
    while psi(hi) > u {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Numeric("envelope inversion failed to bracket".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if psi(mid) > u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 * (1.0 + hi) {
            break;
        }
    }
    let finite_s = 0.5 * (lo + hi);
    if (psi(finite_s) - u).abs() > 1e-6 * (1.0 + u) {
        return Err(Error::Numeric("envelope inversion residual too large".into()));
    }
    Ok(PsiBound { finite_s, uniform })
}

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalSeparation {
    pub s: usize,
    pub radius: f64,
    /// Smallest equispaced metric gap at which every dual-certificate
    /// clause verifies.
    pub metric_gap: f64,
    pub euclidean_gap: f64,
    pub constants: TheoreticalConstants,
}

/// Bisection over equispaced supports for the smallest gap at which the
/// certificate verification passes all clauses for every sign pattern.
pub fn empirical_min_separation(
    ctx: &KernelContext,
    s: usize,
    r: f64,
    rho: f64,
    u_limit: f64,
    v_t: f64,
) -> Result<EmpiricalSeparation> {
    if s < 1 {
        return Err(Error::Invalid("need at least one spike".into()));
    }
    let eps_far = ctx.epsilon(r / rho)?;
    let nu_near = ctx.nu(rho * r)?;
    let constants = theoretical_constants(
        &crate::kernel::LimitConstants::gaussian(ctx.dict().scale),
        r,
        rho,
        eps_far,
        nu_near,
        s,
        v_t,
        u_limit,
    );
    let passes = |gap: f64| -> Result<bool> {
        let sup = equispaced_support(ctx, gap, s)?;
        let rep = verify_assumptions(ctx, &sup, r, &constants, 24)?;
        Ok(rep.pass)
    };
    if s == 1 {
        let sup = equispaced_support(ctx, 0.0, 1)?;
        let rep = verify_assumptions(ctx, &sup, r, &constants, 24)?;
        if !rep.pass {
            return Err(Error::Range("single-spike certificate fails regardless of gap".into()));
        }
        return Ok(EmpiricalSeparation {
            s,
            radius: r,
            metric_gap: 0.0,
            euclidean_gap: 0.0,
            constants,
        });
    }
    let length = ctx.metric_length()?;
    let mut hi = (length / (s as f64 - 1.0)) * 0.9;
    if !passes(hi)? {
        return Err(Error::Range(format!(
            "certificate verification fails even at metric gap {hi:.3}"
        )));
    }
    let mut lo = 2.0 * r;
    if passes(lo)? {
        hi = lo;
        lo = 0.1 * r;
        if passes(lo)? {
            hi = lo;
        }
    }
    while hi - lo > 0.02 {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let sup = equispaced_support(ctx, hi, s)?;
    let eucl = sup
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Ok(EmpiricalSeparation {
        s,
        radius: r,
        metric_gap: hi,
        euclidean_gap: eucl,
        constants,
    })
}
