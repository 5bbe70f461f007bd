//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! summary line (visible with `--nocapture`; the harness result line is
//! authoritative). Monte Carlo pieces use fixed seeds and are deterministic.

use offgrid::certificates::{
    h2_margin, optimal_radius, theoretical_constants, verify_assumptions, CertificateKind,
    solve_certificate, build_gamma,
};
use offgrid::dictionary::{DictionarySpec, Family};
use offgrid::estimator::{
    error_decomposition, fit, lasso_amplitudes, prediction_error, tuning_kappa, Atom, SolverConfig,
};
use offgrid::kernel::{limit_compare, KernelContext, LimitConstants};
use offgrid::measure::{GridMeasure, HilbertVector};
use offgrid::noise::{empirical_sup_exceedance, sample, tail_constants, NoiseModel};
use offgrid::separation::{coherence, delta, empirical_min_separation, equispaced_support, SeparationQuery};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::Instant;

/// Observation half-width for a grid of `t` points: σ₀√(2 log t)·t^{0.1}.
fn half_width(t: usize, sigma0: f64) -> f64 {
    sigma0 * (2.0 * (t as f64).ln()).sqrt() * (t as f64).powf(0.1)
}

/// Discrete gaussian context on the standard growing window, with the
/// parameter window shrunk by `eps` on each side.
fn gaussian_ctx(t: usize, sigma0: f64, eps: f64) -> KernelContext {
    let b = half_width(t, sigma0);
    let dict = DictionarySpec::translated(Family::GaussianTranslate, sigma0).unwrap();
    let m = GridMeasure::regular(-b, b, t, format!("t{t}")).unwrap();
    KernelContext::discrete(dict, m, (-(1.0 - eps) * b, (1.0 - eps) * b)).unwrap()
}

fn gaussian_limit(window: f64) -> KernelContext {
    let dict = DictionarySpec::translated(Family::GaussianTranslate, 1.0).unwrap();
    KernelContext::limit(dict, (-window, window)).unwrap()
}

fn synthesize(ctx: &KernelContext, m: &GridMeasure, truth: &[Atom]) -> HilbertVector {
    let mut y = HilbertVector::zeros(m);
    for a in truth {
        y.axpy(a.beta, &ctx.covariant_feature(a.theta, 0).unwrap()).unwrap();
    }
    y
}

#[test]
fn criterion_1_diagonal_kernel_identities() {
    let start = Instant::now();
    let cases: Vec<(&str, KernelContext)> = [64usize, 256, 2048]
        .iter()
        .flat_map(|&t| {
            let gauss = {
                let dict = DictionarySpec::translated(Family::GaussianTranslate, 1.0).unwrap();
                let m = GridMeasure::regular(-12.0, 12.0, t, "g").unwrap();
                KernelContext::discrete(dict, m, (-6.0, 6.0)).unwrap()
            };
            let cauchy = {
                let dict = DictionarySpec::translated(Family::CauchyTranslate, 1.0).unwrap();
                let m = GridMeasure::regular(-12.0, 12.0, t, "c").unwrap();
                KernelContext::discrete(dict, m, (-6.0, 6.0)).unwrap()
            };
            let exps = {
                let dict = DictionarySpec::new(Family::ExpScale, 1.0, 0.0, f64::INFINITY).unwrap();
                let m = GridMeasure::regular(0.0, 30.0, t, "e").unwrap();
                KernelContext::discrete(dict, m, (0.5, 4.0)).unwrap()
            };
            vec![("gaussian", gauss), ("cauchy", cauchy), ("exp_scale", exps)]
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for (name, ctx) in &cases {
        let (lo, hi) = ctx.window();
        for _ in 0..20 {
            let th = rng.gen_range(lo..hi);
            let checks = [
                (ctx.kernel_deriv(th, th, 0, 0).unwrap() - 1.0, "K(θ,θ)=1"),
                (ctx.kernel_deriv(th, th, 1, 0).unwrap(), "K10(θ,θ)=0"),
                (ctx.kernel_deriv(th, th, 2, 0).unwrap() + 1.0, "K20(θ,θ)=-1"),
                (ctx.kernel_deriv(th, th, 2, 1).unwrap(), "K21(θ,θ)=0"),
            ];
            for (dev, label) in checks {
                worst = worst.max(dev.abs());
                assert!(dev.abs() < 1e-8, "{name} θ={th}: {label} off by {dev:e}");
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!("criterion 1: PASS — worst identity deviation {worst:.2e}, {elapsed:.1}s");
    assert!(elapsed < 10.0, "identity sweep took {elapsed:.1}s (budget 10s)");
}

#[test]
fn criterion_2_limit_constants_table() {
    let l = LimitConstants::gaussian(1.0);
    assert_eq!(l.l00, 1.0);
    assert_eq!(l.l11, 1.0);
    assert_eq!(l.l20, 1.0);
    assert_eq!(l.l22, 3.0);
    assert_eq!(l.l3, 15.0);
    assert!((l.l10 - (-0.5f64).exp()).abs() < 1e-15);
    let l21 = (18.0 - 6.0 * 6f64.sqrt()).sqrt() * (1.5f64.sqrt() - 1.5).exp();
    assert!((l.l21 - l21).abs() < 1e-15);

    let rho = 2.0;
    let r = optimal_radius(&l, rho);
    let ctx = gaussian_limit(30.0);
    let eps_far = ctx.epsilon(r / rho).unwrap();
    let nu_near = ctx.nu(rho * r).unwrap();
    let h2 = h2_margin(&l, eps_far, nu_near);
    let tc = theoretical_constants(&l, r, rho, eps_far, nu_near, 2, 0.0, 0.9 * h2);

    println!(
        "criterion 2: r*={r:.4} H1={:.4e} H2={:.4e} C_N={:.4e} C_N'={:.5} C_F={:.4e} \
         c_N={:.5} c_F={:.5} c_B=C_B={}",
        tc.h1, tc.h2, tc.interp_near_lower, tc.interp_near_upper, tc.interp_far,
        tc.deriv_near, tc.deriv_far, tc.deriv_norm
    );

    assert!((r - 0.49).abs() <= 0.01, "r* = {r}");
    assert!((tc.h1 - 2.9e-3).abs() <= 2e-4, "H1 = {}", tc.h1);
    assert!((tc.h2 - 3.7e-3).abs() <= 2e-4, "H2 = {}", tc.h2);
    assert!((tc.interp_near_lower - 2e-4).abs() <= 2e-5, "C_N = {}", tc.interp_near_lower);
    assert!((tc.interp_far - 2.9e-3).abs() <= 2e-4, "C_F = {}", tc.interp_far);
    assert_eq!(tc.interp_norm, 2.0);
    assert_eq!(tc.deriv_norm, 2.0);
    assert!((tc.deriv_near - 1.9).abs() <= 0.05, "c_N = {}", tc.deriv_near);
    // Expected red: the closed-form value is 1.25·e^{−1/2} + 1.75 = 2.50816,
    // outside the pinned 2.6 ± 0.05. See the project notes on constant
    // provenance; every upstream input matches its quoted value above.
    assert!(
        (tc.deriv_far - 2.6).abs() <= 0.05,
        "c_F = {} (closed form gives 2.50816; pinned target 2.6 ± 0.05 is not \
         attainable from the stated formula — recorded as a known discrepancy)",
        tc.deriv_far
    );
}

#[test]
fn criterion_3_separation_limit_and_empirical() {
    let start = Instant::now();
    let l = LimitConstants::gaussian(1.0);
    let rho = 2.0;
    let r = optimal_radius(&l, rho);
    let ctx_inf = gaussian_limit(60.0);
    let eps_far = ctx_inf.epsilon(r / rho).unwrap();
    let nu_near = ctx_inf.nu(rho * r).unwrap();
    let u_inf = 0.9 * h2_margin(&l, eps_far, nu_near);

    let est = delta(&ctx_inf, &SeparationQuery::new(u_inf, 2)).unwrap();
    assert!(
        (est.delta - 4.5).abs() <= 0.2,
        "limit separation bound {} for u = {u_inf:.3e}",
        est.delta
    );

    let t = 2048;
    let ctx = gaussian_ctx(t, 1.0, 0.1);
    let ctx_win = {
        let dict = DictionarySpec::translated(Family::GaussianTranslate, 1.0).unwrap();
        KernelContext::limit(dict, ctx.window()).unwrap()
    };
    let probes = ctx_win.metric_grid(0.25).unwrap();
    let cmp = limit_compare(&ctx, &ctx_win, &probes).unwrap();
    let emp = empirical_min_separation(&ctx, 2, r, rho, u_inf, cmp.v_t).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 3: PASS — δ̂_∞(u,2)={:.3}, empirical metric gap {:.3} (euclidean {:.3}σ₀), {elapsed:.1}s",
        est.delta, emp.metric_gap, emp.euclidean_gap
    );
    assert!(
        emp.euclidean_gap <= 3.5,
        "empirical minimal separation {} σ₀ exceeds 3.5 σ₀",
        emp.euclidean_gap
    );
    assert!(elapsed < 300.0, "separation study took {elapsed:.1}s (budget 5 min)");
}

#[test]
fn criterion_4_kernel_approximation_trend() {
    let sigma0 = 1.0;
    // Edge probes decay like the gaussian tail at distance ε·b_T; shrinkage
    // 0.25 keeps them subdominant so the metric ratio converges at the
    // stated speed (0.1 does not — see the project notes).
    let eps = 0.25;
    let mut rows = Vec::new();
    for t in [256usize, 1024, 4096] {
        let b = half_width(t, sigma0);
        let ctx_t = gaussian_ctx(t, sigma0, eps);
        let dict = DictionarySpec::translated(Family::GaussianTranslate, sigma0).unwrap();
        let ctx_inf = KernelContext::limit(dict, ctx_t.window()).unwrap();
        let probes = ctx_inf.metric_grid(0.1).unwrap();
        let cmp = limit_compare(&ctx_t, &ctx_inf, &probes).unwrap();
        let dt = 2.0 * b / t as f64;
        let gamma = 2.0 * dt / sigma0
            + std::f64::consts::PI.sqrt()
                * (-(eps * b).powi(2) / (2.0 * sigma0 * sigma0)).exp();
        println!(
            "criterion 4: T={t} V_T={:.4} ρ_T={:.5} γ_T={:.4} V_T/γ_T={:.2}",
            cmp.v_t, cmp.rho_t, gamma, cmp.v_t / gamma
        );
        rows.push((cmp.v_t, (cmp.rho_t - 1.0).abs(), cmp.v_t / gamma));
    }
    for w in rows.windows(2) {
        assert!(w[1].0 < w[0].0, "V_T not decreasing: {} -> {}", w[0].0, w[1].0);
        assert!(w[1].1 < w[0].1, "|ρ_T − 1| not decreasing: {} -> {}", w[0].1, w[1].1);
    }
    assert!(rows[2].1 < 1e-2, "|ρ_T − 1| = {} at T = 4096", rows[2].1);
    let cmax = rows.iter().map(|r| r.2).fold(0.0f64, f64::max);
    let cmin = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    assert!(
        cmax / cmin < 2.0,
        "fitted envelope constant unstable: V_T/γ_T in [{cmin:.2}, {cmax:.2}]"
    );
    println!("criterion 4: PASS — c1 ≈ {cmax:.2}, ratio spread ×{:.2}", cmax / cmin);
}

#[test]
fn criterion_5_certificate_verification_gap_nine() {
    let start = Instant::now();
    let l = LimitConstants::gaussian(1.0);
    let rho = 2.0;
    let r = optimal_radius(&l, rho);
    let ctx = gaussian_limit(30.0);
    let eps_far = ctx.epsilon(r / rho).unwrap();
    let nu_near = ctx.nu(rho * r).unwrap();
    let u_limit = 0.9 * h2_margin(&l, eps_far, nu_near);
    let tc = theoretical_constants(&l, r, rho, eps_far, nu_near, 2, 0.0, u_limit);
    assert!(tc.hypotheses_hold, "{:?}", tc.hypothesis_notes);

    let support = equispaced_support(&ctx, 9.0, 2).unwrap();
    let report = verify_assumptions(&ctx, &support, r, &tc, 32).unwrap();
    assert!(report.patterns_checked >= 4, "need all four sign patterns");
    for clause in &report.clauses {
        assert!(
            clause.pass,
            "clause '{}' ({:?}): measured {} vs guaranteed {}",
            clause.name, clause.kind, clause.measured, clause.theoretical
        );
    }
    assert!(report.pass);

    // Coefficient bounds from coherence: ‖α−v‖∞, ‖ξ‖∞ ≤ u/(1−2u) for the
    // interpolating system; derivative system analogous.
    let u = coherence(&ctx, &support).unwrap();
    assert!(u < 0.5, "coherence {u}");
    let bound = u / (1.0 - 2.0 * u);
    let gs = build_gamma(&ctx, &support).unwrap();
    for pattern in [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
        let cc = solve_certificate(&gs, &pattern, CertificateKind::Interpolating).unwrap();
        let cd = solve_certificate(&gs, &pattern, CertificateKind::Derivative).unwrap();
        for k in 0..2 {
            assert!((cc.alpha[k] - pattern[k]).abs() <= bound + 1e-12);
            assert!(cc.xi[k].abs() <= bound + 1e-12);
            assert!(cd.alpha[k].abs() <= bound + 1e-12);
            assert!(cd.xi[k].abs() <= (1.0 - u) / (1.0 - 2.0 * u) + 1e-12);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 5: PASS — {} clauses, {} patterns, coherence {u:.2e}, {elapsed:.1}s",
        report.clauses.len(),
        report.patterns_checked
    );
    assert!(elapsed < 30.0, "verification took {elapsed:.1}s (budget 30s)");
}

#[test]
fn criterion_6_solver_correctness() {
    // (a) noiseless exact recovery
    let ctx = gaussian_ctx(512, 1.0, 0.1);
    let m = ctx.measure().unwrap().clone();
    let truth = vec![Atom { beta: 1.0, theta: -2.5 }, Atom { beta: -0.7, theta: 2.0 }];
    let y = synthesize(&ctx, &m, &truth);
    let est = fit(&ctx, &y, &SolverConfig::new(1e-6)).unwrap();
    assert!(est.converged);
    assert_eq!(est.atoms.len(), 2);
    for (a, t) in est.atoms.iter().zip(&truth) {
        assert!((a.theta - t.theta).abs() < 1e-3, "{} vs {}", a.theta, t.theta);
        assert!((a.beta - t.beta).abs() < 1e-3, "{} vs {}", a.beta, t.beta);
    }
    assert!(prediction_error(&ctx, &est.atoms, &truth).unwrap() < 1e-3);

    // (b) KKT residuals on a noisy converged fit
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut y2 = synthesize(&ctx, &m, &truth);
    y2.axpy(1.0, &sample(&NoiseModel::Iid { sigma: 0.3 }, &m, &mut rng).unwrap()).unwrap();
    let kappa = tuning_kappa(0.3, 2.0 * half_width(512, 1.0) / 512.0, 512.0, 1.0).unwrap();
    let est2 = fit(&ctx, &y2, &SolverConfig::new(kappa)).unwrap();
    assert!(est2.converged);
    let mut resid = y2.clone();
    for a in &est2.atoms {
        resid.axpy(-a.beta, &ctx.covariant_feature(a.theta, 0).unwrap()).unwrap();
    }
    for a in &est2.atoms {
        let c = offgrid::measure::inner(&ctx.covariant_feature(a.theta, 0).unwrap(), &resid, &m).unwrap();
        assert!((c - kappa * a.beta.signum()).abs() < 1e-4, "stationarity residual {c}");
        let c1 = offgrid::measure::inner(&ctx.covariant_feature(a.theta, 1).unwrap(), &resid, &m).unwrap();
        assert!(c1.abs() < 1e-3, "location gradient {c1}");
    }
    assert!(est2.max_correlation <= kappa * (1.0 + 1e-3), "dual feasibility {}", est2.max_correlation);

    // (c) amplitude step vs. brute-force orthant solve on s = 2
    let thetas = [-1.0, 0.4];
    let beta = lasso_amplitudes(&ctx, &thetas, &y2, 0.1, 1e-14).unwrap();
    let gram = {
        let mut g = DMatrix::<f64>::zeros(2, 2);
        for a in 0..2 {
            for b in 0..2 {
                g[(a, b)] = ctx.kernel_deriv(thetas[a], thetas[b], 0, 0).unwrap();
            }
        }
        g
    };
    let c: Vec<f64> = thetas
        .iter()
        .map(|&t| offgrid::measure::inner(&ctx.covariant_feature(t, 0).unwrap(), &y2, &m).unwrap())
        .collect();
    let objective = |b: &[f64]| {
        0.5 * (b[0] * b[0] + b[1] * b[1] + 2.0 * gram[(0, 1)] * b[0] * b[1])
            - (c[0] * b[0] + c[1] * b[1])
            + 0.1 * (b[0].abs() + b[1].abs())
    };
    let mut best = (f64::INFINITY, vec![0.0, 0.0]);
    for s0 in [-1.0, 0.0, 1.0] {
        for s1 in [-1.0, 0.0, 1.0] {
            let cand = orthant_solve(&gram, &c, 0.1, s0, s1);
            let signs_ok = cand
                .iter()
                .zip([s0, s1])
                .all(|(&b, s)| (s == 0.0 && b == 0.0) || (s != 0.0 && b * s >= 0.0));
            if signs_ok {
                let f = objective(&cand);
                if f < best.0 {
                    best = (f, cand);
                }
            }
        }
    }
    assert!((beta[0] - best.1[0]).abs() < 1e-4, "{beta:?} vs {:?}", best.1);
    assert!((beta[1] - best.1[1]).abs() < 1e-4);
    println!("criterion 6: PASS — recovery, stationarity, and amplitude-oracle checks hold");
}

/// Closed-form minimizer of the two-atom amplitude objective restricted to
/// a sign orthant (zero signs pin the coordinate to zero).
fn orthant_solve(gram: &DMatrix<f64>, c: &[f64], kappa: f64, s0: f64, s1: f64) -> Vec<f64> {
    if s0 == 0.0 && s1 == 0.0 {
        return vec![0.0, 0.0];
    }
    if s0 == 0.0 {
        return vec![0.0, c[1] - kappa * s1];
    }
    if s1 == 0.0 {
        return vec![c[0] - kappa * s0, 0.0];
    }
    let rhs = DVector::from_vec(vec![c[0] - kappa * s0, c[1] - kappa * s1]);
    let sol = gram.clone().lu().solve(&rhs).unwrap();
    vec![sol[0], sol[1]]
}

#[test]
fn criterion_7_rate_study() {
    let start = Instant::now();
    let sigma = 0.5;
    let reps = 200usize;
    let truth: Vec<Atom> = [(-4.0, 1.0), (0.0, -0.8), (4.0, 1.2)]
        .iter()
        .map(|&(theta, beta)| Atom { beta, theta })
        .collect();
    let s = truth.len() as f64;
    let mut logt = Vec::new();
    let mut logerr = Vec::new();
    let mut pred_ratios = Vec::new();
    let mut i_ratios: Vec<[f64; 3]> = Vec::new();
    for t in [256usize, 512, 1024, 2048, 4096, 8192] {
        let ctx = gaussian_ctx(t, 1.0, 0.1);
        let m = ctx.measure().unwrap().clone();
        let dt = m.common_weight().unwrap();
        let kappa = tuning_kappa(sigma, dt, t as f64, 1.0).unwrap();
        let cfg = SolverConfig::new(kappa);
        let nm = NoiseModel::Iid { sigma };
        let rows: Vec<(f64, f64, f64, f64)> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(9);
                rng.set_stream(((t as u64) << 32) | rep as u64);
                let mut y = synthesize(&ctx, &m, &truth);
                y.axpy(1.0, &sample(&nm, &m, &mut rng).unwrap()).unwrap();
                let est = fit(&ctx, &y, &cfg).unwrap();
                let pred = prediction_error(&ctx, &est.atoms, &truth).unwrap();
                let dec = error_decomposition(&ctx, &est.atoms, &truth, 0.4851).unwrap();
                (pred, dec.i0, dec.i2, dec.i3)
            })
            .collect();
        let col = |k: usize, q: f64| -> f64 {
            let mut v: Vec<f64> = rows
                .iter()
                .map(|r| [r.0, r.1, r.2, r.3][k])
                .collect();
            v.sort_by(f64::total_cmp);
            v[(((v.len() - 1) as f64) * q).round() as usize]
        };
        // grid ℓ₂ error per √T: the weighted Hilbert norm is √Δ_T times the
        // euclidean norm of the sample-point values
        let err_per_sqrt_t = col(0, 0.5) / dt.sqrt() / (t as f64).sqrt();
        logt.push((t as f64).ln());
        logerr.push(err_per_sqrt_t.ln());
        pred_ratios.push(col(0, 0.9) / (s.sqrt() * kappa));
        i_ratios.push([
            col(1, 0.9) / (kappa * s),
            col(2, 0.9) / (kappa * s),
            col(3, 0.9) / (kappa * s),
        ]);
        println!(
            "criterion 7: T={t} κ={kappa:.4} med/√T={err_per_sqrt_t:.3e} q90/(√s·κ)={:.3} \
             I-ratios {:.3}/{:.4}/{:.4}",
            pred_ratios.last().unwrap(),
            i_ratios.last().unwrap()[0],
            i_ratios.last().unwrap()[1],
            i_ratios.last().unwrap()[2]
        );
    }
    let n = logt.len() as f64;
    let xm = logt.iter().sum::<f64>() / n;
    let ym = logerr.iter().sum::<f64>() / n;
    let sxy: f64 = logt.iter().zip(&logerr).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = logt.iter().map(|x| (x - xm) * (x - xm)).sum();
    let slope = sxy / sxx;
    assert!(
        (-0.60..=-0.40).contains(&slope),
        "rate slope {slope:.3} outside [-0.60, -0.40]"
    );
    let rmax = pred_ratios.iter().copied().fold(0.0f64, f64::max);
    let rmin = pred_ratios.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(rmax / rmin < 3.0, "q90 ratio spread {rmax:.3}/{rmin:.3} ≥ 3");
    // stability of the decomposition ratios: bounded by the smallest-T
    // constant (up to 3× and an absolute floor for near-zero terms like the
    // spurious far-region mass, which is identically 0 here)
    for k in 0..3 {
        let first = i_ratios[0][k];
        for row in &i_ratios {
            assert!(
                row[k] <= 3.0 * (first + 0.02),
                "I-ratio {k} grows: {} vs {first} at T=256",
                row[k]
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "criterion 7: PASS — slope {slope:.3}, q90/(√s·κ) in [{rmin:.2}, {rmax:.2}], {elapsed:.0}s"
    );
    assert!(elapsed < 1800.0, "rate study took {elapsed:.0}s (budget 30 min)");
}

#[test]
fn criterion_8_noise_tail_bound() {
    let ctx = gaussian_ctx(512, 1.0, 0.1);
    let m = ctx.measure().unwrap().clone();
    let sigma = 0.5;
    let nm = NoiseModel::Iid { sigma };
    let dt = nm.delta_t(&m);
    let l = LimitConstants::gaussian(1.0);
    for order in [0usize, 1, 2] {
        let (c1, _) = tail_constants(&l, order).unwrap();
        let scale = c1 * sigma * dt.sqrt();
        let u_grid: Vec<f64> = (0..10).map(|k| scale * (1.0 + 0.8 * k as f64)).collect();
        let report = empirical_sup_exceedance(&ctx, &nm, order, &u_grid, 1000, 11).unwrap();
        for row in &report.rows {
            assert!(
                row.pass,
                "order {order}: P(M ≥ {:.3}) = {:.4} exceeds bound {:.4} + 3·{:.4}",
                row.u, row.empirical, row.bound, row.mc_se
            );
        }
        println!(
            "criterion 8: order {order} PASS — {} grid points, max empirical {:.3}",
            report.rows.len(),
            report.rows.iter().map(|r| r.empirical).fold(0.0f64, f64::max)
        );
    }
}
