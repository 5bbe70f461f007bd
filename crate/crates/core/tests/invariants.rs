//! Structural invariants of the kernel machinery that must hold for any
//! admissible dictionary/grid pair, checked on randomized inputs.

use offgrid::dictionary::{DictionarySpec, Family};
use offgrid::kernel::{limit_compare, KernelContext};
use offgrid::measure::GridMeasure;
use proptest::prelude::*;

fn ctx_discrete() -> &'static KernelContext {
    static CTX: std::sync::OnceLock<KernelContext> = std::sync::OnceLock::new();
    CTX.get_or_init(|| {
        let dict = DictionarySpec::translated(Family::GaussianTranslate, 1.0).unwrap();
        let m = GridMeasure::regular(-10.0, 10.0, 400, "inv").unwrap();
        KernelContext::discrete(dict, m, (-5.0, 5.0)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_bounded_and_symmetric(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let ctx = ctx_discrete();
        let k = ctx.kernel_deriv(a, b, 0, 0).unwrap();
        // Cauchy–Schwarz for unit features
        prop_assert!(k.abs() <= 1.0 + 1e-12);
        prop_assert!((k - ctx.kernel_deriv(b, a, 0, 0).unwrap()).abs() < 1e-12);
        // covariant transpose symmetry
        for (i, j) in [(1usize, 0usize), (2, 0), (2, 1)] {
            let kij = ctx.kernel_deriv(a, b, i, j).unwrap();
            let kji = ctx.kernel_deriv(b, a, j, i).unwrap();
            prop_assert!((kij - kji).abs() < 1e-10, "K[{i},{j}] asymmetry {}", kij - kji);
        }
    }

    #[test]
    fn metric_is_a_distance(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
        let ctx = ctx_discrete();
        let dab = ctx.metric_distance(a, b).unwrap();
        prop_assert!(dab >= 0.0);
        prop_assert!((dab - ctx.metric_distance(b, a).unwrap()).abs() < 1e-12);
        let dac = ctx.metric_distance(a, c).unwrap();
        let dcb = ctx.metric_distance(c, b).unwrap();
        prop_assert!(dab <= dac + dcb + 1e-12);
    }

    #[test]
    fn metric_tensor_positive(theta in -5.0f64..5.0) {
        let ctx = ctx_discrete();
        prop_assert!(ctx.g(theta).unwrap() > 0.0);
    }

    #[test]
    fn round_trip_through_metric_coordinate(theta in -5.0f64..5.0) {
        let ctx = ctx_discrete();
        let g = ctx.g_coordinate(theta).unwrap();
        prop_assert!((ctx.theta_from_g(g).unwrap() - theta).abs() < 1e-8);
    }
}

#[test]
fn concavity_profiles_dominated_by_limit() {
    // ε_T(r) ≥ ε_∞(r/ρ_T) − V_T and ν_T(r) ≥ ν_∞(ρ_T·r) − V_T: the finite
    // grid can only lose as much concavity as the kernels differ uniformly.
    // The discrete profile minimizers quantize the search radius, so allow
    // their stated accuracy (~2e-3 at unit curvature) on top of V_T.
    let ctx_t = ctx_discrete();
    let dict = DictionarySpec::translated(Family::GaussianTranslate, 1.0).unwrap();
    let ctx_inf = KernelContext::limit(dict, ctx_t.window()).unwrap();
    let probes = ctx_inf.metric_grid(0.1).unwrap();
    let cmp = limit_compare(&ctx_t, &ctx_inf, &probes).unwrap();
    for &r in &[0.2, 0.4851, 0.8, 1.5] {
        let eps_t = ctx_t.epsilon(r).unwrap();
        let eps_inf = ctx_inf.epsilon(r / cmp.rho_t).unwrap();
        assert!(
            eps_t >= eps_inf - cmp.v_t - 2e-3,
            "r={r}: eps_T={eps_t} < {eps_inf} - {}",
            cmp.v_t
        );
        let nu_t = ctx_t.nu(r).unwrap();
        let nu_inf = ctx_inf.nu(cmp.rho_t * r).unwrap();
        assert!(
            nu_t >= nu_inf - cmp.v_t - 2e-3,
            "r={r}: nu_T={nu_t} < {nu_inf} - {}",
            cmp.v_t
        );
    }
}

#[test]
fn epsilon_monotone_in_radius() {
    let ctx = ctx_discrete();
    let mut last = -f64::INFINITY;
    for k in 1..=10 {
        let e = ctx.epsilon(0.3 * k as f64).unwrap();
        assert!(e >= last - 1e-12, "epsilon dropped at r={}", 0.3 * k as f64);
        last = e;
    }
}
