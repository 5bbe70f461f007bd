mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use offgrid::certificates::{h2_margin, optimal_radius, theoretical_constants};
use offgrid::dictionary::Family;
use offgrid::estimator::{error_decomposition, fit, prediction_error, Atom, SolverConfig};
use offgrid::kernel::{limit_compare, KernelContext, LimitConstants};
use offgrid::measure::HilbertVector;
use offgrid::noise::{check_variance_bound, empirical_sup_exceedance, sample};
use offgrid::separation::{
    coherence, delta, empirical_min_separation, equispaced_support, psi_upper_bound,
    SeparationQuery,
};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "offgrid", version, about = "Off-the-grid sparse mixture estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for Monte Carlo fans.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one dataset and fit the penalized estimator.
    Fit,
    /// Monte Carlo prediction-error table over a ladder of grid sizes.
    Rates,
    /// Reproduce the certificate constants and verify every clause on an
    /// equispaced support.
    Certify,
    /// Separation thresholds: exact bisection, analytic bound, and the
    /// empirical certificate-based minimum.
    Separation,
    /// Variance-bound and supremum tail checks for the configured noise.
    NoiseCheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized");
        }
    }
    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config is required");
            return ExitCode::from(2);
        }
    };
    let mut cfg = match ExperimentConfig::load(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("cannot create output directory: {e}");
        return ExitCode::from(2);
    }
    let name = match cli.command {
        Command::Fit => "fit",
        Command::Rates => "rates",
        Command::Certify => "certify",
        Command::Separation => "separation",
        Command::NoiseCheck => "noise-check",
    };
    if let Err(e) = write_manifest(&cli.out, name, &cfg) {
        eprintln!("cannot write manifest: {e:#}");
        return ExitCode::from(2);
    }
    let run = match cli.command {
        Command::Fit => run_fit(&cfg, &cli.out),
        Command::Rates => run_rates(&cfg, &cli.out),
        Command::Certify => run_certify(&cfg, &cli.out),
        Command::Separation => run_separation(&cfg, &cli.out),
        Command::NoiseCheck => run_noise_check(&cfg, &cli.out),
    };
    match run {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
}

fn write_manifest(out: &Path, command: &str, cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.run.seed,
        config: cfg,
    };
    write_json(&out.join("manifest.json"), &m)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn truth_atoms(cfg: &ExperimentConfig, ctx: &KernelContext) -> anyhow::Result<Vec<Atom>> {
    let s = if cfg.truth.thetas.is_empty() {
        cfg.truth.s
    } else {
        cfg.truth.thetas.len()
    };
    if s == 0 {
        return Ok(Vec::new());
    }
    let thetas = if cfg.truth.thetas.is_empty() {
        equispaced_support(ctx, cfg.truth.gap, s)?
    } else {
        cfg.truth.thetas.clone()
    };
    let amps = if cfg.truth.amplitudes.is_empty() {
        vec![1.0; s]
    } else {
        cfg.truth.amplitudes.clone()
    };
    if amps.len() != s {
        bail!("amplitude count does not match support size");
    }
    Ok(thetas
        .into_iter()
        .zip(amps)
        .map(|(theta, beta)| Atom { beta, theta })
        .collect())
}

fn observe(
    ctx: &KernelContext,
    truth: &[Atom],
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> anyhow::Result<HilbertVector> {
    let m = ctx.measure().context("discrete context expected")?;
    let mut y = HilbertVector::zeros(m);
    for a in truth {
        let f = ctx.covariant_feature(a.theta, 0)?;
        y.axpy(a.beta, &f)?;
    }
    if cfg.noise.sigma > 0.0 {
        let nm = cfg.noise_model()?;
        let w = sample(&nm, m, rng)?;
        y.axpy(1.0, &w)?;
    }
    Ok(y)
}

fn gaussian_limit_constants(cfg: &ExperimentConfig) -> anyhow::Result<LimitConstants> {
    if cfg.family() != Family::GaussianTranslate {
        bail!("this analysis needs the gaussian dictionary (limit constants)");
    }
    Ok(LimitConstants::gaussian(cfg.dictionary.scale))
}

fn run_fit(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<bool> {
    let ctx = cfg.context(cfg.grid.t)?;
    let truth = truth_atoms(cfg, &ctx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let y = observe(&ctx, &truth, cfg, &mut rng)?;
    let nm = cfg.noise_model()?;
    let dt = nm.delta_t(ctx.measure().unwrap());
    let kappa = cfg.kappa_for(cfg.grid.t, dt)?;
    let mut solver = SolverConfig::new(kappa);
    if !truth.is_empty() {
        solver.max_atoms = (4 * truth.len()).max(8);
    }
    let est = fit(&ctx, &y, &solver)?;
    let err = prediction_error(&ctx, &est.atoms, &truth)?;

    #[derive(Serialize)]
    struct FitOutput {
        kappa: f64,
        truth: Vec<Atom>,
        estimate: offgrid::estimator::Estimate,
        prediction_error: f64,
        decomposition: Option<offgrid::estimator::ErrorDecomposition>,
    }
    let decomposition = if truth.is_empty() {
        None
    } else {
        let l = LimitConstants::gaussian(cfg.dictionary.scale);
        let r = if cfg.analysis.radius > 0.0 {
            cfg.analysis.radius
        } else {
            optimal_radius(&l, cfg.analysis.rho)
        };
        error_decomposition(&ctx, &est.atoms, &truth, r).ok()
    };
    let output = FitOutput {
        kappa,
        truth,
        estimate: est,
        prediction_error: err,
        decomposition,
    };
    write_json(&out.join("estimate.json"), &output)?;
    let csv = format!(
        "t,s,kappa,support,prediction_error,max_correlation,converged\n{},{},{},{},{},{},{}\n",
        cfg.grid.t,
        output.truth.len(),
        kappa,
        output.estimate.atoms.len(),
        err,
        output.estimate.max_correlation,
        output.estimate.converged,
    );
    std::fs::write(out.join("summary.csv"), csv)?;
    println!(
        "fit: {} atoms, prediction error {:.3e}, converged={}",
        output.estimate.atoms.len(),
        err,
        output.estimate.converged
    );
    Ok(true)
}

#[derive(Serialize)]
struct RateRow {
    t: usize,
    kappa: f64,
    delta_t: f64,
    reps: usize,
    /// Median of the grid ℓ₂ error divided by √T.
    median_err_over_sqrt_t: f64,
    q90_err_over_sqrt_t: f64,
    /// Median error over the predicted scale σ√(s·log T / T).
    rate_ratio: f64,
    /// 0.9-quantile of the Hilbert-norm error over √s·κ.
    q90_pred_over_budget: f64,
    i0_q90: f64,
    i1_q90: f64,
    i2_q90: f64,
    i3_q90: f64,
}

#[derive(Serialize)]
struct RatesOutput {
    rows: Vec<RateRow>,
    /// Least-squares slope of log(err/√T) against log T.
    slope: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

pub(crate) fn rate_table(cfg: &ExperimentConfig) -> anyhow::Result<RatesOutput> {
    if cfg.analysis.t_ladder.len() < 4 {
        bail!("analysis.t_ladder needs at least 4 grid sizes");
    }
    if cfg.noise.sigma <= 0.0 && cfg.kappa.mode == "tuned" {
        bail!("tuned penalty needs a positive noise level");
    }
    let l = LimitConstants::gaussian(cfg.dictionary.scale);
    let r_near = if cfg.analysis.radius > 0.0 {
        cfg.analysis.radius
    } else {
        optimal_radius(&l, cfg.analysis.rho)
    };
    let mut rows = Vec::new();
    for &t in &cfg.analysis.t_ladder {
        let ctx = cfg.context(t)?;
        let truth = truth_atoms(cfg, &ctx)?;
        let m = ctx.measure().unwrap();
        let nm = cfg.noise_model()?;
        let dt = nm.delta_t(m);
        let kappa = cfg.kappa_for(t, dt)?;
        let mut solver = SolverConfig::new(kappa);
        solver.max_atoms = (4 * truth.len().max(1)).max(8);
        let reps = cfg.run.reps;
        let results: Vec<(f64, f64, f64, f64, f64)> = (0..reps)
            .into_par_iter()
            .map(|rep| -> anyhow::Result<_> {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
                rng.set_stream((t as u64) << 32 | rep as u64);
                let y = observe(&ctx, &truth, cfg, &mut rng)?;
                let est = fit(&ctx, &y, &solver)?;
                let pred = prediction_error(&ctx, &est.atoms, &truth)?;
                let dec = error_decomposition(&ctx, &est.atoms, &truth, r_near)?;
                Ok((pred, dec.i0, dec.i1, dec.i2, dec.i3))
            })
            .collect::<anyhow::Result<_>>()?;
        let w = m.common_weight().unwrap_or_else(|| {
            m.weights().iter().sum::<f64>() / m.len() as f64
        });
        let sort = |f: &dyn Fn(&(f64, f64, f64, f64, f64)) -> f64| -> Vec<f64> {
            let mut v: Vec<f64> = results.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let pred = sort(&|r| r.0);
        let i0 = sort(&|r| r.1);
        let i1 = sort(&|r| r.2);
        let i2 = sort(&|r| r.3);
        let i3 = sort(&|r| r.4);
        // grid ℓ₂ norm of the mixture difference = Hilbert norm / √weight
        let err: Vec<f64> = pred.iter().map(|p| p / w.sqrt()).collect();
        let s = truth.len().max(1) as f64;
        let tf = t as f64;
        let scale = cfg.noise.sigma * (s * tf.ln() / tf).sqrt();
        rows.push(RateRow {
            t,
            kappa,
            delta_t: dt,
            reps,
            median_err_over_sqrt_t: quantile(&err, 0.5) / tf.sqrt(),
            q90_err_over_sqrt_t: quantile(&err, 0.9) / tf.sqrt(),
            rate_ratio: if scale > 0.0 {
                quantile(&err, 0.5) / tf.sqrt() / scale
            } else {
                f64::NAN
            },
            q90_pred_over_budget: quantile(&pred, 0.9) / (s.sqrt() * kappa),
            i0_q90: quantile(&i0, 0.9),
            i1_q90: quantile(&i1, 0.9),
            i2_q90: quantile(&i2, 0.9),
            i3_q90: quantile(&i3, 0.9),
        });
    }
    // least-squares slope of log(median err/√T) on log T
    let xs: Vec<f64> = rows.iter().map(|r| (r.t as f64).ln()).collect();
    let ys: Vec<f64> = rows
        .iter()
        .map(|r| r.median_err_over_sqrt_t.max(1e-300).ln())
        .collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    Ok(RatesOutput {
        rows,
        slope: sxy / sxx,
    })
}

fn run_rates(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<bool> {
    let table = rate_table(cfg)?;
    write_json(&out.join("rates.json"), &table)?;
    let mut csv = String::from(
        "t,kappa,delta_t,reps,median_err_over_sqrt_t,q90_err_over_sqrt_t,rate_ratio,q90_pred_over_budget,i0_q90,i1_q90,i2_q90,i3_q90\n",
    );
    for r in &table.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.t,
            r.kappa,
            r.delta_t,
            r.reps,
            r.median_err_over_sqrt_t,
            r.q90_err_over_sqrt_t,
            r.rate_ratio,
            r.q90_pred_over_budget,
            r.i0_q90,
            r.i1_q90,
            r.i2_q90,
            r.i3_q90
        ));
    }
    std::fs::write(out.join("rates.csv"), csv)?;
    println!("rates: fitted slope {:.3} over {} grid sizes", table.slope, table.rows.len());
    Ok(true)
}

fn run_certify(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<bool> {
    let l = gaussian_limit_constants(cfg)?;
    let rho = cfg.analysis.rho;
    let r = if cfg.analysis.radius > 0.0 {
        cfg.analysis.radius
    } else {
        optimal_radius(&l, rho)
    };
    let ctx = cfg.context(cfg.grid.t)?;
    let ctx_inf = cfg.limit_context()?;
    let probes = ctx_inf.metric_grid(1.0)?;
    let cmp = limit_compare(&ctx, &ctx_inf, &probes)?;
    let eps_far = ctx_inf.epsilon(r / rho)?;
    let nu_near = ctx_inf.nu(rho * r)?;
    let u_limit = cfg.analysis.u_frac * h2_margin(&l, eps_far, nu_near);
    let s = cfg.truth.s.max(1);
    let constants = theoretical_constants(&l, r, rho, eps_far, nu_near, s, cmp.v_t, u_limit);
    let support = equispaced_support(&ctx, cfg.truth.gap, s)?;
    let report =
        offgrid::certificates::verify_assumptions(&ctx, &support, r, &constants, cfg.analysis.near_points)?;

    #[derive(Serialize)]
    struct CertifyOutput {
        constants: offgrid::certificates::TheoreticalConstants,
        v_t: f64,
        rho_t: f64,
        report: offgrid::certificates::VerificationReport,
    }
    println!("radius r = {:.4}   margins: H1 = {:.3e}, H2 = {:.3e}", r, constants.h1, constants.h2);
    println!("kernel drift: v_T = {:.3e}, rho_T = {:.6}", cmp.v_t, cmp.rho_t);
    println!(
        "{:<26} {:>13} {:>12} {:>12} {:>6}",
        "clause", "kind", "measured", "threshold", "pass"
    );
    for c in &report.clauses {
        println!(
            "{:<26} {:>13} {:>12.5} {:>12.5} {:>6}",
            c.name,
            format!("{:?}", c.kind),
            c.measured,
            c.theoretical,
            c.pass
        );
    }
    let pass = report.pass;
    write_json(
        &out.join("certify.json"),
        &CertifyOutput {
            constants,
            v_t: cmp.v_t,
            rho_t: cmp.rho_t,
            report,
        },
    )?;
    if !pass {
        eprintln!("certificate verification failed");
    }
    Ok(pass)
}

fn run_separation(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<bool> {
    let l = gaussian_limit_constants(cfg)?;
    let rho = cfg.analysis.rho;
    let r = if cfg.analysis.radius > 0.0 {
        cfg.analysis.radius
    } else {
        optimal_radius(&l, rho)
    };
    let ctx_inf = cfg.limit_context()?;
    let eps_far = ctx_inf.epsilon(r / rho)?;
    let nu_near = ctx_inf.nu(rho * r)?;
    let u = cfg.analysis.u_frac * h2_margin(&l, eps_far, nu_near);
    let s = cfg.truth.s.max(2);
    let mut q = SeparationQuery::new(u, s);
    q.strategy = offgrid::separation::SearchStrategy::RandomRestarts {
        restarts: 32,
        seed: cfg.run.seed,
    };
    let est = delta(&ctx_inf, &q)?;
    // envelope constant: worst ratio of pair coherence to e^{−d²/4}, scanned
    // over pairs centered in the window
    let (wa, wb) = ctx_inf.window();
    let center = ctx_inf.g_coordinate(0.5 * (wa + wb))?;
    let d_max = (0.98 * ctx_inf.metric_length()?).min(6.0);
    let mut m_env = 0.0f64;
    let mut d = 0.1;
    while d <= d_max {
        let lo = ctx_inf.theta_from_g(center - 0.5 * d)?;
        let hi = ctx_inf.theta_from_g(center + 0.5 * d)?;
        let c = coherence(&ctx_inf, &[lo, hi])?;
        m_env = m_env.max(c * (d * d / 4.0).exp());
        d += 0.1;
    }
    let bound = psi_upper_bound(1.05 * m_env, u, s)?;
    let ctx = cfg.context(cfg.grid.t)?;
    let empirical = empirical_min_separation(&ctx, s, r, rho, u, 0.0)?;

    #[derive(Serialize)]
    struct SeparationOutput {
        u: f64,
        s: usize,
        delta: offgrid::separation::DeltaEstimate,
        envelope_constant: f64,
        bound: offgrid::separation::PsiBound,
        empirical: offgrid::separation::EmpiricalSeparation,
    }
    println!(
        "u = {:.4e}, s = {}: delta = {:.3} (equispaced {:.3}), envelope bound {:.3}, empirical metric gap {:.3} (euclidean {:.3})",
        u, s, est.delta, est.equispaced_delta, bound.finite_s, empirical.metric_gap, empirical.euclidean_gap
    );
    let pass = est.delta <= bound.finite_s + q.tol;
    write_json(
        &out.join("separation.json"),
        &SeparationOutput {
            u,
            s,
            delta: est,
            envelope_constant: 1.05 * m_env,
            bound,
            empirical,
        },
    )?;
    if !pass {
        eprintln!("separation check failed: exact value exceeds the analytic bound");
    }
    Ok(pass)
}

fn run_noise_check(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<bool> {
    let ctx = cfg.context(cfg.grid.t)?;
    let m = ctx.measure().unwrap().clone();
    let nm = cfg.noise_model()?;
    if nm.sigma() <= 0.0 {
        bail!("noise-check needs a positive noise level");
    }
    let reps = cfg.run.reps.max(1000);
    let (wa, wb) = ctx.window();
    let mut fns = vec![HilbertVector::from_fn(&m, |_| 1.0)?];
    for f in [0.25, 0.5, 0.75] {
        let th = wa + f * (wb - wa);
        fns.push(ctx.covariant_feature(th, 0)?);
    }
    let variance = check_variance_bound(&nm, &m, &fns, reps, cfg.run.seed)?;
    let dt = nm.delta_t(&m);
    let scale = nm.sigma() * dt.sqrt();
    let u_grid: Vec<f64> = if cfg.analysis.u_grid.is_empty() {
        (0..10).map(|k| scale * (1.0 + 0.8 * k as f64)).collect()
    } else {
        cfg.analysis.u_grid.clone()
    };
    let mut exceedance = Vec::new();
    for &order in &cfg.analysis.orders {
        exceedance.push(empirical_sup_exceedance(
            &ctx,
            &nm,
            order,
            &u_grid,
            reps,
            cfg.run.seed.wrapping_add(order as u64 + 1),
        )?);
    }

    #[derive(Serialize)]
    struct NoiseOutput {
        variance: offgrid::noise::VarianceReport,
        exceedance: Vec<offgrid::noise::ExceedanceReport>,
    }
    println!(
        "variance check: {} (worst ratio {:.4}, allowance {:.4})",
        if variance.pass { "pass" } else { "FAIL" },
        variance
            .checks
            .iter()
            .map(|c| c.ratio)
            .fold(0.0f64, f64::max),
        variance.checks.first().map(|c| c.allowance).unwrap_or(0.0)
    );
    for rep in &exceedance {
        println!(
            "tail check (order {}): {} over {} grid points",
            rep.order,
            if rep.pass { "pass" } else { "FAIL" },
            rep.rows.len()
        );
    }
    let pass = variance.pass && exceedance.iter().all(|r| r.pass);
    write_json(
        &out.join("noise_check.json"),
        &NoiseOutput {
            variance,
            exceedance,
        },
    )?;
    if !pass {
        eprintln!("noise check failed");
    }
    Ok(pass)
}
