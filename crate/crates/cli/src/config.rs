//! Experiment configuration: a single TOML file describing the dictionary,
//! the observation grid, the ground truth, the noise and the penalty rule.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use offgrid::dictionary::{DictionarySpec, Family};
use offgrid::kernel::KernelContext;
use offgrid::measure::GridMeasure;
use offgrid::noise::{NoiseModel, SeriesKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dictionary: DictionaryConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub truth: TruthConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub kappa: KappaConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryConfig {
    pub family: String,
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t: usize,
    /// Explicit observation interval; when absent the symmetric window
    /// rule `b_T = scale·√(2 log T)·T^0.1` is applied.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default = "default_shrinkage")]
    pub shrinkage: f64,
}

fn default_shrinkage() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    #[serde(default)]
    pub s: usize,
    /// Amplitudes; defaults to all ones of length s.
    #[serde(default)]
    pub amplitudes: Vec<f64>,
    /// Explicit locations override the equispaced placement.
    #[serde(default)]
    pub thetas: Vec<f64>,
    /// Metric gap for equispaced placement.
    #[serde(default = "default_gap")]
    pub gap: f64,
}

fn default_gap() -> f64 {
    9.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_noise_model")]
    pub model: String,
    #[serde(default)]
    pub sigma: f64,
    /// Off-diagonal fraction of the correlated model.
    #[serde(default)]
    pub frac: f64,
    /// Scale of the Brownian series model.
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default)]
    pub n_terms: usize,
}

fn default_noise_model() -> String {
    "iid".into()
}
fn one() -> f64 {
    1.0
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            model: default_noise_model(),
            sigma: 0.0,
            frac: 0.0,
            c: 1.0,
            n_terms: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaConfig {
    /// "tuned" (from τ, c1, σ, Δ_T) or "explicit".
    #[serde(default = "default_kappa_mode")]
    pub mode: String,
    #[serde(default)]
    pub value: f64,
    /// 0 selects τ = T.
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "one")]
    pub c1: f64,
}

fn default_kappa_mode() -> String {
    "tuned".into()
}

impl Default for KappaConfig {
    fn default() -> Self {
        KappaConfig {
            mode: default_kappa_mode(),
            value: 0.0,
            tau: 0.0,
            c1: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_reps() -> usize {
    100
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            reps: default_reps(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_eta0")]
    pub eta0: f64,
    /// 0 selects the optimizing radius.
    #[serde(default)]
    pub radius: f64,
    /// Coherence target as a fraction of the separation margin.
    #[serde(default = "default_eta0")]
    pub u_frac: f64,
    #[serde(default = "default_ladder")]
    pub t_ladder: Vec<usize>,
    #[serde(default)]
    pub u_grid: Vec<f64>,
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    #[serde(default = "default_near_points")]
    pub near_points: usize,
}

fn default_rho() -> f64 {
    2.0
}
fn default_eta0() -> f64 {
    0.9
}
fn default_ladder() -> Vec<usize> {
    vec![256, 512, 1024, 2048, 4096, 8192]
}
fn default_orders() -> Vec<usize> {
    vec![0, 1, 2]
}
fn default_near_points() -> usize {
    24
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            rho: default_rho(),
            eta0: default_eta0(),
            radius: 0.0,
            u_frac: default_eta0(),
            t_ladder: default_ladder(),
            u_grid: Vec::new(),
            orders: default_orders(),
            near_points: default_near_points(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        Family::parse(&self.dictionary.family)
            .map_err(|e| anyhow::anyhow!("dictionary.family: {e}"))?;
        if self.dictionary.scale <= 0.0 {
            bail!("dictionary.scale must be positive");
        }
        if self.grid.t < 8 {
            bail!("grid.t must be at least 8");
        }
        if !(0.0..1.0).contains(&self.grid.shrinkage) {
            bail!("grid.shrinkage must be in [0, 1)");
        }
        if let Some([a, b]) = self.grid.window {
            if a >= b {
                bail!("grid.window must be increasing");
            }
        }
        match self.noise.model.as_str() {
            "iid" | "correlated" | "weighted_iid" | "truncated_white" | "brownian" => {}
            other => bail!("unknown noise.model '{other}'"),
        }
        match self.kappa.mode.as_str() {
            "tuned" | "explicit" => {}
            other => bail!("unknown kappa.mode '{other}'"),
        }
        if self.kappa.mode == "explicit" && self.kappa.value <= 0.0 {
            bail!("explicit kappa.value must be positive");
        }
        if !self.truth.amplitudes.is_empty()
            && self.truth.s != 0
            && self.truth.amplitudes.len() != self.truth.s
        {
            bail!("truth.amplitudes length must equal truth.s");
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        Family::parse(&self.dictionary.family).expect("validated")
    }

    pub fn dictionary_spec(&self) -> anyhow::Result<DictionarySpec> {
        let family = self.family();
        let (a, b) = self.observation_interval(self.grid.t);
        Ok(match family {
            Family::ExpScale => DictionarySpec::new(family, self.dictionary.scale, a, b)?,
            _ => DictionarySpec::translated(family, self.dictionary.scale)?,
        })
    }

    /// Observation interval for a given grid size: explicit, or the
    /// symmetric growing-window rule.
    pub fn observation_interval(&self, t: usize) -> (f64, f64) {
        if let Some([a, b]) = self.grid.window {
            (a, b)
        } else {
            let b = self.dictionary.scale * (2.0 * (t as f64).ln()).sqrt() * (t as f64).powf(0.1);
            (-b, b)
        }
    }

    /// Parameter window: the observation interval shrunk toward its center.
    pub fn parameter_window(&self, t: usize) -> (f64, f64) {
        let (a, b) = self.observation_interval(t);
        let eps = self.grid.shrinkage;
        let mid = 0.5 * (a + b);
        (mid + (1.0 - eps) * (a - mid), mid + (1.0 - eps) * (b - mid))
    }

    pub fn context(&self, t: usize) -> anyhow::Result<KernelContext> {
        let dict = self.dictionary_spec()?;
        let (a, b) = self.observation_interval(t);
        let m = GridMeasure::regular(a, b, t, "observation")?;
        Ok(KernelContext::discrete(dict, m, self.parameter_window(t))?)
    }

    pub fn limit_context(&self) -> anyhow::Result<KernelContext> {
        let dict = self.dictionary_spec()?;
        Ok(KernelContext::limit(dict, self.parameter_window(self.grid.t))?)
    }

    pub fn noise_model(&self) -> anyhow::Result<NoiseModel> {
        Ok(match self.noise.model.as_str() {
            "iid" => NoiseModel::Iid {
                sigma: self.noise.sigma,
            },
            "weighted_iid" => NoiseModel::WeightedIid {
                sigma: self.noise.sigma,
            },
            "correlated" => NoiseModel::Correlated {
                sigma1: self.noise.sigma,
                frac: self.noise.frac,
            },
            "truncated_white" => NoiseModel::Series {
                kind: SeriesKind::TruncatedWhite,
                n_terms: if self.noise.n_terms == 0 {
                    self.grid.t
                } else {
                    self.noise.n_terms
                },
                sigma: self.noise.sigma,
            },
            "brownian" => NoiseModel::Series {
                kind: SeriesKind::Brownian { c: self.noise.c },
                n_terms: if self.noise.n_terms == 0 {
                    self.grid.t
                } else {
                    self.noise.n_terms
                },
                sigma: self.noise.sigma,
            },
            other => bail!("unknown noise.model '{other}'"),
        })
    }

    pub fn kappa_for(&self, t: usize, delta_t: f64) -> anyhow::Result<f64> {
        if self.kappa.mode == "explicit" {
            return Ok(self.kappa.value);
        }
        let tau = if self.kappa.tau > 1.0 {
            self.kappa.tau
        } else {
            t as f64
        };
        Ok(offgrid::estimator::tuning_kappa(
            self.noise.sigma,
            delta_t,
            tau,
            self.kappa.c1,
        )?)
    }
}
