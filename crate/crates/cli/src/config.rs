//! Experiment configuration, read from TOML.
//!
//! ```toml
//! model = "two_state.model"     # relative to this file
//! n_grid = [4096, 16384, 65536]
//! replications = 100
//! seed = 7
//! eta = 0.5
//! rho = "kappa_2n"              # or a fixed depth such as 3
//! output = "out"                # relative to this file
//! paths_dir = "out/paths"       # optional input for `estimate`
//!
//! [[penalty]]
//! kind = "log_log"
//! c = 5.0
//!
//! [[penalty]]
//! kind = "bic"
//!
//! [cutoff]
//! kind = "sub_log_n"
//! hard_cap = true
//!
//! [verify]
//! checks = ["bernstein_norm", "hellinger_sandwich"]
//! instances = 100
//! ```
//!
//! Penalty kinds: `log_log {c}`, `log_log_f {f}`, `bic`, `csiszar_log_n {c}`,
//! `custom {table}`. Cutoff kinds: `constant_k {k}`, `alpha_log_n {alpha}`,
//! `sub_log_n`.

use std::path::{Path, PathBuf};

use markov_order::diagnostics::MixtureFault;
use markov_order::model::{parse_model, MarkovModel};
use markov_order::penalty::{cutoff_value, CutoffSpec, PenaltySpec};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum RhoPolicy {
    Fixed(usize),
    Named(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: PathBuf,
    n_grid: Vec<usize>,
    #[serde(default = "one")]
    replications: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "half")]
    eta: f64,
    #[serde(default)]
    rho: Option<RhoPolicy>,
    #[serde(default = "default_output")]
    output: PathBuf,
    #[serde(default)]
    paths_dir: Option<PathBuf>,
    #[serde(default)]
    penalty: Vec<PenaltySpec>,
    #[serde(default)]
    cutoff: Option<CutoffSpec>,
    #[serde(default)]
    verify: VerifyConfig,
}

fn one() -> u64 {
    1
}

fn half() -> f64 {
    0.5
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_checks")]
    pub checks: Vec<String>,
    /// Random instances for the deterministic inequality checks.
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Path length of those instances.
    #[serde(default = "default_instance_n")]
    pub instance_n: usize,
    #[serde(default = "default_mc_replications")]
    pub mc_replications: u64,
    #[serde(default = "default_mc_n")]
    pub mc_n: usize,
    #[serde(default)]
    pub inject_fault: MixtureFault,
    /// Candidate model for the Bernstein check; defaults to a perturbation of the truth.
    #[serde(default)]
    pub candidate: Option<PathBuf>,
    #[serde(default)]
    pub alpha_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub big_r: Option<f64>,
    #[serde(default)]
    pub eps_grid: Option<Vec<f64>>,
    /// Order used by the deviation check; defaults to the true order plus one.
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default)]
    pub lil_checkpoints: Option<Vec<usize>>,
    #[serde(default = "default_lil_seeds")]
    pub lil_seeds: u64,
    #[serde(default)]
    pub typicality_n: Option<Vec<usize>>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            checks: default_checks(),
            instances: default_instances(),
            instance_n: default_instance_n(),
            mc_replications: default_mc_replications(),
            mc_n: default_mc_n(),
            inject_fault: MixtureFault::None,
            candidate: None,
            alpha_grid: None,
            big_r: None,
            eps_grid: None,
            order: None,
            lil_checkpoints: None,
            lil_seeds: default_lil_seeds(),
            typicality_n: None,
        }
    }
}

fn default_checks() -> Vec<String> {
    crate::verify::THEOREM_BACKED.iter().map(|s| s.to_string()).collect()
}

fn default_instances() -> usize {
    100
}

fn default_instance_n() -> usize {
    512
}

fn default_mc_replications() -> u64 {
    10_000
}

fn default_mc_n() -> usize {
    512
}

fn default_lil_seeds() -> u64 {
    4
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: MarkovModel,
    pub n_grid: Vec<usize>,
    pub replications: u64,
    pub seed: u64,
    pub eta: f64,
    pub rho: RhoPolicy,
    pub output: PathBuf,
    pub paths_dir: Option<PathBuf>,
    pub penalties: Vec<PenaltySpec>,
    pub cutoff: CutoffSpec,
    pub verify: VerifyConfig,
    pub candidate: Option<MarkovModel>,
}

fn invalid(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("config field `{field}`: {message}"))
}

pub fn read_model(path: &Path) -> Result<MarkovModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read model file {}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| CliError::Validation(format!("model file {}: {e}", path.display())))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses a config whose relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

        if raw.n_grid.is_empty() || raw.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("n_grid", "must be nonempty and strictly increasing"));
        }
        if raw.n_grid[0] < 3 {
            return Err(invalid("n_grid", "lengths must be at least 3"));
        }
        if raw.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        if !(raw.eta > 0.0 && raw.eta < 1.0) {
            return Err(invalid("eta", "must lie in (0, 1)"));
        }
        for (i, p) in raw.penalty.iter().enumerate() {
            p.validate().map_err(|e| invalid(&format!("penalty[{i}]"), e))?;
        }
        let cutoff = raw.cutoff.unwrap_or_else(CutoffSpec::sub_log);
        cutoff.validate().map_err(|e| invalid("cutoff", e))?;
        let rho = match raw.rho {
            None => RhoPolicy::Named("kappa_2n".into()),
            Some(RhoPolicy::Named(s)) if s == "kappa_2n" => RhoPolicy::Named(s),
            Some(RhoPolicy::Named(s)) => return Err(invalid("rho", format!("unknown policy {s:?}"))),
            Some(RhoPolicy::Fixed(0)) => return Err(invalid("rho", "must be at least 1")),
            Some(fixed) => fixed,
        };
        let v = &raw.verify;
        for name in &v.checks {
            if !crate::verify::ALL_CHECKS.contains(&name.as_str()) {
                return Err(invalid("verify.checks", format!("unknown check {name:?}")));
            }
        }
        if v.mc_replications == 0 || v.instances == 0 {
            return Err(invalid("verify", "instances and mc_replications must be positive"));
        }

        let model = read_model(&resolve(&raw.model))?;
        if !model.is_irreducible() {
            return Err(invalid("model", "chain has no unique stationary law"));
        }
        let candidate = match &v.candidate {
            Some(p) => {
                let c = read_model(&resolve(p))?;
                if c.alphabet_size() != model.alphabet_size() {
                    return Err(invalid("verify.candidate", "alphabet size differs from the model"));
                }
                Some(c)
            }
            None => None,
        };
        Ok(ExperimentConfig {
            model,
            n_grid: raw.n_grid,
            replications: raw.replications,
            seed: raw.seed,
            eta: raw.eta,
            rho,
            output: resolve(&raw.output),
            paths_dir: raw.paths_dir.as_deref().map(resolve),
            penalties: raw.penalty,
            cutoff,
            verify: raw.verify,
            candidate,
        })
    }

    /// Typicality depth for paths of length `2n`.
    pub fn rho_for(&self, n: usize) -> Result<usize, CliError> {
        match &self.rho {
            RhoPolicy::Fixed(k) => Ok(*k),
            RhoPolicy::Named(_) => {
                cutoff_value(&self.cutoff, (2 * n) as f64, self.model.alphabet_size()).map_err(|e| invalid("rho", e))
            }
        }
    }
}
