//! Experiment configuration (TOML), validation and hashing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tnhvp::manifold::Retraction;
use tnhvp::optim::{AdamConfig, TrustRegionConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    pub ansatz: AnsatzConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    /// `H = J Σ ZZ + Σ (g X + h Z)`.
    Ising { n_sites: usize, j: f64, g: f64, h: f64, t: f64 },
    /// `H = Σ_α J_α Σ σ^α σ^α + Σ_α h_α Σ σ^α`.
    Heisenberg { n_sites: usize, j: [f64; 3], h: [f64; 3], t: f64 },
}

impl ModelConfig {
    pub fn n_sites(&self) -> usize {
        match self {
            ModelConfig::Ising { n_sites, .. } | ModelConfig::Heisenberg { n_sites, .. } => *n_sites,
        }
    }

    pub fn t(&self) -> f64 {
        match self {
            ModelConfig::Ising { t, .. } | ModelConfig::Heisenberg { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default = "d_order")]
    pub order: u32,
    #[serde(default = "d_ref_steps")]
    pub n_steps: usize,
    #[serde(default = "d_chi_ref")]
    pub chi_ref: usize,
    #[serde(default = "d_trunc_tol")]
    pub trunc_tol: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { order: d_order(), n_steps: d_ref_steps(), chi_ref: d_chi_ref(), trunc_tol: d_trunc_tol() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Merged second-order Trotter circuit with `(n_layers − 1)/2` steps.
    Strang,
    /// The reference circuit itself.
    Reference,
    /// Gates read from a circuit checkpoint.
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzConfig {
    pub n_layers: usize,
    #[serde(default)]
    pub ti: bool,
    #[serde(default = "d_init")]
    pub init: Init,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "d_n_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_chi_max")]
    pub chi_max: usize,
    #[serde(default = "d_trunc_tol")]
    pub trunc_tol: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig { n_samples: d_n_samples(), seed: 0, chi_max: d_chi_max(), trunc_tol: d_trunc_tol() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    TrustRegion {
        #[serde(default = "d_max_iters")]
        max_iters: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_max: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho_accept: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shrink: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expand: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tcg_max_iters: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tcg_kappa: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tcg_theta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grad_tol: Option<f64>,
        #[serde(default)]
        retraction: Retraction,
    },
    Adam {
        #[serde(default = "d_step_size")]
        step_size: f64,
        #[serde(default = "d_max_iters")]
        max_iters: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta1: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta2: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eps: Option<f64>,
        #[serde(default)]
        retraction: Retraction,
    },
}

/// Optimizer settings with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResolvedOptimizer {
    TrustRegion { config: TrustRegionConfig, retraction: Retraction },
    Adam { config: AdamConfig, retraction: Retraction },
}

impl ResolvedOptimizer {
    pub fn name(&self) -> &'static str {
        match self {
            ResolvedOptimizer::TrustRegion { .. } => "trust_region",
            ResolvedOptimizer::Adam { .. } => "adam",
        }
    }

    pub fn retraction(&self) -> Retraction {
        match self {
            ResolvedOptimizer::TrustRegion { retraction, .. } | ResolvedOptimizer::Adam { retraction, .. } => *retraction,
        }
    }

    pub fn max_iters(&self) -> usize {
        match self {
            ResolvedOptimizer::TrustRegion { config, .. } => config.max_outer_iters,
            ResolvedOptimizer::Adam { config, .. } => config.max_iters,
        }
    }
}

impl OptimizerConfig {
    /// Fills defaults for a problem of real tangent dimension `dim`.
    pub fn resolve(&self, dim: usize) -> ResolvedOptimizer {
        match *self {
            OptimizerConfig::TrustRegion {
                max_iters,
                delta0,
                delta_max,
                rho_accept,
                shrink,
                expand,
                tcg_max_iters,
                tcg_kappa,
                tcg_theta,
                grad_tol,
                retraction,
            } => {
                let mut c = TrustRegionConfig::for_dim(dim);
                c.max_outer_iters = max_iters;
                if let Some(d) = delta0 {
                    c.delta0 = d;
                    if delta_max.is_none() {
                        c.delta_max = 100.0 * d;
                    }
                }
                if let Some(v) = delta_max {
                    c.delta_max = v;
                }
                if let Some(v) = rho_accept {
                    c.rho_accept = v;
                }
                if let Some(v) = shrink {
                    c.shrink = v;
                }
                if let Some(v) = expand {
                    c.expand = v;
                }
                if let Some(v) = tcg_max_iters {
                    c.tcg_max_iters = v;
                }
                if let Some(v) = tcg_kappa {
                    c.tcg_kappa = v;
                }
                if let Some(v) = tcg_theta {
                    c.tcg_theta = v;
                }
                if let Some(v) = grad_tol {
                    c.grad_tol = v;
                }
                ResolvedOptimizer::TrustRegion { config: c, retraction }
            }
            OptimizerConfig::Adam { step_size, max_iters, beta1, beta2, eps, retraction } => {
                let mut c = AdamConfig::new(step_size, max_iters);
                if let Some(v) = beta1 {
                    c.beta1 = v;
                }
                if let Some(v) = beta2 {
                    c.beta2 = v;
                }
                if let Some(v) = eps {
                    c.eps = v;
                }
                ResolvedOptimizer::Adam { config: c, retraction }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default = "d_n_test")]
    pub n_test_samples: usize,
    #[serde(default = "d_test_seed")]
    pub test_seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { n_test_samples: d_n_test(), test_seed: d_test_seed() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    #[serde(default = "d_dim_cap")]
    pub dim_cap: usize,
    /// Plain CG iterations for the probe; defaults to the dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_iters: Option<usize>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig { dim_cap: d_dim_cap(), cg_iters: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "d_out_dir")]
    pub directory: PathBuf,
    /// Write a circuit checkpoint every this many iterations (0: final only).
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: d_out_dir(), checkpoint_every: 0 }
    }
}

fn d_order() -> u32 {
    4
}
fn d_ref_steps() -> usize {
    20
}
fn d_chi_ref() -> usize {
    128
}
fn d_trunc_tol() -> f64 {
    1e-12
}
fn d_init() -> Init {
    Init::Strang
}
fn d_n_samples() -> usize {
    16
}
fn d_chi_max() -> usize {
    64
}
fn d_max_iters() -> usize {
    100
}
fn d_step_size() -> f64 {
    0.01
}
fn d_n_test() -> usize {
    100
}
fn d_test_seed() -> u64 {
    1
}
fn d_dim_cap() -> usize {
    tnhvp::spectral::DEFAULT_DIM_CAP
}
fn d_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(src: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(src).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate().map_err(|(section, key, msg)| {
            let at = locate(src, section, key).map(|l| format!("line {l}: ")).unwrap_or_default();
            CliError::Config(format!("{at}[{section}] {key}: {msg}"))
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&src).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Semantic checks; errors carry `(section, key, message)`.
    pub fn validate(&self) -> Result<(), (&'static str, &'static str, String)> {
        let n = self.model.n_sites();
        if n < 2 {
            return Err(("model", "n_sites", "needs at least 2 sites".into()));
        }
        if !self.model.t().is_finite() {
            return Err(("model", "t", "must be finite".into()));
        }
        let finite = match &self.model {
            ModelConfig::Ising { j, g, h, .. } => [*j, *g, *h].iter().all(|x| x.is_finite()),
            ModelConfig::Heisenberg { j, h, .. } => j.iter().chain(h).all(|x| x.is_finite()),
        };
        if !finite {
            return Err(("model", "j", "couplings and fields must be finite".into()));
        }
        let r = &self.reference;
        if r.order != 2 && r.order != 4 {
            return Err(("reference", "order", format!("must be 2 or 4, got {}", r.order)));
        }
        if r.n_steps == 0 {
            return Err(("reference", "n_steps", "must be at least 1".into()));
        }
        if r.chi_ref == 0 {
            return Err(("reference", "chi_ref", "must be positive".into()));
        }
        if !(0.0..1.0).contains(&r.trunc_tol) {
            return Err(("reference", "trunc_tol", "must lie in [0, 1)".into()));
        }
        let a = &self.ansatz;
        if a.n_layers == 0 {
            return Err(("ansatz", "n_layers", "must be at least 1".into()));
        }
        match a.init {
            Init::Strang if a.n_layers % 2 == 0 => {
                return Err(("ansatz", "n_layers", "strang init needs an odd layer count (2·steps + 1)".into()))
            }
            Init::Reference if a.ti => return Err(("ansatz", "ti", "reference init is not translationally invariant".into())),
            Init::Checkpoint if a.checkpoint.is_none() => {
                return Err(("ansatz", "checkpoint", "init = \"checkpoint\" needs a checkpoint path".into()))
            }
            _ => {}
        }
        if a.init != Init::Checkpoint && a.checkpoint.is_some() {
            return Err(("ansatz", "checkpoint", "only allowed with init = \"checkpoint\"".into()));
        }
        let t = &self.training;
        if t.n_samples == 0 {
            return Err(("training", "n_samples", "must be at least 1".into()));
        }
        if t.chi_max == 0 {
            return Err(("training", "chi_max", "must be positive".into()));
        }
        if !(0.0..1.0).contains(&t.trunc_tol) {
            return Err(("training", "trunc_tol", "must lie in [0, 1)".into()));
        }
        if self.evaluation.n_test_samples == 0 {
            return Err(("evaluation", "n_test_samples", "must be at least 1".into()));
        }
        match self.optimizer.resolve(16) {
            ResolvedOptimizer::TrustRegion { config, .. } => {
                config.validate().map_err(|e| ("optimizer", "kind", e.to_string()))?;
            }
            ResolvedOptimizer::Adam { config, .. } => {
                config.validate().map_err(|e| ("optimizer", "kind", e.to_string()))?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of every block except `[output]`.
    pub fn hash(&self) -> String {
        let canon = serde_json::json!({
            "model": self.model,
            "reference": self.reference,
            "ansatz": self.ansatz,
            "training": self.training,
            "optimizer": self.optimizer,
            "evaluation": self.evaluation,
            "spectral": self.spectral,
        });
        let digest = Sha256::digest(canon.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn model(&self) -> Result<tnhvp::trotter::SpinChainModel, CliError> {
        let m = match self.model {
            ModelConfig::Ising { n_sites, j, g, h, t } => tnhvp::trotter::SpinChainModel::ising(n_sites, j, g, h, t),
            ModelConfig::Heisenberg { n_sites, j, h, t } => tnhvp::trotter::SpinChainModel::heisenberg(n_sites, j, h, t),
        };
        m.map_err(|e| CliError::Config(e.to_string()))
    }
}

/// 1-based line of `key` inside `[section]`, falling back to the section header.
fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let header = format!("[{section}]");
    let mut in_section = false;
    let mut header_line = None;
    for (i, line) in src.lines().enumerate() {
        let l = line.trim();
        if l.starts_with('[') {
            in_section = l == header;
            if in_section {
                header_line = Some(i + 1);
            }
            continue;
        }
        if in_section {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
kind = "ising"
n_sites = 6
j = 1.0
g = 0.75
h = 0.6
t = 0.5

[ansatz]
n_layers = 3

[optimizer]
kind = "trust_region"
max_iters = 5
"#;

    #[test]
    fn minimal_config_resolves_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.reference, ReferenceConfig::default());
        assert_eq!(c.training.n_samples, 16);
        assert_eq!(c.evaluation.n_test_samples, 100);
        match c.optimizer.resolve(160) {
            ResolvedOptimizer::TrustRegion { config, retraction } => {
                assert_eq!(config.max_outer_iters, 5);
                assert_eq!(config.tcg_max_iters, 160);
                assert_eq!(retraction, Retraction::Polar);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("n_layers = 3", "n_layers = 3\nlayers = 4");
        let e = ExperimentConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(e.contains("unknown field") && e.contains("line"), "{e}");
        let bad = MINIMAL.replace("max_iters = 5", "max_iters = 5\nstep_size = 0.1");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = format!("{MINIMAL}\n[extra]\nx = 1\n");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn semantic_errors_point_at_the_line() {
        let bad = MINIMAL.replace("n_layers = 3", "n_layers = 4");
        let e = ExperimentConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(e.contains("line 11") && e.contains("odd"), "{e}");
        let bad = MINIMAL.replace("n_sites = 6", "n_sites = 1");
        assert!(ExperimentConfig::from_toml(&bad).unwrap_err().to_string().contains("line 4"));
    }

    #[test]
    fn hash_ignores_output_block() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output.directory = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.training.seed = 7;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
