//! Experiment files.
//!
//! One TOML file per experiment. Top-level keys and sections:
//!
//! ```toml
//! stage = "stage2"          # stage1 | stage2 | baseline | eval | oracle (optional, CLI decides)
//! seed = 0
//! outdir = "runs/stage2"
//! decoder = "runs/stage1/decoder.ckpt"   # stage2 and eval
//! policy = "runs/stage2/policy.ckpt"     # eval
//!
//! [world]      # variant = "sim" | "real", n_agents
//! [ablation]   # no_disentangle, no_decomp, no_temporal
//! [stage1]     # Stage1Config fields, [stage1.safety] for the penalty weights
//! [probe]      # ProbeConfig, run after stage1 when stage1_probe = true
//! [stage2]     # Stage2Config fields, [stage2.eval] for the evaluation protocol
//! [baseline]   # BaselineConfig fields
//! [oracle]     # tabular oracle sizes and critic-fit schedule
//! ```
//!
//! Every omitted key takes its default. `SLAC_SEED` and `SLAC_OUTDIR`
//! override `seed` and `outdir`; CLI flags override both.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::baseline::BaselineConfig;
use crate::error::{Result, SlacError};
use crate::flasac::{AdjacencyMatrix, Stage2Config};
use crate::skill::{ProbeConfig, Stage1Config};
use crate::world::{Variant, WorldConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stage1,
    Stage2,
    Baseline,
    Eval,
    Oracle,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Stage1, Stage::Stage2, Stage::Baseline, Stage::Eval, Stage::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
            Stage::Baseline => "baseline",
            Stage::Eval => "eval",
            Stage::Oracle => "oracle",
        }
    }

    /// Pretraining happens in the low-fidelity world, everything else in the target world.
    pub fn default_variant(self) -> Variant {
        match self {
            Stage::Stage1 => Variant::Sim,
            _ => Variant::Real,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSpec {
    /// Defaults by stage when absent.
    pub variant: Option<Variant>,
    pub n_agents: usize,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            variant: None,
            n_agents: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablations {
    /// Stage 1 without the disentanglement term; Stage 2 with an all-ones adjacency.
    pub no_disentangle: bool,
    /// A single critic on the summed reward.
    pub no_decomp: bool,
    /// One low-level step per latent action.
    pub no_temporal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub mdps: usize,
    pub gamma: f64,
    pub tol: f64,
    /// Largest accepted gap between summed per-term and monolithic values.
    pub decomp_tol: f64,
    /// Largest accepted gap between the fitted critic and the oracle.
    pub critic_tol: f64,
    pub fit_hidden: usize,
    pub fit_lr: f64,
    pub fit_rounds: usize,
    pub fit_steps_per_round: usize,
    pub fit_final_lr_ratio: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let fit = super::tabular::CriticFit::default();
        OracleConfig {
            mdps: 10,
            gamma: 0.9,
            tol: 1e-10,
            decomp_tol: 1e-6,
            critic_tol: 1e-2,
            fit_hidden: fit.hidden,
            fit_lr: fit.lr,
            fit_rounds: fit.rounds,
            fit_steps_per_round: fit.steps_per_round,
            fit_final_lr_ratio: fit.final_lr_ratio,
        }
    }
}

impl OracleConfig {
    pub fn fit(&self) -> super::tabular::CriticFit {
        super::tabular::CriticFit {
            hidden: self.fit_hidden,
            lr: self.fit_lr,
            rounds: self.fit_rounds,
            steps_per_round: self.fit_steps_per_round,
            final_lr_ratio: self.fit_final_lr_ratio,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub stage: Option<Stage>,
    pub seed: u64,
    pub outdir: PathBuf,
    pub decoder: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    /// Run the disentanglement probe in the target world after Stage 1.
    pub stage1_probe: bool,
    pub world: WorldSpec,
    pub ablation: Ablations,
    pub stage1: Stage1Config,
    pub probe: ProbeConfig,
    pub stage2: Stage2Config,
    pub baseline: BaselineConfig,
    pub oracle: OracleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            stage: None,
            seed: 0,
            outdir: PathBuf::from("runs/default"),
            decoder: None,
            policy: None,
            stage1_probe: false,
            world: WorldSpec::default(),
            ablation: Ablations::default(),
            stage1: Stage1Config::default(),
            probe: ProbeConfig::default(),
            stage2: Stage2Config::default(),
            baseline: BaselineConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

/// Command-line and environment overrides applied on top of a file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub stage: Option<Stage>,
    pub seed: Option<u64>,
    pub outdir: Option<PathBuf>,
    pub ablation: Ablations,
}

impl Overrides {
    /// `SLAC_SEED` and `SLAC_OUTDIR` from the process environment.
    pub fn from_env() -> Result<Self> {
        let seed = match std::env::var("SLAC_SEED") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| SlacError::config(format!("SLAC_SEED must be an unsigned integer, got `{v}`")))?,
            ),
            Err(_) => None,
        };
        Ok(Overrides {
            seed,
            outdir: std::env::var_os("SLAC_OUTDIR").map(PathBuf::from),
            ..Overrides::default()
        })
    }

    /// Later values win; ablation flags accumulate.
    pub fn then(self, later: Overrides) -> Overrides {
        Overrides {
            stage: later.stage.or(self.stage),
            seed: later.seed.or(self.seed),
            outdir: later.outdir.or(self.outdir),
            ablation: Ablations {
                no_disentangle: self.ablation.no_disentangle || later.ablation.no_disentangle,
                no_decomp: self.ablation.no_decomp || later.ablation.no_decomp,
                no_temporal: self.ablation.no_temporal || later.ablation.no_temporal,
            },
        }
    }
}

impl ExperimentConfig {
    /// Parse TOML text; syntax and type errors carry line and column.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SlacError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SlacError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            SlacError::Config(m) => SlacError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configs serialize")
    }

    pub fn stage(&self) -> Result<Stage> {
        self.stage
            .ok_or_else(|| SlacError::config("no stage given in the file or on the command line"))
    }

    pub fn world_config(&self) -> Result<WorldConfig> {
        let variant = self.world.variant.unwrap_or(self.stage()?.default_variant());
        let c = WorldConfig::for_variant(variant, self.world.n_agents);
        c.validate()?;
        Ok(c)
    }

    /// Apply overrides and ablations and materialize every stage-dependent
    /// default. Resolving a resolved config is a no-op.
    pub fn resolve(mut self, overrides: &Overrides) -> Result<Self> {
        if let (Some(file), Some(cli)) = (self.stage, overrides.stage) {
            if file != cli {
                return Err(SlacError::config(format!(
                    "file declares stage `{}` but `{}` was requested",
                    file.name(),
                    cli.name()
                )));
            }
        }
        self.stage = overrides.stage.or(self.stage);
        let stage = self.stage()?;
        if let Some(s) = overrides.seed {
            self.seed = s;
        }
        if let Some(o) = &overrides.outdir {
            self.outdir = o.clone();
        }
        let a = &overrides.ablation;
        self.ablation.no_disentangle |= a.no_disentangle;
        self.ablation.no_decomp |= a.no_decomp;
        self.ablation.no_temporal |= a.no_temporal;
        self.world.variant = Some(self.world.variant.unwrap_or(stage.default_variant()));
        self.apply_ablations()?;
        self.validate()?;
        Ok(self)
    }

    fn apply_ablations(&mut self) -> Result<()> {
        let n = self.world.n_agents;
        let ab = self.ablation;
        if ab.no_disentangle {
            self.stage1.lambda = 0.0;
            let all_ones = AdjacencyMatrix::all_ones(n, n).to_rows();
            match &self.stage2.adjacency {
                Some(rows) if *rows != all_ones => {
                    return Err(SlacError::config(
                        "ablation.no_disentangle fixes stage2.adjacency to all ones; remove the explicit matrix",
                    ));
                }
                _ => self.stage2.adjacency = Some(all_ones),
            }
        }
        if ab.no_decomp {
            if self.stage2.adjacency.is_some() && !ab.no_disentangle {
                return Err(SlacError::config(
                    "ablation.no_decomp uses one critic on the summed reward; stage2.adjacency must be absent",
                ));
            }
            self.stage2.decompose = false;
        }
        if ab.no_temporal && self.stage2.steps_per_skill != 1 {
            if self.stage2.steps_per_skill != Stage2Config::default().steps_per_skill {
                return Err(SlacError::config(format!(
                    "ablation.no_temporal forces stage2.steps_per_skill = 1, but it is set to {}",
                    self.stage2.steps_per_skill
                )));
            }
            // Same low-level episode length, one decision per low-level step.
            self.stage2.episode_len *= self.stage2.steps_per_skill;
            self.stage2.steps_per_skill = 1;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let stage = self.stage()?;
        if self.world.n_agents == 0 {
            return Err(SlacError::config("world.n_agents must be positive"));
        }
        self.world_config()?;
        match stage {
            Stage::Stage1 => {
                self.stage1.validate()?;
                if self.stage1.steps_per_skill != self.stage2.steps_per_skill && !self.ablation.no_temporal {
                    return Err(SlacError::config(
                        "stage1.steps_per_skill and stage2.steps_per_skill must agree",
                    ));
                }
            }
            Stage::Stage2 | Stage::Eval => {
                self.stage2.validate()?;
                self.stage2.resolve_adjacency(self.world.n_agents)?;
                let decoder = self
                    .decoder
                    .as_ref()
                    .ok_or_else(|| SlacError::config(format!("{} needs `decoder`", stage.name())))?;
                require_file("decoder", decoder)?;
                if stage == Stage::Eval {
                    let p = self.policy.as_ref().ok_or_else(|| SlacError::config("eval needs `policy`"))?;
                    require_file("policy", p)?;
                }
            }
            Stage::Baseline => self.baseline.validate()?,
            Stage::Oracle => {
                if self.oracle.mdps == 0 || !(0.0..1.0).contains(&self.oracle.gamma) || self.oracle.tol <= 0.0 {
                    return Err(SlacError::config("oracle needs mdps > 0, gamma in [0, 1) and tol > 0"));
                }
            }
        }
        Ok(())
    }
}

fn require_file(key: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(SlacError::config(format!("`{key}` points at {}, which does not exist", path.display())))
    }
}
