use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{heterogeneity_preset, DatasetSpec};
use crate::flcore::{StrategyConfig, StrategyKind};
use crate::kpfl::KpflConfig;
use crate::participation::{
    MarkovInit, ParticipationModel, ParticipationTrace, Schedule, DEFAULT_MARKOV_MATRIX,
};
use crate::{Error, Result};

/// How train samples are spread across clients.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    /// `iid`, `light_niid`, `heavy_niid`, or `equal` (per-class even split).
    pub heterogeneity: String,
    /// Explicit Dirichlet concentration; overrides `heterogeneity`.
    pub alpha: Option<f64>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            heterogeneity: "iid".into(),
            alpha: None,
        }
    }
}

impl PartitionConfig {
    /// Dirichlet concentration to use; `None` selects the exact equal split.
    pub fn resolve_alpha(&self) -> Result<Option<f64>> {
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::Config(format!(
                    "partition alpha must be positive and finite, got {alpha}"
                )));
            }
            return Ok(Some(alpha));
        }
        if self.heterogeneity == "equal" {
            return Ok(None);
        }
        heterogeneity_preset(&self.heterogeneity).map(Some)
    }

    /// Stable label for directory names and reports.
    pub fn label(&self) -> String {
        match self.alpha {
            Some(alpha) => format!("alpha_{alpha}"),
            None => self.heterogeneity.clone(),
        }
    }
}

/// One step of a piecewise participation schedule: from round `from`
/// onward, probability `p`.
#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScheduleStep {
    pub from: usize,
    pub p: f64,
}

/// Participation model selection plus per-model parameters; unused fields
/// are ignored by the selected model.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ParticipationConfig {
    /// `static`, `timed_random`, `markovian`, or `programmed`.
    pub model: String,
    /// Timed-random per-round participation probability.
    pub p: f64,
    /// Optional piecewise schedule; overrides `p` when non-empty.
    pub schedule: Vec<ScheduleStep>,
    /// Markov transition matrix rows `[stay-inactive, join]`, `[leave,
    /// stay-active]`.
    pub matrix: [[f64; 2]; 2],
    /// Markov initialization: `stationary` or `all_active`.
    pub init: String,
    /// Trace file for the programmed model.
    pub trace_path: Option<PathBuf>,
}

impl Default for ParticipationConfig {
    fn default() -> Self {
        ParticipationConfig {
            model: "static".into(),
            p: 0.5,
            schedule: Vec::new(),
            matrix: DEFAULT_MARKOV_MATRIX,
            init: "stationary".into(),
            trace_path: None,
        }
    }
}

impl ParticipationConfig {
    /// Builds the runtime model, loading the trace file for `programmed`.
    pub fn build(&self) -> Result<ParticipationModel> {
        match self.model.as_str() {
            "static" => Ok(ParticipationModel::Static),
            "timed_random" => {
                let schedule = if self.schedule.is_empty() {
                    Schedule::Constant(self.p)
                } else {
                    Schedule::Piecewise(self.schedule.iter().map(|s| (s.from, s.p)).collect())
                };
                Ok(ParticipationModel::TimedRandom { schedule })
            }
            "markovian" => {
                let init = match self.init.as_str() {
                    "stationary" => MarkovInit::Stationary,
                    "all_active" => MarkovInit::AllActive,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown markov init '{other}' (expected stationary, all_active)"
                        )))
                    }
                };
                Ok(ParticipationModel::Markovian {
                    matrix: self.matrix,
                    init,
                })
            }
            "programmed" => {
                let path = self.trace_path.as_ref().ok_or_else(|| {
                    Error::Config("programmed participation needs trace_path".into())
                })?;
                let trace = ParticipationTrace::load_csv(path)?;
                Ok(ParticipationModel::Programmed { trace })
            }
            other => Err(Error::Config(format!(
                "unknown participation model '{other}' (expected static, timed_random, markovian, programmed)"
            ))),
        }
    }
}

/// Cross-product sweep lists. Every combination becomes one run cell.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixConfig {
    pub strategies: Vec<String>,
    pub participation: Vec<String>,
    pub heterogeneity: Vec<String>,
    pub kpfl: Vec<bool>,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            strategies: vec!["fedavg".into(), "fedprox".into(), "scaffold".into()],
            participation: vec!["static".into(), "timed_random".into(), "markovian".into()],
            heterogeneity: vec!["iid".into(), "light_niid".into(), "heavy_niid".into()],
            kpfl: vec![false, true],
        }
    }
}

/// Full experiment description, loadable from TOML. Every field has a
/// default, so an empty document is a valid smoke configuration.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    /// Federated rounds per run.
    pub rounds: usize,
    pub num_clients: usize,
    pub seeds: Vec<u64>,
    /// Classifier hidden widths; input/output come from the dataset.
    pub hidden: Vec<usize>,
    /// Trailing window for the final windowed evaluation.
    pub eval_window: usize,
    /// Run a paired static-participation reference for intransigence.
    pub compute_idp: bool,
    /// Pool snapshot cadence in rounds; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Output root; overridden by `DPFL_OUTPUT_ROOT` or `--out`.
    pub output_dir: PathBuf,
    pub kpfl_enabled: bool,
    pub dataset: DatasetSpec,
    pub partition: PartitionConfig,
    pub participation: ParticipationConfig,
    pub strategy: StrategyConfig,
    pub kpfl: KpflConfig,
    pub matrix: Option<MatrixConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            rounds: 100,
            num_clients: 10,
            seeds: vec![1, 2, 3, 4, 5],
            hidden: vec![64, 64],
            eval_window: 5,
            compute_idp: true,
            snapshot_every: 0,
            output_dir: PathBuf::from("runs"),
            kpfl_enabled: false,
            dataset: DatasetSpec::default(),
            partition: PartitionConfig::default(),
            participation: ParticipationConfig::default(),
            strategy: StrategyConfig::default(),
            kpfl: KpflConfig::default(),
            matrix: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    /// Structural validation; runs before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::Config(format!(
                "name '{}' must be non-empty and use only [A-Za-z0-9_-]",
                self.name
            )));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.num_clients == 0 {
            return Err(Error::Config("num_clients must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config(
                "hidden must list at least one positive layer width".into(),
            ));
        }
        if self.eval_window == 0 {
            return Err(Error::Config("eval_window must be at least 1".into()));
        }
        self.dataset.validate()?;
        self.partition.resolve_alpha()?;
        self.strategy.validate()?;
        if self.kpfl_enabled {
            self.kpfl.validate()?;
        }
        // Participation params are checked structurally; the trace file for
        // `programmed` is only read when a run starts.
        match self.participation.model.as_str() {
            "static" | "timed_random" | "markovian" | "programmed" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown participation model '{other}'"
                )))
            }
        }
        if self.participation.model == "timed_random" && self.participation.schedule.is_empty() {
            Schedule::Constant(self.participation.p).validate()?;
        }
        if let Some(matrix) = &self.matrix {
            if matrix.strategies.is_empty()
                || matrix.participation.is_empty()
                || matrix.heterogeneity.is_empty()
                || matrix.kpfl.is_empty()
            {
                return Err(Error::Config("matrix lists must be non-empty".into()));
            }
            for s in &matrix.strategies {
                StrategyKind::from_str(s)?;
            }
            for p in &matrix.participation {
                if !matches!(p.as_str(), "static" | "timed_random" | "markovian") {
                    return Err(Error::Config(format!(
                        "matrix participation '{p}' must be static, timed_random, or markovian"
                    )));
                }
            }
            for h in &matrix.heterogeneity {
                if h != "equal" {
                    heterogeneity_preset(h)?;
                }
            }
        }
        Ok(())
    }

    /// Directory label of this configuration's run cell.
    pub fn cell_label(&self) -> String {
        let kpfl = if self.kpfl_enabled { "-kpfl" } else { "" };
        format!(
            "{}{}_{}_{}",
            self.strategy.kind,
            kpfl,
            self.participation.model,
            self.partition.label()
        )
    }

    /// Expands the matrix section into per-cell configurations, cross
    /// product in a fixed order. Without a matrix section, the config
    /// itself is the single cell.
    pub fn expand_matrix(&self) -> Result<Vec<ExperimentConfig>> {
        let matrix = match &self.matrix {
            None => return Ok(vec![self.clone()]),
            Some(m) => m.clone(),
        };
        let mut cells = Vec::new();
        for h in &matrix.heterogeneity {
            for p in &matrix.participation {
                for s in &matrix.strategies {
                    for &k in &matrix.kpfl {
                        let mut cell = self.clone();
                        cell.matrix = None;
                        cell.partition.heterogeneity = h.clone();
                        cell.partition.alpha = None;
                        cell.participation.model = p.clone();
                        cell.strategy.kind = StrategyKind::from_str(s)?;
                        cell.kpfl_enabled = k;
                        cell.validate()?;
                        cells.push(cell);
                    }
                }
            }
        }
        Ok(cells)
    }
}

/// Output root precedence: CLI flag, then the environment override, then
/// the config value.
pub fn resolve_output_root(
    flag: Option<&Path>,
    env_override: Option<&std::ffi::OsStr>,
    config_dir: &Path,
) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(e) = env_override {
        if !e.is_empty() {
            return PathBuf::from(e);
        }
    }
    config_dir.to_path_buf()
}

/// Name of the environment variable that overrides the output root.
pub const OUTPUT_ROOT_ENV: &str = "DPFL_OUTPUT_ROOT";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_a_valid_default_config() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.rounds, 100);
        assert_eq!(cfg.num_clients, 10);
        assert_eq!(cfg.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(cfg.strategy.local_epochs, 5);
        assert_eq!(cfg.strategy.sgd.learning_rate, 0.01);
        assert_eq!(cfg.strategy.sgd.momentum, 0.9);
        assert_eq!(cfg.strategy.sgd.weight_decay, 1e-5);
        assert_eq!(cfg.strategy.sgd.batch_size, 128);
    }

    #[test]
    fn full_document_round_trips() {
        let text = r#"
name = "bench"
rounds = 10
num_clients = 4
seeds = [7, 8]
hidden = [32]
eval_window = 3
compute_idp = false
snapshot_every = 5
kpfl_enabled = true

[dataset]
num_classes = 4
input_dim = 16
samples_per_class = 50

[partition]
heterogeneity = "heavy_niid"

[participation]
model = "timed_random"
p = 0.6

[strategy]
kind = "fedprox"
prox_mu = 0.05
local_epochs = 2

[strategy.sgd]
learning_rate = 0.02
batch_size = 32

[kpfl]
generator_steps = 10
distill_steps = 5
gen_batch = 16

[kpfl.generator]
latent_dim = 8
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.name, "bench");
        assert_eq!(cfg.strategy.kind, StrategyKind::FedProx);
        assert_eq!(cfg.dataset.num_classes, 4);
        assert_eq!(cfg.kpfl.generator_steps, 10);
        assert_eq!(cfg.kpfl.generator.latent_dim, 8);
        assert_eq!(cfg.partition.resolve_alpha().unwrap(), Some(0.1));
        assert_eq!(cfg.cell_label(), "fedprox-kpfl_timed_random_heavy_niid");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("typo_field = 3").is_err());
        assert!(ExperimentConfig::from_toml_str("[strategy]\nbogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("[kpfl]\nnope = 1").is_err());
    }

    #[test]
    fn invalid_values_fail_before_compute() {
        for text in [
            "rounds = 0",
            "num_clients = 0",
            "seeds = []",
            "hidden = []",
            "eval_window = 0",
            "name = \"bad name\"",
            "[participation]\nmodel = \"sometimes\"",
            "[participation]\nmodel = \"timed_random\"\np = 1.5",
            "[partition]\nalpha = -1.0",
            "[partition]\nheterogeneity = \"medium\"",
            "[strategy.sgd]\nlearning_rate = 0.0",
            "kpfl_enabled = true\n[kpfl]\nlambda_aa = 0.5",
        ] {
            assert!(
                ExperimentConfig::from_toml_str(text).is_err(),
                "accepted: {text}"
            );
        }
    }

    #[test]
    fn kpfl_section_is_not_validated_when_disabled() {
        let cfg = ExperimentConfig::from_toml_str("[kpfl]\ngen_batch = 1").unwrap();
        assert!(!cfg.kpfl_enabled);
    }

    #[test]
    fn participation_builds_every_model() {
        let mut pc = ParticipationConfig::default();
        assert_eq!(pc.build().unwrap().to_string(), "static");
        pc.model = "timed_random".into();
        assert_eq!(pc.build().unwrap().to_string(), "timed_random");
        pc.model = "markovian".into();
        assert_eq!(pc.build().unwrap().to_string(), "markovian");
        pc.init = "warm".into();
        assert!(pc.build().is_err());
        pc.init = "all_active".into();
        assert!(pc.build().is_ok());
        pc.model = "programmed".into();
        pc.trace_path = None;
        assert!(pc.build().is_err());
    }

    #[test]
    fn piecewise_schedule_parses() {
        let text = r#"
[participation]
model = "timed_random"

[[participation.schedule]]
from = 0
p = 0.2

[[participation.schedule]]
from = 10
p = 0.9
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let model = cfg.participation.build().unwrap();
        match model {
            ParticipationModel::TimedRandom { schedule } => {
                assert_eq!(schedule.probability(0), 0.2);
                assert_eq!(schedule.probability(10), 0.9);
                assert_eq!(schedule.probability(100), 0.9);
            }
            other => panic!("unexpected model {other}"),
        }
    }

    #[test]
    fn matrix_expansion_covers_the_cross_product() {
        let text = r#"
[matrix]
strategies = ["fedavg", "fedprox"]
participation = ["static", "timed_random"]
heterogeneity = ["heavy_niid"]
kpfl = [false, true]
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let cells = cfg.expand_matrix().unwrap();
        assert_eq!(cells.len(), 8);
        let labels: Vec<String> = cells.iter().map(|c| c.cell_label()).collect();
        assert!(labels.contains(&"fedavg_static_heavy_niid".to_string()));
        assert!(labels.contains(&"fedprox-kpfl_timed_random_heavy_niid".to_string()));
        // Labels are unique.
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), labels.len());
        assert!(cells.iter().all(|c| c.matrix.is_none()));
    }

    #[test]
    fn no_matrix_yields_the_single_cell() {
        let cfg = ExperimentConfig::default();
        let cells = cfg.expand_matrix().unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0], cfg);
    }

    #[test]
    fn output_root_precedence() {
        use std::ffi::OsStr;
        let cfg_dir = Path::new("runs");
        assert_eq!(
            resolve_output_root(Some(Path::new("cli")), Some(OsStr::new("env")), cfg_dir),
            PathBuf::from("cli")
        );
        assert_eq!(
            resolve_output_root(None, Some(OsStr::new("env")), cfg_dir),
            PathBuf::from("env")
        );
        assert_eq!(
            resolve_output_root(None, Some(OsStr::new("")), cfg_dir),
            PathBuf::from("runs")
        );
        assert_eq!(resolve_output_root(None, None, cfg_dir), PathBuf::from("runs"));
    }
}
