use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use polarprobe::analysis::{EvalOptions, TypeIndexSet};
use polarprobe::gen::{DatasetSpec, OodFlags, SplitSize};
use polarprobe::graph::Domain;
use polarprobe::probe::TrainConfig;
use serde::Deserialize;

/// Marks an error as a configuration problem (exit code 1).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub embed: EmbedSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub align: AlignSection,
    #[serde(default)]
    pub steer: SteerSection,
    #[serde(default)]
    pub qa: QaSection,
    #[serde(default)]
    pub pca: PcaSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub paths: PathsSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub domain: Domain,
    pub n_entities: Option<usize>,
    pub n_lines: Option<usize>,
    pub train: Option<SplitSize>,
    pub validation: Option<SplitSize>,
    pub test: Option<SplitSize>,
    #[serde(default)]
    pub ood: OodFlags,
    /// Custom domain schema (JSON); the built-in one otherwise.
    pub schema: Option<PathBuf>,
    /// Vocabulary file for the single-token check.
    pub vocab: Option<PathBuf>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            domain: Domain::Ordinality,
            n_entities: None,
            n_lines: None,
            train: None,
            validation: None,
            test: None,
            ood: OodFlags::default(),
            schema: None,
            vocab: None,
        }
    }
}

impl DatasetSection {
    pub fn spec(&self, seed: u64) -> DatasetSpec {
        let mut spec = DatasetSpec::new(self.domain, seed);
        if let Some(n) = self.n_entities {
            spec.n_entities = n;
        }
        if let Some(l) = self.n_lines {
            spec.n_lines = l;
        }
        if let Some(s) = self.train {
            spec.train = s;
        }
        if let Some(s) = self.validation {
            spec.validation = s;
        }
        if let Some(s) = self.test {
            spec.test = s;
        }
        spec.ood = self.ood;
        spec
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedKind {
    #[default]
    Planted,
    Random,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedSection {
    pub kind: EmbedKind,
    pub d: usize,
    pub noise_sigma: f64,
    pub layer: i64,
    pub model: String,
}

impl Default for EmbedSection {
    fn default() -> Self {
        EmbedSection {
            kind: EmbedKind::Planted,
            d: 64,
            noise_sigma: 0.0,
            layer: 0,
            model: "planted".into(),
        }
    }
}

/// Every field optional so unspecified keys keep the defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lambda: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub rank: Option<usize>,
    pub batch_graphs: Option<usize>,
    pub soft_rank_epsilon: Option<f64>,
    pub sinkhorn_iters: Option<usize>,
    pub sinkhorn_tol: Option<f64>,
    pub seed: Option<u64>,
    pub freeze_probe: Option<bool>,
    /// Layer whose activations are used; defaults to `embed.layer`.
    pub layer: Option<i64>,
}

impl TrainSection {
    pub fn resolve(&self, seed: u64) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            lambda: self.lambda.unwrap_or(d.lambda),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            epochs: self.epochs.unwrap_or(d.epochs),
            rank: self.rank.unwrap_or(d.rank),
            batch_graphs: self.batch_graphs.unwrap_or(d.batch_graphs),
            soft_rank_epsilon: self.soft_rank_epsilon.unwrap_or(d.soft_rank_epsilon),
            sinkhorn_iters: self.sinkhorn_iters.unwrap_or(d.sinkhorn_iters),
            sinkhorn_tol: self.sinkhorn_tol.unwrap_or(d.sinkhorn_tol),
            seed: self.seed.unwrap_or(seed),
            freeze_probe: self.freeze_probe.unwrap_or(d.freeze_probe),
        };
        cfg.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub type_index_set: TypeIndexSet,
    /// Relative tie resolution for predicted values; 0 ranks exactly.
    pub rank_resolution: f64,
    /// Also train and evaluate the three controls.
    pub baselines: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        let opts = EvalOptions::default();
        EvalSection {
            type_index_set: opts.type_index_set,
            rank_resolution: opts.rank_resolution,
            baselines: false,
        }
    }
}

impl EvalSection {
    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            type_index_set: self.type_index_set,
            rank_resolution: self.rank_resolution,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignSection {
    pub probes: Vec<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteerSection {
    /// Relations to export; every directional relation when empty.
    pub relations: Vec<String>,
    pub signs: Vec<i8>,
    pub alpha_grid: Vec<f64>,
}

impl Default for SteerSection {
    fn default() -> Self {
        SteerSection {
            relations: Vec::new(),
            signs: vec![1, -1],
            alpha_grid: vec![0.0, 1.0, 2.0, 4.0, 8.0],
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QaSection {
    /// Questions rendered per test description.
    pub per_description: usize,
    pub logits: Option<PathBuf>,
    pub permutations: usize,
}

impl Default for QaSection {
    fn default() -> Self {
        QaSection {
            per_description: 1,
            logits: None,
            permutations: polarprobe::analysis::qa::DEFAULT_PERMUTATIONS,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaSection {
    pub graph_id: Option<String>,
    pub descriptions: usize,
}

impl Default for PcaSection {
    fn default() -> Self {
        PcaSection {
            graph_id: None,
            descriptions: 10,
        }
    }
}

/// Lists fanned out by `pipeline`; an empty list keeps the single value
/// from the other sections.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub rank: Vec<usize>,
    pub n_entities: Vec<usize>,
    pub noise_sigma: Vec<f64>,
    pub domain: Vec<Domain>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub data_dir: Option<PathBuf>,
    pub acts_dir: Option<PathBuf>,
    pub probe: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        // Relative paths inside the config are relative to the config file.
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            cfg.out.as_mut(),
            cfg.dataset.schema.as_mut(),
            cfg.dataset.vocab.as_mut(),
            cfg.qa.logits.as_mut(),
            cfg.paths.data_dir.as_mut(),
            cfg.paths.acts_dir.as_mut(),
            cfg.paths.probe.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        cfg.align.probes.iter_mut().for_each(rebase);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed.d == 0 {
            bail!(invalid("embed.d must be positive"));
        }
        if !(self.embed.noise_sigma >= 0.0 && self.embed.noise_sigma.is_finite()) {
            bail!(invalid("embed.noise_sigma must be finite and non-negative"));
        }
        if self.steer.signs.iter().any(|s| *s != 1 && *s != -1) {
            bail!(invalid("steer.signs entries must be 1 or -1"));
        }
        if !(self.eval.rank_resolution >= 0.0 && self.eval.rank_resolution < 1.0) {
            bail!(invalid("eval.rank_resolution must lie in [0, 1)"));
        }
        if self.pca.descriptions < 2 {
            bail!(invalid("pca.descriptions must be at least 2"));
        }
        if self.qa.per_description == 0 {
            bail!(invalid("qa.per_description must be positive"));
        }
        Ok(())
    }
}

/// Paths every command agrees on, rooted at the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub out: PathBuf,
    pub data_dir: PathBuf,
    pub acts_dir: PathBuf,
    pub probe: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig, out: &Path) -> Layout {
        Layout {
            out: out.to_path_buf(),
            data_dir: cfg.paths.data_dir.clone().unwrap_or_else(|| out.join("data")),
            acts_dir: cfg.paths.acts_dir.clone().unwrap_or_else(|| out.join("acts")),
            probe: cfg.paths.probe.clone().unwrap_or_else(|| out.join("probe.plrb")),
        }
    }

    pub fn dataset(&self, split: polarprobe::gen::Split) -> PathBuf {
        self.data_dir.join(format!("{split}.jsonl"))
    }

    pub fn acts(&self, split: polarprobe::gen::Split) -> PathBuf {
        self.acts_dir.join(format!("{split}.acts"))
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}
