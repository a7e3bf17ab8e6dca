//! Run configuration: one TOML file, every key overridable by a flag of the
//! same name, effective values persisted next to each artifact.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use paradox_core::model::{ModelConfig, PersonaMode};
use paradox_core::numerics::AdamConfig;
use paradox_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

/// How encoder inputs are paired with decoder targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    /// The encoder reads the target utterance itself.
    Reconstruction,
    /// The encoder reads the user's previous utterance.
    NextUtterance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub hindi_lexicon: Option<PathBuf>,
    pub english_lexicon: Option<PathBuf>,
    pub hindi_verbs: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub train_file: Option<PathBuf>,
    pub validation_file: Option<PathBuf>,
    pub vocab_file: Option<PathBuf>,
    pub merges_file: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub generations: Option<PathBuf>,
    pub requests: Option<PathBuf>,
    pub seed: u64,

    pub d_model: usize,
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_length: usize,
    pub dropout_p: f64,
    pub lambda: f64,
    pub persona_mode: PersonaMode,
    pub alignment_on: bool,
    pub fame_on: bool,
    pub speaker_id_on: bool,

    pub epochs: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub pair_mode: PairMode,
    pub resume: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        Self {
            corpus: None,
            hindi_lexicon: None,
            english_lexicon: None,
            hindi_verbs: None,
            out_dir: PathBuf::from("run"),
            train_file: None,
            validation_file: None,
            vocab_file: None,
            merges_file: None,
            checkpoint: None,
            generations: None,
            requests: None,
            seed: 0,
            d_model: m.d_model,
            n_layers_enc: m.n_layers_enc,
            n_layers_dec: m.n_layers_dec,
            n_heads: m.n_heads,
            d_ff: m.d_ff,
            vocab_size: m.vocab_size,
            max_length: m.max_length,
            dropout_p: m.dropout_p,
            lambda: m.lambda,
            persona_mode: m.persona_mode,
            alignment_on: m.alignment_on,
            fame_on: m.fame_on,
            speaker_id_on: m.speaker_id_on,
            epochs: t.epochs,
            batch_size: t.batch_size,
            early_stop_patience: t.patience,
            lr: t.adam.lr,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            adam_eps: t.adam.eps,
            pair_mode: PairMode::Reconstruction,
            resume: false,
        }
    }
}

/// Command-line overrides; each flag carries the name of its config key.
#[derive(Debug, Clone, Default, Args, Serialize)]
#[command(rename_all = "snake_case")]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hindi_lexicon: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub english_lexicon: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hindi_verbs: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_file: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_file: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab_file: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merges_file: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generations: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub requests: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_model: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_layers_enc: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_layers_dec: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_heads: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_ff: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_length: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout_p: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub persona_mode: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment_on: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fame_on: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speaker_id_on: Option<bool>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_stop_patience: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam_eps: Option<f64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_mode: Option<PairMode>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume: Option<bool>,
}

impl RunConfig {
    /// Defaults, then the config file, then flags.
    pub fn load(overrides: &Overrides) -> Result<Self> {
        let mut table = match &overrides.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                toml::from_str::<toml::Table>(&text)
                    .with_context(|| format!("cannot parse config {}", path.display()))?
            }
            None => toml::Table::new(),
        };
        let flags = toml::Table::try_from(overrides).context("cannot encode flag overrides")?;
        table.extend(flags);
        let cfg: RunConfig = table
            .try_into()
            .context("invalid configuration")?;
        cfg.model_config(1)?;
        cfg.train_config().validate()?;
        Ok(cfg)
    }

    pub fn model_config(&self, n_users: usize) -> Result<ModelConfig> {
        let c = ModelConfig {
            d_model: self.d_model,
            n_layers_enc: self.n_layers_enc,
            n_layers_dec: self.n_layers_dec,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            vocab_size: self.vocab_size,
            n_users,
            max_length: self.max_length,
            dropout_p: self.dropout_p,
            lambda: self.lambda,
            persona_mode: self.persona_mode,
            alignment_on: self.alignment_on,
            fame_on: self.fame_on,
            speaker_id_on: self.speaker_id_on,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.early_stop_patience,
            seed: self.seed,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
            },
        }
    }

    fn in_out(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir.join(name))
    }

    pub fn train_path(&self) -> PathBuf {
        self.in_out(&self.train_file, "train.jsonl")
    }

    pub fn validation_path(&self) -> PathBuf {
        self.in_out(&self.validation_file, "validation.jsonl")
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.in_out(&self.vocab_file, "vocab.txt")
    }

    pub fn merges_path(&self) -> PathBuf {
        self.in_out(&self.merges_file, "merges.txt")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.in_out(&self.checkpoint, "model.ckpt")
    }

    pub fn generations_path(&self) -> PathBuf {
        self.in_out(&self.generations, "generations.jsonl")
    }

    /// Writes the effective configuration as `config.<command>.toml`.
    pub fn persist(&self, command: &str) -> Result<()> {
        fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("cannot create {}", self.out_dir.display()))?;
        let path = self.out_dir.join(format!("config.{command}.toml"));
        let text = toml::to_string(self).context("cannot encode configuration")?;
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}

/// Fails unless every path exists, naming the first missing one.
pub fn require_files<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            bail!("required file {} does not exist", p.display());
        }
    }
    Ok(())
}

/// A path option that must be set for this command.
pub fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    match value {
        Some(p) => Ok(p),
        None => bail!("`{key}` is not set (config key or --{key} flag)"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.toml");
        fs::write(&file, "d_model = 32\nepochs = 7\npersona_mode = \"linear\"\n").unwrap();
        let o = Overrides {
            config: Some(file),
            epochs: Some(3),
            pair_mode: Some(PairMode::NextUtterance),
            ..Overrides::default()
        };
        let c = RunConfig::load(&o).unwrap();
        assert_eq!((c.d_model, c.epochs), (32, 3));
        assert_eq!(c.persona_mode, PersonaMode::Linear);
        assert_eq!(c.pair_mode, PairMode::NextUtterance);
        assert_eq!(c.batch_size, 4);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.toml");
        fs::write(&file, "d_modle = 32\n").unwrap();
        let o = Overrides {
            config: Some(file.clone()),
            ..Overrides::default()
        };
        assert!(RunConfig::load(&o).is_err());
        fs::write(&file, "n_heads = 5\n").unwrap();
        assert!(RunConfig::load(&o).is_err());
    }

    #[test]
    fn persisted_config_reloads_identically() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig {
            out_dir: dir.path().to_path_buf(),
            lambda: 0.25,
            ..RunConfig::default()
        };
        c.persist("train").unwrap();
        let o = Overrides {
            config: Some(dir.path().join("config.train.toml")),
            ..Overrides::default()
        };
        assert_eq!(RunConfig::load(&o).unwrap(), c);
    }
}
