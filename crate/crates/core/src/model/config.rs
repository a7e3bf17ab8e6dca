use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// How the contextual persona is derived from the global user embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PersonaMode {
    /// `μ + ε⊙σ` while training, `μ` at evaluation; contributes the KL term.
    Randomized,
    /// `μ` only, no KL term.
    Linear,
    /// No contextual persona at all.
    Off,
}

impl core::str::FromStr for PersonaMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "randomized" => Ok(Self::Randomized),
            "linear" => Ok(Self::Linear),
            "off" => Ok(Self::Off),
            other => bail!(Config, "unknown persona mode `{}`", other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    /// Known users; one extra embedding row serves unknown users.
    pub n_users: usize,
    pub max_length: usize,
    pub dropout_p: f64,
    /// Weight of the KL term.
    pub lambda: f64,
    pub persona_mode: PersonaMode,
    pub alignment_on: bool,
    pub fame_on: bool,
    pub speaker_id_on: bool,
}

impl Default for ModelConfig {
    /// Desk-scale configuration.
    fn default() -> Self {
        Self {
            d_model: 64,
            n_layers_enc: 2,
            n_layers_dec: 2,
            n_heads: 4,
            d_ff: 256,
            vocab_size: 2000,
            n_users: 1,
            max_length: 40,
            dropout_p: 0.1,
            lambda: 0.5,
            persona_mode: PersonaMode::Randomized,
            alignment_on: true,
            fame_on: true,
            speaker_id_on: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            bail!(
                Config,
                "d_model {} is not divisible by n_heads {}",
                self.d_model,
                self.n_heads
            );
        }
        if self.d_model < 2 {
            bail!(Config, "d_model must be at least 2");
        }
        if !(self.lambda >= 0.0) {
            bail!(Config, "lambda must be non-negative, got {}", self.lambda);
        }
        if self.max_length < 2 {
            bail!(Config, "max_length must be at least 2, got {}", self.max_length);
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            bail!(Config, "dropout_p must lie in [0, 1), got {}", self.dropout_p);
        }
        if self.vocab_size <= crate::tokenizer::SPECIALS.len() {
            bail!(Config, "vocab_size {} leaves no room beyond special tokens", self.vocab_size);
        }
        if self.d_ff == 0 {
            bail!(Config, "d_ff must be positive");
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Fails when the ablation switches of `self` differ from `other`.
    pub fn check_same_ablation(&self, other: &Self) -> Result<()> {
        let flags = |c: &Self| (c.persona_mode, c.alignment_on, c.fame_on, c.speaker_id_on);
        if flags(self) != flags(other) {
            bail!(
                Compatibility,
                "checkpoint was trained with (persona_mode, alignment_on, fame_on, speaker_id_on) = {:?}, requested {:?}",
                flags(self),
                flags(other)
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            ModelConfig {
                n_heads: 3,
                ..Default::default()
            },
            ModelConfig {
                lambda: -0.1,
                ..Default::default()
            },
            ModelConfig {
                max_length: 1,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(crate::Error::Config(_))));
        }
    }

    #[test]
    fn ablation_mismatch() {
        let a = ModelConfig::default();
        let b = ModelConfig {
            alignment_on: false,
            ..a.clone()
        };
        assert!(a.check_same_ablation(&a).is_ok());
        assert!(matches!(
            a.check_same_ablation(&b),
            Err(crate::Error::Compatibility(_))
        ));
    }
}
