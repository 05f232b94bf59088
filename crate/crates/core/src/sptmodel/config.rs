use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::seqdata::ALPHABET_SIZE;
use crate::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub mlp_size: usize,
    pub num_classes: usize,
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_true")]
    pub use_positional: bool,
    #[serde(default)]
    pub drop_path_rate: f64,
}

fn default_input_dim() -> usize {
    ALPHABET_SIZE
}

fn default_max_len() -> usize {
    1024
}

fn default_true() -> bool {
    true
}

/// Named size presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Tiny,
    Small,
    Base,
}

impl Preset {
    /// `(layers, hidden, heads, mlp_size)`.
    pub fn dims(self) -> (usize, usize, usize, usize) {
        match self {
            Preset::Tiny => (12, 192, 4, 768),
            Preset::Small => (12, 384, 6, 1536),
            Preset::Base => (12, 768, 12, 3072),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "small" => Ok(Preset::Small),
            "base" => Ok(Preset::Base),
            other => Err(Error::Config(format!("unknown preset {other:?} (tiny|small|base)"))),
        }
    }
}

impl ModelConfig {
    pub fn new(layers: usize, hidden: usize, heads: usize, mlp_size: usize, num_classes: usize) -> Self {
        Self {
            layers,
            hidden,
            heads,
            mlp_size,
            num_classes,
            input_dim: ALPHABET_SIZE,
            max_len: default_max_len(),
            use_positional: true,
            drop_path_rate: 0.1,
        }
    }

    pub fn preset(preset: Preset, num_classes: usize) -> Self {
        let (l, d, h, m) = preset.dims();
        Self::new(l, d, h, m, num_classes)
    }

    /// Per-head width `D / h`.
    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("mlp_size", self.mlp_size),
            ("num_classes", self.num_classes),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if self.input_dim != ALPHABET_SIZE {
            return Err(Error::Config(format!(
                "input_dim must be {ALPHABET_SIZE}, got {}",
                self.input_dim
            )));
        }
        if !(0.0..1.0).contains(&self.drop_path_rate) {
            return Err(Error::Config(format!(
                "drop_path_rate {} outside [0, 1)",
                self.drop_path_rate
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let tiny = ModelConfig::preset(Preset::Tiny, 6);
        tiny.validate().unwrap();
        assert_eq!(tiny.head_dim(), 48);
        assert_eq!(ModelConfig::preset(Preset::Small, 6).head_dim(), 64);
        assert_eq!(ModelConfig::preset(Preset::Base, 6).head_dim(), 64);
        assert_eq!("small".parse::<Preset>().unwrap(), Preset::Small);
        assert!("huge".parse::<Preset>().is_err());
    }

    #[test]
    fn rejects_indivisible_heads() {
        let err = ModelConfig::new(1, 10, 3, 8, 2).validate().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn serde_defaults() {
        let cfg: ModelConfig = serde_json::from_str(
            r#"{"layers":2,"hidden":8,"heads":2,"mlp_size":16,"num_classes":3}"#,
        )
        .unwrap();
        assert_eq!(cfg.max_len, 1024);
        assert!(cfg.use_positional);
        assert_eq!(cfg.input_dim, 20);
    }
}
