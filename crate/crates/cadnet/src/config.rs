//! Fusion configuration: dimensions, attention heads, dropout, fusion mode,
//! and the ablation flags reproducing the comparative model variants.

use serde::{Deserialize, Serialize};

use crate::error::CadnetError;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntraDims {
    pub eye: usize,
    pub head: usize,
    pub clinical: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokensPerModality {
    pub eye: usize,
    pub head: usize,
    pub clinical: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// The full three-level attention architecture.
    MultiLevel,
    /// Concatenate raw vectors into a single MLP trunk.
    EarlyFusion,
    /// Per-modality MLPs, concatenated before the heads.
    LateFusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub intra_dims: IntraDims,
    pub cross_dim: usize,
    pub global_dim: usize,
    pub heads: usize,
    pub dropout: f64,
    pub tokens_per_modality: TokensPerModality,
    pub mode: FusionMode,
    /// Replace intra-modal self-attention with a lightweight feed-forward
    /// block when false.
    pub intra_attention: bool,
    pub use_eye: bool,
    pub use_head: bool,
    pub use_clinical: bool,
    /// Width of the hidden layer in each task head.
    pub head_hidden: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            intra_dims: IntraDims {
                eye: 32,
                head: 16,
                clinical: 16,
            },
            cross_dim: 32,
            global_dim: 64,
            heads: 4,
            dropout: 0.1,
            tokens_per_modality: TokensPerModality {
                eye: 6,
                head: 7,
                clinical: 5,
            },
            mode: FusionMode::MultiLevel,
            intra_attention: true,
            use_eye: true,
            use_head: true,
            use_clinical: true,
            head_hidden: 32,
        }
    }
}

impl FusionConfig {
    /// A small configuration for finite-difference checks and fast tests.
    pub fn tiny() -> Self {
        FusionConfig {
            intra_dims: IntraDims {
                eye: 8,
                head: 8,
                clinical: 8,
            },
            cross_dim: 8,
            global_dim: 8,
            heads: 2,
            dropout: 0.0,
            head_hidden: 8,
            ..FusionConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CadnetError::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.heads == 0 {
            return err("heads must be positive".into());
        }
        for (name, dim) in [
            ("eye intra", self.intra_dims.eye),
            ("head intra", self.intra_dims.head),
            ("clinical intra", self.intra_dims.clinical),
            ("cross", self.cross_dim),
            ("global", self.global_dim),
        ] {
            if dim == 0 || dim % self.heads != 0 {
                return err(format!(
                    "{name} dimension {dim} must be a positive multiple of {} heads",
                    self.heads
                ));
            }
        }
        if self.tokens_per_modality.eye != 6
            || self.tokens_per_modality.head != 7
            || self.tokens_per_modality.clinical != 5
        {
            return err(
                "tokens_per_modality must be eye=6, head=7, clinical=5 to match the \
                 anatomical segment layout"
                    .into(),
            );
        }
        if !(self.use_eye || self.use_head || self.use_clinical) {
            return err("at least one modality must be enabled".into());
        }
        if self.head_hidden == 0 {
            return err("head_hidden must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_published_settings() {
        let cfg = FusionConfig::default();
        assert_eq!(
            (cfg.intra_dims.eye, cfg.intra_dims.head, cfg.intra_dims.clinical),
            (32, 16, 16)
        );
        assert_eq!(cfg.cross_dim, 32);
        assert_eq!(cfg.global_dim, 64);
        assert_eq!(cfg.heads, 4);
        assert_eq!(cfg.dropout, 0.1);
        cfg.validate().unwrap();
    }

    #[test]
    fn bad_dropout_rejected() {
        let cfg = FusionConfig {
            dropout: 1.5,
            ..FusionConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn indivisible_dims_rejected() {
        let cfg = FusionConfig {
            intra_dims: IntraDims {
                eye: 30,
                head: 16,
                clinical: 16,
            },
            ..FusionConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
