//! Architectural configuration: vanilla and hierarchical (staged) layouts,
//! the alpha mixing rule, mixer variants, and the published named configs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vanilla,
    Hierarchical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixerKind {
    #[serde(rename = "FN")]
    Fn,
    #[serde(rename = "FGN")]
    Fgn,
    #[serde(rename = "FNO")]
    Fno,
    #[serde(rename = "WGN")]
    Wgn,
}

impl MixerKind {
    pub fn name(&self) -> &'static str {
        match self {
            MixerKind::Fn => "FN",
            MixerKind::Fgn => "FGN",
            MixerKind::Fno => "FNO",
            MixerKind::Wgn => "WGN",
        }
    }
}

/// Spectral-first is the standard ordering; attention-first is the inverse
/// ("iSpectFormer") ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockOrder {
    #[serde(rename = "spectral-first")]
    SpectralFirst,
    #[serde(rename = "attention-first")]
    AttentionFirst,
}

/// One stage of the hierarchical layout: a run of spectral blocks followed
/// by attention blocks at a fixed channel width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub spectral: usize,
    pub attention: usize,
    pub heads: usize,
    pub channels: usize,
    pub expansion: usize,
}

fn default_expansion() -> usize {
    4
}
fn default_in_channels() -> usize {
    3
}
fn default_mixer() -> MixerKind {
    MixerKind::Fgn
}
fn default_order() -> BlockOrder {
    BlockOrder::SpectralFirst
}

/// Full architectural description. JSON configs mirror these fields
/// exactly; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Total block count (vanilla only).
    #[serde(default)]
    pub layers: usize,
    /// Leading spectral block count (vanilla only).
    #[serde(default)]
    pub alpha: usize,
    /// Channel width (vanilla only; hierarchical widths live in `stages`).
    #[serde(default)]
    pub dim: usize,
    #[serde(default)]
    pub heads: usize,
    #[serde(default = "default_expansion")]
    pub expansion: usize,
    /// Patch side for the initial embedding (hierarchical always uses 4).
    pub patch: usize,
    pub resolution: usize,
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    #[serde(default = "default_mixer")]
    pub mixer: MixerKind,
    #[serde(default = "default_order")]
    pub order: BlockOrder,
    pub num_classes: usize,
    #[serde(default)]
    pub stages: Vec<StageConfig>,
    /// FNO mode retention [rows, stored cols]; None keeps every mode.
    #[serde(default)]
    pub fno_modes: Option<[usize; 2]>,
}

impl ModelConfig {
    pub fn vanilla(
        layers: usize,
        alpha: usize,
        dim: usize,
        heads: usize,
        patch: usize,
        resolution: usize,
        num_classes: usize,
    ) -> Self {
        ModelConfig {
            kind: ModelKind::Vanilla,
            layers,
            alpha,
            dim,
            heads,
            expansion: 4,
            patch,
            resolution,
            in_channels: 3,
            mixer: MixerKind::Fgn,
            order: BlockOrder::SpectralFirst,
            num_classes,
            stages: Vec::new(),
            fno_modes: None,
        }
    }

    /// Vanilla token grid (side lengths).
    pub fn vanilla_grid(&self) -> (usize, usize) {
        let side = self.resolution / self.patch;
        (side, side)
    }

    /// Grid side of hierarchical stage `i` (stage 0 is res/4, halving after).
    pub fn stage_grid_side(&self, stage: usize) -> usize {
        (self.resolution / 4) >> stage
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::config("num_classes must be positive"));
        }
        if self.in_channels == 0 {
            return Err(Error::config("in_channels must be positive"));
        }
        if self.resolution == 0 {
            return Err(Error::config("resolution must be positive"));
        }
        match self.kind {
            ModelKind::Vanilla => {
                if self.alpha > self.layers {
                    return Err(Error::config(format!(
                        "alpha out of range: {} > {} layers",
                        self.alpha, self.layers
                    )));
                }
                if self.dim == 0 {
                    return Err(Error::config("dim must be positive"));
                }
                if self.alpha < self.layers && (self.heads == 0 || self.dim % self.heads != 0) {
                    return Err(Error::config(format!(
                        "channels not divisible by heads: {} / {}",
                        self.dim, self.heads
                    )));
                }
                if self.patch == 0 || self.resolution % self.patch != 0 {
                    return Err(Error::config(format!(
                        "resolution {} not divisible by patch {}",
                        self.resolution, self.patch
                    )));
                }
                if self.expansion == 0 {
                    return Err(Error::config("expansion must be positive"));
                }
                if !self.stages.is_empty() {
                    return Err(Error::config("vanilla config must not define stages"));
                }
                if let Some([mh, mw]) = self.fno_modes {
                    let (gh, gw) = self.vanilla_grid();
                    if mh == 0 || mw == 0 || mh > gh || mw > gw / 2 + 1 {
                        return Err(Error::config(format!(
                            "fno_modes [{mh}, {mw}] exceed grid {gh}x{gw} half spectrum"
                        )));
                    }
                }
            }
            ModelKind::Hierarchical => {
                if self.stages.is_empty() {
                    return Err(Error::config("hierarchical config requires stages"));
                }
                if self.resolution % 4 != 0 {
                    return Err(Error::config("hierarchical resolution must be divisible by 4"));
                }
                for (i, st) in self.stages.iter().enumerate() {
                    if st.channels == 0 || st.expansion == 0 {
                        return Err(Error::config(format!("stage {i}: zero channels/expansion")));
                    }
                    if st.attention > 0 && (st.heads == 0 || st.channels % st.heads != 0) {
                        return Err(Error::config(format!(
                            "stage {i}: channels not divisible by heads: {} / {}",
                            st.channels, st.heads
                        )));
                    }
                    if self.stage_grid_side(i) == 0 {
                        return Err(Error::config(format!(
                            "stage {i}: resolution {} too small for the stage pyramid",
                            self.resolution
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn hier(
    stages: [(usize, usize, usize, usize, usize); 4],
    resolution: usize,
    num_classes: usize,
) -> ModelConfig {
    ModelConfig {
        kind: ModelKind::Hierarchical,
        layers: 0,
        alpha: 0,
        dim: 0,
        heads: 0,
        expansion: 0,
        patch: 4,
        resolution,
        in_channels: 3,
        mixer: MixerKind::Fgn,
        order: BlockOrder::SpectralFirst,
        num_classes,
        stages: stages
            .iter()
            .map(|&(spectral, attention, heads, channels, expansion)| StageConfig {
                spectral,
                attention,
                heads,
                channels,
                expansion,
            })
            .collect(),
        fno_modes: None,
    }
}

/// The published configurations: the four vanilla sizes and the three
/// hierarchical ones (stage tuples are spectral/attention block counts,
/// heads, channels, expansion).
pub fn named_configs() -> Vec<(&'static str, ModelConfig)> {
    vec![
        ("spectformer-ti", ModelConfig::vanilla(12, 4, 256, 4, 16, 224, 1000)),
        ("spectformer-xs", ModelConfig::vanilla(12, 4, 384, 6, 16, 224, 1000)),
        ("spectformer-s", ModelConfig::vanilla(19, 4, 384, 6, 16, 224, 1000)),
        ("spectformer-b", ModelConfig::vanilla(19, 4, 512, 8, 16, 224, 1000)),
        (
            "spectformer-h-s",
            hier(
                [(2, 1, 2, 64, 8), (2, 2, 4, 128, 8), (0, 6, 10, 320, 4), (0, 3, 14, 448, 4)],
                224,
                1000,
            ),
        ),
        (
            "spectformer-h-b",
            hier(
                [(2, 1, 2, 64, 8), (2, 2, 4, 128, 8), (0, 12, 10, 320, 4), (0, 3, 16, 512, 4)],
                224,
                1000,
            ),
        ),
        (
            "spectformer-h-l",
            hier(
                [(2, 1, 3, 96, 8), (2, 4, 6, 192, 8), (0, 18, 12, 384, 4), (0, 3, 16, 512, 4)],
                224,
                1000,
            ),
        ),
    ]
}

/// Desk-scale presets for training runs and tests.
pub fn toy_configs() -> Vec<(&'static str, ModelConfig)> {
    let mut tiny = ModelConfig::vanilla(4, 2, 48, 4, 4, 32, 4);
    tiny.in_channels = 1;
    tiny.expansion = 2;

    let mut mnist = ModelConfig::vanilla(4, 2, 64, 4, 4, 32, 10);
    mnist.in_channels = 1;
    mnist.expansion = 2;

    let mut cifar = ModelConfig::vanilla(6, 2, 96, 4, 4, 32, 10);
    cifar.expansion = 2;

    vec![
        ("spectformer-tiny-toy", tiny),
        ("spectformer-mnist-toy", mnist),
        ("spectformer-cifar-toy", cifar),
    ]
}

/// Resolve a config by name, searching the published set then the toys.
pub fn config_by_name(name: &str) -> Result<ModelConfig> {
    for (n, cfg) in named_configs() {
        if n == name {
            return Ok(cfg);
        }
    }
    for (n, cfg) in toy_configs() {
        if n == name {
            return Ok(cfg);
        }
    }
    let valid: Vec<String> = named_configs()
        .iter()
        .map(|(n, _)| n.to_string())
        .chain(toy_configs().iter().map(|(n, _)| n.to_string()))
        .collect();
    Err(Error::config(format!(
        "unknown config {name:?}; valid names: {}",
        valid.join(", ")
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_set_matches_published_sizes() {
        let configs = named_configs();
        assert_eq!(configs.len(), 7);
        let s = config_by_name("spectformer-s").unwrap();
        assert_eq!((s.layers, s.heads, s.dim), (19, 6, 384));
        assert_eq!(s.alpha, 4);

        let hs = config_by_name("spectformer-h-s").unwrap();
        let stage3 = hs.stages[2];
        assert_eq!(stage3.heads, 10);
        assert_eq!(stage3.channels, 320);
        assert_eq!(stage3.spectral + stage3.attention, 6);
    }

    #[test]
    fn unknown_name_lists_valid_options() {
        let err = config_by_name("spectformer-xxl").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("spectformer-ti"), "{msg}");
        assert!(msg.contains("spectformer-h-l"), "{msg}");
    }

    #[test]
    fn alpha_bounds_checked() {
        let mut cfg = ModelConfig::vanilla(12, 13, 384, 6, 16, 224, 1000);
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("alpha out of range"), "{err}");
        cfg.alpha = 12;
        cfg.validate().unwrap();
    }

    #[test]
    fn heads_divisibility_checked() {
        let cfg = ModelConfig::vanilla(12, 4, 384, 5, 16, 224, 1000);
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("not divisible by heads"), "{err}");
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let cfg = config_by_name("spectformer-xs").unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ModelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);

        let with_unknown = json.replace("\"kind\"", "\"bogus\":1,\"kind\"");
        assert!(serde_json::from_str::<ModelConfig>(&with_unknown).is_err());
    }

    #[test]
    fn stage_grid_sides_halve() {
        let cfg = config_by_name("spectformer-h-s").unwrap();
        assert_eq!(cfg.stage_grid_side(0), 56);
        assert_eq!(cfg.stage_grid_side(1), 28);
        assert_eq!(cfg.stage_grid_side(2), 14);
        assert_eq!(cfg.stage_grid_side(3), 7);
    }
}
