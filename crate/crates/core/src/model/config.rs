use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::tensor::{Scalar, Tensor4, DEFAULT_BN_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    B0,
    B1,
    Custom,
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "b0" => Ok(Variant::B0),
            "b1" => Ok(Variant::B1),
            other => Err(ModelError::Config(format!(
                "unknown variant '{other}' (expected b0 or b1)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::B0 => "B0",
            Variant::B1 => "B1",
            Variant::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Gelu,
    Identity,
}

impl Activation {
    pub(crate) fn apply_inplace<T: Scalar>(self, x: &mut Tensor4<T>) {
        match self {
            Activation::Relu => crate::tensor::relu_inplace(x),
            Activation::Gelu => x.data_mut().iter_mut().for_each(|v| {
                let z = v.to_f64();
                let inner = (2.0 / std::f64::consts::PI).sqrt() * (z + 0.044715 * z * z * z);
                *v = T::from_f64(0.5 * z * (1.0 + inner.tanh()));
            }),
            Activation::Identity => {}
        }
    }
}

/// One set of parallel depthwise branches sharing an orientation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchGroupConfig {
    /// Odd kernel extents; stored largest first.
    pub kernel_sizes: Vec<usize>,
    /// Parallel pass-through branch.
    pub identity: bool,
    /// Whether the pass-through branch carries its own batch norm.
    pub identity_bn: bool,
}

impl BranchGroupConfig {
    pub fn new(kernel_sizes: &[usize], identity: bool) -> Self {
        let mut kernel_sizes = kernel_sizes.to_vec();
        kernel_sizes.sort_unstable_by(|a, b| b.cmp(a));
        Self {
            kernel_sizes,
            identity,
            identity_bn: true,
        }
    }

    pub fn max_kernel(&self) -> usize {
        self.kernel_sizes.iter().copied().max().unwrap_or(0)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.kernel_sizes.is_empty() {
            return Err(ModelError::Config("branch group has no kernels".into()));
        }
        if let Some(&k) = self.kernel_sizes.iter().find(|&&k| k % 2 == 0) {
            return Err(ModelError::EvenKernel(k));
        }
        let mut sorted = self.kernel_sizes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.kernel_sizes.len() {
            return Err(ModelError::Config(format!(
                "duplicate kernel sizes in {:?}",
                self.kernel_sizes
            )));
        }
        Ok(())
    }
}

impl Default for BranchGroupConfig {
    fn default() -> Self {
        Self::new(&[21, 11, 3], true)
    }
}

/// Token mixer of a block: separable `1×k` then `k×1` groups, or the (2D)
/// variant with a single group of `k×k` kernels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "lowercase")]
pub enum MixerConfig {
    Separable {
        horizontal: BranchGroupConfig,
        vertical: BranchGroupConfig,
    },
    Square(BranchGroupConfig),
}

impl MixerConfig {
    pub fn separable(kernel_sizes: &[usize], identity: bool) -> Self {
        MixerConfig::Separable {
            horizontal: BranchGroupConfig::new(kernel_sizes, identity),
            vertical: BranchGroupConfig::new(kernel_sizes, identity),
        }
    }

    pub fn square(kernel_sizes: &[usize], identity: bool) -> Self {
        MixerConfig::Square(BranchGroupConfig::new(kernel_sizes, identity))
    }

    pub fn groups(&self) -> Vec<&BranchGroupConfig> {
        match self {
            MixerConfig::Separable { horizontal, vertical } => vec![horizontal, vertical],
            MixerConfig::Square(g) => vec![g],
        }
    }

    fn groups_mut(&mut self) -> Vec<&mut BranchGroupConfig> {
        match self {
            MixerConfig::Separable { horizontal, vertical } => vec![horizontal, vertical],
            MixerConfig::Square(g) => vec![g],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub channels: usize,
    /// Hidden width multiplier of the channel MLP.
    pub expansion_ratio: usize,
    /// With `false` the channel MLP is a single `C→C` pointwise layer.
    pub inverted_bottleneck: bool,
    pub mixer: MixerConfig,
    /// Residual connection around the whole block.
    pub outer_residual: bool,
    /// Applied after the expansion layer.
    pub activation: Activation,
}

impl BlockConfig {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            expansion_ratio: 4,
            inverted_bottleneck: true,
            mixer: MixerConfig::separable(&[21, 11, 3], true),
            outer_residual: true,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.channels == 0 {
            return Err(ModelError::Config("block channels must be at least 1".into()));
        }
        if self.expansion_ratio == 0 {
            return Err(ModelError::Config("expansion ratio must be at least 1".into()));
        }
        self.mixer
            .groups()
            .into_iter()
            .try_for_each(BranchGroupConfig::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemConfig {
    pub channels: usize,
    /// `(time, frequency)` extents; both odd.
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

impl StemConfig {
    pub fn padding(&self) -> (usize, usize) {
        ((self.kernel.0 - 1) / 2, (self.kernel.1 - 1) / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    /// First block runs at stride 2 with a `1×1` stride-2 projection shortcut.
    pub downsample: bool,
    pub blocks: usize,
    pub block: BlockConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub in_channels: usize,
    pub stem: StemConfig,
    pub pool: PoolConfig,
    pub stages: Vec<StageConfig>,
    pub num_classes: usize,
    pub bn_eps: f32,
    /// Nominal `(frames, mel bins)` of the spectrogram the model was built for.
    #[serde(default)]
    pub input_extent: Option<(usize, usize)>,
}

const STAGE_DEPTHS: [usize; 4] = [3, 4, 6, 3];
const B0_WIDTHS: [usize; 4] = [32, 64, 128, 256];
const B1_WIDTHS: [usize; 4] = [64, 128, 256, 512];

impl ModelConfig {
    fn from_widths(variant: Variant, widths: [usize; 4], num_classes: usize) -> Self {
        let stages = widths
            .iter()
            .zip(STAGE_DEPTHS)
            .enumerate()
            .map(|(i, (&c, blocks))| StageConfig {
                downsample: i > 0,
                blocks,
                block: BlockConfig::new(c),
            })
            .collect();
        Self {
            variant,
            in_channels: 1,
            stem: StemConfig {
                channels: widths[0],
                kernel: (5, 7),
                stride: (2, 2),
            },
            pool: PoolConfig {
                kernel: (3, 3),
                stride: (2, 2),
                padding: (1, 1),
            },
            stages,
            num_classes,
            bn_eps: DEFAULT_BN_EPS,
            input_extent: Some((512, 128)),
        }
    }

    pub fn b0(num_classes: usize) -> Self {
        Self::from_widths(Variant::B0, B0_WIDTHS, num_classes)
    }

    pub fn b1(num_classes: usize) -> Self {
        Self::from_widths(Variant::B1, B1_WIDTHS, num_classes)
    }

    pub fn for_variant(variant: Variant, num_classes: usize) -> Result<Self, ModelError> {
        match variant {
            Variant::B0 => Ok(Self::b0(num_classes)),
            Variant::B1 => Ok(Self::b1(num_classes)),
            Variant::Custom => Err(ModelError::Config("custom variants have no preset".into())),
        }
    }

    /// Applies `f` to every stage's block configuration.
    pub fn map_blocks(mut self, f: impl Fn(&mut BlockConfig)) -> Self {
        self.stages.iter_mut().for_each(|s| f(&mut s.block));
        self
    }

    /// The (2D) variant: one group of `k×k` depthwise kernels per block.
    pub fn into_square(self) -> Self {
        self.map_blocks(|b| {
            let group = b.mixer.groups()[0].clone();
            b.mixer = MixerConfig::Square(group);
        })
    }

    /// Sets whether identity branches carry batch norm, in every group.
    pub fn with_identity_bn(self, on: bool) -> Self {
        self.map_blocks(|b| b.mixer.groups_mut().into_iter().for_each(|g| g.identity_bn = on))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.in_channels == 0 || self.stem.channels == 0 || self.num_classes == 0 {
            return Err(ModelError::Config("channel and class counts must be at least 1".into()));
        }
        if self.stages.is_empty() {
            return Err(ModelError::Config("model needs at least one stage".into()));
        }
        let (kh, kw) = self.stem.kernel;
        if kh % 2 == 0 {
            return Err(ModelError::EvenKernel(kh));
        }
        if kw % 2 == 0 {
            return Err(ModelError::EvenKernel(kw));
        }
        if self.bn_eps.is_nan() || self.bn_eps <= 0.0 {
            return Err(ModelError::Config("bn_eps must be positive".into()));
        }
        for stage in &self.stages {
            if stage.blocks == 0 {
                return Err(ModelError::Config("every stage needs at least one block".into()));
            }
            stage.block.validate()?;
        }
        Ok(())
    }

    /// Total spatial reduction `(time, frequency)` from input to the last stage.
    pub fn reduction(&self) -> (usize, usize) {
        let down = 1usize << self.stages.iter().filter(|s| s.downsample).count();
        (
            self.stem.stride.0 * self.pool.stride.0 * down,
            self.stem.stride.1 * self.pool.stride.1 * down,
        )
    }

    pub fn final_channels(&self) -> usize {
        self.stages.last().map_or(self.stem.channels, |s| s.block.channels)
    }
}

/// Rows of the multi-branch ablation table, applied to B1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationId {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
    S8,
    S9,
}

impl FromStr for AblationId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "s1" => AblationId::S1,
            "s2" => AblationId::S2,
            "s3" => AblationId::S3,
            "s4" => AblationId::S4,
            "s5" => AblationId::S5,
            "s6" => AblationId::S6,
            "s7" => AblationId::S7,
            "s8" => AblationId::S8,
            "s9" => AblationId::S9,
            _ => return Err(ModelError::UnknownAblation(s.to_string())),
        })
    }
}

impl AblationId {
    /// `(kernels, identity, inverted bottleneck)`.
    fn row(self) -> (&'static [usize], bool, bool) {
        match self {
            AblationId::S1 => (&[3], true, true),
            AblationId::S2 => (&[11], true, true),
            AblationId::S3 => (&[21], true, true),
            AblationId::S4 => (&[21, 3], true, true),
            AblationId::S5 => (&[21, 11], true, true),
            AblationId::S6 => (&[21, 11, 3], true, true),
            AblationId::S7 => (&[31, 21, 11, 3], true, true),
            AblationId::S8 => (&[21, 11, 3], false, true),
            AblationId::S9 => (&[21, 11, 3], true, false),
        }
    }
}

/// B1 with the branch kernels, identity branches and channel MLP of the
/// given ablation row.
pub fn ablation_config(id: &str, num_classes: usize) -> Result<ModelConfig, ModelError> {
    let (kernels, identity, bottleneck) = id.parse::<AblationId>()?.row();
    let mut cfg = ModelConfig::b1(num_classes).map_blocks(|b| {
        b.mixer = MixerConfig::separable(kernels, identity);
        b.inverted_bottleneck = bottleneck;
    });
    cfg.variant = Variant::Custom;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_widths_and_depths() {
        let b0 = ModelConfig::b0(309);
        let b1 = ModelConfig::b1(309);
        let widths = |c: &ModelConfig| c.stages.iter().map(|s| s.block.channels).collect::<Vec<_>>();
        assert_eq!(widths(&b0), [32, 64, 128, 256]);
        assert_eq!(widths(&b1), [64, 128, 256, 512]);
        for c in [&b0, &b1] {
            assert_eq!(c.stages.iter().map(|s| s.blocks).collect::<Vec<_>>(), [3, 4, 6, 3]);
            assert!(c.stages.iter().all(|s| s.block.expansion_ratio == 4));
            assert_eq!(c.stem.kernel, (5, 7));
            assert_eq!(c.stem.padding(), (2, 3));
            assert_eq!(c.reduction(), (32, 32));
        }
        assert_eq!(b0.stem.channels, 32);
    }

    #[test]
    fn even_kernels_rejected() {
        let cfg = ModelConfig::b0(10).map_blocks(|b| b.mixer = MixerConfig::separable(&[21, 10], true));
        assert!(matches!(cfg.validate(), Err(ModelError::EvenKernel(10))));
    }

    #[test]
    fn zero_channels_rejected() {
        let cfg = ModelConfig::b0(10).map_blocks(|b| b.channels = 0);
        assert!(matches!(cfg.validate(), Err(ModelError::Config(_))));
    }

    #[test]
    fn ablation_rows() {
        let s1 = ablation_config("s1", 309).unwrap();
        assert_eq!(s1.stages[0].block.mixer.groups()[0].kernel_sizes, [3]);
        let s7 = ablation_config("S7", 309).unwrap();
        assert_eq!(s7.stages[2].block.mixer.groups()[1].kernel_sizes, [31, 21, 11, 3]);
        let s8 = ablation_config("s8", 309).unwrap();
        assert!(s8
            .stages
            .iter()
            .all(|s| s.block.mixer.groups().iter().all(|g| !g.identity)));
        assert!(s8.stages.iter().all(|s| s.block.outer_residual));
        assert!(!ablation_config("s9", 309).unwrap().stages[0].block.inverted_bottleneck);
        assert!(matches!(
            ablation_config("s10", 309),
            Err(ModelError::UnknownAblation(_))
        ));
    }

    #[test]
    fn kernels_stored_descending() {
        assert_eq!(BranchGroupConfig::new(&[3, 21, 11], true).kernel_sizes, [21, 11, 3]);
    }

    #[test]
    fn config_serde_round_trip() {
        let cfg = ModelConfig::b1(44).into_square();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&json).unwrap(), cfg);
    }
}
