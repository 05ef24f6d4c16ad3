use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Activation, BlockConfig, BranchGroupConfig, MixerConfig, ModelConfig};
use super::{Init, Mode, ModelError, Result};
use crate::tensor::{BnSpec, ConvSpec, LinearSpec, Shape4, Tensor4};

/// Kernel orientation of a branch group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `1×k` kernels, sliding along frequency.
    Horizontal,
    /// `k×1` kernels, sliding along time.
    Vertical,
    /// `k×k` kernels of the (2D) variant.
    Square,
}

impl Orientation {
    pub fn kernel(self, k: usize) -> (usize, usize) {
        match self {
            Orientation::Horizontal => (1, k),
            Orientation::Vertical => (k, 1),
            Orientation::Square => (k, k),
        }
    }

    /// Name segment used in parameter names.
    pub fn name(self) -> &'static str {
        match self {
            Orientation::Horizontal => "hgroup",
            Orientation::Vertical => "vgroup",
            Orientation::Square => "group2d",
        }
    }

    fn same_padding(self, k: usize) -> (usize, usize) {
        let (kh, kw) = self.kernel(k);
        ((kh - 1) / 2, (kw - 1) / 2)
    }
}

/// A named view of one parameter or running-statistics buffer.
#[derive(Debug)]
pub struct Param<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f32],
    /// False for batch-norm running statistics.
    pub learnable: bool,
}

#[derive(Debug)]
pub struct ParamMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f32],
}

/// Enumerates named parameters in a fixed order.
pub(crate) trait Visit {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<Param<'a>>);
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>);
}

fn push<'a>(out: &mut Vec<Param<'a>>, name: String, shape: Vec<usize>, data: &'a [f32], learnable: bool) {
    out.push(Param {
        name,
        shape,
        data,
        learnable,
    });
}

fn push_mut<'a>(out: &mut Vec<ParamMut<'a>>, name: String, shape: Vec<usize>, data: &'a mut [f32]) {
    out.push(ParamMut { name, shape, data });
}

impl Visit for ConvSpec {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<Param<'a>>) {
        push(
            out,
            format!("{prefix}.weight"),
            self.weight.shape().dims().to_vec(),
            self.weight.data(),
            true,
        );
        if let Some(b) = &self.bias {
            push(out, format!("{prefix}.bias"), vec![b.len()], b, true);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        let dims = self.weight.shape().dims().to_vec();
        push_mut(out, format!("{prefix}.weight"), dims, self.weight.data_mut());
        if let Some(b) = &mut self.bias {
            push_mut(out, format!("{prefix}.bias"), vec![b.len()], b);
        }
    }
}

impl Visit for BnSpec {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<Param<'a>>) {
        let c = vec![self.channels()];
        push(out, format!("{prefix}.gamma"), c.clone(), &self.gamma, true);
        push(out, format!("{prefix}.beta"), c.clone(), &self.beta, true);
        push(out, format!("{prefix}.mean"), c.clone(), &self.mean, false);
        push(out, format!("{prefix}.var"), c, &self.var, false);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        let c = vec![self.channels()];
        push_mut(out, format!("{prefix}.gamma"), c.clone(), &mut self.gamma);
        push_mut(out, format!("{prefix}.beta"), c.clone(), &mut self.beta);
        push_mut(out, format!("{prefix}.mean"), c.clone(), &mut self.mean);
        push_mut(out, format!("{prefix}.var"), c, &mut self.var);
    }
}

impl Visit for LinearSpec {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<Param<'a>>) {
        let (i, o) = (self.in_features(), self.out_features());
        push(out, format!("{prefix}.weight"), vec![o, i], &self.weight, true);
        push(out, format!("{prefix}.bias"), vec![o], &self.bias, true);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        let (i, o) = (self.in_features(), self.out_features());
        push_mut(out, format!("{prefix}.weight"), vec![o, i], &mut self.weight);
        push_mut(out, format!("{prefix}.bias"), vec![o], &mut self.bias);
    }
}

/// Draws parameters in traversal order from one seeded stream.
pub(crate) struct Initializer {
    rng: Option<ChaCha8Rng>,
    random_stats: bool,
    eps: f32,
}

impl Initializer {
    pub(crate) fn new(init: Init, eps: f32) -> Self {
        let (rng, random_stats) = match init {
            Init::Empty => (None, false),
            Init::Seeded(seed) => (Some(ChaCha8Rng::seed_from_u64(seed)), false),
            Init::SeededRandomStats(seed) => (Some(ChaCha8Rng::seed_from_u64(seed)), true),
        };
        Self { rng, random_stats, eps }
    }

    fn uniform(&mut self, n: usize, lo: f32, hi: f32) -> Vec<f32> {
        match &mut self.rng {
            Some(rng) => (0..n).map(|_| rng.random_range(lo..hi)).collect(),
            None => vec![0.0; n],
        }
    }

    fn symmetric(&mut self, n: usize, bound: f32) -> Vec<f32> {
        self.uniform(n, -bound, bound)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn conv(
        &mut self,
        c_out: usize,
        c_in: usize,
        groups: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        bias: bool,
    ) -> Result<ConvSpec> {
        let shape = Shape4::new(c_out, c_in / groups, kernel.0, kernel.1)?;
        let fan_in = (shape.c * kernel.0 * kernel.1) as f32;
        let weight = Tensor4::new(shape, self.symmetric(shape.numel(), (6.0 / fan_in).sqrt()))?;
        let bias = bias.then(|| self.symmetric(c_out, fan_in.sqrt().recip()));
        Ok(ConvSpec::new(weight, bias, stride, padding, groups)?)
    }

    pub(crate) fn bn(&mut self, c: usize) -> BnSpec {
        if !(self.random_stats && self.rng.is_some()) {
            return BnSpec::identity(c, self.eps);
        }
        let mean = self.uniform(c, -0.5, 0.5);
        let var = self.uniform(c, 0.5, 2.0);
        let gamma = self.uniform(c, 0.5, 1.5);
        let beta = self.uniform(c, -0.5, 0.5);
        BnSpec::new(mean, var, gamma, beta, self.eps).expect("generated statistics are valid")
    }

    fn linear(&mut self, in_features: usize, out_features: usize) -> Result<LinearSpec> {
        let bound = (in_features as f32).sqrt().recip();
        let weight = self.symmetric(in_features * out_features, bound);
        let bias = self.symmetric(out_features, bound);
        Ok(LinearSpec::new(weight, bias, in_features, out_features)?)
    }
}

/// Convolution stem followed by batch norm (train form only) and ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Stem {
    pub(crate) conv: ConvSpec,
    pub(crate) bn: Option<BnSpec>,
}

impl Stem {
    pub fn conv(&self) -> &ConvSpec {
        &self.conv
    }

    pub fn bn(&self) -> Option<&BnSpec> {
        self.bn.as_ref()
    }
}

impl Visit for Stem {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<Param<'a>>) {
        self.conv.params(&format!("{prefix}.conv"), out);
        if let Some(bn) = &self.bn {
            bn.params(&format!("{prefix}.bn"), out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        self.conv.params_mut(&format!("{prefix}.conv"), out);
        if let Some(bn) = &mut self.bn {
            bn.params_mut(&format!("{prefix}.bn"), out);
        }
    }
}

/// Bias-free depthwise convolution with its batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub(crate) conv: ConvSpec,
    pub(crate) bn: BnSpec,
}

impl Branch {
    pub fn new(conv: ConvSpec, bn: BnSpec) -> Self {
        Self { conv, bn }
    }

    pub fn conv(&self) -> &ConvSpec {
        &self.conv
    }

    pub fn bn(&self) -> &BnSpec {
        &self.bn
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IdentityBranch {
    Plain,
    Normalized(BnSpec),
}

/// Parallel depthwise branches of one orientation whose outputs are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchGroup {
    pub(crate) orientation: Orientation,
    pub(crate) branches: Vec<Branch>,
    pub(crate) identity: Option<IdentityBranch>,
}

impl BranchGroup {
    /// Checks that every branch is a shape-preserving depthwise convolution
    /// over the same channels.
    pub fn new(orientation: Orientation, branches: Vec<Branch>, identity: Option<IdentityBranch>) -> Result<Self> {
        let group = Self {
            orientation,
            branches,
            identity,
        };
        group.check()?;
        Ok(group)
    }

    fn check(&self) -> Result<()> {
        let c = self.channels();
        for b in &self.branches {
            let (kh, kw) = b.conv.kernel();
            if kh % 2 == 0 || kw % 2 == 0 {
                return Err(ModelError::EvenKernel(if kh % 2 == 0 { kh } else { kw }));
            }
            if b.conv.stride() != (1, 1) {
                return Err(ModelError::Config(format!(
                    "branch {kh}×{kw} has stride {:?}; all branches need to have the same stride (1, 1)",
                    b.conv.stride()
                )));
            }
            if b.conv.padding() != ((kh - 1) / 2, (kw - 1) / 2) {
                return Err(ModelError::Config(format!(
                    "branch {kh}×{kw} padding {:?} does not preserve the spatial extent",
                    b.conv.padding()
                )));
            }
            if !b.conv.is_depthwise() || b.conv.c_out() != c || b.bn.channels() != c {
                return Err(ModelError::Config(format!(
                    "branch {kh}×{kw} is not a depthwise convolution over {c} channels"
                )));
            }
        }
        if let Some(IdentityBranch::Normalized(bn)) = &self.identity {
            if bn.channels() != c {
                return Err(ModelError::Config(format!(
                    "identity batch norm has {} channels, group has {c}",
                    bn.channels()
                )));
            }
        }
        Ok(())
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn identity(&self) -> Option<&IdentityBranch> {
        self.identity.as_ref()
    }

    pub fn channels(&self) -> usize {
        match (self.branches.first(), &self.identity) {
            (Some(b), _) => b.conv.c_out(),
            (None, Some(IdentityBranch::Normalized(bn))) => bn.channels(),
            _ => 0,
        }
    }

    /// Largest kernel extent `(k_h, k_w)` among the branches.
    pub fn max_kernel(&self) -> (usize, usize) {
        self.branches.iter().fold((1, 1), |(h, w), b| {
            let (kh, kw) = b.conv.kernel();
            (h.max(kh), w.max(kw))
        })
    }

    fn build(orientation: Orientation, cfg: &BranchGroupConfig, c: usize, ini: &mut Initializer) -> Result<Self> {
        let branches = cfg
            .kernel_sizes
            .iter()
            .map(|&k| {
                let conv = ini.conv(
                    c,
                    c,
                    c,
                    orientation.kernel(k),
                    (1, 1),
                    orientation.same_padding(k),
                    false,
                )?;
                Ok(Branch::new(conv, ini.bn(c)))
            })
            .collect::<Result<Vec<_>>>()?;
        let identity = cfg.identity.then(|| {
            if cfg.identity_bn {
                IdentityBranch::Normalized(ini.bn(c))
            } else {
                IdentityBranch::Plain
            }
        });
        Self::new(orientation, branches, identity)
    }
}

impl Visit for BranchGroup {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<Param<'a>>) {
        for b in &self.branches {
            let k = branch_extent(b);
            b.conv.params(&format!("{prefix}.k{k}"), out);
            b.bn.params(&format!("{prefix}.k{k}.bn"), out);
        }
        if let Some(IdentityBranch::Normalized(bn)) = &self.identity {
            bn.params(&format!("{prefix}.identity.bn"), out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        for b in &mut self.branches {
            let k = branch_extent(b);
            b.conv.params_mut(&format!("{prefix}.k{k}"), out);
            b.bn.params_mut(&format!("{prefix}.k{k}.bn"), out);
        }
        if let Some(IdentityBranch::Normalized(bn)) = &mut self.identity {
            bn.params_mut(&format!("{prefix}.identity.bn"), out);
        }
    }
}

fn branch_extent(b: &Branch) -> usize {
    let (kh, kw) = b.conv.kernel();
    kh.max(kw)
}

/// A merged branch group: one biased depthwise convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedMixer {
    pub(crate) orientation: Orientation,
    pub(crate) conv: ConvSpec,
}

impl FusedMixer {
    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn conv(&self) -> &ConvSpec {
        &self.conv
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mixer {
    Branches(BranchGroup),
    Fused(FusedMixer),
}

impl Mixer {
    pub fn orientation(&self) -> Orientation {
        match self {
            Mixer::Branches(g) => g.orientation,
            Mixer::Fused(f) => f.orientation,
        }
    }

    fn build(
        orientation: Orientation,
        cfg: &BranchGroupConfig,
        c: usize,
        mode: Mode,
        ini: &mut Initializer,
    ) -> Result<Self> {
        match mode {
            Mode::Train => Ok(Mixer::Branches(BranchGroup::build(orientation, cfg, c, ini)?)),
            Mode::Inference => {
                let k = cfg.max_kernel();
                let conv = ini.conv(
                    c,
                    c,
                    c,
                    orientation.kernel(k),
                    (1, 1),
                    orientation.same_padding(k),
                    true,
                )?;
                Ok(Mixer::Fused(FusedMixer { orientation, conv }))
            }
        }
    }
}

impl Visit for Mixer {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<Param<'a>>) {
        let prefix = format!("{prefix}.{}", self.orientation().name());
        match self {
            Mixer::Branches(g) => g.params(&prefix, out),
            Mixer::Fused(f) => f.conv.params(&format!("{prefix}.fused"), out),
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        let prefix = format!("{prefix}.{}", self.orientation().name());
        match self {
            Mixer::Branches(g) => g.params_mut(&prefix, out),
            Mixer::Fused(f) => f.conv.params_mut(&format!("{prefix}.fused"), out),
        }
    }
}

/// Pointwise channel MLP. With an expansion layer: `C→E·C`, activation,
/// `E·C→C`. Without: a single `C→C` layer followed by the activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMlp {
    pub(crate) expand: Option<ConvSpec>,
    pub(crate) project: ConvSpec,
    pub(crate) activation: Activation,
}

impl ChannelMlp {
    fn build(cfg: &BlockConfig, ini: &mut Initializer) -> Result<Self> {
        let c = cfg.channels;
        let pw = |ini: &mut Initializer, o: usize, i: usize| ini.conv(o, i, 1, (1, 1), (1, 1), (0, 0), true);
        let (expand, project) = if cfg.inverted_bottleneck {
            let hidden = c * cfg.expansion_ratio;
            (Some(pw(ini, hidden, c)?), pw(ini, c, hidden)?)
        } else {
            (None, pw(ini, c, c)?)
        };
        Ok(Self {
            expand,
            project,
            activation: cfg.activation,
        })
    }

    pub fn expand(&self) -> Option<&ConvSpec> {
        self.expand.as_ref()
    }

    pub fn project(&self) -> &ConvSpec {
        &self.project
    }
}

impl Visit for ChannelMlp {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<Param<'a>>) {
        if let Some(e) = &self.expand {
            e.params(&format!("{prefix}.expand"), out);
        }
        self.project.params(&format!("{prefix}.project"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        if let Some(e) = &mut self.expand {
            e.params_mut(&format!("{prefix}.expand"), out);
        }
        self.project.params_mut(&format!("{prefix}.project"), out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shortcut {
    None,
    Identity,
    /// `1×1` convolution, no bias, used where stride or width changes.
    Projection(ConvSpec),
}

/// One block: pointwise input layer (carrying any stride), the branch
/// groups, the channel MLP and the outer residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub(crate) pw_in: ConvSpec,
    pub(crate) pw_in_bn: Option<BnSpec>,
    pub(crate) mixers: Vec<Mixer>,
    pub(crate) mlp: ChannelMlp,
    pub(crate) shortcut: Shortcut,
}

impl Block {
    pub fn build(
        cfg: &BlockConfig,
        in_channels: usize,
        stride: usize,
        mode: Mode,
        init: Init,
        bn_eps: f32,
    ) -> Result<Self> {
        Self::with_initializer(cfg, in_channels, stride, mode, &mut Initializer::new(init, bn_eps))
    }

    pub(crate) fn with_initializer(
        cfg: &BlockConfig,
        in_channels: usize,
        stride: usize,
        mode: Mode,
        ini: &mut Initializer,
    ) -> Result<Self> {
        cfg.validate()?;
        if in_channels == 0 || stride == 0 {
            return Err(ModelError::Config(
                "block input channels and stride must be at least 1".into(),
            ));
        }
        let c = cfg.channels;
        let train = mode == Mode::Train;
        let pw_in = ini.conv(c, in_channels, 1, (1, 1), (stride, stride), (0, 0), !train)?;
        let pw_in_bn = train.then(|| ini.bn(c));
        let groups: Vec<(Orientation, &BranchGroupConfig)> = match &cfg.mixer {
            MixerConfig::Separable { horizontal, vertical } => {
                vec![(Orientation::Horizontal, horizontal), (Orientation::Vertical, vertical)]
            }
            MixerConfig::Square(g) => vec![(Orientation::Square, g)],
        };
        let mixers = groups
            .into_iter()
            .map(|(o, g)| Mixer::build(o, g, c, mode, ini))
            .collect::<Result<Vec<_>>>()?;
        let mlp = ChannelMlp::build(cfg, ini)?;
        let shortcut = if !cfg.outer_residual {
            Shortcut::None
        } else if stride != 1 || in_channels != c {
            Shortcut::Projection(ini.conv(c, in_channels, 1, (1, 1), (stride, stride), (0, 0), false)?)
        } else {
            Shortcut::Identity
        };
        Ok(Self {
            pw_in,
            pw_in_bn,
            mixers,
            mlp,
            shortcut,
        })
    }

    pub fn mode(&self) -> Mode {
        if self.pw_in_bn.is_some() || self.mixers.iter().any(|m| matches!(m, Mixer::Branches(_))) {
            Mode::Train
        } else {
            Mode::Inference
        }
    }

    pub fn mixers(&self) -> &[Mixer] {
        &self.mixers
    }

    pub fn mlp(&self) -> &ChannelMlp {
        &self.mlp
    }

    pub fn shortcut(&self) -> &Shortcut {
        &self.shortcut
    }

    pub fn pw_in(&self) -> &ConvSpec {
        &self.pw_in
    }

    pub fn pw_in_bn(&self) -> Option<&BnSpec> {
        self.pw_in_bn.as_ref()
    }

    pub fn parameters(&self) -> Vec<Param<'_>> {
        let mut out = Vec::new();
        self.params("block", &mut out);
        out
    }

    /// Learnable parameters; running statistics excluded.
    pub fn param_count(&self) -> usize {
        self.parameters()
            .iter()
            .filter(|p| p.learnable)
            .map(|p| p.data.len())
            .sum()
    }
}

impl Visit for Block {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<Param<'a>>) {
        self.pw_in.params(&format!("{prefix}.pw_in"), out);
        if let Some(bn) = &self.pw_in_bn {
            bn.params(&format!("{prefix}.pw_in.bn"), out);
        }
        self.mixers.iter().for_each(|m| m.params(prefix, out));
        self.mlp.params(&format!("{prefix}.mlp"), out);
        if let Shortcut::Projection(p) = &self.shortcut {
            p.params(&format!("{prefix}.shortcut"), out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        self.pw_in.params_mut(&format!("{prefix}.pw_in"), out);
        if let Some(bn) = &mut self.pw_in_bn {
            bn.params_mut(&format!("{prefix}.pw_in.bn"), out);
        }
        self.mixers.iter_mut().for_each(|m| m.params_mut(prefix, out));
        self.mlp.params_mut(&format!("{prefix}.mlp"), out);
        if let Shortcut::Projection(p) = &mut self.shortcut {
            p.params_mut(&format!("{prefix}.shortcut"), out);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub(crate) blocks: Vec<Block>,
}

impl Stage {
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }
}

/// Stem, max pool, stages, global average pool and linear head.
///
/// Parameter names are `stem.*`, `stage{i}.block{j}.*` with stages counted
/// from 1 and blocks from 0, and `head.*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub(crate) config: ModelConfig,
    pub(crate) mode: Mode,
    pub(crate) stem: Stem,
    pub(crate) stages: Vec<Stage>,
    pub(crate) head: LinearSpec,
}

impl ModelGraph {
    pub fn build(config: &ModelConfig, mode: Mode, init: Init) -> Result<Self> {
        config.validate()?;
        let mut ini = Initializer::new(init, config.bn_eps);
        let train = mode == Mode::Train;
        let sc = &config.stem;
        let stem = Stem {
            conv: ini.conv(
                sc.channels,
                config.in_channels,
                1,
                sc.kernel,
                sc.stride,
                sc.padding(),
                !train,
            )?,
            bn: train.then(|| ini.bn(sc.channels)),
        };
        let mut c_in = sc.channels;
        let mut stages = Vec::with_capacity(config.stages.len());
        for st in &config.stages {
            let mut blocks = Vec::with_capacity(st.blocks);
            for j in 0..st.blocks {
                let stride = if j == 0 && st.downsample { 2 } else { 1 };
                blocks.push(Block::with_initializer(&st.block, c_in, stride, mode, &mut ini)?);
                c_in = st.block.channels;
            }
            stages.push(Stage { blocks });
        }
        let head = ini.linear(c_in, config.num_classes)?;
        Ok(Self {
            config: config.clone(),
            mode,
            stem,
            stages,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn stem(&self) -> &Stem {
        &self.stem
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn head(&self) -> &LinearSpec {
        &self.head
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.stages.iter().flat_map(|s| s.blocks.iter())
    }

    /// Every parameter and running-statistics buffer, in a fixed order.
    pub fn parameters(&self) -> Vec<Param<'_>> {
        let mut out = Vec::new();
        self.stem.params("stem", &mut out);
        for (i, stage) in self.stages.iter().enumerate() {
            for (j, block) in stage.blocks.iter().enumerate() {
                block.params(&format!("stage{}.block{j}", i + 1), &mut out);
            }
        }
        self.head.params("head", &mut out);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        self.stem.params_mut("stem", &mut out);
        for (i, stage) in self.stages.iter_mut().enumerate() {
            for (j, block) in stage.blocks.iter_mut().enumerate() {
                block.params_mut(&format!("stage{}.block{j}", i + 1), &mut out);
            }
        }
        self.head.params_mut("head", &mut out);
        out
    }

    /// Learnable parameters: convolution weights and biases, batch-norm
    /// `γ` and `β`, and the head. Running statistics are not counted.
    pub fn param_count(&self) -> usize {
        self.parameters()
            .iter()
            .filter(|p| p.learnable)
            .map(|p| p.data.len())
            .sum()
    }
}
