//! Composite building blocks: CBS/CB conv units, the adaptive channel
//! split-and-shuffle block (unit-stride and downsampling), lightweight
//! coordinate attention and the full-width coordinate-attention baseline,
//! the single-channel focus transform, and SPPF.
//!
//! Blocks are immutable after construction and their forwards are pure.
//! Every block exposes its parameter inventory through [`ParamVisit`] with a
//! deterministic `block.path.tensor` naming scheme; counted parameters are
//! weights, biases and the batch-norm scale/shift pairs (running statistics
//! are serialized but never counted).

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::ops;
use crate::ratio::Ratio;
use crate::scalar::Scalar;
use crate::tensor::{BnParams, ConvParams, Tensor4};

/// Post-norm activation of a conv unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    /// No activation (the CB unit).
    Linear,
    /// x·sigmoid(x) (the CBS unit).
    Silu,
}

/// Convolution with optional inference batch norm and activation.
///
/// `ConvBn::cbs` is conv → BN → SiLU, `ConvBn::cb` is conv → BN. Convs
/// followed by BN are bias-free; fusing folds the norm into a biased conv
/// with algebraically identical output.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn<S> {
    pub conv: ConvParams<S>,
    pub bn: Option<BnParams<S>>,
    pub act: Act,
}

impl<S: Scalar> ConvBn<S> {
    pub fn cbs(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        Ok(ConvBn {
            conv: ConvParams::new(in_ch, out_ch, kernel, stride, padding, 1)?,
            bn: Some(BnParams::identity(out_ch)),
            act: Act::Silu,
        })
    }

    pub fn cb(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let mut unit = Self::cbs(in_ch, out_ch, kernel, stride, padding)?;
        unit.act = Act::Linear;
        Ok(unit)
    }

    /// Depthwise conv + BN, no activation.
    pub fn depthwise_cb(
        channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        Ok(ConvBn {
            conv: ConvParams::new(channels, channels, kernel, stride, padding, channels)?,
            bn: Some(BnParams::identity(channels)),
            act: Act::Linear,
        })
    }

    /// Grouped pointwise conv with bias and no norm (used by LCA transforms).
    pub fn grouped_pointwise(channels: usize, groups: usize) -> Result<Self> {
        let conv =
            ConvParams::new(channels, channels, 1, 1, 0, groups)?
                .with_bias(vec![S::zero(); channels])?;
        Ok(ConvBn {
            conv,
            bn: None,
            act: Act::Linear,
        })
    }

    pub fn forward(&self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        let mut y = ops::conv2d(x, &self.conv)?;
        if let Some(bn) = &self.bn {
            y = ops::batch_norm_infer(&y, bn)?;
        }
        Ok(match self.act {
            Act::Linear => y,
            Act::Silu => ops::silu(&y),
        })
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels
    }

    pub fn output_shape(&self, c: usize, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        if c != self.conv.in_channels {
            return Err(CoreError::shape(format!(
                "expected {} input channels, got {c}",
                self.conv.in_channels
            )));
        }
        match (self.conv.out_extent(h), self.conv.out_extent(w)) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok((self.conv.out_channels, oh, ow)),
            _ => Err(CoreError::shape("empty conv output")),
        }
    }

    /// Fold the batch norm into the convolution. Idempotent.
    pub fn fuse_bn(&self) -> Self {
        let Some(bn) = &self.bn else {
            return self.clone();
        };
        let mut conv = self.conv.clone();
        let per_out = conv.in_channels / conv.groups * conv.kernel * conv.kernel;
        let old_bias = self.conv.bias.clone();
        let mut bias = Vec::with_capacity(conv.out_channels);
        for oc in 0..conv.out_channels {
            let inv = (bn.running_var[oc].as_f64() + bn.eps).sqrt().recip();
            let g = bn.scale[oc].as_f64() * inv;
            for w in &mut conv.weights[oc * per_out..(oc + 1) * per_out] {
                *w = S::from_f64(w.as_f64() * g);
            }
            let b0 = old_bias.as_ref().map_or(0.0, |b| b[oc].as_f64());
            bias.push(S::from_f64(
                bn.shift[oc].as_f64() + (b0 - bn.running_mean[oc].as_f64()) * g,
            ));
        }
        conv.bias = Some(bias);
        ConvBn {
            conv,
            bn: None,
            act: self.act,
        }
    }

    pub fn init_random<R: Rng>(&mut self, rng: &mut R) {
        self.conv.init_random(rng);
        if let Some(bn) = &mut self.bn {
            bn.init_random(rng);
        }
    }
}

/// One named parameter tensor exposed by a block.
pub struct ParamRef<'a, S> {
    pub data: &'a [S],
    /// Running statistics are serialized but excluded from parameter counts.
    pub counted: bool,
}

/// Mutable view for loading serialized parameters back in.
pub struct ParamRefMut<'a, S> {
    pub data: &'a mut [S],
    pub counted: bool,
}

/// Deterministic enumeration of a block's parameter tensors, in a fixed
/// order, with `block.path.tensor` names.
pub trait ParamVisit<S: Scalar> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, S>));
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, S>));
}

/// Sum of counted parameters over a block's inventory.
pub fn block_param_count<S: Scalar>(block: &dyn ParamVisit<S>) -> usize {
    let mut total = 0;
    block.visit_params("", &mut |_, p| {
        if p.counted {
            total += p.data.len();
        }
    });
    total
}

/// A block with no parameters at all.
impl<S: Scalar> ParamVisit<S> for () {
    fn visit_params(&self, _prefix: &str, _f: &mut dyn FnMut(String, ParamRef<'_, S>)) {}
    fn visit_params_mut(&mut self, _prefix: &str, _f: &mut dyn FnMut(String, ParamRefMut<'_, S>)) {}
}

fn join(prefix: &str, leaf: &str) -> String {
    if prefix.is_empty() {
        leaf.to_string()
    } else {
        format!("{prefix}.{leaf}")
    }
}

impl<S: Scalar> ParamVisit<S> for ConvBn<S> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, S>)) {
        f(
            join(prefix, "conv.weight"),
            ParamRef {
                data: &self.conv.weights,
                counted: true,
            },
        );
        if let Some(b) = &self.conv.bias {
            f(
                join(prefix, "conv.bias"),
                ParamRef {
                    data: b,
                    counted: true,
                },
            );
        }
        if let Some(bn) = &self.bn {
            for (leaf, data, counted) in [
                ("bn.scale", &bn.scale, true),
                ("bn.shift", &bn.shift, true),
                ("bn.mean", &bn.running_mean, false),
                ("bn.var", &bn.running_var, false),
            ] {
                f(join(prefix, leaf), ParamRef { data, counted });
            }
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, S>)) {
        f(
            join(prefix, "conv.weight"),
            ParamRefMut {
                data: &mut self.conv.weights,
                counted: true,
            },
        );
        if let Some(b) = &mut self.conv.bias {
            f(
                join(prefix, "conv.bias"),
                ParamRefMut {
                    data: b,
                    counted: true,
                },
            );
        }
        if let Some(bn) = &mut self.bn {
            for (leaf, data, counted) in [
                ("bn.scale", &mut bn.scale, true),
                ("bn.shift", &mut bn.shift, true),
                ("bn.mean", &mut bn.running_mean, false),
                ("bn.var", &mut bn.running_var, false),
            ] {
                f(join(prefix, leaf), ParamRefMut { data, counted });
            }
        }
    }
}

/// Part-A realization of the split-and-shuffle block.
///
/// Unit stride offers `conv` and `identity`; the downsampling variant
/// offers `conv` (3×3 stride 2), `pool_conv` (stride-2 max pool then
/// pointwise conv) and `pool` (stride-2 max pool only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartAMode {
    Conv,
    Identity,
    PoolConv,
    Pool,
}

impl PartAMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PartAMode::Conv => "conv",
            PartAMode::Identity => "identity",
            PartAMode::PoolConv => "pool_conv",
            PartAMode::Pool => "pool",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "conv" => Ok(PartAMode::Conv),
            "identity" => Ok(PartAMode::Identity),
            "pool_conv" => Ok(PartAMode::PoolConv),
            "pool" => Ok(PartAMode::Pool),
            _ => Err(CoreError::invalid(format!("unknown part-A mode `{s}`"))),
        }
    }
}

/// Knobs of one split-and-shuffle block instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AlssConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Split fraction: `split = floor(alpha·C)` clamped to `[1, C−1]`.
    pub alpha: Ratio,
    /// Bottleneck fraction: `mid = floor(beta·(C−split))`, at least 1.
    pub beta: Ratio,
    /// Number of chained 3×3 depthwise convs in branch B.
    pub dw_repeats: usize,
    pub part_a_mode: PartAMode,
    pub stride: usize,
    pub shuffle_groups: usize,
    /// Kernel of the part-A max pool (pool / pool_conv modes).
    pub pool_kernel: usize,
    /// Kernel of the conv following the pool in pool_conv mode.
    pub pool_conv_kernel: usize,
    /// Activation of the part-A convs (the bottleneck's depthwise convs
    /// are always linear).
    pub part_a_act: Act,
}

impl AlssConfig {
    pub fn new(in_channels: usize, out_channels: usize, alpha: Ratio, beta: Ratio) -> Self {
        AlssConfig {
            in_channels,
            out_channels,
            alpha,
            beta,
            dw_repeats: 1,
            part_a_mode: PartAMode::Conv,
            stride: 1,
            shuffle_groups: 2,
            pool_kernel: 2,
            pool_conv_kernel: 1,
            part_a_act: Act::Silu,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_part_a(mut self, mode: PartAMode) -> Self {
        self.part_a_mode = mode;
        self
    }

    pub fn with_dw_repeats(mut self, n: usize) -> Self {
        self.dw_repeats = n;
        self
    }

    pub fn split_channels(&self) -> usize {
        self.alpha
            .floor_mul(self.in_channels)
            .clamp(1, self.in_channels.saturating_sub(1).max(1))
    }

    pub fn branch_b_in(&self) -> usize {
        self.in_channels - self.split_channels()
    }

    pub fn mid_channels(&self) -> usize {
        self.beta.floor_mul(self.branch_b_in()).max(1)
    }

    pub fn branch_b_out(&self) -> usize {
        self.out_channels.saturating_sub(self.split_channels())
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels < 2 {
            return Err(CoreError::invalid(
                "split block needs at least 2 input channels",
            ));
        }
        if !self.alpha.is_proper_fraction() || !self.beta.is_proper_fraction() {
            return Err(CoreError::invalid(
                "alpha and beta must lie strictly in (0, 1)",
            ));
        }
        if self.dw_repeats == 0 {
            return Err(CoreError::invalid("dw_repeats must be >= 1"));
        }
        if self.branch_b_out() == 0 {
            return Err(CoreError::invalid(format!(
                "branch B width {} - {} must stay positive",
                self.out_channels,
                self.split_channels()
            )));
        }
        match (self.stride, self.part_a_mode) {
            (1, PartAMode::Conv | PartAMode::Identity) => {}
            (2, PartAMode::Conv | PartAMode::PoolConv | PartAMode::Pool) => {}
            (1, m) => {
                return Err(CoreError::invalid(format!(
                    "part-A mode {} is not valid at stride 1",
                    m.as_str()
                )))
            }
            (2, m) => {
                return Err(CoreError::invalid(format!(
                    "part-A mode {} is not valid at stride 2",
                    m.as_str()
                )))
            }
            (s, _) => {
                return Err(CoreError::invalid(format!(
                    "stride must be 1 or 2, got {s}"
                )))
            }
        }
        if self.shuffle_groups == 0 || self.out_channels % self.shuffle_groups != 0 {
            return Err(CoreError::GroupMismatch {
                groups: self.shuffle_groups,
                channels: self.out_channels,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum PartA<S> {
    Conv(ConvBn<S>),
    Identity,
    Pool,
    PoolConv(ConvBn<S>),
}

/// Adaptive channel split-and-shuffle block.
///
/// Splits the input by `alpha`, routes the first part through part A and the
/// rest through a bottleneck (3×3 reduce to `mid`, `n` depthwise 3×3 convs
/// without activation, 3×3 expand to `out − split`), concatenates, and
/// applies a parameter-free channel shuffle. At stride 2 both branches halve
/// the spatial extent.
#[derive(Debug, Clone, PartialEq)]
pub struct AlssBlock<S> {
    pub cfg: AlssConfig,
    part_a: PartA<S>,
    reduce: ConvBn<S>,
    depthwise: Vec<ConvBn<S>>,
    expand: ConvBn<S>,
}

impl<S: Scalar> AlssBlock<S> {
    pub fn new(cfg: AlssConfig) -> Result<Self> {
        cfg.validate()?;
        let split = cfg.split_channels();
        let mid = cfg.mid_channels();
        let a_unit = |kernel: usize, stride: usize| -> Result<ConvBn<S>> {
            let mut unit = ConvBn::cbs(split, split, kernel, stride, kernel / 2)?;
            unit.act = cfg.part_a_act;
            Ok(unit)
        };
        let part_a = match (cfg.stride, cfg.part_a_mode) {
            (1, PartAMode::Conv) => PartA::Conv(a_unit(3, 1)?),
            (_, PartAMode::Conv) => PartA::Conv(a_unit(3, 2)?),
            (_, PartAMode::Identity) => PartA::Identity,
            (_, PartAMode::Pool) => PartA::Pool,
            (_, PartAMode::PoolConv) => PartA::PoolConv(a_unit(cfg.pool_conv_kernel, 1)?),
        };
        Ok(AlssBlock {
            reduce: ConvBn::cbs(cfg.branch_b_in(), mid, 3, cfg.stride, 1)?,
            depthwise: (0..cfg.dw_repeats)
                .map(|_| ConvBn::depthwise_cb(mid, 3, 1, 1))
                .collect::<Result<_>>()?,
            expand: ConvBn::cbs(mid, cfg.branch_b_out(), 3, 1, 1)?,
            part_a,
            cfg,
        })
    }

    pub fn forward(&self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        if x.channels() != self.cfg.in_channels {
            return Err(CoreError::shape(format!(
                "split block expects {} channels, got {}",
                self.cfg.in_channels,
                x.channels()
            )));
        }
        if self.cfg.stride == 2 && (x.height() % 2 != 0 || x.width() % 2 != 0) {
            return Err(CoreError::shape(format!(
                "downsampling block needs even spatial dims, got {}x{}",
                x.height(),
                x.width()
            )));
        }
        let (a_in, b_in) = ops::channel_split(x, self.cfg.split_channels())?;
        let a_out = match &self.part_a {
            PartA::Conv(cb) => cb.forward(&a_in)?,
            PartA::Identity => a_in,
            PartA::Pool => ops::max_pool2d(&a_in, self.cfg.pool_kernel, 2, 0)?,
            PartA::PoolConv(cb) => {
                cb.forward(&ops::max_pool2d(&a_in, self.cfg.pool_kernel, 2, 0)?)?
            }
        };
        let mut b = self.reduce.forward(&b_in)?;
        for dw in &self.depthwise {
            b = dw.forward(&b)?;
        }
        let b_out = self.expand.forward(&b)?;
        let merged = ops::channel_concat(&[&a_out, &b_out])?;
        ops::channel_shuffle(&merged, self.cfg.shuffle_groups)
    }

    pub fn out_channels(&self) -> usize {
        self.cfg.out_channels
    }

    pub fn output_shape(&self, c: usize, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        if c != self.cfg.in_channels {
            return Err(CoreError::shape(format!(
                "split block expects {} channels, got {c}",
                self.cfg.in_channels
            )));
        }
        if self.cfg.stride == 1 {
            return Ok((self.cfg.out_channels, h, w));
        }
        if h % 2 != 0 || w % 2 != 0 {
            return Err(CoreError::shape(
                "downsampling block needs even spatial dims",
            ));
        }
        Ok((self.cfg.out_channels, h / 2, w / 2))
    }

    pub fn fuse_bn(&self) -> Self {
        AlssBlock {
            cfg: self.cfg.clone(),
            part_a: match &self.part_a {
                PartA::Conv(cb) => PartA::Conv(cb.fuse_bn()),
                PartA::PoolConv(cb) => PartA::PoolConv(cb.fuse_bn()),
                other => other.clone(),
            },
            reduce: self.reduce.fuse_bn(),
            depthwise: self.depthwise.iter().map(ConvBn::fuse_bn).collect(),
            expand: self.expand.fuse_bn(),
        }
    }

    pub fn init_random<R: Rng>(&mut self, rng: &mut R) {
        match &mut self.part_a {
            PartA::Conv(cb) | PartA::PoolConv(cb) => cb.init_random(rng),
            _ => {}
        }
        self.reduce.init_random(rng);
        for dw in &mut self.depthwise {
            dw.init_random(rng);
        }
        self.expand.init_random(rng);
    }
}

impl<S: Scalar> ParamVisit<S> for AlssBlock<S> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, S>)) {
        match &self.part_a {
            PartA::Conv(cb) => cb.visit_params(&join(prefix, "a"), f),
            PartA::PoolConv(cb) => cb.visit_params(&join(prefix, "a.pw"), f),
            _ => {}
        }
        self.reduce.visit_params(&join(prefix, "b.reduce"), f);
        for (i, dw) in self.depthwise.iter().enumerate() {
            dw.visit_params(&join(prefix, &format!("b.dw{i}")), f);
        }
        self.expand.visit_params(&join(prefix, "b.expand"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, S>)) {
        match &mut self.part_a {
            PartA::Conv(cb) => cb.visit_params_mut(&join(prefix, "a"), f),
            PartA::PoolConv(cb) => cb.visit_params_mut(&join(prefix, "a.pw"), f),
            _ => {}
        }
        self.reduce.visit_params_mut(&join(prefix, "b.reduce"), f);
        for i in 0..self.depthwise.len() {
            self.depthwise[i].visit_params_mut(&join(prefix, &format!("b.dw{i}")), f);
        }
        self.expand.visit_params_mut(&join(prefix, "b.expand"), f);
    }
}

/// Knobs of the lightweight coordinate-attention block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LcaConfig {
    pub channels: usize,
    pub transform_groups: usize,
    pub use_norm: bool,
}

impl LcaConfig {
    pub fn new(channels: usize, transform_groups: usize) -> Self {
        LcaConfig {
            channels,
            transform_groups,
            use_norm: false,
        }
    }
}

/// Lightweight coordinate attention.
///
/// Pools to `(H,1)` and `(1,W)` descriptors (per-axis means), pushes each
/// through its own grouped pointwise transform and a sigmoid, and gates the
/// input with the broadcast product of the two directional weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LcaBlock<S> {
    pub cfg: LcaConfig,
    f_h: ConvBn<S>,
    f_w: ConvBn<S>,
}

impl<S: Scalar> LcaBlock<S> {
    pub fn new(cfg: LcaConfig) -> Result<Self> {
        if cfg.channels == 0
            || cfg.transform_groups == 0
            || cfg.channels % cfg.transform_groups != 0
        {
            return Err(CoreError::GroupMismatch {
                groups: cfg.transform_groups,
                channels: cfg.channels,
            });
        }
        let make = || -> Result<ConvBn<S>> {
            if cfg.use_norm {
                let conv =
                    ConvParams::new(cfg.channels, cfg.channels, 1, 1, 0, cfg.transform_groups)?;
                Ok(ConvBn {
                    conv,
                    bn: Some(BnParams::identity(cfg.channels)),
                    act: Act::Linear,
                })
            } else {
                let mut unit = ConvBn::grouped_pointwise(cfg.channels, cfg.transform_groups)?;
                unit.act = Act::Linear;
                Ok(unit)
            }
        };
        Ok(LcaBlock {
            cfg,
            f_h: make()?,
            f_w: make()?,
        })
    }

    /// The per-direction transforms (height first), e.g. for comparing
    /// against an external reimplementation.
    pub fn transforms(&self) -> (&ConvBn<S>, &ConvBn<S>) {
        (&self.f_h, &self.f_w)
    }

    /// Directional gates, before broadcasting: `(g_h, g_w)` of shapes
    /// `(n,c,h,1)` and `(n,c,1,w)`, each strictly inside (0,1).
    pub fn gates(&self, x: &Tensor4<S>) -> Result<(Tensor4<S>, Tensor4<S>)> {
        let z_h = ops::adaptive_avg_pool(x, x.height(), 1)?;
        let z_w = ops::adaptive_avg_pool(x, 1, x.width())?;
        Ok((
            ops::sigmoid(&self.f_h.forward(&z_h)?),
            ops::sigmoid(&self.f_w.forward(&z_w)?),
        ))
    }

    pub fn forward(&self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        if x.channels() != self.cfg.channels {
            return Err(CoreError::shape(format!(
                "attention block expects {} channels, got {}",
                self.cfg.channels,
                x.channels()
            )));
        }
        let (g_h, g_w) = self.gates(x)?;
        Ok(apply_gates(x, &g_h, &g_w))
    }

    pub fn output_shape(&self, c: usize, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        if c != self.cfg.channels {
            return Err(CoreError::shape(format!(
                "attention block expects {} channels, got {c}",
                self.cfg.channels
            )));
        }
        Ok((c, h, w))
    }

    pub fn fuse_bn(&self) -> Self {
        LcaBlock {
            cfg: self.cfg,
            f_h: self.f_h.fuse_bn(),
            f_w: self.f_w.fuse_bn(),
        }
    }

    pub fn init_random<R: Rng>(&mut self, rng: &mut R) {
        self.f_h.init_random(rng);
        self.f_w.init_random(rng);
    }
}

impl<S: Scalar> ParamVisit<S> for LcaBlock<S> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, S>)) {
        self.f_h.visit_params(&join(prefix, "fh"), f);
        self.f_w.visit_params(&join(prefix, "fw"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, S>)) {
        self.f_h.visit_params_mut(&join(prefix, "fh"), f);
        self.f_w.visit_params_mut(&join(prefix, "fw"), f);
    }
}

/// `y[b,c,i,j] = x[b,c,i,j] · g_h[b,c,i,0] · g_w[b,c,0,j]`
fn apply_gates<S: Scalar>(x: &Tensor4<S>, g_h: &Tensor4<S>, g_w: &Tensor4<S>) -> Tensor4<S> {
    let (n, c, h, w) = x.dims();
    let mut out = x.clone();
    for b in 0..n {
        for ch in 0..c {
            for i in 0..h {
                let gh = g_h.get(b, ch, i, 0).as_f64();
                for j in 0..w {
                    let v = x.get(b, ch, i, j).as_f64() * gh * g_w.get(b, ch, 0, j).as_f64();
                    out.set(b, ch, i, j, S::from_f64(v));
                }
            }
        }
    }
    out
}

/// Full-width coordinate-attention baseline: concatenated pooled
/// descriptors, a shared reduction transform, split, per-direction
/// expansion convs and sigmoid gates.
#[derive(Debug, Clone, PartialEq)]
pub struct CaBlock<S> {
    pub channels: usize,
    pub mid: usize,
    reduce: ConvBn<S>,
    expand_h: ConvParams<S>,
    expand_w: ConvParams<S>,
}

impl<S: Scalar> CaBlock<S> {
    /// `mid = max(8, channels/reduction)` unless overridden.
    pub fn new(channels: usize, reduction: usize, mid_override: Option<usize>) -> Result<Self> {
        if channels == 0 || reduction == 0 {
            return Err(CoreError::invalid("channels and reduction must be >= 1"));
        }
        let mid = mid_override.unwrap_or((channels / reduction).max(8));
        if mid == 0 {
            return Err(CoreError::invalid("reduction produced zero mid channels"));
        }
        Ok(CaBlock {
            channels,
            mid,
            reduce: ConvBn::cbs(channels, mid, 1, 1, 0)?,
            expand_h: ConvParams::new(mid, channels, 1, 1, 0, 1)?
                .with_bias(vec![S::zero(); channels])?,
            expand_w: ConvParams::new(mid, channels, 1, 1, 0, 1)?
                .with_bias(vec![S::zero(); channels])?,
        })
    }

    pub fn forward(&self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        if x.channels() != self.channels {
            return Err(CoreError::shape(format!(
                "attention block expects {} channels, got {}",
                self.channels,
                x.channels()
            )));
        }
        let (n, c, h, w) = x.dims();
        let z_h = ops::adaptive_avg_pool(x, h, 1)?;
        let z_w = ops::adaptive_avg_pool(x, 1, w)?;
        // stack the (h,1) and transposed (w,1) descriptors along height
        let mut stacked = Tensor4::zeros(n, c, h + w, 1);
        for b in 0..n {
            for ch in 0..c {
                for i in 0..h {
                    stacked.set(b, ch, i, 0, z_h.get(b, ch, i, 0));
                }
                for j in 0..w {
                    stacked.set(b, ch, h + j, 0, z_w.get(b, ch, 0, j));
                }
            }
        }
        let mixed = self.reduce.forward(&stacked)?;
        let mut part_h = Tensor4::zeros(n, self.mid, h, 1);
        let mut part_w = Tensor4::zeros(n, self.mid, 1, w);
        for b in 0..n {
            for ch in 0..self.mid {
                for i in 0..h {
                    part_h.set(b, ch, i, 0, mixed.get(b, ch, i, 0));
                }
                for j in 0..w {
                    part_w.set(b, ch, 0, j, mixed.get(b, ch, h + j, 0));
                }
            }
        }
        let g_h = ops::sigmoid(&ops::conv2d(&part_h, &self.expand_h)?);
        let g_w = ops::sigmoid(&ops::conv2d(&part_w, &self.expand_w)?);
        Ok(apply_gates(x, &g_h, &g_w))
    }

    pub fn init_random<R: Rng>(&mut self, rng: &mut R) {
        self.reduce.init_random(rng);
        self.expand_h.init_random(rng);
        self.expand_w.init_random(rng);
    }
}

impl<S: Scalar> ParamVisit<S> for CaBlock<S> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, S>)) {
        self.reduce.visit_params(&join(prefix, "reduce"), f);
        for (leaf, conv) in [("gh", &self.expand_h), ("gw", &self.expand_w)] {
            f(
                join(prefix, &format!("{leaf}.weight")),
                ParamRef {
                    data: &conv.weights,
                    counted: true,
                },
            );
            if let Some(b) = &conv.bias {
                f(
                    join(prefix, &format!("{leaf}.bias")),
                    ParamRef {
                        data: b,
                        counted: true,
                    },
                );
            }
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, S>)) {
        self.reduce.visit_params_mut(&join(prefix, "reduce"), f);
        for (leaf, conv) in [("gh", &mut self.expand_h), ("gw", &mut self.expand_w)] {
            f(
                join(prefix, &format!("{leaf}.weight")),
                ParamRefMut {
                    data: &mut conv.weights,
                    counted: true,
                },
            );
            if let Some(b) = &mut conv.bias {
                f(
                    join(prefix, &format!("{leaf}.bias")),
                    ParamRefMut {
                        data: b,
                        counted: true,
                    },
                );
            }
        }
    }
}

/// Slice a single-channel map into its four parity sub-images, stacked as
/// channels in (even/even, even/odd, odd/even, odd/odd) order.
pub fn focus_slice<S: Scalar>(x: &Tensor4<S>) -> Result<Tensor4<S>> {
    if x.channels() != 1 {
        return Err(CoreError::shape(format!(
            "focus expects a single channel, got {}",
            x.channels()
        )));
    }
    if x.height() % 2 != 0 || x.width() % 2 != 0 {
        return Err(CoreError::shape(format!(
            "focus needs even spatial dims, got {}x{}",
            x.height(),
            x.width()
        )));
    }
    let (n, _, h, w) = x.dims();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros(n, 4, oh, ow);
    for b in 0..n {
        for (ch, (ry, rx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
            for i in 0..oh {
                for j in 0..ow {
                    out.set(b, ch, i, j, x.get(b, 0, 2 * i + ry, 2 * j + rx));
                }
            }
        }
    }
    Ok(out)
}

/// Single-channel focus: parity slicing to 4 channels at half resolution,
/// then a wide CBS (kernel 6, stride 2, padding 2).
#[derive(Debug, Clone, PartialEq)]
pub struct FocusBlock<S> {
    pub cbs: ConvBn<S>,
}

impl<S: Scalar> FocusBlock<S> {
    pub fn new(out_channels: usize) -> Result<Self> {
        Ok(FocusBlock {
            cbs: ConvBn::cbs(4, out_channels, 6, 2, 2)?,
        })
    }

    pub fn forward(&self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        self.cbs.forward(&focus_slice(x)?)
    }

    pub fn output_shape(&self, c: usize, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        if c != 1 {
            return Err(CoreError::shape("focus expects a single channel"));
        }
        if h % 2 != 0 || w % 2 != 0 {
            return Err(CoreError::shape("focus needs even spatial dims"));
        }
        self.cbs.output_shape(4, h / 2, w / 2)
    }

    pub fn fuse_bn(&self) -> Self {
        FocusBlock {
            cbs: self.cbs.fuse_bn(),
        }
    }

    pub fn init_random<R: Rng>(&mut self, rng: &mut R) {
        self.cbs.init_random(rng);
    }
}

impl<S: Scalar> ParamVisit<S> for FocusBlock<S> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, S>)) {
        self.cbs.visit_params(&join(prefix, "cbs"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, S>)) {
        self.cbs.visit_params_mut(&join(prefix, "cbs"), f);
    }
}

/// Spatial pyramid pooling (fast): pointwise reduce to half width, three
/// chained 5×5 stride-1 max pools, concat all four stages, pointwise expand.
#[derive(Debug, Clone, PartialEq)]
pub struct SppfBlock<S> {
    pub cv1: ConvBn<S>,
    pub cv2: ConvBn<S>,
    pub pool_kernel: usize,
}

impl<S: Scalar> SppfBlock<S> {
    pub fn new(in_channels: usize, out_channels: usize) -> Result<Self> {
        let hidden = (in_channels / 2).max(1);
        Ok(SppfBlock {
            cv1: ConvBn::cbs(in_channels, hidden, 1, 1, 0)?,
            cv2: ConvBn::cbs(hidden * 4, out_channels, 1, 1, 0)?,
            pool_kernel: 5,
        })
    }

    pub fn forward(&self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        let y0 = self.cv1.forward(x)?;
        let pad = self.pool_kernel / 2;
        let p1 = ops::max_pool2d(&y0, self.pool_kernel, 1, pad)?;
        let p2 = ops::max_pool2d(&p1, self.pool_kernel, 1, pad)?;
        let p3 = ops::max_pool2d(&p2, self.pool_kernel, 1, pad)?;
        self.cv2
            .forward(&ops::channel_concat(&[&y0, &p1, &p2, &p3])?)
    }

    pub fn output_shape(&self, c: usize, h: usize, w: usize) -> Result<(usize, usize, usize)> {
        if c != self.cv1.conv.in_channels {
            return Err(CoreError::shape(format!(
                "sppf expects {} channels, got {c}",
                self.cv1.conv.in_channels
            )));
        }
        Ok((self.cv2.out_channels(), h, w))
    }

    pub fn fuse_bn(&self) -> Self {
        SppfBlock {
            cv1: self.cv1.fuse_bn(),
            cv2: self.cv2.fuse_bn(),
            pool_kernel: self.pool_kernel,
        }
    }

    pub fn init_random<R: Rng>(&mut self, rng: &mut R) {
        self.cv1.init_random(rng);
        self.cv2.init_random(rng);
    }
}

impl<S: Scalar> ParamVisit<S> for SppfBlock<S> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, S>)) {
        self.cv1.visit_params(&join(prefix, "cv1"), f);
        self.cv2.visit_params(&join(prefix, "cv2"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, S>)) {
        self.cv1.visit_params_mut(&join(prefix, "cv1"), f);
        self.cv2.visit_params_mut(&join(prefix, "cv2"), f);
    }
}
