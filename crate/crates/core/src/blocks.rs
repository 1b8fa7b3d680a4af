//! Composite layers: ConvBNAct, Bottleneck, C2f, SPPF, PConv, FasterNet
//! Block and Faster-C2f.
//!
//! A block is described twice. [`BlockParams`] lists its primitive layers
//! ([`LayerSpec`]), which fixes tensor names, shapes, parameter counts and
//! per-layer cost. [`Block`] is the same block with weights bound, ready to
//! run forward.

use std::fmt;

use crate::error::{Error, Result};
use crate::kernels::{self, Activation, BatchNorm, BN_EPS};
use crate::tensor::Tensor;
use crate::weights::{TensorRole, TensorSpec, WeightStore};

/// Fraction of channels a PConv convolves, `c_p / c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Ratio {
    pub num: usize,
    pub den: usize,
}

impl Ratio {
    pub const QUARTER: Ratio = Ratio { num: 1, den: 4 };
    pub const ONE: Ratio = Ratio { num: 1, den: 1 };

    pub fn new(num: usize, den: usize) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::config(format!("partial ratio {num}/{den} outside (0, 1]")));
        }
        Ok(Ratio { num, den })
    }

    /// `c · ratio`, erroring when it is not a whole channel count.
    pub fn of(self, c: usize) -> Result<usize> {
        if !(c * self.num).is_multiple_of(self.den) {
            return Err(Error::config(format!(
                "{c} channels times ratio {}/{} is not an integer",
                self.num, self.den
            )));
        }
        Ok(c * self.num / self.den)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    ConvBnAct,
    /// Residual bottleneck used inside backbone C2f.
    Bottleneck1,
    /// Plain bottleneck used inside neck C2f.
    Bottleneck2,
    C2f,
    FasterC2f,
    FasterNetBlock,
    Sppf,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::ConvBnAct => "Conv",
            BlockKind::Bottleneck1 => "Bottleneck1",
            BlockKind::Bottleneck2 => "Bottleneck2",
            BlockKind::C2f => "C2f",
            BlockKind::FasterC2f => "FasterC2f",
            BlockKind::FasterNetBlock => "FasterNetBlock",
            BlockKind::Sppf => "SPPF",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BottleneckVariant {
    Backbone,
    Neck,
}

/// Shape-level description of a block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockParams {
    pub kind: BlockKind,
    pub c_in: usize,
    pub c_out: usize,
    /// Repeat count of the inner unit (C2f family).
    pub n: usize,
    pub k: usize,
    pub stride: usize,
    /// C2f only: whether the inner bottlenecks carry a shortcut.
    pub shortcut: bool,
    pub partial_ratio: Ratio,
    /// Width multiplier of the FasterNet middle PWConv.
    pub expansion: usize,
}

pub const DEFAULT_EXPANSION: usize = 2;
pub const SPPF_POOL: usize = 5;

impl BlockParams {
    fn base(kind: BlockKind, c_in: usize, c_out: usize) -> Self {
        BlockParams {
            kind,
            c_in,
            c_out,
            n: 0,
            k: 1,
            stride: 1,
            shortcut: false,
            partial_ratio: Ratio::QUARTER,
            expansion: DEFAULT_EXPANSION,
        }
    }

    pub fn conv(c_in: usize, c_out: usize, k: usize, stride: usize) -> Self {
        BlockParams {
            k,
            stride,
            ..Self::base(BlockKind::ConvBnAct, c_in, c_out)
        }
    }

    pub fn bottleneck(c_in: usize, c_out: usize, variant: BottleneckVariant) -> Self {
        let kind = match variant {
            BottleneckVariant::Backbone => BlockKind::Bottleneck1,
            BottleneckVariant::Neck => BlockKind::Bottleneck2,
        };
        BlockParams {
            k: 3,
            shortcut: variant == BottleneckVariant::Backbone,
            ..Self::base(kind, c_in, c_out)
        }
    }

    pub fn c2f(c_in: usize, c_out: usize, n: usize, shortcut: bool) -> Self {
        BlockParams {
            n,
            shortcut,
            ..Self::base(BlockKind::C2f, c_in, c_out)
        }
    }

    pub fn faster_c2f(c_in: usize, c_out: usize, n: usize) -> Self {
        BlockParams {
            n,
            ..Self::base(BlockKind::FasterC2f, c_in, c_out)
        }
    }

    pub fn fasternet(c: usize) -> Self {
        BlockParams {
            k: 3,
            shortcut: true,
            ..Self::base(BlockKind::FasterNetBlock, c, c)
        }
    }

    pub fn sppf(c_in: usize, c_out: usize) -> Self {
        BlockParams {
            k: SPPF_POOL,
            ..Self::base(BlockKind::Sppf, c_in, c_out)
        }
    }

    /// Hidden width of the C2f family (`c_out / 2`).
    pub fn hidden(&self) -> usize {
        self.c_out / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_out == 0 {
            return Err(Error::config(format!("{}: zero channel count", self.kind.name())));
        }
        if self.stride == 0 {
            return Err(Error::config(format!("{}: stride must be at least 1", self.kind.name())));
        }
        Ratio::new(self.partial_ratio.num, self.partial_ratio.den)?;
        match self.kind {
            BlockKind::Bottleneck1 if self.c_in != self.c_out => Err(Error::config(format!(
                "residual bottleneck needs c_in == c_out, got {} -> {}",
                self.c_in, self.c_out
            ))),
            BlockKind::C2f | BlockKind::FasterC2f if !self.c_out.is_multiple_of(2) => Err(Error::config(format!(
                "{} output width {} is odd",
                self.kind.name(),
                self.c_out
            ))),
            BlockKind::FasterC2f => self.partial_ratio.of(self.hidden()).map(drop),
            BlockKind::FasterNetBlock => {
                if self.c_in != self.c_out {
                    return Err(Error::config("FasterNet block needs c_in == c_out"));
                }
                self.partial_ratio.of(self.c_in).map(drop)
            }
            BlockKind::Sppf if !self.c_in.is_multiple_of(2) => {
                Err(Error::config(format!("SPPF input width {} is odd", self.c_in)))
            }
            _ => Ok(()),
        }
    }

    /// Primitive layers in execution order, named relative to the block.
    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        self.validate()?;
        let mut out = Vec::new();
        match self.kind {
            BlockKind::ConvBnAct => {
                out.push(LayerSpec::conv_bn("", self.c_in, self.c_out, self.k, self.stride, Activation::Silu))
            }
            BlockKind::Bottleneck1 | BlockKind::Bottleneck2 => bottleneck_layers("", self.c_in, self.c_out, &mut out),
            BlockKind::FasterNetBlock => {
                fasternet_layers("", self.c_in, self.partial_ratio, self.expansion, &mut out)?
            }
            BlockKind::C2f | BlockKind::FasterC2f => {
                let ch = self.hidden();
                out.push(LayerSpec::conv_bn("cv1", self.c_in, 2 * ch, 1, 1, Activation::Silu));
                for j in 0..self.n {
                    let prefix = format!("m.{j}");
                    if self.kind == BlockKind::C2f {
                        bottleneck_layers(&prefix, ch, ch, &mut out);
                    } else {
                        fasternet_layers(&prefix, ch, self.partial_ratio, self.expansion, &mut out)?;
                    }
                }
                out.push(LayerSpec::conv_bn("cv2", (2 + self.n) * ch, self.c_out, 1, 1, Activation::Silu));
            }
            BlockKind::Sppf => {
                let ch = self.c_in / 2;
                out.push(LayerSpec::conv_bn("cv1", self.c_in, ch, 1, 1, Activation::Silu));
                out.push(LayerSpec::conv_bn("cv2", 4 * ch, self.c_out, 1, 1, Activation::Silu));
            }
        }
        Ok(out)
    }

    /// Output spatial size for an `h × w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        if self.kind == BlockKind::ConvBnAct {
            let p = self.k / 2;
            (
                (h + 2 * p - self.k) / self.stride + 1,
                (w + 2 * p - self.k) / self.stride + 1,
            )
        } else {
            (h, w)
        }
    }

    pub fn param_count(&self) -> Result<u64> {
        Ok(self.layers()?.iter().map(LayerSpec::params).sum())
    }

    pub fn tensor_specs(&self, prefix: &str) -> Result<Vec<TensorSpec>> {
        Ok(self
            .layers()?
            .iter()
            .flat_map(|l| l.tensor_specs(prefix))
            .collect())
    }

    /// Binds weights from `store` under `prefix`.
    pub fn bind(&self, store: &WeightStore, prefix: &str) -> Result<Block> {
        self.validate()?;
        let block = match self.kind {
            BlockKind::ConvBnAct => Block::Conv(ConvBnAct::bind(
                store,
                prefix,
                [self.c_out, self.c_in, self.k, self.k],
                self.stride,
                Activation::Silu,
            )?),
            BlockKind::Bottleneck1 | BlockKind::Bottleneck2 => {
                Block::Bottleneck(Bottleneck::bind(store, prefix, self.c_in, self.c_out, self.shortcut)?)
            }
            BlockKind::FasterNetBlock => Block::FasterNet(FasterNetBlock::bind(
                store,
                prefix,
                self.c_in,
                self.partial_ratio,
                self.expansion,
            )?),
            BlockKind::C2f | BlockKind::FasterC2f => Block::C2f(C2f::bind(store, prefix, self)?),
            BlockKind::Sppf => Block::Sppf(Sppf::bind(store, prefix, self.c_in, self.c_out)?),
        };
        Ok(block)
    }
}

fn bottleneck_layers(prefix: &str, c_in: usize, c_out: usize, out: &mut Vec<LayerSpec>) {
    out.push(LayerSpec::conv_bn(&join(prefix, "cv1"), c_in, c_out, 3, 1, Activation::Silu));
    out.push(LayerSpec::conv_bn(&join(prefix, "cv2"), c_out, c_out, 3, 1, Activation::Silu));
}

fn fasternet_layers(
    prefix: &str,
    c: usize,
    ratio: Ratio,
    expansion: usize,
    out: &mut Vec<LayerSpec>,
) -> Result<()> {
    let c_p = ratio.of(c)?;
    out.push(LayerSpec {
        name: join(prefix, "pconv"),
        kind: LayerKind::PConv { c, c_p, k: 3 },
    });
    out.push(LayerSpec::conv_bn(&join(prefix, "pw1"), c, expansion * c, 1, 1, Activation::Gelu));
    out.push(LayerSpec {
        name: join(prefix, "pw2"),
        kind: LayerKind::Conv {
            c_in: expansion * c,
            c_out: c,
            k: 1,
            stride: 1,
            bias: true,
            bn: None,
        },
    });
    Ok(())
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    match (prefix.is_empty(), name.is_empty()) {
        (true, _) => name.to_string(),
        (_, true) => prefix.to_string(),
        _ => format!("{prefix}.{name}"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    /// Dense convolution, optionally followed by BN and an activation.
    Conv {
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        bias: bool,
        bn: Option<Activation>,
    },
    /// k×k convolution over the first `c_p` of `c` channels.
    PConv { c: usize, c_p: usize, k: usize },
}

/// One primitive layer: names, shapes and costs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn conv_bn(name: &str, c_in: usize, c_out: usize, k: usize, stride: usize, act: Activation) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Conv {
                c_in,
                c_out,
                k,
                stride,
                bias: false,
                bn: Some(act),
            },
        }
    }

    pub fn conv_bias(name: &str, c_in: usize, c_out: usize, k: usize) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Conv {
                c_in,
                c_out,
                k,
                stride: 1,
                bias: true,
                bn: None,
            },
        }
    }

    /// Learnable parameters: conv weights, biases, BN γ and β.
    pub fn params(&self) -> u64 {
        match self.kind {
            LayerKind::Conv {
                c_in,
                c_out,
                k,
                bias,
                bn,
                ..
            } => {
                let (ci, co, k) = (c_in as u64, c_out as u64, k as u64);
                ci * co * k * k + if bias { co } else { 0 } + if bn.is_some() { 2 * co } else { 0 }
            }
            LayerKind::PConv { c_p, k, .. } => (c_p * c_p * k * k) as u64,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        match self.kind {
            LayerKind::Conv { k, stride, .. } => {
                let p = k / 2;
                ((h + 2 * p - k) / stride + 1, (w + 2 * p - k) / stride + 1)
            }
            LayerKind::PConv { .. } => (h, w),
        }
    }

    /// Multiply-accumulates for an `h × w` input.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (oh, ow) = self.output_hw(h, w);
        let hw = (oh * ow) as u64;
        match self.kind {
            LayerKind::Conv { c_in, c_out, k, .. } => hw * (k * k * c_in * c_out) as u64,
            LayerKind::PConv { c_p, k, .. } => hw * (k * k * c_p * c_p) as u64,
        }
    }

    /// Values read and written: input and output feature maps plus weights.
    /// For PConv this is `h·w·2c_p + k²·c_p²`; the untouched channels are
    /// not moved.
    pub fn mem_access(&self, h: usize, w: usize) -> u64 {
        let (oh, ow) = self.output_hw(h, w);
        match self.kind {
            LayerKind::Conv { c_in, c_out, k, .. } => {
                (h * w * c_in + oh * ow * c_out + k * k * c_in * c_out) as u64
            }
            LayerKind::PConv { c_p, k, .. } => (h * w * 2 * c_p + k * k * c_p * c_p) as u64,
        }
    }

    pub fn tensor_specs(&self, prefix: &str) -> Vec<TensorSpec> {
        let base = join(prefix, &self.name);
        let mut out = Vec::new();
        match self.kind {
            LayerKind::Conv {
                c_in,
                c_out,
                k,
                bias,
                bn,
                ..
            } => {
                let fan_in = c_in * k * k;
                let weight_name = if bn.is_some() {
                    join(&base, "conv.weight")
                } else {
                    join(&base, "weight")
                };
                out.push(TensorSpec {
                    name: weight_name,
                    dims: vec![c_out, c_in, k, k],
                    role: TensorRole::ConvWeight { fan_in },
                });
                if bias {
                    out.push(TensorSpec {
                        name: join(&base, "bias"),
                        dims: vec![c_out],
                        role: TensorRole::Bias,
                    });
                }
                if bn.is_some() {
                    for (suffix, role) in BN_TENSORS {
                        out.push(TensorSpec {
                            name: join(&base, suffix),
                            dims: vec![c_out],
                            role,
                        });
                    }
                }
            }
            LayerKind::PConv { c_p, k, .. } => out.push(TensorSpec {
                name: join(&base, "weight"),
                dims: vec![c_p, c_p, k, k],
                role: TensorRole::ConvWeight { fan_in: c_p * k * k },
            }),
        }
        out
    }
}

const BN_TENSORS: [(&str, TensorRole); 4] = [
    ("bn.gamma", TensorRole::BnGamma),
    ("bn.beta", TensorRole::BnBeta),
    ("bn.running_mean", TensorRole::BnMean),
    ("bn.running_var", TensorRole::BnVar),
];

pub(crate) fn bind_bn(store: &WeightStore, base: &str, c: usize) -> Result<BatchNorm> {
    Ok(BatchNorm {
        gamma: store.vector(&join(base, "bn.gamma"), c)?,
        beta: store.vector(&join(base, "bn.beta"), c)?,
        running_mean: store.vector(&join(base, "bn.running_mean"), c)?,
        running_var: store.vector(&join(base, "bn.running_var"), c)?,
        eps: BN_EPS,
    })
}

/// Conv (no bias) → BN → activation, padding `k / 2`.
#[derive(Clone, Debug)]
pub struct ConvBnAct {
    pub weight: Tensor,
    pub bn: BatchNorm,
    pub stride: usize,
    pub act: Activation,
}

impl ConvBnAct {
    pub fn bind(
        store: &WeightStore,
        base: &str,
        shape: [usize; 4],
        stride: usize,
        act: Activation,
    ) -> Result<Self> {
        Ok(ConvBnAct {
            weight: store.tensor(&join(base, "conv.weight"), shape)?,
            bn: bind_bn(store, base, shape[0])?,
            stride,
            act,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv_bn_act(x, &self.weight, &self.bn, self.stride, self.act)
    }
}

pub fn conv_bn_act(
    x: &Tensor,
    weight: &Tensor,
    bn: &BatchNorm,
    stride: usize,
    act: Activation,
) -> Result<Tensor> {
    let k = weight.w();
    let mut y = kernels::batch_norm(&kernels::conv2d(x, weight, None, stride, k / 2)?, bn)?;
    kernels::activation_inplace(&mut y, act);
    Ok(y)
}

/// 3×3 stride-1 convolution over channels `[0, c_p)`; the rest pass through.
pub fn pconv(x: &Tensor, weight: &Tensor, c_p: usize) -> Result<Tensor> {
    let c = x.c();
    if c_p > c {
        return Err(Error::shape(format!("pconv: c_p = {c_p} exceeds {c} channels")));
    }
    if weight.n() != c_p || weight.c() != c_p {
        return Err(Error::shape(format!(
            "pconv: weight {:?} does not match c_p = {c_p}",
            weight.shape()
        )));
    }
    if c_p == c {
        return kernels::conv2d(x, weight, None, 1, weight.w() / 2);
    }
    let parts = kernels::split_channels(x, &[c_p, c - c_p])?;
    let head = kernels::conv2d(&parts[0], weight, None, 1, weight.w() / 2)?;
    kernels::concat_channels(&[&head, &parts[1]])
}

#[derive(Clone, Debug)]
pub struct Bottleneck {
    pub cv1: ConvBnAct,
    pub cv2: ConvBnAct,
    pub shortcut: bool,
}

impl Bottleneck {
    fn bind(store: &WeightStore, base: &str, c_in: usize, c_out: usize, shortcut: bool) -> Result<Self> {
        if shortcut && c_in != c_out {
            return Err(Error::config("bottleneck shortcut needs c_in == c_out"));
        }
        Ok(Bottleneck {
            cv1: ConvBnAct::bind(store, &join(base, "cv1"), [c_out, c_in, 3, 3], 1, Activation::Silu)?,
            cv2: ConvBnAct::bind(store, &join(base, "cv2"), [c_out, c_out, 3, 3], 1, Activation::Silu)?,
            shortcut,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.cv2.forward(&self.cv1.forward(x)?)?;
        if self.shortcut {
            kernels::add(x, &y)
        } else {
            Ok(y)
        }
    }
}

/// PConv → PW1 → BN → GELU → PW2 (+bias), plus the block input.
#[derive(Clone, Debug)]
pub struct FasterNetBlock {
    pub pconv: Tensor,
    pub c_p: usize,
    pub pw1: ConvBnAct,
    pub pw2: Tensor,
    pub pw2_bias: Vec<f32>,
}

impl FasterNetBlock {
    fn bind(store: &WeightStore, base: &str, c: usize, ratio: Ratio, expansion: usize) -> Result<Self> {
        let c_p = ratio.of(c)?;
        let mid = expansion * c;
        Ok(FasterNetBlock {
            pconv: store.tensor(&join(base, "pconv.weight"), [c_p, c_p, 3, 3])?,
            c_p,
            pw1: ConvBnAct::bind(store, &join(base, "pw1"), [mid, c, 1, 1], 1, Activation::Gelu)?,
            pw2: store.tensor(&join(base, "pw2.weight"), [c, mid, 1, 1])?,
            pw2_bias: store.vector(&join(base, "pw2.bias"), c)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let spatial = pconv(x, &self.pconv, self.c_p)?;
        let mixed = self.pw1.forward(&spatial)?;
        let projected = kernels::conv2d(&mixed, &self.pw2, Some(&self.pw2_bias), 1, 0)?;
        kernels::add(x, &projected)
    }
}

#[derive(Clone, Debug)]
pub enum C2fUnit {
    Bottleneck(Bottleneck),
    FasterNet(FasterNetBlock),
}

impl C2fUnit {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            C2fUnit::Bottleneck(b) => b.forward(x),
            C2fUnit::FasterNet(f) => f.forward(x),
        }
    }
}

/// C2f and Faster-C2f share this topology; only the unit type differs.
#[derive(Clone, Debug)]
pub struct C2f {
    pub cv1: ConvBnAct,
    pub cv2: ConvBnAct,
    pub units: Vec<C2fUnit>,
    pub hidden: usize,
}

impl C2f {
    fn bind(store: &WeightStore, base: &str, p: &BlockParams) -> Result<Self> {
        let ch = p.hidden();
        let mut units = Vec::with_capacity(p.n);
        for j in 0..p.n {
            let prefix = join(base, &format!("m.{j}"));
            units.push(match p.kind {
                BlockKind::C2f => C2fUnit::Bottleneck(Bottleneck::bind(store, &prefix, ch, ch, p.shortcut)?),
                _ => C2fUnit::FasterNet(FasterNetBlock::bind(
                    store,
                    &prefix,
                    ch,
                    p.partial_ratio,
                    p.expansion,
                )?),
            });
        }
        Ok(C2f {
            cv1: ConvBnAct::bind(store, &join(base, "cv1"), [2 * ch, p.c_in, 1, 1], 1, Activation::Silu)?,
            cv2: ConvBnAct::bind(
                store,
                &join(base, "cv2"),
                [p.c_out, (2 + p.n) * ch, 1, 1],
                1,
                Activation::Silu,
            )?,
            units,
            hidden: ch,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut parts = kernels::split_channels(&self.cv1.forward(x)?, &[self.hidden, self.hidden])?;
        for unit in &self.units {
            let next = unit.forward(parts.last().expect("two halves"))?;
            parts.push(next);
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        self.cv2.forward(&kernels::concat_channels(&refs)?)
    }
}

#[derive(Clone, Debug)]
pub struct Sppf {
    pub cv1: ConvBnAct,
    pub cv2: ConvBnAct,
}

impl Sppf {
    fn bind(store: &WeightStore, base: &str, c_in: usize, c_out: usize) -> Result<Self> {
        let ch = c_in / 2;
        Ok(Sppf {
            cv1: ConvBnAct::bind(store, &join(base, "cv1"), [ch, c_in, 1, 1], 1, Activation::Silu)?,
            cv2: ConvBnAct::bind(store, &join(base, "cv2"), [c_out, 4 * ch, 1, 1], 1, Activation::Silu)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let p = SPPF_POOL / 2;
        let y0 = self.cv1.forward(x)?;
        let y1 = kernels::max_pool2d(&y0, SPPF_POOL, 1, p)?;
        let y2 = kernels::max_pool2d(&y1, SPPF_POOL, 1, p)?;
        let y3 = kernels::max_pool2d(&y2, SPPF_POOL, 1, p)?;
        self.cv2.forward(&kernels::concat_channels(&[&y0, &y1, &y2, &y3])?)
    }
}

/// A block with weights bound.
#[derive(Clone, Debug)]
pub enum Block {
    Conv(ConvBnAct),
    Bottleneck(Bottleneck),
    FasterNet(FasterNetBlock),
    C2f(C2f),
    Sppf(Sppf),
}

impl Block {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Block::Conv(b) => b.forward(x),
            Block::Bottleneck(b) => b.forward(x),
            Block::FasterNet(b) => b.forward(x),
            Block::C2f(b) => b.forward(x),
            Block::Sppf(b) => b.forward(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{batch_norm, concat_channels, conv2d, gelu, max_pool2d, split_channels};
    use crate::weights::WeightTensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
    }

    /// Fills every tensor a block needs with random values; BN variances
    /// stay positive.
    fn random_store(p: &BlockParams, prefix: &str, seed: u64) -> WeightStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = WeightStore::new();
        for spec in p.tensor_specs(prefix).unwrap() {
            let data = (0..spec.numel())
                .map(|_| match spec.role {
                    TensorRole::BnVar => rng.random_range(0.5..1.5),
                    TensorRole::BnGamma => rng.random_range(0.5..1.5),
                    _ => rng.random_range(-0.5..0.5),
                })
                .collect();
            store.insert(spec.name, WeightTensor::new(spec.dims, data).unwrap());
        }
        store
    }

    fn zero_store(p: &BlockParams, prefix: &str) -> WeightStore {
        let mut store = WeightStore::new();
        for spec in p.tensor_specs(prefix).unwrap() {
            let fill = if spec.role == TensorRole::BnVar { 1.0 } else { 0.0 };
            store.insert(spec.name.clone(), WeightTensor::new(spec.dims.clone(), vec![fill; spec.numel()]).unwrap());
        }
        store
    }

    #[test]
    fn ratio_rules() {
        assert_eq!(Ratio::QUARTER.of(64).unwrap(), 16);
        assert!(Ratio::QUARTER.of(6).is_err());
        assert!(Ratio::new(0, 4).is_err());
        assert!(Ratio::new(5, 4).is_err());
        let bad = BlockParams {
            partial_ratio: Ratio { num: 1, den: 3 },
            ..BlockParams::fasternet(8)
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn conv_bn_act_identity() {
        let mut w = Tensor::zeros([2, 2, 1, 1]);
        w.data_mut()[0] = 1.0;
        w.data_mut()[3] = 1.0;
        let mut bn = BatchNorm::identity(2);
        bn.eps = 0.0;
        let x = Tensor::from_fn([1, 2, 3, 3], |_, c, y, xx| (c * 9 + y * 3 + xx) as f32);
        let y = conv_bn_act(&x, &w, &bn, 1, Activation::Relu).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_bn_act_stride_halves() {
        let p = BlockParams::conv(3, 4, 3, 2);
        assert_eq!(p.output_hw(640, 640), (320, 320));
        let store = random_store(&p, "stem", 1);
        let y = p.bind(&store, "stem").unwrap().forward(&Tensor::zeros([1, 3, 64, 64])).unwrap();
        assert_eq!(y.shape(), [1, 4, 32, 32]);
    }

    #[test]
    fn conv_bn_act_matches_composition() {
        let p = BlockParams::conv(3, 5, 3, 1);
        let store = random_store(&p, "x", 2);
        let block = p.bind(&store, "x").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random_tensor([1, 3, 7, 7], &mut rng);
        let Block::Conv(c) = &block else { unreachable!() };
        let mut expected = batch_norm(&conv2d(&input, &c.weight, None, 1, 1).unwrap(), &c.bn).unwrap();
        for v in expected.data_mut() {
            *v = crate::kernels::silu(*v);
        }
        assert_eq!(block.forward(&input).unwrap(), expected);
    }

    #[test]
    fn pconv_full_ratio_is_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_tensor([1, 4, 6, 6], &mut rng);
        let w = random_tensor([4, 4, 3, 3], &mut rng);
        assert_eq!(pconv(&x, &w, 4).unwrap(), conv2d(&x, &w, None, 1, 1).unwrap());
    }

    #[test]
    fn pconv_zero_weights_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor([1, 8, 5, 5], &mut rng);
        let y = pconv(&x, &Tensor::zeros([2, 2, 3, 3]), 2).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data()[..2 * 25].iter().all(|&v| v == 0.0));
        assert_eq!(&y.data()[2 * 25..], &x.data()[2 * 25..]);
    }

    #[test]
    fn pconv_slice_and_compare() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_tensor([2, 8, 6, 5], &mut rng);
        let w = random_tensor([2, 2, 3, 3], &mut rng);
        let y = pconv(&x, &w, 2).unwrap();
        let slice = Tensor::from_fn([2, 2, 6, 5], |n, c, yy, xx| x.at(n, c, yy, xx));
        let head = conv2d(&slice, &w, None, 1, 1).unwrap();
        for n in 0..2 {
            for c in 0..8 {
                for yy in 0..6 {
                    for xx in 0..5 {
                        let expected = if c < 2 { head.at(n, c, yy, xx) } else { x.at(n, c, yy, xx) };
                        assert_eq!(y.at(n, c, yy, xx).to_bits(), expected.to_bits());
                    }
                }
            }
        }
        assert!(matches!(pconv(&x, &Tensor::zeros([9, 9, 3, 3]), 9), Err(Error::Shape(_))));
    }

    #[test]
    fn fasternet_zero_weights_is_identity() {
        let p = BlockParams::fasternet(8);
        let store = zero_store(&p, "f");
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_tensor([1, 8, 4, 4], &mut rng);
        assert_eq!(p.bind(&store, "f").unwrap().forward(&x).unwrap(), x);
    }

    #[test]
    fn fasternet_channel_arithmetic() {
        let layers = BlockParams::fasternet(4).layers().unwrap();
        assert_eq!(layers[0].kind, LayerKind::PConv { c: 4, c_p: 1, k: 3 });
        let LayerKind::Conv { c_out, .. } = layers[1].kind else { panic!() };
        assert_eq!(c_out, 8);
        assert!(matches!(BlockParams::fasternet(6).layers(), Err(Error::Config(_))));
    }

    #[test]
    fn fasternet_matches_composition() {
        let p = BlockParams::fasternet(8);
        let store = random_store(&p, "f", 8);
        let block = p.bind(&store, "f").unwrap();
        let Block::FasterNet(f) = &block else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor([1, 8, 6, 6], &mut rng);

        let t = pconv(&x, &f.pconv, 2).unwrap();
        let t = conv2d(&t, &f.pw1.weight, None, 1, 0).unwrap();
        let mut t = batch_norm(&t, &f.pw1.bn).unwrap();
        for v in t.data_mut() {
            *v = gelu(*v);
        }
        let t = conv2d(&t, &f.pw2, Some(&f.pw2_bias), 1, 0).unwrap();
        let expected = crate::kernels::add(&x, &t).unwrap();
        assert!(block.forward(&x).unwrap().max_abs_diff(&expected).unwrap() <= 1e-6);
    }

    #[test]
    fn bottleneck_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_tensor([1, 4, 5, 5], &mut rng);

        let backbone = BlockParams::bottleneck(4, 4, BottleneckVariant::Backbone);
        let neck = BlockParams::bottleneck(4, 4, BottleneckVariant::Neck);
        let zeros = zero_store(&backbone, "b");
        assert_eq!(backbone.bind(&zeros, "b").unwrap().forward(&x).unwrap(), x);
        // silu(bn(0)) with identity BN is 0
        let y = neck.bind(&zeros, "b").unwrap().forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));

        let store = random_store(&backbone, "b", 11);
        let with = backbone.bind(&store, "b").unwrap().forward(&x).unwrap();
        let without = neck.bind(&store, "b").unwrap().forward(&x).unwrap();
        assert_eq!(with, crate::kernels::add(&x, &without).unwrap());
        let diff = Tensor::from_fn(x.shape(), |n, c, yy, xx| with.at(n, c, yy, xx) - without.at(n, c, yy, xx));
        assert!(diff.max_abs_diff(&x).unwrap() < 1e-6);

        assert!(matches!(
            BlockParams::bottleneck(4, 8, BottleneckVariant::Backbone).validate(),
            Err(Error::Config(_))
        ));
        assert!(BlockParams::bottleneck(4, 8, BottleneckVariant::Neck).validate().is_ok());
    }

    #[test]
    fn c2f_channel_arithmetic() {
        let layers = BlockParams::c2f(64, 64, 2, true).layers().unwrap();
        let LayerKind::Conv { c_in, .. } = layers.last().unwrap().kind else { panic!() };
        assert_eq!(c_in, 128);
        assert!(matches!(BlockParams::c2f(64, 63, 1, true).validate(), Err(Error::Config(_))));
    }

    #[test]
    fn c2f_without_units_is_cv2_of_cv1() {
        let p = BlockParams::c2f(6, 8, 0, false);
        let store = random_store(&p, "c", 12);
        let Block::C2f(c) = p.bind(&store, "c").unwrap() else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_tensor([1, 6, 5, 5], &mut rng);
        let expected = c.cv2.forward(&c.cv1.forward(&x).unwrap()).unwrap();
        assert_eq!(c.forward(&x).unwrap(), expected);
    }

    #[test]
    fn c2f_matches_composition() {
        let p = BlockParams::c2f(6, 8, 1, true);
        let store = random_store(&p, "c", 14);
        let Block::C2f(c) = p.bind(&store, "c").unwrap() else { unreachable!() };
        let C2fUnit::Bottleneck(b) = &c.units[0] else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = random_tensor([1, 6, 5, 5], &mut rng);

        let y = c.cv1.forward(&x).unwrap();
        let halves = split_channels(&y, &[4, 4]).unwrap();
        let inner = b.cv2.forward(&b.cv1.forward(&halves[1]).unwrap()).unwrap();
        let m = crate::kernels::add(&halves[1], &inner).unwrap();
        let expected = c.cv2.forward(&concat_channels(&[&halves[0], &halves[1], &m]).unwrap()).unwrap();
        assert_eq!(c.forward(&x).unwrap(), expected);
    }

    #[test]
    fn faster_c2f_matches_composition() {
        let p = BlockParams::faster_c2f(6, 16, 2);
        let store = random_store(&p, "c", 16);
        let Block::C2f(c) = p.bind(&store, "c").unwrap() else { unreachable!() };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_tensor([1, 6, 5, 5], &mut rng);

        let y = c.cv1.forward(&x).unwrap();
        let mut parts = split_channels(&y, &[8, 8]).unwrap();
        for u in &c.units {
            let C2fUnit::FasterNet(f) = u else { unreachable!() };
            let prev = parts.last().unwrap();
            let t = pconv(prev, &f.pconv, 2).unwrap();
            let t = f.pw1.forward(&t).unwrap();
            let t = conv2d(&t, &f.pw2, Some(&f.pw2_bias), 1, 0).unwrap();
            parts.push(crate::kernels::add(prev, &t).unwrap());
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        let expected = c.cv2.forward(&concat_channels(&refs).unwrap()).unwrap();
        assert!(c.forward(&x).unwrap().max_abs_diff(&expected).unwrap() <= 1e-6);
    }

    #[test]
    fn faster_c2f_zero_units_copy_second_half() {
        let p = BlockParams::faster_c2f(4, 8, 2);
        let mut store = zero_store(&p, "c");
        // cv1 needs real weights so the halves are non-trivial
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let w: Vec<f32> = (0..8 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        store.insert("c.cv1.conv.weight", WeightTensor::new(vec![8, 4, 1, 1], w).unwrap());
        let Block::C2f(c) = p.bind(&store, "c").unwrap() else { unreachable!() };
        let x = random_tensor([1, 4, 3, 3], &mut rng);
        let halves = split_channels(&c.cv1.forward(&x).unwrap(), &[4, 4]).unwrap();
        let mut current = halves[1].clone();
        for u in &c.units {
            current = u.forward(&current).unwrap();
            assert_eq!(current, halves[1]);
        }
    }

    #[test]
    fn faster_c2f_is_drop_in_for_c2f() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = random_tensor([1, 8, 6, 6], &mut rng);
        for (c_in, c_out, n) in [(8, 16, 1), (8, 8, 2), (8, 32, 3)] {
            let a = BlockParams::c2f(c_in, c_out, n, true);
            let b = BlockParams::faster_c2f(c_in, c_out, n);
            let ya = a.bind(&random_store(&a, "a", 1), "a").unwrap().forward(&x).unwrap();
            let yb = b.bind(&random_store(&b, "b", 1), "b").unwrap().forward(&x).unwrap();
            assert_eq!(ya.shape(), yb.shape());
        }
    }

    #[test]
    fn sppf_shapes_and_constant_input() {
        let p = BlockParams::sppf(8, 8);
        let store = random_store(&p, "s", 20);
        let Block::Sppf(s) = p.bind(&store, "s").unwrap() else { unreachable!() };
        let x = Tensor::full([1, 8, 6, 6], 0.7);
        let y0 = s.cv1.forward(&x).unwrap();
        let y1 = max_pool2d(&y0, 5, 1, 2).unwrap();
        assert_eq!(y1, y0);
        let y = s.forward(&x).unwrap();
        assert_eq!(y.shape(), [1, 8, 6, 6]);
        let LayerKind::Conv { c_in, .. } = p.layers().unwrap()[1].kind else { panic!() };
        assert_eq!(c_in, 4 * 4);
    }

    #[test]
    fn sppf_p5_shape() {
        let p = BlockParams::sppf(512, 512);
        let store = WeightStore::init(&p.tensor_specs("s").unwrap(), 0);
        let y = p.bind(&store, "s").unwrap().forward(&Tensor::zeros([1, 512, 20, 20])).unwrap();
        assert_eq!(y.shape(), [1, 512, 20, 20]);
    }

    #[test]
    fn chained_pools_equal_wide_pools() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random_tensor([1, 3, 17, 13], &mut rng);
        let y1 = max_pool2d(&x, 5, 1, 2).unwrap();
        let y2 = max_pool2d(&y1, 5, 1, 2).unwrap();
        let y3 = max_pool2d(&y2, 5, 1, 2).unwrap();
        assert_eq!(y2, max_pool2d(&x, 9, 1, 4).unwrap());
        assert_eq!(y3, max_pool2d(&x, 13, 1, 6).unwrap());
    }

    #[test]
    fn per_block_closed_forms() {
        for ch in [16usize, 32, 64, 128, 256] {
            let c = ch as u64;
            let bottleneck = BlockParams::bottleneck(ch, ch, BottleneckVariant::Backbone)
                .layers()
                .unwrap();
            let conv_weights: u64 = bottleneck
                .iter()
                .map(|l| match l.kind {
                    LayerKind::Conv { c_in, c_out, k, .. } => (c_in * c_out * k * k) as u64,
                    _ => 0,
                })
                .sum();
            assert_eq!(conv_weights, 2 * 9 * c * c);
            assert_eq!(BlockParams::bottleneck(ch, ch, BottleneckVariant::Neck).param_count().unwrap(), 18 * c * c + 4 * c);

            let fasternet = BlockParams::fasternet(ch).layers().unwrap();
            let fn_weights: u64 = fasternet
                .iter()
                .map(|l| match l.kind {
                    LayerKind::Conv { c_in, c_out, k, .. } => (c_in * c_out * k * k) as u64,
                    LayerKind::PConv { c_p, k, .. } => (c_p * c_p * k * k) as u64,
                })
                .sum();
            assert_eq!(fn_weights, 9 * (c / 4) * (c / 4) + 2 * c * c + 2 * c * c);
            // + PW2 bias + BN(2c) γ/β
            assert_eq!(BlockParams::fasternet(ch).param_count().unwrap(), fn_weights + c + 4 * c);
            let ratio = fn_weights as f64 / conv_weights as f64;
            assert!((ratio - 0.2535).abs() < 1e-4, "{ratio}");
        }
    }

    #[test]
    fn tensor_names_follow_dotted_convention() {
        let names: Vec<String> = BlockParams::faster_c2f(64, 64, 1)
            .tensor_specs("backbone.2")
            .unwrap()
            .into_iter()
            .map(|s| s.name)
            .collect();
        for expected in [
            "backbone.2.cv1.conv.weight",
            "backbone.2.cv1.bn.gamma",
            "backbone.2.m.0.pconv.weight",
            "backbone.2.m.0.pw1.conv.weight",
            "backbone.2.m.0.pw1.bn.running_var",
            "backbone.2.m.0.pw2.weight",
            "backbone.2.m.0.pw2.bias",
            "backbone.2.cv2.bn.beta",
        ] {
            assert!(names.iter().any(|n| n == expected), "missing {expected}");
        }
    }
}
