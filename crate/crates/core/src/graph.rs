//! YOLOv8 n/s/m and the Faster-C2f light variant as layer DAGs, plus
//! parameter / MAC / memory-access accounting and the forward pass.

use std::fmt;
use std::str::FromStr;

use crate::blocks::{join, Block, BlockKind, BlockParams, ConvBnAct, LayerSpec};
use crate::error::{Error, Result};
use crate::kernels::{self, Activation};
use crate::postprocess::RawOutputs;
use crate::tensor::Tensor;
use crate::weights::{TensorSpec, WeightStore, StoreMeta};

pub const DEFAULT_REG_MAX: usize = 16;
pub const STRIDES: [usize; 3] = [8, 16, 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    V8n,
    V8s,
    V8m,
    /// YOLOv8s with every C2f replaced by Faster-C2f.
    Light,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::V8n, Variant::V8s, Variant::V8m, Variant::Light];

    /// (depth multiple, width multiple, max channels)
    pub fn scaling(self) -> (f64, f64, usize) {
        match self {
            Variant::V8n => (0.33, 0.25, 1024),
            Variant::V8s | Variant::Light => (0.33, 0.50, 1024),
            Variant::V8m => (0.67, 0.75, 768),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::V8n => "v8n",
            Variant::V8s => "v8s",
            Variant::V8m => "v8m",
            Variant::Light => "light",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "v8n" => Ok(Variant::V8n),
            "v8s" => Ok(Variant::V8s),
            "v8m" => Ok(Variant::V8m),
            "light" => Ok(Variant::Light),
            other => Err(Error::config(format!(
                "unknown model `{other}` (expected v8n, v8s, v8m or light)"
            ))),
        }
    }
}

/// Decoupled anchor-free head over P3/P4/P5.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetectParams {
    pub channels: [usize; 3],
    pub nc: usize,
    pub reg_max: usize,
}

impl DetectParams {
    /// Widths of the box and class branches.
    pub fn branch_widths(&self) -> (usize, usize) {
        let c0 = self.channels[0];
        let box_w = 16.max(c0 / 4).max(4 * self.reg_max);
        let cls_w = c0.max(self.nc.min(100));
        (box_w, cls_w)
    }

    /// Layers of scale `i`, box branch then class branch.
    pub fn scale_layers(&self, i: usize) -> Vec<LayerSpec> {
        let (bw, cw) = self.branch_widths();
        let c = self.channels[i];
        vec![
            LayerSpec::conv_bn(&format!("box.{i}.0"), c, bw, 3, 1, Activation::Silu),
            LayerSpec::conv_bn(&format!("box.{i}.1"), bw, bw, 3, 1, Activation::Silu),
            LayerSpec::conv_bias(&format!("box.{i}.2"), bw, 4 * self.reg_max, 1),
            LayerSpec::conv_bn(&format!("cls.{i}.0"), c, cw, 3, 1, Activation::Silu),
            LayerSpec::conv_bn(&format!("cls.{i}.1"), cw, cw, 3, 1, Activation::Silu),
            LayerSpec::conv_bias(&format!("cls.{i}.2"), cw, self.nc, 1),
        ]
    }

    pub fn output_channels(&self) -> usize {
        4 * self.reg_max + self.nc
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeOp {
    Block(BlockParams),
    Upsample,
    Concat,
    Detect(DetectParams),
}

impl NodeOp {
    pub fn label(&self) -> &'static str {
        match self {
            NodeOp::Block(p) => p.kind.name(),
            NodeOp::Upsample => "Upsample",
            NodeOp::Concat => "Concat",
            NodeOp::Detect(_) => "Detect",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: usize,
    /// Dotted prefix of this node's tensors, e.g. `backbone.2`.
    pub name: String,
    pub op: NodeOp,
    pub inputs: Vec<usize>,
    pub out_channels: usize,
    /// Downsampling factor of this node's output relative to the image.
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelGraph {
    pub nodes: Vec<Node>,
    /// Head-feeding nodes for strides 8, 16, 32.
    pub outputs: [usize; 3],
    pub variant: Variant,
    pub nc: usize,
    pub reg_max: usize,
    pub imgsz: usize,
}

struct Builder {
    nodes: Vec<Node>,
    depth: f64,
    width: f64,
    max_ch: usize,
    light: bool,
}

/// `-1` refers to the previous node.
const PREV: isize = -1;

impl Builder {
    fn ch(&self, c: usize) -> usize {
        let scaled = c.min(self.max_ch) as f64 * self.width;
        ((scaled / 8.0).ceil() as usize) * 8
    }

    fn reps(&self, n: usize) -> usize {
        if n > 1 {
            ((n as f64 * self.depth).round() as usize).max(1)
        } else {
            n
        }
    }

    fn resolve(&self, r: isize) -> Option<usize> {
        let i = if r < 0 { self.nodes.len() as isize + r } else { r };
        (i >= 0).then_some(i as usize)
    }

    fn push(&mut self, op: NodeOp, inputs: &[isize]) -> usize {
        let id = self.nodes.len();
        let inputs: Vec<usize> = inputs.iter().filter_map(|&r| self.resolve(r)).collect();
        let (in_c, in_stride) = inputs
            .first()
            .map_or((3, 1), |&i| (self.nodes[i].out_channels, self.nodes[i].stride));
        let (out_channels, stride) = match &op {
            NodeOp::Block(p) => (p.c_out, in_stride * p.stride),
            NodeOp::Upsample => (in_c, in_stride / 2),
            NodeOp::Concat => (inputs.iter().map(|&i| self.nodes[i].out_channels).sum(), in_stride),
            NodeOp::Detect(d) => (d.output_channels(), in_stride),
        };
        let name = match op {
            NodeOp::Detect(_) => "head".to_string(),
            _ if id < 10 => format!("backbone.{id}"),
            _ => format!("neck.{id}"),
        };
        self.nodes.push(Node {
            id,
            name,
            op,
            inputs,
            out_channels,
            stride,
        });
        id
    }

    fn in_ch(&self, r: isize) -> usize {
        self.nodes.last().map_or(3, |n| {
            if r == PREV {
                n.out_channels
            } else {
                self.nodes[r as usize].out_channels
            }
        })
    }

    fn conv(&mut self, c: usize, k: usize, s: usize) -> usize {
        let c_in = self.in_ch(PREV);
        let c_out = self.ch(c);
        self.push(NodeOp::Block(BlockParams::conv(c_in, c_out, k, s)), &[PREV])
    }

    fn c2f(&mut self, c: usize, n: usize, shortcut: bool) -> usize {
        let c_in = self.in_ch(PREV);
        let (c_out, n) = (self.ch(c), self.reps(n));
        let params = if self.light {
            BlockParams::faster_c2f(c_in, c_out, n)
        } else {
            BlockParams::c2f(c_in, c_out, n, shortcut)
        };
        self.push(NodeOp::Block(params), &[PREV])
    }
}

/// Builds the canonical YOLOv8 topology for `variant`.
pub fn build_model(variant: Variant, nc: usize, imgsz: usize) -> Result<ModelGraph> {
    build_model_with(variant, nc, imgsz, DEFAULT_REG_MAX)
}

pub fn build_model_with(variant: Variant, nc: usize, imgsz: usize, reg_max: usize) -> Result<ModelGraph> {
    if imgsz == 0 || !imgsz.is_multiple_of(32) {
        return Err(Error::config(format!("imgsz {imgsz} is not a positive multiple of 32")));
    }
    if nc == 0 {
        return Err(Error::config("nc must be at least 1"));
    }
    if reg_max < 2 {
        return Err(Error::config("reg_max must be at least 2"));
    }
    let (depth, width, max_ch) = variant.scaling();
    let mut b = Builder {
        nodes: Vec::new(),
        depth,
        width,
        max_ch,
        light: variant == Variant::Light,
    };

    // backbone
    b.conv(64, 3, 2); // 0  P1/2
    b.conv(128, 3, 2); // 1  P2/4
    b.c2f(128, 3, true); // 2
    b.conv(256, 3, 2); // 3  P3/8
    b.c2f(256, 6, true); // 4
    b.conv(512, 3, 2); // 5  P4/16
    b.c2f(512, 6, true); // 6
    b.conv(1024, 3, 2); // 7  P5/32
    b.c2f(1024, 3, true); // 8
    let c_in = b.in_ch(PREV);
    let c_out = b.ch(1024);
    b.push(NodeOp::Block(BlockParams::sppf(c_in, c_out)), &[PREV]); // 9

    // FPN
    b.push(NodeOp::Upsample, &[PREV]); // 10
    b.push(NodeOp::Concat, &[PREV, 6]); // 11
    b.c2f(512, 3, false); // 12
    b.push(NodeOp::Upsample, &[PREV]); // 13
    b.push(NodeOp::Concat, &[PREV, 4]); // 14
    let p3 = b.c2f(256, 3, false); // 15

    // PAN
    b.conv(256, 3, 2); // 16
    b.push(NodeOp::Concat, &[PREV, 12]); // 17
    let p4 = b.c2f(512, 3, false); // 18
    b.conv(512, 3, 2); // 19
    b.push(NodeOp::Concat, &[PREV, 9]); // 20
    let p5 = b.c2f(1024, 3, false); // 21

    let channels = [p3, p4, p5].map(|i| b.nodes[i].out_channels);
    b.push(
        NodeOp::Detect(DetectParams {
            channels,
            nc,
            reg_max,
        }),
        &[p3 as isize, p4 as isize, p5 as isize],
    );

    let graph = ModelGraph {
        nodes: b.nodes,
        outputs: [p3, p4, p5],
        variant,
        nc,
        reg_max,
        imgsz,
    };
    graph.check()?;
    Ok(graph)
}

impl ModelGraph {
    fn check(&self) -> Result<()> {
        for n in &self.nodes {
            if n.inputs.iter().any(|&i| i >= n.id) {
                return Err(Error::config(format!("node {} consumes a later node", n.id)));
            }
            if let NodeOp::Block(p) = &n.op {
                p.validate()?;
            }
        }
        let strides = self.outputs.map(|i| self.nodes[i].stride);
        if strides != STRIDES {
            return Err(Error::config(format!("head strides {strides:?}, expected {STRIDES:?}")));
        }
        Ok(())
    }

    pub fn detect(&self) -> &DetectParams {
        match &self.nodes.last().expect("graph has a head").op {
            NodeOp::Detect(d) => d,
            _ => unreachable!("last node is the detect head"),
        }
    }

    /// Every tensor the graph needs, in execution order.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                NodeOp::Block(p) => out.extend(p.tensor_specs(&node.name).expect("validated at build")),
                NodeOp::Detect(d) => {
                    for i in 0..3 {
                        for l in d.scale_layers(i) {
                            out.extend(l.tensor_specs(&node.name));
                        }
                    }
                }
                NodeOp::Upsample | NodeOp::Concat => {}
            }
        }
        out
    }

    pub fn block_sites(&self, kind: BlockKind) -> impl Iterator<Item = (&Node, &BlockParams)> {
        self.nodes.iter().filter_map(move |n| match &n.op {
            NodeOp::Block(p) if p.kind == kind => Some((n, p)),
            _ => None,
        })
    }
}

/// One row of a cost report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostRow {
    pub name: String,
    pub kind: String,
    /// Output (c, h, w).
    pub out_shape: [usize; 3],
    pub params: u64,
    pub macs: u64,
    pub mem_access: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub imgsz: usize,
    pub rows: Vec<CostRow>,
    pub params: u64,
    pub macs: u64,
    pub mem_access: u64,
}

impl CostReport {
    /// FLOPs counted as two per multiply-accumulate.
    pub fn flops(&self) -> u64 {
        2 * self.macs
    }

    pub fn gflops(&self) -> f64 {
        self.flops() as f64 / 1e9
    }

    pub fn mparams(&self) -> f64 {
        self.params as f64 / 1e6
    }
}

fn layers_cost(layers: &[LayerSpec], h: usize, w: usize) -> (u64, u64, u64) {
    layers.iter().fold((0, 0, 0), |(p, m, a), l| {
        (p + l.params(), m + l.macs(h, w), a + l.mem_access(h, w))
    })
}

/// Per-node parameters, MACs and memory access at `imgsz × imgsz`.
pub fn cost_report(graph: &ModelGraph, imgsz: usize) -> Result<CostReport> {
    if imgsz == 0 || !imgsz.is_multiple_of(32) {
        return Err(Error::config(format!("imgsz {imgsz} is not a positive multiple of 32")));
    }
    let mut hw: Vec<(usize, usize)> = Vec::with_capacity(graph.nodes.len());
    let mut rows = Vec::with_capacity(graph.nodes.len());
    for node in &graph.nodes {
        let (ih, iw) = node.inputs.first().map_or((imgsz, imgsz), |&i| hw[i]);
        let (out_hw, params, macs, mem) = match &node.op {
            NodeOp::Block(p) => {
                let layers = p.layers()?;
                // every block convolves at its input resolution except a strided ConvBnAct
                let (pp, m, a) = layers_cost(&layers, ih, iw);
                (p.output_hw(ih, iw), pp, m, a)
            }
            NodeOp::Upsample => ((2 * ih, 2 * iw), 0, 0, 0),
            NodeOp::Concat => ((ih, iw), 0, 0, 0),
            NodeOp::Detect(d) => {
                let mut total = (0, 0, 0);
                for (i, &src) in node.inputs.iter().enumerate() {
                    let (h, w) = hw[src];
                    let (p, m, a) = layers_cost(&d.scale_layers(i), h, w);
                    total = (total.0 + p, total.1 + m, total.2 + a);
                }
                ((ih, iw), total.0, total.1, total.2)
            }
        };
        hw.push(out_hw);
        rows.push(CostRow {
            name: node.name.clone(),
            kind: node.op.label().to_string(),
            out_shape: [node.out_channels, out_hw.0, out_hw.1],
            params,
            macs,
            mem_access: mem,
        });
    }
    Ok(CostReport {
        imgsz,
        params: rows.iter().map(|r| r.params).sum(),
        macs: rows.iter().map(|r| r.macs).sum(),
        mem_access: rows.iter().map(|r| r.mem_access).sum(),
        rows,
    })
}

/// Parameter accounting at the graph's build-time input size.
pub fn count_params(graph: &ModelGraph) -> CostReport {
    cost_report(graph, graph.imgsz).expect("graph imgsz validated at build")
}

pub fn count_flops(graph: &ModelGraph, imgsz: usize) -> Result<CostReport> {
    cost_report(graph, imgsz)
}

/// Closed-form PConv / T-shaped convolution costs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PConvCost {
    /// `h·w·k²·c_p²`
    pub flops_pconv: u64,
    /// `h·w·2c_p + k²·c_p²`
    pub mem_access_pconv: u64,
    /// `h·w·(k²·c_p·c + c·(c − c_p))`
    pub flops_tshape: u64,
    /// `h·w·(k²·c_p² + c²)`
    pub flops_two_step: u64,
}

impl PConvCost {
    /// `h·w·2c_p`, the dominant memory-access term.
    pub fn mem_access_dominant(h: u64, w: u64, c_p: u64) -> u64 {
        h * w * 2 * c_p
    }
}

pub fn pconv_cost(h: u64, w: u64, k: u64, c: u64, c_p: u64) -> Result<PConvCost> {
    if c_p == 0 || c_p > c {
        return Err(Error::Domain(format!("need 0 < c_p <= c, got c_p = {c_p}, c = {c}")));
    }
    let hw = h * w;
    Ok(PConvCost {
        flops_pconv: hw * k * k * c_p * c_p,
        mem_access_pconv: hw * 2 * c_p + k * k * c_p * c_p,
        flops_tshape: hw * (k * k * c_p * c + c * (c - c_p)),
        flops_two_step: hw * (k * k * c_p * c_p + c * c),
    })
}

/// Deterministic initial weights for `graph`.
pub fn init_weights(graph: &ModelGraph, seed: u64) -> WeightStore {
    let mut store = WeightStore::init(&graph.tensor_specs(), seed);
    store.meta = Some(StoreMeta {
        variant: graph.variant.to_string(),
        nc: graph.nc,
    });
    store
}

struct HeadScale {
    box_convs: [ConvBnAct; 2],
    box_out: (Tensor, Vec<f32>),
    cls_convs: [ConvBnAct; 2],
    cls_out: (Tensor, Vec<f32>),
}

impl HeadScale {
    fn bind(store: &WeightStore, d: &DetectParams, i: usize) -> Result<Self> {
        let (bw, cw) = d.branch_widths();
        let c = d.channels[i];
        let conv = |name: String, c_out, c_in| {
            ConvBnAct::bind(store, &join("head", &name), [c_out, c_in, 3, 3], 1, Activation::Silu)
        };
        let out = |name: String, c_out, c_in| -> Result<(Tensor, Vec<f32>)> {
            let base = join("head", &name);
            Ok((
                store.tensor(&join(&base, "weight"), [c_out, c_in, 1, 1])?,
                store.vector(&join(&base, "bias"), c_out)?,
            ))
        };
        Ok(HeadScale {
            box_convs: [conv(format!("box.{i}.0"), bw, c)?, conv(format!("box.{i}.1"), bw, bw)?],
            box_out: out(format!("box.{i}.2"), 4 * d.reg_max, bw)?,
            cls_convs: [conv(format!("cls.{i}.0"), cw, c)?, conv(format!("cls.{i}.1"), cw, cw)?],
            cls_out: out(format!("cls.{i}.2"), d.nc, cw)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let b = self.box_convs[1].forward(&self.box_convs[0].forward(x)?)?;
        let b = kernels::conv2d(&b, &self.box_out.0, Some(&self.box_out.1), 1, 0)?;
        let c = self.cls_convs[1].forward(&self.cls_convs[0].forward(x)?)?;
        let c = kernels::conv2d(&c, &self.cls_out.0, Some(&self.cls_out.1), 1, 0)?;
        kernels::concat_channels(&[&b, &c])
    }
}

/// A graph with its weights bound; immutable and shareable across threads.
pub struct Model {
    graph: ModelGraph,
    blocks: Vec<Option<Block>>,
    head: Vec<HeadScale>,
    last_use: Vec<usize>,
}

impl Model {
    /// Binds `store` to `graph`. With `strict`, tensors the graph does not
    /// use are rejected.
    pub fn new(graph: ModelGraph, store: &WeightStore, strict: bool) -> Result<Self> {
        store.validate(&graph.tensor_specs(), strict)?;
        let mut blocks = Vec::with_capacity(graph.nodes.len());
        let mut head = Vec::new();
        for node in &graph.nodes {
            match &node.op {
                NodeOp::Block(p) => blocks.push(Some(p.bind(store, &node.name)?)),
                NodeOp::Detect(d) => {
                    for i in 0..3 {
                        head.push(HeadScale::bind(store, d, i)?);
                    }
                    blocks.push(None);
                }
                _ => blocks.push(None),
            }
        }
        let mut last_use: Vec<usize> = (0..graph.nodes.len()).collect();
        for node in &graph.nodes {
            for &i in &node.inputs {
                last_use[i] = last_use[i].max(node.id);
            }
        }
        Ok(Model {
            graph,
            blocks,
            head,
            last_use,
        })
    }

    pub fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    /// Runs the network on an `(n, 3, imgsz, imgsz)` batch.
    pub fn forward(&self, input: &Tensor) -> Result<RawOutputs> {
        let g = &self.graph;
        let [_, c, h, w] = input.shape();
        if c != 3 || h != g.imgsz || w != g.imgsz {
            return Err(Error::shape(format!(
                "input {:?} does not match (n, 3, {s}, {s})",
                input.shape(),
                s = g.imgsz
            )));
        }
        let mut values: Vec<Option<Tensor>> = vec![None; g.nodes.len()];
        let mut maps = Vec::new();
        for node in &g.nodes {
            let get = |i: usize| values[i].as_ref().expect("inputs computed before use");
            let out = match &node.op {
                NodeOp::Block(_) => {
                    let x = node.inputs.first().map_or(input, |&i| get(i));
                    self.blocks[node.id].as_ref().expect("bound block").forward(x)?
                }
                NodeOp::Upsample => kernels::upsample_nearest2x(get(node.inputs[0])),
                NodeOp::Concat => {
                    let parts: Vec<&Tensor> = node.inputs.iter().map(|&i| get(i)).collect();
                    kernels::concat_channels(&parts)?
                }
                NodeOp::Detect(_) => {
                    for (scale, &i) in self.head.iter().zip(&node.inputs) {
                        maps.push(scale.forward(get(i))?);
                    }
                    continue;
                }
            };
            values[node.id] = Some(out);
            for &i in &node.inputs {
                if self.last_use[i] == node.id {
                    values[i] = None;
                }
            }
        }
        Ok(RawOutputs {
            maps,
            strides: STRIDES.to_vec(),
            reg_max: g.reg_max,
            nc: g.nc,
        })
    }
}

/// One-shot forward: bind `weights` to `graph` (strict) and run `input`.
pub fn forward(graph: &ModelGraph, weights: &WeightStore, input: &Tensor) -> Result<RawOutputs> {
    Model::new(graph.clone(), weights, true)?.forward(input)
}
