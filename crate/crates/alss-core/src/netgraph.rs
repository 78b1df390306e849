//! Declarative reconstruction of the detector topology: ordered layer
//! nodes with wiring, symbolic shape propagation, per-layer parameter
//! auditing against the bundled reference table, batch-norm fusion,
//! forward execution with per-node outputs, per-layer timing, a
//! line-oriented config format, and a flat binary parameter dump.
//!
//! # Config grammar
//!
//! Line-oriented text; `#` starts a comment line, blank lines are skipped.
//!
//! ```text
//! classes <n>
//! node <idx> <kind> [key value]... declared <CxHxW|-> params <n|->
//! ```
//!
//! Kinds and their keys:
//!
//! | kind       | keys |
//! |------------|------|
//! | `input`    | `channels` |
//! | `focus`    | `from`, `out` |
//! | `cbs`/`cb` | `from`, `out`, `kernel` |
//! | `alss`     | `from`, `out`, `alpha`, `beta`, `stride`, `parta`, `repeats`, `groups`, `poolk` |
//! | `sppf`     | `from`, `out` |
//! | `upsample` | `from`, `factor` |
//! | `concat`   | `from` (comma-separated indices) |
//! | `maxpool`  | `from`, `kernel`, `stride`, `pad` |
//! | `lca`      | `from`, `groups`, `norm` |
//! | `detect`   | `from` (three indices), `bins` |
//!
//! Node indices must be contiguous from 0, inputs must reference earlier
//! nodes, and exactly one `input` node must exist.
//!
//! # Parameter dump
//!
//! `dump_params` emits every tensor (weights, biases, norm scale/shift and
//! running statistics) as little-endian 32-bit reals in parameter-name
//! order, plus a text index of `name offset length` triples (offsets and
//! lengths in elements). `load_params` restores them byte-exactly.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::{
    block_param_count, AlssBlock, AlssConfig, ConvBn, FocusBlock, LcaBlock, LcaConfig, ParamRef,
    ParamRefMut, ParamVisit, PartAMode, SppfBlock,
};
use crate::error::{CoreError, Result};
use crate::ops;
use crate::ratio::Ratio;
use crate::reference;
use crate::scalar::Scalar;
use crate::tensor::{ConvParams, Tensor4};

/// Per-sample shape (channels, height, width).
pub type Shape3 = (usize, usize, usize);

fn shape_str(s: Option<Shape3>) -> String {
    match s {
        Some((c, h, w)) => format!("{c}x{h}x{w}"),
        None => "-".to_string(),
    }
}

/// Number of distribution-regression bins of the standard decoupled head.
pub const DEFAULT_REG_BINS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
struct DetectScale<S> {
    box0: ConvBn<S>,
    box1: ConvBn<S>,
    box_out: ConvParams<S>,
    cls0: ConvBn<S>,
    cls1: ConvBn<S>,
    cls_out: ConvParams<S>,
}

/// Standard anchor-free decoupled detection head: per scale, a two-conv
/// box branch ending in a pointwise projection to 4·bins distribution
/// logits and a two-conv class branch ending in a pointwise projection to
/// the class count, plus the shared bins→1 integral projection.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectHead<S> {
    pub num_classes: usize,
    pub reg_bins: usize,
    pub in_channels: Vec<usize>,
    scales: Vec<DetectScale<S>>,
    dfl: ConvParams<S>,
}

impl<S: Scalar> DetectHead<S> {
    pub fn new(in_channels: &[usize], num_classes: usize, reg_bins: usize) -> Result<Self> {
        if in_channels.is_empty() {
            return Err(CoreError::invalid("detect head needs at least one scale"));
        }
        if num_classes == 0 || reg_bins == 0 {
            return Err(CoreError::invalid("classes and bins must be >= 1"));
        }
        let ch0 = in_channels[0];
        let box_width = (ch0 / 4).max(16).max(4 * reg_bins);
        let cls_width = ch0.max(num_classes.min(100));
        let mut scales = Vec::with_capacity(in_channels.len());
        for &ch in in_channels {
            scales.push(DetectScale {
                box0: ConvBn::cbs(ch, box_width, 3, 1, 1)?,
                box1: ConvBn::cbs(box_width, box_width, 3, 1, 1)?,
                box_out: ConvParams::new(box_width, 4 * reg_bins, 1, 1, 0, 1)?
                    .with_bias(vec![S::zero(); 4 * reg_bins])?,
                cls0: ConvBn::cbs(ch, cls_width, 3, 1, 1)?,
                cls1: ConvBn::cbs(cls_width, cls_width, 3, 1, 1)?,
                cls_out: ConvParams::new(cls_width, num_classes, 1, 1, 0, 1)?
                    .with_bias(vec![S::zero(); num_classes])?,
            });
        }
        // fixed integral projection over the bin axis
        let dfl = ConvParams::new(reg_bins, 1, 1, 1, 0, 1)?
            .with_weights((0..reg_bins).map(|i| S::from_f64(i as f64)).collect())?;
        Ok(DetectHead {
            num_classes,
            reg_bins,
            in_channels: in_channels.to_vec(),
            scales,
            dfl,
        })
    }

    /// Raw per-scale maps: box distribution logits (4·bins channels)
    /// concatenated with class logits.
    pub fn forward(&self, inputs: &[&Tensor4<S>]) -> Result<Vec<Tensor4<S>>> {
        if inputs.len() != self.scales.len() {
            return Err(CoreError::shape(format!(
                "detect head expects {} inputs, got {}",
                self.scales.len(),
                inputs.len()
            )));
        }
        let mut out = Vec::with_capacity(inputs.len());
        for (scale, &x) in self.scales.iter().zip(inputs) {
            let b = ops::conv2d(
                &scale.box1.forward(&scale.box0.forward(x)?)?,
                &scale.box_out,
            )?;
            let c = ops::conv2d(
                &scale.cls1.forward(&scale.cls0.forward(x)?)?,
                &scale.cls_out,
            )?;
            out.push(ops::channel_concat(&[&b, &c])?);
        }
        Ok(out)
    }

    pub fn fuse_bn(&self) -> Self {
        DetectHead {
            num_classes: self.num_classes,
            reg_bins: self.reg_bins,
            in_channels: self.in_channels.clone(),
            scales: self
                .scales
                .iter()
                .map(|s| DetectScale {
                    box0: s.box0.fuse_bn(),
                    box1: s.box1.fuse_bn(),
                    box_out: s.box_out.clone(),
                    cls0: s.cls0.fuse_bn(),
                    cls1: s.cls1.fuse_bn(),
                    cls_out: s.cls_out.clone(),
                })
                .collect(),
            dfl: self.dfl.clone(),
        }
    }

    pub fn init_random<R: rand::Rng>(&mut self, rng: &mut R) {
        for s in &mut self.scales {
            s.box0.init_random(rng);
            s.box1.init_random(rng);
            s.box_out.init_random(rng);
            s.cls0.init_random(rng);
            s.cls1.init_random(rng);
            s.cls_out.init_random(rng);
        }
        // the integral projection stays fixed
    }
}

impl<S: Scalar> ParamVisit<S> for DetectHead<S> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, S>)) {
        let join = |a: &str, b: &str| {
            if a.is_empty() {
                b.to_string()
            } else {
                format!("{a}.{b}")
            }
        };
        for (i, s) in self.scales.iter().enumerate() {
            s.box0.visit_params(&join(prefix, &format!("s{i}.box0")), f);
            s.box1.visit_params(&join(prefix, &format!("s{i}.box1")), f);
            f(
                join(prefix, &format!("s{i}.box_out.weight")),
                ParamRef {
                    data: &s.box_out.weights,
                    counted: true,
                },
            );
            if let Some(b) = &s.box_out.bias {
                f(
                    join(prefix, &format!("s{i}.box_out.bias")),
                    ParamRef {
                        data: b,
                        counted: true,
                    },
                );
            }
            s.cls0.visit_params(&join(prefix, &format!("s{i}.cls0")), f);
            s.cls1.visit_params(&join(prefix, &format!("s{i}.cls1")), f);
            f(
                join(prefix, &format!("s{i}.cls_out.weight")),
                ParamRef {
                    data: &s.cls_out.weights,
                    counted: true,
                },
            );
            if let Some(b) = &s.cls_out.bias {
                f(
                    join(prefix, &format!("s{i}.cls_out.bias")),
                    ParamRef {
                        data: b,
                        counted: true,
                    },
                );
            }
        }
        f(
            join(prefix, "dfl.weight"),
            ParamRef {
                data: &self.dfl.weights,
                counted: true,
            },
        );
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, S>)) {
        let join = |a: &str, b: &str| {
            if a.is_empty() {
                b.to_string()
            } else {
                format!("{a}.{b}")
            }
        };
        for (i, s) in self.scales.iter_mut().enumerate() {
            s.box0
                .visit_params_mut(&join(prefix, &format!("s{i}.box0")), f);
            s.box1
                .visit_params_mut(&join(prefix, &format!("s{i}.box1")), f);
            f(
                join(prefix, &format!("s{i}.box_out.weight")),
                ParamRefMut {
                    data: &mut s.box_out.weights,
                    counted: true,
                },
            );
            if let Some(b) = &mut s.box_out.bias {
                f(
                    join(prefix, &format!("s{i}.box_out.bias")),
                    ParamRefMut {
                        data: b,
                        counted: true,
                    },
                );
            }
            s.cls0
                .visit_params_mut(&join(prefix, &format!("s{i}.cls0")), f);
            s.cls1
                .visit_params_mut(&join(prefix, &format!("s{i}.cls1")), f);
            f(
                join(prefix, &format!("s{i}.cls_out.weight")),
                ParamRefMut {
                    data: &mut s.cls_out.weights,
                    counted: true,
                },
            );
            if let Some(b) = &mut s.cls_out.bias {
                f(
                    join(prefix, &format!("s{i}.cls_out.bias")),
                    ParamRefMut {
                        data: b,
                        counted: true,
                    },
                );
            }
        }
        f(
            join(prefix, "dfl.weight"),
            ParamRefMut {
                data: &mut self.dfl.weights,
                counted: true,
            },
        );
    }
}

/// The operation housed in a layer node.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeOp<S> {
    Input {
        channels: usize,
    },
    Focus(FocusBlock<S>),
    Cbs(ConvBn<S>),
    Cb(ConvBn<S>),
    Alss(AlssBlock<S>),
    Sppf(SppfBlock<S>),
    Upsample {
        factor: usize,
    },
    Concat,
    MaxPool {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Lca(LcaBlock<S>),
    Detect(DetectHead<S>),
}

impl<S: Scalar> NodeOp<S> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            NodeOp::Input { .. } => "Input",
            NodeOp::Focus(_) => "Focus",
            NodeOp::Cbs(_) => "CBS",
            NodeOp::Cb(_) => "CB",
            NodeOp::Alss(_) => "ALSS",
            NodeOp::Sppf(_) => "SPPF",
            NodeOp::Upsample { .. } => "Upsample",
            NodeOp::Concat => "Concat",
            NodeOp::MaxPool { .. } => "MaxPool",
            NodeOp::Lca(_) => "LCA",
            NodeOp::Detect(_) => "Detect",
        }
    }

    fn keyword(&self) -> &'static str {
        match self {
            NodeOp::Input { .. } => "input",
            NodeOp::Focus(_) => "focus",
            NodeOp::Cbs(_) => "cbs",
            NodeOp::Cb(_) => "cb",
            NodeOp::Alss(_) => "alss",
            NodeOp::Sppf(_) => "sppf",
            NodeOp::Upsample { .. } => "upsample",
            NodeOp::Concat => "concat",
            NodeOp::MaxPool { .. } => "maxpool",
            NodeOp::Lca(_) => "lca",
            NodeOp::Detect(_) => "detect",
        }
    }

    pub fn param_count(&self) -> u64 {
        (match self {
            NodeOp::Focus(b) => block_param_count(b),
            NodeOp::Cbs(b) | NodeOp::Cb(b) => block_param_count(b),
            NodeOp::Alss(b) => block_param_count(b),
            NodeOp::Sppf(b) => block_param_count(b),
            NodeOp::Lca(b) => block_param_count(b),
            NodeOp::Detect(b) => block_param_count(b),
            _ => 0,
        }) as u64
    }

    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ParamRef<'_, S>)) {
        match self {
            NodeOp::Focus(b) => b.visit_params(prefix, f),
            NodeOp::Cbs(b) | NodeOp::Cb(b) => b.visit_params(prefix, f),
            NodeOp::Alss(b) => b.visit_params(prefix, f),
            NodeOp::Sppf(b) => b.visit_params(prefix, f),
            NodeOp::Lca(b) => b.visit_params(prefix, f),
            NodeOp::Detect(b) => b.visit_params(prefix, f),
            _ => {}
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ParamRefMut<'_, S>)) {
        match self {
            NodeOp::Focus(b) => b.visit_params_mut(prefix, f),
            NodeOp::Cbs(b) | NodeOp::Cb(b) => b.visit_params_mut(prefix, f),
            NodeOp::Alss(b) => b.visit_params_mut(prefix, f),
            NodeOp::Sppf(b) => b.visit_params_mut(prefix, f),
            NodeOp::Lca(b) => b.visit_params_mut(prefix, f),
            NodeOp::Detect(b) => b.visit_params_mut(prefix, f),
            _ => {}
        }
    }
}

/// One layer of the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Node<S> {
    pub index: usize,
    pub inputs: Vec<usize>,
    pub op: NodeOp<S>,
    /// Declared per-sample output shape, when the reference states one.
    pub declared_output: Option<Shape3>,
    /// Declared parameter count, when the reference states one.
    pub declared_params: Option<u64>,
}

/// Ordered layer nodes plus the coefficient schedules of the reference
/// build (collected from the split-and-shuffle nodes in order).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph<S> {
    pub nodes: Vec<Node<S>>,
    pub num_classes: usize,
    pub alpha_schedule: Vec<Ratio>,
    pub beta_schedule: Vec<Ratio>,
}

/// Optional knob overrides for the reference builder.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BuildOverrides {
    pub shuffle_groups: Option<usize>,
    pub dw_repeats: Option<usize>,
    pub lca_groups: Option<usize>,
    pub lca_use_norm: Option<bool>,
}

/// Outputs of one full forward pass, indexable by node.
#[derive(Debug, Clone)]
pub struct ForwardTrace<S> {
    pub node_outputs: Vec<Vec<Tensor4<S>>>,
}

impl<S: Scalar> ForwardTrace<S> {
    /// The (first) output tensor of a node.
    pub fn output(&self, index: usize) -> Option<&Tensor4<S>> {
        self.node_outputs.get(index).and_then(|v| v.first())
    }

    /// All output tensors of a node (the detect head has one per scale).
    pub fn outputs(&self, index: usize) -> &[Tensor4<S>] {
        &self.node_outputs[index]
    }
}

/// Wall-time statistics of one node over repeated forwards.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTiming {
    pub index: usize,
    pub kind: &'static str,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// One row of the parameter/shape audit.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub index: usize,
    pub kind: &'static str,
    pub computed_shape: Option<Shape3>,
    pub declared_shape: Option<Shape3>,
    pub shape_match: bool,
    pub computed_params: u64,
    pub declared_params: Option<u64>,
    /// computed − declared, when a declared count exists.
    pub delta: Option<i64>,
    pub note: String,
}

/// Full audit: per-layer rows plus totals (computed, declared, and the
/// computed total after batch-norm fusion).
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub computed_total: u64,
    pub declared_total: u64,
    pub fused_computed_total: u64,
    pub shape_mismatches: usize,
}

impl AuditReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "index,kind,computed_shape,declared_shape,shape_match,computed_params,declared_params,delta,note\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.index,
                r.kind,
                shape_str(r.computed_shape),
                shape_str(r.declared_shape),
                r.shape_match,
                r.computed_params,
                r.declared_params.map_or("-".to_string(), |p| p.to_string()),
                r.delta.map_or("-".to_string(), |d| d.to_string()),
                r.note
            ));
        }
        out.push_str(&format!(
            "total,,,,,{},{},{},fused={}\n",
            self.computed_total,
            self.declared_total,
            self.computed_total as i64 - self.declared_total as i64,
            self.fused_computed_total
        ));
        out
    }

    /// Rows whose internals the reference fully determines (everything
    /// except the calibrated ALSS and LCA rows).
    pub fn exact_class_rows(&self) -> impl Iterator<Item = &AuditRow> {
        self.rows
            .iter()
            .filter(|r| r.kind != "ALSS" && r.kind != "LCA")
    }
}

impl<S: Scalar> NetworkGraph<S> {
    /// Structural validation: contiguous indices, one input node, inputs
    /// strictly earlier.
    pub fn validate(&self) -> Result<()> {
        let mut inputs_seen = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.index != i {
                return Err(CoreError::Graph {
                    node: node.index,
                    msg: format!("index out of order (position {i})"),
                });
            }
            match &node.op {
                NodeOp::Input { .. } => {
                    inputs_seen += 1;
                    if !node.inputs.is_empty() {
                        return Err(CoreError::Graph {
                            node: i,
                            msg: "input node cannot have inputs".to_string(),
                        });
                    }
                }
                _ => {
                    if node.inputs.is_empty() {
                        return Err(CoreError::Graph {
                            node: i,
                            msg: "node has no inputs".to_string(),
                        });
                    }
                }
            }
            if node.inputs.iter().any(|&s| s >= i) {
                return Err(CoreError::Graph {
                    node: i,
                    msg: "inputs must reference strictly earlier nodes".to_string(),
                });
            }
        }
        if inputs_seen != 1 {
            return Err(CoreError::invalid(format!(
                "expected exactly one input node, found {inputs_seen}"
            )));
        }
        Ok(())
    }

    /// Symbolic per-node output shapes for a given input extent. The
    /// detect node reports `None` (it emits one map per scale).
    pub fn propagate_shapes(&self, input_h: usize, input_w: usize) -> Result<Vec<Option<Shape3>>> {
        self.validate()?;
        let mut shapes: Vec<Option<Shape3>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let fetch = |idx: usize| -> Result<Shape3> {
                shapes[idx].ok_or(CoreError::Graph {
                    node: node.index,
                    msg: format!("input node {idx} has no single output shape"),
                })
            };
            let wrap = |r: Result<Shape3>| -> Result<Option<Shape3>> {
                r.map(Some).map_err(|e| CoreError::Graph {
                    node: node.index,
                    msg: e.to_string(),
                })
            };
            let shape = match &node.op {
                NodeOp::Input { channels } => Some((*channels, input_h, input_w)),
                NodeOp::Focus(b) => {
                    let (c, h, w) = fetch(node.inputs[0])?;
                    wrap(b.output_shape(c, h, w))?
                }
                NodeOp::Cbs(b) | NodeOp::Cb(b) => {
                    let (c, h, w) = fetch(node.inputs[0])?;
                    wrap(b.output_shape(c, h, w))?
                }
                NodeOp::Alss(b) => {
                    let (c, h, w) = fetch(node.inputs[0])?;
                    wrap(b.output_shape(c, h, w))?
                }
                NodeOp::Sppf(b) => {
                    let (c, h, w) = fetch(node.inputs[0])?;
                    wrap(b.output_shape(c, h, w))?
                }
                NodeOp::Upsample { factor } => {
                    if *factor == 0 {
                        return Err(CoreError::Graph {
                            node: node.index,
                            msg: "upsample factor must be >= 1".to_string(),
                        });
                    }
                    let (c, h, w) = fetch(node.inputs[0])?;
                    Some((c, h * factor, w * factor))
                }
                NodeOp::Concat => {
                    let first = fetch(node.inputs[0])?;
                    let mut channels = 0;
                    for &src in &node.inputs {
                        let (c, h, w) = fetch(src)?;
                        if (h, w) != (first.1, first.2) {
                            return Err(CoreError::Graph {
                                node: node.index,
                                msg: format!(
                                    "concat spatial mismatch: {h}x{w} vs {}x{}",
                                    first.1, first.2
                                ),
                            });
                        }
                        channels += c;
                    }
                    Some((channels, first.1, first.2))
                }
                NodeOp::MaxPool {
                    kernel,
                    stride,
                    padding,
                } => {
                    if *kernel == 0 || *stride == 0 {
                        return Err(CoreError::Graph {
                            node: node.index,
                            msg: "maxpool kernel and stride must be >= 1".to_string(),
                        });
                    }
                    let (c, h, w) = fetch(node.inputs[0])?;
                    let ext = |n: usize| -> Result<usize> {
                        let padded = n + 2 * padding;
                        if padded < *kernel {
                            return Err(CoreError::Graph {
                                node: node.index,
                                msg: "empty pooling output".to_string(),
                            });
                        }
                        Ok((padded - kernel) / stride + 1)
                    };
                    Some((c, ext(h)?, ext(w)?))
                }
                NodeOp::Lca(b) => {
                    let (c, h, w) = fetch(node.inputs[0])?;
                    wrap(b.output_shape(c, h, w))?
                }
                NodeOp::Detect(head) => {
                    for (k, &src) in node.inputs.iter().enumerate() {
                        let (c, _, _) = fetch(src)?;
                        if c != head.in_channels[k] {
                            return Err(CoreError::Graph {
                                node: node.index,
                                msg: format!(
                                    "detect scale {k} expects {} channels, got {c}",
                                    head.in_channels[k]
                                ),
                            });
                        }
                    }
                    None
                }
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Per-layer parameter and shape audit for a given input extent.
    pub fn audit_params(&self, input_h: usize, input_w: usize) -> Result<AuditReport> {
        let shapes = self.propagate_shapes(input_h, input_w)?;
        let mut rows = Vec::with_capacity(self.nodes.len());
        let mut computed_total = 0u64;
        let mut declared_total = 0u64;
        let mut shape_mismatches = 0;
        for node in &self.nodes {
            let computed_shape = shapes[node.index];
            let computed_params = node.op.param_count();
            computed_total += computed_params;
            declared_total += node.declared_params.unwrap_or(0);
            let shape_match = match node.declared_output {
                Some(d) => computed_shape == Some(d),
                None => true,
            };
            if !shape_match {
                shape_mismatches += 1;
            }
            let mut note = String::new();
            if let NodeOp::Concat = node.op {
                let parts: Vec<String> = node
                    .inputs
                    .iter()
                    .map(|&s| shapes[s].map_or("?".to_string(), |(c, _, _)| c.to_string()))
                    .collect();
                note = format!(
                    "inferred edge {:?}: {}={}",
                    node.inputs,
                    parts.join("+"),
                    computed_shape.map_or(0, |(c, _, _)| c)
                );
            }
            if !shape_match {
                note = format!(
                    "{}{}declared shape differs from wiring",
                    note,
                    if note.is_empty() { "" } else { "; " }
                );
            }
            rows.push(AuditRow {
                index: node.index,
                kind: node.op.kind_name(),
                computed_shape,
                declared_shape: node.declared_output,
                shape_match,
                computed_params,
                declared_params: node.declared_params,
                delta: node
                    .declared_params
                    .map(|d| computed_params as i64 - d as i64),
                note,
            });
        }
        let fused_computed_total = self
            .fuse_bn()
            .nodes
            .iter()
            .map(|n| n.op.param_count())
            .sum();
        Ok(AuditReport {
            rows,
            computed_total,
            declared_total,
            fused_computed_total,
            shape_mismatches,
        })
    }

    /// Fold every batch norm into its convolution. Idempotent; forward
    /// outputs are algebraically unchanged.
    pub fn fuse_bn(&self) -> Self {
        NetworkGraph {
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    index: n.index,
                    inputs: n.inputs.clone(),
                    op: match &n.op {
                        NodeOp::Focus(b) => NodeOp::Focus(b.fuse_bn()),
                        NodeOp::Cbs(b) => NodeOp::Cbs(b.fuse_bn()),
                        NodeOp::Cb(b) => NodeOp::Cb(b.fuse_bn()),
                        NodeOp::Alss(b) => NodeOp::Alss(b.fuse_bn()),
                        NodeOp::Sppf(b) => NodeOp::Sppf(b.fuse_bn()),
                        NodeOp::Lca(b) => NodeOp::Lca(b.fuse_bn()),
                        NodeOp::Detect(b) => NodeOp::Detect(b.fuse_bn()),
                        other => other.clone(),
                    },
                    declared_output: n.declared_output,
                    declared_params: n.declared_params,
                })
                .collect(),
            num_classes: self.num_classes,
            alpha_schedule: self.alpha_schedule.clone(),
            beta_schedule: self.beta_schedule.clone(),
        }
    }

    fn run_nodes(
        &self,
        x: &Tensor4<S>,
        mut on_node: impl FnMut(usize, f64),
    ) -> Result<ForwardTrace<S>> {
        self.validate()?;
        let mut outputs: Vec<Vec<Tensor4<S>>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let start = Instant::now();
            let single = |idx: usize| -> Result<&Tensor4<S>> {
                outputs[idx].first().ok_or(CoreError::Graph {
                    node: node.index,
                    msg: format!("node {idx} has no single output"),
                })
            };
            let produced: Vec<Tensor4<S>> = match &node.op {
                NodeOp::Input { channels } => {
                    if x.channels() != *channels {
                        return Err(CoreError::Graph {
                            node: node.index,
                            msg: format!(
                                "input has {} channels, graph expects {channels}",
                                x.channels()
                            ),
                        });
                    }
                    vec![x.clone()]
                }
                NodeOp::Focus(b) => {
                    vec![graph_err(node.index, b.forward(single(node.inputs[0])?))?]
                }
                NodeOp::Cbs(b) | NodeOp::Cb(b) => {
                    vec![graph_err(node.index, b.forward(single(node.inputs[0])?))?]
                }
                NodeOp::Alss(b) => vec![graph_err(node.index, b.forward(single(node.inputs[0])?))?],
                NodeOp::Sppf(b) => vec![graph_err(node.index, b.forward(single(node.inputs[0])?))?],
                NodeOp::Upsample { factor } => {
                    vec![graph_err(
                        node.index,
                        ops::upsample_nearest(single(node.inputs[0])?, *factor),
                    )?]
                }
                NodeOp::Concat => {
                    let mut parts = Vec::with_capacity(node.inputs.len());
                    for &src in &node.inputs {
                        parts.push(single(src)?);
                    }
                    vec![graph_err(node.index, ops::channel_concat(&parts))?]
                }
                NodeOp::MaxPool {
                    kernel,
                    stride,
                    padding,
                } => vec![graph_err(
                    node.index,
                    ops::max_pool2d(single(node.inputs[0])?, *kernel, *stride, *padding),
                )?],
                NodeOp::Lca(b) => vec![graph_err(node.index, b.forward(single(node.inputs[0])?))?],
                NodeOp::Detect(head) => {
                    let mut ins = Vec::with_capacity(node.inputs.len());
                    for &src in &node.inputs {
                        ins.push(single(src)?);
                    }
                    graph_err(node.index, head.forward(&ins))?
                }
            };
            outputs.push(produced);
            on_node(node.index, start.elapsed().as_secs_f64() * 1e3);
        }
        Ok(ForwardTrace {
            node_outputs: outputs,
        })
    }

    /// Execute the graph; every node's output is retrievable from the
    /// trace by index.
    pub fn forward(&self, x: &Tensor4<S>) -> Result<ForwardTrace<S>> {
        self.run_nodes(x, |_, _| {})
    }

    /// Median wall time per node over `repeats` forward passes.
    pub fn time_layers(&self, x: &Tensor4<S>, repeats: usize) -> Result<Vec<LayerTiming>> {
        if repeats == 0 {
            return Err(CoreError::invalid("repeats must be >= 1"));
        }
        let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(repeats); self.nodes.len()];
        for _ in 0..repeats {
            self.run_nodes(x, |idx, ms| samples[idx].push(ms))?;
        }
        Ok(self
            .nodes
            .iter()
            .map(|node| {
                let s = &mut samples[node.index];
                s.sort_by(f64::total_cmp);
                LayerTiming {
                    index: node.index,
                    kind: node.op.kind_name(),
                    median_ms: s[s.len() / 2],
                    min_ms: s[0],
                    max_ms: s[s.len() - 1],
                }
            })
            .collect())
    }

    /// Indices feeding the detect node, in scale order.
    pub fn detect_input_indices(&self) -> Option<&[usize]> {
        self.nodes
            .iter()
            .find(|n| matches!(n.op, NodeOp::Detect(_)))
            .map(|n| n.inputs.as_slice())
    }

    /// Deterministically (re)initialize every parameter tensor from a seed.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for node in &mut self.nodes {
            match &mut node.op {
                NodeOp::Focus(b) => b.init_random(&mut rng),
                NodeOp::Cbs(b) | NodeOp::Cb(b) => b.init_random(&mut rng),
                NodeOp::Alss(b) => b.init_random(&mut rng),
                NodeOp::Sppf(b) => b.init_random(&mut rng),
                NodeOp::Lca(b) => b.init_random(&mut rng),
                NodeOp::Detect(b) => b.init_random(&mut rng),
                _ => {}
            }
        }
    }

    /// Every parameter tensor name, in dump order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for node in &self.nodes {
            node.op
                .visit(&format!("node{}", node.index), &mut |name, _| {
                    names.push(name)
                });
        }
        names
    }

    /// Serialize all parameter tensors as little-endian `f32` plus a text
    /// index of `name offset length` triples (element units).
    pub fn dump_params(&self) -> (Vec<u8>, String) {
        let mut blob = Vec::new();
        let mut index = String::new();
        let mut offset = 0usize;
        for node in &self.nodes {
            node.op
                .visit(&format!("node{}", node.index), &mut |name, p| {
                    for &v in p.data {
                        blob.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
                    }
                    index.push_str(&format!("{name} {offset} {}\n", p.data.len()));
                    offset += p.data.len();
                });
        }
        (blob, index)
    }

    /// Restore a parameter dump. The index must match this graph's own
    /// inventory exactly (names, offsets, lengths).
    pub fn load_params(&mut self, blob: &[u8], index: &str) -> Result<()> {
        if blob.len() % 4 != 0 {
            return Err(CoreError::invalid(
                "parameter blob length not a multiple of 4",
            ));
        }
        let mut entries = Vec::new();
        for (lineno, line) in index.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(CoreError::Parse {
                    line: lineno + 1,
                    msg: "expected `name offset length`".to_string(),
                });
            }
            let offset: usize = fields[1].parse().map_err(|_| CoreError::Parse {
                line: lineno + 1,
                msg: format!("bad offset `{}`", fields[1]),
            })?;
            let len: usize = fields[2].parse().map_err(|_| CoreError::Parse {
                line: lineno + 1,
                msg: format!("bad length `{}`", fields[2]),
            })?;
            entries.push((fields[0].to_string(), offset, len));
        }
        let mut cursor = 0usize;
        let mut err: Option<CoreError> = None;
        for node in &mut self.nodes {
            let index = node.index;
            node.op.visit_mut(&format!("node{index}"), &mut |name, p| {
                if err.is_some() {
                    return;
                }
                let Some((want_name, offset, len)) = entries.get(cursor).cloned() else {
                    err = Some(CoreError::invalid(format!(
                        "parameter index too short at `{name}`"
                    )));
                    return;
                };
                if want_name != name || len != p.data.len() {
                    err = Some(CoreError::invalid(format!(
                        "parameter mismatch: dump has `{want_name}`({len}), graph expects `{name}`({})",
                        p.data.len()
                    )));
                    return;
                }
                let start = offset * 4;
                let end = start + len * 4;
                if end > blob.len() {
                    err = Some(CoreError::invalid(format!("blob too short for `{name}`")));
                    return;
                }
                for (i, chunk) in blob[start..end].chunks_exact(4).enumerate() {
                    let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                    p.data[i] = S::from_f64(v as f64);
                }
                cursor += 1;
            });
        }
        if let Some(e) = err {
            return Err(e);
        }
        if cursor != entries.len() {
            return Err(CoreError::invalid(format!(
                "parameter index has {} extra entries",
                entries.len() - cursor
            )));
        }
        Ok(())
    }

    /// Canonical text rendering in the config grammar.
    pub fn render_config(&self) -> String {
        let mut out = format!("classes {}\n", self.num_classes);
        for node in &self.nodes {
            let mut line = format!("node {} {}", node.index, node.op.keyword());
            if !node.inputs.is_empty() {
                let sources: Vec<String> = node.inputs.iter().map(usize::to_string).collect();
                line.push_str(&format!(" from {}", sources.join(",")));
            }
            match &node.op {
                NodeOp::Input { channels } => line.push_str(&format!(" channels {channels}")),
                NodeOp::Focus(b) => line.push_str(&format!(" out {}", b.cbs.out_channels())),
                NodeOp::Cbs(b) | NodeOp::Cb(b) => line.push_str(&format!(
                    " out {} kernel {}",
                    b.out_channels(),
                    b.conv.kernel
                )),
                NodeOp::Alss(b) => {
                    let c = &b.cfg;
                    line.push_str(&format!(
                        " out {} alpha {} beta {} stride {} parta {} repeats {} groups {}",
                        c.out_channels,
                        c.alpha,
                        c.beta,
                        c.stride,
                        c.part_a_mode.as_str(),
                        c.dw_repeats,
                        c.shuffle_groups
                    ));
                    if c.pool_kernel != 2 {
                        line.push_str(&format!(" poolk {}", c.pool_kernel));
                    }
                    if c.pool_conv_kernel != 1 {
                        line.push_str(&format!(" pck {}", c.pool_conv_kernel));
                    }
                    if c.part_a_act != crate::blocks::Act::Silu {
                        line.push_str(" act linear");
                    }
                }
                NodeOp::Sppf(b) => line.push_str(&format!(" out {}", b.cv2.out_channels())),
                NodeOp::Upsample { factor } => line.push_str(&format!(" factor {factor}")),
                NodeOp::Concat => {}
                NodeOp::MaxPool {
                    kernel,
                    stride,
                    padding,
                } => {
                    line.push_str(&format!(" kernel {kernel} stride {stride}"));
                    if *padding != 0 {
                        line.push_str(&format!(" pad {padding}"));
                    }
                }
                NodeOp::Lca(b) => line.push_str(&format!(
                    " groups {} norm {}",
                    b.cfg.transform_groups,
                    if b.cfg.use_norm { 1 } else { 0 }
                )),
                NodeOp::Detect(head) => line.push_str(&format!(" bins {}", head.reg_bins)),
            }
            line.push_str(&format!(" declared {}", shape_str(node.declared_output)));
            line.push_str(&format!(
                " params {}",
                node.declared_params
                    .map_or("-".to_string(), |p| p.to_string())
            ));
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

fn graph_err<T>(node: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| CoreError::Graph {
        node,
        msg: e.to_string(),
    })
}

/// Build the 26-node reference detector.
///
/// The printed reference table's output column is adopted as the declared
/// build contract with one reconciliation: layer 19's concat joins 56 + 88
/// channels, so its declared shape is 144×40×40 (the printed 136×40×40
/// contradicts the printed wiring and layer 20's parameter count; the
/// verbatim printed row is kept in [`reference::REFERENCE_LAYERS`]).
pub fn build_alss_yolo<S: Scalar>(
    num_classes: usize,
    seed: u64,
    overrides: BuildOverrides,
) -> Result<NetworkGraph<S>> {
    if num_classes == 0 {
        return Err(CoreError::invalid("num_classes must be >= 1"));
    }
    let alphas = reference::alpha_schedule();
    let betas = reference::beta_schedule();
    let shuffle_groups = overrides.shuffle_groups.unwrap_or(2);
    let dw_repeats = overrides.dw_repeats.unwrap_or(1);
    let lca_groups = overrides.lca_groups.unwrap_or(2);
    let lca_use_norm = overrides.lca_use_norm.unwrap_or(false);

    // (index, inputs, out channels, stride, part-A) per split/shuffle node
    let alss_plan: [(usize, usize, usize, usize, PartAMode); 9] = [
        (4, 3, 24, 2, PartAMode::Pool),
        (5, 4, 48, 1, PartAMode::Conv),
        (6, 5, 88, 2, PartAMode::Conv),
        (7, 6, 88, 1, PartAMode::Conv),
        (8, 7, 176, 2, PartAMode::Conv),
        (12, 11, 88, 1, PartAMode::Identity),
        (16, 15, 56, 1, PartAMode::Identity),
        (20, 19, 56, 1, PartAMode::Identity),
        (24, 23, 56, 1, PartAMode::Identity),
    ];

    let mut nodes: Vec<Node<S>> = Vec::with_capacity(26);
    let mut channels: Vec<usize> = Vec::with_capacity(26);
    let mut alss_cursor = 0usize;

    let push = |nodes: &mut Vec<Node<S>>,
                channels: &mut Vec<usize>,
                inputs: Vec<usize>,
                op: NodeOp<S>,
                out_ch: usize| {
        let index = nodes.len();
        let printed = &reference::REFERENCE_LAYERS[index];
        let declared_output = if index == reference::INCONSISTENT_SHAPE_LAYER {
            printed
                .printed_output
                .map(|(_, h, w)| (reference::RECONSTRUCTED_LAYER19_CHANNELS, h, w))
        } else {
            printed.printed_output
        };
        nodes.push(Node {
            index,
            inputs,
            op,
            declared_output,
            declared_params: printed.printed_params,
        });
        channels.push(out_ch);
    };

    push(
        &mut nodes,
        &mut channels,
        vec![],
        NodeOp::Input { channels: 1 },
        1,
    );
    push(
        &mut nodes,
        &mut channels,
        vec![0],
        NodeOp::Focus(FocusBlock::new(8)?),
        8,
    );
    push(
        &mut nodes,
        &mut channels,
        vec![1],
        NodeOp::Cbs(ConvBn::cbs(8, 16, 3, 1, 1)?),
        16,
    );
    push(
        &mut nodes,
        &mut channels,
        vec![2],
        NodeOp::Cbs(ConvBn::cbs(16, 24, 3, 1, 1)?),
        24,
    );

    let make_alss =
        |nodes: &mut Vec<Node<S>>, channels: &mut Vec<usize>, cursor: &mut usize| -> Result<()> {
            let (index, from, out, stride, part_a) = alss_plan[*cursor];
            debug_assert_eq!(index, nodes.len());
            let cfg = AlssConfig {
                in_channels: channels[from],
                out_channels: out,
                alpha: alphas[*cursor],
                beta: betas[*cursor],
                dw_repeats,
                part_a_mode: part_a,
                stride,
                shuffle_groups,
                pool_kernel: 2,
                pool_conv_kernel: 1,
                part_a_act: crate::blocks::Act::Silu,
            };
            push(
                nodes,
                channels,
                vec![from],
                NodeOp::Alss(AlssBlock::new(cfg)?),
                out,
            );
            *cursor += 1;
            Ok(())
        };

    for _ in 0..5 {
        make_alss(&mut nodes, &mut channels, &mut alss_cursor)?; // 4..8
    }
    push(
        &mut nodes,
        &mut channels,
        vec![8],
        NodeOp::Sppf(SppfBlock::new(176, 176)?),
        176,
    );
    push(
        &mut nodes,
        &mut channels,
        vec![9],
        NodeOp::Upsample { factor: 2 },
        176,
    );
    push(
        &mut nodes,
        &mut channels,
        vec![10, 7],
        NodeOp::Concat,
        176 + 88,
    );
    make_alss(&mut nodes, &mut channels, &mut alss_cursor)?; // 12
    push(
        &mut nodes,
        &mut channels,
        vec![12],
        NodeOp::Upsample { factor: 2 },
        88,
    );
    push(
        &mut nodes,
        &mut channels,
        vec![13, 5],
        NodeOp::Concat,
        88 + 48,
    );
    push(
        &mut nodes,
        &mut channels,
        vec![14],
        NodeOp::Lca(LcaBlock::new(LcaConfig {
            channels: 136,
            transform_groups: lca_groups,
            use_norm: lca_use_norm,
        })?),
        136,
    );
    make_alss(&mut nodes, &mut channels, &mut alss_cursor)?; // 16
    push(
        &mut nodes,
        &mut channels,
        vec![16],
        NodeOp::MaxPool {
            kernel: 2,
            stride: 2,
            padding: 0,
        },
        56,
    );
    push(
        &mut nodes,
        &mut channels,
        vec![17],
        NodeOp::Cb(ConvBn::cb(56, 56, 1, 1, 0)?),
        56,
    );
    push(
        &mut nodes,
        &mut channels,
        vec![18, 12],
        NodeOp::Concat,
        56 + 88,
    );
    make_alss(&mut nodes, &mut channels, &mut alss_cursor)?; // 20
    push(
        &mut nodes,
        &mut channels,
        vec![20],
        NodeOp::MaxPool {
            kernel: 2,
            stride: 2,
            padding: 0,
        },
        56,
    );
    push(
        &mut nodes,
        &mut channels,
        vec![21],
        NodeOp::Cb(ConvBn::cb(56, 56, 1, 1, 0)?),
        56,
    );
    push(
        &mut nodes,
        &mut channels,
        vec![22, 9],
        NodeOp::Concat,
        56 + 176,
    );
    make_alss(&mut nodes, &mut channels, &mut alss_cursor)?; // 24
    push(
        &mut nodes,
        &mut channels,
        vec![16, 20, 24],
        NodeOp::Detect(DetectHead::new(
            &[56, 56, 56],
            num_classes,
            DEFAULT_REG_BINS,
        )?),
        0,
    );

    let mut graph = NetworkGraph {
        nodes,
        num_classes,
        alpha_schedule: alphas.to_vec(),
        beta_schedule: betas.to_vec(),
    };
    graph.validate()?;
    graph.init_params(seed);
    Ok(graph)
}

/// Parse the config grammar into a graph and seed its parameters.
pub fn parse_config<S: Scalar>(text: &str, seed: u64) -> Result<NetworkGraph<S>> {
    let mut num_classes = 1usize;
    let mut nodes: Vec<Node<S>> = Vec::new();
    let mut channels: Vec<usize> = Vec::new();
    let mut alpha_schedule = Vec::new();
    let mut beta_schedule = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| CoreError::ConfigParse {
            line: lineno + 1,
            msg,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "classes" => {
                if tokens.len() != 2 {
                    return Err(err("expected `classes <n>`".to_string()));
                }
                num_classes = tokens[1]
                    .parse()
                    .map_err(|_| err(format!("bad class count `{}`", tokens[1])))?;
            }
            "node" => {
                if tokens.len() < 3 {
                    return Err(err("expected `node <idx> <kind> ...`".to_string()));
                }
                let index: usize = tokens[1]
                    .parse()
                    .map_err(|_| err(format!("bad node index `{}`", tokens[1])))?;
                if index != nodes.len() {
                    return Err(err(format!(
                        "node index {index} out of order (expected {})",
                        nodes.len()
                    )));
                }
                let kind = tokens[2];
                let mut kv = std::collections::BTreeMap::new();
                let mut it = tokens[3..].iter();
                while let Some(key) = it.next() {
                    let value = it
                        .next()
                        .ok_or_else(|| err(format!("key `{key}` is missing a value")))?;
                    kv.insert(*key, *value);
                }
                let get_usize = |key: &str| -> Result<Option<usize>> {
                    kv.get(key)
                        .map(|v| {
                            v.parse::<usize>()
                                .map_err(|_| err(format!("bad `{key}` value `{v}`")))
                        })
                        .transpose()
                };
                let need_usize = |key: &str| -> Result<usize> {
                    get_usize(key)?.ok_or_else(|| err(format!("missing `{key}`")))
                };
                let inputs: Vec<usize> = match kv.get("from") {
                    Some(v) => v
                        .split(',')
                        .map(|s| {
                            s.parse::<usize>()
                                .map_err(|_| err(format!("bad source index `{s}`")))
                        })
                        .collect::<Result<_>>()?,
                    None => Vec::new(),
                };
                for &src in &inputs {
                    if src >= index {
                        return Err(err(format!("source {src} does not precede node {index}")));
                    }
                }
                let in_ch = inputs.first().map(|&i| channels[i]);
                let declared_output = match kv.get("declared") {
                    Some(&"-") | None => None,
                    Some(v) => {
                        let parts: Vec<&str> = v.split('x').collect();
                        if parts.len() != 3 {
                            return Err(err(format!("bad shape `{v}` (want CxHxW)")));
                        }
                        let mut dims = [0usize; 3];
                        for (d, p) in dims.iter_mut().zip(parts) {
                            *d = p.parse().map_err(|_| err(format!("bad shape `{v}`")))?;
                        }
                        Some((dims[0], dims[1], dims[2]))
                    }
                };
                let declared_params = match kv.get("params") {
                    Some(&"-") | None => None,
                    Some(v) => Some(
                        v.parse::<u64>()
                            .map_err(|_| err(format!("bad params `{v}`")))?,
                    ),
                };

                let (op, out_ch): (NodeOp<S>, usize) = match kind {
                    "input" => {
                        let c = need_usize("channels")?;
                        (NodeOp::Input { channels: c }, c)
                    }
                    "focus" => {
                        let out = need_usize("out")?;
                        (NodeOp::Focus(FocusBlock::new(out)?), out)
                    }
                    "cbs" | "cb" => {
                        let out = need_usize("out")?;
                        let kernel = get_usize("kernel")?.unwrap_or(3);
                        let cin =
                            in_ch.ok_or_else(|| err("conv node needs a source".to_string()))?;
                        let unit = if kind == "cbs" {
                            ConvBn::cbs(cin, out, kernel, 1, kernel / 2)?
                        } else {
                            ConvBn::cb(cin, out, kernel, 1, kernel / 2)?
                        };
                        (
                            if kind == "cbs" {
                                NodeOp::Cbs(unit)
                            } else {
                                NodeOp::Cb(unit)
                            },
                            out,
                        )
                    }
                    "alss" => {
                        let cin =
                            in_ch.ok_or_else(|| err("alss node needs a source".to_string()))?;
                        let out = need_usize("out")?;
                        let alpha: Ratio = kv
                            .get("alpha")
                            .ok_or_else(|| err("missing `alpha`".to_string()))?
                            .parse()
                            .map_err(|e: CoreError| err(e.to_string()))?;
                        let beta: Ratio = kv
                            .get("beta")
                            .ok_or_else(|| err("missing `beta`".to_string()))?
                            .parse()
                            .map_err(|e: CoreError| err(e.to_string()))?;
                        let cfg = AlssConfig {
                            in_channels: cin,
                            out_channels: out,
                            alpha,
                            beta,
                            dw_repeats: get_usize("repeats")?.unwrap_or(1),
                            part_a_mode: PartAMode::parse(kv.get("parta").unwrap_or(&"conv"))?,
                            stride: get_usize("stride")?.unwrap_or(1),
                            shuffle_groups: get_usize("groups")?.unwrap_or(2),
                            pool_kernel: get_usize("poolk")?.unwrap_or(2),
                            pool_conv_kernel: get_usize("pck")?.unwrap_or(1),
                            part_a_act: match kv.get("act").copied().unwrap_or("silu") {
                                "silu" => crate::blocks::Act::Silu,
                                "linear" => crate::blocks::Act::Linear,
                                other => return Err(err(format!("unknown activation `{other}`"))),
                            },
                        };
                        alpha_schedule.push(alpha);
                        beta_schedule.push(beta);
                        (NodeOp::Alss(AlssBlock::new(cfg)?), out)
                    }
                    "sppf" => {
                        let cin =
                            in_ch.ok_or_else(|| err("sppf node needs a source".to_string()))?;
                        let out = need_usize("out")?;
                        (NodeOp::Sppf(SppfBlock::new(cin, out)?), out)
                    }
                    "upsample" => {
                        let factor = get_usize("factor")?.unwrap_or(2);
                        if factor == 0 {
                            return Err(err("upsample factor must be >= 1".to_string()));
                        }
                        let c =
                            in_ch.ok_or_else(|| err("upsample node needs a source".to_string()))?;
                        (NodeOp::Upsample { factor }, c)
                    }
                    "concat" => {
                        if inputs.is_empty() {
                            return Err(err("concat needs sources".to_string()));
                        }
                        let c = inputs.iter().map(|&i| channels[i]).sum();
                        (NodeOp::Concat, c)
                    }
                    "maxpool" => {
                        let c =
                            in_ch.ok_or_else(|| err("maxpool node needs a source".to_string()))?;
                        let kernel = get_usize("kernel")?.unwrap_or(2);
                        let stride = get_usize("stride")?.unwrap_or(2);
                        let padding = get_usize("pad")?.unwrap_or(0);
                        if kernel == 0 || stride == 0 {
                            return Err(err("maxpool kernel and stride must be >= 1".to_string()));
                        }
                        if padding > kernel / 2 {
                            return Err(err("maxpool padding must be <= kernel/2".to_string()));
                        }
                        (
                            NodeOp::MaxPool {
                                kernel,
                                stride,
                                padding,
                            },
                            c,
                        )
                    }
                    "lca" => {
                        let c = in_ch.ok_or_else(|| err("lca node needs a source".to_string()))?;
                        let cfg = LcaConfig {
                            channels: c,
                            transform_groups: get_usize("groups")?.unwrap_or(2),
                            use_norm: get_usize("norm")?.unwrap_or(0) != 0,
                        };
                        (NodeOp::Lca(LcaBlock::new(cfg)?), c)
                    }
                    "detect" => {
                        let ch: Vec<usize> = inputs.iter().map(|&i| channels[i]).collect();
                        let bins = get_usize("bins")?.unwrap_or(DEFAULT_REG_BINS);
                        (NodeOp::Detect(DetectHead::new(&ch, num_classes, bins)?), 0)
                    }
                    other => return Err(err(format!("unknown node kind `{other}`"))),
                };
                nodes.push(Node {
                    index,
                    inputs,
                    op,
                    declared_output,
                    declared_params,
                });
                channels.push(out_ch);
            }
            other => {
                return Err(err(format!("unknown directive `{other}`")));
            }
        }
    }
    if nodes.is_empty() {
        return Err(CoreError::ConfigParse {
            line: 0,
            msg: "config defines no nodes".to_string(),
        });
    }
    let mut graph = NetworkGraph {
        nodes,
        num_classes,
        alpha_schedule,
        beta_schedule,
    };
    graph.validate()?;
    graph.init_params(seed);
    Ok(graph)
}

// re-exported for the CSV emitters
pub use crate::fmt::sig6 as fmt_sig6;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{INCONSISTENT_SHAPE_LAYER, PRINTED_TOTAL_PARAMS, REFERENCE_LAYERS};

    fn reference_graph() -> NetworkGraph<f64> {
        build_alss_yolo(4, 0, BuildOverrides::default()).unwrap()
    }

    #[test]
    fn detect_head_reference_count() {
        let head = DetectHead::<f64>::new(&[56, 56, 56], 4, 16).unwrap();
        assert_eq!(block_param_count(&head), 391_324);
    }

    #[test]
    fn reference_build_has_expected_structure() {
        let g = reference_graph();
        assert_eq!(g.nodes.len(), 26);
        assert_eq!(g.detect_input_indices().unwrap(), &[16, 20, 24]);
        let alss_nodes: Vec<usize> = g
            .nodes
            .iter()
            .filter(|n| matches!(n.op, NodeOp::Alss(_)))
            .map(|n| n.index)
            .collect();
        assert_eq!(alss_nodes, reference::ALSS_NODE_INDICES.to_vec());
        assert!(matches!(g.nodes[9].op, NodeOp::Sppf(_)));
        assert!(matches!(g.nodes[15].op, NodeOp::Lca(_)));
        assert_eq!(g.nodes[15].declared_output, Some((136, 80, 80)));
        assert_eq!(g.nodes[15].inputs, vec![14]);
    }

    #[test]
    fn shape_propagation_matches_declared_contract() {
        let g = reference_graph();
        let shapes = g.propagate_shapes(640, 640).unwrap();
        assert_eq!(shapes[1], Some((8, 160, 160)));
        assert_eq!(shapes[10], Some((176, 40, 40)));
        assert_eq!(shapes[23], Some((232, 20, 20)));
        for node in &g.nodes {
            if let Some(d) = node.declared_output {
                assert_eq!(shapes[node.index], Some(d), "node {}", node.index);
            }
        }
        // the one printed row that cannot hold: concat 18+12 is 56+88
        assert_eq!(shapes[INCONSISTENT_SHAPE_LAYER], Some((144, 40, 40)));
        assert_eq!(
            REFERENCE_LAYERS[INCONSISTENT_SHAPE_LAYER].printed_output,
            Some((136, 40, 40))
        );
    }

    #[test]
    fn audit_matches_printed_counts_per_layer() {
        let g = reference_graph();
        let report = g.audit_params(640, 640).unwrap();
        assert_eq!(report.declared_total, PRINTED_TOTAL_PARAMS);
        for row in &report.rows {
            let printed = REFERENCE_LAYERS[row.index].printed_params;
            assert_eq!(row.declared_params, printed, "row {}", row.index);
            if row.kind != "LCA" {
                assert_eq!(
                    row.delta.unwrap_or(0),
                    0,
                    "row {} ({})",
                    row.index,
                    row.kind
                );
            }
        }
        // calibrated LCA sits within a few percent of the printed count
        let lca = &report.rows[15];
        assert_eq!(lca.computed_params, 18_768);
        assert_eq!(lca.delta, Some(-680));
        assert_eq!(report.computed_total, PRINTED_TOTAL_PARAMS - 680);
        assert_eq!(report.shape_mismatches, 0);
        // the total is additive over rows
        let row_sum: u64 = report.rows.iter().map(|r| r.computed_params).sum();
        assert_eq!(report.computed_total, row_sum);
    }

    #[test]
    fn fused_total_drops_by_bn_channel_sum() {
        let g = reference_graph();
        let report = g.audit_params(640, 640).unwrap();
        assert_eq!(report.computed_total - report.fused_computed_total, 2741);
        // fusing twice is idempotent
        let fused = g.fuse_bn();
        assert_eq!(
            fused
                .fuse_bn()
                .audit_params(640, 640)
                .unwrap()
                .computed_total,
            report.fused_computed_total
        );
    }

    #[test]
    fn forward_runs_small_input_and_is_deterministic() {
        let g = reference_graph();
        let mut rng = crate::test_rng(40);
        let x = Tensor4::<f64>::random(2, 1, 64, 64, &mut rng);
        let trace = g.forward(&x).unwrap();
        assert_eq!(trace.output(16).unwrap().dims(), (2, 56, 8, 8));
        assert_eq!(trace.outputs(25).len(), 3);
        // batch of identical images -> identical batch slices
        let mut same = Tensor4::<f64>::zeros(2, 1, 64, 64);
        for c in 0..64 * 64 {
            let v = x.data()[c];
            same.data_mut()[c] = v;
            same.data_mut()[64 * 64 + c] = v;
        }
        let t = g.forward(&same).unwrap();
        let y = t.output(24).unwrap();
        let plane = 56 * 2 * 2;
        assert_eq!(y.data()[..plane], y.data()[plane..2 * plane]);

        // zero input stays finite everywhere
        let zero = Tensor4::<f64>::zeros(1, 1, 64, 64);
        let t = g.forward(&zero).unwrap();
        for outs in &t.node_outputs {
            for o in outs {
                assert!(o.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_channel_count() {
        let g = reference_graph();
        let x = Tensor4::<f64>::zeros(1, 3, 64, 64);
        assert!(matches!(
            g.forward(&x),
            Err(CoreError::Graph { node: 0, .. })
        ));
    }

    #[test]
    fn fusion_preserves_forward_outputs() {
        let g = reference_graph();
        let fused = g.fuse_bn();
        let mut rng = crate::test_rng(41);
        let x = Tensor4::<f64>::random(1, 1, 64, 64, &mut rng);
        let a = g.forward(&x).unwrap();
        let b = fused.forward(&x).unwrap();
        for (av, bv) in a.node_outputs.iter().zip(b.node_outputs.iter()) {
            for (at, bt) in av.iter().zip(bv.iter()) {
                for (x1, x2) in at.iter().zip(bt.iter()) {
                    let rel = (x1 - x2).abs() / (x1.abs() + x2.abs() + 1e-12);
                    assert!(rel < 1e-6);
                }
            }
        }
    }

    #[test]
    fn config_roundtrip_preserves_structure() {
        let g = reference_graph();
        let text = g.render_config();
        let parsed: NetworkGraph<f64> = parse_config(&text, 0).unwrap();
        assert_eq!(parsed.render_config(), text);
        assert_eq!(
            parsed.audit_params(640, 640).unwrap().to_csv(),
            g.audit_params(640, 640).unwrap().to_csv()
        );
        assert_eq!(parsed.alpha_schedule, g.alpha_schedule);
        assert_eq!(parsed.beta_schedule, g.beta_schedule);
    }

    #[test]
    fn config_parse_errors_carry_line_numbers() {
        let bad = "classes 4\nnode 0 input channels 1\nnode 1 wormhole from 0\n";
        match parse_config::<f64>(bad, 0) {
            Err(CoreError::ConfigParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected config error, got {other:?}"),
        }
        assert!(parse_config::<f64>("", 0).is_err());
        let fwd_ref = "classes 1\nnode 0 input channels 1\nnode 1 concat from 2\n";
        assert!(parse_config::<f64>(fwd_ref, 0).is_err());
    }

    #[test]
    fn overrides_flow_into_blocks_and_can_fail() {
        let g: NetworkGraph<f64> = build_alss_yolo(
            4,
            0,
            BuildOverrides {
                lca_groups: Some(4),
                ..Default::default()
            },
        )
        .unwrap();
        let NodeOp::Lca(lca) = &g.nodes[15].op else {
            panic!()
        };
        assert_eq!(lca.cfg.transform_groups, 4);

        // 7 does not divide every ALSS output width
        let bad = build_alss_yolo::<f64>(
            4,
            0,
            BuildOverrides {
                shuffle_groups: Some(7),
                ..Default::default()
            },
        );
        assert!(bad.is_err());
    }

    #[test]
    fn param_dump_roundtrip_is_byte_exact() {
        let mut g = reference_graph();
        let (blob, index) = g.dump_params();
        assert_eq!(blob.len() % 4, 0);
        let names = g.param_names();
        assert_eq!(index.lines().count(), names.len());
        assert!(names.contains(&"node1.cbs.conv.weight".to_string()));
        assert!(names.contains(&"node25.dfl.weight".to_string()));

        let mut other = build_alss_yolo::<f64>(4, 12345, BuildOverrides::default()).unwrap();
        let (before, _) = other.dump_params();
        assert_ne!(before, blob);
        other.load_params(&blob, &index).unwrap();
        let (after, index2) = other.dump_params();
        assert_eq!(after, blob);
        assert_eq!(index2, index);

        // dump -> load -> dump through the graph that produced it
        g.load_params(&blob, &index).unwrap();
        let (again, _) = g.dump_params();
        assert_eq!(again, blob);
    }

    #[test]
    fn load_params_rejects_mismatched_dumps() {
        let mut g = reference_graph();
        let (blob, index) = g.dump_params();
        assert!(g.load_params(&blob[..blob.len() - 4], &index).is_err());
        let mut wrong = index.replace("node1.cbs.conv.weight", "node1.cbs.conv.weights");
        assert!(g.load_params(&blob, &wrong).is_err());
        wrong = index.replace(' ', "");
        assert!(g.load_params(&blob, &wrong).is_err());
    }

    #[test]
    fn time_layers_reports_positive_medians() {
        let g = reference_graph();
        let mut rng = crate::test_rng(42);
        let x = Tensor4::<f64>::random(1, 1, 64, 64, &mut rng);
        let timings = g.time_layers(&x, 3).unwrap();
        assert_eq!(timings.len(), 26);
        assert!(timings.iter().all(|t| t.median_ms >= 0.0));
        assert!(timings.iter().all(|t| t.max_ms >= t.min_ms));
        let total: f64 = timings.iter().map(|t| t.median_ms).sum();
        let max_single = timings.iter().map(|t| t.median_ms).fold(0.0, f64::max);
        assert!(total >= max_single);
        assert!(g.time_layers(&x, 0).is_err());
    }
}
