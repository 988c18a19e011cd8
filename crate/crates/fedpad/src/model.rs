//! Model assembly: the monolithic classifier and the five-subnet
//! disentangled model with its invariant/specific parameter partition.
//!
//! Subnet roles: `ei` extracts shared features, `es` extracts per-domain
//! features, `c` classifies from `ei` output only, `dep` regresses a depth
//! map from `ei` output only, and `dec` reconstructs the input from the
//! elementwise sum of both feature vectors.

use crate::autodiff::{
    forward_stack, loss_cls, loss_depth, loss_diff, loss_rec, Graph, Layer, LayerKind, NodeId,
};
use crate::error::{Error, Result};
use crate::params::{ParameterSet, Partition};
use crate::tensor::{Rng, Tensor};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// Desk-scale network configuration. Input images are h x w x 6
/// (RGB + HSV); two conv/pool stages quarter the spatial size. Defaults
/// match [`crate::datagen::FamilyConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub in_channels: usize,
    pub conv_channels: [usize; 2],
    pub dec_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_h: 12,
            input_w: 12,
            in_channels: 6,
            conv_channels: [8, 16],
            dec_channels: 16,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_h % 4 != 0 || self.input_w % 4 != 0 {
            return Err(Error::Config(
                "input size must be divisible by 4".to_string(),
            ));
        }
        if self.in_channels == 0
            || self.conv_channels.iter().any(|&c| c == 0)
            || self.dec_channels == 0
        {
            return Err(Error::Config("zero channel width".to_string()));
        }
        Ok(())
    }

    /// Spatial size after the two pooling stages.
    pub fn feature_hw(&self) -> (usize, usize) {
        (self.input_h / 4, self.input_w / 4)
    }

    /// Flattened extractor output dimension.
    pub fn feature_dim(&self) -> usize {
        let (h, w) = self.feature_hw();
        h * w * self.conv_channels[1]
    }

    /// Depth map shape (flattened target length = dh * dw).
    pub fn depth_hw(&self) -> (usize, usize) {
        self.feature_hw()
    }

    pub fn depth_dim(&self) -> usize {
        let (h, w) = self.depth_hw();
        h * w
    }

    fn extractor_layers(&self, prefix: &str) -> Vec<Layer> {
        vec![
            Layer::new(
                LayerKind::Conv3x3 {
                    in_ch: self.in_channels,
                    out_ch: self.conv_channels[0],
                },
                &format!("{prefix}.conv1"),
            ),
            Layer::new(LayerKind::Relu, ""),
            Layer::new(LayerKind::AvgPool2x2, ""),
            Layer::new(
                LayerKind::Conv3x3 {
                    in_ch: self.conv_channels[0],
                    out_ch: self.conv_channels[1],
                },
                &format!("{prefix}.conv2"),
            ),
            Layer::new(LayerKind::Relu, ""),
            Layer::new(LayerKind::AvgPool2x2, ""),
            Layer::new(LayerKind::Flatten, ""),
        ]
    }

    fn classifier_layers(&self) -> Vec<Layer> {
        vec![
            Layer::new(
                LayerKind::Dense {
                    input: self.feature_dim(),
                    output: 1,
                },
                "c.fc",
            ),
            Layer::new(LayerKind::Sigmoid, ""),
            Layer::new(LayerKind::Flatten, ""),
        ]
    }

    fn depth_layers(&self) -> Vec<Layer> {
        vec![Layer::new(
            LayerKind::Dense {
                input: self.feature_dim(),
                output: self.depth_dim(),
            },
            "dep.fc",
        )]
    }

    fn decoder_layers(&self) -> Vec<Layer> {
        let (fh, fw) = self.feature_hw();
        let dc = self.dec_channels;
        vec![
            Layer::new(
                LayerKind::Dense {
                    input: self.feature_dim(),
                    output: fh * fw * dc,
                },
                "dec.fc",
            ),
            Layer::new(
                LayerKind::Reshape {
                    h: fh,
                    w: fw,
                    c: dc,
                },
                "",
            ),
            Layer::new(LayerKind::Upsample2x, ""),
            Layer::new(
                LayerKind::Conv3x3 {
                    in_ch: dc,
                    out_ch: dc,
                },
                "dec.conv1",
            ),
            Layer::new(LayerKind::Relu, ""),
            Layer::new(LayerKind::Upsample2x, ""),
            Layer::new(
                LayerKind::Conv3x3 {
                    in_ch: dc,
                    out_ch: self.in_channels,
                },
                "dec.conv2",
            ),
        ]
    }
}

fn init_all(layers: &[Layer], params: &mut ParameterSet, partition: Partition, rng: &mut Rng) -> Result<()> {
    for layer in layers {
        layer.init_params(params, partition, rng)?;
    }
    Ok(())
}

/// Feature trunk + classifier head; all parameters tagged invariant.
#[derive(Debug, Clone)]
pub struct MonolithicModel {
    pub cfg: ModelConfig,
    pub layers: Vec<Layer>,
    pub params: ParameterSet,
}

pub fn build_monolithic(cfg: &ModelConfig, rng: &mut Rng) -> Result<MonolithicModel> {
    cfg.validate()?;
    let mut layers = cfg.extractor_layers("ei");
    layers.extend(cfg.classifier_layers());
    let mut params = ParameterSet::new();
    init_all(&layers, &mut params, Partition::Invariant, rng)?;
    Ok(MonolithicModel {
        cfg: cfg.clone(),
        layers,
        params,
    })
}

impl MonolithicModel {
    /// Probabilities, shape [batch].
    pub fn forward(&self, graph: &mut Graph, x: NodeId) -> Result<NodeId> {
        let mut leaves = IndexMap::new();
        forward_stack(graph, &self.layers, &self.params, &mut leaves, x)
    }

    /// Pre-sigmoid classifier logits, shape [batch]. Monotone in the
    /// probability but free of the saturation ties sigmoid produces on
    /// confident inputs, so it is what inference scoring should rank by.
    pub fn forward_logits(&self, graph: &mut Graph, x: NodeId) -> Result<NodeId> {
        let mut leaves = IndexMap::new();
        let stack: Vec<Layer> = self
            .layers
            .iter()
            .filter(|l| l.kind != LayerKind::Sigmoid)
            .cloned()
            .collect();
        forward_stack(graph, &stack, &self.params, &mut leaves, x)
    }
}

/// The five-subnet model. EI/C/Dep parameters are invariant, ES/Dec specific.
#[derive(Debug, Clone)]
pub struct DisentangledModel {
    pub cfg: ModelConfig,
    pub ei: Vec<Layer>,
    pub es: Vec<Layer>,
    pub classifier: Vec<Layer>,
    pub depth: Vec<Layer>,
    pub decoder: Vec<Layer>,
    pub params: ParameterSet,
}

pub fn build_disentangled(cfg: &ModelConfig, rng: &mut Rng) -> Result<DisentangledModel> {
    cfg.validate()?;
    let ei = cfg.extractor_layers("ei");
    let es = cfg.extractor_layers("es");
    let classifier = cfg.classifier_layers();
    let depth = cfg.depth_layers();
    let decoder = cfg.decoder_layers();
    let mut params = ParameterSet::new();
    init_all(&ei, &mut params, Partition::Invariant, rng)?;
    init_all(&classifier, &mut params, Partition::Invariant, rng)?;
    init_all(&depth, &mut params, Partition::Invariant, rng)?;
    init_all(&es, &mut params, Partition::Specific, rng)?;
    init_all(&decoder, &mut params, Partition::Specific, rng)?;
    Ok(DisentangledModel {
        cfg: cfg.clone(),
        ei,
        es,
        classifier,
        depth,
        decoder,
        params,
    })
}

/// All heads of one forward pass, sharing a single graph.
#[derive(Debug, Clone, Copy)]
pub struct DisentangledOutput {
    pub probs: NodeId,
    pub depth: NodeId,
    pub recon: NodeId,
    pub zi: NodeId,
    pub zs: NodeId,
}

impl DisentangledModel {
    pub fn forward(&self, graph: &mut Graph, x: NodeId) -> Result<DisentangledOutput> {
        let mut leaves = IndexMap::new();
        let zi = forward_stack(graph, &self.ei, &self.params, &mut leaves, x)?;
        let zs = forward_stack(graph, &self.es, &self.params, &mut leaves, x)?;
        let probs = forward_stack(graph, &self.classifier, &self.params, &mut leaves, zi)?;
        let depth = forward_stack(graph, &self.depth, &self.params, &mut leaves, zi)?;
        let zsum = graph.add(zi, zs)?;
        let recon = forward_stack(graph, &self.decoder, &self.params, &mut leaves, zsum)?;
        Ok(DisentangledOutput {
            probs,
            depth,
            recon,
            zi,
            zs,
        })
    }
}

/// Which loss terms participate in training. Classification is always on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossFlags {
    pub diff: bool,
    pub rec: bool,
    pub dep: bool,
}

impl Default for LossFlags {
    fn default() -> Self {
        LossFlags {
            diff: true,
            rec: true,
            dep: true,
        }
    }
}

/// Per-term values of one total-loss evaluation.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub dep: f64,
    pub rec: f64,
    pub diff: f64,
    pub total: f64,
}

/// Sum of the enabled loss terms; disabled terms contribute nothing to the
/// value or the gradients.
pub fn total_local_loss(
    graph: &mut Graph,
    out: &DisentangledOutput,
    x: NodeId,
    labels: &Tensor,
    depth_target: NodeId,
    flags: LossFlags,
) -> Result<(NodeId, LossBreakdown)> {
    let cls = loss_cls(graph, out.probs, labels)?;
    let mut total = cls;
    let mut breakdown = LossBreakdown {
        cls: graph.value(cls).item(),
        ..Default::default()
    };
    if flags.dep {
        let dep = loss_depth(graph, out.depth, depth_target)?;
        breakdown.dep = graph.value(dep).item();
        total = graph.add(total, dep)?;
    }
    if flags.rec {
        let rec = loss_rec(graph, out.recon, x)?;
        breakdown.rec = graph.value(rec).item();
        total = graph.add(total, rec)?;
    }
    if flags.diff {
        let diff = loss_diff(graph, out.zi, out.zs)?;
        breakdown.diff = graph.value(diff).item();
        total = graph.add(total, diff)?;
    }
    breakdown.total = graph.value(total).item();
    Ok((total, breakdown))
}
