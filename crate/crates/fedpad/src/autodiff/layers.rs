//! Layer vocabulary: enough to assemble the dual-extractor models at desk
//! scale. Parameters live in a [`ParameterSet`]; a layer only knows its
//! name prefix.

use crate::error::{Error, Result};
use crate::params::{ParameterSet, Partition};
use crate::tensor::{Dist, Rng, Tensor};
use indexmap::IndexMap;

use super::graph::{Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense { input: usize, output: usize },
    Conv3x3 { in_ch: usize, out_ch: usize },
    AvgPool2x2,
    Relu,
    Sigmoid,
    Flatten,
    Upsample2x,
    /// [n, h*w*c] -> [n, h, w, c].
    Reshape { h: usize, w: usize, c: usize },
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub kind: LayerKind,
    /// Parameter name prefix, e.g. "ei.conv1". Empty for parameterless kinds.
    pub prefix: String,
}

impl Layer {
    pub fn new(kind: LayerKind, prefix: &str) -> Self {
        Layer {
            kind,
            prefix: prefix.to_string(),
        }
    }

    fn weight_name(&self) -> String {
        format!("{}.w", self.prefix)
    }

    fn bias_name(&self) -> String {
        format!("{}.b", self.prefix)
    }

    /// Register freshly initialized parameters: weights ~ N(0, sqrt(2/fan_in)),
    /// biases zero.
    pub fn init_params(
        &self,
        params: &mut ParameterSet,
        partition: Partition,
        rng: &mut Rng,
    ) -> Result<()> {
        match self.kind {
            LayerKind::Dense { input, output } => {
                if input == 0 || output == 0 {
                    return Err(Error::Config(format!("dense {}: zero width", self.prefix)));
                }
                let std = (2.0 / input as f64).sqrt();
                let w = rng.draw(Dist::Normal { mean: 0.0, std }, &[input, output])?;
                params.insert(&self.weight_name(), w, partition)?;
                params.insert(&self.bias_name(), Tensor::zeros(&[output]), partition)?;
            }
            LayerKind::Conv3x3 { in_ch, out_ch } => {
                if in_ch == 0 || out_ch == 0 {
                    return Err(Error::Config(format!("conv {}: zero width", self.prefix)));
                }
                let fan_in = (in_ch * 9) as f64;
                let std = (2.0 / fan_in).sqrt();
                let w = rng.draw(Dist::Normal { mean: 0.0, std }, &[out_ch, in_ch, 3, 3])?;
                params.insert(&self.weight_name(), w, partition)?;
                params.insert(&self.bias_name(), Tensor::zeros(&[out_ch]), partition)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Apply the layer, creating parameter leaves on first use per graph.
    pub fn forward(
        &self,
        graph: &mut Graph,
        params: &ParameterSet,
        leaves: &mut IndexMap<String, NodeId>,
        x: NodeId,
    ) -> Result<NodeId> {
        let mut leaf = |graph: &mut Graph, name: String| -> Result<NodeId> {
            if let Some(&id) = leaves.get(&name) {
                return Ok(id);
            }
            let t = params
                .get(&name)
                .ok_or_else(|| Error::ParameterSet(format!("missing parameter {name}")))?
                .clone();
            let id = graph.param(&name, t);
            leaves.insert(name, id);
            Ok(id)
        };
        match self.kind {
            LayerKind::Dense { .. } => {
                let w = leaf(graph, self.weight_name())?;
                let b = leaf(graph, self.bias_name())?;
                let y = graph.matmul(x, w)?;
                graph.add_bias(y, b)
            }
            LayerKind::Conv3x3 { .. } => {
                let w = leaf(graph, self.weight_name())?;
                let b = leaf(graph, self.bias_name())?;
                graph.conv3x3(x, w, b)
            }
            LayerKind::AvgPool2x2 => graph.avgpool2x2(x),
            LayerKind::Relu => graph.relu(x),
            LayerKind::Sigmoid => graph.sigmoid(x),
            LayerKind::Flatten => {
                let shape = graph.value(x).shape().to_vec();
                let n = shape.first().copied().unwrap_or(0);
                let rest: usize = shape.iter().skip(1).product();
                graph.reshape(x, &[n, rest])
            }
            LayerKind::Upsample2x => graph.upsample2x(x),
            LayerKind::Reshape { h, w, c } => {
                let n = graph.value(x).shape()[0];
                graph.reshape(x, &[n, h, w, c])
            }
        }
    }
}

/// Sequential application; errors name the failing layer index.
pub fn forward_stack(
    graph: &mut Graph,
    layers: &[Layer],
    params: &ParameterSet,
    leaves: &mut IndexMap<String, NodeId>,
    x: NodeId,
) -> Result<NodeId> {
    let mut cur = x;
    for (index, layer) in layers.iter().enumerate() {
        cur = layer
            .forward(graph, params, leaves, cur)
            .map_err(|e| Error::Layer {
                index,
                kind: format!("{:?}", layer.kind),
                source: Box::new(e),
            })?;
    }
    Ok(cur)
}
