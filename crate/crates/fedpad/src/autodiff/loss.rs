//! The four training losses. All are batch-mean normalized so their scales
//! are comparable across batch sizes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::graph::{Graph, NodeId};

/// Mean binary cross entropy of probabilities against 0/1 labels.
pub fn loss_cls(graph: &mut Graph, probs: NodeId, labels: &Tensor) -> Result<NodeId> {
    graph.bce(probs, labels)
}

/// Mean squared Euclidean distance between predicted and target depth maps.
/// Spoof samples carry an all-zero target map.
pub fn loss_depth(graph: &mut Graph, pred: NodeId, target: NodeId) -> Result<NodeId> {
    let batch = batch_of(graph, pred)?;
    let diff = graph.sub(pred, target)?;
    let sq = graph.square(diff)?;
    let total = graph.sum_all(sq)?;
    graph.scale(total, 1.0 / batch)
}

/// Mean squared reconstruction error against the input.
pub fn loss_rec(graph: &mut Graph, reconstruction: NodeId, x: NodeId) -> Result<NodeId> {
    let batch = batch_of(graph, reconstruction)?;
    let diff = graph.sub(reconstruction, x)?;
    let sq = graph.square(diff)?;
    let total = graph.sum_all(sq)?;
    graph.scale(total, 1.0 / batch)
}

/// Soft subspace orthogonality: squared Frobenius norm of Zi^T Zs over the
/// batch, divided by batch size.
pub fn loss_diff(graph: &mut Graph, zi: NodeId, zs: NodeId) -> Result<NodeId> {
    let si = graph.value(zi).shape().to_vec();
    let ss = graph.value(zs).shape().to_vec();
    if si.len() != 2 || ss.len() != 2 || si[0] != ss[0] {
        return Err(Error::Dimension {
            op: "loss_diff".into(),
            lhs: si,
            rhs: ss,
        });
    }
    let batch = si[0] as f64;
    let t = graph.transpose(zi)?;
    let cross = graph.matmul(t, zs)?;
    let sq = graph.square(cross)?;
    let total = graph.sum_all(sq)?;
    graph.scale(total, 1.0 / batch)
}

fn batch_of(graph: &Graph, id: NodeId) -> Result<f64> {
    let shape = graph.value(id).shape();
    shape
        .first()
        .copied()
        .filter(|&n| n > 0)
        .map(|n| n as f64)
        .ok_or_else(|| Error::Dimension {
            op: "batch".into(),
            lhs: shape.to_vec(),
            rhs: vec![],
        })
}
