//! Append-only computation tape. Node inputs always have smaller ids, so a
//! single reverse sweep computes exact gradients.

use crate::error::{Error, Result};
use crate::params::Gradients;
use crate::tensor::{sigmoid, Tensor};

pub const PROB_EPS: f64 = 1e-7;

/// Index of a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { param: Option<String> },
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Square,
    Scale(f64),
    SumAll,
    Reshape,
    /// x [.., d] + bias [d], broadcast over all leading axes.
    AddBias,
    /// inputs: x [n,h,w,cin], kernel [cout,cin,3,3], bias [cout]; pad 1, stride 1.
    Conv3x3,
    AvgPool2x2,
    Upsample2x,
    /// Mean binary cross entropy against fixed 0/1 targets, probs clamped.
    Bce { targets: Tensor },
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
}

/// Reverse-mode tape over tensor values.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, inputs, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient slot of interest.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: None }, vec![], value)
    }

    /// Named parameter leaf; gradients are collected under this name.
    pub fn param(&mut self, name: &str, value: Tensor) -> NodeId {
        self.push(
            Op::Leaf {
                param: Some(name.to_string()),
            },
            vec![],
            value,
        )
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul, vec![a, b], v))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).transpose2d()?;
        Ok(self.push(Op::Transpose, vec![a], v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add, vec![a, b], v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub, vec![a, b], v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(Op::Mul, vec![a, b], v))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map("relu", |x| x.max(0.0))?;
        Ok(self.push(Op::Relu, vec![a], v))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map("sigmoid", sigmoid)?;
        Ok(self.push(Op::Sigmoid, vec![a], v))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map("square", |x| x * x)?;
        Ok(self.push(Op::Square, vec![a], v))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.value(a).scale(c)?;
        Ok(self.push(Op::Scale(c), vec![a], v))
    }

    /// Sum of all entries, shape [1].
    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).sum())?;
        Ok(self.push(Op::SumAll, vec![a], v))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(Op::Reshape, vec![a], v))
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let x = self.value(a);
        let b = self.value(bias);
        let d = *x.shape().last().unwrap_or(&0);
        if b.shape() != [d] {
            return Err(Error::Dimension {
                op: "add_bias".into(),
                lhs: x.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let mut data = x.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += b.data()[i % d];
        }
        let v = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(Op::AddBias, vec![a, bias], v))
    }

    pub fn conv3x3(&mut self, x: NodeId, kernel: NodeId, bias: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let ks = self.value(kernel).shape().to_vec();
        let (n, h, w, cin) = match xs[..] {
            [n, h, w, c] => (n, h, w, c),
            _ => {
                return Err(Error::Dimension {
                    op: "conv3x3 input".into(),
                    lhs: xs,
                    rhs: ks,
                })
            }
        };
        let (cout, kin) = match ks[..] {
            [cout, kin, 3, 3] => (cout, kin),
            _ => {
                return Err(Error::Dimension {
                    op: "conv3x3 kernel".into(),
                    lhs: xs,
                    rhs: ks,
                })
            }
        };
        if kin != cin || self.value(bias).shape() != [cout] {
            return Err(Error::Dimension {
                op: "conv3x3".into(),
                lhs: xs,
                rhs: ks,
            });
        }
        let xv = self.value(x).data();
        let kv = self.value(kernel).data();
        let bv = self.value(bias).data();
        let mut out = vec![0.0; n * h * w * cout];
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    for co in 0..cout {
                        let mut acc = bv[co];
                        for dy in 0..3usize {
                            let sy = y as isize + dy as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for dx in 0..3usize {
                                let sx = xx as isize + dx as isize - 1;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                let src = ((b * h + sy as usize) * w + sx as usize) * cin;
                                let kbase = ((co * cin) * 3 + dy) * 3 + dx;
                                for ci in 0..cin {
                                    acc += xv[src + ci] * kv[kbase + ci * 9];
                                }
                            }
                        }
                        out[((b * h + y) * w + xx) * cout + co] = acc;
                    }
                }
            }
        }
        let v = Tensor::new(vec![n, h, w, cout], out)?;
        Ok(self.push(Op::Conv3x3, vec![x, kernel, bias], v))
    }

    pub fn avgpool2x2(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let (n, h, w, c) = match xs[..] {
            [n, h, w, c] if h % 2 == 0 && w % 2 == 0 => (n, h, w, c),
            _ => {
                return Err(Error::Dimension {
                    op: "avgpool2x2".into(),
                    lhs: xs,
                    rhs: vec![],
                })
            }
        };
        let xv = self.value(x).data();
        let (oh, ow) = (h / 2, w / 2);
        let mut out = vec![0.0; n * oh * ow * c];
        for b in 0..n {
            for y in 0..oh {
                for xx in 0..ow {
                    for ch in 0..c {
                        let mut acc = 0.0;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                acc += xv[((b * h + 2 * y + dy) * w + 2 * xx + dx) * c + ch];
                            }
                        }
                        out[((b * oh + y) * ow + xx) * c + ch] = acc * 0.25;
                    }
                }
            }
        }
        let v = Tensor::new(vec![n, oh, ow, c], out)?;
        Ok(self.push(Op::AvgPool2x2, vec![x], v))
    }

    pub fn upsample2x(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let (n, h, w, c) = match xs[..] {
            [n, h, w, c] => (n, h, w, c),
            _ => {
                return Err(Error::Dimension {
                    op: "upsample2x".into(),
                    lhs: xs,
                    rhs: vec![],
                })
            }
        };
        let xv = self.value(x).data();
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0; n * oh * ow * c];
        for b in 0..n {
            for y in 0..oh {
                for xx in 0..ow {
                    let src = ((b * h + y / 2) * w + xx / 2) * c;
                    let dst = ((b * oh + y) * ow + xx) * c;
                    out[dst..dst + c].copy_from_slice(&xv[src..src + c]);
                }
            }
        }
        let v = Tensor::new(vec![n, oh, ow, c], out)?;
        Ok(self.push(Op::Upsample2x, vec![x], v))
    }

    /// Mean negative log-likelihood of 0/1 `targets` under probabilities `p`.
    /// Probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] before the logs.
    pub fn bce(&mut self, p: NodeId, targets: &Tensor) -> Result<NodeId> {
        let pv = self.value(p);
        if pv.len() != targets.len() {
            return Err(Error::Dimension {
                op: "bce".into(),
                lhs: pv.shape().to_vec(),
                rhs: targets.shape().to_vec(),
            });
        }
        for &y in targets.data() {
            if y != 0.0 && y != 1.0 {
                return Err(Error::Label(y));
            }
        }
        let n = targets.len() as f64;
        let mut acc = 0.0;
        for (&p, &y) in pv.data().iter().zip(targets.data()) {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            acc -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        let v = Tensor::scalar(acc / n)?;
        Ok(self.push(
            Op::Bce {
                targets: targets.clone(),
            },
            vec![p],
            v,
        ))
    }

    /// Reverse sweep from a scalar loss node. Returns one gradient slot per
    /// node; slots off every path to the loss stay `None`.
    pub fn backward(&self, loss: NodeId) -> Result<Vec<Option<Tensor>>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0)?);
        for id in (0..=loss.0).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[id];
            let input_grads = self.op_backward(node, &g)?;
            for (inp, ig) in node.inputs.iter().zip(input_grads) {
                accumulate(&mut grads[inp.0], ig)?;
            }
            grads[id] = Some(g);
        }
        Ok(grads)
    }

    fn op_backward(&self, node: &Node, g: &Tensor) -> Result<Vec<Tensor>> {
        let input = |i: usize| self.value(node.inputs[i]);
        Ok(match &node.op {
            Op::Leaf { .. } => vec![],
            Op::MatMul => {
                let a = input(0);
                let b = input(1);
                vec![
                    g.matmul(&b.transpose2d()?)?,
                    a.transpose2d()?.matmul(g)?,
                ]
            }
            Op::Transpose => vec![g.transpose2d()?],
            Op::Add => vec![g.clone(), g.clone()],
            Op::Sub => vec![g.clone(), g.scale(-1.0)?],
            Op::Mul => vec![g.mul(input(1))?, g.mul(input(0))?],
            Op::Relu => vec![g.zip(input(0), "relu'", |gv, x| if x > 0.0 { gv } else { 0.0 })?],
            Op::Sigmoid => vec![g.zip(&node.value, "sigmoid'", |gv, s| gv * s * (1.0 - s))?],
            Op::Square => vec![g.zip(input(0), "square'", |gv, x| gv * 2.0 * x)?],
            Op::Scale(c) => vec![g.scale(*c)?],
            Op::SumAll => {
                let x = input(0);
                vec![Tensor::full(x.shape(), g.item())?]
            }
            Op::Reshape => vec![g.reshape(input(0).shape())?],
            Op::AddBias => {
                let b = input(1);
                let d = b.len();
                let mut bg = vec![0.0; d];
                for (i, &v) in g.data().iter().enumerate() {
                    bg[i % d] += v;
                }
                vec![g.clone(), Tensor::new(vec![d], bg)?]
            }
            Op::Conv3x3 => self.conv3x3_backward(node, g)?,
            Op::AvgPool2x2 => {
                let xs = input(0).shape();
                let (n, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
                let (oh, ow) = (h / 2, w / 2);
                let mut dx = vec![0.0; n * h * w * c];
                for b in 0..n {
                    for y in 0..oh {
                        for xx in 0..ow {
                            for ch in 0..c {
                                let gv = g.data()[((b * oh + y) * ow + xx) * c + ch] * 0.25;
                                for dy in 0..2 {
                                    for dxp in 0..2 {
                                        dx[((b * h + 2 * y + dy) * w + 2 * xx + dxp) * c + ch] +=
                                            gv;
                                    }
                                }
                            }
                        }
                    }
                }
                vec![Tensor::new(xs.to_vec(), dx)?]
            }
            Op::Upsample2x => {
                let xs = input(0).shape();
                let (n, h, w, c) = (xs[0], xs[1], xs[2], xs[3]);
                let (oh, ow) = (2 * h, 2 * w);
                let mut dx = vec![0.0; n * h * w * c];
                for b in 0..n {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let src = ((b * oh + y) * ow + xx) * c;
                            let dst = ((b * h + y / 2) * w + xx / 2) * c;
                            for ch in 0..c {
                                dx[dst + ch] += g.data()[src + ch];
                            }
                        }
                    }
                }
                vec![Tensor::new(xs.to_vec(), dx)?]
            }
            Op::Bce { targets } => {
                let p = input(0);
                let n = targets.len() as f64;
                let gv = g.item();
                let mut dp = vec![0.0; p.len()];
                for (i, (&pi, &y)) in p.data().iter().zip(targets.data()).enumerate() {
                    // The derivative uses the clamped probability, so it
                    // stays finite yet nonzero inside the clamp region:
                    // saturated classifiers can still recover.
                    let pc = pi.clamp(PROB_EPS, 1.0 - PROB_EPS);
                    dp[i] = gv * (-(y / pc) + (1.0 - y) / (1.0 - pc)) / n;
                }
                vec![Tensor::new(p.shape().to_vec(), dp)?]
            }
        })
    }

    fn conv3x3_backward(&self, node: &Node, g: &Tensor) -> Result<Vec<Tensor>> {
        let x = self.value(node.inputs[0]);
        let k = self.value(node.inputs[1]);
        let xs = x.shape();
        let (n, h, w, cin) = (xs[0], xs[1], xs[2], xs[3]);
        let cout = k.shape()[0];
        let xv = x.data();
        let kv = k.data();
        let gv = g.data();
        let mut dx = vec![0.0; xv.len()];
        let mut dk = vec![0.0; kv.len()];
        let mut db = vec![0.0; cout];
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    for co in 0..cout {
                        let go = gv[((b * h + y) * w + xx) * cout + co];
                        if go == 0.0 {
                            continue;
                        }
                        db[co] += go;
                        for dy in 0..3usize {
                            let sy = y as isize + dy as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for dxp in 0..3usize {
                                let sx = xx as isize + dxp as isize - 1;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                let src = ((b * h + sy as usize) * w + sx as usize) * cin;
                                let kbase = ((co * cin) * 3 + dy) * 3 + dxp;
                                for ci in 0..cin {
                                    dk[kbase + ci * 9] += xv[src + ci] * go;
                                    dx[src + ci] += kv[kbase + ci * 9] * go;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(vec![
            Tensor::new(xs.to_vec(), dx)?,
            Tensor::new(k.shape().to_vec(), dk)?,
            Tensor::new(vec![cout], db)?,
        ])
    }

    /// Collect gradients for all named parameter leaves. Parameters the loss
    /// does not depend on get all-zero gradients.
    pub fn param_grads(&self, grads: &[Option<Tensor>]) -> Gradients {
        let mut out = Gradients::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { param: Some(name) } = &node.op {
                let g = grads[id]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                out.insert(name.clone(), g);
            }
        }
        out
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
    match slot {
        Some(existing) => *existing = existing.add(&g)?,
        None => *slot = Some(g),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Dist, Rng};

    #[test]
    fn frobenius_gradient_is_two_w() {
        let mut g = Graph::new();
        let w = g.param("w", Tensor::from_vec(vec![3.0]).unwrap());
        let sq = g.square(w).unwrap();
        let loss = g.sum_all(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        let pg = g.param_grads(&grads);
        assert_eq!(pg["w"].data(), &[6.0]);
    }

    #[test]
    fn disconnected_param_gets_zero_grad() {
        let mut g = Graph::new();
        let _unused = g.param("u", Tensor::from_vec(vec![5.0]).unwrap());
        let w = g.param("w", Tensor::from_vec(vec![2.0]).unwrap());
        let sq = g.square(w).unwrap();
        let loss = g.sum_all(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        let pg = g.param_grads(&grads);
        assert_eq!(pg["u"].data(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let w = g.param("w", Tensor::from_vec(vec![1.0, 2.0]).unwrap());
        assert!(g.backward(w).is_err());
    }

    #[test]
    fn matmul_grads_match_finite_differences() {
        let mut rng = Rng::new(11, 0);
        let d = Dist::Normal { mean: 0.0, std: 1.0 };
        let a0 = rng.draw(d, &[3, 4]).unwrap();
        let b0 = rng.draw(d, &[4, 2]).unwrap();
        let f = |a: &Tensor, b: &Tensor| -> f64 {
            let mut g = Graph::new();
            let an = g.param("a", a.clone());
            let bn = g.param("b", b.clone());
            let m = g.matmul(an, bn).unwrap();
            let sq = g.square(m).unwrap();
            let s = g.sum_all(sq).unwrap();
            g.value(s).item()
        };
        let mut g = Graph::new();
        let an = g.param("a", a0.clone());
        let bn = g.param("b", b0.clone());
        let m = g.matmul(an, bn).unwrap();
        let sq = g.square(m).unwrap();
        let loss = g.sum_all(sq).unwrap();
        let pg = g.param_grads(&g.backward(loss).unwrap());
        let h = 1e-5;
        for (i, &ga) in pg["a"].data().iter().enumerate() {
            let mut up = a0.data().to_vec();
            let mut dn = a0.data().to_vec();
            up[i] += h;
            dn[i] -= h;
            let up = Tensor::new(a0.shape().to_vec(), up).unwrap();
            let dn = Tensor::new(a0.shape().to_vec(), dn).unwrap();
            let fd = (f(&up, &b0) - f(&dn, &b0)) / (2.0 * h);
            assert!((ga - fd).abs() / fd.abs().max(1.0) < 1e-5, "{ga} vs {fd}");
        }
    }
}
