use std::collections::BTreeMap;

use super::kernels;
use super::tensor::RealTensor;
use crate::error::{KunnError, Result};

/// Variance floor used by [`Graph::channel_norm`].
pub const NORM_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Param,
    Const,
    Conv2dCircular(NodeId, NodeId),
    Conv2dSameZero(NodeId, NodeId),
    Upsample2x(NodeId),
    CropCenter(NodeId, usize, usize),
    Relu(NodeId),
    ChannelNorm(NodeId, NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    ComplexMul(NodeId, NodeId),
    ComplexConj(NodeId),
    ConjReflect(NodeId),
    SumSq(NodeId),
    MaskedResidual(NodeId, RealTensor, RealTensor),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param => "param",
            Op::Const => "const",
            Op::Conv2dCircular(..) => "conv2d_circular",
            Op::Conv2dSameZero(..) => "conv2d_same_zero",
            Op::Upsample2x(_) => "upsample2x_bilinear",
            Op::CropCenter(..) => "crop_center",
            Op::Relu(_) => "relu",
            Op::ChannelNorm(..) => "channel_norm",
            Op::Add(..) => "add",
            Op::Scale(..) => "scale",
            Op::ComplexMul(..) => "complex_mul",
            Op::ComplexConj(_) => "complex_conj",
            Op::ConjReflect(_) => "conj_reflect",
            Op::SumSq(_) => "sum_sq",
            Op::MaskedResidual(..) => "masked_residual",
        }
    }
}

/// Per-channel statistics kept from the forward pass of `channel_norm`.
#[derive(Clone, Debug)]
struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Option<RealTensor>,
    norm: Option<NormCache>,
}

/// Reverse-mode computation graph. Nodes are appended in topological order:
/// every constructor only accepts ids of nodes that already exist.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, NodeId>,
    evaluated: bool,
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

    fn push(&mut self, op: Op, value: Option<RealTensor>) -> NodeId {
        self.evaluated = false;
        self.nodes.push(Node {
            op,
            value,
            norm: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Trainable leaf. Names must be unique within the graph.
    pub fn param(&mut self, name: &str, value: RealTensor) -> Result<NodeId> {
        if self.params.contains_key(name) {
            return Err(KunnError::invalid(format!("duplicate parameter '{name}'")));
        }
        let id = self.push(Op::Param, Some(value));
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn constant(&mut self, value: RealTensor) -> NodeId {
        self.push(Op::Const, Some(value))
    }

    /// Replace the value of an existing parameter leaf.
    pub fn set_param(&mut self, name: &str, value: RealTensor) -> Result<()> {
        let id = *self
            .params
            .get(name)
            .ok_or_else(|| KunnError::invalid(format!("unknown parameter '{name}'")))?;
        let node = &mut self.nodes[id.0];
        if let Some(old) = &node.value {
            if old.shape() != value.shape() {
                return Err(KunnError::shape(
                    format!("param '{name}'"),
                    format!("expected {:?}, got {:?}", old.shape(), value.shape()),
                ));
            }
        }
        node.value = Some(value);
        self.evaluated = false;
        Ok(())
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn param_value(&self, name: &str) -> Option<&RealTensor> {
        self.params.get(name).and_then(|id| self.nodes[id.0].value.as_ref())
    }

    pub fn conv2d_circular(&mut self, x: NodeId, kernel: NodeId) -> NodeId {
        self.push(Op::Conv2dCircular(x, kernel), None)
    }

    pub fn conv2d_same_zero(&mut self, x: NodeId, kernel: NodeId) -> NodeId {
        self.push(Op::Conv2dSameZero(x, kernel), None)
    }

    pub fn upsample2x_bilinear(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Upsample2x(x), None)
    }

    pub fn crop_center(&mut self, x: NodeId, height: usize, width: usize) -> NodeId {
        self.push(Op::CropCenter(x, height, width), None)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Relu(x), None)
    }

    pub fn channel_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        self.push(Op::ChannelNorm(x, gain, bias), None)
    }

    pub fn add(&mut self, x: NodeId, y: NodeId) -> NodeId {
        self.push(Op::Add(x, y), None)
    }

    pub fn scale(&mut self, x: NodeId, a: f64) -> NodeId {
        self.push(Op::Scale(x, a), None)
    }

    pub fn complex_mul(&mut self, x: NodeId, y: NodeId) -> NodeId {
        self.push(Op::ComplexMul(x, y), None)
    }

    pub fn complex_conj(&mut self, x: NodeId) -> NodeId {
        self.push(Op::ComplexConj(x), None)
    }

    /// `out[n] = conj(x[-n mod N])` over the two trailing axes.
    pub fn conj_reflect(&mut self, x: NodeId) -> NodeId {
        self.push(Op::ConjReflect(x), None)
    }

    pub fn sum_sq(&mut self, x: NodeId) -> NodeId {
        self.push(Op::SumSq(x), None)
    }

    /// `mask * (x - target)`; `mask` may carry real weights.
    pub fn masked_residual(&mut self, x: NodeId, mask: RealTensor, target: RealTensor) -> NodeId {
        self.push(Op::MaskedResidual(x, mask, target), None)
    }

    pub fn value(&self, id: NodeId) -> Option<&RealTensor> {
        self.nodes.get(id.0).and_then(|n| n.value.as_ref())
    }

    fn val(&self, id: NodeId) -> &RealTensor {
        self.nodes[id.0]
            .value
            .as_ref()
            .expect("inputs are evaluated before their consumers")
    }

    /// Evaluates every node in order and returns the value of the last one.
    pub fn forward(&mut self) -> Result<&RealTensor> {
        if self.nodes.is_empty() {
            return Err(KunnError::invalid("empty graph"));
        }
        for idx in 0..self.nodes.len() {
            let (value, norm) = self.eval_node(idx)?;
            if let Some(v) = value {
                let node = &mut self.nodes[idx];
                node.value = Some(v);
                node.norm = norm;
            } else if self.nodes[idx].value.is_none() {
                return Err(KunnError::invalid(format!("leaf node {idx} has no value")));
            }
        }
        self.evaluated = true;
        Ok(self.nodes.last().and_then(|n| n.value.as_ref()).expect("root evaluated"))
    }

    pub fn root(&self) -> Option<NodeId> {
        (!self.nodes.is_empty()).then(|| NodeId(self.nodes.len() - 1))
    }

    fn label(&self, idx: usize) -> String {
        format!("node {idx} ({})", self.nodes[idx].op.name())
    }

    fn eval_node(&self, idx: usize) -> Result<(Option<RealTensor>, Option<NormCache>)> {
        let label = || self.label(idx);
        let out = match &self.nodes[idx].op {
            Op::Param | Op::Const => return Ok((None, None)),
            Op::Conv2dSameZero(x, k) => {
                let (xv, kv) = (self.val(*x), self.val(*k));
                let (ci, h, w) = dims3(xv, &label)?;
                let (co, kci, kh, kw) = dims4(kv, &label)?;
                if kci != ci || kh % 2 == 0 || kw % 2 == 0 {
                    return Err(KunnError::shape(
                        label(),
                        format!("input {:?} incompatible with kernel {:?} (odd kernel required)", xv.shape(), kv.shape()),
                    ));
                }
                let out = kernels::conv_same_forward(xv.data(), kv.data(), (ci, h, w), (co, kh, kw));
                RealTensor::new(vec![co, h, w], out)?
            }
            Op::Conv2dCircular(x, k) => {
                let (xv, kv) = (self.val(*x), self.val(*k));
                let (c2, h, w) = dims3(xv, &label)?;
                let (b2, kh, kw) = dims3(kv, &label)?;
                even_channels(c2, &label)?;
                even_channels(b2, &label)?;
                if kh > h || kw > w {
                    return Err(KunnError::shape(
                        label(),
                        format!("kernel {:?} larger than signal {:?}", kv.shape(), xv.shape()),
                    ));
                }
                let (a, b) = (c2 / 2, b2 / 2);
                let out = kernels::cconv_forward(xv.data(), kv.data(), (a, h, w), (b, kh, kw));
                RealTensor::new(vec![2 * a * b, h, w], out)?
            }
            Op::Upsample2x(x) => {
                let xv = self.val(*x);
                let (c, h, w) = dims3(xv, &label)?;
                RealTensor::new(vec![c, 2 * h, 2 * w], kernels::upsample_forward(xv.data(), (c, h, w)))?
            }
            Op::CropCenter(x, oh, ow) => {
                let xv = self.val(*x);
                let (c, h, w) = dims3(xv, &label)?;
                if *oh > h || *ow > w || *oh == 0 || *ow == 0 {
                    return Err(KunnError::shape(label(), format!("cannot crop {:?} to {oh}x{ow}", xv.shape())));
                }
                let (y0, x0) = ((h - oh) / 2, (w - ow) / 2);
                let mut out = Vec::with_capacity(c * oh * ow);
                for ch in 0..c {
                    for y in 0..*oh {
                        let start = ch * h * w + (y0 + y) * w + x0;
                        out.extend_from_slice(&xv.data()[start..start + ow]);
                    }
                }
                RealTensor::new(vec![c, *oh, *ow], out)?
            }
            Op::Relu(x) => {
                let xv = self.val(*x);
                let data = xv.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                RealTensor::new(xv.shape().to_vec(), data)?
            }
            Op::ChannelNorm(x, g, b) => {
                let (xv, gv, bv) = (self.val(*x), self.val(*g), self.val(*b));
                let (c, h, w) = dims3(xv, &label)?;
                if gv.len() != c || bv.len() != c {
                    return Err(KunnError::shape(
                        label(),
                        format!("{c} channels but gain {:?} / bias {:?}", gv.shape(), bv.shape()),
                    ));
                }
                let m = h * w;
                let mut xhat = vec![0.0; xv.len()];
                let mut inv_std = vec![0.0; c];
                let mut out = vec![0.0; xv.len()];
                for ch in 0..c {
                    let xs = &xv.data()[ch * m..(ch + 1) * m];
                    let mean = xs.iter().sum::<f64>() / m as f64;
                    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
                    let inv = 1.0 / (var + NORM_EPS).sqrt();
                    inv_std[ch] = inv;
                    let (gain, bias) = (gv.data()[ch], bv.data()[ch]);
                    for (j, v) in xs.iter().enumerate() {
                        let xh = (v - mean) * inv;
                        xhat[ch * m + j] = xh;
                        out[ch * m + j] = gain * xh + bias;
                    }
                }
                let t = RealTensor::new(xv.shape().to_vec(), out)?;
                return Ok((Some(t), Some(NormCache { xhat, inv_std })));
            }
            Op::Add(x, y) => {
                let (xv, yv) = (self.val(*x), self.val(*y));
                same_shape(xv, yv, &label)?;
                let data = xv.data().iter().zip(yv.data()).map(|(a, b)| a + b).collect();
                RealTensor::new(xv.shape().to_vec(), data)?
            }
            Op::Scale(x, a) => self.val(*x).scaled(*a),
            Op::ComplexMul(x, y) => {
                let (xv, yv) = (self.val(*x), self.val(*y));
                same_shape(xv, yv, &label)?;
                let (m, pairs) = complex_layout(xv, &label)?;
                let mut out = vec![0.0; xv.len()];
                for p in 0..pairs {
                    let (re, im) = (2 * p * m, (2 * p + 1) * m);
                    for j in 0..m {
                        let (a, b) = (xv.data()[re + j], xv.data()[im + j]);
                        let (c, d) = (yv.data()[re + j], yv.data()[im + j]);
                        out[re + j] = a * c - b * d;
                        out[im + j] = a * d + b * c;
                    }
                }
                RealTensor::new(xv.shape().to_vec(), out)?
            }
            Op::ComplexConj(x) => {
                let xv = self.val(*x);
                let (m, _) = complex_layout(xv, &label)?;
                let mut out = xv.clone();
                for (j, v) in out.data_mut().iter_mut().enumerate() {
                    if (j / m) % 2 == 1 {
                        *v = -*v;
                    }
                }
                out
            }
            Op::ConjReflect(x) => {
                let xv = self.val(*x);
                let (c, h, w) = dims3(xv, &label)?;
                even_channels(c, &label)?;
                RealTensor::new(xv.shape().to_vec(), kernels::conj_reflect(xv.data(), (c, h, w)))?
            }
            Op::SumSq(x) => RealTensor::scalar(self.val(*x).data().iter().map(|v| v * v).sum()),
            Op::MaskedResidual(x, mask, target) => {
                let xv = self.val(*x);
                same_shape(xv, mask, &label)?;
                same_shape(xv, target, &label)?;
                let data = xv
                    .data()
                    .iter()
                    .zip(mask.data())
                    .zip(target.data())
                    .map(|((v, m), t)| m * (v - t))
                    .collect();
                RealTensor::new(xv.shape().to_vec(), data)?
            }
        };
        Ok((Some(out), None))
    }

    /// Gradients of `<seed, root>` with respect to every parameter leaf.
    pub fn backward(&self, seed: &RealTensor) -> Result<BTreeMap<String, RealTensor>> {
        if !self.evaluated {
            return Err(KunnError::NotEvaluated);
        }
        let root = self.nodes.len() - 1;
        let root_val = self.val(NodeId(root));
        if seed.shape() != root_val.shape() {
            return Err(KunnError::shape(
                "backward seed",
                format!("seed {:?} vs root {:?}", seed.shape(), root_val.shape()),
            ));
        }
        let mut grads: Vec<Option<RealTensor>> = vec![None; self.nodes.len()];
        grads[root] = Some(seed.clone());

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Param | Op::Const => {
                    grads[idx] = Some(g);
                }
                Op::Conv2dSameZero(x, k) => {
                    let (xv, kv) = (self.val(*x), self.val(*k));
                    let s = xv.shape();
                    let ks = kv.shape();
                    let (gx, gk) = kernels::conv_same_backward(
                        xv.data(),
                        kv.data(),
                        g.data(),
                        (s[0], s[1], s[2]),
                        (ks[0], ks[2], ks[3]),
                    );
                    accumulate(&mut grads, *x, RealTensor::new(s.to_vec(), gx)?);
                    accumulate(&mut grads, *k, RealTensor::new(ks.to_vec(), gk)?);
                }
                Op::Conv2dCircular(x, k) => {
                    let (xv, kv) = (self.val(*x), self.val(*k));
                    let s = xv.shape();
                    let ks = kv.shape();
                    let (gx, gk) = kernels::cconv_backward(
                        xv.data(),
                        kv.data(),
                        g.data(),
                        (s[0] / 2, s[1], s[2]),
                        (ks[0] / 2, ks[1], ks[2]),
                    );
                    accumulate(&mut grads, *x, RealTensor::new(s.to_vec(), gx)?);
                    accumulate(&mut grads, *k, RealTensor::new(ks.to_vec(), gk)?);
                }
                Op::Upsample2x(x) => {
                    let s = self.val(*x).shape();
                    let gx = kernels::upsample_backward(g.data(), (s[0], s[1], s[2]));
                    accumulate(&mut grads, *x, RealTensor::new(s.to_vec(), gx)?);
                }
                Op::CropCenter(x, oh, ow) => {
                    let s = self.val(*x).shape();
                    let (c, h, w) = (s[0], s[1], s[2]);
                    let (y0, x0) = ((h - oh) / 2, (w - ow) / 2);
                    let mut gx = RealTensor::zeros(s);
                    for ch in 0..c {
                        for y in 0..*oh {
                            let dst = ch * h * w + (y0 + y) * w + x0;
                            let src = (ch * oh + y) * ow;
                            gx.data_mut()[dst..dst + ow].copy_from_slice(&g.data()[src..src + ow]);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let xv = self.val(*x);
                    let data = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .map(|(gv, v)| if *v > 0.0 { *gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, RealTensor::new(xv.shape().to_vec(), data)?);
                }
                Op::ChannelNorm(x, gain, bias) => {
                    let cache = node.norm.as_ref().expect("norm cache filled by forward");
                    let xv = self.val(*x);
                    let gainv = self.val(*gain);
                    let s = xv.shape();
                    let (c, m) = (s[0], s[1] * s[2]);
                    let mut gx = vec![0.0; xv.len()];
                    let mut gg = vec![0.0; c];
                    let mut gb = vec![0.0; c];
                    for ch in 0..c {
                        let gs = &g.data()[ch * m..(ch + 1) * m];
                        let xh = &cache.xhat[ch * m..(ch + 1) * m];
                        let sum_g: f64 = gs.iter().sum();
                        let sum_gx: f64 = gs.iter().zip(xh).map(|(a, b)| a * b).sum();
                        gb[ch] = sum_g;
                        gg[ch] = sum_gx;
                        let gain_c = gainv.data()[ch];
                        let k = gain_c * cache.inv_std[ch] / m as f64;
                        for j in 0..m {
                            gx[ch * m + j] = k * (m as f64 * gs[j] - sum_g - xh[j] * sum_gx);
                        }
                    }
                    accumulate(&mut grads, *x, RealTensor::new(s.to_vec(), gx)?);
                    accumulate(&mut grads, *gain, RealTensor::new(gainv.shape().to_vec(), gg)?);
                    accumulate(&mut grads, *bias, RealTensor::new(self.val(*bias).shape().to_vec(), gb)?);
                }
                Op::Add(x, y) => {
                    accumulate(&mut grads, *x, g.clone());
                    accumulate(&mut grads, *y, g);
                }
                Op::Scale(x, a) => accumulate(&mut grads, *x, g.scaled(*a)),
                Op::ComplexMul(x, y) => {
                    let (xv, yv) = (self.val(*x), self.val(*y));
                    let m: usize = xv.shape()[1..].iter().product();
                    let pairs = xv.shape()[0] / 2;
                    let mut gx = vec![0.0; xv.len()];
                    let mut gy = vec![0.0; yv.len()];
                    for p in 0..pairs {
                        let (re, im) = (2 * p * m, (2 * p + 1) * m);
                        for j in 0..m {
                            let (gr, gi) = (g.data()[re + j], g.data()[im + j]);
                            let (a, b) = (xv.data()[re + j], xv.data()[im + j]);
                            let (c, d) = (yv.data()[re + j], yv.data()[im + j]);
                            // g * conj(other)
                            gx[re + j] = gr * c + gi * d;
                            gx[im + j] = gi * c - gr * d;
                            gy[re + j] = gr * a + gi * b;
                            gy[im + j] = gi * a - gr * b;
                        }
                    }
                    accumulate(&mut grads, *x, RealTensor::new(xv.shape().to_vec(), gx)?);
                    accumulate(&mut grads, *y, RealTensor::new(yv.shape().to_vec(), gy)?);
                }
                Op::ComplexConj(x) => {
                    let m: usize = g.shape()[1..].iter().product();
                    let mut gx = g;
                    for (j, v) in gx.data_mut().iter_mut().enumerate() {
                        if (j / m) % 2 == 1 {
                            *v = -*v;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::ConjReflect(x) => {
                    let s = g.shape();
                    let gx = kernels::conj_reflect(g.data(), (s[0], s[1], s[2]));
                    accumulate(&mut grads, *x, RealTensor::new(s.to_vec(), gx)?);
                }
                Op::SumSq(x) => {
                    let xv = self.val(*x);
                    let k = 2.0 * g.data()[0];
                    accumulate(&mut grads, *x, xv.scaled(k));
                }
                Op::MaskedResidual(x, mask, _) => {
                    let data = g.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect();
                    accumulate(&mut grads, *x, RealTensor::new(g.shape().to_vec(), data)?);
                }
            }
        }

        let mut out = BTreeMap::new();
        for (name, id) in &self.params {
            let g = grads[id.0]
                .take()
                .unwrap_or_else(|| RealTensor::zeros(self.val(*id).shape()));
            out.insert(name.clone(), g);
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<RealTensor>], id: NodeId, g: RealTensor) {
    match &mut grads[id.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn dims3(t: &RealTensor, label: &dyn Fn() -> String) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [c, h, w] => Ok((*c, *h, *w)),
        s => Err(KunnError::shape(label(), format!("expected [C,H,W], got {s:?}"))),
    }
}

fn dims4(t: &RealTensor, label: &dyn Fn() -> String) -> Result<(usize, usize, usize, usize)> {
    match t.shape() {
        [a, b, c, d] => Ok((*a, *b, *c, *d)),
        s => Err(KunnError::shape(label(), format!("expected [Co,Ci,Kh,Kw], got {s:?}"))),
    }
}

fn even_channels(c: usize, label: &dyn Fn() -> String) -> Result<()> {
    if c % 2 != 0 {
        return Err(KunnError::shape(
            label(),
            format!("complex op needs an even leading channel count, got {c}"),
        ));
    }
    Ok(())
}

fn same_shape(a: &RealTensor, b: &RealTensor, label: &dyn Fn() -> String) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(KunnError::shape(label(), format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// (elements per channel, number of complex pairs)
fn complex_layout(t: &RealTensor, label: &dyn Fn() -> String) -> Result<(usize, usize)> {
    let c = t.shape()[0];
    even_channels(c, label)?;
    Ok((t.shape()[1..].iter().product::<usize>().max(1), c / 2))
}
