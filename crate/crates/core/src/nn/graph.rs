//! Reverse-mode differentiation over feature-map operations.
//!
//! A [`Graph`] borrows a [`ParameterSet`] read-only and evaluates operations
//! eagerly. In recording mode every node keeps its value so that
//! [`Graph::backward`] can push a seed gradient back to the parameters; in
//! inference mode nothing is retained and intermediate maps are freed as
//! soon as the caller drops their [`Var`] handles.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::nn::kernels::{self, NormStats};
use crate::params::{ParamId, ParameterSet};
use crate::tensor::{ensure_same_shape, Tensor};

/// Handle to a value produced inside a [`Graph`].
#[derive(Debug, Clone)]
pub struct Var {
    id: usize,
    value: Rc<Tensor>,
}

impl Var {
    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Conv { x: usize, weight: ParamId, bias: Option<ParamId>, stride: usize, dilation: usize },
    InstanceNorm { x: usize, scale: ParamId, shift: ParamId, stats: NormStats },
    LeakyRelu { x: usize, slope: f64 },
    Sigmoid { x: usize },
    Add { a: usize, b: usize },
    Concat { a: usize, b: usize },
    Upsample2x { x: usize },
    GlobalAvgPool { x: usize },
    Dense { x: usize, weight: ParamId, bias: ParamId },
    ChannelScale { x: usize, scales: usize },
    SpatialScale { x: usize, gate: usize },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Rc<Tensor>,
}

pub struct Graph<'p> {
    params: &'p ParameterSet,
    nodes: Vec<Node>,
    recording: bool,
    next_id: usize,
}

impl<'p> Graph<'p> {
    /// Graph that records every operation for a later backward pass.
    pub fn recording(params: &'p ParameterSet) -> Self {
        Self { params, nodes: Vec::new(), recording: true, next_id: 0 }
    }

    /// Forward-only graph; keeps no intermediate values.
    pub fn inference(params: &'p ParameterSet) -> Self {
        Self { params, nodes: Vec::new(), recording: false, next_id: 0 }
    }

    pub fn params(&self) -> &'p ParameterSet {
        self.params
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn param(&self, path: &str) -> Result<ParamId> {
        self.params.id(path)
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let value = Rc::new(value);
        let id = self.next_id;
        self.next_id += 1;
        if self.recording {
            self.nodes.push(Node { op, value: Rc::clone(&value) });
        }
        Var { id, value }
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Op::Input, value)
    }

    pub fn conv2d(
        &mut self,
        x: &Var,
        weight: ParamId,
        bias: Option<ParamId>,
        stride: usize,
        dilation: usize,
    ) -> Result<Var> {
        let w = self.params.by_id(weight);
        let b = bias.map(|id| self.params.by_id(id));
        let out = kernels::conv2d_forward(x.value(), w, b, stride, dilation)?;
        Ok(self.push(Op::Conv { x: x.id, weight, bias, stride, dilation }, out))
    }

    pub fn instance_norm(&mut self, x: &Var, scale: ParamId, shift: ParamId) -> Result<Var> {
        let (out, stats) = kernels::instance_norm_forward(
            x.value(),
            self.params.by_id(scale),
            self.params.by_id(shift),
        )?;
        Ok(self.push(Op::InstanceNorm { x: x.id, scale, shift, stats }, out))
    }

    pub fn leaky_relu(&mut self, x: &Var, slope: f64) -> Var {
        let out = x.value().map(|v| kernels::leaky_relu(v, slope));
        self.push(Op::LeakyRelu { x: x.id, slope }, out)
    }

    pub fn relu(&mut self, x: &Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    pub fn sigmoid(&mut self, x: &Var) -> Var {
        let out = x.value().map(kernels::sigmoid);
        self.push(Op::Sigmoid { x: x.id }, out)
    }

    pub fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let mut out = a.value().clone();
        out.add_assign(b.value())?;
        Ok(self.push(Op::Add { a: a.id, b: b.id }, out))
    }

    pub fn concat(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = kernels::concat_channels(a.value(), b.value())?;
        Ok(self.push(Op::Concat { a: a.id, b: b.id }, out))
    }

    pub fn upsample2x(&mut self, x: &Var) -> Result<Var> {
        let out = kernels::upsample2x_forward(x.value())?;
        Ok(self.push(Op::Upsample2x { x: x.id }, out))
    }

    pub fn global_avg_pool(&mut self, x: &Var) -> Result<Var> {
        let out = kernels::global_avg_pool(x.value())?;
        Ok(self.push(Op::GlobalAvgPool { x: x.id }, out))
    }

    pub fn dense(&mut self, x: &Var, weight: ParamId, bias: ParamId) -> Result<Var> {
        let out =
            kernels::dense_forward(x.value(), self.params.by_id(weight), self.params.by_id(bias))?;
        Ok(self.push(Op::Dense { x: x.id, weight, bias }, out))
    }

    pub fn channel_scale(&mut self, x: &Var, scales: &Var) -> Result<Var> {
        let out = kernels::channel_scale(x.value(), scales.value())?;
        Ok(self.push(Op::ChannelScale { x: x.id, scales: scales.id }, out))
    }

    pub fn spatial_scale(&mut self, x: &Var, gate: &Var) -> Result<Var> {
        let out = kernels::spatial_scale(x.value(), gate.value())?;
        Ok(self.push(Op::SpatialScale { x: x.id, gate: gate.id }, out))
    }

    /// Back-propagates `seed` (the gradient of some scalar with respect to
    /// `output`) and accumulates parameter gradients into `grads`, which must
    /// share the layout of the graph's parameter set.
    pub fn backward(&self, output: &Var, seed: Tensor, grads: &mut ParameterSet) -> Result<()> {
        if !self.recording {
            return Err(Error::InvalidInput("backward called on an inference graph".into()));
        }
        if output.id >= self.nodes.len() {
            return Err(Error::InvalidInput("output does not belong to this graph".into()));
        }
        ensure_same_shape(output.value(), &seed)?;
        if grads.len() != self.params.len() {
            return Err(Error::Shape("gradient accumulator does not match parameters".into()));
        }

        let mut node_grads: Vec<Option<Tensor>> = Vec::new();
        node_grads.resize_with(output.id + 1, || None);
        node_grads[output.id] = Some(seed);

        fn accumulate(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
            match slot {
                Some(existing) => existing.add_assign(&g),
                None => {
                    *slot = Some(g);
                    Ok(())
                }
            }
        }

        for id in (0..=output.id).rev() {
            let Some(grad) = node_grads[id].take() else { continue };
            let node = &self.nodes[id];
            let value_of = |i: usize| -> &Tensor { &self.nodes[i].value };
            match &node.op {
                Op::Input => {}
                Op::Conv { x, weight, bias, stride, dilation } => {
                    let g = kernels::conv2d_backward(
                        value_of(*x),
                        self.params.by_id(*weight),
                        &grad,
                        *stride,
                        *dilation,
                    )?;
                    grads.by_id_mut(*weight).add_assign(&g.weight)?;
                    if let Some(b) = bias {
                        grads.by_id_mut(*b).add_assign(&g.bias)?;
                    }
                    accumulate(&mut node_grads[*x], g.input)?;
                }
                Op::InstanceNorm { x, scale, shift, stats } => {
                    let (dx, dscale, dshift) = kernels::instance_norm_backward(
                        value_of(*x),
                        self.params.by_id(*scale),
                        stats,
                        &grad,
                    )?;
                    grads.by_id_mut(*scale).add_assign(&dscale)?;
                    grads.by_id_mut(*shift).add_assign(&dshift)?;
                    accumulate(&mut node_grads[*x], dx)?;
                }
                Op::LeakyRelu { x, slope } => {
                    let mut dx = grad;
                    for (d, &v) in dx.data_mut().iter_mut().zip(value_of(*x).data()) {
                        if v <= 0.0 {
                            *d *= slope;
                        }
                    }
                    accumulate(&mut node_grads[*x], dx)?;
                }
                Op::Sigmoid { x } => {
                    let mut dx = grad;
                    for (d, &s) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        *d *= s * (1.0 - s);
                    }
                    accumulate(&mut node_grads[*x], dx)?;
                }
                Op::Add { a, b } => {
                    accumulate(&mut node_grads[*a], grad.clone())?;
                    accumulate(&mut node_grads[*b], grad)?;
                }
                Op::Concat { a, b } => {
                    let split = value_of(*a).len();
                    let data = grad.into_data();
                    let ga = Tensor::from_vec(value_of(*a).shape(), data[..split].to_vec())?;
                    let gb = Tensor::from_vec(value_of(*b).shape(), data[split..].to_vec())?;
                    accumulate(&mut node_grads[*a], ga)?;
                    accumulate(&mut node_grads[*b], gb)?;
                }
                Op::Upsample2x { x } => {
                    accumulate(&mut node_grads[*x], kernels::upsample2x_backward(&grad)?)?;
                }
                Op::GlobalAvgPool { x } => {
                    let (c, h, w) = value_of(*x).chw()?;
                    let n = (h * w) as f64;
                    let mut dx = Tensor::zeros(&[c, h, w]);
                    for (plane, &g) in dx.data_mut().chunks_mut(h * w).zip(grad.data()) {
                        plane.fill(g / n);
                    }
                    accumulate(&mut node_grads[*x], dx)?;
                }
                Op::Dense { x, weight, bias } => {
                    let xv = value_of(*x);
                    let w = self.params.by_id(*weight);
                    let in_dim = xv.len();
                    let mut dw = Tensor::zeros(w.shape());
                    for (row, &g) in dw.data_mut().chunks_mut(in_dim).zip(grad.data()) {
                        row.iter_mut().zip(xv.data()).for_each(|(d, &v)| *d = g * v);
                    }
                    let mut dx = Tensor::zeros(xv.shape());
                    for (row, &g) in w.data().chunks(in_dim).zip(grad.data()) {
                        dx.data_mut().iter_mut().zip(row).for_each(|(d, &wv)| *d += g * wv);
                    }
                    grads.by_id_mut(*weight).add_assign(&dw)?;
                    grads.by_id_mut(*bias).add_assign(&grad)?;
                    accumulate(&mut node_grads[*x], dx)?;
                }
                Op::ChannelScale { x, scales } => {
                    let xv = value_of(*x);
                    let sv = value_of(*scales);
                    let (_, h, w) = xv.chw()?;
                    let mut ds = Vec::with_capacity(sv.len());
                    for (gp, xp) in grad.data().chunks(h * w).zip(xv.data().chunks(h * w)) {
                        ds.push(gp.iter().zip(xp).map(|(g, v)| g * v).sum::<f64>());
                    }
                    let dx = kernels::channel_scale(&grad, sv)?;
                    accumulate(&mut node_grads[*scales], Tensor::from_vec(sv.shape(), ds)?)?;
                    accumulate(&mut node_grads[*x], dx)?;
                }
                Op::SpatialScale { x, gate } => {
                    let xv = value_of(*x);
                    let gv = value_of(*gate);
                    let (_, h, w) = xv.chw()?;
                    let mut dgate = Tensor::zeros(gv.shape());
                    for (gp, xp) in grad.data().chunks(h * w).zip(xv.data().chunks(h * w)) {
                        for ((d, g), v) in dgate.data_mut().iter_mut().zip(gp).zip(xp) {
                            *d += g * v;
                        }
                    }
                    let dx = kernels::spatial_scale(&grad, gv)?;
                    accumulate(&mut node_grads[*gate], dgate)?;
                    accumulate(&mut node_grads[*x], dx)?;
                }
            }
        }
        Ok(())
    }
}
