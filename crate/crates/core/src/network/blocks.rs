//! Convolutional building blocks: conv + instance norm + activation, and the
//! residual block with dilated convolutions.
//!
//! Convolutions that feed an instance normalization carry no bias; the
//! normalization would cancel it.

use crate::error::{Error, Result};
use crate::network::config::LEAKY_SLOPE;
use crate::nn::{Graph, Var};

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Normal with standard deviation `sqrt(2 / fan_in)`.
    HeNormal { fan_in: usize },
    Ones,
    Zeros,
}

/// Shape and initializer of one named parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub path: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    fn new(path: String, shape: Vec<usize>, init: Init) -> Self {
        Self { path, shape, init }
    }
}

fn conv_weight(path: String, cout: usize, cin: usize, k: usize) -> ParamSpec {
    ParamSpec::new(path, vec![cout, cin, k, k], Init::HeNormal { fan_in: cin * k * k })
}

fn norm_params(prefix: &str, channels: usize) -> [ParamSpec; 2] {
    [
        ParamSpec::new(format!("{prefix}.scale"), vec![channels], Init::Ones),
        ParamSpec::new(format!("{prefix}.shift"), vec![channels], Init::Zeros),
    ]
}

/// Parameters of [`conv_block`] under `prefix`.
pub fn conv_block_params(prefix: &str, cin: usize, cout: usize, kernel: usize) -> Vec<ParamSpec> {
    let mut specs = vec![conv_weight(format!("{prefix}.conv.weight"), cout, cin, kernel)];
    specs.extend(norm_params(&format!("{prefix}.norm"), cout));
    specs
}

/// Parameters of [`res_dil_block`] under `prefix`, one conv per dilation.
pub fn res_dil_params(
    prefix: &str,
    channels: usize,
    kernel: usize,
    dilations: &[usize],
) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    for j in 1..=dilations.len() {
        specs.push(conv_weight(format!("{prefix}.conv{j}.weight"), channels, channels, kernel));
        specs.extend(norm_params(&format!("{prefix}.norm{j}"), channels));
    }
    specs
}

fn conv_norm_act(
    g: &mut Graph,
    x: &Var,
    conv: &str,
    norm: &str,
    stride: usize,
    dilation: usize,
) -> Result<Var> {
    let w = g.param(&format!("{conv}.weight"))?;
    let scale = g.param(&format!("{norm}.scale"))?;
    let shift = g.param(&format!("{norm}.shift"))?;
    let y = g.conv2d(x, w, None, stride, dilation)?;
    let y = g.instance_norm(&y, scale, shift)?;
    Ok(g.leaky_relu(&y, LEAKY_SLOPE))
}

/// Convolution, instance normalization and leaky rectifier. `stride = 2`
/// halves the spatial size and replaces pooling between levels.
pub fn conv_block(g: &mut Graph, x: &Var, prefix: &str, stride: usize) -> Result<Var> {
    conv_norm_act(g, x, &format!("{prefix}.conv"), &format!("{prefix}.norm"), stride, 1)
}

/// Residual block: `x + act(IN(conv_dN(... act(IN(conv_d1(x))) ...)))`.
/// Spatial size and channel count are preserved.
pub fn res_dil_block(g: &mut Graph, x: &Var, prefix: &str, dilations: &[usize]) -> Result<Var> {
    let (c, _, _) = x.value().chw()?;
    let mut y = x.clone();
    for (j, &d) in dilations.iter().enumerate() {
        let conv = format!("{prefix}.conv{}", j + 1);
        let wshape = g.params().by_id(g.param(&format!("{conv}.weight"))?).shape();
        if wshape[0] != c || wshape[1] != c {
            return Err(Error::Shape(format!(
                "res_dil block `{prefix}` expects {} channels, input has {c}",
                wshape[1]
            )));
        }
        y = conv_norm_act(g, &y, &conv, &format!("{prefix}.norm{}", j + 1), 1, d)?;
    }
    g.add(&y, x)
}
