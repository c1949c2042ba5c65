use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::attention::{attention_params, scse_fuse};
use crate::network::blocks::{
    conv_block, conv_block_params, res_dil_block, res_dil_params, Init, ParamSpec,
};
use crate::network::config::NetworkConfig;
use crate::nn::{Graph, Var};
use crate::params::ParameterSet;
use crate::tensor::Tensor;

/// Draws every parameter of `specs` in order from a seeded generator.
pub fn materialize(specs: &[ParamSpec], seed: u64) -> ParameterSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::new();
    for spec in specs {
        let t = match spec.init {
            Init::HeNormal { fan_in } => {
                Tensor::randn(&spec.shape, (2.0 / fan_in as f64).sqrt(), &mut rng)
            }
            Init::Ones => Tensor::full(&spec.shape, 1.0),
            Init::Zeros => Tensor::zeros(&spec.shape),
        };
        params
            .insert(spec.path.clone(), t)
            .expect("parameter layouts never repeat a path");
    }
    params
}

/// Outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct NetworkOutput {
    /// Lesion probability, `[1, H, W]`, strictly inside (0, 1).
    pub probabilities: Var,
    /// Pre-sigmoid map the probabilities come from.
    pub logits: Var,
    /// One-channel segmentation maps of the supervised decoder levels,
    /// coarsest first.
    pub level_logits: Vec<Var>,
}

/// Sums multi-level segmentation maps: starting from the coarsest, the running
/// sum is upsampled ×2 and added to the next finer map.
pub fn deep_supervision_aggregate(g: &mut Graph, level_logits: &[Var]) -> Result<Var> {
    if level_logits.len() < 2 {
        return Err(Error::Shape(format!(
            "deep supervision needs at least 2 decoder levels, got {}",
            level_logits.len()
        )));
    }
    let mut acc = level_logits[0].clone();
    for next in &level_logits[1..] {
        let (c, h, w) = acc.value().chw()?;
        if c != 1 || next.shape() != [1, 2 * h, 2 * w] {
            return Err(Error::Shape(format!(
                "deep supervision level {:?} does not double the previous {:?}",
                next.shape(),
                acc.shape()
            )));
        }
        let up = g.upsample2x(&acc)?;
        acc = g.add(&up, next)?;
    }
    Ok(acc)
}

/// U-Net with res_dil blocks, optional scSE attention after every res_dil
/// block and optional deep supervision.
#[derive(Debug, Clone)]
pub struct AttentionUNet {
    config: NetworkConfig,
}

impl AttentionUNet {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Every learnable parameter, in a fixed order.
    pub fn parameter_layout(&self) -> Vec<ParamSpec> {
        let c = &self.config;
        let k = c.kernel;
        let dil = &c.dilation_rates;
        let mut specs = Vec::new();
        for level in 0..c.levels {
            let f = c.filters_at(level);
            if level == 0 {
                specs.extend(conv_block_params("enc0.conv", 1, f, k));
            } else {
                specs.extend(conv_block_params(
                    &format!("enc{level}.down"),
                    c.filters_at(level - 1),
                    f,
                    k,
                ));
            }
            specs.extend(res_dil_params(&format!("enc{level}.res"), f, k, dil));
            if c.attention_enabled {
                specs.extend(attention_params(
                    &format!("enc{level}.att"),
                    f,
                    c.attention_reduction_ratio,
                ));
            }
        }
        for level in (0..c.levels - 1).rev() {
            let f = c.filters_at(level);
            specs.extend(conv_block_params(&format!("dec{level}.up"), c.filters_at(level + 1), f, k));
            specs.extend(conv_block_params(&format!("dec{level}.fuse"), 2 * f, f, k));
            specs.extend(res_dil_params(&format!("dec{level}.res"), f, k, dil));
            if c.attention_enabled {
                specs.extend(attention_params(
                    &format!("dec{level}.att"),
                    f,
                    c.attention_reduction_ratio,
                ));
            }
        }
        for level in (0..c.supervised_levels()).rev() {
            let f = c.filters_at(level);
            specs.push(ParamSpec {
                path: format!("ds{level}.head.weight"),
                shape: vec![1, f, 1, 1],
                init: Init::HeNormal { fan_in: f },
            });
            specs.push(ParamSpec {
                path: format!("ds{level}.head.bias"),
                shape: vec![1],
                init: Init::Zeros,
            });
        }
        specs
    }

    /// Fresh parameters drawn with `config.init_seed`.
    pub fn init_params(&self) -> ParameterSet {
        materialize(&self.parameter_layout(), self.config.init_seed)
    }

    /// Checks that `params` has exactly this network's layout.
    pub fn check_params(&self, params: &ParameterSet) -> Result<()> {
        let mut expected = ParameterSet::new();
        for spec in self.parameter_layout() {
            expected.insert(spec.path, Tensor::zeros(&spec.shape))?;
        }
        expected.ensure_same_layout(params)
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let (c, h, w) = image.chw()?;
        let factor = 1usize << (self.config.levels - 1);
        if c != 1 || h == 0 || w == 0 || h % factor != 0 || w % factor != 0 {
            return Err(Error::Shape(format!(
                "network input must be [1, H, W] with H, W divisible by {factor}, got {:?}",
                image.shape()
            )));
        }
        if !image.is_finite() {
            return Err(Error::NonFinite("network input contains NaN or infinity".into()));
        }
        Ok(())
    }

    fn head(&self, g: &mut Graph, x: &Var, level: usize) -> Result<Var> {
        let w = g.param(&format!("ds{level}.head.weight"))?;
        let b = g.param(&format!("ds{level}.head.bias"))?;
        g.conv2d(x, w, Some(b), 1, 1)
    }

    /// Runs the network on a `[1, H, W]` image inside `g`.
    pub fn forward(&self, g: &mut Graph, image: &Var) -> Result<NetworkOutput> {
        self.check_input(image.value())?;
        let c = &self.config;
        let dil = &c.dilation_rates;

        let mut skips = Vec::with_capacity(c.levels);
        let mut x = image.clone();
        for level in 0..c.levels {
            x = if level == 0 {
                conv_block(g, &x, "enc0.conv", 1)?
            } else {
                conv_block(g, &x, &format!("enc{level}.down"), 2)?
            };
            x = res_dil_block(g, &x, &format!("enc{level}.res"), dil)?;
            if c.attention_enabled {
                x = scse_fuse(g, &x, &format!("enc{level}.att"))?;
            }
            skips.push(x.clone());
        }

        let supervised = c.supervised_levels();
        let mut y = skips.pop().expect("at least two levels");
        let mut level_logits = Vec::with_capacity(supervised);
        for level in (0..c.levels - 1).rev() {
            let up = g.upsample2x(&y)?;
            let up = conv_block(g, &up, &format!("dec{level}.up"), 1)?;
            let skip = skips.pop().expect("one skip per encoder level");
            let merged = g.concat(&skip, &up)?;
            drop(skip);
            y = conv_block(g, &merged, &format!("dec{level}.fuse"), 1)?;
            y = res_dil_block(g, &y, &format!("dec{level}.res"), dil)?;
            if c.attention_enabled {
                y = scse_fuse(g, &y, &format!("dec{level}.att"))?;
            }
            if level < supervised {
                level_logits.push(self.head(g, &y, level)?);
            }
        }

        let logits = if level_logits.len() >= 2 {
            deep_supervision_aggregate(g, &level_logits)?
        } else {
            level_logits[0].clone()
        };
        let probabilities = g.sigmoid(&logits);
        Ok(NetworkOutput { probabilities, logits, level_logits })
    }

    /// Forward pass without recording; returns the `[1, H, W]` probability map.
    pub fn predict(&self, params: &ParameterSet, image: &Tensor) -> Result<Tensor> {
        let mut g = Graph::inference(params);
        let x = g.input(image.clone());
        let out = self.forward(&mut g, &x)?;
        Ok(out.probabilities.value().clone())
    }
}
