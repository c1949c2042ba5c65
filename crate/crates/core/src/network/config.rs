use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slope of the leaky rectifier used after every conv + instance-norm pair.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Architecture hyperparameters of the attention U-Net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Resolution levels, including the bottleneck.
    pub levels: usize,
    /// Filters at level 0; level `i` has `base_filters * 2^i`.
    pub base_filters: usize,
    pub kernel: usize,
    /// Dilation of each convolution in a res_dil block, in order.
    pub dilation_rates: Vec<usize>,
    pub attention_enabled: bool,
    pub deep_supervision_enabled: bool,
    /// Number of decoder levels (finest first) merged by deep supervision.
    pub deep_supervision_levels: usize,
    /// Bottleneck ratio `r` of the channel-attention MLP (`C -> C/r -> C`).
    pub attention_reduction_ratio: usize,
    pub input_size: (usize, usize),
    /// Seed of the parameter initializer.
    pub init_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            levels: 5,
            base_filters: 32,
            kernel: 3,
            dilation_rates: vec![2, 4],
            attention_enabled: true,
            deep_supervision_enabled: true,
            deep_supervision_levels: 3,
            attention_reduction_ratio: 2,
            input_size: (512, 512),
            init_seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn filters_at(&self, level: usize) -> usize {
        self.base_filters << level
    }

    /// Spatial size of `level` for the configured input.
    pub fn size_at(&self, level: usize) -> (usize, usize) {
        (self.input_size.0 >> level, self.input_size.1 >> level)
    }

    /// Decoder levels feeding the deep-supervision sum (at least the top one).
    pub fn supervised_levels(&self) -> usize {
        if self.deep_supervision_enabled {
            self.deep_supervision_levels.min(self.levels - 1)
        } else {
            1
        }
    }

    /// Lists every violated constraint at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.levels < 2 {
            problems.push(format!("network.levels must be >= 2, got {}", self.levels));
        }
        if self.base_filters == 0 {
            problems.push("network.base_filters must be >= 1".to_string());
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            problems.push(format!("network.kernel must be odd, got {}", self.kernel));
        }
        if self.dilation_rates.is_empty() || self.dilation_rates.contains(&0) {
            problems.push(format!(
                "network.dilations must be a non-empty list of values >= 1, got {:?}",
                self.dilation_rates
            ));
        }
        let r = self.attention_reduction_ratio;
        if r == 0 || !self.base_filters.is_multiple_of(r) {
            problems.push(format!(
                "network.reduction_ratio {r} must divide base_filters {}",
                self.base_filters
            ));
        }
        if self.deep_supervision_enabled && self.deep_supervision_levels < 2 {
            problems.push(format!(
                "network.ds_levels must be >= 2 when deep supervision is on, got {}",
                self.deep_supervision_levels
            ));
        }
        if self.levels >= 2 && self.levels < usize::BITS as usize {
            let factor = 1usize << (self.levels - 1);
            let (h, w) = self.input_size;
            if h == 0 || w == 0 || h % factor != 0 || w % factor != 0 {
                problems.push(format!(
                    "network.input_size {h}x{w} must be divisible by 2^(levels-1) = {factor}"
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_filters_grow_from_32_to_512() {
        let c = NetworkConfig::default();
        c.validate().unwrap();
        let filters: Vec<_> = (0..c.levels).map(|l| c.filters_at(l)).collect();
        assert_eq!(filters, vec![32, 64, 128, 256, 512]);
        assert_eq!(c.size_at(4), (32, 32));
    }

    #[test]
    fn validation_collects_all_problems() {
        let c = NetworkConfig {
            levels: 1,
            kernel: 4,
            dilation_rates: vec![],
            attention_reduction_ratio: 3,
            ..NetworkConfig::default()
        };
        let Error::Config(problems) = c.validate().unwrap_err() else { panic!() };
        assert_eq!(problems.len(), 4, "{problems:?}");
    }

    #[test]
    fn input_must_survive_every_downsampling() {
        let c = NetworkConfig { input_size: (100, 100), ..NetworkConfig::default() };
        assert!(c.validate().is_err());
        let c = NetworkConfig { input_size: (64, 64), levels: 4, ..NetworkConfig::default() };
        assert!(c.validate().is_ok());
    }
}
