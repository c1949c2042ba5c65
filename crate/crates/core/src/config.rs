//! Flat `key = value` experiment configuration with dotted namespaces.
//!
//! ```text
//! # comment
//! network.levels = 4
//! network.dilations = 2,4
//! loss.kind = focal_tversky
//! train.lr = 5e-5
//! ```
//!
//! Unknown keys, unparsable values and range violations are collected and
//! reported together.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DataConfig;
use crate::error::{Error, Result};
use crate::losses::loss_registry;
use crate::metrics::DEFAULT_THRESHOLD;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    /// Binarization threshold of evaluation and prediction.
    pub threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { data: DataConfig::default(), train: TrainConfig::default(), threshold: DEFAULT_THRESHOLD }
    }
}

/// Every accepted key, in the order `to_kv` writes them.
pub const KEYS: &[&str] = &[
    "network.levels",
    "network.base_filters",
    "network.kernel",
    "network.dilations",
    "network.attention",
    "network.deep_supervision",
    "network.deep_supervision_levels",
    "network.reduction_ratio",
    "network.input_size",
    "network.init_seed",
    "loss.kind",
    "loss.alpha",
    "loss.beta",
    "loss.gamma",
    "loss.epsilon",
    "train.lr",
    "train.lr_factor",
    "train.lr_patience",
    "train.early_stop_patience",
    "train.max_epochs",
    "train.batch_size",
    "train.seed",
    "train.min_delta",
    "train.adam_beta1",
    "train.adam_beta2",
    "train.adam_eps",
    "train.target_dice",
    "data.size",
    "data.seed",
    "data.image_kernel",
    "data.mask_kernel",
    "data.annotated_only",
    "eval.threshold",
];

fn parse<T: FromStr>(key: &str, value: &str, problems: &mut Vec<String>) -> Option<T>
where
    T::Err: std::fmt::Display,
{
    match value.parse::<T>() {
        Ok(v) => Some(v),
        Err(e) => {
            problems.push(format!("{key}: cannot parse `{value}`: {e}"));
            None
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str, problems: &mut Vec<String>) -> Option<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let parsed: Vec<Option<T>> = items.iter().map(|s| parse(key, s, problems)).collect();
    parsed.into_iter().collect()
}

fn parse_size(key: &str, value: &str, problems: &mut Vec<String>) -> Option<(usize, usize)> {
    let parts: Vec<&str> = value.split(['x', ',']).map(str::trim).collect();
    match parts.as_slice() {
        [h, w] => Some((parse(key, h, problems)?, parse(key, w, problems)?)),
        _ => {
            problems.push(format!("{key}: expected HxW, got `{value}`"));
            None
        }
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment, pushing any problem found.
    fn set(&mut self, key: &str, value: &str, problems: &mut Vec<String>) {
        macro_rules! put {
            ($field:expr) => {
                if let Some(v) = parse(key, value, problems) {
                    $field = v;
                }
            };
        }
        match key {
            "network.levels" => put!(self.train.network.levels),
            "network.base_filters" => put!(self.train.network.base_filters),
            "network.kernel" => put!(self.train.network.kernel),
            "network.dilations" => {
                if let Some(v) = parse_list(key, value, problems) {
                    self.train.network.dilation_rates = v;
                }
            }
            "network.attention" => put!(self.train.network.attention_enabled),
            "network.deep_supervision" => put!(self.train.network.deep_supervision_enabled),
            "network.deep_supervision_levels" => put!(self.train.network.deep_supervision_levels),
            "network.reduction_ratio" => put!(self.train.network.attention_reduction_ratio),
            "network.input_size" => {
                if let Some(v) = parse_size(key, value, problems) {
                    self.train.network.input_size = v;
                }
            }
            "network.init_seed" => put!(self.train.network.init_seed),
            "loss.kind" => self.train.loss.kind = value.to_string(),
            "loss.alpha" => put!(self.train.loss.alpha),
            "loss.beta" => put!(self.train.loss.beta),
            "loss.gamma" => put!(self.train.loss.gamma),
            "loss.epsilon" => put!(self.train.loss.epsilon),
            "train.lr" => put!(self.train.initial_lr),
            "train.lr_factor" => put!(self.train.lr_factor),
            "train.lr_patience" => put!(self.train.lr_patience),
            "train.early_stop_patience" => put!(self.train.early_stop_patience),
            "train.max_epochs" => put!(self.train.max_epochs),
            "train.batch_size" => put!(self.train.batch_size),
            "train.seed" => put!(self.train.seed),
            "train.min_delta" => put!(self.train.min_delta),
            "train.adam_beta1" => put!(self.train.adam.beta1),
            "train.adam_beta2" => put!(self.train.adam.beta2),
            "train.adam_eps" => put!(self.train.adam.eps),
            "train.target_dice" => {
                self.train.target_dice = if value == "none" { None } else { parse(key, value, problems) };
            }
            "data.size" => put!(self.data.size),
            "data.seed" => put!(self.data.seed),
            "data.image_kernel" => self.data.image_kernel = value.to_string(),
            "data.mask_kernel" => self.data.mask_kernel = value.to_string(),
            "data.annotated_only" => {
                self.data.annotated_only =
                    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
            }
            "eval.threshold" => put!(self.threshold),
            _ => problems.push(format!("unknown key `{key}`")),
        }
    }

    /// Applies numbered `key = value` lines; returns the problems found.
    fn apply_lines<'a>(&mut self, lines: impl IntoIterator<Item = (usize, &'a str)>, origin: &str) -> Vec<String> {
        let mut problems = Vec::new();
        for (line_no, raw) in lines {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    let mut p = Vec::new();
                    self.set(k.trim(), v.trim(), &mut p);
                    problems.extend(p.into_iter().map(|m| format!("{origin}:{line_no}: {m}")));
                }
                None => problems.push(format!("{origin}:{line_no}: expected key = value, got `{line}`")),
            }
        }
        problems
    }

    fn finish(self, mut problems: Vec<String>) -> Result<Self> {
        if let Err(Error::Config(p)) = self.validate() {
            problems.extend(p);
        }
        if problems.is_empty() {
            Ok(self)
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn from_kv(text: &str, origin: &str) -> Result<Self> {
        let mut c = Self::default();
        let problems = c.apply_lines(text.lines().enumerate().map(|(i, l)| (i + 1, l)), origin);
        c.finish(problems)
    }

    /// Reads `path` (if given), applies `overrides` on top and validates the
    /// result; every problem is reported in one error.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut c = Self::default();
        let mut problems = Vec::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let origin = path.display().to_string();
            problems.extend(c.apply_lines(text.lines().enumerate().map(|(i, l)| (i + 1, l)), &origin));
        }
        problems.extend(c.apply_lines(overrides.iter().enumerate().map(|(i, l)| (i + 1, l.as_str())), "--set"));
        c.finish(problems)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for r in [self.train.validate(), self.data.validate()] {
            if let Err(Error::Config(p)) = r {
                problems.extend(p);
            }
        }
        if !loss_registry().contains(&self.train.loss.kind) {
            problems.push(format!(
                "loss.kind: unknown loss `{}` (available: {})",
                self.train.loss.kind,
                loss_registry().names().collect::<Vec<_>>().join(", ")
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            problems.push(format!("eval.threshold must lie in (0, 1), got {}", self.threshold));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// The effective configuration in the same `key = value` format.
    pub fn to_kv(&self) -> String {
        let n = &self.train.network;
        let l = &self.train.loss;
        let t = &self.train;
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let values: Vec<String> = vec![
            n.levels.to_string(),
            n.base_filters.to_string(),
            n.kernel.to_string(),
            join(&n.dilation_rates),
            n.attention_enabled.to_string(),
            n.deep_supervision_enabled.to_string(),
            n.deep_supervision_levels.to_string(),
            n.attention_reduction_ratio.to_string(),
            format!("{}x{}", n.input_size.0, n.input_size.1),
            n.init_seed.to_string(),
            l.kind.clone(),
            l.alpha.to_string(),
            l.beta.to_string(),
            l.gamma.to_string(),
            l.epsilon.to_string(),
            t.initial_lr.to_string(),
            t.lr_factor.to_string(),
            t.lr_patience.to_string(),
            t.early_stop_patience.to_string(),
            t.max_epochs.to_string(),
            t.batch_size.to_string(),
            t.seed.to_string(),
            t.min_delta.to_string(),
            t.adam.beta1.to_string(),
            t.adam.beta2.to_string(),
            t.adam.eps.to_string(),
            t.target_dice.map_or("none".into(), |d| d.to_string()),
            self.data.size.to_string(),
            self.data.seed.to_string(),
            self.data.image_kernel.clone(),
            self.data.mask_kernel.clone(),
            self.data.annotated_only.join(","),
            self.threshold.to_string(),
        ];
        KEYS.iter().zip(values).map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let c = ExperimentConfig::default();
        let text = c.to_kv();
        assert_eq!(text.lines().count(), KEYS.len());
        assert_eq!(ExperimentConfig::from_kv(&text, "t").unwrap(), c);
    }

    #[test]
    fn parses_every_kind_of_value() {
        let text = "
            # desk run
            network.levels = 3
            network.dilations = 1, 2, 4
            network.attention = false
            network.input_size = 64x64
            loss.kind = dice
            train.lr = 1e-3   # faster
            train.target_dice = 0.9
            data.annotated_only =
        ";
        let c = ExperimentConfig::from_kv(text, "t").unwrap();
        assert_eq!(c.train.network.levels, 3);
        assert_eq!(c.train.network.dilation_rates, vec![1, 2, 4]);
        assert!(!c.train.network.attention_enabled);
        assert_eq!(c.train.network.input_size, (64, 64));
        assert_eq!(c.train.loss.kind, "dice");
        assert_eq!(c.train.initial_lr, 1e-3);
        assert_eq!(c.train.target_dice, Some(0.9));
        assert!(c.data.annotated_only.is_empty());
    }

    #[test]
    fn reports_all_problems_at_once() {
        let text = "network.levels = 1\nbogus.key = 3\ntrain.lr = fast\nloss.kind = hinge\nno equals sign";
        let Error::Config(p) = ExperimentConfig::from_kv(text, "cfg").unwrap_err() else { panic!() };
        let joined = p.join("\n");
        for needle in ["network.levels", "unknown key `bogus.key`", "train.lr", "hinge", "cfg:5"] {
            assert!(joined.contains(needle), "missing {needle} in\n{joined}");
        }
    }

    #[test]
    fn overrides_apply_after_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.cfg");
        std::fs::write(&p, "train.max_epochs = 7\n").unwrap();
        let c = ExperimentConfig::load(Some(&p), &["train.max_epochs=9".into(), "train.seed=3".into()]).unwrap();
        assert_eq!((c.train.max_epochs, c.train.seed), (9, 3));
        assert!(ExperimentConfig::load(None, &["nope=1".into()]).is_err());
    }
}
