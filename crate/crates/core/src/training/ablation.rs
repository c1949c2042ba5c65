//! The four-row comparison: {baseline, attention} × {Dice loss, focal
//! Tversky loss}, trained on the same split with the same seed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SliceSource;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::network::AttentionUNet;
use crate::training::config::TrainConfig;
use crate::training::inference::evaluate_source;
use crate::training::trainer::train;

/// Dice / sensitivity / specificity in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub dice: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub attention_enabled: bool,
    pub loss: LossConfig,
    /// Published figures for this configuration.
    pub reference: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub rows: Vec<AblationRow>,
}

impl AblationSpec {
    pub fn standard() -> Self {
        let row = |name: &str, attention_enabled, loss, (dice, sensitivity, specificity)| AblationRow {
            name: name.into(),
            attention_enabled,
            loss,
            reference: Scores { dice, sensitivity, specificity },
        };
        Self {
            rows: vec![
                row("baseline+DL", false, LossConfig::dice(), (80.4, 75.7, 99.8)),
                row("baseline+FTL", false, LossConfig::focal_tversky(), (81.1, 78.3, 99.7)),
                row("ours+DL", true, LossConfig::dice(), (81.5, 76.7, 99.7)),
                row("ours+FTL", true, LossConfig::focal_tversky(), (83.1, 86.7, 99.3)),
            ],
        }
    }

    pub fn validate(&self, base: &TrainConfig) -> Result<()> {
        let mut problems = Vec::new();
        for r in &self.rows {
            if let Err(Error::Config(p)) = row_config(base, r).validate() {
                problems.extend(p.into_iter().map(|m| format!("{}: {m}", r.name)));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// `base` with the row's attention flag and loss.
pub fn row_config(base: &TrainConfig, row: &AblationRow) -> TrainConfig {
    let mut c = base.clone();
    c.network.attention_enabled = row.attention_enabled;
    c.loss = row.loss.clone();
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub name: String,
    pub attention_enabled: bool,
    pub loss: LossConfig,
    pub parameters: usize,
    pub reference: Scores,
    /// Scores of the best-validation checkpoint on the evaluation split.
    pub measured: Option<Scores>,
    pub epochs: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationResult>,
}

fn loss_label(l: &LossConfig) -> String {
    match l.kind.as_str() {
        "focal_tversky" => format!("FTL α={} β={} γ={:.4}", l.alpha, l.beta, l.gamma),
        other => other.to_string(),
    }
}

impl AblationReport {
    /// Plain-text table, one row per configuration, measured beside reference.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<14} {:<28} {:>10} {:>22} {:>22}\n",
            "method", "loss", "params", "measured D/Se/Sp (%)", "reference D/Se/Sp (%)"
        );
        for r in &self.rows {
            let fmt = |s: &Scores| format!("{:.1} / {:.1} / {:.1}", s.dice, s.sensitivity, s.specificity);
            let measured = match (&r.measured, &r.error) {
                (Some(s), _) => fmt(s),
                (None, Some(_)) => "failed".into(),
                (None, None) => "-".into(),
            };
            out.push_str(&format!(
                "{:<14} {:<28} {:>10} {:>22} {:>22}\n",
                r.name,
                loss_label(&r.loss),
                r.parameters,
                measured,
                fmt(&r.reference)
            ));
        }
        for r in self.rows.iter().filter(|r| r.error.is_some()) {
            out.push_str(&format!("{}: {}\n", r.name, r.error.as_deref().unwrap_or("")));
        }
        out
    }
}

/// Trains and evaluates every row. A failing row is reported in its entry
/// and does not stop the others. With `out_dir`, each row writes its run
/// files under `out_dir/<row name>`.
pub fn run_ablation(
    train_src: &dyn SliceSource,
    eval_src: &dyn SliceSource,
    base: &TrainConfig,
    spec: &AblationSpec,
    threshold: f64,
    out_dir: Option<&Path>,
) -> Result<AblationReport> {
    spec.validate(base)?;
    let mut rows = Vec::with_capacity(spec.rows.len());
    for row in &spec.rows {
        let config = row_config(base, row);
        let parameters = AttentionUNet::new(config.network.clone())?.init_params().num_scalars();
        let dir = out_dir.map(|d| d.join(&row.name));
        log::info!("ablation row {}", row.name);
        let run = train(train_src, eval_src, &config, threshold, dir.as_deref()).and_then(|outcome| {
            let net = AttentionUNet::new(config.network.clone())?;
            let source = if eval_src.is_empty() { train_src } else { eval_src };
            let report = evaluate_source(&net, &outcome.best_params, source, threshold)?;
            Ok((report, outcome.reports.len()))
        });
        let (measured, epochs, error) = match run {
            Ok((m, epochs)) => (
                Some(Scores {
                    dice: 100.0 * m.mean_dice,
                    sensitivity: 100.0 * m.mean_sensitivity,
                    specificity: 100.0 * m.mean_specificity,
                }),
                epochs,
                None,
            ),
            Err(e) => (None, 0, Some(e.to_string())),
        };
        rows.push(AblationResult {
            name: row.name.clone(),
            attention_enabled: row.attention_enabled,
            loss: row.loss.clone(),
            parameters,
            reference: row.reference,
            measured,
            epochs,
            error,
        });
    }
    Ok(AblationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_blobs;
    use crate::network::NetworkConfig;

    #[test]
    fn standard_rows() {
        let s = AblationSpec::standard();
        assert_eq!(s.rows.len(), 4);
        let ftl = &s.rows[3];
        assert_eq!((ftl.loss.alpha, ftl.loss.beta, ftl.loss.gamma), (0.7, 0.3, 4.0 / 3.0));
        assert_eq!(ftl.reference, Scores { dice: 83.1, sensitivity: 86.7, specificity: 99.3 });
        assert_eq!(s.rows.iter().filter(|r| r.attention_enabled).count(), 2);
    }

    #[test]
    fn failing_row_does_not_stop_the_rest() {
        let data = synthetic_blobs(2, 8, 0);
        let base = TrainConfig {
            max_epochs: 1,
            batch_size: 2,
            network: NetworkConfig { levels: 2, base_filters: 2, input_size: (8, 8), ..NetworkConfig::default() },
            ..TrainConfig::default()
        };
        let mut spec = AblationSpec::standard();
        spec.rows.truncate(2);
        // a 2-level network needs even sides
        let odd = vec![crate::data::SliceSample {
            image: crate::Tensor::zeros(&[7, 7]),
            mask: crate::Tensor::zeros(&[7, 7]),
            source_id: "x".into(),
            volume_index: 0,
            slice_index: 0,
        }];
        let ok = run_ablation(&data, &data, &base, &spec, 0.5, None).unwrap();
        assert!(ok.rows.iter().all(|r| r.measured.is_some()));
        let bad = run_ablation(&odd, &odd, &base, &spec, 0.5, None).unwrap();
        assert!(bad.rows.iter().all(|r| r.error.is_some()));
        assert_eq!(bad.to_table().lines().count(), 5);
        assert!(ok.rows[0].parameters < AttentionUNet::new(row_config(&base, &AblationSpec::standard().rows[2]).network)
            .unwrap()
            .init_params()
            .num_scalars());
    }
}
