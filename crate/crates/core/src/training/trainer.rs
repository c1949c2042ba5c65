use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{SliceSample, SliceSource};
use crate::error::{Error, Result};
use crate::losses::{build_loss, SegmentationLoss};
use crate::metrics::{evaluate_slice, MetricReport};
use crate::network::{save_checkpoint, AttentionUNet};
use crate::nn::Graph;
use crate::params::ParameterSet;
use crate::tensor::Tensor;
use crate::training::adam::Adam;
use crate::training::config::TrainConfig;
use crate::training::schedule::{early_stopping_check, lr_schedule_step, StopDecision, TrainState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    /// 0-based.
    pub epoch: usize,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_dice: f64,
    pub val_sensitivity: f64,
    pub val_specificity: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
    TargetDice,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last epoch.
    pub params: ParameterSet,
    /// Parameters of the epoch with the lowest validation loss.
    pub best_params: ParameterSet,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub reports: Vec<EpochReport>,
    pub state: TrainState,
    pub stop_reason: StopReason,
}

/// Validation loss and metrics of `params` over `source`.
pub fn validate(
    net: &AttentionUNet,
    params: &ParameterSet,
    source: &dyn SliceSource,
    loss: &dyn SegmentationLoss,
    threshold: f64,
) -> Result<(f64, MetricReport)> {
    let mut total = 0.0;
    let mut rows = Vec::with_capacity(source.len());
    for i in 0..source.len() {
        let s = source.load(i)?;
        let prob = net.predict(params, &s.input())?;
        total += loss.loss(prob.data(), s.mask.data())?;
        rows.push((s.id(), evaluate_slice(prob.data(), s.mask.data(), threshold)?));
    }
    Ok((total / source.len().max(1) as f64, MetricReport::from_slices(rows)))
}

/// Accumulates the gradient of the mean per-slice loss over `batch` into
/// `grads`; returns that mean loss.
pub fn batch_gradient(
    net: &AttentionUNet,
    params: &ParameterSet,
    batch: &[SliceSample],
    loss: &dyn SegmentationLoss,
    grads: &mut ParameterSet,
) -> Result<f64> {
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for s in batch {
        let mut g = Graph::recording(params);
        let x = g.input(s.input());
        let out = net.forward(&mut g, &x)?;
        let prob = out.probabilities.value();
        let (l, dl) = loss.loss_and_grad(prob.data(), s.mask.data())?;
        if !l.is_finite() {
            return Err(Error::NonFinite(format!("loss on {} is {l}", s.id())));
        }
        total += l;
        let seed = Tensor::from_vec(prob.shape(), dl.into_iter().map(|d| d * scale).collect())?;
        g.backward(&out.probabilities, seed, grads)?;
    }
    Ok(total * scale)
}

struct RunFiles<'a> {
    dir: &'a Path,
    log: File,
}

impl<'a> RunFiles<'a> {
    fn create(dir: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("epochs.jsonl");
        let log = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self { dir, log })
    }

    fn append(&mut self, report: &EpochReport) -> Result<()> {
        let line = serde_json::to_string(report)?;
        writeln!(self.log, "{line}").map_err(|e| Error::io(self.dir.join("epochs.jsonl"), e))
    }

    fn write_state(&self, name: &str, state: &TrainState) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(state)? + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// Trains from `config.network`'s seeded initialization.
///
/// Validation runs on `val` after every epoch (on `train` when `val` is
/// empty). With `out_dir`, writes `epochs.jsonl`, `best.safetensors`,
/// `final.safetensors` and `state.json`; a non-finite loss or gradient aborts
/// the run after writing `aborted.safetensors` and `aborted_state.json`.
pub fn train(
    train: &dyn SliceSource,
    val: &dyn SliceSource,
    config: &TrainConfig,
    threshold: f64,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training split is empty".into()));
    }
    let val = if val.is_empty() {
        log::warn!("validation split is empty; validating on the training split");
        train
    } else {
        val
    };
    let net = AttentionUNet::new(config.network.clone())?;
    let loss = build_loss(&config.loss)?;
    let mut params = net.init_params();
    train_from(&net, &mut params, train, val, loss.as_ref(), config, threshold, out_dir)
}

#[allow(clippy::too_many_arguments)]
fn train_from(
    net: &AttentionUNet,
    params: &mut ParameterSet,
    train: &dyn SliceSource,
    val: &dyn SliceSource,
    loss: &dyn SegmentationLoss,
    config: &TrainConfig,
    threshold: f64,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut files = out_dir.map(RunFiles::create).transpose()?;
    let mut adam = Adam::new(params, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = TrainState::new(config);
    let mut reports = Vec::new();
    let mut best = (params.clone(), 0usize, f64::INFINITY);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<SliceSample> = chunk.iter().map(|&i| train.load(i)).collect::<Result<_>>()?;
            let mut grads = params.zeros_like();
            let step = batch_gradient(net, params, &batch, loss, &mut grads).and_then(|l| {
                if grads.is_finite() {
                    Ok(l)
                } else {
                    Err(Error::NonFinite("gradient".into()))
                }
            });
            let batch_loss = match step {
                Ok(l) => l,
                Err(e @ (Error::NonFinite(_) | Error::InvalidInput(_))) => {
                    if let Some(f) = &files {
                        save_checkpoint(&f.dir.join("aborted.safetensors"), net.config(), params)?;
                        f.write_state("aborted_state.json", &state)?;
                    }
                    return Err(Error::TrainingAborted { epoch, reason: e.to_string() });
                }
                Err(e) => return Err(e),
            };
            epoch_loss += batch_loss * batch.len() as f64;
            adam.step(params, &grads, state.current_lr)?;
        }
        let train_loss = epoch_loss / train.len() as f64;

        let (val_loss, metrics) = validate(net, params, val, loss, threshold)?;
        if !val_loss.is_finite() {
            if let Some(f) = &files {
                save_checkpoint(&f.dir.join("aborted.safetensors"), net.config(), params)?;
                f.write_state("aborted_state.json", &state)?;
            }
            return Err(Error::TrainingAborted { epoch, reason: format!("validation loss is {val_loss}") });
        }
        let report = EpochReport {
            epoch,
            lr: state.current_lr,
            train_loss,
            val_loss,
            val_dice: metrics.mean_dice,
            val_sensitivity: metrics.mean_sensitivity,
            val_specificity: metrics.mean_specificity,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: lr {:.3e} train {train_loss:.5} val {val_loss:.5} dice {:.4}",
            report.lr,
            report.val_dice
        );
        if let Some(f) = &mut files {
            f.append(&report)?;
        }
        reports.push(report);

        if val_loss < best.2 {
            best = (params.clone(), epoch, val_loss);
            if let Some(f) = &files {
                let path = f.dir.join("best.safetensors");
                save_checkpoint(&path, net.config(), params)?;
                state.checkpoint = Some(path.display().to_string());
            }
        }
        state = lr_schedule_step(&state, val_loss, config);

        if config.target_dice.is_some_and(|t| metrics.mean_dice >= t) {
            stop_reason = StopReason::TargetDice;
            break;
        }
        if early_stopping_check(&state, config) == StopDecision::Stop {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }

    if let Some(f) = &files {
        save_checkpoint(&f.dir.join("final.safetensors"), net.config(), params)?;
        f.write_state("state.json", &state)?;
    }
    let (best_params, best_epoch, best_val_loss) = best;
    Ok(TrainOutcome { params: params.clone(), best_params, best_epoch, best_val_loss, reports, state, stop_reason })
}
