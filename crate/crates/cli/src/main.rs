use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};

use covseg::config::ExperimentConfig;
use covseg::data::{prepare_dataset, read_sample, DatasetManifest, SliceSource, Split, StoredSplit, VolumeSource};
use covseg::metrics::{evaluate_slice, MetricReport};
use covseg::network::receptive_field_table;
use covseg::training::{
    evaluate_source, load_model, predict_slice, read_slice_npy, run_ablation, train, write_mask_png,
    write_overlay_png, write_probability_npy, AblationSpec, TimingSummary,
};

#[derive(Parser)]
#[command(name = "covseg", version, about = "Attention U-Net for CT lesion segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set train.lr=1e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig::load(self.config.as_deref(), &self.overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Convert NIFTI volumes into a split manifest and prepared slices.
    Prepare {
        /// Source id of each volume pair (`dataset1`, `dataset2`, ...).
        #[arg(long = "source", required = true)]
        sources: Vec<String>,
        #[arg(long = "image", required = true)]
        images: Vec<PathBuf>,
        #[arg(long = "mask", required = true)]
        masks: Vec<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the manifest's train split, validating on its test split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint, or stored probability maps, on one split.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, required_unless_present = "predictions")]
        checkpoint: Option<PathBuf>,
        /// Directory of `<sample id>.npy` probability maps.
        #[arg(long, conflicts_with = "checkpoint")]
        predictions: Option<PathBuf>,
        #[arg(long, default_value = "test", value_parser = ["train", "test"])]
        split: String,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment prepared slices (`.npy`), writing probability, mask and overlay.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and score the four baseline/attention × Dice/focal Tversky rows.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Receptive field of a stack of dilated convolutions.
    Rf {
        /// Comma-separated dilation rates.
        #[arg(long, value_delimiter = ',', required = true)]
        dilations: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        kernel: usize,
    },
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

fn load_manifest(path: &Path) -> Result<(PathBuf, DatasetManifest)> {
    let manifest = DatasetManifest::load(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((root, manifest))
}

fn parse_split(s: &str) -> Split {
    if s == "train" {
        Split::Train
    } else {
        Split::Test
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "slice".into())
}

fn cmd_prepare(sources: Vec<String>, images: Vec<PathBuf>, masks: Vec<PathBuf>, config: ConfigArgs, out: PathBuf) -> Result<()> {
    ensure!(
        sources.len() == images.len() && images.len() == masks.len(),
        "need one --source, --image and --mask per volume, got {}, {} and {}",
        sources.len(),
        images.len(),
        masks.len()
    );
    let config = config.load()?;
    create_dir(&out)?;
    let volumes: Vec<VolumeSource> = sources
        .into_iter()
        .zip(images)
        .zip(masks)
        .map(|((source_id, image), mask)| VolumeSource { source_id, image, mask })
        .collect();
    let (_, summary) = prepare_dataset(&volumes, &config.data, &out)?;
    write(&out.join("config.kv"), config.to_kv())?;
    println!("{summary}");
    Ok(())
}

fn cmd_train(manifest: PathBuf, config: ConfigArgs, out: PathBuf) -> Result<()> {
    let config = config.load()?;
    let (root, manifest) = load_manifest(&manifest)?;
    let train_split = StoredSplit::new(&root, &manifest, Split::Train);
    let test_split = StoredSplit::new(&root, &manifest, Split::Test);
    create_dir(&out)?;
    write(&out.join("config.kv"), config.to_kv())?;
    let outcome = train(&train_split, &test_split, &config.train, config.threshold, Some(&out))?;
    let last = outcome.reports.last().context("no epoch ran")?;
    println!(
        "{} epochs ({:?}); best val loss {:.5} at epoch {}; final val dice {:.4}",
        outcome.reports.len(),
        outcome.stop_reason,
        outcome.best_val_loss,
        outcome.best_epoch,
        last.val_dice
    );
    println!("checkpoints in {}", out.display());
    Ok(())
}

fn cmd_evaluate(
    manifest: PathBuf,
    checkpoint: Option<PathBuf>,
    predictions: Option<PathBuf>,
    split: String,
    config: ConfigArgs,
    out: PathBuf,
) -> Result<()> {
    let config = config.load()?;
    let (root, manifest) = load_manifest(&manifest)?;
    let source = StoredSplit::new(&root, &manifest, parse_split(&split));
    ensure!(!source.is_empty(), "the {split} split is empty");
    let report = match (checkpoint, predictions) {
        (Some(ckpt), _) => {
            let (net, params) = load_model(&ckpt)?;
            evaluate_source(&net, &params, &source, config.threshold)?
        }
        (None, Some(dir)) => {
            let mut rows = Vec::with_capacity(source.len());
            for meta in source.refs() {
                let sample = read_sample(&root.join(&meta.file), meta)?;
                let prob = read_slice_npy(&dir.join(format!("{}.npy", meta.id())))?;
                rows.push((meta.id(), evaluate_slice(prob.data(), sample.mask.data(), config.threshold)?));
            }
            MetricReport::from_slices(rows)
        }
        (None, None) => bail!("pass --checkpoint or --predictions"),
    };
    create_dir(&out)?;
    let table = report.to_table();
    write(&out.join("metrics.txt"), &table)?;
    write_json(&out.join("metrics.json"), &report)?;
    print!("{table}");
    Ok(())
}

fn cmd_predict(checkpoint: PathBuf, inputs: Vec<PathBuf>, config: ConfigArgs, out: PathBuf) -> Result<()> {
    let config = config.load()?;
    let (net, params) = load_model(&checkpoint)?;
    create_dir(&out)?;
    let mut seconds = Vec::with_capacity(inputs.len());
    for input in &inputs {
        let image = read_slice_npy(input)?;
        let p = predict_slice(&net, &params, &image, config.threshold).with_context(|| input.display().to_string())?;
        let name = stem(input);
        write_probability_npy(&out.join(format!("{name}_prob.npy")), &p.probabilities)?;
        write_mask_png(&out.join(format!("{name}_mask.png")), &p.mask)?;
        write_overlay_png(&out.join(format!("{name}_overlay.png")), &image, &p.mask)?;
        println!("{name}: {} lesion pixels, {:.3} s", p.mask.data().iter().filter(|&&v| v > 0.0).count(), p.seconds);
        seconds.push(p.seconds);
    }
    let timing = TimingSummary::from_seconds(&seconds);
    write_json(&out.join("timing.json"), &timing)?;
    println!(
        "mean {:.3} s per slice over {} slices (single process, {} threads available)",
        timing.mean_seconds,
        timing.slices,
        std::thread::available_parallelism().map_or(1, |n| n.get())
    );
    Ok(())
}

fn cmd_ablate(manifest: PathBuf, config: ConfigArgs, out: PathBuf) -> Result<()> {
    let config = config.load()?;
    let (root, manifest) = load_manifest(&manifest)?;
    let train_split = StoredSplit::new(&root, &manifest, Split::Train);
    let test_split = StoredSplit::new(&root, &manifest, Split::Test);
    create_dir(&out)?;
    write(&out.join("config.kv"), config.to_kv())?;
    let report = run_ablation(
        &train_split,
        &test_split,
        &config.train,
        &AblationSpec::standard(),
        config.threshold,
        Some(&out),
    )?;
    let table = report.to_table();
    write(&out.join("ablation.txt"), &table)?;
    write_json(&out.join("ablation.json"), &report)?;
    print!("{table}");
    if report.rows.iter().any(|r| r.error.is_some()) {
        bail!("some ablation rows failed");
    }
    Ok(())
}

fn cmd_rf(dilations: Vec<usize>, kernel: usize) -> Result<()> {
    let table = receptive_field_table(&dilations, kernel)?;
    println!("{:>5} {:>8} {:>11} {:>10}", "layer", "dilation", "kernel span", "receptive");
    for l in &table {
        println!("{:>5} {:>8} {:>11} {:>10}", l.layer, l.dilation, l.kernel_span, l.cumulative);
    }
    let side = table.last().map_or(1, |l| l.cumulative);
    println!("receptive field: {side}x{side}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { sources, images, masks, config, out } => cmd_prepare(sources, images, masks, config, out),
        Command::Train { manifest, config, out } => cmd_train(manifest, config, out),
        Command::Evaluate { manifest, checkpoint, predictions, split, config, out } => {
            cmd_evaluate(manifest, checkpoint, predictions, split, config, out)
        }
        Command::Predict { checkpoint, inputs, config, out } => cmd_predict(checkpoint, inputs, config, out),
        Command::Ablate { manifest, config, out } => cmd_ablate(manifest, config, out),
        Command::Rf { dilations, kernel } => cmd_rf(dilations, kernel),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
