use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use log::info;
use transdon::pipeline::{
    read_dataset, save_checkpoint, train, Precision, TrainConfig, TrainOutcome,
};
use transdon::Real;

use crate::manifest::RunManifest;
use crate::util::{create_dir, read_json, write_json, write_text};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "desk", value_parser = ["paper", "desk"])]
    pub preset: String,
    /// JSON training configuration; replaces the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed_split: Option<u64>,
    #[arg(long)]
    pub seed_init: Option<u64>,
    #[arg(long)]
    pub split_ratio: Option<f64>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub precision: Option<Precision>,
    #[arg(long)]
    pub out: PathBuf,
}

impl TrainArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(path) => read_json::<TrainConfig>(path)?,
            None => TrainConfig::preset(&self.preset)?,
        };
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.seed_split {
            c.split_seed = v;
        }
        if let Some(v) = self.seed_init {
            c.init_seed = v;
        }
        if let Some(v) = self.split_ratio {
            c.split_ratio = v;
        }
        if let Some(v) = self.eval_interval {
            c.eval_interval = v;
        }
        if let Some(v) = self.precision {
            c.precision = v;
        }
        c.validate()?;
        Ok(c)
    }
}

pub const CHECKPOINT_NAME: &str = "checkpoint.bin";

fn write_outputs<T: Real>(out: &Path, config: &TrainConfig, o: &TrainOutcome<T>) -> Result<()> {
    save_checkpoint(&out.join(CHECKPOINT_NAME), &o.params, &o.stats, config)?;
    write_json(&out.join("norm_stats.json"), &o.stats)?;
    let mut curve = Vec::new();
    o.log.write_csv(&mut curve)?;
    write_text(&out.join("training_curve.csv"), &String::from_utf8(curve)?)?;
    let mut evals = String::from("epoch,mean_err_ux,mean_err_uy,mean_err_uz,mean_err_fr\n");
    let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.9e}"));
    for e in &o.log.evals {
        evals.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch,
            fmt(e.mean_err_ux),
            fmt(e.mean_err_uy),
            fmt(e.mean_err_uz),
            fmt(e.mean_err_fr)
        ));
    }
    write_text(&out.join("eval_curve.csv"), &evals)?;
    write_json(
        &out.join("split.json"),
        &serde_json::json!({ "train": o.train_ids, "test": o.test_ids }),
    )?;
    if let (Some(first), Some(last)) = (&o.log.initial_loss, o.log.epochs.last()) {
        println!(
            "loss {:.4e} -> {:.4e} after {} epochs",
            first.total(),
            last.loss.total(),
            o.log.epochs.len()
        );
    }
    Ok(())
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let config = args.resolve()?;
    let dataset = read_dataset(&args.dataset)?;
    info!(
        "training on {} samples for {} epochs ({:?})",
        dataset.samples.len(),
        config.epochs,
        config.precision
    );
    create_dir(&args.out)?;
    match config.precision {
        Precision::F32 => write_outputs(
            &args.out,
            &config,
            &train::<f32>(&config, &dataset.samples)?,
        )?,
        Precision::F64 => write_outputs(
            &args.out,
            &config,
            &train::<f64>(&config, &dataset.samples)?,
        )?,
    }
    RunManifest::new("train", serde_json::to_value(&config)?)
        .seed("split", config.split_seed)
        .seed("init", config.init_seed)
        .input(&args.dataset)
        .finish(&args.out)?;
    println!("wrote {}", args.out.join(CHECKPOINT_NAME).display());
    Ok(())
}
