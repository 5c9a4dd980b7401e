use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use log::info;
use transdon::pipeline::train::sample_metrics;
use transdon::pipeline::{
    load_checkpoint, read_dataset, split_indices, AnyParams, MetricsReport, OraclePredictor,
    PointCloudSample, Prediction, SamplePredictor,
};
use transdon::Error;

use crate::manifest::RunManifest;
use crate::util::{create_dir, write_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Test,
    Train,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "oracle")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Split seed; defaults to the one stored in the checkpoint.
    #[arg(long)]
    pub seed_split: Option<u64>,
    #[arg(long, value_enum, default_value = "test")]
    pub subset: Subset,
    /// Sample ids that get a per-node error CSV (default: every evaluated sample).
    #[arg(long, value_delimiter = ',')]
    pub pointwise: Vec<String>,
    /// Score the synthetic oracle instead of a checkpoint (harness sanity check).
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn force_csv(s: &PointCloudSample, p: &Prediction) -> String {
    let mut out = String::from("t,F_ref,F_pred\n");
    for ((t, r), q) in s.force.times.iter().zip(&s.force.forces).zip(&p.force) {
        let _ = writeln!(out, "{t:.9e},{r:.9e},{q:.9e}");
    }
    out
}

fn pointwise_csv(s: &PointCloudSample, p: &Prediction) -> String {
    let mut out = String::from(
        "x,y,z,ref_ux,ref_uy,ref_uz,pred_ux,pred_uy,pred_uz,abs_ux,abs_uy,abs_uz,abs_mag\n",
    );
    let (u, q) = (&s.displacement.u, &p.displacement);
    for i in 0..s.n_points() {
        let x = s.cloud.points.row(i);
        let d: Vec<f64> = (0..3).map(|c| (q.at(i, c) - u.at(i, c)).abs()).collect();
        let mag = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let _ = writeln!(
            out,
            "{:.6e},{:.6e},{:.6e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            x[0], x[1], x[2],
            u.at(i, 0), u.at(i, 1), u.at(i, 2),
            q.at(i, 0), q.at(i, 1), q.at(i, 2),
            d[0], d[1], d[2], mag
        );
    }
    out
}

fn scatter_rows(out: &mut String, s: &PointCloudSample, p: &Prediction) {
    let names = ["u_x", "u_y", "u_z"];
    for i in 0..s.n_points() {
        for (c, name) in names.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{name},{:.9e},{:.9e}",
                s.id,
                s.displacement.u.at(i, c),
                p.displacement.at(i, c)
            );
        }
    }
    for (r, q) in s.force.forces.iter().zip(&p.force) {
        let _ = writeln!(out, "{},F_R,{r:.9e},{q:.9e}", s.id);
    }
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let dataset = read_dataset(&args.dataset)?;
    let mut manifest = RunManifest::new("eval", serde_json::Value::Null).input(&args.dataset);
    let (predictor, ratio, seed): (Box<dyn SamplePredictor>, f64, u64) = match &args.checkpoint {
        Some(path) if !args.oracle => {
            let ckpt = load_checkpoint(path)?;
            ckpt.ensure_model(&ckpt.config.model)?;
            manifest.config = serde_json::to_value(&ckpt.config)?;
            manifest = manifest.input(path);
            let seed = args.seed_split.unwrap_or(ckpt.config.split_seed);
            let p: Box<dyn SamplePredictor> = match ckpt.params {
                AnyParams::F32(_) => Box::new(ckpt.predictor::<f32>()?),
                AnyParams::F64(_) => Box::new(ckpt.predictor::<f64>()?),
            };
            (p, ckpt.config.split_ratio, seed)
        }
        _ => (Box::new(OraclePredictor), 0.9, args.seed_split.unwrap_or(0)),
    };
    manifest = manifest.seed("split", seed);

    let n = dataset.samples.len();
    let indices: Vec<usize> = match args.subset {
        Subset::All => (0..n).collect(),
        Subset::Train => split_indices(n, ratio, seed)?.0,
        Subset::Test => split_indices(n, ratio, seed)?.1,
    };
    let selected: Vec<&PointCloudSample> = indices.iter().map(|&i| &dataset.samples[i]).collect();
    for id in &args.pointwise {
        if !selected.iter().any(|s| &s.id == id) {
            return Err(
                Error::invalid(format!("sample {id} is not in the evaluated subset")).into(),
            );
        }
    }
    info!("evaluating {} samples", selected.len());

    create_dir(&args.out)?;
    create_dir(&args.out.join("forces"))?;
    create_dir(&args.out.join("pointwise"))?;
    let mut rows = Vec::with_capacity(selected.len());
    let mut scatter = String::from("id,component,reference,predicted\n");
    for s in &selected {
        let pred = predictor.predict_sample(s)?;
        rows.push(sample_metrics(s, &pred));
        write_text(
            &args.out.join("forces").join(format!("{}.csv", s.id)),
            &force_csv(s, &pred),
        )?;
        if args.pointwise.is_empty() || args.pointwise.contains(&s.id) {
            write_text(
                &args.out.join("pointwise").join(format!("{}.csv", s.id)),
                &pointwise_csv(s, &pred),
            )?;
        }
        scatter_rows(&mut scatter, s, &pred);
    }
    write_text(&args.out.join("scatter.csv"), &scatter)?;
    let report = MetricsReport::from_samples(rows);
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_text(&args.out.join("metrics.csv"), &String::from_utf8(csv)?)?;
    manifest.finish(&args.out)?;
    print!("{}", report.table());
    Ok(())
}
