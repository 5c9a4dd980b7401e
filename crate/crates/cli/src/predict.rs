use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use log::warn;
use transdon::geometry::{sample_surface, BottleParams, DesignSpace, PointCloud};
use transdon::pipeline::sample::quantize_cloud;
use transdon::pipeline::{load_checkpoint, AnyParams, Prediction, Resolution};
use transdon::{Error, Tensor};

use crate::manifest::RunManifest;
use crate::util::{create_dir, parse_times, read_json, uniform_times, write_text};

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSON design parameters; the surface is sampled at --resolution.
    #[arg(long, conflicts_with = "cloud", required_unless_present = "cloud")]
    pub params: Option<PathBuf>,
    /// CSV point cloud with header "x,y,z,nx,ny,nz".
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    #[arg(long, default_value = "64x16")]
    pub resolution: Resolution,
    /// Query times in [0, 1], comma separated (default: 101 uniform steps).
    #[arg(long)]
    pub times: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Reads a cloud CSV with header `x,y,z,nx,ny,nz`.
pub fn read_cloud_csv(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .collect();
    if header != ["x", "y", "z", "nx", "ny", "nz"] {
        return Err(Error::corrupt(path, "expected header x,y,z,nx,ny,nz").into());
    }
    let (mut points, mut normals) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let vals = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Error::corrupt(path, format!("row {} is not numeric", i + 1)))?;
        if vals.len() != 6 {
            return Err(
                Error::corrupt(path, format!("row {} has {} columns", i + 1, vals.len())).into(),
            );
        }
        points.extend_from_slice(&vals[..3]);
        normals.extend_from_slice(&vals[3..]);
    }
    let n = points.len() / 3;
    if n == 0 {
        return Err(Error::corrupt(path, "no points").into());
    }
    Ok(PointCloud::new(
        Tensor::new(vec![n, 3], points)?,
        Tensor::new(vec![n, 3], normals)?,
    )?)
}

fn cloud_from_params(args: &PredictArgs, path: &Path) -> Result<PointCloud> {
    let p: BottleParams = read_json(path)?;
    if let Err(e) = DesignSpace::for_family(p.family).check(&p) {
        warn!("extrapolating outside the design space: {e}");
    }
    let cloud = sample_surface(&p, args.resolution.n_z, args.resolution.n_theta)?;
    Ok(quantize_cloud(&cloud)?)
}

fn displacement_csv(cloud: &PointCloud, p: &Prediction) -> String {
    let mut out = String::from("x,y,z,ux,uy,uz\n");
    for i in 0..cloud.len() {
        let x = cloud.points.row(i);
        let u = p.displacement.row(i);
        let _ = writeln!(
            out,
            "{:.6e},{:.6e},{:.6e},{:.9e},{:.9e},{:.9e}",
            x[0], x[1], x[2], u[0], u[1], u[2]
        );
    }
    out
}

pub fn run(args: &PredictArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let (cloud, input) = match (&args.params, &args.cloud) {
        (Some(p), _) => (cloud_from_params(args, p)?, p),
        (None, Some(c)) => (read_cloud_csv(c)?, c),
        (None, None) => unreachable!("clap requires one input"),
    };
    let times = match &args.times {
        Some(s) => parse_times(s)?,
        None => uniform_times(101),
    };
    let pred = match ckpt.params {
        AnyParams::F32(_) => ckpt.predictor::<f32>()?.predict(&cloud, &times)?,
        AnyParams::F64(_) => ckpt.predictor::<f64>()?.predict(&cloud, &times)?,
    };
    create_dir(&args.out)?;
    write_text(
        &args.out.join("displacement.csv"),
        &displacement_csv(&cloud, &pred),
    )?;
    let mut force = String::from("t,F\n");
    for (t, f) in times.iter().zip(&pred.force) {
        let _ = writeln!(force, "{t:.9e},{f:.9e}");
    }
    write_text(&args.out.join("force.csv"), &force)?;
    RunManifest::new("predict", serde_json::to_value(&ckpt.config)?)
        .input(&args.checkpoint)
        .input(input)
        .finish(&args.out)?;
    println!(
        "wrote predictions for {} points at {} times",
        cloud.len(),
        times.len()
    );
    Ok(())
}
