use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use log::info;
use transdon::geometry::{full_factorial, latin_hypercube, DesignSpace, Family};
use transdon::pipeline::{
    synthesize_all, write_dataset, Dataset, Provenance, Resolution, SynthesisConfig,
};
use transdon::Error;

use crate::manifest::RunManifest;
use crate::util::is_nonempty_dir;

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value = "two_param")]
    pub family: Family,
    /// Latin-hypercube sample count (required for four_param).
    #[arg(long, conflicts_with = "k_per_axis")]
    pub samples: Option<usize>,
    /// Full-factorial levels per axis (two_param only).
    #[arg(long)]
    pub k_per_axis: Option<usize>,
    #[arg(long, default_value = "64x16")]
    pub resolution: Resolution,
    #[arg(long, default_value_t = 101)]
    pub n_times: usize,
    /// Standard deviation of Gaussian noise added to the responses.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &GenDataArgs) -> Result<()> {
    if is_nonempty_dir(&args.out) && !args.force {
        return Err(Error::invalid(format!(
            "{} is not empty; pass --force to write into it",
            args.out.display()
        ))
        .into());
    }
    let space = DesignSpace::for_family(args.family);
    let (designs, method) = match (args.family, args.samples, args.k_per_axis) {
        (_, Some(0), _) | (_, _, Some(0)) => {
            return Err(Error::invalid("sample count must be positive").into())
        }
        (Family::TwoParam, None, Some(k)) => (full_factorial(&space, k)?, "full_factorial"),
        (Family::TwoParam, None, None) => (full_factorial(&space, 16)?, "full_factorial"),
        (_, Some(n), None) => (latin_hypercube(&space, n, args.seed)?, "latin_hypercube"),
        (Family::FourParam, None, _) => {
            return Err(Error::invalid("four_param needs --samples (Latin hypercube)").into())
        }
        (_, Some(_), Some(_)) => unreachable!("clap rejects --samples with --k-per-axis"),
    };
    let synthesis = SynthesisConfig {
        resolution: args.resolution,
        n_times: args.n_times,
        noise_sigma: args.noise,
        noise_seed: args.seed,
    };
    info!(
        "generating {} {} samples at {} ({method})",
        designs.len(),
        args.family,
        args.resolution
    );
    let samples = synthesize_all(&designs, &synthesis)?;
    let provenance = Provenance {
        generator_seed: args.seed,
        design: method.to_string(),
        parameter_ranges: space,
        synthesis,
    };
    let dataset = Dataset::new(samples, provenance)?;
    write_dataset(&dataset, &args.out)?;
    RunManifest::new(
        "gen-data",
        serde_json::to_value(&dataset.manifest.provenance)?,
    )
    .seed("generator", args.seed)
    .finish(&args.out)?;
    println!(
        "wrote {} samples (N = {}) to {}",
        dataset.samples.len(),
        dataset.manifest.n_points,
        args.out.display()
    );
    Ok(())
}
