use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use transdon::pipeline::{gradcheck, GradcheckSetup, Tamper};
use transdon::ModelConfig;

use crate::manifest::RunManifest;
use crate::util::{create_dir, write_json};
use crate::CheckFailed;

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "toy", value_parser = ["toy", "desk", "paper"])]
    pub preset: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Directory for a JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Perturb one analytic gradient entry before comparing (harness self-test).
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}

pub fn run(args: &GradcheckArgs) -> Result<()> {
    let config = match args.preset.as_str() {
        "paper" => ModelConfig::paper(),
        "desk" => ModelConfig::desk(),
        _ => ModelConfig::toy(),
    };
    let setup = GradcheckSetup {
        seed: args.seed,
        ..GradcheckSetup::default()
    };
    let corrupt = |g: &mut [f64]| {
        let i = g.len() / 2;
        g[i] = g[i] * 1.01 + 1e-3;
    };
    let tamper: Option<Tamper> = if args.corrupt_backward {
        Some(&corrupt)
    } else {
        None
    };
    let report = gradcheck(&config, &setup, tamper)?;
    println!("{:<28} {:>7} {:>12}", "group", "params", "max rel err");
    for g in &report.groups {
        println!("{:<28} {:>7} {:>12.3e}", g.group, g.params, g.max_rel_error);
    }
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!(
        "{verdict}: max relative error {:.3e} (threshold {:.0e})",
        report.max_rel_error, report.threshold
    );
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_json(&out.join("gradcheck.json"), &report)?;
        RunManifest::new("gradcheck", serde_json::to_value(&config)?)
            .seed("init", args.seed)
            .finish(out)?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CheckFailed(format!(
            "gradient check failed: {:.3e} >= {:.0e}",
            report.max_rel_error, report.threshold
        ))
        .into())
    }
}
