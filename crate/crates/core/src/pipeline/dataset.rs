//! On-disk dataset layout:
//!
//! ```text
//! dataset_dir/manifest.json
//! dataset_dir/<id>/params.json
//! dataset_dir/<id>/points.f32    N×3 little-endian binary32, row-major
//! dataset_dir/<id>/normals.f32
//! dataset_dir/<id>/disp.f32
//! dataset_dir/<id>/force.csv     "t,F", 9 significant digits
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BottleParams, DesignSpace, Family, PointCloud};
use crate::numerics::Tensor;
use crate::oracle::{DisplacementField, ForceCurve};
use crate::pipeline::sample::{PointCloudSample, SynthesisConfig};

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator_seed: u64,
    /// `full_factorial` or `latin_hypercube`.
    pub design: String,
    pub parameter_ranges: DesignSpace,
    pub synthesis: SynthesisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub family: Family,
    /// Points per sample.
    #[serde(rename = "N")]
    pub n_points: usize,
    /// Time steps per sample; `null` when samples use different grids.
    #[serde(rename = "N_t")]
    pub n_times: Option<usize>,
    pub ids: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<PointCloudSample>,
}

impl Dataset {
    /// Builds the manifest from the samples themselves.
    pub fn new(samples: Vec<PointCloudSample>, provenance: Provenance) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::invalid("dataset needs at least one sample"))?;
        let family = first.params.family;
        let n_points = first.n_points();
        for s in &samples {
            s.validate()?;
            if s.params.family != family {
                return Err(Error::Integrity(format!(
                    "sample {} has family {}, dataset is {family}",
                    s.id, s.params.family
                )));
            }
            if s.n_points() != n_points {
                return Err(Error::Integrity(format!(
                    "sample {} has {} points, dataset has {n_points}",
                    s.id,
                    s.n_points()
                )));
            }
        }
        let n_times = first.n_times();
        let n_times = samples
            .iter()
            .all(|s| s.n_times() == n_times)
            .then_some(n_times);
        let manifest = Manifest {
            version: DATASET_VERSION,
            family,
            n_points,
            n_times,
            ids: samples.iter().map(|s| s.id.clone()).collect(),
            provenance,
        };
        Ok(Self { manifest, samples })
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn f32_bytes(t: &Tensor<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(t.len() * 4);
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn force_csv(curve: &ForceCurve) -> String {
    let mut s = String::from("t,F\n");
    for (&t, &f) in curve.times.iter().zip(&curve.forces) {
        s.push_str(&format!("{:.8e},{:.8e}\n", t as f32, f as f32));
    }
    s
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in &dataset.samples {
        let sdir = dir.join(&s.id);
        fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
        let params = serde_json::to_string_pretty(&s.params)
            .map_err(|e| Error::invalid(format!("serializing params: {e}")))?;
        write_file(&sdir.join("params.json"), params.as_bytes())?;
        write_file(&sdir.join("points.f32"), &f32_bytes(&s.cloud.points))?;
        write_file(&sdir.join("normals.f32"), &f32_bytes(&s.cloud.normals))?;
        write_file(&sdir.join("disp.f32"), &f32_bytes(&s.displacement.u))?;
        write_file(&sdir.join("force.csv"), force_csv(&s.force).as_bytes())?;
    }
    let manifest = serde_json::to_string_pretty(&dataset.manifest)
        .map_err(|e| Error::invalid(format!("serializing manifest: {e}")))?;
    let path = dir.join("manifest.json");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(manifest.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| Error::io(&path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_f32_array(path: &Path, n: usize) -> Result<Tensor<f64>> {
    let bytes = read_file(path)?;
    if bytes.len() != n * 12 {
        return Err(Error::Integrity(format!(
            "{}: expected {n}×3 binary32 values ({} bytes), found {} bytes",
            path.display(),
            n * 12,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Tensor::new(vec![n, 3], data)
}

fn read_force_csv(path: &Path) -> Result<ForceCurve> {
    let text =
        String::from_utf8(read_file(path)?).map_err(|_| Error::corrupt(path, "not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("t,F") {
        return Err(Error::corrupt(path, "missing \"t,F\" header"));
    }
    let mut times = Vec::new();
    let mut forces = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (t, f) = line
            .split_once(',')
            .ok_or_else(|| Error::corrupt(path, format!("row {i} has no comma")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f32>()
                .map(f64::from)
                .map_err(|_| Error::corrupt(path, format!("row {i}: bad number {v:?}")))
        };
        times.push(parse(t)?);
        forces.push(parse(f)?);
    }
    let t_end = times.last().copied().unwrap_or(0.0);
    let curve = ForceCurve {
        times,
        forces,
        t_end,
    };
    curve
        .validate()
        .map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))?;
    Ok(curve)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let bytes = read_file(&path)?;
    let manifest: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| Error::corrupt(&path, format!("invalid manifest: {e}")))?;
    if manifest.version != DATASET_VERSION {
        return Err(Error::Version {
            found: manifest.version,
            expected: DATASET_VERSION,
        });
    }
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let manifest = read_manifest(dir)?;
    let mut samples = Vec::with_capacity(manifest.ids.len());
    for id in &manifest.ids {
        let sdir: PathBuf = dir.join(id);
        let ppath = sdir.join("params.json");
        let params: BottleParams = serde_json::from_slice(&read_file(&ppath)?)
            .map_err(|e| Error::corrupt(&ppath, format!("invalid params: {e}")))?;
        if params.family != manifest.family {
            return Err(Error::Integrity(format!(
                "sample {id} has family {}, manifest says {}",
                params.family, manifest.family
            )));
        }
        let n = manifest.n_points;
        let points = read_f32_array(&sdir.join("points.f32"), n)?;
        let normals = read_f32_array(&sdir.join("normals.f32"), n)?;
        let disp = read_f32_array(&sdir.join("disp.f32"), n)?;
        let force = read_force_csv(&sdir.join("force.csv"))?;
        if let Some(nt) = manifest.n_times {
            if force.times.len() != nt {
                return Err(Error::Integrity(format!(
                    "sample {id}: manifest N_t = {nt}, force.csv has {} rows",
                    force.times.len()
                )));
            }
        }
        samples.push(PointCloudSample {
            id: id.clone(),
            params,
            cloud: PointCloud::new(points, normals)?,
            displacement: DisplacementField { u: disp },
            force,
        });
    }
    Ok(Dataset { manifest, samples })
}
