use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deeponet::TimeGrid;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::model::{HybridModel, ModelParams};
use crate::numerics::{adam_step, AdamConfig, AdamState, LrSchedule, Real, Tensor};
use crate::oracle;
use crate::pipeline::loss::{total_loss_with_grad, LossTerms};
use crate::pipeline::metrics::{r_squared, rel_l2, MetricsReport, SampleMetrics};
use crate::pipeline::norm::{normalize_fit, NormStats};
use crate::pipeline::split::split_indices;
use crate::pipeline::PointCloudSample;
use crate::transolver::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::invalid(format!("unknown precision {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_lr: f64,
    pub warmup_fraction: f64,
    pub initial_divisor: f64,
    pub final_divisor: f64,
    pub adam: AdamConfig,
    pub split_ratio: f64,
    pub split_seed: u64,
    pub init_seed: u64,
    /// Evaluate on the test split every this many epochs (0 disables).
    pub eval_interval: usize,
    pub precision: Precision,
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            model: ModelConfig::paper(),
            epochs: 10_000,
            batch_size: 1,
            max_lr: 1e-3,
            warmup_fraction: 0.3,
            initial_divisor: 25.0,
            final_divisor: 1e4,
            adam: AdamConfig::default(),
            split_ratio: 0.9,
            split_seed: 0,
            init_seed: 0,
            eval_interval: 50,
            precision: Precision::F32,
        }
    }

    pub fn desk() -> Self {
        Self {
            model: ModelConfig::desk(),
            epochs: 2000,
            ..Self::paper()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::invalid(format!("unknown preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::invalid("split ratio must lie in (0, 1)"));
        }
        if self.max_lr.is_nan() || self.max_lr <= 0.0 {
            return Err(Error::invalid("max_lr must be positive"));
        }
        Ok(())
    }

    pub fn schedule(&self, total_steps: usize) -> LrSchedule {
        LrSchedule {
            max_lr: self.max_lr,
            total_steps,
            warmup_fraction: self.warmup_fraction,
            initial_divisor: self.initial_divisor,
            final_divisor: self.final_divisor,
        }
    }
}

/// Normalized network inputs and targets of one sample.
#[derive(Debug, Clone)]
pub struct PreparedSample<T> {
    pub id: String,
    pub features: Tensor<T>,
    pub times: TimeGrid<T>,
    pub disp: Tensor<T>,
    pub force: Vec<T>,
}

/// Normalized `N×6` features of a cloud.
pub fn normalized_features<T: Real>(cloud: &PointCloud, stats: &NormStats) -> Tensor<T> {
    let f = cloud.features();
    let n = f.rows();
    let mut data = Vec::with_capacity(n * 6);
    for i in 0..n {
        for (c, &v) in f.row(i).iter().enumerate() {
            data.push(T::c(stats.normalize_input(c, v)));
        }
    }
    Tensor::new(vec![n, 6], data).expect("n×6")
}

pub fn normalized_times<T: Real>(times: &[f64], stats: &NormStats) -> Result<TimeGrid<T>> {
    TimeGrid::new(
        times
            .iter()
            .map(|&t| T::c(stats.normalize_time(t)))
            .collect(),
    )
}

pub fn prepare<T: Real>(s: &PointCloudSample, stats: &NormStats) -> Result<PreparedSample<T>> {
    let u = &s.displacement.u;
    let mut disp = Vec::with_capacity(u.len());
    for i in 0..u.rows() {
        for c in 0..3 {
            disp.push(T::c(stats.normalize_disp(c, u.at(i, c))));
        }
    }
    Ok(PreparedSample {
        id: s.id.clone(),
        features: normalized_features(&s.cloud, stats),
        times: normalized_times(&s.force.times, stats)?,
        disp: Tensor::new(vec![u.rows(), 3], disp)?,
        force: s
            .force
            .forces
            .iter()
            .map(|&f| T::c(stats.normalize_force(f)))
            .collect(),
    })
}

/// Loss terms and flat gradient for one sample.
pub fn sample_loss_and_grad<T: Real>(
    model: &HybridModel,
    params: &[T],
    s: &PreparedSample<T>,
) -> Result<(LossTerms, Vec<T>)> {
    let (out, cache) = model.forward(params, &s.features, &s.times)?;
    let (terms, du, df) = total_loss_with_grad(&out.u_hat, &s.disp, &out.force, &s.force)?;
    if !terms.is_finite() {
        return Ok((terms, Vec::new()));
    }
    Ok((terms, model.backward(params, &cache, &du, &df)))
}

/// Loss of one sample without gradients.
pub fn sample_loss<T: Real>(
    model: &HybridModel,
    params: &[T],
    s: &PreparedSample<T>,
) -> Result<LossTerms> {
    let (out, _) = model.forward(params, &s.features, &s.times)?;
    crate::pipeline::loss::total_loss(&out.u_hat, &s.disp, &out.force, &s.force)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossTerms,
    /// Learning rate at the epoch's last step.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub mean_err_ux: Option<f64>,
    pub mean_err_uy: Option<f64>,
    pub mean_err_uz: Option<f64>,
    pub mean_err_fr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub initial_loss: Option<LossTerms>,
    pub epochs: Vec<EpochRecord>,
    pub evals: Vec<EvalRecord>,
}

impl TrainLog {
    /// CSV: epoch, total, per-term losses, lr.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,total,loss_ux,loss_uy,loss_uz,loss_fr,lr")?;
        for r in &self.epochs {
            writeln!(
                w,
                "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                r.epoch,
                r.loss.total(),
                r.loss.ux,
                r.loss.uy,
                r.loss.uz,
                r.loss.fr,
                r.lr
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub stats: NormStats,
    pub log: TrainLog,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Partition of a dataset by the configured seeded split.
pub fn split_samples<'a>(
    config: &TrainConfig,
    samples: &'a [PointCloudSample],
) -> Result<(Vec<&'a PointCloudSample>, Vec<&'a PointCloudSample>)> {
    let (tr, te) = split_indices(samples.len(), config.split_ratio, config.split_seed)?;
    Ok((
        tr.iter().map(|&i| &samples[i]).collect(),
        te.iter().map(|&i| &samples[i]).collect(),
    ))
}

/// Trains on the configured split of `samples`, evaluating on the held-out part.
pub fn train<T: Real>(
    config: &TrainConfig,
    samples: &[PointCloudSample],
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let (train_set, test_set) = split_samples(config, samples)?;
    train_on::<T>(config, &train_set, &test_set)
}

/// Trains on an explicit train/test partition.
pub fn train_on<T: Real>(
    config: &TrainConfig,
    train_set: &[&PointCloudSample],
    test_set: &[&PointCloudSample],
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let stats = normalize_fit(train_set)?;
    let model = HybridModel::new(&config.model)?;
    let mut params = model.init_params::<T>(config.init_seed);
    let prepared: Vec<PreparedSample<T>> = train_set
        .iter()
        .map(|s| prepare(s, &stats))
        .collect::<Result<_>>()?;

    let mut log = TrainLog::default();
    let steps_per_epoch = prepared.len().div_ceil(config.batch_size);
    let total_steps = config.epochs * steps_per_epoch;
    let outcome = |params, log| TrainOutcome {
        params,
        stats: stats.clone(),
        log,
        train_ids: train_set.iter().map(|s| s.id.clone()).collect(),
        test_ids: test_set.iter().map(|s| s.id.clone()).collect(),
    };
    if total_steps == 0 {
        return Ok(outcome(params, log));
    }

    let mut initial = LossTerms::default();
    for s in &prepared {
        initial += sample_loss(&model, &params.values, s)?;
    }
    log.initial_loss = Some(scale_terms(initial, 1.0 / prepared.len() as f64));

    let sched = config.schedule(total_steps);
    let mut adam = AdamState::<T>::new(params.len());
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed.wrapping_add(0x5eed));
    let mut step = 0usize;
    let mut grads = vec![T::zero(); params.len()];
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = LossTerms::default();
        let mut lr = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = T::zero());
            for &i in batch {
                let (terms, g) = sample_loss_and_grad(&model, &params.values, &prepared[i])?;
                if !terms.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "loss or gradient not finite for sample {} at step {step} (epoch {epoch})",
                        prepared[i].id
                    )));
                }
                epoch_loss += terms;
                for (a, b) in grads.iter_mut().zip(g) {
                    *a = *a + b;
                }
            }
            if batch.len() > 1 {
                let inv = T::one() / T::c(batch.len() as f64);
                grads.iter_mut().for_each(|g| *g = *g * inv);
            }
            lr = sched.lr(step)?;
            adam_step(&mut params.values, &grads, &mut adam, lr, &config.adam)?;
            step += 1;
        }
        let record = EpochRecord {
            epoch,
            loss: scale_terms(epoch_loss, 1.0 / prepared.len() as f64),
            lr,
        };
        let last = epoch + 1 == config.epochs;
        if config.eval_interval > 0 && ((epoch + 1) % config.eval_interval == 0 || last) {
            if !test_set.is_empty() {
                let predictor = Predictor {
                    model: model.clone(),
                    params: params.clone(),
                    stats: stats.clone(),
                };
                let report = evaluate(&predictor, test_set)?;
                let mean = |name| report.column(name).map(|c| c.mean);
                log.evals.push(EvalRecord {
                    epoch,
                    mean_err_ux: mean("err_ux"),
                    mean_err_uy: mean("err_uy"),
                    mean_err_uz: mean("err_uz"),
                    mean_err_fr: mean("err_fr"),
                });
            }
            info!(
                "epoch {epoch}: loss {:.4e} (ux {:.3e} uy {:.3e} uz {:.3e} fr {:.3e}) lr {lr:.3e}",
                record.loss.total(),
                record.loss.ux,
                record.loss.uy,
                record.loss.uz,
                record.loss.fr
            );
        }
        log.epochs.push(record);
    }
    Ok(outcome(params, log))
}

fn scale_terms(t: LossTerms, s: f64) -> LossTerms {
    LossTerms {
        ux: t.ux * s,
        uy: t.uy * s,
        uz: t.uz * s,
        fr: t.fr * s,
    }
}

/// Denormalized displacement (`N×3`, mm) and force (N) predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub displacement: Tensor<f64>,
    pub force: Vec<f64>,
}

/// Anything that can predict a sample's response.
pub trait SamplePredictor {
    fn predict_sample(&self, sample: &PointCloudSample) -> Result<Prediction>;
}

/// Trained network plus the statistics it was trained with.
#[derive(Debug, Clone)]
pub struct Predictor<T> {
    pub model: HybridModel,
    pub params: ModelParams<T>,
    pub stats: NormStats,
}

impl<T: Real> Predictor<T> {
    pub fn new(model: HybridModel, params: ModelParams<T>, stats: NormStats) -> Result<Self> {
        model.check_params(&params)?;
        Ok(Self {
            model,
            params,
            stats,
        })
    }

    /// Predicts the response of an arbitrary cloud at arbitrary times in `[0, 1]`.
    pub fn predict(&self, cloud: &PointCloud, times: &[f64]) -> Result<Prediction> {
        let features = normalized_features::<T>(cloud, &self.stats);
        let grid = normalized_times::<T>(times, &self.stats)?;
        let (out, _) = self.model.forward(&self.params.values, &features, &grid)?;
        out.u_hat.ensure_finite("displacement prediction")?;
        let n = out.u_hat.rows();
        let mut disp = Vec::with_capacity(n * 3);
        for i in 0..n {
            for c in 0..3 {
                disp.push(self.stats.denormalize_disp(c, out.u_hat.at(i, c).f64()));
            }
        }
        let force: Vec<f64> = out
            .force
            .iter()
            .map(|&f| self.stats.denormalize_force(f.f64()))
            .collect();
        if force.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("force prediction".into()));
        }
        Ok(Prediction {
            displacement: Tensor::new(vec![n, 3], disp)?,
            force,
        })
    }
}

impl<T: Real> SamplePredictor for Predictor<T> {
    fn predict_sample(&self, sample: &PointCloudSample) -> Result<Prediction> {
        self.predict(&sample.cloud, &sample.force.times)
    }
}

/// Reference response from the synthetic oracle; a perfect predictor for sanity checks.
pub struct OraclePredictor;

impl SamplePredictor for OraclePredictor {
    fn predict_sample(&self, sample: &PointCloudSample) -> Result<Prediction> {
        let field = oracle::displacement_field(&sample.cloud, &sample.params)?;
        let force = oracle::reaction_force_at(&sample.params, &sample.force.times);
        Ok(Prediction {
            displacement: field.u.map(crate::pipeline::sample::quantize),
            force: force
                .into_iter()
                .map(crate::pipeline::sample::quantize)
                .collect(),
        })
    }
}

/// Metrics of one sample's prediction.
pub fn sample_metrics(sample: &PointCloudSample, pred: &Prediction) -> SampleMetrics {
    let u = &sample.displacement.u;
    let mut values = [None; 7];
    for c in 0..3 {
        let target = u.column(c);
        let p = pred.displacement.column(c);
        values[c] = metric_or_warn(rel_l2(&p, &target), &sample.id, "rel-L2", c);
        values[4 + c] = metric_or_warn(r_squared(&p, &target), &sample.id, "R²", c);
    }
    values[3] = metric_or_warn(
        rel_l2(&pred.force, &sample.force.forces),
        &sample.id,
        "rel-L2",
        3,
    );
    SampleMetrics {
        id: sample.id.clone(),
        values,
    }
}

fn metric_or_warn(r: Result<f64>, id: &str, what: &str, component: usize) -> Option<f64> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            let names = ["u_x", "u_y", "u_z", "F_R"];
            warn!(
                "{what} of {} for sample {id} excluded: {e}",
                names[component]
            );
            None
        }
    }
}

/// Per-sample metrics on denormalized predictions, with summary statistics.
pub fn evaluate<P: SamplePredictor + ?Sized>(
    predictor: &P,
    samples: &[&PointCloudSample],
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation needs at least one sample"));
    }
    let rows = samples
        .iter()
        .map(|s| Ok(sample_metrics(s, &predictor.predict_sample(s)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::from_samples(rows))
}
