use transdon::geometry::{latin_hypercube, DesignSpace};
use transdon::pipeline::{
    evaluate, normalize_fit, synthesize_all, total_loss, train, train_on, OraclePredictor,
    PointCloudSample, Predictor, Resolution, SynthesisConfig, TrainConfig,
};
use transdon::{HybridModel, ModelConfig, Tensor};

fn samples(n: usize, seed: u64, res: Resolution, n_times: usize) -> Vec<PointCloudSample> {
    let designs = latin_hypercube(&DesignSpace::two_param(), n, seed).unwrap();
    let cfg = SynthesisConfig {
        resolution: res,
        n_times,
        ..SynthesisConfig::default()
    };
    synthesize_all(&designs, &cfg).unwrap()
}

fn toy_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        model: ModelConfig::toy(),
        epochs,
        eval_interval: 0,
        ..TrainConfig::desk()
    }
}

#[test]
fn oracle_predictor_scores_perfectly() {
    let s = samples(
        5,
        1,
        Resolution {
            n_z: 12,
            n_theta: 8,
        },
        21,
    );
    let refs: Vec<_> = s.iter().collect();
    let report = evaluate(&OraclePredictor, &refs).unwrap();
    // The oracle sees the f32-rounded cloud, so agreement is at f32 rounding level.
    for name in ["err_ux", "err_uy", "err_uz", "err_fr"] {
        let c = report.column(name).unwrap();
        assert_eq!(c.count, 5);
        assert!(c.max < 1e-6, "{name} {}", c.max);
    }
    for name in ["r2_ux", "r2_uy", "r2_uz"] {
        assert!(report.column(name).unwrap().min > 1.0 - 1e-10, "{name}");
    }
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "id,err_ux,err_uy,err_uz,err_fr,r2_ux,r2_uy,r2_uz"
    );
}

#[test]
fn evaluation_is_pure() {
    let s = samples(3, 2, Resolution { n_z: 8, n_theta: 8 }, 11);
    let refs: Vec<_> = s.iter().collect();
    let model = HybridModel::new(&ModelConfig::toy()).unwrap();
    let params = model.init_params::<f32>(4);
    let p = Predictor::new(model, params, normalize_fit(&refs).unwrap()).unwrap();
    let a = evaluate(&p, &refs).unwrap();
    let b = evaluate(&p, &refs).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

#[test]
fn normalization_uses_training_split_only() {
    let s = samples(10, 3, Resolution { n_z: 8, n_theta: 8 }, 11);
    let config = TrainConfig {
        split_ratio: 0.7,
        ..toy_config(1)
    };
    let out = train::<f32>(&config, &s).unwrap();
    let train_set: Vec<_> = out
        .train_ids
        .iter()
        .map(|id| s.iter().find(|x| &x.id == id).unwrap())
        .collect();
    let all: Vec<_> = s.iter().collect();
    assert_eq!(train_set.len(), 7);
    assert_eq!(out.stats, normalize_fit(&train_set).unwrap());
    assert_ne!(out.stats, normalize_fit(&all).unwrap());
}

#[test]
fn zero_epochs_returns_initialization() {
    let s = samples(4, 4, Resolution { n_z: 8, n_theta: 8 }, 11);
    let out = train::<f32>(&toy_config(0), &s).unwrap();
    let init = HybridModel::new(&ModelConfig::toy())
        .unwrap()
        .init_params::<f32>(0);
    assert_eq!(out.params, init);
}

#[test]
fn total_loss_is_sum_of_terms() {
    let pred = Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 0.0, 3.0, 1.0]).unwrap();
    let target = Tensor::new(vec![2, 3], vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
    let t = total_loss(&pred, &target, &[1.0, 2.0], &[0.0, 4.0]).unwrap();
    assert_eq!((t.ux, t.uy, t.uz, t.fr), (1.0, 2.0, 0.25, 1.5));
    assert_eq!(t.total(), 4.75);
}

#[test]
fn toy_overfit_drives_loss_down() {
    let s = samples(
        4,
        2,
        Resolution {
            n_z: 16,
            n_theta: 8,
        },
        21,
    );
    let refs: Vec<_> = s.iter().collect();
    let out = train_on::<f64>(&toy_config(3000), &refs, &[]).unwrap();
    let initial = out.log.initial_loss.unwrap().total();
    let last = out.log.epochs.last().unwrap().loss.total();
    assert!(last < 0.01 * initial, "loss {initial} -> {last}");

    // Trend check on 100-epoch window means, with slack for plateaus.
    let windows: Vec<f64> = out
        .log
        .epochs
        .chunks(100)
        .map(|w| w.iter().map(|r| r.loss.total()).sum::<f64>() / w.len() as f64)
        .collect();
    for pair in windows.windows(2) {
        assert!(
            pair[1] <= pair[0] * 1.02,
            "window mean rose {} -> {}",
            pair[0],
            pair[1]
        );
    }
}

#[test]
fn training_is_deterministic() {
    let s = samples(4, 6, Resolution { n_z: 8, n_theta: 8 }, 11);
    let a = train::<f32>(&toy_config(3), &s).unwrap();
    let b = train::<f32>(&toy_config(3), &s).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log, b.log);
}
