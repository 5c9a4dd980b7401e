mod common;

use std::f64::consts::PI;

use common::*;
use proptest::prelude::*;
use transdon::geometry::{
    generate_bottle, latin_hypercube, profile_radius, profile_slope, BottleParams, DesignSpace,
};
use transdon::numerics::{
    adam_step, layer_norm, onecycle_lr, softmax, AdamConfig, AdamState, LrSchedule,
};
use transdon::oracle::{displacement_field, peak_time, reaction_curve};
use transdon::pipeline::rel_l2;
use transdon::{ModelConfig, Tensor};

fn two_param() -> impl Strategy<Value = BottleParams> {
    let s = DesignSpace::two_param();
    (s.r_top.0..=s.r_top.1, s.d_rib.0..=s.d_rib.1).prop_map(|(r, d)| BottleParams::two_param(r, d))
}

fn four_param() -> impl Strategy<Value = BottleParams> {
    let s = DesignSpace::four_param();
    (
        s.r_rib.0..=s.r_rib.1,
        s.r_top.0..=s.r_top.1,
        s.p_rib.0..=s.p_rib.1,
        s.d_rib.0..=s.d_rib.1,
    )
        .prop_map(|(a, b, c, d)| BottleParams::four_param(a, b, c, d))
}

fn any_bottle() -> impl Strategy<Value = BottleParams> {
    prop_oneof![two_param(), four_param()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(rows in prop::collection::vec(prop::collection::vec(-30.0..30.0f64, 5), 1..6), shift in -50.0..50.0f64) {
        let x = Tensor::from_rows(&rows).unwrap();
        let y = softmax(&x, 1).unwrap();
        let y32 = softmax(&x.cast::<f32>(), 1).unwrap();
        let shifted = softmax(&x.map(|v| v + shift), 1).unwrap();
        for i in 0..x.rows() {
            prop_assert!((y.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((y32.row(i).iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
        prop_assert!(y.max_abs_diff(&shifted) < 1e-12);
    }

    #[test]
    fn layer_norm_standardizes_rows(rows in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 8), 1..5)) {
        let x = Tensor::from_rows(&rows).unwrap();
        let y = layer_norm(&x, &[1.0; 8], &[0.0; 8], 1e-5).unwrap();
        for i in 0..x.rows() {
            let r = x.row(i);
            let m = r.iter().sum::<f64>() / 8.0;
            let sd = (r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 8.0).sqrt();
            prop_assume!(sd > 0.1);
            let o = y.row(i);
            let om = o.iter().sum::<f64>() / 8.0;
            let ov = o.iter().map(|v| (v - om).powi(2)).sum::<f64>() / 8.0;
            prop_assert!(om.abs() < 1e-6);
            prop_assert!((ov - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params(params in prop::collection::vec(-5.0..5.0f64, 1..20), v in 0.0..10.0f64, step in 0u64..1000) {
        let mut p = params.clone();
        let mut state = AdamState { m: vec![0.0; p.len()], v: vec![v; p.len()], step };
        adam_step(&mut p, &vec![0.0; params.len()], &mut state, 1e-3, &AdamConfig::default()).unwrap();
        prop_assert_eq!(p, params);
    }

    #[test]
    fn onecycle_continuous_with_single_maximum(total in 2usize..4000, max_lr in 1e-5..1.0f64) {
        let s = LrSchedule::new(max_lr, total);
        let lrs: Vec<f64> = (0..total).map(|k| onecycle_lr(k, &s).unwrap()).collect();
        let top = lrs.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert_eq!(lrs.iter().filter(|&&v| v == top).count(), 1);
        // Both phase formulas meet at the peak.
        let peak = s.peak_step();
        let rising = s.initial_lr() + (s.max_lr - s.initial_lr()) / 2.0 * (1.0 - (PI * peak / peak).cos());
        prop_assert!((rising - s.max_lr).abs() < 1e-12);
        let k = peak.floor() as usize;
        if (k as f64) == peak && k + 1 < total {
            prop_assert!((lrs[k] - max_lr).abs() < 1e-12);
        }
    }

    #[test]
    fn rel_l2_scale_covariant(pairs in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 2..30), alpha in prop_oneof![-1e3..-1e-3f64, 1e-3..1e3f64]) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(t.iter().any(|v| v.abs() > 1e-3));
        let base = rel_l2(&p, &t).unwrap();
        let sp: Vec<f64> = p.iter().map(|v| alpha * v).collect();
        let st: Vec<f64> = t.iter().map(|v| alpha * v).collect();
        let scaled = rel_l2(&sp, &st).unwrap();
        prop_assert!((scaled - base).abs() <= 1e-12 * base.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn points_lie_on_surface_with_orthogonal_normals(p in any_bottle()) {
        let cloud = generate_bottle(&p, 24, 12).unwrap();
        for i in 0..cloud.len() {
            let x = cloud.points.row(i);
            let nrm = cloud.normals.row(i);
            let r = profile_radius(x[2], &p).unwrap();
            let dr = profile_slope(x[2], &p).unwrap();
            let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
            prop_assert!((rho - r).abs() / r < 1e-6);
            let (c, s) = (x[0] / rho, x[1] / rho);
            let t_theta = [-r * s, r * c, 0.0];
            let t_z = [dr * c, dr * s, 1.0];
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
            prop_assert!(dot(nrm, &t_theta).abs() < 1e-5);
            prop_assert!(dot(nrm, &t_z).abs() < 1e-5);
        }
    }

    #[test]
    fn larger_neck_radius_widens_top(p in two_param(), dr in 0.01..5.0f64) {
        prop_assume!(p.r_top + dr <= DesignSpace::two_param().r_top.1);
        let wider = BottleParams { r_top: p.r_top + dr, ..p };
        prop_assert!(profile_radius(160.0, &wider).unwrap() > profile_radius(160.0, &p).unwrap());
    }

    #[test]
    fn latin_hypercube_has_one_sample_per_stratum(n in 1usize..40, seed in any::<u64>(), four in any::<bool>()) {
        let space = if four { DesignSpace::four_param() } else { DesignSpace::two_param() };
        let designs = latin_hypercube(&space, n, seed).unwrap();
        prop_assert_eq!(designs.len(), n);
        for (axis, (_, (lo, hi))) in space.free_axes().iter().enumerate() {
            let mut counts = vec![0usize; n];
            for d in &designs {
                let u = (space.axes_of(d)[axis] - lo) / (hi - lo);
                counts[((u * n as f64) as usize).min(n - 1)] += 1;
            }
            prop_assert!(counts.iter().all(|&c| c == 1));
        }
        prop_assert_eq!(designs, latin_hypercube(&space, n, seed).unwrap());
    }

    #[test]
    fn generation_is_deterministic(p in any_bottle()) {
        let a = generate_bottle(&p, 16, 8).unwrap();
        let b = generate_bottle(&p, 16, 8).unwrap();
        prop_assert!(a.points.data().iter().zip(b.points.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert!(a.normals.data().iter().zip(b.normals.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn oracle_boundaries_and_rotation(p in any_bottle()) {
        let n_theta = 12;
        let cloud = generate_bottle(&p, 20, n_theta).unwrap();
        let u = displacement_field(&cloud, &p).unwrap().u;
        for i in 0..cloud.len() {
            let z = cloud.points.at(i, 2);
            if z == 0.0 {
                prop_assert!(u.row(i).iter().all(|&v| v == 0.0));
            }
            if z == 160.0 {
                prop_assert_eq!(u.at(i, 2), -10.0);
            }
        }
        let delta = 2.0 * PI / n_theta as f64;
        let (s, c) = delta.sin_cos();
        for ring in 0..20 {
            for k in 0..n_theta - 1 {
                let (a, b) = (ring * n_theta + k, ring * n_theta + k + 1);
                let rx = c * u.at(a, 0) - s * u.at(a, 1);
                let ry = s * u.at(a, 0) + c * u.at(a, 1);
                prop_assert!((rx - u.at(b, 0)).abs() < 1e-12 && (ry - u.at(b, 1)).abs() < 1e-12);
                prop_assert_eq!(u.at(a, 2), u.at(b, 2));
            }
        }
    }

    #[test]
    fn force_curve_has_at_most_one_interior_peak(p in any_bottle(), n_t in 11usize..202) {
        let curve = reaction_curve(&p, n_t).unwrap();
        let f = &curve.forces;
        let peaks = (1..n_t - 1).filter(|&i| f[i] > f[i - 1] && f[i] >= f[i + 1]).count();
        prop_assert!(peaks <= 1);
        if p.family == transdon::geometry::Family::FourParam {
            let t_star = peak_time(&p);
            prop_assert!((curve.argmax_time() - t_star).abs() <= 1.0 / (n_t - 1) as f64);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn model_is_permutation_equivariant(seed in any::<u64>(), n in 8usize..64) {
        let (m, p) = model(&ModelConfig::toy(), seed);
        let features = random_features(n, seed ^ 1);
        let perm = permutation(n, seed ^ 2);
        let g = grid(&[0.0, 0.3, 1.0]);
        let (a, _) = m.forward(&p.values, &features, &g).unwrap();
        let (b, _) = m.forward(&p.values, &permute_rows(&features, &perm), &g).unwrap();
        let expected = permute_rows(&a.u_hat, &perm);
        prop_assert!(b.u_hat.max_abs_diff(&expected) < 1e-12);
        prop_assert!(b.latent.y_star.max_abs_diff(&permute_rows(&a.latent.y_star, &perm)) < 1e-12);
        for (x, y) in a.force.iter().zip(&b.force) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
