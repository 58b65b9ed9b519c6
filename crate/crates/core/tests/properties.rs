//! Property tests over randomly drawn inputs.

use gradalign::alignment::{evaluate_alignment, tilde_c};
use gradalign::attacks::{
    pgd_attack, read_curve_csv, square_attack_traced, write_curve_csv, AttackConfig, Norm, RobustnessCurve, SquareConfig,
};
use gradalign::data::{decode_dataset, encode_dataset, sample_spheres, Dataset, LabeledSample};
use gradalign::table::{fmt_num, parse_num, round_sig9};
use gradalign::theory::pearson;
use gradalign::{LinearModel, Mlp, Model, Rng};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn linear(seed: u64, n: usize, classes: usize, scale: f64) -> LinearModel {
    let mut rng = Rng::new(seed);
    let w = Array2::from_shape_fn((n, classes), |_| rng.gaussian() * scale);
    let b = Array1::from_shape_fn(classes, |_| rng.gaussian() * scale);
    LinearModel::new(w, b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pearson_ignores_positive_affine_maps(
        xs in prop::collection::vec(-10.0f64..10.0, 3..30),
        noise_seed in any::<u64>(),
        a in 0.1f64..10.0,
        b in -5.0f64..5.0,
    ) {
        let mut rng = Rng::new(noise_seed);
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x + rng.gaussian()).collect();
        prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
        let r = pearson(&xs, &ys).unwrap();
        let mapped: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        prop_assert!((pearson(&mapped, &ys).unwrap() - r).abs() < 1e-9);
        let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
        prop_assert!((pearson(&flipped, &ys).unwrap() + r).abs() < 1e-9);
    }

    #[test]
    fn alignment_ignores_logit_scale(seed in any::<u64>(), classes in 2usize..5, scale in 0.01f64..100.0) {
        let ds = sample_spheres(20, 6, seed).unwrap();
        let base = linear(seed, 6, classes, 1.0);
        let scaled = LinearModel::new(&base.weights * scale, &base.bias * scale).unwrap();
        // Spheres labels are 0/1, valid for any class count >= 2.
        let a = evaluate_alignment(&base, &ds).unwrap();
        let b = evaluate_alignment(&scaled, &ds).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            prop_assert_eq!(ra.m_x, rb.m_x);
            prop_assert_eq!(ra.tilde_c, rb.tilde_c);
            prop_assert!((ra.alpha_dx - rb.alpha_dx).abs() < 1e-9);
            prop_assert!((ra.alpha_x - rb.alpha_x).abs() < 1e-9);
        }
        let s = &ds.samples[0];
        prop_assert_eq!(tilde_c(&base, &s.x, s.y).unwrap(), tilde_c(&scaled, &s.x, s.y).unwrap());
    }

    #[test]
    fn pgd_stays_in_the_ball_and_range(
        seed in any::<u64>(),
        eps in 0.01f64..0.5,
        two in any::<bool>(),
        clamped in any::<bool>(),
    ) {
        let mut rng = Rng::new(seed);
        let m = Mlp::new(&[8, 6, 3], &mut rng).unwrap();
        let x: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let norm = if two { Norm::Two } else { Norm::Inf };
        let mut cfg = AttackConfig::pgd(norm, eps, eps / 4.0);
        cfg.iterations = 10;
        cfg.seed = seed;
        if clamped {
            cfg.clamp = Some((-1.0, 1.0));
        }
        let adv = pgd_attack(&m, &x, rng.below(3), &cfg).unwrap();
        let d: Vec<f64> = adv.iter().zip(&x).map(|(a, b)| a - b).collect();
        let dist = match norm {
            Norm::Inf => d.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            Norm::Two => d.iter().map(|v| v * v).sum::<f64>().sqrt(),
        };
        prop_assert!(dist <= eps * (1.0 + 1e-12) + 1e-12, "distance {dist} > {eps}");
        if clamped {
            prop_assert!(adv.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn square_attack_margin_never_increases(seed in any::<u64>(), eps in 0.05f64..0.5) {
        let mut rng = Rng::new(seed);
        let m = Mlp::new(&[16, 8, 2], &mut rng).unwrap();
        let x: Vec<f64> = (0..16).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let y = m.predict(&x);
        let mut cfg = AttackConfig::pgd(Norm::Inf, eps, 0.01);
        cfg.seed = seed;
        cfg.clamp = Some((-1.0, 1.0));
        let sq = SquareConfig { queries: 60, ..SquareConfig::default() };
        let (adv, trace) = square_attack_traced(&m, &x, y, &cfg, &sq).unwrap();
        prop_assert!(!trace.is_empty());
        for w in trace.windows(2) {
            prop_assert!(w[1] <= w[0], "margin rose from {} to {}", w[0], w[1]);
        }
        prop_assert!(adv.iter().zip(&x).all(|(a, b)| (a - b).abs() <= eps + 1e-12));
    }

    #[test]
    fn dataset_round_trips_at_f32_precision(
        seed in any::<u64>(),
        count in 1usize..12,
        n in 1usize..9,
        with_delta in any::<bool>(),
    ) {
        let mut rng = Rng::new(seed);
        let samples: Vec<LabeledSample> = (0..count)
            .map(|_| LabeledSample {
                x: rng.gaussian_vec(n),
                y: rng.below(3),
                delta_x: with_delta.then(|| rng.gaussian_vec(n)),
            })
            .collect();
        let ds = Dataset::new("p", n, 3, samples).unwrap();
        let back = decode_dataset(&encode_dataset(&ds), "p").unwrap();
        prop_assert_eq!(back.len(), ds.len());
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            prop_assert_eq!(a.y, b.y);
            for (u, v) in a.x.iter().zip(&b.x) {
                prop_assert_eq!(*u as f32 as f64, *v);
            }
            prop_assert_eq!(a.delta_x.is_some(), b.delta_x.is_some());
            if let (Some(da), Some(db)) = (&a.delta_x, &b.delta_x) {
                for (u, v) in da.iter().zip(db) {
                    prop_assert_eq!(*u as f32 as f64, *v);
                }
            }
        }
    }

    #[test]
    fn numbers_survive_csv_text(v in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
        let r = round_sig9(v);
        prop_assert_eq!(parse_num(&fmt_num(r)).unwrap(), r);
        prop_assert_eq!(round_sig9(r), r);
        if v != 0.0 {
            prop_assert!(((r - v) / v).abs() < 1e-8);
        }
    }

    #[test]
    fn curves_survive_csv_files(points in prop::collection::vec((0.0f64..10.0, 0.0f64..1.0), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let curve = RobustnessCurve { points, attack: "pgd-linf".into() };
        write_curve_csv(&curve, &path).unwrap();
        let back = read_curve_csv(&path, "pgd-linf").unwrap();
        let expected: Vec<(f64, f64)> = curve.points.iter().map(|&(e, a)| (round_sig9(e), round_sig9(a))).collect();
        prop_assert_eq!(back.points, expected);
    }
}
