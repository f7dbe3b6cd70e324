use proptest::prelude::*;

use mia_core::classifier::{fit, roc_metrics, FitConfig};
use mia_core::manifest::Orientation;
use mia_core::raster::{blend, decode_image, encode_image, resample_grayscale, RasterImage};
use mia_core::stats::{cohens_d, t_test_independent};
use mia_core::{LowFreqCosine, PerceptualMetric, StrengthSchedule};

fn image(max_side: usize) -> impl Strategy<Value = RasterImage> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0..=1.0f64, w * h * 3).prop_map(move |data| RasterImage::new(w, h, data).unwrap())
    })
}

fn image_pair(max_side: usize) -> impl Strategy<Value = (RasterImage, RasterImage)> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        let px = || prop::collection::vec(0.0..=1.0f64, w * h * 3);
        (px(), px()).prop_map(move |(a, b)| (RasterImage::new(w, h, a).unwrap(), RasterImage::new(w, h, b).unwrap()))
    })
}

fn group(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn png_round_trip_is_quantization(img in image(12)) {
        let bytes = encode_image(&img).unwrap();
        prop_assert_eq!(decode_image(&bytes).unwrap(), img.quantized());
        prop_assert_eq!(encode_image(&img).unwrap(), bytes);
    }

    #[test]
    fn quantized_images_round_trip_exactly(img in image(12)) {
        let q = img.quantized();
        prop_assert_eq!(decode_image(&encode_image(&q).unwrap()).unwrap(), q);
    }

    #[test]
    fn blend_is_pointwise_affine((a, b) in image_pair(8), alpha in 0.0..=1.0f64) {
        let out = blend(&a, &b, alpha).unwrap();
        for ((o, x), y) in out.data().iter().zip(a.data()).zip(b.data()) {
            prop_assert!((o - ((1.0 - alpha) * x + alpha * y)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(o));
        }
    }

    #[test]
    fn resampling_to_a_divisor_preserves_mean_luminance(side in 1usize..6, k in 1usize..5, seed in any::<u64>()) {
        let full = side * k;
        let mut s = mia_core::rng::KeyedStream::new(seed);
        let img = RasterImage::from_fn(full, full, |_, _, _| s.next_f64()).unwrap();
        let thumb = resample_grayscale(&img, side);
        let lum = img.luminance();
        let m_full = lum.iter().sum::<f64>() / lum.len() as f64;
        let m_thumb = thumb.iter().sum::<f64>() / thumb.len() as f64;
        prop_assert!((m_full - m_thumb).abs() < 1e-12);
    }

    #[test]
    fn metric_range_identity_symmetry((a, b) in image_pair(24), side in 1usize..20) {
        let m = LowFreqCosine::new(side);
        let d = m.distance(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, m.distance(&b, &a).unwrap());
        prop_assert_eq!(m.distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn metric_ignores_uniform_brightness_offsets((a, b) in image_pair(16), shift in -0.2..0.2f64) {
        // Keep pixels away from the clamp so the offset is exact.
        let squash = |img: &RasterImage| {
            RasterImage::new(img.width(), img.height(), img.data().iter().map(|v| 0.25 + 0.5 * v).collect()).unwrap()
        };
        let (a, b) = (squash(&a), squash(&b));
        let shifted = RasterImage::new(a.width(), a.height(), a.data().iter().map(|v| v + shift).collect()).unwrap();
        let m = LowFreqCosine::new(8);
        let (d0, d1) = (m.distance(&a, &b).unwrap(), m.distance(&shifted, &b).unwrap());
        prop_assert!((d0 - d1).abs() < 1e-9, "{} vs {}", d0, d1);
    }

    #[test]
    fn t_and_d_are_antisymmetric(x in group(2..=30), y in group(2..=30)) {
        let (t_xy, t_yx) = (t_test_independent(&x, &y).unwrap(), t_test_independent(&y, &x).unwrap());
        prop_assert_eq!(t_xy.df, t_yx.df);
        prop_assert!((t_xy.p - t_yx.p).abs() < 1e-12);
        if t_xy.t.is_finite() {
            prop_assert!((t_xy.t + t_yx.t).abs() < 1e-9);
        }
        let (d_xy, d_yx) = (cohens_d(&x, &y).unwrap(), cohens_d(&y, &x).unwrap());
        prop_assert!((d_xy.d + d_yx.d).abs() < 1e-12);
    }

    #[test]
    fn t_and_d_are_affine_invariant(x in group(3..=30), y in group(3..=30), a in 0.1..10.0f64, b in -5.0..5.0f64) {
        let f = |v: &[f64]| v.iter().map(|z| a * z + b).collect::<Vec<_>>();
        let (t0, t1) = (t_test_independent(&x, &y).unwrap(), t_test_independent(&f(&x), &f(&y)).unwrap());
        prop_assume!(t0.t.is_finite() && t0.t.abs() < 1e6);
        prop_assert!((t0.t - t1.t).abs() < 1e-9 * t0.t.abs().max(1.0));
        prop_assert!((t0.p - t1.p).abs() < 1e-9);
        let (d0, d1) = (cohens_d(&x, &y).unwrap(), cohens_d(&f(&x), &f(&y)).unwrap());
        prop_assert!((d0.d - d1.d).abs() < 1e-9 * d0.d.abs().max(1.0));
    }

    #[test]
    fn p_values_are_probabilities(x in group(2..=20), y in group(2..=20)) {
        let t = t_test_independent(&x, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&t.p));
        prop_assert_eq!(t.df, x.len() + y.len() - 2);
    }

    #[test]
    fn tpr_is_monotone_in_the_fpr_target(
        ins in prop::collection::vec(0.0..1.0f64, 1..60),
        outs in prop::collection::vec(0.0..1.0f64, 1..60),
        f1 in 0.0..1.0f64,
        f2 in 0.0..1.0f64,
    ) {
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let a = roc_metrics(&ins, &outs, lo).unwrap();
        let b = roc_metrics(&ins, &outs, hi).unwrap();
        prop_assert!(a.tpr_at_fpr <= b.tpr_at_fpr);
        prop_assert!((0.0..=1.0).contains(&a.eer));
        prop_assert_eq!(a.eer, b.eer);
    }

    #[test]
    fn schedules_accept_exactly_increasing_lists(mut v in prop::collection::vec(0.0..=1.0f64, 2..8)) {
        v.sort_by(f64::total_cmp);
        v.dedup();
        prop_assume!(v.len() >= 2);
        prop_assert!(StrengthSchedule::new(v.clone(), Orientation::ZeroIsSeedIdentical, "x").is_ok());
        v.reverse();
        prop_assert!(StrengthSchedule::new(v, Orientation::ZeroIsSeedIdentical, "x").is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fitting_is_deterministic_and_standardization_invariant(
        rows in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, any::<bool>()), 8..40),
        scale in 0.5..20.0f64,
        shift in -3.0..3.0f64,
    ) {
        let labels: Vec<bool> = rows.iter().map(|r| r.2).collect();
        let pos = labels.iter().filter(|&&y| y).count();
        prop_assume!(pos >= 2 && labels.len() - pos >= 2);
        let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
        let x2: Vec<Vec<f64>> = x.iter().map(|v| v.iter().map(|z| scale * z + shift).collect()).collect();
        let cfg = FitConfig { max_iter: 400, ..FitConfig::default() };
        let m1 = fit(&x, &labels, "t", &cfg).unwrap();
        prop_assert_eq!(&m1, &fit(&x, &labels, "t", &cfg).unwrap());
        let m2 = fit(&x2, &labels, "t", &cfg).unwrap();
        for (w1, w2) in m1.weights.iter().zip(&m2.weights) {
            prop_assert!((w1 - w2).abs() < 1e-6);
        }
        for (a, b) in x.iter().zip(&x2) {
            prop_assert!((m1.score(a).unwrap() - m2.score(b).unwrap()).abs() < 1e-6);
        }
    }
}
