use flashover_core::analytics::{
    classify_pixel, count_bands, detect_fractions, rate, smooth, CountMode, FlashoverMonitor,
    PredictorConfig,
};
use flashover_core::autodiff::{Tape, Tensor};
use flashover_core::image::Image;
use flashover_core::models::{
    build_discriminator, build_generator, Checkpoint, DiscriminatorSpec, GeneratorSpec,
    TrainingMeta,
};
use flashover_core::rng::stream;
use proptest::prelude::*;

mod support;
use support::band_oracle as oracle;

fn image_strategy() -> impl Strategy<Value = Image> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h * 3)
            .prop_map(move |data| Image::new(w, h, data).unwrap())
    })
}

fn conv_case() -> impl Strategy<Value = (usize, usize, usize, usize, usize, usize, usize, u64)> {
    // (c_in, c_out, k, stride, pad, h, w, seed); input extents are derived from
    // the output extents so the strided geometry tiles exactly.
    (
        1usize..4,
        1usize..4,
        1usize..5,
        1usize..3,
        0usize..3,
        1usize..5,
        1usize..5,
        any::<u64>(),
    )
        .prop_filter_map(
            "extents must be positive",
            |(ci, co, k, s, p, oh, ow, seed)| {
                let extent = |o: usize| (o as isize - 1) * s as isize + k as isize - 2 * p as isize;
                let (h, w) = (extent(oh), extent(ow));
                (p < k && h >= 1 && w >= 1)
                    .then_some((ci, co, k, s, p, h as usize, w as usize, seed))
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(160))]

    #[test]
    fn conv_transpose_is_the_adjoint_of_conv(case in conv_case()) {
        let (ci, co, k, s, p, h, w, seed) = case;
        let mut rng = stream(seed, "adjoint");
        let x = Tensor::uniform(&[1, ci, h, w], -1.0, 1.0, &mut rng);
        let wt = Tensor::uniform(&[co, ci, k, k], -1.0, 1.0, &mut rng);
        let mut tape = Tape::new();
        let (xv, wv) = (tape.constant(x.clone()), tape.constant(wt));
        let cx = tape.conv2d(xv, wv, None, s, p).unwrap();
        let out_shape = tape.value(cx).shape().to_vec();
        let y = Tensor::uniform(&out_shape, -1.0, 1.0, &mut rng);
        let yv = tape.constant(y.clone());
        let ty = tape.conv_transpose2d(yv, wv, None, s, p).unwrap();
        prop_assert_eq!(tape.value(ty).shape(), x.shape());
        let lhs = tape.value(cx).dot(&y);
        let rhs = x.dot(tape.value(ty));
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        prop_assert!((lhs - rhs).abs() / scale <= 1e-4, "{} vs {}", lhs, rhs);
    }
}

proptest! {
    #[test]
    fn classification_matches_brute_force(r in any::<u8>(), g in any::<u8>(), b in any::<u8>()) {
        prop_assert_eq!(classify_pixel([r, g, b]), oracle([r, g, b]));
    }

    #[test]
    fn counts_are_conserved(img in image_strategy()) {
        let c = count_bands(&img, CountMode::NearestAnchor);
        prop_assert_eq!(c.total, img.pixel_count() as u64);
        prop_assert_eq!(c.red + c.yellow + c.green + c.blue + c.background, c.total);
        prop_assert!(c.is_conserved());
        if let Ok(f) = c.hot_fraction() {
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn channel_sum_fraction_is_a_fraction(img in image_strategy()) {
        let c = count_bands(&img, CountMode::ChannelSum);
        if let Ok(f) = c.hot_fraction() {
            prop_assert!((0.0..=1.0).contains(&f), "{}", f);
        }
    }

    #[test]
    fn ppm_roundtrip(img in image_strategy()) {
        let bytes = img.encode_ppm();
        prop_assert_eq!(Image::decode_ppm(&bytes).unwrap(), img);
    }

    #[test]
    fn smoothing_keeps_length_and_bounds(
        values in proptest::collection::vec(0.0f64..1.0, 1..60),
        w in 1usize..9,
    ) {
        let s = smooth(&values, w).unwrap();
        prop_assert_eq!(s.len(), values.len());
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in &s {
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
        let r = rate(&(0..values.len()).map(|i| i as f64).collect::<Vec<_>>(), &values);
        if values.len() >= 2 {
            prop_assert_eq!(r.unwrap().len(), values.len());
        }
    }

    #[test]
    fn raising_theta_never_alerts_earlier(
        steps in proptest::collection::vec(-0.01f64..0.03, 30..120),
        t1 in 0.0005f64..0.02,
        dt in 0.0f64..0.02,
    ) {
        let mut f = 0.0f64;
        let fractions: Vec<f64> = steps.iter().map(|d| { f = (f + d).clamp(0.0, 1.0); f }).collect();
        let times: Vec<f64> = (0..fractions.len()).map(|i| i as f64).collect();
        let low = PredictorConfig { theta: t1, ..PredictorConfig::default() };
        let high = PredictorConfig { theta: t1 + dt, ..PredictorConfig::default() };
        let a_low = detect_fractions(&times, &fractions, &low).unwrap();
        let a_high = detect_fractions(&times, &fractions, &high).unwrap();
        if let Some(h) = a_high {
            let l = a_low.expect("a lower threshold must also alert");
            prop_assert!(l.alert_time_sec <= h.alert_time_sec);
        }
        // pure: same input, same answer
        prop_assert_eq!(detect_fractions(&times, &fractions, &low).unwrap(), a_low);
        // streaming agrees with the batch detector
        let mut m = FlashoverMonitor::new(low).unwrap();
        for (t, v) in times.iter().zip(&fractions) {
            m.push_fraction(*t, *v).unwrap();
        }
        prop_assert_eq!(m.alert(), a_low);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generator_output_matches_input_extent(seed in any::<u64>(), scale in 1usize..4) {
        let spec = GeneratorSpec { base_width: 2, depth: 3, dropout_stages: vec![0], image_size: 8, ..GeneratorSpec::default() };
        let g = build_generator(spec, &mut stream(seed, "g")).unwrap();
        let size = 8 * scale;
        let x = Tensor::uniform(&[1, 3, size, size], -1.0, 1.0, &mut stream(seed, "x"));
        let y = g.infer(&x).unwrap();
        prop_assert_eq!(y.shape(), &[1, 3, size, size]);
        prop_assert!(y.data().iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact(seed in any::<u64>()) {
        let gspec = GeneratorSpec { base_width: 2, depth: 2, dropout_stages: vec![0], image_size: 8, ..GeneratorSpec::default() };
        let dspec = DiscriminatorSpec { base_width: 2, n_layers: 1, image_size: 8, ..DiscriminatorSpec::default() };
        let ckpt = Checkpoint {
            generator: build_generator(gspec, &mut stream(seed, "g")).unwrap(),
            discriminator: build_discriminator(dspec, &mut stream(seed, "d")).unwrap(),
            meta: TrainingMeta {
                epochs: 0, seed, lr: 2e-4, beta1: 0.5, lambda_l1: 100.0, train_pairs: 0,
                final_d_loss: None, final_g_adversarial: None, final_g_l1: None,
            },
        };
        let back = Checkpoint::decode(&ckpt.encode()).unwrap();
        for (a, b) in ckpt.generator.params().tensors().iter().zip(back.generator.params().tensors()) {
            prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        prop_assert_eq!(back, ckpt);
    }
}
