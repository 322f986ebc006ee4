use flashover_core::analytics::{
    classify_pixel, count_bands, rate, Band, BandSeries, CountMode, PredictorConfig,
};
use flashover_core::pipeline::{analyze_frames, predict};
use flashover_core::sim::{generate_dataset, Scenario, ScenarioParams};

fn flashover(seed: u64) -> Scenario {
    Scenario::new(ScenarioParams {
        seed,
        ..ScenarioParams::default()
    })
    .unwrap()
}

fn truth_series(sc: &Scenario) -> BandSeries {
    let frames: Vec<_> = sc
        .timeline_states()
        .map(|s| (s.t_sec, sc.render_thermal(&s)))
        .collect();
    analyze_frames(&frames, CountMode::NearestAnchor).unwrap()
}

#[test]
fn jittered_palette_recovers_the_temperature_bands() {
    for seed in [0, 7] {
        let sc = flashover(seed);
        let (mut agree, mut total) = (0usize, 0usize);
        for state in sc.timeline_states() {
            let img = sc.render_thermal(&state);
            for (px, &t) in img.pixels().zip(&state.temperature) {
                total += 1;
                agree += usize::from(classify_pixel(px) == Some(Band::from_temperature(t as f64)));
            }
        }
        let share = agree as f64 / total as f64;
        assert!(share >= 0.999, "seed {seed}: {share}");
    }
}

#[test]
fn states_respect_physical_bounds() {
    let sc = flashover(3);
    for state in sc.timeline_states().step_by(7) {
        assert!(state
            .temperature
            .iter()
            .all(|&t| (0.0..=2000.0).contains(&t)));
        assert!(state.smoke.iter().all(|&s| (0.0..=1.0).contains(&s)));
        assert_eq!(state.truth_counts().band_sum(), (64 * 64) as u64);
    }
}

#[test]
fn hot_fraction_climbs_through_the_lead_window() {
    for seed in 0..5 {
        let sc = flashover(seed);
        let f = 200.0;
        let hot: Vec<(f64, f64)> = sc
            .timeline_states()
            .filter(|s| s.t_sec >= f - 60.0 && s.t_sec <= f)
            .map(|s| (s.t_sec, s.truth_counts().hot_fraction().unwrap()))
            .collect();
        for w in hot.windows(2) {
            assert!(w[1].1 >= w[0].1, "seed {seed}: drop at t={}", w[1].0);
        }
    }
}

#[test]
fn steepest_growth_precedes_flashover() {
    for seed in 0..5 {
        let sc = flashover(seed);
        let states: Vec<_> = sc.timeline_states().collect();
        let times: Vec<f64> = states.iter().map(|s| s.t_sec).collect();
        let hot: Vec<f64> = states
            .iter()
            .map(|s| s.truth_counts().hot_fraction().unwrap())
            .collect();
        let r = rate(&times, &hot).unwrap();
        let (imax, _) =
            r.iter().enumerate().fold(
                (0, f64::MIN),
                |best, (i, &v)| if v > best.1 { (i, v) } else { best },
            );
        assert!(
            (140.0..=200.0).contains(&times[imax]),
            "seed {seed}: peak rate at t={}",
            times[imax]
        );
    }
}

#[test]
fn ground_truth_stream_alerts_ahead_of_flashover() {
    let sc = flashover(0);
    let alert = predict(&truth_series(&sc), &PredictorConfig::default(), Some(200.0))
        .unwrap()
        .expect("flashover scenario alerts");
    let lead = alert.lead_time_sec.unwrap();
    assert!((40.0..=120.0).contains(&lead), "lead {lead}");
}

#[test]
fn control_stream_stays_quiet() {
    for seed in 0..3 {
        let sc = Scenario::new(ScenarioParams::control(seed)).unwrap();
        let alert = predict(&truth_series(&sc), &PredictorConfig::default(), None).unwrap();
        assert!(alert.is_none(), "seed {seed}: {alert:?}");
    }
}

#[test]
fn dataset_truth_matches_its_thermal_frames() {
    let ds = generate_dataset(&ScenarioParams::default()).unwrap();
    assert_eq!(ds.frames.len(), 40);
    for (frame, entry) in ds.frames.iter().zip(&ds.manifest) {
        assert_eq!(frame.t_sec, entry.t_sec);
        let counts = count_bands(&frame.thermal, CountMode::NearestAnchor);
        assert_eq!(counts.band_sum(), frame.truth.band_sum());
        for band in Band::ALL {
            assert_eq!(
                counts.get(band),
                frame.truth.get(band),
                "t={} {band:?}",
                frame.t_sec
            );
        }
        assert_eq!(frame.visual.width(), frame.thermal.width());
    }
}
