mod common;

use std::f64::consts::PI;

use proptest::prelude::*;

use saros::corpus::{chronological_split, SplitSpec};
use saros::memory::{
    build_user_series, classify, gph_estimate, mosaic, periodogram, periodogram_full, InitSpec,
    MRule, MemoryConfig, SeriesSource, Verdict,
};
use saros::model::LossConfig;
use saros::synth::{generate, SynthSpec};
use saros::trainers::{train_saros_b, TrainConfig};
use saros::Error;

use common::train_only;

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, 16..200)
}

/// `|sum_t x_t exp(-i l t)|^2 / N` by direct summation.
fn naive_periodogram(x: &[f64], k: usize) -> f64 {
    let n = x.len();
    let l = 2.0 * PI * k as f64 / n as f64;
    let (re, im) = x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
        (re + v * (l * t as f64).cos(), im - v * (l * t as f64).sin())
    });
    (re * re + im * im) / n as f64
}

proptest! {
    #[test]
    fn parseval_over_the_full_grid(x in prop::collection::vec(-10.0f64..10.0, 2..300)) {
        let p = periodogram_full(&x).unwrap();
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let total: f64 = p.iter().sum();
        prop_assert!((total - energy).abs() <= 1e-9 * energy.max(1e-300));
    }

    #[test]
    fn periodogram_matches_direct_dft(x in prop::collection::vec(-10.0f64..10.0, 2..64)) {
        let p = periodogram(&x).unwrap();
        prop_assert_eq!(p.len(), x.len() / 2);
        let scale: f64 = x.iter().map(|v| v * v).sum::<f64>().max(1e-12);
        for (j, &v) in p.iter().enumerate() {
            prop_assert!((v - naive_periodogram(&x, j + 1)).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn estimate_ignores_scale_and_offset(x in series(), c in 0.01f64..100.0, shift in -1e3f64..1e3) {
        let m = MRule::default().frequencies(x.len());
        let d = gph_estimate(&x, m).unwrap().d;
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
        prop_assert!((gph_estimate(&scaled, m).unwrap().d - d).abs() < 1e-9);
        prop_assert!((gph_estimate(&shifted, m).unwrap().d - d).abs() < 1e-9);
    }

    #[test]
    fn classify_is_pure(x in series()) {
        let a = classify(&x, MRule::default(), 8);
        let b = classify(&x, MRule::default(), 8);
        prop_assert_eq!(a, b);
        let d = a.d_hat.unwrap();
        prop_assert_eq!(a.verdict == Verdict::NonStationary, d >= 0.5);
    }
}

#[test]
fn short_series_are_not_estimated() {
    let c = classify(&[1.0, 2.0, 0.5, 3.0, 1.0], MRule::default(), 8);
    assert_eq!(c.verdict, Verdict::TooShort);
    assert_eq!(c.d_hat, None);
}

#[test]
fn embedding_series_have_one_point_per_update() {
    // ten alternating -,+ pairs: ten blocks
    let stream: Vec<(u32, bool)> = (0..20).map(|t| (t % 4, t % 2 == 1)).collect();
    let split = train_only(&[stream], 4);
    let cfg = TrainConfig {
        epochs: 1,
        b_max: Some(100),
        record_trajectory: true,
        ..Default::default()
    };
    let p0 = InitSpec::default().params(1, 4).unwrap();
    let out = train_saros_b(&split, p0, &LossConfig::default(), &cfg).unwrap();
    let s = build_user_series(
        &split,
        out.trajectories.as_ref(),
        SeriesSource::EmbeddingTrajectory,
        0,
    )
    .unwrap();
    assert_eq!(s.len(), 16);
    assert!(s.iter().all(|x| x.values.len() == 10));

    let missing = build_user_series(&split, None, SeriesSource::EmbeddingTrajectory, 0).unwrap_err();
    assert!(missing.to_string().contains("record_trajectory"));
}

#[test]
fn feedback_series_is_the_sign_sequence() {
    let split = train_only(&[vec![(0, false), (1, true), (2, true)]], 3);
    let s = build_user_series(&split, None, SeriesSource::FeedbackSequence, 0).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].values, vec![-1.0, 1.0, 1.0]);
    assert!(build_user_series(&split, None, SeriesSource::FeedbackSequence, 5).is_err());
}

fn small_split() -> saros::corpus::SplitCorpus {
    let data = generate(&SynthSpec {
        n_users: 30,
        n_items: 40,
        interactions_per_user: 60,
        drift_fraction: 0.5,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    chronological_split(&data.corpus, SplitSpec::default()).unwrap()
}

#[test]
fn vacuous_filter_reproduces_plain_training() {
    let split = small_split();
    let cfg = TrainConfig {
        epochs: 3,
        ..Default::default()
    };
    let init = InitSpec::default();
    let mem = MemoryConfig {
        keep_threshold: 0,
        ..Default::default()
    };
    let out = mosaic(&split, &LossConfig::default(), &cfg, &init, &mem).unwrap();
    assert_eq!(out.report.n_kept(), split.n_users);
    let plain = train_saros_b(
        &split,
        init.params(split.n_users, split.n_items).unwrap(),
        &LossConfig::default(),
        &cfg,
    )
    .unwrap();
    assert_eq!(out.params(), &plain.params);
}

#[test]
fn unsatisfiable_filter_is_an_error_with_report() {
    let split = small_split();
    let cfg = TrainConfig {
        epochs: 2,
        ..Default::default()
    };
    let mem = MemoryConfig {
        keep_threshold: 17,
        ..Default::default()
    };
    match mosaic(&split, &LossConfig::default(), &cfg, &InitSpec::default(), &mem) {
        Err(Error::FilteredEmpty { report }) => {
            assert_eq!(report.users.len(), split.n_users);
            assert_eq!(report.n_kept(), 0);
        }
        other => panic!("expected an empty-filter error, got {other:?}"),
    }
}

#[test]
fn report_rows_cover_every_series() {
    let split = small_split();
    let cfg = TrainConfig {
        epochs: 2,
        ..Default::default()
    };
    let out = mosaic(&split, &LossConfig::default(), &cfg, &InitSpec::default(), &MemoryConfig::default());
    let report = match out {
        Ok(o) => o.report,
        Err(Error::FilteredEmpty { report }) => *report,
        Err(e) => panic!("{e}"),
    };
    let mut buf = Vec::new();
    report.write_tsv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + report.series.len());
    assert_eq!(report.series.len(), 16 * split.n_users);
    for u in &report.users {
        assert_eq!(u.keep, u.n_stationary >= 4);
    }
}
