use rand::SeedableRng;
use sacsim::acoustics::{AttenuationParams, ToneSet};
use sacsim::channel::SolverOptions;
use sacsim::pipeline::*;
use sacsim::regress::{Dataset, KernelKind, ModelSpec, SavedModel};
use sacsim::Error;

fn small_protocol(curvatures: Vec<f64>, samples: usize, noise: f64) -> ProtocolSpec {
    ProtocolSpec {
        curvatures,
        samples_per_curvature: samples,
        noise_pct: noise,
        duration: 0.25,
        ..ProtocolSpec::default()
    }
}

fn sensor(p: &ProtocolSpec) -> Sensor {
    Sensor::new(&ChannelSpec::default(), AttenuationParams::default(), p).unwrap()
}

#[test]
fn default_protocol_yields_650_rows() {
    let p = ProtocolSpec::default();
    assert_eq!(p.curvatures.len(), 13);
    let g = generate_dataset(&p, &sensor(&p)).unwrap();
    assert_eq!(g.dataset.len(), 650);
    assert_eq!(g.dataset.dim(), 10);
    assert_eq!(g.dataset.names()[0], "f200");
    assert_eq!(g.dataset.names()[9], "f2000");
}

#[test]
fn noiseless_rows_repeat_and_anchor_at_one() {
    let p = small_protocol(vec![0.0, 20.0, 45.0], 4, 0.0);
    let g = generate_dataset(&p, &sensor(&p)).unwrap();
    let x = g.dataset.features();
    for c in 0..3 {
        for s in 1..4 {
            assert_eq!(x[4 * c + s], x[4 * c]);
        }
    }
    for v in &x[0] {
        assert!((v - 1.0).abs() < 1e-12);
    }
    // tone amplitudes land on exact FFT bins, so the reference is the tone set
    for (r, a) in g.reference.iter().zip(p.tones.amplitudes()) {
        assert!((r - a).abs() < 1e-9);
    }
}

#[test]
fn generation_is_seed_deterministic() {
    let p = small_protocol(vec![0.0, 10.0, 30.0], 5, 0.03);
    let s = sensor(&p);
    let a = generate_dataset(&p, &s).unwrap();
    assert_eq!(a, generate_dataset(&p, &s).unwrap());
    let other = ProtocolSpec {
        seed: 1,
        ..p.clone()
    };
    assert_ne!(a.dataset, generate_dataset(&other, &s).unwrap().dataset);
}

#[test]
fn jitter_stays_within_band() {
    let p = small_protocol(vec![0.0, 25.0], 20, 0.03);
    let s = sensor(&p);
    let g = generate_dataset(&p, &s).unwrap();
    let clean = s.amplitude_curves(&[25.0]).unwrap();
    for (x, k) in g.dataset.features().iter().zip(g.dataset.targets()) {
        if *k == 25.0 {
            // undo the averaged reference to recover each tone's own jitter
            for (((v, c), r), a) in x
                .iter()
                .zip(&clean[0])
                .zip(&g.reference)
                .zip(p.tones.amplitudes())
            {
                let jitter = v * r / (a * c);
                assert!((jitter - 1.0).abs() <= 0.03 + 1e-9, "{jitter}");
            }
        }
    }
}

#[test]
fn protocol_without_zero_curvature_cannot_normalize() {
    let p = small_protocol(vec![10.0, 20.0], 2, 0.0);
    assert!(matches!(
        generate_dataset(&p, &sensor(&p)),
        Err(Error::Normalization(_))
    ));
}

#[test]
fn protocol_validation() {
    let bad = [
        small_protocol(vec![], 1, 0.0),
        small_protocol(vec![0.0, 61.0], 1, 0.0),
        small_protocol(vec![0.0], 0, 0.0),
        small_protocol(vec![0.0], 1, 1.5),
    ];
    for p in bad {
        assert!(p.validate().is_err(), "{p:?}");
    }
}

#[test]
fn solver_failure_reports_the_curvature() {
    let p = small_protocol(vec![0.0, 40.0], 1, 0.0);
    let ch = ChannelSpec {
        solver: SolverOptions {
            max_iterations: 1,
            ..SolverOptions::default()
        },
        ..ChannelSpec::default()
    };
    let s = Sensor::new(&ch, AttenuationParams::default(), &p).unwrap();
    match generate_dataset(&p, &s) {
        Err(Error::NonConvergence { kappa, .. }) => assert!(kappa > 0.0 && kappa <= 40.0),
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn heights_follow_input_order() {
    let p = ProtocolSpec::default();
    let s = sensor(&p);
    let h = s.heights(&[30.0, 0.0, 30.0, 15.0]).unwrap();
    assert_eq!(h[0], h[2]);
    assert!((h[1] - 1e-3).abs() < 1e-12);
    assert!(h[0] < h[3] && h[3] < h[1]);
    assert!(matches!(
        s.heights(&[-1.0]),
        Err(Error::CurvatureRange { .. })
    ));
}

#[test]
fn wav_corpus_roundtrip_matches_in_memory_features() {
    let p = small_protocol(vec![0.0, 15.0, 50.0], 3, 0.03);
    let s = sensor(&p);
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_recordings(&p, &s, dir.path()).unwrap();
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert!(text.starts_with(MANIFEST_HEADER));
    let wav = ingest_recordings(&manifest, &p.tones).unwrap();
    let mem = generate_dataset(&p, &s).unwrap();
    assert_eq!(wav.dataset.targets(), mem.dataset.targets());
    for (a, b) in wav.dataset.features().iter().zip(mem.dataset.features()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }
}

#[test]
fn manifest_errors() {
    let dir = tempfile::tempdir().unwrap();
    let tones = ToneSet::default();
    let m = dir.path().join("m.csv");

    std::fs::write(&m, "path,kappa_per_m\n").unwrap();
    assert!(matches!(
        ingest_recordings(&m, &tones),
        Err(Error::EmptyDataset)
    ));

    let p = small_protocol(vec![5.0], 1, 0.0);
    let s = sensor(&p);
    let sig = s
        .record(
            5.0,
            0.9e-3,
            0.0,
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
    sacsim::acoustics::write_wav(&dir.path().join("a.wav"), &sig).unwrap();
    std::fs::write(&m, "path,kappa_per_m\na.wav,5\n").unwrap();
    assert!(matches!(
        ingest_recordings(&m, &tones),
        Err(Error::Normalization(_))
    ));

    std::fs::write(dir.path().join("bad.wav"), b"RIFF\x10\x00\x00\x00WAVEjunk").unwrap();
    std::fs::write(&m, "path,kappa_per_m\nbad.wav,0\n").unwrap();
    match ingest_recordings(&m, &tones) {
        Err(Error::Wav { path, .. }) => assert!(path.ends_with("bad.wav")),
        other => panic!("expected WAV error, got {other:?}"),
    }

    std::fs::write(&m, "file,kappa\na.wav,0\n").unwrap();
    assert!(matches!(
        ingest_recordings(&m, &tones),
        Err(Error::Parse { line: 1, .. })
    ));
    std::fs::write(&m, "path,kappa_per_m\na.wav,0\na.wav,90\n").unwrap();
    assert!(matches!(
        ingest_recordings(&m, &tones),
        Err(Error::Parse { line: 3, .. })
    ));
}

fn fixed_gpr() -> ModelSpec {
    ModelSpec::gpr(KernelKind::Exponential)
}

fn fit(data: &Dataset, spec: &ModelSpec) -> SavedModel {
    SavedModel {
        spec: spec.clone(),
        feature_names: data.names().to_vec(),
        model: spec.fit(data).unwrap(),
    }
}

#[test]
fn noiseless_evaluation_at_training_curvatures_is_accurate() {
    let p = small_protocol((0..=12).map(|i| 5.0 * i as f64).collect(), 1, 0.0);
    let s = sensor(&p);
    let g = generate_dataset(&p, &s).unwrap();
    let model = fit(&g.dataset, &fixed_gpr());
    let spec = EvalSpec {
        curvatures: vec![10.0, 30.0, 50.0],
        repetitions: 2,
        noise_pct: 0.0,
        seed: 3,
    };
    let report = evaluate(&model, &s, &spec, &g.reference).unwrap();
    for r in &report.rows {
        assert!(r.avg < 0.1, "kappa {}: avg error {}", r.kappa, r.avg);
    }
}

#[test]
fn error_report_rows_are_ordered_and_bounded() {
    let p = small_protocol(vec![0.0, 20.0, 40.0, 60.0], 4, 0.03);
    let s = sensor(&p);
    let g = generate_dataset(&p, &s).unwrap();
    let model = fit(&g.dataset, &ModelSpec::knn(1));
    let spec = EvalSpec {
        curvatures: vec![60.0, 0.0, 30.0],
        repetitions: 3,
        noise_pct: 0.03,
        seed: 0,
    };
    let report = evaluate(&model, &s, &spec, &g.reference).unwrap();
    let ks: Vec<f64> = report.rows.iter().map(|r| r.kappa).collect();
    assert_eq!(ks, vec![60.0, 0.0, 30.0]);
    for r in &report.rows {
        assert!(0.0 <= r.min && r.min <= r.avg && r.avg <= r.max);
    }
    assert_eq!(report.predictions.len(), 9);
    assert!(report.to_csv().starts_with(ErrorReport::CSV_HEADER));
    assert!(report
        .scatter_csv()
        .starts_with(ErrorReport::SCATTER_HEADER));
    assert_eq!(report, evaluate(&model, &s, &spec, &g.reference).unwrap());

    let one = EvalSpec {
        repetitions: 1,
        ..spec.clone()
    };
    for r in evaluate(&model, &s, &one, &g.reference).unwrap().rows {
        assert_eq!(r.min, r.avg);
        assert_eq!(r.avg, r.max);
    }
    let zero = EvalSpec {
        repetitions: 0,
        ..spec
    };
    assert!(evaluate(&model, &s, &zero, &g.reference).is_err());
}

#[test]
fn error_report_from_known_pairs() {
    let r = ErrorReport::from_predictions(&[(10.0, 11.0), (10.0, 9.5), (20.0, 20.0), (10.0, 10.0)]);
    assert_eq!(r.rows.len(), 2);
    assert_eq!(
        (r.rows[0].min, r.rows[0].avg, r.rows[0].max),
        (0.0, 0.5, 1.0)
    );
    assert_eq!(r.global_max(), 1.0);
    let text = r.to_string();
    assert!(text.contains("global max error 1.000"));
}

#[test]
fn test_grid_must_interleave_training_grid() {
    let train = ProtocolSpec::default().curvatures;
    assert!(check_test_grid(&train, &TEST_CURVATURES).is_ok());
    assert!(check_test_grid(&train, &[0.0, 25.0]).is_err());
    assert_eq!(TEST_CURVATURES.len(), 14);
    for t in &TEST_CURVATURES[1..13] {
        assert!(!train.contains(t));
    }
}

#[test]
fn robustness_sweep() {
    let p = small_protocol((0..=12).map(|i| 5.0 * i as f64).collect(), 6, 0.03);
    let s = sensor(&p);
    let g = generate_dataset(&p, &s).unwrap();
    let model = fit(&g.dataset, &fixed_gpr());
    let spec = EvalSpec {
        repetitions: 2,
        ..EvalSpec::default()
    };
    let rows = noise_robustness(&model, &s, &spec, &g.reference, &[60.0, 10.0]).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].snr_db, None);
    let base = evaluate(&model, &s, &spec, &g.reference).unwrap();
    let base_avg = base
        .predictions
        .iter()
        .map(|(k, p)| (p - k).abs())
        .sum::<f64>()
        / base.predictions.len() as f64;
    assert!((rows[0].avg_error - base_avg).abs() < 1e-12);
    assert!(
        (rows[1].avg_error / rows[0].avg_error - 1.0).abs() < 0.1,
        "{rows:?}"
    );
    assert!(rows[2].avg_error >= rows[0].avg_error);
    assert!(robustness_csv(&rows).starts_with(ROBUSTNESS_HEADER));
    assert!(noise_robustness(&model, &s, &spec, &g.reference, &[10.0, 60.0]).is_err());
}

#[test]
fn training_needs_enough_rows() {
    let mut d = Dataset::new(vec!["f200".into()]);
    d.push(vec![1.0], 0.0).unwrap();
    assert!(matches!(
        train(&d, &TrainSpec::default()),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn single_model_training_reports_one_row() {
    let p = small_protocol((0..=12).map(|i| 5.0 * i as f64).collect(), 10, 0.03);
    let g = generate_dataset(&p, &sensor(&p)).unwrap();
    let spec = TrainSpec {
        models: vec![ModelSpec::knn(1)],
        ..TrainSpec::default()
    };
    let t = train(&g.dataset, &spec).unwrap();
    assert_eq!(t.selection.rows.len(), 1);
    assert_eq!(t.model.spec, ModelSpec::knn(1));
    assert!(t.holdout_rmse.is_finite());
}

#[test]
fn calibration_reference_matches_generation() {
    let p = small_protocol(vec![0.0, 30.0, 0.0], 3, 0.03);
    let s = sensor(&p);
    let g = generate_dataset(&p, &s).unwrap();
    assert_eq!(calibration_reference(&p, &s).unwrap(), g.reference);
}
