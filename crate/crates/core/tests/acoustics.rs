use std::f64::consts::PI;

use approx::assert_relative_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sacsim::acoustics::{
    attenuation_gains, fft_amplitudes, normalize, read_wav, synth_signal, write_wav,
    AttenuationParams, Signal, ToneSet, DEFAULT_DURATION, DEFAULT_SAMPLE_RATE,
};
use sacsim::channel::{min_height, sweep_channel, ChannelConfig, SolverOptions};
use sacsim::Error;

const FS: f64 = DEFAULT_SAMPLE_RATE;

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(7)
}

fn sine(amp: f64, f: f64) -> Signal {
    let samples = (0..FS as usize)
        .map(|i| amp * (2.0 * PI * f * i as f64 / FS).sin())
        .collect();
    Signal {
        samples,
        sample_rate: FS,
    }
}

#[test]
fn default_tones() {
    let t = ToneSet::default();
    assert_eq!(t.len(), 10);
    assert_eq!(t.frequencies()[0], 200.0);
    assert_eq!(t.frequencies()[9], 2000.0);
    assert_eq!(
        t.feature_names()[..2],
        ["f200".to_string(), "f400".to_string()]
    );
}

#[test]
fn tone_set_validation() {
    assert!(ToneSet::new(vec![100.0], vec![1.0]).is_err());
    assert!(ToneSet::new(vec![400.0, 400.0], vec![1.0, 1.0]).is_err());
    assert!(ToneSet::new(vec![400.0, 300.0], vec![1.0, 1.0]).is_err());
    assert!(ToneSet::new(vec![400.0], vec![1.0, 1.0]).is_err());
    assert!(ToneSet::new(vec![], vec![]).is_err());
}

#[test]
fn single_tone_peak_amplitude() {
    let tones = ToneSet::new(vec![400.0], vec![0.5]).unwrap();
    let sig = synth_signal(&tones, &[1.0], 1.0, FS, 0.0, &mut rng()).unwrap();
    assert_eq!(sig.samples.len(), 44_100);
    let peak = sig.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    assert_relative_eq!(peak, 0.5, epsilon = 1e-4);
}

#[test]
fn zero_gain_is_silence() {
    let tones = ToneSet::default();
    let sig = synth_signal(&tones, &[0.0; 10], 1.0, FS, 0.03, &mut rng()).unwrap();
    assert!(sig.samples.iter().all(|s| *s == 0.0));
}

#[test]
fn nyquist_violation() {
    let tones = ToneSet::default();
    let r = synth_signal(&tones, &[1.0; 10], 1.0, 3000.0, 0.0, &mut rng());
    assert!(matches!(r, Err(Error::InvalidRate { .. })));
}

#[test]
fn pure_tone_recovered() {
    let tones = ToneSet::new(vec![400.0], vec![1.0]).unwrap();
    let a = fft_amplitudes(&sine(0.5, 400.0), &tones).unwrap();
    assert_relative_eq!(a[0], 0.5, epsilon = 1e-3);
}

#[test]
fn two_tones_recovered_and_absent_tone_silent() {
    let mut sig = sine(0.3, 600.0);
    for (s, t) in sig.samples.iter_mut().zip(sine(0.7, 1400.0).samples) {
        *s += t;
    }
    let tones = ToneSet::new(vec![600.0, 1000.0, 1400.0], vec![1.0; 3]).unwrap();
    let a = fft_amplitudes(&sig, &tones).unwrap();
    assert_relative_eq!(a[0], 0.3, epsilon = 1e-3);
    assert!(a[1] < 1e-6, "{}", a[1]);
    assert_relative_eq!(a[2], 0.7, epsilon = 1e-3);
}

#[test]
fn short_window_is_too_coarse() {
    let tones = ToneSet::default();
    let sig = synth_signal(&tones, &[1.0; 10], 0.005, FS, 0.0, &mut rng()).unwrap();
    assert!(matches!(
        fft_amplitudes(&sig, &tones),
        Err(Error::Resolution { .. })
    ));
}

#[test]
fn synthesis_roundtrip_within_half_percent() {
    let tones = ToneSet::default();
    let gains = [1.0, 0.9, 1.2, 0.5, 0.05, 0.7, 1.1, 0.3, 0.01, 0.8];
    let sig = synth_signal(&tones, &gains, DEFAULT_DURATION, FS, 0.0, &mut rng()).unwrap();
    let a = fft_amplitudes(&sig, &tones).unwrap();
    for ((got, g), r) in a.iter().zip(&gains).zip(tones.amplitudes()) {
        assert_relative_eq!(*got, g * r, max_relative = 5e-3);
    }
}

#[test]
fn jitter_stays_within_its_band() {
    let tones = ToneSet::default();
    let gains = vec![1.0; 10];
    let clean = fft_amplitudes(
        &synth_signal(&tones, &gains, 1.0, FS, 0.0, &mut rng()).unwrap(),
        &tones,
    )
    .unwrap();
    let mut r = rng();
    for _ in 0..20 {
        let sig = synth_signal(&tones, &gains, 1.0, FS, 0.03, &mut r).unwrap();
        let feats = normalize(&fft_amplitudes(&sig, &tones).unwrap(), &clean).unwrap();
        assert!(
            feats.iter().all(|f| (f - 1.0).abs() <= 0.03 + 1e-9),
            "{feats:?}"
        );
    }
}

#[test]
fn feature_noise_scales_linearly_with_jitter() {
    let tones = ToneSet::default();
    let gains = vec![1.0; 10];
    let clean = fft_amplitudes(
        &synth_signal(&tones, &gains, 1.0, FS, 0.0, &mut rng()).unwrap(),
        &tones,
    )
    .unwrap();
    let spread = |pct: f64| {
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let mut sq = 0.0;
        let mut n = 0.0;
        for _ in 0..40 {
            let sig = synth_signal(&tones, &gains, 1.0, FS, pct, &mut r).unwrap();
            for f in normalize(&fft_amplitudes(&sig, &tones).unwrap(), &clean).unwrap() {
                sq += (f - 1.0) * (f - 1.0);
                n += 1.0;
            }
        }
        (sq / n).sqrt()
    };
    let s1 = spread(0.01);
    // same seed, so the uniform draws are the same up to scale
    assert_relative_eq!(spread(0.02) / s1, 2.0, max_relative = 1e-6);
    assert_relative_eq!(spread(0.03) / s1, 3.0, max_relative = 1e-6);
    // uniform on [-p, p] has standard deviation p / sqrt(3)
    assert_relative_eq!(s1, 0.01 / 3f64.sqrt(), max_relative = 0.15);
}

#[test]
fn gains_anchor_at_rest() {
    let p = AttenuationParams::default();
    let g = attenuation_gains(0.0, 1e-3, 1e-3, &p).unwrap();
    assert!(g.iter().all(|x| *x == 1.0));
}

#[test]
fn pinched_channel_cuts_some_tone_by_87_percent() {
    let g = attenuation_gains(0.0, 0.2e-3, 1e-3, &AttenuationParams::default()).unwrap();
    assert!(g.iter().any(|x| *x <= 0.13), "{g:?}");
}

#[test]
fn bend_alone_raises_some_tones_and_lowers_others() {
    let g = attenuation_gains(5.0, 1e-3, 1e-3, &AttenuationParams::default()).unwrap();
    assert!(g.iter().any(|x| *x > 1.0));
    assert!(g.iter().any(|x| *x < 1.0));
}

#[test]
fn lower_channel_lowers_every_gain() {
    let p = AttenuationParams::default();
    let a = attenuation_gains(20.0, 0.6e-3, 1e-3, &p).unwrap();
    let b = attenuation_gains(20.0, 0.5e-3, 1e-3, &p).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| y < x));
}

#[test]
fn gains_reject_nonpositive_height() {
    let p = AttenuationParams::default();
    assert!(matches!(
        attenuation_gains(0.0, 0.0, 1e-3, &p),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        attenuation_gains(0.0, -1e-4, 1e-3, &p),
        Err(Error::Domain(_))
    ));
}

#[test]
fn default_params_are_valid_for_default_tones() {
    AttenuationParams::default()
        .validate(&ToneSet::default())
        .unwrap();
    let mut p = AttenuationParams::default();
    p.height.swap(0, 9);
    assert!(p.validate(&ToneSet::default()).is_err());
}

#[test]
fn gains_along_the_solved_channel() {
    // early bending lifts some tones, beyond ~25 m^-1 every tone decays
    let cfg = ChannelConfig::default();
    let kappas: Vec<f64> = (0..=12).map(|i| 5.0 * i as f64).collect();
    let sols = sweep_channel(&kappas, &cfg, &SolverOptions::default()).unwrap();
    let p = AttenuationParams::default();
    let gains: Vec<Vec<f64>> = sols
        .iter()
        .map(|s| attenuation_gains(s.kappa, min_height(s), cfg.h0, &p).unwrap())
        .collect();
    let lifted = gains[1..=5].iter().any(|g| g.iter().any(|x| *x > 1.0));
    assert!(lifted);
    for w in gains[6..].windows(2) {
        assert!(w[0].iter().zip(&w[1]).all(|(a, b)| b < a), "{w:?}");
    }
    assert!(gains[12].iter().all(|x| *x < 1.0));
}

#[test]
fn normalize_examples() {
    let r = [0.2, 0.4, 0.8];
    assert_eq!(normalize(&r, &r).unwrap(), vec![1.0; 3]);
    assert_eq!(normalize(&[0.0; 3], &r).unwrap(), vec![0.0; 3]);
    assert_eq!(normalize(&[0.4, 0.8, 1.6], &r).unwrap(), vec![2.0; 3]);
    assert!(matches!(
        normalize(&r, &[0.2, 0.0, 0.8]),
        Err(Error::Normalization(_))
    ));
}

#[test]
fn wav_float_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tone.wav");
    let tones = ToneSet::default();
    let sig = synth_signal(&tones, &[1.0; 10], 1.0, FS, 0.03, &mut rng()).unwrap();
    write_wav(&path, &sig).unwrap();
    let back = read_wav(&path).unwrap();
    assert_eq!(back.sample_rate, FS);
    assert_eq!(back.samples.len(), sig.samples.len());
    let a = fft_amplitudes(&sig, &tones).unwrap();
    let b = fft_amplitudes(&back, &tones).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_relative_eq!(x, y, epsilon = 1e-6);
    }
}

#[test]
fn wav_reads_16_bit_pcm() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pcm16.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 44_100,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    for s in &sine(0.5, 400.0).samples {
        w.write_sample((s * 32767.0).round() as i16).unwrap();
    }
    w.finalize().unwrap();
    let sig = read_wav(&path).unwrap();
    let tones = ToneSet::new(vec![400.0], vec![1.0]).unwrap();
    assert_relative_eq!(
        fft_amplitudes(&sig, &tones).unwrap()[0],
        0.5,
        epsilon = 1e-3
    );
}

#[test]
fn wav_rejects_stereo_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let stereo = dir.path().join("stereo.wav");
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 44_100,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
    for _ in 0..100 {
        w.write_sample(0i16).unwrap();
    }
    w.finalize().unwrap();
    assert!(matches!(read_wav(&stereo), Err(Error::Wav { .. })));

    let mono = dir.path().join("cut.wav");
    write_wav(&mono, &sine(0.5, 400.0)).unwrap();
    let bytes = std::fs::read(&mono).unwrap();
    std::fs::write(&mono, &bytes[..bytes.len() / 2 + 1]).unwrap();
    assert!(matches!(read_wav(&mono), Err(Error::Wav { .. })));

    assert!(matches!(
        read_wav(&dir.path().join("missing.wav")),
        Err(Error::Io { .. })
    ));
}
