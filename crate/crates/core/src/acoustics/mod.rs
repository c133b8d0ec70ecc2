//! Multi-tone reference signals, FFT tone amplitudes and the mapping from
//! channel geometry to per-tone attenuation.

mod wav;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use wav::{read_wav, write_wav};

pub const DEFAULT_SAMPLE_RATE: f64 = 44_100.0;
pub const DEFAULT_DURATION: f64 = 1.0;
pub const MIN_TONE_HZ: f64 = 200.0;
pub const MAX_TONE_HZ: f64 = 2000.0;

/// Per-tone amplitudes normalized by the zero-curvature reference.
pub type FeatureVector = Vec<f64>;

/// Simultaneous reference tones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ToneSetRepr", into = "ToneSetRepr")]
pub struct ToneSet {
    frequencies: Vec<f64>,
    amplitudes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ToneSetRepr {
    frequencies: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl TryFrom<ToneSetRepr> for ToneSet {
    type Error = Error;

    fn try_from(r: ToneSetRepr) -> Result<Self> {
        ToneSet::new(r.frequencies, r.amplitudes)
    }
}

impl From<ToneSet> for ToneSetRepr {
    fn from(t: ToneSet) -> Self {
        ToneSetRepr {
            frequencies: t.frequencies,
            amplitudes: t.amplitudes,
        }
    }
}

impl ToneSet {
    pub fn new(frequencies: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::InvalidParams("tone set is empty".into()));
        }
        if frequencies.len() != amplitudes.len() {
            return Err(Error::DimensionMismatch {
                expected: frequencies.len(),
                got: amplitudes.len(),
            });
        }
        if frequencies
            .iter()
            .any(|f| !(MIN_TONE_HZ..=MAX_TONE_HZ).contains(f))
        {
            return Err(Error::InvalidParams(format!(
                "tone frequencies must lie in [{MIN_TONE_HZ}, {MAX_TONE_HZ}] Hz"
            )));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams(
                "tone frequencies must be strictly increasing".into(),
            ));
        }
        if amplitudes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidParams(
                "reference amplitudes must be positive".into(),
            ));
        }
        Ok(ToneSet {
            frequencies,
            amplitudes,
        })
    }

    /// Tones spaced `step` Hz apart from `start` to `stop` inclusive, all
    /// with reference amplitude `amplitude`.
    pub fn uniform(start: f64, stop: f64, step: f64, amplitude: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidParams("tone step must be positive".into()));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        let freqs: Vec<f64> = (0..n).map(|i| start + i as f64 * step).collect();
        Self::new(freqs, vec![amplitude; n])
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Column names for feature tables: `f200`, `f400`, ...
    pub fn feature_names(&self) -> Vec<String> {
        self.frequencies
            .iter()
            .map(|f| format!("f{}", fmt_hz(*f)))
            .collect()
    }

    fn min_spacing(&self) -> f64 {
        self.frequencies
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

impl Default for ToneSet {
    /// Ten tones, 200 to 2000 Hz. Amplitudes sum to 0.8 so the mix stays
    /// inside full scale even with some bend gain.
    fn default() -> Self {
        ToneSet::uniform(200.0, 2000.0, 200.0, 0.08).expect("default tones are valid")
    }
}

fn fmt_hz(f: f64) -> String {
    if f.fract() == 0.0 {
        format!("{}", f as i64)
    } else {
        format!("{f}")
    }
}

/// Mono sample buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl Signal {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Adds zero-mean Gaussian noise of standard deviation `std`.
    pub fn add_white_noise<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R) -> Result<()> {
        if std == 0.0 {
            return Ok(());
        }
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidParams(e.to_string()))?;
        for s in &mut self.samples {
            *s += normal.sample(rng);
        }
        Ok(())
    }
}

fn check_rate(tones: &ToneSet, sample_rate: f64) -> Result<()> {
    let max_tone = *tones.frequencies.last().expect("tone set is non-empty");
    if !(sample_rate.is_finite() && sample_rate >= 2.0 * max_tone) {
        return Err(Error::InvalidRate {
            sample_rate,
            max_tone,
        });
    }
    Ok(())
}

/// Sum of sinusoids with amplitude `reference * gain` per tone. With
/// `noise_pct > 0` each tone's amplitude is scaled by an independent
/// uniform factor in `[1 - noise_pct, 1 + noise_pct]`.
pub fn synth_signal<R: Rng + ?Sized>(
    tones: &ToneSet,
    gains: &[f64],
    duration: f64,
    sample_rate: f64,
    noise_pct: f64,
    rng: &mut R,
) -> Result<Signal> {
    if gains.len() != tones.len() {
        return Err(Error::DimensionMismatch {
            expected: tones.len(),
            got: gains.len(),
        });
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "duration {duration} must be positive"
        )));
    }
    if !(0.0..1.0).contains(&noise_pct) {
        return Err(Error::InvalidParams(format!(
            "noise fraction {noise_pct} must be in [0, 1)"
        )));
    }
    check_rate(tones, sample_rate)?;

    let amps: Vec<f64> = tones
        .amplitudes
        .iter()
        .zip(gains)
        .map(|(a, g)| {
            let jitter = if noise_pct > 0.0 {
                rng.gen_range(1.0 - noise_pct..=1.0 + noise_pct)
            } else {
                1.0
            };
            a * g * jitter
        })
        .collect();

    let n = (duration * sample_rate).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate;
            tones
                .frequencies
                .iter()
                .zip(&amps)
                .map(|(f, a)| a * (2.0 * PI * f * t).sin())
                .sum()
        })
        .collect();
    Ok(Signal {
        samples,
        sample_rate,
    })
}

/// Linear amplitude of each tone: the largest one-sided magnitude within
/// one bin of the tone, scaled by `2 / N`.
pub fn fft_amplitudes(sig: &Signal, tones: &ToneSet) -> Result<Vec<f64>> {
    check_rate(tones, sig.sample_rate)?;
    let n = sig.samples.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty signal".into()));
    }
    let resolution = sig.sample_rate / n as f64;
    let spacing = tones.min_spacing();
    if tones.len() > 1 && resolution > spacing / 2.0 {
        return Err(Error::Resolution {
            resolution,
            spacing,
        });
    }
    if tones.len() == 1 && resolution > tones.frequencies[0] / 2.0 {
        return Err(Error::Resolution {
            resolution,
            spacing: tones.frequencies[0],
        });
    }

    let mut buf: Vec<Complex<f64>> = sig.samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let half = n / 2;
    Ok(tones
        .frequencies
        .iter()
        .map(|f| {
            let k = (f / resolution).round() as usize;
            let lo = k.saturating_sub(1).max(1);
            let hi = (k + 1).min(half);
            let peak = (lo..=hi).map(|i| buf[i].norm()).fold(0.0, f64::max);
            2.0 * peak / n as f64
        })
        .collect())
}

/// Per-tone bend and height sensitivities of the channel's transmission.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttenuationParams {
    /// Bend sensitivity per tone, per m^-1. Signed.
    pub bend: Vec<f64>,
    /// Height sensitivity per tone, dimensionless, non-decreasing in frequency.
    pub height: Vec<f64>,
    /// Multiplier on the height term for the acoustic path; 2 for a channel
    /// traversed out and back through a U-turn.
    pub path_factor: f64,
}

impl Default for AttenuationParams {
    /// Calibrated for the default ten-tone set and channel.
    fn default() -> Self {
        AttenuationParams {
            bend: vec![
                0.001, -0.0015, 0.001, -0.002, 0.003, 0.008, 0.014, -0.004, 0.009, -0.007,
            ],
            height: vec![
                0.005, 0.0065, 0.008, 0.011, 0.02, 0.04, 0.07, 0.11, 0.17, 0.275,
            ],
            path_factor: 2.0,
        }
    }
}

impl AttenuationParams {
    pub fn validate(&self, tones: &ToneSet) -> Result<()> {
        for v in [&self.bend, &self.height] {
            if v.len() != tones.len() {
                return Err(Error::DimensionMismatch {
                    expected: tones.len(),
                    got: v.len(),
                });
            }
        }
        if self.bend.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParams(
                "bend sensitivities must be finite".into(),
            ));
        }
        if self.height.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidParams(
                "height sensitivities must be non-negative".into(),
            ));
        }
        if self.height.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParams(
                "height sensitivities must be non-decreasing in frequency".into(),
            ));
        }
        if !(self.path_factor >= 0.0 && self.path_factor.is_finite()) {
            return Err(Error::InvalidParams(
                "path factor must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// `(1 + b κ) exp(-c · path · (h0/h - 1))` per tone, clamped at zero.
pub fn attenuation_gains(
    kappa: f64,
    h: f64,
    h0: f64,
    params: &AttenuationParams,
) -> Result<Vec<f64>> {
    if !(h > 0.0) || !(h0 > 0.0) {
        return Err(Error::Domain(format!(
            "channel height {h} m must be positive"
        )));
    }
    // allow round-off above the nominal height
    if h > h0 * (1.0 + 1e-9) {
        return Err(Error::Domain(format!(
            "channel height {h} m exceeds nominal {h0} m"
        )));
    }
    if params.bend.len() != params.height.len() {
        return Err(Error::DimensionMismatch {
            expected: params.bend.len(),
            got: params.height.len(),
        });
    }
    let closure = (h0 / h - 1.0).max(0.0);
    Ok(params
        .bend
        .iter()
        .zip(&params.height)
        .map(|(b, c)| ((1.0 + b * kappa) * (-c * params.path_factor * closure).exp()).max(0.0))
        .collect())
}

/// Elementwise `raw / reference`.
pub fn normalize(raw: &[f64], reference: &[f64]) -> Result<FeatureVector> {
    if raw.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: raw.len(),
        });
    }
    if let Some(i) = reference.iter().position(|r| !(*r > 0.0)) {
        return Err(Error::Normalization(format!(
            "reference amplitude {} at tone {i} is not positive",
            reference[i]
        )));
    }
    Ok(raw.iter().zip(reference).map(|(a, r)| a / r).collect())
}

/// White-noise standard deviation that puts the error of a tone amplitude
/// `amplitude` extracted from `n` samples at `snr_db` below the amplitude.
pub fn noise_std_for_snr(amplitude: f64, snr_db: f64, n: usize) -> f64 {
    amplitude * 10f64.powf(-snr_db / 20.0) * (n as f64 / 2.0).sqrt()
}
