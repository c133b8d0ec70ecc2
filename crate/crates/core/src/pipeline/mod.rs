//! End-to-end synthetic study: channel geometry to tone amplitudes to
//! curvature estimates, plus error reporting and recording ingest.

mod report;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::{
    attenuation_gains, fft_amplitudes, noise_std_for_snr, normalize, read_wav, synth_signal,
    AttenuationParams, Signal, ToneSet, DEFAULT_DURATION, DEFAULT_SAMPLE_RATE,
};
use crate::channel::{sweep_channel, ChannelConfig, SidewallModel, SolverOptions, MAX_CURVATURE};
use crate::error::{Error, Result};
use crate::geom::{BeamSection, DEFAULT_ROD_STEPS};
use crate::regress::{
    holdout_split, model_select, Dataset, ModelSpec, SavedModel, SelectionReport,
};

pub use report::{robustness_csv, ErrorReport, ErrorRow, RobustnessRow, ROBUSTNESS_HEADER};

/// Default test curvatures, m^-1. Interleaved with the training grid.
pub const TEST_CURVATURES: [f64; 14] = [
    0.0, 2.5, 7.5, 12.5, 17.5, 22.5, 27.5, 32.5, 37.5, 42.5, 47.5, 52.5, 57.5, 60.0,
];
pub const DEFAULT_REPETITIONS: usize = 5;

pub const MANIFEST_HEADER: &str = "path,kappa_per_m";

// RNG stream domains, so training, test and injected noise never share draws
const STREAM_TRAIN: u64 = 0;
const STREAM_TEST: u64 = 1;
const STREAM_ADDED: u64 = 2;

fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 48) | index);
    rng
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(0.0..=MAX_CURVATURE).contains(&kappa) {
        return Err(Error::CurvatureRange {
            kappa,
            min: 0.0,
            max: MAX_CURVATURE,
        });
    }
    Ok(())
}

/// Serializable channel settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSpec {
    pub beam: BeamSection,
    /// Nominal channel height, m.
    pub h0: f64,
    pub sidewall: SidewallModel,
    pub n_steps: usize,
    pub solver: SolverOptions,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec {
            beam: BeamSection::default(),
            h0: 1e-3,
            sidewall: SidewallModel::default(),
            n_steps: DEFAULT_ROD_STEPS,
            solver: SolverOptions::default(),
        }
    }
}

impl ChannelSpec {
    pub fn config(&self) -> Result<ChannelConfig> {
        ChannelConfig::new(&self.beam, self.h0, self.sidewall, self.n_steps)
    }
}

/// Dataset generation protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSpec {
    /// Training curvatures, m^-1.
    pub curvatures: Vec<f64>,
    pub samples_per_curvature: usize,
    /// Per-tone multiplicative amplitude jitter, as a fraction.
    pub noise_pct: f64,
    pub tones: ToneSet,
    pub sample_rate: f64,
    /// Recording length, s.
    pub duration: f64,
    pub seed: u64,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            curvatures: (0..=12).map(|i| 5.0 * i as f64).collect(),
            samples_per_curvature: 50,
            noise_pct: 0.03,
            tones: ToneSet::default(),
            sample_rate: DEFAULT_SAMPLE_RATE,
            duration: DEFAULT_DURATION,
            seed: 0,
        }
    }
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<()> {
        if self.curvatures.is_empty() {
            return Err(Error::InvalidParams("no training curvatures".into()));
        }
        for &k in &self.curvatures {
            check_kappa(k)?;
        }
        if self.samples_per_curvature == 0 {
            return Err(Error::InvalidParams(
                "samples per curvature must be at least 1".into(),
            ));
        }
        if !(self.noise_pct >= 0.0 && self.noise_pct < 1.0) {
            return Err(Error::InvalidParams(format!(
                "noise fraction {} must be in [0, 1)",
                self.noise_pct
            )));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "duration {} must be positive",
                self.duration
            )));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.curvatures.len() * self.samples_per_curvature
    }

    fn row_kappa(&self, row: usize) -> f64 {
        self.curvatures[row / self.samples_per_curvature]
    }
}

/// The simulated sensor: channel mechanics plus acoustics.
#[derive(Clone, Debug)]
pub struct Sensor {
    pub channel: ChannelConfig,
    pub solver: SolverOptions,
    pub attenuation: AttenuationParams,
    pub tones: ToneSet,
    pub sample_rate: f64,
    pub duration: f64,
}

impl Sensor {
    pub fn new(
        channel: &ChannelSpec,
        attenuation: AttenuationParams,
        protocol: &ProtocolSpec,
    ) -> Result<Self> {
        attenuation.validate(&protocol.tones)?;
        protocol.validate()?;
        Ok(Sensor {
            channel: channel.config()?,
            solver: channel.solver,
            attenuation,
            tones: protocol.tones.clone(),
            sample_rate: protocol.sample_rate,
            duration: protocol.duration,
        })
    }

    /// Minimum channel height for each curvature. Each distinct curvature is
    /// solved once, in an ascending continuation sweep.
    pub fn heights(&self, kappas: &[f64]) -> Result<Vec<f64>> {
        for &k in kappas {
            check_kappa(k)?;
        }
        let mut grid: Vec<f64> = kappas.to_vec();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let sols = sweep_channel(&grid, &self.channel, &self.solver)?;
        Ok(kappas
            .iter()
            .map(|k| {
                let i = grid.partition_point(|g| g < k);
                sols[i].min_height()
            })
            .collect())
    }

    pub fn gains(&self, kappa: f64, h: f64) -> Result<Vec<f64>> {
        attenuation_gains(kappa, h, self.channel.h0, &self.attenuation)
    }

    /// One recording at curvature `kappa` with minimum height `h`.
    pub fn record(
        &self,
        kappa: f64,
        h: f64,
        noise_pct: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Signal> {
        let g = self.gains(kappa, h)?;
        synth_signal(
            &self.tones,
            &g,
            self.duration,
            self.sample_rate,
            noise_pct,
            rng,
        )
    }

    pub fn amplitudes(&self, sig: &Signal) -> Result<Vec<f64>> {
        fft_amplitudes(sig, &self.tones)
    }

    /// Noiseless normalized amplitude of every tone across `kappas`.
    pub fn amplitude_curves(&self, kappas: &[f64]) -> Result<Vec<Vec<f64>>> {
        let hs = self.heights(kappas)?;
        let mut rng = stream_rng(0, STREAM_TRAIN, 0);
        let reference = self.amplitudes(&self.record(0.0, self.channel.h0, 0.0, &mut rng)?)?;
        kappas
            .iter()
            .zip(hs)
            .map(|(k, h)| {
                normalize(
                    &self.amplitudes(&self.record(*k, h, 0.0, &mut rng)?)?,
                    &reference,
                )
            })
            .collect()
    }
}

/// Elementwise mean of the raw amplitudes of the `kappa = 0` recordings.
fn reference_from(raw: &[Vec<f64>], kappas: &[f64]) -> Result<Vec<f64>> {
    let zero: Vec<&Vec<f64>> = raw
        .iter()
        .zip(kappas)
        .filter(|(_, k)| **k == 0.0)
        .map(|(r, _)| r)
        .collect();
    let first = zero
        .first()
        .ok_or_else(|| Error::Normalization("no kappa = 0 reference recordings".into()))?;
    let n = zero.len() as f64;
    Ok((0..first.len())
        .map(|i| zero.iter().map(|r| r[i]).sum::<f64>() / n)
        .collect())
}

/// A generated training set with its calibration reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub dataset: Dataset,
    /// Raw tone amplitudes the features were normalized by.
    pub reference: Vec<f64>,
}

/// Runs the protocol: one channel solve per curvature, then independent
/// noisy recordings. The features are normalized by the mean of the
/// `kappa = 0` recordings.
pub fn generate_dataset(protocol: &ProtocolSpec, sensor: &Sensor) -> Result<Generated> {
    protocol.validate()?;
    let heights = sensor.heights(&protocol.curvatures)?;
    let raw: Vec<Vec<f64>> = (0..protocol.n_rows())
        .into_par_iter()
        .map(|row| {
            let c = row / protocol.samples_per_curvature;
            let mut rng = stream_rng(protocol.seed, STREAM_TRAIN, row as u64);
            let sig = sensor.record(
                protocol.curvatures[c],
                heights[c],
                protocol.noise_pct,
                &mut rng,
            )?;
            sensor.amplitudes(&sig)
        })
        .collect::<Result<_>>()?;
    let kappas: Vec<f64> = (0..protocol.n_rows())
        .map(|r| protocol.row_kappa(r))
        .collect();
    let reference = reference_from(&raw, &kappas)?;
    let mut dataset = Dataset::new(sensor.tones.feature_names());
    for (r, k) in raw.iter().zip(&kappas) {
        dataset.push(normalize(r, &reference)?, *k)?;
    }
    Ok(Generated { dataset, reference })
}

/// The reference [`generate_dataset`] would use, recomputed from the
/// `kappa = 0` rows alone.
pub fn calibration_reference(protocol: &ProtocolSpec, sensor: &Sensor) -> Result<Vec<f64>> {
    protocol.validate()?;
    let rows: Vec<usize> = (0..protocol.n_rows())
        .filter(|r| protocol.row_kappa(*r) == 0.0)
        .collect();
    let h = sensor.heights(&[0.0])?[0];
    let raw: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|&row| {
            let mut rng = stream_rng(protocol.seed, STREAM_TRAIN, row as u64);
            sensor.amplitudes(&sensor.record(0.0, h, protocol.noise_pct, &mut rng)?)
        })
        .collect::<Result<_>>()?;
    reference_from(&raw, &vec![0.0; raw.len()])
}

/// Writes one WAV per protocol row plus a manifest listing them, and returns
/// the manifest path.
pub fn write_recordings(protocol: &ProtocolSpec, sensor: &Sensor, dir: &Path) -> Result<PathBuf> {
    protocol.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let heights = sensor.heights(&protocol.curvatures)?;
    let names: Vec<String> = (0..protocol.n_rows())
        .into_par_iter()
        .map(|row| {
            let c = row / protocol.samples_per_curvature;
            let mut rng = stream_rng(protocol.seed, STREAM_TRAIN, row as u64);
            let sig = sensor.record(
                protocol.curvatures[c],
                heights[c],
                protocol.noise_pct,
                &mut rng,
            )?;
            let name = format!("sample_{row:05}.wav");
            crate::acoustics::write_wav(&dir.join(&name), &sig)?;
            Ok(name)
        })
        .collect::<Result<_>>()?;
    let mut text = format!("{MANIFEST_HEADER}\n");
    for (row, name) in names.iter().enumerate() {
        text.push_str(&format!("{name},{}\n", protocol.row_kappa(row)));
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads a `path,kappa_per_m` manifest. Relative paths resolve against the
/// manifest's directory; the `kappa = 0` entries form the reference.
pub fn ingest_recordings(manifest: &Path, tones: &ToneSet) -> Result<Generated> {
    let file = std::fs::File::open(manifest).map_err(|e| Error::io(manifest, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: manifest.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["path", "kappa_per_m"] {
        return Err(parse_err(1, format!("header must be `{MANIFEST_HEADER}`")));
    }
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec
            .map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let kappa: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(line, format!("`{}`: {e}", &rec[1])))?;
        check_kappa(kappa).map_err(|e| parse_err(line, e.to_string()))?;
        entries.push((base.join(rec[0].trim()), kappa));
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let raw: Vec<Vec<f64>> = entries
        .par_iter()
        .map(|(p, _)| fft_amplitudes(&read_wav(p)?, tones))
        .collect::<Result<_>>()?;
    let kappas: Vec<f64> = entries.iter().map(|e| e.1).collect();
    let reference = reference_from(&raw, &kappas)?;
    let mut dataset = Dataset::new(tones.feature_names());
    for (r, k) in raw.iter().zip(&kappas) {
        dataset.push(normalize(r, &reference)?, *k)?;
    }
    Ok(Generated { dataset, reference })
}

/// Rejects test curvatures that coincide with training curvatures, except
/// the range endpoints.
pub fn check_test_grid(train: &[f64], test: &[f64]) -> Result<()> {
    for t in test {
        if *t != 0.0 && *t != MAX_CURVATURE && train.contains(t) {
            return Err(Error::InvalidParams(format!(
                "test curvature {t} m^-1 is also a training curvature"
            )));
        }
    }
    Ok(())
}

/// Test protocol for [`evaluate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    pub curvatures: Vec<f64>,
    pub repetitions: usize,
    pub noise_pct: f64,
    pub seed: u64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            curvatures: TEST_CURVATURES.to_vec(),
            repetitions: DEFAULT_REPETITIONS,
            noise_pct: 0.03,
            seed: 0,
        }
    }
}

fn test_features(
    sensor: &Sensor,
    spec: &EvalSpec,
    reference: &[f64],
    white_std: f64,
) -> Result<Vec<(f64, Vec<f64>)>> {
    if spec.repetitions == 0 {
        return Err(Error::InvalidParams(
            "repetitions must be at least 1".into(),
        ));
    }
    let heights = sensor.heights(&spec.curvatures)?;
    let n = spec.curvatures.len() * spec.repetitions;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let c = i / spec.repetitions;
            let kappa = spec.curvatures[c];
            let mut rng = stream_rng(spec.seed, STREAM_TEST, i as u64);
            let mut sig = sensor.record(kappa, heights[c], spec.noise_pct, &mut rng)?;
            if white_std > 0.0 {
                sig.add_white_noise(
                    white_std,
                    &mut stream_rng(spec.seed, STREAM_ADDED, i as u64),
                )?;
            }
            Ok((kappa, normalize(&sensor.amplitudes(&sig)?, reference)?))
        })
        .collect()
}

/// Absolute curvature errors of `model` on fresh recordings at the test
/// curvatures, normalized by the training `reference`.
pub fn evaluate(
    model: &SavedModel,
    sensor: &Sensor,
    spec: &EvalSpec,
    reference: &[f64],
) -> Result<ErrorReport> {
    let feats = test_features(sensor, spec, reference, 0.0)?;
    let mut pairs = Vec::with_capacity(feats.len());
    for (k, x) in &feats {
        pairs.push((*k, model.model.predict(x)?.mean));
    }
    Ok(ErrorReport::from_predictions(&pairs))
}

/// Average absolute error with additive white noise at each feature SNR in
/// `snr_db`. The first row has no added noise. Levels must be ordered from
/// least to most noise, i.e. descending SNR.
pub fn noise_robustness(
    model: &SavedModel,
    sensor: &Sensor,
    spec: &EvalSpec,
    reference: &[f64],
    snr_db: &[f64],
) -> Result<Vec<RobustnessRow>> {
    if snr_db.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParams(
            "noise levels must be sorted by descending SNR".into(),
        ));
    }
    let n = (sensor.duration * sensor.sample_rate).round() as usize;
    let amp = sensor
        .tones
        .amplitudes()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let mut levels = vec![None];
    levels.extend(snr_db.iter().map(|s| Some(*s)));
    levels
        .into_iter()
        .map(|snr| {
            let std = snr.map_or(0.0, |s| noise_std_for_snr(amp, s, n));
            let feats = test_features(sensor, spec, reference, std)?;
            let mut total = 0.0;
            for (k, x) in &feats {
                total += (model.model.predict(x)?.mean - k).abs();
            }
            Ok(RobustnessRow {
                snr_db: snr,
                avg_error: total / feats.len() as f64,
            })
        })
        .collect()
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct Trained {
    pub selection: SelectionReport,
    /// RMSE of the selected model on the held-out split.
    pub holdout_rmse: f64,
    pub model: SavedModel,
}

/// Settings for [`train`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSpec {
    pub models: Vec<ModelSpec>,
    pub folds: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            models: ModelSpec::default_zoo(),
            folds: 10,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Holds out a stratified test split, ranks the candidates by k-fold
/// validation RMSE on the rest, and refits the best on it.
pub fn train(data: &Dataset, spec: &TrainSpec) -> Result<Trained> {
    if data.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} rows; need enough for a holdout split and {}-fold validation",
            data.len(),
            spec.folds
        )));
    }
    let (fit_part, test_part) = holdout_split(data, spec.holdout_fraction, spec.seed)?;
    let selection = model_select(&fit_part, &spec.models, spec.folds, spec.seed)?;
    let best = selection.best().spec.clone();
    let model = best.fit(&fit_part)?;
    let mut sse = 0.0;
    for (x, k) in test_part.features().iter().zip(test_part.targets()) {
        let e = model.predict(x)?.mean - k;
        sse += e * e;
    }
    Ok(Trained {
        holdout_rmse: (sse / test_part.len() as f64).sqrt(),
        selection,
        model: SavedModel {
            spec: best,
            feature_names: data.names().to_vec(),
            model,
        },
    })
}
