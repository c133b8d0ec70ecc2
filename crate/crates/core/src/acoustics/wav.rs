use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Signal;
use crate::error::{Error, Result};

fn wav_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// Writes a mono 32-bit float WAV.
pub fn write_wav(path: &Path, sig: &Signal) -> Result<()> {
    let rate = sig.sample_rate.round();
    if !(rate >= 1.0 && rate <= u32::MAX as f64) || rate != sig.sample_rate {
        return Err(Error::InvalidParams(format!(
            "sample rate {} Hz is not a positive integer",
            sig.sample_rate
        )));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: rate as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in &sig.samples {
        w.write_sample(s as f32).map_err(|e| wav_err(path, e))?;
    }
    w.finalize().map_err(|e| wav_err(path, e))
}

/// Reads a mono WAV holding 16-bit integer or 32-bit float PCM. Integer
/// samples are scaled to [-1, 1).
pub fn read_wav(path: &Path) -> Result<Signal> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    // a short read past the header means a truncated file, not an I/O fault
    let malformed = |e: hound::Error| Error::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let reader = WavReader::new(BufReader::new(file)).map_err(malformed)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Wav {
            path: path.to_path_buf(),
            message: format!("expected mono, found {} channels", spec.channels),
        });
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::Wav {
                path: path.to_path_buf(),
                message: format!("unsupported sample format {fmt:?} with {bits} bits"),
            })
        }
    }
    .map_err(malformed)?;
    if samples.is_empty() {
        return Err(Error::Wav {
            path: path.to_path_buf(),
            message: "no samples".into(),
        });
    }
    Ok(Signal {
        samples,
        sample_rate: f64::from(spec.sample_rate),
    })
}
