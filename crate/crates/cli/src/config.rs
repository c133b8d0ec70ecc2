use std::path::{Path, PathBuf};

use sacsim::acoustics::AttenuationParams;
use sacsim::pipeline::{ChannelSpec, EvalSpec, ProtocolSpec, TrainSpec};
use serde::{Deserialize, Serialize};

/// Everything a run needs. Every field has a default, so an empty file (or
/// no file at all) reproduces the reference study.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds generation, fold assignment and test recordings. Overrides the
    /// per-stage seeds.
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub channel: ChannelSpec,
    pub attenuation: AttenuationParams,
    pub protocol: ProtocolSpec,
    pub train: TrainSpec,
    pub eval: EvalSpec,
    pub robustness: Robustness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Robustness {
    /// Feature-domain SNR levels, dB, least noisy first.
    pub snr_db: Vec<f64>,
}

impl Default for Robustness {
    fn default() -> Self {
        Robustness {
            snr_db: vec![60.0, 50.0, 40.0, 30.0, 20.0],
        }
    }
}

pub const DEFAULT_OUT: &str = "sacsim-out";

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Pushes the run seed down into every stage.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.protocol.seed = seed;
        self.train.seed = seed;
        self.eval.seed = seed;
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(
            toml::from_str::<RunConfig>("").unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn seed_reaches_every_stage() {
        let mut cfg = RunConfig::default();
        cfg.apply_seed(42);
        assert_eq!(
            (cfg.protocol.seed, cfg.train.seed, cfg.eval.seed),
            (42, 42, 42)
        );
    }
}
