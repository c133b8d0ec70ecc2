#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! `sacsim`: channel simulation, synthetic data, training, evaluation and
//! prediction for the soft acoustic curvature sensor.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sacsim::acoustics::{fft_amplitudes, normalize, read_wav};
use sacsim::channel::{
    save_profile_csv, save_sweep_csv, solve_channel, solve_channel_from, ChannelSolution,
};
use sacsim::pipeline::{
    calibration_reference, check_test_grid, evaluate, generate_dataset, ingest_recordings,
    noise_robustness, robustness_csv, train, write_recordings, Sensor,
};
use sacsim::regress::{Dataset, SavedModel};
use sacsim::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "sacsim",
    version,
    about = "Soft acoustic curvature sensor toolkit"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration
    #[arg(long, global = true, env = "SACSIM_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the channel at one curvature or over a sweep
    Simulate {
        /// Single curvature, 1/m
        #[arg(long, conflicts_with = "sweep", allow_negative_numbers = true)]
        kappa: Option<f64>,
        /// START:STOP:STEP in 1/m (default 0:60:5)
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Generate the synthetic training set
    Synth {
        /// Also write one WAV per sample and a manifest
        #[arg(long)]
        emit_wav: bool,
        /// Also write per-tone amplitude-vs-curvature curves
        #[arg(long)]
        figure: bool,
    },
    /// Rank the configured models and save the best
    Train {
        /// Dataset CSV (default: OUT/dataset.csv)
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Build the dataset from a WAV manifest instead
        #[arg(long, conflicts_with = "dataset")]
        from_wav: Option<PathBuf>,
    },
    /// Per-curvature error report on fresh synthetic recordings
    Eval {
        /// Model file (default: OUT/model.json)
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Estimate curvature from a recording
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        /// Zero-curvature recording used for normalization
        #[arg(long)]
        reference: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        if e.is_numerical() {
            return Failure::Numerical(msg);
        }
        match e {
            Error::InvalidParams(_)
            | Error::InvalidInput(_)
            | Error::CurvatureRange { .. }
            | Error::InvalidRate { .. }
            | Error::Resolution { .. } => Failure::Usage(msg),
            _ => Failure::Data(msg),
        }
    }
}

type Outcome = Result<(), Failure>;

fn write_file(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn make_dir(path: &Path) -> Outcome {
    std::fs::create_dir_all(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_config(g: &Global) -> Result<RunConfig, Failure> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p).map_err(Failure::Usage)?,
        None => RunConfig::default(),
    };
    let seed = g.seed.unwrap_or(cfg.seed);
    cfg.apply_seed(seed);
    if let Some(o) = &g.out {
        cfg.out_dir = Some(o.clone());
    }
    Ok(cfg)
}

fn sensor(cfg: &RunConfig) -> Result<Sensor, Failure> {
    Ok(Sensor::new(
        &cfg.channel,
        cfg.attenuation.clone(),
        &cfg.protocol,
    )?)
}

fn parse_sweep(s: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Usage(format!("--sweep expects START:STOP:STEP, got `{s}`"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || stop < start {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).collect())
}

fn simulate(cfg: &RunConfig, kappa: Option<f64>, sweep: Option<String>) -> Outcome {
    let kappas = match (kappa, sweep) {
        (Some(k), _) => vec![k],
        (None, Some(s)) => parse_sweep(&s)?,
        (None, None) => parse_sweep("0:60:5")?,
    };
    for k in &kappas {
        if !(0.0..=sacsim::channel::MAX_CURVATURE).contains(k) {
            return Err(Failure::Usage(format!(
                "curvature {k} outside [0, {}] 1/m",
                sacsim::channel::MAX_CURVATURE
            )));
        }
    }
    let ch = cfg.channel.config()?;
    let out = cfg.out_dir();
    let profiles = out.join("profiles");
    make_dir(&profiles)?;

    let mut sols: Vec<ChannelSolution> = Vec::new();
    let mut failure = None;
    for &k in &kappas {
        let sol = match sols.last() {
            Some(prev) if prev.kappa <= k => solve_channel_from(prev, k, &ch, &cfg.channel.solver),
            _ => solve_channel(k, &ch, &cfg.channel.solver),
        };
        match sol {
            Ok(s) => {
                save_profile_csv(&profiles.join(format!("kappa_{k}.csv")), &s)?;
                sols.push(s);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    save_sweep_csv(&out.join("min_height.csv"), &sols)?;

    let mut summary = String::new();
    for s in &sols {
        let _ = writeln!(
            summary,
            "kappa {:>6} 1/m  min height {:.6e} m  residual {:.3e}  iterations {}",
            s.kappa,
            s.min_height(),
            s.residual_norm,
            s.iterations
        );
    }
    let status = match &failure {
        None => format!("converged {}/{}", sols.len(), kappas.len()),
        Some(e) => format!("FAILED after {}/{}: {e}", sols.len(), kappas.len()),
    };
    let _ = writeln!(summary, "{status}");
    write_file(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    match failure {
        None => Ok(()),
        Some(e) => Err(e.into()),
    }
}

fn synth(cfg: &RunConfig, emit_wav: bool, figure: bool) -> Outcome {
    let s = sensor(cfg)?;
    let out = cfg.out_dir();
    make_dir(&out)?;
    let g = generate_dataset(&cfg.protocol, &s)?;
    let path = out.join("dataset.csv");
    g.dataset.write_csv(&path)?;
    println!("{} rows -> {}", g.dataset.len(), path.display());
    if emit_wav {
        let manifest = write_recordings(&cfg.protocol, &s, &out.join("wav"))?;
        println!("recordings -> {}", manifest.display());
    }
    if figure {
        let kappas: Vec<f64> = (0..=60).map(f64::from).collect();
        let curves = s.amplitude_curves(&kappas)?;
        let mut text = format!("kappa,{}\n", s.tones.feature_names().join(","));
        for (k, row) in kappas.iter().zip(curves) {
            let vals: Vec<String> = row.iter().map(f64::to_string).collect();
            let _ = writeln!(text, "{k},{}", vals.join(","));
        }
        let fig = out.join("amplitude_vs_curvature.csv");
        write_file(&fig, &text)?;
        println!("figure data -> {}", fig.display());
    }
    Ok(())
}

fn train_cmd(cfg: &RunConfig, dataset: Option<PathBuf>, from_wav: Option<PathBuf>) -> Outcome {
    let out = cfg.out_dir();
    let data = match from_wav {
        Some(m) => ingest_recordings(&m, &cfg.protocol.tones)?.dataset,
        None => Dataset::read_csv(&dataset.unwrap_or_else(|| out.join("dataset.csv")))?,
    };
    if data.len() < cfg.train.folds.max(2) {
        return Err(Failure::Data(format!(
            "{} rows are too few for {}-fold cross-validation",
            data.len(),
            cfg.train.folds
        )));
    }
    let t = train(&data, &cfg.train)?;
    make_dir(&out)?;
    t.model.save(&out.join("model.json"))?;
    write_file(&out.join("selection.csv"), &t.selection.to_csv())?;
    let text = format!(
        "{}\nselected {}; holdout RMSE {:.4} 1/m\n",
        t.selection,
        t.model.spec.name(),
        t.holdout_rmse
    );
    write_file(&out.join("selection.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, model: Option<PathBuf>) -> Outcome {
    let out = cfg.out_dir();
    let model = SavedModel::load(&model.unwrap_or_else(|| out.join("model.json")))?;
    let s = sensor(cfg)?;
    if model.model.dim() != s.tones.len() {
        return Err(Failure::Data(format!(
            "model expects {} features but the tone set has {}",
            model.model.dim(),
            s.tones.len()
        )));
    }
    check_test_grid(&cfg.protocol.curvatures, &cfg.eval.curvatures)?;
    let reference = calibration_reference(&cfg.protocol, &s)?;
    let report = evaluate(&model, &s, &cfg.eval, &reference)?;
    let rob = noise_robustness(&model, &s, &cfg.eval, &reference, &cfg.robustness.snr_db)?;
    make_dir(&out)?;
    write_file(&out.join("errors.csv"), &report.to_csv())?;
    write_file(&out.join("scatter.csv"), &report.scatter_csv())?;
    write_file(&out.join("robustness.csv"), &robustness_csv(&rob))?;
    let text = format!("{}\n{report}\n", model.spec.name());
    write_file(&out.join("errors.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn predict(cfg: &RunConfig, model: &Path, wav: &Path, reference: &Path) -> Outcome {
    let model = SavedModel::load(model)?;
    let tones = &cfg.protocol.tones;
    if model.model.dim() != tones.len() {
        return Err(Failure::Data(format!(
            "model expects {} features but the tone set has {}",
            model.model.dim(),
            tones.len()
        )));
    }
    let raw = fft_amplitudes(&read_wav(wav)?, tones)?;
    let base = fft_amplitudes(&read_wav(reference)?, tones)?;
    let p = model.model.predict(&normalize(&raw, &base)?)?;
    let std = p.std.map_or("nan".to_string(), |s| s.to_string());
    println!("{},{std}", p.mean);
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Simulate { kappa, sweep } => simulate(&cfg, kappa, sweep),
        Command::Synth { emit_wav, figure } => synth(&cfg, emit_wav, figure),
        Command::Train { dataset, from_wav } => train_cmd(&cfg, dataset, from_wav),
        Command::Eval { model } => eval_cmd(&cfg, model),
        Command::Predict {
            model,
            wav,
            reference,
        } => predict(&cfg, &model, &wav, &reference),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
