use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

// Small enough that the full chain runs in seconds.
const QUICK: &str = r#"
[protocol]
samples_per_curvature = 10

[train]
folds = 5

[eval]
repetitions = 2

[robustness]
snr_db = [60.0, 20.0]
"#;

fn sacsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sacsim"))
        .current_dir(dir)
        .env_remove("SACSIM_CONFIG")
        .args(args)
        .output()
        .expect("spawn sacsim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert_eq!(code(o), 0, "stderr: {}", stderr(o));
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn quick_dir() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("quick.toml"), QUICK).unwrap();
    dir
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_sweep_writes_decreasing_heights() {
    let dir = TempDir::new().unwrap();
    let o = sacsim(dir.path(), &["simulate", "--out", "o"]);
    ok(&o);
    let text = read(dir.path().join("o/min_height.csv"));
    assert_eq!(
        text.lines().next(),
        Some("kappa,min_height_m,residual_norm,iterations")
    );
    let h: Vec<f64> = csv_rows(&text)
        .iter()
        .map(|r| r[1].parse().unwrap())
        .collect();
    assert_eq!(h.len(), 13);
    assert!(h.windows(2).all(|w| w[1] < w[0]), "{h:?}");
    assert_eq!(
        fs::read_dir(dir.path().join("o/profiles")).unwrap().count(),
        13
    );
    assert!(read(dir.path().join("o/summary.txt")).contains("converged 13/13"));
}

#[test]
fn simulate_flat_channel_at_zero_curvature() {
    let dir = TempDir::new().unwrap();
    ok(&sacsim(
        dir.path(),
        &["simulate", "--kappa", "0", "--out", "o"],
    ));
    let text = read(dir.path().join("o/profiles/kappa_0.csv"));
    assert_eq!(text.lines().next(), Some("s_m,distance_m"));
    for r in csv_rows(&text) {
        let d: f64 = r[1].parse().unwrap();
        assert!((d - 1e-3).abs() < 1e-12, "{d}");
    }
}

#[test]
fn simulate_rejects_bad_curvature() {
    let dir = TempDir::new().unwrap();
    let o = sacsim(dir.path(), &["simulate", "--kappa", "-1", "--out", "o"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("-1"));
    assert_eq!(
        code(&sacsim(
            dir.path(),
            &["simulate", "--sweep", "0:10", "--out", "o"]
        )),
        1
    );
    assert_eq!(code(&sacsim(dir.path(), &["simulate", "--bogus"])), 1);
}

#[test]
fn simulate_flags_partial_results_on_solver_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = "[channel.solver]\nmax_iterations = 1\ncontinuation_step = 60.0\n";
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let o = sacsim(
        dir.path(),
        &[
            "--config", "c.toml", "simulate", "--sweep", "0:10:5", "--out", "o",
        ],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(read(dir.path().join("o/summary.txt")).contains("FAILED after 1/3"));
    assert_eq!(read(dir.path().join("o/min_height.csv")).lines().count(), 2);
}

#[test]
fn synth_default_protocol_has_650_rows() {
    let dir = TempDir::new().unwrap();
    ok(&sacsim(dir.path(), &["synth", "--out", "o", "--figure"]));
    let text = read(dir.path().join("o/dataset.csv"));
    assert_eq!(
        text.lines().next(),
        Some("kappa,f200,f400,f600,f800,f1000,f1200,f1400,f1600,f1800,f2000")
    );
    assert_eq!(text.lines().count(), 651);
    let fig = read(dir.path().join("o/amplitude_vs_curvature.csv"));
    assert_eq!(fig.lines().count(), 62);
    assert!(fig.lines().nth(1).unwrap().starts_with("0,1,1,1"));
}

#[test]
fn seed_makes_runs_repeatable() {
    let dir = quick_dir();
    let run = |out: &str, seed: &str| {
        ok(&sacsim(
            dir.path(),
            &[
                "--config",
                "quick.toml",
                "--seed",
                seed,
                "synth",
                "--out",
                out,
            ],
        ));
        fs::read(dir.path().join(out).join("dataset.csv")).unwrap()
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn full_chain_synth_train_eval_predict() {
    let dir = quick_dir();
    let p = dir.path();
    let cfg = ["--config", "quick.toml", "--out", "o"];
    let with = |extra: &[&'static str]| [&cfg[..], extra].concat();

    ok(&sacsim(p, &with(&["synth", "--emit-wav"])));
    assert_eq!(read(p.join("o/dataset.csv")).lines().count(), 131);
    let manifest = read(p.join("o/wav/manifest.csv"));
    assert_eq!(manifest.lines().next(), Some("path,kappa_per_m"));
    assert_eq!(manifest.lines().count(), 131);

    ok(&sacsim(p, &with(&["train"])));
    assert!(p.join("o/model.json").exists());
    let sel = read(p.join("o/selection.csv"));
    assert_eq!(sel.lines().next(), Some("rank,model,validation_rmse"));
    let rows = csv_rows(&sel);
    assert_eq!(rows.len(), 7);
    let rmse: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(rmse.windows(2).all(|w| w[0] <= w[1]), "{rmse:?}");
    assert!(read(p.join("o/selection.txt")).contains("holdout RMSE"));

    ok(&sacsim(p, &with(&["eval"])));
    let errors = read(p.join("o/errors.csv"));
    assert_eq!(
        errors.lines().next(),
        Some("kappa,min_abs_error,avg_abs_error,max_abs_error")
    );
    assert_eq!(csv_rows(&errors).len(), 14);
    assert_eq!(
        read(p.join("o/scatter.csv")).lines().next(),
        Some("kappa,kappa_hat")
    );
    let rob = read(p.join("o/robustness.csv"));
    assert_eq!(rob.lines().next(), Some("snr_db,avg_abs_error"));
    assert_eq!(
        csv_rows(&rob)
            .iter()
            .map(|r| r[0].as_str())
            .collect::<Vec<_>>(),
        ["inf", "60", "20"]
    );

    // Row 60 of the quick protocol sits at 30 1/m.
    let wav30 = "o/wav/sample_00060.wav";
    assert!(manifest.lines().nth(61).unwrap().ends_with(",30"));
    let reference = "o/wav/sample_00000.wav";
    let o = sacsim(
        p,
        &with(&[
            "predict",
            "--model",
            "o/model.json",
            "--wav",
            wav30,
            "--reference",
            reference,
        ]),
    );
    ok(&o);
    let line = String::from_utf8(o.stdout).unwrap();
    let parts: Vec<f64> = line.trim().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(parts.len(), 2);
    assert!((parts[0] - 30.0).abs() < 2.0, "{line}");
    assert!(parts[1] >= 0.0);

    let o = sacsim(
        p,
        &with(&[
            "predict",
            "--model",
            "o/model.json",
            "--wav",
            reference,
            "--reference",
            reference,
        ]),
    );
    ok(&o);
    let k0: f64 = String::from_utf8(o.stdout)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(k0.abs() < 2.0, "{k0}");

    let bytes = fs::read(p.join(wav30)).unwrap();
    fs::write(p.join("cut.wav"), &bytes[..bytes.len() / 3]).unwrap();
    let o = sacsim(
        p,
        &with(&[
            "predict",
            "--model",
            "o/model.json",
            "--wav",
            "cut.wav",
            "--reference",
            reference,
        ]),
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    // The WAV manifest trains the same models as the CSV route.
    ok(&sacsim(
        p,
        &[
            "--config",
            "quick.toml",
            "--out",
            "w",
            "train",
            "--from-wav",
            "o/wav/manifest.csv",
        ],
    ));
    let from_wav = csv_rows(&read(p.join("w/selection.csv")));
    assert_eq!(from_wav.len(), 7);
    for (a, b) in rows.iter().zip(&from_wav) {
        assert_eq!(a[1], b[1]);
        let (x, y): (f64, f64) = (a[2].parse().unwrap(), b[2].parse().unwrap());
        assert!((x - y).abs() < 1e-3 * x.max(1.0), "{} {x} vs {y}", a[1]);
    }
}

#[test]
fn one_row_dataset_is_a_clean_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("one.csv"), "kappa,a,b\n0,1,1\n").unwrap();
    let o = sacsim(dir.path(), &["train", "--dataset", "one.csv", "--out", "o"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("too few"), "{}", stderr(&o));
    assert!(!dir.path().join("o/model.json").exists());
}

#[test]
fn malformed_dataset_reports_line() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.csv"), "kappa,a\n0,1\n5,oops\n").unwrap();
    let o = sacsim(dir.path(), &["train", "--dataset", "bad.csv", "--out", "o"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.csv:3"), "{}", stderr(&o));
}

#[test]
fn missing_model_fails() {
    let dir = TempDir::new().unwrap();
    let o = sacsim(
        dir.path(),
        &["eval", "--model", "absent.json", "--out", "o"],
    );
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("absent.json"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[protocol]\nsample_per_curvature = 3\n",
    )
    .unwrap();
    let o = sacsim(dir.path(), &["--config", "c.toml", "synth"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("sample_per_curvature"));
}

#[test]
fn config_from_environment() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.toml"), "out_dir = \"from_env\"\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sacsim"))
        .current_dir(dir.path())
        .env("SACSIM_CONFIG", "c.toml")
        .args(["simulate", "--kappa", "10"])
        .output()
        .unwrap();
    ok(&o);
    assert!(dir.path().join("from_env/min_height.csv").exists());
}
