//! End-to-end runs of the `schnet` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use schnet::data::{parse_extxyz, write_extxyz_path, Dataset};
use schnet::model::{load_model, save_model, Container, ModelConfig, SchNet};
use schnet::verify::{apply, apply_all, translate, IsometrySampler};

const SMALL: &str = "\
n_features=32
n_interactions=2
rbf_count=60
max_atomic_number=10
n_train=70
n_val=15
batch_size=10
patience=1000
lr=3e-3
";

fn schnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_schnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = schnet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn dataset(&self, frames: usize, seed: u64) -> PathBuf {
        let p = self.path(&format!("data{frames}-{seed}.xyz"));
        ok(&[
            "gen-synthetic",
            "--frames",
            &frames.to_string(),
            "--seed",
            &seed.to_string(),
            "--output",
            s(&p),
        ]);
        p
    }

    fn config(&self, extra: &str) -> PathBuf {
        let p = self.path("run.cfg");
        fs::write(&p, format!("{SMALL}{extra}")).unwrap();
        p
    }

    fn train(&self, data: &Path, cfg: &Path, run: &str, extra: &[&str]) -> PathBuf {
        let dir = self.path(run);
        let mut args = vec!["train", "--config", s(cfg), "--data", s(data), "--run-dir", s(&dir)];
        args.extend_from_slice(extra);
        ok(&args);
        dir
    }
}

fn csv_row(text: &str, first: &str) -> Vec<String> {
    text.lines()
        .find(|l| l.split(',').next() == Some(first))
        .unwrap_or_else(|| panic!("no `{first}` row in\n{text}"))
        .split(',')
        .map(String::from)
        .collect()
}

#[test]
fn force_training_on_morse_data_learns_forces() {
    let ws = Workspace::new();
    let data = ws.dataset(100, 1);
    let cfg = ws.config("max_steps=5000\neval_interval=500\n");
    let run = ws.train(&data, &cfg, "run", &["--train-forces", "--rho", "0.01", "--seed", "0"]);
    let eval = fs::read_to_string(run.join("eval.csv")).unwrap();
    let test = csv_row(&eval, "test");
    assert_eq!(test[1], "15");
    let force_mae: f64 = test[3].parse().unwrap();
    assert!(force_mae < 0.5, "{eval}");

    let persisted = Container::load(run.join("model.ckpt")).unwrap().run_config;
    assert!(persisted.lines().any(|l| l == "rho=0.01"), "{persisted}");
    assert_eq!(persisted, fs::read_to_string(run.join("config.txt")).unwrap());

    // evaluating the training data of the run gives errors on the scale of the held-out ones
    let out = ok(&["eval", "--checkpoint", s(&run.join("model.ckpt")), "--data", s(&data)]);
    let all: f64 = csv_row(&out, "model")[3].parse().unwrap();
    assert!(all < 2.0 * force_mae, "{out}");
}

#[test]
fn identical_seeds_give_identical_logs_and_resume_is_exact() {
    let ws = Workspace::new();
    let data = ws.dataset(100, 2);
    let cfg = ws.config("eval_interval=50\nmax_steps=200\n");
    let a = ws.train(&data, &cfg, "a", &["--seed", "5"]);
    let b = ws.train(&data, &cfg, "b", &["--seed", "5"]);
    let log = fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(log, fs::read(b.join("metrics.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&log).lines().count(), 5);

    let half = ws.train(&data, &cfg, "half", &["--seed", "5", "--max-steps", "100"]);
    let resumed = ws.path("resumed");
    ok(&[
        "train",
        "--resume",
        s(&half.join("train_state.ckpt")),
        "--max-steps",
        "200",
        "--run-dir",
        s(&resumed),
    ]);
    assert_eq!(log, fs::read(resumed.join("metrics.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("model.ckpt")).unwrap(),
        fs::read(resumed.join("model.ckpt")).unwrap()
    );
}

#[test]
fn run_directories_are_named_by_time_and_seed() {
    let ws = Workspace::new();
    let data = ws.dataset(100, 3);
    let cfg = ws.config("max_steps=10\neval_interval=10\n");
    let parent = ws.path("runs");
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--seed",
        "42",
        "--out-dir",
        s(&parent),
    ]);
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--seed",
        "42",
        "--out-dir",
        s(&parent),
    ]);
    let mut names: Vec<String> = fs::read_dir(&parent)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 2, "{names:?}");
    for n in &names {
        let (stamp, rest) = n.split_at(15);
        assert!(
            stamp
                .chars()
                .enumerate()
                .all(|(i, c)| if i == 8 { c == '-' } else { c.is_ascii_digit() }),
            "{n}"
        );
        assert!(rest.starts_with("-train-seed42"), "{n}");
    }
}

#[test]
fn eval_predict_and_baseline_agree() {
    let ws = Workspace::new();
    let data = ws.dataset(100, 4);
    let cfg = ws.config("max_steps=300\neval_interval=100\n");
    let run = ws.train(&data, &cfg, "run", &[]);
    let ckpt = run.join("model.ckpt");

    let out = ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data)]);
    let row = csv_row(&out, "model");
    let (e_mae, f_mae): (f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap());

    let pred = ws.path("pred.xyz");
    ok(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&data),
        "--output",
        s(&pred),
    ]);
    let (truth, guess) = (parse_extxyz(&data).unwrap(), parse_extxyz(&pred).unwrap());
    let n = truth.len() as f64;
    let e: f64 = truth
        .iter()
        .zip(&guess)
        .map(|(a, b)| (a.energy.unwrap() - b.energy.unwrap()).abs())
        .sum::<f64>()
        / n;
    let (mut f, mut count) = (0.0, 0.0);
    for (a, b) in truth.iter().zip(&guess) {
        for (x, y) in a.forces.as_ref().unwrap().iter().zip(b.forces.as_ref().unwrap()) {
            f += (0..3).map(|k| (x[k] - y[k]).abs()).sum::<f64>();
            count += 3.0;
        }
    }
    assert!((e - e_mae).abs() <= 1e-12 * e_mae, "{e} vs {e_mae}");
    assert!((f / count - f_mae).abs() <= 1e-12 * f_mae);

    // the mean predictor: training mean energy, zero forces
    let (model, _) = load_model(&ckpt).unwrap();
    let mean = model.normalizer().mean;
    let out = ok(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--baseline",
        "mean",
    ]);
    let row = csv_row(&out, "mean_predictor");
    let expect_e = truth.iter().map(|c| (c.energy.unwrap() - mean).abs()).sum::<f64>() / n;
    let expect_f = truth
        .iter()
        .flat_map(|c| c.forces.clone().unwrap())
        .flatten()
        .map(f64::abs)
        .sum::<f64>()
        / (n * 9.0);
    assert!((row[2].parse::<f64>().unwrap() - expect_e).abs() < 1e-9);
    assert!((row[3].parse::<f64>().unwrap() - expect_f).abs() < 1e-9);
    let out = ok(&["eval", "--baseline", "mean", "--mean", "0", "--data", s(&data)]);
    assert!(csv_row(&out, "mean_predictor")[2].parse::<f64>().unwrap() > 100.0);
}

#[test]
fn eval_without_force_labels_reports_energies_only() {
    let ws = Workspace::new();
    let data = ws.dataset(100, 5);
    let run = ws.train(&data, &ws.config("max_steps=20\neval_interval=20\n"), "run", &[]);
    let mut ds = parse_extxyz(&data).unwrap();
    ds.conformations.iter_mut().for_each(|c| c.forces = None);
    let bare = ws.path("bare.xyz");
    write_extxyz_path(&bare, &ds).unwrap();
    let out = schnet(&["eval", "--checkpoint", s(&run.join("model.ckpt")), "--data", s(&bare)]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv_row(&stdout, "model")[3], "");
    assert!(String::from_utf8_lossy(&out.stderr).contains("force labels"));
}

#[test]
fn predictions_are_invariant_and_equivariant() {
    let ws = Workspace::new();
    let ckpt = ws.path("fresh.ckpt");
    let config = ModelConfig {
        n_features: 16,
        ..ModelConfig::default()
    };
    save_model(&ckpt, &SchNet::new(config, 9).unwrap(), "").unwrap();
    let data = parse_extxyz(ws.dataset(5, 6)).unwrap();

    let mut s3 = IsometrySampler::new(3);
    let q = s3.rotation();
    let t = s3.translation(50.0);
    let moved: Dataset = data
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.positions = translate(&apply_all(&q, &c.positions), t);
            c
        })
        .collect();
    let (a_in, b_in) = (ws.path("a.xyz"), ws.path("b.xyz"));
    write_extxyz_path(&a_in, &data).unwrap();
    write_extxyz_path(&b_in, &moved).unwrap();
    let (a_out, b_out) = (ws.path("a_pred.xyz"), ws.path("b_pred.xyz"));
    ok(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&a_in),
        "--output",
        s(&a_out),
    ]);
    ok(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&b_in),
        "--output",
        s(&b_out),
    ]);
    let (a, b) = (parse_extxyz(&a_out).unwrap(), parse_extxyz(&b_out).unwrap());
    for (x, y) in a.iter().zip(&b) {
        let (ex, ey) = (x.energy.unwrap(), y.energy.unwrap());
        assert!((ex - ey).abs() <= 1e-10 * (1.0 + ex.abs()));
        for (fx, fy) in x.forces.as_ref().unwrap().iter().zip(y.forces.as_ref().unwrap()) {
            let r = apply(&q, *fx);
            assert!((0..3).all(|k| (r[k] - fy[k]).abs() < 1e-8));
        }
    }
    // deterministic output
    ok(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&a_in),
        "--output",
        s(&b_out),
    ]);
    assert_eq!(fs::read(&a_out).unwrap(), fs::read(&b_out).unwrap());
}

#[test]
fn input_errors_exit_with_two() {
    let ws = Workspace::new();
    let ckpt = ws.path("m.ckpt");
    let small = ModelConfig {
        max_atomic_number: 10,
        n_features: 8,
        ..ModelConfig::default()
    };
    save_model(&ckpt, &SchNet::new(small, 1).unwrap(), "").unwrap();

    let empty = ws.path("empty.xyz");
    fs::write(&empty, "").unwrap();
    assert_eq!(
        code(&schnet(&["eval", "--checkpoint", s(&ckpt), "--data", s(&empty)])),
        2
    );

    let uranium = ws.path("u.xyz");
    fs::write(&uranium, "1\nenergy=1\nH 0 0 0\n2\nenergy=2\nU 0 0 0\nH 1 0 0\n").unwrap();
    let out = schnet(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&uranium),
        "--output",
        s(&ws.path("x")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("frame 1"));

    let data = ws.dataset(20, 7);
    assert_eq!(code(&schnet(&["train", "--data", s(&data), "--set", "bogus=1"])), 2);
    assert_eq!(code(&schnet(&["train", "--data", s(&data), "--rho", "-1"])), 2);
    assert_eq!(code(&schnet(&["train", "--set", "n_val=5"])), 2);
    assert_eq!(code(&schnet(&["frobnicate"])), 2);
    assert_eq!(
        code(&schnet(&[
            "eval",
            "--checkpoint",
            s(&ws.path("missing.ckpt")),
            "--data",
            s(&data)
        ])),
        2
    );

    let help = ok(&["--help"]);
    for cmd in [
        "train",
        "eval",
        "predict",
        "verify",
        "md",
        "export-filters",
        "gen-synthetic",
    ] {
        assert!(help.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn divergence_exits_with_three_and_keeps_a_checkpoint() {
    let ws = Workspace::new();
    let data = ws.dataset(100, 8);
    let cfg = ws.config("max_steps=50\neval_interval=10\n");
    let dir = ws.path("run");
    let out = schnet(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--lr",
        "1e300",
        "--run-dir",
        s(&dir),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
    let (model, _) = load_model(dir.join("model.ckpt")).unwrap();
    assert!(model.params().tensors().all(|t| t.is_finite()));
}

#[test]
fn verify_passes_on_a_fresh_model() {
    let ws = Workspace::new();
    let dir = ws.path("verify");
    let out = ok(&["verify", "--seed", "3", "--run-dir", s(&dir)]);
    assert!(out.lines().any(|l| l == "PASS"), "{out}");
    let report = fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(report.starts_with("check,trial,metric,tolerance,pass\n"));
    assert!(report.lines().skip(1).all(|l| l.ends_with(",pass")));
    assert!(report.lines().filter(|l| l.starts_with("rotation_energy,")).count() == 100);
}

#[test]
fn md_with_zero_timestep_repeats_the_first_frame() {
    let ws = Workspace::new();
    let ckpt = ws.path("m.ckpt");
    save_model(
        &ckpt,
        &SchNet::new(
            ModelConfig {
                n_features: 8,
                ..ModelConfig::default()
            },
            2,
        )
        .unwrap(),
        "",
    )
    .unwrap();
    let init = ws.dataset(1, 9);
    let dir = ws.path("md");
    let out = ok(&[
        "md",
        "--checkpoint",
        s(&ckpt),
        "--init",
        s(&init),
        "--steps",
        "5",
        "--dt",
        "0",
        "--velocity-scale",
        "1",
        "--run-dir",
        s(&dir),
    ]);
    assert!(out.contains("energy_drift,0e0"), "{out}");
    let traj = parse_extxyz(dir.join("trajectory.xyz")).unwrap();
    assert_eq!(traj.len(), 6);
    assert!(traj.iter().all(|c| c.positions == traj.conformations[0].positions));
    let energy = fs::read_to_string(dir.join("energy.csv")).unwrap();
    assert_eq!(energy.lines().count(), 7);
    assert!(energy.starts_with("step,kinetic,potential,total\n"));
}

#[test]
fn md_conserves_energy_for_small_steps() {
    let ws = Workspace::new();
    let ckpt = ws.path("m.ckpt");
    save_model(
        &ckpt,
        &SchNet::new(
            ModelConfig {
                n_features: 8,
                ..ModelConfig::default()
            },
            2,
        )
        .unwrap(),
        "",
    )
    .unwrap();
    let init = ws.dataset(1, 9);
    let out = ok(&[
        "md",
        "--checkpoint",
        s(&ckpt),
        "--init",
        s(&init),
        "--steps",
        "2000",
        "--dt",
        "1e-3",
        "--velocity-scale",
        "0.5",
        "--record-every",
        "100",
        "--run-dir",
        s(&ws.path("md")),
    ]);
    let drift: f64 = csv_row(&out, "relative_drift")[1].parse().unwrap();
    assert!(drift < 0.01, "{out}");
    assert_eq!(parse_extxyz(ws.path("md").join("trajectory.xyz")).unwrap().len(), 21);
}

#[test]
fn export_filters_writes_every_channel_of_every_block() {
    let ws = Workspace::new();
    let ckpt = ws.path("m.ckpt");
    save_model(&ckpt, &SchNet::new(ModelConfig::default(), 4).unwrap(), "").unwrap();
    let csv = ws.path("filters.csv");
    let out = ok(&["export-filters", "--checkpoint", s(&ckpt), "--output", s(&csv)]);
    assert!(out.contains("series,192"));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("block,channel,d,value"));
    let mut series = std::collections::BTreeMap::<(usize, usize), usize>::new();
    for l in lines {
        let parts: Vec<&str> = l.split(',').collect();
        *series
            .entry((parts[0].parse().unwrap(), parts[1].parse().unwrap()))
            .or_default() += 1;
    }
    assert_eq!(series.len(), 3 * 64);
    assert!(series.values().all(|&n| n == 201));
}

#[test]
fn gen_synthetic_is_deterministic() {
    let ws = Workspace::new();
    let (a, b) = (ws.path("a.xyz"), ws.path("b.xyz"));
    ok(&["gen-synthetic", "--frames", "10", "--seed", "3", "--output", s(&a)]);
    ok(&["gen-synthetic", "--frames", "10", "--seed", "3", "--output", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let ds = parse_extxyz(&a).unwrap();
    assert_eq!(ds.len(), 10);
    assert!(ds.has_energies() && ds.has_forces());
    let c = ws.path("c.xyz");
    ok(&[
        "gen-synthetic",
        "--frames",
        "3",
        "--morse",
        "40,2,1.2",
        "--output",
        s(&c),
    ]);
    assert_eq!(code(&schnet(&["gen-synthetic", "--morse", "40,2,-1"])), 2);
}
