//! The `schnet` command-line front end.
//!
//! Exit status: 0 on success, 2 for usage, configuration and input errors,
//! 3 for numerical failures (divergence, non-finite forces) and failed
//! verification checks.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::RunConfig;
use crate::data::{
    generate_synthetic, parse_extxyz, split, write_extxyz_path, Conformation, Dataset, MiniBatch, MorseParams,
    SyntheticOracle,
};
use crate::error::{Error, Result};
use crate::model::{export_filters, filter_grid, load_model, save_model, Container, SchNet};
use crate::training::{evaluate, evaluate_mean_predictor, write_metrics_csv, Metrics, Trainer};
use crate::verify::{velocity_verlet, verify_model, MdState, SuiteOptions};

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite(_) | Error::NonFiniteGradient(_) | Error::Divergence { .. } => 3,
        Error::Shape { .. } | Error::IndexOutOfRange { .. } | Error::NonScalarLoss(_) | Error::StaleVariable => 3,
        _ => 2,
    }
}

/// Exit status of a failed verification.
pub const VERIFY_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "schnet",
    version,
    about = "Continuous-filter convolutional networks for molecular energies and forces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a labelled extended-XYZ dataset.
    Train(TrainArgs),
    /// Mean absolute errors of a checkpoint (or of the mean predictor) on a labelled dataset.
    Eval(EvalArgs),
    /// Write predicted energies and forces as extended XYZ.
    Predict(PredictArgs),
    /// Run the invariance, gradient and energy-conservation checks.
    Verify(VerifyArgs),
    /// Velocity-Verlet molecular dynamics in reduced units (unit masses).
    Md(MdArgs),
    /// Sample every filter W(d) on 0..10 Å in 0.05 Å steps as CSV.
    ExportFilters(ExportArgs),
    /// Generate a Morse-potential dataset with exact energies and forces.
    GenSynthetic(GenArgs),
}

/// Where artifacts go.
#[derive(Debug, Clone, Args)]
pub struct RunDirArgs {
    /// Parent directory of the timestamped run directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Exact run directory, used instead of a timestamped one.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
}

/// Configuration file plus overrides, later ones winning.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set n_features=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[command(flatten)]
    pub dirs: RunDirArgs,
    /// Labelled dataset (the `data` key).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Energy weight of the loss.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Include the force term in the loss (the default).
    #[arg(long, conflicts_with = "energy_only")]
    pub train_forces: bool,
    /// Train on energies alone.
    #[arg(long)]
    pub energy_only: bool,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub eval_interval: Option<u64>,
    #[arg(long)]
    pub n_train: Option<String>,
    #[arg(long)]
    pub n_val: Option<usize>,
    /// Continue from a `train_state.ckpt`. Its stored configuration is used;
    /// only `--data` and `--max-steps` may change.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "baseline")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluate a baseline instead of the network. `mean` predicts the
    /// training-set mean energy (from the checkpoint, or `--mean`) and zero forces.
    #[arg(long, value_parser = ["mean"])]
    pub baseline: Option<String>,
    /// Mean energy for `--baseline mean` without a checkpoint.
    #[arg(long)]
    pub mean: Option<f64>,
    /// Also write the metrics CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; defaults to `predictions.xyz` in a new run directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub dirs: RunDirArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Model to check; without it a freshly initialized model is built from the configuration.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[command(flatten)]
    pub dirs: RunDirArgs,
    #[arg(long, default_value_t = 100)]
    pub molecules: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 20)]
    pub force_checks: usize,
    /// Atomic numbers of the random molecules; defaults to H, C, N, O within the model's range.
    #[arg(long, value_delimiter = ',')]
    pub species: Vec<u32>,
}

#[derive(Debug, Args)]
pub struct MdArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Starting geometry (first frame of an extended-XYZ file).
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Standard deviation of the initial Gaussian velocities; net momentum is removed.
    #[arg(long, default_value_t = 0.0)]
    pub velocity_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write every n-th frame to the trajectory.
    #[arg(long, default_value_t = 1)]
    pub record_every: u64,
    #[command(flatten)]
    pub dirs: RunDirArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output file; defaults to `filters.csv` in a new run directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub dirs: RunDirArgs,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    pub frames: usize,
    /// Gaussian displacement per coordinate, Å.
    #[arg(long, default_value_t = 0.1)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// One Morse curve `DE,A,RE` for every pair instead of the water-like parameters.
    #[arg(long, value_delimiter = ',')]
    pub morse: Option<Vec<f64>>,
    /// Output file; defaults to `dataset.xyz` in a new run directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub dirs: RunDirArgs,
}

/// Creates `<parent>/<timestamp>-<label>-seed<seed>`, adding a counter when taken.
pub fn create_run_dir(dirs: &RunDirArgs, default_parent: &Path, label: &str, seed: u64) -> Result<PathBuf> {
    if let Some(dir) = &dirs.run_dir {
        fs::create_dir_all(dir)?;
        return Ok(dir.clone());
    }
    let parent = dirs.out_dir.as_deref().unwrap_or(default_parent);
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = parent.join(format!("{stamp}-{label}-seed{seed}"));
    let mut dir = base.clone();
    let mut k = 1;
    while dir.exists() {
        k += 1;
        dir = PathBuf::from(format!("{}-{k}", base.display()));
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn resolve_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = args.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn seed_of(run_config: &str) -> u64 {
    RunConfig::parse(run_config).map(|c| c.seed).unwrap_or(0)
}

fn metrics_csv(rows: &[(&str, Metrics)]) -> String {
    let mut s = String::from("set,n,energy_mae,force_mae\n");
    for (name, m) in rows {
        let f = m.force_mae.map(|f| f.to_string()).unwrap_or_default();
        s.push_str(&format!("{name},{},{},{f}\n", m.n_conformations, m.energy_mae));
    }
    s
}

/// Runs one command and returns the process exit status.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Md(a) => cmd_md(&a),
        Command::ExportFilters(a) => cmd_export_filters(&a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(&a),
    }
}

fn train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = resolve_config(&a.cfg)?;
    let mut set = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(k, &v));
    set("data", a.data.as_ref().map(|p| p.display().to_string()))?;
    set("rho", a.rho.map(|v| v.to_string()))?;
    set("lr", a.lr.map(|v| v.to_string()))?;
    set("batch_size", a.batch_size.map(|v| v.to_string()))?;
    set("max_steps", a.max_steps.map(|v| v.to_string()))?;
    set("eval_interval", a.eval_interval.map(|v| v.to_string()))?;
    set("n_train", a.n_train.clone())?;
    set("n_val", a.n_val.map(|v| v.to_string()))?;
    if a.train_forces {
        set("train_forces", Some("true".into()))?;
    }
    if a.energy_only {
        set("train_forces", Some("false".into()))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let resumed = a.resume.as_ref().map(Container::load).transpose()?;
    let cfg = match &resumed {
        Some(c) => {
            let mut cfg = RunConfig::parse(&c.run_config)?;
            if let Some(d) = &a.data {
                cfg.data = Some(d.clone());
            }
            if let Some(n) = a.max_steps {
                cfg.train.max_steps = n;
            }
            cfg
        }
        None => train_config(a)?,
    };
    let data = cfg
        .data
        .clone()
        .ok_or_else(|| Error::Config("no dataset given (use --data or the `data` key)".into()))?;
    let ds = parse_extxyz(&data)?;
    let (train, val, test) = split(&ds, &cfg.split_spec(ds.len()))?;
    let text = cfg.to_text();

    let mut trainer = match &resumed {
        Some(c) => {
            let mut t = Trainer::resume(c, &train, &val)?;
            t.set_max_steps(cfg.train.max_steps);
            t
        }
        None => Trainer::new(
            SchNet::new(cfg.model.clone(), cfg.seed)?,
            &train,
            &val,
            cfg.train.clone(),
        )?,
    };
    let dir = create_run_dir(&a.dirs, &cfg.out_dir, "train", cfg.seed)?;
    fs::write(dir.join("config.txt"), &text)?;
    log::info!(
        "training on {} conformations, validating on {}, artifacts in {}",
        train.len(),
        val.len(),
        dir.display()
    );

    let save = |t: &Trainer| -> Result<()> {
        write_metrics_csv(t.metrics(), fs::File::create(dir.join("metrics.csv"))?)?;
        t.to_container(&text).save(dir.join("train_state.ckpt"))?;
        save_model(dir.join("model.ckpt"), &t.best_model(), &text)
    };
    let chunk = cfg.train.eval_interval.max(1);
    let result = (|| {
        while !trainer.is_finished() {
            trainer.run_steps(chunk)?;
            save(&trainer)?;
        }
        trainer.run()
    })();
    // whatever happened, keep the best weights seen so far
    save(&trainer)?;
    result?;

    let model = trainer.best_model();
    let mut rows = vec![("val", evaluate(&model, &val)?)];
    if !test.is_empty() {
        rows.push(("test", evaluate(&model, &test)?));
    }
    let csv = metrics_csv(&rows);
    fs::write(dir.join("eval.csv"), &csv)?;
    print!("{csv}");
    println!("run_dir,{}", dir.display());
    Ok(0)
}

fn cmd_eval(a: &EvalArgs) -> Result<i32> {
    let ds = parse_extxyz(&a.data)?;
    if ds.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} holds no conformations",
            a.data.display()
        )));
    }
    if !ds.has_forces() {
        log::warn!("{} lacks force labels; reporting energy errors only", a.data.display());
    }
    let model = a.checkpoint.as_ref().map(load_model).transpose()?.map(|(m, _)| m);
    let (name, metrics) = match (a.baseline.as_deref(), &model) {
        (Some(_), _) => {
            let mean = match (a.mean, &model) {
                (Some(m), _) => m,
                (None, Some(model)) => model.normalizer().mean,
                (None, None) => return Err(Error::Config("--baseline mean needs --checkpoint or --mean".into())),
            };
            ("mean_predictor", evaluate_mean_predictor(mean, &ds)?)
        }
        (None, Some(model)) => ("model", evaluate(model, &ds)?),
        (None, None) => return Err(Error::Config("--checkpoint is required".into())),
    };
    let csv = metrics_csv(&[(name, metrics)]);
    if let Some(out) = &a.out {
        fs::write(out, &csv)?;
    }
    print!("{csv}");
    Ok(0)
}

fn check_species(model: &SchNet, ds: &Dataset) -> Result<()> {
    let max = model.config().max_atomic_number;
    for (i, c) in ds.iter().enumerate() {
        if let Some(&z) = c.z.iter().find(|&&z| z == 0 || z > max) {
            return Err(Error::Config(format!(
                "frame {i} (`{}`): atomic number {z} is outside the model's range 1..={max}",
                c.molecule_id
            )));
        }
    }
    Ok(())
}

/// Copies of `ds` labelled with the model's energies and forces.
pub fn predict_dataset(model: &SchNet, ds: &Dataset) -> Result<Dataset> {
    check_species(model, ds)?;
    let mut out = Vec::with_capacity(ds.len());
    for chunk in ds.conformations.chunks(64) {
        let batch = MiniBatch::from_conformations(chunk)?;
        let p = model.predict_batch(&batch, true)?;
        let forces = p.forces.expect("forces requested");
        let mut offset = 0;
        for (c, e) in chunk.iter().zip(&p.energies) {
            let n = c.n_atoms();
            let c = c
                .clone()
                .with_energy(*e)
                .with_forces(forces[offset..offset + n].to_vec());
            c.validate()?;
            if !e.is_finite() || c.forces.iter().flatten().flatten().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("prediction for `{}`", c.molecule_id)));
            }
            out.push(c);
            offset += n;
        }
    }
    Ok(Dataset {
        conformations: out,
        source: ds.source.clone(),
        seed: ds.seed,
    })
}

fn output_path(output: &Option<PathBuf>, dirs: &RunDirArgs, label: &str, seed: u64, file: &str) -> Result<PathBuf> {
    match output {
        Some(p) => Ok(p.clone()),
        None => Ok(create_run_dir(dirs, Path::new("runs"), label, seed)?.join(file)),
    }
}

fn cmd_predict(a: &PredictArgs) -> Result<i32> {
    let (model, run_config) = load_model(&a.checkpoint)?;
    let ds = parse_extxyz(&a.input)?;
    let predicted = predict_dataset(&model, &ds)?;
    let path = output_path(&a.output, &a.dirs, "predict", seed_of(&run_config), "predictions.xyz")?;
    write_extxyz_path(&path, &predicted)?;
    println!("{}", path.display());
    Ok(0)
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32> {
    let (model, seed) = match &a.checkpoint {
        Some(p) => {
            let (m, text) = load_model(p)?;
            (m, a.cfg.seed.unwrap_or_else(|| seed_of(&text)))
        }
        None => {
            let cfg = resolve_config(&a.cfg)?;
            cfg.model.validate()?;
            (SchNet::new(cfg.model.clone(), cfg.seed)?, cfg.seed)
        }
    };
    let max = model.config().max_atomic_number;
    let species: Vec<u32> = if a.species.is_empty() {
        [1, 6, 7, 8].into_iter().filter(|&z| z <= max).collect()
    } else {
        a.species.clone()
    };
    if species.is_empty() || species.iter().any(|&z| z == 0 || z > max) {
        return Err(Error::Config(format!("species must be non-empty and within 1..={max}")));
    }
    let opts = SuiteOptions {
        seed,
        n_molecules: a.molecules,
        n_trials: a.trials,
        n_force_checks: a.force_checks,
        species,
        ..SuiteOptions::default()
    };
    let report = verify_model(&model, &opts)?;
    let dir = create_run_dir(&a.dirs, Path::new("runs"), "verify", seed)?;
    report.write_csv(fs::File::create(dir.join("report.csv"))?)?;
    for line in report.summary() {
        println!("{line}");
    }
    println!("report,{}", dir.join("report.csv").display());
    if report.passed() {
        println!("PASS");
        Ok(0)
    } else {
        println!("FAIL");
        Ok(VERIFY_FAILED)
    }
}

/// Gaussian velocities of width `scale` with zero net momentum (unit masses).
pub fn initial_velocities(n: usize, scale: f64, seed: u64) -> Result<Vec<[f64; 3]>> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!(
            "velocity scale must be non-negative, got {scale}"
        )));
    }
    let normal = Normal::new(0.0, scale).expect("validated scale");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<[f64; 3]> = (0..n)
        .map(|_| std::array::from_fn(|_| normal.sample(&mut rng)))
        .collect();
    for k in 0..3 {
        let mean = v.iter().map(|x| x[k]).sum::<f64>() / n.max(1) as f64;
        v.iter_mut().for_each(|x| x[k] -= mean);
    }
    Ok(v)
}

fn cmd_md(a: &MdArgs) -> Result<i32> {
    let (model, _) = load_model(&a.checkpoint)?;
    let init = parse_extxyz(&a.init)?;
    check_species(&model, &init)?;
    let first = init
        .get(0)
        .ok_or_else(|| Error::InsufficientData(format!("{} holds no frames", a.init.display())))?
        .clone();
    let v0 = initial_velocities(first.n_atoms(), a.velocity_scale, a.seed)?;
    let mut state = MdState::new(&model, first.z.clone(), first.positions.clone(), v0, a.dt)?.recording(a.record_every);
    let dir = create_run_dir(&a.dirs, Path::new("runs"), "md", a.seed)?;
    let result = velocity_verlet(&model, &mut state, a.steps);

    // the trajectory up to the last finite step is written either way
    let every = a.record_every.max(1) as usize;
    let frames: Dataset = state
        .trajectory
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let mut c = first.clone();
            c.positions = r.clone();
            c.forces = None;
            c.energy = Some(state.potential[k * every]);
            c
        })
        .collect();
    write_extxyz_path(dir.join("trajectory.xyz"), &frames)?;
    let mut csv = std::io::BufWriter::new(fs::File::create(dir.join("energy.csv"))?);
    writeln!(csv, "step,kinetic,potential,total")?;
    for (k, ((kin, pot), tot)) in state.kinetic.iter().zip(&state.potential).zip(&state.total).enumerate() {
        writeln!(csv, "{k},{kin:e},{pot:e},{tot:e}")?;
    }
    csv.flush()?;
    result?;

    let ke0 = state.initial_kinetic();
    let drift = state.energy_drift();
    println!("steps,{}", state.step);
    println!("max_displacement,{:e}", state.max_displacement);
    println!("energy_drift,{drift:e}");
    if ke0 > 0.0 {
        println!("relative_drift,{:e}", drift / ke0);
    }
    println!("run_dir,{}", dir.display());
    Ok(0)
}

fn cmd_export_filters(a: &ExportArgs) -> Result<i32> {
    let (model, run_config) = load_model(&a.checkpoint)?;
    let path = output_path(&a.output, &a.dirs, "filters", seed_of(&run_config), "filters.csv")?;
    let mut out = std::io::BufWriter::new(fs::File::create(&path)?);
    export_filters(&model, &filter_grid(), &mut out)?;
    out.flush()?;
    let c = model.config();
    println!("series,{}", c.n_interactions * c.n_features);
    println!("{}", path.display());
    Ok(0)
}

fn cmd_gen_synthetic(a: &GenArgs) -> Result<i32> {
    let oracle = match a.morse.as_deref() {
        Some(&[de, a, re]) => {
            if !(de > 0.0 && a > 0.0 && re > 0.0) {
                return Err(Error::Config("Morse parameters must be positive".into()));
            }
            SyntheticOracle::uniform(MorseParams { de, a, re })
        }
        Some(_) => return Err(Error::Config("--morse takes DE,A,RE".into())),
        None => SyntheticOracle::water_like(),
    };
    let template: Conformation = SyntheticOracle::water_template();
    let ds = generate_synthetic(&oracle, &template, a.frames, a.scale, a.seed)?;
    let path = output_path(&a.output, &a.dirs, "synthetic", a.seed, "dataset.xyz")?;
    write_extxyz_path(&path, &ds)?;
    println!("{}", path.display());
    Ok(0)
}
