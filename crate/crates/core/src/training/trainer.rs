use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::eval::{evaluate, Metrics};
use super::loss::{batch_loss, LossConfig};
use super::optim::{adam_step, AdamState, EmaState, LrSchedule};
use crate::autodiff::{Graph, Tensor};
use crate::data::{epoch_order, Dataset, MiniBatch, Normalizer};
use crate::error::{Error, Result};
use crate::model::{Container, ParamStore, SchNet};

/// Validation quantity used for model selection and early stopping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    Energy,
    Force,
    /// `ρ·energy MAE + force MAE`, or the energy MAE alone without force training.
    #[default]
    Combined,
}

impl FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" => Ok(SelectionMetric::Energy),
            "force" => Ok(SelectionMetric::Force),
            "combined" => Ok(SelectionMetric::Combined),
            _ => Err(Error::Config(format!(
                "unknown selection metric `{s}` (energy, force, combined)"
            ))),
        }
    }
}

impl fmt::Display for SelectionMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMetric::Energy => "energy",
            SelectionMetric::Force => "force",
            SelectionMetric::Combined => "combined",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub ema_decay: f64,
    /// Optimizer steps between validation passes.
    pub eval_interval: u64,
    /// Validation passes without improvement before stopping.
    pub patience: u64,
    pub max_steps: u64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    pub selection: SelectionMetric,
    /// Record elapsed seconds in the metrics log. Off by default so that
    /// logs of identical runs are byte-identical.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossConfig::default(),
            schedule: LrSchedule::default(),
            batch_size: 32,
            ema_decay: 0.99,
            eval_interval: 1000,
            patience: 25,
            max_steps: 3_000_000,
            seed: 0,
            selection: SelectionMetric::Combined,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!(
                "ema_decay must lie in [0, 1], got {}",
                self.ema_decay
            )));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval must be at least 1".into()));
        }
        if self.selection == SelectionMetric::Force && !self.loss.train_forces {
            return Err(Error::Config("force-based selection needs force training".into()));
        }
        Ok(())
    }

    fn score(&self, m: &Metrics) -> f64 {
        let f = m.force_mae.unwrap_or(0.0);
        match (self.selection, self.loss.train_forces) {
            (SelectionMetric::Energy, _) | (SelectionMetric::Combined, false) => m.energy_mae,
            (SelectionMetric::Force, _) => f,
            (SelectionMetric::Combined, true) => self.loss.rho * m.energy_mae + f,
        }
    }
}

/// One line of the metrics log, written after every validation pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub lr: f64,
    /// Mean training loss (normalized units) since the previous row.
    pub train_loss: f64,
    pub val_energy_mae: f64,
    pub val_force_mae: Option<f64>,
    pub wall_time_s: f64,
}

pub const METRICS_HEADER: &str = "step,lr,train_loss,val_energy_mae,val_force_mae,wall_time_s";

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        let force = self.val_force_mae.map(|f| f.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.step, self.lr, self.train_loss, self.val_energy_mae, force, self.wall_time_s
        )
    }
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut out: W) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    out.flush()?;
    Ok(())
}

/// Everything needed to continue a run exactly where it stopped.
///
/// The data order of epoch `e` is a pure function of `(seed, e)`, so the
/// position in the data stream is fully described by `epoch` and `cursor`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ParamStore,
    pub adam: AdamState,
    pub ema: EmaState,
    /// EMA weights at the best validation pass so far.
    pub best: Option<ParamStore>,
    pub best_metric: Option<f64>,
    pub evals_since_improvement: u64,
    pub step: u64,
    pub epoch: u64,
    pub cursor: usize,
    pub loss_sum: f64,
    pub loss_count: u64,
    pub stopped_early: bool,
    pub metrics: Vec<MetricsRow>,
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    train_config: TrainConfig,
    step: u64,
    epoch: u64,
    cursor: usize,
    adam_t: u64,
    best_metric: Option<f64>,
    evals_since_improvement: u64,
    loss_sum: f64,
    loss_count: u64,
    stopped_early: bool,
    metrics: Vec<MetricsRow>,
}

fn epoch_seed(seed: u64, epoch: u64) -> u64 {
    seed ^ epoch.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Best-validation EMA model.
    pub model: SchNet,
    pub metrics: Vec<MetricsRow>,
    pub steps: u64,
    pub stopped_early: bool,
}

/// Mini-batch training with Adam, learning-rate decay, weight averaging and
/// validation-based early stopping. Validation always uses the averaged weights.
pub struct Trainer<'a> {
    model: SchNet,
    train: &'a Dataset,
    val: &'a Dataset,
    config: TrainConfig,
    state: TrainState,
    order: Vec<usize>,
    started: Instant,
}

impl<'a> Trainer<'a> {
    /// Fits the energy normalizer on `train` and starts from the model's current weights.
    pub fn new(mut model: SchNet, train: &'a Dataset, val: &'a Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Self::check_data(train, val, &config)?;
        model.set_normalizer(Normalizer::fit(train)?);
        let params = model.params().clone();
        let state = TrainState {
            adam: AdamState::new(&params),
            ema: EmaState::new(&params, config.ema_decay),
            params,
            best: None,
            best_metric: None,
            evals_since_improvement: 0,
            step: 0,
            epoch: 0,
            cursor: 0,
            loss_sum: 0.0,
            loss_count: 0,
            stopped_early: false,
            metrics: Vec::new(),
        };
        Ok(Self::assemble(model, train, val, config, state))
    }

    fn assemble(model: SchNet, train: &'a Dataset, val: &'a Dataset, config: TrainConfig, state: TrainState) -> Self {
        let order = epoch_order(train.len(), Some(epoch_seed(config.seed, state.epoch)));
        Trainer {
            model,
            train,
            val,
            config,
            state,
            order,
            started: Instant::now(),
        }
    }

    fn check_data(train: &Dataset, val: &Dataset, config: &TrainConfig) -> Result<()> {
        if train.is_empty() {
            return Err(Error::InsufficientData("training set is empty".into()));
        }
        if val.is_empty() {
            return Err(Error::InsufficientData("validation set is empty".into()));
        }
        train.require_labels(config.loss.train_forces)?;
        val.require_labels(config.loss.train_forces)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.state.metrics
    }

    /// Moves the step budget, e.g. to continue a resumed run past its original end.
    pub fn set_max_steps(&mut self, max_steps: u64) {
        self.config.max_steps = max_steps;
    }

    pub fn is_finished(&self) -> bool {
        self.state.stopped_early || self.state.step >= self.config.max_steps
    }

    fn with_params(&self, params: &ParamStore) -> SchNet {
        let mut m = self.model.clone();
        *m.params_mut() = params.clone();
        m
    }

    /// Model with the raw optimizer weights.
    pub fn raw_model(&self) -> SchNet {
        self.with_params(&self.state.params)
    }

    pub fn ema_model(&self) -> SchNet {
        self.with_params(&self.state.ema.shadow)
    }

    /// Best-validation EMA model, or the current EMA model before the first validation pass.
    pub fn best_model(&self) -> SchNet {
        self.with_params(self.state.best.as_ref().unwrap_or(&self.state.ema.shadow))
    }

    fn next_batch(&mut self) -> Result<MiniBatch> {
        if self.state.cursor >= self.order.len() {
            self.state.epoch += 1;
            self.state.cursor = 0;
            self.order = epoch_order(self.train.len(), Some(epoch_seed(self.config.seed, self.state.epoch)));
        }
        let end = (self.state.cursor + self.config.batch_size).min(self.order.len());
        let batch = MiniBatch::from_conformations(
            self.order[self.state.cursor..end]
                .iter()
                .map(|&i| &self.train.conformations[i]),
        );
        self.state.cursor = end;
        batch
    }

    /// Loss and parameter gradients for `batch` at the current raw weights.
    pub fn loss_and_grads(&self, batch: &MiniBatch) -> Result<(f64, Vec<Tensor>)> {
        loss_and_grads(&self.raw_model(), batch, &self.config.loss)
    }

    /// One optimizer step, followed by a validation pass when due.
    /// Nothing is modified when the loss or a gradient is not finite.
    pub fn step(&mut self) -> Result<f64> {
        let (epoch, cursor) = (self.state.epoch, self.state.cursor);
        let batch = self.next_batch()?;
        let result = self.loss_and_grads(&batch).and_then(|(loss, grads)| {
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    step: self.state.step,
                    loss,
                });
            }
            let lr = self.config.schedule.lr_at(self.state.step);
            adam_step(&mut self.state.params, &grads, &mut self.state.adam, lr)?;
            Ok(loss)
        });
        let loss = match result {
            Ok(loss) => loss,
            Err(e) => {
                if (epoch, cursor) != (self.state.epoch, self.state.cursor) {
                    self.state.epoch = epoch;
                    self.state.cursor = cursor;
                    self.order = epoch_order(self.train.len(), Some(epoch_seed(self.config.seed, epoch)));
                }
                return Err(e);
            }
        };
        self.state.ema.update(&self.state.params);
        self.state.step += 1;
        self.state.loss_sum += loss;
        self.state.loss_count += 1;
        if self.state.step.is_multiple_of(self.config.eval_interval) {
            self.validate()?;
        }
        Ok(loss)
    }

    /// Validation pass on the averaged weights; updates the best model and the patience counter.
    pub fn validate(&mut self) -> Result<Metrics> {
        let metrics = evaluate(&self.ema_model(), self.val)?;
        let score = self.config.score(&metrics);
        if !score.is_finite() {
            return Err(Error::Divergence {
                step: self.state.step,
                loss: score,
            });
        }
        if self.state.best_metric.is_none_or(|b| score < b) {
            self.state.best_metric = Some(score);
            self.state.best = Some(self.state.ema.shadow.clone());
            self.state.evals_since_improvement = 0;
        } else {
            self.state.evals_since_improvement += 1;
        }
        let train_loss = if self.state.loss_count > 0 {
            self.state.loss_sum / self.state.loss_count as f64
        } else {
            f64::NAN
        };
        self.state.loss_sum = 0.0;
        self.state.loss_count = 0;
        self.state.metrics.push(MetricsRow {
            step: self.state.step,
            lr: self.config.schedule.lr_at(self.state.step),
            train_loss,
            val_energy_mae: metrics.energy_mae,
            val_force_mae: metrics.force_mae,
            wall_time_s: if self.config.record_wall_time {
                self.started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
        log::info!(
            "step {} loss {:.6} val energy MAE {:.5} force MAE {}",
            self.state.step,
            train_loss,
            metrics.energy_mae,
            metrics.force_mae.map_or("-".into(), |f| format!("{f:.5}"))
        );
        if self.state.evals_since_improvement >= self.config.patience {
            self.state.stopped_early = true;
        }
        Ok(metrics)
    }

    /// At most `n` further steps; stops early when training is finished.
    pub fn run_steps(&mut self, n: u64) -> Result<()> {
        for _ in 0..n {
            if self.is_finished() {
                break;
            }
            self.step()?;
        }
        Ok(())
    }

    /// Trains until early stopping or `max_steps`, validating once more at the
    /// end if the last step was not a validation step.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        if self.state.metrics.last().map(|r| r.step) != Some(self.state.step) {
            self.validate()?;
        }
        Ok(())
    }

    pub fn outcome(&self) -> TrainOutcome {
        TrainOutcome {
            model: self.best_model(),
            metrics: self.state.metrics.clone(),
            steps: self.state.step,
            stopped_early: self.state.stopped_early,
        }
    }

    /// Serializes the full training state as a `train_state` checkpoint.
    pub fn to_container(&self, run_config: &str) -> Container {
        let s = &self.state;
        let mut arrays = Vec::new();
        let mut push = |prefix: &str, store: &ParamStore| {
            for (name, t) in store.iter() {
                arrays.push((format!("{prefix}/{name}"), t.clone()));
            }
        };
        push("params", &s.params);
        push("ema", &s.ema.shadow);
        if let Some(best) = &s.best {
            push("best", best);
        }
        let names: Vec<String> = s.params.names().map(String::from).collect();
        for (prefix, moments) in [("adam_m", &s.adam.m), ("adam_v", &s.adam.v)] {
            for (name, t) in names.iter().zip(moments) {
                arrays.push((format!("{prefix}/{name}"), t.clone()));
            }
        }
        let meta = StateMeta {
            train_config: self.config.clone(),
            step: s.step,
            epoch: s.epoch,
            cursor: s.cursor,
            adam_t: s.adam.t,
            best_metric: s.best_metric,
            evals_since_improvement: s.evals_since_improvement,
            loss_sum: s.loss_sum,
            loss_count: s.loss_count,
            stopped_early: s.stopped_early,
            metrics: s.metrics.clone(),
        };
        Container {
            kind: "train_state".into(),
            config: self.model.config().clone(),
            normalizer: self.model.normalizer(),
            run_config: run_config.to_string(),
            extra: serde_json::to_value(meta).expect("state metadata serializes"),
            arrays,
        }
    }

    /// Restores a trainer from [`Trainer::to_container`]. Continuing with the
    /// same datasets reproduces the uninterrupted run bit for bit.
    pub fn resume(container: &Container, train: &'a Dataset, val: &'a Dataset) -> Result<Self> {
        if container.kind != "train_state" {
            return Err(Error::Checkpoint(format!(
                "expected a train_state checkpoint, found `{}`",
                container.kind
            )));
        }
        let meta: StateMeta = serde_json::from_value(container.extra.clone())
            .map_err(|e| Error::Checkpoint(format!("train state metadata: {e}")))?;
        meta.train_config.validate()?;
        Self::check_data(train, val, &meta.train_config)?;
        let model = container.to_model()?;
        let config = model.config().clone();
        let store = |prefix: &str| -> Result<Option<ParamStore>> {
            let entries: Vec<(String, Tensor)> = container
                .arrays
                .iter()
                .filter_map(|(n, t)| {
                    n.strip_prefix(prefix)
                        .and_then(|rest| rest.strip_prefix('/'))
                        .map(|rest| (rest.to_string(), t.clone()))
                })
                .collect();
            if entries.is_empty() {
                return Ok(None);
            }
            ParamStore::from_entries(&config, entries).map(Some)
        };
        let missing = |what: &str| Error::Checkpoint(format!("train state lacks `{what}` arrays"));
        let params = store("params")?.ok_or_else(|| missing("params"))?;
        let shadow = store("ema")?.ok_or_else(|| missing("ema"))?;
        let m = store("adam_m")?.ok_or_else(|| missing("adam_m"))?;
        let v = store("adam_v")?.ok_or_else(|| missing("adam_v"))?;
        let mut adam = AdamState::new(&params);
        adam.m = m.tensors().cloned().collect();
        adam.v = v.tensors().cloned().collect();
        adam.t = meta.adam_t;
        let state = TrainState {
            params,
            adam,
            ema: EmaState {
                shadow,
                decay: meta.train_config.ema_decay,
            },
            best: store("best")?,
            best_metric: meta.best_metric,
            evals_since_improvement: meta.evals_since_improvement,
            step: meta.step,
            epoch: meta.epoch,
            cursor: meta.cursor,
            loss_sum: meta.loss_sum,
            loss_count: meta.loss_count,
            stopped_early: meta.stopped_early,
            metrics: meta.metrics,
        };
        Ok(Self::assemble(model, train, val, meta.train_config, state))
    }
}

/// Loss value and gradients of every parameter, in layout order.
pub fn loss_and_grads(model: &SchNet, batch: &MiniBatch, loss: &LossConfig) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let vars = model.params().bind(&mut g, true);
    let l = batch_loss(&mut g, model, &vars, batch, loss)?;
    let value = g.value(l).item().expect("scalar loss");
    let grads = g.backward(l, &vars.all, false)?;
    let tensors = vars.all.iter().map(|&v| g.value(grads[v]).clone()).collect();
    Ok((value, tensors))
}

/// Trains a copy of `model` and returns the best-validation averaged model.
pub fn train(model: SchNet, train: &Dataset, val: &Dataset, config: TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(model, train, val, config)?;
    trainer.run()?;
    Ok(trainer.outcome())
}
