//! Mini-batch training for the plain four-way detector and the
//! domain-adversarial variant.

mod optim;

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use optim::{Optimizer, OptimizerKind};

use crate::corpus::{Label, LabeledText};
use crate::neural::{argmax, ops, save_model, ClassifierModel, NeuralError, Target};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("training split lacks classes: {0:?}")]
    MissingLabels(Vec<Label>),
    #[error("adversarial training needs at least two domains, found {0}")]
    SingleDomain(usize),
    #[error("example {id:?} has domain {domain:?} unknown to the model")]
    UnknownDomain { id: String, domain: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Reversal-coefficient schedule over training progress `p` in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "lambda")]
pub enum GrlSchedule {
    Constant(f64),
    /// `2 / (1 + exp(-10 p)) - 1`
    Annealed,
}

impl GrlSchedule {
    pub fn lambda(&self, progress: f64) -> f64 {
        match *self {
            GrlSchedule::Constant(l) => l,
            GrlSchedule::Annealed => {
                let p = progress.clamp(0.0, 1.0);
                2.0 / (1.0 + (-10.0 * p).exp()) - 1.0
            }
        }
    }
}

impl FromStr for GrlSchedule {
    type Err = String;

    /// `annealed` or `constant:<lambda>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "annealed" {
            return Ok(GrlSchedule::Annealed);
        }
        if let Some(v) = s.strip_prefix("constant:").or_else(|| s.strip_prefix("constant=")) {
            let l: f64 = v.parse().map_err(|_| format!("bad lambda {v:?}"))?;
            if l < 0.0 || !l.is_finite() {
                return Err("lambda must be a non-negative number".into());
            }
            return Ok(GrlSchedule::Constant(l));
        }
        Err(format!("unknown schedule {s:?} (expected annealed or constant:<lambda>)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub grl_schedule: GrlSchedule,
    pub optimizer: OptimizerKind,
    pub patience: Option<usize>,
    /// Learning-rate multiplier for the domain head in adversarial runs.
    /// The adversary has to track the encoder; when it lags, reversal
    /// flips the domain signal instead of removing it.
    #[serde(default = "default_domain_head_lr_scale")]
    pub domain_head_lr_scale: f64,
    /// Decoupled decay for the whole domain head (weights and bias) in
    /// adversarial runs. Keeps the head near a regularized optimum, which
    /// damps the encoder/adversary oscillation.
    #[serde(default = "default_domain_head_weight_decay")]
    pub domain_head_weight_decay: f64,
    /// Written (atomically) whenever dev accuracy matches or beats the best so far.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        make_preset("full_dataset").expect("known preset")
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if !(self.domain_head_lr_scale > 0.0 && self.domain_head_lr_scale.is_finite()) {
            return Err(TrainError::Config("domain_head_lr_scale must be > 0".into()));
        }
        if self.weight_decay < 0.0 || self.domain_head_weight_decay < 0.0 {
            return Err(TrainError::Config("weight_decay must be >= 0".into()));
        }
        // Decoupled decay multiplies parameters by (1 - lr * decay) each step.
        if self.learning_rate * self.weight_decay >= 1.0 {
            return Err(TrainError::Config("learning_rate * weight_decay must stay below 1".into()));
        }
        Ok(())
    }

    /// Extra checks for adversarial runs, where the domain head has its own
    /// step size and decay.
    pub fn validate_adversarial(&self) -> Result<(), TrainError> {
        self.validate()?;
        let head_shrink = self.learning_rate * self.domain_head_lr_scale * self.domain_head_weight_decay;
        if head_shrink >= 1.0 {
            return Err(TrainError::Config(format!(
                "learning_rate * domain_head_lr_scale * domain_head_weight_decay = {head_shrink} must stay below 1"
            )));
        }
        Ok(())
    }
}

fn default_domain_head_lr_scale() -> f64 {
    DOMAIN_HEAD_LR_SCALE
}

pub const DOMAIN_HEAD_LR_SCALE: f64 = 100.0;

fn default_domain_head_weight_decay() -> f64 {
    DOMAIN_HEAD_WEIGHT_DECAY
}

pub const DOMAIN_HEAD_WEIGHT_DECAY: f64 = 10.0;

/// Hyperparameter presets: `domain_specific` and `full_dataset`.
pub fn make_preset(name: &str) -> Result<TrainingConfig, TrainError> {
    let (learning_rate, batch_size) = match name {
        "domain_specific" | "domain-specific" => (2e-5, 16),
        "full_dataset" | "full-dataset" => (5e-5, 32),
        other => return Err(TrainError::Config(format!("unknown preset {other:?}"))),
    };
    Ok(TrainingConfig {
        learning_rate,
        weight_decay: 0.01,
        epochs: 10,
        batch_size,
        seed: 42,
        grl_schedule: GrlSchedule::Annealed,
        optimizer: OptimizerKind::Adam,
        patience: None,
        domain_head_lr_scale: DOMAIN_HEAD_LR_SCALE,
        domain_head_weight_decay: DOMAIN_HEAD_WEIGHT_DECAY,
        checkpoint: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub grl_lambda: f64,
    pub train_label_loss: f64,
    pub train_label_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_domain_accuracy: Option<f64>,
    pub dev_label_loss: f64,
    pub dev_label_accuracy: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub adversarial: bool,
    pub epochs: Vec<EpochRow>,
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
    pub wall_secs: f64,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    /// Loss/accuracy trajectory without timings, for determinism checks.
    pub fn trajectory(&self) -> Vec<(f64, f64, f64, f64)> {
        self.epochs
            .iter()
            .map(|r| (r.train_label_loss, r.train_label_accuracy, r.dev_label_loss, r.dev_label_accuracy))
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::from("epoch  lambda  train_loss  train_acc  dom_acc  dev_loss  dev_acc    secs\n");
        for r in &self.epochs {
            let dom = r.train_domain_accuracy.map_or("      -".to_string(), |a| format!("{:7.2}", a * 100.0));
            out.push_str(&format!(
                "{:>5}  {:>6.3}  {:>10.4}  {:>9.2}  {}  {:>8.4}  {:>7.2}  {:>6.2}\n",
                r.epoch,
                r.grl_lambda,
                r.train_label_loss,
                r.train_label_accuracy * 100.0,
                dom,
                r.dev_label_loss,
                r.dev_label_accuracy * 100.0,
                r.wall_secs
            ));
        }
        out.push_str(&format!("best epoch {} (dev acc {:.2})\n", self.best_epoch, self.best_dev_accuracy * 100.0));
        out
    }
}

struct Encoded {
    ids: Vec<Vec<u32>>,
    targets: Vec<Target>,
}

fn encode_split(model: &ClassifierModel, split: &[LabeledText], with_domain: bool) -> Result<Encoded, TrainError> {
    let mut ids = Vec::with_capacity(split.len());
    let mut targets = Vec::with_capacity(split.len());
    for e in split {
        ids.push(model.encode(&e.text).ids);
        let domain = if with_domain {
            Some(model.domain_index(&e.domain).ok_or_else(|| TrainError::UnknownDomain {
                id: e.id.clone(),
                domain: e.domain.clone(),
            })?)
        } else {
            None
        };
        targets.push(Target { label: Some(e.label), domain });
    }
    Ok(Encoded { ids, targets })
}

const EVAL_CHUNK: usize = 64;

/// Mean label cross-entropy and accuracy with dropout off.
fn dev_metrics(model: &ClassifierModel, dev: &Encoded) -> Result<(f64, f64), TrainError> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (ids, targets) in dev.ids.chunks(EVAL_CHUNK).zip(dev.targets.chunks(EVAL_CHUNK)) {
        let out = model.forward(ids)?;
        for (row, t) in out.label_logits.axis_iter(Axis(0)).zip(targets) {
            let label = t.label.expect("dev targets carry labels").code();
            loss -= ops::log_softmax(&row)[label];
            if argmax(row) == label {
                correct += 1;
            }
        }
    }
    let n = dev.ids.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn check_splits(train: &[LabeledText], dev: &[LabeledText]) -> Result<(), TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if dev.is_empty() {
        return Err(TrainError::EmptySplit("dev"));
    }
    let missing: Vec<Label> = Label::ALL.into_iter().filter(|l| !train.iter().any(|e| e.label == *l)).collect();
    if !missing.is_empty() {
        return Err(TrainError::MissingLabels(missing));
    }
    Ok(())
}

fn fit(
    model: &mut ClassifierModel,
    train: &[LabeledText],
    dev: &[LabeledText],
    config: &TrainingConfig,
    adversarial: bool,
) -> Result<TrainReport, TrainError> {
    if adversarial {
        config.validate_adversarial()?;
    } else {
        config.validate()?;
    }
    check_splits(train, dev)?;
    let start = Instant::now();
    let train_enc = encode_split(model, train, adversarial)?;
    let dev_enc = encode_split(model, dev, false)?;

    let mut optimizer = Optimizer::new(
        config.optimizer,
        config.learning_rate,
        config.weight_decay,
        model.layout().decay_mask(),
    );
    if adversarial {
        optimizer.set_group(model.domain_head_range(), config.domain_head_lr_scale, config.domain_head_weight_decay);
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(2);

    let n = train_enc.ids.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = (batches_per_epoch * config.epochs) as f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rows = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut since_best = 0usize;
    let mut step = 0usize;
    if !adversarial {
        model.grl_lambda = 0.0;
    }

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut dom_correct = 0usize;
        let mut dom_count = 0usize;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            if adversarial {
                model.grl_lambda = config.grl_schedule.lambda(step as f64 / total_steps);
            }
            let ids: Vec<Vec<u32>> = chunk.iter().map(|&i| train_enc.ids[i].clone()).collect();
            let targets: Vec<Target> = chunk.iter().map(|&i| train_enc.targets[i]).collect();
            let (loss, grads) = model.backward(&ids, &targets, Some(&mut dropout_rng))?;
            if !loss.total.is_finite() || !grads.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: bi });
            }
            optimizer.step(model.params_mut(), &grads.data);
            if !model.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: bi });
            }
            loss_sum += loss.label * chunk.len() as f64;
            correct += loss.label_correct;
            dom_correct += loss.domain_correct;
            dom_count += loss.domain_count;
            step += 1;
        }
        let (dev_loss, dev_acc) = dev_metrics(model, &dev_enc)?;
        let row = EpochRow {
            epoch,
            grl_lambda: model.grl_lambda,
            train_label_loss: loss_sum / n as f64,
            train_label_accuracy: correct as f64 / n as f64,
            train_domain_accuracy: (adversarial && dom_count > 0).then(|| dom_correct as f64 / dom_count as f64),
            dev_label_loss: dev_loss,
            dev_label_accuracy: dev_acc,
            wall_secs: start.elapsed().as_secs_f64(),
        };
        tracing::info!(
            epoch,
            train_loss = row.train_label_loss,
            dev_acc = row.dev_label_accuracy,
            lambda = row.grl_lambda,
            "epoch finished"
        );
        rows.push(row);
        // Ties keep the later epoch; only a strict gain resets patience.
        let previous = best.as_ref().map(|(_, acc, _)| *acc);
        if previous.is_none_or(|acc| dev_acc >= acc) {
            best = Some((epoch, dev_acc, model.params().to_vec()));
            if let Some(path) = &config.checkpoint {
                save_model(model, path)?;
            }
        }
        if previous.is_none_or(|acc| dev_acc > acc) {
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience.is_some_and(|p| since_best >= p) {
                tracing::info!(epoch, "early stopping");
                break;
            }
        }
    }
    let (best_epoch, best_dev_accuracy, params) = best.expect("at least one epoch ran");
    model.params_mut().copy_from_slice(&params);
    Ok(TrainReport {
        adversarial,
        epochs: rows,
        best_epoch,
        best_dev_accuracy,
        wall_secs: start.elapsed().as_secs_f64(),
        checkpoint: config.checkpoint.clone(),
    })
}

/// Trains the label head and encoder on four-way cross-entropy. The model
/// ends holding the parameters of the best dev-accuracy epoch.
pub fn train(
    model: &mut ClassifierModel,
    train: &[LabeledText],
    dev: &[LabeledText],
    config: &TrainingConfig,
) -> Result<TrainReport, TrainError> {
    fit(model, train, dev, config, false)
}

/// Domain-adversarial training: label cross-entropy plus domain
/// cross-entropy, the latter reaching the encoder through gradient reversal
/// with the coefficient given by `config.grl_schedule`.
pub fn dann_train(
    model: &mut ClassifierModel,
    train: &[LabeledText],
    dev: &[LabeledText],
    config: &TrainingConfig,
) -> Result<TrainReport, TrainError> {
    let mut seen: Vec<&str> = train.iter().map(|e| e.domain.as_str()).collect();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() < 2 || model.num_domains() < 2 {
        return Err(TrainError::SingleDomain(seen.len()));
    }
    fit(model, train, dev, config, true)
}
