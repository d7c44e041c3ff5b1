//! The epoch loop and the NES, ES and WES stopping policies.
//!
//! One run trains a single model and feeds every epoch's metrics to one patience tracker per
//! requested policy. A tracker records a strict improvement of its metric as a new best and
//! saves a checkpoint; any other epoch increments its counter, and the tracker halts once the
//! counter reaches the patience. Training stops when every early-stopping policy has halted,
//! or runs to the epoch limit when WES is requested. Each policy then loads its best
//! checkpoint.

mod runlog;

pub use runlog::{EpochRecord, RunLog};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::data::{Dataset, EvalSet, LabelTrack, SplitBundle};
use crate::error::{Error, Result};
use crate::estimators::{
    agreement, load_checkpoint, save_checkpoint, MlpEstimator, Model, ProbabilityEstimator,
};
use crate::losses::LossSpec;
use crate::noise::TransitionMatrix;
use crate::risk::{g_vector_with_ties, TiePolicy};

pub const DEFAULT_MAX_EPOCHS: usize = 100;
pub const DEFAULT_PATIENCE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    /// Monitors noisy-validation accuracy.
    Nes,
    /// Monitors clean-validation accuracy.
    Es,
    /// No early stopping; returns the final model.
    Wes,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Nes, PolicyKind::Es, PolicyKind::Wes];

    pub(crate) fn index(self) -> usize {
        match self {
            PolicyKind::Nes => 0,
            PolicyKind::Es => 1,
            PolicyKind::Wes => 2,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Nes => "NES",
            PolicyKind::Es => "ES",
            PolicyKind::Wes => "WES",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NES" => Ok(PolicyKind::Nes),
            "ES" => Ok(PolicyKind::Es),
            "WES" => Ok(PolicyKind::Wes),
            _ => Err(Error::config(format!(
                "unknown policy {s:?} (expected NES, ES or WES)"
            ))),
        }
    }
}

/// Metric a policy monitors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monitor {
    NoisyValAccuracy,
    CleanValAccuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoppingPolicy {
    pub kind: PolicyKind,
}

impl StoppingPolicy {
    pub fn monitor(&self) -> Option<Monitor> {
        match self.kind {
            PolicyKind::Nes => Some(Monitor::NoisyValAccuracy),
            PolicyKind::Es => Some(Monitor::CleanValAccuracy),
            PolicyKind::Wes => None,
        }
    }
}

/// Settings of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub loss: LossSpec,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Where best-model checkpoints go; a temporary directory when unset.
    pub checkpoint_dir: Option<PathBuf>,
    /// When set, a g-vector is logged each epoch on the test set, treating each instance's
    /// noisy posterior as the column of this matrix at its clean label.
    pub gvector_matrix: Option<TransitionMatrix>,
    pub gvector_ties: TiePolicy,
}

impl TrainConfig {
    pub fn new(loss: LossSpec, lr: f64, batch_size: usize, seed: u64) -> Self {
        TrainConfig {
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            loss,
            lr,
            batch_size,
            seed,
            checkpoint_dir: None,
            gvector_matrix: None,
            gvector_ties: TiePolicy::Exclude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.max_epochs == 0 {
            problems.push("train.epochs must be at least 1".to_string());
        }
        if self.patience == 0 {
            problems.push("train.patience must be at least 1".to_string());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            problems.push(format!(
                "train.lr = {} must be finite and nonnegative",
                self.lr
            ));
        }
        if self.batch_size == 0 {
            problems.push("train.batch must be at least 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// What a tracker did with one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Improved,
    Stale,
    Halt,
}

/// Patience bookkeeping for one monitored metric.
#[derive(Debug, Clone)]
pub struct PatienceTracker {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    stale: usize,
    halted_at: Option<usize>,
}

impl PatienceTracker {
    /// The best value starts at negative infinity, so the first epoch is always an improvement.
    pub fn new(patience: usize) -> Self {
        PatienceTracker {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: None,
            stale: 0,
            halted_at: None,
        }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> Step {
        if value > self.best {
            self.best = value;
            self.best_epoch = Some(epoch);
            self.stale = 0;
            return Step::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.halted_at = Some(epoch);
            Step::Halt
        } else {
            Step::Stale
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn halted_at(&self) -> Option<usize> {
        self.halted_at
    }

    pub fn is_halted(&self) -> bool {
        self.halted_at.is_some()
    }
}

/// Metrics produced by one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub train_loss: f64,
    pub noisy_val_acc: f64,
    pub clean_val_acc: f64,
    pub clean_test_acc: f64,
    pub gvector: Option<Vec<f64>>,
}

/// Something that can be trained epoch by epoch and snapshotted.
pub trait EpochSource {
    fn run_epoch(&mut self, epoch: usize) -> Result<EpochMetrics>;
    fn snapshot(&self) -> Model;
}

/// The model a policy selected.
#[derive(Debug, Clone)]
pub struct Selection {
    pub policy: PolicyKind,
    pub chosen_epoch: usize,
    /// Epoch at which patience ran out, if it did.
    pub halted_epoch: Option<usize>,
    pub model: Model,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub log: RunLog,
    pub selections: Vec<Selection>,
}

impl TrainingOutcome {
    pub fn selection(&self, policy: PolicyKind) -> Option<&Selection> {
        self.selections.iter().find(|s| s.policy == policy)
    }
}

struct PolicyState {
    kind: PolicyKind,
    monitor: Option<Monitor>,
    tracker: PatienceTracker,
    path: PathBuf,
}

fn checkpoint_path(dir: &Path, kind: PolicyKind) -> PathBuf {
    dir.join(format!("best_{}.ckpt", kind.to_string().to_lowercase()))
}

/// Runs `source` under the requested policies.
pub fn drive(
    source: &mut dyn EpochSource,
    max_epochs: usize,
    patience: usize,
    policies: &[PolicyKind],
    checkpoint_dir: Option<&Path>,
    mut log: RunLog,
) -> Result<TrainingOutcome> {
    if policies.is_empty() {
        return Err(Error::config("no stopping policy requested"));
    }
    if max_epochs == 0 || patience == 0 {
        return Err(Error::config("epochs and patience must be at least 1"));
    }
    let tmp;
    let dir = match checkpoint_dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            d.to_path_buf()
        }
        None => {
            tmp = tempfile::tempdir()?;
            tmp.path().to_path_buf()
        }
    };
    let mut kinds: Vec<PolicyKind> = policies.to_vec();
    kinds.sort();
    kinds.dedup();
    let mut states: Vec<PolicyState> = kinds
        .iter()
        .map(|&kind| PolicyState {
            kind,
            monitor: StoppingPolicy { kind }.monitor(),
            tracker: PatienceTracker::new(patience),
            path: checkpoint_path(&dir, kind),
        })
        .collect();
    let start = Instant::now();
    let abort = |log: RunLog, e: Error| Error::Aborted {
        log: Box::new(log),
        source: Box::new(e),
    };

    for epoch in 1..=max_epochs {
        let m = match source.run_epoch(epoch) {
            Ok(m) => m,
            Err(e) => return Err(abort(log, e)),
        };
        log.records.push(EpochRecord {
            epoch,
            train_loss: m.train_loss,
            noisy_val_acc: m.noisy_val_acc,
            clean_val_acc: m.clean_val_acc,
            clean_test_acc: m.clean_test_acc,
            gvector: m.gvector,
        });
        let mut snapshot: Option<Model> = None;
        for st in states.iter_mut().filter(|s| !s.tracker.is_halted()) {
            let Some(monitor) = st.monitor else { continue };
            let value = match monitor {
                Monitor::NoisyValAccuracy => m.noisy_val_acc,
                Monitor::CleanValAccuracy => m.clean_val_acc,
            };
            if st.tracker.observe(epoch, value) == Step::Improved {
                let model = snapshot.get_or_insert_with(|| source.snapshot());
                if let Err(e) = save_checkpoint(model, &st.path) {
                    return Err(abort(log, e));
                }
            }
        }
        let wes = states.iter().any(|s| s.monitor.is_none());
        if !wes && states.iter().all(|s| s.tracker.is_halted()) {
            break;
        }
    }

    let last = log.last_epoch();
    let mut selections = Vec::new();
    for st in &states {
        let (chosen_epoch, model) = match st.monitor {
            None => (last, source.snapshot()),
            Some(_) => {
                let e = st.tracker.best_epoch().expect("at least one epoch ran");
                match load_checkpoint(&st.path) {
                    Ok(m) => (e, m),
                    Err(err) => return Err(abort(log, err)),
                }
            }
        };
        log.chosen[st.kind.index()] = Some(chosen_epoch);
        selections.push(Selection {
            policy: st.kind,
            chosen_epoch,
            halted_epoch: st.tracker.halted_at(),
            model,
        });
    }
    log.wall_time_s = Some(start.elapsed().as_secs_f64());
    Ok(TrainingOutcome { log, selections })
}

/// Accuracy of plug-in predictions against one label track of `dataset`.
pub fn evaluate_accuracy(
    model: &dyn ProbabilityEstimator,
    dataset: &Dataset,
    track: LabelTrack,
) -> Result<f64> {
    let labels = dataset.labels(track)?;
    agreement(&model.predict(dataset.features().view()), labels)
}

/// Accuracy of plug-in predictions on an evaluation set.
pub fn evaluate_set(model: &dyn ProbabilityEstimator, set: &EvalSet) -> Result<f64> {
    agreement(&model.predict(set.features().view()), set.labels())
}

/// Trains an MLP on the noisy training labels.
struct MlpSource<'a> {
    model: MlpEstimator,
    splits: &'a SplitBundle,
    noisy_train: &'a [usize],
    config: &'a TrainConfig,
    test_columns: Option<Vec<Vec<f64>>>,
}

impl EpochSource for MlpSource<'_> {
    fn run_epoch(&mut self, epoch: usize) -> Result<EpochMetrics> {
        let c = self.config;
        let train_loss = self.model.sgd_epoch(
            self.splits.train.features().view(),
            self.noisy_train,
            &c.loss,
            c.lr,
            c.batch_size,
            c.seed,
            epoch,
        )?;
        let test_preds = self.model.predict(self.splits.test.features().view());
        let gvector = match &self.test_columns {
            Some(cols) => Some(
                g_vector_with_ties(&test_preds, cols, c.gvector_ties)?
                    .g
                    .into_inner(),
            ),
            None => None,
        };
        Ok(EpochMetrics {
            train_loss,
            noisy_val_acc: evaluate_set(&self.model, &self.splits.noisy_val)?,
            clean_val_acc: evaluate_set(&self.model, &self.splits.clean_val)?,
            clean_test_acc: agreement(&test_preds, self.splits.test.labels())?,
            gvector,
        })
    }

    fn snapshot(&self) -> Model {
        Model::Mlp(self.model.clone())
    }
}

/// Trains `model` on `splits.train` with its noisy labels and applies every requested policy.
pub fn run_training(
    model: MlpEstimator,
    splits: &SplitBundle,
    config: &TrainConfig,
    policies: &[PolicyKind],
) -> Result<TrainingOutcome> {
    config.validate()?;
    if model.input_dim() != splits.train.dim() {
        return Err(Error::Shape(format!(
            "network expects {} features, data has {}",
            model.input_dim(),
            splits.train.dim()
        )));
    }
    if let Some(k) = config.loss.classes() {
        if k != model.classes() {
            return Err(Error::Shape(format!(
                "loss matrix has {k} classes, network has {}",
                model.classes()
            )));
        }
    }
    let test_columns = match &config.gvector_matrix {
        Some(t) => {
            if t.classes() != model.classes() {
                return Err(Error::Shape(
                    "g-vector matrix class count differs from the network".into(),
                ));
            }
            Some(
                splits
                    .test
                    .labels()
                    .iter()
                    .map(|&y| t.column(y).to_vec())
                    .collect(),
            )
        }
        None => None,
    };
    let mut log = RunLog::default();
    log.echo("seed", config.seed);
    log.echo("rng", crate::rng::GENERATOR_NAME);
    log.echo("loss", &config.loss);
    log.echo("train.lr", config.lr);
    log.echo("train.batch", config.batch_size);
    log.echo("train.epochs", config.max_epochs);
    log.echo("train.patience", config.patience);
    log.echo(
        "model.widths",
        model
            .widths()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    let noisy_train = splits.train.labels(LabelTrack::Noisy)?;
    let mut source = MlpSource {
        model,
        splits,
        noisy_train,
        config,
        test_columns,
    };
    drive(
        &mut source,
        config.max_epochs,
        config.patience,
        policies,
        config.checkpoint_dir.as_deref(),
        log,
    )
}
