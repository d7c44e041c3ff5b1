//! Config-driven experiments that write their results as CSV.
//!
//! Every command takes an [`ExperimentConfig`], runs its seeds (and grid points) as independent
//! tasks on a pool of `jobs` threads, writes one directory of artifacts per task and then a
//! merged summary. Wall-clock times only ever appear on `#` comment lines, so rerunning a
//! command with the same configuration reproduces every CSV body byte for byte.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Axis;
use rayon::prelude::*;

pub use config::*;

use crate::data::{
    load_cache, load_idx, make_synthetic, split, subset_classes, Dataset, LabelTrack, SplitBundle,
};
use crate::error::{Error, Result};
use crate::estimators::{tree_fit, MlpEstimator, ProbabilityEstimator};
use crate::losses::{backward_correct, forward_correct, LossSpec};
use crate::noise::{
    apply_noise, build_asym_mnist, build_circular, build_classifier_induced_field,
    build_five_class_gvector, build_pairwise, build_pca_split_field, build_subset_symmetric,
    build_superclass_circular, build_symmetric, build_symmetric_injection, build_ternary_gvector,
    consecutive_groups, NoiseField, NoiseKind, TransitionMatrix, UniformNoise, CIFAR10_PAIRS,
};
use crate::risk::{affine_noisy_accuracy, affine_slope, simultaneous_minima_window, MinimaWindow};
use crate::rng::{self, Stream};
use crate::training::{
    evaluate_set, run_training, PolicyKind, RunLog, TrainConfig, TrainingOutcome,
};

/// Loads the configured dataset, restricts it to the class subset and draws the row subset.
pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    let mut ds = match &spec.source {
        DataSource::Idx { images, labels } => load_idx(images, labels)?,
        DataSource::Synthetic {
            n,
            d,
            informative,
            classes,
            seed,
        } => make_synthetic(*n, *d, *informative, *classes, *seed)?,
        DataSource::Cache(path) => load_cache(path)?,
    };
    if let Some(keep) = &spec.classes {
        ds = subset_classes(&ds, keep)?;
    }
    if let Some(limit) = spec.limit {
        if limit < ds.len() {
            let mut r = rng::stream(spec.subset_seed, Stream::Subset);
            let mut idx = rand::seq::index::sample(&mut r, ds.len(), limit).into_vec();
            idx.sort_unstable();
            ds = ds.select(&idx);
        }
    }
    Ok(ds)
}

fn need_classes(recipe: NoiseRecipe, c: usize, want: usize) -> Result<()> {
    if c == want {
        Ok(())
    } else {
        Err(Error::config(format!(
            "noise.kind = {} needs {want} classes, data has {c}",
            recipe.name()
        )))
    }
}

/// The single transition matrix of a recipe, or `None` for instance-dependent recipes.
pub fn uniform_matrix(spec: &NoiseSpec, c: usize) -> Result<Option<TransitionMatrix>> {
    let eta = spec.eta;
    let m = match spec.recipe {
        NoiseRecipe::None => TransitionMatrix::identity(c)?,
        NoiseRecipe::Symmetric => build_symmetric_injection(c, eta, spec.include_original)?,
        NoiseRecipe::Circular => build_circular(c, eta)?,
        NoiseRecipe::Pairwise => {
            let pairs = match &spec.pairs {
                Some(p) => p.clone(),
                None if c == 10 => CIFAR10_PAIRS.to_vec(),
                None => {
                    return Err(Error::config(
                        "noise.pairs is required unless the data has 10 classes",
                    ))
                }
            };
            build_pairwise(c, &pairs, eta)?
        }
        NoiseRecipe::AsymMnist => {
            need_classes(spec.recipe, c, 10)?;
            build_asym_mnist(eta)?
        }
        NoiseRecipe::Superclass => {
            build_superclass_circular(&consecutive_groups(c, spec.group_size)?, eta)?
        }
        NoiseRecipe::SubsetSymmetric => {
            build_subset_symmetric(&consecutive_groups(c, spec.group_size)?, eta)?
        }
        NoiseRecipe::Ternary => {
            need_classes(spec.recipe, c, 3)?;
            build_ternary_gvector(eta)?
        }
        NoiseRecipe::FiveClass => {
            need_classes(spec.recipe, c, 5)?;
            build_five_class_gvector()
        }
        NoiseRecipe::Custom => {
            let path = spec
                .matrix
                .as_ref()
                .ok_or_else(|| Error::config("noise.matrix is not set"))?;
            let t = TransitionMatrix::from_text(&std::fs::read_to_string(path)?)?;
            need_classes(spec.recipe, c, t.classes())?;
            t
        }
        NoiseRecipe::PcaSplit | NoiseRecipe::Classifier => return Ok(None),
    };
    Ok(Some(m))
}

fn noise_kind(recipe: NoiseRecipe) -> NoiseKind {
    match recipe {
        NoiseRecipe::Symmetric => NoiseKind::Symmetric,
        NoiseRecipe::Circular => NoiseKind::Circular,
        NoiseRecipe::Pairwise => NoiseKind::Pairwise,
        NoiseRecipe::PcaSplit => NoiseKind::PcaSplit,
        NoiseRecipe::Classifier => NoiseKind::ClassifierInduced,
        _ => NoiseKind::Custom,
    }
}

/// Largest nominal rate at which the recipe stays diagonally dominant, when it has one.
pub fn class_preserving_threshold(spec: &NoiseSpec, c: usize) -> Option<f64> {
    let cf = c as f64;
    let k = spec.group_size as f64;
    match spec.recipe {
        NoiseRecipe::Symmetric if spec.include_original => Some(1.0),
        NoiseRecipe::Symmetric => Some((cf - 1.0) / cf),
        NoiseRecipe::Circular | NoiseRecipe::Pairwise => Some(0.5),
        NoiseRecipe::Superclass if spec.group_size > 1 => Some(0.5),
        NoiseRecipe::SubsetSymmetric if spec.group_size > 1 => Some((k - 1.0) / k),
        NoiseRecipe::AsymMnist => Some(1.0 / 3.0),
        NoiseRecipe::Ternary => Some(0.4),
        _ => None,
    }
}

/// Provenance entries as `(key, value)` pairs.
pub type Notes = Vec<(String, String)>;

/// Builds the noise field of `spec` for `ds`. Instance-dependent recipes are fitted on the
/// clean labels; the classifier recipe trains its linear predictor with `seed`.
pub fn build_noise_field(
    spec: &NoiseSpec,
    ds: &Dataset,
    seed: u64,
) -> Result<(Arc<dyn NoiseField>, Notes)> {
    let c = ds.classes();
    let mut notes = Vec::new();
    if let Some(t) = uniform_matrix(spec, c)? {
        notes.push((
            "noise.matrix_rate".to_string(),
            (1.0 - t.diagonal().mean().unwrap_or(1.0)).to_string(),
        ));
        return Ok((
            Arc::new(UniformNoise::new(t, noise_kind(spec.recipe), spec.eta)),
            notes,
        ));
    }
    let field: Arc<dyn NoiseField> = match spec.recipe {
        NoiseRecipe::PcaSplit => {
            let a = build_symmetric(c, 1.0)?;
            let groups: Vec<Vec<usize>> = if c == 10 {
                vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8], vec![9]]
            } else {
                consecutive_groups(c, spec.group_size)?
            };
            let b = build_subset_symmetric(&groups, 1.0)?;
            Arc::new(build_pca_split_field(
                ds.features().view(),
                ds.clean_labels(),
                spec.eta,
                a,
                b,
            )?)
        }
        NoiseRecipe::Classifier => {
            let mut predictor = MlpEstimator::init(&[ds.dim(), c], seed)?;
            for epoch in 1..=spec.predictor_epochs {
                predictor.sgd_epoch(
                    ds.features().view(),
                    ds.clean_labels(),
                    &LossSpec::CrossEntropy,
                    0.01,
                    128,
                    seed,
                    epoch,
                )?;
            }
            let predictor: Arc<dyn ProbabilityEstimator> = Arc::new(predictor);
            let f = build_classifier_induced_field(
                predictor,
                spec.eta,
                Some((ds.features().view(), ds.clean_labels())),
            )?;
            if let Some(a) = f.clean_accuracy() {
                notes.push(("noise.predictor_accuracy".to_string(), a.to_string()));
            }
            Arc::new(f)
        }
        _ => unreachable!("uniform recipes handled above"),
    };
    Ok((field, notes))
}

/// The matrix a forward or backward correction uses: the true one for uniform recipes,
/// symmetric noise at the nominal rate otherwise.
pub fn correction_matrix(spec: &NoiseSpec, c: usize) -> Result<TransitionMatrix> {
    match uniform_matrix(spec, c)? {
        Some(t) => Ok(t),
        None => build_symmetric(c, spec.eta),
    }
}

/// Turns the loss settings into a [`LossSpec`] for `c` classes.
pub fn build_loss(cfg: &ExperimentConfig, c: usize) -> Result<LossSpec> {
    let l = &cfg.loss;
    let simple = |name: LossName| -> Result<LossSpec> {
        Ok(match name {
            LossName::Ce => LossSpec::CrossEntropy,
            LossName::Mse => LossSpec::Mse,
            LossName::Gce => LossSpec::gce(l.rho)?,
            LossName::Sce => LossSpec::sce(l.alpha, l.beta, l.clip)?,
            LossName::Forward | LossName::Backward => unreachable!("rejected while parsing"),
        })
    };
    match l.name {
        LossName::Forward => forward_correct(simple(l.base)?, &correction_matrix(&cfg.noise, c)?),
        LossName::Backward => backward_correct(simple(l.base)?, &correction_matrix(&cfg.noise, c)?),
        other => simple(other),
    }
}

/// Noisy labels and splits of one seed.
pub struct PreparedSeed {
    pub splits: SplitBundle,
    pub field: Arc<dyn NoiseField>,
    /// Provenance entries describing the injected noise.
    pub notes: Vec<(String, String)>,
}

/// Injects noise into `ds` and splits it, both driven by `seed`.
pub fn prepare_seed(cfg: &ExperimentConfig, ds: &Dataset, seed: u64) -> Result<PreparedSeed> {
    let (field, mut notes) = build_noise_field(&cfg.noise, ds, seed)?;
    let noisy = apply_noise(
        ds.clean_labels(),
        field.as_ref(),
        ds.features().view(),
        seed,
    )?;
    let flipped = noisy
        .iter()
        .zip(ds.clean_labels())
        .filter(|(a, b)| a != b)
        .count();
    notes.push((
        "noise.flip_fraction".to_string(),
        (flipped as f64 / ds.len().max(1) as f64).to_string(),
    ));
    let noisy_ds = ds.clone().with_noisy_labels(noisy, field.describe())?;
    let splits = split(&noisy_ds, cfg.train.split, seed)?;
    Ok(PreparedSeed {
        splits,
        field,
        notes,
    })
}

fn require_seeds(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.seeds.is_empty() {
        Err(Error::config("seeds must list at least one seed"))
    } else {
        Ok(())
    }
}

fn require_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    require_seeds(cfg)?;
    let spec = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::config("dataset.source is required for this command"))?;
    load_dataset(spec)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start {jobs} worker thread(s): {e}")))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Sample mean and standard deviation (n-1 denominator; zero for a single value).
pub fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, sd))
}

/// Outcome of one seed of `train`.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub log: RunLog,
    /// Chosen epoch per policy, indexed like [`PolicyKind::index`].
    pub epochs: [Option<usize>; 3],
    /// Clean-test accuracy of each policy's selected model.
    pub accuracy: [Option<f64>; 3],
}

impl SeedResult {
    pub fn accuracy(&self, p: PolicyKind) -> Option<f64> {
        self.accuracy[p.index()]
    }

    fn from_outcome(seed: u64, outcome: TrainingOutcome) -> Self {
        let mut epochs = [None; 3];
        let mut accuracy = [None; 3];
        for sel in &outcome.selections {
            epochs[sel.policy.index()] = Some(sel.chosen_epoch);
            accuracy[sel.policy.index()] = outcome
                .log
                .record(sel.chosen_epoch)
                .map(|r| r.clean_test_acc);
        }
        SeedResult {
            seed,
            log: outcome.log,
            epochs,
            accuracy,
        }
    }
}

/// Per-seed selections with their mean and standard deviation.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub seeds: Vec<SeedResult>,
}

impl TrainSummary {
    pub fn stats(&self, p: PolicyKind) -> Option<(f64, f64)> {
        let v: Vec<f64> = self.seeds.iter().filter_map(|s| s.accuracy(p)).collect();
        mean_sd(&v)
    }

    /// Mean over seeds of the per-seed accuracy difference `a - b`.
    pub fn mean_gap(&self, a: PolicyKind, b: PolicyKind) -> Option<f64> {
        let v: Vec<f64> = self
            .seeds
            .iter()
            .filter_map(|s| Some(s.accuracy(a)? - s.accuracy(b)?))
            .collect();
        mean_sd(&v).map(|(m, _)| m)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed");
        for p in PolicyKind::ALL {
            let name = p.to_string().to_lowercase();
            let _ = write!(out, ",{name}_epoch,{name}_clean_test_acc");
        }
        out.push('\n');
        for s in &self.seeds {
            let _ = write!(out, "{}", s.seed);
            for p in PolicyKind::ALL {
                let e = s.epochs[p.index()].map_or_else(String::new, |e| e.to_string());
                let _ = write!(out, ",{e},{}", fmt_opt(s.accuracy(p)));
            }
            out.push('\n');
        }
        for (label, pick) in [("mean", 0usize), ("sd", 1)] {
            out.push_str(label);
            for p in PolicyKind::ALL {
                let v = self.stats(p).map(|(m, s)| if pick == 0 { m } else { s });
                let _ = write!(out, ",,{}", fmt_opt(v));
            }
            out.push('\n');
        }
        out
    }
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Trains one seed and writes its run log and checkpoints under `dir`.
pub fn train_seed(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    seed: u64,
    dir: &Path,
    gvector: Option<TransitionMatrix>,
) -> Result<SeedResult> {
    let prepared = prepare_seed(cfg, ds, seed)?;
    let c = ds.classes();
    let mut widths = vec![ds.dim()];
    widths.extend(&cfg.train.hidden);
    widths.push(c);
    let model = MlpEstimator::init(&widths, seed)?;
    let mut tc = TrainConfig::new(build_loss(cfg, c)?, cfg.train.lr, cfg.train.batch, seed);
    tc.max_epochs = cfg.train.epochs;
    tc.patience = cfg.train.patience;
    tc.checkpoint_dir = Some(dir.to_path_buf());
    tc.gvector_matrix = gvector;
    tc.gvector_ties = cfg.train.gvector_ties;
    let decorate = |log: &mut RunLog| {
        log.echo("classes", c);
        log.echo("noise.kind", cfg.noise.recipe.name());
        log.echo("noise.eta", cfg.noise.eta);
        for (k, v) in &prepared.notes {
            log.echo(k, v);
        }
        log.echo("data.rows", ds.len());
    };
    match run_training(model, &prepared.splits, &tc, &cfg.policies) {
        Ok(mut outcome) => {
            decorate(&mut outcome.log);
            write(&dir.join("runlog.csv"), &outcome.log.to_csv())?;
            Ok(SeedResult::from_outcome(seed, outcome))
        }
        Err(Error::Aborted { mut log, source }) => {
            decorate(&mut log);
            write(&dir.join("runlog.csv"), &log.to_csv())?;
            Err(Error::Aborted { log, source })
        }
        Err(e) => Err(e),
    }
}

fn config_header(cfg: &ExperimentConfig) -> String {
    cfg.echo
        .iter()
        .map(|(k, v)| format!("# {k} = {v}\n"))
        .collect()
}

/// `train`: every seed of the configuration, then `summary.csv` in the output directory.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let ds = require_dataset(cfg)?;
    let seeds = pool(cfg.jobs)?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| train_seed(cfg, &ds, s, &seed_dir(&cfg.output, s), None))
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = TrainSummary { seeds };
    write(
        &cfg.output.join("summary.csv"),
        &(config_header(cfg) + &summary.to_csv()),
    )?;
    Ok(summary)
}

/// One grid point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub eta: f64,
    pub threshold: Option<f64>,
    pub summary: TrainSummary,
}

impl SweepRow {
    pub fn nes_minus_es(&self) -> Option<f64> {
        self.summary.mean_gap(PolicyKind::Nes, PolicyKind::Es)
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("eta,nes_mean,nes_sd,es_mean,es_sd,wes_mean,wes_sd,nes_minus_es,threshold,class_preserving\n");
    for r in rows {
        let _ = write!(out, "{}", r.eta);
        for p in PolicyKind::ALL {
            let st = r.summary.stats(p);
            let _ = write!(
                out,
                ",{},{}",
                fmt_opt(st.map(|s| s.0)),
                fmt_opt(st.map(|s| s.1))
            );
        }
        let preserving = r
            .threshold
            .map_or_else(String::new, |t| (r.eta < t).to_string());
        let _ = writeln!(
            out,
            ",{},{},{preserving}",
            fmt_opt(r.nes_minus_es()),
            fmt_opt(r.threshold)
        );
    }
    out
}

/// `sweep`: `train` at every rate of `etas` (the configured `sweep.etas` when empty).
pub fn cmd_sweep(cfg: &ExperimentConfig, etas: &[f64]) -> Result<Vec<SweepRow>> {
    let etas = if etas.is_empty() {
        cfg.sweep_etas.as_slice()
    } else {
        etas
    };
    if etas.is_empty() {
        return Err(Error::config("sweep needs at least one rate (sweep.etas)"));
    }
    if let Some(bad) = etas.iter().find(|e| !(0.0..1.0).contains(*e)) {
        return Err(Error::config(format!("sweep rate {bad} is not in [0, 1)")));
    }
    let ds = require_dataset(cfg)?;
    let c = ds.classes();
    let configs: Vec<ExperimentConfig> = etas
        .iter()
        .map(|&eta| {
            let mut e = cfg.clone();
            e.noise.eta = eta;
            e.output = cfg.output.join(format!("eta_{eta}"));
            e
        })
        .collect();
    let tasks: Vec<(usize, u64)> = (0..etas.len())
        .flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results = pool(cfg.jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(i, s)| train_seed(&configs[i], &ds, s, &seed_dir(&configs[i].output, s), None))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut rows: Vec<SweepRow> = etas
        .iter()
        .map(|&eta| SweepRow {
            eta,
            threshold: class_preserving_threshold(&cfg.noise, c),
            summary: TrainSummary { seeds: Vec::new() },
        })
        .collect();
    for (&(i, _), r) in tasks.iter().zip(results) {
        rows[i].summary.seeds.push(r);
    }
    for (row, e) in rows.iter().zip(&configs) {
        write(&e.output.join("summary.csv"), &row.summary.to_csv())?;
    }
    write(
        &cfg.output.join("sweep.csv"),
        &(config_header(cfg) + &sweep_csv(&rows)),
    )?;
    Ok(rows)
}

/// Least-squares line `y = slope * x + intercept` and its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `ys` on `xs`; NaN fields when `xs` has no spread.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    LinearFit {
        slope,
        intercept,
        r2: 1.0 - sse / syy,
    }
}

/// Per-epoch accuracy pairs with the affine prediction and the fitted line.
#[derive(Debug, Clone)]
pub struct ScatterReport {
    /// `(epoch, clean accuracy, noisy accuracy)` on the validation split.
    pub points: Vec<(usize, f64, f64)>,
    pub eta: f64,
    pub classes: usize,
    pub theory_slope: f64,
    pub theory_intercept: f64,
    pub fit: LinearFit,
}

impl ScatterReport {
    pub fn points_csv(&self) -> String {
        let mut out = String::from("epoch,clean_acc,noisy_acc,affine_noisy_acc\n");
        for &(e, c, n) in &self.points {
            let _ = writeln!(
                out,
                "{e},{c},{n},{}",
                affine_noisy_accuracy(c, self.eta, self.classes)
            );
        }
        out
    }

    pub fn lines_csv(&self) -> String {
        format!(
            "line,slope,intercept,r2\ntheory,{},{},\nfit,{},{},{}\n",
            self.theory_slope,
            self.theory_intercept,
            self.fit.slope,
            self.fit.intercept,
            self.fit.r2
        )
    }
}

fn echoed<T: std::str::FromStr>(log: &RunLog, key: &str) -> Option<T> {
    log.config
        .iter()
        .find(|(k, _)| k == key)
        .and_then(|(_, v)| v.parse().ok())
}

/// `scatter`: regresses noisy-validation accuracy on clean-validation accuracy across epochs.
///
/// The rate and class count default to the `noise.matrix_rate` and `classes` entries the
/// `train` command echoes into its run logs.
pub fn cmd_scatter(
    log: &RunLog,
    eta: Option<f64>,
    classes: Option<usize>,
) -> Result<ScatterReport> {
    if log.records.is_empty() {
        return Err(Error::MissingTrack("run log has no epochs".into()));
    }
    let bad = |v: f64| !v.is_finite();
    if log
        .records
        .iter()
        .any(|r| bad(r.clean_val_acc) || bad(r.noisy_val_acc))
    {
        return Err(Error::MissingTrack(
            "run log lacks a finite clean or noisy accuracy track".into(),
        ));
    }
    let eta = eta
        .or_else(|| echoed(log, "noise.matrix_rate"))
        .ok_or_else(|| {
            Error::config("noise rate unknown: pass it or use a log written by train")
        })?;
    let classes = classes.or_else(|| echoed(log, "classes")).ok_or_else(|| {
        Error::config("class count unknown: pass it or use a log written by train")
    })?;
    let points: Vec<(usize, f64, f64)> = log
        .records
        .iter()
        .map(|r| (r.epoch, r.clean_val_acc, r.noisy_val_acc))
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.1).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.2).collect();
    Ok(ScatterReport {
        points,
        eta,
        classes,
        theory_slope: affine_slope(eta, classes),
        theory_intercept: eta / (classes as f64 - 1.0),
        fit: linear_fit(&xs, &ys),
    })
}

/// Accuracies of one tree depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRow {
    pub depth: usize,
    pub noisy_val: f64,
    pub clean_val: f64,
    pub clean_test: f64,
}

/// Depth curve of one seed.
#[derive(Debug, Clone)]
pub struct DepthCurve {
    pub seed: u64,
    pub rows: Vec<DepthRow>,
    /// Shallowest depth with the highest noisy-validation accuracy.
    pub noisy_argmax: usize,
    /// Shallowest depth with the highest clean-validation accuracy.
    pub clean_argmax: usize,
}

impl DepthCurve {
    fn row(&self, depth: usize) -> &DepthRow {
        self.rows
            .iter()
            .find(|r| r.depth == depth)
            .expect("argmax depth is on the grid")
    }

    /// Clean-validation accuracy lost by choosing the noisy-argmax depth.
    pub fn deficit(&self) -> f64 {
        self.row(self.clean_argmax).clean_val - self.row(self.noisy_argmax).clean_val
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "depth,noisy_val_acc,clean_val_acc,clean_test_acc,noisy_argmax,clean_argmax\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.depth,
                r.noisy_val,
                r.clean_val,
                r.clean_test,
                u8::from(r.depth == self.noisy_argmax),
                u8::from(r.depth == self.clean_argmax)
            );
        }
        out
    }
}

fn first_argmax(rows: &[DepthRow], key: impl Fn(&DepthRow) -> f64) -> usize {
    let mut best = &rows[0];
    for r in &rows[1..] {
        if key(r) > key(best) {
            best = r;
        }
    }
    best.depth
}

/// Fits trees of every depth on the noisy training labels of one prepared seed.
pub fn depth_curve(splits: &SplitBundle, depths: &[usize], seed: u64) -> Result<DepthCurve> {
    if depths.is_empty() {
        return Err(Error::config("tree depth grid is empty"));
    }
    let train = &splits.train;
    let labels = train.labels(LabelTrack::Noisy)?;
    let rows = depths
        .iter()
        .map(|&depth| {
            let tree = tree_fit(train.features().view(), labels, train.classes(), depth)?;
            Ok(DepthRow {
                depth,
                noisy_val: evaluate_set(&tree, &splits.noisy_val)?,
                clean_val: evaluate_set(&tree, &splits.clean_val)?,
                clean_test: evaluate_set(&tree, &splits.test)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DepthCurve {
        seed,
        noisy_argmax: first_argmax(&rows, |r| r.noisy_val),
        clean_argmax: first_argmax(&rows, |r| r.clean_val),
        rows,
    })
}

/// `tree-depth`: a depth curve per seed plus `tree_summary.csv`.
pub fn cmd_tree_depth(cfg: &ExperimentConfig, depths: &[usize]) -> Result<Vec<DepthCurve>> {
    let depths = if depths.is_empty() {
        cfg.tree_depths.as_slice()
    } else {
        depths
    };
    if depths.is_empty() {
        return Err(Error::config("tree depth grid is empty"));
    }
    let ds = require_dataset(cfg)?;
    let curves = pool(cfg.jobs)?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| {
                let prepared = prepare_seed(cfg, &ds, s)?;
                let curve = depth_curve(&prepared.splits, depths, s)?;
                write(
                    &seed_dir(&cfg.output, s).join("tree_depth.csv"),
                    &curve.to_csv(),
                )?;
                Ok(curve)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out =
        config_header(cfg) + "seed,noisy_argmax_depth,clean_argmax_depth,clean_val_deficit\n";
    for c in &curves {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            c.seed,
            c.noisy_argmax,
            c.clean_argmax,
            c.deficit()
        );
    }
    write(&cfg.output.join("tree_summary.csv"), &out)?;
    Ok(curves)
}

/// g-vector trajectories of one seed.
#[derive(Debug, Clone)]
pub struct GVectorRun {
    pub seed: u64,
    /// `trajectories[k][e]`: share of test predictions at noisy-posterior rank `k + 1` after
    /// epoch `e + 1`.
    pub trajectories: Vec<Vec<f64>>,
    /// Minima window of ranks 2 and below.
    pub window: MinimaWindow,
    pub log: RunLog,
}

/// `gvector`: trains with per-epoch g-vectors under a known uniform transition matrix.
pub fn cmd_gvector(cfg: &ExperimentConfig) -> Result<Vec<GVectorRun>> {
    if cfg.noise.recipe.is_instance_dependent() {
        return Err(Error::Unsupported(format!(
            "g-vectors need a known transition matrix; noise.kind = {} is instance dependent",
            cfg.noise.recipe.name()
        )));
    }
    let ds = require_dataset(cfg)?;
    let t = uniform_matrix(&cfg.noise, ds.classes())?.expect("uniform recipe");
    let runs = pool(cfg.jobs)?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| {
                let res = train_seed(cfg, &ds, s, &seed_dir(&cfg.output, s), Some(t.clone()))?;
                let c = ds.classes();
                let trajectories: Vec<Vec<f64>> = (0..c)
                    .map(|k| {
                        res.log
                            .records
                            .iter()
                            .map(|r| r.gvector.as_ref().map_or(f64::NAN, |g| g[k]))
                            .collect()
                    })
                    .collect();
                let window = simultaneous_minima_window(&trajectories[1..])?;
                Ok(GVectorRun {
                    seed: s,
                    trajectories,
                    window,
                    log: res.log,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = config_header(cfg) + "seed,t1,t2,width,degenerate\n";
    for r in &runs {
        let w = &r.window;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.seed,
            w.t1,
            w.t2,
            w.width(),
            w.degenerate
        );
    }
    write(&cfg.output.join("gvector_summary.csv"), &out)?;
    Ok(runs)
}

/// Inputs of `bounds`.
#[derive(Debug, Clone)]
pub enum BoundsInput {
    /// Column-permutation matrix and noisy accuracies of the best and selected models.
    Matrix {
        matrix: TransitionMatrix,
        best_noisy_accuracy: f64,
        selected_noisy_accuracy: Option<f64>,
    },
    /// The same with explicit `(eta, eta_min, eta_max)`.
    Rates {
        eta: f64,
        eta_min: f64,
        eta_max: f64,
        best_noisy_accuracy: f64,
        selected_noisy_accuracy: Option<f64>,
    },
    /// Pairwise noise at `eta` and the selected model's noisy accuracy.
    Pairwise { eta: f64, noisy_accuracy: f64 },
}

/// `bounds`: evaluates the worst-case clean-risk gap.
pub fn cmd_bounds(input: &BoundsInput) -> Result<crate::risk::BoundReport> {
    use crate::risk::{bound_parameters, pairwise_gap, worst_case_gap};
    match input {
        BoundsInput::Matrix {
            matrix,
            best_noisy_accuracy,
            selected_noisy_accuracy,
        } => {
            let (eta, lo, hi) = bound_parameters(matrix)?;
            worst_case_gap(
                1.0 - best_noisy_accuracy,
                selected_noisy_accuracy.map(|a| 1.0 - a),
                eta,
                lo,
                hi,
            )
        }
        BoundsInput::Rates {
            eta,
            eta_min,
            eta_max,
            best_noisy_accuracy,
            selected_noisy_accuracy,
        } => worst_case_gap(
            1.0 - best_noisy_accuracy,
            selected_noisy_accuracy.map(|a| 1.0 - a),
            *eta,
            *eta_min,
            *eta_max,
        ),
        BoundsInput::Pairwise {
            eta,
            noisy_accuracy,
        } => pairwise_gap(1.0 - noisy_accuracy, *eta),
    }
}

fn classes_for(cfg: &ExperimentConfig) -> Result<usize> {
    if let Some(c) = cfg.noise.classes {
        return Ok(c);
    }
    match &cfg.dataset {
        Some(DatasetSpec {
            source: DataSource::Synthetic { classes, .. },
            classes: None,
            ..
        }) => Ok(*classes),
        Some(spec) => Ok(load_dataset(spec)?.classes()),
        None => Err(Error::config(
            "set noise.classes or a dataset to fix the class count",
        )),
    }
}

/// `gen-noise`: the configured recipe's transition matrix.
pub fn cmd_gen_noise(cfg: &ExperimentConfig) -> Result<TransitionMatrix> {
    let c = classes_for(cfg)?;
    uniform_matrix(&cfg.noise, c)?.ok_or_else(|| {
        Error::Unsupported(format!(
            "noise.kind = {} has no single transition matrix",
            cfg.noise.recipe.name()
        ))
    })
}

/// Reads whitespace-separated 0-based labels.
pub fn parse_label_text(text: &str) -> Result<Vec<usize>> {
    let mut offset = 0u64;
    let mut out = Vec::new();
    for tok in text.split_ascii_whitespace() {
        let pos = text[offset as usize..]
            .find(tok)
            .map_or(offset, |p| offset + p as u64);
        out.push(
            tok.parse()
                .map_err(|_| Error::parse(pos, format!("`{tok}` is not a label")))?,
        );
        offset = pos + tok.len() as u64;
    }
    Ok(out)
}

/// `inject`: resamples a list of labels through the configured uniform recipe.
pub fn cmd_inject(cfg: &ExperimentConfig, labels: &[usize], seed: u64) -> Result<Vec<usize>> {
    let t = cmd_gen_noise(cfg)?;
    let field = UniformNoise::new(t, noise_kind(cfg.noise.recipe), cfg.noise.eta);
    let empty = ndarray::Array2::<f64>::zeros((0, 0));
    apply_noise(labels, &field, empty.view(), seed)
}

/// Mean of each feature column, handy for sanity checks on loaded data.
pub fn column_means(ds: &Dataset) -> Vec<f64> {
    ds.features()
        .mean_axis(Axis(0))
        .map(|m| m.to_vec())
        .unwrap_or_default()
}
