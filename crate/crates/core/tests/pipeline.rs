use nes_core::data::SplitBundle;
use nes_core::data::{make_synthetic, split, LabelTrack};
use nes_core::estimators::{load_checkpoint, save_checkpoint, MlpEstimator, Model};
use nes_core::harness::{self, ExperimentConfig};
use nes_core::losses::LossSpec;
use nes_core::noise::{apply_noise, build_symmetric, NoiseKind, UniformNoise};
use nes_core::training::{run_training, PolicyKind, TrainConfig};

fn bundle(seed: u64) -> SplitBundle {
    let ds = make_synthetic(400, 6, 4, 3, seed).unwrap();
    let field = UniformNoise::new(build_symmetric(3, 0.3).unwrap(), NoiseKind::Symmetric, 0.3);
    let noisy = apply_noise(ds.clean_labels(), &field, ds.features().view(), seed).unwrap();
    let ds = ds.with_noisy_labels(noisy, "symmetric").unwrap();
    split(&ds, (0.7, 0.15, 0.15), seed).unwrap()
}

fn config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig::new(LossSpec::CrossEntropy, 0.1, 16, seed);
    c.max_epochs = 25;
    c.patience = 5;
    c
}

fn model(seed: u64) -> MlpEstimator {
    MlpEstimator::init(&[6, 8, 3], seed).unwrap()
}

#[test]
fn nes_never_reads_clean_validation_labels() {
    let b = bundle(3);
    let a = run_training(model(3), &b, &config(3), &[PolicyKind::Nes]).unwrap();
    let mut corrupted = b.clone();
    let flipped: Vec<usize> = corrupted
        .clean_val
        .labels()
        .iter()
        .map(|&y| (y + 1) % 3)
        .collect();
    corrupted.clean_val = corrupted.clean_val.with_labels(flipped).unwrap();
    let z = run_training(model(3), &corrupted, &config(3), &[PolicyKind::Nes]).unwrap();
    assert_eq!(a.log.chosen(PolicyKind::Nes), z.log.chosen(PolicyKind::Nes));
    let na: Vec<f64> = a.log.records.iter().map(|r| r.noisy_val_acc).collect();
    let nz: Vec<f64> = z.log.records.iter().map(|r| r.noisy_val_acc).collect();
    assert_eq!(na, nz);
    let x = b.test.features().view();
    let pa = a
        .selection(PolicyKind::Nes)
        .unwrap()
        .model
        .as_estimator()
        .predict_proba(x);
    let pz = z
        .selection(PolicyKind::Nes)
        .unwrap()
        .model
        .as_estimator()
        .predict_proba(x);
    assert_eq!(pa, pz);
}

#[test]
fn policies_do_not_change_the_metric_tracks() {
    let b = bundle(5);
    let mut cfg = config(5);
    cfg.max_epochs = 12;
    let all = run_training(model(5), &b, &cfg, &PolicyKind::ALL).unwrap();
    let wes = run_training(model(5), &b, &cfg, &[PolicyKind::Wes]).unwrap();
    assert_eq!(all.log.records, wes.log.records);
}

#[test]
fn nes_picks_the_first_noisy_maximum_and_wes_the_last_epoch() {
    let b = bundle(8);
    let out = run_training(model(8), &b, &config(8), &PolicyKind::ALL).unwrap();
    let noisy: Vec<f64> = out.log.records.iter().map(|r| r.noisy_val_acc).collect();
    let best = noisy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = noisy.iter().position(|&v| v == best).unwrap() + 1;
    assert_eq!(out.log.chosen(PolicyKind::Nes), Some(first));
    assert_eq!(out.log.chosen(PolicyKind::Wes), Some(25));
    assert_eq!(out.log.records.len(), 25);
    let nes = out.selection(PolicyKind::Nes).unwrap();
    let acc = nes_core::training::evaluate_set(nes.model.as_estimator(), &b.noisy_val).unwrap();
    assert_eq!(acc, best);
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let b = bundle(2);
    let m = Model::Mlp(model(2));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&m, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    let x = b.test.features().view();
    assert_eq!(
        m.as_estimator().predict_proba(x),
        back.as_estimator().predict_proba(x)
    );
}

const SYNTHETIC: &str = "\
dataset.source = synthetic
synthetic.n = 300
synthetic.d = 5
synthetic.informative = 3
synthetic.classes = 3
synthetic.seed = 4
noise.kind = circular
noise.eta = 0.2
model.hidden = 8
train.epochs = 6
train.patience = 3
train.lr = 0.1
train.batch = 16
seeds = 1, 2
";

fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with("# wall_time_s") && !l.starts_with("# output.dir"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn reruns_are_byte_identical() {
    let runs: Vec<(String, String)> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let cfg = ExperimentConfig::parse(
                SYNTHETIC,
                dir.path(),
                &[("output.dir".into(), dir.path().display().to_string())],
            )
            .unwrap();
            harness::cmd_train(&cfg).unwrap();
            let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
            let log =
                std::fs::read_to_string(dir.path().join("seed_2").join("runlog.csv")).unwrap();
            (csv_body(&summary), csv_body(&log))
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn noisy_split_labels_match_the_injection() {
    let b = bundle(9);
    let train_noisy = b.train.labels(LabelTrack::Noisy).unwrap();
    let train_clean = b.train.labels(LabelTrack::Clean).unwrap();
    let flips = train_noisy
        .iter()
        .zip(train_clean)
        .filter(|(a, c)| a != c)
        .count() as f64
        / train_noisy.len() as f64;
    assert!((flips - 0.3).abs() < 0.1, "flip fraction {flips}");
    assert_eq!(b.noisy_val.len(), b.clean_val.len());
}
