//! Experiment configuration files.
//!
//! A configuration is plain text with one `key = value` pair per line. Keys are dotted
//! (`noise.kind`, `train.patience`) and `#` starts a comment. Lists are comma separated.
//! Parsing reports every problem it finds in one [`Error::Config`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::risk::TiePolicy;
use crate::training::{PolicyKind, DEFAULT_MAX_EPOCHS, DEFAULT_PATIENCE};

/// Where the feature rows come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Synthetic {
        n: usize,
        d: usize,
        informative: usize,
        classes: usize,
        seed: u64,
    },
    Cache(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub source: DataSource,
    /// Labels to keep, re-indexed in ascending order.
    pub classes: Option<Vec<usize>>,
    /// Random subset size drawn before noise injection.
    pub limit: Option<usize>,
    pub subset_seed: u64,
}

/// Noise families the harness can build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseRecipe {
    None,
    Symmetric,
    Circular,
    Pairwise,
    AsymMnist,
    Superclass,
    SubsetSymmetric,
    Ternary,
    FiveClass,
    Custom,
    PcaSplit,
    Classifier,
}

impl NoiseRecipe {
    pub const NAMES: [&'static str; 12] = [
        "none",
        "symmetric",
        "circular",
        "pairwise",
        "asym-mnist",
        "superclass",
        "subset-symmetric",
        "ternary",
        "five-class",
        "custom",
        "pca-split",
        "classifier",
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }

    /// True for recipes whose transition matrix varies with the instance.
    pub fn is_instance_dependent(self) -> bool {
        matches!(self, NoiseRecipe::PcaSplit | NoiseRecipe::Classifier)
    }
}

impl FromStr for NoiseRecipe {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        const ALL: [NoiseRecipe; 12] = [
            NoiseRecipe::None,
            NoiseRecipe::Symmetric,
            NoiseRecipe::Circular,
            NoiseRecipe::Pairwise,
            NoiseRecipe::AsymMnist,
            NoiseRecipe::Superclass,
            NoiseRecipe::SubsetSymmetric,
            NoiseRecipe::Ternary,
            NoiseRecipe::FiveClass,
            NoiseRecipe::Custom,
            NoiseRecipe::PcaSplit,
            NoiseRecipe::Classifier,
        ];
        let key = s.trim().to_ascii_lowercase();
        ALL.into_iter().find(|r| r.name() == key).ok_or_else(|| {
            format!(
                "unknown noise.kind `{s}` (expected one of {})",
                Self::NAMES.join(", ")
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub recipe: NoiseRecipe,
    pub eta: f64,
    /// Symmetric noise may redraw the original label when set.
    pub include_original: bool,
    pub pairs: Option<Vec<(usize, usize)>>,
    pub group_size: usize,
    pub matrix: Option<PathBuf>,
    pub predictor_epochs: usize,
    /// Class count for commands that run without a dataset.
    pub classes: Option<usize>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            recipe: NoiseRecipe::None,
            eta: 0.0,
            include_original: false,
            pairs: None,
            group_size: 5,
            matrix: None,
            predictor_epochs: 1,
            classes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossName {
    Ce,
    Mse,
    Gce,
    Sce,
    Forward,
    Backward,
}

impl FromStr for LossName {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "ce" | "cross-entropy" => LossName::Ce,
            "mse" => LossName::Mse,
            "gce" => LossName::Gce,
            "sce" => LossName::Sce,
            "forward" | "fce" => LossName::Forward,
            "backward" | "bce" => LossName::Backward,
            other => {
                return Err(format!(
                    "unknown loss `{other}` (expected ce, mse, gce, sce, forward, backward)"
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub name: LossName,
    /// Base loss of a forward or backward correction.
    pub base: LossName,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub clip: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            name: LossName::Ce,
            base: LossName::Ce,
            rho: crate::losses::DEFAULT_GCE_RHO,
            alpha: crate::losses::DEFAULT_SCE_ALPHA,
            beta: crate::losses::DEFAULT_SCE_BETA,
            clip: crate::losses::DEFAULT_SCE_CLIP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub batch: usize,
    pub hidden: Vec<usize>,
    pub split: (f64, f64, f64),
    pub gvector_ties: TiePolicy,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            lr: 0.05,
            batch: 128,
            hidden: vec![256, 128],
            split: (0.7, 0.15, 0.15),
            gvector_ties: TiePolicy::Exclude,
        }
    }
}

/// A fully parsed experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Option<DatasetSpec>,
    pub noise: NoiseSpec,
    pub loss: LossConfig,
    pub train: TrainSettings,
    pub policies: Vec<PolicyKind>,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub jobs: usize,
    pub sweep_etas: Vec<f64>,
    pub tree_depths: Vec<usize>,
    /// Every key/value pair as read, for provenance lines.
    pub echo: Vec<(String, String)>,
    /// Directory that relative paths were resolved against.
    pub base_dir: PathBuf,
}

const KEYS: &[&str] = &[
    "dataset.source",
    "dataset.name",
    "dataset.images",
    "dataset.labels",
    "dataset.cache",
    "dataset.classes",
    "dataset.limit",
    "dataset.subset_seed",
    "synthetic.n",
    "synthetic.d",
    "synthetic.informative",
    "synthetic.classes",
    "synthetic.seed",
    "noise.kind",
    "noise.eta",
    "noise.include_original",
    "noise.pairs",
    "noise.group_size",
    "noise.matrix",
    "noise.predictor_epochs",
    "noise.classes",
    "loss.kind",
    "loss.base",
    "loss.rho",
    "loss.alpha",
    "loss.beta",
    "loss.clip",
    "model.hidden",
    "train.epochs",
    "train.patience",
    "train.lr",
    "train.batch",
    "train.split",
    "gvector.ties",
    "policies",
    "seeds",
    "output.dir",
    "jobs",
    "sweep.etas",
    "tree.depths",
];

/// Environment variable naming the directory that holds downloaded datasets.
pub const DATA_DIR_ENV: &str = "NES_DATA_DIR";

/// The dataset directory: `$NES_DATA_DIR`, else `data/` at the workspace root.
pub fn data_dir() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(p) => PathBuf::from(p),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

/// IDX image and label paths of a named dataset under [`data_dir`].
pub fn named_dataset(name: &str) -> Option<(PathBuf, PathBuf)> {
    let dir = data_dir();
    match name {
        "mnist" => Some((
            dir.join("mnist/train-images-idx3-ubyte"),
            dir.join("mnist/train-labels-idx1-ubyte"),
        )),
        "mnist-test" => Some((
            dir.join("mnist/t10k-images-idx3-ubyte"),
            dir.join("mnist/t10k-labels-idx1-ubyte"),
        )),
        "fashion" => Some((
            dir.join("fashion/images-idx3-ubyte"),
            dir.join("fashion/labels-idx1-ubyte"),
        )),
        _ => None,
    }
}

/// Collects problems while reading typed values out of the raw key map.
struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    base: &'a Path,
    problems: Vec<String>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key)?;
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(e) => {
                self.problems.push(format!("{key} = `{raw}`: {e}"));
                None
            }
        }
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: std::fmt::Display,
    {
        self.parse(key).unwrap_or(default)
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Option<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key)?.to_string();
        let mut out = Vec::new();
        for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.parse::<T>() {
                Ok(v) => out.push(v),
                Err(e) => {
                    self.problems.push(format!("{key}: item `{item}`: {e}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key)?;
        let p = Path::new(raw);
        Some(if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        })
    }

    fn existing(&mut self, key: &str) -> Option<PathBuf> {
        let p = self.path(key)?;
        if !p.exists() {
            self.problems
                .push(format!("{key}: file {} does not exist", p.display()));
        }
        Some(p)
    }

    fn require(&mut self, key: &str, why: &str) {
        if self.raw(key).is_none() {
            self.problems.push(format!("{key} is required {why}"));
        }
    }
}

fn parse_pairs(raw: &str) -> std::result::Result<Vec<(usize, usize)>, String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (a, b) = item
                .split_once(':')
                .ok_or_else(|| format!("pair `{item}` is not `from:to`"))?;
            let a = a
                .trim()
                .parse()
                .map_err(|_| format!("bad label in `{item}`"))?;
            let b = b
                .trim()
                .parse()
                .map_err(|_| format!("bad label in `{item}`"))?;
            Ok((a, b))
        })
        .collect()
}

/// Splits text into key/value pairs, reporting malformed lines and duplicates.
fn tokenize(text: &str, problems: &mut Vec<String>) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            problems.push(format!("line {}: expected `key = value`", no + 1));
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !KEYS.contains(&k.as_str()) {
            problems.push(format!("line {}: unknown key `{k}`", no + 1));
            continue;
        }
        if map.insert(k.clone(), v).is_some() {
            problems.push(format!("line {}: duplicate key `{k}`", no + 1));
        }
    }
    map
}

impl ExperimentConfig {
    /// Reads a configuration file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")), &[])
    }

    /// Like [`ExperimentConfig::load`] with `overrides` replacing or adding keys.
    pub fn load_with(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")), overrides)
    }

    /// Parses configuration text. `base` anchors relative paths.
    pub fn parse(text: &str, base: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let mut problems = Vec::new();
        let mut map = tokenize(text, &mut problems);
        for (k, v) in overrides {
            if KEYS.contains(&k.as_str()) {
                map.insert(k.clone(), v.clone());
            } else {
                problems.push(format!("override: unknown key `{k}`"));
            }
        }
        let mut r = Reader {
            map: &map,
            base,
            problems,
        };
        let dataset = read_dataset(&mut r);
        let noise = read_noise(&mut r);
        let loss = read_loss(&mut r);
        let train = read_train(&mut r);
        let policies = r
            .list::<PolicyKind>("policies")
            .unwrap_or_else(|| PolicyKind::ALL.to_vec());
        if policies.is_empty() {
            r.problems.push("policies lists no policy".into());
        }
        let seeds = r.list::<u64>("seeds").unwrap_or_default();
        let output = r.path("output.dir").unwrap_or_else(|| base.join("out"));
        let jobs = r.or("jobs", 1usize);
        if jobs == 0 {
            r.problems.push("jobs must be at least 1".into());
        }
        let sweep_etas = r.list::<f64>("sweep.etas").unwrap_or_default();
        if let Some(bad) = sweep_etas.iter().find(|e| !(0.0..1.0).contains(*e)) {
            r.problems
                .push(format!("sweep.etas: {bad} is not in [0, 1)"));
        }
        let tree_depths = r
            .list::<usize>("tree.depths")
            .unwrap_or_else(|| (1..=20).collect());
        let echo = map.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        if !r.problems.is_empty() {
            return Err(Error::Config(r.problems));
        }
        Ok(ExperimentConfig {
            dataset,
            noise,
            loss,
            train,
            policies,
            seeds,
            output,
            jobs,
            sweep_etas,
            tree_depths,
            echo,
            base_dir: base.to_path_buf(),
        })
    }

    /// The configuration as text that parses back to the same value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.echo {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Sets a key and reparses, keeping the original path anchoring.
    pub fn with(&self, key: &str, value: impl ToString) -> Result<Self> {
        let mut echo = self.echo.clone();
        match echo.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value.to_string(),
            None => echo.push((key.to_string(), value.to_string())),
        }
        let text: String = echo.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        Self::parse(&text, &self.base_dir, &[])
    }
}

fn read_dataset(r: &mut Reader<'_>) -> Option<DatasetSpec> {
    let kind = r.raw("dataset.source").map(str::to_ascii_lowercase);
    let source = match kind.as_deref() {
        None => {
            let dataset_keys = [
                "dataset.name",
                "dataset.images",
                "dataset.cache",
                "dataset.classes",
            ];
            if let Some(k) = dataset_keys.iter().find(|k| r.raw(k).is_some()) {
                r.problems
                    .push(format!("{k} is set but dataset.source is missing"));
            }
            return None;
        }
        Some("idx") => match r.raw("dataset.name").map(str::to_string) {
            Some(name) => match named_dataset(&name) {
                Some((images, labels)) => {
                    for p in [&images, &labels] {
                        if !p.exists() {
                            r.problems.push(format!(
                                "dataset.name = {name}: {} is missing (run scripts/fetch_data.py or set {DATA_DIR_ENV})",
                                p.display()
                            ));
                        }
                    }
                    DataSource::Idx { images, labels }
                }
                None => {
                    r.problems.push(format!(
                        "dataset.name `{name}` is not one of mnist, mnist-test, fashion"
                    ));
                    return None;
                }
            },
            None => {
                r.require("dataset.images", "for an idx source without dataset.name");
                r.require("dataset.labels", "for an idx source without dataset.name");
                let images = r.existing("dataset.images")?;
                let labels = r.existing("dataset.labels")?;
                DataSource::Idx { images, labels }
            }
        },
        Some("synthetic") => DataSource::Synthetic {
            n: r.or("synthetic.n", 2000),
            d: r.or("synthetic.d", 20),
            informative: r.or("synthetic.informative", 10),
            classes: r.or("synthetic.classes", 3),
            seed: r.or("synthetic.seed", 42),
        },
        Some("cache") => {
            r.require("dataset.cache", "for a cache source");
            DataSource::Cache(r.existing("dataset.cache")?)
        }
        Some(other) => {
            r.problems.push(format!(
                "dataset.source `{other}` is not idx, synthetic or cache"
            ));
            return None;
        }
    };
    let classes = r.list::<usize>("dataset.classes");
    if let Some(c) = &classes {
        if c.len() < 2 {
            r.problems
                .push("dataset.classes must keep at least two labels".into());
        }
    }
    let limit = r.parse::<usize>("dataset.limit");
    if limit == Some(0) {
        r.problems.push("dataset.limit must be positive".into());
    }
    Some(DatasetSpec {
        source,
        classes,
        limit,
        subset_seed: r.or("dataset.subset_seed", 0),
    })
}

fn read_noise(r: &mut Reader<'_>) -> NoiseSpec {
    let d = NoiseSpec::default();
    let recipe = r.or("noise.kind", NoiseRecipe::None);
    let eta = r.or("noise.eta", 0.0f64);
    if !(0.0..=1.0).contains(&eta) {
        r.problems
            .push(format!("noise.eta = {eta} is not in [0, 1]"));
    }
    let pairs = match r.raw("noise.pairs") {
        Some(raw) => match parse_pairs(raw) {
            Ok(p) => Some(p),
            Err(e) => {
                r.problems.push(format!("noise.pairs: {e}"));
                None
            }
        },
        None => None,
    };
    let matrix = r.existing("noise.matrix");
    if recipe == NoiseRecipe::Custom && matrix.is_none() {
        r.problems
            .push("noise.matrix is required for noise.kind = custom".into());
    }
    NoiseSpec {
        recipe,
        eta,
        include_original: r.or("noise.include_original", d.include_original),
        pairs,
        group_size: r.or("noise.group_size", d.group_size),
        matrix,
        predictor_epochs: r.or("noise.predictor_epochs", d.predictor_epochs),
        classes: r.parse("noise.classes"),
    }
}

fn read_loss(r: &mut Reader<'_>) -> LossConfig {
    let d = LossConfig::default();
    let name = r.or("loss.kind", d.name);
    let base = r.or("loss.base", d.base);
    if matches!(base, LossName::Forward | LossName::Backward) {
        r.problems
            .push("loss.base cannot itself be a correction".into());
    }
    LossConfig {
        name,
        base,
        rho: r.or("loss.rho", d.rho),
        alpha: r.or("loss.alpha", d.alpha),
        beta: r.or("loss.beta", d.beta),
        clip: r.or("loss.clip", d.clip),
    }
}

fn read_train(r: &mut Reader<'_>) -> TrainSettings {
    let d = TrainSettings::default();
    let split = match r.list::<f64>("train.split") {
        Some(v) if v.len() == 3 => (v[0], v[1], v[2]),
        Some(_) => {
            r.problems.push("train.split needs three fractions".into());
            d.split
        }
        None => d.split,
    };
    let t = TrainSettings {
        epochs: r.or("train.epochs", d.epochs),
        patience: r.or("train.patience", d.patience),
        lr: r.or("train.lr", d.lr),
        batch: r.or("train.batch", d.batch),
        hidden: r.list("model.hidden").unwrap_or(d.hidden),
        split,
        gvector_ties: r.or("gvector.ties", d.gvector_ties),
    };
    if t.epochs == 0 {
        r.problems.push("train.epochs must be at least 1".into());
    }
    if t.patience == 0 {
        r.problems.push("train.patience must be at least 1".into());
    }
    if !(t.lr >= 0.0 && t.lr.is_finite()) {
        r.problems.push(format!(
            "train.lr = {} must be finite and nonnegative",
            t.lr
        ));
    }
    if t.batch == 0 {
        r.problems.push("train.batch must be at least 1".into());
    }
    if t.hidden.contains(&0) {
        r.problems
            .push("model.hidden widths must be positive".into());
    }
    t
}
