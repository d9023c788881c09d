//! Run configuration: a TOML file of `key = value` lines grouped in
//! sections. Every section and key is optional; missing values take the
//! defaults of the two-moons benchmark. The schema is documented in
//! `book/src/config.md`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use addnet::data::{AugmentChoice, AugmentKind, CorruptionKind, CorruptionLadder, DatasetKind};
use addnet::net::{Activation, NetworkSpec};
use addnet::train::{InferenceConfig, TrainConfig, Variant};
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

/// A config problem, located at the line that set the offending key when
/// the key appears in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Enforces that the training augmentations leave at least two
    /// corruption kinds unseen.
    Benchmark,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub profile: Profile,
    pub data: DataSection,
    pub network: NetworkSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub coverage: CoverageSection,
    pub te: TeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: FORMAT_VERSION,
            seed: 0,
            profile: Profile::Benchmark,
            data: DataSection::default(),
            network: NetworkSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            sweep: SweepSection::default(),
            coverage: CoverageSection::default(),
            te: TeSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// `two_moons`, `rings` or `gaussian_blobs`.
    pub kind: String,
    pub n: usize,
    pub noise: f64,
    pub train_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            kind: "two_moons".into(),
            n: 1000,
            noise: 0.1,
            train_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub blocks: usize,
    pub width: usize,
    /// `tanh` or `relu`.
    pub activation: String,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            blocks: 4,
            width: 16,
            activation: "tanh".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub cosine: bool,
    pub diffuser_lr: f64,
    pub k: usize,
    /// `pde+`, `pde+_no_aug`, `erm` or `fixed_<sigma>`.
    pub variant: String,
    /// Augmentation kinds guiding the diffusion (adaptive variants only).
    pub augment: Vec<String>,
    /// Write a checkpoint every this many epochs into `trail/`; 0 disables.
    pub checkpoint_every: usize,
    /// Evaluate on the test split after every epoch.
    pub track_eval: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            momentum: t.momentum,
            cosine: t.cosine,
            diffuser_lr: t.diffuser_lr,
            k: t.k,
            variant: t.variant.to_string(),
            augment: vec!["rotate".into(), "gaussian".into()],
            checkpoint_every: 0,
            track_eval: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Ensemble sizes; one report row set per entry.
    pub ensembles: Vec<usize>,
    /// Corruption kinds, `a+b` for combined kinds. Empty means clean only.
    pub corruptions: Vec<String>,
    /// ERM checkpoint used as the mCE/rmCE baseline. When empty the
    /// baseline is trained from this config with `variant = "erm"`.
    pub baseline: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            ensembles: vec![1, 10],
            corruptions: AugmentKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            baseline: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub sigmas: Vec<f64>,
    /// Number of seeds, starting at the root seed.
    pub seeds: usize,
    /// Allowed shortfall of the adaptive column (accuracy, not percent).
    pub tolerance: f64,
    /// Exit with the benchmark-failure code when the dilemma does not show.
    pub assert_dilemma: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 0.05, 0.1, 0.2, 0.4, 0.8],
            seeds: 1,
            tolerance: 0.02,
            assert_dilemma: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageSection {
    /// Shift kinds probed; empty means every corruption kind not in the
    /// training menu.
    pub probes: Vec<String>,
    pub severity: usize,
}

impl Default for CoverageSection {
    fn default() -> Self {
        Self {
            probes: Vec::new(),
            severity: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeSection {
    /// The grid is `[-half, half]²` with `n × n` nodes.
    pub half: f64,
    pub n: usize,
    /// `rotation` or `constant`.
    pub velocity: String,
    /// Angular rate for `rotation`.
    pub rate: f64,
    /// Velocity for `constant`.
    pub direction: Vec<f64>,
    /// `two_class` or `gaussian_bump`.
    pub terminal: String,
    pub amplitude: f64,
    pub frequency: f64,
    pub bump_center: Vec<f64>,
    pub bump_width: f64,
    pub sigmas: Vec<f64>,
    /// Also solve with a boundary-aware spatially varying coefficient.
    pub adaptive: bool,
    pub adaptive_lo: f64,
    pub adaptive_hi: f64,
    pub adaptive_width: f64,
    pub delta: f64,
    pub pairs: usize,
}

impl Default for TeSection {
    fn default() -> Self {
        Self {
            half: 1.5,
            n: 128,
            velocity: "rotation".into(),
            rate: 0.5,
            direction: vec![1.0, 0.0],
            terminal: "two_class".into(),
            amplitude: 0.5,
            frequency: 2.0,
            bump_center: vec![0.5, 0.0],
            bump_width: 0.5,
            sigmas: vec![0.0, 0.1, 0.3, 1.0],
            adaptive: true,
            adaptive_lo: 0.05,
            adaptive_hi: 0.6,
            adaptive_width: 0.3,
            delta: 0.05,
            pairs: 20_000,
        }
    }
}

/// Line (1-based) of `key` inside `[section]`, or at the top level when
/// `section` is empty.
pub fn line_of(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Validation context: the source text, for locating keys.
struct Check<'a> {
    src: &'a str,
    errors: Vec<ConfigError>,
}

impl Check<'_> {
    fn fail(&mut self, section: &str, key: &str, message: impl Into<String>) {
        let path = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        self.errors.push(ConfigError {
            line: line_of(self.src, section, key),
            key: path,
            message: message.into(),
        });
    }

    fn require(&mut self, ok: bool, section: &str, key: &str, message: &str) {
        if !ok {
            self.fail(section, key, message);
        }
    }

    fn parse<T: FromStr>(&mut self, section: &str, key: &str, value: &str) -> Option<T> {
        match value.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.fail(section, key, format!("unknown value `{value}`"));
                None
            }
        }
    }
}

/// Typed view of a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub dataset: DatasetKind,
    pub spec: NetworkSpec,
    pub train: TrainConfig,
    pub augment: Vec<AugmentChoice>,
    pub corruptions: Vec<CorruptionLadder>,
    pub ensembles: Vec<InferenceConfig>,
    pub probes: Vec<CorruptionLadder>,
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self, Vec<ConfigError>> {
        toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| src[..s.start].matches('\n').count() + 1);
            vec![ConfigError {
                line,
                key: "syntax".into(),
                message: e.message().to_string(),
            }]
        })
    }

    pub fn load(path: &Path) -> Result<(Self, String), Vec<ConfigError>> {
        let src = std::fs::read_to_string(path).map_err(|e| {
            vec![ConfigError {
                line: None,
                key: path.display().to_string(),
                message: e.to_string(),
            }]
        })?;
        Ok((Self::from_toml(&src)?, src))
    }

    /// The effective config, written next to every artifact.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field; `src` locates offending keys. All problems are
    /// reported together.
    pub fn validate(&self, src: &str) -> Result<Resolved, Vec<ConfigError>> {
        let mut c = Check { src, errors: Vec::new() };
        c.require(
            self.version == FORMAT_VERSION,
            "",
            "version",
            &format!("unsupported format version (expected {FORMAT_VERSION})"),
        );

        let dataset = c.parse::<DatasetKind>("data", "kind", &self.data.kind);
        c.require(self.data.n >= 4, "data", "n", "need at least 4 samples");
        c.require(self.data.noise >= 0.0, "data", "noise", "must be non-negative");
        c.require(
            self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0,
            "data",
            "train_fraction",
            "must lie in (0, 1)",
        );

        let activation = c.parse::<Activation>("network", "activation", &self.network.activation);
        c.require(self.network.blocks >= 1, "network", "blocks", "must be at least 1");
        c.require(self.network.width >= 1, "network", "width", "must be at least 1");

        let t = &self.train;
        c.require(t.batch_size >= 1, "train", "batch_size", "must be at least 1");
        c.require(t.lr >= 0.0, "train", "lr", "must be non-negative");
        c.require((0.0..1.0).contains(&t.momentum), "train", "momentum", "must lie in [0, 1)");
        c.require(t.diffuser_lr >= 0.0, "train", "diffuser_lr", "must be non-negative");
        c.require(t.k >= 1, "train", "k", "must be at least 1");
        let variant = c.parse::<Variant>("train", "variant", &t.variant);
        let menu: Vec<AugmentKind> = t
            .augment
            .iter()
            .filter_map(|k| c.parse::<AugmentKind>("train", "augment", k))
            .collect();
        if let Some(v) = variant {
            c.require(
                !v.uses_augmentation() || !t.augment.is_empty(),
                "train",
                "augment",
                "adaptive variants need at least one augmentation kind",
            );
        }

        c.require(!self.eval.ensembles.is_empty(), "eval", "ensembles", "list is empty");
        c.require(
            self.eval.ensembles.iter().all(|&e| e >= 1),
            "eval",
            "ensembles",
            "ensemble sizes must be at least 1",
        );
        let kinds: Vec<CorruptionKind> = self
            .eval
            .corruptions
            .iter()
            .filter_map(|k| c.parse::<CorruptionKind>("eval", "corruptions", k))
            .collect();
        let duplicate = kinds.iter().enumerate().any(|(i, k)| kinds[..i].contains(k));
        c.require(!duplicate, "eval", "corruptions", "duplicate kind");

        let s = &self.sweep;
        c.require(!s.sigmas.is_empty(), "sweep", "sigmas", "list is empty");
        c.require(
            s.sigmas.iter().all(|v| v.is_finite() && *v >= 0.0),
            "sweep",
            "sigmas",
            "scales must be finite and non-negative",
        );
        c.require(s.seeds >= 1, "sweep", "seeds", "must be at least 1");
        c.require(s.tolerance >= 0.0, "sweep", "tolerance", "must be non-negative");

        let probes: Vec<CorruptionKind> = self
            .coverage
            .probes
            .iter()
            .filter_map(|k| c.parse::<CorruptionKind>("coverage", "probes", k))
            .collect();
        c.require(
            (1..=addnet::data::SEVERITIES).contains(&self.coverage.severity),
            "coverage",
            "severity",
            "must lie in 1..=5",
        );

        let te = &self.te;
        c.require(te.half > 0.0, "te", "half", "must be positive");
        c.require(te.n >= 3, "te", "n", "need at least 3 nodes per axis");
        c.require(
            matches!(te.velocity.as_str(), "rotation" | "constant"),
            "te",
            "velocity",
            "expected `rotation` or `constant`",
        );
        c.require(te.direction.len() == 2, "te", "direction", "need two components");
        c.require(
            matches!(te.terminal.as_str(), "two_class" | "gaussian_bump"),
            "te",
            "terminal",
            "expected `two_class` or `gaussian_bump`",
        );
        c.require(te.bump_center.len() == 2, "te", "bump_center", "need two components");
        c.require(te.bump_width > 0.0, "te", "bump_width", "must be positive");
        c.require(!te.sigmas.is_empty(), "te", "sigmas", "list is empty");
        c.require(
            te.sigmas.iter().all(|v| v.is_finite() && *v >= 0.0),
            "te",
            "sigmas",
            "scales must be finite and non-negative",
        );
        c.require(
            te.adaptive_lo >= 0.0 && te.adaptive_hi >= te.adaptive_lo,
            "te",
            "adaptive_hi",
            "need 0 ≤ adaptive_lo ≤ adaptive_hi",
        );
        c.require(te.adaptive_width > 0.0, "te", "adaptive_width", "must be positive");
        c.require(te.delta > 0.0 && te.delta < te.half, "te", "delta", "must lie in (0, half)");
        c.require(te.pairs >= 1, "te", "pairs", "must be at least 1");

        if self.profile == Profile::Benchmark {
            let unseen = kinds
                .iter()
                .filter(|k| k.components.iter().all(|c| !menu.contains(c)))
                .count();
            c.require(
                unseen >= 2,
                "train",
                "augment",
                "benchmark profile: the augmentation menu must leave at least two corruption kinds unseen",
            );
        }

        let (Some(dataset), Some(activation), Some(variant)) = (dataset, activation, variant) else {
            return Err(c.errors);
        };
        let spec = match NetworkSpec::new(2, self.network.blocks, self.network.width, dataset.n_classes()) {
            Ok(s) => s.with_activation(activation),
            Err(e) => {
                c.fail("network", "blocks", e.to_string());
                return Err(c.errors);
            }
        };
        if !c.errors.is_empty() {
            return Err(c.errors);
        }
        let train = TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            momentum: t.momentum,
            cosine: t.cosine,
            diffuser_lr: t.diffuser_lr,
            k: t.k,
            seed: self.seed,
            variant,
        };
        if let Err(e) = train.validate() {
            c.fail("train", "epochs", e.to_string());
        }
        let probes = if probes.is_empty() {
            kinds
                .iter()
                .filter(|k| k.components.iter().all(|c| !menu.contains(c)))
                .cloned()
                .collect()
        } else {
            probes
        };
        if !c.errors.is_empty() {
            return Err(c.errors);
        }
        Ok(Resolved {
            dataset,
            spec,
            train,
            augment: menu.into_iter().map(AugmentChoice::new).collect(),
            corruptions: kinds.into_iter().map(CorruptionLadder::default_for).collect(),
            ensembles: self
                .eval
                .ensembles
                .iter()
                .map(|&e| InferenceConfig {
                    ensemble: e,
                    seed: self.seed,
                })
                .collect(),
            probes: probes.into_iter().map(CorruptionLadder::default_for).collect(),
        })
    }
}
