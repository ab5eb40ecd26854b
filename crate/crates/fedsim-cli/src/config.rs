//! Experiment configuration: a flat `key = value` file with `[sections]`,
//! overridable by command-line flags. Unknown keys are rejected, every value
//! is validated, and the fully resolved configuration re-serializes to a file
//! that parses back to an equal configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use fedsim::orchestrator::RoundConfig;
use fedsim::strategies::StrategyKind;

/// A configuration problem, tagged with the offending key when one exists.
#[derive(Debug)]
pub struct ConfigError {
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn keyed(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    fn plain(message: impl Into<String>) -> Self {
        Self {
            key: None,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.key {
            Some(key) => write!(f, "key `{key}`: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Where the training data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic {
        classes: usize,
        dim: usize,
        per_class: usize,
        separation: f64,
        /// Explicit generation seed; derived from the master seed when unset.
        seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
        classes: usize,
        max_value: Option<f64>,
    },
}

impl DatasetSource {
    pub fn classes(&self) -> usize {
        match self {
            DatasetSource::Synthetic { classes, .. } => *classes,
            DatasetSource::Csv { classes, .. } => *classes,
        }
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub classes_per_client: usize,
    /// Explicit partition seed; derived from the master seed when unset.
    pub partition_seed: Option<u64>,
    pub train_fraction: f64,
    pub hidden: Vec<usize>,
    pub round: RoundConfig,
    pub output_dir: PathBuf,
    /// Checkpoint phi every this many rounds; 0 writes only the final one.
    pub checkpoint_interval: usize,
    pub dump_embeddings: bool,
    pub embedding_layer: usize,
    /// Write measured wall-clock seconds into metrics.csv instead of the
    /// reproducible 0.000 placeholder.
    pub timing: bool,
}

/// Flag-level overrides; `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub entries: Vec<(String, String)>,
}

impl Overrides {
    pub fn set(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.entries.push((key.to_string(), v));
        }
    }

    pub fn set_flag(&mut self, key: &str, on: bool) {
        if on {
            self.entries.push((key.to_string(), "true".to_string()));
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "dataset.source",
    "dataset.classes",
    "dataset.dim",
    "dataset.per_class",
    "dataset.separation",
    "dataset.seed",
    "dataset.csv_path",
    "dataset.csv_max_value",
    "partition.classes_per_client",
    "partition.seed",
    "partition.train_fraction",
    "network.hidden",
    "round.clients",
    "round.sample_rate",
    "round.rounds",
    "round.inner_epochs",
    "round.inner_lr",
    "round.outer_lr",
    "round.alpha",
    "round.batch_size",
    "round.strategy",
    "round.seed",
    "round.support_fraction",
    "round.evaluate_all",
    "output.dir",
    "output.checkpoint_interval",
    "output.dump_embeddings",
    "output.embedding_layer",
    "output.timing",
];

/// Parse the `[section]` / `key = value` text into a flat map, rejecting
/// malformed lines and unknown keys.
fn parse_ini(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut section = String::new();
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(ConfigError::plain(format!(
                    "line {}: unterminated section header `{line}`",
                    i + 1
                )));
            };
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::plain(format!(
                "line {}: expected `key = value`, found `{line}`",
                i + 1
            )));
        };
        let full = if section.is_empty() {
            key.trim().to_string()
        } else {
            format!("{section}.{}", key.trim())
        };
        if !KNOWN_KEYS.contains(&full.as_str()) {
            return Err(ConfigError::keyed(&full, "unknown key"));
        }
        map.insert(full, value.trim().to_string());
    }
    Ok(map)
}

struct Resolver {
    map: BTreeMap<String, String>,
}

impl Resolver {
    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                ConfigError::keyed(key, format!("expected {what}, found `{raw}`"))
            }),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.parse::<usize>(key, "an unsigned integer")?.unwrap_or(default))
    }

    fn u64_opt(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.parse::<u64>(key, "an unsigned integer")
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.parse::<f64>(key, "a number")?.unwrap_or(default))
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parse::<f64>(key, "a number")
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.map.get(key).map(String::as_str) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(other) => Err(ConfigError::keyed(
                key,
                format!("expected true or false, found `{other}`"),
            )),
        }
    }

    fn string_or(&self, key: &str, default: &str) -> String {
        self.map
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string())
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }
}

/// Resolve a configuration from optional file text plus flag overrides.
/// Flags win over file values.
pub fn resolve(file_text: Option<&str>, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut map = match file_text {
        Some(text) => parse_ini(text)?,
        None => BTreeMap::new(),
    };
    for (key, value) in &overrides.entries {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::keyed(key, "unknown key"));
        }
        map.insert(key.clone(), value.clone());
    }
    let r = Resolver { map };

    // Dataset.
    let source_name = r.string_or("dataset.source", "synthetic");
    let classes = r.usize_or("dataset.classes", 5)?;
    let dataset = match source_name.as_str() {
        "synthetic" => {
            for key in ["dataset.csv_path", "dataset.csv_max_value"] {
                if r.has(key) {
                    return Err(ConfigError::keyed(key, "only valid with dataset.source = csv"));
                }
            }
            DatasetSource::Synthetic {
                classes,
                dim: r.usize_or("dataset.dim", 16)?,
                per_class: r.usize_or("dataset.per_class", 200)?,
                separation: r.f64_or("dataset.separation", 3.0)?,
                seed: r.u64_opt("dataset.seed")?,
            }
        }
        "csv" => {
            let Some(path) = r.map.get("dataset.csv_path") else {
                return Err(ConfigError::keyed(
                    "dataset.csv_path",
                    "required when dataset.source = csv",
                ));
            };
            for key in ["dataset.dim", "dataset.per_class", "dataset.separation", "dataset.seed"] {
                if r.has(key) {
                    return Err(ConfigError::keyed(key, "only valid with dataset.source = synthetic"));
                }
            }
            DatasetSource::Csv {
                path: PathBuf::from(path),
                classes,
                max_value: r.f64_opt("dataset.csv_max_value")?,
            }
        }
        other => {
            return Err(ConfigError::keyed(
                "dataset.source",
                format!("expected synthetic or csv, found `{other}`"),
            ));
        }
    };

    // Strategy: the name plus the alpha / support_fraction knobs.
    let strategy_name = r.string_or("round.strategy", "fedec");
    let alpha_given = r.has("round.alpha");
    let alpha = r.f64_or("round.alpha", 1.0)?;
    let support_given = r.has("round.support_fraction");
    let support_fraction = r.f64_or("round.support_fraction", 0.5)?;
    let strategy = match strategy_name.as_str() {
        "fedec" => StrategyKind::FedEc { alpha },
        "fedec_l2" => StrategyKind::FedEcL2 { alpha },
        "fedec_wo" => StrategyKind::FedEcWo,
        "fedavg" => StrategyKind::FedAvg,
        "perfedavg_fo" => StrategyKind::PerFedAvgFo { support_fraction },
        other => {
            return Err(ConfigError::keyed(
                "round.strategy",
                format!(
                    "expected one of fedec, fedec_l2, fedec_wo, fedavg, perfedavg_fo; found `{other}`"
                ),
            ));
        }
    };
    if alpha_given && alpha != 0.0 && !strategy.uses_constraint() {
        return Err(ConfigError::keyed(
            "round.alpha",
            format!("strategy {strategy_name} takes no constraint weight; alpha must be 0 or unset"),
        ));
    }
    if support_given && !matches!(strategy, StrategyKind::PerFedAvgFo { .. }) {
        return Err(ConfigError::keyed(
            "round.support_fraction",
            format!("only valid for strategy perfedavg_fo, not {strategy_name}"),
        ));
    }

    let round = RoundConfig {
        clients: r.usize_or("round.clients", 20)?,
        sample_rate: r.f64_or("round.sample_rate", 0.25)?,
        rounds: r.usize_or("round.rounds", 10)?,
        inner_epochs: r.usize_or("round.inner_epochs", 2)?,
        inner_lr: r.f64_or("round.inner_lr", 0.05)?,
        outer_lr: r.f64_or("round.outer_lr", 0.5)?,
        batch_size: r.usize_or("round.batch_size", 10)?,
        strategy,
        seed: r.u64_opt("round.seed")?.unwrap_or(42),
        evaluate_all: r.bool_or("round.evaluate_all", false)?,
    };
    round
        .validate()
        .map_err(|e| ConfigError::plain(e.to_string()))?;

    // Network: hidden widths; input and output are bound to the dataset.
    let hidden_raw = r.string_or("network.hidden", "32");
    let hidden: Vec<usize> = if hidden_raw.trim().is_empty() || hidden_raw.trim() == "none" {
        Vec::new()
    } else {
        hidden_raw
            .split(',')
            .map(|part| {
                part.trim().parse::<usize>().map_err(|_| {
                    ConfigError::keyed(
                        "network.hidden",
                        format!("expected comma-separated widths, found `{hidden_raw}`"),
                    )
                })
            })
            .collect::<Result<_, _>>()?
    };
    if hidden.contains(&0) {
        return Err(ConfigError::keyed("network.hidden", "layer widths must be positive"));
    }

    let classes_per_client = r.usize_or("partition.classes_per_client", 2)?;
    if classes_per_client == 0 || classes_per_client > classes {
        return Err(ConfigError::keyed(
            "partition.classes_per_client",
            format!("must lie in [1, {classes}] for {classes} classes"),
        ));
    }
    if !(round.clients * classes_per_client).is_multiple_of(classes) {
        return Err(ConfigError::keyed(
            "partition.classes_per_client",
            format!(
                "clients * classes_per_client = {} must be divisible by {classes} classes",
                round.clients * classes_per_client
            ),
        ));
    }
    let train_fraction = r.f64_or("partition.train_fraction", 0.8)?;
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ConfigError::keyed(
            "partition.train_fraction",
            format!("must lie in (0, 1), got {train_fraction}"),
        ));
    }

    let dump_embeddings = r.bool_or("output.dump_embeddings", false)?;
    let embedding_layer = r.usize_or("output.embedding_layer", 0)?;
    if dump_embeddings && embedding_layer >= hidden.len() {
        return Err(ConfigError::keyed(
            "output.embedding_layer",
            format!("network has {} hidden layers", hidden.len()),
        ));
    }

    Ok(ExperimentConfig {
        dataset,
        classes_per_client,
        partition_seed: r.u64_opt("partition.seed")?,
        train_fraction,
        hidden,
        round,
        output_dir: PathBuf::from(r.string_or("output.dir", "out")),
        checkpoint_interval: r.usize_or("output.checkpoint_interval", 0)?,
        dump_embeddings,
        embedding_layer,
        timing: r.bool_or("output.timing", false)?,
    })
}

impl ExperimentConfig {
    /// Render the resolved configuration; `resolve(to_ini(c))` equals `c`.
    pub fn to_ini(&self) -> String {
        let mut out = String::from("# fedsim resolved configuration\n\n[dataset]\n");
        match &self.dataset {
            DatasetSource::Synthetic {
                classes,
                dim,
                per_class,
                separation,
                seed,
            } => {
                out.push_str("source = synthetic\n");
                let _ = writeln!(out, "classes = {classes}");
                let _ = writeln!(out, "dim = {dim}");
                let _ = writeln!(out, "per_class = {per_class}");
                let _ = writeln!(out, "separation = {separation}");
                if let Some(seed) = seed {
                    let _ = writeln!(out, "seed = {seed}");
                }
            }
            DatasetSource::Csv {
                path,
                classes,
                max_value,
            } => {
                out.push_str("source = csv\n");
                let _ = writeln!(out, "classes = {classes}");
                let _ = writeln!(out, "csv_path = {}", path.display());
                if let Some(max) = max_value {
                    let _ = writeln!(out, "csv_max_value = {max}");
                }
            }
        }

        out.push_str("\n[partition]\n");
        let _ = writeln!(out, "classes_per_client = {}", self.classes_per_client);
        if let Some(seed) = self.partition_seed {
            let _ = writeln!(out, "seed = {seed}");
        }
        let _ = writeln!(out, "train_fraction = {}", self.train_fraction);

        out.push_str("\n[network]\n");
        let hidden = if self.hidden.is_empty() {
            "none".to_string()
        } else {
            self.hidden
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(out, "hidden = {hidden}");

        out.push_str("\n[round]\n");
        let r = &self.round;
        let _ = writeln!(out, "clients = {}", r.clients);
        let _ = writeln!(out, "sample_rate = {}", r.sample_rate);
        let _ = writeln!(out, "rounds = {}", r.rounds);
        let _ = writeln!(out, "inner_epochs = {}", r.inner_epochs);
        let _ = writeln!(out, "inner_lr = {}", r.inner_lr);
        let _ = writeln!(out, "outer_lr = {}", r.outer_lr);
        let _ = writeln!(out, "batch_size = {}", r.batch_size);
        let _ = writeln!(out, "strategy = {}", r.strategy.name());
        if r.strategy.uses_constraint() {
            let _ = writeln!(out, "alpha = {}", r.strategy.alpha());
        }
        if let StrategyKind::PerFedAvgFo { support_fraction } = r.strategy {
            let _ = writeln!(out, "support_fraction = {support_fraction}");
        }
        let _ = writeln!(out, "seed = {}", r.seed);
        let _ = writeln!(out, "evaluate_all = {}", r.evaluate_all);

        out.push_str("\n[output]\n");
        let _ = writeln!(out, "dir = {}", self.output_dir.display());
        let _ = writeln!(out, "checkpoint_interval = {}", self.checkpoint_interval);
        let _ = writeln!(out, "dump_embeddings = {}", self.dump_embeddings);
        let _ = writeln!(out, "embedding_layer = {}", self.embedding_layer);
        let _ = writeln!(out, "timing = {}", self.timing);
        out
    }

    /// Echoed configuration as a nested JSON value for the run summary.
    pub fn to_json(&self) -> serde_json::Value {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut section = String::new();
        for line in self.to_ini().lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.to_string();
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                sections
                    .entry(section.clone())
                    .or_default()
                    .insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        serde_json::to_value(sections).expect("string maps serialize")
    }
}
