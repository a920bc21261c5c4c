use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qrun_core::model::ModelConfig;
use qrun_core::quantum::DrqcSpec;
use qrun_core::tasks::{DrqcDatasetConfig, TaskSpec, TrainConfig};

use crate::exit::CliError;

/// Everything `qrun train` needs. `seed` drives both the initialization and
/// the training stream; any `train.seed` in the file is replaced by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Input of `qrun simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub circuit: DrqcSpec,
    #[serde(default)]
    pub dataset: DrqcDatasetConfig,
}

/// RFC 6901 pointer from serde_path_to_error's dotted path. Unknown-key
/// errors are reported at the offending key itself, not its parent.
fn json_pointer(path: &serde_path_to_error::Path, message: &str) -> String {
    let mut segments: Vec<String> = path
        .iter()
        .filter_map(|seg| match seg {
            serde_path_to_error::Segment::Seq { index } => Some(index.to_string()),
            serde_path_to_error::Segment::Map { key } => Some(key.clone()),
            serde_path_to_error::Segment::Enum { variant } => Some(variant.clone()),
            serde_path_to_error::Segment::Unknown => None,
        })
        .collect();
    if let Some(rest) = message.strip_prefix("unknown field `") {
        if let Some(key) = rest.split('`').next() {
            if segments.last().map(String::as_str) != Some(key) {
                segments.push(key.to_string());
            }
        }
    }
    segments
        .iter()
        .map(|s| format!("/{}", s.replace('~', "~0").replace('/', "~1")))
        .collect()
}

/// Parses JSON into `T`, rejecting unknown keys with the pointer of the key.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let message = e.inner().to_string();
        let pointer = json_pointer(e.path(), &message);
        CliError::contract(format!(
            "invalid config at {}: {message}",
            if pointer.is_empty() { "/" } else { &pointer }
        ))
    })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::contract(format!("cannot read {}: {e}", path.display())))?;
    parse_json(&text)
}

/// SHA-256 of the canonical (re-serialized) form of a config.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let canonical = serde_json::to_vec(cfg).expect("configs always serialize");
    Sha256::digest(&canonical)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOKE: &str = r#"{
        "task": {"kind": "signal", "points": 50},
        "model": {"kind": "mlp", "widths": [1, 8, 1], "activation": "tanh"},
        "train": {"epochs": 1, "optimizer": {"kind": "adam", "lr": 0.01}},
        "seed": 3
    }"#;

    #[test]
    fn parses_a_minimal_run() {
        let cfg: RunConfig = parse_json(SMOKE).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.train.epochs, 1);
        assert!(cfg.output_dir.is_none());
    }

    #[test]
    fn unknown_keys_are_reported_by_pointer() {
        let bad = SMOKE.replace(r#""lr": 0.01"#, r#""lerning_rate": 0.01"#);
        let err = parse_json::<RunConfig>(&bad).unwrap_err();
        assert!(err.message.contains("lerning_rate"), "{}", err.message);
        assert!(err.message.contains("/train/optimizer"), "{}", err.message);

        let bad = SMOKE.replace(r#""seed": 3"#, r#""seed": 3, "sed": 4"#);
        let err = parse_json::<RunConfig>(&bad).unwrap_err();
        assert!(err.message.contains("at /sed:"), "{}", err.message);

        let bad = SMOKE.replace(r#""epochs": 1"#, r#""epochs": 1, "batch": 4"#);
        let err = parse_json::<RunConfig>(&bad).unwrap_err();
        assert!(err.message.contains("at /train/batch:"), "{}", err.message);
    }

    #[test]
    fn pointer_escapes_special_characters() {
        let bad = SMOKE.replace(r#""seed": 3"#, r#""seed": 3, "a/b~c": 1"#);
        let err = parse_json::<RunConfig>(&bad).unwrap_err();
        assert!(err.message.contains("/a~1b~0c"), "{}", err.message);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a: RunConfig = parse_json(SMOKE).unwrap();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
        b.seed = 4;
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
