use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use qrun_core::autodiff::Tensor;
use qrun_core::model::Network;

use crate::config::RunConfig;
use crate::exit::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBlock {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Trained parameters plus everything needed to rebuild and replay the run.
/// Floats are written in shortest round-trip form, so a save/load/save
/// cycle is byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub model_kind: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: RunConfig,
    pub params: BTreeMap<String, ParamBlock>,
}

impl Checkpoint {
    pub fn new(config: &RunConfig, config_sha256: String, net: &Network) -> Self {
        let params = net
            .params()
            .iter()
            .map(|p| {
                let block = ParamBlock {
                    shape: p.value.shape().to_vec(),
                    data: p.value.data().to_vec(),
                };
                (p.name.clone(), block)
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            model_kind: kind_name(config),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_sha256,
            config: config.clone(),
            params,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("checkpoints always serialize");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let ckpt: Checkpoint = crate::config::parse_json(text)?;
        if ckpt.schema_version != SCHEMA_VERSION {
            return Err(CliError::contract(format!(
                "checkpoint schema {} is not supported (expected {SCHEMA_VERSION})",
                ckpt.schema_version
            )));
        }
        Ok(ckpt)
    }

    /// Rebuilds the network from the embedded model config and loads the
    /// stored values, checking every block by name and shape.
    pub fn network(&self) -> Result<Network, CliError> {
        let mut net = self.config.model.build(self.seed)?;
        let mut values = Vec::with_capacity(net.params().len());
        for p in net.params() {
            let block = self.params.get(&p.name).ok_or_else(|| {
                CliError::contract(format!("checkpoint lacks parameter block {}", p.name))
            })?;
            values.push(Tensor::new(block.shape.clone(), block.data.clone())?);
        }
        if self.params.len() != values.len() {
            return Err(CliError::contract(
                "checkpoint has parameter blocks the model does not define",
            ));
        }
        net.load(values)?;
        Ok(net)
    }
}

fn kind_name(config: &RunConfig) -> String {
    serde_json::to_value(&config.model)
        .ok()
        .and_then(|v| v.get("kind").and_then(|k| k.as_str().map(String::from)))
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{config_hash, parse_json};

    fn config() -> RunConfig {
        parse_json(
            r#"{
                "task": {"kind": "signal", "points": 20},
                "model": {"kind": "qrun", "widths": [1, 4, 1], "alpha": 2, "n": 3, "m": 5},
                "train": {"epochs": 1},
                "seed": 9
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let cfg = config();
        let net = cfg.model.build(cfg.seed).unwrap();
        let ckpt = Checkpoint::new(&cfg, config_hash(&cfg), &net);
        assert_eq!(ckpt.model_kind, "qrun");
        let text = ckpt.to_json();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_json(), text);
        let rebuilt = back.network().unwrap();
        for (a, b) in rebuilt.params().iter().zip(net.params()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
    }

    #[test]
    fn rejects_mismatched_checkpoints() {
        let cfg = config();
        let net = cfg.model.build(cfg.seed).unwrap();
        let mut ckpt = Checkpoint::new(&cfg, config_hash(&cfg), &net);
        ckpt.schema_version = 2;
        assert!(Checkpoint::from_json(&ckpt.to_json()).is_err());
        ckpt.schema_version = SCHEMA_VERSION;
        let name = ckpt.params.keys().next().unwrap().clone();
        ckpt.params.get_mut(&name).unwrap().data.pop();
        assert!(ckpt.network().is_err());
        ckpt.params.remove(&name);
        assert!(ckpt.network().is_err());
    }
}
