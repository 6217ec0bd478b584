//! Checkpoint files: named parameter arrays plus a JSON sidecar holding the
//! configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{build_networks, LossReport, ModelConfig, TrainedModel};
use crate::tensor::{read_arrays, write_arrays, Tensor};
use crate::{rng_from_seed, Error, Result};

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: ModelConfig,
    steps_completed: usize,
    final_losses: Option<LossReport>,
}

/// Path of the JSON sidecar next to a checkpoint.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

impl TrainedModel {
    fn named_arrays(&self) -> Vec<(String, Tensor)> {
        let pairs = |net: &super::Network| {
            net.names().iter().cloned().zip(net.params().iter().cloned()).collect::<Vec<_>>()
        };
        let mut out = pairs(&self.encoder);
        out.extend(pairs(&self.decoder));
        out
    }

    /// Parameter arrays in the checkpoint encoding.
    pub fn checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        write_arrays(&mut buf, &self.named_arrays())?;
        Ok(buf)
    }

    pub fn sidecar_json(&self) -> Result<String> {
        let side = Sidecar {
            config: self.config.clone(),
            steps_completed: self.steps_completed,
            final_losses: self.final_losses,
        };
        serde_json::to_string_pretty(&side).map_err(|e| Error::Format(format!("sidecar encoding failed: {e}")))
    }

    /// Writes the checkpoint and its `.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.checkpoint_bytes()?).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        std::fs::write(&side, self.sidecar_json()? + "\n").map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side = sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_parts(&text, &bytes)
    }

    /// Rebuilds a model from sidecar text and checkpoint bytes.
    pub fn from_parts(sidecar: &str, checkpoint: &[u8]) -> Result<Self> {
        let side: Sidecar =
            serde_json::from_str(sidecar).map_err(|e| Error::Format(format!("bad checkpoint sidecar: {e}")))?;
        side.config.validate()?;
        let (mut encoder, mut decoder) = build_networks(&side.config, &mut rng_from_seed(0));
        let arrays = read_arrays(checkpoint)?;
        let expected = encoder.params().len() + decoder.params().len();
        if arrays.len() != expected {
            return Err(Error::Format(format!("checkpoint holds {} arrays, model needs {expected}", arrays.len())));
        }
        let mut it = arrays.into_iter();
        for net in [&mut encoder, &mut decoder] {
            let names = net.names().to_vec();
            for (slot, name) in net.params_mut().iter_mut().zip(names) {
                let (got, t) = it.next().expect("count checked");
                if got != name || t.shape() != slot.shape() {
                    return Err(Error::Format(format!(
                        "checkpoint array `{got}` {:?} does not match `{name}` {:?}",
                        t.shape(),
                        slot.shape()
                    )));
                }
                *slot = t;
            }
        }
        Ok(TrainedModel {
            config: side.config,
            encoder,
            decoder,
            steps_completed: side.steps_completed,
            final_losses: side.final_losses,
        })
    }
}
