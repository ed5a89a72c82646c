//! Run manifest: which stage produced which file, under which config, from
//! which inputs, with SHA-256 content digests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::internal(format!("cannot read {}: {e}", path.display())))?;
    Ok(digest_bytes(&bytes))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    /// Input path → digest at the time the stage ran.
    pub inputs: BTreeMap<String, String>,
    /// Output path (relative to the output directory) → digest.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(out_dir: &Path) -> Result<Self, CliError> {
        let path = out_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::user(format!("{} is not a valid manifest: {e}", path.display())))
    }

    pub fn save(&self, out_dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(out_dir.join(MANIFEST_FILE), text + "\n").map_err(CliError::io)
    }

    /// Path of `output` written by `stage`, after checking that the stage
    /// ran under `stage_hash` and that the file still matches its digest.
    pub fn require(&self, out_dir: &Path, stage: &str, output: &str, stage_hash: &str) -> Result<PathBuf, CliError> {
        let missing = || CliError::MissingArtifact {
            artifact: output.to_string(),
            stage: stage.to_string(),
        };
        let record = self.stages.get(stage).ok_or_else(missing)?;
        let recorded = record.outputs.get(output).ok_or_else(missing)?;
        let path = out_dir.join(output);
        if !path.exists() {
            return Err(missing());
        }
        if &digest_file(&path)? != recorded {
            return Err(CliError::Stale(format!(
                "{output} changed after stage `{stage}` wrote it; rerun `{stage}`"
            )));
        }
        if record.config_hash != stage_hash {
            return Err(CliError::Stale(format!(
                "the config changed since stage `{stage}` ran; rerun `{stage}`"
            )));
        }
        for input in record.inputs.keys() {
            self.check_input(stage, Path::new(input))?;
        }
        Ok(path)
    }

    /// Checks an external input against the digest a stage recorded for it.
    pub fn check_input(&self, stage: &str, path: &Path) -> Result<(), CliError> {
        let key = path.to_string_lossy().into_owned();
        if let Some(recorded) = self.stages.get(stage).and_then(|r| r.inputs.get(&key)) {
            if !path.exists() || &digest_file(path)? != recorded {
                return Err(CliError::Stale(format!(
                    "input {key} changed since stage `{stage}` ran; rerun `{stage}`"
                )));
            }
        }
        Ok(())
    }

    /// Records a finished stage. Each output belongs to exactly one stage. A
    /// rerun under the same config hash keeps the earlier outputs, so a stage
    /// can be run piecewise (e.g. `train` one variant at a time).
    pub fn record(
        &mut self,
        out_dir: &Path,
        stage: &str,
        stage_hash: &str,
        inputs: &[PathBuf],
        outputs: &[String],
    ) -> Result<(), CliError> {
        let mut rec = match self.stages.remove(stage) {
            Some(old) if old.config_hash == stage_hash => old,
            _ => StageRecord {
                config_hash: stage_hash.to_string(),
                ..StageRecord::default()
            },
        };
        for p in inputs {
            rec.inputs.insert(p.to_string_lossy().into_owned(), digest_file(p)?);
        }
        for o in outputs {
            rec.outputs.insert(o.clone(), digest_file(&out_dir.join(o))?);
        }
        for (name, other) in self.stages.iter_mut() {
            if name != stage {
                other.outputs.retain(|o, _| !rec.outputs.contains_key(o));
            }
        }
        self.stages.insert(stage.to_string(), rec);
        Ok(())
    }
}
