use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::serp::now_millis;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingested,
    Collected,
    Pooled,
    Served,
    Exported,
    Analyzed,
}

/// Record of one stage run: what it read and wrote, with SHA-256 digests.
///
/// Input paths are stored as given; output paths are relative to the
/// stage's output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub study_id: String,
    pub stage: Stage,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub created_at: u64,
}

pub fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn digest_inputs(paths: &[PathBuf]) -> Result<BTreeMap<String, String>, CliError> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), digest_file(p)?)))
        .collect()
}

pub fn read_manifest(dir: &Path) -> Option<PipelineManifest> {
    let bytes = fs::read(dir.join(MANIFEST_FILE)).ok()?;
    serde_json::from_slice(&bytes).ok()
}

pub fn write_manifest(dir: &Path, manifest: &PipelineManifest) -> Result<(), CliError> {
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

/// True when `dir` holds a manifest for `stage` whose recorded inputs equal
/// `inputs` and whose outputs are all present and unchanged.
pub fn is_current(dir: &Path, stage: Stage, inputs: &BTreeMap<String, String>) -> bool {
    let Some(m) = read_manifest(dir) else {
        return false;
    };
    m.stage == stage
        && &m.inputs == inputs
        && m.outputs
            .iter()
            .all(|(rel, digest)| digest_file(&dir.join(rel)).is_ok_and(|d| &d == digest))
}

/// Fails when an input was produced by an upstream stage whose manifest
/// records a different digest for it.
pub fn check_upstream(inputs: &[PathBuf]) -> Result<(), CliError> {
    for input in inputs {
        let Some(dir) = input.parent() else { continue };
        let Some(m) = read_manifest(dir) else { continue };
        let Some(name) = input.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(expected) = m.outputs.get(name) {
            let actual = digest_file(input)?;
            if &actual != expected {
                return Err(CliError::StaleManifest {
                    artifact: input.clone(),
                    manifest: dir.join(MANIFEST_FILE),
                });
            }
        }
    }
    Ok(())
}

/// Digests every file named in `outputs` (relative to `dir`) and writes the
/// stage manifest.
pub fn finish_stage(
    dir: &Path,
    study_id: &str,
    stage: Stage,
    inputs: BTreeMap<String, String>,
    outputs: &[String],
) -> Result<PipelineManifest, CliError> {
    let outputs = outputs
        .iter()
        .map(|rel| Ok((rel.clone(), digest_file(&dir.join(rel))?)))
        .collect::<Result<_, CliError>>()?;
    let manifest = PipelineManifest {
        study_id: study_id.to_string(),
        stage,
        inputs,
        outputs,
        created_at: now_millis(),
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn current_until_an_output_changes() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, "a").unwrap();
        let out = dir.path().join("stage");
        fs::create_dir_all(&out).unwrap();
        fs::write(out.join("o.txt"), "x").unwrap();
        let inputs = digest_inputs(std::slice::from_ref(&input)).unwrap();
        finish_stage(&out, "s", Stage::Ingested, inputs.clone(), &["o.txt".into()]).unwrap();
        assert!(is_current(&out, Stage::Ingested, &inputs));
        assert!(!is_current(&out, Stage::Collected, &inputs));

        fs::write(out.join("o.txt"), "y").unwrap();
        assert!(!is_current(&out, Stage::Ingested, &inputs));
        let err = check_upstream(&[out.join("o.txt")]).unwrap_err();
        assert!(err.to_string().contains("o.txt"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}
