//! `fingerprint.json` records that tie artifact directories to the configs
//! and inputs that produced them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use glassbox::netforge::Environment;
use glassbox::suite::{fingerprint_of, TOOL_VERSION};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FILE: &str = "fingerprint.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub kind: String,
    pub tool_version: String,
    pub environment: String,
    /// Hash of everything that determines this artifact's content.
    pub artifact: String,
    /// Artifact hashes of the inputs, by kind.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    /// Method fingerprints by label.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub methods: BTreeMap<String, String>,
}

impl Fingerprint {
    pub fn new(kind: &str, env: &Environment, artifact: String) -> Self {
        Fingerprint {
            kind: kind.into(),
            tool_version: TOOL_VERSION.into(),
            environment: fingerprint_of(env),
            artifact,
            inputs: BTreeMap::new(),
            methods: BTreeMap::new(),
        }
    }

    pub fn dataset(env: &Environment, count: usize, seed: u64) -> Self {
        Fingerprint::new("dataset", env, fingerprint_of(&(env, count, seed)))
    }

    pub fn network(env: &Environment) -> Self {
        Fingerprint::new("network", env, fingerprint_of(&("network", env)))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self).expect("serializable");
        text.push('\n');
        fs::write(dir.join(FILE), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(FILE);
        let raw = fs::read(&path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&raw).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    /// Loads the record of `dir` and checks its kind and environment.
    pub fn expect(dir: &Path, kind: &str, env: &Environment) -> Result<Self, CliError> {
        let fp = Fingerprint::load(dir)?;
        if fp.kind != kind {
            return Err(CliError::usage(format!(
                "{}: expected a {kind} artifact, found {}",
                dir.display(),
                fp.kind
            )));
        }
        let want = fingerprint_of(env);
        if fp.environment != want {
            return Err(CliError::usage(format!(
                "{}: fingerprint mismatch: {kind} was built for environment {}, config describes {want}",
                dir.display(),
                fp.environment
            )));
        }
        Ok(fp)
    }
}
