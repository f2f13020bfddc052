use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use recoslip::eval::{Method, StudyConfig, StudyKind};
use recoslip::synth::DatasetSpec;
use recoslip::Result;
use serde::{Deserialize, Serialize};

use crate::commands::TrainConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

/// A fully resolved command: everything needed to reproduce its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Invocation {
    Gen {
        spec: DatasetSpec,
        seed: u64,
        out: PathBuf,
    },
    Train {
        method: Method,
        data: PathBuf,
        config: TrainConfig,
        out: PathBuf,
    },
    Eval {
        scores: PathBuf,
        data: PathBuf,
        splits: Option<PathBuf>,
        seed: Option<u64>,
        out: Option<PathBuf>,
    },
    Study {
        study: StudyKind,
        config: StudyConfig,
        out: PathBuf,
    },
}

impl Invocation {
    pub fn out_dir(&self) -> Option<&Path> {
        match self {
            Invocation::Gen { out, .. } | Invocation::Train { out, .. } | Invocation::Study { out, .. } => Some(out),
            Invocation::Eval { out, .. } => out.as_deref(),
        }
    }

    fn set_out_dir(&mut self, dir: PathBuf) {
        match self {
            Invocation::Gen { out, .. } | Invocation::Train { out, .. } | Invocation::Study { out, .. } => *out = dir,
            Invocation::Eval { out, .. } => *out = Some(dir),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Invocation::Gen { seed, .. } => vec![*seed],
            Invocation::Train { config, .. } => vec![config.seed],
            Invocation::Eval { seed, .. } => seed.iter().copied().collect(),
            Invocation::Study { config, .. } => config.seeds.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub started_unix_secs: u64,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub invocation: Invocation,
}

/// Writes the manifest into the invocation's output directory, if any.
pub fn write(invocation: &Invocation) -> Result<()> {
    let Some(dir) = invocation.out_dir() else { return Ok(()) };
    std::fs::create_dir_all(dir)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        seeds: invocation.seeds(),
        out_dir: Some(dir.to_path_buf()),
        invocation: invocation.clone(),
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

/// Reads a manifest back, optionally redirecting its output.
pub fn load_invocation(path: &Path, out: Option<PathBuf>) -> Result<Invocation> {
    let text = std::fs::read_to_string(path)?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    if manifest.tool_version != env!("CARGO_PKG_VERSION") {
        log::warn!(
            "manifest written by version {}, replaying with {}",
            manifest.tool_version,
            env!("CARGO_PKG_VERSION")
        );
    }
    let mut invocation = manifest.invocation;
    if let Some(dir) = out {
        invocation.set_out_dir(dir);
    }
    Ok(invocation)
}
