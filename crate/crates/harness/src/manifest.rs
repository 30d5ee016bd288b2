//! Dataset manifests: `{"entries": [{"id", "video_path", "mos"?}]}`.
//!
//! Relative video paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vqadv::VideoTensor;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub video_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mos: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let mut manifest: DatasetManifest = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut manifest.entries {
            if e.video_path.is_relative() {
                e.video_path = base.join(&e.video_path);
            }
        }
        manifest.validate()?;
        Ok(manifest)
    }

    /// Unique ids, safe file-name ids, existing paths and finite MOS values.
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(HarnessError::Config("manifest has no entries".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.id.is_empty() || e.id.contains(['/', '\\']) || e.id.starts_with('.') {
                return Err(HarnessError::Config(format!("invalid video id {:?}", e.id)));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(HarnessError::Config(format!("duplicate video id {:?}", e.id)));
            }
            if !e.video_path.is_file() {
                return Err(HarnessError::Config(format!(
                    "video {:?} not found at {}",
                    e.id,
                    e.video_path.display()
                )));
            }
            if let Some(m) = e.mos {
                if !m.is_finite() {
                    return Err(HarnessError::Config(format!("video {:?} has non-finite MOS", e.id)));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        fs::write(path, text + "\n").map_err(HarnessError::io(path))
    }
}

/// Load an `.rvid` or `.y4m` file by extension.
pub fn load_video(path: &Path) -> Result<VideoTensor> {
    let is_y4m = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("y4m"));
    let video = if is_y4m {
        vqadv::io::read_y4m(path)
    } else {
        vqadv::io::read_rvid(path)
    };
    video.map_err(|e| match e {
        vqadv::Error::Io(source) => HarnessError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    })
}
