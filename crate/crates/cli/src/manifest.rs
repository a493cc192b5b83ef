use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use swimbladder::classifier::Label;
use swimbladder::preprocessing::Orientation;

/// One JSON-lines record. Relative paths are resolved against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub image_path: String,
    pub orientation: Orientation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bladder_mask_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_mask_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ManifestEntry {
    /// Explicit id, else the image file stem.
    pub fn key(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            Path::new(&self.image_path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.image_path.clone())
        })
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub base: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ManifestEntry = serde_json::from_str(line)
                .with_context(|| format!("{}:{}: bad manifest record", path.display(), i + 1))?;
            entries.push(e);
        }
        let mut keys: Vec<String> = entries.iter().map(ManifestEntry::key).collect();
        keys.sort();
        if let Some(w) = keys.windows(2).find(|w| w[0] == w[1]) {
            bail!("duplicate manifest id '{}'", w[0]);
        }
        Ok(Self {
            base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            entries,
        })
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn write(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
        let mut out = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        for e in entries {
            writeln!(out, "{}", serde_json::to_string(e)?)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_resolve() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        fs::write(
            &path,
            "{\"image_path\":\"images/a.png\",\"orientation\":\"dorsal\",\"label\":\"swim_bladder\"}\n\n\
             {\"id\":\"x\",\"image_path\":\"/abs/b.png\",\"orientation\":\"lateral\"}\n",
        )
        .unwrap();
        let m = Manifest::load(&path).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[0].key(), "a");
        assert_eq!(m.entries[1].key(), "x");
        assert_eq!(m.entries[1].label, None);
        assert_eq!(m.resolve(&m.entries[0].image_path), dir.path().join("images/a.png"));
        assert_eq!(m.resolve("/abs/b.png"), PathBuf::from("/abs/b.png"));

        fs::write(&path, "{\"image_path\":\"a.png\",\"orientation\":\"sideways\"}\n").unwrap();
        assert!(Manifest::load(&path).is_err());
        fs::write(
            &path,
            "{\"image_path\":\"a.png\",\"orientation\":\"dorsal\"}\n{\"image_path\":\"b/a.png\",\"orientation\":\"dorsal\"}\n",
        )
        .unwrap();
        assert!(Manifest::load(&path).is_err());
    }
}
