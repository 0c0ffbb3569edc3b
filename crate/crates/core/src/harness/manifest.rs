use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::noise::{mix_noise, NoiseBank};
use crate::audio::{read_wav, AudioSignal};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Noise to add when the entry is loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixAssignment {
    pub noise: String,
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub label: String,
    pub speaker: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix: Option<MixAssignment>,
}

/// Labelled utterances. On disk this is a JSON array of entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    entries: Vec<ManifestEntry>,
    root: PathBuf,
    vocabulary: Vec<String>,
}

impl CorpusManifest {
    pub fn new(entries: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| e.label.trim().is_empty()) {
            return Err(Error::InvalidInput(format!("entry {} has an empty label", e.path.display())));
        }
        let vocabulary: BTreeSet<String> = entries.iter().map(|e| e.label.clone()).collect();
        Ok(Self {
            entries,
            root: root.into(),
            vocabulary: vocabulary.into_iter().collect(),
        })
    }

    /// Parses the manifest and checks that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::new(entries, root)?;
        for e in &m.entries {
            let p = m.resolve(e);
            if !p.is_file() {
                return Err(Error::InvalidInput(format!("manifest entry {} is not a readable file", p.display())));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.entries)?)?;
        Ok(())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Sorted distinct labels.
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    /// Entries of one split. The vocabulary is kept from the full manifest
    /// so that word indices agree across splits.
    pub fn split(&self, split: Split) -> Self {
        Self {
            entries: self.entries.iter().filter(|e| e.split == split).cloned().collect(),
            root: self.root.clone(),
            vocabulary: self.vocabulary.clone(),
        }
    }

    pub fn with_entries(&self, entries: Vec<ManifestEntry>) -> Self {
        Self {
            entries,
            root: self.root.clone(),
            vocabulary: self.vocabulary.clone(),
        }
    }

    pub fn word_index(&self, label: &str) -> Option<usize> {
        self.vocabulary.binary_search_by(|v| v.as_str().cmp(label)).ok()
    }

    /// Reads the audio of `entry`, adding its assigned noise if any.
    pub fn load_audio<T: Real>(&self, entry: &ManifestEntry, noises: &NoiseBank) -> Result<AudioSignal<T>> {
        let speech: AudioSignal<T> = read_wav(self.resolve(entry))?;
        match &entry.mix {
            None => Ok(speech),
            Some(m) => {
                let noise = noises.get(&m.noise)?;
                Ok(mix_noise(&speech, &noise.cast(), m.snr_db, m.seed)?.signal)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(path: &str, label: &str, split: Split) -> ManifestEntry {
        ManifestEntry {
            path: path.into(),
            label: label.into(),
            speaker: "s0".into(),
            split,
            mix: None,
        }
    }

    #[test]
    fn vocabulary_is_sorted_and_shared() {
        let m = CorpusManifest::new(
            vec![entry("a.wav", "two", Split::Train), entry("b.wav", "one", Split::Test)],
            "/tmp",
        )
        .unwrap();
        assert_eq!(m.vocabulary(), ["one", "two"]);
        assert_eq!(m.split(Split::Test).vocabulary(), ["one", "two"]);
        assert_eq!(m.word_index("two"), Some(1));
    }

    #[test]
    fn missing_file_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = CorpusManifest::new(vec![entry("nope.wav", "x", Split::Train)], dir.path()).unwrap();
        m.save(&path).unwrap();
        assert!(matches!(CorpusManifest::load(&path), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn json_is_an_array() {
        let json = r#"[{"path": "a.wav", "label": "yes", "speaker": "f1", "split": "train"}]"#;
        let entries: Vec<ManifestEntry> = serde_json::from_str(json).unwrap();
        assert_eq!(entries[0].split, Split::Train);
        assert!(entries[0].mix.is_none());
    }
}
