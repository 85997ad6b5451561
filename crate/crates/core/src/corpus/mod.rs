//! Utterance manifests, audio segments and corpus tooling.

mod audio;
mod augment;
pub mod dsp;
mod sampling;
mod synth;

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::taxonomy::{CodecRegistry, Origin};

pub use audio::{crop_samples, load_segment, read_wav, write_wav, LoadMode, Segment, SEGMENT_LEN};
pub use augment::{augment, draw_snr_db, AugmentConfig};
pub use sampling::{balanced_sample, Grouping};
pub use synth::{
    default_recipes, generate_synthetic_corpus, render_clip, ArtifactParams, GeneratedCorpus, SyntheticCodecRecipe,
    VoiceStyle, DEFAULT_RECIPES_JSONL,
};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    /// Seen codecs, re-synthesis style.
    EvalCors,
    /// Seen codecs under a shifted generator.
    EvalCosgKnown,
    /// Codecs excluded from training.
    EvalCosgAll,
}

impl Split {
    pub const ALL: [Split; 5] = [
        Split::Train,
        Split::Dev,
        Split::EvalCors,
        Split::EvalCosgKnown,
        Split::EvalCosgAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::EvalCors => "eval_cors",
            Split::EvalCosgKnown => "eval_cosg_known",
            Split::EvalCosgAll => "eval_cosg_all",
        }
    }

    pub fn is_eval(self) -> bool {
        matches!(self, Split::EvalCors | Split::EvalCosgKnown | Split::EvalCosgAll)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::config(format!("unknown split `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utterance_id: String,
    /// Relative to the manifest's directory.
    pub audio_path: PathBuf,
    pub origin: Origin,
    pub split: Split,
    pub sample_rate: u32,
}

/// A validated list of entries plus the directory their paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Self {
        Manifest {
            root: root.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn audio_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.audio_path)
    }

    /// Entries belonging to `split`, same root.
    pub fn filter_split(&self, split: Split) -> Manifest {
        self.filter(|e| e.split == split)
    }

    pub fn filter(&self, mut keep: impl FnMut(&ManifestEntry) -> bool) -> Manifest {
        Manifest {
            root: self.root.clone(),
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    /// SHA-256 of the serialized entries (root excluded).
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_jsonl()?)))
    }

    /// Writes the manifest; entry paths are rewritten relative to the new
    /// location when it differs from `root`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = path.parent().unwrap_or(Path::new("."));
        let rebased = if same_dir(dir, &self.root) {
            self.clone()
        } else {
            let entries = self
                .entries
                .iter()
                .map(|e| {
                    let abs = self.root.join(&e.audio_path);
                    ManifestEntry {
                        audio_path: relative_to(&abs, dir),
                        ..e.clone()
                    }
                })
                .collect();
            Manifest::new(dir, entries)
        };
        std::fs::write(path, rebased.to_jsonl()?).map_err(|e| Error::io(path, e))
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

fn relative_to(target: &Path, base: &Path) -> PathBuf {
    let target = target.canonicalize().unwrap_or_else(|_| {
        match (target.parent().and_then(|p| p.canonicalize().ok()), target.file_name()) {
            (Some(p), Some(name)) => p.join(name),
            _ => target.to_path_buf(),
        }
    });
    let base = base.canonicalize().unwrap_or_else(|_| base.to_path_buf());
    let t: Vec<_> = target.components().collect();
    let b: Vec<_> = base.components().collect();
    let common = t.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut rel = PathBuf::new();
    for _ in common..b.len() {
        rel.push("..");
    }
    for c in &t[common..] {
        rel.push(c);
    }
    rel
}

/// Parses a JSON-lines manifest, checking ids, sample rates and origins.
pub fn read_manifest<R: BufRead>(reader: R, root: impl Into<PathBuf>, registry: &CodecRegistry) -> Result<Manifest> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if entry.sample_rate != SAMPLE_RATE {
            return Err(Error::Parse {
                line: lineno,
                message: format!("sample_rate must be {SAMPLE_RATE}, got {}", entry.sample_rate),
            });
        }
        if let Origin::Codec(id) = &entry.origin {
            if registry.get(id).is_none() {
                return Err(Error::UnknownCodecId {
                    id: id.clone(),
                    line: Some(lineno),
                });
            }
        }
        if !seen.insert(entry.utterance_id.clone()) {
            return Err(Error::DuplicateUtteranceId(entry.utterance_id));
        }
        entries.push(entry);
    }
    Ok(Manifest::new(root, entries))
}

pub fn ingest_manifest(path: impl AsRef<Path>, registry: &CodecRegistry) -> Result<Manifest> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    read_manifest(std::io::BufReader::new(file), root, registry)
}
