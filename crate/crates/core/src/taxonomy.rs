//! Neural audio codec taxonomy and per-task class layouts.
//!
//! Every codec is characterized by three independent axes: how it quantizes
//! (VQ), which auxiliary training objective it uses (AUX) and how its decoder
//! upsamples back to a waveform (DEC). Each source-tracing task predicts one
//! axis. Bona fide speech has no codec, so it is an explicit class at index 0
//! of every task, including the binary spoof-detection task.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class name shared by every task for genuine speech.
pub const BONAFIDE: &str = "bonafide";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VqClass {
    /// Multi-codebook (residual) quantization.
    Mvq,
    /// Single-codebook quantization.
    Svq,
    /// Scalar-codebook quantization.
    Scq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AuxClass {
    /// Semantic distillation.
    Sem,
    /// Attribute disentanglement.
    Disent,
    /// No auxiliary objective.
    #[serde(rename = "None")]
    NoAux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DecClass {
    /// Transposed-convolution (time-domain) upsampling.
    Time,
    /// Inverse STFT (frequency-domain) reconstruction.
    Freq,
}

impl VqClass {
    pub const ALL: [VqClass; 3] = [VqClass::Mvq, VqClass::Svq, VqClass::Scq];

    pub fn name(self) -> &'static str {
        match self {
            VqClass::Mvq => "Mvq",
            VqClass::Svq => "Svq",
            VqClass::Scq => "Scq",
        }
    }
}

impl AuxClass {
    pub const ALL: [AuxClass; 3] = [AuxClass::Sem, AuxClass::Disent, AuxClass::NoAux];

    pub fn name(self) -> &'static str {
        match self {
            AuxClass::Sem => "Sem",
            AuxClass::Disent => "Disent",
            AuxClass::NoAux => "None",
        }
    }
}

impl DecClass {
    pub const ALL: [DecClass; 2] = [DecClass::Time, DecClass::Freq];

    pub fn name(self) -> &'static str {
        match self {
            DecClass::Time => "Time",
            DecClass::Freq => "Freq",
        }
    }
}

/// The (VQ, AUX, DEC) triple that fingerprints a codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaxonomyLabel {
    pub vq: VqClass,
    pub aux: AuxClass,
    pub dec: DecClass,
}

impl TaxonomyLabel {
    pub fn new(vq: VqClass, aux: AuxClass, dec: DecClass) -> Self {
        TaxonomyLabel { vq, aux, dec }
    }

    /// Class index of this codec's category within `task`.
    pub fn class_index(&self, task: TaskKind) -> usize {
        match task {
            TaskKind::Bin => 1,
            TaskKind::Vq => 1 + VqClass::ALL.iter().position(|&c| c == self.vq).unwrap(),
            TaskKind::Aux => 1 + AuxClass::ALL.iter().position(|&c| c == self.aux).unwrap(),
            TaskKind::Dec => 1 + DecClass::ALL.iter().position(|&c| c == self.dec).unwrap(),
        }
    }

    /// Serialized category name along the axis `task` selects.
    pub fn category(&self, task: TaskKind) -> &'static str {
        match task {
            TaskKind::Bin => "spoof",
            TaskKind::Vq => self.vq.name(),
            TaskKind::Aux => self.aux.name(),
            TaskKind::Dec => self.dec.name(),
        }
    }
}

/// The four prediction tasks. Ordering follows the loss-weight order λ1..λ4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "BIN")]
    Bin,
    #[serde(rename = "VQ")]
    Vq,
    #[serde(rename = "AUX")]
    Aux,
    #[serde(rename = "DEC")]
    Dec,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Bin, TaskKind::Vq, TaskKind::Aux, TaskKind::Dec];
    pub const SOURCE_TRACING: [TaskKind; 3] = [TaskKind::Vq, TaskKind::Aux, TaskKind::Dec];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Bin => "BIN",
            TaskKind::Vq => "VQ",
            TaskKind::Aux => "AUX",
            TaskKind::Dec => "DEC",
        }
    }

    /// Position in the λ vector and in per-task arrays.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn num_classes(self) -> usize {
        match self {
            TaskKind::Bin => 2,
            TaskKind::Vq => 1 + VqClass::ALL.len(),
            TaskKind::Aux => 1 + AuxClass::ALL.len(),
            TaskKind::Dec => 1 + DecClass::ALL.len(),
        }
    }

    pub fn is_multiclass(self) -> bool {
        self != TaskKind::Bin
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BIN" => Ok(TaskKind::Bin),
            "VQ" => Ok(TaskKind::Vq),
            "AUX" => Ok(TaskKind::Aux),
            "DEC" => Ok(TaskKind::Dec),
            _ => Err(Error::config(format!("unknown task `{s}`"))),
        }
    }
}

/// Ordered class names of `task`; bona fide is always index 0.
pub fn task_classes(task: TaskKind) -> Vec<&'static str> {
    let mut names = vec![BONAFIDE];
    match task {
        TaskKind::Bin => names.push("spoof"),
        TaskKind::Vq => names.extend(VqClass::ALL.iter().map(|c| c.name())),
        TaskKind::Aux => names.extend(AuxClass::ALL.iter().map(|c| c.name())),
        TaskKind::Dec => names.extend(DecClass::ALL.iter().map(|c| c.name())),
    }
    names
}

/// Where an utterance came from: genuine speech or a registered codec.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Bonafide,
    Codec(String),
}

impl Origin {
    pub fn parse(s: &str) -> Self {
        if s == BONAFIDE {
            Origin::Bonafide
        } else {
            Origin::Codec(s.to_string())
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Origin::Bonafide => BONAFIDE,
            Origin::Codec(id) => id,
        }
    }

    pub fn is_bonafide(&self) -> bool {
        matches!(self, Origin::Bonafide)
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Origin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Origin {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Origin::parse(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecSpec {
    pub codec_id: String,
    pub display_name: String,
    #[serde(flatten)]
    pub label: TaxonomyLabel,
}

impl CodecSpec {
    pub fn new(codec_id: impl Into<String>, display_name: impl Into<String>, label: TaxonomyLabel) -> Self {
        CodecSpec {
            codec_id: codec_id.into(),
            display_name: display_name.into(),
            label,
        }
    }
}

/// Codec id → taxonomy lookup, loaded once at startup and read-only afterwards.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CodecRegistry {
    codecs: BTreeMap<String, CodecSpec>,
}

impl CodecRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: CodecSpec) -> Result<()> {
        if spec.codec_id == BONAFIDE || self.codecs.contains_key(&spec.codec_id) {
            return Err(Error::DuplicateCodecId(spec.codec_id));
        }
        self.codecs.insert(spec.codec_id.clone(), spec);
        Ok(())
    }

    pub fn get(&self, codec_id: &str) -> Option<&CodecSpec> {
        self.codecs.get(codec_id)
    }

    pub fn lookup(&self, codec_id: &str) -> Result<&CodecSpec> {
        self.get(codec_id).ok_or_else(|| Error::UnknownCodecId {
            id: codec_id.to_string(),
            line: None,
        })
    }

    pub fn len(&self) -> usize {
        self.codecs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codecs.is_empty()
    }

    /// Codecs in codec-id order.
    pub fn iter(&self) -> impl Iterator<Item = &CodecSpec> {
        self.codecs.values()
    }

    /// Class index of `origin` in `task`. Bona fide maps to 0 everywhere.
    pub fn label_of(&self, origin: &Origin, task: TaskKind) -> Result<usize> {
        match origin {
            Origin::Bonafide => Ok(0),
            Origin::Codec(id) => Ok(self.lookup(id)?.label.class_index(task)),
        }
    }

    /// Labels for all four tasks, in [`TaskKind::ALL`] order.
    pub fn labels_of(&self, origin: &Origin) -> Result<[usize; 4]> {
        let mut out = [0; 4];
        for task in TaskKind::ALL {
            out[task.index()] = self.label_of(origin, task)?;
        }
        Ok(out)
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut registry = CodecRegistry::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let spec: CodecSpec = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            registry.register(spec)?;
        }
        Ok(registry)
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for spec in self.iter() {
            let line = serde_json::to_string(spec)?;
            writeln!(writer, "{line}").map_err(|e| Error::io("<registry>", e))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(id: &str, vq: VqClass, aux: AuxClass, dec: DecClass) -> CodecSpec {
        CodecSpec::new(id, id.to_uppercase(), TaxonomyLabel::new(vq, aux, dec))
    }

    #[test]
    fn register_then_lookup() {
        let mut reg = CodecRegistry::new();
        let s = spec("synthA", VqClass::Mvq, AuxClass::NoAux, DecClass::Time);
        reg.register(s.clone()).unwrap();
        assert_eq!(reg.lookup("synthA").unwrap(), &s);
    }

    #[test]
    fn duplicate_codec_id_rejected() {
        let mut reg = CodecRegistry::new();
        let s = spec("synthA", VqClass::Mvq, AuxClass::NoAux, DecClass::Time);
        reg.register(s.clone()).unwrap();
        assert!(matches!(reg.register(s), Err(Error::DuplicateCodecId(id)) if id == "synthA"));
        let bona = spec(BONAFIDE, VqClass::Svq, AuxClass::Sem, DecClass::Freq);
        assert!(matches!(reg.register(bona), Err(Error::DuplicateCodecId(_))));
    }

    #[test]
    fn thirty_one_codecs() {
        let mut reg = CodecRegistry::new();
        for i in 0..31 {
            let vq = VqClass::ALL[i % 3];
            let aux = AuxClass::ALL[(i / 3) % 3];
            let dec = DecClass::ALL[i % 2];
            reg.register(spec(&format!("codec{i:02}"), vq, aux, dec)).unwrap();
        }
        assert_eq!(reg.len(), 31);
    }

    #[test]
    fn class_lists() {
        assert_eq!(task_classes(TaskKind::Vq), ["bonafide", "Mvq", "Svq", "Scq"]);
        assert_eq!(task_classes(TaskKind::Aux), ["bonafide", "Sem", "Disent", "None"]);
        assert_eq!(task_classes(TaskKind::Dec), ["bonafide", "Time", "Freq"]);
        assert_eq!(task_classes(TaskKind::Bin), ["bonafide", "spoof"]);
        for task in TaskKind::ALL {
            assert_eq!(task_classes(task).len(), task.num_classes());
            assert_eq!(task_classes(task), task_classes(task));
        }
    }

    #[test]
    fn labels() {
        let mut reg = CodecRegistry::new();
        reg.register(spec("scq", VqClass::Scq, AuxClass::Disent, DecClass::Freq)).unwrap();
        assert_eq!(reg.label_of(&Origin::Bonafide, TaskKind::Aux).unwrap(), 0);
        let o = Origin::Codec("scq".into());
        assert_eq!(reg.label_of(&o, TaskKind::Vq).unwrap(), 3);
        assert_eq!(reg.label_of(&o, TaskKind::Aux).unwrap(), 2);
        assert_eq!(reg.label_of(&o, TaskKind::Dec).unwrap(), 2);
        assert_eq!(reg.label_of(&o, TaskKind::Bin).unwrap(), 1);
        let missing = Origin::Codec("nope".into());
        assert!(matches!(
            reg.label_of(&missing, TaskKind::Dec),
            Err(Error::UnknownCodecId { .. })
        ));
    }

    #[test]
    fn registry_line_format() {
        let s = spec("x", VqClass::Svq, AuxClass::NoAux, DecClass::Time);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(
            text,
            r#"{"codec_id":"x","display_name":"X","vq":"Svq","aux":"None","dec":"Time"}"#
        );
    }

    #[test]
    fn registry_file_round_trip() {
        let mut reg = CodecRegistry::new();
        reg.register(spec("b", VqClass::Svq, AuxClass::Sem, DecClass::Time)).unwrap();
        reg.register(spec("a", VqClass::Mvq, AuxClass::NoAux, DecClass::Freq)).unwrap();
        let mut buf = Vec::new();
        reg.write_jsonl(&mut buf).unwrap();
        let back = CodecRegistry::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, reg);
        let bad = b"{\"codec_id\":\"a\"}\n";
        assert!(matches!(CodecRegistry::read_jsonl(&bad[..]), Err(Error::Parse { line: 1, .. })));
    }

    fn any_label() -> impl Strategy<Value = TaxonomyLabel> {
        (0..3usize, 0..3usize, 0..2usize)
            .prop_map(|(v, a, d)| TaxonomyLabel::new(VqClass::ALL[v], AuxClass::ALL[a], DecClass::ALL[d]))
    }

    proptest! {
        #[test]
        fn codec_spec_text_round_trip(id in "[a-z][a-z0-9_-]{0,12}", name in ".{0,20}", label in any_label()) {
            let s = CodecSpec::new(id, name, label);
            let text = serde_json::to_string(&s).unwrap();
            let back: CodecSpec = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, s);
        }

        #[test]
        fn label_indices_in_range(label in any_label()) {
            let mut reg = CodecRegistry::new();
            reg.register(CodecSpec::new("c", "c", label)).unwrap();
            for task in TaskKind::ALL {
                let idx = reg.label_of(&Origin::Codec("c".into()), task).unwrap();
                prop_assert!(idx >= 1 && idx < task_classes(task).len());
                prop_assert_eq!(task_classes(task)[idx], label.category(task));
                prop_assert_eq!(reg.label_of(&Origin::Bonafide, task).unwrap(), 0);
            }
        }
    }
}
