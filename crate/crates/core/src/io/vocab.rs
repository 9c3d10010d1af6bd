use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_to_string, write_atomic, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::model::{Stream, VocabSizes};

pub const VOCAB_FORMAT: &str = "layermix-vocab";

/// Placeholder added by [`build_vocab`] when a stream has no observed tokens,
/// so every vocabulary is non-empty.
pub const UNUSED_TOKEN: &str = "<unused>";

/// Ordered token list with a token → id index. Ids are dense from 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate token `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Self::new(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// One vocabulary per stream; admission and discharge diagnoses share
/// `diagnoses`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularySet {
    pub beds: Vocabulary,
    pub diagnoses: Vocabulary,
    pub labs: Vocabulary,
    pub neuro: Vocabulary,
    pub meds: Vocabulary,
}

impl VocabularySet {
    pub fn of(&self, stream: Stream) -> &Vocabulary {
        match stream {
            Stream::Beds => &self.beds,
            Stream::AdmissionDx | Stream::DischargeDx => &self.diagnoses,
            Stream::Labs => &self.labs,
            Stream::Neuro => &self.neuro,
            Stream::Meds => &self.meds,
        }
    }

    pub fn sizes(&self) -> VocabSizes {
        VocabSizes {
            beds: self.beds.len(),
            diagnoses: self.diagnoses.len(),
            labs: self.labs.len(),
            neuro: self.neuro.len(),
            meds: self.meds.len(),
        }
    }

    /// Generic token names `<prefix><id>` for synthetic data.
    pub fn synthetic(sizes: &VocabSizes) -> Self {
        let make = |prefix: &str, n: usize| {
            Vocabulary::new((0..n).map(|i| format!("{prefix}{i}")).collect()).expect("unique tokens")
        };
        Self {
            beds: make("B", sizes.beds),
            diagnoses: make("D", sizes.diagnoses),
            labs: make("L", sizes.labs),
            neuro: make("N", sizes.neuro),
            meds: make("M", sizes.meds),
        }
    }

    pub fn check_non_empty(&self) -> Result<()> {
        for s in [Stream::Beds, Stream::AdmissionDx, Stream::Labs, Stream::Neuro, Stream::Meds] {
            if self.of(s).is_empty() {
                let name = if s.is_diagnoses() { "diagnoses" } else { s.name() };
                return Err(Error::InvalidParameter(format!("vocabulary `{name}` is empty")));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct VocabDoc {
    format: String,
    version: u32,
    #[serde(flatten)]
    vocab: VocabularySet,
}

pub fn load_vocab(path: &Path) -> Result<VocabularySet> {
    let text = read_to_string(path)?;
    let doc: VocabDoc = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })?;
    if doc.format != VOCAB_FORMAT || doc.version != FORMAT_VERSION {
        return Err(Error::Format {
            path: path.into(),
            message: format!(
                "expected format `{VOCAB_FORMAT}` version {FORMAT_VERSION}, found `{}` version {}",
                doc.format, doc.version
            ),
        });
    }
    Ok(doc.vocab)
}

pub fn save_vocab(path: &Path, vocab: &VocabularySet) -> Result<()> {
    let doc = VocabDoc {
        format: VOCAB_FORMAT.into(),
        version: FORMAT_VERSION,
        vocab: vocab.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("vocabulary serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Builds a vocabulary from the tokens of a corpus file, sorted
/// lexicographically per stream.
pub fn build_vocab(corpus_text: &str) -> Result<VocabularySet> {
    let mut sets: [BTreeSet<String>; 5] = Default::default();
    for (i, line) in corpus_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        if value.get("format").is_some() {
            continue;
        }
        let mut collect = |key: &str, slot: usize, nested: bool| {
            let Some(arr) = value.get(key).and_then(|v| v.as_array()) else {
                return;
            };
            for v in arr {
                if nested {
                    for t in v.as_array().into_iter().flatten().filter_map(|t| t.as_str()) {
                        sets[slot].insert(t.to_string());
                    }
                } else if let Some(t) = v.as_str() {
                    sets[slot].insert(t.to_string());
                }
            }
        };
        collect("beds", 0, false);
        collect("admission_dx", 1, false);
        collect("discharge_dx", 1, false);
        collect("labs", 2, true);
        collect("neuro", 3, true);
        collect("meds", 4, true);
    }
    let [beds, diagnoses, labs, neuro, meds] = sets.map(|s| {
        let mut tokens: Vec<String> = s.into_iter().collect();
        if tokens.is_empty() {
            tokens.push(UNUSED_TOKEN.to_string());
        }
        Vocabulary::new(tokens).expect("set yields unique tokens")
    });
    Ok(VocabularySet {
        beds,
        diagnoses,
        labs,
        neuro,
        meds,
    })
}
