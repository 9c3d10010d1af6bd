use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_to_string, write_atomic, VocabularySet, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::model::EpisodeModel;

pub const MODEL_FORMAT: &str = "layermix-model";

/// A trained model together with the vocabulary its ids refer to.
///
/// Probabilities are stored in linear space using the shortest decimal
/// representation that parses back to the same `f64`, so a save/load cycle
/// reproduces every parameter bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub vocabulary: VocabularySet,
    pub model: EpisodeModel,
}

impl ModelFile {
    pub fn new(model: EpisodeModel, vocabulary: VocabularySet) -> Result<Self> {
        if vocabulary.sizes() != model.vocab_sizes() {
            return Err(Error::DimensionMismatch(
                "vocabulary sizes differ from the model's".into(),
            ));
        }
        Ok(Self {
            format: MODEL_FORMAT.into(),
            version: FORMAT_VERSION,
            vocabulary,
            model,
        })
    }
}

pub fn model_to_string(file: &ModelFile) -> String {
    let mut s = serde_json::to_string(file).expect("model serializes");
    s.push('\n');
    s
}

pub fn model_from_str(text: &str) -> std::result::Result<ModelFile, String> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if file.format != MODEL_FORMAT || file.version != FORMAT_VERSION {
        return Err(format!(
            "expected format `{MODEL_FORMAT}` version {FORMAT_VERSION}, found `{}` version {}",
            file.format, file.version
        ));
    }
    if file.vocabulary.sizes() != file.model.vocab_sizes() {
        return Err("vocabulary sizes differ from the model's".into());
    }
    Ok(file)
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    write_atomic(path, model_to_string(file).as_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    model_from_str(&read_to_string(path)?).map_err(|message| Error::Format {
        path: path.into(),
        message,
    })
}
