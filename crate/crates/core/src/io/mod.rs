//! File formats: vocabularies, episode corpora, latent-trace sidecars and
//! model documents. Every file starts with (or is) a JSON header naming its
//! format and version; see `docs/formats.md` for the byte-level description.

mod corpus;
mod generate;
mod model_file;
mod summary;
mod vocab;

pub use corpus::{
    load_corpus, parse_corpus, save_corpus, write_corpus, LoadMode, LoadOptions, LoadedCorpus,
    RecordError, CORPUS_FORMAT,
};
pub use generate::{
    generate_corpus, load_sidecar, sample_corpus, save_sidecar, write_sidecar, SIDECAR_FORMAT,
};
pub use model_file::{load_model, model_from_str, model_to_string, save_model, ModelFile, MODEL_FORMAT};
pub use summary::{summarize, CorpusSummary, LengthStats};
pub use vocab::{build_vocab, load_vocab, save_vocab, Vocabulary, VocabularySet, UNUSED_TOKEN, VOCAB_FORMAT};

pub const FORMAT_VERSION: u32 = 1;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes via a temporary sibling so a failed write never leaves a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
