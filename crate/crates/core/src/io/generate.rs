use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_to_string, save_corpus, write_atomic, VocabularySet, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::model::{Episode, EpisodeModel, LatentTrace};
use crate::rng::{rng_for, Domain};

pub const SIDECAR_FORMAT: &str = "layermix-sidecar";

/// Draws `n` episodes. Episode `i` uses its own stream derived from
/// `(seed, i)`, so the result does not depend on the thread count.
pub fn sample_corpus(model: &EpisodeModel, n: usize, seed: u64) -> (Vec<Episode>, Vec<LatentTrace>) {
    (0..n)
        .into_par_iter()
        .map(|i| model.sample_episode(&mut rng_for(seed, Domain::Sample, i as u64)))
        .unzip()
}

#[derive(Serialize, Deserialize)]
struct SidecarHeader {
    format: String,
    version: u32,
}

#[derive(Serialize)]
struct SidecarLine<'a> {
    episode: usize,
    #[serde(flatten)]
    trace: &'a LatentTrace,
}

#[derive(Deserialize)]
struct SidecarLineOwned {
    #[allow(dead_code)]
    episode: usize,
    #[serde(flatten)]
    trace: LatentTrace,
}

pub fn write_sidecar<W: Write>(out: &mut W, traces: &[LatentTrace]) -> Result<()> {
    let io = |e| Error::Io {
        path: "<sidecar output>".into(),
        source: e,
    };
    let header = SidecarHeader {
        format: SIDECAR_FORMAT.into(),
        version: FORMAT_VERSION,
    };
    writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(io)?;
    for (episode, trace) in traces.iter().enumerate() {
        let line = serde_json::to_string(&SidecarLine { episode, trace }).expect("trace serializes");
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}

pub fn save_sidecar(path: &Path, traces: &[LatentTrace]) -> Result<()> {
    let mut buf = Vec::new();
    write_sidecar(&mut buf, traces)?;
    write_atomic(path, &buf)
}

pub fn load_sidecar(path: &Path) -> Result<Vec<LatentTrace>> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let parse_err = |e: serde_json::Error| Error::Parse {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        };
        if i == 0 {
            let h: SidecarHeader = serde_json::from_str(line).map_err(parse_err)?;
            if h.format != SIDECAR_FORMAT || h.version != FORMAT_VERSION {
                return Err(Error::SchemaViolation {
                    line: 1,
                    message: format!("not a `{SIDECAR_FORMAT}` version {FORMAT_VERSION} file"),
                });
            }
            continue;
        }
        let l: SidecarLineOwned = serde_json::from_str(line).map_err(parse_err)?;
        out.push(l.trace);
    }
    Ok(out)
}

/// Samples `n` episodes and writes the corpus plus its latent-trace sidecar.
pub fn generate_corpus(
    model: &EpisodeModel,
    vocab: &VocabularySet,
    n: usize,
    seed: u64,
    corpus_path: &Path,
    sidecar_path: &Path,
) -> Result<(Vec<Episode>, Vec<LatentTrace>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("episode count must be at least 1".into()));
    }
    if vocab.sizes() != model.vocab_sizes() {
        return Err(Error::DimensionMismatch(
            "vocabulary sizes differ from the model's".into(),
        ));
    }
    let (episodes, traces) = sample_corpus(model, n, seed);
    save_corpus(corpus_path, &episodes, vocab)?;
    save_sidecar(sidecar_path, &traces)?;
    Ok((episodes, traces))
}
