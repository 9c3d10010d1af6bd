use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_to_string, write_atomic, VocabularySet, FORMAT_VERSION};
use crate::distributions::DEFAULT_AGE_SUPPORT;
use crate::error::{Error, Result};
use crate::model::{Episode, Stream};

pub const CORPUS_FORMAT: &str = "layermix-corpus";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LoadMode {
    /// The first invalid record (in line order) aborts the load.
    #[default]
    Strict,
    /// Invalid records are dropped and reported in [`LoadedCorpus::errors`].
    Skip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    pub mode: LoadMode,
    /// Inclusive range of admissible ages.
    pub age_support: (i64, i64),
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            mode: LoadMode::Strict,
            age_support: DEFAULT_AGE_SUPPORT,
        }
    }
}

/// A rejected record in skip mode.
#[derive(Debug)]
pub struct RecordError {
    pub line: usize,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub episodes: Vec<Episode>,
    /// Source line of each episode (1-based).
    pub lines: Vec<usize>,
    pub errors: Vec<RecordError>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    #[serde(default)]
    age: Option<i64>,
    #[serde(default)]
    sex: Option<u8>,
    #[serde(default)]
    death: Option<u8>,
    #[serde(default)]
    beds: Vec<String>,
    #[serde(default)]
    admission_dx: Vec<String>,
    #[serde(default)]
    discharge_dx: Vec<String>,
    #[serde(default)]
    labs: Vec<Vec<String>>,
    #[serde(default)]
    neuro: Vec<Vec<String>>,
    #[serde(default)]
    meds: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
}

fn flag(line: usize, name: &str, v: Option<u8>) -> Result<Option<bool>> {
    match v {
        None => Ok(None),
        Some(0) => Ok(Some(false)),
        Some(1) => Ok(Some(true)),
        Some(x) => Err(Error::SchemaViolation {
            line,
            message: format!("{name} must be 0, 1 or null, found {x}"),
        }),
    }
}

fn resolve(line: usize, stream: Stream, tokens: &[String], vocab: &VocabularySet) -> Result<Vec<usize>> {
    let v = vocab.of(stream);
    tokens
        .iter()
        .map(|t| {
            v.id(t).ok_or_else(|| Error::UnknownTokenName {
                line,
                stream,
                token: t.clone(),
            })
        })
        .collect()
}

fn resolve_nested(
    line: usize,
    stream: Stream,
    seq: &[Vec<String>],
    vocab: &VocabularySet,
) -> Result<Vec<Vec<usize>>> {
    seq.iter().map(|tp| resolve(line, stream, tp, vocab)).collect()
}

fn parse_record(line: usize, text: &str, vocab: &VocabularySet, opts: &LoadOptions) -> Result<Episode> {
    let r: Record = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        column: e.column(),
        message: e.to_string(),
    })?;
    if let Some(a) = r.age {
        if a < opts.age_support.0 || a > opts.age_support.1 {
            return Err(Error::SchemaViolation {
                line,
                message: format!(
                    "age {a} outside [{}, {}]",
                    opts.age_support.0, opts.age_support.1
                ),
            });
        }
    }
    Ok(Episode {
        age: r.age,
        sex: flag(line, "sex", r.sex)?,
        death: flag(line, "death", r.death)?,
        beds: resolve(line, Stream::Beds, &r.beds, vocab)?,
        admission_dx: resolve(line, Stream::AdmissionDx, &r.admission_dx, vocab)?,
        discharge_dx: resolve(line, Stream::DischargeDx, &r.discharge_dx, vocab)?,
        labs: resolve_nested(line, Stream::Labs, &r.labs, vocab)?,
        neuro: resolve_nested(line, Stream::Neuro, &r.neuro, vocab)?,
        meds: resolve_nested(line, Stream::Meds, &r.meds, vocab)?,
    })
}

fn check_header(line: usize, text: &str) -> Result<()> {
    let h: Header = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        column: e.column(),
        message: e.to_string(),
    })?;
    if h.format != CORPUS_FORMAT || h.version != FORMAT_VERSION {
        return Err(Error::SchemaViolation {
            line,
            message: format!(
                "expected format `{CORPUS_FORMAT}` version {FORMAT_VERSION}, found `{}` version {}",
                h.format, h.version
            ),
        });
    }
    Ok(())
}

/// Parses corpus text. Blank lines are ignored; an optional header line may
/// precede the records.
pub fn parse_corpus(text: &str, vocab: &VocabularySet, opts: &LoadOptions) -> Result<LoadedCorpus> {
    let mut lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if let Some(&(n, first)) = lines.first() {
        if first.contains("\"format\"") && serde_json::from_str::<Header>(first).is_ok() {
            check_header(n, first)?;
            lines.remove(0);
        }
    }
    let parsed: Vec<Result<Episode>> = lines
        .par_iter()
        .map(|&(n, l)| parse_record(n, l, vocab, opts))
        .collect();
    let mut out = LoadedCorpus::default();
    for ((n, _), r) in lines.into_iter().zip(parsed) {
        match r {
            Ok(e) => {
                out.episodes.push(e);
                out.lines.push(n);
            }
            Err(e) if opts.mode == LoadMode::Strict => return Err(e),
            Err(error) => out.errors.push(RecordError { line: n, error }),
        }
    }
    Ok(out)
}

pub fn load_corpus(path: &Path, vocab: &VocabularySet, opts: &LoadOptions) -> Result<LoadedCorpus> {
    parse_corpus(&read_to_string(path)?, vocab, opts)
}

fn tokens(stream: Stream, ids: &[usize], vocab: &VocabularySet) -> Result<Vec<String>> {
    let v = vocab.of(stream);
    ids.iter()
        .map(|&i| {
            v.token(i).map(str::to_string).ok_or(Error::UnknownStreamToken {
                stream,
                id: i,
                vocab_size: v.len(),
            })
        })
        .collect()
}

fn nested_tokens(stream: Stream, seq: &[Vec<usize>], vocab: &VocabularySet) -> Result<Vec<Vec<String>>> {
    seq.iter().map(|tp| tokens(stream, tp, vocab)).collect()
}

fn record_line(e: &Episode, vocab: &VocabularySet) -> Result<String> {
    let r = Record {
        age: e.age,
        sex: e.sex.map(u8::from),
        death: e.death.map(u8::from),
        beds: tokens(Stream::Beds, &e.beds, vocab)?,
        admission_dx: tokens(Stream::AdmissionDx, &e.admission_dx, vocab)?,
        discharge_dx: tokens(Stream::DischargeDx, &e.discharge_dx, vocab)?,
        labs: nested_tokens(Stream::Labs, &e.labs, vocab)?,
        neuro: nested_tokens(Stream::Neuro, &e.neuro, vocab)?,
        meds: nested_tokens(Stream::Meds, &e.meds, vocab)?,
    };
    Ok(serde_json::to_string(&r).expect("record serializes"))
}

/// Writes a header line followed by one record per line.
pub fn write_corpus<W: Write>(out: &mut W, episodes: &[Episode], vocab: &VocabularySet) -> Result<()> {
    let lines: Vec<String> = episodes
        .par_iter()
        .map(|e| record_line(e, vocab))
        .collect::<Result<_>>()?;
    let header = serde_json::to_string(&Header {
        format: CORPUS_FORMAT.into(),
        version: FORMAT_VERSION,
    })
    .expect("header serializes");
    let io = |e| Error::Io {
        path: "<corpus output>".into(),
        source: e,
    };
    writeln!(out, "{header}").map_err(io)?;
    for l in lines {
        writeln!(out, "{l}").map_err(io)?;
    }
    Ok(())
}

pub fn save_corpus(path: &Path, episodes: &[Episode], vocab: &VocabularySet) -> Result<()> {
    let mut buf = Vec::new();
    write_corpus(&mut buf, episodes, vocab)?;
    write_atomic(path, &buf)
}
