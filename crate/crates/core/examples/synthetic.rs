//! Writes a well-separated generator model and its vocabulary, a starting
//! point for `layermix sample`.
//!
//! ```text
//! cargo run --release -p layermix --example synthetic -- OUT_DIR
//! ```

use std::path::PathBuf;

use layermix::io::{save_model, save_vocab, ModelFile, VocabularySet};
use layermix::synthetic::{separated_model, SeparatedSpec};
use layermix::DataRates;

fn main() -> layermix::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&dir).map_err(|e| layermix::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let spec = SeparatedSpec {
        top_weights: vec![0.5, 0.3, 0.2],
        n_sub: 3,
        n_hmm: 3,
        block: 4,
        mixing_peak: 0.85,
        rates: DataRates {
            beds: 3.0,
            diagnoses: 4.0,
            labs: (5.0, 3.0),
            neuro: (3.0, 2.0),
            meds: (4.0, 2.0),
        },
    };
    let vocab = VocabularySet::synthetic(&spec.vocab_sizes());
    let model = separated_model(&spec)?;
    save_vocab(&dir.join("vocab.json"), &vocab)?;
    save_model(&dir.join("generator.json"), &ModelFile::new(model, vocab)?)?;
    println!("wrote {0}/vocab.json and {0}/generator.json", dir.display());
    Ok(())
}
