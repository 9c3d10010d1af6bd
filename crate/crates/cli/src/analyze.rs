use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Subcommand;

use layermix::analysis::{
    greedy_trajectory, infer_scalar_observed, item_likelihood_ratio, sequence_tree,
    state_distribution_tsv, target_enrichment, top_items, Scalar, ScalarPosterior, Target,
};
use layermix::io::{load_model, read_to_string, write_atomic, ModelFile, Vocabulary};
use layermix::{Stream, StreamMap};

use crate::{emit, load};

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// P(target = 1) for each sub-state, ascending.
    Enrichment {
        #[arg(long)]
        model: PathBuf,
        /// `death` or `sex`.
        #[arg(long, default_value = "death")]
        target: String,
        /// Restrict to one stream (default: all).
        #[arg(long)]
        stream: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// P(sub-state | top state) for a stream.
    StateDist {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stream: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Most probable bed sequences of each bed state, one Graphviz file per state.
    BedTrees {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        threshold: f64,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Greedy most-likely state walk of each HMM mixture state.
    Trajectories {
        #[arg(long)]
        model: PathBuf,
        /// `labs`, `neuro` or `meds`.
        #[arg(long)]
        stream: String,
        #[arg(long, default_value_t = 20)]
        max_steps: usize,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Highest-probability items of every state of a stream.
    TopItems {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stream: String,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior of a scalar for every episode of a corpus.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// `death`, `sex` or `age`.
        #[arg(long)]
        target: String,
        /// Ignore the target value if the record has one.
        #[arg(long)]
        hide_target: bool,
        /// Comma-separated streams to treat as unobserved.
        #[arg(long, value_delimiter = ',')]
        unobserved: Vec<String>,
        #[arg(long)]
        skip_invalid: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Likelihood ratio of two item groups per HMM emission state.
    LikelihoodRatios {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stream: String,
        /// TSV lines `label<TAB>a1,a2,..<TAB>b1,b2,..`; `#` starts a comment.
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_stream(s: &str) -> Result<Stream> {
    Stream::parse(s).with_context(|| {
        let names: Vec<_> = Stream::ALL.iter().map(|s| s.name()).collect();
        format!("unknown stream `{s}` (expected one of {})", names.join(", "))
    })
}

fn hmm_stream(s: &str) -> Result<Stream> {
    let stream = parse_stream(s)?;
    if !stream.is_hmm() {
        bail!("stream `{s}` has no HMM layer (expected labs, neuro or meds)");
    }
    Ok(stream)
}

fn streams(s: &Option<String>) -> Result<Vec<Stream>> {
    match s {
        Some(s) => Ok(vec![parse_stream(s)?]),
        None => Ok(Stream::ALL.to_vec()),
    }
}

fn namer(vocab: &Vocabulary) -> impl Fn(usize) -> String + '_ {
    |i| vocab.token(i).map_or_else(|| i.to_string(), str::to_string)
}

pub fn run(command: AnalyzeCommand) -> Result<()> {
    match command {
        AnalyzeCommand::Enrichment {
            model,
            target,
            stream,
            out,
        } => {
            let t = Target::parse(&target).with_context(|| format!("unknown target `{target}`"))?;
            let streams = streams(&stream)?;
            let file = load_model(&model)?;
            let mut text = String::new();
            for s in streams {
                text.push_str(&target_enrichment(&file.model, s, t).to_tsv());
            }
            emit(out.as_deref(), &text)
        }
        AnalyzeCommand::StateDist { model, stream, out } => {
            let streams = streams(&stream)?;
            let file = load_model(&model)?;
            let mut text = String::new();
            for s in streams {
                text.push_str(&state_distribution_tsv(&file.model, s));
            }
            emit(out.as_deref(), &text)
        }
        AnalyzeCommand::BedTrees {
            model,
            threshold,
            max_depth,
            out_dir,
        } => {
            let file = load_model(&model)?;
            let beds = file.model.beds();
            let name = namer(&file.vocabulary.beds);
            let docs = beds
                .states()
                .iter()
                .enumerate()
                .map(|(k, state)| {
                    let tree = sequence_tree(state, threshold, max_depth)?;
                    Ok((k, tree.to_dot(&format!("beds_state_{k}"), &name)))
                })
                .collect::<Result<Vec<_>>>()?;
            std::fs::create_dir_all(&out_dir)
                .with_context(|| format!("cannot create {}", out_dir.display()))?;
            for (k, dot) in docs {
                write_atomic(&out_dir.join(format!("beds_state_{k}.dot")), dot.as_bytes())?;
            }
            Ok(())
        }
        AnalyzeCommand::Trajectories {
            model,
            stream,
            max_steps,
            top_k,
            out,
        } => {
            let stream = hmm_stream(&stream)?;
            let file = load_model(&model)?;
            let mixture = file.model.hmm(stream).expect("hmm stream");
            let name = namer(file.vocabulary.of(stream));
            let mut text = String::new();
            for k in 0..mixture.states().len() {
                let tr = greedy_trajectory(mixture, k, max_steps, top_k)?;
                writeln!(text, "# state {k}")?;
                text.push_str(&tr.to_tsv(&name));
            }
            emit(out.as_deref(), &text)
        }
        AnalyzeCommand::TopItems {
            model,
            stream,
            top_k,
            out,
        } => {
            let stream = parse_stream(&stream)?;
            let file = load_model(&model)?;
            let text = top_items_tsv(&file, stream, top_k)?;
            emit(out.as_deref(), &text)
        }
        AnalyzeCommand::Infer {
            model,
            corpus,
            target,
            hide_target,
            unobserved,
            skip_invalid,
            out,
        } => {
            let scalar = Scalar::parse(&target).with_context(|| format!("unknown target `{target}`"))?;
            let mut observed = StreamMap::from_fn(|_| true);
            for s in &unobserved {
                observed[parse_stream(s)?] = false;
            }
            let file = load_model(&model)?;
            let data = load(&corpus, &file.vocabulary, skip_invalid)?;
            let mut text = format!("line\t{}\n", scalar.name());
            for (e, line) in data.episodes.iter().zip(&data.lines) {
                let mut e = e.clone();
                if hide_target {
                    match scalar {
                        Scalar::Death => e.death = None,
                        Scalar::Sex => e.sex = None,
                        Scalar::Age => e.age = None,
                    }
                }
                let post = infer_scalar_observed(&file.model, &e, &observed, scalar)
                    .with_context(|| format!("{}:{line}", corpus.display()))?;
                let value = match post {
                    ScalarPosterior::Binary(p) => p,
                    age => age.mean(),
                };
                writeln!(text, "{line}\t{value}")?;
            }
            emit(out.as_deref(), &text)
        }
        AnalyzeCommand::LikelihoodRatios {
            model,
            stream,
            partition,
            out,
        } => {
            let stream = hmm_stream(&stream)?;
            let file = load_model(&model)?;
            let vocab = file.vocabulary.of(stream);
            let groups = parse_partition(&read_to_string(&partition)?, vocab)
                .with_context(|| format!("in {}", partition.display()))?;
            let emission = file.model.hmm(stream).expect("hmm stream").emission();
            let mut text = String::from("state");
            for (label, _, _) in &groups {
                write!(text, "\t{label}")?;
            }
            text.push('\n');
            for (s, state) in emission.states().iter().enumerate() {
                write!(text, "{s}")?;
                for (_, a, b) in &groups {
                    write!(text, "\t{}", item_likelihood_ratio(&state.items, a, b)?)?;
                }
                text.push('\n');
            }
            emit(out.as_deref(), &text)
        }
    }
}

type Partition = (String, Vec<usize>, Vec<usize>);

fn parse_partition(text: &str, vocab: &Vocabulary) -> Result<Vec<Partition>> {
    let ids = |field: &str, line: usize| -> Result<Vec<usize>> {
        field
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| vocab.id(t).with_context(|| format!("line {line}: unknown item `{t}`")))
            .collect()
    };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        let [label, a, b] = fields[..] else {
            bail!("line {line}: expected 3 tab-separated fields, found {}", fields.len());
        };
        let (a, b) = (ids(a, line)?, ids(b, line)?);
        if a.is_empty() || b.is_empty() {
            bail!("line {line}: both item groups must be non-empty");
        }
        out.push((label.to_string(), a, b));
    }
    if out.is_empty() {
        bail!("no partitions");
    }
    Ok(out)
}

/// Ranked items for each state. Beds rank the initial distribution; HMM
/// streams rank their emission states.
fn top_items_tsv(file: &ModelFile, stream: Stream, k: usize) -> Result<String> {
    let m = &file.model;
    let name = namer(file.vocabulary.of(stream));
    let mut text = String::from("state\tprevalence\trank\titem\tprobability\n");
    let mut push = |state: usize, prevalence: Option<f64>, dist| -> Result<()> {
        let prev = prevalence.map_or_else(|| "-".to_string(), |p| p.to_string());
        for (rank, (item, p)) in top_items(dist, k)?.into_iter().enumerate() {
            writeln!(text, "{state}\t{prev}\t{}\t{}\t{p}", rank + 1, name(item))?;
        }
        Ok(())
    };
    if let Some(mix) = m.hmm(stream) {
        for (s, e) in mix.emission().states().iter().enumerate() {
            push(s, None, &e.items)?;
        }
    } else {
        let prevalence = m.state_prevalence(stream);
        if stream.is_diagnoses() {
            for (s, st) in m.diagnoses().states().iter().enumerate() {
                push(s, Some(prevalence[s]), &st.items)?;
            }
        } else {
            for (s, st) in m.beds().states().iter().enumerate() {
                push(s, Some(prevalence[s]), st.chain.initial())?;
            }
        }
    }
    Ok(text)
}
