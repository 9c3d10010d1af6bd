//! `layermix` command-line tool.

mod analyze;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use layermix::io::{
    build_vocab, generate_corpus, load_corpus, load_model, load_vocab, read_to_string, save_model,
    save_vocab, summarize, write_atomic, LoadMode, LoadOptions, LoadedCorpus, ModelFile,
    VocabularySet,
};
use layermix::selection::{staged_select, SearchGrid, SelectionGrids, TopChoice};
use layermix::{EpisodeModel, FitConfig, FitReport, Hyperparams, ParamConvention};

#[derive(Parser)]
#[command(name = "layermix", version, args_override_self = true, about = "Layered mixture models for hospital episode records")]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a vocabulary file from the tokens of a corpus.
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model with fixed hyperparameters.
    Train {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        hp: HyperArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Model output file.
        #[arg(long)]
        out: PathBuf,
        /// Fit report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Staged BIC search over layer sizes, then a final fit.
    Select {
        #[command(flatten)]
        input: CorpusArgs,
        #[command(flatten)]
        grids: GridArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: PathBuf,
        /// Selection report (text tables).
        #[arg(long)]
        report: PathBuf,
    },
    /// Sample a synthetic corpus and its latent-trace sidecar.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sidecar: PathBuf,
    },
    /// Per-episode and total log-likelihood of a corpus.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        skip_invalid: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Length statistics of a corpus.
    Summarize {
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Interrogate a trained model.
    Analyze {
        #[command(subcommand)]
        command: analyze::AnalyzeCommand,
    },
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Drop invalid records instead of failing.
    #[arg(long)]
    skip_invalid: bool,
}

#[derive(Args)]
struct HyperArgs {
    #[arg(long, default_value_t = 1)]
    top: usize,
    #[arg(long, default_value_t = 1)]
    diagnoses: usize,
    #[arg(long, default_value_t = 1)]
    beds: usize,
    #[arg(long, default_value_t = 1)]
    labs: usize,
    #[arg(long, default_value_t = 1)]
    neuro: usize,
    #[arg(long, default_value_t = 1)]
    meds: usize,
    #[arg(long, default_value_t = 1)]
    hmm_labs: usize,
    #[arg(long, default_value_t = 1)]
    hmm_neuro: usize,
    #[arg(long, default_value_t = 1)]
    hmm_meds: usize,
}

impl HyperArgs {
    fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            n_top: self.top,
            n_diagnoses: self.diagnoses,
            n_beds: self.beds,
            n_labs: self.labs,
            n_neuro: self.neuro,
            n_meds: self.meds,
            hmm_labs: self.hmm_labs,
            hmm_neuro: self.hmm_neuro,
            hmm_meds: self.hmm_meds,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
}

impl FitArgs {
    fn config(&self) -> Result<FitConfig> {
        if self.max_iters == 0 {
            bail!("--max-iters must be at least 1");
        }
        if self.restarts == 0 {
            bail!("--restarts must be at least 1");
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            bail!("--rel-tol must be positive");
        }
        Ok(FitConfig {
            seed: self.seed,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            restarts: self.restarts,
            ..FitConfig::default()
        })
    }
}

/// Grids are `a,b,c` lists or `start:stop:step` ranges.
#[derive(Args)]
struct GridArgs {
    /// Grid used for every size without its own flag.
    #[arg(long, default_value = "10:50:10")]
    grid: String,
    #[arg(long)]
    grid_diagnoses: Option<String>,
    #[arg(long)]
    grid_beds: Option<String>,
    #[arg(long)]
    grid_labs: Option<String>,
    #[arg(long)]
    grid_neuro: Option<String>,
    #[arg(long)]
    grid_meds: Option<String>,
    #[arg(long)]
    grid_hmm_labs: Option<String>,
    #[arg(long)]
    grid_hmm_neuro: Option<String>,
    #[arg(long)]
    grid_hmm_meds: Option<String>,
    /// Fixed number of top states.
    #[arg(long, conflicts_with = "top_grid", default_value_t = 10)]
    top: usize,
    /// Search the number of top states over this grid instead.
    #[arg(long)]
    top_grid: Option<String>,
    /// Parameter counting used by BIC: `shared` or `paper-table`.
    #[arg(long, default_value = "shared")]
    convention: String,
}

impl GridArgs {
    fn grids(&self) -> Result<(SelectionGrids, TopChoice, ParamConvention)> {
        let parse = |s: &str| SearchGrid::parse(s).with_context(|| format!("invalid grid `{s}`"));
        let base = parse(&self.grid)?;
        let pick = |o: &Option<String>| o.as_deref().map_or_else(|| Ok(base.clone()), parse);
        let grids = SelectionGrids {
            diagnoses: pick(&self.grid_diagnoses)?,
            beds: pick(&self.grid_beds)?,
            labs: pick(&self.grid_labs)?,
            neuro: pick(&self.grid_neuro)?,
            meds: pick(&self.grid_meds)?,
            hmm_labs: pick(&self.grid_hmm_labs)?,
            hmm_neuro: pick(&self.grid_hmm_neuro)?,
            hmm_meds: pick(&self.grid_hmm_meds)?,
        };
        let top = match &self.top_grid {
            Some(g) => TopChoice::Grid(parse(g)?),
            None if self.top == 0 => bail!("--top must be at least 1"),
            None => TopChoice::Fixed(self.top),
        };
        let convention = ParamConvention::parse(&self.convention)
            .with_context(|| format!("unknown convention `{}`", self.convention))?;
        Ok((grids, top, convention))
    }
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Done,
    /// EM stopped at the iteration limit.
    NotConverged,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || run(cli.command);
    let result = match cli.threads {
        Some(0) => Err(anyhow::anyhow!("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("cannot start thread pool")
            .and_then(|pool| pool.install(run)),
        None => run(),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("warning: stopped at the iteration limit before converging");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::BuildVocab { corpus, out } => {
            let text = read_to_string(&corpus)?;
            let vocab = build_vocab(&text).with_context(|| format!("reading {}", corpus.display()))?;
            save_vocab(&out, &vocab)?;
            Ok(Outcome::Done)
        }
        Command::Train {
            input,
            hp,
            fit,
            out,
            report,
        } => {
            let cfg = fit.config()?;
            let hp = hp.hyperparams();
            hp.validate()?;
            let (vocab, corpus) = load_input(&input)?;
            let (model, fit_report) = EpisodeModel::fit(&corpus.episodes, &hp, &vocab.sizes(), &cfg)?;
            let file = ModelFile::new(model, vocab)?;
            save_model(&out, &file)?;
            if let Some(path) = report {
                write_atomic(&path, fit_report_json(&fit_report).as_bytes())?;
            }
            Ok(converged(&fit_report))
        }
        Command::Select {
            input,
            grids,
            fit,
            out,
            report,
        } => {
            let cfg = fit.config()?;
            let (grids, top, convention) = grids.grids()?;
            let (vocab, corpus) = load_input(&input)?;
            vocab.check_non_empty()?;
            let sel = staged_select(&corpus.episodes, &vocab.sizes(), &grids, &top, &cfg, convention)?;
            let file = ModelFile::new(sel.model, vocab)?;
            save_model(&out, &file)?;
            write_atomic(&report, sel.report.to_string().as_bytes())?;
            Ok(converged(&sel.fit_report))
        }
        Command::Sample {
            model,
            n,
            seed,
            out,
            sidecar,
        } => {
            if n == 0 {
                bail!("--n must be at least 1");
            }
            let file = load_model(&model)?;
            generate_corpus(&file.model, &file.vocabulary, n, seed, &out, &sidecar)?;
            Ok(Outcome::Done)
        }
        Command::Score {
            model,
            corpus,
            skip_invalid,
            out,
        } => {
            let file = load_model(&model)?;
            let data = load(&corpus, &file.vocabulary, skip_invalid)?;
            let mut text = String::from("line\tlog_lik\n");
            let mut total = 0.0;
            for (e, line) in data.episodes.iter().zip(&data.lines) {
                let ll = file
                    .model
                    .episode_log_lik(e)
                    .with_context(|| format!("{}:{line}", corpus.display()))?;
                total += ll;
                text.push_str(&format!("{line}\t{ll}\n"));
            }
            text.push_str(&format!("# episodes\t{}\n# total\t{total}\n", data.episodes.len()));
            emit(out.as_deref(), &text)?;
            Ok(Outcome::Done)
        }
        Command::Summarize { input, out } => {
            let (_, corpus) = load_input(&input)?;
            let summary = summarize(&corpus.episodes)?;
            emit(out.as_deref(), &summary.to_tsv())?;
            Ok(Outcome::Done)
        }
        Command::Analyze { command } => {
            analyze::run(command)?;
            Ok(Outcome::Done)
        }
    }
}

fn converged(report: &FitReport) -> Outcome {
    if report.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged
    }
}

fn fit_report_json(r: &FitReport) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("report serializes");
    s.push('\n');
    s
}

fn load(path: &Path, vocab: &VocabularySet, skip_invalid: bool) -> Result<LoadedCorpus> {
    let opts = LoadOptions {
        mode: if skip_invalid { LoadMode::Skip } else { LoadMode::Strict },
        ..LoadOptions::default()
    };
    let corpus = load_corpus(path, vocab, &opts).with_context(|| format!("loading {}", path.display()))?;
    for e in &corpus.errors {
        eprintln!("skipped {}:{}: {}", path.display(), e.line, e.error);
    }
    Ok(corpus)
}

fn load_input(input: &CorpusArgs) -> Result<(VocabularySet, LoadedCorpus)> {
    let vocab = load_vocab(&input.vocab)?;
    let corpus = load(&input.corpus, &vocab, input.skip_invalid)?;
    Ok((vocab, corpus))
}

/// Writes to `path`, or to stdout when no path is given.
pub(crate) fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => Ok(write_atomic(p, text.as_bytes())?),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}
