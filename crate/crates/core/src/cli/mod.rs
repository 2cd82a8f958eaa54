//! The `ddtm` command line.
//!
//! Every command reads an optional TOML [`RunConfig`], applies flag
//! overrides, and writes the effective configuration next to its outputs.
//! Exit codes: 0 success, 1 input or configuration error, 2 numerical failure.

mod config;

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{
    ingest_with, read_corpus, synth_regimes, write_corpus, Corpus, SynthSampler, Vocabulary,
};
use crate::error::{Error, Result};
use crate::eval::{embed_threads, evaluate, CommentEmbedding, FeatureSource, RetrievalItem};
use crate::inference::fit_posterior;
use crate::model::{
    init_params, load_checkpoint, load_checkpoint_expecting, save_checkpoint, unigram_log_probs,
    ModelParams, Variant,
};
use crate::training::{train, write_training_log};

pub use config::{HiddenSection, Paths, RunConfig, SynthSection, DEFAULT_BITS};

#[derive(Debug, Parser)]
#[command(name = "ddtm", version, about = "Topic model over reply trees")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// ddtm, ddtm-nocpl, rs-comment, rs-thread or unigram.
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    /// Total hidden bits, split between comment and thread bits.
    #[arg(long, global = true)]
    pub bits: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize a raw JSONL thread file into a corpus directory.
    Preprocess {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record malformed lines and invalid threads instead of failing.
        #[arg(long)]
        skip_bad: bool,
    },
    /// Sample a planted-signal corpus from random ground-truth parameters.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        regimes: Option<usize>,
    },
    /// Fit parameters on the training split.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Perplexity, downstream tasks and retrieval on the test split.
    Eval {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also compare AIS with exact enumeration for every test thread.
        #[arg(long)]
        oracle: bool,
    },
    /// Dump posterior bit means of every comment as JSONL.
    Infer {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank corpus comments by Dice similarity to a query comment.
    Retrieve {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comment id to use as the query.
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Write the test-vs-train precision/recall curve here as CSV.
        #[arg(long)]
        pr_csv: Option<PathBuf>,
    },
    /// Top words per bit, and per comment reconstruction.
    Topics {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comment ids to reconstruct through the emission matrix.
        #[arg(long)]
        comment: Vec<String>,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> ExitCode {
    if e.is_numerical() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn merged_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = Some(s);
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if let Some(v) = g.variant {
        cfg.hidden.variant = v;
    }
    if let Some(b) = g.bits {
        cfg.hidden.bits = b;
    }
    cfg.workers = cfg.workers();
    cfg.seed()?;
    Ok(cfg)
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = merged_config(&cli.global)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers())
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Preprocess {
            input,
            out,
            skip_bad,
        } => {
            set(&mut cfg.paths.raw, input);
            set(&mut cfg.paths.out, out);
            cmd_preprocess(&cfg, skip_bad)
        }
        Command::Synth {
            out,
            threads,
            regimes,
        } => {
            set(&mut cfg.paths.out, out);
            if let Some(t) = threads {
                cfg.synth.threads = t;
            }
            if let Some(r) = regimes {
                cfg.synth.regimes = r;
            }
            cmd_synth(&cfg)
        }
        Command::Train {
            corpus,
            out,
            epochs,
        } => {
            set(&mut cfg.paths.corpus, corpus);
            set(&mut cfg.paths.out, out);
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cmd_train(&cfg)
        }
        Command::Eval {
            corpus,
            checkpoint,
            out,
            oracle,
        } => {
            set(&mut cfg.paths.corpus, corpus);
            set(&mut cfg.paths.checkpoint, checkpoint);
            set(&mut cfg.paths.out, out);
            cfg.eval.oracle |= oracle;
            cmd_eval(&cfg)
        }
        Command::Infer {
            corpus,
            checkpoint,
            out,
        } => {
            set(&mut cfg.paths.corpus, corpus);
            set(&mut cfg.paths.checkpoint, checkpoint);
            set(&mut cfg.paths.out, out);
            cmd_infer(&cfg)
        }
        Command::Retrieve {
            corpus,
            checkpoint,
            query,
            k,
            pr_csv,
        } => {
            set(&mut cfg.paths.corpus, corpus);
            set(&mut cfg.paths.checkpoint, checkpoint);
            cmd_retrieve(&cfg, &query, k, pr_csv.as_deref())
        }
        Command::Topics {
            corpus,
            checkpoint,
            comment,
            top,
        } => {
            set(&mut cfg.paths.corpus, corpus);
            set(&mut cfg.paths.checkpoint, checkpoint);
            cmd_topics(&cfg, &comment, top)
        }
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn corpus_summary(corpus: &Corpus) -> (usize, usize, f64) {
    let threads = corpus.train.len() + corpus.test.len();
    let comments: usize = corpus.all_threads().map(|t| t.len()).sum();
    let words: usize = corpus.all_threads().map(|t| t.total_words()).sum();
    (threads, comments, words as f64 / comments.max(1) as f64)
}

pub fn cmd_preprocess(cfg: &RunConfig, skip_bad: bool) -> Result<()> {
    let raw = RunConfig::require(&cfg.paths.raw, "raw (--input)")?;
    let out = RunConfig::require(&cfg.paths.out, "out")?;
    let vocab = cfg
        .paths
        .vocab
        .as_deref()
        .map(Vocabulary::read)
        .transpose()?;
    let ingested = ingest_with(raw, &cfg.pipeline, vocab.as_ref(), skip_bad)?;
    for s in &ingested.skipped {
        eprintln!("warning: skipped line {}: {}", s.line, s.message);
    }
    write_corpus(out, &ingested.corpus)?;
    cfg.write_effective(out)?;
    let (threads, comments, mean_len) = corpus_summary(&ingested.corpus);
    println!(
        "threads={threads} comments={comments} mean_len={mean_len:.3} vocab={} skipped={}",
        ingested.corpus.vocab_size(),
        ingested.skipped.len()
    );
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let out = RunConfig::require(&cfg.paths.out, "out")?;
    let seed = cfg.seed()?;
    let s = &cfg.synth;
    if s.regimes == 0 {
        return Err(Error::Config("synth needs at least one regime".into()));
    }
    let sampler = match s.gibbs_burn_in {
        Some(burn_in) => SynthSampler::Gibbs { burn_in },
        None => SynthSampler::default(),
    };
    let (synth, params) = synth_regimes(
        &s.planted,
        s.threads,
        s.regimes,
        sampler,
        seed,
        s.test_fraction,
    )?;
    write_corpus(out, &synth.corpus)?;
    for (r, p) in params.iter().enumerate() {
        save_checkpoint(p, &out.join(format!("true_params_regime{r}.ddtm")))?;
    }
    let hidden = &synth.hidden;
    let mut lines = String::new();
    for (id, h) in hidden {
        #[derive(Serialize)]
        struct Rec<'a> {
            thread: &'a str,
            comment_bits: Vec<Vec<u8>>,
            thread_bits: Vec<u8>,
        }
        let bits = |v: &nalgebra::DVector<f64>| v.iter().map(|&x| x as u8).collect();
        let rec = Rec {
            thread: id,
            comment_bits: h.comment_bits.iter().map(bits).collect(),
            thread_bits: bits(&h.thread_bits),
        };
        lines.push_str(&serde_json::to_string(&rec).expect("records serialize"));
        lines.push('\n');
    }
    write_file(&out.join("hidden.jsonl"), &lines)?;
    cfg.write_effective(out)?;
    let (threads, comments, mean_len) = corpus_summary(&synth.corpus);
    println!(
        "threads={threads} comments={comments} mean_len={mean_len:.3} regimes={}",
        s.regimes
    );
    Ok(())
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    read_corpus(RunConfig::require(&cfg.paths.corpus, "corpus")?)
}

fn load_model(cfg: &RunConfig, corpus: &Corpus) -> Result<ModelParams> {
    let path = RunConfig::require(&cfg.paths.checkpoint, "checkpoint")?;
    let params = load_checkpoint(path)?;
    if params.vocab_size() != corpus.vocab_size() {
        return Err(Error::Checkpoint {
            section: "header",
            message: format!(
                "checkpoint vocabulary {} does not match corpus vocabulary {}",
                params.vocab_size(),
                corpus.vocab_size()
            ),
        });
    }
    Ok(params)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let out = RunConfig::require(&cfg.paths.out, "out")?;
    let corpus = load_corpus(cfg)?;
    let hidden = cfg.hidden_config()?;
    let mut tcfg = cfg.train_config()?;
    tcfg.validate()?;
    if tcfg.checkpoint_every.is_some() && tcfg.checkpoint_dir.is_none() {
        tcfg.checkpoint_dir = Some(out.join("checkpoints"));
    }
    if corpus.train.is_empty() {
        return Err(Error::EmptyCorpus("training split is empty".into()));
    }
    let init = match &cfg.paths.checkpoint {
        Some(p) => load_checkpoint_expecting(p, corpus.vocab_size(), &hidden)?,
        None => init_params(
            hidden,
            &unigram_log_probs(&corpus.train, corpus.vocab_size()),
            tcfg.seed,
        )?,
    };
    let outcome = train(&corpus.train, &corpus.test, init, &tcfg)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    save_checkpoint(&outcome.params, &out.join("model.ddtm"))?;
    write_training_log(&out.join("train_log.csv"), &outcome.history)?;
    for r in &outcome.rejected {
        eprintln!(
            "warning: epoch {} rejected step on {:?}: {}",
            r.epoch, r.threads, r.reason
        );
    }
    cfg.write_effective(out)?;
    if let Some(last) = outcome.history.last() {
        println!(
            "epochs={} mean_approx_ll={:.6} heldout_approx_ll={} rejected={}",
            last.epoch,
            last.mean_approx_ll,
            last.heldout_approx_ll
                .map_or("-".into(), |v| format!("{v:.6}")),
            outcome.rejected.len()
        );
    } else {
        println!("epochs=0");
    }
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let out = RunConfig::require(&cfg.paths.out, "out")?;
    let corpus = load_corpus(cfg)?;
    let params = load_model(cfg, &corpus)?;
    let ais = cfg.ais_config()?;
    let (report, pr) = evaluate(
        &corpus.train,
        &corpus.test,
        &params,
        &ais,
        &cfg.schedule,
        &cfg.eval,
    )?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    report.write(&out.join("report.json"))?;
    write_file(&out.join("pr_curve.csv"), &pr.to_csv())?;
    cfg.write_effective(out)?;
    println!(
        "perplexity_nats={:.6} perplexity_exp={:.6} num_intermediate={} num_runs={}",
        report.perplexity_nats, report.perplexity_exp, ais.num_intermediate, ais.num_runs
    );
    Ok(())
}

#[derive(Serialize)]
struct CommentRecord<'a> {
    thread: &'a str,
    comment: &'a str,
    psi: &'a [f64],
    psi0_ref: bool,
}

#[derive(Serialize)]
struct ThreadRecord<'a> {
    thread: &'a str,
    psi0: &'a [f64],
}

fn sorted_embeddings(
    cfg: &RunConfig,
    corpus: &Corpus,
    params: &ModelParams,
) -> Result<Vec<CommentEmbedding>> {
    let mut threads: Vec<_> = corpus.all_threads().cloned().collect();
    threads.sort_by(|a, b| a.id.cmp(&b.id));
    embed_threads(&threads, params, &cfg.schedule)
}

pub fn cmd_infer(cfg: &RunConfig) -> Result<()> {
    let out = RunConfig::require(&cfg.paths.out, "out")?;
    let corpus = load_corpus(cfg)?;
    let params = load_model(cfg, &corpus)?;
    let emb = sorted_embeddings(cfg, &corpus, &params)?;
    let mut text = String::new();
    let mut i = 0;
    while i < emb.len() {
        let thread = &emb[i].thread;
        let line = ThreadRecord {
            thread,
            psi0: &emb[i].psi0,
        };
        text.push_str(&serde_json::to_string(&line).expect("records serialize"));
        text.push('\n');
        while i < emb.len() && &emb[i].thread == thread {
            let rec = CommentRecord {
                thread,
                comment: &emb[i].comment,
                psi: &emb[i].psi,
                psi0_ref: true,
            };
            text.push_str(&serde_json::to_string(&rec).expect("records serialize"));
            text.push('\n');
            i += 1;
        }
    }
    write_file(out, &text)?;
    if let Some(dir) = out.parent() {
        cfg.write_effective(dir)?;
    }
    println!("comments={}", emb.len());
    Ok(())
}

pub fn cmd_retrieve(cfg: &RunConfig, query: &str, k: usize, pr_csv: Option<&Path>) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let params = load_model(cfg, &corpus)?;
    if corpus.find_comment(query).is_none() {
        return Err(Error::NotFound(format!("query comment {query}")));
    }
    let source = FeatureSource::for_variant(params.variant);
    let emb = sorted_embeddings(cfg, &corpus, &params)?;
    let items: Vec<RetrievalItem> = emb
        .iter()
        .map(|e| RetrievalItem::new(&e.comment, &e.subreddit, &e.features(source)))
        .collect();
    let q = items
        .iter()
        .find(|i| i.id == query)
        .expect("query was found in the corpus");
    let ranking = crate::eval::rank(&q.bits, &items, k, None);
    if ranking.degenerate_query {
        eprintln!("warning: query {query} has no active bits");
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for (r, h) in ranking.hits.iter().enumerate() {
        writeln!(
            lock,
            "{}\t{}\t{:.6}\t{}",
            r + 1,
            h.id,
            h.score,
            items[h.index].label
        )
        .map_err(|e| Error::io("stdout", e))?;
    }
    if let Some(path) = pr_csv {
        let ids = |ts: &[crate::corpus::Thread]| -> HashSet<String> {
            ts.iter().map(|t| t.id.clone()).collect()
        };
        let (train_ids, test_ids) = (ids(&corpus.train), ids(&corpus.test));
        let pick = |ids: &HashSet<String>| -> Vec<RetrievalItem> {
            emb.iter()
                .zip(&items)
                .filter(|(e, _)| ids.contains(&e.thread))
                .map(|(_, i)| i.clone())
                .collect()
        };
        let queries: Vec<_> = pick(&test_ids)
            .into_iter()
            .take(cfg.eval.max_queries)
            .collect();
        let pr = crate::eval::precision_recall(&queries, &pick(&train_ids));
        write_file(path, &pr.to_csv())?;
    }
    Ok(())
}

/// Indices of the `top` largest entries, ties by index.
fn top_indices(scores: &[f64], top: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(top);
    idx
}

#[derive(Serialize)]
struct TopicsOutput {
    comment_bits: Vec<Vec<String>>,
    thread_bits: Vec<Vec<String>>,
    comments: BTreeMap<String, Vec<String>>,
}

pub fn cmd_topics(cfg: &RunConfig, comments: &[String], top: usize) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let params = load_model(cfg, &corpus)?;
    let words = |scores: Vec<f64>| -> Vec<String> {
        top_indices(&scores, top)
            .into_iter()
            .map(|i| corpus.vocab.token(i).to_string())
            .collect()
    };
    let rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<String>> {
        (0..m.nrows())
            .map(|f| words(m.row(f).iter().copied().collect()))
            .collect()
    };
    let mut out = TopicsOutput {
        comment_bits: rows(&params.u),
        thread_bits: rows(&params.v),
        comments: BTreeMap::new(),
    };
    for id in comments {
        let (thread, n) = corpus
            .find_comment(id)
            .ok_or_else(|| Error::NotFound(format!("comment {id}")))?;
        let fit = fit_posterior(thread, &params, &cfg.schedule)?;
        let recon = params.u.tr_mul(&fit.state.comment[n]);
        out.comments
            .insert(id.clone(), words(recon.iter().copied().collect()));
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&out).expect("topics serialize")
    );
    Ok(())
}
