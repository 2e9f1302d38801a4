//! The `causal-dialog` command-line interface.
//!
//! Exit codes: 0 success, 1 other failure, 2 schema violation in an input
//! file, 3 self-training divergence, 4 adapter start or handshake failure,
//! 5 missing checkpoint.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::adapter::{self, AdapterError, DecodeParams, Generator, Served, SubprocessAdapter};
use crate::cause_id::{self, Baseline, CausePrediction};
use crate::ci::{
    self, BagOfWordsEncoder, BowConfig, CiClassifier, CiError, ClassifierKind, Encoder, TrainConfig, DEFAULT_SEPARATOR,
};
use crate::constrain::{self, ConstrainError, SelfTrainConfig, Variant};
use crate::corpus::{self, Corpus, CorpusError, HistoryResponsePair, Speaker, Utterance};
use crate::metrics::{self, MetricsError};
use crate::perturbation::{self, CauseOracleGenerator, StudyConfig};
use crate::pipeline::{self, TemplateGenerator};
use crate::run::RunDir;
use crate::seed;
use crate::synthetic::{self, SyntheticWorld, WorldConfig};
use crate::text::tokens_in_spans;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_SCHEMA: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_HANDSHAKE: u8 = 4;
pub const EXIT_MISSING_CHECKPOINT: u8 = 5;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "causal-dialog",
    version,
    about = "Direct-cause identification for dialogue responses"
)]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Run directory (default: $CG_RUNS_DIR/<command>-<config hash>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON config file with a `version` field; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and write it back normalized.
    Ingest(CorpusArgs),
    /// Descriptive statistics of the annotated pairs.
    Stats(CorpusArgs),
    /// Agreement between two annotations of the same dialogues.
    Agreement(AgreementArgs),
    /// Dialogue-level train/valid/test split.
    Split(SplitArgs),
    /// Train the CI classifier (self-training variants) or a dependence classifier.
    TrainCi(TrainCiArgs),
    /// Predict direct causes for every pair of a corpus.
    Identify(IdentifyArgs),
    /// Reduce training histories to their identified causes.
    Preprocess(PreprocessArgs),
    /// Generate candidates for a history and select one.
    Respond(RespondArgs),
    /// History perturbation study.
    Perturb(PerturbArgs),
    /// Evaluate cause predictions against gold annotations.
    Eval(EvalArgs),
    /// Sample a synthetic corpus from a world with known causal graphs.
    Synth(SynthArgs),
    /// Best-Worst Scaling scores from pairwise judgments.
    Bws(BwsArgs),
    /// Serve a built-in encoder or generator over the adapter protocol on stdio.
    ServeAdapter(ServeArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-separated train,valid,test ratios.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub ratios: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Ci,
    Dependence,
}

#[derive(Debug, Args)]
pub struct TrainCiArgs {
    /// Corpus with gold cause annotations.
    #[arg(long)]
    pub labeled: PathBuf,
    /// Corpus whose pairs are used without labels.
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    /// Validation corpus; default holds out 20% of the labeled dialogues.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ci")]
    pub kind: KindArg,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Comma-separated offsets `t - j`, e.g. `2,3`.
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `bow` or an adapter command line.
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Inference,
    TrainPreprocess,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// CI checkpoint directory; not needed with `--baseline`.
    #[arg(long)]
    pub ci: Option<PathBuf>,
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long, value_enum, default_value = "inference")]
    pub mode: ModeArg,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// `always_prev` or `always_prev_two`.
    #[arg(long)]
    pub baseline: Option<Baseline>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub ci: PathBuf,
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long, default_value = "\n")]
    pub separator: String,
}

#[derive(Debug, Args)]
pub struct RespondArgs {
    /// JSON history: a list of strings or `{"utterances": [{"speaker", "text"}]}`.
    #[arg(long)]
    pub history: PathBuf,
    /// `template` or an adapter command line.
    #[arg(long, default_value = "template")]
    pub generator: String,
    #[arg(long)]
    pub ci: PathBuf,
    /// Dependence checkpoint; adds the dependence-reranked choice to the output.
    #[arg(long)]
    pub dep: Option<PathBuf>,
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// `plain5` or `reg10`.
    #[arg(long, default_value = "plain5")]
    pub decode: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Study config: `{"version":1,"seed":0,"specs":[...]}`.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// `oracle`, `template` or an adapter command line.
    #[arg(long, default_value = "template")]
    pub generator: String,
    #[arg(long, default_value = "plain5")]
    pub decode: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions JSONL written by `identify`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Corpus with gold annotations.
    #[arg(long)]
    pub gold: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    pub dialogues: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// World JSON; default builds one from `--noise` and `--world-seed`.
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// Seed of the default world (vocabulary); corpora sharing it share a world.
    #[arg(long, default_value_t = 0)]
    pub world_seed: u64,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BwsArgs {
    #[arg(long)]
    pub judgments: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ServeKind {
    Encoder,
    Generator,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, value_enum)]
    pub kind: ServeKind,
    /// Corpus to fit the bag-of-words encoder on.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Input file that does not match its schema.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct SchemaError(pub String);

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<SchemaError>() || cause.is::<serde_json::Error>() {
            return EXIT_SCHEMA;
        }
        if let Some(e) = cause.downcast_ref::<CorpusError>() {
            if matches!(
                e,
                CorpusError::MalformedRecord { .. } | CorpusError::DanglingAnnotation { .. }
            ) {
                return EXIT_SCHEMA;
            }
        }
        if let Some(MetricsError::InvalidRecord(_)) = cause.downcast_ref::<MetricsError>() {
            return EXIT_SCHEMA;
        }
        if let Some(ConstrainError::Diverged { .. }) = cause.downcast_ref::<ConstrainError>() {
            return EXIT_DIVERGED;
        }
        if let Some(AdapterError::Spawn { .. } | AdapterError::Handshake(_)) = cause.downcast_ref::<AdapterError>() {
            return EXIT_HANDSHAKE;
        }
        if let Some(CiError::MissingCheckpoint(_)) = cause.downcast_ref::<CiError>() {
            return EXIT_MISSING_CHECKPOINT;
        }
    }
    EXIT_FAILURE
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> u8 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.jobs {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let config = ConfigFile::load(cli.config.as_deref())?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a, out),
        Command::Stats(a) => cmd_stats(a, out),
        Command::Agreement(a) => cmd_agreement(a, out),
        Command::Split(a) => cmd_split(a, &config, out),
        Command::TrainCi(a) => cmd_train_ci(a, &config, out),
        Command::Identify(a) => cmd_identify(a, &config, out),
        Command::Preprocess(a) => cmd_preprocess(a, out),
        Command::Respond(a) => cmd_respond(a, &config, out),
        Command::Perturb(a) => cmd_perturb(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Synth(a) => cmd_synth(a, &config, out),
        Command::Bws(a) => cmd_bws(a, out),
        Command::ServeAdapter(a) => cmd_serve(a),
    }
}

/// Values from `--config`, keyed by flag name with `_` for `-`.
#[derive(Debug, Default, Deserialize)]
pub struct ConfigFile {
    #[serde(default)]
    pub version: Option<u32>,
    #[serde(flatten)]
    pub values: BTreeMap<String, Value>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: ConfigFile =
            serde_json::from_str(&text).map_err(|e| SchemaError(format!("{}: {e}", path.display())))?;
        match cfg.version {
            Some(CONFIG_VERSION) => Ok(cfg),
            Some(v) => Err(SchemaError(format!("{}: config version {v} is not supported", path.display())).into()),
            None => Err(SchemaError(format!("{}: config has no version field", path.display())).into()),
        }
    }

    /// `flag` if given, otherwise the config value under `key`.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> anyhow::Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| SchemaError(format!("config key {key:?}: {e}")).into()),
        }
    }
}

fn load_corpus(path: &Path) -> anyhow::Result<corpus::Loaded> {
    let loaded = corpus::load_corpus(path).with_context(|| format!("loading {}", path.display()))?;
    for w in &loaded.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(loaded)
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, value)?;
    writeln!(lock)?;
    Ok(())
}

fn corpus_bytes(corpus: &Corpus, pairs: &[HistoryResponsePair]) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    corpus::write_corpus(&mut buf, corpus, pairs)?;
    Ok(buf)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> anyhow::Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| anyhow!("invalid {what} {x:?}")))
        .collect()
}

fn cmd_ingest(a: CorpusArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let loaded = load_corpus(&a.corpus)?;
    let mut run = RunDir::create("ingest", json!({"corpus": a.corpus}), 0, out)?;
    run.add_input(&a.corpus)?;
    let summary = json!({
        "n_dialogues": loaded.corpus.len(),
        "n_utterances": loaded.corpus.dialogues().iter().map(|d| d.len()).sum::<usize>(),
        "n_annotated_pairs": loaded.pairs.len(),
        "warnings": loaded.warnings,
    });
    run.write("corpus.jsonl", &corpus_bytes(&loaded.corpus, &loaded.pairs)?)?;
    run.write_json("summary.json", &summary)?;
    run.finish()?;
    print_json(&summary)
}

fn cmd_stats(a: CorpusArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let loaded = load_corpus(&a.corpus)?;
    let report = corpus::corpus_stats(&loaded.pairs, &loaded.corpus)?;
    let mut run = RunDir::create("stats", json!({"corpus": a.corpus}), 0, out)?;
    run.add_input(&a.corpus)?;
    run.write_json("stats.json", &report)?;
    run.finish()?;
    print_json(&report)
}

#[derive(Debug, Serialize)]
struct AgreementReport {
    n_pairs: usize,
    n_items: usize,
    kappa: f64,
    kappa_degenerate: bool,
    /// Mean span F1 over cause slots marked by both annotators.
    span_f1: Option<f64>,
    n_span_slots: usize,
}

fn cmd_agreement(a: AgreementArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let la = load_corpus(&a.a)?;
    let lb = load_corpus(&a.b)?;
    let by_key: BTreeMap<_, _> = lb.pairs.iter().map(|p| (p.key(), p)).collect();
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    let mut f1s = Vec::new();
    let mut n_pairs = 0;
    for pa in &la.pairs {
        let Some(pb) = by_key.get(&pa.key()) else { continue };
        n_pairs += 1;
        for j in 0..pa.t {
            xa.push(pa.cause_indices.contains(&j));
            xb.push(pb.cause_indices.contains(&j));
        }
        let Some(d) = la.corpus.resolve(pa) else { continue };
        for j in pa.cause_indices.intersection(&pb.cause_indices) {
            let text = &d.utterances[*j].text;
            let tok = |p: &HistoryResponsePair| match p.cause_spans.get(j) {
                Some(s) if !s.is_empty() => tokens_in_spans(text, s),
                _ => (0..crate::text::token_count(text)).collect(),
            };
            f1s.push(metrics::span_f1(&[tok(pa), tok(pb)])?);
        }
    }
    if xa.is_empty() {
        bail!("the two annotations share no pairs");
    }
    let k = metrics::cohen_kappa(&xa, &xb)?;
    let report = AgreementReport {
        n_pairs,
        n_items: xa.len(),
        kappa: k.kappa,
        kappa_degenerate: k.degenerate,
        span_f1: (!f1s.is_empty()).then(|| f1s.iter().sum::<f64>() / f1s.len() as f64),
        n_span_slots: f1s.len(),
    };
    let mut run = RunDir::create("agreement", json!({"a": a.a, "b": a.b}), 0, out)?;
    run.add_input(&a.a)?;
    run.add_input(&a.b)?;
    run.write_json("agreement.json", &report)?;
    run.finish()?;
    print_json(&report)
}

fn cmd_split(a: SplitArgs, cfg: &ConfigFile, out: Option<&Path>) -> anyhow::Result<()> {
    let seed = cfg.pick(a.seed, "seed")?.unwrap_or(0);
    let r: Vec<f64> = parse_list(&a.ratios, "ratio")?;
    if r.len() != 3 {
        bail!("--ratios needs three values, got {}", r.len());
    }
    let loaded = load_corpus(&a.corpus)?;
    let split = corpus::split_corpus(&loaded.pairs, corpus::SplitRatios::new(r[0], r[1], r[2]), seed)?;
    let mut run = RunDir::create(
        "split",
        json!({"corpus": a.corpus, "ratios": r, "seed": seed}),
        seed,
        out,
    )?;
    run.add_input(&a.corpus)?;
    let mut counts = BTreeMap::new();
    for (name, pairs) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        let ids = corpus::CorpusSplit::dialogue_ids(pairs);
        let sub = loaded.corpus.subset(&ids);
        run.write(&format!("{name}.jsonl"), &corpus_bytes(&sub, pairs)?)?;
        counts.insert(name, json!({"dialogues": ids.len(), "pairs": pairs.len()}));
    }
    run.write_json("split.json", &counts)?;
    run.finish()?;
    print_json(&counts)
}

fn make_encoder(spec: &str, texts: &[&str], seed: u64) -> anyhow::Result<Arc<dyn Encoder>> {
    if spec == "bow" {
        let config = BowConfig {
            seed,
            ..Default::default()
        };
        Ok(Arc::new(BagOfWordsEncoder::fit(texts.iter().copied(), config)))
    } else {
        Ok(Arc::new(SubprocessAdapter::spawn_command_line(spec)?))
    }
}

fn load_classifier(dir: &Path, encoder: Option<&str>) -> anyhow::Result<CiClassifier> {
    let head = ci::read_head(dir)?;
    let enc: Option<Arc<dyn Encoder>> = match (encoder, head.encoder.embedded.is_some()) {
        (Some(cmd), _) if cmd != "bow" => Some(Arc::new(SubprocessAdapter::spawn_command_line(cmd)?)),
        _ => None,
    };
    Ok(ci::load_checkpoint(dir, enc)?)
}

fn all_texts(corpora: &[&Corpus]) -> Vec<String> {
    corpora
        .iter()
        .flat_map(|c| c.dialogues())
        .flat_map(|d| d.utterances.iter().map(|u| u.text.clone()))
        .collect()
}

/// Holds out 20% of the labeled dialogues (at least one) for validation.
fn hold_out(pairs: &[HistoryResponsePair], seed: u64) -> (Vec<HistoryResponsePair>, Vec<HistoryResponsePair>) {
    let mut ids: Vec<String> = corpus::CorpusSplit::dialogue_ids(pairs).into_iter().collect();
    let mut rng = seed::rng(seed, seed::SPLIT, &["validation"]);
    ids.shuffle(&mut rng);
    let n_valid = (ids.len() / 5).max(1).min(ids.len().saturating_sub(1));
    let valid: HashSet<&String> = ids[..n_valid].iter().collect();
    pairs.iter().cloned().partition(|p| !valid.contains(&p.dialogue_id))
}

fn cmd_train_ci(a: TrainCiArgs, cfg: &ConfigFile, out: Option<&Path>) -> anyhow::Result<()> {
    let seed = cfg.pick(a.seed, "seed")?.unwrap_or(0);
    let labeled = load_corpus(&a.labeled)?;
    let unlabeled = a.unlabeled.as_deref().map(load_corpus).transpose()?;
    let valid = a.valid.as_deref().map(load_corpus).transpose()?;

    let mut corpus = labeled.corpus.clone();
    if let Some(u) = &unlabeled {
        corpus = corpus.merged(&u.corpus);
    }
    if let Some(v) = &valid {
        corpus = corpus.merged(&v.corpus);
    }
    let (train_pairs, valid_pairs) = match &valid {
        Some(v) => (labeled.pairs.clone(), v.pairs.clone()),
        None => hold_out(&labeled.pairs, seed),
    };
    let labeled_keys: HashSet<_> = train_pairs.iter().chain(&valid_pairs).map(|p| p.key()).collect();
    let unlabeled_pairs: Vec<HistoryResponsePair> = unlabeled
        .as_ref()
        .map(|u| {
            u.corpus
                .enumerate_pairs(corpus::Responder::Speaker(Speaker::Supporter))
                .into_iter()
                .filter(|p| !labeled_keys.contains(&p.key()))
                .map(|p| HistoryResponsePair::unlabeled(p.dialogue_id, p.t))
                .collect()
        })
        .unwrap_or_default();

    let encoder_spec = cfg.pick(a.encoder.clone(), "encoder")?.unwrap_or_else(|| "bow".into());
    let mut fit_corpora = vec![&labeled.corpus];
    if let Some(u) = &unlabeled {
        fit_corpora.push(&u.corpus);
    }
    let texts = all_texts(&fit_corpora);
    let text_refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let encoder = make_encoder(&encoder_spec, &text_refs, seed)?;

    let mut train = TrainConfig {
        seed,
        ..Default::default()
    };
    train.lr = cfg
        .pick(a.lr, "lr")?
        .or_else(|| encoder.recommended_lr())
        .unwrap_or(train.lr);
    if let Some(e) = cfg.pick(a.epochs, "epochs")? {
        train.epochs = e;
    }
    if let Some(b) = cfg.pick(a.batch_size, "batch_size")? {
        train.batch_size = b;
    }

    let mut st = SelfTrainConfig {
        seed,
        ..Default::default()
    };
    if let Some(v) = cfg.pick(a.variant.map(|v| v.as_str().to_string()), "variant")? {
        st.variant = v.parse().map_err(|e: String| anyhow!(e))?;
    }
    if let Some(t) = cfg.pick(a.threshold, "threshold")? {
        st.threshold = t;
    }
    if let Some(w) = a.window.as_deref() {
        st.context_window = parse_list::<usize>(w, "window offset")?.into_iter().collect();
    } else if let Some(w) = cfg.pick::<BTreeSet<usize>>(None, "window")? {
        st.context_window = w;
    }
    if let Some(m) = cfg.pick(a.max_iters, "max_iters")? {
        st.max_iterations = m;
    }
    st.train = train.clone();

    let kind = match a.kind {
        KindArg::Ci => "ci",
        KindArg::Dependence => "dependence",
    };
    let config_json = json!({
        "kind": kind,
        "labeled": a.labeled,
        "unlabeled": a.unlabeled,
        "valid": a.valid,
        "encoder": encoder_spec,
        "self_train": st,
    });
    let mut run = RunDir::create("train-ci", config_json, seed, out)?;
    run.add_input(&a.labeled)?;
    for p in [&a.unlabeled, &a.valid].into_iter().flatten() {
        run.add_input(p)?;
    }

    if a.kind == KindArg::Dependence {
        let mut pairs: Vec<HistoryResponsePair> = train_pairs.clone();
        pairs.extend(unlabeled_pairs.iter().cloned());
        let set = ci::build_dependence_set(&pairs, &corpus, seed)?;
        let vset = ci::build_dependence_set(&valid_pairs, &corpus, seed)?;
        let mut clf = CiClassifier::new(encoder, DEFAULT_SEPARATOR, ClassifierKind::Dependence);
        let report = ci::train_supervised(&mut clf, &set, &vset, &train)?;
        ci::save_checkpoint(run.join("ckpt"), &clf)?;
        run.record("ckpt");
        run.write_json("train_report.json", &report)?;
        run.finish()?;
        return print_json(&json!({"kind": kind, "run_dir": run_path_hint(out)}));
    }

    let base = CiClassifier::new(encoder, DEFAULT_SEPARATOR, ClassifierKind::ConditionalIndependence);
    let outcome = match constrain::self_train(&base, &corpus, &train_pairs, &valid_pairs, &unlabeled_pairs, &st) {
        Ok(o) => o,
        Err(ConstrainError::Diverged { trace }) => {
            run.write_jsonl("trace.jsonl", &trace)?;
            run.finish()?;
            return Err(ConstrainError::Diverged { trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    for (k, head) in outcome.heads.iter().enumerate() {
        let mut clf = outcome.classifier.clone();
        clf.head = head.clone();
        ci::save_checkpoint(run.join(format!("ckpt/iter_{k}")), &clf)?;
    }
    ci::save_checkpoint(run.join("ckpt/final"), &outcome.classifier)?;
    run.record("ckpt");
    run.write_jsonl("trace.jsonl", &outcome.trace)?;
    let final_valid = outcome.trace[outcome.best_iteration].valid;
    let summary = json!({
        "variant": st.variant.as_str(),
        "best_iteration": outcome.best_iteration,
        "iterations": outcome.trace.len(),
        "valid": final_valid,
    });
    run.write_json("summary.json", &summary)?;
    run.finish()?;
    println!(
        "variant={} best_iteration={} precision={:.4} recall={:.4} f1={:.4}",
        st.variant, outcome.best_iteration, final_valid.precision, final_valid.recall, final_valid.f1
    );
    Ok(())
}

fn run_path_hint(out: Option<&Path>) -> Value {
    out.map_or(Value::Null, |p| json!(p))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub dialogue_id: String,
    pub t: usize,
    pub causes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_star: Option<f64>,
}

impl From<&CausePrediction> for PredictionRecord {
    fn from(p: &CausePrediction) -> Self {
        Self {
            dialogue_id: p.dialogue_id.clone(),
            t: p.t,
            causes: p.causes.clone(),
            p_star: p.second_cause.map(|s| s.probability),
        }
    }
}

impl From<PredictionRecord> for CausePrediction {
    fn from(r: PredictionRecord) -> Self {
        Self {
            second_cause: match (r.causes.get(1), r.p_star) {
                (Some(&j), Some(p)) => Some(cause_id::SecondCause { j, probability: p }),
                _ => None,
            },
            dialogue_id: r.dialogue_id,
            t: r.t,
            causes: r.causes,
        }
    }
}

fn target_pairs(loaded: &corpus::Loaded) -> Vec<HistoryResponsePair> {
    if !loaded.pairs.is_empty() {
        return loaded.pairs.clone();
    }
    loaded
        .corpus
        .enumerate_pairs(corpus::Responder::Speaker(Speaker::Supporter))
}

fn cmd_identify(a: IdentifyArgs, cfg: &ConfigFile, out: Option<&Path>) -> anyhow::Result<()> {
    let loaded = load_corpus(&a.corpus)?;
    let pairs = target_pairs(&loaded);
    let threshold = cfg
        .pick(a.threshold, "threshold")?
        .unwrap_or(cause_id::DEFAULT_THRESHOLD);
    let mode = match a.mode {
        ModeArg::Inference => cause_id::Mode::Inference,
        ModeArg::TrainPreprocess => cause_id::Mode::TrainPreprocess,
    };
    let preds: Vec<CausePrediction> = match (a.baseline, &a.ci) {
        (Some(b), _) => pairs.iter().map(|p| cause_id::baseline_causes(p, b)).collect(),
        (None, Some(dir)) => {
            let clf = load_classifier(dir, a.encoder.as_deref())?;
            cause_id::predict_all(&clf, &pairs, &loaded.corpus, mode, threshold)?
        }
        (None, None) => bail!("identify needs --ci or --baseline"),
    };
    let config_json = json!({
        "corpus": a.corpus,
        "ci": a.ci,
        "mode": format!("{:?}", a.mode),
        "threshold": threshold,
        "baseline": a.baseline.map(|b| format!("{b:?}")),
    });
    let mut run = RunDir::create("identify", config_json, 0, out)?;
    run.add_input(&a.corpus)?;
    let records: Vec<PredictionRecord> = preds.iter().map(PredictionRecord::from).collect();
    run.write_jsonl("predictions.jsonl", &records)?;
    let annotated: Vec<HistoryResponsePair> = pairs.iter().filter(|p| p.is_annotated()).cloned().collect();
    let mut summary = json!({"n_predictions": records.len()});
    if !annotated.is_empty() && annotated.len() == pairs.len() {
        let report = eval_report(&preds, &annotated)?;
        summary["eval"] = serde_json::to_value(&report)?;
        run.write_json("eval.json", &report)?;
    }
    run.finish()?;
    print_json(&summary)
}

#[derive(Debug, Serialize)]
struct EvalReport {
    confusion: metrics::Confusion,
    precision: f64,
    recall: f64,
    f1: f64,
    overlap: cause_id::Overlap,
    n_pairs: usize,
}

fn eval_report(preds: &[CausePrediction], gold: &[HistoryResponsePair]) -> anyhow::Result<EvalReport> {
    let confusion = cause_id::cause_id_confusion(preds, gold)?;
    let prf = metrics::Prf::from(&confusion);
    Ok(EvalReport {
        confusion,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        overlap: cause_id::overlap_analysis(preds, gold)?,
        n_pairs: gold.len(),
    })
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SchemaError(format!("{} line {}: {e}", path.display(), i + 1)).into())
        })
        .collect()
}

fn cmd_eval(a: EvalArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let records: Vec<PredictionRecord> = read_jsonl(&a.predictions)?;
    let preds: Vec<CausePrediction> = records.into_iter().map(CausePrediction::from).collect();
    let gold = load_corpus(&a.gold)?;
    let keys: HashSet<_> = preds.iter().map(|p| p.key()).collect();
    let gold_pairs: Vec<HistoryResponsePair> = gold.pairs.into_iter().filter(|p| keys.contains(&p.key())).collect();
    let report = eval_report(&preds, &gold_pairs)?;
    let mut run = RunDir::create("eval", json!({"predictions": a.predictions, "gold": a.gold}), 0, out)?;
    run.add_input(&a.predictions)?;
    run.add_input(&a.gold)?;
    run.write_json("eval.json", &report)?;
    run.finish()?;
    print_json(&report)
}

fn cmd_preprocess(a: PreprocessArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let loaded = load_corpus(&a.corpus)?;
    let pairs = target_pairs(&loaded);
    let clf = load_classifier(&a.ci, a.encoder.as_deref())?;
    let examples = pipeline::preprocess_training_set(&clf, &pairs, &loaded.corpus, &a.separator)?;
    let mut run = RunDir::create(
        "preprocess",
        json!({"corpus": a.corpus, "ci": a.ci, "separator": a.separator}),
        0,
        out,
    )?;
    run.add_input(&a.corpus)?;
    run.write_jsonl("training.jsonl", &examples)?;
    run.finish()?;
    print_json(&json!({"n_examples": examples.len()}))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HistoryFile {
    Texts(Vec<String>),
    Turns { utterances: Vec<Turn> },
}

#[derive(Deserialize)]
struct Turn {
    #[serde(default)]
    speaker: Option<String>,
    text: String,
}

fn read_history(path: &Path) -> anyhow::Result<Vec<Utterance>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed: HistoryFile =
        serde_json::from_str(&text).map_err(|e| SchemaError(format!("{}: {e}", path.display())))?;
    let turns: Vec<(Option<String>, String)> = match parsed {
        HistoryFile::Texts(t) => t.into_iter().map(|x| (None, x)).collect(),
        HistoryFile::Turns { utterances } => utterances.into_iter().map(|u| (u.speaker, u.text)).collect(),
    };
    if turns.is_empty() {
        return Err(SchemaError(format!("{}: empty history", path.display())).into());
    }
    let n = turns.len();
    Ok(turns
        .into_iter()
        .enumerate()
        .map(|(i, (s, text))| {
            // the response is produced by the supporter, so the last turn is the seeker's
            let default = if (n - 1 - i) % 2 == 0 {
                Speaker::Seeker
            } else {
                Speaker::Supporter
            };
            let speaker = s.and_then(|s| s.parse().ok()).unwrap_or(default);
            Utterance::new(i, speaker, text)
        })
        .collect())
}

fn make_generator(spec: &str) -> anyhow::Result<Box<dyn Generator>> {
    Ok(match spec {
        "template" => Box::new(TemplateGenerator::default()),
        cmd => Box::new(SubprocessAdapter::spawn_command_line(cmd)?),
    })
}

fn decode_params(name: &str, seed: u64) -> anyhow::Result<DecodeParams> {
    DecodeParams::preset(name)
        .map(|p| p.with_seed(seed))
        .ok_or_else(|| anyhow!("unknown decode preset {name:?} (expected plain5 or reg10)"))
}

fn cmd_respond(a: RespondArgs, cfg: &ConfigFile, out: Option<&Path>) -> anyhow::Result<()> {
    let seed = cfg.pick(a.seed, "seed")?.unwrap_or(0);
    let threshold = cfg
        .pick(a.threshold, "threshold")?
        .unwrap_or(cause_id::DEFAULT_THRESHOLD);
    let history = read_history(&a.history)?;
    let clf = load_classifier(&a.ci, a.encoder.as_deref())?;
    let dep = a
        .dep
        .as_deref()
        .map(|d| load_classifier(d, a.encoder.as_deref()))
        .transpose()?;
    let gen = make_generator(&a.generator)?;
    let params = decode_params(&a.decode, seed)?;
    let mut candidates = pipeline::generate_candidates(gen.as_ref(), &history, &params)?;
    pipeline::score_candidates(&clf, &history, &mut candidates)?;
    let selected = candidates[pipeline::select_index(&candidates, threshold)?].clone();
    let by_dependence = dep
        .as_ref()
        .map(|d| pipeline::rerank_by_dependence(d, &history, &candidates))
        .transpose()?;
    let result = json!({
        "selected": selected,
        "fallback": selected.is_fallback(),
        "threshold": threshold,
        "candidates": candidates,
        "by_dependence": by_dependence,
        "generator": format!("{}@{}", gen.name(), gen.version()),
    });
    let config_json = json!({
        "history": a.history, "generator": a.generator, "ci": a.ci, "dep": a.dep,
        "threshold": threshold, "decode": params,
    });
    let mut run = RunDir::create("respond", config_json, seed, out)?;
    run.add_input(&a.history)?;
    run.write_json("response.json", &result)?;
    run.finish()?;
    print_json(&result)
}

fn cmd_perturb(a: PerturbArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let text = fs::read_to_string(&a.spec).with_context(|| format!("reading {}", a.spec.display()))?;
    let mut study: StudyConfig =
        serde_json::from_str(&text).map_err(|e| SchemaError(format!("{}: {e}", a.spec.display())))?;
    if study.version != CONFIG_VERSION {
        return Err(SchemaError(format!(
            "{}: study version {} is not supported",
            a.spec.display(),
            study.version
        ))
        .into());
    }
    for s in &mut study.specs {
        if s.seed == 0 {
            s.seed = study.seed;
        }
    }
    let loaded = load_corpus(&a.corpus)?;
    let pairs: Vec<HistoryResponsePair> = loaded.pairs.iter().filter(|p| p.is_annotated()).cloned().collect();
    let params = decode_params(&a.decode, study.seed)?;
    let report = match a.generator.as_str() {
        "oracle" => CauseOracleGenerator::study(&loaded.corpus, &pairs, &study.specs, &params)?,
        other => {
            let gen = make_generator(other)?;
            perturbation::run_perturbation_study(gen.as_ref(), &loaded.corpus, &pairs, &study.specs, &params)?
        }
    };
    let config_json = json!({"spec": a.spec, "corpus": a.corpus, "generator": a.generator, "decode": params});
    let mut run = RunDir::create("perturb", config_json, study.seed, out)?;
    run.add_input(&a.spec)?;
    run.add_input(&a.corpus)?;
    run.write_json("report.json", &report)?;
    run.finish()?;
    let table: Vec<Value> = std::iter::once(&report.baseline)
        .chain(&report.conditions)
        .map(|c| json!({"condition": c.name, "ppl": c.ppl, "avg_bleu": c.avg_bleu, "coverage": c.coverage}))
        .collect();
    print_json(&table)
}

fn cmd_synth(a: SynthArgs, cfg: &ConfigFile, out: Option<&Path>) -> anyhow::Result<()> {
    let seed = cfg.pick(a.seed, "seed")?.unwrap_or(0);
    let world: SyntheticWorld = match &a.world {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let w: SyntheticWorld =
                serde_json::from_str(&text).map_err(|e| SchemaError(format!("{}: {e}", p.display())))?;
            w.validate().map_err(SchemaError)?;
            w
        }
        None => {
            let mut wc = WorldConfig {
                seed: a.world_seed,
                ..Default::default()
            };
            if let Some(n) = cfg.pick(a.noise, "noise")? {
                wc.noise_rate = n;
            }
            SyntheticWorld::new(wc).map_err(|e| anyhow!(e))?
        }
    };
    let sc = synthetic::generate_corpus(&world, a.dialogues, seed);
    let config_json = json!({"dialogues": a.dialogues, "seed": seed, "world": world});
    let mut run = RunDir::create("synth", config_json, seed, out)?;
    if let Some(p) = &a.world {
        run.add_input(p)?;
    }
    run.write("corpus.jsonl", &corpus_bytes(&sc.corpus, &sc.pairs)?)?;
    run.write_json("world.json", &world)?;
    run.finish()?;
    print_json(&json!({"n_dialogues": sc.corpus.len(), "n_pairs": sc.pairs.len()}))
}

fn cmd_bws(a: BwsArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let file = fs::File::open(&a.judgments).with_context(|| format!("reading {}", a.judgments.display()))?;
    let records = metrics::read_bws_csv(BufReader::new(file))?;
    let mut by_exp: BTreeMap<String, Vec<metrics::BwsRecord>> = BTreeMap::new();
    for r in records {
        by_exp.entry(r.experiment_id.clone()).or_default().push(r);
    }
    let mut report = BTreeMap::new();
    for (exp, recs) in &by_exp {
        report.insert(exp.clone(), metrics::bws_by_metric(recs)?);
    }
    let mut run = RunDir::create("bws", json!({"judgments": a.judgments}), 0, out)?;
    run.add_input(&a.judgments)?;
    run.write_json("bws.json", &report)?;
    run.finish()?;
    print_json(&report)
}

fn cmd_serve(a: ServeArgs) -> anyhow::Result<()> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    match a.kind {
        ServeKind::Generator => {
            let gen = TemplateGenerator::default();
            adapter::serve(Served::Generator(&gen), stdin.lock(), stdout.lock())?;
        }
        ServeKind::Encoder => {
            let path = a.corpus.ok_or_else(|| anyhow!("serving the encoder needs --corpus"))?;
            let loaded = load_corpus(&path)?;
            let texts = all_texts(&[&loaded.corpus]);
            let enc = BagOfWordsEncoder::fit(
                texts.iter().map(String::as_str),
                BowConfig {
                    seed: a.seed,
                    ..Default::default()
                },
            );
            adapter::serve(Served::Encoder(&enc), stdin.lock(), stdout.lock())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from([
            "causal-dialog",
            "train-ci",
            "--labeled",
            "a.jsonl",
            "--variant",
            "init",
            "--window",
            "2,3",
        ])
        .unwrap();
        match cli.command {
            Command::TrainCi(a) => {
                assert_eq!(a.variant, Some(Variant::Init));
                assert_eq!(a.window.as_deref(), Some("2,3"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exit_codes() {
        let e: anyhow::Error = CiError::MissingCheckpoint("x".into()).into();
        assert_eq!(exit_code(&e), EXIT_MISSING_CHECKPOINT);
        let e: anyhow::Error = ConstrainError::Diverged { trace: vec![] }.into();
        assert_eq!(exit_code(&e), EXIT_DIVERGED);
        let e: anyhow::Error = AdapterError::Handshake("x".into()).into();
        assert_eq!(exit_code(&e), EXIT_HANDSHAKE);
        let e = anyhow::Error::from(SchemaError("x".into())).context("loading");
        assert_eq!(exit_code(&e), EXIT_SCHEMA);
        assert_eq!(exit_code(&anyhow!("other")), EXIT_FAILURE);
    }

    #[test]
    fn config_pick_prefers_flag() {
        let cfg: ConfigFile = serde_json::from_str(r#"{"version":1,"threshold":0.7}"#).unwrap();
        assert_eq!(cfg.pick(Some(0.9), "threshold").unwrap(), Some(0.9));
        assert_eq!(cfg.pick::<f64>(None, "threshold").unwrap(), Some(0.7));
        assert_eq!(cfg.pick::<f64>(None, "lr").unwrap(), None);
    }
}
