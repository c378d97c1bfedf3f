use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use session_intent::classifier::{load_model, save_model, train, TrainConfig};
use session_intent::context::{normalize, EngagementKinds, PrevQuery};
use session_intent::dataset::{extract_examples, read_dataset_file, write_dataset_file, DatasetVariant};
use session_intent::embed::{CombineMode, EmbedderConfig};
use session_intent::eval::{evaluate, generate_synthetic_corpus, run_ablation, AblationConfig, SynthConfig};
use session_intent::session::ingest_events;
use session_intent::Model;
use session_intent_service::intent::DEFAULT_THRESHOLD;
use session_intent_service::{AppState, Predictor, ServiceConfig, ServingMode, SessionStateRecord};

mod files;

#[derive(Parser)]
#[command(name = "session-intent", version, about = "Session-aware query intent pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct EmbedArgs {
    /// Embedder configuration as JSON; overrides --dim.
    #[arg(long)]
    embedder: Option<PathBuf>,
    /// Hash embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
}

impl EmbedArgs {
    fn config(&self, fallback_dim: usize) -> Result<EmbedderConfig> {
        match &self.embedder {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
            }
            None => Ok(EmbedderConfig::hash(self.dim.unwrap_or(fallback_dim))),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sessionize raw JSONL events.
    Ingest {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out_sessions: PathBuf,
        /// Inactivity gap that closes a session.
        #[arg(long, default_value_t = session_intent::session::DEFAULT_SESSION_GAP_MS)]
        gap_ms: u64,
    },
    /// Generate a synthetic session corpus.
    Synth {
        /// Generator parameters as JSON; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        sessions: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract training examples for one dataset variant.
    BuildDataset {
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long)]
        variant: DatasetVariant,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a softmax classifier on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        embed: EmbedArgs,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.05)]
        learning_rate: f64,
        #[arg(long, default_value_t = 1e-6)]
        l2: f64,
    },
    /// Weighted f1 and prediction-set sizes of a model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        embed: EmbedArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every dataset variant on one session split.
    Ablate {
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long)]
        out_report: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Comma-separated variants; all six by default.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<DatasetVariant>,
        #[command(flatten)]
        embed: EmbedArgs,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Predict the intent of one query, optionally after a previous one.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        prev: Option<String>,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        embed: EmbedArgs,
        /// Print the full response as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP service. Unset flags fall back to SESSION_INTENT_* variables.
    Serve {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// joint, sum, concat, query_only or session_only.
        #[arg(long)]
        mode: Option<ServingMode>,
        /// Engagement kinds rendered into context: none, atc or click.
        #[arg(long)]
        engagements: Option<EngagementKinds>,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Write raw little-endian f64 embeddings of each input line.
    Embed {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embed: EmbedArgs,
    },
}

fn model_embedder(args: &EmbedArgs, model: &Model) -> Result<EmbedderConfig> {
    let config = args.config(model.d_in())?;
    if config.dim != model.d_in() {
        bail!("model expects {} inputs but the embedder produces {}", model.d_in(), config.dim);
    }
    Ok(config)
}

fn read_model(path: &Path) -> Result<Model> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { events, out_sessions, gap_ms } => {
            let file = std::fs::File::open(&events).with_context(|| format!("opening {}", events.display()))?;
            let ingested = ingest_events(BufReader::new(file), gap_ms)?;
            files::write_sessions(&out_sessions, &ingested.sessions)?;
            let s = ingested.stats;
            println!("records {}  malformed {}  sessions {}", s.records, s.malformed, s.sessions);
        }
        Command::Synth { config, seed, sessions, out } => {
            let mut cfg: SynthConfig = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => SynthConfig::default(),
            };
            cfg.seed = seed;
            if let Some(n) = sessions {
                cfg.n_sessions = n;
            }
            let corpus = generate_synthetic_corpus(&cfg)?;
            files::write_sessions(&out, &corpus)?;
            println!("sessions {}  seed {}", corpus.len(), seed);
        }
        Command::BuildDataset { sessions, variant, out } => {
            let (sessions, _) = files::load_sessions(&sessions)?;
            let examples = extract_examples(&sessions, variant);
            write_dataset_file(&out, &examples)?;
            if examples.is_empty() {
                eprintln!("warning: variant {variant} produced no examples");
            }
            println!("variant {variant}  examples {}", examples.len());
        }
        Command::Train { dataset, out_model, seed, embed, epochs, batch_size, learning_rate, l2 } => {
            let examples = read_dataset_file(&dataset)?;
            let embedder = embed.config(session_intent::embed::DEFAULT_DIM)?.build::<f64>()?;
            let config = TrainConfig { epochs, batch_size, learning_rate, l2_penalty: l2, seed };
            let model: Model = train(&examples, embedder.as_ref(), &config)?;
            save_model(&model, &out_model)?;
            let losses: Vec<String> = model.epoch_losses().iter().map(|l| format!("{l:.4}")).collect();
            println!(
                "examples {}  classes {}  dim {}  loss {}",
                examples.len(),
                model.n_classes(),
                model.d_in(),
                losses.join(" ")
            );
        }
        Command::Eval { model, dataset, threshold, embed, out } => {
            let model = read_model(&model)?;
            let embedder = model_embedder(&embed, &model)?.build::<f64>()?;
            let examples = read_dataset_file(&dataset)?;
            let report = evaluate(&model, embedder.as_ref(), &examples, threshold)?;
            if let Some(out) = out {
                let mut w = files::create(&out)?;
                serde_json::to_writer_pretty(&mut w, &report)?;
                w.write_all(b"\n")?;
                w.flush()?;
            }
            println!("weighted f1 {:.4}  test {}", report.weighted_f1, report.n_test);
            for (size, count) in &report.set_size_histogram {
                println!("set size {size}: {count}");
            }
        }
        Command::Ablate { sessions, out_report, seed, variants, embed, test_fraction, threshold } => {
            let (sessions, _) = files::load_sessions(&sessions)?;
            let variants = if variants.is_empty() { DatasetVariant::ALL.to_vec() } else { variants };
            let embedder = embed.config(session_intent::embed::DEFAULT_DIM)?;
            let config = AblationConfig { test_fraction, threshold, ..AblationConfig::with_seed(seed) };
            let report = run_ablation::<f64>(&sessions, &variants, &embedder, &TrainConfig::with_seed(seed), &config)?;
            let mut w = files::create(&out_report)?;
            w.write_all(report.to_json().as_bytes())?;
            w.write_all(b"\n")?;
            w.flush()?;
            print!("{}", report.to_table());
        }
        Command::Predict { model, prev, query, threshold, embed, json } => {
            let model = read_model(&model)?;
            let embedder = model_embedder(&embed, &model)?.build::<f64>()?;
            let predictor =
                Predictor::new(Arc::new(model), Arc::from(embedder), ServingMode::Joint, Default::default())?;
            let state = match prev {
                Some(raw) => {
                    let tokens = normalize(&raw)?;
                    let mut record = SessionStateRecord::new("cli");
                    record.last_query = Some(PrevQuery { raw, tokens });
                    Some(record)
                }
                None => None,
            };
            let response = predictor.predict(state.as_ref(), &query, threshold)?;
            if json {
                println!("{}", serde_json::to_string(&response)?);
            } else {
                println!("{}\t{:.4}\tgated={}", response.top.pt, response.top.p, response.gated);
                for s in &response.set {
                    println!("  {}\t{:.4}", s.pt, s.p);
                }
            }
        }
        Command::Serve { model, bind, snapshot, mode, engagements, embed } => {
            let mut config = ServiceConfig::from_env()?;
            config.model_path = model.or(config.model_path);
            config.bind = bind.unwrap_or(config.bind);
            config.store.snapshot_path = snapshot.or(config.store.snapshot_path);
            config.mode = mode.unwrap_or(config.mode);
            config.context.engagement_kinds = engagements.unwrap_or(config.context.engagement_kinds);
            let mut model = None;
            if let Some(path) = &config.model_path {
                let m = read_model(path)?;
                let explicit = embed.dim.is_some() || std::env::var_os("SESSION_INTENT_EMBED_DIM").is_some();
                if !explicit {
                    config.embedder.dim = match config.mode {
                        ServingMode::Vector(CombineMode::Concat) => m.d_in() / 2,
                        _ => m.d_in(),
                    };
                }
                model = Some(m);
            }
            if embed.embedder.is_some() || embed.dim.is_some() {
                config.embedder = embed.config(config.embedder.dim)?;
            }
            serve(config, model)?;
        }
        Command::Embed { input, out, embed } => {
            let embedder = embed.config(session_intent::embed::DEFAULT_DIM)?.build::<f64>()?;
            let reader =
                BufReader::new(std::fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?);
            let mut w = files::create(&out)?;
            let mut n = 0usize;
            for line in reader.lines() {
                for v in embedder.embed(&line?)?.as_slice() {
                    w.write_all(&v.to_le_bytes())?;
                }
                n += 1;
            }
            w.flush()?;
            println!("texts {n}  dim {}", embedder.dim());
        }
    }
    Ok(())
}

fn serve(config: ServiceConfig, model: Option<Model>) -> Result<()> {
    tracing_subscriber::fmt().with_target(false).with_writer(std::io::stderr).init();
    // The external backend wraps a blocking client, which must be created and
    // dropped outside the runtime; `embedder` keeps it alive past block_on.
    let embedder: Arc<dyn session_intent::embed::Embedder<f64>> = Arc::from(config.embedder.build::<f64>()?);
    let bind = config.bind.clone();
    let state = AppState::new(config, embedder.clone());
    if let Some(model) = model {
        state.set_model(model)?;
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
        println!("listening on {}", listener.local_addr()?);
        std::io::stdout().flush()?;
        session_intent_service::serve(state, listener, shutdown_signal()).await?;
        anyhow::Ok(())
    })?;
    drop(runtime);
    drop(embedder);
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        tokio::signal::ctrl_c().await.ok();
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
