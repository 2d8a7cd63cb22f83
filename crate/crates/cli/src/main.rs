//! `saac`: hide messages in generated text and get them back.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use saac::bench::{run_bench, BenchSpec, MessageSource};
use saac::lm::protocol::LmServer;
use saac::lm::{synthetic_corpus, Corpus};
use saac::metrics::{render_table, to_csv};
use saac::pipeline::{ErrorKind, PipelineError, ProviderSpec, Session, SessionConfig, SyntheticSpec};
use saac::{DistributionProvider, MethodConfig};

const EXIT_INPUT: u8 = 2;
const EXIT_SESSION_MISMATCH: u8 = 3;
const EXIT_INTEGRITY: u8 = 4;
const EXIT_PROVIDER: u8 = 5;

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match e.kind() {
            ErrorKind::Input => EXIT_INPUT,
            ErrorKind::SessionMismatch => EXIT_SESSION_MISMATCH,
            ErrorKind::Integrity => EXIT_INTEGRITY,
            ErrorKind::Provider => EXIT_PROVIDER,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "saac", version, about = "Linguistic steganography with self-adjusting arithmetic coding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hide a plaintext in cover text.
    Encode(CodecArgs),
    /// Recover the plaintext from cover text.
    Decode(CodecArgs),
    /// Run a benchmark and write reports.
    Bench(BenchArgs),
    /// Print the fingerprint of a session file.
    Fingerprint(SessionArgs),
    /// Write a new session file with a fresh key.
    InitSession(InitArgs),
    /// Write a synthetic training corpus.
    Corpus(CorpusArgs),
    /// Write the vocabulary of a provider as JSON.
    Vocab(VocabArgs),
    /// Serve an n-gram model over the line protocol.
    ServeLm(ServeArgs),
}

#[derive(Args)]
struct SessionArgs {
    /// Session file [default: $SAAC_CONFIG_DIR/session.json, else ./session.json]
    #[arg(long)]
    session: Option<PathBuf>,
    /// Default directory for session files.
    #[arg(long, env = "SAAC_CONFIG_DIR", hide_env_values = true)]
    config_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CodecArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// Expected session fingerprint (hex, or a file holding it).
    #[arg(long)]
    fingerprint: Option<String>,
    /// Override the session's method, e.g. `saac:0.01` or a JSON object.
    #[arg(long)]
    policy: Option<String>,
    /// Override the session's provider (JSON object, `synthetic:SEED:N`,
    /// `corpus:PATH` or `remote:ADDR@VOCAB`).
    #[arg(long)]
    provider: Option<String>,
    /// Override the coder precision in bits.
    #[arg(long)]
    precision: Option<u32>,
    /// Input file (`-` for stdin).
    #[arg(long, short, default_value = "-")]
    input: PathBuf,
    /// Output file (`-` for stdout).
    #[arg(long, short, default_value = "-")]
    out: PathBuf,
    /// Write one JSON line per cover token to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark spec file (JSON). Other options override or fill it in.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Corpus files for an n-gram provider.
    #[arg(long)]
    corpus: Vec<PathBuf>,
    /// Provider, as for `encode --provider`.
    #[arg(long)]
    provider: Option<String>,
    /// Methods to compare (repeatable).
    #[arg(long)]
    policy: Vec<String>,
    /// Number of random messages.
    #[arg(long, default_value_t = 100)]
    messages: usize,
    /// Seed for random messages.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    precision: Option<u32>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for report.json and report.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InitArgs {
    /// Where to write the session file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "saac:0.01")]
    policy: String,
    /// Provider [default: synthetic:0:2000].
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    precision: Option<u32>,
    /// Introductory context, as words of the provider's vocabulary.
    #[arg(long)]
    context: Option<String>,
    /// Derive the key from this seed instead of the OS generator.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    sentences: usize,
    #[arg(long, short, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct VocabArgs {
    /// Provider, as for `encode --provider`.
    #[arg(long, default_value = "synthetic:0:2000")]
    provider: String,
    #[arg(long, short, default_value = "-")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "synthetic:0:2000")]
    provider: String,
    #[arg(long, default_value = "127.0.0.1:7878")]
    addr: String,
    /// Largest number of entries sent per response.
    #[arg(long, default_value_t = 1 << 16)]
    top_n_cap: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Bench(a) => bench(a),
        Command::Fingerprint(a) => fingerprint(a),
        Command::InitSession(a) => init_session(a),
        Command::Corpus(a) => corpus(a),
        Command::Vocab(a) => vocab(a),
        Command::ServeLm(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("saac: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf).map_err(|e| CliError::input(format!("stdin: {e}")))?;
        Ok(buf)
    } else {
        fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}

fn write_output(path: &Path, data: &[u8]) -> CliResult {
    if path == Path::new("-") {
        let mut out = std::io::stdout().lock();
        out.write_all(data).and_then(|_| out.flush()).map_err(|e| CliError::input(format!("stdout: {e}")))
    } else {
        fs::write(path, data).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}

fn session_path(args: &SessionArgs) -> PathBuf {
    match (&args.session, &args.config_dir) {
        (Some(p), Some(dir)) if p.is_relative() && !p.exists() => dir.join(p),
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join("session.json"),
        (None, None) => PathBuf::from("session.json"),
    }
}

fn load_config(args: &SessionArgs) -> CliResult<(SessionConfig, PathBuf)> {
    let path = session_path(args);
    let text =
        fs::read_to_string(&path).map_err(|e| CliError::input(format!("session file {}: {e}", path.display())))?;
    let config = SessionConfig::from_json(&text)
        .map_err(|e| CliError::input(format!("session file {}: {e}", path.display())))?;
    Ok((config, path))
}

fn parse_policy(s: &str) -> CliResult<MethodConfig> {
    s.parse().map_err(|e: saac::CodecError| CliError::input(e.to_string()))
}

fn parse_provider(s: &str) -> CliResult<ProviderSpec> {
    let s = s.trim();
    if s.starts_with('{') {
        return serde_json::from_str(s).map_err(|e| CliError::input(format!("provider: {e}")));
    }
    let bad = || CliError::input(format!("unrecognized provider {s:?}"));
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "synthetic" => {
            let (seed, n) = rest.split_once(':').ok_or_else(bad)?;
            Ok(ProviderSpec::Ngram {
                corpus: Vec::new(),
                synthetic: Some(SyntheticSpec {
                    seed: seed.parse().map_err(|_| bad())?,
                    sentences: n.parse().map_err(|_| bad())?,
                }),
                order: 3,
                smoothing: saac::lm::DEFAULT_SMOOTHING,
            })
        }
        "corpus" => Ok(ProviderSpec::Ngram {
            corpus: rest.split(',').map(PathBuf::from).collect(),
            synthetic: None,
            order: 3,
            smoothing: saac::lm::DEFAULT_SMOOTHING,
        }),
        "remote" => {
            let (addr, vocab) = rest.split_once('@').ok_or_else(bad)?;
            Ok(ProviderSpec::Remote { addr: addr.into(), vocab: vocab.into(), top_n: 4096, window: None })
        }
        _ => Err(bad()),
    }
}

fn open_session(args: &CodecArgs) -> CliResult<Session> {
    let (mut config, path) = load_config(&args.session)?;
    if let Some(p) = &args.policy {
        config.policy = parse_policy(p)?;
    }
    if let Some(p) = &args.provider {
        config.provider = parse_provider(p)?;
    }
    if let Some(p) = args.precision {
        config.precision = p;
    }
    let session = Session::open(config, path.parent())?;
    if let Some(expected) = &args.fingerprint {
        let expected = match fs::read_to_string(expected) {
            Ok(text) => text,
            Err(_) => expected.clone(),
        };
        session.check_fingerprint(&expected)?;
    }
    Ok(session)
}

fn write_trace(path: &Path, traces: &[saac::coder::StepTrace]) -> CliResult {
    let mut out = String::new();
    for t in traces {
        out.push_str(&serde_json::to_string(t).expect("trace serializes"));
        out.push('\n');
    }
    write_output(path, out.as_bytes())
}

fn encode(args: CodecArgs) -> CliResult {
    let session = open_session(&args)?;
    let plaintext = read_input(&args.input)?;
    let hidden = session.hide(&plaintext)?;
    write_output(&args.out, hidden.cover_text.as_bytes())?;
    if let Some(path) = &args.trace {
        write_trace(path, &hidden.traces)?;
    }
    log::info!("{} cover tokens, fingerprint {}", hidden.cover.len(), session.fingerprint());
    Ok(())
}

fn decode(args: CodecArgs) -> CliResult {
    let session = open_session(&args)?;
    let raw = read_input(&args.input)?;
    let text = String::from_utf8(raw)
        .map_err(|_| CliError { code: EXIT_INTEGRITY, message: "cover text is not UTF-8".into() })?;
    let plaintext = session.reveal(&text)?;
    if std::str::from_utf8(&plaintext).is_err() {
        log::warn!("recovered plaintext is not valid UTF-8; check that both parties use the same key");
    }
    write_output(&args.out, &plaintext)
}

fn fingerprint(args: SessionArgs) -> CliResult {
    let (config, _) = load_config(&args)?;
    println!("{}", config.fingerprint());
    Ok(())
}

fn init_session(args: InitArgs) -> CliResult {
    use rand::{RngCore, SeedableRng};
    let provider = match &args.provider {
        Some(p) => parse_provider(p)?,
        None => ProviderSpec::synthetic(0, 2000),
    };
    let mut key = vec![0u8; 32];
    match args.seed {
        Some(seed) => rand_chacha::ChaCha20Rng::seed_from_u64(seed).fill_bytes(&mut key),
        None => rand::rngs::OsRng.fill_bytes(&mut key),
    }
    let mut config = SessionConfig::new(key, provider, parse_policy(&args.policy)?);
    if let Some(p) = args.precision {
        config.precision = p;
    }
    let base = args.out.parent().map(Path::to_path_buf);
    let provider = config.provider.open(base.as_deref())?;
    if let Some(words) = &args.context {
        config.context = provider.vocabulary().tokenize(words).map_err(|e| CliError::input(format!("context: {e}")))?;
    }
    let session = Session::with_provider_arc(config, provider)?;
    write_output(&args.out, session.config().to_json().as_bytes())?;
    println!("{}", session.fingerprint());
    Ok(())
}

fn corpus(args: CorpusArgs) -> CliResult {
    write_output(&args.out, synthetic_corpus(args.seed, args.sentences).to_text().as_bytes())
}

fn open_provider(spec: &str) -> CliResult<Arc<dyn DistributionProvider>> {
    Ok(parse_provider(spec)?.open(None)?)
}

fn vocab(args: VocabArgs) -> CliResult {
    let provider = open_provider(&args.provider)?;
    write_output(&args.out, provider.vocabulary().to_json().as_bytes())
}

fn serve(args: ServeArgs) -> CliResult {
    let provider = open_provider(&args.provider)?;
    let server = LmServer::bind(args.addr.as_str(), provider, args.top_n_cap)
        .map_err(|e| CliError::input(format!("{}: {e}", args.addr)))?;
    let addr = server.local_addr().map_err(|e| CliError::input(e.to_string()))?;
    eprintln!("serving on {addr}");
    server.run().map_err(|e| CliError { code: EXIT_PROVIDER, message: e.to_string() })
}

fn bench(args: BenchArgs) -> CliResult {
    let (mut spec, base) = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            let spec: BenchSpec =
                serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            (spec, path.parent().map(Path::to_path_buf))
        }
        None => {
            let provider = match (&args.provider, args.corpus.is_empty()) {
                (Some(p), _) => parse_provider(p)?,
                (None, false) => ProviderSpec::Ngram {
                    corpus: args.corpus.clone(),
                    synthetic: None,
                    order: 3,
                    smoothing: saac::lm::DEFAULT_SMOOTHING,
                },
                (None, true) => return Err(CliError::input("bench needs --spec, --corpus or --provider")),
            };
            let spec = BenchSpec {
                provider,
                messages: MessageSource::random(args.seed.unwrap_or(0), args.messages),
                methods: Vec::new(),
                precision: saac::coder::DEFAULT_PRECISION,
                context: Vec::new(),
                verify: true,
            };
            (spec, None)
        }
    };
    if !args.policy.is_empty() {
        spec.methods = args.policy.iter().map(|p| parse_policy(p)).collect::<CliResult<_>>()?;
    }
    if let (Some(seed), MessageSource::Random { seed: s, .. }) = (args.seed, &mut spec.messages) {
        *s = seed;
    }
    if let Some(p) = args.precision {
        spec.precision = p;
    }
    if let ProviderSpec::Ngram { corpus, .. } = &spec.provider {
        for path in corpus {
            let path = match &base {
                Some(b) if path.is_relative() => b.join(path),
                _ => path.clone(),
            };
            let c = Corpus::read(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            if c.is_empty() {
                return Err(CliError::input(format!("corpus {} is empty", path.display())));
            }
        }
    }
    let output = run_bench(&spec, base.as_deref(), args.workers)?;
    let reports: Vec<_> = output.results.iter().filter_map(|r| r.report.clone()).collect();
    print!("{}", render_table(&reports));
    for r in output.results.iter().filter(|r| !r.failures.is_empty()) {
        eprintln!("{}: {} message(s) failed, first: {}", r.label, r.failures.len(), r.failures[0].error);
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
        let json = serde_json::to_string_pretty(&output).expect("bench output serializes");
        write_output(&dir.join("report.json"), json.as_bytes())?;
        write_output(&dir.join("report.csv"), to_csv(&reports).as_bytes())?;
    }
    Ok(())
}
