//! Seeded multi-method benchmark runs over a shared provider.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coder::DEFAULT_PRECISION;
use crate::lm::{DistributionProvider, TokenId};
use crate::message::Ciphertext;
use crate::method::MethodConfig;
use crate::metrics::{MessageRun, MetricsReport, SCHEMA_VERSION};
use crate::pipeline::{PipelineError, ProviderSpec};
use crate::CodecError;

fn default_min_bits() -> usize {
    128
}

fn default_max_bits() -> usize {
    384
}

/// Messages to hide. Random messages are uniform bit strings with lengths
/// uniform in `min_bits..=max_bits`; file messages are taken as ciphertext
/// bytes as-is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MessageSource {
    Random {
        seed: u64,
        count: usize,
        #[serde(default = "default_min_bits")]
        min_bits: usize,
        #[serde(default = "default_max_bits")]
        max_bits: usize,
    },
    Files {
        paths: Vec<PathBuf>,
    },
}

impl MessageSource {
    pub fn random(seed: u64, count: usize) -> Self {
        Self::Random { seed, count, min_bits: default_min_bits(), max_bits: default_max_bits() }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Random { seed, .. } => Some(*seed),
            Self::Files { .. } => None,
        }
    }

    pub fn generate(&self, base: Option<&Path>) -> Result<Vec<Ciphertext>, PipelineError> {
        match self {
            Self::Random { seed, count, min_bits, max_bits } => {
                if *min_bits == 0 || min_bits > max_bits {
                    return Err(PipelineError::Session(format!(
                        "invalid message length range {min_bits}..={max_bits}"
                    )));
                }
                Ok(random_messages(*seed, *count, *min_bits, *max_bits))
            }
            Self::Files { paths } => paths
                .iter()
                .map(|p| {
                    let path = match base {
                        Some(b) if p.is_relative() => b.join(p),
                        _ => p.clone(),
                    };
                    let bytes =
                        std::fs::read(&path).map_err(|e| PipelineError::Session(format!("{}: {e}", path.display())))?;
                    Ciphertext::from_bytes(&bytes)
                        .map_err(|e| PipelineError::Session(format!("{}: {e}", path.display())))
                })
                .collect(),
        }
    }
}

/// `count` random ciphertexts with lengths uniform in `min_bits..=max_bits`.
pub fn random_messages(seed: u64, count: usize, min_bits: usize, max_bits: usize) -> Vec<Ciphertext> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let len = rng.gen_range(min_bits..=max_bits);
            Ciphertext::new((0..len).map(|_| rng.gen::<bool>()).collect()).expect("length is at least one")
        })
        .collect()
}

fn default_precision() -> u32 {
    DEFAULT_PRECISION
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub provider: ProviderSpec,
    pub messages: MessageSource,
    pub methods: Vec<MethodConfig>,
    #[serde(default = "default_precision")]
    pub precision: u32,
    /// Conditioning context; a single EOS when empty.
    #[serde(default)]
    pub context: Vec<TokenId>,
    /// Decode every cover and count mismatches as failures.
    #[serde(default = "default_true")]
    pub verify: bool,
}

impl BenchSpec {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.methods.is_empty() {
            return Err(PipelineError::Session("a benchmark needs at least one method".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageFailure {
    pub message: usize,
    pub error: String,
}

/// Per-method result: the report over the messages that succeeded, and the
/// failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub label: String,
    pub config: MethodConfig,
    pub report: Option<MetricsReport>,
    pub failures: Vec<MessageFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutput {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub spec: BenchSpec,
    pub results: Vec<MethodOutcome>,
}

/// Encodes (and optionally decodes) one message.
pub fn run_message(
    method: &MethodConfig,
    precision: u32,
    provider: &dyn DistributionProvider,
    ctx: &[TokenId],
    message: &Ciphertext,
    verify: bool,
) -> Result<MessageRun, CodecError> {
    let coder = method.build(precision)?;
    let start = Instant::now();
    let output = coder.encode(message, provider, ctx)?;
    let wall_time = start.elapsed().as_secs_f64();
    if verify {
        let back = coder.decode(&output.cover, provider, ctx)?;
        if back.ciphertext != *message {
            return Err(CodecError::Internal("decoded message differs from the original".into()));
        }
    }
    Ok(MessageRun { payload_bits: message.len(), output, wall_time })
}

/// Runs every message through one method; results are in message order.
pub fn run_method(
    method: &MethodConfig,
    precision: u32,
    provider: &dyn DistributionProvider,
    ctx: &[TokenId],
    messages: &[Ciphertext],
    verify: bool,
) -> Vec<Result<MessageRun, CodecError>> {
    messages.par_iter().map(|m| run_message(method, precision, provider, ctx, m, verify)).collect()
}

fn outcome(method: &MethodConfig, results: Vec<Result<MessageRun, CodecError>>) -> MethodOutcome {
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => {
                log::warn!("{}: message {i} failed: {e}", method.label());
                failures.push(MessageFailure { message: i, error: e.to_string() });
            }
        }
    }
    let report = MetricsReport::build(method, &runs, failures.len()).ok();
    MethodOutcome { label: method.label(), config: *method, report, failures }
}

/// Runs a benchmark on `workers` threads (all cores when `None`). The output
/// does not depend on the number of workers apart from wall times.
pub fn run_bench_with(
    spec: &BenchSpec,
    provider: &dyn DistributionProvider,
    messages: &[Ciphertext],
    workers: Option<usize>,
) -> Result<BenchOutput, PipelineError> {
    spec.validate()?;
    let ctx = if spec.context.is_empty() { vec![provider.vocabulary().eos()] } else { spec.context.clone() };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| PipelineError::Session(format!("worker pool: {e}")))?;
    let results = pool.install(|| {
        spec.methods
            .iter()
            .map(|m| outcome(m, run_method(m, spec.precision, provider, &ctx, messages, spec.verify)))
            .collect()
    });
    Ok(BenchOutput { schema_version: SCHEMA_VERSION, seed: spec.messages.seed(), spec: spec.clone(), results })
}

/// Opens the provider and messages named by `spec` and runs it.
pub fn run_bench(spec: &BenchSpec, base: Option<&Path>, workers: Option<usize>) -> Result<BenchOutput, PipelineError> {
    spec.validate()?;
    let provider = spec.provider.open(base)?;
    let messages = spec.messages.generate(base)?;
    if messages.is_empty() {
        return Err(PipelineError::Session("no messages to benchmark".into()));
    }
    run_bench_with(spec, provider.as_ref(), &messages, workers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(methods: Vec<MethodConfig>) -> BenchSpec {
        BenchSpec {
            provider: ProviderSpec::synthetic(5, 300),
            messages: MessageSource::Random { seed: 9, count: 6, min_bits: 8, max_bits: 64 },
            methods,
            precision: DEFAULT_PRECISION,
            context: Vec::new(),
            verify: true,
        }
    }

    #[test]
    fn random_messages_are_seeded() {
        let a = random_messages(1, 20, 8, 16);
        assert_eq!(a, random_messages(1, 20, 8, 16));
        assert_ne!(a, random_messages(2, 20, 8, 16));
        assert!(a.iter().all(|m| (8..=16).contains(&m.len())));
    }

    #[test]
    fn results_do_not_depend_on_workers() {
        let s = spec(vec![MethodConfig::saac(0.05), MethodConfig::Binlm { b: 2 }]);
        let strip = |mut o: BenchOutput| {
            for r in &mut o.results {
                r.report.as_mut().unwrap().wall_time_per_message = 0.0;
            }
            o
        };
        let one = strip(run_bench(&s, None, Some(1)).unwrap());
        let two = strip(run_bench(&s, None, Some(2)).unwrap());
        assert_eq!(one, two);
        assert_eq!(one.results[1].report.as_ref().unwrap().bits_per_word, 2.0);
    }

    #[test]
    fn failing_method_does_not_stop_others() {
        let s = spec(vec![MethodConfig::Static { k: 1 }, MethodConfig::Huffman { h: 3 }]);
        let out = run_bench(&s, None, Some(1)).unwrap();
        assert_eq!(out.results[0].failures.len(), 6);
        assert!(out.results[0].report.is_none());
        assert!(out.results[1].failures.is_empty());
        assert!(run_bench(&spec(vec![]), None, None).is_err());
    }
}
