//! End-to-end flow: plaintext → ciphertext → cover text and back.
//!
//! Both parties hold the same [`SessionConfig`] (exchanged out of band and
//! checked by its fingerprint). The introductory context conditions the first
//! step but is never transmitted; the cover text is only the generated
//! tokens.
//!
//! The keystream cipher here is a reference construction that makes the
//! pipeline complete. It is not meant as a secure cipher.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coder::{StepTrace, DEFAULT_PRECISION};
use crate::lm::protocol::RemoteProvider;
use crate::lm::{synthetic_corpus, Corpus, DistributionProvider, LmError, NgramModel, TokenId, Vocabulary};
use crate::message::Ciphertext;
use crate::method::{Method, MethodConfig};
use crate::CodecError;

/// Identifier of the keystream construction: SHA-256 over `key ‖ counter`
/// (64-bit big-endian block counter), XORed with the data.
pub const KEYSTREAM_ALGORITHM: &str = "sha256-ctr";

pub const WHITESPACE_DETOKENIZER: &str = "whitespace";

/// First `len` keystream bytes for `key`.
pub fn keystream(key: &[u8], len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 32);
    let mut counter = 0u64;
    while out.len() < len {
        let mut h = Sha256::new();
        h.update(key);
        h.update(counter.to_be_bytes());
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(len);
    out
}

fn xor(data: &[u8], key: &[u8]) -> Vec<u8> {
    data.iter().zip(keystream(key, data.len())).map(|(d, k)| d ^ k).collect()
}

pub fn encrypt(plaintext: &[u8], key: &[u8]) -> Result<Ciphertext, PipelineError> {
    if key.is_empty() {
        return Err(PipelineError::EmptyKey);
    }
    Ciphertext::from_bytes(&xor(plaintext, key)).map_err(|e| PipelineError::at(Stage::Encrypt, e))
}

pub fn decrypt(ciphertext: &Ciphertext, key: &[u8]) -> Result<Vec<u8>, PipelineError> {
    if key.is_empty() {
        return Err(PipelineError::EmptyKey);
    }
    let bytes = ciphertext.to_bytes().ok_or_else(|| {
        PipelineError::at(
            Stage::Decrypt,
            CodecError::InvalidConfig(format!("{} bits is not a whole number of bytes", ciphertext.len())),
        )
    })?;
    Ok(xor(&bytes, key))
}

/// Pipeline stage a failure happened in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Provider,
    Encrypt,
    Encode,
    Detokenize,
    Tokenize,
    Decode,
    Decrypt,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Provider => "provider",
            Stage::Encrypt => "encrypt",
            Stage::Encode => "encode",
            Stage::Detokenize => "detokenize",
            Stage::Tokenize => "tokenize",
            Stage::Decode => "decode",
            Stage::Decrypt => "decrypt",
        })
    }
}

/// Coarse failure class, for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    SessionMismatch,
    Integrity,
    Provider,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("session: {0}")]
    Session(String),
    #[error("key must be non-empty")]
    EmptyKey,
    #[error("session fingerprint mismatch: expected {expected}, session has {actual}")]
    FingerprintMismatch { expected: String, actual: String },
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: CodecError,
    },
}

impl PipelineError {
    fn at(stage: Stage, source: impl Into<CodecError>) -> Self {
        Self::Stage { stage, source: source.into() }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Self::Session(_) | Self::EmptyKey => ErrorKind::Input,
            Self::FingerprintMismatch { .. } => ErrorKind::SessionMismatch,
            Self::Stage { stage, source } => match (stage, source) {
                (_, CodecError::Provider(LmError::Io(_) | LmError::EmptyCorpus | LmError::UnknownWord(_)))
                    if *stage == Stage::Provider =>
                {
                    ErrorKind::Input
                }
                (Stage::Tokenize, _) => ErrorKind::Integrity,
                (_, CodecError::Provider(_)) => ErrorKind::Provider,
                (Stage::Provider, _) => ErrorKind::Provider,
                (Stage::Decode | Stage::Decrypt, _) => ErrorKind::Integrity,
                _ => ErrorKind::Input,
            },
        }
    }
}

/// Seeded grammar corpus, see [`synthetic_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub sentences: usize,
}

fn default_order() -> usize {
    3
}

fn default_smoothing() -> f64 {
    crate::lm::DEFAULT_SMOOTHING
}

fn default_top_n() -> usize {
    4096
}

/// Where next-token distributions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderSpec {
    /// In-process n-gram model trained on corpus files (relative paths are
    /// resolved against the session file's directory) or a synthetic corpus.
    Ngram {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        corpus: Vec<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        synthetic: Option<SyntheticSpec>,
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    /// Model server speaking the line protocol; `vocab` is the id ↔ surface
    /// map in the JSON form written by `Vocabulary::save`.
    Remote {
        addr: String,
        vocab: PathBuf,
        #[serde(default = "default_top_n")]
        top_n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<usize>,
    },
}

impl ProviderSpec {
    pub fn synthetic(seed: u64, sentences: usize) -> Self {
        Self::Ngram {
            corpus: Vec::new(),
            synthetic: Some(SyntheticSpec { seed, sentences }),
            order: default_order(),
            smoothing: default_smoothing(),
        }
    }

    /// Instantiates the provider. `base` resolves relative paths.
    pub fn open(&self, base: Option<&Path>) -> Result<Arc<dyn DistributionProvider>, PipelineError> {
        let resolve = |p: &Path| match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        };
        let fail = |e: LmError| PipelineError::at(Stage::Provider, e);
        match self {
            Self::Ngram { corpus, synthetic, order, smoothing } => {
                let corpus = match (corpus.is_empty(), synthetic) {
                    (false, None) => {
                        Corpus::read_all(&corpus.iter().map(|p| resolve(p)).collect::<Vec<_>>()).map_err(fail)?
                    }
                    (true, Some(s)) => synthetic_corpus(s.seed, s.sentences),
                    _ => {
                        return Err(PipelineError::Session(
                            "an n-gram provider needs exactly one of `corpus` or `synthetic`".into(),
                        ))
                    }
                };
                Ok(Arc::new(NgramModel::train(&corpus, *order, *smoothing).map_err(fail)?))
            }
            Self::Remote { addr, vocab, top_n, window } => {
                let vocab = Vocabulary::load(resolve(vocab)).map_err(fail)?;
                let mut remote = RemoteProvider::connect(addr.as_str(), vocab, *top_n).map_err(fail)?;
                if let Some(w) = window {
                    remote = remote.with_window(*w);
                }
                Ok(Arc::new(remote))
            }
        }
    }
}

mod key_base64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(key: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&BASE64.encode(key))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        BASE64.decode(text.as_bytes()).map_err(serde::de::Error::custom)
    }
}

fn default_precision() -> u32 {
    DEFAULT_PRECISION
}

fn default_cipher() -> String {
    KEYSTREAM_ALGORITHM.to_string()
}

fn default_detokenizer() -> String {
    WHITESPACE_DETOKENIZER.to_string()
}

/// Shared session material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(with = "key_base64")]
    pub key: Vec<u8>,
    #[serde(default = "default_cipher")]
    pub cipher: String,
    /// Introductory context, as token ids.
    #[serde(default)]
    pub context: Vec<TokenId>,
    pub provider: ProviderSpec,
    pub policy: MethodConfig,
    #[serde(default = "default_precision")]
    pub precision: u32,
    #[serde(default = "default_detokenizer")]
    pub detokenizer: String,
}

impl SessionConfig {
    pub fn new(key: Vec<u8>, provider: ProviderSpec, policy: MethodConfig) -> Self {
        Self {
            key,
            cipher: default_cipher(),
            context: Vec::new(),
            provider,
            policy,
            precision: DEFAULT_PRECISION,
            detokenizer: default_detokenizer(),
        }
    }

    pub fn from_json(json: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(json).map_err(|e| PipelineError::Session(format!("invalid session file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    /// Hex SHA-256 of the canonical JSON form (object keys sorted, no
    /// whitespace).
    pub fn fingerprint(&self) -> String {
        let value = serde_json::to_value(self).expect("session serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    fn validate(&self) -> Result<(), PipelineError> {
        if self.key.is_empty() {
            return Err(PipelineError::EmptyKey);
        }
        if self.cipher != KEYSTREAM_ALGORITHM {
            return Err(PipelineError::Session(format!("unsupported cipher {:?}", self.cipher)));
        }
        if self.detokenizer != WHITESPACE_DETOKENIZER {
            return Err(PipelineError::Session(format!("unsupported detokenizer {:?}", self.detokenizer)));
        }
        Ok(())
    }
}

/// Output of [`Session::hide`].
#[derive(Debug, Clone, PartialEq)]
pub struct Hidden {
    pub cover_text: String,
    pub cover: Vec<TokenId>,
    pub traces: Vec<StepTrace>,
}

/// An opened session: provider loaded and coder configured.
pub struct Session {
    config: SessionConfig,
    provider: Arc<dyn DistributionProvider>,
    method: Method,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Session {
    /// Opens a session, resolving relative paths against `base`.
    pub fn open(config: SessionConfig, base: Option<&Path>) -> Result<Self, PipelineError> {
        config.validate()?;
        let method = config.policy.build(config.precision).map_err(|e| PipelineError::Session(e.to_string()))?;
        let provider = config.provider.open(base)?;
        Self::with_provider(config, provider, method)
    }

    /// Opens a session over an already constructed provider.
    pub fn with_provider_arc(
        config: SessionConfig,
        provider: Arc<dyn DistributionProvider>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let method = config.policy.build(config.precision).map_err(|e| PipelineError::Session(e.to_string()))?;
        Self::with_provider(config, provider, method)
    }

    fn with_provider(
        config: SessionConfig,
        provider: Arc<dyn DistributionProvider>,
        method: Method,
    ) -> Result<Self, PipelineError> {
        let vocab = provider.vocabulary();
        if let Some(&bad) = config.context.iter().find(|t| !vocab.contains(**t)) {
            return Err(PipelineError::Session(format!("context token {bad} is not in the vocabulary")));
        }
        Ok(Self { config, provider, method })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn provider(&self) -> &dyn DistributionProvider {
        self.provider.as_ref()
    }

    pub fn fingerprint(&self) -> String {
        self.config.fingerprint()
    }

    /// Fails with [`PipelineError::FingerprintMismatch`] unless `expected`
    /// matches this session.
    pub fn check_fingerprint(&self, expected: &str) -> Result<(), PipelineError> {
        let actual = self.fingerprint();
        if !expected.trim().eq_ignore_ascii_case(&actual) {
            return Err(PipelineError::FingerprintMismatch { expected: expected.trim().to_string(), actual });
        }
        Ok(())
    }

    /// Conditioning context for the first step: the configured context, or
    /// a single EOS (sentence start) when none is configured.
    fn context(&self) -> Vec<TokenId> {
        if self.config.context.is_empty() {
            vec![self.provider.vocabulary().eos()]
        } else {
            self.config.context.clone()
        }
    }

    pub fn hide(&self, plaintext: &[u8]) -> Result<Hidden, PipelineError> {
        let ciphertext = encrypt(plaintext, &self.config.key)?;
        let out = self
            .method
            .encode(&ciphertext, self.provider.as_ref(), &self.context())
            .map_err(|e| PipelineError::at(Stage::Encode, e))?;
        let cover_text =
            self.provider.vocabulary().detokenize(&out.cover).map_err(|e| PipelineError::at(Stage::Detokenize, e))?;
        Ok(Hidden { cover_text, cover: out.cover, traces: out.traces })
    }

    pub fn reveal(&self, cover_text: &str) -> Result<Vec<u8>, PipelineError> {
        let cover =
            self.provider.vocabulary().tokenize(cover_text).map_err(|e| PipelineError::at(Stage::Tokenize, e))?;
        self.reveal_tokens(&cover)
    }

    pub fn reveal_tokens(&self, cover: &[TokenId]) -> Result<Vec<u8>, PipelineError> {
        let decoded = self
            .method
            .decode(cover, self.provider.as_ref(), &self.context())
            .map_err(|e| PipelineError::at(Stage::Decode, e))?;
        decrypt(&decoded.ciphertext, &self.config.key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keystream_xor_is_an_involution() {
        let key = b"k";
        let p = b"attack at dawn";
        let c = encrypt(p, key).unwrap();
        assert_eq!(decrypt(&c, key).unwrap(), p);
        let ks = keystream(key, 5);
        assert!(encrypt(&ks, key).unwrap().bits().iter().all(|&b| !b));
    }

    #[test]
    fn keystream_blocks_are_counter_hashes() {
        let ks = keystream(b"key", 40);
        let mut h = Sha256::new();
        h.update(b"key");
        h.update(1u64.to_be_bytes());
        assert_eq!(&ks[32..40], &h.finalize()[..8]);
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(encrypt(b"x", b""), Err(PipelineError::EmptyKey)));
        let err = encrypt(b"", b"k").unwrap_err();
        assert!(err.to_string().contains("message must be non-empty"), "{err}");
    }

    #[test]
    fn session_json_round_trip_and_fingerprint() {
        let mut cfg = SessionConfig::new(b"secret".to_vec(), ProviderSpec::synthetic(1, 50), MethodConfig::saac(0.01));
        cfg.context = vec![TokenId(0), TokenId(3)];
        let json = cfg.to_json();
        assert!(json.contains("\"c2VjcmV0\""));
        let back = SessionConfig::from_json(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint(), cfg.fingerprint());
        assert_eq!(cfg.fingerprint().len(), 64);
        let mut other = cfg.clone();
        other.precision = 24;
        assert_ne!(other.fingerprint(), cfg.fingerprint());
    }

    #[test]
    fn minimal_session_file_uses_defaults() {
        let cfg = SessionConfig::from_json(
            r#"{"key":"aw==","provider":{"kind":"ngram","synthetic":{"seed":3,"sentences":20}},
                "policy":{"policy":"huffman","h":3}}"#,
        )
        .unwrap();
        assert_eq!(cfg.precision, DEFAULT_PRECISION);
        assert_eq!(cfg.cipher, KEYSTREAM_ALGORITHM);
        assert!(SessionConfig::from_json(r#"{"key":"aw=="}"#).is_err());
    }

    #[test]
    fn hide_and_reveal() {
        let cfg = SessionConfig::new(b"secret".to_vec(), ProviderSpec::synthetic(1, 200), MethodConfig::saac(0.05));
        let session = Session::open(cfg, None).unwrap();
        let hidden = session.hide(b"hello").unwrap();
        assert!(!hidden.cover_text.is_empty());
        assert_eq!(session.reveal(&hidden.cover_text).unwrap(), b"hello");
        assert!(session.check_fingerprint(&session.fingerprint()).is_ok());
        assert_eq!(session.check_fingerprint("00").unwrap_err().kind(), ErrorKind::SessionMismatch);
    }
}
