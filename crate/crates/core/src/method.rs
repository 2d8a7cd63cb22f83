//! Method configuration shared by sessions, benchmarks and the CLI.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{BinLm, Huffman, PatientHuffman, DEFAULT_PATIENT_H};
use crate::coder::ArithmeticCoder;
pub use crate::coder::{DecodeOutput, EncodeOutput};
use crate::lm::{DistributionProvider, TokenId};
use crate::message::Ciphertext;
use crate::truncation::{Schedule, TruncationPolicy, DEFAULT_K_MAX};
use crate::CodecError;

/// A coding method and its parameters, as written in config files:
/// `{"policy":"saac","delta0":0.01}`, `{"policy":"static","k":16}`,
/// `{"policy":"binlm","b":3}`, `{"policy":"huffman","h":5}`,
/// `{"policy":"patient","epsilon":1.0,"seed":7}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    Static {
        k: usize,
    },
    Saac {
        delta0: f64,
        #[serde(default)]
        schedule: Schedule,
        #[serde(default = "default_k_max")]
        k_max: usize,
    },
    Binlm {
        b: u32,
    },
    Huffman {
        h: u32,
    },
    Patient {
        epsilon: f64,
        seed: u64,
        #[serde(default = "default_patient_h")]
        h: u32,
    },
}

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

fn default_patient_h() -> u32 {
    DEFAULT_PATIENT_H
}

impl MethodConfig {
    pub fn saac(delta0: f64) -> Self {
        Self::Saac { delta0, schedule: Schedule::Constant, k_max: DEFAULT_K_MAX }
    }

    /// Builds the coder, validating parameters and precision.
    pub fn build(&self, precision: u32) -> Result<Method, CodecError> {
        Ok(match *self {
            Self::Static { k } => Method::Arithmetic(ArithmeticCoder::new(TruncationPolicy::static_k(k)?, precision)?),
            Self::Saac { delta0, schedule, k_max } => Method::Arithmetic(ArithmeticCoder::new(
                TruncationPolicy::self_adjusting_capped(delta0, schedule, k_max)?,
                precision,
            )?),
            Self::Binlm { b } => Method::BinLm(BinLm::new(b)?),
            Self::Huffman { h } => Method::Huffman(Huffman::new(h)?),
            Self::Patient { epsilon, seed, h } => Method::Patient(PatientHuffman::new(epsilon, seed, h)?),
        })
    }

    /// Method family name.
    pub fn family(&self) -> &'static str {
        match self {
            Self::Static { .. } => "static",
            Self::Saac { .. } => "saac",
            Self::Binlm { .. } => "binlm",
            Self::Huffman { .. } => "huffman",
            Self::Patient { .. } => "patient",
        }
    }

    /// Parameter summary, e.g. `delta0=0.01` or `k=16`.
    pub fn params(&self) -> String {
        match *self {
            Self::Static { k } => format!("k={k}"),
            Self::Saac { delta0, schedule, k_max } => {
                let mut s = format!("delta0={delta0}");
                if schedule != Schedule::Constant {
                    s.push_str(",schedule=inverse_square");
                }
                if k_max != DEFAULT_K_MAX {
                    s.push_str(&format!(",k_max={k_max}"));
                }
                s
            }
            Self::Binlm { b } => format!("b={b}"),
            Self::Huffman { h } => format!("h={h}"),
            Self::Patient { epsilon, h, .. } => {
                if h == DEFAULT_PATIENT_H {
                    format!("epsilon={epsilon}")
                } else {
                    format!("epsilon={epsilon},h={h}")
                }
            }
        }
    }

    pub fn label(&self) -> String {
        format!("{}({})", self.family(), self.params())
    }
}

impl fmt::Display for MethodConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses either a JSON object or the short form `family:value`, e.g.
/// `saac:0.01`, `saac:0.01:inverse_square`, `static:16`, `binlm:2`,
/// `huffman:5`, `patient:1.0` (seed 0).
impl FromStr for MethodConfig {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.starts_with('{') {
            return serde_json::from_str(s).map_err(|e| CodecError::InvalidConfig(format!("policy: {e}")));
        }
        let bad = || CodecError::InvalidConfig(format!("unrecognized policy {s:?}"));
        let mut parts = s.split(':');
        let family = parts.next().ok_or_else(bad)?;
        let value = parts.next().ok_or_else(bad)?;
        let extra = parts.next();
        if parts.next().is_some() {
            return Err(bad());
        }
        let int = |v: &str| v.parse::<u32>().map_err(|_| bad());
        let real = |v: &str| v.parse::<f64>().map_err(|_| bad());
        let cfg = match (family, extra) {
            ("saac", extra) => {
                let schedule = match extra {
                    None | Some("constant") => Schedule::Constant,
                    Some("inverse_square") => Schedule::InverseSquare,
                    Some(_) => return Err(bad()),
                };
                Self::Saac { delta0: real(value)?, schedule, k_max: DEFAULT_K_MAX }
            }
            ("static", None) => Self::Static { k: int(value)? as usize },
            ("binlm", None) => Self::Binlm { b: int(value)? },
            ("huffman", None) => Self::Huffman { h: int(value)? },
            ("patient", None) => Self::Patient { epsilon: real(value)?, seed: 0, h: DEFAULT_PATIENT_H },
            _ => return Err(bad()),
        };
        Ok(cfg)
    }
}

/// A configured coder.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Arithmetic(ArithmeticCoder),
    BinLm(BinLm),
    Huffman(Huffman),
    Patient(PatientHuffman),
}

impl Method {
    pub fn encode(
        &self,
        ciphertext: &Ciphertext,
        provider: &dyn DistributionProvider,
        ctx: &[TokenId],
    ) -> Result<EncodeOutput, CodecError> {
        match self {
            Self::Arithmetic(c) => c.encode(ciphertext, provider, ctx),
            Self::BinLm(c) => c.encode(ciphertext, provider, ctx),
            Self::Huffman(c) => c.encode(ciphertext, provider, ctx),
            Self::Patient(c) => c.encode(ciphertext, provider, ctx),
        }
    }

    pub fn decode(
        &self,
        cover: &[TokenId],
        provider: &dyn DistributionProvider,
        ctx: &[TokenId],
    ) -> Result<DecodeOutput, CodecError> {
        match self {
            Self::Arithmetic(c) => c.decode(cover, provider, ctx),
            Self::BinLm(c) => c.decode(cover, provider, ctx),
            Self::Huffman(c) => c.decode(cover, provider, ctx),
            Self::Patient(c) => c.decode(cover, provider, ctx),
        }
    }
}
