use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{LmError, TokenId};

/// Surface form of the end-of-sentence token.
pub const EOS_SURFACE: &str = "</s>";

/// Bidirectional token table with dense ids.
///
/// The end-of-sentence token is an ordinary member. In text it is written as
/// a line break, so whitespace tokenization and detokenization round-trip.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    eos: TokenId,
}

impl Vocabulary {
    /// Builds a vocabulary from surfaces in id order. [`EOS_SURFACE`] must be
    /// present; surfaces must be unique and free of whitespace.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, LmError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(LmError::InvalidVocabulary(format!("token {tok:?} is empty or contains whitespace")));
            }
            let id = u32::try_from(i).map_err(|_| LmError::InvalidVocabulary("too many tokens".into()))?;
            if index.insert(tok.clone(), TokenId(id)).is_some() {
                return Err(LmError::InvalidVocabulary(format!("duplicate token {tok:?}")));
            }
        }
        let eos =
            *index.get(EOS_SURFACE).ok_or_else(|| LmError::InvalidVocabulary(format!("missing {EOS_SURFACE}")))?;
        Ok(Self { tokens, index, eos })
    }

    /// Vocabulary of a tokenized corpus: EOS gets id 0, words follow in order
    /// of first occurrence.
    pub fn from_sentences<S: AsRef<str>>(sentences: &[Vec<S>]) -> Result<Self, LmError> {
        let mut tokens = vec![EOS_SURFACE.to_string()];
        let mut seen: HashMap<&str, ()> = HashMap::new();
        seen.insert(EOS_SURFACE, ());
        for word in sentences.iter().flatten() {
            let word = word.as_ref();
            if seen.insert(word, ()).is_none() {
                tokens.push(word.to_string());
            }
        }
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id.index()).map(String::as_str)
    }

    pub fn id(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        id.index() < self.tokens.len()
    }

    /// Tokenizes text: whitespace-separated words, with every line break
    /// mapped to the EOS token.
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        let mut out = Vec::new();
        for (i, line) in text.split('\n').enumerate() {
            if i > 0 {
                out.push(self.eos);
            }
            for word in line.split_whitespace() {
                out.push(self.id(word).ok_or_else(|| LmError::UnknownWord(word.to_string()))?);
            }
        }
        Ok(out)
    }

    /// Inverse of [`tokenize`](Self::tokenize).
    pub fn detokenize(&self, ids: &[TokenId]) -> Result<String, LmError> {
        let mut out = String::new();
        let mut line_start = true;
        for &id in ids {
            if id == self.eos {
                out.push('\n');
                line_start = true;
                continue;
            }
            let word = self.surface(id).ok_or(LmError::InvalidToken { id: id.0, size: self.len() })?;
            if !line_start {
                out.push(' ');
            }
            out.push_str(word);
            line_start = false;
        }
        Ok(out)
    }

    /// JSON object mapping surface to id.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, u32> = self.tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect();
        serde_json::to_string_pretty(&map).expect("string map serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, LmError> {
        let map: BTreeMap<String, u32> =
            serde_json::from_str(json).map_err(|e| LmError::InvalidVocabulary(e.to_string()))?;
        let mut tokens = vec![None; map.len()];
        for (surface, id) in map {
            let slot = tokens
                .get_mut(id as usize)
                .ok_or_else(|| LmError::InvalidVocabulary(format!("id {id} is not dense")))?;
            if slot.replace(surface).is_some() {
                return Err(LmError::InvalidVocabulary(format!("id {id} assigned twice")));
            }
        }
        Self::from_tokens(tokens.into_iter().map(|t| t.expect("dense ids fill every slot")).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LmError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LmError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}
