use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LmError;

/// Plain-text corpus: one sentence per line, whitespace tokenized.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    sentences: Vec<Vec<String>>,
}

impl Corpus {
    /// Parses UTF-8 text. Blank lines are skipped.
    pub fn from_text(text: &str) -> Self {
        let sentences = text
            .lines()
            .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect();
        Self { sentences }
    }

    pub fn from_sentences(sentences: Vec<Vec<String>>) -> Self {
        Self { sentences: sentences.into_iter().filter(|s| !s.is_empty()).collect() }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, LmError> {
        Ok(Self::from_text(&std::fs::read_to_string(path)?))
    }

    /// Concatenates several corpus files.
    pub fn read_all<P: AsRef<Path>>(paths: &[P]) -> Result<Self, LmError> {
        let mut sentences = Vec::new();
        for p in paths {
            sentences.extend(Self::read(p)?.sentences);
        }
        Ok(Self { sentences })
    }

    pub fn sentences(&self) -> &[Vec<String>] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&s.join(" "));
            out.push('\n');
        }
        out
    }

    /// Splits off the last `n` sentences.
    pub fn split_tail(mut self, n: usize) -> (Self, Self) {
        let at = self.sentences.len().saturating_sub(n);
        let tail = self.sentences.split_off(at);
        (self, Self { sentences: tail })
    }
}

const DETERMINERS: &[&str] = &["the", "a", "this", "every", "my", "our", "that", "some", "one", "no"];
const ADJECTIVES: &[&str] = &[
    "quick", "lazy", "old", "new", "small", "large", "brown", "quiet", "bright", "dark", "young", "strange", "happy",
    "tired", "busy", "cold", "warm", "tall", "short", "green", "red", "blue", "white", "black", "gentle", "clever",
    "proud", "empty", "heavy", "light", "early", "late", "simple", "careful", "famous", "hidden", "broken", "narrow",
    "wide", "silent", "loud", "sharp", "soft", "rough", "golden", "silver", "ancient", "modern", "distant", "nearby",
    "curious", "patient", "angry", "calm", "hungry", "lucky", "rare", "common", "wild", "friendly",
];
const NOUNS: &[&str] = &[
    "dog",
    "fox",
    "cat",
    "man",
    "woman",
    "child",
    "teacher",
    "doctor",
    "river",
    "city",
    "house",
    "tree",
    "road",
    "book",
    "letter",
    "window",
    "door",
    "garden",
    "market",
    "train",
    "ship",
    "bird",
    "horse",
    "farmer",
    "king",
    "queen",
    "student",
    "friend",
    "neighbor",
    "village",
    "mountain",
    "forest",
    "lake",
    "bridge",
    "tower",
    "school",
    "church",
    "station",
    "street",
    "room",
    "table",
    "chair",
    "lamp",
    "clock",
    "song",
    "story",
    "plan",
    "idea",
    "problem",
    "answer",
    "question",
    "morning",
    "evening",
    "night",
    "day",
    "week",
    "year",
    "storm",
    "wind",
    "rain",
    "sun",
    "moon",
    "star",
    "field",
    "boat",
    "car",
    "bus",
    "engine",
    "machine",
    "computer",
    "phone",
    "picture",
    "paper",
    "report",
    "meeting",
    "game",
    "team",
    "player",
    "coach",
    "army",
    "soldier",
    "captain",
    "sailor",
    "pilot",
    "driver",
    "baker",
    "painter",
    "writer",
    "singer",
    "dancer",
    "judge",
    "lawyer",
    "nurse",
    "officer",
    "guard",
    "thief",
    "stranger",
    "visitor",
    "guest",
    "owner",
    "worker",
    "artist",
    "scientist",
    "engineer",
    "manager",
    "leader",
    "member",
    "partner",
    "brother",
    "sister",
    "mother",
    "father",
    "uncle",
    "island",
    "valley",
    "desert",
    "ocean",
    "harbor",
    "castle",
    "palace",
    "museum",
    "library",
    "theater",
    "hospital",
    "office",
    "factory",
    "farm",
    "shop",
    "bank",
    "hotel",
    "kitchen",
    "wall",
    "floor",
    "roof",
    "gate",
    "path",
    "hill",
    "stone",
    "flower",
    "apple",
    "bread",
    "coffee",
    "wine",
    "water",
    "fire",
    "key",
    "box",
    "bag",
    "coat",
    "hat",
    "shoe",
    "ring",
    "map",
];
const TRANSITIVE: &[&str] = &[
    "sees",
    "finds",
    "follows",
    "meets",
    "helps",
    "watches",
    "likes",
    "visits",
    "calls",
    "remembers",
    "builds",
    "paints",
    "reads",
    "writes",
    "opens",
    "closes",
    "carries",
    "leaves",
    "takes",
    "brings",
    "buys",
    "sells",
    "needs",
    "wants",
    "loves",
    "hates",
    "fears",
    "knows",
    "answers",
    "asks",
    "thanks",
    "greets",
    "chases",
    "catches",
    "misses",
    "passes",
    "reaches",
    "crosses",
    "guards",
    "cleans",
    "fixes",
    "breaks",
    "moves",
    "pulls",
    "pushes",
    "holds",
    "keeps",
    "shows",
    "teaches",
    "joins",
];
const INTRANSITIVE: &[&str] = &[
    "sleeps",
    "runs",
    "walks",
    "waits",
    "laughs",
    "smiles",
    "sings",
    "dances",
    "works",
    "rests",
    "falls",
    "arrives",
    "returns",
    "listens",
    "wonders",
    "speaks",
    "jumps",
    "stays",
    "travels",
    "disappears",
];
const ADVERBS: &[&str] = &[
    "quickly",
    "slowly",
    "quietly",
    "again",
    "today",
    "yesterday",
    "often",
    "rarely",
    "alone",
    "together",
    "outside",
    "inside",
    "early",
    "later",
    "there",
    "here",
    "gladly",
    "suddenly",
];
const PREPOSITIONS: &[&str] = &[
    "near", "in", "on", "under", "behind", "beside", "across", "through", "over", "from", "to", "with", "without",
    "after", "before", "around", "past", "along",
];
const PRONOUNS: &[&str] = &["he", "she", "it", "someone", "everyone", "nobody"];
const SAYING: &[&str] = &["says", "thinks", "believes", "hopes", "hears", "knows", "feels"];
const NUMBERS: &[&str] = &["two", "three", "four", "five", "six", "seven", "many", "several", "few", "ten"];
const ONSETS: &[&str] = &[
    "ka", "lo", "mi", "ra", "te", "su", "no", "be", "da", "vi", "ro", "ma", "li", "jo", "sa", "pe", "ta", "ne", "fa",
    "go", "ha", "ze",
];
const CODAS: &[&str] = &["ra", "lin", "mon", "sa", "dor", "vik", "ton", "na", "rel", "mir", "zo", "bel", "dan", "ko"];

fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|r| 1.0 / (r as f64 + 1.0))).expect("non-empty word list")
}

struct Lexicon {
    nouns: Vec<String>,
    plurals: Vec<String>,
    names: Vec<String>,
    plural_verbs: Vec<String>,
}

impl Lexicon {
    fn new() -> Self {
        let nouns: Vec<String> = NOUNS.iter().map(|s| s.to_string()).collect();
        let plurals = nouns
            .iter()
            .map(|n| match n.as_str() {
                "man" => "men".to_string(),
                "woman" => "women".to_string(),
                "child" => "children".to_string(),
                "city" => "cities".to_string(),
                "army" => "armies".to_string(),
                "story" => "stories".to_string(),
                "library" => "libraries".to_string(),
                "factory" => "factories".to_string(),
                "valley" => "valleys".to_string(),
                "day" => "days".to_string(),
                n if n.ends_with('s') || n.ends_with('x') || n.ends_with("ch") => format!("{n}es"),
                n => format!("{n}s"),
            })
            .collect();
        let names = ONSETS.iter().flat_map(|o| CODAS.iter().map(move |c| capitalize(&format!("{o}{c}")))).collect();
        let plural_verbs = TRANSITIVE
            .iter()
            .map(|v| match *v {
                "catches" | "passes" | "reaches" | "crosses" | "pushes" | "teaches" | "misses" | "watches" => {
                    v[..v.len() - 2].to_string()
                }
                "carries" => "carry".to_string(),
                v => v[..v.len() - 1].to_string(),
            })
            .collect();
        Self { nouns, plurals, names, plural_verbs }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// Deterministic pseudo-English corpus from a small probabilistic grammar
/// with Zipf-distributed word choices.
///
/// Used as training data for the toy n-gram model; distributions range from
/// nearly deterministic (after determiners) to very flat (after verbs).
pub fn synthetic_corpus(seed: u64, sentences: usize) -> Corpus {
    let lex = Lexicon::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let det = zipf(DETERMINERS.len());
    let adj = zipf(ADJECTIVES.len());
    let noun = zipf(lex.nouns.len());
    let trans = zipf(TRANSITIVE.len());
    let intrans = zipf(INTRANSITIVE.len());
    let adv = zipf(ADVERBS.len());
    let prep = zipf(PREPOSITIONS.len());
    let pron = zipf(PRONOUNS.len());
    let saying = zipf(SAYING.len());
    let number = zipf(NUMBERS.len());
    let name = zipf(lex.names.len());
    let template = WeightedIndex::new([30.0, 18.0, 12.0, 10.0, 10.0, 8.0, 4.0]).expect("weights");

    let mut out = Vec::with_capacity(sentences);
    for _ in 0..sentences {
        let mut s: Vec<String> = Vec::new();
        let np = |s: &mut Vec<String>, rng: &mut ChaCha8Rng| {
            s.push(DETERMINERS[det.sample(rng)].into());
            if rng.gen_bool(0.45) {
                s.push(ADJECTIVES[adj.sample(rng)].into());
            }
            s.push(lex.nouns[noun.sample(rng)].clone());
        };
        match template.sample(&mut rng) {
            0 => {
                np(&mut s, &mut rng);
                s.push(TRANSITIVE[trans.sample(&mut rng)].into());
                np(&mut s, &mut rng);
                if rng.gen_bool(0.35) {
                    s.push(PREPOSITIONS[prep.sample(&mut rng)].into());
                    np(&mut s, &mut rng);
                }
            }
            1 => {
                s.push(lex.names[name.sample(&mut rng)].clone());
                s.push(INTRANSITIVE[intrans.sample(&mut rng)].into());
                if rng.gen_bool(0.5) {
                    s.push(ADVERBS[adv.sample(&mut rng)].into());
                }
                if rng.gen_bool(0.4) {
                    s.push(PREPOSITIONS[prep.sample(&mut rng)].into());
                    np(&mut s, &mut rng);
                }
            }
            2 => {
                np(&mut s, &mut rng);
                s.push(TRANSITIVE[trans.sample(&mut rng)].into());
                s.push(lex.names[name.sample(&mut rng)].clone());
            }
            3 => {
                s.push(PRONOUNS[pron.sample(&mut rng)].into());
                s.push(SAYING[saying.sample(&mut rng)].into());
                s.push("that".into());
                np(&mut s, &mut rng);
                s.push(INTRANSITIVE[intrans.sample(&mut rng)].into());
            }
            4 => {
                let n = number.sample(&mut rng);
                s.push(NUMBERS[n].into());
                if rng.gen_bool(0.3) {
                    s.push(ADJECTIVES[adj.sample(&mut rng)].into());
                }
                s.push(lex.plurals[noun.sample(&mut rng)].clone());
                s.push(lex.plural_verbs[trans.sample(&mut rng)].clone());
                np(&mut s, &mut rng);
            }
            5 => {
                s.extend(["the", "quick", "brown", "fox", "jumps", "over", "the", "lazy", "dog"].map(String::from));
            }
            _ => {
                s.push(lex.names[name.sample(&mut rng)].clone());
                s.push("and".into());
                s.push(lex.names[name.sample(&mut rng)].clone());
                s.push(INTRANSITIVE[intrans.sample(&mut rng)].into());
                s.push("together".into());
            }
        }
        s.push(".".into());
        out.push(s);
    }
    Corpus { sentences: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_corpus_is_deterministic() {
        assert_eq!(synthetic_corpus(7, 50), synthetic_corpus(7, 50));
        assert_ne!(synthetic_corpus(7, 50), synthetic_corpus(8, 50));
    }

    #[test]
    fn text_round_trip_skips_blank_lines() {
        let c = Corpus::from_text("a b\n\n  c  \n");
        assert_eq!(c.len(), 2);
        assert_eq!(c.to_text(), "a b\nc\n");
    }

    #[test]
    fn split_tail_keeps_order() {
        let (train, held) = synthetic_corpus(1, 10).split_tail(3);
        assert_eq!(train.len(), 7);
        assert_eq!(held.len(), 3);
        assert_eq!(held.sentences()[2], synthetic_corpus(1, 10).sentences()[9]);
    }
}
