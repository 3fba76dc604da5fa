use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Opening of the special-token wrapper used for injected senses.
pub const SENSE_TOKEN_PREFIX: &str = "<WN:";
pub const SENSE_TOKEN_SUFFIX: &str = ">";

/// WordNet part of speech, keeping satellite adjectives apart from head adjectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pos {
    #[serde(rename = "n")]
    Noun,
    #[serde(rename = "v")]
    Verb,
    #[serde(rename = "a")]
    Adjective,
    #[serde(rename = "s")]
    Satellite,
    #[serde(rename = "r")]
    Adverb,
}

impl Pos {
    pub fn from_char(c: char) -> Option<Pos> {
        match c {
            'n' => Some(Pos::Noun),
            'v' => Some(Pos::Verb),
            'a' => Some(Pos::Adjective),
            's' => Some(Pos::Satellite),
            'r' => Some(Pos::Adverb),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pos::Noun => 'n',
            Pos::Verb => 'v',
            Pos::Adjective => 'a',
            Pos::Satellite => 's',
            Pos::Adverb => 'r',
        }
    }

    /// Satellites fold into adjectives; everything else maps to itself.
    pub fn folded(self) -> Pos {
        match self {
            Pos::Satellite => Pos::Adjective,
            p => p,
        }
    }

    /// Sense-key `ss_type` digit (1 noun, 2 verb, 3 adjective, 4 adverb, 5 satellite).
    pub fn from_ss_type(digit: u8) -> Option<Pos> {
        match digit {
            1 => Some(Pos::Noun),
            2 => Some(Pos::Verb),
            3 => Some(Pos::Adjective),
            4 => Some(Pos::Adverb),
            5 => Some(Pos::Satellite),
            _ => None,
        }
    }

    /// Name of the database file suffix (`data.noun`, ...) holding this part of speech.
    pub fn file_suffix(self) -> &'static str {
        match self {
            Pos::Noun => "noun",
            Pos::Verb => "verb",
            Pos::Adjective | Pos::Satellite => "adj",
            Pos::Adverb => "adv",
        }
    }
}

/// Canonical grounded concept identifier, rendered `lemma.pos.NN`.
///
/// The part of speech stored here is always folded (`s` renders as `a`), so
/// the text form is the identity: equality, hashing and ordering all follow
/// the rendered string.
#[derive(Clone)]
pub struct SynsetId {
    text: String,
    lemma_len: usize,
    pos: Pos,
    sense: u32,
}

impl SynsetId {
    pub fn new(lemma: &str, pos: Pos, sense: u32) -> Result<SynsetId> {
        validate_lemma(lemma).map_err(|m| Error::Invalid(format!("synset lemma `{lemma}`: {m}")))?;
        if sense == 0 {
            return Err(Error::Invalid(format!(
                "synset `{lemma}`: sense number must be positive"
            )));
        }
        let pos = pos.folded();
        Ok(SynsetId {
            text: format!("{lemma}.{}.{sense:02}", pos.as_char()),
            lemma_len: lemma.len(),
            pos,
            sense,
        })
    }

    pub fn lemma(&self) -> &str {
        &self.text[..self.lemma_len]
    }

    pub fn pos(&self) -> Pos {
        self.pos
    }

    pub fn sense(&self) -> u32 {
        self.sense
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Special-token form, `<WN:lemma.pos.NN>`.
    pub fn to_token(&self) -> String {
        format!("{SENSE_TOKEN_PREFIX}{}{SENSE_TOKEN_SUFFIX}", self.text)
    }

    pub fn from_token(token: &str) -> Result<SynsetId> {
        token
            .strip_prefix(SENSE_TOKEN_PREFIX)
            .and_then(|s| s.strip_suffix(SENSE_TOKEN_SUFFIX))
            .ok_or_else(|| Error::Invalid(format!("`{token}` is not a <WN:...> sense token")))?
            .parse()
    }
}

fn validate_lemma(lemma: &str) -> std::result::Result<(), &'static str> {
    if lemma.is_empty() {
        return Err("empty");
    }
    if lemma.chars().any(|c| c.is_whitespace() || c == '<' || c == '>') {
        return Err("contains whitespace or angle brackets");
    }
    if lemma.chars().any(char::is_uppercase) {
        return Err("must be lowercase");
    }
    Ok(())
}

impl FromStr for SynsetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<SynsetId> {
        let bad = |why: &str| Error::Invalid(format!("malformed synset id `{s}`: {why}"));
        let mut parts = s.rsplitn(3, '.');
        let sense = parts.next().ok_or_else(|| bad("missing sense number"))?;
        let pos = parts.next().ok_or_else(|| bad("missing part of speech"))?;
        let lemma = parts.next().ok_or_else(|| bad("missing lemma"))?;
        if sense.len() < 2 || !sense.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad("sense number must be at least two digits"));
        }
        let sense: u32 = sense.parse().map_err(|_| bad("sense number out of range"))?;
        let mut chars = pos.chars();
        let pos = match (chars.next(), chars.next()) {
            (Some(c), None) => Pos::from_char(c).ok_or_else(|| bad("unknown part of speech"))?,
            _ => return Err(bad("unknown part of speech")),
        };
        let id = SynsetId::new(lemma, pos, sense)?;
        // "dog.n.001" would otherwise parse to a different canonical text
        if id.text != s && pos != Pos::Satellite {
            return Err(bad("not in canonical form"));
        }
        Ok(id)
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl fmt::Debug for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SynsetId({})", self.text)
    }
}

impl PartialEq for SynsetId {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

impl Eq for SynsetId {}

impl Hash for SynsetId {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.text.hash(state)
    }
}

impl PartialOrd for SynsetId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SynsetId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.text.cmp(&other.text)
    }
}

impl Serialize for SynsetId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for SynsetId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
