//! Template grammar for single-sentence instructions.
//!
//! The parser looks for a known verb and the first grid-object noun (key,
//! door, gem). The word directly before the noun is taken as its color unless
//! it is a determiner, number or one of a few positional adjectives. Anything
//! without both a verb and a noun is out of domain.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Fetch,
    Unlock,
    Pass,
    OutOfDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Key,
    Door,
    Gem,
    None,
}

impl ObjectKind {
    pub fn noun(self) -> &'static str {
        match self {
            ObjectKind::Key => "key",
            ObjectKind::Door => "door",
            ObjectKind::Gem => "gem",
            ObjectKind::None => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Count {
    Specified(u32),
    Singular,
    Plural,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticInstruction {
    pub action: Action,
    pub object_kind: ObjectKind,
    /// Lowercased color word as written; not limited to on-grid colors.
    pub color: Option<String>,
    pub count: Count,
    pub raw: String,
}

impl SemanticInstruction {
    fn out_of_domain(raw: &str) -> Self {
        SemanticInstruction {
            action: Action::OutOfDomain,
            object_kind: ObjectKind::None,
            color: None,
            count: Count::Singular,
            raw: raw.to_string(),
        }
    }

    /// Same instruction ignoring the original surface text.
    pub fn same_meaning(&self, other: &SemanticInstruction) -> bool {
        self.action == other.action
            && self.object_kind == other.object_kind
            && self.color == other.color
            && self.count == other.count
    }
}

impl fmt::Display for SemanticInstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {:?}", self.action, self.object_kind)?;
        if let Some(c) = &self.color {
            write!(f, " color={c}")?;
        }
        write!(f, " {:?}", self.count)
    }
}

const FETCH_VERBS: &[&str] = &["get", "grab", "collect", "fetch", "find", "retrieve"];
const PASS_VERBS: &[&str] = &["pass", "give", "hand", "bring"];
const UNLOCK_VERBS: &[&str] = &["unlock", "open"];

const NUMBER_WORDS: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

/// Words that may precede a noun without being a color.
const NON_COLOR: &[&str] = &[
    "the", "a", "an", "me", "my", "that", "this", "those", "these", "both", "all", "some", "any",
    "another", "other", "same", "closest", "nearest", "only", "single", "first", "second", "up",
    "us", "you", "your", "of", "for", "to", "and", "please", "each", "every", "more",
];

fn normalize(text: &str) -> Vec<String> {
    text.chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '\'' {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn noun_of(word: &str) -> Option<(ObjectKind, bool)> {
    Some(match word {
        "key" => (ObjectKind::Key, false),
        "keys" => (ObjectKind::Key, true),
        "door" => (ObjectKind::Door, false),
        "doors" => (ObjectKind::Door, true),
        "gem" => (ObjectKind::Gem, false),
        "gems" => (ObjectKind::Gem, true),
        _ => return None,
    })
}

fn number_of(word: &str) -> Option<u32> {
    if let Some(i) = NUMBER_WORDS.iter().position(|w| *w == word) {
        return Some(i as u32 + 1);
    }
    if word == "both" {
        return Some(2);
    }
    word.parse::<u32>().ok().filter(|&n| n >= 1)
}

fn verb_of(words: &[String], i: usize) -> Option<Action> {
    let w = words[i].as_str();
    if w == "pick" && words.get(i + 1).is_some_and(|n| n == "up") {
        return Some(Action::Fetch);
    }
    if FETCH_VERBS.contains(&w) {
        Some(Action::Fetch)
    } else if PASS_VERBS.contains(&w) {
        Some(Action::Pass)
    } else if UNLOCK_VERBS.contains(&w) {
        Some(Action::Unlock)
    } else {
        None
    }
}

/// Parses an instruction; total and deterministic.
pub fn parse_instruction(text: &str) -> SemanticInstruction {
    let words = normalize(text);
    let Some(noun_at) = words.iter().position(|w| noun_of(w).is_some()) else {
        return SemanticInstruction::out_of_domain(text);
    };
    let Some(action) = (0..noun_at).find_map(|i| verb_of(&words, i)) else {
        return SemanticInstruction::out_of_domain(text);
    };
    let (object_kind, plural) = noun_of(&words[noun_at]).expect("noun position");

    let modifiers = &words[..noun_at];
    let color = modifiers
        .last()
        .filter(|w| {
            !NON_COLOR.contains(&w.as_str())
                && number_of(w).is_none()
                && verb_of(&words, noun_at - 1).is_none()
                && w.as_str() != "up"
        })
        .cloned();

    // A number word may sit directly before the noun or before its color.
    let count_word = if color.is_some() {
        noun_at.checked_sub(2)
    } else {
        noun_at.checked_sub(1)
    };
    let count = match count_word.and_then(|i| number_of(&words[i])) {
        Some(n) => Count::Specified(n),
        None if plural => Count::Plural,
        None => Count::Singular,
    };

    SemanticInstruction {
        action,
        object_kind,
        color,
        count,
        raw: text.to_string(),
    }
}
