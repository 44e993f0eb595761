use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Per-frame state symbol.
///
/// `Ns` is the single merged non-speech class used by the DNS scheme; the
/// three positional subclasses are used by DNS3 and activity detection.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateLabel {
    S,
    Ns,
    NsB,
    NsI,
    NsE,
    Unit(String),
}

pub const RESERVED_LABELS: [&str; 5] = ["S", "NS", "NS_b", "NS_i", "NS_e"];

impl StateLabel {
    pub fn unit(id: impl Into<String>) -> Self {
        StateLabel::Unit(id.into())
    }

    /// Whether this label denotes a non-speech class.
    pub fn is_ns(&self) -> bool {
        matches!(self, StateLabel::Ns | StateLabel::NsB | StateLabel::NsI | StateLabel::NsE)
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, StateLabel::Unit(_))
    }

    pub fn unit_id(&self) -> Option<&str> {
        match self {
            StateLabel::Unit(u) => Some(u),
            _ => None,
        }
    }

    /// Collapses unit labels onto the generic speech state `S`.
    pub fn to_activity(&self) -> StateLabel {
        match self {
            StateLabel::Unit(_) => StateLabel::S,
            other => other.clone(),
        }
    }

    /// Collapses the positional non-speech subclasses onto `Ns`.
    pub fn to_merged_ns(&self) -> StateLabel {
        if self.is_ns() {
            StateLabel::Ns
        } else {
            self.clone()
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            StateLabel::S => "S",
            StateLabel::Ns => "NS",
            StateLabel::NsB => "NS_b",
            StateLabel::NsI => "NS_i",
            StateLabel::NsE => "NS_e",
            StateLabel::Unit(u) => u,
        }
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StateLabel {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "S" => StateLabel::S,
            "NS" => StateLabel::Ns,
            "NS_b" => StateLabel::NsB,
            "NS_i" => StateLabel::NsI,
            "NS_e" => StateLabel::NsE,
            other => StateLabel::Unit(other.to_string()),
        })
    }
}

impl Serialize for StateLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for StateLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().unwrap())
    }
}

/// Run-length encoding of a label sequence: `(label, start, len)` triples.
pub fn label_runs(labels: &[StateLabel]) -> Vec<(StateLabel, usize, usize)> {
    let mut runs: Vec<(StateLabel, usize, usize)> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some((prev, _, len)) if prev == l => *len += 1,
            _ => runs.push((l.clone(), i, 1)),
        }
    }
    runs
}

/// Checks the run-level grammar `NS_b? (Unit+ NS_i)* Unit+ NS_e?`, where
/// "Unit" also admits the generic speech label `S`.
pub fn satisfies_ns_grammar(labels: &[StateLabel]) -> bool {
    let runs = label_runs(labels);
    if runs.is_empty() {
        return false;
    }
    let mut i = 0;
    if runs[0].0 == StateLabel::NsB {
        i = 1;
    }
    let mut end = runs.len();
    if runs[end - 1].0 == StateLabel::NsE {
        end -= 1;
    }
    if i >= end {
        return false;
    }
    let speech = |l: &StateLabel| l.is_unit() || *l == StateLabel::S;
    // body alternates speech blocks and single NS_i runs, starting and ending with speech
    let mut expect_speech = true;
    let mut in_speech = false;
    for (l, _, _) in &runs[i..end] {
        if speech(l) {
            in_speech = true;
            expect_speech = false;
        } else if *l == StateLabel::NsI {
            if expect_speech || !in_speech {
                return false;
            }
            expect_speech = true;
            in_speech = false;
        } else {
            return false;
        }
    }
    in_speech
}
