//! Surface-level linguistic signals and the Query Complexity Index (QCI).
//!
//! Five signals are extracted from a tokenized query: four binary lexicon
//! indicators (interrogative, conjunction, comparison, sequence) and a
//! saturating length ratio. The QCI is their weighted sum.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedQuery {
    pub raw_text: String,
    pub tokens: Vec<String>,
}

impl TokenizedQuery {
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.iter().any(|t| t == token)
    }
}

/// Lowercase, split on whitespace runs, strip non-alphanumeric characters at
/// both ends of each fragment, drop what is left empty.
pub fn tokenize(text: &str) -> TokenizedQuery {
    let lowered = text.to_lowercase();
    let tokens = lowered
        .split_whitespace()
        .map(|frag| frag.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect();
    TokenizedQuery {
        raw_text: text.to_owned(),
        tokens,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalVector {
    pub wh: u8,
    pub conjunction: u8,
    pub comparison: u8,
    pub sequence: u8,
    pub length: f64,
}

impl SignalVector {
    pub fn new(wh: u8, conjunction: u8, comparison: u8, sequence: u8, length: f64) -> Self {
        Self {
            wh,
            conjunction,
            comparison,
            sequence,
            length,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            f64::from(self.wh),
            f64::from(self.conjunction),
            f64::from(self.comparison),
            f64::from(self.sequence),
            self.length,
        ]
    }

    pub fn has_conjunction(&self) -> bool {
        self.conjunction == 1
    }

    pub fn has_comparison(&self) -> bool {
        self.comparison == 1
    }
}

/// Per-signal weights. Defaults reproduce the published weighting, which sums to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QciWeights {
    pub wh: f64,
    pub conjunction: f64,
    pub comparison: f64,
    pub sequence: f64,
    pub length: f64,
}

impl Default for QciWeights {
    fn default() -> Self {
        Self {
            wh: 0.25,
            conjunction: 0.20,
            comparison: 0.20,
            sequence: 0.15,
            length: 0.20,
        }
    }
}

impl QciWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.wh,
            self.conjunction,
            self.comparison,
            self.sequence,
            self.length,
        ]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let names = ["wh", "conjunction", "comparison", "sequence", "length"];
        for (name, w) in names.iter().zip(self.as_array()) {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::config(
                    format!("qci.weights.{name}"),
                    format!("weight must be a finite value >= 0, got {w}"),
                ));
            }
        }
        let sum = self.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "qci.weights",
                format!("weights must sum to 1.0, got {sum}"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalLexicons {
    pub wh: BTreeSet<String>,
    pub conjunction: BTreeSet<String>,
    pub comparison: BTreeSet<String>,
    pub sequence: BTreeSet<String>,
}

fn term_set(terms: &[&str]) -> BTreeSet<String> {
    terms.iter().map(|t| (*t).to_owned()).collect()
}

impl Default for SignalLexicons {
    fn default() -> Self {
        Self {
            wh: term_set(&[
                "what", "when", "where", "who", "whom", "whose", "which", "why", "how",
            ]),
            conjunction: term_set(&["and", "or", "but", "while"]),
            comparison: term_set(&["compare", "versus", "better", "difference"]),
            sequence: term_set(&["first", "then", "after", "before", "next"]),
        }
    }
}

impl SignalLexicons {
    pub fn validate(&self) -> Result<()> {
        for (name, set) in [
            ("wh", &self.wh),
            ("conjunction", &self.conjunction),
            ("comparison", &self.comparison),
            ("sequence", &self.sequence),
        ] {
            if set.is_empty() {
                return Err(Error::config(
                    format!("qci.lexicon.{name}"),
                    "lexicon must not be empty",
                ));
            }
            if let Some(bad) = set.iter().find(|t| tokenize(t).tokens != [t.as_str()]) {
                return Err(Error::config(
                    format!("qci.lexicon.{name}"),
                    format!("`{bad}` is not a single normalized token"),
                ));
            }
        }
        Ok(())
    }
}

/// Membership is per token, never substring: "sand" does not fire "and".
pub fn extract_signals(
    tq: &TokenizedQuery,
    lex: &SignalLexicons,
    length_threshold: usize,
) -> SignalVector {
    let hit = |set: &BTreeSet<String>| u8::from(tq.tokens.iter().any(|t| set.contains(t)));
    let length = (tq.token_count() as f64 / length_threshold.max(1) as f64).min(1.0);
    SignalVector {
        wh: hit(&lex.wh),
        conjunction: hit(&lex.conjunction),
        comparison: hit(&lex.comparison),
        sequence: hit(&lex.sequence),
        length,
    }
}

pub fn compute_qci(sv: &SignalVector, w: &QciWeights) -> f64 {
    w.wh * f64::from(sv.wh)
        + w.conjunction * f64::from(sv.conjunction)
        + w.comparison * f64::from(sv.comparison)
        + w.sequence * f64::from(sv.sequence)
        + w.length * sv.length
}
