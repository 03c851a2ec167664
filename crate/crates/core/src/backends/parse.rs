use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use super::Verdict;
use crate::qtc::SemanticLevel;

static NUMBERED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\(?\d+\s*[.):\]-]\s*(.*)$").unwrap());
static LEVEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(low|mid|medium|high)\b").unwrap());
static VERDICT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(irrelevant|not\s+relevant|relevant|yes|no)\b").unwrap());
static SCORE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\[?(\d+)\]?\s*(?:[:.)=]|-\s)?\s*(-?\d+(?:\.\d+)?)").unwrap());

fn clean_item(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '*' || c == '`')
        .trim()
        .to_owned()
}

/// Two sub-queries from numbered lines (or, lacking numbering, from exactly two
/// nonempty lines). They must be nonempty and distinct ignoring case.
pub fn parse_decomposition(text: &str) -> Option<(String, String)> {
    let numbered: Vec<String> = text
        .lines()
        .filter_map(|l| NUMBERED.captures(l).map(|c| clean_item(&c[1])))
        .collect();
    let items = if numbered.is_empty() {
        text.lines()
            .map(clean_item)
            .filter(|l| !l.is_empty())
            .collect()
    } else {
        numbered
    };
    match items.as_slice() {
        [a, b] if !a.is_empty() && !b.is_empty() && a.to_lowercase() != b.to_lowercase() => {
            Some((a.clone(), b.clone()))
        }
        _ => None,
    }
}

/// Case-insensitive scan; the earliest level keyword wins.
pub fn parse_level(text: &str) -> Option<SemanticLevel> {
    LEVEL
        .captures(text)
        .and_then(|c| c[1].parse::<SemanticLevel>().ok())
}

pub fn parse_verdict(text: &str) -> Option<Verdict> {
    let cap = VERDICT.captures(text)?;
    let word = cap[1].to_ascii_lowercase();
    Some(if word == "relevant" || word == "yes" {
        Verdict::Relevant
    } else {
        Verdict::Irrelevant
    })
}

/// One score per numbered candidate (1-based), clamped to `[0, 1]`. Returns the
/// scores with 0.5 substituted for missing entries, plus the missing indices.
pub fn parse_rerank_scores(text: &str, n: usize) -> (Vec<f64>, Vec<usize>) {
    let mut scores: Vec<Option<f64>> = vec![None; n];
    for line in text.lines() {
        let Some(c) = SCORE_LINE.captures(line) else {
            continue;
        };
        let (Ok(idx), Ok(score)) = (c[1].parse::<usize>(), c[2].parse::<f64>()) else {
            continue;
        };
        if (1..=n).contains(&idx) && score.is_finite() && scores[idx - 1].is_none() {
            scores[idx - 1] = Some(score.clamp(0.0, 1.0));
        }
    }
    let missing = (0..n)
        .filter(|i| scores[*i].is_none())
        .map(|i| i + 1)
        .collect();
    (
        scores.into_iter().map(|s| s.unwrap_or(0.5)).collect(),
        missing,
    )
}

/// Labels separated by commas or newlines, matched against the catalog
/// case-insensitively. Returns kept labels (catalog spelling) and dropped items.
pub fn parse_intents(text: &str, catalog: &[String]) -> (BTreeSet<String>, Vec<String>) {
    let mut kept = BTreeSet::new();
    let mut dropped = Vec::new();
    for raw in text.split(['\n', ',', ';']) {
        let item = NUMBERED
            .captures(raw)
            .map(|c| c[1].to_owned())
            .unwrap_or_else(|| raw.to_owned());
        let item = clean_item(item.trim_start_matches(['-', '•', ' ']));
        let item = item
            .strip_prefix("Intents:")
            .or_else(|| item.strip_prefix("intents:"))
            .map(clean_item)
            .unwrap_or(item);
        if item.is_empty() || item.eq_ignore_ascii_case("none") {
            continue;
        }
        match catalog.iter().find(|c| c.eq_ignore_ascii_case(&item)) {
            Some(c) => {
                kept.insert(c.clone());
            }
            None => dropped.push(item),
        }
    }
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_formats() {
        assert_eq!(
            parse_decomposition("1. compare rates\n2. recommend an option"),
            Some(("compare rates".into(), "recommend an option".into()))
        );
        assert_eq!(
            parse_decomposition("Sub-queries:\n1) \"a b\"\n2) c d\n"),
            Some(("a b".into(), "c d".into()))
        );
        assert_eq!(
            parse_decomposition("first part\nsecond part"),
            Some(("first part".into(), "second part".into()))
        );
        assert_eq!(parse_decomposition("1. only one"), None);
        assert_eq!(parse_decomposition("1. x\n2. X"), None);
        assert_eq!(parse_decomposition("1. a\n2. b\n3. c"), None);
        assert_eq!(parse_decomposition(""), None);
    }

    #[test]
    fn level_scan() {
        assert_eq!(parse_level("Complexity: HIGH"), Some(SemanticLevel::High));
        assert_eq!(parse_level("medium-ish"), Some(SemanticLevel::Mid));
        assert_eq!(parse_level("low, maybe high"), Some(SemanticLevel::Low));
        assert_eq!(parse_level("highway"), None);
        assert_eq!(parse_level(""), None);
    }

    #[test]
    fn verdict_scan() {
        assert_eq!(parse_verdict("Relevant."), Some(Verdict::Relevant));
        assert_eq!(parse_verdict("IRRELEVANT"), Some(Verdict::Irrelevant));
        assert_eq!(
            parse_verdict("This is not relevant"),
            Some(Verdict::Irrelevant)
        );
        assert_eq!(parse_verdict("yes"), Some(Verdict::Relevant));
        assert_eq!(parse_verdict("???"), None);
    }

    #[test]
    fn rerank_missing_candidate_gets_half() {
        let (scores, missing) = parse_rerank_scores("1: 0.8\n2: 0.1\n4: 0.3", 4);
        assert_eq!(scores, vec![0.8, 0.1, 0.5, 0.3]);
        assert_eq!(missing, vec![3]);
        let (scores, _) = parse_rerank_scores("[1] 0.25\n[2] -3", 2);
        assert_eq!(scores, vec![0.25, 0.0]);
        let (scores, missing) = parse_rerank_scores("", 0);
        assert!(scores.is_empty() && missing.is_empty());
    }

    #[test]
    fn intents_closed_over_catalog() {
        let catalog: Vec<String> = ["balance", "card_lost"].map(String::from).to_vec();
        let (kept, dropped) = parse_intents("Intents: Balance, unicorn\n- card_lost", &catalog);
        assert_eq!(kept.len(), 2);
        assert!(kept.contains("balance"));
        assert_eq!(dropped, vec!["unicorn".to_string()]);
        let (kept, dropped) = parse_intents("none", &catalog);
        assert!(kept.is_empty() && dropped.is_empty());
    }
}
