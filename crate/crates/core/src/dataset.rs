//! Multi-label query files, intent catalogs, and knowledge-base derivation.
//!
//! Both file kinds are JSON Lines. Query records carry `id`, `text`, `intents`
//! and an optional `domain`; catalog entries carry `name`, `description` and
//! `examples`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedstore::Passage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub text: String,
    pub intents: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    intents: Option<Vec<String>>,
    #[serde(default)]
    domain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentCatalogEntry {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub examples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub records: Vec<QueryRecord>,
    pub dropped_unlabeled: usize,
    pub dropped_duplicates: usize,
}

impl IngestReport {
    pub fn mean_intents(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let total: usize = self.records.iter().map(|r| r.intents.len()).sum();
        total as f64 / self.records.len() as f64
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Drops unlabeled records, then records whose trimmed text repeats an earlier one.
pub fn clean(records: Vec<(usize, QueryRecord)>, path: &Path) -> Result<IngestReport> {
    let mut seen_text = HashSet::new();
    let mut seen_id = HashSet::new();
    let mut report = IngestReport {
        records: Vec::new(),
        dropped_unlabeled: 0,
        dropped_duplicates: 0,
    };
    for (line, rec) in records {
        if rec.intents.is_empty() {
            report.dropped_unlabeled += 1;
            continue;
        }
        if !seen_text.insert(rec.text.trim().to_owned()) {
            report.dropped_duplicates += 1;
            continue;
        }
        if !seen_id.insert(rec.id.clone()) {
            return Err(Error::Dataset {
                path: path.to_owned(),
                line,
                message: format!("duplicate query id `{}`", rec.id),
            });
        }
        report.records.push(rec);
    }
    Ok(report)
}

pub fn ingest(path: &Path) -> Result<IngestReport> {
    let mut parsed = Vec::new();
    for (line, text) in read_lines(path)? {
        let bad = |message: String| Error::Dataset {
            path: path.to_owned(),
            line,
            message,
        };
        let raw: RawRecord = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if raw.text.trim().is_empty() {
            return Err(bad(format!("record `{}` has empty text", raw.id)));
        }
        let intents = raw
            .intents
            .unwrap_or_default()
            .into_iter()
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty())
            .collect();
        parsed.push((
            line,
            QueryRecord {
                id: raw.id,
                text: raw.text,
                intents,
                domain: raw.domain,
            },
        ));
    }
    clean(parsed, path)
}

pub fn load_catalog(path: &Path) -> Result<Vec<IntentCatalogEntry>> {
    let mut out: Vec<IntentCatalogEntry> = Vec::new();
    let mut names = HashSet::new();
    for (line, text) in read_lines(path)? {
        let bad = |message: String| Error::Dataset {
            path: path.to_owned(),
            line,
            message,
        };
        let entry: IntentCatalogEntry =
            serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if entry.name.trim().is_empty() {
            return Err(bad("catalog entry has an empty name".into()));
        }
        if !names.insert(entry.name.clone()) {
            return Err(bad(format!("duplicate intent `{}`", entry.name)));
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn passage_for(entry: &IntentCatalogEntry) -> Passage {
    let mut text = format!("{}: {}", entry.name, entry.description);
    if !entry.examples.is_empty() {
        text.push_str(". Examples: ");
        text.push_str(&entry.examples.join("; "));
    }
    Passage::new(format!("intent:{}", entry.name), text).with_labels([entry.name.clone()])
}

/// A catalog derived from labeled records: each intent is described by its
/// name and exemplified by its five shortest queries.
pub fn derive_catalog(records: &[QueryRecord]) -> Vec<IntentCatalogEntry> {
    let mut by_intent: BTreeMap<&str, Vec<&QueryRecord>> = BTreeMap::new();
    for r in records {
        for i in &r.intents {
            by_intent.entry(i).or_default().push(r);
        }
    }
    by_intent
        .into_iter()
        .map(|(name, mut recs)| {
            recs.sort_by(|a, b| {
                a.text
                    .chars()
                    .count()
                    .cmp(&b.text.chars().count())
                    .then_with(|| a.id.cmp(&b.id))
            });
            IntentCatalogEntry {
                name: name.to_owned(),
                description: name.to_owned(),
                examples: recs.iter().take(5).map(|r| r.text.clone()).collect(),
            }
        })
        .collect()
}

/// One passage per intent, from the supplied catalog or one derived from `records`.
pub fn build_kb(records: &[QueryRecord], catalog: Option<&[IntentCatalogEntry]>) -> Vec<Passage> {
    let derived;
    let entries = match catalog {
        Some(c) => c,
        None => {
            derived = derive_catalog(records);
            &derived
        }
    };
    if entries.is_empty() {
        log::warn!("knowledge base is empty: no catalog entries and no labeled records");
    }
    entries.iter().map(passage_for).collect()
}

struct SyntheticIntent {
    name: &'static str,
    domain: &'static str,
    description: &'static str,
    phrases: &'static [&'static str],
}

const SYNTHETIC_INTENTS: &[SyntheticIntent] = &[
    SyntheticIntent {
        name: "check_balance",
        domain: "banking",
        description: "see the current balance of an account",
        phrases: &[
            "check my account balance",
            "what is my account balance",
            "show my balance",
        ],
    },
    SyntheticIntent {
        name: "card_lost",
        domain: "banking",
        description: "report a lost or stolen card and block it",
        phrases: &[
            "my card was stolen",
            "block my lost card",
            "i lost my debit card",
        ],
    },
    SyntheticIntent {
        name: "transfer_money",
        domain: "banking",
        description: "move money between accounts or to another person",
        phrases: &[
            "transfer money to my savings",
            "send money to a friend",
            "how do i make a transfer",
        ],
    },
    SyntheticIntent {
        name: "interest_rates",
        domain: "banking",
        description: "information about savings and loan interest rates",
        phrases: &[
            "what are the current interest rates",
            "show savings interest rates",
            "compare interest rates for savings",
        ],
    },
    SyntheticIntent {
        name: "open_account",
        domain: "banking",
        description: "open a new bank account",
        phrases: &[
            "open a new account",
            "how can i open an account",
            "start a savings account",
        ],
    },
    SyntheticIntent {
        name: "loan_request",
        domain: "banking",
        description: "apply for a personal loan or credit",
        phrases: &[
            "apply for a personal loan",
            "i need a loan",
            "which loans can i get",
        ],
    },
    SyntheticIntent {
        name: "direct_debit",
        domain: "banking",
        description: "set up change or cancel a direct debit",
        phrases: &[
            "cancel a direct debit",
            "set up a direct debit",
            "change my direct debit",
        ],
    },
    SyntheticIntent {
        name: "fees",
        domain: "banking",
        description: "questions about account and card fees",
        phrases: &[
            "what fees do you charge",
            "explain the monthly fee",
            "refund a card fee",
        ],
    },
    SyntheticIntent {
        name: "book_room",
        domain: "hotel",
        description: "reserve a hotel room for given dates",
        phrases: &[
            "book a room for two nights",
            "reserve a double room",
            "i want to book a room",
        ],
    },
    SyntheticIntent {
        name: "cancel_booking",
        domain: "hotel",
        description: "cancel an existing hotel reservation",
        phrases: &[
            "cancel my booking",
            "i need to cancel my reservation",
            "how do i cancel the booking",
        ],
    },
    SyntheticIntent {
        name: "wifi",
        domain: "hotel",
        description: "wifi access password and connectivity problems",
        phrases: &[
            "what is the wifi password",
            "is wifi free",
            "wifi is not working",
        ],
    },
    SyntheticIntent {
        name: "parking",
        domain: "hotel",
        description: "parking availability reservation and price",
        phrases: &[
            "is there parking",
            "reserve a parking spot",
            "how much is parking",
        ],
    },
    SyntheticIntent {
        name: "restaurant",
        domain: "hotel",
        description: "restaurant tables opening times and breakfast",
        phrases: &[
            "book a table at the restaurant",
            "when does the restaurant open",
            "is breakfast included",
        ],
    },
    SyntheticIntent {
        name: "late_checkout",
        domain: "hotel",
        description: "request a later checkout time",
        phrases: &[
            "request a late checkout",
            "can i check out late",
            "extend my checkout time",
        ],
    },
    SyntheticIntent {
        name: "room_service",
        domain: "hotel",
        description: "order food towels or items to the room",
        phrases: &[
            "order room service",
            "send towels to my room",
            "room service menu",
        ],
    },
    SyntheticIntent {
        name: "pool_gym",
        domain: "hotel",
        description: "pool and gym location and opening hours",
        phrases: &["where is the pool", "gym opening hours", "is the pool open"],
    },
];

/// The intent catalog backing [`synthetic_workload`].
pub fn synthetic_catalog() -> Vec<IntentCatalogEntry> {
    SYNTHETIC_INTENTS
        .iter()
        .map(|s| IntentCatalogEntry {
            name: s.name.to_owned(),
            description: s.description.to_owned(),
            examples: s.phrases.iter().map(|p| (*p).to_owned()).collect(),
        })
        .collect()
}

/// Seeded multi-intent workload over [`synthetic_catalog`]: one to three intents
/// from a single domain, joined with conjunction or sequence connectors.
/// Texts are unique, so ingestion drops nothing.
pub fn synthetic_workload(n: usize, seed: u64) -> Vec<QueryRecord> {
    const CONNECTORS: &[&str] = &[
        " and ",
        " and then ",
        " then ",
        " but also ",
        ", after that ",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let width = n.max(1).to_string().len().max(4);
    let mut attempts = 0usize;
    while out.len() < n && attempts < n * 200 + 1000 {
        attempts += 1;
        let domain = if rng.random_bool(0.5) {
            "banking"
        } else {
            "hotel"
        };
        let pool: Vec<&SyntheticIntent> = SYNTHETIC_INTENTS
            .iter()
            .filter(|s| s.domain == domain)
            .collect();
        let k = match rng.random_range(0..100) {
            0..45 => 1,
            45..85 => 2,
            _ => 3,
        };
        let picked: Vec<&&SyntheticIntent> = pool.choose_multiple(&mut rng, k).collect();
        let phrases: Vec<&str> = picked
            .iter()
            .map(|s| *s.phrases.choose(&mut rng).expect("phrases nonempty"))
            .collect();
        let mut text = phrases[0].to_owned();
        for p in &phrases[1..] {
            text.push_str(CONNECTORS.choose(&mut rng).expect("connectors nonempty"));
            text.push_str(p);
        }
        if !seen.insert(text.clone()) {
            continue;
        }
        out.push(QueryRecord {
            id: format!("s{:0width$}", out.len() + 1),
            text,
            intents: picked.iter().map(|s| s.name.to_owned()).collect(),
            domain: Some(domain.to_owned()),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn cleaning_rules() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "q.jsonl",
            r#"{"id":"1","text":"check balance","intents":["balance"]}
{"id":"2","text":"lost card","intents":[]}
{"id":"3","text":"check balance ","intents":["balance"]}
{"id":"4","text":"book room","intents":["book"],"domain":"hotel"}

{"id":"5","text":"wifi","intents":["wifi","x"]}
"#,
        );
        let r = ingest(&p).unwrap();
        assert_eq!(r.records.len(), 3);
        assert_eq!((r.dropped_unlabeled, r.dropped_duplicates), (1, 1));
        assert_eq!(r.records[1].domain.as_deref(), Some("hotel"));
        assert!((r.mean_intents() - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.jsonl", "");
        let r = ingest(&p).unwrap();
        assert!(r.records.is_empty());
        assert_eq!(r.mean_intents(), 0.0);
    }

    #[test]
    fn malformed_line_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "bad.jsonl",
            "{\"id\":\"1\",\"text\":\"a\",\"intents\":[\"x\"]}\n{oops\n",
        );
        let err = ingest(&p).unwrap_err();
        assert!(matches!(err, Error::Dataset { line: 2, .. }), "{err}");
        assert!(err.to_string().contains(":2:"));
    }

    #[test]
    fn ingest_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let recs = synthetic_workload(50, 1);
        let p = dir.path().join("s.jsonl");
        write_jsonl(&p, &recs).unwrap();
        let once = ingest(&p).unwrap();
        assert_eq!(once.records, recs);
        write_jsonl(&p, &once.records).unwrap();
        assert_eq!(ingest(&p).unwrap().records, once.records);
    }

    #[test]
    fn kb_from_catalog() {
        let catalog: Vec<IntentCatalogEntry> = (0..62)
            .map(|i| IntentCatalogEntry {
                name: format!("intent_{i}"),
                description: format!("description {i}"),
                examples: vec![],
            })
            .collect();
        let kb = build_kb(&[], Some(&catalog));
        assert_eq!(kb.len(), 62);
        assert_eq!(kb, build_kb(&[], Some(&catalog)));
        assert!(kb[5].intent_labels.contains("intent_5"));
    }

    #[test]
    fn kb_derived_from_records() {
        assert!(build_kb(&[], None).is_empty());
        let recs = synthetic_workload(200, 4);
        let kb = build_kb(&recs, None);
        let all: BTreeSet<&String> = recs.iter().flat_map(|r| &r.intents).collect();
        assert_eq!(kb.len(), all.len());
        for p in &kb {
            assert_eq!(p.intent_labels.len(), 1);
            let name = p.intent_labels.iter().next().unwrap();
            assert_eq!(p.id, format!("intent:{name}"));
        }
        let cat = derive_catalog(&recs);
        assert!(cat
            .iter()
            .all(|c| c.examples.len() <= 5 && c.description == c.name));
    }

    #[test]
    fn catalog_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        write_jsonl(&p, &synthetic_catalog()).unwrap();
        assert_eq!(load_catalog(&p).unwrap(), synthetic_catalog());
        let dup = write(&dir, "d.jsonl", "{\"name\":\"a\"}\n{\"name\":\"a\"}\n");
        assert!(load_catalog(&dup).is_err());
    }

    #[test]
    fn synthetic_is_seeded() {
        let a = synthetic_workload(100, 9);
        assert_eq!(a, synthetic_workload(100, 9));
        assert_ne!(a, synthetic_workload(100, 10));
        assert_eq!(a.len(), 100);
        let mean = a.iter().map(|r| r.intents.len()).sum::<usize>() as f64 / 100.0;
        println!("synthetic mean intents/query: {mean:.2}");
        assert!((1.0..=3.0).contains(&mean));
    }
}
