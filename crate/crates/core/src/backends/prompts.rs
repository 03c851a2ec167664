use std::collections::BTreeMap;
use std::path::Path;

use super::{BackendRole, ChatMessage, MessageRole, RoleInput};
use crate::embedstore::ScoredPassage;
use crate::error::{Error, Result};

/// A role prompt. On disk the system part comes first, then a line holding only
/// `---`, then the user part. `{name}` placeholders are substituted at render time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Self {
        let mut system = Vec::new();
        let mut user = Vec::new();
        let mut in_user = false;
        for line in text.lines() {
            if !in_user && line.trim() == "---" {
                in_user = true;
                continue;
            }
            if in_user {
                user.push(line);
            } else {
                system.push(line);
            }
        }
        if !in_user {
            return Self {
                system: String::new(),
                user: system.join("\n").trim().to_owned(),
            };
        }
        Self {
            system: system.join("\n").trim().to_owned(),
            user: user.join("\n").trim().to_owned(),
        }
    }

    fn fill(template: &str, vars: &[(&str, String)]) -> String {
        vars.iter().fold(template.to_owned(), |acc, (k, v)| {
            acc.replace(&format!("{{{k}}}"), v)
        })
    }

    pub fn render(&self, vars: &[(&str, String)]) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(2);
        if !self.system.is_empty() {
            out.push(ChatMessage {
                role: MessageRole::System,
                content: Self::fill(&self.system, vars),
            });
        }
        out.push(ChatMessage {
            role: MessageRole::User,
            content: Self::fill(&self.user, vars),
        });
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<BackendRole, PromptTemplate>,
}

fn builtin(role: BackendRole) -> &'static str {
    match role {
        BackendRole::Decomposer => include_str!("../../prompts/decomposer.txt"),
        BackendRole::LevelAssessor => include_str!("../../prompts/assessor.txt"),
        BackendRole::Judge => include_str!("../../prompts/judge.txt"),
        BackendRole::Reranker => include_str!("../../prompts/reranker.txt"),
        BackendRole::IntentClassifier => include_str!("../../prompts/classifier.txt"),
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            templates: BackendRole::ALL
                .into_iter()
                .map(|r| (r, PromptTemplate::parse(builtin(r))))
                .collect(),
        }
    }
}

fn numbered(items: &[ScoredPassage]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, c)| format!("[{}] {}", i + 1, c.passage.text))
        .collect::<Vec<_>>()
        .join("\n")
}

impl PromptSet {
    /// Loads `<role>.txt` files from `dir`; roles without a file keep the builtin.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = Self::default();
        for role in BackendRole::ALL {
            let path = dir.join(format!("{}.txt", role.as_str()));
            match std::fs::read_to_string(&path) {
                Ok(text) => {
                    set.templates.insert(role, PromptTemplate::parse(&text));
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(Error::io(path, e)),
            }
        }
        Ok(set)
    }

    pub fn template(&self, role: BackendRole) -> &PromptTemplate {
        &self.templates[&role]
    }

    pub fn render(&self, input: &RoleInput<'_>) -> Vec<ChatMessage> {
        let vars: Vec<(&str, String)> = match *input {
            RoleInput::Decompose { text } => vec![("query", text.to_owned())],
            RoleInput::Assess {
                query,
                snippets,
                mode,
                ..
            } => vec![
                ("query", query.to_owned()),
                ("mode", mode.to_string()),
                (
                    "snippets",
                    snippets
                        .iter()
                        .map(|s| format!("- {s}"))
                        .collect::<Vec<_>>()
                        .join("\n"),
                ),
            ],
            RoleInput::Judge {
                original_query,
                sub_query,
                passage,
                ..
            } => vec![
                ("original_query", original_query.to_owned()),
                ("sub_query", sub_query.to_owned()),
                ("passage", passage.text.clone()),
            ],
            RoleInput::Rerank { query, candidates } => vec![
                ("query", query.to_owned()),
                ("candidates", numbered(candidates)),
            ],
            RoleInput::Classify {
                query,
                evidence,
                catalog,
            } => vec![
                ("query", query.to_owned()),
                ("evidence", numbered(evidence)),
                ("catalog", catalog.join(", ")),
            ],
        };
        self.template(input.role()).render(&vars)
    }
}
