use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backends::BackendRole;

/// Character-count token heuristic: `floor(chars / 4)`.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() / 4) as u64
}

/// Per-query accumulator shared by every component that touches a backend.
#[derive(Debug, Default)]
pub struct CallLedger {
    calls: [AtomicUsize; BackendRole::ALL.len()],
    prompt_tokens: AtomicU64,
    retrievals: AtomicUsize,
    warnings: Mutex<Vec<String>>,
}

impl CallLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_call(&self, role: BackendRole, prompt_tokens: u64) {
        self.calls[role.index()].fetch_add(1, Ordering::SeqCst);
        self.prompt_tokens
            .fetch_add(prompt_tokens, Ordering::SeqCst);
    }

    pub fn record_retrieval(&self) {
        self.retrievals.fetch_add(1, Ordering::SeqCst);
    }

    pub fn warn(&self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("{message}");
        self.warnings
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(message);
    }

    pub fn calls(&self, role: BackendRole) -> usize {
        self.calls[role.index()].load(Ordering::SeqCst)
    }

    pub fn total_calls(&self) -> usize {
        BackendRole::ALL.iter().map(|r| self.calls(*r)).sum()
    }

    pub fn prompt_tokens(&self) -> u64 {
        self.prompt_tokens.load(Ordering::SeqCst)
    }

    pub fn retrievals(&self) -> usize {
        self.retrievals.load(Ordering::SeqCst)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    pub fn snapshot(&self, latency_ms: f64) -> CostLedger {
        let calls_by_role: BTreeMap<BackendRole, usize> = BackendRole::ALL
            .iter()
            .map(|r| (*r, self.calls(*r)))
            .collect();
        CostLedger {
            total_calls: calls_by_role.values().sum(),
            calls_by_role,
            prompt_tokens: self.prompt_tokens(),
            retrievals: self.retrievals(),
            latency_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub calls_by_role: BTreeMap<BackendRole, usize>,
    pub total_calls: usize,
    pub prompt_tokens: u64,
    /// Vector-store searches issued for the query (not LLM calls).
    #[serde(default)]
    pub retrievals: usize,
    pub latency_ms: f64,
}

impl CostLedger {
    pub fn calls(&self, role: BackendRole) -> usize {
        self.calls_by_role.get(&role).copied().unwrap_or(0)
    }
}
