use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::agents::AgentId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub entry_id: String,
    pub author: AgentId,
    /// Plan step index the entry was produced at.
    pub step: usize,
    pub content: String,
    pub timestamp: DateTime<Utc>,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Fields supplied by the caller; the memory assigns the entry id.
#[derive(Debug, Clone)]
pub struct EntryDraft {
    pub author: AgentId,
    pub step: usize,
    pub content: String,
    pub timestamp: DateTime<Utc>,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Session-scoped append-only log of agent outputs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingMemory {
    pub session_id: String,
    entries: Vec<MemoryEntry>,
    closed: bool,
}

impl WorkingMemory {
    pub fn new(session_id: impl Into<String>) -> Self {
        WorkingMemory {
            session_id: session_id.into(),
            entries: Vec::new(),
            closed: false,
        }
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn get(&self, entry_id: &str) -> Option<&MemoryEntry> {
        self.entries.iter().find(|e| e.entry_id == entry_id)
    }

    /// The last `n` entries, oldest first.
    pub fn recent(&self, n: usize) -> &[MemoryEntry] {
        &self.entries[self.entries.len().saturating_sub(n)..]
    }

    pub fn append(&mut self, draft: EntryDraft) -> Result<&MemoryEntry> {
        if self.closed {
            return Err(Error::SessionClosed(self.session_id.clone()));
        }
        if draft.content.trim().is_empty() {
            return Err(Error::InvalidArgument("working-memory entry content is empty".into()));
        }
        if let Some(prev) = self.entries.iter().rev().find(|e| e.author == draft.author) {
            if draft.step < prev.step {
                return Err(Error::InvalidArgument(format!(
                    "{} appended step {} after step {}",
                    draft.author, draft.step, prev.step
                )));
            }
        }
        let entry = MemoryEntry {
            entry_id: format!("m{:04}", self.entries.len() + 1),
            author: draft.author,
            step: draft.step,
            content: draft.content,
            timestamp: draft.timestamp,
            input_tokens: draft.input_tokens,
            output_tokens: draft.output_tokens,
        };
        self.entries.push(entry);
        Ok(self.entries.last().unwrap())
    }

    /// Seals the memory; further appends fail.
    pub fn close(&mut self) {
        self.closed = true;
    }
}
