//! Dual memory: the session-scoped working memory and the persistent
//! long-term store, plus query generation and similarity retrieval.

mod embed;
mod retrieval;
mod store;
mod working;

pub use embed::{cosine, Embedder, EmbedderConfig, Embedding, HashEmbedder, HttpEmbedder};
pub use retrieval::{
    generate_query, retrieve_best_record, retrieve_exemplar_cases, CaseHit, Query, RecordHit,
};
pub use store::{
    ingest_corpus, load_long_term, BasicInfo, ClinicalRecord, ExemplarCase, IngestReport, LabItem,
    LabPanel, LabValue, LongTermMemory, PatientProfile,
};
pub use working::{EntryDraft, MemoryEntry, WorkingMemory};
