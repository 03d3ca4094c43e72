//! Evidence-grounded agentic literature retrieval over a verified local
//! corpus.
//!
//! A search runs in rounds: a navigator plans a retrieval strategy and a
//! checklist of requirements, retrieval channels build a candidate pool from
//! the corpus, librarian workers locate evidence and score each candidate
//! against the checklist, candidates are ranked, and the navigator reflects on
//! the ranking to refine the next round. Only corpus papers can ever be
//! returned. [`evalbench`] scores ranked lists against benchmark tasks.

pub mod backend;
pub mod corpus;
pub mod encoder;
pub mod evalbench;
pub mod text;
pub mod channels;
pub mod config;
pub mod orchestrator;
pub mod remote;
pub mod rerank;
pub mod verify;
