//! Ontology knowledge-graph retrieval and LLM-assisted biomedical code mapping.
//!
//! The crate is organised along the pipeline:
//!
//! * [`ingest`] parses ICD-9-CM tables, ICD-10-CM XML and GEM crosswalk files
//!   and turns them into RDF quads under a fixed vocabulary.
//! * [`store`] holds quads in named graphs and answers a SPARQL SELECT/ASK
//!   subset, with schema introspection for query validation.
//! * [`llm`] is a small chat-completion gateway with an HTTP provider and a
//!   scripted mock.
//! * [`nl2sparql`] turns questions into validated queries.
//! * [`reasoner`] grades code pairs into mapping levels A/B/C.
//! * [`eval`] computes accuracy, per-level precision and confusion matrices.
//! * [`review`] is the expert review model (candidates, decision log, export).
//! * [`pipeline`] wires retrieval and reasoning together for one question.

pub mod codes;
pub mod eval;
pub mod ingest;
pub mod llm;
pub mod nl2sparql;
pub mod pipeline;
pub mod reasoner;
pub mod review;
pub mod store;
pub mod template;
pub mod vocab;

pub use reasoner::MappingLevel;
pub use store::{Quad, Store, Term};
