//! Precision and recall scoring for long-form model answers against
//! evidence-derived reference facts. See the guide in `book/` for a tour.

pub mod gateway;
pub mod jsonl;
pub mod metrics;
pub mod model;
pub mod parse;
pub mod prompts;
pub mod reference;
pub mod retrieval;
pub mod claims;
pub mod judge;
pub mod report;
pub mod runner;

// Keeps the code samples in the guide compiling and passing.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
    #[doc = include_str!("../../../book/src/reference.md")]
    mod reference {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/backends.md")]
    mod backends {}
    #[doc = include_str!("../../../book/src/reports.md")]
    mod reports {}
}
