//! Multi-robot task planning: a PDDL front-end, grounding, delete-relaxation
//! heuristic search, plan validation, language-model driven decomposition
//! and allocation, sub-plan scheduling, and benchmark metrics.

pub mod pddl;
pub mod ground;
pub mod search;
pub mod validate;
pub mod decompose;
pub mod combine;
pub mod bench;
pub mod pipeline;
