//! kwf-core: extract knowledge from pseudo-natural-language documents via
//! key-structure matching, refine it through the ore → magma → crystal
//! pipeline, package it as read-only verifiable knowware, operate on it with
//! knowledge middleware, bind it into runnable programs, and serve it from a
//! journaled warehouse.
//!
//! Modules follow the lifecycle:
//!
//! - [`keystructure`]: sentence patterns and key structures (the grammar)
//! - [`pnlu`]: segmentation, matching, knowledge elements, hierarchies
//! - [`pump`]: tag-region scanning and bold-marked extraction
//! - [`crystal`]: magma store, conflict resolution, crystals, queries
//! - [`knowware`]: packaging, manifests, watermarks, verification
//! - [`middleware`]: views, triple transformation, summaries
//! - [`binder`]: mixware objects and knowware-middleware binding
//! - [`server`]: warehouse layers, registry, wire protocol, journal

pub mod binder;
pub mod crystal;
pub mod keystructure;
pub mod knowware;
pub mod middleware;
pub mod pnlu;
pub mod pump;
pub mod server;
pub mod text;

pub use crystal::{
    crystallize, detect_conflicts_in, query_define, query_name, renew, Crystal, Magma,
    MagmaError, Requirement, SubjectFilter,
};
pub use keystructure::{
    check_sequence, compile_key_structure, parse_key_structure_file, parse_pattern,
    render_key_structure_file, spectrum_cmp, KeyStructure, KsError, Layer, SentencePattern,
    SeqCheck, Token,
};
pub use knowware::{
    interface_of, open, package, verify, FailReason, KnowwarePackage, Manifest, PackageError,
    PackageMeta, Verdict, FORMAT_KEL1,
};
pub use middleware::{
    apply_view, from_triples, from_triples_with_key, summarize, to_triples, KnowledgeSource,
    Summary, TransformError, Triple, ViewError, ViewSpec,
};
pub use pnlu::{
    build_hierarchy, extract, match_sentence, match_text, segment, KnowledgeElement, PnluError,
    SemanticHierarchy, Sentence, SentenceMatch, Source,
};
pub use pump::{bold_runs, pump, scan_tags, strip_marks, PumpError, PumpResult, PumpSpec};
pub use server::{Request, Response, Server};
