//! Decides which shared-memory consistency models an execution trace
//! satisfies.
//!
//! Every model is phrased as the existence of per-process serial views that
//! respect some union of order relations over the trace. The four global
//! properties (process order, data order, write-read-write order, anti
//! order) plus process-data order combine into a lattice whose top is
//! sequential consistency and whose bottom is local consistency.
//! Synchronized models (weak, release, entry, ...) are handled as
//! consistency transitions between labeled operations.
//!
//! ```text
//! trace text -> RawTrace -> Execution -> orders (PO, DO, WO, CR, PDO, SO, AO)
//!     -> view queries -> Verdict (witness views | counterexample | unknown)
//! ```

pub mod check;
pub mod error;
pub mod gen;
pub mod lattice;
pub mod orders;
pub mod relation;
pub mod trace;
pub mod transitions;
pub mod verdict;
pub mod view;

pub use check::{
    check_classical, check_intersection, check_model, check_node, check_processor, classify,
    property_relation, CheckOptions, ClassicalModel, Classification, ModelName,
};
pub use error::{Error, TraceError};
pub use lattice::{Comparison, ModelNode, Property, PropertySet};
pub use relation::{Edge, Provenance, Relation};
pub use trace::{
    parse_trace, validate, Execution, KindPattern, OpId, OpKind, Operation, OperationPattern,
    ProcId, ProcPattern, RawOp, RawTrace, Value, VarId,
};
pub use transitions::{DrfReport, DrfStatus, Labeling, SyncModelKind, Variant};
pub use verdict::{Counterexample, Status, Verdict, View};
