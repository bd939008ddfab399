use serde::{Deserialize, Serialize};

use crate::relation::Edge;
use crate::trace::OpId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Satisfied,
    Violated,
    Unknown,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Satisfied => "satisfied",
            Status::Violated => "violated",
            Status::Unknown => "unknown",
        })
    }
}

/// One witness total order. `scope` names whose view it is: a process, a
/// variable, a `process/variable` pair, or a shared order such as `sync`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    pub scope: String,
    pub order: Vec<OpId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Counterexample {
    /// The checked relation is cyclic within `scope`.
    Cycle { scope: String, edges: Vec<Edge> },
    /// Search finished without finding a view for `scope`.
    Exhausted { scope: String, explored: u64 },
    /// A read whose source is dominated by `dominating` in a partial view.
    DominatedRead {
        scope: String,
        read: OpId,
        source: OpId,
        dominating: OpId,
    },
    /// A read ordered before the write it reads from.
    ReadBeforeSource {
        scope: String,
        read: OpId,
        source: OpId,
    },
    /// Every serial-order assignment failed; `last` is why the last one
    /// explored did.
    SerialOrders {
        explored: u64,
        last: Box<Counterexample>,
    },
}

impl Counterexample {
    pub fn scope(&self) -> &str {
        match self {
            Counterexample::Cycle { scope, .. }
            | Counterexample::Exhausted { scope, .. }
            | Counterexample::DominatedRead { scope, .. }
            | Counterexample::ReadBeforeSource { scope, .. } => scope,
            Counterexample::SerialOrders { .. } => "serial orders",
        }
    }
}

/// Result of a check. `witness` is present exactly when satisfied.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<View>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
    /// Search nodes (or enumerated choices) consumed.
    pub budget_spent: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Verdict {
    pub fn satisfied(views: Vec<View>, budget_spent: u64) -> Self {
        Verdict {
            status: Status::Satisfied,
            witness: Some(views),
            counterexample: None,
            budget_spent,
            reason: None,
        }
    }

    pub fn violated(counterexample: Counterexample, budget_spent: u64) -> Self {
        Verdict {
            status: Status::Violated,
            witness: None,
            counterexample: Some(counterexample),
            budget_spent,
            reason: None,
        }
    }

    pub fn unknown(reason: impl Into<String>, budget_spent: u64) -> Self {
        Verdict {
            status: Status::Unknown,
            witness: None,
            counterexample: None,
            budget_spent,
            reason: Some(reason.into()),
        }
    }

    pub fn is_satisfied(&self) -> bool {
        self.status == Status::Satisfied
    }

    pub fn is_violated(&self) -> bool {
        self.status == Status::Violated
    }

    pub fn is_unknown(&self) -> bool {
        self.status == Status::Unknown
    }
}
